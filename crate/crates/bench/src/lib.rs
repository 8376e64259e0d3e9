//! Benchmark fixtures shared by the criterion targets.

use qmoe::CircuitSpec;

/// A layered circuit with deterministic parameters and inputs.
pub fn fixture(n_qubits: usize, n_layers: usize) -> (CircuitSpec, Vec<f64>, Vec<f64>) {
    let spec = CircuitSpec::layered(n_qubits, n_layers).expect("valid circuit");
    let params = (0..spec.n_params()).map(|i| 0.1 + 0.37 * i as f64).collect();
    let x = (0..n_qubits).map(|j| 0.3 + 0.5 * j as f64).collect();
    (spec, params, x)
}

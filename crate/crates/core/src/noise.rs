//! Density-matrix simulation of the routing circuit under per-gate
//! depolarizing noise. Inference only: gradients are defined on the noiseless
//! statevector path.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{QmoeError, Result};
use crate::quantum::{angle_embed, qubit_mask, ry_matrix, CircuitSpec, Gate, QuantumState};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

type Mat2 = [[Complex64; 2]; 2];

const PAULI_X: Mat2 = [[ZERO, ONE], [ONE, ZERO]];
const PAULI_Y: Mat2 = [[ZERO, Complex64::new(0.0, -1.0)], [I, ZERO]];
const PAULI_Z: Mat2 = [[ONE, ZERO], [ZERO, Complex64::new(-1.0, 0.0)]];

/// Row-major 2^n x 2^n density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    n_qubits: usize,
    entries: Vec<Complex64>,
}

impl DensityMatrix {
    /// |psi><psi|
    pub fn from_state(state: &QuantumState) -> Self {
        let amps = state.amplitudes();
        let entries = amps
            .iter()
            .flat_map(|r| amps.iter().map(move |c| r * c.conj()))
            .collect();
        Self {
            n_qubits: state.n_qubits(),
            entries,
        }
    }

    /// Wraps raw row-major entries without checking the density-matrix
    /// properties; see [`DensityMatrix::hermiticity_error`] and friends.
    pub fn from_entries(n_qubits: usize, entries: Vec<Complex64>) -> Result<Self> {
        let dim = 1usize << n_qubits;
        if entries.len() != dim * dim {
            return Err(QmoeError::DimensionMismatch {
                expected: dim * dim,
                actual: entries.len(),
                context: "density matrix entries",
            });
        }
        Ok(Self { n_qubits, entries })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.entries[row * self.dim() + col]
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim()).map(|i| self.get(i, i)).sum()
    }

    /// tr(rho^2)
    pub fn purity(&self) -> f64 {
        // tr(rho^2) = sum_ij rho_ij rho_ji = sum_ij |rho_ij|^2 for Hermitian rho.
        let d = self.dim();
        let mut acc = ZERO;
        for i in 0..d {
            for j in 0..d {
                acc += self.get(i, j) * self.get(j, i);
            }
        }
        acc.re
    }

    /// max |rho_ij - conj(rho_ji)|
    pub fn hermiticity_error(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in i..d {
                worst = worst.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        worst
    }

    /// Diagonal in the computational basis.
    pub fn probabilities(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.get(i, i).re).collect()
    }

    /// rho -> M rho M^dagger for a single-qubit matrix M on `qubit`.
    fn conjugate_1q(&mut self, qubit: usize, m: &Mat2) {
        let d = self.dim();
        let mask = qubit_mask(self.n_qubits, qubit);
        // Left multiply: mix rows i and i|mask in every column.
        for i in (0..d).filter(|i| i & mask == 0) {
            let j = i | mask;
            for c in 0..d {
                let (a0, a1) = (self.entries[i * d + c], self.entries[j * d + c]);
                self.entries[i * d + c] = m[0][0] * a0 + m[0][1] * a1;
                self.entries[j * d + c] = m[1][0] * a0 + m[1][1] * a1;
            }
        }
        // Right multiply by M^dagger: mix columns.
        for r in 0..d {
            let row = &mut self.entries[r * d..(r + 1) * d];
            for i in (0..d).filter(|i| i & mask == 0) {
                let j = i | mask;
                let (a0, a1) = (row[i], row[j]);
                row[i] = a0 * m[0][0].conj() + a1 * m[0][1].conj();
                row[j] = a0 * m[1][0].conj() + a1 * m[1][1].conj();
            }
        }
    }

    fn conjugate_cz(&mut self, q_a: usize, q_b: usize) {
        let d = self.dim();
        let both = qubit_mask(self.n_qubits, q_a) | qubit_mask(self.n_qubits, q_b);
        let sign = |i: usize| if i & both == both { -1.0 } else { 1.0 };
        for r in 0..d {
            for c in 0..d {
                self.entries[r * d + c] *= sign(r) * sign(c);
            }
        }
    }

    /// Single-qubit depolarizing channel
    /// rho -> (1 - eps) rho + (eps / 3)(X rho X + Y rho Y + Z rho Z).
    pub fn depolarize(&mut self, qubit: usize, epsilon: f64) -> Result<()> {
        check_epsilon(epsilon)?;
        self.check_qubit(qubit)?;
        if epsilon == 0.0 {
            return Ok(());
        }
        let mut mixed = vec![ZERO; self.entries.len()];
        for pauli in [&PAULI_X, &PAULI_Y, &PAULI_Z] {
            let mut term = self.clone();
            term.conjugate_1q(qubit, pauli);
            for (m, t) in mixed.iter_mut().zip(&term.entries) {
                *m += t;
            }
        }
        for (e, m) in self.entries.iter_mut().zip(&mixed) {
            *e = *e * (1.0 - epsilon) + m * (epsilon / 3.0);
        }
        Ok(())
    }

    fn check_qubit(&self, qubit: usize) -> Result<()> {
        if qubit >= self.n_qubits {
            return Err(QmoeError::QubitOutOfRange {
                qubit,
                n_qubits: self.n_qubits,
            });
        }
        Ok(())
    }
}

/// A concrete unitary to conjugate a density matrix by.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UnitaryGate {
    Identity { qubit: usize },
    Ry { qubit: usize, theta: f64 },
    Cz { q_a: usize, q_b: usize },
}

impl UnitaryGate {
    fn touched(&self) -> Vec<usize> {
        match *self {
            UnitaryGate::Identity { qubit } | UnitaryGate::Ry { qubit, .. } => vec![qubit],
            UnitaryGate::Cz { q_a, q_b } => vec![q_a, q_b],
        }
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(QmoeError::InvalidArgument(format!(
            "depolarizing rate must lie in [0, 1], got {epsilon}"
        )));
    }
    Ok(())
}

pub fn to_density(state: &QuantumState) -> DensityMatrix {
    DensityMatrix::from_state(state)
}

/// U rho U^dagger followed by a depolarizing channel on every qubit the gate
/// touches.
pub fn apply_gate_noisy(rho: &DensityMatrix, gate: UnitaryGate, epsilon: f64) -> Result<DensityMatrix> {
    check_epsilon(epsilon)?;
    let mut out = rho.clone();
    for q in gate.touched() {
        out.check_qubit(q)?;
    }
    match gate {
        UnitaryGate::Identity { .. } => {}
        UnitaryGate::Ry { qubit, theta } => {
            let m = ry_matrix(theta);
            let mc = m.map(|row| row.map(|v| Complex64::new(v, 0.0)));
            out.conjugate_1q(qubit, &mc);
        }
        UnitaryGate::Cz { q_a, q_b } => {
            if q_a == q_b {
                return Err(QmoeError::SameQubit(q_a));
            }
            out.conjugate_cz(q_a, q_b);
        }
    }
    for q in gate.touched() {
        out.depolarize(q, epsilon)?;
    }
    Ok(out)
}

/// Where depolarizing noise is inserted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseOptions {
    /// Also depolarize after each embedding rotation.
    #[serde(default)]
    pub noisy_embedding: bool,
}

/// Final density matrix of the routing circuit with noise after every
/// variational gate (and optionally after the embedding rotations).
pub fn run_circuit_density(
    spec: &CircuitSpec,
    params: &[f64],
    x: &[f64],
    epsilon: f64,
    options: NoiseOptions,
) -> Result<DensityMatrix> {
    check_epsilon(epsilon)?;
    spec.check_inputs(params, x)?;
    let n = spec.n_qubits();
    let mut rho = if options.noisy_embedding {
        to_density(&QuantumState::zero(n)?)
    } else {
        to_density(&angle_embed(x, n)?)
    };
    for &gate in spec.gates() {
        let unitary = match gate {
            Gate::AngleEmbed { feature } => {
                if !options.noisy_embedding {
                    continue;
                }
                UnitaryGate::Ry {
                    qubit: feature,
                    theta: x[feature],
                }
            }
            Gate::Ry { qubit, param } => UnitaryGate::Ry {
                qubit,
                theta: params[param],
            },
            Gate::Cz { control, target } => UnitaryGate::Cz {
                q_a: control,
                q_b: target,
            },
        };
        rho = apply_gate_noisy(&rho, unitary, epsilon)?;
    }
    Ok(rho)
}

/// Outcome probabilities of the noisy circuit.
pub fn run_circuit_noisy(
    spec: &CircuitSpec,
    params: &[f64],
    x: &[f64],
    epsilon: f64,
    options: NoiseOptions,
) -> Result<Vec<f64>> {
    let probs = run_circuit_density(spec, params, x, epsilon, options)?.probabilities();
    // Clamp rounding-level negatives so downstream code sees a simplex.
    let mut probs: Vec<f64> = probs.into_iter().map(|p| p.max(0.0)).collect();
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    Ok(probs)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::quantum::{measure_probabilities, run_circuit};

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn pure_state_outer_products() {
        let rho = to_density(&QuantumState::zero(1).unwrap());
        assert_eq!(rho.entries(), &[c(1.0), ZERO, ZERO, ZERO]);

        let plus = QuantumState::from_amplitudes(1, vec![c(FRAC_1_SQRT_2), c(FRAC_1_SQRT_2)]).unwrap();
        for e in to_density(&plus).entries() {
            assert_abs_diff_eq!(e.re, 0.5, epsilon = 1e-15);
        }
        let s = angle_embed(&[0.3, 1.2, 2.9], 3).unwrap();
        assert_abs_diff_eq!(to_density(&s).purity(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_noise_is_plain_conjugation() {
        let rho = to_density(&angle_embed(&[0.7, 2.1], 2).unwrap());
        let noisy = apply_gate_noisy(&rho, UnitaryGate::Ry { qubit: 1, theta: 0.9 }, 0.0).unwrap();
        let mut s = angle_embed(&[0.7, 2.1], 2).unwrap();
        s.apply_ry(1, 0.9).unwrap();
        let exact = to_density(&s);
        for (a, b) in noisy.entries().iter().zip(exact.entries()) {
            assert!((a - b).norm() <= 1e-12);
        }
    }

    #[test]
    fn three_quarter_depolarizing_is_maximally_mixed() {
        let rho = to_density(&QuantumState::zero(1).unwrap());
        let out = apply_gate_noisy(&rho, UnitaryGate::Identity { qubit: 0 }, 0.75).unwrap();
        let expected = [c(0.5), ZERO, ZERO, c(0.5)];
        for (a, b) in out.entries().iter().zip(&expected) {
            assert!((a - b).norm() <= 1e-12);
        }
    }

    #[test]
    fn epsilon_range_checked() {
        let rho = to_density(&QuantumState::zero(1).unwrap());
        assert!(apply_gate_noisy(&rho, UnitaryGate::Identity { qubit: 0 }, -0.1).is_err());
        assert!(apply_gate_noisy(&rho, UnitaryGate::Identity { qubit: 0 }, 1.5).is_err());
        assert!(apply_gate_noisy(&rho, UnitaryGate::Identity { qubit: 1 }, 0.1).is_err());
    }

    fn random_mixed(rng: &mut ChaCha8Rng, n: usize) -> DensityMatrix {
        // Convex mixture of random pure states.
        let dim = 1 << n;
        let mut acc = vec![ZERO; dim * dim];
        let weights: Vec<f64> = (0..3).map(|_| rng.random_range(0.1..1.0)).collect();
        let total: f64 = weights.iter().sum();
        for w in weights {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..PI)).collect();
            let spec = CircuitSpec::layered(n, 2).unwrap();
            let theta: Vec<f64> = (0..spec.n_params()).map(|_| rng.random_range(-PI..PI)).collect();
            let rho = to_density(&run_circuit(&spec, &theta, &x).unwrap());
            for (a, e) in acc.iter_mut().zip(rho.entries()) {
                *a += e * (w / total);
            }
        }
        DensityMatrix::from_entries(n, acc).unwrap()
    }

    #[test]
    fn channel_preserves_trace_and_hermiticity() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let rho = random_mixed(&mut rng, 2);
            let eps = rng.random_range(0.0..1.0);
            let gate = UnitaryGate::Cz { q_a: 0, q_b: 1 };
            let out = apply_gate_noisy(&rho, gate, eps).unwrap();
            assert!((out.trace() - c(1.0)).norm() <= 1e-12);
            assert!(out.hermiticity_error() <= 1e-12);
        }
    }

    #[test]
    fn channel_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let rho = random_mixed(&mut rng, 1);
            let eps = rng.random_range(0.0..0.75);
            let mut twice = rho.clone();
            twice.depolarize(0, eps).unwrap();
            twice.depolarize(0, eps).unwrap();
            let mut once = rho.clone();
            once.depolarize(0, eps * (2.0 - 4.0 * eps / 3.0)).unwrap();
            for (a, b) in twice.entries().iter().zip(once.entries()) {
                assert!((a - b).norm() <= 1e-12);
            }
        }
    }

    #[test]
    fn noisy_circuit_at_zero_matches_statevector() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..20 {
            let n = rng.random_range(1..=3);
            let l = rng.random_range(0..=4);
            let spec = CircuitSpec::layered(n, l).unwrap();
            let theta: Vec<f64> = (0..spec.n_params()).map(|_| rng.random_range(-PI..PI)).collect();
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..PI)).collect();
            let noisy = run_circuit_noisy(&spec, &theta, &x, 0.0, NoiseOptions::default()).unwrap();
            let exact = measure_probabilities(&run_circuit(&spec, &theta, &x).unwrap());
            for (a, b) in noisy.iter().zip(&exact) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-10);
            }
            let with_embed = NoiseOptions { noisy_embedding: true };
            let noisy = run_circuit_noisy(&spec, &theta, &x, 0.0, with_embed).unwrap();
            for (a, b) in noisy.iter().zip(&exact) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn one_gate_circuit_fully_depolarized() {
        let spec = CircuitSpec::layered(1, 1).unwrap();
        let p = run_circuit_noisy(&spec, &[0.4], &[1.3], 0.75, NoiseOptions::default()).unwrap();
        assert_abs_diff_eq!(p[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(p[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn heavy_noise_drives_towards_uniform() {
        let spec = CircuitSpec::layered(2, 3).unwrap();
        let theta = [0.3, -1.0, 2.0, 0.5, 0.1, 1.7];
        let p = run_circuit_noisy(&spec, &theta, &[0.2, 2.5], 1.0, NoiseOptions::default()).unwrap();
        for v in p {
            assert_abs_diff_eq!(v, 0.25, epsilon = 1e-3);
        }
    }

    #[test]
    fn purity_non_increasing_in_noise() {
        let spec = CircuitSpec::layered(3, 3).unwrap();
        let theta: Vec<f64> = (0..9).map(|i| 0.37 * i as f64 - 1.0).collect();
        let x = [0.4, 1.9, 2.8];
        let mut last = f64::INFINITY;
        for k in 0..=5 {
            let eps = 0.01 * k as f64;
            let rho = run_circuit_density(&spec, &theta, &x, eps, NoiseOptions::default()).unwrap();
            let purity = rho.purity();
            assert!(purity <= last + 1e-12, "purity rose at eps={eps}");
            last = purity;
        }
    }
}

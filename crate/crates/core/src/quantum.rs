//! Dense statevector simulation of the routing circuit.
//!
//! Basis index convention: qubit 0 is the most significant bit, so for two
//! qubits the basis order is |00>, |01>, |10>, |11> with the left digit being
//! qubit 0.

use std::ops::Deref;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{QmoeError, Result};

/// Largest register the dense simulator accepts.
pub const MAX_QUBITS: usize = 20;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    n_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl QuantumState {
    /// |0...0> on `n_qubits` qubits.
    pub fn zero(n_qubits: usize) -> Result<Self> {
        check_register(n_qubits)?;
        let mut amplitudes = vec![ZERO; 1 << n_qubits];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        Ok(Self { n_qubits, amplitudes })
    }

    /// Wraps an amplitude vector. The vector must have length `2^n_qubits`
    /// and unit norm (within 1e-10).
    pub fn from_amplitudes(n_qubits: usize, amplitudes: Vec<Complex64>) -> Result<Self> {
        check_register(n_qubits)?;
        if amplitudes.len() != 1 << n_qubits {
            return Err(QmoeError::DimensionMismatch {
                expected: 1 << n_qubits,
                actual: amplitudes.len(),
                context: "amplitude vector length",
            });
        }
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(QmoeError::InvalidArgument(format!(
                "state is not normalized (squared norm {norm})"
            )));
        }
        Ok(Self { n_qubits, amplitudes })
    }

    /// Builds a computational basis state |index>.
    pub fn basis(n_qubits: usize, index: usize) -> Result<Self> {
        check_register(n_qubits)?;
        if index >= 1 << n_qubits {
            return Err(QmoeError::InvalidArgument(format!(
                "basis index {index} out of range for {n_qubits} qubits"
            )));
        }
        let mut amplitudes = vec![ZERO; 1 << n_qubits];
        amplitudes[index] = Complex64::new(1.0, 0.0);
        Ok(Self { n_qubits, amplitudes })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// <self|other>
    pub fn inner(&self, other: &QuantumState) -> Result<Complex64> {
        if self.n_qubits != other.n_qubits {
            return Err(QmoeError::DimensionMismatch {
                expected: self.n_qubits,
                actual: other.n_qubits,
                context: "inner product register size",
            });
        }
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// Applies RY(theta) = [[cos(t/2), -sin(t/2)], [sin(t/2), cos(t/2)]] to `qubit`.
    pub fn apply_ry(&mut self, qubit: usize, theta: f64) -> Result<()> {
        self.check_qubit(qubit)?;
        apply_real_1q(&mut self.amplitudes, self.n_qubits, qubit, ry_matrix(theta));
        Ok(())
    }

    /// Negates every amplitude whose basis index has both qubits set.
    pub fn apply_cz(&mut self, q_a: usize, q_b: usize) -> Result<()> {
        self.check_qubit(q_a)?;
        self.check_qubit(q_b)?;
        if q_a == q_b {
            return Err(QmoeError::SameQubit(q_a));
        }
        apply_cz_raw(&mut self.amplitudes, self.n_qubits, q_a, q_b);
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

    pub(crate) fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }
}

fn check_register(n_qubits: usize) -> Result<()> {
    if n_qubits == 0 || n_qubits > MAX_QUBITS {
        return Err(QmoeError::InvalidArgument(format!(
            "register size must be in 1..={MAX_QUBITS}, got {n_qubits}"
        )));
    }
    Ok(())
}

/// Bit mask selecting `qubit` in a basis index (qubit 0 is the MSB).
#[inline]
pub(crate) fn qubit_mask(n_qubits: usize, qubit: usize) -> usize {
    1 << (n_qubits - 1 - qubit)
}

pub(crate) fn ry_matrix(theta: f64) -> [[f64; 2]; 2] {
    let (s, c) = (theta / 2.0).sin_cos();
    [[c, -s], [s, c]]
}

/// d RY(theta) / d theta
pub(crate) fn ry_derivative_matrix(theta: f64) -> [[f64; 2]; 2] {
    let (s, c) = (theta / 2.0).sin_cos();
    [[-0.5 * s, -0.5 * c], [0.5 * c, -0.5 * s]]
}

pub(crate) fn apply_real_1q(amps: &mut [Complex64], n_qubits: usize, qubit: usize, m: [[f64; 2]; 2]) {
    let mask = qubit_mask(n_qubits, qubit);
    for i in 0..amps.len() {
        if i & mask == 0 {
            let j = i | mask;
            let (a0, a1) = (amps[i], amps[j]);
            amps[i] = a0 * m[0][0] + a1 * m[0][1];
            amps[j] = a0 * m[1][0] + a1 * m[1][1];
        }
    }
}

pub(crate) fn apply_cz_raw(amps: &mut [Complex64], n_qubits: usize, q_a: usize, q_b: usize) {
    let both = qubit_mask(n_qubits, q_a) | qubit_mask(n_qubits, q_b);
    for (i, a) in amps.iter_mut().enumerate() {
        if i & both == both {
            *a = -*a;
        }
    }
}

/// Product state  ⊗_i (cos(x_i/2)|0> + sin(x_i/2)|1>).
pub fn angle_embed(x: &[f64], n_qubits: usize) -> Result<QuantumState> {
    check_register(n_qubits)?;
    if x.len() != n_qubits {
        return Err(QmoeError::DimensionMismatch {
            expected: n_qubits,
            actual: x.len(),
            context: "feature vector length vs qubit count",
        });
    }
    let mut amplitudes = vec![Complex64::new(1.0, 0.0)];
    for &xi in x {
        let (s, c) = (xi / 2.0).sin_cos();
        amplitudes = amplitudes.iter().flat_map(|&a| [a * c, a * s]).collect();
    }
    Ok(QuantumState { n_qubits, amplitudes })
}

/// One entry of a circuit's gate plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "gate", rename_all = "snake_case")]
pub enum Gate {
    /// RY by feature `feature` on qubit `feature`.
    AngleEmbed {
        feature: usize,
    },
    /// RY by trainable parameter `param` on `qubit`.
    Ry {
        qubit: usize,
        param: usize,
    },
    Cz {
        control: usize,
        target: usize,
    },
}

impl Gate {
    pub fn is_variational(&self) -> bool {
        !matches!(self, Gate::AngleEmbed { .. })
    }
}

/// Layout of the routing circuit: one embedding stage followed by `n_layers`
/// blocks of RY on every qubit and a chain of adjacent CZ gates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CircuitSpec {
    n_qubits: usize,
    n_layers: usize,
    gates: Vec<Gate>,
}

impl CircuitSpec {
    /// The standard layered ansatz. Parameter `l * n + j` drives the RY on
    /// qubit `j` in layer `l`; CZ pairs run (0,1), (1,2), ... within a layer.
    pub fn layered(n_qubits: usize, n_layers: usize) -> Result<Self> {
        check_register(n_qubits)?;
        let mut gates: Vec<Gate> = (0..n_qubits).map(|feature| Gate::AngleEmbed { feature }).collect();
        for layer in 0..n_layers {
            for qubit in 0..n_qubits {
                gates.push(Gate::Ry {
                    qubit,
                    param: layer * n_qubits + qubit,
                });
            }
            for control in 0..n_qubits.saturating_sub(1) {
                gates.push(Gate::Cz {
                    control,
                    target: control + 1,
                });
            }
        }
        Ok(Self {
            n_qubits,
            n_layers,
            gates,
        })
    }

    /// Validates an explicit gate plan against the layout invariants.
    pub fn from_gates(n_qubits: usize, n_layers: usize, gates: Vec<Gate>) -> Result<Self> {
        let spec = Self {
            n_qubits,
            n_layers,
            gates,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        check_register(self.n_qubits)?;
        let bad = |msg: String| Err(QmoeError::InvalidCircuit(msg));
        let n_params = self.n_params();
        let mut param_seen = vec![false; n_params];
        let mut embedded = vec![false; self.n_qubits];
        let mut variational_started = false;
        for (pos, gate) in self.gates.iter().enumerate() {
            match *gate {
                Gate::AngleEmbed { feature } => {
                    if variational_started {
                        return bad(format!("embedding gate at position {pos} follows variational gates"));
                    }
                    if feature >= self.n_qubits {
                        return bad(format!("embedding feature {feature} out of range"));
                    }
                    if std::mem::replace(&mut embedded[feature], true) {
                        return bad(format!("feature {feature} embedded twice"));
                    }
                }
                Gate::Ry { qubit, param } => {
                    variational_started = true;
                    if qubit >= self.n_qubits {
                        return bad(format!("RY qubit {qubit} out of range"));
                    }
                    if param >= n_params {
                        return bad(format!("parameter index {param} out of range 0..{n_params}"));
                    }
                    if std::mem::replace(&mut param_seen[param], true) {
                        return bad(format!("parameter index {param} used twice"));
                    }
                }
                Gate::Cz { control, target } => {
                    variational_started = true;
                    if control >= self.n_qubits || target >= self.n_qubits {
                        return bad(format!("CZ ({control},{target}) out of range"));
                    }
                    if control.abs_diff(target) != 1 {
                        return bad(format!("CZ ({control},{target}) is not between adjacent qubits"));
                    }
                }
            }
        }
        if let Some(q) = embedded.iter().position(|e| !e) {
            return bad(format!("feature {q} is never embedded"));
        }
        if let Some(p) = param_seen.iter().position(|s| !s) {
            return bad(format!("parameter index {p} is never used"));
        }
        Ok(())
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn n_layers(&self) -> usize {
        self.n_layers
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    /// P = n_layers * n_qubits.
    pub fn n_params(&self) -> usize {
        self.n_layers * self.n_qubits
    }

    pub(crate) fn check_inputs(&self, params: &[f64], x: &[f64]) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(QmoeError::DimensionMismatch {
                expected: self.n_params(),
                actual: params.len(),
                context: "parameter vector length",
            });
        }
        if x.len() != self.n_qubits {
            return Err(QmoeError::DimensionMismatch {
                expected: self.n_qubits,
                actual: x.len(),
                context: "feature vector length vs qubit count",
            });
        }
        Ok(())
    }
}

/// Rotation angles for the variational RY gates, in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }
}

impl Deref for ParamVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Counts simulator work so gradient backends can be compared by cost.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExecutionTally {
    /// Full forward executions of the circuit from |0...0>.
    pub circuit_runs: u64,
    /// Single gate applications to a statevector (forward, inverse or derivative).
    pub gate_applications: u64,
}

pub(crate) fn apply_gate_raw(
    amps: &mut [Complex64],
    n_qubits: usize,
    gate: Gate,
    params: &[f64],
    x: &[f64],
    inverse: bool,
) {
    match gate {
        Gate::AngleEmbed { feature } => {
            let angle = if inverse { -x[feature] } else { x[feature] };
            apply_real_1q(amps, n_qubits, feature, ry_matrix(angle));
        }
        Gate::Ry { qubit, param } => {
            let angle = if inverse { -params[param] } else { params[param] };
            apply_real_1q(amps, n_qubits, qubit, ry_matrix(angle));
        }
        Gate::Cz { control, target } => apply_cz_raw(amps, n_qubits, control, target),
    }
}

/// Executes the gate plan from |0...0>, returning |psi'(x, theta)>.
pub fn run_circuit(spec: &CircuitSpec, params: &[f64], x: &[f64]) -> Result<QuantumState> {
    run_circuit_tallied(spec, params, x, &mut ExecutionTally::default())
}

pub fn run_circuit_tallied(
    spec: &CircuitSpec,
    params: &[f64],
    x: &[f64],
    tally: &mut ExecutionTally,
) -> Result<QuantumState> {
    spec.check_inputs(params, x)?;
    let mut state = QuantumState::zero(spec.n_qubits)?;
    for &gate in &spec.gates {
        apply_gate_raw(state.amplitudes_mut(), spec.n_qubits, gate, params, x, false);
    }
    tally.circuit_runs += 1;
    tally.gate_applications += spec.gates.len() as u64;
    Ok(state)
}

/// Born-rule probabilities |a_b|^2 over the computational basis.
pub fn measure_probabilities(state: &QuantumState) -> Vec<f64> {
    state.amplitudes.iter().map(|a| a.norm_sqr()).collect()
}

/// How basis outcomes are grouped onto experts when there are fewer experts
/// than outcomes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExpertMapping {
    /// Outcome b routes to expert b mod N.
    #[default]
    Modulo,
    /// Outcome b routes by its leading ceil(log2 N) qubits (taken mod N).
    MarginalFirstKQubits,
}

impl ExpertMapping {
    pub fn expert_for(self, outcome: usize, n_qubits: usize, n_experts: usize) -> usize {
        match self {
            ExpertMapping::Modulo => outcome % n_experts,
            ExpertMapping::MarginalFirstKQubits => {
                let k = n_experts.next_power_of_two().trailing_zeros() as usize;
                (outcome >> (n_qubits - k)) % n_experts
            }
        }
    }
}

pub(crate) fn check_experts(n_outcomes: usize, n_experts: usize) -> Result<()> {
    if n_experts < 1 || n_experts > n_outcomes {
        return Err(QmoeError::InvalidArgument(format!(
            "expert count {n_experts} must be in 1..={n_outcomes}"
        )));
    }
    Ok(())
}

/// Marginalizes basis probabilities onto `n_experts` experts.
pub fn route_probabilities(probs: &[f64], n_experts: usize, mapping: ExpertMapping) -> Result<Vec<f64>> {
    if !probs.len().is_power_of_two() || probs.is_empty() {
        return Err(QmoeError::InvalidArgument(format!(
            "probability vector length {} is not a power of two",
            probs.len()
        )));
    }
    check_experts(probs.len(), n_experts)?;
    let n_qubits = probs.len().trailing_zeros() as usize;
    let mut out = vec![0.0; n_experts];
    for (b, p) in probs.iter().enumerate() {
        out[mapping.expert_for(b, n_qubits, n_experts)] += p;
    }
    let total: f64 = out.iter().sum();
    if total > 0.0 {
        out.iter_mut().for_each(|v| *v /= total);
    }
    Ok(out)
}

/// |a1 e^{i phi1} + a2 e^{i phi2}|^2, evaluated with complex arithmetic.
pub fn interfere_two_paths(a1: f64, phi1: f64, a2: f64, phi2: f64) -> f64 {
    (Complex64::from_polar(a1, phi1) + Complex64::from_polar(a2, phi2)).norm_sqr()
}

/// K(x, x') = |<psi(x)|psi(x')>|^2 using the embedding stage only.
pub fn quantum_kernel(spec: &CircuitSpec, x: &[f64], x_prime: &[f64]) -> Result<f64> {
    let a = angle_embed(x, spec.n_qubits)?;
    let b = angle_embed(x_prime, spec.n_qubits)?;
    Ok(a.inner(&b)?.norm_sqr().min(1.0))
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    use super::*;

    fn re(state: &QuantumState) -> Vec<f64> {
        state.amplitudes().iter().map(|a| a.re).collect()
    }

    fn assert_amps(state: &QuantumState, expected: &[f64]) {
        assert_eq!(state.dim(), expected.len());
        for (a, e) in state.amplitudes().iter().zip(expected) {
            assert_abs_diff_eq!(a.re, *e, epsilon = 1e-12);
            assert_abs_diff_eq!(a.im, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn embed_examples() {
        assert_amps(&angle_embed(&[0.0, 0.0], 2).unwrap(), &[1.0, 0.0, 0.0, 0.0]);
        assert_amps(&angle_embed(&[PI, 0.0], 2).unwrap(), &[0.0, 0.0, 1.0, 0.0]);
        assert_amps(&angle_embed(&[PI / 2.0, PI / 2.0], 2).unwrap(), &[0.5; 4]);
    }

    #[test]
    fn embed_rejects_wrong_length() {
        let err = angle_embed(&[0.1, 0.2, 0.3], 2).unwrap_err();
        assert!(matches!(
            err,
            QmoeError::DimensionMismatch {
                expected: 2,
                actual: 3,
                ..
            }
        ));
    }

    #[test]
    fn ry_examples() {
        let mut s = QuantumState::zero(1).unwrap();
        s.apply_ry(0, PI).unwrap();
        assert_amps(&s, &[0.0, 1.0]);

        let mut s = QuantumState::zero(1).unwrap();
        s.apply_ry(0, 0.0).unwrap();
        assert_amps(&s, &[1.0, 0.0]);

        let mut s = QuantumState::zero(1).unwrap();
        s.apply_ry(0, PI / 2.0).unwrap();
        assert_amps(&s, &[FRAC_1_SQRT_2, FRAC_1_SQRT_2]);
    }

    #[test]
    fn ry_out_of_range() {
        let mut s = QuantumState::zero(2).unwrap();
        assert!(matches!(
            s.apply_ry(2, 0.3),
            Err(QmoeError::QubitOutOfRange { qubit: 2, n_qubits: 2 })
        ));
    }

    #[test]
    fn cz_examples() {
        let mut s = QuantumState::basis(2, 0b11).unwrap();
        s.apply_cz(0, 1).unwrap();
        assert_amps(&s, &[0.0, 0.0, 0.0, -1.0]);

        let mut s = QuantumState::basis(2, 0b01).unwrap();
        s.apply_cz(0, 1).unwrap();
        assert_amps(&s, &[0.0, 1.0, 0.0, 0.0]);

        let mut s = angle_embed(&[PI / 2.0, PI / 2.0], 2).unwrap();
        s.apply_cz(0, 1).unwrap();
        assert_amps(&s, &[0.5, 0.5, 0.5, -0.5]);
    }

    #[test]
    fn cz_errors() {
        let mut s = QuantumState::zero(3).unwrap();
        assert!(matches!(s.apply_cz(1, 1), Err(QmoeError::SameQubit(1))));
        assert!(matches!(s.apply_cz(0, 3), Err(QmoeError::QubitOutOfRange { .. })));
    }

    #[test]
    fn msb_first_ordering() {
        // RY(pi) on qubit 1 of three flips the middle bit: |010> = index 2.
        let mut s = QuantumState::zero(3).unwrap();
        s.apply_ry(1, PI).unwrap();
        assert_abs_diff_eq!(s.amplitudes()[0b010].re, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn layered_spec_layout() {
        let spec = CircuitSpec::layered(3, 2).unwrap();
        assert_eq!(spec.n_params(), 6);
        let ry = spec.gates().iter().filter(|g| matches!(g, Gate::Ry { .. })).count();
        assert_eq!(ry, 6);
        let cz: Vec<_> = spec
            .gates()
            .iter()
            .filter_map(|g| match g {
                Gate::Cz { control, target } => Some((*control, *target)),
                _ => None,
            })
            .collect();
        assert_eq!(cz, vec![(0, 1), (1, 2), (0, 1), (1, 2)]);
        spec.validate().unwrap();
    }

    #[test]
    fn spec_validation_rejects_bad_plans() {
        let embed = vec![
            Gate::AngleEmbed { feature: 0 },
            Gate::AngleEmbed { feature: 1 },
            Gate::AngleEmbed { feature: 2 },
        ];
        let mut gates = embed.clone();
        gates.push(Gate::Cz { control: 0, target: 2 });
        assert!(CircuitSpec::from_gates(3, 0, gates).is_err());

        let mut gates = embed.clone();
        gates.extend([
            Gate::Ry { qubit: 0, param: 0 },
            Gate::Ry { qubit: 1, param: 0 },
            Gate::Ry { qubit: 2, param: 2 },
        ]);
        assert!(CircuitSpec::from_gates(3, 1, gates).is_err());

        let mut gates = embed.clone();
        gates.insert(0, Gate::Ry { qubit: 0, param: 0 });
        gates.extend([Gate::Ry { qubit: 1, param: 1 }, Gate::Ry { qubit: 2, param: 2 }]);
        assert!(CircuitSpec::from_gates(3, 1, gates).is_err());
    }

    #[test]
    fn run_circuit_examples() {
        let spec = CircuitSpec::layered(2, 0).unwrap();
        assert_amps(&run_circuit(&spec, &[], &[0.0, 0.0]).unwrap(), &[1.0, 0.0, 0.0, 0.0]);

        let spec = CircuitSpec::layered(1, 1).unwrap();
        assert_amps(&run_circuit(&spec, &[0.0], &[0.0]).unwrap(), &[1.0, 0.0]);

        let spec = CircuitSpec::layered(2, 1).unwrap();
        let s = run_circuit(&spec, &[PI / 2.0, PI / 2.0], &[0.0, 0.0]).unwrap();
        for p in measure_probabilities(&s) {
            assert_abs_diff_eq!(p, 0.25, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(s.amplitudes()[3].re, -0.5, epsilon = 1e-12);
    }

    #[test]
    fn run_circuit_checks_dims() {
        let spec = CircuitSpec::layered(2, 1).unwrap();
        assert!(run_circuit(&spec, &[0.0], &[0.0, 0.0]).is_err());
        assert!(run_circuit(&spec, &[0.0, 0.0], &[0.0]).is_err());
    }

    #[test]
    fn measure_examples() {
        let s = QuantumState::basis(2, 0b10).unwrap();
        assert_eq!(measure_probabilities(&s), vec![0.0, 0.0, 1.0, 0.0]);
        let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
        let bell = QuantumState::from_amplitudes(2, vec![h, ZERO, ZERO, h]).unwrap();
        let p = measure_probabilities(&bell);
        assert_abs_diff_eq!(p[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(p[3], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn route_examples() {
        let p = [0.5, 0.0, 0.0, 0.5];
        assert_eq!(route_probabilities(&p, 4, ExpertMapping::Modulo).unwrap(), p.to_vec());
        assert_eq!(
            route_probabilities(&p, 2, ExpertMapping::Modulo).unwrap(),
            vec![0.5, 0.5]
        );
        assert_eq!(
            route_probabilities(&[1.0, 0.0, 0.0, 0.0], 2, ExpertMapping::Modulo).unwrap(),
            vec![1.0, 0.0]
        );
        assert!(route_probabilities(&p, 0, ExpertMapping::Modulo).is_err());
        assert!(route_probabilities(&p, 5, ExpertMapping::Modulo).is_err());
    }

    #[test]
    fn first_qubit_mapping_groups_by_leading_bits() {
        // N=2 groups by qubit 0: {00,01} -> 0, {10,11} -> 1.
        let p = [0.1, 0.2, 0.3, 0.4];
        let r = route_probabilities(&p, 2, ExpertMapping::MarginalFirstKQubits).unwrap();
        assert_abs_diff_eq!(r[0], 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(r[1], 0.7, epsilon = 1e-12);
    }

    #[test]
    fn interference_examples() {
        let h = FRAC_1_SQRT_2;
        assert_abs_diff_eq!(interfere_two_paths(h, 0.0, h, PI), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(interfere_two_paths(h, 0.0, h, 0.0), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(interfere_two_paths(0.6, PI / 2.0, 0.8, 0.0), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn kernel_examples() {
        let spec2 = CircuitSpec::layered(2, 3).unwrap();
        assert_abs_diff_eq!(
            quantum_kernel(&spec2, &[0.3, 1.1], &[0.3, 1.1]).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            quantum_kernel(&spec2, &[0.0, 0.0], &[PI, PI]).unwrap(),
            0.0,
            epsilon = 1e-12
        );
        let spec1 = CircuitSpec::layered(1, 0).unwrap();
        assert_abs_diff_eq!(
            quantum_kernel(&spec1, &[0.0], &[PI / 2.0]).unwrap(),
            0.5,
            epsilon = 1e-12
        );
        assert!(quantum_kernel(&spec2, &[0.0], &[0.0, 0.0]).is_err());
    }

    fn angles(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-2.0 * PI..2.0 * PI, n)
    }

    proptest! {
        #[test]
        fn gates_preserve_norm(x in angles(3), theta in -10.0f64..10.0, q in 0usize..3) {
            let mut s = angle_embed(&x, 3).unwrap();
            s.apply_ry(q, theta).unwrap();
            prop_assert!((s.norm_sqr() - 1.0).abs() <= 1e-12);
            s.apply_cz(q, (q + 1) % 3).unwrap();
            prop_assert!((s.norm_sqr() - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn ry_inverse_and_cz_involution(x in angles(3), theta in -10.0f64..10.0, q in 0usize..3) {
            let s0 = angle_embed(&x, 3).unwrap();
            let mut s = s0.clone();
            s.apply_ry(q, theta).unwrap();
            s.apply_ry(q, -theta).unwrap();
            for (a, b) in s.amplitudes().iter().zip(s0.amplitudes()) {
                prop_assert!((a - b).norm() <= 1e-12);
            }
            let mut s = s0.clone();
            s.apply_cz(q, (q + 2) % 3).unwrap();
            s.apply_cz(q, (q + 2) % 3).unwrap();
            prop_assert_eq!(re(&s), re(&s0));
        }

        #[test]
        fn probabilities_on_simplex(x in angles(3), theta in angles(6)) {
            let spec = CircuitSpec::layered(3, 2).unwrap();
            let p = measure_probabilities(&run_circuit(&spec, &theta, &x).unwrap());
            prop_assert!(p.iter().all(|&v| v >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn kernel_symmetric_and_bounded(x in angles(3), y in angles(3)) {
            let spec = CircuitSpec::layered(3, 1).unwrap();
            let k1 = quantum_kernel(&spec, &x, &y).unwrap();
            let k2 = quantum_kernel(&spec, &y, &x).unwrap();
            prop_assert!((k1 - k2).abs() <= 1e-12);
            prop_assert!((0.0..=1.0).contains(&k1));
            // Closed form for product states: prod_i cos^2((x_i - y_i)/2).
            let closed: f64 = x.iter().zip(&y).map(|(a, b)| ((a - b) / 2.0).cos().powi(2)).product();
            prop_assert!((k1 - closed).abs() <= 1e-12);
        }

        #[test]
        fn interference_matches_closed_form(a1 in 0.0f64..2.0, a2 in 0.0f64..2.0, p1 in -7.0f64..7.0, p2 in -7.0f64..7.0) {
            let closed = a1 * a1 + a2 * a2 + 2.0 * a1 * a2 * (p1 - p2).cos();
            prop_assert!((interfere_two_paths(a1, p1, a2, p2) - closed).abs() <= 1e-12);
        }
    }
}

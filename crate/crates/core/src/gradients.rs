//! Derivatives of the routing circuit's outcome probabilities with respect to
//! its rotation angles.
//!
//! Three backends share one output type:
//! - adjoint: one forward execution, then a reverse sweep that un-applies
//!   gates while carrying the bra vectors along,
//! - parameter shift: 2P forward executions at theta_j +/- pi/2,
//! - central finite differences: 2P forward executions at theta_j +/- h.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{QmoeError, Result};
use crate::quantum::{
    apply_gate_raw, apply_real_1q, measure_probabilities, run_circuit_tallied, ry_derivative_matrix, CircuitSpec,
    ExecutionTally, Gate,
};

/// Default central-difference step, in radians.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// dp_k / dtheta_j stored row-major with one row per outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbJacobian {
    n_outcomes: usize,
    n_params: usize,
    data: Vec<f64>,
}

impl ProbJacobian {
    pub fn zeros(n_outcomes: usize, n_params: usize) -> Self {
        Self {
            n_outcomes,
            n_params,
            data: vec![0.0; n_outcomes * n_params],
        }
    }

    pub fn n_outcomes(&self) -> usize {
        self.n_outcomes
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn get(&self, outcome: usize, param: usize) -> f64 {
        self.data[outcome * self.n_params + param]
    }

    pub fn row(&self, outcome: usize) -> &[f64] {
        &self.data[outcome * self.n_params..(outcome + 1) * self.n_params]
    }

    fn set(&mut self, outcome: usize, param: usize, v: f64) {
        self.data[outcome * self.n_params + param] = v;
    }

    /// Sum over outcomes for each parameter. Zero up to rounding, since the
    /// probabilities always sum to one.
    pub fn column_sums(&self) -> Vec<f64> {
        (0..self.n_params)
            .map(|j| (0..self.n_outcomes).map(|k| self.get(k, j)).sum())
            .collect()
    }

    /// w^T J, the gradient of sum_k w_k p_k.
    pub fn weighted_sum(&self, weights: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_params];
        for (k, w) in weights.iter().enumerate() {
            for (o, v) in out.iter_mut().zip(self.row(k)) {
                *o += w * v;
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &ProbJacobian) -> f64 {
        assert_eq!((self.n_outcomes, self.n_params), (other.n_outcomes, other.n_params));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientBackend {
    #[default]
    Adjoint,
    ParameterShift,
    FiniteDiff,
}

pub fn jacobian(backend: GradientBackend, spec: &CircuitSpec, params: &[f64], x: &[f64]) -> Result<ProbJacobian> {
    match backend {
        GradientBackend::Adjoint => jacobian_adjoint(spec, params, x),
        GradientBackend::ParameterShift => jacobian_parameter_shift(spec, params, x),
        GradientBackend::FiniteDiff => jacobian_finite_diff(spec, params, x, DEFAULT_FD_STEP),
    }
}

pub fn jacobian_adjoint(spec: &CircuitSpec, params: &[f64], x: &[f64]) -> Result<ProbJacobian> {
    jacobian_adjoint_tallied(spec, params, x, &mut ExecutionTally::default())
}

/// Adjoint Jacobian. For each outcome k the bra <psi| Pi_k is swept backwards
/// through the circuit next to the ket, so each entry is
/// 2 Re <psi_N| Pi_k U_rest (dG_j) |psi_{j-1}>.
pub fn jacobian_adjoint_tallied(
    spec: &CircuitSpec,
    params: &[f64],
    x: &[f64],
    tally: &mut ExecutionTally,
) -> Result<ProbJacobian> {
    let n = spec.n_qubits();
    let psi_final = run_circuit_tallied(spec, params, x, tally)?;
    let dim = psi_final.dim();
    let mut jac = ProbJacobian::zeros(dim, spec.n_params());
    if spec.n_params() == 0 {
        return Ok(jac);
    }

    let mut ket = psi_final.amplitudes().to_vec();
    let mut bras: Vec<Vec<Complex64>> = (0..dim)
        .map(|k| {
            let mut b = vec![Complex64::new(0.0, 0.0); dim];
            b[k] = ket[k];
            b
        })
        .collect();
    let mut scratch = vec![Complex64::new(0.0, 0.0); dim];

    for &gate in spec.gates().iter().rev() {
        if !gate.is_variational() {
            break;
        }
        apply_gate_raw(&mut ket, n, gate, params, x, true);
        tally.gate_applications += 1;
        if let Gate::Ry { qubit, param } = gate {
            scratch.copy_from_slice(&ket);
            apply_real_1q(&mut scratch, n, qubit, ry_derivative_matrix(params[param]));
            tally.gate_applications += 1;
            for (k, bra) in bras.iter().enumerate() {
                jac.set(k, param, 2.0 * overlap_re(bra, &scratch));
            }
        }
        for bra in bras.iter_mut() {
            apply_gate_raw(bra, n, gate, params, x, true);
        }
        tally.gate_applications += dim as u64;
    }
    Ok(jac)
}

/// Re <a|b>
fn overlap_re(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u.re * v.re + u.im * v.im).sum()
}

/// Outcome probabilities together with the gradient of sum_b weights[b] * p_b,
/// from one forward execution and one reverse sweep with a single bra.
pub fn vjp_adjoint(spec: &CircuitSpec, params: &[f64], x: &[f64], weights: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    vjp_adjoint_tallied(spec, params, x, weights, &mut ExecutionTally::default())
}

pub fn vjp_adjoint_tallied(
    spec: &CircuitSpec,
    params: &[f64],
    x: &[f64],
    weights: &[f64],
    tally: &mut ExecutionTally,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = spec.n_qubits();
    let psi_final = run_circuit_tallied(spec, params, x, tally)?;
    if weights.len() != psi_final.dim() {
        return Err(QmoeError::DimensionMismatch {
            expected: psi_final.dim(),
            actual: weights.len(),
            context: "outcome weight vector",
        });
    }
    let probs = measure_probabilities(&psi_final);
    let mut grad = vec![0.0; spec.n_params()];
    let mut ket = psi_final.amplitudes().to_vec();
    let mut bra: Vec<Complex64> = ket.iter().zip(weights).map(|(a, w)| a * w).collect();
    let mut scratch = vec![Complex64::new(0.0, 0.0); ket.len()];

    for &gate in spec.gates().iter().rev() {
        if !gate.is_variational() {
            break;
        }
        apply_gate_raw(&mut ket, n, gate, params, x, true);
        if let Gate::Ry { qubit, param } = gate {
            scratch.copy_from_slice(&ket);
            apply_real_1q(&mut scratch, n, qubit, ry_derivative_matrix(params[param]));
            grad[param] = 2.0 * overlap_re(&bra, &scratch);
            tally.gate_applications += 1;
        }
        apply_gate_raw(&mut bra, n, gate, params, x, true);
        tally.gate_applications += 2;
    }
    Ok((probs, grad))
}

pub fn jacobian_parameter_shift(spec: &CircuitSpec, params: &[f64], x: &[f64]) -> Result<ProbJacobian> {
    jacobian_parameter_shift_tallied(spec, params, x, &mut ExecutionTally::default())
}

/// dp_k/dtheta_j = (p_k(theta_j + pi/2) - p_k(theta_j - pi/2)) / 2, exact for RY.
pub fn jacobian_parameter_shift_tallied(
    spec: &CircuitSpec,
    params: &[f64],
    x: &[f64],
    tally: &mut ExecutionTally,
) -> Result<ProbJacobian> {
    shifted_differences(spec, params, x, FRAC_PI_2, 0.5, tally)
}

pub fn jacobian_finite_diff(spec: &CircuitSpec, params: &[f64], x: &[f64], step: f64) -> Result<ProbJacobian> {
    jacobian_finite_diff_tallied(spec, params, x, step, &mut ExecutionTally::default())
}

pub fn jacobian_finite_diff_tallied(
    spec: &CircuitSpec,
    params: &[f64],
    x: &[f64],
    step: f64,
    tally: &mut ExecutionTally,
) -> Result<ProbJacobian> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(QmoeError::InvalidArgument(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }
    shifted_differences(spec, params, x, step, 1.0 / (2.0 * step), tally)
}

fn shifted_differences(
    spec: &CircuitSpec,
    params: &[f64],
    x: &[f64],
    shift: f64,
    scale: f64,
    tally: &mut ExecutionTally,
) -> Result<ProbJacobian> {
    spec.check_inputs(params, x)?;
    let dim = 1 << spec.n_qubits();
    let mut jac = ProbJacobian::zeros(dim, spec.n_params());
    let mut shifted = params.to_vec();
    for j in 0..spec.n_params() {
        shifted[j] = params[j] + shift;
        let plus = measure_probabilities(&run_circuit_tallied(spec, &shifted, x, tally)?);
        shifted[j] = params[j] - shift;
        let minus = measure_probabilities(&run_circuit_tallied(spec, &shifted, x, tally)?);
        shifted[j] = params[j];
        for k in 0..dim {
            jac.set(k, j, scale * (plus[k] - minus[k]));
        }
    }
    Ok(jac)
}

//! Mixture-of-experts models: a router (linear, deep or quantum) producing a
//! distribution over linear experts whose outputs are mixed into class logits.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{QmoeError, Result};
use crate::noise::{run_circuit_noisy, NoiseOptions};
use crate::quantum::{
    check_experts, measure_probabilities, route_probabilities, run_circuit, CircuitSpec, ExpertMapping, ParamVector,
};

/// Fully connected layer `y = W x + b`, weights stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            weights: vec![0.0; rows * cols],
            bias: vec![0.0; rows],
        }
    }

    /// Uniform in [-a, a] with a = sqrt(6 / (fan_in + fan_out)); zero bias.
    pub fn glorot<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let a = (6.0 / (rows + cols) as f64).sqrt();
        let weights = (0..rows * cols).map(|_| rng.random_range(-a..=a)).collect();
        Self {
            rows,
            cols,
            weights,
            bias: vec![0.0; rows],
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        self.weights
            .chunks_exact(self.cols)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }

    pub fn n_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn validate(&self, what: &str) -> Result<()> {
        if self.weights.len() != self.rows * self.cols || self.bias.len() != self.rows {
            return Err(QmoeError::InvalidArgument(format!(
                "{what}: layer buffers do not match its {}x{} shape",
                self.rows, self.cols
            )));
        }
        Ok(())
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / total).collect()
}

fn check_input(x: &[f64], d: usize) -> Result<()> {
    if x.len() != d {
        return Err(QmoeError::DimensionMismatch {
            expected: d,
            actual: x.len(),
            context: "model input features",
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearExpert {
    pub layer: Dense,
}

impl LinearExpert {
    pub fn output(&self, x: &[f64]) -> Vec<f64> {
        self.layer.apply(x)
    }
}

/// g(x) = softmax(W_g x + b_g)
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRouter {
    pub layer: Dense,
}

/// Tanh hidden layers followed by a linear layer of width N and a softmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepRouter {
    pub layers: Vec<Dense>,
}

impl DeepRouter {
    /// Pre-softmax logits together with the activations entering each layer.
    pub(crate) fn logits_with_activations(&self, x: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.apply(&h);
            inputs.push(std::mem::replace(&mut h, z));
            if i < last {
                h.iter_mut().for_each(|v| *v = v.tanh());
            }
        }
        (h, inputs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantumRouter {
    pub circuit: CircuitSpec,
    pub params: ParamVector,
    pub n_experts: usize,
    #[serde(default)]
    pub mapping: ExpertMapping,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Router {
    Linear(LinearRouter),
    Deep(DeepRouter),
    Quantum(QuantumRouter),
}

pub fn gate_linear(router: &LinearRouter, x: &[f64]) -> Result<Vec<f64>> {
    check_input(x, router.layer.cols)?;
    Ok(softmax(&router.layer.apply(x)))
}

pub fn gate_deep(router: &DeepRouter, x: &[f64]) -> Result<Vec<f64>> {
    check_input(x, router.layers[0].cols)?;
    Ok(softmax(&router.logits_with_activations(x).0))
}

/// route_probabilities . measure_probabilities . run_circuit
pub fn gate_quantum(router: &QuantumRouter, x: &[f64]) -> Result<Vec<f64>> {
    let state = run_circuit(&router.circuit, &router.params, x)?;
    route_probabilities(&measure_probabilities(&state), router.n_experts, router.mapping)
}

impl Router {
    pub fn gate(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Router::Linear(r) => gate_linear(r, x),
            Router::Deep(r) => gate_deep(r, x),
            Router::Quantum(r) => gate_quantum(r, x),
        }
    }

    pub fn n_experts(&self) -> usize {
        match self {
            Router::Linear(r) => r.layer.rows,
            Router::Deep(r) => r.layers.last().map_or(0, |l| l.rows),
            Router::Quantum(r) => r.n_experts,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Router::Linear(r) => r.layer.cols,
            Router::Deep(r) => r.layers.first().map_or(0, |l| l.cols),
            Router::Quantum(r) => r.circuit.n_qubits(),
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            Router::Linear(r) => r.layer.n_params(),
            Router::Deep(r) => r.layers.iter().map(Dense::n_params).sum(),
            Router::Quantum(r) => r.circuit.n_params(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Router::Linear(_) => "linear",
            Router::Deep(_) => "deep",
            Router::Quantum(_) => "quantum",
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Router::Linear(r) => r.layer.validate("linear router"),
            Router::Deep(r) => {
                if r.layers.is_empty() {
                    return Err(QmoeError::InvalidArgument("deep router has no layers".into()));
                }
                for (i, pair) in r.layers.windows(2).enumerate() {
                    if pair[0].rows != pair[1].cols {
                        return Err(QmoeError::InvalidArgument(format!(
                            "deep router layers {i} and {} do not chain ({} -> {})",
                            i + 1,
                            pair[0].rows,
                            pair[1].cols
                        )));
                    }
                }
                r.layers.iter().try_for_each(|l| l.validate("deep router"))
            }
            Router::Quantum(r) => {
                r.circuit.validate()?;
                if r.params.len() != r.circuit.n_params() {
                    return Err(QmoeError::DimensionMismatch {
                        expected: r.circuit.n_params(),
                        actual: r.params.len(),
                        context: "quantum router parameters",
                    });
                }
                check_experts(1 << r.circuit.n_qubits(), r.n_experts)
            }
        }
    }
}

/// Router architecture as written in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RouterSpec {
    Linear,
    Deep {
        #[serde(default = "default_hidden")]
        hidden: Vec<usize>,
    },
    Quantum {
        /// Defaults to the input dimension; must equal it when given.
        #[serde(default)]
        n_qubits: Option<usize>,
        n_layers: usize,
        #[serde(default)]
        mapping: ExpertMapping,
    },
}

fn default_hidden() -> Vec<usize> {
    vec![13, 13]
}

fn default_experts() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    pub router: RouterSpec,
    #[serde(default = "default_experts")]
    pub n_experts: usize,
}

/// Quantum angles start uniform in [-0.1, 0.1] so the variational block is
/// close to the identity.
pub const QUANTUM_INIT_RANGE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridModel {
    router: Router,
    experts: Vec<LinearExpert>,
    input_dim: usize,
    n_classes: usize,
}

/// Mixed logits and the gate that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub logits: Vec<f64>,
    pub gate: Vec<f64>,
}

impl HybridModel {
    pub fn new(router: Router, experts: Vec<LinearExpert>, input_dim: usize, n_classes: usize) -> Result<Self> {
        router.validate()?;
        if router.input_dim() != input_dim {
            return Err(QmoeError::DimensionMismatch {
                expected: input_dim,
                actual: router.input_dim(),
                context: "router input dimension",
            });
        }
        if !experts.is_empty() && experts.len() != router.n_experts() {
            return Err(QmoeError::DimensionMismatch {
                expected: router.n_experts(),
                actual: experts.len(),
                context: "expert count",
            });
        }
        for e in &experts {
            e.layer.validate("expert")?;
            if e.layer.cols != input_dim || e.layer.rows != n_classes {
                return Err(QmoeError::InvalidArgument(format!(
                    "expert shape {}x{} does not match {n_classes} classes x {input_dim} features",
                    e.layer.rows, e.layer.cols
                )));
            }
        }
        Ok(Self {
            router,
            experts,
            input_dim,
            n_classes,
        })
    }

    /// Seeded initialization from an architecture description.
    pub fn init<R: Rng + ?Sized>(spec: &ModelSpec, input_dim: usize, n_classes: usize, rng: &mut R) -> Result<Self> {
        let n = spec.n_experts;
        if n == 0 {
            return Err(QmoeError::Config(format!(
                "model {:?}: n_experts must be at least 1",
                spec.name
            )));
        }
        let router = match &spec.router {
            RouterSpec::Linear => Router::Linear(LinearRouter {
                layer: Dense::glorot(n, input_dim, rng),
            }),
            RouterSpec::Deep { hidden } => {
                if hidden.contains(&0) {
                    return Err(QmoeError::Config(format!(
                        "model {:?}: hidden widths must be positive",
                        spec.name
                    )));
                }
                let mut dims = vec![input_dim];
                dims.extend(hidden);
                dims.push(n);
                Router::Deep(DeepRouter {
                    layers: dims.windows(2).map(|w| Dense::glorot(w[1], w[0], rng)).collect(),
                })
            }
            RouterSpec::Quantum {
                n_qubits,
                n_layers,
                mapping,
            } => {
                let q = n_qubits.unwrap_or(input_dim);
                if q != input_dim {
                    return Err(QmoeError::Config(format!(
                        "model {:?}: quantum router needs one qubit per feature ({q} qubits, {input_dim} features)",
                        spec.name
                    )));
                }
                let circuit = CircuitSpec::layered(q, *n_layers)?;
                let params = (0..circuit.n_params())
                    .map(|_| rng.random_range(-QUANTUM_INIT_RANGE..=QUANTUM_INIT_RANGE))
                    .collect::<Vec<_>>();
                Router::Quantum(QuantumRouter {
                    circuit,
                    params: params.into(),
                    n_experts: n,
                    mapping: *mapping,
                })
            }
        };
        let experts = (0..n)
            .map(|_| LinearExpert {
                layer: Dense::glorot(n_classes, input_dim, rng),
            })
            .collect();
        Self::new(router, experts, input_dim, n_classes)
    }

    pub fn router(&self) -> &Router {
        &self.router
    }

    pub fn experts(&self) -> &[LinearExpert] {
        &self.experts
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_experts(&self) -> usize {
        self.router.n_experts()
    }

    /// y = sum_i g_i(x) (W_i x + b_i)
    pub fn forward(&self, x: &[f64]) -> Result<Forward> {
        check_input(x, self.input_dim)?;
        let gate = self.router.gate(x)?;
        Ok(Forward {
            logits: self.mix(x, &gate),
            gate,
        })
    }

    /// Expert outputs weighted by an externally supplied gate.
    pub fn mix(&self, x: &[f64], gate: &[f64]) -> Vec<f64> {
        let mut logits = vec![0.0; self.n_classes];
        for (g, expert) in gate.iter().zip(&self.experts) {
            for (y, e) in logits.iter_mut().zip(expert.output(x)) {
                *y += g * e;
            }
        }
        logits
    }

    /// Forward pass with the routing circuit run under depolarizing noise.
    /// Classical routers are unaffected.
    pub fn forward_noisy(&self, x: &[f64], epsilon: f64, options: NoiseOptions) -> Result<Forward> {
        check_input(x, self.input_dim)?;
        let gate = match &self.router {
            Router::Quantum(r) => {
                let probs = run_circuit_noisy(&r.circuit, &r.params, x, epsilon, options)?;
                route_probabilities(&probs, r.n_experts, r.mapping)?
            }
            other => other.gate(x)?,
        };
        Ok(Forward {
            logits: self.mix(x, &gate),
            gate,
        })
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.forward(x)?.logits))
    }

    /// Every trainable scalar, router first, then experts in order.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(count_parameters(self).total);
        self.visit_params(|slice| out.extend_from_slice(slice));
        out
    }

    pub fn set_parameters(&mut self, values: &[f64]) -> Result<()> {
        let total = count_parameters(self).total;
        if values.len() != total {
            return Err(QmoeError::DimensionMismatch {
                expected: total,
                actual: values.len(),
                context: "flat parameter vector",
            });
        }
        let mut offset = 0;
        self.visit_params_mut(|slice| {
            slice.copy_from_slice(&values[offset..offset + slice.len()]);
            offset += slice.len();
        });
        Ok(())
    }

    fn visit_params(&self, mut f: impl FnMut(&[f64])) {
        match &self.router {
            Router::Linear(r) => {
                f(&r.layer.weights);
                f(&r.layer.bias);
            }
            Router::Deep(r) => {
                for l in &r.layers {
                    f(&l.weights);
                    f(&l.bias);
                }
            }
            Router::Quantum(r) => f(&r.params),
        }
        for e in &self.experts {
            f(&e.layer.weights);
            f(&e.layer.bias);
        }
    }

    fn visit_params_mut(&mut self, mut f: impl FnMut(&mut [f64])) {
        match &mut self.router {
            Router::Linear(r) => {
                f(&mut r.layer.weights);
                f(&mut r.layer.bias);
            }
            Router::Deep(r) => {
                for l in &mut r.layers {
                    f(&mut l.weights);
                    f(&mut l.bias);
                }
            }
            Router::Quantum(r) => f(&mut r.params.0),
        }
        for e in &mut self.experts {
            f(&mut e.layer.weights);
            f(&mut e.layer.bias);
        }
    }
}

pub fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) },
        )
        .0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCount {
    pub router: usize,
    pub experts: usize,
    pub total: usize,
}

pub fn count_parameters(model: &HybridModel) -> ParamCount {
    let router = model.router.n_params();
    let experts = model.experts.iter().map(|e| e.layer.n_params()).sum();
    ParamCount {
        router,
        experts,
        total: router + experts,
    }
}

/// eta = accuracy / ln(1 + P)
pub fn efficiency_ratio(accuracy: f64, params: usize) -> Result<f64> {
    if params < 1 {
        return Err(QmoeError::InvalidArgument(
            "efficiency ratio needs at least one parameter".into(),
        ));
    }
    Ok(accuracy / (1.0 + params as f64).ln())
}

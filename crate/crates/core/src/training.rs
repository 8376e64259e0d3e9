//! Loss, exact gradients through the mixture, Adam and the epoch loop.

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::datasets::{Dataset, Split};
use crate::error::{QmoeError, Result};
use crate::gradients::{jacobian, vjp_adjoint, GradientBackend};
use crate::models::{argmax, count_parameters, softmax, Dense, HybridModel, Router};
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    /// Minimum validation-loss improvement that resets the patience counter.
    pub min_delta: f64,
    pub validation_fraction: f64,
    pub seed: u64,
    pub gradient_backend: GradientBackend,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            batch_size: 32,
            max_epochs: 100,
            early_stop_patience: 10,
            min_delta: 1e-4,
            validation_fraction: 0.2,
            seed: 0,
            gradient_backend: GradientBackend::Adjoint,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(QmoeError::Config(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "train.learning_rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if self.batch_size == 0 {
            return bad("train.batch_size must be at least 1".into());
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad(format!(
                "train.validation_fraction must lie in (0, 1), got {}",
                self.validation_fraction
            ));
        }
        if self.early_stop_patience == 0 {
            return bad("train.early_stop_patience must be at least 1".into());
        }
        Ok(())
    }
}

/// Bias-corrected Adam with per-coordinate first and second moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n_params: usize, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(QmoeError::DimensionMismatch {
                expected: self.m.len(),
                actual: if params.len() != self.m.len() {
                    params.len()
                } else {
                    grads.len()
                },
                context: "Adam parameter/gradient length",
            });
        }
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

fn cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let probs = softmax(logits);
    let loss = -probs[label].max(f64::MIN_POSITIVE).ln();
    let mut d = probs;
    d[label] -= 1.0;
    (loss, d)
}

fn accumulate_dense(grad: &mut [f64], layer: &Dense, d_out: &[f64], input: &[f64], scale: f64) {
    let (w, b) = grad.split_at_mut(layer.weights.len());
    for (r, &g) in d_out.iter().enumerate() {
        let row = &mut w[r * layer.cols..(r + 1) * layer.cols];
        for (acc, &x) in row.iter_mut().zip(input) {
            *acc += scale * g * x;
        }
        b[r] += scale * g;
    }
}

/// W^T d_out
fn back_through(layer: &Dense, d_out: &[f64]) -> Vec<f64> {
    let mut d_in = vec![0.0; layer.cols];
    for (r, &g) in d_out.iter().enumerate() {
        for (acc, w) in d_in
            .iter_mut()
            .zip(&layer.weights[r * layer.cols..(r + 1) * layer.cols])
        {
            *acc += w * g;
        }
    }
    d_in
}

/// Softmax backward: dz = g * (dg - <g, dg>).
fn softmax_backward(gate: &[f64], d_gate: &[f64]) -> Vec<f64> {
    let dot: f64 = gate.iter().zip(d_gate).map(|(g, d)| g * d).sum();
    gate.iter().zip(d_gate).map(|(g, d)| g * (d - dot)).collect()
}

/// Adds `scale` times the router-parameter gradient of sum_i d_gate[i] * g_i(x)
/// into `grad`.
fn router_backward(
    router: &Router,
    x: &[f64],
    backend: GradientBackend,
    d_gate: &[f64],
    grad: &mut [f64],
    scale: f64,
) -> Result<()> {
    match router {
        Router::Linear(r) => {
            let gate = softmax(&r.layer.apply(x));
            let dz = softmax_backward(&gate, d_gate);
            accumulate_dense(grad, &r.layer, &dz, x, scale);
        }
        Router::Deep(r) => {
            let (logits, inputs) = r.logits_with_activations(x);
            let gate = softmax(&logits);
            let mut dz = softmax_backward(&gate, d_gate);
            let mut end = grad.len();
            for i in (0..r.layers.len()).rev() {
                let layer = &r.layers[i];
                let start = end - layer.n_params();
                accumulate_dense(&mut grad[start..end], layer, &dz, &inputs[i], scale);
                end = start;
                if i > 0 {
                    // inputs[i] = tanh(z_{i-1}), so dtanh = 1 - inputs[i]^2.
                    let da = back_through(layer, &dz);
                    dz = da.iter().zip(&inputs[i]).map(|(d, a)| d * (1.0 - a * a)).collect();
                }
            }
        }
        Router::Quantum(r) => {
            let n = r.circuit.n_qubits();
            let weights: Vec<f64> = (0..1usize << n)
                .map(|b| d_gate[r.mapping.expert_for(b, n, r.n_experts)])
                .collect();
            let g_theta = match backend {
                GradientBackend::Adjoint => vjp_adjoint(&r.circuit, &r.params, x, &weights)?.1,
                other => jacobian(other, &r.circuit, &r.params, x)?.weighted_sum(&weights),
            };
            for (acc, g) in grad.iter_mut().zip(g_theta) {
                *acc += scale * g;
            }
        }
    }
    Ok(())
}

/// Mean softmax cross-entropy over the batch and its exact gradient with
/// respect to [`HybridModel::parameters`].
pub fn loss_and_grad(
    model: &HybridModel,
    xs: &[&[f64]],
    labels: &[usize],
    backend: GradientBackend,
) -> Result<(f64, Vec<f64>)> {
    if xs.is_empty() {
        return Err(QmoeError::Training("empty batch".into()));
    }
    if xs.len() != labels.len() {
        return Err(QmoeError::DimensionMismatch {
            expected: xs.len(),
            actual: labels.len(),
            context: "batch labels",
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= model.n_classes()) {
        return Err(QmoeError::Training(format!(
            "label {bad} outside 0..{}",
            model.n_classes()
        )));
    }
    let counts = count_parameters(model);
    let mut grad = vec![0.0; counts.total];
    let (router_grad, expert_grad) = grad.split_at_mut(counts.router);
    let scale = 1.0 / xs.len() as f64;
    let mut total_loss = 0.0;
    let expert_stride = model.experts().first().map_or(0, |e| e.layer.n_params());

    for (&x, &label) in xs.iter().zip(labels) {
        if x.len() != model.input_dim() {
            return Err(QmoeError::DimensionMismatch {
                expected: model.input_dim(),
                actual: x.len(),
                context: "model input features",
            });
        }
        let gate = model.router().gate(x)?;
        let outputs: Vec<Vec<f64>> = model.experts().iter().map(|e| e.output(x)).collect();
        let mut logits = vec![0.0; model.n_classes()];
        for (g, out) in gate.iter().zip(&outputs) {
            for (y, e) in logits.iter_mut().zip(out) {
                *y += g * e;
            }
        }
        let (loss, d_logits) = cross_entropy(&logits, label);
        total_loss += loss;

        // Experts: dL/dW_i = g_i dy x^T, dL/db_i = g_i dy.
        for (i, expert) in model.experts().iter().enumerate() {
            let slot = &mut expert_grad[i * expert_stride..(i + 1) * expert_stride];
            accumulate_dense(slot, &expert.layer, &d_logits, x, scale * gate[i]);
        }
        let d_gate: Vec<f64> = outputs
            .iter()
            .map(|out| out.iter().zip(&d_logits).map(|(e, d)| e * d).sum())
            .collect();
        router_backward(model.router(), x, backend, &d_gate, router_grad, scale)?;
    }
    Ok((total_loss * scale, grad))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
    pub predictions: Vec<usize>,
    /// Fraction of samples whose largest gate weight picks each expert.
    pub utilization: Vec<f64>,
}

pub fn evaluate(model: &HybridModel, xs: &[&[f64]], labels: &[usize]) -> Result<Evaluation> {
    evaluate_with(model, xs, labels, |x| model.forward(x).map(|f| (f.logits, f.gate)))
}

/// Evaluation with a caller-supplied forward pass (used for noisy routing).
pub fn evaluate_with(
    model: &HybridModel,
    xs: &[&[f64]],
    labels: &[usize],
    forward: impl Fn(&[f64]) -> Result<(Vec<f64>, Vec<f64>)>,
) -> Result<Evaluation> {
    let mut loss = 0.0;
    let mut correct = 0usize;
    let mut predictions = Vec::with_capacity(xs.len());
    let mut utilization = vec![0.0; model.n_experts()];
    for (&x, &label) in xs.iter().zip(labels) {
        let (logits, gate) = forward(x)?;
        loss += cross_entropy(&logits, label).0;
        let pred = argmax(&logits);
        correct += usize::from(pred == label);
        predictions.push(pred);
        utilization[argmax(&gate)] += 1.0;
    }
    let n = xs.len().max(1) as f64;
    utilization.iter_mut().for_each(|u| *u /= n);
    Ok(Evaluation {
        loss: loss / n,
        accuracy: correct as f64 / n,
        predictions,
        utilization,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
    pub wall_ms: f64,
    pub utilization: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub records: Vec<EpochRecord>,
    /// Epoch (1-based) whose parameters were returned.
    pub best_epoch: Option<usize>,
}

impl TrainTrace {
    pub fn best_val_loss(&self) -> Option<f64> {
        let best = self.best_epoch?;
        self.records.iter().find(|r| r.epoch == best).map(|r| r.val_loss)
    }

    /// First epoch whose validation accuracy reaches `threshold`.
    pub fn epochs_to_val_accuracy(&self, threshold: f64) -> Option<usize> {
        self.records.iter().find(|r| r.val_acc >= threshold).map(|r| r.epoch)
    }

    /// CSV columns: epoch, train_loss, val_loss, train_acc, val_acc, wall_ms, util_0..util_{N-1}.
    pub fn write_csv(&self, path: &Path, n_experts: usize) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = ["epoch", "train_loss", "val_loss", "train_acc", "val_acc", "wall_ms"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend((0..n_experts).map(|i| format!("util_{i}")));
        w.write_record(&header)?;
        for r in &self.records {
            let mut rec = vec![
                r.epoch.to_string(),
                r.train_loss.to_string(),
                r.val_loss.to_string(),
                r.train_acc.to_string(),
                r.val_acc.to_string(),
                format!("{:.3}", r.wall_ms),
            ];
            rec.extend(r.utilization.iter().map(|u| u.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| QmoeError::io(path, e))?;
        Ok(())
    }
}

/// Splits the training rows into (train, validation) index lists. Rows
/// already tagged as validation are used as-is; otherwise a seeded
/// `validation_fraction` of the training rows is held out.
pub fn train_val_indices(ds: &Dataset, config: &TrainConfig) -> (Vec<usize>, Vec<usize>) {
    let tagged_val = ds.indices(Split::Val);
    let mut train = ds.indices(Split::Train);
    if !tagged_val.is_empty() {
        return (train, tagged_val);
    }
    train.shuffle(&mut stream_rng(config.seed, Stream::ValidationSplit));
    let n_val = ((train.len() as f64) * config.validation_fraction).round() as usize;
    let val = train.split_off(train.len() - n_val);
    (train, val)
}

/// Mini-batch Adam with early stopping on validation loss. Returns the
/// parameters from the epoch with the lowest validation loss.
pub fn fit(mut model: HybridModel, ds: &Dataset, config: &TrainConfig) -> Result<(HybridModel, TrainTrace)> {
    config.validate()?;
    if config.max_epochs == 0 {
        return Ok((model, TrainTrace::default()));
    }
    let (train_idx, val_idx) = train_val_indices(ds, config);
    if train_idx.len() < config.batch_size {
        return Err(QmoeError::Training(format!(
            "{} training rows after the validation split, batch size is {}",
            train_idx.len(),
            config.batch_size
        )));
    }
    if val_idx.is_empty() {
        return Err(QmoeError::Training("validation split is empty".into()));
    }
    let first = ds.labels()[train_idx[0]];
    if train_idx.iter().all(|&i| ds.labels()[i] == first) {
        return Err(QmoeError::Data(format!(
            "training split contains a single class ({first}); nothing to separate"
        )));
    }

    let rows = |idx: &[usize]| -> (Vec<&[f64]>, Vec<usize>) {
        (
            idx.iter().map(|&i| ds.features()[i].as_slice()).collect(),
            idx.iter().map(|&i| ds.labels()[i]).collect(),
        )
    };
    let (train_x, train_y) = rows(&train_idx);
    let (val_x, val_y) = rows(&val_idx);

    let mut params = model.parameters();
    let mut adam = Adam::new(params.len(), config.learning_rate);
    let mut shuffle_rng = stream_rng(config.seed, Stream::Shuffle);
    let mut order: Vec<usize> = (0..train_x.len()).collect();
    let mut trace = TrainTrace::default();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut stale = 0;

    for epoch in 1..=config.max_epochs {
        let started = Instant::now();
        order.shuffle(&mut shuffle_rng);
        for batch in order.chunks(config.batch_size) {
            let bx: Vec<&[f64]> = batch.iter().map(|&i| train_x[i]).collect();
            let by: Vec<usize> = batch.iter().map(|&i| train_y[i]).collect();
            let (_, grad) = loss_and_grad(&model, &bx, &by, config.gradient_backend)?;
            adam.step(&mut params, &grad)?;
            model.set_parameters(&params)?;
        }
        let train_eval = evaluate(&model, &train_x, &train_y)?;
        let val_eval = evaluate(&model, &val_x, &val_y)?;
        if !val_eval.loss.is_finite() {
            return Err(QmoeError::Training(format!(
                "validation loss diverged at epoch {epoch}"
            )));
        }
        trace.records.push(EpochRecord {
            epoch,
            train_loss: train_eval.loss,
            val_loss: val_eval.loss,
            train_acc: train_eval.accuracy,
            val_acc: val_eval.accuracy,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
            utilization: train_eval.utilization,
        });
        let improved = best.as_ref().is_none_or(|(b, _)| val_eval.loss < b - config.min_delta);
        if improved {
            best = Some((val_eval.loss, params.clone()));
            trace.best_epoch = Some(epoch);
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.early_stop_patience {
                break;
            }
        }
    }
    if let Some((_, p)) = best {
        model.set_parameters(&p)?;
    }
    Ok((model, trace))
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::models::{LinearExpert, LinearRouter, ModelSpec, RouterSpec};
    use crate::quantum::ExpertMapping;

    #[test]
    fn adam_zero_gradient_is_a_no_op() {
        let mut adam = Adam::new(3, 0.01);
        let mut p = vec![0.5, -1.0, 2.0];
        adam.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![0.5, -1.0, 2.0]);
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut adam = Adam::new(2, 0.01);
        let mut p = vec![1.0, 1.0];
        adam.step(&mut p, &[3.0, -0.2]).unwrap();
        assert_abs_diff_eq!(p[0], 1.0 - 0.01, epsilon = 1e-9);
        assert_abs_diff_eq!(p[1], 1.0 + 0.01, epsilon = 1e-7);
    }

    #[test]
    fn adam_is_deterministic_and_checks_shapes() {
        let run = || {
            let mut adam = Adam::new(2, 0.05);
            let mut p = vec![0.3, 0.7];
            for _ in 0..5 {
                adam.step(&mut p, &[0.1, -0.4]).unwrap();
            }
            p
        };
        assert_eq!(
            run().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            run().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert!(Adam::new(2, 0.1).step(&mut [0.0; 3], &[0.0; 3]).is_err());
    }

    fn fixed_model(bias: [f64; 2]) -> HybridModel {
        let expert = LinearExpert {
            layer: Dense {
                rows: 2,
                cols: 2,
                weights: vec![0.0; 4],
                bias: bias.to_vec(),
            },
        };
        HybridModel::new(
            Router::Linear(LinearRouter {
                layer: Dense::zeros(2, 2),
            }),
            vec![expert.clone(), expert],
            2,
            2,
        )
        .unwrap()
    }

    #[test]
    fn cross_entropy_examples() {
        let x: Vec<&[f64]> = vec![&[0.3, 0.4]];
        let (loss, _) = loss_and_grad(&fixed_model([0.0, 0.0]), &x, &[1], GradientBackend::Adjoint).unwrap();
        assert_abs_diff_eq!(loss, 2f64.ln(), epsilon = 1e-12);

        let (loss, grad) = loss_and_grad(&fixed_model([-40.0, 40.0]), &x, &[1], GradientBackend::Adjoint).unwrap();
        assert!(loss < 1e-12);
        assert!(grad.iter().all(|g| g.abs() < 1e-12));
    }

    #[test]
    fn loss_and_grad_errors() {
        let m = fixed_model([0.0, 0.0]);
        assert!(loss_and_grad(&m, &[], &[], GradientBackend::Adjoint).is_err());
        let x: Vec<&[f64]> = vec![&[0.3, 0.4]];
        assert!(loss_and_grad(&m, &x, &[2], GradientBackend::Adjoint).is_err());
    }

    fn fd_check(model: &HybridModel, xs: &[&[f64]], ys: &[usize], backend: GradientBackend) {
        let (_, grad) = loss_and_grad(model, xs, ys, backend).unwrap();
        let p0 = model.parameters();
        let h = 1e-5;
        let mut probe = model.clone();
        for j in 0..p0.len() {
            let mut p = p0.clone();
            p[j] += h;
            probe.set_parameters(&p).unwrap();
            let up = loss_and_grad(&probe, xs, ys, backend).unwrap().0;
            p[j] -= 2.0 * h;
            probe.set_parameters(&p).unwrap();
            let down = loss_and_grad(&probe, xs, ys, backend).unwrap().0;
            let fd = (up - down) / (2.0 * h);
            let tol = f64::max(1e-4, 1e-3 * grad[j].abs());
            assert!(
                (fd - grad[j]).abs() <= tol,
                "param {j}: analytic {} vs fd {fd}",
                grad[j]
            );
        }
    }

    #[test]
    fn gradients_match_finite_differences_for_all_backends() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let xs: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..2).map(|_| rng.random_range(0.0..3.0)).collect())
            .collect();
        let xr: Vec<&[f64]> = xs.iter().map(|v| v.as_slice()).collect();
        let ys = [0, 1, 1, 0];
        let spec = ModelSpec {
            name: "B".into(),
            router: RouterSpec::Quantum {
                n_qubits: None,
                n_layers: 3,
                mapping: ExpertMapping::Modulo,
            },
            n_experts: 3,
        };
        let mut model = HybridModel::init(&spec, 2, 2, &mut rng).unwrap();
        let wide: Vec<f64> = model.parameters().iter().map(|v| v * 10.0).collect();
        model.set_parameters(&wide).unwrap();
        for backend in [
            GradientBackend::Adjoint,
            GradientBackend::ParameterShift,
            GradientBackend::FiniteDiff,
        ] {
            fd_check(&model, &xr, &ys, backend);
        }
        let deep = ModelSpec {
            name: "C".into(),
            router: RouterSpec::Deep { hidden: vec![3, 4] },
            n_experts: 2,
        };
        fd_check(
            &HybridModel::init(&deep, 2, 2, &mut rng).unwrap(),
            &xr,
            &ys,
            GradientBackend::Adjoint,
        );
    }

    fn tiny_dataset() -> Dataset {
        let features = vec![
            vec![0.2, 0.3],
            vec![2.8, 2.9],
            vec![0.1, 0.5],
            vec![2.9, 2.6],
            vec![0.4, 0.2],
            vec![2.7, 3.0],
        ];
        Dataset::new(features, vec![0, 1, 0, 1, 0, 1], 2, vec![]).unwrap()
    }

    fn linear_spec() -> ModelSpec {
        ModelSpec {
            name: "A".into(),
            router: RouterSpec::Linear,
            n_experts: 2,
        }
    }

    #[test]
    fn zero_epochs_returns_initial_model() {
        let model = HybridModel::init(&linear_spec(), 2, 2, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let cfg = TrainConfig {
            max_epochs: 0,
            ..TrainConfig::default()
        };
        let (out, trace) = fit(model.clone(), &tiny_dataset(), &cfg).unwrap();
        assert_eq!(out, model);
        assert!(trace.records.is_empty());
    }

    #[test]
    fn separable_pair_is_learned() {
        let ds = Dataset::new(vec![vec![0.5, 0.5], vec![2.5, 2.5]], vec![0, 1], 2, vec![]).unwrap();
        let ds = Dataset::with_splits(
            [ds.features().to_vec(), ds.features().to_vec()].concat(),
            vec![0, 1, 0, 1],
            vec![Split::Train, Split::Train, Split::Val, Split::Val],
            2,
            vec![],
        )
        .unwrap();
        let model = HybridModel::init(&linear_spec(), 2, 2, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let cfg = TrainConfig {
            max_epochs: 50,
            batch_size: 2,
            learning_rate: 0.05,
            early_stop_patience: 50,
            ..TrainConfig::default()
        };
        let (trained, trace) = fit(model, &ds, &cfg).unwrap();
        let xs: Vec<&[f64]> = ds.rows(Split::Train);
        assert_eq!(evaluate(&trained, &xs, &[0, 1]).unwrap().accuracy, 1.0);
        assert!(trace.records.len() <= 50);
    }

    #[test]
    fn fit_rejects_degenerate_inputs() {
        let model = HybridModel::init(&linear_spec(), 2, 2, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let one_class = Dataset::new(vec![vec![0.0, 0.0]; 10], vec![1; 10], 2, vec![]).unwrap();
        let cfg = TrainConfig {
            batch_size: 2,
            ..TrainConfig::default()
        };
        assert!(matches!(fit(model.clone(), &one_class, &cfg), Err(QmoeError::Data(_))));
        let cfg = TrainConfig {
            batch_size: 32,
            ..TrainConfig::default()
        };
        assert!(matches!(
            fit(model.clone(), &tiny_dataset(), &cfg),
            Err(QmoeError::Training(_))
        ));
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(matches!(fit(model, &tiny_dataset(), &cfg), Err(QmoeError::Config(_))));
    }

    #[test]
    fn early_stopping_returns_best_snapshot() {
        let ds = crate::datasets::make_two_moons(120, 0.2, 5).unwrap();
        let (ds, _) = crate::datasets::scale_dataset(ds).unwrap();
        let model = HybridModel::init(&linear_spec(), 2, 2, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let cfg = TrainConfig {
            max_epochs: 60,
            batch_size: 8,
            early_stop_patience: 3,
            learning_rate: 0.2,
            ..TrainConfig::default()
        };
        let (trained, trace) = fit(model, &ds, &cfg).unwrap();
        let best = trace.best_val_loss().unwrap();
        assert!(trace
            .records
            .iter()
            .all(|r| r.val_loss >= best - 1e-15 || r.epoch > trace.best_epoch.unwrap()));
        let (_, val) = train_val_indices(&ds, &cfg);
        let vx: Vec<&[f64]> = val.iter().map(|&i| ds.features()[i].as_slice()).collect();
        let vy: Vec<usize> = val.iter().map(|&i| ds.labels()[i]).collect();
        let reval = evaluate(&trained, &vx, &vy).unwrap();
        assert_eq!(reval.loss.to_bits(), best.to_bits());
    }
}

//! Small per-point classifier: a two-hidden-layer perceptron with tanh
//! activations and a softmax head, trained by momentum SGD. Cross entropy is
//! the main loss; generalized and symmetric cross entropy are provided as
//! robust-loss baselines. All gradients are exact.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::seed::{self, Stream};
use crate::{ClassId, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub input: usize,
    pub hidden: usize,
    pub classes: usize,
}

/// Weights and biases for input -> hidden -> hidden -> classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub w3: Array2<f64>,
    pub b3: Array1<f64>,
}

impl ModelParams {
    pub fn dims(&self) -> Dims {
        Dims {
            input: self.w1.nrows(),
            hidden: self.w1.ncols(),
            classes: self.w3.ncols(),
        }
    }

    pub fn zeros(dims: Dims) -> Self {
        ModelParams {
            w1: Array2::zeros((dims.input, dims.hidden)),
            b1: Array1::zeros(dims.hidden),
            w2: Array2::zeros((dims.hidden, dims.hidden)),
            b2: Array1::zeros(dims.hidden),
            w3: Array2::zeros((dims.hidden, dims.classes)),
            b3: Array1::zeros(dims.classes),
        }
    }

    /// Seeded uniform init in +-sqrt(6 / (fan_in + fan_out)); biases zero.
    pub fn init(dims: Dims, seed_value: u64) -> Self {
        let mut rng = seed::rng(seed_value, Stream::ModelInit, 0, 0);
        let mut layer = |fan_in: usize, fan_out: usize| -> Array2<f64> {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let mut w = Array2::zeros((fan_in, fan_out));
            for v in w.iter_mut() {
                *v = rng.random_range(-bound..=bound);
            }
            w
        };
        ModelParams {
            w1: layer(dims.input, dims.hidden),
            b1: Array1::zeros(dims.hidden),
            w2: layer(dims.hidden, dims.hidden),
            b2: Array1::zeros(dims.hidden),
            w3: layer(dims.hidden, dims.classes),
            b3: Array1::zeros(dims.classes),
        }
    }

    /// Flat parameter vector in the fixed order w1, b1, w2, b2, w3, b3
    /// (row-major matrices). Used by the checkpoint format and by
    /// finite-difference tests.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        out.extend(self.w1.iter());
        out.extend(self.b1.iter());
        out.extend(self.w2.iter());
        out.extend(self.b2.iter());
        out.extend(self.w3.iter());
        out.extend(self.b3.iter());
        out
    }

    pub fn from_flat(dims: Dims, flat: &[f64]) -> Result<Self> {
        let counts = [
            dims.input * dims.hidden,
            dims.hidden,
            dims.hidden * dims.hidden,
            dims.hidden,
            dims.hidden * dims.classes,
            dims.classes,
        ];
        let total: usize = counts.iter().sum();
        if flat.len() != total {
            return Err(Error::ckpt(format!(
                "expected {total} values, got {}",
                flat.len()
            )));
        }
        let mut at = 0;
        let mut take = |count: usize| {
            let slice = &flat[at..at + count];
            at += count;
            slice.to_vec()
        };
        Ok(ModelParams {
            w1: Array2::from_shape_vec((dims.input, dims.hidden), take(counts[0])).unwrap(),
            b1: Array1::from_vec(take(counts[1])),
            w2: Array2::from_shape_vec((dims.hidden, dims.hidden), take(counts[2])).unwrap(),
            b2: Array1::from_vec(take(counts[3])),
            w3: Array2::from_shape_vec((dims.hidden, dims.classes), take(counts[4])).unwrap(),
            b3: Array1::from_vec(take(counts[5])),
        })
    }

    fn for_each_pair(&mut self, other: &ModelParams, mut f: impl FnMut(&mut f64, f64)) {
        for (a, b) in self.w1.iter_mut().zip(other.w1.iter()) {
            f(a, *b);
        }
        for (a, b) in self.b1.iter_mut().zip(other.b1.iter()) {
            f(a, *b);
        }
        for (a, b) in self.w2.iter_mut().zip(other.w2.iter()) {
            f(a, *b);
        }
        for (a, b) in self.b2.iter_mut().zip(other.b2.iter()) {
            f(a, *b);
        }
        for (a, b) in self.w3.iter_mut().zip(other.w3.iter()) {
            f(a, *b);
        }
        for (a, b) in self.b3.iter_mut().zip(other.b3.iter()) {
            f(a, *b);
        }
    }
}

/// Training loss selector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum LossKind {
    Ce,
    Gce {
        q_gce: f64,
    },
    Sce {
        alpha: f64,
        beta: f64,
        /// Stand-in for log(0) of the zero one-hot entries in the reverse
        /// term.
        log_zero_floor: f64,
    },
}

impl LossKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LossKind::Ce => Ok(()),
            LossKind::Gce { q_gce } => {
                if q_gce > 0.0 && q_gce <= 1.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidConfig("q_gce must lie in (0, 1]".into()))
                }
            }
            LossKind::Sce { alpha, beta, .. } => {
                if alpha > 0.0 && beta > 0.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidConfig(
                        "sce alpha and beta must be positive".into(),
                    ))
                }
            }
        }
    }
}

struct ForwardPass {
    a1: Array2<f64>,
    a2: Array2<f64>,
    probs: Array2<f64>,
}

fn forward_full(params: &ModelParams, features: &Array2<f64>) -> Result<ForwardPass> {
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let a1 = (features.dot(&params.w1) + &params.b1).mapv(f64::tanh);
    let a2 = (a1.dot(&params.w2) + &params.b2).mapv(f64::tanh);
    let mut logits = a2.dot(&params.w3) + &params.b3;
    // Row-stable softmax.
    for mut row in logits.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|z| (z - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|e| e / sum);
    }
    Ok(ForwardPass {
        a1,
        a2,
        probs: logits,
    })
}

/// Row-wise class probabilities, each row summing to 1.
pub fn forward(params: &ModelParams, features: &Array2<f64>) -> Result<Array2<f64>> {
    forward_full(params, features).map(|f| f.probs)
}

fn argmax_row(row: &[f64]) -> ClassId {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Predicted class per row: argmax of the forward pass, ties to the lowest
/// class id.
pub fn predict(params: &ModelParams, features: &Array2<f64>) -> Result<Vec<ClassId>> {
    let probs = forward(params, features)?;
    Ok(probs
        .rows()
        .into_iter()
        .map(|r| argmax_row(r.as_slice().unwrap()))
        .collect())
}

pub struct LossOutput {
    pub loss: f64,
    pub grad: ModelParams,
    /// True when every mask entry was zero; loss and gradient are then zero.
    pub all_masked: bool,
}

/// Masked mean loss and its exact gradient. `mask` entries are 0/1 weights;
/// the mean runs over the mask-1 points.
pub fn loss_and_grad(
    params: &ModelParams,
    features: &Array2<f64>,
    labels: &[ClassId],
    mask: &[f64],
    kind: &LossKind,
) -> Result<LossOutput> {
    kind.validate()?;
    let dims = params.dims();
    let n = features.nrows();
    if labels.len() != n || mask.len() != n {
        return Err(Error::InvalidConfig(
            "labels and mask must match the batch size".into(),
        ));
    }
    for &label in labels {
        if label >= dims.classes {
            return Err(Error::LabelOutOfRange {
                label,
                num_classes: dims.classes,
            });
        }
    }
    let weight: f64 = mask.iter().sum();
    if weight == 0.0 {
        return Ok(LossOutput {
            loss: 0.0,
            grad: ModelParams::zeros(dims),
            all_masked: true,
        });
    }

    let pass = forward_full(params, features)?;
    let probs = &pass.probs;
    let floor = f64::MIN_POSITIVE;

    let mut loss = 0.0;
    // d loss / d logits, already carrying the masked-mean weight per row.
    let mut dz3 = Array2::<f64>::zeros((n, dims.classes));
    for i in 0..n {
        if mask[i] == 0.0 {
            continue;
        }
        let w = mask[i] / weight;
        let y = labels[i];
        let py = probs[[i, y]];
        match *kind {
            LossKind::Ce => {
                loss += w * -(py.max(floor).ln());
                for j in 0..dims.classes {
                    dz3[[i, j]] = w * (probs[[i, j]] - f64::from(j == y));
                }
            }
            LossKind::Gce { q_gce } => {
                loss += w * (1.0 - py.powf(q_gce)) / q_gce;
                let scale = py.powf(q_gce);
                for j in 0..dims.classes {
                    dz3[[i, j]] = w * scale * (probs[[i, j]] - f64::from(j == y));
                }
            }
            LossKind::Sce {
                alpha,
                beta,
                log_zero_floor,
            } => {
                let ce = -(py.max(floor).ln());
                let rce = -log_zero_floor * (1.0 - py);
                loss += w * (alpha * ce + beta * rce);
                // d rce / d z_j = p_j * (s - c_j) with c_y = 0, c_other = A,
                // s = A * (1 - p_y).
                let s = log_zero_floor * (1.0 - py);
                for j in 0..dims.classes {
                    let c = if j == y { 0.0 } else { log_zero_floor };
                    let dce = probs[[i, j]] - f64::from(j == y);
                    let drce = probs[[i, j]] * (s - c);
                    dz3[[i, j]] = w * (alpha * dce + beta * drce);
                }
            }
        }
    }

    // Backprop through the two tanh layers.
    let grad_w3 = pass.a2.t().dot(&dz3);
    let grad_b3 = dz3.sum_axis(Axis(0));
    let da2 = dz3.dot(&params.w3.t());
    let dz2 = &da2 * &pass.a2.mapv(|a| 1.0 - a * a);
    let grad_w2 = pass.a1.t().dot(&dz2);
    let grad_b2 = dz2.sum_axis(Axis(0));
    let da1 = dz2.dot(&params.w2.t());
    let dz1 = &da1 * &pass.a1.mapv(|a| 1.0 - a * a);
    let grad_w1 = features.t().dot(&dz1);
    let grad_b1 = dz1.sum_axis(Axis(0));

    Ok(LossOutput {
        loss,
        grad: ModelParams {
            w1: grad_w1,
            b1: grad_b1,
            w2: grad_w2,
            b2: grad_b2,
            w3: grad_w3,
            b3: grad_b3,
        },
        all_masked: false,
    })
}

/// Classic momentum state: v <- mu v + g, p <- p - lr v.
#[derive(Debug, Clone)]
pub struct SgdMomentum {
    pub momentum: f64,
    velocity: ModelParams,
}

impl SgdMomentum {
    pub fn new(dims: Dims, momentum: f64) -> Self {
        SgdMomentum {
            momentum,
            velocity: ModelParams::zeros(dims),
        }
    }

    pub fn step(&mut self, params: &mut ModelParams, grad: &ModelParams, lr: f64) {
        let mu = self.momentum;
        self.velocity.for_each_pair(grad, |v, g| *v = mu * *v + g);
        params.for_each_pair(&self.velocity, |p, v| *p -= lr * v);
    }
}

/// Checkpoint format "PNALMLP v1": a `PNALMLP 1 <in> <hidden> <classes>`
/// header followed by one line per array (w1 b1 w2 b2 w3 b3, matrices
/// row-major), values space-separated with shortest round-trip formatting.
pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<()> {
    let dims = params.dims();
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "PNALMLP 1 {} {} {}", dims.input, dims.hidden, dims.classes)?;
    let arrays: [&[f64]; 6] = [
        params.w1.as_slice().unwrap(),
        params.b1.as_slice().unwrap(),
        params.w2.as_slice().unwrap(),
        params.b2.as_slice().unwrap(),
        params.w3.as_slice().unwrap(),
        params.b3.as_slice().unwrap(),
    ];
    for arr in arrays {
        let line: Vec<String> = arr.iter().map(|v| format!("{v}")).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::MissingInput(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::ckpt("missing header"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 5 || fields[0] != "PNALMLP" || fields[1] != "1" {
        return Err(Error::ckpt(format!("bad header: {header:?}")));
    }
    let parse = |s: &str| -> Result<usize> {
        s.parse().map_err(|_| Error::ckpt(format!("bad dim {s:?}")))
    };
    let dims = Dims {
        input: parse(fields[2])?,
        hidden: parse(fields[3])?,
        classes: parse(fields[4])?,
    };
    let mut flat = Vec::new();
    for line in lines {
        for tok in line.split_whitespace() {
            flat.push(
                tok.parse::<f64>()
                    .map_err(|_| Error::ckpt(format!("bad value {tok:?}")))?,
            );
        }
    }
    ModelParams::from_flat(dims, &flat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use tempfile::tempdir;

    const DIMS: Dims = Dims {
        input: 4,
        hidden: 3,
        classes: 6,
    };

    fn random_features(n: usize, dims: Dims, seed_value: u64) -> Array2<f64> {
        let mut rng = seed::rng(seed_value, Stream::ModelInit, 1, 0);
        let mut x = Array2::zeros((n, dims.input));
        for v in x.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        x
    }

    #[test]
    fn zero_params_give_uniform_rows() {
        let params = ModelParams::zeros(DIMS);
        let probs = forward(&params, &random_features(5, DIMS, 0)).unwrap();
        for row in probs.rows() {
            for &p in row {
                assert!((p - 1.0 / 6.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn rows_sum_to_one() {
        let params = ModelParams::init(DIMS, 3);
        let probs = forward(&params, &random_features(20, DIMS, 1)).unwrap();
        for row in probs.rows() {
            assert!((row.sum() - 1.0).abs() <= 1e-9);
            assert!(row.iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn output_bias_shift_leaves_probabilities_unchanged() {
        let params = ModelParams::init(DIMS, 5);
        let mut shifted = params.clone();
        shifted.b3.mapv_inplace(|b| b + 13.7);
        let x = random_features(8, DIMS, 2);
        let a = forward(&params, &x).unwrap();
        let b = forward(&shifted, &x).unwrap();
        for (pa, pb) in a.iter().zip(b.iter()) {
            assert!((pa - pb).abs() < 1e-12);
        }
        assert_eq!(predict(&params, &x).unwrap(), predict(&shifted, &x).unwrap());
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let params = ModelParams::zeros(DIMS);
        let mut x = random_features(2, DIMS, 3);
        x[[0, 0]] = f64::NAN;
        assert!(matches!(forward(&params, &x), Err(Error::NonFiniteInput)));
    }

    #[test]
    fn ce_loss_is_zero_for_confident_correct_prediction() {
        // Zero weights route the logits through b3 alone.
        let dims = Dims {
            input: 1,
            hidden: 1,
            classes: 2,
        };
        let mut params = ModelParams::zeros(dims);
        params.b3 = array![60.0, -60.0];
        let x = array![[0.0]];
        let out = loss_and_grad(&params, &x, &[0], &[1.0], &LossKind::Ce).unwrap();
        assert!(out.loss.abs() < 1e-12);
    }

    #[test]
    fn ce_loss_of_uniform_prediction_is_ln_m() {
        let params = ModelParams::zeros(DIMS);
        let x = random_features(3, DIMS, 4);
        let out = loss_and_grad(&params, &x, &[0, 5, 2], &[1.0; 3], &LossKind::Ce).unwrap();
        assert!((out.loss - 6.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn all_zero_mask_is_flagged() {
        let params = ModelParams::init(DIMS, 7);
        let x = random_features(4, DIMS, 5);
        let out = loss_and_grad(&params, &x, &[0; 4], &[0.0; 4], &LossKind::Ce).unwrap();
        assert!(out.all_masked);
        assert_eq!(out.loss, 0.0);
        assert!(out.grad.to_flat().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn masked_points_do_not_affect_the_loss() {
        let params = ModelParams::init(DIMS, 9);
        let x = random_features(6, DIMS, 6);
        let mask = [1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        let labels_a = [0, 1, 2, 3, 4, 5];
        let labels_b = [0, 4, 2, 1, 4, 0]; // masked labels perturbed
        let a = loss_and_grad(&params, &x, &labels_a, &mask, &LossKind::Ce).unwrap();
        let b = loss_and_grad(&params, &x, &labels_b, &mask, &LossKind::Ce).unwrap();
        assert_eq!(a.loss, b.loss);
        assert_eq!(a.grad.to_flat(), b.grad.to_flat());
    }

    /// Central finite differences over every parameter.
    fn numeric_grad(
        params: &ModelParams,
        x: &Array2<f64>,
        labels: &[ClassId],
        mask: &[f64],
        kind: &LossKind,
        h: f64,
    ) -> Vec<f64> {
        let dims = params.dims();
        let flat = params.to_flat();
        let mut grad = Vec::with_capacity(flat.len());
        for i in 0..flat.len() {
            let mut plus = flat.clone();
            plus[i] += h;
            let mut minus = flat.clone();
            minus[i] -= h;
            let lp = loss_and_grad(&ModelParams::from_flat(dims, &plus).unwrap(), x, labels, mask, kind)
                .unwrap()
                .loss;
            let lm = loss_and_grad(&ModelParams::from_flat(dims, &minus).unwrap(), x, labels, mask, kind)
                .unwrap()
                .loss;
            grad.push((lp - lm) / (2.0 * h));
        }
        grad
    }

    fn relative_l2_error(a: &[f64], b: &[f64]) -> f64 {
        let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
        diff / norm.max(1e-12)
    }

    #[test]
    fn gradients_match_finite_differences() {
        let kinds = [
            LossKind::Ce,
            LossKind::Gce { q_gce: 0.7 },
            LossKind::Sce {
                alpha: 0.1,
                beta: 1.0,
                log_zero_floor: -4.0,
            },
        ];
        let params = ModelParams::init(DIMS, 11);
        let x = random_features(5, DIMS, 7);
        let labels = [0, 2, 5, 1, 3];
        let mask = [1.0, 1.0, 0.0, 1.0, 1.0];
        for kind in kinds {
            let analytic = loss_and_grad(&params, &x, &labels, &mask, &kind).unwrap();
            let numeric = numeric_grad(&params, &x, &labels, &mask, &kind, 1e-5);
            let err = relative_l2_error(&analytic.grad.to_flat(), &numeric);
            assert!(err <= 1e-4, "{kind:?}: relative error {err}");
        }
    }

    #[test]
    fn sgd_zero_grad_and_zero_lr_leave_params_unchanged() {
        let params = ModelParams::init(DIMS, 13);
        let zero_grad = ModelParams::zeros(DIMS);

        let mut p = params.clone();
        let mut opt = SgdMomentum::new(DIMS, 0.9);
        opt.step(&mut p, &zero_grad, 0.1);
        assert_eq!(p, params);

        let mut p = params.clone();
        let x = random_features(2, DIMS, 8);
        let out = loss_and_grad(&p, &x, &[0, 1], &[1.0, 1.0], &LossKind::Ce).unwrap();
        let mut opt = SgdMomentum::new(DIMS, 0.9);
        opt.step(&mut p, &out.grad, 0.0);
        assert_eq!(p, params);
    }

    #[test]
    fn sgd_step_decreases_convex_loss() {
        let mut params = ModelParams::init(DIMS, 17);
        let x = random_features(1, DIMS, 9);
        let labels = [4];
        let before = loss_and_grad(&params, &x, &labels, &[1.0], &LossKind::Ce).unwrap();
        let mut opt = SgdMomentum::new(DIMS, 0.0);
        opt.step(&mut params, &before.grad, 0.01);
        let after = loss_and_grad(&params, &x, &labels, &[1.0], &LossKind::Ce).unwrap();
        assert!(after.loss < before.loss);
    }

    #[test]
    fn predict_breaks_ties_toward_lowest_class() {
        let dims = Dims {
            input: 1,
            hidden: 1,
            classes: 3,
        };
        let mut params = ModelParams::zeros(dims);
        params.b3 = array![1.0, 1.0, 0.0];
        let preds = predict(&params, &array![[0.0]]).unwrap();
        assert_eq!(preds, vec![0]);
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let params = ModelParams::init(DIMS, 19);
        save_checkpoint(&params, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(params, back);
    }

    #[test]
    fn loss_kind_validation() {
        assert!(LossKind::Gce { q_gce: 0.0 }.validate().is_err());
        assert!(LossKind::Gce { q_gce: 1.0 }.validate().is_ok());
        assert!(LossKind::Sce {
            alpha: 0.0,
            beta: 1.0,
            log_zero_floor: -4.0
        }
        .validate()
        .is_err());
    }
}

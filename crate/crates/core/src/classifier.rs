//! Fully connected ReLU network for NB-vs-B classification of one direction's
//! 33 features, trained full-batch with Adam on cross-entropy.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurize::{derive_seed, direction_columns, FeatureMatrix};
use crate::signal::{Condition, Direction};
use crate::stats::{Scope, Standardizer};

pub const N_RUNS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpConfig {
    pub hidden_layers: usize,
    pub units: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    /// 0 means full batch.
    pub batch_size: usize,
    pub train_fraction: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden_layers: 6,
            units: 64,
            learning_rate: 1e-3,
            epochs: 2500,
            batch_size: 0,
            train_fraction: 0.8,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str| {
            Err(Error::Config {
                key: format!("mlp.{key}"),
                reason: "must be positive".into(),
            })
        };
        if self.hidden_layers == 0 {
            return bad("hidden_layers");
        }
        if self.units == 0 {
            return bad("units");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate");
        }
        if self.epochs == 0 {
            return bad("epochs");
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config {
                key: "mlp.train_fraction".into(),
                reason: "must lie in (0, 1)".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    /// out × in
    w: DMatrix<f64>,
    b: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
}

/// Gradients with the same shapes as the layers.
#[derive(Debug, Clone)]
pub struct Grads {
    pub w: Vec<DMatrix<f64>>,
    pub b: Vec<DVector<f64>>,
}

impl Mlp {
    /// Weights and biases uniform in ±1/sqrt(fan_in).
    pub fn new(n_in: usize, hidden_layers: usize, units: usize, n_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut sizes = vec![n_in];
        sizes.extend(std::iter::repeat(units).take(hidden_layers));
        sizes.push(n_out);
        let layers = sizes
            .windows(2)
            .map(|s| {
                let bound = 1.0 / (s[0] as f64).sqrt();
                Layer {
                    w: DMatrix::from_fn(s[1], s[0], |_, _| rng.gen_range(-bound..bound)),
                    b: DVector::from_fn(s[1], |_, _| rng.gen_range(-bound..bound)),
                }
            })
            .collect();
        Mlp { layers }
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    /// Logits, one row per input row.
    pub fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.activations(x).pop().expect("at least one layer")
    }

    fn activations(&self, x: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
        let mut acts = vec![x.clone()];
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = acts[l].clone() * layer.w.transpose();
            for mut row in z.row_iter_mut() {
                row += layer.b.transpose();
            }
            if l < last {
                z.apply(|v| *v = v.max(0.0));
            }
            acts.push(z);
        }
        acts
    }

    /// Mean cross-entropy of softmax(logits) against `labels`.
    pub fn loss(&self, x: &DMatrix<f64>, labels: &[usize]) -> f64 {
        let logits = self.forward(x);
        cross_entropy(&logits, labels).0
    }

    pub fn loss_and_grad(&self, x: &DMatrix<f64>, labels: &[usize]) -> (f64, Grads) {
        let acts = self.activations(x);
        let (loss, mut delta) = cross_entropy(acts.last().expect("logits"), labels);
        let n_layers = self.layers.len();
        let mut gw = vec![DMatrix::zeros(0, 0); n_layers];
        let mut gb = vec![DVector::zeros(0); n_layers];
        for l in (0..n_layers).rev() {
            gw[l] = delta.transpose() * &acts[l];
            gb[l] = DVector::from_iterator(delta.ncols(), delta.column_iter().map(|c| c.sum()));
            if l > 0 {
                let mut back = &delta * &self.layers[l].w;
                back.zip_apply(&acts[l], |g, a| {
                    if a <= 0.0 {
                        *g = 0.0
                    }
                });
                delta = back;
            }
        }
        (loss, Grads { w: gw, b: gb })
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<usize> {
        let logits = self.forward(x);
        logits
            .row_iter()
            .map(|r| {
                let mut best = 0;
                for k in 1..r.len() {
                    if r[k] > r[best] {
                        best = k;
                    }
                }
                best
            })
            .collect()
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.w.iter_mut().chain(l.b.iter_mut()))
    }
}

impl Grads {
    pub fn flat(&self) -> Vec<f64> {
        self.w
            .iter()
            .zip(&self.b)
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
            .collect()
    }
}

/// Mean loss and its gradient with respect to the logits.
fn cross_entropy(logits: &DMatrix<f64>, labels: &[usize]) -> (f64, DMatrix<f64>) {
    let n = logits.nrows();
    let mut grad = DMatrix::zeros(n, logits.ncols());
    let mut loss = 0.0;
    for i in 0..n {
        let row = logits.row(i);
        let m = row.max();
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        loss += lse - row[labels[i]];
        for k in 0..row.len() {
            let p = (row[k] - lse).exp();
            grad[(i, k)] = (p - (k == labels[i]) as usize as f64) / n as f64;
        }
    }
    (loss / n as f64, grad)
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, model: &mut Mlp, grad: &[f64], cfg: &MlpConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        for (i, p) in model.params_mut().enumerate() {
            let g = grad[i];
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g;
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            *p -= cfg.learning_rate * mh / (vh.sqrt() + cfg.epsilon);
        }
    }
}

/// A trained network plus the standardization fitted on its training rows.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub mlp: Mlp,
    pub standardizer: Standardizer,
    /// Training loss per epoch.
    pub losses: Vec<f64>,
}

pub fn to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let p = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j])
}

/// Trains on raw feature rows (NA allowed); standardization is fitted here.
pub fn train(cfg: &MlpConfig, rows: &[&[Option<f64>]], labels: &[usize], seed: u64) -> Result<TrainedModel> {
    cfg.validate()?;
    let standardizer = Standardizer::fit(rows)?;
    let x = to_matrix(&rows.iter().map(|r| standardizer.apply(r)).collect::<Vec<_>>());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mlp = Mlp::new(x.ncols(), cfg.hidden_layers, cfg.units, 2, &mut rng);
    let n_params = mlp.params_mut().count();
    let mut adam = Adam::new(n_params);
    let mut losses = Vec::with_capacity(cfg.epochs);
    let n = x.nrows();
    let batch = if cfg.batch_size == 0 || cfg.batch_size >= n {
        n
    } else {
        cfg.batch_size
    };
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..cfg.epochs {
        let mut epoch_loss = 0.0;
        if batch == n {
            let (loss, g) = mlp.loss_and_grad(&x, labels);
            epoch_loss = loss;
            adam.step(&mut mlp, &g.flat(), cfg);
        } else {
            order.shuffle(&mut rng);
            for chunk in order.chunks(batch) {
                let xb = x.select_rows(chunk);
                let yb: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
                let (loss, g) = mlp.loss_and_grad(&xb, &yb);
                epoch_loss += loss * chunk.len() as f64 / n as f64;
                adam.step(&mut mlp, &g.flat(), cfg);
            }
        }
        if !epoch_loss.is_finite() {
            return Err(Error::NonFiniteLoss(epoch));
        }
        losses.push(epoch_loss);
    }
    Ok(TrainedModel {
        mlp,
        standardizer,
        losses,
    })
}

/// Fraction of rows whose argmax logit matches the label.
pub fn evaluate(model: &TrainedModel, rows: &[&[Option<f64>]], labels: &[usize]) -> Result<f64> {
    if rows.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let x = to_matrix(&rows.iter().map(|r| model.standardizer.apply(r)).collect::<Vec<_>>());
    let pred = model.mlp.predict(&x);
    let correct = pred.iter().zip(labels).filter(|(a, b)| a == b).count();
    Ok(correct as f64 / rows.len() as f64)
}

pub fn label(c: Condition) -> usize {
    match c {
        Condition::NB => 0,
        Condition::B => 1,
    }
}

/// Stratified split of row indices by label: round(fraction · class size) of
/// each class goes to training. Both halves are returned sorted.
pub fn split(labels: &[usize], fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in 0..2 {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.len() < 5 {
            return Err(Error::TooFewRows {
                needed: 5,
                got: idx.len(),
            });
        }
        idx.shuffle(&mut rng);
        let k = (fraction * idx.len() as f64).round() as usize;
        train.extend_from_slice(&idx[..k]);
        test.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub scope: String,
    pub direction: Direction,
    /// `None` for a run that diverged.
    pub accuracies: Vec<Option<f64>>,
    /// Mean over the successful runs.
    pub mean_accuracy: Option<f64>,
    pub final_loss: Vec<Option<f64>>,
    pub train_size: usize,
    pub test_size: usize,
    pub seeds: Vec<u64>,
}

/// Three split/train/evaluate runs with seeds derived from `cfg.seed`.
pub fn run_protocol(fm: &FeatureMatrix, scope: &Scope, direction: Direction, cfg: &MlpConfig) -> Result<TrainReport> {
    cfg.validate()?;
    let cols = direction_columns(direction);
    let rows = scope.rows(fm);
    let feats: Vec<&[Option<f64>]> = rows.iter().map(|r| &r.values[cols.clone()]).collect();
    let labels: Vec<usize> = rows.iter().map(|r| label(r.condition)).collect();
    let mut report = TrainReport {
        scope: scope.label().to_string(),
        direction,
        accuracies: Vec::with_capacity(N_RUNS),
        mean_accuracy: None,
        final_loss: Vec::with_capacity(N_RUNS),
        train_size: 0,
        test_size: 0,
        seeds: Vec::with_capacity(N_RUNS),
    };
    for run in 0..N_RUNS {
        let seed = derive_seed(cfg.seed, &["mlp", scope.label(), direction.label(), &run.to_string()]);
        report.seeds.push(seed);
        let (tr, te) = split(&labels, cfg.train_fraction, seed)?;
        report.train_size = tr.len();
        report.test_size = te.len();
        let pick = |idx: &[usize]| -> (Vec<&[Option<f64>]>, Vec<usize>) {
            (
                idx.iter().map(|&i| feats[i]).collect(),
                idx.iter().map(|&i| labels[i]).collect(),
            )
        };
        let (xtr, ytr) = pick(&tr);
        let (xte, yte) = pick(&te);
        match train(cfg, &xtr, &ytr, seed.wrapping_add(1)) {
            Ok(model) => {
                report.accuracies.push(Some(evaluate(&model, &xte, &yte)?));
                report.final_loss.push(model.losses.last().copied());
            }
            Err(Error::NonFiniteLoss(_)) => {
                report.accuracies.push(None);
                report.final_loss.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    let ok: Vec<f64> = report.accuracies.iter().flatten().copied().collect();
    if !ok.is_empty() {
        report.mean_accuracy = Some(ok.iter().sum::<f64>() / ok.len() as f64);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_arithmetic() {
        let labels: Vec<usize> = (0..100).map(|i| i % 2).collect();
        let (tr, te) = split(&labels, 0.8, 1).unwrap();
        assert_eq!(tr.len(), 80);
        assert_eq!(te.len(), 20);
        assert_eq!(tr.iter().filter(|&&i| labels[i] == 1).count(), 40);
        assert_eq!(split(&labels, 0.8, 1).unwrap(), (tr, te));
    }

    #[test]
    fn split_needs_five_per_class() {
        let labels = vec![0, 0, 0, 0, 0, 1, 1, 1, 1];
        assert!(matches!(split(&labels, 0.8, 1), Err(Error::TooFewRows { .. })));
    }
}

//! One-vs-one RBF SVM over race labels with calibrated probabilities.

use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kernel::{self, KernelMatrix};
use super::platt::{couple, sigmoid_predict, sigmoid_train};
use super::smo;
use super::{ProbVector, SvmError};
use crate::labels::RaceLabel7;

pub const MODEL_FORMAT: &str = "biaskit-svm";
pub const MODEL_VERSION: u32 = 1;
/// Stopping tolerance on the maximal KKT violation.
pub const KKT_TOLERANCE: f64 = 1e-3;
const CV_FOLDS: usize = 3;
const MIN_PROB: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Platt {
    pub a: f64,
    pub b: f64,
}

/// One pairwise machine. `classes.0` is the positive class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryMachine {
    pub classes: (RaceLabel7, RaceLabel7),
    /// Indices into the model's support-vector pool.
    pub sv: Vec<u32>,
    /// `alpha_i * y_i` per support vector.
    pub coef: Vec<f64>,
    pub rho: f64,
    pub platt: Platt,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Kernel {
    Rbf { gamma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    #[serde(rename = "C")]
    pub c: f64,
    pub seed: u64,
    pub feature_dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    /// Classes present in training, in fixed label order.
    pub label_order: Vec<RaceLabel7>,
    pub machines: Vec<BinaryMachine>,
    pub kernel: Kernel,
    pub training_meta: TrainingMeta,
    pub support_vectors: Vec<Vec<f32>>,
    sv_norms: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    label_order: Vec<RaceLabel7>,
    kernel: Kernel,
    training_meta: TrainingMeta,
    sv_count: usize,
    machines: Vec<BinaryMachine>,
}

fn check_features(features: &[Vec<f32>]) -> Result<usize, SvmError> {
    let dim = features.first().map(Vec::len).unwrap_or(0);
    if dim == 0 {
        return Err(SvmError::InvalidFeature("empty feature vectors".into()));
    }
    for (i, f) in features.iter().enumerate() {
        if f.len() != dim {
            return Err(SvmError::InvalidFeature(format!("row {i} has {} dims, expected {dim}", f.len())));
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(SvmError::InvalidFeature(format!("row {i} has a non-finite value")));
        }
    }
    Ok(dim)
}

/// Stratified fold of each row: within each class, members are shuffled by a
/// generator seeded from `seed` and the class size only, so relabeling the
/// classes leaves every fold assignment unchanged.
fn stratified_folds(y: &[f64], seed: u64) -> Vec<usize> {
    let mut fold = vec![0; y.len()];
    for positive in [true, false] {
        let members: Vec<usize> = (0..y.len()).filter(|&k| (y[k] > 0.0) == positive).collect();
        let n = members.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ (n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)));
        for (q, &m) in order.iter().enumerate() {
            fold[members[m]] = q * CV_FOLDS / n;
        }
    }
    fold
}

struct TrainedPair {
    classes: (RaceLabel7, RaceLabel7),
    sv_rows: Vec<usize>,
    coef: Vec<f64>,
    rho: f64,
    platt: Platt,
}

/// Solves the binary problem on `rows` and returns `(sv_rows, coef, rho)`.
fn fit_binary(
    features: &[Vec<f32>],
    norms: &[f64],
    rows: &[usize],
    y: &[f64],
    c: f64,
    gamma: f64,
) -> (Vec<usize>, Vec<f64>, f64) {
    let mut km = KernelMatrix::new(features, norms, rows.to_vec(), gamma);
    let sol = smo::solve(&mut km, y, c, KKT_TOLERANCE);
    let mut sv_rows = Vec::new();
    let mut coef = Vec::new();
    for (k, &a) in sol.alpha.iter().enumerate() {
        if a > 0.0 {
            sv_rows.push(rows[k]);
            coef.push(a * y[k]);
        }
    }
    (sv_rows, coef, sol.rho)
}

fn decision(features: &[Vec<f32>], norms: &[f64], sv_rows: &[usize], coef: &[f64], rho: f64, gamma: f64, x: usize) -> f64 {
    sv_rows
        .iter()
        .zip(coef)
        .map(|(&s, &cf)| cf * kernel::rbf(gamma, &features[s], norms[s], &features[x], norms[x]))
        .sum::<f64>()
        - rho
}

/// Held-out decision values from `CV_FOLDS`-fold cross-validation, then a sigmoid fit.
fn calibrate(features: &[Vec<f32>], norms: &[f64], rows: &[usize], y: &[f64], c: f64, gamma: f64, seed: u64) -> Platt {
    let n = rows.len();
    let folds = stratified_folds(y, seed);
    let mut dec = vec![0.0; n];
    for fold in 0..CV_FOLDS {
        let held: Vec<usize> = (0..n).filter(|&k| folds[k] == fold).collect();
        let train: Vec<usize> = (0..n).filter(|&k| folds[k] != fold).collect();
        let pos = train.iter().filter(|&&k| y[k] > 0.0).count();
        let neg = train.len() - pos;
        if pos == 0 || neg == 0 {
            let v = match (pos, neg) {
                (0, 0) => 0.0,
                (_, 0) => 1.0,
                _ => -1.0,
            };
            held.iter().for_each(|&k| dec[k] = v);
            continue;
        }
        let sub_rows: Vec<usize> = train.iter().map(|&k| rows[k]).collect();
        let sub_y: Vec<f64> = train.iter().map(|&k| y[k]).collect();
        let (sv, cf, rho) = fit_binary(features, norms, &sub_rows, &sub_y, c, gamma);
        for &k in &held {
            dec[k] = decision(features, norms, &sv, &cf, rho, gamma, rows[k]);
        }
    }
    let (a, b) = sigmoid_train(&dec, y);
    Platt { a, b }
}

/// Trains the one-vs-one machines; pairs run in parallel and are collected in order.
pub fn train_svm(
    features: &[Vec<f32>],
    labels: &[RaceLabel7],
    c: f64,
    gamma: f64,
    seed: u64,
) -> Result<SvmModel, SvmError> {
    if features.len() != labels.len() {
        return Err(SvmError::InvalidFeature(format!(
            "{} feature rows but {} labels",
            features.len(),
            labels.len()
        )));
    }
    if !(c > 0.0 && c.is_finite() && gamma > 0.0 && gamma.is_finite()) {
        return Err(SvmError::InvalidFeature(format!("C={c} and gamma={gamma} must be positive and finite")));
    }
    let dim = check_features(features)?;
    let label_order: Vec<RaceLabel7> = RaceLabel7::ALL.iter().copied().filter(|l| labels.contains(l)).collect();
    if label_order.len() < 2 {
        return Err(SvmError::DegenerateTraining(format!("{} class(es) present", label_order.len())));
    }
    let norms: Vec<f64> = features.iter().map(|f| kernel::squared_norm(f)).collect();

    let mut pairs = Vec::new();
    for i in 0..label_order.len() {
        for j in i + 1..label_order.len() {
            pairs.push((label_order[i], label_order[j]));
        }
    }
    let trained: Vec<TrainedPair> = pairs
        .par_iter()
        .map(|&(pos, neg)| {
            let rows: Vec<usize> = (0..labels.len()).filter(|&k| labels[k] == pos || labels[k] == neg).collect();
            let y: Vec<f64> = rows.iter().map(|&k| if labels[k] == pos { 1.0 } else { -1.0 }).collect();
            let platt = calibrate(features, &norms, &rows, &y, c, gamma, seed);
            let (sv_rows, coef, rho) = fit_binary(features, &norms, &rows, &y, c, gamma);
            TrainedPair { classes: (pos, neg), sv_rows, coef, rho, platt }
        })
        .collect();

    // Shared pool of support vectors, ordered by training row.
    let mut pool_rows: Vec<usize> = trained.iter().flat_map(|t| t.sv_rows.iter().copied()).collect();
    pool_rows.sort_unstable();
    pool_rows.dedup();
    let machines = trained
        .into_iter()
        .map(|t| BinaryMachine {
            classes: t.classes,
            sv: t.sv_rows.iter().map(|r| pool_rows.binary_search(r).expect("pooled row") as u32).collect(),
            coef: t.coef,
            rho: t.rho,
            platt: t.platt,
        })
        .collect();
    let support_vectors: Vec<Vec<f32>> = pool_rows.iter().map(|&r| features[r].clone()).collect();
    let sv_norms = pool_rows.iter().map(|&r| norms[r]).collect();
    Ok(SvmModel {
        label_order,
        machines,
        kernel: Kernel::Rbf { gamma },
        training_meta: TrainingMeta { c, seed, feature_dim: dim },
        support_vectors,
        sv_norms,
    })
}

impl SvmModel {
    pub fn feature_dim(&self) -> usize {
        self.training_meta.feature_dim
    }

    pub fn gamma(&self) -> f64 {
        match self.kernel {
            Kernel::Rbf { gamma } => gamma,
        }
    }

    fn check_input(&self, x: &[f32]) -> Result<(), SvmError> {
        if x.len() != self.feature_dim() {
            return Err(SvmError::InvalidFeature(format!(
                "input has {} dims, model expects {}",
                x.len(),
                self.feature_dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SvmError::InvalidFeature("input has a non-finite value".into()));
        }
        Ok(())
    }

    /// Raw decision value of every machine, in machine order.
    pub fn decision_values(&self, x: &[f32]) -> Result<Vec<f64>, SvmError> {
        self.check_input(x)?;
        let gamma = self.gamma();
        let xn = kernel::squared_norm(x);
        let k: Vec<f64> = self
            .support_vectors
            .iter()
            .zip(&self.sv_norms)
            .map(|(s, &sn)| kernel::rbf(gamma, s, sn, x, xn))
            .collect();
        Ok(self
            .machines
            .iter()
            .map(|m| m.sv.iter().zip(&m.coef).map(|(&s, &c)| c * k[s as usize]).sum::<f64>() - m.rho)
            .collect())
    }

    /// Label by one-vs-one voting; ties go to the earlier label.
    pub fn predict_label(&self, x: &[f32]) -> Result<RaceLabel7, SvmError> {
        let dec = self.decision_values(x)?;
        let mut votes = [0u32; 7];
        for (m, d) in self.machines.iter().zip(dec) {
            let winner = if d > 0.0 { m.classes.0 } else { m.classes.1 };
            votes[winner.index()] += 1;
        }
        let mut best = self.label_order[0];
        for &l in &self.label_order {
            if votes[l.index()] > votes[best.index()] {
                best = l;
            }
        }
        Ok(best)
    }

    /// Calibrated distribution over all seven labels; classes absent from
    /// training get probability zero.
    pub fn predict_probs(&self, x: &[f32]) -> Result<ProbVector<RaceLabel7>, SvmError> {
        let dec = self.decision_values(x)?;
        let k = self.label_order.len();
        let pos = |l: RaceLabel7| self.label_order.iter().position(|&o| o == l).expect("trained label");
        let mut r = vec![vec![0.0; k]; k];
        for (m, d) in self.machines.iter().zip(dec) {
            let p = sigmoid_predict(d, m.platt.a, m.platt.b).clamp(MIN_PROB, 1.0 - MIN_PROB);
            let (i, j) = (pos(m.classes.0), pos(m.classes.1));
            r[i][j] = p;
            r[j][i] = 1.0 - p;
        }
        let coupled = couple(&r);
        let mut probs = vec![0.0; RaceLabel7::ALL.len()];
        for (l, p) in self.label_order.iter().zip(coupled) {
            probs[l.index()] = p;
        }
        ProbVector::new(RaceLabel7::ALL.to_vec(), probs)
    }

    pub fn save(&self, path: &Path) -> Result<(), SvmError> {
        let header = Header {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            label_order: self.label_order.clone(),
            kernel: self.kernel,
            training_meta: self.training_meta,
            sv_count: self.support_vectors.len(),
            machines: self.machines.clone(),
        };
        let mut bytes = serde_json::to_vec(&header).map_err(|e| SvmError::Format(e.to_string()))?;
        bytes.push(b'\n');
        bytes.reserve(self.support_vectors.len() * self.feature_dim() * 4);
        for v in self.support_vectors.iter().flatten() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        crate::ingest::store::write_atomic(path, &bytes)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, SvmError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SvmError> {
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| SvmError::Format("missing header line".into()))?;
        let header: Header =
            serde_json::from_slice(&bytes[..nl]).map_err(|e| SvmError::Format(format!("header: {e}")))?;
        if header.format != MODEL_FORMAT {
            return Err(SvmError::Format(format!("unknown format `{}`", header.format)));
        }
        if header.version != MODEL_VERSION {
            return Err(SvmError::Format(format!(
                "model version {} is not supported (expected {MODEL_VERSION})",
                header.version
            )));
        }
        let dim = header.training_meta.feature_dim;
        let block = &bytes[nl + 1..];
        if block.len() != header.sv_count * dim * 4 {
            return Err(SvmError::Format(format!(
                "support-vector block has {} bytes, expected {}",
                block.len(),
                header.sv_count * dim * 4
            )));
        }
        let support_vectors: Vec<Vec<f32>> = block
            .chunks_exact((dim * 4).max(1))
            .map(|row| row.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
            .collect();
        for m in &header.machines {
            if m.sv.len() != m.coef.len() || m.sv.iter().any(|&s| s as usize >= header.sv_count) {
                return Err(SvmError::Format("machine references a missing support vector".into()));
            }
            if !(m.platt.a.is_finite() && m.platt.b.is_finite() && m.rho.is_finite()) {
                return Err(SvmError::Format("non-finite machine parameters".into()));
            }
        }
        let k = header.label_order.len();
        if header.machines.len() != k * (k.saturating_sub(1)) / 2 {
            return Err(SvmError::Format("machine count does not match label order".into()));
        }
        let sv_norms = support_vectors.iter().map(|v| kernel::squared_norm(v)).collect();
        Ok(Self {
            label_order: header.label_order,
            machines: header.machines,
            kernel: header.kernel,
            training_meta: header.training_meta,
            support_vectors,
            sv_norms,
        })
    }
}

/// Outcome of hyperparameter selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridChoice {
    pub c: f64,
    pub gamma: f64,
    pub validation_accuracy: f64,
}

/// `C ∈ {1, 10}`, `gamma ∈ {1/d, 2/d}`.
pub fn default_grid(dim: usize) -> Vec<(f64, f64)> {
    let d = dim as f64;
    vec![(1.0, 1.0 / d), (1.0, 2.0 / d), (10.0, 1.0 / d), (10.0, 2.0 / d)]
}

/// Picks `(C, gamma)` by accuracy on a seeded, stratified 20% validation split.
/// Ties keep the earlier grid entry.
pub fn grid_search(
    features: &[Vec<f32>],
    labels: &[RaceLabel7],
    grid: &[(f64, f64)],
    seed: u64,
) -> Result<GridChoice, SvmError> {
    check_features(features)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut valid) = (Vec::new(), Vec::new());
    for &l in RaceLabel7::ALL {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&k| labels[k] == l).collect();
        idx.shuffle(&mut rng);
        let n_valid = if idx.len() >= 5 { idx.len() / 5 } else { 0 };
        valid.extend_from_slice(&idx[..n_valid]);
        train.extend_from_slice(&idx[n_valid..]);
    }
    train.sort_unstable();
    valid.sort_unstable();
    if valid.is_empty() {
        return Err(SvmError::DegenerateTraining("too few samples for a validation split".into()));
    }
    let tf: Vec<Vec<f32>> = train.iter().map(|&k| features[k].clone()).collect();
    let tl: Vec<RaceLabel7> = train.iter().map(|&k| labels[k]).collect();
    let mut best: Option<GridChoice> = None;
    for &(c, gamma) in grid {
        let model = train_svm(&tf, &tl, c, gamma, seed)?;
        let mut correct = 0usize;
        for &k in &valid {
            if model.predict_probs(&features[k])?.argmax() == labels[k] {
                correct += 1;
            }
        }
        let acc = correct as f64 / valid.len() as f64;
        tracing::info!(c, gamma, accuracy = acc, "grid point");
        if best.is_none_or(|b| acc > b.validation_accuracy) {
            best = Some(GridChoice { c, gamma, validation_accuracy: acc });
        }
    }
    best.ok_or_else(|| SvmError::InvalidFeature("empty hyperparameter grid".into()))
}

/// Maximal KKT violation of every machine after retraining on the same data;
/// exposed so callers can audit convergence.
pub fn audit_kkt(features: &[Vec<f32>], labels: &[RaceLabel7], c: f64, gamma: f64) -> Result<Vec<f64>, SvmError> {
    check_features(features)?;
    let norms: Vec<f64> = features.iter().map(|f| kernel::squared_norm(f)).collect();
    let order: Vec<RaceLabel7> = RaceLabel7::ALL.iter().copied().filter(|l| labels.contains(l)).collect();
    let mut out = Vec::new();
    for i in 0..order.len() {
        for j in i + 1..order.len() {
            let rows: Vec<usize> = (0..labels.len()).filter(|&k| labels[k] == order[i] || labels[k] == order[j]).collect();
            let y: Vec<f64> = rows.iter().map(|&k| if labels[k] == order[i] { 1.0 } else { -1.0 }).collect();
            let mut km = KernelMatrix::new(features, &norms, rows, gamma);
            let sol = smo::solve(&mut km, &y, c, KKT_TOLERANCE);
            out.push(smo::kkt_violation(&mut km, &y, &sol.alpha, c));
        }
    }
    Ok(out)
}

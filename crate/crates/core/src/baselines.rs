//! Classical classifiers over flattened spectral features, plus the
//! binned-vs-unbinned ablation harness.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::eval::{metrics, ConfusionMatrix, MetricsReport};
use crate::pose::{Label, PoseSequence};
use crate::spectral::{extract_features, BinSchedule, SpectralFeatures};
use crate::train::{loocv, TrainConfig};

/// Row-major (bin, joint, channel) flatten of a feature tensor.
pub fn flatten(features: &SpectralFeatures) -> Vec<f64> {
    features.values.clone()
}

/// Per-dimension z-score parameters, fitted on training rows only.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Protocol("cannot standardize an empty set".into()));
        }
        let dim = rows[0].len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for row in rows {
            if row.len() != dim {
                return Err(Error::dimension("standardize", format!("{dim}"), format!("{}", row.len())));
            }
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in mean.iter_mut() {
            *m /= n;
        }
        let mut std = vec![0.0; dim];
        for row in rows {
            for ((s, v), m) in std.iter_mut().zip(row).zip(&mean) {
                *s += (v - m).powi(2);
            }
        }
        for s in std.iter_mut() {
            // zero-variance dimensions map to exactly 0 after centering
            *s = (*s / n).sqrt();
            if *s == 0.0 {
                *s = 1.0;
            }
        }
        Ok(Standardizer { mean, std })
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    LogisticRegression,
    Lda,
    DecisionTree,
    LinearSvm,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 4] = [
        BaselineKind::LogisticRegression,
        BaselineKind::Lda,
        BaselineKind::DecisionTree,
        BaselineKind::LinearSvm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::LogisticRegression => "lr",
            BaselineKind::Lda => "lda",
            BaselineKind::DecisionTree => "tree",
            BaselineKind::LinearSvm => "svm",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct TreeNode {
    /// Leaf: predicted class. Split: (dim, threshold, left <=, right >).
    leaf: Option<usize>,
    dim: usize,
    threshold: f64,
    left: Option<Box<TreeNode>>,
    right: Option<Box<TreeNode>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelParams {
    /// weights + bias of a linear score; positive score = abnormal
    Linear { weights: Vec<f64>, bias: f64 },
    Tree(TreeNodeBox),
}

// newtype so ModelParams stays printable without exposing TreeNode
#[derive(Debug, Clone, PartialEq)]
pub struct TreeNodeBox(TreeNode);

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineModel {
    pub kind: BaselineKind,
    standardizer: Standardizer,
    params: ModelParams,
}

const L2_LAMBDA: f64 = 1e-2;
const LDA_GAMMA: f64 = 0.1;
const TREE_MAX_DEPTH: usize = 3;
const SVM_ITERATIONS: usize = 10_000;
const LR_GRAD_TOL: f64 = 1e-6;
const LR_MAX_ITERS: usize = 200_000;

fn check_two_classes(labels: &[usize]) -> Result<()> {
    if labels.is_empty() || labels.iter().all(|&l| l == labels[0]) {
        return Err(Error::Protocol("baseline fit needs both classes".into()));
    }
    Ok(())
}

fn fit_logistic(x: &[Vec<f64>], y: &[usize]) -> ModelParams {
    let n = x.len();
    let dim = x[0].len();
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    // Lipschitz bound for the logistic gradient on standardized data:
    // 0.25 * lambda_max(X'X)/n + lambda <= 0.25 * mean row norm^2 * ...;
    // the trace bound dim is cheap and safe.
    let row_sq: f64 = x.iter().map(|r| r.iter().map(|v| v * v).sum::<f64>()).sum::<f64>() / n as f64;
    let step = 1.0 / (0.25 * (row_sq + 1.0) + L2_LAMBDA);
    for _ in 0..LR_MAX_ITERS {
        let mut gw = vec![0.0; dim];
        let mut gb = 0.0;
        for (row, &label) in x.iter().zip(y) {
            let z: f64 = row.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>() + b;
            let p = 1.0 / (1.0 + (-z).exp());
            let err = p - label as f64;
            for (g, v) in gw.iter_mut().zip(row) {
                *g += err * v;
            }
            gb += err;
        }
        let inv_n = 1.0 / n as f64;
        let mut norm_sq = 0.0;
        for (g, c) in gw.iter_mut().zip(&w) {
            *g = *g * inv_n + L2_LAMBDA * c;
            norm_sq += *g * *g;
        }
        gb *= inv_n;
        norm_sq += gb * gb;
        if norm_sq.sqrt() < LR_GRAD_TOL {
            break;
        }
        for (c, g) in w.iter_mut().zip(&gw) {
            *c -= step * g;
        }
        b -= step * gb;
    }
    ModelParams::Linear { weights: w, bias: b }
}

/// Solve (D + c X' X) v = rhs with D diagonal via the Woodbury identity;
/// only an n x n system is factored, which keeps high-dimensional LDA cheap.
fn woodbury_solve(d: &[f64], x: &[Vec<f64>], c: f64, rhs: &[f64]) -> Vec<f64> {
    let n = x.len();
    let dim = d.len();
    let dinv_rhs: Vec<f64> = rhs.iter().zip(d).map(|(r, dj)| r / dj).collect();
    if c == 0.0 || n == 0 {
        return dinv_rhs;
    }
    // K = I/c + X D^{-1} X'
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let mut s = 0.0;
            for t in 0..dim {
                s += x[i][t] * x[j][t] / d[t];
            }
            k[i * n + j] = s;
            k[j * n + i] = s;
        }
        k[i * n + i] += 1.0 / c;
    }
    let u: Vec<f64> = x
        .iter()
        .map(|row| row.iter().zip(&dinv_rhs).map(|(a, b)| a * b).sum())
        .collect();
    let t = solve_dense(&mut k, u, n);
    let mut out = dinv_rhs;
    for (j, o) in out.iter_mut().enumerate() {
        let mut s = 0.0;
        for (i, xi) in x.iter().enumerate() {
            s += xi[j] * t[i];
        }
        *o -= s / d[j];
    }
    out
}

/// Gaussian elimination with partial pivoting; `a` is overwritten.
fn solve_dense(a: &mut [f64], mut b: Vec<f64>, n: usize) -> Vec<f64> {
    for col in 0..n {
        let mut pivot = col;
        for r in col + 1..n {
            if a[r * n + col].abs() > a[pivot * n + col].abs() {
                pivot = r;
            }
        }
        if pivot != col {
            for j in 0..n {
                a.swap(col * n + j, pivot * n + j);
            }
            b.swap(col, pivot);
        }
        let diag = a[col * n + col];
        if diag == 0.0 {
            continue; // singular direction: leave the component untouched
        }
        for r in col + 1..n {
            let f = a[r * n + col] / diag;
            if f == 0.0 {
                continue;
            }
            for j in col..n {
                a[r * n + j] -= f * a[col * n + j];
            }
            b[r] -= f * b[col];
        }
    }
    for col in (0..n).rev() {
        let diag = a[col * n + col];
        if diag == 0.0 {
            b[col] = 0.0;
            continue;
        }
        let mut s = b[col];
        for j in col + 1..n {
            s -= a[col * n + j] * b[j];
        }
        b[col] = s / diag;
    }
    b
}

fn fit_lda(x: &[Vec<f64>], y: &[usize]) -> ModelParams {
    let dim = x[0].len();
    let n = x.len();
    let mut mu = [vec![0.0; dim], vec![0.0; dim]];
    let mut counts = [0usize; 2];
    for (row, &label) in x.iter().zip(y) {
        counts[label] += 1;
        for (m, v) in mu[label].iter_mut().zip(row) {
            *m += v;
        }
    }
    for c in 0..2 {
        for m in mu[c].iter_mut() {
            *m /= counts[c] as f64;
        }
    }
    let denom = (n.saturating_sub(2)).max(1) as f64;
    // class-centered rows; pooled covariance S = Xc' Xc / denom
    let centered: Vec<Vec<f64>> = x
        .iter()
        .zip(y)
        .map(|(row, &label)| row.iter().zip(&mu[label]).map(|(v, m)| v - m).collect())
        .collect();
    let mut diag_s = vec![0.0; dim];
    for row in &centered {
        for (s, v) in diag_s.iter_mut().zip(row) {
            *s += v * v;
        }
    }
    // shrinkage target: D = gamma * diag(S); zero-variance dims pinned to 1
    // so the Woodbury diagonal stays invertible (their mean gap is 0, so the
    // resulting weight is 0 anyway)
    let d: Vec<f64> = diag_s
        .iter()
        .map(|&s| {
            let v = LDA_GAMMA * s / denom;
            if v == 0.0 {
                1.0
            } else {
                v
            }
        })
        .collect();
    let diff: Vec<f64> = mu[1].iter().zip(&mu[0]).map(|(a, b)| a - b).collect();
    let c = (1.0 - LDA_GAMMA) / denom;
    let has_scatter = diag_s.iter().any(|&s| s > 0.0);
    let w = if has_scatter {
        woodbury_solve(&d, &centered, c, &diff)
    } else {
        diff.clone() // nearest class mean in the degenerate no-scatter case
    };
    let mid: f64 = w
        .iter()
        .zip(mu[0].iter().zip(&mu[1]))
        .map(|(wj, (a, b))| wj * (a + b) / 2.0)
        .sum();
    let prior = (counts[1] as f64 / counts[0] as f64).ln();
    ModelParams::Linear {
        weights: w,
        bias: prior - mid,
    }
}

fn gini_counts(counts: [usize; 2]) -> f64 {
    let total = (counts[0] + counts[1]) as f64;
    if total == 0.0 {
        return 0.0;
    }
    let p0 = counts[0] as f64 / total;
    let p1 = counts[1] as f64 / total;
    1.0 - p0 * p0 - p1 * p1
}

fn majority(y: &[usize], idx: &[usize]) -> usize {
    let ones = idx.iter().filter(|&&i| y[i] == 1).count();
    // ties resolve to the negative class for determinism
    if ones * 2 > idx.len() {
        1
    } else {
        0
    }
}

fn grow_tree(x: &[Vec<f64>], y: &[usize], idx: &[usize], depth: usize) -> TreeNode {
    let pure = idx.iter().all(|&i| y[i] == y[idx[0]]);
    if depth == TREE_MAX_DEPTH || pure || idx.len() < 2 {
        return TreeNode {
            leaf: Some(majority(y, idx)),
            dim: 0,
            threshold: 0.0,
            left: None,
            right: None,
        };
    }
    let dim = x[0].len();
    let parent_gini = gini_counts([
        idx.iter().filter(|&&i| y[i] == 0).count(),
        idx.iter().filter(|&&i| y[i] == 1).count(),
    ]);
    let mut best: Option<(f64, usize, f64)> = None; // (weighted gini, dim, threshold)
    for d in 0..dim {
        let mut order: Vec<usize> = idx.to_vec();
        order.sort_by(|&a, &b| x[a][d].partial_cmp(&x[b][d]).unwrap().then(a.cmp(&b)));
        let total1 = order.iter().filter(|&&i| y[i] == 1).count();
        let mut left = [0usize; 2];
        for k in 0..order.len() - 1 {
            left[y[order[k]]] += 1;
            let va = x[order[k]][d];
            let vb = x[order[k + 1]][d];
            if va == vb {
                continue;
            }
            let nl = k + 1;
            let nr = order.len() - nl;
            let right_counts = [nr - (total1 - left[1]), total1 - left[1]];
            let score = (nl as f64 * gini_counts(left) + nr as f64 * gini_counts(right_counts))
                / order.len() as f64;
            let threshold = (va + vb) / 2.0;
            let better = match best {
                None => true,
                Some((s, _, _)) => score < s - 1e-12,
            };
            if better {
                best = Some((score, d, threshold));
            }
        }
    }
    match best {
        Some((score, d, threshold)) if score < parent_gini - 1e-12 => {
            let (li, ri): (Vec<usize>, Vec<usize>) =
                idx.iter().partition(|&&i| x[i][d] <= threshold);
            TreeNode {
                leaf: None,
                dim: d,
                threshold,
                left: Some(Box::new(grow_tree(x, y, &li, depth + 1))),
                right: Some(Box::new(grow_tree(x, y, &ri, depth + 1))),
            }
        }
        _ => TreeNode {
            leaf: Some(majority(y, idx)),
            dim: 0,
            threshold: 0.0,
            left: None,
            right: None,
        },
    }
}

fn tree_predict(node: &TreeNode, row: &[f64]) -> usize {
    match node.leaf {
        Some(c) => c,
        None => {
            if row[node.dim] <= node.threshold {
                tree_predict(node.left.as_ref().unwrap(), row)
            } else {
                tree_predict(node.right.as_ref().unwrap(), row)
            }
        }
    }
}

fn fit_svm(x: &[Vec<f64>], y: &[usize]) -> ModelParams {
    // full-batch subgradient descent on hinge loss + (lambda/2)||w||^2,
    // step 1/(lambda (t+1)); fixed iteration count keeps fits deterministic
    let n = x.len() as f64;
    let dim = x[0].len();
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    for t in 0..SVM_ITERATIONS {
        let step = 1.0 / (L2_LAMBDA * (t + 1) as f64);
        let mut gw: Vec<f64> = w.iter().map(|c| L2_LAMBDA * c).collect();
        let mut gb = 0.0;
        for (row, &label) in x.iter().zip(y) {
            let sign = if label == 1 { 1.0 } else { -1.0 };
            let margin = sign * (row.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>() + b);
            if margin < 1.0 {
                for (g, v) in gw.iter_mut().zip(row) {
                    *g -= sign * v / n;
                }
                gb -= sign / n;
            }
        }
        for (c, g) in w.iter_mut().zip(&gw) {
            *c -= step * g;
        }
        b -= step * gb;
    }
    ModelParams::Linear { weights: w, bias: b }
}

pub fn fit(kind: BaselineKind, rows: &[Vec<f64>], labels: &[Label]) -> Result<BaselineModel> {
    if rows.len() != labels.len() || rows.is_empty() {
        return Err(Error::Protocol("fit needs equally many rows and labels".into()));
    }
    let y: Vec<usize> = labels.iter().map(|l| l.class_index()).collect();
    check_two_classes(&y)?;
    let standardizer = Standardizer::fit(rows)?;
    let x: Vec<Vec<f64>> = rows.iter().map(|r| standardizer.apply(r)).collect();
    let params = match kind {
        BaselineKind::LogisticRegression => fit_logistic(&x, &y),
        BaselineKind::Lda => fit_lda(&x, &y),
        BaselineKind::LinearSvm => fit_svm(&x, &y),
        BaselineKind::DecisionTree => {
            let idx: Vec<usize> = (0..x.len()).collect();
            ModelParams::Tree(TreeNodeBox(grow_tree(&x, &y, &idx, 0)))
        }
    };
    Ok(BaselineModel {
        kind,
        standardizer,
        params,
    })
}

pub fn predict(model: &BaselineModel, row: &[f64]) -> Label {
    let x = model.standardizer.apply(row);
    let class = match &model.params {
        ModelParams::Linear { weights, bias } => {
            let score: f64 = x.iter().zip(weights).map(|(a, c)| a * c).sum::<f64>() + bias;
            usize::from(score > 0.0)
        }
        ModelParams::Tree(TreeNodeBox(root)) => tree_predict(root, &x),
    };
    if class == 1 {
        Label::Abnormal
    } else {
        Label::Normal
    }
}

/// LOOCV over flattened feature vectors for one baseline.
pub fn baseline_loocv(features: &[SpectralFeatures], kind: BaselineKind) -> Result<MetricsReport> {
    if features.len() < 3 {
        return Err(Error::Protocol("leave-one-out needs at least 3 samples".into()));
    }
    let rows: Vec<Vec<f64>> = features.iter().map(flatten).collect();
    let labels: Vec<Label> = features
        .iter()
        .map(|f| f.label.ok_or_else(|| Error::Protocol(format!("subject {} has no label", f.subject_id))))
        .collect::<Result<_>>()?;
    let mut cm = ConfusionMatrix::default();
    for held in 0..rows.len() {
        let train_rows: Vec<Vec<f64>> = rows
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != held)
            .map(|(_, r)| r.clone())
            .collect();
        let train_labels: Vec<Label> = labels
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != held)
            .map(|(_, l)| *l)
            .collect();
        let model = fit(kind, &train_rows, &train_labels)?;
        cm.add(labels[held], predict(&model, &rows[held]));
    }
    metrics(&cm)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub method: String,
    pub binned: bool,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "report v1");
        let _ = writeln!(out, "kind ablation");
        let _ = writeln!(out, "method\tbinning\tAC\tSE\tSP\tF1\tMCC");
        for r in &self.rows {
            let m = &r.metrics;
            let _ = writeln!(
                out,
                "{}\t{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}",
                r.method,
                if r.binned { "binned" } else { "unbinned" },
                m.ac,
                m.se,
                m.sp,
                m.f1,
                m.mcc
            );
        }
        out
    }
}

/// Table-shaped binning ablation: every baseline plus the GCN model, each
/// evaluated by LOOCV on binned features and on width-1 (unbinned) features.
pub fn ablation_table(
    sequences: &[PoseSequence],
    schedule: &BinSchedule,
    config: &TrainConfig,
) -> Result<AblationReport> {
    let unbinned_schedule = BinSchedule::unit(schedule.ref_fps, schedule.n_fft, schedule.cutoff_hz)?;
    let mut rows = Vec::new();
    for (binned, sched) in [(true, schedule), (false, &unbinned_schedule)] {
        let features: Vec<SpectralFeatures> = sequences
            .iter()
            .map(|s| extract_features(s, sched))
            .collect::<Result<_>>()?;
        for kind in BaselineKind::ALL {
            rows.push(AblationRow {
                method: kind.name().to_string(),
                binned,
                metrics: baseline_loocv(&features, kind)?,
            });
        }
        let report = loocv(&features, config)?;
        rows.push(AblationRow {
            method: "faigcn".to_string(),
            binned,
            metrics: report.metrics,
        });
    }
    // fixed presentation order: method-major, binned before unbinned
    let order = ["lr", "lda", "tree", "svm", "faigcn"];
    rows.sort_by_key(|r| {
        (
            order.iter().position(|m| *m == r.method).unwrap_or(usize::MAX),
            !r.binned,
        )
    });
    Ok(AblationReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::NUM_JOINTS;
    use crate::spectral::build_schedule;

    fn labels(y: &[usize]) -> Vec<Label> {
        y.iter()
            .map(|&v| if v == 1 { Label::Abnormal } else { Label::Normal })
            .collect()
    }

    #[test]
    fn flatten_ordering_contract() {
        let bins = 2;
        let mut values = vec![0.0; bins * NUM_JOINTS * 2];
        for (i, v) in values.iter_mut().enumerate() {
            *v = i as f64;
        }
        let f = SpectralFeatures {
            values,
            bins,
            schedule: BinSchedule::unit(25.0, 1000, 6.0).unwrap(),
            subject_id: "t".into(),
            label: None,
        };
        let flat = flatten(&f);
        assert_eq!(flat.len(), 72);
        // documented (bin, joint, channel) order
        assert_eq!(flat[1 * NUM_JOINTS * 2 + 3 * 2 + 1], f.value(1, 3, 1));
        assert_eq!(flat[5], 5.0);
    }

    #[test]
    fn unbinned_length_arithmetic() {
        let unit = BinSchedule::unit(25.0, 1000, 6.0).unwrap();
        assert_eq!(unit.num_bins(), 241);
        assert_eq!(unit.num_bins() * NUM_JOINTS * 2, 8676);
    }

    #[test]
    fn standardizer_zeroes_mean_and_unitizes_std() {
        let rows = vec![
            vec![1.0, 10.0, 5.0],
            vec![3.0, 20.0, 5.0],
            vec![5.0, 60.0, 5.0],
        ];
        let s = Standardizer::fit(&rows).unwrap();
        let applied: Vec<Vec<f64>> = rows.iter().map(|r| s.apply(r)).collect();
        for d in 0..2 {
            let mean: f64 = applied.iter().map(|r| r[d]).sum::<f64>() / 3.0;
            let var: f64 = applied.iter().map(|r| r[d] * r[d]).sum::<f64>() / 3.0;
            assert!(mean.abs() < 1e-9);
            assert!((var - 1.0).abs() < 1e-9);
        }
        // zero-variance dim: centered to exactly zero
        assert!(applied.iter().all(|r| r[2] == 0.0));
    }

    #[test]
    fn lda_two_point_toy() {
        let rows = vec![vec![0.0, 0.0], vec![2.0, 0.0]];
        let model = fit(BaselineKind::Lda, &rows, &labels(&[0, 1])).unwrap();
        assert_eq!(predict(&model, &[0.5, 0.0]), Label::Normal);
        assert_eq!(predict(&model, &[1.8, 0.0]), Label::Abnormal);
    }

    #[test]
    fn lda_high_dimensional_woodbury_is_finite_and_separates() {
        // p >> n regime
        let dim = 500;
        let mut rows = Vec::new();
        let mut y = Vec::new();
        let mut rng = crate::rng::RngStream::new(3);
        for i in 0..8 {
            let class = i % 2;
            let row: Vec<f64> = (0..dim)
                .map(|d| {
                    let shift = if class == 1 && d < 10 { 3.0 } else { 0.0 };
                    shift + rng.normal(0.0, 1.0)
                })
                .collect();
            rows.push(row);
            y.push(class);
        }
        let model = fit(BaselineKind::Lda, &rows, &labels(&y)).unwrap();
        let correct = rows
            .iter()
            .zip(&y)
            .filter(|(r, &l)| predict(&model, r).class_index() == l)
            .count();
        assert_eq!(correct, rows.len());
    }

    #[test]
    fn logistic_regression_separates_1d() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<usize> = (0..10).map(|i| usize::from(i >= 5)).collect();
        let model = fit(BaselineKind::LogisticRegression, &rows, &labels(&y)).unwrap();
        for (r, &l) in rows.iter().zip(&y) {
            assert_eq!(predict(&model, r).class_index(), l);
        }
    }

    #[test]
    fn tree_reproduces_a_perfect_threshold_split() {
        let rows = vec![
            vec![0.1, 9.0],
            vec![0.4, -3.0],
            vec![0.2, 4.0],
            vec![0.9, 2.0],
            vec![0.8, -7.0],
        ];
        let y = [0, 0, 0, 1, 1];
        let model = fit(BaselineKind::DecisionTree, &rows, &labels(&y)).unwrap();
        match &model.params {
            ModelParams::Tree(TreeNodeBox(root)) => {
                assert!(root.leaf.is_none());
                assert_eq!(root.dim, 0, "root must split on the separating dim");
            }
            other => panic!("unexpected params {other:?}"),
        }
        for (r, &l) in rows.iter().zip(&y) {
            assert_eq!(predict(&model, r).class_index(), l);
        }
    }

    #[test]
    fn svm_separates_and_is_deterministic() {
        let rows = vec![
            vec![-2.0, 0.3],
            vec![-1.5, -0.2],
            vec![-1.0, 0.1],
            vec![1.0, 0.0],
            vec![1.7, 0.4],
            vec![2.2, -0.3],
        ];
        let y = [0, 0, 0, 1, 1, 1];
        let a = fit(BaselineKind::LinearSvm, &rows, &labels(&y)).unwrap();
        let b = fit(BaselineKind::LinearSvm, &rows, &labels(&y)).unwrap();
        assert_eq!(a, b);
        for (r, &l) in rows.iter().zip(&y) {
            assert_eq!(predict(&a, r).class_index(), l);
        }
    }

    #[test]
    fn single_class_rejected() {
        let rows = vec![vec![1.0], vec![2.0]];
        for kind in BaselineKind::ALL {
            assert!(fit(kind, &rows, &labels(&[0, 0])).is_err());
        }
    }

    #[test]
    fn schedule_pair_for_ablation_is_consistent() {
        let binned = build_schedule(25.0, 200, 6.0, 1.10).unwrap();
        let unbinned = BinSchedule::unit(binned.ref_fps, binned.n_fft, binned.cutoff_hz).unwrap();
        assert_eq!(binned.coverage(), unbinned.coverage());
        assert!(binned.num_bins() < unbinned.num_bins());
    }
}

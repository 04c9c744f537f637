//! Trained models: the end-to-end pipeline, prediction, ranking metrics,
//! and the model file format.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::kernels::KernelSet;
use crate::objective::{primal_objective, LabeledProblem, Loss, MklConfig};
use crate::solver::{solve, SolverConfig};
use crate::weights::{theta_from_solution, KernelWeights};
use crate::{Error, Result};

/// Everything needed to score new samples: expansion coefficients
/// `v = alpha .* y - gamma` over the training set, KKT-scaled kernel
/// weights, and the training configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub v: DVector<f64>,
    pub theta: KernelWeights,
    pub config: MklConfig,
    pub kernel_names: Vec<String>,
    /// Solver outcome; informational and not persisted by [`save_model`].
    pub diagnostics: Option<Diagnostics>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub projected_grad_norm: f64,
    pub duality_gap: f64,
}

impl TrainedModel {
    pub fn n_train(&self) -> usize {
        self.v.len()
    }

    pub fn m(&self) -> usize {
        self.theta.len()
    }
}

/// Solves the dual, recovers weights, and attaches the duality gap.
pub fn train(prob: &LabeledProblem, solver_cfg: &SolverConfig) -> Result<TrainedModel> {
    let mut sol = solve(prob, solver_cfg)?;
    let theta = theta_from_solution(&sol, prob)?;
    let gap = primal_objective(&theta, &sol.point, prob)? - sol.objective;
    sol.duality_gap = Some(gap);
    Ok(TrainedModel {
        v: sol.point.coefficients(prob.labels()),
        theta,
        config: prob.config().clone(),
        kernel_names: prob.kernels().names().to_vec(),
        diagnostics: Some(Diagnostics {
            objective: sol.objective,
            iterations: sol.iterations,
            converged: sol.converged,
            projected_grad_norm: sol.projected_grad_norm,
            duality_gap: gap,
        }),
    })
}

/// Train-by-test kernel evaluations, one `n_train x n_test` matrix per
/// kernel, in the same order as the training kernels.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossKernelSet {
    matrices: Vec<DMatrix<f64>>,
}

impl CrossKernelSet {
    pub fn new(matrices: Vec<DMatrix<f64>>) -> Result<Self> {
        if matrices.is_empty() {
            return Err(Error::EmptyInput("cross kernels"));
        }
        let (rows, cols) = matrices[0].shape();
        if rows == 0 || cols == 0 {
            return Err(Error::EmptyInput("cross kernel matrix"));
        }
        for mat in &matrices {
            if mat.shape() != (rows, cols) {
                return Err(Error::DimensionMismatch {
                    what: "cross kernel shape",
                    expected: rows * cols,
                    got: mat.len(),
                });
            }
        }
        Ok(CrossKernelSet { matrices })
    }

    /// Scores the training set itself: each Gram matrix doubles as its own
    /// cross matrix.
    pub fn from_kernel_set(kernels: &KernelSet) -> Self {
        CrossKernelSet {
            matrices: kernels.iter().map(|k| k.matrix().clone()).collect(),
        }
    }

    pub fn m(&self) -> usize {
        self.matrices.len()
    }

    pub fn n_train(&self) -> usize {
        self.matrices[0].nrows()
    }

    pub fn n_test(&self) -> usize {
        self.matrices[0].ncols()
    }

    pub fn get(&self, m: usize) -> &DMatrix<f64> {
        &self.matrices[m]
    }
}

/// Decision values `f_j = sum_m theta_m sum_i v_i k_m(x_i, z_j)`.
pub fn predict_scores(model: &TrainedModel, cross: &CrossKernelSet) -> Result<DVector<f64>> {
    if cross.m() != model.m() {
        return Err(Error::DimensionMismatch {
            what: "cross kernel count",
            expected: model.m(),
            got: cross.m(),
        });
    }
    if cross.n_train() != model.n_train() {
        return Err(Error::DimensionMismatch {
            what: "cross kernel rows",
            expected: model.n_train(),
            got: cross.n_train(),
        });
    }
    let mut scores = DVector::zeros(cross.n_test());
    for m in 0..cross.m() {
        scores.axpy(model.theta.get(m), &cross.get(m).tr_mul(&model.v), 1.0);
    }
    Ok(scores)
}

fn validate_scored(scores: &[f64], labels: &[f64]) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::EmptyInput("scores"));
    }
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            what: "labels",
            expected: scores.len(),
            got: labels.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::param("scores", "NaN score"));
    }
    if let Some(bad) = labels.iter().find(|&&y| y != 1.0 && y != -1.0) {
        return Err(Error::param("labels", format!("entry {bad} is not -1 or +1")));
    }
    Ok(())
}

/// Fraction of samples whose score sign matches the label; a score of
/// exactly zero counts as positive.
pub fn accuracy(scores: &[f64], labels: &[f64]) -> Result<f64> {
    validate_scored(scores, labels)?;
    let hits = scores
        .iter()
        .zip(labels)
        .filter(|(&s, &y)| (if s >= 0.0 { 1.0 } else { -1.0 }) == y)
        .count();
    Ok(hits as f64 / scores.len() as f64)
}

/// Area under the ROC curve; ties contribute diagonal segments, which makes
/// this identical to the Mann-Whitney statistic with half-weighted ties.
pub fn auc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    partial_auc(scores, labels, 1.0)
}

/// Area under the ROC curve restricted to false positive rates in
/// `[0, fpr_max]`, normalized by `fpr_max` so a perfect ranker scores 1.
pub fn partial_auc(scores: &[f64], labels: &[f64], fpr_max: f64) -> Result<f64> {
    validate_scored(scores, labels)?;
    if !(fpr_max > 0.0 && fpr_max <= 1.0) {
        return Err(Error::param("fpr_max", "must lie in (0, 1]"));
    }
    let pos = labels.iter().filter(|&&y| y == 1.0).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    // Walk tie groups, accumulating trapezoids in (fp, tp) count space.
    let cap = fpr_max * neg as f64;
    let mut area = 0.0;
    let (mut fp, mut tp) = (0.0f64, 0.0f64);
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut dp, mut dn) = (0.0f64, 0.0f64);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] == 1.0 {
                dp += 1.0;
            } else {
                dn += 1.0;
            }
            j += 1;
        }
        let (fp1, tp1) = (fp + dn, tp + dp);
        if fp1 <= cap {
            area += (fp1 - fp) * (tp + tp1) * 0.5;
        } else if fp < cap {
            // The cap lands inside this segment; interpolate linearly.
            let frac = (cap - fp) / (fp1 - fp);
            let tp_cap = tp + frac * (tp1 - tp);
            area += (cap - fp) * (tp + tp_cap) * 0.5;
            break;
        }
        fp = fp1;
        tp = tp1;
        i = j;
        if fp >= cap {
            break;
        }
    }
    Ok(area / (pos as f64 * neg as f64) / fpr_max)
}

const MODEL_MAGIC: &str = "MKLMODEL";
const MODEL_VERSION: &str = "1";

/// Renders a model in the versioned text format. Reals carry 17 significant
/// digits, so loading reproduces them bit for bit.
pub fn model_to_string(model: &TrainedModel) -> Result<String> {
    use std::fmt::Write;
    if model.theta.len() != model.kernel_names.len() {
        return Err(Error::DimensionMismatch {
            what: "kernel names",
            expected: model.theta.len(),
            got: model.kernel_names.len(),
        });
    }
    for name in &model.kernel_names {
        if name.is_empty() || name.chars().any(char::is_whitespace) {
            return Err(Error::param(
                "kernel name",
                format!("{name:?} must be nonempty without whitespace"),
            ));
        }
    }
    let mut out = String::new();
    writeln!(out, "{MODEL_MAGIC} {MODEL_VERSION}").unwrap();
    writeln!(out, "p {:.16e}", model.config.p).unwrap();
    writeln!(out, "mu {:.16e}", model.config.mu).unwrap();
    writeln!(out, "c {:.16e}", model.config.c).unwrap();
    writeln!(out, "loss {}", model.config.loss).unwrap();
    writeln!(out, "n {}", model.n_train()).unwrap();
    writeln!(out, "M {}", model.m()).unwrap();
    out.push_str("theta");
    for t in model.theta.theta() {
        write!(out, " {t:.16e}").unwrap();
    }
    out.push('\n');
    out.push('v');
    for x in model.v.iter() {
        write!(out, " {x:.16e}").unwrap();
    }
    out.push('\n');
    writeln!(out, "names {}", model.kernel_names.join(" ")).unwrap();
    Ok(out)
}

pub fn save_model(model: &TrainedModel, path: &Path) -> Result<()> {
    std::fs::write(path, model_to_string(model)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    let text = std::fs::read_to_string(path)?;
    model_from_str(&text, path)
}

/// Parses the model format; `path` only labels errors.
pub fn model_from_str(text: &str, path: &Path) -> Result<TrainedModel> {
    let mut cursor = FieldCursor { text, pos: 0 };

    let (version_line, off) = cursor.next_line(path, "version header")?;
    let mut it = version_line.split_whitespace();
    if it.next() != Some(MODEL_MAGIC) {
        return Err(Error::parse(path, off, "missing MKLMODEL header"));
    }
    match it.next() {
        Some(MODEL_VERSION) => {}
        Some(other) => return Err(Error::UnsupportedVersion(other.to_string())),
        None => return Err(Error::parse(path, off, "missing format version")),
    }

    let p: f64 = cursor.keyed(path, "p")?;
    let mu: f64 = cursor.keyed(path, "mu")?;
    let c: f64 = cursor.keyed(path, "c")?;
    let loss: Loss = cursor.keyed(path, "loss")?;
    let n: usize = cursor.keyed(path, "n")?;
    let m: usize = cursor.keyed(path, "M")?;

    let theta = cursor.keyed_reals(path, "theta", m)?;
    let v = cursor.keyed_reals(path, "v", n)?;
    let (names_line, off) = cursor.next_line(path, "names line")?;
    let mut toks = names_line.split_whitespace();
    if toks.next() != Some("names") {
        return Err(Error::parse(path, off, "expected `names` line"));
    }
    let kernel_names: Vec<String> = toks.map(str::to_string).collect();
    if kernel_names.len() != m {
        return Err(Error::parse(
            path,
            off,
            format!("expected {m} kernel names, found {}", kernel_names.len()),
        ));
    }

    let config = MklConfig::new(p, mu, c, loss)?;
    Ok(TrainedModel {
        v: DVector::from_vec(v),
        theta: KernelWeights::raw(theta)?,
        config,
        kernel_names,
        diagnostics: None,
    })
}

struct FieldCursor<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> FieldCursor<'a> {
    fn next_line(&mut self, path: &Path, what: &str) -> Result<(&'a str, usize)> {
        while self.pos < self.text.len() {
            let start = self.pos;
            let rest = &self.text[start..];
            let end = rest.find('\n').map(|i| start + i).unwrap_or(self.text.len());
            self.pos = end + 1;
            let line = &self.text[start..end];
            if !line.trim().is_empty() {
                return Ok((line, start));
            }
        }
        Err(Error::parse(
            path,
            self.text.len(),
            format!("unexpected end of file: expected {what}"),
        ))
    }

    fn keyed<T: std::str::FromStr>(&mut self, path: &Path, key: &str) -> Result<T> {
        let (line, off) = self.next_line(path, key)?;
        let mut toks = line.split_whitespace();
        if toks.next() != Some(key) {
            return Err(Error::parse(path, off, format!("expected `{key}` line")));
        }
        let value = toks
            .next()
            .ok_or_else(|| Error::parse(path, off, format!("`{key}` line has no value")))?;
        if toks.next().is_some() {
            return Err(Error::parse(path, off, format!("`{key}` line has trailing tokens")));
        }
        value
            .parse()
            .map_err(|_| Error::parse(path, off, format!("bad `{key}` value {value:?}")))
    }

    fn keyed_reals(&mut self, path: &Path, key: &str, count: usize) -> Result<Vec<f64>> {
        let (line, off) = self.next_line(path, key)?;
        let mut toks = line.split_whitespace();
        if toks.next() != Some(key) {
            return Err(Error::parse(path, off, format!("expected `{key}` line")));
        }
        let values: Vec<f64> = toks
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| Error::parse(path, off, format!("bad real {t:?} on `{key}` line")))
            })
            .collect::<Result<_>>()?;
        if values.len() != count {
            return Err(Error::parse(
                path,
                off,
                format!("`{key}` line has {} values, expected {count}", values.len()),
            ));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::parse(path, off, format!("non-finite value {bad} on `{key}` line")));
        }
        Ok(values)
    }
}

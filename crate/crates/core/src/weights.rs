//! Recovery of kernel mixture weights from a dual solution.
//!
//! With `h_m = sqrt(v' K_m v)` for `v = alpha .* y - gamma`, stationarity of
//! the primal ties the weights to the dual block norms:
//!
//! * pure block norm (`mu = 0`): `theta_m` is proportional to
//!   `h_m^((2-p)/(p-1))`, and the KKT-exact scale is
//!   `theta_m = (h_m / ||h||_{p*})^((2-p)/(p-1))`;
//! * elastic net (`mu > 0`, exponent offset `eps`): with `b_m = h_m^(1-eps)`
//!   the weights solve the coupled system
//!   `mu theta_m b_m + theta_m^eps (sum_k theta_k^(1+eps) h_k^(1+eps))^(1-eps) = b_m`.
//!
//! The elastic-net system has a unique nonnegative solution. For a fixed
//! coupling value `A` each equation has a unique root `theta_m(A)`, strictly
//! decreasing in `A`, while the coupling recomputed from those roots is
//! nondecreasing in every `theta_k`; the mismatch `A -> coupling(theta(A)) - A`
//! is therefore strictly decreasing and crosses zero exactly once, so an
//! outer bisection on `A` converges from any bracket.

use crate::kernels::KernelSet;
use crate::objective::{block_norm, conjugate_exponent, LabeledProblem};
use crate::solver::SolveResult;
use crate::{Error, Result};
use nalgebra::DVector;

/// How a weight vector is scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    /// Entries sum to one; shares of the mixture.
    SumToOne,
    /// KKT scale; multiplying the kernels by these weights reproduces the
    /// primal predictor.
    Raw,
}

/// Nonnegative per-kernel mixture weights.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelWeights {
    theta: Vec<f64>,
    normalization: Normalization,
}

impl KernelWeights {
    pub fn raw(theta: Vec<f64>) -> Result<Self> {
        Self::validated(theta, Normalization::Raw)
    }

    pub fn sum_to_one(theta: Vec<f64>) -> Result<Self> {
        let sum: f64 = theta.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::param("theta", format!("entries sum to {sum}, not 1")));
        }
        Self::validated(theta, Normalization::SumToOne)
    }

    fn validated(theta: Vec<f64>, normalization: Normalization) -> Result<Self> {
        if theta.is_empty() {
            return Err(Error::EmptyInput("theta"));
        }
        if let Some(bad) = theta.iter().find(|t| !t.is_finite() || **t < 0.0) {
            return Err(Error::param("theta", format!("weight {bad} is negative or non-finite")));
        }
        Ok(KernelWeights { theta, normalization })
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn get(&self, m: usize) -> f64 {
        self.theta[m]
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    /// Rescales to sum one, for display and comparison.
    pub fn shares(&self) -> Result<KernelWeights> {
        let sum: f64 = self.theta.iter().sum();
        if sum <= 0.0 {
            return Err(Error::AllNormsZero);
        }
        KernelWeights::sum_to_one(self.theta.iter().map(|t| t / sum).collect())
    }
}

/// Per-kernel dual block norms `h_m = sqrt(max(v' K_m v, 0))`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualKernelNorms(Vec<f64>);

impl DualKernelNorms {
    pub fn new(norms: Vec<f64>) -> Result<Self> {
        if norms.is_empty() {
            return Err(Error::EmptyInput("norms"));
        }
        if let Some(bad) = norms.iter().find(|h| !h.is_finite() || **h < 0.0) {
            return Err(Error::param("norms", format!("norm {bad} is negative or non-finite")));
        }
        Ok(DualKernelNorms(norms))
    }

    pub fn norms(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn kernel_norms(v: &DVector<f64>, kernels: &KernelSet) -> Result<DualKernelNorms> {
    if v.len() != kernels.n() {
        return Err(Error::DimensionMismatch {
            what: "coefficients",
            expected: kernels.n(),
            got: v.len(),
        });
    }
    // Jitter can push v'Kv a hair negative; clamp before the root.
    let norms = kernels.iter().map(|k| k.quad_form(v).max(0.0).sqrt()).collect();
    DualKernelNorms::new(norms)
}

/// Exponent tying weights to block norms under the pure block-norm penalty.
fn blocknorm_exponent(p: f64) -> Result<f64> {
    if !p.is_finite() || p <= 1.0 {
        return Err(Error::param("p", "block-norm recovery needs finite p > 1"));
    }
    Ok((2.0 - p) / (p - 1.0))
}

/// Mixture shares under the pure block-norm penalty: proportional to
/// `h_m^((2-p)/(p-1))`, rescaled to sum one.
///
/// Kernels with a zero block norm get zero weight; for `p > 2`, where the
/// exponent is negative, that is a convention (the kernel contributes
/// nothing to the predictor either way).
pub fn recover_blocknorm(norms: &DualKernelNorms, p: f64) -> Result<KernelWeights> {
    let e = blocknorm_exponent(p)?;
    let h = norms.norms();
    let href = h.iter().copied().fold(0.0f64, f64::max);
    if href == 0.0 {
        return Err(Error::AllNormsZero);
    }
    // Factoring out the max keeps h^e finite for the large positive
    // exponents near p = 1.
    let w: Vec<f64> = h
        .iter()
        .map(|&hm| {
            if hm == 0.0 && e < 0.0 {
                0.0
            } else {
                (hm / href).powf(e)
            }
        })
        .collect();
    let total: f64 = w.iter().sum();
    KernelWeights::sum_to_one(w.iter().map(|v| v / total).collect())
}

/// KKT-scaled weights under the pure block-norm penalty:
/// `theta_m = (h_m / ||h||_{p*})^((2-p)/(p-1))`.
///
/// This is the scale at which `sum_m theta_m K_m` reproduces the primal
/// predictor, so it is what training stores in the model; it also closes
/// the duality gap. At `p = 2` it is exactly the all-ones vector.
pub fn recover_blocknorm_scaled(norms: &DualKernelNorms, p: f64) -> Result<KernelWeights> {
    let e = blocknorm_exponent(p)?;
    let pstar = conjugate_exponent(p)?;
    let h = norms.norms();
    let n = block_norm(h, pstar)?;
    if n == 0.0 {
        return Err(Error::AllNormsZero);
    }
    let theta = h
        .iter()
        .map(|&hm| {
            if hm == 0.0 && e < 0.0 {
                0.0
            } else {
                (hm / n).powf(e)
            }
        })
        .collect();
    KernelWeights::raw(theta)
}

/// Residuals of the elastic-net stationarity system at `theta`:
/// `mu theta_m b_m + theta_m^eps A - b_m` with `b_m = h_m^(1-eps)` and
/// `A = (sum_k theta_k^(1+eps) h_k^(1+eps))^(1-eps)`.
pub fn elasticnet_residuals(theta: &[f64], norms: &DualKernelNorms, mu: f64, eps: f64) -> Vec<f64> {
    let h = norms.norms();
    let a = coupling(theta, h, eps);
    theta
        .iter()
        .zip(h)
        .map(|(&t, &hm)| {
            let b = hm.powf(1.0 - eps);
            mu * t * b + t.powf(eps) * a - b
        })
        .collect()
}

fn coupling(theta: &[f64], h: &[f64], eps: f64) -> f64 {
    let t: f64 = theta
        .iter()
        .zip(h)
        .map(|(&t, &hm)| t.powf(1.0 + eps) * hm.powf(1.0 + eps))
        .sum();
    t.powf(1.0 - eps)
}

/// Solves the elastic-net system by bisecting the coupling value: for a
/// trial `A` every scalar equation is solved on `[0, 1/mu]`, and the sign of
/// `coupling(theta(A)) - A` steers the bracket. The result must satisfy
/// every residual to within `tol * max(1, b_m)`.
pub fn recover_elasticnet(
    norms: &DualKernelNorms,
    mu: f64,
    eps: f64,
    tol: f64,
    max_iter: usize,
) -> Result<KernelWeights> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::param("mu", "elastic-net recovery needs mu > 0"));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::param("eps", "must lie in (0, 1)"));
    }
    if !(tol > 0.0) {
        return Err(Error::param("tol", "must be positive"));
    }
    let h = norms.norms();
    if h.iter().all(|&v| v == 0.0) {
        return Err(Error::AllNormsZero);
    }
    let b: Vec<f64> = h.iter().map(|&hm| hm.powf(1.0 - eps)).collect();
    let theta_at = |a: f64| -> Vec<f64> {
        b.iter().map(|&bm| scalar_root(bm, mu, eps, a)).collect()
    };
    let mismatch = |a: f64| coupling(&theta_at(a), h, eps) - a;

    // mismatch(0) > 0 because some h_m is positive; grow the bracket until
    // the far end is on the negative side, then bisect to exhaustion.
    let mut lo = 0.0f64;
    let mut hi = coupling(&theta_at(0.0), h, eps).max(1.0);
    let mut steps = 0usize;
    while mismatch(hi) > 0.0 {
        hi *= 2.0;
        steps += 1;
        if steps > max_iter || !hi.is_finite() {
            return Err(Error::NoConvergence { residual: f64::INFINITY });
        }
    }
    while steps < max_iter {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if mismatch(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        steps += 1;
    }

    let theta = theta_at(0.5 * (lo + hi));
    let worst = elasticnet_residuals(&theta, norms, mu, eps)
        .iter()
        .zip(&b)
        .map(|(r, bm)| r.abs() / bm.max(1.0))
        .fold(0.0f64, f64::max);
    if worst <= tol {
        KernelWeights::raw(theta)
    } else {
        Err(Error::NoConvergence { residual: worst })
    }
}

/// Root of `g(t) = mu b t + A t^eps - b` on `[0, 1/mu]`; `g` is strictly
/// increasing with `g(0) <= 0 <= g(1/mu)`, so plain bisection suffices.
/// The root can sit at scale `(b/A)^(1/eps)`, far into the subnormals for
/// small `eps`, so bisect until the interval has no interior point left
/// (at most ~1100 halvings from any starting width).
fn scalar_root(b: f64, mu: f64, eps: f64, a: f64) -> f64 {
    if b == 0.0 {
        return 0.0;
    }
    if a == 0.0 {
        return 1.0 / mu;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0 / mu);
    for _ in 0..1200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        let g = mu * b * mid + a * mid.powf(eps) - b;
        if g > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Kernel weights at a dual solution, on the KKT (raw) scale: block-norm
/// recovery when `mu = 0`, the elastic-net system otherwise.
pub fn theta_from_solution(sol: &SolveResult, prob: &LabeledProblem) -> Result<KernelWeights> {
    let cfg = prob.config();
    let v = sol.point.coefficients(prob.labels());
    let norms = kernel_norms(&v, prob.kernels())?;
    if cfg.mu == 0.0 {
        recover_blocknorm_scaled(&norms, cfg.p)
    } else {
        recover_elasticnet(&norms, cfg.mu, cfg.en_eps, 1e-10, 100_000)
    }
}

/// Primal-minus-dual objective slack at a dual solution. Nonnegative up to
/// roundoff; tightens to zero as the solver converges (for `mu = 0`).
pub fn duality_gap(sol: &SolveResult, prob: &LabeledProblem) -> Result<f64> {
    let theta = theta_from_solution(sol, prob)?;
    let primal = crate::objective::primal_objective(&theta, &sol.point, prob)?;
    Ok(primal - sol.objective)
}

//! The regularized risk objective in dual form.
//!
//! The primal problem is
//!
//! ```text
//! min_w  C * sum_i loss(<w, phi(x_i)>, y_i) + 1/2 ||w||_{2,p}^2 + mu/2 ||w||_2^2
//! ```
//!
//! where `w` splits into one block per kernel and `||w||_{2,p}` is the l_p
//! norm of the per-block Euclidean norms. The solver works on the dual: with
//! `v = alpha .* y - gamma`, `s_m = sqrt(v' K_m v)`, and `p* = p/(p-1)`,
//!
//! ```text
//! D(alpha, gamma) = 1'alpha - 1/2 ||(s_1..s_M)||_{p*}^2 - 1/(2 mu) gamma' K gamma
//! ```
//!
//! over `0 <= alpha <= C` (hinge loss), with `K` the unweighted kernel sum.
//! When `mu = 0` the ridge term and `gamma` drop out. Squared loss replaces
//! the box by a free `alpha` and subtracts `||alpha||^2 / (4C)`.
//!
//! Block energies `v' K_m v` are floored at `smooth_eps` before the square
//! root so the gradient stays defined where a block vanishes; the floor
//! replaces each concave `s_m` term by a constant exactly where it is below
//! the floor, which preserves concavity of the dual.

use nalgebra::{DMatrix, DVector};

use crate::kernels::KernelSet;
use crate::weights::KernelWeights;
use crate::{Error, Result};

/// Loss functions on a single margin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    Hinge,
    Squared,
}

impl std::fmt::Display for Loss {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Loss::Hinge => "hinge",
            Loss::Squared => "squared",
        })
    }
}

impl std::str::FromStr for Loss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hinge" => Ok(Loss::Hinge),
            "squared" => Ok(Loss::Squared),
            other => Err(Error::param("loss", format!("unknown loss {other:?}"))),
        }
    }
}

/// Problem parameters: block-norm exponent, ridge weight, loss scale.
#[derive(Debug, Clone, PartialEq)]
pub struct MklConfig {
    /// Block-norm exponent, in `[P_MIN, P_MAX]`.
    pub p: f64,
    /// Ridge weight; `0` selects the pure block-norm penalty.
    pub mu: f64,
    /// Loss scale (the box upper bound for hinge loss).
    pub c: f64,
    pub loss: Loss,
    /// Floor on block energies `v' K_m v` before the square root.
    pub smooth_eps: f64,
    /// Exponent offset for elastic-net weight recovery.
    pub en_eps: f64,
}

impl MklConfig {
    /// Smallest supported exponent; stands in for `p = 1`.
    pub const P_MIN: f64 = 64.0 / 63.0;
    /// Largest supported exponent; stands in for `p = inf`.
    pub const P_MAX: f64 = 64.0;

    pub const DEFAULT_SMOOTH_EPS: f64 = 1e-12;
    pub const DEFAULT_EN_EPS: f64 = 0.01;

    pub fn new(p: f64, mu: f64, c: f64, loss: Loss) -> Result<Self> {
        if !p.is_finite() || !(Self::P_MIN..=Self::P_MAX).contains(&p) {
            return Err(Error::param(
                "p",
                format!("{p} outside supported range [{}, {}]", Self::P_MIN, Self::P_MAX),
            ));
        }
        if !mu.is_finite() || mu < 0.0 {
            return Err(Error::param("mu", "must be finite and nonnegative"));
        }
        if !c.is_finite() || c <= 0.0 {
            return Err(Error::param("c", "must be finite and positive"));
        }
        Ok(MklConfig {
            p,
            mu,
            c,
            loss,
            smooth_eps: Self::DEFAULT_SMOOTH_EPS,
            en_eps: Self::DEFAULT_EN_EPS,
        })
    }

    pub fn with_smooth_eps(mut self, eps: f64) -> Result<Self> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::param("smooth_eps", "must be positive and finite"));
        }
        self.smooth_eps = eps;
        Ok(self)
    }

    pub fn with_en_eps(mut self, eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::param("en_eps", "must lie in (0, 1)"));
        }
        self.en_eps = eps;
        Ok(self)
    }

    /// `p* = p / (p - 1)`.
    pub fn conjugate_p(&self) -> f64 {
        conjugate_exponent(self.p).expect("config p is validated > 1")
    }
}

/// Holder conjugate `p/(p-1)`; requires `p > 1`.
pub fn conjugate_exponent(p: f64) -> Result<f64> {
    if !p.is_finite() || p <= 1.0 {
        return Err(Error::param("p", "conjugate exponent needs finite p > 1"));
    }
    Ok(p / (p - 1.0))
}

/// l_p norm of a vector of nonnegative block norms.
///
/// Factors out the largest entry so the powers stay in `[0, 1]`; large
/// exponents (up to 64 here) would otherwise overflow on entries around
/// `1e5` and beyond.
pub fn block_norm(s: &[f64], p: f64) -> Result<f64> {
    if !p.is_finite() || p < 1.0 {
        return Err(Error::param("p", "norm exponent must be finite and >= 1"));
    }
    let mut max = 0.0f64;
    for &v in s {
        if !(v >= 0.0) {
            return Err(Error::param("s", format!("block norm {v} is negative or NaN")));
        }
        max = max.max(v);
    }
    if max == 0.0 {
        return Ok(0.0);
    }
    let sum: f64 = s.iter().map(|&v| (v / max).powf(p)).sum();
    Ok(max * sum.powf(1.0 / p))
}

/// Fenchel conjugate of the loss, `sup_f (t f - loss(f, y))`, used when
/// reasoning about the dual. Hinge: `t/y` on `-1 <= t/y <= 0`, infinite
/// elsewhere. Squared: `t^2/4 + t y`.
pub fn dual_loss(loss: Loss, t: f64, y: f64) -> f64 {
    match loss {
        Loss::Hinge => {
            debug_assert!(y == 1.0 || y == -1.0);
            let r = t / y;
            if (-1.0..=0.0).contains(&r) {
                r
            } else {
                f64::INFINITY
            }
        }
        Loss::Squared => t * t / 4.0 + t * y,
    }
}

/// A dual iterate. `gamma` is identically zero whenever `mu = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPoint {
    pub alpha: DVector<f64>,
    pub gamma: DVector<f64>,
}

impl DualPoint {
    pub fn new(alpha: DVector<f64>, gamma: DVector<f64>) -> Result<Self> {
        if alpha.len() != gamma.len() {
            return Err(Error::DimensionMismatch {
                what: "gamma",
                expected: alpha.len(),
                got: gamma.len(),
            });
        }
        Ok(DualPoint { alpha, gamma })
    }

    pub fn from_alpha(alpha: DVector<f64>) -> Self {
        let n = alpha.len();
        DualPoint {
            alpha,
            gamma: DVector::zeros(n),
        }
    }

    pub fn n(&self) -> usize {
        self.alpha.len()
    }

    /// `v = alpha .* y - gamma`, the expansion coefficients of `w`.
    pub fn coefficients(&self, labels: &DVector<f64>) -> DVector<f64> {
        let mut v = self.alpha.component_mul(labels);
        v -= &self.gamma;
        v
    }
}

/// A training problem: kernels, labels in `{-1, +1}`, and configuration.
#[derive(Debug, Clone)]
pub struct LabeledProblem {
    kernels: KernelSet,
    labels: DVector<f64>,
    config: MklConfig,
    /// Unweighted kernel sum, kept only for the ridge path.
    k_sum: Option<DMatrix<f64>>,
}

impl LabeledProblem {
    pub fn new(kernels: KernelSet, labels: Vec<f64>, config: MklConfig) -> Result<Self> {
        if labels.len() != kernels.n() {
            return Err(Error::DimensionMismatch {
                what: "labels",
                expected: kernels.n(),
                got: labels.len(),
            });
        }
        if let Some(bad) = labels.iter().find(|&&y| y != 1.0 && y != -1.0) {
            return Err(Error::param("labels", format!("entry {bad} is not -1 or +1")));
        }
        let k_sum = (config.mu > 0.0).then(|| kernels.summed());
        Ok(LabeledProblem {
            kernels,
            labels: DVector::from_vec(labels),
            config,
            k_sum,
        })
    }

    pub fn n(&self) -> usize {
        self.kernels.n()
    }

    pub fn m(&self) -> usize {
        self.kernels.m()
    }

    pub fn kernels(&self) -> &KernelSet {
        &self.kernels
    }

    pub fn labels(&self) -> &DVector<f64> {
        &self.labels
    }

    pub fn config(&self) -> &MklConfig {
        &self.config
    }
}

/// Objective value and gradient at one dual point.
#[derive(Debug, Clone)]
pub struct DualEval {
    pub objective: f64,
    pub grad_alpha: DVector<f64>,
    /// Present exactly when `mu > 0`; `gamma` is not a variable otherwise.
    pub grad_gamma: Option<DVector<f64>>,
}

/// Evaluates the dual objective and its gradient in one pass.
///
/// The gradient costs only O(M n) on top of the objective's O(M n^2) matrix
/// products, so there is no separate value-only path.
pub fn dual_eval(point: &DualPoint, prob: &LabeledProblem) -> Result<DualEval> {
    let n = prob.n();
    let cfg = &prob.config;
    if point.n() != n {
        return Err(Error::DimensionMismatch {
            what: "dual point",
            expected: n,
            got: point.n(),
        });
    }
    if cfg.mu == 0.0 && point.gamma.iter().any(|&g| g != 0.0) {
        return Err(Error::param("gamma", "must be zero when mu = 0"));
    }

    let pstar = cfg.conjugate_p();
    let v = point.coefficients(&prob.labels);

    // Block energies and their matvecs; u_m is reused by the gradient.
    let m = prob.m();
    let mut u = Vec::with_capacity(m);
    let mut s = Vec::with_capacity(m);
    let mut floored = Vec::with_capacity(m);
    for km in prob.kernels.iter() {
        let um = km.matvec(&v);
        let q = v.dot(&um);
        floored.push(q <= cfg.smooth_eps);
        s.push(q.max(cfg.smooth_eps).sqrt());
        u.push(um);
    }
    let big_s = block_norm(&s, pstar)?;

    let mut objective = point.alpha.sum() - 0.5 * big_s * big_s;

    // r = grad of 1/2 ||(s_m)||_{p*}^2 with respect to v. Floored blocks are
    // locally constant and contribute nothing.
    let mut r = DVector::zeros(n);
    for (i, um) in u.iter().enumerate() {
        if floored[i] {
            continue;
        }
        r.axpy((s[i] / big_s).powf(pstar - 2.0), um, 1.0);
    }

    let mut grad_alpha = DVector::from_element(n, 1.0);
    for i in 0..n {
        grad_alpha[i] -= prob.labels[i] * r[i];
    }

    if cfg.loss == Loss::Squared {
        objective -= point.alpha.norm_squared() / (4.0 * cfg.c);
        grad_alpha.axpy(-1.0 / (2.0 * cfg.c), &point.alpha, 1.0);
    }

    let grad_gamma = if cfg.mu > 0.0 {
        let k_sum = prob.k_sum.as_ref().expect("k_sum precomputed when mu > 0");
        let w = k_sum * &point.gamma;
        objective -= point.gamma.dot(&w) / (2.0 * cfg.mu);
        let mut gg = r;
        gg.axpy(-1.0 / cfg.mu, &w, 1.0);
        Some(gg)
    } else {
        None
    };

    Ok(DualEval {
        objective,
        grad_alpha,
        grad_gamma,
    })
}

pub fn dual_objective(point: &DualPoint, prob: &LabeledProblem) -> Result<f64> {
    dual_eval(point, prob).map(|e| e.objective)
}

pub fn dual_gradient(point: &DualPoint, prob: &LabeledProblem) -> Result<(DVector<f64>, Option<DVector<f64>>)> {
    dual_eval(point, prob).map(|e| (e.grad_alpha, e.grad_gamma))
}

/// Evaluates the primal objective for the weight vector implied by mixture
/// weights `theta` and expansion coefficients `v = alpha .* y - gamma`:
/// block `m` of `w` is `theta_m` times the feature expansion of `v` under
/// kernel `m`, so `||w_m|| = theta_m sqrt(v' K_m v)` and predictions are
/// `f = sum_m theta_m K_m v`.
pub fn primal_objective(theta: &KernelWeights, point: &DualPoint, prob: &LabeledProblem) -> Result<f64> {
    let cfg = &prob.config;
    if theta.len() != prob.m() {
        return Err(Error::DimensionMismatch {
            what: "theta",
            expected: prob.m(),
            got: theta.len(),
        });
    }
    if point.n() != prob.n() {
        return Err(Error::DimensionMismatch {
            what: "dual point",
            expected: prob.n(),
            got: point.n(),
        });
    }
    let v = point.coefficients(&prob.labels);

    let mut f = DVector::zeros(prob.n());
    let mut wnorms = Vec::with_capacity(prob.m());
    for (m, km) in prob.kernels.iter().enumerate() {
        let um = km.matvec(&v);
        let q = v.dot(&um).max(0.0);
        wnorms.push(theta.get(m) * q.sqrt());
        f.axpy(theta.get(m), &um, 1.0);
    }

    let mut loss_sum = 0.0;
    for i in 0..prob.n() {
        let (fi, yi) = (f[i], prob.labels[i]);
        loss_sum += match cfg.loss {
            Loss::Hinge => (1.0 - yi * fi).max(0.0),
            Loss::Squared => (fi - yi) * (fi - yi),
        };
    }

    let bn = block_norm(&wnorms, cfg.p)?;
    let ridge = 0.5 * cfg.mu * wnorms.iter().map(|w| w * w).sum::<f64>();
    Ok(cfg.c * loss_sum + 0.5 * bn * bn + ridge)
}

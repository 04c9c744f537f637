//! Rademacher complexity bounds for block-norm regularized kernel mixtures.
//!
//! For the classifier class whose per-kernel block norms `(||w_1||, ...,
//! ||w_M||)` satisfy `C1 ||.||_p + C2 ||.||_q <= 1` (kernels normalized to
//! unit diagonal), the Rademacher complexity obeys
//!
//! ```text
//! R <= M / (C1 M^(1/p) + C2 M^(1/q)) * (sqrt(2 ln M / n) + sqrt(1/n))
//! ```
//!
//! improving to the same prefactor times `sqrt(1/n)` when both exponents are
//! at least 2. A complexity estimate plugs into the usual high-probability
//! risk bound `emp + 2 L R + sqrt(8 ln(2/delta) / n)`.
//!
//! Unlike the trainer, which only handles exponents in a closed interval
//! inside `(1, inf)`, the calculator accepts `p = 1` and `q = 1` exactly.

use crate::{Error, Result};

/// Inputs for the complexity and risk bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams {
    /// Number of kernels.
    pub m: usize,
    /// Sample size.
    pub n: usize,
    /// First block-norm exponent, `>= 1`.
    pub p: f64,
    /// Second exponent of the interpolated norm, `>= 1`.
    pub q: f64,
    /// Interpolation weights; must satisfy `c1 + c2 = 1`.
    pub c1: f64,
    pub c2: f64,
    /// Empirical risk term for [`generalization_bound`].
    pub emp_risk: f64,
    /// Loss Lipschitz constant.
    pub lipschitz: f64,
    /// Confidence parameter in `(0, 1)`.
    pub delta: f64,
}

impl BoundParams {
    pub fn new(m: usize, n: usize, p: f64, q: f64, c1: f64, c2: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::param("m", "need at least one kernel"));
        }
        if n == 0 {
            return Err(Error::param("n", "need at least one sample"));
        }
        if !p.is_finite() || p < 1.0 {
            return Err(Error::param("p", "exponent must be finite and >= 1"));
        }
        if !q.is_finite() || q < 1.0 {
            return Err(Error::param("q", "exponent must be finite and >= 1"));
        }
        if !(c1 >= 0.0) || !(c2 >= 0.0) || (c1 + c2 - 1.0).abs() > 1e-12 {
            return Err(Error::param("c1", "weights must be nonnegative with c1 + c2 = 1"));
        }
        Ok(BoundParams {
            m,
            n,
            p,
            q,
            c1,
            c2,
            emp_risk: 0.0,
            lipschitz: 1.0,
            delta: 0.05,
        })
    }

    /// Pure `l_p` block-norm constraint: `q = p`, all weight on `c1`.
    pub fn single_exponent(m: usize, n: usize, p: f64) -> Result<Self> {
        Self::new(m, n, p, p, 1.0, 0.0)
    }

    pub fn with_risk(mut self, emp_risk: f64, lipschitz: f64, delta: f64) -> Result<Self> {
        if !emp_risk.is_finite() || emp_risk < 0.0 {
            return Err(Error::param("emp_risk", "must be finite and nonnegative"));
        }
        if !(lipschitz > 0.0) || !lipschitz.is_finite() {
            return Err(Error::param("lipschitz", "must be positive and finite"));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::param("delta", "must lie in (0, 1)"));
        }
        self.emp_risk = emp_risk;
        self.lipschitz = lipschitz;
        self.delta = delta;
        Ok(self)
    }

    fn prefactor(&self) -> f64 {
        let m = self.m as f64;
        m / (self.c1 * m.powf(1.0 / self.p) + self.c2 * m.powf(1.0 / self.q))
    }
}

/// The complexity bound valid for all exponents `>= 1`.
pub fn rademacher_bound_general(params: &BoundParams) -> f64 {
    let n = params.n as f64;
    let m = params.m as f64;
    params.prefactor() * ((2.0 * m.ln() / n).sqrt() + (1.0 / n).sqrt())
}

/// The sharper bound, defined only when `p >= 2` and `q >= 2`.
pub fn rademacher_bound_improved(params: &BoundParams) -> Option<f64> {
    if params.p >= 2.0 && params.q >= 2.0 {
        Some(params.prefactor() * (1.0 / params.n as f64).sqrt())
    } else {
        None
    }
}

/// Complexity bound, automatically using the sharper form where it applies.
pub fn rademacher_bound(params: &BoundParams) -> f64 {
    rademacher_bound_improved(params).unwrap_or_else(|| rademacher_bound_general(params))
}

/// High-probability risk bound `emp + 2 L R + sqrt(8 ln(2/delta) / n)` for
/// a complexity estimate `rademacher`.
pub fn generalization_bound(params: &BoundParams, rademacher: f64) -> Result<f64> {
    if !rademacher.is_finite() || rademacher < 0.0 {
        return Err(Error::param("rademacher", "must be finite and nonnegative"));
    }
    let n = params.n as f64;
    Ok(params.emp_risk
        + 2.0 * params.lipschitz * rademacher
        + (8.0 * (2.0 / params.delta).ln() / n).sqrt())
}

/// One row of the consistency report produced by
/// [`literature_consistency_report`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub label: String,
    pub p: f64,
    pub q: f64,
    pub c1: f64,
    /// The all-exponent bound; rows are comparable in this column.
    pub general: f64,
    /// The sharper value where both exponents allow it.
    pub improved: Option<f64>,
}

/// Evaluates the bound across the settings discussed alongside the theorem:
/// `l1`, `l4/3` (the kernel-weight `l2` penalty in block-norm form), `l2`,
/// and the elastic-net interpolation `p=1, q=2` over a grid of `c1`. The
/// `c1 = 1` elastic-net row reproduces `l1` exactly and the `c1 = 0` row
/// reproduces `l2`, growing by at most `sqrt(M)` in between.
pub fn literature_consistency_report(m: usize, n: usize) -> Result<Vec<ReportRow>> {
    if m < 2 {
        return Err(Error::param("m", "scaling comparisons need at least two kernels"));
    }
    let mut rows = Vec::new();
    for (label, p) in [("l1", 1.0), ("l4/3", 4.0 / 3.0), ("l2", 2.0)] {
        let params = BoundParams::single_exponent(m, n, p)?;
        rows.push(ReportRow {
            label: label.to_string(),
            p,
            q: p,
            c1: 1.0,
            general: rademacher_bound_general(&params),
            improved: rademacher_bound_improved(&params),
        });
    }
    for c1 in [1.0, 0.75, 0.5, 0.25, 0.0] {
        let params = BoundParams::new(m, n, 1.0, 2.0, c1, 1.0 - c1)?;
        rows.push(ReportRow {
            label: format!("elastic c1={c1}"),
            p: 1.0,
            q: 2.0,
            c1,
            general: rademacher_bound_general(&params),
            improved: rademacher_bound_improved(&params),
        });
    }
    Ok(rows)
}

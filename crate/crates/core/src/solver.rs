//! Box-constrained quasi-Newton maximization of the dual objective.
//!
//! Internally this minimizes the negated dual with a projected L-BFGS
//! scheme: coordinates pinned at an active bound by the gradient are masked
//! out of the two-loop recursion, search moves along the projected path
//! `clamp(x + t d)` with Armijo backtracking, and curvature pairs are only
//! stored when they keep the inverse Hessian approximation positive
//! definite. When a quasi-Newton direction fails the line search the memory
//! is dropped and the next pass falls back to projected steepest descent.

use std::collections::VecDeque;

use nalgebra::DVector;

use crate::objective::{dual_eval, DualPoint, LabeledProblem, Loss};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Convergence threshold on the infinity norm of the projected gradient.
    pub tol: f64,
    pub max_iter: usize,
    /// Number of curvature pairs retained by the two-loop recursion.
    pub history: usize,
    /// Recorded for provenance; the solver itself draws nothing at random.
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-6,
            max_iter: 5000,
            history: 10,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || !self.tol.is_finite() {
            return Err(Error::param("tol", "must be positive and finite"));
        }
        if self.max_iter == 0 {
            return Err(Error::param("max_iter", "must be at least 1"));
        }
        if self.history == 0 {
            return Err(Error::param("history", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub point: DualPoint,
    /// Dual objective at `point`.
    pub objective: f64,
    /// Accepted ascent steps.
    pub iterations: usize,
    /// Whether the projected gradient dropped below `tol`.
    pub converged: bool,
    pub projected_grad_norm: f64,
    /// Primal-minus-dual slack; filled in by [`crate::model::train`] once
    /// kernel weights are recovered.
    pub duality_gap: Option<f64>,
}

/// Clamps every coordinate into `[0, c]`.
pub fn project_box(alpha: &DVector<f64>, c: f64) -> DVector<f64> {
    debug_assert!(c > 0.0);
    alpha.map(|x| x.clamp(0.0, c))
}

pub fn solve(prob: &LabeledProblem, cfg: &SolverConfig) -> Result<SolveResult> {
    solve_traced(prob, cfg).map(|(res, _)| res)
}

/// Like [`solve`], additionally returning the dual objective at every
/// accepted iterate (strictly increasing by construction).
pub fn solve_traced(prob: &LabeledProblem, cfg: &SolverConfig) -> Result<(SolveResult, Vec<f64>)> {
    cfg.validate()?;
    let n = prob.n();
    let mcfg = prob.config();
    let ridge = mcfg.mu > 0.0;
    let boxed = mcfg.loss == Loss::Hinge;
    let dim = if ridge { 2 * n } else { n };

    let (lo, hi) = if boxed {
        (0.0, mcfg.c)
    } else {
        (f64::NEG_INFINITY, f64::INFINITY)
    };
    let lower = |i: usize| if i < n { lo } else { f64::NEG_INFINITY };
    let upper = |i: usize| if i < n { hi } else { f64::INFINITY };

    let unpack = |x: &DVector<f64>| -> DualPoint {
        let alpha = DVector::from_fn(n, |i, _| x[i]);
        let gamma = if ridge {
            DVector::from_fn(n, |i, _| x[n + i])
        } else {
            DVector::zeros(n)
        };
        DualPoint { alpha, gamma }
    };

    // Minimize f = -D. Non-finite values anywhere are a hard failure.
    let eval = |x: &DVector<f64>, iteration: usize| -> Result<(f64, DVector<f64>)> {
        let e = dual_eval(&unpack(x), prob)?;
        let mut g = DVector::zeros(dim);
        for i in 0..n {
            g[i] = -e.grad_alpha[i];
        }
        if let Some(gg) = &e.grad_gamma {
            for i in 0..n {
                g[n + i] = -gg[i];
            }
        }
        if !e.objective.is_finite() {
            return Err(Error::NonFinite {
                what: "objective",
                iteration,
            });
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "gradient",
                iteration,
            });
        }
        Ok((-e.objective, g))
    };

    let projected_grad_norm = |x: &DVector<f64>, g: &DVector<f64>| -> f64 {
        let mut worst = 0.0f64;
        for i in 0..dim {
            let pg = if x[i] <= lower(i) {
                g[i].min(0.0)
            } else if x[i] >= upper(i) {
                g[i].max(0.0)
            } else {
                g[i]
            };
            worst = worst.max(pg.abs());
        }
        worst
    };

    // Deterministic interior start; gamma at zero.
    let mut x = DVector::zeros(dim);
    let a0 = 0.5 * mcfg.c.min(1.0);
    for i in 0..n {
        x[i] = a0;
    }

    let (mut f, mut g) = eval(&x, 0)?;
    let mut trace = vec![-f];
    let mut pairs: VecDeque<(DVector<f64>, DVector<f64>, f64)> = VecDeque::new();
    let mut iterations = 0usize;
    let mut flat_count = 0usize;

    for k in 0..cfg.max_iter {
        if projected_grad_norm(&x, &g) <= cfg.tol {
            break;
        }

        // Mask coordinates the bounds are actively holding.
        let binding: Vec<bool> = (0..dim)
            .map(|i| (x[i] <= lower(i) && g[i] >= 0.0) || (x[i] >= upper(i) && g[i] <= 0.0))
            .collect();
        let mut gm = g.clone();
        for i in 0..dim {
            if binding[i] {
                gm[i] = 0.0;
            }
        }

        let mut d = if pairs.is_empty() {
            -&gm
        } else {
            -two_loop(&pairs, &gm)
        };
        for i in 0..dim {
            if binding[i] {
                d[i] = 0.0;
            }
        }
        if d.dot(&g) >= 0.0 {
            pairs.clear();
            d = -gm;
        }

        // Backtrack along the projected path.
        let mut accepted = None;
        let mut t = 1.0;
        for _ in 0..60 {
            let mut xt = &x + t * &d;
            for i in 0..dim {
                xt[i] = xt[i].clamp(lower(i), upper(i));
            }
            let step = &xt - &x;
            if step.norm_squared() == 0.0 {
                break;
            }
            let slope = g.dot(&step);
            if slope < 0.0 {
                let (ft, gt) = eval(&xt, k + 1)?;
                if ft <= f + 1e-4 * slope {
                    accepted = Some((xt, step, ft, gt));
                    break;
                }
            }
            t *= 0.5;
        }

        let Some((xt, step, ft, gt)) = accepted else {
            if pairs.is_empty() {
                // Projected steepest descent cannot improve: numerically
                // stalled, leave with whatever the iterate gives.
                break;
            }
            pairs.clear();
            continue;
        };

        let yv = &gt - &g;
        let sy = step.dot(&yv);
        if sy > 1e-12 * step.norm() * yv.norm() {
            pairs.push_back((step, yv, 1.0 / sy));
            while pairs.len() > cfg.history {
                pairs.pop_front();
            }
        }

        let prev = f;
        x = xt;
        f = ft;
        g = gt;
        iterations += 1;
        trace.push(-f);

        // Objective-plateau stop: ten consecutive relative changes under 1e-12.
        if (prev - f).abs() <= 1e-12 * f.abs().max(1.0) {
            flat_count += 1;
            if flat_count >= 10 {
                break;
            }
        } else {
            flat_count = 0;
        }
    }

    let pg = projected_grad_norm(&x, &g);
    let result = SolveResult {
        point: unpack(&x),
        objective: -f,
        iterations,
        converged: pg <= cfg.tol,
        projected_grad_norm: pg,
        duality_gap: None,
    };
    Ok((result, trace))
}

/// Two-loop recursion: applies the L-BFGS inverse Hessian estimate to `g`.
fn two_loop(pairs: &VecDeque<(DVector<f64>, DVector<f64>, f64)>, g: &DVector<f64>) -> DVector<f64> {
    let mut q = g.clone();
    let mut coeffs = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let a = rho * s.dot(&q);
        q.axpy(-a, y, 1.0);
        coeffs.push(a);
    }
    let (s_last, y_last, _) = pairs.back().expect("two_loop needs at least one pair");
    q *= s_last.dot(y_last) / y_last.dot(y_last);
    for ((s, y, rho), a) in pairs.iter().zip(coeffs.iter().rev()) {
        let b = rho * y.dot(&q);
        q.axpy(a - b, s, 1.0);
    }
    q
}

//! Shared machinery for the acceptance suite: plain-loop reimplementations
//! of the dual objective, a self-contained projected-gradient maximizer, a
//! finite-difference gradient, and a Newton root-finder for the elastic-net
//! weight system. Everything here is written directly against the formulas,
//! on nested `Vec` storage, so agreement with the library is meaningful.

use mklearn::kernels::{name_kernels, GramMatrix, KernelSet};
use mklearn::objective::{LabeledProblem, Loss, MklConfig};
use nalgebra::{DMatrix, DVector};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn report(criterion: usize, label: &str, pass: bool, detail: &str) {
    println!(
        "ACCEPTANCE {criterion} {label}: {} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "acceptance {criterion} {label}: {detail}");
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Random full-rank PSD kernels and balanced-ish labels.
pub fn random_problem(
    rng: &mut ChaCha8Rng,
    n: usize,
    m: usize,
    config: MklConfig,
) -> LabeledProblem {
    let kernels = (0..m)
        .map(|_| {
            let f = DMatrix::from_fn(n, n + 2, |_, _| uniform(rng) * 2.0 - 1.0);
            GramMatrix::from_matrix(&f * f.transpose()).unwrap()
        })
        .collect();
    let mut labels: Vec<f64> = (0..n)
        .map(|_| if uniform(rng) < 0.5 { -1.0 } else { 1.0 })
        .collect();
    labels[0] = 1.0;
    labels[1] = -1.0;
    let set = KernelSet::new(kernels, name_kernels(m)).unwrap();
    LabeledProblem::new(set, labels, config).unwrap()
}

/// The same problem data with library types stripped away.
pub struct RawProblem {
    pub grams: Vec<Vec<Vec<f64>>>,
    pub labels: Vec<f64>,
    pub p: f64,
    pub mu: f64,
    pub c: f64,
    pub squared: bool,
    pub smooth_eps: f64,
}

pub fn raw_from(prob: &LabeledProblem) -> RawProblem {
    let n = prob.n();
    let grams = prob
        .kernels()
        .iter()
        .map(|k| (0..n).map(|i| (0..n).map(|j| k.get(i, j)).collect()).collect())
        .collect();
    let cfg = prob.config();
    RawProblem {
        grams,
        labels: prob.labels().iter().copied().collect(),
        p: cfg.p,
        mu: cfg.mu,
        c: cfg.c,
        squared: cfg.loss == Loss::Squared,
        smooth_eps: cfg.smooth_eps,
    }
}

impl RawProblem {
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    fn v(&self, alpha: &[f64], gamma: &[f64]) -> Vec<f64> {
        (0..self.n())
            .map(|i| alpha[i] * self.labels[i] - if self.mu > 0.0 { gamma[i] } else { 0.0 })
            .collect()
    }

    /// Dual objective by direct summation.
    pub fn objective(&self, alpha: &[f64], gamma: &[f64]) -> f64 {
        let n = self.n();
        let v = self.v(alpha, gamma);
        let pstar = self.p / (self.p - 1.0);

        let mut snorm_p = 0.0;
        for k in &self.grams {
            let mut q = 0.0;
            for i in 0..n {
                for j in 0..n {
                    q += v[i] * k[i][j] * v[j];
                }
            }
            snorm_p += q.max(self.smooth_eps).sqrt().powf(pstar);
        }
        let big_s = snorm_p.powf(1.0 / pstar);

        let mut obj = alpha.iter().sum::<f64>() - 0.5 * big_s * big_s;
        if self.squared {
            obj -= alpha.iter().map(|a| a * a).sum::<f64>() / (4.0 * self.c);
        }
        if self.mu > 0.0 {
            let mut quad = 0.0;
            for k in &self.grams {
                for i in 0..n {
                    for j in 0..n {
                        quad += gamma[i] * k[i][j] * gamma[j];
                    }
                }
            }
            obj -= quad / (2.0 * self.mu);
        }
        obj
    }

    /// Analytic ascent direction, written out coordinate by coordinate.
    fn gradient(&self, alpha: &[f64], gamma: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.n();
        let v = self.v(alpha, gamma);
        let pstar = self.p / (self.p - 1.0);

        let mut s = Vec::new();
        let mut active = Vec::new();
        let mut kv = Vec::new();
        for k in &self.grams {
            let u: Vec<f64> = (0..n).map(|i| (0..n).map(|j| k[i][j] * v[j]).sum()).collect();
            let q: f64 = (0..n).map(|i| v[i] * u[i]).sum();
            active.push(q > self.smooth_eps);
            s.push(q.max(self.smooth_eps).sqrt());
            kv.push(u);
        }
        let big_s = s.iter().map(|x| x.powf(pstar)).sum::<f64>().powf(1.0 / pstar);

        let mut r = vec![0.0; n];
        for ((sm, act), u) in s.iter().zip(&active).zip(&kv) {
            if !act {
                continue;
            }
            let w = (sm / big_s).powf(pstar - 2.0);
            for i in 0..n {
                r[i] += w * u[i];
            }
        }

        let mut ga: Vec<f64> = (0..n).map(|i| 1.0 - self.labels[i] * r[i]).collect();
        if self.squared {
            for i in 0..n {
                ga[i] -= alpha[i] / (2.0 * self.c);
            }
        }
        let mut gg = vec![0.0; n];
        if self.mu > 0.0 {
            for i in 0..n {
                let mut ksum_g = 0.0;
                for k in &self.grams {
                    for j in 0..n {
                        ksum_g += k[i][j] * gamma[j];
                    }
                }
                gg[i] = r[i] - ksum_g / self.mu;
            }
        }
        (ga, gg)
    }

    fn clip_alpha(&self, a: f64) -> f64 {
        if self.squared {
            a
        } else {
            a.clamp(0.0, self.c)
        }
    }

    /// Maximizes the dual by projected gradient ascent with a spectral step
    /// and Armijo halving. Small instances only; returns the best objective.
    pub fn solve_projected_gradient(&self) -> f64 {
        let n = self.n();
        let with_gamma = self.mu > 0.0;
        let mut alpha = vec![0.4 * self.c.min(1.0); n];
        let mut gamma = vec![0.0; n];
        struct Prev {
            a: Vec<f64>,
            g: Vec<f64>,
            ga: Vec<f64>,
            gg: Vec<f64>,
        }
        let mut f = self.objective(&alpha, &gamma);
        let mut step = 1.0;
        let mut prev: Option<Prev> = None;
        let mut flat = 0usize;

        for _ in 0..200_000 {
            let (ga, gg) = self.gradient(&alpha, &gamma);

            // Projected gradient: zero out components pushing into the box.
            let mut pg: f64 = 0.0;
            for i in 0..n {
                let blocked = !self.squared
                    && ((alpha[i] <= 0.0 && ga[i] < 0.0) || (alpha[i] >= self.c && ga[i] > 0.0));
                if !blocked {
                    pg = pg.max(ga[i].abs());
                }
                if with_gamma {
                    pg = pg.max(gg[i].abs());
                }
            }
            if pg <= 1e-10 {
                break;
            }

            // Spectral (Barzilai-Borwein) step from the last move.
            if let Some(p) = &prev {
                let mut ss = 0.0;
                let mut sy = 0.0;
                for i in 0..n {
                    let s = alpha[i] - p.a[i];
                    ss += s * s;
                    sy += s * (p.ga[i] - ga[i]);
                    if with_gamma {
                        let s = gamma[i] - p.g[i];
                        ss += s * s;
                        sy += s * (p.gg[i] - gg[i]);
                    }
                }
                if sy > 1e-300 {
                    step = (ss / sy).clamp(1e-12, 1e8);
                }
            }
            prev = Some(Prev {
                a: alpha.clone(),
                g: gamma.clone(),
                ga: ga.clone(),
                gg: gg.clone(),
            });

            let mut t = step;
            let mut accepted = false;
            for _ in 0..60 {
                let ta: Vec<f64> = (0..n).map(|i| self.clip_alpha(alpha[i] + t * ga[i])).collect();
                let tg: Vec<f64> = if with_gamma {
                    (0..n).map(|i| gamma[i] + t * gg[i]).collect()
                } else {
                    gamma.clone()
                };
                let slope: f64 = (0..n)
                    .map(|i| {
                        ga[i] * (ta[i] - alpha[i])
                            + if with_gamma { gg[i] * (tg[i] - gamma[i]) } else { 0.0 }
                    })
                    .sum();
                let tf = self.objective(&ta, &tg);
                if slope > 0.0 && tf >= f + 1e-4 * slope {
                    let gain = tf - f;
                    alpha = ta;
                    gamma = tg;
                    f = tf;
                    accepted = true;
                    flat = if gain <= 1e-15 * (1.0 + f.abs()) { flat + 1 } else { 0 };
                    break;
                }
                t *= 0.5;
            }
            if !accepted || flat > 400 {
                break;
            }
        }
        f
    }
}

/// Central finite differences of `f` around `x`.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut g = Vec::with_capacity(x.len());
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        g.push((up - down) / (2.0 * h));
    }
    g
}

/// Damped Newton with a finite-difference Jacobian on the elastic-net
/// stationarity system, iterating in `u = theta^eps` coordinates. In that
/// parameterization every power is at least one, so the Jacobian stays
/// bounded even where a weight collapses toward zero. Independent of the
/// library's bisection route. Returns the root mapped back to theta once
/// every u-space residual drops below 1e-12.
pub fn newton_elasticnet(h: &[f64], mu: f64, eps: f64, start: &[f64]) -> Option<Vec<f64>> {
    let m = h.len();
    let b: Vec<f64> = h.iter().map(|&x| x.powf(1.0 - eps)).collect();
    // theta < 1/mu at any root, so u never needs to exceed this.
    let cap = (1.0 / mu).powf(eps);
    let residual = |u: &[f64]| -> Vec<f64> {
        let a = u
            .iter()
            .zip(h)
            .map(|(&um, &x)| um.powf((1.0 + eps) / eps) * x.powf(1.0 + eps))
            .sum::<f64>()
            .powf(1.0 - eps);
        (0..m)
            .map(|i| mu * b[i] * u[i].powf(1.0 / eps) + u[i] * a - b[i])
            .collect()
    };
    let norm = |r: &[f64]| r.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));

    let mut u: Vec<f64> = start
        .iter()
        .map(|&t| t.max(0.0).powf(eps).min(cap))
        .collect();
    let mut res = residual(&u);
    for _ in 0..300 {
        if norm(&res) <= 1e-12 {
            return Some(u.iter().map(|&um| um.powf(1.0 / eps)).collect());
        }
        let mut jac = DMatrix::zeros(m, m);
        for j in 0..m {
            let dh = 1e-8 * (1.0 + u[j].abs());
            let hi = u[j] + dh;
            let lo = (u[j] - dh).max(0.0);
            let mut probe = u.clone();
            probe[j] = hi;
            let up = residual(&probe);
            probe[j] = lo;
            let down = residual(&probe);
            for i in 0..m {
                jac[(i, j)] = (up[i] - down[i]) / (hi - lo);
            }
        }
        let rhs = DVector::from_vec(res.clone());
        let delta = jac.lu().solve(&rhs)?;
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..50 {
            let cand: Vec<f64> =
                (0..m).map(|i| (u[i] - t * delta[i]).clamp(0.0, cap)).collect();
            let cres = residual(&cand);
            if norm(&cres) < norm(&res) {
                u = cand;
                res = cres;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            return None;
        }
    }
    None
}

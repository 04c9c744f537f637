//! Synthetic two-class Gaussian benchmark with a tunable sparsity profile
//! and analytically known Bayes error.
//!
//! Samples are drawn as `x = y * mu + eps`, `eps ~ N(0, I)`, with labels
//! balanced. The mean vector splits into `m` blocks of `block_dim`
//! coordinates; block `j` carries a share of the total energy interpolating
//! between uniform (`sparsity = 0`) and everything-on-the-first-block
//! (`sparsity = 1`), and `||mu||` is scaled so that the Bayes-optimal rule
//! `sign(<mu, x>)` errs with probability exactly `bayes_target`. One linear
//! kernel per block, cosine-normalized, makes the first kernel the only
//! informative one in the sparse extreme and all kernels equally informative
//! in the uniform extreme.

use nalgebra::{DMatrix, DVector};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::kernels::{name_kernels, GramMatrix, KernelSet};
use crate::model::CrossKernelSet;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub m: usize,
    pub block_dim: usize,
    /// Interpolation between uniform block energies (0) and all energy on
    /// the first block (1).
    pub sparsity: f64,
    /// Bayes error of the generated distribution, in `(0, 0.5)`.
    pub bayes_target: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
}

impl Scenario {
    pub fn new(
        m: usize,
        block_dim: usize,
        sparsity: f64,
        bayes_target: f64,
        n_train: usize,
        n_test: usize,
        seed: u64,
    ) -> Result<Self> {
        if m == 0 {
            return Err(Error::param("m", "need at least one block"));
        }
        if block_dim == 0 {
            return Err(Error::param("block_dim", "need at least one coordinate per block"));
        }
        if !(0.0..=1.0).contains(&sparsity) {
            return Err(Error::param("sparsity", "must lie in [0, 1]"));
        }
        if !(bayes_target > 0.0 && bayes_target < 0.5) {
            return Err(Error::param("bayes_target", "must lie in (0, 0.5)"));
        }
        if n_train == 0 || n_test == 0 {
            return Err(Error::param("n_train", "need at least one training and one test sample"));
        }
        Ok(Scenario {
            m,
            block_dim,
            sparsity,
            bayes_target,
            n_train,
            n_test,
            seed,
        })
    }

    pub fn dim(&self) -> usize {
        self.m * self.block_dim
    }
}

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal parameters are valid")
}

/// The class mean. Block `j` receives energy share proportional to
/// `(1 - sparsity) + sparsity * [j == 0]`, spread uniformly over its
/// coordinates, and the whole vector is scaled so `Phi(-||mu||)` equals the
/// Bayes target.
pub fn mean_vector(scn: &Scenario) -> DVector<f64> {
    let energies: Vec<f64> = (0..scn.m)
        .map(|j| (1.0 - scn.sparsity) + if j == 0 { scn.sparsity } else { 0.0 })
        .collect();
    let total: f64 = energies.iter().sum();
    let norm = standard_normal().inverse_cdf(1.0 - scn.bayes_target);
    let mut mu = DVector::zeros(scn.dim());
    for (j, e) in energies.iter().enumerate() {
        let coord = norm * (e / total / scn.block_dim as f64).sqrt();
        for k in 0..scn.block_dim {
            mu[j * scn.block_dim + k] = coord;
        }
    }
    mu
}

/// Minimal achievable test error, `Phi(-||mu||)`; equals the Bayes target
/// by construction.
pub fn bayes_error(scn: &Scenario) -> f64 {
    standard_normal().cdf(-mean_vector(scn).norm())
}

/// A generated dataset: raw samples (rows), labels, cosine-normalized
/// per-block training kernels, and the matching train-by-test cross kernels.
#[derive(Debug, Clone)]
pub struct SynthData {
    pub x_train: DMatrix<f64>,
    pub y_train: Vec<f64>,
    pub x_test: DMatrix<f64>,
    pub y_test: Vec<f64>,
    pub kernels: KernelSet,
    pub cross: CrossKernelSet,
}

pub fn generate(scn: &Scenario) -> Result<SynthData> {
    let mu = mean_vector(scn);
    let mut stream = GaussStream::new(scn.seed);
    let (x_train, y_train) = draw(scn.n_train, &mu, &mut stream);
    let (x_test, y_test) = draw(scn.n_test, &mu, &mut stream);

    let bd = scn.block_dim;
    let mut grams = Vec::with_capacity(scn.m);
    let mut crosses = Vec::with_capacity(scn.m);
    for j in 0..scn.m {
        let b = x_train.columns(j * bd, bd).into_owned();
        let t = x_test.columns(j * bd, bd).into_owned();
        let ns = block_norms(&b, j)?;
        let nt = block_norms(&t, j)?;
        let mut gram = &b * b.transpose();
        for r in 0..gram.nrows() {
            for c in 0..gram.ncols() {
                gram[(r, c)] /= ns[r] * ns[c];
            }
            gram[(r, r)] = 1.0;
        }
        // Mirror to kill the asymmetry left by b * b' rounding.
        for r in 0..gram.nrows() {
            for c in 0..r {
                gram[(c, r)] = gram[(r, c)];
            }
        }
        grams.push(GramMatrix::from_matrix(gram)?);

        let mut cross = &b * t.transpose();
        for r in 0..cross.nrows() {
            for c in 0..cross.ncols() {
                cross[(r, c)] /= ns[r] * nt[c];
            }
        }
        crosses.push(cross);
    }

    Ok(SynthData {
        x_train,
        y_train,
        x_test,
        y_test,
        kernels: KernelSet::new(grams, name_kernels(scn.m))?,
        cross: CrossKernelSet::new(crosses)?,
    })
}

fn draw(n: usize, mu: &DVector<f64>, stream: &mut GaussStream) -> (DMatrix<f64>, Vec<f64>) {
    let d = mu.len();
    let mut x = DMatrix::zeros(n, d);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let label = if stream.uniform() < 0.5 { -1.0 } else { 1.0 };
        for j in 0..d {
            x[(i, j)] = label * mu[j] + stream.gauss();
        }
        y.push(label);
    }
    (x, y)
}

fn block_norms(rows: &DMatrix<f64>, block: usize) -> Result<Vec<f64>> {
    (0..rows.nrows())
        .map(|i| {
            let norm = rows.row(i).norm();
            if norm > 0.0 {
                Ok(norm)
            } else {
                Err(Error::NonPositiveDiagonal {
                    index: block * rows.nrows() + i,
                    value: 0.0,
                })
            }
        })
        .collect()
}

/// Gaussian draws via Box-Muller over a counter-based generator, so every
/// platform with the same seed sees the same stream.
struct GaussStream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl GaussStream {
    fn new(seed: u64) -> Self {
        GaussStream {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    /// Uniform on (0, 1), strictly exclusive, from the top 53 bits.
    fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9007199254740992.0)
    }

    fn gauss(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let r = (-2.0 * self.uniform().ln()).sqrt();
        let t = std::f64::consts::TAU * self.uniform();
        self.spare = Some(r * t.sin());
        r * t.cos()
    }
}

//! Gram matrix construction, validation, normalization, and file I/O.
//!
//! Everything downstream of this module works on precomputed Gram matrices;
//! the kernel functions themselves (linear, RBF, polynomial, string spectrum)
//! only appear here.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Relative tolerance used when validating symmetry of user-supplied matrices.
pub const SYMMETRY_RTOL: f64 = 1e-12;

/// Default relative eigenvalue tolerance for [`check_psd`].
pub const DEFAULT_PSD_TOL: f64 = 1e-8;

/// Largest `n` for which [`check_psd`] will run a full eigendecomposition.
pub const PSD_CHECK_MAX_N: usize = 2000;

/// A validated symmetric kernel matrix.
///
/// Construction guarantees the matrix is square, finite, and symmetric to
/// [`SYMMETRY_RTOL`]. Positive semidefiniteness is only checked on demand via
/// [`check_psd`]; training tolerates small negative eigenvalues anyway.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    mat: DMatrix<f64>,
}

impl GramMatrix {
    /// Validates and wraps a square symmetric matrix.
    pub fn from_matrix(mat: DMatrix<f64>) -> Result<Self> {
        if mat.nrows() == 0 {
            return Err(Error::EmptyInput("gram matrix"));
        }
        if mat.nrows() != mat.ncols() {
            return Err(Error::DimensionMismatch {
                what: "gram matrix columns",
                expected: mat.nrows(),
                got: mat.ncols(),
            });
        }
        for j in 0..mat.ncols() {
            for i in 0..=j {
                let a = mat[(i, j)];
                let b = mat[(j, i)];
                if !a.is_finite() || !b.is_finite() {
                    return Err(Error::param("gram matrix", "entries must be finite"));
                }
                if (a - b).abs() > SYMMETRY_RTOL * a.abs().max(b.abs()).max(1.0) {
                    return Err(Error::Asymmetric { i, j });
                }
            }
        }
        Ok(GramMatrix { mat })
    }

    /// Wraps a matrix that is symmetric by construction.
    pub(crate) fn from_symmetric_unchecked(mat: DMatrix<f64>) -> Self {
        debug_assert_eq!(mat.nrows(), mat.ncols());
        GramMatrix { mat }
    }

    pub fn n(&self) -> usize {
        self.mat.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.mat[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn matvec(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.mat * v
    }

    /// `v' K v`. Nonnegative up to jitter when the matrix is PSD.
    pub fn quad_form(&self, v: &DVector<f64>) -> f64 {
        v.dot(&self.matvec(v))
    }

    pub fn trace(&self) -> f64 {
        self.mat.trace()
    }
}

/// Cosine-normalizes a Gram matrix: `K'[i,j] = K[i,j] / sqrt(K[i,i] K[j,j])`.
///
/// The result has an exactly unit diagonal, which corresponds to rescaling
/// every sample to unit norm in feature space. Fails if any diagonal entry is
/// not strictly positive. Idempotent: normalizing twice is a no-op bit for
/// bit, since the second pass divides by `sqrt(1.0) == 1.0`.
pub fn normalize_gram(k: &GramMatrix) -> Result<GramMatrix> {
    let n = k.n();
    let mut scale = Vec::with_capacity(n);
    for i in 0..n {
        let d = k.get(i, i);
        if d <= 0.0 {
            return Err(Error::NonPositiveDiagonal { index: i, value: d });
        }
        scale.push(d.sqrt());
    }
    let mut out = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..j {
            let v = k.get(i, j) / (scale[i] * scale[j]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
        out[(j, j)] = 1.0;
    }
    Ok(GramMatrix::from_symmetric_unchecked(out))
}

/// Outcome of an eigenvalue-based positive semidefiniteness check.
#[derive(Debug, Clone, Copy)]
pub struct PsdReport {
    pub psd: bool,
    pub min_eigenvalue: f64,
    /// Negative eigenvalues no larger than this in magnitude still pass.
    pub threshold: f64,
}

/// Reports whether `k` is PSD up to jitter: passes when the smallest
/// eigenvalue is at least `-tol * trace/n`.
///
/// Returns `None` for matrices larger than [`PSD_CHECK_MAX_N`], where the
/// dense eigendecomposition would dominate the run; callers should warn and
/// move on. Diagnostic only: nothing downstream requires the check to pass.
pub fn check_psd(k: &GramMatrix, tol: f64) -> Option<PsdReport> {
    let n = k.n();
    if n > PSD_CHECK_MAX_N {
        return None;
    }
    let eig = k.mat.clone().symmetric_eigen();
    let min_eigenvalue = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let threshold = tol * k.trace() / n as f64;
    Some(PsdReport {
        psd: min_eigenvalue >= -threshold,
        min_eigenvalue,
        threshold,
    })
}

/// Input samples for kernel evaluation: one modality per collection.
#[derive(Debug, Clone)]
pub enum SampleSet {
    /// Dense feature vectors, all of equal length.
    Vectors(Vec<Vec<f64>>),
    /// Raw strings, for the spectrum kernel.
    Strings(Vec<String>),
}

impl SampleSet {
    pub fn len(&self) -> usize {
        match self {
            SampleSet::Vectors(v) => v.len(),
            SampleSet::Strings(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Kernel function family.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelKind {
    Linear,
    /// `exp(-|x - z|^2 / (2 bandwidth^2))`
    Rbf { bandwidth: f64 },
    /// `(<x, z> + offset)^degree`
    Polynomial { degree: u32, offset: f64 },
    /// Counts of shared length-`k` substrings.
    Spectrum { k: usize },
    /// Matrix loaded from a file as-is; samples are ignored.
    Precomputed { path: std::path::PathBuf },
}

/// A kernel to compute plus whether to cosine-normalize the result.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub normalize: bool,
}

impl KernelSpec {
    pub fn new(kind: KernelKind, normalize: bool) -> Result<Self> {
        match &kind {
            KernelKind::Rbf { bandwidth } => {
                if !(*bandwidth > 0.0) || !bandwidth.is_finite() {
                    return Err(Error::param("bandwidth", "must be positive and finite"));
                }
            }
            KernelKind::Polynomial { degree, offset } => {
                if *degree == 0 {
                    return Err(Error::param("degree", "must be at least 1"));
                }
                if !offset.is_finite() {
                    return Err(Error::param("offset", "must be finite"));
                }
            }
            KernelKind::Spectrum { k } => {
                if *k == 0 {
                    return Err(Error::param("k", "substring length must be at least 1"));
                }
            }
            KernelKind::Linear | KernelKind::Precomputed { .. } => {}
        }
        Ok(KernelSpec { kind, normalize })
    }
}

/// Computes the Gram matrix of `spec` over `samples`.
pub fn compute_gram(spec: &KernelSpec, samples: &SampleSet) -> Result<GramMatrix> {
    if samples.is_empty() {
        if let KernelKind::Precomputed { path } = &spec.kind {
            // Precomputed kernels carry their own size.
            let k = io::read_gram(path)?;
            return if spec.normalize { normalize_gram(&k) } else { Ok(k) };
        }
        return Err(Error::EmptyInput("samples"));
    }
    let gram = match (&spec.kind, samples) {
        (KernelKind::Precomputed { path }, _) => {
            let k = io::read_gram(path)?;
            if k.n() != samples.len() {
                return Err(Error::DimensionMismatch {
                    what: "precomputed gram size",
                    expected: samples.len(),
                    got: k.n(),
                });
            }
            k
        }
        (KernelKind::Spectrum { k }, SampleSet::Strings(strs)) => spectrum_gram(strs, *k),
        (KernelKind::Spectrum { .. }, SampleSet::Vectors(_)) => {
            return Err(Error::ModalityMismatch("spectrum kernel needs string samples"))
        }
        (_, SampleSet::Strings(_)) => {
            return Err(Error::ModalityMismatch("vector kernel needs vector samples"))
        }
        (kind, SampleSet::Vectors(xs)) => vector_gram(kind, xs)?,
    };
    if spec.normalize {
        normalize_gram(&gram)
    } else {
        Ok(gram)
    }
}

fn vector_gram(kind: &KernelKind, xs: &[Vec<f64>]) -> Result<GramMatrix> {
    let d = xs[0].len();
    for (i, x) in xs.iter().enumerate() {
        if x.len() != d {
            return Err(Error::DimensionMismatch {
                what: "feature vector length",
                expected: d,
                got: xs[i].len(),
            });
        }
    }
    let n = xs.len();
    let mut out = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..=j {
            let dot: f64 = xs[i].iter().zip(&xs[j]).map(|(a, b)| a * b).sum();
            let v = match kind {
                KernelKind::Linear => dot,
                KernelKind::Polynomial { degree, offset } => (dot + offset).powi(*degree as i32),
                KernelKind::Rbf { bandwidth } => {
                    let d2: f64 = xs[i]
                        .iter()
                        .zip(&xs[j])
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    (-d2 / (2.0 * bandwidth * bandwidth)).exp()
                }
                _ => unreachable!(),
            };
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(GramMatrix::from_symmetric_unchecked(out))
}

/// Substring-count feature map: one coordinate per distinct k-gram.
fn spectrum_counts(s: &str, k: usize) -> HashMap<Vec<char>, f64> {
    let chars: Vec<char> = s.chars().collect();
    let mut counts = HashMap::new();
    if chars.len() >= k {
        for w in chars.windows(k) {
            *counts.entry(w.to_vec()).or_insert(0.0) += 1.0;
        }
    }
    counts
}

fn spectrum_gram(strs: &[String], k: usize) -> GramMatrix {
    let maps: Vec<_> = strs.iter().map(|s| spectrum_counts(s, k)).collect();
    let n = strs.len();
    let mut out = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..=j {
            let (small, big) = if maps[i].len() <= maps[j].len() {
                (&maps[i], &maps[j])
            } else {
                (&maps[j], &maps[i])
            };
            let mut acc = 0.0;
            for (gram, c) in small {
                if let Some(c2) = big.get(gram) {
                    acc += c * c2;
                }
            }
            out[(i, j)] = acc;
            out[(j, i)] = acc;
        }
    }
    GramMatrix::from_symmetric_unchecked(out)
}

/// An ordered family of same-size Gram matrices with display names.
#[derive(Debug, Clone)]
pub struct KernelSet {
    matrices: Vec<GramMatrix>,
    names: Vec<String>,
}

impl KernelSet {
    /// Requires at least one kernel, matching sizes, and one name per kernel.
    /// Names must be nonempty and free of whitespace so they survive the
    /// model file format.
    pub fn new(matrices: Vec<GramMatrix>, names: Vec<String>) -> Result<Self> {
        if matrices.is_empty() {
            return Err(Error::EmptyInput("kernel set"));
        }
        if names.len() != matrices.len() {
            return Err(Error::DimensionMismatch {
                what: "kernel names",
                expected: matrices.len(),
                got: names.len(),
            });
        }
        let n = matrices[0].n();
        for k in &matrices {
            if k.n() != n {
                return Err(Error::DimensionMismatch {
                    what: "kernel size",
                    expected: n,
                    got: k.n(),
                });
            }
        }
        for name in &names {
            if name.is_empty() || name.chars().any(char::is_whitespace) {
                return Err(Error::param(
                    "kernel name",
                    format!("{name:?} must be nonempty without whitespace"),
                ));
            }
        }
        Ok(KernelSet { matrices, names })
    }

    /// Number of samples.
    pub fn n(&self) -> usize {
        self.matrices[0].n()
    }

    /// Number of kernels.
    pub fn m(&self) -> usize {
        self.matrices.len()
    }

    pub fn get(&self, m: usize) -> &GramMatrix {
        &self.matrices[m]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn iter(&self) -> impl Iterator<Item = &GramMatrix> {
        self.matrices.iter()
    }

    /// Unweighted sum of all member matrices.
    pub fn summed(&self) -> DMatrix<f64> {
        let mut acc = self.matrices[0].matrix().clone();
        for k in &self.matrices[1..] {
            acc += k.matrix();
        }
        acc
    }
}

/// Derives kernel names `k0..k{M-1}` when the caller has none better.
pub fn name_kernels(m: usize) -> Vec<String> {
    (0..m).map(|i| format!("k{i}")).collect()
}

/// Gram matrix file formats.
///
/// Square text: first line is `n`, then `n` lines of `n` reals; the matrix
/// must be symmetric. Square binary: magic `GRAM1`, little-endian `u64` size,
/// then `n*n` little-endian `f64` in row-major order. Rectangular variants
/// (for train-by-test cross kernels) use a `rows cols` header line in text
/// and magic `XGRAM1` with two size fields in binary. Readers sniff the
/// format from the leading bytes.
pub mod io {
    use std::path::Path;

    use nalgebra::DMatrix;

    use super::GramMatrix;
    use crate::{Error, Result};

    pub(crate) const MAGIC_SQUARE: &[u8] = b"GRAM1";
    pub(crate) const MAGIC_RECT: &[u8] = b"XGRAM1";

    pub fn write_gram_text(k: &GramMatrix, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str(&format!("{}\n", k.n()));
        push_rows(&mut out, k.matrix());
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn write_gram_binary(k: &GramMatrix, path: &Path) -> Result<()> {
        let n = k.n();
        let mut buf = Vec::with_capacity(MAGIC_SQUARE.len() + 8 + 8 * n * n);
        buf.extend_from_slice(MAGIC_SQUARE);
        buf.extend_from_slice(&(n as u64).to_le_bytes());
        push_values(&mut buf, k.matrix());
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn write_cross_text(mat: &DMatrix<f64>, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str(&format!("{} {}\n", mat.nrows(), mat.ncols()));
        push_rows(&mut out, mat);
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn write_cross_binary(mat: &DMatrix<f64>, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(MAGIC_RECT.len() + 16 + 8 * mat.len());
        buf.extend_from_slice(MAGIC_RECT);
        buf.extend_from_slice(&(mat.nrows() as u64).to_le_bytes());
        buf.extend_from_slice(&(mat.ncols() as u64).to_le_bytes());
        push_values(&mut buf, mat);
        std::fs::write(path, buf)?;
        Ok(())
    }

    fn push_rows(out: &mut String, mat: &DMatrix<f64>) {
        use std::fmt::Write;
        for i in 0..mat.nrows() {
            for j in 0..mat.ncols() {
                let sep = if j == 0 { "" } else { " " };
                write!(out, "{sep}{:.16e}", mat[(i, j)]).unwrap();
            }
            out.push('\n');
        }
    }

    fn push_values(buf: &mut Vec<u8>, mat: &DMatrix<f64>) {
        for i in 0..mat.nrows() {
            for j in 0..mat.ncols() {
                buf.extend_from_slice(&mat[(i, j)].to_le_bytes());
            }
        }
    }

    /// Reads a square Gram matrix, text or binary, and validates symmetry.
    pub fn read_gram(path: &Path) -> Result<GramMatrix> {
        let bytes = std::fs::read(path)?;
        if bytes.starts_with(MAGIC_RECT) {
            return Err(Error::parse(
                path,
                0,
                "rectangular cross-kernel file where a square gram was expected",
            ));
        }
        let mat = if bytes.starts_with(MAGIC_SQUARE) {
            read_square_binary(path, &bytes)?
        } else {
            let (mat, square) = read_text(path, &bytes)?;
            if !square {
                return Err(Error::parse(
                    path,
                    0,
                    "rectangular header where a square gram was expected",
                ));
            }
            mat
        };
        GramMatrix::from_matrix(mat)
    }

    /// Reads a train-by-test cross-kernel matrix. Square Gram files are
    /// accepted too (scoring the training set is the common case); symmetry
    /// is only enforced for those.
    pub fn read_cross(path: &Path) -> Result<DMatrix<f64>> {
        let bytes = std::fs::read(path)?;
        if bytes.starts_with(MAGIC_RECT) {
            return read_rect_binary(path, &bytes);
        }
        if bytes.starts_with(MAGIC_SQUARE) {
            let mat = read_square_binary(path, &bytes)?;
            return Ok(GramMatrix::from_matrix(mat)?.matrix().clone());
        }
        let (mat, square) = read_text(path, &bytes)?;
        if square {
            return Ok(GramMatrix::from_matrix(mat)?.matrix().clone());
        }
        Ok(mat)
    }

    fn read_square_binary(path: &Path, bytes: &[u8]) -> Result<DMatrix<f64>> {
        let header = MAGIC_SQUARE.len() + 8;
        let n = read_u64(path, bytes, MAGIC_SQUARE.len())? as usize;
        let (rows, cols) = (n, n);
        read_matrix_binary(path, bytes, header, rows, cols)
    }

    fn read_rect_binary(path: &Path, bytes: &[u8]) -> Result<DMatrix<f64>> {
        let header = MAGIC_RECT.len() + 16;
        let rows = read_u64(path, bytes, MAGIC_RECT.len())? as usize;
        let cols = read_u64(path, bytes, MAGIC_RECT.len() + 8)? as usize;
        read_matrix_binary(path, bytes, header, rows, cols)
    }

    fn read_u64(path: &Path, bytes: &[u8], offset: usize) -> Result<u64> {
        let end = offset + 8;
        if bytes.len() < end {
            return Err(Error::parse(path, bytes.len(), "truncated size field"));
        }
        Ok(u64::from_le_bytes(bytes[offset..end].try_into().unwrap()))
    }

    fn read_matrix_binary(
        path: &Path,
        bytes: &[u8],
        header: usize,
        rows: usize,
        cols: usize,
    ) -> Result<DMatrix<f64>> {
        if rows == 0 || cols == 0 {
            return Err(Error::parse(path, MAGIC_SQUARE.len(), "matrix size is zero"));
        }
        let count = rows
            .checked_mul(cols)
            .and_then(|c| c.checked_mul(8))
            .ok_or_else(|| Error::parse(path, MAGIC_SQUARE.len(), "matrix size overflows"))?;
        let expected = header + count;
        if bytes.len() != expected {
            return Err(Error::parse(
                path,
                bytes.len().min(expected),
                format!("expected {expected} bytes, file has {}", bytes.len()),
            ));
        }
        let mut mat = DMatrix::zeros(rows, cols);
        let mut off = header;
        for i in 0..rows {
            for j in 0..cols {
                let v = f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
                if !v.is_finite() {
                    return Err(Error::parse(path, off, "non-finite matrix entry"));
                }
                mat[(i, j)] = v;
                off += 8;
            }
        }
        Ok(mat)
    }

    /// Parses the text format. Returns the matrix and whether the header was
    /// the one-token square form.
    fn read_text(path: &Path, bytes: &[u8]) -> Result<(DMatrix<f64>, bool)> {
        let text = std::str::from_utf8(bytes).map_err(|e| {
            Error::parse(path, e.valid_up_to(), "neither a known binary magic nor UTF-8 text")
        })?;
        let mut lines = LineCursor::new(text);

        let (header, header_off) = lines
            .next_content_line()
            .ok_or_else(|| Error::parse(path, 0, "empty file"))?;
        let tokens: Vec<&str> = header.split_whitespace().collect();
        let (rows, cols, square) = match tokens.as_slice() {
            [n] => {
                let n = parse_usize(path, header_off, n)?;
                (n, n, true)
            }
            [r, c] => (
                parse_usize(path, header_off, r)?,
                parse_usize(path, header_off, c)?,
                false,
            ),
            _ => {
                return Err(Error::parse(
                    path,
                    header_off,
                    "header must be `n` or `rows cols`",
                ))
            }
        };
        if rows == 0 || cols == 0 {
            return Err(Error::parse(path, header_off, "matrix size is zero"));
        }

        let mut mat = DMatrix::zeros(rows, cols);
        for i in 0..rows {
            let (line, off) = lines.next_content_line().ok_or_else(|| {
                Error::parse(path, text.len(), format!("expected {rows} rows, found {i}"))
            })?;
            let mut j = 0;
            for tok in line.split_whitespace() {
                if j == cols {
                    return Err(Error::parse(path, off, format!("row {i} has more than {cols} entries")));
                }
                let v: f64 = tok.parse().map_err(|_| {
                    Error::parse(path, off, format!("bad real {tok:?} in row {i}"))
                })?;
                if !v.is_finite() {
                    return Err(Error::parse(path, off, format!("non-finite entry in row {i}")));
                }
                mat[(i, j)] = v;
                j += 1;
            }
            if j != cols {
                return Err(Error::parse(
                    path,
                    off,
                    format!("row {i} has {j} entries, expected {cols}"),
                ));
            }
        }
        if let Some((line, off)) = lines.next_content_line() {
            if !line.trim().is_empty() {
                return Err(Error::parse(path, off, "trailing content after matrix rows"));
            }
        }
        Ok((mat, square))
    }

    fn parse_usize(path: &Path, off: usize, tok: &str) -> Result<usize> {
        tok.parse()
            .map_err(|_| Error::parse(path, off, format!("bad size {tok:?}")))
    }

    /// Iterates nonblank lines together with their byte offsets.
    struct LineCursor<'a> {
        text: &'a str,
        pos: usize,
    }

    impl<'a> LineCursor<'a> {
        fn new(text: &'a str) -> Self {
            LineCursor { text, pos: 0 }
        }

        fn next_content_line(&mut self) -> Option<(&'a str, usize)> {
            while self.pos < self.text.len() {
                let start = self.pos;
                let rest = &self.text[start..];
                let end = rest.find('\n').map(|i| start + i).unwrap_or(self.text.len());
                self.pos = end + 1;
                let line = &self.text[start..end];
                if !line.trim().is_empty() {
                    return Some((line, start));
                }
            }
            None
        }
    }
}

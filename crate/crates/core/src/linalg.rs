//! Banded symmetric solves and small dense least squares.
//!
//! Spline normal equations are banded with half-bandwidth equal to the
//! spline degree, so they are factored in `O(n p^2)` without ever being
//! densified. Leverages come from the band of the inverse (selected
//! inversion), which is all the hat-matrix diagonal needs.

use nalgebra::{DMatrix, DVector, Dyn, QR};

/// Largest system the dense QR fallback will attempt.
pub const DENSE_FALLBACK_LIMIT: usize = 2000;

/// Symmetric band matrix, lower band stored row by row.
#[derive(Debug, Clone, PartialEq)]
pub struct SymBand {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl SymBand {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + (i - j)
    }

    /// Entry `(i, j)`; zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    /// Adds `w` to `(i, j)` and, implicitly, `(j, i)`.
    pub fn add(&mut self, i: usize, j: usize, w: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let k = self.idx(i, j);
        self.data[k] += w;
    }

    /// Adds `w * v v^T` for a vector that is non-zero only on `first..first + v.len()`.
    pub fn add_outer(&mut self, first: usize, v: &[f64], w: f64) {
        for (a, &va) in v.iter().enumerate() {
            if va == 0.0 {
                continue;
            }
            for (b, &vb) in v.iter().enumerate().take(a + 1) {
                let k = self.idx(first + a, first + b);
                self.data[k] += w * va * vb;
            }
        }
    }

    /// `self + scale * other`; bands must agree.
    pub fn plus_scaled(&self, other: &SymBand, scale: f64) -> SymBand {
        assert_eq!(self.n, other.n);
        assert_eq!(self.bw, other.bw);
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + scale * b)
            .collect();
        SymBand {
            n: self.n,
            bw: self.bw,
            data,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let j0 = i.saturating_sub(self.bw);
            for j in j0..=i {
                let a = self.data[self.idx(i, j)];
                y[i] += a * x[j];
                if i != j {
                    y[j] += a * x[i];
                }
            }
        }
        y
    }

    /// `x^T A x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.mul_vec(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    fn max_diag(&self) -> f64 {
        (0..self.n)
            .map(|i| self.data[self.idx(i, i)].abs())
            .fold(0.0, f64::max)
    }

    /// Banded Cholesky `A = L L^T`. Fails on a pivot that is not clearly positive.
    pub fn cholesky(&self) -> Option<BandCholesky> {
        let tol = self.max_diag() * 1e-13;
        let mut l = self.clone();
        let bw = self.bw;
        let mut min_ratio = f64::INFINITY;
        for j in 0..self.n {
            let k0 = j.saturating_sub(bw);
            let mut d = l.data[l.idx(j, j)];
            for k in k0..j {
                let v = l.data[l.idx(j, k)];
                d -= v * v;
            }
            if !(d > tol) {
                return None;
            }
            min_ratio = min_ratio.min(d / self.data[self.idx(j, j)]);
            let djj = d.sqrt();
            let kjj = l.idx(j, j);
            l.data[kjj] = djj;
            let i_end = (j + bw).min(self.n - 1);
            for i in j + 1..=i_end {
                let mut s = l.data[l.idx(i, j)];
                let k_lo = i.saturating_sub(bw).max(k0);
                for k in k_lo..j {
                    s -= l.data[l.idx(i, k)] * l.data[l.idx(j, k)];
                }
                let kij = l.idx(i, j);
                l.data[kij] = s / djj;
            }
        }
        Some(BandCholesky {
            l,
            min_pivot_ratio: min_ratio,
        })
    }
}

#[derive(Debug, Clone)]
pub struct BandCholesky {
    l: SymBand,
    min_pivot_ratio: f64,
}

impl BandCholesky {
    /// Smallest squared pivot relative to its original diagonal entry; tiny
    /// values mean cancellation ate most of the digits.
    pub fn min_pivot_ratio(&self) -> f64 {
        self.min_pivot_ratio
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let l = &self.l;
        let n = l.n;
        let bw = l.bw;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in i.saturating_sub(bw)..i {
                s -= l.data[l.idx(i, k)] * y[k];
            }
            y[i] = s / l.data[l.idx(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..=(i + bw).min(n - 1) {
                s -= l.data[l.idx(k, i)] * y[k];
            }
            y[i] = s / l.data[l.idx(i, i)];
        }
        y
    }

    /// Entries of `A^{-1}` inside the band of `A`.
    pub fn inverse_band(&self) -> SymBand {
        let l = &self.l;
        let n = l.n;
        let bw = l.bw;
        let mut sigma = SymBand::zeros(n, bw);
        for i in (0..n).rev() {
            let lii = l.data[l.idx(i, i)];
            let k_end = (i + bw).min(n - 1);
            for j in (i..=k_end).rev() {
                let mut s = if i == j { 1.0 / lii } else { 0.0 };
                for k in i + 1..=k_end {
                    s -= l.data[l.idx(k, i)] * sigma.get(k, j);
                }
                let kk = sigma.idx(j, i);
                sigma.data[kk] = s / lii;
            }
        }
        sigma
    }
}

/// Banded least squares by Givens rotations, fed one sparse row at a time.
///
/// Works on the design matrix itself rather than the normal equations, so it
/// survives conditioning that defeats the Cholesky path (a very heavy
/// penalty, for instance). `R^T R` equals the normal matrix, so `R^T` also
/// serves as its Cholesky factor.
#[derive(Debug, Clone)]
pub struct BandQr {
    n: usize,
    bw: usize,
    /// Row `j` holds `R[j, j..=j+bw]`.
    r: Vec<f64>,
    qty: Vec<f64>,
    work: Vec<f64>,
}

impl BandQr {
    pub fn new(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            r: vec![0.0; n * (bw + 1)],
            qty: vec![0.0; n],
            work: vec![0.0; bw + 1],
        }
    }

    /// Appends the row `w * v` (non-zero on `first..first + v.len()`) with target `w * y`.
    ///
    /// Rows fed in order of `first` cost `O(bw^2)` each; out-of-order rows
    /// are still handled exactly but may sweep far down the factor.
    pub fn add_row(&mut self, first: usize, v: &[f64], y: f64, w: f64) {
        let width = self.bw + 1;
        debug_assert!(v.len() <= width && first + v.len() <= self.n);
        let h = &mut self.work;
        h.iter_mut().for_each(|x| *x = 0.0);
        for (hk, vk) in h.iter_mut().zip(v) {
            *hk = w * vk;
        }
        let mut yi = w * y;
        // rotations against later rows of R can push fill-in past the
        // original extent, so run until the work row is exhausted
        for j in first..self.n {
            if h.iter().all(|&x| x == 0.0) {
                break;
            }
            let piv = h[0];
            if piv != 0.0 {
                let row = &mut self.r[j * width..(j + 1) * width];
                let rr = row[0].hypot(piv);
                let (c, s) = (row[0] / rr, piv / rr);
                row[0] = rr;
                for k in 1..width {
                    let (a, b) = (row[k], h[k]);
                    row[k] = c * a + s * b;
                    h[k] = c * b - s * a;
                }
                let q = self.qty[j];
                self.qty[j] = c * q + s * yi;
                yi = c * yi - s * q;
            }
            h.rotate_left(1);
            h[width - 1] = 0.0;
        }
    }

    /// Solution and the Cholesky factor of the normal matrix, or `None` when
    /// `R` is numerically rank deficient.
    pub fn finish(&self) -> Option<(Vec<f64>, BandCholesky)> {
        let width = self.bw + 1;
        let dmax = (0..self.n).map(|j| self.r[j * width]).fold(0.0, f64::max);
        if self.n == 0 || (0..self.n).any(|j| !(self.r[j * width] > dmax * 1e-12)) {
            return None;
        }
        let mut x = self.qty.clone();
        for j in (0..self.n).rev() {
            let mut s = x[j];
            for k in 1..width.min(self.n - j) {
                s -= self.r[j * width + k] * x[j + k];
            }
            x[j] = s / self.r[j * width];
        }
        let mut l = SymBand::zeros(self.n, self.bw);
        for j in 0..self.n {
            for k in 0..width.min(self.n - j) {
                l.add(j + k, j, self.r[j * width + k]);
            }
        }
        Some((
            x,
            BandCholesky {
                l,
                min_pivot_ratio: 1.0,
            },
        ))
    }
}

/// Factored SPD system, banded or dense.
#[derive(Debug, Clone)]
pub enum SpdFactor {
    Band(BandCholesky),
    Dense(QR<f64, Dyn, Dyn>),
}

impl SpdFactor {
    /// Banded Cholesky with a dense QR fallback for small systems.
    ///
    /// `None` when both fail or the system is too large for the fallback.
    pub fn factor(a: &SymBand) -> Option<Self> {
        if let Some(c) = a.cholesky() {
            return Some(SpdFactor::Band(c));
        }
        if a.dim() > DENSE_FALLBACK_LIMIT {
            return None;
        }
        let qr = a.to_dense().qr();
        let r = qr.r();
        let rmax = r.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if rmax == 0.0 || r.diagonal().iter().any(|v| v.abs() <= rmax * 1e-12) {
            return None;
        }
        Some(SpdFactor::Dense(qr))
    }

    pub fn dim(&self) -> usize {
        match self {
            SpdFactor::Band(c) => c.l.n,
            SpdFactor::Dense(qr) => qr.r().nrows(),
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        match self {
            SpdFactor::Band(c) => c.solve(b),
            SpdFactor::Dense(qr) => qr
                .solve(&DVector::from_column_slice(b))
                .map(|x| x.as_slice().to_vec())
                .unwrap_or_else(|| vec![f64::NAN; b.len()]),
        }
    }

    /// Band of the inverse, `bw` wide.
    pub fn inverse_band(&self, bw: usize) -> SymBand {
        match self {
            SpdFactor::Band(c) => c.inverse_band(),
            SpdFactor::Dense(_) => {
                let n = self.dim();
                let mut s = SymBand::zeros(n, bw);
                let mut e = vec![0.0; n];
                for j in 0..n {
                    e[j] = 1.0;
                    let col = self.solve(&e);
                    e[j] = 0.0;
                    for i in j..(j + bw + 1).min(n) {
                        s.add(i, j, col[i]);
                    }
                }
                s
            }
        }
    }
}

/// Least-squares solution of a tall system with rank handling.
#[derive(Debug, Clone)]
pub struct LstsqSolution {
    /// One coefficient per input column; dropped columns get `0`.
    pub coefficients: Vec<f64>,
    /// Columns removed because they were numerically dependent on earlier ones.
    pub dropped: Vec<usize>,
    pub sse: f64,
}

/// Ordinary least squares over `columns`, dropping any column that is
/// dependent on the columns before it (so column order sets priority).
pub fn lstsq_drop_dependent(columns: &[&[f64]], y: &[f64]) -> LstsqSolution {
    let n = y.len();
    let p = columns.len();
    let mut kept: Vec<usize> = Vec::with_capacity(p);
    let mut dropped = Vec::new();
    // Orthonormal basis of kept, scaled columns (modified Gram-Schmidt, twice).
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(p);
    for (c, col) in columns.iter().enumerate() {
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            dropped.push(c);
            continue;
        }
        let mut v: Vec<f64> = col.iter().map(|x| x / norm).collect();
        for _ in 0..2 {
            for qk in &q {
                let d: f64 = qk.iter().zip(&v).map(|(a, b)| a * b).sum();
                for (vi, qi) in v.iter_mut().zip(qk) {
                    *vi -= d * qi;
                }
            }
        }
        let rn = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if rn < 1e-9 {
            dropped.push(c);
            continue;
        }
        for vi in &mut v {
            *vi /= rn;
        }
        q.push(v);
        kept.push(c);
    }

    let mut coefficients = vec![0.0; p];
    if !kept.is_empty() {
        let x = DMatrix::from_fn(n, kept.len(), |i, k| columns[kept[k]][i]);
        let scale: Vec<f64> = (0..kept.len())
            .map(|k| x.column(k).norm().max(f64::MIN_POSITIVE))
            .collect();
        let xs = DMatrix::from_fn(n, kept.len(), |i, k| x[(i, k)] / scale[k]);
        let qr = xs.qr();
        let qty = qr.q().transpose() * DVector::from_column_slice(y);
        let beta = qr
            .r()
            .solve_upper_triangular(&qty)
            .unwrap_or_else(|| DVector::zeros(kept.len()));
        for (k, &c) in kept.iter().enumerate() {
            coefficients[c] = beta[k] / scale[k];
        }
    }
    let sse = (0..n)
        .map(|i| {
            let fit: f64 = columns
                .iter()
                .zip(&coefficients)
                .map(|(col, b)| col[i] * b)
                .sum();
            (y[i] - fit).powi(2)
        })
        .sum();
    LstsqSolution {
        coefficients,
        dropped,
        sse,
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(q: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(q >= 1);
    let mut nodes = vec![0.0; q];
    let mut weights = vec![0.0; q];
    for i in 0..q.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (q as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(q, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(q, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[q - 1 - i] = x;
        weights[i] = w;
        weights[q - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let pk = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = pk;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

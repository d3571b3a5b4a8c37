//! Least-squares and roughness-penalized B-spline smoothing.
//!
//! Fits solve `(Phi^T Phi + lambda R) c = Phi^T y` where `R` is the Gram
//! matrix of the `m`-th basis derivatives. Both matrices are banded, so
//! long time series with tens of thousands of basis functions fit in
//! linear time. The smoothing parameter is picked by ordinary (leave-one-out)
//! cross validation over a fixed grid.

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bspline::BSplineBasis;
use crate::error::{Error, Result};
use crate::linalg::{gauss_legendre, BandCholesky, BandQr, SpdFactor, SymBand};

/// Which variable the smoother runs over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainKind {
    Time,
    Voltage,
}

/// `R[i][j] = integral of D^m phi_i * D^m phi_j` over the basis domain.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyMatrix {
    band: SymBand,
    order: usize,
}

impl PenaltyMatrix {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn nbasis(&self) -> usize {
        self.band.dim()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.band.get(i, j)
    }

    pub fn band(&self) -> &SymBand {
        &self.band
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        self.band.to_dense()
    }

    /// Roughness `c^T R c` of the spline with coefficients `c`.
    pub fn roughness(&self, coefficients: &[f64]) -> f64 {
        self.band.quad_form(coefficients)
    }
}

/// Builds the penalty matrix by Gauss-Legendre quadrature on every knot span.
///
/// The rule is raised to `degree - m + 1` points when fewer are requested,
/// which keeps the quadrature exact for the piecewise-polynomial integrand.
pub fn penalty_matrix(
    basis: &BSplineBasis,
    m: usize,
    quadrature_points_per_span: usize,
) -> Result<PenaltyMatrix> {
    let degree = basis.degree();
    if m == 0 || m > degree {
        return Err(Error::InvalidPenaltyOrder { m, degree });
    }
    if quadrature_points_per_span < m + 1 {
        return Err(Error::InvalidConfig(format!(
            "penalty of order {m} needs at least {} quadrature points per span, got {quadrature_points_per_span}",
            m + 1
        )));
    }
    let mut band = SymBand::zeros(basis.nbasis(), degree);
    penalty_rows(basis, m, quadrature_points_per_span, |first, vals, w| band.add_outer(first, vals, w))?;
    Ok(PenaltyMatrix { band, order: m })
}

/// Calls `f(first, D^m phi(x_q), w_q)` for every quadrature node, so the
/// penalty equals the sum of `w_q` times the outer products.
fn penalty_rows(
    basis: &BSplineBasis,
    m: usize,
    quadrature_points_per_span: usize,
    mut f: impl FnMut(usize, &[f64], f64),
) -> Result<()> {
    let q = quadrature_points_per_span.max(basis.degree() - m + 1);
    let (nodes, weights) = gauss_legendre(q);
    let order = basis.order();
    for w in basis.knots().breakpoints().windows(2) {
        let (a, b) = (w[0], w[1]);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (xi, wi) in nodes.iter().zip(&weights) {
            let (first, vals) = basis.local(mid + half * xi, m)?;
            f(first, &vals[..order], wi * half);
        }
    }
    Ok(())
}

/// Smoothed function `f(x) = sum_j c_j phi_j(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothFit {
    pub basis: BSplineBasis,
    pub coefficients: Vec<f64>,
    pub lambda: f64,
    pub penalty_order: usize,
    pub domain: DomainKind,
}

impl SmoothFit {
    pub fn with_domain(mut self, domain: DomainKind) -> Self {
        self.domain = domain;
        self
    }

    pub fn value(&self, x: f64, derivative: usize) -> Result<f64> {
        self.basis.eval_spline(&self.coefficients, x, derivative)
    }
}

/// `D^m f` at each point.
pub fn evaluate(fit: &SmoothFit, points: &[f64], derivative: usize) -> Result<Vec<f64>> {
    if derivative > fit.basis.degree() {
        return Err(Error::InvalidOrder {
            requested: derivative,
            degree: fit.basis.degree(),
        });
    }
    points.iter().map(|&x| fit.value(x, derivative)).collect()
}

/// Unpenalized least-squares fit.
pub fn fit_least_squares(basis: &BSplineBasis, x: &[f64], y: &[f64]) -> Result<SmoothFit> {
    let smoother = Smoother::new(basis, x, y)?;
    let solved = smoother.solve(0.0)?;
    Ok(smoother.into_fit(solved.coefficients, 0.0, 0))
}

/// Penalized least-squares fit with roughness penalty of order `m`.
pub fn fit_penalized(
    basis: &BSplineBasis,
    x: &[f64],
    y: &[f64],
    lambda: f64,
    m: usize,
) -> Result<SmoothFit> {
    check_lambda(lambda)?;
    let smoother = Smoother::new(basis, x, y)?.with_penalty(m, basis.degree() + 1)?;
    let solved = smoother.solve(lambda)?;
    Ok(smoother.into_fit(solved.coefficients, lambda, m))
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "smoothing parameter must be finite and non-negative, got {lambda}"
        )))
    }
}

#[derive(Debug, Clone)]
pub struct OcvSelection {
    pub best_lambda: f64,
    /// One score per grid value; `+inf` where some leverage reached 1.
    pub scores: Vec<f64>,
}

/// Scores every grid value by ordinary cross validation and returns the minimizer.
///
/// Ties go to the larger (smoother) value.
pub fn select_lambda_ocv(
    basis: &BSplineBasis,
    x: &[f64],
    y: &[f64],
    m: usize,
    lambda_grid: &[f64],
) -> Result<OcvSelection> {
    if lambda_grid.is_empty() {
        return Err(Error::InvalidConfig("lambda grid is empty".into()));
    }
    if lambda_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidConfig("lambda grid must be sorted ascending".into()));
    }
    for &l in lambda_grid {
        check_lambda(l)?;
    }
    let smoother = Smoother::new(basis, x, y)?.with_penalty(m, basis.degree() + 1)?;
    let mut scores = Vec::with_capacity(lambda_grid.len());
    for &lambda in lambda_grid {
        let score = match smoother.solve(lambda) {
            Ok(solved) => smoother.ocv_score(&solved),
            Err(Error::SingularFit { .. }) => {
                warn!("lambda = {lambda:e}: singular system, skipped");
                f64::INFINITY
            }
            Err(e) => return Err(e),
        };
        if score == f64::INFINITY {
            warn!("lambda = {lambda:e}: leverage saturated, skipped");
        }
        scores.push(score);
    }
    // Scale for deciding ties between numerically equal scores.
    let mean_sq = y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64;
    let abs_tol = 1e-20 * mean_sq.max(f64::MIN_POSITIVE);
    let mut best: Option<usize> = None;
    for (k, &s) in scores.iter().enumerate() {
        if !s.is_finite() {
            continue;
        }
        match best {
            None => best = Some(k),
            Some(b) => {
                let sb = scores[b];
                if s <= sb + 1e-9 * sb.abs() + abs_tol {
                    best = Some(k);
                }
            }
        }
    }
    let best = best.ok_or_else(|| {
        Error::InvalidConfig("every lambda in the grid saturated the leverages".into())
    })?;
    Ok(OcvSelection {
        best_lambda: lambda_grid[best],
        scores,
    })
}

/// Fit-quality summary; the dense smoothing matrix is optional.
#[derive(Debug, Clone)]
pub struct SmoothingDiagnostics {
    pub smoothing_matrix: Option<DMatrix<f64>>,
    pub leverages: Vec<f64>,
    /// Effective degrees of freedom.
    pub trace_s: f64,
    pub sse: f64,
    pub ocv_score: f64,
}

pub fn diagnostics(
    fit: &SmoothFit,
    x: &[f64],
    y: &[f64],
    with_matrix: bool,
) -> Result<SmoothingDiagnostics> {
    let mut smoother = Smoother::new(&fit.basis, x, y)?;
    if fit.lambda > 0.0 {
        smoother = smoother.with_penalty(fit.penalty_order, fit.basis.degree() + 1)?;
    }
    let solved = smoother.solve(fit.lambda)?;
    let leverages = smoother.leverages(&solved);
    let sse = smoother.sse(&solved.coefficients);
    let ocv_score = smoother.ocv_from(&solved.coefficients, &leverages);
    let smoothing_matrix = if with_matrix {
        Some(smoother.smoothing_matrix(&solved))
    } else {
        None
    };
    Ok(SmoothingDiagnostics {
        smoothing_matrix,
        trace_s: leverages.iter().sum(),
        leverages,
        sse,
        ocv_score,
    })
}

/// Below this pivot ratio the normal equations have lost more than half
/// the available digits and the orthogonal path takes over.
const CHOLESKY_MIN_PIVOT_RATIO: f64 = 1e-8;

/// Assembled normal equations for one data set, reusable across `lambda`.
pub struct Smoother<'a> {
    basis: &'a BSplineBasis,
    x: &'a [f64],
    y: &'a [f64],
    rows: crate::bspline::LocalRows,
    gram: SymBand,
    rhs: Vec<f64>,
    penalty: Option<PenaltyMatrix>,
    penalty_quadrature: usize,
}

pub struct Solved {
    pub coefficients: Vec<f64>,
    factor: SpdFactor,
}

impl<'a> Smoother<'a> {
    pub fn new(basis: &'a BSplineBasis, x: &'a [f64], y: &'a [f64]) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::LengthMismatch(format!(
                "x has {} samples, y has {}",
                x.len(),
                y.len()
            )));
        }
        if x.is_empty() {
            return Err(Error::InvalidConfig("no data to smooth".into()));
        }
        if x.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("data contain non-finite values".into()));
        }
        let rows = basis.local_rows(x, 0)?;
        let mut gram = SymBand::zeros(basis.nbasis(), basis.degree());
        let mut rhs = vec![0.0; basis.nbasis()];
        for (i, &yi) in y.iter().enumerate() {
            let (first, vals) = rows.row(i);
            gram.add_outer(first, vals, 1.0);
            for (k, v) in vals.iter().enumerate() {
                rhs[first + k] += v * yi;
            }
        }
        Ok(Self {
            basis,
            x,
            y,
            rows,
            gram,
            rhs,
            penalty: None,
            penalty_quadrature: 0,
        })
    }

    pub fn with_penalty(mut self, m: usize, quadrature_points: usize) -> Result<Self> {
        self.penalty_quadrature = quadrature_points.max(m + 1);
        self.penalty = Some(penalty_matrix(self.basis, m, self.penalty_quadrature)?);
        Ok(self)
    }

    pub fn penalty(&self) -> Option<&PenaltyMatrix> {
        self.penalty.as_ref()
    }

    pub fn solve(&self, lambda: f64) -> Result<Solved> {
        if lambda == 0.0 && self.x.len() < self.basis.nbasis() {
            return Err(Error::SingularFit {
                empty_span: self.empty_span(),
            });
        }
        let system = match (&self.penalty, lambda > 0.0) {
            (Some(r), true) => self.gram.plus_scaled(&r.band, lambda),
            (None, true) => {
                return Err(Error::InvalidConfig(
                    "positive lambda requires a penalty matrix".into(),
                ))
            }
            _ => self.gram.clone(),
        };
        let band = system.cholesky();
        let (coefficients, factor) = match band {
            Some(c) if c.min_pivot_ratio() > CHOLESKY_MIN_PIVOT_RATIO => (c.solve(&self.rhs), SpdFactor::Band(c)),
            _ => match self.solve_qr(lambda)? {
                Some((x, c)) => (x, SpdFactor::Band(c)),
                None => {
                    let factor = SpdFactor::factor(&system).ok_or(Error::SingularFit {
                        empty_span: self.empty_span(),
                    })?;
                    (factor.solve(&self.rhs), factor)
                }
            },
        };
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::SingularFit {
                empty_span: self.empty_span(),
            });
        }
        Ok(Solved {
            coefficients,
            factor,
        })
    }

    /// Orthogonal factorization of the stacked data and penalty rows.
    fn solve_qr(&self, lambda: f64) -> Result<Option<(Vec<f64>, BandCholesky)>> {
        // (first column, weight, target, values); Givens updates stay local
        // only when rows arrive in column order
        let mut rows: Vec<(usize, f64, f64, Vec<f64>)> = (0..self.y.len())
            .map(|i| {
                let (first, vals) = self.rows.row(i);
                (first, 1.0, self.y[i], vals.to_vec())
            })
            .collect();
        if let (Some(p), true) = (&self.penalty, lambda > 0.0) {
            penalty_rows(self.basis, p.order, self.penalty_quadrature, |first, vals, w| {
                rows.push((first, (lambda * w).sqrt(), 0.0, vals.to_vec()))
            })?;
        }
        rows.sort_by_key(|r| r.0);
        let mut qr = BandQr::new(self.basis.nbasis(), self.basis.degree());
        for (first, w, y, vals) in &rows {
            qr.add_row(*first, vals, *y, *w);
        }
        Ok(qr.finish())
    }

    fn into_fit(self, coefficients: Vec<f64>, lambda: f64, penalty_order: usize) -> SmoothFit {
        SmoothFit {
            basis: self.basis.clone(),
            coefficients,
            lambda,
            penalty_order,
            domain: DomainKind::Time,
        }
    }

    /// First non-empty knot span holding no data, if any.
    fn empty_span(&self) -> Option<(f64, f64)> {
        let mut sorted = self.x.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let bp = self.basis.knots().breakpoints();
        let last = bp.len() - 2;
        bp.windows(2).enumerate().find_map(|(k, w)| {
            let (a, b) = (w[0], w[1]);
            let i = sorted.partition_point(|&v| v < a);
            let covered = i < sorted.len() && (sorted[i] < b || (k == last && sorted[i] <= b));
            (!covered).then_some((a, b))
        })
    }

    pub fn fitted(&self, coefficients: &[f64]) -> Vec<f64> {
        (0..self.rows.len()).map(|i| self.rows.dot(i, coefficients)).collect()
    }

    fn sse(&self, coefficients: &[f64]) -> f64 {
        self.fitted(coefficients)
            .iter()
            .zip(self.y)
            .map(|(f, y)| (y - f).powi(2))
            .sum()
    }

    /// Diagonal of the smoothing matrix, from the band of the inverse.
    pub fn leverages(&self, solved: &Solved) -> Vec<f64> {
        let sigma = solved.factor.inverse_band(self.basis.degree());
        (0..self.rows.len())
            .map(|i| {
                let (first, vals) = self.rows.row(i);
                let mut s = 0.0;
                for (a, va) in vals.iter().enumerate() {
                    for (b, vb) in vals.iter().enumerate() {
                        s += va * vb * sigma.get(first + a, first + b);
                    }
                }
                s
            })
            .collect()
    }

    pub fn ocv_score(&self, solved: &Solved) -> f64 {
        let lev = self.leverages(solved);
        self.ocv_from(&solved.coefficients, &lev)
    }

    fn ocv_from(&self, coefficients: &[f64], leverages: &[f64]) -> f64 {
        let fitted = self.fitted(coefficients);
        let mut acc = 0.0;
        for ((f, y), s) in fitted.iter().zip(self.y).zip(leverages) {
            let denom = 1.0 - s;
            if denom <= 1e-10 {
                return f64::INFINITY;
            }
            acc += ((y - f) / denom).powi(2);
        }
        acc / self.y.len() as f64
    }

    /// Dense `S = Phi A^{-1} Phi^T`; `n x n`, so only for modest sample counts.
    pub fn smoothing_matrix(&self, solved: &Solved) -> DMatrix<f64> {
        let n = self.rows.len();
        let nb = self.basis.nbasis();
        // columns of A^{-1} Phi^T, one per sample
        let mut cols = Vec::with_capacity(n);
        for i in 0..n {
            let mut e = vec![0.0; nb];
            let (first, vals) = self.rows.row(i);
            e[first..first + vals.len()].copy_from_slice(vals);
            cols.push(solved.factor.solve(&e));
        }
        DMatrix::from_fn(n, n, |i, j| self.rows.dot(i, &cols[j]))
    }
}

/// Log-spaced grid from `10^lo_exp` to `10^hi_exp` inclusive.
pub fn log_grid(lo_exp: f64, hi_exp: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![10f64.powf(lo_exp)],
        _ => (0..count)
            .map(|k| 10f64.powf(lo_exp + (hi_exp - lo_exp) * k as f64 / (count - 1) as f64))
            .collect(),
    }
}

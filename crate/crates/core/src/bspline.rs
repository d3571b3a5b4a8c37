//! B-spline bases built from the Cox-de Boor recursion.
//!
//! A basis is a non-decreasing knot vector plus an order (`degree + 1`).
//! Spans are half-open `[t_i, t_{i+1})` except the last non-empty span,
//! which is closed so the right end of the domain can be evaluated.

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest supported spline degree.
pub const MAX_DEGREE: usize = 7;
const MAX_ORDER: usize = MAX_DEGREE + 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KnotVector(Vec<f64>);

impl KnotVector {
    pub fn new(knots: Vec<f64>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::InvalidConfig(
                "knot vector needs at least two knots".into(),
            ));
        }
        if knots.iter().any(|k| !k.is_finite()) {
            return Err(Error::InvalidConfig("knots must be finite".into()));
        }
        if knots.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidConfig("knots must be non-decreasing".into()));
        }
        Ok(Self(knots))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Distinct breakpoints, in order.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for &k in &self.0 {
            if out.last().map_or(true, |&l| k > l) {
                out.push(k);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BSplineBasis {
    knots: KnotVector,
    order: usize,
}

impl BSplineBasis {
    pub fn new(knots: KnotVector, order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidConfig("spline order must be positive".into()));
        }
        if order > MAX_ORDER {
            return Err(Error::InvalidConfig(format!(
                "spline degree {} exceeds the supported maximum {MAX_DEGREE}",
                order - 1
            )));
        }
        if knots.len() < 2 * order {
            return Err(Error::InvalidConfig(format!(
                "order {order} needs at least {} knots, got {}",
                2 * order,
                knots.len()
            )));
        }
        let basis = Self { knots, order };
        let (lo, hi) = basis.domain();
        if lo >= hi {
            return Err(Error::InvalidDomain { lo, hi });
        }
        Ok(basis)
    }

    /// Clamped basis with `grid_size` equal-width spans on `[lo, hi]`.
    ///
    /// The end knots are repeated `degree + 1` times, which gives
    /// `degree + grid_size` basis functions.
    pub fn uniform(lo: f64, hi: f64, grid_size: usize, degree: usize) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidDomain { lo, hi });
        }
        if grid_size < 2 {
            return Err(Error::InvalidConfig(format!(
                "grid size must be at least 2, got {grid_size}"
            )));
        }
        if degree > MAX_DEGREE {
            return Err(Error::InvalidConfig(format!(
                "spline degree {degree} exceeds the supported maximum {MAX_DEGREE}"
            )));
        }
        let width = hi - lo;
        let mut knots = Vec::with_capacity(grid_size + 1 + 2 * degree);
        knots.extend(std::iter::repeat(lo).take(degree));
        for k in 0..grid_size {
            knots.push(lo + width * k as f64 / grid_size as f64);
        }
        knots.push(hi);
        knots.extend(std::iter::repeat(hi).take(degree));
        Self::new(KnotVector::new(knots)?, degree + 1)
    }

    pub fn knots(&self) -> &KnotVector {
        &self.knots
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn degree(&self) -> usize {
        self.order - 1
    }

    pub fn nbasis(&self) -> usize {
        self.knots.len() - self.order
    }

    pub fn domain(&self) -> (f64, f64) {
        let t = self.knots.as_slice();
        (t[self.degree()], t[self.nbasis()])
    }

    pub fn contains(&self, x: f64) -> bool {
        let (lo, hi) = self.domain();
        x >= lo && x <= hi
    }

    pub fn check_domain(&self, x: f64) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            let (lo, hi) = self.domain();
            Err(Error::OutOfDomain { x, lo, hi })
        }
    }

    /// Greville abscissae. Using them as coefficients reproduces `f(x) = x`.
    pub fn greville(&self) -> Vec<f64> {
        let t = self.knots.as_slice();
        let p = self.degree();
        (0..self.nbasis())
            .map(|j| {
                if p == 0 {
                    0.5 * (t[j] + t[j + 1])
                } else {
                    t[j + 1..=j + p].iter().sum::<f64>() / p as f64
                }
            })
            .collect()
    }

    /// Index `s` of the span holding `x`, with `t_s <= x < t_{s+1}`
    /// (closed on the right for the last non-empty span).
    pub fn find_span(&self, x: f64) -> Result<usize> {
        self.check_domain(x)?;
        let t = self.knots.as_slice();
        let p = self.degree();
        let n = self.nbasis();
        let (_, hi) = self.domain();
        if x >= hi {
            // Last non-empty span.
            let mut s = n - 1;
            while s > p && t[s] >= t[s + 1] {
                s -= 1;
            }
            return Ok(s);
        }
        // First index with t[idx] > x, searched over [p + 1, n].
        let upper = p + 1 + t[p + 1..=n].partition_point(|&k| k <= x);
        Ok(upper - 1)
    }

    /// Non-zero basis values (or derivatives) at `x`.
    ///
    /// Returns the index of the first non-zero function and `order` values
    /// for functions `first..first + order`.
    pub fn local(&self, x: f64, derivative: usize) -> Result<(usize, [f64; MAX_ORDER])> {
        let span = self.find_span(x)?;
        let p = self.degree();
        let mut out = [0.0; MAX_ORDER];
        if derivative > p {
            return Ok((span - p, out));
        }
        let ders = self.ders_basis(span, x, derivative);
        out[..=p].copy_from_slice(&ders[derivative][..=p]);
        Ok((span - p, out))
    }

    /// Cox-de Boor triangle with derivatives, evaluated on span `span`.
    fn ders_basis(&self, span: usize, x: f64, nders: usize) -> [[f64; MAX_ORDER]; MAX_ORDER] {
        let t = self.knots.as_slice();
        let p = self.degree();
        let mut ndu = [[0.0f64; MAX_ORDER]; MAX_ORDER];
        let mut left = [0.0f64; MAX_ORDER];
        let mut right = [0.0f64; MAX_ORDER];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = x - t[span + 1 - j];
            right[j] = t[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                // knot differences live in the lower triangle
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }

        let mut ders = [[0.0f64; MAX_ORDER]; MAX_ORDER];
        for j in 0..=p {
            ders[0][j] = ndu[j][p];
        }
        let mut a = [[0.0f64; MAX_ORDER]; 2];
        for r in 0..=p {
            let (mut s1, mut s2) = (0usize, 1usize);
            a[0][0] = 1.0;
            for k in 1..=nders {
                let mut d = 0.0;
                let rk = r as isize - k as isize;
                let pk = p - k;
                if r >= k {
                    let rk = rk as usize;
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk];
                    d = a[s2][0] * ndu[rk][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if r as isize - 1 <= pk as isize { k - 1 } else { p - r };
                for j in j1..=j2 {
                    let idx = (rk + j as isize) as usize;
                    a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                    d += a[s2][j] * ndu[idx][pk];
                }
                if r <= pk {
                    a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                    d += a[s2][k] * ndu[r][pk];
                }
                ders[k][r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut factor = p as f64;
        for (k, row) in ders.iter_mut().enumerate().take(nders + 1).skip(1) {
            for v in row.iter_mut().take(p + 1) {
                *v *= factor;
            }
            factor *= (p - k) as f64;
        }
        ders
    }

    /// Local rows for many points; the compact form used by the smoother.
    pub fn local_rows(&self, points: &[f64], derivative: usize) -> Result<LocalRows> {
        let order = self.order;
        let mut first = Vec::with_capacity(points.len());
        let mut values = Vec::with_capacity(points.len() * order);
        for &x in points {
            let (f, vals) = self.local(x, derivative)?;
            first.push(f);
            values.extend_from_slice(&vals[..order]);
        }
        Ok(LocalRows {
            order,
            first,
            values,
        })
    }

    /// Spline derivatives `1..=max_derivative` at `x` from one basis evaluation.
    pub fn spline_derivatives(&self, coefficients: &[f64], x: f64, max_derivative: usize) -> Result<[f64; MAX_ORDER]> {
        debug_assert_eq!(coefficients.len(), self.nbasis());
        let span = self.find_span(x)?;
        let p = self.degree();
        let mut out = [0.0; MAX_ORDER];
        let nd = max_derivative.min(p);
        let ders = self.ders_basis(span, x, nd);
        let c = &coefficients[span - p..=span];
        for k in 1..=nd {
            out[k - 1] = ders[k][..=p].iter().zip(c).map(|(b, c)| b * c).sum();
        }
        Ok(out)
    }

    /// Value (or derivative) of a spline with the given coefficients.
    pub fn eval_spline(&self, coefficients: &[f64], x: f64, derivative: usize) -> Result<f64> {
        debug_assert_eq!(coefficients.len(), self.nbasis());
        let (first, vals) = self.local(x, derivative)?;
        Ok(vals[..self.order]
            .iter()
            .zip(&coefficients[first..first + self.order])
            .map(|(b, c)| b * c)
            .sum())
    }
}

/// Dense basis matrix: row `i`, column `j` holds `D^m phi_j(x_i)`.
#[derive(Debug, Clone)]
pub struct BasisMatrix {
    pub values: DMatrix<f64>,
    pub eval_points: Vec<f64>,
    pub derivative_order: usize,
    /// Set when the derivative order exceeds the degree, so every entry is zero.
    pub beyond_degree: bool,
}

pub fn eval_basis(basis: &BSplineBasis, points: &[f64], derivative: usize) -> Result<BasisMatrix> {
    let beyond_degree = derivative > basis.degree();
    if beyond_degree {
        warn!(
            "derivative order {derivative} exceeds spline degree {}; returning the zero function",
            basis.degree()
        );
    }
    let mut values = DMatrix::zeros(points.len(), basis.nbasis());
    for (i, &x) in points.iter().enumerate() {
        let (first, vals) = basis.local(x, derivative)?;
        for k in 0..basis.order() {
            values[(i, first + k)] = vals[k];
        }
    }
    Ok(BasisMatrix {
        values,
        eval_points: points.to_vec(),
        derivative_order: derivative,
        beyond_degree,
    })
}

/// Sparse row storage: row `i` has `order` entries starting at column `first[i]`.
#[derive(Debug, Clone)]
pub struct LocalRows {
    order: usize,
    first: Vec<usize>,
    values: Vec<f64>,
}

impl LocalRows {
    pub fn len(&self) -> usize {
        self.first.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first.is_empty()
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn row(&self, i: usize) -> (usize, &[f64]) {
        (self.first[i], &self.values[i * self.order..(i + 1) * self.order])
    }

    /// Row `i` dotted with a full coefficient vector.
    pub fn dot(&self, i: usize, coefficients: &[f64]) -> f64 {
        let (first, vals) = self.row(i);
        vals.iter()
            .zip(&coefficients[first..first + self.order])
            .map(|(b, c)| b * c)
            .sum()
    }
}

/// Degree-`degree` basis function `j` by direct Cox-de Boor recursion.
///
/// Exponential in `degree`; intended for checking the table-based evaluator.
/// Uses the half-open indicator at degree 0 (closed on the last non-empty
/// span) and takes `0/0 = 0` for coincident knots.
pub fn cox_de_boor(knots: &[f64], j: usize, degree: usize, x: f64) -> f64 {
    if degree == 0 {
        let (a, b) = (knots[j], knots[j + 1]);
        if a < b && x >= a && x < b {
            return 1.0;
        }
        // right end of the last non-empty span
        let last = *knots.last().unwrap();
        if a < b && x == b && b == last {
            return 1.0;
        }
        return 0.0;
    }
    let alpha = |i: usize| {
        let den = knots[i + degree] - knots[i];
        if den == 0.0 {
            0.0
        } else {
            (x - knots[i]) / den
        }
    };
    alpha(j) * cox_de_boor(knots, j, degree - 1, x)
        + (1.0 - alpha(j + 1)) * cox_de_boor(knots, j + 1, degree - 1, x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn uniform_counts() {
        assert_eq!(BSplineBasis::uniform(0.88, 1.10, 17, 3).unwrap().nbasis(), 20);
        assert_eq!(BSplineBasis::uniform(0.0, 10.0, 5, 3).unwrap().nbasis(), 8);
        assert_eq!(BSplineBasis::uniform(0.0, 1.0, 2, 0).unwrap().nbasis(), 2);
    }

    #[test]
    fn batched_derivatives_match_single() {
        let b = BSplineBasis::uniform(0.0, 3.0, 7, 5).unwrap();
        let c: Vec<f64> = (0..b.nbasis()).map(|k| ((k * 37 % 11) as f64) - 5.0).collect();
        for x in [0.0, 0.37, 1.5, 2.99, 3.0] {
            let all = b.spline_derivatives(&c, x, 4).unwrap();
            for k in 1..=4 {
                let one = b.eval_spline(&c, x, k).unwrap();
                assert!(close(all[k - 1], one, 1e-12 * one.abs().max(1.0)));
            }
        }
    }

    #[test]
    fn breakpoint_count_matches_order_formula() {
        // nbasis = order + number of breakpoints - 2
        let b = BSplineBasis::uniform(0.88, 1.10, 17, 3).unwrap();
        assert_eq!(b.nbasis(), b.order() + b.knots().breakpoints().len() - 2);
    }

    #[test]
    fn uniform_rejects_bad_input() {
        assert!(matches!(
            BSplineBasis::uniform(1.0, 1.0, 5, 3),
            Err(Error::InvalidDomain { .. })
        ));
        assert!(matches!(
            BSplineBasis::uniform(0.0, 1.0, 1, 3),
            Err(Error::InvalidConfig(_))
        ));
        assert!(BSplineBasis::uniform(0.0, 1.0, 4, 8).is_err());
    }

    #[test]
    fn degree_zero_indicators() {
        let b = BSplineBasis::uniform(0.0, 1.0, 2, 0).unwrap();
        let m = eval_basis(&b, &[0.0, 0.25, 0.5, 0.75, 1.0], 0).unwrap();
        let expect = [[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0], [0.0, 1.0]];
        for (i, row) in expect.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert_eq!(m.values[(i, j)], v);
            }
        }
    }

    #[test]
    fn order_one_on_integer_knots() {
        let b = BSplineBasis::new(KnotVector::new(vec![0.0, 1.0, 2.0, 3.0]).unwrap(), 1).unwrap();
        let m = eval_basis(&b, &[0.5], 0).unwrap();
        assert_eq!(m.values.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn cubic_row_sums_to_one() {
        let b = BSplineBasis::uniform(0.88, 1.10, 17, 3).unwrap();
        let m = eval_basis(&b, &[0.99], 0).unwrap();
        assert!(close(m.values.row(0).sum(), 1.0, 1e-12));
    }

    #[test]
    fn right_endpoint_is_evaluable() {
        let b = BSplineBasis::uniform(0.0, 2.0, 4, 3).unwrap();
        let m = eval_basis(&b, &[2.0], 0).unwrap();
        assert!(close(m.values[(0, b.nbasis() - 1)], 1.0, 1e-15));
    }

    #[test]
    fn out_of_domain_is_an_error() {
        let b = BSplineBasis::uniform(0.0, 1.0, 4, 3).unwrap();
        assert!(matches!(
            eval_basis(&b, &[1.5], 0),
            Err(Error::OutOfDomain { .. })
        ));
    }

    #[test]
    fn derivative_beyond_degree_is_flagged_zero() {
        let b = BSplineBasis::uniform(0.0, 1.0, 4, 2).unwrap();
        let m = eval_basis(&b, &[0.3, 0.7], 3).unwrap();
        assert!(m.beyond_degree);
        assert!(m.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn greville_coefficients_reproduce_identity() {
        let b = BSplineBasis::uniform(0.88, 1.10, 17, 3).unwrap();
        let c = b.greville();
        let h = 1e-6;
        for k in 1..50 {
            let x = 0.88 + 0.22 * k as f64 / 50.0;
            assert!(close(b.eval_spline(&c, x, 0).unwrap(), x, 1e-12));
            let analytic = b.eval_spline(&c, x, 1).unwrap();
            let fd = (b.eval_spline(&c, x + h, 0).unwrap() - b.eval_spline(&c, x - h, 0).unwrap())
                / (2.0 * h);
            assert!(close(analytic, 1.0, 1e-10));
            assert!(close(fd, 1.0, 1e-6));
        }
    }

    #[test]
    fn table_matches_direct_recursion() {
        let b = BSplineBasis::uniform(-1.0, 3.0, 6, 4).unwrap();
        let t = b.knots().as_slice();
        for k in 0..=40 {
            let x = -1.0 + 4.0 * k as f64 / 40.0;
            let m = eval_basis(&b, &[x], 0).unwrap();
            for j in 0..b.nbasis() {
                assert!(close(m.values[(0, j)], cox_de_boor(t, j, 4, x), 1e-12), "x={x} j={j}");
            }
        }
    }
}

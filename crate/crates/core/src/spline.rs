//! Univariate and tensor-product B-splines on open knot vectors.
//!
//! Indices are zero-based throughout: a knot vector with `n` basis functions
//! has functions `0..n`, and function `j` lives on `[t_j, t_{j+p+1}]`.
//! Evaluation is right-continuous at interior knots, with the last function
//! equal to one at `t = 1`.

use std::sync::OnceLock;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Largest polynomial degree supported by the fixed-size evaluation buffers.
pub const MAX_DEGREE: usize = 7;

/// Axis-aligned rectangle in a parameter domain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl Rect {
    pub const UNIT: Rect = Rect { lo: [0.0, 0.0], hi: [1.0, 1.0] };

    pub fn new(lo: [f64; 2], hi: [f64; 2]) -> Self {
        Rect { lo, hi }
    }

    pub fn width(&self, dir: usize) -> f64 {
        self.hi[dir] - self.lo[dir]
    }

    pub fn area(&self) -> f64 {
        self.width(0) * self.width(1)
    }

    pub fn center(&self) -> [f64; 2] {
        [0.5 * (self.lo[0] + self.hi[0]), 0.5 * (self.lo[1] + self.hi[1])]
    }

    /// Maps local coordinates in `[0,1]^2` onto the rectangle.
    #[inline]
    pub fn map(&self, u: [f64; 2]) -> [f64; 2] {
        [
            self.lo[0] + u[0] * (self.hi[0] - self.lo[0]),
            self.lo[1] + u[1] * (self.hi[1] - self.lo[1]),
        ]
    }

    pub fn contains(&self, t: [f64; 2]) -> bool {
        (0..2).all(|d| t[d] >= self.lo[d] && t[d] <= self.hi[d])
    }

    pub fn clamp(&self, t: [f64; 2]) -> [f64; 2] {
        [t[0].clamp(self.lo[0], self.hi[0]), t[1].clamp(self.lo[1], self.hi[1])]
    }

    /// The four quadrants, ordered `(0,0), (1,0), (0,1), (1,1)`.
    pub fn quadrants(&self) -> [Rect; 4] {
        let c = self.center();
        [
            Rect::new(self.lo, c),
            Rect::new([c[0], self.lo[1]], [self.hi[0], c[1]]),
            Rect::new([self.lo[0], c[1]], [c[0], self.hi[1]]),
            Rect::new(c, self.hi),
        ]
    }
}

/// A `p`-open knot vector on `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct KnotVector {
    degree: usize,
    knots: Vec<f64>,
    /// Multiplicity of midpoints inserted by [`KnotVector::dyadic_refine`].
    refine_multiplicity: usize,
    full_multiplicity: bool,
    /// Distinct knot values.
    breaks: Vec<f64>,
    /// For every nonempty span, the knot index `mu` with `t_mu <= t < t_{mu+1}`.
    span_knot: Vec<usize>,
    /// For every knot index, the index of its value in `breaks`.
    knot_break: Vec<usize>,
}

impl KnotVector {
    /// Standard knot vector: interior multiplicities at most `p`.
    ///
    /// Degree zero is only meaningful in the lowest-order mode, where
    /// knots may carry multiplicity `p + 1`; it is selected automatically.
    pub fn new(degree: usize, knots: Vec<f64>) -> Result<Self> {
        if degree == 0 {
            return Self::with_full_multiplicity(0, knots, 1);
        }
        Self::build(degree, knots, 1, false)
    }

    /// Knot vector allowing interior multiplicities up to `p + 1`, refined
    /// by inserting midpoints with multiplicity `q` (`1 <= q <= p + 1`).
    pub fn with_full_multiplicity(degree: usize, knots: Vec<f64>, q: usize) -> Result<Self> {
        if q == 0 || q > degree + 1 {
            return Err(Error::InvalidKnots(format!(
                "refinement multiplicity {q} must lie in 1..={}",
                degree + 1
            )));
        }
        Self::build(degree, knots, q, true)
    }

    /// Open knot vector `(0,..,0,1,..,1)` with a single span.
    pub fn single_span(degree: usize) -> Self {
        let mut knots = vec![0.0; degree + 1];
        knots.extend(std::iter::repeat_n(1.0, degree + 1));
        Self::new(degree, knots).expect("single-span knot vector is valid")
    }

    fn build(degree: usize, knots: Vec<f64>, q: usize, full: bool) -> Result<Self> {
        if degree > MAX_DEGREE {
            return Err(Error::InvalidKnots(format!("degree {degree} exceeds {MAX_DEGREE}")));
        }
        let p = degree;
        if knots.len() < 2 * (p + 1) {
            return Err(Error::InvalidKnots(format!(
                "{} knots are too few for degree {p}",
                knots.len()
            )));
        }
        if knots.iter().any(|t| !t.is_finite() || *t < 0.0 || *t > 1.0) {
            return Err(Error::InvalidKnots("knots must lie in [0, 1]".into()));
        }
        if knots.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidKnots("knots must be nondecreasing".into()));
        }
        let n = knots.len();
        if knots[..=p].iter().any(|t| *t != 0.0) || knots[n - p - 1..].iter().any(|t| *t != 1.0) {
            return Err(Error::InvalidKnots(format!("knot vector is not {p}-open")));
        }
        if knots[p + 1] == 0.0 || knots[n - p - 2] == 1.0 {
            return Err(Error::InvalidKnots("end knots exceed multiplicity p + 1".into()));
        }
        let max_interior = if full { p + 1 } else { p };
        let mut breaks = vec![knots[0]];
        let mut knot_break = Vec::with_capacity(n);
        let mut run = 0usize;
        for (i, &t) in knots.iter().enumerate() {
            if i > 0 && t > knots[i - 1] {
                breaks.push(t);
                run = 0;
            }
            run += 1;
            if t > 0.0 && t < 1.0 && run > max_interior {
                return Err(Error::InvalidKnots(format!(
                    "interior knot {t} has multiplicity above {max_interior}"
                )));
            }
            knot_break.push(breaks.len() - 1);
        }
        let span_knot = (0..n - 1).filter(|&i| knots[i + 1] > knots[i]).collect();
        Ok(KnotVector {
            degree,
            knots,
            refine_multiplicity: q,
            full_multiplicity: full,
            breaks,
            span_knot,
            knot_break,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn refine_multiplicity(&self) -> usize {
        self.refine_multiplicity
    }

    pub fn is_full_multiplicity(&self) -> bool {
        self.full_multiplicity
    }

    pub fn num_basis(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    /// Distinct knot values; span `s` is `[breaks[s], breaks[s+1]]`.
    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }

    pub fn num_spans(&self) -> usize {
        self.span_knot.len()
    }

    pub fn span_bounds(&self, span: usize) -> (f64, f64) {
        (self.breaks[span], self.breaks[span + 1])
    }

    /// Index of the first of the `p + 1` basis functions nonzero on `span`.
    pub fn first_basis_on_span(&self, span: usize) -> usize {
        self.span_knot[span] - self.degree
    }

    /// Half-open range of spans covered by the support of function `j`.
    pub fn basis_span_range(&self, j: usize) -> (usize, usize) {
        (self.knot_break[j], self.knot_break[j + self.degree + 1])
    }

    /// Support interval `[t_j, t_{j+p+1}]`.
    pub fn support(&self, j: usize) -> (f64, f64) {
        (self.knots[j], self.knots[j + self.degree + 1])
    }

    /// Span index containing `t` (right-continuous; `t = 1` is in the last span).
    pub fn find_span(&self, t: f64) -> usize {
        let ns = self.breaks.len() - 1;
        if t >= 1.0 {
            return ns - 1;
        }
        if t <= 0.0 {
            return 0;
        }
        // Largest s with breaks[s] <= t.
        let s = self.breaks.partition_point(|b| *b <= t);
        (s - 1).min(ns - 1)
    }

    /// Values of the `p + 1` functions nonzero on `span` at `t`.
    #[inline]
    pub fn basis_on_span(&self, span: usize, t: f64) -> [f64; MAX_DEGREE + 1] {
        basis_funs(&self.knots, self.degree, self.span_knot[span], t)
    }

    /// First derivatives of the `p + 1` functions nonzero on `span` at `t`.
    pub fn derivs_on_span(&self, span: usize, t: f64) -> [f64; MAX_DEGREE + 1] {
        let p = self.degree;
        let mut out = [0.0; MAX_DEGREE + 1];
        if p == 0 {
            return out;
        }
        let mu = self.span_knot[span];
        let lower = basis_funs(&self.knots, p - 1, mu, t);
        let u = &self.knots;
        let pf = p as f64;
        for r in 0..=p {
            let i = mu - p + r;
            let mut d = 0.0;
            if r >= 1 {
                let den = u[i + p] - u[i];
                if den > 0.0 {
                    d += pf * lower[r - 1] / den;
                }
            }
            if r < p {
                let den = u[i + p + 1] - u[i + 1];
                if den > 0.0 {
                    d -= pf * lower[r] / den;
                }
            }
            out[r] = d;
        }
        out
    }

    fn check_args(&self, j: usize, t: f64) -> Result<()> {
        if j >= self.num_basis() {
            return Err(Error::IndexOutOfRange { index: j, count: self.num_basis() });
        }
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::ParameterOutOfRange(t));
        }
        Ok(())
    }

    /// Value of basis function `j` at `t`.
    pub fn eval(&self, j: usize, t: f64) -> Result<f64> {
        self.check_args(j, t)?;
        let s = self.find_span(t);
        let first = self.first_basis_on_span(s);
        if j < first || j > first + self.degree {
            return Ok(0.0);
        }
        Ok(self.basis_on_span(s, t)[j - first])
    }

    /// First derivative of basis function `j` at `t` (right-sided at knots).
    pub fn eval_derivative(&self, j: usize, t: f64) -> Result<f64> {
        self.check_args(j, t)?;
        let s = self.find_span(t);
        let first = self.first_basis_on_span(s);
        if j < first || j > first + self.degree {
            return Ok(0.0);
        }
        Ok(self.derivs_on_span(s, t)[j - first])
    }

    /// Inserts the midpoint of every nonempty span (with the configured
    /// multiplicity); existing knots are kept.
    pub fn dyadic_refine(&self) -> KnotVector {
        let mut knots = Vec::with_capacity(self.knots.len() + self.num_spans() * self.refine_multiplicity);
        for (i, &t) in self.knots.iter().enumerate() {
            knots.push(t);
            if i + 1 < self.knots.len() && self.knots[i + 1] > t {
                let mid = 0.5 * (t + self.knots[i + 1]);
                knots.extend(std::iter::repeat_n(mid, self.refine_multiplicity));
            }
        }
        Self::build(self.degree, knots, self.refine_multiplicity, self.full_multiplicity)
            .expect("dyadic refinement preserves validity")
    }
}

/// Cox-de Boor evaluation of the `p + 1` nonzero functions on knot span `mu`.
#[inline]
pub(crate) fn basis_funs(u: &[f64], p: usize, mu: usize, t: f64) -> [f64; MAX_DEGREE + 1] {
    let mut n = [0.0; MAX_DEGREE + 1];
    let mut left = [0.0; MAX_DEGREE + 1];
    let mut right = [0.0; MAX_DEGREE + 1];
    n[0] = 1.0;
    for j in 1..=p {
        left[j] = t - u[mu + 1 - j];
        right[j] = u[mu + j] - t;
        let mut saved = 0.0;
        for r in 0..j {
            let temp = n[r] / (right[r + 1] + left[j - r]);
            n[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        n[j] = saved;
    }
    n
}

/// Sparse two-scale relation: `coarse_j = sum_k rows[j][k].1 * fine_{rows[j][k].0}`.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoScale {
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl TwoScale {
    pub fn row(&self, j: usize) -> &[(usize, f64)] {
        &self.rows[j]
    }

    /// Maps coarse coefficients to fine coefficients.
    pub fn apply(&self, coarse: &[f64], num_fine: usize) -> Vec<f64> {
        let mut fine = vec![0.0; num_fine];
        for (j, row) in self.rows.iter().enumerate() {
            for &(k, c) in row {
                fine[k] += coarse[j] * c;
            }
        }
        fine
    }
}

/// Two-scale coefficients between a knot vector and its dyadic refinement,
/// computed with the discrete B-spline (Oslo) recurrence.
pub fn two_scale_matrix(coarse: &KnotVector, fine: &KnotVector) -> Result<TwoScale> {
    if coarse.degree != fine.degree {
        return Err(Error::DegreeMismatch(coarse.degree, fine.degree));
    }
    if fine.knots != coarse.dyadic_refine().knots {
        return Err(Error::NotARefinement);
    }
    let p = coarse.degree;
    let t = &coarse.knots;
    let tau = &fine.knots;
    let omega = |l: usize, r: usize, x: f64| {
        let den = t[l + r] - t[l];
        if den > 0.0 {
            (x - t[l]) / den
        } else {
            0.0
        }
    };
    let mut rows = Vec::with_capacity(coarse.num_basis());
    for j in 0..coarse.num_basis() {
        let (lo, hi) = coarse.support(j);
        let mut row = Vec::new();
        let first = tau.partition_point(|x| *x < lo);
        for i in first..fine.num_basis() {
            if tau[i + p + 1] > hi {
                break;
            }
            let mut alpha = [0.0; MAX_DEGREE + 2];
            for (l, a) in alpha.iter_mut().enumerate().take(p + 1) {
                let l = j + l;
                *a = if t[l] <= tau[i] && tau[i] < t[l + 1] { 1.0 } else { 0.0 };
            }
            for r in 1..=p {
                let x = tau[i + r];
                for l in 0..=(p - r) {
                    let lj = j + l;
                    let right = {
                        let den = t[lj + r + 1] - t[lj + 1];
                        if den > 0.0 {
                            (t[lj + r + 1] - x) / den
                        } else {
                            0.0
                        }
                    };
                    alpha[l] = omega(lj, r, x) * alpha[l] + right * alpha[l + 1];
                }
            }
            if alpha[0].abs() > 1e-15 {
                row.push((i, alpha[0]));
            }
        }
        rows.push(row);
    }
    Ok(TwoScale { rows })
}

/// Tensor-product spline space on `[0,1]^2`.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorSplineSpace {
    pub dirs: [KnotVector; 2],
}

impl TensorSplineSpace {
    pub fn new(u: KnotVector, v: KnotVector) -> Self {
        TensorSplineSpace { dirs: [u, v] }
    }

    pub fn num_basis(&self) -> usize {
        self.dirs[0].num_basis() * self.dirs[1].num_basis()
    }

    pub fn dyadic_refine(&self) -> Self {
        TensorSplineSpace { dirs: [self.dirs[0].dyadic_refine(), self.dirs[1].dyadic_refine()] }
    }

    pub fn eval(&self, j: [usize; 2], t: [f64; 2]) -> Result<f64> {
        Ok(self.dirs[0].eval(j[0], t[0])? * self.dirs[1].eval(j[1], t[1])?)
    }

    pub fn cell_rect(&self, span: [usize; 2]) -> Rect {
        let (a0, b0) = self.dirs[0].span_bounds(span[0]);
        let (a1, b1) = self.dirs[1].span_bounds(span[1]);
        Rect::new([a0, a1], [b0, b1])
    }
}

/// Gauss-Legendre rule on `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadRule1D {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadRule1D {
    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

/// Gauss-Legendre nodes and weights mapped to `[0, 1]`.
pub fn gauss_rule(n: usize) -> Result<QuadRule1D> {
    if n == 0 {
        return Err(Error::InvalidArgument("quadrature order must be at least 1".into()));
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, refined by Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    Ok(QuadRule1D { nodes, weights })
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

const CACHED_RULES: usize = 64;

/// Shared Gauss rule for orders `1..=64`.
pub fn cached_gauss(n: usize) -> &'static QuadRule1D {
    static RULES: OnceLock<Vec<QuadRule1D>> = OnceLock::new();
    let rules = RULES.get_or_init(|| (1..=CACHED_RULES).map(|k| gauss_rule(k).unwrap()).collect());
    assert!((1..=CACHED_RULES).contains(&n), "Gauss order {n} is not cached");
    &rules[n - 1]
}

/// Dual basis function of a tensor B-spline on a single cell: the element
/// of the local span with `int_cell dual * B = delta` for every B-spline
/// nonzero on the cell.
#[derive(Clone, Debug)]
pub struct DualFunction {
    rect: Rect,
    spans: [usize; 2],
    coeffs: [Vec<f64>; 2],
}

impl DualFunction {
    pub fn new(space: &TensorSplineSpace, span: [usize; 2], target: [usize; 2]) -> Result<Self> {
        let mut coeffs: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        for d in 0..2 {
            let kv = &space.dirs[d];
            let p = kv.degree();
            let first = kv.first_basis_on_span(span[d]);
            if target[d] < first || target[d] > first + p {
                return Err(Error::NotSupportedOnElement { target: (target[0], target[1]) });
            }
            let (a, b) = kv.span_bounds(span[d]);
            let rule = cached_gauss(p + 1);
            let mut gram = DMatrix::<f64>::zeros(p + 1, p + 1);
            for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
                let t = a + (b - a) * x;
                let vals = kv.basis_on_span(span[d], t);
                for r in 0..=p {
                    for c in 0..=p {
                        gram[(r, c)] += w * (b - a) * vals[r] * vals[c];
                    }
                }
            }
            let inv = gram.try_inverse().ok_or(Error::SingularGram)?;
            let local = target[d] - first;
            coeffs[d] = (0..=p).map(|c| inv[(local, c)]).collect();
        }
        Ok(DualFunction { rect: space.cell_rect(span), spans: span, coeffs })
    }

    pub fn rect(&self) -> Rect {
        self.rect
    }

    /// Value of the dual function at a point of its cell.
    pub fn eval(&self, space: &TensorSplineSpace, t: [f64; 2]) -> f64 {
        let mut v = 1.0;
        for d in 0..2 {
            let vals = space.dirs[d].basis_on_span(self.spans[d], t[d]);
            v *= self.coeffs[d].iter().zip(vals.iter()).map(|(c, b)| c * b).sum::<f64>();
        }
        v
    }

    /// `int_cell dual * g` by tensor Gauss quadrature of the given order.
    pub fn pair(&self, space: &TensorSplineSpace, g: impl Fn([f64; 2]) -> f64, order: usize) -> f64 {
        let rule = cached_gauss(order);
        let area = self.rect.area();
        let mut acc = 0.0;
        for (&x, &wx) in rule.nodes.iter().zip(&rule.weights) {
            for (&y, &wy) in rule.nodes.iter().zip(&rule.weights) {
                let t = self.rect.map([x, y]);
                acc += wx * wy * self.eval(space, t) * g(t);
            }
        }
        acc * area
    }
}

/// `int_cell dual(target) * g` on the cell with span indices `span`.
pub fn element_dual_pairing(
    space: &TensorSplineSpace,
    span: [usize; 2],
    target: [usize; 2],
    g: impl Fn([f64; 2]) -> f64,
    order: usize,
) -> Result<f64> {
    Ok(DualFunction::new(space, span, target)?.pair(space, g, order))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fig2() -> KnotVector {
        KnotVector::new(
            2,
            vec![0.0, 0.0, 0.0, 1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0, 4.0 / 6.0, 4.0 / 6.0, 5.0 / 6.0, 1.0, 1.0, 1.0],
        )
        .unwrap()
    }

    #[test]
    fn hat_function() {
        let kv = KnotVector::new(1, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(kv.eval(0, 0.25).unwrap(), 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(kv.eval_derivative(1, 0.5).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn figure_two_basis_count() {
        assert_eq!(fig2().num_basis(), 9);
        assert_eq!(fig2().num_spans(), 6);
    }

    #[test]
    fn right_endpoint_convention() {
        let kv = fig2();
        assert_eq!(kv.eval(8, 1.0).unwrap(), 1.0);
        assert_eq!(kv.eval(7, 1.0).unwrap(), 0.0);
        // Right-continuity at the double knot 4/6: the C^0 function peaks there.
        assert_abs_diff_eq!(kv.eval(5, 4.0 / 6.0).unwrap(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn rejects_bad_arguments() {
        let kv = fig2();
        assert!(matches!(kv.eval(9, 0.5), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(kv.eval(0, 1.5), Err(Error::ParameterOutOfRange(_))));
        assert!(KnotVector::new(1, vec![0.0, 0.5, 1.0, 1.0]).is_err());
        assert!(KnotVector::new(1, vec![0.0, 0.0, 0.5, 0.5, 1.0, 1.0]).is_err());
        assert!(KnotVector::with_full_multiplicity(1, vec![0.0, 0.0, 0.5, 0.5, 1.0, 1.0], 2).is_ok());
    }

    #[test]
    fn partition_of_unity_and_locality() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let kvs = [
            fig2(),
            KnotVector::single_span(0).dyadic_refine().dyadic_refine(),
            KnotVector::single_span(3).dyadic_refine(),
            KnotVector::new(2, vec![0.0, 0.0, 0.0, 0.3, 0.3, 0.7, 1.0, 1.0, 1.0]).unwrap(),
        ];
        for kv in &kvs {
            for _ in 0..1000 {
                let t: f64 = rng.gen();
                let mut sum = 0.0;
                let mut dsum = 0.0;
                for j in 0..kv.num_basis() {
                    let b = kv.eval(j, t).unwrap();
                    assert!(b >= 0.0);
                    let (lo, hi) = kv.support(j);
                    if t < lo || t > hi {
                        assert_eq!(b, 0.0);
                    }
                    sum += b;
                    dsum += kv.eval_derivative(j, t).unwrap();
                }
                assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-12);
                assert_abs_diff_eq!(dsum, 0.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let kv = fig2();
        let h = 1e-6;
        for j in 0..kv.num_basis() {
            for &t in &[0.05, 0.21, 0.4, 0.55, 0.9] {
                let fd = (kv.eval(j, t + h).unwrap() - kv.eval(j, t - h).unwrap()) / (2.0 * h);
                assert_abs_diff_eq!(kv.eval_derivative(j, t).unwrap(), fd, epsilon = 1e-6);
            }
        }
        let p0 = KnotVector::single_span(0).dyadic_refine();
        assert_eq!(p0.eval_derivative(0, 0.3).unwrap(), 0.0);
    }

    #[test]
    fn dyadic_refinement_examples() {
        let kv = KnotVector::new(1, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(kv.dyadic_refine().knots(), &[0.0, 0.0, 0.5, 1.0, 1.0]);
        let kv = KnotVector::new(2, vec![0.0, 0.0, 0.0, 0.5, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(kv.dyadic_refine().knots(), &[0.0, 0.0, 0.0, 0.25, 0.5, 0.75, 1.0, 1.0, 1.0]);
        let kv = KnotVector::single_span(0).dyadic_refine().dyadic_refine();
        assert_eq!(kv.breaks(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        let full = KnotVector::with_full_multiplicity(1, vec![0.0, 0.0, 1.0, 1.0], 2).unwrap();
        assert_eq!(full.dyadic_refine().knots(), &[0.0, 0.0, 0.5, 0.5, 1.0, 1.0]);
    }

    #[test]
    fn repeated_refinement_halves_spans() {
        let mut kv = fig2();
        let widths0: Vec<f64> = kv.breaks().windows(2).map(|w| w[1] - w[0]).collect();
        for k in 1..=4 {
            kv = kv.dyadic_refine();
            let widths: Vec<f64> = kv.breaks().windows(2).map(|w| w[1] - w[0]).collect();
            assert_eq!(widths.len(), widths0.len() << k);
            for (s, w) in widths.iter().enumerate() {
                let expected = widths0[s >> k] / (1u64 << k) as f64;
                assert!((w - expected).abs() <= 1e-14 * expected);
            }
        }
    }

    #[test]
    fn two_scale_linear_example() {
        // Oracle: least squares on 10 sample points gives (1, 0.5, 0).
        let coarse = KnotVector::new(1, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let fine = coarse.dyadic_refine();
        let ts = two_scale_matrix(&coarse, &fine).unwrap();
        let dense: Vec<f64> = ts.apply(&[1.0, 0.0], fine.num_basis());
        assert_eq!(dense.len(), 3);
        assert_abs_diff_eq!(dense[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(dense[1], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(dense[2], 0.0, epsilon = 1e-15);
        for i in 0..10 {
            let t = i as f64 / 9.0;
            let recon: f64 = (0..3).map(|k| dense[k] * fine.eval(k, t).unwrap()).sum();
            assert_abs_diff_eq!(recon, coarse.eval(0, t).unwrap(), epsilon = 1e-14);
        }
    }

    #[test]
    fn two_scale_lowest_order() {
        let coarse = KnotVector::single_span(0).dyadic_refine();
        let fine = coarse.dyadic_refine();
        let ts = two_scale_matrix(&coarse, &fine).unwrap();
        assert_eq!(ts.row(0), &[(0, 1.0), (1, 1.0)]);
        assert_eq!(ts.row(1), &[(2, 1.0), (3, 1.0)]);
    }

    #[test]
    fn two_scale_reproduces_coarse_functions() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for coarse in [fig2(), KnotVector::single_span(3), KnotVector::new(2, vec![0.0, 0.0, 0.0, 0.3, 0.3, 0.7, 1.0, 1.0, 1.0]).unwrap()] {
            let fine = coarse.dyadic_refine();
            let ts = two_scale_matrix(&coarse, &fine).unwrap();
            let ones = ts.apply(&vec![1.0; coarse.num_basis()], fine.num_basis());
            for c in &ones {
                assert_abs_diff_eq!(*c, 1.0, epsilon = 1e-13);
            }
            for j in 0..coarse.num_basis() {
                assert!(ts.row(j).len() <= coarse.degree() + 2);
                assert!(ts.row(j).iter().all(|(_, c)| *c >= 0.0));
                for _ in 0..200 {
                    let t: f64 = rng.gen();
                    let recon: f64 = ts.row(j).iter().map(|&(k, c)| c * fine.eval(k, t).unwrap()).sum();
                    assert_abs_diff_eq!(recon, coarse.eval(j, t).unwrap(), epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn two_scale_rejects_mismatch() {
        let a = KnotVector::single_span(1);
        let b = KnotVector::single_span(2).dyadic_refine();
        assert!(matches!(two_scale_matrix(&a, &b), Err(Error::DegreeMismatch(1, 2))));
        assert!(matches!(two_scale_matrix(&a, &a), Err(Error::NotARefinement)));
    }

    #[test]
    fn gauss_rules() {
        let r1 = gauss_rule(1).unwrap();
        assert_eq!(r1.nodes, vec![0.5]);
        assert_eq!(r1.weights, vec![1.0]);
        let r2 = gauss_rule(2).unwrap();
        assert_abs_diff_eq!(r2.integrate(|t| t.powi(3)), 0.25, epsilon = 1e-15);
        let r16 = gauss_rule(16).unwrap();
        assert_abs_diff_eq!(r16.integrate(f64::cos), 1f64.sin(), epsilon = 1e-14);
        for n in 1..=40 {
            let r = gauss_rule(n).unwrap();
            assert!(r.weights.iter().all(|w| *w > 0.0));
            assert_abs_diff_eq!(r.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-13);
            let deg = 2 * n - 1;
            assert_abs_diff_eq!(r.integrate(|t| t.powi(deg as i32)), 1.0 / (deg as f64 + 1.0), epsilon = 1e-13);
        }
        assert!(gauss_rule(0).is_err());
    }

    #[test]
    fn dual_pairing_is_biorthogonal() {
        let space = TensorSplineSpace::new(fig2(), KnotVector::single_span(1).dyadic_refine());
        let span = [2, 1];
        let first0 = space.dirs[0].first_basis_on_span(2);
        let first1 = space.dirs[1].first_basis_on_span(1);
        let target = [first0 + 1, first1];
        for a in first0..=first0 + 2 {
            for b in first1..=first1 + 1 {
                let v = element_dual_pairing(&space, span, target, |t| space.eval([a, b], t).unwrap(), 4).unwrap();
                let expected = if [a, b] == target { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(v, expected, epsilon = 1e-12);
            }
        }
        assert!(element_dual_pairing(&space, span, [0, 0], |_| 1.0, 3).is_err());
    }

    #[test]
    fn dual_bound_is_scale_invariant() {
        // ||dual||_inf * |cell| should not grow under uniform refinement.
        let mut space = TensorSplineSpace::new(KnotVector::single_span(2), KnotVector::single_span(2));
        let mut bounds = Vec::new();
        for _ in 0..6 {
            let nspan = space.dirs[0].num_spans();
            let span = [nspan / 2, nspan / 2];
            let first = [space.dirs[0].first_basis_on_span(span[0]), space.dirs[1].first_basis_on_span(span[1])];
            let dual = DualFunction::new(&space, span, first).unwrap();
            let rect = dual.rect();
            let mut sup: f64 = 0.0;
            for i in 0..=10 {
                for j in 0..=10 {
                    let t = rect.map([i as f64 / 10.0, j as f64 / 10.0]);
                    sup = sup.max(dual.eval(&space, t).abs());
                }
            }
            bounds.push(sup * rect.area());
            space = space.dyadic_refine();
        }
        // Past the first level the central cell sees the same scaled pattern.
        for k in 2..bounds.len() {
            assert!((bounds[k] / bounds[1] - 1.0).abs() < 1e-9, "{bounds:?}");
        }
        assert!(bounds[0] <= bounds[1], "{bounds:?}");
    }
}

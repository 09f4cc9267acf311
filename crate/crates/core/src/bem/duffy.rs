//! Reference rules for weakly singular integrals over pairs of unit squares.
//!
//! Each rule is a list of points `(u, v)` in `[0,1]^2 x [0,1]^2` with
//! weights such that `sum w F(u, v)` approximates the integral of `F` over
//! the product, for `F` with a `1/|u - v|`-type singularity in one of three
//! configurations:
//!
//! * identical: singular on the diagonal `u = v`;
//! * common edge: singular on `u1 = v1, u2 = v2 = 0`;
//! * common vertex: singular at `u = v = 0`.

use std::collections::HashMap;
use std::sync::{Arc, LazyLock, Mutex};

use crate::spline::cached_gauss;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SingularCase {
    Identical,
    CommonEdge,
    CommonVertex,
}

#[derive(Clone, Copy, Debug)]
pub struct PairPoint {
    pub u: [f64; 2],
    pub v: [f64; 2],
    pub w: f64,
}

static RULES: LazyLock<Mutex<HashMap<(SingularCase, usize), Arc<Vec<PairPoint>>>>> =
    LazyLock::new(|| Mutex::new(HashMap::new()));

/// Cached rule with `n` Gauss points per integration variable.
pub fn singular_rule(case: SingularCase, n: usize) -> Arc<Vec<PairPoint>> {
    let mut rules = RULES.lock().expect("rule cache poisoned");
    rules
        .entry((case, n))
        .or_insert_with(|| {
            Arc::new(match case {
                SingularCase::Identical => identical(n),
                SingularCase::CommonEdge => common_edge(n),
                SingularCase::CommonVertex => common_vertex(n),
            })
        })
        .clone()
}

fn gauss4(n: usize) -> Vec<([f64; 4], f64)> {
    let g = cached_gauss(n);
    let mut out = Vec::with_capacity(n.pow(4));
    for (a, wa) in g.nodes.iter().zip(&g.weights) {
        for (b, wb) in g.nodes.iter().zip(&g.weights) {
            for (c, wc) in g.nodes.iter().zip(&g.weights) {
                for (d, wd) in g.nodes.iter().zip(&g.weights) {
                    out.push(([*a, *b, *c, *d], wa * wb * wc * wd));
                }
            }
        }
    }
    out
}

/// Difference `z = v - u` split into sign quadrants and two triangles each.
fn identical(n: usize) -> Vec<PairPoint> {
    let base = gauss4(n);
    let mut out = Vec::with_capacity(8 * base.len());
    for s in [[1.0, 1.0], [-1.0, 1.0], [1.0, -1.0], [-1.0, -1.0]] {
        for tri in 0..2 {
            for &([xi, eta, w1, w2], w) in &base {
                let (a, b) = if tri == 0 { (xi, xi * eta) } else { (xi * eta, xi) };
                let z = [s[0] * a, s[1] * b];
                let len = [1.0 - a, 1.0 - b];
                let u = [(-z[0]).max(0.0) + len[0] * w1, (-z[1]).max(0.0) + len[1] * w2];
                let v = [u[0] + z[0], u[1] + z[1]];
                out.push(PairPoint { u, v, w: w * xi * len[0] * len[1] });
            }
        }
    }
    out
}

/// `(|v1 - u1|, u2, v2)` split into three pyramids by the largest entry.
fn common_edge(n: usize) -> Vec<PairPoint> {
    let base = gauss4(n);
    let mut out = Vec::with_capacity(6 * base.len());
    for sign in [1.0, -1.0] {
        for k in 0..3 {
            for &([xi, e1, e2, t], w) in &base {
                let mut coords = [0.0; 3];
                let mut rest = [xi * e1, xi * e2].into_iter();
                for (i, slot) in coords.iter_mut().enumerate() {
                    *slot = if i == k { xi } else { rest.next().unwrap() };
                }
                let [a, u2, v2] = coords;
                let d = sign * a;
                let u1 = (-d).max(0.0) + (1.0 - a) * t;
                out.push(PairPoint { u: [u1, u2], v: [u1 + d, v2], w: w * xi * xi * (1.0 - a) });
            }
        }
    }
    out
}

/// `(u1, u2, v1, v2)` split into four pyramids by the largest entry.
fn common_vertex(n: usize) -> Vec<PairPoint> {
    let base = gauss4(n);
    let mut out = Vec::with_capacity(4 * base.len());
    for k in 0..4 {
        for &([xi, e1, e2, e3], w) in &base {
            let mut coords = [0.0; 4];
            let mut rest = [xi * e1, xi * e2, xi * e3].into_iter();
            for (i, slot) in coords.iter_mut().enumerate() {
                *slot = if i == k { xi } else { rest.next().unwrap() };
            }
            out.push(PairPoint {
                u: [coords[0], coords[1]],
                v: [coords[2], coords[3]],
                w: w * xi * xi * xi,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn total(case: SingularCase, n: usize, f: impl Fn(&PairPoint) -> f64) -> f64 {
        singular_rule(case, n).iter().map(|p| p.w * f(p)).sum()
    }

    #[test]
    fn rules_integrate_polynomials() {
        for case in [SingularCase::Identical, SingularCase::CommonEdge, SingularCase::CommonVertex] {
            assert!((total(case, 4, |_| 1.0) - 1.0).abs() < 1e-13, "{case:?}");
            let m = total(case, 5, |p| p.u[0] * p.v[1] * p.v[1] + p.u[1]);
            assert!((m - (1.0 / 6.0 + 0.5)).abs() < 1e-12, "{case:?}: {m}");
        }
    }

    #[test]
    fn points_stay_in_unit_squares() {
        for case in [SingularCase::Identical, SingularCase::CommonEdge, SingularCase::CommonVertex] {
            for p in singular_rule(case, 3).iter() {
                assert!(p.u.iter().chain(&p.v).all(|c| (0.0..=1.0).contains(c)));
                assert!(p.w > 0.0);
            }
        }
    }

    #[test]
    fn flat_singular_integrals_converge() {
        // Identical unit squares in the plane: the integral of 1/|x - y| is
        // 4/3 (1 - sqrt 2) + 4 ln(1 + sqrt 2).
        let exact = 4.0 / 3.0 * (1.0 - 2f64.sqrt()) + 4.0 * (1.0 + 2f64.sqrt()).ln();
        let f = |p: &PairPoint| 1.0 / ((p.u[0] - p.v[0]).powi(2) + (p.u[1] - p.v[1]).powi(2)).sqrt();
        let err = (total(SingularCase::Identical, 10, f) - exact).abs();
        assert!(err < 1e-10, "{err}");
    }
}

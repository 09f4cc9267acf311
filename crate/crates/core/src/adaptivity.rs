//! Residual estimator, marking, the adaptive loop and convergence rates.

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::SplineSpace;
use crate::bem::{assemble_matrix, assemble_rhs, solve, BoundaryPoint, PairCache, QuadConfig, RhsCache, SingleLayer};
use crate::error::{Error, Result};
use crate::geometry::{surface_gradient_sq, BoundaryGeometry};
use crate::mesh::{Element, MultiPatchMesh};
use crate::spline::{cached_gauss, Rect};

/// Right-hand side `f` of `V phi = f`.
pub type RightHandSide<'a> = dyn Fn(&BoundaryPoint) -> Result<f64> + Sync + 'a;

/// Per-element indicators `eta(T)` in mesh element order.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorReport {
    pub elements: Vec<Element>,
    pub indicators: Vec<f64>,
}

impl EstimatorReport {
    /// `sqrt(sum eta(T)^2)`.
    pub fn total(&self) -> f64 {
        self.indicators.iter().map(|e| e * e).sum::<f64>().sqrt()
    }
}

/// `q + 1` Chebyshev points of the first kind on `[0, 1]`.
pub fn chebyshev_nodes(q: usize) -> Vec<f64> {
    let n = q + 1;
    (0..n)
        .map(|k| 0.5 * (1.0 - ((2 * k + 1) as f64 * std::f64::consts::PI / (2 * n) as f64).cos()))
        .collect()
}

/// Values and derivatives of the Lagrange polynomials on `nodes` at `s`.
fn lagrange(nodes: &[f64], s: f64) -> (Vec<f64>, Vec<f64>) {
    let n = nodes.len();
    let mut val = vec![0.0; n];
    let mut der = vec![0.0; n];
    for k in 0..n {
        let mut denom = 1.0;
        let mut prod = 1.0;
        for j in (0..n).filter(|&j| j != k) {
            denom *= nodes[k] - nodes[j];
            prod *= s - nodes[j];
        }
        val[k] = prod / denom;
        let mut d = 0.0;
        for m in (0..n).filter(|&m| m != k) {
            let mut p = 1.0;
            for j in (0..n).filter(|&j| j != k && j != m) {
                p *= s - nodes[j];
            }
            d += p;
        }
        der[k] = d / denom;
    }
    (val, der)
}

/// Parameter points of the interpolation nodes on an element, first
/// direction fastest.
pub fn residual_nodes(rect: &Rect, degree: usize) -> Vec<[f64; 2]> {
    let nodes = chebyshev_nodes(degree);
    let mut out = Vec::with_capacity(nodes.len() * nodes.len());
    for s2 in &nodes {
        for s1 in &nodes {
            out.push(rect.map([*s1, *s2]));
        }
    }
    out
}

/// `diam(Gamma) |T|^{1/2} int_T |grad_Gamma I r|^2` for residual samples
/// `r` at [`residual_nodes`], with `|T|` the parameter area.
pub fn element_indicator_sq(
    geom: &BoundaryGeometry,
    patch: usize,
    rect: &Rect,
    degree: usize,
    r: &[f64],
) -> Result<f64> {
    let nodes = chebyshev_nodes(degree);
    let n = nodes.len();
    let g = cached_gauss(degree + 2);
    let tables: Vec<(Vec<f64>, Vec<f64>)> = g.nodes.iter().map(|&s| lagrange(&nodes, s)).collect();
    let mut acc = 0.0;
    for (b, wb) in g.weights.iter().enumerate() {
        for (a, wa) in g.weights.iter().enumerate() {
            let (l1, d1) = &tables[a];
            let (l2, d2) = &tables[b];
            let mut grad = [0.0; 2];
            for j in 0..n {
                for i in 0..n {
                    let v = r[i + n * j];
                    grad[0] += v * d1[i] * l2[j];
                    grad[1] += v * l1[i] * d2[j];
                }
            }
            grad[0] /= rect.width(0);
            grad[1] /= rect.width(1);
            let t = rect.map([g.nodes[a], g.nodes[b]]);
            let sp = geom.eval_full(patch, t);
            let gsq = surface_gradient_sq(&sp, grad).ok_or(Error::DegenerateJacobian { patch, t })?;
            acc += wa * wb * gsq * sp.area_normal().norm();
        }
    }
    Ok(geom.diameter() * rect.area().sqrt() * acc * rect.area())
}

/// Weighted-residual indicators for the Galerkin solution `coeffs`.
/// `f` samples at the interpolation nodes are cached per element when a
/// cache is given.
pub fn estimate(
    geom: &BoundaryGeometry,
    space: &SplineSpace,
    coeffs: &[f64],
    f: &RightHandSide<'_>,
    cfg: &QuadConfig,
    degree: usize,
    cache: Option<&mut RhsCache>,
) -> Result<EstimatorReport> {
    let mesh = space.mesh();
    let els = mesh.elements();
    let sl = SingleLayer::new(space, geom, coeffs, cfg)?;
    let points = |e: &Element| -> Result<Vec<BoundaryPoint>> {
        residual_nodes(&mesh.rect(e), degree).into_iter().map(|t| BoundaryPoint::new(geom, e.patch, t)).collect()
    };
    let sample_f = |e: &Element| -> Result<Vec<f64>> { points(e)?.iter().map(f).collect() };
    let f_values: Vec<Vec<f64>> = match cache {
        Some(c) => {
            let missing: Vec<Element> = els.iter().filter(|e| c.get(e).is_none()).copied().collect();
            let fresh: Vec<Result<Vec<f64>>> = missing.par_iter().map(&sample_f).collect();
            for (e, v) in missing.into_iter().zip(fresh) {
                c.insert(e, v?);
            }
            els.iter().map(|e| c.get(e).map(<[f64]>::to_vec).unwrap_or_default()).collect()
        }
        None => els.par_iter().map(&sample_f).collect::<Result<_>>()?,
    };
    let indicators = els
        .par_iter()
        .zip(&f_values)
        .map(|(e, fv)| {
            let r: Vec<f64> = points(e)?.iter().zip(fv).map(|(p, fx)| fx - sl.eval_point(p)).collect();
            Ok(element_indicator_sq(geom, e.patch, &mesh.rect(e), degree, &r)?.sqrt())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(EstimatorReport { elements: els.to_vec(), indicators })
}

/// Smallest set `M` with `theta * eta^2 <= eta(M)^2`: a prefix of the
/// elements sorted by decreasing indicator, ties in element order.
pub fn doerfler_mark(report: &EstimatorReport, theta: f64) -> Result<Vec<Element>> {
    if report.indicators.is_empty() {
        return Err(Error::EmptyReport);
    }
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::InvalidArgument(format!("theta = {theta} is outside (0, 1]")));
    }
    let mut order: Vec<usize> = (0..report.indicators.len()).collect();
    order.sort_by(|&a, &b| report.indicators[b].total_cmp(&report.indicators[a]).then(a.cmp(&b)));
    let sq: Vec<f64> = order.iter().map(|&i| report.indicators[i].powi(2)).collect();
    let total: f64 = sq.iter().sum();
    let goal = theta * total;
    let mut acc = 0.0;
    let mut count = order.len();
    for (k, v) in sq.iter().enumerate() {
        acc += v;
        if acc >= goal {
            count = k + 1;
            break;
        }
    }
    Ok(order[..count].iter().map(|&i| report.elements[i]).collect())
}

/// Aitken's delta-squared transform of the last three entries.
pub fn aitken_limit(seq: &[f64]) -> Result<f64> {
    let n = seq.len();
    if n < 3 {
        return Err(Error::SequenceTooShort(n));
    }
    let (a0, a1, a2) = (seq[n - 3], seq[n - 2], seq[n - 1]);
    let denom = a2 - 2.0 * a1 + a0;
    if denom.abs() < 1e-14 * a2.abs() || denom == 0.0 {
        return Ok(a2);
    }
    Ok(a2 - (a2 - a1).powi(2) / denom)
}

/// `sqrt(limit - discrete)` from the Galerkin orthogonality identity.
pub fn energy_error(discrete: f64, limit: f64) -> Result<f64> {
    let diff = limit - discrete;
    if diff < -1e-10 * limit.abs() {
        return Err(Error::Extrapolation { limit, discrete });
    }
    Ok(diff.max(0.0).sqrt())
}

/// Least-squares slope of `log y` against `log x` over the last `window`
/// points.
pub fn fit_rate(x: &[f64], y: &[f64], window: usize) -> Result<f64> {
    let n = x.len().min(y.len());
    let k = window.min(n);
    if k < 2 {
        return Err(Error::SequenceTooShort(k));
    }
    let lx: Vec<f64> = x[n - k..n].iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y[n - k..n].iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / k as f64;
    let my = ly.iter().sum::<f64>() / k as f64;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("rate fit needs distinct element counts".into()));
    }
    Ok(sxy / sxx)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefinementMode {
    Adaptive,
    Uniform,
}

impl std::str::FromStr for RefinementMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adaptive" => Ok(Self::Adaptive),
            "uniform" => Ok(Self::Uniform),
            other => Err(Error::Config(format!("unknown mode '{other}'"))),
        }
    }
}

/// Parameters of the adaptive loop.
#[derive(Clone, Debug, PartialEq)]
pub struct LoopConfig {
    pub degree: usize,
    pub mode: RefinementMode,
    pub theta: f64,
    /// Largest admissible element count; the loop stops before solving on
    /// a larger mesh.
    pub budget: usize,
    pub tolerance: f64,
    pub quad: QuadConfig,
    /// Residual interpolation degree; `None` uses `degree + 2`.
    pub interpolation_degree: Option<usize>,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            degree: 0,
            mode: RefinementMode::Adaptive,
            theta: 0.5,
            budget: 2500,
            tolerance: 1e-10,
            quad: QuadConfig::default(),
            interpolation_degree: None,
        }
    }
}

/// One iteration of the loop.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub ell: usize,
    pub num_elements: usize,
    pub dofs: usize,
    pub estimator: f64,
    /// `||Phi||_V^2 = V c . c`.
    pub energy_sq: f64,
    pub energy_error: Option<f64>,
    pub num_marked: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct AdaptiveTrace {
    pub rows: Vec<TraceRow>,
    /// Extrapolated `||phi||_V^2`, if the sequence was long enough.
    pub energy_limit: Option<f64>,
    pub final_mesh: Arc<MultiPatchMesh>,
    pub final_indicators: Vec<f64>,
}

impl AdaptiveTrace {
    /// Rate of the estimator over the last `window` iterations.
    pub fn estimator_rate(&self, window: usize) -> Result<f64> {
        let (n, e): (Vec<f64>, Vec<f64>) =
            self.rows.iter().map(|r| (r.num_elements as f64, r.estimator)).unzip();
        fit_rate(&n, &e, window)
    }

    /// Rate of the energy error over the last `window` rows that have one.
    pub fn error_rate(&self, window: usize) -> Result<f64> {
        let (n, e): (Vec<f64>, Vec<f64>) = self
            .rows
            .iter()
            .filter_map(|r| r.energy_error.filter(|e| *e > 0.0).map(|e| (r.num_elements as f64, e)))
            .unzip();
        fit_rate(&n, &e, window)
    }
}

/// Solve, estimate, mark, refine until the element budget or the
/// estimator tolerance is reached. `progress` sees each row as it is
/// completed.
pub fn adaptive_loop(
    geom: &BoundaryGeometry,
    f: &RightHandSide<'_>,
    cfg: &LoopConfig,
    mut progress: impl FnMut(&TraceRow),
) -> Result<AdaptiveTrace> {
    if !(cfg.theta > 0.0 && cfg.theta <= 1.0) {
        return Err(Error::Config(format!("theta = {} is outside (0, 1]", cfg.theta)));
    }
    cfg.quad.validate()?;
    let degree = cfg.interpolation_degree.unwrap_or(cfg.degree + 2);
    let mut mesh = Arc::new(geom.initial_mesh(cfg.degree)?);
    let mut pairs = PairCache::new();
    let mut rhs_cache = RhsCache::new();
    let mut node_cache = RhsCache::new();
    let mut rows = Vec::new();
    let mut last_indicators;
    loop {
        let start = Instant::now();
        let space = SplineSpace::new(mesh.clone());
        let v = assemble_matrix(&space, geom, &cfg.quad, Some(&mut pairs))?;
        let b = assemble_rhs(&space, geom, &cfg.quad, f, Some(&mut rhs_cache))?;
        let c = solve(&v, &b)?;
        let energy_sq = c.dot(&(&v * &c));
        let report = estimate(geom, &space, c.as_slice(), f, &cfg.quad, degree, Some(&mut node_cache))?;
        let eta = report.total();
        let done = eta < cfg.tolerance;
        let marked = match (done, cfg.mode) {
            (true, _) => Vec::new(),
            (false, RefinementMode::Uniform) => mesh.elements().to_vec(),
            (false, RefinementMode::Adaptive) => doerfler_mark(&report, cfg.theta)?,
        };
        let row = TraceRow {
            ell: rows.len(),
            num_elements: mesh.num_elements(),
            dofs: space.dim(),
            estimator: eta,
            energy_sq,
            energy_error: None,
            num_marked: marked.len(),
            seconds: start.elapsed().as_secs_f64(),
        };
        log::info!(
            "ell {} elements {} dofs {} estimator {:.6e} marked {}",
            row.ell,
            row.num_elements,
            row.dofs,
            row.estimator,
            row.num_marked
        );
        progress(&row);
        rows.push(row);
        last_indicators = report.indicators;
        if done {
            break;
        }
        let next = if cfg.mode == RefinementMode::Uniform { mesh.uniform_refine() } else { mesh.refine(&marked)? };
        if next.num_elements() > cfg.budget {
            break;
        }
        mesh = Arc::new(next);
    }
    let energies: Vec<f64> = rows.iter().map(|r| r.energy_sq).collect();
    let energy_limit = aitken_limit(&energies).ok();
    if let Some(limit) = energy_limit {
        for row in &mut rows {
            row.energy_error = energy_error(row.energy_sq, limit).ok();
        }
    }
    Ok(AdaptiveTrace { rows, energy_limit, final_mesh: mesh, final_indicators: last_indicators })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(ind: &[f64]) -> EstimatorReport {
        EstimatorReport {
            elements: (0..ind.len()).map(|i| Element::new(0, 0, i, 0)).collect(),
            indicators: ind.to_vec(),
        }
    }

    #[test]
    fn lagrange_basis_is_cardinal() {
        let nodes = chebyshev_nodes(3);
        for (k, &x) in nodes.iter().enumerate() {
            let (v, _) = lagrange(&nodes, x);
            for (j, vj) in v.iter().enumerate() {
                assert!((vj - if j == k { 1.0 } else { 0.0 }).abs() < 1e-13);
            }
        }
        let (_, d) = lagrange(&nodes, 0.3);
        let slope: f64 = d.iter().zip(&nodes).map(|(a, x)| a * x * x).sum();
        assert!((slope - 0.6).abs() < 1e-12);
    }

    #[test]
    fn marking_examples() {
        let r = report(&[4.0, 1.0, 1.0, 1.0, 1.0]);
        assert_eq!(doerfler_mark(&r, 0.5).unwrap().len(), 1);
        let r = report(&[1.0; 6]);
        assert_eq!(doerfler_mark(&r, 0.5).unwrap(), r.elements[..3].to_vec());
        let r = report(&[0.3, 0.0, 0.1, 0.2]);
        assert_eq!(doerfler_mark(&r, 1.0).unwrap().len(), 3);
        assert!(matches!(doerfler_mark(&report(&[]), 0.5), Err(Error::EmptyReport)));
        assert!(doerfler_mark(&r, 0.0).is_err());
    }

    #[test]
    fn aitken_examples() {
        let geo: Vec<f64> = (0..5).map(|n| 1.0 - 0.5f64.powi(n)).collect();
        assert_eq!(aitken_limit(&geo).unwrap(), 1.0);
        let tri: Vec<f64> = (0..5).map(|n| 1.0 - 3f64.powi(-n)).collect();
        assert!((aitken_limit(&tri).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(aitken_limit(&[2.0, 2.0, 2.0]).unwrap(), 2.0);
        assert!(matches!(aitken_limit(&[1.0, 2.0]), Err(Error::SequenceTooShort(2))));
    }

    #[test]
    fn energy_error_examples() {
        assert_eq!(energy_error(3.0, 3.0).unwrap(), 0.0);
        assert_eq!(energy_error(1.0, 5.0).unwrap(), 2.0);
        assert!(matches!(energy_error(2.0, 1.0), Err(Error::Extrapolation { .. })));
    }

    #[test]
    fn rate_examples() {
        let n: Vec<f64> = (1..8).map(|k| 6.0 * 4f64.powi(k)).collect();
        let e: Vec<f64> = n.iter().map(|x| x.powf(-0.5)).collect();
        assert!((fit_rate(&n, &e, 4).unwrap() + 0.5).abs() < 1e-12);
        assert!(fit_rate(&n, &vec![2.0; n.len()], 4).unwrap().abs() < 1e-12);
    }
}

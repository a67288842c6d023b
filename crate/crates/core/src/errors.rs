//! Quadrature seminorms, eigenpair matching, and convergence rates.
//!
//! Error measurement uses the same Gauss points as assembly: the discrete
//! L2 and H1 quantities are quadrature sums, finite even for basis
//! functions whose true H1 norm diverges at the collapsing edge (points
//! are strictly interior).  Eigenfunction comparison first fixes sign and
//! scale of the discrete function against the exact one, since eigenvectors
//! carry neither.

use crate::exact::{ExactEigenpair, Face};
use crate::geometry::{GeometryEval, SectorGeometry};
use crate::quadrature::GaussRule;
use crate::spaces::{Cell, Space};
use crate::{Error, Result};

/// A scalar field over the sector, evaluable at parametric points.
pub enum Field<'a> {
    /// Analytical eigenfunction.
    Exact(&'a ExactEigenpair),
    /// Discrete function given by coefficients over all functions of a
    /// space (constrained ones included, normally zero there).
    Discrete { space: &'a Space, coeffs: &'a [f64] },
    /// Pointwise difference `discrete - exact`.
    Difference {
        space: &'a Space,
        coeffs: &'a [f64],
        exact: &'a ExactEigenpair,
    },
    /// Closure from physical point to (value, physical gradient).
    Function(&'a dyn Fn([f64; 2]) -> (f64, [f64; 2])),
}

fn discrete_eval(
    space: &Space,
    coeffs: &[f64],
    g: &GeometryEval,
    zeta: [f64; 2],
) -> Result<(f64, [f64; 2])> {
    let e = space.eval_at(zeta)?;
    let mut v = 0.0;
    let mut gp = [0.0, 0.0];
    for (l, &idx) in e.indices.iter().enumerate() {
        let c = coeffs[idx];
        v += c * e.values[l];
        gp[0] += c * e.grads[l][0];
        gp[1] += c * e.grads[l][1];
    }
    let [[a, b], [cc, d]] = g.jac;
    let gx = (d * gp[0] - cc * gp[1]) / g.det;
    let gy = (-b * gp[0] + a * gp[1]) / g.det;
    Ok((v, [gx, gy]))
}

impl Field<'_> {
    fn eval(&self, g: &GeometryEval, zeta: [f64; 2]) -> Result<(f64, [f64; 2])> {
        match self {
            Field::Exact(e) => Ok((
                e.value(g.x, Face::Lower)?,
                e.gradient(g.x, Face::Lower)?,
            )),
            Field::Discrete { space, coeffs } => discrete_eval(space, coeffs, g, zeta),
            Field::Difference {
                space,
                coeffs,
                exact,
            } => {
                let (vh, gh) = discrete_eval(space, coeffs, g, zeta)?;
                let v = exact.value(g.x, Face::Lower)?;
                let gr = exact.gradient(g.x, Face::Lower)?;
                Ok((vh - v, [gh[0] - gr[0], gh[1] - gr[1]]))
            }
            Field::Function(f) => Ok(f(g.x)),
        }
    }
}

/// Quadrature L2 and H1 norms of a field over the given cells.
pub fn seminorms(
    field: &Field,
    geo: &SectorGeometry,
    cells: &[Cell],
    points_per_dir: usize,
) -> Result<(f64, f64)> {
    let rule = GaussRule::new(points_per_dir)?;
    let mut l2sq = 0.0;
    let mut gradsq = 0.0;
    for cell in cells {
        for q in rule.element_rule(cell.rect) {
            let g = geo.eval(q.zeta)?;
            let (v, grad) = field.eval(&g, q.zeta)?;
            if !v.is_finite() || !grad[0].is_finite() || !grad[1].is_finite() {
                return Err(Error::NonFinite("field value at quadrature point"));
            }
            let w = q.weight * g.det;
            l2sq += w * v * v;
            gradsq += w * (grad[0] * grad[0] + grad[1] * grad[1]);
        }
    }
    Ok((l2sq.sqrt(), (l2sq + gradsq).sqrt()))
}

/// Quadrature L2 norm.
pub fn seminorm_l2h(
    field: &Field,
    geo: &SectorGeometry,
    cells: &[Cell],
    points_per_dir: usize,
) -> Result<f64> {
    Ok(seminorms(field, geo, cells, points_per_dir)?.0)
}

/// Quadrature H1 norm (L2 part included).
pub fn seminorm_h1h(
    field: &Field,
    geo: &SectorGeometry,
    cells: &[Cell],
    points_per_dir: usize,
) -> Result<f64> {
    Ok(seminorms(field, geo, cells, points_per_dir)?.1)
}

/// Outcome of aligning a discrete eigenfunction with an exact one.
#[derive(Debug, Clone)]
pub struct Alignment {
    /// Rescaled coefficients: positive correlation with the exact function
    /// and equal quadrature L2 norm.
    pub coeffs: Vec<f64>,
    /// Normalized correlation before rescaling, in [-1, 1].
    pub cosine: f64,
}

/// L2 inner product and norms of a discrete function against an exact one
/// over the space's own cells.
fn l2h_correlation(
    space: &Space,
    coeffs: &[f64],
    exact: &ExactEigenpair,
    points_per_dir: usize,
) -> Result<(f64, f64, f64)> {
    let geo = space.geometry();
    let rule = GaussRule::new(points_per_dir)?;
    let mut ip = 0.0;
    let mut nh = 0.0;
    let mut ne = 0.0;
    for cell in space.cells() {
        for q in rule.element_rule(cell.rect) {
            let g = geo.eval(q.zeta)?;
            let (vh, _) = discrete_eval(space, coeffs, &g, q.zeta)?;
            let v = exact.value(g.x, Face::Lower)?;
            let w = q.weight * g.det;
            ip += w * vh * v;
            nh += w * vh * vh;
            ne += w * v * v;
        }
    }
    Ok((ip, nh.sqrt(), ne.sqrt()))
}

/// Fixes sign and scale of a discrete eigenfunction against its exact
/// counterpart; fails when the two are nearly orthogonal, which indicates
/// a matching mistake rather than an approximation error.
pub fn align(
    space: &Space,
    coeffs: &[f64],
    exact: &ExactEigenpair,
    points_per_dir: usize,
) -> Result<Alignment> {
    let (ip, nh, ne) = l2h_correlation(space, coeffs, exact, points_per_dir)?;
    if nh == 0.0 || ne == 0.0 {
        return Err(Error::MatchingFailure(
            "cannot align a vanishing function".into(),
        ));
    }
    let cosine = ip / (nh * ne);
    if cosine.abs() < 0.1 {
        return Err(Error::MatchingFailure(format!(
            "discrete mode nearly orthogonal to exact mode ({}, {}): |cos| = {:.3}",
            exact.k,
            exact.m,
            cosine.abs()
        )));
    }
    let scale = cosine.signum() * ne / nh;
    Ok(Alignment {
        coeffs: coeffs.iter().map(|c| c * scale).collect(),
        cosine,
    })
}

/// Maximal index range `[lo, hi)` around `idx` whose consecutive values
/// differ by less than `rel_tol` relatively.
pub fn cluster_range(values: &[f64], idx: usize, rel_tol: f64) -> (usize, usize) {
    let close = |a: f64, b: f64| (a - b).abs() <= rel_tol * a.abs().max(b.abs());
    let mut lo = idx;
    while lo > 0 && close(values[lo - 1], values[lo]) {
        lo -= 1;
    }
    let mut hi = idx + 1;
    while hi < values.len() && close(values[hi - 1], values[hi]) {
        hi += 1;
    }
    (lo, hi)
}

/// Pairs discrete and exact eigenvalues by rank.  Exact values inside one
/// cluster (relative gap below 1e-8) agree to that tolerance, so rank
/// pairing is value-exact there; function-level assignment inside clusters
/// is done by [`match_mode`] via correlation.
pub fn match_spectra(discrete: &[f64], exact: &[ExactEigenpair]) -> Vec<(usize, usize)> {
    (0..discrete.len().min(exact.len())).map(|i| (i, i)).collect()
}

/// A matched discrete eigenpair for one exact target mode.
#[derive(Debug, Clone)]
pub struct MatchedMode {
    /// Rank in the discrete spectrum.
    pub rank: usize,
    /// Index into the exact sequence.
    pub exact_index: usize,
    /// Correlation of the matched pair.
    pub cosine: f64,
}

/// Finds the discrete eigenpair approximating the exact mode `(k, m)`.
///
/// The mode's rank in the exact sequence selects the discrete candidate;
/// if the exact value sits in a near-degenerate cluster, every rank of the
/// cluster is tried and the best-correlated one wins.
pub fn match_mode(
    space: &Space,
    eigenvectors: &[Vec<f64>],
    embed: &dyn Fn(&[f64]) -> Vec<f64>,
    exact: &[ExactEigenpair],
    target: (usize, usize),
    points_per_dir: usize,
) -> Result<MatchedMode> {
    let exact_index = exact
        .iter()
        .position(|e| e.k == target.0 && e.m == target.1)
        .ok_or_else(|| {
            Error::MatchingFailure(format!(
                "mode ({}, {}) not among the {} exact eigenvalues provided",
                target.0,
                target.1,
                exact.len()
            ))
        })?;
    let values: Vec<f64> = exact.iter().map(|e| e.lambda).collect();
    let (lo, hi) = cluster_range(&values, exact_index, 1e-8);
    let hi = hi.min(eigenvectors.len());
    if lo >= hi {
        return Err(Error::MatchingFailure(format!(
            "exact mode rank {exact_index} exceeds the {} computed eigenpairs",
            eigenvectors.len()
        )));
    }
    let mut best: Option<(usize, f64)> = None;
    for rank in lo..hi {
        let full = embed(&eigenvectors[rank]);
        let (ip, nh, ne) =
            l2h_correlation(space, &full, &exact[exact_index], points_per_dir)?;
        let cosine = if nh == 0.0 || ne == 0.0 {
            0.0
        } else {
            ip / (nh * ne)
        };
        if best.map_or(true, |(_, c)| cosine.abs() > c.abs()) {
            best = Some((rank, cosine));
        }
    }
    let (rank, cosine) = best.expect("nonempty cluster");
    if cosine.abs() < 0.1 {
        return Err(Error::MatchingFailure(format!(
            "no discrete eigenpair correlates with mode ({}, {}): best |cos| = {:.3}",
            target.0,
            target.1,
            cosine.abs()
        )));
    }
    Ok(MatchedMode {
        rank,
        exact_index,
        cosine,
    })
}

/// Errors of one matched eigenpair on one mesh.
#[derive(Debug, Clone)]
pub struct ErrorReport {
    /// Angular index of the exact mode.
    pub k: usize,
    /// Radial index of the exact mode.
    pub m: usize,
    /// Exact eigenvalue.
    pub lambda: f64,
    /// Discrete eigenvalue.
    pub lambda_h: f64,
    /// `|lambda - lambda_h|`.
    pub abs_err: f64,
    /// Absolute error over `lambda`.
    pub rel_err: f64,
    /// Quadrature L2 error of the aligned eigenfunction.
    pub l2_err: f64,
    /// Quadrature H1 error of the aligned eigenfunction.
    pub h1_err: f64,
    /// Matching correlation.
    pub cosine: f64,
    /// Total function count of the space.
    pub dofs: usize,
}

/// Builds the error report for one target mode from a solved system.
pub fn mode_error_report(
    space: &Space,
    eigenvalues: &[f64],
    eigenvectors: &[Vec<f64>],
    embed: &dyn Fn(&[f64]) -> Vec<f64>,
    exact: &[ExactEigenpair],
    target: (usize, usize),
    points_per_dir: usize,
) -> Result<ErrorReport> {
    let matched = match_mode(space, eigenvectors, embed, exact, target, points_per_dir)?;
    let pair = &exact[matched.exact_index];
    let lambda_h = eigenvalues[matched.rank];
    let full = embed(&eigenvectors[matched.rank]);
    let aligned = align(space, &full, pair, points_per_dir)?;
    let diff = Field::Difference {
        space,
        coeffs: &aligned.coeffs,
        exact: pair,
    };
    let (l2_err, h1_err) = seminorms(&diff, space.geometry(), &space.cells(), points_per_dir)?;
    Ok(ErrorReport {
        k: pair.k,
        m: pair.m,
        lambda: pair.lambda,
        lambda_h,
        abs_err: (pair.lambda - lambda_h).abs(),
        rel_err: (pair.lambda - lambda_h).abs() / pair.lambda,
        l2_err,
        h1_err,
        cosine: aligned.cosine,
        dofs: space.num_dofs(),
    })
}

/// Least-squares convergence rate from the last three levels.
#[derive(Debug, Clone, Copy)]
pub struct RateEstimate {
    /// Slope of log(error) against log(abscissa).
    pub rate: f64,
    /// Whether the whole error sequence decreases strictly.
    pub monotone: bool,
}

/// Fits `error ~ C * x^rate` over the last three `(x, error)` pairs, where
/// `x` is a mesh size surrogate decreasing along the sequence (element size
/// for tensor meshes, inverse square root of the function count for
/// hierarchical ones).
pub fn estimate_rates(x: &[f64], errors: &[f64]) -> Result<RateEstimate> {
    if x.len() != errors.len() || x.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "rate estimation needs at least 3 matched levels, got {} and {}",
            x.len(),
            errors.len()
        )));
    }
    if errors.iter().any(|&e| !(e > 0.0)) || x.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::InvalidArgument(
            "rate estimation needs positive errors and abscissae".into(),
        ));
    }
    let tail = x.len() - 3;
    let lx: Vec<f64> = x[tail..].iter().map(|v| v.ln()).collect();
    let le: Vec<f64> = errors[tail..].iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let me = le.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (a, b) in lx.iter().zip(&le) {
        num += (a - mx) * (b - me);
        den += (a - mx) * (a - mx);
    }
    Ok(RateEstimate {
        rate: num / den,
        monotone: errors.windows(2).all(|w| w[1] < w[0]),
    })
}

/// Grading exponent for a whole run: `0.9 nu_1 / p`, capped at one.
pub fn suggest_mu(nu1: f64, p: usize) -> f64 {
    (0.9 * nu1 / p as f64).min(1.0)
}

/// Grading exponent adapted to one target mode: no grading when the mode
/// is smooth or its leading exponent exceeds the degree.
pub fn suggest_mu_for_mode(nu_k: f64, p: usize) -> f64 {
    let integer = (nu_k - nu_k.round()).abs() < 1e-9;
    if integer || nu_k >= p as f64 {
        1.0
    } else {
        suggest_mu(nu_k, p)
    }
}

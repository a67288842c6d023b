//! Open knot vectors and univariate B-spline evaluation.
//!
//! Knot vectors live on the normalized interval [0, 1] and are `p`-open
//! (both ends carry multiplicity `p + 1`).  Evaluation follows the classic
//! span/basis-function recursion; derivatives at breakpoints are
//! right-limits except at the right end of the interval, where the last
//! nonempty span is used, so evaluation at 1 is well defined.
//!
//! Refinement is provided in two forms, both returning the coefficient
//! transfer matrix onto the refined space: knot insertion (one Boehm step
//! per knot) and degree elevation.  Elevation computes the transfer by
//! collocation at the Greville abscissae of the elevated vector, which is
//! exact because the original space is contained in the elevated one.

use nalgebra::DMatrix;

use crate::{Error, Result};

/// Coincidence tolerance used when deciding whether an inserted knot hits
/// an existing one.  Graded vectors legitimately carry breakpoints as small
/// as ~1e-12, so the tolerance sits well below the smallest spacing they
/// can produce while still absorbing round-off in recomputed breakpoints.
pub const KNOT_TOL: f64 = 1e-14;

/// An open knot vector with its polynomial degree.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotVector {
    degree: usize,
    knots: Vec<f64>,
}

/// Basis values (and optional derivatives) of the nonzero functions at one
/// parameter value.
#[derive(Debug, Clone)]
pub struct BasisEvaluation {
    /// Knot span index such that `knots[span] <= zeta < knots[span + 1]`.
    pub span: usize,
    /// Index of the first nonzero basis function; `degree + 1` functions
    /// starting here are nonzero.
    pub first: usize,
    /// Rows: derivative order (0 = values), columns: local basis index.
    pub ders: Vec<Vec<f64>>,
}

impl BasisEvaluation {
    pub fn values(&self) -> &[f64] {
        &self.ders[0]
    }
}

/// Radially graded breakpoints `((j)/J)^(1/mu)` for `j = 0..=J`.
///
/// `mu = 1` reproduces the uniform partition exactly (elementwise).
pub fn graded_breakpoints(j: usize, mu: f64) -> Vec<f64> {
    assert!(j >= 1 && mu > 0.0 && mu <= 1.0);
    (0..=j)
        .map(|i| {
            let t = i as f64 / j as f64;
            if mu == 1.0 {
                t
            } else if i == 0 {
                0.0
            } else if i == j {
                1.0
            } else {
                t.powf(1.0 / mu)
            }
        })
        .collect()
}

impl KnotVector {
    /// Validates and wraps a raw knot list.
    pub fn new(degree: usize, knots: Vec<f64>) -> Result<Self> {
        if degree == 0 {
            return Err(Error::InvalidKnots("degree must be at least 1".into()));
        }
        if knots.len() < 2 * (degree + 1) {
            return Err(Error::InvalidKnots(format!(
                "need at least {} knots for degree {degree}, got {}",
                2 * (degree + 1),
                knots.len()
            )));
        }
        for w in knots.windows(2) {
            if !(w[1] >= w[0]) {
                return Err(Error::InvalidKnots(format!(
                    "knots must be nondecreasing, got {} after {}",
                    w[1], w[0]
                )));
            }
        }
        for i in 0..=degree {
            if knots[i] != 0.0 || knots[knots.len() - 1 - i] != 1.0 {
                return Err(Error::InvalidKnots(
                    "vector must be open: multiplicity p+1 at both ends of [0, 1]".into(),
                ));
            }
        }
        let kv = Self { degree, knots };
        for (_, mult) in kv.breakpoints() {
            if mult > degree + 1 {
                return Err(Error::InvalidKnots(format!(
                    "multiplicity {mult} exceeds degree + 1 = {}",
                    degree + 1
                )));
            }
        }
        Ok(kv)
    }

    /// Open vector over given interior breakpoints with per-breakpoint
    /// multiplicities.
    pub fn from_breakpoints(degree: usize, breaks: &[f64], mults: &[usize]) -> Result<Self> {
        if breaks.len() < 2 || breaks[0] != 0.0 || *breaks.last().unwrap() != 1.0 {
            return Err(Error::InvalidKnots(
                "breakpoints must start at 0 and end at 1".into(),
            ));
        }
        if mults.len() + 2 != breaks.len() {
            return Err(Error::InvalidKnots(format!(
                "need one multiplicity per interior breakpoint: {} breakpoints, {} multiplicities",
                breaks.len(),
                mults.len()
            )));
        }
        let mut knots = vec![0.0; degree + 1];
        for (i, &z) in breaks[1..breaks.len() - 1].iter().enumerate() {
            knots.extend(std::iter::repeat(z).take(mults[i]));
        }
        knots.extend(std::iter::repeat(1.0).take(degree + 1));
        Self::new(degree, knots)
    }

    /// Uniform open vector with `j` elements and a constant interior
    /// multiplicity.
    pub fn uniform(degree: usize, j: usize, interior_mult: usize) -> Result<Self> {
        if j == 0 {
            return Err(Error::InvalidKnots("need at least one element".into()));
        }
        let breaks: Vec<f64> = (0..=j).map(|i| i as f64 / j as f64).collect();
        let mults = vec![interior_mult; j.saturating_sub(1)];
        Self::from_breakpoints(degree, &breaks, &mults)
    }

    /// Radially graded open vector (`mu = 1` is uniform), single interior
    /// multiplicity.
    pub fn graded(degree: usize, j: usize, mu: f64) -> Result<Self> {
        if !(mu > 0.0 && mu <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "grading exponent must lie in (0, 1], got {mu}"
            )));
        }
        let breaks = graded_breakpoints(j, mu);
        let mults = vec![1; j - 1];
        Self::from_breakpoints(degree, &breaks, &mults)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Number of basis functions `n = #knots - p - 1`.
    pub fn num_basis(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    /// Distinct knot values with multiplicities, including the two ends.
    pub fn breakpoints(&self) -> Vec<(f64, usize)> {
        let mut out: Vec<(f64, usize)> = Vec::new();
        for &z in &self.knots {
            match out.last_mut() {
                Some((v, m)) if (*v - z).abs() <= KNOT_TOL => *m += 1,
                _ => out.push((z, 1)),
            }
        }
        out
    }

    /// Continuity order `k = p - mult` at each interior breakpoint.
    pub fn interior_regularities(&self) -> Vec<i64> {
        let bp = self.breakpoints();
        bp[1..bp.len() - 1]
            .iter()
            .map(|&(_, m)| self.degree as i64 - m as i64)
            .collect()
    }

    /// Number of elements (nonempty spans).
    pub fn num_elements(&self) -> usize {
        self.breakpoints().len() - 1
    }

    /// Knot span containing `zeta`; the last nonempty span at `zeta = 1`.
    pub fn span(&self, zeta: f64) -> usize {
        let n = self.num_basis();
        let p = self.degree;
        if zeta >= self.knots[n] {
            return n - 1;
        }
        if zeta <= self.knots[p] {
            return p;
        }
        let mut lo = p;
        let mut hi = n;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if zeta < self.knots[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    }

    /// Values and derivatives up to `max_deriv` of the `p + 1` nonzero
    /// basis functions at `zeta`.
    pub fn eval_basis(&self, zeta: f64, max_deriv: usize) -> BasisEvaluation {
        let p = self.degree;
        let span = self.span(zeta);
        let knots = &self.knots;
        // Triangular table of basis values together with knot differences.
        let mut ndu = vec![vec![0.0; p + 1]; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = zeta - knots[span + 1 - j];
            right[j] = knots[span + j] - zeta;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }
        let n_ders = max_deriv.min(p);
        let mut ders = vec![vec![0.0; p + 1]; max_deriv + 1];
        for j in 0..=p {
            ders[0][j] = ndu[j][p];
        }
        let mut a = [vec![0.0; p + 1], vec![0.0; p + 1]];
        for r in 0..=p {
            let mut s1 = 0;
            let mut s2 = 1;
            a[0][0] = 1.0;
            for k in 1..=n_ders {
                let mut d = 0.0;
                let rk = r as isize - k as isize;
                let pk = p - k;
                if r >= k {
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                    d = a[s2][0] * ndu[rk as usize][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if r as isize - 1 <= pk as isize {
                    k - 1
                } else {
                    p - r
                };
                for j in j1..=j2 {
                    a[s2][j] =
                        (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][(rk + j as isize) as usize];
                    d += a[s2][j] * ndu[(rk + j as isize) as usize][pk];
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
        for k in 1..=n_ders {
            for v in ders[k].iter_mut() {
                *v *= factor;
            }
            factor *= (p - k) as f64;
        }
        BasisEvaluation {
            span,
            first: span - p,
            ders,
        }
    }

    /// Evaluates a spline with the given coefficients.
    pub fn eval_spline(&self, coeffs: &[f64], zeta: f64) -> f64 {
        assert_eq!(coeffs.len(), self.num_basis());
        let b = self.eval_basis(zeta, 0);
        b.values()
            .iter()
            .enumerate()
            .map(|(i, v)| v * coeffs[b.first + i])
            .sum()
    }

    /// Multiplicity of `zeta` among the current knots.
    pub fn multiplicity_of(&self, zeta: f64) -> usize {
        self.knots
            .iter()
            .filter(|&&k| (k - zeta).abs() <= KNOT_TOL)
            .count()
    }

    /// Inserts the given interior knots (ascending processing order) and
    /// returns the refined vector plus the coefficient transfer matrix
    /// mapping old spline coefficients to the refined ones.
    pub fn insert_knots(&self, new_knots: &[f64]) -> Result<(Self, DMatrix<f64>)> {
        let mut sorted: Vec<f64> = new_knots.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut kv = self.clone();
        let mut transfer = DMatrix::<f64>::identity(self.num_basis(), self.num_basis());
        for &u in &sorted {
            if !(u > 0.0 && u < 1.0) {
                return Err(Error::InvalidKnots(format!(
                    "inserted knots must lie strictly inside (0, 1), got {u}"
                )));
            }
            // Snap to an existing knot when within the coincidence tolerance
            // so multiplicity accounting stays exact.
            let snapped = kv
                .knots
                .iter()
                .find(|&&k| (k - u).abs() <= KNOT_TOL)
                .copied()
                .unwrap_or(u);
            let s = kv.multiplicity_of(snapped);
            if s >= kv.degree + 1 {
                return Err(Error::InvalidKnots(format!(
                    "inserting {u} would exceed multiplicity p + 1"
                )));
            }
            let (next, step) = kv.insert_single(snapped, s);
            transfer = step * transfer;
            kv = next;
        }
        Ok((kv, transfer))
    }

    /// One Boehm insertion step; `s` is the current multiplicity of `u`.
    fn insert_single(&self, u: f64, s: usize) -> (Self, DMatrix<f64>) {
        let p = self.degree;
        let n = self.num_basis();
        let k = self.span(u);
        let mut step = DMatrix::<f64>::zeros(n + 1, n);
        for i in 0..=n {
            if i + p <= k {
                step[(i, i)] = 1.0;
            } else if i + s > k {
                step[(i, i - 1)] = 1.0;
            } else {
                let denom = self.knots[i + p] - self.knots[i];
                let alpha = (u - self.knots[i]) / denom;
                step[(i, i)] = alpha;
                step[(i, i - 1)] = 1.0 - alpha;
            }
        }
        let mut knots = self.knots.clone();
        knots.insert(k + 1, u);
        (
            Self {
                degree: p,
                knots,
            },
            step,
        )
    }

    /// Greville abscissae (averages of `p` consecutive interior knots).
    pub fn greville(&self) -> Vec<f64> {
        let p = self.degree;
        (0..self.num_basis())
            .map(|i| self.knots[i + 1..i + 1 + p].iter().sum::<f64>() / p as f64)
            .collect()
    }

    /// Raises the degree by `t` while preserving every breakpoint's
    /// continuity (each multiplicity grows by `t`).  Returns the elevated
    /// vector and the coefficient transfer matrix.
    ///
    /// The transfer is computed by interpolation at the Greville abscissae
    /// of the elevated vector; since the original space is a subspace of
    /// the elevated one, collocation reproduces coefficients exactly up to
    /// round-off.
    pub fn elevate_degree(&self, t: usize) -> Result<(Self, DMatrix<f64>)> {
        if t == 0 {
            let n = self.num_basis();
            return Ok((self.clone(), DMatrix::identity(n, n)));
        }
        let bp = self.breakpoints();
        let breaks: Vec<f64> = bp.iter().map(|&(z, _)| z).collect();
        let mults: Vec<usize> = bp[1..bp.len() - 1].iter().map(|&(_, m)| m + t).collect();
        let elevated = Self::from_breakpoints(self.degree + t, &breaks, &mults)?;
        let n_new = elevated.num_basis();
        let n_old = self.num_basis();
        let tau = elevated.greville();
        let mut collocation = DMatrix::<f64>::zeros(n_new, n_new);
        let mut values = DMatrix::<f64>::zeros(n_new, n_old);
        for (row, &z) in tau.iter().enumerate() {
            let be = elevated.eval_basis(z, 0);
            for (j, &v) in be.values().iter().enumerate() {
                collocation[(row, be.first + j)] = v;
            }
            let bo = self.eval_basis(z, 0);
            for (j, &v) in bo.values().iter().enumerate() {
                values[(row, bo.first + j)] = v;
            }
        }
        let lu = collocation.lu();
        let transfer = lu.solve(&values).ok_or_else(|| {
            Error::NotPositiveDefinite("degree-elevation collocation system is singular".into())
        })?;
        Ok((elevated, transfer))
    }

    /// Knots as a whitespace-separated decimal list with 17 significant
    /// digits, round-trippable through parsing.
    pub fn knots_decimal(&self) -> String {
        self.knots
            .iter()
            .map(|k| format!("{k:.16e}"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Applies a transfer matrix to a coefficient slice.
pub fn apply_transfer(transfer: &DMatrix<f64>, coeffs: &[f64]) -> Vec<f64> {
    assert_eq!(transfer.ncols(), coeffs.len());
    let v = nalgebra::DVector::from_column_slice(coeffs);
    (transfer * v).iter().copied().collect()
}

//! Exact eigenpairs of the Laplace sector problem.
//!
//! On a circular sector of opening angle `omega` with homogeneous Dirichlet
//! data on the circular edge and Neumann data on the straight legs, the
//! eigenfunctions separate in polar coordinates:
//!
//! `u_{k,m}(r, phi) = J_nu(mu_{nu,m} r) * cos(nu * phi)`,  `nu = k*pi/omega`,
//!
//! with eigenvalue `lambda = mu_{nu,m}^2`, where `mu_{nu,m}` is the m-th
//! positive zero of the Bessel function `J_nu`.  For fractional `nu` the
//! eigenfunction has limited Sobolev regularity `H^s`, `s < nu + 1`, which
//! drives the mesh-grading experiments elsewhere in the crate.
//!
//! `J_nu` is evaluated from the power series where its terms decay (small
//! argument or order dominating argument) and by downward three-term
//! recurrence with series normalization otherwise, which keeps relative
//! accuracy near 1e-14 over the zero range used here (z up to ~50).

use crate::{Error, Result};

/// Lanczos coefficients (g = 7, 9 terms); relative accuracy ~1e-13.
const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Gamma function for positive real arguments.
pub fn gamma(x: f64) -> f64 {
    assert!(x > 0.0, "gamma requires a positive argument, got {x}");
    if x < 0.5 {
        // Reflection keeps accuracy near zero.
        std::f64::consts::PI / ((std::f64::consts::PI * x).sin() * gamma(1.0 - x))
    } else {
        let z = x - 1.0;
        let mut acc = LANCZOS_COEF[0];
        for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
            acc += c / (z + i as f64);
        }
        let t = z + LANCZOS_G + 0.5;
        (2.0 * std::f64::consts::PI).sqrt() * t.powf(z + 0.5) * (-t).exp() * acc
    }
}

/// Power series evaluation; accurate when terms decay (z^2/4 <= nu+1) and
/// still near machine accuracy for z up to ~8 thanks to bounded cancellation.
fn bessel_j_series(nu: f64, z: f64) -> f64 {
    let q = 0.25 * z * z;
    let mut term = 1.0;
    let mut sum = 1.0;
    for j in 0..400 {
        let jf = j as f64;
        term *= -q / ((jf + 1.0) * (nu + jf + 1.0));
        sum += term;
        if term.abs() <= 1e-18 * sum.abs().max(1e-300) {
            break;
        }
    }
    let prefactor = (0.5 * z).powf(nu) / gamma(nu + 1.0);
    prefactor * sum
}

/// Downward recurrence (Miller) with the series normalization
/// `sum_k c_k J_{f+2k}(z) = (z/2)^f`, `c_k = (f+2k) Gamma(f+k) / k!`.
/// Returns `(J_nu, J_{nu+1})`.
fn bessel_j_miller(nu: f64, z: f64) -> (f64, f64) {
    let n = nu.floor() as usize;
    let f = nu - n as f64;
    let start = n.max(z.ceil() as usize) + (2.0 * z.powf(2.0 / 3.0)) as usize + 40;
    // Normalization coefficients via an exact ratio recurrence.
    let half = start / 2;
    let mut coef = vec![0.0; half + 1];
    coef[0] = gamma(f + 1.0);
    if half >= 1 {
        // c_1 directly: the ratio form would divide by f at integer order.
        coef[1] = (f + 2.0) * gamma(f + 1.0);
    }
    for k in 2..=half {
        let kf = k as f64;
        coef[k] = coef[k - 1] * ((f + 2.0 * kf) / (f + 2.0 * kf - 2.0)) * ((f + kf - 1.0) / kf);
    }
    let mut jp = 0.0_f64; // unnormalized J_{f+j+1}
    let mut jc = 1e-30_f64; // unnormalized J_{f+j}
    let mut sum = 0.0_f64;
    let mut out_n = 0.0_f64;
    let mut out_n1 = 0.0_f64;
    let mut j = start;
    loop {
        if j % 2 == 0 && j / 2 <= half {
            sum += coef[j / 2] * jc;
        }
        if j == n {
            out_n = jc;
        }
        if j == n + 1 {
            out_n1 = jc;
        }
        if j == 0 {
            break;
        }
        let next = 2.0 * (f + j as f64) / z * jc - jp;
        jp = jc;
        jc = next;
        j -= 1;
        if jc.abs() > 1e250 {
            let s = 1e-250;
            jc *= s;
            jp *= s;
            sum *= s;
            out_n *= s;
            out_n1 *= s;
        }
    }
    let alpha = (0.5 * z).powf(f) / sum;
    (alpha * out_n, alpha * out_n1)
}

/// Evaluates `J_nu(z)` together with `J_{nu+1}(z)`.
fn bessel_j_pair(nu: f64, z: f64) -> Result<(f64, f64)> {
    if !(nu >= 0.0) || !(z >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "bessel_j needs nu >= 0 and z >= 0, got nu={nu}, z={z}"
        )));
    }
    if z == 0.0 {
        let j0 = if nu == 0.0 { 1.0 } else { 0.0 };
        return Ok((j0, 0.0));
    }
    // Beyond z ~ 5 the alternating series cancels past the 1e-12 target
    // unless the order keeps its terms monotonically decreasing.
    let series_safe = |order: f64| z <= 5.0 || 0.25 * z * z <= order + 1.0;
    if series_safe(nu) && series_safe(nu + 1.0) {
        Ok((bessel_j_series(nu, z), bessel_j_series(nu + 1.0, z)))
    } else {
        Ok(bessel_j_miller(nu, z))
    }
}

/// Bessel function of the first kind of real order `nu >= 0`.
pub fn bessel_j(nu: f64, z: f64) -> Result<f64> {
    bessel_j_pair(nu, z).map(|(j, _)| j)
}

/// Derivative `J_nu'(z)` from the recurrence `J' = (nu/z) J - J_{nu+1}`.
///
/// For `0 <= nu < 1` (excluding the regular value at `nu = 0` only in the
/// limit sense) the derivative is unbounded at `z = 0`; that case is an
/// explicit error rather than a NaN.
pub fn bessel_j_deriv(nu: f64, z: f64) -> Result<f64> {
    if z == 0.0 {
        if nu < 1.0 {
            return Err(Error::InvalidArgument(format!(
                "J_nu' is singular at z = 0 for nu = {nu} < 1"
            )));
        }
        return Ok(if nu == 1.0 { 0.5 } else { 0.0 });
    }
    let (j, j1) = bessel_j_pair(nu, z)?;
    Ok(if nu == 0.0 { -j1 } else { nu / z * j - j1 })
}

/// McMahon's large-zero expansion, used to seed and sanity-check searches.
fn mcmahon_estimate(nu: f64, m: usize) -> f64 {
    let b = (m as f64 + 0.5 * nu - 0.25) * std::f64::consts::PI;
    let mu2 = 4.0 * nu * nu;
    b - (mu2 - 1.0) / (8.0 * b)
}

/// The m-th positive zero of `J_nu` (m >= 1).
///
/// Sign changes are counted upward from `z = nu` (below which `J_nu` has no
/// zero), so the returned bracket is verified; a safeguarded Newton
/// iteration then polishes the root inside it.
pub fn bessel_zero(nu: f64, m: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidArgument("zero index m starts at 1".into()));
    }
    if !(nu >= 0.0) || nu > 200.0 {
        return Err(Error::InvalidArgument(format!(
            "bessel_zero supports 0 <= nu <= 200, got {nu}"
        )));
    }
    // Consecutive zeros are separated by more than 2.4 for every order, so a
    // scan step well below that cannot skip a sign change.
    let step = 0.75;
    let mut x_prev = if nu == 0.0 { 1e-9 } else { nu };
    let mut f_prev = bessel_j(nu, x_prev)?;
    let mut found = 0usize;
    let mut bracket = None;
    let mut x = x_prev;
    let limit = mcmahon_estimate(nu, m) + nu + 10.0;
    while bracket.is_none() {
        x += step;
        if x > limit + 20.0 {
            return Err(Error::NoConvergence(format!(
                "zero scan for nu={nu}, m={m} exceeded {x}"
            )));
        }
        let fx = bessel_j(nu, x)?;
        if f_prev.signum() != fx.signum() && fx != 0.0 {
            found += 1;
            if found == m {
                bracket = Some((x_prev, x));
            }
        }
        x_prev = x;
        f_prev = fx;
    }
    let (mut lo, mut hi) = bracket.unwrap();
    let f_lo = bessel_j(nu, lo)?;
    // Safeguarded Newton: fall back to bisection whenever the Newton step
    // leaves the bracket.
    let mut root = 0.5 * (lo + hi);
    let seed = mcmahon_estimate(nu, m);
    if seed > lo && seed < hi {
        root = seed;
    }
    for _ in 0..200 {
        let (j, j1) = bessel_j_pair(nu, root)?;
        let dj = if nu == 0.0 { -j1 } else { nu / root * j - j1 };
        if j.signum() == f_lo.signum() {
            lo = root;
        } else {
            hi = root;
        }
        let newton = root - j / dj;
        let next = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        let scale = dj.abs().max(1.0);
        if (next - root).abs() <= 1e-15 * root && j.abs() <= 1e-13 * scale {
            root = next;
            break;
        }
        root = next;
    }
    let (j, j1) = bessel_j_pair(nu, root)?;
    let dj = if nu == 0.0 { -j1 } else { nu / root * j - j1 };
    if j.abs() > 1e-12 * dj.abs().max(1.0) {
        return Err(Error::NoConvergence(format!(
            "zero polish for nu={nu}, m={m}: residual {j:e}"
        )));
    }
    Ok(root)
}

/// Sobolev regularity class of an exact eigenfunction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regularity {
    /// `nu` is a nonnegative integer; the mode is analytic on the closed sector.
    Smooth,
    /// `u` lies in `H^s` exactly for `s < limit` with `limit = nu + 1`.
    SobolevLimit(f64),
}

impl Regularity {
    /// Short label: `smooth`, or the largest integer-order space `H{n}`.
    pub fn label(&self) -> String {
        match self {
            Regularity::Smooth => "smooth".to_string(),
            Regularity::SobolevLimit(s) => format!("H{}", s.floor() as i64),
        }
    }
}

/// Which crack face an on-leg point belongs to (only meaningful when the
/// opening angle is a full turn and both legs coincide geometrically).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Face {
    /// Angle 0 side.
    Lower,
    /// Angle `omega` side.
    Upper,
}

/// One exact eigenpair of the sector problem.
#[derive(Debug, Clone)]
pub struct ExactEigenpair {
    /// Angular mode number (`nu = k pi / omega`).
    pub k: usize,
    /// Radial zero index (m-th zero of `J_nu`).
    pub m: usize,
    /// Bessel order.
    pub nu: f64,
    /// `mu_{nu,m}`, the m-th positive zero of `J_nu`.
    pub mu: f64,
    /// Eigenvalue `mu^2`.
    pub lambda: f64,
    /// Opening angle of the sector the pair belongs to.
    pub omega: f64,
    pub regularity: Regularity,
}

/// Tolerance for deciding that a computed Bessel order is an integer.
const INTEGER_NU_TOL: f64 = 1e-9;

fn classify(nu: f64) -> Regularity {
    if (nu - nu.round()).abs() < INTEGER_NU_TOL {
        Regularity::Smooth
    } else {
        Regularity::SobolevLimit(nu + 1.0)
    }
}

impl ExactEigenpair {
    /// Builds the pair (k, m) for a sector of opening `omega`.
    pub fn new(omega: f64, k: usize, m: usize) -> Result<Self> {
        check_omega(omega)?;
        let nu = k as f64 * std::f64::consts::PI / omega;
        let mu = bessel_zero(nu, m)?;
        Ok(Self {
            k,
            m,
            nu,
            mu,
            lambda: mu * mu,
            omega,
            regularity: classify(nu),
        })
    }

    /// Polar angle of a physical point, measured from the positive leg into
    /// `[0, omega]`.  `face` disambiguates points on the slit when the
    /// sector is a full turn.
    pub fn angle_of(&self, x: [f64; 2], face: Face) -> Result<f64> {
        let r = x[0].hypot(x[1]);
        if r == 0.0 {
            return Ok(0.0);
        }
        let mut phi = x[1].atan2(x[0]);
        if phi < 0.0 {
            phi += 2.0 * std::f64::consts::PI;
        }
        // atan2 maps the positive axis to 0; promote to the far face on request.
        if phi == 0.0 && face == Face::Upper {
            phi = 2.0 * std::f64::consts::PI;
        }
        if phi > self.omega {
            let slack = 1e-12 * (1.0 + self.omega);
            if phi - self.omega <= slack {
                phi = self.omega;
            } else {
                return Err(Error::InvalidArgument(format!(
                    "point ({}, {}) lies outside the sector (angle {phi})",
                    x[0], x[1]
                )));
            }
        }
        Ok(phi)
    }

    /// Eigenfunction value at a physical point.
    pub fn value(&self, x: [f64; 2], face: Face) -> Result<f64> {
        let r = x[0].hypot(x[1]);
        let phi = self.angle_of(x, face)?;
        self.value_polar(r, phi)
    }

    /// Eigenfunction value in polar coordinates, `phi` already in `[0, omega]`.
    pub fn value_polar(&self, r: f64, phi: f64) -> Result<f64> {
        if r == 0.0 {
            return Ok(if self.k == 0 { 1.0 } else { 0.0 });
        }
        Ok(bessel_j(self.nu, self.mu * r)? * (self.nu * phi).cos())
    }

    /// Cartesian gradient at a physical point.
    ///
    /// For fractional `nu < 1` the gradient is unbounded at the vertex and
    /// evaluation exactly at the origin is an error.
    pub fn gradient(&self, x: [f64; 2], face: Face) -> Result<[f64; 2]> {
        let r = x[0].hypot(x[1]);
        let phi = self.angle_of(x, face)?;
        self.gradient_polar(r, phi)
    }

    /// Cartesian gradient from polar data.
    pub fn gradient_polar(&self, r: f64, phi: f64) -> Result<[f64; 2]> {
        if r == 0.0 {
            if self.nu < 1.0 && self.k != 0 {
                return Err(Error::InvalidArgument(format!(
                    "gradient of a nu = {} mode is singular at the vertex",
                    self.nu
                )));
            }
            if self.k == 0 {
                return Ok([0.0, 0.0]);
            }
            if (self.nu - 1.0).abs() < INTEGER_NU_TOL {
                // u ~ (mu r / 2) cos(phi): gradient is constant near the vertex.
                return Ok([0.5 * self.mu, 0.0]);
            }
            return Ok([0.0, 0.0]);
        }
        let z = self.mu * r;
        let (j, j1) = bessel_j_pair(self.nu, z)?;
        let dj = if self.nu == 0.0 {
            -j1
        } else {
            self.nu / z * j - j1
        };
        let du_dr = self.mu * dj * (self.nu * phi).cos();
        let du_dphi_over_r = -self.nu / r * j * (self.nu * phi).sin();
        let (sin_phi, cos_phi) = phi.sin_cos();
        Ok([
            du_dr * cos_phi - du_dphi_over_r * sin_phi,
            du_dr * sin_phi + du_dphi_over_r * cos_phi,
        ])
    }
}

fn check_omega(omega: f64) -> Result<f64> {
    let two_pi = 2.0 * std::f64::consts::PI;
    if !(omega > 0.0) || omega > two_pi + 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "opening angle must lie in (0, 2*pi], got {omega}"
        )));
    }
    Ok(omega.min(two_pi))
}

/// The `count` smallest exact eigenpairs of the sector of opening `omega`,
/// sorted by frequency `mu` (ties broken by angular number `k`).
///
/// Completeness uses two crude but safe lower bounds on Bessel zeros:
/// `mu_{nu,m} >= nu` and `mu_{nu,m} >= (m - 1/2) pi`, enlarging the
/// candidate order/index ranges until no excluded pair can beat the current
/// cutoff.
pub fn exact_spectrum(omega: f64, count: usize) -> Result<Vec<ExactEigenpair>> {
    let omega = check_omega(omega)?;
    if count == 0 {
        return Ok(Vec::new());
    }
    let pi = std::f64::consts::PI;
    let mut zeros: Vec<Vec<f64>> = Vec::new(); // zeros[k][m-1]
    let mut k_max = 4usize;
    let mut m_max = 4usize;
    loop {
        while zeros.len() <= k_max {
            zeros.push(Vec::new());
        }
        for (k, row) in zeros.iter_mut().enumerate().take(k_max + 1) {
            let nu = k as f64 * pi / omega;
            while row.len() < m_max {
                let m = row.len() + 1;
                row.push(bessel_zero(nu, m)?);
            }
        }
        let mut all: Vec<(f64, usize, usize)> = Vec::new();
        for (k, row) in zeros.iter().enumerate() {
            for (i, &mu) in row.iter().enumerate() {
                all.push((mu, k, i + 1));
            }
        }
        all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        if all.len() >= count {
            let cutoff = all[count - 1].0;
            // Any excluded order k > k_max has mu >= nu_k > cutoff.
            let need_k = (cutoff * omega / pi).ceil() as usize + 1;
            // Any excluded index m > m_max has mu >= (m - 1/2) pi > cutoff.
            let need_m = (cutoff / pi + 0.5).ceil() as usize + 1;
            if need_k <= k_max && need_m <= m_max {
                let mut out = Vec::with_capacity(count);
                for &(mu, k, m) in all.iter().take(count) {
                    let nu = k as f64 * pi / omega;
                    out.push(ExactEigenpair {
                        k,
                        m,
                        nu,
                        mu,
                        lambda: mu * mu,
                        omega,
                        regularity: classify(nu),
                    });
                }
                return Ok(out);
            }
            k_max = k_max.max(need_k);
            m_max = m_max.max(need_m);
        } else {
            k_max *= 2;
            m_max *= 2;
        }
    }
}

//! Singular polar-like NURBS parameterization of a circular sector.
//!
//! The sector of opening angle `omega` and unit radius is mapped from the
//! parametric square: the first coordinate is the radius (the whole edge
//! `zeta1 = 0` collapses onto the origin), the second traverses the angle.
//! The circular arc is represented exactly by quadratic rational pieces of
//! at most a quarter turn each, joined with `C^0` continuity; radially the
//! map is linear.  Consequences used throughout:
//!
//! * `|F(zeta)| = zeta1` exactly, and the Jacobian determinant is
//!   `zeta1 * g(zeta2)` with `g > 0`, so the map degenerates only on the
//!   collapsing edge;
//! * the weight function depends on `zeta2` alone and takes values in
//!   `[(1 + cos(alpha/2)) / 2, 1]` for arc angle `alpha`.

use std::f64::consts::FRAC_PI_2;

use crate::nurbs::{eval_nurbs_2d, eval_weight};
use crate::splines::{graded_breakpoints, KnotVector};
use crate::{Error, Result};

/// Largest admissible opening angle (a full turn), with rounding slack.
pub const MAX_OPENING: f64 = 2.0 * std::f64::consts::PI;

fn check_opening(omega: f64) -> Result<f64> {
    if !omega.is_finite() || omega <= 0.0 || omega > MAX_OPENING + 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "opening angle must lie in (0, 2*pi], got {omega}"
        )));
    }
    Ok(omega.min(MAX_OPENING))
}

/// Geometry and Jacobian data at one parametric point.
#[derive(Debug, Clone, Copy)]
pub struct GeometryEval {
    /// Physical point `F(zeta)`.
    pub x: [f64; 2],
    /// Jacobian `J[d][j] = d x_d / d zeta_j`.
    pub jac: [[f64; 2]; 2],
    /// Jacobian determinant (positive away from the collapsing edge).
    pub det: f64,
}

/// Exact NURBS sector of unit radius and opening angle `omega`.
#[derive(Debug, Clone)]
pub struct SectorGeometry {
    omega: f64,
    n_arc: usize,
    kv_radial: KnotVector,
    kv_angular: KnotVector,
    points: Vec<[f64; 2]>,
    weights: Vec<f64>,
}

impl SectorGeometry {
    /// Builds the sector with the minimal number of quadratic arc pieces
    /// (each spanning at most a quarter turn).
    pub fn new(omega: f64) -> Result<Self> {
        let omega = check_opening(omega)?;
        let n_arc = ((omega / FRAC_PI_2 - 1e-12).ceil() as usize).max(1);
        let alpha = omega / n_arc as f64;
        let w_mid = (0.5 * alpha).cos();

        let kv_radial = KnotVector::new(1, vec![0.0, 0.0, 1.0, 1.0])?;
        let mut knots = vec![0.0; 3];
        for i in 1..n_arc {
            let junction = i as f64 / n_arc as f64;
            knots.push(junction);
            knots.push(junction);
        }
        knots.extend_from_slice(&[1.0, 1.0, 1.0]);
        let kv_angular = KnotVector::new(2, knots)?;

        // Control net, first (radial) index fastest: the inner row collapses
        // onto the origin, the outer row is the standard conic polygon with
        // midpoints pushed out to distance 1/cos(alpha/2).
        let n2 = 2 * n_arc + 1;
        let mut points = Vec::with_capacity(2 * n2);
        let mut weights = Vec::with_capacity(2 * n2);
        for i2 in 0..n2 {
            let (dir, w) = if i2 % 2 == 0 {
                let theta = (i2 / 2) as f64 * alpha;
                ([theta.cos(), theta.sin()], 1.0)
            } else {
                let theta = ((i2 - 1) / 2) as f64 * alpha + 0.5 * alpha;
                ([theta.cos() / w_mid, theta.sin() / w_mid], w_mid)
            };
            points.push([0.0, 0.0]);
            points.push(dir);
            weights.push(w);
            weights.push(w);
        }
        Ok(Self {
            omega,
            n_arc,
            kv_radial,
            kv_angular,
            points,
            weights,
        })
    }

    /// Opening angle of the sector.
    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// Number of quadratic arc pieces.
    pub fn num_arcs(&self) -> usize {
        self.n_arc
    }

    /// Angle spanned by one arc piece.
    pub fn arc_angle(&self) -> f64 {
        self.omega / self.n_arc as f64
    }

    /// Radial knot vector (linear, one element).
    pub fn kv_radial(&self) -> &KnotVector {
        &self.kv_radial
    }

    /// Angular knot vector (quadratic, double knots at arc junctions).
    pub fn kv_angular(&self) -> &KnotVector {
        &self.kv_angular
    }

    /// Control points, radial index fastest.
    pub fn control_points(&self) -> &[[f64; 2]] {
        &self.points
    }

    /// Weights, radial index fastest; constant along the radial direction.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Physical image of a parametric point (defined on the whole square,
    /// including the collapsing edge).
    pub fn map(&self, zeta: [f64; 2]) -> Result<[f64; 2]> {
        let e = eval_nurbs_2d(&self.kv_radial, &self.kv_angular, &self.weights, zeta)?;
        let mut x = [0.0, 0.0];
        for (l, v) in e.values.iter().enumerate() {
            let g = e.global_index(l, 2);
            x[0] += v * self.points[g][0];
            x[1] += v * self.points[g][1];
        }
        Ok(x)
    }

    /// Point, Jacobian and determinant; fails on the collapsing edge where
    /// the Jacobian is singular.
    pub fn eval(&self, zeta: [f64; 2]) -> Result<GeometryEval> {
        if zeta[0] <= 0.0 {
            return Err(Error::SingularPoint);
        }
        let e = eval_nurbs_2d(&self.kv_radial, &self.kv_angular, &self.weights, zeta)?;
        let mut x = [0.0, 0.0];
        let mut jac = [[0.0; 2]; 2];
        for (l, (v, g)) in e.values.iter().zip(&e.grads).enumerate() {
            let p = self.points[e.global_index(l, 2)];
            for d in 0..2 {
                x[d] += v * p[d];
                jac[d][0] += g[0] * p[d];
                jac[d][1] += g[1] * p[d];
            }
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        if !(det > 0.0) || !det.is_finite() {
            return Err(Error::SingularPoint);
        }
        Ok(GeometryEval { x, jac, det })
    }

    /// Weight function value at angular parameter `zeta2` (independent of
    /// the radial parameter).
    pub fn weight_at(&self, zeta2: f64) -> f64 {
        eval_weight(
            &self.kv_radial,
            &self.kv_angular,
            &self.weights,
            [0.5, zeta2],
        )
        .expect("geometry weights are valid")
        .0
    }
}

/// Tensor mesh of Bezier elements in the parametric square: radially graded
/// breakpoints, uniform angular breakpoints aligned with the arc junctions.
#[derive(Debug, Clone)]
pub struct BezierMesh {
    radial_breaks: Vec<f64>,
    angular_breaks: Vec<f64>,
    grading: f64,
}

/// One ring of elements described by its angular/radial extent ratio.
#[derive(Debug, Clone, Copy)]
pub struct RingAspect {
    /// Ring index, innermost first.
    pub ring: usize,
    /// Angular over radial extent in parametric coordinates.
    pub parametric: f64,
    /// Arc length at mid radius over radial extent in physical coordinates.
    pub physical: f64,
}

impl BezierMesh {
    /// Builds a `j1 x j2` mesh with radial grading exponent `mu`;
    /// `j2` must be a positive multiple of the arc count so element
    /// boundaries include every junction.
    pub fn new(geo: &SectorGeometry, j1: usize, j2: usize, mu: f64) -> Result<Self> {
        if j1 == 0 {
            return Err(Error::InvalidArgument("need at least one radial element".into()));
        }
        if j2 == 0 || j2 % geo.num_arcs() != 0 {
            return Err(Error::InvalidArgument(format!(
                "angular element count {} must be a positive multiple of the {} arc pieces",
                j2,
                geo.num_arcs()
            )));
        }
        if !(mu > 0.0 && mu <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "grading exponent must lie in (0, 1], got {mu}"
            )));
        }
        let radial_breaks = graded_breakpoints(j1, mu);
        let angular_breaks = (0..=j2).map(|i| i as f64 / j2 as f64).collect();
        Ok(Self {
            radial_breaks,
            angular_breaks,
            grading: mu,
        })
    }

    /// Radial breakpoints, ascending from 0 to 1.
    pub fn radial_breaks(&self) -> &[f64] {
        &self.radial_breaks
    }

    /// Angular breakpoints, ascending from 0 to 1.
    pub fn angular_breaks(&self) -> &[f64] {
        &self.angular_breaks
    }

    /// Radial grading exponent (1 for a uniform mesh).
    pub fn grading(&self) -> f64 {
        self.grading
    }

    /// Number of radial elements.
    pub fn num_radial(&self) -> usize {
        self.radial_breaks.len() - 1
    }

    /// Number of angular elements.
    pub fn num_angular(&self) -> usize {
        self.angular_breaks.len() - 1
    }

    /// Total element count.
    pub fn num_elements(&self) -> usize {
        self.num_radial() * self.num_angular()
    }

    /// Parametric rectangles `[[a1, b1], [a2, b2]]`, radial index fastest.
    pub fn elements(&self) -> Vec<[[f64; 2]; 2]> {
        let mut out = Vec::with_capacity(self.num_elements());
        for j in 0..self.num_angular() {
            for i in 0..self.num_radial() {
                out.push([
                    [self.radial_breaks[i], self.radial_breaks[i + 1]],
                    [self.angular_breaks[j], self.angular_breaks[j + 1]],
                ]);
            }
        }
        out
    }

    /// Aspect ratios per radial ring.  Uses `|F| = zeta1`, so mid-ring
    /// radius equals the mid-ring radial parameter.
    pub fn ring_aspects(&self, omega: f64) -> Vec<RingAspect> {
        let h2 = 1.0 / self.num_angular() as f64;
        (0..self.num_radial())
            .map(|i| {
                let dr = self.radial_breaks[i + 1] - self.radial_breaks[i];
                let r_mid = 0.5 * (self.radial_breaks[i] + self.radial_breaks[i + 1]);
                RingAspect {
                    ring: i,
                    parametric: h2 / dr,
                    physical: r_mid * omega * h2 / dr,
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_4, PI};

    #[test]
    fn arc_count_per_opening() {
        for (omega, want) in [
            (FRAC_PI_2, 1),
            (PI, 2),
            (1.5 * PI, 3),
            (2.0 * PI, 4),
            (1.0, 1),
            (4.0, 3),
        ] {
            assert_eq!(SectorGeometry::new(omega).unwrap().num_arcs(), want);
        }
        assert!(SectorGeometry::new(0.0).is_err());
        assert!(SectorGeometry::new(2.0 * PI + 1e-3).is_err());
        assert!(SectorGeometry::new(-1.0).is_err());
    }

    #[test]
    fn full_disk_control_net() {
        let geo = SectorGeometry::new(2.0 * PI).unwrap();
        let s = 0.5_f64.sqrt();
        let outer: Vec<[f64; 2]> = geo
            .control_points()
            .iter()
            .skip(1)
            .step_by(2)
            .copied()
            .collect();
        let want = [
            [1.0, 0.0],
            [1.0, 1.0],
            [0.0, 1.0],
            [-1.0, 1.0],
            [-1.0, 0.0],
            [-1.0, -1.0],
            [0.0, -1.0],
            [1.0, -1.0],
            [1.0, 0.0],
        ];
        assert_eq!(outer.len(), want.len());
        for (got, want) in outer.iter().zip(&want) {
            assert!((got[0] - want[0]).abs() < 1e-14 && (got[1] - want[1]).abs() < 1e-14);
        }
        for (i2, &w) in geo.weights().iter().step_by(2).enumerate() {
            let expect = if i2 % 2 == 0 { 1.0 } else { s };
            assert!((w - expect).abs() < 1e-15);
        }
        // Homogeneous midpoint coordinates are w * c = (±s, ±s).
        let wc = [s * 1.0, s * 1.0];
        assert!((geo.weights()[3] * geo.control_points()[3][0] - wc[0]).abs() < 1e-15);
        assert!((geo.weights()[3] * geo.control_points()[3][1] - wc[1]).abs() < 1e-15);
    }

    #[test]
    fn arc_points_hit_exact_angles() {
        let geo = SectorGeometry::new(2.0 * PI).unwrap();
        for i in 0..=8 {
            let z2 = i as f64 / 8.0;
            let x = geo.map([1.0, z2]).unwrap();
            let phi = i as f64 * FRAC_PI_4;
            assert!(
                (x[0] - phi.cos()).abs() < 1e-15 && (x[1] - phi.sin()).abs() < 1e-15,
                "arc point {i}/8: {x:?}"
            );
        }
    }

    #[test]
    fn collapsing_edge_maps_to_origin() {
        let geo = SectorGeometry::new(1.5 * PI).unwrap();
        for &z2 in &[0.0, 0.31, 0.5, 1.0] {
            let x = geo.map([0.0, z2]).unwrap();
            assert_eq!(x, [0.0, 0.0]);
        }
        assert!(matches!(
            geo.eval([0.0, 0.5]),
            Err(Error::SingularPoint)
        ));
    }

    #[test]
    fn weight_function_range_and_extremes() {
        for &omega in &[2.0 * PI, 1.5 * PI, 0.9] {
            let geo = SectorGeometry::new(omega).unwrap();
            let w_min = 0.5 * (1.0 + (0.5 * geo.arc_angle()).cos());
            for i in 0..=400 {
                let w = geo.weight_at(i as f64 / 400.0);
                assert!(w <= 1.0 + 1e-13 && w >= w_min - 1e-13, "W = {w} at omega {omega}");
            }
            // Extremes are attained at junctions and at arc midpoints.
            assert!((geo.weight_at(0.0) - 1.0).abs() < 1e-15);
            let mid = 0.5 / geo.num_arcs() as f64;
            assert!((geo.weight_at(mid) - w_min).abs() < 1e-14);
        }
        // Full disk midpoint value.
        let geo = SectorGeometry::new(2.0 * PI).unwrap();
        let expect = (2.0 + 2.0_f64.sqrt()) / 4.0;
        assert!((geo.weight_at(0.125) - expect).abs() < 1e-15);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let geo = SectorGeometry::new(1.5 * PI).unwrap();
        let h = 1e-7;
        for &z in &[[0.3, 0.2], [0.9, 0.66], [0.02, 0.99]] {
            let e = geo.eval(z).unwrap();
            for j in 0..2 {
                let mut zp = z;
                let mut zm = z;
                zp[j] += h;
                zm[j] -= h;
                let xp = geo.map(zp).unwrap();
                let xm = geo.map(zm).unwrap();
                for d in 0..2 {
                    let fd = (xp[d] - xm[d]) / (2.0 * h);
                    assert!(
                        (fd - e.jac[d][j]).abs() < 1e-6,
                        "J[{d}][{j}] at {z:?}: {fd} vs {}",
                        e.jac[d][j]
                    );
                }
            }
        }
    }

    #[test]
    fn determinant_is_linear_in_radius() {
        let geo = SectorGeometry::new(2.0 * PI).unwrap();
        for &z2 in &[0.05, 0.125, 0.4, 0.77] {
            let base = geo.eval([1.0, z2]).unwrap().det;
            for &z1 in &[1e-6, 0.01, 0.3, 0.999] {
                let det = geo.eval([z1, z2]).unwrap().det;
                assert!(
                    (det / z1 - base).abs() < 1e-10 * base.abs(),
                    "det not proportional to radius at ({z1}, {z2})"
                );
            }
        }
    }

    #[test]
    fn mesh_counts_and_junction_alignment() {
        let geo = SectorGeometry::new(2.0 * PI).unwrap();
        let mesh = BezierMesh::new(&geo, 6, 16, 0.5).unwrap();
        assert_eq!(mesh.num_elements(), 96);
        assert_eq!(mesh.num_radial(), 6);
        assert_eq!(mesh.num_angular(), 16);
        // Graded radial breakpoints are (i/6)^2.
        for (i, &b) in mesh.radial_breaks().iter().enumerate() {
            let t = i as f64 / 6.0;
            assert!((b - t * t).abs() < 1e-15);
        }
        // Every arc junction appears bitwise among the angular breakpoints.
        for (junction, _) in geo.kv_angular().breakpoints() {
            assert!(
                mesh.angular_breaks().iter().any(|&b| b == junction),
                "junction {junction} missing"
            );
        }
    }

    #[test]
    fn mesh_rejects_misaligned_angular_count() {
        let geo = SectorGeometry::new(2.0 * PI).unwrap();
        assert!(BezierMesh::new(&geo, 4, 10, 1.0).is_err());
        assert!(BezierMesh::new(&geo, 4, 0, 1.0).is_err());
        assert!(BezierMesh::new(&geo, 0, 16, 1.0).is_err());
        assert!(BezierMesh::new(&geo, 4, 16, 0.0).is_err());
        assert!(BezierMesh::new(&geo, 4, 16, 1.5).is_err());
        // Three arcs accept multiples of three only.
        let geo3 = SectorGeometry::new(1.5 * PI).unwrap();
        assert!(BezierMesh::new(&geo3, 4, 12, 1.0).is_ok());
        assert!(BezierMesh::new(&geo3, 4, 16, 1.0).is_err());
    }

    #[test]
    fn innermost_aspect_ratios_scale_with_grading() {
        let geo = SectorGeometry::new(2.0 * PI).unwrap();
        let omega = geo.omega();
        // Parametric aspect of the innermost ring is J1^2 / J2 for mu = 1/2;
        // the physical one is omega / (2 J2) independent of grading.
        for &(j1, j2) in &[(4usize, 16usize), (16, 64)] {
            let mesh = BezierMesh::new(&geo, j1, j2, 0.5).unwrap();
            let inner = mesh.ring_aspects(omega)[0];
            let expect_par = (j1 * j1) as f64 / j2 as f64;
            assert!((inner.parametric - expect_par).abs() < 1e-9 * expect_par);
            let expect_phys = omega / (2.0 * j2 as f64);
            assert!((inner.physical - expect_phys).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn radius_equals_radial_parameter(
            z1 in 0.0..1.0f64,
            z2 in 0.0..1.0f64,
            omega in 0.3..(2.0 * PI),
        ) {
            let geo = SectorGeometry::new(omega).unwrap();
            let x = geo.map([z1, z2]).unwrap();
            let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
            prop_assert!((r - z1).abs() < 1e-12, "|F| = {r}, zeta1 = {z1}");
        }

        #[test]
        fn determinant_positive_off_axis(
            z1 in 1e-9..1.0f64,
            z2 in 0.0..1.0f64,
            omega in 0.3..(2.0 * PI),
        ) {
            let geo = SectorGeometry::new(omega).unwrap();
            let e = geo.eval([z1, z2]).unwrap();
            prop_assert!(e.det > 0.0);
        }
    }
}

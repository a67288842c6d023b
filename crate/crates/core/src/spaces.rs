//! Discrete rational spline spaces on the sector.
//!
//! Two flavours share one interface:
//!
//! * [`TensorSpace`]: tensor product of a radially graded and a uniform
//!   angular knot vector, obtained from the geometry by degree elevation
//!   followed by knot insertion, so the refined space still contains the
//!   geometry.  Interior smoothness is `C^k` except at arc junctions,
//!   which stay `C^0`.
//! * [`HierarchicalSpace`]: all levels share the final graded radial knot
//!   vector while the angular resolution doubles per level.  Functions of
//!   level `l` are the tensor functions whose radial support starts in the
//!   `l`-th radial ring, so the angular resolution follows the radial one
//!   outward and innermost elements keep bounded physical aspect ratio.
//!
//! Degrees of freedom on the outer circular edge (last radial index) carry
//! the homogeneous Dirichlet condition; the functions touching the
//! collapsing edge are kept.

use nalgebra::DMatrix;

use crate::geometry::{BezierMesh, SectorGeometry};
use crate::nurbs::refine_homogeneous;
use crate::splines::{graded_breakpoints, KnotVector};
use crate::{Error, Result};

/// Nonzero basis functions at one parametric point.
#[derive(Debug, Clone, Default)]
pub struct PointEval {
    /// Global indices of the nonzero functions.
    pub indices: Vec<usize>,
    /// Function values.
    pub values: Vec<f64>,
    /// Parametric gradients.
    pub grads: Vec<[f64; 2]>,
}

/// Integration cell: a parametric rectangle on which every active function
/// is a single rational polynomial piece.
#[derive(Debug, Clone, Copy)]
pub struct Cell {
    /// `[[a1, b1], [a2, b2]]` bounds, radial first.
    pub rect: [[f64; 2]; 2],
    /// Radial ring index, innermost first.
    pub ring: usize,
}

fn check_degrees(p: usize, k: usize) -> Result<()> {
    if p < 2 {
        return Err(Error::InvalidArgument(format!(
            "degree must be at least 2 to contain the quadratic arcs, got {p}"
        )));
    }
    if k + 1 > p {
        return Err(Error::InvalidArgument(format!(
            "smoothness C^{k} needs degree at least {}, got {p}",
            k + 1
        )));
    }
    Ok(())
}

/// Refines one geometry knot vector to degree `p`, smoothness `C^k` at new
/// interior breakpoints, returning the refined vector and total transfer.
/// Existing interior knots (the arc junctions) keep their multiplicity.
fn k_refine(
    kv: &KnotVector,
    p: usize,
    k: usize,
    breaks: &[f64],
) -> Result<(KnotVector, DMatrix<f64>)> {
    let (elevated, t_elev) = kv.elevate_degree(p - kv.degree())?;
    let mut to_insert = Vec::new();
    for &b in breaks {
        if b <= 0.0 || b >= 1.0 || elevated.multiplicity_of(b) > 0 {
            continue;
        }
        for _ in 0..(p - k) {
            to_insert.push(b);
        }
    }
    let (refined, t_ins) = elevated.insert_knots(&to_insert)?;
    Ok((refined, &t_ins * &t_elev))
}

/// Tensor-product rational space on a graded Bezier mesh.
#[derive(Debug, Clone)]
pub struct TensorSpace {
    geo: SectorGeometry,
    degree: usize,
    smoothness: usize,
    mesh: BezierMesh,
    kv1: KnotVector,
    kv2: KnotVector,
    weights: Vec<f64>,
    points: Vec<[f64; 2]>,
}

impl TensorSpace {
    /// Builds the space of degree `p`, interior smoothness `C^k`, with `j1`
    /// graded radial elements (exponent `mu`) and `j2` uniform angular
    /// elements.
    pub fn new(
        geo: &SectorGeometry,
        p: usize,
        k: usize,
        j1: usize,
        j2: usize,
        mu: f64,
    ) -> Result<Self> {
        check_degrees(p, k)?;
        let mesh = BezierMesh::new(geo, j1, j2, mu)?;
        let (kv1, t1) = k_refine(geo.kv_radial(), p, k, mesh.radial_breaks())?;
        let (kv2, t2) = k_refine(geo.kv_angular(), p, k, mesh.angular_breaks())?;
        let (weights, points) =
            refine_homogeneous(&t1, &t2, geo.weights(), geo.control_points());
        Ok(Self {
            geo: geo.clone(),
            degree: p,
            smoothness: k,
            mesh,
            kv1,
            kv2,
            weights,
            points,
        })
    }

    /// Polynomial degree (equal in both directions).
    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Interior smoothness away from arc junctions.
    pub fn smoothness(&self) -> usize {
        self.smoothness
    }

    /// Underlying parameterization.
    pub fn geometry(&self) -> &SectorGeometry {
        &self.geo
    }

    /// Bezier mesh of the space.
    pub fn mesh(&self) -> &BezierMesh {
        &self.mesh
    }

    /// Refined radial knot vector.
    pub fn kv1(&self) -> &KnotVector {
        &self.kv1
    }

    /// Refined angular knot vector.
    pub fn kv2(&self) -> &KnotVector {
        &self.kv2
    }

    /// Radial function count.
    pub fn n1(&self) -> usize {
        self.kv1.num_basis()
    }

    /// Angular function count.
    pub fn n2(&self) -> usize {
        self.kv2.num_basis()
    }

    /// Refined weights, radial index fastest.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Refined control points reproducing the geometry.
    pub fn control_points(&self) -> &[[f64; 2]] {
        &self.points
    }

    /// Total function count.
    pub fn num_dofs(&self) -> usize {
        self.n1() * self.n2()
    }

    /// Splits a global index into `(i1, i2)`.
    pub fn dof_components(&self, dof: usize) -> (usize, usize) {
        (dof % self.n1(), dof / self.n1())
    }

    fn eval_at(&self, zeta: [f64; 2]) -> Result<PointEval> {
        let e = crate::nurbs::eval_nurbs_2d(&self.kv1, &self.kv2, &self.weights, zeta)?;
        let nloc = e.values.len();
        let mut out = PointEval {
            indices: Vec::with_capacity(nloc),
            values: e.values,
            grads: e.grads,
        };
        for l in 0..nloc {
            out.indices.push(e_global(&e.first, &e.counts, l, self.n1()));
        }
        Ok(out)
    }

    fn cells(&self) -> Vec<Cell> {
        let breaks1 = self.mesh.radial_breaks();
        let breaks2 = self.mesh.angular_breaks();
        let mut out = Vec::with_capacity(self.mesh.num_elements());
        for j in 0..breaks2.len() - 1 {
            for i in 0..breaks1.len() - 1 {
                out.push(Cell {
                    rect: [
                        [breaks1[i], breaks1[i + 1]],
                        [breaks2[j], breaks2[j + 1]],
                    ],
                    ring: i,
                });
            }
        }
        out
    }

    fn boundary_mask(&self) -> Vec<bool> {
        let n1 = self.n1();
        (0..self.num_dofs()).map(|d| d % n1 == n1 - 1).collect()
    }
}

fn e_global(first: &[usize; 2], counts: &[usize; 2], loc: usize, n1: usize) -> usize {
    let a = loc % counts[0];
    let b = loc / counts[0];
    (first[0] + a) + n1 * (first[1] + b)
}

/// One level of a hierarchical space: its angular knot vector, weights and
/// homogeneous control data.
#[derive(Debug, Clone)]
struct Level {
    kv2: KnotVector,
    /// Angular weight coefficients (weights are radially constant).
    w2: Vec<f64>,
    /// Radial index range `[lo, hi)` of the functions owned by this level.
    radial: [usize; 2],
    /// Global index of this level's first function.
    offset: usize,
}

/// Hierarchically graded rational space: shared graded radial knot vector,
/// angular resolution doubling with each level outward.
#[derive(Debug, Clone)]
pub struct HierarchicalSpace {
    geo: SectorGeometry,
    degree: usize,
    levels: Vec<Level>,
    kv1: KnotVector,
    grading: f64,
    j2_base: usize,
    num_dofs: usize,
    /// Control points per global index (reproduce the geometry).
    points: Vec<[f64; 2]>,
}

impl HierarchicalSpace {
    /// Builds the space of degree `p` (maximal interior smoothness) with
    /// `j1` graded radial elements, `j2_base` angular elements on the
    /// innermost level, and `levels` doublings.
    pub fn new(
        geo: &SectorGeometry,
        p: usize,
        j1: usize,
        j2_base: usize,
        levels: usize,
        mu: f64,
    ) -> Result<Self> {
        check_degrees(p, p - 1)?;
        if levels + 1 > j1 {
            return Err(Error::InvalidArgument(format!(
                "{levels} levels need at least {} radial elements, got {j1}",
                levels + 1
            )));
        }
        if j2_base == 0 || j2_base % geo.num_arcs() != 0 {
            return Err(Error::InvalidArgument(format!(
                "base angular count {} must be a positive multiple of the {} arc pieces",
                j2_base,
                geo.num_arcs()
            )));
        }
        if !(mu > 0.0 && mu <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "grading exponent must lie in (0, 1], got {mu}"
            )));
        }
        let radial_breaks = graded_breakpoints(j1, mu);
        let (kv1, t1) = k_refine(geo.kv_radial(), p, p - 1, &radial_breaks)?;
        let n1 = kv1.num_basis();

        let mut level_data = Vec::with_capacity(levels + 1);
        let mut offset = 0;
        let mut points = Vec::new();
        for l in 0..=levels {
            let j2 = j2_base << l;
            let breaks2: Vec<f64> = (0..=j2).map(|i| i as f64 / j2 as f64).collect();
            let (kv2, t2) = k_refine(geo.kv_angular(), p, p - 1, &breaks2)?;
            let (w, pts) = refine_homogeneous(&t1, &t2, geo.weights(), geo.control_points());
            let n2 = kv2.num_basis();
            // Radial ownership: level 0 holds the p+1 functions whose
            // support starts at zero, each intermediate level exactly one,
            // the last level all remaining ones.
            let radial = if l == levels {
                [if l == 0 { 0 } else { p + l }, n1]
            } else if l == 0 {
                [0, p + 1]
            } else {
                [p + l, p + l + 1]
            };
            let w2: Vec<f64> = (0..n2).map(|j| w[n1 * j]).collect();
            for j2i in 0..n2 {
                for i1 in radial[0]..radial[1] {
                    points.push(pts[i1 + n1 * j2i]);
                }
            }
            let count = (radial[1] - radial[0]) * n2;
            level_data.push(Level {
                kv2,
                w2,
                radial,
                offset,
            });
            offset += count;
        }
        Ok(Self {
            geo: geo.clone(),
            degree: p,
            levels: level_data,
            kv1,
            grading: mu,
            j2_base,
            num_dofs: offset,
            points,
        })
    }

    /// Polynomial degree.
    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Underlying parameterization.
    pub fn geometry(&self) -> &SectorGeometry {
        &self.geo
    }

    /// Number of doublings (0 means a plain tensor space).
    pub fn num_levels(&self) -> usize {
        self.levels.len() - 1
    }

    /// Shared radial knot vector.
    pub fn kv1(&self) -> &KnotVector {
        &self.kv1
    }

    /// Angular knot vector of one level.
    pub fn kv2(&self, level: usize) -> &KnotVector {
        &self.levels[level].kv2
    }

    /// Radial grading exponent.
    pub fn grading(&self) -> f64 {
        self.grading
    }

    /// Angular element count of the innermost level.
    pub fn j2_base(&self) -> usize {
        self.j2_base
    }

    /// Total function count.
    pub fn num_dofs(&self) -> usize {
        self.num_dofs
    }

    /// Control points reproducing the geometry, per global index.
    pub fn control_points(&self) -> &[[f64; 2]] {
        &self.points
    }

    /// Level, radial and angular index of a global degree of freedom.
    pub fn dof_components(&self, dof: usize) -> (usize, usize, usize) {
        for (l, level) in self.levels.iter().enumerate() {
            let width = level.radial[1] - level.radial[0];
            let count = width * level.kv2.num_basis();
            if dof < level.offset + count {
                let local = dof - level.offset;
                return (l, level.radial[0] + local % width, local / width);
            }
        }
        panic!("degree of freedom {dof} out of range");
    }

    /// Finest level whose functions touch the given radial ring.
    fn ring_level(&self, ring: usize) -> usize {
        ring.min(self.num_levels())
    }

    fn cells(&self) -> Vec<Cell> {
        let breaks1: Vec<f64> = {
            let bp = self.kv1.breakpoints();
            bp.iter().map(|&(b, _)| b).collect()
        };
        let mut out = Vec::new();
        for i in 0..breaks1.len() - 1 {
            let level = self.ring_level(i);
            let j2 = self.j2_base << level;
            for j in 0..j2 {
                out.push(Cell {
                    rect: [
                        [breaks1[i], breaks1[i + 1]],
                        [j as f64 / j2 as f64, (j + 1) as f64 / j2 as f64],
                    ],
                    ring: i,
                });
            }
        }
        out
    }

    fn eval_at(&self, zeta: [f64; 2]) -> Result<PointEval> {
        let b1 = self.kv1.eval_basis(zeta[0], 1);
        // Weight function from the finest level (identical on all levels).
        let finest = self.levels.last().expect("at least one level");
        let bw = finest.kv2.eval_basis(zeta[1], 1);
        let mut w = 0.0;
        let mut dw = 0.0;
        for (j, (v, d)) in bw.values().iter().zip(&bw.ders[1]).enumerate() {
            w += finest.w2[bw.first + j] * v;
            dw += finest.w2[bw.first + j] * d;
        }
        if !(w > 0.0) || !w.is_finite() {
            return Err(Error::NonFinite("weight function"));
        }

        let mut out = PointEval::default();
        let mut cached: Vec<Option<crate::splines::BasisEvaluation>> =
            vec![None; self.levels.len()];
        for (loc, (&v1, &d1)) in b1.values().iter().zip(&b1.ders[1]).enumerate() {
            let i1 = b1.first + loc;
            let l = self.level_of_radial(i1);
            let level = &self.levels[l];
            if cached[l].is_none() {
                cached[l] = Some(level.kv2.eval_basis(zeta[1], 1));
            }
            let b2 = cached[l].as_ref().unwrap();
            let width = level.radial[1] - level.radial[0];
            for (j, (&v2, &d2)) in b2.values().iter().zip(&b2.ders[1]).enumerate() {
                let j2 = b2.first + j;
                let coeff = level.w2[j2];
                let value = coeff * v1 * v2 / w;
                let g1 = coeff * d1 * v2 / w;
                let g2 = coeff * v1 * (d2 - v2 * dw / w) / w;
                out.indices
                    .push(level.offset + (i1 - level.radial[0]) + width * j2);
                out.values.push(value);
                out.grads.push([g1, g2]);
            }
        }
        Ok(out)
    }

    /// Level owning radial index `i1`.
    fn level_of_radial(&self, i1: usize) -> usize {
        if i1 <= self.degree {
            0
        } else {
            (i1 - self.degree).min(self.num_levels())
        }
    }

    fn boundary_mask(&self) -> Vec<bool> {
        let n1 = self.kv1.num_basis();
        let mut mask = vec![false; self.num_dofs];
        let last = self.levels.last().expect("at least one level");
        let width = last.radial[1] - last.radial[0];
        for j2 in 0..last.kv2.num_basis() {
            mask[last.offset + (n1 - 1 - last.radial[0]) + width * j2] = true;
        }
        mask
    }
}

/// Common interface over tensor and hierarchical spaces.
#[derive(Debug, Clone)]
pub enum Space {
    Tensor(TensorSpace),
    Hierarchical(HierarchicalSpace),
}

impl Space {
    /// Total function count.
    pub fn num_dofs(&self) -> usize {
        match self {
            Space::Tensor(s) => s.num_dofs(),
            Space::Hierarchical(s) => s.num_dofs(),
        }
    }

    /// Underlying parameterization.
    pub fn geometry(&self) -> &SectorGeometry {
        match self {
            Space::Tensor(s) => s.geometry(),
            Space::Hierarchical(s) => s.geometry(),
        }
    }

    /// Integration cells covering the parametric square.
    pub fn cells(&self) -> Vec<Cell> {
        match self {
            Space::Tensor(s) => s.cells(),
            Space::Hierarchical(s) => s.cells(),
        }
    }

    /// Nonzero functions with values and parametric gradients at a point.
    pub fn eval_at(&self, zeta: [f64; 2]) -> Result<PointEval> {
        match self {
            Space::Tensor(s) => s.eval_at(zeta),
            Space::Hierarchical(s) => s.eval_at(zeta),
        }
    }

    /// Marks functions constrained by the Dirichlet condition on the outer
    /// circular edge.
    pub fn boundary_mask(&self) -> Vec<bool> {
        match self {
            Space::Tensor(s) => s.boundary_mask(),
            Space::Hierarchical(s) => s.boundary_mask(),
        }
    }

    /// Indices of unconstrained functions, ascending.
    pub fn free_dofs(&self) -> Vec<usize> {
        self.boundary_mask()
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| if m { None } else { Some(i) })
            .collect()
    }

    /// Control points that reproduce the geometry in this space.
    pub fn control_points(&self) -> &[[f64; 2]] {
        match self {
            Space::Tensor(s) => s.control_points(),
            Space::Hierarchical(s) => s.control_points(),
        }
    }

    /// Evaluates the map induced by [`Self::control_points`]; used to test
    /// that refinement preserved the geometry.
    pub fn map_through_space(&self, zeta: [f64; 2]) -> Result<[f64; 2]> {
        let e = self.eval_at(zeta)?;
        let points = self.control_points();
        let mut x = [0.0, 0.0];
        for (idx, v) in e.indices.iter().zip(&e.values) {
            x[0] += v * points[*idx][0];
            x[1] += v * points[*idx][1];
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn disk() -> SectorGeometry {
        SectorGeometry::new(2.0 * PI).unwrap()
    }

    #[test]
    fn tensor_dimensions_match_refinement_counts() {
        let geo = disk();
        let s = TensorSpace::new(&geo, 2, 1, 2, 8, 1.0).unwrap();
        assert_eq!(s.n1(), 4);
        assert_eq!(s.n2(), 13);
        assert_eq!(s.num_dofs(), 52);
        // General counts: n1 = p + 1 + (J1 - 1)(p - k),
        // n2 = arcs * p + 1 + (J2 - arcs)(p - k).
        for &(p, k, j1, j2) in &[(3usize, 2usize, 5usize, 8usize), (3, 0, 4, 12), (5, 4, 3, 8), (4, 2, 6, 16)] {
            let s = TensorSpace::new(&geo, p, k, j1, j2, 1.0).unwrap();
            assert_eq!(s.n1(), p + 1 + (j1 - 1) * (p - k), "n1 for p={p} k={k}");
            assert_eq!(
                s.n2(),
                4 * p + 1 + (j2 - 4) * (p - k),
                "n2 for p={p} k={k}"
            );
        }
    }

    #[test]
    fn tensor_rejects_bad_parameters() {
        let geo = disk();
        assert!(TensorSpace::new(&geo, 1, 0, 2, 8, 1.0).is_err());
        assert!(TensorSpace::new(&geo, 2, 2, 2, 8, 1.0).is_err());
        assert!(TensorSpace::new(&geo, 2, 1, 2, 6, 1.0).is_err());
    }

    #[test]
    fn junctions_stay_c0_under_k_refinement() {
        let geo = disk();
        let s = TensorSpace::new(&geo, 4, 3, 2, 8, 1.0).unwrap();
        // Junction knots keep multiplicity p, new ones get p - k.
        assert_eq!(s.kv2().multiplicity_of(0.25), 4);
        assert_eq!(s.kv2().multiplicity_of(0.125), 1);
        assert_eq!(s.kv1().multiplicity_of(0.5), 1);
    }

    #[test]
    fn tensor_space_reproduces_geometry() {
        let geo = SectorGeometry::new(1.5 * PI).unwrap();
        let s = Space::Tensor(TensorSpace::new(&geo, 3, 1, 3, 9, 0.5).unwrap());
        for &z in &[[0.0, 0.0], [0.2, 0.8], [0.77, 0.33], [1.0, 1.0], [0.5, 0.5]] {
            let through = s.map_through_space(z).unwrap();
            let direct = geo.map(z).unwrap();
            assert!(
                (through[0] - direct[0]).abs() < 1e-13
                    && (through[1] - direct[1]).abs() < 1e-13,
                "geometry not reproduced at {z:?}"
            );
        }
    }

    #[test]
    fn tensor_boundary_mask_marks_outer_ring() {
        let geo = disk();
        let s = TensorSpace::new(&geo, 2, 1, 2, 8, 1.0).unwrap();
        let mask = Space::Tensor(s.clone()).boundary_mask();
        assert_eq!(mask.iter().filter(|&&m| m).count(), s.n2());
        for (d, &m) in mask.iter().enumerate() {
            assert_eq!(m, d % s.n1() == s.n1() - 1);
        }
        // Functions on the collapsing edge stay free.
        let free = Space::Tensor(s.clone()).free_dofs();
        assert!(free.contains(&0));
        assert_eq!(free.len(), s.num_dofs() - s.n2());
    }

    #[test]
    fn tensor_point_eval_partition_of_unity() {
        let geo = disk();
        let s = Space::Tensor(TensorSpace::new(&geo, 3, 2, 4, 8, 0.5).unwrap());
        for &z in &[[0.01, 0.2], [0.5, 0.125], [0.99, 0.77]] {
            let e = s.eval_at(z).unwrap();
            let sum: f64 = e.values.iter().sum();
            assert!((sum - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn hierarchical_dimension_formula() {
        let geo = disk();
        let p = 2;
        let (j1, j2b, levels) = (6, 4, 2);
        let s = HierarchicalSpace::new(&geo, p, j1, j2b, levels, 0.5).unwrap();
        let n1 = p + j1;
        let n2 = |j2: usize| 4 * p + 1 + (j2 - 4);
        let want = (p + 1) * n2(4) + n2(8) + (n1 - p - levels) * n2(16);
        assert_eq!(s.num_dofs(), want);
    }

    #[test]
    fn hierarchical_cells_follow_ring_levels() {
        let geo = disk();
        let s = HierarchicalSpace::new(&geo, 2, 6, 4, 2, 0.5).unwrap();
        let cells = Space::Hierarchical(s).cells();
        let mut per_ring = vec![0usize; 6];
        for c in &cells {
            per_ring[c.ring] += 1;
        }
        assert_eq!(per_ring, vec![4, 8, 16, 16, 16, 16]);
    }

    #[test]
    fn hierarchical_zero_levels_matches_tensor() {
        let geo = disk();
        let h = Space::Hierarchical(HierarchicalSpace::new(&geo, 2, 4, 8, 0, 1.0).unwrap());
        let t = Space::Tensor(TensorSpace::new(&geo, 2, 1, 4, 8, 1.0).unwrap());
        assert_eq!(h.num_dofs(), t.num_dofs());
        for &z in &[[0.1, 0.3], [0.6, 0.9], [0.25, 0.125]] {
            let eh = h.eval_at(z).unwrap();
            let et = t.eval_at(z).unwrap();
            let mut vh: Vec<(usize, f64)> =
                eh.indices.iter().copied().zip(eh.values.iter().copied()).collect();
            let mut vt: Vec<(usize, f64)> =
                et.indices.iter().copied().zip(et.values.iter().copied()).collect();
            // Orderings differ; compare as sorted (index, value) sets after
            // mapping hierarchical numbering onto tensor numbering.
            vh.sort_by_key(|&(i, _)| i);
            vt.sort_by_key(|&(i, _)| i);
            for ((ih, xh), (it, xt)) in vh.iter().zip(&vt) {
                let (l, i1, i2) = match &h {
                    Space::Hierarchical(hs) => hs.dof_components(*ih),
                    _ => unreachable!(),
                };
                assert_eq!(l, 0);
                let tensor_index = i1 + 6 * i2;
                assert_eq!(tensor_index, *it);
                assert!((xh - xt).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn hierarchical_reproduces_geometry() {
        let geo = disk();
        let s = Space::Hierarchical(HierarchicalSpace::new(&geo, 2, 6, 4, 2, 0.5).unwrap());
        for &z in &[[0.0, 0.0], [0.03, 0.9], [0.2, 0.51], [0.8, 0.26], [1.0, 0.6]] {
            let through = s.map_through_space(z).unwrap();
            let direct = geo.map(z).unwrap();
            assert!(
                (through[0] - direct[0]).abs() < 1e-13
                    && (through[1] - direct[1]).abs() < 1e-13,
                "geometry not reproduced at {z:?}: {through:?} vs {direct:?}"
            );
        }
    }

    #[test]
    fn hierarchical_partition_of_unity_and_mask() {
        let geo = SectorGeometry::new(1.5 * PI).unwrap();
        let s = HierarchicalSpace::new(&geo, 3, 8, 3, 3, 0.3).unwrap();
        let space = Space::Hierarchical(s.clone());
        for &z in &[[0.001, 0.1], [0.02, 0.6], [0.3, 0.99], [0.97, 0.45]] {
            let e = space.eval_at(z).unwrap();
            let sum: f64 = e.values.iter().sum();
            assert!((sum - 1.0).abs() < 1e-13, "PoU at {z:?}: {sum}");
            let g: f64 = e.grads.iter().map(|g| g[0] + g[1]).sum();
            assert!(g.abs() < 1e-10, "gradient sum at {z:?}: {g}");
        }
        let mask = space.boundary_mask();
        let n2_top = s.kv2(3).num_basis();
        assert_eq!(mask.iter().filter(|&&m| m).count(), n2_top);
        for d in mask.iter().enumerate().filter(|(_, &m)| m).map(|(d, _)| d) {
            let (l, i1, _) = s.dof_components(d);
            assert_eq!(l, 3);
            assert_eq!(i1, s.kv1().num_basis() - 1);
        }
    }

    #[test]
    fn hierarchical_rejects_bad_parameters() {
        let geo = disk();
        assert!(HierarchicalSpace::new(&geo, 2, 2, 4, 2, 0.5).is_err());
        assert!(HierarchicalSpace::new(&geo, 2, 6, 6, 1, 0.5).is_err());
        assert!(HierarchicalSpace::new(&geo, 2, 6, 4, 1, 0.0).is_err());
        assert!(HierarchicalSpace::new(&geo, 1, 6, 4, 1, 0.5).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn space_partition_of_unity(
            z1 in 0.0..1.0f64,
            z2 in 0.0..1.0f64,
            hier in proptest::bool::ANY,
        ) {
            let geo = disk();
            let space = if hier {
                Space::Hierarchical(HierarchicalSpace::new(&geo, 2, 6, 4, 2, 0.5).unwrap())
            } else {
                Space::Tensor(TensorSpace::new(&geo, 3, 1, 4, 8, 0.7).unwrap())
            };
            let e = space.eval_at([z1, z2]).unwrap();
            let sum: f64 = e.values.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
        }
    }
}

//! Tensor-product rational (NURBS) bases.
//!
//! A rational basis on the parametric square combines two open knot vectors
//! with one positive weight per tensor function, stored with the first
//! direction fastest: `w[i1 + n1 * i2]`.  Rational values are
//! `N = w B / W` with the weight function `W = sum w B`; gradients come
//! from the quotient rule.  Refinement acts on homogeneous coordinates
//! `(w x, w y, w)` so the weight function (and therefore the geometry) is
//! preserved exactly under knot insertion and degree elevation.

use nalgebra::DMatrix;

use crate::splines::KnotVector;
use crate::{Error, Result};

/// Rational basis functions at one parametric point: the
/// `(p1 + 1) * (p2 + 1)` tensor functions that are nonzero there.
#[derive(Debug, Clone)]
pub struct NurbsEvaluation {
    /// First nonzero function index per direction.
    pub first: [usize; 2],
    /// Count of nonzero functions per direction (`p + 1`).
    pub counts: [usize; 2],
    /// Rational values, first direction fastest.
    pub values: Vec<f64>,
    /// Parametric gradients `(d/dzeta1, d/dzeta2)` in the same order.
    pub grads: Vec<[f64; 2]>,
    /// Weight function value at the point.
    pub weight: f64,
    /// Parametric gradient of the weight function.
    pub weight_grad: [f64; 2],
}

impl NurbsEvaluation {
    /// Global tensor index (first direction fastest) of local entry `loc`.
    pub fn global_index(&self, loc: usize, n1: usize) -> usize {
        let a = loc % self.counts[0];
        let b = loc / self.counts[0];
        (self.first[0] + a) + n1 * (self.first[1] + b)
    }
}

fn check_weights(kv1: &KnotVector, kv2: &KnotVector, weights: &[f64]) -> Result<()> {
    let expect = kv1.num_basis() * kv2.num_basis();
    if weights.len() != expect {
        return Err(Error::InvalidArgument(format!(
            "weight vector length {} does not match {} tensor functions",
            weights.len(),
            expect
        )));
    }
    if weights.iter().any(|&w| !(w > 0.0)) {
        return Err(Error::InvalidArgument(
            "weights must be strictly positive".into(),
        ));
    }
    Ok(())
}

/// Weight function `W` and its parametric gradient at `zeta`.
pub fn eval_weight(
    kv1: &KnotVector,
    kv2: &KnotVector,
    weights: &[f64],
    zeta: [f64; 2],
) -> Result<(f64, [f64; 2])> {
    check_weights(kv1, kv2, weights)?;
    let n1 = kv1.num_basis();
    let b1 = kv1.eval_basis(zeta[0], 1);
    let b2 = kv2.eval_basis(zeta[1], 1);
    let mut w = 0.0;
    let mut dw = [0.0, 0.0];
    for (j, (v2, d2)) in b2.values().iter().zip(&b2.ders[1]).enumerate() {
        for (i, (v1, d1)) in b1.values().iter().zip(&b1.ders[1]).enumerate() {
            let coeff = weights[(b1.first + i) + n1 * (b2.first + j)];
            w += coeff * v1 * v2;
            dw[0] += coeff * d1 * v2;
            dw[1] += coeff * v1 * d2;
        }
    }
    Ok((w, dw))
}

/// Values and parametric gradients of the nonzero rational basis functions.
pub fn eval_nurbs_2d(
    kv1: &KnotVector,
    kv2: &KnotVector,
    weights: &[f64],
    zeta: [f64; 2],
) -> Result<NurbsEvaluation> {
    check_weights(kv1, kv2, weights)?;
    let n1 = kv1.num_basis();
    let b1 = kv1.eval_basis(zeta[0], 1);
    let b2 = kv2.eval_basis(zeta[1], 1);
    let c1 = kv1.degree() + 1;
    let c2 = kv2.degree() + 1;
    let mut wb = vec![0.0; c1 * c2];
    let mut dwb = vec![[0.0, 0.0]; c1 * c2];
    let mut w = 0.0;
    let mut dw = [0.0, 0.0];
    for j in 0..c2 {
        for i in 0..c1 {
            let coeff = weights[(b1.first + i) + n1 * (b2.first + j)];
            let v = coeff * b1.values()[i] * b2.values()[j];
            let d1 = coeff * b1.ders[1][i] * b2.values()[j];
            let d2 = coeff * b1.values()[i] * b2.ders[1][j];
            wb[i + c1 * j] = v;
            dwb[i + c1 * j] = [d1, d2];
            w += v;
            dw[0] += d1;
            dw[1] += d2;
        }
    }
    if !(w > 0.0) || !w.is_finite() {
        return Err(Error::NonFinite("weight function"));
    }
    let mut values = vec![0.0; c1 * c2];
    let mut grads = vec![[0.0, 0.0]; c1 * c2];
    for l in 0..c1 * c2 {
        values[l] = wb[l] / w;
        grads[l] = [
            (dwb[l][0] - values[l] * dw[0]) / w,
            (dwb[l][1] - values[l] * dw[1]) / w,
        ];
    }
    Ok(NurbsEvaluation {
        first: [b1.first, b2.first],
        counts: [c1, c2],
        values,
        grads,
        weight: w,
        weight_grad: dw,
    })
}

/// Applies per-direction transfer matrices to a tensor coefficient grid
/// (first direction fastest).
pub fn apply_tensor_transfer(
    t1: &DMatrix<f64>,
    t2: &DMatrix<f64>,
    coeffs: &[f64],
) -> Vec<f64> {
    let (n1_new, n1_old) = (t1.nrows(), t1.ncols());
    let (n2_new, n2_old) = (t2.nrows(), t2.ncols());
    assert_eq!(coeffs.len(), n1_old * n2_old);
    // Stage 1: refine along direction 1.
    let mut stage = vec![0.0; n1_new * n2_old];
    for j in 0..n2_old {
        for i in 0..n1_new {
            let mut acc = 0.0;
            for k in 0..n1_old {
                acc += t1[(i, k)] * coeffs[k + n1_old * j];
            }
            stage[i + n1_new * j] = acc;
        }
    }
    // Stage 2: refine along direction 2.
    let mut out = vec![0.0; n1_new * n2_new];
    for j in 0..n2_new {
        for i in 0..n1_new {
            let mut acc = 0.0;
            for k in 0..n2_old {
                acc += t2[(j, k)] * stage[i + n1_new * k];
            }
            out[i + n1_new * j] = acc;
        }
    }
    out
}

/// Refines weights and control points through homogeneous coordinates.
///
/// Returns the refined `(weights, points)`; the refined weight function and
/// the mapped geometry are unchanged as functions.
pub fn refine_homogeneous(
    t1: &DMatrix<f64>,
    t2: &DMatrix<f64>,
    weights: &[f64],
    points: &[[f64; 2]],
) -> (Vec<f64>, Vec<[f64; 2]>) {
    assert_eq!(weights.len(), points.len());
    let wx: Vec<f64> = weights
        .iter()
        .zip(points)
        .map(|(&w, p)| w * p[0])
        .collect();
    let wy: Vec<f64> = weights
        .iter()
        .zip(points)
        .map(|(&w, p)| w * p[1])
        .collect();
    let new_w = apply_tensor_transfer(t1, t2, weights);
    let new_wx = apply_tensor_transfer(t1, t2, &wx);
    let new_wy = apply_tensor_transfer(t1, t2, &wy);
    let new_points = new_wx
        .iter()
        .zip(&new_wy)
        .zip(&new_w)
        .map(|((&x, &y), &w)| [x / w, y / w])
        .collect();
    (new_w, new_points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::splines::apply_transfer;

    /// Quarter-arc style setup: quadratic along direction 2 with the conic
    /// midpoint weight, linear along direction 1.
    fn arc_setup() -> (KnotVector, KnotVector, Vec<f64>) {
        let kv1 = KnotVector::new(1, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let kv2 = KnotVector::new(2, vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
        let w_mid = 0.5_f64.sqrt();
        let weights = vec![1.0, 1.0, w_mid, w_mid, 1.0, 1.0];
        (kv1, kv2, weights)
    }

    #[test]
    fn weight_of_conic_arc_at_midpoint() {
        let (kv1, kv2, weights) = arc_setup();
        let (w, dw) = eval_weight(&kv1, &kv2, &weights, [0.3, 0.5]).unwrap();
        let expect = (2.0 + 2.0_f64.sqrt()) / 4.0;
        assert!((w - expect).abs() < 1e-15, "W = {w}, want {expect}");
        // The weight grid is constant along direction 1.
        assert!(dw[0].abs() < 1e-15);
    }

    #[test]
    fn weight_gradient_matches_finite_differences() {
        let (kv1, kv2, weights) = arc_setup();
        let z = [0.4, 0.3];
        let h = 1e-7;
        let (_, dw) = eval_weight(&kv1, &kv2, &weights, z).unwrap();
        for d in 0..2 {
            let mut zp = z;
            let mut zm = z;
            zp[d] += h;
            zm[d] -= h;
            let (wp, _) = eval_weight(&kv1, &kv2, &weights, zp).unwrap();
            let (wm, _) = eval_weight(&kv1, &kv2, &weights, zm).unwrap();
            let fd = (wp - wm) / (2.0 * h);
            assert!((fd - dw[d]).abs() < 1e-6, "dW[{d}]: {fd} vs {}", dw[d]);
        }
    }

    #[test]
    fn rational_partition_of_unity() {
        let (kv1, kv2, weights) = arc_setup();
        for &z in &[[0.0, 0.0], [0.2, 0.7], [1.0, 1.0], [0.5, 0.25]] {
            let e = eval_nurbs_2d(&kv1, &kv2, &weights, z).unwrap();
            let sum: f64 = e.values.iter().sum();
            assert!((sum - 1.0).abs() < 1e-14, "PoU at {z:?}: {sum}");
            let g1: f64 = e.grads.iter().map(|g| g[0]).sum();
            let g2: f64 = e.grads.iter().map(|g| g[1]).sum();
            assert!(g1.abs() < 1e-13 && g2.abs() < 1e-13, "gradient sums {g1}, {g2}");
        }
    }

    #[test]
    fn unit_weights_reduce_to_b_splines() {
        let kv1 = KnotVector::uniform(2, 3, 1).unwrap();
        let kv2 = KnotVector::uniform(3, 2, 1).unwrap();
        let weights = vec![1.0; kv1.num_basis() * kv2.num_basis()];
        let z = [0.37, 0.81];
        let e = eval_nurbs_2d(&kv1, &kv2, &weights, z).unwrap();
        let b1 = kv1.eval_basis(z[0], 0);
        let b2 = kv2.eval_basis(z[1], 0);
        for j in 0..e.counts[1] {
            for i in 0..e.counts[0] {
                let plain = b1.values()[i] * b2.values()[j];
                let rat = e.values[i + e.counts[0] * j];
                assert!((plain - rat).abs() < 1e-15);
            }
        }
        assert!((e.weight - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rational_gradients_match_finite_differences() {
        let (kv1, kv2, mut weights) = arc_setup();
        weights[2] = 0.6; // break the symmetry a bit
        let z = [0.45, 0.65];
        let h = 1e-7;
        let e = eval_nurbs_2d(&kv1, &kv2, &weights, z).unwrap();
        for d in 0..2 {
            let mut zp = z;
            let mut zm = z;
            zp[d] += h;
            zm[d] -= h;
            let ep = eval_nurbs_2d(&kv1, &kv2, &weights, zp).unwrap();
            let em = eval_nurbs_2d(&kv1, &kv2, &weights, zm).unwrap();
            for l in 0..e.values.len() {
                let fd = (ep.values[l] - em.values[l]) / (2.0 * h);
                assert!(
                    (fd - e.grads[l][d]).abs() < 1e-6,
                    "grad[{d}] of local {l}: {fd} vs {}",
                    e.grads[l][d]
                );
            }
        }
    }

    #[test]
    fn homogeneous_refinement_preserves_weight_function() {
        let (kv1, kv2, weights) = arc_setup();
        // Points laid out i1-fastest: i1 = 0 sits at the origin, i1 = 1 on
        // the quarter arc through (1,0), (1,1), (0,1).
        let points = vec![
            [0.0, 0.0],
            [1.0, 0.0],
            [0.0, 0.0],
            [1.0, 1.0],
            [0.0, 0.0],
            [0.0, 1.0],
        ];
        let (fine1, t1) = kv1.insert_knots(&[0.5]).unwrap();
        let (fine2, t2) = kv2.insert_knots(&[0.25, 0.5]).unwrap();
        let (wf, pf) = refine_homogeneous(&t1, &t2, &weights, &points);

        let map = |kva: &KnotVector, kvb: &KnotVector, w: &[f64], p: &[[f64; 2]], z: [f64; 2]| {
            let e = eval_nurbs_2d(kva, kvb, w, z).unwrap();
            let mut x = [0.0, 0.0];
            for (l, v) in e.values.iter().enumerate() {
                let g = e.global_index(l, kva.num_basis());
                x[0] += v * p[g][0];
                x[1] += v * p[g][1];
            }
            x
        };
        for &z in &[[0.1, 0.1], [0.5, 0.5], [0.9, 0.33], [1.0, 1.0]] {
            let (w0, _) = eval_weight(&kv1, &kv2, &weights, z).unwrap();
            let (w1, _) = eval_weight(&fine1, &fine2, &wf, z).unwrap();
            assert!(
                (w0 - w1).abs() <= 1e-14,
                "weight changed under refinement at {z:?}: {w0} vs {w1}"
            );
            let x0 = map(&kv1, &kv2, &weights, &points, z);
            let x1 = map(&fine1, &fine2, &wf, &pf, z);
            assert!(
                (x0[0] - x1[0]).abs() <= 1e-14 && (x0[1] - x1[1]).abs() <= 1e-14,
                "map changed under refinement at {z:?}"
            );
        }
    }

    #[test]
    fn tensor_transfer_matches_univariate_factors() {
        let kv1 = KnotVector::uniform(2, 2, 1).unwrap();
        let kv2 = KnotVector::uniform(1, 2, 1).unwrap();
        let (_, t1) = kv1.insert_knots(&[0.3]).unwrap();
        let (_, t2) = kv2.insert_knots(&[0.7]).unwrap();
        let n1 = kv1.num_basis();
        let n2 = kv2.num_basis();
        // Separable coefficient grid c[i,j] = a[i] b[j] must refine to the
        // product of the univariate refinements.
        let a: Vec<f64> = (0..n1).map(|i| 1.0 + i as f64).collect();
        let b: Vec<f64> = (0..n2).map(|j| 2.0 - 0.5 * j as f64).collect();
        let mut c = vec![0.0; n1 * n2];
        for j in 0..n2 {
            for i in 0..n1 {
                c[i + n1 * j] = a[i] * b[j];
            }
        }
        let fine = apply_tensor_transfer(&t1, &t2, &c);
        let fa = apply_transfer(&t1, &a);
        let fb = apply_transfer(&t2, &b);
        for j in 0..fb.len() {
            for i in 0..fa.len() {
                let want = fa[i] * fb[j];
                let got = fine[i + fa.len() * j];
                assert!((want - got).abs() < 1e-14);
            }
        }
    }
}

//! Best-approximation oracles for the discrete spaces.
//!
//! The quadrature-L2 projection of an exact mode onto a space is the error
//! floor for any Galerkin eigenfunction.  Its convergence order follows
//! from classical approximation theory for functions of type `r^nu`:
//! `nu + 1` on uniform radial meshes (capped by the singularity), `p + 1`
//! on suitably graded ones.  This pins down the assembly and projection
//! machinery independently of the eigensolver.

use std::f64::consts::PI;

use sector_iga::assembly::{assemble, AssembledSystem};
use sector_iga::eigensolve::{solve, BandedCholesky};
use sector_iga::errors::{estimate_rates, mode_error_report};
use sector_iga::exact::{exact_spectrum, ExactEigenpair, Face};
use sector_iga::geometry::SectorGeometry;
use sector_iga::quadrature::GaussRule;
use sector_iga::spaces::{Space, TensorSpace};

/// Quadrature-L2 distance of the exact mode to its projection onto the
/// unconstrained functions of the space.
fn best_approx_error(space: &Space, sys: &AssembledSystem, exact: &ExactEigenpair, q: usize) -> f64 {
    let geo = space.geometry();
    let rule = GaussRule::new(q).unwrap();

    // Right-hand side <N_i, u> and the squared norm of u, same quadrature.
    let mut rhs_full = vec![0.0; space.num_dofs()];
    let mut norm_sq = 0.0;
    for cell in space.cells() {
        for qp in rule.element_rule(cell.rect) {
            let g = geo.eval(qp.zeta).unwrap();
            let u = exact.value(g.x, Face::Lower).unwrap();
            let w = qp.weight * g.det;
            norm_sq += w * u * u;
            let e = space.eval_at(qp.zeta).unwrap();
            for (l, &idx) in e.indices.iter().enumerate() {
                rhs_full[idx] += w * u * e.values[l];
            }
        }
    }
    let mut rhs: Vec<f64> = sys.free.iter().map(|&i| rhs_full[i]).collect();

    // Projection coefficients solve M c = b, so the squared distance is
    // |u|^2 - b^T c.
    let chol = BandedCholesky::new(&sys.mass).unwrap();
    chol.solve_in_place(&mut rhs);
    let reduction: f64 = sys
        .free
        .iter()
        .enumerate()
        .map(|(r, &i)| rhs_full[i] * rhs[r])
        .sum();
    (norm_sq - reduction).max(0.0).sqrt()
}

fn projection_rate(p: usize, mu: f64, schedule: &[usize]) -> f64 {
    let geo = SectorGeometry::new(2.0 * PI).unwrap();
    let exact = ExactEigenpair::new(2.0 * PI, 1, 1).unwrap();
    let mut hs = Vec::new();
    let mut errs = Vec::new();
    for &j1 in schedule {
        let space = Space::Tensor(TensorSpace::new(&geo, p, p - 1, j1, 4 * j1, mu).unwrap());
        let sys = assemble(&space, 6).unwrap();
        hs.push(1.0 / j1 as f64);
        errs.push(best_approx_error(&space, &sys, &exact, 6));
    }
    let r = estimate_rates(&hs, &errs).unwrap();
    assert!(r.monotone, "projection errors must decrease: {errs:?}");
    r.rate
}

/// Ratio of the computed eigenfunction L2 error to the projection floor on
/// the uniform mesh with `j1` radial elements.
fn error_over_floor(p: usize, j1: usize) -> f64 {
    let geo = SectorGeometry::new(2.0 * PI).unwrap();
    let space = Space::Tensor(TensorSpace::new(&geo, p, p - 1, j1, 4 * j1, 1.0).unwrap());
    let sys = assemble(&space, 6).unwrap();
    let spec = solve(&sys.stiffness, &sys.mass, 4, 1e-10, 7).unwrap();
    let exact = exact_spectrum(2.0 * PI, 8).unwrap();
    let embed = |v: &[f64]| sys.embed(v);
    let report = mode_error_report(
        &space,
        &spec.eigenvalues,
        &spec.eigenvectors,
        &embed,
        &exact,
        (1, 1),
        6,
    )
    .unwrap();
    let pair = ExactEigenpair::new(2.0 * PI, 1, 1).unwrap();
    let floor = best_approx_error(&space, &sys, &pair, 6);
    report.l2_err / floor
}

// The uniform-mesh L2 eigenfunction error splits into a projection part of
// order h^(nu+1) = h^1.5 and a consistency part of order h^(2 nu) = h^1 from
// integrating the singular-edge functions by quadrature only.  Which one is
// visible at a given mesh depends on their constants: for p = 2 the floor
// dominates every desk-scale mesh, for p = 3 the floor is small enough that
// the consistency part takes over under refinement.  Pinning both guards the
// rate windows used by the convergence studies.

#[test]
fn uniform_p2_eigenfunction_error_sits_on_the_projection_floor() {
    let r16 = error_over_floor(2, 16);
    let r32 = error_over_floor(2, 32);
    assert!(
        (1.2..1.6).contains(&r16) && (1.2..1.6).contains(&r32),
        "expected errors a fixed small factor above the floor, got {r16} and {r32}"
    );
    assert!(
        (r32 - r16).abs() < 0.08,
        "floor-dominated errors keep a constant ratio, got {r16} -> {r32}"
    );
}

#[test]
fn uniform_p3_eigenfunction_error_grows_away_from_the_floor() {
    let r16 = error_over_floor(3, 16);
    let r32 = error_over_floor(3, 32);
    assert!(
        r16 > 1.8 && r32 > r16 + 0.3,
        "expected the consistency part to outgrow the floor, got {r16} -> {r32}"
    );
}

#[test]
fn uniform_projection_rate_is_capped_by_the_singularity() {
    // u ~ r^(1/2): uniform meshes project at order nu + 1 = 3/2 for any p.
    let rate = projection_rate(2, 1.0, &[8, 16, 32]);
    assert!(
        (rate - 1.5).abs() < 0.1,
        "uniform projection rate {rate}, expected about 1.5"
    );
}

#[test]
fn graded_projection_recovers_full_order() {
    let rate = projection_rate(2, 0.225, &[8, 16, 32]);
    assert!(
        (rate - 3.0).abs() < 0.3,
        "graded projection rate {rate}, expected about 3"
    );
}

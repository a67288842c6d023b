//! Subcommand implementations and CSV emission.
//!
//! All tables are plain CSV with `#`-prefixed header comments carrying the
//! fully resolved configuration, so every output file documents how it was
//! produced.  Floating-point values use the shortest representation that
//! parses back to the same number.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use sector_iga::assembly::{assemble, AssembledSystem};
use sector_iga::eigensolve::{solve, solve_full, DiscreteSpectrum, DEFAULT_TOL, DENSE_GUARD};
use sector_iga::errors::{estimate_rates, mode_error_report, suggest_mu, suggest_mu_for_mode};
use sector_iga::exact::exact_spectrum;
use sector_iga::geometry::SectorGeometry;
use sector_iga::spaces::{HierarchicalSpace, Space, TensorSpace};
use sector_iga::Error;

use crate::config::{parse_mu, MeshKind, MuSetting, Resolved, Target};
use crate::AppError;

/// Shortest round-trippable decimal form.
fn fnum(x: f64) -> String {
    format!("{x:?}")
}

/// Invalid-input failures from the library are configuration mistakes;
/// everything else is a solver failure.
fn core_err(e: Error) -> AppError {
    match e {
        Error::InvalidArgument(_) | Error::InvalidKnots(_) => AppError::Config(e.to_string()),
        other => AppError::Solver(other.to_string()),
    }
}

fn open_output(path: &Option<PathBuf>) -> Result<Box<dyn Write>, AppError> {
    match path {
        Some(p) => {
            let f = File::create(p).map_err(|e| {
                AppError::Config(format!("cannot create {}: {e}", p.display()))
            })?;
            Ok(Box::new(BufWriter::new(f)))
        }
        None => Ok(Box::new(BufWriter::new(io::stdout()))),
    }
}

/// Exact spectrum as CSV, eigenfrequencies ascending.
pub fn run_exact(omega: f64, count: usize, output: &Option<PathBuf>) -> Result<(), AppError> {
    let pairs = exact_spectrum(omega, count).map_err(core_err)?;
    let mut w = open_output(output)?;
    write!(w, "# omega = {}\n# count = {count}\n", fnum(omega))?;
    writeln!(w, "index,eigenfrequency,eigenvalue,nu,k,m,regularity")?;
    for (i, pair) in pairs.iter().enumerate() {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            i + 1,
            fnum(pair.mu),
            fnum(pair.lambda),
            fnum(pair.nu),
            pair.k,
            pair.m,
            pair.regularity.label()
        )?;
    }
    w.flush()?;
    Ok(())
}

struct MeshDesc {
    j1: usize,
    /// Finest angular element count.
    j2: usize,
    /// Hierarchical doublings (0 on tensor meshes).
    levels: usize,
}

impl MeshDesc {
    fn header(&self, space: &Space, free: usize) -> String {
        format!(
            "# j1 = {}\n# j2 = {}\n# levels = {}\n# dofs = {}\n# free_dofs = {free}\n",
            self.j1,
            self.j2,
            self.levels,
            space.num_dofs()
        )
    }
}

/// Builds the mesh for schedule entry `step`.
fn build_space(res: &Resolved, step: usize, mu: f64) -> Result<(Space, MeshDesc), AppError> {
    let geo = SectorGeometry::new(res.omega).map_err(core_err)?;
    let j1 = res.schedule[step];
    match res.mesh {
        MeshKind::Tensor => {
            let j2 = res.angular_factor * j1;
            let space = TensorSpace::new(&geo, res.degree, res.smoothness, j1, j2, mu)
                .map_err(core_err)?;
            Ok((
                Space::Tensor(space),
                MeshDesc {
                    j1,
                    j2,
                    levels: 0,
                },
            ))
        }
        MeshKind::Hierarchical => {
            let j2_base = res.angular_factor * res.schedule[0];
            let levels = step;
            let space = HierarchicalSpace::new(&geo, res.degree, j1, j2_base, levels, mu)
                .map_err(core_err)?;
            Ok((
                Space::Hierarchical(space),
                MeshDesc {
                    j1,
                    j2: j2_base << levels,
                    levels,
                },
            ))
        }
    }
}

/// Optional eigenfunction sampling on a parametric grid.
pub struct FieldDump {
    path: PathBuf,
    /// 1-based rank of the mode to sample.
    rank: usize,
    grid: [usize; 2],
}

impl FieldDump {
    pub fn parse(path: PathBuf, rank: usize, grid: &str) -> Result<FieldDump, AppError> {
        let parts: Vec<usize> = grid
            .split(',')
            .map(|t| t.trim().parse())
            .collect::<Result<_, _>>()
            .map_err(|_| AppError::Config(format!("field grid must be \"NR,NPHI\", got {grid:?}")))?;
        if parts.len() != 2 || parts.iter().any(|&n| n < 2) {
            return Err(AppError::Config(format!(
                "field grid needs two sizes of at least 2, got {grid:?}"
            )));
        }
        if rank == 0 {
            return Err(AppError::Config("dump rank is 1-based".into()));
        }
        Ok(FieldDump {
            path,
            rank,
            grid: [parts[0], parts[1]],
        })
    }

    fn write(
        &self,
        res: &Resolved,
        desc: &MeshDesc,
        space: &Space,
        sys: &AssembledSystem,
        spectrum: &DiscreteSpectrum,
    ) -> Result<(), AppError> {
        if self.rank > spectrum.eigenvalues.len() {
            return Err(AppError::Config(format!(
                "dump rank {} exceeds the {} computed eigenpairs",
                self.rank,
                spectrum.eigenvalues.len()
            )));
        }
        let coeffs = sys.embed(&spectrum.eigenvectors[self.rank - 1]);
        let geo = space.geometry();
        let [nr, nphi] = self.grid;
        let mut w = open_output(&Some(self.path.clone()))?;
        write!(w, "{}", res.header())?;
        write!(w, "{}", desc.header(space, sys.free.len()))?;
        write!(
            w,
            "# field_rank = {}\n# lambda_h = {}\n",
            self.rank,
            fnum(spectrum.eigenvalues[self.rank - 1])
        )?;
        writeln!(w, "zeta1,zeta2,x,y,value")?;
        for i in 0..nr {
            let z1 = i as f64 / (nr - 1) as f64;
            for j in 0..nphi {
                let z2 = j as f64 / (nphi - 1) as f64;
                let x = geo.map([z1, z2]).map_err(core_err)?;
                let e = space.eval_at([z1, z2]).map_err(core_err)?;
                let v: f64 = e
                    .indices
                    .iter()
                    .zip(&e.values)
                    .map(|(&idx, &b)| coeffs[idx] * b)
                    .sum();
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    fnum(z1),
                    fnum(z2),
                    fnum(x[0]),
                    fnum(x[1]),
                    fnum(v)
                )?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Solves one schedule entry and tabulates the lowest eigenpairs against
/// the exact spectrum.
pub fn run_solve(
    res: &Resolved,
    level_index: Option<usize>,
    dump: Option<&FieldDump>,
) -> Result<(), AppError> {
    let step = level_index.unwrap_or(res.schedule.len() - 1);
    if step >= res.schedule.len() {
        return Err(AppError::Config(format!(
            "level index {step} exceeds the {}-entry schedule",
            res.schedule.len()
        )));
    }
    let mu = res.resolve_mu();
    let (space, desc) = build_space(res, step, mu)?;
    let sys = assemble(&space, res.quadrature).map_err(core_err)?;
    let free = sys.free.len();
    if res.n_ev > free {
        return Err(AppError::Config(format!(
            "n_ev = {} exceeds the {free} unconstrained functions",
            res.n_ev
        )));
    }
    let spectrum =
        solve(&sys.stiffness, &sys.mass, res.n_ev, DEFAULT_TOL, res.seed).map_err(core_err)?;
    let exact = exact_spectrum(res.omega, res.n_ev).map_err(core_err)?;

    let mut w = open_output(&res.output)?;
    write!(w, "{}", res.header())?;
    write!(w, "{}", desc.header(&space, free))?;
    writeln!(
        w,
        "rank,lambda_h,residual,lambda,rel_err,nu,k,m,regularity"
    )?;
    for i in 0..res.n_ev {
        let e = &exact[i];
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            i + 1,
            fnum(spectrum.eigenvalues[i]),
            fnum(spectrum.residuals[i]),
            fnum(e.lambda),
            fnum((spectrum.eigenvalues[i] - e.lambda).abs() / e.lambda),
            fnum(e.nu),
            e.k,
            e.m,
            e.regularity.label()
        )?;
    }
    w.flush()?;
    if let Some(d) = dump {
        d.write(res, &desc, &space, &sys, &spectrum)?;
    }
    Ok(())
}

/// Runs the whole schedule on the target mode, reports per-level errors and
/// least-squares convergence rates over the last three levels.
pub fn run_convergence(res: &Resolved) -> Result<(), AppError> {
    let Target::Mode([mode_k, mode_m]) = res.target else {
        return Err(AppError::Config(
            "convergence runs need a target mode, not \"spectrum\"".into(),
        ));
    };
    let mu = res.resolve_mu();
    let exact = exact_spectrum(res.omega, res.n_ev.max(64)).map_err(core_err)?;
    let exact_index = exact
        .iter()
        .position(|e| e.k == mode_k && e.m == mode_m)
        .ok_or_else(|| {
            AppError::Config(format!(
                "mode ({mode_k}, {mode_m}) is not among the first {} exact eigenvalues",
                exact.len()
            ))
        })?;
    let n_ev = res.n_ev.max(exact_index + 3);

    let mut hs = Vec::new();
    let mut rows = Vec::new();
    for step in 0..res.schedule.len() {
        let (space, desc) = build_space(res, step, mu)?;
        let sys = assemble(&space, res.quadrature).map_err(core_err)?;
        let spectrum =
            solve(&sys.stiffness, &sys.mass, n_ev, DEFAULT_TOL, res.seed).map_err(core_err)?;
        let embed = |v: &[f64]| sys.embed(v);
        let report = mode_error_report(
            &space,
            &spectrum.eigenvalues,
            &spectrum.eigenvectors,
            &embed,
            &exact,
            (mode_k, mode_m),
            res.quadrature,
        )
        .map_err(core_err)?;
        let h = match res.mesh {
            MeshKind::Tensor => 1.0 / desc.j1 as f64,
            MeshKind::Hierarchical => 1.0 / (report.dofs as f64).sqrt(),
        };
        hs.push(h);
        rows.push((step, desc, h, report));
    }

    let mut w = open_output(&res.output)?;
    write!(w, "{}", res.header())?;
    writeln!(
        w,
        "step,j1,j2,levels,mu,dofs,h,lambda,lambda_h,abs_err,rel_err,l2_err,h1_err,cosine"
    )?;
    for (step, desc, h, r) in &rows {
        writeln!(
            w,
            "{step},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            desc.j1,
            desc.j2,
            desc.levels,
            fnum(mu),
            r.dofs,
            fnum(*h),
            fnum(r.lambda),
            fnum(r.lambda_h),
            fnum(r.abs_err),
            fnum(r.rel_err),
            fnum(r.l2_err),
            fnum(r.h1_err),
            fnum(r.cosine)
        )?;
    }

    let mut rates = None;
    if rows.len() >= 3 {
        let take = |f: &dyn Fn(&sector_iga::errors::ErrorReport) -> f64| -> Vec<f64> {
            rows.iter().map(|(_, _, _, r)| f(r)).collect()
        };
        let h1 = estimate_rates(&hs, &take(&|r| r.h1_err)).map_err(core_err)?;
        let l2 = estimate_rates(&hs, &take(&|r| r.l2_err)).map_err(core_err)?;
        let ev = estimate_rates(&hs, &take(&|r| r.abs_err)).map_err(core_err)?;
        writeln!(w, "# rate_h1 = {}", fnum(h1.rate))?;
        writeln!(w, "# rate_l2 = {}", fnum(l2.rate))?;
        writeln!(w, "# rate_eigenvalue = {}", fnum(ev.rate))?;
        writeln!(
            w,
            "# monotone = {} {} {}",
            h1.monotone, l2.monotone, ev.monotone
        )?;
        rates = Some((h1.rate, l2.rate, ev.rate));
    }
    w.flush()?;

    if let Some((rh1, rl2, rev)) = rates {
        if res.output.is_some() {
            println!(
                "rates: H1 {} L2 {} eigenvalue {}",
                fnum(rh1),
                fnum(rl2),
                fnum(rev)
            );
        }
        if let Some(t) = res.rate_target {
            let mut misses = Vec::new();
            for (name, got, want) in [
                ("H1", rh1, t.h1),
                ("L2", rl2, t.l2),
                ("eigenvalue", rev, t.eigenvalue),
            ] {
                if (got - want).abs() > t.tolerance * want.abs() {
                    misses.push(format!(
                        "{name} slope {} outside {} of target {}",
                        fnum(got),
                        fnum(t.tolerance),
                        fnum(want)
                    ));
                }
            }
            if !misses.is_empty() {
                return Err(AppError::RateMiss(misses.join("; ")));
            }
        }
    } else if res.rate_target.is_some() {
        return Err(AppError::RateMiss(
            "rate targets need at least 3 levels".into(),
        ));
    }
    Ok(())
}

/// One smoothness variant of a spectrum comparison.
#[derive(Debug, Clone, Copy)]
pub struct Variant {
    p: usize,
    k: usize,
    j1: usize,
    mu: Option<MuSetting>,
}

impl Variant {
    fn label(&self) -> String {
        format!("p{}k{}j{}", self.p, self.k, self.j1)
    }
}

fn parse_variant(s: &str) -> Result<Variant, AppError> {
    let (mut p, mut k, mut j1, mut mu) = (None, None, None, None);
    for part in s.split(',') {
        let (key, val) = part.split_once('=').ok_or_else(|| {
            AppError::Config(format!("variant entries are key=value, got {part:?}"))
        })?;
        let val = val.trim();
        let int = |what: &str| {
            val.parse::<usize>()
                .map_err(|_| AppError::Config(format!("variant {what} must be an integer, got {val:?}")))
        };
        match key.trim() {
            "p" => p = Some(int("p")?),
            "k" => k = Some(int("k")?),
            "j1" => j1 = Some(int("j1")?),
            "mu" => mu = Some(parse_mu(val)?),
            other => {
                return Err(AppError::Config(format!(
                    "unknown variant key {other:?} (expected p, k, j1, mu)"
                )))
            }
        }
    }
    let p = p.ok_or_else(|| AppError::Config(format!("variant {s:?} is missing p")))?;
    let j1 = j1.ok_or_else(|| AppError::Config(format!("variant {s:?} is missing j1")))?;
    Ok(Variant {
        p,
        k: k.unwrap_or(p - 1),
        j1,
        mu,
    })
}

/// Function counts of a tensor space without building it.
fn tensor_dims(res: &Resolved, p: usize, k: usize, j1: usize) -> (usize, usize) {
    let j2 = res.angular_factor * j1;
    let n1 = p + 1 + (j1 - 1) * (p - k);
    let n2 = res.num_arcs * p + 1 + (j2 - res.num_arcs) * (p - k);
    (n1, n2)
}

/// Relative eigenvalue errors over the lower spectrum for several
/// smoothness variants of identical size.
pub fn run_spectrum_compare(
    res: &Resolved,
    variant_specs: &[String],
    count: Option<usize>,
) -> Result<(), AppError> {
    if res.mesh == MeshKind::Hierarchical {
        return Err(AppError::Config(
            "spectrum comparison runs on tensor meshes".into(),
        ));
    }
    let mut variants = Vec::new();
    for s in variant_specs {
        variants.push(parse_variant(s)?);
    }
    if variants.is_empty() {
        // Default comparison: the configured space against the C^0 space of
        // the same degree, sized to the same function count.
        let smooth = Variant {
            p: res.degree,
            k: res.smoothness,
            j1: res.schedule[0],
            mu: None,
        };
        if smooth.k == 0 {
            return Err(AppError::Config(
                "default comparison needs smoothness above 0; give explicit --variant".into(),
            ));
        }
        let (n1, n2) = tensor_dims(res, smooth.p, smooth.k, smooth.j1);
        let target = n1 * n2;
        let matched = (1..=4096)
            .find(|&j1c| {
                let (a, b) = tensor_dims(res, res.degree, 0, j1c);
                a * b >= target
            })
            .filter(|&j1c| {
                let (a, b) = tensor_dims(res, res.degree, 0, j1c);
                a * b == target
            })
            .ok_or_else(|| {
                AppError::Config(format!(
                    "no C^0 mesh of degree {} matches {target} functions; give explicit --variant",
                    res.degree
                ))
            })?;
        variants.push(smooth);
        variants.push(Variant {
            p: res.degree,
            k: 0,
            j1: matched,
            mu: None,
        });
    }

    let geo = SectorGeometry::new(res.omega).map_err(core_err)?;
    let mut built = Vec::new();
    for v in &variants {
        let mu = match v.mu.unwrap_or(res.mu) {
            MuSetting::Fixed(x) => x,
            MuSetting::Auto(_) => suggest_mu(res.nu(1), v.p),
        };
        if v.p < 2 || v.k + 1 > v.p {
            return Err(AppError::Config(format!(
                "variant {} has invalid degree/smoothness",
                v.label()
            )));
        }
        let j2 = res.angular_factor * v.j1;
        let space = TensorSpace::new(&geo, v.p, v.k, v.j1, j2, mu).map_err(core_err)?;
        built.push((*v, mu, j2, Space::Tensor(space)));
    }
    let dofs: Vec<usize> = built.iter().map(|(_, _, _, s)| s.num_dofs()).collect();
    if dofs.windows(2).any(|w| w[0] != w[1]) {
        return Err(AppError::Config(format!(
            "variants are not size-matched: {dofs:?} functions"
        )));
    }

    let mut solved = Vec::new();
    let mut free_min = usize::MAX;
    for (v, mu, j2, space) in &built {
        let sys = assemble(space, res.quadrature).map_err(core_err)?;
        free_min = free_min.min(sys.free.len());
        solved.push((v, *mu, *j2, sys));
    }
    let count = count.unwrap_or(free_min / 2);
    if count == 0 || count > free_min {
        return Err(AppError::Config(format!(
            "comparison count {count} must lie in 1..={free_min}"
        )));
    }
    let exact = exact_spectrum(res.omega, count).map_err(core_err)?;

    let mut w = open_output(&res.output)?;
    write!(w, "{}", res.header())?;
    writeln!(w, "# dofs = {}\n# count = {count}", dofs[0])?;
    writeln!(
        w,
        "variant,p,k,j1,j2,mu,rank,lambda,lambda_h,rel_err,nu,exact_k,exact_m"
    )?;
    let mut means = Vec::new();
    for (v, mu, j2, sys) in &solved {
        let free = sys.free.len();
        let spectrum = if free <= DENSE_GUARD {
            solve_full(&sys.stiffness, &sys.mass).map_err(core_err)?
        } else {
            solve(&sys.stiffness, &sys.mass, count, DEFAULT_TOL, res.seed).map_err(core_err)?
        };
        let mut sum = 0.0;
        for (i, e) in exact.iter().enumerate() {
            let lh = spectrum.eigenvalues[i];
            let rel = (lh - e.lambda).abs() / e.lambda;
            sum += rel;
            writeln!(
                w,
                "{},{},{},{},{j2},{},{},{},{},{},{},{},{}",
                v.label(),
                v.p,
                v.k,
                v.j1,
                fnum(*mu),
                i + 1,
                fnum(e.lambda),
                fnum(lh),
                fnum(rel),
                fnum(e.nu),
                e.k,
                e.m
            )?;
        }
        means.push((v.label(), sum / count as f64));
    }
    for (label, mean) in &means {
        writeln!(w, "# mean_rel_err {label} = {}", fnum(*mean))?;
    }
    w.flush()?;
    Ok(())
}

/// Prints the suggested grading exponent.
pub fn run_suggest_mu(omega: f64, degree: usize, mode: Option<usize>) -> Result<(), AppError> {
    SectorGeometry::new(omega).map_err(core_err)?;
    if degree < 2 {
        return Err(AppError::Config(format!(
            "degree must be at least 2, got {degree}"
        )));
    }
    let mu = match mode {
        Some(k) => suggest_mu_for_mode(k as f64 * std::f64::consts::PI / omega, degree),
        None => suggest_mu(std::f64::consts::PI / omega, degree),
    };
    println!("{}", fnum(mu));
    Ok(())
}

/// Dumps knot vectors and the weighted control net as CSV.
pub fn run_dump_geometry(
    omega: f64,
    refine: Option<(usize, usize, usize, usize, f64)>,
    output: &Option<PathBuf>,
) -> Result<(), AppError> {
    let geo = SectorGeometry::new(omega).map_err(core_err)?;
    let mut w = open_output(output)?;
    write!(
        w,
        "# omega = {}\n# num_arcs = {}\n# arc_angle = {}\n",
        fnum(omega),
        geo.num_arcs(),
        fnum(geo.arc_angle())
    )?;
    let (kv1, kv2, points, weights): (_, _, Vec<[f64; 2]>, Vec<f64>) = match refine {
        None => (
            geo.kv_radial().clone(),
            geo.kv_angular().clone(),
            geo.control_points().to_vec(),
            geo.weights().to_vec(),
        ),
        Some((p, k, j1, factor, mu)) => {
            let j2 = factor * j1;
            let space = TensorSpace::new(&geo, p, k, j1, j2, mu).map_err(core_err)?;
            write!(
                w,
                "# degree = {p}\n# smoothness = {k}\n# j1 = {j1}\n# j2 = {j2}\n# mu = {}\n",
                fnum(mu)
            )?;
            (
                space.kv1().clone(),
                space.kv2().clone(),
                space.control_points().to_vec(),
                space.weights().to_vec(),
            )
        }
    };
    let n1 = kv1.num_basis();
    write!(
        w,
        "# radial_knots = {}\n# angular_knots = {}\n",
        kv1.knots_decimal(),
        kv2.knots_decimal()
    )?;
    writeln!(w, "i1,i2,x,y,weight")?;
    for (idx, (pt, wt)) in points.iter().zip(&weights).enumerate() {
        writeln!(
            w,
            "{},{},{},{},{}",
            idx % n1,
            idx / n1,
            fnum(pt[0]),
            fnum(pt[1]),
            fnum(*wt)
        )?;
    }
    w.flush()?;
    Ok(())
}

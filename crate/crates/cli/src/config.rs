//! Experiment configuration: TOML file format, flag overrides, validation.

use std::f64::consts::PI;
use std::path::PathBuf;

use clap::Args;
use sector_iga::errors::{suggest_mu, suggest_mu_for_mode};
use sector_iga::geometry::SectorGeometry;
use serde::{Deserialize, Serialize};

use crate::AppError;

/// Grading exponent: a fixed value or the automatic rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MuSetting {
    Fixed(f64),
    Auto(AutoWord),
}

/// The literal string `"auto"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AutoWord {
    #[serde(rename = "auto")]
    Auto,
}

impl MuSetting {
    pub const AUTO: MuSetting = MuSetting::Auto(AutoWord::Auto);

    pub fn label(&self) -> String {
        match self {
            MuSetting::Fixed(v) => format!("{v:?}"),
            MuSetting::Auto(_) => "auto".to_string(),
        }
    }
}

/// What a run studies: one exact mode or the whole lower spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Target {
    Mode([usize; 2]),
    Spectrum(SpectrumWord),
}

/// The literal string `"spectrum"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SpectrumWord {
    #[serde(rename = "spectrum")]
    Spectrum,
}

impl Target {
    pub const SPECTRUM: Target = Target::Spectrum(SpectrumWord::Spectrum);

    pub fn label(&self) -> String {
        match self {
            Target::Mode([k, m]) => format!("mode {k} {m}"),
            Target::Spectrum(_) => "spectrum".to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeshKind {
    Tensor,
    Hierarchical,
}

impl MeshKind {
    pub fn label(&self) -> &'static str {
        match self {
            MeshKind::Tensor => "tensor",
            MeshKind::Hierarchical => "hierarchical",
        }
    }
}

/// Declared convergence-rate targets; missing them is a distinct exit code.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateTarget {
    pub h1: f64,
    pub l2: f64,
    pub eigenvalue: f64,
    /// Relative tolerance on each slope.
    #[serde(default = "default_rate_tolerance")]
    pub tolerance: f64,
}

fn default_rate_tolerance() -> f64 {
    0.15
}

/// One experiment, as read from a TOML file.  Every field has a default, so
/// an empty file is a valid configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Opening angle of the sector in radians.
    pub omega: f64,
    /// Spline degree.
    pub degree: usize,
    /// Interior smoothness; `p - 1` when absent.
    pub smoothness: Option<usize>,
    /// Radial element counts, one per refinement level.
    pub schedule: Vec<usize>,
    /// Angular elements per radial element; the arc count when absent.
    pub angular_factor: Option<usize>,
    /// Grading exponent or "auto".
    pub mu: MuSetting,
    pub mesh: MeshKind,
    /// Gauss points per direction.
    pub quadrature: usize,
    /// Eigenpairs to compute.
    pub n_ev: usize,
    /// `[k, m]` for one mode, or "spectrum".
    pub target: Target,
    /// CSV destination; stdout when absent.
    pub output: Option<PathBuf>,
    /// Seed for the iterative eigensolver start block.
    pub seed: u64,
    pub rate_target: Option<RateTarget>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            omega: 2.0 * PI,
            degree: 2,
            smoothness: None,
            schedule: vec![4, 8, 16, 32, 64],
            angular_factor: None,
            mu: MuSetting::AUTO,
            mesh: MeshKind::Tensor,
            quadrature: 6,
            n_ev: 12,
            target: Target::Mode([1, 1]),
            output: None,
            seed: 7,
            rate_target: None,
        }
    }
}

/// Command-line overrides shared by the mesh-based subcommands.  Any flag
/// given here wins over the corresponding file entry.
#[derive(Debug, Default, Args)]
pub struct ConfigArgs {
    /// Configuration file (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Opening angle in radians.
    #[arg(long)]
    pub omega: Option<f64>,
    /// Spline degree p.
    #[arg(long)]
    pub degree: Option<usize>,
    /// Interior smoothness k (default p-1).
    #[arg(long)]
    pub smoothness: Option<usize>,
    /// Radial element counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub schedule: Option<Vec<usize>>,
    /// Angular elements per radial element (default: arc count).
    #[arg(long)]
    pub angular_factor: Option<usize>,
    /// Grading exponent in (0,1], or "auto".
    #[arg(long)]
    pub mu: Option<String>,
    /// Mesh kind: "tensor" or "hierarchical".
    #[arg(long)]
    pub mesh: Option<String>,
    /// Gauss points per direction.
    #[arg(long)]
    pub quadrature: Option<usize>,
    /// Number of eigenpairs to compute.
    #[arg(long)]
    pub n_ev: Option<usize>,
    /// Target: "K,M" or "spectrum".
    #[arg(long)]
    pub target: Option<String>,
    /// Output CSV path (stdout when omitted).
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Eigensolver seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Expected slopes "H1,L2,EV"; missing them exits with code 4.
    #[arg(long, value_name = "H1,L2,EV")]
    pub rate_target: Option<String>,
    /// Relative tolerance for --rate-target (default 0.15).
    #[arg(long)]
    pub rate_tolerance: Option<f64>,
}

pub fn parse_mu(s: &str) -> Result<MuSetting, AppError> {
    if s == "auto" {
        return Ok(MuSetting::AUTO);
    }
    s.parse::<f64>()
        .map(MuSetting::Fixed)
        .map_err(|_| AppError::Config(format!("mu must be a number or \"auto\", got {s:?}")))
}

fn parse_target(s: &str) -> Result<Target, AppError> {
    if s == "spectrum" {
        return Ok(Target::SPECTRUM);
    }
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() == 2 {
        if let (Ok(k), Ok(m)) = (parts[0].trim().parse(), parts[1].trim().parse()) {
            return Ok(Target::Mode([k, m]));
        }
    }
    Err(AppError::Config(format!(
        "target must be \"K,M\" or \"spectrum\", got {s:?}"
    )))
}

fn parse_mesh(s: &str) -> Result<MeshKind, AppError> {
    match s {
        "tensor" => Ok(MeshKind::Tensor),
        "hierarchical" => Ok(MeshKind::Hierarchical),
        other => Err(AppError::Config(format!(
            "mesh must be \"tensor\" or \"hierarchical\", got {other:?}"
        ))),
    }
}

impl ConfigArgs {
    /// Loads the file (when given), applies the flag overrides, validates.
    pub fn load(&self) -> Result<Resolved, AppError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    AppError::Config(format!("cannot read {}: {e}", path.display()))
                })?;
                toml::from_str(&text)
                    .map_err(|e| AppError::Config(format!("{}: {e}", path.display())))?
            }
            None => ExperimentConfig::default(),
        };
        if let Some(v) = self.omega {
            cfg.omega = v;
        }
        if let Some(v) = self.degree {
            cfg.degree = v;
        }
        if let Some(v) = self.smoothness {
            cfg.smoothness = Some(v);
        }
        if let Some(v) = &self.schedule {
            cfg.schedule = v.clone();
        }
        if let Some(v) = self.angular_factor {
            cfg.angular_factor = Some(v);
        }
        if let Some(v) = &self.mu {
            cfg.mu = parse_mu(v)?;
        }
        if let Some(v) = &self.mesh {
            cfg.mesh = parse_mesh(v)?;
        }
        if let Some(v) = self.quadrature {
            cfg.quadrature = v;
        }
        if let Some(v) = self.n_ev {
            cfg.n_ev = v;
        }
        if let Some(v) = &self.target {
            cfg.target = parse_target(v)?;
        }
        if let Some(v) = &self.output {
            cfg.output = Some(v.clone());
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(spec) = &self.rate_target {
            let parts: Vec<f64> = spec
                .split(',')
                .map(|t| t.trim().parse())
                .collect::<Result<_, _>>()
                .map_err(|_| {
                    AppError::Config(format!("rate target must be \"H1,L2,EV\", got {spec:?}"))
                })?;
            if parts.len() != 3 {
                return Err(AppError::Config(format!(
                    "rate target must have 3 entries, got {}",
                    parts.len()
                )));
            }
            cfg.rate_target = Some(RateTarget {
                h1: parts[0],
                l2: parts[1],
                eigenvalue: parts[2],
                tolerance: self
                    .rate_tolerance
                    .or(cfg.rate_target.map(|r| r.tolerance))
                    .unwrap_or_else(default_rate_tolerance),
            });
        } else if let (Some(tol), Some(rt)) = (self.rate_tolerance, cfg.rate_target.as_mut()) {
            rt.tolerance = tol;
        }
        cfg.resolve()
    }
}

/// A validated configuration with all defaults filled in.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub omega: f64,
    pub degree: usize,
    pub smoothness: usize,
    pub schedule: Vec<usize>,
    pub angular_factor: usize,
    pub mu: MuSetting,
    pub mesh: MeshKind,
    pub quadrature: usize,
    pub n_ev: usize,
    pub target: Target,
    pub output: Option<PathBuf>,
    pub seed: u64,
    pub rate_target: Option<RateTarget>,
    pub num_arcs: usize,
}

impl ExperimentConfig {
    pub fn resolve(&self) -> Result<Resolved, AppError> {
        let geo = SectorGeometry::new(self.omega)
            .map_err(|e| AppError::Config(format!("omega = {:?}: {e}", self.omega)))?;
        let num_arcs = geo.num_arcs();
        let p = self.degree;
        if p < 2 {
            return Err(AppError::Config(format!(
                "degree must be at least 2, got {p}"
            )));
        }
        let k = self.smoothness.unwrap_or(p - 1);
        if k + 1 > p {
            return Err(AppError::Config(format!(
                "smoothness {k} needs degree at least {}, got {p}",
                k + 1
            )));
        }
        if self.mesh == MeshKind::Hierarchical && k + 1 != p {
            return Err(AppError::Config(format!(
                "hierarchical meshes fix smoothness at p-1 = {}, got {k}",
                p - 1
            )));
        }
        if self.schedule.is_empty() {
            return Err(AppError::Config("schedule must not be empty".into()));
        }
        if self.schedule[0] == 0 || self.schedule.windows(2).any(|w| w[1] <= w[0]) {
            return Err(AppError::Config(format!(
                "schedule must be positive and strictly increasing, got {:?}",
                self.schedule
            )));
        }
        if self.mesh == MeshKind::Hierarchical {
            let base = self.schedule[0];
            for (t, &j1) in self.schedule.iter().enumerate() {
                if j1 != base << t {
                    return Err(AppError::Config(format!(
                        "hierarchical schedules double each level: expected {}, got {j1}",
                        base << t
                    )));
                }
            }
        }
        // Tensor runs default to the arc count (J2 = n_arc * J1); the
        // hierarchical level-0 ring stays at one angular cell per arc, which
        // keeps physical cells isotropic as the levels double outward.
        let factor = self.angular_factor.unwrap_or(match self.mesh {
            MeshKind::Tensor => num_arcs,
            MeshKind::Hierarchical => 1,
        });
        if factor == 0 {
            return Err(AppError::Config("angular factor must be positive".into()));
        }
        for &j1 in &self.schedule {
            if (factor * j1) % num_arcs != 0 {
                return Err(AppError::Config(format!(
                    "angular count {} is not a multiple of the {num_arcs} arcs",
                    factor * j1
                )));
            }
        }
        if let MuSetting::Fixed(v) = self.mu {
            if !(v > 0.0 && v <= 1.0) {
                return Err(AppError::Config(format!(
                    "mu must lie in (0, 1], got {v:?}"
                )));
            }
        }
        if !(1..=60).contains(&self.quadrature) {
            return Err(AppError::Config(format!(
                "quadrature points per direction must lie in 1..=60, got {}",
                self.quadrature
            )));
        }
        if self.n_ev == 0 {
            return Err(AppError::Config("n_ev must be positive".into()));
        }
        if let Some(rt) = self.rate_target {
            if !(rt.tolerance > 0.0) {
                return Err(AppError::Config(format!(
                    "rate tolerance must be positive, got {:?}",
                    rt.tolerance
                )));
            }
            if self.schedule.len() < 3 {
                return Err(AppError::Config(
                    "rate targets need a schedule with at least 3 levels".into(),
                ));
            }
        }
        Ok(Resolved {
            omega: self.omega,
            degree: p,
            smoothness: k,
            schedule: self.schedule.clone(),
            angular_factor: factor,
            mu: self.mu,
            mesh: self.mesh,
            quadrature: self.quadrature,
            n_ev: self.n_ev,
            target: self.target,
            output: self.output.clone(),
            seed: self.seed,
            rate_target: self.rate_target,
            num_arcs,
        })
    }
}

impl Resolved {
    /// Bessel order of the angular mode `k`.
    pub fn nu(&self, k: usize) -> f64 {
        k as f64 * PI / self.omega
    }

    /// Grading exponent actually used by a run.
    ///
    /// "auto" resolves from the target: per-mode rule on tensor meshes
    /// (smooth modes stay uniform), plain `0.9 nu / p` on hierarchical ones
    /// and for whole-spectrum runs (based on the first angular mode).
    pub fn resolve_mu(&self) -> f64 {
        match self.mu {
            MuSetting::Fixed(v) => v,
            MuSetting::Auto(_) => match self.target {
                Target::Mode([k, _]) => match self.mesh {
                    MeshKind::Tensor => suggest_mu_for_mode(self.nu(k), self.degree),
                    MeshKind::Hierarchical => suggest_mu(self.nu(k), self.degree),
                },
                Target::Spectrum(_) => suggest_mu(self.nu(1), self.degree),
            },
        }
    }

    /// Resolved settings as CSV header comments, stable order.
    pub fn header(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("# omega = {:?}\n", self.omega));
        s.push_str(&format!("# degree = {}\n", self.degree));
        s.push_str(&format!("# smoothness = {}\n", self.smoothness));
        let sched: Vec<String> = self.schedule.iter().map(|j| j.to_string()).collect();
        s.push_str(&format!("# schedule = {}\n", sched.join(" ")));
        s.push_str(&format!("# angular_factor = {}\n", self.angular_factor));
        s.push_str(&format!("# mesh = {}\n", self.mesh.label()));
        s.push_str(&format!("# mu = {}\n", self.mu.label()));
        s.push_str(&format!("# mu_resolved = {:?}\n", self.resolve_mu()));
        s.push_str(&format!("# quadrature = {}\n", self.quadrature));
        s.push_str(&format!("# n_ev = {}\n", self.n_ev));
        s.push_str(&format!("# target = {}\n", self.target.label()));
        s.push_str(&format!("# seed = {}\n", self.seed));
        if let Some(rt) = self.rate_target {
            s.push_str(&format!(
                "# rate_target = {:?} {:?} {:?} (tolerance {:?})\n",
                rt.h1, rt.l2, rt.eigenvalue, rt.tolerance
            ));
        }
        s.push_str(
            "# normalization = discrete modes scaled to the exact quadrature \
             L2 norm with positive correlation\n",
        );
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_is_lossless() {
        let cfg = ExperimentConfig {
            omega: 0.1 + 0.2,
            degree: 3,
            smoothness: Some(0),
            schedule: vec![3, 5, 9],
            angular_factor: Some(8),
            mu: MuSetting::Fixed(1.0 / 3.0),
            mesh: MeshKind::Hierarchical,
            quadrature: 7,
            n_ev: 5,
            target: Target::Mode([2, 1]),
            output: Some(PathBuf::from("out.csv")),
            seed: 99,
            rate_target: Some(RateTarget {
                h1: 2.0,
                l2: 3.0,
                eigenvalue: 4.0,
                tolerance: 0.2,
            }),
        };
        let text = toml::to_string(&cfg).unwrap();
        let back: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(cfg, back);

        let auto = ExperimentConfig::default();
        let text = toml::to_string(&auto).unwrap();
        let back: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(auto, back);
    }

    #[test]
    fn keyword_fields_parse_from_toml() {
        let cfg: ExperimentConfig =
            toml::from_str("mu = \"auto\"\ntarget = \"spectrum\"\nmesh = \"hierarchical\"")
                .unwrap();
        assert_eq!(cfg.mu, MuSetting::AUTO);
        assert_eq!(cfg.target, Target::SPECTRUM);
        assert_eq!(cfg.mesh, MeshKind::Hierarchical);
        let cfg: ExperimentConfig = toml::from_str("mu = 0.45\ntarget = [2, 1]").unwrap();
        assert_eq!(cfg.mu, MuSetting::Fixed(0.45));
        assert_eq!(cfg.target, Target::Mode([2, 1]));
        assert!(toml::from_str::<ExperimentConfig>("unknown_key = 1").is_err());
    }

    #[test]
    fn validation_rejects_bad_settings() {
        let bad = |edit: fn(&mut ExperimentConfig)| {
            let mut cfg = ExperimentConfig::default();
            edit(&mut cfg);
            cfg.resolve().is_err()
        };
        assert!(bad(|c| c.degree = 1));
        assert!(bad(|c| c.smoothness = Some(2)));
        assert!(bad(|c| c.schedule = vec![]));
        assert!(bad(|c| c.schedule = vec![4, 4]));
        assert!(bad(|c| c.omega = -1.0));
        assert!(bad(|c| c.omega = 20.0));
        assert!(bad(|c| c.mu = MuSetting::Fixed(0.0)));
        assert!(bad(|c| c.mu = MuSetting::Fixed(1.5)));
        assert!(bad(|c| c.n_ev = 0));
        assert!(bad(|c| {
            c.mesh = MeshKind::Hierarchical;
            c.schedule = vec![4, 8, 12];
        }));
        assert!(bad(|c| {
            c.mesh = MeshKind::Hierarchical;
            c.smoothness = Some(0);
        }));
        assert!(ExperimentConfig::default().resolve().is_ok());
    }

    #[test]
    fn auto_mu_follows_the_grading_rules() {
        let mut cfg = ExperimentConfig {
            target: Target::Mode([1, 1]),
            ..ExperimentConfig::default()
        };
        // nu = 1/2 on the full disk, p = 2.
        assert!((cfg.resolve().unwrap().resolve_mu() - 0.225).abs() < 1e-15);
        // Smooth mode: tensor meshes stay uniform, hierarchical ones grade.
        cfg.target = Target::Mode([2, 1]);
        assert_eq!(cfg.resolve().unwrap().resolve_mu(), 1.0);
        cfg.mesh = MeshKind::Hierarchical;
        cfg.schedule = vec![4, 8, 16];
        assert!((cfg.resolve().unwrap().resolve_mu() - 0.45).abs() < 1e-15);
        // Explicit values pass through.
        cfg.mu = MuSetting::Fixed(0.3);
        assert_eq!(cfg.resolve().unwrap().resolve_mu(), 0.3);
    }
}

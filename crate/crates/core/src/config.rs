//! Declarative experiment configuration.
//!
//! Experiments are TOML files with one block per concern: geometry, twist,
//! bundle, background metric, solver schedule, analyses, output.  Parsing is
//! strict (unknown keys are schema errors), validation is eager (preset
//! grammar, ε monotonicity, resolution floor), and the builder glue turns a
//! validated config into live geometry/bundle/metric objects.
//!
//! Preset grammar:
//!
//! * geometry metric: `flat`, `conformal:cos-x` (log-factor a·cos(2πx) on the
//!   first real axis, amplitude from `conformal_amplitude`)
//! * twist: `trivial`, `global-b:omega` (B = c·ω with c from `coefficient`),
//!   `clock-shift:<r>`
//! * bundle: `trivial:<r>`, `clock-shift:<r>`, `theta:<d>` (one degree per
//!   complex axis, colon-separated), `sum:[<preset>,<preset>,…]`
//!
//! Bundle presets carry their canonical twist; a non-trivial twist block is
//! attached on top and must agree with the bundle's own cocycle.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::bundle::{
    attach_twist, build_clock_shift_bundle, build_compatible_metric, build_direct_sum,
    build_theta_bundle, build_trivial_bundle, MetricField, MetricSeed, TwistedBundle,
};
use crate::container::FieldContainer;
use crate::geometry::TorusGeometry;
use crate::grid::Grid;
use crate::stability::SubbundleCandidate;
use crate::twist::{build_clock_shift_twist, build_global_b};
use crate::{solver, Error, Result};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Experiment id used in reports; defaults to the file stem.
    #[serde(default)]
    pub name: Option<String>,
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub twist: TwistConfig,
    pub bundle: BundleConfig,
    #[serde(default)]
    pub background: BackgroundConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub analyses: AnalysesConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    /// Complex dimension, 1 or 2.
    pub dim: usize,
    #[serde(default = "lattice_default")]
    pub lattice: String,
    /// Grid points per real axis.
    pub resolution: usize,
    #[serde(default = "metric_default")]
    pub metric: String,
    #[serde(default)]
    pub conformal_amplitude: f64,
}

fn lattice_default() -> String {
    "square".into()
}

fn metric_default() -> String {
    "flat".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwistConfig {
    pub preset: String,
    /// Coefficient c for `global-b:omega`.
    #[serde(default)]
    pub coefficient: f64,
}

impl Default for TwistConfig {
    fn default() -> TwistConfig {
        TwistConfig { preset: "trivial".into(), coefficient: 0.0 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleConfig {
    pub preset: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackgroundConfig {
    /// `natural` or `identity`.
    #[serde(default = "seed_default")]
    pub seed: String,
    /// Trace-normalize the background before solving.
    #[serde(default = "yes")]
    pub normalize: bool,
}

fn seed_default() -> String {
    "natural".into()
}

fn yes() -> bool {
    true
}

impl Default for BackgroundConfig {
    fn default() -> BackgroundConfig {
        BackgroundConfig { seed: seed_default(), normalize: true }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// Strictly decreasing ε values in (0, 1].
    #[serde(default = "schedule_default")]
    pub epsilon_schedule: Vec<f64>,
    #[serde(default = "tol_default")]
    pub residual_tol: f64,
    #[serde(default = "iters_default")]
    pub max_iters: usize,
    #[serde(default = "step_default")]
    pub step_size: f64,
}

fn schedule_default() -> Vec<f64> {
    vec![0.3, 0.1, 0.03, 0.01]
}

fn tol_default() -> f64 {
    1e-6
}

fn iters_default() -> usize {
    400
}

fn step_default() -> f64 {
    1.0
}

impl Default for SolverConfig {
    fn default() -> SolverConfig {
        SolverConfig {
            epsilon_schedule: schedule_default(),
            residual_tol: tol_default(),
            max_iters: iters_default(),
            step_size: step_default(),
        }
    }
}

impl SolverConfig {
    pub fn options(&self, epsilon: f64) -> solver::SolverOptions {
        let mut o = solver::SolverOptions::new(epsilon);
        o.residual_tol = self.residual_tol;
        o.max_iters = self.max_iters;
        o.step_size = self.step_size;
        o
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysesConfig {
    /// Čech validation of bundle and twist data.
    #[serde(default = "yes")]
    pub validate: bool,
    /// Chern–Weil numbers of the background metric.
    #[serde(default = "yes")]
    pub chern: bool,
    /// Discriminant integral and its norm decomposition (n = 2 only).
    #[serde(default)]
    pub bogomolov: bool,
    /// ε-continuation sweep.
    #[serde(default = "yes")]
    pub sweep: bool,
    /// Report the a-priori sup bounds on log h per solve.
    #[serde(default = "yes")]
    pub log_bounds: bool,
    /// Report the integrated energy identity per solve.
    #[serde(default = "yes")]
    pub energy_identity: bool,
    /// Spectral probe on the sweep endpoint.
    #[serde(default)]
    pub probe: bool,
    /// Slope verdicts against these candidates.
    #[serde(default)]
    pub candidates: Vec<CandidateConfig>,
}

impl Default for AnalysesConfig {
    fn default() -> AnalysesConfig {
        AnalysesConfig {
            validate: true,
            chern: true,
            bogomolov: false,
            sweep: true,
            log_bounds: true,
            energy_identity: true,
            probe: false,
            candidates: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateConfig {
    pub label: String,
    /// `block:<lo>:<hi>` (frame indices lo..hi) or `full`.
    #[serde(default)]
    pub builder: Option<String>,
    /// Alternatively: a field container holding the projector…
    #[serde(default)]
    pub container: Option<PathBuf>,
    /// …the endo field name inside it…
    #[serde(default)]
    pub field: Option<String>,
    /// …and its declared rank.
    #[serde(default)]
    pub rank: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "out_default")]
    pub directory: PathBuf,
    #[serde(default = "yes")]
    pub csv: bool,
}

fn out_default() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputConfig {
    fn default() -> OutputConfig {
        OutputConfig { directory: out_default(), csv: true }
    }
}

/// Parsed bundle preset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BundleSpec {
    Trivial(usize),
    ClockShift(usize),
    Theta(Vec<i64>),
    Sum(Vec<BundleSpec>),
}

/// Parsed geometry metric preset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricPreset {
    Flat,
    ConformalCosX,
}

/// Parsed twist preset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TwistPreset {
    Trivial,
    GlobalOmega,
    ClockShift(usize),
}

pub fn parse_metric_preset(s: &str) -> Result<MetricPreset> {
    match s {
        "flat" => Ok(MetricPreset::Flat),
        "conformal:cos-x" => Ok(MetricPreset::ConformalCosX),
        other => Err(Error::Config(format!(
            "unknown metric preset '{other}' (expected flat or conformal:cos-x)"
        ))),
    }
}

pub fn parse_twist_preset(s: &str) -> Result<TwistPreset> {
    if s == "trivial" {
        return Ok(TwistPreset::Trivial);
    }
    if s == "global-b:omega" {
        return Ok(TwistPreset::GlobalOmega);
    }
    if let Some(arg) = s.strip_prefix("clock-shift:") {
        let r: usize = arg
            .parse()
            .map_err(|_| Error::Config(format!("bad clock-shift order in twist preset '{s}'")))?;
        if r < 1 {
            return Err(Error::Config(format!("twist preset '{s}': order must be ≥ 1")));
        }
        return Ok(TwistPreset::ClockShift(r));
    }
    Err(Error::Config(format!(
        "unknown twist preset '{s}' (expected trivial, global-b:omega or clock-shift:<r>)"
    )))
}

fn parse_simple_bundle(s: &str) -> Result<BundleSpec> {
    if let Some(arg) = s.strip_prefix("trivial:") {
        let r: usize =
            arg.parse().map_err(|_| Error::Config(format!("bad rank in preset '{s}'")))?;
        if r == 0 {
            return Err(Error::Config(format!("preset '{s}': rank must be ≥ 1")));
        }
        return Ok(BundleSpec::Trivial(r));
    }
    if let Some(arg) = s.strip_prefix("clock-shift:") {
        let r: usize =
            arg.parse().map_err(|_| Error::Config(format!("bad rank in preset '{s}'")))?;
        if r < 2 {
            return Err(Error::Config(format!("preset '{s}': clock-shift needs rank ≥ 2")));
        }
        return Ok(BundleSpec::ClockShift(r));
    }
    if let Some(arg) = s.strip_prefix("theta:") {
        let degrees: Result<Vec<i64>> = arg
            .split(':')
            .map(|d| {
                d.parse::<i64>()
                    .map_err(|_| Error::Config(format!("bad degree '{d}' in preset '{s}'")))
            })
            .collect();
        let degrees = degrees?;
        if degrees.is_empty() {
            return Err(Error::Config(format!("preset '{s}': no degrees")));
        }
        return Ok(BundleSpec::Theta(degrees));
    }
    Err(Error::Config(format!(
        "unknown bundle preset '{s}' (expected trivial:<r>, clock-shift:<r>, theta:<d…> or sum:[…])"
    )))
}

pub fn parse_bundle_preset(s: &str) -> Result<BundleSpec> {
    if let Some(list) = s.strip_prefix("sum:[") {
        let inner = list
            .strip_suffix(']')
            .ok_or_else(|| Error::Config(format!("preset '{s}': missing closing bracket")))?;
        let parts: Result<Vec<BundleSpec>> = inner
            .split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(parse_simple_bundle)
            .collect();
        let parts = parts?;
        if parts.is_empty() {
            return Err(Error::Config(format!("preset '{s}': empty sum")));
        }
        return Ok(BundleSpec::Sum(parts));
    }
    parse_simple_bundle(s)
}

impl BundleSpec {
    pub fn rank(&self) -> usize {
        match self {
            BundleSpec::Trivial(r) | BundleSpec::ClockShift(r) => *r,
            BundleSpec::Theta(_) => 1,
            BundleSpec::Sum(parts) => parts.iter().map(BundleSpec::rank).sum(),
        }
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        match self {
            BundleSpec::Theta(d) if d.len() != dim => Err(Error::Config(format!(
                "theta preset has {} degrees for complex dimension {dim}",
                d.len()
            ))),
            BundleSpec::Sum(parts) => parts.iter().try_for_each(|p| p.check_dim(dim)),
            _ => Ok(()),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<ExperimentConfig> {
        toml::from_str(text).map_err(|e| Error::Parse(format!("config schema: {e}")))
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        let mut cfg = ExperimentConfig::from_toml_str(&text)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        if cfg.name.is_none() {
            cfg.name = path.file_stem().map(|s| s.to_string_lossy().into_owned());
        }
        Ok(cfg)
    }

    /// Eager invariant checks: preset grammar, dimension agreement, schedule
    /// monotonicity, resolution floor, candidate source uniqueness.
    pub fn validate(&self) -> Result<()> {
        let g = &self.geometry;
        if g.dim != 1 && g.dim != 2 {
            return Err(Error::Config(format!("dim {} unsupported (1 or 2)", g.dim)));
        }
        if g.lattice != "square" {
            return Err(Error::Config(format!("unknown lattice '{}' (square only)", g.lattice)));
        }
        if g.resolution < 8 {
            return Err(Error::Config(format!("resolution {} below the floor 8", g.resolution)));
        }
        if g.resolution % 2 != 0 {
            return Err(Error::Config(format!(
                "resolution {} must be even (band covers split axes in half)",
                g.resolution
            )));
        }
        parse_metric_preset(&g.metric)?;
        if !g.conformal_amplitude.is_finite() {
            return Err(Error::Config("conformal amplitude must be finite".into()));
        }
        parse_twist_preset(&self.twist.preset)?;
        let spec = parse_bundle_preset(&self.bundle.preset)?;
        spec.check_dim(g.dim)?;
        match self.background.seed.as_str() {
            "natural" | "identity" => {}
            other => {
                return Err(Error::Config(format!(
                    "unknown background seed '{other}' (natural or identity)"
                )))
            }
        }
        let sched = &self.solver.epsilon_schedule;
        if self.analyses.sweep && sched.is_empty() {
            return Err(Error::Config("sweep enabled with empty ε schedule".into()));
        }
        for &e in sched {
            if !(e > 0.0 && e <= 1.0) {
                return Err(Error::Config(format!("ε = {e} outside (0, 1]")));
            }
        }
        for w in sched.windows(2) {
            if w[1] >= w[0] {
                return Err(Error::Config(format!(
                    "ε schedule must be strictly decreasing ({} then {})",
                    w[0], w[1]
                )));
            }
        }
        if !(self.solver.residual_tol > 0.0) {
            return Err(Error::Config("residual_tol must be positive".into()));
        }
        if self.solver.max_iters == 0 {
            return Err(Error::Config("max_iters must be ≥ 1".into()));
        }
        if !(self.solver.step_size > 0.0 && self.solver.step_size <= 1.0) {
            return Err(Error::Config("step_size must lie in (0, 1]".into()));
        }
        if self.analyses.bogomolov && g.dim != 2 {
            return Err(Error::Config("bogomolov analysis needs dim = 2".into()));
        }
        if self.analyses.probe && !self.analyses.sweep {
            return Err(Error::Config("probe needs the sweep enabled".into()));
        }
        for cand in &self.analyses.candidates {
            let from_builder = cand.builder.is_some();
            let from_file = cand.container.is_some();
            if from_builder == from_file {
                return Err(Error::Config(format!(
                    "candidate '{}': declare exactly one of builder or container",
                    cand.label
                )));
            }
            if let Some(b) = &cand.builder {
                parse_candidate_builder(b)?;
            }
            if from_file && (cand.field.is_none() || cand.rank.is_none()) {
                return Err(Error::Config(format!(
                    "candidate '{}': container sources need field and rank",
                    cand.label
                )));
            }
        }
        Ok(())
    }
}

/// `block:<lo>:<hi>` → lo..hi, `full` → None (whole bundle).
pub fn parse_candidate_builder(s: &str) -> Result<Option<(usize, usize)>> {
    if s == "full" {
        return Ok(None);
    }
    if let Some(arg) = s.strip_prefix("block:") {
        let mut it = arg.split(':');
        let (lo, hi) = (it.next(), it.next());
        if let (Some(lo), Some(hi), None) = (lo, hi, it.next()) {
            let lo: usize =
                lo.parse().map_err(|_| Error::Config(format!("bad block bound in '{s}'")))?;
            let hi: usize =
                hi.parse().map_err(|_| Error::Config(format!("bad block bound in '{s}'")))?;
            if lo >= hi {
                return Err(Error::Config(format!("empty block in builder '{s}'")));
            }
            return Ok(Some((lo, hi)));
        }
        return Err(Error::Config(format!("builder '{s}' needs block:<lo>:<hi>")));
    }
    Err(Error::Config(format!("unknown candidate builder '{s}' (block:<lo>:<hi> or full)")))
}

pub fn build_geometry(cfg: &GeometryConfig) -> Result<TorusGeometry> {
    let grid = Grid::uniform(cfg.dim, cfg.resolution)?;
    let geo = TorusGeometry::flat(grid);
    match parse_metric_preset(&cfg.metric)? {
        MetricPreset::Flat => Ok(geo),
        MetricPreset::ConformalCosX => {
            let a = cfg.conformal_amplitude;
            let phi: Vec<f64> = (0..geo.grid.npoints())
                .map(|p| {
                    let x = geo.grid.coord_value(0, geo.grid.coords(p)[0]);
                    a * (std::f64::consts::TAU * x).cos()
                })
                .collect();
            geo.with_conformal(phi)
        }
    }
}

fn build_simple_bundle(spec: &BundleSpec, grid: &Grid) -> Result<TwistedBundle> {
    match spec {
        BundleSpec::Trivial(r) => build_trivial_bundle(grid, *r),
        BundleSpec::ClockShift(r) => build_clock_shift_bundle(grid, *r),
        BundleSpec::Theta(d) => build_theta_bundle(grid, d),
        BundleSpec::Sum(_) => unreachable!("sums are flattened by build_bundle"),
    }
}

pub fn build_bundle(cfg: &BundleConfig, grid: &Grid) -> Result<TwistedBundle> {
    let spec = parse_bundle_preset(&cfg.preset)?;
    match &spec {
        BundleSpec::Sum(parts) => {
            let built: Result<Vec<TwistedBundle>> =
                parts.iter().map(|p| build_simple_bundle(p, grid)).collect();
            let built = built?;
            let refs: Vec<&TwistedBundle> = built.iter().collect();
            build_direct_sum(&refs)
        }
        simple => build_simple_bundle(simple, grid),
    }
}

/// Attach the configured twist on top of the bundle's canonical one.
/// `trivial` keeps the builder twist untouched.
pub fn apply_twist(
    bundle: TwistedBundle,
    cfg: &TwistConfig,
    geo: &TorusGeometry,
) -> Result<TwistedBundle> {
    match parse_twist_preset(&cfg.preset)? {
        TwistPreset::Trivial => Ok(bundle),
        TwistPreset::GlobalOmega => {
            let mut form = geo.omega();
            for v in form.data.iter_mut() {
                *v *= cfg.coefficient;
            }
            let twist = build_global_b(bundle.cover(), &form)?;
            attach_twist(&bundle, twist)
        }
        TwistPreset::ClockShift(r) => {
            let twist = build_clock_shift_twist(bundle.cover(), r)?;
            attach_twist(&bundle, twist)
        }
    }
}

pub fn build_background(cfg: &BackgroundConfig, bundle: &TwistedBundle) -> Result<MetricField> {
    let seed = match cfg.seed.as_str() {
        "identity" => MetricSeed::Identity,
        "natural" => MetricSeed::Natural,
        other => return Err(Error::Config(format!("unknown background seed '{other}'"))),
    };
    build_compatible_metric(bundle, seed)
}

/// Materialize configured candidates against a live bundle and background.
pub fn build_candidates(
    cfgs: &[CandidateConfig],
    bundle: &TwistedBundle,
    base_dir: &Path,
) -> Result<Vec<SubbundleCandidate>> {
    let r = bundle.rank;
    let mut out = Vec::with_capacity(cfgs.len());
    for cand in cfgs {
        if let Some(b) = &cand.builder {
            let range = match parse_candidate_builder(b)? {
                None => 0..r,
                Some((lo, hi)) => lo..hi,
            };
            out.push(crate::stability::block_candidate(bundle, range, &cand.label)?);
            continue;
        }
        let rel = cand.container.as_ref().expect("validated: container set");
        let path = if rel.is_absolute() { rel.clone() } else { base_dir.join(rel) };
        let box_ = FieldContainer::read_from(&path)?;
        box_.check_cover(bundle.cover())?;
        let field = cand.field.as_deref().expect("validated: field set");
        let endo = box_.endo(field)?;
        if endo.r != r {
            return Err(Error::ShapeMismatch(format!(
                "candidate '{}': projector rank {} vs bundle rank {r}",
                cand.label, endo.r
            )));
        }
        out.push(SubbundleCandidate {
            projector: endo.clone(),
            label: cand.label.clone(),
            declared_rank: cand.rank.expect("validated: rank set"),
        });
    }
    Ok(out)
}

/// (name, summary) pairs for every preset the config grammar accepts.
pub fn preset_catalog() -> Vec<(&'static str, &'static str)> {
    vec![
        ("flat", "geometry: flat square torus"),
        ("conformal:cos-x", "geometry: ω = e^φ ω̃ with φ = a·cos(2πx)"),
        ("trivial", "twist: B = 0, β = 0, α = 1"),
        ("global-b:omega", "twist: B = c·ω on every chart, β = 0, α = 1"),
        ("clock-shift:<r>", "twist: order-r constant-phase cocycle (also a bundle preset)"),
        ("trivial:<r>", "bundle: trivial rank-r bundle, identity transitions"),
        ("theta:<d…>", "bundle: theta-multiplier line bundle, one degree per complex axis"),
        ("sum:[…]", "bundle: direct sum of simple presets, e.g. sum:[theta:1,theta:-1]"),
        ("natural", "background seed: multiplier-compatible Gaussian profile per block"),
        ("identity", "background seed: identity Gram glued through the cover"),
    ]
}

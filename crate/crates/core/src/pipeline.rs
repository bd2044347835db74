//! End-to-end driver: zero sets in, contour, measures, placed zeros and a
//! verification record out.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::blaschke::{split_by_contour_with_radius, BlaschkeProduct, SplitResult};
use crate::contour::{
    build_contour_with, carleson_norm, check_exterior_witness, check_inner_bound, dist_to_component,
    dyadic_carleson_sup, point_in_interior, Atom, ClassificationStats, ClassifiedSquare, Containment, Contour,
    ContourBuild, ContourConfig, EdgeKind, ExteriorCheck, InnerCheck,
};
use crate::discretize::{discretize, ArcSegment, DiscretizationResult};
use crate::dyadic::{DyadicSquare, Region};
use crate::error::{Error, Result};
use crate::geometry::{build_net, point_at_distance, DiskPoint};
use crate::harmonic::{
    harmonic_measure, mean_value_check, mean_value_error, BoundaryMeasure, HarmonicConfig, HarmonicDomain,
};
use crate::verify::{
    admissible, arc_class_diagnostics, delta_floor_check, interpolation_report, sup_modulus_diff_split,
    DeltaFloorReport, InterpolationReport, SupDiffReport,
};

pub const SCHEMA_VERSION: u32 = 1;

// ---------------------------------------------------------------------------
// Generators

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorSpec {
    /// `count` zeros uniform (hyperbolic area) in the ball of radius `radius` around `center`.
    Cluster { count: usize, center: DiskPoint, radius: f64 },
    /// `r_k = 1 − ratio^k`, `k = 1..=count`, on one ray.
    Radial { count: usize, ratio: f64, angle: f64 },
    /// Area-uniform in `|z| ≤ 1 − 2^−max_depth`.
    Uniform { count: usize, max_depth: u32 },
    /// Uniform angles in `[theta0, theta1]` on the circle `|z| = radius`.
    Curve { count: usize, radius: f64, theta0: f64, theta1: f64 },
}

impl GeneratorSpec {
    /// Parses `cluster(count, re[, im], radius)`, `radial(count, ratio[, angle])`,
    /// `uniform(count, max_depth)` or `curve(count, radius, theta0, theta1)`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let open = s.find('(').ok_or_else(|| Error::Parse(format!("generator spec `{s}` lacks `(`")))?;
        if !s.ends_with(')') {
            return Err(Error::Parse(format!("generator spec `{s}` lacks `)`")));
        }
        let name = s[..open].trim().to_ascii_lowercase();
        let args: Vec<f64> = s[open + 1..s.len() - 1]
            .split(',')
            .filter(|a| !a.trim().is_empty())
            .map(|a| a.trim().parse::<f64>().map_err(|e| Error::Parse(format!("`{a}`: {e}"))))
            .collect::<Result<_>>()?;
        let count = |v: f64| -> Result<usize> {
            if v < 1.0 || v.fract() != 0.0 {
                return Err(Error::InvalidParameter(format!("count must be a positive integer, got {v}")));
            }
            Ok(v as usize)
        };
        let bad = || Error::Parse(format!("wrong number of arguments in `{s}`"));
        let spec = match name.as_str() {
            "cluster" => match *args.as_slice() {
                [n, re, r] => Self::Cluster { count: count(n)?, center: DiskPoint::new(re, 0.0)?, radius: r },
                [n, re, im, r] => Self::Cluster { count: count(n)?, center: DiskPoint::new(re, im)?, radius: r },
                _ => return Err(bad()),
            },
            "radial" => match *args.as_slice() {
                [n, q] => Self::Radial { count: count(n)?, ratio: q, angle: 0.0 },
                [n, q, a] => Self::Radial { count: count(n)?, ratio: q, angle: a },
                _ => return Err(bad()),
            },
            "uniform" => match args.as_slice() {
                &[n, d] => Self::Uniform { count: count(n)?, max_depth: d as u32 },
                _ => return Err(bad()),
            },
            "curve" => match args.as_slice() {
                &[n, r, t0, t1] => Self::Curve { count: count(n)?, radius: r, theta0: t0, theta1: t1 },
                _ => return Err(bad()),
            },
            other => return Err(Error::Parse(format!("unknown generator `{other}`"))),
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Self::Cluster { count, radius, .. } if count == 0 || !(radius >= 0.0) => {}
            Self::Radial { count, ratio, .. } if count == 0 || !(ratio > 0.0 && ratio < 1.0) => {}
            Self::Uniform { count, max_depth } if count == 0 || max_depth == 0 || max_depth > 40 => {}
            Self::Curve { count, radius, .. } if count == 0 || !(0.0..1.0).contains(&radius) => {}
            _ => return Ok(()),
        }
        Err(Error::InvalidParameter(format!("invalid generator parameters {self:?}")))
    }

    pub fn label(&self) -> String {
        match *self {
            Self::Cluster { count, center, radius } => format!("cluster({count},{},{},{radius})", center.re, center.im),
            Self::Radial { count, ratio, angle } => format!("radial({count},{ratio},{angle})"),
            Self::Uniform { count, max_depth } => format!("uniform({count},{max_depth})"),
            Self::Curve { count, radius, theta0, theta1 } => format!("curve({count},{radius},{theta0},{theta1})"),
        }
    }
}

pub fn generate(spec: &GeneratorSpec, seed: u64) -> Result<Vec<DiskPoint>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let out = match *spec {
        GeneratorSpec::Cluster { count, center, radius } => (0..count)
            .map(|_| {
                // Hyperbolic area of a ball of radius ρ is π sinh²ρ.
                let rho = (rng.random::<f64>().sqrt() * radius.sinh()).asinh();
                point_at_distance(center, rng.random::<f64>() * TAU, rho)
            })
            .collect(),
        GeneratorSpec::Radial { count, ratio, angle } => {
            (1..=count).map(|k| DiskPoint::from_polar(1.0 - ratio.powi(k as i32), angle)).collect::<Result<_>>()?
        }
        GeneratorSpec::Uniform { count, max_depth } => {
            let r_max = 1.0 - 0.5f64.powi(max_depth as i32);
            (0..count)
                .map(|_| DiskPoint::from_polar(r_max * rng.random::<f64>().sqrt(), rng.random::<f64>() * TAU))
                .collect::<Result<_>>()?
        }
        GeneratorSpec::Curve { count, radius, theta0, theta1 } => (0..count)
            .map(|_| DiskPoint::from_polar(radius, theta0 + (theta1 - theta0) * rng.random::<f64>()))
            .collect::<Result<_>>()?,
    };
    Ok(out)
}

// ---------------------------------------------------------------------------
// Files

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroEntry {
    pub re: f64,
    pub im: f64,
    #[serde(default = "one")]
    pub multiplicity: u32,
}

fn one() -> u32 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroSetFile {
    pub schema_version: u32,
    pub zeros: Vec<ZeroEntry>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ZeroSetInput {
    File(ZeroSetFile),
    Bare(Vec<ZeroEntry>),
}

fn check_version(found: u32) -> Result<()> {
    if found != SCHEMA_VERSION {
        return Err(Error::SchemaVersion { found, expected: SCHEMA_VERSION });
    }
    Ok(())
}

pub fn parse_zero_set(text: &str) -> Result<Vec<DiskPoint>> {
    let input: ZeroSetInput = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let entries = match input {
        ZeroSetInput::File(f) => {
            check_version(f.schema_version)?;
            f.zeros
        }
        ZeroSetInput::Bare(v) => v,
    };
    let mut out = Vec::new();
    for e in entries {
        let z = DiskPoint::new(e.re, e.im)?;
        out.extend(std::iter::repeat_n(z, e.multiplicity as usize));
    }
    Ok(out)
}

pub fn zero_set_json(zeros: &[DiskPoint]) -> Result<String> {
    let mut entries: Vec<ZeroEntry> = Vec::new();
    let mut index: BTreeMap<(u64, u64), usize> = BTreeMap::new();
    for z in zeros {
        let key = (z.re.to_bits(), z.im.to_bits());
        match index.get(&key) {
            Some(&i) => entries[i].multiplicity += 1,
            None => {
                index.insert(key, entries.len());
                entries.push(ZeroEntry { re: z.re, im: z.im, multiplicity: 1 });
            }
        }
    }
    Ok(serde_json::to_string_pretty(&ZeroSetFile { schema_version: SCHEMA_VERSION, zeros: entries })?)
}

pub fn read_zero_set(path: &Path) -> Result<Vec<DiskPoint>> {
    parse_zero_set(&std::fs::read_to_string(path)?)
}

pub fn write_zero_set(path: &Path, zeros: &[DiskPoint]) -> Result<()> {
    std::fs::write(path, zero_set_json(zeros)?)?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContourFile {
    pub schema_version: u32,
    pub build: ContourBuild,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationFile {
    pub schema_version: u32,
    pub split: SplitResult,
    pub measures: Vec<BoundaryMeasure>,
    pub result: DiscretizationResult,
    pub mean_value: Vec<MeanValueSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasuresFile {
    pub schema_version: u32,
    pub measures: Vec<BoundaryMeasure>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

pub fn read_contour_file(path: &Path) -> Result<ContourFile> {
    let f: ContourFile =
        serde_json::from_str(&std::fs::read_to_string(path)?).map_err(|e| Error::Parse(e.to_string()))?;
    check_version(f.schema_version)?;
    Ok(f)
}

pub fn read_discretization_file(path: &Path) -> Result<DiscretizationFile> {
    let f: DiscretizationFile =
        serde_json::from_str(&std::fs::read_to_string(path)?).map_err(|e| Error::Parse(e.to_string()))?;
    check_version(f.schema_version)?;
    Ok(f)
}

// ---------------------------------------------------------------------------
// Configuration

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputSpec {
    File { path: String },
    Generated { spec: GeneratorSpec },
    Zeros { zeros: Vec<DiskPoint> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub input: InputSpec,
    pub epsilon: f64,
    pub big_n: u32,
    /// Neighborhood radius of the contour stage; `2N` when absent.
    pub k: Option<f64>,
    pub mesh: f64,
    pub d_max: u32,
    pub walks_per_source: u64,
    pub seed: u64,
    pub out: Option<String>,
    pub render: bool,
    /// Worker threads; 0 lets the runtime decide.
    pub workers: usize,
    /// Radius of the exterior audit; `K + 14` when absent.
    pub exterior_radius: Option<f64>,
    /// Radius of the `B₂` witness search; `2N + 15` when absent.
    pub witness_radius: Option<f64>,
    pub audit_samples: usize,
    pub mean_value_points: usize,
    pub telescoping_points: usize,
    pub telescoping_gate: f64,
    pub sample_budget: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: InputSpec::Zeros { zeros: Vec::new() },
            epsilon: 0.25,
            big_n: 4,
            k: None,
            mesh: 0.1,
            d_max: 16,
            walks_per_source: 100_000,
            seed: 0,
            out: None,
            render: false,
            workers: 0,
            exterior_radius: None,
            witness_radius: None,
            audit_samples: 1000,
            mean_value_points: 100,
            telescoping_points: 50,
            telescoping_gate: 0.02,
            sample_budget: 200_000,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::InvalidParameter(format!("epsilon {} not in (0,1)", self.epsilon)));
        }
        if self.big_n == 0 || self.d_max == 0 || self.walks_per_source == 0 || !(self.mesh > 0.0) {
            return Err(Error::InvalidParameter("N, d_max, walks and mesh must be positive".into()));
        }
        Ok(())
    }

    pub fn k_value(&self) -> f64 {
        self.k.unwrap_or(2.0 * self.big_n as f64)
    }

    /// The contour is built with `ε/2` and `K = 2N`.
    pub fn contour_config(&self) -> ContourConfig {
        ContourConfig {
            epsilon: 0.5 * self.epsilon,
            big_n: self.big_n,
            k: self.k,
            mesh: self.mesh,
            d_max: self.d_max,
            delta_start: None,
            sample_budget: self.sample_budget,
        }
    }

    pub fn harmonic_config(&self) -> HarmonicConfig {
        HarmonicConfig { walks_per_source: self.walks_per_source, seed: self.seed, ..Default::default() }
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let num = |v: &str| v.parse::<f64>().map_err(|e| Error::Parse(format!("{key} = {v}: {e}")));
        let int = |v: &str| v.parse::<u64>().map_err(|e| Error::Parse(format!("{key} = {v}: {e}")));
        match key {
            "input" => {
                self.input = if value.contains('(') {
                    InputSpec::Generated { spec: GeneratorSpec::parse(value)? }
                } else {
                    InputSpec::File { path: value.to_string() }
                }
            }
            "epsilon" => self.epsilon = num(value)?,
            "bign" => self.big_n = int(value)? as u32,
            "k" => self.k = Some(num(value)?),
            "mesh" => self.mesh = num(value)?,
            "dmax" => self.d_max = int(value)? as u32,
            "walks" => self.walks_per_source = int(value)?,
            "seed" => self.seed = int(value)?,
            "out" => self.out = Some(value.to_string()),
            "render" => {
                self.render = match value {
                    "true" | "1" | "yes" => true,
                    "false" | "0" | "no" => false,
                    _ => return Err(Error::Parse(format!("render = {value}: expected a boolean"))),
                }
            }
            "workers" => self.workers = int(value)? as usize,
            "exterior_radius" => self.exterior_radius = Some(num(value)?),
            "witness_radius" => self.witness_radius = Some(num(value)?),
            "audit_samples" => self.audit_samples = int(value)? as usize,
            "mean_value_points" => self.mean_value_points = int(value)? as usize,
            "telescoping_points" => self.telescoping_points = int(value)? as usize,
            "telescoping_gate" => self.telescoping_gate = num(value)?,
            "sample_budget" => self.sample_budget = int(value)?,
            other => return Err(Error::Parse(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Reads a flat `key = value` file; `#` starts a comment.
    pub fn apply_config_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) =
                line.split_once('=').ok_or_else(|| Error::Parse(format!("line {}: expected key = value", n + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn load_input(&self) -> Result<Vec<DiskPoint>> {
        match &self.input {
            InputSpec::File { path } => read_zero_set(Path::new(path)),
            InputSpec::Generated { spec } => generate(spec, self.seed),
            InputSpec::Zeros { zeros } => Ok(zeros.clone()),
        }
    }
}

// ---------------------------------------------------------------------------
// Record

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContourSummary {
    pub components: usize,
    pub delta: f64,
    pub delta_history: Vec<f64>,
    pub k: f64,
    pub lemma_epsilon: f64,
    pub arclength: f64,
    pub carleson_norm: f64,
    pub dyadic_carleson_sup: f64,
    pub scaling_holds: bool,
    pub scaling_checks: usize,
    pub region_bound_holds: bool,
    pub maximal_bad: usize,
    pub maximal_good: usize,
    pub holes: usize,
    pub stats: ClassificationStats,
    pub inner: InnerCheck,
    pub exterior: ExteriorCheck,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub b1_zeros: usize,
    pub b2_zeros: usize,
    pub witness_radius: f64,
    pub witness_coverage: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanValueSummary {
    pub component: usize,
    pub points: usize,
    pub max_residual: f64,
    /// Largest `residual / (0.01 |log|B₁(z)|| + 3σ)`.
    pub max_ratio: f64,
    pub passes: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureSummary {
    pub component: usize,
    pub sources: usize,
    pub bins: usize,
    pub raw_total: f64,
    pub renormalization: f64,
    pub stat_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationSummary {
    pub arcs: usize,
    pub max_mass_error: f64,
    pub max_moment_residual: f64,
    pub min_hyp_length: f64,
    pub log_length_floor: f64,
    pub length_floor_holds: bool,
    pub zeros_on_arcs: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsSummary {
    pub points: usize,
    pub max_identity_gap: f64,
    pub gate: f64,
    pub passes: bool,
    pub max_e_b: f64,
    pub max_e_s: f64,
    pub max_e_l: f64,
    /// SHA-256 of the serialized per-point diagnostics.
    pub digest: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationSummary {
    pub sup: SupDiffReport,
    pub sup_passes: bool,
    pub i1_odd: InterpolationReport,
    pub i1_even: InterpolationReport,
    pub b2: InterpolationReport,
    pub witness_coverage: f64,
    pub diagnostics: DiagnosticsSummary,
    pub delta_floor: DeltaFloorReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineRecord {
    pub schema_version: u32,
    pub config: RunConfig,
    pub zeros: usize,
    pub contour: Option<ContourSummary>,
    pub split: Option<SplitSummary>,
    pub harmonic: Option<Vec<MeasureSummary>>,
    pub mean_value: Option<Vec<MeanValueSummary>>,
    pub discretization: Option<DiscretizationSummary>,
    pub verification: Option<VerificationSummary>,
    pub failure: Option<StageFailure>,
    /// SHA-256 of the record with `digest` empty and `timings` removed.
    pub digest: String,
    pub timings: BTreeMap<String, f64>,
}

impl PipelineRecord {
    pub fn compute_digest(&self) -> String {
        let mut r = self.clone();
        r.digest.clear();
        r.timings.clear();
        let bytes = serde_json::to_vec(&r).expect("record serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn succeeded(&self) -> bool {
        self.failure.is_none()
    }

    /// Headline: `sup ||B| − |I|| + 2 tanh(mesh) ≤ ε` with the tail certified.
    pub fn theorem_holds(&self) -> bool {
        self.verification.as_ref().is_some_and(|v| v.sup_passes)
    }
}

/// Everything a run produces.
#[derive(Clone, Debug)]
pub struct RunArtifacts {
    pub record: PipelineRecord,
    pub zeros: Vec<DiskPoint>,
    pub build: Option<ContourBuild>,
    pub split: Option<SplitResult>,
    pub measures: Vec<BoundaryMeasure>,
    pub discretization: Option<DiscretizationResult>,
}

impl RunArtifacts {
    /// `I = I₁ · B₂`.
    pub fn approximant(&self) -> Option<BlaschkeProduct> {
        Some(self.discretization.as_ref()?.i1.product(&self.split.as_ref()?.b2))
    }
}

fn audit_seed(seed: u64, salt: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ salt
}

pub fn contour_summary(b: &BlaschkeProduct, build: &ContourBuild, cfg: &RunConfig) -> ContourSummary {
    let c = &build.contour;
    let p = c.params;
    let atoms: Vec<Atom> = c.all_edges().map(|e| Atom::Edge(*e)).collect();
    let inner = check_inner_bound(b, c, p.k, p.epsilon + p.mesh.tanh(), cfg.audit_samples, audit_seed(cfg.seed, 1));
    let ext_radius = cfg.exterior_radius.unwrap_or(p.k + 14.0);
    let exterior = check_exterior_witness(b, c, build.delta, ext_radius, cfg.audit_samples, audit_seed(cfg.seed, 2));
    ContourSummary {
        components: c.components.len(),
        delta: build.delta,
        delta_history: build.delta_history.clone(),
        k: p.k,
        lemma_epsilon: p.epsilon,
        arclength: c.arclength(),
        carleson_norm: carleson_norm(&atoms, p.d_max),
        dyadic_carleson_sup: dyadic_carleson_sup(&atoms, p.d_max),
        scaling_holds: build.scaling_holds(),
        scaling_checks: build.scaling.len(),
        region_bound_holds: build.regions.iter().all(|r| r.holds),
        maximal_bad: build.maximal_bad.len(),
        maximal_good: build.maximal_good.len(),
        holes: c.components.iter().map(|c| c.holes.len()).sum(),
        stats: build.stats,
        inner,
        exterior,
    }
}

/// Splitting, harmonic measure per component, and zero placement.
pub fn stage_discretize(
    b: &BlaschkeProduct,
    build: &ContourBuild,
    cfg: &RunConfig,
) -> Result<(SplitResult, Vec<BoundaryMeasure>, DiscretizationResult, Vec<MeanValueSummary>)> {
    let contour = &build.contour;
    let witness_radius = cfg.witness_radius.unwrap_or(2.0 * cfg.big_n as f64 + 15.0);
    let split = split_by_contour_with_radius(b, contour, build.delta, witness_radius);
    let hcfg = cfg.harmonic_config();
    let mut measures = Vec::new();
    let mut mean_value = Vec::new();
    for comp in &contour.components {
        let sources = split.component_zeros(comp.id);
        if sources.is_empty() {
            continue;
        }
        let mu = harmonic_measure(&HarmonicDomain { boundary: comp.clone(), sources }, &hcfg)?;
        mean_value.push(mean_value_audit(&split.component_product(comp.id), &mu, contour, comp.id, cfg));
        measures.push(mu);
    }
    let disc = discretize(contour, &measures, build.delta)?;
    Ok((split, measures, disc, mean_value))
}

fn mean_value_audit(
    b1c: &BlaschkeProduct,
    mu: &BoundaryMeasure,
    contour: &Contour,
    id: usize,
    cfg: &RunConfig,
) -> MeanValueSummary {
    let comp = &contour.components[id];
    let mut rng = ChaCha8Rng::seed_from_u64(audit_seed(cfg.seed, 100 + id as u64));
    let mut out = MeanValueSummary { component: id, points: 0, max_residual: 0.0, max_ratio: 0.0, passes: true };
    let mut attempts = 0;
    while out.points < cfg.mean_value_points && attempts < 200 * cfg.mean_value_points.max(1) {
        attempts += 1;
        let depth = 0.5f64.powf(cfg.d_max as f64 * rng.random::<f64>());
        let z = DiskPoint::from_complex_clamped(Complex64::from_polar(1.0 - depth, rng.random::<f64>() * TAU));
        if point_in_interior(z, comp) != Containment::Outside || dist_to_component(z, comp) < 1.0 {
            continue;
        }
        let res = mean_value_check(b1c, mu, comp, z);
        let lhs = b1c.log_modulus(z).unwrap_or(f64::NEG_INFINITY).abs();
        let tol = 0.01 * lhs + 3.0 * mean_value_error(mu, comp, z);
        out.points += 1;
        out.max_residual = out.max_residual.max(res);
        out.max_ratio = out.max_ratio.max(if tol > 0.0 {
            res / tol
        } else if res > 0.0 {
            f64::INFINITY
        } else {
            0.0
        });
    }
    out.passes = out.max_ratio <= 1.0;
    out
}

pub fn discretization_summary(contour: &Contour, disc: &DiscretizationResult) -> DiscretizationSummary {
    let on_arcs = disc.arcs.iter().all(|a| {
        let comp = &contour.components[a.component_id];
        let offsets = comp.edge_offsets();
        a.placed_s >= a.s_lo && a.placed_s <= a.s_hi && {
            let p = comp.point_at(&offsets, a.placed_s);
            (p.to_complex() - a.placed_zero.to_complex()).norm() < 1e-12
        }
    });
    DiscretizationSummary {
        arcs: disc.arcs.len(),
        max_mass_error: disc.max_mass_error(),
        max_moment_residual: disc.max_moment_residual(),
        min_hyp_length: if disc.arcs.is_empty() { 0.0 } else { disc.min_hyp_length() },
        log_length_floor: disc.log_length_floor,
        length_floor_holds: disc.length_floor_holds(),
        zeros_on_arcs: on_arcs,
    }
}

pub fn stage_verify(
    build: &ContourBuild,
    split: &SplitResult,
    measures: &[BoundaryMeasure],
    disc: &DiscretizationResult,
    cfg: &RunConfig,
) -> Result<VerificationSummary> {
    let contour = &build.contour;
    let net = build_net(cfg.mesh, cfg.d_max + 2)?;
    let sup = sup_modulus_diff_split(&split.b1, &disc.i1, &split.b2, &net);
    let zeros = |b: &BlaschkeProduct| b.all_zeros().collect::<Vec<_>>();
    let i1_odd = interpolation_report(&zeros(&disc.i1_odd), cfg.d_max);
    let i1_even = interpolation_report(&zeros(&disc.i1_even), cfg.d_max);
    let b2 = interpolation_report(&zeros(&split.b2), cfg.d_max);

    let required = build.contour.params.k;
    let mut rng = ChaCha8Rng::seed_from_u64(audit_seed(cfg.seed, 3));
    let mut diags = Vec::new();
    let mut attempts = 0;
    while diags.len() < cfg.telescoping_points && attempts < 200 * cfg.telescoping_points.max(1) {
        attempts += 1;
        let depth = 0.5f64.powf(cfg.d_max as f64 * rng.random::<f64>());
        let z = DiskPoint::from_complex_clamped(Complex64::from_polar(1.0 - depth, rng.random::<f64>() * TAU));
        if admissible(z, contour, required).is_err() {
            continue;
        }
        diags.push(arc_class_diagnostics(z, contour, disc, measures, &split.b1, cfg.big_n, required)?);
    }
    let max_gap = diags.iter().map(|d| d.identity_gap()).fold(0.0, f64::max);
    let digest = hex::encode(Sha256::digest(serde_json::to_vec(&diags)?));
    let diagnostics = DiagnosticsSummary {
        points: diags.len(),
        max_identity_gap: max_gap,
        gate: cfg.telescoping_gate,
        passes: max_gap <= cfg.telescoping_gate,
        max_e_b: diags.iter().map(|d| d.e_b).fold(0.0, f64::max),
        max_e_s: diags.iter().map(|d| d.e_s).fold(0.0, f64::max),
        max_e_l: diags.iter().map(|d| d.e_l).fold(0.0, f64::max),
        digest,
    };
    Ok(VerificationSummary {
        sup_passes: sup.passes(cfg.epsilon),
        sup,
        i1_odd,
        i1_even,
        b2,
        witness_coverage: split.witness_coverage(),
        diagnostics,
        delta_floor: delta_floor_check(&split.b1, contour, build.delta),
    })
}

/// Runs every stage, writing artifacts when `out` is set.
pub fn run(cfg: &RunConfig) -> Result<RunArtifacts> {
    cfg.validate()?;
    if cfg.workers > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        pool.install(|| run_inner(cfg))
    } else {
        run_inner(cfg)
    }
}

fn run_inner(cfg: &RunConfig) -> Result<RunArtifacts> {
    let zeros = cfg.load_input()?;
    let b = BlaschkeProduct::from_zeros(zeros.iter().copied());
    let mut record = PipelineRecord {
        schema_version: SCHEMA_VERSION,
        config: cfg.clone(),
        zeros: zeros.len(),
        contour: None,
        split: None,
        harmonic: None,
        mean_value: None,
        discretization: None,
        verification: None,
        failure: None,
        digest: String::new(),
        timings: BTreeMap::new(),
    };
    let mut art = RunArtifacts {
        record: record.clone(),
        zeros,
        build: None,
        split: None,
        measures: Vec::new(),
        discretization: None,
    };
    let fail = |record: &mut PipelineRecord, stage: &str, e: Error| {
        log::error!("{stage} stage failed: {e}");
        record.failure = Some(StageFailure { stage: stage.into(), message: e.to_string() });
    };

    'stages: {
        let t = Instant::now();
        let build = match build_contour_with(&b, &cfg.contour_config()) {
            Ok(v) => v,
            Err(e) => {
                fail(&mut record, "contour", e);
                break 'stages;
            }
        };
        record.contour = Some(contour_summary(&b, &build, cfg));
        record.timings.insert("contour".into(), t.elapsed().as_secs_f64());

        let t = Instant::now();
        let (split, measures, disc, mv) = match stage_discretize(&b, &build, cfg) {
            Ok(v) => v,
            Err(e) => {
                fail(&mut record, "discretize", e);
                art.build = Some(build);
                break 'stages;
            }
        };
        record.split = Some(SplitSummary {
            b1_zeros: split.b1.degree(),
            b2_zeros: split.b2.degree(),
            witness_radius: split.witness_radius,
            witness_coverage: split.witness_coverage(),
        });
        record.harmonic = Some(
            measures
                .iter()
                .map(|m| MeasureSummary {
                    component: m.component_id,
                    sources: m.sources,
                    bins: m.bin_count(),
                    raw_total: m.raw_total,
                    renormalization: m.renormalization,
                    stat_error: m.stat_error,
                })
                .collect(),
        );
        record.mean_value = Some(mv);
        record.discretization = Some(discretization_summary(&build.contour, &disc));
        record.timings.insert("discretize".into(), t.elapsed().as_secs_f64());

        let t = Instant::now();
        match stage_verify(&build, &split, &measures, &disc, cfg) {
            Ok(v) => record.verification = Some(v),
            Err(e) => fail(&mut record, "verify", e),
        }
        record.timings.insert("verify".into(), t.elapsed().as_secs_f64());
        art.build = Some(build);
        art.split = Some(split);
        art.measures = measures;
        art.discretization = Some(disc);
    }
    record.digest = record.compute_digest();
    art.record = record;
    if let Some(dir) = &cfg.out {
        write_artifacts(&art, Path::new(dir), cfg.render)?;
    }
    Ok(art)
}

pub fn write_artifacts(art: &RunArtifacts, dir: &Path, render: bool) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let path = |name: &str| -> PathBuf { dir.join(name) };
    write_json(&path("record.json"), &art.record)?;
    std::fs::write(path("summary.csv"), summary_csv(&art.record))?;
    if let Some(build) = &art.build {
        write_json(&path("contour.json"), &ContourFile { schema_version: SCHEMA_VERSION, build: build.clone() })?;
    }
    if let (Some(split), Some(disc)) = (&art.split, &art.discretization) {
        write_json(
            &path("discretization.json"),
            &DiscretizationFile {
                schema_version: SCHEMA_VERSION,
                split: split.clone(),
                measures: art.measures.clone(),
                result: disc.clone(),
                mean_value: art.record.mean_value.clone().unwrap_or_default(),
            },
        )?;
        write_json(
            &path("measures.json"),
            &MeasuresFile { schema_version: SCHEMA_VERSION, measures: art.measures.clone() },
        )?;
        let placed: Vec<DiskPoint> = disc.i1.all_zeros().collect();
        write_zero_set(&path("placed_zeros.json"), &placed)?;
    }
    if render {
        let svg = render_svg(
            art.build.as_ref(),
            &art.zeros,
            art.discretization.as_ref().map(|d| d.arcs.as_slice()).unwrap_or(&[]),
        );
        std::fs::write(path("figure.svg"), svg)?;
    }
    Ok(())
}

/// Flat `key,value` summary of a record.
pub fn summary_csv(r: &PipelineRecord) -> String {
    let mut rows: Vec<(String, String)> = vec![
        ("zeros".into(), r.zeros.to_string()),
        ("epsilon".into(), r.config.epsilon.to_string()),
        ("bign".into(), r.config.big_n.to_string()),
        ("mesh".into(), r.config.mesh.to_string()),
        ("dmax".into(), r.config.d_max.to_string()),
        ("seed".into(), r.config.seed.to_string()),
    ];
    if let Some(c) = &r.contour {
        rows.push(("components".into(), c.components.to_string()));
        rows.push(("delta".into(), c.delta.to_string()));
        rows.push(("k".into(), c.k.to_string()));
        rows.push(("carleson_norm".into(), c.carleson_norm.to_string()));
        rows.push(("scaling_holds".into(), c.scaling_holds.to_string()));
        rows.push(("inner_max_modulus".into(), c.inner.max_modulus.to_string()));
        rows.push(("exterior_failures".into(), c.exterior.failures.to_string()));
    }
    if let Some(s) = &r.split {
        rows.push(("b1_zeros".into(), s.b1_zeros.to_string()));
        rows.push(("b2_zeros".into(), s.b2_zeros.to_string()));
        rows.push(("witness_coverage".into(), s.witness_coverage.to_string()));
    }
    if let Some(d) = &r.discretization {
        rows.push(("arcs".into(), d.arcs.to_string()));
        rows.push(("max_moment_residual".into(), d.max_moment_residual.to_string()));
        rows.push(("min_hyp_length".into(), d.min_hyp_length.to_string()));
    }
    if let Some(v) = &r.verification {
        rows.push(("sup_diff".into(), v.sup.sup_diff.to_string()));
        rows.push(("slack".into(), v.sup.slack.to_string()));
        rows.push(("tail_floor".into(), v.sup.tail_floor.to_string()));
        rows.push(("sup_passes".into(), v.sup_passes.to_string()));
        rows.push(("telescoping_gap".into(), v.diagnostics.max_identity_gap.to_string()));
    }
    rows.push(("failure".into(), r.failure.as_ref().map(|f| f.stage.clone()).unwrap_or_default()));
    rows.push(("digest".into(), r.digest.clone()));
    let mut out = String::from("key,value\n");
    for (k, v) in rows {
        let _ = writeln!(out, "{k},{v}");
    }
    out
}

// ---------------------------------------------------------------------------
// SVG

const SIZE: f64 = 800.0;
const SCALE: f64 = 380.0;

fn sx(z: Complex64) -> (f64, f64) {
    (SIZE / 2.0 + SCALE * z.re, SIZE / 2.0 - SCALE * z.im)
}

fn arc_path(out: &mut String, r: f64, theta0: f64, sweep: f64) {
    // Pieces of at most π; counterclockwise in the plane is sweep-flag 0 on screen.
    let pieces = ((sweep.abs() / std::f64::consts::PI).ceil() as usize).max(1);
    let flag = if sweep > 0.0 { 0 } else { 1 };
    for k in 1..=pieces {
        let th = theta0 + sweep * k as f64 / pieces as f64;
        let (x, y) = sx(Complex64::from_polar(r, th));
        let _ = write!(out, " A {:.6} {:.6} 0 0 {} {:.6} {:.6}", SCALE * r, SCALE * r, flag, x, y);
    }
}

fn region_path(region: &Region) -> String {
    let mut d = String::new();
    match *region {
        Region::PolarRect { r_lo, r_hi, th_lo, th_hi } => {
            let (x, y) = sx(Complex64::from_polar(r_lo, th_lo));
            let _ = write!(d, "M {x:.6} {y:.6}");
            let (x, y) = sx(Complex64::from_polar(r_hi, th_lo));
            let _ = write!(d, " L {x:.6} {y:.6}");
            arc_path(&mut d, r_hi, th_lo, th_hi - th_lo);
            let (x, y) = sx(Complex64::from_polar(r_lo, th_hi));
            let _ = write!(d, " L {x:.6} {y:.6}");
            arc_path(&mut d, r_lo, th_hi, th_lo - th_hi);
            d.push_str(" Z");
        }
        Region::Disk { radius } => {
            let (x, y) = sx(Complex64::from_polar(radius, 0.0));
            let _ = write!(d, "M {x:.6} {y:.6}");
            arc_path(&mut d, radius, 0.0, TAU);
            d.push_str(" Z");
        }
        Region::Point { point } => {
            let (x, y) = sx(point.to_complex());
            let _ = write!(d, "M {x:.6} {y:.6} Z");
        }
    }
    d
}

fn square_path(q: DyadicSquare) -> String {
    region_path(&q.top_half())
}

/// Disk outline, maximal good and bad squares, contour components, zeros of
/// `B`, arc cut marks and placed zeros.
pub fn render_svg(build: Option<&ContourBuild>, zeros: &[DiskPoint], arcs: &[ArcSegment]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"##
    );
    let _ = writeln!(
        s,
        r##"<circle cx="{:.6}" cy="{:.6}" r="{:.6}" fill="none" stroke="black" stroke-width="1"/>"##,
        SIZE / 2.0,
        SIZE / 2.0,
        SCALE
    );
    if let Some(build) = build {
        let squares: Vec<(&ClassifiedSquare, &str)> = build
            .maximal_good
            .iter()
            .map(|q| (q, "#2a9d4a"))
            .chain(build.maximal_bad.iter().map(|q| (q, "#d62828")))
            .collect();
        for (q, color) in squares {
            let _ = writeln!(
                s,
                r##"<path class="square" d="{}" fill="{color}" fill-opacity="0.25" stroke="{color}" stroke-width="0.5"/>"##,
                square_path(q.square)
            );
        }
        for comp in &build.contour.components {
            let mut d = String::new();
            for loop_edges in std::iter::once(&comp.edges).chain(comp.holes.iter()) {
                if let Some(first) = loop_edges.first() {
                    let (x, y) = sx(first.start.to_disk().to_complex());
                    let _ = write!(d, "M {x:.6} {y:.6}");
                }
                for e in loop_edges {
                    match e.kind {
                        EdgeKind::Arc => arc_path(&mut d, e.start.r, e.start.theta, e.sweep),
                        EdgeKind::Radial => {
                            let (x, y) = sx(e.end.to_disk().to_complex());
                            let _ = write!(d, " L {x:.6} {y:.6}");
                        }
                    }
                }
                d.push_str(" Z");
            }
            let _ = writeln!(
                s,
                r##"<path class="contour" data-component="{}" d="{d}" fill="none" stroke="#1d3557" stroke-width="1.5"/>"##,
                comp.id
            );
        }
        for a in arcs {
            let comp = &build.contour.components[a.component_id];
            let offsets = comp.edge_offsets();
            let p = comp.point_at(&offsets, a.s_lo).to_complex();
            let n = if p.norm() > 0.0 { p / p.norm() } else { Complex64::new(1.0, 0.0) };
            let (x0, y0) = sx(p - n * 0.01);
            let (x1, y1) = sx(p + n * 0.01);
            let _ = writeln!(
                s,
                r##"<line class="cut" x1="{x0:.6}" y1="{y0:.6}" x2="{x1:.6}" y2="{y1:.6}" stroke="#e76f51" stroke-width="1"/>"##
            );
        }
    }
    for z in zeros {
        let (x, y) = sx(z.to_complex());
        let _ = writeln!(s, r##"<circle class="zero" cx="{x:.6}" cy="{y:.6}" r="1.5" fill="black"/>"##);
    }
    for a in arcs {
        let (x, y) = sx(a.placed_zero.to_complex());
        let _ = writeln!(
            s,
            r##"<circle class="placed" cx="{x:.6}" cy="{y:.6}" r="2.5" fill="none" stroke="#f4a261" stroke-width="1"/>"##
        );
    }
    let legend = [
        ("#2a9d4a", "good square"),
        ("#d62828", "bad square"),
        ("#1d3557", "contour"),
        ("#e76f51", "arc cut"),
        ("#f4a261", "placed zero"),
        ("black", "zero of B"),
    ];
    for (i, (color, label)) in legend.iter().enumerate() {
        let y = 16.0 + 14.0 * i as f64;
        let _ = writeln!(s, r##"<rect x="8" y="{:.6}" width="10" height="10" fill="{color}"/>"##, y - 9.0);
        let _ = writeln!(s, r##"<text x="22" y="{y:.6}" font-size="11" font-family="sans-serif">{label}</text>"##);
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::hyp_dist;

    #[test]
    fn generator_examples() {
        let spec = GeneratorSpec::parse("cluster(200, 0.9, 0.5)").unwrap();
        let zs = generate(&spec, 7).unwrap();
        assert_eq!(zs.len(), 200);
        let c = DiskPoint::new(0.9, 0.0).unwrap();
        assert!(zs.iter().all(|&z| hyp_dist(z, c) <= 0.5 + 1e-9));
        assert_eq!(zs, generate(&spec, 7).unwrap());
        let zs = generate(&GeneratorSpec::parse("radial(10, 0.5)").unwrap(), 0).unwrap();
        for (k, z) in zs.iter().enumerate() {
            assert!((z.re - (1.0 - 0.5f64.powi(k as i32 + 1))).abs() < 1e-15);
        }
        assert!(GeneratorSpec::parse("cluster(0, 0.9, 0.5)").is_err());
        assert!(GeneratorSpec::parse("uniform(-3, 4)").is_err());
        assert!(GeneratorSpec::parse("spiral(3)").is_err());
    }

    #[test]
    fn zero_set_round_trip() {
        let zs = vec![
            DiskPoint::new(0.1, 0.2).unwrap(),
            DiskPoint::ORIGIN,
            DiskPoint::ORIGIN,
            DiskPoint::new(0.1, 1e-17).unwrap(),
        ];
        let text = zero_set_json(&zs).unwrap();
        let back = parse_zero_set(&text).unwrap();
        let mut a: Vec<_> = zs.iter().map(|z| (z.re.to_bits(), z.im.to_bits())).collect();
        let mut b: Vec<_> = back.iter().map(|z| (z.re.to_bits(), z.im.to_bits())).collect();
        a.sort();
        b.sort();
        assert_eq!(a, b);
        assert_eq!(parse_zero_set(r##"[{"re":0.5,"im":0.0}]"##).unwrap().len(), 1);
        assert!(matches!(
            parse_zero_set(r##"{"schema_version":2,"zeros":[]}"##),
            Err(Error::SchemaVersion { found: 2, .. })
        ));
        assert!(parse_zero_set("{not json").is_err());
        assert!(parse_zero_set(r##"[{"re":1.5,"im":0.0}]"##).is_err());
    }

    #[test]
    fn config_text() {
        let mut c = RunConfig::default();
        c.apply_config_text("# comment\nepsilon = 0.3\nbign=2 # trailing\ninput = radial(5, 0.5)\nrender = true\n")
            .unwrap();
        assert_eq!(c.epsilon, 0.3);
        assert_eq!(c.big_n, 2);
        assert!(c.render);
        assert!(matches!(c.input, InputSpec::Generated { .. }));
        assert!(c.apply_config_text("nonsense = 1").is_err());
        assert!(c.apply_config_text("render = maybe").is_err());
    }

    #[test]
    fn empty_input_passes_trivially() {
        let cfg = RunConfig { walks_per_source: 10, ..Default::default() };
        let art = run(&cfg).unwrap();
        assert!(art.record.succeeded());
        assert!(art.record.theorem_holds());
        assert_eq!(art.record.contour.as_ref().unwrap().components, 0);
        assert_eq!(art.record.verification.as_ref().unwrap().sup.sup_diff, 0.0);
        let svg = render_svg(art.build.as_ref(), &[], &[]);
        assert_eq!(svg.matches("<circle").count(), 1);
        assert_eq!(svg.matches("class=\"contour\"").count(), 0);
    }
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use blaschke_approx::blaschke::BlaschkeProduct;
use blaschke_approx::contour::build_contour_with;
use blaschke_approx::pipeline::{
    self, contour_summary, discretization_summary, read_contour_file, read_discretization_file, read_zero_set,
    render_svg, stage_discretize, stage_verify, write_json, write_zero_set, ContourFile, DiscretizationFile,
    GeneratorSpec, InputSpec, MeasuresFile, RunConfig, SCHEMA_VERSION,
};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "blaschke-approx", version, about = "Approximate |B| by products of interpolating Blaschke products")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Flat `key = value` config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// N; the contour neighborhood radius is K = 2N.
    #[arg(long)]
    bign: Option<u32>,
    /// Overrides K = 2N.
    #[arg(long)]
    k: Option<f64>,
    #[arg(long)]
    mesh: Option<f64>,
    #[arg(long)]
    dmax: Option<u32>,
    /// Walks per source for harmonic measure.
    #[arg(long)]
    walks: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
}

impl Common {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            cfg.apply_config_text(&text)?;
        }
        if let Some(v) = self.epsilon {
            cfg.epsilon = v;
        }
        if let Some(v) = self.bign {
            cfg.big_n = v;
        }
        if let Some(v) = self.k {
            cfg.k = Some(v);
        }
        if let Some(v) = self.mesh {
            cfg.mesh = v;
        }
        if let Some(v) = self.dmax {
            cfg.d_max = v;
        }
        if let Some(v) = self.walks {
            cfg.walks_per_source = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.workers {
            cfg.workers = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded zero set.
    Generate {
        /// e.g. `cluster(200, 0.9, 0.5)`, `radial(10, 0.5)`, `uniform(300, 8)`, `curve(400, 0.99, 0, 1)`.
        spec: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the contour of a zero set.
    Contour {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Split, compute harmonic measures and place zeros.
    Discretize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        contour: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the measures on their own.
        #[arg(long)]
        measures: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Check the approximation and the interpolation conditions.
    Verify {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        contour: PathBuf,
        #[arg(long)]
        discretization: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run every stage and write a record.
    Run {
        /// Zero-set file or generator spec.
        #[arg(long)]
        input: Option<String>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        render: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Draw a contour, its zeros and the placed zeros as SVG.
    Render {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        contour: Option<PathBuf>,
        #[arg(long)]
        discretization: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn product(path: &Path) -> Result<(Vec<blaschke_approx::DiskPoint>, BlaschkeProduct)> {
    let zeros = read_zero_set(path).with_context(|| format!("reading {}", path.display()))?;
    let b = BlaschkeProduct::from_zeros(zeros.iter().copied());
    Ok((zeros, b))
}

fn with_workers<T: Send>(cfg: &RunConfig, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    if cfg.workers == 0 {
        return f();
    }
    rayon_pool(cfg.workers)?.install(f)
}

fn rayon_pool(n: usize) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(n).build()?)
}

fn dispatch(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Generate { spec, seed, out } => {
            let spec = GeneratorSpec::parse(&spec)?;
            let zeros = pipeline::generate(&spec, seed)?;
            write_zero_set(&out, &zeros)?;
            println!("wrote {} zeros to {}", zeros.len(), out.display());
        }
        Command::Contour { input, out, common } => {
            let cfg = common.config()?;
            let (_, b) = product(&input)?;
            let build = with_workers(&cfg, || Ok(build_contour_with(&b, &cfg.contour_config())?))?;
            let summary = contour_summary(&b, &build, &cfg);
            write_json(&out, &ContourFile { schema_version: SCHEMA_VERSION, build })?;
            println!(
                "components {} delta {:e} carleson_norm {:.4}",
                summary.components, summary.delta, summary.carleson_norm
            );
        }
        Command::Discretize { input, contour, out, measures, common } => {
            let cfg = common.config()?;
            let (_, b) = product(&input)?;
            let build = read_contour_file(&contour)?.build;
            let (split, mus, result, mean_value) = with_workers(&cfg, || Ok(stage_discretize(&b, &build, &cfg)?))?;
            let summary = discretization_summary(&build.contour, &result);
            if let Some(path) = measures {
                write_json(&path, &MeasuresFile { schema_version: SCHEMA_VERSION, measures: mus.clone() })?;
            }
            write_json(
                &out,
                &DiscretizationFile { schema_version: SCHEMA_VERSION, split, measures: mus, result, mean_value },
            )?;
            println!("arcs {} max_moment_residual {:e}", summary.arcs, summary.max_moment_residual);
        }
        Command::Verify { input, contour, discretization, out, common } => {
            let cfg = common.config()?;
            let (_, b) = product(&input)?;
            let build = read_contour_file(&contour)?.build;
            let disc = read_discretization_file(&discretization)?;
            if disc.split.b1.degree() + disc.split.b2.degree() != b.degree() {
                bail!("discretization does not belong to {}", input.display());
            }
            let report =
                with_workers(&cfg, || Ok(stage_verify(&build, &disc.split, &disc.measures, &disc.result, &cfg)?))?;
            write_json(&out, &report)?;
            println!(
                "sup_diff {:e} certified {:e} passes {}",
                report.sup.sup_diff,
                report.sup.certified_bound(),
                report.sup_passes
            );
            if !report.sup_passes {
                return Ok(ExitCode::from(3));
            }
        }
        Command::Run { input, out, render, common } => {
            let mut cfg = common.config()?;
            if let Some(input) = input {
                cfg.set("input", &input)?;
            }
            if matches!(&cfg.input, InputSpec::Zeros { zeros } if zeros.is_empty()) && common.config.is_none() {
                bail!("--input is required");
            }
            if let Some(out) = out {
                cfg.out = Some(out.to_string_lossy().into_owned());
            }
            cfg.render |= render;
            let art = pipeline::run(&cfg)?;
            let r = &art.record;
            if let Some(v) = &r.verification {
                println!(
                    "sup_diff {:e} certified {:e} passes {}",
                    v.sup.sup_diff,
                    v.sup.certified_bound(),
                    v.sup_passes
                );
            }
            println!("digest {}", r.digest);
            if let Some(f) = &r.failure {
                eprintln!("stage {} failed: {}", f.stage, f.message);
                return Ok(ExitCode::from(2));
            }
        }
        Command::Render { input, contour, discretization, out } => {
            let zeros = read_zero_set(&input)?;
            let build = contour.map(|p| read_contour_file(&p)).transpose()?.map(|f| f.build);
            let disc = discretization.map(|p| read_discretization_file(&p)).transpose()?;
            let arcs = disc.as_ref().map(|d| d.result.arcs.as_slice()).unwrap_or(&[]);
            std::fs::write(&out, render_svg(build.as_ref(), &zeros, arcs))?;
            println!("wrote {}", out.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

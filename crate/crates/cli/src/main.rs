use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use geoattn::bench::{self, BenchConfig};
use geoattn::experiments::{
    descent_demo, embed_tree, export_trajectories, DescentParams, EmbeddingParams, EmbeddingRun, EmbeddingSpace,
    TreeSpec, SEEDS,
};
use geoattn::verify::{run_verify, VerifyConfig};
use geoattn::{lorentz, oblique, GeoError};
use serde_json::json;

const SEED_ENV: &str = "GEOATTN_SEED";

#[derive(Parser)]
#[command(name = "geoattn", version, about = "Geodesic attention: self-checks, kernel timings and experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the property suite and report the worst error per property.
    Verify {
        /// Module tag (linalg, oblique, lorentz, attention, diffcheck,
        /// experiments) or a substring of a property id.
        #[arg(long)]
        filter: Option<String>,
        #[arg(long, default_value_t = oblique::DEFAULT_EPS_CLIP)]
        eps_oblique: f64,
        #[arg(long, default_value_t = lorentz::DEFAULT_EPS_CLIP)]
        eps_lorentz: f64,
        /// Defaults to $GEOATTN_SEED, else 0.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Time the euclidean, oblique and lorentz attention kernels.
    Bench {
        #[arg(long, default_value_t = 256)]
        n: usize,
        #[arg(long, default_value_t = 256)]
        m: usize,
        #[arg(long, default_value_t = 256)]
        d: usize,
        #[arg(long, default_value_t = 4)]
        heads: usize,
        #[arg(long, default_value_t = 10)]
        repeats: usize,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Write to this file instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Input seed; defaults to $GEOATTN_SEED, else 0.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Embed a complete tree in Euclidean and hyperbolic space and report distortion.
    TreeEmbed {
        #[arg(long, default_value_t = 5)]
        depth: usize,
        #[arg(long, default_value_t = 2)]
        branching: usize,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, default_value_t = 5000)]
        steps: usize,
        #[arg(long, default_value_t = 0.01)]
        step_size: f64,
        /// Curvatures of the hyperbolic arms.
        #[arg(long, value_delimiter = ',', default_value = "1")]
        curvature: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = SEEDS)]
        seeds: Vec<u64>,
        /// Curvature continuation stages for hyperbolic arms (1 disables).
        #[arg(long, default_value_t = 10)]
        anneal_stages: usize,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Gradient descent on an ill-conditioned quadratic, with and without unit-column constraints.
    Descent {
        #[arg(long, default_value_t = 100.0)]
        condition_number: f64,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long, default_value_t = 100_000)]
        max_iters: usize,
        /// Defaults to $GEOATTN_SEED, else 0.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        /// Directory for the trajectory CSVs; must exist.
        #[arg(long, default_value = ".")]
        output_dir: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

/// Failure classes mapped onto the exit-code contract.
enum Failure {
    /// Bad flags or configuration: exit 2.
    Usage(anyhow::Error),
    /// A property or experiment failed: exit 1.
    Run(anyhow::Error),
}

impl From<GeoError> for Failure {
    fn from(e: GeoError) -> Self {
        match e {
            GeoError::InvalidConfig(_)
            | GeoError::InvalidCurvature { .. }
            | GeoError::SizeCap { .. }
            | GeoError::MissingDirectory(_) => Failure::Usage(e.into()),
            other => Failure::Run(other.into()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Run(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn default_seed() -> Result<u64, Failure> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(anyhow!("{SEED_ENV}={s:?} is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

/// Stdout, or a file whose parent directory must already exist.
fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    match path {
        None => Ok(Box::new(io::stdout().lock())),
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                if !parent.is_dir() {
                    return Err(GeoError::MissingDirectory(parent.to_path_buf()).into());
                }
            }
            let f = File::create(p).with_context(|| format!("cannot create {}", p.display()))?;
            Ok(Box::new(BufWriter::new(f)))
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Verify {
            filter,
            eps_oblique,
            eps_lorentz,
            seed,
        } => cmd_verify(filter, eps_oblique, eps_lorentz, seed),
        Command::Bench {
            n,
            m,
            d,
            heads,
            repeats,
            format,
            output,
            seed,
        } => {
            let cfg = BenchConfig {
                n,
                m,
                d,
                heads,
                repeats,
                seed: seed.map_or_else(default_seed, Ok)?,
            };
            cmd_bench(&cfg, format, output.as_deref())
        }
        Command::TreeEmbed {
            depth,
            branching,
            dim,
            steps,
            step_size,
            curvature,
            seeds,
            anneal_stages,
            format,
            output,
        } => {
            let spec = TreeSpec {
                branching,
                depth,
                edge_length: 1.0,
            };
            let base = EmbeddingParams {
                dim,
                steps,
                step_size,
                anneal_stages,
                ..EmbeddingParams::default()
            };
            cmd_tree_embed(&spec, &base, &curvature, &seeds, format, output.as_deref())
        }
        Command::Descent {
            condition_number,
            tol,
            max_iters,
            seeds,
            output_dir,
        } => {
            let seeds = if seeds.is_empty() { vec![default_seed()?] } else { seeds };
            let params = DescentParams {
                condition_number,
                tol,
                max_iters,
                ..DescentParams::default()
            };
            cmd_descent(&params, &seeds, &output_dir)
        }
    }
}

fn cmd_verify(filter: Option<String>, eps_oblique: f64, eps_lorentz: f64, seed: Option<u64>) -> Result<(), Failure> {
    let cfg = VerifyConfig {
        eps_oblique,
        eps_lorentz,
        seed: seed.map_or_else(default_seed, Ok)?,
    };
    let reports = run_verify(&cfg, filter.as_deref());
    if reports.is_empty() {
        return Err(Failure::Usage(anyhow!(
            "filter {:?} matches no property",
            filter.unwrap_or_default()
        )));
    }
    for r in &reports {
        println!("{r}");
    }
    let failed: Vec<String> = reports
        .iter()
        .filter(|r| !r.passed)
        .map(|r| format!("{}::{}", r.module, r.name))
        .collect();
    println!("{} of {} properties passed", reports.len() - failed.len(), reports.len());
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Run(anyhow!("failed properties: {}", failed.join(", "))))
    }
}

fn cmd_bench(cfg: &BenchConfig, format: Format, output: Option<&Path>) -> Result<(), Failure> {
    cfg.validate()?;
    let records = bench::run_bench(cfg)?;
    let mut out = open_output(output)?;
    match format {
        Format::Csv => bench::write_csv(&records, &mut out)?,
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, &records).context("writing JSON")?;
            writeln!(out).context("writing JSON")?;
        }
    }
    out.flush().context("flushing output")?;
    Ok(())
}

fn cmd_tree_embed(
    spec: &TreeSpec,
    base: &EmbeddingParams,
    curvatures: &[f64],
    seeds: &[u64],
    format: Format,
    output: Option<&Path>,
) -> Result<(), Failure> {
    if seeds.is_empty() {
        return Err(Failure::Usage(anyhow!("at least one seed is required")));
    }
    let mut spaces = vec![EmbeddingSpace::Euclidean];
    spaces.extend(curvatures.iter().map(|&curvature| EmbeddingSpace::Lorentz { curvature }));

    let mut runs: Vec<EmbeddingRun> = Vec::new();
    let mut summary = Vec::new();
    for &space in &spaces {
        let mut arm = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            arm.push(embed_tree(spec, &EmbeddingParams { space, seed, ..*base })?);
        }
        let mean = arm.iter().map(|r| r.final_distortion).sum::<f64>() / arm.len() as f64;
        let worst = arm.iter().map(|r| r.worst_case_distortion).fold(0.0, f64::max);
        summary.push((space, mean, worst));
        runs.extend(arm);
    }

    let mut out = open_output(output)?;
    let write_err = |e: io::Error| Failure::Run(anyhow!("writing tree report: {e}"));
    match format {
        Format::Csv => {
            writeln!(out, "space,curvature,seed,mean_distortion,worst_case_distortion,final_stress").map_err(write_err)?;
            for r in &runs {
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    space_name(r.space),
                    curvature_of(r.space),
                    r.seed,
                    r.final_distortion,
                    r.worst_case_distortion,
                    r.final_stress
                )
                .map_err(write_err)?;
            }
            for (space, mean, worst) in &summary {
                writeln!(out, "{},{},all,{},{},", space_name(*space), curvature_of(*space), mean, worst)
                    .map_err(write_err)?;
            }
        }
        Format::Json => {
            let per_seed: Vec<_> = runs
                .iter()
                .map(|r| {
                    json!({
                        "space": space_name(r.space),
                        "curvature": curvature_of(r.space),
                        "seed": r.seed,
                        "mean_distortion": r.final_distortion,
                        "worst_case_distortion": r.worst_case_distortion,
                        "final_stress": r.final_stress,
                    })
                })
                .collect();
            let aggregate: Vec<_> = summary
                .iter()
                .map(|(space, mean, worst)| {
                    json!({
                        "space": space_name(*space),
                        "curvature": curvature_of(*space),
                        "mean_distortion": mean,
                        "worst_case_distortion": worst,
                    })
                })
                .collect();
            let report = json!({
                "tree": {"branching": spec.branching, "depth": spec.depth, "edge_length": spec.edge_length},
                "dim": base.dim,
                "steps": base.steps,
                "step_size": base.step_size,
                "runs": per_seed,
                "aggregate": aggregate,
            });
            serde_json::to_writer_pretty(&mut out, &report).context("writing JSON")?;
            writeln!(out).map_err(write_err)?;
        }
    }
    out.flush().map_err(write_err)?;
    Ok(())
}

fn space_name(space: EmbeddingSpace) -> &'static str {
    match space {
        EmbeddingSpace::Euclidean => "euclidean",
        EmbeddingSpace::Lorentz { .. } => "lorentz",
    }
}

/// Empty for the Euclidean arm.
fn curvature_of(space: EmbeddingSpace) -> String {
    match space {
        EmbeddingSpace::Euclidean => String::new(),
        EmbeddingSpace::Lorentz { curvature } => curvature.to_string(),
    }
}

fn cmd_descent(params: &DescentParams, seeds: &[u64], dir: &Path) -> Result<(), Failure> {
    if !dir.is_dir() {
        return Err(GeoError::MissingDirectory(dir.to_path_buf()).into());
    }
    let mut all_converged = true;
    for &seed in seeds {
        let run = descent_demo(&DescentParams { seed, ..*params })?;
        let [u, o] = export_trajectories(&run, dir)?;
        println!(
            "seed={} condition_number={} unconstrained_iters={} oblique_iters={} ratio={:.3} converged={}/{}",
            seed,
            run.condition_number,
            run.unconstrained.iterations,
            run.oblique.iterations,
            run.iteration_ratio(),
            run.unconstrained.converged,
            run.oblique.converged,
        );
        println!("  wrote {} and {}", u.display(), o.display());
        all_converged &= run.unconstrained.converged && run.oblique.converged;
    }
    if all_converged {
        Ok(())
    } else {
        Err(Failure::Run(anyhow!(
            "an arm hit the iteration cap of {} before reaching tol={}",
            params.max_iters,
            params.tol
        )))
    }
}

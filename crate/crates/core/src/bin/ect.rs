use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ect_core::config::ExperimentConfig;
use ect_core::error::{Error, Result};
use ect_core::forward::CalibrationPair;
use ect_core::io;
use ect_core::linops::SensitivityMatrix;
use ect_core::metrics::{normalize_image, sd_metric, threshold_op};
use ect_core::par::Execution;
use ect_core::phantom::{phantom, PhantomKind};
use ect_core::pipeline::{history_csv, reconstruct, run_with_setup, write_image_pair, Setup};
use ect_core::solvers::{depiht, Method};

/// Electrical capacitance tomography: simulate an 8-electrode sensor and
/// reconstruct permittivity images.
#[derive(Parser)]
#[command(name = "ect", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Base seed for measurement noise (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory for every output file.
    #[arg(long, global = true, default_value = "ect-out")]
    out_dir: PathBuf,

    /// TOML configuration; unset keys keep their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Disable data parallelism.
    #[arg(long, global = true)]
    sequential: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Write ground-truth phantom images.
    Phantom {
        /// Phantom to draw; all four when omitted.
        #[arg(long)]
        kind: Option<PhantomKind>,
    },
    /// Simulate noisy frames, calibration and the sensitivity matrix.
    Simulate {
        #[arg(long, default_value = "cross")]
        kind: PhantomKind,
        #[command(flatten)]
        noise: NoiseArgs,
    },
    /// Reconstruct one image.
    Reconstruct {
        #[arg(long, default_value = "aadmm-depiht")]
        method: Method,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Post-process an existing image with DEPIHT or the threshold operator.
    Postprocess {
        #[arg(long, value_enum, default_value = "depiht")]
        method: PostMethod,
        /// Image CSV to start from.
        #[arg(long)]
        init: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Shared DEPIHT proximal parameter.
        #[arg(long)]
        q: Option<f64>,
        /// Binarization level for `threshold`.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Run the full phantom x method comparison and write the report.
    Compare {
        #[command(flatten)]
        noise: NoiseArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PostMethod {
    Depiht,
    Threshold,
}

#[derive(Args)]
struct NoiseArgs {
    /// Per-channel SNR in dB.
    #[arg(long)]
    snr: Option<f64>,
    /// Number of frames to simulate and average.
    #[arg(long = "n-frames")]
    frames: Option<usize>,
}

/// Where the measurements come from: files, or a simulated phantom.
#[derive(Args)]
struct DataArgs {
    /// Frames CSV; simulated from `--kind` when omitted.
    #[arg(long = "frames")]
    frames_path: Option<PathBuf>,
    /// Calibration CSV (low and high rows); simulated when omitted.
    #[arg(long)]
    calibration: Option<PathBuf>,
    /// Sensitivity CSV; computed when omitted.
    #[arg(long)]
    sensitivity: Option<PathBuf>,
    #[arg(long, default_value = "cross")]
    kind: PhantomKind,
    #[command(flatten)]
    noise: NoiseArgs,
}

#[derive(Args)]
struct SolverArgs {
    /// AADMM data-fidelity weight.
    #[arg(long)]
    mu: Option<f64>,
    /// Smoothing of the TV norm.
    #[arg(long)]
    eps: Option<f64>,
    /// AADMM penalty parameter.
    #[arg(long)]
    beta: Option<f64>,
    /// Iteration count for AADMM or Landweber, whichever runs.
    #[arg(long)]
    iters: Option<usize>,
    /// Landweber relaxation factor.
    #[arg(long)]
    alpha: Option<f64>,
    /// DEPIHT proximal parameter.
    #[arg(long)]
    q: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut config = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let exec = if cli.sequential { Execution::Sequential } else { Execution::Parallel };
    let out = cli.out_dir.as_path();

    match cli.command {
        Command::Phantom { kind } => {
            let grid = config.grid()?;
            let kinds = kind.map_or_else(|| PhantomKind::ALL.to_vec(), |k| vec![k]);
            for k in kinds {
                write_image_pair(out, k.name(), &phantom(k, &grid)?, &grid)?;
                println!("wrote {}", out.join(format!("{k}.csv")).display());
            }
        }
        Command::Simulate { kind, noise } => {
            apply_noise(&mut config, &noise);
            let setup = Setup::new(&config, exec)?;
            let sim = setup.simulate(kind)?;
            io::write_frames(&out.join("frames.csv"), &sim.frames)?;
            io::write_calibration(&out.join("calibration.csv"), &setup.calibration.pair)?;
            io::write_matrix(&out.join("sensitivity.csv"), &setup.sensitivity)?;
            write_image_pair(out, "truth", &sim.truth, setup.grid())?;
            println!(
                "{kind}: {} frames at {} dB, seed {} -> {}",
                sim.frames.len(),
                config.noise.snr_db,
                setup.phantom_seed(kind),
                out.display()
            );
        }
        Command::Reconstruct { method, data, solver } => {
            apply_solver(&mut config, &solver);
            let (lambda, s) = load_data(&mut config, &data, exec)?;
            let grid = config.grid()?;
            let recon = reconstruct(method, &lambda, &s, &grid, &config)?;
            let r = &recon.result;
            let stem = method.name();
            write_image_pair(out, stem, &r.image, &grid)?;
            let thr = threshold_op(&normalize_image(&r.image), config.metrics.threshold)?;
            write_image_pair(out, &format!("{stem}_thr"), &thr, &grid)?;
            io::write_text_file(&out.join(format!("{stem}_history.csv")), &history_csv(r))?;
            println!(
                "{method}: sd {:.4} (normalized {:.4}), {:.3} s, final residual {}",
                sd_metric(&r.image),
                sd_metric(&normalize_image(&r.image)),
                r.elapsed,
                r.final_residual().map_or("-".into(), |x| format!("{x:.4e}")),
            );
            if let Some(d) = &recon.depiht {
                println!(
                    "depiht: q {:.4}, guard fired {}/{} (phase I), {}/{} (phase II)",
                    d.q,
                    d.phase1.guard_fires,
                    d.phase1.guard_checks.len(),
                    d.phase2.guard_fires,
                    d.phase2.guard_checks.len()
                );
            }
        }
        Command::Postprocess {
            method,
            init,
            data,
            q,
            threshold,
        } => {
            let grid = config.grid()?;
            let g0 = io::read_image(&init, &grid)?;
            match method {
                PostMethod::Threshold => {
                    let thr = threshold.unwrap_or(config.metrics.threshold);
                    let out_img = threshold_op(&normalize_image(&g0), thr)?;
                    write_image_pair(out, "threshold", &out_img, &grid)?;
                    println!("threshold {thr}: {} of {} pixels set", out_img.support(), out_img.len());
                }
                PostMethod::Depiht => {
                    if q.is_some() {
                        config.depiht.q = q;
                    }
                    let (lambda, s) = load_data(&mut config, &data, exec)?;
                    let run = depiht(&g0.values, &lambda, &s, &config.depiht)?;
                    write_image_pair(out, "depiht", &run.result.image, &grid)?;
                    io::write_text_file(&out.join("depiht_history.csv"), &history_csv(&run.result))?;
                    println!(
                        "depiht: q {:.4}, support {} -> {}, sd {:.4}, {:.4} s",
                        run.q,
                        g0.support(),
                        run.result.image.support(),
                        sd_metric(&run.result.image),
                        run.result.elapsed
                    );
                }
            }
        }
        Command::Compare { noise } => {
            apply_noise(&mut config, &noise);
            let setup = Setup::new(&config, exec)?;
            let report = run_with_setup(&setup)?;
            report.write(out)?;
            print!("{}", report.summary());
            println!("\nreport written to {}", out.display());
        }
    }
    Ok(())
}

fn apply_noise(config: &mut ExperimentConfig, noise: &NoiseArgs) {
    if let Some(snr) = noise.snr {
        config.noise.snr_db = snr;
    }
    if let Some(n) = noise.frames {
        config.noise.frames = n;
    }
}

fn apply_solver(config: &mut ExperimentConfig, a: &SolverArgs) {
    let c = config;
    if let Some(v) = a.mu {
        c.aadmm.mu = v;
    }
    if let Some(v) = a.eps {
        c.aadmm.eps = v;
    }
    if let Some(v) = a.beta {
        c.aadmm.beta = v;
    }
    if let Some(v) = a.iters {
        c.aadmm.iters = v;
        c.landweber.iters = v;
    }
    if let Some(v) = a.alpha {
        c.landweber.alpha = v;
    }
    if a.q.is_some() {
        c.depiht.q = a.q;
    }
}

/// Normalized measurements and sensitivity matrix, from files where given
/// and from the forward model otherwise.
fn load_data(config: &mut ExperimentConfig, data: &DataArgs, exec: Execution) -> Result<(Vec<f64>, SensitivityMatrix)> {
    apply_noise(config, &data.noise);
    config.validate()?;
    let read_s = |p: &Path| io::read_matrix(p);
    let read_cal = |p: &Path| io::read_calibration(p);
    let needs_model = data.sensitivity.is_none() || data.calibration.is_none() || data.frames_path.is_none();
    let setup = if needs_model { Some(Setup::new(config, exec)?) } else { None };

    let s = match &data.sensitivity {
        Some(p) => read_s(p)?,
        None => setup.as_ref().unwrap().sensitivity.clone(),
    };
    let lambda = match &data.frames_path {
        Some(p) => {
            let frames = io::read_frames(p)?;
            let cal: CalibrationPair = match &data.calibration {
                Some(c) => read_cal(c)?,
                None => setup.as_ref().unwrap().calibration.pair.clone(),
            };
            let avg = ect_core::forward::average_frames(&frames)?;
            ect_core::forward::normalize(&avg, &cal)?.lambda
        }
        None => setup.as_ref().unwrap().simulate(data.kind)?.lambda,
    };
    if lambda.len() != s.rows() {
        return Err(Error::Dimension {
            context: "frames vs sensitivity rows",
            expected: s.rows(),
            got: lambda.len(),
        });
    }
    Ok((lambda, s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn frames_path_and_count_are_distinct() {
        let cli = Cli::try_parse_from(["ect", "reconstruct", "--frames", "f.csv", "--n-frames", "10"]).unwrap();
        assert!(matches!(cli.command, Command::Reconstruct { .. }));
    }
}

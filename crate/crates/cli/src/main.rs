//! Command-line front end: reconstruction, synthetic scenes and the
//! evaluation harness.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde_json::json;

use tensorfill::completion::{CompletionParams, RankSurrogate};
use tensorfill::grid::Stack;
use tensorfill::harness::metrics::{mask_from_indices, whole_series_mask};
use tensorfill::harness::sweep::{
    gap_length_settings, patch_size_settings, rate_settings, write_sweep_csv, BlockPlacement,
};
use tensorfill::harness::{
    apply_scenario, build_reference, evaluate_mae, expand_reference, run_sweep,
    simulate_contamination, synthesize, Method, ScenarioSpec, SynthParams,
};
use tensorfill::io::{read_series_csv, read_stack, write_series_csv, write_stack};
use tensorfill::pipeline::{prefill_linear, reconstruct_scene, PipelineParams};
use tensorfill::trend::{iterative_filter, FilterParams, SampleFlag, Series};

const SCENARIO_FILE: &str = "scenario.json";

#[derive(Parser)]
#[command(name = "tensorfill", version, about = "Gap filling and smoothing of gridded vegetation-index time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fill gaps by tensor completion, then smooth every pixel
    Reconstruct {
        input: PathBuf,
        output: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        /// Filter regularization weight
        #[arg(long, default_value_t = 1.0, value_parser = non_negative)]
        lambda: f64,
    },
    /// Generate a seeded synthetic scene
    Synth {
        output: PathBuf,
        #[arg(long, default_value_t = 64)]
        width: usize,
        #[arg(long, default_value_t = 64)]
        height: usize,
        #[arg(long, default_value_t = 18)]
        years: usize,
        #[arg(long)]
        seed: u64,
        /// Steps per year
        #[arg(long, default_value_t = 23)]
        nd: usize,
        /// Mean fraction of cloudy samples
        #[arg(long, default_value_t = 0.23, value_parser = unit_interval)]
        cloud_rate: f64,
        /// Also write the noiseless scene here
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Build the one-year reference curve of every pixel
    Reference { input: PathBuf, output: PathBuf },
    /// Impose the reliability codes of MASK_SRC on a reference
    Contaminate {
        reference: PathBuf,
        mask_src: PathBuf,
        output: PathBuf,
    },
    /// Add artificial gaps; the gap positions go to OUTPUT/scenario.json
    Scenario {
        input: PathBuf,
        output: PathBuf,
        /// Total missing fraction to reach with uniformly drawn gaps
        #[arg(long, value_parser = unit_interval, conflicts_with = "block", required_unless_present = "block")]
        random_rate: Option<f64>,
        /// Square gap: column, row, side, first step, length
        #[arg(long, num_args = 5, value_names = ["X", "Y", "S", "T0", "LEN"])]
        block: Option<Vec<usize>>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the MAE report of ESTIMATE against TRUTH as JSON
    Evaluate {
        truth: PathBuf,
        estimate: PathBuf,
        /// Score only the gaps listed in this scenario file
        #[arg(long)]
        gaps_only: Option<PathBuf>,
    },
    /// Score methods over a range of gap scenarios or tile sizes
    Sweep(SweepArgs),
    /// Smooth a single `t,value,ri` series
    Smooth {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, default_value_t = 1.0, value_parser = non_negative)]
        lambda: f64,
    },
}

#[derive(Args)]
struct SolverArgs {
    #[arg(long, default_value_t = 8, value_parser = patch_size)]
    patch_size: usize,
    /// Singular-value mass fraction defining each mode's effective rank
    #[arg(long, default_value_t = 0.85, value_parser = open_unit_interval)]
    tau: f64,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    max_iters: u64,
    #[arg(long, default_value_t = 1e-4, value_parser = positive)]
    tol: f64,
    /// Worker threads (0 = all cores)
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Complete the raw rows × cols × T tile instead of the rearranged tensor
    #[arg(long)]
    original_form: bool,
    #[arg(long, value_enum, default_value_t = Surrogate::Truncated)]
    surrogate: Surrogate,
}

#[derive(Clone, Copy, ValueEnum)]
enum Surrogate {
    Truncated,
    Nuclear,
}

impl SolverArgs {
    fn pipeline(&self, lambda: f64) -> PipelineParams {
        PipelineParams {
            patch_size: self.patch_size,
            completion: CompletionParams {
                tau: self.tau,
                max_iters: self.max_iters as usize,
                tol: self.tol,
                use_rearranged_form: !self.original_form,
                surrogate: match self.surrogate {
                    Surrogate::Truncated => RankSurrogate::Truncated,
                    Surrogate::Nuclear => RankSurrogate::Nuclear,
                },
                ..CompletionParams::default()
            },
            filter: FilterParams { lambda, ..FilterParams::default() },
            workers: self.workers,
        }
    }
}

#[derive(Args)]
#[group(id = "range", required = true, multiple = false, args = ["rates", "gap_lengths", "patch_sizes"])]
struct SweepArgs {
    input: PathBuf,
    /// Missing rates in percent, FROM:TO[:STEP]
    #[arg(long)]
    rates: Option<String>,
    /// Block gap lengths, FROM:TO[:STEP]
    #[arg(long)]
    gap_lengths: Option<String>,
    /// Comma-separated tile sizes
    #[arg(long, value_delimiter = ',')]
    patch_sizes: Option<Vec<usize>>,
    /// Comma-separated methods: tensor, tensor-original, linear
    #[arg(long, value_delimiter = ',', default_value = "tensor,linear")]
    methods: Vec<String>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Missing rate used by the tile-size sweep
    #[arg(long, default_value_t = 0.4, value_parser = unit_interval)]
    rate: f64,
    /// Side of the block for the gap-length sweep
    #[arg(long, default_value_t = 12)]
    block_size: usize,
    /// Fill the seconds column
    #[arg(long)]
    timing: bool,
    #[command(flatten)]
    solver: SolverArgs,
}

fn parse_f64(s: &str) -> std::result::Result<f64, String> {
    s.parse::<f64>().map_err(|e| e.to_string())
}

fn open_unit_interval(s: &str) -> std::result::Result<f64, String> {
    let v = parse_f64(s)?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} is not in (0, 1)"))
    }
}

fn unit_interval(s: &str) -> std::result::Result<f64, String> {
    let v = parse_f64(s)?;
    if (0.0..1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is not in [0, 1)"))
    }
}

fn non_negative(s: &str) -> std::result::Result<f64, String> {
    let v = parse_f64(s)?;
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{v} must be a finite non-negative number"))
    }
}

fn positive(s: &str) -> std::result::Result<f64, String> {
    let v = parse_f64(s)?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{v} must be positive"))
    }
}

fn patch_size(s: &str) -> std::result::Result<usize, String> {
    let v: usize = s.parse().map_err(|e: std::num::ParseIntError| e.to_string())?;
    if v >= 2 {
        Ok(v)
    } else {
        Err(format!("patch size must be at least 2, got {v}"))
    }
}

/// `FROM:TO[:STEP]`, inclusive.
fn parse_range(s: &str) -> Result<Vec<usize>> {
    let parts: Vec<usize> = s
        .split(':')
        .map(|p| p.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("invalid range {s:?}"))?;
    let (from, to, step) = match parts[..] {
        [a, b] => (a, b, 1),
        [a, b, c] => (a, b, c),
        _ => bail!("range {s:?} must be FROM:TO or FROM:TO:STEP"),
    };
    if step == 0 || from > to {
        bail!("range {s:?} is empty");
    }
    Ok((from..=to).step_by(step).collect())
}

/// Removes a freshly created output when the command fails.
struct OutputGuard {
    path: PathBuf,
    armed: bool,
}

impl OutputGuard {
    fn new(path: &Path) -> Self {
        OutputGuard { path: path.to_path_buf(), armed: !path.exists() }
    }

    fn finish<T>(mut self, result: Result<T>) -> Result<T> {
        if result.is_ok() {
            self.armed = false;
        }
        result
    }
}

impl Drop for OutputGuard {
    fn drop(&mut self) {
        if self.armed {
            let _ = if self.path.is_dir() {
                fs::remove_dir_all(&self.path)
            } else {
                fs::remove_file(&self.path)
            };
        }
    }
}

fn load(path: &Path) -> Result<Stack> {
    read_stack(path).with_context(|| format!("cannot read stack {}", path.display()))
}

fn save(stack: &Stack, path: &Path) -> Result<()> {
    write_stack(stack, path).with_context(|| format!("cannot write stack {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Reconstruct { input, output, solver, lambda } => {
            let guard = OutputGuard::new(&output);
            guard.finish((|| {
                let stack = load(&input)?;
                let params = solver.pipeline(lambda);
                let out = reconstruct_scene(&stack, &params)?;
                save(&out, &output)
            })())
        }
        Command::Synth { output, width, height, years, seed, nd, cloud_rate, truth } => {
            let guard = OutputGuard::new(&output);
            let truth_guard = truth.as_deref().map(OutputGuard::new);
            let result = (|| {
                let scene = synthesize(&SynthParams {
                    height,
                    width,
                    nd,
                    ny: years,
                    seed,
                    cloud_rate,
                    ..SynthParams::default()
                })?;
                save(&scene.observed, &output)?;
                if let Some(t) = &truth {
                    save(&scene.truth, t)?;
                }
                Ok(())
            })();
            let result = match truth_guard {
                Some(g) => g.finish(result),
                None => result,
            };
            guard.finish(result)
        }
        Command::Reference { input, output } => {
            let guard = OutputGuard::new(&output);
            guard.finish((|| save(&build_reference(&load(&input)?)?, &output))())
        }
        Command::Contaminate { reference, mask_src, output } => {
            let guard = OutputGuard::new(&output);
            guard.finish((|| {
                let sim = simulate_contamination(&load(&reference)?, &load(&mask_src)?)?;
                save(&sim, &output)
            })())
        }
        Command::Scenario { input, output, random_rate, block, seed } => {
            let spec = match (random_rate, block) {
                (Some(target_rate), None) => ScenarioSpec::Random { target_rate, seed },
                (None, Some(b)) => ScenarioSpec::Block {
                    x: b[0],
                    y: b[1],
                    size: b[2],
                    t_start: b[3],
                    gap_length: b[4],
                },
                _ => bail!("give exactly one of --random-rate and --block"),
            };
            let guard = OutputGuard::new(&output);
            guard.finish((|| {
                let outcome = apply_scenario(&load(&input)?, &spec)?;
                save(&outcome.stack, &output)?;
                let record = json!({ "spec": spec, "gaps": outcome.gaps });
                fs::write(output.join(SCENARIO_FILE), serde_json::to_vec(&record)?)?;
                info!("{} samples withheld", outcome.gaps.len());
                Ok(())
            })())
        }
        Command::Evaluate { truth, estimate, gaps_only } => {
            let estimate = load(&estimate)?;
            let mut truth = load(&truth)?;
            if truth.ny() == 1 && estimate.ny() > 1 {
                truth = expand_reference(&truth, estimate.ny(), estimate.pad())?;
            }
            let mask = match gaps_only {
                Some(path) => {
                    let record: serde_json::Value = serde_json::from_slice(
                        &fs::read(&path).with_context(|| format!("cannot read {}", path.display()))?,
                    )?;
                    let gaps: Vec<usize> = serde_json::from_value(record["gaps"].clone())
                        .with_context(|| format!("{} has no gap list", path.display()))?;
                    mask_from_indices(truth.values.len(), &gaps)?
                }
                None => whole_series_mask(&truth),
            };
            let report = evaluate_mae(&truth, &estimate, &mask)?;
            let mut stdout = std::io::stdout().lock();
            match writeln!(stdout, "{}", serde_json::to_string_pretty(&report)?) {
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
                other => Ok(other?),
            }
        }
        Command::Sweep(args) => {
            let guard = OutputGuard::new(&args.out);
            guard.finish(sweep(&args))
        }
        Command::Smooth { input, output, lambda } => {
            let guard = OutputGuard::new(&output);
            guard.finish((|| {
                let record = read_series_csv(&input)?;
                let valid = record.valid();
                let values: Vec<f64> = record.values.iter().map(|v| v.unwrap_or(0.0)).collect();
                let filled = prefill_linear(&values, &valid)?;
                let flags = record.reliability.iter().map(|&c| SampleFlag::from(c)).collect();
                let params = FilterParams { lambda, ..FilterParams::default() };
                let smooth = iterative_filter(&Series::new(filled, flags)?, &params)?;
                let codes = vec![tensorfill::grid::Reliability::Good; smooth.len()];
                write_series_csv(&output, &record.t, &smooth, &codes)?;
                Ok(())
            })())
        }
    }
}

fn sweep(args: &SweepArgs) -> Result<()> {
    let base = load(&args.input)?;
    let methods: Vec<Method> = args
        .methods
        .iter()
        .map(|m| m.parse())
        .collect::<std::result::Result<_, _>>()?;
    let params = args.solver.pipeline(FilterParams::default().lambda);
    let settings = if let Some(r) = &args.rates {
        let rates: Vec<u32> = parse_range(r)?.into_iter().map(|v| v as u32).collect();
        if rates.iter().any(|&v| v == 0 || v >= 100) {
            bail!("rates must lie strictly between 0 and 100 percent");
        }
        rate_settings(&rates, params.patch_size, args.seed)
    } else if let Some(g) = &args.gap_lengths {
        let block = BlockPlacement::centred(&base, args.block_size, params.patch_size);
        gap_length_settings(&parse_range(g)?, block, params.patch_size)
    } else if let Some(sizes) = &args.patch_sizes {
        if let Some(bad) = sizes.iter().find(|&&s| s < 2) {
            bail!("patch size must be at least 2, got {bad}");
        }
        patch_size_settings(sizes, args.rate, args.seed)
    } else {
        bail!("give one of --rates, --gap-lengths, --patch-sizes");
    };
    let rows = run_sweep(&base, &settings, &methods, &params);
    let file = fs::File::create(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    write_sweep_csv(&rows, file, args.timing)?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

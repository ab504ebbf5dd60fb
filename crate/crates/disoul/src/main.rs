use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use disoul::acceptance::{run_acceptance, AcceptanceOptions};
use disoul::config::{parse_methods, ConfigError, ScenarioConfig};
use disoul::harness::{
    evaluate, initial_problem, parse_values, run_sweep, simulate, write_cdf_csv, write_sweep_csv, Scenario, SweepParam,
};
use disoul::io::{write_array_table, write_channel_table, write_problem, write_waveform};
use disoul::weight::{validate_weight, write_weight_csv};
use disoul::Error;

/// Direct source localization from distributed array snapshots.
#[derive(Parser)]
#[command(name = "disoul", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate trials and print each method's estimate.
    Trial(TrialArgs),
    /// Sub-meter probability against one scenario parameter.
    Sweep(SweepArgs),
    /// Sub-meter probability against the squared weight on the two-point scene.
    ValidateWeight(WeightArgs),
    /// Run the acceptance checks.
    Selftest(SelftestArgs),
}

#[derive(Args)]
struct Common {
    /// Key-value scenario file; unset keys keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Comma-separated list, e.g. `disoul,srls`.
    #[arg(long)]
    methods: Option<String>,
    /// Worker threads (0: one per core).
    #[arg(long)]
    workers: Option<usize>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrialArgs {
    #[command(flatten)]
    common: Common,
    /// First trial index.
    #[arg(long, default_value_t = 0)]
    index: usize,
    /// Directory for array, channel, waveform and problem dumps.
    #[arg(long)]
    dump: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// One of e_n0, bandwidth, antennas, ray_arrival, calibration.
    #[arg(long)]
    param: String,
    /// `start:step:stop` or a comma-separated list.
    #[arg(long)]
    values: String,
    /// Also write the per-method error CDF here.
    #[arg(long)]
    cdf: Option<PathBuf>,
}

#[derive(Args)]
struct WeightArgs {
    #[command(flatten)]
    common: Common,
    /// Per-station SNR in dB.
    #[arg(long, default_value_t = 20.0, allow_negative_numbers = true)]
    snr: f64,
    /// Squared weights to try.
    #[arg(long, default_value = "0.5:0.5:5")]
    weights: String,
}

#[derive(Args)]
struct SelftestArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Comma-separated criterion numbers; all when absent.
    #[arg(long)]
    only: Option<String>,
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

impl Common {
    fn scenario(&self) -> Result<ScenarioConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => ScenarioConfig::from_file(path)?,
            None => ScenarioConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        if let Some(m) = &self.methods {
            cfg.methods = parse_methods(m).map_err(|e| ConfigError::at(None, format!("--methods: {e}")))?;
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn output(&self) -> Result<Box<dyn Write>, Error> {
        Ok(match &self.out {
            Some(p) => Box::new(BufWriter::new(File::create(p)?)),
            None => Box::new(BufWriter::new(io::stdout().lock())),
        })
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Error> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn trial(args: &TrialArgs) -> Result<(), Error> {
    let cfg = args.common.scenario()?;
    // A single trial unless --trials asks for more.
    let count = args.common.trials.unwrap_or(1);
    let sc = Scenario::new(cfg)?;
    let mut out = args.common.output()?;
    if let Some(dir) = &args.dump {
        fs::create_dir_all(dir)?;
    }
    for index in args.index..args.index + count {
        let data = simulate(&sc, index)?;
        if let Some(dir) = &args.dump {
            for (l, g) in data.geometries.iter().enumerate() {
                write_array_table(g, create(dir, &format!("trial{index}_array{l}.txt"))?)?;
            }
            write_channel_table(&data.channel, create(dir, &format!("trial{index}_channel.txt"))?)?;
            for (l, w) in data.waveforms.iter().enumerate() {
                write_waveform(w, create(dir, &format!("trial{index}_waveform{l}.bin"))?)?;
            }
            if let Some(p) = initial_problem(&sc, &data)? {
                write_problem(&p, create(dir, &format!("trial{index}_problem.txt"))?)?;
            }
        }
        write!(out, "{}", evaluate(&sc, &data)?)?;
    }
    out.flush()?;
    Ok(())
}

fn sweep(args: &SweepArgs) -> Result<(), Error> {
    let param: SweepParam = args.param.parse()?;
    let values = parse_values(&args.values)?;
    let cfg = args.common.scenario()?;
    // Check every point before spending time on any of them.
    for &v in &values {
        param.apply(&cfg, v)?;
    }
    let table = run_sweep(&cfg, param, &values)?;
    let mut out = args.common.output()?;
    write_sweep_csv(&table, &mut out)?;
    out.flush()?;
    if let Some(p) = &args.cdf {
        write_cdf_csv(&table, BufWriter::new(File::create(p)?))?;
    }
    Ok(())
}

fn validate(args: &WeightArgs) -> Result<(), Error> {
    let weights = parse_values(&args.weights)?;
    let mut cfg = args.common.scenario()?;
    if args.common.trials.is_none() {
        cfg.trials = 100;
    }
    let rows = validate_weight(&cfg, args.snr, cfg.trials, &weights)?;
    let mut out = args.common.output()?;
    write_weight_csv(&rows, &mut out)?;
    out.flush()?;
    Ok(())
}

fn selftest(args: &SelftestArgs) -> Result<bool, Error> {
    let only = match &args.only {
        Some(s) => s
            .split(',')
            .map(|t| t.trim().parse::<u8>().ok().filter(|n| (1..=10).contains(n)))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::InvalidValues(s.clone()))?,
        None => Vec::new(),
    };
    let opts = AcceptanceOptions {
        seed: args.seed,
        only,
        workers: args.workers,
    };
    let reports = run_acceptance(&opts, |r| println!("{r}"));
    let failed = reports.iter().filter(|r| !r.passed).count();
    println!("{} passed, {failed} failed", reports.len() - failed);
    Ok(failed == 0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Trial(a) => trial(a).map(|_| true),
        Command::Sweep(a) => sweep(a).map(|_| true),
        Command::ValidateWeight(a) => validate(a).map(|_| true),
        Command::Selftest(a) => selftest(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 1 } else { 2 })
        }
    }
}

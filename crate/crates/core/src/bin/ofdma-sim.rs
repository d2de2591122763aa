use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pf_ofdma::experiments::{self, ExperimentConfig, Method};
use pf_ofdma::waterfill::{rate_on_set, waterfill};
use pf_ofdma::Error;

#[derive(Parser, Debug)]
#[command(name = "ofdma-sim", version, about = "Proportional-rate-fair OFDMA allocation simulator")]
struct Cli {
    /// Increase log output on stderr.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run every configured method at every power level; writes trials.csv,
    /// timings.csv, summary.csv and config.json.
    Simulate(RunArgs),
    /// As `simulate`, plus plot-ready sum_rate_vs_power.csv and delta_vs_power.csv.
    Sweep(RunArgs),
    /// Compare the proposed method with the exhaustive optimum on small instances.
    OracleCompare(RunArgs),
    /// Mean deviation and iteration count of the proposed method per power step.
    DeltaSensitivity {
        #[command(flatten)]
        run: RunArgs,
        /// Step sizes as fractions of P_total / N.
        #[arg(long, value_delimiter = ',', default_value = "0.25,0.125,0.0625,0.03125")]
        fractions: Vec<f64>,
    },
    /// Effect of the user order in the first subcarrier pass.
    OrderSensitivity {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 10)]
        permutations: usize,
    },
    /// Water-fill a budget over the given gains and print the split as JSON.
    WaterfillDebug {
        #[arg(long, value_delimiter = ',', required = true)]
        gains: Vec<f64>,
        #[arg(long)]
        budget: f64,
        /// Subcarrier count used for the 1/N rate normalization (default: number of gains).
        #[arg(long)]
        n_total: Option<usize>,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Experiment config (JSON). Omit to use the built-in reference setup.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides `base_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `trials`.
    #[arg(long)]
    trials: Option<usize>,
    /// Overrides `methods`, comma separated.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Move power toward the over-served user instead (comparison runs only).
    #[arg(long)]
    literal_pseudocode: bool,
}

impl RunArgs {
    fn load(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::Config {
                    field: "--config".into(),
                    message: format!("{}: {e}", path.display()),
                })?;
                ExperimentConfig::from_json_str(&text)?
            }
            None => ExperimentConfig::table1(),
        };
        if let Some(seed) = self.seed {
            cfg.base_seed = seed;
        }
        if let Some(trials) = self.trials {
            cfg.trials = trials;
        }
        if let Some(methods) = &self.methods {
            cfg.methods = methods
                .iter()
                .map(|m| m.trim().parse::<Method>())
                .collect::<Result<_, _>>()
                .map_err(|e| Error::Config {
                    field: "--methods".into(),
                    message: e,
                })?;
        }
        cfg.literal_pseudocode |= self.literal_pseudocode;
        cfg.validate()?;
        Ok(cfg)
    }

    fn prepare(&self) -> Result<(ExperimentConfig, PathBuf), Error> {
        let cfg = self.load()?;
        fs::create_dir_all(&self.out)?;
        fs::write(self.out.join("config.json"), cfg.to_json_pretty())?;
        Ok((cfg, self.out.clone()))
    }
}

fn log(verbose: u8, msg: impl AsRef<str>) {
    if verbose > 0 {
        eprintln!("{}", msg.as_ref());
    }
}

fn write_run(out: &Path, run: &experiments::SweepOutput) -> Result<(), Error> {
    experiments::write_trials_csv(out.join("trials.csv"), &run.records)?;
    experiments::write_timings_csv(out.join("timings.csv"), &run.records)?;
    experiments::write_summary_csv(out.join("summary.csv"), &run.summary)?;
    Ok(())
}

// A closed pipe (e.g. `| head`) is not an error worth reporting.
fn print_summary(run: &experiments::SweepOutput) {
    let mut out = io::stdout().lock();
    let _ = writeln!(out, "method,total_power_w,trials,mean_sum_rate,mean_delta,mean_iterations");
    for s in &run.summary {
        let _ = writeln!(
            out,
            "{},{},{},{:.6},{:.6e},{:.2}",
            s.method, s.total_power, s.trials, s.sum_rate.mean, s.delta.mean, s.iterations.mean
        );
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let v = cli.verbose;
    match cli.command {
        Command::Simulate(args) => {
            let (cfg, out) = args.prepare()?;
            log(v, format!("running {} trials x {} powers", cfg.trials, cfg.power_sweep_w.len()));
            let run = experiments::sweep(&cfg)?;
            write_run(&out, &run)?;
            print_summary(&run);
        }
        Command::Sweep(args) => {
            let (cfg, out) = args.prepare()?;
            log(v, format!("running {} trials x {} powers", cfg.trials, cfg.power_sweep_w.len()));
            let run = experiments::sweep(&cfg)?;
            write_run(&out, &run)?;
            experiments::write_wide_csv(out.join("sum_rate_vs_power.csv"), &run.summary, &cfg.methods, |r| {
                r.sum_rate.mean
            })?;
            experiments::write_wide_csv(out.join("delta_vs_power.csv"), &run.summary, &cfg.methods, |r| r.delta.mean)?;
            print_summary(&run);
        }
        Command::OracleCompare(args) => {
            let (cfg, out) = args.prepare()?;
            let rows = experiments::oracle_compare(&cfg)?;
            experiments::write_oracle_csv(out.join("oracle.csv"), &rows)?;
            let mut gaps: Vec<f64> = rows.iter().map(|r| r.gap).collect();
            gaps.sort_by(f64::total_cmp);
            let pct = |q: f64| gaps[((gaps.len() - 1) as f64 * q).round() as usize];
            let above = rows.iter().filter(|r| r.heuristic_rate > r.oracle_rate).count();
            println!(
                "instances={} median_gap={:.6e} p95_gap={:.6e} max_gap={:.6e} heuristic_above_oracle={}",
                rows.len(),
                pct(0.5),
                pct(0.95),
                pct(1.0),
                above
            );
        }
        Command::DeltaSensitivity { run, fractions } => {
            let (cfg, out) = run.prepare()?;
            let rows = experiments::delta_sensitivity(&cfg, &fractions)?;
            experiments::write_delta_sensitivity_csv(out.join("delta_sensitivity.csv"), &rows)?;
            println!("delta_fraction,total_power_w,mean_delta,mean_iterations");
            for r in rows {
                println!("{},{},{:.6e},{:.2}", r.fraction, r.total_power, r.delta.mean, r.iterations.mean);
            }
        }
        Command::OrderSensitivity { run, permutations } => {
            let (cfg, out) = run.prepare()?;
            let s = experiments::order_sensitivity(&cfg, permutations)?;
            let json = serde_json::json!({
                "trials": s.trials,
                "permutations": s.permutations,
                "mean_relative_spread": s.mean_relative_spread,
                "max_relative_spread": s.max_relative_spread,
                "mean_sum_rate_spread": s.mean_sum_rate_spread,
                "identical_fraction": s.identical_fraction,
            });
            let text = serde_json::to_string_pretty(&json)?;
            fs::write(out.join("order_sensitivity.json"), &text)?;
            println!("{text}");
        }
        Command::WaterfillDebug { gains, budget, n_total } => {
            let result = waterfill(&gains, budget)?;
            let rate = rate_on_set(&gains, &result.powers, n_total.unwrap_or(gains.len()))?;
            let json = serde_json::json!({
                "powers": result.powers,
                "water_level": result.water_level,
                "active": result.active,
                "total_power": result.total_power(),
                "rate_bps_per_hz": rate,
            });
            println!("{}", serde_json::to_string_pretty(&json)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

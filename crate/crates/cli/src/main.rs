use std::fs::{self, File};
use std::io::{stdout, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use pricerank::config::Config;
use pricerank::harness::{self, Axis, SearchSpace, SweepConfig};
use pricerank::io as formats;
use pricerank::suites::{self, Suite};
use pricerank_core::oracle::optimal_match;
use pricerank_core::workload::gen_scenario;
use pricerank_core::{run, EngineConfig, ScheduleKind, ScheduleSpec};

#[derive(Parser)]
#[command(
    name = "pricerank",
    version,
    about = "Price-ranked online double auctions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Settings {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set K=3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Settings {
    fn load(&self) -> Result<Config> {
        let mut cfg = match &self.config {
            Some(p) => Config::parse(
                &fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
            )?,
            None => Config::default(),
        };
        for kv in &self.overrides {
            let (k, v) = kv
                .split_once('=')
                .with_context(|| format!("expected KEY=VALUE, got {kv:?}"))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    Volatility,
    Interarrival,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scenario and write it as an offers CSV.
    Gen {
        #[command(flatten)]
        settings: Settings,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one schedule on an offers CSV (or a generated scenario) and report metrics.
    Run {
        #[command(flatten)]
        settings: Settings,
        #[arg(long)]
        schedule: ScheduleKind,
        /// Offers CSV; when absent a scenario is generated from the config.
        #[arg(long)]
        offers: Option<PathBuf>,
        /// Write the full event trace here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Tune a schedule's parameter on training scenarios.
    Tune {
        #[command(flatten)]
        settings: Settings,
        #[arg(long)]
        schedule: ScheduleKind,
    },
    /// Sweep volatility or interarrival across schedules.
    Sweep {
        #[command(flatten)]
        settings: Settings,
        #[arg(long, value_enum)]
        axis: AxisArg,
        /// Comma-separated grid values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        /// Comma-separated schedule kinds; all by default.
        #[arg(long, value_delimiter = ',')]
        schedules: Vec<ScheduleKind>,
        /// Use config parameters as given instead of tuning per grid point.
        #[arg(long)]
        no_tune: bool,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        aggregates: PathBuf,
    },
    /// Run a verification suite; exits nonzero on any violation.
    Verify {
        #[command(flatten)]
        settings: Settings,
        #[arg(long)]
        suite: Suite,
        #[arg(long, default_value = "mcafee")]
        schedule: ScheduleKind,
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Witness CSV destination; standard output when absent.
        #[arg(long)]
        witnesses: Option<PathBuf>,
    },
    /// Offline-optimal matching of an offers CSV.
    Oracle {
        #[arg(long)]
        offers: PathBuf,
    },
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(stdout().lock()),
    })
}

fn read_offers(path: &Path) -> Result<Vec<pricerank_core::Offer>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(formats::read_offers(f)?)
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Gen { settings, out } => {
            let scenario = settings.load()?.scenario()?;
            let offers = gen_scenario(&scenario, scenario.seed)?;
            formats::write_offers(output(out.as_deref())?, &offers)?;
        }
        Command::Run {
            settings,
            schedule,
            offers,
            trace,
        } => {
            let cfg = settings.load()?;
            let scenario = cfg.scenario()?;
            let spec = ScheduleSpec::new(schedule, cfg.schedule_params()?);
            let offers = match offers {
                Some(p) => read_offers(&p)?,
                None => gen_scenario(&scenario, scenario.seed)?,
            };
            let prepared = harness::prepare_offers(scenario.clone(), scenario.seed, offers);
            let m = harness::evaluate(&prepared, &spec)?;
            if let Some(path) = trace {
                let out = run(
                    &prepared.offers,
                    spec.build()?,
                    EngineConfig {
                        patience: scenario.patience,
                        seed: scenario.seed,
                    },
                )?;
                formats::write_trace(output(Some(&path))?, &out.trace)?;
            }
            println!("schedule,surplus_online,surplus_offline,efficiency,revenue,revenue_share,trades_online,trades_offline,degenerate");
            println!(
                "{},{},{},{:.6},{},{:.6},{},{},{}",
                m.schedule,
                m.surplus_online,
                m.surplus_offline,
                m.efficiency,
                m.revenue,
                m.revenue_share,
                m.trades_online,
                m.trades_offline,
                m.degenerate
            );
        }
        Command::Tune { settings, schedule } => {
            let cfg = settings.load()?;
            let scenario = cfg.scenario()?;
            let space = SearchSpace::default_for(schedule, &scenario);
            let r = harness::tune(
                schedule,
                &scenario,
                cfg.schedule_params()?,
                space,
                scenario.seed,
            )?;
            println!("p_star,lambda,window_size,score");
            for (p, s) in &r.scored {
                println!("{},{:.6},{},{:.6}", p.p_star, p.lambda, p.window_size, s);
            }
            eprintln!(
                "best: p_star={} lambda={:.6} window_size={} score={:.6}",
                r.params.p_star, r.params.lambda, r.params.window_size, r.score
            );
        }
        Command::Sweep {
            settings,
            axis,
            values,
            trials,
            schedules,
            no_tune,
            out,
            aggregates,
        } => {
            let cfg = settings.load()?;
            let base = cfg.scenario()?;
            let sweep = SweepConfig {
                axis: match axis {
                    AxisArg::Volatility => Axis::Volatility,
                    AxisArg::Interarrival => Axis::Interarrival,
                },
                values,
                seed: base.seed,
                base,
                schedules: if schedules.is_empty() {
                    ScheduleKind::ALL.to_vec()
                } else {
                    schedules
                },
                params: cfg.schedule_params()?,
                trials,
                tune: !no_tune,
            };
            let result = harness::sweep(&sweep)?;
            harness::write_rows(output(Some(&out))?, &result.rows)?;
            harness::write_aggregates(output(Some(&aggregates))?, &result.aggregates)?;
        }
        Command::Verify {
            settings,
            suite,
            schedule,
            instances,
            seed,
            witnesses,
        } => {
            let params = settings.load()?.schedule_params()?;
            let report = suites::run_suite(suite, schedule, params, instances, seed)?;
            eprintln!(
                "{} suite, {}: {} instances, {} checks, {} violations (sampled evidence, not a proof)",
                suite,
                report.schedule.map_or("mcafee".to_string(), |k| k.to_string()),
                report.instances,
                report.checks,
                report.witnesses.len()
            );
            suites::write_witnesses(output(witnesses.as_deref())?, &report)?;
            if !report.passed() {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Oracle { offers } => {
            let offers = read_offers(&offers)?;
            let best = optimal_match(&offers);
            formats::write_matching(stdout().lock(), &best)?;
            eprintln!("surplus: {}", best.surplus);
        }
    }
    Ok(ExitCode::SUCCESS)
}

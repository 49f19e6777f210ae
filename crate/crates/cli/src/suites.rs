//! Verification suites over generated instances, as run by `verify`.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use anyhow::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use pricerank_core::verifier::{
    check_feasibility, check_impatient_reduction, check_no_deficit, check_schedule_validity,
    check_static_quotes, check_truthfulness, default_grid, observed_prices, random_instance,
    CheckResult,
};
use pricerank_core::workload::{gen_scenario, ScenarioConfig};
use pricerank_core::{
    run, BookSnapshot, EngineConfig, Money, Offer, ScheduleKind, ScheduleParams, ScheduleSpec,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Deficit,
    Feasible,
    Validity,
    Truthful,
    Prop1,
    Prop2,
}

impl Suite {
    pub const ALL: [Suite; 6] = [
        Suite::Deficit,
        Suite::Feasible,
        Suite::Validity,
        Suite::Truthful,
        Suite::Prop1,
        Suite::Prop2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Deficit => "deficit",
            Suite::Feasible => "feasible",
            Suite::Validity => "validity",
            Suite::Truthful => "truthful",
            Suite::Prop1 => "prop1",
            Suite::Prop2 => "prop2",
        }
    }

    /// The equivalence suites only concern the McAfee schedule.
    pub fn uses_schedule(self) -> bool {
        !matches!(self, Suite::Prop1 | Suite::Prop2)
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Suite::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown suite {s:?}"))
    }
}

/// One violation, located by instance seed and (where meaningful) agent and period.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Witness {
    pub instance_seed: u64,
    pub agent: Option<u64>,
    pub period: Option<u32>,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SuiteReport {
    pub suite: Suite,
    pub schedule: Option<ScheduleKind>,
    pub instances: usize,
    pub checks: usize,
    pub witnesses: Vec<Witness>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.witnesses.is_empty()
    }
}

/// Seed of the `i`-th instance of a suite run.
pub fn instance_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add(i as u64)
}

/// Scenario of roughly 200 offers with patience, arrival rate and drift
/// drawn from the experiment ranges.
pub fn ledger_scenario(seed: u64) -> Result<(Vec<Offer>, u32)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let vol = [0.0, 2f64.sqrt() / 40.0, 2f64.sqrt() / 10.0][rng.gen_range(0..3)];
    let config = ScenarioConfig {
        patience: rng.gen_range(0..=5),
        interarrival: [0.1, 0.25, 0.5, 1.0][rng.gen_range(0..4)],
        n_bids: 100,
        n_asks: 100,
        volatility_step: vol,
        ..Default::default()
    };
    Ok((gen_scenario(&config, seed)?, config.patience))
}

/// Truthfulness instance: up to 12 offers, patience 0..=3, values in [0, 2]
/// at cent resolution.
pub fn truthful_instance(seed: u64) -> (Vec<Offer>, u32) {
    let patience = (seed % 4) as u32;
    let offers = random_instance(
        seed,
        12,
        patience,
        6,
        Money::from_units(2),
        Money::from_micros(10_000),
    );
    (offers, patience)
}

/// Static book with up to 10 offers per side. Even seeds use whole-unit
/// values (many ties), odd seeds micro-unit values.
pub fn static_book(seed: u64) -> BookSnapshot {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nb = rng.gen_range(0..=10);
    let ns = rng.gen_range(0..=10);
    let coarse = seed.is_multiple_of(2);
    let draw = |rng: &mut ChaCha8Rng| {
        if coarse {
            Money::from_units(rng.gen_range(0..=10))
        } else {
            Money::from_micros(rng.gen_range(0..=10_000_000))
        }
    };
    let mut offers = Vec::new();
    for i in 0..nb {
        offers.push(Offer::buy(i as u64 + 1, 0, 0, draw(&mut rng)));
    }
    for i in 0..ns {
        offers.push(Offer::sell(i as u64 + 101, 0, 0, -draw(&mut rng)));
    }
    BookSnapshot::new(&offers)
}

/// Impatient instance: everyone departs on arrival.
pub fn impatient_instance(seed: u64) -> Vec<Offer> {
    random_instance(seed, 40, 0, 6, Money::from_units(4), Money::from_micros(1))
}

pub fn run_suite(
    suite: Suite,
    kind: ScheduleKind,
    params: ScheduleParams,
    instances: usize,
    seed: u64,
) -> Result<SuiteReport> {
    let spec = ScheduleSpec::new(kind, params);
    let per_instance = (0..instances)
        .into_par_iter()
        .map(|i| check_instance(suite, &spec, instance_seed(seed, i)))
        .collect::<Result<Vec<_>>>()?;
    let mut report = SuiteReport {
        suite,
        schedule: suite.uses_schedule().then_some(kind),
        instances,
        checks: 0,
        witnesses: Vec::new(),
    };
    for (checks, witnesses) in per_instance {
        report.checks += checks;
        report.witnesses.extend(witnesses);
    }
    Ok(report)
}

fn check_instance(suite: Suite, spec: &ScheduleSpec, s: u64) -> Result<(usize, Vec<Witness>)> {
    let witness = |agent: Option<u64>, period: Option<u32>, detail: String| Witness {
        instance_seed: s,
        agent,
        period,
        detail,
    };
    let mut out = Vec::new();
    let checks;
    match suite {
        Suite::Deficit | Suite::Feasible => {
            let (offers, patience) = ledger_scenario(s)?;
            let trace = run(&offers, spec.build()?, EngineConfig { patience, seed: s })?.trace;
            let result = if suite == Suite::Deficit {
                check_no_deficit(&trace)
            } else {
                check_feasibility(&trace)
            };
            checks = 1;
            if let CheckResult::Violation { period } = result {
                out.push(witness(None, Some(period), format!("{suite} violated")));
            }
        }
        Suite::Validity => {
            let offers = random_instance(s, 40, 3, 12, Money::from_units(2), Money::from_micros(1));
            let r = check_schedule_validity(
                &spec.build()?,
                &offers,
                EngineConfig {
                    patience: 3,
                    seed: s,
                },
                6,
                s,
            )?;
            checks = r.own_report_checks + r.online_checks + r.others_values_checks;
            for v in r.violations {
                out.push(witness(
                    Some(v.agent.0),
                    Some(v.period),
                    format!(
                        "{:?} perturbed={} witness={} before={} after={}",
                        v.property,
                        v.perturbed.map_or(String::new(), |p| p.0.to_string()),
                        v.witness,
                        v.quote_before,
                        v.quote_after
                    ),
                ));
            }
        }
        Suite::Truthful => {
            let (offers, patience) = truthful_instance(s);
            let config = EngineConfig { patience, seed: s };
            let sched = spec.build()?;
            let horizon = offers.iter().map(|o| o.depart).max().unwrap_or(0);
            let reports = offers
                .par_iter()
                .map(|o| {
                    let seen = observed_prices(&offers, o.id, &sched, config)?;
                    let grid = default_grid(o, patience, horizon, &seen);
                    Ok(check_truthfulness(&offers, o.id, &grid, &sched, config)?)
                })
                .collect::<Result<Vec<_>>>()?;
            checks = reports.iter().map(|r| r.tested).sum();
            for r in reports {
                if let Some((m, gain)) = r.best {
                    out.push(witness(
                        Some(r.agent.0),
                        None,
                        format!(
                            "misreport a={} d={} w={} gain={}",
                            m.arrival, m.depart, m.value, gain
                        ),
                    ));
                }
            }
        }
        Suite::Prop1 => {
            let book = static_book(s);
            let fallback = (Money::ZERO, -spec.params.v_max.abs());
            checks = 1;
            for m in check_static_quotes(&book, fallback) {
                out.push(witness(
                    Some(m.agent.0),
                    None,
                    format!("quote={} payment={}", m.quote, m.payment),
                ));
            }
        }
        Suite::Prop2 => {
            let offers = impatient_instance(s);
            checks = 1;
            for (t, engine, stat) in check_impatient_reduction(&offers, spec.params.v_max, s)? {
                out.push(witness(
                    None,
                    Some(t),
                    format!("engine={engine:?} static={stat:?}"),
                ));
            }
        }
    }
    Ok((checks, out))
}

pub fn write_witnesses<W: Write>(writer: W, report: &SuiteReport) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record([
        "suite",
        "schedule",
        "instance_seed",
        "agent",
        "period",
        "detail",
    ])?;
    for w in &report.witnesses {
        wtr.write_record([
            report.suite.name().to_string(),
            report
                .schedule
                .map_or(String::new(), |k| k.name().to_string()),
            w.instance_seed.to_string(),
            w.agent.map_or(String::new(), |a| a.to_string()),
            w.period.map_or(String::new(), |p| p.to_string()),
            w.detail.clone(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

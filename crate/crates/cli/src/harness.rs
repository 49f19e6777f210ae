//! Trials, parameter tuning and sweeps.

use std::io::Write;

use anyhow::Result;
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use statrs::distribution::{ContinuousCDF, StudentsT};

use pricerank_core::oracle::{optimal_match, OptimalMatching};
use pricerank_core::workload::{gen_scenario, ScenarioConfig};
use pricerank_core::{
    run, EngineConfig, Money, Offer, ScheduleKind, ScheduleParams, ScheduleSpec, Side,
};

#[derive(Clone, Debug, PartialEq)]
pub struct TrialMetrics {
    pub schedule: ScheduleKind,
    pub params: ScheduleParams,
    pub scenario: ScenarioConfig,
    pub seed: u64,
    pub instance_hash: String,
    pub surplus_online: Money,
    pub surplus_offline: Money,
    pub efficiency: f64,
    pub revenue: Money,
    pub revenue_share: f64,
    pub trades_online: usize,
    pub trades_offline: usize,
    /// Offline surplus was zero; efficiency is reported as 1.
    pub degenerate: bool,
}

/// A generated instance together with its offline benchmark.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub scenario: ScenarioConfig,
    pub seed: u64,
    pub offers: Vec<Offer>,
    pub offline: OptimalMatching,
    pub hash: String,
}

/// Hex SHA-256 prefix of the offer list, for checking that schedules saw
/// the same instance.
pub fn instance_hash(offers: &[Offer]) -> String {
    let mut h = Sha256::new();
    for o in offers {
        h.update(o.id.0.to_le_bytes());
        h.update([matches!(o.side, Side::Buy) as u8]);
        h.update(o.arrival.to_le_bytes());
        h.update(o.depart.to_le_bytes());
        h.update(o.value.micros().to_le_bytes());
    }
    hex::encode(&h.finalize()[..8])
}

pub fn prepare(scenario: &ScenarioConfig, seed: u64) -> Result<Prepared> {
    let offers = gen_scenario(scenario, seed)?;
    Ok(prepare_offers(scenario.clone(), seed, offers))
}

pub fn prepare_offers(scenario: ScenarioConfig, seed: u64, offers: Vec<Offer>) -> Prepared {
    let offline = optimal_match(&offers);
    let hash = instance_hash(&offers);
    Prepared {
        scenario,
        seed,
        offers,
        offline,
        hash,
    }
}

pub fn evaluate(prepared: &Prepared, spec: &ScheduleSpec) -> Result<TrialMetrics> {
    let config = EngineConfig {
        patience: prepared.scenario.patience,
        seed: prepared.seed,
    };
    let out = run(&prepared.offers, spec.build()?, config)?;
    let surplus_online = out.surplus_with(&prepared.offers);
    let offline = prepared.offline.surplus;
    let degenerate = offline == Money::ZERO;
    let ratio = |x: Money| {
        if degenerate {
            1.0
        } else {
            x.to_f64() / offline.to_f64()
        }
    };
    Ok(TrialMetrics {
        schedule: spec.kind,
        params: spec.params,
        scenario: prepared.scenario.clone(),
        seed: prepared.seed,
        instance_hash: prepared.hash.clone(),
        surplus_online,
        surplus_offline: offline,
        efficiency: ratio(surplus_online),
        revenue: out.revenue,
        revenue_share: if degenerate { 0.0 } else { ratio(out.revenue) },
        trades_online: out.trades.len(),
        trades_offline: prepared.offline.pairs.len(),
        degenerate,
    })
}

pub fn run_trial(
    scenario: &ScenarioConfig,
    spec: &ScheduleSpec,
    seed: u64,
) -> Result<TrialMetrics> {
    evaluate(&prepare(scenario, seed)?, spec)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed of evaluation trial `trial`. Top bit clear.
pub fn eval_seed(base: u64, trial: u64) -> u64 {
    splitmix64(base ^ splitmix64(trial)) & !(1 << 63)
}

/// Seed of training trial `trial`. Top bit set, so never equal to an
/// evaluation seed.
pub fn training_seed(base: u64, trial: u64) -> u64 {
    splitmix64(base ^ splitmix64(trial).rotate_left(17)) | (1 << 63)
}

pub const TUNE_ROUNDS: usize = 3;
pub const TUNE_CANDIDATES: usize = 9;
pub const TUNE_TRIALS: usize = 16;

/// The single parameter a schedule kind is tuned over.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SearchSpace {
    FixedPrice { lo: Money, hi: Money },
    Lambda { lo: f64, hi: f64 },
    Window { lo: usize, hi: usize },
    Nothing,
}

impl SearchSpace {
    pub fn default_for(kind: ScheduleKind, scenario: &ScenarioConfig) -> Self {
        match kind {
            ScheduleKind::Fixed => SearchSpace::FixedPrice {
                lo: Money::ZERO,
                hi: Money::from_f64(scenario.value_mean0 + scenario.value_halfwidth),
            },
            ScheduleKind::Ewma => SearchSpace::Lambda { lo: 0.0, hi: 1.0 },
            ScheduleKind::WindowMedian | ScheduleKind::WindowClear => {
                SearchSpace::Window { lo: 1, hi: 101 }
            }
            ScheduleKind::McAfee => SearchSpace::Nothing,
        }
    }

    fn bounds(&self) -> (f64, f64) {
        match *self {
            SearchSpace::FixedPrice { lo, hi } => (lo.to_f64(), hi.to_f64()),
            SearchSpace::Lambda { lo, hi } => (lo, hi),
            SearchSpace::Window { lo, hi } => (lo as f64, hi as f64),
            SearchSpace::Nothing => (0.0, 0.0),
        }
    }

    fn apply(&self, base: ScheduleParams, x: f64) -> ScheduleParams {
        let mut p = base;
        match self {
            SearchSpace::FixedPrice { .. } => p.p_star = Money::from_f64(x),
            SearchSpace::Lambda { .. } => p.lambda = x,
            SearchSpace::Window { .. } => p.window_size = x.round().max(1.0) as usize,
            SearchSpace::Nothing => {}
        }
        p
    }

    fn candidates(&self, lo: f64, hi: f64) -> Vec<f64> {
        if matches!(self, SearchSpace::Nothing) {
            return vec![0.0];
        }
        let mut xs: Vec<f64> = (0..TUNE_CANDIDATES)
            .map(|i| lo + (hi - lo) * i as f64 / (TUNE_CANDIDATES - 1) as f64)
            .collect();
        match self {
            SearchSpace::Window { .. } => xs.iter_mut().for_each(|x| *x = x.round().max(1.0)),
            SearchSpace::FixedPrice { .. } => xs
                .iter_mut()
                .for_each(|x| *x = Money::from_f64(*x).to_f64()),
            _ => {}
        }
        xs.dedup();
        xs
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TuneResult {
    pub params: ScheduleParams,
    pub score: f64,
    /// Every candidate scored, in evaluation order.
    pub scored: Vec<(ScheduleParams, f64)>,
}

/// Mean efficiency of `spec` over `instances`.
pub fn score(instances: &[Prepared], spec: &ScheduleSpec) -> Result<f64> {
    let effs = instances
        .par_iter()
        .map(|p| evaluate(p, spec).map(|m| m.efficiency))
        .collect::<Result<Vec<_>>>()?;
    Ok(effs.iter().sum::<f64>() / effs.len().max(1) as f64)
}

/// Training instances for tuning, on seeds disjoint from evaluation seeds.
pub fn training_set(scenario: &ScenarioConfig, seed: u64, trials: usize) -> Result<Vec<Prepared>> {
    (0..trials as u64)
        .into_par_iter()
        .map(|i| prepare(scenario, training_seed(seed, i)))
        .collect()
}

/// Iterative grid refinement: each round scores evenly spaced candidates
/// and narrows the interval to the neighbours of the best one.
pub fn tune_on(
    kind: ScheduleKind,
    base: ScheduleParams,
    space: SearchSpace,
    training: &[Prepared],
) -> Result<TuneResult> {
    let (mut lo, mut hi) = space.bounds();
    let mut scored: Vec<(ScheduleParams, f64)> = Vec::new();
    let mut best: Option<(ScheduleParams, f64)> = None;
    for _ in 0..TUNE_ROUNDS {
        let xs = space.candidates(lo, hi);
        let mut round_best = (0, f64::NEG_INFINITY);
        for (i, x) in xs.iter().enumerate() {
            let params = space.apply(base, *x);
            let s = score(training, &ScheduleSpec::new(kind, params))?;
            scored.push((params, s));
            if s > round_best.1 {
                round_best = (i, s);
            }
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((params, s));
            }
        }
        if xs.len() <= 1 {
            break;
        }
        let i = round_best.0;
        lo = xs[i.saturating_sub(1)];
        hi = xs[(i + 1).min(xs.len() - 1)];
    }
    let (params, score) = best.expect("at least one candidate");
    Ok(TuneResult {
        params,
        score,
        scored,
    })
}

pub fn tune(
    kind: ScheduleKind,
    scenario: &ScenarioConfig,
    base: ScheduleParams,
    space: SearchSpace,
    seed: u64,
) -> Result<TuneResult> {
    let training = training_set(scenario, seed, TUNE_TRIALS)?;
    tune_on(kind, base, space, &training)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Volatility,
    Interarrival,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Volatility => "volatility",
            Axis::Interarrival => "interarrival",
        }
    }

    fn apply(self, base: &ScenarioConfig, x: f64) -> ScenarioConfig {
        let mut c = base.clone();
        match self {
            Axis::Volatility => c.volatility_step = x,
            Axis::Interarrival => c.interarrival = x,
        }
        c
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub axis: Axis,
    pub values: Vec<f64>,
    pub base: ScenarioConfig,
    pub schedules: Vec<ScheduleKind>,
    pub params: ScheduleParams,
    pub trials: usize,
    pub seed: u64,
    /// Tune each schedule at each grid point before evaluating.
    pub tune: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub axis: Axis,
    pub grid_value: f64,
    pub trial: usize,
    pub metrics: TrialMetrics,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub axis: Axis,
    pub grid_value: f64,
    pub schedule: ScheduleKind,
    pub params: ScheduleParams,
    pub trials: usize,
    pub mean_efficiency: f64,
    pub ci95_halfwidth: f64,
    pub mean_revenue_share: f64,
    pub revenue_ci95_halfwidth: f64,
    pub degenerate_trials: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub aggregates: Vec<Aggregate>,
}

/// Mean and 95% confidence half-width (Student t over trials).
pub fn mean_ci95(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("n >= 2")
        .inverse_cdf(0.975);
    (mean, t * (var / n as f64).sqrt())
}

pub fn sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    let mut result = SweepResult::default();
    for &x in &cfg.values {
        let scenario = cfg.axis.apply(&cfg.base, x);
        let training = if cfg.tune {
            training_set(&scenario, cfg.seed, TUNE_TRIALS)?
        } else {
            Vec::new()
        };
        let specs = cfg
            .schedules
            .iter()
            .map(|&kind| {
                let params = if cfg.tune {
                    tune_on(
                        kind,
                        cfg.params,
                        SearchSpace::default_for(kind, &scenario),
                        &training,
                    )?
                    .params
                } else {
                    cfg.params
                };
                Ok(ScheduleSpec::new(kind, params))
            })
            .collect::<Result<Vec<_>>>()?;

        // Common random numbers: one instance per trial, shared by every schedule.
        let instances = (0..cfg.trials as u64)
            .into_par_iter()
            .map(|t| prepare(&scenario, eval_seed(cfg.seed, t)))
            .collect::<Result<Vec<_>>>()?;
        let jobs: Vec<(usize, usize)> = (0..specs.len())
            .flat_map(|s| (0..instances.len()).map(move |t| (s, t)))
            .collect();
        let metrics = jobs
            .par_iter()
            .map(|&(s, t)| evaluate(&instances[t], &specs[s]))
            .collect::<Result<Vec<_>>>()?;

        for (si, spec) in specs.iter().enumerate() {
            let block = &metrics[si * instances.len()..(si + 1) * instances.len()];
            let effs: Vec<f64> = block.iter().map(|m| m.efficiency).collect();
            let shares: Vec<f64> = block.iter().map(|m| m.revenue_share).collect();
            let (mean_efficiency, ci95_halfwidth) = mean_ci95(&effs);
            let (mean_revenue_share, revenue_ci95_halfwidth) = mean_ci95(&shares);
            result.aggregates.push(Aggregate {
                axis: cfg.axis,
                grid_value: x,
                schedule: spec.kind,
                params: spec.params,
                trials: block.len(),
                mean_efficiency,
                ci95_halfwidth,
                mean_revenue_share,
                revenue_ci95_halfwidth,
                degenerate_trials: block.iter().filter(|m| m.degenerate).count(),
            });
            for (trial, m) in block.iter().enumerate() {
                result.rows.push(SweepRow {
                    axis: cfg.axis,
                    grid_value: x,
                    trial,
                    metrics: m.clone(),
                });
            }
        }
    }
    Ok(result)
}

pub const ROW_HEADER: [&str; 13] = [
    "grid_axis",
    "grid_value",
    "schedule",
    "trial",
    "seed",
    "instance_hash",
    "surplus_online",
    "surplus_offline",
    "efficiency",
    "revenue",
    "revenue_share",
    "trades_online",
    "trades_offline",
];

pub const AGGREGATE_HEADER: [&str; 13] = [
    "grid_axis",
    "grid_value",
    "schedule",
    "trials",
    "mean_efficiency",
    "ci95_halfwidth",
    "mean_revenue_share",
    "revenue_ci95_halfwidth",
    "degenerate_trials",
    "p_star",
    "lambda",
    "window_size",
    "v_max",
];

fn f6(x: f64) -> String {
    format!("{x:.6}")
}

pub fn write_rows<W: Write>(writer: W, rows: &[SweepRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(ROW_HEADER)?;
    for r in rows {
        let m = &r.metrics;
        wtr.write_record([
            r.axis.name().to_string(),
            f6(r.grid_value),
            m.schedule.name().to_string(),
            r.trial.to_string(),
            m.seed.to_string(),
            m.instance_hash.clone(),
            m.surplus_online.to_string(),
            m.surplus_offline.to_string(),
            f6(m.efficiency),
            m.revenue.to_string(),
            f6(m.revenue_share),
            m.trades_online.to_string(),
            m.trades_offline.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_aggregates<W: Write>(writer: W, aggregates: &[Aggregate]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(AGGREGATE_HEADER)?;
    for a in aggregates {
        wtr.write_record([
            a.axis.name().to_string(),
            f6(a.grid_value),
            a.schedule.name().to_string(),
            a.trials.to_string(),
            f6(a.mean_efficiency),
            f6(a.ci95_halfwidth),
            f6(a.mean_revenue_share),
            f6(a.revenue_ci95_halfwidth),
            a.degenerate_trials.to_string(),
            a.params.p_star.to_string(),
            f6(a.params.lambda),
            a.params.window_size.to_string(),
            a.params.v_max.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

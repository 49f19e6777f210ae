//! Empirical checks of mechanism properties.
//!
//! Everything here works by re-execution: the engine is run on the original
//! instance and on perturbed copies, and outcomes are compared. A clean
//! report is evidence over the sampled instances, not a proof.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::{run, EngineConfig, EngineError, Market};
use crate::model::{
    inventory_level, ledger_balance, utility, AgentOutcome, Offer, OfferId, OfferStatus, Period,
    Side, TraceEventKind, TrialTrace,
};
use crate::money::Money;
use crate::schedules::{
    mcafee_static, quote_mcafee, BookSnapshot, ClosedBatch, PriceSchedule, ScheduleState,
};

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum VerifyError {
    #[error("offer {0} is not part of the instance")]
    UnknownAgent(OfferId),
    #[error("misreport {0:?} breaks the reporting rules for the true type")]
    GridViolation(Misreport),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckResult {
    Pass,
    Violation { period: Period },
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        matches!(self, CheckResult::Pass)
    }
}

fn first_negative(trace: &TrialTrace, level: impl Fn(&TrialTrace, Period) -> bool) -> CheckResult {
    let Some(last) = trace.last_period() else {
        return CheckResult::Pass;
    };
    let mut periods: Vec<Period> = trace.events().iter().map(|e| e.period).collect();
    periods.dedup();
    debug_assert_eq!(periods.last(), Some(&last));
    match periods.into_iter().find(|&t| level(trace, t)) {
        Some(period) => CheckResult::Violation { period },
        None => CheckResult::Pass,
    }
}

/// The auctioneer's cash never goes negative.
pub fn check_no_deficit(trace: &TrialTrace) -> CheckResult {
    first_negative(trace, |tr, t| ledger_balance(tr, t) < Money::ZERO)
}

/// The auctioneer never releases an item it does not hold.
pub fn check_feasibility(trace: &TrialTrace) -> CheckResult {
    first_negative(trace, |tr, t| inventory_level(tr, t) < 0)
}

// ---------------------------------------------------------------------------
// Schedule validity
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum ValidityProperty {
    /// Quote independent of the agent's own report.
    OwnReport,
    /// Quote independent of later arrivals.
    Online,
    /// Quote independent of other priced-in active agents' values.
    OthersValues,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ValidityViolation {
    pub property: ValidityProperty,
    pub period: Period,
    pub agent: OfferId,
    /// Agent whose report was perturbed, when different from `agent`.
    pub perturbed: Option<OfferId>,
    /// Perturbed value (or cut period for the online check).
    pub witness: Money,
    pub quote_before: Money,
    pub quote_after: Money,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidityReport {
    pub own_report_checks: usize,
    pub online_checks: usize,
    pub others_values_checks: usize,
    pub violations: Vec<ValidityViolation>,
}

impl ValidityReport {
    pub fn passed(&self, property: ValidityProperty) -> bool {
        !self.violations.iter().any(|v| v.property == property)
    }
}

/// Value drawn from the sign-feasible range around `value`.
fn random_value(rng: &mut ChaCha8Rng, side: Side, value: Money) -> Money {
    let span = value.abs().micros() * 2 + Money::ONE.micros();
    let mag = Money::from_micros(rng.gen_range(0..=span));
    match side {
        Side::Buy => mag,
        Side::Sell => -mag,
    }
}

fn group_by_arrival(instance: &[Offer]) -> (BTreeMap<Period, Vec<Offer>>, Period) {
    let mut by_period: BTreeMap<Period, Vec<Offer>> = BTreeMap::new();
    for o in instance {
        by_period.entry(o.arrival).or_default().push(*o);
    }
    let horizon = instance.iter().map(|o| o.depart + 1).max().unwrap_or(0);
    (by_period, horizon)
}

/// Probes a schedule for dependence on the quoted agent's own report, on
/// future arrivals and on other priced-in agents' values.
///
/// At every period of a run on `instance`, up to `n_perturbations` agents
/// get their own report perturbed and up to `n_perturbations` pairs get the
/// other agent's value perturbed; quotes are recomputed from the schedule
/// state at the start of that period. The online check re-runs the instance
/// truncated at `n_perturbations` random cut periods.
pub fn check_schedule_validity<S: PriceSchedule + Clone>(
    schedule: &S,
    instance: &[Offer],
    config: EngineConfig,
    n_perturbations: usize,
    seed: u64,
) -> Result<ValidityReport, VerifyError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = ValidityReport::default();
    let (by_period, horizon) = group_by_arrival(instance);
    let empty = Vec::new();
    let mut market = Market::new(schedule.clone(), config);

    for t in 0..horizon {
        let arrivals = by_period.get(&t).unwrap_or(&empty);
        let book = market.opening_book(arrivals);
        let mut opened = market.schedule().clone();
        opened.open_period(t, &book);
        let active: Vec<Offer> = market.active_offers().chain(arrivals).copied().collect();
        let reopen = |book: &BookSnapshot| {
            let mut s = market.schedule().clone();
            s.open_period(t, book);
            s
        };

        // Own report.
        for _ in 0..n_perturbations.min(active.len()) {
            let me = *active.choose(&mut rng).expect("non-empty");
            let mut fake = me;
            fake.value = random_value(&mut rng, me.side, me.value);
            fake.arrival = rng.gen_range(me.arrival..=t);
            let latest = fake.arrival + config.patience;
            fake.depart = rng.gen_range(t..=latest.max(t));
            let moved = reopen(&book.with_value(me.id, fake.value));
            let before = opened.quote(t, &me);
            let after = moved.quote(t, &fake);
            report.own_report_checks += 1;
            if before != after {
                report.violations.push(ValidityViolation {
                    property: ValidityProperty::OwnReport,
                    period: t,
                    agent: me.id,
                    perturbed: None,
                    witness: fake.value,
                    quote_before: before,
                    quote_after: after,
                });
            }
        }

        // Other agents' values.
        let priced_in: Vec<Offer> = active
            .iter()
            .filter(|o| opened.quote(t, o) <= o.value)
            .copied()
            .collect();
        if active.len() >= 2 && !priced_in.is_empty() {
            for _ in 0..n_perturbations {
                let other = *priced_in.choose(&mut rng).expect("non-empty");
                let Some(me) = active
                    .iter()
                    .filter(|o| o.id != other.id)
                    .copied()
                    .collect::<Vec<_>>()
                    .choose(&mut rng)
                    .copied()
                else {
                    break;
                };
                let f_other = opened.quote(t, &other);
                // Keep the perturbed agent priced in: value at or above its quote.
                let lo = f_other.micros();
                let hi = match other.side {
                    Side::Buy => lo.max(other.value.micros()) * 2 + Money::ONE.micros(),
                    Side::Sell => 0,
                };
                if lo > hi {
                    continue;
                }
                let new_value = Money::from_micros(rng.gen_range(lo..=hi));
                let moved_book = book.with_value(other.id, new_value);
                let moved = reopen(&moved_book);
                let mut other_fake = other;
                other_fake.value = new_value;
                if moved.quote(t, &other_fake) > new_value {
                    continue;
                }
                report.others_values_checks += 1;
                let before = opened.quote(t, &me);
                let after = moved.quote(t, &me);
                let priced_in_before = before <= me.value;
                let broken = if priced_in_before {
                    before != after
                } else {
                    after <= me.value
                };
                if broken {
                    report.violations.push(ValidityViolation {
                        property: ValidityProperty::OthersValues,
                        period: t,
                        agent: me.id,
                        perturbed: Some(other.id),
                        witness: new_value,
                        quote_before: before,
                        quote_after: after,
                    });
                }
            }
        }

        market.step(arrivals)?;
    }

    // Online computability: truncating future arrivals leaves earlier quotes alone.
    let full = market.finish();
    let full_quotes = quote_table(&full.trace);
    for _ in 0..n_perturbations {
        if horizon == 0 {
            break;
        }
        let cut = rng.gen_range(0..horizon);
        let truncated: Vec<Offer> = instance
            .iter()
            .filter(|o| o.arrival <= cut)
            .copied()
            .collect();
        let short = run(&truncated, schedule.clone(), config)?;
        report.online_checks += 1;
        for ((period, id), q) in quote_table(&short.trace) {
            if period > cut {
                continue;
            }
            let before = full_quotes.get(&(period, id)).copied();
            if before != Some(q) {
                report.violations.push(ValidityViolation {
                    property: ValidityProperty::Online,
                    period,
                    agent: id,
                    perturbed: None,
                    witness: Money::from_units(cut as i64),
                    quote_before: before.unwrap_or(Money::ZERO),
                    quote_after: q,
                });
            }
        }
    }
    Ok(report)
}

fn quote_table(trace: &TrialTrace) -> BTreeMap<(Period, OfferId), Money> {
    trace
        .events()
        .iter()
        .filter_map(|e| match e.kind {
            TraceEventKind::Quote { quote, .. } => Some(((e.period, e.offer), quote)),
            _ => None,
        })
        .collect()
}

/// A deliberately invalid schedule that quotes every agent its own value.
/// Used as a negative control for the validity checks.
#[derive(Clone, Debug, Default)]
pub struct OwnValueSchedule;

impl PriceSchedule for OwnValueSchedule {
    fn open_period(&mut self, _t: Period, _book: &BookSnapshot) {}

    fn quote(&self, _t: Period, target: &Offer) -> Money {
        target.value
    }

    fn close_period(&mut self, _t: Period, _closed: &ClosedBatch) {}
}

// ---------------------------------------------------------------------------
// Truthfulness
// ---------------------------------------------------------------------------

/// A reported type for a fixed agent (same id and side).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Misreport {
    pub arrival: Period,
    pub depart: Period,
    pub value: Money,
}

impl Misreport {
    pub fn truthful(offer: &Offer) -> Self {
        Misreport {
            arrival: offer.arrival,
            depart: offer.depart,
            value: offer.value,
        }
    }

    fn apply(&self, truth: &Offer) -> Offer {
        Offer {
            arrival: self.arrival,
            depart: self.depart,
            value: self.value,
            ..*truth
        }
    }

    fn allowed_for(&self, truth: &Offer, patience: Period) -> bool {
        let sign_ok = match truth.side {
            Side::Buy => self.value >= Money::ZERO,
            Side::Sell => self.value <= Money::ZERO,
        };
        self.arrival >= truth.arrival
            && self.depart >= self.arrival
            && self.depart - self.arrival <= patience
            && sign_ok
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DeviationReport {
    pub agent: OfferId,
    pub truthful_utility: Money,
    /// Most profitable misreport and its gain, if any gain exceeds zero.
    pub best: Option<(Misreport, Money)>,
    pub tested: usize,
}

/// Smallest utility gain that counts as a profitable deviation.
pub const GAIN_TOLERANCE: f64 = 1e-9;

/// Standard misreport grid around `truth`.
///
/// Arrivals `a, a+1, a+2`; every departure the patience bound allows up to
/// `horizon`; values at the truth, at ±0.25 steps up to ±2, and just either
/// side of every price in `observed`.
pub fn default_grid(
    truth: &Offer,
    patience: Period,
    horizon: Period,
    observed: &[Money],
) -> Vec<Misreport> {
    let step = Money::from_micros(250_000);
    let mut values = alloc::vec![truth.value];
    for k in 1..=8i64 {
        let d = Money::from_micros(step.micros() * k);
        values.push(truth.value + d);
        values.push(truth.value - d);
    }
    let eps = Money::from_micros(1_000);
    for q in observed {
        values.push(*q + eps);
        values.push(*q - eps);
    }
    values.retain(|v| match truth.side {
        Side::Buy => *v >= Money::ZERO,
        Side::Sell => *v <= Money::ZERO,
    });
    values.sort();
    values.dedup();

    let mut grid = Vec::new();
    for arrival in truth.arrival..=truth.arrival + 2 {
        if arrival > horizon {
            break;
        }
        for depart in arrival..=(arrival + patience).min(horizon) {
            for value in &values {
                grid.push(Misreport {
                    arrival,
                    depart,
                    value: *value,
                });
            }
        }
    }
    grid
}

fn outcome_for<S: PriceSchedule + Clone>(
    instance: &[Offer],
    agent: &Offer,
    report: &Misreport,
    schedule: &S,
    config: EngineConfig,
) -> Result<(AgentOutcome, TrialTrace), VerifyError> {
    let reported: Vec<Offer> = instance
        .iter()
        .map(|o| {
            if o.id == agent.id {
                report.apply(agent)
            } else {
                *o
            }
        })
        .collect();
    let out = run(&reported, schedule.clone(), config)?;
    Ok((AgentOutcome::from_trace(&out.trace, agent.id), out.trace))
}

/// Re-runs the instance once per misreport of `agent` and reports the most
/// profitable one, measured with the agent's true type.
pub fn check_truthfulness<S: PriceSchedule + Clone>(
    instance: &[Offer],
    agent: OfferId,
    grid: &[Misreport],
    schedule: &S,
    config: EngineConfig,
) -> Result<DeviationReport, VerifyError> {
    let truth = *instance
        .iter()
        .find(|o| o.id == agent)
        .ok_or(VerifyError::UnknownAgent(agent))?;
    if let Some(bad) = grid
        .iter()
        .find(|m| !m.allowed_for(&truth, config.patience))
    {
        return Err(VerifyError::GridViolation(*bad));
    }
    let (honest, _) = outcome_for(
        instance,
        &truth,
        &Misreport::truthful(&truth),
        schedule,
        config,
    )?;
    let truthful_utility = utility(&truth, &honest);
    let mut best: Option<(Misreport, Money)> = None;
    for m in grid {
        let (outcome, _) = outcome_for(instance, &truth, m, schedule, config)?;
        let gain = utility(&truth, &outcome) - truthful_utility;
        if gain.to_f64() > GAIN_TOLERANCE && best.is_none_or(|(_, g)| gain > g) {
            best = Some((*m, gain));
        }
    }
    Ok(DeviationReport {
        agent,
        truthful_utility,
        best,
        tested: grid.len(),
    })
}

/// Prices quoted to `agent` in a truthful run: every quote and provisional
/// price it saw. Used to seed value misreports at the price boundaries.
pub fn observed_prices<S: PriceSchedule + Clone>(
    instance: &[Offer],
    agent: OfferId,
    schedule: &S,
    config: EngineConfig,
) -> Result<Vec<Money>, VerifyError> {
    let out = run(instance, schedule.clone(), config)?;
    let mut prices: Vec<Money> = out
        .trace
        .quotes_for(agent)
        .flat_map(|(_, q, ps)| [q, ps])
        .collect();
    prices.sort();
    prices.dedup();
    Ok(prices)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MonotonicityViolation {
    pub agent: OfferId,
    pub report: Misreport,
    pub payment: Money,
    pub tighter_payment: Money,
}

/// For a matched agent, any tighter reported window that still trades must
/// not lower its payment.
pub fn check_monotonicity<S: PriceSchedule + Clone>(
    instance: &[Offer],
    agent: OfferId,
    schedule: &S,
    config: EngineConfig,
) -> Result<Vec<MonotonicityViolation>, VerifyError> {
    let truth = *instance
        .iter()
        .find(|o| o.id == agent)
        .ok_or(VerifyError::UnknownAgent(agent))?;
    let base = run(instance, schedule.clone(), config)?;
    let OfferStatus::Matched { payment, .. } = base.statuses[&agent] else {
        return Ok(Vec::new());
    };
    let mut violations = Vec::new();
    for arrival in truth.arrival..=truth.depart {
        for depart in arrival..=truth.depart {
            let report = Misreport {
                arrival,
                depart,
                value: truth.value,
            };
            let reported: Vec<Offer> = instance
                .iter()
                .map(|o| {
                    if o.id == agent {
                        report.apply(&truth)
                    } else {
                        *o
                    }
                })
                .collect();
            let out = run(&reported, schedule.clone(), config)?;
            if let OfferStatus::Matched {
                payment: tighter, ..
            } = out.statuses[&agent]
            {
                if tighter < payment {
                    violations.push(MonotonicityViolation {
                        agent,
                        report,
                        payment,
                        tighter_payment: tighter,
                    });
                }
            }
        }
    }
    Ok(violations)
}

// ---------------------------------------------------------------------------
// McAfee equivalences
// ---------------------------------------------------------------------------

/// An agent whose agent-independent quote differs from its static payment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QuoteMismatch {
    pub agent: OfferId,
    pub side: Side,
    pub quote: Money,
    pub payment: Money,
}

/// Compares every trading agent's McAfee quote with its payment in the
/// static McAfee auction on the same book.
pub fn check_static_quotes(book: &BookSnapshot, fallback: (Money, Money)) -> Vec<QuoteMismatch> {
    let bids: Vec<Money> = book.bids().iter().map(|b| b.1).collect();
    let asks: Vec<Money> = book.asks().iter().map(|a| a.1).collect();
    let outcome = mcafee_static(&bids, &asks).expect("snapshot is sorted");
    let mut out = Vec::new();
    for (side, list, price, c) in [
        (Side::Buy, book.bids(), outcome.buy_price, fallback.0),
        (Side::Sell, book.asks(), outcome.sell_price, fallback.1),
    ] {
        for (id, _) in list.iter().take(outcome.trades) {
            let quote = quote_mcafee(book, *id, side, c);
            if quote != price {
                out.push(QuoteMismatch {
                    agent: *id,
                    side,
                    quote,
                    payment: price,
                });
            }
        }
    }
    out
}

/// Per-period trade summary: `(buyer ids, seller ids, buy price, sell price)`.
pub type PeriodTrades = (Vec<OfferId>, Vec<OfferId>, Option<Money>, Option<Money>);

/// With every agent impatient and zero patience, the McAfee-scheduled engine
/// should clear each period exactly like the static auction on that
/// period's arrivals. Returns the periods where the two disagree, with the
/// engine's and the static auction's summaries.
pub fn check_impatient_reduction(
    instance: &[Offer],
    v_max: Money,
    seed: u64,
) -> Result<Vec<(Period, PeriodTrades, PeriodTrades)>, VerifyError> {
    let config = EngineConfig { patience: 0, seed };
    let out = run(instance, ScheduleState::mcafee(v_max), config)?;
    let (by_period, horizon) = group_by_arrival(instance);
    let mut mismatches = Vec::new();
    for t in 0..horizon {
        let mut engine: PeriodTrades = (Vec::new(), Vec::new(), None, None);
        let mut buy_prices = Vec::new();
        let mut sell_prices = Vec::new();
        for tr in out.trades.iter().filter(|tr| tr.match_period == t) {
            engine.0.push(tr.buyer);
            engine.1.push(tr.seller);
            buy_prices.push(tr.buyer_payment);
            sell_prices.push(tr.seller_payment);
        }
        engine.0.sort();
        engine.1.sort();
        buy_prices.dedup();
        sell_prices.dedup();
        engine.2 = (buy_prices.len() == 1).then(|| buy_prices[0]);
        engine.3 = (sell_prices.len() == 1).then(|| sell_prices[0]);
        if buy_prices.len() > 1 || sell_prices.len() > 1 {
            engine.2 = Some(Money::from_micros(i64::MIN));
        }

        let arrivals = by_period.get(&t).cloned().unwrap_or_default();
        let book = BookSnapshot::new(&arrivals);
        let bids: Vec<Money> = book.bids().iter().map(|b| b.1).collect();
        let asks: Vec<Money> = book.asks().iter().map(|a| a.1).collect();
        let st = mcafee_static(&bids, &asks).expect("snapshot is sorted");
        let mut expected: PeriodTrades = (
            book.bids().iter().take(st.trades).map(|b| b.0).collect(),
            book.asks().iter().take(st.trades).map(|a| a.0).collect(),
            (st.trades > 0).then_some(st.buy_price),
            (st.trades > 0).then_some(st.sell_price),
        );
        expected.0.sort();
        expected.1.sort();
        if engine != expected {
            mismatches.push((t, engine, expected));
        }
    }
    Ok(mismatches)
}

// ---------------------------------------------------------------------------
// Random small instances
// ---------------------------------------------------------------------------

/// Random instance of up to `max_offers` offers over `periods` periods with
/// values drawn uniformly from `[0, max_value]` at `resolution` (sellers
/// negated). Ids are a random permutation.
pub fn random_instance(
    seed: u64,
    max_offers: usize,
    patience: Period,
    periods: Period,
    max_value: Money,
    resolution: Money,
) -> Vec<Offer> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=max_offers.max(2));
    let mut ids: Vec<u64> = (1..=n as u64).collect();
    ids.shuffle(&mut rng);
    let steps = (max_value.micros() / resolution.micros().max(1)).max(1);
    let mut offers: Vec<Offer> = ids
        .into_iter()
        .map(|id| {
            let arrival = rng.gen_range(0..periods.max(1));
            let depart = arrival + rng.gen_range(0..=patience);
            let mag = Money::from_micros(rng.gen_range(0..=steps) * resolution.micros());
            if rng.gen_bool(0.5) {
                Offer::buy(id, arrival, depart, mag)
            } else {
                Offer::sell(id, arrival, depart, -mag)
            }
        })
        .collect();
    offers.sort_by_key(|o| (o.arrival, o.id));
    offers
}

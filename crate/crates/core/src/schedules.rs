//! Valid price schedules.
//!
//! A schedule quotes every offer a price to trade in each period. Quotes are
//! signed like values: buy quotes are non-negative, sell quotes
//! non-positive. The history-based schedules (fixed, EWMA, window) read only
//! offers that have already closed; the McAfee schedule reads the current
//! book with the quoted offer and the best opposite offer removed.

use alloc::collections::VecDeque;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::model::{Offer, OfferId, Period, Side};
use crate::money::{Fraction, Money};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ScheduleError {
    #[error("fixed price must be non-negative, got {0}")]
    NegativeFixedPrice(Money),
    #[error("smoothing constant must lie in [0, 1], got {0}")]
    LambdaOutOfRange(f64),
    #[error("window size must be positive")]
    EmptyWindow,
    #[error("{side:?} values must be sorted in descending order")]
    UnsortedInput { side: Side },
    #[error("unknown schedule `{0}`")]
    UnknownKind(alloc::string::String),
}

/// Offers that expired, were priced out or traded in one period.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ClosedBatch {
    pub offers: Vec<Offer>,
}

impl ClosedBatch {
    pub fn new(offers: Vec<Offer>) -> Self {
        ClosedBatch { offers }
    }

    pub fn is_empty(&self) -> bool {
        self.offers.is_empty()
    }
}

/// Active offers at the start of one period, each side sorted by value
/// descending (for asks: least negative first). Ties are ordered by id.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BookSnapshot {
    bids: Vec<(OfferId, Money)>,
    asks: Vec<(OfferId, Money)>,
}

impl BookSnapshot {
    pub fn new<'a>(offers: impl IntoIterator<Item = &'a Offer>) -> Self {
        let mut book = BookSnapshot::default();
        for o in offers {
            match o.side {
                Side::Buy => book.bids.push((o.id, o.value)),
                Side::Sell => book.asks.push((o.id, o.value)),
            }
        }
        let order = |a: &(OfferId, Money), b: &(OfferId, Money)| b.1.cmp(&a.1).then(a.0.cmp(&b.0));
        book.bids.sort_by(order);
        book.asks.sort_by(order);
        book
    }

    /// Book from bare values; ids are assigned 1.. for bids and 1001.. for asks.
    pub fn from_values(bids: &[Money], asks: &[Money]) -> Self {
        let offers: Vec<Offer> = bids
            .iter()
            .enumerate()
            .map(|(k, v)| Offer::buy(k as u64 + 1, 0, 0, *v))
            .chain(
                asks.iter()
                    .enumerate()
                    .map(|(k, v)| Offer::sell(k as u64 + 1001, 0, 0, *v)),
            )
            .collect();
        BookSnapshot::new(&offers)
    }

    pub fn bids(&self) -> &[(OfferId, Money)] {
        &self.bids
    }

    pub fn asks(&self) -> &[(OfferId, Money)] {
        &self.asks
    }

    pub fn contains(&self, id: OfferId) -> bool {
        self.bids.iter().chain(&self.asks).any(|(i, _)| *i == id)
    }

    /// Same book with one offer's value replaced, re-sorted.
    pub fn with_value(&self, id: OfferId, value: Money) -> Self {
        let offers: Vec<Offer> = self
            .bids
            .iter()
            .map(|&(i, v)| Offer {
                id: i,
                arrival: 0,
                depart: 0,
                side: Side::Buy,
                value: v,
            })
            .chain(self.asks.iter().map(|&(i, v)| Offer {
                id: i,
                arrival: 0,
                depart: 0,
                side: Side::Sell,
                value: v,
            }))
            .map(|mut o| {
                if o.id == id {
                    o.value = value;
                }
                o
            })
            .collect();
        BookSnapshot::new(&offers)
    }
}

// ---------------------------------------------------------------------------
// Statistics over closed offers
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Statistic {
    Mean,
    Median,
    Clearing,
}

impl Statistic {
    pub fn apply(self, offers: &[(Side, Money)]) -> Option<Money> {
        match self {
            Statistic::Mean => stat_mean(offers.iter().map(|o| o.1)),
            Statistic::Median => stat_median(offers.iter().map(|o| o.1)),
            Statistic::Clearing => stat_clearing(offers),
        }
    }
}

/// Mean of absolute values; `None` on empty input.
pub fn stat_mean(values: impl IntoIterator<Item = Money>) -> Option<Money> {
    let (total, count) = values
        .into_iter()
        .fold((Money::ZERO, 0usize), |(s, n), v| (s + v.abs(), n + 1));
    (count > 0).then(|| Money::mean(total, count))
}

/// Median of absolute values; even counts average the middle pair.
pub fn stat_median(values: impl IntoIterator<Item = Money>) -> Option<Money> {
    let mut mags: Vec<Money> = values.into_iter().map(Money::abs).collect();
    if mags.is_empty() {
        return None;
    }
    mags.sort_unstable();
    let n = mags.len();
    Some(if n % 2 == 1 {
        mags[n / 2]
    } else {
        (mags[n / 2 - 1] + mags[n / 2]).half()
    })
}

/// Price that clears the most pairs among the given closed offers.
///
/// Buy magnitudes descending are paired with sell magnitudes ascending; the
/// last pair with buy ≥ sell fixes the price at its midpoint. Falls back to
/// the median when no pair clears.
pub fn stat_clearing(offers: &[(Side, Money)]) -> Option<Money> {
    if offers.is_empty() {
        return None;
    }
    let mut buys: Vec<Money> = offers
        .iter()
        .filter(|o| o.0 == Side::Buy)
        .map(|o| o.1.abs())
        .collect();
    let mut sells: Vec<Money> = offers
        .iter()
        .filter(|o| o.0 == Side::Sell)
        .map(|o| o.1.abs())
        .collect();
    buys.sort_unstable_by(|a, b| b.cmp(a));
    sells.sort_unstable();
    let cleared = buys.iter().zip(&sells).take_while(|(b, s)| b >= s).count();
    if cleared == 0 {
        return stat_median(offers.iter().map(|o| o.1));
    }
    Some((buys[cleared - 1] + sells[cleared - 1]).half())
}

// ---------------------------------------------------------------------------
// Quote functions
// ---------------------------------------------------------------------------

/// `+p_star` to buyers, `-p_star` to sellers.
pub fn quote_fixed(side: Side, p_star: Money) -> Result<Money, ScheduleError> {
    if p_star.is_negative() {
        return Err(ScheduleError::NegativeFixedPrice(p_star));
    }
    Ok(signed(side, p_star))
}

fn signed(side: Side, magnitude: Money) -> Money {
    match side {
        Side::Buy => magnitude,
        Side::Sell => -magnitude,
    }
}

/// One EWMA update. An undefined statistic carries `prev` forward.
pub fn quote_ewma(prev: Money, stat: Option<Money>, lambda: Fraction, side: Side) -> Money {
    match stat {
        Some(s) => signed(side, s).blend(prev, lambda),
        None => prev,
    }
}

/// Outcome of McAfee's static double auction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct McAfeeOutcome {
    pub trades: usize,
    pub buy_price: Money,
    pub sell_price: Money,
}

/// Number of leading pairs with `bid + ask >= 0`.
fn clearing_depth(bids: &[Money], asks: &[Money]) -> usize {
    bids.iter()
        .zip(asks)
        .take_while(|(b, s)| **b + **s >= Money::ZERO)
        .count()
}

/// `(b_next - s_next) / 2` with a missing bid read as 0 and a missing ask as
/// minus infinity (`None`).
fn midpoint_after(bids: &[Money], asks: &[Money], depth: usize) -> Option<Money> {
    let b_next = bids.get(depth).copied().unwrap_or(Money::ZERO);
    asks.get(depth).map(|s_next| (b_next - *s_next).half())
}

fn check_sorted(values: &[Money], side: Side) -> Result<(), ScheduleError> {
    if values.windows(2).all(|w| w[0] >= w[1]) {
        Ok(())
    } else {
        Err(ScheduleError::UnsortedInput { side })
    }
}

/// McAfee's static auction over sorted bids and asks (both descending).
///
/// With `m` clearing pairs and `p` the midpoint of the next pair, either all
/// `m` pairs trade at `±p` when `p` fits inside the marginal pair, or the
/// marginal pair is dropped and `m - 1` pairs trade at its own values.
pub fn mcafee_static(bids: &[Money], asks: &[Money]) -> Result<McAfeeOutcome, ScheduleError> {
    check_sorted(bids, Side::Buy)?;
    check_sorted(asks, Side::Sell)?;
    let m = clearing_depth(bids, asks);
    if m == 0 {
        return Ok(McAfeeOutcome {
            trades: 0,
            buy_price: Money::ZERO,
            sell_price: Money::ZERO,
        });
    }
    let (b_m, s_m) = (bids[m - 1], asks[m - 1]);
    if let Some(p) = midpoint_after(bids, asks, m) {
        if p <= b_m && -p <= s_m {
            return Ok(McAfeeOutcome {
                trades: m,
                buy_price: p,
                sell_price: -p,
            });
        }
    }
    Ok(McAfeeOutcome {
        trades: m - 1,
        buy_price: b_m,
        sell_price: s_m,
    })
}

/// Agent-independent McAfee quote for `target` on `side`.
///
/// The target (if present) and the best offer on the opposite side are
/// removed; the quote is then read off the last clearing pair of the reduced
/// book and the pair after it. A missing bid reads as 0 and a missing ask as
/// minus infinity; `fallback` is returned when the reduced book has no asks.
pub fn quote_mcafee(book: &BookSnapshot, target: OfferId, side: Side, fallback: Money) -> Money {
    let strip = |list: &[(OfferId, Money)], drop_first: bool| -> Vec<Money> {
        list.iter()
            .skip(drop_first as usize)
            .filter(|(id, _)| *id != target)
            .map(|(_, v)| *v)
            .collect()
    };
    let (bids, asks) = match side {
        Side::Buy => (strip(&book.bids, false), strip(&book.asks, true)),
        Side::Sell => (strip(&book.bids, true), strip(&book.asks, false)),
    };
    if asks.is_empty() {
        return fallback;
    }
    let m = clearing_depth(&bids, &asks);
    if m == 0 {
        // No clearing pair: the first pair (missing bid read as 0) sets p.
        let p = midpoint_after(&bids, &asks, 0).expect("asks non-empty");
        return signed(side, p);
    }
    let (b_m, s_m) = (bids[m - 1], asks[m - 1]);
    let p = midpoint_after(&bids, &asks, m);
    match side {
        Side::Buy => match p {
            Some(p) if p <= b_m && p >= -s_m => p,
            _ => b_m,
        },
        Side::Sell => match p {
            Some(p) if -p <= s_m && -p >= -b_m => -p,
            _ => s_m,
        },
    }
}

// ---------------------------------------------------------------------------
// Schedule state machines
// ---------------------------------------------------------------------------

/// A price schedule driven period by period by the engine.
///
/// `quote` may be asked about any period from `current - K` up to the
/// current one; earlier periods are answered counterfactually, as if the
/// target had not yet arrived.
pub trait PriceSchedule {
    /// Start of period `t`; `book` holds every offer active after arrivals.
    fn open_period(&mut self, t: Period, book: &BookSnapshot);

    fn quote(&self, t: Period, target: &Offer) -> Money;

    /// End of period `t` with the offers that closed in it.
    fn close_period(&mut self, t: Period, closed: &ClosedBatch);

    /// How many recent periods must stay answerable by `quote`.
    fn retain_periods(&mut self, _periods: usize) {}
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ScheduleKind {
    Fixed,
    Ewma,
    WindowMedian,
    WindowClear,
    McAfee,
}

impl ScheduleKind {
    pub const ALL: [ScheduleKind; 5] = [
        ScheduleKind::Fixed,
        ScheduleKind::Ewma,
        ScheduleKind::WindowMedian,
        ScheduleKind::WindowClear,
        ScheduleKind::McAfee,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScheduleKind::Fixed => "fixed",
            ScheduleKind::Ewma => "ewma",
            ScheduleKind::WindowMedian => "window_median",
            ScheduleKind::WindowClear => "window_clear",
            ScheduleKind::McAfee => "mcafee",
        }
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScheduleKind {
    type Err = ScheduleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScheduleKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| ScheduleError::UnknownKind(alloc::string::ToString::to_string(s)))
    }
}

/// Tunable parameters shared by all schedule kinds; each kind reads the ones
/// it needs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScheduleParams {
    pub p_star: Money,
    pub lambda: f64,
    pub window_size: usize,
    pub initial_price: Money,
    pub v_max: Money,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        ScheduleParams {
            p_star: Money::ONE,
            lambda: 0.25,
            window_size: 20,
            initial_price: Money::ONE,
            v_max: Money::from_units(1000),
        }
    }
}

/// A kind plus its parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScheduleSpec {
    pub kind: ScheduleKind,
    pub params: ScheduleParams,
}

impl ScheduleSpec {
    pub fn new(kind: ScheduleKind, params: ScheduleParams) -> Self {
        ScheduleSpec { kind, params }
    }

    pub fn build(&self) -> Result<ScheduleState, ScheduleError> {
        let p = &self.params;
        match self.kind {
            ScheduleKind::Fixed => ScheduleState::fixed(p.p_star),
            ScheduleKind::Ewma => ScheduleState::ewma(p.lambda, Statistic::Mean, p.initial_price),
            ScheduleKind::WindowMedian => {
                ScheduleState::window(p.window_size, Statistic::Median, p.initial_price)
            }
            ScheduleKind::WindowClear => {
                ScheduleState::window(p.window_size, Statistic::Clearing, p.initial_price)
            }
            ScheduleKind::McAfee => Ok(ScheduleState::mcafee(p.v_max)),
        }
    }
}

/// Per-side quotes for one period.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SideQuotes {
    pub buy: Money,
    pub sell: Money,
}

impl SideQuotes {
    pub fn symmetric(price: Money) -> Self {
        SideQuotes {
            buy: price,
            sell: -price,
        }
    }

    pub fn get(&self, side: Side) -> Money {
        match side {
            Side::Buy => self.buy,
            Side::Sell => self.sell,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ScheduleState {
    Fixed {
        p_star: Money,
    },
    Ewma {
        lambda: Fraction,
        stat: Statistic,
        history: QuoteHistory,
    },
    Window {
        size: usize,
        stat: Statistic,
        buffer: VecDeque<(Side, Money)>,
        history: QuoteHistory,
    },
    McAfee(McAfeeState),
}

/// Per-period quote series of a history-based schedule. Entry `t` is the
/// quote in force during period `t`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuoteHistory {
    series: Vec<SideQuotes>,
}

impl QuoteHistory {
    fn new(initial: SideQuotes) -> Self {
        QuoteHistory {
            series: alloc::vec![initial],
        }
    }

    pub fn at(&self, t: Period) -> SideQuotes {
        let k = (t as usize).min(self.series.len() - 1);
        self.series[k]
    }

    fn latest(&self) -> SideQuotes {
        *self.series.last().expect("history starts non-empty")
    }

    fn set_next(&mut self, t: Period, next: SideQuotes) {
        let k = t as usize + 1;
        while self.series.len() < k {
            let last = self.latest();
            self.series.push(last);
        }
        self.series.truncate(k);
        self.series.push(next);
    }

    pub fn series(&self) -> &[SideQuotes] {
        &self.series
    }
}

impl ScheduleState {
    pub fn fixed(p_star: Money) -> Result<Self, ScheduleError> {
        quote_fixed(Side::Buy, p_star)?;
        Ok(ScheduleState::Fixed { p_star })
    }

    pub fn ewma(lambda: f64, stat: Statistic, initial: Money) -> Result<Self, ScheduleError> {
        let lambda = Fraction::from_f64(lambda).ok_or(ScheduleError::LambdaOutOfRange(lambda))?;
        Ok(ScheduleState::Ewma {
            lambda,
            stat,
            history: QuoteHistory::new(SideQuotes::symmetric(initial.abs())),
        })
    }

    pub fn window(size: usize, stat: Statistic, initial: Money) -> Result<Self, ScheduleError> {
        if size == 0 {
            return Err(ScheduleError::EmptyWindow);
        }
        Ok(ScheduleState::Window {
            size,
            stat,
            buffer: VecDeque::with_capacity(size),
            history: QuoteHistory::new(SideQuotes::symmetric(initial.abs())),
        })
    }

    pub fn mcafee(v_max: Money) -> Self {
        ScheduleState::McAfee(McAfeeState::new(v_max))
    }

    pub fn window_contents(&self) -> Option<Vec<(Side, Money)>> {
        match self {
            ScheduleState::Window { buffer, .. } => Some(buffer.iter().copied().collect()),
            _ => None,
        }
    }

    /// Side quotes in force at `t` for history-based schedules.
    pub fn side_quotes(&self, t: Period) -> Option<SideQuotes> {
        match self {
            ScheduleState::Fixed { p_star } => Some(SideQuotes::symmetric(*p_star)),
            ScheduleState::Ewma { history, .. } | ScheduleState::Window { history, .. } => {
                Some(history.at(t))
            }
            ScheduleState::McAfee(_) => None,
        }
    }
}

/// Window quote from the buffer; `prev` carries forward on an empty window.
pub fn quote_window(buffer: &[(Side, Money)], stat: Statistic, prev: Money, side: Side) -> Money {
    stat.apply(buffer).map_or(prev, |x| signed(side, x))
}

impl PriceSchedule for ScheduleState {
    fn open_period(&mut self, t: Period, book: &BookSnapshot) {
        if let ScheduleState::McAfee(state) = self {
            state.open_period(t, book);
        }
    }

    fn quote(&self, t: Period, target: &Offer) -> Money {
        match self {
            ScheduleState::McAfee(state) => state.quote(t, target),
            other => other
                .side_quotes(t)
                .expect("history-based schedule")
                .get(target.side),
        }
    }

    fn close_period(&mut self, t: Period, closed: &ClosedBatch) {
        match self {
            ScheduleState::Fixed { .. } => {}
            ScheduleState::Ewma {
                lambda,
                stat,
                history,
            } => {
                let batch: Vec<(Side, Money)> =
                    closed.offers.iter().map(|o| (o.side, o.value)).collect();
                let x = stat.apply(&batch);
                let prev = history.at(t);
                let next = SideQuotes {
                    buy: quote_ewma(prev.buy, x, *lambda, Side::Buy),
                    sell: quote_ewma(prev.sell, x, *lambda, Side::Sell),
                };
                history.set_next(t, next);
            }
            ScheduleState::Window {
                size,
                stat,
                buffer,
                history,
            } => {
                for o in &closed.offers {
                    if buffer.len() == *size {
                        buffer.pop_front();
                    }
                    buffer.push_back((o.side, o.value));
                }
                let contents: Vec<(Side, Money)> = buffer.iter().copied().collect();
                let prev = history.at(t);
                let next = SideQuotes {
                    buy: quote_window(&contents, *stat, prev.buy, Side::Buy),
                    sell: quote_window(&contents, *stat, prev.sell, Side::Sell),
                };
                history.set_next(t, next);
            }
            ScheduleState::McAfee(state) => state.close_period(t),
        }
    }

    fn retain_periods(&mut self, periods: usize) {
        if let ScheduleState::McAfee(state) = self {
            state.set_retention(periods);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct McAfeePeriod {
    period: Period,
    book: BookSnapshot,
}

/// Rolling book snapshots plus the fixed per-side fallback quote used when a
/// reduced book has no asks.
#[derive(Clone, Debug, PartialEq)]
pub struct McAfeeState {
    periods: VecDeque<McAfeePeriod>,
    fallback: SideQuotes,
    retain: usize,
}

impl McAfeeState {
    pub fn new(v_max: Money) -> Self {
        McAfeeState {
            periods: VecDeque::new(),
            fallback: SideQuotes {
                buy: Money::ZERO,
                sell: -v_max.abs(),
            },
            retain: usize::MAX,
        }
    }

    /// Keep only the last `periods` snapshots (at least patience + 1).
    pub fn set_retention(&mut self, periods: usize) {
        self.retain = periods.max(1);
        while self.periods.len() > self.retain {
            self.periods.pop_front();
        }
    }

    pub fn snapshot(&self, t: Period) -> Option<&BookSnapshot> {
        self.find(t).map(|p| &p.book)
    }

    fn find(&self, t: Period) -> Option<&McAfeePeriod> {
        self.periods.iter().rev().find(|p| p.period == t)
    }

    pub fn fallback(&self) -> SideQuotes {
        self.fallback
    }

    fn open_period(&mut self, t: Period, book: &BookSnapshot) {
        self.periods.push_back(McAfeePeriod {
            period: t,
            book: book.clone(),
        });
        while self.periods.len() > self.retain {
            self.periods.pop_front();
        }
    }

    fn quote(&self, t: Period, target: &Offer) -> Money {
        let fallback = self.fallback.get(target.side);
        match self.find(t) {
            Some(p) => quote_mcafee(&p.book, target.id, target.side, fallback),
            // No snapshot: the market was empty or not yet running.
            None => fallback,
        }
    }

    fn close_period(&mut self, _t: Period) {}
}

//! Price-ranked online double auction.
//!
//! Each period: quote every active offer, raise its provisional price to the
//! running maximum of its quotes, price out offers whose provisional price
//! exceeds their value, then match the best remaining bid with the best
//! remaining ask while their quotes sum to at least zero. Matched offers pay
//! their provisional price. Transfers settle at departures, so the auctioneer
//! never pays out cash or items it has not yet received.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::model::{
    validate_instance, validate_offer, Offer, OfferError, OfferId, OfferStatus, Period,
    SettlementEvent, SettlementKind, Side, TraceEvent, TraceEventKind, Trade, TrialTrace,
};
use crate::money::Money;
use crate::schedules::{BookSnapshot, ClosedBatch, PriceSchedule, ScheduleState};

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum EngineError {
    #[error("offer {id} reports arrival {arrival} but was submitted in period {period}")]
    InvalidArrival {
        id: OfferId,
        arrival: Period,
        period: Period,
    },
    #[error("no quote for period {period}")]
    MissingQuote { period: Period },
    #[error(transparent)]
    Offer(#[from] OfferError),
}

/// Running maximum of quotes over `max(0, depart - patience) ..= t`.
///
/// `quote_at` supplies the quote for one period, `None` where the series has
/// a gap.
pub fn provisional_price(
    quote_at: impl Fn(Period) -> Option<Money>,
    offer: &Offer,
    t: Period,
    patience: Period,
) -> Result<Money, EngineError> {
    let start = offer.depart.saturating_sub(patience);
    let mut best: Option<Money> = None;
    for period in start..=t {
        let q = quote_at(period).ok_or(EngineError::MissingQuote { period })?;
        best = Some(best.map_or(q, |b| b.max(q)));
    }
    best.ok_or(EngineError::MissingQuote { period: t })
}

/// Settlement transfers for a matched pair.
///
/// If the seller departs no later than the buyer, everything but the item
/// release happens at the seller's departure and the auctioneer holds the
/// item until the buyer's departure. Otherwise the item passes straight to
/// the buyer at the buyer's departure and the seller's payment waits for the
/// seller's departure.
pub fn schedule_settlement(
    trade: Trade,
    buyer_depart: Period,
    seller_depart: Period,
) -> Vec<SettlementEvent> {
    use SettlementKind::*;
    let ev = |period, kind| SettlementEvent {
        period,
        kind,
        trade,
    };
    if seller_depart <= buyer_depart {
        alloc::vec![
            ev(seller_depart, BuyerPays),
            ev(seller_depart, SellerDeliversItem),
            ev(seller_depart, PaymentReleasedToSeller),
            ev(buyer_depart, ItemReleasedToBuyer),
        ]
    } else {
        alloc::vec![
            ev(buyer_depart, SellerDeliversItem),
            ev(buyer_depart, ItemReleasedToBuyer),
            ev(buyer_depart, BuyerPays),
            ev(seller_depart, PaymentReleasedToSeller),
        ]
    }
}

/// Report-independent tie-break rank for an offer.
pub fn tie_rank(seed: u64, id: OfferId) -> u64 {
    splitmix64(seed ^ splitmix64(id.0))
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EngineConfig {
    /// Maximum `depart - arrival`.
    pub patience: Period,
    /// Seed for tie-breaking.
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OfferRecord {
    pub offer: Offer,
    pub status: OfferStatus,
    /// Provisional price; meaningful once the offer has been quoted.
    pub provisional: Money,
    /// Quote in the most recent period the offer was active.
    pub quote: Money,
}

/// Mutable market state for one trial.
#[derive(Clone, Debug)]
pub struct Market<S> {
    config: EngineConfig,
    period: Period,
    schedule: S,
    records: BTreeMap<OfferId, OfferRecord>,
    active: Vec<OfferId>,
    pending: Vec<(u64, SettlementEvent)>,
    trades: Vec<Trade>,
    trace: TrialTrace,
}

impl<S: PriceSchedule> Market<S> {
    pub fn new(mut schedule: S, config: EngineConfig) -> Self {
        schedule.retain_periods(config.patience as usize + 1);
        Market {
            config,
            period: 0,
            schedule,
            records: BTreeMap::new(),
            active: Vec::new(),
            pending: Vec::new(),
            trades: Vec::new(),
            trace: TrialTrace::new(),
        }
    }

    pub fn period(&self) -> Period {
        self.period
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn schedule(&self) -> &S {
        &self.schedule
    }

    pub fn trace(&self) -> &TrialTrace {
        &self.trace
    }

    pub fn record(&self, id: OfferId) -> Option<&OfferRecord> {
        self.records.get(&id)
    }

    /// Offers active going into the next step, by id.
    pub fn active_offers(&self) -> impl Iterator<Item = &Offer> + '_ {
        self.active.iter().map(|id| &self.records[id].offer)
    }

    /// Book the schedule will see at the start of the next step.
    pub fn opening_book(&self, arrivals: &[Offer]) -> BookSnapshot {
        BookSnapshot::new(self.active_offers().chain(arrivals))
    }

    pub fn has_pending_settlements(&self) -> bool {
        !self.pending.is_empty()
    }

    /// Runs one period with `arrivals` and returns the events it produced.
    pub fn step(&mut self, arrivals: &[Offer]) -> Result<&[TraceEvent], EngineError> {
        let t = self.period;
        for a in arrivals {
            if a.arrival != t {
                return Err(EngineError::InvalidArrival {
                    id: a.id,
                    arrival: a.arrival,
                    period: t,
                });
            }
            validate_offer(*a, self.config.patience)?;
            if self.records.contains_key(&a.id) {
                return Err(OfferError::DuplicateId(a.id).into());
            }
        }
        let first_event = self.trace.events().len();

        let book = self.opening_book(arrivals);
        self.schedule.open_period(t, &book);

        for a in arrivals {
            self.records.insert(
                a.id,
                OfferRecord {
                    offer: *a,
                    status: OfferStatus::Active,
                    provisional: Money::ZERO,
                    quote: Money::ZERO,
                },
            );
            self.active.push(a.id);
        }
        self.active.sort_unstable();

        // Quote, update provisional prices, price out.
        let mut closed = Vec::new();
        let mut priced_in = Vec::with_capacity(self.active.len());
        for &id in &self.active {
            let rec = self
                .records
                .get_mut(&id)
                .expect("active offer has a record");
            let offer = rec.offer;
            let quote = self.schedule.quote(t, &offer);
            let provisional = if offer.arrival == t {
                let schedule = &self.schedule;
                provisional_price(
                    |tau| {
                        Some(if tau == t {
                            quote
                        } else {
                            schedule.quote(tau, &offer)
                        })
                    },
                    &offer,
                    t,
                    self.config.patience,
                )?
            } else {
                rec.provisional.max(quote)
            };
            rec.quote = quote;
            rec.provisional = provisional;
            self.trace.push(TraceEvent {
                period: t,
                offer: id,
                kind: TraceEventKind::Quote { quote, provisional },
            });
            if provisional > offer.value {
                priced_in.push(None);
            } else {
                priced_in.push(Some(id));
            }
        }
        for (&id, keep) in self.active.iter().zip(&priced_in) {
            if keep.is_none() {
                let rec = self.records.get_mut(&id).expect("record");
                rec.status = OfferStatus::PricedOut { period: t };
                closed.push(rec.offer);
                self.trace.push(TraceEvent {
                    period: t,
                    offer: id,
                    kind: TraceEventKind::PriceOut {
                        provisional: rec.provisional,
                    },
                });
            }
        }

        // Rank and match.
        let seed = self.config.seed;
        let rank = |records: &BTreeMap<OfferId, OfferRecord>, side: Side| {
            let mut book: Vec<(Money, u64, OfferId)> = priced_in
                .iter()
                .flatten()
                .map(|id| &records[id])
                .filter(|r| r.offer.side == side)
                .map(|r| (r.quote, tie_rank(seed, r.offer.id), r.offer.id))
                .collect();
            book.sort_unstable_by(|a, b| match b.0.cmp(&a.0) {
                Ordering::Equal => a.1.cmp(&b.1).then(a.2.cmp(&b.2)),
                other => other,
            });
            book
        };
        let bids = rank(&self.records, Side::Buy);
        let asks = rank(&self.records, Side::Sell);
        for (bid, ask) in bids.iter().zip(&asks) {
            if bid.0 + ask.0 < Money::ZERO {
                break;
            }
            let (buyer, seller) = (self.records[&bid.2], self.records[&ask.2]);
            let trade = Trade {
                buyer: buyer.offer.id,
                seller: seller.offer.id,
                buyer_payment: buyer.provisional,
                seller_payment: seller.provisional,
                match_period: t,
            };
            for (me, other, pay) in [
                (&buyer, &seller, trade.buyer_payment),
                (&seller, &buyer, trade.seller_payment),
            ] {
                let rec = self.records.get_mut(&me.offer.id).expect("record");
                rec.status = OfferStatus::Matched {
                    partner: other.offer.id,
                    payment: pay,
                    period: t,
                };
                closed.push(rec.offer);
                self.trace.push(TraceEvent {
                    period: t,
                    offer: me.offer.id,
                    kind: TraceEventKind::Match {
                        partner: other.offer.id,
                        payment: pay,
                    },
                });
            }
            let seq = self.trades.len() as u64;
            self.trades.push(trade);
            self.pending.extend(
                schedule_settlement(trade, buyer.offer.depart, seller.offer.depart)
                    .into_iter()
                    .map(|s| (seq, s)),
            );
        }

        // Settle transfers due now.
        self.pending
            .sort_by_key(|(seq, s)| (s.period, *seq, s.kind));
        let due = self
            .pending
            .iter()
            .take_while(|(_, s)| s.period <= t)
            .count();
        for (_, s) in self.pending.drain(..due) {
            self.trace.push(TraceEvent {
                period: t,
                offer: s.subject(),
                kind: TraceEventKind::Settle(s),
            });
        }

        // Expire what is left at its departure.
        let records = &mut self.records;
        let trace = &mut self.trace;
        self.active.retain(|id| {
            let rec = records.get_mut(id).expect("record");
            if rec.status.is_terminal() {
                return false;
            }
            if rec.offer.depart <= t {
                rec.status = OfferStatus::Expired { period: t };
                closed.push(rec.offer);
                trace.push(TraceEvent {
                    period: t,
                    offer: *id,
                    kind: TraceEventKind::Expire,
                });
                return false;
            }
            true
        });

        self.schedule.close_period(t, &ClosedBatch::new(closed));
        self.period += 1;
        Ok(&self.trace.events()[first_event..])
    }

    pub fn finish(self) -> EngineOutcome {
        let statuses = self.records.iter().map(|(id, r)| (*id, r.status)).collect();
        let revenue = self.trades.iter().map(Trade::surplus_to_auctioneer).sum();
        let surplus = self
            .trades
            .iter()
            .map(|tr| self.records[&tr.buyer].offer.value + self.records[&tr.seller].offer.value)
            .sum();
        EngineOutcome {
            trace: self.trace,
            statuses,
            trades: self.trades,
            surplus,
            revenue,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EngineOutcome {
    pub trace: TrialTrace,
    pub statuses: BTreeMap<OfferId, OfferStatus>,
    pub trades: Vec<Trade>,
    /// Sum over trades of buyer value plus seller value, as reported.
    pub surplus: Money,
    /// Sum over trades of buyer payment plus seller payment.
    pub revenue: Money,
}

impl EngineOutcome {
    /// Surplus of the executed trades measured with `truth` values.
    pub fn surplus_with(&self, truth: &[Offer]) -> Money {
        let value: BTreeMap<OfferId, Money> = truth.iter().map(|o| (o.id, o.value)).collect();
        self.trades
            .iter()
            .map(|t| value[&t.buyer] + value[&t.seller])
            .sum()
    }
}

/// Runs a whole instance through the market, releasing each offer at its
/// reported arrival. Deterministic in `(offers, schedule, config)`.
pub fn run<S: PriceSchedule>(
    offers: &[Offer],
    schedule: S,
    config: EngineConfig,
) -> Result<EngineOutcome, EngineError> {
    validate_instance(offers, config.patience)?;
    let mut market = Market::new(schedule, config);
    let Some(horizon) = offers.iter().map(|o| o.depart + 1).max() else {
        return Ok(market.finish());
    };
    let mut by_period: BTreeMap<Period, Vec<Offer>> = BTreeMap::new();
    for o in offers {
        by_period.entry(o.arrival).or_default().push(*o);
    }
    let empty = Vec::new();
    for t in 0..horizon {
        let arrivals = by_period.get(&t).unwrap_or(&empty);
        market.step(arrivals)?;
    }
    debug_assert!(!market.has_pending_settlements());
    Ok(market.finish())
}

/// Convenience wrapper over [`run`] for the built-in schedules.
pub fn run_schedule(
    offers: &[Offer],
    schedule: ScheduleState,
    config: EngineConfig,
) -> Result<EngineOutcome, EngineError> {
    run(offers, schedule, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{inventory_level, ledger_balance, utility, AgentOutcome};
    use SettlementKind::*;

    fn m(x: i64) -> Money {
        Money::from_units(x)
    }

    fn cfg(patience: Period) -> EngineConfig {
        EngineConfig { patience, seed: 7 }
    }

    #[test]
    fn provisional_price_examples() {
        let quotes = |t: Period| match t {
            8 => Some(m(7)),
            9 => Some(m(5)),
            10 => Some(m(4)),
            _ => None,
        };
        let short = Offer::buy(1, 10, 13, m(6));
        let ps = provisional_price(quotes, &short, 10, 5).unwrap();
        assert_eq!(ps, m(7));
        assert!(ps > short.value);

        let patient = Offer::buy(2, 10, 14, m(6));
        assert_eq!(provisional_price(quotes, &patient, 10, 5), Ok(m(5)));

        let constant = |_| Some(m(3));
        for t in 10..=13 {
            assert_eq!(provisional_price(constant, &short, t, 5), Ok(m(3)));
        }
        let gap = |t: Period| (t != 9).then_some(m(1));
        assert_eq!(
            provisional_price(gap, &patient, 10, 5),
            Err(EngineError::MissingQuote { period: 9 })
        );
    }

    #[test]
    fn settlement_orders() {
        let trade = Trade {
            buyer: OfferId(1),
            seller: OfferId(2),
            buyer_payment: m(5),
            seller_payment: m(-5),
            match_period: 1,
        };
        let kinds = |evs: Vec<SettlementEvent>| -> Vec<(Period, SettlementKind)> {
            let mut v: Vec<_> = evs.into_iter().map(|e| (e.period, e.kind)).collect();
            v.sort();
            v
        };
        assert_eq!(
            kinds(schedule_settlement(trade, 4, 2)),
            alloc::vec![
                (2, BuyerPays),
                (2, SellerDeliversItem),
                (2, PaymentReleasedToSeller),
                (4, ItemReleasedToBuyer)
            ]
        );
        assert_eq!(
            kinds(schedule_settlement(trade, 2, 4)),
            alloc::vec![
                (2, BuyerPays),
                (2, SellerDeliversItem),
                (2, ItemReleasedToBuyer),
                (4, PaymentReleasedToSeller)
            ]
        );
        assert!(schedule_settlement(trade, 3, 3)
            .iter()
            .all(|e| e.period == 3));
    }

    #[test]
    fn hand_trace_fixed_price() {
        let buyer = Offer::buy(1, 0, 2, m(8));
        let seller = Offer::sell(2, 1, 1, m(-4));
        let mut market = Market::new(ScheduleState::fixed(m(5)).unwrap(), cfg(5));

        let t0 = market.step(&[buyer]).unwrap().to_vec();
        assert_eq!(
            t0,
            alloc::vec![TraceEvent {
                period: 0,
                offer: OfferId(1),
                kind: TraceEventKind::Quote {
                    quote: m(5),
                    provisional: m(5)
                }
            }]
        );
        assert_eq!(
            market.record(OfferId(1)).unwrap().status,
            OfferStatus::Active
        );

        market.step(&[seller]).unwrap();
        assert_eq!(
            market.record(OfferId(2)).unwrap().status,
            OfferStatus::Matched {
                partner: OfferId(1),
                payment: m(-5),
                period: 1
            }
        );
        market.step(&[]).unwrap();
        let out = market.finish();
        assert_eq!(out.trades.len(), 1);
        assert_eq!(out.surplus, m(4));
        assert_eq!(out.revenue, Money::ZERO);

        let settled: Vec<(Period, SettlementKind)> =
            out.trace.settlements().map(|(p, s)| (p, s.kind)).collect();
        assert_eq!(
            settled,
            alloc::vec![
                (1, BuyerPays),
                (1, SellerDeliversItem),
                (1, PaymentReleasedToSeller),
                (2, ItemReleasedToBuyer)
            ]
        );
        assert_eq!(inventory_level(&out.trace, 1), 1);
        assert_eq!(inventory_level(&out.trace, 2), 0);
        assert_eq!(ledger_balance(&out.trace, 1), Money::ZERO);
        assert_eq!(
            utility(&buyer, &AgentOutcome::from_trace(&out.trace, buyer.id)),
            m(3)
        );
        assert_eq!(
            utility(&seller, &AgentOutcome::from_trace(&out.trace, seller.id)),
            m(1)
        );
    }

    #[test]
    fn weak_seller_priced_out_immediately() {
        let mut market = Market::new(ScheduleState::fixed(m(5)).unwrap(), cfg(5));
        market.step(&[Offer::sell(3, 0, 2, m(-6))]).unwrap();
        assert_eq!(
            market.record(OfferId(3)).unwrap().status,
            OfferStatus::PricedOut { period: 0 }
        );
    }

    #[test]
    fn empty_period_only_advances() {
        let mut market = Market::new(ScheduleState::fixed(m(5)).unwrap(), cfg(5));
        assert!(market.step(&[]).unwrap().is_empty());
        assert_eq!(market.period(), 1);
        assert_eq!(market.active_offers().count(), 0);
    }

    #[test]
    fn arrival_mismatch_rejected() {
        let mut market = Market::new(ScheduleState::fixed(m(5)).unwrap(), cfg(5));
        assert_eq!(
            market.step(&[Offer::buy(1, 3, 4, m(8))]),
            Err(EngineError::InvalidArrival {
                id: OfferId(1),
                arrival: 3,
                period: 0
            })
        );
    }

    #[test]
    fn one_sided_market_never_trades() {
        let offers: Vec<Offer> = (0..6)
            .map(|k| Offer::buy(k, k as Period, k as Period + 2, m(9)))
            .collect();
        let out = run(&offers, ScheduleState::fixed(m(1)).unwrap(), cfg(3)).unwrap();
        assert!(out.trades.is_empty());
        assert_eq!(out.revenue, Money::ZERO);
    }

    #[test]
    fn fixed_threshold_semantics() {
        let offers = [
            Offer::buy(1, 0, 3, m(4)),
            Offer::buy(2, 0, 3, m(9)),
            Offer::sell(3, 0, 3, m(-2)),
            Offer::sell(4, 0, 3, m(-7)),
        ];
        let out = run(&offers, ScheduleState::fixed(m(5)).unwrap(), cfg(5)).unwrap();
        assert_eq!(
            out.statuses[&OfferId(1)],
            OfferStatus::PricedOut { period: 0 }
        );
        assert_eq!(
            out.statuses[&OfferId(4)],
            OfferStatus::PricedOut { period: 0 }
        );
        assert_eq!(out.trades.len(), 1);
        assert_eq!(
            (out.trades[0].buyer, out.trades[0].seller),
            (OfferId(2), OfferId(3))
        );
    }

    #[test]
    fn provisional_window_reaches_before_arrival() {
        // EWMA with lambda 1: quote in period t is the mean of offers closed in t - 1.
        let offers = [
            Offer::buy(1, 0, 0, m(7)), // closes (expires) at 0: buy quote 7 from period 1
            Offer::buy(2, 1, 1, m(3)), // priced out at 1, closes: quote 3 from period 2
            Offer::buy(3, 2, 5, m(6)), // window starts at 0: max(1, 7, 3) = 7 > 6
            Offer::buy(4, 2, 6, m(6)), // window starts at 1: max(7, 3) = 7 > 6
            Offer::buy(5, 2, 7, m(6)), // window starts at 2: quote 3 only
        ];
        let sched = ScheduleState::ewma(1.0, crate::schedules::Statistic::Mean, m(1)).unwrap();
        let out = run(&offers, sched, cfg(5)).unwrap();
        assert_eq!(
            out.statuses[&OfferId(2)],
            OfferStatus::PricedOut { period: 1 }
        );
        assert_eq!(
            out.statuses[&OfferId(3)],
            OfferStatus::PricedOut { period: 2 }
        );
        assert_eq!(
            out.statuses[&OfferId(4)],
            OfferStatus::PricedOut { period: 2 }
        );
        assert_eq!(
            out.statuses[&OfferId(5)],
            OfferStatus::Expired { period: 7 }
        );
    }

    #[test]
    fn deterministic_runs() {
        let offers: Vec<Offer> = (0..20)
            .map(|k| {
                let v = m((k as i64 * 7) % 11);
                if k % 2 == 0 {
                    Offer::buy(k, k as Period / 3, k as Period / 3 + 2, v)
                } else {
                    Offer::sell(k, k as Period / 3, k as Period / 3 + 1, -v)
                }
            })
            .collect();
        let a = run(&offers, ScheduleState::mcafee(m(100)), cfg(3)).unwrap();
        let b = run(&offers, ScheduleState::mcafee(m(100)), cfg(3)).unwrap();
        assert_eq!(a, b);
    }
}

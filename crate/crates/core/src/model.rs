//! Domain types shared by every module: offers, statuses, trades, settlement
//! events, the trial trace and agent utility accounting.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use core::fmt;

use crate::money::Money;

/// Discrete market period, starting at 0.
pub type Period = u32;

/// External agent identity. Never derived from reported fields.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OfferId(pub u64);

impl fmt::Display for OfferId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Side {
    Buy,
    Sell,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Buy => Side::Sell,
            Side::Sell => Side::Buy,
        }
    }
}

/// One agent's reported (or true) type.
///
/// Values are signed: buyers carry their value `>= 0`, sellers the negated
/// cost `<= 0`. Quotes and payments use the same sign convention.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Offer {
    pub id: OfferId,
    pub arrival: Period,
    pub depart: Period,
    pub side: Side,
    pub value: Money,
}

impl Offer {
    pub fn new(id: u64, arrival: Period, depart: Period, side: Side, value: Money) -> Self {
        Offer {
            id: OfferId(id),
            arrival,
            depart,
            side,
            value,
        }
    }

    pub fn buy(id: u64, arrival: Period, depart: Period, value: Money) -> Self {
        Offer::new(id, arrival, depart, Side::Buy, value)
    }

    pub fn sell(id: u64, arrival: Period, depart: Period, value: Money) -> Self {
        Offer::new(id, arrival, depart, Side::Sell, value)
    }

    pub fn is_present(&self, t: Period) -> bool {
        self.arrival <= t && t <= self.depart
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum OfferError {
    #[error("offer {id}: departure {depart} precedes arrival {arrival}")]
    DepartBeforeArrival {
        id: OfferId,
        arrival: Period,
        depart: Period,
    },
    #[error("offer {id}: departure {depart} exceeds arrival {arrival} + patience {patience}")]
    PatienceExceeded {
        id: OfferId,
        arrival: Period,
        depart: Period,
        patience: Period,
    },
    #[error("offer {id}: value {value} has the wrong sign for its side")]
    WrongSign { id: OfferId, value: Money },
    #[error("duplicate offer id {0}")]
    DuplicateId(OfferId),
}

/// Checks the per-offer invariants under patience bound `patience`.
pub fn validate_offer(offer: Offer, patience: Period) -> Result<Offer, OfferError> {
    if offer.depart < offer.arrival {
        return Err(OfferError::DepartBeforeArrival {
            id: offer.id,
            arrival: offer.arrival,
            depart: offer.depart,
        });
    }
    if offer.depart - offer.arrival > patience {
        return Err(OfferError::PatienceExceeded {
            id: offer.id,
            arrival: offer.arrival,
            depart: offer.depart,
            patience,
        });
    }
    let sign_ok = match offer.side {
        Side::Buy => offer.value >= Money::ZERO,
        Side::Sell => offer.value <= Money::ZERO,
    };
    if !sign_ok {
        return Err(OfferError::WrongSign {
            id: offer.id,
            value: offer.value,
        });
    }
    Ok(offer)
}

/// Validates every offer and rejects repeated ids.
pub fn validate_instance(offers: &[Offer], patience: Period) -> Result<(), OfferError> {
    let mut seen = BTreeSet::new();
    for offer in offers {
        validate_offer(*offer, patience)?;
        if !seen.insert(offer.id) {
            return Err(OfferError::DuplicateId(offer.id));
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OfferStatus {
    Active,
    PricedOut {
        period: Period,
    },
    Matched {
        partner: OfferId,
        payment: Money,
        period: Period,
    },
    Expired {
        period: Period,
    },
}

impl OfferStatus {
    pub fn is_terminal(&self) -> bool {
        !matches!(self, OfferStatus::Active)
    }

    /// Only `Active` may move, and only to a terminal state.
    pub fn can_transition_to(&self, next: &OfferStatus) -> bool {
        matches!(self, OfferStatus::Active) && next.is_terminal()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Trade {
    pub buyer: OfferId,
    pub seller: OfferId,
    pub buyer_payment: Money,
    pub seller_payment: Money,
    pub match_period: Period,
}

impl Trade {
    /// Auctioneer's net cash from this trade once fully settled.
    pub fn surplus_to_auctioneer(&self) -> Money {
        self.buyer_payment + self.seller_payment
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SettlementKind {
    BuyerPays,
    SellerDeliversItem,
    ItemReleasedToBuyer,
    PaymentReleasedToSeller,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SettlementEvent {
    pub period: Period,
    pub kind: SettlementKind,
    pub trade: Trade,
}

impl SettlementEvent {
    pub fn cash_delta(&self) -> Money {
        match self.kind {
            SettlementKind::BuyerPays => self.trade.buyer_payment,
            SettlementKind::PaymentReleasedToSeller => self.trade.seller_payment,
            _ => Money::ZERO,
        }
    }

    pub fn item_delta(&self) -> i64 {
        match self.kind {
            SettlementKind::SellerDeliversItem => 1,
            SettlementKind::ItemReleasedToBuyer => -1,
            _ => 0,
        }
    }

    /// The offer on whose behalf the transfer happens.
    pub fn subject(&self) -> OfferId {
        match self.kind {
            SettlementKind::BuyerPays | SettlementKind::ItemReleasedToBuyer => self.trade.buyer,
            _ => self.trade.seller,
        }
    }

    pub fn counterparty(&self) -> OfferId {
        match self.kind {
            SettlementKind::BuyerPays | SettlementKind::ItemReleasedToBuyer => self.trade.seller,
            _ => self.trade.buyer,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceEventKind {
    Quote { quote: Money, provisional: Money },
    PriceOut { provisional: Money },
    Match { partner: OfferId, payment: Money },
    Settle(SettlementEvent),
    Expire,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TraceEvent {
    pub period: Period,
    pub offer: OfferId,
    pub kind: TraceEventKind,
}

impl TraceEvent {
    pub fn cash_delta(&self) -> Money {
        match &self.kind {
            TraceEventKind::Settle(s) => s.cash_delta(),
            _ => Money::ZERO,
        }
    }

    pub fn item_delta(&self) -> i64 {
        match &self.kind {
            TraceEventKind::Settle(s) => s.item_delta(),
            _ => 0,
        }
    }
}

/// Full per-period record of a trial. Events are stored in period order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TrialTrace {
    events: Vec<TraceEvent>,
}

impl TrialTrace {
    pub fn new() -> Self {
        TrialTrace::default()
    }

    /// Builds a trace from raw events, e.g. for negative controls in tests.
    pub fn from_events(mut events: Vec<TraceEvent>) -> Self {
        events.sort_by_key(|e| e.period);
        TrialTrace { events }
    }

    pub fn push(&mut self, event: TraceEvent) {
        debug_assert!(self
            .events
            .last()
            .is_none_or(|last| last.period <= event.period));
        self.events.push(event);
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub fn last_period(&self) -> Option<Period> {
        self.events.last().map(|e| e.period)
    }

    pub fn settlements(&self) -> impl Iterator<Item = (Period, &SettlementEvent)> {
        self.events.iter().filter_map(|e| match &e.kind {
            TraceEventKind::Settle(s) => Some((e.period, s)),
            _ => None,
        })
    }

    pub fn trades(&self) -> impl Iterator<Item = Trade> + '_ {
        self.events.iter().filter_map(|e| match e.kind {
            TraceEventKind::Settle(s) if s.kind == SettlementKind::BuyerPays => Some(s.trade),
            _ => None,
        })
    }

    /// Quotes issued to `offer`, in period order, as `(period, quote, provisional)`.
    pub fn quotes_for(&self, offer: OfferId) -> impl Iterator<Item = (Period, Money, Money)> + '_ {
        self.events.iter().filter_map(move |e| match e.kind {
            TraceEventKind::Quote { quote, provisional } if e.offer == offer => {
                Some((e.period, quote, provisional))
            }
            _ => None,
        })
    }
}

/// Cumulative cash held by the auctioneer through the end of period `t`.
pub fn ledger_balance(trace: &TrialTrace, t: Period) -> Money {
    trace
        .events()
        .iter()
        .take_while(|e| e.period <= t)
        .map(TraceEvent::cash_delta)
        .sum()
}

/// Items held by the auctioneer through the end of period `t`.
pub fn inventory_level(trace: &TrialTrace, t: Period) -> i64 {
    trace
        .events()
        .iter()
        .take_while(|e| e.period <= t)
        .map(TraceEvent::item_delta)
        .sum()
}

/// What happened to one agent, as needed for utility accounting.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct AgentOutcome {
    /// Payment made by the agent; negative when the agent is paid.
    pub payment: Money,
    pub traded: bool,
    /// Period in which the agent receives what it traded for: the item for a
    /// buyer, the payment for a seller.
    pub delivery: Option<Period>,
}

impl AgentOutcome {
    pub fn unmatched() -> Self {
        AgentOutcome::default()
    }

    pub fn from_trace(trace: &TrialTrace, id: OfferId) -> Self {
        let mut out = AgentOutcome::unmatched();
        for (period, s) in trace.settlements() {
            match s.kind {
                SettlementKind::ItemReleasedToBuyer if s.trade.buyer == id => {
                    out.traded = true;
                    out.payment = s.trade.buyer_payment;
                    out.delivery = Some(period);
                }
                SettlementKind::PaymentReleasedToSeller if s.trade.seller == id => {
                    out.traded = true;
                    out.payment = s.trade.seller_payment;
                    out.delivery = Some(period);
                }
                _ => {}
            }
        }
        out
    }
}

/// Quasi-linear utility of an agent with true type `truth`.
///
/// A buyer values its item only if released by its true departure; money
/// paid always counts. A seller values its payment only if released by its
/// true departure, and bears its cost whenever it trades.
pub fn utility(truth: &Offer, outcome: &AgentOutcome) -> Money {
    if !outcome.traded {
        return Money::ZERO;
    }
    let on_time = outcome.delivery.is_some_and(|p| p <= truth.depart);
    match truth.side {
        Side::Buy => {
            let value = if on_time { truth.value } else { Money::ZERO };
            value - outcome.payment
        }
        Side::Sell => {
            let received = if on_time {
                outcome.payment
            } else {
                Money::ZERO
            };
            truth.value - received
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(x: i64) -> Money {
        Money::from_units(x)
    }

    #[test]
    fn validate_examples() {
        let ok = Offer::buy(1, 10, 13, m(6));
        assert_eq!(validate_offer(ok, 5), Ok(ok));
        assert!(matches!(
            validate_offer(Offer::buy(2, 5, 3, m(1)), 5),
            Err(OfferError::DepartBeforeArrival { .. })
        ));
        assert!(matches!(
            validate_offer(Offer::sell(3, 0, 7, m(-2)), 5),
            Err(OfferError::PatienceExceeded { .. })
        ));
        assert!(matches!(
            validate_offer(Offer::buy(4, 0, 1, m(-1)), 5),
            Err(OfferError::WrongSign { .. })
        ));
        assert!(matches!(
            validate_offer(Offer::sell(5, 0, 1, m(1)), 5),
            Err(OfferError::WrongSign { .. })
        ));
        let dup = [Offer::buy(1, 0, 1, m(1)), Offer::sell(1, 0, 1, m(-1))];
        assert_eq!(
            validate_instance(&dup, 5),
            Err(OfferError::DuplicateId(OfferId(1)))
        );
    }

    #[test]
    fn utility_examples() {
        let buyer = Offer::buy(1, 0, 4, m(8));
        let paid = AgentOutcome {
            payment: m(5),
            traded: true,
            delivery: Some(3),
        };
        assert_eq!(utility(&buyer, &paid), m(3));

        let seller = Offer::sell(2, 0, 4, m(-4));
        let received = AgentOutcome {
            payment: m(-5),
            traded: true,
            delivery: Some(2),
        };
        assert_eq!(utility(&seller, &received), m(1));

        assert_eq!(utility(&buyer, &AgentOutcome::unmatched()), Money::ZERO);
    }

    #[test]
    fn late_delivery_is_worthless() {
        let buyer = Offer::buy(1, 0, 2, m(8));
        let late = AgentOutcome {
            payment: m(5),
            traded: true,
            delivery: Some(3),
        };
        assert_eq!(utility(&buyer, &late), m(-5));
        let seller = Offer::sell(2, 0, 2, m(-4));
        let late = AgentOutcome {
            payment: m(-5),
            traded: true,
            delivery: Some(3),
        };
        assert_eq!(utility(&seller, &late), m(-4));
    }

    fn settle(period: Period, kind: SettlementKind, trade: Trade) -> TraceEvent {
        let s = SettlementEvent {
            period,
            kind,
            trade,
        };
        TraceEvent {
            period,
            offer: s.subject(),
            kind: TraceEventKind::Settle(s),
        }
    }

    fn trade(p: i64) -> Trade {
        Trade {
            buyer: OfferId(1),
            seller: OfferId(2),
            buyer_payment: m(p),
            seller_payment: m(-p),
            match_period: 1,
        }
    }

    #[test]
    fn ledger_examples() {
        let empty = TrialTrace::new();
        for t in 0..5 {
            assert_eq!(ledger_balance(&empty, t), Money::ZERO);
            assert_eq!(inventory_level(&empty, t), 0);
        }

        let same = TrialTrace::from_events(alloc::vec![
            settle(1, SettlementKind::BuyerPays, trade(5)),
            settle(1, SettlementKind::PaymentReleasedToSeller, trade(5)),
        ]);
        assert_eq!(ledger_balance(&same, 1), Money::ZERO);

        let staggered = TrialTrace::from_events(alloc::vec![
            settle(1, SettlementKind::BuyerPays, trade(5)),
            settle(3, SettlementKind::PaymentReleasedToSeller, trade(5)),
        ]);
        assert_eq!(ledger_balance(&staggered, 0), Money::ZERO);
        assert_eq!(ledger_balance(&staggered, 1), m(5));
        assert_eq!(ledger_balance(&staggered, 2), m(5));
        assert_eq!(ledger_balance(&staggered, 3), Money::ZERO);
        assert_eq!(ledger_balance(&staggered, 9), Money::ZERO);
    }

    #[test]
    fn inventory_examples() {
        let held = TrialTrace::from_events(alloc::vec![
            settle(1, SettlementKind::SellerDeliversItem, trade(5)),
            settle(2, SettlementKind::ItemReleasedToBuyer, trade(5)),
        ]);
        assert_eq!(inventory_level(&held, 0), 0);
        assert_eq!(inventory_level(&held, 1), 1);
        assert_eq!(inventory_level(&held, 2), 0);
        assert_eq!(inventory_level(&held, 7), 0);

        let pass_through = TrialTrace::from_events(alloc::vec![
            settle(2, SettlementKind::SellerDeliversItem, trade(5)),
            settle(2, SettlementKind::ItemReleasedToBuyer, trade(5)),
        ]);
        for t in 0..4 {
            assert_eq!(inventory_level(&pass_through, t), 0);
        }
    }

    #[test]
    fn status_transitions() {
        let active = OfferStatus::Active;
        let out = OfferStatus::PricedOut { period: 3 };
        assert!(active.can_transition_to(&out));
        assert!(!out.can_transition_to(&OfferStatus::Expired { period: 4 }));
        assert!(!active.can_transition_to(&OfferStatus::Active));
    }
}

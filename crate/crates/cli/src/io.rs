//! CSV formats: offers in, traces and matchings out.

use std::io::{Read, Write};

use pricerank_core::model::{SettlementKind, TraceEventKind};
use pricerank_core::oracle::OptimalMatching;
use pricerank_core::{Money, Offer, OfferId, Side, TrialTrace};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("line {line}: unknown side {side:?} (expected B or S)")]
    Side { line: u64, side: String },
    #[error("line {line}: bad value {value:?}: {source}")]
    Value {
        line: u64,
        value: String,
        source: pricerank_core::money::ParseMoneyError,
    },
}

#[derive(Debug, Serialize, Deserialize)]
struct OfferRow {
    id: u64,
    side: String,
    arrival: u32,
    depart: u32,
    value: String,
}

pub fn read_offers<R: Read>(reader: R) -> Result<Vec<Offer>, FormatError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut offers = Vec::new();
    for (i, row) in rdr.deserialize::<OfferRow>().enumerate() {
        let row = row?;
        let line = i as u64 + 2;
        let side = match row.side.as_str() {
            "B" | "b" => Side::Buy,
            "S" | "s" => Side::Sell,
            _ => {
                return Err(FormatError::Side {
                    line,
                    side: row.side,
                })
            }
        };
        let value = row
            .value
            .parse::<Money>()
            .map_err(|source| FormatError::Value {
                line,
                value: row.value.clone(),
                source,
            })?;
        offers.push(Offer {
            id: OfferId(row.id),
            arrival: row.arrival,
            depart: row.depart,
            side,
            value,
        });
    }
    Ok(offers)
}

pub fn write_offers<W: Write>(writer: W, offers: &[Offer]) -> Result<(), FormatError> {
    let mut wtr = csv::Writer::from_writer(writer);
    for o in offers {
        wtr.serialize(OfferRow {
            id: o.id.0,
            side: match o.side {
                Side::Buy => "B".into(),
                Side::Sell => "S".into(),
            },
            arrival: o.arrival,
            depart: o.depart,
            value: o.value.to_string(),
        })?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

fn event_name(kind: &TraceEventKind) -> &'static str {
    match kind {
        TraceEventKind::Quote { .. } => "QUOTE",
        TraceEventKind::PriceOut { .. } => "PRICEOUT",
        TraceEventKind::Match { .. } => "MATCH",
        TraceEventKind::Settle(s) => match s.kind {
            SettlementKind::BuyerPays => "PAY",
            SettlementKind::SellerDeliversItem => "DELIVER",
            SettlementKind::ItemReleasedToBuyer => "RELEASE_ITEM",
            SettlementKind::PaymentReleasedToSeller => "RELEASE_PAY",
        },
        TraceEventKind::Expire => "EXPIRE",
    }
}

/// Writes one row per trace event with the running auctioneer inventory and
/// cash balance after that event. Empty cells mean "not applicable".
pub fn write_trace<W: Write>(writer: W, trace: &TrialTrace) -> Result<(), FormatError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record([
        "period",
        "event",
        "offer_id",
        "partner_id",
        "quote",
        "ps",
        "amount",
        "inventory",
        "balance",
    ])?;
    let mut inventory = 0i64;
    let mut balance = Money::ZERO;
    let blank = String::new;
    for e in trace.events() {
        inventory += e.item_delta();
        balance += e.cash_delta();
        let (partner, quote, ps, amount) = match e.kind {
            TraceEventKind::Quote { quote, provisional } => {
                (blank(), quote.to_string(), provisional.to_string(), blank())
            }
            TraceEventKind::PriceOut { provisional } => {
                (blank(), blank(), provisional.to_string(), blank())
            }
            TraceEventKind::Match { partner, payment } => {
                (partner.0.to_string(), blank(), blank(), payment.to_string())
            }
            TraceEventKind::Settle(s) => {
                let amount = match s.kind {
                    SettlementKind::BuyerPays | SettlementKind::PaymentReleasedToSeller => {
                        s.cash_delta().to_string()
                    }
                    _ => blank(),
                };
                (s.counterparty().0.to_string(), blank(), blank(), amount)
            }
            TraceEventKind::Expire => (blank(), blank(), blank(), blank()),
        };
        wtr.write_record([
            e.period.to_string(),
            event_name(&e.kind).to_string(),
            e.offer.0.to_string(),
            partner,
            quote,
            ps,
            amount,
            inventory.to_string(),
            balance.to_string(),
        ])?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_matching<W: Write>(writer: W, matching: &OptimalMatching) -> Result<(), FormatError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["buyer_id", "seller_id", "weight"])?;
    for (b, s, w) in &matching.pairs {
        wtr.write_record([b.0.to_string(), s.0.to_string(), w.to_string()])?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use pricerank_core::{run, EngineConfig, ScheduleState};

    #[test]
    fn offers_roundtrip() {
        let offers = vec![
            Offer::buy(1, 0, 2, Money::from_micros(8_000_001)),
            Offer::sell(2, 1, 1, Money::from_units(-4)),
        ];
        let mut buf = Vec::new();
        write_offers(&mut buf, &offers).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text,
            "id,side,arrival,depart,value\n1,B,0,2,8.000001\n2,S,1,1,-4.000000\n"
        );
        assert_eq!(read_offers(buf.as_slice()).unwrap(), offers);
    }

    #[test]
    fn rejects_bad_rows() {
        let bad_side = "id,side,arrival,depart,value\n1,X,0,1,1\n";
        assert!(matches!(
            read_offers(bad_side.as_bytes()),
            Err(FormatError::Side { line: 2, .. })
        ));
        let bad_value = "id,side,arrival,depart,value\n1,B,0,1,1.0000001\n";
        assert!(matches!(
            read_offers(bad_value.as_bytes()),
            Err(FormatError::Value { .. })
        ));
    }

    #[test]
    fn trace_columns() {
        let offers = vec![
            Offer::buy(1, 0, 2, Money::from_units(8)),
            Offer::sell(2, 1, 1, Money::from_units(-4)),
        ];
        let out = run(
            &offers,
            ScheduleState::fixed(Money::from_units(5)).unwrap(),
            EngineConfig {
                patience: 5,
                seed: 0,
            },
        )
        .unwrap();
        let mut buf = Vec::new();
        write_trace(&mut buf, &out.trace).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "period,event,offer_id,partner_id,quote,ps,amount,inventory,balance"
        );
        assert!(lines.contains(&"1,PAY,1,2,,,5.000000,0,5.000000"));
        assert!(lines.contains(&"1,RELEASE_PAY,2,1,,,-5.000000,1,0.000000"));
        assert!(lines.last().unwrap().starts_with("2,RELEASE_ITEM,1,2"));
    }
}

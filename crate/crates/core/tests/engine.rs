use std::collections::BTreeSet;

use proptest::prelude::*;

use pricerank_core::oracle::optimal_match;
use pricerank_core::verifier::{check_feasibility, check_no_deficit, random_instance};
use pricerank_core::{
    run, EngineConfig, Money, OfferStatus, ScheduleKind, ScheduleParams, ScheduleSpec, Side,
};

fn kind_strategy() -> impl Strategy<Value = ScheduleKind> {
    prop::sample::select(ScheduleKind::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn engine_invariants(seed in any::<u64>(), kind in kind_strategy(), patience in 0u32..5, tie in any::<u64>()) {
        let inst = random_instance(seed, 40, patience, 15, Money::from_units(3), Money::from_micros(1));
        let sched = ScheduleSpec::new(kind, ScheduleParams::default()).build().unwrap();
        let out = run(&inst, sched, EngineConfig { patience, seed: tie }).unwrap();

        prop_assert!(check_no_deficit(&out.trace).passed());
        prop_assert!(check_feasibility(&out.trace).passed());
        prop_assert!(out.revenue >= Money::ZERO);
        prop_assert!(out.surplus <= optimal_match(&inst).surplus);

        let mut seen = BTreeSet::new();
        for t in &out.trades {
            prop_assert!(seen.insert(t.buyer) && seen.insert(t.seller));
            let b = inst.iter().find(|o| o.id == t.buyer).unwrap();
            let s = inst.iter().find(|o| o.id == t.seller).unwrap();
            prop_assert_eq!((b.side, s.side), (Side::Buy, Side::Sell));
            prop_assert!(b.is_present(t.match_period) && s.is_present(t.match_period));
            prop_assert!(t.buyer_payment <= b.value && t.seller_payment <= s.value);
            prop_assert!(t.buyer_payment + t.seller_payment >= Money::ZERO);
        }
        for o in &inst {
            let status = out.statuses[&o.id];
            prop_assert!(status.is_terminal(), "{:?}", status);
            if let OfferStatus::Matched { period, .. } | OfferStatus::PricedOut { period } | OfferStatus::Expired { period } = status {
                prop_assert!(o.arrival <= period && period <= o.depart);
            }
        }
    }

    #[test]
    fn deterministic(seed in any::<u64>(), kind in kind_strategy()) {
        let inst = random_instance(seed, 25, 3, 10, Money::from_units(3), Money::from_micros(1));
        let spec = ScheduleSpec::new(kind, ScheduleParams::default());
        let config = EngineConfig { patience: 3, seed };
        let a = run(&inst, spec.build().unwrap(), config).unwrap();
        let b = run(&inst, spec.build().unwrap(), config).unwrap();
        prop_assert_eq!(a, b);
    }
}

use pricerank_core::verifier::{
    check_feasibility, check_impatient_reduction, check_monotonicity, check_no_deficit,
    check_schedule_validity, check_static_quotes, check_truthfulness, default_grid,
    observed_prices, random_instance, ValidityProperty,
};
use pricerank_core::{
    run, BookSnapshot, EngineConfig, Money, ScheduleKind, ScheduleParams, ScheduleSpec,
    ScheduleState,
};

fn spec(kind: ScheduleKind) -> ScheduleState {
    ScheduleSpec::new(kind, ScheduleParams::default())
        .build()
        .unwrap()
}

fn res(micros: i64) -> Money {
    Money::from_micros(micros)
}

#[test]
fn truthful_on_small_instances() {
    let mut failures = Vec::new();
    for kind in ScheduleKind::ALL {
        let sched = spec(kind);
        for i in 0..6u64 {
            let patience = (i % 4) as u32;
            let inst =
                random_instance(100 + i, 10, patience, 5, Money::from_units(4), res(250_000));
            let config = EngineConfig { patience, seed: i };
            let horizon = inst.iter().map(|o| o.depart).max().unwrap();
            for o in &inst {
                let seen = observed_prices(&inst, o.id, &sched, config).unwrap();
                let grid = default_grid(o, patience, horizon, &seen);
                let r = check_truthfulness(&inst, o.id, &grid, &sched, config).unwrap();
                if let Some(best) = r.best {
                    failures.push((kind, i, o.id, best));
                }
            }
        }
    }
    assert!(failures.is_empty(), "{failures:#?}");
}

#[test]
fn ledger_invariants_hold() {
    for kind in ScheduleKind::ALL {
        for i in 0..40u64 {
            let inst = random_instance(i, 30, 3, 10, Money::from_units(4), res(1));
            let out = run(
                &inst,
                spec(kind),
                EngineConfig {
                    patience: 3,
                    seed: i,
                },
            )
            .unwrap();
            assert!(check_no_deficit(&out.trace).passed(), "{kind} {i}");
            assert!(check_feasibility(&out.trace).passed(), "{kind} {i}");
        }
    }
}

#[test]
fn payments_monotone_in_window() {
    let mut failures = Vec::new();
    for kind in ScheduleKind::ALL {
        let sched = spec(kind);
        for i in 0..10u64 {
            let inst = random_instance(200 + i, 12, 3, 6, Money::from_units(4), res(1));
            let config = EngineConfig {
                patience: 3,
                seed: i,
            };
            for o in &inst {
                failures.extend(
                    check_monotonicity(&inst, o.id, &sched, config)
                        .unwrap()
                        .into_iter()
                        .map(|v| (kind, i, v)),
                );
            }
        }
    }
    assert!(failures.is_empty(), "{failures:#?}");
}

#[test]
fn static_quotes_match_payments() {
    for i in 0..300u64 {
        let inst = random_instance(i, 14, 0, 1, Money::from_units(10), res(1_000_000));
        let book = BookSnapshot::new(&inst);
        let mismatches = check_static_quotes(&book, (Money::ZERO, -Money::from_units(1000)));
        assert!(mismatches.is_empty(), "{i}: {mismatches:?}");
    }
}

#[test]
fn impatient_engine_matches_static() {
    for i in 0..100u64 {
        let inst = random_instance(i, 20, 0, 4, Money::from_units(4), res(1));
        let mism = check_impatient_reduction(&inst, Money::from_units(1000), i).unwrap();
        assert!(mism.is_empty(), "{i}: {mism:?}");
    }
}

#[test]
fn schedules_pass_validity_probes() {
    for kind in ScheduleKind::ALL {
        for seed in 0..10u64 {
            let inst = random_instance(seed, 40, 3, 12, Money::from_units(4), res(1));
            let r = check_schedule_validity(
                &spec(kind),
                &inst,
                EngineConfig {
                    patience: 3,
                    seed: 1,
                },
                6,
                3,
            )
            .unwrap();
            for p in [
                ValidityProperty::OwnReport,
                ValidityProperty::Online,
                ValidityProperty::OthersValues,
            ] {
                assert!(r.passed(p), "{kind} {p:?} {:?}", r.violations);
            }
        }
    }
}

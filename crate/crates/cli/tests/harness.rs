use pricerank::harness::{
    evaluate, mean_ci95, prepare_offers, run_trial, sweep, tune_on, Axis, SearchSpace, SweepConfig,
};
use pricerank_core::workload::ScenarioConfig;
use pricerank_core::{Money, Offer, ScheduleKind, ScheduleParams, ScheduleSpec};

fn m(x: i64) -> Money {
    Money::from_units(x)
}

fn small() -> ScenarioConfig {
    ScenarioConfig {
        n_bids: 40,
        n_asks: 40,
        ..Default::default()
    }
}

fn fixed(p: i64) -> ScheduleSpec {
    ScheduleSpec::new(
        ScheduleKind::Fixed,
        ScheduleParams {
            p_star: m(p),
            ..Default::default()
        },
    )
}

#[test]
fn hand_traced_trial() {
    let offers = vec![Offer::buy(1, 0, 2, m(8)), Offer::sell(2, 1, 1, m(-4))];
    let p = prepare_offers(ScenarioConfig::default(), 0, offers);
    let t = evaluate(&p, &fixed(5)).unwrap();
    assert_eq!((t.surplus_online, t.surplus_offline), (m(4), m(4)));
    assert_eq!(
        (t.efficiency, t.revenue, t.revenue_share),
        (1.0, Money::ZERO, 0.0)
    );
    assert_eq!((t.trades_online, t.trades_offline), (1, 1));
    assert!(!t.degenerate);

    // p* above the buyer's value: nothing trades.
    let t = evaluate(&p, &fixed(9)).unwrap();
    assert_eq!((t.efficiency, t.trades_online), (0.0, 0));
}

#[test]
fn one_sided_instance_is_degenerate() {
    let offers = vec![Offer::buy(1, 0, 2, m(8)), Offer::buy(2, 1, 3, m(3))];
    let p = prepare_offers(ScenarioConfig::default(), 0, offers);
    let t = evaluate(
        &p,
        &ScheduleSpec::new(ScheduleKind::McAfee, ScheduleParams::default()),
    )
    .unwrap();
    assert!(t.degenerate);
    assert_eq!((t.efficiency, t.revenue_share), (1.0, 0.0));
}

#[test]
fn trials_are_deterministic() {
    let spec = ScheduleSpec::new(ScheduleKind::Ewma, ScheduleParams::default());
    let a = run_trial(&small(), &spec, 11).unwrap();
    let b = run_trial(&small(), &spec, 11).unwrap();
    assert_eq!(a, b);
    assert_ne!(
        a.instance_hash,
        run_trial(&small(), &spec, 12).unwrap().instance_hash
    );
}

fn overlapping_market() -> Vec<pricerank::harness::Prepared> {
    let mut offers = Vec::new();
    for i in 0..6 {
        offers.push(Offer::buy(i + 1, 0, 5, m(8)));
        offers.push(Offer::sell(i + 101, 0, 5, m(-4)));
    }
    vec![prepare_offers(ScenarioConfig::default(), 3, offers)]
}

#[test]
fn tuning_finds_clearing_price() {
    let space = SearchSpace::FixedPrice {
        lo: Money::ZERO,
        hi: m(10),
    };
    let r = tune_on(
        ScheduleKind::Fixed,
        ScheduleParams::default(),
        space,
        &overlapping_market(),
    )
    .unwrap();
    assert_eq!(r.score, 1.0);
    assert!(
        r.params.p_star >= m(4) && r.params.p_star <= m(8),
        "p* = {}",
        r.params.p_star
    );
    assert!(r.scored.iter().all(|(_, s)| *s <= r.score));
    assert!(r.scored.iter().any(|(_, s)| *s < 1.0));
}

#[test]
fn single_candidate_space() {
    let space = SearchSpace::FixedPrice { lo: m(6), hi: m(6) };
    let r = tune_on(
        ScheduleKind::Fixed,
        ScheduleParams::default(),
        space,
        &overlapping_market(),
    )
    .unwrap();
    assert_eq!(r.params.p_star, m(6));
    assert_eq!(r.scored.len(), 1);
}

#[test]
fn sweep_uses_common_instances() {
    let cfg = SweepConfig {
        axis: Axis::Volatility,
        values: vec![0.01],
        base: small(),
        schedules: vec![ScheduleKind::Fixed, ScheduleKind::McAfee],
        params: ScheduleParams::default(),
        trials: 3,
        seed: 5,
        tune: false,
    };
    let r = sweep(&cfg).unwrap();
    assert_eq!((r.rows.len(), r.aggregates.len()), (6, 2));
    for trial in 0..3 {
        let hashes: Vec<_> = r
            .rows
            .iter()
            .filter(|x| x.trial == trial)
            .map(|x| &x.metrics.instance_hash)
            .collect();
        assert_eq!(hashes.len(), 2);
        assert_eq!(hashes[0], hashes[1]);
    }
    for a in &r.aggregates {
        let effs: Vec<f64> = r
            .rows
            .iter()
            .filter(|x| x.metrics.schedule == a.schedule)
            .map(|x| x.metrics.efficiency)
            .collect();
        let (mean, hw) = mean_ci95(&effs);
        assert!((a.mean_efficiency - mean).abs() < 1e-12 && (a.ci95_halfwidth - hw).abs() < 1e-12);
        assert_eq!(a.trials, 3);
    }
    let fixed = r
        .aggregates
        .iter()
        .find(|a| a.schedule == ScheduleKind::Fixed)
        .unwrap();
    assert_eq!(fixed.mean_revenue_share, 0.0);
    assert_eq!(sweep(&cfg).unwrap(), r);
}

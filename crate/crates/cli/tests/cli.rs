use std::fs;
use std::process::{Command, Output};

fn pricerank(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pricerank"))
        .args(args)
        .output()
        .expect("binary runs")
}

#[test]
fn gen_run_and_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let offers = dir.path().join("offers.csv");
    let trace = dir.path().join("trace.csv");
    let o = pricerank(&[
        "gen",
        "--set",
        "n_bids=20",
        "--set",
        "n_asks=20",
        "--set",
        "seed=4",
        "--out",
        offers.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&offers).unwrap();
    assert!(text.starts_with("id,side,arrival,depart,value\n"));
    assert_eq!(text.lines().count(), 41);

    let o = pricerank(&[
        "run",
        "--schedule",
        "mcafee",
        "--offers",
        offers.to_str().unwrap(),
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(out.lines().nth(1).unwrap().starts_with("mcafee,"));
    assert!(fs::read_to_string(&trace)
        .unwrap()
        .starts_with("period,event,"));

    let o = pricerank(&["oracle", "--offers", offers.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(String::from_utf8(o.stdout)
        .unwrap()
        .starts_with("buyer_id,seller_id,weight"));
    assert!(String::from_utf8(o.stderr)
        .unwrap()
        .starts_with("surplus: "));
}

#[test]
fn verify_exit_codes() {
    let o = pricerank(&[
        "verify",
        "--suite",
        "deficit",
        "--schedule",
        "ewma",
        "--instances",
        "5",
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 1);

    let o = pricerank(&["verify", "--suite", "nonsense"]);
    assert_ne!(o.status.code(), Some(0));

    let o = pricerank(&[
        "run",
        "--schedule",
        "fixed",
        "--offers",
        "/nonexistent/offers.csv",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_file_and_bad_keys() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# small market\nn_bids = 5\nn_asks = 5\nseed = 9\n").unwrap();
    let o = pricerank(&["gen", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 11);

    let o = pricerank(&["gen", "--set", "speed=3"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8(o.stderr).unwrap().contains("unknown key"));
}

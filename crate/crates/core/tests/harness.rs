use std::process::Command;

use prox_jed::harness::{
    run_sweep_with_workers, MethodKind, MethodSpec, SweepConfig, SweepResult,
};
use prox_jed::model::ConstellationKind;
use prox_jed::prox::{Mode, ProxParams};

fn small_config() -> SweepConfig {
    SweepConfig::new(
        8,
        4,
        ConstellationKind::Qpsk,
        vec![-4.0, 0.0, 4.0],
        300,
        vec![
            MethodSpec::prox(ProxParams::default()),
            MethodSpec::prox(ProxParams::default().with_mode(Mode::Approx)).with_label("aprox"),
            MethodSpec::new(MethodKind::MrcChest),
            MethodSpec::new(MethodKind::MrcRt),
            MethodSpec::new(MethodKind::MrcCsir),
            MethodSpec::new(MethodKind::MlJed),
        ],
    )
    .with_seed(77)
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let cfg = small_config();
    let one = run_sweep_with_workers(&cfg, 1).unwrap();
    let four = run_sweep_with_workers(&cfg, 4).unwrap();
    let three = run_sweep_with_workers(&cfg, 3).unwrap();
    assert_eq!(one, four);
    assert_eq!(one, three);
}

#[test]
fn saved_sweep_round_trips() {
    let cfg = small_config();
    let result = run_sweep_with_workers(&cfg, 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("out.csv");
    result.save(&csv).unwrap();
    let header = std::fs::read_to_string(&csv).unwrap();
    assert!(header.starts_with("method,snr_db,uplink_ser,downlink_ser,chest_mse,trials,errors,ci_lo,ci_hi"));
    let loaded = SweepResult::load(&csv).unwrap();
    assert_eq!(loaded.meta, result.meta);
    assert_eq!(loaded.rows.len(), result.rows.len());
    for (a, b) in loaded.rows.iter().zip(&result.rows) {
        assert_eq!((a.method.as_str(), a.trials, a.errors), (b.method.as_str(), b.trials, b.errors));
        assert!((a.uplink_ser - b.uplink_ser).abs() <= 1e-12 * b.uplink_ser.max(1.0));
    }
    assert_eq!(loaded.meta.config_hash, cfg.hash());
}

#[test]
fn paired_orderings_hold_on_small_sweep() {
    let r = run_sweep_with_workers(&small_config(), 1).unwrap();
    for snr in [0.0, 4.0] {
        let ser = |m: &str| r.row(m, snr).unwrap().errors;
        assert!(ser("mrc_csir") <= ser("mrc_chest"), "perfect CSIR beats pilot CHEST at {snr} dB");
        assert!(ser("ml_jed") <= ser("mrc_chest"), "ML-JED beats pilot CHEST at {snr} dB");
    }
    let at = |m: &str, snr: f64| r.row(m, snr).unwrap().uplink_ser;
    for m in r.methods() {
        assert!(at(&m, 4.0) <= at(&m, -4.0), "{m} improves with SNR");
    }
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_prox-jed"))
}

#[test]
fn cli_sweep_writes_csv_sidecar_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("sweep.toml");
    let mut cfg = small_config();
    cfg.methods.truncate(3);
    std::fs::write(&cfg_path, cfg.to_toml_string().unwrap()).unwrap();
    let out = dir.path().join("res.csv");
    let status = cli()
        .args(["--workers", "2", "sweep", "--trials", "50", "--snr", "-2,6", "--plot", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let loaded = SweepResult::load(&out).unwrap();
    assert_eq!(loaded.meta.config.trials, 50);
    assert_eq!(loaded.meta.config.snr_db, vec![-2.0, 6.0]);
    assert_eq!(loaded.rows.len(), 3 * 2);
    for name in ["res_uplink.svg", "res_downlink.svg"] {
        let svg = std::fs::read_to_string(dir.path().join(name)).unwrap();
        assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
    }
}

#[test]
fn cli_rejects_bad_config_with_error_exit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("bad.toml");
    std::fs::write(&cfg_path, "antennas = 4\nbogus = 1\n").unwrap();
    let out = cli().args(["sweep", "--config"]).arg(&cfg_path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn cli_timing_and_trace() {
    let out = cli().args(["timing", "--k", "8", "--t-max", "3", "--f-clk-mhz", "341"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().any(|l| l.starts_with("8,3,341000000,2,12,36,151.5")), "{text}");

    let out = cli().args(["trace", "--data-slots", "3", "--t-max", "2"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("cycle,pe,action,re_operands,im_operands,acc"));
    // 4 PEs over 2 iterations of K + 4 = 7 cycles
    assert_eq!(lines.count(), 4 * 14);
}

#[test]
fn cli_verify_passes_on_small_run() {
    let out = cli().args(["verify", "--instances", "8", "--seed", "3"]).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn shipped_configs_parse() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = SweepConfig::from_file(&path).unwrap();
            cfg.validate().unwrap();
            n += 1;
        }
    }
    assert!(n >= 3);
}

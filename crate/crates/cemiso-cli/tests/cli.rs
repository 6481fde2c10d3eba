//! Command-line behavior: exit codes, help coverage, config precedence,
//! and seed determinism.

use std::io::Write;
use std::process::{Command, Output};

fn cemiso(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cemiso"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_channel(path: &std::path::Path, rows: &[(f64, f64)]) {
    let mut f = std::fs::File::create(path).unwrap();
    for (re, im) in rows {
        writeln!(f, "{re},{im}").unwrap();
    }
}

#[test]
fn precode_two_antennas() {
    let dir = std::env::temp_dir().join("cemiso-cli-precode");
    std::fs::create_dir_all(&dir).unwrap();
    let ch = dir.join("ch.csv");
    write_channel(&ch, &[(1.0, 0.0), (0.0, 1.0)]);
    let out = cemiso(&["precode", "--h", ch.to_str().unwrap(), "--u", "1.0,0.0"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let data_rows: Vec<&str> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("antenna"))
        .collect();
    assert_eq!(data_rows.len(), 2, "expected two phase rows:\n{text}");
    for row in data_rows {
        let theta: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
        assert!((-std::f64::consts::PI..std::f64::consts::PI).contains(&theta));
    }
    assert!(text.lines().next().unwrap().contains("residual="));
}

#[test]
fn precode_outside_target_exits_2() {
    let dir = std::env::temp_dir().join("cemiso-cli-precode2");
    std::fs::create_dir_all(&dir).unwrap();
    let ch = dir.join("ch.csv");
    write_channel(&ch, &[(3.0, 0.0), (1.0, 0.0)]);
    // Inside the hole of the annulus.
    let out = cemiso(&["precode", "--h", ch.to_str().unwrap(), "--u", "0.1,0.0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn malformed_flag_exits_2() {
    let out = cemiso(&["bounds", "--n", "4", "--snr-db", "0", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    let out = cemiso(&["bounds", "--n", "not-a-number"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unsorted_grid_exits_2() {
    let out = cemiso(&[
        "bounds", "--n", "4", "--snr-db", "5,0", "--trials", "10",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unreachable_target_exits_3() {
    let out = cemiso(&[
        "min-snr", "--rate", "40", "--n", "2", "--scheme", "mrt", "--trials", "50",
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn help_lists_flags_for_every_subcommand() {
    for sub in [
        "precode", "mh-ratio", "bounds", "dauip-opt", "rate-curve", "min-snr", "apg", "outage",
        "mh-tail",
    ] {
        let out = cemiso(&[sub, "--help"]);
        assert!(out.status.success(), "{sub} --help failed");
        let text = String::from_utf8(out.stdout).unwrap();
        assert!(text.contains("--seed"), "{sub} help misses --seed");
        assert!(text.contains("--config"), "{sub} help misses --config");
    }
}

#[test]
fn seed_determines_output() {
    let a = cemiso(&["mh-ratio", "--n-grid", "2,4", "--trials", "100", "--seed", "9"]);
    let b = cemiso(&["mh-ratio", "--n-grid", "2,4", "--trials", "100", "--seed", "9"]);
    let c = cemiso(&["mh-ratio", "--n-grid", "2,4", "--trials", "100", "--seed", "10"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn config_file_backs_flags_and_flags_win() {
    let dir = std::env::temp_dir().join("cemiso-cli-config");
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("run.json");
    std::fs::write(
        &cfg,
        r#"{"seed": 9, "trials": 100, "n-grid": [2, 4]}"#,
    )
    .unwrap();
    let via_cfg = cemiso(&["mh-ratio", "--config", cfg.to_str().unwrap()]);
    let via_flags = cemiso(&["mh-ratio", "--n-grid", "2,4", "--trials", "100", "--seed", "9"]);
    assert!(via_cfg.status.success());
    assert_eq!(via_cfg.stdout, via_flags.stdout);
    // An explicit flag overrides the config entry.
    let overridden = cemiso(&[
        "mh-ratio", "--config", cfg.to_str().unwrap(), "--seed", "10",
    ]);
    assert_ne!(overridden.stdout, via_cfg.stdout);
}

#[test]
fn every_experiment_subcommand_emits_a_table() {
    let runs: Vec<Vec<&str>> = vec![
        vec!["rate-curve", "--n-grid", "2", "--snr-db", "0,6", "--metrics", "atpc,papc,epi,i2", "--trials", "60"],
        vec!["dauip-opt", "--n", "2", "--snr-db", "3", "--lmax", "2", "--alpha-grid", "4", "--trials", "60"],
        vec!["apg", "--rate", "1.5", "--n-grid", "2,4", "--schemes", "mrt", "--trials", "200"],
        vec!["outage", "--rate", "2", "--n-grid", "2", "--snr-db", "8,12", "--trials", "400"],
        vec!["bounds", "--n", "3", "--snr-db", "0,5", "--trials", "100"],
        vec!["mh-tail", "--c", "1.0", "--n-grid", "4,8", "--trials", "80"],
    ];
    for args in runs {
        let mut full = args.clone();
        full.extend_from_slice(&["--seed", "3"]);
        let out = cemiso(&full);
        assert!(
            out.status.success(),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        let text = String::from_utf8(out.stdout).unwrap();
        assert!(text.starts_with("# experiment="), "{args:?} missing provenance");
        // Header plus at least one data row after the two comment lines.
        assert!(text.lines().count() >= 4, "{args:?} produced no rows:\n{text}");
    }
}

#[test]
fn rate_curve_mi_metrics_order_correctly() {
    // One cheap MI point: uniform input is sandwiched between the bound
    // metrics on the same ensemble.
    let out = cemiso(&[
        "rate-curve", "--n-grid", "4", "--snr-db", "6", "--metrics", "epi,mi-uniform,i2,atpc",
        "--trials", "300", "--seed", "11",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut vals = std::collections::HashMap::new();
    for line in text.lines().filter(|l| !l.starts_with('#') && !l.starts_with("n,")) {
        let cols: Vec<&str> = line.split(',').collect();
        vals.insert(cols[2].to_string(), cols[3].parse::<f64>().unwrap());
    }
    let epi = vals["epi"];
    let mi = vals["mi-uniform"];
    let i2 = vals["i2"];
    let atpc = vals["atpc"];
    assert!(epi <= mi + 1e-2 && mi <= i2 + 1e-2 && i2 <= atpc + 1e-9, "{vals:?}");
}

#[test]
fn out_flag_writes_file() {
    let dir = std::env::temp_dir().join("cemiso-cli-out");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("table.csv");
    let out = cemiso(&[
        "mh-ratio", "--n-grid", "2", "--trials", "50", "--seed", "4", "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("# experiment=mh-ratio"));
}

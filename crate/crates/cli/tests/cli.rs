mod common;

use common::*;
use tempfile::tempdir;

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
    assert_eq!(run(&["margin-lower", "--help"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["bogus"]).status.code(), Some(1));
    let dir = tempdir().unwrap();
    let p = stage(dir.path(), "trivial.toml");
    let p = p.to_str().unwrap();
    assert_eq!(run(&["margin-lower", p, "--order", "3"]).status.code(), Some(1));
    assert_eq!(run(&["margin-lower", p, "--order", "4", "--i-max", "2"]).status.code(), Some(1));
    assert_eq!(run(&["margin-lower", "/nonexistent/x.toml"]).status.code(), Some(1));
}

#[test]
fn parse_errors_name_the_field() {
    let dir = tempdir().unwrap();
    let p = dir.path().join("bad.toml");
    std::fs::write(&p, "n = 2\na = [[0.0, 1.0], [-1.0]]\na0 = [[0.0, 0.0], [0.0, 0.0]]\n").unwrap();
    let out = run(&["margin-lower", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("`a`") && err.contains("row 2"), "{err}");
}

#[test]
fn not_hurwitz_exits_two() {
    let dir = tempdir().unwrap();
    let p = stage(dir.path(), "not_hurwitz.toml");
    let out = run(&["margin-lower", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not Hurwitz"));
}

#[test]
fn missing_certificate_names_margin_lower() {
    let dir = tempdir().unwrap();
    let p = stage(dir.path(), "example1.toml");
    let p = p.to_str().unwrap();
    for cmd in [
        vec!["worst-switch", p, "--delta", "1"],
        vec!["margin-upper", p],
    ] {
        let out = run(&cmd);
        assert_eq!(out.status.code(), Some(1), "{cmd:?}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("margin-lower"), "{cmd:?}");
    }
    let p3 = stage(dir.path(), "example3.toml");
    let out = run(&["impulse", p3.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("margin-lower"));
}

#[test]
fn impulse_requires_b_and_c() {
    let dir = tempdir().unwrap();
    let p = stage(dir.path(), "example1.toml");
    let p = p.to_str().unwrap();
    run_ok(&["margin-lower", p]);
    let out = run(&["impulse", p, "--delta", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`b`"));
}

#[test]
fn sweep_cap_exits_four_with_last_delta() {
    let dir = tempdir().unwrap();
    let p = stage(dir.path(), "example1.toml");
    let p = p.to_str().unwrap();
    run_ok(&["margin-lower", p]);
    let out = run(&["margin-upper", p, "--max-steps", "2", "--increment", "0.001"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("2.109"));
}

#[test]
fn margin_lower_prints_bound_and_level_and_caches() {
    let dir = tempdir().unwrap();
    let p = stage(dir.path(), "example1.toml");
    let out_json = dir.path().join("l.json");
    let out = run_ok(&["margin-lower", p.to_str().unwrap(), "--order", "4", "--out", out_json.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("delta_lower") && stdout.contains("level = "), "{stdout}");
    let report = read_json(&out_json);
    assert_eq!(report["result"]["command"], "margin-lower");
    assert_eq!(report["result"]["settings"]["i_max"], 2);
    let cache = read_json(&dir.path().join("example1.certs.json"));
    let entries = cache["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 1);
    assert_eq!(entries[0]["delta"], report["result"]["report"]["delta_lower"]);
}

#[test]
fn explicit_cache_path_is_used() {
    let dir = tempdir().unwrap();
    let p = stage(dir.path(), "trivial.toml");
    let cache = dir.path().join("elsewhere.json");
    let p = p.to_str().unwrap();
    run_ok(&["margin-lower", p, "--cache", cache.to_str().unwrap()]);
    assert!(cache.exists());
    assert!(!dir.path().join("trivial.certs.json").exists());
    run_ok(&["worst-switch", p, "--delta", "0.5", "--cache", cache.to_str().unwrap()]);
    assert_eq!(run(&["worst-switch", p, "--delta", "0.5"]).status.code(), Some(1));
}

#[test]
fn level_selection_picks_matching_certificate() {
    let dir = tempdir().unwrap();
    let p = stage(dir.path(), "example1.toml");
    let p = p.to_str().unwrap();
    run_ok(&["margin-lower", p, "--order", "2"]);
    run_ok(&["margin-lower", p, "--order", "6"]);
    let w = dir.path().join("w.json");
    run_ok(&["worst-switch", p, "--delta", "1", "--order", "2", "--out", w.to_str().unwrap()]);
    assert_eq!(read_json(&w)["result"]["level"], 1);
    run_ok(&["worst-switch", p, "--delta", "1", "--out", w.to_str().unwrap()]);
    assert!(read_json(&w)["result"]["level"].as_u64().unwrap() >= 2);
    let out = run(&["worst-switch", p, "--delta", "1", "--level", "5"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("level 5"));
}

#[test]
fn reports_are_deterministic_apart_from_timestamp() {
    let dir = tempdir().unwrap();
    let p = stage(dir.path(), "example1.toml");
    let p = p.to_str().unwrap();
    let mut texts = Vec::new();
    for name in ["a.json", "b.json"] {
        let path = dir.path().join(name);
        run_ok(&["margin-lower", p, "--order", "4", "--out", path.to_str().unwrap()]);
        let mut v = read_json(&path);
        v["meta"]["timestamp"] = serde_json::Value::Null;
        texts.push(serde_json::to_string(&v).unwrap());
    }
    assert_eq!(texts[0], texts[1]);
    let mut texts = Vec::new();
    for name in ["c.json", "d.json"] {
        let path = dir.path().join(name);
        run_ok(&["margin-upper", p, "--out", path.to_str().unwrap()]);
        let mut v = read_json(&path);
        v["meta"]["timestamp"] = serde_json::Value::Null;
        texts.push(serde_json::to_string(&v).unwrap());
    }
    assert_eq!(texts[0], texts[1]);
}

#[test]
fn report_round_trips_through_json() {
    let dir = tempdir().unwrap();
    let p = stage(dir.path(), "example1.toml");
    let p = p.to_str().unwrap();
    run_ok(&["margin-lower", p, "--order", "4"]);
    let path = dir.path().join("u.json");
    run_ok(&["margin-upper", p, "--out", path.to_str().unwrap()]);
    let v = read_json(&path);
    let text = serde_json::to_string(&v).unwrap();
    let again: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v, again);
    assert!(v["result"]["report"]["witness"]["a_d"].is_array());
    assert!(v["result"]["report"]["witness"]["spectrum"]["eigenvalues"].is_array());
}

#[test]
fn csv_header_is_exact() {
    let dir = tempdir().unwrap();
    let p = stage(dir.path(), "example2.toml");
    let p = p.to_str().unwrap();
    let sig = dir.path().join("s.json");
    std::fs::write(&sig, r#"{"times":[0,0.1,0.2],"values":[0.1,0]}"#).unwrap();
    let csv_path = dir.path().join("s.csv");
    run_ok(&["simulate", p, "--signal", sig.to_str().unwrap(), "--out-csv", csv_path.to_str().unwrap()]);
    let text = std::fs::read_to_string(&csv_path).unwrap();
    assert_eq!(text.lines().next().unwrap(), "t,x1,x2,x3,x4,delta,indicator");
    // no certificate: indicator is NaN
    assert!(Csv::read(&csv_path).col("indicator").iter().all(|v| v.is_nan()));
}

#[test]
fn zero_delta_gives_single_segment_and_monotone_decay() {
    let dir = tempdir().unwrap();
    let p = stage(dir.path(), "example1.toml");
    let p = p.to_str().unwrap();
    run_ok(&["margin-lower", p, "--order", "4"]);
    let w = dir.path().join("w.json");
    let c = dir.path().join("w.csv");
    run_ok(&["worst-switch", p, "--delta", "0", "--x0", "1,1", "--tf", "40", "--out", w.to_str().unwrap(), "--out-csv", c.to_str().unwrap()]);
    assert_eq!(floats(&read_json(&w)["result"]["signal"]["values"]), vec![0.0]);
    let csv = Csv::read(&c);
    // d‖x‖²/dt = 2xᵀAx = -x₂² for this A
    let norms: Vec<f64> = (0..csv.rows.len()).map(|k| norm(&csv.state(k, 2))).collect();
    assert!(norms.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    assert!(norms.last().unwrap() < &1e-3);
    assert!(csv.col("delta").iter().all(|&d| d == 0.0));
}

#[test]
fn worst_switch_signal_replays_within_tolerance() {
    let dir = tempdir().unwrap();
    let p = stage(dir.path(), "example1.toml");
    let p = p.to_str().unwrap();
    run_ok(&["margin-lower", p]);
    let w = dir.path().join("w.json");
    let wc = dir.path().join("w.csv");
    run_ok(&["worst-switch", p, "--delta", "2.0", "--x0", "1,1", "--out", w.to_str().unwrap(), "--out-csv", wc.to_str().unwrap()]);
    let sc = dir.path().join("s.csv");
    run_ok(&["simulate", p, "--signal", w.to_str().unwrap(), "--x0", "1,1", "--mode", "exact", "--out-csv", sc.to_str().unwrap()]);
    let a = Csv::read(&wc);
    let b = Csv::read(&sc);
    let tb = b.col("t");
    let mut worst: f64 = 0.0;
    let mut matched = 0;
    for (k, &t) in a.col("t").iter().enumerate() {
        if let Some(j) = tb.iter().position(|&s| s == t) {
            let d: Vec<f64> = a.state(k, 2).iter().zip(b.state(j, 2)).map(|(x, y)| x - y).collect();
            worst = worst.max(d.iter().fold(0.0, |m, v| m.max(v.abs())));
            matched += 1;
        }
    }
    assert!(matched >= 10, "only {matched} common sample times");
    assert!(worst <= 1e-6, "sup-norm difference {worst}");
}

#[test]
fn zero_signal_replay_is_nominal_decay() {
    let dir = tempdir().unwrap();
    let p = stage(dir.path(), "example1.toml");
    let p = p.to_str().unwrap();
    let sig = dir.path().join("z.json");
    std::fs::write(&sig, r#"{"times":[0,4.0],"values":[0]}"#).unwrap();
    let c = dir.path().join("z.csv");
    run_ok(&["simulate", p, "--signal", sig.to_str().unwrap(), "--x0", "1,0", "--out-csv", c.to_str().unwrap()]);
    let csv = Csv::read(&c);
    // x₁ of ẍ + 0.5ẋ + x = 0 with x(0) = 1, ẋ(0) = 0
    let w = (1.0f64 - 0.0625).sqrt();
    for (k, &t) in csv.col("t").iter().enumerate() {
        let exact = (-0.25 * t).exp() * ((w * t).cos() + 0.25 / w * (w * t).sin());
        assert!((csv.rows[k][1] - exact).abs() < 1e-9, "t = {t}");
    }
}

#[test]
fn malformed_signal_file_is_a_parse_error() {
    let dir = tempdir().unwrap();
    let p = stage(dir.path(), "example1.toml");
    let sig = dir.path().join("bad.json");
    std::fs::write(&sig, r#"{"times":[0,1],"values":[1,2]}"#).unwrap();
    let out = run(&["simulate", p.to_str().unwrap(), "--signal", sig.to_str().unwrap(), "--x0", "1,1"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn impulse_series_coincide_at_zero_delta() {
    let dir = tempdir().unwrap();
    let p = stage(dir.path(), "example3.toml");
    let p = p.to_str().unwrap();
    run_ok(&["margin-lower", p, "--order", "4"]);
    let c = dir.path().join("i.csv");
    run_ok(&["impulse", p, "--delta", "0", "--out-csv", c.to_str().unwrap()]);
    let csv = Csv::read(&c);
    assert_eq!(csv.header.join(","), "t,x1,x2,delta,indicator,h_worst,h_nominal");
    let hw = csv.col("h_worst");
    let hn = csv.col("h_nominal");
    let worst = hw.iter().zip(&hn).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(worst <= 1e-8, "max |h_worst - h_nominal| = {worst}");
}

#[test]
fn impulse_with_zero_output_is_zero() {
    let dir = tempdir().unwrap();
    let text = std::fs::read_to_string(fixtures().join("example3.toml"))
        .unwrap()
        .replace("c = [1.0, 0.0]", "c = [0.0, 0.0]");
    let p = dir.path().join("c0.toml");
    std::fs::write(&p, text).unwrap();
    let p = p.to_str().unwrap();
    run_ok(&["margin-lower", p, "--order", "4"]);
    let c = dir.path().join("i.csv");
    run_ok(&["impulse", p, "--delta", "1", "--out-csv", c.to_str().unwrap()]);
    let csv = Csv::read(&c);
    assert!(csv.col("h_worst").iter().chain(csv.col("h_nominal").iter()).all(|&h| h == 0.0));
}

#[test]
fn trivial_problem_upper_bound_is_hurwitz_loss() {
    let dir = tempdir().unwrap();
    let p = stage(dir.path(), "trivial.toml");
    let p = p.to_str().unwrap();
    run_ok(&["margin-lower", p]);
    let u = dir.path().join("u.json");
    run_ok(&["margin-upper", p, "--out", u.to_str().unwrap()]);
    let r = read_json(&u);
    let rep = &r["result"]["report"];
    assert_eq!(rep["witness"]["kind"], "trivial_hurwitz_loss");
    let du = rep["delta_upper"].as_f64().unwrap();
    assert!((du - 1.0).abs() <= 0.01, "delta_upper = {du}");
    assert!(rep["delta_lower"].as_f64().unwrap() < 1.0);
}

#[test]
fn periodic_window_replays_as_closed_orbit() {
    let dir = tempdir().unwrap();
    let p = stage(dir.path(), "example1.toml");
    let p = p.to_str().unwrap();
    run_ok(&["margin-lower", p]);
    let u = dir.path().join("u.json");
    run_ok(&["margin-upper", p, "--out", u.to_str().unwrap()]);
    let c = dir.path().join("orbit.csv");
    run_ok(&["simulate", p, "--signal", u.to_str().unwrap(), "--x0", "cycle", "--cycles", "3", "--out-csv", c.to_str().unwrap()]);
    let period = floats(&read_json(&u)["result"]["report"]["periodic_signal"]["times"]).last().copied().unwrap();
    let csv = Csv::read(&c);
    let t = csv.col("t");
    let x0 = csv.state(0, 2);
    for k in 1..=3 {
        let row = t.iter().rposition(|&s| (s - k as f64 * period).abs() < 1e-9).unwrap();
        let x = csv.state(row, 2);
        let drift = (norm(&x) - norm(&x0)).abs() / norm(&x0);
        // the window may be a half period (eigenvalue -1): x(τ) = -x(0)
        let gap = norm(&[x[0] - x0[0], x[1] - x0[1]]).min(norm(&[x[0] + x0[0], x[1] + x0[1]])) / norm(&x0);
        assert!(drift <= 0.1 && gap <= 0.1, "cycle {k}: radial drift {drift}, closure gap {gap}");
    }
}

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn gns(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gns")).args(args).output().expect("run gns")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let idx = lines.next().unwrap().split(',').position(|h| h == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().parse().unwrap()).collect()
}

fn out_path(dir: &tempfile::TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

#[test]
fn constants_json() {
    let out = gns(&["constants", "--d", "2", "--p", "2"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!((v["k_pd"].as_f64().unwrap() - 3.16849).abs() < 1e-4);
    assert!((v["c_gn"].as_f64().unwrap() - 0.823842).abs() < 1e-5);
    assert!(v["consistency"]["residual_a"].as_f64().unwrap() < 1e-10);
}

#[test]
fn constants_csv_header() {
    let out = gns(&["constants", "--m", "0.75", "--format", "csv"]);
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "d,p,m,mass,m_star,c_m,k_m,sigma_star,c_gn,k_pd,c_pd,c_ck,frak_c,c_md,kappa_1,kappa_2,normalization_rhs"
    );
    assert_eq!(lines.count(), 1);
}

#[test]
fn quadrature_tolerance_from_environment() {
    let out = Command::new(env!("CARGO_BIN_EXE_gns"))
        .args(["constants", "--cells", "200"])
        .env("GNS_QUAD_TOL", "1e-15")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cross-check"));
}

#[test]
fn conflicting_exponents_are_a_usage_error() {
    let out = gns(&["constants", "--p", "2", "--m", "0.75"]);
    assert_eq!(out.status.code(), Some(2));
    let out = gns(&["deficit", "--family", "gaussian", "--trials", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn deficit_sweep_is_deterministic_and_bounded() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (out_path(&dir, "a.csv"), out_path(&dir, "b.csv"));
    for p in [&a, &b] {
        let args = ["deficit", "--d", "2", "--p", "2", "--family", "two-scale-mix", "--trials", "200", "--seed", "42"];
        let out = gns(&[&args[..], &["--out", p.to_str().unwrap()]].concat());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let text = read(&a);
    assert_eq!(text, read(&b));
    assert!(text.starts_with(
        "index,family,grad_term,lp1_term,l2p_norm_pow,gn_deficit,improvement_bound,manifold_distance,sigma,mass,normalized\n"
    ));
    let deficit = column(&text, "gn_deficit");
    let bound = column(&text, "improvement_bound");
    assert_eq!(deficit.len(), 200);
    let worst = deficit.iter().zip(&bound).map(|(d, b)| d - b).fold(f64::INFINITY, f64::min);
    assert!(worst >= -1e-8, "{worst}");
}

#[test]
fn ck_rows_satisfy_bounds() {
    let out = gns(&["ck", "--trials", "6", "--seed", "3"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let (lhs, rhs) = (column(&text, "lhs"), column(&text, "rhs"));
    let (vl, vr) = (column(&text, "variant_lhs"), column(&text, "variant_rhs"));
    assert_eq!(lhs.len(), 6);
    for i in 0..6 {
        assert!(lhs[i] >= rhs[i] - 1e-9 && vl[i] >= vr[i] - 1e-9);
    }
}

#[test]
fn flow_trace() {
    let dir = tempfile::tempdir().unwrap();
    let path = out_path(&dir, "flow.csv");
    let args = ["flow", "--d", "2", "--m", "0.75", "--cells", "2000", "--t-max", "2", "--save-dt", "0.01"];
    let out = gns(&[&args[..], &["--out", path.to_str().unwrap()]].concat());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = read(&path);
    assert_eq!(text.lines().next().unwrap(), "t,sigma,mass,second_moment,entropy,fisher,remainder");
    let sigma = column(&text, "sigma");
    assert_eq!(sigma.len(), 201);
    assert!(sigma.windows(2).all(|w| w[1] <= w[0] + 1e-10));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn flow_from_input_profile() {
    let dir = tempfile::tempdir().unwrap();
    let input = out_path(&dir, "u0.csv");
    let mut rows = String::from("r,u\n");
    for i in 0..400 {
        let r = 0.1 * i as f64;
        rows.push_str(&format!("{r},{}\n", (1.0 + r * r).powi(-4)));
    }
    std::fs::write(&input, rows).unwrap();
    let out = gns(&[
        "flow",
        "--m",
        "0.75",
        "--cells",
        "400",
        "--t-max",
        "0.1",
        "--save-dt",
        "0.05",
        "--input",
        input.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout(&out).lines().count(), 4);
}

#[test]
fn malformed_input_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let input = out_path(&dir, "bad.csv");
    std::fs::write(&input, "r,u\n0,1\n0.5,oops\n").unwrap();
    let out = gns(&["deficit", "--input", input.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn ode_trace_and_report() {
    let out = gns(&["ode", "--m", "0.75", "--j0", "4.2", "--save-dt", "0.5", "--format", "json"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(v["min_cone_gap"].as_f64().unwrap() >= 0.0);
    let rep = &v["gronwall"];
    assert!(rep["threshold_j0"].as_f64().unwrap() >= rep["improved_bound"].as_f64().unwrap());
}

#[test]
fn sweep_flags_endpoints() {
    let out = gns(&["sweep", "--d", "4", "--points", "3"]);
    let text = stdout(&out);
    assert_eq!(text.lines().next().unwrap(), "p,c_pd,c_ck,k_pd,status");
    assert_eq!(text.lines().count(), 6);
    assert!(text.lines().last().unwrap().ends_with("\"critical, skipped\""));
}

#[test]
fn verify_names_failing_criteria() {
    let out = gns(&["verify", "--quick"]);
    assert_eq!(out.status.code(), Some(1));
    let text = stdout(&out);
    let last = text.lines().last().unwrap();
    assert!(last.starts_with("failing criteria: 9 "), "{last}");
    assert!(last.contains(", 10 "), "{last}");
    for id in 1..=8 {
        let row = text.lines().find(|l| l.trim_start().starts_with(&format!("{id} "))).unwrap();
        assert!(row.contains("PASS"), "{row}");
    }
}

#[test]
fn corrupted_sigma_star_breaks_equality_case() {
    let out = gns(&["verify", "--quick", "--corrupt-sigma-star"]);
    assert_eq!(out.status.code(), Some(1));
    let text = stdout(&out);
    let row = text.lines().find(|l| l.trim_start().starts_with("4 ")).unwrap();
    assert!(row.contains("FAIL"), "{row}");
}

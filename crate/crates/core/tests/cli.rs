use std::path::PathBuf;

use mapruin::cli;

fn models() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("models")
}

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("mapruin").chain(args.iter().copied());
    let code = cli::run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn record(text: &str) -> serde_json::Value {
    serde_json::from_str(text).unwrap()
}

#[test]
fn decay_of_classical_model() {
    let (code, out, _) = run(&["decay", "--model", "cl"]);
    assert_eq!(code, 0);
    let r = record(&out);
    assert!((r["alpha"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert!((r["prefactor_total"][0].as_f64().unwrap() - 0.5).abs() < 1e-10);
}

#[test]
fn hitting_csv_spot_value_and_round_trip() {
    let (code, out, _) = run(&["hitting", "--model", "cl", "--xmax", "10", "--h", "0.01"]);
    assert_eq!(code, 0);
    let mut lines = out.lines();
    assert_eq!(lines.next().unwrap(), "x,psi_0_0,rowsum_0");
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 1001);
    assert!((rows[200][1] - 0.5 * (-1.0f64).exp()).abs() < 1e-3);

    // re-parsing reproduces the in-memory table exactly
    let m = mapruin::fixtures::classical();
    let ctx = mapruin::kernel::KernelContext::new(&m).unwrap();
    let t = mapruin::renewal::solve_hitting(&ctx, 10.0, 0.01).unwrap();
    for (k, row) in rows.iter().enumerate() {
        assert_eq!(row[0], t.grid[k]);
        assert_eq!(row[1], t.psi[k][(0, 0)]);
    }
}

#[test]
fn validate_broken_row_is_input_error() {
    let path = models().join("broken-row.toml");
    let (code, _, err) = run(&["validate", "--model", path.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.starts_with("ERROR:NonConservativeRows:") && err.contains("row 1"), "{err}");
    assert_eq!(err.lines().count(), 1);
}

#[test]
fn computation_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("up.toml");
    std::fs::write(&path, "states = 2\nv = [-1.0, 2.0]\nC = [[-1.0, 1.0], [1.0, -1.0]]\nD = [[0.0, 0.0], [0.0, 0.0]]\n")
        .unwrap();
    let (code, _, err) = run(&["decay", "--model", path.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(err.starts_with("ERROR:DriftNonNegative:"), "{err}");
}

#[test]
fn usage_and_grid_errors_exit_two() {
    assert_eq!(run(&["hitting", "--h", "0.03", "--xmax", "1"]).0, 2);
    assert_eq!(run(&["nonsense"]).0, 2);
    let (code, _, err) = run(&["decay", "--model", "/no/such/file.toml"]);
    assert_eq!(code, 2);
    assert!(err.starts_with("ERROR:Io:"));
}

#[test]
fn model_files_match_builtins() {
    for name in ["cl", "onoff", "mixed"] {
        let path = models().join(format!("{name}.toml"));
        let a = run(&["asymptotics", "--model", path.to_str().unwrap()]);
        let b = run(&["asymptotics", "--model", name]);
        assert_eq!(a.0, 0);
        assert_eq!(a.1, b.1, "{name}");
    }
}

#[test]
fn report_and_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let (code, stdout, _) = run(&["fluid", "--model", "mixed", "--report", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(stdout.is_empty());
    let r = record(&std::fs::read_to_string(&out).unwrap());
    assert_eq!(r["pass"], serde_json::Value::Bool(true));
    assert!(r["ladder_residual"].as_f64().unwrap() < 1e-11);
}

#[test]
fn simulate_is_reproducible() {
    let args = ["simulate", "--model", "cl", "--reps", "2000", "--seed", "4", "--levels", "0,2"];
    let (code, a, _) = run(&args);
    assert_eq!(code, 0);
    assert_eq!(a, run(&args).1);
    assert!(a.starts_with("start,level,state,estimate"));
}

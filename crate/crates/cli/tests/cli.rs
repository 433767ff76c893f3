use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use qnewton_cli::{cmd_bench, cmd_rate, cmd_run, cmd_solve_poly, SolvePolyArgs, Trace};
use tempfile::TempDir;

struct Output {
    code: i32,
    out: String,
    err: String,
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

fn capture(f: impl FnOnce(&mut Vec<u8>, &mut Vec<u8>) -> i32) -> Output {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = f(&mut out, &mut err);
    Output {
        code,
        out: String::from_utf8(out).unwrap(),
        err: String::from_utf8(err).unwrap(),
    }
}

fn run(config: &Path) -> Output {
    capture(|o, e| cmd_run(config, o, e))
}

fn read_trace(p: &Path) -> Trace {
    Trace::read(fs::File::open(p).unwrap()).unwrap()
}

#[test]
fn run_rosenbrock_converges() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "rb.json",
        r#"{"objective": "rosenbrock", "variant": "G", "tau": 0.9, "x0": [-1.2, 1.0],
            "delta_seed": 0, "output": "rb.csv"}"#,
    );
    let o = run(&cfg);
    assert_eq!(o.code, 0, "{}{}", o.out, o.err);
    assert!(o.out.contains("termination: grad_tolerance_met"));
    assert!(o.out.contains("classification: local-min"));
    let trace = read_trace(&dir.path().join("rb.csv"));
    let last = trace.rows.last().unwrap();
    assert!(last.step.is_none());
    assert!(((last.x[0] - 1.0).powi(2) + (last.x[1] - 1.0).powi(2)).sqrt() < 1e-6);
    assert_eq!(trace.comment("delta_seed"), Some("0"));
    assert_eq!(trace.comment("variant"), Some("G"));
    assert!(trace.rows.windows(2).all(|w| w[1].f <= w[0].f));
}

#[test]
fn trace_header_is_exact() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "q.json",
        r#"{"objective": "quadratic", "x0": [1, 2, 3], "output": "q.csv"}"#,
    );
    assert_eq!(run(&cfg).code, 0);
    let text = fs::read_to_string(dir.path().join("q.csv")).unwrap();
    let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(
        header,
        "iter,f,grad_norm,delta_index,gamma,armijo_trials,w_norm,dirderiv,cond_ratio,x_0,x_1,x_2"
    );
    assert!(text.lines().any(|l| l == "# delta_seed=0"));
}

#[test]
fn trace_goes_to_stdout_without_output_key() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "q.json",
        r#"{"objective": "quadratic", "x0": [1, 2]}"#,
    );
    let o = run(&cfg);
    assert_eq!(o.code, 0);
    let trace = Trace::read(o.out.as_bytes()).unwrap();
    assert!(trace.steps() > 0);
    assert!(o.err.contains("termination: grad_tolerance_met"));
}

#[test]
fn run_at_minimum_has_empty_trace() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "q.json",
        r#"{"objective": "quadratic", "x0": [0, 0], "output": "q.csv"}"#,
    );
    let o = run(&cfg);
    assert_eq!(o.code, 0);
    let trace = read_trace(&dir.path().join("q.csv"));
    assert_eq!(trace.steps(), 0);
    assert_eq!(trace.rows.len(), 1);
}

#[test]
fn config_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    let cases = [
        (
            r#"{"objective": "rosenbrock", "x0": [0, 0], "deltas": [0, 1, 1]}"#,
            "pairwise distinct",
        ),
        (
            r#"{"objective": "rosenbrock", "x0": [0, 0], "stepsize": 1}"#,
            "unknown field",
        ),
        (r#"{"objective": "rosenbrock"}"#, "x0 or start_box"),
        (
            r#"{"objective": "no_such_thing", "x0": [0]}"#,
            "neither a corpus function",
        ),
        (
            r#"{"objective": "rosenbrock", "x0": [0, 0], "variant": "NQNB", "tau": 0.5}"#,
            "tau > 1",
        ),
        (
            r#"{"objective": "rosenbrock", "x0": [0, 0], "basis_strategy": "diagonal"}"#,
            "diagonal",
        ),
        (
            r#"{"objective": "rosenbrock", "x0": [0, 0], "gamma0": 2}"#,
            "gamma0",
        ),
        ("not json", "config"),
    ];
    for (i, (json, needle)) in cases.iter().enumerate() {
        let cfg = write(&dir, &format!("c{i}.json"), json);
        let o = run(&cfg);
        assert_eq!(o.code, 1, "{json}");
        assert!(o.err.contains(needle), "{json}: {}", o.err);
    }
    let o = run(&dir.path().join("missing.json"));
    assert_eq!(o.code, 1);
}

#[test]
fn iteration_cap_exits_two() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "rb.json",
        r#"{"objective": "rosenbrock", "x0": [-1.2, 1], "max_iterations": 3, "output": "t.csv"}"#,
    );
    let o = run(&cfg);
    assert_eq!(o.code, 2);
    assert_eq!(read_trace(&dir.path().join("t.csv")).steps(), 3);
}

#[test]
fn polynomial_objective_from_file() {
    let dir = TempDir::new().unwrap();
    write(&dir, "circle.txt", "x1^2 + x2^2 - 1\nx1 - x2\n");
    let cfg = write(
        &dir,
        "p.json",
        r#"{"objective": "circle.txt", "x0": [0.9, 0.4], "output": "p.csv"}"#,
    );
    let o = run(&cfg);
    assert_eq!(o.code, 0, "{}", o.err);
    let trace = read_trace(&dir.path().join("p.csv"));
    let tau: f64 = trace.comment("tau").unwrap().parse().unwrap();
    assert!((tau - 0.99 / 35.0).abs() < 1e-15);
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let x = &trace.rows.last().unwrap().x;
    assert!((x[0] - r).abs() < 1e-6 && (x[1] - r).abs() < 1e-6);
}

#[test]
fn random_delta_mode_leaves_index_empty() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "r.json",
        r#"{"objective": "double_well_saddle", "x0": [0.3, 0.2], "random_delta_mode": true,
            "delta_seed": 5, "output": "r.csv"}"#,
    );
    assert_eq!(run(&cfg).code, 0);
    let trace = read_trace(&dir.path().join("r.csv"));
    assert!(trace.steps() > 0);
    assert!(trace
        .rows
        .iter()
        .filter_map(|r| r.step.as_ref())
        .all(|s| s.delta_index.is_none()));
}

fn solve(dir: &TempDir, text: &str, args: SolvePolyArgs) -> Output {
    let p = write(dir, "sys.txt", text);
    capture(|o, e| cmd_solve_poly(&p, &args, o, e))
}

fn parse_roots(out: &str, kind: &str) -> Vec<(Vec<f64>, f64)> {
    out.lines()
        .filter(|l| l.starts_with(kind))
        .map(|l| {
            let inner = &l[l.find('(').unwrap() + 1..l.find(')').unwrap()];
            let x = inner.split(", ").map(|v| v.parse().unwrap()).collect();
            let after = &l[l.find(')').unwrap() + 1..];
            let val = after
                .split_whitespace()
                .next()
                .unwrap()
                .split('=')
                .nth(1)
                .unwrap()
                .parse()
                .unwrap();
            (x, val)
        })
        .collect()
}

#[test]
fn solve_poly_circle_and_line() {
    let dir = TempDir::new().unwrap();
    let o = solve(&dir, "x1^2 + x2^2 - 1\nx1 - x2\n", SolvePolyArgs::default());
    assert_eq!(o.code, 0, "{}", o.err);
    assert!(o.out.contains("R(m,d) = 3.6000000000000000e1"), "{}", o.out);
    let roots = parse_roots(&o.out, "root x=");
    assert_eq!(roots.len(), 2, "{}", o.out);
    let r = std::f64::consts::FRAC_1_SQRT_2;
    for ((x, residual), sign) in roots.iter().zip([-1.0, 1.0]) {
        assert!((x[0] - sign * r).abs() < 1e-6 && (x[1] - sign * r).abs() < 1e-6);
        assert!(*residual <= 1e-16);
    }
}

#[test]
fn solve_poly_without_real_roots() {
    let dir = TempDir::new().unwrap();
    let o = solve(&dir, "x1^2 + 1\n", SolvePolyArgs::default());
    assert_eq!(o.code, 0);
    assert!(o.out.contains("roots: 0"));
    let crit = parse_roots(&o.out, "critical x=");
    assert_eq!(crit.len(), 1, "{}", o.out);
    assert!(crit[0].0[0].abs() < 1e-6);
    assert!((crit[0].1 - 1.0).abs() < 1e-12);
}

#[test]
fn solve_poly_complex() {
    let dir = TempDir::new().unwrap();
    let args = SolvePolyArgs {
        complex: true,
        ..SolvePolyArgs::default()
    };
    let o = solve(&dir, "z1^2 - 1\n", args);
    assert_eq!(o.code, 0, "{}", o.err);
    let roots = parse_roots(&o.out, "root x=");
    assert_eq!(roots.len(), 2, "{}", o.out);
    assert!((roots[0].0[0] + 1.0).abs() < 1e-6 && roots[0].0[1].abs() < 1e-6);
    assert!((roots[1].0[0] - 1.0).abs() < 1e-6 && roots[1].0[1].abs() < 1e-6);
}

#[test]
fn solve_poly_parse_error_has_position() {
    let dir = TempDir::new().unwrap();
    let o = solve(&dir, "x1 + 1\nx1 ** 2\n", SolvePolyArgs::default());
    assert_eq!(o.code, 1);
    assert!(o.err.contains("line 2, column 5"), "{}", o.err);
    let o = solve(&dir, "5\n", SolvePolyArgs::default());
    assert_eq!(o.code, 1);
    assert!(o.err.contains("constant"), "{}", o.err);
}

fn bench(dir: &TempDir, json: &str, jobs: Option<usize>) -> (Output, String) {
    let cfg = write(dir, "b.json", json);
    let o = capture(|out, err| cmd_bench(&cfg, jobs, out, err));
    let csv = fs::read_to_string(dir.path().join("b.csv")).unwrap_or_default();
    (o, csv)
}

fn comment_value(csv: &str, key: &str) -> String {
    csv.lines()
        .find_map(|l| l.strip_prefix(&format!("# {key}=")))
        .unwrap_or_else(|| panic!("no {key} in\n{csv}"))
        .to_string()
}

#[test]
fn bench_double_well_avoids_saddle() {
    let dir = TempDir::new().unwrap();
    let (o, csv) = bench(
        &dir,
        r#"{"objective": "double_well_saddle", "start_box": [[-2, 2], [-2, 2]], "num_starts": 100,
            "start_seed": 1, "output": "b.csv"}"#,
        None,
    );
    assert_eq!(o.code, 0, "{}", o.err);
    assert_eq!(comment_value(&csv, "saddle_terminal"), "0");
    assert_eq!(comment_value(&csv, "num_starts"), "100");
    let rows: Vec<&str> = csv
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .collect();
    assert_eq!(rows.len(), 2, "{csv}");
    let counts: usize = rows
        .iter()
        .map(|r| r.split(',').nth(1).unwrap().parse::<usize>().unwrap())
        .sum();
    assert_eq!(counts, 100);
    assert!(rows.iter().all(|r| r.contains("local-min")));
}

#[test]
fn bench_quadratic_single_basin_and_empty() {
    let dir = TempDir::new().unwrap();
    let (o, csv) = bench(
        &dir,
        r#"{"objective": "quadratic", "start_box": [[-3, 3], [-3, 3], [-3, 3]], "num_starts": 25,
            "output": "b.csv"}"#,
        Some(2),
    );
    assert_eq!(o.code, 0);
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[1].starts_with("0,25,"));

    let (o, csv) = bench(
        &dir,
        r#"{"objective": "quadratic", "start_box": [[-3, 3]], "num_starts": 0, "output": "b.csv"}"#,
        None,
    );
    assert_eq!(o.code, 0);
    assert_eq!(comment_value(&csv, "num_starts"), "0");
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 1);

    let (o, _) = bench(&dir, r#"{"objective": "quadratic", "x0": [1]}"#, None);
    assert_eq!(o.code, 1);
}

#[test]
fn rate_on_rosenbrock_trace() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "rb.json",
        r#"{"objective": "rosenbrock", "tau": 0.9, "x0": [-1.2, 1.0], "output": "rb.csv"}"#,
    );
    assert_eq!(run(&cfg).code, 0);
    let trace = dir.path().join("rb.csv");
    let o = capture(|out, err| cmd_rate(&trace, Some(&[1.0, 1.0]), out, err));
    assert_eq!(o.code, 0, "{}", o.err);
    let order: f64 = o
        .out
        .lines()
        .next()
        .unwrap()
        .strip_prefix("order: ")
        .unwrap()
        .parse()
        .unwrap();
    assert!(order >= 1.8, "{}", o.out);
}

fn synthetic_trace(errors: &[f64]) -> String {
    let mut s = String::from("# delta_seed=0\niter,f,grad_norm,delta_index,gamma,armijo_trials,w_norm,dirderiv,cond_ratio,x_0\n");
    for (i, e) in errors.iter().enumerate() {
        s.push_str(&format!("{i},{e},{e},0,1,0,{e},{e},1,{e}\n"));
    }
    s
}

#[test]
fn rate_on_synthetic_traces() {
    let dir = TempDir::new().unwrap();
    let p = write(
        &dir,
        "sq.csv",
        &synthetic_trace(&[1e-1, 1e-2, 1e-4, 1e-8, 0.0]),
    );
    let o = capture(|out, err| cmd_rate(&p, Some(&[0.0]), out, err));
    assert_eq!(o.code, 0, "{}", o.err);
    assert_eq!(o.out.lines().next().unwrap(), "order: 2.000000");
    // without a target the final iterate is the limit
    let o = capture(|out, err| cmd_rate(&p, None, out, err));
    assert_eq!(o.code, 0);

    let p = write(&dir, "short.csv", &synthetic_trace(&[1e-1, 1e-2]));
    let o = capture(|out, err| cmd_rate(&p, Some(&[0.0]), out, err));
    assert_eq!(o.code, 2);
    assert!(o.err.contains("insufficient data"));

    let o = capture(|out, err| cmd_rate(&p, Some(&[0.0, 1.0]), out, err));
    assert_eq!(o.code, 1);
}

#[test]
fn runs_and_benches_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "d.json",
        r#"{"objective": "double_well_saddle", "x0": [0.7, -1.3], "random_delta_mode": true,
            "delta_seed": 9, "output": "d.csv"}"#,
    );
    assert_eq!(run(&cfg).code, 0);
    let first = fs::read(dir.path().join("d.csv")).unwrap();
    assert_eq!(run(&cfg).code, 0);
    assert_eq!(first, fs::read(dir.path().join("d.csv")).unwrap());

    let json = r#"{"objective": "rosenbrock", "start_box": [[-2, 2], [-1, 3]], "num_starts": 16,
                   "start_seed": 3, "output": "b.csv"}"#;
    let (_, a) = bench(&dir, json, Some(1));
    let (_, b) = bench(&dir, json, Some(4));
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn binary_reports_exit_codes() {
    let dir = TempDir::new().unwrap();
    let exe = env!("CARGO_BIN_EXE_qnewton");
    let cfg = write(
        &dir,
        "q.json",
        r#"{"objective": "quadratic", "x0": [1, 1], "output": "q.csv"}"#,
    );
    let status = Command::new(exe)
        .args(["run"])
        .arg(&cfg)
        .env("QNEWTON_LOG", "debug")
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&status.stderr).contains("iter 0"));

    let cfg = write(&dir, "bad.json", r#"{"objective": "quadratic"}"#);
    let status = Command::new(exe).arg("run").arg(&cfg).output().unwrap();
    assert_eq!(status.status.code(), Some(1));

    let sys = write(&dir, "s.txt", "x1 - 0.5\n");
    let status = Command::new(exe)
        .args(["solve-poly"])
        .arg(&sys)
        .args(["--starts", "3", "--box", "-1", "1", "--seed", "2"])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&status.stdout).contains("roots: 1"));

    let status = Command::new(exe)
        .args(["rate"])
        .arg(dir.path().join("q.csv"))
        .args(["--target", "0,0"])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(2));
}

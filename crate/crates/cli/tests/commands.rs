use std::path::{Path, PathBuf};

use lbfl_cli::{run, InstanceFile, ReportFile, EXIT_CAP, EXIT_INFEASIBLE, EXIT_OK, EXIT_USAGE};
use lbfl_core::gallery::gen_random;
use lbfl_core::model::check_feasible;
use lbfl_core::oracle::exact_lbfl;
use tempfile::TempDir;

struct Output {
    code: i32,
    stdout: String,
    stderr: String,
}

fn lbfl(args: &[&str]) -> Output {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = run(std::iter::once("lbfl").chain(args.iter().copied()), &mut out, &mut err);
    Output {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn random_file(dir: &TempDir, seed: u64, nf: usize, nc: usize, m: usize) -> PathBuf {
    let inst = gen_random(seed, nf, nc, m, (0.0, 1.0)).unwrap();
    write(dir, &format!("r{seed}.json"), &InstanceFile::from_matrix(&inst).to_json())
}

#[test]
fn solve_defaults_give_feasible_verified_report() {
    let dir = TempDir::new().unwrap();
    let path = random_file(&dir, 1, 5, 14, 3);
    let out = lbfl(&["solve", s(&path)]);
    assert_eq!(out.code, EXIT_OK, "{}", out.stderr);
    let report = ReportFile::parse(&out.stdout).unwrap();
    let file = InstanceFile::parse(&std::fs::read_to_string(&path).unwrap()).unwrap();
    report.verify(&file).unwrap();
    let inst = file.to_instance().unwrap();
    let sol = report.solution.to_solution(&file).unwrap();
    assert!(check_feasible(&inst, &sol).feasible);
    assert_eq!(report.command, "solve");
}

#[test]
fn too_few_clients_exit_infeasible() {
    let dir = TempDir::new().unwrap();
    let path = write(
        &dir,
        "small.json",
        r#"{"format":1,"facilities":[{"id":"a","opening_cost":1}],"clients":[{"id":"x"},{"id":"y"}],
           "points":{"a":[0,0],"x":[1,0],"y":[0,1]},"M":3}"#,
    );
    let out = lbfl(&["solve", s(&path)]);
    assert_eq!(out.code, EXIT_INFEASIBLE);
    assert!(out.stderr.contains("lower bound M = 3"), "{}", out.stderr);
    assert!(out.stdout.is_empty());
}

#[test]
fn derandomized_never_worse_than_fixed() {
    let dir = TempDir::new().unwrap();
    for seed in 0..5 {
        // with M = 4 the breakpoints are 3/4 and 1, so the fixed run is one branch
        let path = random_file(&dir, seed, 5, 16, 4);
        let derand = ReportFile::parse(&lbfl(&["solve", s(&path), "--mode", "derand"]).stdout).unwrap();
        let fixed = ReportFile::parse(&lbfl(&["solve", s(&path), "--mode", "fixed", "--alpha", "0.75"]).stdout).unwrap();
        assert!(derand.cost.total <= fixed.cost.total + 1e-9, "seed {seed}");
    }
}

#[test]
fn random_mode_embeds_seed() {
    let dir = TempDir::new().unwrap();
    let path = random_file(&dir, 2, 4, 10, 2);
    let out = lbfl(&["solve", s(&path), "--mode", "random", "--seed", "42"]);
    assert_eq!(out.code, EXIT_OK, "{}", out.stderr);
    assert_eq!(ReportFile::parse(&out.stdout).unwrap().seed, Some(42));
}

#[test]
fn exact_matches_library_and_writes_file() {
    let dir = TempDir::new().unwrap();
    let inst = gen_random(3, 4, 9, 2, (0.0, 1.0)).unwrap();
    let path = write(&dir, "i.json", &InstanceFile::from_matrix(&inst).to_json());
    let report_path = dir.path().join("exact.json");
    let out = lbfl(&["exact", s(&path), "--out", s(&report_path)]);
    assert_eq!(out.code, EXIT_OK, "{}", out.stderr);
    assert!(out.stdout.is_empty());
    let report = ReportFile::parse(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    let lib = exact_lbfl(&inst).unwrap();
    assert!((report.cost.total - lib.cost.total).abs() < 1e-12);
}

#[test]
fn exact_over_cap_gives_no_answer() {
    let dir = TempDir::new().unwrap();
    let path = random_file(&dir, 4, 20, 25, 1);
    let out = lbfl(&["exact", s(&path)]);
    assert_eq!(out.code, EXIT_CAP);
    assert!(out.stdout.is_empty());
}

#[test]
fn exact_on_star_reports_hub_cost() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("star.json");
    assert_eq!(lbfl(&["gen", "star", "--M", "4", "--eps", "0.01", "--out", s(&path)]).code, EXIT_OK);
    let out = lbfl(&["exact", s(&path)]);
    let report = ReportFile::parse(&out.stdout).unwrap();
    assert!((report.cost.total - (2.0 * 16.0 + 0.01)).abs() < 1e-9);
    assert_eq!(report.solution.open.len(), 1);
}

#[test]
fn compare_prints_ratio_and_verdicts() {
    let dir = TempDir::new().unwrap();
    let path = random_file(&dir, 5, 5, 12, 2);
    let out = lbfl(&["compare", s(&path)]);
    assert_eq!(out.code, EXIT_OK, "{}{}", out.stdout, out.stderr);
    let ratio: f64 = out
        .stdout
        .lines()
        .find_map(|l| l.strip_prefix("ratio"))
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert!(ratio >= 1.0 - 1e-6 && ratio <= 82.6);
    assert!(out.stdout.contains("transfer plan within"));
    assert!(!out.stdout.contains("FAILS"));
}

#[test]
fn gapdemo_lines() {
    let star = lbfl(&["gapdemo", "star", "--M", "6"]);
    assert_eq!(star.code, EXIT_OK);
    assert!(star.stdout.contains("≥ M/2 = 3: PASS"), "{}", star.stdout);
    let cycle = lbfl(&["gapdemo", "cycle", "--k", "4", "--eps", "0.001"]);
    assert_eq!(cycle.code, EXIT_OK);
    assert!(cycle.stdout.contains("ratio 3.999000"), "{}", cycle.stdout);
    let cdufl = lbfl(&["gapdemo", "cdufl", "--f", "10", "--u", "4"]);
    assert_eq!(cdufl.code, EXIT_OK);
    assert!(cdufl.stdout.contains("integral 10 vs LP 2, gap 5"), "{}", cdufl.stdout);
}

#[test]
fn generated_files_round_trip() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("g.json");
    let out = lbfl(&["gen", "random", "--facilities", "3", "--clients", "7", "--M", "2", "--seed", "9", "--out", s(&path)]);
    assert_eq!(out.code, EXIT_OK);
    let text = std::fs::read_to_string(&path).unwrap();
    let file = InstanceFile::parse(&text).unwrap();
    assert!(file.points.is_some());
    assert_eq!(file.to_json(), text);
    let again = lbfl(&["gen", "random", "--facilities", "3", "--clients", "7", "--M", "2", "--seed", "9"]);
    assert_eq!(again.stdout, text);
}

#[test]
fn usage_and_schema_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    assert_eq!(lbfl(&["solve"]).code, EXIT_USAGE);
    assert_eq!(lbfl(&["frobnicate"]).code, EXIT_USAGE);
    assert_eq!(lbfl(&["solve", "/nonexistent/file.json"]).code, EXIT_USAGE);
    let both = write(
        &dir,
        "both.json",
        r#"{"format":1,"facilities":[{"id":0,"opening_cost":1}],"clients":[{"id":1}],
           "points":{"0":[0,0],"1":[1,0]},"distances":[[0,1],[1,0]],"M":1}"#,
    );
    assert_eq!(lbfl(&["solve", s(&both)]).code, EXIT_USAGE);
    let path = random_file(&dir, 6, 3, 6, 2);
    assert_eq!(lbfl(&["solve", s(&path), "--alpha", "0.4"]).code, EXIT_USAGE);
    assert_eq!(lbfl(&["solve", s(&path), "--mode", "derand", "--alpha", "0.8"]).code, EXIT_USAGE);
    assert_eq!(lbfl(&["solve", s(&path), "--gamma", "-1"]).code, EXIT_USAGE);
}

#[test]
fn help_and_version_exit_zero() {
    let help = lbfl(&["--help"]);
    assert_eq!(help.code, EXIT_OK);
    assert!(help.stdout.contains("gapdemo"));
    assert_eq!(lbfl(&["--version"]).code, EXIT_OK);
}

#[test]
fn tampered_report_fails_verification() {
    let dir = TempDir::new().unwrap();
    let path = random_file(&dir, 7, 4, 10, 2);
    let mut report = ReportFile::parse(&lbfl(&["solve", s(&path)]).stdout).unwrap();
    let file = InstanceFile::parse(&std::fs::read_to_string(&path).unwrap()).unwrap();
    report.cost.total += 1e-3;
    assert!(report.verify(&file).is_err());
}

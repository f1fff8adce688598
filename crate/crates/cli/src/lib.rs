//! The `lbfl` command line: solve, exact, compare, gen and gapdemo.
//!
//! Exit codes: 0 success, 1 usage, schema or I/O error, 2 infeasible
//! instance, 3 oracle cap exceeded, 4 failed assertion.

pub mod io;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use lbfl_core::gallery::{
    gen_cdufl_gap, gen_locality_cycle, gen_locality_star, gen_random_planar, naive_lbfl_local_search, GalleryInstance,
};
use lbfl_core::local_search::{cdufl_local_search, LocalSearchConfig};
use lbfl_core::model::{check_feasible, evaluate_lbfl};
use lbfl_core::oracle::{exact_lbfl_with_cap, DEFAULT_CAP};
use lbfl_core::pipeline::{solve, AlphaMode, DeltaMode, GammaMode, PipelineConfig, SolveReport};
use lbfl_core::LbflError;
use serde_json::json;

pub use io::{CostSummary, Id, InstanceFile, ReportFile, SolutionRecord};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_CAP: i32 = 3;
pub const EXIT_ASSERTION: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "lbfl", version, about = "Lower-bounded facility location solver and test bench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the approximation pipeline and write a report.
    Solve {
        instance: PathBuf,
        #[command(flatten)]
        flags: SolveFlags,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve exactly by enumerating open sets.
    Exact {
        instance: PathBuf,
        /// Largest number of facilities to enumerate.
        #[arg(long, default_value_t = DEFAULT_CAP)]
        cap: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve and compare against the exact optimum.
    Compare {
        instance: PathBuf,
        #[command(flatten)]
        flags: SolveFlags,
        #[arg(long, default_value_t = DEFAULT_CAP)]
        cap: usize,
    },
    /// Write an instance file.
    Gen {
        #[command(subcommand)]
        family: GenFamily,
        #[arg(long, global = true)]
        out: Option<PathBuf>,
    },
    /// Run a local-search gap demonstration.
    Gapdemo {
        #[command(subcommand)]
        family: DemoFamily,
    },
}

#[derive(Debug, Args)]
struct SolveFlags {
    /// Fixed alpha in (1/2, 1]; implies `--mode fixed`.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, default_value_t = 0.67)]
    beta: f64,
    /// `schedule`, `3/h`, or a positive number.
    #[arg(long, default_value = "schedule")]
    gamma: String,
    /// `schedule` or a positive number.
    #[arg(long, default_value = "schedule")]
    delta: String,
    #[arg(long, value_parser = ["fixed", "random", "derand"])]
    mode: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Run the exact oracle for diagnostics up to this many facilities; 0
    /// disables it.
    #[arg(long, default_value_t = 12)]
    oracle_cap: usize,
}

#[derive(Debug, Subcommand)]
enum GenFamily {
    /// Uniform points in the unit square.
    Random {
        #[arg(long, default_value_t = 6)]
        facilities: usize,
        #[arg(long, default_value_t = 18)]
        clients: usize,
        #[arg(long = "M", default_value_t = 3)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.0)]
        cost_min: f64,
        #[arg(long, default_value_t = 1.0)]
        cost_max: f64,
    },
    /// Hub-and-spokes instance defeating add/drop/swap search.
    Star {
        #[arg(long = "M", default_value_t = 4)]
        m: usize,
        #[arg(long, default_value_t = 1e-3)]
        eps: f64,
    },
    /// Alternating cycle with locality gap close to `k`.
    Cycle {
        #[arg(long, default_value_t = 4)]
        k: usize,
        #[arg(long, default_value_t = 1e-3)]
        eps: f64,
    },
}

#[derive(Debug, Subcommand)]
enum DemoFamily {
    Star {
        #[arg(long = "M", default_value_t = 6)]
        m: usize,
        #[arg(long, default_value_t = 1e-3)]
        eps: f64,
    },
    Cycle {
        #[arg(long, default_value_t = 4)]
        k: usize,
        #[arg(long, default_value_t = 1e-3)]
        eps: f64,
    },
    /// Co-located capacity-discounted instance with a large LP gap.
    Cdufl {
        #[arg(long, default_value_t = 10.0)]
        f: f64,
        #[arg(long, default_value_t = 4)]
        u: u64,
    },
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<LbflError> for Failure {
    fn from(e: LbflError) -> Self {
        let code = match e {
            LbflError::Infeasible(_) | LbflError::FlowInfeasible { .. } => EXIT_INFEASIBLE,
            LbflError::SizeCap { .. } => EXIT_CAP,
            LbflError::Invariant(_) => EXIT_ASSERTION,
            _ => EXIT_USAGE,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CmdResult = std::result::Result<i32, Failure>;

/// Runs the command line `args` (including the program name) and returns
/// the exit code. Diagnostics go to `stderr`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(stderr, "{text}");
                EXIT_USAGE
            } else {
                let _ = write!(stdout, "{text}");
                EXIT_OK
            };
        }
    };
    let result = match cli.command {
        Command::Solve { instance, flags, out } => cmd_solve(&instance, &flags, out.as_deref(), stdout),
        Command::Exact { instance, cap, out } => cmd_exact(&instance, cap, out.as_deref(), stdout),
        Command::Compare { instance, flags, cap } => cmd_compare(&instance, &flags, cap, stdout),
        Command::Gen { family, out } => cmd_gen(&family, out.as_deref(), stdout),
        Command::Gapdemo { family } => cmd_gapdemo(&family, stdout),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(stderr, "lbfl: {}", f.message);
            f.code
        }
    }
}

fn read_instance(path: &Path) -> std::result::Result<InstanceFile, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    Ok(InstanceFile::parse(&text)?)
}

fn emit(text: &str, out: Option<&Path>, stdout: &mut dyn Write) -> std::result::Result<(), Failure> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::usage(format!("{}: {e}", p.display()))),
        None => stdout.write_all(text.as_bytes()).map_err(|e| Failure::usage(e.to_string())),
    }
}

fn parse_positive(flag: &str, value: &str) -> std::result::Result<f64, Failure> {
    match value.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(Failure::usage(format!("--{flag}: expected a positive number, got {value:?}"))),
    }
}

fn pipeline_config(flags: &SolveFlags) -> std::result::Result<PipelineConfig, Failure> {
    let alpha_mode = match (flags.mode.as_deref(), flags.alpha) {
        (None, Some(a)) | (Some("fixed"), Some(a)) => AlphaMode::Fixed(a),
        (Some("fixed"), None) => AlphaMode::Fixed(0.75),
        (Some("random"), None) => AlphaMode::Random(flags.seed),
        (None, None) | (Some("derand"), None) => AlphaMode::Derandomized,
        (Some(m), Some(_)) => return Err(Failure::usage(format!("--alpha conflicts with --mode {m}"))),
        (Some(m), None) => return Err(Failure::usage(format!("unknown mode {m}"))),
    };
    let gamma_mode = match flags.gamma.as_str() {
        "schedule" => GammaMode::Schedule,
        "3/h" => GammaMode::ThreeOverH,
        v => GammaMode::Fixed(parse_positive("gamma", v)?),
    };
    let delta_mode = match flags.delta.as_str() {
        "schedule" => DeltaMode::Schedule,
        v => DeltaMode::Fixed(parse_positive("delta", v)?),
    };
    let config = PipelineConfig {
        alpha_mode,
        beta: flags.beta,
        gamma_mode,
        delta_mode,
        local_search: LocalSearchConfig::default(),
        oracle_cap: (flags.oracle_cap > 0).then_some(flags.oracle_cap),
        ..PipelineConfig::default()
    };
    config.validate()?;
    Ok(config)
}

fn to_value<T: serde::Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("plain data serializes")
}

fn run_solve(file: &InstanceFile, flags: &SolveFlags) -> std::result::Result<(ReportFile, SolveReport), Failure> {
    let config = pipeline_config(flags)?;
    let inst = file.to_instance()?;
    let (solution, report) = solve(&inst, &config)?;
    let feas = check_feasible(&inst, &solution);
    if !feas.feasible {
        return Err(LbflError::Invariant(format!("pipeline output infeasible: {:?}", feas.violations)).into());
    }
    let cost = evaluate_lbfl(&inst, &solution)?;
    let seed = match config.alpha_mode {
        AlphaMode::Random(s) => Some(s),
        _ => None,
    };
    let rf = ReportFile {
        format: io::FORMAT,
        tool: "lbfl".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: "solve".into(),
        seed,
        config: to_value(&config),
        report: to_value(&report),
        solution: SolutionRecord::new(&solution, file),
        cost: CostSummary {
            facility_cost: cost.facility_cost,
            assignment_cost: cost.assignment_cost,
            total: cost.total,
        },
    };
    rf.verify(file)?;
    Ok((rf, report))
}

fn cmd_solve(path: &Path, flags: &SolveFlags, out: Option<&Path>, stdout: &mut dyn Write) -> CmdResult {
    let file = read_instance(path)?;
    let (rf, _) = run_solve(&file, flags)?;
    emit(&rf.to_json(), out, stdout)?;
    Ok(EXIT_OK)
}

fn run_exact(file: &InstanceFile, cap: usize) -> std::result::Result<ReportFile, Failure> {
    let inst = file.to_instance()?;
    let r = exact_lbfl_with_cap(&inst, cap)?;
    let rf = ReportFile {
        format: io::FORMAT,
        tool: "lbfl".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: "exact".into(),
        seed: None,
        config: json!({ "cap": cap }),
        report: json!({
            "subsets_tried": r.subsets_tried,
            "subsets_pruned": r.subsets_pruned,
        }),
        solution: SolutionRecord::new(&r.solution, file),
        cost: CostSummary {
            facility_cost: r.cost.facility_cost,
            assignment_cost: r.cost.assignment_cost,
            total: r.cost.total,
        },
    };
    rf.verify(file)?;
    Ok(rf)
}

fn cmd_exact(path: &Path, cap: usize, out: Option<&Path>, stdout: &mut dyn Write) -> CmdResult {
    let file = read_instance(path)?;
    let rf = run_exact(&file, cap)?;
    emit(&rf.to_json(), out, stdout)?;
    Ok(EXIT_OK)
}

fn io_err(e: std::io::Error) -> Failure {
    Failure::usage(e.to_string())
}

fn cmd_compare(path: &Path, flags: &SolveFlags, cap: usize, stdout: &mut dyn Write) -> CmdResult {
    let file = read_instance(path)?;
    let exact = run_exact(&file, cap)?;
    let (solved, report) = run_solve(&file, flags)?;
    let opt = exact.cost.total;
    let ratio = if opt > 0.0 {
        solved.cost.total / opt
    } else if solved.cost.total <= 1e-12 {
        1.0
    } else {
        f64::INFINITY
    };
    let b = &report.chosen;
    let s = &b.stages;
    let mut w = String::new();
    let mut line = |k: &str, v: String| w.push_str(&format!("{k:<28} {v}\n"));
    line("alpha", format!("{:.6}", b.alpha));
    line("gamma", format!("{:.6}", b.gamma));
    line("delta", format!("{:.6}", b.delta));
    line("optimum", format!("{opt:.6}"));
    line("solution", format!("{:.6}", solved.cost.total));
    line("ratio", format!("{ratio:.6}"));
    line("bicriteria facility", format!("{:.6}", s.bicriteria_facility));
    line("bicriteria assignment", format!("{:.6}", s.bicriteria_assignment));
    line("cdufl facility", format!("{:.6}", s.cdufl_facility));
    line("cdufl assignment", format!("{:.6}", s.cdufl_assignment));
    line("transfer plan", format!("{:.6}", s.transfer_plan));
    line("structured", format!("{:.6}", s.structured));
    line("mapped", format!("{:.6}", s.mapped.total));
    line("final", format!("{:.6}", s.final_cost.total));
    let mut all = true;
    for c in &b.checks {
        all &= c.holds;
        let verdict = if c.holds { "holds" } else { "FAILS" };
        w.push_str(&format!("check {:<22} {:.6} <= {:.6}  {verdict}\n", c.name, c.lhs, c.rhs));
    }
    let ratio_ok = ratio <= 82.6;
    all &= ratio_ok;
    w.push_str(&format!("check {:<22} {ratio:.6} <= 82.6  {}\n", "ratio", if ratio_ok { "holds" } else { "FAILS" }));
    stdout.write_all(w.as_bytes()).map_err(io_err)?;
    Ok(if all { EXIT_OK } else { EXIT_ASSERTION })
}

fn cmd_gen(family: &GenFamily, out: Option<&Path>, stdout: &mut dyn Write) -> CmdResult {
    let file = match *family {
        GenFamily::Random {
            facilities,
            clients,
            m,
            seed,
            cost_min,
            cost_max,
        } => InstanceFile::from_planar(&gen_random_planar(seed, facilities, clients, m, (cost_min, cost_max))?),
        GenFamily::Star { m, eps } => InstanceFile::from_matrix(&gen_locality_star(m, eps)?.instance),
        GenFamily::Cycle { k, eps } => InstanceFile::from_matrix(&gen_locality_cycle(k, eps)?.instance),
    };
    emit(&file.to_json(), out, stdout)?;
    Ok(EXIT_OK)
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

/// Runs the naive search from the designated local optimum and compares
/// with the exact optimum.
fn locality_demo(g: &GalleryInstance, w: &mut String) -> std::result::Result<(f64, bool), Failure> {
    let naive = naive_lbfl_local_search(&g.instance, &g.local_optimum.open)?;
    let opt = exact_lbfl_with_cap(&g.instance, DEFAULT_CAP)?;
    let ratio = naive.cost / opt.cost.total;
    w.push_str(&format!("local cost {:.6}\n", naive.cost));
    w.push_str(&format!("optimum {:.6}\n", opt.cost.total));
    w.push_str(&format!("ratio {ratio:.6}\n"));
    let stuck = naive.open == g.local_optimum.open && naive.certificate.locally_optimal;
    w.push_str(&format!("stays at designated local optimum: {}\n", verdict(stuck)));
    Ok((ratio, stuck))
}

fn cmd_gapdemo(family: &DemoFamily, stdout: &mut dyn Write) -> CmdResult {
    let mut w = String::new();
    let ok = match *family {
        DemoFamily::Star { m, eps } => {
            let g = gen_locality_star(m, eps)?;
            let (ratio, stuck) = locality_demo(&g, &mut w)?;
            let half = m as f64 / 2.0;
            let ok = ratio >= half;
            w.push_str(&format!("ratio ≥ M/2 = {half}: {}\n", verdict(ok)));
            stuck && ok
        }
        DemoFamily::Cycle { k, eps } => {
            let g = gen_locality_cycle(k, eps)?;
            let (ratio, stuck) = locality_demo(&g, &mut w)?;
            let expected = k as f64 - eps;
            let ok = (ratio - expected).abs() <= 1e-9;
            w.push_str(&format!("ratio = k - eps = {expected}: {}\n", verdict(ok)));
            stuck && ok
        }
        DemoFamily::Cdufl { f, u } => {
            let gap = gen_cdufl_gap(f, u)?;
            let ls = cdufl_local_search(&gap.instance, &LocalSearchConfig::default().with_epsilon(1e-9))?;
            let integral = ls.facility_cost + ls.assignment_cost;
            let ratio = integral / gap.lp_value;
            w.push_str(&format!("integral {integral} vs LP {}, gap {ratio}\n", gap.lp_value));
            let bound = (u + 1) as f64;
            let ok = ratio >= bound - 1e-9;
            w.push_str(&format!("gap ≥ u+1 = {bound}: {}\n", verdict(ok)));
            ok
        }
    };
    stdout.write_all(w.as_bytes()).map_err(io_err)?;
    Ok(if ok { EXIT_OK } else { EXIT_ASSERTION })
}

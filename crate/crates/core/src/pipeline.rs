//! Parameter schedules and the end-to-end LBFL solve.
//!
//! A run picks `alpha` (fixed, drawn from the density `1 / (ln(1/beta) x)`
//! on `[beta, 1]`, or every breakpoint `k / M` in that interval), then per
//! `alpha`: bicriteria UFL, aggregation, the structured-instance solve, and
//! mapping back. Every inequality the analysis relies on is re-checked on
//! the run's own numbers; a violation aborts the run.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bicriteria::{alpha_rank, solve_bicriteria, RadiusTable};
use crate::error::{LbflError, Result};
use crate::flow::{assign_lower_bounded, assignment_to_map};
use crate::local_search::LocalSearchConfig;
use crate::model::{check_feasible, evaluate_lbfl, CostBreakdown, LbflInstance, Solution};
use crate::oracle::{exact_i2_with_cap, exact_lbfl_with_cap, OracleResult};
use crate::reduction::{build_i2, map_to_original, solve_i2, I2Config};

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.5 && alpha.is_finite() {
        Ok(())
    } else {
        Err(LbflError::Domain(format!("alpha = {alpha} must exceed 1/2")))
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.5 && beta < 1.0 {
        Ok(())
    } else {
        Err(LbflError::Domain(format!("beta = {beta} outside (1/2, 1)")))
    }
}

/// `1 + 4/a + 4a/(2a-1) + 4 sqrt(6/(2a-1))`.
pub fn eval_h(alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let d = 2.0 * alpha - 1.0;
    Ok(1.0 + 4.0 / alpha + 4.0 * alpha / d + 4.0 * (6.0 / d).sqrt())
}

/// Approximation ratio of the structured-instance solve:
/// `2/a + 2a/(2a-1) + 2 sqrt(2/a^2 + 4/(2a-1))`.
pub fn eval_g(alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let d = 2.0 * alpha - 1.0;
    Ok(2.0 / alpha + 2.0 * alpha / d + 2.0 * (2.0 / (alpha * alpha) + 4.0 / d).sqrt())
}

/// Opening-cost scale of the CDUFL encoding:
/// `sqrt((2/a) / (1/a + 2a/(2a-1)))`.
pub fn eval_delta(alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let d = 2.0 * alpha - 1.0;
    Ok(((2.0 / alpha) / (1.0 / alpha + 2.0 * alpha / d)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScheduleConstants {
    pub c2: f64,
    /// Mean of `h` over `[beta, 1]`.
    pub c3: f64,
    pub k_hat: f64,
}

pub fn eval_schedule_constants(beta: f64) -> Result<ScheduleConstants> {
    check_beta(beta)?;
    let l = (1.0 / beta).ln();
    let s = (2.0 * beta - 1.0).sqrt();
    let six = 6f64.sqrt();
    let c2 = (4.0 / beta - 4.0
        + 8.0 * six * (PI / 4.0 - s.atan())
        + 2.0 * (1.0 / (2.0 * beta - 1.0)).ln()
        + l)
        / l;
    let c3 = (4.0 * l + 4.0 * six * (1.0 - s) + 3.0 * (1.0 - beta) + (1.0 / (2.0 * beta - 1.0)).ln())
        / (1.0 - beta);
    let k_hat = (l * l * c2 / c3).powf(0.25);
    Ok(ScheduleConstants { c2, c3, k_hat })
}

/// Multipliers of `F*` and `C*` in a cost bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Coefficients {
    pub facility: f64,
    pub assignment: f64,
}

impl Coefficients {
    pub fn max(&self) -> f64 {
        self.facility.max(self.assignment)
    }
}

/// Coefficients of the expected bound under the random-`alpha` schedule.
pub fn schedule_coefficients(beta: f64) -> Result<Coefficients> {
    let k = eval_schedule_constants(beta)?;
    let l2 = (1.0 / beta).ln().powi(2);
    Ok(Coefficients {
        facility: 1.0 + (l2 * k.c2.powi(3) / k.c3).powf(0.25),
        assignment: 2.0 * k.c2 - 1.0 + 4.0 * (k.c2 * k.c3 / l2).powf(0.25) + 2.0 / (1.0 / beta).ln(),
    })
}

/// Coefficients of the fixed-`alpha` bound after substituting
/// `R*(alpha) <= C* / (M (1 - alpha))`.
pub fn fixed_alpha_coefficients(alpha: f64, gamma: f64) -> Result<Coefficients> {
    let h = eval_h(alpha)?;
    if alpha >= 1.0 {
        return Err(LbflError::Domain("the radius substitution needs alpha < 1".into()));
    }
    if !(gamma > 0.0) {
        return Err(LbflError::Domain(format!("gamma = {gamma}")));
    }
    Ok(Coefficients {
        facility: 1.0 + gamma * h,
        assignment: 2.0 * h - 1.0 + 2.0 / gamma + 2.0 * alpha * (1.0 + gamma * h) / (1.0 - alpha),
    })
}

/// Optimal-solution quantities a cost bound is stated in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundInputs {
    pub opt_facility: f64,
    pub opt_assignment: f64,
    /// Sum of `R_i(alpha)` over the optimal open facilities.
    pub opt_radius: f64,
    pub lower_bound: usize,
    pub alpha: f64,
    pub gamma: f64,
}

/// `F*(1 + g h) + C*(2h - 1 + 2/g) + 2 g a M R* h + 2 a M R*`.
pub fn evaluate_bound(b: &BoundInputs) -> Result<f64> {
    let h = eval_h(b.alpha)?;
    let (g, amr) = (b.gamma, b.alpha * b.lower_bound as f64 * b.opt_radius);
    Ok(b.opt_facility * (1.0 + g * h)
        + b.opt_assignment * (2.0 * h - 1.0 + 2.0 / g)
        + 2.0 * g * amr * h
        + 2.0 * amr)
}

/// Inverse-CDF draw `beta^(1 - u)`.
pub fn alpha_from_uniform(u: f64, beta: f64) -> f64 {
    beta.powf(1.0 - u)
}

pub fn sample_alpha(seed: u64, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    let u: f64 = ChaCha8Rng::seed_from_u64(seed).gen();
    Ok(alpha_from_uniform(u, beta))
}

/// Mean of the `alpha` density on `[beta, 1]`.
pub fn alpha_density_mean(beta: f64) -> f64 {
    (1.0 - beta) / (1.0 / beta).ln()
}

/// One `alpha = k / M` per distinct `ceil(alpha M)` within `[beta, 1]`.
pub fn enumerate_alphas(m: usize, beta: f64) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(LbflError::Invalid("M must be at least 1".into()));
    }
    let first = alpha_rank(beta, m)?;
    Ok((first..=m).map(|k| k as f64 / m as f64).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum AlphaMode {
    Fixed(f64),
    Random(u64),
    Derandomized,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum GammaMode {
    Fixed(f64),
    /// `3 / h(alpha)`.
    ThreeOverH,
    /// `K(beta) / sqrt(h(alpha))`.
    Schedule,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum DeltaMode {
    Fixed(f64),
    Schedule,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub alpha_mode: AlphaMode,
    pub beta: f64,
    pub gamma_mode: GammaMode,
    pub delta_mode: DeltaMode,
    /// Used by the bicriteria search; its `sigma` is replaced by `gamma`.
    pub local_search: LocalSearchConfig,
    /// Opening-cost scaling of the CDUFL local search.
    pub cdufl_sigma: f64,
    /// Run the exact oracles when the instance has at most this many
    /// facilities.
    pub oracle_cap: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            alpha_mode: AlphaMode::Derandomized,
            beta: 0.67,
            gamma_mode: GammaMode::Schedule,
            delta_mode: DeltaMode::Schedule,
            local_search: LocalSearchConfig::default(),
            cdufl_sigma: std::f64::consts::SQRT_2,
            oracle_cap: Some(12),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        check_beta(self.beta)?;
        if let AlphaMode::Fixed(a) = self.alpha_mode {
            if !(a > 0.5 && a <= 1.0) {
                return Err(LbflError::Domain(format!("alpha = {a} outside (1/2, 1]")));
            }
        }
        if let GammaMode::Fixed(g) = self.gamma_mode {
            if !(g > 0.0 && g.is_finite()) {
                return Err(LbflError::Domain(format!("gamma = {g}")));
            }
        }
        if let DeltaMode::Fixed(d) = self.delta_mode {
            if !(d > 0.0 && d.is_finite()) {
                return Err(LbflError::Domain(format!("delta = {d}")));
            }
        }
        if !(self.cdufl_sigma > 0.0 && self.cdufl_sigma.is_finite()) {
            return Err(LbflError::Domain(format!("sigma = {}", self.cdufl_sigma)));
        }
        self.local_search.validate()
    }

    pub fn gamma(&self, alpha: f64) -> Result<f64> {
        match self.gamma_mode {
            GammaMode::Fixed(g) => Ok(g),
            GammaMode::ThreeOverH => Ok(3.0 / eval_h(alpha)?),
            GammaMode::Schedule => Ok(eval_schedule_constants(self.beta)?.k_hat / eval_h(alpha)?.sqrt()),
        }
    }

    pub fn delta(&self, alpha: f64) -> Result<f64> {
        match self.delta_mode {
            DeltaMode::Fixed(d) => Ok(d),
            DeltaMode::Schedule => eval_delta(alpha),
        }
    }

    pub fn alphas(&self, m: usize) -> Result<Vec<f64>> {
        match self.alpha_mode {
            AlphaMode::Fixed(a) => Ok(vec![a]),
            AlphaMode::Random(seed) => Ok(vec![sample_alpha(seed, self.beta)?]),
            AlphaMode::Derandomized => enumerate_alphas(m, self.beta),
        }
    }
}

/// `gamma` for a mode: `3/h(alpha)` when `schedule` is false, else
/// `K(beta)/sqrt(h(alpha))`.
pub fn gamma_for(alpha: f64, beta: f64, schedule: bool) -> Result<f64> {
    let mode = if schedule { GammaMode::Schedule } else { GammaMode::ThreeOverH };
    PipelineConfig {
        gamma_mode: mode,
        beta,
        ..Default::default()
    }
    .gamma(alpha)
}

/// An inequality `lhs <= rhs`, allowed `slack` relative to `rhs` plus 1e-6.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub holds: bool,
}

impl Check {
    pub fn new(name: &str, lhs: f64, rhs: f64, slack: f64) -> Self {
        Self {
            name: name.into(),
            lhs,
            rhs,
            slack,
            holds: lhs <= rhs + slack * rhs.abs() + 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageCosts {
    /// Local-search output before the delete pass.
    pub search_facility: f64,
    pub search_assignment: f64,
    /// Opening costs of the bicriteria facilities, radius penalty included.
    pub bicriteria_facility: f64,
    pub bicriteria_assignment: f64,
    pub cdufl_facility: f64,
    pub cdufl_assignment: f64,
    pub transfer_plan: f64,
    pub structured: f64,
    /// Original-instance cost of the mapped solution.
    pub mapped: CostBreakdown,
    /// After reassigning clients optimally to the same open set.
    pub final_cost: CostBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleDiagnostics {
    pub opt: f64,
    pub opt_facility: f64,
    pub opt_assignment: f64,
    pub opt_open: Vec<usize>,
    pub opt_radius: f64,
    pub structured_opt: Option<f64>,
    pub cost_bound: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchReport {
    pub alpha: f64,
    pub gamma: f64,
    pub delta: f64,
    pub rank: usize,
    pub bicriteria_open: usize,
    pub class_sizes: std::collections::BTreeMap<String, usize>,
    pub stages: StageCosts,
    pub checks: Vec<Check>,
    pub oracle: Option<OracleDiagnostics>,
    pub events: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BranchSummary {
    pub alpha: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub config: PipelineConfig,
    /// `"single-sample"` for a random draw of `alpha`, else `"deterministic"`.
    pub ratio_kind: String,
    pub chosen: BranchReport,
    pub branches: Vec<BranchSummary>,
    pub cost: CostBreakdown,
}

impl SolveReport {
    pub fn all_hold(&self) -> bool {
        self.chosen.checks.iter().all(|c| c.holds)
    }
}

/// Solves one `alpha` branch.
pub fn solve_branch(
    instance: &LbflInstance,
    alpha: f64,
    config: &PipelineConfig,
    opt: Option<&OracleResult<Solution>>,
) -> Result<(Solution, BranchReport)> {
    let gamma = config.gamma(alpha)?;
    let delta = config.delta(alpha)?;
    let b = solve_bicriteria(instance, alpha, gamma, &config.local_search)?;
    let mut checks = vec![Check::new(
        "bicriteria facilities serve at least ceil(alpha M)",
        b.rank as f64,
        b.min_served() as f64,
        0.0,
    )];

    let i2 = build_i2(instance, &b)?;
    let i2_config = I2Config {
        delta,
        local_search: config.local_search.with_sigma(config.cdufl_sigma),
    };
    let out = solve_i2(&i2, &i2_config)?;
    if out.bound_certified {
        checks.push(Check::new(
            "transfer plan within F/(delta alpha) + C (1/alpha + 2 alpha/(2 alpha - 1))",
            out.constructive_cost,
            out.transfer_bound,
            0.0,
        ));
    }

    let mapped = map_to_original(instance, &i2, &out.solution)?;
    let mapped_cost = evaluate_lbfl(instance, &mapped)?;
    let (f_b, c_b) = (b.facility_cost, b.assignment_cost);
    checks.push(Check::new(
        "mapped cost within F_b + C_b + structured cost",
        mapped_cost.total,
        f_b + c_b + out.solution.cost,
        0.0,
    ));

    let (assignment, _) = assign_lower_bounded(instance, &mapped.open)?;
    let solution = Solution::new(
        mapped.open.iter().copied(),
        assignment_to_map(&assignment, instance.n_clients()),
    );
    let final_cost = evaluate_lbfl(instance, &solution)?;
    checks.push(Check::new(
        "reassignment does not raise the cost",
        final_cost.total,
        mapped_cost.total,
        0.0,
    ));
    let feas = check_feasible(instance, &solution);
    if !feas.feasible {
        return Err(LbflError::Invariant(format!(
            "pipeline produced an infeasible solution: {:?}",
            feas.violations
        )));
    }

    let oracle = match opt {
        Some(opt) => {
            let table = RadiusTable::new(instance)?;
            let opt_radius = table.total_radius(&opt.open, alpha)?;
            let (f_opt, c_opt) = (opt.cost.facility_cost, opt.cost.assignment_cost);
            let amr = 2.0 * alpha * instance.lower_bound() as f64 * opt_radius;
            // stated for the local-search output; the delete pass may move
            // cost from facilities to assignment
            checks.push(Check::new(
                "bicriteria facility cost within F* + 2 alpha M R* + 2 C*/gamma",
                b.search_facility_cost,
                f_opt + amr + 2.0 * c_opt / gamma,
                1e-3,
            ));
            checks.push(Check::new(
                "bicriteria assignment cost within gamma (F* + 2 alpha M R*) + C*",
                b.search_assignment_cost,
                gamma * (f_opt + amr) + c_opt,
                1e-3,
            ));
            let cap = config.oracle_cap.unwrap_or(0);
            let structured_opt = if i2.n_locations() <= cap {
                let s = exact_i2_with_cap(&i2, cap)?.cost.total;
                checks.push(Check::new(
                    "structured optimum within 2 (C_b + C*)",
                    s,
                    2.0 * (c_b + c_opt),
                    0.0,
                ));
                Some(s)
            } else {
                None
            };
            let cost_bound = evaluate_bound(&BoundInputs {
                opt_facility: f_opt,
                opt_assignment: c_opt,
                opt_radius,
                lower_bound: instance.lower_bound(),
                alpha,
                gamma,
            })?;
            Some(OracleDiagnostics {
                opt: opt.cost.total,
                opt_facility: f_opt,
                opt_assignment: c_opt,
                opt_open: opt.open.clone(),
                opt_radius,
                structured_opt,
                cost_bound,
                ratio: ratio(final_cost.total, opt.cost.total),
            })
        }
        None => None,
    };

    if let Some(c) = checks.iter().find(|c| !c.holds) {
        return Err(LbflError::Invariant(format!(
            "alpha = {alpha}: {} failed ({} > {})",
            c.name, c.lhs, c.rhs
        )));
    }

    let report = BranchReport {
        alpha,
        gamma,
        delta,
        rank: b.rank,
        bicriteria_open: b.open.len(),
        class_sizes: out.class_sizes,
        stages: StageCosts {
            search_facility: b.search_facility_cost,
            search_assignment: b.search_assignment_cost,
            bicriteria_facility: f_b,
            bicriteria_assignment: c_b,
            cdufl_facility: out.cdufl_facility_cost,
            cdufl_assignment: out.cdufl_assignment_cost,
            transfer_plan: out.constructive_cost,
            structured: out.solution.cost,
            mapped: mapped_cost,
            final_cost,
        },
        checks,
        oracle,
        events: out.events,
    };
    Ok((solution, report))
}

fn ratio(cost: f64, opt: f64) -> f64 {
    if opt > 0.0 {
        cost / opt
    } else if cost <= 1e-9 {
        1.0
    } else {
        f64::INFINITY
    }
}

/// Runs every configured `alpha` branch and keeps the cheapest, lowest
/// `alpha` on ties.
pub fn solve(instance: &LbflInstance, config: &PipelineConfig) -> Result<(Solution, SolveReport)> {
    config.validate()?;
    if instance.n_facilities() == 0 {
        return Err(LbflError::Invalid("instance has no facilities".into()));
    }
    if instance.n_clients() < instance.lower_bound() {
        return Err(LbflError::Infeasible(format!(
            "{} clients but lower bound M = {}",
            instance.n_clients(),
            instance.lower_bound()
        )));
    }
    let opt = match config.oracle_cap {
        Some(cap) if instance.n_facilities() <= cap => Some(exact_lbfl_with_cap(instance, cap)?),
        _ => None,
    };
    let mut best: Option<(Solution, BranchReport)> = None;
    let mut branches = Vec::new();
    for alpha in config.alphas(instance.lower_bound())? {
        let (sol, report) = solve_branch(instance, alpha, config, opt.as_ref())?;
        let cost = report.stages.final_cost.total;
        branches.push(BranchSummary { alpha, cost });
        let better = match &best {
            None => true,
            Some((_, r)) => cost < r.stages.final_cost.total - 1e-12 * (1.0 + cost.abs()),
        };
        if better {
            best = Some((sol, report));
        }
    }
    let (solution, chosen) = best.expect("at least one alpha");
    let ratio_kind = match config.alpha_mode {
        AlphaMode::Random(_) => "single-sample",
        _ => "deterministic",
    };
    let report = SolveReport {
        config: *config,
        ratio_kind: ratio_kind.into(),
        cost: chosen.stages.final_cost,
        chosen,
        branches,
    };
    Ok((solution, report))
}

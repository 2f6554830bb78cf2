//! Cyclic per-BS MM loop with a trust-region safeguard.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{Deployment, Vec3};
use crate::mm::subproblem::{minimize_on_ball, solve_subproblem, LinearizedRate, SubproblemStatus};
use crate::mm::surrogate::build_surrogate;
use crate::mm::trust_region::{acceptance_ratio, TrustRegionState};
use crate::problem::PlanningProblem;
use crate::search::{coordinate_global_search, fmt_f64, GridSpec, SearchObjective};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MmConfig {
    pub max_outer_sweeps: usize,
    /// Stop once a full sweep changes the objective by less than this
    /// fraction.
    pub convergence_tol: f64,
    pub subproblem_tol: f64,
    /// Initial radius in metres; `None` picks 5% of the sensing-region
    /// diameter.
    #[serde(rename = "epsilon_init_m")]
    pub epsilon_init: Option<f64>,
    #[serde(rename = "min_epsilon_m")]
    pub min_epsilon: f64,
    /// Subproblem solves per BS and sweep before moving on.
    pub max_attempts: usize,
    pub seed: u64,
}

impl Default for MmConfig {
    fn default() -> Self {
        Self {
            max_outer_sweeps: 60,
            convergence_tol: 1e-5,
            subproblem_tol: 1e-8,
            epsilon_init: None,
            min_epsilon: 1e-3,
            max_attempts: 10,
            seed: 0,
        }
    }
}

impl MmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_outer_sweeps == 0 || self.max_attempts == 0 {
            return Err(invalid("max_outer_sweeps and max_attempts must be >= 1"));
        }
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.convergence_tol) || !positive(self.subproblem_tol) || !positive(self.min_epsilon) {
            return Err(invalid("tolerances must be positive"));
        }
        if let Some(e) = self.epsilon_init {
            if !positive(e) {
                return Err(invalid("epsilon_init must be positive"));
            }
        }
        Ok(())
    }

    fn initial_radius(&self, problem: &PlanningProblem) -> f64 {
        self.epsilon_init.unwrap_or(0.05 * problem.sensing_region.diameter()).max(self.min_epsilon)
    }
}

/// One subproblem solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationRecord {
    pub sweep: usize,
    pub bs_index: usize,
    pub rho: f64,
    /// Radius used for this solve.
    pub epsilon: f64,
    /// True objective after the accept/reject decision.
    pub objective: f64,
    /// Surrogate area rate after the decision.
    pub rate: f64,
    pub accepted: bool,
    pub model_value: f64,
    /// Relative gap between model and true objective at the expansion point.
    pub tangency_gap: f64,
}

pub const ITERATION_HEADER: [&str; 6] = ["sweep", "bs_index", "rho", "epsilon", "objective", "rate"];

pub fn write_iteration_csv<W: Write>(log: &[IterationRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ITERATION_HEADER)?;
    for r in log {
        w.write_record([
            r.sweep.to_string(),
            r.bs_index.to_string(),
            fmt_f64(r.rho),
            fmt_f64(r.epsilon),
            fmt_f64(r.objective),
            fmt_f64(r.rate),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MmStatus {
    Converged,
    MaxSweeps,
}

#[derive(Debug, Clone)]
pub struct MmOutcome {
    pub deployment: Deployment,
    /// Objective at the start and after every accepted step.
    pub trace: Vec<f64>,
    pub log: Vec<IterationRecord>,
    pub status: MmStatus,
    pub sweeps: usize,
    /// Accepted steps of the rate-restoration phase.
    pub restoration_steps: usize,
    /// BS updates skipped because the remaining FIM was singular.
    pub skipped: usize,
}

fn distinct_from_others(p: &Vec3, positions: &[Vec3], n: usize) -> bool {
    positions.iter().enumerate().all(|(m, b)| m == n || (b - p).norm() > 0.0)
}

/// Move BSs towards the users until the surrogate rate floor is met.
/// Each BS minimizes the convex rate model over its trust ball; a step is
/// kept when the true area rate increases and every target stays
/// localizable.
fn restore_rate(problem: &PlanningProblem, positions: &mut [Vec3], cfg: &MmConfig) -> Result<usize> {
    let floor = problem.comm.r_th;
    let mut eps = vec![cfg.initial_radius(problem); positions.len()];
    let mut rate = problem.area_rate(positions);
    let mut steps = 0;
    for _ in 0..cfg.max_outer_sweeps.max(50) * 4 {
        if rate >= floor {
            return Ok(steps);
        }
        let mut progress = false;
        for n in 0..positions.len() {
            if rate >= floor {
                break;
            }
            let lin = LinearizedRate::build(n, positions, &problem.users, &problem.comm, floor)?;
            let f = |b: &Vec3| (lin.value(b), lin.gradient(b), lin.hessian(b));
            let gap = cfg.subproblem_tol * eps[n] * lin.gradient(&positions[n]).norm();
            let sol = minimize_on_ball(&f, &positions[n], eps[n], gap.max(f64::MIN_POSITIVE));
            let mut trial = positions.to_vec();
            trial[n] = sol.point;
            let new_rate = problem.area_rate(&trial);
            if new_rate > rate
                && new_rate.is_finite()
                && distinct_from_others(&sol.point, positions, n)
                && problem.objective(&trial).is_finite()
            {
                positions[n] = sol.point;
                rate = new_rate;
                steps += 1;
                progress = true;
                eps[n] *= 2.0;
            } else {
                eps[n] = (eps[n] * 0.5).max(cfg.min_epsilon);
            }
        }
        if !progress && eps.iter().all(|&e| e <= cfg.min_epsilon) {
            break;
        }
    }
    if rate >= floor {
        Ok(steps)
    } else {
        Err(Error::InfeasibleRate { required: floor, best: rate })
    }
}

/// Minimize the sampled A-CRLB over the BS positions, one BS at a time,
/// subject to the surrogate area-rate floor.
pub fn mm_optimize(problem: &PlanningProblem, init: &Deployment, cfg: &MmConfig) -> Result<MmOutcome> {
    problem.validate()?;
    cfg.validate()?;
    let mut positions = init.positions().to_vec();
    let restoration_steps = if problem.meets_rate(&positions) { 0 } else { restore_rate(problem, &mut positions, cfg)? };
    let mut f = problem.objective(&positions);
    if !f.is_finite() {
        return Err(invalid("initial deployment leaves some target non-localizable"));
    }
    let constrained = problem.rate_constrained();
    let n_bs = positions.len();
    let mut tr: Vec<TrustRegionState> =
        (0..n_bs).map(|_| TrustRegionState::new(cfg.initial_radius(problem), cfg.min_epsilon)).collect::<Result<_>>()?;
    let mut trace = vec![f];
    let mut log = Vec::new();
    let mut skipped = 0;
    let mut status = MmStatus::MaxSweeps;
    let mut sweeps = 0;

    while sweeps < cfg.max_outer_sweeps {
        sweeps += 1;
        let f_start = f;
        for n in 0..n_bs {
            let surrogate = match build_surrogate(n, &positions, &problem.targets, &problem.sensing) {
                Ok(s) => s,
                Err(Error::SingularRemainder { .. }) => {
                    skipped += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let model_r = surrogate.value(&positions[n]);
            let tangency_gap = ((model_r - f) / f).abs();
            let rate_model = if constrained {
                Some(LinearizedRate::build(n, &positions, &problem.users, &problem.comm, problem.comm.r_th)?)
            } else {
                None
            };
            for _ in 0..cfg.max_attempts {
                let eps = tr[n].epsilon;
                let sol = solve_subproblem(&surrogate, rate_model.as_ref(), eps, cfg.subproblem_tol);
                if sol.status == SubproblemStatus::Blocked {
                    break;
                }
                let moved = sol.point != positions[n];
                let mut trial = positions.clone();
                trial[n] = sol.point;
                let mut f_new = problem.objective(&trial);
                if moved && (!distinct_from_others(&sol.point, &positions, n) || !problem.meets_rate(&trial)) {
                    f_new = f64::INFINITY;
                }
                let rho = acceptance_ratio(f, f_new, sol.model_value, moved);
                let accepted = tr[n].accepts(rho) && f_new <= f;
                tr[n] = tr[n].update_radius(if accepted { rho } else { rho.min(0.0) });
                if accepted {
                    positions[n] = sol.point;
                    f = f_new;
                    trace.push(f);
                }
                log.push(IterationRecord {
                    sweep: sweeps,
                    bs_index: n,
                    rho,
                    epsilon: eps,
                    objective: f,
                    rate: problem.area_rate(&positions),
                    accepted,
                    model_value: sol.model_value,
                    tangency_gap,
                });
                if accepted || !moved || eps <= cfg.min_epsilon {
                    break;
                }
            }
        }
        if (f_start - f).abs() <= cfg.convergence_tol * f_start.abs() {
            status = MmStatus::Converged;
            break;
        }
    }
    Ok(MmOutcome {
        deployment: Deployment::new(positions)?,
        trace,
        log,
        status,
        sweeps,
        restoration_steps,
        skipped,
    })
}

/// Random start refined by one coarse per-BS search sweep, then small
/// jitter (mostly in height) until every target is localizable. Under a
/// rate floor the search prefers feasible A-CRLB minimizers and otherwise
/// leaves the floor to the optimizer's restoration phase.
pub fn initialize_deployment(problem: &PlanningProblem, n_bs: usize, seed: u64) -> Result<Deployment> {
    problem.validate()?;
    if n_bs == 0 {
        return Err(invalid("need at least one BS"));
    }
    let space = problem.bs_space;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| {
        Vec3::from_fn(|i, _| if space.max[i] > space.min[i] { rng.random_range(space.min[i]..=space.max[i]) } else { space.min[i] })
    };
    let positions: Vec<Vec3> = (0..n_bs).map(|_| draw(&mut rng)).collect();
    let mut dep = Deployment::new(positions)?;

    let span = space.max - space.min;
    let res = Vec3::from_fn(|i, _| if span[i] > 0.0 { span[i] / 8.0 } else { 1.0 });
    let grid = GridSpec { lo: space.min, hi: space.max, resolution: res, refinement_levels: 1, max_sweeps: 1 };
    let objectives: &[SearchObjective] = if problem.rate_constrained() {
        &[SearchObjective::ACrlbWithRateFloor, SearchObjective::ACrlb]
    } else {
        &[SearchObjective::ACrlb]
    };
    for obj in objectives {
        if let Ok(out) = coordinate_global_search(problem, &dep, &grid, *obj) {
            dep = out.deployment;
            break;
        }
    }

    let mut positions = dep.into_positions();
    for _ in 0..100 {
        if problem.objective(&positions).is_finite() && Deployment::new(positions.clone()).is_ok() {
            return Deployment::new(positions);
        }
        for p in positions.iter_mut() {
            for i in 0..3 {
                if span[i] > 0.0 {
                    let step = if i == 2 { 0.05 } else { 0.01 } * span[i] * (rng.random::<f64>() - 0.5);
                    p[i] = (p[i] + step).clamp(space.min[i], space.max[i]);
                }
            }
        }
    }
    Err(Error::Initialization("could not reach a nonsingular FIM at every target".into()))
}

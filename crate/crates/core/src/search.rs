//! Reference optimizers and experiment drivers: cyclic per-BS grid search,
//! the replication scaling experiment and the BS height sweep.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{
    replicate_deployment, replicate_samples, sample_region, subdivision_transforms, Deployment, Region, SampleMode,
    SampleSet, Vec3,
};
use crate::problem::PlanningProblem;
use crate::sensing::{area_crlb_positions, SensingParams};

/// Candidate lattice for the per-BS search. Axes with `lo == hi` are fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    #[serde(rename = "lo_m")]
    pub lo: Vec3,
    #[serde(rename = "hi_m")]
    pub hi: Vec3,
    #[serde(rename = "resolution_m")]
    pub resolution: Vec3,
    /// Coarse-to-fine levels after the first pass, each dividing the step by 4.
    #[serde(default = "default_levels")]
    pub refinement_levels: usize,
    #[serde(default = "default_sweeps")]
    pub max_sweeps: usize,
}

fn default_levels() -> usize {
    3
}

fn default_sweeps() -> usize {
    50
}

impl GridSpec {
    pub fn new(lo: Vec3, hi: Vec3, resolution: Vec3) -> Result<Self> {
        let g = Self { lo, hi, resolution, refinement_levels: default_levels(), max_sweeps: default_sweeps() };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..3 {
            if !(self.lo[i].is_finite() && self.hi[i].is_finite() && self.lo[i] <= self.hi[i]) {
                return Err(invalid("grid bounds must be finite with lo <= hi"));
            }
            if !(self.resolution[i] > 0.0 && self.resolution[i].is_finite()) {
                return Err(invalid("grid resolution must be positive"));
            }
        }
        if self.max_sweeps == 0 {
            return Err(invalid("grid search needs at least one sweep"));
        }
        Ok(())
    }

    fn axis(lo: f64, hi: f64, step: f64) -> Vec<f64> {
        let n = ((hi - lo) / step + 1e-9).floor() as usize;
        let mut v: Vec<f64> = (0..=n).map(|i| lo + i as f64 * step).collect();
        if hi - v[v.len() - 1] > 1e-9 * step {
            v.push(hi);
        }
        v
    }

    fn lattice(lo: Vec3, hi: Vec3, step: Vec3) -> Vec<Vec3> {
        let xs = Self::axis(lo.x, hi.x, step.x);
        let ys = Self::axis(lo.y, hi.y, step.y);
        let zs = Self::axis(lo.z, hi.z, step.z);
        let mut out = Vec::with_capacity(xs.len() * ys.len() * zs.len());
        for &z in &zs {
            for &y in &ys {
                for &x in &xs {
                    out.push(Vec3::new(x, y, z));
                }
            }
        }
        out
    }

    /// Points of the coarse lattice.
    pub fn points(&self) -> Vec<Vec3> {
        Self::lattice(self.lo, self.hi, self.resolution)
    }

    pub fn cell_count(&self) -> usize {
        (0..3).map(|i| Self::axis(self.lo[i], self.hi[i], self.resolution[i]).len()).product()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchObjective {
    ACrlb,
    /// Maximize the surrogate area rate.
    AreaRate,
    /// A-CRLB restricted to deployments meeting the rate floor.
    ACrlbWithRateFloor,
}

impl SearchObjective {
    /// Value to minimize.
    pub fn evaluate(&self, problem: &PlanningProblem, positions: &[Vec3]) -> f64 {
        match self {
            SearchObjective::ACrlb => problem.objective(positions),
            SearchObjective::AreaRate => {
                let r = problem.area_rate(positions);
                if r.is_finite() {
                    -r
                } else {
                    f64::INFINITY
                }
            }
            SearchObjective::ACrlbWithRateFloor => {
                if problem.meets_rate(positions) {
                    problem.objective(positions)
                } else {
                    f64::INFINITY
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub deployment: Deployment,
    /// Objective after every move, starting with the initial value.
    pub trace: Vec<f64>,
    pub sweeps: usize,
}

fn collides(p: &Vec3, positions: &[Vec3], skip: usize) -> bool {
    positions.iter().enumerate().any(|(m, b)| m != skip && (b - p).norm() <= 1e-9 * (1.0 + b.norm()))
}

/// Best candidate among `cands` for BS `n`; lowest index wins ties.
fn best_of(
    problem: &PlanningProblem,
    objective: SearchObjective,
    positions: &[Vec3],
    n: usize,
    cands: &[Vec3],
) -> Option<(Vec3, f64)> {
    let values: Vec<f64> = cands
        .par_iter()
        .map(|c| {
            if collides(c, positions, n) {
                return f64::INFINITY;
            }
            let mut trial = positions.to_vec();
            trial[n] = *c;
            objective.evaluate(problem, &trial)
        })
        .collect();
    let mut best: Option<(Vec3, f64)> = None;
    for (c, v) in cands.iter().zip(values) {
        if v.is_nan() {
            continue;
        }
        if best.is_none_or(|(_, bv)| v < bv) {
            best = Some((*c, v));
        }
    }
    best
}

/// Grid-optimal position of BS `n` with the others fixed, refined
/// coarse-to-fine around the incumbent.
fn search_one(
    problem: &PlanningProblem,
    objective: SearchObjective,
    grid: &GridSpec,
    positions: &[Vec3],
    n: usize,
) -> Option<(Vec3, f64)> {
    let mut best = best_of(problem, objective, positions, n, &grid.points())?;
    let mut step = grid.resolution;
    for _ in 0..grid.refinement_levels {
        let lo = (best.0 - step).sup(&grid.lo);
        let hi = (best.0 + step).inf(&grid.hi);
        step /= 4.0;
        let cands = GridSpec::lattice(lo, hi, step);
        if let Some(cand) = best_of(problem, objective, positions, n, &cands) {
            if cand.1 < best.1 {
                best = cand;
            }
        }
    }
    Some(best)
}

/// Cyclic per-BS global search: each BS in turn moves to its grid-optimal
/// position while the others stay fixed, until a full sweep brings no
/// strict improvement.
pub fn coordinate_global_search(
    problem: &PlanningProblem,
    init: &Deployment,
    grid: &GridSpec,
    objective: SearchObjective,
) -> Result<SearchOutcome> {
    problem.validate()?;
    grid.validate()?;
    let mut positions = init.positions().to_vec();
    let mut current = objective.evaluate(problem, &positions);
    let mut trace = vec![current];
    if grid.cell_count() <= 1 {
        return finish_search(problem, objective, positions, trace, 0);
    }
    let mut sweeps = 0;
    while sweeps < grid.max_sweeps {
        sweeps += 1;
        let mut moved = false;
        for n in 0..positions.len() {
            if let Some((p, v)) = search_one(problem, objective, grid, &positions, n) {
                if v < current {
                    positions[n] = p;
                    current = v;
                    trace.push(v);
                    moved = true;
                }
            }
        }
        if !moved {
            break;
        }
    }
    finish_search(problem, objective, positions, trace, sweeps)
}

fn finish_search(
    problem: &PlanningProblem,
    objective: SearchObjective,
    positions: Vec<Vec3>,
    trace: Vec<f64>,
    sweeps: usize,
) -> Result<SearchOutcome> {
    let last = *trace.last().unwrap_or(&f64::INFINITY);
    if objective == SearchObjective::ACrlbWithRateFloor && !last.is_finite() {
        let best = problem.area_rate(&positions);
        return Err(Error::InfeasibleRate { required: problem.comm.r_th, best });
    }
    Ok(SearchOutcome { deployment: Deployment::new(positions)?, trace, sweeps })
}

/// How replicated copies of a base solution are laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Framing {
    /// Region enlarged `Z` times per axis, BS density unchanged.
    Enlarged,
    /// Region unchanged, base solution shrunk into each of `Z^d` cells.
    Subdivided,
}

impl Framing {
    fn label(&self) -> &'static str {
        match self {
            Framing::Enlarged => "enlarged",
            Framing::Subdivided => "subdivided",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub framing: Framing,
    pub factor: usize,
    pub n_total: usize,
    pub baseline_a_crlb: f64,
    /// Average over cells of the per-cell A-CRLB using only that cell's BSs.
    pub constructed_a_crlb: f64,
    /// A-CRLB over the whole region with every BS cooperating.
    pub full_coop_a_crlb: f64,
    pub predicted_ratio: f64,
    pub constructed_ratio: f64,
}

impl ScalingRow {
    /// Full cooperation never loses to the per-cell construction.
    pub fn cooperation_holds(&self, rel_slack: f64) -> bool {
        self.full_coop_a_crlb <= self.constructed_a_crlb * (1.0 + rel_slack)
    }
}

pub const SCALING_HEADER: [&str; 8] = [
    "framing",
    "factor",
    "n_total",
    "baseline_a_crlb",
    "constructed_a_crlb",
    "full_coop_a_crlb",
    "predicted_ratio",
    "constructed_ratio",
];

fn cell_average(cells: &[(SampleSet, Vec<Vec3>)], params: &SensingParams) -> Result<f64> {
    let mut acc = 0.0;
    for (samples, positions) in cells {
        acc += area_crlb_positions(samples, positions, params)?;
    }
    Ok(acc / cells.len() as f64)
}

/// Replicate a solved base deployment by each factor (a perfect `d`-th
/// power) and compare the per-cell construction with full cooperation.
pub fn scaling_experiment(
    region: &Region,
    targets: &SampleSet,
    base: &Deployment,
    params: &SensingParams,
    factors: &[usize],
    framings: &[Framing],
) -> Result<Vec<ScalingRow>> {
    region.validate()?;
    params.validate()?;
    let dim = region.dim();
    if dim == 0 {
        return Err(invalid("scaling needs a parametric region"));
    }
    let baseline = area_crlb_positions(targets, base.positions(), params)?;
    let n0 = base.len();
    let mut rows = Vec::new();
    for &framing in framings {
        for &factor in factors {
            let (cells, full_dep) = match framing {
                Framing::Enlarged => {
                    let (dep, _) = replicate_deployment(base, region, factor)?;
                    let samples = replicate_samples(targets, region, factor)?;
                    let cells: Vec<_> = samples
                        .into_iter()
                        .enumerate()
                        .map(|(c, s)| (s, dep.positions()[c * n0..(c + 1) * n0].to_vec()))
                        .collect();
                    (cells, dep)
                }
                Framing::Subdivided => {
                    let maps = subdivision_transforms(region, factor)?;
                    let cells: Vec<_> = maps
                        .iter()
                        .map(|t| (t.apply_samples(targets), t.apply_deployment(base).into_positions()))
                        .collect();
                    let all: Vec<Vec3> = cells.iter().flat_map(|(_, p)| p.iter().copied()).collect();
                    (cells, Deployment::new(all)?)
                }
            };
            let constructed = cell_average(&cells, params)?;
            let parts: Vec<SampleSet> = cells.iter().map(|(s, _)| s.clone()).collect();
            let all_samples = SampleSet::concat(&parts)?;
            let full = area_crlb_positions(&all_samples, full_dep.positions(), params)?;
            let predicted_ratio = match framing {
                Framing::Enlarged => 1.0,
                Framing::Subdivided => (factor as f64).powf(-2.0 * params.beta / dim as f64),
            };
            rows.push(ScalingRow {
                framing,
                factor,
                n_total: full_dep.len(),
                baseline_a_crlb: baseline,
                constructed_a_crlb: constructed,
                full_coop_a_crlb: full,
                predicted_ratio,
                constructed_ratio: constructed / baseline,
            });
        }
    }
    Ok(rows)
}

pub fn write_scaling_csv<W: Write>(rows: &[ScalingRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SCALING_HEADER)?;
    for r in rows {
        w.write_record([
            r.framing.label().to_string(),
            r.factor.to_string(),
            r.n_total.to_string(),
            fmt_f64(r.baseline_a_crlb),
            fmt_f64(r.constructed_a_crlb),
            fmt_f64(r.full_coop_a_crlb),
            fmt_f64(r.predicted_ratio),
            fmt_f64(r.constructed_ratio),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn fmt_f64(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v}")
    }
}

/// Line-region layout for the height sweep: BS horizontal positions as
/// fractions of the line length, all BSs at one common height.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeightSweepLayout {
    /// `(x, y)` of each BS divided by the line length.
    pub fractions: Vec<[f64; 2]>,
    /// Target samples along the line.
    pub samples: usize,
}

impl HeightSweepLayout {
    pub fn positions(&self, length: f64, height: f64) -> Vec<Vec3> {
        self.fractions.iter().map(|f| Vec3::new(f[0] * length, f[1] * length, height)).collect()
    }

    pub fn targets(&self, length: f64) -> Result<SampleSet> {
        sample_region(&Region::segment(0.0, length), &[self.samples], SampleMode::UniformGrid)
    }

    pub fn a_crlb(&self, length: f64, height: f64, params: &SensingParams) -> Result<f64> {
        area_crlb_positions(&self.targets(length)?, &self.positions(length, height), params)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeightRow {
    pub length_m: f64,
    pub best_height_m: f64,
    pub min_a_crlb: f64,
}

pub const HEIGHT_HEADER: [&str; 3] = ["length_m", "best_height_m", "min_a_crlb"];

/// For every line length, the common BS height (from `heights`) with the
/// lowest A-CRLB. Ties go to the lower height.
pub fn height_sweep(
    layout: &HeightSweepLayout,
    lengths: &[f64],
    heights: &[f64],
    params: &SensingParams,
) -> Result<Vec<HeightRow>> {
    params.validate()?;
    if heights.is_empty() || layout.fractions.is_empty() || layout.samples == 0 {
        return Err(invalid("height sweep needs heights, BSs and samples"));
    }
    if heights.iter().any(|h| !h.is_finite()) || lengths.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
        return Err(invalid("heights must be finite and lengths positive"));
    }
    lengths
        .iter()
        .map(|&l| {
            let targets = layout.targets(l)?;
            let values: Vec<f64> = heights
                .par_iter()
                .map(|&h| area_crlb_positions(&targets, &layout.positions(l, h), params).unwrap_or(f64::INFINITY))
                .collect();
            let (idx, min) = values
                .iter()
                .enumerate()
                .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
            Ok(HeightRow { length_m: l, best_height_m: heights[idx], min_a_crlb: min })
        })
        .collect()
}

pub fn write_height_csv<W: Write>(rows: &[HeightRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEIGHT_HEADER)?;
    for r in rows {
        w.write_record([fmt_f64(r.length_m), fmt_f64(r.best_height_m), fmt_f64(r.min_a_crlb)])?;
    }
    w.flush()?;
    Ok(())
}

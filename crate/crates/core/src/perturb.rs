//! Persistence of the unique coexistence state under small C¹ perturbations
//! of the growth functions.
//!
//! Directions act on family parameters and are scaled so that the largest
//! C¹ working-range norm of a species' parameter tangent equals one.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::conditions::{check_cor34_with, ConditionContext};
use crate::error::{Error, Result};
use crate::functions::SystemSpec;
use crate::grid::format_value;
use crate::system::{default_bounds, multi_start_with, MultiStartOptions, SystemState};

pub const DEFAULT_DELTAS: [f64; 5] = [1e-4, 1e-3, 1e-2, 5e-2, 1e-1];
pub const DEFAULT_DIRECTIONS: usize = 8;
pub const DEFAULT_STARTS: usize = 12;
/// Keeps direction streams apart from the multi-start streams of the same seed.
const DIRECTION_SALT: u64 = 0x6469_7265_6374_696f;

pub use crate::functions::c1_distance;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbationDirection {
    pub id: usize,
    /// Per-species offsets `(Δa, Δb[, Δs])`.
    pub offsets: Vec<Vec<f64>>,
}

impl PerturbationDirection {
    /// Largest C¹ norm of the per-species parameter tangents.
    pub fn c1_norm(&self, spec: &SystemSpec) -> f64 {
        spec.species()
            .iter()
            .zip(&self.offsets)
            .map(|(s, o)| s.h.tangent_c1_norm(o))
            .fold(0.0, f64::max)
    }

    /// Pseudo-random unit direction `id` derived from `seed`.
    pub fn random(spec: &SystemSpec, seed: u64, id: usize) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ DIRECTION_SALT);
        rng.set_stream(id as u64);
        let raw: Vec<Vec<f64>> = spec
            .species()
            .iter()
            .map(|s| (0..s.h.perturbation_dim()).map(|_| rng.gen_range(-1.0..=1.0)).collect())
            .collect();
        PerturbationDirection { id, offsets: raw }.normalized(spec)
    }

    pub fn normalized(self, spec: &SystemSpec) -> Result<Self> {
        let norm = self.c1_norm(spec);
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::InvalidPerturbation(format!(
                "direction {} has zero C1 norm",
                self.id
            )));
        }
        Ok(PerturbationDirection {
            id: self.id,
            offsets: self
                .offsets
                .iter()
                .map(|o| o.iter().map(|v| v / norm).collect())
                .collect(),
        })
    }
}

/// `h_i + δ·direction_i` for every species, with roots recomputed.
pub fn perturb_spec(spec: &SystemSpec, direction: &PerturbationDirection, delta: f64) -> Result<SystemSpec> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::InvalidPerturbation(format!(
            "delta must be finite and >= 0, got {delta}"
        )));
    }
    if direction.offsets.len() != spec.n_species() {
        return Err(Error::InvalidPerturbation(format!(
            "direction has {} species, spec has {}",
            direction.offsets.len(),
            spec.n_species()
        )));
    }
    if delta == 0.0 {
        return Ok(spec.clone());
    }
    let growth = spec
        .species()
        .iter()
        .zip(&direction.offsets)
        .map(|(s, o)| {
            let scaled: Vec<f64> = o.iter().map(|v| delta * v).collect();
            s.h.perturbed(&scaled)
        })
        .collect::<Result<Vec<_>>>()?;
    spec.with_growth(growth)
        .map_err(|e| Error::InvalidPerturbation(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CellVerdict {
    Unique,
    Multiple,
    Inconclusive,
    InvalidPerturbation,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepCell {
    pub direction_id: usize,
    pub delta: f64,
    pub verdict: CellVerdict,
    pub unique: bool,
    /// `‖u(δ) - u(0)‖_∞` for the first cluster; NaN without one.
    pub distance: f64,
    pub converged: usize,
    pub clusters: usize,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PerturbationReport {
    pub seed: u64,
    pub starts: usize,
    pub deltas: Vec<f64>,
    pub directions: Vec<PerturbationDirection>,
    /// False when the base spec fails the global uniqueness conditions (C34A/C34B).
    pub base_certified: bool,
    pub exploratory: bool,
    pub base_unique: bool,
    /// Cells ordered by direction, then by increasing δ.
    pub cells: Vec<SweepCell>,
    /// Largest δ at which every direction was unique.
    pub max_unique_delta: Option<f64>,
    #[serde(skip)]
    pub base_state: SystemState,
}

impl PerturbationReport {
    pub fn cell(&self, direction_id: usize, delta: f64) -> Option<&SweepCell> {
        self.cells
            .iter()
            .find(|c| c.direction_id == direction_id && c.delta == delta)
    }

    pub fn unanimous(&self) -> bool {
        self.cells.iter().all(|c| c.unique)
    }

    /// Flat table `direction_id,delta,unique,distance`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("direction_id,delta,unique,distance\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{}\n",
                c.direction_id,
                format_value(c.delta),
                c.unique,
                format_value(c.distance)
            ));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub deltas: Vec<f64>,
    pub n_directions: usize,
    pub n_starts: usize,
    pub seed: u64,
    pub multi_start: MultiStartOptions,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            deltas: DEFAULT_DELTAS.to_vec(),
            n_directions: DEFAULT_DIRECTIONS,
            n_starts: DEFAULT_STARTS,
            seed: 0,
            multi_start: MultiStartOptions::default(),
        }
    }
}

pub fn perturbation_sweep(
    spec: &SystemSpec,
    deltas: &[f64],
    n_directions: usize,
    n_starts: usize,
    seed: u64,
) -> Result<PerturbationReport> {
    perturbation_sweep_with(
        spec,
        &SweepOptions {
            deltas: deltas.to_vec(),
            n_directions,
            n_starts,
            seed,
            ..Default::default()
        },
    )
}

/// Runs the sweep; a δ = 0 column is always included.
pub fn perturbation_sweep_with(spec: &SystemSpec, options: &SweepOptions) -> Result<PerturbationReport> {
    if options.n_directions == 0 {
        return Err(Error::invalid("need at least one direction"));
    }
    if let Some(d) = options.deltas.iter().find(|d| !(**d >= 0.0 && d.is_finite())) {
        return Err(Error::invalid(format!("deltas must be finite and >= 0, got {d}")));
    }
    let mut deltas = options.deltas.clone();
    deltas.push(0.0);
    deltas.sort_by(f64::total_cmp);
    deltas.dedup();

    let ms = &options.multi_start;
    let ctx = ConditionContext::new(spec, &ms.logistic)?;
    let base_certified = check_cor34_with(spec, &ctx)?.all_pass();
    let base = multi_start_with(spec, options.n_starts, options.seed, ms, &ctx.bounds)?;
    let base_state = base
        .clusters
        .first()
        .map(|c| c.representative.clone())
        .ok_or_else(|| Error::numerical("perturbation sweep (no base coexistence state)", f64::NAN))?;

    let directions = (0..options.n_directions)
        .map(|id| PerturbationDirection::random(spec, options.seed, id))
        .collect::<Result<Vec<_>>>()?;

    let jobs: Vec<(usize, f64)> = directions
        .iter()
        .flat_map(|d| deltas.iter().map(move |&delta| (d.id, delta)))
        .collect();
    let cells = jobs
        .par_iter()
        .map(|&(id, delta)| run_cell(spec, &directions[id], delta, options, &base_state))
        .collect::<Result<Vec<_>>>()?;

    let max_unique_delta = deltas
        .iter()
        .copied()
        .filter(|&d| cells.iter().filter(|c| c.delta == d).all(|c| c.unique))
        .fold(None, |m: Option<f64>, d| Some(m.map_or(d, |m| m.max(d))));

    Ok(PerturbationReport {
        seed: options.seed,
        starts: options.n_starts,
        deltas,
        directions,
        base_certified,
        exploratory: !base_certified,
        base_unique: base.unique,
        cells,
        max_unique_delta,
        base_state,
    })
}

fn run_cell(
    spec: &SystemSpec,
    direction: &PerturbationDirection,
    delta: f64,
    options: &SweepOptions,
    base: &SystemState,
) -> Result<SweepCell> {
    let mut cell = SweepCell {
        direction_id: direction.id,
        delta,
        verdict: CellVerdict::Inconclusive,
        unique: false,
        distance: f64::NAN,
        converged: 0,
        clusters: 0,
        note: None,
    };
    let perturbed = match perturb_spec(spec, direction, delta) {
        Ok(p) => p,
        Err(Error::InvalidPerturbation(msg)) => {
            cell.verdict = CellVerdict::InvalidPerturbation;
            cell.note = Some(msg);
            return Ok(cell);
        }
        Err(e) => return Err(e),
    };
    let ms = &options.multi_start;
    let bounds = default_bounds(&perturbed, &ms.logistic)?;
    let report = multi_start_with(&perturbed, options.n_starts, options.seed, ms, &bounds)?;
    cell.converged = report.converged;
    cell.clusters = report.clusters.len();
    cell.unique = report.unique;
    cell.verdict = if report.unique {
        CellVerdict::Unique
    } else if report.inconclusive {
        CellVerdict::Inconclusive
    } else {
        CellVerdict::Multiple
    };
    if let Some(c) = report.clusters.first() {
        cell.distance = c.representative.sup_distance(base);
    }
    Ok(cell)
}

//! Sufficient conditions for existence and uniqueness of the coexistence
//! state, each reported with a numeric margin.
//!
//! Every entry has `margin = lhs - rhs` and passes iff `margin > 0`. Entries
//! that cannot be evaluated carry NaN values, `applicable = false` and a note.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::functions::{competitor_index, others, slot_of, SystemSpec};
use crate::grid::ScalarField;
use crate::logistic::IterationControl;
use crate::spectral::{lambda1, principal_eigenpair};
use crate::system::{competition_field, default_bounds, Bounds, SystemState, EXTINCTION_LEVEL};

/// Tolerance for the exactness check `g_i(0) = 0`.
pub const G_ZERO_TOL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionEntry {
    pub id: String,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub pass: bool,
    pub applicable: bool,
    /// 1-based species number the entry refers to (the worst one for aggregates).
    pub species: Option<usize>,
    pub node: Option<usize>,
    pub coords: Option<Vec<f64>>,
    /// `lhs / rhs` at the worst node, for pointwise checks.
    pub ratio: Option<f64>,
    pub note: Option<String>,
}

impl ConditionEntry {
    pub fn new(id: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        let margin = lhs - rhs;
        ConditionEntry {
            id: id.into(),
            lhs,
            rhs,
            margin,
            pass: margin > 0.0,
            applicable: true,
            species: None,
            node: None,
            coords: None,
            ratio: None,
            note: None,
        }
    }

    pub fn inapplicable(id: impl Into<String>, note: impl Into<String>) -> Self {
        ConditionEntry {
            applicable: false,
            note: Some(note.into()),
            ..ConditionEntry::new(id, f64::NAN, f64::NAN)
        }
    }

    fn species(mut self, i: usize) -> Self {
        self.species = Some(i + 1);
        self
    }

    fn note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ConditionReport {
    pub entries: Vec<ConditionEntry>,
}

impl ConditionReport {
    pub fn get(&self, id: &str) -> Option<&ConditionEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    /// True iff every applicable entry passes.
    pub fn all_pass(&self) -> bool {
        self.entries.iter().filter(|e| e.applicable).all(|e| e.pass)
    }

    pub fn failures(&self) -> Vec<&ConditionEntry> {
        self.entries.iter().filter(|e| e.applicable && !e.pass).collect()
    }

    pub fn extend(&mut self, other: ConditionReport) {
        self.entries.extend(other.entries);
    }
}

/// Quantities shared by several checks: `λ₁` and the logistic bounds
/// `θ_{h_i - g_i(k_{-i})} <= u_i <= θ_{h_i}`.
#[derive(Debug, Clone)]
pub struct ConditionContext {
    pub lambda1: f64,
    pub bounds: Bounds,
}

impl ConditionContext {
    pub fn new(spec: &SystemSpec, control: &IterationControl) -> Result<Self> {
        Ok(ConditionContext {
            lambda1: lambda1(spec.grid())?,
            bounds: default_bounds(spec, control)?,
        })
    }

    fn theta(&self, i: usize) -> &[f64] {
        self.bounds.upper.values(i)
    }
}

/// Keeps the candidate with the smallest margin.
fn worst(id: &str, candidates: impl IntoIterator<Item = (f64, f64, usize)>) -> ConditionEntry {
    let mut best: Option<(f64, f64, usize)> = None;
    for c in candidates {
        if best.is_none_or(|b| c.0 - c.1 < b.0 - b.1) {
            best = Some(c);
        }
    }
    match best {
        Some((lhs, rhs, i)) => ConditionEntry::new(id, lhs, rhs).species(i),
        None => ConditionEntry::new(id, 1.0, 0.0).note("no constraint to check"),
    }
}

/// Lower bounds on `∂g_i/∂x_j` for every present competitor slot.
fn g_monotonicity(spec: &SystemSpec) -> Vec<(f64, f64, usize)> {
    let mut out = Vec::new();
    for (i, sp) in spec.species().iter().enumerate() {
        for slot in 0..sp.g.slots() {
            if !sp.g.is_absent(slot) {
                out.push((sp.g.inf_partial(slot), 0.0, i));
            }
        }
    }
    out
}

fn g_at_zero(spec: &SystemSpec) -> Vec<(f64, f64, usize)> {
    spec.species()
        .iter()
        .enumerate()
        .map(|(i, sp)| (G_ZERO_TOL, sp.g.eval(&vec![0.0; sp.g.slots()]).abs(), i))
        .collect()
}

pub fn check_hypotheses(spec: &SystemSpec) -> Result<ConditionReport> {
    let l1 = lambda1(spec.grid())?;
    Ok(hypotheses_with(spec, l1))
}

pub fn check_hypotheses_with(spec: &SystemSpec, ctx: &ConditionContext) -> ConditionReport {
    hypotheses_with(spec, ctx.lambda1)
}

fn hypotheses_with(spec: &SystemSpec, l1: f64) -> ConditionReport {
    let sp = spec.species();
    let h_decreasing: Vec<_> = sp
        .iter()
        .enumerate()
        .map(|(i, s)| (s.h.inf_neg_prime(), 0.0, i))
        .collect();
    let g_increasing = g_monotonicity(spec);
    let g_zero = g_at_zero(spec);
    let negative_beyond_root: Vec<_> = sp
        .iter()
        .enumerate()
        .map(|(i, s)| (-s.h.eval(s.h.working_max()), 0.0, i))
        .collect();
    let u4: Vec<_> = sp
        .iter()
        .enumerate()
        .map(|(i, s)| (s.h.eval(0.0), l1 + spec.competition_at_roots(i), i))
        .collect();
    let above_threshold: Vec<_> = sp.iter().enumerate().map(|(i, s)| (s.h.eval(0.0), l1, i)).collect();

    let entries = vec![
        ConditionEntry::new("U1", 1.0, 0.0).note("all growth and interaction families are C1 by construction"),
        worst("U2", h_decreasing.iter().chain(&g_increasing).copied())
            .note("min of inf(-h_i') and inf(dg_i/dx_j) over the working range"),
        worst("U3", g_zero.iter().copied()).note("lhs is the exactness tolerance, rhs is max |g_i(0)|"),
        worst("U4", u4.iter().copied()).note("h_i(0) against lambda_1 + g_i(k)"),
        worst("P1", h_decreasing.iter().copied()).note("inf(-h_i') over the working range"),
        worst(
            "P2",
            above_threshold.iter().chain(&g_increasing).chain(&g_zero).copied(),
        )
        .note("h_i(0) > lambda_1, g_i strictly increasing, g_i(0) = 0"),
        worst("P3", negative_beyond_root.iter().copied()).note("-h_i(U_max); h_i < 0 beyond k_i"),
    ];
    ConditionReport { entries }
}

/// `K = sup_{Ω, i≠j} θ_{h_j} / θ_{h_i - g_i(k_{-i})}`.
pub fn compute_k(spec: &SystemSpec) -> Result<f64> {
    let ctx = ConditionContext::new(spec, &IterationControl::default())?;
    compute_k_with(&ctx)
}

pub fn compute_k_with(ctx: &ConditionContext) -> Result<f64> {
    let n = ctx.bounds.lower.n_species();
    if let Some(i) = ctx.bounds.lower_positive.iter().position(|p| !p) {
        return Err(Error::KUndefined(format!(
            "lower bound of species {} has no positive solution",
            i + 1
        )));
    }
    let mut k = f64::NEG_INFINITY;
    for i in 0..n {
        let den = ctx.bounds.lower.values(i);
        for j in (0..n).filter(|&j| j != i) {
            for (num, d) in ctx.theta(j).iter().zip(den) {
                if !(*d > 0.0) {
                    return Err(Error::KUndefined(format!(
                        "lower bound of species {} vanishes at an interior node",
                        i + 1
                    )));
                }
                k = k.max(num / d);
            }
        }
    }
    Ok(k)
}

fn k_inequality(spec: &SystemSpec, k: f64, prefix: &str) -> ConditionReport {
    let n = spec.n_species();
    let sp = spec.species();
    let entries = (0..n)
        .map(|i| {
            let lhs = -2.0 * sp[i].h.sup_prime();
            let rhs: f64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| sp[i].g.sup_partial(slot_of(i, j)) + k * sp[j].g.sup_partial(slot_of(j, i)))
                .sum();
            let mut e = ConditionEntry::new(format!("{prefix}.{}", i + 1), lhs, rhs).species(i);
            e.note = Some(format!("K = {k}"));
            e
        })
        .collect();
    ConditionReport { entries }
}

pub fn check_thm11b(spec: &SystemSpec) -> Result<ConditionReport> {
    Ok(k_inequality(spec, compute_k(spec)?, "T11B"))
}

pub fn check_thm11b_with(spec: &SystemSpec, ctx: &ConditionContext) -> Result<ConditionReport> {
    Ok(k_inequality(spec, compute_k_with(ctx)?, "T11B"))
}

/// `q_i = g_i(θ_{h_1}, …, θ_{h_N})` with `θ_{h_i}` left out.
pub fn competition_potential(spec: &SystemSpec, ctx: &ConditionContext, i: usize) -> ScalarField {
    let q = competition_field(spec, ctx.bounds.upper.fields(), i);
    spec.grid().field(q).expect("potential lives on the spec grid")
}

fn potential_eigenvalue(spec: &SystemSpec, ctx: &ConditionContext, i: usize) -> Result<f64> {
    Ok(principal_eigenpair(spec.grid(), &competition_potential(spec, ctx, i))?.lambda)
}

pub fn check_thm31a(spec: &SystemSpec) -> Result<ConditionReport> {
    check_thm31a_with(spec, &ConditionContext::new(spec, &IterationControl::default())?)
}

pub fn check_thm31a_with(spec: &SystemSpec, ctx: &ConditionContext) -> Result<ConditionReport> {
    let n = spec.n_species();
    let mut entries = Vec::with_capacity(n);
    for i in 0..n {
        let id = format!("T31A.{}", i + 1);
        let vanished: Vec<usize> = (0..n)
            .filter(|&j| j != i && !ctx.bounds.upper_positive[j])
            .map(|j| j + 1)
            .collect();
        if !vanished.is_empty() {
            entries.push(
                ConditionEntry::inapplicable(id, format!("theta_h of species {vanished:?} is identically zero"))
                    .species(i),
            );
            continue;
        }
        let l = potential_eigenvalue(spec, ctx, i)?;
        entries.push(
            ConditionEntry::new(id, spec.species()[i].h.eval(0.0), l)
                .species(i)
                .note("h_i(0) against lambda_1(g_i(theta_h of the others))"),
        );
    }
    Ok(ConditionReport { entries })
}

/// Pointwise invertibility criterion at `state`, evaluated on interior nodes:
/// `2 inf(-h_i') u_i > Σ_j (sup ∂g_i/∂x_j u_i + sup ∂g_j/∂x_i u_j)`.
pub fn check_thm33_pointwise(spec: &SystemSpec, state: &SystemState) -> Result<ConditionReport> {
    if state.n_species() != spec.n_species() || state.grid() != spec.grid() {
        return Err(Error::invalid("state does not match the spec"));
    }
    let n = spec.n_species();
    let sp = spec.species();
    let grid = spec.grid();
    let mut entries = Vec::with_capacity(n);
    for i in 0..n {
        let c = 2.0 * sp[i].h.inf_neg_prime();
        let own: f64 = (0..n - 1).map(|s| sp[i].g.sup_partial(s)).sum();
        let back: Vec<(usize, f64)> = (0..n - 1)
            .map(|s| {
                let j = competitor_index(i, s);
                (j, sp[j].g.sup_partial(slot_of(j, i)))
            })
            .collect();
        let ui = state.values(i);
        let mut worst: Option<(usize, f64, f64)> = None;
        let mut min_ratio = f64::INFINITY;
        for k in 0..grid.len() {
            let lhs = c * ui[k];
            let rhs = own * ui[k] + back.iter().map(|(j, s)| s * state.values(*j)[k]).sum::<f64>();
            if worst.is_none_or(|(_, l, r)| lhs - rhs < l - r) {
                worst = Some((k, lhs, rhs));
            }
            let ratio = if rhs > 0.0 { lhs / rhs } else { f64::INFINITY };
            min_ratio = min_ratio.min(ratio);
        }
        let (k, lhs, rhs) = worst.expect("grid has nodes");
        let mut e = ConditionEntry::new(format!("T33.{}", i + 1), lhs, rhs).species(i);
        e.node = Some(k);
        e.coords = Some(grid.coords(k));
        e.ratio = Some(min_ratio);
        e.note = Some("worst interior node; ratio is the minimum of lhs/rhs over nodes".into());
        entries.push(e);
    }
    Ok(ConditionReport { entries })
}

pub fn check_cor34(spec: &SystemSpec) -> Result<ConditionReport> {
    check_cor34_with(spec, &ConditionContext::new(spec, &IterationControl::default())?)
}

/// Part (A) per species against `λ₁ + g_i(k_{-i})` and part (B), the
/// K-inequality. An undefined K fails every (B) entry.
pub fn check_cor34_with(spec: &SystemSpec, ctx: &ConditionContext) -> Result<ConditionReport> {
    let n = spec.n_species();
    let mut entries: Vec<ConditionEntry> = (0..n)
        .map(|i| {
            ConditionEntry::new(
                format!("C34A.{}", i + 1),
                spec.species()[i].h.eval(0.0),
                ctx.lambda1 + spec.competition_at_roots(i),
            )
            .species(i)
        })
        .collect();
    match compute_k_with(ctx) {
        Ok(k) => entries.extend(k_inequality(spec, k, "C34B").entries),
        Err(Error::KUndefined(msg)) => entries.extend((0..n).map(|i| ConditionEntry {
            applicable: true,
            ..ConditionEntry::inapplicable(format!("C34B.{}", i + 1), format!("K undefined: {msg}")).species(i)
        })),
        Err(e) => return Err(e),
    }
    Ok(ConditionReport { entries })
}

/// For every extinct species `j`: `lhs = λ₁(g_j(θ_h of the others))`,
/// `rhs = h_j(0)`. The necessary condition for extinction holds iff
/// `h_j(0) <= λ₁(q_j)`.
pub fn extinction_diagnostic(spec: &SystemSpec, state: &SystemState) -> Result<ConditionReport> {
    let extinct = state.extinct_species();
    if extinct.is_empty() {
        return Ok(ConditionReport {
            entries: vec![ConditionEntry::inapplicable(
                "T32",
                format!("no species below the extinction level {EXTINCTION_LEVEL:e}"),
            )],
        });
    }
    let ctx = ConditionContext::new(spec, &IterationControl::default())?;
    extinction_diagnostic_with(spec, state, &ctx)
}

pub fn extinction_diagnostic_with(
    spec: &SystemSpec,
    state: &SystemState,
    ctx: &ConditionContext,
) -> Result<ConditionReport> {
    let extinct = state.extinct_species();
    if extinct.is_empty() {
        return Ok(ConditionReport {
            entries: vec![ConditionEntry::inapplicable(
                "T32",
                format!("no species below the extinction level {EXTINCTION_LEVEL:e}"),
            )],
        });
    }
    let mut entries = Vec::new();
    for j in extinct {
        let l = potential_eigenvalue(spec, ctx, j)?;
        let h0 = spec.species()[j].h.eval(0.0);
        entries.push(
            ConditionEntry::new(format!("T32.{}", j + 1), l, h0)
                .species(j)
                .note("lambda_1(g_j(theta_h of the others)) against h_j(0); failure flags a spurious boundary state"),
        );
    }
    Ok(ConditionReport { entries })
}

/// `g_i(k_{-i})` for every species, for reports.
pub fn competition_at_roots(spec: &SystemSpec) -> Vec<f64> {
    let k = spec.roots();
    spec.species()
        .iter()
        .enumerate()
        .map(|(i, s)| s.g.eval(&others(&k, i)))
        .collect()
}

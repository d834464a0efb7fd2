//! Growth functions `h_i` and interaction functions `g_i`, with the
//! derivative bounds used by the sufficient-condition checks.
//!
//! All bounds are taken over a declared working range `[0, U_max]` (or a
//! working box for `g`), never over the whole real line.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Number of sub-intervals in every dense scan over a working range.
pub const SCAN_INTERVALS: usize = 10_000;

/// Tolerance on `|h(k)|` for a located root.
pub const ROOT_TOL: f64 = 1e-12;

/// Minimum over `[lo, hi]` of a sampled function, lowered by the largest jump
/// between adjacent samples so the result bounds the true infimum.
pub fn scan_lower_bound(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let (min, _, slack) = scan(f, lo, hi);
    min - slack
}

/// Maximum over `[lo, hi]` raised by the largest jump between adjacent samples.
pub fn scan_upper_bound(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let (_, max, slack) = scan(f, lo, hi);
    max + slack
}

fn scan(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> (f64, f64, f64) {
    let step = (hi - lo) / SCAN_INTERVALS as f64;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut slack: f64 = 0.0;
    let mut prev: Option<f64> = None;
    for i in 0..=SCAN_INTERVALS {
        let u = if i == SCAN_INTERVALS { hi } else { lo + step * i as f64 };
        let v = f(u);
        min = min.min(v);
        max = max.max(v);
        if let Some(p) = prev {
            slack = slack.max((v - p).abs());
        }
        prev = Some(v);
    }
    (min, max, slack)
}

/// Bisection for a sign change of `f` on `[lo, hi]` with `f(lo) > 0 > f(hi)`.
pub(crate) fn bisect_decreasing(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = f(mid);
        if v == 0.0 {
            return mid;
        }
        if v > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if f(lo).abs() <= f(hi).abs() {
        lo
    } else {
        hi
    }
}

/// Shape-preserving (Fritsch–Carlson) cubic Hermite interpolant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::invalid("tabulated function needs at least two points"));
        }
        let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
        if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(Error::invalid("tabulated points must be finite"));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("tabulated abscissae must be strictly increasing"));
        }
        let n = xs.len();
        let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|k| (ys[k + 1] - ys[k]) / h[k]).collect();
        let mut d = vec![0.0; n];
        if n == 2 {
            d[0] = delta[0];
            d[1] = delta[0];
        } else {
            for k in 1..n - 1 {
                if delta[k - 1] * delta[k] > 0.0 {
                    let w1 = 2.0 * h[k] + h[k - 1];
                    let w2 = h[k] + 2.0 * h[k - 1];
                    d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
                }
            }
            d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
            d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        }
        Ok(MonotoneCubic { xs, ys, slopes: d })
    }

    pub fn points(&self) -> Vec<(f64, f64)> {
        self.xs.iter().copied().zip(self.ys.iter().copied()).collect()
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.xs[0], *self.xs.last().unwrap())
    }

    fn segment(&self, x: f64) -> usize {
        match self.xs.binary_search_by(|p| p.partial_cmp(&x).unwrap()) {
            Ok(i) => i.min(self.xs.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.xs.len() - 2),
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        let k = self.segment(x);
        let h = self.xs[k + 1] - self.xs[k];
        let t = (x - self.xs[k]) / h;
        let (t2, t3) = (t * t, t * t * t);
        (2.0 * t3 - 3.0 * t2 + 1.0) * self.ys[k]
            + (t3 - 2.0 * t2 + t) * h * self.slopes[k]
            + (-2.0 * t3 + 3.0 * t2) * self.ys[k + 1]
            + (t3 - t2) * h * self.slopes[k + 1]
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let k = self.segment(x);
        let h = self.xs[k + 1] - self.xs[k];
        let t = (x - self.xs[k]) / h;
        let t2 = t * t;
        (6.0 * t2 - 6.0 * t) / h * self.ys[k]
            + (3.0 * t2 - 4.0 * t + 1.0) * self.slopes[k]
            + (-6.0 * t2 + 6.0 * t) / h * self.ys[k + 1]
            + (3.0 * t2 - 2.0 * t) * self.slopes[k + 1]
    }
}

fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if d * d0 <= 0.0 {
        0.0
    } else if d0 * d1 <= 0.0 && d.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        d
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum GrowthFamily {
    /// `h(u) = a - b u`
    Affine { a: f64, b: f64 },
    /// `h(u) = a - b tanh(u / s)`
    Saturating { a: f64, b: f64, s: f64 },
    /// Monotone cubic through sample points.
    Tabulated { table: MonotoneCubic },
}

impl GrowthFamily {
    pub fn name(&self) -> &'static str {
        match self {
            GrowthFamily::Affine { .. } => "affine",
            GrowthFamily::Saturating { .. } => "saturating",
            GrowthFamily::Tabulated { .. } => "tabulated",
        }
    }

    fn raw_value(&self, u: f64) -> f64 {
        match self {
            GrowthFamily::Affine { a, b } => a - b * u,
            GrowthFamily::Saturating { a, b, s } => a - b * (u / s).tanh(),
            GrowthFamily::Tabulated { table } => table.value(u),
        }
    }

    fn raw_derivative(&self, u: f64) -> f64 {
        match self {
            GrowthFamily::Affine { b, .. } => -b,
            GrowthFamily::Saturating { b, s, .. } => -(b / s) * sech2(u / s),
            GrowthFamily::Tabulated { table } => table.derivative(u),
        }
    }

    /// Upper end of the range the family is defined on, when it has one.
    fn domain_end(&self) -> Option<f64> {
        match self {
            GrowthFamily::Tabulated { table } => Some(table.domain().1),
            _ => None,
        }
    }

    /// Root of the family without reference to a working range.
    pub fn natural_root(&self) -> Option<f64> {
        match *self {
            GrowthFamily::Affine { a, b } => (a > 0.0 && b > 0.0).then(|| a / b),
            GrowthFamily::Saturating { a, b, s } => (a > 0.0 && b > a && s > 0.0).then(|| s * (a / b).atanh()),
            GrowthFamily::Tabulated { ref table } => {
                let (lo, hi) = table.domain();
                let (v0, v1) = (table.value(lo), table.value(hi));
                (v0 > 0.0 && v1 < 0.0).then(|| bisect_decreasing(|u| table.value(u), lo, hi))
            }
        }
    }
}

fn sech2(z: f64) -> f64 {
    let c = z.cosh();
    1.0 / (c * c)
}

/// A decreasing growth rate `h` with a positive root, evaluated on `[0, U_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthFunction {
    family: GrowthFamily,
    working_max: f64,
}

impl GrowthFunction {
    pub fn new(family: GrowthFamily, working_max: f64) -> Result<Self> {
        match family {
            GrowthFamily::Affine { a, b } => {
                if !(a.is_finite() && b.is_finite()) {
                    return Err(Error::SpecViolation("affine parameters must be finite".into()));
                }
                if b <= 0.0 {
                    return Err(Error::SpecViolation(format!(
                        "affine h must be strictly decreasing (b = {b} <= 0)"
                    )));
                }
            }
            GrowthFamily::Saturating { a, b, s } => {
                if !(a.is_finite() && b.is_finite() && s.is_finite()) {
                    return Err(Error::SpecViolation("saturating parameters must be finite".into()));
                }
                if b <= 0.0 || s <= 0.0 {
                    return Err(Error::SpecViolation(format!(
                        "saturating h must be strictly decreasing (b = {b}, s = {s})"
                    )));
                }
            }
            GrowthFamily::Tabulated { ref table } => {
                let (lo, hi) = table.domain();
                if lo != 0.0 {
                    return Err(Error::SpecViolation("tabulated h must start at u = 0".into()));
                }
                if working_max > hi {
                    return Err(Error::SpecViolation(format!(
                        "working range {working_max} exceeds table end {hi}"
                    )));
                }
            }
        }
        if !(working_max > 0.0) || !working_max.is_finite() {
            return Err(Error::SpecViolation(format!(
                "working range bound must be positive, got {working_max}"
            )));
        }
        let h = GrowthFunction { family, working_max };
        if !(h.eval(0.0) > 0.0) {
            return Err(Error::SpecViolation(format!("h(0) = {} must be positive", h.eval(0.0))));
        }
        if !(h.eval(working_max) < 0.0) {
            return Err(Error::SpecViolation(format!(
                "h has no root in (0, {working_max}]: h(U_max) = {}",
                h.eval(working_max)
            )));
        }
        if matches!(h.family, GrowthFamily::Tabulated { .. }) {
            let worst = scan(|u| h.eval_prime(u), 0.0, working_max).1;
            if !(worst < 0.0) {
                return Err(Error::SpecViolation(format!(
                    "tabulated h is not strictly decreasing (max h' = {worst})"
                )));
            }
        }
        Ok(h)
    }

    /// Uses twice the natural root as working range, capped at the table end.
    pub fn with_default_range(family: GrowthFamily) -> Result<Self> {
        let k = family
            .natural_root()
            .ok_or_else(|| Error::SpecViolation(format!("{} growth function has no positive root", family.name())))?;
        let mut umax = 2.0 * k;
        if let Some(end) = family.domain_end() {
            umax = umax.min(end);
        }
        GrowthFunction::new(family, umax)
    }

    pub fn affine(a: f64, b: f64, working_max: f64) -> Result<Self> {
        GrowthFunction::new(GrowthFamily::Affine { a, b }, working_max)
    }

    pub fn saturating(a: f64, b: f64, s: f64, working_max: f64) -> Result<Self> {
        GrowthFunction::new(GrowthFamily::Saturating { a, b, s }, working_max)
    }

    pub fn tabulated(points: &[(f64, f64)], working_max: f64) -> Result<Self> {
        GrowthFunction::new(
            GrowthFamily::Tabulated {
                table: MonotoneCubic::new(points)?,
            },
            working_max,
        )
    }

    pub fn family(&self) -> &GrowthFamily {
        &self.family
    }

    pub fn working_max(&self) -> f64 {
        self.working_max
    }

    /// Same family with a different working range.
    pub fn with_working_max(&self, working_max: f64) -> Result<Self> {
        GrowthFunction::new(self.family.clone(), working_max)
    }

    fn clamp(&self, u: f64) -> f64 {
        u.clamp(0.0, self.working_max)
    }

    /// `h(u)` with `u` clamped into the working range.
    pub fn eval(&self, u: f64) -> f64 {
        self.family.raw_value(self.clamp(u))
    }

    /// `h'(u)` with `u` clamped into the working range.
    pub fn eval_prime(&self, u: f64) -> f64 {
        self.family.raw_derivative(self.clamp(u))
    }

    /// Root `k` of `h` in `(0, U_max)`, by bisection.
    pub fn root(&self) -> Result<f64> {
        self.level_crossing(0.0)
            .ok_or_else(|| Error::SpecViolation(format!("h has no sign change on [0, {}]", self.working_max)))
    }

    /// Point where `h` crosses `level`, if `h(0) > level > h(U_max)`.
    pub fn level_crossing(&self, level: f64) -> Option<f64> {
        if !(self.eval(0.0) > level) || !(self.eval(self.working_max) < level) {
            return None;
        }
        Some(bisect_decreasing(|u| self.eval(u) - level, 0.0, self.working_max))
    }

    /// Certified lower bound on `inf(-h')` over the working range.
    pub fn inf_neg_prime(&self) -> f64 {
        match self.family {
            GrowthFamily::Affine { b, .. } => b,
            _ => scan_lower_bound(|u| -self.eval_prime(u), 0.0, self.working_max),
        }
    }

    /// Certified upper bound on `sup(h')` over the working range.
    pub fn sup_prime(&self) -> f64 {
        match self.family {
            GrowthFamily::Affine { b, .. } => -b,
            _ => scan_upper_bound(|u| self.eval_prime(u), 0.0, self.working_max),
        }
    }

    /// Certified upper bound on `sup |h'|` over the working range.
    pub fn sup_abs_prime(&self) -> f64 {
        match self.family {
            GrowthFamily::Affine { b, .. } => b,
            _ => scan_upper_bound(|u| self.eval_prime(u).abs(), 0.0, self.working_max),
        }
    }

    /// Number of parameters a perturbation direction acts on.
    pub fn perturbation_dim(&self) -> usize {
        match self.family {
            GrowthFamily::Saturating { .. } => 3,
            _ => 2,
        }
    }

    /// Applies parameter offsets: `(Δa, Δb[, Δs])`. Tabulated samples are
    /// shifted by `Δa - Δb·u`.
    pub fn perturbed(&self, offsets: &[f64]) -> Result<Self> {
        if offsets.len() != self.perturbation_dim() {
            return Err(Error::InvalidPerturbation(format!(
                "{} growth function takes {} offsets, got {}",
                self.family.name(),
                self.perturbation_dim(),
                offsets.len()
            )));
        }
        let family = match &self.family {
            GrowthFamily::Affine { a, b } => GrowthFamily::Affine {
                a: a + offsets[0],
                b: b + offsets[1],
            },
            GrowthFamily::Saturating { a, b, s } => GrowthFamily::Saturating {
                a: a + offsets[0],
                b: b + offsets[1],
                s: s + offsets[2],
            },
            GrowthFamily::Tabulated { table } => {
                let pts: Vec<(f64, f64)> = table
                    .points()
                    .into_iter()
                    .map(|(u, v)| (u, v + offsets[0] - offsets[1] * u))
                    .collect();
                GrowthFamily::Tabulated {
                    table: MonotoneCubic::new(&pts).map_err(|e| Error::InvalidPerturbation(e.to_string()))?,
                }
            }
        };
        GrowthFunction::new(family, self.working_max).map_err(|e| Error::InvalidPerturbation(e.to_string()))
    }

    /// Derivative of `(h, h')` at `u` with respect to the parameters, along `offsets`.
    pub fn tangent(&self, offsets: &[f64], u: f64) -> (f64, f64) {
        let u = self.clamp(u);
        match self.family {
            GrowthFamily::Affine { .. } | GrowthFamily::Tabulated { .. } => (offsets[0] - offsets[1] * u, -offsets[1]),
            GrowthFamily::Saturating { b, s, .. } => {
                let z = u / s;
                let (t, sh) = (z.tanh(), sech2(z));
                let value = offsets[0] - offsets[1] * t + offsets[2] * b * u / (s * s) * sh;
                let deriv = -offsets[1] / s * sh + offsets[2] * b / (s * s) * sh * (1.0 - 2.0 * z * t);
                (value, deriv)
            }
        }
    }

    /// C¹ norm of the parameter tangent along `offsets` over the working range.
    pub fn tangent_c1_norm(&self, offsets: &[f64]) -> f64 {
        match self.family {
            GrowthFamily::Affine { .. } | GrowthFamily::Tabulated { .. } => {
                let (da, db) = (offsets[0], offsets[1]);
                da.abs().max((da - db * self.working_max).abs()) + db.abs()
            }
            GrowthFamily::Saturating { .. } => {
                let (_, v, _) = scan(|u| self.tangent(offsets, u).0.abs(), 0.0, self.working_max);
                let (_, d, _) = scan(|u| self.tangent(offsets, u).1.abs(), 0.0, self.working_max);
                v + d
            }
        }
    }
}

/// `sup |h - h̄| + sup |h' - h̄'|` over the working range of `h`.
pub fn c1_distance(h: &GrowthFunction, h_bar: &GrowthFunction) -> f64 {
    if let (GrowthFamily::Affine { a, b }, GrowthFamily::Affine { a: a2, b: b2 }) = (&h.family, &h_bar.family) {
        let (da, db) = (a2 - a, b2 - b);
        let u = h.working_max;
        return da.abs().max((da - db * u).abs()) + db.abs();
    }
    let umax = h.working_max;
    let (_, v, _) = scan(|u| (h.eval(u) - h_bar.eval(u)).abs(), 0.0, umax);
    let (_, d, _) = scan(|u| (h.eval_prime(u) - h_bar.eval_prime(u)).abs(), 0.0, umax);
    v + d
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionFamily {
    /// `g(x) = Σ c_j x_j`
    Linear,
    /// `g(x) = Σ c_j x_j / (1 + d_j x_j)`
    SaturatingLinear,
}

/// Competition pressure `g_i` of the other species on species `i`.
///
/// Slot `j` refers to the `j`-th competitor in species order with `i` removed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionFunction {
    family: InteractionFamily,
    coeffs: Vec<f64>,
    saturation: Vec<f64>,
    absent: Vec<bool>,
    working_box: Vec<f64>,
}

impl InteractionFunction {
    pub fn linear(coeffs: Vec<f64>) -> Result<Self> {
        let n = coeffs.len();
        InteractionFunction::new(InteractionFamily::Linear, coeffs, vec![0.0; n], vec![false; n])
    }

    pub fn saturating_linear(coeffs: Vec<f64>, saturation: Vec<f64>) -> Result<Self> {
        let n = coeffs.len();
        InteractionFunction::new(InteractionFamily::SaturatingLinear, coeffs, saturation, vec![false; n])
    }

    /// No interaction with any of `slots` competitors.
    pub fn absent(slots: usize) -> Self {
        InteractionFunction {
            family: InteractionFamily::Linear,
            coeffs: vec![0.0; slots],
            saturation: vec![0.0; slots],
            absent: vec![true; slots],
            working_box: vec![f64::INFINITY; slots],
        }
    }

    pub fn new(family: InteractionFamily, coeffs: Vec<f64>, saturation: Vec<f64>, absent: Vec<bool>) -> Result<Self> {
        let n = coeffs.len();
        if saturation.len() != n || absent.len() != n {
            return Err(Error::SpecViolation(
                "interaction coefficient, saturation and absence lists differ in length".into(),
            ));
        }
        if coeffs.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::SpecViolation(
                "interaction coefficients must be finite and >= 0".into(),
            ));
        }
        if saturation.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::SpecViolation(
                "saturation constants must be finite and >= 0".into(),
            ));
        }
        if family == InteractionFamily::Linear && saturation.iter().any(|d| *d != 0.0) {
            return Err(Error::SpecViolation(
                "linear interaction takes no saturation constants".into(),
            ));
        }
        for (j, (&c, &gone)) in coeffs.iter().zip(&absent).enumerate() {
            if gone && c != 0.0 {
                return Err(Error::SpecViolation(format!(
                    "competitor slot {} declared absent but has coefficient {c}",
                    j + 1
                )));
            }
        }
        Ok(InteractionFunction {
            family,
            coeffs,
            saturation,
            absent,
            working_box: vec![f64::INFINITY; n],
        })
    }

    pub fn family(&self) -> InteractionFamily {
        self.family
    }

    pub fn slots(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn saturation(&self) -> &[f64] {
        &self.saturation
    }

    pub fn is_absent(&self, j: usize) -> bool {
        self.absent[j]
    }

    pub fn working_box(&self) -> &[f64] {
        &self.working_box
    }

    pub(crate) fn set_working_box(&mut self, bounds: Vec<f64>) {
        debug_assert_eq!(bounds.len(), self.coeffs.len());
        self.working_box = bounds;
    }

    /// Coefficients multiplied by `s` (for competition-strength scans).
    pub fn scaled(&self, s: f64) -> Result<Self> {
        let mut g = InteractionFunction::new(
            self.family,
            self.coeffs.iter().map(|c| c * s).collect(),
            self.saturation.clone(),
            self.absent.clone(),
        )?;
        g.working_box = self.working_box.clone();
        Ok(g)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.coeffs.len());
        match self.family {
            InteractionFamily::Linear => self.coeffs.iter().zip(x).map(|(c, v)| c * v).sum(),
            InteractionFamily::SaturatingLinear => self
                .coeffs
                .iter()
                .zip(&self.saturation)
                .zip(x)
                .map(|((c, d), v)| {
                    let v = v.max(0.0);
                    c * v / (1.0 + d * v)
                })
                .sum(),
        }
    }

    /// `∂g/∂x_j` at `x`.
    pub fn partial(&self, j: usize, x: &[f64]) -> f64 {
        match self.family {
            InteractionFamily::Linear => self.coeffs[j],
            InteractionFamily::SaturatingLinear => {
                let v = x[j].max(0.0);
                let den = 1.0 + self.saturation[j] * v;
                self.coeffs[j] / (den * den)
            }
        }
    }

    /// `sup ∂g/∂x_j` over the working box (attained at `x_j = 0` for both families).
    pub fn sup_partial(&self, j: usize) -> f64 {
        self.coeffs[j]
    }

    /// `inf ∂g/∂x_j` over the working box.
    pub fn inf_partial(&self, j: usize) -> f64 {
        match self.family {
            InteractionFamily::Linear => self.coeffs[j],
            InteractionFamily::SaturatingLinear => {
                let top = self.working_box[j];
                if top.is_infinite() {
                    if self.saturation[j] > 0.0 {
                        0.0
                    } else {
                        self.coeffs[j]
                    }
                } else {
                    let den = 1.0 + self.saturation[j] * top;
                    self.coeffs[j] / (den * den)
                }
            }
        }
    }
}

/// One competing species: growth, interaction and the root of its growth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Species {
    pub h: GrowthFunction,
    pub g: InteractionFunction,
    pub k: f64,
}

/// Full problem instance: domain plus `N >= 2` species.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    grid: Grid,
    species: Vec<Species>,
}

impl SystemSpec {
    /// Builds a spec, locating every root `k_i` and fixing the working box of
    /// each `g_i` from the competitors' working ranges.
    pub fn new(grid: Grid, pairs: Vec<(GrowthFunction, InteractionFunction)>) -> Result<Self> {
        let n = pairs.len();
        if n < 2 {
            return Err(Error::SpecViolation(format!("need at least 2 species, got {n}")));
        }
        let ranges: Vec<f64> = pairs.iter().map(|(h, _)| h.working_max()).collect();
        let mut species = Vec::with_capacity(n);
        for (i, (h, mut g)) in pairs.into_iter().enumerate() {
            if g.slots() != n - 1 {
                return Err(Error::SpecViolation(format!(
                    "species {}: interaction has {} competitor slots, expected {}",
                    i + 1,
                    g.slots(),
                    n - 1
                )));
            }
            g.set_working_box(others(&ranges, i));
            let k = h.root()?;
            species.push(Species { h, g, k });
        }
        Ok(SystemSpec { grid, species })
    }

    /// Replaces the growth functions, recomputing roots.
    pub fn with_growth(&self, growth: Vec<GrowthFunction>) -> Result<Self> {
        if growth.len() != self.species.len() {
            return Err(Error::invalid("growth function count does not match species count"));
        }
        let pairs = growth
            .into_iter()
            .zip(&self.species)
            .map(|(h, sp)| (h, sp.g.clone()))
            .collect();
        SystemSpec::new(self.grid.clone(), pairs)
    }

    pub fn with_grid(&self, grid: Grid) -> Self {
        SystemSpec {
            grid,
            species: self.species.clone(),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn species(&self) -> &[Species] {
        &self.species
    }

    pub fn n_species(&self) -> usize {
        self.species.len()
    }

    pub fn roots(&self) -> Vec<f64> {
        self.species.iter().map(|s| s.k).collect()
    }

    /// `g_i(k_1, …, k_{i-1}, k_{i+1}, …, k_N)`.
    pub fn competition_at_roots(&self, i: usize) -> f64 {
        self.species[i].g.eval(&others(&self.roots(), i))
    }

    /// Checks the invariants of the instance.
    pub fn validate(&self) -> Result<()> {
        let n = self.species.len();
        if n < 2 {
            return Err(Error::SpecViolation("need at least 2 species".into()));
        }
        for (i, sp) in self.species.iter().enumerate() {
            if sp.g.slots() != n - 1 {
                return Err(Error::SpecViolation(format!("species {}: wrong slot count", i + 1)));
            }
            let root = sp.h.root()?;
            if (root - sp.k).abs() > 1e-10 {
                return Err(Error::SpecViolation(format!(
                    "species {}: k = {} does not match root {root}",
                    i + 1,
                    sp.k
                )));
            }
        }
        Ok(())
    }
}

/// `values` with entry `i` removed.
pub fn others(values: &[f64], i: usize) -> Vec<f64> {
    values
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(_, v)| *v)
        .collect()
}

/// Index into the full species list of competitor slot `slot` of species `i`.
pub fn competitor_index(i: usize, slot: usize) -> usize {
    if slot < i {
        slot
    } else {
        slot + 1
    }
}

/// Competitor slot of species `j` in the interaction of species `i` (`j != i`).
pub fn slot_of(i: usize, j: usize) -> usize {
    debug_assert_ne!(i, j);
    if j < i {
        j
    } else {
        j - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn bisection_oracle(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let m = 0.5 * (lo + hi);
            if f(m) > 0.0 {
                lo = m
            } else {
                hi = m
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn affine_values_and_roots() {
        let h = GrowthFunction::affine(12.0, 1.0, 24.0).unwrap();
        assert_eq!(h.eval(0.0), 12.0);
        assert_eq!(h.eval(12.0), 0.0);
        assert_eq!(h.eval(-3.0), 12.0);
        assert_eq!(h.eval(100.0), -12.0);
        assert_relative_eq!(
            GrowthFunction::affine(5.0, 1.0, 10.0).unwrap().root().unwrap(),
            5.0,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            GrowthFunction::affine(12.0, 2.0, 12.0).unwrap().root().unwrap(),
            6.0,
            epsilon = 1e-12
        );
        assert_eq!(h.inf_neg_prime(), 1.0);
        assert_eq!(h.sup_prime(), -1.0);
    }

    #[test]
    fn saturating_root_matches_bisection_oracle() {
        let h = GrowthFunction::saturating(3.0, 6.0, 1.0, 2.0).unwrap();
        let oracle = bisection_oracle(|u| 3.0 - 6.0 * u.tanh(), 0.0, 2.0);
        let k = h.root().unwrap();
        assert!((k - oracle).abs() < 1e-12);
        assert!((k - 0.5f64.atanh()).abs() < 1e-12);
        assert!(h.eval(k).abs() <= ROOT_TOL);
        assert!((k - 0.5493).abs() < 1e-4);
    }

    #[test]
    fn saturating_inf_neg_prime_matches_scan_oracle() {
        let h = GrowthFunction::saturating(3.0, 6.0, 1.0, 2.0).unwrap();
        // -h'(u) = 6 sech²(u) decreases on [0, 2]
        let oracle = (0..=100_000)
            .map(|i| {
                let u = 2.0 * i as f64 / 100_000.0;
                6.0 / u.cosh().powi(2)
            })
            .fold(f64::INFINITY, f64::min);
        let bound = h.inf_neg_prime();
        assert!(bound <= oracle);
        assert!((bound - oracle).abs() < 1e-3);
        assert!((oracle - 0.4239).abs() < 1e-4);
        assert!(h.sup_prime() >= -oracle);
    }

    #[test]
    fn growth_rejects_invalid() {
        assert!(matches!(
            GrowthFunction::affine(12.0, 0.0, 24.0),
            Err(Error::SpecViolation(_))
        ));
        assert!(matches!(
            GrowthFunction::affine(-1.0, 1.0, 24.0),
            Err(Error::SpecViolation(_))
        ));
        // root beyond the working range
        assert!(matches!(
            GrowthFunction::affine(12.0, 1.0, 10.0),
            Err(Error::SpecViolation(_))
        ));
        // saturating with a >= b never crosses zero
        assert!(GrowthFunction::with_default_range(GrowthFamily::Saturating { a: 3.0, b: 2.0, s: 1.0 }).is_err());
    }

    #[test]
    fn default_range_is_twice_root() {
        let h = GrowthFunction::with_default_range(GrowthFamily::Affine { a: 12.0, b: 1.0 }).unwrap();
        assert_eq!(h.working_max(), 24.0);
    }

    #[test]
    fn tabulated_is_monotone_and_c1() {
        let pts = [
            (0.0, 10.0),
            (1.0, 8.0),
            (2.0, 5.5),
            (4.0, -1.0),
            (6.0, -8.0),
            (8.0, -16.0),
        ];
        let h = GrowthFunction::tabulated(&pts, 8.0).unwrap();
        for (u, v) in pts {
            assert_relative_eq!(h.eval(u), v, epsilon = 1e-12);
        }
        let mut prev = f64::INFINITY;
        for i in 0..=4000 {
            let u = 8.0 * i as f64 / 4000.0;
            let v = h.eval(u);
            assert!(v < prev);
            prev = v;
        }
        // derivative continuous across knots
        for &(u, _) in &pts[1..pts.len() - 1] {
            assert!((h.eval_prime(u - 1e-9) - h.eval_prime(u + 1e-9)).abs() < 1e-6);
        }
        // derivative matches finite differences
        let u = 3.3;
        let fd = (h.eval(u + 1e-6) - h.eval(u - 1e-6)) / 2e-6;
        assert!((fd - h.eval_prime(u)).abs() < 1e-6);
        let k = h.root().unwrap();
        assert!(k > 2.0 && k < 4.0);
    }

    #[test]
    fn tabulated_rejects_increasing_data() {
        let pts = [(0.0, 1.0), (1.0, 2.0), (2.0, -1.0)];
        assert!(GrowthFunction::tabulated(&pts, 2.0).is_err());
    }

    #[test]
    fn linear_partials_are_coefficients() {
        let g = InteractionFunction::linear(vec![0.2, 0.3]).unwrap();
        assert_eq!(g.sup_partial(1), 0.3);
        assert_eq!(g.partial(0, &[5.0, 1.0]), 0.2);
        assert_eq!(g.eval(&[0.0, 0.0]), 0.0);
        assert!((g.eval(&[1.0, 2.0]) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn saturating_linear_partials() {
        let mut g = InteractionFunction::saturating_linear(vec![1.0, 2.0], vec![0.5, 0.0]).unwrap();
        g.set_working_box(vec![4.0, 4.0]);
        assert_eq!(g.sup_partial(0), 1.0);
        assert_relative_eq!(g.inf_partial(0), 1.0 / 9.0);
        assert_eq!(g.inf_partial(1), 2.0);
        let x = [1.3, 0.7];
        let fd = (g.eval(&[1.3 + 1e-6, 0.7]) - g.eval(&[1.3 - 1e-6, 0.7])) / 2e-6;
        assert!((fd - g.partial(0, &x)).abs() < 1e-8);
    }

    #[test]
    fn interaction_rejects_negative() {
        assert!(InteractionFunction::linear(vec![-0.1]).is_err());
        assert!(InteractionFunction::new(InteractionFamily::Linear, vec![1.0], vec![0.0], vec![true]).is_err());
    }

    #[test]
    fn c1_distance_examples() {
        let h = GrowthFunction::affine(12.0, 1.0, 24.0).unwrap();
        assert_eq!(c1_distance(&h, &h), 0.0);
        let d = 0.01;
        let ha = GrowthFunction::affine(12.0 + d, 1.0, 24.0).unwrap();
        assert_relative_eq!(c1_distance(&h, &ha), d, epsilon = 1e-14);
        let hb = GrowthFunction::affine(12.0, 1.0 + d, 24.0).unwrap();
        assert_relative_eq!(c1_distance(&h, &hb), d * 24.0 + d, epsilon = 1e-12);
        let s = GrowthFunction::saturating(3.0, 6.0, 1.0, 2.0).unwrap();
        assert_eq!(c1_distance(&s, &s), 0.0);
    }

    #[test]
    fn tangent_matches_finite_difference() {
        let h = GrowthFunction::saturating(3.0, 6.0, 1.0, 2.0).unwrap();
        let dir = [0.3, -0.5, 0.2];
        let eps = 1e-6;
        let hp = h.perturbed(&dir.map(|d| d * eps)).unwrap();
        let hm = h.perturbed(&dir.map(|d| -d * eps)).unwrap();
        for u in [0.0, 0.4, 1.1, 2.0] {
            let (t, tp) = h.tangent(&dir, u);
            assert!(((hp.eval(u) - hm.eval(u)) / (2.0 * eps) - t).abs() < 1e-7);
            assert!(((hp.eval_prime(u) - hm.eval_prime(u)) / (2.0 * eps) - tp).abs() < 1e-7);
        }
    }

    #[test]
    fn spec_requires_matching_slots() {
        let grid = Grid::interval(1.0, 10).unwrap();
        let h = GrowthFunction::affine(12.0, 1.0, 24.0).unwrap();
        let g = InteractionFunction::linear(vec![0.1]).unwrap();
        let spec = SystemSpec::new(grid.clone(), vec![(h.clone(), g.clone()), (h.clone(), g.clone())]).unwrap();
        spec.validate().unwrap();
        assert_relative_eq!(spec.roots()[0], 12.0, epsilon = 1e-12);
        assert_relative_eq!(spec.competition_at_roots(0), 1.2, epsilon = 1e-12);
        assert!(SystemSpec::new(grid.clone(), vec![(h.clone(), g.clone())]).is_err());
        let g2 = InteractionFunction::linear(vec![0.1, 0.1]).unwrap();
        assert!(SystemSpec::new(grid, vec![(h.clone(), g2), (h, g)]).is_err());
    }

    #[test]
    fn slot_mapping_round_trips() {
        for i in 0..4 {
            for slot in 0..3 {
                let j = competitor_index(i, slot);
                assert_ne!(i, j);
                assert_eq!(slot_of(i, j), slot);
            }
        }
    }
}

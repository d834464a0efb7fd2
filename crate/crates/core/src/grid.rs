//! Uniform grids on intervals and rectangles with the zero-Dirichlet
//! five-point (three-point in 1D) Laplacian.
//!
//! Only interior nodes are stored. Node `k` of a rectangle with `nx × ny`
//! interior nodes sits at column `k % nx`, row `k / nx`, so storage order is
//! lexicographic in `(y, x)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{conjugate_gradient, BandCholesky, BandMatrix};

pub const MIN_INTERIOR_COUNT: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainKind {
    Interval,
    Rectangle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    kind: DomainKind,
    lengths: Vec<f64>,
    counts: Vec<usize>,
    spacing: Vec<f64>,
}

impl Grid {
    pub fn new(kind: DomainKind, lengths: &[f64], counts: &[usize]) -> Result<Grid> {
        let axes = match kind {
            DomainKind::Interval => 1,
            DomainKind::Rectangle => 2,
        };
        if lengths.len() != axes || counts.len() != axes {
            return Err(Error::invalid(format!(
                "{kind:?} needs {axes} length(s) and count(s), got {} and {}",
                lengths.len(),
                counts.len()
            )));
        }
        for &l in lengths {
            if !(l > 0.0) || !l.is_finite() {
                return Err(Error::invalid(format!("domain length must be positive, got {l}")));
            }
        }
        for &n in counts {
            if n < MIN_INTERIOR_COUNT {
                return Err(Error::invalid(format!(
                    "interior count must be at least {MIN_INTERIOR_COUNT}, got {n}"
                )));
            }
        }
        let spacing = lengths.iter().zip(counts).map(|(l, n)| l / (*n as f64 + 1.0)).collect();
        Ok(Grid {
            kind,
            lengths: lengths.to_vec(),
            counts: counts.to_vec(),
            spacing,
        })
    }

    pub fn interval(length: f64, n: usize) -> Result<Grid> {
        Grid::new(DomainKind::Interval, &[length], &[n])
    }

    pub fn rectangle(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Grid> {
        Grid::new(DomainKind::Rectangle, &[lx, ly], &[nx, ny])
    }

    pub fn kind(&self) -> DomainKind {
        self.kind
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn nx(&self) -> usize {
        self.counts[0]
    }

    pub fn ny(&self) -> usize {
        self.counts.get(1).copied().unwrap_or(1)
    }

    /// Number of interior nodes.
    pub fn len(&self) -> usize {
        self.nx() * self.ny()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Stencil offset between vertically adjacent nodes; the matrix bandwidth.
    pub fn bandwidth(&self) -> usize {
        match self.kind {
            DomainKind::Interval => 1,
            DomainKind::Rectangle => self.nx(),
        }
    }

    /// Physical coordinates of interior node `k`.
    pub fn coords(&self, k: usize) -> Vec<f64> {
        let i = k % self.nx();
        let x = (i as f64 + 1.0) * self.spacing[0];
        match self.kind {
            DomainKind::Interval => vec![x],
            DomainKind::Rectangle => {
                let j = k / self.nx();
                vec![x, (j as f64 + 1.0) * self.spacing[1]]
            }
        }
    }

    pub fn field(&self, values: Vec<f64>) -> Result<ScalarField> {
        ScalarField::new(self.clone(), values)
    }

    pub fn zeros(&self) -> ScalarField {
        ScalarField {
            grid: self.clone(),
            values: vec![0.0; self.len()],
        }
    }

    pub fn constant(&self, c: f64) -> ScalarField {
        ScalarField {
            grid: self.clone(),
            values: vec![c; self.len()],
        }
    }

    /// Samples `f` at the interior nodes.
    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> ScalarField {
        let values = (0..self.len()).map(|k| f(&self.coords(k))).collect();
        ScalarField {
            grid: self.clone(),
            values,
        }
    }

    fn inv_h2(&self) -> Vec<f64> {
        self.spacing.iter().map(|h| 1.0 / (h * h)).collect()
    }

    /// `Δ_h u` on raw interior values.
    pub fn laplacian_values(&self, u: &[f64]) -> Vec<f64> {
        assert_eq!(u.len(), self.len());
        let nx = self.nx();
        let ny = self.ny();
        let c = self.inv_h2();
        let mut out = vec![0.0; u.len()];
        for j in 0..ny {
            for i in 0..nx {
                let k = j * nx + i;
                let left = if i > 0 { u[k - 1] } else { 0.0 };
                let right = if i + 1 < nx { u[k + 1] } else { 0.0 };
                let mut v = (left - 2.0 * u[k] + right) * c[0];
                if self.kind == DomainKind::Rectangle {
                    let down = if j > 0 { u[k - nx] } else { 0.0 };
                    let up = if j + 1 < ny { u[k + nx] } else { 0.0 };
                    v += (down - 2.0 * u[k] + up) * c[1];
                }
                out[k] = v;
            }
        }
        out
    }

    /// Diagonal entry of `-Δ_h`.
    pub fn neg_laplacian_diagonal(&self) -> f64 {
        self.inv_h2().iter().map(|c| 2.0 * c).sum()
    }

    /// Adds `scale · (-Δ_h)` into a band matrix whose unknowns are interleaved as
    /// `node * stride + component`, for the given component.
    pub fn add_neg_laplacian(&self, m: &mut BandMatrix, stride: usize, component: usize, scale: f64) {
        let nx = self.nx();
        let ny = self.ny();
        let c = self.inv_h2();
        let diag = self.neg_laplacian_diagonal();
        let at = |k: usize| k * stride + component;
        for j in 0..ny {
            for i in 0..nx {
                let k = j * nx + i;
                m.add(at(k), at(k), scale * diag);
                if i > 0 {
                    m.add(at(k), at(k - 1), -scale * c[0]);
                }
                if i + 1 < nx {
                    m.add(at(k), at(k + 1), -scale * c[0]);
                }
                if self.kind == DomainKind::Rectangle {
                    if j > 0 {
                        m.add(at(k), at(k - nx), -scale * c[1]);
                    }
                    if j + 1 < ny {
                        m.add(at(k), at(k + nx), -scale * c[1]);
                    }
                }
            }
        }
    }

    /// Band matrix of `-Δ_h + diag(d)`.
    pub fn shifted_operator(&self, diagonal: &[f64]) -> BandMatrix {
        assert_eq!(diagonal.len(), self.len());
        let bw = self.bandwidth();
        let mut m = BandMatrix::zeros(self.len(), bw, bw);
        self.add_neg_laplacian(&mut m, 1, 0, 1.0);
        for (k, d) in diagonal.iter().enumerate() {
            m.add(k, k, *d);
        }
        m
    }

    pub fn apply_laplacian(&self, field: &ScalarField) -> Result<ScalarField> {
        self.check(field)?;
        Ok(ScalarField {
            grid: self.clone(),
            values: self.laplacian_values(&field.values),
        })
    }

    pub fn check(&self, field: &ScalarField) -> Result<()> {
        if field.grid != *self {
            return Err(Error::invalid("field does not belong to this grid"));
        }
        Ok(())
    }
}

/// Values on the interior nodes of a grid; boundary values are zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<ScalarField> {
        if values.len() != grid.len() {
            return Err(Error::invalid(format!(
                "field has {} values, grid has {} interior nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite field value at node {k}")));
        }
        Ok(ScalarField { grid, values })
    }

    pub(crate) fn from_parts(grid: &Grid, values: Vec<f64>) -> ScalarField {
        debug_assert_eq!(values.len(), grid.len());
        ScalarField {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn norm_inf(&self) -> f64 {
        crate::linalg::norm_inf(&self.values)
    }

    pub fn sup_distance(&self, other: &ScalarField) -> f64 {
        crate::linalg::sup_distance(&self.values, &other.values)
    }

    pub fn scaled(&self, s: f64) -> ScalarField {
        ScalarField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v * s).collect(),
        }
    }
}

/// How linear systems with `-Δ_h + diag` are solved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[derive(Default)]
pub enum LinearSolver {
    /// Banded Cholesky factorization, computed once and reused.
    #[default]
    Direct,
    /// Jacobi-preconditioned conjugate gradients.
    ConjugateGradient { rel_tol: f64, max_iter: usize },
}

impl LinearSolver {
    pub const DEFAULT_CG_TOL: f64 = 1e-12;

    pub fn cg() -> Self {
        LinearSolver::ConjugateGradient {
            rel_tol: Self::DEFAULT_CG_TOL,
            max_iter: 100_000,
        }
    }
}

/// Reusable solver for `(-Δ_h + diag(d)) w = rhs`.
#[derive(Debug, Clone)]
pub struct HelmholtzSolver {
    grid: Grid,
    diagonal: Vec<f64>,
    backend: Backend,
}

#[derive(Debug, Clone)]
enum Backend {
    Direct(BandCholesky),
    Cg { rel_tol: f64, max_iter: usize },
}

impl HelmholtzSolver {
    pub fn new(grid: &Grid, shift: f64, method: LinearSolver) -> Result<Self> {
        if !(shift >= 0.0) || !shift.is_finite() {
            return Err(Error::invalid(format!("shift must be non-negative, got {shift}")));
        }
        Self::with_diagonal(grid, vec![shift; grid.len()], method)
    }

    /// The diagonal must keep the operator positive definite.
    pub fn with_diagonal(grid: &Grid, diagonal: Vec<f64>, method: LinearSolver) -> Result<Self> {
        if diagonal.len() != grid.len() {
            return Err(Error::invalid("diagonal length does not match grid"));
        }
        let backend = match method {
            LinearSolver::Direct => Backend::Direct(BandCholesky::factor(&grid.shifted_operator(&diagonal))?),
            LinearSolver::ConjugateGradient { rel_tol, max_iter } => Backend::Cg { rel_tol, max_iter },
        };
        Ok(HelmholtzSolver {
            grid: grid.clone(),
            diagonal,
            backend,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Applies `-Δ_h + diag(d)`.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let mut out = self.grid.laplacian_values(u);
        for ((o, d), ui) in out.iter_mut().zip(&self.diagonal).zip(u) {
            *o = -*o + d * ui;
        }
        out
    }

    pub fn solve_values(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        assert_eq!(rhs.len(), self.grid.len());
        match &self.backend {
            Backend::Direct(ch) => Ok(ch.solve(rhs)),
            Backend::Cg { rel_tol, max_iter } => {
                let d0 = self.grid.neg_laplacian_diagonal();
                let diag: Vec<f64> = self.diagonal.iter().map(|d| d0 + d).collect();
                let out = conjugate_gradient(|x| self.apply(x), &diag, rhs, *rel_tol, *max_iter)?;
                Ok(out.solution)
            }
        }
    }

    pub fn solve(&self, rhs: &ScalarField) -> Result<ScalarField> {
        self.grid.check(rhs)?;
        Ok(ScalarField::from_parts(&self.grid, self.solve_values(&rhs.values)?))
    }
}

/// Solves `(-Δ_h + shift·I) w = rhs`.
pub fn solve_helmholtz(grid: &Grid, shift: f64, rhs: &ScalarField) -> Result<ScalarField> {
    solve_helmholtz_with(grid, shift, rhs, LinearSolver::Direct)
}

pub fn solve_helmholtz_with(grid: &Grid, shift: f64, rhs: &ScalarField, method: LinearSolver) -> Result<ScalarField> {
    grid.check(rhs)?;
    HelmholtzSolver::new(grid, shift, method)?.solve(rhs)
}

/// Formats a value with 17 significant digits.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

/// CSV dump of one or more fields on a grid: columns `x[,y]` then one column
/// per named field, rows in storage order.
pub fn fields_to_csv(grid: &Grid, columns: &[(&str, &[f64])]) -> String {
    let mut out = String::new();
    out.push('x');
    if grid.kind() == DomainKind::Rectangle {
        out.push_str(",y");
    }
    for (name, values) in columns {
        assert_eq!(values.len(), grid.len(), "column {name} has wrong length");
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for k in 0..grid.len() {
        let c = grid.coords(k);
        let row: Vec<String> = c
            .iter()
            .copied()
            .chain(columns.iter().map(|(_, v)| v[k]))
            .map(format_value)
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

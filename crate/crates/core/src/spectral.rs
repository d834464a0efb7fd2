//! Principal Dirichlet eigenpair of `-Δ_h + diag(q)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Grid, HelmholtzSolver, LinearSolver, ScalarField};
use crate::linalg::{dot, norm_inf};

const MAX_ITERATIONS: usize = 10_000;
const STAGNATION_STEPS: usize = 25;

#[derive(Debug, Clone, Serialize)]
pub struct EigenPair {
    pub lambda: f64,
    /// Positive eigenfunction scaled to `max φ = 1`.
    pub phi: ScalarField,
    /// `‖(-Δ_h + q)φ - λφ‖_∞`.
    pub residual: f64,
    pub iterations: usize,
}

/// Residual tolerance for an eigenpair: relative to the eigenvalue and
/// potential, floored at the rounding level of applying the operator.
pub fn eigen_tolerance(grid: &Grid, lambda: f64, q_norm: f64) -> f64 {
    let op_norm = 2.0 * grid.neg_laplacian_diagonal() + q_norm;
    (1e-10 * (lambda.abs() + q_norm + 1.0)).max(8.0 * f64::EPSILON * op_norm)
}

/// Smallest eigenvalue of `-Δ_h + diag(q)` and its eigenfunction, by inverse
/// power iteration shifted below `min q`.
pub fn principal_eigenpair(grid: &Grid, q: &ScalarField) -> Result<EigenPair> {
    grid.check(q)?;
    let qv = q.values();
    let shift = q.min() - 1.0;
    let shifted: Vec<f64> = qv.iter().map(|v| v - shift).collect();
    let solver = HelmholtzSolver::with_diagonal(grid, shifted, LinearSolver::Direct)?;
    let apply = |x: &[f64]| -> Vec<f64> {
        let mut out = grid.laplacian_values(x);
        for ((o, xi), qi) in out.iter_mut().zip(x).zip(qv) {
            *o = -*o + qi * xi;
        }
        out
    };
    let q_norm = q.norm_inf();

    let mut x = vec![1.0; grid.len()];
    let mut prev_lambda = f64::NAN;
    let mut flat_steps = 0;
    let mut residual = f64::INFINITY;
    for it in 1..=MAX_ITERATIONS {
        let y = solver.solve_values(&x)?;
        let scale = y
            .iter()
            .copied()
            .fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        if scale == 0.0 || !scale.is_finite() {
            return Err(Error::numerical("principal eigenpair (iterate collapsed)", residual));
        }
        x = y.iter().map(|v| v / scale).collect();
        let ax = apply(&x);
        let lambda = dot(&x, &ax) / dot(&x, &x);
        let r: Vec<f64> = ax.iter().zip(&x).map(|(a, xi)| a - lambda * xi).collect();
        residual = norm_inf(&r);
        if residual <= eigen_tolerance(grid, lambda, q_norm) {
            if let Some(k) = x.iter().position(|v| !(*v > 0.0)) {
                return Err(Error::numerical(
                    format!("principal eigenpair (eigenfunction not positive at node {k})"),
                    residual,
                ));
            }
            let phi = grid.field(x)?;
            return Ok(EigenPair {
                lambda,
                phi,
                residual,
                iterations: it,
            });
        }
        if (lambda - prev_lambda).abs() < 1e-14 * lambda.abs().max(1.0) {
            flat_steps += 1;
            if flat_steps >= STAGNATION_STEPS {
                return Err(Error::numerical("principal eigenpair (stagnated)", residual));
            }
        } else {
            flat_steps = 0;
        }
        prev_lambda = lambda;
    }
    Err(Error::numerical("principal eigenpair (iteration limit)", residual))
}

/// Smallest eigenvalue of `-Δ_h` with zero Dirichlet data.
pub fn lambda1(grid: &Grid) -> Result<f64> {
    Ok(principal_eigenpair(grid, &grid.zeros())?.lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn unit_interval_eigenvalue() {
        let g = Grid::interval(1.0, 200).unwrap();
        let pair = principal_eigenpair(&g, &g.zeros()).unwrap();
        assert!((pair.lambda - PI * PI).abs() < 1e-2);
        // exact discrete eigenvalue
        let h = g.spacing()[0];
        let exact = 4.0 / (h * h) * (PI * h / 2.0).sin().powi(2);
        assert!((pair.lambda - exact).abs() < 1e-9);
        assert!(pair.phi.min() > 0.0);
        assert!((pair.phi.max() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn lambda1_examples() {
        let a = lambda1(&Grid::interval(1.0, 50).unwrap()).unwrap();
        assert!((a - PI * PI).abs() < 4e-2);
        let b = lambda1(&Grid::interval(PI, 200).unwrap()).unwrap();
        assert!((b - 1.0).abs() < 1e-3);
    }

    #[test]
    fn refinement_is_second_order() {
        let e: Vec<f64> = [50, 100, 200]
            .iter()
            .map(|&n| (lambda1(&Grid::interval(1.0, n).unwrap()).unwrap() - PI * PI).abs())
            .collect();
        for w in e.windows(2) {
            let r = w[0] / w[1];
            assert!((3.5..=4.5).contains(&r), "ratio {r}");
        }
    }

    #[test]
    fn unit_square_eigenvalue() {
        let g = Grid::rectangle(1.0, 1.0, 64, 64).unwrap();
        let l = lambda1(&g).unwrap();
        assert!((l - 2.0 * PI * PI).abs() < 2e-2);
    }

    #[test]
    fn constant_potential_shifts() {
        let g = Grid::interval(1.0, 80).unwrap();
        let base = lambda1(&g).unwrap();
        for c in [-1.0, 0.5, 3.0] {
            let l = principal_eigenpair(&g, &g.constant(c)).unwrap().lambda;
            assert!((l - base - c).abs() < 1e-10);
        }
    }

    #[test]
    fn residual_within_contract() {
        let g = Grid::rectangle(2.0, 1.0, 20, 12).unwrap();
        let q = g.sample(|x| 3.0 * x[0] * x[1]);
        let p = principal_eigenpair(&g, &q).unwrap();
        assert!(p.residual <= 1e-10 * (p.lambda.abs() + q.norm_inf() + 1.0));
        assert!(p.phi.min() > 0.0);
    }
}

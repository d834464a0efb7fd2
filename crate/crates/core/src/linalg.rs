//! Banded direct factorizations and a preconditioned conjugate-gradient solver.
//!
//! Every operator in this crate is a finite-difference stencil on a uniform
//! grid, so with lexicographic node ordering (and species interleaved per
//! node for the coupled system) the matrices are banded with bandwidth
//! `nx * n_species`. Direct banded factorizations are exact to rounding and
//! can be reused across the many solves of a monotone or Newton iteration.

use crate::error::{Error, Result};

/// Square matrix stored by diagonals: row `i` holds columns `i - kl ..= i + ku`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        BandMatrix {
            n,
            kl,
            ku,
            data: vec![0.0; n * (kl + ku + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn lower_bandwidth(&self) -> usize {
        self.kl
    }

    pub fn upper_bandwidth(&self) -> usize {
        self.ku
    }

    fn width(&self) -> usize {
        self.kl + self.ku + 1
    }

    fn in_band(&self, i: usize, j: usize) -> bool {
        j + self.kl >= i && j <= i + self.ku
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i >= self.n || j >= self.n || !self.in_band(i, j) {
            return 0.0;
        }
        self.data[i * self.width() + (j + self.kl - i)]
    }

    /// Adds `value` at `(i, j)`. Panics when the entry lies outside the band.
    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        assert!(
            i < self.n && j < self.n && self.in_band(i, j),
            "entry ({i}, {j}) outside band"
        );
        let w = self.width();
        self.data[i * w + (j + self.kl - i)] += value;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let w = self.width();
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.data[i * w + (j + self.kl - i)] * x[j]).sum()
            })
            .collect()
    }

    pub fn transpose_matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let w = self.width();
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            for j in lo..=hi {
                y[j] += self.data[i * w + (j + self.kl - i)] * x[i];
            }
        }
        y
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        self.data
            .chunks(self.width())
            .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// Cholesky factor `A = L Lᵀ` of a symmetric positive definite band matrix.
#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    p: usize,
    // row i holds L[i][i-p ..= i]
    l: Vec<f64>,
}

impl BandCholesky {
    /// Factors the lower triangle of `a`; the upper triangle is ignored.
    pub fn factor(a: &BandMatrix) -> Result<Self> {
        let n = a.n;
        let p = a.kl;
        let w = p + 1;
        let mut l = vec![0.0; n * w];
        for i in 0..n {
            let lo = i.saturating_sub(p);
            for j in lo..=i {
                let mut s = a.get(i, j);
                let klo = lo.max(j.saturating_sub(p));
                for k in klo..j {
                    s -= l[i * w + (k + p - i)] * l[j * w + (k + p - j)];
                }
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::numerical(
                            format!("Cholesky factorization (pivot {i} not positive)"),
                            s,
                        ));
                    }
                    l[i * w + p] = s.sqrt();
                } else {
                    l[i * w + (j + p - i)] = s / l[j * w + p];
                }
            }
        }
        Ok(BandCholesky { n, p, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let (n, p) = (self.n, self.p);
        let w = p + 1;
        let mut y = b.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(p);
            let mut s = y[i];
            for k in lo..i {
                s -= self.l[i * w + (k + p - i)] * y[k];
            }
            y[i] = s / self.l[i * w + p];
        }
        for i in (0..n).rev() {
            let hi = (i + p).min(n - 1);
            let mut s = y[i];
            for k in i + 1..=hi {
                s -= self.l[k * w + (i + p - k)] * y[k];
            }
            y[i] = s / self.l[i * w + p];
        }
        y
    }
}

/// LU factorization with partial pivoting of a general band matrix,
/// following the row-interchange scheme of LAPACK's `gbtrf`.
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    // upper bandwidth of U after fill-in: ku + kl
    ku_fill: usize,
    // row i holds U[i][i - kl ..= i + ku_fill] (left part unused after elimination)
    u: Vec<f64>,
    // multipliers: l[k * kl + (r - 1)] eliminates row k + r at step k
    l: Vec<f64>,
    piv: Vec<usize>,
}

impl BandLu {
    pub fn factor(a: &BandMatrix) -> Result<Self> {
        let n = a.n;
        let kl = a.kl;
        let ku_fill = a.ku + a.kl;
        let w = kl + ku_fill + 1;
        let idx = |i: usize, j: usize| i * w + (j + kl - i);
        let mut u = vec![0.0; n * w];
        for i in 0..n {
            let lo = i.saturating_sub(kl);
            let hi = (i + a.ku).min(n.saturating_sub(1));
            for j in lo..=hi {
                u[idx(i, j)] = a.get(i, j);
            }
        }
        let mut l = vec![0.0; n * kl.max(1)];
        let mut piv = vec![0; n];
        let scale = a.norm_inf().max(f64::MIN_POSITIVE);
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = u[idx(k, k)].abs();
            for r in k + 1..=last {
                let v = u[idx(r, k)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best <= f64::EPSILON * 1e-3 * scale {
                return Err(Error::numerical(
                    format!("band LU factorization (zero pivot at column {k})"),
                    best,
                ));
            }
            piv[k] = p;
            let cmax = (k + ku_fill).min(n - 1);
            if p != k {
                for c in k..=cmax {
                    u.swap(idx(k, c), idx(p, c));
                }
            }
            let pivot = u[idx(k, k)];
            for r in k + 1..=last {
                let m = u[idx(r, k)] / pivot;
                l[k * kl + (r - k - 1)] = m;
                u[idx(r, k)] = 0.0;
                if m != 0.0 {
                    for c in k + 1..=cmax {
                        u[idx(r, c)] -= m * u[idx(k, c)];
                    }
                }
            }
        }
        Ok(BandLu {
            n,
            kl,
            ku_fill,
            u,
            l,
            piv,
        })
    }

    fn w(&self) -> usize {
        self.kl + self.ku_fill + 1
    }

    fn u_at(&self, i: usize, j: usize) -> f64 {
        self.u[i * self.w() + (j + self.kl - i)]
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let (n, kl) = (self.n, self.kl);
        let mut x = b.to_vec();
        for k in 0..n {
            x.swap(k, self.piv[k]);
            let last = (k + kl).min(n - 1);
            for r in k + 1..=last {
                x[r] -= self.l[k * kl + (r - k - 1)] * x[k];
            }
        }
        for i in (0..n).rev() {
            let hi = (i + self.ku_fill).min(n - 1);
            let mut s = x[i];
            for c in i + 1..=hi {
                s -= self.u_at(i, c) * x[c];
            }
            x[i] = s / self.u_at(i, i);
        }
        x
    }

    /// Solves `Aᵀ x = b`.
    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let (n, kl) = (self.n, self.kl);
        let mut x = b.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(self.ku_fill);
            let mut s = x[i];
            for r in lo..i {
                s -= self.u_at(r, i) * x[r];
            }
            x[i] = s / self.u_at(i, i);
        }
        for k in (0..n).rev() {
            let last = (k + kl).min(n - 1);
            let mut s = x[k];
            for r in k + 1..=last {
                s -= self.l[k * kl + (r - k - 1)] * x[r];
            }
            x[k] = s;
            x.swap(k, self.piv[k]);
        }
        x
    }
}

/// Outcome of a conjugate-gradient solve.
#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub solution: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradients for an SPD operator given as a closure.
pub fn conjugate_gradient<F>(
    apply: F,
    diagonal: &[f64],
    rhs: &[f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<CgOutcome>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = rhs.len();
    let bnorm = norm2(rhs);
    if bnorm == 0.0 {
        return Ok(CgOutcome {
            solution: vec![0.0; n],
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let mut z: Vec<f64> = r.iter().zip(diagonal).map(|(ri, d)| ri / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 0..max_iter {
        let rel = norm2(&r) / bnorm;
        if rel <= rel_tol {
            return Ok(CgOutcome {
                solution: x,
                iterations: it,
                relative_residual: rel,
            });
        }
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::numerical("conjugate gradient (operator not SPD)", rel));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] / diagonal[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let rel = norm2(&r) / bnorm;
    if rel <= rel_tol {
        Ok(CgOutcome {
            solution: x,
            iterations: max_iter,
            relative_residual: rel,
        })
    } else {
        Err(Error::numerical("conjugate gradient did not converge", rel))
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

//! Symmetric tridiagonal systems: a pivoted direct solve and Sturm-sequence
//! eigenvalue counts.

use crate::error::{Error, Result};

/// Symmetric tridiagonal matrix with diagonal `d` and off-diagonal `e`
/// (`e[i]` couples rows `i` and `i + 1`).
#[derive(Clone, Debug, PartialEq)]
pub struct SymTridiag {
    pub d: Vec<f64>,
    pub e: Vec<f64>,
}

impl SymTridiag {
    pub fn new(d: Vec<f64>, e: Vec<f64>) -> Result<Self> {
        if d.is_empty() || e.len() + 1 != d.len() {
            return Err(Error::InvalidParameter { name: "tridiagonal", reason: "need len(e) = len(d) - 1 >= 0".into() });
        }
        Ok(Self { d, e })
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let m = self.len();
        (0..m)
            .map(|i| {
                let mut y = self.d[i] * x[i];
                if i > 0 {
                    y += self.e[i - 1] * x[i - 1];
                }
                if i + 1 < m {
                    y += self.e[i] * x[i + 1];
                }
                y
            })
            .collect()
    }

    /// Factor with partial pivoting (LAPACK `gttrf` layout).
    pub fn factor(&self) -> Result<TridiagLu> {
        let m = self.len();
        let mut dl = self.e.clone();
        let mut d = self.d.clone();
        let mut du = self.e.clone();
        let mut du2 = vec![0.0; m.saturating_sub(2)];
        let mut swap = vec![false; m.saturating_sub(1)];
        for i in 0..m.saturating_sub(1) {
            if d[i].abs() >= dl[i].abs() {
                if d[i] == 0.0 {
                    return Err(Error::SingularBordered { condition: 0.0 });
                }
                let f = dl[i] / d[i];
                dl[i] = f;
                d[i + 1] -= f * du[i];
            } else {
                let f = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = f;
                let t = du[i];
                du[i] = d[i + 1];
                d[i + 1] = t - f * d[i + 1];
                if i + 2 < m {
                    du2[i] = du[i + 1];
                    du[i + 1] *= -f;
                }
                swap[i] = true;
            }
        }
        let scale = self.d.iter().chain(&self.e).fold(0.0f64, |a, v| a.max(v.abs()));
        let pivot = d.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
        if !(pivot > 0.0) || !pivot.is_finite() {
            return Err(Error::SingularBordered { condition: pivot / scale });
        }
        Ok(TridiagLu { dl, d, du, du2, swap, pivot_ratio: pivot / scale })
    }

    /// Number of eigenvalues strictly below `x`.
    pub fn count_below(&self, x: f64) -> usize {
        let mut count = 0;
        let mut q = self.d[0] - x;
        if q < 0.0 {
            count += 1;
        }
        for i in 1..self.len() {
            let qq = if q == 0.0 { f64::EPSILON * (self.e[i - 1].abs() + f64::MIN_POSITIVE) } else { q };
            q = self.d[i] - x - self.e[i - 1] * self.e[i - 1] / qq;
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// Gershgorin interval containing the spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let m = self.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..m {
            let mut r = 0.0;
            if i > 0 {
                r += self.e[i - 1].abs();
            }
            if i + 1 < m {
                r += self.e[i].abs();
            }
            lo = lo.min(self.d[i] - r);
            hi = hi.max(self.d[i] + r);
        }
        (lo, hi)
    }

    /// The `j`-th smallest eigenvalue (0-based) by bisection.
    pub fn eigenvalue(&self, j: usize, rel_tol: f64) -> Result<f64> {
        if j >= self.len() {
            return Err(Error::InvalidParameter { name: "eigenvalue", reason: format!("index {j} out of range") });
        }
        let (mut lo, mut hi) = self.gershgorin();
        let scale = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.count_below(mid) > j {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= rel_tol * mid.abs().max(1e-3 * scale) {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

#[derive(Clone, Debug)]
pub struct TridiagLu {
    dl: Vec<f64>,
    d: Vec<f64>,
    du: Vec<f64>,
    du2: Vec<f64>,
    swap: Vec<bool>,
    /// Smallest pivot relative to the largest matrix entry.
    pub pivot_ratio: f64,
}

impl TridiagLu {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let m = self.d.len();
        let mut x = b.to_vec();
        for i in 0..m.saturating_sub(1) {
            if self.swap[i] {
                let t = x[i];
                x[i] = x[i + 1];
                x[i + 1] = t - self.dl[i] * x[i];
            } else {
                x[i + 1] -= self.dl[i] * x[i];
            }
        }
        x[m - 1] /= self.d[m - 1];
        if m >= 2 {
            x[m - 2] = (x[m - 2] - self.du[m - 2] * x[m - 1]) / self.d[m - 2];
        }
        for i in (0..m.saturating_sub(2)).rev() {
            x[i] = (x[i] - self.du[i] * x[i + 1] - self.du2[i] * x[i + 2]) / self.d[i];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian(m: usize) -> SymTridiag {
        SymTridiag::new(vec![2.0; m], vec![-1.0; m - 1]).unwrap()
    }

    #[test]
    fn solve_round_trip() {
        let a = SymTridiag::new(vec![1e-3, 4.0, -2.0, 3.0, 1.0], vec![1.0, 0.5, -1.0, 2.0]).unwrap();
        let x = [1.0, -2.0, 3.0, 0.5, -1.0];
        let b = a.apply(&x);
        let y = a.factor().unwrap().solve(&b);
        for (u, v) in x.iter().zip(&y) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn sturm_count_matches_closed_form() {
        let m = 50;
        let a = laplacian(m);
        let exact = |j: usize| 2.0 - 2.0 * (std::f64::consts::PI * (j + 1) as f64 / (m + 1) as f64).cos();
        for j in [0, 1, 10, 49] {
            let ev = a.eigenvalue(j, 1e-14).unwrap();
            assert!((ev - exact(j)).abs() < 1e-12, "{j}: {ev} vs {}", exact(j));
        }
        assert_eq!(a.count_below(exact(5) + 1e-9), 6);
    }
}

//! Primal active-set solver for small dense box-constrained convex QPs
//! `min 1/2 x'Hx + g'x + c` subject to `lo <= x <= hi`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("Hessian is not positive definite on the free variables {0:?}")]
    NotPositiveDefinite(Vec<usize>),
    #[error("empty box for variable {0}")]
    EmptyBox(usize),
    #[error("active set did not terminate after {0} iterations")]
    NoConvergence(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    Free,
    Lower,
    Upper,
}

#[derive(Debug, Clone)]
pub struct BoxQp {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub c: f64,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub bounds: Vec<Bound>,
    pub iterations: usize,
}

impl BoxQp {
    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let v = DVector::from_column_slice(x);
        0.5 * v.dot(&(&self.h * &v)) + self.g.dot(&v) + self.c
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let v = DVector::from_column_slice(x);
        (&self.h * &v + &self.g).iter().copied().collect()
    }

    pub fn solve(&self) -> Result<QpSolution, QpError> {
        let n = self.dim();
        for i in 0..n {
            if !(self.lo[i] <= self.hi[i]) {
                return Err(QpError::EmptyBox(i));
            }
        }
        let scale = self
            .h
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(self.g.iter().fold(0.0f64, |m, v| m.max(v.abs())))
            .max(1.0);
        let tol = 1e-13 * scale;
        let mut x: Vec<f64> = (0..n).map(|i| 0.5 * (self.lo[i] + self.hi[i])).collect();
        let mut bounds: Vec<Bound> = (0..n)
            .map(|i| {
                if self.lo[i] == self.hi[i] {
                    x[i] = self.lo[i];
                    Bound::Lower
                } else {
                    Bound::Free
                }
            })
            .collect();
        let max_iter = 50 * (n + 1);
        for iter in 0..max_iter {
            let free: Vec<usize> = (0..n).filter(|&i| bounds[i] == Bound::Free).collect();
            let grad = self.gradient(&x);
            let mut step = vec![0.0; n];
            if !free.is_empty() {
                let hff =
                    DMatrix::from_fn(free.len(), free.len(), |a, b| self.h[(free[a], free[b])]);
                let rhs = DVector::from_iterator(free.len(), free.iter().map(|&i| -grad[i]));
                let chol = hff
                    .cholesky()
                    .ok_or_else(|| QpError::NotPositiveDefinite(free.clone()))?;
                let p = chol.solve(&rhs);
                for (a, &i) in free.iter().enumerate() {
                    step[i] = p[a];
                }
            }
            let step_norm = step.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let width = (0..n)
                .map(|i| self.hi[i] - self.lo[i])
                .fold(0.0f64, f64::max)
                .max(1.0);
            let mut stationary = step_norm <= 1e-15 * width;
            if !stationary {
                let mut alpha = 1.0;
                let mut block = None;
                for &i in &free {
                    let (limit, b) = if step[i] < 0.0 {
                        ((self.lo[i] - x[i]) / step[i], Bound::Lower)
                    } else if step[i] > 0.0 {
                        ((self.hi[i] - x[i]) / step[i], Bound::Upper)
                    } else {
                        continue;
                    };
                    if limit < alpha {
                        alpha = limit.max(0.0);
                        block = Some((i, b));
                    }
                }
                for &i in &free {
                    x[i] += alpha * step[i];
                }
                match block {
                    Some((i, b)) => {
                        bounds[i] = b;
                        x[i] = if b == Bound::Lower {
                            self.lo[i]
                        } else {
                            self.hi[i]
                        };
                    }
                    // full Newton step: x minimizes over the working set
                    None => stationary = true,
                }
            }
            if stationary {
                let grad = self.gradient(&x);
                // stationary on the working set: check multipliers
                let mut worst = (0.0, None);
                for i in 0..n {
                    if self.lo[i] == self.hi[i] {
                        continue;
                    }
                    let lambda = match bounds[i] {
                        Bound::Free => continue,
                        Bound::Lower => grad[i],
                        Bound::Upper => -grad[i],
                    };
                    if lambda < -tol && lambda < worst.0 {
                        worst = (lambda, Some(i));
                    }
                }
                match worst.1 {
                    None => {
                        return Ok(QpSolution {
                            objective: self.objective(&x),
                            x,
                            bounds,
                            iterations: iter,
                        })
                    }
                    Some(i) => bounds[i] = Bound::Free,
                }
            }
        }
        Err(QpError::NoConvergence(max_iter))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qp(h: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> BoxQp {
        let n = g.len();
        BoxQp {
            h: DMatrix::from_row_slice(n, n, h),
            g: DVector::from_column_slice(g),
            c: 0.0,
            lo: lo.to_vec(),
            hi: hi.to_vec(),
        }
    }

    #[test]
    fn interior_minimum() {
        let s = qp(
            &[2.0, 0.0, 0.0, 4.0],
            &[-1.0, -2.0],
            &[-5.0, -5.0],
            &[5.0, 5.0],
        )
        .solve()
        .unwrap();
        assert!((s.x[0] - 0.5).abs() < 1e-14 && (s.x[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn clamps_to_bounds() {
        let s = qp(
            &[2.0, 1.0, 1.0, 2.0],
            &[-10.0, 0.0],
            &[0.0, 0.0],
            &[1.0, 1.0],
        )
        .solve()
        .unwrap();
        // x0 pushed to its upper bound, x1 then wants -0.5 and sits at 0
        assert_eq!(s.x, vec![1.0, 0.0]);
        assert_eq!(s.bounds, vec![Bound::Upper, Bound::Lower]);
    }

    #[test]
    fn matches_grid_search() {
        let q = qp(
            &[3.0, -1.0, -1.0, 2.0],
            &[1.0, -3.0],
            &[0.0, 0.0],
            &[1.0, 1.0],
        );
        let s = q.solve().unwrap();
        let mut best = f64::INFINITY;
        for i in 0..=400 {
            for j in 0..=400 {
                best = best.min(q.objective(&[i as f64 / 400.0, j as f64 / 400.0]));
            }
        }
        assert!(s.objective <= best + 1e-12);
        assert!(best - s.objective < 1e-4);
    }

    #[test]
    fn rejects_semidefinite() {
        let r = qp(&[1.0, 1.0, 1.0, 1.0], &[0.0, 0.0], &[0.0, 0.0], &[1.0, 1.0]).solve();
        assert!(matches!(r, Err(QpError::NotPositiveDefinite(_))));
    }
}

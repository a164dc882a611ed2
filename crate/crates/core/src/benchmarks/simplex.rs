//! Dense tableau simplex for `max c·x  s.t.  A x <= b,  x >= 0` with `b >= 0`.
//!
//! The slack basis is feasible, so no phase one is needed. Pivoting uses
//! Dantzig's rule (most negative reduced cost) and switches to Bland's rule
//! once the pivot budget is spent, which rules out cycling.

use crate::error::{Error, Result};

const EPS: f64 = 1e-11;

#[derive(Clone, Debug, PartialEq)]
pub struct SimplexSolution {
    pub objective: f64,
    pub primal: Vec<f64>,
    /// One multiplier per constraint row.
    pub dual: Vec<f64>,
    pub pivots: usize,
}

pub struct DenseSimplex {
    rows: usize,
    cols: usize,
    /// `rows + 1` rows of `cols + rows + 1` entries; the last row holds
    /// reduced costs and the last column the right-hand side.
    tableau: Vec<f64>,
    basis: Vec<usize>,
}

impl DenseSimplex {
    /// `a` is row-major `rows x cols`.
    pub fn new(c: &[f64], a: &[f64], b: &[f64]) -> Result<Self> {
        let rows = b.len();
        let cols = c.len();
        if a.len() != rows * cols {
            return Err(Error::invalid("constraint matrix has the wrong size"));
        }
        if let Some(v) = b.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::invalid(format!(
                "right-hand side {v} must be non-negative"
            )));
        }
        let width = cols + rows + 1;
        let mut tableau = vec![0.0; (rows + 1) * width];
        for i in 0..rows {
            let row = &mut tableau[i * width..(i + 1) * width];
            row[..cols].copy_from_slice(&a[i * cols..(i + 1) * cols]);
            row[cols + i] = 1.0;
            row[width - 1] = b[i];
        }
        let obj = &mut tableau[rows * width..];
        for (o, &cj) in obj.iter_mut().zip(c) {
            *o = -cj;
        }
        Ok(DenseSimplex {
            rows,
            cols,
            tableau,
            basis: (cols..cols + rows).collect(),
        })
    }

    fn width(&self) -> usize {
        self.cols + self.rows + 1
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.tableau[i * self.width() + j]
    }

    fn entering(&self, bland: bool) -> Option<usize> {
        let obj = self.rows;
        let vars = self.cols + self.rows;
        if bland {
            (0..vars).find(|&j| self.at(obj, j) < -EPS)
        } else {
            let (j, v) = (0..vars)
                .map(|j| (j, self.at(obj, j)))
                .min_by(|a, b| a.1.total_cmp(&b.1))?;
            (v < -EPS).then_some(j)
        }
    }

    fn leaving(&self, col: usize) -> Option<usize> {
        let rhs = self.width() - 1;
        let mut best: Option<(usize, f64)> = None;
        for i in 0..self.rows {
            let a = self.at(i, col);
            if a > EPS {
                let ratio = self.at(i, rhs) / a;
                let better = match best {
                    None => true,
                    Some((bi, br)) => {
                        ratio < br - EPS || (ratio <= br + EPS && self.basis[i] < self.basis[bi])
                    }
                };
                if better {
                    best = Some((i, ratio));
                }
            }
        }
        best.map(|(i, _)| i)
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let width = self.width();
        let inv = 1.0 / self.at(row, col);
        for v in &mut self.tableau[row * width..(row + 1) * width] {
            *v *= inv;
        }
        let pivot_row: Vec<f64> = self.tableau[row * width..(row + 1) * width].to_vec();
        for i in 0..=self.rows {
            if i == row {
                continue;
            }
            let factor = self.at(i, col);
            if factor == 0.0 {
                continue;
            }
            let target = &mut self.tableau[i * width..(i + 1) * width];
            for (t, p) in target.iter_mut().zip(&pivot_row) {
                *t -= factor * p;
            }
            target[col] = 0.0;
        }
        self.basis[row] = col;
    }

    pub fn solve(mut self) -> Result<SimplexSolution> {
        let budget = 50 * (self.rows + self.cols) + 1000;
        let hard_cap = 100 * budget;
        let mut pivots = 0;
        loop {
            let bland = pivots >= budget;
            let Some(col) = self.entering(bland) else {
                break;
            };
            let Some(row) = self.leaving(col) else {
                return Err(Error::invalid("linear program is unbounded"));
            };
            self.pivot(row, col);
            pivots += 1;
            if pivots > hard_cap {
                return Err(Error::capacity(format!(
                    "simplex exceeded {hard_cap} pivots"
                )));
            }
        }
        let rhs = self.width() - 1;
        let mut primal = vec![0.0; self.cols];
        for (i, &var) in self.basis.iter().enumerate() {
            if var < self.cols {
                primal[var] = self.at(i, rhs).max(0.0);
            }
        }
        let dual = (0..self.rows)
            .map(|i| self.at(self.rows, self.cols + i).max(0.0))
            .collect();
        Ok(SimplexSolution {
            objective: self.at(self.rows, rhs),
            primal,
            dual,
            pivots,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_problem() {
        // max 3x + 5y  s.t. x <= 4, 2y <= 12, 3x + 2y <= 18  ->  36 at (2, 6)
        let sol = DenseSimplex::new(
            &[3.0, 5.0],
            &[1.0, 0.0, 0.0, 2.0, 3.0, 2.0],
            &[4.0, 12.0, 18.0],
        )
        .unwrap()
        .solve()
        .unwrap();
        assert!((sol.objective - 36.0).abs() < 1e-12);
        assert!((sol.primal[0] - 2.0).abs() < 1e-12);
        assert!((sol.primal[1] - 6.0).abs() < 1e-12);
        // duals (0, 1.5, 1) give 12*1.5 + 18 = 36
        let dual_obj: f64 = sol
            .dual
            .iter()
            .zip([4.0, 12.0, 18.0])
            .map(|(y, b)| y * b)
            .sum();
        assert!((dual_obj - 36.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_problem_terminates() {
        // a classic cycling example for Dantzig's rule without anti-cycling
        let c = [0.75, -20.0, 0.5, -6.0];
        let a = [
            0.25, -8.0, -1.0, 9.0, 0.5, -12.0, -0.5, 3.0, 0.0, 0.0, 1.0, 0.0,
        ];
        let sol = DenseSimplex::new(&c, &a, &[0.0, 0.0, 1.0])
            .unwrap()
            .solve()
            .unwrap();
        assert!((sol.objective - 1.25).abs() < 1e-9);
    }

    #[test]
    fn unbounded_detected() {
        let r = DenseSimplex::new(&[1.0], &[-1.0], &[1.0]).unwrap().solve();
        assert!(r.is_err());
    }
}

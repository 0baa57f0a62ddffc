//! Sparse linear least squares via conjugate gradients on the normal
//! equations.
//!
//! Every quadratic energy in this crate is a weighted sum of squared linear
//! residual rows. [`LsqBuilder`] collects the rows grouped into named terms
//! (data, smoothness, boundary, ...), [`LeastSquares::solve`] minimizes the
//! total energy, and [`LeastSquares::term_energies`] reports the unweighted
//! residual of each term at a given solution.

use nalgebra::DVector;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SparseError {
    #[error("system has no rows")]
    EmptySystem,
    #[error("unknown {col} is unconstrained (zero normal-matrix diagonal)")]
    ZeroColumn { col: usize },
    #[error("conjugate gradients stalled at relative residual {residual:.3e} after {iterations} iterations")]
    DidNotConverge { iterations: usize, residual: f64 },
}

/// Handle to a named energy term inside a [`LsqBuilder`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TermId(usize);

struct Term {
    name: String,
    weight: f64,
}

struct Row {
    term: usize,
    coeffs: Vec<(usize, f64)>,
    rhs: f64,
}

/// Incremental builder for a sparse least-squares problem
/// `min_x Σ_k w_k Σ_{rows r of term k} (a_r · x − b_r)²`.
pub struct LsqBuilder {
    n_cols: usize,
    terms: Vec<Term>,
    rows: Vec<Row>,
}

impl LsqBuilder {
    pub fn new(n_unknowns: usize) -> Self {
        Self { n_cols: n_unknowns, terms: Vec::new(), rows: Vec::new() }
    }

    /// Registers an energy term; its rows are scaled by `sqrt(weight)` when
    /// the system is assembled.
    pub fn add_term(&mut self, name: &str, weight: f64) -> TermId {
        assert!(weight >= 0.0 && weight.is_finite(), "term weight must be non-negative");
        self.terms.push(Term { name: name.to_owned(), weight });
        TermId(self.terms.len() - 1)
    }

    /// Adds one residual row `a · x - rhs` to a term. Duplicate column
    /// entries are summed.
    pub fn add_row(&mut self, term: TermId, coeffs: &[(usize, f64)], rhs: f64) {
        debug_assert!(coeffs.iter().all(|&(c, _)| c < self.n_cols), "column out of range");
        let mut coeffs = coeffs.to_vec();
        coeffs.sort_unstable_by_key(|&(c, _)| c);
        coeffs.dedup_by(|b, a| {
            if a.0 == b.0 {
                a.1 += b.1;
                true
            } else {
                false
            }
        });
        self.rows.push(Row { term: term.0, coeffs, rhs });
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn build(self) -> LeastSquares {
        let mut row_ptr = Vec::with_capacity(self.rows.len() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut rhs = Vec::with_capacity(self.rows.len());
        let mut row_term = Vec::with_capacity(self.rows.len());
        row_ptr.push(0);
        for row in &self.rows {
            let s = self.terms[row.term].weight.sqrt();
            for &(c, v) in &row.coeffs {
                col_idx.push(c);
                values.push(s * v);
            }
            row_ptr.push(col_idx.len());
            rhs.push(s * row.rhs);
            row_term.push(row.term);
        }
        LeastSquares {
            n_cols: self.n_cols,
            row_ptr,
            col_idx,
            values,
            rhs: DVector::from_vec(rhs),
            terms: self.terms,
            row_term,
        }
    }
}

/// Options for the conjugate-gradient solve.
#[derive(Clone, Copy, Debug)]
pub struct CgOptions {
    /// Relative residual target on the normal equations.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self { tolerance: 1e-13, max_iterations: 20_000 }
    }
}

#[derive(Clone, Debug)]
pub struct CgSolution {
    pub x: DVector<f64>,
    pub iterations: usize,
    /// Final `‖AᵀA x − Aᵀb‖ / ‖Aᵀb‖`.
    pub relative_residual: f64,
}

/// Unweighted residual energy of one term at a solution.
#[derive(Clone, Debug)]
pub struct TermEnergy {
    pub name: String,
    pub weight: f64,
    /// `Σ (a·x − b)²` over the term's rows, before weighting.
    pub energy: f64,
}

/// Assembled sparse least-squares system in CSR form.
pub struct LeastSquares {
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    rhs: DVector<f64>,
    terms: Vec<Term>,
    row_term: Vec<usize>,
}

impl LeastSquares {
    pub fn n_rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    fn mul_a(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        for r in 0..self.n_rows() {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            out[r] = acc;
        }
    }

    fn mul_at(&self, y: &DVector<f64>, out: &mut DVector<f64>) {
        out.fill(0.0);
        for r in 0..self.n_rows() {
            let yr = y[r];
            if yr == 0.0 {
                continue;
            }
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                out[self.col_idx[k]] += self.values[k] * yr;
            }
        }
    }

    fn normal_diagonal(&self) -> DVector<f64> {
        let mut d = DVector::zeros(self.n_cols);
        for k in 0..self.values.len() {
            d[self.col_idx[k]] += self.values[k] * self.values[k];
        }
        d
    }

    /// Minimizes the assembled energy by preconditioned conjugate gradients
    /// on the normal equations, starting from `x0` (zeros when `None`).
    pub fn solve(
        &self,
        options: &CgOptions,
        x0: Option<&DVector<f64>>,
    ) -> Result<CgSolution, SparseError> {
        if self.n_rows() == 0 || self.n_cols == 0 {
            return Err(SparseError::EmptySystem);
        }
        let diag = self.normal_diagonal();
        if let Some(col) = (0..self.n_cols).find(|&i| diag[i] <= 0.0) {
            return Err(SparseError::ZeroColumn { col });
        }
        let inv_diag = diag.map(|v| 1.0 / v);

        let mut atb = DVector::zeros(self.n_cols);
        self.mul_at(&self.rhs, &mut atb);
        let rhs_norm = atb.norm();
        let mut x = match x0 {
            Some(x0) => {
                assert_eq!(x0.len(), self.n_cols, "x0 length mismatch");
                x0.clone()
            }
            None => DVector::zeros(self.n_cols),
        };

        let mut ax = DVector::zeros(self.n_rows());
        let mut nx = DVector::zeros(self.n_cols);
        let normal_apply = |x: &DVector<f64>, ax: &mut DVector<f64>, out: &mut DVector<f64>, me: &Self| {
            me.mul_a(x, ax);
            me.mul_at(ax, out);
        };

        normal_apply(&x, &mut ax, &mut nx, self);
        let mut residual = &atb - &nx;
        if rhs_norm == 0.0 {
            return Ok(CgSolution { x: DVector::zeros(self.n_cols), iterations: 0, relative_residual: 0.0 });
        }
        let mut z = residual.component_mul(&inv_diag);
        let mut p = z.clone();
        let mut rz = residual.dot(&z);
        let mut iterations = 0;

        while iterations < options.max_iterations {
            let rel = residual.norm() / rhs_norm;
            if rel <= options.tolerance {
                return Ok(CgSolution { x, iterations, relative_residual: rel });
            }
            iterations += 1;
            normal_apply(&p, &mut ax, &mut nx, self);
            let pnp = p.dot(&nx);
            if pnp <= 0.0 || !pnp.is_finite() {
                break;
            }
            let alpha = rz / pnp;
            x.axpy(alpha, &p, 1.0);
            if iterations % 50 == 0 {
                // Recompute the true residual to counter accumulated drift.
                normal_apply(&x, &mut ax, &mut nx, self);
                residual = &atb - &nx;
            } else {
                residual.axpy(-alpha, &nx, 1.0);
            }
            z = residual.component_mul(&inv_diag);
            let rz_new = residual.dot(&z);
            let beta = rz_new / rz;
            rz = rz_new;
            p = &z + beta * &p;
        }

        let rel = residual.norm() / rhs_norm;
        if rel <= options.tolerance {
            Ok(CgSolution { x, iterations, relative_residual: rel })
        } else {
            Err(SparseError::DidNotConverge { iterations, residual: rel })
        }
    }

    /// Per-term unweighted residual energies at `x`.
    pub fn term_energies(&self, x: &DVector<f64>) -> Vec<TermEnergy> {
        let mut energies = vec![0.0f64; self.terms.len()];
        for r in 0..self.n_rows() {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            let resid = acc - self.rhs[r];
            let t = self.row_term[r];
            let w = self.terms[t].weight;
            // Rows were scaled by sqrt(w); report the unweighted residual.
            if w > 0.0 {
                energies[t] += resid * resid / w;
            }
        }
        self.terms
            .iter()
            .zip(energies)
            .map(|(t, e)| TermEnergy { name: t.name.clone(), weight: t.weight, energy: e })
            .collect()
    }

    /// Total weighted energy `Σ_k w_k E_k` at `x`.
    pub fn total_energy(&self, x: &DVector<f64>) -> f64 {
        self.term_energies(x).iter().map(|t| t.weight * t.energy).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Random well-posed sparse problem plus its dense counterpart.
    fn random_problem(
        rng: &mut ChaCha8Rng,
        n: usize,
        extra_rows: usize,
    ) -> (LeastSquares, DMatrix<f64>, DVector<f64>) {
        let mut builder = LsqBuilder::new(n);
        let data = builder.add_term("data", 1.0);
        let reg = builder.add_term("reg", 0.01);
        let mut dense = DMatrix::zeros(n + extra_rows, n);
        let mut rhs = DVector::zeros(n + extra_rows);
        for i in 0..n {
            // Regularization guarantees every column is touched.
            let w = 0.01f64.sqrt();
            builder.add_row(reg, &[(i, 1.0)], 0.0);
            dense[(i, i)] = w;
        }
        for r in 0..extra_rows {
            let mut coeffs = Vec::new();
            for _ in 0..rng.gen_range(1..5) {
                let c = rng.gen_range(0..n);
                let v = rng.gen_range(-2.0..2.0);
                coeffs.push((c, v));
            }
            let b = rng.gen_range(-1.0..1.0);
            builder.add_row(data, &coeffs, b);
            for (c, v) in coeffs {
                dense[(n + r, c)] += v;
            }
            rhs[n + r] = b;
        }
        (builder.build(), dense, rhs)
    }

    #[test]
    fn matches_dense_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        for _ in 0..20 {
            let n = rng.gen_range(5..40);
            let (system, dense, rhs) = random_problem(&mut rng, n, 3 * n);
            let sol = system.solve(&CgOptions::default(), None).unwrap();
            let normal = dense.transpose() * &dense;
            let atb = dense.transpose() * rhs;
            let oracle = normal.cholesky().unwrap().solve(&atb);
            assert!((sol.x - oracle).amax() < 1e-8);
        }
    }

    #[test]
    fn handles_badly_scaled_columns() {
        let mut builder = LsqBuilder::new(3);
        let t = builder.add_term("data", 1.0);
        builder.add_row(t, &[(0, 1e6), (1, 1.0)], 3.0);
        builder.add_row(t, &[(1, 1.0), (2, 1e-4)], 1.0);
        builder.add_row(t, &[(0, 1e6)], 2.0);
        builder.add_row(t, &[(2, 1e-4)], 5e-5);
        let system = builder.build();
        let sol = system.solve(&CgOptions::default(), None).unwrap();
        assert!(sol.relative_residual < 1e-12);
    }

    #[test]
    fn zero_column_detected() {
        let mut builder = LsqBuilder::new(3);
        let t = builder.add_term("data", 1.0);
        builder.add_row(t, &[(0, 1.0)], 1.0);
        builder.add_row(t, &[(2, 1.0)], 2.0);
        let system = builder.build();
        assert!(matches!(
            system.solve(&CgOptions::default(), None),
            Err(SparseError::ZeroColumn { col: 1 })
        ));
    }

    #[test]
    fn empty_system_rejected() {
        let builder = LsqBuilder::new(4);
        assert!(matches!(
            builder.build().solve(&CgOptions::default(), None),
            Err(SparseError::EmptySystem)
        ));
    }

    #[test]
    fn term_energies_report_unweighted_residuals() {
        let mut builder = LsqBuilder::new(1);
        let a = builder.add_term("a", 4.0);
        let b = builder.add_term("b", 0.5);
        builder.add_row(a, &[(0, 1.0)], 2.0);
        builder.add_row(b, &[(0, 1.0)], -2.0);
        let system = builder.build();
        let x = DVector::from_vec(vec![1.0]);
        let energies = system.term_energies(&x);
        assert_eq!(energies[0].name, "a");
        assert!((energies[0].energy - 1.0).abs() < 1e-12);
        assert!((energies[1].energy - 9.0).abs() < 1e-12);
        assert!((system.total_energy(&x) - (4.0 * 1.0 + 0.5 * 9.0)).abs() < 1e-12);
    }

    #[test]
    fn term_weight_equals_prescaled_rows() {
        let mut weighted = LsqBuilder::new(2);
        let t = weighted.add_term("data", 3.0);
        weighted.add_row(t, &[(0, 1.0), (1, 2.0)], 1.0);
        weighted.add_row(t, &[(0, -1.0), (1, 1.0)], 0.5);
        let anchor = weighted.add_term("anchor", 1.0);
        weighted.add_row(anchor, &[(0, 1.0)], 0.2);
        weighted.add_row(anchor, &[(1, 1.0)], 0.1);

        let mut scaled = LsqBuilder::new(2);
        let t2 = scaled.add_term("data", 1.0);
        let s = 3.0f64.sqrt();
        scaled.add_row(t2, &[(0, s), (1, 2.0 * s)], s);
        scaled.add_row(t2, &[(0, -s), (1, s)], 0.5 * s);
        let anchor2 = scaled.add_term("anchor", 1.0);
        scaled.add_row(anchor2, &[(0, 1.0)], 0.2);
        scaled.add_row(anchor2, &[(1, 1.0)], 0.1);

        let sa = weighted.build().solve(&CgOptions::default(), None).unwrap();
        let sb = scaled.build().solve(&CgOptions::default(), None).unwrap();
        assert!((sa.x - sb.x).amax() < 1e-12);
    }

    #[test]
    fn duplicate_columns_are_summed() {
        let mut builder = LsqBuilder::new(1);
        let t = builder.add_term("data", 1.0);
        builder.add_row(t, &[(0, 1.0), (0, 1.0)], 4.0);
        let sol = builder.build().solve(&CgOptions::default(), None).unwrap();
        assert!((sol.x[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic_across_runs() {
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        let (system, _, _) = random_problem(&mut rng, 25, 60);
        let a = system.solve(&CgOptions::default(), None).unwrap();
        let b = system.solve(&CgOptions::default(), None).unwrap();
        assert_eq!(a.x, b.x);
    }

    #[test]
    fn warm_start_converges_immediately_at_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(63);
        let (system, _, _) = random_problem(&mut rng, 15, 40);
        let sol = system.solve(&CgOptions::default(), None).unwrap();
        let warm = system.solve(&CgOptions::default(), Some(&sol.x)).unwrap();
        assert!(warm.iterations <= 2);
    }
}

//! Sparse square linear solves for the Newton and interior-point steps.
//!
//! Backed by faer's supernodal/simplicial LU with partial pivoting.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinearSolveError {
    #[error("matrix is singular")]
    Singular,
    #[error("sparse factorization failed: {0}")]
    Factorization(String),
}

/// Coordinate-format accumulator; duplicate entries are summed.
#[derive(Debug, Clone, Default)]
pub struct TripletBuilder {
    n: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(n: usize) -> Self {
        TripletBuilder {
            n,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(n: usize, cap: usize) -> Self {
        TripletBuilder {
            n,
            entries: Vec::with_capacity(cap),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.n && col < self.n);
        if value != 0.0 {
            self.entries.push((row, col, value));
        }
    }

    /// Forces an entry into the pattern even when zero.
    pub fn touch(&mut self, row: usize, col: usize) {
        self.entries.push((row, col, 0.0));
    }

    fn merged(&self) -> Vec<Triplet<usize, usize, f64>> {
        let mut e = self.entries.clone();
        e.sort_unstable_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
        let mut out: Vec<Triplet<usize, usize, f64>> = Vec::with_capacity(e.len());
        for (r, c, v) in e {
            match out.last_mut() {
                Some(t) if t.row == r && t.col == c => t.val += v,
                _ => out.push(Triplet::new(r, c, v)),
            }
        }
        out
    }

    /// Dense copy, used by tests and small diagnostics.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for &(r, c, v) in &self.entries {
            d[r][c] += v;
        }
        d
    }

    /// y = A·x
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for &(r, c, v) in &self.entries {
            y[r] += v * x[c];
        }
        y
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, LinearSolveError> {
        assert_eq!(rhs.len(), self.n);
        if self.n == 0 {
            return Ok(Vec::new());
        }
        let trips = self.merged();
        let a = SparseColMat::<usize, f64>::try_new_from_triplets(self.n, self.n, &trips)
            .map_err(|e| LinearSolveError::Factorization(format!("{e:?}")))?;
        let lu = a.sp_lu().map_err(|e| match e {
            faer::sparse::linalg::LuError::SymbolicSingular { .. } => LinearSolveError::Singular,
            other => LinearSolveError::Factorization(format!("{other:?}")),
        })?;
        let b = Mat::<f64>::from_fn(self.n, 1, |i, _| rhs[i]);
        let x = lu.solve(&b);
        let out: Vec<f64> = (0..self.n).map(|i| x[(i, 0)]).collect();
        if out.iter().all(|v| v.is_finite()) {
            Ok(out)
        } else {
            Err(LinearSolveError::Singular)
        }
    }
}

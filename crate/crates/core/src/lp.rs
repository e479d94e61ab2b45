//! Self-contained dense linear-programming layer: a problem container and a
//! two-phase primal simplex solver sized for the certification problems
//! (on the order of a hundred variables).
//!
//! The standard-form conversion shifts bounded variables, splits free
//! variables, and slacks inequalities. Pivoting is deterministic:
//! most-negative reduced cost with lowest-index tie-breaking, switching to
//! Bland's rule after `10 * #vars` iterations to guarantee termination.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LpError {
    #[error("inconsistent dimensions: {0}")]
    Dimension(String),
    #[error("iteration cap exceeded: cycling suspected")]
    Cycling,
    #[error("numerically singular basis (pivot magnitude {0:.3e})")]
    SingularBasis(f64),
}

pub const FEAS_TOL: f64 = 1e-8;
pub const COST_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const MAX_ITER: usize = 1_000_000;

/// Dense LP: minimize `c^T x` subject to `A_eq x = b_eq`, `A_in x <= b_in`,
/// and per-variable bounds (either side may be infinite).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub a_eq: Vec<Vec<f64>>,
    pub b_eq: Vec<f64>,
    pub a_in: Vec<Vec<f64>>,
    pub b_in: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LinearProgram {
    /// Empty problem over `n` free variables with zero objective.
    pub fn new(n: usize) -> Self {
        Self {
            objective: vec![0.0; n],
            a_eq: Vec::new(),
            b_eq: Vec::new(),
            a_in: Vec::new(),
            b_in: Vec::new(),
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(LpError::Dimension("bounds length != #vars".into()));
        }
        if self.a_eq.len() != self.b_eq.len() || self.a_in.len() != self.b_in.len() {
            return Err(LpError::Dimension("constraint matrix/rhs mismatch".into()));
        }
        for row in self.a_eq.iter().chain(&self.a_in) {
            if row.len() != n {
                return Err(LpError::Dimension("constraint row length != #vars".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Witness in the original variables, present when optimal.
    pub x: Option<Vec<f64>>,
    /// Objective value at the witness (meaningless otherwise).
    pub value: f64,
}

/// How each original variable maps into the standard-form columns.
enum VarMap {
    /// Fixed by equal bounds; carries the constant.
    Fixed(f64),
    /// `x = l + x'` at the given column.
    Shifted { col: usize, offset: f64 },
    /// `x = u - x'` at the given column.
    Reflected { col: usize, offset: f64 },
    /// `x = x+ - x-` at the two columns.
    Split { pos: usize, neg: usize },
}

struct Standard {
    /// Row-major tableau, `rows x (ncols + 1)`, rhs in the last column.
    a: Vec<f64>,
    rows: usize,
    ncols: usize,
    basis: Vec<usize>,
    art_start: usize,
    maps: Vec<VarMap>,
}

impl Standard {
    fn build(lp: &LinearProgram) -> Self {
        let n = lp.num_vars();
        let mut maps = Vec::with_capacity(n);
        let mut ncols = 0usize;
        // extra upper-bound rows for doubly-bounded variables
        let mut ub_rows: Vec<(usize, f64)> = Vec::new();
        for j in 0..n {
            let (l, u) = (lp.lower[j], lp.upper[j]);
            if l.is_finite() && u.is_finite() && l == u {
                maps.push(VarMap::Fixed(l));
            } else if l.is_finite() {
                let col = ncols;
                ncols += 1;
                if u.is_finite() {
                    ub_rows.push((col, u - l));
                }
                maps.push(VarMap::Shifted { col, offset: l });
            } else if u.is_finite() {
                let col = ncols;
                ncols += 1;
                maps.push(VarMap::Reflected { col, offset: u });
            } else {
                let pos = ncols;
                let neg = ncols + 1;
                ncols += 2;
                maps.push(VarMap::Split { pos, neg });
            }
        }
        let struct_cols = ncols;
        let n_ineq = lp.a_in.len() + ub_rows.len();
        let slack_start = struct_cols;
        ncols += n_ineq;
        let rows = lp.a_eq.len() + n_ineq;

        // assemble rows in original variables, then remap columns
        let stride = ncols + 1; // placeholder; artificial columns appended later
        let _ = stride;
        let mut dense: Vec<Vec<f64>> = Vec::with_capacity(rows);
        let mut rhs: Vec<f64> = Vec::with_capacity(rows);
        let mut is_eq: Vec<bool> = Vec::with_capacity(rows);
        let mut slack_of_row: Vec<Option<usize>> = Vec::with_capacity(rows);

        let mut slack = slack_start;
        let remap = |row: &[f64], maps: &[VarMap], ncols: usize| -> (Vec<f64>, f64) {
            let mut out = vec![0.0; ncols];
            let mut shift = 0.0;
            for (j, &c) in row.iter().enumerate() {
                if c == 0.0 {
                    continue;
                }
                match maps[j] {
                    VarMap::Fixed(v) => shift += c * v,
                    VarMap::Shifted { col, offset } => {
                        out[col] += c;
                        shift += c * offset;
                    }
                    VarMap::Reflected { col, offset } => {
                        out[col] -= c;
                        shift += c * offset;
                    }
                    VarMap::Split { pos, neg } => {
                        out[pos] += c;
                        out[neg] -= c;
                    }
                }
            }
            (out, shift)
        };

        for (row, &b) in lp.a_eq.iter().zip(&lp.b_eq) {
            let (out, shift) = remap(row, &maps, ncols);
            dense.push(out);
            rhs.push(b - shift);
            is_eq.push(true);
            slack_of_row.push(None);
        }
        for (row, &b) in lp.a_in.iter().zip(&lp.b_in) {
            let (mut out, shift) = remap(row, &maps, ncols);
            out[slack] = 1.0;
            dense.push(out);
            rhs.push(b - shift);
            is_eq.push(false);
            slack_of_row.push(Some(slack));
            slack += 1;
        }
        for &(col, ub) in &ub_rows {
            let mut out = vec![0.0; ncols];
            out[col] = 1.0;
            out[slack] = 1.0;
            dense.push(out);
            rhs.push(ub);
            is_eq.push(false);
            slack_of_row.push(Some(slack));
            slack += 1;
        }

        // normalize rhs >= 0 and decide which rows need artificials
        let mut need_art = Vec::new();
        for r in 0..rows {
            if rhs[r] < 0.0 {
                rhs[r] = -rhs[r];
                for v in dense[r].iter_mut() {
                    *v = -*v;
                }
            }
        }
        let mut basis = vec![usize::MAX; rows];
        for r in 0..rows {
            match slack_of_row[r] {
                Some(s) if dense[r][s] > 0.0 => basis[r] = s,
                _ => need_art.push(r),
            }
        }
        let art_start = ncols;
        let total_cols = ncols + need_art.len();
        let stride = total_cols + 1;
        let mut a = vec![0.0; rows * stride];
        for r in 0..rows {
            a[r * stride..r * stride + ncols].copy_from_slice(&dense[r]);
            a[r * stride + total_cols] = rhs[r];
        }
        for (k, &r) in need_art.iter().enumerate() {
            a[r * stride + art_start + k] = 1.0;
            basis[r] = art_start + k;
        }

        Standard {
            a,
            rows,
            ncols: total_cols,
            basis,
            art_start,
            maps,
        }
    }

    #[inline]
    fn stride(&self) -> usize {
        self.ncols + 1
    }

    /// One pivot on (row, col): normalizes the pivot row and eliminates the
    /// column from every other row and from the cost row.
    fn pivot(&mut self, row: usize, col: usize, cost: &mut [f64]) -> Result<(), LpError> {
        let stride = self.stride();
        let piv = self.a[row * stride + col];
        if piv.abs() < 1e-11 {
            return Err(LpError::SingularBasis(piv.abs()));
        }
        let inv = 1.0 / piv;
        for v in self.a[row * stride..(row + 1) * stride].iter_mut() {
            *v *= inv;
        }
        // snapshot the pivot row to sidestep aliasing in the update loop
        let prow: Vec<f64> = self.a[row * stride..(row + 1) * stride].to_vec();
        for r in 0..self.rows {
            if r == row {
                continue;
            }
            let factor = self.a[r * stride + col];
            if factor != 0.0 {
                let base = r * stride;
                let dst = &mut self.a[base..base + stride];
                for (d, &p) in dst.iter_mut().zip(&prow) {
                    *d -= factor * p;
                }
            }
        }
        let factor = cost[col];
        if factor != 0.0 {
            for (d, &p) in cost.iter_mut().zip(&prow) {
                *d -= factor * p;
            }
        }
        self.basis[row] = col;
        Ok(())
    }

    /// Runs simplex iterations on the given cost row until optimal.
    /// `allowed` limits the entering columns. Returns false on unboundedness.
    /// With `bounded_below` set (phase 1: the artificial sum cannot drop
    /// under zero) a column whose ratio test finds no pivot is a numerical
    /// artifact, not an unbounded ray; it is skipped until the next pivot
    /// instead of aborting the run.
    fn iterate(
        &mut self,
        cost: &mut [f64],
        allowed: &dyn Fn(usize) -> bool,
        iter_budget: &mut usize,
        bounded_below: bool,
    ) -> Result<bool, LpError> {
        let stride = self.stride();
        let bland_after = 10 * self.ncols;
        let mut local_iters = 0usize;
        let mut skip = vec![false; self.ncols];
        loop {
            if *iter_budget == 0 {
                return Err(LpError::Cycling);
            }
            *iter_budget -= 1;
            local_iters += 1;
            // pricing
            let mut enter = None;
            if local_iters > bland_after {
                for j in 0..self.ncols {
                    if allowed(j) && !skip[j] && cost[j] < -COST_TOL {
                        enter = Some(j);
                        break;
                    }
                }
            } else {
                let mut best = -COST_TOL;
                for j in 0..self.ncols {
                    if allowed(j) && !skip[j] && cost[j] < best {
                        best = cost[j];
                        enter = Some(j);
                    }
                }
            }
            let Some(q) = enter else {
                return Ok(true);
            };
            // ratio test: lowest ratio, ties by lowest basic index
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let arq = self.a[r * stride + q];
                if arq > PIVOT_TOL {
                    let ratio = self.a[r * stride + self.ncols] / arq;
                    match leave {
                        None => leave = Some((r, ratio)),
                        Some((lr, lratio)) => {
                            if ratio < lratio - 1e-12
                                || ((ratio - lratio).abs() <= 1e-12
                                    && self.basis[r] < self.basis[lr])
                            {
                                leave = Some((r, ratio));
                            }
                        }
                    }
                }
            }
            let Some((r, _)) = leave else {
                if bounded_below {
                    skip[q] = true;
                    continue;
                }
                return Ok(false);
            };
            if skip.iter().any(|&s| s) {
                skip.fill(false);
            }
            self.pivot(r, q, cost)?;
        }
    }

    /// Reduced-cost row for the given column costs under the current basis.
    fn reduced_costs(&self, col_cost: &[f64]) -> Vec<f64> {
        let stride = self.stride();
        let mut cost = vec![0.0; stride];
        cost[..self.ncols].copy_from_slice(col_cost);
        for r in 0..self.rows {
            let cb = col_cost[self.basis[r]];
            if cb != 0.0 {
                let base = r * stride;
                for (d, &p) in cost.iter_mut().zip(&self.a[base..base + stride]) {
                    *d -= cb * p;
                }
            }
        }
        cost
    }

    fn basic_solution(&self) -> Vec<f64> {
        let stride = self.stride();
        let mut x = vec![0.0; self.ncols];
        for r in 0..self.rows {
            x[self.basis[r]] = self.a[r * stride + self.ncols];
        }
        x
    }
}

/// Solves the LP by two-phase primal simplex.
pub fn solve(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    lp.validate()?;
    let mut std = Standard::build(lp);
    let mut budget = MAX_ITER;

    // phase 1: minimize the sum of artificials
    if std.art_start < std.ncols {
        let mut c1 = vec![0.0; std.ncols];
        for j in std.art_start..std.ncols {
            c1[j] = 1.0;
        }
        let mut cost = std.reduced_costs(&c1);
        let ok = std.iterate(&mut cost, &|_| true, &mut budget, true)?;
        debug_assert!(ok, "phase 1 objective is bounded below");
        let obj = -cost[std.ncols];
        if obj > 1e-7 {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                x: None,
                value: f64::INFINITY,
            });
        }
        // drive remaining artificials out of the basis where possible
        for r in 0..std.rows {
            if std.basis[r] >= std.art_start {
                let stride = std.stride();
                let mut entering = None;
                for j in 0..std.art_start {
                    if std.a[r * stride + j].abs() > 1e-7 {
                        entering = Some(j);
                        break;
                    }
                }
                if let Some(j) = entering {
                    std.pivot(r, j, &mut cost)?;
                }
                // otherwise the row is redundant; its artificial stays basic at zero
            }
        }
    }

    // phase 2: original objective, artificials barred from entering
    let mut c2 = vec![0.0; std.ncols];
    let mut fixed_value = 0.0;
    for (j, &c) in lp.objective.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        match std.maps[j] {
            VarMap::Fixed(v) => fixed_value += c * v,
            VarMap::Shifted { col, offset } => {
                c2[col] += c;
                fixed_value += c * offset;
            }
            VarMap::Reflected { col, offset } => {
                c2[col] -= c;
                fixed_value += c * offset;
            }
            VarMap::Split { pos, neg } => {
                c2[pos] += c;
                c2[neg] -= c;
            }
        }
    }
    let mut cost = std.reduced_costs(&c2);
    let art_start = std.art_start;
    let bounded = std.iterate(&mut cost, &|j| j < art_start, &mut budget, false)?;
    if !bounded {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            x: None,
            value: f64::NEG_INFINITY,
        });
    }

    // map the standard-form point back to original variables
    let xs = std.basic_solution();
    let mut x = vec![0.0; lp.num_vars()];
    for (j, map) in std.maps.iter().enumerate() {
        x[j] = match *map {
            VarMap::Fixed(v) => v,
            VarMap::Shifted { col, offset } => offset + xs[col],
            VarMap::Reflected { col, offset } => offset - xs[col],
            VarMap::Split { pos, neg } => xs[pos] - xs[neg],
        };
    }
    let value: f64 = lp
        .objective
        .iter()
        .zip(&x)
        .map(|(&c, &xi)| c * xi)
        .sum();
    let _ = fixed_value;
    Ok(LpSolution {
        status: LpStatus::Optimal,
        x: Some(x),
        value,
    })
}

/// Independent feasibility re-check of a solution witness: every constraint
/// and bound within `1e-7` (relative to the constraint scale).
pub fn verify(lp: &LinearProgram, sol: &LpSolution) -> bool {
    let Some(x) = &sol.x else {
        return false;
    };
    if x.len() != lp.num_vars() {
        return false;
    }
    const TOL: f64 = 1e-7;
    for (row, &b) in lp.a_eq.iter().zip(&lp.b_eq) {
        let v: f64 = row.iter().zip(x).map(|(&a, &xi)| a * xi).sum();
        if (v - b).abs() > TOL * (1.0 + b.abs()) {
            return false;
        }
    }
    for (row, &b) in lp.a_in.iter().zip(&lp.b_in) {
        let v: f64 = row.iter().zip(x).map(|(&a, &xi)| a * xi).sum();
        if v - b > TOL * (1.0 + b.abs()) {
            return false;
        }
    }
    for ((&xi, &l), &u) in x.iter().zip(&lp.lower).zip(&lp.upper) {
        if xi < l - TOL * (1.0 + l.abs()) || xi > u + TOL * (1.0 + u.abs()) {
            return false;
        }
    }
    true
}

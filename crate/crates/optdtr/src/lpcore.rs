//! Linear programming over the state simplex: welfare-gap and welfare-level
//! bounds subject to Bq = p, 1'q = 1, q >= 0, with dual certificates.

use crate::error::{Error, Result};
use crate::matrices::{ProblemMatrices, SparseRowMatrix};
use crate::regimes::RegimeIndex;

/// Numerical thresholds shared across the pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Feasibility: residual above this refutes the model.
    pub feas: f64,
    /// Primal/dual agreement required of a certificate.
    pub dual: f64,
    /// A welfare gap must clear this to count as a strict ranking.
    pub sign: f64,
    /// Welfare ties tighter than this are ambiguous.
    pub tie: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { feas: 1e-8, dual: 1e-6, sign: 1e-7, tie: 1e-9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
}

/// Solution of one bound LP.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: LpStatus,
    pub value: f64,
    /// Optimal state distribution, in the problem's column order.
    pub q: Vec<f64>,
    /// Multipliers on the d_p observation rows plus the adding-up row;
    /// satisfies dual feasibility for the solved sense and
    /// value = dual . [p, 1].
    pub dual: Vec<f64>,
}

/// Interface for the bound solver so the heavy machinery can be swapped.
pub trait LpSolver {
    /// Optimize `c . q` over {q >= 0 : Bq = p, sum q = 1}.
    fn solve(
        &self,
        b: &SparseRowMatrix,
        p: &[f64],
        c: &[f64],
        maximize: bool,
        tol: &Tolerances,
    ) -> Result<SolveResult>;
}

/// Two-phase revised simplex with a dense basis inverse; deterministic
/// pivoting (largest violation, lowest index on ties, Bland fallback).
#[derive(Debug, Clone, Copy, Default)]
pub struct BuiltinSimplex;

const PIVOT_EPS: f64 = 1e-9;
const REFACTOR_EVERY: usize = 64;
const MAX_ITERS: usize = 200_000;
const DEGENERATE_LIMIT: usize = 200;

struct Standardized {
    /// Column-wise constraint matrix, real variables only.
    cols: Vec<Vec<(usize, f64)>>,
    rhs: Vec<f64>,
    m: usize,
}

fn standardize(b: &SparseRowMatrix, p: &[f64]) -> Result<Standardized> {
    if p.len() != b.n_rows() {
        return Err(Error::Dimension(format!(
            "p has {} entries, B has {} rows",
            p.len(),
            b.n_rows()
        )));
    }
    let m = b.n_rows() + 1;
    let n = b.n_cols();
    let mut cols = vec![Vec::new(); n];
    for (i, row) in b.rows().iter().enumerate() {
        // Flip rows with negative right-hand sides so artificials start
        // at nonnegative values.
        let sign = if p[i] < 0.0 { -1.0 } else { 1.0 };
        for &(j, v) in row {
            cols[j].push((i, sign * v));
        }
    }
    for col in cols.iter_mut() {
        col.push((m - 1, 1.0));
    }
    let mut rhs: Vec<f64> = p.iter().map(|&v| v.abs()).collect();
    rhs.push(1.0);
    Ok(Standardized { cols, rhs, m })
}

struct Basis {
    /// For each row, the basic variable: real column j, or n + row for an
    /// artificial.
    labels: Vec<usize>,
    inv: Vec<Vec<f64>>,
    x: Vec<f64>,
    pivots_since_refactor: usize,
}

impl Basis {
    fn new(m: usize, rhs: &[f64]) -> Self {
        let mut inv = vec![vec![0.0; m]; m];
        for (i, row) in inv.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        Basis { labels: Vec::new(), inv, x: rhs.to_vec(), pivots_since_refactor: 0 }
    }

    fn ftran(&self, col: &[(usize, f64)]) -> Vec<f64> {
        let m = self.inv.len();
        let mut out = vec![0.0; m];
        for &(i, v) in col {
            for r in 0..m {
                out[r] += self.inv[r][i] * v;
            }
        }
        out
    }

    /// y = cB . inv
    fn btran(&self, c_basis: &[f64]) -> Vec<f64> {
        let m = self.inv.len();
        let mut y = vec![0.0; m];
        for (i, &ci) in c_basis.iter().enumerate() {
            if ci != 0.0 {
                for j in 0..m {
                    y[j] += ci * self.inv[i][j];
                }
            }
        }
        y
    }

    fn pivot(&mut self, leaving_row: usize, direction: &[f64], entering: usize, step: f64) {
        let m = self.inv.len();
        let piv = direction[leaving_row];
        for i in 0..m {
            if i != leaving_row {
                self.x[i] -= direction[i] * step;
                if self.x[i] < 0.0 && self.x[i] > -PIVOT_EPS {
                    self.x[i] = 0.0;
                }
            }
        }
        self.x[leaving_row] = step;
        // Product-form update of the inverse.
        for j in 0..m {
            self.inv[leaving_row][j] /= piv;
        }
        for i in 0..m {
            if i != leaving_row && direction[i] != 0.0 {
                let f = direction[i];
                for j in 0..m {
                    self.inv[i][j] -= f * self.inv[leaving_row][j];
                }
            }
        }
        self.labels[leaving_row] = entering;
        self.pivots_since_refactor += 1;
    }

    /// Rebuild the inverse from scratch for numerical hygiene.
    fn refactor(&mut self, std: &Standardized) -> Result<()> {
        let m = std.m;
        let n = std.cols.len();
        let mut mat = vec![vec![0.0; m]; m];
        for (pos, &label) in self.labels.iter().enumerate() {
            if label >= n {
                mat[label - n][pos] = 1.0;
            } else {
                for &(i, v) in &std.cols[label] {
                    mat[i][pos] = v;
                }
            }
        }
        let mut inv = vec![vec![0.0; m]; m];
        for (i, row) in inv.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        for col in 0..m {
            let pivot = (col..m)
                .max_by(|&a, &b| mat[a][col].abs().partial_cmp(&mat[b][col].abs()).unwrap())
                .unwrap();
            if mat[pivot][col].abs() < 1e-12 {
                return Err(Error::Numeric("singular basis during refactorization".into()));
            }
            mat.swap(col, pivot);
            inv.swap(col, pivot);
            let p = mat[col][col];
            for j in 0..m {
                mat[col][j] /= p;
                inv[col][j] /= p;
            }
            for r in 0..m {
                if r != col && mat[r][col] != 0.0 {
                    let f = mat[r][col];
                    for j in 0..m {
                        mat[r][j] -= f * mat[col][j];
                        inv[r][j] -= f * inv[col][j];
                    }
                }
            }
        }
        self.inv = inv;
        self.x = (0..m)
            .map(|i| {
                let v: f64 = (0..m).map(|j| self.inv[i][j] * std.rhs[j]).sum();
                if v < 0.0 && v > -1e-7 {
                    0.0
                } else {
                    v
                }
            })
            .collect();
        self.pivots_since_refactor = 0;
        Ok(())
    }
}

/// Run simplex iterations on the current phase until optimal.
///
/// `costs[j]` for real columns; artificials cost `art_cost` and may never
/// re-enter the basis.
fn optimize_phase(
    std: &Standardized,
    basis: &mut Basis,
    costs: &[f64],
    art_cost: f64,
) -> Result<()> {
    let n = std.cols.len();
    let m = std.m;
    let mut degenerate_streak = 0usize;
    for _ in 0..MAX_ITERS {
        if basis.pivots_since_refactor >= REFACTOR_EVERY {
            basis.refactor(std)?;
        }
        let c_basis: Vec<f64> = basis
            .labels
            .iter()
            .map(|&l| if l >= n { art_cost } else { costs[l] })
            .collect();
        let y = basis.btran(&c_basis);
        let bland = degenerate_streak >= DEGENERATE_LIMIT;
        let mut entering = None;
        let mut best = -PIVOT_EPS;
        for j in 0..n {
            let mut reduced = costs[j];
            for &(i, v) in &std.cols[j] {
                reduced -= y[i] * v;
            }
            if reduced < best {
                entering = Some(j);
                if bland {
                    break;
                }
                best = reduced;
            }
        }
        let Some(j) = entering else {
            return Ok(());
        };
        let direction = basis.ftran(&std.cols[j]);
        let mut leaving: Option<usize> = None;
        let mut best_ratio = f64::INFINITY;
        for i in 0..m {
            if direction[i] > PIVOT_EPS {
                let ratio = basis.x[i].max(0.0) / direction[i];
                let better = match leaving {
                    None => true,
                    Some(l) => {
                        ratio < best_ratio - 1e-12
                            || (ratio < best_ratio + 1e-12 && basis.labels[i] < basis.labels[l])
                    }
                };
                if better {
                    leaving = Some(i);
                    best_ratio = ratio;
                }
            }
        }
        let Some(r) = leaving else {
            return Err(Error::Numeric(
                "unbounded direction in a simplex-constrained program".into(),
            ));
        };
        if best_ratio <= 1e-12 {
            degenerate_streak += 1;
        } else {
            degenerate_streak = 0;
        }
        basis.pivot(r, &direction, j, best_ratio);
    }
    Err(Error::Numeric("simplex iteration limit reached".into()))
}

/// Solve min c.x subject to the standardized system; returns the value,
/// primal x over real columns, and the dual row prices.
fn simplex_min(std: &Standardized, costs: &[f64], tol: &Tolerances) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let n = std.cols.len();
    let m = std.m;
    let mut basis = Basis::new(m, &std.rhs);
    basis.labels = (0..m).map(|i| n + i).collect();

    // Phase 1: minimize the artificial mass.
    let zero_costs = vec![0.0; n];
    optimize_phase(std, &mut basis, &zero_costs, 1.0)?;
    let art_mass: f64 = basis
        .labels
        .iter()
        .zip(&basis.x)
        .filter(|(&l, _)| l >= n)
        .map(|(_, &v)| v)
        .sum();
    if art_mass > tol.feas {
        return Err(Error::Infeasible);
    }

    // Drive basic artificials out where a real pivot exists; rows whose
    // tableau row is entirely zero are redundant and their artificial is
    // inert (every future direction has a zero in that row).
    for row in 0..m {
        if basis.labels[row] < n {
            continue;
        }
        let tableau_row: Vec<f64> = basis.inv[row].clone();
        let mut found = None;
        for j in 0..n {
            let mut v = 0.0;
            for &(i, coef) in &std.cols[j] {
                v += tableau_row[i] * coef;
            }
            if v.abs() > 1e-7 {
                found = Some((j, v));
                break;
            }
        }
        if let Some((j, _)) = found {
            let direction = basis.ftran(&std.cols[j]);
            basis.pivot(row, &direction, j, 0.0);
        }
    }

    // Phase 2 on the true objective; artificials priced out of contention.
    optimize_phase(std, &mut basis, costs, 0.0)?;

    let mut x = vec![0.0; n];
    let mut value = 0.0;
    for (pos, &label) in basis.labels.iter().enumerate() {
        if label < n {
            x[label] = basis.x[pos];
            value += costs[label] * basis.x[pos];
        }
    }
    let c_basis: Vec<f64> = basis
        .labels
        .iter()
        .map(|&l| if l >= n { 0.0 } else { costs[l] })
        .collect();
    let y = basis.btran(&c_basis);
    Ok((value, x, y))
}

impl LpSolver for BuiltinSimplex {
    fn solve(
        &self,
        b: &SparseRowMatrix,
        p: &[f64],
        c: &[f64],
        maximize: bool,
        tol: &Tolerances,
    ) -> Result<SolveResult> {
        if c.len() != b.n_cols() {
            return Err(Error::Dimension(format!(
                "objective has {} entries, B has {} columns",
                c.len(),
                b.n_cols()
            )));
        }
        let std = standardize(b, p)?;
        let costs: Vec<f64> = if maximize { c.iter().map(|&v| -v).collect() } else { c.to_vec() };
        let (value, x, y) = simplex_min(&std, &costs, tol)?;
        // Undo the row flips applied for negative right-hand sides.
        let mut dual: Vec<f64> = y
            .iter()
            .enumerate()
            .map(|(i, &v)| if i < p.len() && p[i] < 0.0 { -v } else { v })
            .collect();
        let mut value = value;
        if maximize {
            value = -value;
            dual.iter_mut().for_each(|v| *v = -*v);
        }
        Ok(SolveResult { status: LpStatus::Optimal, value, q: x, dual })
    }
}

/// Sharp lower and upper bounds on the welfare gap W_k - W_k'.
pub fn gap_bounds(
    pm: &ProblemMatrices,
    p: &[f64],
    k: RegimeIndex,
    k_prime: RegimeIndex,
    solver: &dyn LpSolver,
    tol: &Tolerances,
) -> Result<(f64, f64)> {
    let delta = pm.delta(k, k_prime)?;
    let lo = solver.solve(&pm.b, p, &delta, false, tol)?;
    let hi = solver.solve(&pm.b, p, &delta, true, tol)?;
    Ok((lo.value, hi.value))
}

/// Sharp bounds on the welfare level of a single regime.
pub fn welfare_bounds(
    pm: &ProblemMatrices,
    p: &[f64],
    k: RegimeIndex,
    solver: &dyn LpSolver,
    tol: &Tolerances,
) -> Result<(f64, f64)> {
    let c = pm
        .a
        .get(k.0.wrapping_sub(1))
        .ok_or_else(|| Error::Invalid(format!("regime index {} out of range", k.0)))?;
    let lo = solver.solve(&pm.b, p, c, false, tol)?;
    let hi = solver.solve(&pm.b, p, c, true, tol)?;
    Ok((lo.value, hi.value))
}

/// Gap bounds for every ordered pair of regimes.
///
/// One maximization per ordered pair (|K|(|K|-1) of them); the lower
/// bounds follow from L_{k,k'} = -U_{k',k}.  Row/column index 0 is
/// regime 1; diagonals are 0.
pub fn all_gap_bounds(
    pm: &ProblemMatrices,
    p: &[f64],
    solver: &dyn LpSolver,
    tol: &Tolerances,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let kk = pm.n_regimes();
    let mut upper = vec![vec![0.0; kk]; kk];
    for k in 1..=kk {
        for k_prime in 1..=kk {
            if k == k_prime {
                continue;
            }
            let delta = pm.delta(RegimeIndex(k), RegimeIndex(k_prime))?;
            let hi = solver.solve(&pm.b, p, &delta, true, tol)?;
            upper[k - 1][k_prime - 1] = hi.value;
        }
    }
    let mut lower = vec![vec![0.0; kk]; kk];
    for k in 0..kk {
        for k_prime in 0..kk {
            if k != k_prime {
                lower[k][k_prime] = -upper[k_prime][k];
            }
        }
    }
    Ok((lower, upper))
}

/// Minimal L1 residual of Bq = p over the simplex; 0 iff p is consistent
/// with the model.
pub fn feasibility_gap(b: &SparseRowMatrix, p: &[f64], tol: &Tolerances) -> Result<f64> {
    l1_residual(b, p, tol).map(|(v, _)| v)
}

/// The simplex point whose image under B is L1-closest to p.
pub fn l1_projection(b: &SparseRowMatrix, p: &[f64], tol: &Tolerances) -> Result<Vec<f64>> {
    l1_residual(b, p, tol).map(|(_, q)| q)
}

fn l1_residual(b: &SparseRowMatrix, p: &[f64], tol: &Tolerances) -> Result<(f64, Vec<f64>)> {
    if p.len() != b.n_rows() {
        return Err(Error::Dimension(format!(
            "p has {} entries, B has {} rows",
            p.len(),
            b.n_rows()
        )));
    }
    let m_obs = b.n_rows();
    let m = m_obs + 1;
    let n = b.n_cols();
    // Columns: q (with the adding-up row), then u_i (+1) and v_i (-1)
    // slacks touching only their observation row.
    let mut cols = vec![Vec::new(); n + 2 * m_obs];
    for (i, row) in b.rows().iter().enumerate() {
        let sign = if p[i] < 0.0 { -1.0 } else { 1.0 };
        for &(j, v) in row {
            cols[j].push((i, sign * v));
        }
        cols[n + i].push((i, sign));
        cols[n + m_obs + i].push((i, -sign));
    }
    for col in cols.iter_mut().take(n) {
        col.push((m - 1, 1.0));
    }
    let mut rhs: Vec<f64> = p.iter().map(|&v| v.abs()).collect();
    rhs.push(1.0);
    let std = Standardized { cols, rhs, m };
    let mut costs = vec![0.0; n + 2 * m_obs];
    for c in costs.iter_mut().skip(n) {
        *c = 1.0;
    }
    let (value, x, _) = simplex_min(&std, &costs, tol)?;
    Ok((value, x[..n].to_vec()))
}

/// Exact-arithmetic fallback used to certify edge signs on small layouts.
pub mod exact {
    use super::*;
    use num::rational::BigRational;
    use num::traits::{FromPrimitive, Signed, ToPrimitive, Zero};

    /// Largest column count accepted by the dense rational tableau.
    pub const MAX_COLUMNS: usize = 4096;

    /// Optimize `c . q` over {q >= 0 : Bq = p, sum q = 1} in exact
    /// rational arithmetic (Bland's rule, so termination is guaranteed).
    pub fn solve_exact(
        b: &SparseRowMatrix,
        p: &[BigRational],
        c: &[BigRational],
        maximize: bool,
    ) -> Result<(BigRational, Vec<BigRational>)> {
        let n = b.n_cols();
        if n > MAX_COLUMNS {
            return Err(Error::Dimension(format!(
                "{n} columns exceed the exact solver's cap of {MAX_COLUMNS}"
            )));
        }
        if p.len() != b.n_rows() || c.len() != n {
            return Err(Error::Dimension("exact solver input shapes disagree".into()));
        }
        let m = b.n_rows() + 1;
        let zero = BigRational::zero();
        let one = BigRational::from_integer(1.into());
        // Dense tableau columns: n real + m artificial.
        let mut a = vec![vec![zero.clone(); n + m]; m];
        let mut rhs: Vec<BigRational> = p.iter().map(|v| v.abs()).collect();
        rhs.push(one.clone());
        for (i, row) in b.rows().iter().enumerate() {
            let neg = p[i].is_negative();
            for &(j, v) in row {
                let val = BigRational::from_f64(v).unwrap();
                a[i][j] = if neg { -val } else { val };
            }
        }
        for j in 0..n {
            a[m - 1][j] = one.clone();
        }
        for i in 0..m {
            a[i][n + i] = one.clone();
        }
        let costs: Vec<BigRational> = if maximize {
            c.iter().map(|v| -v.clone()).collect()
        } else {
            c.to_vec()
        };

        let mut basis: Vec<usize> = (n..n + m).collect();
        let mut x = rhs;

        // Phase 1.
        let phase1: Vec<BigRational> = (0..n + m)
            .map(|j| if j >= n { one.clone() } else { zero.clone() })
            .collect();
        bland_optimize(&mut a, &mut x, &mut basis, &phase1, n + m)?;
        let infeasible = basis
            .iter()
            .zip(&x)
            .any(|(&bj, v)| bj >= n && v.is_positive());
        if infeasible {
            return Err(Error::Infeasible);
        }
        // Phase 2: artificials barred from entering.
        let mut phase2 = costs.clone();
        phase2.extend((0..m).map(|_| zero.clone()));
        bland_optimize(&mut a, &mut x, &mut basis, &phase2, n)?;

        let mut q = vec![zero.clone(); n];
        let mut value = zero.clone();
        for (pos, &bj) in basis.iter().enumerate() {
            if bj < n {
                q[bj] = x[pos].clone();
                value += &costs[bj] * &x[pos];
            }
        }
        if maximize {
            value = -value;
        }
        Ok((value, q))
    }

    /// Bland-rule primal simplex on a dense tableau; columns with index
    /// >= `enter_limit` may not enter.
    fn bland_optimize(
        a: &mut [Vec<BigRational>],
        x: &mut [BigRational],
        basis: &mut [usize],
        costs: &[BigRational],
        enter_limit: usize,
    ) -> Result<()> {
        let m = a.len();
        let n_total = a[0].len();
        loop {
            // Reduced costs via explicit elimination state: the tableau is
            // kept in canonical form with respect to the basis.
            let mut entering = None;
            for j in 0..enter_limit.min(n_total) {
                if basis.contains(&j) {
                    continue;
                }
                let mut reduced = costs[j].clone();
                for i in 0..m {
                    reduced -= &costs[basis[i]] * &a[i][j];
                }
                if reduced.is_negative() {
                    entering = Some(j);
                    break;
                }
            }
            let Some(j) = entering else { return Ok(()) };
            let mut leaving: Option<usize> = None;
            for i in 0..m {
                if a[i][j].is_positive() {
                    let better = match leaving {
                        None => true,
                        Some(l) => {
                            let cur = &x[i] / &a[i][j];
                            let best = &x[l] / &a[l][j];
                            cur < best || (cur == best && basis[i] < basis[l])
                        }
                    };
                    if better {
                        leaving = Some(i);
                    }
                }
            }
            let Some(r) = leaving else {
                return Err(Error::Numeric("unbounded exact tableau".into()));
            };
            let piv = a[r][j].clone();
            for col in 0..n_total {
                a[r][col] /= &piv;
            }
            x[r] /= &piv;
            for i in 0..m {
                if i != r && !a[i][j].is_zero() {
                    let f = a[i][j].clone();
                    for col in 0..n_total {
                        let delta = &f * &a[r][col];
                        a[i][col] -= delta;
                    }
                    let delta = &f * &x[r];
                    x[i] -= delta;
                }
            }
            basis[r] = j;
        }
    }

    /// Convenience: exact value as f64 for comparison against the float
    /// solver.
    pub fn value_to_f64(v: &BigRational) -> f64 {
        v.to_f64().unwrap()
    }

    pub fn rationalize(xs: &[f64]) -> Vec<BigRational> {
        xs.iter().map(|&v| BigRational::from_f64(v).unwrap()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regimes::{Horizon, WelfareSpec};
    use crate::statespace::StateSpaceLayout;

    fn t1_problem() -> (StateSpaceLayout, ProblemMatrices) {
        let layout = StateSpaceLayout::build(&Horizon::full(1).unwrap(), true).unwrap();
        let pm = ProblemMatrices::build(&layout, &WelfareSpec::terminal(1)).unwrap();
        (layout, pm)
    }

    fn random_simplex(n: usize, rng: &mut u64) -> Vec<f64> {
        let mut next = || {
            *rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((*rng >> 11) as f64) / ((1u64 << 53) as f64)
        };
        let mut q: Vec<f64> = (0..n).map(|_| -next().ln()).collect();
        let sum: f64 = q.iter().sum();
        q.iter_mut().for_each(|v| *v /= sum);
        q
    }

    // Frozen dual-vertex tables for the single-period instrumental-variable
    // bound on E[Y(1)] - E[Y(0)].  Each row is (coefficients on the six
    // observation probabilities, constant term); the upper bound is the
    // minimum of the affine forms, the lower bound the maximum of the
    // negated forms.  Derived offline by exact vertex enumeration of the
    // dual feasible sets and cross-checked against an independent solver.
    const UPPER_VERTICES: [[f64; 7]; 8] = [
        [-1.0, -1.0, 0.0, 0.0, -1.0, -2.0, 2.0],
        [0.0, -2.0, -1.0, 1.0, 1.0, 0.0, 1.0],
        [0.0, -1.0, -2.0, -1.0, -1.0, 0.0, 2.0],
        [0.0, -1.0, -1.0, 0.0, 0.0, 0.0, 1.0],
        [0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0],
        [0.0, 0.0, -1.0, 0.0, -1.0, 0.0, 1.0],
        [0.0, 0.0, 0.0, 0.0, -1.0, -1.0, 1.0],
        [1.0, 1.0, 0.0, 0.0, -2.0, -1.0, 1.0],
    ];
    const LOWER_VERTICES: [[f64; 7]; 8] = [
        [-1.0, -1.0, 0.0, 1.0, 2.0, 2.0, 0.0],
        [-1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0],
        [-1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0],
        [0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0],
        [1.0, 1.0, 0.0, -1.0, 1.0, 1.0, 0.0],
        [1.0, 1.0, 1.0, -1.0, 0.0, 0.0, 0.0],
        [1.0, 2.0, 2.0, -1.0, -1.0, 0.0, 0.0],
    ];

    fn iv_oracle(p: &[f64]) -> (f64, f64) {
        let eval = |v: &[f64; 7]| -> f64 {
            v[..6].iter().zip(p).map(|(&c, &pi)| c * pi).sum::<f64>() + v[6]
        };
        let upper = UPPER_VERTICES.iter().map(eval).fold(f64::INFINITY, f64::min);
        let lower = LOWER_VERTICES
            .iter()
            .map(|v| -eval(v))
            .fold(f64::NEG_INFINITY, f64::max);
        (lower, upper)
    }

    #[test]
    fn iv_bounds_match_oracle() {
        let (_, pm) = t1_problem();
        let tol = Tolerances::default();
        let mut rng = 2024u64;
        for trial in 0..100 {
            let q = random_simplex(16, &mut rng);
            let p = pm.b.apply(&q);
            let (lo, hi) = gap_bounds(&pm, &p, RegimeIndex(2), RegimeIndex(1), &BuiltinSimplex, &tol).unwrap();
            let (olo, ohi) = iv_oracle(&p);
            assert!((lo - olo).abs() <= 1e-8, "trial {trial}: lower {lo} vs {olo}");
            assert!((hi - ohi).abs() <= 1e-8, "trial {trial}: upper {hi} vs {ohi}");
            // The true gap is attainable, so it must sit inside the bounds.
            let delta = pm.delta(RegimeIndex(2), RegimeIndex(1)).unwrap();
            let truth: f64 = delta.iter().zip(&q).map(|(&c, &qs)| c * qs).sum();
            assert!(lo <= truth + 1e-8 && truth <= hi + 1e-8);
        }
    }

    #[test]
    fn dual_certificates() {
        let (_, pm) = t1_problem();
        let tol = Tolerances::default();
        let mut rng = 5u64;
        for _ in 0..20 {
            let q = random_simplex(16, &mut rng);
            let p = pm.b.apply(&q);
            let delta = pm.delta(RegimeIndex(2), RegimeIndex(1)).unwrap();
            for maximize in [false, true] {
                let res = BuiltinSimplex.solve(&pm.b, &p, &delta, maximize, &tol).unwrap();
                // value = dual . [p, 1]
                let mut dual_value: f64 = res.dual[..6].iter().zip(&p).map(|(&l, &pi)| l * pi).sum();
                dual_value += res.dual[6];
                assert!((dual_value - res.value).abs() <= tol.dual);
                // Dual feasibility columnwise.
                for j in 0..16 {
                    let mut lhs = 0.0;
                    for (i, row) in pm.b.rows().iter().enumerate() {
                        if row.binary_search_by_key(&j, |&(c, _)| c).is_ok() {
                            lhs += res.dual[i];
                        }
                    }
                    lhs += res.dual[6];
                    if maximize {
                        assert!(lhs >= delta[j] - 1e-7);
                    } else {
                        assert!(lhs <= delta[j] + 1e-7);
                    }
                }
            }
        }
    }

    #[test]
    fn antisymmetry_of_independent_solves() {
        let (_, pm) = t1_problem();
        let tol = Tolerances::default();
        let mut rng = 31u64;
        for _ in 0..20 {
            let q = random_simplex(16, &mut rng);
            let p = pm.b.apply(&q);
            let (l12, u12) = gap_bounds(&pm, &p, RegimeIndex(1), RegimeIndex(2), &BuiltinSimplex, &tol).unwrap();
            let (l21, u21) = gap_bounds(&pm, &p, RegimeIndex(2), RegimeIndex(1), &BuiltinSimplex, &tol).unwrap();
            assert!((u12 + l21).abs() <= 2e-6);
            assert!((u21 + l12).abs() <= 2e-6);
        }
    }

    #[test]
    fn value_concavity_in_p() {
        // The max-LP value is concave in the right-hand side, the min-LP
        // value convex.
        let (_, pm) = t1_problem();
        let tol = Tolerances::default();
        let mut rng = 77u64;
        for _ in 0..10 {
            let qa = random_simplex(16, &mut rng);
            let qb = random_simplex(16, &mut rng);
            let pa = pm.b.apply(&qa);
            let pb = pm.b.apply(&qb);
            let alpha = 0.4;
            let pmix: Vec<f64> = pa.iter().zip(&pb).map(|(&a, &b)| alpha * a + (1.0 - alpha) * b).collect();
            let (la, ua) = gap_bounds(&pm, &pa, RegimeIndex(2), RegimeIndex(1), &BuiltinSimplex, &tol).unwrap();
            let (lb, ub) = gap_bounds(&pm, &pb, RegimeIndex(2), RegimeIndex(1), &BuiltinSimplex, &tol).unwrap();
            let (lm, um) = gap_bounds(&pm, &pmix, RegimeIndex(2), RegimeIndex(1), &BuiltinSimplex, &tol).unwrap();
            assert!(um >= alpha * ua + (1.0 - alpha) * ub - 1e-8);
            assert!(lm <= alpha * la + (1.0 - alpha) * lb + 1e-8);
        }
    }

    #[test]
    fn infeasible_p_detected() {
        let (_, pm) = t1_problem();
        let tol = Tolerances::default();
        // A z block carrying probability mass 2.7 cannot come from any q.
        let p = vec![0.9, 0.9, 0.9, 0.2, 0.2, 0.2];
        let delta = pm.delta(RegimeIndex(2), RegimeIndex(1)).unwrap();
        match BuiltinSimplex.solve(&pm.b, &p, &delta, true, &tol) {
            Err(Error::Infeasible) => {}
            other => panic!("expected infeasibility, got {other:?}"),
        }
        let gap = feasibility_gap(&pm.b, &p, &tol).unwrap();
        assert!(gap > 1.0);
        // A consistent p has zero residual.
        let mut rng = 1u64;
        let q = random_simplex(16, &mut rng);
        let good = pm.b.apply(&q);
        assert!(feasibility_gap(&pm.b, &good, &tol).unwrap() <= 1e-9);
    }

    #[test]
    fn point_mass_p() {
        let (layout, pm) = t1_problem();
        let tol = Tolerances::default();
        let s = 0b0110; // Y(0)=0, Y(1)=1, D(z=0)=1, D(z=1)=0
        let mut q = vec![0.0; 16];
        q[s] = 1.0;
        let p = pm.b.apply(&q);
        let delta = pm.delta(RegimeIndex(2), RegimeIndex(1)).unwrap();
        let truth = delta[s];
        let (lo, hi) = gap_bounds(&pm, &p, RegimeIndex(2), RegimeIndex(1), &BuiltinSimplex, &tol).unwrap();
        assert!(lo <= truth + 1e-9 && truth <= hi + 1e-9);
        assert!(lo >= -1.0 - 1e-9 && hi <= 1.0 + 1e-9);
        let _ = layout;
    }

    #[test]
    fn welfare_level_bounds() {
        let (_, pm) = t1_problem();
        let tol = Tolerances::default();
        let mut rng = 9u64;
        let q = random_simplex(16, &mut rng);
        let p = pm.b.apply(&q);
        for k in 1..=2 {
            let (lo, hi) = welfare_bounds(&pm, &p, RegimeIndex(k), &BuiltinSimplex, &tol).unwrap();
            let truth: f64 = pm.a[k - 1].iter().zip(&q).map(|(&c, &qs)| c * qs).sum();
            assert!(-1e-9 <= lo && hi <= 1.0 + 1e-9);
            assert!(lo <= truth + 1e-9 && truth <= hi + 1e-9);
        }
    }

    #[test]
    fn all_pairs_consistent() {
        let (_, pm) = t1_problem();
        let tol = Tolerances::default();
        let mut rng = 13u64;
        let q = random_simplex(16, &mut rng);
        let p = pm.b.apply(&q);
        let (lower, upper) = all_gap_bounds(&pm, &p, &BuiltinSimplex, &tol).unwrap();
        assert_eq!(lower.len(), 2);
        for k in 0..2 {
            for kp in 0..2 {
                if k == kp {
                    assert_eq!(lower[k][kp], 0.0);
                } else {
                    assert!(lower[k][kp] <= upper[k][kp] + 1e-9);
                    assert_eq!(lower[k][kp], -upper[kp][k]);
                }
            }
        }
    }

    #[test]
    fn exact_matches_float_t1() {
        let (_, pm) = t1_problem();
        let tol = Tolerances::default();
        let mut rng = 21u64;
        for _ in 0..10 {
            let q = random_simplex(16, &mut rng);
            let p = pm.b.apply(&q);
            let delta = pm.delta(RegimeIndex(2), RegimeIndex(1)).unwrap();
            for maximize in [false, true] {
                let float = BuiltinSimplex.solve(&pm.b, &p, &delta, maximize, &tol).unwrap();
                let (val, _) = exact::solve_exact(
                    &pm.b,
                    &exact::rationalize(&p),
                    &exact::rationalize(&delta),
                    maximize,
                )
                .unwrap();
                assert!((float.value - exact::value_to_f64(&val)).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn exact_column_cap() {
        let big = SparseRowMatrix::new(vec![vec![]], 5000);
        let err = exact::solve_exact(&big, &exact::rationalize(&[0.0]), &exact::rationalize(&vec![0.0; 5000]), false);
        assert!(matches!(err, Err(Error::Dimension(_))));
    }
}

//! Confidence set for the best-regime candidates: dual polyhedra,
//! vertex enumeration at small scale, studentized min statistics, and a
//! stratified-bootstrap elimination procedure.

use crate::error::{Error, Result};
use crate::lpcore::{feasibility_gap, l1_projection, BuiltinSimplex, LpSolver, Tolerances};
use crate::matrices::{ProblemMatrices, SparseRowMatrix};
use crate::regimes::RegimeIndex;
use crate::statespace::StateSpaceLayout;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Default cap on the dual dimension for vertex enumeration.
pub const DEFAULT_DIM_CAP: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Upper,
    Lower,
}

/// Feasible set of one bound's dual program: {lambda : for every active
/// state, (column of B stacked with 1) . lambda >= rhs}.
#[derive(Debug, Clone)]
pub struct DualPolyhedron {
    /// One constraint per active state, sparse over the dim coordinates.
    pub constraints: Vec<Vec<(usize, f64)>>,
    pub rhs: Vec<f64>,
    pub dim: usize,
    pub k: usize,
    pub k_prime: usize,
    pub side: Side,
}

/// Dual pair for the gap W_k - W_k': the upper side certifies U (as a
/// minimum of p~ . lambda), the lower side certifies -L.
pub fn dualize(
    pm: &ProblemMatrices,
    k: RegimeIndex,
    k_prime: RegimeIndex,
) -> Result<(DualPolyhedron, DualPolyhedron)> {
    let delta = pm.delta(k, k_prime)?;
    let dim = pm.d_p() + 1;
    let n = pm.n_states();
    let mut constraints = vec![Vec::new(); n];
    for (i, row) in pm.b.rows().iter().enumerate() {
        for &(j, v) in row {
            constraints[j].push((i, v));
        }
    }
    for c in constraints.iter_mut() {
        c.push((dim - 1, 1.0));
    }
    let upper = DualPolyhedron {
        constraints: constraints.clone(),
        rhs: delta.clone(),
        dim,
        k: k.0,
        k_prime: k_prime.0,
        side: Side::Upper,
    };
    let lower = DualPolyhedron {
        constraints,
        rhs: delta.iter().map(|&v| -v).collect(),
        dim,
        k: k.0,
        k_prime: k_prime.0,
        side: Side::Lower,
    };
    Ok((upper, lower))
}

/// All vertices of a pointed dual polyhedron, plus the canonical recession
/// ray along the adding-up coordinate.
#[derive(Debug, Clone)]
pub struct VertexSet {
    pub vertices: Vec<Vec<f64>>,
    pub rays: Vec<Vec<f64>>,
    pub k: usize,
    pub k_prime: usize,
    pub side: Side,
}

const VERTEX_FEAS_EPS: f64 = 1e-7;

pub fn enumerate_vertices(poly: &DualPolyhedron, dim_cap: usize) -> Result<VertexSet> {
    let m = poly.dim;
    if m > dim_cap {
        return Err(Error::Dimension(format!(
            "dual dimension {m} exceeds the enumeration cap {dim_cap}; use the resolve mode"
        )));
    }
    let n = poly.constraints.len();
    if n < m {
        return Err(Error::Dimension("fewer constraints than dimensions".into()));
    }
    let mut n_choose_m = 1f64;
    for i in 0..m {
        n_choose_m *= (n - i) as f64 / (i + 1) as f64;
    }
    if n_choose_m > 5e6 {
        return Err(Error::Dimension(format!(
            "{n} constraints in dimension {m} give too many bases to enumerate"
        )));
    }
    // Dense constraint rows.
    let rows: Vec<Vec<f64>> = poly
        .constraints
        .iter()
        .map(|c| {
            let mut r = vec![0.0; m];
            for &(i, v) in c {
                r[i] = v;
            }
            r
        })
        .collect();

    let mut vertices: Vec<Vec<f64>> = Vec::new();
    let mut idx: Vec<usize> = (0..m).collect();
    loop {
        if let Some(lambda) = solve_square(&rows, &poly.rhs, &idx) {
            let feasible = rows.iter().zip(&poly.rhs).all(|(row, &c)| {
                row.iter().zip(&lambda).map(|(&a, &l)| a * l).sum::<f64>() >= c - VERTEX_FEAS_EPS
            });
            if feasible
                && !vertices
                    .iter()
                    .any(|v| v.iter().zip(&lambda).all(|(&a, &b)| (a - b).abs() < 1e-7))
            {
                vertices.push(lambda);
            }
        }
        // Next m-combination of n in lexicographic order.
        let mut advanced = false;
        for pos in (0..m).rev() {
            if idx[pos] < n - m + pos {
                idx[pos] += 1;
                for j in pos + 1..m {
                    idx[j] = idx[j - 1] + 1;
                }
                advanced = true;
                break;
            }
        }
        if !advanced {
            break;
        }
    }
    let mut ray = vec![0.0; m];
    ray[m - 1] = 1.0;
    Ok(VertexSet {
        vertices,
        rays: vec![ray],
        k: poly.k,
        k_prime: poly.k_prime,
        side: poly.side,
    })
}

/// Solve rows[idx] . lambda = rhs[idx]; None when the subsystem is
/// singular.
fn solve_square(rows: &[Vec<f64>], rhs: &[f64], idx: &[usize]) -> Option<Vec<f64>> {
    let m = idx.len();
    let mut a: Vec<Vec<f64>> = idx.iter().map(|&i| rows[i].clone()).collect();
    let mut b: Vec<f64> = idx.iter().map(|&i| rhs[i]).collect();
    for col in 0..m {
        let pivot = (col..m).max_by(|&x, &y| a[x][col].abs().partial_cmp(&a[y][col].abs()).unwrap())?;
        if a[pivot][col].abs() < 1e-10 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        let p = a[col][col];
        for j in col..m {
            a[col][j] /= p;
        }
        b[col] /= p;
        for r in 0..m {
            if r != col && a[r][col] != 0.0 {
                let f = a[r][col];
                for j in col..m {
                    a[r][j] -= f * a[col][j];
                }
                b[r] -= f * b[col];
            }
        }
    }
    Some(b)
}

/// Value of p~ . lambda for the stacked vector [p, 1].
pub fn dual_value(lambda: &[f64], p: &[f64]) -> f64 {
    lambda[..p.len()].iter().zip(p).map(|(&l, &pi)| l * pi).sum::<f64>() + lambda[p.len()]
}

/// Studentized value of p~ . lambda under the per-stratum multinomial
/// sampling model.  `block_size` is the number of retained cells per
/// instrument path; se = 0 yields an infinite statistic.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TStat {
    pub value: f64,
    pub se: f64,
    pub t: f64,
}

pub fn t_statistic(
    lambda: &[f64],
    p: &[f64],
    z_counts: &[usize],
    block_size: usize,
) -> TStat {
    let value = dual_value(lambda, p);
    let mut var = 0.0;
    for (zi, &n_z) in z_counts.iter().enumerate() {
        let block = zi * block_size..(zi + 1) * block_size;
        let mut mean = 0.0;
        let mut sq = 0.0;
        for i in block {
            mean += lambda[i] * p[i];
            sq += lambda[i] * lambda[i] * p[i];
        }
        if n_z > 0 {
            var += (sq - mean * mean) / n_z as f64;
        }
    }
    let se = var.max(0.0).sqrt();
    let t = if se > 0.0 {
        value / se
    } else if value >= 0.0 {
        f64::INFINITY
    } else {
        f64::NEG_INFINITY
    };
    TStat { value, se, t }
}

pub fn t_statistics(
    vertex_set: &VertexSet,
    p: &[f64],
    z_counts: &[usize],
    block_size: usize,
) -> Vec<TStat> {
    vertex_set
        .vertices
        .iter()
        .map(|l| t_statistic(l, p, z_counts, block_size))
        .collect()
}

/// Cell frequencies per instrument path, in the B row order, plus the
/// per-path observation counts.
pub fn empirical(
    rows: &[(Vec<u8>, Vec<u8>, Vec<u8>)],
    layout: &StateSpaceLayout,
) -> Result<(Vec<f64>, Vec<usize>)> {
    let z_grid = layout.z_grid();
    let n_cells = 1usize << (2 * layout.horizon().periods());
    let block = n_cells - 1;
    let mut counts = vec![0usize; z_grid.len() * block];
    let mut z_counts = vec![0usize; z_grid.len()];
    for (y, d, z) in rows {
        let zi = z_grid
            .iter()
            .position(|g| g == z)
            .ok_or_else(|| Error::Invalid(format!("instrument path {z:?} outside the design")))?;
        z_counts[zi] += 1;
        let cell = layout.cell_index(y, d);
        if cell < block {
            counts[zi * block + cell] += 1;
        }
    }
    for (zi, &c) in z_counts.iter().enumerate() {
        if c == 0 {
            let z_str: String = z_grid[zi].iter().map(|b| b.to_string()).collect();
            return Err(Error::EmptyInstrumentCell(format!("z={z_str}")));
        }
    }
    let p = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| c as f64 / z_counts[i / block] as f64)
        .collect();
    Ok((p, z_counts))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Dual vertex enumeration with studentized min statistics
    /// (dimension-capped).
    Vertex,
    /// Re-solve the primal bound programs on each bootstrap draw.
    Resolve,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CsConfig {
    pub alpha: f64,
    pub reps: usize,
    pub mode: Mode,
    pub seed: u64,
    pub dim_cap: usize,
}

impl CsConfig {
    pub fn new(alpha: f64, reps: usize, mode: Mode, seed: u64) -> Result<Self> {
        if !(0.0 < alpha && alpha < 1.0) {
            return Err(Error::Invalid("alpha must lie in (0, 1)".into()));
        }
        if reps == 0 {
            return Err(Error::Invalid("bootstrap needs at least one replicate".into()));
        }
        Ok(CsConfig { alpha, reps, mode, seed, dim_cap: DEFAULT_DIM_CAP })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepRecord {
    pub eliminated: usize,
    pub statistic: f64,
    pub critical: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfidenceSet {
    pub survivors: Vec<usize>,
    pub steps: Vec<StepRecord>,
    pub alpha: f64,
    pub reps: usize,
    pub mode: Mode,
    pub seed: u64,
}

/// Replace an observation vector with its closest model-consistent one
/// (in L1) when sampling noise pushes it outside the feasible set.
fn project_if_infeasible(
    b: &SparseRowMatrix,
    p: &[f64],
    tol: &Tolerances,
) -> Result<Vec<f64>> {
    let gap = feasibility_gap(b, p, tol)?;
    if gap <= tol.feas {
        return Ok(p.to_vec());
    }
    let q = l1_projection(b, p, tol)?;
    Ok(b.apply(&q))
}

struct PairKey {
    k: usize,
    k_prime: usize,
}

/// Bootstrap elimination procedure over the regimes of `pm`.
///
/// Tests the joint incomparability null on the surviving set with a min
/// statistic; on rejection eliminates the regime with the smallest
/// statistic and repeats, at most |K| - 1 times.
pub fn cs_procedure(
    rows: &[(Vec<u8>, Vec<u8>, Vec<u8>)],
    layout: &StateSpaceLayout,
    pm: &ProblemMatrices,
    cfg: &CsConfig,
    tol: &Tolerances,
) -> Result<ConfidenceSet> {
    let (p_hat, z_counts) = empirical(rows, layout)?;
    let n_cells = 1usize << (2 * layout.horizon().periods());
    let block = n_cells - 1;
    let kk = pm.n_regimes();

    // Ordered pairs in a fixed order.
    let pairs: Vec<PairKey> = (1..=kk)
        .flat_map(|k| {
            (1..=kk)
                .filter(move |&kp| kp != k)
                .map(move |kp| PairKey { k, k_prime: kp })
        })
        .collect();

    // Pre-draw bootstrap resamples (stratified within instrument paths)
    // as cell-count tables; shared across elimination steps so the
    // procedure is monotone in alpha.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let z_grid = layout.z_grid();
    let mut strata: Vec<Vec<usize>> = vec![Vec::new(); z_grid.len()];
    for (y, d, z) in rows {
        let zi = z_grid.iter().position(|g| g == z).unwrap();
        let cell = layout.cell_index(y, d);
        strata[zi].push(cell);
    }
    let mut boot_p: Vec<Vec<f64>> = Vec::with_capacity(cfg.reps);
    for _ in 0..cfg.reps {
        let mut p_b = vec![0.0; z_grid.len() * block];
        for (zi, stratum) in strata.iter().enumerate() {
            let n_z = stratum.len();
            for _ in 0..n_z {
                let cell = stratum[rng.gen_range(0..n_z)];
                if cell < block {
                    p_b[zi * block + cell] += 1.0;
                }
            }
            for c in p_b[zi * block..(zi + 1) * block].iter_mut() {
                *c /= n_z as f64;
            }
        }
        boot_p.push(p_b);
    }

    // Per-pair observed statistic and per-replicate recentered statistic.
    let mut stat = vec![vec![f64::INFINITY; kk + 1]; kk + 1];
    let mut boot_stat = vec![vec![vec![f64::INFINITY; kk + 1]; kk + 1]; cfg.reps];

    match cfg.mode {
        Mode::Vertex => {
            for pair in &pairs {
                let (upper, _) = dualize(pm, RegimeIndex(pair.k), RegimeIndex(pair.k_prime))?;
                let vs = enumerate_vertices(&upper, cfg.dim_cap)?;
                let stats = t_statistics(&vs, &p_hat, &z_counts, block);
                stat[pair.k][pair.k_prime] =
                    stats.iter().map(|s| s.t).fold(f64::INFINITY, f64::min);
                for (r, p_b) in boot_p.iter().enumerate() {
                    let mut min_t = f64::INFINITY;
                    for (lambda, s) in vs.vertices.iter().zip(&stats) {
                        if s.se > 0.0 {
                            let vb = dual_value(lambda, p_b);
                            min_t = min_t.min((vb - s.value) / s.se);
                        }
                    }
                    boot_stat[r][pair.k][pair.k_prime] = min_t;
                }
            }
        }
        Mode::Resolve => {
            let solver = BuiltinSimplex;
            let p_use = project_if_infeasible(&pm.b, &p_hat, tol)?;
            let mut u_hat = vec![vec![0.0; kk + 1]; kk + 1];
            for pair in &pairs {
                let delta = pm.delta(RegimeIndex(pair.k), RegimeIndex(pair.k_prime))?;
                let res = solver.solve(&pm.b, &p_use, &delta, true, tol)?;
                u_hat[pair.k][pair.k_prime] = res.value;
                stat[pair.k][pair.k_prime] = res.value;
            }
            for (r, p_b) in boot_p.iter().enumerate() {
                let p_b_use = project_if_infeasible(&pm.b, p_b, tol)?;
                for pair in &pairs {
                    let delta = pm.delta(RegimeIndex(pair.k), RegimeIndex(pair.k_prime))?;
                    let res = solver.solve(&pm.b, &p_b_use, &delta, true, tol)?;
                    boot_stat[r][pair.k][pair.k_prime] =
                        res.value - u_hat[pair.k][pair.k_prime];
                }
            }
        }
    }

    // Elimination loop.
    let mut alive: Vec<usize> = (1..=kk).collect();
    let mut steps = Vec::new();
    while alive.len() > 1 {
        let mut t_min = f64::INFINITY;
        let mut worst = alive[0];
        for &k in &alive {
            let k_stat = alive
                .iter()
                .filter(|&&kp| kp != k)
                .map(|&kp| stat[k][kp])
                .fold(f64::INFINITY, f64::min);
            if k_stat < t_min {
                t_min = k_stat;
                worst = k;
            }
        }
        // Bootstrap critical value: lower alpha-quantile of the recentered
        // min statistic over the surviving pairs.
        let mut draws: Vec<f64> = boot_stat
            .iter()
            .map(|bs| {
                let mut m = f64::INFINITY;
                for &k in &alive {
                    for &kp in &alive {
                        if k != kp {
                            m = m.min(bs[k][kp]);
                        }
                    }
                }
                m
            })
            .collect();
        draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let pos = ((cfg.alpha * cfg.reps as f64).floor() as usize).min(cfg.reps - 1);
        let critical = draws[pos];
        if t_min < critical {
            steps.push(StepRecord { eliminated: worst, statistic: t_min, critical });
            alive.retain(|&k| k != worst);
        } else {
            break;
        }
    }

    Ok(ConfidenceSet {
        survivors: alive,
        steps,
        alpha: cfg.alpha,
        reps: cfg.reps,
        mode: cfg.mode,
        seed: cfg.seed,
    })
}

/// Noise-free analogue of the procedure on an exact observation vector:
/// repeatedly eliminate a regime whose gap upper bound against a survivor
/// is provably negative.  Returns exactly the candidate-optimum set.
pub fn cs_noiseless(
    pm: &ProblemMatrices,
    p: &[f64],
    solver: &dyn LpSolver,
    tol: &Tolerances,
) -> Result<ConfidenceSet> {
    let kk = pm.n_regimes();
    let mut upper = vec![vec![f64::INFINITY; kk + 1]; kk + 1];
    for k in 1..=kk {
        for kp in 1..=kk {
            if k != kp {
                let delta = pm.delta(RegimeIndex(k), RegimeIndex(kp))?;
                upper[k][kp] = solver.solve(&pm.b, p, &delta, true, tol)?.value;
            }
        }
    }
    let mut alive: Vec<usize> = (1..=kk).collect();
    let mut steps = Vec::new();
    while alive.len() > 1 {
        let mut t_min = f64::INFINITY;
        let mut worst = alive[0];
        for &k in &alive {
            for &kp in &alive {
                if k != kp && upper[k][kp] < t_min {
                    t_min = upper[k][kp];
                    worst = k;
                }
            }
        }
        if t_min < -tol.sign {
            steps.push(StepRecord { eliminated: worst, statistic: t_min, critical: -tol.sign });
            alive.retain(|&k| k != worst);
        } else {
            break;
        }
    }
    Ok(ConfidenceSet {
        survivors: alive,
        steps,
        alpha: 0.0,
        reps: 0,
        mode: Mode::Resolve,
        seed: 0,
    })
}

//! Linear representations of the model: the observation map p = Bq and the
//! welfare map W_k = A_k q over the latent state distribution q.

use crate::error::{Error, Result};
use crate::regimes::{enumerate_regimes, path_for_state, RegimeIndex, WelfareSpec};
use crate::statespace::StateSpaceLayout;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// Row-major sparse matrix; entries within a row are sorted by column.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRowMatrix {
    rows: Vec<Vec<(usize, f64)>>,
    n_cols: usize,
}

impl SparseRowMatrix {
    pub fn new(rows: Vec<Vec<(usize, f64)>>, n_cols: usize) -> Self {
        SparseRowMatrix { rows, n_cols }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    /// Matrix-vector product.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_cols);
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(j, v)| v * x[j]).sum())
            .collect()
    }

    /// Column `j` of the matrix as (row, value) pairs.
    pub fn column(&self, j: usize) -> Vec<(usize, f64)> {
        self.rows
            .iter()
            .enumerate()
            .filter_map(|(i, row)| {
                row.binary_search_by_key(&j, |&(c, _)| c)
                    .ok()
                    .map(|pos| (i, row[pos].1))
            })
            .collect()
    }

    /// Keep only the listed columns, renumbering them 0..len.
    pub fn select_columns(&self, keep: &[usize]) -> SparseRowMatrix {
        let mut remap = vec![usize::MAX; self.n_cols];
        for (new, &old) in keep.iter().enumerate() {
            remap[old] = new;
        }
        let rows = self
            .rows
            .iter()
            .map(|row| {
                row.iter()
                    .filter(|&&(j, _)| remap[j] != usize::MAX)
                    .map(|&(j, v)| (remap[j], v))
                    .collect()
            })
            .collect();
        SparseRowMatrix { rows, n_cols: keep.len() }
    }

    /// Plain-text triplet export: `row col value` per line.
    pub fn to_triplets(&self) -> String {
        let mut out = String::new();
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                writeln!(out, "{i} {j} {v}").unwrap();
            }
        }
        out
    }
}

/// Label of one row of B: the instrument path and observed cell it matches.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellLabel {
    pub z: Vec<u8>,
    pub y: Vec<u8>,
    pub d: Vec<u8>,
}

impl CellLabel {
    pub fn to_string_compact(&self) -> String {
        let fmt = |v: &[u8]| v.iter().map(|b| b.to_string()).collect::<String>();
        format!("z={} y={} d={}", fmt(&self.z), fmt(&self.y), fmt(&self.d))
    }
}

/// Build the observation matrix B and its row labels.
///
/// Rows run over instrument paths in ascending order, then observed cells
/// in ascending index order; the final (all-ones) cell of each block is
/// dropped since its probability is implied by the rest.
pub fn build_b(layout: &StateSpaceLayout) -> (SparseRowMatrix, Vec<CellLabel>) {
    let n_cells = 1usize << (2 * layout.horizon().periods());
    let z_grid = layout.z_grid();
    let mut rows = vec![Vec::new(); z_grid.len() * (n_cells - 1)];
    let mut labels = Vec::with_capacity(rows.len());
    for (zi, z) in z_grid.iter().enumerate() {
        for cell in 0..n_cells - 1 {
            let (y, d) = layout.cell_from_index(cell);
            labels.push(CellLabel { z: z.clone(), y, d });
        }
        for s in 0..layout.d_q() {
            let (y, d) = layout.observed_cell(s, z);
            let cell = layout.cell_index(&y, &d);
            if cell < n_cells - 1 {
                rows[zi * (n_cells - 1) + cell].push((s, 1.0));
            }
        }
    }
    (SparseRowMatrix::new(rows, layout.d_q()), labels)
}

/// Build the welfare matrix: row k-1 gives regime k's welfare per state.
pub fn build_a(layout: &StateSpaceLayout, spec: &WelfareSpec) -> Result<Vec<Vec<f64>>> {
    let regimes = enumerate_regimes(layout.horizon())?;
    if spec.weights().len() != layout.horizon().periods() {
        return Err(Error::Dimension(format!(
            "{} welfare weights for a {}-period horizon",
            spec.weights().len(),
            layout.horizon().periods()
        )));
    }
    Ok(regimes
        .iter()
        .map(|regime| {
            (0..layout.d_q())
                .map(|s| {
                    let path = path_for_state(regime, s, layout);
                    spec.path_value(&path.y)
                })
                .collect()
        })
        .collect())
}

/// Objective row for the welfare gap W_k - W_k'.
pub fn build_delta(a: &[Vec<f64>], k: RegimeIndex, k_prime: RegimeIndex) -> Result<Vec<f64>> {
    if k == k_prime {
        return Err(Error::Invalid("welfare gap needs two distinct regimes".into()));
    }
    let get = |idx: RegimeIndex| -> Result<&Vec<f64>> {
        a.get(idx.0.wrapping_sub(1))
            .ok_or_else(|| Error::Invalid(format!("regime index {} out of range", idx.0)))
    };
    let row_k = get(k)?;
    let row_kp = get(k_prime)?;
    Ok(row_k.iter().zip(row_kp).map(|(&x, &y)| x - y).collect())
}

/// The full linear model ready for optimization, possibly restricted to a
/// subset of states by an assumption mask.
#[derive(Debug, Clone)]
pub struct ProblemMatrices {
    pub a: Vec<Vec<f64>>,
    pub b: SparseRowMatrix,
    pub row_labels: Vec<CellLabel>,
    pub layout: StateSpaceLayout,
    /// Original state ids of the surviving columns.
    pub active_states: Vec<usize>,
    pub masked: bool,
}

impl ProblemMatrices {
    pub fn build(layout: &StateSpaceLayout, spec: &WelfareSpec) -> Result<Self> {
        let (b, row_labels) = build_b(layout);
        let a = build_a(layout, spec)?;
        Ok(ProblemMatrices {
            a,
            b,
            row_labels,
            layout: layout.clone(),
            active_states: (0..layout.d_q()).collect(),
            masked: false,
        })
    }

    pub fn n_states(&self) -> usize {
        self.active_states.len()
    }

    pub fn n_regimes(&self) -> usize {
        self.a.len()
    }

    pub fn d_p(&self) -> usize {
        self.b.n_rows()
    }

    /// Restrict to the states with h[s] = 1; columns are removed, not
    /// zeroed, so all downstream dimensions shrink.
    pub fn apply_mask(&self, h: &[u8]) -> Result<ProblemMatrices> {
        if h.len() != self.n_states() {
            return Err(Error::Dimension(format!(
                "mask covers {} states, problem has {}",
                h.len(),
                self.n_states()
            )));
        }
        let keep: Vec<usize> = (0..h.len()).filter(|&i| h[i] != 0).collect();
        if keep.is_empty() {
            return Err(Error::EmptyMask);
        }
        Ok(ProblemMatrices {
            a: self
                .a
                .iter()
                .map(|row| keep.iter().map(|&i| row[i]).collect())
                .collect(),
            b: self.b.select_columns(&keep),
            row_labels: self.row_labels.clone(),
            layout: self.layout.clone(),
            active_states: keep.iter().map(|&i| self.active_states[i]).collect(),
            masked: true,
        })
    }

    pub fn delta(&self, k: RegimeIndex, k_prime: RegimeIndex) -> Result<Vec<f64>> {
        build_delta(&self.a, k, k_prime)
    }
}

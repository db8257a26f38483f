//! From gap bounds to the partial welfare ordering: DAG construction,
//! maximal elements, best-regime tiers, topological sorts, and exports.

use crate::error::{Error, Result};
use crate::regimes::{Horizon, Regime, RegimeIndex};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// Lower and upper bounds on every pairwise welfare gap (1-based regimes;
/// entry [k-1][k'-1] bounds W_k - W_k', diagonal fixed at 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapMatrix {
    pub lower: Vec<Vec<f64>>,
    pub upper: Vec<Vec<f64>>,
}

impl GapMatrix {
    pub fn new(lower: Vec<Vec<f64>>, upper: Vec<Vec<f64>>) -> Result<Self> {
        let n = lower.len();
        if upper.len() != n || lower.iter().chain(&upper).any(|r| r.len() != n) {
            return Err(Error::Dimension("gap matrices must be square and congruent".into()));
        }
        Ok(GapMatrix { lower, upper })
    }

    pub fn n(&self) -> usize {
        self.lower.len()
    }

    pub fn lower_at(&self, k: RegimeIndex, k_prime: RegimeIndex) -> f64 {
        self.lower[k.0 - 1][k_prime.0 - 1]
    }

    pub fn upper_at(&self, k: RegimeIndex, k_prime: RegimeIndex) -> f64 {
        self.upper[k.0 - 1][k_prime.0 - 1]
    }
}

/// The strict partial ordering as a DAG: edge k -> k' records that regime
/// k's welfare provably exceeds regime k''s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialOrder {
    n: usize,
    /// Adjacency: adj[k-1][k'-1] = true iff edge k -> k'.
    adj: Vec<Vec<bool>>,
    pub eps_sign: f64,
}

impl PartialOrder {
    /// Construct from explicit 1-based edges (mainly for tests).
    pub fn from_edges(n: usize, edges: &[(usize, usize)], eps_sign: f64) -> Result<Self> {
        let mut adj = vec![vec![false; n]; n];
        for &(a, b) in edges {
            if a < 1 || a > n || b < 1 || b > n || a == b {
                return Err(Error::Invalid(format!("bad edge ({a}, {b})")));
            }
            adj[a - 1][b - 1] = true;
        }
        let po = PartialOrder { n, adj, eps_sign };
        po.check_acyclic()?;
        Ok(po)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn has_edge(&self, k: RegimeIndex, k_prime: RegimeIndex) -> bool {
        self.adj[k.0 - 1][k_prime.0 - 1]
    }

    /// Edges as 1-based pairs in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for a in 0..self.n {
            for b in 0..self.n {
                if self.adj[a][b] {
                    out.push((a + 1, b + 1));
                }
            }
        }
        out
    }

    fn in_degree(&self, node: usize) -> usize {
        (0..self.n).filter(|&a| self.adj[a][node]).count()
    }

    fn check_acyclic(&self) -> Result<()> {
        fn visit(
            adj: &[Vec<bool>],
            node: usize,
            color: &mut [u8], // 0 white, 1 on current path, 2 done
            path: &mut Vec<usize>,
        ) -> Result<()> {
            color[node] = 1;
            path.push(node);
            for b in 0..adj.len() {
                if !adj[node][b] {
                    continue;
                }
                if color[b] == 1 {
                    let start = path.iter().position(|&v| v == b).unwrap();
                    return Err(Error::Cycle(path[start..].iter().map(|&v| v + 1).collect()));
                }
                if color[b] == 0 {
                    visit(adj, b, color, path)?;
                }
            }
            color[node] = 2;
            path.pop();
            Ok(())
        }
        let mut color = vec![0u8; self.n];
        let mut path = Vec::new();
        for start in 0..self.n {
            if color[start] == 0 {
                visit(&self.adj, start, &mut color, &mut path)?;
            }
        }
        Ok(())
    }
}

/// Tier decomposition: tier 1 holds the candidate optima, tier 2 the
/// candidates once tier 1 is removed, and so on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tiers {
    pub tiers: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopoSortList {
    pub sorts: Vec<Vec<usize>>,
    pub truncated: bool,
    /// Exact number of linear extensions (subset dynamic program), when
    /// the graph is small enough to count.
    pub count_exact: Option<u128>,
}

/// Edge k -> k' iff the gap lower bound clears the sign threshold.
pub fn build_partial_order(gaps: &GapMatrix, eps_sign: f64) -> Result<PartialOrder> {
    let n = gaps.n();
    let mut adj = vec![vec![false; n]; n];
    for a in 0..n {
        for b in 0..n {
            if a != b && gaps.lower[a][b] > eps_sign {
                adj[a][b] = true;
            }
        }
    }
    let po = PartialOrder { n, adj, eps_sign };
    po.check_acyclic()?;
    Ok(po)
}

/// Maximal elements: regimes no other regime provably beats.
pub fn identified_set(po: &PartialOrder) -> Vec<usize> {
    (0..po.n)
        .filter(|&b| (0..po.n).all(|a| !po.adj[a][b]))
        .map(|b| b + 1)
        .collect()
}

/// Iterative peeling of maximal elements.
pub fn nth_best_tiers(po: &PartialOrder) -> Tiers {
    let mut remaining: Vec<usize> = (0..po.n).collect();
    let mut tiers = Vec::new();
    while !remaining.is_empty() {
        let tier: Vec<usize> = remaining
            .iter()
            .copied()
            .filter(|&b| remaining.iter().all(|&a| !po.adj[a][b]))
            .collect();
        debug_assert!(!tier.is_empty());
        remaining.retain(|v| !tier.contains(v));
        tiers.push(tier.iter().map(|&v| v + 1).collect());
    }
    Tiers { tiers }
}

/// All topological sorts (linear extensions), lexicographically, up to
/// `cap`; the exact count comes from a subset dynamic program.
pub fn topological_sorts(po: &PartialOrder, cap: usize) -> TopoSortList {
    let n = po.n;
    let mut sorts = Vec::new();
    let mut truncated = false;
    let mut chosen = Vec::with_capacity(n);
    let mut used = vec![false; n];
    backtrack(po, &mut chosen, &mut used, cap, &mut sorts, &mut truncated);

    let count_exact = if n <= 20 {
        // count[mask] = number of valid prefixes made of exactly the nodes
        // in `mask`.  A node may close the prefix iff none of its
        // successors is already inside it; applied at every step this
        // characterizes the linear extensions.
        let succs: Vec<u32> = (0..n)
            .map(|a| {
                (0..n)
                    .filter(|&b| po.adj[a][b])
                    .fold(0u32, |acc, b| acc | (1 << b))
            })
            .collect();
        let mut count = vec![0u128; 1usize << n];
        count[0] = 1;
        for mask in 1u32..=((1u32 << n) - 1) {
            let mut total = 0u128;
            for last in 0..n {
                let bit = 1u32 << last;
                if mask & bit == 0 {
                    continue;
                }
                let rest = mask & !bit;
                if succs[last] & rest == 0 {
                    total += count[rest as usize];
                }
            }
            count[mask as usize] = total;
        }
        Some(count[(1usize << n) - 1])
    } else {
        None
    };

    TopoSortList { sorts, truncated, count_exact }
}

fn backtrack(
    po: &PartialOrder,
    chosen: &mut Vec<usize>,
    used: &mut [bool],
    cap: usize,
    sorts: &mut Vec<Vec<usize>>,
    truncated: &mut bool,
) {
    if sorts.len() >= cap {
        *truncated = true;
        return;
    }
    let n = po.n;
    if chosen.len() == n {
        sorts.push(chosen.iter().map(|&v| v + 1).collect());
        return;
    }
    for cand in 0..n {
        if used[cand] {
            continue;
        }
        // All of cand's predecessors must already be placed.
        if (0..n).any(|a| po.adj[a][cand] && !used[a]) {
            continue;
        }
        used[cand] = true;
        chosen.push(cand);
        backtrack(po, chosen, used, cap, sorts, truncated);
        chosen.pop();
        used[cand] = false;
        if *truncated && sorts.len() >= cap {
            return;
        }
    }
}

/// Whether a 1-based permutation respects every edge (better regimes
/// listed first).
pub fn is_valid_sort(po: &PartialOrder, order: &[usize]) -> bool {
    if order.len() != po.n {
        return false;
    }
    let mut pos = vec![usize::MAX; po.n];
    for (i, &k) in order.iter().enumerate() {
        if k < 1 || k > po.n || pos[k - 1] != usize::MAX {
            return false;
        }
        pos[k - 1] = i;
    }
    for (a, b) in po.edges() {
        if pos[a - 1] > pos[b - 1] {
            return false;
        }
    }
    true
}

/// Initial vertices across all maximal directed paths; must coincide with
/// the maximal elements.
pub fn identified_set_via_paths(po: &PartialOrder) -> Result<Vec<usize>> {
    let n = po.n;
    let mut initials = Vec::new();
    for start in 0..n {
        if po.in_degree(start) > 0 {
            continue;
        }
        // Every maximal path starts at an in-degree-0 vertex; walk one
        // maximal path to witness it (an isolated vertex is its own path).
        let mut node = start;
        loop {
            match (0..n).find(|&b| po.adj[node][b]) {
                Some(next) => node = next,
                None => break,
            }
        }
        initials.push(start + 1);
    }
    let direct = identified_set(po);
    if initials != direct {
        return Err(Error::Inconsistency(format!(
            "path initials {initials:?} disagree with maximal elements {direct:?}"
        )));
    }
    Ok(initials)
}

/// Minimal edge set with the same reachability.
pub fn transitive_reduction(po: &PartialOrder) -> PartialOrder {
    let n = po.n;
    // Reachability closure by repeated squaring of the boolean matrix.
    let mut reach = po.adj.clone();
    for k in 0..n {
        for i in 0..n {
            if reach[i][k] {
                for j in 0..n {
                    if reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    let mut adj = po.adj.clone();
    for a in 0..n {
        for b in 0..n {
            if !po.adj[a][b] {
                continue;
            }
            // Drop a->b if some intermediate kept vertex links them.
            let implied = (0..n).any(|m| m != a && m != b && po.adj[a][m] && reach[m][b]);
            if implied {
                adj[a][b] = false;
            }
        }
    }
    PartialOrder { n, adj, eps_sign: po.eps_sign }
}

/// Graphviz rendering of the ordering, one node per regime.
pub fn to_dot(po: &PartialOrder, horizon: &Horizon) -> Result<String> {
    let mut out = String::from("digraph welfare_order {\n  rankdir=TB;\n");
    for k in 1..=po.n {
        let regime = Regime::from_index(horizon, RegimeIndex(k))?;
        writeln!(out, "  r{k} [label=\"Regime {k}: {}\"];", regime.label()).unwrap();
    }
    for (a, b) in po.edges() {
        writeln!(out, "  r{a} -> r{b};").unwrap();
    }
    out.push_str("}\n");
    Ok(out)
}

/// Serializable summary of one full ordering run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrderingReport {
    pub schema_version: u32,
    pub n_regimes: usize,
    pub eps_sign: f64,
    pub lower: Vec<Vec<f64>>,
    pub upper: Vec<Vec<f64>>,
    pub edges: Vec<(usize, usize)>,
    pub identified_set: Vec<usize>,
    pub tiers: Vec<Vec<usize>>,
    pub sorts: Vec<Vec<usize>>,
    pub sorts_truncated: bool,
    pub sort_count: Option<u128>,
}

pub fn build_report(gaps: &GapMatrix, po: &PartialOrder, sort_cap: usize) -> Result<OrderingReport> {
    let set = identified_set_via_paths(po)?;
    let tiers = nth_best_tiers(po);
    let sorts = topological_sorts(po, sort_cap);
    Ok(OrderingReport {
        schema_version: 1,
        n_regimes: po.n,
        eps_sign: po.eps_sign,
        lower: gaps.lower.clone(),
        upper: gaps.upper.clone(),
        edges: po.edges(),
        identified_set: set,
        tiers: tiers.tiers,
        sorts: sorts.sorts,
        sorts_truncated: sorts.truncated,
        sort_count: sorts.count_exact,
    })
}

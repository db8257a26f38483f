//! Dynamic treatment regimes: enumeration, indexing, welfare functionals,
//! and the backward-induction and stochastic-regime oracles.

use crate::error::{Error, Result};
use crate::statespace::{ResponseMaps, StateSpaceLayout};
use serde::{Deserialize, Serialize};

/// Tie threshold for welfare argmax comparisons.
pub const EPS_TIE: f64 = 1e-9;

/// Tolerance for the simplex check on q vectors.
const EPS_SIMPLEX: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Adaptivity {
    /// Rules may depend on the full outcome/treatment history.
    Full,
    /// Rules depend on the lagged outcome only (treatment lag is implied
    /// on-path), giving 2^(2T-1) regimes.
    Lag1,
}

/// Problem horizon: number of periods, which periods carry an instrument,
/// and how adaptive the rules are allowed to be.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Horizon {
    t: usize,
    instrumented: Vec<bool>,
    adaptivity: Adaptivity,
}

impl Horizon {
    pub fn new(t: usize, instrumented: Vec<bool>, adaptivity: Adaptivity) -> Result<Self> {
        if t < 1 {
            return Err(Error::Invalid("horizon must have T >= 1".into()));
        }
        if instrumented.len() != t {
            return Err(Error::Invalid(format!(
                "instrumented flags have length {}, expected {}",
                instrumented.len(),
                t
            )));
        }
        if !instrumented.iter().any(|&b| b) {
            return Err(Error::Invalid("at least one period must be instrumented".into()));
        }
        Ok(Horizon { t, instrumented, adaptivity })
    }

    /// Fully instrumented, fully adaptive horizon.
    pub fn full(t: usize) -> Result<Self> {
        Self::new(t, vec![true; t], Adaptivity::Full)
    }

    pub fn periods(&self) -> usize {
        self.t
    }

    /// Whether period `t` (1-based) carries an instrument.
    pub fn instrumented(&self, t: usize) -> bool {
        self.instrumented[t - 1]
    }

    pub fn instrumented_flags(&self) -> &[bool] {
        &self.instrumented
    }

    pub fn adaptivity(&self) -> Adaptivity {
        self.adaptivity
    }

    /// Number of free allocation bits in a regime.
    pub fn regime_bits(&self) -> usize {
        match self.adaptivity {
            Adaptivity::Full => (1usize << self.t) - 1,
            Adaptivity::Lag1 => 2 * self.t - 1,
        }
    }

    /// |D| = 2^(2^T - 1) under full adaptivity, 2^(2T - 1) under lag1.
    pub fn regime_count(&self) -> Result<usize> {
        let bits = self.regime_bits();
        if bits >= 20 {
            return Err(Error::Dimension(format!(
                "2^{} regimes exceed the supported cap; reduce T or use lag1 adaptivity",
                bits
            )));
        }
        Ok(1usize << bits)
    }
}

/// 1-based regime index following the Table-1 bit convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RegimeIndex(pub usize);

/// A deterministic dynamic regime: one decision table per period.
///
/// `tables[t-1]` is indexed by the outcome history relevant at period `t`
/// (full history under `Full`, the lagged outcome under `Lag1`), encoded
/// with y_1 as the least significant bit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Regime {
    t: usize,
    adaptivity: Adaptivity,
    tables: Vec<Vec<u8>>,
}

impl Regime {
    fn table_len(t: usize, adaptivity: Adaptivity) -> usize {
        match adaptivity {
            Adaptivity::Full => 1usize << (t - 1),
            Adaptivity::Lag1 => {
                if t == 1 {
                    1
                } else {
                    2
                }
            }
        }
    }

    /// Decode the Table-1 bit convention: bit 0 is delta_1; for each later
    /// period the histories are consumed in descending order (so at T=2,
    /// bit 1 is delta_2(1, delta_1) and bit 2 is delta_2(0, delta_1)).
    pub fn from_index(horizon: &Horizon, index: RegimeIndex) -> Result<Self> {
        let count = horizon.regime_count()?;
        if index.0 < 1 || index.0 > count {
            return Err(Error::Invalid(format!(
                "regime index {} out of range 1..={}",
                index.0, count
            )));
        }
        let code = index.0 - 1;
        let mut bit = 0usize;
        let mut tables = Vec::with_capacity(horizon.periods());
        for t in 1..=horizon.periods() {
            let len = Self::table_len(t, horizon.adaptivity());
            let mut table = vec![0u8; len];
            for hist in (0..len).rev() {
                table[hist] = ((code >> bit) & 1) as u8;
                bit += 1;
            }
            tables.push(table);
        }
        Ok(Regime { t: horizon.periods(), adaptivity: horizon.adaptivity(), tables })
    }

    pub fn index(&self) -> RegimeIndex {
        let mut code = 0usize;
        let mut bit = 0usize;
        for table in &self.tables {
            for hist in (0..table.len()).rev() {
                code |= (table[hist] as usize) << bit;
                bit += 1;
            }
        }
        RegimeIndex(code + 1)
    }

    pub fn periods(&self) -> usize {
        self.t
    }

    /// Allocation at period `t` (1-based) given the realized outcome history.
    pub fn allocation(&self, t: usize, y_prev: &[u8]) -> u8 {
        debug_assert_eq!(y_prev.len(), t - 1);
        let hist = match self.adaptivity {
            Adaptivity::Full => y_prev
                .iter()
                .enumerate()
                .fold(0usize, |acc, (j, &y)| acc | ((y as usize) << j)),
            Adaptivity::Lag1 => {
                if t == 1 {
                    0
                } else {
                    y_prev[t - 2] as usize
                }
            }
        };
        self.tables[t - 1][hist]
    }

    /// True iff every decision table is a constant function of history.
    pub fn is_static(&self) -> bool {
        self.tables
            .iter()
            .all(|table| table.iter().all(|&v| v == table[0]))
    }

    pub fn table(&self, t: usize) -> &[u8] {
        &self.tables[t - 1]
    }

    /// Human-readable label matching the Table-1 columns at T=2.
    pub fn label(&self) -> String {
        if self.t == 2 {
            format!(
                "({}, {}, {})",
                self.tables[0][0], self.tables[1][1], self.tables[1][0]
            )
        } else {
            format!("{:?}", self.tables)
        }
    }
}

/// All regimes for the horizon in Table-1 index order.
pub fn enumerate_regimes(horizon: &Horizon) -> Result<Vec<Regime>> {
    let count = horizon.regime_count()?;
    (1..=count)
        .map(|k| Regime::from_index(horizon, RegimeIndex(k)))
        .collect()
}

/// Welfare as a weighted sum of counterfactual outcome means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WelfareSpec {
    weights: Vec<f64>,
}

impl WelfareSpec {
    /// Terminal-outcome welfare: weights (0, ..., 0, 1).
    pub fn terminal(t: usize) -> Self {
        let mut weights = vec![0.0; t];
        weights[t - 1] = 1.0;
        WelfareSpec { weights }
    }

    pub fn weighted(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.iter().all(|&w| w == 0.0) {
            return Err(Error::Invalid("welfare needs at least one nonzero weight".into()));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Invalid("welfare weights must be finite".into()));
        }
        Ok(WelfareSpec { weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_terminal(&self) -> bool {
        let t = self.weights.len();
        self.weights[..t - 1].iter().all(|&w| w == 0.0) && self.weights[t - 1] == 1.0
    }

    /// Welfare of a single realized outcome path.
    pub fn path_value(&self, y: &[u8]) -> f64 {
        self.weights
            .iter()
            .zip(y)
            .map(|(&w, &yt)| w * yt as f64)
            .sum()
    }
}

/// The deterministic outcome/treatment path produced by a regime in one
/// latent state of the world.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutcomePath {
    pub y: Vec<u8>,
    pub d: Vec<u8>,
}

/// Run the bridge recursion: d_t from the regime, y_t from the state's
/// response maps.
pub fn evaluate_outcome_path(
    regime: &Regime,
    maps: &ResponseMaps,
    layout: &StateSpaceLayout,
) -> OutcomePath {
    let t_max = regime.periods();
    let mut y = Vec::with_capacity(t_max);
    let mut d = Vec::with_capacity(t_max);
    for t in 1..=t_max {
        let dt = regime.allocation(t, &y);
        d.push(dt);
        y.push(maps.y_value(layout, t, &y, &d));
    }
    OutcomePath { y, d }
}

fn check_simplex(q: &[f64], layout: &StateSpaceLayout) -> Result<()> {
    if q.len() != layout.d_q() {
        return Err(Error::Dimension(format!(
            "q has length {}, layout expects {}",
            q.len(),
            layout.d_q()
        )));
    }
    let sum: f64 = q.iter().sum();
    if (sum - 1.0).abs() > EPS_SIMPLEX {
        return Err(Error::OffSimplex(format!("sum(q) = {sum}")));
    }
    if let Some(neg) = q.iter().find(|&&v| v < -EPS_SIMPLEX) {
        return Err(Error::OffSimplex(format!("negative entry {neg}")));
    }
    Ok(())
}

/// Welfare of regime `k` under the state distribution `q`; equals row k of
/// the welfare matrix dotted with q.
pub fn welfare_from_q(
    k: RegimeIndex,
    q: &[f64],
    spec: &WelfareSpec,
    layout: &StateSpaceLayout,
) -> Result<f64> {
    check_simplex(q, layout)?;
    let regime = Regime::from_index(layout.horizon(), k)?;
    Ok(welfare_unchecked(&regime, q, spec, layout))
}

fn welfare_unchecked(
    regime: &Regime,
    q: &[f64],
    spec: &WelfareSpec,
    layout: &StateSpaceLayout,
) -> f64 {
    let mut total = 0.0;
    for (s, &qs) in q.iter().enumerate() {
        if qs == 0.0 {
            continue;
        }
        let path = path_for_state(regime, s, layout);
        total += qs * spec.path_value(&path.y);
    }
    total
}

/// Bridge recursion reading response-map bits directly from the state id.
pub fn path_for_state(regime: &Regime, s: usize, layout: &StateSpaceLayout) -> OutcomePath {
    let t_max = regime.periods();
    let mut y = Vec::with_capacity(t_max);
    let mut d = Vec::with_capacity(t_max);
    for t in 1..=t_max {
        let dt = regime.allocation(t, &y);
        d.push(dt);
        y.push(layout.y_value(s, t, &y, &d));
    }
    OutcomePath { y, d }
}

/// Enumeration argmax of welfare over all regimes.  Ties within `EPS_TIE`
/// are surfaced as an error rather than broken silently.
pub fn optimal_regime_oracle(
    q: &[f64],
    spec: &WelfareSpec,
    layout: &StateSpaceLayout,
) -> Result<RegimeIndex> {
    check_simplex(q, layout)?;
    let regimes = enumerate_regimes(layout.horizon())?;
    let welfares: Vec<f64> = regimes
        .iter()
        .map(|r| welfare_unchecked(r, q, spec, layout))
        .collect();
    argmax_strict(&welfares)
}

fn argmax_strict(welfares: &[f64]) -> Result<RegimeIndex> {
    let best = welfares.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<usize> = welfares
        .iter()
        .enumerate()
        .filter(|(_, &w)| (best - w) <= EPS_TIE)
        .map(|(i, _)| i + 1)
        .collect();
    if tied.len() > 1 {
        return Err(Error::AmbiguousArgmax(tied));
    }
    Ok(RegimeIndex(tied[0]))
}

/// Backward-induction oracle for terminal-outcome welfare under full
/// adaptivity.  Unreachable branches (zero-probability conditioning
/// events) are resolved to allocation 0.
pub fn backward_induction_oracle(q: &[f64], layout: &StateSpaceLayout) -> Result<RegimeIndex> {
    check_simplex(q, layout)?;
    let horizon = layout.horizon();
    if horizon.adaptivity() != Adaptivity::Full {
        return Err(Error::Invalid(
            "backward induction assembles a fully adaptive regime".into(),
        ));
    }
    let t_max = horizon.periods();
    let mut tables: Vec<Vec<u8>> = (1..=t_max)
        .map(|t| vec![0u8; 1usize << (t - 1)])
        .collect();
    let states: Vec<usize> = (0..layout.d_q()).filter(|&s| q[s] > 0.0).collect();
    let value = backward_step(q, layout, &states, 1, &mut Vec::new(), &mut Vec::new(), &mut tables)?;
    if value.is_none() {
        return Err(Error::OffSimplex("q has no mass".into()));
    }
    let regime = Regime { t: t_max, adaptivity: Adaptivity::Full, tables };
    Ok(regime.index())
}

/// Value of the optimal continuation from period `t`, conditional on the
/// realized history; `None` marks an unreachable branch.
fn backward_step(
    q: &[f64],
    layout: &StateSpaceLayout,
    states: &[usize],
    t: usize,
    y_hist: &mut Vec<u8>,
    d_hist: &mut Vec<u8>,
    tables: &mut [Vec<u8>],
) -> Result<Option<f64>> {
    let t_max = layout.horizon().periods();
    let weight: f64 = states.iter().map(|&s| q[s]).sum();
    if weight <= 0.0 {
        return Ok(None);
    }
    let hist = y_hist
        .iter()
        .enumerate()
        .fold(0usize, |acc, (j, &y)| acc | ((y as usize) << j));
    let mut values = [0.0f64; 2];
    for dt in 0..2u8 {
        d_hist.push(dt);
        let mut value = 0.0;
        for yt in 0..2u8 {
            let branch: Vec<usize> = states
                .iter()
                .copied()
                .filter(|&s| layout.y_value(s, t, y_hist, d_hist) == yt)
                .collect();
            let branch_weight: f64 = branch.iter().map(|&s| q[s]).sum();
            if branch_weight <= 0.0 {
                continue;
            }
            let contribution = if t == t_max {
                branch_weight * yt as f64
            } else {
                y_hist.push(yt);
                let cont = backward_step(q, layout, &branch, t + 1, y_hist, d_hist, tables)?;
                y_hist.pop();
                branch_weight * cont.unwrap_or(0.0)
            };
            value += contribution;
        }
        d_hist.pop();
        values[dt as usize] = value / weight;
    }
    // Conditional values; ties surfaced, zero-probability branches already
    // excluded by the weight check above.
    let choice = if values[1] > values[0] + EPS_TIE {
        1u8
    } else if values[0] > values[1] + EPS_TIE {
        0u8
    } else {
        return Err(Error::AmbiguousArgmax(vec![0, 1]));
    };
    tables[t - 1][hist] = choice;
    // Recurse once more along the chosen allocation to fill continuation
    // tables on the chosen path (the loop above filled them transiently for
    // both d_t; re-run the chosen branch so the stored tables reflect it).
    d_hist.push(choice);
    for yt in 0..2u8 {
        let branch: Vec<usize> = states
            .iter()
            .copied()
            .filter(|&s| layout.y_value(s, t, y_hist, d_hist) == yt)
            .collect();
        if t < t_max {
            y_hist.push(yt);
            backward_step(q, layout, &branch, t + 1, y_hist, d_hist, tables)?;
            y_hist.pop();
        }
    }
    d_hist.pop();
    Ok(Some(values[choice as usize]))
}

/// A regime whose rules allocate treatment with a probability in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticRegime {
    t: usize,
    tables: Vec<Vec<f64>>,
}

impl StochasticRegime {
    /// `tables[t-1]` indexed by full outcome history (y_1 least significant).
    pub fn new(tables: Vec<Vec<f64>>) -> Result<Self> {
        let t = tables.len();
        if t == 0 {
            return Err(Error::Invalid("stochastic regime needs at least one period".into()));
        }
        for (i, table) in tables.iter().enumerate() {
            if table.len() != 1usize << i {
                return Err(Error::Invalid(format!(
                    "period {} table has {} entries, expected {}",
                    i + 1,
                    table.len(),
                    1usize << i
                )));
            }
            if table.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(Error::Invalid("allocation probabilities must lie in [0, 1]".into()));
            }
        }
        Ok(StochasticRegime { t, tables })
    }

    pub fn from_deterministic(regime: &Regime) -> Self {
        assert_eq!(regime.adaptivity, Adaptivity::Full);
        StochasticRegime {
            t: regime.t,
            tables: regime
                .tables
                .iter()
                .map(|tab| tab.iter().map(|&v| v as f64).collect())
                .collect(),
        }
    }

    fn prob(&self, t: usize, y_prev: &[u8]) -> f64 {
        let hist = y_prev
            .iter()
            .enumerate()
            .fold(0usize, |acc, (j, &y)| acc | ((y as usize) << j));
        self.tables[t - 1][hist]
    }
}

/// Expected terminal outcome under a stochastic regime: the expectation
/// runs over both q and the independent randomization of each rule.
pub fn stochastic_welfare(
    regime: &StochasticRegime,
    q: &[f64],
    layout: &StateSpaceLayout,
) -> Result<f64> {
    check_simplex(q, layout)?;
    if regime.t != layout.horizon().periods() {
        return Err(Error::Dimension("regime and layout horizon differ".into()));
    }
    let mut total = 0.0;
    for (s, &qs) in q.iter().enumerate() {
        if qs == 0.0 {
            continue;
        }
        total += qs * stochastic_terminal(regime, s, layout, 1, &mut Vec::new(), &mut Vec::new());
    }
    Ok(total)
}

fn stochastic_terminal(
    regime: &StochasticRegime,
    s: usize,
    layout: &StateSpaceLayout,
    t: usize,
    y_hist: &mut Vec<u8>,
    d_hist: &mut Vec<u8>,
) -> f64 {
    let p1 = regime.prob(t, y_hist);
    let mut value = 0.0;
    for dt in 0..2u8 {
        let weight = if dt == 1 { p1 } else { 1.0 - p1 };
        if weight == 0.0 {
            continue;
        }
        d_hist.push(dt);
        let yt = layout.y_value(s, t, y_hist, d_hist);
        let v = if t == regime.t {
            yt as f64
        } else {
            y_hist.push(yt);
            let v = stochastic_terminal(regime, s, layout, t + 1, y_hist, d_hist);
            y_hist.pop();
            v
        };
        d_hist.pop();
        value += weight * v;
    }
    value
}

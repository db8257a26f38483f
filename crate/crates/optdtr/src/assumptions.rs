//! Identifying assumptions encoded as a 0/1 mask over latent states, plus
//! data-driven detection of monotonicity directions.

use crate::error::{Error, Result};
use crate::statespace::StateSpaceLayout;
use serde::{Deserialize, Serialize};

/// Direction of a per-cell monotonicity restriction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    Off,
    Up,
    Down,
    /// Estimate the direction from data before building the mask.
    Auto,
}

/// Identifies a conditioning cell: period plus the relevant history values
/// (under the Markov layout: the lagged outcome, and for selection maps
/// also the lagged treatment).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub t: usize,
    pub hist: Vec<u8>,
}

/// A default direction with optional per-cell overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellPolicy {
    pub default: Setting,
    #[serde(default)]
    pub overrides: Vec<(Cell, Setting)>,
}

impl CellPolicy {
    pub fn all(setting: Setting) -> Self {
        CellPolicy { default: setting, overrides: Vec::new() }
    }

    pub fn off() -> Self {
        Self::all(Setting::Off)
    }

    pub fn resolved(&self, cell: &Cell) -> Setting {
        self.overrides
            .iter()
            .find(|(c, _)| c == cell)
            .map(|&(_, s)| s)
            .unwrap_or(self.default)
    }

    pub fn has_auto(&self) -> bool {
        self.default == Setting::Auto || self.overrides.iter().any(|&(_, s)| s == Setting::Auto)
    }

    fn is_off(&self) -> bool {
        self.default == Setting::Off && self.overrides.iter().all(|&(_, s)| s == Setting::Off)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Learning {
    Off,
    /// Ranks period-1 cells by the signed difference y_1 - d_1.
    Short,
    /// Ranks period-1 cells by |y_1 - d_1|.
    Long,
}

/// Full assumption bundle; the Markov restriction is structural (it picks
/// the state-space layout) and recorded here for configuration round-trips.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionConfig {
    pub m1: CellPolicy,
    pub m2: CellPolicy,
    pub learning: Learning,
    pub markov: bool,
}

impl AssumptionConfig {
    pub fn none(markov: bool) -> Self {
        AssumptionConfig {
            m1: CellPolicy::off(),
            m2: CellPolicy::off(),
            learning: Learning::Off,
            markov,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.m2.is_off() && self.m1.is_off() {
            return Err(Error::Invalid(
                "outcome uniformity presupposes selection uniformity; enable m1".into(),
            ));
        }
        Ok(())
    }
}

/// The h vector: h[s] = 1 iff state s survives every restriction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskVector {
    pub h: Vec<u8>,
    pub active_count: usize,
}

/// Enumerate selection-map conditioning cells for period `t`: each entry
/// gives full-length history vectors for the layout accessors plus the
/// compact cell key.
fn selection_cells(layout: &StateSpaceLayout, t: usize) -> Vec<(Vec<u8>, Vec<u8>, Cell)> {
    if t == 1 {
        return vec![(vec![], vec![], Cell { t, hist: vec![] })];
    }
    if layout.markov() {
        let mut out = Vec::new();
        for y in 0..2u8 {
            for d in 0..2u8 {
                let mut y_prev = vec![0u8; t - 1];
                let mut d_prev = vec![0u8; t - 1];
                y_prev[t - 2] = y;
                d_prev[t - 2] = d;
                out.push((y_prev, d_prev, Cell { t, hist: vec![y, d] }));
            }
        }
        return out;
    }
    let mut out = Vec::new();
    let len = t - 1;
    for code in 0..1usize << (2 * len) {
        let y_prev: Vec<u8> = (0..len).map(|j| ((code >> j) & 1) as u8).collect();
        let d_prev: Vec<u8> = (0..len).map(|j| ((code >> (len + j)) & 1) as u8).collect();
        let mut hist = y_prev.clone();
        hist.extend(&d_prev);
        out.push((y_prev, d_prev, Cell { t, hist }));
    }
    out
}

/// Outcome-map conditioning cells for period `t`: history vectors plus the
/// compact key (lagged outcome under Markov).
fn outcome_cells(layout: &StateSpaceLayout, t: usize) -> Vec<(Vec<u8>, Vec<u8>, Cell)> {
    if t == 1 {
        return vec![(vec![], vec![], Cell { t, hist: vec![] })];
    }
    if layout.markov() {
        let mut out = Vec::new();
        for y in 0..2u8 {
            let mut y_prev = vec![0u8; t - 1];
            y_prev[t - 2] = y;
            out.push((y_prev, vec![0u8; t - 1], Cell { t, hist: vec![y] }));
        }
        return out;
    }
    selection_cells(layout, t)
}

/// Instrument paths over the periods before `t` (the conditioning part of
/// a selection restriction); z_t itself is the contrasted coordinate.
fn z_prefixes(layout: &StateSpaceLayout, t: usize) -> Vec<Vec<u8>> {
    let t_max = layout.horizon().periods();
    let instr: Vec<usize> = (1..t)
        .filter(|&j| layout.horizon().instrumented(j))
        .collect();
    // Under the Markov layout the selection map only sees z_t.
    let instr = if layout.markov() { vec![] } else { instr };
    let n = instr.len();
    (0..1usize << n)
        .map(|code| {
            let mut z = vec![0u8; t_max];
            for (j, &period) in instr.iter().enumerate() {
                z[period - 1] = ((code >> j) & 1) as u8;
            }
            z
        })
        .collect()
}

fn direction_violated(setting: Setting, hi: u8, lo: u8) -> bool {
    match setting {
        Setting::Off => false,
        Setting::Up => hi < lo,
        Setting::Down => hi > lo,
        Setting::Auto => false, // rejected before evaluation
    }
}

fn check_no_auto(policy: &CellPolicy, what: &str) -> Result<()> {
    let has_auto =
        policy.default == Setting::Auto || policy.overrides.iter().any(|&(_, s)| s == Setting::Auto);
    if has_auto {
        return Err(Error::Invalid(format!(
            "{what} directions still set to auto; resolve them from data first"
        )));
    }
    Ok(())
}

/// Build the mask over the layout's states.
pub fn build_mask(layout: &StateSpaceLayout, config: &AssumptionConfig) -> Result<MaskVector> {
    config.validate()?;
    check_no_auto(&config.m1, "selection-uniformity")?;
    check_no_auto(&config.m2, "outcome-uniformity")?;
    if config.learning != Learning::Off && layout.horizon().periods() != 2 {
        return Err(Error::Invalid(
            "the learning restriction is implemented for two-period horizons only".into(),
        ));
    }
    let t_max = layout.horizon().periods();
    let d_q = layout.d_q();

    // Pre-compute the (bit-pair, direction) checks once; each entry asks
    // the bit at `hi_bit` to respect `setting` against the bit at `lo_bit`.
    struct PairCheck {
        hi_bit: usize,
        lo_bit: usize,
        setting: Setting,
    }
    let mut checks: Vec<PairCheck> = Vec::new();

    for t in 1..=t_max {
        if layout.horizon().instrumented(t) {
            for (y_prev, d_prev, cell) in selection_cells(layout, t) {
                let setting = config.m1.resolved(&cell);
                if setting == Setting::Off {
                    continue;
                }
                for mut z in z_prefixes(layout, t) {
                    z[t - 1] = 1;
                    let hi_bit = layout.d_bit(t, &y_prev, &d_prev, &z);
                    z[t - 1] = 0;
                    let lo_bit = layout.d_bit(t, &y_prev, &d_prev, &z);
                    checks.push(PairCheck { hi_bit, lo_bit, setting });
                }
            }
        }
        for (y_prev, d_prev, cell) in outcome_cells(layout, t) {
            let setting = config.m2.resolved(&cell);
            if setting == Setting::Off {
                continue;
            }
            let mut d = d_prev.clone();
            d.push(1);
            let hi_bit = layout.y_bit(t, &y_prev, &d);
            *d.last_mut().unwrap() = 0;
            let lo_bit = layout.y_bit(t, &y_prev, &d);
            checks.push(PairCheck { hi_bit, lo_bit, setting });
        }
    }

    if config.learning != Learning::Off {
        // Rank period-1 experiences; a strictly smaller rank forces a
        // weakly larger second-period selection map, per instrument path.
        let rank = |y: i8, d: i8| -> i8 {
            match config.learning {
                Learning::Short => y - d,
                Learning::Long => (y - d).abs(),
                Learning::Off => unreachable!(),
            }
        };
        let cells: Vec<(u8, u8)> = vec![(0, 0), (0, 1), (1, 0), (1, 1)];
        for z in layout.z_grid() {
            for &(ya, da) in &cells {
                for &(yb, db) in &cells {
                    if rank(ya as i8, da as i8) < rank(yb as i8, db as i8) {
                        let hi_bit = layout.d_bit(2, &[ya], &[da], &z);
                        let lo_bit = layout.d_bit(2, &[yb], &[db], &z);
                        checks.push(PairCheck { hi_bit, lo_bit, setting: Setting::Up });
                    }
                }
            }
        }
    }

    let mut h = vec![1u8; d_q];
    let mut active = 0usize;
    for (s, hs) in h.iter_mut().enumerate() {
        let ok = checks.iter().all(|c| {
            let hi = ((s >> c.hi_bit) & 1) as u8;
            let lo = ((s >> c.lo_bit) & 1) as u8;
            !direction_violated(c.setting, hi, lo)
        });
        if !ok {
            *hs = 0;
        } else {
            active += 1;
        }
    }
    if active == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(MaskVector { h, active_count: active })
}

/// Which map a direction is detected for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectionTarget {
    /// Selection uniformity: contrast E[D_t | Z_t = 1] - E[D_t | Z_t = 0]
    /// within the cell.
    Selection,
    /// Outcome uniformity: contrast E[Y_t | Z_t = 1] - E[Y_t | Z_t = 0]
    /// within the cell.
    Outcome,
}

/// One observation: (outcomes, treatments, instruments), each of length T.
pub type ObservedRow = (Vec<u8>, Vec<u8>, Vec<u8>);

/// Estimate the monotonicity direction within one conditioning cell.
/// Returns the setting and an optional warning (emitted when the contrast
/// is exactly zero and the up convention is applied).
pub fn detect_direction(
    rows: &[ObservedRow],
    t: usize,
    cell: &Cell,
    target: DirectionTarget,
    n_min: usize,
) -> Result<(Setting, Option<String>)> {
    let in_cell = |row: &ObservedRow| -> bool {
        let (y, d, _) = row;
        match target {
            DirectionTarget::Selection => {
                t == 1 || (y[t - 2] == cell.hist[0] && d[t - 2] == cell.hist[1])
            }
            DirectionTarget::Outcome => t == 1 || y[t - 2] == cell.hist[0],
        }
    };
    let mut sums = [0.0f64; 2];
    let mut counts = [0usize; 2];
    for row in rows.iter().filter(|r| in_cell(r)) {
        let (y, d, z) = row;
        let arm = z[t - 1] as usize;
        counts[arm] += 1;
        sums[arm] += match target {
            DirectionTarget::Selection => d[t - 1] as f64,
            DirectionTarget::Outcome => y[t - 1] as f64,
        };
    }
    let n = counts[0].min(counts[1]);
    if n < n_min {
        return Err(Error::InsufficientData {
            t,
            cell: format!("{:?}", cell.hist),
            n,
            n_min,
        });
    }
    let contrast = sums[1] / counts[1] as f64 - sums[0] / counts[0] as f64;
    if contrast > 0.0 {
        Ok((Setting::Up, None))
    } else if contrast < 0.0 {
        Ok((Setting::Down, None))
    } else {
        Ok((
            Setting::Up,
            Some(format!(
                "zero contrast at t={t} cell {:?}; direction set to up by convention",
                cell.hist
            )),
        ))
    }
}

/// Replace every `auto` direction with one detected from data.
pub fn resolve_auto(
    layout: &StateSpaceLayout,
    config: &AssumptionConfig,
    rows: &[ObservedRow],
    n_min: usize,
) -> Result<(AssumptionConfig, Vec<String>)> {
    let mut out = config.clone();
    let mut warnings = Vec::new();
    let t_max = layout.horizon().periods();
    for t in 1..=t_max {
        if layout.horizon().instrumented(t) {
            for (_, _, cell) in selection_cells(layout, t) {
                if config.m1.resolved(&cell) == Setting::Auto {
                    let (dir, warn) =
                        detect_direction(rows, t, &cell, DirectionTarget::Selection, n_min)?;
                    warnings.extend(warn);
                    out.m1.overrides.push((cell, dir));
                }
            }
        }
        for (_, _, cell) in outcome_cells(layout, t) {
            if config.m2.resolved(&cell) == Setting::Auto {
                if !layout.horizon().instrumented(t) {
                    return Err(Error::Invalid(format!(
                        "cannot detect an outcome direction at t={t} without an instrument"
                    )));
                }
                let (dir, warn) = detect_direction(rows, t, &cell, DirectionTarget::Outcome, n_min)?;
                warnings.extend(warn);
                out.m2.overrides.push((cell, dir));
            }
        }
    }
    if out.m1.default == Setting::Auto {
        out.m1.default = Setting::Up; // every cell now carries an override
    }
    if out.m2.default == Setting::Auto {
        out.m2.default = Setting::Up;
    }
    Ok((out, warnings))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskRelation {
    Equal,
    /// Left mask keeps a strict subset of the right mask's states.
    Subset,
    /// Left mask keeps a strict superset.
    Superset,
    Incomparable,
}

pub fn compare_masks(a: &MaskVector, b: &MaskVector) -> Result<MaskRelation> {
    if a.h.len() != b.h.len() {
        return Err(Error::Dimension("masks cover different state spaces".into()));
    }
    let mut a_le_b = true;
    let mut b_le_a = true;
    for (&x, &y) in a.h.iter().zip(&b.h) {
        if x > y {
            a_le_b = false;
        }
        if y > x {
            b_le_a = false;
        }
    }
    Ok(match (a_le_b, b_le_a) {
        (true, true) => MaskRelation::Equal,
        (true, false) => MaskRelation::Subset,
        (false, true) => MaskRelation::Superset,
        (false, false) => MaskRelation::Incomparable,
    })
}

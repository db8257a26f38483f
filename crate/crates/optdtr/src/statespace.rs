//! Latent state space: each state is a full profile of counterfactual
//! outcome and treatment-selection maps, packed into an integer id with a
//! fixed bit layout.

use crate::error::{Error, Result};
use crate::regimes::Horizon;
use serde::{Deserialize, Serialize};

/// Default cap on the number of states (2^20).
pub const DEFAULT_STATE_CAP: usize = 1 << 20;

/// One counterfactual map in the packed state: its argument grid occupies
/// `width` consecutive bits starting at `offset`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitField {
    pub name: String,
    pub args: Vec<String>,
    pub offset: usize,
    pub width: usize,
}

/// Frozen packing of response maps into state ids.
///
/// Fields appear period by period, outcome map before selection map.
/// Within a field, the grid index folds the arguments with the first
/// argument most significant, and the bit position is `offset + index`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSpaceLayout {
    horizon: Horizon,
    markov: bool,
    fields: Vec<BitField>,
    n_bits: usize,
}

impl StateSpaceLayout {
    pub fn build(horizon: &Horizon, markov: bool) -> Result<Self> {
        Self::build_with_cap(horizon, markov, DEFAULT_STATE_CAP)
    }

    pub fn build_with_cap(horizon: &Horizon, markov: bool, cap: usize) -> Result<Self> {
        let t_max = horizon.periods();
        let mut fields = Vec::new();
        let mut offset = 0usize;
        for t in 1..=t_max {
            let (y_args, y_width) = y_field_shape(markov, t);
            fields.push(BitField { name: format!("Y{t}"), args: y_args, offset, width: y_width });
            offset += y_width;
            let (d_args, d_width) = d_field_shape(horizon, markov, t);
            fields.push(BitField { name: format!("D{t}"), args: d_args, offset, width: d_width });
            offset += d_width;
        }
        if offset >= 64 || (1usize << offset) > cap {
            return Err(Error::Dimension(format!(
                "state space needs 2^{offset} states, above the cap of {cap}"
            )));
        }
        Ok(StateSpaceLayout { horizon: horizon.clone(), markov, fields, n_bits: offset })
    }

    pub fn horizon(&self) -> &Horizon {
        &self.horizon
    }

    pub fn markov(&self) -> bool {
        self.markov
    }

    pub fn fields(&self) -> &[BitField] {
        &self.fields
    }

    pub fn n_bits(&self) -> usize {
        self.n_bits
    }

    /// Number of latent states.
    pub fn d_q(&self) -> usize {
        1usize << self.n_bits
    }

    fn field(&self, t: usize, selection: bool) -> &BitField {
        &self.fields[2 * (t - 1) + selection as usize]
    }

    /// Bit position holding Y_t evaluated at the given histories.
    pub fn y_bit(&self, t: usize, y_prev: &[u8], d: &[u8]) -> usize {
        let field = self.field(t, false);
        field.offset + y_grid_index(self.markov, t, y_prev, d)
    }

    /// Bit position holding D_t evaluated at the given histories and
    /// instrument values (`z` has one entry per period; entries for
    /// non-instrumented periods are ignored).
    pub fn d_bit(&self, t: usize, y_prev: &[u8], d_prev: &[u8], z: &[u8]) -> usize {
        let field = self.field(t, true);
        field.offset + d_grid_index(&self.horizon, self.markov, t, y_prev, d_prev, z)
    }

    /// Y_t for state `s` given outcome history `y_prev` and treatments `d`
    /// through period t.
    pub fn y_value(&self, s: usize, t: usize, y_prev: &[u8], d: &[u8]) -> u8 {
        ((s >> self.y_bit(t, y_prev, d)) & 1) as u8
    }

    /// D_t for state `s` given histories and instrument path `z`.
    pub fn d_value(&self, s: usize, t: usize, y_prev: &[u8], d_prev: &[u8], z: &[u8]) -> u8 {
        ((s >> self.d_bit(t, y_prev, d_prev, z)) & 1) as u8
    }

    /// The observed (y, d) cell generated by state `s` when the instrument
    /// path is `z`: selection maps pick d_t, outcome maps pick y_t.
    pub fn observed_cell(&self, s: usize, z: &[u8]) -> (Vec<u8>, Vec<u8>) {
        let t_max = self.horizon.periods();
        let mut y = Vec::with_capacity(t_max);
        let mut d = Vec::with_capacity(t_max);
        for t in 1..=t_max {
            let dt = self.d_value(s, t, &y, &d, z);
            d.push(dt);
            y.push(self.y_value(s, t, &y, &d));
        }
        (y, d)
    }

    /// All instrument paths in ascending order with z_1 most significant;
    /// non-instrumented periods are fixed at 0.
    pub fn z_grid(&self) -> Vec<Vec<u8>> {
        let t_max = self.horizon.periods();
        let instr: Vec<usize> = (1..=t_max).filter(|&t| self.horizon.instrumented(t)).collect();
        let n = instr.len();
        (0..1usize << n)
            .map(|code| {
                let mut z = vec![0u8; t_max];
                for (j, &t) in instr.iter().enumerate() {
                    z[t - 1] = ((code >> (n - 1 - j)) & 1) as u8;
                }
                z
            })
            .collect()
    }

    /// Index of the observed cell (y, d): bits ordered y_1..y_T then
    /// d_1..d_T with y_1 most significant, so the all-ones cell is last.
    pub fn cell_index(&self, y: &[u8], d: &[u8]) -> usize {
        let t_max = self.horizon.periods();
        let mut idx = 0usize;
        for &yt in y {
            idx = (idx << 1) | yt as usize;
        }
        for &dt in d {
            idx = (idx << 1) | dt as usize;
        }
        debug_assert_eq!(y.len() + d.len(), 2 * t_max);
        idx
    }

    /// Inverse of `cell_index`.
    pub fn cell_from_index(&self, idx: usize) -> (Vec<u8>, Vec<u8>) {
        let t_max = self.horizon.periods();
        let mut y = vec![0u8; t_max];
        let mut d = vec![0u8; t_max];
        for t in 0..t_max {
            y[t] = ((idx >> (2 * t_max - 1 - t)) & 1) as u8;
            d[t] = ((idx >> (t_max - 1 - t)) & 1) as u8;
        }
        (y, d)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn y_field_shape(markov: bool, t: usize) -> (Vec<String>, usize) {
    if t == 1 {
        (vec!["d1".into()], 2)
    } else if markov {
        (vec![format!("y{}", t - 1), format!("d{t}")], 4)
    } else {
        let mut args: Vec<String> = (1..t).map(|j| format!("y{j}")).collect();
        args.extend((1..=t).map(|j| format!("d{j}")));
        let width = 1usize << (2 * t - 1);
        (args, width)
    }
}

fn d_field_shape(horizon: &Horizon, markov: bool, t: usize) -> (Vec<String>, usize) {
    if t == 1 {
        if horizon.instrumented(1) {
            (vec!["z1".into()], 2)
        } else {
            (vec![], 1)
        }
    } else if markov {
        let mut args = vec![format!("y{}", t - 1), format!("d{}", t - 1)];
        let mut width = 4usize;
        if horizon.instrumented(t) {
            args.push(format!("z{t}"));
            width *= 2;
        }
        (args, width)
    } else {
        let mut args: Vec<String> = (1..t).map(|j| format!("y{j}")).collect();
        args.extend((1..t).map(|j| format!("d{j}")));
        let mut width = 1usize << (2 * (t - 1));
        for j in 1..=t {
            if horizon.instrumented(j) {
                args.push(format!("z{j}"));
                width *= 2;
            }
        }
        (args, width)
    }
}

fn y_grid_index(markov: bool, t: usize, y_prev: &[u8], d: &[u8]) -> usize {
    if t == 1 {
        d[0] as usize
    } else if markov {
        ((y_prev[t - 2] as usize) << 1) | d[t - 1] as usize
    } else {
        let mut idx = 0usize;
        for &y in &y_prev[..t - 1] {
            idx = (idx << 1) | y as usize;
        }
        for &dj in &d[..t] {
            idx = (idx << 1) | dj as usize;
        }
        idx
    }
}

fn d_grid_index(
    horizon: &Horizon,
    markov: bool,
    t: usize,
    y_prev: &[u8],
    d_prev: &[u8],
    z: &[u8],
) -> usize {
    if t == 1 {
        if horizon.instrumented(1) {
            z[0] as usize
        } else {
            0
        }
    } else if markov {
        let mut idx = ((y_prev[t - 2] as usize) << 1) | d_prev[t - 2] as usize;
        if horizon.instrumented(t) {
            idx = (idx << 1) | z[t - 1] as usize;
        }
        idx
    } else {
        let mut idx = 0usize;
        for &y in &y_prev[..t - 1] {
            idx = (idx << 1) | y as usize;
        }
        for &dj in &d_prev[..t - 1] {
            idx = (idx << 1) | dj as usize;
        }
        for j in 1..=t {
            if horizon.instrumented(j) {
                idx = (idx << 1) | z[j - 1] as usize;
            }
        }
        idx
    }
}

/// Explicit counterfactual maps, one bit per grid point, in layout order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResponseMaps {
    bits: Vec<u8>,
}

impl ResponseMaps {
    pub fn zeros(layout: &StateSpaceLayout) -> Self {
        ResponseMaps { bits: vec![0; layout.n_bits()] }
    }

    pub fn set_y(&mut self, layout: &StateSpaceLayout, t: usize, y_prev: &[u8], d: &[u8], v: u8) {
        self.bits[layout.y_bit(t, y_prev, d)] = v & 1;
    }

    pub fn set_d(
        &mut self,
        layout: &StateSpaceLayout,
        t: usize,
        y_prev: &[u8],
        d_prev: &[u8],
        z: &[u8],
        v: u8,
    ) {
        self.bits[layout.d_bit(t, y_prev, d_prev, z)] = v & 1;
    }

    pub fn y_value(&self, layout: &StateSpaceLayout, t: usize, y_prev: &[u8], d: &[u8]) -> u8 {
        self.bits[layout.y_bit(t, y_prev, d)]
    }

    pub fn d_value(
        &self,
        layout: &StateSpaceLayout,
        t: usize,
        y_prev: &[u8],
        d_prev: &[u8],
        z: &[u8],
    ) -> u8 {
        self.bits[layout.d_bit(t, y_prev, d_prev, z)]
    }
}

/// Pack response maps into a state id.
pub fn encode(maps: &ResponseMaps, layout: &StateSpaceLayout) -> Result<usize> {
    if maps.bits.len() != layout.n_bits() {
        return Err(Error::Dimension(format!(
            "maps carry {} bits, layout expects {}",
            maps.bits.len(),
            layout.n_bits()
        )));
    }
    Ok(maps
        .bits
        .iter()
        .enumerate()
        .fold(0usize, |acc, (i, &b)| acc | ((b as usize) << i)))
}

/// Unpack a state id into explicit response maps.
pub fn decode(s: usize, layout: &StateSpaceLayout) -> Result<ResponseMaps> {
    if s >= layout.d_q() {
        return Err(Error::Invalid(format!("state id {} out of range", s)));
    }
    Ok(ResponseMaps {
        bits: (0..layout.n_bits()).map(|i| ((s >> i) & 1) as u8).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regimes::{Adaptivity, Horizon};
    use proptest::prelude::*;

    #[test]
    fn dimensions() {
        let t2 = Horizon::full(2).unwrap();
        let layout = StateSpaceLayout::build(&t2, true).unwrap();
        assert_eq!(layout.d_q(), 65_536);
        assert_eq!(layout.n_bits(), 16);

        let t1 = Horizon::full(1).unwrap();
        let layout = StateSpaceLayout::build(&t1, true).unwrap();
        assert_eq!(layout.d_q(), 16);

        // Without the Markov restriction T=2 needs 2^28 states.
        let err = StateSpaceLayout::build(&t2, false).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
        let big = StateSpaceLayout::build_with_cap(&t2, false, 1 << 28).unwrap();
        assert_eq!(big.d_q(), 1 << 28);
    }

    #[test]
    fn no_z2_dimensions() {
        let h = Horizon::new(2, vec![true, false], Adaptivity::Full).unwrap();
        let layout = StateSpaceLayout::build(&h, true).unwrap();
        // D2 loses its z argument: 2 + 2 + 4 + 4 = 12 bits.
        assert_eq!(layout.n_bits(), 12);
        assert_eq!(layout.z_grid(), vec![vec![0, 0], vec![1, 0]]);
    }

    #[test]
    fn t1_bit_positions() {
        let h = Horizon::full(1).unwrap();
        let layout = StateSpaceLayout::build(&h, true).unwrap();
        assert_eq!(layout.y_bit(1, &[], &[0]), 0);
        assert_eq!(layout.y_bit(1, &[], &[1]), 1);
        assert_eq!(layout.d_bit(1, &[], &[], &[0]), 2);
        assert_eq!(layout.d_bit(1, &[], &[], &[1]), 3);
    }

    #[test]
    fn t2_field_offsets() {
        let h = Horizon::full(2).unwrap();
        let layout = StateSpaceLayout::build(&h, true).unwrap();
        let names: Vec<&str> = layout.fields().iter().map(|f| f.name.as_str()).collect();
        assert_eq!(names, vec!["Y1", "D1", "Y2", "D2"]);
        assert_eq!(layout.fields()[2].offset, 4);
        assert_eq!(layout.fields()[2].width, 4);
        assert_eq!(layout.fields()[3].offset, 8);
        assert_eq!(layout.fields()[3].width, 8);
        // Y2 grid folds (y1, d2) with y1 most significant.
        assert_eq!(layout.y_bit(2, &[1], &[0, 0]), 6);
        assert_eq!(layout.y_bit(2, &[0], &[1, 1]), 5);
        // D2 grid folds (y1, d1, z2).
        assert_eq!(layout.d_bit(2, &[1], &[0], &[0, 1]), 8 + 5);
        assert_eq!(layout.d_bit(2, &[0], &[1], &[1, 0]), 8 + 2);
    }

    #[test]
    fn z_grid_order() {
        let h = Horizon::full(2).unwrap();
        let layout = StateSpaceLayout::build(&h, true).unwrap();
        assert_eq!(
            layout.z_grid(),
            vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]
        );
    }

    #[test]
    fn cell_index_roundtrip() {
        let h = Horizon::full(2).unwrap();
        let layout = StateSpaceLayout::build(&h, true).unwrap();
        assert_eq!(layout.cell_index(&[0, 0], &[0, 0]), 0);
        assert_eq!(layout.cell_index(&[1, 1], &[1, 1]), 15);
        assert_eq!(layout.cell_index(&[1, 0], &[0, 1]), 0b1001);
        for idx in 0..16 {
            let (y, d) = layout.cell_from_index(idx);
            assert_eq!(layout.cell_index(&y, &d), idx);
        }
    }

    #[test]
    fn observed_cell_examples() {
        let h = Horizon::full(2).unwrap();
        let layout = StateSpaceLayout::build(&h, true).unwrap();
        // All-zero state: everything is 0 regardless of z.
        for z in layout.z_grid() {
            assert_eq!(layout.observed_cell(0, &z), (vec![0, 0], vec![0, 0]));
        }
        // All-ones state: everything is 1.
        let top = layout.d_q() - 1;
        for z in layout.z_grid() {
            assert_eq!(layout.observed_cell(top, &z), (vec![1, 1], vec![1, 1]));
        }
        // A complier-style state: D1 follows z1, Y1 follows d1.
        let mut maps = ResponseMaps::zeros(&layout);
        maps.set_d(&layout, 1, &[], &[], &[1, 0], 1);
        maps.set_y(&layout, 1, &[], &[1], 1);
        let s = encode(&maps, &layout).unwrap();
        let (y, d) = layout.observed_cell(s, &[1, 0]);
        assert_eq!(d[0], 1);
        assert_eq!(y[0], 1);
        let (y, d) = layout.observed_cell(s, &[0, 0]);
        assert_eq!(d[0], 0);
        assert_eq!(y[0], 0);
    }

    proptest! {
        #[test]
        fn encode_decode_roundtrip(s in 0usize..65_536) {
            let h = Horizon::full(2).unwrap();
            let layout = StateSpaceLayout::build(&h, true).unwrap();
            let maps = decode(s, &layout).unwrap();
            prop_assert_eq!(encode(&maps, &layout).unwrap(), s);
        }

        #[test]
        fn accessors_agree_with_maps(s in 0usize..65_536, y1 in 0u8..2, d1 in 0u8..2, d2 in 0u8..2, z2 in 0u8..2) {
            let h = Horizon::full(2).unwrap();
            let layout = StateSpaceLayout::build(&h, true).unwrap();
            let maps = decode(s, &layout).unwrap();
            prop_assert_eq!(
                layout.y_value(s, 2, &[y1], &[d1, d2]),
                maps.y_value(&layout, 2, &[y1], &[d1, d2])
            );
            prop_assert_eq!(
                layout.d_value(s, 2, &[y1], &[d1], &[0, z2]),
                maps.d_value(&layout, 2, &[y1], &[d1], &[0, z2])
            );
        }
    }
}

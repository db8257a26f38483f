//! Synthetic-data generator: a two-period threshold-crossing process with
//! a shared individual effect, used as ground truth in tests and demos.

use crate::error::{Error, Result};
use crate::statespace::StateSpaceLayout;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Default Monte Carlo draws for the ground-truth state distribution.
pub const DEFAULT_MC_DRAWS: usize = 1_000_000;

/// Coefficients of the data-generating process
///   D1 = 1{pi1 Z1 + a + v1 >= 0}
///   Y1 = 1{mu1 D1 + a + e1 >= 0}
///   D2 = 1{pi21 Y1 + pi22 D1 + pi23 Z2 + a + v2 >= 0}
///   Y2 = 1{mu21 Y1 + mu22 D2 + a + e2 >= 0}
/// with a, v_t, e_t independent centered normals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub pi1: f64,
    pub mu1: f64,
    pub pi21: f64,
    pub pi22: f64,
    pub pi23: f64,
    pub mu21: f64,
    pub mu22: f64,
    pub sd_alpha: f64,
    pub sd_v: f64,
    pub sd_e: f64,
    pub z1_prob: f64,
    pub z2_prob: f64,
    pub z2_present: bool,
}

impl DgpConfig {
    /// All slope coefficients +0.5.
    pub fn positive() -> Self {
        DgpConfig {
            pi1: 0.5,
            mu1: 0.5,
            pi21: 0.5,
            pi22: 0.5,
            pi23: 0.5,
            mu21: 0.5,
            mu22: 0.5,
            sd_alpha: 1.0,
            sd_v: 1.0,
            sd_e: 1.0,
            z1_prob: 0.5,
            z2_prob: 0.5,
            z2_present: true,
        }
    }

    /// Positive coefficients except a negative second-period treatment
    /// effect.
    pub fn neg_mu22() -> Self {
        DgpConfig { mu22: -0.5, ..Self::positive() }
    }

    /// Positive coefficients without a second-period instrument.
    pub fn no_z2() -> Self {
        DgpConfig { z2_present: false, ..Self::positive() }
    }

    pub fn from_preset(name: &str) -> Result<Self> {
        match name {
            "positive" => Ok(Self::positive()),
            "neg-mu22" => Ok(Self::neg_mu22()),
            "no-z2" => Ok(Self::no_z2()),
            other => Err(Error::Invalid(format!(
                "unknown preset '{other}' (expected positive, neg-mu22, or no-z2)"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sd_alpha <= 0.0 || self.sd_v <= 0.0 || self.sd_e <= 0.0 {
            return Err(Error::Invalid("standard deviations must be positive".into()));
        }
        for p in [self.z1_prob, self.z2_prob] {
            if !(0.0 < p && p < 1.0) {
                return Err(Error::Invalid("instrument probabilities must lie in (0, 1)".into()));
            }
        }
        Ok(())
    }
}

/// One simulated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSample {
    /// (outcomes, treatments, instruments) per unit, each of length 2.
    pub rows: Vec<(Vec<u8>, Vec<u8>, Vec<u8>)>,
    pub seed: u64,
}

struct Latents {
    a: f64,
    v1: f64,
    e1: f64,
    v2: f64,
    e2: f64,
}

fn draw_latents(cfg: &DgpConfig, rng: &mut ChaCha8Rng) -> Latents {
    let na = Normal::new(0.0, cfg.sd_alpha).unwrap();
    let nv = Normal::new(0.0, cfg.sd_v).unwrap();
    let ne = Normal::new(0.0, cfg.sd_e).unwrap();
    Latents {
        a: na.sample(rng),
        v1: nv.sample(rng),
        e1: ne.sample(rng),
        v2: nv.sample(rng),
        e2: ne.sample(rng),
    }
}

fn d1_map(cfg: &DgpConfig, l: &Latents, z1: u8) -> u8 {
    u8::from(cfg.pi1 * z1 as f64 + l.a + l.v1 >= 0.0)
}

fn y1_map(cfg: &DgpConfig, l: &Latents, d1: u8) -> u8 {
    u8::from(cfg.mu1 * d1 as f64 + l.a + l.e1 >= 0.0)
}

fn d2_map(cfg: &DgpConfig, l: &Latents, y1: u8, d1: u8, z2: u8) -> u8 {
    u8::from(
        cfg.pi21 * y1 as f64 + cfg.pi22 * d1 as f64 + cfg.pi23 * z2 as f64 + l.a + l.v2 >= 0.0,
    )
}

fn y2_map(cfg: &DgpConfig, l: &Latents, y1: u8, d2: u8) -> u8 {
    u8::from(cfg.mu21 * y1 as f64 + cfg.mu22 * d2 as f64 + l.a + l.e2 >= 0.0)
}

fn check_layout(cfg: &DgpConfig, layout: &StateSpaceLayout) -> Result<()> {
    let h = layout.horizon();
    if h.periods() != 2 || !layout.markov() {
        return Err(Error::Invalid(
            "the generator needs the two-period layout with the Markov restriction".into(),
        ));
    }
    if h.instrumented(2) != cfg.z2_present {
        return Err(Error::Invalid(
            "layout's second-period instrument flag disagrees with the generator config".into(),
        ));
    }
    Ok(())
}

/// Encode one latent draw's full profile of counterfactual maps.
fn state_of(cfg: &DgpConfig, l: &Latents, layout: &StateSpaceLayout) -> usize {
    let mut s = 0usize;
    for z1 in 0..2u8 {
        if d1_map(cfg, l, z1) == 1 {
            s |= 1 << layout.d_bit(1, &[], &[], &[z1, 0]);
        }
    }
    for d1 in 0..2u8 {
        if y1_map(cfg, l, d1) == 1 {
            s |= 1 << layout.y_bit(1, &[], &[d1]);
        }
    }
    let z2_vals: &[u8] = if cfg.z2_present { &[0, 1] } else { &[0] };
    for y1 in 0..2u8 {
        for d1 in 0..2u8 {
            for &z2 in z2_vals {
                if d2_map(cfg, l, y1, d1, z2) == 1 {
                    s |= 1 << layout.d_bit(2, &[y1], &[d1], &[0, z2]);
                }
            }
        }
        for d2 in 0..2u8 {
            if y2_map(cfg, l, y1, d2) == 1 {
                s |= 1 << layout.y_bit(2, &[y1], &[0, d2]);
            }
        }
    }
    s
}

/// Monte Carlo estimate of the state distribution the process induces.
pub fn true_q(
    cfg: &DgpConfig,
    layout: &StateSpaceLayout,
    n_draws: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    check_layout(cfg, layout)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0u64; layout.d_q()];
    for _ in 0..n_draws {
        let l = draw_latents(cfg, &mut rng);
        counts[state_of(cfg, &l, layout)] += 1;
    }
    Ok(counts.iter().map(|&c| c as f64 / n_draws as f64).collect())
}

/// Draw an i.i.d. observed sample from the process.
pub fn sample_data(cfg: &DgpConfig, n: usize, seed: u64) -> Result<SyntheticSample> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let z1 = u8::from(rng.gen::<f64>() < cfg.z1_prob);
        let z2 = if cfg.z2_present {
            u8::from(rng.gen::<f64>() < cfg.z2_prob)
        } else {
            0
        };
        let l = draw_latents(cfg, &mut rng);
        let d1 = d1_map(cfg, &l, z1);
        let y1 = y1_map(cfg, &l, d1);
        let d2 = d2_map(cfg, &l, y1, d1, z2);
        let y2 = y2_map(cfg, &l, y1, d2);
        rows.push((vec![y1, y2], vec![d1, d2], vec![z1, z2]));
    }
    Ok(SyntheticSample { rows, seed })
}

/// The exact observation vector implied by a ground-truth q.
pub fn exact_p(q: &[f64], b: &crate::matrices::SparseRowMatrix) -> Vec<f64> {
    b.apply(q)
}

/// Write a sample as CSV with header y1,d1,z1,y2,d2,z2; the z2 column is
/// dropped when the design has no period-2 instrument.
pub fn write_csv(sample: &SyntheticSample, path: &Path, z2_present: bool) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["y1", "d1", "z1", "y2", "d2"];
    if z2_present {
        header.push("z2");
    }
    w.write_record(&header)?;
    for (y, d, z) in &sample.rows {
        let mut rec = vec![
            y[0].to_string(),
            d[0].to_string(),
            z[0].to_string(),
            y[1].to_string(),
            d[1].to_string(),
        ];
        if z2_present {
            rec.push(z[1].to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chip::{ChipModel, ChipParams, Geometry};
use crate::erase::{EraseEngine, EraseTimingTable, Mispredictor, Scheme, ROWS};
use crate::error::{Error, Result};

/// Settings of a wear-out experiment.
#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct LifetimeConfig {
    pub blocks: u32,
    /// Cycles between M_RBER checkpoints.
    pub step: u32,
    pub max_pec: u32,
    pub seed: u64,
    pub mispredict_rate: f64,
    /// Overrides the chip's RBER requirement (and the aggressive table derived from it).
    pub requirement: Option<f64>,
    /// Stop cycling one checkpoint after the mean crosses the requirement.
    pub stop_after_crossing: bool,
}

impl Default for LifetimeConfig {
    fn default() -> Self {
        LifetimeConfig {
            blocks: 120,
            step: 250,
            max_pec: 8000,
            seed: 1,
            mispredict_rate: 0.0,
            requirement: None,
            stop_after_crossing: false,
        }
    }
}

/// Mean worst-page error count against P/E cycles for one scheme.
#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct LifetimeCurve {
    pub scheme: Scheme,
    pub requirement: f64,
    pub pec: Vec<u32>,
    pub mean_rber: Vec<f64>,
    /// Interpolated P/E count where the mean first reaches the requirement.
    pub crossing: Option<f64>,
    pub retired_blocks: u32,
    pub mispredictions: u64,
    pub predictions: u64,
}

/// Deficits the aggressive table may leave in each loop row under `requirement`.
pub fn allowed_deficits(params: &ChipParams, requirement: f64) -> [u32; ROWS] {
    let mut d = [0; ROWS];
    for (row, slot) in d.iter_mut().enumerate() {
        *slot = params.rber.allowed_deficit(row as u32 + 1, requirement, 2);
    }
    d
}

/// Timing table matching an RBER requirement.
pub fn ept_for_requirement(params: &ChipParams, requirement: f64) -> EraseTimingTable {
    let shipped = EraseTimingTable::shipped();
    let generated = EraseTimingTable::generate(&params.timing, &allowed_deficits(params, requirement));
    if generated == shipped {
        shipped
    } else {
        generated
    }
}

/// Stratified hardness percentiles: one uniform draw inside each of `n` equal slices.
pub fn stratified_hardness(n: u32, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|k| (k as f64 + rng.gen::<f64>()) / n as f64).collect()
}

fn crossing(pec: &[u32], mean: &[f64], req: f64) -> Option<f64> {
    let i = mean.iter().position(|&m| m >= req)?;
    if i == 0 {
        return Some(pec[0] as f64);
    }
    let (p0, p1) = (pec[i - 1] as f64, pec[i] as f64);
    let (m0, m1) = (mean[i - 1], mean[i]);
    Some(p0 + (req - m0) / (m1 - m0) * (p1 - p0))
}

/// Cycle a population of blocks under `scheme` and track the mean error count.
pub fn lifetime_experiment(params: &ChipParams, scheme: Scheme, cfg: &LifetimeConfig) -> Result<LifetimeCurve> {
    if cfg.blocks == 0 || cfg.step == 0 {
        return Err(Error::Config("lifetime experiment needs blocks and a positive step".into()));
    }
    if cfg.max_pec > params.profile.max_pec() {
        return Err(Error::Extrapolation { pec: cfg.max_pec, max: params.profile.max_pec() });
    }
    let mut params = params.clone();
    let requirement = cfg.requirement.unwrap_or(params.rber.requirement);
    params.rber.requirement = requirement;
    params.geometry = Geometry {
        channels: 1,
        chips_per_channel: 1,
        planes_per_chip: 1,
        blocks_per_plane: cfg.blocks,
        ..params.geometry
    };
    let ept = ept_for_requirement(&params, requirement);
    let hardness = stratified_hardness(cfg.blocks, cfg.seed);
    let mut chip = ChipModel::with_hardness(params, cfg.seed, hardness)?;
    let misp = Mispredictor { rate: cfg.mispredict_rate, seed: cfg.seed };
    let mut engine = EraseEngine::new(scheme, cfg.blocks, ept, misp);

    let mut alive = vec![true; cfg.blocks as usize];
    let mut curve = LifetimeCurve {
        scheme,
        requirement,
        pec: Vec::new(),
        mean_rber: Vec::new(),
        crossing: None,
        retired_blocks: 0,
        mispredictions: 0,
        predictions: 0,
    };
    for c in 0..=cfg.max_pec {
        let checkpoint = c % cfg.step == 0;
        let mut sum = 0.0;
        let mut count = 0u32;
        for b in 0..cfg.blocks {
            if !alive[b as usize] {
                continue;
            }
            let out = engine.erase(&mut chip, b)?;
            curve.mispredictions += out.mispredictions as u64;
            curve.predictions += out.predictions as u64;
            if !out.completed {
                alive[b as usize] = false;
                curve.retired_blocks += 1;
                continue;
            }
            chip.program_block(b)?;
            if checkpoint {
                sum += chip.rber_of(b, out.deficit_quanta, out.ispe_loops())?;
                count += 1;
            }
        }
        if checkpoint {
            if count == 0 {
                break;
            }
            curve.pec.push(c);
            curve.mean_rber.push(sum / count as f64);
            if curve.crossing.is_none() {
                curve.crossing = crossing(&curve.pec, &curve.mean_rber, requirement);
                if curve.crossing.is_some() && cfg.stop_after_crossing {
                    break;
                }
            }
        }
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crossing_interpolates() {
        let x = crossing(&[0, 250, 500], &[50.0, 60.0, 70.0], 63.0).unwrap();
        assert!((x - 325.0).abs() < 1e-9);
        assert_eq!(crossing(&[0, 250], &[10.0, 20.0], 63.0), None);
    }

    #[test]
    fn strata_cover_unit_interval() {
        let h = stratified_hardness(10, 3);
        for (k, u) in h.iter().enumerate() {
            assert!(*u >= k as f64 / 10.0 && *u < (k + 1) as f64 / 10.0);
        }
    }
}

use serde::Serialize;

use crate::analytics::lifetime::{allowed_deficits, stratified_hardness};
use crate::chip::{ChipModel, ChipParams, Geometry};
use crate::erase::{erase_m_ispe, EraseEngine, EraseTimingTable, Mispredictor, Scheme, BUCKETS, ROWS};
use crate::error::{Error, Result};
use crate::units::Nanos;

/// Settings of a characterization sweep.
#[derive(Serialize, Clone, Debug, PartialEq)]
pub struct CharacterizeConfig {
    pub blocks: u32,
    pub pec_levels: Vec<u32>,
    /// Shallow-probe widths to sweep, ns.
    pub shallow_widths: Vec<Nanos>,
    /// Highest P/E count counted as "low" for the shallow-erasure sweep.
    pub low_pec_max: u32,
    pub seed: u64,
}

impl Default for CharacterizeConfig {
    fn default() -> Self {
        CharacterizeConfig {
            blocks: 1000,
            pec_levels: vec![0, 500, 1000, 2000, 3000, 4000, 5000],
            shallow_widths: vec![500_000, 1_000_000, 1_500_000, 2_000_000],
            low_pec_max: 500,
            seed: 1,
        }
    }
}

/// Fraction of erases finishing faster than a default single loop, for one probe width.
#[derive(Serialize, Clone, Debug, PartialEq)]
pub struct ShallowSweepPoint {
    pub shallow_ns: Nanos,
    pub erases: u64,
    pub below_default: f64,
    /// Mean latency reduction of single-loop erases vs pulse + verify at default width.
    pub mean_single_loop_reduction: f64,
}

#[derive(Serialize, Clone, Debug, PartialEq)]
pub struct PecOccupancy {
    pub pec: u32,
    /// Histogram of the fail-bit bucket seen after the shallow probe; last slot is "above".
    pub buckets: Vec<u64>,
    pub mean_quanta: f64,
    pub max_quanta: u32,
}

#[derive(Serialize, Clone, Debug, PartialEq)]
pub struct Characterization {
    pub gamma_estimate: f64,
    pub delta_estimate: f64,
    pub occupancy: Vec<PecOccupancy>,
    pub sweep: Vec<ShallowSweepPoint>,
    /// Conservative pulse widths per row and bucket, quanta.
    pub conservative: Vec<Vec<u32>>,
    pub aggressive: Vec<Vec<u32>>,
    #[serde(skip)]
    pub table: EraseTimingTable,
    pub unerasable: u64,
}

fn population(params: &ChipParams, blocks: u32, pec: u32, seed: u64) -> Result<ChipModel> {
    let mut p = params.clone();
    p.geometry = Geometry { channels: 1, chips_per_channel: 1, planes_per_chip: 1, blocks_per_plane: blocks, ..p.geometry };
    let mut chip = ChipModel::with_hardness(p, seed, stratified_hardness(blocks, seed))?;
    for b in 0..blocks {
        chip.set_wear(b, pec, 0.0)?;
    }
    Ok(chip)
}

/// Fine-grained erase of a sampled population at several wear levels; recovers the
/// fail-bit constants and rebuilds the erase timing table from what was observed.
pub fn characterize(params: &ChipParams, cfg: &CharacterizeConfig) -> Result<Characterization> {
    if cfg.blocks == 0 || cfg.pec_levels.is_empty() {
        return Err(Error::Config("characterization needs blocks and at least one PEC level".into()));
    }
    let t = &params.timing;
    let max_r = t.quanta_per_level + 1;
    let se = t.se_quanta();
    // (remaining quanta, fail count) pairs straight from per-quantum verifies
    let mut fails_at: Vec<Vec<u32>> = vec![Vec::new(); max_r as usize + 1];
    let mut occupancy = Vec::new();
    let mut unerasable = 0u64;
    for &pec in &cfg.pec_levels {
        let mut chip = population(params, cfg.blocks, pec, cfg.seed ^ pec as u64)?;
        let mut hist = vec![0u64; BUCKETS + 1];
        let (mut sum, mut max, mut done) = (0u64, 0u32, 0u64);
        for b in 0..cfg.blocks {
            let m = erase_m_ispe(&mut chip, b)?;
            if !m.outcome.completed {
                unerasable += 1;
                continue;
            }
            done += 1;
            sum += m.n as u64;
            max = max.max(m.n);
            for (k, rec) in m.outcome.loops.iter().enumerate() {
                let r = m.n - (k as u32 + 1);
                if (1..=max_r).contains(&r) {
                    fails_at[r as usize].push(rec.fail_count);
                }
            }
            if let Some(rec) = m.outcome.loops.get(se as usize - 1) {
                if rec.fail_count > params.failbits.f_pass {
                    let bk = params.failbits.bucket_of(rec.fail_count).min(BUCKETS as u32);
                    hist[bk as usize] += 1;
                }
            }
        }
        occupancy.push(PecOccupancy {
            pec,
            buckets: hist,
            mean_quanta: sum as f64 / done.max(1) as f64,
            max_quanta: max,
        });
    }

    let gamma = fails_at[1].iter().copied().max().ok_or_else(|| missing(1))? as f64;
    // buckets past the first are centred on (r - 1.5) * delta
    let (mut num, mut den) = (0.0, 0.0);
    for r in 3..=t.quanta_per_level {
        let x = r as f64 - 1.5;
        for &f in &fails_at[r as usize] {
            num += f as f64 * x;
            den += x * x;
        }
    }
    if den == 0.0 {
        return Err(missing(3));
    }
    let delta = num / den;

    // conservative cell = most quanta still missing among observations in that bucket
    let fb = crate::chip::FailBitParams { gamma: gamma.round() as u32, delta: delta.round() as u32, ..params.failbits.clone() };
    let mut worst = [0u32; BUCKETS];
    for (r, fails) in fails_at.iter().enumerate().skip(1) {
        for &f in fails {
            let bk = fb.bucket_of(f) as usize;
            if bk < BUCKETS {
                worst[bk] = worst[bk].max(r as u32);
            }
        }
    }
    if let Some(b) = worst.iter().position(|&w| w == 0) {
        return Err(Error::Calibration(format!("fail-bit bucket {b} was never observed")));
    }
    let deficits = allowed_deficits(params, params.rber.requirement);
    let mut cons = vec![vec![0; BUCKETS]; ROWS];
    let mut aggr = vec![vec![0; BUCKETS]; ROWS];
    for row in 0..ROWS {
        let cap = if row == 0 { t.quanta_per_level - se } else { t.quanta_per_level };
        for b in 0..BUCKETS {
            cons[row][b] = worst[b].min(cap);
            aggr[row][b] = worst[b].saturating_sub(deficits[row]).min(cap);
        }
    }
    let table = EraseTimingTable::from_grids(&cons, &aggr)?;

    let mut sweep = Vec::new();
    for &w in &cfg.shallow_widths {
        sweep.push(shallow_sweep(params, cfg, w)?);
    }
    Ok(Characterization {
        gamma_estimate: gamma,
        delta_estimate: delta,
        occupancy,
        sweep,
        conservative: cons,
        aggressive: aggr,
        table,
        unerasable,
    })
}

fn missing(r: u32) -> Error {
    Error::Calibration(format!("no verify observed with {r} quanta remaining"))
}

/// Conservative adaptive erase with probe width `width` over the low-wear levels.
pub fn shallow_sweep(params: &ChipParams, cfg: &CharacterizeConfig, width: Nanos) -> Result<ShallowSweepPoint> {
    let mut p = params.clone();
    p.timing.t_se = width;
    p.validate()?;
    let ept = EraseTimingTable::generate(&p.timing, &allowed_deficits(&p, p.rber.requirement));
    let default_loop = (p.timing.t_ep_default + p.timing.t_vr) as f64;
    let (mut erases, mut below, mut single, mut reduction) = (0u64, 0u64, 0u64, 0.0);
    for &pec in cfg.pec_levels.iter().filter(|&&pec| pec <= cfg.low_pec_max) {
        let mut chip = population(&p, cfg.blocks, pec, cfg.seed ^ pec as u64)?;
        let mut engine = EraseEngine::new(Scheme::AeroCons, cfg.blocks, ept.clone(), Mispredictor::none());
        for b in 0..cfg.blocks {
            let out = engine.erase(&mut chip, b)?;
            erases += 1;
            let lat = out.total_latency as f64;
            if out.completed && lat < default_loop {
                below += 1;
            }
            if out.completed && out.ispe_loops() == 1 {
                single += 1;
                reduction += 1.0 - lat / default_loop;
            }
        }
    }
    if erases == 0 {
        return Err(Error::Config(format!("no PEC level at or below {}", cfg.low_pec_max)));
    }
    Ok(ShallowSweepPoint {
        shallow_ns: width,
        erases,
        below_default: below as f64 / erases as f64,
        mean_single_loop_reduction: if single == 0 { 0.0 } else { reduction / single as f64 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_rejected() {
        let cfg = CharacterizeConfig { pec_levels: vec![], ..Default::default() };
        assert!(characterize(&ChipParams::shipped(), &cfg).is_err());
    }
}

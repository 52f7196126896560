use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{tag, unit_f64};
use crate::units::Nanos;

use super::params::ChipParams;

/// Per-block physical state.
#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct BlockState {
    pub id: u32,
    /// Latent percentile of how hard this block is to erase, in [0, 1).
    pub hardness: f64,
    pub pec: u32,
    /// Erase quanta credited during the erase in progress.
    pub consumed: u32,
    /// Highest ladder level used during the erase in progress.
    pub ladder_level: u32,
    pub stress: f64,
    pub erased: bool,
    pub page_write_cursor: u32,
    /// Quanta the erase in progress needs (including transient extras).
    pub target: u32,
    pub erase_seq: u64,
    pub in_erase: bool,
    pub verifies: u32,
    pub last_fail: Option<u32>,
}

/// What one erase pulse did.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PulseEffect {
    pub credited: u32,
    pub stress: f64,
}

/// A set of flash blocks with shared parameters and a deterministic noise source.
#[derive(Clone, Debug)]
pub struct ChipModel {
    params: ChipParams,
    seed: u64,
    blocks: Vec<BlockState>,
    /// Pulse width configured through set-feature, one per chip.
    next_tep: Vec<Option<Nanos>>,
}

impl ChipModel {
    pub fn new(params: ChipParams, seed: u64) -> Result<Self> {
        params.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ tag::HARDNESS);
        let hardness = (0..params.geometry.blocks()).map(|_| rng.gen::<f64>()).collect();
        Self::with_hardness(params, seed, hardness)
    }

    /// Build with caller-chosen hardness percentiles (one per block).
    pub fn with_hardness(params: ChipParams, seed: u64, hardness: Vec<f64>) -> Result<Self> {
        params.validate()?;
        if hardness.len() != params.geometry.blocks() as usize {
            return Err(Error::Config(format!(
                "{} hardness values for {} blocks",
                hardness.len(),
                params.geometry.blocks()
            )));
        }
        let blocks = hardness
            .into_iter()
            .enumerate()
            .map(|(i, h)| BlockState {
                id: i as u32,
                hardness: h.clamp(0.0, 1.0),
                pec: 0,
                consumed: 0,
                ladder_level: 0,
                stress: 0.0,
                erased: true,
                page_write_cursor: 0,
                target: 0,
                erase_seq: 0,
                in_erase: false,
                verifies: 0,
                last_fail: None,
            })
            .collect();
        let chips = params.geometry.chips() as usize;
        Ok(ChipModel { params, seed, blocks, next_tep: vec![None; chips] })
    }

    pub fn params(&self) -> &ChipParams {
        &self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn num_blocks(&self) -> u32 {
        self.blocks.len() as u32
    }

    pub fn block(&self, id: u32) -> Result<&BlockState> {
        self.blocks.get(id as usize).ok_or(Error::Addressing(format!("block {id}")))
    }

    fn block_mut(&mut self, id: u32) -> Result<&mut BlockState> {
        self.blocks.get_mut(id as usize).ok_or(Error::Addressing(format!("block {id}")))
    }

    pub fn blocks(&self) -> &[BlockState] {
        &self.blocks
    }

    /// Requirement without the per-erase wobble.
    pub fn latent_required_quanta(&self, id: u32) -> Result<u32> {
        let b = self.block(id)?;
        self.params.profile.required_quanta(b.hardness, b.pec)
    }

    /// Requirement the next (or current) erase of this block will face.
    pub fn required_quanta(&self, id: u32) -> Result<u32> {
        let b = self.block(id)?;
        let j = self.params.stress.erase_jitter;
        let w = unit_f64(&[self.seed, tag::JITTER, id as u64, b.pec as u64]);
        let u = (b.hardness + (2.0 * w - 1.0) * j).clamp(0.0, 1.0);
        self.params.profile.required_quanta(u, b.pec)
    }

    /// Open a new erase operation on `id`.
    pub fn begin_erase(&mut self, id: u32) -> Result<()> {
        let need = self.required_quanta(id)?;
        let b = self.block_mut(id)?;
        if b.in_erase {
            return Err(Error::State(format!("block {id} is already being erased")));
        }
        b.in_erase = true;
        b.erased = false;
        b.consumed = 0;
        b.ladder_level = 0;
        b.verifies = 0;
        b.last_fail = None;
        b.target = need;
        b.erase_seq += 1;
        Ok(())
    }

    /// Apply an erase pulse of `duration` at ladder `level` (1-based). Stress scales by
    /// `scale` on top of the voltage weight.
    pub fn erase_pulse(&mut self, id: u32, duration: Nanos, level: u32, scale: f64) -> Result<PulseEffect> {
        let t = &self.params.timing;
        let d = t.quanta_of(duration)?;
        if level == 0 || level > t.max_loops + 1 {
            return Err(Error::Logic(format!("ladder level {level} out of range")));
        }
        let per = t.quanta_per_level;
        let weight = self.params.stress.voltage_weight(level) * scale;
        let q_ms = t.quantum as f64 / crate::units::NS_PER_MS as f64;
        let sp = self.params.stress.clone();
        let b = self.block_mut(id)?;
        if !b.in_erase {
            return Err(Error::State(format!("block {id} has no erase in progress")));
        }
        let credited = d.min((per * level).min(b.target).saturating_sub(b.consumed));
        let done = b.consumed + credited >= b.target;
        let mut depth_sum = 0.0;
        for i in 0..d {
            // Credited quanta sit at their ledger position; the rest either over-erase
            // a finished block or stall at the level boundary.
            let pos = if i < credited {
                b.consumed + i + 1
            } else if done {
                b.target + 1 + (i - credited)
            } else {
                b.consumed + credited + 1
            };
            depth_sum += sp.depth_weight(pos as f64 - b.target as f64);
        }
        b.consumed += credited;
        b.ladder_level = b.ladder_level.max(level);
        let stress = q_ms * weight * depth_sum;
        b.stress += stress;
        Ok(PulseEffect { credited, stress })
    }

    /// Start the erase directly at `level`: the stronger voltage covers every quantum
    /// belonging to the levels below it.
    pub fn skip_lower_levels(&mut self, id: u32, level: u32) -> Result<()> {
        let per = self.params.timing.quanta_per_level;
        let b = self.block_mut(id)?;
        if !b.in_erase {
            return Err(Error::State(format!("block {id} has no erase in progress")));
        }
        b.consumed = b.consumed.max((per * level.saturating_sub(1)).min(b.target));
        Ok(())
    }

    /// Make the erase in progress need `quanta` more than the profile says.
    pub fn add_outlier_quanta(&mut self, id: u32, quanta: u32) -> Result<()> {
        let b = self.block_mut(id)?;
        if !b.in_erase {
            return Err(Error::State(format!("block {id} has no erase in progress")));
        }
        b.target += quanta;
        Ok(())
    }

    /// Quanta still missing for the erase in progress.
    pub fn remaining(&self, id: u32) -> Result<u32> {
        let b = self.block(id)?;
        Ok(b.target.saturating_sub(b.consumed))
    }

    /// Count fail bits. Noise is a pure function of seed, block, erase and verify index.
    pub fn verify_read(&mut self, id: u32) -> Result<u32> {
        let fb = self.params.failbits.clone();
        let seed = self.seed;
        let b = self.block_mut(id)?;
        if !b.in_erase || b.ladder_level == 0 {
            return Err(Error::State(format!("verify on block {id} before any erase pulse")));
        }
        let r = fb.saturating_remaining(b.target.saturating_sub(b.consumed));
        let (lo, hi) = fb.range_for_remaining(r);
        let u = unit_f64(&[seed, tag::FAILBIT, id as u64, b.erase_seq, b.verifies as u64]);
        let width = (hi - lo) as f64;
        let x = lo as f64 + width * (fb.noise_fraction / 2.0 + u * (1.0 - fb.noise_fraction));
        let fail = (x.round() as u32).clamp(lo, hi);
        b.verifies += 1;
        b.last_fail = Some(fail);
        if r == 0 {
            b.erased = true;
        }
        Ok(fail)
    }

    /// Close the erase in progress. The block becomes programmable and ages by one cycle.
    /// Returns the deficit in quanta (zero for a complete erase).
    pub fn finish_erase(&mut self, id: u32) -> Result<u32> {
        let b = self.block_mut(id)?;
        if !b.in_erase {
            return Err(Error::State(format!("block {id} has no erase in progress")));
        }
        let deficit = b.target.saturating_sub(b.consumed);
        b.in_erase = false;
        b.erased = true;
        b.page_write_cursor = 0;
        b.pec += 1;
        Ok(deficit)
    }

    /// Program the next page. Pages must be written in order into an erased block.
    pub fn program_page(&mut self, id: u32, page: u32) -> Result<()> {
        let pages = self.params.geometry.pages_per_block;
        let per_page = self.params.stress.program_stress / pages as f64;
        let b = self.block_mut(id)?;
        if b.in_erase || !b.erased {
            return Err(Error::State(format!("block {id} is not erased")));
        }
        if page != b.page_write_cursor || page >= pages {
            return Err(Error::State(format!(
                "block {id}: page {page} out of order (next is {})",
                b.page_write_cursor
            )));
        }
        b.page_write_cursor += 1;
        b.stress += per_page;
        Ok(())
    }

    /// Program every remaining page of the block.
    pub fn program_block(&mut self, id: u32) -> Result<()> {
        let pages = self.params.geometry.pages_per_block;
        let stress = self.params.stress.program_stress;
        let b = self.block_mut(id)?;
        if b.in_erase || !b.erased {
            return Err(Error::State(format!("block {id} is not erased")));
        }
        let left = pages - b.page_write_cursor;
        b.stress += stress * left as f64 / pages as f64;
        b.page_write_cursor = pages;
        Ok(())
    }

    /// Worst-page raw bit errors of the block given the deficit left by its last erase.
    pub fn rber_of(&self, id: u32, deficit: u32, loops: u32) -> Result<f64> {
        let b = self.block(id)?;
        Ok(self.params.rber.rber(b.stress, deficit, loops))
    }

    /// Configure the width of the next pulse issued with [`Self::configured_pulse`].
    pub fn set_feature_next_tep(&mut self, chip: u32, duration: Nanos) -> Result<()> {
        self.params.timing.quanta_of(duration)?;
        if duration == 0 || duration > self.params.timing.t_ep_default {
            return Err(Error::Logic(format!("pulse width {duration} ns out of range")));
        }
        let slot = self.next_tep.get_mut(chip as usize).ok_or(Error::Addressing(format!("chip {chip}")))?;
        *slot = Some(duration);
        Ok(())
    }

    /// Fail-bit count of the block's most recent verify.
    pub fn get_feature_last_fail(&self, id: u32) -> Result<u32> {
        self.block(id)?
            .last_fail
            .ok_or_else(|| Error::State(format!("block {id} has not been verified")))
    }

    /// Pulse using the configured width (default width when none is set). The setting
    /// is consumed.
    pub fn configured_pulse(&mut self, id: u32, level: u32, scale: f64) -> Result<(Nanos, PulseEffect)> {
        let chip = self.params.geometry.chip_of(id) as usize;
        let dur = self
            .next_tep
            .get_mut(chip)
            .ok_or(Error::Addressing(format!("block {id}")))?
            .take()
            .unwrap_or(self.params.timing.t_ep_default);
        let eff = self.erase_pulse(id, dur, level, scale)?;
        Ok((dur, eff))
    }

    /// Overwrite the aging state (used to fast-forward blocks).
    pub fn set_wear(&mut self, id: u32, pec: u32, stress: f64) -> Result<()> {
        let b = self.block_mut(id)?;
        b.pec = pec;
        b.stress = stress;
        Ok(())
    }
}

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::chip::ChipModel;
use crate::error::{Error, Result};
use crate::rng::{tag, unit_f64};
use crate::units::Nanos;

use super::ept::{EraseTimingTable, Mode};
use super::outcome::{EraseOutcome, LoopRecord};
use super::sef::SefBitmap;

/// Erase algorithm driving the chip.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Baseline,
    #[serde(rename = "m-ispe")]
    MIspe,
    #[serde(rename = "i-ispe")]
    IIspe,
    Dpes,
    AeroCons,
    Aero,
}

impl Scheme {
    pub const ALL: [Scheme; 6] =
        [Scheme::Baseline, Scheme::MIspe, Scheme::IIspe, Scheme::Dpes, Scheme::AeroCons, Scheme::Aero];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Baseline => "baseline",
            Scheme::MIspe => "m-ispe",
            Scheme::IIspe => "i-ispe",
            Scheme::Dpes => "dpes",
            Scheme::AeroCons => "aero-cons",
            Scheme::Aero => "aero",
        }
    }

    pub fn is_aero(self) -> bool {
        matches!(self, Scheme::AeroCons | Scheme::Aero)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown erase scheme `{s}`")))
    }
}

/// Program latency under a scheme at a given wear level.
pub fn program_latency(scheme: Scheme, chip: &ChipModel, pec: u32) -> Nanos {
    let t = &chip.params().timing;
    match scheme {
        Scheme::Dpes if pec <= 1500 => t.t_prog_dpes_early,
        Scheme::Dpes if pec <= 3000 => t.t_prog_dpes_late,
        _ => t.t_prog,
    }
}

fn pulse_verify(
    chip: &mut ChipModel,
    block: u32,
    dur: Nanos,
    level: u32,
    scale: f64,
    out: &mut EraseOutcome,
    retry: bool,
) -> Result<u32> {
    let eff = chip.erase_pulse(block, dur, level, scale)?;
    let fail = chip.verify_read(block)?;
    let t_vr = chip.params().timing.t_vr;
    out.push(LoopRecord { level, pulse: dur, fail_count: fail, retry }, t_vr, eff.stress);
    Ok(fail)
}

fn close(chip: &mut ChipModel, block: u32, mut out: EraseOutcome, completed: bool) -> Result<EraseOutcome> {
    out.deficit_quanta = chip.finish_erase(block)?;
    out.completed = completed;
    Ok(out)
}

/// Full-width loops starting at `start`, one ladder level per loop.
fn full_loops(chip: &mut ChipModel, block: u32, start: u32, scale: f64, retry_scale: f64) -> Result<(EraseOutcome, u32)> {
    let t = chip.params().timing.clone();
    let f_pass = chip.params().failbits.f_pass;
    chip.begin_erase(block)?;
    if start > 1 {
        chip.skip_lower_levels(block, start)?;
    }
    let mut out = EraseOutcome::new(block);
    let mut level = start;
    let mut s = scale;
    loop {
        let fail = pulse_verify(chip, block, t.t_ep_default, level, s, &mut out, false)?;
        if fail <= f_pass {
            return Ok((close(chip, block, out, true)?, level));
        }
        if level >= t.max_loops {
            return Ok((close(chip, block, out, false)?, level));
        }
        level += 1;
        s = retry_scale;
    }
}

/// Conventional ISPE: full default pulses at rising voltage until the block passes.
pub fn erase_baseline(chip: &mut ChipModel, block: u32) -> Result<EraseOutcome> {
    Ok(full_loops(chip, block, 1, 1.0, 1.0)?.0)
}

/// Reduced erase voltage while the block is young, conventional afterwards.
pub fn erase_dpes(chip: &mut ChipModel, block: u32) -> Result<EraseOutcome> {
    let pec = chip.block(block)?.pec;
    let s = if pec <= 3000 { chip.params().stress.dpes_weight_scale } else { 1.0 };
    Ok(full_loops(chip, block, 1, s, s)?.0)
}

/// Per block: the loop that finished the last erase, and whether a skipped-loop
/// erase has ever failed on it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IispeHistory {
    n_last: Vec<u32>,
    damaged: Vec<bool>,
}

impl IispeHistory {
    pub fn new(blocks: u32) -> Self {
        IispeHistory { n_last: vec![1; blocks as usize], damaged: vec![false; blocks as usize] }
    }

    pub fn get(&self, block: u32) -> u32 {
        self.n_last[block as usize]
    }

    pub fn damaged(&self, block: u32) -> bool {
        self.damaged[block as usize]
    }
}

/// Start directly at the loop that finished the previous erase. Once a block has
/// failed such a skipped-loop erase, every later pulse on it carries the extra
/// stress multiplier.
pub fn erase_iispe(chip: &mut ChipModel, block: u32, history: &mut IispeHistory) -> Result<EraseOutcome> {
    let start = history.get(block);
    let beta = chip.params().stress.iispe_beta;
    let idx = block as usize;
    let first = if history.damaged[idx] { beta } else { 1.0 };
    let retry = if start > 1 { beta } else { first };
    let (out, level) = full_loops(chip, block, start, first, retry)?;
    if start > 1 && level > start {
        history.damaged[idx] = true;
    }
    if out.completed {
        history.n_last[idx] = level;
    }
    Ok(out)
}

/// Result of a fine-grained characterization erase.
#[derive(Clone, Debug, PartialEq)]
pub struct MIspeResult {
    /// Number of single-quantum loops needed.
    pub n: u32,
    pub est_loops: u32,
    pub est_final_pulse: Nanos,
    pub outcome: EraseOutcome,
}

/// Loop count and final-loop pulse a conventional erase would need, from a quantum count.
pub fn estimate_from_quanta(n: u32, quanta_per_level: u32, quantum: Nanos) -> (u32, Nanos) {
    let loops = n.div_ceil(quanta_per_level);
    let last = quantum * (1 + (n.max(1) - 1) % quanta_per_level) as Nanos;
    (loops, last)
}

/// One quantum per loop, raising the voltage every `quanta_per_level` loops.
pub fn erase_m_ispe(chip: &mut ChipModel, block: u32) -> Result<MIspeResult> {
    let t = chip.params().timing.clone();
    let f_pass = chip.params().failbits.f_pass;
    chip.begin_erase(block)?;
    let mut out = EraseOutcome::new(block);
    for k in 0..t.max_quanta() {
        let level = 1 + k / t.quanta_per_level;
        let fail = pulse_verify(chip, block, t.quantum, level, 1.0, &mut out, false)?;
        if fail <= f_pass {
            let n = k + 1;
            let (est_loops, est_final_pulse) = estimate_from_quanta(n, t.quanta_per_level, t.quantum);
            let outcome = close(chip, block, out, true)?;
            return Ok(MIspeResult { n, est_loops, est_final_pulse, outcome });
        }
    }
    let outcome = close(chip, block, out, false)?;
    Ok(MIspeResult { n: t.max_quanta() + 1, est_loops: t.max_loops + 1, est_final_pulse: 0, outcome })
}

/// Decides which predicted-final pulses fall one quantum short.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mispredictor {
    pub rate: f64,
    pub seed: u64,
}

impl Mispredictor {
    pub fn none() -> Self {
        Mispredictor { rate: 0.0, seed: 0 }
    }

    fn strikes(&self, block: u32, erase_seq: u64, idx: u32) -> bool {
        self.rate > 0.0 && unit_f64(&[self.seed, tag::MISPREDICT, block as u64, erase_seq, idx as u64]) < self.rate
    }
}

struct Plan {
    quanta: u32,
    predicted: bool,
    /// Quanta the pulse is meant to leave unerased.
    expected: u32,
}

fn plan(chip: &ChipModel, ept: &EraseTimingTable, row: u32, fail: u32, mode: Mode, cap: u32) -> Result<Plan> {
    let fb = &chip.params().failbits;
    if fail > fb.f_high {
        return Ok(Plan { quanta: cap, predicted: false, expected: 0 });
    }
    let b = fb.bucket_of(fail);
    let cell = ept.lookup(row, fail, mode, fb)?;
    let cons = ept.cell(row, b, Mode::Conservative);
    // Bucket b means b + 1 quanta remain; the pulse is final if they fit the level.
    let predicted = cell > 0 && b < cap;
    let expected = if predicted { cons - cell } else { 0 };
    Ok(Plan { quanta: cell, predicted, expected })
}

enum Step {
    Done(bool),
    Continue(u32),
}

#[allow(clippy::too_many_arguments)]
fn run_plan(
    chip: &mut ChipModel,
    block: u32,
    p: &Plan,
    level: u32,
    out: &mut EraseOutcome,
    misp: &Mispredictor,
) -> Result<Step> {
    let t = chip.params().timing.clone();
    let chip_idx = chip.params().geometry.chip_of(block);
    chip.set_feature_next_tep(chip_idx, t.duration_of(p.quanta))?;
    let (dur, eff) = chip.configured_pulse(block, level, 1.0)?;
    if p.predicted {
        let seq = chip.block(block)?.erase_seq;
        if misp.strikes(block, seq, out.predictions) {
            chip.add_outlier_quanta(block, 1)?;
        }
        out.predictions += 1;
    }
    let fail = chip.verify_read(block)?;
    out.push(LoopRecord { level, pulse: dur, fail_count: fail, retry: false }, t.t_vr, eff.stress);
    if fail <= chip.params().failbits.ceiling_for_remaining(p.expected) {
        return Ok(Step::Done(true));
    }
    if p.predicted {
        return Ok(Step::Done(handle_misprediction(chip, block, out, level, p.expected)?));
    }
    Ok(Step::Continue(fail))
}

/// Extra single-quantum pulses after a pulse that should have finished the erase did
/// not. Returns whether the erase finished within the ladder.
pub fn handle_misprediction(
    chip: &mut ChipModel,
    block: u32,
    out: &mut EraseOutcome,
    mut level: u32,
    expected: u32,
) -> Result<bool> {
    let t = chip.params().timing.clone();
    let thr = chip.params().failbits.ceiling_for_remaining(expected);
    let mut fail = out.final_fail().ok_or_else(|| Error::Logic("misprediction before any verify".into()))?;
    if fail <= thr {
        return Err(Error::Logic(format!("block {block} is not short of its prediction")));
    }
    while fail > thr {
        if out.total_latency >= t.default_tbers(level) {
            level += 1;
            if level > t.max_loops {
                return Ok(false);
            }
        }
        fail = pulse_verify(chip, block, t.quantum, level, 1.0, out, true)?;
        out.mispredictions += 1;
    }
    Ok(true)
}

/// Adaptive erase: shallow first pulse, then table-driven pulse widths per loop.
pub fn erase_aero(
    chip: &mut ChipModel,
    block: u32,
    sef: &mut SefBitmap,
    ept: &EraseTimingTable,
    mode: Mode,
    misp: &Mispredictor,
) -> Result<EraseOutcome> {
    let t = chip.params().timing.clone();
    let f_pass = chip.params().failbits.f_pass;
    let chip_idx = chip.params().geometry.chip_of(block);
    chip.begin_erase(block)?;
    let mut out = EraseOutcome::new(block);

    let mut fail;
    if sef.shallow(block) {
        out.shallow = true;
        chip.set_feature_next_tep(chip_idx, t.t_se)?;
        let (dur, eff) = chip.configured_pulse(block, 1, 1.0)?;
        fail = chip.verify_read(block)?;
        out.push(LoopRecord { level: 1, pulse: dur, fail_count: fail, retry: false }, t.t_vr, eff.stress);
        if fail <= f_pass {
            return close(chip, block, out, true);
        }
        let cap = t.quanta_per_level - t.se_quanta();
        let p = plan(chip, ept, 1, fail, mode, cap)?;
        if p.quanta == 0 {
            return close(chip, block, out, true);
        }
        if t.se_quanta() + p.quanta >= t.quanta_per_level {
            sef.disable(block);
        }
        match run_plan(chip, block, &p, 1, &mut out, misp)? {
            Step::Done(ok) => return close(chip, block, out, ok),
            Step::Continue(f) => fail = f,
        }
    } else {
        let (dur, eff) = chip.configured_pulse(block, 1, 1.0)?;
        fail = chip.verify_read(block)?;
        out.push(LoopRecord { level: 1, pulse: dur, fail_count: fail, retry: false }, t.t_vr, eff.stress);
        if fail <= f_pass {
            return close(chip, block, out, true);
        }
    }

    let mut level = 1;
    loop {
        if level >= t.max_loops {
            return close(chip, block, out, false);
        }
        level += 1;
        let p = plan(chip, ept, level, fail, mode, t.quanta_per_level)?;
        if p.quanta == 0 {
            return close(chip, block, out, true);
        }
        match run_plan(chip, block, &p, level, &mut out, misp)? {
            Step::Done(ok) => return close(chip, block, out, ok),
            Step::Continue(f) => fail = f,
        }
    }
}

/// Result of erasing several blocks on different planes of one chip at once.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiPlaneOutcome {
    pub per_block: Vec<EraseOutcome>,
    pub latency: Nanos,
}

/// Erase blocks on distinct planes together. Each block follows its own pulse
/// sequence and is inhibited once erased; the slowest block sets the latency.
pub fn multi_plane_erase<F>(chip: &mut ChipModel, blocks: &[u32], mut erase_one: F) -> Result<MultiPlaneOutcome>
where
    F: FnMut(&mut ChipModel, u32) -> Result<EraseOutcome>,
{
    let g = chip.params().geometry.clone();
    let Some(&first) = blocks.first() else {
        return Err(Error::Addressing("multi-plane erase of no blocks".into()));
    };
    let mut planes = Vec::with_capacity(blocks.len());
    for &b in blocks {
        if b >= g.blocks() || g.chip_of(b) != g.chip_of(first) {
            return Err(Error::Addressing(format!("block {b} is not on the chip of block {first}")));
        }
        let p = g.plane_of(b);
        if planes.contains(&p) {
            return Err(Error::Addressing(format!("two blocks on plane {p}")));
        }
        planes.push(p);
    }
    let mut per_block = Vec::with_capacity(blocks.len());
    for &b in blocks {
        per_block.push(erase_one(chip, b)?);
    }
    let latency = per_block.iter().map(|o| o.total_latency).max().unwrap_or(0);
    Ok(MultiPlaneOutcome { per_block, latency })
}

/// A scheme together with the state it carries between erases.
#[derive(Clone, Debug)]
pub struct EraseEngine {
    scheme: Scheme,
    ept: EraseTimingTable,
    sef: SefBitmap,
    history: IispeHistory,
    misp: Mispredictor,
}

impl EraseEngine {
    pub fn new(scheme: Scheme, blocks: u32, ept: EraseTimingTable, misp: Mispredictor) -> Self {
        EraseEngine { scheme, ept, sef: SefBitmap::new(blocks), history: IispeHistory::new(blocks), misp }
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn sef(&self) -> &SefBitmap {
        &self.sef
    }

    pub fn ept(&self) -> &EraseTimingTable {
        &self.ept
    }

    pub fn erase(&mut self, chip: &mut ChipModel, block: u32) -> Result<EraseOutcome> {
        match self.scheme {
            Scheme::Baseline => erase_baseline(chip, block),
            Scheme::MIspe => Ok(erase_m_ispe(chip, block)?.outcome),
            Scheme::IIspe => erase_iispe(chip, block, &mut self.history),
            Scheme::Dpes => erase_dpes(chip, block),
            Scheme::AeroCons => erase_aero(chip, block, &mut self.sef, &self.ept, Mode::Conservative, &self.misp),
            Scheme::Aero => erase_aero(chip, block, &mut self.sef, &self.ept, Mode::Aggressive, &self.misp),
        }
    }

    pub fn erase_multi(&mut self, chip: &mut ChipModel, blocks: &[u32]) -> Result<MultiPlaneOutcome> {
        multi_plane_erase(chip, blocks, |c, b| self.erase(c, b))
    }
}

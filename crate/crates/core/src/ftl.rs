//! Page-mapped flash translation layer with greedy garbage collection.
//!
//! All flash state changes happen here, at the moment a command is issued. The
//! returned [`FlashCommand`]s carry only what the datapath simulator needs for
//! timing.

use std::collections::{BTreeMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chip::{ChipModel, Geometry};
use crate::erase::{program_latency, EraseEngine, EraseOutcome};
use crate::error::{Error, Result};
use crate::units::Nanos;

const UNMAPPED: u32 = u32::MAX;

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct GcConfig {
    /// GC runs in a plane while its free pool is below this share of its blocks.
    pub gc_trigger_free_ratio: f64,
    /// Lower bound on the per-plane trigger, in blocks.
    pub min_free_blocks: u32,
    pub overprovisioning: f64,
}

impl Default for GcConfig {
    fn default() -> Self {
        GcConfig { gc_trigger_free_ratio: 0.05, min_free_blocks: 2, overprovisioning: 0.20 }
    }
}

impl GcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.overprovisioning > 0.0 && self.overprovisioning < 1.0) {
            return Err(Error::Config(format!("overprovisioning {} outside (0, 1)", self.overprovisioning)));
        }
        if !(self.gc_trigger_free_ratio > 0.0 && self.gc_trigger_free_ratio < self.overprovisioning) {
            return Err(Error::Config(format!(
                "gc trigger {} must lie in (0, overprovisioning)",
                self.gc_trigger_free_ratio
            )));
        }
        // one block must stay free for migration when collection starts
        if self.min_free_blocks < 2 {
            return Err(Error::Config("min_free_blocks must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Serialize, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum BlockStatus {
    Free,
    Active,
    Full,
    Retired,
}

#[derive(Clone, Debug, PartialEq)]
pub enum FlashOp {
    Read,
    Program,
    Erase(Box<EraseOutcome>),
}

/// One flash operation for the datapath, with its array-busy time.
#[derive(Clone, Debug, PartialEq)]
pub struct FlashCommand {
    pub op: FlashOp,
    pub block: u32,
    pub page: u32,
    /// Issued on behalf of a host request (false for GC traffic).
    pub user: bool,
    pub duration: Nanos,
}

#[derive(Serialize, Clone, Debug, Default, PartialEq)]
pub struct FtlStats {
    pub host_pages_written: u64,
    pub flash_pages_written: u64,
    pub host_pages_read: u64,
    pub unmapped_reads: u64,
    pub gc_runs: u64,
    pub migrated_pages: u64,
    pub erases: u64,
    pub retired_blocks: u64,
    pub erase_time_ns: u64,
}

/// JSON-facing snapshot.
#[derive(Serialize, Clone, Debug, PartialEq)]
pub struct FtlSnapshot {
    pub write_amplification: f64,
    pub gc_runs: u64,
    pub erases: u64,
    pub migrated_pages: u64,
    pub retired_blocks: u64,
    pub unmapped_reads: u64,
    /// Block count per PEC, binned by 100 cycles.
    pub pec_histogram: BTreeMap<u32, u32>,
    /// Blocks whose shallow-erasure flag is still clear.
    pub sef_shallow_blocks: u32,
    pub sef_bytes: usize,
}

/// Block with the fewest valid pages among `(block, valid)` pairs, lowest id on ties.
pub fn greedy_victim(candidates: impl IntoIterator<Item = (u32, u32)>) -> Option<u32> {
    candidates.into_iter().min_by_key(|&(b, v)| (v, b)).map(|(b, _)| b)
}

pub struct Ftl {
    geo: Geometry,
    cfg: GcConfig,
    chip: ChipModel,
    engine: EraseEngine,
    l2p: Vec<u32>,
    p2l: Vec<u32>,
    valid: Vec<u32>,
    status: Vec<BlockStatus>,
    cursor: Vec<u32>,
    free: Vec<VecDeque<u32>>,
    active: Vec<Option<u32>>,
    next_plane: u32,
    logical_pages: u32,
    stats: FtlStats,
}

impl Ftl {
    pub fn new(chip: ChipModel, engine: EraseEngine, cfg: GcConfig) -> Result<Self> {
        cfg.validate()?;
        let geo = chip.params().geometry.clone();
        let pages = geo.pages();
        if pages >= UNMAPPED as u64 {
            return Err(Error::Config("geometry too large for 32-bit page addresses".into()));
        }
        let logical_pages = (pages as f64 * (1.0 - cfg.overprovisioning)).floor() as u32;
        let nblocks = geo.blocks() as usize;
        let free = (0..geo.planes())
            .map(|p| {
                let first = geo.first_block_of_plane(p);
                (first..first + geo.blocks_per_plane).collect()
            })
            .collect();
        Ok(Ftl {
            active: vec![None; geo.planes() as usize],
            geo,
            cfg,
            chip,
            engine,
            l2p: vec![UNMAPPED; logical_pages as usize],
            p2l: vec![UNMAPPED; pages as usize],
            valid: vec![0; nblocks],
            status: vec![BlockStatus::Free; nblocks],
            cursor: vec![0; nblocks],
            free,
            next_plane: 0,
            logical_pages,
            stats: FtlStats::default(),
        })
    }

    pub fn logical_pages(&self) -> u32 {
        self.logical_pages
    }

    pub fn logical_capacity(&self) -> u64 {
        self.logical_pages as u64 * self.geo.page_size as u64
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geo
    }

    pub fn chip(&self) -> &ChipModel {
        &self.chip
    }

    pub fn engine(&self) -> &EraseEngine {
        &self.engine
    }

    pub fn stats(&self) -> &FtlStats {
        &self.stats
    }

    pub fn reset_stats(&mut self) {
        self.stats = FtlStats::default();
    }

    pub fn status(&self, block: u32) -> BlockStatus {
        self.status[block as usize]
    }

    pub fn valid_count(&self, block: u32) -> u32 {
        self.valid[block as usize]
    }

    pub fn free_blocks(&self, plane: u32) -> usize {
        self.free[plane as usize].len()
    }

    pub fn lookup(&self, lpn: u32) -> Option<u32> {
        self.l2p.get(lpn as usize).copied().filter(|&p| p != UNMAPPED)
    }

    fn ppn(&self, block: u32, page: u32) -> u32 {
        block * self.geo.pages_per_block + page
    }

    fn trigger(&self) -> usize {
        let r = (self.cfg.gc_trigger_free_ratio * self.geo.blocks_per_plane as f64).ceil() as usize;
        r.max(self.cfg.min_free_blocks as usize)
    }

    fn check_lpn(&self, lpn: u32) -> Result<()> {
        if lpn >= self.logical_pages {
            return Err(Error::Request(format!("lpn {lpn} beyond logical capacity {}", self.logical_pages)));
        }
        Ok(())
    }

    /// Next writable page in `plane`, opening a fresh block when needed.
    fn allocate(&mut self, plane: u32) -> Result<(u32, u32)> {
        let p = plane as usize;
        if let Some(b) = self.active[p] {
            if self.cursor[b as usize] < self.geo.pages_per_block {
                let page = self.cursor[b as usize];
                self.cursor[b as usize] += 1;
                if self.cursor[b as usize] == self.geo.pages_per_block {
                    self.status[b as usize] = BlockStatus::Full;
                    self.active[p] = None;
                }
                return Ok((b, page));
            }
        }
        let b = self.free[p]
            .pop_front()
            .ok_or_else(|| Error::CapacityExhausted(format!("plane {plane} has no free block")))?;
        self.status[b as usize] = BlockStatus::Active;
        self.cursor[b as usize] = 0;
        self.active[p] = Some(b);
        self.allocate(plane)
    }

    fn invalidate(&mut self, ppn: u32) {
        let block = ppn / self.geo.pages_per_block;
        self.p2l[ppn as usize] = UNMAPPED;
        self.valid[block as usize] -= 1;
    }

    /// Write one page of `lpn` into `plane` and emit its program command.
    fn place(&mut self, lpn: u32, plane: u32, user: bool, out: &mut Vec<FlashCommand>) -> Result<()> {
        let (block, page) = self.allocate(plane)?;
        self.chip.program_page(block, page)?;
        let old = self.l2p[lpn as usize];
        if old != UNMAPPED {
            self.invalidate(old);
        }
        let ppn = self.ppn(block, page);
        self.l2p[lpn as usize] = ppn;
        self.p2l[ppn as usize] = lpn;
        self.valid[block as usize] += 1;
        self.stats.flash_pages_written += 1;
        let pec = self.chip.block(block)?.pec;
        let duration = program_latency(self.engine.scheme(), &self.chip, pec);
        out.push(FlashCommand { op: FlashOp::Program, block, page, user, duration });
        Ok(())
    }

    /// Out-of-place write of one logical page. Garbage collection follows if the
    /// write left the plane short of free blocks.
    pub fn host_write(&mut self, lpn: u32) -> Result<Vec<FlashCommand>> {
        self.check_lpn(lpn)?;
        let plane = self.next_plane;
        self.next_plane = (self.next_plane + 1) % self.geo.planes();
        let mut out = Vec::new();
        self.place(lpn, plane, true, &mut out)?;
        self.stats.host_pages_written += 1;
        self.collect(plane, &mut out)?;
        Ok(out)
    }

    /// Read command for a mapped page; `None` for an unmapped (zero-fill) page.
    pub fn host_read(&mut self, lpn: u32) -> Result<Option<FlashCommand>> {
        self.check_lpn(lpn)?;
        self.stats.host_pages_read += 1;
        match self.lookup(lpn) {
            None => {
                self.stats.unmapped_reads += 1;
                Ok(None)
            }
            Some(ppn) => Ok(Some(FlashCommand {
                op: FlashOp::Read,
                block: ppn / self.geo.pages_per_block,
                page: ppn % self.geo.pages_per_block,
                user: true,
                duration: self.chip.params().timing.t_r,
            })),
        }
    }

    /// Full block with the fewest valid pages, lowest id on ties.
    pub fn pick_gc_victim(&self) -> Option<u32> {
        greedy_victim(self.full_blocks(0..self.geo.blocks()))
    }

    fn victim_in(&self, plane: u32) -> Option<u32> {
        let first = self.geo.first_block_of_plane(plane);
        greedy_victim(self.full_blocks(first..first + self.geo.blocks_per_plane))
    }

    fn full_blocks(&self, range: std::ops::Range<u32>) -> impl Iterator<Item = (u32, u32)> + '_ {
        range.filter(|&b| self.status[b as usize] == BlockStatus::Full).map(|b| (b, self.valid[b as usize]))
    }

    fn collect(&mut self, plane: u32, out: &mut Vec<FlashCommand>) -> Result<()> {
        let trigger = self.trigger();
        while self.free[plane as usize].len() < trigger {
            let Some(victim) = self.victim_in(plane) else { break };
            // Migrating a fully valid block frees nothing; stop unless the pool is dry.
            if self.valid[victim as usize] == self.geo.pages_per_block && !self.free[plane as usize].is_empty() {
                break;
            }
            self.reclaim(victim, out)?;
        }
        Ok(())
    }

    /// Migrate the victim's valid pages within its plane, then erase it.
    fn reclaim(&mut self, victim: u32, out: &mut Vec<FlashCommand>) -> Result<()> {
        let plane = self.geo.plane_of(victim);
        self.stats.gc_runs += 1;
        let t_r = self.chip.params().timing.t_r;
        for page in 0..self.geo.pages_per_block {
            let ppn = self.ppn(victim, page);
            let lpn = self.p2l[ppn as usize];
            if lpn == UNMAPPED {
                continue;
            }
            out.push(FlashCommand { op: FlashOp::Read, block: victim, page, user: false, duration: t_r });
            self.place(lpn, plane, false, out)?;
            self.stats.migrated_pages += 1;
        }
        debug_assert_eq!(self.valid[victim as usize], 0);
        let outcome = self.erase(victim)?;
        out.push(FlashCommand {
            op: FlashOp::Erase(Box::new(outcome.clone())),
            block: victim,
            page: 0,
            user: false,
            duration: outcome.total_latency,
        });
        Ok(())
    }

    fn erase(&mut self, block: u32) -> Result<EraseOutcome> {
        let outcome = self.engine.erase(&mut self.chip, block)?;
        self.stats.erases += 1;
        self.stats.erase_time_ns += outcome.total_latency;
        self.cursor[block as usize] = 0;
        if outcome.completed {
            self.status[block as usize] = BlockStatus::Free;
            self.free[self.geo.plane_of(block) as usize].push_back(block);
        } else {
            self.status[block as usize] = BlockStatus::Retired;
            self.stats.retired_blocks += 1;
        }
        Ok(outcome)
    }

    /// Age every block to `target_pec` and fill `utilization` of the physical pages.
    ///
    /// Aging runs the scheme's erase once every `stride` cycles, at the middle of the
    /// window, and charges the resulting stress `stride` times, so `stride == 1` is an
    /// exact replay.
    pub fn precondition(&mut self, utilization: f64, target_pec: u32, stride: u32) -> Result<()> {
        if !(0.0..=1.0 - self.cfg.overprovisioning + 1e-12).contains(&utilization) {
            return Err(Error::Config(format!(
                "utilization {utilization} exceeds the {} left by overprovisioning",
                1.0 - self.cfg.overprovisioning
            )));
        }
        if stride == 0 {
            return Err(Error::Config("fast-forward stride must be positive".into()));
        }
        if self.stats.host_pages_written > 0 || self.l2p.iter().any(|&p| p != UNMAPPED) {
            return Err(Error::State("precondition requires a fresh drive".into()));
        }
        for b in 0..self.geo.blocks() {
            self.fast_forward(b, target_pec, stride)?;
        }
        let fill = ((utilization * self.geo.pages() as f64).round() as u32).min(self.logical_pages);
        for lpn in 0..fill {
            self.host_write(lpn)?;
        }
        self.reset_stats();
        Ok(())
    }

    /// Untimed random overwrites of the mapped range, to bring GC into steady state.
    pub fn warm_up(&mut self, pages: u64, seed: u64) -> Result<()> {
        let live = self.l2p.iter().take_while(|&&p| p != UNMAPPED).count() as u32;
        if live == 0 {
            return Ok(());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..pages {
            self.host_write(rng.gen_range(0..live))?;
        }
        self.reset_stats();
        Ok(())
    }

    fn fast_forward(&mut self, b: u32, target: u32, stride: u32) -> Result<()> {
        while self.status[b as usize] != BlockStatus::Retired {
            let before = self.chip.block(b)?.clone();
            if before.pec >= target {
                break;
            }
            let step = stride.min(target - before.pec);
            // sample the cycle in the middle of the window, where its cost is closest to the average
            if step > 1 {
                self.chip.set_wear(b, before.pec + step / 2, before.stress)?;
            }
            self.chip.program_block(b)?;
            let outcome = self.engine.erase(&mut self.chip, b)?;
            if !outcome.completed {
                self.status[b as usize] = BlockStatus::Retired;
                self.free[self.geo.plane_of(b) as usize].retain(|&x| x != b);
                self.stats.retired_blocks += 1;
            }
            if step > 1 {
                let gained = self.chip.block(b)?.stress - before.stress;
                self.chip.set_wear(b, before.pec + step, before.stress + gained * step as f64)?;
            }
        }
        Ok(())
    }

    /// Number of valid physical pages, which must equal the number of live logical pages.
    pub fn valid_pages(&self) -> u64 {
        self.valid.iter().map(|&v| v as u64).sum()
    }

    pub fn live_lpns(&self) -> u64 {
        self.l2p.iter().filter(|&&p| p != UNMAPPED).count() as u64
    }

    /// Recount valid pages from the reverse map; `None` if any block disagrees.
    pub fn check_consistency(&self) -> Option<u64> {
        let ppb = self.geo.pages_per_block as usize;
        for (b, &v) in self.valid.iter().enumerate() {
            let pop = self.p2l[b * ppb..(b + 1) * ppb].iter().filter(|&&l| l != UNMAPPED).count();
            if pop as u32 != v {
                return None;
            }
        }
        for (lpn, &ppn) in self.l2p.iter().enumerate() {
            if ppn != UNMAPPED && self.p2l[ppn as usize] != lpn as u32 {
                return None;
            }
        }
        Some(self.valid_pages())
    }

    pub fn snapshot(&self) -> FtlSnapshot {
        let mut pec_histogram = BTreeMap::new();
        for b in self.chip.blocks() {
            *pec_histogram.entry(b.pec / 100 * 100).or_insert(0) += 1;
        }
        let s = &self.stats;
        FtlSnapshot {
            write_amplification: if s.host_pages_written == 0 {
                0.0
            } else {
                s.flash_pages_written as f64 / s.host_pages_written as f64
            },
            gc_runs: s.gc_runs,
            erases: s.erases,
            migrated_pages: s.migrated_pages,
            retired_blocks: s.retired_blocks,
            unmapped_reads: s.unmapped_reads,
            pec_histogram,
            sef_shallow_blocks: self.geo.blocks() - self.engine.sef().disabled_count(),
            sef_bytes: self.engine.sef().as_bytes().len(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chip::ChipParams;
    use crate::erase::{EraseTimingTable, Mispredictor, Scheme};

    /// One plane of four 4-page blocks.
    fn toy(scheme: Scheme) -> Ftl {
        let mut p = ChipParams::shipped();
        p.geometry = Geometry {
            channels: 1,
            chips_per_channel: 1,
            planes_per_chip: 1,
            blocks_per_plane: 4,
            pages_per_block: 4,
            page_size: 4096,
        };
        let chip = ChipModel::new(p, 5).unwrap();
        let engine = EraseEngine::new(scheme, 4, EraseTimingTable::shipped(), Mispredictor::none());
        let cfg = GcConfig { gc_trigger_free_ratio: 0.1, min_free_blocks: 2, overprovisioning: 0.25 };
        Ftl::new(chip, engine, cfg).unwrap()
    }

    #[test]
    fn first_write_and_overwrite() {
        let mut f = toy(Scheme::Baseline);
        let c = f.host_write(3).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].op, FlashOp::Program);
        let first = f.lookup(3).unwrap();
        f.host_write(3).unwrap();
        assert_ne!(f.lookup(3).unwrap(), first);
        assert_eq!(f.valid_pages(), 1);
        assert_eq!(f.check_consistency(), Some(1));
    }

    #[test]
    fn reads() {
        let mut f = toy(Scheme::Baseline);
        assert_eq!(f.host_read(0).unwrap(), None);
        f.host_write(0).unwrap();
        assert_eq!(f.host_read(0).unwrap().unwrap().op, FlashOp::Read);
        assert!(matches!(f.host_read(12), Err(Error::Request(_))));
    }

    #[test]
    fn greedy_gc_on_toy_layout() {
        // 12 logical pages over four 4-page blocks, two blocks kept free
        let mut f = toy(Scheme::Baseline);
        for lpn in 0..12 {
            assert_eq!(f.host_write(lpn).unwrap().len(), 1);
        }
        // blocks 0..2 full and fully valid: nothing worth collecting yet
        assert_eq!(f.free_blocks(0), 1);
        assert_eq!(f.stats().gc_runs, 0);
        // overwrite lands in block 3, emptying the pool; block 1 now has 3 valid pages
        let cmds = f.host_write(4).unwrap();
        let reads: Vec<_> = cmds.iter().filter(|c| c.op == FlashOp::Read).map(|c| (c.block, c.page)).collect();
        assert_eq!(reads, vec![(1, 1), (1, 2), (1, 3)]);
        let programs = cmds.iter().filter(|c| c.op == FlashOp::Program).count();
        assert_eq!(programs, 4);
        let erased: Vec<_> = cmds.iter().filter(|c| matches!(c.op, FlashOp::Erase(_))).map(|c| c.block).collect();
        assert_eq!(erased, vec![1]);
        assert!(!cmds[0].op.eq(&FlashOp::Read) && cmds[0].user);
        assert_eq!(f.status(1), BlockStatus::Free);
        assert_eq!(f.status(3), BlockStatus::Full);
        assert_eq!(f.stats().gc_runs, 1);
        assert_eq!(f.check_consistency(), Some(12));
    }

    #[test]
    fn victim_examples() {
        assert_eq!(greedy_victim([(0, 10), (1, 3), (2, 7)]), Some(1));
        assert_eq!(greedy_victim([(5, 3), (2, 3)]), Some(2));
        assert_eq!(greedy_victim([(0, 4), (1, 4)]), Some(0));
        assert_eq!(greedy_victim([]), None);
    }

    #[test]
    fn utilization_bound() {
        let mut f = toy(Scheme::Baseline);
        assert!(matches!(f.precondition(0.95, 0, 1), Err(Error::Config(_))));
        f.precondition(0.75, 0, 1).unwrap();
        assert_eq!(f.live_lpns(), 12);
        assert!(f.chip().blocks().iter().all(|b| b.stress == 0.0 || b.page_write_cursor > 0));
    }
}

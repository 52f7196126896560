//! Deterministic discrete-event model of the SSD datapath.
//!
//! Flash state changes happen in the FTL when a request is admitted; this module
//! only decides *when* each resulting command occupies its plane and channel.
//! Dies run one operation kind at a time across their planes; user commands are
//! dispatched ahead of internal ones, and an erase can be suspended at quantum
//! and verify boundaries so that waiting user reads go first.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::analytics::{LatencyStats, LatencySummary};
use crate::erase::EraseOutcome;
use crate::error::{Error, Result};
use crate::ftl::{FlashCommand, FlashOp, Ftl, FtlSnapshot};
use crate::units::{Nanos, NS_PER_SEC};
use crate::workload::{IoKind, IoRequest};

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub suspension: bool,
    /// Charged once per suspend/resume pair, when the erase resumes.
    pub suspend_overhead: Nanos,
    /// Host link, bytes per second.
    pub host_bandwidth: u64,
    /// Flash channel, bytes per second.
    pub channel_bandwidth: u64,
    /// Admitted-but-unfinished request cap; 0 means unlimited.
    pub max_outstanding: u32,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            suspension: true,
            suspend_overhead: 100_000,
            // PCIe 4.0 x4, nominal
            host_bandwidth: 8_000_000_000,
            channel_bandwidth: 1_200_000_000,
            max_outstanding: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.host_bandwidth == 0 || self.channel_bandwidth == 0 {
            return Err(Error::Config("bandwidths must be positive".into()));
        }
        Ok(())
    }
}

fn transfer_time(bytes: u64, bandwidth: u64) -> Nanos {
    ((bytes as u128 * NS_PER_SEC as u128).div_ceil(bandwidth as u128)) as Nanos
}

/// One erase loop as it was actually carried out by the datapath.
#[derive(Serialize, Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExecutedLoop {
    pub pulse: Nanos,
    pub level: u32,
    pub fail_count: u32,
}

#[derive(Serialize, Clone, Debug, PartialEq)]
pub struct ExecutedErase {
    pub block: u32,
    pub loops: Vec<ExecutedLoop>,
    pub suspensions: u32,
    pub start: Nanos,
    pub end: Nanos,
}

impl ExecutedErase {
    /// The (pulse, level, fail count) sequence an unsuspended run would produce.
    pub fn expected(outcome: &EraseOutcome) -> Vec<ExecutedLoop> {
        outcome
            .loops
            .iter()
            .map(|l| ExecutedLoop { pulse: l.pulse, level: l.level, fail_count: l.fail_count })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Segment {
    /// One quantum of loop `i`; `last` closes the pulse.
    Quantum { i: usize, dur: Nanos, last: bool },
    Verify { i: usize, dur: Nanos },
}

impl Segment {
    fn dur(self) -> Nanos {
        match self {
            Segment::Quantum { dur, .. } | Segment::Verify { dur, .. } => dur,
        }
    }
}

/// An erase broken into suspendable segments.
#[derive(Clone, Debug)]
pub struct EraseTimeline {
    outcome: EraseOutcome,
    segments: Vec<Segment>,
    next: usize,
    pulse_acc: Nanos,
    executed: Vec<ExecutedLoop>,
    pending_pulse: Option<(Nanos, u32)>,
    pub suspensions: u32,
}

impl EraseTimeline {
    pub fn new(outcome: EraseOutcome, quantum: Nanos, t_vr: Nanos) -> Self {
        let mut segments = Vec::new();
        for (i, l) in outcome.loops.iter().enumerate() {
            let q = if quantum > 0 && l.pulse % quantum == 0 { (l.pulse / quantum).max(1) } else { 1 };
            let dur = l.pulse / q;
            for k in 0..q {
                segments.push(Segment::Quantum { i, dur, last: k + 1 == q });
            }
            segments.push(Segment::Verify { i, dur: t_vr });
        }
        EraseTimeline {
            outcome,
            segments,
            next: 0,
            pulse_acc: 0,
            executed: Vec::new(),
            pending_pulse: None,
            suspensions: 0,
        }
    }

    pub fn outcome(&self) -> &EraseOutcome {
        &self.outcome
    }

    /// Duration of the next segment, or `None` when the erase is over.
    pub fn next_segment(&self) -> Option<Nanos> {
        self.segments.get(self.next).map(|s| s.dur())
    }

    /// Mark the next segment as carried out.
    pub fn complete_segment(&mut self) {
        let Some(&seg) = self.segments.get(self.next) else { return };
        self.next += 1;
        match seg {
            Segment::Quantum { i, dur, last } => {
                self.pulse_acc += dur;
                if last {
                    self.pending_pulse = Some((self.pulse_acc, self.outcome.loops[i].level));
                    self.pulse_acc = 0;
                }
            }
            Segment::Verify { i, .. } => {
                let (pulse, level) = self.pending_pulse.take().expect("verify follows a pulse");
                self.executed.push(ExecutedLoop { pulse, level, fail_count: self.outcome.loops[i].fail_count });
            }
        }
    }

    pub fn done(&self) -> bool {
        self.next >= self.segments.len()
    }

    pub fn executed(&self) -> &[ExecutedLoop] {
        &self.executed
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Class {
    Read,
    Program,
    Erase,
}

fn class_of(op: &FlashOp) -> Class {
    match op {
        FlashOp::Read => Class::Read,
        FlashOp::Program => Class::Program,
        FlashOp::Erase(_) => Class::Erase,
    }
}

#[derive(Clone, Debug)]
struct Pending {
    cmd: FlashCommand,
    req: Option<usize>,
    seq: u64,
    /// Erases of the target block issued before this command; a program waits for all of them.
    erases_before: u32,
}

#[derive(Debug)]
enum Active {
    Read(Pending),
    /// Waiting for or using the channel to move program data in.
    ProgramIn(Pending),
    Program(Pending),
    Erase,
}

impl Active {
    fn class(&self) -> Class {
        match self {
            Active::Read(_) => Class::Read,
            Active::ProgramIn(_) | Active::Program(_) => Class::Program,
            Active::Erase => Class::Erase,
        }
    }
}

struct RunningErase {
    timeline: EraseTimeline,
    start: Nanos,
    suspended: bool,
}

#[derive(Default)]
struct PlaneState {
    user: VecDeque<Pending>,
    internal: VecDeque<Pending>,
    active: Option<Active>,
    erase: Option<RunningErase>,
}

enum Xfer {
    ReadOut { req: Option<usize> },
    ProgramIn { plane: usize },
}

#[derive(Default)]
struct ChannelState {
    busy: Option<Xfer>,
    user: VecDeque<Xfer>,
    internal: VecDeque<Xfer>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Event {
    Arrival(usize),
    PlaneDone(usize),
    SegmentDone(usize),
    ChannelDone(usize),
    HostDone(usize),
}

struct ReqState {
    pages_left: u32,
    done: bool,
}

/// Per-request outcome, as written to the latency CSV.
#[derive(Serialize, Clone, Copy, Debug, PartialEq, Eq)]
pub struct RequestRecord {
    pub request_id: u64,
    pub arrival_ns: Nanos,
    #[serde(rename = "type")]
    pub kind: IoKind,
    pub latency_ns: Nanos,
}

#[derive(Serialize, Clone, Debug, Default, PartialEq)]
pub struct EraseSummary {
    pub count: u64,
    /// Mean of the erase operations' own latency (pulses and verifies).
    pub mean_tbers_ns: f64,
    /// Mean wall time from first pulse to completion, including suspensions.
    pub mean_wall_ns: f64,
    pub suspensions: u64,
    pub shallow: u64,
    pub predictions: u64,
    pub mispredictions: u64,
    pub failed: u64,
}

#[derive(Serialize, Clone, Debug, PartialEq)]
pub struct SimulationReport {
    pub requests: usize,
    pub reads: LatencySummary,
    pub writes: LatencySummary,
    pub erases: EraseSummary,
    pub ftl: FtlSnapshot,
    pub end_ns: Nanos,
    pub events: u64,
}

pub struct SimOutput {
    pub report: SimulationReport,
    pub records: Vec<RequestRecord>,
    pub erase_log: Vec<ExecutedErase>,
    pub read_latency: LatencyStats,
}

pub struct Simulator {
    cfg: SimConfig,
    ftl: Ftl,
    quantum: Nanos,
    t_vr: Nanos,
    planes: Vec<PlaneState>,
    channels: Vec<ChannelState>,
    erases_issued: Vec<u32>,
    erases_done: Vec<u32>,
    heap: BinaryHeap<Reverse<(Nanos, u64, Event)>>,
    now: Nanos,
    seq: u64,
    events: u64,
    trace: Vec<IoRequest>,
    reqs: Vec<ReqState>,
    latencies: Vec<Option<Nanos>>,
    host_wait: VecDeque<usize>,
    outstanding: u32,
    erase_log: Vec<ExecutedErase>,
    erase_summary: EraseSummary,
    tbers_sum: u128,
    wall_sum: u128,
}

impl Simulator {
    pub fn new(ftl: Ftl, cfg: SimConfig) -> Result<Self> {
        cfg.validate()?;
        let geo = ftl.geometry().clone();
        let t = &ftl.chip().params().timing;
        let (quantum, t_vr) = (t.quantum, t.t_vr);
        Ok(Simulator {
            cfg,
            quantum,
            t_vr,
            planes: (0..geo.planes()).map(|_| PlaneState::default()).collect(),
            channels: (0..geo.channels).map(|_| ChannelState::default()).collect(),
            erases_issued: vec![0; geo.blocks() as usize],
            erases_done: vec![0; geo.blocks() as usize],
            ftl,
            heap: BinaryHeap::new(),
            now: 0,
            seq: 0,
            events: 0,
            trace: Vec::new(),
            reqs: Vec::new(),
            latencies: Vec::new(),
            host_wait: VecDeque::new(),
            outstanding: 0,
            erase_log: Vec::new(),
            erase_summary: EraseSummary::default(),
            tbers_sum: 0,
            wall_sum: 0,
        })
    }

    pub fn ftl(&self) -> &Ftl {
        &self.ftl
    }

    /// Put a command on its plane's user or internal queue; returns the plane.
    fn enqueue(&mut self, cmd: FlashCommand, req: Option<usize>) -> usize {
        let plane = self.ftl.geometry().plane_of(cmd.block) as usize;
        let b = cmd.block as usize;
        if let FlashOp::Erase(_) = cmd.op {
            self.erases_issued[b] += 1;
        }
        let p = Pending { erases_before: self.erases_issued[b], seq: self.next_seq(), cmd, req };
        if p.cmd.user {
            self.planes[plane].user.push_back(p);
        } else {
            self.planes[plane].internal.push_back(p);
        }
        plane
    }

    /// Queue an internal command directly on its plane, bypassing the FTL.
    #[cfg(test)]
    fn inject(&mut self, cmd: FlashCommand) -> Result<()> {
        let plane = self.enqueue(cmd, None);
        self.dispatch(self.chip_of_plane(plane))
    }

    fn schedule(&mut self, at: Nanos, ev: Event) {
        self.seq += 1;
        self.heap.push(Reverse((at, self.seq, ev)));
    }

    fn next_seq(&mut self) -> u64 {
        self.seq += 1;
        self.seq
    }

    fn planes_per_chip(&self) -> usize {
        self.ftl.geometry().planes_per_chip as usize
    }

    fn chip_of_plane(&self, plane: usize) -> usize {
        plane / self.planes_per_chip()
    }

    fn channel_of_plane(&self, plane: usize) -> usize {
        self.ftl.geometry().channel_of_chip(self.chip_of_plane(plane) as u32) as usize
    }

    fn chip_planes(&self, chip: usize) -> std::ops::Range<usize> {
        let n = self.planes_per_chip();
        chip * n..(chip + 1) * n
    }

    /// Replay a trace to completion. Requests are folded into the logical capacity.
    pub fn run(mut self, trace: &[IoRequest]) -> Result<SimOutput> {
        let cap = self.ftl.logical_capacity();
        self.trace = trace.iter().map(|r| r.fold(cap)).collect();
        if self.trace.windows(2).any(|w| w[1].arrival < w[0].arrival) {
            return Err(Error::Request("trace arrivals must be nondecreasing".into()));
        }
        self.reqs = self.trace.iter().map(|_| ReqState { pages_left: 0, done: false }).collect();
        self.latencies = vec![None; self.trace.len()];
        for i in 0..self.trace.len() {
            let at = self.trace[i].arrival;
            self.schedule(at, Event::Arrival(i));
        }
        while let Some(Reverse((at, _, ev))) = self.heap.pop() {
            debug_assert!(at >= self.now, "clock went backwards");
            self.now = at;
            self.events += 1;
            match ev {
                Event::Arrival(i) => self.arrive(i)?,
                Event::PlaneDone(p) => self.plane_done(p)?,
                Event::SegmentDone(p) => self.segment_done(p)?,
                Event::ChannelDone(c) => self.channel_done(c)?,
                Event::HostDone(i) => self.host_done(i)?,
            }
        }
        if let Some(i) = self.latencies.iter().position(|l| l.is_none()) {
            return Err(Error::Simulation(self.dump(i)));
        }
        Ok(self.finish())
    }

    fn dump(&self, first_stuck: usize) -> String {
        let queued: Vec<String> = self
            .planes
            .iter()
            .enumerate()
            .filter(|(_, p)| !p.user.is_empty() || !p.internal.is_empty() || p.active.is_some() || p.erase.is_some())
            .map(|(i, p)| {
                format!(
                    "plane {i}: user {} internal {} active {:?} erase {}",
                    p.user.len(),
                    p.internal.len(),
                    p.active.as_ref().map(|a| a.class()),
                    p.erase.as_ref().map_or("none", |e| if e.suspended { "suspended" } else { "running" })
                )
            })
            .collect();
        format!(
            "no runnable event at t={} ns while request {first_stuck} is unfinished; {}",
            self.now,
            queued.join("; ")
        )
    }

    fn arrive(&mut self, i: usize) -> Result<()> {
        if self.cfg.max_outstanding > 0 && self.outstanding >= self.cfg.max_outstanding {
            self.host_wait.push_back(i);
            return Ok(());
        }
        self.admit(i)
    }

    fn admit(&mut self, i: usize) -> Result<()> {
        self.outstanding += 1;
        let r = self.trace[i];
        let ps = self.ftl.geometry().page_size as u64;
        let first = (r.offset / ps) as u32;
        let last = ((r.offset + r.size - 1) / ps) as u32;
        let mut touched = Vec::new();
        for lpn in first..=last {
            let cmds = match r.kind {
                IoKind::Read => self.ftl.host_read(lpn)?.into_iter().collect(),
                IoKind::Write => self.ftl.host_write(lpn)?,
            };
            for cmd in cmds {
                let req = if cmd.user {
                    self.reqs[i].pages_left += 1;
                    Some(i)
                } else {
                    None
                };
                let plane = self.enqueue(cmd, req);
                let chip = self.chip_of_plane(plane);
                if !touched.contains(&chip) {
                    touched.push(chip);
                }
            }
        }
        if self.reqs[i].pages_left == 0 {
            self.page_finished(i);
        }
        for chip in touched {
            self.dispatch(chip)?;
        }
        Ok(())
    }

    fn page_finished(&mut self, i: usize) {
        let st = &mut self.reqs[i];
        st.pages_left = st.pages_left.saturating_sub(1);
        if st.pages_left == 0 && !st.done {
            st.done = true;
            let at = self.now + transfer_time(self.trace[i].size, self.cfg.host_bandwidth);
            self.schedule(at, Event::HostDone(i));
        }
    }

    fn host_done(&mut self, i: usize) -> Result<()> {
        self.latencies[i] = Some(self.now - self.trace[i].arrival);
        self.outstanding -= 1;
        if let Some(next) = self.host_wait.pop_front() {
            self.admit(next)?;
        }
        Ok(())
    }

    fn eligible(&self, p: &Pending) -> bool {
        match p.cmd.op {
            FlashOp::Program => self.erases_done[p.cmd.block as usize] >= p.erases_before,
            _ => true,
        }
    }

    /// Index into the user queue (`Ok`) or internal queue (`Err`) of the command
    /// this plane would run next.
    fn candidate(&self, plane: usize, reads_only: bool) -> Option<(bool, usize)> {
        let ps = &self.planes[plane];
        if reads_only {
            return ps.user.iter().position(|p| p.cmd.op == FlashOp::Read).map(|i| (true, i));
        }
        // reads first, then the oldest eligible user program
        let read = ps.user.iter().position(|p| p.cmd.op == FlashOp::Read);
        if let Some(i) = read.or_else(|| ps.user.iter().position(|p| self.eligible(p))) {
            return Some((true, i));
        }
        match ps.internal.front() {
            Some(p) if self.eligible(p) => Some((false, 0)),
            _ => None,
        }
    }

    fn user_read_waiting(&self, chip: usize) -> bool {
        self.chip_planes(chip).any(|p| self.planes[p].user.iter().any(|c| c.cmd.op == FlashOp::Read))
    }

    fn dispatch(&mut self, chip: usize) -> Result<()> {
        let range = self.chip_planes(chip);
        let mode = range.clone().find_map(|p| self.planes[p].active.as_ref().map(|a| a.class()));
        let suspended = range.clone().any(|p| self.planes[p].erase.as_ref().is_some_and(|e| e.suspended));
        let idle: Vec<usize> = range.clone().filter(|&p| self.planes[p].active.is_none()).collect();
        let cands: Vec<(usize, bool, usize, Class, u64)> = idle
            .iter()
            .filter_map(|&p| {
                self.candidate(p, suspended).map(|(user, i)| {
                    let q = if user { &self.planes[p].user } else { &self.planes[p].internal };
                    (p, user, i, class_of(&q[i].cmd.op), q[i].seq)
                })
            })
            .collect();
        let mode = match mode {
            Some(m) => m,
            None => {
                let Some(&(p, user, i, class, _)) = cands.iter().min_by_key(|c| (!c.1, c.4)) else {
                    if suspended && !self.user_read_waiting(chip) {
                        self.resume(chip);
                    }
                    return Ok(());
                };
                self.start(p, user, i);
                class
            }
        };
        let user_other = cands.iter().any(|c| c.1 && c.3 != mode);
        for &(p, user, i, class, _) in &cands {
            if self.planes[p].active.is_some() || class != mode || (!user && user_other) {
                continue;
            }
            self.start(p, user, i);
        }
        Ok(())
    }

    fn start(&mut self, plane: usize, user: bool, idx: usize) {
        let ps = &mut self.planes[plane];
        let op = if user { ps.user.remove(idx) } else { ps.internal.remove(idx) }.expect("candidate index");
        match op.cmd.op {
            FlashOp::Read => {
                let at = self.now + op.cmd.duration;
                self.planes[plane].active = Some(Active::Read(op));
                self.schedule(at, Event::PlaneDone(plane));
            }
            FlashOp::Program => {
                let user = op.cmd.user;
                self.planes[plane].active = Some(Active::ProgramIn(op));
                let ch = self.channel_of_plane(plane);
                let x = Xfer::ProgramIn { plane };
                if user {
                    self.channels[ch].user.push_back(x);
                } else {
                    self.channels[ch].internal.push_back(x);
                }
                self.kick_channel(ch);
            }
            FlashOp::Erase(ref outcome) => {
                let timeline = EraseTimeline::new((**outcome).clone(), self.quantum, self.t_vr);
                let first = timeline.next_segment();
                self.planes[plane].active = Some(Active::Erase);
                self.planes[plane].erase = Some(RunningErase { timeline, start: self.now, suspended: false });
                match first {
                    Some(d) => self.schedule(self.now + d, Event::SegmentDone(plane)),
                    // an erase with no loops finishes immediately
                    None => self.schedule(self.now, Event::SegmentDone(plane)),
                }
            }
        }
    }

    fn resume(&mut self, chip: usize) {
        for p in self.chip_planes(chip) {
            let Some(run) = self.planes[p].erase.as_mut() else { continue };
            if !run.suspended {
                continue;
            }
            run.suspended = false;
            let d = run.timeline.next_segment().unwrap_or(0);
            self.planes[p].active = Some(Active::Erase);
            let at = self.now + self.cfg.suspend_overhead + d;
            self.schedule(at, Event::SegmentDone(p));
        }
    }

    fn segment_done(&mut self, plane: usize) -> Result<()> {
        let chip = self.chip_of_plane(plane);
        let run = self.planes[plane].erase.as_mut().ok_or_else(|| Error::Logic("segment without erase".into()))?;
        run.timeline.complete_segment();
        if run.timeline.done() {
            let run = self.planes[plane].erase.take().unwrap();
            self.planes[plane].active = None;
            self.erase_finished(run);
            return self.dispatch(chip);
        }
        if self.cfg.suspension && self.user_read_waiting(chip) {
            let run = self.planes[plane].erase.as_mut().unwrap();
            run.suspended = true;
            run.timeline.suspensions += 1;
            self.planes[plane].active = None;
            return self.dispatch(chip);
        }
        let d = self.planes[plane].erase.as_ref().unwrap().timeline.next_segment().unwrap_or(0);
        self.schedule(self.now + d, Event::SegmentDone(plane));
        Ok(())
    }

    fn erase_finished(&mut self, run: RunningErase) {
        let o = run.timeline.outcome();
        self.erases_done[o.block as usize] += 1;
        let s = &mut self.erase_summary;
        s.count += 1;
        s.suspensions += run.timeline.suspensions as u64;
        s.shallow += o.shallow as u64;
        s.predictions += o.predictions as u64;
        s.mispredictions += o.mispredictions as u64;
        s.failed += (!o.completed) as u64;
        self.tbers_sum += o.total_latency as u128;
        self.wall_sum += (self.now - run.start) as u128;
        self.erase_log.push(ExecutedErase {
            block: o.block,
            loops: run.timeline.executed().to_vec(),
            suspensions: run.timeline.suspensions,
            start: run.start,
            end: self.now,
        });
    }

    fn plane_done(&mut self, plane: usize) -> Result<()> {
        let chip = self.chip_of_plane(plane);
        match self.planes[plane].active.take() {
            Some(Active::Read(op)) => {
                let ch = self.channel_of_plane(plane);
                let x = Xfer::ReadOut { req: op.req };
                if op.cmd.user {
                    self.channels[ch].user.push_back(x);
                } else {
                    self.channels[ch].internal.push_back(x);
                }
                self.kick_channel(ch);
            }
            Some(Active::Program(op)) => {
                if let Some(i) = op.req {
                    self.page_finished(i);
                }
            }
            other => return Err(Error::Logic(format!("plane {plane} completion with {other:?}"))),
        }
        self.dispatch(chip)
    }

    fn kick_channel(&mut self, ch: usize) {
        if self.channels[ch].busy.is_some() {
            return;
        }
        let c = &mut self.channels[ch];
        let Some(x) = c.user.pop_front().or_else(|| c.internal.pop_front()) else { return };
        c.busy = Some(x);
        let d = transfer_time(self.ftl.geometry().page_size as u64, self.cfg.channel_bandwidth);
        self.schedule(self.now + d, Event::ChannelDone(ch));
    }

    fn channel_done(&mut self, ch: usize) -> Result<()> {
        let x = self.channels[ch].busy.take().ok_or_else(|| Error::Logic("idle channel completed".into()))?;
        match x {
            Xfer::ReadOut { req } => {
                if let Some(i) = req {
                    self.page_finished(i);
                }
            }
            Xfer::ProgramIn { plane } => match self.planes[plane].active.take() {
                Some(Active::ProgramIn(op)) => {
                    let at = self.now + op.cmd.duration;
                    self.planes[plane].active = Some(Active::Program(op));
                    self.schedule(at, Event::PlaneDone(plane));
                }
                other => return Err(Error::Logic(format!("program data for plane {plane} in state {other:?}"))),
            },
        }
        self.kick_channel(ch);
        Ok(())
    }

    fn finish(self) -> SimOutput {
        let mut reads = Vec::new();
        let mut writes = Vec::new();
        let records: Vec<RequestRecord> = self
            .trace
            .iter()
            .zip(&self.latencies)
            .enumerate()
            .map(|(i, (r, l))| {
                let latency = l.expect("checked above");
                match r.kind {
                    IoKind::Read => reads.push(latency),
                    IoKind::Write => writes.push(latency),
                }
                RequestRecord { request_id: i as u64, arrival_ns: r.arrival, kind: r.kind, latency_ns: latency }
            })
            .collect();
        let reads = LatencyStats::from_samples(reads);
        let writes = LatencyStats::from_samples(writes);
        let mut erases = self.erase_summary.clone();
        if erases.count > 0 {
            erases.mean_tbers_ns = self.tbers_sum as f64 / erases.count as f64;
            erases.mean_wall_ns = self.wall_sum as f64 / erases.count as f64;
        }
        let report = SimulationReport {
            requests: records.len(),
            reads: reads.summary(),
            writes: writes.summary(),
            erases,
            ftl: self.ftl.snapshot(),
            end_ns: self.now,
            events: self.events,
        };
        SimOutput { report, records, erase_log: self.erase_log, read_latency: reads }
    }
}

/// Latency CSV: `request_id,arrival_ns,type,latency_ns`.
pub fn write_latency_csv<W: std::io::Write>(mut w: W, records: &[RequestRecord]) -> std::io::Result<()> {
    writeln!(w, "request_id,arrival_ns,type,latency_ns")?;
    for r in records {
        writeln!(w, "{},{},{},{}", r.request_id, r.arrival_ns, r.kind, r.latency_ns)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chip::{ChipModel, ChipParams, Geometry};
    use crate::erase::{EraseEngine, EraseTimingTable, LoopRecord, Mispredictor, Scheme};
    use crate::ftl::GcConfig;
    use crate::units::{ms, us};

    fn outcome(pulses: &[(Nanos, u32, u32)]) -> EraseOutcome {
        let mut o = EraseOutcome::new(0);
        for &(pulse, level, fail_count) in pulses {
            o.loops.push(LoopRecord { level, pulse, fail_count, retry: false });
            o.total_latency += pulse + us(100);
        }
        o
    }

    #[test]
    fn timeline_splits_at_quanta() {
        let o = outcome(&[(ms(1), 1, 9000), (us(1500), 1, 10)]);
        let mut t = EraseTimeline::new(o.clone(), us(500), us(100));
        let mut durs = Vec::new();
        while let Some(d) = t.next_segment() {
            durs.push(d);
            t.complete_segment();
        }
        assert_eq!(durs, vec![us(500), us(500), us(100), us(500), us(500), us(500), us(100)]);
        assert_eq!(t.executed(), ExecutedErase::expected(&o).as_slice());
    }

    pub(crate) fn desk_sim(scheme: Scheme, cfg: SimConfig) -> Simulator {
        let mut p = ChipParams::shipped();
        p.geometry = Geometry::desk();
        let blocks = p.geometry.blocks();
        let chip = ChipModel::new(p, 11).unwrap();
        let engine = EraseEngine::new(scheme, blocks, EraseTimingTable::shipped(), Mispredictor::none());
        let ftl = Ftl::new(chip, engine, GcConfig::default()).unwrap();
        Simulator::new(ftl, cfg).unwrap()
    }

    #[test]
    fn empty_trace() {
        let out = desk_sim(Scheme::Baseline, SimConfig::default()).run(&[]).unwrap();
        assert_eq!(out.report.requests, 0);
        assert_eq!(out.report.erases.count, 0);
    }

    #[test]
    fn single_read_on_idle_drive() {
        let cfg = SimConfig::default();
        let mut sim = desk_sim(Scheme::Baseline, cfg.clone());
        sim.ftl.host_write(0).unwrap();
        let req = IoRequest { arrival: 1000, kind: IoKind::Read, offset: 0, size: 4096 };
        let out = sim.run(&[req]).unwrap();
        let expect = us(40) + transfer_time(16384, cfg.channel_bandwidth) + transfer_time(4096, cfg.host_bandwidth);
        assert_eq!(out.records[0].latency_ns, expect);
    }
    /// Desk drive with lpn 0 written and a 3.6 ms single-loop erase running on its plane from t=0.
    fn erase_in_flight(suspension: bool) -> Simulator {
        let mut sim = desk_sim(Scheme::Baseline, SimConfig { suspension, ..SimConfig::default() });
        sim.ftl.host_write(0).unwrap();
        let geo = sim.ftl.geometry().clone();
        let plane = geo.plane_of(sim.ftl.lookup(0).unwrap() / geo.pages_per_block);
        let victim = geo.first_block_of_plane(plane) + geo.blocks_per_plane - 1;
        let mut o = outcome(&[(us(3500), 1, 10)]);
        o.block = victim;
        let duration = o.total_latency;
        sim.inject(FlashCommand { op: FlashOp::Erase(Box::new(o)), block: victim, page: 0, user: false, duration })
            .unwrap();
        sim
    }

    fn read_at(at: Nanos) -> IoRequest {
        IoRequest { arrival: at, kind: IoKind::Read, offset: 0, size: 4096 }
    }

    fn idle_read(cfg: &SimConfig) -> Nanos {
        us(40) + transfer_time(16384, cfg.channel_bandwidth) + transfer_time(4096, cfg.host_bandwidth)
    }

    #[test]
    fn read_waits_out_an_unsuspendable_erase() {
        let out = erase_in_flight(false).run(&[read_at(ms(1))]).unwrap();
        assert!(out.records[0].latency_ns >= us(2600));
        assert_eq!(out.records[0].latency_ns, us(2600) + idle_read(&SimConfig::default()));
        assert_eq!(out.erase_log[0].suspensions, 0);
    }

    #[test]
    fn suspended_erase_delays_a_read_by_at_most_one_quantum() {
        let cfg = SimConfig::default();
        let bound = us(500) + cfg.suspend_overhead + idle_read(&cfg);
        for k in 0..200u64 {
            let at = 1 + k * us(3600) / 200;
            let out = erase_in_flight(true).run(&[read_at(at)]).unwrap();
            let lat = out.records[0].latency_ns;
            assert!(lat <= bound, "read at {at} took {lat}");
            assert!(lat >= idle_read(&cfg));
        }
    }

    #[test]
    fn two_suspensions_cost_two_overheads() {
        let cfg = SimConfig::default();
        let out = erase_in_flight(true).run(&[read_at(us(1200)), read_at(us(2700))]).unwrap();
        let e = &out.erase_log[0];
        assert_eq!(e.suspensions, 2);
        assert_eq!(e.end - e.start, us(3600) + 2 * cfg.suspend_overhead + 2 * us(40));
        assert_eq!(e.loops, ExecutedErase::expected(&outcome(&[(us(3500), 1, 10)])));
    }
}

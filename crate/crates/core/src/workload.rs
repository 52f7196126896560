//! Trace ingestion, synthetic request streams and time scaling.
//!
//! Supported inputs, one line each:
//!
//! * MSRC: `128166372003061629,hm,0,Read,3154152448,4096,2135`
//!   (filetime ticks, host, disk, type, offset, size, response time)
//! * Alibaba: `0,R,4096,16384,1000000` (device, opcode, offset, length, microseconds)
//! * normalized: `1000000,read,4096,16384` (arrival ns, kind, offset, size)

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{Nanos, NS_PER_MS, NS_PER_US};

/// Logical request granularity for synthetic streams.
pub const SECTOR_ALIGN: u64 = 4096;

pub const NORMALIZED_HEADER: &str = "arrival_ns,kind,offset,size";

#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum IoKind {
    Read,
    Write,
}

impl fmt::Display for IoKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IoKind::Read => "read",
            IoKind::Write => "write",
        })
    }
}

#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq)]
pub struct IoRequest {
    pub arrival: Nanos,
    pub kind: IoKind,
    pub offset: u64,
    pub size: u64,
}

impl IoRequest {
    /// Fold the request into a drive of `capacity` bytes: the offset wraps modulo the
    /// capacity and a request that would run off the end is pulled back to fit.
    pub fn fold(mut self, capacity: u64) -> Self {
        self.size = self.size.clamp(1, capacity);
        self.offset %= capacity;
        if self.offset + self.size > capacity {
            self.offset = capacity - self.size;
        }
        self
    }
}

/// Which parser to use for a trace file.
#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum TraceFormat {
    Msrc,
    Alibaba,
    Normalized,
}

impl FromStr for TraceFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "msrc" => Ok(TraceFormat::Msrc),
            "alibaba" | "ali" => Ok(TraceFormat::Alibaba),
            "csv" | "normalized" => Ok(TraceFormat::Normalized),
            other => Err(Error::Usage(format!("unknown trace format '{other}'"))),
        }
    }
}

impl fmt::Display for TraceFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TraceFormat::Msrc => "msrc",
            TraceFormat::Alibaba => "alibaba",
            TraceFormat::Normalized => "normalized",
        })
    }
}

/// Options shared by the trace parsers.
#[derive(Clone, Debug, PartialEq)]
pub struct ParseOptions {
    /// Inter-arrival gaps are divided by this factor.
    pub accel: f64,
    /// Keep only records of this disk / device number.
    pub disk: Option<u32>,
}

impl ParseOptions {
    pub fn msrc_default() -> Self {
        ParseOptions { accel: 10.0, disk: None }
    }

    pub fn identity() -> Self {
        ParseOptions { accel: 1.0, disk: None }
    }
}

fn parse_err(path: &str, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.to_string(), line, msg: msg.into() }
}

fn field<T: FromStr>(fields: &[&str], i: usize, name: &str, path: &str, line: usize) -> Result<T> {
    let raw = fields.get(i).ok_or_else(|| parse_err(path, line, format!("missing field '{name}'")))?;
    raw.trim().parse().map_err(|_| parse_err(path, line, format!("bad {name} '{}'", raw.trim())))
}

/// Scale absolute timestamps (ns, any origin) relative to `origin`.
fn scale(t: u64, origin: u64, accel: f64) -> Nanos {
    let gap = t.saturating_sub(origin);
    if accel == 1.0 {
        gap
    } else {
        (gap as f64 / accel).round() as Nanos
    }
}

fn check_accel(accel: f64) -> Result<()> {
    if accel.is_finite() && accel > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("acceleration factor must be positive, got {accel}")))
    }
}

/// Stable-sort by raw timestamp, warning once if the input was out of order.
fn sort_raw(path: &str, raw: &mut [(u64, IoKind, u64, u64)]) {
    if raw.windows(2).any(|w| w[1].0 < w[0].0) {
        warn!("{path}: timestamps out of order, reordering");
        raw.sort_by_key(|r| r.0);
    }
}

fn lines<'a, R: BufRead + 'a>(reader: R, path: &'a str) -> impl Iterator<Item = Result<(usize, String)>> + 'a {
    let path = path.to_string();
    reader.lines().enumerate().filter_map(move |(i, l)| match l {
        Err(e) => Some(Err(parse_err(&path, i + 1, e.to_string()))),
        Ok(s) if s.trim().is_empty() || s.starts_with('#') => None,
        Ok(s) => Some(Ok((i + 1, s))),
    })
}

/// MSR Cambridge CSV. Arrivals are rebased to the first record and accelerated.
pub fn parse_msrc<R: BufRead>(reader: R, path: &str, opts: &ParseOptions) -> Result<Vec<IoRequest>> {
    check_accel(opts.accel)?;
    let mut raw = Vec::new();
    for item in lines(reader, path) {
        let (n, line) = item?;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() < 6 {
            return Err(parse_err(path, n, format!("expected 7 fields, got {}", f.len())));
        }
        let ticks: u64 = field(&f, 0, "timestamp", path, n)?;
        let disk: u32 = field(&f, 2, "disk number", path, n)?;
        let kind = match f[3].trim() {
            "Read" => IoKind::Read,
            "Write" => IoKind::Write,
            other => return Err(parse_err(path, n, format!("unknown type '{other}'"))),
        };
        let offset: u64 = field(&f, 4, "offset", path, n)?;
        let size: u64 = field(&f, 5, "size", path, n)?;
        if size == 0 {
            return Err(parse_err(path, n, "zero-sized request"));
        }
        if opts.disk.is_some_and(|d| d != disk) {
            continue;
        }
        // filetime ticks are 100 ns
        raw.push((ticks.saturating_mul(100), kind, offset, size));
    }
    sort_raw(path, &mut raw);
    let origin = raw.first().map_or(0, |r| r.0);
    Ok(raw
        .into_iter()
        .map(|(t, kind, offset, size)| IoRequest { arrival: scale(t, origin, opts.accel), kind, offset, size })
        .collect())
}

/// Alibaba block trace CSV. Timestamps keep their origin; only gaps are scaled.
pub fn parse_alibaba<R: BufRead>(reader: R, path: &str, opts: &ParseOptions) -> Result<Vec<IoRequest>> {
    check_accel(opts.accel)?;
    let mut raw = Vec::new();
    for item in lines(reader, path) {
        let (n, line) = item?;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() < 5 {
            return Err(parse_err(path, n, format!("expected 5 fields, got {}", f.len())));
        }
        let device: u32 = field(&f, 0, "device id", path, n)?;
        let kind = match f[1].trim() {
            "R" | "r" => IoKind::Read,
            "W" | "w" => IoKind::Write,
            other => return Err(parse_err(path, n, format!("unknown opcode '{other}'"))),
        };
        let offset: u64 = field(&f, 2, "offset", path, n)?;
        let size: u64 = field(&f, 3, "length", path, n)?;
        let us: u64 = field(&f, 4, "timestamp", path, n)?;
        if size == 0 {
            return Err(parse_err(path, n, "zero-sized request"));
        }
        if opts.disk.is_some_and(|d| d != device) {
            continue;
        }
        raw.push((us.saturating_mul(NS_PER_US), kind, offset, size));
    }
    sort_raw(path, &mut raw);
    let origin = raw.first().map_or(0, |r| r.0);
    Ok(raw
        .into_iter()
        .map(|(t, kind, offset, size)| IoRequest {
            arrival: origin + scale(t, origin, opts.accel),
            kind,
            offset,
            size,
        })
        .collect())
}

/// The simulator's own CSV format, as written by [`write_normalized`].
pub fn parse_normalized<R: BufRead>(reader: R, path: &str) -> Result<Vec<IoRequest>> {
    let mut out = Vec::new();
    for item in lines(reader, path) {
        let (n, line) = item?;
        if line.trim() == NORMALIZED_HEADER {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(parse_err(path, n, format!("expected 4 fields, got {}", f.len())));
        }
        let kind = match f[1].trim() {
            "read" => IoKind::Read,
            "write" => IoKind::Write,
            other => return Err(parse_err(path, n, format!("unknown kind '{other}'"))),
        };
        let req = IoRequest {
            arrival: field(&f, 0, "arrival_ns", path, n)?,
            kind,
            offset: field(&f, 2, "offset", path, n)?,
            size: field(&f, 3, "size", path, n)?,
        };
        if req.size == 0 {
            return Err(parse_err(path, n, "zero-sized request"));
        }
        if out.last().is_some_and(|p: &IoRequest| p.arrival > req.arrival) {
            return Err(parse_err(path, n, "arrivals must be nondecreasing"));
        }
        out.push(req);
    }
    Ok(out)
}

pub fn write_normalized<W: Write>(mut w: W, reqs: &[IoRequest]) -> std::io::Result<()> {
    writeln!(w, "{NORMALIZED_HEADER}")?;
    for r in reqs {
        writeln!(w, "{},{},{},{}", r.arrival, r.kind, r.offset, r.size)?;
    }
    Ok(())
}

/// Load a trace file in the given format.
pub fn load_trace(path: &Path, format: TraceFormat, opts: &ParseOptions) -> Result<Vec<IoRequest>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = std::io::BufReader::new(file);
    let label = path.display().to_string();
    match format {
        TraceFormat::Msrc => parse_msrc(reader, &label, opts),
        TraceFormat::Alibaba => parse_alibaba(reader, &label, opts),
        TraceFormat::Normalized => parse_normalized(reader, &label),
    }
}

/// Parameters of a synthetic request stream.
#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct SynthParams {
    pub read_ratio: f64,
    pub avg_size: u64,
    pub avg_interarrival: Nanos,
    /// Requests are generated until this much simulated time has elapsed.
    pub duration: Nanos,
}

impl SynthParams {
    /// Read-dominant profile with ali.E's published moments (95% reads, 36 KiB, 5.1 ms).
    pub fn ali_e(duration: Nanos) -> Self {
        SynthParams { read_ratio: 0.95, avg_size: 36 * 1024, avg_interarrival: 5_100_000, duration }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.read_ratio) {
            return Err(Error::Config(format!("read_ratio {} outside [0, 1]", self.read_ratio)));
        }
        if self.avg_size < SECTOR_ALIGN || self.avg_interarrival == 0 || self.duration == 0 {
            return Err(Error::Config("synthetic size, inter-arrival and duration must be positive".into()));
        }
        Ok(())
    }
}

/// Poisson arrivals, 4 KiB-aligned geometric sizes and uniform offsets over `capacity`.
pub fn synth(params: &SynthParams, capacity: u64, seed: u64) -> Result<Vec<IoRequest>> {
    params.validate()?;
    if capacity < SECTOR_ALIGN {
        return Err(Error::Config("capacity smaller than one sector".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sectors = capacity / SECTOR_ALIGN;
    let mean_sectors = params.avg_size as f64 / SECTOR_ALIGN as f64;
    // geometric on {1, 2, ...} with mean `mean_sectors`
    let p = 1.0 / mean_sectors;
    let mut t = 0.0f64;
    let mut out = Vec::new();
    loop {
        let u: f64 = rng.gen();
        t += -(1.0 - u).ln() * params.avg_interarrival as f64;
        let arrival = t.round() as Nanos;
        if arrival > params.duration {
            break;
        }
        let kind = if rng.gen::<f64>() < params.read_ratio { IoKind::Read } else { IoKind::Write };
        let n = if p >= 1.0 {
            1
        } else {
            let u: f64 = rng.gen();
            1 + ((1.0 - u).ln() / (1.0 - p).ln()).floor() as u64
        };
        let n = n.min(sectors);
        let start = rng.gen_range(0..=sectors - n);
        out.push(IoRequest { arrival, kind, offset: start * SECTOR_ALIGN, size: n * SECTOR_ALIGN });
    }
    Ok(out)
}

/// Summary moments of a stream, used for sanity checks and reports.
#[derive(Serialize, Clone, Debug, PartialEq)]
pub struct StreamMoments {
    pub count: usize,
    pub read_ratio: f64,
    pub mean_size: f64,
    pub mean_interarrival_ms: f64,
}

pub fn moments(reqs: &[IoRequest]) -> StreamMoments {
    let count = reqs.len();
    if count == 0 {
        return StreamMoments { count, read_ratio: 0.0, mean_size: 0.0, mean_interarrival_ms: 0.0 };
    }
    let reads = reqs.iter().filter(|r| r.kind == IoKind::Read).count();
    let size: u64 = reqs.iter().map(|r| r.size).sum();
    let span = reqs.last().unwrap().arrival - reqs[0].arrival;
    let gaps = (count - 1).max(1);
    StreamMoments {
        count,
        read_ratio: reads as f64 / count as f64,
        mean_size: size as f64 / count as f64,
        mean_interarrival_ms: span as f64 / gaps as f64 / NS_PER_MS as f64,
    }
}

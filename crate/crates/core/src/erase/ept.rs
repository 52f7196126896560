use std::fmt::Write as _;

use crate::chip::{FailBitParams, TimingParams};
use crate::error::{Error, Result};

pub const ROWS: usize = 5;
pub const BUCKETS: usize = 8;

type Grid = [[u32; BUCKETS]; ROWS];

/// Which column of the table to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Conservative,
    Aggressive,
}

/// Minimum pulse width (in quanta) for the next erase loop, keyed by loop row and
/// fail-bit bucket of the previous verify.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EraseTimingTable {
    conservative: Grid,
    aggressive: Grid,
}

const SHIPPED: &str = include_str!("../../data/ept.txt");

impl EraseTimingTable {
    /// The table shipped with the 3D TLC parameter set.
    pub fn shipped() -> Self {
        Self::from_text(SHIPPED, 500_000).expect("shipped erase timing table is valid")
    }

    /// Build the table from the loop-capacity rule. `allowed_deficit[row]` is how many
    /// quanta an aggressive lookup in that row may leave unerased.
    pub fn generate(timing: &TimingParams, allowed_deficit: &[u32; ROWS]) -> Self {
        let mut cons = [[0; BUCKETS]; ROWS];
        let mut aggr = [[0; BUCKETS]; ROWS];
        for row in 0..ROWS {
            let cap = if row == 0 {
                timing.quanta_per_level - timing.se_quanta()
            } else {
                timing.quanta_per_level
            };
            for b in 0..BUCKETS {
                let need = b as u32 + 1;
                cons[row][b] = need.min(cap);
                aggr[row][b] = need.saturating_sub(allowed_deficit[row]).min(cap);
            }
        }
        EraseTimingTable { conservative: cons, aggressive: aggr }
    }

    /// Build from row-major cells in quanta; both grids must be 5 x 8.
    pub fn from_grids(conservative: &[Vec<u32>], aggressive: &[Vec<u32>]) -> Result<Self> {
        let grid = |rows: &[Vec<u32>]| -> Result<Grid> {
            let mut g = [[0; BUCKETS]; ROWS];
            if rows.len() != ROWS || rows.iter().any(|r| r.len() != BUCKETS) {
                return Err(Error::Config(format!("timing table must be {ROWS} x {BUCKETS}")));
            }
            for (dst, src) in g.iter_mut().zip(rows) {
                dst.copy_from_slice(src);
            }
            Ok(g)
        };
        Ok(EraseTimingTable { conservative: grid(conservative)?, aggressive: grid(aggressive)? })
    }

    pub fn cell(&self, row: u32, bucket: u32, mode: Mode) -> u32 {
        let g = match mode {
            Mode::Conservative => &self.conservative,
            Mode::Aggressive => &self.aggressive,
        };
        g[row as usize - 1][bucket as usize]
    }

    /// Pulse width in quanta for `fail` observed before loop `row`. Zero means skip.
    pub fn lookup(&self, row: u32, fail: u32, mode: Mode, fb: &FailBitParams) -> Result<u32> {
        if !(1..=ROWS as u32).contains(&row) {
            return Err(Error::Logic(format!("table row {row} out of range")));
        }
        if fail <= fb.f_pass {
            return Err(Error::Logic(format!("lookup with passing fail count {fail}")));
        }
        let b = fb.bucket_of(fail);
        if b as usize >= BUCKETS {
            return Err(Error::Logic(format!("fail count {fail} above the table range")));
        }
        Ok(self.cell(row, b, mode))
    }

    pub fn validate(&self, timing: &TimingParams) -> Result<()> {
        for row in 0..ROWS {
            let cap = if row == 0 {
                timing.quanta_per_level - timing.se_quanta()
            } else {
                timing.quanta_per_level
            };
            for b in 0..BUCKETS {
                let (c, a) = (self.conservative[row][b], self.aggressive[row][b]);
                if a > c || c > cap || c == 0 {
                    return Err(Error::Config(format!("table cell ({}, {b}) violates ordering or limit", row + 1)));
                }
            }
        }
        Ok(())
    }

    pub fn to_text(&self, quantum: u64) -> String {
        let mut out = String::from("# minimum erase pulse per loop row and fail-bit bucket, ms\n");
        for (name, g) in [("conservative", &self.conservative), ("aggressive", &self.aggressive)] {
            let _ = writeln!(out, "[{name}]");
            for row in g {
                let cells: Vec<String> = row.iter().map(|&q| fmt_ms(q as u64 * quantum)).collect();
                let _ = writeln!(out, "{}", cells.join(" "));
            }
        }
        out
    }

    pub fn from_text(text: &str, quantum: u64) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse { path: "erase timing table".into(), line, msg };
        let mut grids = [[[0u32; BUCKETS]; ROWS]; 2];
        let mut section: Option<usize> = None;
        let mut rows_seen = [0usize; 2];
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            match line {
                "[conservative]" => section = Some(0),
                "[aggressive]" => section = Some(1),
                _ => {
                    let s = section.ok_or_else(|| err(i + 1, "cells before a section header".into()))?;
                    if rows_seen[s] >= ROWS {
                        return Err(err(i + 1, "too many rows".into()));
                    }
                    let cells: Vec<&str> = line.split_whitespace().collect();
                    if cells.len() != BUCKETS {
                        return Err(err(i + 1, format!("expected {BUCKETS} cells, found {}", cells.len())));
                    }
                    for (b, c) in cells.iter().enumerate() {
                        let ms: f64 = c.parse().map_err(|_| err(i + 1, format!("bad cell `{c}`")))?;
                        let ns = (ms * 1e6).round() as u64;
                        if ns % quantum != 0 {
                            return Err(err(i + 1, format!("cell `{c}` is not a quantum multiple")));
                        }
                        grids[s][rows_seen[s]][b] = (ns / quantum) as u32;
                    }
                    rows_seen[s] += 1;
                }
            }
        }
        if rows_seen != [ROWS, ROWS] {
            return Err(err(text.lines().count(), "both sections need five rows".into()));
        }
        Ok(EraseTimingTable { conservative: grids[0], aggressive: grids[1] })
    }

    pub fn load(path: &std::path::Path, quantum: u64) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, quantum).map_err(|e| match e {
            Error::Parse { line, msg, .. } => Error::Parse { path: path.display().to_string(), line, msg },
            other => other,
        })
    }

    pub fn save(&self, path: &std::path::Path, quantum: u64) -> Result<()> {
        std::fs::write(path, self.to_text(quantum)).map_err(|e| Error::io(path, e))
    }
}

fn fmt_ms(ns: u64) -> String {
    let whole = ns / 1_000_000;
    let frac = ns % 1_000_000;
    if frac == 0 {
        whole.to_string()
    } else {
        let f = format!("{:06}", frac);
        format!("{whole}.{}", f.trim_end_matches('0'))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let t = EraseTimingTable::shipped();
        let text = t.to_text(500_000);
        assert_eq!(text, SHIPPED);
        assert_eq!(EraseTimingTable::from_text(&text, 500_000).unwrap(), t);
    }

    #[test]
    fn rejects_partial_quantum() {
        let bad = SHIPPED.replacen("0.5", "0.7", 1);
        assert!(EraseTimingTable::from_text(&bad, 500_000).is_err());
    }

    #[test]
    fn lookup_guards() {
        let t = EraseTimingTable::shipped();
        let fb = FailBitParams::default();
        assert!(t.lookup(1, 50, Mode::Conservative, &fb).is_err());
        assert!(t.lookup(6, 400, Mode::Conservative, &fb).is_err());
        assert!(t.lookup(2, 36_000, Mode::Conservative, &fb).is_err());
        assert_eq!(t.lookup(2, 12_500, Mode::Conservative, &fb).unwrap(), 4);
    }

    #[test]
    fn generated_matches_shipped() {
        let t = EraseTimingTable::generate(&TimingParams::default(), &[2, 2, 2, 1, 0]);
        assert_eq!(t, EraseTimingTable::shipped());
        t.validate(&TimingParams::default()).unwrap();
    }
}

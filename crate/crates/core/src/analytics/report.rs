use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::analytics::{LatencySummary, LifetimeCurve};
use crate::erase::Scheme;
use crate::error::{Error, Result};

/// Named output files held in memory until they are written together.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    files: Vec<(String, Vec<u8>)>,
}

impl Report {
    pub fn add(&mut self, name: &str, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.to_string(), bytes.into()));
    }

    pub fn add_json<T: Serialize>(&mut self, name: &str, value: &T) {
        let mut text = serde_json::to_string_pretty(value).expect("report serializes");
        text.push('\n');
        self.add(name, text);
    }

    pub fn files(&self) -> &[(String, Vec<u8>)] {
        &self.files
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_slice())
    }

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

/// `scheme,pec,mean_mrber`, one row per checkpoint.
pub fn lifetime_csv(curves: &[LifetimeCurve]) -> String {
    let mut out = String::from("scheme,pec,mean_mrber\n");
    for c in curves {
        for (pec, m) in c.pec.iter().zip(&c.mean_rber) {
            let _ = writeln!(out, "{},{},{:.6}", c.scheme, pec, m);
        }
    }
    out
}

/// Read-latency headline of one simulated configuration.
#[derive(Serialize, Clone, Debug, PartialEq)]
pub struct LatencyRow {
    pub scheme: Scheme,
    pub pec: u32,
    pub suspension: bool,
    pub reads: LatencySummary,
}

/// Percentiles that get their own table, with the file-name suffix used for each.
pub const PERCENTILE_TABLES: [(&str, fn(&LatencySummary) -> Option<u64>); 5] = [
    ("p50", |s| s.p50_ns),
    ("p99", |s| s.p99_ns),
    ("p99_9", |s| s.p99_9_ns),
    ("p99_99", |s| s.p99_99_ns),
    ("p99_9999", |s| s.p99_9999_ns),
];

fn latency_table(rows: &[LatencyRow], baseline: Scheme, value: impl Fn(&LatencySummary) -> Option<f64>) -> String {
    let mut out = String::from("scheme,pec,suspension,latency_ns,normalized\n");
    for r in rows {
        let v = value(&r.reads);
        let base = rows
            .iter()
            .find(|b| b.scheme == baseline && b.pec == r.pec && b.suspension == r.suspension)
            .and_then(|b| value(&b.reads));
        let cell = |x: Option<f64>| x.map_or(String::new(), |x| format!("{x:.3}"));
        let norm = match (v, base) {
            (Some(v), Some(b)) if b > 0.0 => format!("{:.6}", v / b),
            _ => String::new(),
        };
        let _ = writeln!(out, "{},{},{},{},{}", r.scheme, r.pec, r.suspension, cell(v), norm);
    }
    out
}

/// Per-percentile tables plus the mean, each normalized to `baseline` at equal PEC and
/// suspension setting.
pub fn add_latency_tables(report: &mut Report, rows: &[LatencyRow], baseline: Scheme) {
    for (suffix, pick) in PERCENTILE_TABLES {
        let table = latency_table(rows, baseline, |s| pick(s).map(|v| v as f64));
        report.add(&format!("latency_{suffix}.csv"), table);
    }
    report.add("latency_mean.csv", latency_table(rows, baseline, |s| s.mean_ns));
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(p9999: u64) -> LatencySummary {
        LatencySummary {
            count: 1,
            mean_ns: Some(p9999 as f64),
            p50_ns: Some(1),
            p99_ns: Some(1),
            p99_9_ns: Some(1),
            p99_99_ns: Some(p9999),
            p99_9999_ns: Some(p9999),
            max_ns: Some(p9999),
        }
    }

    #[test]
    fn empty_tables_keep_headers() {
        let mut r = Report::default();
        add_latency_tables(&mut r, &[], Scheme::Baseline);
        assert_eq!(r.get("latency_p99_99.csv").unwrap(), b"scheme,pec,suspension,latency_ns,normalized\n");
        assert_eq!(lifetime_csv(&[]), "scheme,pec,mean_mrber\n");
    }

    #[test]
    fn normalized_to_named_baseline() {
        let rows = vec![
            LatencyRow { scheme: Scheme::Baseline, pec: 500, suspension: true, reads: summary(800) },
            LatencyRow { scheme: Scheme::Aero, pec: 500, suspension: true, reads: summary(600) },
        ];
        let mut r = Report::default();
        add_latency_tables(&mut r, &rows, Scheme::Baseline);
        let text = String::from_utf8(r.get("latency_p99_99.csv").unwrap().to_vec()).unwrap();
        assert!(text.contains("baseline,500,true,800.000,1.000000\n"));
        assert!(text.contains("aero,500,true,600.000,0.750000\n"));
    }
}

use std::collections::BTreeMap;

use aerosim::config::{GeometryOverrides, RunConfig, TraceSource};
use aerosim::erase::Scheme;
use aerosim::sim::{ExecutedErase, ExecutedLoop, SimOutput};
use aerosim::workload::SynthParams;

/// Small write-heavy setup that keeps GC busy.
fn config(suspension: bool, seed: u64) -> RunConfig {
    let mut c = RunConfig {
        scheme: Scheme::Aero,
        geometry: GeometryOverrides {
            channels: Some(1),
            chips_per_channel: Some(2),
            blocks_per_plane: Some(16),
            pages_per_block: Some(64),
            ..Default::default()
        },
        trace: TraceSource::Synth(SynthParams {
            read_ratio: 0.6,
            avg_size: 16 * 1024,
            avg_interarrival: 400_000,
            duration: 4_000_000_000,
        }),
        seed,
        ..RunConfig::default()
    };
    c.sim.suspension = suspension;
    c
}

fn per_block(log: &[ExecutedErase]) -> BTreeMap<u32, Vec<Vec<ExecutedLoop>>> {
    let mut m: BTreeMap<u32, Vec<Vec<ExecutedLoop>>> = BTreeMap::new();
    for e in log {
        m.entry(e.block).or_default().push(e.loops.clone());
    }
    m
}

fn fingerprint(o: &SimOutput) -> String {
    serde_json::to_string(&(&o.report, &o.records, &o.erase_log)).unwrap()
}

#[test]
fn same_inputs_same_bytes() {
    let a = config(true, 3).simulate().unwrap();
    let b = config(true, 3).simulate().unwrap();
    assert_eq!(fingerprint(&a), fingerprint(&b));
    let c = config(true, 4).simulate().unwrap();
    assert_ne!(fingerprint(&a), fingerprint(&c));
}

#[test]
fn every_request_reported_once_and_time_moves_forward() {
    let cfg = config(true, 5);
    let ftl = cfg.build_ftl().unwrap();
    let n = cfg.load_requests(ftl.logical_capacity()).unwrap().len();
    let out = cfg.simulate().unwrap();
    assert!(cfg!(debug_assertions), "the event loop asserts its clock only in debug builds");
    assert_eq!(out.report.requests, n);
    let ids: Vec<u64> = out.records.iter().map(|r| r.request_id).collect();
    assert_eq!(ids, (0..n as u64).collect::<Vec<_>>());
    for r in &out.records {
        assert!(r.arrival_ns + r.latency_ns <= out.report.end_ns);
    }
    for w in out.erase_log.windows(2) {
        assert!(w[0].end <= w[1].end);
    }
    assert!(out.erase_log.iter().all(|e| e.start <= e.end));
    assert!(out.report.erases.count > 0);
    assert_eq!(out.report.erases.count, out.report.ftl.erases);
    assert_eq!(out.erase_log.len() as u64, out.report.erases.count);
}

#[test]
fn suspension_leaves_erase_physics_alone() {
    let on = config(true, 6).simulate().unwrap();
    let off = config(false, 6).simulate().unwrap();
    assert!(on.report.erases.suspensions > 0);
    assert_eq!(off.report.erases.suspensions, 0);
    assert_eq!(per_block(&on.erase_log), per_block(&off.erase_log));
}

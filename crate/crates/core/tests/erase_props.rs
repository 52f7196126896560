use aerosim::analytics::allowed_deficits;
use aerosim::chip::{ChipModel, ChipParams, Geometry};
use aerosim::erase::{EraseEngine, EraseOutcome, EraseTimingTable, Mispredictor, Scheme};
use proptest::prelude::*;

fn chip(blocks: u32, seed: u64, pec: u32) -> ChipModel {
    let mut p = ChipParams::shipped();
    p.geometry = Geometry { planes_per_chip: 1, blocks_per_plane: blocks, ..Geometry::desk() };
    let mut c = ChipModel::new(p, seed).unwrap();
    for b in 0..blocks {
        c.set_wear(b, pec, 0.0).unwrap();
    }
    c
}

fn engine(scheme: Scheme, blocks: u32, rate: f64) -> EraseEngine {
    EraseEngine::new(scheme, blocks, EraseTimingTable::shipped(), Mispredictor { rate, seed: 5 })
}

/// Quanta credited at each ladder level, replayed one quantum at a time.
fn per_level_credit(out: &EraseOutcome, target: u32, quantum: u64) -> Vec<u32> {
    let mut credit = vec![0u32; 6];
    let mut consumed = 0;
    for l in &out.loops {
        for _ in 0..l.pulse / quantum {
            if consumed < target && consumed < 7 * l.level {
                consumed += 1;
                credit[l.level as usize] += 1;
            }
        }
    }
    credit
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn aggressive_not_slower_than_conservative(seed in 0u64..5000, pec in 0u32..=8000) {
        let t_vr = ChipParams::shipped().timing.t_vr;
        let run = |s| {
            let mut c = chip(1, seed, pec);
            engine(s, 1, 0.0).erase(&mut c, 0).unwrap()
        };
        let (aggr, cons, base) = (run(Scheme::Aero), run(Scheme::AeroCons), run(Scheme::Baseline));
        prop_assert!(aggr.total_latency <= cons.total_latency);
        // one verify per loop, as in the closed-form latency; the probe's own verify is extra
        let probe_vr = if cons.shallow { t_vr } else { 0 };
        prop_assert!(cons.total_latency - probe_vr <= base.total_latency,
            "cons {} base {}", cons.total_latency, base.total_latency);
    }

    #[test]
    fn baseline_and_fine_grained_consume_the_same_ledger(seed in 0u64..5000, pec in 0u32..=8000) {
        let q = ChipParams::shipped().timing.quantum;
        let mut a = chip(1, seed, pec);
        let mut b = a.clone();
        let base = engine(Scheme::Baseline, 1, 0.0).erase(&mut a, 0).unwrap();
        let fine = engine(Scheme::MIspe, 1, 0.0).erase(&mut b, 0).unwrap();
        prop_assert_eq!(base.completed, fine.completed);
        let target = a.block(0).unwrap().target;
        prop_assert_eq!(target, b.block(0).unwrap().target);
        prop_assert_eq!(per_level_credit(&base, target, q), per_level_credit(&fine, target, q));
    }
}

#[test]
fn completion_and_deficit_rules() {
    let p = ChipParams::shipped();
    let allowed = allowed_deficits(&p, p.rber.requirement);
    let conservative = [Scheme::Baseline, Scheme::MIspe, Scheme::IIspe, Scheme::Dpes, Scheme::AeroCons];
    for pec in (0..=6000).step_by(500) {
        let mut checked = 0;
        for s in conservative.into_iter().chain([Scheme::Aero]) {
            let mut c = chip(64, 11, pec);
            let mut e = engine(s, 64, 0.0);
            for round in 0..3 {
                for b in 0..64 {
                    let out = e.erase(&mut c, b).unwrap();
                    c.set_wear(b, pec + round, 0.0).unwrap();
                    if !out.completed {
                        continue;
                    }
                    checked += 1;
                    if out.deficit_quanta == 0 {
                        assert!(out.final_fail().unwrap() <= p.failbits.f_pass || s == Scheme::Aero);
                    } else {
                        assert_eq!(s, Scheme::Aero, "{s} left a deficit");
                        let row = out.ispe_loops().max(1) as usize - 1;
                        assert!(out.deficit_quanta <= allowed[row], "deficit {} in row {}", out.deficit_quanta, row + 1);
                    }
                }
            }
        }
        assert!(checked > 0);
    }
}

#[test]
fn shallow_flag_clears_once_and_for_good() {
    let t = ChipParams::shipped().timing;
    for pec in [0, 500, 1000, 2000] {
        let mut c = chip(128, 3, pec);
        let mut e = engine(Scheme::AeroCons, 128, 0.0);
        for _ in 0..6 {
            for b in 0..128 {
                let before = e.sef().shallow(b);
                let out = e.erase(&mut c, b).unwrap();
                let after = e.sef().shallow(b);
                assert!(before || !after, "flag came back on block {b}");
                if before {
                    let first = out.loops[0].pulse;
                    let remainder = out.loops.get(1).filter(|l| l.level == 1 && !l.retry).map_or(0, |l| l.pulse);
                    let expect_clear = remainder > 0 && first + remainder >= t.t_ep_default;
                    assert_eq!(!after, expect_clear, "block {b} pulses {first} + {remainder}");
                }
            }
        }
    }
}

#[test]
fn injected_mispredictions_match_the_rate() {
    let rate = 0.2;
    let mut c = chip(100, 9, 500);
    let mut e = engine(Scheme::AeroCons, 100, rate);
    let (mut extra, mut predictions) = (0u64, 0u64);
    for _ in 0..100 {
        for b in 0..100 {
            let out = e.erase(&mut c, b).unwrap();
            extra += out.mispredictions as u64;
            predictions += out.predictions as u64;
        }
    }
    let p = extra as f64 / predictions as f64;
    let sigma = (rate * (1.0 - rate) / predictions as f64).sqrt();
    assert!((p - rate).abs() <= 3.0 * sigma, "observed {p} over {predictions} predictions");
}

use aerosim::chip::{ChipModel, ChipParams, Geometry};
use aerosim::erase::{EraseEngine, EraseTimingTable, Mispredictor, Scheme};
use aerosim::ftl::{Ftl, GcConfig};
use proptest::prelude::*;

fn geometry(planes: u32, blocks: u32, pages: u32) -> Geometry {
    Geometry { planes_per_chip: planes, blocks_per_plane: blocks, pages_per_block: pages, ..Geometry::desk() }
}

fn ftl(scheme: Scheme, geo: Geometry, seed: u64) -> Ftl {
    let mut p = ChipParams::shipped();
    p.geometry = geo;
    let blocks = p.geometry.blocks();
    let chip = ChipModel::new(p, seed).unwrap();
    let engine = EraseEngine::new(scheme, blocks, EraseTimingTable::shipped(), Mispredictor::none());
    Ftl::new(chip, engine, GcConfig::default()).unwrap()
}

fn total_stress(f: &Ftl) -> f64 {
    f.chip().blocks().iter().map(|b| b.stress).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn live_pages_match_valid_pages(
        seed in 0u64..1000,
        ops in prop::collection::vec((any::<bool>(), 0u32..10_000), 1..3000),
    ) {
        let mut f = ftl(Scheme::Aero, geometry(2, 16, 16), seed);
        let n = f.logical_pages();
        for (write, x) in ops {
            let lpn = x % n;
            if write {
                f.host_write(lpn).unwrap();
            } else {
                f.host_read(lpn).unwrap();
            }
        }
        prop_assert_eq!(f.valid_pages(), f.live_lpns());
        prop_assert_eq!(f.check_consistency(), Some(f.live_lpns()));
    }
}

#[test]
fn collection_keeps_up_with_overwrites() {
    let mut f = ftl(Scheme::Baseline, geometry(2, 16, 16), 4);
    let n = f.logical_pages();
    let planes = f.geometry().planes();
    let mut x = 12345u64;
    for _ in 0..20 * n {
        x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        f.host_write(((x >> 33) % n as u64) as u32).unwrap();
        for p in 0..planes {
            assert!(f.free_blocks(p) >= 1, "plane {p} ran dry");
        }
    }
    let s = f.stats();
    assert!(s.gc_runs > 0 && s.erases >= s.gc_runs);
    assert_eq!(f.check_consistency(), Some(f.live_lpns()));
}

#[test]
fn strided_aging_tracks_full_replay() {
    for scheme in [Scheme::Baseline, Scheme::Aero] {
        for (pec, stride) in [(1000, 10), (3000, 50)] {
            let mut exact = ftl(scheme, geometry(4, 8, 16), 21);
            let mut fast = ftl(scheme, geometry(4, 8, 16), 21);
            exact.precondition(0.5, pec, 1).unwrap();
            fast.precondition(0.5, pec, stride).unwrap();
            let (a, b) = (total_stress(&exact), total_stress(&fast));
            assert!((a - b).abs() <= 0.01 * a, "{scheme} pec {pec} stride {stride}: {a} vs {b}");
            assert!(fast.chip().blocks().iter().all(|b| b.pec == pec));
        }
    }
}

#[test]
fn one_flag_bit_per_block() {
    for blocks in [1, 7, 8, 9, 63, 1025] {
        let f = ftl(Scheme::Aero, geometry(1, blocks, 4), 1);
        assert_eq!(f.snapshot().sef_bytes, blocks.div_ceil(8) as usize, "{blocks} blocks");
    }
}

use aerosim::units::NS_PER_MS;
use aerosim::workload::{
    moments, parse_msrc, parse_normalized, synth, write_normalized, IoKind, IoRequest, ParseOptions, SynthParams,
};
use proptest::prelude::*;

const SNIPPET: &str = include_str!("data/msrc_hm_snippet.csv");

fn round_trip(reqs: &[IoRequest]) -> Vec<IoRequest> {
    let mut buf = Vec::new();
    write_normalized(&mut buf, reqs).unwrap();
    parse_normalized(buf.as_slice(), "mem").unwrap()
}

fn stream() -> impl Strategy<Value = Vec<IoRequest>> {
    prop::collection::vec((0u64..1_000_000, any::<bool>(), 0u64..1 << 40, 1u64..1 << 20), 0..200).prop_map(|v| {
        let mut t = 0;
        v.into_iter()
            .map(|(gap, read, offset, size)| {
                t += gap;
                let kind = if read { IoKind::Read } else { IoKind::Write };
                IoRequest { arrival: t, kind, offset, size }
            })
            .collect()
    })
}

fn gaps(reqs: &[IoRequest]) -> Vec<u64> {
    reqs.windows(2).map(|w| w[1].arrival - w[0].arrival).collect()
}

proptest! {
    #[test]
    fn normalized_streams_survive_a_round_trip(reqs in stream()) {
        prop_assert_eq!(round_trip(&reqs), reqs);
    }
}

#[test]
fn parsed_trace_survives_a_round_trip() {
    let reqs = parse_msrc(SNIPPET.as_bytes(), "snippet", &ParseOptions::msrc_default()).unwrap();
    assert_eq!(reqs.len(), 20_000);
    assert_eq!(round_trip(&reqs), reqs);
}

#[test]
fn acceleration_divides_every_gap() {
    let at = |accel| parse_msrc(SNIPPET.as_bytes(), "snippet", &ParseOptions { accel, disk: None }).unwrap();
    let base = gaps(&at(1.0));
    // factors that divide the 100 ns tick leave no rounding
    for k in [2u64, 4, 5, 10, 20, 25, 50, 100] {
        let g = gaps(&at(k as f64));
        assert!(g.iter().zip(&base).all(|(a, b)| a * k == *b), "factor {k}");
    }
    for k in [3.0, 7.5, 1000.0] {
        let scaled = at(k);
        let orig = at(1.0);
        for (s, o) in scaled.iter().zip(&orig) {
            assert!((s.arrival as f64 - o.arrival as f64 / k).abs() <= 0.5, "factor {k}");
        }
    }
}

#[test]
fn synthetic_moments_hit_their_targets() {
    for (seed, params) in [
        (1, SynthParams::ali_e(0)),
        (2, SynthParams { read_ratio: 0.3, avg_size: 64 * 1024, avg_interarrival: 250_000, duration: 0 }),
    ] {
        let params = SynthParams { duration: params.avg_interarrival * 100_000, ..params };
        let reqs = synth(&params, 1 << 36, seed).unwrap();
        let m = moments(&reqs);
        assert!(m.count >= 95_000, "{} requests", m.count);
        let within = |got: f64, want: f64| (got - want).abs() <= 0.02 * want;
        assert!(within(m.read_ratio, params.read_ratio), "read ratio {}", m.read_ratio);
        assert!(within(m.mean_size, params.avg_size as f64), "mean size {}", m.mean_size);
        let gap_ms = params.avg_interarrival as f64 / NS_PER_MS as f64;
        assert!(within(m.mean_interarrival_ms, gap_ms), "gap {}", m.mean_interarrival_ms);
    }
}

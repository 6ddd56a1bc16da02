use movseq::signal::{
    ingest_session, resample_uniform, slice_session, write_wide_csv, Condition, Direction, InputFormat, SessionMeta,
    Units,
};
use movseq::synth::{generate_profile, generate_session};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn slices_partition_the_session(seed in 0u64..10_000, duration in 60.0f64..200.0, window in 20.0f64..60.0) {
        let p = generate_profile("P07", seed);
        let s = generate_session(&p, Condition::B, duration, seed).unwrap();
        let slices = slice_session(&s, window).unwrap();
        prop_assert_eq!(slices[0].start, 0.0);
        for (i, sl) in slices.iter().enumerate() {
            prop_assert_eq!(sl.index, i);
            prop_assert_eq!(&sl.participant_id, "P07");
            prop_assert_eq!(sl.condition, Condition::B);
            prop_assert!(sl.window() >= 0.6 * window - 1e-9 && sl.window() <= window + 1e-9);
            for ch in sl.channels.values() {
                prop_assert!(ch.times.iter().all(|t| *t >= sl.start && *t < sl.end));
            }
        }
        for w in slices.windows(2) {
            prop_assert_eq!(w[0].end, w[1].start);
        }
        // Every sample before the last kept boundary lands in exactly one slice.
        let end = slices.last().unwrap().end;
        let total: usize = slices.iter().map(|sl| sl.channel(Direction::AccelZ).unwrap().len()).sum();
        let expected = s.channel(Direction::AccelZ).unwrap().times.iter().filter(|t| **t < end).count();
        prop_assert_eq!(total, expected);
    }
}

#[test]
fn uniform_input_resamples_to_itself() {
    use movseq::signal::{ChannelSeries, SessionRecording};
    use std::collections::BTreeMap;
    let n = 1500;
    let times: Vec<f64> = (0..n).map(|k| k as f64 / 25.0).collect();
    let mut channels = BTreeMap::new();
    for (j, d) in Direction::ANALYSIS.into_iter().enumerate() {
        let values: Vec<f64> = times.iter().map(|t| (t * (j + 1) as f64).sin()).collect();
        channels.insert(d, ChannelSeries::new(d, times.clone(), values));
    }
    let rec = SessionRecording {
        participant_id: "P01".into(),
        condition: Condition::NB,
        brace_type: None,
        channels,
    };
    let sl = &slice_session(&rec, 50.0).unwrap()[0];
    for d in Direction::ANALYSIS {
        let u = resample_uniform(sl, d, 25.0).unwrap();
        assert_eq!(u.len(), 1250);
        assert_eq!(u.values, sl.channel(d).unwrap().values);
    }
}

#[test]
fn wide_csv_round_trip() {
    let p = generate_profile("P02", 3);
    let s = generate_session(&p, Condition::NB, 70.0, 9).unwrap();
    let mut buf = Vec::new();
    write_wide_csv(&s, &mut buf).unwrap();
    let meta = SessionMeta {
        participant_id: "P02".into(),
        condition: Condition::NB,
        brace_type: s.brace_type,
        units: Units::default(),
        provenance: Default::default(),
    };
    let back = ingest_session(buf.as_slice(), InputFormat::WideCsv, Some(&meta)).unwrap();
    assert_eq!(back, s);
}

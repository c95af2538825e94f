use poseguard_core::detector::{detect, DetectionResult, DetectorParams};
use poseguard_core::session::AngleSeries;
use poseguard_core::synth::brute_force_detect;
use proptest::prelude::*;

/// Angles on a 1/8 grid so sums stay exact.
fn series_strategy() -> impl Strategy<Value = Vec<Option<[f64; 3]>>> {
    let row = prop_oneof![
        1 => Just(None),
        9 => (-320i32..320, -320i32..320, -160i32..160)
            .prop_map(|(y, p, r)| Some([y as f64 / 8.0, p as f64 / 8.0, r as f64 / 8.0])),
    ];
    prop::collection::vec(row, 20..600)
}

fn with_burst(mut rows: Vec<Option<[f64; 3]>>, at: usize, len: usize) -> Vec<Option<[f64; 3]>> {
    let n = rows.len();
    for v in rows.iter_mut().skip(at % n).take(len).flatten() {
        v[0] += 120.0;
    }
    rows
}

fn spans(r: &DetectionResult) -> Vec<(f64, f64, Vec<String>)> {
    r.events
        .iter()
        .map(|e| {
            let attr = e
                .attribution
                .iter()
                .flatten()
                .map(|a| a.name().to_string())
                .collect();
            (e.start, e.end, attr)
        })
        .collect()
}

fn params_strategy() -> impl Strategy<Value = DetectorParams> {
    (0.5f64..4.0, 1u32..40, 0u32..3, 0.0f64..1.0).prop_map(|(n, w, s, cov)| {
        let stride = match s {
            0 => 1,
            1 => (w / 2).max(1),
            _ => w,
        };
        DetectorParams {
            min_window_coverage: cov,
            ..DetectorParams::new(n, w).with_stride(stride)
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn matches_brute_force(rows in series_strategy(), at in 0usize..600, len in 0usize..80, params in params_strategy()) {
        let series = AngleSeries::from_angles("p", 30.0, with_burst(rows, at, len)).unwrap();
        let fast = detect(&series, &params);
        let slow = brute_force_detect(&series, &params);
        match (fast, slow) {
            (Ok(f), Ok(s)) => {
                prop_assert_eq!(f.window_count, s.window_count);
                prop_assert_eq!(f.flagged_window_count, s.flagged_window_count);
                prop_assert_eq!(spans(&f), spans(&s));
            }
            (Err(_), Err(_)) => {}
            (f, s) => prop_assert!(false, "fast {:?} vs brute force {:?}", f.is_ok(), s.is_ok()),
        }
    }

    #[test]
    fn shift_and_scale_equivariant(rows in series_strategy(), at in 0usize..600, len in 1usize..80,
                                   params in params_strategy(), shift in -50i32..50, scale_pow in -2i32..3) {
        let rows = with_burst(rows, at, len);
        let base = AngleSeries::from_angles("p", 30.0, rows.clone()).unwrap();
        let k = 2f64.powi(scale_pow);
        let moved = AngleSeries::from_angles(
            "p",
            30.0,
            rows.iter().map(|r| r.map(|v| v.map(|x| (x + shift as f64) * k))),
        ).unwrap();
        if let (Ok(a), Ok(b)) = (detect(&base, &params), detect(&moved, &params)) {
            prop_assert_eq!(spans(&a), spans(&b));
        }
    }

    #[test]
    fn raising_n_never_adds_flags(rows in series_strategy(), at in 0usize..600, len in 1usize..80,
                                  params in params_strategy(), bump in 0.01f64..2.0) {
        let series = AngleSeries::from_angles("p", 30.0, with_burst(rows, at, len)).unwrap();
        let strict = DetectorParams { n: params.n + bump, ..params };
        if let (Ok(lo), Ok(hi)) = (detect(&series, &params), detect(&series, &strict)) {
            prop_assert!(hi.flagged_window_count <= lo.flagged_window_count);
            prop_assert!(hi.flagged_duration() <= lo.flagged_duration() + 1e-9);
            for e in &hi.events {
                prop_assert!(lo.events.iter().any(|l| l.start <= e.start && e.end <= l.end));
            }
        }
    }

    #[test]
    fn events_sorted_disjoint_and_in_range(rows in series_strategy(), at in 0usize..600, len in 1usize..80,
                                           params in params_strategy()) {
        let series = AngleSeries::from_angles("p", 30.0, with_burst(rows, at, len)).unwrap();
        if let Ok(r) = detect(&series, &params) {
            let end = series.len() as f64 / 30.0;
            for e in &r.events {
                prop_assert!(0.0 <= e.start && e.start < e.end && e.end <= end + 1e-9);
                prop_assert!(e.attribution.as_ref().is_some_and(|a| !a.is_empty()));
            }
            for p in r.events.windows(2) {
                prop_assert!(p[0].end <= p[1].start);
            }
        }
    }
}

#[test]
fn sustained_deviation_localized() {
    let mut yaw = vec![0.0; 300];
    for (i, v) in yaw.iter_mut().enumerate() {
        *v = if i % 2 == 0 { 1.0 } else { -1.0 };
    }
    for v in &mut yaw[150..180] {
        *v += 20.0;
    }
    let series = AngleSeries::from_yaw("s", 30.0, &yaw).unwrap();
    let r = detect(&series, &DetectorParams::new(2.0, 10)).unwrap();
    assert_eq!(r.events.len(), 1);
    let e = &r.events[0];
    assert!(e.start >= 140.0 / 30.0 && e.end <= 190.0 / 30.0, "{e:?}");
}

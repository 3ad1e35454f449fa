use proptest::prelude::*;
use volskew::experiments::{csv_columns, run};
use volskew::{ExperimentConfig, ExperimentId, Ladder, ModelConfig, Report};

fn small(experiment: ExperimentId) -> ExperimentConfig {
    let mut c = ExperimentConfig::preset(experiment);
    c.n_paths = 3_000;
    c.n_steps = 16;
    c.ladder = Ladder::Geometric {
        first: 0.01,
        last: 0.25,
        points: 6,
    };
    if let ModelConfig::RoughBergomi(p) = &mut c.model {
        p.hurst = 0.3;
    }
    c
}

#[test]
fn every_csv_row_matches_the_header() {
    for id in [
        ExperimentId::SkewRatio,
        ExperimentId::SabrCurvature,
        ExperimentId::PowerLaw,
    ] {
        let report = run(&small(id)).unwrap();
        let csv = report.csv();
        let mut lines = csv.lines();
        let header: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(header, csv_columns(id));
        assert_eq!(lines.clone().count(), report.n_rows());
        for line in lines {
            assert_eq!(line.split(',').count(), header.len(), "{line}");
        }
        assert!(report.svg().unwrap().contains("<polyline"));
    }
}

#[test]
fn results_do_not_depend_on_the_thread_count() {
    let config = small(ExperimentId::PowerLaw);
    let on = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run(&config).unwrap().csv())
    };
    assert_eq!(on(1), on(3));
}

#[test]
fn sabr_table_is_analytic() {
    let Report::SabrCurvature(r) = run(&ExperimentConfig::preset(ExperimentId::SabrCurvature)).unwrap() else {
        panic!("wrong report kind");
    };
    assert!((r.rows[0].gap - r.gap_limit).abs() < 1e-3 * r.gap_limit);
    assert_eq!(r.ratio_limit, None);
}

#[test]
fn config_round_trips_through_json() {
    for id in [
        ExperimentId::SkewRatio,
        ExperimentId::SabrCurvature,
        ExperimentId::PowerLaw,
    ] {
        let c = ExperimentConfig::preset(id);
        assert_eq!(ExperimentConfig::from_json(&c.to_json()).unwrap(), c);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn skew_ratio_csv_is_reproducible(seed in 0u64..1_000) {
        let mut c = small(ExperimentId::SkewRatio);
        c.seed = seed;
        c.n_paths = 500;
        prop_assert_eq!(run(&c).unwrap().csv(), run(&c).unwrap().csv());
    }
}

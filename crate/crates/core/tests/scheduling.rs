use edgesense::sched::{
    clpa_assign, clpa_assignment, min_interval_assign, qlbs_decide, qlbs_train, Policy, QState,
    RewardWeights, TrainConfig, TrainMode, DEFAULT_A_MAX,
};
use edgesense::sim::{run_sim, Classifier};
use edgesense::trace::{
    complete_durations, generate_trace, ClassCatalog, ClassId, EventTrace, TraceProfile,
};
use proptest::prelude::*;

fn slack_ok(durations: &[usize], period: usize, cl: usize) -> bool {
    durations
        .iter()
        .all(|&d| d.div_ceil(period) * period - d <= cl)
}

/// Largest feasible period in `2..=min(T_e)`, found by scanning all of them.
fn brute_force(durations: &[usize], cl: usize) -> Option<usize> {
    let hi = *durations.iter().min()?;
    (2..=hi).filter(|&p| slack_ok(durations, p, cl)).max()
}

fn kitchen(seed: u64, cl: usize) -> (EventTrace, ClassCatalog) {
    let profile = TraceProfile::kitchen();
    let trace = generate_trace(seed, 7000, &profile).unwrap();
    (trace, ClassCatalog::uniform(&profile, cl))
}

#[test]
fn clpa_on_kitchen_trace_matches_exhaustive_search() {
    for cl in [0, 2, 5, 9, 20] {
        let (trace, catalog) = kitchen(3, cl);
        let durations = complete_durations(&trace);
        let assignment = clpa_assignment(&durations, &catalog);
        for (c, ds) in durations.iter().enumerate() {
            let expected = brute_force(ds, cl).unwrap_or(2);
            assert_eq!(
                assignment.get(c as ClassId),
                Some(expected),
                "class {c} cl {cl}"
            );
        }
    }
}

#[test]
fn min_interval_is_class_minimum() {
    let (trace, _) = kitchen(4, 2);
    let durations = complete_durations(&trace);
    let a = min_interval_assign(&durations);
    for (c, ds) in durations.iter().enumerate() {
        assert_eq!(a.get(c as ClassId), ds.iter().copied().min());
    }
}

#[test]
fn trained_kitchen_table_meets_constraints() {
    let (trace, catalog) = kitchen(1, 9);
    let cfg = TrainConfig {
        seed: 1,
        ..TrainConfig::default()
    };
    let out = qlbs_train(&trace, &catalog, &cfg, &RewardWeights::default(), None).unwrap();
    assert_eq!(out.episodes_run(), 20_000);
    let a = qlbs_decide(&out.table, QState { class: 5, prev: 1 });
    assert!((1..=DEFAULT_A_MAX).contains(&a));
    let m = run_sim(
        &trace,
        &Policy::Qlbs(out.table),
        &catalog,
        Classifier::Oracle,
    );
    assert_eq!(m.cl_misses, 0);
}

#[test]
fn update_episode_count_falls_as_threshold_rises() {
    let (trace, catalog) = kitchen(2, 9);
    let w = RewardWeights::default();
    let base = TrainConfig {
        episodes: 300,
        seed: 2,
        ..TrainConfig::default()
    };
    let table = qlbs_train(&trace, &catalog, &base, &w, None).unwrap().table;
    let fresh = generate_trace(22, 3000, &TraceProfile::kitchen()).unwrap();
    let runs: Vec<usize> = [1.0, 0.1, 0.01, 0.001, 0.0]
        .iter()
        .map(|&theta| {
            let cfg = TrainConfig {
                mode: TrainMode::Update,
                theta,
                episodes: 2000,
                ..base.clone()
            };
            qlbs_train(&fresh, &catalog, &cfg, &w, Some(&table))
                .unwrap()
                .episodes_run()
        })
        .collect();
    for pair in runs.windows(2) {
        assert!(pair[0] <= pair[1], "{runs:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn clpa_is_feasible_and_maximal(
        durations in prop::collection::vec(1usize..=300, 1..=20),
        cl in 0usize..=5,
    ) {
        let got = clpa_assign(&durations, cl);
        prop_assert_eq!(got, brute_force(&durations, cl));
        if let Some(p) = got {
            prop_assert!(p >= 2);
            prop_assert!(slack_ok(&durations, p, cl));
        }
    }

    #[test]
    fn fixed_period_latency_is_below_period(
        seed in 0u64..1000,
        period in 1usize..40,
    ) {
        let profile = TraceProfile::kitchen();
        let trace = generate_trace(seed, 2000, &profile).unwrap();
        let catalog = ClassCatalog::uniform(&profile, 3);
        let m = run_sim(&trace, &Policy::Fixed(period), &catalog, Classifier::Oracle);
        prop_assert_eq!(m.transmissions, trace.len().div_ceil(period));
        prop_assert!(m.transitions.iter().all(|t| t.latency < period));
        prop_assert!(m.transitions.iter().all(|t| t.detect_t % period == 0));
        let events = trace.intervals().len();
        prop_assert!(m.transitions.len() + m.missed_events < events);
        let late = m.transitions.iter().filter(|t| t.latency > 3).count();
        prop_assert_eq!(m.cl_misses, late);
    }
}

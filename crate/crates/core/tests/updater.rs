use edgesense::openworld::{sample_blob, EvmModel, EvmParams};
use edgesense::rng;
use edgesense::sched::{
    qlbs_train, PeriodAssignment, Policy, RewardWeights, TrainConfig, DEFAULT_A_MAX,
};
use edgesense::trace::{durations_by_class, ClassCatalog, ClassId, EventInterval, EventTrace};
use edgesense::updater::{
    compute_samples_to_train, run_update_case_study, update_classifier, update_log_csv,
    update_scheduler, QlbsContext, SchedulerHistory, SchedulerKind, SchedulerUpdate,
    TrainCostModel, UpdateRequest, UpdateStatus,
};

fn alternating(durations: &[(ClassId, usize)], start: usize) -> Vec<EventInterval> {
    let mut t = start;
    durations
        .iter()
        .map(|&(class_id, duration)| {
            let iv = EventInterval {
                class_id,
                start: t,
                duration,
            };
            t += duration;
            iv
        })
        .collect()
}

fn brute_force(durations: &[usize], cl: usize) -> usize {
    let hi = *durations.iter().min().unwrap();
    (2..=hi)
        .filter(|&p| durations.iter().all(|&d| d.div_ceil(p) * p - d <= cl))
        .max()
        .unwrap_or(2)
}

fn blobs_model(seed: u64) -> EvmModel {
    let mut r = rng::stream(seed, "known");
    let mut xs = sample_blob(&mut r, &[0.0, 0.0], 1.0, 40);
    xs.extend(sample_blob(&mut r, &[10.0, 0.0], 1.0, 40));
    let ys: Vec<ClassId> = (0..80).map(|i| (i / 40) as ClassId).collect();
    EvmModel::fit(&xs, &ys, EvmParams::default()).unwrap()
}

fn new_class_samples(seed: u64, n: usize) -> Vec<Vec<f64>> {
    let mut r = rng::stream(seed, "new");
    sample_blob(&mut r, &[5.0, 12.0], 1.0, n)
}

#[test]
fn clpa_update_follows_shorter_fresh_events() {
    let catalog = ClassCatalog::new(vec!["a".into(), "b".into()], vec![2, 2]).unwrap();
    let previous: Vec<(ClassId, usize)> = [10, 20, 30, 20, 10, 40]
        .iter()
        .flat_map(|&d| [(0, d), (1, 24)])
        .collect();
    let previous = alternating(&previous, 0);
    let before = durations_by_class(&previous, 2);
    let old = brute_force(&before[0], 2);
    assert_eq!(old, 10);

    let fresh: Vec<(ClassId, usize)> = [6, 12, 18, 6, 12]
        .iter()
        .flat_map(|&d| [(0, d), (1, 24)])
        .collect();
    let fresh = EventTrace::from_intervals(&alternating(&fresh, 0), 2).unwrap();
    let history = SchedulerHistory {
        previous: &previous,
        fresh: &fresh,
    };
    let req = UpdateRequest::scheduler(SchedulerKind::Clpa);
    let SchedulerUpdate::Clpa(updated) = update_scheduler(&req, history, &catalog, None).unwrap()
    else {
        panic!("expected a CLPA assignment");
    };

    let mut union = previous.clone();
    union.extend(fresh.intervals());
    let all = durations_by_class(&union, 2);
    for c in 0..2 {
        assert_eq!(updated.get(c), Some(brute_force(&all[c as usize], 2)));
    }
    assert_eq!(updated.get(0), Some(4));
    assert!(updated.get(0).unwrap() < old);
}

#[test]
fn scheduler_update_waits_for_fresh_intervals() {
    let catalog = ClassCatalog::new(vec!["a".into(), "b".into()], vec![2, 2]).unwrap();
    let fresh: Vec<(ClassId, usize)> = (0..4).flat_map(|_| [(0, 8), (1, 8)]).collect();
    let fresh = EventTrace::from_intervals(&alternating(&fresh, 0), 2).unwrap();
    let history = SchedulerHistory {
        previous: &[],
        fresh: &fresh,
    };
    let req = UpdateRequest::scheduler(SchedulerKind::Clpa);
    let out = update_scheduler(&req, history, &catalog, None).unwrap();
    assert_eq!(out, SchedulerUpdate::Insufficient);
    assert_eq!(out.status(), UpdateStatus::Insufficient);
}

#[test]
fn qlbs_update_warm_starts_from_table() {
    let catalog = ClassCatalog::new(vec!["a".into(), "b".into()], vec![3, 3]).unwrap();
    let fresh: Vec<(ClassId, usize)> = (0..8).flat_map(|i| [(0, 12 + i), (1, 20)]).collect();
    let fresh = EventTrace::from_intervals(&alternating(&fresh, 0), 2).unwrap();
    let weights = RewardWeights::default();
    let cfg = TrainConfig {
        episodes: 300,
        seed: 2,
        ..TrainConfig::default()
    };
    let base = qlbs_train(&fresh, &catalog, &cfg, &weights, None)
        .unwrap()
        .table;

    let ctx = QlbsContext {
        table: &base,
        cfg: &cfg,
        weights: &weights,
    };
    let history = SchedulerHistory {
        previous: &[],
        fresh: &fresh,
    };
    let req = UpdateRequest::scheduler(SchedulerKind::Qlbs);
    let SchedulerUpdate::Qlbs(out) = update_scheduler(&req, history, &catalog, Some(ctx)).unwrap()
    else {
        panic!("expected a Q-learning outcome");
    };
    assert!(out.episodes_run() <= cfg.episodes);
    assert_eq!(out.table.a_max(), DEFAULT_A_MAX);
    assert!(update_scheduler(&req, history, &catalog, None).is_err());
}

#[test]
fn batch_and_incremental_updates_agree() {
    let model = blobs_model(1);
    let samples = new_class_samples(1, 30);
    let batch = model.update(&samples, 7).unwrap();
    let mut step = model.clone();
    for chunk in samples.chunks(4) {
        step = step.update(chunk, 7).unwrap();
    }
    assert_eq!(batch.num_extreme_vectors(), step.num_extreme_vectors());
    let mut r = rng::stream(9, "probe");
    for x in sample_blob(&mut r, &[5.0, 5.0], 6.0, 200) {
        assert_eq!(batch.predict(&x).unwrap(), step.predict(&x).unwrap());
    }
}

#[test]
fn single_window_respects_budget() {
    let model = blobs_model(2);
    let cost = TrainCostModel::linear(31.0).unwrap();
    let req = UpdateRequest::classifier(new_class_samples(2, 5), 7);
    let short = update_classifier(&model, &req, &cost, 30).unwrap();
    assert_eq!((short.trained, short.status), (0, UpdateStatus::Fail));
    assert_eq!(short.model, model);
    let long = update_classifier(&model, &req, &cost, 200).unwrap();
    assert_eq!((long.trained, long.status), (5, UpdateStatus::Success));
    assert!(long.model.contains_class(7));
}

#[test]
fn case_study_drains_one_sample_per_window() {
    let intervals: Vec<(ClassId, usize)> = (0..120).map(|i| ((i % 2) as ClassId, 40)).collect();
    let trace = EventTrace::from_intervals(&alternating(&intervals, 0), 2).unwrap();
    let policy = Policy::Clpa(PeriodAssignment::new(vec![Some(33), Some(33)]).unwrap());
    let cost = TrainCostModel::linear(31.0).unwrap();
    let queued = 100;
    let req = UpdateRequest::classifier(new_class_samples(3, queued), 7);
    let study = run_update_case_study(&trace, &policy, blobs_model(3), req, &cost).unwrap();

    let per_window = compute_samples_to_train(&cost, 33);
    assert_eq!(per_window, 1);
    assert!(study.remaining.is_empty());
    assert_eq!(study.log.len(), queued);
    let mut left = queued;
    for (i, e) in study.log.iter().enumerate() {
        assert_eq!(e.samples_trained, per_window.min(left));
        left -= e.samples_trained;
        assert_eq!(e.queue_remaining, left);
        let expected = if left == 0 {
            UpdateStatus::Success
        } else {
            UpdateStatus::Fail
        };
        assert_eq!(e.status, expected, "row {i}");
    }
    let wakes: Vec<usize> = study.decisions.iter().map(|d| d.wake_t).collect();
    assert!(study.log.iter().all(|e| !wakes.contains(&e.t)));
    assert_eq!(
        study.drained_at.map(|t| t + 1),
        study.log.last().map(|e| e.t)
    );
    assert!(study.model.contains_class(7));

    let csv = update_log_csv(&study.log);
    assert_eq!(csv.lines().count(), queued + 1);
    assert!(csv
        .lines()
        .nth(1)
        .unwrap()
        .ends_with(",classifier,1,99,fail"));
}

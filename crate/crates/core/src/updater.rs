//! Idle-time model updates.
//!
//! New-class samples wait in a queue and are folded into the classifier a
//! few at a time, only as many as the training-cost model says fit in the
//! current sleep period. Scheduler updates wait until every class has
//! enough fresh intervals, then rerun period assignment or continue
//! Q-learning from the existing table.

use std::fmt::Write as _;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::openworld::EvmModel;
use crate::sched::{
    clpa_assignment, qlbs_train, PeriodAssignment, Policy, QTable, RewardWeights, TrainConfig,
    TrainMode, TrainOutcome,
};
use crate::sim::{schedule, Classifier, SchedulerDecision};
use crate::trace::{durations_by_class, ClassCatalog, ClassId, EventInterval, EventTrace};

/// Fresh intervals required per class before a scheduler update.
pub const MIN_FRESH_INTERVALS: usize = 5;

/// Predicted training time `cost(n) = c_0 + c_1 n + c_2 n^2 + ...` seconds
/// for `n` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainCostModel {
    coefficients: Vec<f64>,
}

impl TrainCostModel {
    /// Coefficients from the constant term up. Every coefficient must be
    /// nonnegative, with at least one nonconstant term positive, so cost
    /// strictly increases with `n`.
    pub fn polynomial(coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::invalid("cost coefficients must be finite and >= 0"));
        }
        if !coefficients.iter().skip(1).any(|&c| c > 0.0) {
            return Err(Error::invalid("cost must grow with the number of samples"));
        }
        Ok(Self { coefficients })
    }

    pub fn linear(seconds_per_sample: f64) -> Result<Self> {
        Self::polynomial(vec![0.0, seconds_per_sample])
    }

    /// Linear model from the measured wall time of single-sample updates.
    pub fn calibrate(model: &EvmModel, samples: &[Vec<f64>], label: ClassId) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("calibration needs at least one sample"));
        }
        let start = Instant::now();
        for s in samples {
            model.update(std::slice::from_ref(s), label)?;
        }
        let per_sample = start.elapsed().as_secs_f64() / samples.len() as f64;
        Self::linear(per_sample.max(f64::MIN_POSITIVE))
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn cost(&self, n: usize) -> f64 {
        let n = n as f64;
        self.coefficients
            .iter()
            .rev()
            .fold(0.0, |acc, c| acc * n + c)
    }

    /// Time to train one sample.
    pub fn t_min(&self) -> f64 {
        self.cost(1)
    }
}

/// Largest `n` whose predicted training time fits in `t_sp` seconds.
pub fn compute_samples_to_train(cost: &TrainCostModel, t_sp: usize) -> usize {
    let budget = t_sp as f64;
    if budget < cost.t_min() {
        return 0;
    }
    let mut hi = 2usize;
    while cost.cost(hi) <= budget {
        hi *= 2;
    }
    let mut lo = hi / 2;
    // cost(lo) <= budget < cost(hi)
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if cost.cost(mid) <= budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateMode {
    Classifier,
    Scheduler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchedulerKind {
    Clpa,
    Qlbs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateRequest {
    pub mode: UpdateMode,
    /// Pending samples of the newly discovered class, oldest first.
    pub samples: Vec<Vec<f64>>,
    /// Model label the new class is trained under.
    pub label: ClassId,
    pub scheduler: SchedulerKind,
}

impl UpdateRequest {
    pub fn classifier(samples: Vec<Vec<f64>>, label: ClassId) -> Self {
        Self {
            mode: UpdateMode::Classifier,
            samples,
            label,
            scheduler: SchedulerKind::Clpa,
        }
    }

    pub fn scheduler(kind: SchedulerKind) -> Self {
        Self {
            mode: UpdateMode::Scheduler,
            samples: Vec::new(),
            label: 0,
            scheduler: kind,
        }
    }

    pub fn pending(&self) -> usize {
        self.samples.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateStatus {
    /// Queue drained or scheduler updated.
    Success,
    /// Work remains for a later idle window.
    Fail,
    /// Scheduler update skipped for lack of fresh intervals.
    Insufficient,
}

impl UpdateStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            UpdateStatus::Success => "success",
            UpdateStatus::Fail => "fail",
            UpdateStatus::Insufficient => "insufficient",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierUpdate {
    pub model: EvmModel,
    pub remaining: Vec<Vec<f64>>,
    pub trained: usize,
    pub status: UpdateStatus,
}

/// Train as many queued samples as fit in one `t_sp`-second idle window.
pub fn update_classifier(
    model: &EvmModel,
    req: &UpdateRequest,
    cost: &TrainCostModel,
    t_sp: usize,
) -> Result<ClassifierUpdate> {
    if req.mode != UpdateMode::Classifier {
        return Err(Error::invalid(
            "classifier update needs a classifier request",
        ));
    }
    let n = compute_samples_to_train(cost, t_sp).min(req.pending());
    let (batch, rest) = req.samples.split_at(n);
    let model = if batch.is_empty() {
        model.clone()
    } else {
        model.update(batch, req.label)?
    };
    Ok(ClassifierUpdate {
        model,
        remaining: rest.to_vec(),
        trained: n,
        status: if rest.is_empty() {
            UpdateStatus::Success
        } else {
            UpdateStatus::Fail
        },
    })
}

/// Interval history available to a scheduler update.
#[derive(Debug, Clone, Copy)]
pub struct SchedulerHistory<'a> {
    /// Intervals the current schedule was derived from.
    pub previous: &'a [EventInterval],
    /// Trace observed since then.
    pub fresh: &'a EventTrace,
}

/// Q-learning state carried into a scheduler update.
#[derive(Debug, Clone, Copy)]
pub struct QlbsContext<'a> {
    pub table: &'a QTable,
    pub cfg: &'a TrainConfig,
    pub weights: &'a RewardWeights,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SchedulerUpdate {
    Clpa(PeriodAssignment),
    Qlbs(TrainOutcome),
    Insufficient,
}

impl SchedulerUpdate {
    pub fn status(&self) -> UpdateStatus {
        match self {
            SchedulerUpdate::Insufficient => UpdateStatus::Insufficient,
            _ => UpdateStatus::Success,
        }
    }
}

pub fn update_scheduler(
    req: &UpdateRequest,
    history: SchedulerHistory<'_>,
    catalog: &ClassCatalog,
    qlbs: Option<QlbsContext<'_>>,
) -> Result<SchedulerUpdate> {
    if req.mode != UpdateMode::Scheduler {
        return Err(Error::invalid("scheduler update needs a scheduler request"));
    }
    let k = catalog.len().max(history.fresh.num_classes());
    let fresh = history.fresh.intervals();
    if durations_by_class(&fresh, k)
        .iter()
        .any(|d| d.len() < MIN_FRESH_INTERVALS)
    {
        return Ok(SchedulerUpdate::Insufficient);
    }
    match req.scheduler {
        SchedulerKind::Clpa => {
            let mut all = history.previous.to_vec();
            all.extend(fresh);
            Ok(SchedulerUpdate::Clpa(clpa_assignment(
                &durations_by_class(&all, k),
                catalog,
            )))
        }
        SchedulerKind::Qlbs => {
            let ctx = qlbs.ok_or_else(|| Error::invalid("qlbs update needs the current table"))?;
            let cfg = TrainConfig {
                mode: TrainMode::Update,
                ..ctx.cfg.clone()
            };
            let out = qlbs_train(history.fresh, catalog, &cfg, ctx.weights, Some(ctx.table))?;
            Ok(SchedulerUpdate::Qlbs(out))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UpdateLogEntry {
    /// First idle second of the window the update ran in.
    pub t: usize,
    pub mode: UpdateMode,
    pub samples_trained: usize,
    pub queue_remaining: usize,
    pub status: UpdateStatus,
}

pub fn update_log_csv(log: &[UpdateLogEntry]) -> String {
    let mut out = String::from("t,mode,samples_trained,queue_remaining,status\n");
    for e in log {
        let mode = match e.mode {
            UpdateMode::Classifier => "classifier",
            UpdateMode::Scheduler => "scheduler",
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            e.t,
            mode,
            e.samples_trained,
            e.queue_remaining,
            e.status.as_str()
        );
    }
    out
}

#[derive(Debug, Clone)]
pub struct CaseStudy {
    pub model: EvmModel,
    pub remaining: Vec<Vec<f64>>,
    pub log: Vec<UpdateLogEntry>,
    pub decisions: Vec<SchedulerDecision>,
    /// Wake time of the period in which the queue emptied.
    pub drained_at: Option<usize>,
}

/// Replay `policy` on `trace`, spending every sleep period on classifier
/// updates until the queue in `req` is empty.
///
/// Each sleep of `T_sp >= 2` seconds opens an idle window starting one
/// second after the wake, with a budget of `T_sp` seconds. One-second
/// periods leave no idle time and are skipped.
pub fn run_update_case_study(
    trace: &EventTrace,
    policy: &Policy,
    model: EvmModel,
    req: UpdateRequest,
    cost: &TrainCostModel,
) -> Result<CaseStudy> {
    if req.mode != UpdateMode::Classifier {
        return Err(Error::invalid("case study replays classifier updates"));
    }
    let mut model = model;
    let mut req = req;
    let mut log = Vec::new();
    let mut drained_at = None;
    let mut failure = None;
    let decisions = schedule(trace, policy, Classifier::Oracle, |d| {
        if failure.is_some() || req.samples.is_empty() || d.period < 2 {
            return;
        }
        match update_classifier(&model, &req, cost, d.period) {
            Ok(u) => {
                log.push(UpdateLogEntry {
                    t: d.wake_t + 1,
                    mode: UpdateMode::Classifier,
                    samples_trained: u.trained,
                    queue_remaining: u.remaining.len(),
                    status: u.status,
                });
                if u.status == UpdateStatus::Success {
                    drained_at = Some(d.wake_t);
                }
                model = u.model;
                req.samples = u.remaining;
            }
            Err(e) => failure = Some(e),
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let wakes: Vec<usize> = decisions.iter().map(|d| d.wake_t).collect();
    if let Some(e) = log.iter().find(|e| wakes.binary_search(&e.t).is_ok()) {
        return Err(Error::invalid(format!(
            "update at t={} overlaps a wake",
            e.t
        )));
    }
    Ok(CaseStudy {
        model,
        remaining: req.samples,
        log,
        decisions,
        drained_at,
    })
}

//! Replay a scheduling policy against a ground-truth trace.
//!
//! The device wakes at `t = 0`, observes a class, asks the policy for a
//! period and sleeps. Sensing and classification take no time beyond the
//! wake second. A boundary is detected at the first wake at or after it;
//! an event with no wake inside it is missed and contributes no latency.
//! The final event is cut off by the end of the trace, so it only counts
//! if a wake falls inside it.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::openworld::{extract_features, EvmModel, Prediction};
use crate::sched::Policy;
use crate::trace::{class_window, ClassCatalog, ClassId, EventTrace, WindowConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SchedulerDecision {
    pub wake_t: usize,
    pub period: usize,
    /// `None` when the classifier rejected the sample as unknown.
    pub observed: Option<ClassId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transition {
    pub boundary_t: usize,
    pub detect_t: usize,
    pub latency: usize,
    pub class_id: ClassId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimMetrics {
    pub policy: String,
    pub trace_len: usize,
    pub transmissions: usize,
    pub transitions: Vec<Transition>,
    pub cl_misses: usize,
    pub missed_events: usize,
}

impl SimMetrics {
    /// Wake count relative to waking every second.
    pub fn normalized_ble(&self) -> f64 {
        self.transmissions as f64 / self.trace_len as f64
    }

    pub fn total_latency(&self) -> usize {
        self.transitions.iter().map(|t| t.latency).sum()
    }

    /// Running latency sum, one entry per detected transition.
    pub fn cumulative_latency(&self) -> Vec<usize> {
        self.transitions
            .iter()
            .scan(0, |acc, t| {
                *acc += t.latency;
                Some(*acc)
            })
            .collect()
    }

    pub fn transitions_csv(&self) -> String {
        let mut out = String::from("boundary_t,detect_t,latency,class_id\n");
        for t in &self.transitions {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                t.boundary_t, t.detect_t, t.latency, t.class_id
            );
        }
        out
    }
}

pub fn metrics_csv(rows: &[SimMetrics]) -> String {
    let mut out =
        String::from("policy,transmissions,normalized_ble,cl_misses,missed_events,total_latency\n");
    for m in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            m.policy,
            m.transmissions,
            m.normalized_ble(),
            m.cl_misses,
            m.missed_events,
            m.total_latency()
        );
    }
    out
}

/// EVM classification of synthetic windows drawn at each wake.
#[derive(Debug, Clone)]
pub struct WindowClassifier {
    pub model: EvmModel,
    pub window: WindowConfig,
    pub seed: u64,
}

impl WindowClassifier {
    pub fn classify(&self, trace: &EventTrace, t: usize) -> Option<ClassId> {
        let w = class_window(trace.class_at(t), t, self.seed, &self.window);
        let x = extract_features(&w).expect("window config has >= 2 samples");
        match self.model.predict(&x.values) {
            Ok(Prediction::Known { class, .. }) => Some(class),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Classifier<'a> {
    /// Ground truth at the wake second.
    Oracle,
    OpenWorld(&'a WindowClassifier),
}

impl Classifier<'_> {
    fn observe(&self, trace: &EventTrace, t: usize) -> Option<ClassId> {
        match self {
            Classifier::Oracle => Some(trace.class_at(t)),
            Classifier::OpenWorld(c) => c.classify(trace, t),
        }
    }
}

/// The wake/sleep schedule produced by `policy` on `trace`.
///
/// `on_decision` sees every decision as it is made, before the device
/// sleeps; callers use it to schedule work into the idle period.
pub fn schedule(
    trace: &EventTrace,
    policy: &Policy,
    classifier: Classifier<'_>,
    mut on_decision: impl FnMut(&SchedulerDecision),
) -> Vec<SchedulerDecision> {
    let mut scheduler = policy.scheduler();
    let mut decisions = Vec::new();
    let mut t = 0;
    while t < trace.len() {
        let observed = classifier.observe(trace, t);
        let period = scheduler.decide(observed);
        let d = SchedulerDecision {
            wake_t: t,
            period,
            observed,
        };
        on_decision(&d);
        decisions.push(d);
        t += period;
    }
    decisions
}

/// Latency, miss and transmission metrics of a wake schedule.
pub fn evaluate(
    trace: &EventTrace,
    decisions: &[SchedulerDecision],
    catalog: &ClassCatalog,
    policy: impl Into<String>,
) -> SimMetrics {
    let wakes: Vec<usize> = decisions.iter().map(|d| d.wake_t).collect();
    let mut transitions = Vec::new();
    let (mut cl_misses, mut missed_events) = (0, 0);
    for iv in trace.intervals() {
        let first = wakes.partition_point(|&w| w < iv.start);
        let detect = wakes.get(first).copied().filter(|&w| w < iv.end());
        let Some(detect_t) = detect else {
            if iv.end() < trace.len() {
                missed_events += 1;
            }
            continue;
        };
        if iv.start == 0 {
            continue;
        }
        let latency = detect_t - iv.start;
        if latency > catalog.cl(iv.class_id) {
            cl_misses += 1;
        }
        transitions.push(Transition {
            boundary_t: iv.start,
            detect_t,
            latency,
            class_id: iv.class_id,
        });
    }
    SimMetrics {
        policy: policy.into(),
        trace_len: trace.len(),
        transmissions: decisions.len(),
        transitions,
        cl_misses,
        missed_events,
    }
}

pub fn run_sim(
    trace: &EventTrace,
    policy: &Policy,
    catalog: &ClassCatalog,
    classifier: Classifier<'_>,
) -> SimMetrics {
    let decisions = schedule(trace, policy, classifier, |_| {});
    evaluate(trace, &decisions, catalog, policy.name())
}

/// Simulate each policy on the same trace, using up to `jobs` threads.
pub fn compare_policies(
    trace: &EventTrace,
    policies: &[Policy],
    catalog: &ClassCatalog,
    jobs: usize,
) -> Result<Vec<SimMetrics>> {
    if policies.len() < 2 {
        return Err(Error::invalid("comparison needs at least two policies"));
    }
    let jobs = jobs.clamp(1, policies.len());
    if jobs == 1 {
        return Ok(policies
            .iter()
            .map(|p| run_sim(trace, p, catalog, Classifier::Oracle))
            .collect());
    }
    let mut out: Vec<Option<SimMetrics>> = vec![None; policies.len()];
    let chunk = policies.len().div_ceil(jobs);
    std::thread::scope(|s| {
        for (ps, slots) in policies.chunks(chunk).zip(out.chunks_mut(chunk)) {
            s.spawn(move || {
                for (p, slot) in ps.iter().zip(slots) {
                    *slot = Some(run_sim(trace, p, catalog, Classifier::Oracle));
                }
            });
        }
    });
    Ok(out
        .into_iter()
        .map(|m| m.expect("every slot filled"))
        .collect())
}

//! Sensing-period policies.
//!
//! A policy maps the class observed at a wake-up to the number of seconds
//! to sleep before the next wake-up. Class-level policies store one period
//! per class; the Q-learning scheduler also conditions on the previous
//! period.

mod clpa;
mod qlbs;

pub use clpa::{
    clpa_assign, clpa_assignment, clpa_slack, min_interval_assign, PeriodAssignment,
    FALLBACK_PERIOD,
};
pub use qlbs::{
    qlbs_decide, qlbs_take_action, qlbs_train, EpisodeRecord, QState, QTable, RewardWeights,
    StepOutcome, TraceEnv, TrainConfig, TrainMode, TrainOutcome, DEFAULT_A_MAX,
};

use crate::trace::ClassId;

/// A fully initialised scheduling policy.
#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    Fixed(usize),
    MinInterval(PeriodAssignment),
    Clpa(PeriodAssignment),
    Qlbs(QTable),
}

impl Policy {
    pub fn name(&self) -> String {
        match self {
            Policy::Fixed(p) => format!("fixed{p}"),
            Policy::MinInterval(_) => "min".to_string(),
            Policy::Clpa(_) => "clpa".to_string(),
            Policy::Qlbs(_) => "qlbs".to_string(),
        }
    }

    pub fn scheduler(&self) -> Scheduler<'_> {
        Scheduler {
            policy: self,
            prev: 1,
        }
    }
}

/// Per-run decision state for a [`Policy`].
#[derive(Debug, Clone)]
pub struct Scheduler<'a> {
    policy: &'a Policy,
    prev: usize,
}

impl Scheduler<'_> {
    /// Period to sleep after observing `class` (`None` when the classifier
    /// rejected the sample). Unknown classes fall back to a one-second period.
    pub fn decide(&mut self, class: Option<ClassId>) -> usize {
        let period = match (self.policy, class) {
            (Policy::Fixed(p), _) => *p,
            (_, None) => FALLBACK_PERIOD,
            (Policy::MinInterval(a) | Policy::Clpa(a), Some(c)) => a.decide(c),
            (Policy::Qlbs(q), Some(c)) => {
                if (c as usize) < q.num_classes() {
                    let prev = self.prev.clamp(1, q.a_max());
                    qlbs_decide(q, QState { class: c, prev })
                } else {
                    FALLBACK_PERIOD
                }
            }
        };
        self.prev = period;
        period.max(1)
    }
}

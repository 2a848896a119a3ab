//! Class-level period assignment and the minimum-class-interval baseline.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::trace::{ClassCatalog, ClassId};

/// Period used for classes without an assignment.
pub const FALLBACK_PERIOD: usize = 1;

/// Period used when no period `>= 2` meets the latency constraint; it is
/// what a constraint of one second always admits.
const INFEASIBLE_FALLBACK: usize = 2;

/// Detection delay of an event lasting `duration` seconds when sampled
/// every `period` seconds from its start.
pub fn clpa_slack(duration: usize, period: usize) -> usize {
    duration.div_ceil(period) * period - duration
}

/// Largest period `>= 2` whose slack stays within `cl` for every duration.
///
/// The search starts at the shortest duration and walks down. `None` means
/// infeasible: the caller should relax `cl`.
pub fn clpa_assign(durations: &[usize], cl: usize) -> Option<usize> {
    let shortest = *durations.iter().min()?;
    (2..=shortest)
        .rev()
        .find(|&p| durations.iter().all(|&d| clpa_slack(d, p) <= cl))
}

/// One optional period per class id.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PeriodAssignment {
    periods: Vec<Option<usize>>,
}

impl PeriodAssignment {
    pub fn new(periods: Vec<Option<usize>>) -> Result<Self> {
        if periods.iter().flatten().any(|&p| p < 1) {
            return Err(Error::invalid("periods must be >= 1"));
        }
        Ok(Self { periods })
    }

    pub fn get(&self, class: ClassId) -> Option<usize> {
        self.periods.get(class as usize).copied().flatten()
    }

    pub fn set(&mut self, class: ClassId, period: usize) {
        let idx = class as usize;
        if self.periods.len() <= idx {
            self.periods.resize(idx + 1, None);
        }
        self.periods[idx] = Some(period.max(1));
    }

    /// Stored period, or [`FALLBACK_PERIOD`] for classes never assigned.
    pub fn decide(&self, class: ClassId) -> usize {
        self.get(class).unwrap_or(FALLBACK_PERIOD)
    }

    pub fn periods(&self) -> &[Option<usize>] {
        &self.periods
    }

    /// Multiply every stored period by `factor`.
    pub fn scaled(&self, factor: usize) -> Self {
        Self {
            periods: self.periods.iter().map(|p| p.map(|p| p * factor)).collect(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("class_id,T_sp\n");
        for (c, p) in self.periods.iter().enumerate() {
            if let Some(p) = p {
                let _ = writeln!(out, "{c},{p}");
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == "class_id,T_sp" => {}
            _ => return Err(Error::parse(1, "expected header `class_id,T_sp`")),
        }
        let mut out = Self::default();
        for (idx, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (c, p) = line
                .split_once(',')
                .ok_or_else(|| Error::parse(idx + 1, "expected two columns"))?;
            let c: ClassId = c
                .trim()
                .parse()
                .map_err(|e| Error::parse(idx + 1, format!("class_id: {e}")))?;
            let p: usize = p
                .trim()
                .parse()
                .map_err(|e| Error::parse(idx + 1, format!("T_sp: {e}")))?;
            if p < 1 {
                return Err(Error::parse(idx + 1, "T_sp must be >= 1"));
            }
            out.set(c, p);
        }
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }
}

/// Run [`clpa_assign`] for every class. Infeasible classes get period 2;
/// classes with no observed durations stay unassigned.
pub fn clpa_assignment(
    durations_by_class: &[Vec<usize>],
    catalog: &ClassCatalog,
) -> PeriodAssignment {
    let periods = durations_by_class
        .iter()
        .enumerate()
        .map(|(c, ds)| {
            if ds.is_empty() {
                return None;
            }
            Some(clpa_assign(ds, catalog.cl(c as ClassId)).unwrap_or(INFEASIBLE_FALLBACK))
        })
        .collect();
    PeriodAssignment { periods }
}

/// Shortest observed duration per class.
pub fn min_interval_assign(durations_by_class: &[Vec<usize>]) -> PeriodAssignment {
    PeriodAssignment {
        periods: durations_by_class
            .iter()
            .map(|ds| ds.iter().copied().min())
            .collect(),
    }
}

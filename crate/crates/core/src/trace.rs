//! Ground-truth event traces at one-second resolution.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::config::KvConfig;
use crate::error::{Error, Result};
use crate::rng;

pub type ClassId = u16;

/// One class label per second, starting at `t = 0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventTrace {
    classes: Vec<ClassId>,
    num_classes: usize,
}

/// A maximal run of identical class labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EventInterval {
    pub class_id: ClassId,
    pub start: usize,
    pub duration: usize,
}

impl EventInterval {
    pub fn end(&self) -> usize {
        self.start + self.duration
    }
}

impl EventTrace {
    pub fn new(classes: Vec<ClassId>, num_classes: usize) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::invalid("trace must contain at least one second"));
        }
        if let Some(&bad) = classes.iter().find(|&&c| c as usize >= num_classes) {
            return Err(Error::invalid(format!(
                "class {bad} outside declared range 0..{num_classes}"
            )));
        }
        Ok(Self {
            classes,
            num_classes,
        })
    }

    /// Expand a sequence of intervals back into a per-second trace.
    pub fn from_intervals(intervals: &[EventInterval], num_classes: usize) -> Result<Self> {
        let mut classes = Vec::new();
        for iv in intervals {
            if iv.start != classes.len() || iv.duration == 0 {
                return Err(Error::invalid("intervals must be contiguous and nonempty"));
            }
            classes.extend(std::iter::repeat_n(iv.class_id, iv.duration));
        }
        Self::new(classes, num_classes)
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn class_at(&self, t: usize) -> ClassId {
        self.classes[t]
    }

    pub fn classes(&self) -> &[ClassId] {
        &self.classes
    }

    /// `(t, class_id)` pairs.
    pub fn entries(&self) -> impl Iterator<Item = (usize, ClassId)> + '_ {
        self.classes.iter().copied().enumerate()
    }

    /// Run-length encoding of the trace.
    pub fn intervals(&self) -> Vec<EventInterval> {
        intervals_of(self)
    }

    /// For each second, the exclusive end of the event containing it.
    pub fn event_ends(&self) -> Vec<usize> {
        let mut ends = vec![0; self.len()];
        for iv in self.intervals() {
            ends[iv.start..iv.end()].fill(iv.end());
        }
        ends
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.len() * 8 + 12);
        out.push_str("t,class_id\n");
        for (t, c) in self.entries() {
            let _ = writeln!(out, "{t},{c}");
        }
        out
    }

    /// Parse a `t,class_id` CSV. When `num_classes` is `None` it is inferred
    /// as one more than the largest label.
    pub fn from_csv(text: &str, num_classes: Option<usize>) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header.trim() == "t,class_id" => {}
            _ => return Err(Error::parse(1, "expected header `t,class_id`")),
        }
        let mut classes = Vec::new();
        for (idx, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (t, c) = line
                .split_once(',')
                .ok_or_else(|| Error::parse(idx + 1, "expected two columns"))?;
            let t: usize = t
                .trim()
                .parse()
                .map_err(|e| Error::parse(idx + 1, format!("t: {e}")))?;
            let c: ClassId = c
                .trim()
                .parse()
                .map_err(|e| Error::parse(idx + 1, format!("class_id: {e}")))?;
            if t != classes.len() {
                return Err(Error::parse(
                    idx + 1,
                    format!("expected t={}, got {t}", classes.len()),
                ));
            }
            classes.push(c);
        }
        let k = num_classes
            .unwrap_or_else(|| classes.iter().map(|&c| c as usize + 1).max().unwrap_or(0));
        Self::new(classes, k)
    }

    pub fn load(path: impl AsRef<Path>, num_classes: Option<usize>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text, num_classes)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

pub fn intervals_of(trace: &EventTrace) -> Vec<EventInterval> {
    let mut out: Vec<EventInterval> = Vec::new();
    for (t, c) in trace.entries() {
        match out.last_mut() {
            Some(last) if last.class_id == c => last.duration += 1,
            _ => out.push(EventInterval {
                class_id: c,
                start: t,
                duration: 1,
            }),
        }
    }
    out
}

/// Durations of every interval, grouped by class.
pub fn durations_by_class(intervals: &[EventInterval], num_classes: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); num_classes];
    for iv in intervals {
        if let Some(slot) = out.get_mut(iv.class_id as usize) {
            slot.push(iv.duration);
        }
    }
    out
}

/// Durations by class, leaving out the final interval, which may have
/// been cut short by the end of the trace.
pub fn complete_durations(trace: &EventTrace) -> Vec<Vec<usize>> {
    let mut ivs = trace.intervals();
    if ivs.len() > 1 {
        ivs.pop();
    }
    durations_by_class(&ivs, trace.num_classes())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassProfile {
    pub name: String,
    pub min: usize,
    pub max: usize,
    /// Relative weight when this class is drawn as the next event.
    pub weight: f64,
}

impl ClassProfile {
    pub fn new(name: impl Into<String>, min: usize, max: usize) -> Self {
        Self {
            name: name.into(),
            min,
            max,
            weight: 1.0,
        }
    }
}

/// Per-class duration ranges for [`generate_trace`].
#[derive(Debug, Clone, PartialEq)]
pub struct TraceProfile {
    pub classes: Vec<ClassProfile>,
}

pub const KITCHEN_CLASSES: [&str; 6] = [
    "None",
    "Microwave",
    "Kettle",
    "Faucet",
    "WasteDisposer",
    "VentFan",
];

impl TraceProfile {
    /// Six kitchen event classes with uniform dwell-time ranges in seconds.
    pub fn kitchen() -> Self {
        let ranges = [(20, 120), (30, 90), (60, 180), (5, 30), (5, 20), (60, 300)];
        Self {
            classes: KITCHEN_CLASSES
                .iter()
                .zip(ranges)
                .map(|(name, (lo, hi))| ClassProfile::new(*name, lo, hi))
                .collect(),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::invalid("profile has no classes"));
        }
        for (i, c) in self.classes.iter().enumerate() {
            if c.min < 1 {
                return Err(Error::invalid(format!(
                    "class {i}: min duration must be >= 1"
                )));
            }
            if c.min > c.max {
                return Err(Error::invalid(format!(
                    "class {i}: min {} > max {}",
                    c.min, c.max
                )));
            }
            if !(c.weight.is_finite() && c.weight > 0.0) {
                return Err(Error::invalid(format!(
                    "class {i}: weight must be positive"
                )));
            }
        }
        Ok(())
    }

    /// Overlay `classes`, `class.N.{name,min,max,weight}` keys on `self`.
    /// A `classes` key truncates or extends the class list; new classes
    /// must then supply `min` and `max`.
    pub fn apply_config(mut self, cfg: &KvConfig) -> Result<Self> {
        if let Some(k) = cfg.get_parsed::<usize>("classes")? {
            self.classes.truncate(k);
            while self.classes.len() < k {
                let i = self.classes.len();
                self.classes
                    .push(ClassProfile::new(format!("class{i}"), 0, 0));
            }
        }
        for (i, class) in self.classes.iter_mut().enumerate() {
            if let Some(name) = cfg.get(&format!("class.{i}.name")) {
                class.name = name.to_string();
            }
            if let Some(v) = cfg.get_parsed(&format!("class.{i}.min"))? {
                class.min = v;
            }
            if let Some(v) = cfg.get_parsed(&format!("class.{i}.max"))? {
                class.max = v;
            }
            if let Some(v) = cfg.get_parsed(&format!("class.{i}.weight"))? {
                class.weight = v;
            }
        }
        self.validate()?;
        Ok(self)
    }

    pub fn to_config(&self) -> KvConfig {
        let mut cfg = KvConfig::new();
        cfg.set("classes", self.classes.len());
        for (i, c) in self.classes.iter().enumerate() {
            cfg.set(format!("class.{i}.name"), &c.name);
            cfg.set(format!("class.{i}.min"), c.min);
            cfg.set(format!("class.{i}.max"), c.max);
            cfg.set(format!("class.{i}.weight"), c.weight);
        }
        cfg
    }
}

fn weighted_pick(rng: &mut impl Rng, weights: impl Iterator<Item = (usize, f64)> + Clone) -> usize {
    let total: f64 = weights.clone().map(|(_, w)| w).sum();
    let mut x = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, w) in weights {
        last = i;
        if x < w {
            return i;
        }
        x -= w;
    }
    last
}

/// Draw a random event trace of `length` seconds.
///
/// Durations are uniform integers in each class's range. After each
/// interval the next class is drawn by weight from the other classes, so
/// adjacent intervals never share a class. The final interval is cut at
/// `length` and may be shorter than its class minimum. A single-class
/// profile yields a constant trace.
pub fn generate_trace(seed: u64, length: usize, profile: &TraceProfile) -> Result<EventTrace> {
    profile.validate()?;
    if length < 1 {
        return Err(Error::invalid("trace length must be >= 1"));
    }
    let k = profile.num_classes();
    let mut rng = rng::stream(seed, "trace");
    let weights = |exclude: Option<usize>| {
        profile
            .classes
            .iter()
            .enumerate()
            .filter(move |(i, _)| Some(*i) != exclude)
            .map(|(i, c)| (i, c.weight))
    };

    let mut classes = Vec::with_capacity(length);
    let mut current = weighted_pick(&mut rng, weights(None));
    while classes.len() < length {
        let p = &profile.classes[current];
        let d = rng.random_range(p.min..=p.max).min(length - classes.len());
        classes.extend(std::iter::repeat_n(current as ClassId, d));
        if k > 1 {
            current = weighted_pick(&mut rng, weights(Some(current)));
        }
    }
    EventTrace::new(classes, k)
}

/// Names and per-class latency constraints (seconds).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassCatalog {
    pub names: Vec<String>,
    pub latency_constraints: Vec<usize>,
}

impl ClassCatalog {
    pub fn new(names: Vec<String>, latency_constraints: Vec<usize>) -> Result<Self> {
        if names.len() != latency_constraints.len() {
            return Err(Error::invalid(
                "catalog names and constraints differ in length",
            ));
        }
        Ok(Self {
            names,
            latency_constraints,
        })
    }

    /// Every class of `profile` with the same constraint.
    pub fn uniform(profile: &TraceProfile, cl: usize) -> Self {
        Self {
            names: profile.classes.iter().map(|c| c.name.clone()).collect(),
            latency_constraints: vec![cl; profile.num_classes()],
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Constraint for `class`; unknown classes get 0.
    pub fn cl(&self, class: ClassId) -> usize {
        self.latency_constraints
            .get(class as usize)
            .copied()
            .unwrap_or(0)
    }

    /// Overlay `class.N.cl` keys.
    pub fn apply_config(mut self, cfg: &KvConfig) -> Result<Self> {
        for (i, cl) in self.latency_constraints.iter_mut().enumerate() {
            if let Some(v) = cfg.get_parsed(&format!("class.{i}.cl"))? {
                *cl = v;
            }
        }
        Ok(self)
    }
}

/// Shape and signal parameters of synthetic sensor windows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowConfig {
    pub channels: usize,
    pub samples: usize,
    pub amplitude: f64,
    /// Mean offset added per class index, identical on every channel.
    pub offset_step: f64,
    pub noise_sd: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            channels: 4,
            samples: 32,
            amplitude: 1.0,
            offset_step: 1.0,
            noise_sd: 0.1,
        }
    }
}

impl WindowConfig {
    pub fn noiseless(self) -> Self {
        Self {
            noise_sd: 0.0,
            ..self
        }
    }

    /// FFT bin of the base sinusoid for `class` on `channel`, never DC.
    pub fn signature_bin(&self, class: ClassId, channel: usize) -> usize {
        let usable = (self.samples / 2).saturating_sub(1).max(1);
        1 + (class as usize * (channel + 1) + channel) % usable
    }

    pub fn signature_mean(&self, class: ClassId) -> f64 {
        class as f64 * self.offset_step
    }
}

/// A `channels × samples` block of raw readings for one second.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorWindow {
    pub timestamp: usize,
    pub channels: usize,
    pub samples: usize,
    /// Row-major, one row per channel.
    pub data: Vec<f64>,
}

impl SensorWindow {
    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * self.samples..(c + 1) * self.samples]
    }
}

/// Synthetic window of the event active at second `t`.
pub fn synthesize_window(
    trace: &EventTrace,
    t: usize,
    seed: u64,
    cfg: &WindowConfig,
) -> Result<SensorWindow> {
    if t >= trace.len() {
        return Err(Error::OutOfRange {
            t,
            len: trace.len(),
        });
    }
    Ok(class_window(trace.class_at(t), t, seed, cfg))
}

/// Synthetic window for `class` at timestamp `t`, independent of any trace.
pub fn class_window(class: ClassId, t: usize, seed: u64, cfg: &WindowConfig) -> SensorWindow {
    let w = cfg.samples;
    let mut data = Vec::with_capacity(cfg.channels * w);
    let mean = cfg.signature_mean(class);
    for ch in 0..cfg.channels {
        let bin = cfg.signature_bin(class, ch) as f64;
        data.extend((0..w).map(|s| {
            let phase = std::f64::consts::TAU * bin * s as f64 / w as f64;
            mean + cfg.amplitude * phase.sin()
        }));
    }
    if cfg.noise_sd > 0.0 {
        let mut rng = rng::substream(seed, "window", t as u64);
        let normal = Normal::new(0.0, cfg.noise_sd).expect("noise sd is positive");
        for v in &mut data {
            *v += normal.sample(&mut rng);
        }
    }
    SensorWindow {
        timestamp: t,
        channels: cfg.channels,
        samples: w,
        data,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_class(a: usize, b: usize) -> TraceProfile {
        TraceProfile {
            classes: vec![ClassProfile::new("a", a, a), ClassProfile::new("b", b, b)],
        }
    }

    #[test]
    fn kitchen_trace_has_six_classes() {
        let tr = generate_trace(1, 7000, &TraceProfile::kitchen()).unwrap();
        assert_eq!(tr.len(), 7000);
        assert_eq!(tr.num_classes(), 6);
        assert!(tr.classes().iter().all(|&c| c < 6));
    }

    #[test]
    fn one_second_trace() {
        let p = TraceProfile {
            classes: vec![ClassProfile::new("only", 1, 1)],
        };
        let tr = generate_trace(99, 1, &p).unwrap();
        let ivs = tr.intervals();
        assert_eq!(ivs.len(), 1);
        assert_eq!(ivs[0].duration, 1);
    }

    #[test]
    fn fixed_ranges_alternate() {
        let tr = generate_trace(42, 100, &two_class(10, 5)).unwrap();
        let ivs = tr.intervals();
        assert_eq!(ivs.iter().map(|iv| iv.duration).sum::<usize>(), 100);
        for pair in ivs.windows(2) {
            assert_ne!(pair[0].class_id, pair[1].class_id);
        }
        for iv in &ivs[..ivs.len() - 1] {
            let want = if iv.class_id == 0 { 10 } else { 5 };
            assert_eq!(iv.duration, want);
        }
    }

    #[test]
    fn generator_errors() {
        assert!(generate_trace(1, 10, &TraceProfile { classes: vec![] }).is_err());
        let inverted = TraceProfile {
            classes: vec![ClassProfile::new("x", 9, 3), ClassProfile::new("y", 1, 2)],
        };
        assert!(generate_trace(1, 10, &inverted).is_err());
        assert!(generate_trace(1, 0, &two_class(5, 5)).is_err());
    }

    #[test]
    fn rle_examples() {
        let tr = EventTrace::new(vec![0, 0, 0, 1, 1], 2).unwrap();
        assert_eq!(
            tr.intervals(),
            vec![
                EventInterval {
                    class_id: 0,
                    start: 0,
                    duration: 3
                },
                EventInterval {
                    class_id: 1,
                    start: 3,
                    duration: 2
                },
            ]
        );
        let flat = EventTrace::new(vec![4; 17], 5).unwrap();
        assert_eq!(flat.intervals().len(), 1);
        assert_eq!(flat.intervals()[0].duration, 17);
    }

    #[test]
    fn kitchen_intervals_within_ranges() {
        let profile = TraceProfile::kitchen();
        let tr = generate_trace(1, 7000, &profile).unwrap();
        let ivs = tr.intervals();
        let (last, body) = ivs.split_last().unwrap();
        for iv in body {
            let p = &profile.classes[iv.class_id as usize];
            assert!((p.min..=p.max).contains(&iv.duration), "{iv:?}");
        }
        assert!(last.duration <= profile.classes[last.class_id as usize].max);
    }

    #[test]
    fn event_ends_match_intervals() {
        let tr = EventTrace::new(vec![0, 0, 1, 2, 2, 2], 3).unwrap();
        assert_eq!(tr.event_ends(), vec![2, 2, 3, 6, 6, 6]);
    }

    #[test]
    fn csv_rejects_gaps_and_bad_header() {
        assert!(EventTrace::from_csv("t,class\n0,1\n", None).is_err());
        assert!(EventTrace::from_csv("t,class_id\n0,1\n2,1\n", None).is_err());
        assert!(EventTrace::from_csv("t,class_id\n0,7\n", Some(3)).is_err());
        let tr = EventTrace::from_csv("t,class_id\n0,1\n1,2\n", None).unwrap();
        assert_eq!(tr.num_classes(), 3);
    }

    #[test]
    fn profile_config_round_trip() {
        let p = TraceProfile::kitchen();
        let back = TraceProfile::kitchen()
            .apply_config(&p.to_config())
            .unwrap();
        assert_eq!(back, p);
        let cfg = KvConfig::parse("class.0.min=20\nclass.0.max=25").unwrap();
        let q = TraceProfile::kitchen().apply_config(&cfg).unwrap();
        assert_eq!((q.classes[0].min, q.classes[0].max), (20, 25));
        let bad = KvConfig::parse("class.1.min=50\nclass.1.max=10").unwrap();
        assert!(TraceProfile::kitchen().apply_config(&bad).is_err());
    }

    #[test]
    fn window_is_deterministic() {
        let tr = generate_trace(3, 200, &TraceProfile::kitchen()).unwrap();
        let cfg = WindowConfig::default();
        let a = synthesize_window(&tr, 17, 5, &cfg).unwrap();
        let b = synthesize_window(&tr, 17, 5, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.data.iter().all(|v| v.is_finite()));
        assert!(synthesize_window(&tr, 200, 5, &cfg).is_err());
    }

    #[test]
    fn noiseless_windows_within_event_match() {
        let tr = EventTrace::new(vec![2; 10], 3).unwrap();
        let cfg = WindowConfig::default().noiseless();
        let a = synthesize_window(&tr, 1, 0, &cfg).unwrap();
        let b = synthesize_window(&tr, 8, 0, &cfg).unwrap();
        assert_eq!(a.data, b.data);
    }

    #[test]
    fn class_means_differ_by_offset() {
        let cfg = WindowConfig {
            offset_step: 2.5,
            ..WindowConfig::default().noiseless()
        };
        let a = class_window(0, 0, 0, &cfg);
        let b = class_window(1, 0, 0, &cfg);
        for ch in 0..cfg.channels {
            let mean = |w: &SensorWindow| w.channel(ch).iter().sum::<f64>() / cfg.samples as f64;
            assert!((mean(&b) - mean(&a) - 2.5).abs() < 1e-12);
        }
    }
}

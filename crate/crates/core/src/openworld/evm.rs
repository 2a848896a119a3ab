//! Extreme value machine.
//!
//! Every training point becomes a candidate extreme vector: its distances
//! to the nearest points of other classes (scaled by the distance
//! multiplier) are fitted with a Weibull, giving an inclusion probability
//! `psi(d) = exp(-(d / scale)^shape)`. A greedy set cover keeps the fewest
//! candidates whose `psi` reaches the cover threshold on every point of the
//! class. Distances are Euclidean on features standardised with the
//! statistics of the initial fit.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::trace::ClassId;

use super::weibull::{fit_weibull, Weibull};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvmParams {
    pub tail_size: usize,
    pub cover_threshold: f64,
    pub distance_multiplier: f64,
    pub rejection_threshold: f64,
}

impl Default for EvmParams {
    fn default() -> Self {
        Self {
            tail_size: 100,
            cover_threshold: 0.7,
            distance_multiplier: 0.4,
            rejection_threshold: 0.5,
        }
    }
}

impl EvmParams {
    pub fn validate(&self) -> Result<()> {
        if self.tail_size < 1 {
            return Err(Error::invalid("tail size must be >= 1"));
        }
        if !(self.cover_threshold > 0.0 && self.cover_threshold <= 1.0) {
            return Err(Error::invalid("cover threshold must be in (0, 1]"));
        }
        if !(self.distance_multiplier > 0.0 && self.distance_multiplier.is_finite()) {
            return Err(Error::invalid("distance multiplier must be positive"));
        }
        if !(self.rejection_threshold > 0.0 && self.rejection_threshold < 1.0) {
            return Err(Error::invalid("rejection threshold must be in (0, 1)"));
        }
        Ok(())
    }
}

/// A retained anchor (standardised coordinates) and its Weibull.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtremeVector {
    pub class: ClassId,
    pub anchor: Vec<f64>,
    pub weibull: Weibull,
}

impl ExtremeVector {
    pub fn psi(&self, x: &[f64]) -> f64 {
        self.weibull.psi(euclidean(&self.anchor, x))
    }
}

#[derive(Debug, Clone, PartialEq)]
struct ClassModel {
    /// Every point ever trained for the class, with its fitted Weibull.
    pool: Vec<(Vec<f64>, Weibull)>,
    /// Indices into `pool` chosen by set cover, ascending.
    retained: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Prediction {
    Known { class: ClassId, probability: f64 },
    Unknown { probability: f64 },
}

impl Prediction {
    pub fn class(&self) -> Option<ClassId> {
        match self {
            Prediction::Known { class, .. } => Some(*class),
            Prediction::Unknown { .. } => None,
        }
    }

    pub fn probability(&self) -> f64 {
        match self {
            Prediction::Known { probability, .. } | Prediction::Unknown { probability } => {
                *probability
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvmModel {
    params: EvmParams,
    dim: usize,
    mean: Vec<f64>,
    scale: Vec<f64>,
    classes: BTreeMap<ClassId, ClassModel>,
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Fit a Weibull to the `tail_size` smallest scaled distances.
fn fit_tail(mut distances: Vec<f64>, params: &EvmParams) -> Result<Weibull> {
    let keep = params.tail_size.min(distances.len());
    if keep < distances.len() {
        distances.select_nth_unstable_by(keep - 1, f64::total_cmp);
        distances.truncate(keep);
    }
    for d in &mut distances {
        *d *= params.distance_multiplier;
    }
    Ok(fit_weibull(&distances)?.weibull)
}

/// `psi(d) >= threshold`, compared as `(d / scale)^shape <= -ln threshold`
/// so that rounding of `exp` near 1 cannot admit points at positive distance.
fn covers(w: &Weibull, d: f64, threshold: f64) -> bool {
    (d / w.scale).powf(w.shape) <= -threshold.ln()
}

/// Greedy set cover over `pool`; ties go to the lowest index.
fn set_cover(pool: &[(Vec<f64>, Weibull)], threshold: f64) -> Vec<usize> {
    let n = pool.len();
    let covers: Vec<Vec<usize>> = pool
        .iter()
        .map(|(a, w)| {
            (0..n)
                .filter(|&j| covers(w, euclidean(a, &pool[j].0), threshold))
                .collect()
        })
        .collect();
    let mut covered = vec![false; n];
    let mut remaining = n;
    let mut chosen = Vec::new();
    while remaining > 0 {
        let (best, gain) = covers
            .iter()
            .enumerate()
            .map(|(i, c)| (i, c.iter().filter(|&&j| !covered[j]).count()))
            .fold((0, 0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        if gain == 0 {
            // Unreachable while every point covers itself; guards against NaN.
            for (j, c) in covered.iter_mut().enumerate() {
                if !*c {
                    chosen.push(j);
                    *c = true;
                }
            }
            break;
        }
        for &j in &covers[best] {
            if !covered[j] {
                covered[j] = true;
                remaining -= 1;
            }
        }
        chosen.push(best);
    }
    chosen.sort_unstable();
    chosen
}

impl EvmModel {
    /// Fit on labelled features. Needs at least two classes with at least
    /// two samples each.
    pub fn fit(features: &[Vec<f64>], labels: &[ClassId], params: EvmParams) -> Result<Self> {
        params.validate()?;
        if features.len() != labels.len() {
            return Err(Error::invalid("features and labels differ in length"));
        }
        let dim = features
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::invalid("no samples"))?;
        if let Some(bad) = features.iter().find(|f| f.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.len(),
            });
        }
        let mut by_class: BTreeMap<ClassId, Vec<usize>> = BTreeMap::new();
        for (i, &c) in labels.iter().enumerate() {
            by_class.entry(c).or_default().push(i);
        }
        if by_class.len() < 2 {
            return Err(Error::invalid("need at least two classes"));
        }
        if let Some((c, _)) = by_class.iter().find(|(_, idx)| idx.len() < 2) {
            return Err(Error::invalid(format!(
                "class {c} has fewer than two samples"
            )));
        }

        let n = features.len() as f64;
        let mean: Vec<f64> = (0..dim)
            .map(|j| features.iter().map(|f| f[j]).sum::<f64>() / n)
            .collect();
        let scale: Vec<f64> = (0..dim)
            .map(|j| {
                let var = features
                    .iter()
                    .map(|f| (f[j] - mean[j]).powi(2))
                    .sum::<f64>()
                    / n;
                if var > 1e-24 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        let mut model = Self {
            params,
            dim,
            mean,
            scale,
            classes: BTreeMap::new(),
        };
        let xs: Vec<Vec<f64>> = features.iter().map(|f| model.standardize(f)).collect();

        for (&class, idx) in &by_class {
            let mut pool = Vec::with_capacity(idx.len());
            for &i in idx {
                let distances: Vec<f64> = xs
                    .iter()
                    .zip(labels)
                    .filter(|(_, &l)| l != class)
                    .map(|(x, _)| euclidean(&xs[i], x))
                    .collect();
                pool.push((xs[i].clone(), fit_tail(distances, &params)?));
            }
            let retained = set_cover(&pool, params.cover_threshold);
            model.classes.insert(class, ClassModel { pool, retained });
        }
        Ok(model)
    }

    /// Add samples of `class`, returning a new model.
    ///
    /// New points are fitted against the retained anchors of every other
    /// class; other classes are left untouched. If `class` already exists
    /// its point pool grows and its set cover is recomputed, so adding a
    /// class in several batches gives the same model as one batch.
    pub fn update(&self, features: &[Vec<f64>], class: ClassId) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::invalid("no samples to add"));
        }
        if let Some(bad) = features.iter().find(|f| f.len() != self.dim) {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: bad.len(),
            });
        }
        let others: Vec<&Vec<f64>> = self
            .classes
            .iter()
            .filter(|(&c, _)| c != class)
            .flat_map(|(_, m)| m.retained.iter().map(|&i| &m.pool[i].0))
            .collect();
        if others.is_empty() {
            return Err(Error::EmptyTail(class));
        }
        let mut next = self.clone();
        let entry = next.classes.entry(class).or_insert_with(|| ClassModel {
            pool: Vec::new(),
            retained: Vec::new(),
        });
        for f in features {
            let x = self.standardize(f);
            let distances = others.iter().map(|a| euclidean(&x, a)).collect();
            let w = fit_tail(distances, &self.params)?;
            entry.pool.push((x, w));
        }
        entry.retained = set_cover(&entry.pool, self.params.cover_threshold);
        Ok(next)
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        let z = self.standardize(x);
        let mut best: Option<(ClassId, f64)> = None;
        for (&class, m) in &self.classes {
            for &i in &m.retained {
                let (anchor, w) = &m.pool[i];
                let p = w.psi(euclidean(anchor, &z));
                if best.is_none_or(|(_, bp)| p > bp) {
                    best = Some((class, p));
                }
            }
        }
        let (class, probability) = best.expect("fitted model has extreme vectors");
        Ok(if probability < self.params.rejection_threshold {
            Prediction::Unknown { probability }
        } else {
            Prediction::Known { class, probability }
        })
    }

    pub fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn params(&self) -> &EvmParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> impl Iterator<Item = ClassId> + '_ {
        self.classes.keys().copied()
    }

    pub fn contains_class(&self, class: ClassId) -> bool {
        self.classes.contains_key(&class)
    }

    /// Retained extreme vectors, by class then pool order.
    pub fn extreme_vectors(&self) -> Vec<ExtremeVector> {
        self.classes
            .iter()
            .flat_map(|(&class, m)| {
                m.retained.iter().map(move |&i| ExtremeVector {
                    class,
                    anchor: m.pool[i].0.clone(),
                    weibull: m.pool[i].1,
                })
            })
            .collect()
    }

    pub fn num_extreme_vectors(&self) -> usize {
        self.classes.values().map(|m| m.retained.len()).sum()
    }

    /// Standardised training points of `class`.
    pub fn training_points(&self, class: ClassId) -> Vec<Vec<f64>> {
        self.classes
            .get(&class)
            .map(|m| m.pool.iter().map(|(x, _)| x.clone()).collect())
            .unwrap_or_default()
    }

    /// Text form. Anchors are stored in standardised coordinates.
    ///
    /// ```text
    /// evm <dim> <tail_size> <cover_threshold> <distance_multiplier> <rejection_threshold>
    /// mean <v_1> .. <v_d>
    /// scale <v_1> .. <v_d>
    /// <class_id> <kappa> <lambda> <v_1> .. <v_d>     (one line per extreme vector)
    /// ```
    pub fn to_text(&self) -> String {
        let p = &self.params;
        let mut out = format!(
            "evm {} {} {} {} {}\n",
            self.dim, p.tail_size, p.cover_threshold, p.distance_multiplier, p.rejection_threshold
        );
        let vec_line = |out: &mut String, tag: &str, v: &[f64]| {
            out.push_str(tag);
            for x in v {
                let _ = write!(out, " {x}");
            }
            out.push('\n');
        };
        vec_line(&mut out, "mean", &self.mean);
        vec_line(&mut out, "scale", &self.scale);
        for ev in self.extreme_vectors() {
            let _ = write!(
                out,
                "{} {} {}",
                ev.class, ev.weibull.shape, ev.weibull.scale
            );
            for x in &ev.anchor {
                let _ = write!(out, " {x}");
            }
            out.push('\n');
        }
        out
    }

    /// Parse [`EvmModel::to_text`] output. The loaded model's point pools
    /// hold only the stored extreme vectors.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let floats = |idx: usize, parts: &[&str]| -> Result<Vec<f64>> {
            parts
                .iter()
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|e| Error::parse(idx + 1, e.to_string()))
                })
                .collect()
        };
        let (idx, header) = lines.next().ok_or_else(|| Error::parse(1, "empty model"))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 6 || h[0] != "evm" {
            return Err(Error::parse(idx + 1, "bad header"));
        }
        let dim: usize = h[1].parse().map_err(|_| Error::parse(idx + 1, "bad dim"))?;
        let tail_size: usize = h[2]
            .parse()
            .map_err(|_| Error::parse(idx + 1, "bad tail size"))?;
        let rest = floats(idx, &h[3..])?;
        let params = EvmParams {
            tail_size,
            cover_threshold: rest[0],
            distance_multiplier: rest[1],
            rejection_threshold: rest[2],
        };
        params.validate()?;
        let mut tagged = |tag: &str| -> Result<Vec<f64>> {
            let (idx, line) = lines
                .next()
                .ok_or_else(|| Error::parse(0, format!("missing {tag} line")))?;
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.first() != Some(&tag) || parts.len() != dim + 1 {
                return Err(Error::parse(
                    idx + 1,
                    format!("expected {tag} with {dim} values"),
                ));
            }
            floats(idx, &parts[1..])
        };
        let mean = tagged("mean")?;
        let scale = tagged("scale")?;
        let mut classes: BTreeMap<ClassId, ClassModel> = BTreeMap::new();
        for (idx, line) in lines {
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != dim + 3 {
                return Err(Error::parse(
                    idx + 1,
                    format!("expected {} columns", dim + 3),
                ));
            }
            let class: ClassId = parts[0]
                .parse()
                .map_err(|_| Error::parse(idx + 1, "bad class id"))?;
            let v = floats(idx, &parts[1..])?;
            let weibull =
                Weibull::new(v[0], v[1]).map_err(|e| Error::parse(idx + 1, e.to_string()))?;
            let m = classes.entry(class).or_insert_with(|| ClassModel {
                pool: Vec::new(),
                retained: Vec::new(),
            });
            m.retained.push(m.pool.len());
            m.pool.push((v[2..].to_vec(), weibull));
        }
        if classes.is_empty() {
            return Err(Error::parse(0, "model has no extreme vectors"));
        }
        Ok(Self {
            params,
            dim,
            mean,
            scale,
            classes,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    /// Every training point has `psi >= cover_threshold` under a retained
    /// extreme vector of its own class.
    pub fn cover_is_valid(&self) -> bool {
        self.classes.values().all(|m| {
            m.pool.iter().all(|(x, _)| {
                m.retained.iter().any(|&i| {
                    let (a, w) = &m.pool[i];
                    covers(w, euclidean(a, x), self.params.cover_threshold)
                })
            })
        })
    }
}

/// Bounded FIFO of rejected feature vectors awaiting clustering.
#[derive(Debug, Clone, PartialEq)]
pub struct UnknownQueue {
    samples: VecDeque<Vec<f64>>,
    capacity: usize,
}

impl UnknownQueue {
    pub fn new(capacity: usize) -> Self {
        Self {
            samples: VecDeque::new(),
            capacity,
        }
    }

    /// Enqueue; returns `false` (dropping the sample) when full.
    pub fn push(&mut self, x: Vec<f64>) -> bool {
        if self.samples.len() >= self.capacity {
            return false;
        }
        self.samples.push_back(x);
        true
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn drain(&mut self) -> Vec<Vec<f64>> {
        self.samples.drain(..).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.samples.iter()
    }
}

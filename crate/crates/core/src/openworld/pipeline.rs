//! Incremental open-world experiment on synthetic Gaussian blobs.
//!
//! An EVM is fitted on the initial known classes. Each increment streams
//! test samples of every class seen so far plus a batch of brand-new
//! classes through the model. Rejected samples are clustered with FINCH
//! and every surviving cluster is added to the model as a new learned
//! class, which is then counted as known from the next increment on.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::evm::{euclidean, EvmModel, EvmParams, Prediction};
use super::finch::{finch_cluster, select_partition};
use super::metrics::{b_cubed, OwConfusion};
use crate::error::{Error, Result};
use crate::rng::{self, SimRng};
use crate::trace::ClassId;

/// First label handed to classes learned from clusters.
pub const LEARNED_LABEL_BASE: ClassId = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct OpenWorldSpec {
    pub dim: usize,
    pub initial_classes: usize,
    pub increments: usize,
    pub classes_per_increment: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub sigma: f64,
    pub center_range: f64,
    pub min_center_distance: f64,
    pub min_samples: usize,
    pub params: EvmParams,
    pub seed: u64,
}

impl Default for OpenWorldSpec {
    fn default() -> Self {
        Self {
            dim: 6,
            initial_classes: 9,
            increments: 3,
            classes_per_increment: 3,
            train_per_class: 100,
            test_per_class: 100,
            sigma: 1.0,
            center_range: 20.0,
            min_center_distance: 12.0,
            min_samples: 10,
            params: EvmParams::default(),
            seed: 0,
        }
    }
}

impl OpenWorldSpec {
    pub fn total_classes(&self) -> usize {
        self.initial_classes + self.increments * self.classes_per_increment
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        if self.initial_classes < 2 {
            return Err(Error::invalid("need at least two initial classes"));
        }
        if self.increments > 0 && self.classes_per_increment == 0 {
            return Err(Error::invalid("increments need at least one new class"));
        }
        if self.train_per_class < 2 || self.test_per_class < 1 {
            return Err(Error::invalid(
                "need >= 2 training and >= 1 test sample per class",
            ));
        }
        if !(self.sigma > 0.0 && self.center_range > 0.0 && self.min_center_distance >= 0.0) {
            return Err(Error::invalid("blob geometry must be positive"));
        }
        self.params.validate()
    }
}

/// One row of the per-increment report.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementResult {
    pub increment: usize,
    /// Classes known to the model when the increment was evaluated.
    pub classes: usize,
    pub confusion: OwConfusion,
    pub owm: f64,
    /// Classes learned from the clusters of this increment's rejections.
    pub learned: usize,
}

impl IncrementResult {
    pub const CSV_HEADER: &'static str =
        "increment,classes,n_kk,n_ku,n_uk,n_uu,known_acc,b3,owm,learned";

    pub fn csv_row(&self) -> String {
        let c = &self.confusion;
        format!(
            "{},{},{},{},{},{},{:.6},{:.6},{:.6},{}",
            self.increment,
            self.classes,
            c.n_kk,
            c.n_ku,
            c.n_uk,
            c.n_uu,
            c.known_accuracy,
            c.b3,
            self.owm,
            self.learned
        )
    }
}

pub fn increments_csv(rows: &[IncrementResult]) -> String {
    let mut out = String::from(IncrementResult::CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

/// Feature CSV `label,v_1,...,v_d`; `None` labels are written as -1.
pub fn features_csv(features: &[Vec<f64>], labels: &[Option<ClassId>]) -> String {
    let dim = features.first().map_or(0, Vec::len);
    let mut out = String::from("label");
    for j in 1..=dim {
        let _ = write!(out, ",v_{j}");
    }
    out.push('\n');
    for (f, l) in features.iter().zip(labels) {
        match l {
            Some(c) => {
                let _ = write!(out, "{c}");
            }
            None => out.push_str("-1"),
        }
        for v in f {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

/// `n` centers uniform in `[-range, range]^dim`, pairwise at least
/// `min_distance` apart.
pub fn blob_centers(
    rng: &mut SimRng,
    n: usize,
    dim: usize,
    range: f64,
    min_distance: f64,
) -> Result<Vec<Vec<f64>>> {
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while centers.len() < n {
        attempts += 1;
        if attempts > 100_000 {
            return Err(Error::invalid(
                "cannot place blob centers at the requested distance",
            ));
        }
        let c: Vec<f64> = (0..dim).map(|_| rng.random_range(-range..=range)).collect();
        if centers.iter().all(|o| euclidean(o, &c) >= min_distance) {
            centers.push(c);
        }
    }
    Ok(centers)
}

/// `n` isotropic Gaussian draws around `center`.
pub fn sample_blob(rng: &mut SimRng, center: &[f64], sigma: f64, n: usize) -> Vec<Vec<f64>> {
    let noise = Normal::new(0.0, sigma).expect("sigma validated positive");
    (0..n)
        .map(|_| center.iter().map(|c| c + noise.sample(rng)).collect())
        .collect()
}

/// Report rows plus the model after the last increment.
#[derive(Debug, Clone)]
pub struct OpenWorldRun {
    pub rows: Vec<IncrementResult>,
    pub model: EvmModel,
    pub train_features: Vec<Vec<f64>>,
    pub train_labels: Vec<ClassId>,
}

pub fn run_open_world(spec: &OpenWorldSpec) -> Result<OpenWorldRun> {
    spec.validate()?;
    let total = spec.total_classes();
    let mut rng = rng::stream(spec.seed, "openworld");
    let centers = blob_centers(
        &mut rng,
        total,
        spec.dim,
        spec.center_range,
        spec.min_center_distance,
    )?;

    let mut train = Vec::new();
    let mut labels = Vec::new();
    for (c, center) in centers.iter().enumerate().take(spec.initial_classes) {
        train.extend(sample_blob(
            &mut rng,
            center,
            spec.sigma,
            spec.train_per_class,
        ));
        labels.extend(std::iter::repeat_n(c as ClassId, spec.train_per_class));
    }
    let mut model = EvmModel::fit(&train, &labels, spec.params)?;
    // Model label -> true class it stands for.
    let mut meaning: BTreeMap<ClassId, usize> = (0..spec.initial_classes)
        .map(|c| (c as ClassId, c))
        .collect();
    let mut next_label = LEARNED_LABEL_BASE;
    let mut seen = spec.initial_classes;
    let mut rows = Vec::with_capacity(spec.increments + 1);

    for increment in 0..=spec.increments {
        let arriving = if increment == 0 {
            0
        } else {
            spec.classes_per_increment
        };
        let mut samples: Vec<(Vec<f64>, usize)> = Vec::new();
        for (c, center) in centers.iter().enumerate().take(seen + arriving) {
            for x in sample_blob(&mut rng, center, spec.sigma, spec.test_per_class) {
                samples.push((x, c));
            }
        }

        let mut c = OwConfusion::default();
        let mut correct = 0usize;
        let mut rejected: Vec<usize> = Vec::new();
        for (i, (x, truth)) in samples.iter().enumerate() {
            let known = *truth < seen;
            match model.predict(x)? {
                Prediction::Known { class, .. } if known => {
                    c.n_kk += 1;
                    if meaning.get(&class) == Some(truth) {
                        correct += 1;
                    }
                }
                Prediction::Known { .. } => c.n_uk += 1,
                Prediction::Unknown { .. } => {
                    if known {
                        c.n_ku += 1;
                    } else {
                        c.n_uu += 1;
                    }
                    rejected.push(i);
                }
            }
        }
        c.known_accuracy = if c.n_kk > 0 {
            correct as f64 / c.n_kk as f64
        } else {
            0.0
        };

        let clusters = if rejected.len() >= 2 {
            let points: Vec<Vec<f64>> = rejected.iter().map(|&i| samples[i].0.clone()).collect();
            select_partition(&finch_cluster(&points)?, spec.min_samples)
        } else {
            Vec::new()
        };
        // Rejected samples outside every surviving cluster stay singletons.
        let mut assigned: Vec<usize> = (0..rejected.len()).map(|k| usize::MAX - k).collect();
        for cl in &clusters {
            for &m in &cl.members {
                assigned[m] = cl.label;
            }
        }
        let (pred_uu, true_uu): (Vec<usize>, Vec<usize>) = rejected
            .iter()
            .zip(&assigned)
            .filter(|(&i, _)| samples[i].1 >= seen)
            .map(|(&i, &a)| (a, samples[i].1))
            .unzip();
        c.b3 = if pred_uu.is_empty() {
            0.0
        } else {
            b_cubed(&pred_uu, &true_uu)?
        };

        let owm = c.owm()?;
        let classes = model.classes().count();
        for cl in &clusters {
            let members: Vec<Vec<f64>> = cl
                .members
                .iter()
                .map(|&m| samples[rejected[m]].0.clone())
                .collect();
            let mut votes: BTreeMap<usize, usize> = BTreeMap::new();
            for &m in &cl.members {
                *votes.entry(samples[rejected[m]].1).or_default() += 1;
            }
            let majority = votes
                .iter()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                .map(|(&t, _)| t)
                .expect("clusters are nonempty");
            model = model.update(&members, next_label)?;
            meaning.insert(next_label, majority);
            next_label += 1;
        }
        rows.push(IncrementResult {
            increment,
            classes,
            confusion: c,
            owm,
            learned: clusters.len(),
        });
        seen += arriving;
    }
    Ok(OpenWorldRun {
        rows,
        model,
        train_features: train,
        train_labels: labels,
    })
}

//! Open-world evaluation: B-cubed clustering score and the open-world
//! metric that blends it with known-class accuracy.

use std::collections::HashMap;
use std::hash::Hash;

use crate::error::{Error, Result};

/// B-cubed F-score of `predicted` cluster labels against `truth`.
///
/// Per-sample precision is the share of the sample's predicted cluster
/// carrying its true label; recall is the share of its true class placed in
/// its predicted cluster. Both are averaged over samples and combined by
/// harmonic mean.
pub fn b_cubed<P, T>(predicted: &[P], truth: &[T]) -> Result<f64>
where
    P: Eq + Hash,
    T: Eq + Hash,
{
    if predicted.len() != truth.len() {
        return Err(Error::invalid("label sequences differ in length"));
    }
    if predicted.is_empty() {
        return Err(Error::invalid("b-cubed needs at least one sample"));
    }
    let mut by_pred: HashMap<&P, usize> = HashMap::new();
    let mut by_true: HashMap<&T, usize> = HashMap::new();
    let mut joint: HashMap<(&P, &T), usize> = HashMap::new();
    for (p, t) in predicted.iter().zip(truth) {
        *by_pred.entry(p).or_default() += 1;
        *by_true.entry(t).or_default() += 1;
        *joint.entry((p, t)).or_default() += 1;
    }
    let n = predicted.len() as f64;
    let (mut precision, mut recall) = (0.0, 0.0);
    for (p, t) in predicted.iter().zip(truth) {
        let both = joint[&(p, t)] as f64;
        precision += both / by_pred[p] as f64;
        recall += both / by_true[t] as f64;
    }
    precision /= n;
    recall /= n;
    Ok(2.0 * precision * recall / (precision + recall))
}

/// Open-world confusion counts. The first letter is the ground truth
/// (known or unknown class), the second the classifier's verdict.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OwConfusion {
    pub n_kk: usize,
    pub n_ku: usize,
    pub n_uk: usize,
    pub n_uu: usize,
    /// Accuracy over the known samples accepted as known.
    pub known_accuracy: f64,
    /// B-cubed score of the clustering of unknown samples flagged unknown.
    pub b3: f64,
}

impl OwConfusion {
    pub fn total(&self) -> usize {
        self.n_kk + self.n_ku + self.n_uk + self.n_uu
    }

    pub fn owm(&self) -> Result<f64> {
        let total = self.total();
        if total == 0 {
            return Err(Error::invalid("open-world metric over an empty test set"));
        }
        for v in [self.known_accuracy, self.b3] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid("accuracy and b-cubed must lie in [0, 1]"));
            }
        }
        Ok((self.n_kk as f64 * self.known_accuracy + self.n_uu as f64 * self.b3) / total as f64)
    }
}

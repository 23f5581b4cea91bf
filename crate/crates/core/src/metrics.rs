//! Activations, losses and the balanced-accuracy metric shared by every
//! classifier.

use crate::error::{Error, Result};

/// Default log-clipping guard.
pub const DEFAULT_EPS: f64 = 1e-15;

/// Clipping bound for logarithms of probabilities, `0 < eps < 0.5`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Epsilon(f64);

impl Epsilon {
    pub fn new(eps: f64) -> Result<Self> {
        if eps > 0.0 && eps < 0.5 {
            Ok(Self(eps))
        } else {
            Err(Error::arg(format!("epsilon must lie in (0, 0.5), got {eps}")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }

    fn clip(self, p: f64) -> f64 {
        p.clamp(self.0, 1.0 - self.0)
    }
}

impl Default for Epsilon {
    fn default() -> Self {
        Self(DEFAULT_EPS)
    }
}

/// Logistic function, evaluated on the branch that cannot overflow.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn softmax(z: &[f64]) -> Result<Vec<f64>> {
    if z.is_empty() {
        return Err(Error::arg("softmax of an empty vector"));
    }
    let mut out = z.to_vec();
    softmax_in_place(&mut out);
    Ok(out)
}

/// Max-subtracted softmax. `z` must be nonempty.
pub(crate) fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

/// Mean log loss of probabilities `p` against binary targets `y`.
pub fn binary_cross_entropy(y: &[f64], p: &[f64], eps: Epsilon) -> Result<f64> {
    if y.len() != p.len() {
        return Err(Error::Dimension {
            expected: y.len(),
            got: p.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::arg("binary cross-entropy of empty vectors"));
    }
    let total: f64 = y
        .iter()
        .zip(p)
        .map(|(&y, &p)| {
            let p = eps.clip(p);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    Ok(total / y.len() as f64)
}

/// Cross-entropy of one probability vector against a one-hot target.
pub fn categorical_cross_entropy(onehot: &[f64], p: &[f64], eps: Epsilon) -> Result<f64> {
    if onehot.len() != p.len() {
        return Err(Error::Dimension {
            expected: onehot.len(),
            got: p.len(),
        });
    }
    let class = onehot_class(onehot)?;
    Ok(-eps.clip(p[class]).ln())
}

/// Position of the single 1 in a one-hot vector.
pub(crate) fn onehot_class(onehot: &[f64]) -> Result<usize> {
    let mut hot = None;
    for (i, &v) in onehot.iter().enumerate() {
        if v == 1.0 {
            if hot.is_some() {
                return Err(Error::arg("one-hot vector has more than one 1"));
            }
            hot = Some(i);
        } else if v != 0.0 {
            return Err(Error::arg(format!("one-hot vector holds {v}")));
        }
    }
    hot.ok_or_else(|| Error::arg("one-hot vector has no 1"))
}

/// Index of the largest element, lowest index on ties.
pub fn argmax_tiebreak(v: &[f64]) -> Result<usize> {
    if v.is_empty() {
        return Err(Error::arg("argmax of an empty vector"));
    }
    Ok(argmax_unchecked(v))
}

pub(crate) fn argmax_unchecked(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Mean per-class recall over the classes that occur in `y_true`.
pub fn balanced_accuracy(y_true: &[usize], y_pred: &[usize]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Dimension {
            expected: y_true.len(),
            got: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(Error::arg("balanced accuracy of empty label vectors"));
    }
    let n_classes = y_true.iter().chain(y_pred).max().map_or(0, |&m| m + 1);
    let mut support = vec![0usize; n_classes];
    let mut hits = vec![0usize; n_classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        support[t] += 1;
        if t == p {
            hits[t] += 1;
        }
    }
    let (sum, count) = support
        .iter()
        .zip(&hits)
        .filter(|(&s, _)| s > 0)
        .fold((0.0, 0usize), |(sum, n), (&s, &h)| (sum + h as f64 / s as f64, n + 1));
    Ok(sum / count as f64)
}

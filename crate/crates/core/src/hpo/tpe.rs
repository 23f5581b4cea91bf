//! Univariate tree-structured Parzen estimator.
//!
//! Each active parameter is modelled on its own. Numeric parameters use a
//! mixture of range-truncated Gaussians centred on the observed values plus
//! one broad prior component; categoricals use add-one counts.

use rand::Rng;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use super::{suggest_random, ParamKind, ParamSpec, ParamValue, Params, Trial};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TpeSettings {
    /// Fraction of complete trials treated as "good".
    pub gamma: f64,
    /// Below this many complete trials, fall back to uniform sampling.
    pub n_startup: usize,
    pub n_ei_candidates: usize,
}

impl Default for TpeSettings {
    fn default() -> Self {
        Self {
            gamma: 0.25,
            n_startup: 10,
            n_ei_candidates: 24,
        }
    }
}

pub fn suggest_tpe<R: Rng + ?Sized>(space: &[ParamSpec], history: &[Trial], rng: &mut R) -> Params {
    suggest_tpe_with(&TpeSettings::default(), space, history, rng)
}

pub fn suggest_tpe_with<R: Rng + ?Sized>(
    settings: &TpeSettings,
    space: &[ParamSpec],
    history: &[Trial],
    rng: &mut R,
) -> Params {
    let mut complete: Vec<(&Trial, f64)> = history
        .iter()
        .filter_map(|t| t.complete_score().filter(|s| s.is_finite()).map(|s| (t, s)))
        .collect();
    if complete.len() < settings.n_startup.max(1) {
        return suggest_random(space, rng);
    }
    // best first; stable so earlier trials win ties
    complete.sort_by(|a, b| b.1.total_cmp(&a.1));
    let n_good = ((settings.gamma * complete.len() as f64).ceil() as usize).clamp(1, complete.len());
    let (good, bad) = complete.split_at(n_good);
    let n_candidates = settings.n_ei_candidates.max(1);

    let mut params = Params::new();
    for spec in space {
        if !spec.is_active(&params) {
            continue;
        }
        let observed = |set: &[(&Trial, f64)]| -> Vec<ParamValue> {
            set.iter()
                .filter_map(|(t, _)| t.params.get(&spec.name).cloned())
                .collect()
        };
        let (good_obs, bad_obs) = (observed(good), observed(bad));
        let value = match &spec.kind {
            ParamKind::Categorical { choices } => sample_categorical(choices, &good_obs, &bad_obs, n_candidates, rng),
            kind => sample_numeric(kind, &good_obs, &bad_obs, n_candidates, rng),
        };
        params.insert(spec.name.clone(), value);
    }
    params
}

fn sample_categorical<R: Rng + ?Sized>(
    choices: &[String],
    good: &[ParamValue],
    bad: &[ParamValue],
    n_candidates: usize,
    rng: &mut R,
) -> ParamValue {
    let weights = |obs: &[ParamValue]| -> Vec<f64> {
        let mut w = vec![1.0; choices.len()];
        for v in obs {
            if let ParamValue::Categorical(s) = v {
                if let Some(i) = choices.iter().position(|c| c == s) {
                    w[i] += 1.0;
                }
            }
        }
        let total: f64 = w.iter().sum();
        w.iter().map(|x| x / total).collect()
    };
    let (l, g) = (weights(good), weights(bad));
    let mut best: Option<(usize, f64)> = None;
    for _ in 0..n_candidates {
        let mut u = rng.gen::<f64>();
        let mut pick = choices.len() - 1;
        for (i, p) in l.iter().enumerate() {
            if u < *p {
                pick = i;
                break;
            }
            u -= p;
        }
        let ratio = l[pick].ln() - g[pick].ln();
        if best.is_none_or(|(_, r)| ratio > r) {
            best = Some((pick, ratio));
        }
    }
    ParamValue::Categorical(choices[best.map_or(0, |b| b.0)].clone())
}

/// Internal coordinates: ints widen by half a step on each side so the end
/// values keep their share after rounding, log floats live in log space.
struct Domain {
    low: f64,
    high: f64,
    to_internal: fn(f64) -> f64,
}

fn sample_numeric<R: Rng + ?Sized>(
    kind: &ParamKind,
    good: &[ParamValue],
    bad: &[ParamValue],
    n_candidates: usize,
    rng: &mut R,
) -> ParamValue {
    let domain = match *kind {
        ParamKind::Int { low, high } => {
            if low == high {
                return ParamValue::Int(low);
            }
            Domain {
                low: low as f64 - 0.5,
                high: high as f64 + 0.5,
                to_internal: |x| x,
            }
        }
        ParamKind::Float { low, high, log } => {
            if low == high {
                return ParamValue::Float(low);
            }
            if log {
                Domain {
                    low: low.ln(),
                    high: high.ln(),
                    to_internal: f64::ln,
                }
            } else {
                Domain {
                    low,
                    high,
                    to_internal: |x| x,
                }
            }
        }
        ParamKind::Categorical { .. } => unreachable!("categoricals are handled separately"),
    };
    let internal = |obs: &[ParamValue]| -> Vec<f64> {
        obs.iter()
            .filter_map(|v| match v {
                ParamValue::Int(i) => Some(*i as f64),
                ParamValue::Float(x) => Some(*x),
                ParamValue::Categorical(_) => None,
            })
            .map(domain.to_internal)
            .filter(|x| x.is_finite())
            .collect()
    };
    let l = Parzen::new(&internal(good), domain.low, domain.high);
    let g = Parzen::new(&internal(bad), domain.low, domain.high);

    let snap = |x: f64| -> (ParamValue, f64) {
        match *kind {
            ParamKind::Int { low, high } => {
                let v = (x.round() as i64).clamp(low, high);
                (ParamValue::Int(v), v as f64)
            }
            ParamKind::Float { low, high, log } => {
                let v = if log { x.exp() } else { x }.clamp(low, high);
                (ParamValue::Float(v), (domain.to_internal)(v))
            }
            ParamKind::Categorical { .. } => unreachable!(),
        }
    };
    let mut best: Option<(ParamValue, f64)> = None;
    for _ in 0..n_candidates {
        let (value, at) = snap(l.sample(rng));
        let ratio = l.log_pdf(at) - g.log_pdf(at);
        if best.as_ref().is_none_or(|(_, r)| ratio > *r) {
            best = Some((value, ratio));
        }
    }
    best.expect("at least one candidate").0
}

/// Equal-weight Gaussian mixture truncated to `[low, high]`.
struct Parzen {
    mus: Vec<f64>,
    sigmas: Vec<f64>,
    /// Probability mass of each component inside the range.
    masses: Vec<f64>,
    low: f64,
    high: f64,
}

const MIN_MASS: f64 = 1e-12;

fn std_normal() -> Normal {
    Normal::standard()
}

impl Parzen {
    fn new(obs: &[f64], low: f64, high: f64) -> Self {
        let range = high - low;
        let bandwidth = if obs.is_empty() {
            range
        } else {
            (range / (obs.len() as f64).sqrt()).max(1e-3 * range)
        };
        let mut mus: Vec<f64> = obs.to_vec();
        let mut sigmas = vec![bandwidth; obs.len()];
        mus.push(0.5 * (low + high));
        sigmas.push(range);
        let n = std_normal();
        let masses = mus
            .iter()
            .zip(&sigmas)
            .map(|(&mu, &s)| n.cdf((high - mu) / s) - n.cdf((low - mu) / s))
            .collect();
        Self {
            mus,
            sigmas,
            masses,
            low,
            high,
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let k = rng.gen_range(0..self.mus.len());
        let (mu, s) = (self.mus[k], self.sigmas[k]);
        let u = rng.gen::<f64>();
        if self.masses[k] < MIN_MASS {
            return self.low + u * (self.high - self.low);
        }
        let n = std_normal();
        let a = n.cdf((self.low - mu) / s);
        let x = mu + s * n.inverse_cdf(a + u * self.masses[k]);
        if x.is_finite() {
            x.clamp(self.low, self.high)
        } else {
            self.low + u * (self.high - self.low)
        }
    }

    fn log_pdf(&self, x: f64) -> f64 {
        let n = std_normal();
        let range = self.high - self.low;
        let total: f64 = self
            .mus
            .iter()
            .zip(&self.sigmas)
            .zip(&self.masses)
            .map(|((&mu, &s), &m)| {
                if m < MIN_MASS {
                    1.0 / range
                } else {
                    n.pdf((x - mu) / s) / (s * m)
                }
            })
            .sum();
        (total / self.mus.len() as f64).max(f64::MIN_POSITIVE).ln()
    }
}

//! Hyperparameter search over conditional spaces.
//!
//! A space is an ordered list of [`ParamSpec`]s; a spec with a condition is
//! only sampled when an earlier categorical parameter holds the required
//! value. This is how the classifier itself becomes a hyperparameter: the
//! top-level `classifier` choice gates `<Classifier>_<param>` children.

mod tpe;

use std::fmt::{self, Write as _};

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use tpe::{suggest_tpe, suggest_tpe_with, TpeSettings};

use crate::classifiers::{ClassifierKind, ClassifierSpec};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Categorical(String),
    Int(i64),
    Float(f64),
}

impl fmt::Display for ParamValue {
    /// Python literal style: `'ClaSyCo'`, `27`, `0.5`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Categorical(s) => write!(f, "'{s}'"),
            ParamValue::Int(i) => write!(f, "{i}"),
            ParamValue::Float(x) => write!(f, "{x:?}"),
        }
    }
}

/// Sampled parameters in sampling order.
pub type Params = IndexMap<String, ParamValue>;

/// `{'classifier': 'ClaSyCo', 'ClaSyCo_n_pop': 27, 'ClaSyCo_n_gens': 135}`
pub fn render_params(params: &Params) -> String {
    let mut out = String::from("{");
    for (i, (k, v)) in params.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let _ = write!(out, "'{k}': {v}");
    }
    out.push('}');
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    Categorical { choices: Vec<String> },
    Int { low: i64, high: i64 },
    Float { low: f64, high: f64, log: bool },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub parent: String,
    pub value: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub kind: ParamKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<Condition>,
}

impl ParamSpec {
    pub fn categorical<S: Into<String>>(name: &str, choices: impl IntoIterator<Item = S>) -> Self {
        Self {
            name: name.to_owned(),
            kind: ParamKind::Categorical {
                choices: choices.into_iter().map(Into::into).collect(),
            },
            condition: None,
        }
    }

    pub fn int(name: &str, low: i64, high: i64) -> Self {
        Self {
            name: name.to_owned(),
            kind: ParamKind::Int { low, high },
            condition: None,
        }
    }

    pub fn float(name: &str, low: f64, high: f64, log: bool) -> Self {
        Self {
            name: name.to_owned(),
            kind: ParamKind::Float { low, high, log },
            condition: None,
        }
    }

    /// Only sample this parameter when `parent` took `value`.
    pub fn when(mut self, parent: &str, value: &str) -> Self {
        self.condition = Some(Condition {
            parent: parent.to_owned(),
            value: value.to_owned(),
        });
        self
    }

    pub fn is_active(&self, params: &Params) -> bool {
        match &self.condition {
            None => true,
            Some(c) => matches!(params.get(&c.parent), Some(ParamValue::Categorical(v)) if *v == c.value),
        }
    }

    /// Whether `value` lies in this parameter's domain.
    pub fn contains(&self, value: &ParamValue) -> bool {
        match (&self.kind, value) {
            (ParamKind::Categorical { choices }, ParamValue::Categorical(v)) => choices.contains(v),
            (ParamKind::Int { low, high }, ParamValue::Int(v)) => low <= v && v <= high,
            (ParamKind::Float { low, high, .. }, ParamValue::Float(v)) => low <= v && v <= high,
            _ => false,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match &self.kind {
            ParamKind::Categorical { choices } => !choices.is_empty(),
            ParamKind::Int { low, high } => low <= high,
            ParamKind::Float { low, high, log } => {
                low.is_finite() && high.is_finite() && low <= high && (!log || *low > 0.0)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::arg(format!("parameter '{}' has an empty domain", self.name)))
        }
    }
}

/// Checks domains and that every condition names an earlier categorical.
pub fn validate_space(space: &[ParamSpec]) -> Result<()> {
    for (i, spec) in space.iter().enumerate() {
        spec.validate()?;
        if space[..i].iter().any(|s| s.name == spec.name) {
            return Err(Error::arg(format!("duplicate parameter '{}'", spec.name)));
        }
        if let Some(c) = &spec.condition {
            let parent = space[..i].iter().find(|s| s.name == c.parent);
            if !matches!(
                parent,
                Some(ParamSpec {
                    kind: ParamKind::Categorical { .. },
                    ..
                })
            ) {
                return Err(Error::arg(format!(
                    "'{}' is conditioned on '{}', which is not an earlier categorical",
                    spec.name, c.parent
                )));
            }
        }
    }
    Ok(())
}

pub const CLASSIFIER_PARAM: &str = "classifier";

fn param_range(kind: ClassifierKind, param: &str) -> (i64, i64) {
    match (kind, param) {
        (ClassifierKind::CartesianClf, "n_rows") => (1, 10),
        (ClassifierKind::CartesianClf, "n_columns") => (10, 100),
        (ClassifierKind::CartesianClf, "maxiter") => (50, 500),
        // n_pop and n_gens of the tree classifiers
        _ => (10, 300),
    }
}

/// The classifier-as-hyperparameter space over the given classifiers.
pub fn classifier_search_space_for(kinds: &[ClassifierKind]) -> Vec<ParamSpec> {
    let mut space = vec![ParamSpec::categorical(CLASSIFIER_PARAM, kinds.iter().map(|k| k.name()))];
    for &kind in kinds {
        for &param in kind.param_names() {
            let (low, high) = param_range(kind, param);
            space.push(ParamSpec::int(&format!("{kind}_{param}"), low, high).when(CLASSIFIER_PARAM, kind.name()));
        }
    }
    space
}

pub fn classifier_search_space() -> Vec<ParamSpec> {
    classifier_search_space_for(&ClassifierKind::ALL)
}

/// Reads back the classifier and its hyperparameters from a sampled point.
pub fn spec_from_params(params: &Params) -> Result<ClassifierSpec> {
    let kind: ClassifierKind = match params.get(CLASSIFIER_PARAM) {
        Some(ParamValue::Categorical(name)) => name.parse()?,
        _ => return Err(Error::arg("parameters carry no classifier choice")),
    };
    let mut values = Vec::new();
    for &name in kind.param_names() {
        let key = format!("{kind}_{name}");
        match params.get(&key) {
            Some(ParamValue::Int(v)) if *v >= 0 => values.push((name, *v as usize)),
            _ => return Err(Error::arg(format!("missing integer parameter '{key}'"))),
        }
    }
    ClassifierSpec::from_params(kind, values)
}

fn sample_uniform<R: Rng + ?Sized>(spec: &ParamSpec, rng: &mut R) -> ParamValue {
    match &spec.kind {
        ParamKind::Categorical { choices } => ParamValue::Categorical(choices[rng.gen_range(0..choices.len())].clone()),
        ParamKind::Int { low, high } => ParamValue::Int(rng.gen_range(*low..=*high)),
        ParamKind::Float { low, high, log } => {
            if low == high {
                return ParamValue::Float(*low);
            }
            let v = if *log {
                rng.gen_range(low.ln()..=high.ln()).exp().clamp(*low, *high)
            } else {
                rng.gen_range(*low..=*high)
            };
            ParamValue::Float(v)
        }
    }
}

/// Uniform draw for every active parameter (log-uniform where flagged).
pub fn suggest_random<R: Rng + ?Sized>(space: &[ParamSpec], rng: &mut R) -> Params {
    let mut params = Params::new();
    for spec in space {
        if spec.is_active(&params) {
            let v = sample_uniform(spec, rng);
            params.insert(spec.name.clone(), v);
        }
    }
    params
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialState {
    Complete,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub id: usize,
    pub params: Params,
    /// Higher is better. `None` for failed trials.
    pub score: Option<f64>,
    pub state: TrialState,
    /// Reserved for pruning; unused by the samplers.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub intermediate: Vec<f64>,
}

impl Trial {
    pub fn complete_score(&self) -> Option<f64> {
        match self.state {
            TrialState::Complete => self.score,
            TrialState::Failed => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampler {
    Random,
    Tpe,
}

impl std::str::FromStr for Sampler {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Sampler::Random),
            "tpe" => Ok(Sampler::Tpe),
            _ => Err(Error::arg(format!("unknown sampler '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Study {
    pub space: Vec<ParamSpec>,
    pub sampler: Sampler,
    pub seed: u64,
    #[serde(skip)]
    pub trials: Vec<Trial>,
}

impl Study {
    /// Header line with space, sampler and seed, then one JSON trial per line.
    pub fn to_lines(&self) -> String {
        let mut out = serde_json::to_string(self).expect("study header serializes");
        out.push('\n');
        for t in &self.trials {
            out.push_str(&serde_json::to_string(t).expect("trial serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_lines(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty study file".into()))?;
        let mut study: Study = serde_json::from_str(header).map_err(|e| Error::Parse(e.to_string()))?;
        for line in lines {
            study
                .trials
                .push(serde_json::from_str(line).map_err(|e| Error::Parse(e.to_string()))?);
        }
        Ok(study)
    }
}

/// Samples, evaluates and records `n_trials` trials in order. An objective
/// error or a non-finite score marks that trial failed; the study goes on.
pub fn run_study<F, E>(
    space: &[ParamSpec],
    mut objective: F,
    n_trials: usize,
    sampler: Sampler,
    seed: u64,
) -> Result<Study>
where
    F: FnMut(&Params) -> std::result::Result<f64, E>,
{
    validate_space(space)?;
    if n_trials == 0 {
        return Err(Error::arg("a study needs at least one trial"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trials: Vec<Trial> = Vec::with_capacity(n_trials);
    for id in 0..n_trials {
        let params = match sampler {
            Sampler::Random => suggest_random(space, &mut rng),
            Sampler::Tpe => suggest_tpe(space, &trials, &mut rng),
        };
        let (score, state) = match objective(&params) {
            Ok(s) if s.is_finite() => (Some(s), TrialState::Complete),
            _ => (None, TrialState::Failed),
        };
        trials.push(Trial {
            id,
            params,
            score,
            state,
            intermediate: Vec::new(),
        });
    }
    if trials.iter().all(|t| t.state == TrialState::Failed) {
        return Err(Error::NoCompleteTrials);
    }
    Ok(Study {
        space: space.to_vec(),
        sampler,
        seed,
        trials,
    })
}

/// Complete trial with the highest score, lowest id on ties.
pub fn best_trial(study: &Study) -> Result<&Trial> {
    let mut best: Option<(&Trial, f64)> = None;
    for t in &study.trials {
        if let Some(s) = t.complete_score() {
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((t, s));
            }
        }
    }
    best.map(|(t, _)| t).ok_or(Error::NoCompleteTrials)
}

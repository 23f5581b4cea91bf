//! The three classifiers behind a common fit/predict surface.

mod fit;
mod model_io;

use std::fmt;
use std::str::FromStr;

pub use fit::{clasyco_fitness, fit, fit_clasyco, fit_clasyco_with_trace, fit_ovr_cgp, fit_ovr_gp, FitOptions};
pub use model_io::ModelFile;

use crate::cgp::CgpGenome;
use crate::error::{Error, Result};
use crate::expr::ExprTree;
use crate::matrix::Matrix;
use crate::metrics::{argmax_unchecked, softmax_in_place};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClassifierKind {
    GPLearnClf,
    CartesianClf,
    ClaSyCo,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 3] = [
        ClassifierKind::GPLearnClf,
        ClassifierKind::CartesianClf,
        ClassifierKind::ClaSyCo,
    ];

    pub const fn name(self) -> &'static str {
        match self {
            ClassifierKind::GPLearnClf => "GPLearnClf",
            ClassifierKind::CartesianClf => "CartesianClf",
            ClassifierKind::ClaSyCo => "ClaSyCo",
        }
    }

    /// Names of the tunable hyperparameters, in canonical order.
    pub const fn param_names(self) -> &'static [&'static str] {
        match self {
            ClassifierKind::GPLearnClf | ClassifierKind::ClaSyCo => &["n_pop", "n_gens"],
            ClassifierKind::CartesianClf => &["n_rows", "n_columns", "maxiter"],
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::arg(format!("unknown classifier '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Hyperparams {
    Tree {
        n_pop: usize,
        n_gens: usize,
    },
    Cartesian {
        n_rows: usize,
        n_columns: usize,
        maxiter: usize,
    },
}

/// A classifier choice with its hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ClassifierSpec {
    pub kind: ClassifierKind,
    pub hyperparams: Hyperparams,
}

impl ClassifierSpec {
    pub fn gplearn(n_pop: usize, n_gens: usize) -> Self {
        Self {
            kind: ClassifierKind::GPLearnClf,
            hyperparams: Hyperparams::Tree { n_pop, n_gens },
        }
    }

    pub fn cartesian(n_rows: usize, n_columns: usize, maxiter: usize) -> Self {
        Self {
            kind: ClassifierKind::CartesianClf,
            hyperparams: Hyperparams::Cartesian {
                n_rows,
                n_columns,
                maxiter,
            },
        }
    }

    pub fn clasyco(n_pop: usize, n_gens: usize) -> Self {
        Self {
            kind: ClassifierKind::ClaSyCo,
            hyperparams: Hyperparams::Tree { n_pop, n_gens },
        }
    }

    /// Builds a spec from `name = value` pairs; every parameter of `kind`
    /// must be given exactly once.
    pub fn from_params<'a>(kind: ClassifierKind, params: impl IntoIterator<Item = (&'a str, usize)>) -> Result<Self> {
        let names = kind.param_names();
        let mut values: Vec<Option<usize>> = vec![None; names.len()];
        for (name, value) in params {
            let slot = names
                .iter()
                .position(|n| *n == name)
                .ok_or_else(|| Error::arg(format!("{kind} has no hyperparameter '{name}'")))?;
            if values[slot].replace(value).is_some() {
                return Err(Error::arg(format!("hyperparameter '{name}' given twice")));
            }
        }
        let v = |i: usize| values[i].ok_or_else(|| Error::arg(format!("{kind} needs '{}'", names[i])));
        let spec = match kind {
            ClassifierKind::GPLearnClf => Self::gplearn(v(0)?, v(1)?),
            ClassifierKind::ClaSyCo => Self::clasyco(v(0)?, v(1)?),
            ClassifierKind::CartesianClf => Self::cartesian(v(0)?, v(1)?, v(2)?),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Parses `n_pop=50,n_gens=30`.
    pub fn parse(kind: ClassifierKind, s: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (name, value) = part
                .split_once('=')
                .ok_or_else(|| Error::arg(format!("expected name=value, got '{part}'")))?;
            let value = value
                .trim()
                .parse::<usize>()
                .map_err(|e| Error::arg(format!("hyperparameter '{}': {e}", name.trim())))?;
            pairs.push((name.trim(), value));
        }
        Self::from_params(kind, pairs)
    }

    pub fn params(&self) -> Vec<(&'static str, usize)> {
        let names = self.kind.param_names();
        let values: Vec<usize> = match self.hyperparams {
            Hyperparams::Tree { n_pop, n_gens } => vec![n_pop, n_gens],
            Hyperparams::Cartesian {
                n_rows,
                n_columns,
                maxiter,
            } => vec![n_rows, n_columns, maxiter],
        };
        names.iter().copied().zip(values).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match (self.kind, self.hyperparams) {
            (ClassifierKind::GPLearnClf | ClassifierKind::ClaSyCo, Hyperparams::Tree { n_pop, n_gens }) => {
                n_pop >= 2 && n_gens >= 1
            }
            (
                ClassifierKind::CartesianClf,
                Hyperparams::Cartesian {
                    n_rows,
                    n_columns,
                    maxiter,
                },
            ) => n_rows >= 1 && n_columns >= 1 && maxiter >= 1,
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::arg(format!("invalid hyperparameters for {}: {self}", self.kind)))
        }
    }
}

impl fmt::Display for ClassifierSpec {
    /// `n_pop=50,n_gens=30`
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.params().iter().map(|(n, v)| format!("{n}={v}")).collect();
        f.write_str(&parts.join(","))
    }
}

/// The per-class individuals of a one-vs-rest model.
#[derive(Clone, Debug, PartialEq)]
pub enum Individuals {
    Trees(Vec<ExprTree>),
    Genomes(Vec<CgpGenome>),
}

impl Individuals {
    fn len(&self) -> usize {
        match self {
            Individuals::Trees(t) => t.len(),
            Individuals::Genomes(g) => g.len(),
        }
    }

    fn eval(&self, class: usize, columns: &[Vec<f64>]) -> Result<Vec<f64>> {
        match self {
            Individuals::Trees(t) => t[class].eval_columns(columns),
            Individuals::Genomes(g) => g[class].eval_columns(columns),
        }
    }
}

/// C independently evolved binary discriminators.
#[derive(Clone, Debug, PartialEq)]
pub struct OvRModel {
    pub kind: ClassifierKind,
    pub per_class: Individuals,
    pub class_labels: Vec<String>,
    pub n_features: usize,
}

/// C cooperatively evolved trees whose outputs feed a softmax.
#[derive(Clone, Debug, PartialEq)]
pub struct ClaSyCoModel {
    pub per_class: Vec<ExprTree>,
    pub class_labels: Vec<String>,
    pub n_features: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    OvR(OvRModel),
    ClaSyCo(ClaSyCoModel),
}

/// `ln(sigmoid(z))` without underflow for large negative `z`.
fn log_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        -(-z).exp().ln_1p()
    } else {
        z - z.exp().ln_1p()
    }
}

impl Model {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            Model::OvR(m) => m.kind,
            Model::ClaSyCo(_) => ClassifierKind::ClaSyCo,
        }
    }

    pub fn class_labels(&self) -> &[String] {
        match self {
            Model::OvR(m) => &m.class_labels,
            Model::ClaSyCo(m) => &m.class_labels,
        }
    }

    pub fn n_classes(&self) -> usize {
        self.class_labels().len()
    }

    pub fn n_features(&self) -> usize {
        match self {
            Model::OvR(m) => m.n_features,
            Model::ClaSyCo(m) => m.n_features,
        }
    }

    /// Raw per-class outputs, `n_samples x C`.
    pub fn raw_outputs(&self, x: &Matrix) -> Result<Matrix> {
        if x.n_cols() != self.n_features() {
            return Err(Error::arg(format!(
                "model expects {} features, data has {}",
                self.n_features(),
                x.n_cols()
            )));
        }
        let columns = x.columns();
        let outputs = (0..self.n_classes())
            .map(|c| match self {
                Model::OvR(m) => m.per_class.eval(c, &columns),
                Model::ClaSyCo(m) => m.per_class[c].eval_columns(&columns),
            })
            .collect::<Result<Vec<_>>>()?;
        Matrix::from_columns(&outputs)
    }

    /// Class probabilities, rows summing to one.
    ///
    /// ClaSyCo rows are the softmax of the raw outputs. One-vs-rest rows are
    /// the per-class sigmoid scores divided by their sum, computed in log
    /// space so that saturated scores stay ordered.
    pub fn predict_proba(&self, x: &Matrix) -> Result<Matrix> {
        let mut out = self.raw_outputs(x)?;
        let n_classes = self.n_classes();
        let mut row = vec![0.0; n_classes];
        for i in 0..out.n_rows() {
            row.copy_from_slice(out.row(i));
            if let Model::OvR(_) = self {
                for v in row.iter_mut() {
                    *v = log_sigmoid(*v);
                }
            }
            softmax_in_place(&mut row);
            for (c, &p) in row.iter().enumerate() {
                out.set(i, c, p);
            }
        }
        Ok(out)
    }

    /// Class index per sample: the argmax of the probability row, lowest
    /// class on ties.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        let proba = self.predict_proba(x)?;
        Ok(proba.rows().map(argmax_unchecked).collect())
    }

    pub fn predict_labels(&self, x: &Matrix) -> Result<Vec<String>> {
        let labels = self.class_labels();
        Ok(self.predict(x)?.into_iter().map(|c| labels[c].clone()).collect())
    }

    pub(crate) fn check(&self) -> Result<()> {
        let n_models = match self {
            Model::OvR(m) => m.per_class.len(),
            Model::ClaSyCo(m) => m.per_class.len(),
        };
        if self.n_classes() < 2 || n_models != self.n_classes() {
            return Err(Error::arg(format!(
                "model has {n_models} per-class individuals for {} classes",
                self.n_classes()
            )));
        }
        Ok(())
    }
}

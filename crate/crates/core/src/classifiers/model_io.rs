//! Text model files.
//!
//! ```text
//! srclass-model 1
//! kind<TAB>ClaSyCo
//! hyperparams<TAB>n_pop=50,n_gens=30
//! seed<TAB>42
//! classes<TAB>a<TAB>b<TAB>c
//! features<TAB>f1<TAB>f2
//! label<TAB>species
//! scaler_mean<TAB>0.1<TAB>-2.5
//! scaler_scale<TAB>1.0<TAB>0.75
//! cgp<TAB>2 20 20 2 add,sub,...        (CartesianClf only)
//! model<TAB>0<TAB>add(x0, x1)          (genes for CartesianClf)
//! ```
//!
//! Reals are written in shortest round-trip form, so a file written and read
//! back yields an identical model.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{ClaSyCoModel, ClassifierKind, ClassifierSpec, Individuals, Model, OvRModel};
use crate::cgp::{CgpConfig, CgpGenome};
use crate::data::ScalerParams;
use crate::error::{Error, Result};
use crate::expr::ExprTree;

const MAGIC: &str = "srclass-model 1";

/// A fitted model with everything needed to apply it to raw data.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelFile {
    pub model: Model,
    pub spec: ClassifierSpec,
    pub seed: u64,
    pub feature_names: Vec<String>,
    pub label_column: Option<String>,
    pub scaler: Option<ScalerParams>,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::Parse(format!("invalid model: {}", msg.into()))
}

fn join_reals(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join("\t")
}

impl ModelFile {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC}");
        let _ = writeln!(out, "kind\t{}", self.model.kind());
        let _ = writeln!(out, "hyperparams\t{}", self.spec);
        let _ = writeln!(out, "seed\t{}", self.seed);
        let _ = writeln!(out, "classes\t{}", self.model.class_labels().join("\t"));
        let _ = writeln!(out, "features\t{}", self.feature_names.join("\t"));
        if let Some(label) = &self.label_column {
            let _ = writeln!(out, "label\t{label}");
        }
        if let Some(s) = &self.scaler {
            let _ = writeln!(out, "scaler_mean\t{}", join_reals(&s.mean));
            let _ = writeln!(out, "scaler_scale\t{}", join_reals(&s.scale));
        }
        match &self.model {
            Model::OvR(m) => match &m.per_class {
                Individuals::Trees(trees) => {
                    for (c, t) in trees.iter().enumerate() {
                        let _ = writeln!(out, "model\t{c}\t{t}");
                    }
                }
                Individuals::Genomes(genomes) => {
                    if let Some(g) = genomes.first() {
                        let _ = writeln!(out, "cgp\t{}", g.config());
                    }
                    for (c, g) in genomes.iter().enumerate() {
                        let _ = writeln!(out, "model\t{c}\t{}", g.genes_string());
                    }
                }
            },
            Model::ClaSyCo(m) => {
                for (c, t) in m.per_class.iter().enumerate() {
                    let _ = writeln!(out, "model\t{c}\t{t}");
                }
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(MAGIC) {
            return Err(invalid("missing header"));
        }
        let mut kind = None;
        let mut hyper = None;
        let mut seed = None;
        let mut classes: Option<Vec<String>> = None;
        let mut features: Option<Vec<String>> = None;
        let mut label_column = None;
        let mut mean = None;
        let mut scale = None;
        let mut cgp: Option<CgpConfig> = None;
        let mut bodies: Vec<String> = Vec::new();

        let reals = |fields: &[&str]| -> Result<Vec<f64>> {
            fields
                .iter()
                .map(|f| f.parse::<f64>().map_err(|_| invalid(format!("bad real '{f}'"))))
                .collect()
        };

        for line in lines.filter(|l| !l.is_empty()) {
            let fields: Vec<&str> = line.split('\t').collect();
            let rest = &fields[1..];
            match fields[0] {
                "kind" => {
                    kind = Some(
                        rest.first()
                            .ok_or_else(|| invalid("empty kind"))?
                            .parse::<ClassifierKind>()?,
                    )
                }
                "hyperparams" => hyper = Some(rest.first().copied().unwrap_or("").to_owned()),
                "seed" => {
                    seed = Some(
                        rest.first()
                            .and_then(|s| s.parse::<u64>().ok())
                            .ok_or_else(|| invalid("bad seed"))?,
                    )
                }
                "classes" => classes = Some(rest.iter().map(|s| s.to_string()).collect()),
                "features" => features = Some(rest.iter().map(|s| s.to_string()).collect()),
                "label" => label_column = rest.first().map(|s| s.to_string()),
                "scaler_mean" => mean = Some(reals(rest)?),
                "scaler_scale" => scale = Some(reals(rest)?),
                "cgp" => cgp = Some(rest.first().ok_or_else(|| invalid("empty cgp header"))?.parse()?),
                "model" => {
                    let idx = rest.first().and_then(|s| s.parse::<usize>().ok());
                    if idx != Some(bodies.len()) || rest.len() != 2 {
                        return Err(invalid(format!("model line out of order: '{line}'")));
                    }
                    bodies.push(rest[1].to_owned());
                }
                other => return Err(invalid(format!("unknown record '{other}'"))),
            }
        }

        let kind = kind.ok_or_else(|| invalid("missing kind"))?;
        let spec = ClassifierSpec::parse(kind, &hyper.ok_or_else(|| invalid("missing hyperparams"))?)
            .map_err(|e| invalid(e.to_string()))?;
        let class_labels = classes.ok_or_else(|| invalid("missing classes"))?;
        let feature_names = features.ok_or_else(|| invalid("missing features"))?;
        let n_features = feature_names.len();
        let scaler = match (mean, scale) {
            (Some(mean), Some(scale)) => {
                if mean.len() != n_features
                    || scale.len() != n_features
                    || scale.iter().any(|&s| !s.is_finite() || s <= 0.0)
                {
                    return Err(invalid("scaler does not match features"));
                }
                Some(ScalerParams { mean, scale })
            }
            (None, None) => None,
            _ => return Err(invalid("incomplete scaler")),
        };

        let trees = || -> Result<Vec<ExprTree>> {
            bodies
                .iter()
                .map(|b| {
                    let t: ExprTree = b.parse().map_err(|e: Error| invalid(e.to_string()))?;
                    if t.max_feature().is_some_and(|f| f >= n_features) {
                        return Err(invalid(format!("tree '{b}' reads a missing feature")));
                    }
                    Ok(t)
                })
                .collect()
        };
        let model = match kind {
            ClassifierKind::GPLearnClf => Model::OvR(OvRModel {
                kind,
                per_class: Individuals::Trees(trees()?),
                class_labels,
                n_features,
            }),
            ClassifierKind::ClaSyCo => Model::ClaSyCo(ClaSyCoModel {
                per_class: trees()?,
                class_labels,
                n_features,
            }),
            ClassifierKind::CartesianClf => {
                let config = cgp.ok_or_else(|| invalid("missing cgp header"))?;
                if config.n_features != n_features {
                    return Err(invalid("cgp header disagrees with features"));
                }
                let genomes = bodies
                    .iter()
                    .map(|b| CgpGenome::parse_genes(config.clone(), b).map_err(|e| invalid(e.to_string())))
                    .collect::<Result<Vec<_>>>()?;
                Model::OvR(OvRModel {
                    kind,
                    per_class: Individuals::Genomes(genomes),
                    class_labels,
                    n_features,
                })
            }
        };
        model.check().map_err(|e| invalid(e.to_string()))?;
        Ok(Self {
            model,
            spec,
            seed: seed.ok_or_else(|| invalid("missing seed"))?,
            feature_names,
            label_column,
            scaler,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::NotFound(path.to_path_buf()));
        }
        let text = fs::read_to_string(path).map_err(|_| invalid("not UTF-8 text"))?;
        Self::from_text(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::{fit, FitOptions};
    use crate::matrix::Matrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_file(spec: ClassifierSpec) -> ModelFile {
        let x = Matrix::from_rows(&[
            [0.1, 1.0],
            [-0.5, 2.0],
            [1.5, -1.0],
            [-2.0, 0.3],
            [0.7, 0.7],
            [-0.2, -0.9],
        ])
        .unwrap();
        let y = [0, 1, 2, 1, 0, 2];
        let labels: Vec<String> = ["a", "b", "c"].map(String::from).to_vec();
        let model = fit(
            &spec,
            &x,
            &y,
            &labels,
            &FitOptions::default(),
            &mut ChaCha8Rng::seed_from_u64(3),
        )
        .unwrap();
        ModelFile {
            model,
            spec,
            seed: 3,
            feature_names: vec!["u".into(), "v".into()],
            label_column: Some("class".into()),
            scaler: Some(ScalerParams {
                mean: vec![0.1, -1.0 / 3.0],
                scale: vec![1.0, 0.123456789],
            }),
        }
    }

    #[test]
    fn round_trips_every_kind() {
        for spec in [
            ClassifierSpec::gplearn(10, 3),
            ClassifierSpec::cartesian(2, 4, 10),
            ClassifierSpec::clasyco(10, 3),
        ] {
            let file = sample_file(spec);
            let text = file.to_text();
            let back = ModelFile::from_text(&text).unwrap();
            assert_eq!(back, file);
            assert_eq!(back.to_text(), text);
        }
    }

    #[test]
    fn rejects_corruption() {
        let text = sample_file(ClassifierSpec::clasyco(10, 3)).to_text();
        assert!(ModelFile::from_text("hello").is_err());
        assert!(ModelFile::from_text(&text.replace("kind\tClaSyCo", "kind\tNope")).is_err());
        assert!(ModelFile::from_text(&text.replace("model\t2\t", "model\t5\t")).is_err());
        let truncated: String = text
            .lines()
            .take(text.lines().count() - 1)
            .map(|l| format!("{l}\n"))
            .collect();
        let err = ModelFile::from_text(&truncated).unwrap_err();
        assert!(err.to_string().contains("invalid model"));
    }
}

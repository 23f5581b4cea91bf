use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use srclass::classifiers::{fit, ClassifierKind, ClassifierSpec, FitOptions, ModelFile};
use srclass::data::{fit_scaler, load_csv, load_features, train_test_split, LabelColumn};
use srclass::metrics::balanced_accuracy;
use srclass::{Error, Result};

use crate::benchmark::run_benchmark;
use crate::config::BenchmarkConfig;
use crate::records::{parse_records, render_tally, tally};

#[derive(Clone, Debug)]
pub struct FitArgs {
    pub data: PathBuf,
    pub label: String,
    pub classifier: ClassifierKind,
    /// `n_pop=50,n_gens=30` style.
    pub params: String,
    pub seed: u64,
    pub out: PathBuf,
    pub test_fraction: f64,
}

/// Split, scale on the training part, fit, save, report accuracies.
pub fn cmd_fit(args: &FitArgs, out: &mut impl Write) -> Result<()> {
    let spec = ClassifierSpec::parse(args.classifier, &args.params)?;
    let data = load_csv(&args.data, &LabelColumn::from(args.label.as_str()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let (train, test) = train_test_split(&data, args.test_fraction, &mut rng)?;
    let scaler = fit_scaler(&train.x)?;
    let x_train = scaler.transform(&train.x)?;
    let x_test = scaler.transform(&test.x)?;
    let model = fit(
        &spec,
        &x_train,
        &train.y,
        &train.class_labels,
        &FitOptions::default(),
        &mut rng,
    )?;
    let train_ba = balanced_accuracy(&train.y, &model.predict(&x_train)?)?;
    let test_ba = balanced_accuracy(&test.y, &model.predict(&x_test)?)?;
    let file = ModelFile {
        model,
        spec,
        seed: args.seed,
        feature_names: data.feature_names,
        label_column: Some(args.label.clone()),
        scaler: Some(scaler),
    };
    file.save(&args.out)?;
    writeln!(out, "train balanced accuracy: {train_ba:.4}")?;
    writeln!(out, "test balanced accuracy: {test_ba:.4}")?;
    Ok(())
}

/// Predicted labels for `data`, one per row. The label column stored with
/// the model is dropped when present.
pub fn predict_file(model: &Path, data: &Path) -> Result<Vec<String>> {
    let file = ModelFile::load(model)?;
    let (names, x) = load_features(data, file.label_column.as_deref())?;
    if names.len() != file.model.n_features() {
        return Err(Error::arg(format!(
            "feature mismatch: model expects {} features, data has {}",
            file.model.n_features(),
            names.len()
        )));
    }
    let x = match &file.scaler {
        Some(s) => s.transform(&x)?,
        None => x,
    };
    file.model.predict_labels(&x)
}

pub fn cmd_predict(model: &Path, data: &Path, out: &mut impl Write) -> Result<()> {
    for label in predict_file(model, data)? {
        writeln!(out, "{label}")?;
    }
    Ok(())
}

/// Writes records to the configured file, or to `out` when none is set.
pub fn cmd_benchmark(config_path: &Path, out: &mut impl Write) -> Result<()> {
    let config = BenchmarkConfig::load(config_path)?;
    let records = run_benchmark(&config)?;
    let text: String = records.iter().map(|r| format!("{r}\n")).collect();
    match &config.records {
        Some(path) => std::fs::write(path, text)?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

pub fn cmd_tally(records_path: &Path, out: &mut impl Write) -> Result<()> {
    if !records_path.exists() {
        return Err(Error::NotFound(records_path.to_path_buf()));
    }
    let records = parse_records(&std::fs::read_to_string(records_path)?)?;
    let (rows, total) = tally(&records)?;
    out.write_all(render_tally(&rows, total).as_bytes())?;
    Ok(())
}

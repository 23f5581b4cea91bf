use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srclass::classifiers::{fit, FitOptions};
use srclass::data::{fit_scaler, load_csv, train_test_split, Dataset, LabelColumn};
use srclass::evolution::EvoConfig;
use srclass::hpo::{
    best_trial, classifier_search_space_for, render_params, run_study, spec_from_params, ParamValue, CLASSIFIER_PARAM,
};
use srclass::metrics::balanced_accuracy;
use srclass::{par, Result};

use crate::config::BenchmarkConfig;
use crate::records::{Outcome, ReplicateRecord};

/// Runs every replicate of every dataset. Datasets may run concurrently;
/// records come back grouped by dataset in config order, replicates
/// ascending.
pub fn run_benchmark(config: &BenchmarkConfig) -> Result<Vec<ReplicateRecord>> {
    config.validate()?;
    let datasets: Vec<(String, Dataset)> = config
        .datasets
        .iter()
        .map(|entry| {
            Ok((
                entry.id(),
                load_csv(&entry.path, &LabelColumn::from(entry.label.as_str()))?,
            ))
        })
        .collect::<Result<_>>()?;
    let per_dataset = par::map(&datasets, config.parallel, |(id, data)| run_dataset(config, id, data));
    Ok(per_dataset.into_iter().flatten().collect())
}

/// Replicates of one dataset. The time budget is checked before each
/// replicate after the first: a running replicate always finishes.
pub fn run_dataset(config: &BenchmarkConfig, id: &str, data: &Dataset) -> Vec<ReplicateRecord> {
    let start = Instant::now();
    let mut records = Vec::with_capacity(config.n_replicates);
    for r in 0..config.n_replicates {
        if let Some(budget) = config.time_budget {
            if r > 0 && start.elapsed() >= budget {
                eprintln!(
                    "{id}: time budget spent after {r} of {} replicates, skipping the rest",
                    config.n_replicates
                );
                break;
            }
        }
        records.push(run_replicate(config, id, data, r));
    }
    records
}

pub fn run_replicate(config: &BenchmarkConfig, id: &str, data: &Dataset, replicate: usize) -> ReplicateRecord {
    let start = Instant::now();
    let seed = config.seed.wrapping_add(replicate as u64);
    let outcome = replicate_outcome(config, data, seed).unwrap_or_else(|e| Outcome::Failed { reason: e.to_string() });
    let elapsed = start.elapsed().as_secs_f64();
    match &outcome {
        Outcome::Won { winner, accuracy, .. } => {
            eprintln!("{id} replicate {replicate}: {winner} ({accuracy:.4}) in {elapsed:.1}s")
        }
        Outcome::Failed { reason } => eprintln!("{id} replicate {replicate}: failed: {reason}"),
    }
    ReplicateRecord {
        dataset: id.to_owned(),
        replicate,
        outcome,
        wall_time: config.record_wall_time.then_some(elapsed),
    }
}

fn replicate_outcome(config: &BenchmarkConfig, data: &Dataset, seed: u64) -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (train, test) = train_test_split(data, config.test_fraction, &mut rng)?;
    let scaler = fit_scaler(&train.x)?;
    let x_train = scaler.transform(&train.x)?;
    let x_test = scaler.transform(&test.x)?;
    let options = FitOptions {
        evo: EvoConfig {
            parallel: config.parallel,
            ..EvoConfig::default()
        },
        ..FitOptions::default()
    };
    let space = classifier_search_space_for(&config.classifiers);
    let study_seed: u64 = rng.gen();
    // Trials are scored on the test split; there is no separate validation
    // fold.
    let study = run_study(
        &space,
        |params| -> Result<f64> {
            let spec = spec_from_params(params)?;
            let model = fit(&spec, &x_train, &train.y, &train.class_labels, &options, &mut rng)?;
            balanced_accuracy(&test.y, &model.predict(&x_test)?)
        },
        config.n_trials,
        config.sampler,
        study_seed,
    )?;
    let best = best_trial(&study)?;
    let winner = match best.params.get(CLASSIFIER_PARAM) {
        Some(ParamValue::Categorical(name)) => name.clone(),
        _ => unreachable!("every trial samples a classifier"),
    };
    Ok(Outcome::Won {
        winner,
        params: render_params(&best.params),
        accuracy: best.score.expect("best trial is complete"),
    })
}

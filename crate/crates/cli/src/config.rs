use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use srclass::classifiers::ClassifierKind;
use srclass::hpo::Sampler;
use srclass::{Error, Result};

/// A dataset to benchmark on: a CSV path and the name (or zero-based index)
/// of its label column.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetEntry {
    pub path: PathBuf,
    pub label: String,
}

impl DatasetEntry {
    /// File stem, used as the dataset id in records.
    pub fn id(&self) -> String {
        self.path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| self.path.display().to_string())
    }
}

pub const DEFAULT_LABEL: &str = "target";

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkConfig {
    pub datasets: Vec<DatasetEntry>,
    pub n_replicates: usize,
    pub n_trials: usize,
    pub sampler: Sampler,
    pub seed: u64,
    /// Per dataset; checked between replicates.
    pub time_budget: Option<Duration>,
    pub classifiers: Vec<ClassifierKind>,
    pub test_fraction: f64,
    /// Where records go; `None` means standard output.
    pub records: Option<PathBuf>,
    pub record_wall_time: bool,
    pub parallel: bool,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            datasets: Vec::new(),
            n_replicates: 20,
            n_trials: 100,
            sampler: Sampler::Tpe,
            seed: 0,
            time_budget: None,
            classifiers: ClassifierKind::ALL.to_vec(),
            test_fraction: 0.2,
            records: None,
            record_wall_time: false,
            parallel: true,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str, line: usize) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}: invalid value '{value}' for '{key}'")))
}

fn parse_bool(key: &str, value: &str, line: usize) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Parse(format!(
            "line {line}: '{key}' expects true or false, got '{value}'"
        ))),
    }
}

impl BenchmarkConfig {
    /// Parses the flat `key = value` format. Relative paths are taken
    /// relative to `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut config = BenchmarkConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split_once('#').map_or(raw, |(c, _)| c).trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::Parse(format!("line {line}: expected key = value")))?;
            match key {
                "dataset" => {
                    let (path, label) = match value.rsplit_once(':') {
                        Some((p, l)) if !p.is_empty() && !l.contains(['/', '\\']) => (p, l.trim()),
                        _ => (value, DEFAULT_LABEL),
                    };
                    config.datasets.push(DatasetEntry {
                        path: base_dir.join(path.trim()),
                        label: label.to_owned(),
                    });
                }
                "n_replicates" => config.n_replicates = parse_value(key, value, line)?,
                "n_trials" => config.n_trials = parse_value(key, value, line)?,
                "sampler" => config.sampler = value.parse()?,
                "seed" => config.seed = parse_value(key, value, line)?,
                "time_budget_secs" => {
                    let secs: f64 = parse_value(key, value, line)?;
                    if !(secs.is_finite() && secs > 0.0) {
                        return Err(Error::Parse(format!("line {line}: time budget must be positive")));
                    }
                    config.time_budget = Some(Duration::from_secs_f64(secs));
                }
                "classifiers" => {
                    config.classifiers = value
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(ClassifierKind::from_str)
                        .collect::<Result<_>>()?;
                }
                "test_fraction" => config.test_fraction = parse_value(key, value, line)?,
                "records" => config.records = Some(base_dir.join(value)),
                "record_wall_time" => config.record_wall_time = parse_bool(key, value, line)?,
                "parallel" => config.parallel = parse_bool(key, value, line)?,
                _ => return Err(Error::Parse(format!("line {line}: unknown key '{key}'"))),
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::NotFound(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() {
            return Err(Error::arg("benchmark config lists no dataset"));
        }
        if self.n_replicates == 0 {
            return Err(Error::arg("n_replicates must be at least 1"));
        }
        if self.n_trials == 0 {
            return Err(Error::arg("n_trials must be at least 1"));
        }
        if self.classifiers.is_empty() {
            return Err(Error::arg("classifier subset is empty"));
        }
        let mut sorted = self.classifiers.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.classifiers.len() {
            return Err(Error::arg("classifier subset lists a classifier twice"));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::arg("test_fraction must lie in (0, 1)"));
        }
        Ok(())
    }

    /// Renders back to the file format, with absolute paths.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for d in &self.datasets {
            let _ = writeln!(out, "dataset = {}:{}", d.path.display(), d.label);
        }
        let _ = writeln!(out, "n_replicates = {}", self.n_replicates);
        let _ = writeln!(out, "n_trials = {}", self.n_trials);
        let sampler = match self.sampler {
            Sampler::Random => "random",
            Sampler::Tpe => "tpe",
        };
        let _ = writeln!(out, "sampler = {sampler}");
        let _ = writeln!(out, "seed = {}", self.seed);
        if let Some(budget) = self.time_budget {
            let _ = writeln!(out, "time_budget_secs = {}", budget.as_secs_f64());
        }
        let names: Vec<&str> = self.classifiers.iter().map(|k| k.name()).collect();
        let _ = writeln!(out, "classifiers = {}", names.join(","));
        let _ = writeln!(out, "test_fraction = {}", self.test_fraction);
        if let Some(records) = &self.records {
            let _ = writeln!(out, "records = {}", records.display());
        }
        let _ = writeln!(out, "record_wall_time = {}", self.record_wall_time);
        let _ = writeln!(out, "parallel = {}", self.parallel);
        out
    }
}

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use srclass::{Error, Result};

/// Outcome of one benchmark replicate. One tab-separated line per record:
/// dataset, replicate, winner, params, accuracy, wall time.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplicateRecord {
    pub dataset: String,
    pub replicate: usize,
    pub outcome: Outcome,
    /// Seconds; written as `-` when not recorded.
    pub wall_time: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Outcome {
    Won {
        winner: String,
        /// Rendered best-trial parameters.
        params: String,
        accuracy: f64,
    },
    Failed {
        reason: String,
    },
}

pub const FAILED: &str = "failed";

fn clean(s: &str) -> String {
    s.replace(['\t', '\n', '\r'], " ")
}

impl fmt::Display for ReplicateRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}\t", clean(&self.dataset), self.replicate)?;
        match &self.outcome {
            Outcome::Won {
                winner,
                params,
                accuracy,
            } => write!(f, "{}\t{}\t{accuracy:?}", clean(winner), clean(params))?,
            Outcome::Failed { reason } => write!(f, "{FAILED}\t{}\t-", clean(reason))?,
        }
        match self.wall_time {
            Some(t) => write!(f, "\t{t:.3}"),
            None => f.write_str("\t-"),
        }
    }
}

impl FromStr for ReplicateRecord {
    type Err = Error;

    fn from_str(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.split('\t').collect();
        let bad = |msg: &str| Error::Parse(format!("invalid record '{line}': {msg}"));
        let [dataset, replicate, winner, params, accuracy, wall_time] = fields[..] else {
            return Err(bad("expected 6 tab-separated fields"));
        };
        let replicate = replicate.parse().map_err(|_| bad("replicate is not an integer"))?;
        let outcome = if winner == FAILED {
            Outcome::Failed {
                reason: params.to_owned(),
            }
        } else {
            let accuracy: f64 = accuracy.parse().map_err(|_| bad("accuracy is not a number"))?;
            if !(0.0..=1.0).contains(&accuracy) {
                return Err(bad("accuracy outside [0, 1]"));
            }
            Outcome::Won {
                winner: winner.to_owned(),
                params: params.to_owned(),
                accuracy,
            }
        };
        let wall_time = match wall_time {
            "-" => None,
            t => Some(t.parse().map_err(|_| bad("wall time is not a number"))?),
        };
        Ok(ReplicateRecord {
            dataset: dataset.to_owned(),
            replicate,
            outcome,
            wall_time,
        })
    }
}

pub fn parse_records(text: &str) -> Result<Vec<ReplicateRecord>> {
    text.lines().filter(|l| !l.trim().is_empty()).map(str::parse).collect()
}

/// Win counts per winner over successful records, most wins first, then by
/// name. Returns the rows and the number of successful records.
pub fn tally(records: &[ReplicateRecord]) -> Result<(Vec<(String, usize)>, usize)> {
    let mut wins: BTreeMap<&str, usize> = BTreeMap::new();
    for r in records {
        if let Outcome::Won { winner, .. } = &r.outcome {
            *wins.entry(winner).or_default() += 1;
        }
    }
    let total: usize = wins.values().sum();
    if total == 0 {
        return Err(Error::arg("no successful records to tally"));
    }
    let mut rows: Vec<(String, usize)> = wins.into_iter().map(|(k, v)| (k.to_owned(), v)).collect();
    rows.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok((rows, total))
}

/// `ClaSyCo -- 50.00% wins`, one line per winner.
pub fn render_tally(rows: &[(String, usize)], total: usize) -> String {
    rows.iter()
        .map(|(name, wins)| format!("{name} -- {:.2}% wins\n", 100.0 * *wins as f64 / total as f64))
        .collect()
}

use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainError;

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_acc: f64,
    /// Rate used during this epoch.
    pub lr: f64,
}

impl fmt::Display for EpochRecord {
    // shortest round-trip float formatting keeps the text form lossless
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{:?}\t{:?}\t{:?}",
            self.epoch, self.train_loss, self.val_acc, self.lr
        )
    }
}

/// Per-epoch history. Text form: one tab-separated
/// `epoch train_loss val_acc lr` line per epoch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TrainLog {
    records: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn records(&self) -> &[EpochRecord] {
        &self.records
    }

    pub(crate) fn push(&mut self, r: EpochRecord) {
        self.records.push(r);
    }

    pub fn to_text(&self) -> String {
        self.records.iter().map(|r| format!("{r}\n")).collect()
    }

    /// Inverse of [`TrainLog::to_text`]; blank lines and `#` comments are
    /// ignored.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut records = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 4 {
                return Err(format!("line {}: expected 4 fields, got {}", n + 1, f.len()));
            }
            let real = |s: &str| s.parse::<f64>().map_err(|e| format!("line {}: {e}", n + 1));
            records.push(EpochRecord {
                epoch: f[0].parse().map_err(|e| format!("line {}: {e}", n + 1))?,
                train_loss: real(f[1])?,
                val_acc: real(f[2])?,
                lr: real(f[3])?,
            });
        }
        Ok(Self { records })
    }

    /// Append the records from `from` onwards to the file at `path`.
    pub fn append_to(&self, path: &Path, from: usize) -> Result<(), TrainError> {
        let io = |source| TrainError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io)?;
        for r in self.records.iter().skip(from) {
            writeln!(file, "{r}").map_err(io)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip_is_exact() {
        let mut log = TrainLog::default();
        log.push(EpochRecord {
            epoch: 1,
            train_loss: 0.1 + 0.2,
            val_acc: 2.0 / 3.0,
            lr: 1e-4,
        });
        log.push(EpochRecord {
            epoch: 2,
            train_loss: 1e-300,
            val_acc: 1.0,
            lr: 1e-4 * 0.1,
        });
        assert_eq!(TrainLog::parse(&log.to_text()).unwrap(), log);
    }

    #[test]
    fn malformed_line_rejected() {
        assert!(TrainLog::parse("1\t0.5\t0.5\n").is_err());
        assert!(TrainLog::parse("x\t0.5\t0.5\t1e-4\n").is_err());
    }
}

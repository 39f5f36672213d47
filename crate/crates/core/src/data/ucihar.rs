//! Adapter for the UCI HAR raw-signal archive.
//!
//! Reads the archive's native layout — `train/` and `test/` splits, each
//! with nine `Inertial Signals` text files of 128 readings per row plus
//! label and subject files — and groups windows by subject, treating each
//! subject as an independent domain. A cross-domain scenario is then a
//! `(source subject, target subject)` pair.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

use super::{DomainDataset, TimeSeriesSample};

pub const CHANNELS: [&str; 9] = [
    "body_acc_x",
    "body_acc_y",
    "body_acc_z",
    "body_gyro_x",
    "body_gyro_y",
    "body_gyro_z",
    "total_acc_x",
    "total_acc_y",
    "total_acc_z",
];

pub const WINDOW: usize = 128;
pub const N_CLASSES: usize = 6;

/// All windows of the archive, grouped by subject id. Labels are 0-based.
#[derive(Debug, Clone)]
pub struct UciHarData {
    by_subject: BTreeMap<u32, Vec<(Array2<f64>, usize)>>,
}

fn read_matrix(path: &Path, expect_cols: Option<usize>) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>().map_err(|_| {
                    Error::config(format!(
                        "{} line {}: bad number {tok:?}",
                        path.display(),
                        lineno + 1
                    ))
                })
            })
            .collect::<Result<_>>()?;
        if let Some(cols) = expect_cols {
            if row.len() != cols {
                return Err(Error::config(format!(
                    "{} line {}: {} values, expected {cols}",
                    path.display(),
                    lineno + 1,
                    row.len()
                )));
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

fn read_ints(path: &Path) -> Result<Vec<i64>> {
    Ok(read_matrix(path, Some(1))?
        .into_iter()
        .map(|r| r[0] as i64)
        .collect())
}

fn load_split(dir: &Path, split: &str, out: &mut BTreeMap<u32, Vec<(Array2<f64>, usize)>>) -> Result<()> {
    let base = dir.join(split);
    let signals_dir = base.join("Inertial Signals");

    let mut channels = Vec::with_capacity(9);
    for name in CHANNELS {
        let path = signals_dir.join(format!("{name}_{split}.txt"));
        channels.push(read_matrix(&path, Some(WINDOW))?);
    }
    let n = channels[0].len();
    for (name, ch) in CHANNELS.iter().zip(&channels) {
        if ch.len() != n {
            return Err(Error::config(format!(
                "{split}: channel {name} has {} rows, expected {n}",
                ch.len()
            )));
        }
    }

    let labels = read_ints(&base.join(format!("y_{split}.txt")))?;
    let subjects = read_ints(&base.join(format!("subject_{split}.txt")))?;
    if labels.len() != n || subjects.len() != n {
        return Err(Error::config(format!(
            "{split}: {} labels / {} subjects for {n} signal rows",
            labels.len(),
            subjects.len()
        )));
    }

    for i in 0..n {
        let raw = labels[i];
        if !(1..=N_CLASSES as i64).contains(&raw) {
            return Err(Error::config(format!(
                "{split} row {}: label {raw} outside 1..{N_CLASSES}",
                i + 1
            )));
        }
        let mut window = Array2::zeros((9, WINDOW));
        for (ch, matrix) in channels.iter().enumerate() {
            for (t, &v) in matrix[i].iter().enumerate() {
                window[[ch, t]] = v;
            }
        }
        out.entry(subjects[i] as u32)
            .or_default()
            .push((window, (raw - 1) as usize));
    }
    Ok(())
}

/// Load the full archive (train and test splits merged) grouped by subject.
pub fn load_ucihar(dir: &Path) -> Result<UciHarData> {
    let mut by_subject = BTreeMap::new();
    load_split(dir, "train", &mut by_subject)?;
    load_split(dir, "test", &mut by_subject)?;
    if by_subject.is_empty() {
        return Err(Error::config("archive contains no windows"));
    }
    Ok(UciHarData { by_subject })
}

impl UciHarData {
    pub fn subjects(&self) -> Vec<u32> {
        self.by_subject.keys().copied().collect()
    }

    pub fn windows(&self, subject: u32) -> Option<&[(Array2<f64>, usize)]> {
        self.by_subject.get(&subject).map(|v| v.as_slice())
    }

    /// Build the cross-domain dataset for `source_subject -> target_subject`:
    /// all of the source subject's windows labeled, all of the target
    /// subject's windows with evaluation-only hidden labels.
    pub fn scenario(&self, source_subject: u32, target_subject: u32) -> Result<DomainDataset> {
        let src = self.by_subject.get(&source_subject).ok_or_else(|| {
            Error::config(format!("no windows for source subject {source_subject}"))
        })?;
        let tgt = self.by_subject.get(&target_subject).ok_or_else(|| {
            Error::config(format!("no windows for target subject {target_subject}"))
        })?;
        let source = src
            .iter()
            .map(|(w, l)| TimeSeriesSample::source(w.clone(), *l))
            .collect();
        let target = tgt
            .iter()
            .map(|(w, l)| TimeSeriesSample::target(w.clone(), Some(*l)))
            .collect();
        DomainDataset::from_parts(source, target, N_CLASSES)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fmt::Write as _;

    /// Write a minimal archive: `rows` windows per split with the given
    /// subjects and 1-based labels.
    fn write_fixture(dir: &Path, split: &str, subjects: &[u32], labels: &[i64]) {
        let base = dir.join(split);
        let signals = base.join("Inertial Signals");
        fs::create_dir_all(&signals).unwrap();
        for (ch, name) in CHANNELS.iter().enumerate() {
            let mut text = String::new();
            for (row, &s) in subjects.iter().enumerate() {
                for t in 0..WINDOW {
                    let v = (s as f64) + 0.01 * ch as f64 + 0.001 * (row * WINDOW + t) as f64;
                    write!(text, " {v:.6}").unwrap();
                }
                text.push('\n');
            }
            fs::write(signals.join(format!("{name}_{split}.txt")), text).unwrap();
        }
        let y: String = labels.iter().map(|l| format!("{l}\n")).collect();
        fs::write(base.join(format!("y_{split}.txt")), y).unwrap();
        let subj: String = subjects.iter().map(|s| format!("{s}\n")).collect();
        fs::write(base.join(format!("subject_{split}.txt")), subj).unwrap();
    }

    #[test]
    fn parses_canonical_layout() {
        let dir = tempfile::tempdir().unwrap();
        write_fixture(dir.path(), "train", &[2, 2, 11, 11], &[1, 6, 2, 3]);
        write_fixture(dir.path(), "test", &[2, 11], &[4, 5]);
        let data = load_ucihar(dir.path()).unwrap();
        assert_eq!(data.subjects(), vec![2, 11]);
        // train + test merged per subject
        assert_eq!(data.windows(2).unwrap().len(), 3);
        assert_eq!(data.windows(11).unwrap().len(), 3);
        for (w, l) in data.windows(2).unwrap() {
            assert_eq!(w.dim(), (9, WINDOW));
            assert!(*l < N_CLASSES);
        }
        // labels remapped to 0-based
        assert_eq!(data.windows(2).unwrap()[0].1, 0);
        assert_eq!(data.windows(2).unwrap()[1].1, 5);
    }

    #[test]
    fn scenario_splits_source_and_target() {
        let dir = tempfile::tempdir().unwrap();
        write_fixture(dir.path(), "train", &[2, 2, 11], &[1, 2, 3]);
        write_fixture(dir.path(), "test", &[11], &[4]);
        let data = load_ucihar(dir.path()).unwrap();
        let ds = data.scenario(2, 11).unwrap();
        assert_eq!(ds.n_src(), 2);
        assert_eq!(ds.n_tgt(), 2);
        assert_eq!(ds.n_classes(), N_CLASSES);
        for i in ds.source_indices() {
            assert!(ds.sample(i).label().is_some());
        }
        for i in ds.target_indices() {
            assert!(ds.sample(i).label().is_none());
        }
        assert!(data.scenario(2, 99).is_err());
    }

    #[test]
    fn empty_directory_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_ucihar(dir.path()).is_err());
    }

    #[test]
    fn row_count_mismatch_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        write_fixture(dir.path(), "train", &[2, 2], &[1, 2]);
        write_fixture(dir.path(), "test", &[2], &[1]);
        // corrupt one channel: drop a row
        let path = dir
            .path()
            .join("train/Inertial Signals/body_gyro_z_train.txt");
        let text = fs::read_to_string(&path).unwrap();
        let first_line: String = text.lines().take(1).collect::<Vec<_>>().join("\n") + "\n";
        fs::write(&path, first_line).unwrap();
        assert!(load_ucihar(dir.path()).is_err());
    }

    #[test]
    fn out_of_range_label_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        write_fixture(dir.path(), "train", &[2], &[7]);
        write_fixture(dir.path(), "test", &[2], &[1]);
        assert!(load_ucihar(dir.path()).is_err());
    }
}

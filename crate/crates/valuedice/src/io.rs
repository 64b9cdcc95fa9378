//! File formats: MDP JSON, demonstration JSON lines and metric CSVs.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use valuedice_core::environments::ExpertDataset;
use valuedice_core::valuedice::TrainResult;
use valuedice_core::{TabularMdp, Transition};

use crate::error::{HarnessError, Result};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_owned(),
        source,
    }
}

fn format_err(path: &Path, message: impl Into<String>) -> HarnessError {
    HarnessError::Format {
        path: path.to_owned(),
        message: message.into(),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

/// On-disk MDP layout; `transition` is indexed `[state][action][next_state]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpFile {
    pub n_states: usize,
    pub n_actions: usize,
    pub gamma: f64,
    pub initial_dist: Vec<f64>,
    pub transition: Vec<Vec<Vec<f64>>>,
}

impl MdpFile {
    pub fn from_mdp(mdp: &TabularMdp) -> Self {
        let (ns, na) = mdp.shape();
        Self {
            n_states: ns,
            n_actions: na,
            gamma: mdp.gamma(),
            initial_dist: mdp.initial_dist().to_vec(),
            transition: (0..ns)
                .map(|s| (0..na).map(|a| mdp.next_state_dist(s, a).to_vec()).collect())
                .collect(),
        }
    }

    /// Checks nesting shapes, then the model invariants.
    pub fn into_mdp(self) -> std::result::Result<TabularMdp, String> {
        let (ns, na) = (self.n_states, self.n_actions);
        if self.initial_dist.len() != ns {
            return Err(format!("initial_dist has {} entries, expected {ns}", self.initial_dist.len()));
        }
        if self.transition.len() != ns {
            return Err(format!("transition has {} state rows, expected {ns}", self.transition.len()));
        }
        let mut flat = Vec::with_capacity(ns * na * ns);
        for (s, row) in self.transition.into_iter().enumerate() {
            if row.len() != na {
                return Err(format!("transition[{s}] has {} actions, expected {na}", row.len()));
            }
            for (a, dist) in row.into_iter().enumerate() {
                if dist.len() != ns {
                    return Err(format!("transition[{s}][{a}] has {} entries, expected {ns}", dist.len()));
                }
                flat.extend(dist);
            }
        }
        TabularMdp::new(ns, na, flat, self.initial_dist, self.gamma).map_err(|e| e.to_string())
    }
}

pub fn parse_mdp(text: &str, path: &Path) -> Result<TabularMdp> {
    let file: MdpFile = serde_json::from_str(text).map_err(|e| format_err(path, e.to_string()))?;
    file.into_mdp().map_err(|m| format_err(path, m))
}

pub fn load_mdp(path: &Path) -> Result<TabularMdp> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_mdp(&text, path)
}

pub fn save_mdp(mdp: &TabularMdp, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, &MdpFile::from_mdp(mdp)).map_err(|e| format_err(path, e.to_string()))?;
    w.flush().map_err(io_err(path))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransitionRecord {
    s: usize,
    a: usize,
    s_next: usize,
    episode_start: usize,
}

/// One JSON object per line: `{"s":..,"a":..,"s_next":..,"episode_start":..}`.
pub fn write_dataset_jsonl(data: &ExpertDataset, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    for t in data.transitions() {
        let rec = TransitionRecord {
            s: t.state,
            a: t.action,
            s_next: t.next_state,
            episode_start: t.episode_start_state,
        };
        serde_json::to_writer(&mut w, &rec).map_err(|e| format_err(path, e.to_string()))?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_dataset_jsonl(path: &Path) -> Result<ExpertDataset> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut transitions = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TransitionRecord =
            serde_json::from_str(&line).map_err(|e| format_err(path, format!("line {}: {e}", i + 1)))?;
        transitions.push(Transition {
            state: rec.s,
            action: rec.a,
            next_state: rec.s_next,
            episode_start_state: rec.episode_start,
        });
    }
    if transitions.is_empty() {
        return Err(format_err(path, "no transitions"));
    }
    Ok(ExpertDataset::from_transitions(transitions))
}

/// One metrics line per recorded update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub update: usize,
    pub seed: u64,
    pub algorithm: String,
    pub alpha: f64,
    pub kl: f64,
    pub j_value: f64,
}

impl MetricsRow {
    pub fn from_result(result: &TrainResult, algorithm: &str) -> Vec<Self> {
        result
            .kl_curve
            .iter()
            .zip(&result.objective_curve)
            .map(|(k, j)| Self {
                update: k.update,
                seed: result.seed,
                algorithm: algorithm.to_owned(),
                alpha: result.alpha,
                kl: k.value,
                j_value: j.value,
            })
            .collect()
    }
}

fn write_rows<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for row in rows {
        w.serialize(row).map_err(|e| format_err(path, e.to_string()))?;
    }
    w.flush().map_err(io_err(path))
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| format_err(path, e.to_string()))?;
    r.deserialize().map(|row| row.map_err(|e| format_err(path, e.to_string()))).collect()
}

pub fn write_metrics_csv(rows: &[MetricsRow], path: &Path) -> Result<()> {
    write_rows(rows, path)
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    read_rows(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainResultRow {
    pub update: usize,
    pub kl: f64,
    pub j_value: f64,
    pub alpha: f64,
    pub seed: u64,
}

/// Columns `update,kl,j_value,alpha,seed`.
pub fn write_train_result_csv(result: &TrainResult, path: &Path) -> Result<()> {
    let rows: Vec<TrainResultRow> = result
        .kl_curve
        .iter()
        .zip(&result.objective_curve)
        .map(|(k, j)| TrainResultRow {
            update: k.update,
            kl: k.value,
            j_value: j.value,
            alpha: result.alpha,
            seed: result.seed,
        })
        .collect();
    write_rows(&rows, path)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlPoint {
    pub update: usize,
    pub kl: f64,
}

pub fn write_kl_curve(points: &[KlPoint], path: &Path) -> Result<()> {
    write_rows(points, path)
}

pub fn read_kl_curve(path: &Path) -> Result<Vec<KlPoint>> {
    read_rows(path)
}

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, RunRecord};
use crate::active::{SamplerKind, Setting};
use crate::error::{Error, Result};
use crate::models::ModelKind;

/// The CSV columns of a `RunRecord`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRecord {
    pub run_id: usize,
    pub seed: u64,
    pub setting: Setting,
    pub model: ModelKind,
    pub sampler: SamplerKind,
    pub label_prop: bool,
    pub round: usize,
    pub budget_used: usize,
    pub test_accuracy: Option<f64>,
    pub wall_ms: u64,
}

impl From<&RunRecord> for CsvRecord {
    fn from(r: &RunRecord) -> Self {
        Self {
            run_id: r.run_id,
            seed: r.seed,
            setting: r.setting,
            model: r.model,
            sampler: r.sampler,
            label_prop: r.label_prop,
            round: r.round,
            budget_used: r.budget_used,
            test_accuracy: r.test_accuracy,
            wall_ms: r.wall_ms,
        }
    }
}

pub fn write_csv<W: Write>(records: &[RunRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(CsvRecord::from(r))?;
    }
    if records.is_empty() {
        w.write_record([
            "run_id", "seed", "setting", "model", "sampler", "label_prop", "round", "budget_used",
            "test_accuracy", "wall_ms",
        ])?;
    }
    w.flush().map_err(|e| Error::io("csv output", e))
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<CsvRecord>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

/// Mean and sample standard deviation of one configuration at one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub setting: Setting,
    pub model: ModelKind,
    pub sampler: SamplerKind,
    pub label_prop: bool,
    pub round: usize,
    pub n: usize,
    pub budget_used: f64,
    pub mean: f64,
    pub std: f64,
}

type Key = (Setting, ModelKind, SamplerKind, bool);

/// Per configuration and round, over the records that carry an accuracy.
pub fn aggregate(records: &[RunRecord]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(Key, usize), (Vec<f64>, Vec<usize>)> = BTreeMap::new();
    for r in records {
        if let Some(acc) = r.test_accuracy {
            let g = groups.entry(((r.setting, r.model, r.sampler, r.label_prop), r.round)).or_default();
            g.0.push(acc);
            g.1.push(r.budget_used);
        }
    }
    groups
        .into_iter()
        .map(|(((setting, model, sampler, label_prop), round), (mut accs, budgets))| {
            // sorted summation keeps the result independent of record order
            accs.sort_by(f64::total_cmp);
            let n = accs.len();
            let mean = accs.iter().sum::<f64>() / n as f64;
            let std = if n > 1 {
                (accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            let budget_used = budgets.iter().sum::<usize>() as f64 / n as f64;
            SummaryRow { setting, model, sampler, label_prop, round, n, budget_used, mean, std }
        })
        .collect()
}

/// Summary arrays of one configuration, indexed alongside `rounds`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSummary {
    pub setting: Setting,
    pub model: ModelKind,
    pub sampler: SamplerKind,
    pub label_prop: bool,
    pub rounds: Vec<usize>,
    pub budget_used: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub n: Vec<usize>,
}

pub fn summary_json(rows: &[SummaryRow]) -> Vec<ConfigSummary> {
    let mut by_key: BTreeMap<Key, ConfigSummary> = BTreeMap::new();
    for r in rows {
        let s = by_key.entry((r.setting, r.model, r.sampler, r.label_prop)).or_insert_with(|| ConfigSummary {
            setting: r.setting,
            model: r.model,
            sampler: r.sampler,
            label_prop: r.label_prop,
            rounds: Vec::new(),
            budget_used: Vec::new(),
            mean: Vec::new(),
            std: Vec::new(),
            n: Vec::new(),
        });
        s.rounds.push(r.round);
        s.budget_used.push(r.budget_used);
        s.mean.push(r.mean);
        s.std.push(r.std);
        s.n.push(r.n);
    }
    by_key.into_values().collect()
}

/// Writes `records.csv`, `summary.json` and the replayable `config.json`.
pub fn write_outputs(dir: &Path, cfg: &ExperimentConfig, records: &[RunRecord]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv_path = dir.join("records.csv");
    let file = fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    write_csv(records, std::io::BufWriter::new(file))?;
    let summary = serde_json::to_string_pretty(&summary_json(&aggregate(records)))?;
    let summary_path = dir.join("summary.json");
    fs::write(&summary_path, summary + "\n").map_err(|e| Error::io(&summary_path, e))?;
    let config_path = dir.join("config.json");
    fs::write(&config_path, serde_json::to_string_pretty(cfg)? + "\n").map_err(|e| Error::io(&config_path, e))
}

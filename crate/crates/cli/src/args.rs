use std::net::{IpAddr, Ipv4Addr};
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, ValueEnum};
use graphshot_core::active::{AnnotatorSpec, SamplerKind, Setting};
use graphshot_core::experiment::{DatasetRef, ExperimentConfig};
use graphshot_core::models::ModelKind;

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModelArg {
    Gcn,
    Gpn,
    Lp,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Gcn => ModelKind::Gcn,
            ModelArg::Gpn => ModelKind::Gpn,
            ModelArg::Lp => ModelKind::Lp,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SamplerArg {
    Random,
    Entropy,
    Pagerank,
    Medoid,
    Featprop,
}

impl From<SamplerArg> for SamplerKind {
    fn from(s: SamplerArg) -> Self {
        match s {
            SamplerArg::Random => SamplerKind::Random,
            SamplerArg::Entropy => SamplerKind::Entropy,
            SamplerArg::Pagerank => SamplerKind::Pagerank,
            SamplerArg::Medoid => SamplerKind::Medoid,
            SamplerArg::Featprop => SamplerKind::Featprop,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SettingArg {
    Balanced,
    Unbalanced,
    UnknownK,
}

impl From<SettingArg> for Setting {
    fn from(s: SettingArg) -> Self {
        match s {
            SettingArg::Balanced => Setting::Balanced,
            SettingArg::Unbalanced => Setting::Unbalanced,
            SettingArg::UnknownK => Setting::UnknownK,
        }
    }
}

/// Active few-shot vertex classification experiments.
///
/// Runs the annotate/train loop over the chosen dataset and writes
/// records.csv, summary.json and config.json to --out. With --serve it
/// instead starts the HTTP service for live human annotation.
#[derive(Debug, Parser)]
#[command(name = "graphshot", version)]
pub struct Cli {
    /// cora | citeseer | pubmed | sbm[:n=..,classes=..,p_in=..,p_out=..,dim=..,shift=..,seed=..] | json:<path>
    #[arg(long, value_parser = parse_dataset)]
    pub dataset: Option<DatasetRef>,
    /// Directory holding <name>.content and <name>.cites
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Start from a saved config.json; other flags override it
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub model: Option<ModelArg>,
    #[arg(long, value_enum)]
    pub sampler: Option<SamplerArg>,
    #[arg(long, value_enum)]
    pub setting: Option<SettingArg>,
    /// Extend the training set with propagated pseudo-labels
    #[arg(long)]
    pub label_prop: bool,
    /// Total human labels (default rounds * quota * |C|)
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub rounds: Option<usize>,
    /// Labels per partition cell and round
    #[arg(long)]
    pub quota: Option<usize>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Seed of the held-out test split
    #[arg(long)]
    pub split_seed: Option<u64>,
    /// Annotator error rate; wrong labels are uniform over the other classes
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub entropy_threshold: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub lp_hops: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Write 0 to the wall_ms column so reruns are byte-identical
    #[arg(long)]
    pub no_timing: bool,
    #[arg(long, default_value = "results")]
    pub out: PathBuf,
    /// Serve the annotation API instead of running experiments
    #[arg(long)]
    pub serve: bool,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
    pub host: IpAddr,
}

fn parse_dataset(s: &str) -> std::result::Result<DatasetRef, String> {
    s.parse().map_err(|e: graphshot_core::Error| e.to_string())
}

impl Cli {
    pub fn to_config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => ExperimentConfig::default(),
        };
        if let Some(d) = &self.dataset {
            cfg.dataset = d.clone();
        }
        if self.data_dir.is_some() {
            cfg.data_dir = self.data_dir.clone();
        }
        if let Some(m) = self.model {
            cfg.model = m.into();
        }
        if let Some(s) = self.sampler {
            cfg.sampler = s.into();
        }
        if let Some(s) = self.setting {
            cfg.setting = s.into();
        }
        cfg.label_prop |= self.label_prop;
        if self.budget.is_some() {
            cfg.budget = self.budget;
        }
        set(&mut cfg.rounds, self.rounds);
        set(&mut cfg.per_round_quota, self.quota);
        set(&mut cfg.repeats, self.repeats);
        set(&mut cfg.seed, self.seed);
        set(&mut cfg.split_seed, self.split_seed);
        if let Some(epsilon) = self.epsilon {
            cfg.annotator = AnnotatorSpec::Noisy { epsilon };
        }
        set(&mut cfg.hyper.alpha, self.alpha);
        set(&mut cfg.entropy_threshold, self.entropy_threshold);
        set(&mut cfg.hyper.lambda, self.lambda);
        set(&mut cfg.hyper.lr, self.lr);
        set(&mut cfg.hyper.hidden, self.hidden);
        set(&mut cfg.hyper.dropout, self.dropout);
        set(&mut cfg.hyper.lp_hops, self.lp_hops);
        set(&mut cfg.hyper.max_epochs, self.max_epochs);
        if self.no_timing {
            cfg.timing = false;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn set<T: Copy>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_defaults() {
        let cli = Cli::parse_from([
            "graphshot", "--dataset", "sbm:n=80", "--model", "gcn", "--sampler", "pagerank", "--setting",
            "unknown-k", "--label-prop", "--epsilon", "0.2", "--lambda", "0.5", "--no-timing",
        ]);
        let cfg = cli.to_config().unwrap();
        assert_eq!(cfg.model, ModelKind::Gcn);
        assert_eq!(cfg.sampler, SamplerKind::Pagerank);
        assert_eq!(cfg.setting, Setting::UnknownK);
        assert!(cfg.label_prop && !cfg.timing);
        assert_eq!(cfg.annotator, AnnotatorSpec::Noisy { epsilon: 0.2 });
        assert_eq!(cfg.hyper.lambda, 0.5);
    }

    #[test]
    fn bad_values_fail_to_parse() {
        assert!(Cli::try_parse_from(["graphshot", "--sampler", "greedy"]).is_err());
        assert!(Cli::try_parse_from(["graphshot", "--dataset", "mnist"]).is_err());
        let cli = Cli::parse_from(["graphshot", "--dropout", "1.5"]);
        assert!(cli.to_config().is_err());
    }
}

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clustering::{estimate_num_classes, ClassEstimate, DistanceMatrix};
use crate::error::{Error, Result};
use crate::graph::{generate_sbm, load_json_graph, load_text_dataset, Graph, SbmParams};
use crate::models::GraphInputs;
use crate::numerics::DenseMatrix;
use crate::propagation::propagate_features;

/// Environment variable naming the directory with the citation datasets.
pub const DATA_DIR_ENV: &str = "GRAPHSHOT_DATA";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum DatasetRef {
    Cora,
    Citeseer,
    Pubmed,
    Sbm(SbmParams),
    Json(PathBuf),
}

impl DatasetRef {
    fn citation_name(&self) -> Option<&'static str> {
        match self {
            DatasetRef::Cora => Some("cora"),
            DatasetRef::Citeseer => Some("citeseer"),
            DatasetRef::Pubmed => Some("pubmed"),
            _ => None,
        }
    }

    /// Candidate `(content, cites)` paths for a citation dataset.
    pub fn citation_files(&self, data_dir: Option<&Path>) -> Option<Vec<(PathBuf, PathBuf)>> {
        let name = self.citation_name()?;
        let mut roots: Vec<PathBuf> = Vec::new();
        if let Some(d) = data_dir {
            roots.push(d.to_path_buf());
        }
        if let Some(d) = std::env::var_os(DATA_DIR_ENV) {
            roots.push(PathBuf::from(d));
        }
        if let Some(d) = std::env::var_os(format!("{}_DIR", name.to_uppercase())) {
            roots.push(PathBuf::from(d));
        }
        roots.push(PathBuf::from("data"));
        Some(
            roots
                .iter()
                .flat_map(|r| [r.clone(), r.join(name)])
                .map(|d| (d.join(format!("{name}.content")), d.join(format!("{name}.cites"))))
                .collect(),
        )
    }

    pub fn load(&self, data_dir: Option<&Path>) -> Result<Graph> {
        match self {
            DatasetRef::Sbm(p) => generate_sbm(p),
            DatasetRef::Json(path) => load_json_graph(path),
            _ => {
                let candidates = self.citation_files(data_dir).expect("citation dataset");
                let (content, cites) = candidates
                    .iter()
                    .find(|(c, e)| c.is_file() && e.is_file())
                    .ok_or_else(|| Error::DatasetNotFound {
                        name: self.to_string(),
                        searched: candidates.iter().map(|(c, _)| c.display().to_string()).collect(),
                    })?;
                let (g, report) = load_text_dataset(content, cites)?;
                if report.dropped_edges > 0 {
                    log::warn!("{self}: dropped {} edges with unknown endpoints", report.dropped_edges);
                }
                Ok(g)
            }
        }
    }
}

impl fmt::Display for DatasetRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetRef::Cora => f.write_str("cora"),
            DatasetRef::Citeseer => f.write_str("citeseer"),
            DatasetRef::Pubmed => f.write_str("pubmed"),
            DatasetRef::Json(p) => write!(f, "json:{}", p.display()),
            DatasetRef::Sbm(p) => {
                let d = SbmParams::default();
                if *p == d {
                    return f.write_str("sbm");
                }
                write!(
                    f,
                    "sbm:n={},classes={},p_in={},p_out={},dim={},shift={},seed={}",
                    p.num_vertices, p.num_classes, p.p_in, p.p_out, p.feature_dim, p.feature_shift, p.seed
                )
            }
        }
    }
}

impl FromStr for DatasetRef {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cora" => return Ok(DatasetRef::Cora),
            "citeseer" => return Ok(DatasetRef::Citeseer),
            "pubmed" => return Ok(DatasetRef::Pubmed),
            "sbm" => return Ok(DatasetRef::Sbm(SbmParams::default())),
            _ => {}
        }
        if let Some(path) = s.strip_prefix("json:") {
            return Ok(DatasetRef::Json(PathBuf::from(path)));
        }
        let Some(spec) = s.strip_prefix("sbm:") else {
            return Err(Error::InvalidArgument(format!("unknown dataset '{s}'")));
        };
        let mut p = SbmParams::default();
        for pair in spec.split(',').filter(|x| !x.is_empty()) {
            let (key, value) = pair
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("sbm parameter '{pair}' needs key=value")))?;
            let bad = || Error::InvalidArgument(format!("bad value in sbm parameter '{pair}'"));
            match key {
                "n" => p.num_vertices = value.parse().map_err(|_| bad())?,
                "classes" => p.num_classes = value.parse().map_err(|_| bad())?,
                "p_in" => p.p_in = value.parse().map_err(|_| bad())?,
                "p_out" => p.p_out = value.parse().map_err(|_| bad())?,
                "dim" => p.feature_dim = value.parse().map_err(|_| bad())?,
                "shift" => p.feature_shift = value.parse().map_err(|_| bad())?,
                "seed" => p.seed = value.parse().map_err(|_| bad())?,
                _ => return Err(Error::InvalidArgument(format!("unknown sbm parameter '{key}'"))),
            }
        }
        Ok(DatasetRef::Sbm(p))
    }
}

impl TryFrom<String> for DatasetRef {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<DatasetRef> for String {
    fn from(d: DatasetRef) -> String {
        d.to_string()
    }
}

/// Propagated raw features of the training vertices with their pairwise
/// distances; the vertex space used before a model has learned anything.
pub struct FallbackSpace {
    pub features: DenseMatrix,
    pub distances: DistanceMatrix,
    /// Matrix row of each vertex, `None` for test vertices.
    pub rows: Vec<Option<usize>>,
}

/// Everything about one dataset that every run shares.
pub struct DatasetContext {
    pub graph: Graph,
    pub inputs: GraphInputs,
    pub training: Vec<usize>,
    pub test: Vec<usize>,
    /// Ground-truth class names; empty without labels.
    pub class_names: Vec<String>,
    feature_hops: usize,
    estimate_seed: u64,
    fallback: OnceLock<FallbackSpace>,
    estimate: OnceLock<std::result::Result<ClassEstimate, String>>,
}

impl DatasetContext {
    pub fn new(graph: Graph, damping: f64, split_seed: u64, test_fraction: f64, feature_hops: usize) -> Result<Self> {
        if graph.num_vertices() == 0 {
            return Err(Error::EmptyDataset);
        }
        if !(0.0..1.0).contains(&test_fraction) {
            return Err(Error::InvalidArgument(format!("test fraction {test_fraction} not in [0, 1)")));
        }
        let inputs = GraphInputs::new(&graph, damping)?;
        let (training, test) = match graph.labels() {
            Some(labels) => stratified_split(labels, test_fraction, split_seed),
            None => ((0..graph.num_vertices()).collect(), Vec::new()),
        };
        let class_names = match (graph.labels(), graph.label_names()) {
            (_, Some(names)) => names.to_vec(),
            (Some(_), None) => (0..graph.num_classes().unwrap_or(0)).map(|c| c.to_string()).collect(),
            (None, None) => Vec::new(),
        };
        Ok(Self {
            graph,
            inputs,
            training,
            test,
            class_names,
            feature_hops,
            estimate_seed: split_seed,
            fallback: OnceLock::new(),
            estimate: OnceLock::new(),
        })
    }

    pub fn truth(&self) -> Option<&[usize]> {
        self.graph.labels()
    }

    pub fn fallback(&self) -> Result<&FallbackSpace> {
        if let Some(f) = self.fallback.get() {
            return Ok(f);
        }
        let all = propagate_features(&self.inputs.self_loop, self.graph.features(), self.feature_hops)?;
        let features = all.select_rows(&self.training);
        let distances = DistanceMatrix::euclidean(&features);
        let mut rows = vec![None; self.graph.num_vertices()];
        for (i, &v) in self.training.iter().enumerate() {
            rows[v] = Some(i);
        }
        Ok(self.fallback.get_or_init(|| FallbackSpace { features, distances, rows }))
    }

    /// Elbow estimate of the class count over the fallback features.
    pub fn estimated_classes(&self, k_min: usize, k_max: usize) -> Result<&ClassEstimate> {
        if self.estimate.get().is_none() {
            let fb = self.fallback()?;
            let est = estimate_num_classes(&fb.features, k_min, k_max, self.estimate_seed).map_err(|e| e.to_string());
            let _ = self.estimate.set(est);
        }
        self.estimate
            .get()
            .expect("set above")
            .as_ref()
            .map_err(|e| Error::InvalidArgument(e.clone()))
    }
}

/// Per class, `round(fraction * size)` members go to the test side.
fn stratified_split(labels: &[usize], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (v, &c) in labels.iter().enumerate() {
        by_class.entry(c).or_default().push(v);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut training, mut test) = (Vec::new(), Vec::new());
    for (_, mut members) in by_class {
        members.shuffle(&mut rng);
        let held = (members.len() as f64 * fraction).round() as usize;
        test.extend_from_slice(&members[..held]);
        training.extend_from_slice(&members[held..]);
    }
    training.sort_unstable();
    test.sort_unstable();
    (training, test)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_refs_round_trip() {
        for s in ["cora", "citeseer", "pubmed", "sbm", "json:/tmp/g.json"] {
            assert_eq!(s.parse::<DatasetRef>().unwrap().to_string(), s);
        }
        let r: DatasetRef = "sbm:n=60,classes=3,seed=2".parse().unwrap();
        let DatasetRef::Sbm(p) = &r else { panic!() };
        assert_eq!((p.num_vertices, p.num_classes, p.seed), (60, 3, 2));
        assert_eq!(r.to_string().parse::<DatasetRef>().unwrap(), r);
        assert!("sbm:n=x".parse::<DatasetRef>().is_err());
        assert!("mnist".parse::<DatasetRef>().is_err());
    }

    #[test]
    fn missing_citation_files_name_the_search_path() {
        let dir = tempfile::tempdir().unwrap();
        let err = DatasetRef::Cora.load(Some(dir.path())).unwrap_err();
        assert!(matches!(err, Error::DatasetNotFound { .. }));
        assert!(err.to_string().contains("cora.content"));
    }

    #[test]
    fn split_is_stratified_and_disjoint() {
        let labels: Vec<usize> = (0..100).map(|v| v % 4).collect();
        let (train, test) = stratified_split(&labels, 0.2, 3);
        assert_eq!(test.len(), 20);
        for c in 0..4 {
            assert_eq!(test.iter().filter(|&&v| labels[v] == c).count(), 5);
        }
        assert!(train.iter().all(|v| !test.contains(v)));
        assert_eq!(stratified_split(&labels, 0.2, 3), (train, test));
    }
}

//! A live interactive run: the engine runs on its own thread and blocks in
//! the annotator until a human answers the current query batch.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::JoinHandle;

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::run::{resolve_budget, run_single, RunObserver};
use super::{DatasetContext, ExperimentConfig, RunRecord};
use crate::active::{AnnotationRequest, Annotator, AnnotatorSpec};
use crate::error::{Error, Result};

const TOP_FEATURES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Idle,
    AwaitingLabels,
    Training,
    Done,
    Aborted,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub status: SessionStatus,
    pub budget_used: usize,
    pub budget_total: usize,
    pub current_round: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub session_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl SessionState {
    pub fn idle() -> Self {
        Self {
            status: SessionStatus::Idle,
            budget_used: 0,
            budget_total: 0,
            current_round: 0,
            session_id: None,
            error: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureValue {
    pub index: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborInfo {
    pub vertex: usize,
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassProbability {
    pub class: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryVertex {
    pub vertex: usize,
    pub top_features: Vec<FeatureValue>,
    pub neighbors: Vec<NeighborInfo>,
    pub class_distribution: Vec<ClassProbability>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryBatch {
    pub round: usize,
    pub vertices: Vec<QueryVertex>,
    pub classes: Vec<String>,
    pub allow_new_class: bool,
}

/// Everything needed to restart an aborted session where it stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResumeToken {
    pub config: ExperimentConfig,
    /// Answered batches in order, as `(vertex, label)`.
    pub answers: Vec<Vec<(usize, String)>>,
}

impl ResumeToken {
    pub fn encode(&self) -> Result<String> {
        Ok(URL_SAFE_NO_PAD.encode(serde_json::to_vec(self)?))
    }

    pub fn decode(token: &str) -> Result<Self> {
        let bytes = URL_SAFE_NO_PAD
            .decode(token.trim())
            .map_err(|e| Error::InvalidArgument(format!("resume token: {e}")))?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}

/// Why a label submission was refused.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SubmitError {
    /// No batch is waiting; the engine is busy or finished.
    NotAwaiting(SessionStatus),
    Invalid(String),
}

impl std::fmt::Display for SubmitError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SubmitError::NotAwaiting(s) => write!(f, "no query is awaiting labels (status {s:?})"),
            SubmitError::Invalid(m) => f.write_str(m),
        }
    }
}

struct Shared {
    status: SessionStatus,
    budget_used: usize,
    budget_total: usize,
    current_round: usize,
    query: Option<QueryBatch>,
    records: Vec<RunRecord>,
    answers: Vec<Vec<(usize, String)>>,
    error: Option<String>,
}

type Answer = Vec<(usize, String)>;

pub struct Session {
    id: String,
    config: ExperimentConfig,
    shared: Arc<Mutex<Shared>>,
    sender: Option<Sender<Answer>>,
    engine: Option<JoinHandle<()>>,
}

fn lock(shared: &Mutex<Shared>) -> MutexGuard<'_, Shared> {
    shared.lock().unwrap_or_else(|p| p.into_inner())
}

impl Session {
    /// Loads the dataset and starts the engine thread.
    pub fn start(id: String, config: ExperimentConfig) -> Result<Self> {
        Self::start_with(id, config, Vec::new())
    }

    pub fn resume(id: String, token: &ResumeToken) -> Result<Self> {
        Self::start_with(id, token.config.clone(), token.answers.clone())
    }

    fn start_with(id: String, config: ExperimentConfig, replay: Vec<Answer>) -> Result<Self> {
        if config.annotator != AnnotatorSpec::Interactive {
            return Err(Error::InvalidArgument("session config needs annotator kind 'interactive'".into()));
        }
        config.validate()?;
        let graph = config.dataset.load(config.data_dir.as_deref())?;
        let ctx = Arc::new(DatasetContext::new(
            graph,
            config.damping,
            config.split_seed,
            config.test_fraction,
            config.feature_hops,
        )?);
        let budget_total = resolve_budget(&ctx, &config)?;
        let shared = Arc::new(Mutex::new(Shared {
            status: SessionStatus::Training,
            budget_used: 0,
            budget_total,
            current_round: 0,
            query: None,
            records: Vec::new(),
            answers: Vec::new(),
            error: None,
        }));
        let (sender, receiver) = mpsc::channel();
        let engine = {
            let shared = shared.clone();
            let config = config.clone();
            std::thread::spawn(move || {
                let mut annotator = HumanAnnotator {
                    ctx: ctx.clone(),
                    shared: shared.clone(),
                    receiver,
                    replay: replay.into(),
                };
                let mut observer = SharedObserver { shared: shared.clone() };
                let result = run_single(&ctx, &config, 0, &mut annotator, &mut observer);
                let mut s = lock(&shared);
                s.query = None;
                match result {
                    Ok(_) => s.status = SessionStatus::Done,
                    Err(Error::SessionAborted) => s.status = SessionStatus::Aborted,
                    Err(e) => {
                        log::error!("session engine failed: {e}");
                        s.status = SessionStatus::Failed;
                        s.error = Some(e.to_string());
                    }
                }
            })
        };
        Ok(Self { id, config, shared, sender: Some(sender), engine: Some(engine) })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn state(&self) -> SessionState {
        let s = lock(&self.shared);
        SessionState {
            status: s.status,
            budget_used: s.budget_used,
            budget_total: s.budget_total,
            current_round: s.current_round,
            session_id: Some(self.id.clone()),
            error: s.error.clone(),
        }
    }

    /// The batch awaiting labels, if any.
    pub fn query(&self) -> Option<QueryBatch> {
        lock(&self.shared).query.clone()
    }

    pub fn metrics(&self) -> Vec<RunRecord> {
        lock(&self.shared).records.clone()
    }

    /// True once the engine has stopped for good.
    pub fn is_finished(&self) -> bool {
        matches!(
            lock(&self.shared).status,
            SessionStatus::Done | SessionStatus::Aborted | SessionStatus::Failed
        )
    }

    /// Hands labels for exactly the current batch to the engine.
    pub fn submit(&self, labels: &HashMap<usize, String>) -> std::result::Result<usize, SubmitError> {
        let mut s = lock(&self.shared);
        if s.status != SessionStatus::AwaitingLabels {
            return Err(SubmitError::NotAwaiting(s.status));
        }
        let batch = s.query.as_ref().expect("awaiting labels implies a query");
        let wanted: BTreeSet<usize> = batch.vertices.iter().map(|q| q.vertex).collect();
        let given: BTreeSet<usize> = labels.keys().copied().collect();
        if wanted != given {
            return Err(SubmitError::Invalid(format!(
                "labels must cover exactly the queried vertices {wanted:?}, got {given:?}"
            )));
        }
        for (v, name) in labels {
            let name = name.trim();
            if name.is_empty() {
                return Err(SubmitError::Invalid(format!("empty label for vertex {v}")));
            }
            if !batch.allow_new_class && !batch.classes.iter().any(|c| c == name) {
                return Err(SubmitError::Invalid(format!("unknown class '{name}' for vertex {v}")));
            }
        }
        let answer: Answer = batch
            .vertices
            .iter()
            .map(|q| (q.vertex, labels[&q.vertex].trim().to_string()))
            .collect();
        let sender = self.sender.as_ref().ok_or(SubmitError::NotAwaiting(SessionStatus::Aborted))?;
        sender
            .send(answer)
            .map_err(|_| SubmitError::NotAwaiting(SessionStatus::Failed))?;
        s.status = SessionStatus::Training;
        s.query = None;
        Ok(labels.len())
    }

    /// Stops the engine and returns a token that resumes from here.
    pub fn abort(mut self) -> Result<(ResumeToken, Vec<RunRecord>)> {
        self.shutdown();
        let s = lock(&self.shared);
        let token = ResumeToken { config: self.config.clone(), answers: s.answers.clone() };
        Ok((token, s.records.clone()))
    }

    fn shutdown(&mut self) {
        self.sender.take();
        if let Some(engine) = self.engine.take() {
            let _ = engine.join();
        }
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        self.shutdown();
    }
}

struct SharedObserver {
    shared: Arc<Mutex<Shared>>,
}

impl RunObserver for SharedObserver {
    fn on_record(&mut self, record: &RunRecord) {
        let mut s = lock(&self.shared);
        s.budget_used = record.budget_used;
        s.current_round = record.round;
        s.records.push(record.clone());
    }

    fn on_training(&mut self, round: usize, budget_used: usize) {
        let mut s = lock(&self.shared);
        s.status = SessionStatus::Training;
        s.current_round = round;
        s.budget_used = budget_used;
    }
}

struct HumanAnnotator {
    ctx: Arc<DatasetContext>,
    shared: Arc<Mutex<Shared>>,
    receiver: Receiver<Answer>,
    replay: VecDeque<Answer>,
}

impl HumanAnnotator {
    fn batch(&self, req: &AnnotationRequest<'_>) -> QueryBatch {
        let g = &self.ctx.graph;
        let names = req.classes.names();
        let vertices = req
            .vertices
            .iter()
            .map(|&v| {
                let mut feats: Vec<FeatureValue> = g
                    .features()
                    .row(v)
                    .iter()
                    .enumerate()
                    .filter(|(_, x)| **x != 0.0)
                    .map(|(index, &value)| FeatureValue { index, value })
                    .collect();
                feats.sort_by(|a, b| b.value.abs().total_cmp(&a.value.abs()).then(a.index.cmp(&b.index)));
                feats.truncate(TOP_FEATURES);
                let neighbors = g
                    .neighbors(v)
                    .iter()
                    .map(|&u| NeighborInfo {
                        vertex: u,
                        label: req.state.human_label(u).and_then(|c| names.get(c).cloned()),
                    })
                    .collect();
                let class_distribution = names
                    .iter()
                    .enumerate()
                    .filter(|(c, _)| *c < req.output.logits.cols())
                    .map(|(c, name)| ClassProbability { class: name.clone(), probability: req.output.logits.get(v, c) })
                    .collect();
                QueryVertex { vertex: v, top_features: feats, neighbors, class_distribution }
            })
            .collect();
        QueryBatch { round: req.round, vertices, classes: names.to_vec(), allow_new_class: req.allow_new_class }
    }
}

impl Annotator for HumanAnnotator {
    fn annotate(&mut self, req: &AnnotationRequest<'_>) -> Result<Vec<String>> {
        let answer = match self.replay.pop_front() {
            Some(answer) => {
                let recorded: BTreeSet<usize> = answer.iter().map(|a| a.0).collect();
                let asked: BTreeSet<usize> = req.vertices.iter().copied().collect();
                if recorded != asked {
                    return Err(Error::InvalidArgument(format!(
                        "resume token does not match round {}: recorded {recorded:?}, queried {asked:?}",
                        req.round
                    )));
                }
                answer
            }
            None => {
                {
                    let mut s = lock(&self.shared);
                    s.query = Some(self.batch(req));
                    s.status = SessionStatus::AwaitingLabels;
                    s.current_round = req.round;
                }
                self.receiver.recv().map_err(|_| Error::SessionAborted)?
            }
        };
        let by_vertex: HashMap<usize, String> = answer.iter().cloned().collect();
        lock(&self.shared).answers.push(answer);
        Ok(req.vertices.iter().map(|v| by_vertex[v].clone()).collect())
    }
}

//! JSON-over-HTTP prediction service with an append-only feedback log.
//!
//! Endpoints: `POST /predict`, `POST /feedback`, `GET /health`,
//! `GET /metrics-summary`. Field names follow the CSV columns.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::thread::JoinHandle;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rescast_core::ingest::{Target, TaskRecord};
use rescast_core::{ModelSet, ResourceClasses, ResourceTargets, TaskPrediction};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use tokio::sync::oneshot;

/// Environment variable holding the bind address.
pub const BIND_ENV: &str = "RESCAST_BIND";
pub const DEFAULT_BIND: &str = "127.0.0.1:8080";
/// Predicted classes remembered for feedback matching.
const MAX_REMEMBERED: usize = 1 << 20;

/// Rounds to 9 significant digits.
pub fn sig9(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.8e}").parse().expect("formatted float parses")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassesDoc {
    #[serde(rename = "RAMCOUNT_CLASS")]
    pub ram: usize,
    #[serde(rename = "CPUTIME_CLASS")]
    pub cpu: usize,
    #[serde(rename = "IOINTENSITY_CLASS")]
    pub io: usize,
    #[serde(rename = "WALLTIME_CLASS")]
    pub wall: usize,
}

impl ClassesDoc {
    pub fn to_classes(self) -> Option<ResourceClasses> {
        let mut c = ResourceClasses::default();
        for (t, k) in Target::ALL.into_iter().zip([self.ram, self.cpu, self.io, self.wall]) {
            if k >= t.n_classes() {
                return None;
            }
            c.set(t, k);
        }
        Some(c)
    }
}

impl From<ResourceClasses> for ClassesDoc {
    fn from(c: ResourceClasses) -> Self {
        ClassesDoc { ram: c.ram as usize, cpu: c.cpu as usize, io: c.io as usize, wall: c.wall as usize }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetsDoc {
    #[serde(rename = "RAMCOUNT")]
    pub ram_count: f64,
    #[serde(rename = "CPUTIME")]
    pub cpu_time: f64,
    #[serde(rename = "IOINTENSITY")]
    pub io_intensity: f64,
    #[serde(rename = "WALLTIME")]
    pub walltime: f64,
}

impl From<TargetsDoc> for ResourceTargets {
    fn from(d: TargetsDoc) -> Self {
        ResourceTargets { ram_count: d.ram_count, cpu_time: d.cpu_time, io_intensity: d.io_intensity, walltime: d.walltime }
    }
}

impl From<ResourceTargets> for TargetsDoc {
    fn from(t: ResourceTargets) -> Self {
        TargetsDoc { ram_count: t.ram_count, cpu_time: t.cpu_time, io_intensity: t.io_intensity, walltime: t.walltime }
    }
}

/// One line of the feedback log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    #[serde(rename = "TASK_ID")]
    pub task_id: String,
    /// Absent when neither the client nor the service knew a prediction.
    #[serde(rename = "PREDICTED")]
    pub predicted: Option<ClassesDoc>,
    #[serde(rename = "ACTUAL")]
    pub actual: TargetsDoc,
    /// Classes of `actual` under the serving model's bins.
    #[serde(rename = "ACTUAL_CLASSES")]
    pub actual_classes: ClassesDoc,
    /// False when the service never predicted this task id.
    #[serde(rename = "KNOWN_TASK")]
    pub known_task: bool,
    #[serde(rename = "TIMESTAMP")]
    pub timestamp: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AgreementCounters {
    pub records: u64,
    pub unknown_task_ids: u64,
    /// Records without any predicted classes to compare against.
    pub unscored: u64,
    pub agree: [u64; 4],
    pub disagree: [u64; 4],
}

impl AgreementCounters {
    pub fn observe(&mut self, r: &FeedbackRecord) {
        self.records += 1;
        if !r.known_task {
            self.unknown_task_ids += 1;
        }
        let (Some(p), Some(a)) = (r.predicted.and_then(ClassesDoc::to_classes), r.actual_classes.to_classes()) else {
            self.unscored += 1;
            return;
        };
        for t in Target::ALL {
            if p.get(t) == a.get(t) {
                self.agree[t.index()] += 1;
            } else {
                self.disagree[t.index()] += 1;
            }
        }
    }

    pub fn rate(&self, t: Target) -> Option<f64> {
        let (a, d) = (self.agree[t.index()], self.disagree[t.index()]);
        (a + d > 0).then(|| a as f64 / (a + d) as f64)
    }

    fn to_json(self) -> Value {
        let mut m = Map::new();
        m.insert("records".into(), json!(self.records));
        m.insert("unknown_task_ids".into(), json!(self.unknown_task_ids));
        m.insert("unscored".into(), json!(self.unscored));
        for t in Target::ALL {
            m.insert(
                t.name().into(),
                json!({
                    "agree": self.agree[t.index()],
                    "disagree": self.disagree[t.index()],
                    "agreement_rate": self.rate(t),
                }),
            );
        }
        Value::Object(m)
    }
}

/// Append-only JSON-lines log with counters kept in step.
#[derive(Debug)]
pub struct FeedbackLog {
    path: Option<PathBuf>,
    file: Option<File>,
    counters: AgreementCounters,
}

impl FeedbackLog {
    pub fn in_memory() -> Self {
        FeedbackLog { path: None, file: None, counters: AgreementCounters::default() }
    }

    /// Opens (or creates) a log and replays the records already in it.
    pub fn open(path: &Path) -> io::Result<Self> {
        let counters = if path.exists() { replay(path)? } else { AgreementCounters::default() };
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(FeedbackLog { path: Some(path.to_path_buf()), file: Some(file), counters })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn counters(&self) -> AgreementCounters {
        self.counters
    }

    /// The record is on disk before the counters move.
    pub fn append(&mut self, record: &FeedbackRecord) -> io::Result<()> {
        if let Some(f) = &mut self.file {
            let mut line = serde_json::to_vec(record).map_err(io::Error::other)?;
            line.push(b'\n');
            f.write_all(&line)?;
            f.sync_data()?;
        }
        self.counters.observe(record);
        Ok(())
    }
}

/// Rebuilds the counters from a log file.
pub fn replay(path: &Path) -> io::Result<AgreementCounters> {
    let mut counters = AgreementCounters::default();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: FeedbackRecord = serde_json::from_str(&line)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("feedback log line {}: {e}", i + 1)))?;
        counters.observe(&r);
    }
    Ok(counters)
}

#[derive(Debug)]
pub struct AppState {
    model: RwLock<Option<Arc<ModelSet>>>,
    feedback: Mutex<FeedbackLog>,
    predicted: Mutex<HashMap<String, ResourceClasses>>,
    served: AtomicU64,
}

impl AppState {
    pub fn new(model: Option<ModelSet>, feedback: FeedbackLog) -> Self {
        AppState {
            model: RwLock::new(model.map(Arc::new)),
            feedback: Mutex::new(feedback),
            predicted: Mutex::new(HashMap::new()),
            served: AtomicU64::new(0),
        }
    }

    pub fn model(&self) -> Option<Arc<ModelSet>> {
        self.model.read().expect("model lock").clone()
    }

    /// Replaces the served model; requests already running keep the old one.
    pub fn swap_model(&self, model: ModelSet) {
        *self.model.write().expect("model lock") = Some(Arc::new(model));
    }

    pub fn counters(&self) -> AgreementCounters {
        self.feedback.lock().expect("feedback lock").counters()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
    pub field: Option<&'static str>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError { status, message: message.into(), field: None }
    }

    fn field(field: &'static str, message: impl Into<String>) -> Self {
        ApiError { status: StatusCode::UNPROCESSABLE_ENTITY, message: message.into(), field: Some(field) }
    }

    fn no_model() -> Self {
        ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "no model loaded")
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message, "field": self.field }))).into_response()
    }
}

fn parse_json(body: &[u8]) -> Result<Map<String, Value>, ApiError> {
    match serde_json::from_slice::<Value>(body) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(ApiError::new(StatusCode::BAD_REQUEST, "expected a JSON object")),
        Err(e) => Err(ApiError::new(StatusCode::BAD_REQUEST, format!("malformed JSON: {e}"))),
    }
}

fn string_field(doc: &Map<String, Value>, name: &'static str) -> Result<String, ApiError> {
    match doc.get(name) {
        None | Some(Value::Null) => Err(ApiError::field(name, format!("missing field {name}"))),
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(ApiError::field(name, format!("{name} must be a string"))),
    }
}

fn count_field(doc: &Map<String, Value>, name: &'static str) -> Result<u64, ApiError> {
    match doc.get(name) {
        None | Some(Value::Null) => Err(ApiError::field(name, format!("missing field {name}"))),
        Some(v) => v.as_u64().ok_or_else(|| ApiError::field(name, format!("{name} must be a non-negative integer"))),
    }
}

fn number_field(doc: &Map<String, Value>, name: &'static str) -> Result<f64, ApiError> {
    match doc.get(name) {
        None | Some(Value::Null) => Err(ApiError::field(name, format!("missing field {name}"))),
        Some(v) => v
            .as_f64()
            .filter(|x| x.is_finite() && *x >= 0.0)
            .ok_or_else(|| ApiError::field(name, format!("{name} must be a non-negative number"))),
    }
}

/// Builds a task from a request document, naming the first bad field.
pub fn task_from_json(doc: &Map<String, Value>) -> Result<TaskRecord, ApiError> {
    let task_id = match doc.get("TASK_ID") {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(v) => v.to_string(),
    };
    let core_count = count_field(doc, "NCORE")?;
    let task = TaskRecord {
        task_id,
        processing_type: string_field(doc, "PROCESSINGTYPE")?,
        framework: string_field(doc, "FRAMEWORK")?,
        core_count: u32::try_from(core_count).map_err(|_| ApiError::field("NCORE", "NCORE out of range"))?,
        n_input: count_field(doc, "NINPUT")?,
        n_files: count_field(doc, "NFILES")?,
        n_events: count_field(doc, "NEVENTS")?,
    };
    task.validate().map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    Ok(task)
}

/// The wire form of a prediction, without the latency field.
pub fn prediction_json(p: &TaskPrediction) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("TASK_ID".into(), json!(p.task_id));
    for t in Target::ALL {
        let tp = p.get(t);
        let probs: Vec<f64> = tp.probabilities.iter().map(|&x| sig9(x)).collect();
        m.insert(format!("{}_CLASS", t.name()), json!(tp.class));
        m.insert(format!("{}_PROBABILITIES", t.name()), json!(probs));
        m.insert(format!("{}_ALLOCATION", t.name()), json!(tp.allocation));
    }
    m
}

async fn predict(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let doc = parse_json(&body)?;
    let task = task_from_json(&doc)?;
    let model = state.model().ok_or_else(ApiError::no_model)?;
    let start = Instant::now();
    let pred = model.predict_one(&task).map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    let elapsed = start.elapsed().as_secs_f64();
    state.served.fetch_add(1, Ordering::Relaxed);
    if !task.task_id.is_empty() {
        let mut seen = state.predicted.lock().expect("prediction memory lock");
        if seen.len() < MAX_REMEMBERED || seen.contains_key(&task.task_id) {
            seen.insert(task.task_id.clone(), pred.classes());
        }
    }
    let mut m = prediction_json(&pred);
    m.insert("INFERENCE_SECONDS".into(), json!(elapsed));
    Ok(Json(Value::Object(m)))
}

async fn feedback(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let doc = parse_json(&body)?;
    let task_id = string_field(&doc, "TASK_ID")?;
    let actual = TargetsDoc {
        ram_count: number_field(&doc, "RAMCOUNT")?,
        cpu_time: number_field(&doc, "CPUTIME")?,
        io_intensity: number_field(&doc, "IOINTENSITY")?,
        walltime: number_field(&doc, "WALLTIME")?,
    };
    let explicit = match doc.get("PREDICTED") {
        None | Some(Value::Null) => None,
        Some(v) => {
            let c: ClassesDoc = serde_json::from_value(v.clone())
                .map_err(|e| ApiError::field("PREDICTED", format!("PREDICTED: {e}")))?;
            c.to_classes().ok_or_else(|| ApiError::field("PREDICTED", "predicted class out of range"))?;
            Some(c)
        }
    };
    let model = state.model().ok_or_else(ApiError::no_model)?;
    let remembered = state.predicted.lock().expect("prediction memory lock").get(&task_id).copied();
    let mut actual_classes = ResourceClasses::default();
    for t in Target::ALL {
        actual_classes.set(t, rescast_core::assign_class(ResourceTargets::from(actual).get(t), &model.get(t).bins));
    }
    let record = FeedbackRecord {
        task_id,
        predicted: explicit.or(remembered.map(ClassesDoc::from)),
        actual,
        actual_classes: actual_classes.into(),
        known_task: remembered.is_some(),
        timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
    };
    let mut log = state.feedback.lock().expect("feedback lock");
    log.append(&record).map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, format!("feedback log: {e}")))?;
    Ok(Json(json!({
        "status": "recorded",
        "known_task": record.known_task,
        "scored": record.predicted.is_some(),
        "ACTUAL_CLASSES": record.actual_classes,
    })))
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Value> {
    Json(json!({ "status": "ok", "model_loaded": state.model().is_some() }))
}

async fn metrics_summary(State(state): State<Arc<AppState>>) -> Json<Value> {
    Json(json!({
        "model_loaded": state.model().is_some(),
        "predictions_served": state.served.load(Ordering::Relaxed),
        "feedback": state.counters().to_json(),
    }))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/predict", post(predict))
        .route("/feedback", post(feedback))
        .route("/health", get(health))
        .route("/metrics-summary", get(metrics_summary))
        .with_state(state)
}

/// Bind address from the environment, else the default.
pub fn bind_address() -> String {
    std::env::var(BIND_ENV).unwrap_or_else(|_| DEFAULT_BIND.to_string())
}

/// Serves on `bind` until the process ends. `ready` sees the bound address.
pub fn serve_blocking(state: Arc<AppState>, bind: &str, ready: impl FnOnce(SocketAddr)) -> io::Result<()> {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(bind).await?;
        ready(listener.local_addr()?);
        axum::serve(listener, router(state)).await
    })
}

/// A server on a background thread, stopped on drop.
#[derive(Debug)]
pub struct RunningServer {
    pub addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<io::Result<()>>>,
}

impl RunningServer {
    pub fn start(state: Arc<AppState>, bind: &str) -> io::Result<Self> {
        let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
        let listener = rt.block_on(tokio::net::TcpListener::bind(bind))?;
        let addr = listener.local_addr()?;
        let (tx, rx) = oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            rt.block_on(async move {
                axum::serve(listener, router(state))
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await
            })
        });
        Ok(RunningServer { addr, shutdown: Some(tx), thread: Some(thread) })
    }

    pub fn url(&self, path: &str) -> String {
        format!("http://{}{path}", self.addr)
    }

    pub fn stop(mut self) -> io::Result<()> {
        self.shutdown_inner()
    }

    fn shutdown_inner(&mut self) -> io::Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(h) => h.join().map_err(|_| io::Error::other("server thread panicked"))?,
            None => Ok(()),
        }
    }
}

impl Drop for RunningServer {
    fn drop(&mut self) {
        let _ = self.shutdown_inner();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(sig9(0.123456789012), 0.123456789);
        assert_eq!(sig9(1.0 / 3.0).to_string(), "0.333333333");
        assert_eq!(sig9(2.5e-13), 2.5e-13);
        assert_eq!(sig9(0.0), 0.0);
    }

    fn doc(v: Value) -> Map<String, Value> {
        v.as_object().unwrap().clone()
    }

    #[test]
    fn request_validation_names_the_field() {
        let full = json!({"TASK_ID": "t", "PROCESSINGTYPE": "reco", "FRAMEWORK": "athena", "NCORE": 8, "NINPUT": 1, "NFILES": 3, "NEVENTS": 100});
        assert_eq!(task_from_json(&doc(full.clone())).unwrap().n_events, 100);
        let mut missing = doc(full.clone());
        missing.remove("NEVENTS");
        let e = task_from_json(&missing).unwrap_err();
        assert_eq!((e.status, e.field), (StatusCode::UNPROCESSABLE_ENTITY, Some("NEVENTS")));
        let mut bad = doc(full);
        bad.insert("NCORE".into(), json!("eight"));
        assert_eq!(task_from_json(&bad).unwrap_err().field, Some("NCORE"));
        assert_eq!(parse_json(b"{not json").unwrap_err().status, StatusCode::BAD_REQUEST);
    }

    fn record(pred: Option<[usize; 4]>, actual: [usize; 4]) -> FeedbackRecord {
        let c = |a: [usize; 4]| ClassesDoc { ram: a[0], cpu: a[1], io: a[2], wall: a[3] };
        FeedbackRecord {
            task_id: "t".into(),
            predicted: pred.map(c),
            actual: TargetsDoc { ram_count: 1.0, cpu_time: 1.0, io_intensity: 1.0, walltime: 1.0 },
            actual_classes: c(actual),
            known_task: pred.is_some(),
            timestamp: 0,
        }
    }

    #[test]
    fn counters_track_agreement() {
        let mut c = AgreementCounters::default();
        c.observe(&record(Some([1, 2, 0, 3]), [1, 2, 0, 3]));
        assert_eq!(c.agree, [1; 4]);
        c.observe(&record(Some([1, 2, 0, 3]), [2, 2, 0, 3]));
        assert_eq!((c.agree[0], c.disagree[0], c.agree[1]), (1, 1, 2));
        c.observe(&record(None, [0, 0, 0, 0]));
        assert_eq!((c.records, c.unscored, c.unknown_task_ids), (3, 1, 1));
        assert_eq!(c.rate(Target::Ram), Some(0.5));
    }

    #[test]
    fn log_replay_matches_live_counters() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("feedback.jsonl");
        let mut log = FeedbackLog::open(&path).unwrap();
        for i in 0..10 {
            log.append(&record(Some([i % 4, 0, 1, 2]), [0, 0, 1, i % 5])).unwrap();
        }
        let live = log.counters();
        drop(log);
        assert_eq!(replay(&path).unwrap(), live);
        // Reopening continues from the replayed state.
        let mut log = FeedbackLog::open(&path).unwrap();
        assert_eq!(log.counters(), live);
        log.append(&record(None, [0; 4])).unwrap();
        assert_eq!(replay(&path).unwrap().records, 11);
    }
}

use std::collections::HashMap;
use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::mpsc;
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Duration, SubsecRound, Utc};
use serde::{Deserialize, Serialize};

use super::{validate_dag, DagError, PipelineDag, Resources};
use crate::data::DataSourceConfig;
use crate::ids::RunId;
use crate::params::Params;
use crate::registry::{keys, ObjectKey, ObjectStore, StoreError};

pub const DEFAULT_MAX_PARALLEL: usize = 4;
pub const RUN_REPORT_SCHEMA_VERSION: u32 = 1;

/// Failure raised by a task op. Anything implementing `std::error::Error`
/// converts into it with `?`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskError(String);

impl TaskError {
    pub fn msg(m: impl Into<String>) -> Self {
        Self(m.into())
    }

    pub fn message(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TaskError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl<E: std::error::Error> From<E> for TaskError {
    fn from(e: E) -> Self {
        Self(e.to_string())
    }
}

/// Everything a running task may touch.
pub struct TaskContext<'a> {
    pub run_id: &'a RunId,
    pub task_id: &'a str,
    pub params: &'a Params,
    pub depends_on: &'a [String],
    pub store: &'a dyn ObjectStore,
    pub data: &'a DataSourceConfig,
    log: Vec<String>,
}

impl TaskContext<'_> {
    pub fn log(&mut self, line: impl Into<String>) {
        self.log.push(line.into());
    }

    /// Publish `bytes` for dependents under this task's artifact prefix.
    pub fn put_artifact(&mut self, name: &str, bytes: &[u8]) -> Result<ObjectKey, TaskError> {
        let key = keys::task_artifact(self.run_id, self.task_id, name)?;
        self.store.put(&key, bytes)?;
        self.log(format!("wrote {key} ({} bytes)", bytes.len()));
        Ok(key)
    }

    /// Read artifact `name` from the first direct dependency that published it.
    pub fn upstream_artifact(&mut self, name: &str) -> Result<Vec<u8>, TaskError> {
        for dep in self.depends_on {
            let key = keys::task_artifact(self.run_id, dep, name)?;
            match self.store.get(&key) {
                Ok(bytes) => {
                    self.log(format!("read {key}"));
                    return Ok(bytes);
                }
                Err(StoreError::NotFound(_)) => continue,
                Err(e) => return Err(e.into()),
            }
        }
        Err(TaskError::msg(format!("no upstream task published artifact `{name}`")))
    }
}

pub trait TaskOp: Send + Sync {
    fn run(&self, ctx: &mut TaskContext<'_>) -> Result<(), TaskError>;
}

impl<F> TaskOp for F
where
    F: Fn(&mut TaskContext<'_>) -> Result<(), TaskError> + Send + Sync,
{
    fn run(&self, ctx: &mut TaskContext<'_>) -> Result<(), TaskError> {
        self(ctx)
    }
}

/// Op name → implementation.
#[derive(Clone, Default)]
pub struct TaskRegistry {
    ops: HashMap<String, Arc<dyn TaskOp>>,
}

impl TaskRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Registry holding the eight built-in ops.
    pub fn builtin() -> Self {
        let mut r = Self::empty();
        super::ops::register_builtins(&mut r);
        r
    }

    pub fn register(&mut self, name: &str, op: impl TaskOp + 'static) {
        self.ops.insert(name.to_string(), Arc::new(op));
    }

    pub fn get(&self, name: &str) -> Option<&Arc<dyn TaskOp>> {
        self.ops.get(name)
    }

    pub fn names(&self) -> Vec<&str> {
        let mut names: Vec<&str> = self.ops.keys().map(String::as_str).collect();
        names.sort_unstable();
        names
    }

    /// Every task's op must be registered.
    pub fn check(&self, dag: &PipelineDag) -> Result<(), DagError> {
        match dag.tasks.iter().find(|t| !self.ops.contains_key(&t.op)) {
            Some(t) => Err(DagError::UnknownOp { task: t.task_id.clone(), op: t.op.clone() }),
            None => Ok(()),
        }
    }
}

impl fmt::Debug for TaskRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TaskRegistry").field("ops", &self.names()).finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Succeeded,
    Failed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskReport {
    pub task_id: String,
    pub status: TaskStatus,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    pub log_key: ObjectKey,
    pub resources: Resources,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunReport {
    pub schema_version: u32,
    pub run_id: RunId,
    pub dag_id: String,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    pub tasks: Vec<TaskReport>,
}

impl RunReport {
    pub fn task(&self, task_id: &str) -> Option<&TaskReport> {
        self.tasks.iter().find(|t| t.task_id == task_id)
    }

    pub fn status(&self, task_id: &str) -> Option<TaskStatus> {
        self.task(task_id).map(|t| t.status)
    }

    pub fn succeeded(&self) -> bool {
        self.tasks.iter().all(|t| t.status == TaskStatus::Succeeded)
    }

    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("report serialization is infallible")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOptions {
    pub run_id: Option<RunId>,
    pub max_parallel: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { run_id: None, max_parallel: DEFAULT_MAX_PARALLEL }
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum RunError {
    #[error(transparent)]
    Dag(#[from] DagError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("max_parallel must be at least 1")]
    NoParallelism,
}

/// Wall clock that never returns the same or an earlier instant twice, so
/// report timestamps order causally related events strictly.
struct StrictClock(Mutex<Option<DateTime<Utc>>>);

impl StrictClock {
    fn new() -> Self {
        Self(Mutex::new(None))
    }

    fn now(&self) -> DateTime<Utc> {
        let mut last = self.0.lock().expect("clock poisoned");
        // Microsecond resolution, so timestamps survive a JSON round trip unchanged.
        let mut t = Utc::now().trunc_subsecs(6);
        if let Some(prev) = *last {
            if t <= prev {
                t = prev + Duration::microseconds(1);
            }
        }
        *last = Some(t);
        t
    }
}

struct Finished {
    index: usize,
    status: TaskStatus,
    started_at: DateTime<Utc>,
    finished_at: DateTime<Utc>,
    log: Vec<String>,
}

/// Run with the built-in ops and default options.
pub fn run_dag(dag: &PipelineDag, store: &dyn ObjectStore, data: &DataSourceConfig) -> Result<RunReport, RunError> {
    run_dag_with(dag, store, data, &TaskRegistry::builtin(), &RunOptions::default())
}

/// Execute `dag`, respecting edges and running at most
/// `options.max_parallel` tasks at once.
///
/// A task whose dependency failed or was skipped is itself skipped. Task
/// failures (including panics) are recorded, never returned; only store
/// failures while persisting logs or the report abort the run.
pub fn run_dag_with(
    dag: &PipelineDag,
    store: &dyn ObjectStore,
    data: &DataSourceConfig,
    registry: &TaskRegistry,
    options: &RunOptions,
) -> Result<RunReport, RunError> {
    validate_dag(dag)?;
    registry.check(dag)?;
    if options.max_parallel == 0 {
        return Err(RunError::NoParallelism);
    }
    let run_id = options.run_id.clone().unwrap_or_else(RunId::random);
    let clock = StrictClock::new();
    let started_at = clock.now();

    let n = dag.tasks.len();
    let index: HashMap<&str, usize> = dag.tasks.iter().enumerate().map(|(i, t)| (t.task_id.as_str(), i)).collect();
    let mut dependents: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut waiting: Vec<usize> = vec![0; n];
    for (i, t) in dag.tasks.iter().enumerate() {
        waiting[i] = t.depends_on.len();
        for d in &t.depends_on {
            dependents[index[d.as_str()]].push(i);
        }
    }
    let mut ready: Vec<usize> = (0..n).rev().filter(|&i| waiting[i] == 0).collect();
    let mut results: Vec<Option<Finished>> = (0..n).map(|_| None).collect();

    std::thread::scope(|scope| -> Result<(), RunError> {
        let (tx, rx) = mpsc::channel::<Finished>();
        let mut running = 0usize;
        let mut completed = 0usize;
        while completed < n {
            while running < options.max_parallel {
                let Some(i) = ready.pop() else { break };
                let task = &dag.tasks[i];
                let blocked = task
                    .depends_on
                    .iter()
                    .find(|d| results[index[d.as_str()]].as_ref().map(|f| f.status) != Some(TaskStatus::Succeeded));
                if let Some(dep) = blocked {
                    let at = clock.now();
                    tx.send(Finished {
                        index: i,
                        status: TaskStatus::Skipped,
                        started_at: at,
                        finished_at: at,
                        log: vec![format!("skipped: dependency `{dep}` did not succeed")],
                    })
                    .expect("receiver alive");
                    running += 1;
                    continue;
                }
                let op = registry.get(&task.op).expect("ops checked").clone();
                let tx = tx.clone();
                let (run_id, clock) = (&run_id, &clock);
                running += 1;
                scope.spawn(move || {
                    let mut ctx = TaskContext {
                        run_id,
                        task_id: &task.task_id,
                        params: &task.params,
                        depends_on: &task.depends_on,
                        store,
                        data,
                        log: Vec::new(),
                    };
                    let started_at = clock.now();
                    ctx.log(format!("task {} op {} started", task.task_id, task.op));
                    let outcome = catch_unwind(AssertUnwindSafe(|| op.run(&mut ctx)));
                    let status = match outcome {
                        Ok(Ok(())) => {
                            ctx.log("succeeded");
                            TaskStatus::Succeeded
                        }
                        Ok(Err(e)) => {
                            ctx.log(format!("failed: {e}"));
                            TaskStatus::Failed
                        }
                        Err(panic) => {
                            let msg = panic
                                .downcast_ref::<&str>()
                                .map(|s| s.to_string())
                                .or_else(|| panic.downcast_ref::<String>().cloned())
                                .unwrap_or_else(|| "unknown panic".into());
                            ctx.log(format!("failed: panicked: {msg}"));
                            TaskStatus::Failed
                        }
                    };
                    let finished_at = clock.now();
                    let _ = tx.send(Finished { index: i, status, started_at, finished_at, log: ctx.log });
                });
            }
            let done = rx.recv().expect("a task is in flight");
            running -= 1;
            completed += 1;
            let key = keys::task_log(&run_id, &dag.tasks[done.index].task_id)?;
            let mut text = done.log.join("\n");
            text.push('\n');
            store.put(&key, text.as_bytes())?;
            for &j in dependents[done.index].iter().rev() {
                waiting[j] -= 1;
                if waiting[j] == 0 {
                    ready.push(j);
                }
            }
            let i = done.index;
            results[i] = Some(done);
        }
        Ok(())
    })?;

    let tasks = dag
        .tasks
        .iter()
        .zip(results)
        .map(|(t, f)| {
            let f = f.expect("every task finished");
            Ok(TaskReport {
                task_id: t.task_id.clone(),
                status: f.status,
                started_at: f.started_at,
                finished_at: f.finished_at,
                log_key: keys::task_log(&run_id, &t.task_id)?,
                resources: t.resources.clone(),
            })
        })
        .collect::<Result<Vec<_>, StoreError>>()?;
    let report = RunReport {
        schema_version: RUN_REPORT_SCHEMA_VERSION,
        run_id: run_id.clone(),
        dag_id: dag.dag_id.clone(),
        started_at,
        finished_at: clock.now(),
        tasks,
    };
    store.put(&keys::run_status(&run_id), &report.to_json())?;
    Ok(report)
}

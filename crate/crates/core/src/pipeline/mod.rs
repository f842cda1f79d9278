//! DAG pipelines: definition, validation and an in-process runner.
//!
//! Tasks share nothing but the object store and their own params. Data
//! produced by one task for another is written under
//! `runs/{run_id}/artifacts/{task_id}/` and read back by the dependents.

mod ops;
mod runner;

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::params::Params;

pub use ops::{
    build_inference_pipeline, build_train_pipeline, inference_window_start, TrainWindow, OP_ASSEMBLE_STRATEGY,
    OP_EXECUTE_STRATEGY, OP_FIT_ALGORITHMS, OP_GENERATE_DATA, OP_LOAD_STRATEGY, OP_RUN_BACKTEST, OP_SAVE_OUTCOME,
    OP_SAVE_STRATEGY,
};
pub use runner::{
    run_dag, run_dag_with, RunError, RunOptions, RunReport, TaskContext, TaskError, TaskOp, TaskRegistry, TaskReport,
    TaskStatus, DEFAULT_MAX_PARALLEL,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DagError {
    #[error("dependency cycle: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
    #[error("task `{task}` depends on unknown task `{dependency}`")]
    UnknownDependency { task: String, dependency: String },
    #[error("task id `{0}` is used more than once")]
    DuplicateTask(String),
    #[error("invalid task id `{0}`: expected [a-z0-9_-]+")]
    InvalidTaskId(String),
    #[error("task `{task}` has invalid resources: {reason}")]
    InvalidResources { task: String, reason: String },
    #[error("task `{task}` uses unregistered op `{op}`")]
    UnknownOp { task: String, op: String },
    #[error("invalid DAG file: {0}")]
    Parse(String),
}

/// Resource request recorded with each task. Never enforced locally.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Resources {
    pub cpu: f64,
    pub memory_mb: u64,
    pub gpu: u32,
}

impl Default for Resources {
    fn default() -> Self {
        Self { cpu: 1.0, memory_mb: 512, gpu: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub task_id: String,
    pub op: String,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub depends_on: Vec<String>,
    #[serde(default)]
    pub resources: Resources,
}

impl TaskSpec {
    pub fn new(task_id: &str, op: &str) -> Self {
        Self {
            task_id: task_id.to_string(),
            op: op.to_string(),
            params: Params::new(),
            depends_on: Vec::new(),
            resources: Resources::default(),
        }
    }

    pub fn after(mut self, dep: &str) -> Self {
        self.depends_on.push(dep.to_string());
        self
    }

    pub fn with_params(mut self, params: Params) -> Self {
        self.params = params;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineDag {
    pub dag_id: String,
    pub tasks: Vec<TaskSpec>,
}

impl PipelineDag {
    pub fn new(dag_id: &str, tasks: Vec<TaskSpec>) -> Self {
        Self { dag_id: dag_id.to_string(), tasks }
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, DagError> {
        serde_json::from_slice(bytes).map_err(|e| DagError::Parse(e.to_string()))
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("DAG serialization is infallible")
    }

    pub fn task(&self, task_id: &str) -> Option<&TaskSpec> {
        self.tasks.iter().find(|t| t.task_id == task_id)
    }

    /// Ids of every task that transitively depends on `task_id`.
    pub fn descendants(&self, task_id: &str) -> HashSet<String> {
        let mut found = HashSet::new();
        let mut frontier = vec![task_id.to_string()];
        while let Some(cur) = frontier.pop() {
            for t in &self.tasks {
                if t.depends_on.contains(&cur) && found.insert(t.task_id.clone()) {
                    frontier.push(t.task_id.clone());
                }
            }
        }
        found
    }
}

fn valid_task_id(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| matches!(b, b'a'..=b'z' | b'0'..=b'9' | b'_' | b'-'))
}

/// Check ids, dependencies, resources and acyclicity.
///
/// On a cycle the error lists the task ids along one cycle, starting from
/// the task at which it was entered (a self-dependency is a cycle of one).
pub fn validate_dag(dag: &PipelineDag) -> Result<(), DagError> {
    let mut index = HashMap::new();
    for (i, t) in dag.tasks.iter().enumerate() {
        if !valid_task_id(&t.task_id) {
            return Err(DagError::InvalidTaskId(t.task_id.clone()));
        }
        if index.insert(t.task_id.as_str(), i).is_some() {
            return Err(DagError::DuplicateTask(t.task_id.clone()));
        }
        let r = &t.resources;
        if !(r.cpu.is_finite() && r.cpu > 0.0) {
            return Err(DagError::InvalidResources {
                task: t.task_id.clone(),
                reason: format!("cpu must be positive, got {}", r.cpu),
            });
        }
    }
    let mut deps: Vec<Vec<usize>> = Vec::with_capacity(dag.tasks.len());
    for t in &dag.tasks {
        deps.push(
            t.depends_on
                .iter()
                .map(|d| {
                    index
                        .get(d.as_str())
                        .copied()
                        .ok_or_else(|| DagError::UnknownDependency { task: t.task_id.clone(), dependency: d.clone() })
                })
                .collect::<Result<_, _>>()?,
        );
    }
    match find_cycle(&deps) {
        Some(cycle) => Err(DagError::Cycle(cycle.into_iter().map(|i| dag.tasks[i].task_id.clone()).collect())),
        None => Ok(()),
    }
}

/// Iterative three-colour DFS; returns the nodes of the first back-edge cycle.
fn find_cycle(deps: &[Vec<usize>]) -> Option<Vec<usize>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Open,
        Done,
    }
    let mut mark = vec![Mark::New; deps.len()];
    for root in 0..deps.len() {
        if mark[root] != Mark::New {
            continue;
        }
        // (node, next edge to explore)
        let mut stack = vec![(root, 0usize)];
        mark[root] = Mark::Open;
        while let Some(&mut (node, ref mut edge)) = stack.last_mut() {
            if let Some(&next) = deps[node].get(*edge) {
                *edge += 1;
                match mark[next] {
                    Mark::New => {
                        mark[next] = Mark::Open;
                        stack.push((next, 0));
                    }
                    Mark::Open => {
                        let start = stack.iter().position(|(n, _)| *n == next).expect("open node is on the stack");
                        return Some(stack[start..].iter().map(|(n, _)| *n).collect());
                    }
                    Mark::Done => {}
                }
            } else {
                mark[node] = Mark::Done;
                stack.pop();
            }
        }
    }
    None
}

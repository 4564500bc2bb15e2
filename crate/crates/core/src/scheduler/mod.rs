// SPDX-License-Identifier: Apache-2.0

//! Dynamic column partitioning of the array between tenants.
//!
//! The first layer to arrive gets the whole array. When the array next
//! becomes idle with several layers ready, it is split into equal-width
//! partitions and the heaviest layers take the widest ones. From then on
//! freed partitions are merged with free neighbours and handed out whole.
//! Running layers are never preempted.

mod assign;
mod partition_set;
mod trace;

use std::collections::BTreeMap;
use std::error::Error as StdError;

use log::{debug, trace as log_trace};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::energy::{layer_activities, ActivityCounts};
use crate::pe_array::{ArrayConfig, FeedModel, PartId};
use crate::timing::{layer_cycles, CycleEstimate};
use crate::workload::{validate_workload, workload_to_json, LayerRef, LayerShape, ValidationErrors, Workload};

pub use assign::{task_assignment, TaskQueueEntry};
pub use partition_set::{merge_free, partition_calculation, PartitionSet};
pub use trace::{EventKind, LayerRecord, ScheduleEvent, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Partitioned,
    /// One layer at a time on the full array, first come first served.
    Baseline,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "partitioned" => Ok(Mode::Partitioned),
            "baseline" => Ok(Mode::Baseline),
            other => Err(format!("unknown mode `{other}`")),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Partitioned => "partitioned",
            Mode::Baseline => "baseline",
        })
    }
}

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("invalid workload:\n{0}")]
    Invalid(ValidationErrors),
    #[error("cannot split {cols} columns between {tasks} tasks")]
    TooManyTasks { tasks: usize, cols: usize },
    #[error("invalid partition layout: {0}")]
    BadPartition(String),
    #[error("array must have at least one row and one column")]
    EmptyArray,
    #[error("executing {layer}: {source}")]
    Execution { layer: LayerRef, source: Box<dyn StdError + Send + Sync> },
}

/// What the scheduler hands an executor when a layer starts.
#[derive(Debug, Clone, Copy)]
pub struct LayerJob<'a> {
    pub layer: &'a LayerRef,
    pub shape: &'a LayerShape,
    pub part_id: PartId,
    pub part_rows: u64,
    pub part_cols: u64,
    pub col_start: u64,
    pub n_active: u64,
    pub feed_model: FeedModel,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerExecution {
    pub cycles: CycleEstimate,
    pub activities: ActivityCounts,
}

/// Produces a layer's duration and activity counts.
pub trait LayerExecutor {
    fn execute(&mut self, job: &LayerJob<'_>) -> Result<LayerExecution, Box<dyn StdError + Send + Sync>>;
}

/// Closed-form timing and activity models.
#[derive(Debug, Clone, Copy, Default)]
pub struct AnalyticalExecutor;

impl LayerExecutor for AnalyticalExecutor {
    fn execute(&mut self, job: &LayerJob<'_>) -> Result<LayerExecution, Box<dyn StdError + Send + Sync>> {
        Ok(LayerExecution {
            cycles: layer_cycles(job.shape, job.part_rows, job.part_cols, job.feed_model, job.n_active, job.col_start),
            activities: layer_activities(job.shape, job.part_rows, job.part_cols, job.feed_model, job.col_start),
        })
    }
}

/// Hex SHA-256 of the workload's canonical JSON.
pub fn workload_fingerprint(w: &Workload) -> String {
    hex::encode(Sha256::digest(workload_to_json(w).as_bytes()))
}

pub fn run_schedule(w: &Workload, cfg: &ArrayConfig, mode: Mode) -> Result<Trace, ScheduleError> {
    run_schedule_with(w, cfg, mode, &mut AnalyticalExecutor)
}

pub fn run_schedule_with(
    w: &Workload,
    cfg: &ArrayConfig,
    mode: Mode,
    exec: &mut dyn LayerExecutor,
) -> Result<Trace, ScheduleError> {
    if cfg.rows == 0 || cfg.cols == 0 {
        return Err(ScheduleError::EmptyArray);
    }
    let w = validate_workload(w.clone()).map_err(ScheduleError::Invalid)?;
    Scheduler::new(&w, *cfg, mode).run(exec)
}

struct Running {
    layer: LayerRef,
    part_id: PartId,
    col_start: usize,
    end: u64,
}

struct Scheduler<'w> {
    w: &'w Workload,
    cfg: ArrayConfig,
    mode: Mode,
    parts: PartitionSet,
    time: u64,
    ready: Vec<TaskQueueEntry>,
    running: Vec<Running>,
    pending_preds: BTreeMap<LayerRef, usize>,
    remaining: BTreeMap<String, usize>,
    /// `(arrival_time, dnn_id)`, sorted.
    arrivals: Vec<(u64, String)>,
    next_arrival: usize,
    dispatched: bool,
    events: Vec<ScheduleEvent>,
    records: Vec<LayerRecord>,
    completion: BTreeMap<String, u64>,
}

impl<'w> Scheduler<'w> {
    fn new(w: &'w Workload, cfg: ArrayConfig, mode: Mode) -> Self {
        let mut pending_preds = BTreeMap::new();
        let mut remaining = BTreeMap::new();
        for d in &w.dnns {
            remaining.insert(d.dnn_id.clone(), d.layers.len());
            for i in 0..d.layers.len() {
                pending_preds.insert(LayerRef::new(d.dnn_id.clone(), i), d.predecessors(i).count());
            }
        }
        let mut arrivals: Vec<(u64, String)> = w.dnns.iter().map(|d| (d.arrival_time, d.dnn_id.clone())).collect();
        arrivals.sort();
        Scheduler {
            w,
            cfg,
            mode,
            parts: PartitionSet::new(cfg.cols),
            time: 0,
            ready: Vec::new(),
            running: Vec::new(),
            pending_preds,
            remaining,
            arrivals,
            next_arrival: 0,
            dispatched: false,
            events: Vec::new(),
            records: Vec::new(),
            completion: BTreeMap::new(),
        }
    }

    fn emit(&mut self, kind: EventKind, layer: Option<LayerRef>, dnn_id: Option<String>) {
        self.events.push(ScheduleEvent {
            kind,
            time: self.time,
            layer,
            dnn_id,
            partitions: self.parts.to_vec(),
        });
    }

    fn make_ready(&mut self, layer: LayerRef) {
        let dnn = self.w.dnn(&layer.dnn_id).expect("layer of a known dnn");
        let shape = &dnn.layers[layer.layer_index];
        self.ready.push(TaskQueueEntry {
            mac_priority: shape.opr_count(),
            ready_at: self.time,
            arrival_time: dnn.arrival_time,
            layer,
        });
    }

    fn run(mut self, exec: &mut dyn LayerExecutor) -> Result<Trace, ScheduleError> {
        let Some(first) = self.arrivals.first() else {
            return Ok(self.finish());
        };
        self.time = first.0;
        loop {
            self.complete_layers();
            self.admit_arrivals();
            let merged = merge_free(&self.parts);
            if merged != self.parts {
                self.parts = merged;
                self.emit(EventKind::Merge, None, None);
            }
            self.assign(exec)?;

            let next_end = self.running.iter().map(|r| r.end).min();
            let next_arrival = self.arrivals.get(self.next_arrival).map(|a| a.0);
            match next_end.into_iter().chain(next_arrival).min() {
                Some(t) => self.time = t,
                None => break,
            }
        }
        debug_assert!(self.ready.is_empty(), "layers left unscheduled");
        Ok(self.finish())
    }

    fn complete_layers(&mut self) {
        let now = self.time;
        let mut done: Vec<Running> = Vec::new();
        let mut i = 0;
        while i < self.running.len() {
            if self.running[i].end == now {
                done.push(self.running.swap_remove(i));
            } else {
                i += 1;
            }
        }
        done.sort_by_key(|r| r.col_start);
        for r in done {
            self.parts.release(r.part_id);
            self.emit(EventKind::LayerEnd, Some(r.layer.clone()), None);
            let dnn = self.w.dnn(&r.layer.dnn_id).expect("known dnn");
            let succs: Vec<usize> = dnn.successors(r.layer.layer_index).collect();
            for s in succs {
                let key = LayerRef::new(r.layer.dnn_id.clone(), s);
                let left = self.pending_preds.get_mut(&key).expect("known layer");
                *left -= 1;
                if *left == 0 {
                    self.make_ready(key);
                }
            }
            let left = self.remaining.get_mut(&r.layer.dnn_id).expect("known dnn");
            *left -= 1;
            if *left == 0 {
                self.completion.insert(r.layer.dnn_id.clone(), now);
                self.emit(EventKind::DnnDone, None, Some(r.layer.dnn_id.clone()));
            }
        }
    }

    fn admit_arrivals(&mut self) {
        while let Some((t, id)) = self.arrivals.get(self.next_arrival).cloned() {
            if t != self.time {
                break;
            }
            self.next_arrival += 1;
            self.emit(EventKind::DnnArrival, None, Some(id.clone()));
            let n = self.w.dnn(&id).expect("known dnn").layers.len();
            for i in 0..n {
                let key = LayerRef::new(id.clone(), i);
                if self.pending_preds[&key] == 0 {
                    self.make_ready(key);
                }
            }
        }
    }

    fn assign(&mut self, exec: &mut dyn LayerExecutor) -> Result<(), ScheduleError> {
        if self.ready.is_empty() {
            return Ok(());
        }
        let idle = self.running.is_empty();
        let picks: Vec<(LayerRef, PartId)> = match self.mode {
            Mode::Baseline if idle => vec![(self.take_fcfs(), self.parts[0].part_id)],
            Mode::Baseline => Vec::new(),
            Mode::Partitioned if idle && !self.dispatched => vec![(self.take_fcfs(), self.parts[0].part_id)],
            Mode::Partitioned if idle && self.ready.len() > 1 => {
                let n = self.ready.len().min(self.cfg.cols);
                let widths = partition_calculation(n, self.cfg.cols)?;
                self.parts = PartitionSet::split(self.cfg.cols, &widths, self.parts.max_id() + 1);
                self.emit(EventKind::Repartition, None, None);
                let targets: Vec<_> = self.parts[..n].to_vec();
                self.pick(&targets)
            }
            Mode::Partitioned => {
                let free = self.parts.free_regions();
                self.pick(&free)
            }
        };
        if picks.is_empty() {
            return Ok(());
        }
        for (layer, part_id) in &picks {
            self.parts.occupy(*part_id, layer.clone());
        }
        let n_active = self.parts.busy_count();
        for (layer, part_id) in picks {
            self.start(exec, layer, part_id, n_active)?;
        }
        self.dispatched = true;
        Ok(())
    }

    /// Removes and returns the earliest-arrived ready layer. Only called
    /// when the array is idle, so its single merged partition spans it.
    fn take_fcfs(&mut self) -> LayerRef {
        debug_assert_eq!(self.parts.len(), 1);
        let i = (0..self.ready.len())
            .min_by(|&a, &b| self.ready[a].fcfs_key().cmp(&self.ready[b].fcfs_key()))
            .expect("ready is non-empty");
        self.ready.remove(i).layer
    }

    fn pick(&mut self, regions: &[crate::pe_array::Partition]) -> Vec<(LayerRef, PartId)> {
        let picks: Vec<(LayerRef, PartId)> = task_assignment(&self.ready, regions)
            .into_iter()
            .map(|(l, p)| (l, p.part_id))
            .collect();
        self.ready.retain(|e| picks.iter().all(|(l, _)| *l != e.layer));
        picks
    }

    fn start(
        &mut self,
        exec: &mut dyn LayerExecutor,
        layer: LayerRef,
        part_id: PartId,
        n_active: usize,
    ) -> Result<(), ScheduleError> {
        let part = self.parts.get(part_id).expect("assigned partition exists").clone();
        let shape = *self.w.layer(&layer).expect("known layer");
        let job = LayerJob {
            layer: &layer,
            shape: &shape,
            part_id,
            part_rows: self.cfg.rows as u64,
            part_cols: part.col_width as u64,
            col_start: part.col_start as u64,
            n_active: n_active as u64,
            feed_model: self.cfg.feed_model,
        };
        let out = exec
            .execute(&job)
            .map_err(|source| ScheduleError::Execution { layer: layer.clone(), source })?;
        let end = self.time + out.cycles.total;
        debug!("{layer} on {part_id} [{}..{}) at {} for {} cycles", part.col_start, part.col_end(), self.time, out.cycles.total);
        log_trace!("{layer}: {:?}", out.activities);
        self.records.push(LayerRecord {
            dnn_id: layer.dnn_id.clone(),
            layer_index: layer.layer_index,
            part_id,
            col_start: part.col_start,
            col_width: part.col_width,
            n_active,
            start: self.time,
            end,
            cycles: out.cycles.total,
            load_cycles: out.cycles.load_cycles,
            folds: out.cycles.per_fold.len(),
            activities: out.activities,
        });
        self.running.push(Running { layer: layer.clone(), part_id, col_start: part.col_start, end });
        self.emit(EventKind::LayerStart, Some(layer), None);
        Ok(())
    }

    fn finish(mut self) -> Trace {
        self.records.sort_by_key(|r| (r.start, r.col_start));
        let makespan = self.records.iter().map(|r| r.end).max().unwrap_or(0);
        let totals = self.records.iter().map(|r| r.activities).sum();
        Trace {
            array_rows: self.cfg.rows,
            array_cols: self.cfg.cols,
            feed_model: self.cfg.feed_model,
            workload_fingerprint: workload_fingerprint(self.w),
            makespan,
            events: self.events,
            layers: self.records,
            dnn_completion: self.completion,
            totals,
        }
    }
}

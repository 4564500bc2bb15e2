// SPDX-License-Identifier: Apache-2.0

//! Runs a workload end to end and compares scheduling modes.

mod functional;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{energy_of, Energy, EnergyError, EnergyTable};
use crate::pe_array::{ArrayConfig, PeError};
use crate::scheduler::{run_schedule_with, AnalyticalExecutor, Mode, ScheduleError, Trace};
use crate::workload::{LayerRef, Workload};

pub use functional::{reference_output, synthetic_tensors, FunctionalExecutor, SYNTH_MAX};

/// Largest array, in PEs, the functional simulator will step.
pub const DEFAULT_FUNCTIONAL_CAP: usize = 64 * 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fidelity {
    /// Closed-form timing and activity models.
    #[default]
    Analytical,
    /// Every fold stepped on the PE grid and checked against a reference.
    Functional,
}

impl std::str::FromStr for Fidelity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "analytical" => Ok(Fidelity::Analytical),
            "functional" => Ok(Fidelity::Functional),
            other => Err(format!("unknown fidelity `{other}`")),
        }
    }
}

impl std::fmt::Display for Fidelity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Fidelity::Analytical => "analytical",
            Fidelity::Functional => "functional",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    pub array: ArrayConfig,
    pub mode: Mode,
    pub fidelity: Fidelity,
    /// `None` uses [`EnergyTable::illustrative`].
    pub energy_table: Option<PathBuf>,
    pub seed: u64,
    /// Upper bound on `rows * cols` for functional fidelity.
    pub functional_cap: usize,
}

impl RunConfig {
    pub fn new(array: ArrayConfig, mode: Mode) -> Self {
        RunConfig {
            array,
            mode,
            fidelity: Fidelity::Analytical,
            energy_table: None,
            seed: 0,
            functional_cap: DEFAULT_FUNCTIONAL_CAP,
        }
    }

    pub fn with_fidelity(mut self, fidelity: Fidelity) -> Self {
        self.fidelity = fidelity;
        self
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn energy_table(&self) -> Result<EnergyTable, EnergyError> {
        match &self.energy_table {
            Some(path) => EnergyTable::load(path),
            None => Ok(EnergyTable::illustrative()),
        }
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("functional fidelity is limited to {cap} PEs, array has {rows}x{cols}")]
    FunctionalCapExceeded { rows: usize, cols: usize, cap: usize },
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Pe(#[from] PeError),
    #[error("{layer}: channel {channel} pixel {pixel} computed {found}, expected {expected}")]
    OutputMismatch { layer: LayerRef, channel: usize, pixel: usize, expected: i64, found: i64 },
    #[error("traces are not comparable: {0}")]
    WorkloadMismatch(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerEnergy {
    pub dnn_id: String,
    pub layer_index: usize,
    pub energy: Energy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub table: String,
    pub total: Energy,
    pub per_dnn: BTreeMap<String, Energy>,
    pub per_layer: Vec<LayerEnergy>,
}

impl EnergyReport {
    pub fn from_trace(trace: &Trace, table: &EnergyTable) -> Result<Self, EnergyError> {
        table.check_complete()?;
        let mut per_dnn: BTreeMap<String, Energy> = BTreeMap::new();
        let mut per_layer = Vec::with_capacity(trace.layers.len());
        for l in &trace.layers {
            let e = energy_of(&l.activities, table)?;
            let acc = per_dnn.entry(l.dnn_id.clone()).or_default();
            *acc = *acc + e;
            per_layer.push(LayerEnergy { dnn_id: l.dnn_id.clone(), layer_index: l.layer_index, energy: e });
        }
        Ok(EnergyReport {
            table: table.metadata.name.clone(),
            total: energy_of(&trace.totals, table)?,
            per_dnn,
            per_layer,
        })
    }

    /// Rows `scope,dnn_id,layer_index,picojoules` for layers, DNNs and the
    /// total.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["scope", "dnn_id", "layer_index", "picojoules"])?;
        for l in &self.per_layer {
            w.write_record(["layer", &l.dnn_id, &l.layer_index.to_string(), &pj(l.energy)])?;
        }
        for (id, e) in &self.per_dnn {
            w.write_record(["dnn", id, "", &pj(*e)])?;
        }
        w.write_record(["total", "", "", &pj(self.total)])?;
        w.flush()?;
        Ok(())
    }
}

fn pj(e: Energy) -> String {
    format!("{}.{:03}", e.0 / 1000, e.0 % 1000)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub mode: Mode,
    pub fidelity: Fidelity,
    pub trace: Trace,
    pub energy: EnergyReport,
}

impl RunOutput {
    pub fn utilization(&self) -> f64 {
        self.trace.utilization()
    }
}

pub fn execute(run: &RunConfig, w: &Workload) -> Result<RunOutput, EngineError> {
    let table = run.energy_table()?;
    table.check_complete()?;
    let trace = match run.fidelity {
        Fidelity::Analytical => run_schedule_with(w, &run.array, run.mode, &mut AnalyticalExecutor)?,
        Fidelity::Functional => {
            let pes = run.array.rows.saturating_mul(run.array.cols);
            if pes > run.functional_cap {
                return Err(EngineError::FunctionalCapExceeded {
                    rows: run.array.rows,
                    cols: run.array.cols,
                    cap: run.functional_cap,
                });
            }
            let mut exec = FunctionalExecutor::new(run.seed);
            let trace = run_schedule_with(w, &run.array, run.mode, &mut exec)?;
            log::info!("functional run checked {} folds", exec.folds_run);
            trace
        }
    };
    let energy = EnergyReport::from_trace(&trace, &table)?;
    Ok(RunOutput { mode: run.mode, fidelity: run.fidelity, trace, energy })
}

/// Baseline and partitioned runs of the same configuration, executed on two
/// threads.
pub fn execute_both(run: &RunConfig, w: &Workload) -> Result<(RunOutput, RunOutput), EngineError> {
    let base = run.clone().with_mode(Mode::Baseline);
    let part = run.clone().with_mode(Mode::Partitioned);
    let (b, p) = std::thread::scope(|s| {
        let b = s.spawn(|| execute(&base, w));
        let p = execute(&part, w);
        (b.join().expect("baseline run panicked"), p)
    });
    Ok((b?, p?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub makespan: u64,
    pub total_energy: Energy,
    pub utilization: f64,
    pub dnn_completion: BTreeMap<String, u64>,
}

impl ModeSummary {
    fn of(out: &RunOutput) -> Self {
        ModeSummary {
            makespan: out.trace.makespan,
            total_energy: out.energy.total,
            utilization: out.utilization(),
            dnn_completion: out.trace.dnn_completion.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DnnDelta {
    pub dnn_id: String,
    pub baseline: u64,
    pub partitioned: u64,
    /// `baseline - partitioned`, in cycles.
    pub saved: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub baseline: ModeSummary,
    pub partitioned: ModeSummary,
    /// `(baseline - partitioned) / baseline` for makespan.
    pub time_improvement: f64,
    /// `(baseline - partitioned) / baseline` for total energy.
    pub energy_improvement: f64,
    pub per_dnn: Vec<DnnDelta>,
}

/// Relative saving of `new` over `old`; zero when `old` is zero.
pub fn improvement(old: u128, new: u128) -> f64 {
    if old == 0 {
        0.0
    } else {
        (old as f64 - new as f64) / old as f64
    }
}

pub fn compare(baseline: &RunOutput, partitioned: &RunOutput) -> Result<ComparisonReport, EngineError> {
    let (b, p) = (&baseline.trace, &partitioned.trace);
    if b.workload_fingerprint != p.workload_fingerprint {
        return Err(EngineError::WorkloadMismatch("different workloads".into()));
    }
    if (b.array_rows, b.array_cols, b.feed_model) != (p.array_rows, p.array_cols, p.feed_model) {
        return Err(EngineError::WorkloadMismatch(format!(
            "{}x{} {} vs {}x{} {}",
            b.array_rows, b.array_cols, b.feed_model, p.array_rows, p.array_cols, p.feed_model
        )));
    }
    let per_dnn = b
        .dnn_completion
        .iter()
        .map(|(id, &bt)| {
            let pt = p.dnn_completion.get(id).copied().unwrap_or(0);
            DnnDelta { dnn_id: id.clone(), baseline: bt, partitioned: pt, saved: bt as i64 - pt as i64 }
        })
        .collect();
    Ok(ComparisonReport {
        time_improvement: improvement(b.makespan.into(), p.makespan.into()),
        energy_improvement: improvement(baseline.energy.total.0, partitioned.energy.total.0),
        baseline: ModeSummary::of(baseline),
        partitioned: ModeSummary::of(partitioned),
        per_dnn,
    })
}

impl ComparisonReport {
    /// Rows `metric,baseline,partitioned,improvement`.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["metric", "baseline", "partitioned", "improvement"])?;
        w.write_record([
            "makespan_cycles",
            &self.baseline.makespan.to_string(),
            &self.partitioned.makespan.to_string(),
            &format!("{:.6}", self.time_improvement),
        ])?;
        w.write_record([
            "energy_pj",
            &pj(self.baseline.total_energy),
            &pj(self.partitioned.total_energy),
            &format!("{:.6}", self.energy_improvement),
        ])?;
        w.write_record([
            "utilization",
            &format!("{:.6}", self.baseline.utilization),
            &format!("{:.6}", self.partitioned.utilization),
            "",
        ])?;
        for d in &self.per_dnn {
            w.write_record([
                &format!("completion:{}", d.dnn_id),
                &d.baseline.to_string(),
                &d.partitioned.to_string(),
                &format!("{:.6}", improvement(d.baseline.into(), d.partitioned.into())),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

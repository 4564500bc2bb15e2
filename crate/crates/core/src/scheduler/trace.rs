// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::energy::ActivityCounts;
use crate::pe_array::{FeedModel, PartId, Partition};
use crate::workload::LayerRef;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    LayerStart,
    LayerEnd,
    Repartition,
    Merge,
    DnnArrival,
    DnnDone,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleEvent {
    pub kind: EventKind,
    pub time: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer: Option<LayerRef>,
    /// Set on arrival and completion events.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dnn_id: Option<String>,
    /// Partition layout right after the event.
    pub partitions: Vec<Partition>,
}

/// One executed layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub dnn_id: String,
    pub layer_index: usize,
    pub part_id: PartId,
    pub col_start: usize,
    pub col_width: usize,
    /// Busy partitions, this one included, when the layer started.
    pub n_active: usize,
    pub start: u64,
    pub end: u64,
    pub cycles: u64,
    pub load_cycles: u64,
    pub folds: usize,
    pub activities: ActivityCounts,
}

impl LayerRecord {
    pub fn layer(&self) -> LayerRef {
        LayerRef::new(self.dnn_id.clone(), self.layer_index)
    }
}

/// Everything a schedule produced. Deliberately free of the scheduling mode:
/// two runs that made the same decisions compare equal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub array_rows: usize,
    pub array_cols: usize,
    pub feed_model: FeedModel,
    /// SHA-256 of the canonical workload JSON.
    pub workload_fingerprint: String,
    pub makespan: u64,
    pub events: Vec<ScheduleEvent>,
    /// Sorted by start time, then first column.
    pub layers: Vec<LayerRecord>,
    pub dnn_completion: BTreeMap<String, u64>,
    pub totals: ActivityCounts,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    dnn_id: &'a str,
    layer_index: usize,
    part_id: u32,
    col_start: usize,
    col_width: usize,
    n_active: usize,
    start: u64,
    end: u64,
    cycles: u64,
    mac_ops: u64,
    lr_writes: u64,
    pass_hops: u64,
    feed_reads: u64,
    load_reads: u64,
    drain_writes: u64,
    drain_rmw: u64,
    dram_reads: u64,
    dram_writes: u64,
}

impl Trace {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    /// One row per layer.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for l in &self.layers {
            let a = &l.activities;
            w.serialize(CsvRow {
                dnn_id: &l.dnn_id,
                layer_index: l.layer_index,
                part_id: l.part_id.0,
                col_start: l.col_start,
                col_width: l.col_width,
                n_active: l.n_active,
                start: l.start,
                end: l.end,
                cycles: l.cycles,
                mac_ops: a.mac_ops,
                lr_writes: a.lr_writes,
                pass_hops: a.pass_hops,
                feed_reads: a.feed_reads,
                load_reads: a.load_reads,
                drain_writes: a.drain_writes,
                drain_rmw: a.drain_rmw,
                dram_reads: a.dram_reads,
                dram_writes: a.dram_writes,
            })?;
        }
        w.flush()?;
        Ok(())
    }

    /// Fraction of PE-cycles up to the makespan that performed a MAC.
    /// Columns a layer holds but does not use, and idle remainder columns,
    /// count as wasted.
    pub fn utilization(&self) -> f64 {
        let total = self.array_rows as u128 * self.array_cols as u128 * self.makespan as u128;
        if total == 0 {
            return 0.0;
        }
        self.totals.mac_ops as f64 / total as f64
    }

    pub fn record(&self, layer: &LayerRef) -> Option<&LayerRecord> {
        self.layers
            .iter()
            .find(|l| l.dnn_id == layer.dnn_id && l.layer_index == layer.layer_index)
    }
}

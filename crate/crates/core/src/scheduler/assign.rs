// SPDX-License-Identifier: Apache-2.0

use std::cmp::Reverse;

use serde::{Deserialize, Serialize};

use crate::pe_array::Partition;
use crate::workload::LayerRef;

/// A ready layer waiting for columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskQueueEntry {
    pub layer: LayerRef,
    /// `opr_count` of the layer's shape.
    pub mac_priority: u64,
    pub ready_at: u64,
    /// Arrival time of the owning DNN, used to break priority ties.
    pub arrival_time: u64,
}

impl TaskQueueEntry {
    /// Larger MAC demand first, then earlier arrival, then `dnn_id`, then
    /// lower layer index.
    pub(crate) fn priority_key(&self) -> (Reverse<u64>, u64, &str, usize) {
        (Reverse(self.mac_priority), self.arrival_time, &self.layer.dnn_id, self.layer.layer_index)
    }

    /// First-come order: arrival, then `dnn_id`, then layer index.
    pub(crate) fn fcfs_key(&self) -> (u64, &str, usize) {
        (self.arrival_time, &self.layer.dnn_id, self.layer.layer_index)
    }
}

/// Pairs the heaviest ready layers with the widest free regions. Layers
/// without a region stay queued; regions without a layer stay free.
pub fn task_assignment(ready: &[TaskQueueEntry], free_regions: &[Partition]) -> Vec<(LayerRef, Partition)> {
    let mut tasks: Vec<&TaskQueueEntry> = ready.iter().collect();
    tasks.sort_by(|a, b| a.priority_key().cmp(&b.priority_key()));
    let mut regions: Vec<&Partition> = free_regions.iter().collect();
    regions.sort_by_key(|p| (Reverse(p.col_width), p.col_start));
    tasks
        .into_iter()
        .zip(regions)
        .map(|(t, p)| (t.layer.clone(), p.clone()))
        .collect()
}

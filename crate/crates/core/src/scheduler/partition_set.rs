// SPDX-License-Identifier: Apache-2.0

use std::ops::Deref;

use super::ScheduleError;
use crate::pe_array::{PartId, PartState, Partition};
use crate::workload::LayerRef;

/// Column partitions of the array, sorted by `col_start` and covering every
/// column. Columns not handed to a tenant are free partitions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionSet {
    cols: usize,
    parts: Vec<Partition>,
}

impl Deref for PartitionSet {
    type Target = [Partition];

    fn deref(&self) -> &[Partition] {
        &self.parts
    }
}

impl PartitionSet {
    /// The whole array as one free partition.
    pub fn new(cols: usize) -> Self {
        PartitionSet { cols, parts: vec![Partition::free(PartId(0), 0, cols)] }
    }

    /// Sorts `parts` and fills uncovered columns with free partitions.
    pub fn from_partitions(cols: usize, mut parts: Vec<Partition>) -> Result<Self, ScheduleError> {
        parts.sort_by_key(|p| p.col_start);
        let mut next_id = parts.iter().map(|p| p.part_id.0 + 1).max().unwrap_or(0);
        let mut out = Vec::with_capacity(parts.len());
        let mut cursor = 0;
        for p in parts {
            if p.col_width == 0 || p.col_end() > cols {
                return Err(ScheduleError::BadPartition(format!("{} spans {}..{} of {cols} columns", p.part_id, p.col_start, p.col_end())));
            }
            if p.col_start < cursor {
                return Err(ScheduleError::BadPartition(format!("{} overlaps its left neighbour", p.part_id)));
            }
            if p.col_start > cursor {
                out.push(Partition::free(PartId(next_id), cursor, p.col_start - cursor));
                next_id += 1;
            }
            cursor = p.col_end();
            out.push(p);
        }
        if cursor < cols {
            out.push(Partition::free(PartId(next_id), cursor, cols - cursor));
        }
        Ok(PartitionSet { cols, parts: out })
    }

    /// `widths` equal partitions from column 0; leftover columns form one
    /// trailing free partition. Ids are allocated from `first_id`.
    pub fn split(cols: usize, widths: &[usize], first_id: u32) -> Self {
        let mut parts = Vec::with_capacity(widths.len() + 1);
        let mut start = 0;
        let mut id = first_id;
        for &w in widths {
            parts.push(Partition::free(PartId(id), start, w));
            id += 1;
            start += w;
        }
        if start < cols {
            parts.push(Partition::free(PartId(id), start, cols - start));
        }
        PartitionSet { cols, parts }
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, id: PartId) -> Option<&Partition> {
        self.parts.iter().find(|p| p.part_id == id)
    }

    pub fn free_regions(&self) -> Vec<Partition> {
        self.parts.iter().filter(|p| p.is_free()).cloned().collect()
    }

    pub fn busy_count(&self) -> usize {
        self.parts.iter().filter(|p| !p.is_free()).count()
    }

    pub fn all_free(&self) -> bool {
        self.parts.iter().all(Partition::is_free)
    }

    pub fn max_id(&self) -> u32 {
        self.parts.iter().map(|p| p.part_id.0).max().unwrap_or(0)
    }

    pub(crate) fn occupy(&mut self, id: PartId, layer: LayerRef) {
        let p = self.parts.iter_mut().find(|p| p.part_id == id).expect("occupy a known partition");
        debug_assert!(p.is_free());
        p.state = PartState::Busy;
        p.assignment = Some(layer);
    }

    pub(crate) fn release(&mut self, id: PartId) {
        let p = self.parts.iter_mut().find(|p| p.part_id == id).expect("release a known partition");
        p.state = PartState::Free;
        p.assignment = None;
    }

    /// No two adjacent partitions are both free.
    pub fn is_merged(&self) -> bool {
        self.parts.windows(2).all(|w| !(w[0].is_free() && w[1].is_free()))
    }
}

/// Coalesces every run of adjacent free partitions into one, keeping the
/// id of the leftmost. Busy partitions are untouched.
pub fn merge_free(parts: &PartitionSet) -> PartitionSet {
    let mut out: Vec<Partition> = Vec::with_capacity(parts.len());
    for p in parts.iter() {
        match out.last_mut() {
            Some(prev) if prev.is_free() && p.is_free() && prev.col_end() == p.col_start => {
                prev.col_width += p.col_width;
            }
            _ => out.push(p.clone()),
        }
    }
    PartitionSet { cols: parts.cols, parts: out }
}

/// Widths for splitting `array_cols` columns between `n_tasks` layers:
/// `floor(array_cols / n_tasks)` each; the remainder stays idle.
pub fn partition_calculation(n_tasks: usize, array_cols: usize) -> Result<Vec<usize>, ScheduleError> {
    if n_tasks == 0 || n_tasks > array_cols {
        return Err(ScheduleError::TooManyTasks { tasks: n_tasks, cols: array_cols });
    }
    Ok(vec![array_cols / n_tasks; n_tasks])
}

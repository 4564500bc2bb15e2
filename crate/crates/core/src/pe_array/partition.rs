// SPDX-License-Identifier: Apache-2.0

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::workload::LayerRef;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PartId(pub u32);

impl fmt::Display for PartId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartState {
    Free,
    Busy,
}

/// A contiguous range of full-height PE columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub part_id: PartId,
    pub col_start: usize,
    pub col_width: usize,
    pub state: PartState,
    pub assignment: Option<LayerRef>,
}

impl Partition {
    pub fn free(part_id: PartId, col_start: usize, col_width: usize) -> Self {
        Partition { part_id, col_start, col_width, state: PartState::Free, assignment: None }
    }

    pub fn col_end(&self) -> usize {
        self.col_start + self.col_width
    }

    pub fn is_free(&self) -> bool {
        self.state == PartState::Free
    }

    pub fn contains_col(&self, col: usize) -> bool {
        (self.col_start..self.col_end()).contains(&col)
    }
}

// SPDX-License-Identifier: Apache-2.0

use std::io::Write;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceKind {
    Load,
    Mac,
    Pass,
    Drain,
}

/// One PE-level event. `pe_x` is the row, `pe_y` the column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TraceEvent {
    pub cycle: u64,
    pub pe_x: usize,
    pub pe_y: usize,
    pub event: TraceKind,
}

pub fn write_trace_csv<W: Write>(events: &[TraceEvent], out: W) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    for e in events {
        wtr.serialize(e)?;
    }
    wtr.flush()?;
    Ok(())
}

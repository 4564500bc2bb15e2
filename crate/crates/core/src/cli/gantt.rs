// SPDX-License-Identifier: Apache-2.0

//! Static SVG timeline of a schedule: time runs left to right, array
//! columns top to bottom, one block per executed layer.

use std::collections::BTreeMap;
use std::fmt::Write;

use thiserror::Error;

use crate::scheduler::Trace;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GanttError {
    #[error("trace contains no executed layers")]
    EmptyTrace,
}

const PLOT_W: f64 = 960.0;
const PLOT_H: f64 = 480.0;
const LEFT: f64 = 64.0;
const TOP: f64 = 32.0;
const BOTTOM: f64 = 40.0;
const RIGHT: f64 = 24.0;
const TICKS: u64 = 5;

const PALETTE: [&str; 10] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub fn render_gantt(trace: &Trace) -> Result<String, GanttError> {
    if trace.layers.is_empty() || trace.makespan == 0 {
        return Err(GanttError::EmptyTrace);
    }
    let colors: BTreeMap<&str, &str> = {
        let mut ids: Vec<&str> = trace.layers.iter().map(|l| l.dnn_id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.into_iter().enumerate().map(|(i, id)| (id, PALETTE[i % PALETTE.len()])).collect()
    };
    let sx = PLOT_W / trace.makespan as f64;
    let sy = PLOT_H / trace.array_cols as f64;
    let width = LEFT + PLOT_W + RIGHT;
    let height = TOP + PLOT_H + BOTTOM;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{LEFT:.0}" y="20">{}x{} array, {} feed, makespan {} cycles</text>"#,
        trace.array_rows, trace.array_cols, trace.feed_model, trace.makespan
    );
    let _ = writeln!(
        s,
        r##"<rect x="{LEFT:.2}" y="{TOP:.2}" width="{PLOT_W:.2}" height="{PLOT_H:.2}" fill="#f4f4f4" stroke="#333"/>"##
    );
    for i in 0..=TICKS {
        let t = trace.makespan * i / TICKS;
        let x = LEFT + t as f64 * sx;
        let _ = writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#333"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{t}</text>"##,
            TOP + PLOT_H,
            TOP + PLOT_H + 4.0,
            TOP + PLOT_H + 16.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">cycle</text>"#,
        LEFT + PLOT_W / 2.0,
        TOP + PLOT_H + 32.0
    );
    for c in [0, trace.array_cols] {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">col {c}</text>"#,
            LEFT - 6.0,
            TOP + c as f64 * sy + 4.0
        );
    }
    for l in &trace.layers {
        let x = LEFT + l.start as f64 * sx;
        let y = TOP + l.col_start as f64 * sy;
        let w = (l.end - l.start) as f64 * sx;
        let h = l.col_width as f64 * sy;
        let label = escape(&format!("{}/{}", l.dnn_id, l.layer_index));
        let _ = writeln!(
            s,
            r##"<g><title>{label} cols {}..{} cycles {}..{}</title><rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="{}" stroke="#222" stroke-width="0.5"/><text x="{:.2}" y="{:.2}" text-anchor="middle" dominant-baseline="middle">{label}</text></g>"##,
            l.col_start,
            l.col_start + l.col_width,
            l.start,
            l.end,
            colors[l.dnn_id.as_str()],
            x + w / 2.0,
            y + h / 2.0
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

// SPDX-License-Identifier: Apache-2.0

// Helpers shared by the integration tests. Each test binary uses a subset.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use proptest::prelude::*;
use tenantsim::pe_array::{ArrayConfig, FeedModel, InputStream, WeightTile};
use tenantsim::scheduler::{EventKind, Mode, Trace};
use tenantsim::timing::layer_cycles;
use tenantsim::workload::{load_workload, DnnGraph, LayerRef, LayerShape, Workload};

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

pub fn fixture(name: &str) -> Workload {
    load_workload(data_path(name)).expect("fixture loads")
}

/// `out[m][t] = sum_k w[k][m] * x[k][t]`.
pub fn matmul(w: &[Vec<i64>], x: &[Vec<i64>]) -> Vec<Vec<i64>> {
    let (k, m, t) = (w.len(), w[0].len(), x[0].len());
    let mut out = vec![vec![0; t]; m];
    for (mi, row) in out.iter_mut().enumerate() {
        for (ti, o) in row.iter_mut().enumerate() {
            *o = (0..k).map(|ki| w[ki][mi] * x[ki][ti]).sum();
        }
    }
    out
}

/// Deterministic small integers, different for every `(salt, i, j)`.
pub fn filled(rows: usize, cols: usize, salt: i64) -> Vec<Vec<i64>> {
    (0..rows)
        .map(|i| (0..cols).map(|j| ((i as i64 * 7 + j as i64 * 13 + salt * 5) % 15) - 7).collect())
        .collect()
}

/// One tile of a GEMM cut for a `rows x width` partition.
pub struct Tile {
    pub k0: usize,
    pub m0: usize,
    pub weights: WeightTile<i64>,
    pub inputs: InputStream<i64>,
}

pub fn tiles(w: &[Vec<i64>], x: &[Vec<i64>], rows: usize, width: usize) -> Vec<Tile> {
    let (k, m, t) = (w.len(), w[0].len(), x[0].len());
    let mut out = Vec::new();
    for m0 in (0..m).step_by(width) {
        let c_f = width.min(m - m0);
        for k0 in (0..k).step_by(rows) {
            let r_f = rows.min(k - k0);
            let weights = WeightTile::from_rows((0..r_f).map(|x| w[k0 + x][m0..m0 + c_f].to_vec()).collect()).unwrap();
            let inputs = InputStream::new((0..t).map(|p| (0..r_f).map(|r| x[k0 + r][p]).collect()).collect()).unwrap();
            out.push(Tile { k0, m0, weights, inputs });
        }
    }
    out
}

pub fn arb_shape() -> impl Strategy<Value = LayerShape> {
    (1u64..=10, 1u64..=2, 1u64..=4, 1u64..=3, 1u64..=3, 0u64..=4, 0u64..=4)
        .prop_map(|(m, n, c, r, s, dh, dw)| LayerShape::conv(m, n, c, r, s, r + dh, s + dw))
}

fn arb_dnn(id: String) -> impl Strategy<Value = DnnGraph> {
    (prop::collection::vec(arb_shape(), 1..=4), prop::collection::vec(any::<bool>(), 6), 0u64..=150).prop_map(
        move |(layers, bits, arrival)| {
            let n = layers.len();
            let pairs = (0..n).flat_map(|j| (0..j).map(move |i| (i, j)));
            let edges = pairs.zip(bits).filter(|(_, b)| *b).map(|(e, _)| e).collect();
            DnnGraph { dnn_id: id.clone(), arrival_time: arrival, layers, edges, estimated_exec: None }
        },
    )
}

pub fn arb_workload() -> impl Strategy<Value = Workload> {
    (1usize..=4)
        .prop_flat_map(|n| (0..n).map(|i| arb_dnn(format!("d{i}"))).collect::<Vec<_>>())
        .prop_map(Workload::new)
}

pub fn arb_array() -> impl Strategy<Value = ArrayConfig> {
    (1usize..=8, 1usize..=12, prop_oneof![Just(FeedModel::Independent), Just(FeedModel::Interleaved)])
        .prop_map(|(r, c, f)| ArrayConfig::new(r, c, f))
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Verifies every scheduling invariant on a trace produced by the
/// analytical executor.
pub fn check_schedule(w: &Workload, cfg: &ArrayConfig, mode: Mode, t: &Trace) -> Result<(), String> {
    let cols = cfg.cols;
    let recs: BTreeMap<LayerRef, _> = t.layers.iter().map(|r| (r.layer(), r)).collect();
    check(recs.len() == w.layer_count() && t.layers.len() == w.layer_count(), || {
        format!("{} records for {} layers", t.layers.len(), w.layer_count())
    })?;

    for r in &t.layers {
        let l = r.layer();
        let shape = w.layer(&l).ok_or_else(|| format!("unknown layer {l}"))?;
        check(r.col_width >= 1 && r.col_start + r.col_width <= cols, || format!("{l} out of bounds"))?;
        check(r.end == r.start + r.cycles, || format!("{l} end != start + cycles"))?;
        let expect = layer_cycles(shape, cfg.rows as u64, r.col_width as u64, cfg.feed_model, r.n_active as u64, r.col_start as u64).total;
        check(r.cycles == expect, || format!("{l} took {} cycles, model says {expect}", r.cycles))?;
        let dnn = w.dnn(&r.dnn_id).unwrap();
        check(r.start >= dnn.arrival_time, || format!("{l} starts before its DNN arrives"))?;
        for p in dnn.predecessors(r.layer_index) {
            let pe = recs[&LayerRef::new(r.dnn_id.clone(), p)].end;
            check(pe <= r.start, || format!("{l} starts at {} before predecessor {p} ends at {pe}", r.start))?;
        }
    }

    // Column ranges of layers running at the same time never overlap.
    for (i, a) in t.layers.iter().enumerate() {
        for b in &t.layers[i + 1..] {
            let time_overlap = a.start < b.end && b.start < a.end;
            let col_overlap = a.col_start < b.col_start + b.col_width && b.col_start < a.col_start + a.col_width;
            check(!(time_overlap && col_overlap), || format!("{} and {} share columns", a.layer(), b.layer()))?;
        }
    }

    check(t.events.windows(2).all(|e| e[0].time <= e[1].time), || "events out of order".into())?;
    for e in &t.events {
        let busy: Vec<_> = e.partitions.iter().filter(|p| !p.is_free()).collect();
        for (i, a) in busy.iter().enumerate() {
            check(a.col_end() <= cols, || format!("busy partition past the edge at {}", e.time))?;
            for b in &busy[i + 1..] {
                check(a.col_end() <= b.col_start || b.col_end() <= a.col_start, || {
                    format!("busy partitions {} and {} overlap at {}", a.part_id, b.part_id, e.time)
                })?;
            }
        }
    }

    let waiting_at = |time: u64| -> Vec<LayerRef> {
        t.layers
            .iter()
            .filter(|r| {
                let dnn = w.dnn(&r.dnn_id).unwrap();
                dnn.arrival_time <= time
                    && r.start > time
                    && dnn.predecessors(r.layer_index).all(|p| recs[&LayerRef::new(r.dnn_id.clone(), p)].end <= time)
            })
            .map(|r| r.layer())
            .collect()
    };

    // State after all processing at each event time.
    let mut settled = Vec::new();
    for (i, e) in t.events.iter().enumerate() {
        if t.events.get(i + 1).is_none_or(|n| n.time != e.time) {
            settled.push(e);
        }
    }
    for e in settled {
        let parts = &e.partitions;
        for pair in parts.windows(2) {
            let adjacent = pair[0].col_end() == pair[1].col_start;
            check(!(adjacent && pair[0].is_free() && pair[1].is_free()), || {
                format!("adjacent free partitions left unmerged at {}", e.time)
            })?;
        }
        let waiting = waiting_at(e.time);
        let idle = match mode {
            Mode::Partitioned => parts.iter().any(|p| p.is_free()),
            Mode::Baseline => parts.iter().all(|p| p.is_free()),
        };
        check(!(idle && !waiting.is_empty()), || {
            format!("{:?} wait at {} while the array has room", waiting, e.time)
        })?;
    }

    if let Some(first) = t.layers.iter().min_by_key(|r| r.start) {
        let at_first: Vec<_> = t.layers.iter().filter(|r| r.start == first.start).collect();
        check(at_first.len() == 1 && first.col_start == 0 && first.col_width == cols, || {
            "first layer did not get the whole array".into()
        })?;
    }
    if mode == Mode::Baseline {
        let mut by_start: Vec<_> = t.layers.iter().collect();
        by_start.sort_by_key(|r| r.start);
        check(by_start.iter().all(|r| r.col_width == cols && r.n_active == 1), || "baseline used a partition".into())?;
        check(by_start.windows(2).all(|p| p[0].end <= p[1].start), || "baseline overlapped layers".into())?;
    }

    let makespan = t.layers.iter().map(|r| r.end).max().unwrap_or(0);
    check(t.makespan == makespan, || "makespan is not the last end".into())?;
    for d in &w.dnns {
        let done = t.layers.iter().filter(|r| r.dnn_id == d.dnn_id).map(|r| r.end).max();
        check(t.dnn_completion.get(&d.dnn_id).copied() == done, || format!("completion of {} wrong", d.dnn_id))?;
    }
    let ends = t.events.iter().filter(|e| e.kind == EventKind::LayerEnd).count();
    check(ends == t.layers.len(), || "missing layer_end events".into())?;
    Ok(())
}

// SPDX-License-Identifier: Apache-2.0

//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::panic::{self, AssertUnwindSafe};

use common::*;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use tenantsim::energy::{energy_of, ActivityClass, ActivityCounts, EnergyError, EnergyTable};
use tenantsim::engine::{compare, execute, execute_both, Fidelity, RunConfig};
use tenantsim::pe_array::{ArrayConfig, FeedModel, FoldJob, PartId, Partition, PeGrid};
use tenantsim::scheduler::{partition_calculation, run_schedule, EventKind, Mode, PartitionSet};
use tenantsim::timing::cycles_per_fold;
use tenantsim::workload::{DnnGraph, LayerShape, Workload};

/// Weights, inputs and partition of one GEMM.
type Gemm<'a> = (&'a [Vec<i64>], &'a [Vec<i64>], PartId);
type Criterion = (&'static str, fn() -> String);

const FEEDS: [FeedModel; 2] = [FeedModel::Independent, FeedModel::Interleaved];

fn runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(
        Config { cases, failure_persistence: None, ..Config::default() },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    )
}

/// Runs every tile of `a`, and of `b` if given, on its own partition. The
/// i-th tiles of both share one concurrent run. Returns the summed outputs
/// of each GEMM.
fn run_pair(
    grid: &mut PeGrid<i64>,
    width: usize,
    a: Gemm<'_>,
    b: Option<Gemm<'_>>,
) -> Vec<Vec<Vec<i64>>> {
    let rows = grid.config().rows;
    let gemms: Vec<_> = std::iter::once(a).chain(b).collect();
    let tiled: Vec<Vec<Tile>> = gemms.iter().map(|(w, x, _)| tiles(w, x, rows, width)).collect();
    let mut outs: Vec<Vec<Vec<i64>>> = gemms.iter().map(|(w, x, _)| vec![vec![0; x[0].len()]; w[0].len()]).collect();
    let rounds = tiled.iter().map(Vec::len).max().unwrap();
    for i in 0..rounds {
        let mut jobs = Vec::new();
        let mut owners = Vec::new();
        for (g, ts) in tiled.iter().enumerate() {
            if let Some(tile) = ts.get(i) {
                jobs.push(FoldJob { part: gemms[g].2, tile: &tile.weights, inputs: &tile.inputs });
                owners.push((g, tile.m0));
            }
        }
        let runs = grid.run_concurrent(&jobs).expect("concurrent fold runs");
        for (run, (g, m0)) in runs.into_iter().zip(owners) {
            for (y, col) in run.outputs.into_iter().enumerate() {
                for (p, v) in col.into_iter().enumerate() {
                    outs[g][m0 + y][p] += v;
                }
            }
        }
    }
    outs
}

fn functional_correctness() -> String {
    let mut gemms = 0;
    for feed in FEEDS {
        let cfg = ArrayConfig::new(8, 8, feed);
        let mut single = PeGrid::configure(cfg, &[Partition::free(PartId(0), 0, 8)]).unwrap();
        let mut split =
            PeGrid::configure(cfg, &[Partition::free(PartId(0), 0, 4), Partition::free(PartId(1), 4, 4)]).unwrap();
        for k in 1..=8 {
            for m in 1..=8 {
                for t in 1..=12 {
                    let (w, x) = (filled(k, m, 1), filled(k, t, 2));
                    let expect = matmul(&w, &x);
                    let got = run_pair(&mut single, 8, (&w, &x, PartId(0)), None);
                    assert_eq!(got[0], expect, "1 partition {feed} k={k} m={m} t={t}");

                    let (k2, m2, t2) = (9 - k, 9 - m, 13 - t);
                    let (w2, x2) = (filled(k2, m2, 3), filled(k2, t2, 4));
                    let got = run_pair(&mut split, 4, (&w, &x, PartId(0)), Some((&w2, &x2, PartId(1))));
                    assert_eq!(got[0], expect, "2 partitions {feed} k={k} m={m} t={t}");
                    assert_eq!(got[1], matmul(&w2, &x2), "2 partitions {feed} k={k2} m={m2} t={t2}");
                    gemms += 3;
                }
            }
        }
    }
    format!("{gemms} GEMMs bit-exact")
}

fn timing_exactness() -> String {
    let mut checked = 0;
    // (n_active, col_start) pairs for the interleaved model.
    let settings = [
        (FeedModel::Independent, 1, 0),
        (FeedModel::Interleaved, 1, 0),
        (FeedModel::Interleaved, 2, 3),
        (FeedModel::Interleaved, 4, 8),
    ];
    for (feed, n, start) in settings {
        let mut parts = Vec::new();
        if start > 0 {
            parts.push(Partition::free(PartId(0), 0, start));
        }
        parts.push(Partition::free(PartId(1), start, 8));
        let mut grid: PeGrid<i64> = PeGrid::configure(ArrayConfig::new(8, start + 8, feed), &parts).unwrap();
        for r in 1..=8 {
            for c in 1..=8 {
                for t in 1..=16 {
                    let tile = &tiles(&filled(r, c, 5), &filled(r, t, 6), 8, 8)[0];
                    let run = grid.run_fold_strided(PartId(1), &tile.weights, &tile.inputs, n).unwrap();
                    let model = cycles_per_fold(r as u64, c as u64, t as u64, feed, n as u64, start as u64);
                    assert_eq!(run.cycles, model, "{feed} n={n} start={start} r={r} c={c} t={t}");
                    checked += 1;
                }
            }
        }
    }
    format!("{checked} folds, measured == model")
}

fn partition_calculation_matches() -> String {
    let widths = partition_calculation(4, 128).unwrap();
    assert_eq!(widths, vec![32, 32, 32, 32]);
    assert_eq!(partition_calculation(1, 128).unwrap(), vec![128]);
    assert_eq!(partition_calculation(3, 128).unwrap(), vec![42, 42, 42]);
    let set = PartitionSet::split(128, &partition_calculation(3, 128).unwrap(), 0);
    assert_eq!(set.len(), 4);
    assert_eq!((set[3].col_start, set[3].col_width, set[3].is_free()), (126, 2, true));

    // Four ready layers after the first on a 128x128 array.
    let s = LayerShape::conv(8, 1, 4, 3, 3, 10, 10);
    let w = Workload::new(vec![
        DnnGraph::chain("a", 0, vec![s, s]),
        DnnGraph::chain("b", 0, vec![s]),
        DnnGraph::chain("c", 0, vec![s]),
        DnnGraph::chain("d", 0, vec![s]),
    ]);
    let cfg = ArrayConfig::new(128, 128, FeedModel::Independent);
    let t = run_schedule(&w, &cfg, Mode::Partitioned).unwrap();
    let second: Vec<_> = t.layers.iter().filter(|l| l.start == t.layers[0].end).collect();
    assert_eq!(second.len(), 4);
    let mut shapes: Vec<(usize, usize, usize)> = second.iter().map(|l| (t.array_rows, l.col_start, l.col_width)).collect();
    shapes.sort();
    assert_eq!(shapes, vec![(128, 0, 32), (128, 32, 32), (128, 64, 32), (128, 96, 32)]);
    "n=4 -> 4 x 128x32, n=1 -> 128, n=3 -> 42/42/42 + 2 idle".into()
}

fn scheduler_invariants() -> String {
    let mut r = runner(1000);
    r.run(&(arb_workload(), arb_array()), |(w, cfg)| {
        for mode in [Mode::Partitioned, Mode::Baseline] {
            let t = run_schedule(&w, &cfg, mode).unwrap();
            check_schedule(&w, &cfg, mode, &t).map_err(|e| TestCaseError::fail(format!("{mode}: {e}")))?;
            let again = run_schedule(&w, &cfg, mode).unwrap();
            prop_assert_eq!(t.to_json(), again.to_json(), "replay differs");
        }
        Ok(())
    })
    .unwrap_or_else(|e| panic!("{e}"));
    "1000 random workloads x 2 modes".into()
}

fn first_layer_rule() -> String {
    let mut r = runner(1000);
    r.run(&(arb_workload(), arb_array()), |(w, cfg)| {
        let t = run_schedule(&w, &cfg, Mode::Partitioned).unwrap();
        let first = t.events.iter().find(|e| e.kind == EventKind::LayerStart).unwrap();
        let rec = t.record(first.layer.as_ref().unwrap()).unwrap();
        prop_assert_eq!((rec.col_start, rec.col_width), (0, cfg.cols));
        prop_assert!(t.layers.iter().all(|l| l.start >= rec.start));
        Ok(())
    })
    .unwrap_or_else(|e| panic!("{e}"));
    for name in ["sample_workload.json", "overlap_workload.json"] {
        for n in [4, 8, 16, 128] {
            let t = run_schedule(&fixture(name), &ArrayConfig::new(n, n, FeedModel::Independent), Mode::Partitioned).unwrap();
            assert_eq!((t.layers[0].col_start, t.layers[0].col_width), (0, n), "{name} {n}x{n}");
        }
    }
    "1000 random + fixture traces".into()
}

fn cross_fidelity() -> String {
    let w = fixture("sample_workload.json");
    let mut runs = 0;
    for (rows, cols) in [(4, 4), (8, 8), (16, 16), (8, 16), (16, 8)] {
        for feed in FEEDS {
            for mode in [Mode::Partitioned, Mode::Baseline] {
                let cfg = RunConfig::new(ArrayConfig::new(rows, cols, feed), mode).with_seed(7);
                let a = execute(&cfg, &w).unwrap();
                let f = execute(&cfg.clone().with_fidelity(Fidelity::Functional), &w).unwrap();
                assert_eq!(a.trace.makespan, f.trace.makespan, "{rows}x{cols} {feed} {mode}");
                assert_eq!(a.trace.totals, f.trace.totals, "{rows}x{cols} {feed} {mode}");
                assert_eq!(a.trace, f.trace, "{rows}x{cols} {feed} {mode}");
                runs += 1;
            }
        }
    }
    format!("{runs} configurations identical")
}

// Golden values for the overlap fixture on an 8x8 array, independent feed,
// illustrative energy table.
const GOLDEN_BASELINE_MAKESPAN: u64 = 295;
const GOLDEN_PARTITIONED_MAKESPAN: u64 = 233;
const GOLDEN_BASELINE_ENERGY_MPJ: u128 = 259_464_800;
const GOLDEN_PARTITIONED_ENERGY_MPJ: u128 = 259_464_800;

fn directional_reproduction() -> String {
    let w = fixture("overlap_workload.json");
    let cfg = RunConfig::new(ArrayConfig::new(8, 8, FeedModel::Independent), Mode::Partitioned);
    let (b, p) = execute_both(&cfg, &w).unwrap();
    let r = compare(&b, &p).unwrap();

    // The two DNNs are ready together once the first layer finishes.
    let after_first = p.trace.layers.iter().filter(|l| l.start == p.trace.layers[0].end).count();
    assert!(after_first >= 2, "ready windows do not overlap");

    assert_eq!(r.baseline.makespan, GOLDEN_BASELINE_MAKESPAN);
    assert_eq!(r.partitioned.makespan, GOLDEN_PARTITIONED_MAKESPAN);
    assert_eq!(r.baseline.total_energy.0, GOLDEN_BASELINE_ENERGY_MPJ);
    assert_eq!(r.partitioned.total_energy.0, GOLDEN_PARTITIONED_ENERGY_MPJ);
    let golden_time = (GOLDEN_BASELINE_MAKESPAN - GOLDEN_PARTITIONED_MAKESPAN) as f64 / GOLDEN_BASELINE_MAKESPAN as f64;
    assert_eq!(r.time_improvement, golden_time);
    assert_eq!(r.energy_improvement, 0.0);

    assert!(
        r.partitioned.makespan < r.baseline.makespan,
        "partitioned makespan {} not below baseline {}",
        r.partitioned.makespan,
        r.baseline.makespan
    );
    assert!(
        r.partitioned.total_energy < r.baseline.total_energy,
        "partitioned energy {} not below baseline {} (time improvement {:.4})",
        r.partitioned.total_energy,
        r.baseline.total_energy,
        r.time_improvement
    );
    format!("time {:.4}, energy {:.4}", r.time_improvement, r.energy_improvement)
}

fn arb_counts() -> impl Strategy<Value = ActivityCounts> {
    prop::array::uniform9(0u64..=u32::MAX as u64).prop_map(|v| ActivityCounts {
        mac_ops: v[0],
        lr_writes: v[1],
        pass_hops: v[2],
        feed_reads: v[3],
        load_reads: v[4],
        drain_writes: v[5],
        drain_rmw: v[6],
        dram_reads: v[7],
        dram_writes: v[8],
    })
}

fn energy_additivity() -> String {
    let mut r = runner(1000);
    let units = prop::array::uniform9(0u64..=1_000_000);
    r.run(&(arb_counts(), arb_counts(), units), |(a, b, units)| {
        let table = ActivityClass::ALL
            .into_iter()
            .zip(units)
            .fold(EnergyTable::default(), |t, (c, u)| t.with(c, u as f64 / 1000.0));
        let ea = energy_of(&a, &table).unwrap();
        let eb = energy_of(&b, &table).unwrap();
        let sum = energy_of(&(a + b), &table).unwrap();
        prop_assert_eq!(sum, ea + eb);
        let manual: u128 = ActivityClass::ALL
            .into_iter()
            .zip(units)
            .map(|(c, u)| (a.get(c) as u128 + b.get(c) as u128) * u as u128)
            .sum();
        prop_assert_eq!(sum.0, manual);
        Ok(())
    })
    .unwrap_or_else(|e| panic!("{e}"));

    for missing in ActivityClass::ALL {
        let table = ActivityClass::ALL
            .into_iter()
            .filter(|&c| c != missing)
            .fold(EnergyTable::default(), |t, c| t.with(c, 1.0));
        assert!(matches!(table.check_complete(), Err(EnergyError::MissingTableEntry(c)) if c == missing));
        assert!(matches!(energy_of(&ActivityCounts::default(), &table), Err(EnergyError::MissingTableEntry(c)) if c == missing));
    }
    "1000 cases additive; 9 incomplete tables rejected".into()
}

fn degenerate_equivalence() -> String {
    let mut r = runner(300);
    r.run(&(arb_shape(), arb_array(), 0u64..50), |(s, cfg, arrival)| {
        let w = Workload::new(vec![DnnGraph::chain("solo", arrival, vec![s])]);
        let p = run_schedule(&w, &cfg, Mode::Partitioned).unwrap();
        let b = run_schedule(&w, &cfg, Mode::Baseline).unwrap();
        prop_assert_eq!(&p, &b);
        prop_assert_eq!(p.to_json(), b.to_json());
        Ok(())
    })
    .unwrap_or_else(|e| panic!("{e}"));
    let w = Workload::new(vec![DnnGraph::chain("solo", 0, vec![LayerShape::conv(5, 1, 3, 2, 2, 5, 5)])]);
    for feed in FEEDS {
        for fidelity in [Fidelity::Analytical, Fidelity::Functional] {
            let cfg = RunConfig::new(ArrayConfig::new(4, 4, feed), Mode::Partitioned).with_fidelity(fidelity);
            let (b, p) = execute_both(&cfg, &w).unwrap();
            assert_eq!(b.trace, p.trace);
            assert_eq!(b.energy, p.energy);
        }
    }
    "300 random single-layer workloads + both fidelities".into()
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("functional correctness against the matmul oracle", functional_correctness),
        ("fold timing model equals measured cycles", timing_exactness),
        ("partition calculation widths", partition_calculation_matches),
        ("scheduler invariants over random workloads", scheduler_invariants),
        ("first layer runs on the full array", first_layer_rule),
        ("analytical and functional traces identical", cross_fidelity),
        ("partitioned beats baseline in time and energy", directional_reproduction),
        ("energy additivity and table completeness", energy_additivity),
        ("single-layer workload identical in both modes", degenerate_equivalence),
    ];
    let quiet = panic::take_hook();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match panic::catch_unwind(AssertUnwindSafe(f)) {
            Ok(detail) => println!("[{}] PASS  {name}: {detail}", i + 1),
            Err(e) => {
                failed += 1;
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                println!("[{}] FAIL  {name}: {}", i + 1, msg.replace('\n', " "));
            }
        }
    }
    panic::set_hook(quiet);
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

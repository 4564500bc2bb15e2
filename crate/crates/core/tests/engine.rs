// SPDX-License-Identifier: Apache-2.0

mod common;

use common::*;
use proptest::prelude::*;
use tenantsim::engine::{compare, execute, execute_both, EngineError, Fidelity, RunConfig};
use tenantsim::pe_array::{ArrayConfig, FeedModel};
use tenantsim::scheduler::Mode;
use tenantsim::timing::layer_cycles;
use tenantsim::workload::{DnnGraph, LayerShape, Workload};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fidelities_agree_on_random_workloads(w in arb_workload(), cfg in arb_array(), seed in any::<u64>()) {
        for mode in [Mode::Partitioned, Mode::Baseline] {
            let run = RunConfig::new(cfg, mode).with_seed(seed);
            let a = execute(&run, &w).unwrap();
            let f = execute(&run.clone().with_fidelity(Fidelity::Functional), &w).unwrap();
            prop_assert_eq!(&a.trace, &f.trace);
            prop_assert_eq!(&a.energy, &f.energy);
        }
    }
}

#[test]
fn runs_are_byte_identical() {
    let w = fixture("sample_workload.json");
    let run = RunConfig::new(ArrayConfig::new(8, 8, FeedModel::Interleaved), Mode::Partitioned)
        .with_fidelity(Fidelity::Functional)
        .with_seed(42);
    let a = execute(&run, &w).unwrap();
    let b = execute(&run, &w).unwrap();
    assert_eq!(a.trace.to_json(), b.trace.to_json());
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn baseline_single_layer_takes_full_array_cycles() {
    let s = LayerShape::conv(6, 2, 3, 3, 3, 7, 7);
    let w = Workload::new(vec![DnnGraph::chain("a", 5, vec![s])]);
    let out = execute(&RunConfig::new(ArrayConfig::new(8, 4, FeedModel::Independent), Mode::Baseline), &w).unwrap();
    assert_eq!(out.trace.makespan, 5 + layer_cycles(&s, 8, 4, FeedModel::Independent, 1, 0).total);
}

#[test]
fn overlap_fixture_improves_time() {
    let w = fixture("overlap_workload.json");
    for n in [8, 16] {
        let run = RunConfig::new(ArrayConfig::new(n, n, FeedModel::Independent), Mode::Partitioned);
        let (b, p) = execute_both(&run, &w).unwrap();
        let r = compare(&b, &p).unwrap();
        assert!(r.time_improvement > 0.0, "{n}x{n}");
        assert!(r.partitioned.utilization > r.baseline.utilization);
        assert!(r.per_dnn.iter().all(|d| d.saved >= 0));
        // Partitioning never reduces any activity count.
        assert!(r.energy_improvement <= 0.0);
    }
}

#[test]
fn energy_report_sums_up() {
    let w = fixture("sample_workload.json");
    let out = execute(&RunConfig::new(ArrayConfig::new(8, 8, FeedModel::Independent), Mode::Partitioned), &w).unwrap();
    let layers: u128 = out.energy.per_layer.iter().map(|l| l.energy.0).sum();
    let dnns: u128 = out.energy.per_dnn.values().map(|e| e.0).sum();
    assert_eq!(layers, out.energy.total.0);
    assert_eq!(dnns, out.energy.total.0);
    assert_eq!(out.energy.per_dnn.len(), 3);

    let mut csv = Vec::new();
    out.energy.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert_eq!(text.lines().count(), 1 + 9 + 3 + 1);
    assert!(text.lines().last().unwrap().starts_with("total,,,"));
}

#[test]
fn missing_energy_table_file() {
    let w = fixture("overlap_workload.json");
    let mut run = RunConfig::new(ArrayConfig::new(4, 4, FeedModel::Independent), Mode::Baseline);
    run.energy_table = Some("/nonexistent/table.json".into());
    assert!(matches!(execute(&run, &w), Err(EngineError::Energy(_))));
}

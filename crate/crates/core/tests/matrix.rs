use proptest::prelude::*;
use tme_core::bench::{
    full_matrix, run_matrix, run_matrix_sequential, run_workload, write_results, BenchConfig,
    Variant, Workload, WorkloadSpec,
};

#[test]
fn parallel_and_sequential_runs_agree() {
    let specs = full_matrix(16, 3);
    let cfg = BenchConfig::default();
    let par: Vec<_> = run_matrix(&specs, &cfg)
        .into_iter()
        .map(Result::unwrap)
        .collect();
    let seq: Vec<_> = run_matrix_sequential(&specs, &cfg)
        .into_iter()
        .map(Result::unwrap)
        .collect();
    assert_eq!(par, seq);
    assert!(par.iter().all(|r| r.correct));
}

#[test]
fn variants_agree_on_output() {
    let cfg = BenchConfig::default();
    for w in Workload::ALL {
        let run = |variant| {
            run_workload(
                &WorkloadSpec {
                    name: w,
                    variant,
                    scale: 16,
                    seed: 1,
                },
                &cfg,
            )
            .unwrap()
        };
        let (b, t) = (run(Variant::Baseline), run(Variant::Tme));
        assert_eq!(b.checksum, t.checksum, "{}", w.name());
    }
}

#[test]
fn result_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let specs = full_matrix(16, 0);
    let results: Vec<_> = run_matrix(&specs, &BenchConfig::default())
        .into_iter()
        .map(Result::unwrap)
        .collect();
    let paths = write_results(dir.path(), &results).unwrap();
    assert_eq!(paths.len(), 15);
    let first: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&paths[0]).unwrap()).unwrap();
    assert_eq!(first["checksum"], results[0].checksum.as_str());
    assert_eq!(
        first["dram_transactions"].as_u64(),
        Some(results[0].metrics.dram_transactions)
    );
    let mut rows = csv::Reader::from_path(dir.path().join("summary.csv")).unwrap();
    assert_eq!(rows.records().count(), 14);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn seed_changes_data_not_correctness(seed in 0u64..1000) {
        let spec = WorkloadSpec { name: Workload::Unfold, variant: Variant::Tme, scale: 16, seed };
        let a = run_workload(&spec, &BenchConfig::default()).unwrap();
        let b = run_workload(&spec, &BenchConfig::default()).unwrap();
        prop_assert!(a.correct);
        prop_assert_eq!(a, b);
    }
}

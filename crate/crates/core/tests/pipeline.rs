use std::fs;

use cptc::datagen::{gen_three_mode, CsvOptions};
use cptc::harness::{run_experiment, DatasetSpec, ExperimentConfig, MethodKind, MethodSpec, StatePredictorSpec};

fn csv_config(path: &std::path::Path, options: CsvOptions, sp: StatePredictorSpec) -> ExperimentConfig {
    ExperimentConfig {
        dataset: DatasetSpec::Csv { path: path.into(), options },
        methods: vec![MethodSpec::of(MethodKind::Cptc), MethodSpec::of(MethodKind::OnlineCp)],
        state_predictor: sp,
        seeds: vec![5],
        ..Default::default()
    }
}

#[test]
fn csv_round_trip_matches_generated_run() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("three.csv");
    gen_three_mode(1500, 5).unwrap().write_csv(&path).unwrap();

    let from_csv = run_experiment(&csv_config(&path, CsvOptions::default(), StatePredictorSpec::MarkovFilter)).unwrap();
    let generated = run_experiment(&ExperimentConfig {
        dataset: DatasetSpec::SwitchingAr(cptc::datagen::SwitchingArConfig::three_mode(1500, 0)),
        ..csv_config(&path, CsvOptions::default(), StatePredictorSpec::MarkovFilter)
    })
    .unwrap();
    assert_eq!(from_csv.runs[0].n_states, 3);
    for (a, b) in from_csv.runs.iter().zip(&generated.runs) {
        assert_eq!(a.records.len(), 300);
        // shortest-repr float text round-trips exactly
        let ty = |r: &cptc::harness::RunOutput| -> Vec<(i64, u64)> {
            r.records.iter().map(|s| (s.t, s.y_true.to_bits())).collect()
        };
        assert_eq!(ty(a), ty(b));
    }
    // labels come back renumbered by first appearance, a relabeling of the original
    let series = gen_three_mode(1500, 5).unwrap();
    let loaded = cptc::datagen::load_csv(&path, &CsvOptions::default()).unwrap();
    let (orig, back) = (series.z.unwrap(), loaded.z.unwrap());
    let mut map = [usize::MAX; 3];
    for (o, b) in orig.iter().zip(&back) {
        if map[*o] == usize::MAX {
            map[*o] = *b;
        }
        assert_eq!(map[*o], *b);
    }
}

#[test]
fn unlabeled_csv_runs_as_one_state() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("plain.csv");
    let mut text = String::from("t,y\n");
    for t in 0..600 {
        text.push_str(&format!("{t},{}\n", ((t * 37) % 19) as f64 / 7.0));
    }
    fs::write(&path, text).unwrap();
    let options = CsvOptions { z_column: None, ..Default::default() };
    let out = run_experiment(&csv_config(&path, options, StatePredictorSpec::Oracle)).unwrap();
    assert_eq!(out.runs[0].n_states, 1);
    assert_eq!(out.runs[0].records.len(), 120);
    assert!(out.runs.iter().all(|r| r.records.iter().all(|s| s.sampled_state == 0)));
}

#[test]
fn missing_csv_is_an_io_error() {
    let cfg = csv_config(std::path::Path::new("/nonexistent/x.csv"), CsvOptions::default(), StatePredictorSpec::Oracle);
    assert!(run_experiment(&cfg).unwrap_err().is_io());
}

use pigo_core::harness::{
    emit, read_jsonl, run_suite, run_trial, write_report_csv, AlgorithmConfig, CsvRow, EpsilonChoice, OutputFormat,
    SuiteConfig,
};
use pigo_core::{Mode, ObjectiveKind, ObjectiveSpec, OptimizerState, Stream};

fn small_suite() -> SuiteConfig {
    SuiteConfig {
        algorithms: vec![
            AlgorithmConfig::pbil_lambda(),
            AlgorithmConfig::pbil_eps(),
            AlgorithmConfig::cga(EpsilonChoice::InvSqrtN),
        ],
        objectives: vec![ObjectiveKind::OneMax, ObjectiveKind::LeadingOnes],
        ns: vec![10, 20],
        trials: 3,
        base_seed: 17,
        budget: 1_000_000,
        workers: 2,
    }
}

#[test]
fn suite_records_survive_jsonl_round_trip() {
    let out = run_suite(&small_suite()).unwrap();
    assert_eq!(out.records.len(), 3 * 2 * 2 * 3);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("records.jsonl");
    emit(&out.records, OutputFormat::Jsonl, &path).unwrap();
    assert_eq!(read_jsonl(&path).unwrap(), out.records);
}

#[test]
fn suite_csv_matches_records() {
    let out = run_suite(&small_suite()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("records.csv");
    emit(&out.records, OutputFormat::Csv, &path).unwrap();
    let rows: Vec<CsvRow> = csv::Reader::from_path(&path).unwrap().deserialize().map(|r| r.unwrap()).collect();
    let expected: Vec<CsvRow> = out.records.iter().map(CsvRow::from).collect();
    assert_eq!(rows, expected);

    let report_path = dir.path().join("report.csv");
    write_report_csv(&out.report, &report_path).unwrap();
    let report = std::fs::read_to_string(&report_path).unwrap();
    assert_eq!(report.lines().count(), 1 + out.report.aggregates.len());
}

#[test]
fn every_trial_can_be_rerun_alone() {
    let config = small_suite();
    let out = run_suite(&config).unwrap();
    for r in out.records.iter().step_by(5) {
        let alg = config.algorithms.iter().find(|a| a.label() == r.algorithm).unwrap();
        let obj = config.objectives.iter().find(|o| o.label() == r.objective).unwrap();
        let again = run_trial(alg, obj, r.n, config.budget, r.seed).unwrap();
        assert_eq!(&again, r);
    }
}

#[test]
fn worker_count_does_not_change_results() {
    let mut config = small_suite();
    config.workers = 1;
    let one = run_suite(&config).unwrap();
    config.workers = 3;
    let three = run_suite(&config).unwrap();
    assert_eq!(one.records, three.records);
    assert_eq!(one.report, three.report);
}

fn step(opt: &mut OptimizerState, f: &mut ObjectiveSpec, root: &Stream, t: u64) {
    let xs = opt.ask(&root.child(t));
    let mut rng = root.child(u64::MAX - t).rng();
    let values: Vec<f64> = xs.iter().map(|x| f.evaluate(x, &mut rng).unwrap()).collect();
    opt.tell(&xs, &values).unwrap();
}

#[test]
fn json_snapshot_resumes_identically() {
    for mode in [Mode::AdaptLambda, Mode::AdaptEpsilon] {
        let n = 40;
        let root = Stream::new(23);
        let mut f = ObjectiveSpec::new(ObjectiveKind::NoisyOneMax { sigma: 0.3 }, n).unwrap();
        let mut straight = OptimizerState::new_parameterless(n, mode, 1.5).unwrap();
        for t in 0..60 {
            step(&mut straight, &mut f, &root, t);
        }

        let mut g = ObjectiveSpec::new(ObjectiveKind::NoisyOneMax { sigma: 0.3 }, n).unwrap();
        let mut first = OptimizerState::new_parameterless(n, mode, 1.5).unwrap();
        for t in 0..25 {
            step(&mut first, &mut g, &root, t);
        }
        let mut resumed = OptimizerState::from_json(&first.to_json().unwrap()).unwrap();
        for t in 25..60 {
            step(&mut resumed, &mut g, &root, t);
        }
        assert_eq!(resumed.to_json().unwrap(), straight.to_json().unwrap(), "{mode:?}");
        assert_eq!(resumed.f_calls(), straight.f_calls());
    }
}

#[test]
fn corrupted_snapshot_is_rejected() {
    let opt = OptimizerState::new_parameterless(10, Mode::AdaptLambda, 1.5).unwrap();
    let json = opt.to_json().unwrap();
    assert!(OptimizerState::from_json(&json[..json.len() / 2]).is_err());
}

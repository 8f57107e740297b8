use slbqp::format::{read_problem, write_problem, HessianFormat, ProblemFile};
use slbqp::gen::{generate, GenParams};
use slbqp::svmio::{build_dual, read_libsvm};
use slbqp::{solve, Mode, SolverConfig, Status};

#[test]
fn problem_files_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let inst = generate(&GenParams { n: 30, ncond: 3.0, seed: 4, ..GenParams::default() }).unwrap();
    let x: Vec<f64> = (0..30).map(|i| (i as f64 * 0.37).sin()).collect();
    let f = inst.problem.objective(&x).unwrap();
    for format in [HessianFormat::Dense, HessianFormat::Coo, HessianFormat::Reflections] {
        let path = dir.path().join(format!("{format:?}.json"));
        write_problem(&path, &ProblemFile::from_problem(&inst.problem, format, Some(&inst.hessian)).unwrap()).unwrap();
        let p = read_problem(&path).unwrap();
        assert!((p.objective(&x).unwrap() - f).abs() <= 1e-12 * (1.0 + f.abs()), "{format:?}");
        let r = solve(&p, &inst.x0, &SolverConfig::default()).unwrap();
        assert_eq!(r.status, Status::Converged);
    }
}

#[test]
fn missing_problem_file_is_an_io_error() {
    assert!(matches!(read_problem("/nonexistent/p.json"), Err(slbqp::Error::Io(_))));
}

#[test]
fn bundled_svm_data() {
    let ds = read_libsvm(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/synthetic200.libsvm")).unwrap();
    assert_eq!(ds.n_samples(), 200);
    assert_eq!(ds.n_features, 12);
    assert_eq!(ds.labels.iter().filter(|y| **y > 0.0).count(), 100);
    let p = build_dual(&ds, 10.0).unwrap();
    let r = solve(&p, &vec![0.0; 200], &SolverConfig::new(Mode::Pabbmin)).unwrap();
    assert!(r.x_final.iter().all(|a| (0.0..=10.0).contains(a)));
}

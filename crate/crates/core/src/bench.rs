//! Batch runs over generated suites and Dolan-Moré performance profiles.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::driver::{solve, Mode, SolverConfig};
use crate::error::{Error, Result};
use crate::gen::SuiteProblem;
use crate::model::Problem;

pub const CSV_HEADER: &str =
    "method,problem_id,seed,nax0,status,f_final,kkt_measure,matvecs,projections,outer_iters,time_ms";

/// One solve of one problem from one starting point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: String,
    pub problem_id: String,
    pub seed: u64,
    pub nax0: f64,
    /// A solver status name, or `error` when the solver refused the problem.
    pub status: String,
    pub f_final: f64,
    pub kkt_measure: f64,
    pub matvecs: u64,
    pub projections: u64,
    pub outer_iters: usize,
    pub time_ms: f64,
}

impl RunRecord {
    /// Converged or proved unbounded.
    pub fn succeeded(&self) -> bool {
        self.status == "converged" || self.status == "unbounded"
    }
}

#[derive(Clone, Debug)]
pub struct BenchTask {
    pub mode: Mode,
    pub problem_id: String,
    pub seed: u64,
    pub nax0: f64,
    pub problem: Arc<Problem>,
    pub x0: Arc<Vec<f64>>,
}

/// One task per (mode, problem, starting point).
pub fn tasks_from_suite(problems: &[SuiteProblem], modes: &[Mode]) -> Vec<BenchTask> {
    let mut tasks = Vec::new();
    for sp in problems {
        let problem = Arc::new(sp.instance.problem.clone());
        for (nax0, x0) in &sp.starts {
            let x0 = Arc::new(x0.clone());
            for &mode in modes {
                tasks.push(BenchTask {
                    mode,
                    problem_id: sp.id.clone(),
                    seed: sp.instance.params.seed,
                    nax0: *nax0,
                    problem: problem.clone(),
                    x0: x0.clone(),
                });
            }
        }
    }
    tasks
}

/// Solves one task; only the solve itself is timed.
pub fn run_task(task: &BenchTask, cfg: &SolverConfig) -> RunRecord {
    let cfg = SolverConfig { mode: task.mode, ..cfg.clone() };
    let start = Instant::now();
    let result = solve(&task.problem, &task.x0, &cfg);
    let time_ms = start.elapsed().as_secs_f64() * 1e3;
    let base = RunRecord {
        method: task.mode.name().to_string(),
        problem_id: task.problem_id.clone(),
        seed: task.seed,
        nax0: task.nax0,
        status: "error".into(),
        f_final: f64::NAN,
        kkt_measure: f64::NAN,
        matvecs: 0,
        projections: 0,
        outer_iters: 0,
        time_ms,
    };
    match result {
        Ok(r) => RunRecord {
            status: r.status.name().into(),
            f_final: r.f_final,
            kkt_measure: r.kkt_measure,
            matvecs: r.counters.matvecs,
            projections: r.counters.projections,
            outer_iters: r.outer_iterations,
            ..base
        },
        Err(e) => {
            log::debug!("{} on {} (nax0 {}): {e}", task.mode, task.problem_id, task.nax0);
            base
        }
    }
}

fn sort_records(records: &mut [RunRecord]) {
    records.sort_by(|a, b| {
        a.method
            .cmp(&b.method)
            .then_with(|| a.problem_id.cmp(&b.problem_id))
            .then_with(|| a.nax0.total_cmp(&b.nax0))
    });
}

/// `configure(mode)` gives the solver settings for each task.
pub fn run_batch_sequential(tasks: &[BenchTask], configure: &(dyn Fn(Mode) -> SolverConfig + Sync)) -> Vec<RunRecord> {
    let mut records: Vec<RunRecord> = tasks.iter().map(|t| run_task(t, &configure(t.mode))).collect();
    sort_records(&mut records);
    records
}

#[cfg(feature = "parallel")]
pub fn run_batch_parallel(tasks: &[BenchTask], configure: &(dyn Fn(Mode) -> SolverConfig + Sync)) -> Vec<RunRecord> {
    use rayon::prelude::*;
    let mut records: Vec<RunRecord> = tasks.par_iter().map(|t| run_task(t, &configure(t.mode))).collect();
    sort_records(&mut records);
    records
}

/// Parallel across tasks when built with the `parallel` feature.
pub fn run_batch(tasks: &[BenchTask], configure: &(dyn Fn(Mode) -> SolverConfig + Sync)) -> Vec<RunRecord> {
    #[cfg(feature = "parallel")]
    {
        run_batch_parallel(tasks, configure)
    }
    #[cfg(not(feature = "parallel"))]
    {
        run_batch_sequential(tasks, configure)
    }
}

pub fn write_csv<W: Write>(out: W, records: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<RunRecord>> {
    let mut rd = csv::Reader::from_reader(input);
    rd.deserialize().map(|r| r.map_err(csv_err)).collect()
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        other => Error::InvalidDataset(format!("csv: {other:?}")),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Time,
    Matvecs,
    Projections,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Time, Metric::Matvecs, Metric::Projections];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Time => "time",
            Metric::Matvecs => "matvecs",
            Metric::Projections => "projections",
        }
    }

    pub fn value(self, r: &RunRecord) -> f64 {
        match self {
            Metric::Time => r.time_ms,
            Metric::Matvecs => r.matvecs as f64,
            Metric::Projections => r.projections as f64,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProfileTable {
    pub metric: Metric,
    pub methods: Vec<String>,
    /// Ratio to the best method, per method and problem (`inf` on failure).
    pub ratios: Vec<Vec<f64>>,
    pub chi: Vec<f64>,
    /// `values[m][k]` is the fraction of problems method `m` solves within
    /// a factor `chi[k]` of the best.
    pub values: Vec<Vec<f64>>,
    /// Problems no method solved, left out of the profile.
    pub excluded: usize,
}

impl ProfileTable {
    /// Profile value of `method` at an arbitrary `chi`.
    pub fn value(&self, method: &str, chi: f64) -> Option<f64> {
        let m = self.methods.iter().position(|x| x == method)?;
        let r = &self.ratios[m];
        Some(r.iter().filter(|v| **v <= chi).count() as f64 / r.len() as f64)
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::from("chi");
        for m in &self.methods {
            s.push('\t');
            s.push_str(m);
        }
        s.push('\n');
        for (k, chi) in self.chi.iter().enumerate() {
            s.push_str(&format!("{chi}"));
            for v in &self.values {
                s.push_str(&format!("\t{}", v[k]));
            }
            s.push('\n');
        }
        s
    }
}

/// Number of points on the geometric `chi` grid.
pub const CHI_POINTS: usize = 64;

/// Performance profile of `metric`. A problem is a `(problem_id, nax0)`
/// pair; failed or missing runs count as infinitely worse than the best.
pub fn performance_profile(records: &[RunRecord], metric: Metric) -> Result<ProfileTable> {
    let methods: Vec<String> = records.iter().map(|r| r.method.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    let mut problems: BTreeMap<(String, u64), Vec<f64>> = BTreeMap::new();
    for r in records {
        let key = (r.problem_id.clone(), r.nax0.to_bits());
        let row = problems.entry(key).or_insert_with(|| vec![f64::INFINITY; methods.len()]);
        let m = methods.iter().position(|x| *x == r.method).expect("method collected above");
        let v = metric.value(r);
        if r.succeeded() && v.is_finite() {
            row[m] = row[m].min(v);
        }
    }
    if methods.is_empty() || problems.is_empty() {
        return Err(Error::InvalidProfile(format!("{} methods, {} problems", methods.len(), problems.len())));
    }
    let mut ratios = vec![Vec::new(); methods.len()];
    let mut excluded = 0;
    for row in problems.values() {
        let best = row.iter().copied().fold(f64::INFINITY, f64::min);
        if !best.is_finite() {
            excluded += 1;
            continue;
        }
        for (m, v) in row.iter().enumerate() {
            let ratio = if *v == best {
                1.0
            } else if best > 0.0 {
                v / best
            } else {
                f64::INFINITY
            };
            ratios[m].push(ratio);
        }
    }
    if excluded > 0 {
        log::warn!("{excluded} problem(s) unsolved by every method left out of the {} profile", metric.name());
    }
    if ratios[0].is_empty() {
        return Err(Error::InvalidProfile("every problem failed for every method".into()));
    }
    let max_ratio = ratios.iter().flatten().copied().filter(|v| v.is_finite()).fold(1.0, f64::max);
    let chi: Vec<f64> = if max_ratio > 1.0 {
        let step = max_ratio.ln() / (CHI_POINTS - 1) as f64;
        let mut g: Vec<f64> = (0..CHI_POINTS).map(|k| (k as f64 * step).exp()).collect();
        g[CHI_POINTS - 1] = max_ratio;
        g
    } else {
        vec![1.0]
    };
    let values = ratios
        .iter()
        .map(|r| chi.iter().map(|c| r.iter().filter(|v| **v <= *c).count() as f64 / r.len() as f64).collect())
        .collect();
    Ok(ProfileTable { metric, methods, ratios, chi, values, excluded })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(method: &str, problem: &str, matvecs: u64, status: &str) -> RunRecord {
        RunRecord {
            method: method.into(),
            problem_id: problem.into(),
            seed: 0,
            nax0: 0.0,
            status: status.into(),
            f_final: 0.0,
            kkt_measure: 0.0,
            matvecs,
            projections: 0,
            outer_iters: 0,
            time_ms: 1.0,
        }
    }

    #[test]
    fn hand_computed_profile() {
        let recs = vec![
            rec("A", "p1", 1, "converged"),
            rec("B", "p1", 2, "converged"),
            rec("A", "p2", 3, "converged"),
            rec("B", "p2", 3, "converged"),
        ];
        let t = performance_profile(&recs, Metric::Matvecs).unwrap();
        assert_eq!(t.value("A", 1.0), Some(1.0));
        assert_eq!(t.value("B", 1.0), Some(0.5));
        assert_eq!(t.value("B", 2.0), Some(1.0));
        assert_eq!(*t.chi.last().unwrap(), 2.0);
        assert!(t.to_tsv().starts_with("chi\tA\tB\n"));
    }

    #[test]
    fn single_method_is_always_best() {
        let recs = vec![rec("A", "p1", 5, "converged"), rec("A", "p2", 7, "converged")];
        let t = performance_profile(&recs, Metric::Matvecs).unwrap();
        assert_eq!(t.chi, vec![1.0]);
        assert_eq!(t.values, vec![vec![1.0]]);
    }

    #[test]
    fn failures_cap_the_profile() {
        let recs = vec![
            rec("A", "p1", 1, "converged"),
            rec("B", "p1", 2, "limit_matvecs"),
            rec("A", "p2", 4, "converged"),
            rec("B", "p2", 2, "converged"),
            rec("A", "p3", 4, "stalled"),
            rec("B", "p3", 2, "error"),
        ];
        let t = performance_profile(&recs, Metric::Matvecs).unwrap();
        assert_eq!(t.excluded, 1);
        assert_eq!(t.value("B", 1e300), Some(0.5));
        for v in &t.values {
            assert!(v.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(performance_profile(&[], Metric::Time).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let recs = vec![rec("A", "p1", 1, "converged")];
        let mut buf = Vec::new();
        write_csv(&mut buf, &recs).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
        assert_eq!(read_csv(buf.as_slice()).unwrap(), recs);
    }
}

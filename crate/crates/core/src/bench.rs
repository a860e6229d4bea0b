//! Error metrics, timing and the method comparison harness.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fd::{self, export::save_field_csv, field_errors, FieldSelection, FieldSolution, Grid, SolverSettings};
use crate::hypernet::{infer_field, nearest_neighbor_weights, HypernetModel, WeightBank};
use crate::model::{ModelConfig, OperatingCondition, TemperatureScale};
use crate::pinn::{evaluate_field_with, train_base_pinn, TrainConfig};
use crate::Scalar;

/// `(MAE, max)` of the absolute nodal differences, in °C.
pub fn mae_max_error<T: Scalar>(
    a: &FieldSolution<T>,
    b: &FieldSolution<T>,
    scale: &TemperatureScale,
    sel: FieldSelection,
) -> Result<(f64, f64)> {
    let (mae, max) = field_errors(a, b, sel)?;
    Ok((scale.delta_to_celsius(mae.f64()), scale.delta_to_celsius(max.f64())))
}

/// Wall time of one call, in seconds.
pub fn time_operation<R, F: FnOnce() -> R>(f: F) -> (R, f64) {
    let t = Instant::now();
    let r = f();
    (r, t.elapsed().as_secs_f64())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub median: f64,
    /// Population variance of the samples.
    pub variance: f64,
    pub samples: Vec<f64>,
}

/// Median of `runs` timed calls; the last result is returned alongside.
pub fn time_median<R, F: FnMut() -> R>(runs: usize, mut f: F) -> (R, Timing) {
    let runs = runs.max(1);
    let mut samples = Vec::with_capacity(runs);
    let mut last = None;
    for _ in 0..runs {
        let (r, s) = time_operation(&mut f);
        samples.push(s);
        last = Some(r);
    }
    let mut sorted = samples.clone();
    sorted.sort_by(f64::total_cmp);
    let median = if runs % 2 == 1 {
        sorted[runs / 2]
    } else {
        0.5 * (sorted[runs / 2 - 1] + sorted[runs / 2])
    };
    let mean = samples.iter().sum::<f64>() / runs as f64;
    let variance = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / runs as f64;
    (
        last.expect("at least one run"),
        Timing {
            median,
            variance,
            samples,
        },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "hypernet")]
    Hypernet,
    #[serde(rename = "base-pinn")]
    BasePinn,
    #[serde(rename = "nearest-neighbor")]
    NearestNeighbor,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Hypernet, Method::BasePinn, Method::NearestNeighbor];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Hypernet => "hypernet",
            Method::BasePinn => "base-pinn",
            Method::NearestNeighbor => "nearest-neighbor",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::validation(format!("unknown method {s:?} (hypernet, base-pinn, nearest-neighbor)")))
    }
}

/// Equality compares metrics bitwise, so failed rows (NaN metrics) equal their repeats.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskRow {
    /// 1-based position in the task list.
    pub task: usize,
    pub condition: OperatingCondition,
    pub method: Method,
    pub mae_c: f64,
    pub max_c: f64,
    pub mae_nd: f64,
    pub max_nd: f64,
    /// `None` on success, otherwise the failure message (metrics are NaN).
    pub error: Option<String>,
}

impl PartialEq for TaskRow {
    fn eq(&self, o: &Self) -> bool {
        let bits = |r: &Self| [r.mae_c, r.max_c, r.mae_nd, r.max_nd].map(f64::to_bits);
        (self.task, self.condition, self.method, &self.error) == (o.task, o.condition, o.method, &o.error)
            && bits(self) == bits(o)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    /// Method name or `fd-oracle`.
    pub operation: String,
    pub median_s: f64,
    pub variance_s2: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub rows: Vec<TaskRow>,
    pub timings: Vec<TimingRow>,
    pub design_name: String,
    pub config_hash: String,
}

impl BenchmarkReport {
    /// Mean MAE and mean max error (°C) per method over successful rows.
    pub fn aggregates(&self) -> BTreeMap<Method, (f64, f64)> {
        let mut acc: BTreeMap<Method, (f64, f64, usize)> = BTreeMap::new();
        for r in self.rows.iter().filter(|r| r.error.is_none()) {
            let e = acc.entry(r.method).or_insert((0.0, 0.0, 0));
            e.0 += r.mae_c;
            e.1 += r.max_c;
            e.2 += 1;
        }
        acc.into_iter().map(|(m, (a, b, n))| (m, (a / n as f64, b / n as f64))).collect()
    }

    pub fn mean_mae_nd(&self, m: Method) -> Option<f64> {
        let v: Vec<f64> = self.rows.iter().filter(|r| r.method == m && r.error.is_none()).map(|r| r.mae_nd).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }

    /// Same report without wall-clock data.
    pub fn without_timings(&self) -> Self {
        Self {
            timings: Vec::new(),
            ..self.clone()
        }
    }

    pub fn summary(&self) -> String {
        let mut s = format!("design: {}\nconfig_hash: {}\n", self.design_name, self.config_hash);
        for (m, (mae, max)) in self.aggregates() {
            s += &format!("mean {}: MAE {mae:.4} °C, max {max:.4} °C\n", m.name());
        }
        for t in &self.timings {
            s += &format!("time {}: {:.6} s (variance {:.3e})\n", t.operation, t.median_s, t.variance_s2);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub grid: Grid,
    pub solver: SolverSettings,
    pub methods: Vec<Method>,
    pub selection: FieldSelection,
    /// Settings for freshly trained base PINNs.
    pub train: TrainConfig,
    pub seed: u64,
    /// Runs per timing median.
    pub timing_runs: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            grid: Grid::square(60).expect("valid grid"),
            solver: SolverSettings::default(),
            methods: vec![Method::Hypernet, Method::NearestNeighbor],
            selection: FieldSelection::FluidAndMetal,
            train: TrainConfig::default(),
            seed: 0,
            timing_runs: 3,
        }
    }
}

fn predicted_field<T: Scalar>(
    method: Method,
    model: &HypernetModel<T>,
    bank: &WeightBank<T>,
    c: &OperatingCondition,
    bc: &BenchConfig,
    mc: &ModelConfig,
    task: usize,
) -> Result<FieldSolution<T>> {
    match method {
        Method::Hypernet => infer_field(model, c, bc.grid, mc),
        Method::NearestNeighbor => evaluate_field_with(&nearest_neighbor_weights(bank, c)?, bc.grid, mc.nondim(c)?),
        Method::BasePinn => {
            let p = mc.nondim(c)?;
            let (t, _) = train_base_pinn(&p, *c, &bc.train, bc.seed.wrapping_add(task as u64), None)?;
            evaluate_field_with(&t, bc.grid, p)
        }
    }
}

/// Compares each method against the FD oracle on every task.
///
/// Per-task failures become failed rows; the run continues. Timing rows hold
/// the median over the tasks of each operation's wall time.
pub fn run_benchmark<T: Scalar>(
    model: &HypernetModel<T>,
    bank: &WeightBank<T>,
    tasks: &[OperatingCondition],
    bc: &BenchConfig,
    mc: &ModelConfig,
) -> BenchmarkReport {
    let mut rows = Vec::new();
    let mut times: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (i, c) in tasks.iter().enumerate() {
        let oracle = mc.nondim::<T>(c).and_then(|p| {
            let (f, t) = time_operation(|| fd::solve(&p, bc.grid, &bc.solver));
            times.entry("fd-oracle".into()).or_default().push(t);
            f
        });
        for &m in &bc.methods {
            let res = oracle.as_ref().map_err(|e| e.to_string()).and_then(|o| {
                let (f, t) = time_operation(|| predicted_field(m, model, bank, c, bc, mc, i));
                times.entry(m.name().into()).or_default().push(t);
                let (mae, max) = f.and_then(|f| field_errors(&f, o, bc.selection)).map_err(|e| e.to_string())?;
                Ok((mae.f64(), max.f64()))
            });
            rows.push(match res {
                Ok((mae, max)) => TaskRow {
                    task: i + 1,
                    condition: *c,
                    method: m,
                    mae_c: mc.scale.delta_to_celsius(mae),
                    max_c: mc.scale.delta_to_celsius(max),
                    mae_nd: mae,
                    max_nd: max,
                    error: None,
                },
                Err(e) => TaskRow {
                    task: i + 1,
                    condition: *c,
                    method: m,
                    mae_c: f64::NAN,
                    max_c: f64::NAN,
                    mae_nd: f64::NAN,
                    max_nd: f64::NAN,
                    error: Some(e),
                },
            });
        }
    }
    let timings = times
        .into_iter()
        .map(|(op, mut v)| {
            v.sort_by(f64::total_cmp);
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            TimingRow {
                operation: op,
                median_s: v[v.len() / 2],
                variance_s2: v.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n,
            }
        })
        .collect();
    BenchmarkReport {
        rows,
        timings,
        design_name: bank.design_name.clone(),
        config_hash: crate::config_hash(&(bc, mc, &bank.metadata.config_hash)),
    }
}

pub const REPORT_HEADER: [&str; 12] = [
    "task", "Tin1", "Tin2", "Tin3", "m1", "method", "mae_C", "max_C", "mae_nd", "max_nd", "status", "message",
];
pub const TIMING_HEADER: [&str; 3] = ["operation", "median_s", "variance_s2"];

/// Paths of the companion timing CSV and summary text of a report CSV.
pub fn companion_paths(path: &Path) -> (PathBuf, PathBuf) {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "report".into());
    let dir = path.parent().unwrap_or(Path::new(""));
    (dir.join(format!("{stem}_timings.csv")), dir.join(format!("{stem}_summary.txt")))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Format(format!("{}: {e}", path.display()))
}

/// Writes the task rows to `path`, timings to `<stem>_timings.csv` and the summary to `<stem>_summary.txt`.
pub fn export_report(r: &BenchmarkReport, path: &Path) -> Result<()> {
    let (tpath, spath) = companion_paths(path);
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(REPORT_HEADER).map_err(csv_err(path))?;
    for row in &r.rows {
        let c = row.condition.to_array();
        let mut rec: Vec<String> = vec![row.task.to_string()];
        rec.extend(c.iter().map(|v| v.to_string()));
        rec.push(row.method.name().into());
        rec.extend([row.mae_c, row.max_c, row.mae_nd, row.max_nd].iter().map(|v| v.to_string()));
        rec.push(if row.error.is_some() { "failed" } else { "ok" }.into());
        rec.push(row.error.clone().unwrap_or_default());
        w.write_record(&rec).map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_path(&tpath).map_err(csv_err(&tpath))?;
    w.write_record(TIMING_HEADER).map_err(csv_err(&tpath))?;
    for t in &r.timings {
        w.write_record([t.operation.clone(), t.median_s.to_string(), t.variance_s2.to_string()])
            .map_err(csv_err(&tpath))?;
    }
    w.flush().map_err(|e| Error::io(&tpath, e))?;
    std::fs::write(&spath, r.summary()).map_err(|e| Error::io(&spath, e))
}

fn parse_f64(s: &str, path: &Path, line: usize) -> Result<f64> {
    s.parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("not a number: {s:?}"),
    })
}

/// Reads a report written by [`export_report`].
pub fn import_report(path: &Path) -> Result<BenchmarkReport> {
    let (tpath, spath) = companion_paths(path);
    let mut rows = Vec::new();
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err(path))?;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let line = i + 2;
        let f = |k: usize| parse_f64(&rec[k], path, line);
        rows.push(TaskRow {
            task: rec[0].parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line,
                message: "bad task index".into(),
            })?,
            condition: OperatingCondition::new(f(1)?, f(2)?, f(3)?, f(4)?),
            method: Method::parse(&rec[5])?,
            mae_c: f(6)?,
            max_c: f(7)?,
            mae_nd: f(8)?,
            max_nd: f(9)?,
            error: (&rec[10] == "failed").then(|| rec[11].to_string()),
        });
    }
    let mut timings = Vec::new();
    let mut rdr = csv::Reader::from_path(&tpath).map_err(csv_err(&tpath))?;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err(&tpath))?;
        timings.push(TimingRow {
            operation: rec[0].to_string(),
            median_s: parse_f64(&rec[1], &tpath, i + 2)?,
            variance_s2: parse_f64(&rec[2], &tpath, i + 2)?,
        });
    }
    let summary = std::fs::read_to_string(&spath).map_err(|e| Error::io(&spath, e))?;
    let field = |key: &str| {
        summary
            .lines()
            .find_map(|l| l.strip_prefix(key))
            .map(|v| v.trim().to_string())
            .unwrap_or_default()
    };
    Ok(BenchmarkReport {
        rows,
        timings,
        design_name: field("design:"),
        config_hash: field("config_hash:"),
    })
}

/// Writes `oracle_field.csv`, `base_pinn_field.csv` and `hypernet_field.csv` into `dir`.
pub fn export_field_comparison<T: Scalar>(
    dir: &Path,
    scale: &TemperatureScale,
    oracle: &FieldSolution<T>,
    base_pinn: &FieldSolution<T>,
    hypernet: &FieldSolution<T>,
) -> Result<[PathBuf; 3]> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths = [
        dir.join("oracle_field.csv"),
        dir.join("base_pinn_field.csv"),
        dir.join("hypernet_field.csv"),
    ];
    for (f, p) in [oracle, base_pinn, hypernet].into_iter().zip(&paths) {
        save_field_csv(f, scale, p)?;
    }
    Ok(paths)
}

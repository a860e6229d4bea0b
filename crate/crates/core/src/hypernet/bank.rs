//! The λ → Θ corpus and its on-disk form.
//!
//! A bank is a directory holding `manifest.json` and one `entry_NNNN.json`
//! record per trained PINN. Values are written as JSON numbers in shortest
//! round-trip form, so reloading is bit-exact.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::doe::TaskDesign;
use crate::error::{Error, Result};
use crate::hash::config_hash;
use crate::model::{normalize_unchecked, ModelConfig, OperatingCondition, PhysicalRanges};
use crate::nn::MlpSpec;
use crate::pinn::{train_base_pinn, TaskPinn, TrainConfig, TrainReport};
use crate::Scalar;

pub const BANK_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankMetadata {
    pub base_seed: u64,
    /// Training seed of each entry.
    pub seeds: Vec<u64>,
    /// Entry indices in training order.
    pub chain_order: Vec<usize>,
    /// Entry each one was warm-started from.
    pub warm_from: Vec<Option<usize>>,
    pub train_config: TrainConfig,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightBank<T> {
    pub entries: Vec<TaskPinn<T>>,
    pub ranges: PhysicalRanges,
    pub design_name: String,
    pub metadata: BankMetadata,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    design_name: String,
    ranges: PhysicalRanges,
    spec: MlpSpec,
    value_width: usize,
    metadata: BankMetadata,
    entries: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct Record<T> {
    format_version: u32,
    #[serde(flatten)]
    pinn: TaskPinn<T>,
}

impl<T: Scalar> WeightBank<T> {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn conditions(&self) -> Vec<OperatingCondition> {
        self.entries.iter().map(|e| e.condition).collect()
    }

    pub fn validate(&self) -> Result<()> {
        for e in &self.entries {
            e.validate()?;
        }
        let pts: Vec<[f64; 4]> = self.entries.iter().map(|e| e.condition.to_array()).collect();
        for i in 0..pts.len() {
            if pts[i + 1..].contains(&pts[i]) {
                return Err(Error::validation(format!("duplicate bank condition {:?}", pts[i])));
            }
        }
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let names: Vec<String> = (0..self.entries.len()).map(|i| format!("entry_{i:04}.json")).collect();
        for (e, name) in self.entries.iter().zip(&names) {
            let rec = Record {
                format_version: BANK_FORMAT_VERSION,
                pinn: e.clone(),
            };
            write_json(&dir.join(name), &rec)?;
        }
        let manifest = Manifest {
            format_version: BANK_FORMAT_VERSION,
            design_name: self.design_name.clone(),
            ranges: self.ranges,
            spec: MlpSpec::base_pinn(),
            value_width: std::mem::size_of::<T>(),
            metadata: self.metadata.clone(),
            entries: names,
        };
        write_json(&dir.join(MANIFEST_FILE), &manifest)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: Manifest = read_json(&dir.join(MANIFEST_FILE))?;
        if manifest.format_version != BANK_FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported bank format version {}", manifest.format_version)));
        }
        if manifest.spec != MlpSpec::base_pinn() {
            return Err(Error::Format(format!("bank network spec {:?} is not supported", manifest.spec.layer_sizes)));
        }
        let mut entries = Vec::with_capacity(manifest.entries.len());
        for name in &manifest.entries {
            let rec: Record<T> = read_json(&dir.join(name))?;
            if rec.format_version != BANK_FORMAT_VERSION {
                return Err(Error::Format(format!("{name}: unsupported record version {}", rec.format_version)));
            }
            rec.pinn.validate()?;
            entries.push(rec.pinn);
        }
        let bank = Self {
            entries,
            ranges: manifest.ranges,
            design_name: manifest.design_name,
            metadata: manifest.metadata,
        };
        bank.validate()?;
        Ok(bank)
    }
}

pub(crate) fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer(std::io::BufWriter::new(f), value).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub(crate) fn read_json<S: serde::de::DeserializeOwned>(path: &Path) -> Result<S> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(std::io::BufReader::new(f)).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn dist2(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Training order and warm-start parents.
///
/// Starts at the task nearest the design centroid, then repeatedly takes the
/// untrained task closest to any trained one and warm-starts it from that
/// trained neighbour. Ties go to the lowest index.
pub fn curriculum(tasks: &[OperatingCondition], ranges: &PhysicalRanges) -> (Vec<usize>, Vec<Option<usize>>) {
    let n = tasks.len();
    if n == 0 {
        return (Vec::new(), Vec::new());
    }
    let pts: Vec<[f64; 4]> = tasks.iter().map(|t| normalize_unchecked(t, ranges)).collect();
    let mut centroid = [0.0; 4];
    for p in &pts {
        for (c, v) in centroid.iter_mut().zip(p) {
            *c += v / n as f64;
        }
    }
    let first = argmin((0..n).map(|i| dist2(&pts[i], &centroid)));
    let mut order = vec![first];
    let mut parent = vec![None; n];
    let mut trained = vec![false; n];
    trained[first] = true;
    // Nearest trained neighbour of every untrained task.
    let mut best: Vec<(f64, usize)> = (0..n).map(|i| (dist2(&pts[i], &pts[first]), first)).collect();
    while order.len() < n {
        let next = argmin((0..n).map(|i| if trained[i] { f64::INFINITY } else { best[i].0 }));
        trained[next] = true;
        parent[next] = Some(best[next].1);
        order.push(next);
        for i in 0..n {
            let d = dist2(&pts[i], &pts[next]);
            if !trained[i] && (d < best[i].0 || (d == best[i].0 && next < best[i].1)) {
                best[i] = (d, next);
            }
        }
    }
    (order, parent)
}

fn argmin<I: Iterator<Item = f64>>(it: I) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (i, v) in it.enumerate() {
        if v < best.0 {
            best = (v, i);
        }
    }
    best.1
}

/// A bank build in which some tasks failed to train.
#[derive(Debug)]
pub struct BankFailure<T> {
    /// Successfully trained entries, in design order.
    pub partial: WeightBank<T>,
    pub failed: Vec<(OperatingCondition, String)>,
}

impl<T> std::fmt::Display for BankFailure<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} bank task(s) failed:", self.failed.len())?;
        for (c, e) in &self.failed {
            write!(f, " {:?}: {e};", c.to_array())?;
        }
        Ok(())
    }
}

impl<T> From<BankFailure<T>> for Error {
    fn from(b: BankFailure<T>) -> Self {
        Error::Training(b.to_string())
    }
}

type TaskOutcome<T> = std::result::Result<(TaskPinn<T>, TrainReport), String>;

#[derive(Serialize)]
struct BankKey<'a> {
    design: &'a [OperatingCondition],
    model: &'a ModelConfig,
    train: &'a TrainConfig,
    base_seed: u64,
    width: usize,
}

/// Trains one PINN per design task along the warm-start curriculum.
///
/// Tasks whose parents are trained run concurrently on `workers` threads; the
/// result does not depend on `workers`. Task `i` trains with seed `base_seed + i`.
pub fn build_bank<T: Scalar>(
    design: &TaskDesign,
    model: &ModelConfig,
    train: &TrainConfig,
    base_seed: u64,
    workers: usize,
) -> std::result::Result<(WeightBank<T>, Vec<Option<TrainReport>>), BankFailure<T>> {
    let n = design.tasks.len();
    let (order, parent) = curriculum(&design.tasks, &model.ranges);
    let seeds: Vec<u64> = (0..n as u64).map(|i| base_seed.wrapping_add(i)).collect();
    let metadata = BankMetadata {
        base_seed,
        seeds: seeds.clone(),
        chain_order: order.clone(),
        warm_from: parent.clone(),
        train_config: *train,
        config_hash: config_hash(&BankKey {
            design: &design.tasks,
            model,
            train,
            base_seed,
            width: std::mem::size_of::<T>(),
        }),
    };
    let empty = |entries| WeightBank {
        entries,
        ranges: model.ranges,
        design_name: design.name.clone(),
        metadata: metadata.clone(),
    };
    let pre = model.validate().and_then(|_| train.validate()).and_then(|_| {
        design.tasks.iter().try_for_each(|t| model.ranges.check_envelope(t, 0.0))
    });
    if let Err(e) = pre {
        return Err(BankFailure {
            partial: empty(Vec::new()),
            failed: design.tasks.iter().map(|t| (*t, e.to_string())).collect(),
        });
    }

    // Depth in the warm-start tree; each depth level depends only on shallower ones.
    let mut depth = vec![0usize; n];
    for &i in &order {
        if let Some(p) = parent[i] {
            depth[i] = depth[p] + 1;
        }
    }
    let max_depth = depth.iter().copied().max().unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| BankFailure {
            partial: empty(Vec::new()),
            failed: vec![(model.ranges.center(), e.to_string())],
        })?;
    let mut results: Vec<Option<TaskOutcome<T>>> = (0..n).map(|_| None).collect();
    for d in 0..=max_depth {
        let level: Vec<usize> = order.iter().copied().filter(|i| depth[*i] == d).collect();
        let done = &results;
        let out: Vec<(usize, TaskOutcome<T>)> = pool.install(|| {
            use rayon::prelude::*;
            level
                .par_iter()
                .map(|&i| {
                    let warm = parent[i].and_then(|p| done[p].as_ref().and_then(|r| r.as_ref().ok()).map(|r| &r.0));
                    let res = model
                        .nondim::<T>(&design.tasks[i])
                        .map_err(|e| e.to_string())
                        .and_then(|p| {
                            train_base_pinn(&p, design.tasks[i], train, seeds[i], warm).map_err(|f| f.to_string())
                        });
                    if let Ok((_, r)) = &res {
                        log::info!(
                            "bank task {i} ({:?}) steps {} loss {:.3e}",
                            design.tasks[i].to_array(),
                            r.steps,
                            r.final_losses.total
                        );
                    }
                    (i, res)
                })
                .collect()
        });
        for (i, r) in out {
            results[i] = Some(r);
        }
    }
    let mut entries = Vec::with_capacity(n);
    let mut reports = Vec::with_capacity(n);
    let mut failed = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r.expect("every task visited") {
            Ok((t, rep)) => {
                entries.push(t);
                reports.push(Some(rep));
            }
            Err(e) => {
                failed.push((design.tasks[i], e));
                reports.push(None);
            }
        }
    }
    let bank = empty(entries);
    if failed.is_empty() {
        Ok((bank, reports))
    } else {
        Err(BankFailure { partial: bank, failed })
    }
}

/// Path of entry `i` inside a bank directory.
pub fn entry_path(dir: &Path, i: usize) -> PathBuf {
    dir.join(format!("entry_{i:04}.json"))
}

//! Hypernetwork mapping an operating condition to the weights of a
//! three-sector PINN, plus the nearest-neighbour baseline.
//!
//! The trunk (4 → 256 → 256, tanh) and the three linear 354-wide heads are
//! stored as one MLP `(4, 256, 256, 1062)`: the output layer's rows are the
//! three heads stacked in sector order, which is the same function.
//!
//! Model file layout (little-endian): magic `HPNM`, `u32` format version (1),
//! `u64` byte length `L`, `L` bytes of UTF-8 JSON metadata (ranges, envelope
//! margin, seed, standardization mean/std), then the weights in the binary
//! weight-file format of [`crate::nn::io`].

mod bank;

use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::fd::{field_errors, FieldSelection, FieldSolution, Grid};
use crate::model::{normalize_unchecked, ModelConfig, OperatingCondition, PhysicalRanges, SECTORS};
use crate::nn::{self, init_weights, AdamConfig, AdamState, JetBatch, JetMode, MlpSpec, WeightVector};
use crate::pinn::{evaluate_field_with, TaskPinn};
use crate::Scalar;

pub use bank::{
    build_bank, curriculum, entry_path, BankFailure, BankMetadata, WeightBank, BANK_FORMAT_VERSION, MANIFEST_FILE,
};

pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const STD_FLOOR: f64 = 1e-8;
const MODEL_MAGIC: &[u8; 4] = b"HPNM";

pub fn base_param_count() -> usize {
    MlpSpec::base_pinn().param_count()
}

/// Trunk plus stacked heads as a single network.
pub fn hypernet_spec() -> MlpSpec {
    MlpSpec::new(vec![4, 256, 256, SECTORS * base_param_count()]).expect("valid spec")
}

/// Per-coordinate mean and floored standard deviation of the bank weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl StandardizationStats {
    pub fn fit<T: Scalar>(rows: &[Vec<T>]) -> Result<Self> {
        let first = rows.first().ok_or_else(|| Error::validation("no weight vectors to standardize"))?;
        let d = first.len();
        for r in rows {
            check_len(d, r.len(), "standardized weight vector")?;
        }
        let n = rows.len() as f64;
        let mean: Vec<f64> = (0..d).map(|k| rows.iter().map(|r| r[k].f64()).sum::<f64>() / n).collect();
        let std = (0..d)
            .map(|k| {
                let var = rows.iter().map(|r| (r[k].f64() - mean[k]).powi(2)).sum::<f64>() / n;
                var.sqrt().max(STD_FLOOR)
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn standardize<T: Scalar>(&self, w: &[T]) -> Vec<T> {
        w.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| T::of((v.f64() - m) / s))
            .collect()
    }

    pub fn destandardize<T: Scalar>(&self, y: &[T]) -> Vec<T> {
        y.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| T::of(m + s * v.f64()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypernetModel<T> {
    pub weights: WeightVector<T>,
    pub stats: StandardizationStats,
    pub ranges: PhysicalRanges,
    /// Relative excursion beyond `ranges` that is still accepted (with a warning).
    pub envelope_margin: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HypernetConfig {
    pub lr: f64,
    pub max_epochs: usize,
    /// Epochs between validation checks.
    pub val_every: usize,
    /// Checks without an improvement larger than `min_delta` before stopping.
    pub patience: usize,
    pub min_delta: f64,
    pub seed: u64,
    /// Start the heads at zero instead of Glorot values.
    pub zero_heads: bool,
    /// Return the best monitored checkpoint instead of the weights at the stop.
    pub restore_best: bool,
}

impl Default for HypernetConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            max_epochs: 20_000,
            val_every: 50,
            patience: 40,
            min_delta: 1e-6,
            seed: 0,
            zero_heads: false,
            restore_best: false,
        }
    }
}

impl HypernetConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::validation("hypernetwork lr must be positive"));
        }
        if self.val_every == 0 || self.patience == 0 || self.max_epochs == 0 {
            return Err(Error::validation("max_epochs, val_every and patience must be positive"));
        }
        if !(self.min_delta >= 0.0) {
            return Err(Error::validation("min_delta must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypernetReport {
    pub epochs: usize,
    pub best_epoch: usize,
    /// `(epoch, standardized training MSE)`, sampled at every check.
    pub train_loss: Vec<(usize, f64)>,
    /// `(epoch, monitored loss)`: validation field MAE, or training MSE without validation tasks.
    pub monitored: Vec<(usize, f64)>,
    pub early_stopped: bool,
    pub seconds: f64,
}

/// A validation task with its reference field.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationTask<T> {
    pub condition: OperatingCondition,
    pub oracle: FieldSolution<T>,
}

impl<T: Scalar> HypernetModel<T> {
    pub fn spec() -> MlpSpec {
        hypernet_spec()
    }

    /// Fresh network for `stats`; heads start at zero when asked.
    pub fn init(stats: StandardizationStats, ranges: PhysicalRanges, seed: u64, zero_heads: bool) -> Result<Self> {
        let spec = Self::spec();
        check_len(spec.n_outputs(), stats.len(), "standardization statistics")?;
        let mut weights: WeightVector<T> = init_weights(&spec, seed);
        if zero_heads {
            let (wo, _) = spec.offsets()[spec.n_layers() - 1];
            weights.0[wo..].iter_mut().for_each(|v| *v = T::zero());
        }
        Ok(Self {
            weights,
            stats,
            ranges,
            envelope_margin: crate::model::DEFAULT_ENVELOPE_MARGIN,
            seed,
        })
    }

    fn inputs(&self, conds: &[OperatingCondition]) -> Array2<T> {
        Array2::from_shape_fn((conds.len(), 4), |(i, k)| T::of(normalize_unchecked(&conds[i], &self.ranges)[k]))
    }

    /// Standardized head outputs, one row per condition.
    pub fn raw_outputs(&self, conds: &[OperatingCondition]) -> Result<Array2<T>> {
        nn::forward_batch(&Self::spec(), &self.weights.0, self.inputs(conds).view())
    }

    fn check_condition(&self, c: &OperatingCondition) -> Result<()> {
        c.validate()?;
        self.ranges.check_envelope(c, self.envelope_margin)?;
        if !self.ranges.contains(c) {
            log::warn!(
                "condition {:?} lies outside the training ranges (excursion {:.3}); extrapolating",
                c.to_array(),
                self.ranges.excursion(c)
            );
        }
        Ok(())
    }

    fn assemble(&self, c: OperatingCondition, row: &[T]) -> Result<TaskPinn<T>> {
        TaskPinn::from_flat(c, &self.stats.destandardize(row), self.seed)
    }

    pub fn predict_many(&self, conds: &[OperatingCondition]) -> Result<Vec<TaskPinn<T>>> {
        for c in conds {
            self.check_condition(c)?;
        }
        let out = self.raw_outputs(conds)?;
        conds
            .iter()
            .zip(out.rows())
            .map(|(c, row)| self.assemble(*c, row.as_slice().expect("standard layout")))
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write(std::io::BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(std::io::BufReader::new(f))
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        let meta = ModelMeta {
            ranges: self.ranges,
            envelope_margin: self.envelope_margin,
            seed: self.seed,
            stats: self.stats.clone(),
        };
        let json = serde_json::to_vec(&meta).map_err(|e| Error::Format(e.to_string()))?;
        let io = |e| Error::io("<model>", e);
        out.write_all(MODEL_MAGIC).map_err(io)?;
        out.write_all(&MODEL_FORMAT_VERSION.to_le_bytes()).map_err(io)?;
        out.write_all(&(json.len() as u64).to_le_bytes()).map_err(io)?;
        out.write_all(&json).map_err(io)?;
        nn::io::write_binary(&Self::spec(), &self.weights, &mut out)?;
        out.flush().map_err(io)
    }

    pub fn read<R: Read>(mut input: R) -> Result<Self> {
        let io = |e| Error::io("<model>", e);
        let mut head = [0u8; 16];
        input.read_exact(&mut head).map_err(io)?;
        if &head[..4] != MODEL_MAGIC {
            return Err(Error::Format("not a hypernetwork model file".into()));
        }
        let version = u32::from_le_bytes(head[4..8].try_into().expect("4 bytes"));
        if version != MODEL_FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported model format version {version}")));
        }
        let len = u64::from_le_bytes(head[8..16].try_into().expect("8 bytes")) as usize;
        let mut json = vec![0u8; len];
        input.read_exact(&mut json).map_err(io)?;
        let meta: ModelMeta = serde_json::from_slice(&json).map_err(|e| Error::Format(e.to_string()))?;
        let (spec, weights) = nn::io::read_binary::<T, _>(input)?;
        if spec != Self::spec() {
            return Err(Error::Format(format!("model network spec {:?} is not supported", spec.layer_sizes)));
        }
        check_len(spec.n_outputs(), meta.stats.len(), "standardization statistics")?;
        Ok(Self {
            weights,
            stats: meta.stats,
            ranges: meta.ranges,
            envelope_margin: meta.envelope_margin,
            seed: meta.seed,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct ModelMeta {
    ranges: PhysicalRanges,
    envelope_margin: f64,
    seed: u64,
    stats: StandardizationStats,
}

/// Θ = N(λ): one forward pass, destandardized into a three-sector PINN.
///
/// Conditions outside the ranges log a warning; beyond the envelope margin they are rejected.
pub fn predict_weights<T: Scalar>(m: &HypernetModel<T>, c: &OperatingCondition) -> Result<TaskPinn<T>> {
    Ok(m.predict_many(std::slice::from_ref(c))?.remove(0))
}

/// Predicted weights evaluated on `g`; no optimisation happens on this path.
pub fn infer_field<T: Scalar>(
    m: &HypernetModel<T>,
    c: &OperatingCondition,
    g: Grid,
    cfg: &ModelConfig,
) -> Result<FieldSolution<T>> {
    let t = predict_weights(m, c)?;
    evaluate_field_with(&t, g, cfg.nondim(c)?)
}

/// Bank entry closest to `c` in normalized condition space; ties go to the lowest index.
pub fn nearest_neighbor_index<T: Scalar>(bank: &WeightBank<T>, c: &OperatingCondition) -> Result<usize> {
    if bank.entries.is_empty() {
        return Err(Error::validation("nearest-neighbour lookup in an empty bank"));
    }
    let x = normalize_unchecked(c, &bank.ranges);
    let mut best = (f64::INFINITY, 0);
    for (i, e) in bank.entries.iter().enumerate() {
        let y = normalize_unchecked(&e.condition, &bank.ranges);
        let d: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best.0 {
            best = (d, i);
        }
    }
    Ok(best.1)
}

pub fn nearest_neighbor_weights<T: Scalar>(bank: &WeightBank<T>, c: &OperatingCondition) -> Result<TaskPinn<T>> {
    Ok(bank.entries[nearest_neighbor_index(bank, c)?].clone())
}

/// Root-mean-square standardized error of the predictions at the bank conditions.
pub fn reconstruction_rmse<T: Scalar>(m: &HypernetModel<T>, bank: &WeightBank<T>) -> Result<f64> {
    let out = m.raw_outputs(&bank.conditions())?;
    let mut acc = 0.0;
    let mut n = 0usize;
    for (e, row) in bank.entries.iter().zip(out.rows()) {
        let target = m.stats.standardize(&e.flat());
        for (p, t) in row.iter().zip(&target) {
            acc += (p.f64() - t.f64()).powi(2);
            n += 1;
        }
    }
    Ok((acc / n as f64).sqrt())
}

/// Mean fluid+metal field MAE (nondimensional) of the predicted PINNs on the validation tasks.
pub fn validation_mae<T: Scalar>(m: &HypernetModel<T>, tasks: &[ValidationTask<T>]) -> Result<f64> {
    let conds: Vec<OperatingCondition> = tasks.iter().map(|t| t.condition).collect();
    let preds = m.predict_many(&conds)?;
    let mut acc = 0.0;
    for (p, t) in preds.iter().zip(tasks) {
        let f = evaluate_field_with(p, t.oracle.grid, t.oracle.params)?;
        acc += field_errors(&f, &t.oracle, FieldSelection::FluidAndMetal)?.0.f64();
    }
    Ok(acc / tasks.len() as f64)
}

/// Full-batch Adam regression of standardized bank weights on normalized conditions.
///
/// Early stopping watches the validation field MAE when validation tasks are
/// given (the training MSE otherwise). Like a plain early-stopping callback it
/// returns the weights at the stop unless `restore_best` is set.
pub fn train_hypernet<T: Scalar>(
    bank: &WeightBank<T>,
    validation: &[ValidationTask<T>],
    cfg: &HypernetConfig,
) -> Result<(HypernetModel<T>, HypernetReport)> {
    let started = Instant::now();
    cfg.validate()?;
    if bank.len() < 2 {
        return Err(Error::validation(format!(
            "hypernetwork training needs at least 2 bank entries, got {}",
            bank.len()
        )));
    }
    bank.validate()?;
    let flats: Vec<Vec<T>> = bank.entries.iter().map(|e| e.flat()).collect();
    let stats = StandardizationStats::fit(&flats)?;
    let mut model = HypernetModel::init(stats, bank.ranges, cfg.seed, cfg.zero_heads)?;
    let spec = HypernetModel::<T>::spec();
    let conds = bank.conditions();
    let x = model.inputs(&conds);
    let d = spec.n_outputs();
    let targets = Array2::from_shape_fn((flats.len(), d), |_| T::zero());
    let mut targets = targets;
    for (mut row, f) in targets.rows_mut().into_iter().zip(&flats) {
        row.assign(&ndarray::ArrayView1::from(&model.stats.standardize(f)[..]));
    }
    let scale = T::of(2.0) / T::of_usize(targets.len());
    let mut adam = AdamState::new(model.weights.len(), AdamConfig::with_lr(cfg.lr));
    let mut grad = vec![T::zero(); model.weights.len()];

    let mut best: (f64, usize, Vec<T>) = (f64::INFINITY, 0, model.weights.0.clone());
    let mut since_best = 0;
    let mut train_loss = Vec::new();
    let mut monitored = Vec::new();
    let mut early_stopped = false;
    let mut epoch = 0;
    loop {
        let jets = JetBatch::forward(&spec, &model.weights.0, x.view(), JetMode::Value)?;
        let diff = jets.output() - &targets;
        let mse = diff.iter().map(|v| v.f64() * v.f64()).sum::<f64>() / targets.len() as f64;
        if !mse.is_finite() {
            return Err(Error::Numerical(format!("hypernetwork loss is not finite at epoch {epoch}")));
        }
        if epoch % cfg.val_every == 0 || epoch == cfg.max_epochs {
            let watched = if validation.is_empty() {
                mse
            } else {
                validation_mae(&model, validation)?
            };
            train_loss.push((epoch, mse));
            monitored.push((epoch, watched));
            if watched < best.0 - cfg.min_delta {
                best = (watched, epoch, model.weights.0.clone());
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= cfg.patience {
                    early_stopped = true;
                    break;
                }
            }
        }
        if epoch >= cfg.max_epochs {
            break;
        }
        grad.iter_mut().for_each(|g| *g = T::zero());
        jets.backward(&spec, &model.weights.0, diff.mapv(|v| v * scale), &mut grad)?;
        adam.step(&grad, &mut model.weights.0)?;
        epoch += 1;
    }
    if cfg.restore_best {
        model.weights.0 = best.2;
    }
    let report = HypernetReport {
        epochs: epoch,
        best_epoch: best.1,
        train_loss,
        monitored,
        early_stopped,
        seconds: started.elapsed().as_secs_f64(),
    };
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pinn::LossBreakdown;

    fn fake_bank(n: usize, identical: bool) -> WeightBank<f64> {
        let spec = MlpSpec::base_pinn();
        let r = PhysicalRanges::default();
        let entries = (0..n)
            .map(|i| {
                let u = i as f64 / n.max(2) as f64;
                let c = OperatingCondition::new(200.0 + 200.0 * u, 10.0 + 70.0 * u, 45.0, 700.0);
                let s = if identical { 0 } else { i as u64 };
                TaskPinn {
                    condition: c,
                    weights: std::array::from_fn(|j| init_weights(&spec, 10 * s + j as u64)),
                    final_losses: LossBreakdown::default(),
                    seed: s,
                }
            })
            .collect();
        WeightBank {
            entries,
            ranges: r,
            design_name: "test".into(),
            metadata: BankMetadata {
                base_seed: 0,
                seeds: (0..n as u64).collect(),
                chain_order: (0..n).collect(),
                warm_from: vec![None; n],
                train_config: Default::default(),
                config_hash: String::new(),
            },
        }
    }

    #[test]
    fn param_shapes() {
        assert_eq!(base_param_count(), 354);
        assert_eq!(hypernet_spec().param_count(), 340_006);
    }

    #[test]
    fn standardization_round_trip_and_floor() {
        let rows: Vec<Vec<f64>> = vec![vec![1.0, 5.0, -3.0], vec![3.0, 5.0, 7.0]];
        let s = StandardizationStats::fit(&rows).unwrap();
        assert_eq!(s.mean, vec![2.0, 5.0, 2.0]);
        assert_eq!(s.std[1], STD_FLOOR);
        for r in &rows {
            let back = s.destandardize(&s.standardize(r));
            for (a, b) in back.iter().zip(r) {
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn zero_heads_predict_bank_means() {
        let bank = fake_bank(4, false);
        let stats = StandardizationStats::fit(&bank.entries.iter().map(|e| e.flat()).collect::<Vec<_>>()).unwrap();
        let m = HypernetModel::<f64>::init(stats.clone(), bank.ranges, 1, true).unwrap();
        let t = predict_weights(&m, &OperatingCondition::new(250.0, 30.0, 30.0, 650.0)).unwrap();
        assert_eq!(t.weights.len(), 3);
        assert!(t.weights.iter().all(|w| w.len() == 354));
        for (a, b) in t.flat().iter().zip(&stats.mean) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn envelope_checks() {
        let bank = fake_bank(3, false);
        let stats = StandardizationStats::fit(&bank.entries.iter().map(|e| e.flat()).collect::<Vec<_>>()).unwrap();
        let m = HypernetModel::<f64>::init(stats, bank.ranges, 1, false).unwrap();
        assert!(predict_weights(&m, &OperatingCondition::new(405.0, 30.0, 30.0, 650.0)).is_ok());
        assert!(predict_weights(&m, &OperatingCondition::new(430.0, 30.0, 30.0, 650.0)).is_err());
    }

    #[test]
    fn identical_bank_is_learned_exactly() {
        let bank = fake_bank(3, true);
        let cfg = HypernetConfig {
            lr: 1e-3,
            max_epochs: 400,
            val_every: 20,
            patience: 1000,
            ..Default::default()
        };
        let (m, rep) = train_hypernet(&bank, &[], &cfg).unwrap();
        assert!(rep.monitored.last().unwrap().1 < 1e-4, "{:?}", rep.monitored.last());
        let t = predict_weights(&m, &OperatingCondition::new(333.0, 20.0, 70.0, 610.0)).unwrap();
        // Deviations are scaled by the floored standard deviation.
        for (a, b) in t.flat().iter().zip(bank.entries[0].flat()) {
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn training_fits_distinct_entries_and_is_deterministic() {
        let bank = fake_bank(4, false);
        let cfg = HypernetConfig {
            lr: 1e-3,
            max_epochs: 300,
            val_every: 25,
            patience: 1000,
            ..Default::default()
        };
        let (m, _) = train_hypernet(&bank, &[], &cfg).unwrap();
        let (m2, _) = train_hypernet(&bank, &[], &cfg).unwrap();
        assert_eq!(m, m2);
        assert!(reconstruction_rmse(&m, &bank).unwrap() < 0.1);
        assert!(train_hypernet(&fake_bank(1, false), &[], &cfg).is_err());
    }

    #[test]
    fn early_stop_keeps_or_restores_weights() {
        let bank = fake_bank(4, false);
        // A huge min_delta makes every check after the first count as no improvement.
        let cfg = HypernetConfig {
            lr: 1e-3,
            max_epochs: 100,
            val_every: 10,
            patience: 3,
            min_delta: 1e9,
            ..Default::default()
        };
        let (last, rep) = train_hypernet(&bank, &[], &cfg).unwrap();
        assert!(rep.early_stopped);
        assert_eq!((rep.best_epoch, rep.epochs), (0, 30));
        let (best, _) = train_hypernet(&bank, &[], &HypernetConfig { restore_best: true, ..cfg }).unwrap();
        let fresh = HypernetModel::<f64>::init(last.stats.clone(), bank.ranges, cfg.seed, cfg.zero_heads).unwrap();
        assert_eq!(best.weights, fresh.weights);
        assert_ne!(last.weights, fresh.weights);
    }

    #[test]
    fn nearest_neighbour_rules() {
        let mut bank = fake_bank(3, false);
        let c0 = bank.entries[0].condition;
        assert_eq!(nearest_neighbor_index(&bank, &c0).unwrap(), 0);
        // Exactly midway between entries 0 and 1 → lower index.
        bank.entries[0].condition = OperatingCondition::new(300.0, 10.0, 45.0, 700.0);
        bank.entries[1].condition = OperatingCondition::new(200.0, 10.0, 45.0, 700.0);
        let mid = OperatingCondition::new(250.0, 10.0, 45.0, 700.0);
        assert_eq!(nearest_neighbor_index(&bank, &mid).unwrap(), 0);
        assert_eq!(nearest_neighbor_weights(&bank, &bank.entries[2].condition).unwrap(), bank.entries[2]);
        bank.entries.clear();
        assert!(nearest_neighbor_weights(&bank, &c0).is_err());
    }

    #[test]
    fn model_and_bank_files_round_trip() {
        let bank = fake_bank(3, false);
        let dir = tempfile::tempdir().unwrap();
        bank.save(dir.path()).unwrap();
        assert_eq!(WeightBank::<f64>::load(dir.path()).unwrap(), bank);
        let stats = StandardizationStats::fit(&bank.entries.iter().map(|e| e.flat()).collect::<Vec<_>>()).unwrap();
        let m = HypernetModel::<f64>::init(stats, bank.ranges, 7, false).unwrap();
        let p = dir.path().join("model.bin");
        m.save(&p).unwrap();
        assert_eq!(HypernetModel::<f64>::load(&p).unwrap(), m);
        std::fs::write(&p, b"nope").unwrap();
        assert!(HypernetModel::<f64>::load(&p).is_err());
    }
}

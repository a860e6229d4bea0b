//! Domain-decomposed PINN: one small network per sector, coupled through
//! interface penalties, trained jointly.

mod collocation;
mod train;

use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::fd::{FieldSolution, Grid};
use crate::model::{ModelConfig, NondimParams, OperatingCondition, SECTORS};
use crate::nn::{input_derivatives, JetBatch, JetMode, MlpSpec, WeightVector};
use crate::Scalar;

pub use collocation::{CollocationCounts, CollocationSet, Interface, INTERFACES};
pub use train::{train_base_pinn, StopReason, TrainConfig, TrainFailure, TrainReport};

use collocation::{sector_batch, Layout};

/// Output column of the fluid temperature.
pub const FLUID: usize = 0;
/// Output column of the metal temperature.
pub const METAL: usize = 1;
const PHI: usize = 0;
const Z: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub w_pde: f64,
    pub w_bc: f64,
    pub w_interface: f64,
    pub w_neumann: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            w_pde: 1.0,
            w_bc: 10.0,
            w_interface: 10.0,
            w_neumann: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.w_pde, self.w_bc, self.w_interface, self.w_neumann];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::validation("loss weights must be finite and nonnegative"));
        }
        if all.iter().all(|w| *w == 0.0) {
            return Err(Error::validation("at least one loss weight must be positive"));
        }
        Ok(())
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            w_pde: self.w_pde * k,
            w_bc: self.w_bc * k,
            w_interface: self.w_interface * k,
            w_neumann: self.w_neumann * k,
        }
    }
}

/// Weighted loss terms; `total` is their sum.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown<T> {
    pub pde: T,
    pub bc: T,
    pub interface: T,
    pub neumann: T,
    pub total: T,
}

impl<T: Scalar> LossBreakdown<T> {
    fn from_terms(pde: T, bc: T, interface: T, neumann: T) -> Self {
        Self {
            pde,
            bc,
            interface,
            neumann,
            total: pde + bc + interface + neumann,
        }
    }

    pub fn cast<U: Scalar>(&self) -> LossBreakdown<U> {
        LossBreakdown {
            pde: U::of(self.pde.f64()),
            bc: U::of(self.bc.f64()),
            interface: U::of(self.interface.f64()),
            neumann: U::of(self.neumann.f64()),
            total: U::of(self.total.f64()),
        }
    }

    fn check_finite(&self) -> Result<()> {
        for (name, v) in [
            ("pde", self.pde),
            ("bc", self.bc),
            ("interface", self.interface),
            ("neumann", self.neumann),
        ] {
            if !v.is_finite() {
                return Err(Error::Numerical(format!("{name} loss term is not finite ({v})")));
            }
        }
        Ok(())
    }
}

/// A trained three-sector PINN for one operating condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TaskPinn<T> {
    pub condition: OperatingCondition,
    pub weights: [WeightVector<T>; SECTORS],
    pub final_losses: LossBreakdown<T>,
    pub seed: u64,
}

impl<T: Scalar> TaskPinn<T> {
    pub fn spec() -> MlpSpec {
        MlpSpec::base_pinn()
    }

    pub fn validate(&self) -> Result<()> {
        let spec = Self::spec();
        for w in &self.weights {
            w.check(&spec)?;
            if w.0.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical("PINN weights contain non-finite values".into()));
            }
        }
        Ok(())
    }

    /// All 3 × 354 weights, sector-major.
    pub fn flat(&self) -> Vec<T> {
        crate::nn::concat(&[&self.weights[0].0, &self.weights[1].0, &self.weights[2].0])
    }

    pub fn from_flat(condition: OperatingCondition, flat: &[T], seed: u64) -> Result<Self> {
        let n = Self::spec().param_count();
        check_len(SECTORS * n, flat.len(), "PINN weight vector")?;
        Ok(Self {
            condition,
            weights: std::array::from_fn(|j| WeightVector(flat[j * n..(j + 1) * n].to_vec())),
            final_losses: LossBreakdown::default(),
            seed,
        })
    }

    pub fn cast<U: Scalar>(&self) -> TaskPinn<U> {
        TaskPinn {
            condition: self.condition,
            weights: std::array::from_fn(|j| WeightVector(self.weights[j].0.iter().map(|v| U::of(v.f64())).collect())),
            final_losses: self.final_losses.cast(),
            seed: self.seed,
        }
    }
}

fn check_point<T: Scalar>(point: [T; 2]) -> Result<()> {
    if point.iter().all(|v| *v >= T::zero() && *v <= T::one()) {
        Ok(())
    } else {
        Err(Error::validation(format!(
            "collocation point ({}, {}) outside the unit square",
            point[0], point[1]
        )))
    }
}

/// `∂Tm/∂φ − NTU (T − Tm) − (1/Pe) ∂²Tm/∂z²` for sector `j`'s network.
pub fn residual_conduction<T: Scalar>(
    point: [T; 2],
    net: &WeightVector<T>,
    j: usize,
    p: &NondimParams<T>,
) -> Result<T> {
    check_point(point)?;
    let d = input_derivatives(&MlpSpec::base_pinn(), net, &point, Z)?;
    Ok(d.first[PHI][METAL] - p.ntu[j] * (d.outputs[FLUID] - d.outputs[METAL]) - d.second[METAL] / p.pe[j])
}

/// `∂T/∂z − NTU (Tm − T)` for sector `j`'s network.
pub fn residual_convection<T: Scalar>(
    point: [T; 2],
    net: &WeightVector<T>,
    j: usize,
    p: &NondimParams<T>,
) -> Result<T> {
    check_point(point)?;
    let d = input_derivatives(&MlpSpec::base_pinn(), net, &point, Z)?;
    Ok(d.first[Z][FLUID] - p.ntu[j] * (d.outputs[METAL] - d.outputs[FLUID]))
}

/// Precomputed batches for repeated loss evaluation on one task.
pub struct PinnProblem<T> {
    spec: MlpSpec,
    params: NondimParams<T>,
    weights: LossWeights,
    batches: Vec<(Array2<T>, Layout)>,
    counts: CollocationCounts,
}

impl<T: Scalar> PinnProblem<T> {
    pub fn new(c: &CollocationSet<T>, p: &NondimParams<T>, lw: &LossWeights) -> Result<Self> {
        p.validate()?;
        lw.validate()?;
        Ok(Self {
            spec: MlpSpec::base_pinn(),
            params: *p,
            weights: *lw,
            batches: (0..SECTORS).map(|j| sector_batch(c, j)).collect(),
            counts: c.counts(),
        })
    }

    pub fn n_weights(&self) -> usize {
        SECTORS * self.spec.param_count()
    }

    /// Loss terms at the flat weights `w`; with `grad`, also adds ∂total/∂w into it.
    pub fn evaluate(&self, w: &[T], grad: Option<&mut [T]>) -> Result<LossBreakdown<T>> {
        let n = self.spec.param_count();
        check_len(self.n_weights(), w.len(), "PINN weight vector")?;
        let jets = (0..SECTORS)
            .map(|j| {
                JetBatch::forward(
                    &self.spec,
                    &w[j * n..(j + 1) * n],
                    self.batches[j].0.view(),
                    JetMode::Second { axis: Z },
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let c = self.counts;
        let two = T::of(2.0);
        let lw = self.weights;
        let k_pde = T::of(lw.w_pde) / T::of_usize(SECTORS * c.interior);
        let k_bc = T::of(lw.w_bc) / T::of_usize(SECTORS * c.inlet);
        let k_if = T::of(lw.w_interface) / T::of_usize(INTERFACES.len() * c.interface);
        let k_n = T::of(lw.w_neumann) / T::of_usize(SECTORS * 2 * c.neumann);
        let want_grad = grad.is_some();
        let mut cots: Vec<Array2<T>> = if want_grad {
            jets.iter().map(|j| j.zero_grad()).collect()
        } else {
            Vec::new()
        };
        let (mut s_pde, mut s_bc, mut s_if, mut s_n) = (T::zero(), T::zero(), T::zero(), T::zero());

        for j in 0..SECTORS {
            let jet = &jets[j];
            let lay = &self.batches[j].1;
            let (val, dphi, dz, d2z) = (jet.value(), jet.first(PHI), jet.first(Z), jet.second());
            let npts = jet.n_points();
            let (ntu, inv_pe, theta) = (self.params.ntu[j], T::one() / self.params.pe[j], self.params.theta_in[j]);
            // Row offsets of each stream inside the stacked output.
            let (o_phi, o_z, o_2) = (npts, 2 * npts, 3 * npts);
            for i in lay.interior.0..lay.interior.1 {
                let (t, tm) = (val[[i, FLUID]], val[[i, METAL]]);
                let rc = dphi[[i, METAL]] - ntu * (t - tm) - inv_pe * d2z[[i, METAL]];
                let rv = dz[[i, FLUID]] - ntu * (tm - t);
                s_pde += rc * rc + rv * rv;
                if want_grad {
                    let (gc, gv) = (two * k_pde * rc, two * k_pde * rv);
                    let cot = &mut cots[j];
                    cot[[o_phi + i, METAL]] += gc;
                    cot[[o_2 + i, METAL]] -= inv_pe * gc;
                    cot[[o_z + i, FLUID]] += gv;
                    cot[[i, FLUID]] += ntu * (gv - gc);
                    cot[[i, METAL]] += ntu * (gc - gv);
                }
            }
            for i in lay.inlet.0..lay.inlet.1 {
                let r = val[[i, FLUID]] - theta;
                s_bc += r * r;
                if want_grad {
                    cots[j][[i, FLUID]] += two * k_bc * r;
                }
            }
            for range in [lay.neumann_bottom, lay.neumann_top] {
                for i in range.0..range.1 {
                    let r = dz[[i, METAL]];
                    s_n += r * r;
                    if want_grad {
                        cots[j][[o_z + i, METAL]] += two * k_n * r;
                    }
                }
            }
        }
        for (k, iface) in INTERFACES.iter().enumerate() {
            let (a, b) = (iface.left, iface.right);
            let ra = self.batches[a].1.interface[k].expect("left side present").0;
            let rb = self.batches[b].1.interface[k].expect("right side present").0;
            let (va, vb) = (jets[a].value(), jets[b].value());
            for i in 0..c.interface {
                let r = va[[ra + i, METAL]] - vb[[rb + i, METAL]];
                s_if += r * r;
                if want_grad {
                    let g = two * k_if * r;
                    cots[a][[ra + i, METAL]] += g;
                    cots[b][[rb + i, METAL]] -= g;
                }
            }
        }
        let out = LossBreakdown::from_terms(k_pde * s_pde, k_bc * s_bc, k_if * s_if, k_n * s_n);
        out.check_finite()?;
        if let Some(grad) = grad {
            check_len(self.n_weights(), grad.len(), "PINN gradient")?;
            for (j, cot) in cots.into_iter().enumerate() {
                jets[j].backward(&self.spec, &w[j * n..(j + 1) * n], cot, &mut grad[j * n..(j + 1) * n])?;
            }
        }
        Ok(out)
    }
}

/// Weighted loss terms of three sector networks on a collocation set.
pub fn loss_total<T: Scalar>(
    nets: &[WeightVector<T>; SECTORS],
    c: &CollocationSet<T>,
    p: &NondimParams<T>,
    lw: &LossWeights,
) -> Result<LossBreakdown<T>> {
    let flat = crate::nn::concat(&[&nets[0].0, &nets[1].0, &nets[2].0]);
    PinnProblem::new(c, p, lw)?.evaluate(&flat, None)
}

/// Loss and its gradient with respect to the sector-major flat weights.
pub fn loss_and_gradient<T: Scalar>(
    nets: &[WeightVector<T>; SECTORS],
    c: &CollocationSet<T>,
    p: &NondimParams<T>,
    lw: &LossWeights,
) -> Result<(LossBreakdown<T>, Vec<T>)> {
    let flat = crate::nn::concat(&[&nets[0].0, &nets[1].0, &nets[2].0]);
    let mut g = vec![T::zero(); flat.len()];
    let l = PinnProblem::new(c, p, lw)?.evaluate(&flat, Some(&mut g))?;
    Ok((l, g))
}

/// Grid-node coordinates in the `[n_phi·n_z × 2]` layout, z fastest.
fn grid_points<T: Scalar>(g: &Grid) -> Array2<T> {
    let nz = g.n_z;
    Array2::from_shape_fn((g.n_phi * nz, 2), |(r, c)| {
        if c == PHI {
            g.phi(r / nz)
        } else {
            g.z(r % nz)
        }
    })
}

fn fill_sector<T: Scalar>(f: &mut FieldSolution<T>, j: usize, out: ArrayView2<'_, T>) {
    let nz = f.grid.n_z;
    for ((i, k), v) in f.fluid.slice_mut(s![j, .., ..]).indexed_iter_mut() {
        *v = out[[i * nz + k, FLUID]];
    }
    for ((i, k), v) in f.metal.slice_mut(s![j, .., ..]).indexed_iter_mut() {
        *v = out[[i * nz + k, METAL]];
    }
}

/// Evaluates each sector's network on every node of that sector's grid.
pub fn evaluate_field_with<T: Scalar>(t: &TaskPinn<T>, g: Grid, params: NondimParams<T>) -> Result<FieldSolution<T>> {
    g.validate()?;
    t.validate()?;
    let spec = TaskPinn::<T>::spec();
    let pts = grid_points::<T>(&g);
    let mut f = FieldSolution::zeros(g, params);
    for j in 0..SECTORS {
        let out = crate::nn::forward_batch(&spec, &t.weights[j].0, pts.view())?;
        fill_sector(&mut f, j, out.view());
    }
    Ok(f)
}

/// As [`evaluate_field_with`], deriving the stored parameters from `cfg`.
pub fn evaluate_field<T: Scalar>(t: &TaskPinn<T>, g: Grid, cfg: &ModelConfig) -> Result<FieldSolution<T>> {
    evaluate_field_with(t, g, cfg.nondim(&t.condition)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{forward, init_weights};

    fn params(theta: [f64; 3]) -> NondimParams<f64> {
        NondimParams::new([3.0, 2.5, 2.5], [50.0, 50.0, 50.0], theta).unwrap()
    }

    fn random_nets(seed: u64) -> [WeightVector<f64>; 3] {
        std::array::from_fn(|j| init_weights(&MlpSpec::base_pinn(), seed + j as u64))
    }

    /// Tm ≈ z, T ≡ 0 through the small-signal linear regime of tanh.
    fn metal_is_z() -> WeightVector<f64> {
        let spec = MlpSpec::base_pinn();
        let mut w = WeightVector::zeros(&spec);
        let eps = 1e-4;
        let offs = spec.offsets();
        w.0[offs[0].0 + 1] = eps; // W1[0][z]
        w.0[offs[1].0] = eps; // W2[0][0]
        w.0[offs[2].0 + 16] = 1.0 / (eps * eps); // W3[metal][0]
        w
    }

    fn bias_only(values: [f64; 2]) -> WeightVector<f64> {
        let spec = MlpSpec::base_pinn();
        let mut w = WeightVector::zeros(&spec);
        let n = w.len();
        w.0[n - 2] = values[0];
        w.0[n - 1] = values[1];
        w
    }

    #[test]
    fn zero_nets_have_zero_residuals() {
        let z = WeightVector::zeros(&MlpSpec::base_pinn());
        let p = params([0.6, 0.05, 0.05]);
        for pt in [[0.0, 0.0], [0.3, 0.7], [1.0, 1.0]] {
            assert_eq!(residual_conduction(pt, &z, 0, &p).unwrap(), 0.0);
            assert_eq!(residual_convection(pt, &z, 2, &p).unwrap(), 0.0);
        }
        assert!(residual_conduction([1.5, 0.0], &z, 0, &p).is_err());
    }

    #[test]
    fn linear_metal_profile_residual() {
        let w = metal_is_z();
        let p = params([0.5, 0.5, 0.5]);
        for zv in [0.1, 0.5, 0.9] {
            let r = residual_conduction([0.4, zv], &w, 0, &p).unwrap();
            assert!((r - 3.0 * zv).abs() < 1e-5, "{r}");
        }
    }

    #[test]
    fn equilibrium_has_zero_convection_residual() {
        let w = bias_only([0.3, 0.3]);
        let p = params([0.3, 0.3, 0.3]);
        assert_eq!(residual_convection([0.2, 0.8], &w, 1, &p).unwrap(), 0.0);
        assert_eq!(residual_conduction([0.2, 0.8], &w, 1, &p).unwrap(), 0.0);
    }

    #[test]
    fn residuals_match_finite_differences() {
        let p = params([0.6, 0.1, 0.1]);
        let spec = MlpSpec::base_pinn();
        for seed in 0..5 {
            let w: WeightVector<f64> = init_weights(&spec, seed);
            let f = |phi: f64, z: f64| forward(&spec, &w, &[phi, z]).unwrap();
            let (phi, z) = (0.37, 0.61);
            let h = 1e-4;
            let c = f(phi, z);
            let dphi = (f(phi + h, z)[METAL] - f(phi - h, z)[METAL]) / (2.0 * h);
            let dz_t = (f(phi, z + h)[FLUID] - f(phi, z - h)[FLUID]) / (2.0 * h);
            let d2 = (f(phi, z + h)[METAL] - 2.0 * c[METAL] + f(phi, z - h)[METAL]) / (h * h);
            let rc = dphi - 3.0 * (c[FLUID] - c[METAL]) - d2 / 50.0;
            let rv = dz_t - 3.0 * (c[METAL] - c[FLUID]);
            let ac = residual_conduction([phi, z], &w, 0, &p).unwrap();
            let av = residual_convection([phi, z], &w, 0, &p).unwrap();
            assert!((ac - rc).abs() <= 1e-5 * rc.abs().max(1.0), "{ac} {rc}");
            assert!((av - rv).abs() <= 1e-5 * rv.abs().max(1.0), "{av} {rv}");
        }
    }

    fn small_set(seed: u64) -> CollocationSet<f64> {
        let counts = CollocationCounts {
            interior: 40,
            inlet: 8,
            interface: 8,
            neumann: 6,
        };
        CollocationSet::generate(&counts, seed).unwrap()
    }

    #[test]
    fn constant_exact_solution_has_zero_loss() {
        let nets = std::array::from_fn(|_| bias_only([0.5, 0.5]));
        let p = params([0.5, 0.5, 0.5]);
        let c = CollocationSet::generate(&CollocationCounts::default(), 0).unwrap();
        let l = loss_total(&nets, &c, &p, &LossWeights::default()).unwrap();
        assert_eq!(l.total, 0.0);
    }

    #[test]
    fn zero_nets_only_pay_inlet_term() {
        let nets = std::array::from_fn(|_| WeightVector::zeros(&MlpSpec::base_pinn()));
        let p = params([0.6, 0.05, 0.05]);
        let lw = LossWeights::default();
        let l = loss_total(&nets, &small_set(3), &p, &lw).unwrap();
        let expected = lw.w_bc * (0.36 + 0.0025 + 0.0025) / 3.0;
        assert!((l.total - expected).abs() < 1e-15);
        assert_eq!((l.pde, l.interface, l.neumann), (0.0, 0.0, 0.0));
    }

    #[test]
    fn breakdown_is_linear_in_weights() {
        let nets = random_nets(11);
        let p = params([0.6, 0.1, 0.05]);
        let c = small_set(1);
        let lw = LossWeights::default();
        let a = loss_total(&nets, &c, &p, &lw).unwrap();
        let b = loss_total(&nets, &c, &p, &lw.scaled(2.0)).unwrap();
        let sum = a.pde + a.bc + a.interface + a.neumann;
        assert!((sum - a.total).abs() < 1e-14);
        for (x, y) in [(a.pde, b.pde), (a.bc, b.bc), (a.interface, b.interface), (a.neumann, b.neumann), (a.total, b.total)] {
            assert!((2.0 * x - y).abs() <= 1e-13 * y.abs().max(1e-300));
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let nets = random_nets(21);
        let p = params([0.6, 0.1, 0.05]);
        let c = small_set(2);
        let lw = LossWeights::default();
        let (_, g) = loss_and_gradient(&nets, &c, &p, &lw).unwrap();
        let prob = PinnProblem::new(&c, &p, &lw).unwrap();
        let flat = crate::nn::concat(&[&nets[0].0, &nets[1].0, &nets[2].0]);
        let h = 1e-6;
        for idx in (0..flat.len()).step_by(37) {
            let mut wp = flat.clone();
            wp[idx] += h;
            let mut wm = flat.clone();
            wm[idx] -= h;
            let fd = (prob.evaluate(&wp, None).unwrap().total - prob.evaluate(&wm, None).unwrap().total) / (2.0 * h);
            assert!((g[idx] - fd).abs() <= 1e-5 * fd.abs().max(1e-3), "idx {idx}: {} vs {fd}", g[idx]);
        }
    }

    #[test]
    fn non_finite_loss_names_term() {
        let mut nets = random_nets(1);
        nets[0].0[0] = f64::NAN;
        let err = loss_total(&nets, &small_set(0), &params([0.5, 0.1, 0.1]), &LossWeights::default()).unwrap_err();
        assert!(matches!(err, Error::Numerical(ref m) if m.contains("pde")), "{err}");
    }

    #[test]
    fn field_routing_and_pointwise_agreement() {
        let spec = MlpSpec::base_pinn();
        let nets = random_nets(5);
        let t = TaskPinn {
            condition: OperatingCondition::new(300.0, 45.0, 45.0, 700.0),
            weights: nets.clone(),
            final_losses: LossBreakdown::default(),
            seed: 0,
        };
        let g = Grid::new(7, 5).unwrap();
        let p = params([0.6, 0.09, 0.09]);
        let f = evaluate_field_with(&t, g, p).unwrap();
        for j in 0..3 {
            for i in 0..7 {
                for k in 0..5 {
                    let o = forward(&spec, &nets[j], &[g.phi(i), g.z(k)]).unwrap();
                    assert_eq!(f.fluid[[j, i, k]], o[FLUID]);
                    assert_eq!(f.metal[[j, i, k]], o[METAL]);
                }
            }
        }
        let mut t2 = t.clone();
        t2.weights[0].0[3] += 0.5;
        let f2 = evaluate_field_with(&t2, g, p).unwrap();
        assert_eq!(f.fluid.slice(s![1.., .., ..]), f2.fluid.slice(s![1.., .., ..]));
        assert_ne!(f.fluid.slice(s![0, .., ..]), f2.fluid.slice(s![0, .., ..]));

        let t3 = TaskPinn {
            weights: std::array::from_fn(|_| bias_only([0.2, 0.7])),
            ..t
        };
        let f3 = evaluate_field_with(&t3, g, p).unwrap();
        assert!(f3.fluid.iter().all(|v| *v == 0.2) && f3.metal.iter().all(|v| *v == 0.7));
    }

    #[test]
    fn flat_round_trip() {
        let t = TaskPinn {
            condition: OperatingCondition::new(300.0, 45.0, 45.0, 700.0),
            weights: random_nets(9),
            final_losses: LossBreakdown::default(),
            seed: 4,
        };
        let back = TaskPinn::from_flat(t.condition, &t.flat(), 4).unwrap();
        assert_eq!(back, t);
        assert!(TaskPinn::<f64>::from_flat(t.condition, &[0.0; 5], 0).is_err());
    }
}

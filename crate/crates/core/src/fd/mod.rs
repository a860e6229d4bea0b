//! Finite-difference reference solver for the three-sector regenerator.
//!
//! Each sector `j` carries a fluid field `T_j(φ, z)` and a metal field
//! `Tm_j(φ, z)` on the unit square, coupled by
//!
//! ```text
//! ∂Tm/∂φ = NTU (T − Tm) + (1/Pe) ∂²Tm/∂z²      ∂Tm/∂z = 0 at z ∈ {0, 1}
//! ∂T/∂z  = NTU (Tm − T)                          T(φ, 0) = θ_in
//! ```
//!
//! The metal is marched in φ with backward Euler; each φ column is one
//! block-tridiagonal solve (unknown pairs `(T_k, Tm_k)` along z) so fluid and
//! metal are coupled implicitly. The sectors are swept in rotation order
//! 1 → 2 → 3 and the metal leaving sector 3 is fed back into sector 1 until the
//! rotational fixed point is reached.

mod blocktri;
pub mod export;

pub use blocktri::{BlockThomas, Mat2};

use ndarray::{s, Array3, ArrayView1, ArrayViewMut2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{NondimParams, SECTORS};
use crate::Scalar;

/// Uniform node grid, identical in every sector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Grid {
    pub n_phi: usize,
    pub n_z: usize,
}

impl Grid {
    pub fn new(n_phi: usize, n_z: usize) -> Result<Self> {
        let g = Self { n_phi, n_z };
        g.validate()?;
        Ok(g)
    }

    pub fn square(n: usize) -> Result<Self> {
        Self::new(n, n)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_phi < 2 || self.n_z < 3 {
            return Err(Error::validation(format!(
                "grid needs n_phi >= 2 and n_z >= 3, got {}x{}",
                self.n_phi, self.n_z
            )));
        }
        Ok(())
    }

    pub fn phi<T: Scalar>(&self, i: usize) -> T {
        T::of_usize(i) / T::of_usize(self.n_phi - 1)
    }

    pub fn z<T: Scalar>(&self, k: usize) -> T {
        T::of_usize(k) / T::of_usize(self.n_z - 1)
    }

    pub fn nodes_per_sector(&self) -> usize {
        self.n_phi * self.n_z
    }
}

/// Discretization of the fluid transport equation along z.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FluidScheme {
    BackwardEuler,
    /// Conservative with the trapezoid z-quadrature used by the metal; needs `NTU·Δz ≤ 2`.
    Trapezoidal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    /// Convergence threshold on the sector-1 entry profile change per rotation sweep.
    pub outer_tol: f64,
    pub max_outer_iters: usize,
    /// Under-relaxation of the entry-profile update, in (0, 1].
    pub relaxation: f64,
    pub fluid_scheme: FluidScheme,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            outer_tol: 1e-8,
            max_outer_iters: 10_000,
            relaxation: 1.0,
            fluid_scheme: FluidScheme::Trapezoidal,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.outer_tol > 0.0) {
            return Err(Error::validation("outer_tol must be > 0"));
        }
        if self.max_outer_iters < 1 {
            return Err(Error::validation("max_outer_iters must be >= 1"));
        }
        if !(self.relaxation > 0.0 && self.relaxation <= 1.0) {
            return Err(Error::validation("relaxation must lie in (0, 1]"));
        }
        Ok(())
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.outer_tol = tol;
        self
    }
}

/// Discrete fluid and metal fields, indexed `[sector, φ node, z node]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSolution<T> {
    pub grid: Grid,
    pub params: NondimParams<T>,
    pub fluid: Array3<T>,
    pub metal: Array3<T>,
    /// Rotation sweeps performed (0 for fields not produced by the solver).
    pub outer_iterations: usize,
    /// Final entry-profile change of the fixed-point iteration.
    pub interface_residual: T,
}

impl<T: Scalar> FieldSolution<T> {
    pub fn zeros(grid: Grid, params: NondimParams<T>) -> Self {
        let shape = (SECTORS, grid.n_phi, grid.n_z);
        Self {
            grid,
            params,
            fluid: Array3::zeros(shape),
            metal: Array3::zeros(shape),
            outer_iterations: 0,
            interface_residual: T::zero(),
        }
    }

    /// Metal profile along z at φ = 0 of sector `j`.
    pub fn metal_entry(&self, j: usize) -> ArrayView1<'_, T> {
        self.metal.slice(s![j, 0, ..])
    }

    /// Metal profile along z at φ = 1 of sector `j`.
    pub fn metal_exit(&self, j: usize) -> ArrayView1<'_, T> {
        self.metal.slice(s![j, self.grid.n_phi - 1, ..])
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        let f = self
            .fluid
            .iter()
            .zip(other.fluid.iter())
            .map(|(a, b)| (*a - *b).abs());
        let m = self
            .metal
            .iter()
            .zip(other.metal.iter())
            .map(|(a, b)| (*a - *b).abs());
        f.chain(m).fold(T::zero(), T::max)
    }

    pub fn value_bounds(&self) -> (T, T) {
        self.fluid
            .iter()
            .chain(self.metal.iter())
            .fold((T::infinity(), T::neg_infinity()), |(lo, hi), v| (lo.min(*v), hi.max(*v)))
    }
}

/// Rotational interface maps: metal leaving one sector enters the next.
///
/// `exits[j]` is sector `j`'s metal profile at φ = 1. Returns the entry profiles at φ = 0:
/// sector 1 receives sector 3's exit reversed in z, sector 2 receives sector 1's exit
/// reversed in z, sector 3 receives sector 2's exit unchanged.
pub fn apply_interfaces<T: Scalar>(exits: [&[T]; SECTORS]) -> Result<[Vec<T>; SECTORS]> {
    let n = exits[0].len();
    for e in &exits[1..] {
        crate::error::check_len(n, e.len(), "sector edge metal profiles")?;
    }
    let reversed = |v: &[T]| v.iter().rev().copied().collect::<Vec<T>>();
    Ok([reversed(exits[2]), reversed(exits[0]), exits[1].to_vec()])
}

/// Largest violation of the three interface constraints, evaluated on both sides.
pub fn interface_mismatch<T: Scalar>(f: &FieldSolution<T>) -> [T; SECTORS] {
    let nz = f.grid.n_z;
    let mut out = [T::zero(); SECTORS];
    let exits: Vec<_> = (0..SECTORS).map(|j| f.metal_exit(j)).collect();
    let entries: Vec<_> = (0..SECTORS).map(|j| f.metal_entry(j)).collect();
    for k in 0..nz {
        let flip = nz - 1 - k;
        out[0] = out[0].max((entries[0][k] - exits[2][flip]).abs());
        out[1] = out[1].max((exits[0][k] - entries[1][flip]).abs());
        out[2] = out[2].max((exits[1][k] - entries[2][k]).abs());
    }
    out
}

/// Constant block coefficients of one sector's column system.
struct SectorSystem<T> {
    lower: Vec<Mat2<T>>,
    diag: Vec<Mat2<T>>,
    upper: Vec<Mat2<T>>,
    inv_dphi: T,
    theta_in: T,
    ntu: T,
    inv_dz: T,
    scheme: FluidScheme,
}

impl<T: Scalar> SectorSystem<T> {
    fn new(p: &NondimParams<T>, j: usize, g: &Grid, scheme: FluidScheme) -> Result<Self> {
        let n = g.n_z;
        let dz = T::one() / T::of_usize(n - 1);
        let inv_dz = T::one() / dz;
        let inv_dphi = T::of_usize(g.n_phi - 1);
        let ntu = p.ntu[j];
        let r = T::one() / (p.pe[j] * dz * dz);
        let two = T::of(2.0);
        let half = T::of(0.5);
        let (alpha, beta, gamma, beta_diag) = match scheme {
            FluidScheme::BackwardEuler => (inv_dz, T::zero(), inv_dz + ntu, ntu),
            FluidScheme::Trapezoidal => {
                if ntu * dz > two {
                    return Err(Error::validation(format!(
                        "trapezoidal fluid scheme needs NTU·Δz <= 2 (NTU = {ntu}, Δz = {dz}); refine n_z"
                    )));
                }
                (inv_dz - half * ntu, half * ntu, inv_dz + half * ntu, half * ntu)
            }
        };
        let s = inv_dphi + ntu + two * r;
        let mut lower = vec![Mat2::zero(); n];
        let mut diag = vec![Mat2::zero(); n];
        let mut upper = vec![Mat2::zero(); n];
        // Row 0 of each block is the fluid equation, row 1 the metal equation.
        diag[0] = Mat2::new(T::one(), T::zero(), -ntu, s);
        upper[0] = Mat2::new(T::zero(), T::zero(), T::zero(), -two * r);
        for k in 1..n {
            // Ghost node Tm[n] = Tm[n-2] doubles the last lower coupling.
            let rl = if k == n - 1 { two * r } else { r };
            lower[k] = Mat2::new(-alpha, -beta, T::zero(), -rl);
            diag[k] = Mat2::new(gamma, -beta_diag, -ntu, s);
            if k < n - 1 {
                upper[k] = Mat2::new(T::zero(), T::zero(), T::zero(), -r);
            }
        }
        Ok(Self {
            lower,
            diag,
            upper,
            inv_dphi,
            theta_in: p.theta_in[j],
            ntu,
            inv_dz,
            scheme,
        })
    }

    /// Fluid column for a known metal column.
    fn march_fluid(&self, metal: ArrayView1<'_, T>, mut fluid: ndarray::ArrayViewMut1<'_, T>) {
        let half = T::of(0.5);
        fluid[0] = self.theta_in;
        for k in 1..metal.len() {
            fluid[k] = match self.scheme {
                FluidScheme::BackwardEuler => {
                    (fluid[k - 1] * self.inv_dz + self.ntu * metal[k]) / (self.inv_dz + self.ntu)
                }
                FluidScheme::Trapezoidal => {
                    ((self.inv_dz - half * self.ntu) * fluid[k - 1]
                        + half * self.ntu * (metal[k] + metal[k - 1]))
                        / (self.inv_dz + half * self.ntu)
                }
            };
        }
    }

    fn solve(
        &self,
        entry: &[T],
        work: &mut BlockThomas<T>,
        rhs: &mut [[T; 2]],
        mut fluid: ArrayViewMut2<'_, T>,
        mut metal: ArrayViewMut2<'_, T>,
    ) {
        let n_phi = metal.len_of(Axis(0));
        metal.row_mut(0).iter_mut().zip(entry).for_each(|(m, e)| *m = *e);
        self.march_fluid(metal.row(0), fluid.row_mut(0));
        for i in 1..n_phi {
            for (k, r) in rhs.iter_mut().enumerate() {
                *r = [T::zero(), metal[[i - 1, k]] * self.inv_dphi];
            }
            rhs[0][0] = self.theta_in;
            work.solve(&self.lower, &self.diag, &self.upper, rhs);
            for (k, x) in rhs.iter().enumerate() {
                fluid[[i, k]] = x[0];
                metal[[i, k]] = x[1];
            }
            fluid[[i, 0]] = self.theta_in;
        }
    }
}

/// Reusable solver state for one (params, grid, settings) triple.
pub struct Solver<T> {
    grid: Grid,
    params: NondimParams<T>,
    settings: SolverSettings,
    systems: Vec<SectorSystem<T>>,
    work: BlockThomas<T>,
    rhs: Vec<[T; 2]>,
}

impl<T: Scalar> Solver<T> {
    pub fn new(params: &NondimParams<T>, grid: Grid, settings: SolverSettings) -> Result<Self> {
        params.validate()?;
        grid.validate()?;
        settings.validate()?;
        let systems = (0..SECTORS)
            .map(|j| SectorSystem::new(params, j, &grid, settings.fluid_scheme))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid,
            params: *params,
            settings,
            systems,
            work: BlockThomas::with_len(grid.n_z),
            rhs: vec![[T::zero(); 2]; grid.n_z],
        })
    }

    /// One rotation sweep 1 → 2 → 3 from the given sector-1 entry profile.
    /// Returns the entry profile implied for the next sweep.
    pub fn sweep(&mut self, entry: &[T], out: &mut FieldSolution<T>) -> Result<Vec<T>> {
        crate::error::check_len(self.grid.n_z, entry.len(), "sector-1 entry profile")?;
        let mut current = entry.to_vec();
        for j in 0..SECTORS {
            let fluid = out.fluid.index_axis_mut(Axis(0), j);
            let metal = out.metal.index_axis_mut(Axis(0), j);
            self.systems[j].solve(&current, &mut self.work, &mut self.rhs, fluid, metal);
            let exit: Vec<T> = out.metal_exit(j).to_vec();
            current = match j {
                // Sector 1 → 2 and 3 → 1 reverse z; 2 → 3 does not.
                0 | 2 => exit.into_iter().rev().collect(),
                _ => exit,
            };
        }
        Ok(current)
    }

    pub fn solve(&mut self) -> Result<FieldSolution<T>> {
        let mut out = FieldSolution::zeros(self.grid, self.params);
        let (lo, hi) = self.params.theta_bounds();
        let mean = self.params.theta_in.iter().copied().sum::<T>() / T::of_usize(SECTORS);
        let mut entry = vec![mean; self.grid.n_z];
        let tol = T::of(self.settings.outer_tol);
        let omega = T::of(self.settings.relaxation);
        let mut residual = T::infinity();
        for iter in 1..=self.settings.max_outer_iters {
            let next = self.sweep(&entry, &mut out)?;
            residual = next
                .iter()
                .zip(&entry)
                .map(|(a, b)| (*a - *b).abs())
                .fold(T::zero(), T::max);
            if !residual.is_finite() || next.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!(
                    "non-finite metal profile after sweep {iter}"
                )));
            }
            if residual <= tol {
                out.outer_iterations = iter;
                out.interface_residual = residual;
                debug_assert!(out.value_bounds().0 >= lo - T::of(1e-9));
                debug_assert!(out.value_bounds().1 <= hi + T::of(1e-9));
                return Ok(out);
            }
            for (e, n) in entry.iter_mut().zip(&next) {
                *e = *e + omega * (*n - *e);
            }
        }
        Err(Error::Divergence {
            iterations: self.settings.max_outer_iters,
            residual: residual.f64(),
        })
    }
}

pub fn solve<T: Scalar>(p: &NondimParams<T>, g: Grid, s: &SolverSettings) -> Result<FieldSolution<T>> {
    Solver::new(p, g, *s)?.solve()
}

/// Which fields enter an error metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FieldSelection {
    #[default]
    FluidAndMetal,
    Fluid,
    Metal,
}

/// Mean and maximum absolute nodal difference (nondimensional) over all sectors.
pub fn field_errors<T: Scalar>(a: &FieldSolution<T>, b: &FieldSolution<T>, sel: FieldSelection) -> Result<(T, T)> {
    if a.grid != b.grid {
        return Err(Error::validation(format!(
            "cannot compare fields on grids {}x{} and {}x{}",
            a.grid.n_phi, a.grid.n_z, b.grid.n_phi, b.grid.n_z
        )));
    }
    let pairs: Vec<(&Array3<T>, &Array3<T>)> = match sel {
        FieldSelection::FluidAndMetal => vec![(&a.fluid, &b.fluid), (&a.metal, &b.metal)],
        FieldSelection::Fluid => vec![(&a.fluid, &b.fluid)],
        FieldSelection::Metal => vec![(&a.metal, &b.metal)],
    };
    let (mut sum, mut max, mut n) = (T::zero(), T::zero(), 0usize);
    for (x, y) in pairs {
        for (u, v) in x.iter().zip(y) {
            let d = (*u - *v).abs();
            sum += d;
            max = max.max(d);
            n += 1;
        }
    }
    Ok((sum / T::of_usize(n), max))
}

/// Mean fluid temperature over φ at the outlet z = 1, per sector.
pub fn outlet_means<T: Scalar>(f: &FieldSolution<T>) -> [T; SECTORS] {
    let k = f.grid.n_z - 1;
    std::array::from_fn(|j| {
        let col = f.fluid.slice(s![j, .., k]);
        col.sum() / T::of_usize(col.len())
    })
}

/// Capacity-rate weights under which the nondimensional system conserves energy.
///
/// Both equations share the same transfer-unit count per sector, so fluid and metal
/// capacity rates coincide and each sector's fluid enthalpy change counts equally.
pub fn capacity_weights<T: Scalar>() -> [T; SECTORS] {
    [T::one(); SECTORS]
}

/// `Σ_j w_j (mean inlet − mean outlet)_j` over the marched φ columns.
///
/// Columns `1..n_phi` are the ones the φ-marching couples to the metal, so this mean
/// is the quadrature under which the discrete scheme conserves energy exactly.
pub fn energy_balance_residual<T: Scalar>(f: &FieldSolution<T>, weights: &[T; SECTORS]) -> T {
    let (n_phi, k) = (f.grid.n_phi, f.grid.n_z - 1);
    let mut total = T::zero();
    for j in 0..SECTORS {
        let inlet = f.fluid.slice(s![j, 1.., 0]);
        let outlet = f.fluid.slice(s![j, 1.., k]);
        let m = T::of_usize(n_phi - 1);
        total += weights[j] * (inlet.sum() / m - outlet.sum() / m);
    }
    total
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct GridStudyRow<T> {
    pub grid: Grid,
    pub outlet: [T; SECTORS],
    /// `|outlet − previous row's outlet|`; absent on the first row.
    pub diff: Option<[T; SECTORS]>,
    pub outer_iterations: usize,
}

/// Outlet means on a sequence of grids of non-decreasing resolution.
pub fn grid_independence_study<T: Scalar>(
    p: &NondimParams<T>,
    grids: &[Grid],
    s: &SolverSettings,
) -> Result<Vec<GridStudyRow<T>>> {
    if grids.len() < 2 {
        return Err(Error::validation("grid study needs at least two grids"));
    }
    if grids
        .windows(2)
        .any(|w| w[1].n_phi < w[0].n_phi || w[1].n_z < w[0].n_z)
    {
        return Err(Error::validation("grid study grids must not decrease in resolution"));
    }
    let mut rows: Vec<GridStudyRow<T>> = Vec::with_capacity(grids.len());
    for g in grids {
        let f = solve(p, *g, s)?;
        let outlet = outlet_means(&f);
        let diff = rows
            .last()
            .map(|prev| std::array::from_fn(|j| (outlet[j] - prev.outlet[j]).abs()));
        rows.push(GridStudyRow {
            grid: *g,
            outlet,
            diff,
            outer_iterations: f.outer_iterations,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(theta: [f64; 3]) -> NondimParams<f64> {
        NondimParams::new([3.0, 2.5, 2.5], [50.0; 3], theta).unwrap()
    }

    #[test]
    fn uniform_inlets_give_uniform_fields() {
        let p: NondimParams<f64> = NondimParams::new([4.0, 1.0, 0.3], [5.0, 80.0, 20.0], [0.5; 3]).unwrap();
        let f = solve(&p, Grid::square(40).unwrap(), &SolverSettings::default()).unwrap();
        let (lo, hi) = f.value_bounds();
        assert!((lo - 0.5).abs() < 1e-10 && (hi - 0.5).abs() < 1e-10);
    }

    #[test]
    fn zero_ntu_leaves_fluid_at_inlet() {
        let p: NondimParams<f64> = NondimParams::new([0.0; 3], [50.0; 3], [0.6, 0.05, 0.1]).unwrap();
        let f = solve(&p, Grid::square(30).unwrap(), &SolverSettings::default()).unwrap();
        for j in 0..3 {
            assert!(f
                .fluid
                .index_axis(Axis(0), j)
                .iter()
                .all(|v| (*v - p.theta_in[j]).abs() < 1e-14));
        }
        let out = outlet_means(&f);
        for j in 0..3 {
            assert!((out[j] - p.theta_in[j]).abs() < 1e-14);
        }
    }

    #[test]
    fn heat_flows_from_gas_to_air() {
        let p = params([0.6, 0.05, 0.05]);
        let f = solve(&p, Grid::square(60).unwrap(), &SolverSettings::default()).unwrap();
        let out = outlet_means(&f);
        assert!(out[0] < 0.6);
        assert!(out[1] > 0.05 && out[2] > 0.05);
    }

    #[test]
    fn fluid_inlet_row_is_exact() {
        let p = params([0.7, 0.02, 0.15]);
        let f = solve(&p, Grid::new(17, 23).unwrap(), &SolverSettings::default()).unwrap();
        for j in 0..3 {
            assert!(f.fluid.slice(s![j, .., 0]).iter().all(|v| *v == p.theta_in[j]));
        }
    }

    #[test]
    fn interfaces_flip_and_copy() {
        let n = 7;
        let z: Vec<f64> = (0..n).map(|k| k as f64 / (n - 1) as f64).collect();
        let g: Vec<f64> = z.iter().map(|v| v * v).collect();
        let c = vec![0.3; n];
        let [e1, e2, e3] = apply_interfaces([&c[..], &g[..], &z[..]]).unwrap();
        for k in 0..n {
            assert!((e1[k] - (1.0 - z[k])).abs() < 1e-15);
        }
        assert_eq!(e3, g);
        assert_eq!(e2, c);
        assert!(apply_interfaces([&c[..], &g[..3], &z[..]]).is_err());
    }

    #[test]
    fn interface_constraints_hold_at_convergence() {
        let p = params([0.6, 0.09, 0.09]);
        let s = SolverSettings::default().with_tol(1e-10);
        let f = solve(&p, Grid::square(50).unwrap(), &s).unwrap();
        let m = interface_mismatch(&f);
        assert!(m[0] <= 1e-10, "{m:?}");
        assert_eq!(m[1], 0.0);
        assert_eq!(m[2], 0.0);
    }

    #[test]
    fn energy_balance_uniform_and_default() {
        let mut uniform = FieldSolution::zeros(Grid::square(20).unwrap(), params([0.5; 3]));
        uniform.fluid.fill(0.5);
        uniform.metal.fill(0.5);
        assert_eq!(energy_balance_residual(&uniform, &capacity_weights()), 0.0);
        let solved = solve(&params([0.5; 3]), Grid::square(20).unwrap(), &SolverSettings::default()).unwrap();
        assert!(energy_balance_residual(&solved, &capacity_weights()).abs() < 1e-14);
        let s = SolverSettings::default().with_tol(1e-10);
        let f = solve(&params([0.6, 0.09, 0.09]), Grid::square(60).unwrap(), &s).unwrap();
        let r = energy_balance_residual(&f, &capacity_weights());
        assert!(r.abs() < 1e-6, "{r:e}");
    }

    #[test]
    fn resweep_of_converged_solution_is_idempotent() {
        let p = params([0.6, 0.09, 0.09]);
        let s = SolverSettings::default();
        let g = Grid::square(40).unwrap();
        let f = solve(&p, g, &s).unwrap();
        let mut solver = Solver::new(&p, g, s).unwrap();
        let mut again = FieldSolution::zeros(g, p);
        let entry = f.metal_entry(0).to_vec();
        solver.sweep(&entry, &mut again).unwrap();
        let dm = f
            .metal
            .iter()
            .zip(again.metal.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(dm <= s.outer_tol, "{dm:e}");
    }

    #[test]
    fn single_precision_solve_agrees() {
        let p = params([0.6, 0.09, 0.09]);
        let g = Grid::square(30).unwrap();
        let f64sol = solve(&p, g, &SolverSettings::default()).unwrap();
        let f32sol = solve(&p.cast::<f32>(), g, &SolverSettings::default().with_tol(1e-6)).unwrap();
        let a = outlet_means(&f64sol);
        let b = outlet_means(&f32sol);
        for j in 0..3 {
            assert!((a[j] - b[j] as f64).abs() < 1e-5);
        }
    }

    #[test]
    fn divergence_reported_when_iterations_exhausted() {
        let s = SolverSettings {
            max_outer_iters: 1,
            outer_tol: 1e-14,
            ..SolverSettings::default()
        };
        let err = solve(&params([0.6, 0.05, 0.05]), Grid::square(10).unwrap(), &s).unwrap_err();
        assert!(matches!(err, Error::Divergence { iterations: 1, .. }));
    }

    #[test]
    fn repeated_grid_has_zero_differences() {
        let g = Grid::square(20).unwrap();
        let rows = grid_independence_study(&params([0.6, 0.09, 0.09]), &[g, g], &SolverSettings::default()).unwrap();
        assert_eq!(rows[1].diff.unwrap(), [0.0; 3]);
        assert!(grid_independence_study(&params([0.6, 0.09, 0.09]), &[g], &SolverSettings::default()).is_err());
    }
}

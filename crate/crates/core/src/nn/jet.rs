//! Batched forward-mode input derivatives ("jets") with a hand-derived adjoint.
//!
//! Rows are stacked by stream: the first `N` rows carry values, the next
//! `N·n_in` rows carry `∂/∂x_i` for each input in turn and, in
//! [`JetMode::Second`], the last `N` rows carry `∂²/∂x_axis²`. Every stream
//! shares the layer weights, so one GEMM per layer advances all of them, and
//! the weight gradient of any function of the output jets is a single
//! reverse sweep.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView2, ArrayViewMut2, Axis, Zip};

use crate::error::{check_len, Error, Result};
use crate::nn::{layer_view, Activation, MlpSpec};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JetMode {
    Value,
    First,
    /// First derivatives plus the second derivative along `axis`.
    Second { axis: usize },
}

struct LayerCache<T> {
    input: Array2<T>,
    pre: Array2<T>,
    /// tanh of the value-stream pre-activation; empty for linear layers.
    act: Array2<T>,
}

pub struct JetBatch<T> {
    mode: JetMode,
    n: usize,
    n_in: usize,
    layers: Vec<LayerCache<T>>,
    out: Array2<T>,
}

/// Cotangents of the output jets, same row layout as [`JetBatch::output`].
pub type JetGrad<T> = Array2<T>;

impl<T: Scalar> JetBatch<T> {
    fn streams(mode: JetMode, n_in: usize) -> usize {
        match mode {
            JetMode::Value => 1,
            JetMode::First => 1 + n_in,
            JetMode::Second { .. } => 2 + n_in,
        }
    }

    pub fn forward(spec: &MlpSpec, w: &[T], x: ArrayView2<'_, T>, mode: JetMode) -> Result<Self> {
        check_len(spec.param_count(), w.len(), "weight vector length")?;
        check_len(spec.n_inputs(), x.ncols(), "network input width")?;
        let n_in = spec.n_inputs();
        if let JetMode::Second { axis } = mode {
            if axis >= n_in {
                return Err(Error::validation(format!("second-derivative axis {axis} out of range")));
            }
        }
        let n = x.nrows();
        let streams = Self::streams(mode, n_in);
        let mut h = Array2::<T>::zeros((streams * n, n_in));
        h.slice_mut(s![..n, ..]).assign(&x);
        if mode != JetMode::Value {
            for i in 0..n_in {
                h.slice_mut(s![(1 + i) * n..(2 + i) * n, i]).fill(T::one());
            }
        }
        let mut layers = Vec::with_capacity(spec.n_layers());
        for l in 0..spec.n_layers() {
            let (mat, b) = layer_view(spec, w, l);
            let mut pre = h.dot(&mat.t());
            for mut row in pre.slice_mut(s![..n, ..]).axis_iter_mut(Axis(0)) {
                row.iter_mut().zip(b).for_each(|(v, bi)| *v += *bi);
            }
            let (out, act) = match spec.activation(l) {
                Activation::Linear => (pre.clone(), Array2::zeros((0, 0))),
                Activation::Tanh => {
                    let act = pre.slice(s![..n, ..]).mapv(|a| a.tanh());
                    (tanh_jets(&pre, &act, n, n_in, mode), act)
                }
            };
            layers.push(LayerCache { input: h, pre, act });
            h = out;
        }
        Ok(Self {
            mode,
            n,
            n_in,
            layers,
            out: h,
        })
    }

    pub fn n_points(&self) -> usize {
        self.n
    }

    pub fn output(&self) -> &Array2<T> {
        &self.out
    }

    pub fn value(&self) -> ArrayView2<'_, T> {
        self.out.slice(s![..self.n, ..])
    }

    pub fn first(&self, i: usize) -> ArrayView2<'_, T> {
        assert!(self.mode != JetMode::Value && i < self.n_in);
        self.out.slice(s![(1 + i) * self.n..(2 + i) * self.n, ..])
    }

    pub fn second(&self) -> ArrayView2<'_, T> {
        assert!(matches!(self.mode, JetMode::Second { .. }));
        self.out.slice(s![(1 + self.n_in) * self.n.., ..])
    }

    /// Zeroed cotangent buffer shaped like the output jets.
    pub fn zero_grad(&self) -> JetGrad<T> {
        Array2::zeros(self.out.raw_dim())
    }

    /// Accumulates `Σ cot ⊙ ∂(output jets)/∂w` into `grad`.
    pub fn backward(&self, spec: &MlpSpec, w: &[T], cot: JetGrad<T>, grad: &mut [T]) -> Result<()> {
        check_len(spec.param_count(), grad.len(), "gradient length")?;
        check_len(self.out.nrows(), cot.nrows(), "jet cotangent rows")?;
        let offsets = spec.offsets();
        let mut g = cot;
        for l in (0..spec.n_layers()).rev() {
            let cache = &self.layers[l];
            let abar = match spec.activation(l) {
                Activation::Linear => g,
                Activation::Tanh => tanh_jets_adjoint(&cache.pre, &cache.act, &g, self.n, self.n_in, self.mode),
            };
            let (n_in_l, n_out_l) = (spec.layer_sizes[l], spec.layer_sizes[l + 1]);
            let (wo, bo) = offsets[l];
            {
                let mut gw = ArrayViewMut2::from_shape((n_out_l, n_in_l), &mut grad[wo..bo]).expect("layout");
                general_mat_mul(T::one(), &abar.t(), &cache.input, T::one(), &mut gw);
            }
            for (gb, col) in grad[bo..bo + n_out_l]
                .iter_mut()
                .zip(abar.slice(s![..self.n, ..]).axis_iter(Axis(1)))
            {
                *gb += col.sum();
            }
            if l > 0 {
                let (mat, _) = layer_view(spec, w, l);
                g = abar.dot(&mat);
            } else {
                break;
            }
        }
        Ok(())
    }
}

fn tanh_jets<T: Scalar>(pre: &Array2<T>, act: &Array2<T>, n: usize, n_in: usize, mode: JetMode) -> Array2<T> {
    let mut out = Array2::zeros(pre.raw_dim());
    out.slice_mut(s![..n, ..]).assign(act);
    if mode == JetMode::Value {
        return out;
    }
    let d1 = act.mapv(|s| T::one() - s * s);
    for i in 0..n_in {
        let blk = s![(1 + i) * n..(2 + i) * n, ..];
        Zip::from(out.slice_mut(blk))
            .and(pre.slice(blk))
            .and(&d1)
            .for_each(|o, a, d| *o = *d * *a);
    }
    if let JetMode::Second { axis } = mode {
        let two = T::of(2.0);
        let ax = s![(1 + axis) * n..(2 + axis) * n, ..];
        let sec = s![(1 + n_in) * n.., ..];
        Zip::from(out.slice_mut(sec))
            .and(pre.slice(sec))
            .and(pre.slice(ax))
            .and(act)
            .and(&d1)
            .for_each(|o, azz, az, s, d| {
                let d2 = -two * *s * *d;
                *o = d2 * *az * *az + *d * *azz;
            });
    }
    out
}

/// Cotangent of the pre-activation jets from the cotangent of the tanh output jets.
fn tanh_jets_adjoint<T: Scalar>(
    pre: &Array2<T>,
    act: &Array2<T>,
    g: &Array2<T>,
    n: usize,
    n_in: usize,
    mode: JetMode,
) -> Array2<T> {
    let two = T::of(2.0);
    let four = T::of(4.0);
    let d1 = act.mapv(|s| T::one() - s * s);
    let mut abar = Array2::zeros(pre.raw_dim());
    // value stream: h = s(a)
    Zip::from(abar.slice_mut(s![..n, ..]))
        .and(g.slice(s![..n, ..]))
        .and(&d1)
        .for_each(|o, gv, d| *o = *gv * *d);
    if mode == JetMode::Value {
        return abar;
    }
    let d2 = Zip::from(act).and(&d1).map_collect(|s, d| -two * *s * *d);
    for i in 0..n_in {
        let blk = s![(1 + i) * n..(2 + i) * n, ..];
        // h_i = s'(a) a_i
        Zip::from(abar.slice_mut(blk))
            .and(g.slice(blk))
            .and(&d1)
            .for_each(|o, gi, d| *o = *gi * *d);
        let mut av = abar.slice_mut(s![..n, ..]);
        Zip::from(&mut av)
            .and(g.slice(blk))
            .and(pre.slice(blk))
            .and(&d2)
            .for_each(|o, gi, ai, dd| *o += *gi * *dd * *ai);
    }
    if let JetMode::Second { axis } = mode {
        // h_zz = s''(a) a_z² + s'(a) a_zz
        let ax = s![(1 + axis) * n..(2 + axis) * n, ..];
        let sec = s![(1 + n_in) * n.., ..];
        let gz = g.slice(sec);
        let az = pre.slice(ax);
        let azz = pre.slice(sec);
        Zip::from(abar.slice_mut(sec))
            .and(&gz)
            .and(&d1)
            .for_each(|o, gs, d| *o = *gs * *d);
        Zip::from(abar.slice_mut(ax))
            .and(&gz)
            .and(&az)
            .and(&d2)
            .for_each(|o, gs, a, dd| *o += two * *gs * *dd * *a);
        Zip::from(abar.slice_mut(s![..n, ..]))
            .and(&gz)
            .and(&az)
            .and(&azz)
            .and(&d1)
            .and(act)
            .for_each(|o, gs, a, aa, d, s| {
                let d2 = -two * *s * *d;
                let d3 = -two * *d * *d + four * *s * *s * *d;
                *o += *gs * (d3 * *a * *a + d2 * *aa);
            });
    }
    abar
}

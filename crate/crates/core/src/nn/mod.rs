//! Small dense networks: layout of the flat weight vector, evaluation, exact
//! input derivatives, weight gradients and the Adam optimizer.
//!
//! A [`WeightVector`] stores, for each layer in order, the weight matrix
//! row-major as `[out × in]` followed by the `out` biases.

mod adam;
pub mod io;
mod jet;
mod tape;

pub use adam::{optimizer_steps, AdamConfig, AdamState};
pub use jet::{JetBatch, JetGrad, JetMode};
pub use tape::{loss_gradient, Tape, Var};

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Linear,
}

/// Layer widths from input to output, with one hidden and one output activation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>) -> Result<Self> {
        let spec = Self {
            layer_sizes,
            hidden_activation: Activation::Tanh,
            output_activation: Activation::Linear,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// The per-sector network: (φ, z) → (fluid, metal) through two 16-wide tanh layers.
    pub fn base_pinn() -> Self {
        Self::new(vec![2, 16, 16, 2]).expect("valid spec")
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 || self.layer_sizes.iter().any(|&n| n == 0) {
            return Err(Error::validation(format!(
                "MLP needs at least two layers of size >= 1, got {:?}",
                self.layer_sizes
            )));
        }
        Ok(())
    }

    pub fn n_inputs(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn n_outputs(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub(crate) fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.n_layers() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }

    /// Offsets of (weights, biases) of each layer in the flat vector.
    pub(crate) fn offsets(&self) -> Vec<(usize, usize)> {
        let mut off = 0;
        self.layer_sizes
            .windows(2)
            .map(|w| {
                let wo = off;
                let bo = off + w[0] * w[1];
                off = bo + w[1];
                (wo, bo)
            })
            .collect()
    }
}

pub fn param_count(spec: &MlpSpec) -> usize {
    spec.param_count()
}

/// Flat parameter vector in the canonical layer order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
#[serde(bound = "T: Scalar")]
pub struct WeightVector<T>(pub Vec<T>);

impl<T: Scalar> WeightVector<T> {
    pub fn zeros(spec: &MlpSpec) -> Self {
        Self(vec![T::zero(); spec.param_count()])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn check(&self, spec: &MlpSpec) -> Result<()> {
        check_len(spec.param_count(), self.0.len(), "weight vector length")?;
        if self.0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("weight vector contains non-finite values".into()));
        }
        Ok(())
    }

    /// Weight matrix `[out × in]` and bias of one layer.
    pub fn layer<'a>(&'a self, spec: &MlpSpec, l: usize) -> (ArrayView2<'a, T>, &'a [T]) {
        layer_view(spec, &self.0, l)
    }
}

pub(crate) fn layer_view<'a, T: Scalar>(spec: &MlpSpec, w: &'a [T], l: usize) -> (ArrayView2<'a, T>, &'a [T]) {
    let (n_in, n_out) = (spec.layer_sizes[l], spec.layer_sizes[l + 1]);
    let (wo, bo) = spec.offsets()[l];
    let mat = ArrayView2::from_shape((n_out, n_in), &w[wo..bo]).expect("layout matches spec");
    (mat, &w[bo..bo + n_out])
}

/// Glorot-uniform weights and zero biases, reproducible from `seed`.
pub fn init_weights<T: Scalar>(spec: &MlpSpec, seed: u64) -> WeightVector<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = Vec::with_capacity(spec.param_count());
    for win in spec.layer_sizes.windows(2) {
        let (n_in, n_out) = (win[0], win[1]);
        let limit = (6.0 / (n_in + n_out) as f64).sqrt();
        w.extend((0..n_in * n_out).map(|_| T::of(rng.gen_range(-limit..limit))));
        w.extend(std::iter::repeat(T::zero()).take(n_out));
    }
    WeightVector(w)
}

#[inline]
pub(crate) fn activate<T: Scalar>(act: Activation, a: T) -> T {
    match act {
        Activation::Tanh => a.tanh(),
        Activation::Linear => a,
    }
}

/// Single-point evaluation.
pub fn forward<T: Scalar>(spec: &MlpSpec, w: &WeightVector<T>, x: &[T]) -> Result<Vec<T>> {
    check_len(spec.param_count(), w.len(), "weight vector length")?;
    check_len(spec.n_inputs(), x.len(), "network input")?;
    let mut h = x.to_vec();
    for l in 0..spec.n_layers() {
        let (mat, b) = w.layer(spec, l);
        let act = spec.activation(l);
        h = mat
            .rows()
            .into_iter()
            .zip(b)
            .map(|(row, bi)| activate(act, row.iter().zip(&h).map(|(a, x)| *a * *x).sum::<T>() + *bi))
            .collect();
    }
    Ok(h)
}

/// Batched evaluation of `[N × n_in]` inputs to `[N × n_out]` outputs.
///
/// Each row is summed in the same order as [`forward`], so both agree bit for bit.
pub fn forward_batch<T: Scalar>(spec: &MlpSpec, w: &[T], x: ArrayView2<'_, T>) -> Result<Array2<T>> {
    check_len(spec.param_count(), w.len(), "weight vector length")?;
    check_len(spec.n_inputs(), x.ncols(), "network input width")?;
    let n = x.nrows();
    let mut h: Vec<T> = x.iter().copied().collect();
    for l in 0..spec.n_layers() {
        let (n_in, n_out) = (spec.layer_sizes[l], spec.layer_sizes[l + 1]);
        let (wo, bo) = spec.offsets()[l];
        let (mat, b) = (&w[wo..bo], &w[bo..bo + n_out]);
        let act = spec.activation(l);
        let mut next = vec![T::zero(); n * n_out];
        for (xi, yi) in h.chunks_exact(n_in).zip(next.chunks_exact_mut(n_out)) {
            for ((y, row), bi) in yi.iter_mut().zip(mat.chunks_exact(n_in)).zip(b) {
                *y = activate(act, row.iter().zip(xi).map(|(a, x)| *a * *x).sum::<T>() + *bi);
            }
        }
        h = next;
    }
    Ok(Array2::from_shape_vec((n, spec.n_outputs()), h).expect("batch shape"))
}

/// Outputs and exact input derivatives at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct InputDerivatives<T> {
    pub outputs: Vec<T>,
    /// `first[i][o] = ∂out_o / ∂x_i`.
    pub first: Vec<Vec<T>>,
    /// `second[o] = ∂²out_o / ∂x_axis²`.
    pub second: Vec<T>,
}

pub fn input_derivatives<T: Scalar>(
    spec: &MlpSpec,
    w: &WeightVector<T>,
    x: &[T],
    axis: usize,
) -> Result<InputDerivatives<T>> {
    check_len(spec.n_inputs(), x.len(), "network input")?;
    if axis >= spec.n_inputs() {
        return Err(Error::validation(format!("second-derivative axis {axis} out of range")));
    }
    let xs = ArrayView2::from_shape((1, x.len()), x).expect("row");
    let jets = JetBatch::forward(spec, &w.0, xs, JetMode::Second { axis })?;
    let n_out = spec.n_outputs();
    let first = (0..spec.n_inputs())
        .map(|i| jets.first(i).row(0).to_vec())
        .collect();
    debug_assert_eq!(jets.value().ncols(), n_out);
    Ok(InputDerivatives {
        outputs: jets.value().row(0).to_vec(),
        first,
        second: jets.second().row(0).to_vec(),
    })
}

/// Concatenates several flat vectors; used for the three sector networks.
pub fn concat<T: Scalar>(parts: &[&[T]]) -> Vec<T> {
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}

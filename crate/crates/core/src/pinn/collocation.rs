use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SECTORS;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct CollocationCounts {
    pub interior: usize,
    pub inlet: usize,
    pub interface: usize,
    pub neumann: usize,
}

impl Default for CollocationCounts {
    fn default() -> Self {
        Self {
            interior: 1024,
            inlet: 128,
            interface: 128,
            neumann: 64,
        }
    }
}

/// One rotational interface: the metal of `left` at φ = 1 meets the metal of
/// `right` at φ = 0. `flip` reverses z across the interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interface {
    pub left: usize,
    pub right: usize,
    pub flip: bool,
}

/// Sector 3 → 1 (flipped), 1 → 2 (flipped), 2 → 3 (straight).
pub const INTERFACES: [Interface; 3] = [
    Interface {
        left: 2,
        right: 0,
        flip: true,
    },
    Interface {
        left: 0,
        right: 1,
        flip: true,
    },
    Interface {
        left: 1,
        right: 2,
        flip: false,
    },
];

/// Training points in the unit square of each sector.
#[derive(Debug, Clone, PartialEq)]
pub struct CollocationSet<T> {
    /// `[N × 2]` (φ, z) interior points, shared by all sectors.
    pub interior: Array2<T>,
    /// φ positions of the inlet points (z = 0).
    pub inlet_phi: Vec<T>,
    /// z positions on the left side of each interface; the right side sits at
    /// `1 − z` when the interface flips, `z` otherwise.
    pub interface_z: Vec<T>,
    /// φ positions of the Neumann points, used at both z = 0 and z = 1.
    pub neumann_phi: Vec<T>,
    pub seed: u64,
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += (i % base) as f64 * f;
        i /= base;
        f *= inv;
    }
    inv = r;
    inv
}

/// Halton points in bases 2 and 3 with a seeded toroidal shift.
fn shifted_halton(n: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let shift: [f64; 2] = [rng.gen(), rng.gen()];
    (1..=n as u64)
        .map(|i| {
            [
                (radical_inverse(i, 2) + shift[0]).fract(),
                (radical_inverse(i, 3) + shift[1]).fract(),
            ]
        })
        .collect()
}

/// One jittered point per equal stratum of [0, 1].
fn stratified(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|i| (i as f64 + rng.gen::<f64>()) / n as f64).collect()
}

impl<T: Scalar> CollocationSet<T> {
    pub fn generate(counts: &CollocationCounts, seed: u64) -> Result<Self> {
        if counts.interior == 0 || counts.inlet == 0 || counts.interface == 0 || counts.neumann == 0 {
            return Err(Error::validation("every collocation family needs at least one point"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_c011_0ca7_1000);
        let pts = shifted_halton(counts.interior, &mut rng);
        let interior = Array2::from_shape_fn((counts.interior, 2), |(i, c)| T::of(pts[i][c]));
        let conv = |v: Vec<f64>| v.into_iter().map(T::of).collect::<Vec<T>>();
        Ok(Self {
            interior,
            inlet_phi: conv(stratified(counts.inlet, &mut rng)),
            interface_z: conv(stratified(counts.interface, &mut rng)),
            neumann_phi: conv(stratified(counts.neumann, &mut rng)),
            seed,
        })
    }

    pub fn counts(&self) -> CollocationCounts {
        CollocationCounts {
            interior: self.interior.nrows(),
            inlet: self.inlet_phi.len(),
            interface: self.interface_z.len(),
            neumann: self.neumann_phi.len(),
        }
    }

    /// z on the right side of interface `iface` for left-side z value `z`.
    pub fn partner_z(iface: &Interface, z: T) -> T {
        if iface.flip {
            T::one() - z
        } else {
            z
        }
    }
}

/// Row ranges of one sector's stacked evaluation batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Layout {
    pub interior: (usize, usize),
    pub inlet: (usize, usize),
    /// Rows of this sector's side for each of the three interfaces, if it takes part.
    pub interface: [Option<(usize, usize)>; 3],
    pub neumann_bottom: (usize, usize),
    pub neumann_top: (usize, usize),
    pub total: usize,
}

/// Stacks every point sector `j` is evaluated at into one `[N × 2]` batch.
pub(crate) fn sector_batch<T: Scalar>(c: &CollocationSet<T>, j: usize) -> (Array2<T>, Layout) {
    let mut rows: Vec<[T; 2]> = c.interior.rows().into_iter().map(|r| [r[0], r[1]]).collect();
    let interior = (0, rows.len());
    let start = rows.len();
    rows.extend(c.inlet_phi.iter().map(|p| [*p, T::zero()]));
    let inlet = (start, rows.len());
    let mut interface = [None; 3];
    for (k, iface) in INTERFACES.iter().enumerate() {
        let start = rows.len();
        if iface.left == j {
            rows.extend(c.interface_z.iter().map(|z| [T::one(), *z]));
        } else if iface.right == j {
            rows.extend(
                c.interface_z
                    .iter()
                    .map(|z| [T::zero(), CollocationSet::partner_z(iface, *z)]),
            );
        } else {
            continue;
        }
        interface[k] = Some((start, rows.len()));
    }
    let start = rows.len();
    rows.extend(c.neumann_phi.iter().map(|p| [*p, T::zero()]));
    let neumann_bottom = (start, rows.len());
    rows.extend(c.neumann_phi.iter().map(|p| [*p, T::one()]));
    let neumann_top = (neumann_bottom.1, rows.len());
    let total = rows.len();
    let batch = Array2::from_shape_fn((total, 2), |(i, c)| rows[i][c]);
    debug_assert!(SECTORS == 3);
    (
        batch,
        Layout {
            interior,
            inlet,
            interface,
            neumann_bottom,
            neumann_top,
            total,
        },
    )
}

//! Minimal neural-network toolkit: an autodiff tape, parameter
//! storage, AdamW with a one-cycle schedule, and shared initializers.

pub mod optim;
pub mod tape;

pub use optim::{AdamW, AdamWConfig, OneCycle};
pub use tape::{finite_difference, ParamStore, Tape, V};

use ndarray::Array2;
use rand::prelude::*;

/// Glorot-uniform initialization.
pub fn glorot(rng: &mut impl Rng, rows: usize, cols: usize) -> Array2<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-limit..limit))
}

/// Affine map y = x W + b with b broadcast over rows.
pub fn linear(tape: &mut Tape, store: &ParamStore, w: usize, b: usize, x: V) -> V {
    let wv = tape.param(store, w);
    let bv = tape.param(store, b);
    let xw = tape.matmul(x, wv);
    let n = tape.shape(xw).0;
    let bb = tape.broadcast_row(bv, n);
    tape.add(xw, bb)
}

/// Add a linear layer's parameters to the store, returning (w, b) slots.
pub fn add_linear(
    store: &mut ParamStore,
    rng: &mut impl Rng,
    name: &str,
    fan_in: usize,
    fan_out: usize,
) -> (usize, usize) {
    let w = store.add(format!("{name}.w"), glorot(rng, fan_in, fan_out));
    let b = store.add(format!("{name}.b"), Array2::zeros((1, fan_out)));
    (w, b)
}

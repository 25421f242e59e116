//! Reverse-mode automatic differentiation over dense f64 matrices.
//!
//! A `Tape` records the forward computation; `backward` replays it in
//! reverse. Scalars are 1x1 matrices. Stop-gradient semantics are
//! explicit: `constant` nodes block flow entirely and
//! `straight_through` copies gradients past a value substitution, which
//! is exactly what the quantizer contract needs.

use ndarray::{s, Array2, Axis};

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct V(pub usize);

type BackFn = Box<dyn Fn(&[Array2<f64>], &Array2<f64>, &mut [Array2<f64>])>;

enum Back {
    Leaf,
    Op(BackFn),
}

/// Accumulate an owned contribution into a lazily allocated gradient
/// buffer; the first contribution is moved in rather than added.
fn acc(grads: &mut [Array2<f64>], i: usize, x: Array2<f64>) {
    if grads[i].is_empty() {
        grads[i] = x;
    } else {
        grads[i] += &x;
    }
}

fn acc_ref(grads: &mut [Array2<f64>], i: usize, x: &Array2<f64>) {
    if grads[i].is_empty() {
        grads[i] = x.clone();
    } else {
        grads[i] += x;
    }
}

fn acc_neg(grads: &mut [Array2<f64>], i: usize, x: &Array2<f64>) {
    if grads[i].is_empty() {
        grads[i] = x.mapv(|v| -v);
    } else {
        grads[i] -= x;
    }
}

pub struct Tape {
    values: Vec<Array2<f64>>,
    backs: Vec<Back>,
    grads: Vec<Array2<f64>>,
    /// (param slot, node) pairs for leaves created from a parameter store.
    param_leaves: Vec<(usize, V)>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            values: Vec::new(),
            backs: Vec::new(),
            grads: Vec::new(),
            param_leaves: Vec::new(),
        }
    }

    fn push(&mut self, value: Array2<f64>, back: Back) -> V {
        self.values.push(value);
        self.backs.push(back);
        V(self.values.len() - 1)
    }

    /// Leaf with no gradient flow.
    pub fn constant(&mut self, value: Array2<f64>) -> V {
        self.push(value, Back::Leaf)
    }

    /// Leaf bound to a parameter-store slot; gradients are collected by
    /// [`Tape::param_grads`].
    pub fn param(&mut self, store: &ParamStore, slot: usize) -> V {
        let v = self.push(store.params[slot].clone(), Back::Leaf);
        self.param_leaves.push((slot, v));
        v
    }

    pub fn value(&self, v: V) -> &Array2<f64> {
        &self.values[v.0]
    }

    /// Gradient at a node after [`Tape::backward`]; nodes the loss does
    /// not depend on report all zeros.
    pub fn grad(&self, v: V) -> Array2<f64> {
        if self.grads[v.0].is_empty() {
            Array2::zeros(self.values[v.0].raw_dim())
        } else {
            self.grads[v.0].clone()
        }
    }

    pub fn shape(&self, v: V) -> (usize, usize) {
        let val = &self.values[v.0];
        (val.nrows(), val.ncols())
    }

    // ---- elementwise ----

    pub fn add(&mut self, a: V, b: V) -> V {
        let val = &self.values[a.0] + &self.values[b.0];
        let (ai, bi) = (a.0, b.0);
        self.push(
            val,
            Back::Op(Box::new(move |_, g, grads| {
                acc_ref(grads, ai, g);
                acc_ref(grads, bi, g);
            })),
        )
    }

    pub fn sub(&mut self, a: V, b: V) -> V {
        let val = &self.values[a.0] - &self.values[b.0];
        let (ai, bi) = (a.0, b.0);
        self.push(
            val,
            Back::Op(Box::new(move |_, g, grads| {
                acc_ref(grads, ai, g);
                acc_neg(grads, bi, g);
            })),
        )
    }

    pub fn mul(&mut self, a: V, b: V) -> V {
        let val = &self.values[a.0] * &self.values[b.0];
        let (ai, bi) = (a.0, b.0);
        self.push(
            val,
            Back::Op(Box::new(move |vals, g, grads| {
                acc(grads, ai, g * &vals[bi]);
                acc(grads, bi, g * &vals[ai]);
            })),
        )
    }

    pub fn div(&mut self, a: V, b: V) -> V {
        let val = &self.values[a.0] / &self.values[b.0];
        let (ai, bi) = (a.0, b.0);
        self.push(
            val,
            Back::Op(Box::new(move |vals, g, grads| {
                acc(grads, ai, g / &vals[bi]);
                acc_neg(grads, bi, &(g * &vals[ai] / (&vals[bi] * &vals[bi])));
            })),
        )
    }

    pub fn neg(&mut self, a: V) -> V {
        let val = -&self.values[a.0];
        let ai = a.0;
        self.push(
            val,
            Back::Op(Box::new(move |_, g, grads| {
                acc_neg(grads, ai, g);
            })),
        )
    }

    pub fn add_scalar(&mut self, a: V, c: f64) -> V {
        let val = &self.values[a.0] + c;
        let ai = a.0;
        self.push(
            val,
            Back::Op(Box::new(move |_, g, grads| {
                acc_ref(grads, ai, g);
            })),
        )
    }

    pub fn mul_scalar(&mut self, a: V, c: f64) -> V {
        let val = &self.values[a.0] * c;
        let ai = a.0;
        self.push(
            val,
            Back::Op(Box::new(move |_, g, grads| {
                acc(grads, ai, g * c);
            })),
        )
    }

    pub fn mul_const(&mut self, a: V, c: Array2<f64>) -> V {
        let val = &self.values[a.0] * &c;
        let ai = a.0;
        self.push(
            val,
            Back::Op(Box::new(move |_, g, grads| {
                acc(grads, ai, g * &c);
            })),
        )
    }

    pub fn relu(&mut self, a: V) -> V {
        let val = self.values[a.0].mapv(|x| x.max(0.0));
        let ai = a.0;
        self.push(
            val,
            Back::Op(Box::new(move |vals, g, grads| {
                let mask = vals[ai].mapv(|x| if x > 0.0 { 1.0 } else { 0.0 });
                acc(grads, ai, g * &mask);
            })),
        )
    }

    pub fn leaky_relu(&mut self, a: V, slope: f64) -> V {
        let val = self.values[a.0].mapv(|x| if x > 0.0 { x } else { slope * x });
        let ai = a.0;
        self.push(
            val,
            Back::Op(Box::new(move |vals, g, grads| {
                let mask = vals[ai].mapv(|x| if x > 0.0 { 1.0 } else { slope });
                acc(grads, ai, g * &mask);
            })),
        )
    }

    pub fn sigmoid(&mut self, a: V) -> V {
        let val = self.values[a.0].mapv(|x| 1.0 / (1.0 + (-x).exp()));
        let ai = a.0;
        let out = self.push(val, Back::Leaf);
        let oi = out.0;
        self.backs[oi] = Back::Op(Box::new(move |vals, g, grads| {
            let s = &vals[oi];
            acc(grads, ai, g * s * &s.mapv(|x| 1.0 - x));
        }));
        out
    }

    pub fn sqrt(&mut self, a: V) -> V {
        let val = self.values[a.0].mapv(f64::sqrt);
        let ai = a.0;
        self.push(
            val,
            Back::Op(Box::new(move |vals, g, grads| {
                acc(grads, ai, g * &vals[ai].mapv(|x| 0.5 / x.sqrt().max(1e-12)));
            })),
        )
    }

    pub fn square(&mut self, a: V) -> V {
        let val = self.values[a.0].mapv(|x| x * x);
        let ai = a.0;
        self.push(
            val,
            Back::Op(Box::new(move |vals, g, grads| {
                acc(grads, ai, g * &vals[ai] * 2.0);
            })),
        )
    }

    /// Elementwise power with a constant nonnegative exponent; inputs
    /// are clamped at zero (used for (1 - cosine)^gamma terms).
    pub fn pow_const(&mut self, a: V, p: f64) -> V {
        let val = self.values[a.0].mapv(|x| x.max(0.0).powf(p));
        let ai = a.0;
        self.push(
            val,
            Back::Op(Box::new(move |vals, g, grads| {
                let d = vals[ai].mapv(|x| {
                    let x = x.max(0.0);
                    if x == 0.0 && p < 1.0 {
                        0.0
                    } else {
                        p * x.powf(p - 1.0)
                    }
                });
                acc(grads, ai, g * &d);
            })),
        )
    }

    pub fn abs(&mut self, a: V) -> V {
        let val = self.values[a.0].mapv(f64::abs);
        let ai = a.0;
        self.push(
            val,
            Back::Op(Box::new(move |vals, g, grads| {
                let sign = vals[ai].mapv(|x| {
                    if x > 0.0 {
                        1.0
                    } else if x < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                });
                acc(grads, ai, g * &sign);
            })),
        )
    }

    /// Natural log with the input clamped below at `floor`.
    pub fn log_clamped(&mut self, a: V, floor: f64) -> V {
        let val = self.values[a.0].mapv(|x| x.max(floor).ln());
        let ai = a.0;
        self.push(
            val,
            Back::Op(Box::new(move |vals, g, grads| {
                let d = vals[ai].mapv(|x| if x > floor { 1.0 / x } else { 0.0 });
                acc(grads, ai, g * &d);
            })),
        )
    }

    // ---- matrix products ----

    pub fn matmul(&mut self, a: V, b: V) -> V {
        let val = self.values[a.0].dot(&self.values[b.0]);
        let (ai, bi) = (a.0, b.0);
        self.push(
            val,
            Back::Op(Box::new(move |vals, g, grads| {
                acc(grads, ai, g.dot(&vals[bi].t()));
                acc(grads, bi, vals[ai].t().dot(g));
            })),
        )
    }

    /// C = A^T B (used for attention pooling without a transpose node).
    pub fn matmul_tn(&mut self, a: V, b: V) -> V {
        let val = self.values[a.0].t().dot(&self.values[b.0]);
        let (ai, bi) = (a.0, b.0);
        self.push(
            val,
            Back::Op(Box::new(move |vals, g, grads| {
                acc(grads, ai, vals[bi].dot(&g.t()));
                acc(grads, bi, vals[ai].dot(g));
            })),
        )
    }

    /// C = A B^T (Gram-style products).
    pub fn matmul_nt(&mut self, a: V, b: V) -> V {
        let val = self.values[a.0].dot(&self.values[b.0].t());
        let (ai, bi) = (a.0, b.0);
        self.push(
            val,
            Back::Op(Box::new(move |vals, g, grads| {
                acc(grads, ai, g.dot(&vals[bi]));
                acc(grads, bi, g.t().dot(&vals[ai]));
            })),
        )
    }

    /// C = M H with a constant left factor (adjacency matrices).
    pub fn matmul_const_left(&mut self, m: Array2<f64>, h: V) -> V {
        let val = m.dot(&self.values[h.0]);
        let hi = h.0;
        self.push(
            val,
            Back::Op(Box::new(move |_, g, grads| {
                acc(grads, hi, m.t().dot(g));
            })),
        )
    }

    // ---- reductions and broadcasts ----

    pub fn sum_all(&mut self, a: V) -> V {
        let s = self.values[a.0].sum();
        let ai = a.0;
        self.push(
            Array2::from_elem((1, 1), s),
            Back::Op(Box::new(move |vals, g, grads| {
                let gs = g[[0, 0]];
                acc(grads, ai, Array2::from_elem(vals[ai].raw_dim(), gs));
            })),
        )
    }

    pub fn mean_all(&mut self, a: V) -> V {
        let n = self.values[a.0].len() as f64;
        let s = self.sum_all(a);
        self.mul_scalar(s, 1.0 / n)
    }

    /// Column sums: (N, d) -> (1, d).
    pub fn sum_rows(&mut self, a: V) -> V {
        let val = self.values[a.0].sum_axis(Axis(0)).insert_axis(Axis(0));
        let ai = a.0;
        self.push(
            val,
            Back::Op(Box::new(move |vals, g, grads| {
                let n = vals[ai].nrows();
                let mut ga = Array2::zeros(vals[ai].raw_dim());
                for i in 0..n {
                    ga.row_mut(i).assign(&g.row(0));
                }
                acc(grads, ai, ga);
            })),
        )
    }

    /// Row sums: (N, d) -> (N, 1).
    pub fn sum_cols(&mut self, a: V) -> V {
        let val = self.values[a.0].sum_axis(Axis(1)).insert_axis(Axis(1));
        let ai = a.0;
        self.push(
            val,
            Back::Op(Box::new(move |vals, g, grads| {
                let d = vals[ai].ncols();
                let mut ga = Array2::zeros(vals[ai].raw_dim());
                for j in 0..d {
                    ga.column_mut(j).assign(&g.column(0));
                }
                acc(grads, ai, ga);
            })),
        )
    }

    /// (1, d) -> (n, d).
    pub fn broadcast_row(&mut self, a: V, n: usize) -> V {
        let src = &self.values[a.0];
        assert_eq!(src.nrows(), 1);
        let mut val = Array2::zeros((n, src.ncols()));
        for i in 0..n {
            val.row_mut(i).assign(&src.row(0));
        }
        let ai = a.0;
        self.push(
            val,
            Back::Op(Box::new(move |_, g, grads| {
                let col_sum = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                acc(grads, ai, col_sum);
            })),
        )
    }

    /// (n, 1) -> (n, d).
    pub fn broadcast_col(&mut self, a: V, d: usize) -> V {
        let src = &self.values[a.0];
        assert_eq!(src.ncols(), 1);
        let mut val = Array2::zeros((src.nrows(), d));
        for j in 0..d {
            val.column_mut(j).assign(&src.column(0));
        }
        let ai = a.0;
        self.push(
            val,
            Back::Op(Box::new(move |_, g, grads| {
                let row_sum = g.sum_axis(Axis(1)).insert_axis(Axis(1));
                acc(grads, ai, row_sum);
            })),
        )
    }

    // ---- structure ops ----

    pub fn concat_cols(&mut self, parts: &[V]) -> V {
        let n = self.values[parts[0].0].nrows();
        let widths: Vec<usize> = parts.iter().map(|p| self.values[p.0].ncols()).collect();
        let total: usize = widths.iter().sum();
        let mut val = Array2::zeros((n, total));
        let mut off = 0;
        for (p, w) in parts.iter().zip(&widths) {
            val.slice_mut(s![.., off..off + w]).assign(&self.values[p.0]);
            off += w;
        }
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        let widths_c = widths.clone();
        self.push(
            val,
            Back::Op(Box::new(move |_, g, grads| {
                let mut off = 0;
                for (&id, &w) in ids.iter().zip(&widths_c) {
                    let gp = g.slice(s![.., off..off + w]).to_owned();
                    acc(grads, id, gp);
                    off += w;
                }
            })),
        )
    }

    pub fn slice_cols(&mut self, a: V, from: usize, to: usize) -> V {
        let val = self.values[a.0].slice(s![.., from..to]).to_owned();
        let ai = a.0;
        self.push(
            val,
            Back::Op(Box::new(move |vals, g, grads| {
                let mut ga = Array2::zeros(vals[ai].raw_dim());
                ga.slice_mut(s![.., from..to]).assign(g);
                acc(grads, ai, ga);
            })),
        )
    }

    pub fn gather_rows(&mut self, a: V, indices: Vec<usize>) -> V {
        let src = &self.values[a.0];
        let mut val = Array2::zeros((indices.len(), src.ncols()));
        for (p, &i) in indices.iter().enumerate() {
            val.row_mut(p).assign(&src.row(i));
        }
        let ai = a.0;
        self.push(
            val,
            Back::Op(Box::new(move |vals, g, grads| {
                let mut ga = Array2::zeros(vals[ai].raw_dim());
                for (p, &i) in indices.iter().enumerate() {
                    let mut row = ga.row_mut(i);
                    row += &g.row(p);
                }
                acc(grads, ai, ga);
            })),
        )
    }

    /// Scatter-add rows of `src` (P, d) into an (n, d) output at `indices`.
    pub fn scatter_add_rows(&mut self, src: V, indices: Vec<usize>, n: usize) -> V {
        let s_val = &self.values[src.0];
        let mut val = Array2::zeros((n, s_val.ncols()));
        for (p, &i) in indices.iter().enumerate() {
            let mut row = val.row_mut(i);
            row += &s_val.row(p);
        }
        let si = src.0;
        self.push(
            val,
            Back::Op(Box::new(move |vals, g, grads| {
                let mut gs = Array2::zeros(vals[si].raw_dim());
                for (p, &i) in indices.iter().enumerate() {
                    gs.row_mut(p).assign(&g.row(i));
                }
                acc(grads, si, gs);
            })),
        )
    }

    /// Scatter per-pair values (P, 1) into a symmetric (n, n) matrix.
    pub fn pairs_to_symmetric(&mut self, src: V, pairs: Vec<(usize, usize)>, n: usize) -> V {
        let s_val = &self.values[src.0];
        assert_eq!(s_val.ncols(), 1);
        let mut val = Array2::zeros((n, n));
        for (p, &(i, j)) in pairs.iter().enumerate() {
            val[[i, j]] = s_val[[p, 0]];
            val[[j, i]] = s_val[[p, 0]];
        }
        let si = src.0;
        self.push(
            val,
            Back::Op(Box::new(move |vals, g, grads| {
                let mut gs = Array2::zeros(vals[si].raw_dim());
                for (p, &(i, j)) in pairs.iter().enumerate() {
                    gs[[p, 0]] = g[[i, j]] + g[[j, i]];
                }
                acc(grads, si, gs);
            })),
        )
    }

    pub fn pick(&mut self, a: V, i: usize, j: usize) -> V {
        let x = self.values[a.0][[i, j]];
        let ai = a.0;
        self.push(
            Array2::from_elem((1, 1), x),
            Back::Op(Box::new(move |vals, g, grads| {
                let mut ga = Array2::zeros(vals[ai].raw_dim());
                ga[[i, j]] = g[[0, 0]];
                acc(grads, ai, ga);
            })),
        )
    }

    // ---- softmax family ----

    pub fn softmax_rows(&mut self, a: V) -> V {
        let mut val = self.values[a.0].clone();
        for mut row in val.rows_mut() {
            let m = row.iter().cloned().fold(f64::MIN, f64::max);
            row.mapv_inplace(|x| (x - m).exp());
            let s = row.sum();
            row.mapv_inplace(|x| x / s);
        }
        let ai = a.0;
        let out = self.push(val, Back::Leaf);
        let oi = out.0;
        self.backs[oi] = Back::Op(Box::new(move |vals, g, grads| {
            let sm = &vals[oi];
            let dot = (g * sm).sum_axis(Axis(1)).insert_axis(Axis(1));
            acc(grads, ai, sm * &(g - &dot));
        }));
        out
    }

    pub fn log_softmax_rows(&mut self, a: V) -> V {
        let mut val = self.values[a.0].clone();
        for mut row in val.rows_mut() {
            let m = row.iter().cloned().fold(f64::MIN, f64::max);
            let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
            row.mapv_inplace(|x| x - lse);
        }
        let ai = a.0;
        let out = self.push(val, Back::Leaf);
        let oi = out.0;
        self.backs[oi] = Back::Op(Box::new(move |vals, g, grads| {
            let sm = vals[oi].mapv(f64::exp);
            let gsum = g.sum_axis(Axis(1)).insert_axis(Axis(1));
            acc(grads, ai, g - &(&sm * &gsum));
        }));
        out
    }

    // ---- quantization support ----

    /// Forward value is `substitute`; the gradient passes to `z`
    /// unchanged (Straight-through).
    pub fn straight_through(&mut self, z: V, substitute: Array2<f64>) -> V {
        assert_eq!(substitute.raw_dim(), self.values[z.0].raw_dim());
        let zi = z.0;
        self.push(
            substitute,
            Back::Op(Box::new(move |_, g, grads| {
                acc_ref(grads, zi, g);
            })),
        )
    }

    /// Re-enter a node's current value as a constant (stop-gradient).
    pub fn detach(&mut self, a: V) -> V {
        let val = self.values[a.0].clone();
        self.constant(val)
    }

    // ---- backward ----

    /// Run reverse accumulation from a scalar node.
    pub fn backward(&mut self, loss: V) {
        assert_eq!(self.shape(loss), (1, 1), "backward needs a scalar");
        // Grad buffers stay empty until a contribution arrives; a node
        // whose buffer is still empty when visited is dead with respect
        // to the loss and its closure is skipped.
        self.grads = vec![Array2::zeros((0, 0)); self.values.len()];
        self.grads[loss.0] = Array2::ones((1, 1));
        for i in (0..self.values.len()).rev() {
            if let Back::Op(f) = &self.backs[i] {
                let g = std::mem::replace(&mut self.grads[i], Array2::zeros((0, 0)));
                if g.is_empty() {
                    continue;
                }
                f(&self.values, &g, &mut self.grads);
                self.grads[i] = g;
            }
        }
    }

    /// Accumulated gradients per parameter slot, summed over all leaves
    /// bound to the same slot.
    pub fn param_grads(&self, store: &ParamStore) -> Vec<Array2<f64>> {
        let mut out: Vec<Array2<f64>> = store
            .params
            .iter()
            .map(|p| Array2::zeros(p.raw_dim()))
            .collect();
        for &(slot, v) in &self.param_leaves {
            if !self.grads[v.0].is_empty() {
                out[slot] += &self.grads[v.0];
            }
        }
        out
    }
}

/// Flat parameter storage for a model; slots are dense indices.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    pub params: Vec<Array2<f64>>,
    pub names: Vec<String>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore {
            params: Vec::new(),
            names: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Array2<f64>) -> usize {
        self.params.push(value);
        self.names.push(name.into());
        self.params.len() - 1
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn total_scalars(&self) -> usize {
        self.params.iter().map(|p| p.len()).sum()
    }
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

/// Central finite difference of a scalar function with respect to one
/// entry of one parameter slot.
pub fn finite_difference<F>(store: &mut ParamStore, slot: usize, idx: (usize, usize), h: f64, mut f: F) -> f64
where
    F: FnMut(&ParamStore) -> f64,
{
    let orig = store.params[slot][[idx.0, idx.1]];
    store.params[slot][[idx.0, idx.1]] = orig + h;
    let fp = f(store);
    store.params[slot][[idx.0, idx.1]] = orig - h;
    let fm = f(store);
    store.params[slot][[idx.0, idx.1]] = orig;
    (fp - fm) / (2.0 * h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn rand_mat(rng: &mut impl Rng, n: usize, d: usize) -> Array2<f64> {
        Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.0..1.0))
    }

    /// Generic gradient check: build a scalar loss from the store and
    /// compare every analytic gradient entry against central FD.
    fn grad_check<F>(store: &mut ParamStore, f: F, tol: f64)
    where
        F: Fn(&mut Tape, &ParamStore) -> V + Copy,
    {
        let mut tape = Tape::new();
        let loss = f(&mut tape, store);
        tape.backward(loss);
        let analytic = tape.param_grads(store);
        for slot in 0..store.len() {
            let (n, d) = (store.params[slot].nrows(), store.params[slot].ncols());
            for i in 0..n {
                for j in 0..d {
                    let fd = finite_difference(store, slot, (i, j), 1e-6, |s| {
                        let mut t = Tape::new();
                        let l = f(&mut t, s);
                        t.value(l)[[0, 0]]
                    });
                    let an = analytic[slot][[i, j]];
                    let denom = fd.abs().max(an.abs()).max(1e-6);
                    assert!(
                        (fd - an).abs() / denom < tol,
                        "slot {slot} ({},{}) fd={fd} analytic={an}",
                        i,
                        j
                    );
                }
            }
        }
    }

    #[test]
    fn matmul_chain_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        store.add("a", rand_mat(&mut rng, 3, 4));
        store.add("b", rand_mat(&mut rng, 4, 2));
        grad_check(
            &mut store,
            |t, s| {
                let a = t.param(s, 0);
                let b = t.param(s, 1);
                let c = t.matmul(a, b);
                let r = t.relu(c);
                t.sum_all(r)
            },
            1e-5,
        );
    }

    #[test]
    fn elementwise_and_reduction_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParamStore::new();
        store.add("x", rand_mat(&mut rng, 4, 3).mapv(|v| v + 2.5)); // keep positive
        store.add("y", rand_mat(&mut rng, 4, 3).mapv(|v| v + 2.5));
        grad_check(
            &mut store,
            |t, s| {
                let x = t.param(s, 0);
                let y = t.param(s, 1);
                let q = t.div(x, y);
                let sq = t.sqrt(q);
                let lg = t.log_clamped(sq, 1e-12);
                let sg = t.sigmoid(lg);
                let p = t.pow_const(sg, 1.7);
                t.mean_all(p)
            },
            1e-4,
        );
    }

    #[test]
    fn softmax_and_pick_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        store.add("x", rand_mat(&mut rng, 3, 5));
        grad_check(
            &mut store,
            |t, s| {
                let x = t.param(s, 0);
                let ls = t.log_softmax_rows(x);
                let p0 = t.pick(ls, 0, 2);
                let sm = t.softmax_rows(x);
                let p1 = t.pick(sm, 2, 4);
                let su = t.add(p0, p1);
                t.sum_all(su)
            },
            1e-5,
        );
    }

    #[test]
    fn structural_op_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut store = ParamStore::new();
        store.add("h", rand_mat(&mut rng, 4, 3));
        store.add("e", rand_mat(&mut rng, 3, 2));
        grad_check(
            &mut store,
            |t, s| {
                let h = t.param(s, 0);
                let e = t.param(s, 1);
                let gi = t.gather_rows(h, vec![0, 2, 3]);
                let cat = t.concat_cols(&[gi, e]);
                let sc = t.scatter_add_rows(cat, vec![1, 0, 1], 4);
                let sl = t.slice_cols(sc, 1, 4);
                let sr = t.sum_rows(sl);
                let br = t.broadcast_row(sr, 2);
                let sc2 = t.sum_cols(br);
                let bc = t.broadcast_col(sc2, 3);
                let sq = t.square(bc);
                t.sum_all(sq)
            },
            1e-5,
        );
    }

    #[test]
    fn matmul_nt_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut store = ParamStore::new();
        store.add("a", rand_mat(&mut rng, 3, 4));
        store.add("b", rand_mat(&mut rng, 2, 4));
        grad_check(
            &mut store,
            |t, s| {
                let a = t.param(s, 0);
                let b = t.param(s, 1);
                let c = t.matmul_nt(a, b);
                let sq = t.square(c);
                t.sum_all(sq)
            },
            1e-5,
        );
    }

    #[test]
    fn pairs_and_tn_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = ParamStore::new();
        store.add("p", rand_mat(&mut rng, 3, 1));
        store.add("h", rand_mat(&mut rng, 3, 2));
        store.add("gate", rand_mat(&mut rng, 3, 1));
        grad_check(
            &mut store,
            |t, s| {
                let p = t.param(s, 0);
                let h = t.param(s, 1);
                let gate = t.param(s, 2);
                let a = t.pairs_to_symmetric(p, vec![(0, 1), (1, 2), (0, 2)], 3);
                let ah = t.matmul(a, h);
                let pooled = t.matmul_tn(gate, ah);
                let ab = t.abs(pooled);
                t.sum_all(ab)
            },
            1e-5,
        );
    }

    #[test]
    fn straight_through_passes_identity_gradient() {
        let mut tape = Tape::new();
        let z = tape.constant(array![[1.0, 2.0], [3.0, 4.0]]);
        let q = array![[1.5, 1.5], [2.5, 2.5]];
        let zq = tape.straight_through(z, q.clone());
        assert_eq!(tape.value(zq), &q);
        let sq = tape.square(zq);
        let loss = tape.sum_all(sq);
        tape.backward(loss);
        // d(sum q^2)/dz via straight-through = 2q
        assert_eq!(tape.grad(z), q.mapv(|x| 2.0 * x));
    }

    #[test]
    fn detach_blocks_gradient() {
        let mut tape = Tape::new();
        let x = tape.constant(array![[2.0]]);
        let d = tape.detach(x);
        let y = tape.mul(d, d);
        tape.backward(y);
        assert_eq!(tape.grad(x)[[0, 0]], 0.0);
    }

    #[test]
    fn shared_param_grads_accumulate() {
        let mut store = ParamStore::new();
        store.add("w", array![[3.0]]);
        let mut tape = Tape::new();
        let w1 = tape.param(&store, 0);
        let w2 = tape.param(&store, 0);
        let prod = tape.mul(w1, w2); // w^2
        tape.backward(prod);
        let grads = tape.param_grads(&store);
        assert_eq!(grads[0][[0, 0]], 6.0);
    }
}

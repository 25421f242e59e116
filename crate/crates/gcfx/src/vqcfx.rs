//! The generative counterfactual model: dual conditional graph
//! encoders sharing a label encoder, a vector quantizer with a learned
//! codebook, and an MPNN decoder, trained with the four-term objective
//! against a frozen classifier.

use crate::classifier::ConsensusModel;
use crate::graph::LabeledGraph;
use crate::nn::{add_linear, AdamW, AdamWConfig, OneCycle, ParamStore, Tape, V};
use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const D_LE: usize = 16;
pub const D_LAT: usize = 32;
pub const DECODER_T: usize = 4;
/// Edge representation widths E^0..E^4.
pub const EDGE_WIDTHS: [usize; 5] = [2, 8, 16, 8, 4];

/// Negative slope of the decoder activations. The proximity term keeps
/// a constant pull toward "no edge" even at zero error, which kills
/// plain ReLU units early in training; the leak keeps them trainable.
const LEAK: f64 = 0.1;
/// Node representation widths H^0..H^4.
pub const NODE_WIDTHS: [usize; 5] = [48, 32, 32, 32, 16];

#[derive(Debug, Error)]
pub enum VqCfxError {
    #[error("label {label} out of range (label count {count})")]
    LabelOutOfRange { label: usize, count: usize },
    #[error("feature dimension mismatch: model expects {expected}, graph has {got}")]
    FeatureMismatch { expected: usize, got: usize },
    #[error("empty latent batch")]
    EmptyBatch,
    #[error("empty target set")]
    EmptyTargets,
    #[error("training diverged: total loss is not finite at epoch {0}")]
    Diverged(usize),
    #[error("node count mismatch: {0} vs {1}")]
    NodeCountMismatch(usize, usize),
    #[error("checkpoint format error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VqCfxConfig {
    pub codebook_size: usize,
    pub d_vq: usize,
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    /// Hinge relaxation for the counterfactual proximity term.
    pub theta: f64,
    /// Cosine-dissimilarity exponent, >= 1.
    pub gamma: f64,
    /// Commitment weight inside the VQ loss.
    pub eta: f64,
    /// Orthogonality regularization weight; 0 disables the term.
    pub w_or: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for VqCfxConfig {
    fn default() -> Self {
        VqCfxConfig {
            codebook_size: 1024,
            d_vq: 16,
            alpha1: 1.0,
            alpha2: 1.0,
            alpha3: 1.0,
            theta: 0.1,
            gamma: 2.0,
            eta: 0.25,
            w_or: 5.0,
            epochs: 400,
            batch_size: 128,
            lr: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Factual,
    Counterfactual,
}

#[derive(Debug, Clone)]
struct EncBlock {
    eps: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    gn_alpha: usize,
    gn_gamma: usize,
    gn_beta: usize,
}

#[derive(Debug, Clone)]
struct DecLayer {
    erc_w1: usize,
    erc_b1: usize,
    erc_w2: usize,
    erc_b2: usize,
    msg_w: usize,
    msg_b: usize,
    upd_w: usize,
    upd_b: usize,
}

#[derive(Debug, Clone)]
struct Slots {
    le: usize,
    enc: [Vec<EncBlock>; 2],
    pre: (usize, usize),
    codebook: usize,
    post: (usize, usize),
    h0: (usize, usize),
    dec: Vec<DecLayer>,
    amp: (usize, usize),
    nfp: (usize, usize),
}

#[derive(Debug, Clone)]
pub struct VqCfxModel {
    pub feature_dim: usize,
    pub label_count: usize,
    /// Edge classes = m + 1 (class 0 is "no edge").
    pub edge_classes: usize,
    pub cfg: VqCfxConfig,
    store: ParamStore,
    slots: Slots,
}

/// Orthogonalize the rows of a random matrix (Gram-Schmidt); rows stay
/// distinct by construction.
fn orthogonal_rows(rng: &mut impl Rng, rows: usize, cols: usize) -> Array2<f64> {
    assert!(rows <= cols);
    let mut m = Array2::from_shape_fn((rows, cols), |_| {
        rng.sample::<f64, _>(rand_distr::StandardNormal)
    });
    for i in 0..rows {
        for j in 0..i {
            let dot = m.row(i).dot(&m.row(j));
            let prev = m.row(j).to_owned();
            let mut row = m.row_mut(i);
            row.scaled_add(-dot, &prev);
        }
        let norm = m.row(i).dot(&m.row(i)).sqrt().max(1e-12);
        m.row_mut(i).mapv_inplace(|x| x / norm);
    }
    m
}

impl VqCfxModel {
    pub fn new(
        feature_dim: usize,
        label_count: usize,
        edge_classes: usize,
        cfg: VqCfxConfig,
        rng: &mut impl Rng,
    ) -> Self {
        let mut store = ParamStore::new();
        let le = store.add("le", orthogonal_rows(rng, label_count, D_LE));
        let enc = ["fact", "cf"].map(|side| {
            let mut blocks = Vec::new();
            let mut width = feature_dim + D_LE;
            for l in 0..4 {
                let eps = store.add(format!("{side}.gin{l}.eps"), Array2::zeros((1, 1)));
                let (w1, b1) =
                    add_linear(&mut store, rng, &format!("{side}.gin{l}.fc1"), width, D_LAT);
                let (w2, b2) =
                    add_linear(&mut store, rng, &format!("{side}.gin{l}.fc2"), D_LAT, D_LAT);
                let gn_alpha = store.add(format!("{side}.gn{l}.alpha"), Array2::ones((1, D_LAT)));
                let gn_gamma = store.add(format!("{side}.gn{l}.gamma"), Array2::ones((1, D_LAT)));
                let gn_beta = store.add(format!("{side}.gn{l}.beta"), Array2::zeros((1, D_LAT)));
                blocks.push(EncBlock {
                    eps,
                    w1,
                    b1,
                    w2,
                    b2,
                    gn_alpha,
                    gn_gamma,
                    gn_beta,
                });
                width = D_LAT;
            }
            blocks
        });
        let pre = add_linear(&mut store, rng, "vq.pre", D_LAT, cfg.d_vq);
        let codebook = store.add(
            "vq.codebook",
            Array2::from_shape_fn((cfg.codebook_size, cfg.d_vq), |_| {
                0.1 * rng.sample::<f64, _>(rand_distr::StandardNormal)
            }),
        );
        let post = add_linear(&mut store, rng, "vq.post", cfg.d_vq, D_LAT);
        let h0 = add_linear(&mut store, rng, "dec.h0", D_LAT + D_LE, NODE_WIDTHS[0]);
        let mut dec = Vec::new();
        for t in 1..=DECODER_T {
            let (nw_in, nw_out) = (NODE_WIDTHS[t - 1], NODE_WIDTHS[t]);
            let (ew_in, ew_out) = (EDGE_WIDTHS[t - 1], EDGE_WIDTHS[t]);
            let (erc_w1, erc_b1) = add_linear(
                &mut store,
                rng,
                &format!("dec.erc{t}.fc1"),
                2 * nw_in + ew_in,
                ew_out,
            );
            let (erc_w2, erc_b2) =
                add_linear(&mut store, rng, &format!("dec.erc{t}.fc2"), ew_out, ew_out);
            let (msg_w, msg_b) = add_linear(
                &mut store,
                rng,
                &format!("dec.nrc{t}.msg"),
                nw_in + ew_out,
                nw_out,
            );
            let (upd_w, upd_b) = add_linear(
                &mut store,
                rng,
                &format!("dec.nrc{t}.upd"),
                nw_in + nw_out,
                nw_out,
            );
            dec.push(DecLayer {
                erc_w1,
                erc_b1,
                erc_w2,
                erc_b2,
                msg_w,
                msg_b,
                upd_w,
                upd_b,
            });
        }
        let amp = add_linear(&mut store, rng, "dec.amp", EDGE_WIDTHS[DECODER_T], edge_classes);
        let nfp = add_linear(&mut store, rng, "dec.nfp", NODE_WIDTHS[DECODER_T], feature_dim);
        VqCfxModel {
            feature_dim,
            label_count,
            edge_classes,
            cfg,
            store,
            slots: Slots {
                le,
                enc,
                pre,
                codebook,
                post,
                h0,
                dec,
                amp,
                nfp,
            },
        }
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn codebook(&self) -> &Array2<f64> {
        &self.store.params[self.slots.codebook]
    }

    pub fn set_codebook(&mut self, cb: Array2<f64>) {
        assert_eq!(
            cb.raw_dim(),
            self.store.params[self.slots.codebook].raw_dim()
        );
        self.store.params[self.slots.codebook] = cb;
    }

    pub fn set_label_embedding_row(&mut self, label: usize, row: &[f64]) {
        for (j, &v) in row.iter().enumerate() {
            self.store.params[self.slots.le][[label, j]] = v;
        }
    }

    fn slot(&self, tape: &mut Tape, idx: usize, trainable: bool) -> V {
        if trainable {
            tape.param(&self.store, idx)
        } else {
            tape.constant(self.store.params[idx].clone())
        }
    }

    fn linear(&self, tape: &mut Tape, (w, b): (usize, usize), x: V, trainable: bool) -> V {
        let wv = self.slot(tape, w, trainable);
        let bv = self.slot(tape, b, trainable);
        let xw = tape.matmul(x, wv);
        let n = tape.shape(xw).0;
        let bb = tape.broadcast_row(bv, n);
        tape.add(xw, bb)
    }

    fn graphnorm(&self, tape: &mut Tape, blk: &EncBlock, x: V, trainable: bool) -> V {
        let (n, _) = tape.shape(x);
        let alpha = self.slot(tape, blk.gn_alpha, trainable);
        let gamma = self.slot(tape, blk.gn_gamma, trainable);
        let beta = self.slot(tape, blk.gn_beta, trainable);
        let sums = tape.sum_rows(x);
        let mu = tape.mul_scalar(sums, 1.0 / n as f64);
        let am = tape.mul(alpha, mu);
        let amb = tape.broadcast_row(am, n);
        let xc = tape.sub(x, amb);
        let sq = tape.square(xc);
        let var_sum = tape.sum_rows(sq);
        let var = tape.mul_scalar(var_sum, 1.0 / n as f64);
        let var_eps = tape.add_scalar(var, 1e-5);
        let sd = tape.sqrt(var_eps);
        let sdb = tape.broadcast_row(sd, n);
        let xn = tape.div(xc, sdb);
        let gb = tape.broadcast_row(gamma, n);
        let scaled = tape.mul(xn, gb);
        let bb = tape.broadcast_row(beta, n);
        tape.add(scaled, bb)
    }

    fn check_graph(&self, g: &LabeledGraph, y: usize) -> Result<(), VqCfxError> {
        if g.features.ncols() != self.feature_dim {
            return Err(VqCfxError::FeatureMismatch {
                expected: self.feature_dim,
                got: g.features.ncols(),
            });
        }
        if y >= self.label_count {
            return Err(VqCfxError::LabelOutOfRange {
                label: y,
                count: self.label_count,
            });
        }
        Ok(())
    }

    /// Conditional encoder: H^0 = [X; v], then 4 blocks of
    /// GIN + GraphNorm + ReLU. Output N x D_LAT.
    pub fn encode_on(
        &self,
        tape: &mut Tape,
        g: &LabeledGraph,
        y: usize,
        side: Side,
        trainable: bool,
    ) -> Result<V, VqCfxError> {
        self.check_graph(g, y)?;
        let n = g.node_count();
        let a = g.binary_adjacency();
        let x = tape.constant(g.features.clone());
        let le = self.slot(tape, self.slots.le, trainable);
        let v = tape.gather_rows(le, vec![y; n]);
        let mut h = tape.concat_cols(&[x, v]);
        let eye = Array2::from_shape_fn((n, n), |(i, j)| if i == j { 1.0 } else { 0.0 });
        let blocks = match side {
            Side::Factual => &self.slots.enc[0],
            Side::Counterfactual => &self.slots.enc[1],
        };
        for blk in blocks {
            let e = self.slot(tape, blk.eps, trainable);
            let s = tape.add_scalar(e, 1.0);
            let row = tape.broadcast_col(s, n);
            let full = tape.broadcast_row(row, n);
            let diag = tape.mul_const(full, eye.clone());
            let av = tape.constant(a.clone());
            let a_eps = tape.add(av, diag);
            let agg = tape.matmul(a_eps, h);
            let z1 = self.linear(tape, (blk.w1, blk.b1), agg, trainable);
            let r1 = tape.relu(z1);
            let z2 = self.linear(tape, (blk.w2, blk.b2), r1, trainable);
            let gn = self.graphnorm(tape, blk, z2, trainable);
            h = tape.relu(gn);
        }
        Ok(h)
    }

    /// Plain-value encoding (no gradients), for codebook init and tests.
    pub fn encode_projected(
        &self,
        g: &LabeledGraph,
        y: usize,
        side: Side,
    ) -> Result<Array2<f64>, VqCfxError> {
        let mut tape = Tape::new();
        let z = self.encode_on(&mut tape, g, y, side, false)?;
        let zp = self.linear(&mut tape, self.slots.pre, z, false);
        Ok(tape.value(zp).clone())
    }

    /// Vector quantization with straight-through backward. Returns the
    /// quantized rows (forward = codeword, gradient = identity to the
    /// projected encoder output), the projected rows, and the indices.
    pub fn quantize_on(&self, tape: &mut Tape, z: V, trainable: bool) -> (V, V, Vec<usize>) {
        let zp = self.linear(tape, self.slots.pre, z, trainable);
        let indices = nearest_codeword_indices(self.codebook(), tape.value(zp));
        let mut q = Array2::zeros((indices.len(), self.cfg.d_vq));
        for (r, &i) in indices.iter().enumerate() {
            q.row_mut(r).assign(&self.codebook().row(i));
        }
        let st = tape.straight_through(zp, q);
        (st, zp, indices)
    }

    /// Eq. 13 with explicit stop-gradients: term 1 reaches only the
    /// codebook, term 2 only the encoder path.
    pub fn vq_loss_on(&self, tape: &mut Tape, zp: V, indices: &[usize], trainable: bool) -> V {
        let n = indices.len() as f64;
        let z_sg = tape.detach(zp);
        let cb = self.slot(tape, self.slots.codebook, trainable);
        let c_rows = tape.gather_rows(cb, indices.to_vec());
        let d1 = tape.sub(z_sg, c_rows);
        let sq1 = tape.square(d1);
        let s1 = tape.sum_all(sq1);
        let t1 = tape.mul_scalar(s1, 1.0 / n);

        let mut c_vals = Array2::zeros((indices.len(), self.cfg.d_vq));
        for (r, &i) in indices.iter().enumerate() {
            c_vals.row_mut(r).assign(&self.codebook().row(i));
        }
        let c_sg = tape.constant(c_vals);
        let d2 = tape.sub(c_sg, zp);
        let sq2 = tape.square(d2);
        let s2 = tape.sum_all(sq2);
        let t2 = tape.mul_scalar(s2, self.cfg.eta / n);
        tape.add(t1, t2)
    }

    /// MPNN decoder over the complete pair set. Returns per-pair AMP
    /// logits (unordered pairs i < j), per-node NFP logits, and the
    /// pair list; symmetry and zero diagonal hold by construction.
    pub fn decode_on(
        &self,
        tape: &mut Tape,
        st: V,
        y: usize,
        noise: Array2<f64>,
        trainable: bool,
    ) -> DecodeOut {
        let n = tape.shape(st).0;
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .collect();
        assert_eq!(noise.nrows(), pairs.len());
        assert_eq!(noise.ncols(), EDGE_WIDTHS[0]);

        let post = self.linear(tape, self.slots.post, st, trainable);
        let le = self.slot(tape, self.slots.le, trainable);
        let v = tape.gather_rows(le, vec![y; n]);
        let h0_in = tape.concat_cols(&[post, v]);
        let mut h = self.linear(tape, self.slots.h0, h0_in, trainable);
        let mut e = tape.constant(noise);

        let is: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let js: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        for layer in &self.slots.dec {
            let hi = tape.gather_rows(h, is.clone());
            let hj = tape.gather_rows(h, js.clone());
            let erc_in = tape.concat_cols(&[hi, e, hj]);
            let z1 = self.linear(tape, (layer.erc_w1, layer.erc_b1), erc_in, trainable);
            let r1 = tape.leaky_relu(z1, LEAK);
            e = self.linear(tape, (layer.erc_w2, layer.erc_b2), r1, trainable);

            let m_in_ji = tape.concat_cols(&[hj, e]);
            let m1z = self.linear(tape, (layer.msg_w, layer.msg_b), m_in_ji, trainable);
            let m1 = tape.leaky_relu(m1z, LEAK);
            let m_in_ij = tape.concat_cols(&[hi, e]);
            let m2z = self.linear(tape, (layer.msg_w, layer.msg_b), m_in_ij, trainable);
            let m2 = tape.leaky_relu(m2z, LEAK);
            let agg1 = tape.scatter_add_rows(m1, is.clone(), n);
            let agg2 = tape.scatter_add_rows(m2, js.clone(), n);
            let summed = tape.add(agg1, agg2);
            // mean over the n-1 incoming messages; summing grows
            // activations with N and saturates the AMP softmax at init
            let agg = tape.mul_scalar(summed, 1.0 / (n.max(2) - 1) as f64);
            let upd_in = tape.concat_cols(&[h, agg]);
            let hz = self.linear(tape, (layer.upd_w, layer.upd_b), upd_in, trainable);
            h = tape.leaky_relu(hz, LEAK);
        }
        let amp = self.linear(tape, self.slots.amp, e, trainable);
        let nfp = self.linear(tape, self.slots.nfp, h, trainable);
        DecodeOut { amp, nfp, pairs }
    }

    /// Soft relaxation of a decode: expected binarized adjacency
    /// (probability of any edge type > 0) and node-type probabilities.
    pub fn soft_outputs(&self, tape: &mut Tape, out: &DecodeOut, n: usize) -> (V, V) {
        let edge_probs = tape.softmax_rows(out.amp);
        let p0 = tape.slice_cols(edge_probs, 0, 1);
        let np0 = tape.neg(p0);
        let pe = tape.add_scalar(np0, 1.0);
        let a_soft = tape.pairs_to_symmetric(pe, out.pairs.clone(), n);
        let x_soft = tape.softmax_rows(out.nfp);
        (a_soft, x_soft)
    }

    /// Eqs. 10-11: (1/N) Σ (1 - ψ)^γ + φ(|A^m - A^n|), φ(x) = Σ (x + 0.5)².
    pub fn proximity_on(
        &self,
        tape: &mut Tape,
        gm: &LabeledGraph,
        x_soft: V,
        a_soft: V,
    ) -> Result<V, VqCfxError> {
        self.proximity_relaxed_on(tape, gm, x_soft, a_soft, 0.0)
    }

    /// Eq. 10 with the relaxation factor θ subtracted from each absolute
    /// adjacency error before φ: entries within θ of the anchor carry no
    /// gradient, so the counterfactual path tolerates a small variance
    /// instead of being pulled toward the anchor at zero error. θ = 0
    /// recovers the plain proximity loss.
    pub fn proximity_relaxed_on(
        &self,
        tape: &mut Tape,
        gm: &LabeledGraph,
        x_soft: V,
        a_soft: V,
        theta: f64,
    ) -> Result<V, VqCfxError> {
        let n = gm.node_count();
        let (sn, _) = tape.shape(x_soft);
        if sn != n {
            return Err(VqCfxError::NodeCountMismatch(sn, n));
        }
        // cosine term; gm rows are one-hot so their norms are 1
        let prod = tape.mul_const(x_soft, gm.features.clone());
        let dot = tape.sum_cols(prod);
        let sq = tape.square(x_soft);
        let ssum = tape.sum_cols(sq);
        let ssafe = tape.add_scalar(ssum, 1e-12);
        let norm = tape.sqrt(ssafe);
        let psi = tape.div(dot, norm);
        let npsi = tape.neg(psi);
        let one_m = tape.add_scalar(npsi, 1.0);
        let powed = tape.pow_const(one_m, self.cfg.gamma);
        let csum = tape.sum_all(powed);
        let cterm = tape.mul_scalar(csum, 1.0 / n as f64);
        // topology term over the full N x N matrix
        let am = tape.constant(gm.binary_adjacency());
        let diff = tape.sub(a_soft, am);
        let ad = tape.abs(diff);
        let slack = tape.add_scalar(ad, -theta);
        let rel = tape.relu(slack);
        let shifted = tape.add_scalar(rel, 0.5);
        let sq2 = tape.square(shifted);
        let phi = tape.sum_all(sq2);
        Ok(tape.add(cterm, phi))
    }

    /// Eq. 12 with the probability clamped at 1e-12 before the log.
    pub fn counterfactual_loss_on(&self, tape: &mut Tape, probs: V, y_c: usize) -> V {
        let lg = tape.log_clamped(probs, 1e-12);
        let p = tape.pick(lg, 0, y_c);
        tape.neg(p)
    }

    /// Mean squared off-diagonal entry of the unit-normalized codeword
    /// Gram matrix.
    pub fn orth_loss_on(&self, tape: &mut Tape, trainable: bool) -> V {
        let k = self.cfg.codebook_size;
        let cb = self.slot(tape, self.slots.codebook, trainable);
        let sq = tape.square(cb);
        let ss = tape.sum_cols(sq);
        let ss_safe = tape.add_scalar(ss, 1e-12);
        let norm = tape.sqrt(ss_safe);
        let nb = tape.broadcast_col(norm, self.cfg.d_vq);
        let cbn = tape.div(cb, nb);
        let gram = tape.matmul_nt(cbn, cbn);
        let mask = Array2::from_shape_fn((k, k), |(i, j)| if i == j { 0.0 } else { 1.0 });
        let off = tape.mul_const(gram, mask);
        let osq = tape.square(off);
        let s = tape.sum_all(osq);
        tape.mul_scalar(s, 1.0 / (k * (k - 1)) as f64)
    }

    /// Both paths for one graph on one tape; returns the per-graph loss
    /// terms (without the orthogonality term, which is per batch).
    pub fn graph_losses_on(
        &self,
        tape: &mut Tape,
        g: &LabeledGraph,
        y_c: usize,
        classifier: &ConsensusModel,
        noise_rec: Array2<f64>,
        noise_cf: Array2<f64>,
        trainable: bool,
    ) -> Result<GraphLosses, VqCfxError> {
        let y = g.label.ok_or(VqCfxError::LabelOutOfRange {
            label: usize::MAX,
            count: self.label_count,
        })?;
        let n = g.node_count();

        // reconstruction path
        let z_f = self.encode_on(tape, g, y, Side::Factual, trainable)?;
        let (st_f, zp_f, idx_f) = self.quantize_on(tape, z_f, trainable);
        let dec_f = self.decode_on(tape, st_f, y, noise_rec, trainable);
        let (a_f, x_f) = self.soft_outputs(tape, &dec_f, n);
        let l_px_rec = self.proximity_on(tape, g, x_f, a_f)?;
        let l_vq_f = self.vq_loss_on(tape, zp_f, &idx_f, trainable);

        // counterfactual path
        let z_c = self.encode_on(tape, g, y_c, Side::Counterfactual, trainable)?;
        let (st_c, zp_c, idx_c) = self.quantize_on(tape, z_c, trainable);
        let dec_c = self.decode_on(tape, st_c, y_c, noise_cf, trainable);
        let (a_c, x_c) = self.soft_outputs(tape, &dec_c, n);
        let l_px_cf = self.proximity_relaxed_on(tape, g, x_c, a_c, self.cfg.theta)?;
        let probs = classifier.forward_probs(tape, a_c, x_c);
        let l_cf = self.counterfactual_loss_on(tape, probs, y_c);
        let l_vq_c = self.vq_loss_on(tape, zp_c, &idx_c, trainable);
        let l_vq = tape.add(l_vq_f, l_vq_c);

        Ok(GraphLosses {
            l_px_rec,
            l_px_cf,
            l_cf,
            l_vq,
            factual_indices: idx_f,
            counterfactual_indices: idx_c,
        })
    }

    /// Eq. 9 over a batch: α1·L_px + α2·L_cf + α3·L_vq + w_or·L_orth,
    /// graph terms batch-averaged. Returns the total node and the
    /// term breakdown values.
    pub fn total_loss_on(
        &self,
        tape: &mut Tape,
        batch: &[&LabeledGraph],
        y_c: usize,
        classifier: &ConsensusModel,
        rng: &mut impl Rng,
        trainable: bool,
    ) -> Result<(V, LossBreakdown), VqCfxError> {
        let mut px_acc: Option<V> = None;
        let mut cf_acc: Option<V> = None;
        let mut vq_acc: Option<V> = None;
        for g in batch {
            let p = g.node_count() * (g.node_count().saturating_sub(1)) / 2;
            let noise_rec = standard_noise(rng, p);
            let noise_cf = standard_noise(rng, p);
            let gl = self.graph_losses_on(tape, g, y_c, classifier, noise_rec, noise_cf, trainable)?;
            let px = tape.add(gl.l_px_rec, gl.l_px_cf);
            px_acc = Some(accum(tape, px_acc, px));
            cf_acc = Some(accum(tape, cf_acc, gl.l_cf));
            vq_acc = Some(accum(tape, vq_acc, gl.l_vq));
        }
        let (px_acc, cf_acc, vq_acc) = match (px_acc, cf_acc, vq_acc) {
            (Some(a), Some(b), Some(c)) => (a, b, c),
            _ => return Err(VqCfxError::EmptyBatch),
        };
        let scale = 1.0 / batch.len() as f64;
        let l_px = tape.mul_scalar(px_acc, scale);
        let l_cf = tape.mul_scalar(cf_acc, scale);
        let l_vq = tape.mul_scalar(vq_acc, scale);
        let l_orth = self.orth_loss_on(tape, trainable);

        let t1 = tape.mul_scalar(l_px, self.cfg.alpha1);
        let t2 = tape.mul_scalar(l_cf, self.cfg.alpha2);
        let t3 = tape.mul_scalar(l_vq, self.cfg.alpha3);
        let t4 = tape.mul_scalar(l_orth, self.cfg.w_or);
        let s12 = tape.add(t1, t2);
        let s34 = tape.add(t3, t4);
        let total = tape.add(s12, s34);
        let breakdown = LossBreakdown {
            l_px: tape.value(l_px)[[0, 0]],
            l_cf: tape.value(l_cf)[[0, 0]],
            l_vq: tape.value(l_vq)[[0, 0]],
            l_orth: tape.value(l_orth)[[0, 0]],
            total: tape.value(total)[[0, 0]],
        };
        Ok((total, breakdown))
    }

    /// Factual and counterfactual codeword index paths for one input,
    /// without decoding. Both depend only on the encoders, so they are
    /// identical across decode seeds.
    pub fn codeword_paths(
        &self,
        g: &LabeledGraph,
        y_c: usize,
    ) -> Result<(Vec<usize>, Vec<usize>), VqCfxError> {
        let mut tape = Tape::new();
        let y = g.label.unwrap_or(0);
        let z_f = self.encode_on(&mut tape, g, y, Side::Factual, false)?;
        let (_, _, idx_f) = self.quantize_on(&mut tape, z_f, false);
        let z_c = self.encode_on(&mut tape, g, y_c, Side::Counterfactual, false)?;
        let (_, _, idx_c) = self.quantize_on(&mut tape, z_c, false);
        Ok((idx_f, idx_c))
    }

    /// One full counterfactual generation: encode with y_c, quantize,
    /// decode hard. Returns None when every node ends up isolated.
    pub fn generate(
        &self,
        g: &LabeledGraph,
        y_c: usize,
        mode: DecodeMode,
        seed: u64,
    ) -> Result<Option<GeneratedSample>, VqCfxError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = g.node_count();
        let p = n * n.saturating_sub(1) / 2;
        let mut tape = Tape::new();
        let y = g.label.unwrap_or(0);
        let z_f = self.encode_on(&mut tape, g, y, Side::Factual, false)?;
        let (_, _, idx_f) = self.quantize_on(&mut tape, z_f, false);
        let z_c = self.encode_on(&mut tape, g, y_c, Side::Counterfactual, false)?;
        let (st_c, _, idx_c) = self.quantize_on(&mut tape, z_c, false);
        let noise = standard_noise(&mut rng, p);
        let dec = self.decode_on(&mut tape, st_c, y_c, noise, false);
        let amp = tape.value(dec.amp).clone();
        let nfp = tape.value(dec.nfp).clone();

        let mut adjacency = Array2::<u8>::zeros((n, n));
        for (r, &(i, j)) in dec.pairs.iter().enumerate() {
            let ty = match mode {
                DecodeMode::Argmax => argmax_row(&amp.row(r).to_vec()),
                DecodeMode::Sample => sample_row(&amp.row(r).to_vec(), &mut rng),
            } as u8;
            adjacency[[i, j]] = ty;
            adjacency[[j, i]] = ty;
        }
        let mut node_types = Vec::with_capacity(n);
        for r in 0..n {
            let t = match mode {
                DecodeMode::Argmax => argmax_row(&nfp.row(r).to_vec()),
                DecodeMode::Sample => sample_row(&nfp.row(r).to_vec(), &mut rng),
            };
            node_types.push(t);
        }
        // prune isolated nodes
        let kept: Vec<usize> = (0..n)
            .filter(|&i| (0..n).any(|j| adjacency[[i, j]] != 0))
            .collect();
        if kept.is_empty() {
            return Ok(Some(GeneratedSample {
                graph: None,
                kept_nodes: kept,
                factual_indices: idx_f,
                counterfactual_indices: idx_c,
            }));
        }
        let types: Vec<usize> = kept.iter().map(|&i| node_types[i]).collect();
        let mut edges = Vec::new();
        for (a, &i) in kept.iter().enumerate() {
            for (b, &j) in kept.iter().enumerate() {
                if a < b && adjacency[[i, j]] != 0 {
                    edges.push((a, b, adjacency[[i, j]]));
                }
            }
        }
        let graph = LabeledGraph::from_parts(
            format!("{}*cf{seed}", g.id),
            &types,
            self.feature_dim,
            &edges,
            None,
        );
        Ok(Some(GeneratedSample {
            graph: Some(graph),
            kept_nodes: kept,
            factual_indices: idx_f,
            counterfactual_indices: idx_c,
        }))
    }

    /// Argmax reconstruction through the factual path; fraction of
    /// unordered node pairs whose decoded edge class matches the input.
    pub fn reconstruction_edge_accuracy(
        &self,
        graphs: &[&LabeledGraph],
        seed: u64,
    ) -> Result<f64, VqCfxError> {
        let mut correct = 0usize;
        let mut total = 0usize;
        for (k, g) in graphs.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (k as u64).wrapping_mul(0x9e3779b97f4a7c15));
            let n = g.node_count();
            let p = n * n.saturating_sub(1) / 2;
            let y = g.label.unwrap_or(0);
            let mut tape = Tape::new();
            let z = self.encode_on(&mut tape, g, y, Side::Factual, false)?;
            let (st, _, _) = self.quantize_on(&mut tape, z, false);
            let noise = standard_noise(&mut rng, p);
            let dec = self.decode_on(&mut tape, st, y, noise, false);
            let amp = tape.value(dec.amp);
            for (r, &(i, j)) in dec.pairs.iter().enumerate() {
                let pred = argmax_row(&amp.row(r).to_vec()) as u8;
                if pred == g.adjacency[[i, j]] {
                    correct += 1;
                }
                total += 1;
            }
        }
        if total == 0 {
            return Err(VqCfxError::EmptyBatch);
        }
        Ok(correct as f64 / total as f64)
    }
}

fn accum(tape: &mut Tape, acc: Option<V>, v: V) -> V {
    match acc {
        None => v,
        Some(a) => tape.add(a, v),
    }
}

fn standard_noise(rng: &mut impl Rng, p: usize) -> Array2<f64> {
    Array2::from_shape_fn((p, EDGE_WIDTHS[0]), |_| {
        rng.sample::<f64, _>(rand_distr::StandardNormal)
    })
}

fn argmax_row(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn sample_row(logits: &[f64], rng: &mut impl Rng) -> usize {
    let m = logits.iter().cloned().fold(f64::MIN, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&x| (x - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let mut u = rng.gen::<f64>() * sum;
    for (i, &e) in exps.iter().enumerate() {
        u -= e;
        if u <= 0.0 {
            return i;
        }
    }
    logits.len() - 1
}

/// Nearest codeword per row, Euclidean; ties go to the lowest index.
pub fn nearest_codeword_indices(codebook: &Array2<f64>, zp: &Array2<f64>) -> Vec<usize> {
    // ||z - c||^2 = ||z||^2 - 2 z.c + ||c||^2; the ||z||^2 term is
    // constant per row and does not affect the argmin.
    let sq: Vec<f64> = codebook
        .rows()
        .into_iter()
        .map(|c| c.iter().map(|v| v * v).sum())
        .collect();
    let cross = zp.dot(&codebook.t());
    let mut out = Vec::with_capacity(zp.nrows());
    for row in cross.rows() {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (i, (x, s)) in row.iter().zip(&sq).enumerate() {
            let d = s - 2.0 * x;
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        out.push(best);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMode {
    Argmax,
    Sample,
}

pub struct DecodeOut {
    pub amp: V,
    pub nfp: V,
    pub pairs: Vec<(usize, usize)>,
}

pub struct GraphLosses {
    pub l_px_rec: V,
    pub l_px_cf: V,
    pub l_cf: V,
    pub l_vq: V,
    pub factual_indices: Vec<usize>,
    pub counterfactual_indices: Vec<usize>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_px: f64,
    pub l_cf: f64,
    pub l_vq: f64,
    pub l_orth: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct GeneratedSample {
    /// None when pruning removed every node.
    pub graph: Option<LabeledGraph>,
    pub kept_nodes: Vec<usize>,
    pub factual_indices: Vec<usize>,
    pub counterfactual_indices: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub l_px: f64,
    pub l_cf: f64,
    pub l_vq: f64,
    pub l_orth: f64,
    pub total: f64,
}

/// Lloyd's k-means, seeded and deterministic. Fewer points than
/// centroids is handled by sampling with repetition plus jitter.
pub fn kmeans(points: &Array2<f64>, k: usize, iters: usize, rng: &mut impl Rng) -> Array2<f64> {
    assert!(points.nrows() > 0, "empty batch");
    let d = points.ncols();
    let mut work;
    let pts = if points.nrows() >= k {
        points
    } else {
        work = Array2::zeros((k, d));
        for r in 0..k {
            let src = rng.gen_range(0..points.nrows());
            for c in 0..d {
                work[[r, c]] = points[[src, c]] + 1e-3 * rng.gen_range(-1.0..1.0);
            }
        }
        &work
    };
    let n = pts.nrows();
    // distinct random starting points
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut centroids = Array2::zeros((k, d));
    for (r, &src) in order.iter().take(k).enumerate() {
        centroids.row_mut(r).assign(&pts.row(src));
    }
    for _ in 0..iters {
        let assign = nearest_codeword_indices(&centroids, pts);
        let mut sums = Array2::<f64>::zeros((k, d));
        let mut counts = vec![0usize; k];
        for (p, &c) in assign.iter().enumerate() {
            let mut row = sums.row_mut(c);
            row += &pts.row(p);
            counts[c] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                let cnt = counts[c] as f64;
                for j in 0..d {
                    centroids[[c, j]] = sums[[c, j]] / cnt;
                }
            }
        }
    }
    centroids
}

/// K-means codebook initialization from factual-path latents.
pub fn init_codebook_kmeans(
    model: &mut VqCfxModel,
    graphs: &[&LabeledGraph],
    seed: u64,
) -> Result<(), VqCfxError> {
    if graphs.is_empty() {
        return Err(VqCfxError::EmptyBatch);
    }
    let mut rows: Vec<Array2<f64>> = Vec::new();
    for g in graphs {
        let y = g.label.unwrap_or(0);
        rows.push(model.encode_projected(g, y, Side::Factual)?);
    }
    let total: usize = rows.iter().map(|r| r.nrows()).sum();
    let mut pts = Array2::zeros((total, model.cfg.d_vq));
    let mut off = 0;
    for r in &rows {
        pts.slice_mut(ndarray::s![off..off + r.nrows(), ..]).assign(r);
        off += r.nrows();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cb = kmeans(&pts, model.cfg.codebook_size, 10, &mut rng);
    model.set_codebook(cb);
    Ok(())
}

/// Full training loop: AdamW at the configured learning rate with a
/// one-cycle schedule, both paths trained concurrently against the
/// frozen classifier.
pub fn train_vqcfx(
    d_target: &[&LabeledGraph],
    y_c: usize,
    classifier: &ConsensusModel,
    feature_dim: usize,
    label_count: usize,
    edge_classes: usize,
    cfg: &VqCfxConfig,
) -> Result<(VqCfxModel, Vec<EpochLog>), VqCfxError> {
    if d_target.is_empty() {
        return Err(VqCfxError::EmptyTargets);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = VqCfxModel::new(feature_dim, label_count, edge_classes, cfg.clone(), &mut rng);
    init_codebook_kmeans(&mut model, d_target, cfg.seed.wrapping_add(1))?;

    let steps_per_epoch = (d_target.len() + cfg.batch_size - 1) / cfg.batch_size;
    let sched = OneCycle::new(cfg.lr, cfg.epochs * steps_per_epoch);
    let mut opt = AdamW::new(
        AdamWConfig {
            lr: cfg.lr,
            // keep updates gradient-proportional once the edge softmax
            // saturates; the default 1e-8 turns the proximity term's
            // residual pull into constant-size steps that run away
            eps: 1e-3,
            ..Default::default()
        },
        model.store(),
    );
    let mut order: Vec<usize> = (0..d_target.len()).collect();
    let mut logs = Vec::with_capacity(cfg.epochs);
    let mut step = 0usize;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sums = [0.0f64; 5];
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&LabeledGraph> = chunk.iter().map(|&i| d_target[i]).collect();
            let mut tape = Tape::new();
            let (total, bd) =
                model.total_loss_on(&mut tape, &batch, y_c, classifier, &mut rng, true)?;
            if !bd.total.is_finite() {
                return Err(VqCfxError::Diverged(epoch));
            }
            tape.backward(total);
            let grads = tape.param_grads(model.store());
            let lr = sched.lr_at(step);
            opt.step(model.store_mut(), &grads, lr);
            step += 1;
            sums[0] += bd.l_px;
            sums[1] += bd.l_cf;
            sums[2] += bd.l_vq;
            sums[3] += bd.l_orth;
            sums[4] += bd.total;
            batches += 1;
        }
        let b = batches as f64;
        logs.push(EpochLog {
            epoch,
            l_px: sums[0] / b,
            l_cf: sums[1] / b,
            l_vq: sums[2] / b,
            l_orth: sums[3] / b,
            total: sums[4] / b,
        });
    }
    Ok((model, logs))
}

// ---- checkpoints ----

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    feature_dim: usize,
    label_count: usize,
    edge_classes: usize,
    cfg: VqCfxConfig,
    names: Vec<String>,
    shapes: Vec<(usize, usize)>,
    data: Vec<f64>,
}

const CKPT_FORMAT: &str = "gcfx-vqcfx";
const CKPT_VERSION: u32 = 1;

pub fn save_vqcfx(model: &VqCfxModel, path: &std::path::Path) -> Result<(), VqCfxError> {
    let ckpt = Checkpoint {
        format: CKPT_FORMAT.into(),
        version: CKPT_VERSION,
        feature_dim: model.feature_dim,
        label_count: model.label_count,
        edge_classes: model.edge_classes,
        cfg: model.cfg.clone(),
        names: model.store.names.clone(),
        shapes: model
            .store
            .params
            .iter()
            .map(|p| (p.nrows(), p.ncols()))
            .collect(),
        data: model
            .store
            .params
            .iter()
            .flat_map(|p| p.iter().cloned())
            .collect(),
    };
    let json = serde_json::to_string(&ckpt).map_err(|e| VqCfxError::Checkpoint(e.to_string()))?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_vqcfx(path: &std::path::Path) -> Result<VqCfxModel, VqCfxError> {
    let json = std::fs::read_to_string(path)?;
    let ckpt: Checkpoint =
        serde_json::from_str(&json).map_err(|e| VqCfxError::Checkpoint(e.to_string()))?;
    if ckpt.format != CKPT_FORMAT || ckpt.version != CKPT_VERSION {
        return Err(VqCfxError::Checkpoint(format!(
            "unsupported checkpoint {} v{}",
            ckpt.format, ckpt.version
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut model = VqCfxModel::new(
        ckpt.feature_dim,
        ckpt.label_count,
        ckpt.edge_classes,
        ckpt.cfg,
        &mut rng,
    );
    if ckpt.names != model.store.names {
        return Err(VqCfxError::Checkpoint("parameter layout mismatch".into()));
    }
    let mut off = 0;
    for (slot, &(r, c)) in ckpt.shapes.iter().enumerate() {
        let len = r * c;
        let arr = Array2::from_shape_vec((r, c), ckpt.data[off..off + len].to_vec())
            .map_err(|e| VqCfxError::Checkpoint(e.to_string()))?;
        if arr.raw_dim() != model.store.params[slot].raw_dim() {
            return Err(VqCfxError::Checkpoint("shape mismatch".into()));
        }
        model.store.params[slot] = arr;
        off += len;
    }
    if off != ckpt.data.len() {
        return Err(VqCfxError::Checkpoint("trailing data".into()));
    }
    Ok(model)
}

//! Post-training autopsy for the generator: codeword usage, soft edge
//! probabilities split by true edge vs non-edge, and where sampled
//! candidates die (empty / no flip / cost).
//! Usage: vqcfx_diag [vq_epochs] [clf_epochs] [graphs] [alpha2] [theta] [lr]

use gcfx::classifier::{train_classifier, TrainConfig};
use gcfx::datasets::{generate_p5motif, P5MotifConfig};
use gcfx::ged::{perturbation_cost, GedConfig};
use gcfx::nn::Tape;
use gcfx::vqcfx::{train_vqcfx, DecodeMode, Side, VqCfxConfig, EDGE_WIDTHS};
use ndarray::Array2;
use std::collections::BTreeSet;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let vq_epochs: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(60);
    let clf_epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(15);
    let graphs: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(300);
    let alpha2: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let theta: f64 = args
        .get(5)
        .and_then(|s| s.parse().ok())
        .unwrap_or(VqCfxConfig::default().theta);
    let lr: f64 = args
        .get(6)
        .and_then(|s| s.parse().ok())
        .unwrap_or(VqCfxConfig::default().lr);

    let cfg = P5MotifConfig {
        graph_count: graphs,
        seed: 42,
        ..Default::default()
    };
    let (d, _) = generate_p5motif(&cfg);
    let (clf, _) = train_classifier(
        &d,
        &TrainConfig {
            epochs: clf_epochs,
            seed: 7,
            ..Default::default()
        },
    )
    .unwrap();
    let targets: Vec<_> = d
        .graphs
        .iter()
        .filter(|g| g.label == Some(0) && clf.predict(g).unwrap() == 0)
        .collect();
    println!("targets: {}", targets.len());

    let vq_cfg = VqCfxConfig {
        epochs: vq_epochs,
        seed: 11,
        alpha2,
        theta,
        lr,
        ..Default::default()
    };
    let t0 = Instant::now();
    let (model, logs) = train_vqcfx(
        &targets,
        1,
        &clf,
        d.node_type_count,
        d.label_count,
        d.edge_type_count as usize + 1,
        &vq_cfg,
    )
    .unwrap();
    for l in logs.iter().take(2).chain(logs.iter().rev().take(2).rev()) {
        println!(
            "epoch {}: px {:.3} cf {:.3} vq {:.4} orth {:.5} total {:.3}",
            l.epoch, l.l_px, l.l_cf, l.l_vq, l.l_orth, l.total
        );
    }
    println!("trained {vq_epochs} epochs in {:.1?}", t0.elapsed());

    // codeword usage over the probe set
    let probe = &targets[..targets.len().min(50)];
    let mut used_f = BTreeSet::new();
    let mut used_c = BTreeSet::new();
    let mut per_graph = Vec::new();
    for g in probe {
        let (idx_f, idx_c) = model.codeword_paths(g, 1).unwrap();
        per_graph.push(idx_f.iter().collect::<BTreeSet<_>>().len());
        used_f.extend(idx_f);
        used_c.extend(idx_c);
    }
    per_graph.sort_unstable();
    println!(
        "codewords used: factual {} counterfactual {} | per-graph distinct min/med/max {}/{}/{}",
        used_f.len(),
        used_c.len(),
        per_graph[0],
        per_graph[per_graph.len() / 2],
        per_graph[per_graph.len() - 1]
    );

    // AMP logit-gap stats: is any edge/non-edge discrimination forming?
    {
        let mut gaps_e = Vec::new();
        let mut gaps_n = Vec::new();
        for g in &probe[..10] {
            let mut tape = Tape::new();
            let z = model.encode_on(&mut tape, g, 0, Side::Factual, false).unwrap();
            let (st, _, _) = model.quantize_on(&mut tape, z, false);
            let n = g.node_count();
            let p = n * (n - 1) / 2;
            let noise = Array2::zeros((p, EDGE_WIDTHS[0]));
            let dec = model.decode_on(&mut tape, st, 0, noise, false);
            let amp = tape.value(dec.amp).clone();
            let truth = g.binary_adjacency();
            for (r, &(i, j)) in dec.pairs.iter().enumerate() {
                let gap = amp[[r, 0]] - amp[[r, 1]];
                if truth[[i, j]] > 0.0 {
                    gaps_e.push(gap);
                } else {
                    gaps_n.push(gap);
                }
            }
        }
        let stats = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            let sd = (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt();
            (m, sd)
        };
        let (me, se) = stats(&gaps_e);
        let (mn, sn) = stats(&gaps_n);
        println!("amp gap (no-edge minus edge logit): true edges {me:.3} sd {se:.3}, non-edges {mn:.3} sd {sn:.3}");
    }

    // soft edge probabilities on both paths, split by the true pair class
    for side in [Side::Factual, Side::Counterfactual] {
        let y = if side == Side::Factual { 0 } else { 1 };
        let (mut pe_sum, mut pe_n, mut pne_sum, mut pne_n, mut pmax) = (0.0, 0usize, 0.0, 0usize, 0.0f64);
        let mut over_half_edges = 0usize;
        let mut over_half_non = 0usize;
        for g in &probe[..10] {
            let mut tape = Tape::new();
            let z = model.encode_on(&mut tape, g, y, side, false).unwrap();
            let (st, _, _) = model.quantize_on(&mut tape, z, false);
            let n = g.node_count();
            let p = n * (n - 1) / 2;
            let noise = Array2::zeros((p, EDGE_WIDTHS[0]));
            let dec = model.decode_on(&mut tape, st, y, noise, false);
            let (a_soft, _) = model.soft_outputs(&mut tape, &dec, n);
            let a = tape.value(a_soft).clone();
            let truth = g.binary_adjacency();
            for i in 0..n {
                for j in (i + 1)..n {
                    let v = a[[i, j]];
                    pmax = pmax.max(v);
                    if truth[[i, j]] > 0.0 {
                        pe_sum += v;
                        pe_n += 1;
                        if v > 0.5 {
                            over_half_edges += 1;
                        }
                    } else {
                        pne_sum += v;
                        pne_n += 1;
                        if v > 0.5 {
                            over_half_non += 1;
                        }
                    }
                }
            }
        }
        println!(
            "{side:?}: mean p(edge) on true edges {:.4} ({over_half_edges}/{pe_n} over 0.5), on non-edges {:.4} ({over_half_non}/{pne_n} over 0.5), max {pmax:.4}",
            pe_sum / pe_n as f64,
            pne_sum / pne_n as f64,
        );
    }

    // candidate autopsy: where do sampled decodes die?
    let ged = GedConfig::default();
    let (mut empty, mut no_flip, mut costly, mut ok) = (0usize, 0usize, 0usize, 0usize);
    let mut costs_flipped = Vec::new();
    for (k, g) in probe.iter().take(20).enumerate() {
        for s in 0..=16u64 {
            let mode = if s == 0 { DecodeMode::Argmax } else { DecodeMode::Sample };
            let out = model.generate(g, 1, mode, (k as u64) << 8 | s).unwrap().unwrap();
            let Some(cand) = out.graph else {
                empty += 1;
                continue;
            };
            let p = clf.classify(&cand).unwrap();
            if p[1] <= p[0] {
                no_flip += 1;
                continue;
            }
            let w = perturbation_cost(g, &cand, &ged);
            costs_flipped.push(w);
            if w <= 0.15 {
                ok += 1;
            } else {
                costly += 1;
            }
        }
    }
    costs_flipped.sort_by(f64::total_cmp);
    println!("decodes (20 targets x 17): empty {empty} no-flip {no_flip} cost>0.15 {costly} valid {ok}");
    if !costs_flipped.is_empty() {
        println!(
            "flipped-candidate cost min/med/max: {:.3}/{:.3}/{:.3}",
            costs_flipped[0],
            costs_flipped[costs_flipped.len() / 2],
            costs_flipped[costs_flipped.len() - 1]
        );
    }
}

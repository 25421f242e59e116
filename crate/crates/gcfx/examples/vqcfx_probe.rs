//! Timing and behavior probe for generator training on the mini
//! dataset. Usage: vqcfx_probe [vq_epochs] [clf_epochs] [graphs] [samples] [alpha2] [theta]

use gcfx::classifier::{train_classifier, TrainConfig};
use gcfx::datasets::{generate_p5motif, P5MotifConfig};
use gcfx::ged::{perturbation_cost, GedConfig};
use gcfx::vqcfx::{train_vqcfx, DecodeMode, VqCfxConfig};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let vq_epochs: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let clf_epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(40);
    let graphs: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1200);
    let samples: u64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(16);
    let alpha2: f64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let theta: f64 = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(VqCfxConfig::default().theta);

    let cfg = P5MotifConfig {
        graph_count: graphs,
        seed: 42,
        ..Default::default()
    };
    let (d, _) = generate_p5motif(&cfg);
    let t0 = Instant::now();
    let (clf, _) = train_classifier(
        &d,
        &TrainConfig {
            epochs: clf_epochs,
            seed: 7,
            ..Default::default()
        },
    )
    .unwrap();
    println!("classifier trained in {:.1?}", t0.elapsed());

    let targets: Vec<_> = d
        .graphs
        .iter()
        .filter(|g| g.label == Some(0) && clf.predict(g).unwrap() == 0)
        .collect();
    println!("targets predicted label 0: {}", targets.len());

    let vq_cfg = VqCfxConfig {
        epochs: vq_epochs,
        seed: 11,
        alpha2,
        theta,
        ..Default::default()
    };
    let t1 = Instant::now();
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
    let train_time = t1.elapsed();
    for l in logs.iter().take(3).chain(logs.iter().rev().take(3).rev()) {
        println!(
            "epoch {}: px {:.3} cf {:.3} vq {:.4} orth {:.5} total {:.3}",
            l.epoch, l.l_px, l.l_cf, l.l_vq, l.l_orth, l.total
        );
    }
    println!(
        "{} epochs in {:.1?} ({:.1?}/epoch)",
        vq_epochs,
        train_time,
        train_time / vq_epochs as u32
    );

    let recon = model
        .reconstruction_edge_accuracy(&targets[..targets.len().min(100)], 999)
        .unwrap();
    println!("reconstruction edge accuracy (100 targets): {recon:.4}");

    // candidate feasibility: flip rate and cost at delta 0.15
    let ged = GedConfig::default();
    let t2 = Instant::now();
    let mut with_valid = 0usize;
    let probe_n = targets.len().min(50);
    for (k, g) in targets[..probe_n].iter().enumerate() {
        let mut ok = false;
        for s in 0..=samples {
            let mode = if s == 0 { DecodeMode::Argmax } else { DecodeMode::Sample };
            let out = model
                .generate(g, 1, mode, (k as u64) << 8 | s)
                .unwrap()
                .unwrap();
            if let Some(cand) = out.graph {
                let p = clf.classify(&cand).unwrap();
                if p[1] > p[0] {
                    let w = perturbation_cost(g, &cand, &ged);
                    if w <= 0.15 {
                        ok = true;
                        break;
                    }
                }
            }
        }
        if ok {
            with_valid += 1;
        }
    }
    println!(
        "targets with a valid candidate (w<=0.15, {probe_n} probed): {} ({:.0?})",
        with_valid,
        t2.elapsed()
    );
}

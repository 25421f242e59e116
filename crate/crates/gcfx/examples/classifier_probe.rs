//! Timing and accuracy probe for classifier training on the mini
//! dataset. Usage: classifier_probe [epochs] [graphs]

use gcfx::classifier::{train_classifier, TrainConfig};
use gcfx::datasets::{generate_p5motif, P5MotifConfig};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let graphs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1200);

    let cfg = P5MotifConfig {
        graph_count: graphs,
        seed: 42,
        ..Default::default()
    };
    let t0 = Instant::now();
    let (d, _) = generate_p5motif(&cfg);
    println!("dataset: {} graphs in {:.1?}", d.graphs.len(), t0.elapsed());

    let t1 = Instant::now();
    let tc = TrainConfig {
        epochs,
        seed: 7,
        ..Default::default()
    };
    let (model, metrics) = train_classifier(&d, &tc).expect("training failed");
    let elapsed = t1.elapsed();
    let mean_acc: f64 = metrics.iter().map(|m| m.accuracy).sum::<f64>() / metrics.len() as f64;
    for m in &metrics {
        println!(
            "fold {}: acc {:.4} auc {:.4} f1 {:.4} (loss {:.4} -> {:.4})",
            m.fold,
            m.accuracy,
            m.rocauc,
            m.f1,
            m.epoch_loss.first().unwrap(),
            m.epoch_loss.last().unwrap()
        );
    }
    println!("epochs={epochs} mean held-out acc {:.4}, train time {:.1?}", mean_acc, elapsed);

    let self_m = gcfx::classifier::evaluate_classifier(&model, &d).unwrap();
    println!("consensus on the training dataset: acc {:.4}", self_m.accuracy);

    let eval_cfg = P5MotifConfig {
        graph_count: 400,
        seed: 4242,
        ..Default::default()
    };
    let (eval_d, _) = generate_p5motif(&eval_cfg);
    let em = gcfx::classifier::evaluate_classifier(&model, &eval_d).unwrap();
    println!(
        "consensus on fresh 400-graph set: acc {:.4} auc {:.4} f1 {:.4}",
        em.accuracy, em.rocauc, em.f1
    );
}

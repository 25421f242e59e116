//! Quick look at how much coverage an ideal K=20 summary could reach on
//! the mini dataset at a given delta, using the targets themselves as
//! the candidate universe.

use gcfx::datasets::{generate_p5motif, P5MotifConfig};
use gcfx::ged::GedConfig;
use gcfx::metrics::covers;

fn main() {
    let cfg = P5MotifConfig {
        graph_count: 1200,
        seed: 42,
        ..Default::default()
    };
    let (d, _) = generate_p5motif(&cfg);
    let targets: Vec<_> = d.graphs.iter().filter(|g| g.label == Some(0)).collect();
    let n = targets.len();
    println!("targets: {n}");
    let ged = GedConfig::default();

    for delta in [0.05, 0.1, 0.15, 0.2, 0.3] {
        // coverage sets: candidate i covers target j
        let mut sets: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut total_pairs = 0usize;
        for i in 0..n {
            for j in 0..n {
                if covers(targets[j], targets[i], delta, &ged) {
                    sets[i].push(j);
                    total_pairs += 1;
                }
            }
        }
        let mut covered = vec![false; n];
        let mut picked = 0;
        for _ in 0..20 {
            let (best, gain) = (0..n)
                .map(|i| (i, sets[i].iter().filter(|&&j| !covered[j]).count()))
                .max_by_key(|&(_, g)| g)
                .unwrap();
            if gain == 0 {
                break;
            }
            for &j in &sets[best] {
                covered[j] = true;
            }
            picked += 1;
        }
        let cov = covered.iter().filter(|&&c| c).count() as f64 / n as f64;
        println!(
            "delta={delta}: greedy K=20 ideal coverage = {:.2}% (picked {picked}, mean set size {:.2})",
            100.0 * cov,
            total_pairs as f64 / n as f64
        );
    }
}

// Scratch calibration for the standard overfitting scenario; not shipped.

use std::time::Instant;

use ldl_lab::attacks::*;
use ldl_lab::dataset::*;
use ldl_lab::defense::*;
use ldl_lab::metrics::*;
use ldl_lab::model::*;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let spread: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0.25);
    let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(300);
    let data_seed: u64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(101);

    let t0 = Instant::now();
    let data = generate_blobs(20, 5, 1200, spread, 0.15, data_seed).unwrap();
    let split_spec = SplitSpec {
        member_count: 200,
        nonmember_count: 200,
        seed: 202,
    };
    let (members, nonmembers) = split(&data, &split_spec).unwrap();

    let spec = ModelSpec::new(
        vec![20, 256, 256, 5],
        vec![Activation::Relu, Activation::Relu],
        303,
    )
    .unwrap();
    let tc = TrainConfig {
        epochs,
        learning_rate: 1e-3,
        batch_size: 32,
        weight_decay: 0.0,
        optimizer: Optimizer::Adam,
    };
    let outcome = train(&members, &spec, &tc).unwrap();
    let model = outcome.model;
    let acc_m = model.accuracy(&members).unwrap();
    let acc_n = model.accuracy(&nonmembers).unwrap();
    println!(
        "train {:.1?} spread={spread} epochs={epochs} seed={data_seed}",
        t0.elapsed()
    );
    println!(
        "member acc {acc_m:.4}  nonmember acc {acc_n:.4}  asr_gap {:.4}",
        asr_gap(acc_m, acc_n).unwrap()
    );

    // Timing: defended oracle query at k=1000.
    let defended = SmoothedClassifier::new(
        model.clone(),
        NoiseSpec::Gaussian { sigma2: 0.02 },
        1000,
        404,
        FeatureKind::Continuous,
    )
    .unwrap();
    let x = &members.samples[0].features;
    let t1 = Instant::now();
    let reps = 50;
    for q in 0..reps {
        let _ = defended.label(x, q).unwrap();
    }
    let per_query = t1.elapsed() / reps as u32;
    println!("defended query (k=1000): {per_query:?}");

    // Timing: single defense-free forward.
    let free = SmoothedClassifier::defense_free(model.clone(), FeatureKind::Continuous);
    let t2 = Instant::now();
    for q in 0..20000u64 {
        let _ = free.label(x, q).unwrap();
    }
    println!("defense-free query: {:?}", t2.elapsed() / 20000);

    // Smoothed accuracies at sigma2 = 0.02, k=1000 (subsample for speed).
    let t3 = Instant::now();
    let probe = |samples: &Dataset, n: usize| -> f64 {
        let mut correct = 0;
        for s in samples.samples.iter().take(n) {
            let (label, _) = defended.smooth_predict(&s.features, 7_000_000 + s.id as u64).unwrap();
            if label == s.label {
                correct += 1;
            }
        }
        correct as f64 / n as f64
    };
    let smoothed_m = probe(&members, 100);
    let smoothed_n = probe(&nonmembers, 100);
    println!(
        "smoothed acc (k=1000, s2=0.02, 100 pts): members {smoothed_m:.3} nonmembers {smoothed_n:.3} [{:?}]",
        t3.elapsed()
    );

    // Defense-free strong threshold attack with the default budget.
    let t4 = Instant::now();
    let hsj = HsjConfig::default();
    let outcome = threshold_attack(
        &free,
        &members.samples,
        &nonmembers.samples,
        FeatureKind::Continuous,
        AdversaryMode::Strong,
        &hsj,
        9001,
    )
    .unwrap();
    let r = rates(&outcome.stats).unwrap();
    println!(
        "defense-free threshold attack: ASR {:.4} (tau {:.4}, excluded {}/{}) in {:?}; queries {}",
        asr(r.tpr, r.tnr).unwrap(),
        outcome.rule.tau,
        outcome.excluded_members,
        outcome.excluded_nonmembers,
        t4.elapsed(),
        free.queries_used(),
    );
}

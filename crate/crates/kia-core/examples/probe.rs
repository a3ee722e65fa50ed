// Scratch experiment runner used while tuning; not part of the test suite.
use std::time::Instant;

use kia_core::dynamics::{add_gaussian_noise, orthogonal_embed, simulate_pendulum, split_dataset, PendulumParams};
use kia_core::eval::{evaluate_horizon, ErrorMetric, Forecaster, HorizonConfig, ReportMeta};
use kia_core::model::{KiaModel, ModelConfig, Variant};
use kia_core::train::{train, LossWeights, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let theta0: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0.8);
    let variant = match args.get(2).map(|s| s.as_str()) {
        Some("KAE") => Variant::Kae,
        Some("CKAE") => Variant::Ckae,
        _ => Variant::Kia,
    };
    let k_steps: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(8);
    let max_epochs: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(500);
    let seed: u64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(0);

    let noise_std: f64 = args.get(8).and_then(|s| s.parse().ok()).unwrap_or(0.0);
    let train_len: usize = args.get(9).and_then(|s| s.parse().ok()).unwrap_or(400);

    let t0 = Instant::now();
    let params = PendulumParams {
        theta0,
        ..Default::default()
    };
    let states = simulate_pendulum(&params).unwrap();
    let lifted = orthogonal_embed(&states, 64, seed + 2).unwrap();
    let noisy = add_gaussian_noise(&lifted, noise_std, seed + 3).unwrap();
    let data = split_dataset(&noisy, (400, 1500, 2100))
        .unwrap()
        .with_truncated_train(train_len)
        .unwrap();
    println!("data ready in {:?}", t0.elapsed());

    let latent: usize = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(8);
    let depth: usize = args.get(7).and_then(|s| s.parse().ok()).unwrap_or(2);
    let mut cfg = ModelConfig::new(64, variant, seed + 4);
    cfg.latent_dim = latent;
    cfg.coupling_depth = depth;
    let mut model = KiaModel::new(cfg).unwrap();
    let config = TrainConfig {
        k_steps,
        max_epochs,
        seed: seed + 5,
        ..Default::default()
    };
    let weights = LossWeights::for_variant(variant);
    let t1 = Instant::now();
    let outcome = train(&mut model, &data, &config, &weights).unwrap();
    for e in outcome.history.iter().step_by(25) {
        println!(
            "  epoch {:3}: recon {:.3e} fwd {:.3e} bwd {:.3e} val {:.3e}",
            e.epoch, e.recon, e.fwd, e.bwd, e.total_val
        );
    }
    let last = outcome.history.last().unwrap();
    println!(
        "trained {} epochs in {:?} (best epoch {}, best val {:.3e}, early stop {})",
        outcome.history.len(),
        t1.elapsed(),
        outcome.best_epoch,
        outcome.best_val,
        outcome.stopped_early
    );
    println!(
        "last epoch: recon {:.3e} fwd {:.3e} bwd {:.3e} train {:.3e} val {:.3e}",
        last.recon, last.fwd, last.bwd, last.total_train, last.total_val
    );

    let t2 = Instant::now();
    let report = evaluate_horizon(
        &Forecaster::Model(&model),
        &data,
        &HorizonConfig {
            n_inits: 30,
            horizon: 2000,
            metric: ErrorMetric::Relative,
            clean_targets: false,
        },
        ReportMeta {
            model: variant.as_str().into(),
            seed,
            noise_std: 0.0,
            label: format!("theta0={theta0}"),
        },
    )
    .unwrap();
    println!("evaluated in {:?}", t2.elapsed());
    println!(
        "{} theta0={theta0} k={k_steps} d={latent}/{depth} noise={noise_std} train={train_len}: all {:.4}±{:.4}  first100 {:.4}±{:.4}  last100 {:.4}±{:.4}",
        variant,
        report.all.mean,
        report.all.std,
        report.first100.mean,
        report.first100.std,
        report.last100.mean,
        report.last100.std
    );
}

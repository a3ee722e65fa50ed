// Scratch climate experiment runner used while tuning; not in the test suite.
use std::time::Instant;

use kia_core::dynamics::{compute_climatology, generate_synthetic_sst, GridParams};
use kia_core::eval::{evaluate_k_day, Forecaster, ReportMeta};
use kia_core::model::{KiaModel, ModelConfig, Variant};
use kia_core::train::{train, LossWeights, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let k_steps: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(4);
    let max_epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(500);
    let seed: u64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0);

    let params = GridParams::new(8, 8, 5, seed + 1);
    let mut series = generate_synthetic_sst(&params).unwrap();
    series.climatology = Some(compute_climatology(&series, series.split_days.0).unwrap());
    let data = series.as_trajectory();

    let mut cfg = ModelConfig::new(64, Variant::Kia, seed + 4);
    cfg.latent_dim = 8;
    let mut model = KiaModel::new(cfg).unwrap();
    // standardize on training-split statistics
    let train_rows = data.train_range();
    let n = train_rows.len() as f64;
    let mut shift = vec![0.0; data.dim];
    for i in train_rows.clone() {
        for (acc, v) in shift.iter_mut().zip(data.row(i)) {
            *acc += v;
        }
    }
    for s in shift.iter_mut() {
        *s /= n;
    }
    let mut ss = 0.0;
    for i in train_rows.clone() {
        for (s, v) in shift.iter().zip(data.row(i)) {
            ss += (v - s) * (v - s);
        }
    }
    let scale = (ss / (n * data.dim as f64)).sqrt();
    model.set_normalizer(shift, scale).unwrap();
    let config = TrainConfig {
        k_steps,
        max_epochs,
        seed: seed + 5,
        ..Default::default()
    };
    let t0 = Instant::now();
    let outcome = train(&mut model, &data, &config, &LossWeights::for_variant(Variant::Kia)).unwrap();
    println!(
        "trained {} epochs in {:?} (best {}, val {:.4e})",
        outcome.history.len(),
        t0.elapsed(),
        outcome.best_epoch,
        outcome.best_val
    );

    let meta = |m: &str| ReportMeta {
        model: m.into(),
        seed,
        noise_std: 0.0,
        label: "synthetic".into(),
    };
    let leads = [1usize, 7, 14, 21, 30];
    let clim = series.climatology.clone().unwrap();
    for forecaster in [
        Forecaster::Model(&model),
        Forecaster::Persistence,
        Forecaster::Climatology {
            climatology: &clim,
            cells: series.cells(),
        },
    ] {
        let label = forecaster.label();
        let table = evaluate_k_day(&forecaster, &series, &leads, meta(label)).unwrap();
        let row: Vec<String> = table
            .entries
            .iter()
            .map(|e| format!("K={}: {:.3}", e.lead, e.mean_mae))
            .collect();
        println!("{label:<12} {}", row.join("  "));
    }
}

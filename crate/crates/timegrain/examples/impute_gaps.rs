//! Pretrain a point-token model (patch length 1, the patching step
//! omitted) and reconstruct randomly missing points by blank infilling.
//!
//!     cargo run --release --example impute_gaps

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use timegrain::backbone::{Model, ModelConfig};
use timegrain::data::{synthesize, Component, SyntheticSpec};
use timegrain::pretrain::{pretrain, TrainConfig};
use timegrain::tasks::impute;

fn main() -> timegrain::Result<()> {
    let spec = SyntheticSpec {
        name: "sine".into(),
        channels: 2,
        len: 2048,
        components: vec![Component {
            period: 64.0,
            amplitude: 1.0,
            phase: 0.0,
        }],
        noise_sigma: 0.1,
        anomalies: None,
        missing_ratio: None,
        granularity: [0, 0, 15, 0, 0],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut dataset, _) = synthesize(&spec, &mut rng)?;
    timegrain::data::split(&mut dataset, (0.7, 0.1, 0.2))?;

    let mut model: Model<f32> = Model::new(ModelConfig {
        d_model: 64,
        n_layers: 2,
        patch_len: 1,
        n_heads: 4,
        d_fk: 16,
        max_pos: 128,
        max_span: 32,
        seed: 2,
        ..ModelConfig::default()
    })?;
    let train_cfg = TrainConfig {
        lr: 2e-3,
        batch_size: 8,
        epochs: 100,
        max_steps: Some(500),
        window_len: 64,
        window_stride: 32,
        mask_ratio: 0.25,
        tail_prob: 0.3,
        early_stop_patience: 20,
        seed: 3,
        ..TrainConfig::default()
    };
    let started = std::time::Instant::now();
    let report = pretrain(&dataset, &mut model, &train_cfg)?;
    println!(
        "pretrained {} steps in {:.2?} (val {:?} -> {:?})",
        report.steps.len(),
        started.elapsed(),
        report.initial_val_loss,
        report.final_val_loss
    );
    for log in report.steps.iter().step_by(40) {
        println!("step {:4} train_loss {:.4}", log.step, log.train_loss);
    }

    // 25% point-wise missing over the test region
    let test = dataset.splits.test.clone();
    let series: Vec<Vec<f64>> = (0..dataset.n_channels())
        .map(|c| dataset.channel(c)[test.clone()].to_vec())
        .collect();
    let mut mask_rng = ChaCha8Rng::seed_from_u64(4);
    let missing: Vec<bool> = (0..series[0].len()).map(|_| mask_rng.random_bool(0.25)).collect();

    let started = std::time::Instant::now();
    let filled = impute(&model, &series, &missing, &dataset.granularity, 64)?;
    println!("imputed in {:.2?}", started.elapsed());

    let mut se = 0.0;
    let mut n = 0usize;
    let mut var_acc = 0.0;
    for c in 0..series.len() {
        let mean = series[c].iter().sum::<f64>() / series[c].len() as f64;
        var_acc += series[c].iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / series[c].len() as f64;
        for t in 0..series[c].len() {
            if missing[t] {
                se += (filled[c][t] - series[c][t]).powi(2);
                n += 1;
            } else {
                assert_eq!(filled[c][t].to_bits(), series[c][t].to_bits());
            }
        }
    }
    let variance = var_acc / series.len() as f64;
    let mse = se / n as f64;
    println!("imputation MSE {mse:.4} on {n} missing points (series variance {variance:.4})");
    println!("beats mean imputation: {}", mse < variance);
    Ok(())
}

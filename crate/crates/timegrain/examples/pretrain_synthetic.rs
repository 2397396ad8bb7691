//! Pretrain the desk-scale model on synthetic sine+noise data with the
//! blank-infilling objective and print the loss curve.
//!
//!     cargo run --release --example pretrain_synthetic

use timegrain::backbone::{Model, ModelConfig};
use timegrain::data::{synthesize, Component, SyntheticSpec};
use timegrain::pretrain::{pretrain, TrainConfig};

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
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(42);
    let (dataset, _) = synthesize(&spec, &mut rng)?;

    let model_cfg = ModelConfig {
        d_model: 64,
        n_layers: 2,
        patch_len: 16,
        n_heads: 4,
        d_fk: 16,
        max_pos: 256,
        max_span: 32,
        seed: 1,
        ..ModelConfig::default()
    };
    let mut model: Model<f32> = Model::new(model_cfg)?;
    println!("model parameters: {}", model.n_params());

    let train_cfg = TrainConfig {
        lr: 1e-3,
        batch_size: 8,
        epochs: 100,
        max_steps: Some(200),
        warmup_steps: 10,
        window_len: 128,
        window_stride: 32,
        seed: 7,
        ..TrainConfig::default()
    };
    let started = std::time::Instant::now();
    let report = pretrain(&dataset, &mut model, &train_cfg)?;
    let elapsed = started.elapsed();

    for log in report.steps.iter().step_by(20) {
        println!(
            "step {:4}  lr {:.2e}  train_loss {:.4}",
            log.step, log.lr, log.train_loss
        );
    }
    if let (Some(initial), Some(fin)) = (report.initial_val_loss, report.final_val_loss) {
        println!("validation loss: {initial:.4} -> {fin:.4} ({:.1}%)", 100.0 * fin / initial);
    }
    println!("trained {} steps in {elapsed:.2?}", report.steps.len());
    Ok(())
}

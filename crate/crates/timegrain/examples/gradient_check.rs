//! Verify analytic gradients against central finite differences at
//! float64, per operation and through a complete two-layer model.
//!
//!     cargo run --release --example gradient_check

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use timegrain::backbone::{Model, ModelConfig};
use timegrain::embedding::{
    build_infilling_instance, GranularityQuintuple, PatchMatrix, SpanSet,
};
use timegrain::numerics::{grad_check, GradCheckConfig, Graph, Tensor};
use timegrain::pretrain::infilling_loss_graph;

fn rand_t(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn main() -> timegrain::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);

    // one standalone op: linear layer under a mean loss
    let params = vec![
        ("x".to_string(), rand_t(vec![3, 4], &mut rng)),
        ("w".to_string(), rand_t(vec![4, 2], &mut rng)),
        ("b".to_string(), rand_t(vec![2], &mut rng)),
    ];
    let report = grad_check(
        &params,
        |vals| {
            let mut g = Graph::new();
            let ids: Vec<_> = vals.iter().map(|t| g.leaf(t.clone())).collect();
            let y = g.matmul(ids[0], ids[1])?;
            let y = g.add_bias(y, ids[2])?;
            let loss = g.mean_all(y)?;
            let grads = g.backward(loss)?;
            Ok((
                g.value(loss).data()[0],
                ids.iter().map(|&i| grads[i].clone()).collect(),
            ))
        },
        &GradCheckConfig::default(),
    )?;
    println!("linear op: max relative error {:.3e}", report.max_rel_err);

    // the full model: embedding, both attention blocks, projection, loss
    let config = ModelConfig {
        d_model: 32,
        n_layers: 2,
        patch_len: 8,
        n_heads: 4,
        d_fk: 8,
        max_pos: 16,
        max_span: 8,
        seed: 1,
        ..ModelConfig::default()
    };
    let model: Model<f64> = Model::new(config.clone())?;
    let patches = rand_t(vec![8, 8], &mut rng);
    let pm = PatchMatrix {
        patches,
        window_start: 0,
        channel: 0,
        stride: 64,
        window_len: 64,
    };
    let spans = SpanSet::identity_order(vec![(2, 2), (6, 1)], 8).unwrap();
    let inst = build_infilling_instance(&pm, &spans)?;
    println!("instance: {} tokens", inst.n_tokens());
    let quintuple = GranularityQuintuple::new(0, 0, 15, 0, 0);

    let named: Vec<(String, Tensor<f64>)> = model
        .params()
        .iter()
        .map(|p| (p.name.clone(), p.value.clone()))
        .collect();
    let started = std::time::Instant::now();
    let report = grad_check(
        &named,
        |vals| {
            let mut probe: Model<f64> = Model::new(config.clone())?;
            for (p, v) in probe.params_mut().iter_mut().zip(vals) {
                p.value = v.clone();
            }
            let mut g = Graph::new();
            let fv = probe.build_forward(&mut g, &inst, &quintuple)?;
            let loss = infilling_loss_graph(&mut g, fv.predictions, &inst)?;
            let grads = g.backward(loss)?;
            Ok((
                g.value(loss).data()[0],
                fv.param_vars.iter().map(|&i| grads[i].clone()).collect(),
            ))
        },
        &GradCheckConfig {
            max_entries_per_param: 24,
            ..GradCheckConfig::default()
        },
    )?;
    println!(
        "full model ({} tensors): max relative error {:.3e} in {:.2?}",
        report.per_param.len(),
        report.max_rel_err,
        started.elapsed()
    );
    if let Some(worst) = report.worst() {
        println!("worst parameter: {} ({:.3e})", worst.name, worst.max_rel_err);
    }
    Ok(())
}

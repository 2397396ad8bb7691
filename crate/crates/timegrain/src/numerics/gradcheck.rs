use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;

/// Settings for [`grad_check`]. Central differences with `step` are
/// evaluated on up to `max_entries_per_param` entries of each parameter
/// (half picked by largest analytic gradient, half uniformly at random),
/// so large tables are sampled instead of swept.
#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    pub step: f64,
    pub max_entries_per_param: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-5,
            max_entries_per_param: 64,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_err: f64,
    pub entries_checked: usize,
}

/// Outcome of a finite-difference verification run; lists the worst
/// relative error per parameter.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub per_param: Vec<ParamCheck>,
    pub max_rel_err: f64,
}

impl GradCheckReport {
    pub fn worst(&self) -> Option<&ParamCheck> {
        self.per_param
            .iter()
            .max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
    }
}

/// `|a - n| / max(1, |a|, |n|)`: relative for O(1)-and-larger gradients,
/// absolute below that so the roundoff floor of the difference quotient
/// does not register as failure on near-zero gradients.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}

/// Verify analytic gradients of a pure scalar-valued computation against
/// central finite differences at float64.
///
/// `run` receives candidate parameter values and must return the loss and
/// one gradient tensor per parameter (same order and shapes as `params`).
pub fn grad_check(
    params: &[(String, Tensor<f64>)],
    run: impl Fn(&[Tensor<f64>]) -> Result<(f64, Vec<Tensor<f64>>)>,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    let mut values: Vec<Tensor<f64>> = params.iter().map(|(_, t)| t.clone()).collect();
    let (loss0, analytic) = run(&values)
        .map_err(|e| Error::Numeric(format!("grad_check forward pass failed: {e}")))?;
    if !loss0.is_finite() {
        return Err(Error::Numeric("grad_check: non-finite loss".into()));
    }
    if analytic.len() != params.len() {
        return Err(Error::Dimension(format!(
            "grad_check: run returned {} gradients for {} parameters",
            analytic.len(),
            params.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut per_param = Vec::with_capacity(params.len());
    for (pi, (name, _)) in params.iter().enumerate() {
        let numel = values[pi].numel();
        let entries = pick_entries(
            analytic[pi].data(),
            cfg.max_entries_per_param,
            &mut rng,
        );
        let mut worst = 0.0f64;
        for &e in &entries {
            let orig = values[pi].data()[e];
            values[pi].data_mut()[e] = orig + cfg.step;
            let (lp, _) = run(&values).map_err(|err| {
                Error::Numeric(format!(
                    "grad_check: +step eval failed at {name}[{e}]: {err}"
                ))
            })?;
            values[pi].data_mut()[e] = orig - cfg.step;
            let (lm, _) = run(&values).map_err(|err| {
                Error::Numeric(format!(
                    "grad_check: -step eval failed at {name}[{e}]: {err}"
                ))
            })?;
            values[pi].data_mut()[e] = orig;
            let numeric = (lp - lm) / (2.0 * cfg.step);
            let err = rel_err(analytic[pi].data()[e], numeric);
            if err > worst {
                worst = err;
            }
        }
        let _ = numel;
        per_param.push(ParamCheck {
            name: name.clone(),
            max_rel_err: worst,
            entries_checked: entries.len(),
        });
    }
    let max_rel_err = per_param
        .iter()
        .map(|p| p.max_rel_err)
        .fold(0.0f64, f64::max);
    Ok(GradCheckReport {
        per_param,
        max_rel_err,
    })
}

fn pick_entries(grad: &[f64], max_entries: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = grad.len();
    if n <= max_entries {
        return (0..n).collect();
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| grad[b].abs().total_cmp(&grad[a].abs()));
    let mut picked: Vec<usize> = order[..max_entries / 2].to_vec();
    while picked.len() < max_entries {
        let e = rng.random_range(0..n);
        if !picked.contains(&e) {
            picked.push(e);
        }
    }
    picked
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::graph::Graph;

    fn random_tensor(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn linear_passes_at_1e4() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random_tensor(vec![3, 4], &mut rng);
        let w = random_tensor(vec![4, 2], &mut rng);
        let b = random_tensor(vec![2], &mut rng);
        let params = vec![
            ("x".to_string(), x),
            ("w".to_string(), w),
            ("b".to_string(), b),
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
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-4, "report: {report:?}");
    }

    #[test]
    fn softmax_linear_chain_passes_at_1e4() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random_tensor(vec![4, 3], &mut rng);
        let w = random_tensor(vec![3, 5], &mut rng);
        let params = vec![("x".to_string(), x), ("w".to_string(), w)];
        let report = grad_check(
            &params,
            |vals| {
                let mut g = Graph::new();
                let x = g.leaf(vals[0].clone());
                let w = g.leaf(vals[1].clone());
                let y = g.matmul(x, w)?;
                let p = g.softmax_rows(y)?;
                let sq = g.mul(p, p)?;
                let loss = g.mean_all(sq)?;
                let grads = g.backward(loss)?;
                Ok((
                    g.value(loss).data()[0],
                    vec![grads[x].clone(), grads[w].clone()],
                ))
            },
            &GradCheckConfig::default(),
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-4, "report: {report:?}");
    }

    #[test]
    fn layer_norm_passes() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let x = random_tensor(vec![5, 6], &mut rng);
        let gamma = random_tensor(vec![6], &mut rng);
        let beta = random_tensor(vec![6], &mut rng);
        let params = vec![
            ("x".to_string(), x),
            ("gamma".to_string(), gamma),
            ("beta".to_string(), beta),
        ];
        let report = grad_check(
            &params,
            |vals| {
                let mut g = Graph::new();
                let ids: Vec<_> = vals.iter().map(|t| g.leaf(t.clone())).collect();
                let y = g.layer_norm(ids[0], ids[1], ids[2], 1e-8)?;
                let sq = g.mul(y, y)?;
                let loss = g.mean_all(sq)?;
                let grads = g.backward(loss)?;
                Ok((
                    g.value(loss).data()[0],
                    ids.iter().map(|&i| grads[i].clone()).collect(),
                ))
            },
            &GradCheckConfig::default(),
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-3, "report: {report:?}");
    }

    #[test]
    fn ops_pass_across_ten_seeds_on_small_shapes() {
        for seed in 0..10u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let params = vec![
                ("x".to_string(), random_tensor(vec![5, 7], &mut rng)),
                ("w".to_string(), random_tensor(vec![7, 8], &mut rng)),
                ("b".to_string(), random_tensor(vec![8], &mut rng)),
                ("g".to_string(), random_tensor(vec![8], &mut rng)),
                ("z".to_string(), random_tensor(vec![8], &mut rng)),
            ];
            let report = grad_check(
                &params,
                |vals| {
                    let mut g = Graph::new();
                    let ids: Vec<_> = vals.iter().map(|t| g.leaf(t.clone())).collect();
                    let y = g.matmul(ids[0], ids[1])?;
                    let y = g.add_bias(y, ids[2])?;
                    let y = g.layer_norm(y, ids[3], ids[4], 1e-8)?;
                    let p = g.softmax_rows(y)?;
                    let sq = g.mul(p, p)?;
                    let loss = g.mean_all(sq)?;
                    let grads = g.backward(loss)?;
                    Ok((
                        g.value(loss).data()[0],
                        ids.iter().map(|&i| grads[i].clone()).collect(),
                    ))
                },
                &GradCheckConfig {
                    seed,
                    ..GradCheckConfig::default()
                },
            )
            .unwrap();
            assert!(report.max_rel_err < 1e-3, "seed {seed}: {:?}", report.worst());
        }
    }

    #[test]
    fn reports_per_parameter() {
        let x = Tensor::new(vec![2], vec![0.5, -0.25]).unwrap();
        let params = vec![("x".to_string(), x)];
        let report = grad_check(
            &params,
            |vals| {
                let mut g = Graph::new();
                let x = g.leaf(vals[0].clone());
                let sq = g.mul(x, x)?;
                let loss = g.sum_all(sq)?;
                let grads = g.backward(loss)?;
                Ok((g.value(loss).data()[0], vec![grads[x].clone()]))
            },
            &GradCheckConfig::default(),
        )
        .unwrap();
        assert_eq!(report.per_param.len(), 1);
        assert_eq!(report.per_param[0].name, "x");
        assert_eq!(report.per_param[0].entries_checked, 2);
    }
}

//! Finite-difference verification of analytic gradients.

use super::{Result, Tensor};

/// Relative disagreement between two gradient buffers:
/// `max_j |a_j - n_j| / max(|a_j|, |n_j|, 1e-12)`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-12))
        .fold(0.0, f64::max)
}

/// Central-difference gradient of `build`'s scalar output w.r.t. one leaf.
///
/// `build` must be a pure function of the leaf values: it is re-invoked with
/// perturbed copies, two evaluations per element.
pub fn numeric_gradient<F>(
    build: &F,
    leaves: &[Tensor],
    leaf_index: usize,
    epsilon: f64,
) -> Result<Vec<f64>>
where
    F: Fn(&[Tensor]) -> Result<Tensor>,
{
    assert!(epsilon > 0.0, "epsilon must be positive");
    let base: Vec<Vec<f64>> = leaves.iter().map(|t| t.values()).collect();
    let count = leaves[leaf_index].shape().count();
    let mut grad = vec![0.0; count];
    for j in 0..count {
        let eval = |delta: f64| -> Result<f64> {
            let perturbed: Vec<Tensor> = leaves
                .iter()
                .enumerate()
                .map(|(k, t)| {
                    let mut values = base[k].clone();
                    if k == leaf_index {
                        values[j] += delta;
                    }
                    Tensor::from_values(t.shape(), values)
                })
                .collect::<Result<_>>()?;
            Ok(build(&perturbed)?.item())
        };
        let plus = eval(epsilon)?;
        let minus = eval(-epsilon)?;
        grad[j] = (plus - minus) / (2.0 * epsilon);
    }
    Ok(grad)
}

/// Compare analytic gradients against central differences for every leaf.
/// Returns the per-leaf maximum relative error, in leaf order.
pub fn grad_check<F>(build: &F, leaves: &[Tensor], epsilon: f64) -> Result<Vec<f64>>
where
    F: Fn(&[Tensor]) -> Result<Tensor>,
{
    // Analytic pass on differentiable copies of the leaves.
    let tracked: Vec<Tensor> = leaves
        .iter()
        .map(|t| Tensor::param(t.shape(), t.values()))
        .collect::<Result<_>>()?;
    let loss = build(&tracked)?;
    loss.backward()?;

    let mut errors = Vec::with_capacity(leaves.len());
    for (idx, leaf) in tracked.iter().enumerate() {
        let analytic = leaf
            .grad()
            .unwrap_or_else(|| vec![0.0; leaf.shape().count()]);
        let numeric = numeric_gradient(build, leaves, idx, epsilon)?;
        errors.push(max_relative_error(&analytic, &numeric));
    }
    Ok(errors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Shape, Tensor};

    #[test]
    fn affine_graph_is_exact() {
        // loss = sum(3x) via x + x + x; central differences are exact for
        // affine maps, so the error is pure floating-point noise.
        let x = Tensor::from_values(Shape::new(1, 1, 2, 2), vec![0.3, -1.2, 2.0, 0.7]).unwrap();
        let build = |leaves: &[Tensor]| {
            let x = &leaves[0];
            Ok(x.add(x)?.add(x)?.sum())
        };
        let errs = grad_check(&build, &[x], 1e-5).unwrap();
        assert!(errs[0] < 1e-10, "affine rel err {}", errs[0]);
    }

    #[test]
    fn relu_away_from_kink_is_tight() {
        let values = vec![0.8, -0.6, 1.4, -2.2, 0.5, -0.9, 1.1, 2.3];
        let x = Tensor::from_values(Shape::new(1, 2, 2, 2), values).unwrap();
        let build = |leaves: &[Tensor]| Ok(leaves[0].relu().sum());
        let errs = grad_check(&build, &[x], 1e-4).unwrap();
        assert!(errs[0] < 1e-8, "relu rel err {}", errs[0]);
    }
}

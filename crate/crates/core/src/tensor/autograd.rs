//! Reverse-mode sweep over the recorded graph.

use std::collections::{HashMap, HashSet};

use super::{ops, Edge, Result, Tensor, TensorError};

/// Backpropagate from a scalar loss.
///
/// Interior nodes use transient buffers that live only for the sweep; leaf
/// tensors accumulate persistently, so a second `backward` without a reset
/// adds another copy of the gradient, and a tensor consumed by several
/// operations receives the sum of all upstream contributions.
pub(super) fn backward(loss: &Tensor) -> Result<()> {
    if loss.shape().count() != 1 {
        return Err(TensorError::NonScalarLoss(loss.shape()));
    }
    if loss.is_leaf() {
        if loss.requires_grad() {
            loss.accumulate_grad(&[1.0]);
        }
        return Ok(());
    }
    let order = topological_order(loss);
    let mut transient: HashMap<u64, Vec<f64>> = HashMap::new();
    transient.insert(loss.id(), vec![1.0]);
    for node in order.iter().rev() {
        if node.is_leaf() || !node.requires_grad() {
            continue;
        }
        let Some(grad_out) = transient.remove(&node.id()) else {
            continue;
        };
        let edge = node.edge().expect("non-leaf node has an edge");
        propagate(edge, &grad_out, node, &mut transient);
    }
    Ok(())
}

/// Send a gradient contribution to a tensor: persistently for leaves,
/// into the sweep-local buffer for interior nodes.
fn route(t: &Tensor, contribution: Vec<f64>, transient: &mut HashMap<u64, Vec<f64>>) {
    if !t.requires_grad() {
        return;
    }
    if t.is_leaf() {
        t.accumulate_grad(&contribution);
        return;
    }
    match transient.entry(t.id()) {
        std::collections::hash_map::Entry::Occupied(mut slot) => {
            for (g, c) in slot.get_mut().iter_mut().zip(&contribution) {
                *g += c;
            }
        }
        std::collections::hash_map::Entry::Vacant(slot) => {
            slot.insert(contribution);
        }
    }
}

/// Iterative post-order DFS; children are pushed in the fixed order the
/// edge reports, so the resulting accumulation sequence is reproducible.
fn topological_order(root: &Tensor) -> Vec<Tensor> {
    let mut order = Vec::new();
    let mut visited = HashSet::new();
    // (tensor, children_expanded)
    let mut stack: Vec<(Tensor, bool)> = vec![(root.clone(), false)];
    while let Some((node, expanded)) = stack.pop() {
        if expanded {
            order.push(node);
            continue;
        }
        if !visited.insert(node.id()) {
            continue;
        }
        if let Some(edge) = node.edge() {
            let inputs: Vec<Tensor> = edge.inputs().into_iter().cloned().collect();
            stack.push((node, true));
            for input in inputs.into_iter().rev() {
                stack.push((input, false));
            }
        } else {
            order.push(node);
        }
    }
    order
}

fn propagate(
    edge: &Edge,
    grad_out: &[f64],
    node: &Tensor,
    transient: &mut HashMap<u64, Vec<f64>>,
) {
    match edge {
        Edge::Conv2d {
            input,
            weight,
            bias,
            padding,
        } => {
            let out_shape = node.shape();
            if input.requires_grad() {
                let grad_in = weight.with_values(|w| {
                    ops::conv2d_backward_input(
                        grad_out,
                        out_shape,
                        w,
                        weight.shape(),
                        input.shape(),
                        *padding,
                    )
                });
                route(input, grad_in, transient);
            }
            if weight.requires_grad() {
                let grad_w = input.with_values(|v| {
                    ops::conv2d_backward_weight(
                        grad_out,
                        out_shape,
                        v,
                        input.shape(),
                        weight.shape(),
                        *padding,
                    )
                });
                route(weight, grad_w, transient);
            }
            if bias.requires_grad() {
                let grad_b = ops::conv2d_backward_bias(grad_out, out_shape);
                route(bias, grad_b, transient);
            }
        }
        Edge::Relu { input } => {
            if input.requires_grad() {
                let grad_in: Vec<f64> = input.with_values(|v| {
                    v.iter()
                        .zip(grad_out)
                        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
                        .collect()
                });
                route(input, grad_in, transient);
            }
        }
        Edge::ConcatChannels { inputs } => {
            let out_shape = node.shape();
            let plane = out_shape.h * out_shape.w;
            let mut c_base = 0;
            for t in inputs {
                let s = t.shape();
                if t.requires_grad() {
                    let mut grad_in = vec![0.0; s.count()];
                    for n in 0..s.n {
                        let src = (n * out_shape.c + c_base) * plane;
                        let dst = n * s.c * plane;
                        grad_in[dst..dst + s.c * plane]
                            .copy_from_slice(&grad_out[src..src + s.c * plane]);
                    }
                    route(t, grad_in, transient);
                }
                c_base += s.c;
            }
        }
        Edge::Add { lhs, rhs } => {
            if lhs.requires_grad() {
                route(lhs, grad_out.to_vec(), transient);
            }
            if rhs.requires_grad() {
                route(rhs, grad_out.to_vec(), transient);
            }
        }
        Edge::PixelShuffle { input, upscale } => {
            if input.requires_grad() {
                let r = *upscale;
                let r2 = r * r;
                let in_shape = input.shape();
                let out_shape = node.shape();
                let mut grad_in = vec![0.0; in_shape.count()];
                for n in 0..in_shape.n {
                    for o in 0..out_shape.c {
                        for y in 0..in_shape.h {
                            for x in 0..in_shape.w {
                                for dy in 0..r {
                                    for dx in 0..r {
                                        let src =
                                            out_shape.offset(n, o, y * r + dy, x * r + dx);
                                        let dst =
                                            in_shape.offset(n, o * r2 + dy * r + dx, y, x);
                                        grad_in[dst] = grad_out[src];
                                    }
                                }
                            }
                        }
                    }
                }
                route(input, grad_in, transient);
            }
        }
        Edge::L1Loss { pred, target } => {
            if pred.requires_grad() {
                let g = grad_out[0];
                let count = pred.shape().count() as f64;
                let grad_in: Vec<f64> = pred.with_values(|p| {
                    target.with_values(|t| {
                        p.iter()
                            .zip(t)
                            .map(|(&a, &b)| {
                                let d = a - b;
                                if d > 0.0 {
                                    g / count
                                } else if d < 0.0 {
                                    -g / count
                                } else {
                                    0.0
                                }
                            })
                            .collect()
                    })
                });
                route(pred, grad_in, transient);
            }
        }
        Edge::Sum { input } => {
            if input.requires_grad() {
                let g = grad_out[0];
                route(input, vec![g; input.shape().count()], transient);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use crate::tensor::{Shape, Tensor};

    #[test]
    fn sum_of_leaf_gives_all_ones() {
        let x = Tensor::param(Shape::new(1, 2, 2, 2), vec![3.0; 8]).unwrap();
        let loss = x.sum();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0; 8]);
    }

    #[test]
    fn fanout_accumulates() {
        let x = Tensor::param(Shape::new(1, 1, 2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let doubled = x.add(&x).unwrap();
        let loss = doubled.sum();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0; 4]);
    }

    #[test]
    fn repeated_backward_accumulates_without_reset() {
        let x = Tensor::param(Shape::new(1, 1, 1, 2), vec![1.0, 2.0]).unwrap();
        let loss = x.sum();
        loss.backward().unwrap();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0, 2.0]);
        x.zero_grad();
        assert!(x.grad().is_none());
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let x = Tensor::param(Shape::new(1, 1, 1, 2), vec![1.0, 2.0]).unwrap();
        let y = x.add(&x).unwrap();
        assert!(y.backward().is_err());
    }

    #[test]
    fn relu_gradient_masks_by_sign() {
        let x = Tensor::param(Shape::new(1, 1, 1, 3), vec![2.0, -1.0, 0.0]).unwrap();
        let loss = x.relu().sum();
        loss.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn l1_gradient_is_scaled_sign() {
        let pred = Tensor::param(Shape::new(1, 1, 1, 2), vec![1.0, 2.0]).unwrap();
        let target = Tensor::from_values(Shape::new(1, 1, 1, 2), vec![0.0, 4.0]).unwrap();
        let loss = pred.l1_loss(&target).unwrap();
        loss.backward().unwrap();
        assert_eq!(pred.grad().unwrap(), vec![0.5, -0.5]);
    }

    #[test]
    fn graph_inspection_reports_ops_and_leaves() {
        let x = Tensor::param(Shape::new(1, 4, 2, 2), vec![0.5; 16]).unwrap();
        let y = x.relu().pixel_shuffle(2).unwrap();
        let ops = y.graph_op_names();
        assert!(ops.contains("relu"));
        assert!(ops.contains("pixel_shuffle"));
        assert!(!ops.contains("conv2d"));
        assert!(y.graph_leaf_ids().contains(&x.id()));
    }
}

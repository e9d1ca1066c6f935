//! Deterministic rank-4 tensor arithmetic with reverse-mode automatic
//! differentiation.
//!
//! Tensors are dense f64 arrays laid out row-major as `(batch, channels,
//! rows, cols)`. Non-leaf tensors remember the operation that produced them,
//! which gives `backward` a DAG to sweep. Values are immutable once a tensor
//! participates in a graph; the only mutable state is the gradient buffer
//! (and leaf values, which the optimizer rewrites between graphs through
//! [`Tensor::set_values`]).
//!
//! Every operation fixes the reduction order of each output element, so
//! results are bit-identical whether the internal loops run serially or on a
//! rayon pool.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use thiserror::Error;

mod autograd;
mod container;
mod gradcheck;
mod ops;

pub use container::{read_named_tensors, write_named_tensors, ContainerError, NamedTensor};
pub use gradcheck::{grad_check, max_relative_error, numeric_gradient};
pub use ops::{concat_channels, ConvParams};

/// Logical extents of a rank-4 tensor.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub fn new(n: usize, c: usize, h: usize, w: usize) -> Shape {
        Shape { n, c, h, w }
    }

    /// Total element count.
    pub fn count(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    /// Flat row-major offset of `(n, c, y, x)`.
    #[inline(always)]
    pub fn offset(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.c + c) * self.h + y) * self.w + x
    }

    /// Shape of a single scalar.
    pub fn scalar() -> Shape {
        Shape::new(1, 1, 1, 1)
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.n, self.c, self.h, self.w)
    }
}

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("value buffer holds {got} elements but shape {shape} needs {want}")]
    ValueCount {
        shape: Shape,
        want: usize,
        got: usize,
    },
    #[error("shape mismatch in {context}: {left} vs {right}")]
    ShapeMismatch {
        context: &'static str,
        left: Shape,
        right: Shape,
    },
    #[error("conv2d: input has {input} channels but the kernel expects {weight}")]
    ChannelMismatch { input: usize, weight: usize },
    #[error("conv2d: padded input ({padded_h}x{padded_w}) is smaller than the {kh}x{kw} kernel")]
    KernelTooLarge {
        padded_h: usize,
        padded_w: usize,
        kh: usize,
        kw: usize,
    },
    #[error("same-size padding requires odd kernel extents, got {kh}x{kw}")]
    EvenKernel { kh: usize, kw: usize },
    #[error("conv weight must be (c_out, c_in, k_h, k_w) with nonzero extents, got {0}")]
    BadWeightShape(Shape),
    #[error("conv bias must be (1, {c_out}, 1, 1), got {got}")]
    BadBiasShape { c_out: usize, got: Shape },
    #[error("pixel_shuffle: channel count {channels} is not divisible by {upscale}^2")]
    ShuffleChannels { channels: usize, upscale: usize },
    #[error("pixel_shuffle: upscale factor must be >= 1")]
    ZeroUpscale,
    #[error("concat_channels requires at least one input")]
    EmptyConcat,
    #[error("l1_loss target must not require gradients")]
    DifferentiableTarget,
    #[error("backward requires a scalar loss, got shape {0}")]
    NonScalarLoss(Shape),
    #[error("set_values applies to leaf tensors only")]
    NotALeaf,
}

pub type Result<T> = std::result::Result<T, TensorError>;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

/// The producing operation of a non-leaf tensor, holding its inputs alive.
pub(crate) enum Edge {
    Conv2d {
        input: Tensor,
        weight: Tensor,
        bias: Tensor,
        padding: (usize, usize),
    },
    Relu {
        input: Tensor,
    },
    ConcatChannels {
        inputs: Vec<Tensor>,
    },
    Add {
        lhs: Tensor,
        rhs: Tensor,
    },
    PixelShuffle {
        input: Tensor,
        upscale: usize,
    },
    L1Loss {
        pred: Tensor,
        target: Tensor,
    },
    Sum {
        input: Tensor,
    },
}

impl Edge {
    pub(crate) fn op_name(&self) -> &'static str {
        match self {
            Edge::Conv2d { .. } => "conv2d",
            Edge::Relu { .. } => "relu",
            Edge::ConcatChannels { .. } => "concat_channels",
            Edge::Add { .. } => "add",
            Edge::PixelShuffle { .. } => "pixel_shuffle",
            Edge::L1Loss { .. } => "l1_loss",
            Edge::Sum { .. } => "sum",
        }
    }

    /// Inputs in a fixed order; backward visits them in this order so the
    /// accumulation sequence is reproducible.
    pub(crate) fn inputs(&self) -> Vec<&Tensor> {
        match self {
            Edge::Conv2d {
                input,
                weight,
                bias,
                ..
            } => vec![input, weight, bias],
            Edge::Relu { input } => vec![input],
            Edge::ConcatChannels { inputs } => inputs.iter().collect(),
            Edge::Add { lhs, rhs } => vec![lhs, rhs],
            Edge::PixelShuffle { input, .. } => vec![input],
            Edge::L1Loss { pred, target } => vec![pred, target],
            Edge::Sum { input } => vec![input],
        }
    }
}

struct Inner {
    id: u64,
    shape: Shape,
    values: RwLock<Vec<f64>>,
    grad: Mutex<Option<Vec<f64>>>,
    requires_grad: bool,
    edge: Option<Edge>,
}

/// A rank-4 tensor; clones share the same storage and identity.
#[derive(Clone)]
pub struct Tensor {
    inner: Arc<Inner>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Tensor(id={}, shape={}, requires_grad={}, op={:?})",
            self.inner.id,
            self.inner.shape,
            self.inner.requires_grad,
            self.op_name()
        )
    }
}

impl Tensor {
    fn new(shape: Shape, values: Vec<f64>, requires_grad: bool, edge: Option<Edge>) -> Tensor {
        debug_assert_eq!(values.len(), shape.count());
        Tensor {
            inner: Arc::new(Inner {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                values: RwLock::new(values),
                grad: Mutex::new(None),
                requires_grad,
                edge,
            }),
        }
    }

    /// Constant leaf tensor (does not collect gradients).
    pub fn from_values(shape: Shape, values: Vec<f64>) -> Result<Tensor> {
        Self::leaf(shape, values, false)
    }

    /// Trainable leaf tensor.
    pub fn param(shape: Shape, values: Vec<f64>) -> Result<Tensor> {
        Self::leaf(shape, values, true)
    }

    pub fn leaf(shape: Shape, values: Vec<f64>, requires_grad: bool) -> Result<Tensor> {
        if values.len() != shape.count() {
            return Err(TensorError::ValueCount {
                shape,
                want: shape.count(),
                got: values.len(),
            });
        }
        Ok(Tensor::new(shape, values, requires_grad, None))
    }

    pub fn zeros(shape: Shape) -> Tensor {
        Tensor::new(shape, vec![0.0; shape.count()], false, None)
    }

    pub fn full(shape: Shape, value: f64) -> Tensor {
        Tensor::new(shape, vec![value; shape.count()], false, None)
    }

    pub(crate) fn from_op(shape: Shape, values: Vec<f64>, edge: Edge) -> Tensor {
        let requires_grad = edge.inputs().iter().any(|t| t.requires_grad());
        Tensor::new(shape, values, requires_grad, Some(edge))
    }

    pub fn id(&self) -> u64 {
        self.inner.id
    }

    pub fn shape(&self) -> Shape {
        self.inner.shape
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.inner.edge.is_none()
    }

    /// Copy of the value buffer.
    pub fn values(&self) -> Vec<f64> {
        self.inner.values.read().unwrap().clone()
    }

    /// Read access to the value buffer without copying.
    pub fn with_values<R>(&self, f: impl FnOnce(&[f64]) -> R) -> R {
        f(&self.inner.values.read().unwrap())
    }

    /// The single value of a scalar tensor.
    ///
    /// Panics if the tensor has more than one element.
    pub fn item(&self) -> f64 {
        let values = self.inner.values.read().unwrap();
        assert_eq!(values.len(), 1, "item() requires a scalar tensor");
        values[0]
    }

    /// Copy of the gradient buffer, if any backward pass has reached this
    /// tensor since the last reset.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.inner.grad.lock().unwrap().clone()
    }

    /// Drop the accumulated gradient.
    pub fn zero_grad(&self) {
        *self.inner.grad.lock().unwrap() = None;
    }

    pub(crate) fn accumulate_grad(&self, contribution: &[f64]) {
        debug_assert_eq!(contribution.len(), self.shape().count());
        let mut slot = self.inner.grad.lock().unwrap();
        match slot.as_mut() {
            Some(grad) => {
                for (g, c) in grad.iter_mut().zip(contribution) {
                    *g += c;
                }
            }
            None => *slot = Some(contribution.to_vec()),
        }
    }

    /// Overwrite the values of a leaf tensor (optimizer updates). The caller
    /// must hold exclusive access to any graph this leaf participates in.
    pub fn set_values(&self, new: &[f64]) -> Result<()> {
        if !self.is_leaf() {
            return Err(TensorError::NotALeaf);
        }
        if new.len() != self.shape().count() {
            return Err(TensorError::ValueCount {
                shape: self.shape(),
                want: self.shape().count(),
                got: new.len(),
            });
        }
        self.inner.values.write().unwrap().copy_from_slice(new);
        Ok(())
    }

    /// In-place update of a leaf tensor through a closure.
    pub fn update_values(&self, f: impl FnOnce(&mut [f64])) -> Result<()> {
        if !self.is_leaf() {
            return Err(TensorError::NotALeaf);
        }
        f(&mut self.inner.values.write().unwrap());
        Ok(())
    }

    pub(crate) fn edge(&self) -> Option<&Edge> {
        self.inner.edge.as_ref()
    }

    /// Name of the producing operation, or `None` for leaves.
    pub fn op_name(&self) -> Option<&'static str> {
        self.inner.edge.as_ref().map(|e| e.op_name())
    }

    /// Reverse-mode sweep: populates gradients of every reachable tensor
    /// that requires them. Gradients accumulate across calls until reset.
    pub fn backward(&self) -> Result<()> {
        autograd::backward(self)
    }

    /// Names of all operations appearing in the graph that produced this
    /// tensor (graph-inspection support).
    pub fn graph_op_names(&self) -> BTreeSet<&'static str> {
        let mut names = BTreeSet::new();
        self.visit_graph(&mut |t| {
            if let Some(edge) = t.edge() {
                names.insert(edge.op_name());
            }
        });
        names
    }

    /// Ids of all leaf tensors the graph reaches.
    pub fn graph_leaf_ids(&self) -> BTreeSet<u64> {
        let mut ids = BTreeSet::new();
        self.visit_graph(&mut |t| {
            if t.is_leaf() {
                ids.insert(t.id());
            }
        });
        ids
    }

    fn visit_graph(&self, f: &mut impl FnMut(&Tensor)) {
        let mut seen = HashSet::new();
        let mut stack = vec![self.clone()];
        while let Some(t) = stack.pop() {
            if !seen.insert(t.id()) {
                continue;
            }
            f(&t);
            if let Some(edge) = t.edge() {
                for input in edge.inputs() {
                    stack.push(input.clone());
                }
            }
        }
    }
}

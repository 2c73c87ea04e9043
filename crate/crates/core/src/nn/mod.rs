//! Minimal dense layers with hand-written backward passes.
//!
//! Activations are batch-major `[batch, features]` matrices; sequences are
//! `Vec`s of such matrices indexed by time. Gradient containers are values
//! of the same layer type initialised to zero.

mod lstm;

pub use lstm::{Lstm, LstmCache, LstmLayer};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

/// Default negative slope of [`leaky_relu`].
pub const LEAKY_SLOPE: f64 = 0.01;

/// Callback receiving a tensor's name, flat data and shape.
pub type TensorVisitor<'a> = dyn FnMut(&str, &[f64], &[usize]) + 'a;

/// Walks every trainable tensor in a fixed order.
pub trait Params {
    fn visit(&self, prefix: &str, f: &mut TensorVisitor<'_>);
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64]));

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, s, _| n += s.len());
        n
    }

    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.visit("", &mut |_, s, _| out.extend_from_slice(s));
        out
    }

    /// Inverse of [`Params::flatten`]. Panics if `flat` has the wrong length.
    fn assign(&mut self, flat: &[f64]) {
        let mut pos = 0;
        self.visit_mut("", &mut |_, s| {
            s.copy_from_slice(&flat[pos..pos + s.len()]);
            pos += s.len();
        });
        assert_eq!(pos, flat.len(), "parameter vector length");
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

pub fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

pub fn leaky_relu_grad(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        slope
    }
}

/// Affine map `y = x Wᵀ + b` with `W` of shape `[out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Linear {
    /// Weights uniform in `±1/sqrt(fan_in)`, zero bias.
    pub fn new<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        Linear { w: Array2::from_shape_fn((fan_out, fan_in), |_| dist.sample(rng)), b: Array1::zeros(fan_out) }
    }

    pub fn zeros_like(&self) -> Self {
        Linear { w: Array2::zeros(self.w.raw_dim()), b: Array1::zeros(self.b.len()) }
    }

    pub fn fan_in(&self) -> usize {
        self.w.ncols()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.w.t()) + &self.b
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, x: ArrayView2<f64>, dy: ArrayView2<f64>, grad: &mut Linear) -> Array2<f64> {
        grad.w += &dy.t().dot(&x);
        grad.b += &dy.sum_axis(Axis(0));
        dy.dot(&self.w)
    }
}

impl Params for Linear {
    fn visit(&self, prefix: &str, f: &mut TensorVisitor<'_>) {
        f(&join(prefix, "w"), self.w.as_slice().expect("standard layout"), self.w.shape());
        f(&join(prefix, "b"), self.b.as_slice().expect("standard layout"), self.b.shape());
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        f(&join(prefix, "w"), self.w.as_slice_mut().expect("standard layout"));
        f(&join(prefix, "b"), self.b.as_slice_mut().expect("standard layout"));
    }
}

/// `Linear -> LeakyReLU -> Linear`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp2 {
    pub l1: Linear,
    pub l2: Linear,
    pub slope: f64,
}

#[derive(Debug, Clone)]
pub struct Mlp2Cache {
    x: Array2<f64>,
    pre: Array2<f64>,
    act: Array2<f64>,
}

impl Mlp2 {
    pub fn new<R: Rng + ?Sized>(d_in: usize, hidden: usize, d_out: usize, slope: f64, rng: &mut R) -> Self {
        Mlp2 { l1: Linear::new(d_in, hidden, rng), l2: Linear::new(hidden, d_out, rng), slope }
    }

    pub fn zeros_like(&self) -> Self {
        Mlp2 { l1: self.l1.zeros_like(), l2: self.l2.zeros_like(), slope: self.slope }
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> (Array2<f64>, Mlp2Cache) {
        let pre = self.l1.forward(x);
        let act = pre.mapv(|v| leaky_relu(v, self.slope));
        let out = self.l2.forward(act.view());
        (out, Mlp2Cache { x: x.to_owned(), pre, act })
    }

    pub fn backward(&self, cache: &Mlp2Cache, dy: ArrayView2<f64>, grad: &mut Mlp2) -> Array2<f64> {
        let dact = self.l2.backward(cache.act.view(), dy, &mut grad.l2);
        let dpre = dact * &cache.pre.mapv(|v| leaky_relu_grad(v, self.slope));
        self.l1.backward(cache.x.view(), dpre.view(), &mut grad.l1)
    }
}

impl Params for Mlp2 {
    fn visit(&self, prefix: &str, f: &mut TensorVisitor<'_>) {
        self.l1.visit(&join(prefix, "l1"), f);
        self.l2.visit(&join(prefix, "l2"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.l1.visit_mut(&join(prefix, "l1"), f);
        self.l2.visit_mut(&join(prefix, "l2"), f);
    }
}

/// A random `n × n` orthogonal matrix (Gram-Schmidt on Gaussian columns).
pub fn orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Array2<f64> {
    loop {
        let mut q = Array2::<f64>::from_shape_fn((n, n), |_| StandardNormal.sample(rng));
        let mut ok = true;
        for j in 0..n {
            for k in 0..j {
                let proj = q.column(j).dot(&q.column(k));
                let qk = q.column(k).to_owned();
                q.column_mut(j).scaled_add(-proj, &qk);
            }
            let norm = q.column(j).dot(&q.column(j)).sqrt();
            if norm < 1e-8 {
                ok = false;
                break;
            }
            q.column_mut(j).mapv_inplace(|v| v / norm);
        }
        if ok {
            return q;
        }
    }
}

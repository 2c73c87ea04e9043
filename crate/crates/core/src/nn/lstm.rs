use ndarray::{s, Array1, Array2, Axis};
use rand::Rng;

use super::{join, orthogonal, sigmoid, Linear, Params, TensorVisitor};

/// One LSTM layer with gates ordered `i, f, g, o` and a single bias.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayer {
    /// `[4h, in]`
    pub wx: Array2<f64>,
    /// `[4h, h]`
    pub wh: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Debug, Clone)]
struct StepCache {
    x: Array2<f64>,
    h_prev: Array2<f64>,
    c_prev: Array2<f64>,
    c: Array2<f64>,
    /// Activated gates `[i | f | g | o]`.
    gates: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct LstmCache {
    layers: Vec<Vec<StepCache>>,
}

impl LstmLayer {
    pub fn new<R: Rng + ?Sized>(d_in: usize, hidden: usize, rng: &mut R) -> Self {
        let wx = Linear::new(d_in, 4 * hidden, rng).w;
        let mut wh = Array2::zeros((4 * hidden, hidden));
        for k in 0..4 {
            wh.slice_mut(s![k * hidden..(k + 1) * hidden, ..]).assign(&orthogonal(hidden, rng));
        }
        LstmLayer { wx, wh, b: Array1::zeros(4 * hidden) }
    }

    pub fn zeros_like(&self) -> Self {
        LstmLayer {
            wx: Array2::zeros(self.wx.raw_dim()),
            wh: Array2::zeros(self.wh.raw_dim()),
            b: Array1::zeros(self.b.len()),
        }
    }

    pub fn hidden(&self) -> usize {
        self.wh.ncols()
    }

    fn forward(&self, xs: &[Array2<f64>]) -> (Vec<Array2<f64>>, Vec<StepCache>) {
        let h = self.hidden();
        let batch = xs.first().map_or(0, |x| x.nrows());
        let mut h_prev = Array2::zeros((batch, h));
        let mut c_prev = Array2::zeros((batch, h));
        let mut hs = Vec::with_capacity(xs.len());
        let mut caches = Vec::with_capacity(xs.len());
        for x in xs {
            let mut gates = x.dot(&self.wx.t()) + h_prev.dot(&self.wh.t()) + &self.b;
            gates.slice_mut(s![.., 0..2 * h]).mapv_inplace(sigmoid);
            gates.slice_mut(s![.., 2 * h..3 * h]).mapv_inplace(f64::tanh);
            gates.slice_mut(s![.., 3 * h..]).mapv_inplace(sigmoid);
            let i = gates.slice(s![.., 0..h]);
            let f = gates.slice(s![.., h..2 * h]);
            let g = gates.slice(s![.., 2 * h..3 * h]);
            let o = gates.slice(s![.., 3 * h..]);
            let c = &f * &c_prev + &i * &g;
            let hn = &o * &c.mapv(f64::tanh);
            caches.push(StepCache { x: x.clone(), h_prev: h_prev.clone(), c_prev: c_prev.clone(), c: c.clone(), gates });
            hs.push(hn.clone());
            h_prev = hn;
            c_prev = c;
        }
        (hs, caches)
    }

    fn backward(&self, caches: &[StepCache], dhs: &[Array2<f64>], grad: &mut LstmLayer) -> Vec<Array2<f64>> {
        let h = self.hidden();
        let batch = dhs.first().map_or(0, |d| d.nrows());
        let mut dh_next = Array2::<f64>::zeros((batch, h));
        let mut dc_next = Array2::<f64>::zeros((batch, h));
        let mut dxs = vec![Array2::zeros((0, 0)); caches.len()];
        for t in (0..caches.len()).rev() {
            let sc = &caches[t];
            let i = sc.gates.slice(s![.., 0..h]);
            let f = sc.gates.slice(s![.., h..2 * h]);
            let g = sc.gates.slice(s![.., 2 * h..3 * h]);
            let o = sc.gates.slice(s![.., 3 * h..]);
            let dh = &dhs[t] + &dh_next;
            let tc = sc.c.mapv(f64::tanh);
            let d_o = &dh * &tc;
            let dc = &dh * &o * &tc.mapv(|v| 1.0 - v * v) + &dc_next;
            let mut dz = Array2::zeros((batch, 4 * h));
            dz.slice_mut(s![.., 0..h]).assign(&(&dc * &g * &i.mapv(|v| v * (1.0 - v))));
            dz.slice_mut(s![.., h..2 * h]).assign(&(&dc * &sc.c_prev * &f.mapv(|v| v * (1.0 - v))));
            dz.slice_mut(s![.., 2 * h..3 * h]).assign(&(&dc * &i * &g.mapv(|v| 1.0 - v * v)));
            dz.slice_mut(s![.., 3 * h..]).assign(&(&d_o * &o.mapv(|v| v * (1.0 - v))));
            dc_next = &dc * &f;
            grad.wx += &dz.t().dot(&sc.x);
            grad.wh += &dz.t().dot(&sc.h_prev);
            grad.b += &dz.sum_axis(Axis(0));
            dxs[t] = dz.dot(&self.wx);
            dh_next = dz.dot(&self.wh);
        }
        dxs
    }
}

impl Params for LstmLayer {
    fn visit(&self, prefix: &str, f: &mut TensorVisitor<'_>) {
        f(&join(prefix, "wx"), self.wx.as_slice().expect("standard layout"), self.wx.shape());
        f(&join(prefix, "wh"), self.wh.as_slice().expect("standard layout"), self.wh.shape());
        f(&join(prefix, "b"), self.b.as_slice().expect("standard layout"), self.b.shape());
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        f(&join(prefix, "wx"), self.wx.as_slice_mut().expect("standard layout"));
        f(&join(prefix, "wh"), self.wh.as_slice_mut().expect("standard layout"));
        f(&join(prefix, "b"), self.b.as_slice_mut().expect("standard layout"));
    }
}

/// Stacked LSTM; the output sequence is the top layer's hidden states.
#[derive(Debug, Clone, PartialEq)]
pub struct Lstm {
    pub layers: Vec<LstmLayer>,
}

impl Lstm {
    pub fn new<R: Rng + ?Sized>(d_in: usize, hidden: usize, num_layers: usize, rng: &mut R) -> Self {
        let layers = (0..num_layers.max(1))
            .map(|l| LstmLayer::new(if l == 0 { d_in } else { hidden }, hidden, rng))
            .collect();
        Lstm { layers }
    }

    pub fn zeros_like(&self) -> Self {
        Lstm { layers: self.layers.iter().map(LstmLayer::zeros_like).collect() }
    }

    pub fn forward(&self, xs: &[Array2<f64>]) -> (Vec<Array2<f64>>, LstmCache) {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut cur: Vec<Array2<f64>> = xs.to_vec();
        for layer in &self.layers {
            let (hs, c) = layer.forward(&cur);
            caches.push(c);
            cur = hs;
        }
        (cur, LstmCache { layers: caches })
    }

    /// Back-propagates `dhs` (gradients w.r.t. the top-layer outputs) through
    /// time and returns gradients w.r.t. the inputs.
    pub fn backward(&self, cache: &LstmCache, dhs: &[Array2<f64>], grad: &mut Lstm) -> Vec<Array2<f64>> {
        let mut cur = dhs.to_vec();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            cur = layer.backward(&cache.layers[l], &cur, &mut grad.layers[l]);
        }
        cur
    }
}

impl Params for Lstm {
    fn visit(&self, prefix: &str, f: &mut TensorVisitor<'_>) {
        for (l, layer) in self.layers.iter().enumerate() {
            layer.visit(&join(prefix, &format!("layer{l}")), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        for (l, layer) in self.layers.iter_mut().enumerate() {
            layer.visit_mut(&join(prefix, &format!("layer{l}")), f);
        }
    }
}

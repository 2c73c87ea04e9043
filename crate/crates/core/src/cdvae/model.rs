use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{CdvaeConfig, CdvaeError};
use crate::nn::{join, sigmoid, softplus, Lstm, LstmCache, Mlp2, Mlp2Cache, Params, TensorVisitor};
use crate::panel::Batch;
use crate::rng::{substream, Purpose};
use crate::weighting::{cost_gradient, cost_matrix, ipm_regularizer, normalize_panel_weights};

/// Lower bound on posterior variances.
pub const VAR_FLOOR: f64 = 1e-6;

/// Inference network: an LSTM over `[x_t, w_t, y_t]` and two maps from its
/// final state to the posterior mean and (pre-softplus) variance.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub lstm: Lstm,
    pub mu: Mlp2,
    pub var: Mlp2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CdvaeParams {
    pub encoder: Option<Encoder>,
    pub history: Lstm,
    pub ffn: Mlp2,
    pub head1: Mlp2,
    pub head0: Mlp2,
    pub propensity: Mlp2,
}

impl CdvaeParams {
    pub fn init(cfg: &CdvaeConfig) -> Self {
        let rng = &mut substream(cfg.seed, Purpose::Init, 0);
        let (h, z, phi, slope) = (cfg.lstm_hidden, cfg.z_dim, cfg.phi_dim, cfg.leaky_slope);
        let d_in = cfg.d_x + 2;
        let encoder = (z > 0).then(|| Encoder {
            lstm: Lstm::new(d_in, h, cfg.lstm_layers, rng),
            mu: Mlp2::new(h, h, z, slope, rng),
            var: Mlp2::new(h, h, z, slope, rng),
        });
        CdvaeParams {
            encoder,
            history: Lstm::new(d_in, h, cfg.lstm_layers, rng),
            ffn: Mlp2::new(h + cfg.d_x, phi, phi, slope, rng),
            head1: Mlp2::new(phi + z, phi + z, 1, slope, rng),
            head0: Mlp2::new(phi + z, phi + z, 1, slope, rng),
            propensity: Mlp2::new(phi, phi, 1, slope, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        CdvaeParams {
            encoder: self.encoder.as_ref().map(|e| Encoder {
                lstm: e.lstm.zeros_like(),
                mu: e.mu.zeros_like(),
                var: e.var.zeros_like(),
            }),
            history: self.history.zeros_like(),
            ffn: self.ffn.zeros_like(),
            head1: self.head1.zeros_like(),
            head0: self.head0.zeros_like(),
            propensity: self.propensity.zeros_like(),
        }
    }
}

impl Params for CdvaeParams {
    fn visit(&self, prefix: &str, f: &mut TensorVisitor<'_>) {
        if let Some(e) = &self.encoder {
            e.lstm.visit(&join(prefix, "encoder.lstm"), f);
            e.mu.visit(&join(prefix, "encoder.mu"), f);
            e.var.visit(&join(prefix, "encoder.var"), f);
        }
        self.history.visit(&join(prefix, "history"), f);
        self.ffn.visit(&join(prefix, "ffn"), f);
        self.head1.visit(&join(prefix, "head1"), f);
        self.head0.visit(&join(prefix, "head0"), f);
        self.propensity.visit(&join(prefix, "propensity"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        if let Some(e) = &mut self.encoder {
            e.lstm.visit_mut(&join(prefix, "encoder.lstm"), f);
            e.mu.visit_mut(&join(prefix, "encoder.mu"), f);
            e.var.visit_mut(&join(prefix, "encoder.var"), f);
        }
        self.history.visit_mut(&join(prefix, "history"), f);
        self.ffn.visit_mut(&join(prefix, "ffn"), f);
        self.head1.visit_mut(&join(prefix, "head1"), f);
        self.head0.visit_mut(&join(prefix, "head0"), f);
        self.propensity.visit_mut(&join(prefix, "propensity"), f);
    }
}

/// Per-unit Gaussian posterior over `z` plus the encoder hidden states.
#[derive(Debug, Clone)]
pub struct PosteriorStats {
    /// `[batch, z_dim]`
    pub mu: Array2<f64>,
    /// `[batch, z_dim]`, strictly positive.
    pub var: Array2<f64>,
    /// `g_t` for every step, each `[batch, lstm_hidden]`.
    pub g: Vec<Array2<f64>>,
}

/// Loss terms of one evaluation. `recon_sq` is `recon` without the
/// Gaussian normalising constant; `total` is
/// `recon + beta*kl + λ_IPM*ipm + λ_MM*mm + λ_W*bce`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub recon: f64,
    pub recon_sq: f64,
    pub kl: f64,
    pub ipm: f64,
    pub mm: f64,
    pub bce: f64,
    pub beta: f64,
}

/// Transport between the treated and control units of one step.
#[derive(Debug, Clone)]
pub struct StepOt {
    pub treated: Vec<usize>,
    pub control: Vec<usize>,
    pub plan: Array2<f64>,
    pub cost: Array2<f64>,
}

/// Quantities that receive no gradient. Passing them back into [`forward`]
/// holds them fixed while parameters move, which is what a finite-difference
/// check of the analytic gradient needs.
#[derive(Debug, Clone)]
pub struct Frozen {
    pub alpha: Array2<f64>,
    pub transport: Vec<Option<StepOt>>,
}

struct EncoderState {
    g: Vec<Array2<f64>>,
    lstm: LstmCache,
    mu: Array2<f64>,
    mu_cache: Mlp2Cache,
    pre_var: Array2<f64>,
    var_cache: Mlp2Cache,
    var: Array2<f64>,
}

/// Everything [`backward`] needs, plus the detached quantities.
pub struct ForwardState {
    pub breakdown: LossBreakdown,
    pub frozen: Frozen,
    pub ipm_skipped: usize,
    pub ipm_unconverged: usize,
    noise: Array2<f64>,
    encoder: Option<EncoderState>,
    history: LstmCache,
    ffn: Mlp2Cache,
    phi: Array2<f64>,
    head1: Mlp2Cache,
    head0: Mlp2Cache,
    f1: Array2<f64>,
    f0: Array2<f64>,
    prop: Mlp2Cache,
    logits: Array2<f64>,
}

/// Point predictions, all `[units, steps]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub y1: Array2<f64>,
    pub y0: Array2<f64>,
    pub tau: Array2<f64>,
    pub y_factual: Array2<f64>,
    pub propensity: Array2<f64>,
}

impl Prediction {
    pub fn zeros(n: usize, steps: usize) -> Self {
        let z = Array2::zeros((n, steps));
        Prediction { y1: z.clone(), y0: z.clone(), tau: z.clone(), y_factual: z.clone(), propensity: z }
    }

    pub(crate) fn assign_rows(&mut self, start: usize, p: &Prediction) {
        let end = start + p.tau.nrows();
        self.y1.slice_mut(s![start..end, ..]).assign(&p.y1);
        self.y0.slice_mut(s![start..end, ..]).assign(&p.y0);
        self.tau.slice_mut(s![start..end, ..]).assign(&p.tau);
        self.y_factual.slice_mut(s![start..end, ..]).assign(&p.y_factual);
        self.propensity.slice_mut(s![start..end, ..]).assign(&p.propensity);
    }
}

fn check_batch(cfg: &CdvaeConfig, batch: &Batch) -> Result<(), CdvaeError> {
    if batch.is_empty() || batch.steps() == 0 {
        return Err(CdvaeError::Shape("empty batch".into()));
    }
    if batch.x.shape()[2] != cfg.d_x {
        return Err(CdvaeError::Shape(format!("batch has {} covariates, model expects {}", batch.x.shape()[2], cfg.d_x)));
    }
    if batch.x.iter().chain(batch.y.iter()).chain(batch.w.iter()).any(|v| !v.is_finite()) {
        return Err(CdvaeError::NonFinite("batch"));
    }
    Ok(())
}

/// `[x_t, w_t, y_t]` for every step.
fn step_inputs(batch: &Batch) -> Vec<Array2<f64>> {
    let (b, steps, dx) = batch.x.dim();
    (0..steps)
        .map(|t| {
            let mut m = Array2::zeros((b, dx + 2));
            m.slice_mut(s![.., 0..dx]).assign(&batch.x.slice(s![.., t, ..]));
            m.column_mut(dx).assign(&batch.w.column(t));
            m.column_mut(dx + 1).assign(&batch.y.column(t));
            m
        })
        .collect()
}

/// Rows `t*B + i` hold `[d_{t-1}, x_t]` for unit `i`, with `d_{-1} = 0`.
fn representation_inputs(d: &[Array2<f64>], batch: &Batch) -> Array2<f64> {
    let (b, steps, dx) = batch.x.dim();
    let h = d.first().map_or(0, |m| m.ncols());
    let mut m = Array2::zeros((steps * b, h + dx));
    for t in 0..steps {
        let mut block = m.slice_mut(s![t * b..(t + 1) * b, ..]);
        if t > 0 {
            block.slice_mut(s![.., 0..h]).assign(&d[t - 1]);
        }
        block.slice_mut(s![.., h..]).assign(&batch.x.slice(s![.., t, ..]));
    }
    m
}

/// `[Φ, z]` with `z` repeated for every step.
fn head_inputs(phi: &Array2<f64>, z: Option<&Array2<f64>>, b: usize) -> Array2<f64> {
    match z {
        None => phi.clone(),
        Some(z) => {
            let steps = phi.nrows() / b;
            let tiled = concatenate(Axis(0), &vec![z.view(); steps]).expect("equal widths");
            concatenate(Axis(1), &[phi.view(), tiled.view()]).expect("equal heights")
        }
    }
}

/// Column vector with rows `t*B + i` to a `[B, T]` matrix.
fn to_unit_major(col: &Array2<f64>, b: usize) -> Array2<f64> {
    let steps = col.nrows() / b;
    Array2::from_shape_fn((b, steps), |(i, t)| col[[t * b + i, 0]])
}

fn to_step_major(m: &Array2<f64>) -> Array2<f64> {
    let (b, steps) = m.dim();
    Array2::from_shape_fn((steps * b, 1), |(r, _)| m[[r % b, r / b]])
}

pub fn encode_posterior(cfg: &CdvaeConfig, p: &CdvaeParams, batch: &Batch) -> Result<Option<PosteriorStats>, CdvaeError> {
    check_batch(cfg, batch)?;
    let Some(e) = &p.encoder else { return Ok(None) };
    let (g, _) = e.lstm.forward(&step_inputs(batch));
    let last = g.last().expect("at least one step");
    let mu = e.mu.forward(last.view()).0;
    let var = e.var.forward(last.view()).0.mapv(|v| softplus(v).max(VAR_FLOOR));
    if mu.iter().chain(var.iter()).any(|v| !v.is_finite()) {
        return Err(CdvaeError::NonFinite("posterior"));
    }
    Ok(Some(PosteriorStats { mu, var, g }))
}

/// Standard-normal draws of shape `[units, z_dim]`.
pub fn sample_noise<R: Rng + ?Sized>(rng: &mut R, units: usize, z_dim: usize) -> Array2<f64> {
    Array2::from_shape_fn((units, z_dim), |_| StandardNormal.sample(rng))
}

/// Reparameterised draw `z = μ + sqrt(var) ⊙ ε`.
pub fn sample_latent<R: Rng + ?Sized>(stats: &PosteriorStats, rng: &mut R) -> Array2<f64> {
    let (b, z) = stats.mu.dim();
    &stats.mu + &(stats.var.mapv(f64::sqrt) * sample_noise(rng, b, z))
}

/// `Φ_t` for every step, each `[batch, phi_dim]`.
pub fn represent_history(cfg: &CdvaeConfig, p: &CdvaeParams, batch: &Batch) -> Result<Vec<Array2<f64>>, CdvaeError> {
    check_batch(cfg, batch)?;
    let b = batch.len();
    let (d, _) = p.history.forward(&step_inputs(batch));
    let phi = p.ffn.forward(representation_inputs(&d, batch).view()).0;
    Ok((0..batch.steps()).map(|t| phi.slice(s![t * b..(t + 1) * b, ..]).to_owned()).collect())
}

/// Both heads on `[Φ, z]`; returns `(ŷ(1), ŷ(0))` as column vectors.
pub fn decode_potential_outcomes(p: &CdvaeParams, phi: ArrayView2<f64>, z: Option<ArrayView2<f64>>) -> (Array1<f64>, Array1<f64>) {
    let input = match z {
        Some(z) => concatenate(Axis(1), &[phi, z]).expect("equal heights"),
        None => phi.to_owned(),
    };
    let y1 = p.head1.forward(input.view()).0.column(0).to_owned();
    let y0 = p.head0.forward(input.view()).0.column(0).to_owned();
    (y1, y0)
}

/// Unclamped propensity in (0, 1) for each row of `phi`.
pub fn propensity_score(p: &CdvaeParams, phi: ArrayView2<f64>) -> Array1<f64> {
    p.propensity.forward(phi).0.column(0).mapv(sigmoid)
}

/// `½ Σ_j (μ_j² + v_j - 1 - ln v_j)` for one unit.
pub fn kl_to_standard_normal(mu: &[f64], var: &[f64]) -> f64 {
    0.5 * mu.iter().zip(var).map(|(m, v)| m * m + v - 1.0 - v.ln()).sum::<f64>()
}

/// Batch mean of `Σ_{t≥2} ||g_t - g_{t-1}||²`; 0 for single-step panels.
pub fn moment_matching_penalty(g: &[Array2<f64>]) -> f64 {
    let b = g.first().map_or(1, |m| m.nrows().max(1)) as f64;
    g.windows(2).map(|w| (&w[1] - &w[0]).mapv(|v| v * v).sum()).sum::<f64>() / b
}

/// `Σ_t (1/B) Σ_i α_it · [½ ln(2πσ²) + (y_it - f_it)² / (2σ²)]`.
pub fn weighted_reconstruction_loss(y: ArrayView2<f64>, f: ArrayView2<f64>, alpha: ArrayView2<f64>, sigma: f64) -> f64 {
    let s2 = sigma * sigma;
    let c = 0.5 * (2.0 * std::f64::consts::PI * s2).ln();
    let b = y.nrows().max(1) as f64;
    let mut total = 0.0;
    for ((&yi, &fi), &a) in y.iter().zip(f.iter()).zip(alpha.iter()) {
        total += a * (c + (yi - fi).powi(2) / (2.0 * s2));
    }
    total / b
}

fn finite(v: f64, term: &'static str) -> Result<f64, CdvaeError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(CdvaeError::NonFinite(term))
    }
}

/// Evaluates every loss term. `noise` is the `[batch, z_dim]` standard
/// normal draw used for `z`. Weights and transport plans are computed from
/// the current parameters unless `frozen` supplies them.
pub fn forward(
    cfg: &CdvaeConfig,
    p: &CdvaeParams,
    batch: &Batch,
    noise: ArrayView2<f64>,
    beta: f64,
    frozen: Option<&Frozen>,
) -> Result<ForwardState, CdvaeError> {
    check_batch(cfg, batch)?;
    let (b, steps) = batch.w.dim();
    if noise.dim() != (b, cfg.z_dim) {
        return Err(CdvaeError::Shape(format!("noise is {:?}, expected ({b}, {})", noise.dim(), cfg.z_dim)));
    }
    let inputs = step_inputs(batch);

    let encoder = match &p.encoder {
        None => None,
        Some(e) => {
            let (g, lstm) = e.lstm.forward(&inputs);
            let last = g.last().expect("at least one step");
            let (mu, mu_cache) = e.mu.forward(last.view());
            let (pre_var, var_cache) = e.var.forward(last.view());
            let var = pre_var.mapv(|v| softplus(v).max(VAR_FLOOR));
            Some(EncoderState { g, lstm, mu, mu_cache, pre_var, var_cache, var })
        }
    };
    let z = encoder.as_ref().map(|e| &e.mu + e.var.mapv(f64::sqrt) * noise);

    let (d, history) = p.history.forward(&inputs);
    let (phi, ffn) = p.ffn.forward(representation_inputs(&d, batch).view());
    let hin = head_inputs(&phi, z.as_ref(), b);
    let (f1c, head1) = p.head1.forward(hin.view());
    let (f0c, head0) = p.head0.forward(hin.view());
    let (logitc, prop) = p.propensity.forward(phi.view());
    let f1 = to_unit_major(&f1c, b);
    let f0 = to_unit_major(&f0c, b);
    let logits = to_unit_major(&logitc, b);

    let alpha = match frozen {
        Some(fz) => fz.alpha.clone(),
        None => normalize_panel_weights(logits.mapv(sigmoid).view(), batch.w.view(), cfg.weight_scheme),
    };
    let fact = &batch.w * &f1 + &(1.0 - &batch.w) * &f0;
    let recon = finite(weighted_reconstruction_loss(batch.y.view(), fact.view(), alpha.view(), cfg.sigma_y), "recon")?;
    let constant = 0.5 * (2.0 * std::f64::consts::PI * cfg.sigma_y * cfg.sigma_y).ln();
    let recon_sq = recon - constant * alpha.sum() / b as f64;

    let (kl, mm) = match &encoder {
        None => (0.0, 0.0),
        Some(e) => {
            let kl = (0..b)
                .map(|i| {
                    kl_to_standard_normal(
                        e.mu.row(i).as_slice().expect("contiguous"),
                        e.var.row(i).as_slice().expect("contiguous"),
                    )
                })
                .sum::<f64>()
                / b as f64;
            (finite(kl, "kl")?, finite(moment_matching_penalty(&e.g), "mm")?)
        }
    };
    let bce = logits.iter().zip(batch.w.iter()).map(|(&l, &w)| softplus(l) - w * l).sum::<f64>() / (b * steps) as f64;
    let bce = finite(bce, "bce")?;

    let reps: Vec<ArrayView2<f64>> = (0..steps).map(|t| phi.slice(s![t * b..(t + 1) * b, ..])).collect();
    let mut ipm = 0.0;
    let mut skipped = 0;
    let mut unconverged = 0;
    let transport: Vec<Option<StepOt>> = match frozen {
        Some(fz) => fz
            .transport
            .iter()
            .enumerate()
            .map(|(t, st)| {
                st.as_ref().map(|st| {
                    let rt = reps[t].select(Axis(0), &st.treated);
                    let rc = reps[t].select(Axis(0), &st.control);
                    let cost = cost_matrix(rt.view(), rc.view());
                    ipm += (&st.plan * &cost).sum();
                    StepOt { treated: st.treated.clone(), control: st.control.clone(), plan: st.plan.clone(), cost }
                })
            })
            .collect(),
        None if cfg.lambda_ipm > 0.0 => {
            let r = ipm_regularizer(&reps, alpha.view(), batch.w.view(), &cfg.ot)?;
            ipm = r.total;
            skipped = r.skipped;
            unconverged = r.unconverged;
            r.steps
                .into_iter()
                .map(|s| {
                    s.map(|s| StepOt { treated: s.treated, control: s.control, plan: s.result.plan.plan, cost: s.result.cost })
                })
                .collect()
        }
        None => vec![None; steps],
    };
    let ipm = finite(ipm, "ipm")?;

    let total = recon + beta * kl + cfg.lambda_ipm * ipm + cfg.lambda_mm * mm + cfg.lambda_w * bce;
    let breakdown = LossBreakdown { total: finite(total, "total")?, recon, recon_sq, kl, ipm, mm, bce, beta };
    Ok(ForwardState {
        breakdown,
        frozen: Frozen { alpha, transport },
        ipm_skipped: skipped,
        ipm_unconverged: unconverged,
        noise: noise.to_owned(),
        encoder,
        history,
        ffn,
        phi,
        head1,
        head0,
        f1,
        f0,
        prop,
        logits,
    })
}

/// Gradient of `state.breakdown.total` with respect to every parameter,
/// with weights and transport plans held constant.
pub fn backward(cfg: &CdvaeConfig, p: &CdvaeParams, batch: &Batch, state: &ForwardState) -> CdvaeParams {
    let mut grad = p.zeros_like();
    let (b, steps) = batch.w.dim();
    let bf = b as f64;
    let phi_dim = cfg.phi_dim;
    let alpha = &state.frozen.alpha;
    let beta = state.breakdown.beta;

    // Reconstruction through the factual head.
    let fact = &batch.w * &state.f1 + &(1.0 - &batch.w) * &state.f0;
    let dfact = alpha * &(&fact - &batch.y) / (cfg.sigma_y * cfg.sigma_y * bf);
    let df1 = to_step_major(&(&batch.w * &dfact));
    let df0 = to_step_major(&(&(1.0 - &batch.w) * &dfact));
    let dhin = p.head1.backward(&state.head1, df1.view(), &mut grad.head1)
        + p.head0.backward(&state.head0, df0.view(), &mut grad.head0);
    let mut dphi = dhin.slice(s![.., 0..phi_dim]).to_owned();

    // Propensity cross-entropy.
    let dlogit = (state.logits.mapv(sigmoid) - &batch.w) * (cfg.lambda_w / (b * steps) as f64);
    dphi += &p.propensity.backward(&state.prop, to_step_major(&dlogit).view(), &mut grad.propensity);

    // IPM through the cost matrices.
    if cfg.lambda_ipm > 0.0 {
        for (t, st) in state.frozen.transport.iter().enumerate() {
            let Some(st) = st else { continue };
            let reps = state.phi.slice(s![t * b..(t + 1) * b, ..]);
            let rt = reps.select(Axis(0), &st.treated);
            let rc = reps.select(Axis(0), &st.control);
            let (gt, gc) = cost_gradient(rt.view(), rc.view(), st.plan.view(), st.cost.view());
            for (k, &i) in st.treated.iter().enumerate() {
                dphi.row_mut(t * b + i).scaled_add(cfg.lambda_ipm, &gt.row(k));
            }
            for (k, &i) in st.control.iter().enumerate() {
                dphi.row_mut(t * b + i).scaled_add(cfg.lambda_ipm, &gc.row(k));
            }
        }
    }

    // Representation and history encoder.
    let dffn_in = p.ffn.backward(&state.ffn, dphi.view(), &mut grad.ffn);
    let h = cfg.lstm_hidden;
    let mut dd: Vec<Array2<f64>> = vec![Array2::zeros((b, h)); steps];
    for t in 1..steps {
        dd[t - 1].assign(&dffn_in.slice(s![t * b..(t + 1) * b, 0..h]));
    }
    p.history.backward(&state.history, &dd, &mut grad.history);

    // Latent path.
    if let (Some(e), Some(es), Some(ge)) = (&p.encoder, &state.encoder, grad.encoder.as_mut()) {
        let z_dim = cfg.z_dim;
        let mut dz = Array2::<f64>::zeros((b, z_dim));
        for t in 0..steps {
            dz += &dhin.slice(s![t * b..(t + 1) * b, phi_dim..]);
        }
        let dmu = &dz + &(&es.mu * (beta / bf));
        let sd = es.var.mapv(f64::sqrt);
        let dvar = &dz * &state.noise / &(2.0 * &sd) + &es.var.mapv(|v| beta * 0.5 * (1.0 - 1.0 / v) / bf);
        let dpre = Array2::from_shape_fn(es.pre_var.raw_dim(), |ix| {
            let s = es.pre_var[ix];
            if softplus(s) > VAR_FLOOR {
                dvar[ix] * sigmoid(s)
            } else {
                0.0
            }
        });
        let dg_last = e.mu.backward(&es.mu_cache, dmu.view(), &mut ge.mu)
            + e.var.backward(&es.var_cache, dpre.view(), &mut ge.var);
        let mut dg: Vec<Array2<f64>> = vec![Array2::zeros((b, h)); steps];
        dg[steps - 1] += &dg_last;
        let c = 2.0 * cfg.lambda_mm / bf;
        for t in 1..steps {
            let diff = &es.g[t] - &es.g[t - 1];
            dg[t].scaled_add(c, &diff);
            dg[t - 1].scaled_add(-c, &diff);
        }
        e.lstm.backward(&es.lstm, &dg, &mut ge.lstm);
    }
    grad
}

/// Potential outcomes, ITEs and propensities using the posterior mean.
pub fn predict(cfg: &CdvaeConfig, p: &CdvaeParams, batch: &Batch) -> Result<Prediction, CdvaeError> {
    check_batch(cfg, batch)?;
    let b = batch.len();
    let mu = encode_posterior(cfg, p, batch)?.map(|s| s.mu);
    let (d, _) = p.history.forward(&step_inputs(batch));
    let phi = p.ffn.forward(representation_inputs(&d, batch).view()).0;
    let hin = head_inputs(&phi, mu.as_ref(), b);
    let y1 = to_unit_major(&p.head1.forward(hin.view()).0, b);
    let y0 = to_unit_major(&p.head0.forward(hin.view()).0, b);
    let propensity = to_unit_major(&p.propensity.forward(phi.view()).0, b).mapv(sigmoid);
    let tau = &y1 - &y0;
    let y_factual = &batch.w * &y1 + &(1.0 - &batch.w) * &y0;
    if tau.iter().any(|v| !v.is_finite()) {
        return Err(CdvaeError::NonFinite("prediction"));
    }
    Ok(Prediction { y1, y0, tau, y_factual, propensity })
}

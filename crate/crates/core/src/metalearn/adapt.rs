//! Per-episode adaptation, first-order meta-updates and joint baseline training.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::embedder::{gather, EmbedderParams};
use super::features::{EpisodeData, FeatureStore};
use super::head::{proto_head_init, softmax_xent, LinearHead};
use super::optim::Adam;
use crate::error::{Error, Result};
use crate::evalx::balanced_accuracy;
use crate::sampler::TrainSampler;
use crate::seed::stream_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Baseline,
    Fomaml,
    Proto,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Baseline, Mode::Fomaml, Mode::Proto];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Fomaml => "fomaml",
            Mode::Proto => "proto",
        }
    }

    pub fn head_init(self, cfg: &AdaptConfig) -> HeadInit {
        match self {
            Mode::Baseline => cfg.baseline_head,
            Mode::Fomaml => HeadInit::Zero,
            Mode::Proto => HeadInit::Proto,
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Mode::Baseline),
            "fomaml" => Ok(Mode::Fomaml),
            "proto" => Ok(Mode::Proto),
            _ => Err(Error::InvalidArgument(format!("unknown mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadInit {
    Zero,
    Proto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptConfig {
    pub embed_dim: usize,
    pub dropout: f64,
    pub inner_lr: f64,
    pub inner_steps: usize,
    /// Whether inner steps also update `theta` (otherwise only the head).
    pub adapt_embedder: bool,
    pub outer_lr: f64,
    pub meta_batch: usize,
    pub total_meta_steps: usize,
    pub baseline_lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub baseline_head: HeadInit,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        AdaptConfig {
            embed_dim: 512,
            dropout: 0.05,
            inner_lr: 0.01,
            inner_steps: 5,
            adapt_embedder: true,
            outer_lr: 3e-4,
            meta_batch: 4,
            total_meta_steps: 5351,
            baseline_lr: 3e-4,
            weight_decay: 0.001,
            epochs: 50,
            batch_size: 128,
            baseline_head: HeadInit::Proto,
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        let rates = [self.inner_lr, self.outer_lr, self.baseline_lr, self.weight_decay];
        if rates.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::InvalidArgument(
                "learning rates and weight decay must be finite and non-negative".into(),
            ));
        }
        if self.meta_batch == 0 || self.batch_size == 0 || self.embed_dim == 0 {
            return Err(Error::InvalidArgument(
                "meta_batch, batch_size and embed_dim must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }
}

/// Gradients of a loss with respect to `theta` and the head.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub theta: Vec<f64>,
    pub head: LinearHead,
}

/// Mean cross-entropy of `head(f(x, theta))` against `y`, with gradients.
/// `dropout` switches the embedder to training mode.
pub fn loss_and_grads(
    params: &EmbedderParams,
    head: &LinearHead,
    x: ArrayView2<'_, f64>,
    y: &[usize],
    dropout: Option<&mut ChaCha8Rng>,
) -> Result<(f64, Grads)> {
    if x.nrows() != y.len() {
        return Err(Error::Shape {
            expected: x.nrows(),
            got: y.len(),
        });
    }
    if let Some(&c) = y.iter().find(|&&c| c >= head.way()) {
        return Err(Error::InvalidArgument(format!(
            "label {c} outside {}-way head",
            head.way()
        )));
    }
    let fwd = params.forward(x, dropout)?;
    let logits = head.logits(fwd.z.view());
    let (loss, dl) = softmax_xent(logits.view(), y);
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("cross-entropy loss is {loss}")));
    }
    let gw = dl.t().dot(&fwd.z);
    let gb = dl.sum_axis(Axis(0));
    let dz = dl.dot(&head.w);
    let theta = params.backward(&fwd, x, dz.view());
    Ok((
        loss,
        Grads {
            theta,
            head: LinearHead { w: gw, b: gb },
        },
    ))
}

pub fn init_head(
    params: &EmbedderParams,
    xs: ArrayView2<'_, f64>,
    ys: &[usize],
    way: usize,
    init: HeadInit,
) -> Result<LinearHead> {
    match init {
        HeadInit::Zero => Ok(LinearHead::zeros(way, params.embed_dim())),
        HeadInit::Proto => proto_head_init(params.embed_batch(xs)?.view(), ys, way),
    }
}

/// `cfg.inner_steps` full-batch gradient-descent steps on the support set.
/// Works on copies; the inputs are left untouched.
pub fn inner_adapt(
    params: &EmbedderParams,
    head: &LinearHead,
    xs: ArrayView2<'_, f64>,
    ys: &[usize],
    cfg: &AdaptConfig,
) -> Result<(EmbedderParams, LinearHead)> {
    if xs.nrows() == 0 {
        return Err(Error::InvalidArgument("empty support set".into()));
    }
    let mut p = params.clone();
    let mut h = head.clone();
    for _ in 0..cfg.inner_steps {
        let (_, g) = loss_and_grads(&p, &h, xs, ys, None)?;
        if cfg.adapt_embedder {
            for (t, d) in p.theta.iter_mut().zip(&g.theta) {
                *t -= cfg.inner_lr * d;
            }
        }
        h.w.scaled_add(-cfg.inner_lr, &g.head.w);
        h.b.scaled_add(-cfg.inner_lr, &g.head.b);
    }
    Ok((p, h))
}

/// Query-loss gradient at the adapted parameters, plus the query loss.
pub fn first_order_gradient(
    params: &EmbedderParams,
    ep: &EpisodeData,
    init: HeadInit,
    cfg: &AdaptConfig,
) -> Result<(Vec<f64>, f64)> {
    let head = init_head(params, ep.xs.view(), &ep.ys, ep.way, init)?;
    let (p, h) = inner_adapt(params, &head, ep.xs.view(), &ep.ys, cfg)?;
    let (loss, g) = loss_and_grads(&p, &h, ep.xq.view(), &ep.yq, None)?;
    Ok((g.theta, loss))
}

/// Batch-averaged first-order meta-gradient. Episodes run in parallel and are
/// reduced in batch order.
pub fn fomaml_meta_gradient(
    params: &EmbedderParams,
    batch: &[EpisodeData],
    init: HeadInit,
    cfg: &AdaptConfig,
) -> Result<(Vec<f64>, f64)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty meta-batch".into()));
    }
    let parts: Vec<(Vec<f64>, f64)> = batch
        .par_iter()
        .map(|ep| first_order_gradient(params, ep, init, cfg))
        .collect::<Result<_>>()?;
    let n = parts.len() as f64;
    let mut g = vec![0.0; params.n_params()];
    let mut loss = 0.0;
    for (gi, li) in &parts {
        for (a, b) in g.iter_mut().zip(gi) {
            *a += b;
        }
        loss += li;
    }
    g.iter_mut().for_each(|v| *v /= n);
    Ok((g, loss / n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetaStats {
    pub query_loss: f64,
    pub grad_norm: f64,
}

/// One outer Adam step on `theta` from the first-order meta-gradient.
pub fn fomaml_meta_step(
    params: &mut EmbedderParams,
    adam: &mut Adam,
    batch: &[EpisodeData],
    mode: Mode,
    cfg: &AdaptConfig,
) -> Result<MetaStats> {
    if mode == Mode::Baseline {
        return Err(Error::InvalidArgument("baseline mode is not meta-trained".into()));
    }
    let (g, query_loss) = fomaml_meta_gradient(params, batch, mode.head_init(cfg), cfg)?;
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("meta-gradient".into()));
    }
    adam.step(&mut params.theta, &g);
    Ok(MetaStats {
        query_loss,
        grad_norm: g.iter().map(|v| v * v).sum::<f64>().sqrt(),
    })
}

/// Runs `cfg.total_meta_steps` meta-steps on fresh episodes from `sampler`.
pub fn meta_train(
    params: &EmbedderParams,
    sampler: &TrainSampler<'_>,
    store: &FeatureStore,
    mode: Mode,
    cfg: &AdaptConfig,
) -> Result<(EmbedderParams, Vec<MetaStats>)> {
    cfg.validate()?;
    let mut p = params.clone();
    let mut adam = Adam::new(p.n_params(), cfg.outer_lr, 0.0);
    let mut stats = Vec::with_capacity(cfg.total_meta_steps);
    for step in 0..cfg.total_meta_steps {
        let batch: Vec<EpisodeData> = (0..cfg.meta_batch)
            .map(|j| {
                let e = sampler.episode((step * cfg.meta_batch + j) as u64)?;
                store.episode_data(&e)
            })
            .collect::<Result<_>>()?;
        stats.push(fomaml_meta_step(&mut p, &mut adam, &batch, mode, cfg)?);
    }
    Ok((p, stats))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeScore {
    pub way: usize,
    pub accuracy: f64,
    pub balanced_accuracy: f64,
}

/// Fits a fresh head (per `mode`) on the support set and scores the query set.
pub fn evaluate_episode(
    params: &EmbedderParams,
    ep: &EpisodeData,
    mode: Mode,
    cfg: &AdaptConfig,
) -> Result<EpisodeScore> {
    let head = init_head(params, ep.xs.view(), &ep.ys, ep.way, mode.head_init(cfg))?;
    let (p, h) = inner_adapt(params, &head, ep.xs.view(), &ep.ys, cfg)?;
    let pred = h.predict(p.embed_batch(ep.xq.view())?.view());
    Ok(score(&pred, &ep.yq, ep.way))
}

pub fn score(pred: &[usize], truth: &[usize], way: usize) -> EpisodeScore {
    let hits = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    EpisodeScore {
        way,
        accuracy: if truth.is_empty() {
            0.0
        } else {
            hits as f64 / truth.len() as f64
        },
        balanced_accuracy: balanced_accuracy(truth, pred, way),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineOutcome {
    pub params: EmbedderParams,
    /// Joint head over every training class; not used for episodic evaluation.
    pub head: LinearHead,
    pub epoch_losses: Vec<f64>,
}

/// Non-episodic training over all classes: mini-batch AdamW with dropout.
pub fn train_baseline(
    params: &EmbedderParams,
    x: ArrayView2<'_, f64>,
    y: &[usize],
    n_classes: usize,
    cfg: &AdaptConfig,
    seed: u64,
) -> Result<BaselineOutcome> {
    cfg.validate()?;
    if x.nrows() != y.len() {
        return Err(Error::Shape {
            expected: x.nrows(),
            got: y.len(),
        });
    }
    let mut p = params.clone();
    let mut head = LinearHead::zeros(n_classes, p.embed_dim());
    {
        // small symmetric-breaking init for the joint head
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, "joint-head", 0));
        let lim = 1.0 / (p.embed_dim() as f64).sqrt();
        head.w.mapv_inplace(|_| rand::Rng::random_range(&mut rng, -lim..lim));
    }
    let mut adam_theta = Adam::new(p.n_params(), cfg.baseline_lr, cfg.weight_decay);
    let n_head = head.w.len() + head.b.len();
    let mut adam_head = Adam::new(n_head, cfg.baseline_lr, cfg.weight_decay);
    let mut order: Vec<usize> = (0..y.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs as u64 {
        let mut shuffle = ChaCha8Rng::seed_from_u64(stream_seed(seed, "epoch", epoch));
        let mut drop = ChaCha8Rng::seed_from_u64(stream_seed(seed, "dropout", epoch));
        order.shuffle(&mut shuffle);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let xb = gather(x, chunk);
            let yb: Vec<usize> = chunk.iter().map(|&i| y[i]).collect();
            let (loss, g) = loss_and_grads(&p, &head, xb.view(), &yb, Some(&mut drop))?;
            total += loss * chunk.len() as f64;
            adam_theta.step(&mut p.theta, &g.theta);
            let mut flat: Vec<f64> = head.w.iter().chain(head.b.iter()).copied().collect();
            let gflat: Vec<f64> = g.head.w.iter().chain(g.head.b.iter()).copied().collect();
            adam_head.step(&mut flat, &gflat);
            let (wf, bf) = flat.split_at(head.w.len());
            head.w = Array2::from_shape_vec(head.w.raw_dim(), wf.to_vec())
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
            head.b = ndarray::Array1::from(bf.to_vec());
        }
        epoch_losses.push(total / y.len().max(1) as f64);
    }
    Ok(BaselineOutcome {
        params: p,
        head,
        epoch_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_steps_or_zero_rate_leave_parameters() {
        let p = EmbedderParams::mlp(3, 4, 0.0, 1).unwrap();
        let xs = array![[1.0, 0.0, -1.0], [0.5, 0.5, 0.5]];
        let head = init_head(&p, xs.view(), &[0, 1], 2, HeadInit::Proto).unwrap();
        let mut cfg = AdaptConfig {
            inner_steps: 0,
            ..AdaptConfig::default()
        };
        assert_eq!(
            inner_adapt(&p, &head, xs.view(), &[0, 1], &cfg).unwrap(),
            (p.clone(), head.clone())
        );
        cfg.inner_steps = 5;
        cfg.inner_lr = 0.0;
        assert_eq!(
            inner_adapt(&p, &head, xs.view(), &[0, 1], &cfg).unwrap(),
            (p.clone(), head.clone())
        );
    }

    #[test]
    fn one_step_matches_closed_form() {
        // identity embedder, 1-d input, 2-way head: gradient by hand
        let p = EmbedderParams::identity(1).unwrap();
        let head = LinearHead::zeros(2, 1);
        let xs = array![[2.0]];
        let cfg = AdaptConfig {
            inner_steps: 1,
            inner_lr: 0.5,
            ..AdaptConfig::default()
        };
        let (_, h) = inner_adapt(&p, &head, xs.view(), &[0], &cfg).unwrap();
        // softmax at zero logits is (1/2, 1/2): dW = (p - onehot) x = (-1, 1)
        assert_eq!(h.w, array![[0.5], [-0.5]]);
        assert_eq!(h.b, array![0.25, -0.25]);
    }

    #[test]
    fn epochs_zero_leaves_theta() {
        let p = EmbedderParams::mlp(2, 3, 0.05, 4).unwrap();
        let x = array![[0.0, 1.0], [1.0, 0.0]];
        let cfg = AdaptConfig {
            epochs: 0,
            ..AdaptConfig::default()
        };
        let out = train_baseline(&p, x.view(), &[0, 1], 2, &cfg, 1).unwrap();
        assert_eq!(out.params, p);
        assert!(out.epoch_losses.is_empty());
    }
}

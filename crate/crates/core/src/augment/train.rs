use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array2, ArrayD, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::model::{critic_loss, generator_loss, Critic, GanConfig, Generator, Lipschitz};
use crate::autograd::{Array, Var};
use crate::checkpoint::Checkpoint;
use crate::dataio::{EpochSet, Label, Provenance};
use crate::error::{Error, Result};
use crate::nn::{Adam, ParamStore};
use crate::rng::{derive_seed, seeded, standard_normal, StageRng};

/// Step used by the finite-difference Hessian-vector product of the
/// gradient penalty.
pub const GP_STEP: f64 = 1e-4;

/// Per-epoch means of the training losses.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingCurves {
    /// Critic objective including any penalty.
    pub critic_loss: Vec<f64>,
    pub generator_loss: Vec<f64>,
    /// `mean(real) - mean(fake)` scores, the critic's distance estimate.
    pub wasserstein: Vec<f64>,
}

/// A trained per-group GAN plus what is needed to emit epochs from it.
#[derive(Debug, Clone, PartialEq)]
pub struct GanCheckpoint {
    pub config: GanConfig,
    pub group: Label,
    pub channels: Vec<String>,
    pub epoch_length_s: f64,
    pub sampling_rate: f64,
    pub generator: ParamStore,
    pub critic: ParamStore,
    pub selection_epoch: usize,
    pub selection_generator_loss: f64,
    pub converged_at: Option<usize>,
    pub curves: TrainingCurves,
}

pub const GAN_KIND: &str = "gan";

#[derive(Serialize, Deserialize)]
struct GanMeta {
    config: GanConfig,
    group: Label,
    channels: Vec<String>,
    epoch_length_s: f64,
    sampling_rate: f64,
    selection_epoch: usize,
    selection_generator_loss: f64,
    converged_at: Option<usize>,
    curves: TrainingCurves,
}

impl GanCheckpoint {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let meta = GanMeta {
            config: self.config.clone(),
            group: self.group,
            channels: self.channels.clone(),
            epoch_length_s: self.epoch_length_s,
            sampling_rate: self.sampling_rate,
            selection_epoch: self.selection_epoch,
            selection_generator_loss: self.selection_generator_loss,
            converged_at: self.converged_at,
            curves: self.curves.clone(),
        };
        let mut ck = Checkpoint::new(GAN_KIND, serde_json::to_value(meta).expect("metadata serialises"));
        ck.insert_store("generator", &self.generator);
        ck.insert_store("critic", &self.critic);
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind(GAN_KIND)?;
        let m: GanMeta = ck.meta_as()?;
        Ok(GanCheckpoint {
            config: m.config,
            group: m.group,
            channels: m.channels,
            epoch_length_s: m.epoch_length_s,
            sampling_rate: m.sampling_rate,
            generator: ck.store("generator"),
            critic: ck.store("critic"),
            selection_epoch: m.selection_epoch,
            selection_generator_loss: m.selection_generator_loss,
            converged_at: m.converged_at,
            curves: m.curves,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

pub(crate) fn noise(rng: &mut StageRng, batch: usize, dim: usize) -> Var {
    Var::constant(Array2::from_shape_simple_fn((batch, dim), || standard_normal(rng)).into_dyn())
}

/// `[B, C, S]` epochs as the `[B, C, 1, S]` images the networks consume.
pub(crate) fn as_images(epochs: ArrayD<f64>) -> ArrayD<f64> {
    let s = epochs.shape().to_vec();
    epochs
        .into_shape_with_order(ndarray::IxDyn(&[s[0], s[1], 1, s[2]]))
        .expect("contiguous epochs")
}

/// Gradient of the summed critic scores with respect to the input, one
/// slice per sample.
pub fn input_gradient(critic: &Critic, store: &ParamStore, x: &Array) -> Array {
    let s = store.bind(true, false, None);
    let leaf = Var::leaf(x.clone(), true);
    let g = critic.forward(&s, &leaf).sum_all().backward();
    g.get_or_zeros(&leaf)
}

/// Penalty `lambda * mean_b (|grad_x D(x_b)| - 1)^2` on interpolates `x`
/// and its gradient with respect to the critic parameters.
///
/// The parameter gradient needs the mixed derivative of the critic. It is
/// taken as a central difference of parameter gradients along the input
/// direction each sample's penalty pushes on.
pub fn gradient_penalty(
    critic: &Critic,
    store: &ParamStore,
    x: &Array,
    lambda: f64,
) -> (f64, BTreeMap<String, Array>) {
    let b = x.shape()[0];
    let g = input_gradient(critic, store, x);
    let mut direction = Array::zeros(x.raw_dim());
    let mut penalty = 0.0;
    for (gi, mut di) in g.axis_iter(Axis(0)).zip(direction.axis_iter_mut(Axis(0))) {
        let norm = gi.iter().map(|v| v * v).sum::<f64>().sqrt();
        penalty += (norm - 1.0).powi(2);
        if norm > 0.0 {
            let k = 2.0 * lambda * (norm - 1.0) / (norm * b as f64);
            Zip::from(&mut di).and(&gi).for_each(|d, &v| *d = k * v);
        }
    }
    penalty *= lambda / b as f64;
    let scale = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    if scale == 0.0 {
        let zeros = store.params().map(|(k, v)| (k.clone(), Array::zeros(v.raw_dim()))).collect();
        return (penalty, zeros);
    }
    let unit = direction.mapv(|v| v / scale);
    let param_grad = |sign: f64| {
        let shifted = x + &unit.mapv(|v| sign * GP_STEP * v);
        let s = store.bind(true, true, None);
        s.grads(&critic.forward(&s, &Var::constant(shifted)).sum_all().backward())
    };
    let plus = param_grad(1.0);
    let minus = param_grad(-1.0);
    let grads = plus
        .into_iter()
        .map(|(k, p)| {
            let m = &minus[&k];
            (k, (p - m) * (scale / (2.0 * GP_STEP)))
        })
        .collect();
    (penalty, grads)
}

fn add_into(acc: &mut BTreeMap<String, Array>, other: BTreeMap<String, Array>) {
    for (k, v) in other {
        if let Some(a) = acc.get_mut(&k) {
            *a += &v;
        }
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

/// Relative change between the two halves of the trailing window.
fn window_change(curve: &[f64], window: usize) -> Option<f64> {
    if curve.len() < window {
        return None;
    }
    let w = &curve[curve.len() - window..];
    let (a, b) = w.split_at(window / 2);
    let (ma, mb) = (mean(a), mean(b));
    Some((mb - ma).abs() / ma.abs().max(1e-12))
}

/// Trains a generator/critic pair on one group of real epochs.
///
/// Each epoch runs `ceil(N / batch_size)` generator updates, each preceded
/// by `critic_steps` critic updates on random real batches. Once the critic
/// loss has settled (relative change between the halves of the trailing
/// window below the tolerance), the epoch with the lowest generator loss
/// from then on is kept. If it never settles, the last window is searched.
pub fn train_gan(real: &EpochSet, cfg: &GanConfig, seed: u64) -> Result<GanCheckpoint> {
    let cfg = GanConfig {
        channels: real.n_channels(),
        samples: real.n_samples(),
        ..cfg.clone()
    };
    let generator = Generator::new(&cfg)?;
    let critic = Critic::new(&cfg)?;
    if real.is_empty() {
        return Err(Error::Invalid("no epochs to train the GAN on".into()));
    }
    let group = real.labels[0];
    if real.labels.iter().any(|&l| l != group) {
        return Err(Error::Invalid("GAN training data must hold a single group".into()));
    }
    if real.provenance.iter().any(|&p| p != Provenance::Real) {
        return Err(Error::Invalid("GAN training data must be real epochs only".into()));
    }
    let mut init_rng = seeded(derive_seed(seed, "init"));
    let mut batch_rng = seeded(derive_seed(seed, "batches"));
    let mut noise_rng = seeded(derive_seed(seed, "noise"));
    let mut gen_store = generator.init(&mut init_rng);
    let mut critic_store = critic.init(&mut init_rng);
    if let Lipschitz::WeightClip { c } = cfg.lipschitz {
        critic_store.clamp_all(c);
    }
    let mut gen_opt = Adam::new(cfg.generator_lr, cfg.adam_beta1, cfg.adam_beta2);
    let mut critic_opt = Adam::new(cfg.critic_lr, cfg.adam_beta1, cfg.adam_beta2);

    let n = real.len();
    let bs = cfg.batch_size.min(n);
    let iters = n.div_ceil(cfg.batch_size);
    let d = cfg.noise.dimension;
    let mut curves = TrainingCurves::default();
    let mut converged_at = None;
    let mut best: Option<(usize, f64, ParamStore, ParamStore)> = None;

    for epoch in 0..cfg.epochs {
        let (mut c_sum, mut w_sum, mut g_sum) = (0.0, 0.0, 0.0);
        for _ in 0..iters {
            for _ in 0..cfg.critic_steps {
                let idx = rand::seq::index::sample(&mut batch_rng, n, bs).into_vec();
                let x_real = as_images(real.epochs.select(Axis(0), &idx).into_dyn());
                let x_fake = {
                    let s = gen_store.bind(false, false, None);
                    generator.forward(&s, &noise(&mut noise_rng, bs, d)).value().clone()
                };
                let s = critic_store.bind(true, true, None);
                let real_scores = critic.forward(&s, &Var::constant(x_real.clone()));
                let fake_scores = critic.forward(&s, &Var::constant(x_fake.clone()));
                let loss = critic_loss(&real_scores, &fake_scores);
                let mut grads = s.grads(&loss.backward());
                let mut total = loss.item();
                if let Lipschitz::GradientPenalty { lambda } = cfg.lipschitz {
                    let mut interp = x_real.clone();
                    for (mut row, (r, f)) in interp
                        .axis_iter_mut(Axis(0))
                        .zip(x_real.axis_iter(Axis(0)).zip(x_fake.axis_iter(Axis(0))))
                    {
                        let e: f64 = batch_rng.random();
                        Zip::from(&mut row).and(&r).and(&f).for_each(|o, &r, &f| *o = e * r + (1.0 - e) * f);
                    }
                    let (p, pg) = gradient_penalty(&critic, &critic_store, &interp, lambda);
                    total += p;
                    add_into(&mut grads, pg);
                }
                if !total.is_finite() {
                    return Err(Error::Diverged {
                        epoch,
                        what: format!("{group} critic loss"),
                    });
                }
                critic_opt.step(&mut critic_store, &grads);
                if let Lipschitz::WeightClip { c } = cfg.lipschitz {
                    critic_store.clamp_all(c);
                }
                c_sum += total;
                w_sum -= loss.item();
            }
            let gs = gen_store.bind(true, true, None);
            let cs = critic_store.bind(true, false, None);
            let fake = generator.forward(&gs, &noise(&mut noise_rng, bs, d));
            let loss = generator_loss(&critic.forward(&cs, &fake));
            if !loss.item().is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    what: format!("{group} generator loss"),
                });
            }
            gen_opt.step(&mut gen_store, &gs.grads(&loss.backward()));
            g_sum += loss.item();
        }
        let critic_steps = (iters * cfg.critic_steps) as f64;
        curves.critic_loss.push(c_sum / critic_steps);
        curves.wasserstein.push(w_sum / critic_steps);
        let g = g_sum / iters as f64;
        curves.generator_loss.push(g);
        if converged_at.is_none()
            && window_change(&curves.critic_loss, cfg.convergence_window)
                .is_some_and(|r| r < cfg.convergence_tolerance)
        {
            log::debug!("{group} critic loss settled at epoch {epoch}");
            converged_at = Some(epoch);
        }
        let eligible = converged_at.is_some() || epoch + cfg.convergence_window >= cfg.epochs;
        if eligible && best.as_ref().is_none_or(|b| g < b.1) {
            best = Some((epoch, g, gen_store.clone(), critic_store.clone()));
        }
    }
    let (selection_epoch, selection_generator_loss, generator_params, critic_params) =
        best.expect("the final epoch is always eligible");
    Ok(GanCheckpoint {
        config: cfg,
        group,
        channels: real.layout.names().to_vec(),
        epoch_length_s: real.epoch_length_s,
        sampling_rate: real.sampling_rate,
        generator: generator_params,
        critic: critic_params,
        selection_epoch,
        selection_generator_loss,
        converged_at,
        curves,
    })
}

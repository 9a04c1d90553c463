use ndarray::{Array3, ArrayD, Axis, IxDyn};
use proptest::prelude::*;
use rand::Rng;

use super::*;
use crate::autograd::Var;
use crate::dataio::{ChannelLayout, EpochSet, Label, Provenance};
use crate::rng::seeded;

fn tiny(channels: usize, samples: usize) -> GanConfig {
    GanConfig {
        channels,
        samples,
        noise: NoiseSpec {
            dimension: 6,
            ..Default::default()
        },
        base_filters: 8,
        batch_size: 4,
        epochs: 4,
        ..Default::default()
    }
}

fn random(shape: &[usize], seed: u64) -> ArrayD<f64> {
    let mut rng = seeded(seed);
    ArrayD::from_shape_fn(IxDyn(shape), |_| rng.random_range(-1.0..1.0))
}

fn sinusoids(n: usize, label: Label, samples: usize, seed: u64) -> EpochSet {
    let mut rng = seeded(seed);
    let phases: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
    let epochs = Array3::from_shape_fn((n, 2, samples), |(i, c, k)| {
        let f = if c == 0 { 0.05 } else { 0.11 };
        1.3 * (2.0 * std::f64::consts::PI * f * k as f64 + phases[i]).sin()
    });
    EpochSet::new(
        epochs,
        vec![label; n],
        vec![Provenance::Real; n],
        (0..n).map(|i| Some(format!("s{}", i % 3))).collect(),
        ChannelLayout::numbered(2),
        samples as f64 / 100.0,
        100.0,
    )
    .unwrap()
}

fn untrained(cfg: &GanConfig, group: Label, seed: u64) -> GanCheckpoint {
    let g = Generator::new(cfg).unwrap();
    let c = Critic::new(cfg).unwrap();
    let mut rng = seeded(seed);
    GanCheckpoint {
        config: cfg.clone(),
        group,
        channels: ChannelLayout::numbered(cfg.channels).names().to_vec(),
        epoch_length_s: cfg.samples as f64 / 100.0,
        sampling_rate: 100.0,
        generator: g.init(&mut rng),
        critic: c.init(&mut rng),
        selection_epoch: 0,
        selection_generator_loss: 0.0,
        converged_at: None,
        curves: TrainingCurves::default(),
    }
}

#[test]
fn upsampling_chain_reaches_target() {
    let cfg = GanConfig::default();
    assert_eq!(cfg.upsampling_chain(), ([312, 625, 1250, 2500], [1, 0, 0]));
    assert!(GanConfig { samples: 7, ..Default::default() }.validate().is_err());
    assert!(Generator::new(&GanConfig { samples: 7, ..Default::default() }).is_err());
}

#[test]
fn full_size_shapes() {
    let cfg = GanConfig::default();
    let g = Generator::new(&cfg).unwrap();
    let c = Critic::new(&cfg).unwrap();
    let mut rng = seeded(1);
    let gs = g.init(&mut rng);
    let cs = c.init(&mut rng);
    let s = gs.bind(false, false, None);
    let out = g.forward(&s, &Var::constant(random(&[8, 128], 2)));
    assert_eq!(out.shape(), &[8, 60, 1, 2500]);
    assert!(out.value().iter().all(|v| v.is_finite() && v.abs() <= 4.0));
    let s = cs.bind(false, false, None);
    assert_eq!(c.forward(&s, &out).shape(), &[8, 1]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn generator_hits_any_length(samples in 8usize..300, channels in 1usize..4) {
        let cfg = tiny(channels, samples);
        let g = Generator::new(&cfg).unwrap();
        let store = g.init(&mut seeded(3));
        let s = store.bind(false, false, None);
        let y = g.forward(&s, &Var::constant(random(&[2, 6], 4)));
        prop_assert_eq!(y.shape(), &[2, channels, 1, samples][..]);
        let c = Critic::new(&cfg).unwrap();
        let cs = c.init(&mut seeded(5)).bind(false, false, None);
        let scores = c.forward(&cs, &y);
        prop_assert_eq!(scores.shape(), &[2, 1][..]);
    }

    #[test]
    fn generator_loss_is_monotone(a in prop::collection::vec(-5.0f64..5.0, 1..10), bump in 0.01f64..3.0) {
        let fa = Var::constant(ndarray::Array1::from(a.clone()).into_dyn());
        let fb = Var::constant(ndarray::Array1::from(a).mapv(|v| v + bump).into_dyn());
        prop_assert!(generator_loss(&fb).item() < generator_loss(&fa).item());
    }
}

#[test]
fn generator_is_deterministic() {
    let cfg = tiny(3, 40);
    let g = Generator::new(&cfg).unwrap();
    let a = g.init(&mut seeded(9));
    let b = g.init(&mut seeded(9));
    let z = Var::constant(random(&[3, 6], 1));
    assert_eq!(
        g.forward(&a.bind(false, false, None), &z).value(),
        g.forward(&b.bind(false, false, None), &z).value()
    );
}

#[test]
fn critic_is_per_sample_and_permutation_equivariant() {
    let cfg = tiny(2, 32);
    let c = Critic::new(&cfg).unwrap();
    let store = c.init(&mut seeded(1));
    let s = store.bind(false, false, None);
    let x = random(&[3, 2, 1, 32], 2);
    let y = c.forward(&s, &Var::constant(x.clone())).value().clone();
    let perm = x.select(Axis(0), &[2, 0, 1, 1]);
    let yp = c.forward(&s, &Var::constant(perm)).value().clone();
    for (i, &j) in [2, 0, 1, 1].iter().enumerate() {
        assert!((yp[[i, 0]] - y[[j, 0]]).abs() < 1e-12);
    }
}

#[test]
fn critic_input_gradient_matches_central_differences() {
    let cfg = tiny(2, 16);
    let c = Critic::new(&cfg).unwrap();
    let store = c.init(&mut seeded(4));
    let x = random(&[2, 2, 1, 16], 5);
    let g = input_gradient(&c, &store, &x);
    let score = |x: &ArrayD<f64>| c.forward(&store.bind(true, false, None), &Var::constant(x.clone())).sum_all().item();
    let h = 1e-6;
    for idx in [[0, 0, 0, 0], [0, 1, 0, 7], [1, 0, 0, 15], [1, 1, 0, 3]] {
        let mut p = x.clone();
        p[&idx[..]] += h;
        let mut m = x.clone();
        m[&idx[..]] -= h;
        let fd = (score(&p) - score(&m)) / (2.0 * h);
        let an = g[&idx[..]];
        assert!((fd - an).abs() <= 1e-3 * an.abs().max(1e-6), "{fd} vs {an}");
    }
}

#[test]
fn loss_arithmetic() {
    let v = |x: &[f64]| Var::constant(ndarray::Array1::from(x.to_vec()).into_dyn());
    assert_eq!(critic_loss(&v(&[2.0, 2.0]), &v(&[1.0, 3.0])).item(), 0.0);
    assert_eq!(generator_loss(&v(&[1.0, 3.0])).item(), -2.0);
    assert_eq!(critic_loss(&v(&[0.3, -1.0]), &v(&[0.3, -1.0])).item(), 0.0);
}

fn penalty_value(c: &Critic, store: &crate::nn::ParamStore, x: &ArrayD<f64>, lambda: f64) -> f64 {
    let g = input_gradient(c, store, x);
    let b = x.shape()[0];
    g.axis_iter(Axis(0))
        .map(|gi| (gi.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).powi(2))
        .sum::<f64>()
        * lambda
        / b as f64
}

#[test]
fn gradient_penalty_value_and_parameter_gradient() {
    let cfg = tiny(2, 16);
    let c = Critic::new(&cfg).unwrap();
    let mut store = c.init(&mut seeded(6));
    let w = store.param_mut("critic.head.weight").unwrap();
    w.mapv_inplace(|v| v * 30.0);
    let x = random(&[3, 2, 1, 16], 7);
    let lambda = 10.0;
    let (p, grads) = gradient_penalty(&c, &store, &x, lambda);
    assert!((p - penalty_value(&c, &store, &x, lambda)).abs() < 1e-12);
    assert!(p > 0.0);
    let h = 1e-5;
    let mut checked = 0;
    for name in ["critic.head.weight", "critic.conv1.weight", "critic.conv2.bias", "critic.cbam.mlp1.weight"] {
        let an_all = &grads[name];
        let (k, _) = an_all
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .unwrap();
        let an = an_all.iter().nth(k).copied().unwrap();
        let shift = |d: f64| {
            let mut s = store.clone();
            *s.param_mut(name).unwrap().iter_mut().nth(k).unwrap() += d;
            penalty_value(&c, &s, &x, lambda)
        };
        let fd = (shift(h) - shift(-h)) / (2.0 * h);
        assert!((fd - an).abs() <= 2e-3 * fd.abs().max(1e-4), "{name}: {fd} vs {an}");
        checked += 1;
    }
    assert_eq!(checked, 4);
}

#[test]
fn clipping_bounds_every_critic_weight() {
    let data = sinusoids(8, Label::HC, 32, 1);
    let cfg = GanConfig {
        epochs: 3,
        ..tiny(2, 32)
    };
    let ck = train_gan(&data, &cfg, 3).unwrap();
    assert!(ck.critic.params().all(|(_, a)| a.iter().all(|v| v.abs() <= 0.01)));
    assert_eq!(ck.curves.critic_loss.len(), 3);
    assert_eq!(ck.group, Label::HC);
}

#[test]
fn training_is_seed_deterministic() {
    let data = sinusoids(8, Label::PD, 32, 2);
    let cfg = GanConfig {
        lipschitz: Lipschitz::GradientPenalty { lambda: 10.0 },
        ..tiny(2, 32)
    };
    let a = train_gan(&data, &cfg, 11).unwrap();
    let b = train_gan(&data, &cfg, 11).unwrap();
    assert_eq!(a, b);
    let c = train_gan(&data, &cfg, 12).unwrap();
    assert_ne!(a.curves, c.curves);
}

#[test]
fn selection_falls_in_last_window_without_convergence() {
    let data = sinusoids(8, Label::HC, 32, 3);
    let cfg = GanConfig {
        epochs: 6,
        convergence_window: 4,
        convergence_tolerance: 1e-300,
        ..tiny(2, 32)
    };
    let ck = train_gan(&data, &cfg, 1).unwrap();
    assert!(ck.converged_at.is_none());
    assert!(ck.selection_epoch >= 2);
    let g = &ck.curves.generator_loss;
    let min = g[2..].iter().cloned().fold(f64::INFINITY, f64::min);
    assert_eq!(ck.selection_generator_loss, min);
    assert_eq!(g[ck.selection_epoch], min);
}

#[test]
fn training_rejects_mixed_groups() {
    let a = sinusoids(4, Label::HC, 32, 1);
    let b = sinusoids(4, Label::PD, 32, 2);
    let mixed = EpochSet::concat(&[&a, &b]).unwrap();
    assert!(train_gan(&mixed, &tiny(2, 32), 0).is_err());
}

#[test]
fn checkpoint_round_trip_reproduces_samples() {
    let cfg = tiny(2, 32);
    let ck = untrained(&cfg, Label::PD, 5);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("pd.gan");
    ck.save(&p).unwrap();
    let back = GanCheckpoint::load(&p).unwrap();
    assert_eq!(back, ck);
    assert_eq!(generate(&back, 5, 9).unwrap().epochs, generate(&ck, 5, 9).unwrap().epochs);
}

#[test]
fn generate_contract() {
    let cfg = tiny(2, 32);
    let ck = untrained(&cfg, Label::HC, 1);
    let g = generate(&ck, 17, 3).unwrap();
    assert_eq!(g.len(), 17);
    assert_eq!(g.count(Label::HC, Provenance::Generated), 17);
    assert!(g.subjects.iter().all(Option::is_none));
    assert_ne!(g.epochs, generate(&ck, 17, 4).unwrap().epochs);
    assert!(generate(&ck, 0, 3).is_err());
}

fn balanced(n_per: usize, samples: usize) -> EpochSet {
    let hc = sinusoids(n_per, Label::HC, samples, 1);
    let pd = sinusoids(n_per, Label::PD, samples, 2);
    EpochSet::concat(&[&hc, &pd]).unwrap()
}

#[test]
fn fusion_counts_and_real_part() {
    let cfg = tiny(2, 32);
    let (hc, pd) = (untrained(&cfg, Label::HC, 1), untrained(&cfg, Label::PD, 2));
    let real = balanced(50, 32);
    let spec = FusionSpec { delta: 1.7, seed: 4 };
    let f = fuse(&real, &hc, &pd, &spec).unwrap();
    assert_eq!(f.len(), 270);
    assert_eq!(f.count(Label::HC, Provenance::Generated), 85);
    assert_eq!(f.count(Label::PD, Provenance::Generated), 85);
    assert_eq!(f.select(&(0..100).collect::<Vec<_>>()), real);
    assert_eq!(f, fuse(&real, &hc, &pd, &spec).unwrap());
    let tiny_delta = fuse(&real, &hc, &pd, &FusionSpec { delta: 1e-3, seed: 4 }).unwrap();
    assert_eq!(tiny_delta, real);
    assert_eq!(FusionSpec { delta: 1.0, seed: 0 }.generated_count(64), 64);
    assert!(fuse(&real, &hc, &pd, &FusionSpec { delta: 0.0, seed: 0 }).is_err());
    assert!(fuse(&real, &pd, &hc, &spec).is_err());
    let other = untrained(&tiny(2, 40), Label::HC, 1);
    assert!(fuse(&real, &other, &pd, &spec).is_err());
}

use ndarray::{array, Array3, ArrayD, IxDyn};
use rand::Rng;

use super::*;
use crate::autograd::Var;
use crate::dataio::{ChannelLayout, EpochSet, Label, Provenance};
use crate::rng::seeded;

fn random(shape: &[usize], seed: u64) -> ArrayD<f64> {
    let mut rng = seeded(seed);
    ArrayD::from_shape_fn(IxDyn(shape), |_| rng.random_range(-1.0..1.0))
}

/// Grouped, dilated, valid convolution by explicit loops.
fn conv_oracle(x: &ArrayD<f64>, w: &ArrayD<f64>, groups: usize, dil: [usize; 2]) -> ArrayD<f64> {
    let (b, cin, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (cout, cpg, kh, kw) = (w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]);
    let ho = h - dil[0] * (kh - 1);
    let wo = wd - dil[1] * (kw - 1);
    let opg = cout / groups;
    assert_eq!(cpg, cin / groups);
    let mut out = ArrayD::zeros(IxDyn(&[b, cout, ho, wo]));
    for n in 0..b {
        for k in 0..cout {
            let g = k / opg;
            for m in 0..ho {
                for q in 0..wo {
                    let mut acc = 0.0;
                    for c in 0..cpg {
                        for i in 0..kh {
                            for j in 0..kw {
                                acc += x[[n, g * cpg + c, m + dil[0] * i, q + dil[1] * j]] * w[[k, c, i, j]];
                            }
                        }
                    }
                    out[[n, k, m, q]] = acc;
                }
            }
        }
    }
    out
}

#[test]
fn depthwise_identity_and_averaging_kernels() {
    let x = random(&[1, 4, 3, 5], 1);
    let mut w = ArrayD::zeros(IxDyn(&[4, 1, 1, 1]));
    w.fill(1.0);
    assert_eq!(depthwise_conv(&x, &w, 4).unwrap(), x);
    let x = ArrayD::from_shape_vec(IxDyn(&[1, 1, 1, 4]), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let w = ArrayD::from_shape_vec(IxDyn(&[1, 1, 1, 2]), vec![0.5, 0.5]).unwrap();
    let y = depthwise_conv(&x, &w, 1).unwrap();
    assert_eq!(y.iter().copied().collect::<Vec<_>>(), vec![1.5, 2.5, 3.5]);
}

#[test]
fn depthwise_rejects_indivisible_groups() {
    let x = random(&[1, 6, 2, 5], 2);
    let w = random(&[4, 1, 1, 1], 3);
    assert!(depthwise_conv(&x, &w, 4).is_err());
}

#[test]
fn dilated_examples() {
    let x = ArrayD::from_shape_vec(IxDyn(&[1, 1, 1, 4]), vec![1.0, 10.0, 100.0, 1000.0]).unwrap();
    let w = ArrayD::from_shape_vec(IxDyn(&[1, 1, 1, 2]), vec![1.0, 1.0]).unwrap();
    let y = dilated_conv(&x, &w, [1, 2]).unwrap();
    assert_eq!(y.iter().copied().collect::<Vec<_>>(), vec![101.0, 1010.0]);
    let x = random(&[2, 3, 4, 9], 4);
    let w = random(&[2, 3, 2, 3], 5);
    assert_eq!(dilated_conv(&x, &w, [1, 1]).unwrap(), depthwise_conv(&x, &w, 1).unwrap());
    assert!(dilated_conv(&x, &w, [1, 5]).is_err());
    assert!(dilated_conv(&x, &w, [0, 1]).is_err());
}

#[test]
fn ops_match_loop_oracle() {
    let mut k = 0;
    for groups in [1, 2, 8] {
        for dil in [1, 2, 4] {
            let cin = 8;
            let x = random(&[2, cin, 3, 40], 100 + k);
            let w = random(&[8, cin / groups, 2, 3], 200 + k);
            let y = if dil == 1 {
                depthwise_conv(&x, &w, groups).unwrap()
            } else if groups == 1 {
                dilated_conv(&x, &w, [1, dil]).unwrap()
            } else {
                crate::autograd::conv2d_forward(
                    &x,
                    &w,
                    &crate::autograd::ConvParams::valid().with_groups(groups).with_dilation([1, dil]),
                )
            };
            let o = conv_oracle(&x, &w, groups, [1, dil]);
            assert_eq!(y.shape(), o.shape());
            for (a, b) in y.iter().zip(o.iter()) {
                assert!((a - b).abs() < 1e-9);
            }
            k += 1;
        }
    }
}

#[test]
fn cosine_schedule_closed_form() {
    assert_eq!(cosine_lr(1e-3, 1e-4, 0, 100), 1e-3);
    assert!((cosine_lr(1e-3, 1e-4, 100, 100) - 1e-4).abs() < 1e-18);
    assert!((cosine_lr(1e-3, 1e-4, 50, 100) - 5.5e-4).abs() < 1e-15);
}

#[test]
fn metric_examples() {
    let m = Metrics::from_confusion([[45, 5], [10, 40]], MetricLevel::Epoch);
    assert!((m.accuracy - 0.85).abs() < 1e-12);
    assert!((m.f1 - 80.0 / 95.0).abs() < 1e-12);
    let truth = vec![Label::HC, Label::PD, Label::HC, Label::PD];
    let m = Metrics::from_predictions(&truth, &truth, MetricLevel::Epoch).unwrap();
    assert_eq!((m.accuracy, m.f1), (1.0, 1.0));
    let m = Metrics::from_predictions(&truth, &[Label::HC; 4], MetricLevel::Epoch).unwrap();
    assert_eq!((m.accuracy, m.f1), (0.5, 0.0));
    assert!(Metrics::from_predictions(&[], &[], MetricLevel::Epoch).is_err());
}

#[test]
fn pooling_chain_and_intermediate_shapes() {
    let cfg = PdnexConfig {
        n_channels: 3,
        n_samples: 2500,
        batch_size: 2,
        ..Default::default()
    };
    assert_eq!(cfg.pooled_lengths(), [625, 156, 39]);
    let net = Pdnex::new(&cfg).unwrap();
    let store = net.init(&mut seeded(1));
    let mut s = store.bind(false, false, None);
    let tr = net.forward_trace(&mut s, &Var::constant(random(&[2, 3, 2500], 2)));
    assert_eq!(tr.after_depthwise.shape(), &[2, 16, 1, 2500]);
    assert_eq!(tr.after_block1.shape(), &[2, 16, 1, 625]);
    assert_eq!(tr.after_block2.shape(), &[2, 8, 1, 156]);
    assert_eq!(tr.after_block3.shape(), &[2, 2, 1, 39]);
    assert_eq!(tr.logits.shape(), &[2, 2]);
}

#[test]
fn short_inputs_are_rejected() {
    let cfg = PdnexConfig {
        n_samples: 63,
        ..Default::default()
    };
    assert!(Pdnex::new(&cfg).is_err());
}

#[test]
fn every_parameter_receives_gradient() {
    let cfg = PdnexConfig {
        n_channels: 3,
        n_samples: 128,
        dropout: 0.0,
        ..Default::default()
    };
    let net = Pdnex::new(&cfg).unwrap();
    let store = net.init(&mut seeded(3));
    let mut s = store.bind(true, true, None);
    let loss = net
        .forward(&mut s, &Var::constant(random(&[4, 3, 128], 4)))
        .cross_entropy(&[0, 1, 1, 0]);
    let grads = s.grads(&loss.backward());
    assert_eq!(grads.len(), store.params().count());
    for (name, g) in grads {
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm > 0.0, "{name} has zero gradient");
    }
}

fn toy_set(n: usize, c: usize, t: usize, seed: u64) -> EpochSet {
    let mut rng = seeded(seed);
    let labels: Vec<Label> = (0..n).map(|i| Label::from_index(i % 2)).collect();
    let epochs = Array3::from_shape_fn((n, c, t), |(i, _, k)| {
        let f = if i % 2 == 0 { 0.05 } else { 0.2 };
        (2.0 * std::f64::consts::PI * f * k as f64).sin() + 0.3 * rng.random_range(-1.0..1.0)
    });
    EpochSet::new(
        epochs,
        labels,
        vec![Provenance::Real; n],
        (0..n).map(|i| Some(format!("s{}", i % 4))).collect(),
        ChannelLayout::numbered(c),
        t as f64 / 100.0,
        100.0,
    )
    .unwrap()
}

#[test]
fn training_is_deterministic_and_round_trips() {
    let data = toy_set(8, 2, 64, 1);
    let tcfg = TrainConfig {
        epochs: 3,
        seed: 9,
        ..Default::default()
    };
    let a = train_classifier(&data, &PdnexConfig::default(), &tcfg).unwrap();
    let b = train_classifier(&data, &PdnexConfig::default(), &tcfg).unwrap();
    assert_eq!(a, b);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("clf.ckpt");
    a.save(&p).unwrap();
    let back = ClassifierModel::load(&p).unwrap();
    assert_eq!(back, a);
    assert_eq!(back.predict(&data).unwrap(), a.predict(&data).unwrap());
    let (m, subj) = evaluate(&a, &data).unwrap();
    assert_eq!(m.confusion.iter().flatten().sum::<usize>(), 8);
    assert_eq!(subj.unwrap().confusion.iter().flatten().sum::<usize>(), 4);
}

#[test]
fn single_class_training_is_rejected() {
    let data = toy_set(4, 2, 64, 2);
    let hc = data.filter(|l, _| l == Label::HC);
    assert!(train_classifier(&hc, &PdnexConfig::default(), &TrainConfig::default()).is_err());
}

#[test]
fn softmax_rows_sum_to_one() {
    let p = softmax(&array![[1.0, 2.0], [1000.0, -1000.0]].into_dyn());
    for row in p.rows() {
        assert!((row.sum() - 1.0).abs() < 1e-12);
    }
}

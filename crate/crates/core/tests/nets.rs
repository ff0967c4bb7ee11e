use std::collections::HashSet;

use mpijpeg::nets::{
    fuse_features, split_rgba, Discriminator, Embedder, NetConfig, Perceptual, Restorer,
};
use mpijpeg::tensor::{ParamStore, Tensor};
use mpijpeg::weights::TensorArchive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random<T: mpijpeg::tensor::Scalar>(shape: &[usize], seed: u64) -> Tensor<T> {
    let mut r = rng(seed);
    let n = shape.iter().product();
    Tensor::from_vec(
        (0..n)
            .map(|_| T::from_f64(r.gen_range(0.0..1.0)).unwrap())
            .collect(),
        shape,
    )
}

fn small_config(planes: usize) -> NetConfig {
    NetConfig {
        num_planes: planes,
        ..NetConfig::desk()
    }
}

#[test]
fn fuse_selects_one_hot_plane() {
    let (p, c, h, w) = (5, 3, 4, 4);
    let s = random::<f64>(&[1, p * c, h, w], 1);
    let mut a = vec![0.0; p * h * w];
    a[2 * h * w..3 * h * w].iter_mut().for_each(|v| *v = 1.0);
    let out = fuse_features(&s, &Tensor::from_vec(a, &[1, p, h, w])).unwrap();
    assert_eq!(out.data(), &s.data()[2 * c * h * w..3 * c * h * w]);
}

#[test]
fn fuse_with_uniform_alpha_is_the_mean() {
    let (p, c, h, w) = (32, 2, 3, 3);
    let s = random::<f64>(&[1, p * c, h, w], 2);
    let out = fuse_features(&s, &Tensor::full(&[1, p, h, w], 1.0 / 32.0)).unwrap();
    for ch in 0..c {
        for k in 0..h * w {
            let mean: f64 = (0..p)
                .map(|i| s.data()[(i * c + ch) * h * w + k])
                .sum::<f64>()
                / p as f64;
            assert!((out.data()[ch * h * w + k] - mean).abs() < 1e-12);
        }
    }
}

#[test]
fn fuse_matches_triple_loop() {
    let (n, p, c, h, w) = (2, 4, 3, 2, 2);
    let s = random::<f64>(&[n, p * c, h, w], 3);
    let a = random::<f64>(&[n, p, h, w], 4);
    let out = fuse_features(&s, &a).unwrap();
    for b in 0..n {
        for ch in 0..c {
            for k in 0..h * w {
                let mut acc = 0.0;
                for i in 0..p {
                    acc += a.data()[(b * p + i) * h * w + k]
                        * s.data()[((b * p + i) * c + ch) * h * w + k];
                }
                assert!((out.data()[(b * c + ch) * h * w + k] - acc).abs() <= 1e-6);
            }
        }
    }
}

#[test]
fn fuse_is_linear_in_features() {
    let (p, c, h, w) = (3, 2, 3, 2);
    let s1 = random::<f64>(&[1, p * c, h, w], 5);
    let s2 = random::<f64>(&[1, p * c, h, w], 6);
    let a = random::<f64>(&[1, p, h, w], 7);
    let lhs = fuse_features(&s1.scale(2.0).add(&s2.scale(-0.5)), &a).unwrap();
    let rhs = fuse_features(&s1, &a)
        .unwrap()
        .scale(2.0)
        .add(&fuse_features(&s2, &a).unwrap().scale(-0.5));
    for (x, y) in lhs.data().iter().zip(rhs.data()) {
        assert!((x - y).abs() <= 1e-6);
    }
}

#[test]
fn fuse_gradients_match_finite_differences() {
    let (p, c, h, w) = (3, 2, 2, 2);
    let s = random::<f64>(&[1, p * c, h, w], 8);
    let a = random::<f64>(&[1, p, h, w], 9);
    let r = random::<f64>(&[1, c, h, w], 10);
    let f = |s: &Tensor<f64>, a: &Tensor<f64>| fuse_features(s, a).unwrap().mul(&r).sum_all();
    let (sv, av) = (s.detach_var(), a.detach_var());
    let g = f(&sv, &av).backward();
    for (t, grad, is_s) in [
        (&s, g.get(&sv).unwrap(), true),
        (&a, g.get(&av).unwrap(), false),
    ] {
        for i in 0..t.numel() {
            let mut plus = t.to_vec();
            plus[i] += 1e-6;
            let plus = Tensor::from_vec(plus, t.shape());
            let fd = if is_s {
                (f(&plus, &a).item() - f(&s, &a).item()) / 1e-6
            } else {
                (f(&s, &plus).item() - f(&s, &a).item()) / 1e-6
            };
            assert!((fd - grad[i]).abs() < 1e-6);
        }
    }
}

#[test]
fn fuse_rejects_mismatched_shapes() {
    let s = random::<f32>(&[1, 6, 4, 4], 0);
    assert!(fuse_features(&s, &random::<f32>(&[1, 4, 4, 4], 0)).is_err());
    assert!(fuse_features(&s, &random::<f32>(&[1, 3, 4, 2], 0)).is_err());
}

#[test]
fn split_rgba_deinterleaves_planes() {
    let x = Tensor::<f32>::from_vec((0..8).map(|v| v as f32).collect(), &[1, 8, 1, 1]);
    let (rgb, a) = split_rgba(&x).unwrap();
    assert_eq!(rgb.data(), &[0.0, 1.0, 2.0, 4.0, 5.0, 6.0]);
    assert_eq!(a.data(), &[3.0, 7.0]);
}

#[test]
fn embedder_output_matches_input_size() {
    let cfg = NetConfig::desk();
    let e = Embedder::<f32>::new(&cfg, &mut rng(1));
    let (h, w) = (288, 512);
    let out = e
        .forward(
            &random(&[1, 4 * cfg.num_planes, h, w], 2),
            &random(&[1, 3, h, w], 3),
        )
        .unwrap();
    assert_eq!(out.shape(), &[1, 3, h, w]);
    assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn embedder_rejects_bad_shapes() {
    let cfg = small_config(4);
    let e = Embedder::<f32>::new(&cfg, &mut rng(1));
    assert!(e
        .forward(&random(&[1, 16, 18, 16], 0), &random(&[1, 3, 18, 16], 0))
        .is_err());
    assert!(e
        .forward(&random(&[1, 12, 16, 16], 0), &random(&[1, 3, 16, 16], 0))
        .is_err());
    assert!(e
        .forward(&random(&[1, 16, 16, 16], 0), &random(&[1, 3, 8, 16], 0))
        .is_err());
}

#[test]
fn every_embedder_parameter_receives_gradient() {
    let cfg = small_config(32);
    let e = Embedder::<f64>::new(&cfg, &mut rng(4));
    let (h, w) = (16, 16);
    let target = random::<f64>(&[1, 3, h, w], 7);
    let out = e
        .forward(
            &random(&[1, 4 * cfg.num_planes, h, w], 5),
            &random(&[1, 3, h, w], 6),
        )
        .unwrap();
    let grads = out.mse(&target).backward();
    for (name, t) in e.params.iter() {
        let g = grads
            .get(t)
            .unwrap_or_else(|| panic!("{name} has no gradient"));
        if name.starts_with("embedder.branch") && name.ends_with("weight") {
            // one group of output channels per plane
            let per_plane = g.len() / cfg.num_planes;
            for (i, chunk) in g.chunks(per_plane).enumerate() {
                assert!(
                    chunk.iter().any(|&v| v != 0.0),
                    "{name}: plane {i} branch is dead"
                );
            }
        } else {
            assert!(g.iter().any(|&v| v != 0.0), "{name} gets zero gradient");
        }
    }
}

#[test]
fn different_mpis_give_different_embeddings() {
    let cfg = small_config(8);
    let e = Embedder::<f32>::new(&cfg, &mut rng(8));
    let reference = random(&[1, 3, 16, 24], 9);
    let a = e
        .forward(&random(&[1, 32, 16, 24], 10), &reference)
        .unwrap();
    let b = e
        .forward(&random(&[1, 32, 16, 24], 11), &reference)
        .unwrap();
    assert!(a.mse(&b).item() > 0.0);
}

#[test]
fn networks_are_batch_size_invariant() {
    let cfg = small_config(4);
    let r = Restorer::<f64>::new(&cfg, &mut rng(12));
    let x = random::<f64>(&[2, 3, 16, 16], 13);
    let both = r.forward(&x).unwrap();
    let second = r.forward(&x.narrow(0, 1, 1)).unwrap();
    assert_eq!(&both.data()[both.numel() / 2..], second.data());
}

#[test]
fn restorer_shapes_and_range() {
    let cfg = NetConfig::desk();
    let r = Restorer::<f32>::new(&cfg, &mut rng(14));
    for (h, w) in [(288, 512), (160, 256)] {
        let out = r.forward(&random(&[1, 3, h, w], 15)).unwrap();
        assert_eq!(out.shape(), &[1, 128, h, w]);
        assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
    assert!(r.forward(&random(&[1, 3, 20, 16], 0)).is_err());
    assert!(r.forward(&random(&[1, 4, 16, 16], 0)).is_err());
}

#[test]
fn restorer_is_shift_covariant_away_from_borders() {
    let cfg = small_config(2);
    let r = Restorer::<f64>::new(&cfg, &mut rng(16));
    let (h, w, shift) = (48, 104, 8);
    let big = random::<f64>(&[1, 3, h, w], 17);
    let a = r.forward(&big.narrow(3, 0, w - shift)).unwrap();
    let b = r.forward(&big.narrow(3, shift, w - shift)).unwrap();
    let cw = w - shift;
    // receptive field radius: one pixel per 3x3 layer
    let margin = 2 * cfg.restorer_res_blocks + 3;
    let mut checked = 0;
    for c in 0..8 {
        for y in margin..h - margin {
            for x in margin..cw - margin - shift {
                let va = a.data()[(c * h + y) * cw + x + shift];
                let vb = b.data()[(c * h + y) * cw + x];
                assert!((va - vb).abs() <= 1e-5, "c{c} y{y} x{x}: {va} vs {vb}");
                checked += 1;
            }
        }
    }
    assert!(checked > 1000);
}

#[test]
fn discriminator_map_sizes() {
    let cfg = NetConfig::desk();
    let d = Discriminator::<f32>::new(&cfg, &mut rng(18));
    let maps = d.forward(&random(&[1, 3, 288, 512], 19)).unwrap();
    assert_eq!(maps.len(), 2);
    assert_eq!(maps[0].shape(), &[1, 1, 18, 32]);
    assert_eq!(maps[1].shape(), &[1, 1, 9, 16]);
    assert!(d.forward(&random(&[1, 3, 63, 128], 0)).is_err());
}

#[test]
fn discriminator_translates_with_its_stride() {
    let cfg = small_config(1);
    let d = Discriminator::<f64>::new(&cfg, &mut rng(20));
    let big = random::<f64>(&[1, 3, 128, 272], 21);
    let a = &d.forward(&big.narrow(3, 0, 256)).unwrap()[0];
    let b = &d.forward(&big.narrow(3, 16, 256)).unwrap()[0];
    let (_, _, mh, mw) = a.dims4();
    for y in 0..mh {
        for x in 3..mw - 4 {
            let va = a.data()[y * mw + x + 1];
            let vb = b.data()[y * mw + x];
            assert!((va - vb).abs() <= 1e-9, "cell ({x}, {y}): {va} vs {vb}");
        }
    }
}

#[test]
fn perceptual_stages_halve() {
    let cfg = NetConfig::desk();
    let p = Perceptual::<f32>::new(&cfg, &mut rng(22));
    let x = random::<f32>(&[1, 3, 64, 96], 23);
    let f = p.features(&x).unwrap();
    let dims: Vec<_> = f.iter().map(|t| (t.shape()[2], t.shape()[3])).collect();
    assert_eq!(dims, [(64, 96), (32, 48), (16, 24), (8, 12)]);
    let again = p.features(&x).unwrap();
    assert!(f.iter().zip(&again).all(|(a, b)| a.data() == b.data()));
}

#[test]
fn default_perceptual_follows_vgg19_layout() {
    let p = Perceptual::<f32>::new(&NetConfig::default(), &mut rng(0));
    let convs = p
        .params
        .iter()
        .filter(|(n, _)| n.ends_with("weight"))
        .count();
    assert_eq!(convs, 12);
    let widths: HashSet<usize> = p.params.iter().map(|(_, t)| t.shape()[0]).collect();
    assert_eq!(widths, HashSet::from([64, 128, 256, 512]));
}

#[test]
fn loaded_perceptual_weights_change_values_not_shapes() {
    let cfg = NetConfig::desk();
    let mut p = Perceptual::<f32>::new(&cfg, &mut rng(24));
    let other = Perceptual::<f32>::new(&cfg, &mut rng(25));
    let x = random::<f32>(&[1, 3, 32, 32], 26);
    let before = p.features(&x).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("vgg.bin");
    let mut archive = TensorArchive::new(serde_json::json!({}));
    archive.push_store(&other.params);
    archive.write(&path).unwrap();
    p.load_weights(&path).unwrap();
    let after = p.features(&x).unwrap();
    for (a, b) in before.iter().zip(&after) {
        assert_eq!(a.shape(), b.shape());
    }
    assert_ne!(before[3].data(), after[3].data());
    assert_eq!(after[3].data(), other.features(&x).unwrap()[3].data());

    let mut wrong = TensorArchive::new(serde_json::json!({}));
    wrong.push_store(&Perceptual::<f32>::new(&NetConfig::default(), &mut rng(0)).params);
    wrong.write(&path).unwrap();
    assert!(p.load_weights(&path).is_err());
}

#[test]
fn construction_is_seeded() {
    let cfg = small_config(4);
    let a = Restorer::<f32>::new(&cfg, &mut rng(30));
    let b = Restorer::<f32>::new(&cfg, &mut rng(30));
    let flat = |p: &ParamStore<f32>| p.iter().flat_map(|(_, t)| t.to_vec()).collect::<Vec<_>>();
    assert_eq!(flat(&a.params), flat(&b.params));
}

#[test]
fn default_widths() {
    let cfg = NetConfig::default();
    assert_eq!(cfg.branch_channels, [16, 32]);
    assert_eq!((cfg.trunk_channels, cfg.restorer_channels), (64, 64));
    assert_eq!((cfg.trunk_res_blocks, cfg.restorer_res_blocks), (4, 8));
    let r = Restorer::<f32>::new(&cfg, &mut rng(0));
    // decoder size, megabytes of f32 parameters
    let mb = r.params.num_scalars() as f64 * 4.0 / 1e6;
    assert!(mb < 10.0, "{mb}");
}

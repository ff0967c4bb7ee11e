use mpijpeg::image::Image;
use mpijpeg::perturb::{
    color_jitter, color_jitter_image, crop_tensor, random_crop, sample_crop, CropRect,
    JitterParams, PerturbConfig, Perturbation,
};
use mpijpeg::tensor::Tensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const KR: f64 = 0.299;
const KB: f64 = 0.114;
const KG: f64 = 1.0 - KR - KB;

fn random_image(w: usize, h: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Image::from_fn(w, h, 3, |_, _, _| rng.gen_range(0.05..0.95))
}

fn random_params(rng: &mut ChaCha8Rng) -> JitterParams {
    JitterParams {
        brightness: rng.gen_range(-0.1..0.1),
        contrast: rng.gen_range(0.85..1.15),
        saturation: rng.gen_range(0.85..1.15),
        hue_deg: rng.gen_range(-10.0..10.0),
    }
}

/// Per-pixel reference written from the textbook formulas.
fn reference(img: &Image, p: &JitterParams) -> Image {
    let luma = |r: f64, g: f64, b: f64| KR * r + KG * g + KB * b;
    let (w, h) = (img.width(), img.height());
    let px = |x, y| [0, 1, 2].map(|c| img.get(x, y, c) as f64 + p.brightness);
    let mut mean = 0.0;
    for y in 0..h {
        for x in 0..w {
            let [r, g, b] = px(x, y);
            mean += luma(r, g, b);
        }
    }
    mean /= (w * h) as f64;
    let mut out = Image::filled(w, h, 3, 0.0);
    for y in 0..h {
        for x in 0..w {
            let [r, g, b] = px(x, y).map(|v| mean + p.contrast * (v - mean));
            let l = luma(r, g, b);
            let [r, g, b] = [r, g, b].map(|v| l + p.saturation * (v - l));
            let yy = luma(r, g, b);
            let cb = (b - yy) / (2.0 * (1.0 - KB));
            let cr = (r - yy) / (2.0 * (1.0 - KR));
            let (s, c) = p.hue_deg.to_radians().sin_cos();
            let (cb, cr) = (c * cb - s * cr, s * cb + c * cr);
            let r = yy + 2.0 * (1.0 - KR) * cr;
            let b = yy + 2.0 * (1.0 - KB) * cb;
            let g = (yy - KR * r - KB * b) / KG;
            for (ch, v) in [r, g, b].into_iter().enumerate() {
                out.set(x, y, ch, v.clamp(0.0, 1.0) as f32);
            }
        }
    }
    out
}

fn max_diff(a: &Image, b: &Image) -> f32 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f32::max)
}

#[test]
fn identity_parameters_are_exact() {
    let img = random_image(17, 9, 1);
    assert_eq!(
        color_jitter_image(&img, &JitterParams::default()).unwrap(),
        img
    );
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let zero = PerturbConfig {
        brightness_delta: 0.0,
        contrast_range: 0.0,
        saturation_range: 0.0,
        hue_delta_deg: 0.0,
        probability: 1.0,
        ..PerturbConfig::default()
    };
    for _ in 0..10 {
        assert!(JitterParams::sample(&zero, &mut rng).is_identity());
    }
}

#[test]
fn brightness_lifts_constant_gray() {
    let img = Image::filled(8, 8, 3, 0.5);
    let p = JitterParams {
        brightness: 0.1,
        ..JitterParams::default()
    };
    let out = color_jitter_image(&img, &p).unwrap();
    assert!(out.data().iter().all(|&v| (v - 0.6).abs() < 1e-6));
}

#[test]
fn matches_scalar_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for seed in 0..20 {
        let img = random_image(13, 11, seed);
        let p = random_params(&mut rng);
        let d = max_diff(&color_jitter_image(&img, &p).unwrap(), &reference(&img, &p));
        assert!(d <= 1e-6, "seed {seed}: {d}");
    }
}

#[test]
fn commutes_with_horizontal_flip() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for seed in 0..10 {
        let img = random_image(15, 7, 100 + seed);
        let p = random_params(&mut rng);
        let a = color_jitter_image(&img, &p).unwrap().flip_horizontal();
        let b = color_jitter_image(&img.flip_horizontal(), &p).unwrap();
        assert!(max_diff(&a, &b) <= 1e-6);
    }
}

#[test]
fn jacobian_vector_products_match_finite_differences() {
    let (w, h) = (6, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let params: Vec<JitterParams> = (0..2).map(|_| random_params(&mut rng)).collect();
    // keep away from the clamp
    let x: Vec<f64> = (0..2 * 3 * w * h)
        .map(|_| rng.gen_range(0.3..0.7))
        .collect();
    let r: Vec<f64> = (0..x.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let shape = [2, 3, h, w];
    let xt = Tensor::<f64>::var(x.clone(), &shape);
    let loss = color_jitter(&xt, &params)
        .unwrap()
        .mul(&Tensor::from_vec(r.clone(), &shape))
        .sum_all();
    let grad = loss.backward().get(&xt).unwrap().to_vec();
    let f = |v: &[f64]| -> f64 {
        let out = color_jitter(&Tensor::from_vec(v.to_vec(), &shape), &params).unwrap();
        out.data().iter().zip(&r).map(|(a, b)| a * b).sum()
    };
    for _ in 0..5 {
        let dir: Vec<f64> = (0..x.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let eps = 1e-6;
        let plus: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + eps * d).collect();
        let minus: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a - eps * d).collect();
        let fd = (f(&plus) - f(&minus)) / (2.0 * eps);
        let an: f64 = grad.iter().zip(&dir).map(|(g, d)| g * d).sum();
        assert!((fd - an).abs() <= 1e-3 * an.abs().max(1e-3), "{fd} vs {an}");
    }
}

#[test]
fn crop_of_full_fraction_is_whole_image() {
    let img = random_image(96, 72, 2);
    let cfg = PerturbConfig {
        crop_fraction: 1.0,
        ..PerturbConfig::default()
    };
    let (out, rect) = random_crop(&img, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert_eq!(rect, CropRect::full(96, 72));
    assert_eq!(out, img);
}

#[test]
fn crop_dims_follow_fraction_and_alignment() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut seen_w = std::collections::BTreeSet::new();
    for _ in 0..500 {
        let r = sample_crop(512, 288, 0.9, &mut rng).unwrap();
        assert!(
            (464..=512).contains(&r.width) && (264..=288).contains(&r.height),
            "{r:?}"
        );
        assert_eq!((r.width % 8, r.height % 8), (0, 0));
        assert!(r.x + r.width <= 512 && r.y + r.height <= 288);
        seen_w.insert(r.width);
    }
    assert_eq!(seen_w.len(), 7);
}

#[test]
fn crop_is_deterministic_under_seed() {
    let a = sample_crop(200, 150, 0.7, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    let b = sample_crop(200, 150, 0.7, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn too_small_images_cannot_be_cropped() {
    let img = random_image(40, 100, 0);
    assert!(random_crop(
        &img,
        &PerturbConfig::default(),
        &mut ChaCha8Rng::seed_from_u64(0)
    )
    .is_err());
}

#[test]
fn tensor_crop_matches_image_crop() {
    let img = random_image(80, 72, 4);
    let rect = CropRect {
        x: 5,
        y: 3,
        width: 64,
        height: 64,
    };
    let t = crop_tensor(&img.to_tensor::<f32>(), &rect).unwrap();
    assert_eq!(
        Image::from_tensor(&t, 0).unwrap(),
        img.crop(5, 3, 64, 64).unwrap()
    );
}

#[test]
fn disabled_perturbation_is_identity() {
    let img = random_image(72, 64, 6);
    let t = img.to_tensor::<f32>();
    let p = Perturbation::sample(
        &PerturbConfig::none(),
        1,
        72,
        64,
        &mut ChaCha8Rng::seed_from_u64(2),
    )
    .unwrap();
    assert_eq!(p, Perturbation::identity(1, 72, 64));
    assert_eq!(p.apply(&t).unwrap().data(), t.data());
}

#[test]
fn roughly_half_of_draws_fire() {
    let cfg = PerturbConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = 2000;
    let fired = (0..n)
        .filter(|_| JitterParams::sample(&cfg, &mut rng).brightness != 0.0)
        .count();
    assert!((fired as f64 / n as f64 - 0.5).abs() < 0.05, "{fired}");
}

#[test]
fn config_validation() {
    assert!(PerturbConfig::default().validate().is_ok());
    let bad = PerturbConfig {
        crop_fraction: 0.0,
        ..PerturbConfig::default()
    };
    assert!(bad.validate().is_err());
    let bad = PerturbConfig {
        hue_delta_deg: -1.0,
        ..PerturbConfig::default()
    };
    assert!(bad.validate().is_err());
    let json = r#"{"brightness_delta": 0.2, "crop": false}"#;
    let cfg: PerturbConfig = serde_json::from_str(json).unwrap();
    assert_eq!(cfg.brightness_delta, 0.2);
    assert!(!cfg.crop && cfg.hue);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn output_stays_in_unit_range(seed in 0u64..1000, b in -0.5f64..0.5, c in 0.0f64..2.0, s in 0.0f64..2.0, hue in -180.0f64..180.0) {
        let img = random_image(9, 7, seed);
        let p = JitterParams { brightness: b, contrast: c, saturation: s, hue_deg: hue };
        let out = color_jitter_image(&img, &p).unwrap();
        prop_assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!(max_diff(&out, &reference(&img, &p)) <= 1e-5);
    }

    #[test]
    fn crops_are_aligned_and_inside(w in 64usize..300, h in 64usize..300, frac in 0.05f64..1.0, seed in 0u64..100) {
        let r = sample_crop(w, h, frac, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert!(r.x + r.width <= w && r.y + r.height <= h);
        prop_assert!(r.width >= 64 && r.height >= 64);
        prop_assert_eq!((r.width % 8, r.height % 8), (0, 0));
        prop_assert!(r.width as f64 >= (frac * w as f64).min((w / 8 * 8) as f64) - 1e-9);
    }
}

use std::path::PathBuf;

use mpijpeg::image::Image;
use mpijpeg::jpeg::{
    analyze, decode_frame, jpeg_decode, jpeg_encode, jpeg_simulate, quant_tables_for_quality,
    quantize_8bit, simulate_rounding_free, ChromaSubsampling, JpegConfig, BASE_CHROMA, BASE_LUMA,
};
use mpijpeg::metrics::psnr;
use mpijpeg::tensor::Tensor;
use mpijpeg::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
}

fn random_image(w: usize, h: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Image::from_fn(w, h, 3, |_, _, _| rng.gen::<f32>())
}

fn both_modes() -> [JpegConfig; 2] {
    [
        JpegConfig::new(90, ChromaSubsampling::S420),
        JpegConfig::new(90, ChromaSubsampling::S444),
    ]
}

fn max_abs(a: &[f32], b: &[f32]) -> f32 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f32::max)
}

#[test]
fn quality_50_is_the_base_table() {
    let t = quant_tables_for_quality(50).unwrap();
    assert_eq!(t.luma[0], 16);
    assert_eq!(t.luma, BASE_LUMA);
    assert_eq!(t.chroma, BASE_CHROMA);
}

#[test]
fn quality_100_is_all_ones() {
    let t = quant_tables_for_quality(100).unwrap();
    assert!(t.luma.iter().chain(&t.chroma).all(|&v| v == 1));
}

#[test]
fn quality_90_matches_hand_scaling() {
    let t = quant_tables_for_quality(90).unwrap();
    let scale = 200 - 2 * 90;
    for i in 0..64 {
        let expect = |b: u16| ((b as u32 * scale + 50) / 100).max(1) as u16;
        assert_eq!(t.luma[i], expect(BASE_LUMA[i]));
        assert_eq!(t.chroma[i], expect(BASE_CHROMA[i]));
    }
    // first row as written by an independent encoder at the same quality
    assert_eq!(&t.luma[..8], &[3, 2, 2, 3, 5, 8, 10, 12]);
}

#[test]
fn low_qualities_clamp_to_baseline_range() {
    let t = quant_tables_for_quality(1).unwrap();
    assert!(t.luma.iter().all(|&v| (1..=255).contains(&v)));
    assert_eq!(t.luma[0], 255);
    assert!(quant_tables_for_quality(0).is_err());
    assert!(quant_tables_for_quality(101).is_err());
}

#[test]
fn uniform_gray_has_only_dc() {
    let img = Image::filled(16, 16, 3, 128.0 / 255.0);
    for cfg in both_modes() {
        let tables = quant_tables_for_quality(cfg.quality).unwrap();
        let samples: Vec<f64> = vec![128.0; 3 * 256];
        let unrounded = analyze(&samples, 16, 16, &cfg, &tables, false);
        for c in &unrounded.components {
            for block in c.coeffs.chunks(64) {
                assert!(block[1..].iter().all(|v| v.abs() < 1e-12));
            }
        }
        let frame = decode_frame(&jpeg_encode(&img, &cfg).unwrap()).unwrap();
        for c in &frame.components {
            for block in c.coeffs.chunks(64) {
                assert!(block[1..].iter().all(|&v| v == 0.0));
            }
        }
    }
}

#[test]
fn random_round_trip_psnr_at_quality_90() {
    // uniform noise is the worst case; with 4:2:0 its chroma is simply gone
    let img = random_image(64, 64, 11);
    let cfg = JpegConfig::new(90, ChromaSubsampling::S444);
    let p = psnr(
        &img,
        &jpeg_decode(&jpeg_encode(&img, &cfg).unwrap()).unwrap(),
    )
    .unwrap();
    assert!(p >= 18.0, "{p}");
    let smooth = Image::from_fn(64, 64, 3, |x, y, c| {
        0.5 + 0.4 * ((x as f32 * 0.11 + c as f32).sin() * (y as f32 * 0.07).cos())
    });
    for cfg in both_modes() {
        let back = jpeg_decode(&jpeg_encode(&smooth, &cfg).unwrap()).unwrap();
        let p = psnr(&smooth, &back).unwrap();
        assert!(p >= 30.0, "{p}");
    }
}

#[test]
fn encoding_is_deterministic() {
    let img = random_image(40, 24, 3);
    for cfg in both_modes() {
        assert_eq!(
            jpeg_encode(&img, &cfg).unwrap(),
            jpeg_encode(&img, &cfg).unwrap()
        );
    }
}

#[test]
fn zero_image_round_trip() {
    let img = Image::filled(16, 16, 3, 0.0);
    for cfg in both_modes() {
        let back = jpeg_decode(&jpeg_encode(&img, &cfg).unwrap()).unwrap();
        assert!(back.data().iter().all(|&v| v == 0.0));
        // The luma DC quantizer at quality 90 cannot represent -1024 exactly,
        // so the unrounded output sits 1/8 of a level above zero.
        let sim = jpeg_simulate(&img.to_tensor::<f64>(), &cfg).unwrap();
        assert!(sim.data().iter().all(|&v| (0.0..=0.5 / 255.0).contains(&v)));
    }
    let q100 = JpegConfig::new(100, ChromaSubsampling::S444);
    let sim = jpeg_simulate(&img.to_tensor::<f64>(), &q100).unwrap();
    assert!(sim.data().iter().all(|&v| v.abs() < 1e-12));
}

#[test]
fn simulation_matches_codec_on_random_images() {
    for (seed, cfg) in (0..6).zip(both_modes().into_iter().cycle()) {
        let img = random_image(32, 32, 100 + seed);
        let real = jpeg_decode(&jpeg_encode(&img, &cfg).unwrap()).unwrap();
        let sim = jpeg_simulate(&img.to_tensor::<f32>(), &cfg).unwrap();
        assert!(max_abs(sim.data(), real.data()) <= 1.0 / 255.0);
    }
}

#[test]
fn simulation_gradient_matches_rounding_free_finite_differences() {
    for cfg in both_modes() {
        let (w, h) = (12, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x0: Vec<f64> = (0..3 * w * h).map(|_| rng.gen_range(0.05..0.95)).collect();
        let weights: Vec<f64> = (0..3 * w * h).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = Tensor::var(x0.clone(), &[1, 3, h, w]);
        let wt = Tensor::from_vec(weights.clone(), &[1, 3, h, w]);
        let g = jpeg_simulate(&x, &cfg)
            .unwrap()
            .mul(&wt)
            .sum_all()
            .backward();
        let g = g.get(&x).unwrap();
        let f = |v: &[f64]| -> f64 {
            let y = simulate_rounding_free(v, w, h, &cfg).unwrap();
            y.iter().zip(&weights).map(|(a, b)| a * b).sum()
        };
        let eps = 1e-6;
        for i in 0..x0.len() {
            let (mut a, mut b) = (x0.clone(), x0.clone());
            a[i] += eps;
            b[i] -= eps;
            let fd = (f(&a) - f(&b)) / (2.0 * eps);
            let rel = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-3);
            assert!(rel <= 1e-3, "{cfg:?} input {i}: fd {fd} vs {}", g[i]);
        }
    }
}

#[test]
fn quantize_8bit_fixes_grid_and_passes_gradient() {
    let x = Tensor::<f64>::var(vec![0.0, 128.0 / 255.0, 0.3, 0.5 / 255.0, 1.0], &[5]);
    let y = quantize_8bit(&x);
    assert_eq!(y.data()[0], 0.0);
    assert_eq!(y.data()[1], 128.0 / 255.0);
    assert_eq!(y.data()[2], 77.0 / 255.0);
    let g = y.sum_all().backward();
    assert_eq!(g.get(&x).unwrap(), &[1.0; 5]);
}

fn bless() -> bool {
    std::env::var_os("MPIJPEG_BLESS").is_some()
}

#[test]
fn golden_streams_decode_bit_exactly() {
    for name in [
        "golden_q90_420",
        "golden_q90_444",
        "golden_q90_444_rst",
        "golden_q75_gray",
    ] {
        let bytes = std::fs::read(data(&format!("{name}.jpg"))).unwrap();
        let ours = jpeg_decode(&bytes).unwrap();
        let frozen = data(&format!("{name}_decoded.png"));
        if bless() {
            ours.save_png(&frozen).unwrap();
        }
        let expected = Image::load_png(&frozen).unwrap();
        assert_eq!(ours.dims(), expected.dims());
        assert_eq!(
            ours.to_u8_interleaved(),
            expected.to_u8_interleaved(),
            "{name}"
        );

        // The reference decoder uses an integer IDCT and smoothed chroma
        // upsampling, so agreement is close but not exact.
        let reference = Image::load_png(data(&format!("{name}_pil.png"))).unwrap();
        let limit = if name.contains("420") { 4.0 } else { 2.0 };
        let d = max_abs(ours.data(), reference.data()) * 255.0;
        assert!(d <= limit + 1e-3, "{name}: {d}");
    }
}

#[test]
fn golden_encoder_output_is_frozen_and_externally_decodable() {
    let src = Image::load_png(data("golden_src.png")).unwrap();
    for (tag, cfg) in [("420", both_modes()[0]), ("444", both_modes()[1])] {
        let bytes = jpeg_encode(&src, &cfg).unwrap();
        let frozen = data(&format!("ours_q90_{tag}.jpg"));
        if bless() {
            std::fs::write(&frozen, &bytes).unwrap();
        }
        assert_eq!(bytes, std::fs::read(&frozen).unwrap(), "{tag}");

        let mut dec = zune_jpeg::JpegDecoder::new(zune_core::bytestream::ZCursor::new(&bytes));
        let pixels = dec.decode().unwrap();
        let info = dec.info().unwrap();
        assert_eq!((info.width, info.height), (16, 16));
        let external = Image::from_u8_interleaved(16, 16, 3, &pixels).unwrap();
        let ours = jpeg_decode(&bytes).unwrap();
        let limit = if tag == "420" { 4.0 } else { 2.0 };
        let d = max_abs(ours.data(), external.data()) * 255.0;
        assert!(d <= limit + 1e-3, "{tag}: {d}");
    }
}

#[test]
fn malformed_streams_report_offsets() {
    let bytes = jpeg_encode(&random_image(16, 16, 1), &JpegConfig::default()).unwrap();
    let cut = &bytes[..bytes.len() / 2];
    assert!(matches!(jpeg_decode(cut), Err(Error::Jpeg { .. })));
    let mut bad = bytes.clone();
    bad[2] = 0x00;
    match jpeg_decode(&bad) {
        Err(Error::Jpeg { offset, .. }) => assert_eq!(offset, 2),
        other => panic!("{other:?}"),
    }
    assert!(matches!(jpeg_decode(&[]), Err(Error::Jpeg { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn forward_equivalence_any_size(w in 1usize..40, h in 1usize..40, seed in any::<u64>(), q in 1u8..=100, sub in any::<bool>()) {
        let cfg = JpegConfig::new(q, if sub { ChromaSubsampling::S420 } else { ChromaSubsampling::S444 });
        let img = random_image(w, h, seed);
        let bytes = jpeg_encode(&img, &cfg).unwrap();
        let real = jpeg_decode(&bytes).unwrap();
        prop_assert_eq!(real.dims(), (w, h, 3));
        let sim = jpeg_simulate(&img.to_tensor::<f32>(), &cfg).unwrap();
        prop_assert!(max_abs(sim.data(), real.data()) <= 1.0 / 255.0);
    }

    #[test]
    fn simulation_is_deterministic(seed in any::<u64>()) {
        let img = random_image(16, 8, seed).to_tensor::<f32>();
        let cfg = JpegConfig::default();
        prop_assert_eq!(jpeg_simulate(&img, &cfg).unwrap().to_vec(), jpeg_simulate(&img, &cfg).unwrap().to_vec());
    }
}

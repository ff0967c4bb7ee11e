use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mpijpeg::mpi::{composite, render_novel_view, save_mpi, MpiManifest, MANIFEST_FILE};
use mpijpeg::train::{generate_synthetic_scene, save_scene, synthetic_scenes, TrainConfig};
use mpijpeg::{CameraModel, Image, RelativePose};

const GOLDEN_POSE: [&str; 6] = ["0.2", "-0.1", "0.05", "1", "-2", "0.5"];

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

fn tiny_manifest() -> PathBuf {
    fixtures().join("tiny").join(MANIFEST_FILE)
}

fn mpijpeg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mpijpeg"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = mpijpeg(args);
    assert!(
        out.status.success(),
        "mpijpeg {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    mpijpeg(args).status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn max_level_diff(a: &Image, b: &Image) -> u8 {
    assert_eq!(a.dims(), b.dims());
    a.to_u8_interleaved()
        .iter()
        .zip(b.to_u8_interleaved())
        .map(|(x, y)| x.abs_diff(y))
        .max()
        .unwrap_or(0)
}

/// Regenerates the checked-in fixtures. Run with `--ignored` after a
/// deliberate renderer change, then review the diff.
#[test]
#[ignore]
fn bless_fixtures() {
    let scene = &synthetic_scenes(5, 1, 24, 16, 4)[0];
    let dir = fixtures().join("tiny");
    save_scene(&dir, scene).unwrap();
    let manifest = tiny_manifest();
    let golden = fixtures().join("render_golden.png");
    let mut args = vec!["render", s(&manifest), s(&golden), "--pose"];
    args.extend(GOLDEN_POSE);
    ok(&args);
}

#[test]
fn zero_pose_render_is_the_composite() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("view.png");
    ok(&["render", s(&tiny_manifest()), s(&out)]);
    let (mpi, _) = MpiManifest::load(tiny_manifest()).unwrap();
    let view = Image::load_png(&out).unwrap();
    assert_eq!(
        view.to_u8_interleaved(),
        composite(&mpi).to_u8_interleaved()
    );
}

#[test]
fn golden_render_matches_the_checked_in_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("view.png");
    let manifest = tiny_manifest();
    let mut args = vec!["render", s(&manifest), s(&out), "--pose"];
    args.extend(GOLDEN_POSE);
    ok(&args);
    let ours = Image::load_png(&out).unwrap();
    let golden = Image::load_png(fixtures().join("render_golden.png")).unwrap();
    assert!(max_level_diff(&ours, &golden) <= 1);

    let (mpi, cam) = MpiManifest::load(tiny_manifest()).unwrap();
    let p: Vec<f64> = GOLDEN_POSE.iter().map(|v| v.parse().unwrap()).collect();
    let pose = RelativePose::from_euler_deg([p[0], p[1], p[2]], p[3], p[4], p[5]);
    let direct = render_novel_view(&mpi, &pose, &cam).unwrap();
    assert_eq!(ours.to_u8_interleaved(), direct.to_u8_interleaved());
}

#[test]
fn poses_outside_the_training_range_still_render() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("far.png");
    ok(&[
        "render",
        s(&tiny_manifest()),
        s(&out),
        "--pose",
        "2.5",
        "-1.5",
        "0.5",
        "20",
        "-30",
        "15",
    ]);
    assert_eq!(Image::load_png(&out).unwrap().dims(), (24, 16, 3));
}

#[test]
fn viewer_bundle_is_self_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = dir.path().join("bundle");
    ok(&["export-viewer", s(&tiny_manifest()), s(&bundle)]);

    let config: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(bundle.join("viewer-config.json")).unwrap())
            .unwrap();
    let manifest = MpiManifest::read(bundle.join(MANIFEST_FILE)).unwrap();
    manifest.validate(&bundle.join(MANIFEST_FILE)).unwrap();
    assert_eq!(config["num_planes"], manifest.num_planes);
    assert_eq!(
        config["depths"].as_array().unwrap().len(),
        manifest.num_planes
    );
    assert_eq!(config["pose_ranges"]["translation"], 0.5);
    assert_eq!(config["pose_ranges"]["rotation_deg"], 8.0);
    assert_eq!(config["intrinsics"]["fx"], manifest.intrinsics.fx);

    let (original, _) = MpiManifest::load(tiny_manifest()).unwrap();
    let (copied, _) = MpiManifest::load(bundle.join(MANIFEST_FILE)).unwrap();
    assert_eq!(copied.data(), original.data());

    let manifest = tiny_manifest();
    let golden = config["golden"].as_array().unwrap();
    assert_eq!(golden.len(), 3);
    for g in golden {
        let t = g["translation"].as_array().unwrap();
        let r = g["rotation_deg"].as_array().unwrap();
        let pose: Vec<String> = t.iter().chain(r).map(|v| v.to_string()).collect();
        let out = dir.path().join("check.png");
        let mut args = vec!["render", s(&manifest), s(&out), "--pose"];
        args.extend(pose.iter().map(String::as_str));
        ok(&args);
        let exported = std::fs::read(bundle.join(g["image"].as_str().unwrap())).unwrap();
        assert_eq!(std::fs::read(&out).unwrap(), exported, "{}", g["name"]);
    }
}

#[test]
fn error_classes_have_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.png");
    assert_eq!(code(&["render"]), 2);
    assert_eq!(code(&["render", "/nonexistent/manifest.json", s(&out)]), 3);

    let bad = dir.path().join("bad");
    let (mpi, _) = generate_synthetic_scene(1, 8, 8, 2);
    let path = save_mpi(&bad, &mpi, &CameraModel::default_for(8, 8)).unwrap();
    let mut m = MpiManifest::read(&path).unwrap();
    m.depths.push(3.0);
    std::fs::write(&path, serde_json::to_string(&m).unwrap()).unwrap();
    assert_eq!(code(&["render", s(&path), s(&out)]), 4);
    assert_eq!(
        code(&["export-viewer", s(&path), s(&dir.path().join("b"))]),
        4
    );

    let garbage = dir.path().join("garbage.jpg");
    std::fs::write(&garbage, [0xFF, 0xD8, 0xFF, 0xDB, 0x00]).unwrap();
    assert_eq!(
        code(&[
            "restore",
            "--input",
            s(&garbage),
            "--checkpoint",
            s(&garbage),
            "--out-dir",
            s(dir.path())
        ]),
        3
    );
}

#[test]
fn jpeg_roundtrip_writes_a_decodable_stream() {
    let dir = tempfile::tempdir().unwrap();
    let jpg = dir.path().join("ref.jpg");
    let png = dir.path().join("decoded.png");
    let src = fixtures().join("tiny/reference.png");
    let report: serde_json::Value = serde_json::from_str(&ok(&[
        "jpeg-roundtrip",
        "--input",
        s(&src),
        "--out",
        s(&jpg),
        "--decoded",
        s(&png),
    ]))
    .unwrap();
    assert_eq!(report["width"], 24);
    assert!(report["psnr"].as_f64().unwrap() > 25.0);
    let bytes = std::fs::read(&jpg).unwrap();
    assert_eq!(&bytes[..2], &[0xFF, 0xD8]);
    let decoded = mpijpeg::jpeg::jpeg_decode(&bytes).unwrap();
    assert_eq!(
        decoded.to_u8_interleaved(),
        Image::load_png(&png).unwrap().to_u8_interleaved()
    );
}

#[test]
fn perturb_is_seeded_and_crops_to_aligned_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("src.png");
    generate_synthetic_scene(2, 96, 80, 3)
        .1
        .save_png(&src)
        .unwrap();
    let run = |seed: &str, name: &str| {
        let out = dir.path().join(name);
        let edit = ok(&[
            "perturb",
            "--input",
            s(&src),
            "--out",
            s(&out),
            "--seed",
            seed,
        ]);
        (edit, Image::load_png(&out).unwrap())
    };
    let (edit_a, a) = run("3", "a.png");
    let (edit_b, b) = run("3", "b.png");
    let (edit_c, _) = run("4", "c.png");
    assert_eq!(edit_a, edit_b);
    assert_eq!(a.data(), b.data());
    assert_ne!(edit_a, edit_c);
    assert_eq!((a.width() % 8, a.height() % 8), (0, 0));
    assert!(a.width() <= 96 && a.height() <= 80);
}

#[test]
fn merge_planes_keeps_the_composite() {
    let dir = tempfile::tempdir().unwrap();
    let (mpi, _) = generate_synthetic_scene(8, 16, 8, 128);
    let src = save_mpi(
        dir.path().join("dense"),
        &mpi,
        &CameraModel::default_for(16, 8),
    )
    .unwrap();
    let out = dir.path().join("merged");
    ok(&["merge-planes", s(&src), s(&out)]);
    let (merged, _) = MpiManifest::load(out.join(MANIFEST_FILE)).unwrap();
    let (dense, _) = MpiManifest::load(&src).unwrap();
    assert_eq!(merged.num_planes(), 32);
    assert!(max_level_diff(&composite(&merged), &composite(&dense)) <= 2);

    let (small, _) = generate_synthetic_scene(8, 8, 8, 4);
    let four = save_mpi(
        dir.path().join("four"),
        &small,
        &CameraModel::default_for(8, 8),
    )
    .unwrap();
    assert_eq!(
        code(&["merge-planes", s(&four), s(&dir.path().join("m"))]),
        4
    );
}

/// Trains a tiny model through the CLI and runs it end to end.
#[test]
fn train_embed_restore_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let mut cfg = TrainConfig::desk();
    cfg.resolution = [64, 64];
    cfg.steps = 2;
    cfg.early_stop = None;
    cfg.time_budget_secs = None;
    cfg.nets.num_planes = 4;
    let cfg_path = root.join("config.json");
    cfg.save(&cfg_path).unwrap();

    let data = root.join("data");
    for scene in synthetic_scenes(11, 2, 64, 64, 4) {
        save_scene(data.join(&scene.id), &scene).unwrap();
    }
    let run = root.join("run");
    let summary: serde_json::Value = serde_json::from_str(&ok(&[
        "train",
        "--config",
        s(&cfg_path),
        "--dataset",
        s(&data),
        "--out-dir",
        s(&run),
    ]))
    .unwrap();
    assert_eq!(summary["steps"], 2);
    let ckpt = run.join("checkpoint.mpij");
    let decoder = run.join("decoder.mpij");
    assert!(run.join("metrics.csv").exists());

    let scene = data.join("synthetic-11");
    let manifest = scene.join(MANIFEST_FILE);
    let reference = scene.join("reference.png");
    let embed = |out: &Path| {
        ok(&[
            "embed",
            "--mpi",
            s(&manifest),
            "--reference",
            s(&reference),
            "--checkpoint",
            s(&ckpt),
            "--out",
            s(out),
            "--quality",
            "90",
        ]);
        std::fs::read(out).unwrap()
    };
    let jpg = root.join("embedded.jpg");
    let first = embed(&jpg);
    assert_eq!(first, embed(&root.join("again.jpg")));
    let decoded = mpijpeg::jpeg::jpeg_decode(&first).unwrap();
    assert_eq!(decoded.dims(), (64, 64, 3));

    let restored = root.join("restored");
    ok(&[
        "restore",
        "--input",
        s(&jpg),
        "--checkpoint",
        s(&decoder),
        "--out-dir",
        s(&restored),
        "--intrinsics-from",
        s(&manifest),
    ]);
    let m = MpiManifest::read(restored.join(MANIFEST_FILE)).unwrap();
    m.validate(&restored.join(MANIFEST_FILE)).unwrap();
    assert_eq!((m.width, m.height, m.num_planes), (64, 64, 4));
    ok(&[
        "render",
        s(&restored.join(MANIFEST_FILE)),
        s(&root.join("v.png")),
    ]);

    let cropped = root.join("cropped.png");
    decoded
        .crop(8, 16, 48, 40)
        .unwrap()
        .save_png(&cropped)
        .unwrap();
    let restored_crop = root.join("restored_crop");
    ok(&[
        "restore",
        "--input",
        s(&cropped),
        "--checkpoint",
        s(&decoder),
        "--out-dir",
        s(&restored_crop),
    ]);
    let m = MpiManifest::read(restored_crop.join(MANIFEST_FILE)).unwrap();
    assert_eq!((m.width, m.height), (48, 40));

    let eval = root.join("eval");
    ok(&[
        "eval",
        "--checkpoint",
        s(&ckpt),
        "--dataset",
        s(&data),
        "--out-dir",
        s(&eval),
    ]);
    let rows: Vec<csv::StringRecord> = csv::Reader::from_path(eval.join("eval.csv"))
        .unwrap()
        .records()
        .collect::<Result<_, _>>()
        .unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(&rows[0][0], "synthetic-11");
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(eval.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["scenes"], 2);
    let mean: f64 = rows
        .iter()
        .map(|r| r[3].parse::<f64>().unwrap())
        .sum::<f64>()
        / 2.0;
    assert!((summary["render"]["psnr"].as_f64().unwrap() - mean).abs() < 1e-9);

    // decoder-only checkpoints cannot embed; a 2-plane MPI does not fit the model
    let embed_with = |mpi: &Path, ck: &Path| {
        code(&[
            "embed",
            "--mpi",
            s(mpi),
            "--reference",
            s(&reference),
            "--checkpoint",
            s(ck),
            "--out",
            s(&root.join("x.jpg")),
        ])
    };
    assert_eq!(embed_with(&manifest, &decoder), 4);
    let (two, _) = generate_synthetic_scene(1, 64, 64, 2);
    let two = save_mpi(root.join("two"), &two, &CameraModel::default_for(64, 64)).unwrap();
    assert_eq!(embed_with(&two, &ckpt), 4);
}

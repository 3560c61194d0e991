//! Acceptance suite: one test per criterion, each printing a PASS line
//! (visible with `--nocapture`).
//!
//! Criteria 1-4, 9, and 10 are self-contained and run with the normal test
//! suite. Criteria 5-7 train on the full 60k/10k Fashion-MNIST for tens of
//! minutes and criterion 8 reproduces the complete published protocol over
//! hundreds of epochs, so those are `#[ignore]` by default:
//!
//! ```bash
//! tacnn fetch                       # once, downloads ./data
//! cargo test --release -p tacnn --test acceptance -- --ignored --nocapture
//! ```
//!
//! They look for the dataset under `$TACNN_DATA_DIR`, falling back to
//! `./data`, and panic with instructions when it is missing.

use std::path::PathBuf;
use tacnn::cli::{cmd_train, PartialConfig, RunConfig};
use tacnn::data_io::{
    parse_idx_images, parse_idx_labels, serialize_idx_images, serialize_idx_labels,
    synthetic_raw_dataset, write_split, IdxImages, Split,
};
use tacnn::error::Error;
use tacnn::layers::{ConvFamily, ModelSpec};
use tacnn::oracle::suites;

const SEED: u64 = 20260809;

fn pass(criterion: u32, detail: &str) {
    println!("criterion {criterion}: PASS ({detail})");
}

#[test]
fn criterion_1_oracle_equivalence() {
    let report = suites::contract_equivalence(SEED, 1000).unwrap();
    assert_eq!(report.cases, 9000);
    assert!(report.passed(), "{}", report.summary_line());
    pass(1, &format!(
        "9000 instances over orders 1..=9, max rel err {:.3e} < 1e-12",
        report.max_rel_err
    ));
}

#[test]
fn criterion_2_gradient_exactness() {
    let reports = [
        suites::coefficient_gradients(SEED, 50).unwrap(),
        suites::pixel_gradients(SEED, 50).unwrap(),
        suites::normalization_gradient(SEED, 50).unwrap(),
        suites::model_gradients(1, SEED).unwrap(),
        suites::model_gradients(2, SEED).unwrap(),
    ];
    for report in &reports {
        assert!(report.passed(), "{}", report.summary_line());
    }
    let worst = reports
        .iter()
        .map(|r| r.max_rel_err)
        .fold(0.0f64, f64::max);
    pass(2, &format!(
        "contract, normalization, and full 1-/2-layer model gradients vs central differences, worst rel err {worst:.3e}"
    ));
}

#[test]
fn criterion_3_multilinearity_and_normalization_invariants() {
    let basis = suites::basis_normalization(SEED, 500).unwrap();
    assert!(basis.passed(), "{}", basis.summary_line());
    let affine = suites::multilinearity(SEED, 1000).unwrap();
    assert!(affine.passed(), "{}", affine.summary_line());
    let range = suites::normalization_range(SEED, 10_000).unwrap();
    assert!(range.passed(), "{}", range.summary_line());
    pass(3, &format!(
        "basis sums within 1e-12 ({} cases), midpoint affinity within 1e-12 ({} cases), range contract over 10000 normalizations",
        basis.cases, affine.cases
    ));
}

/// Closed-form parameter counts written out independently of the library's
/// accounting: tensor conv in*out*2^9, baseline conv out*(in*9+1), dense
/// out*(in+1), on the 28x28 -> 26x26 -> 24x24 geometry.
fn closed_form_params(family: ConvFamily, kernels: &[usize]) -> usize {
    let mut total = 0usize;
    let mut channels = 1usize;
    let mut side = 28usize;
    for &k in kernels {
        total += match family {
            ConvFamily::Tensor => channels * k * 512,
            ConvFamily::Baseline => k * (channels * 9 + 1),
        };
        channels = k;
        side -= 2;
    }
    let flat = channels * side * side;
    total += 128 * (flat + 1);
    total += 10 * (128 + 1);
    total
}

#[test]
fn criterion_4_parameter_count_exactness() {
    // library accounting vs the closed forms, full grid
    let mut grid: Vec<Vec<usize>> = (0..=11u32).map(|m| vec![2usize.pow(m)]).collect();
    grid.extend([vec![16, 16], vec![32, 32], vec![64, 64]]);
    for family in [ConvFamily::Tensor, ConvFamily::Baseline] {
        for kernels in &grid {
            let spec = ModelSpec::conv_net(family, (1, 28, 28), kernels, 3, 1, 128, 10).unwrap();
            let expected = closed_form_params(family, kernels);
            assert_eq!(
                spec.parameter_count().total,
                expected,
                "{} {kernels:?}",
                family.as_str()
            );
        }
    }
    // spot-check the anchors stated up front
    assert_eq!(closed_form_params(ConvFamily::Tensor, &[1]), 88_458);
    assert_eq!(closed_form_params(ConvFamily::Baseline, &[1]), 87_956);

    // the bench command must report the same totals
    let out_dir = tempfile::tempdir().unwrap();
    let sweep = "1,2,4,8,16,32,64,128,256,512,1024,2048,16x16,32x32,64x64";
    let output = std::process::Command::new(env!("CARGO_BIN_EXE_tacnn"))
        .args([
            "bench",
            "--dry-run",
            "--sweep",
            sweep,
            "--families",
            "both",
            "--out-dir",
            out_dir.path().to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(output.status.success(), "bench failed: {output:?}");
    let bench_csv = std::fs::read_to_string(out_dir.path().join("bench.csv")).unwrap();
    let mut rows_checked = 0;
    for line in bench_csv.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        let family: ConvFamily = fields[0].parse().unwrap();
        let kernels: Vec<usize> = fields[2].split('x').map(|k| k.parse().unwrap()).collect();
        let params: usize = fields[3].parse().unwrap();
        assert_eq!(params, closed_form_params(family, &kernels), "row {line}");
        rows_checked += 1;
    }
    assert_eq!(rows_checked, 30);
    pass(4, "30 bench rows (tacnn & cnn, m=0..11 plus 2-layer 16/32/64) match closed forms exactly");
}

fn fashion_mnist_dir() -> PathBuf {
    std::env::var_os("TACNN_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data"))
}

fn require_fashion_mnist() -> PathBuf {
    let dir = fashion_mnist_dir();
    match tacnn::data_io::load_split(&dir, Split::Train) {
        Ok(raw) if raw.len() == 60_000 => dir,
        Ok(raw) => panic!(
            "dataset under {} has {} training samples, expected the full 60000",
            dir.display(),
            raw.len()
        ),
        Err(e) => panic!(
            "full Fashion-MNIST not found under {} ({e}); run `tacnn fetch --data-dir {}` or set TACNN_DATA_DIR",
            dir.display(),
            dir.display()
        ),
    }
}

fn desk_config(model: ConvFamily, kernels: Vec<usize>, epochs: usize, seeds: Vec<u64>) -> RunConfig {
    RunConfig::resolve(PartialConfig {
        model: Some(model),
        layers: Some(kernels.len()),
        kernels: Some(kernels),
        epochs: Some(epochs),
        seeds: Some(seeds),
        data_dir: Some(fashion_mnist_dir()),
        out_dir: Some(PathBuf::from("target/acceptance-runs")),
        ..Default::default()
    })
    .unwrap()
}

/// Desk-scale slice of the published 1-kernel result (89.7% at 400 epochs):
/// 20 epochs must already clear 86%.
#[test]
#[ignore = "trains on the full Fashion-MNIST for ~15 desk-minutes; run with --ignored after `tacnn fetch`"]
fn criterion_5_desk_scale_accuracy_small() {
    require_fashion_mnist();
    let config = desk_config(ConvFamily::Tensor, vec![1], 20, vec![0]);
    let outcome = cmd_train(&config).unwrap();
    let best = outcome.per_seed[0].best_test_acc;
    assert!(best >= 0.86, "best test accuracy {best:.4} below 0.86");
    pass(5, &format!("1-layer, 1 kernel, 20 epochs: best test accuracy {best:.4} >= 0.86"));
}

/// Desk-scale slice of the published 4-kernel result (91.5% at 400 epochs):
/// 30 epochs must already clear 89%.
#[test]
#[ignore = "trains on the full Fashion-MNIST for ~45 desk-minutes; run with --ignored after `tacnn fetch`"]
fn criterion_6_desk_scale_accuracy_medium() {
    require_fashion_mnist();
    let config = desk_config(ConvFamily::Tensor, vec![4], 30, vec![0]);
    let outcome = cmd_train(&config).unwrap();
    let best = outcome.per_seed[0].best_test_acc;
    assert!(best >= 0.89, "best test accuracy {best:.4} below 0.89");
    pass(6, &format!("1-layer, 4 kernels, 30 epochs: best test accuracy {best:.4} >= 0.89"));
}

/// Directional comparison at equal kernel count: the tensor net must beat
/// the baseline by at least one percentage point (mean over 3 seeds).
#[test]
#[ignore = "six full training runs (~1 desk-hour); run with --ignored after `tacnn fetch`"]
fn criterion_7_tensor_net_outperforms_baseline() {
    require_fashion_mnist();
    let seeds = vec![0, 1, 2];
    let tensor = cmd_train(&desk_config(ConvFamily::Tensor, vec![1], 20, seeds.clone())).unwrap();
    let baseline = cmd_train(&desk_config(ConvFamily::Baseline, vec![1], 20, seeds)).unwrap();
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let t = mean(&tensor.best_accuracies());
    let c = mean(&baseline.best_accuracies());
    assert!(
        t - c >= 0.01,
        "tensor mean {t:.4} vs baseline mean {c:.4}: margin below 1 point"
    );
    pass(7, &format!("tacnn {t:.4} vs cnn {c:.4} at 1 kernel, 20 epochs, 3 seeds"));
}

/// Extended reproduction of the published numbers; documented target, not a
/// desk gate. Hundreds of epochs over 5 seeds: plan on days of CPU time.
#[test]
#[ignore = "full-protocol reproduction (400/800 epochs x 5 seeds); CPU-days"]
fn criterion_8_full_protocol_reproduction() {
    require_fashion_mnist();
    let single = cmd_train(&desk_config(ConvFamily::Tensor, vec![512], 400, vec![0, 1, 2, 3, 4]))
        .unwrap();
    let (mean_1l, _) =
        tacnn::training::multi_seed_summary(&single.best_accuracies()).unwrap();
    assert!((mean_1l - 0.931).abs() <= 0.003, "1-layer 512 kernels: {mean_1l:.4} vs 93.1%");

    let double =
        cmd_train(&desk_config(ConvFamily::Tensor, vec![64, 64], 800, vec![0, 1, 2, 3, 4]))
            .unwrap();
    let (mean_2l, _) =
        tacnn::training::multi_seed_summary(&double.best_accuracies()).unwrap();
    assert!((mean_2l - 0.9365).abs() <= 0.003, "2-layer 64x64: {mean_2l:.4} vs 93.65%");
    pass(8, &format!("1-layer 512k {mean_1l:.4} ~ 93.1%, 2-layer 64x64 {mean_2l:.4} ~ 93.65%"));
}

#[test]
fn criterion_9_determinism() {
    let root = tempfile::tempdir().unwrap();
    let data_dir = root.path().join("data");
    write_split(&data_dir, Split::Train, &synthetic_raw_dataset(10, 30, 41)).unwrap();
    write_split(&data_dir, Split::Test, &synthetic_raw_dataset(10, 10, 42)).unwrap();

    let config = RunConfig::resolve(PartialConfig {
        kernels: Some(vec![1]),
        epochs: Some(2),
        batch_size: Some(50),
        seeds: Some(vec![7]),
        data_dir: Some(data_dir.clone()),
        out_dir: Some(root.path().join("run-a")),
        workers: Some(2),
        deterministic: Some(true),
        ..Default::default()
    })
    .unwrap();
    let first = cmd_train(&config).unwrap();

    // second run resolves from the first run's config echo, proving the
    // echo reproduces the run
    let echoed = std::fs::read_to_string(first.run_dir.join("config.resolved")).unwrap();
    let mut partial = PartialConfig::parse(&echoed).unwrap();
    partial.out_dir = Some(root.path().join("run-b"));
    let second = cmd_train(&RunConfig::resolve(partial).unwrap()).unwrap();

    let metrics_a = std::fs::read(first.run_dir.join("seed7/metrics.csv")).unwrap();
    let metrics_b = std::fs::read(second.run_dir.join("seed7/metrics.csv")).unwrap();
    assert!(!metrics_a.is_empty());
    assert_eq!(metrics_a, metrics_b, "metrics.csv differ between identical runs");
    pass(9, "byte-identical metrics.csv across two runs resolved from the same config echo");
}

#[test]
fn criterion_10_idx_round_trip_and_rejection() {
    // round-trip identity
    let raw = synthetic_raw_dataset(10, 5, 77);
    let image_bytes = serialize_idx_images(&raw.images);
    let label_bytes = serialize_idx_labels(&raw.labels);
    assert_eq!(parse_idx_images(&image_bytes).unwrap(), raw.images);
    assert_eq!(parse_idx_labels(&label_bytes).unwrap(), raw.labels);

    // malformed corpus: every entry must be rejected with a typed error
    let mut wrong_magic = image_bytes.clone();
    wrong_magic[3] = 0x01; // image payload claiming to be labels
    let mut truncated = image_bytes.clone();
    truncated.truncate(image_bytes.len() - 10);
    let mut short_header = image_bytes.clone();
    short_header.truncate(9);
    let bad_label = serialize_idx_labels(&[1, 2, 3]).iter().copied()
        .enumerate()
        .map(|(i, b)| if i == 9 { 12 } else { b })
        .collect::<Vec<u8>>();
    let cases: Vec<(&str, Box<dyn Fn() -> Result<(), Error>>)> = vec![
        ("wrong magic", Box::new(move || parse_idx_images(&wrong_magic).map(|_| ()))),
        ("truncated payload", Box::new(move || parse_idx_images(&truncated).map(|_| ()))),
        ("short header", Box::new(move || parse_idx_images(&short_header).map(|_| ()))),
        ("label out of range", Box::new(move || parse_idx_labels(&bad_label).map(|_| ()))),
        ("labels fed to image parser", Box::new(move || parse_idx_images(&label_bytes).map(|_| ()))),
    ];
    for (name, parse) in cases {
        match parse() {
            Err(Error::Parse { .. }) => {}
            other => panic!("{name}: expected a parse error, got {other:?}"),
        }
    }

    // arbitrary-dimension containers round-trip too
    let odd = IdxImages {
        count: 3,
        rows: 5,
        cols: 7,
        pixels: (0..105).map(|i| i as u8).collect(),
    };
    assert_eq!(parse_idx_images(&serialize_idx_images(&odd)).unwrap(), odd);
    pass(10, "serialize/parse identity plus typed rejection of the malformed corpus");
}

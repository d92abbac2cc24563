//! End-to-end tests of the sddectl binary: artifacts, determinism, and exit
//! codes.

use std::path::Path;
use std::process::{Command, Output};

fn sddectl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sddectl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("read {path:?}: {e}"))
}

#[test]
fn pdf_writes_three_densities_and_a_bimodal_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let result = sddectl(&[
        "pdf",
        "--model",
        "bistable",
        "--nodes",
        "2001",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "{result:?}");
    for file in ["pdf_m0.csv", "pdf_m2.csv", "pdf_wn.csv", "regime.csv", "config.toml"] {
        assert!(out.join(file).exists(), "missing {file}");
    }
    let regime = read(&out.join("regime.csv"));
    assert!(regime.lines().count() == 2);
    assert!(regime.contains("bimodal"), "{regime}");
    // config echo parses back to the same model
    let echoed = read(&out.join("config.toml"));
    assert!(echoed.contains("[potential]") && echoed.contains("s_cor = 0.25"));
}

#[test]
fn pdf_white_noise_limit_crosses_solvers() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("wn");
    let result = sddectl(&[
        "pdf",
        "--model",
        "bistable",
        "--scor",
        "1e-8",
        "--nodes",
        "2001",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "{result:?}");
    // the three CSVs agree line-for-line within float noise: compare the
    // density columns coarsely
    let load = |name: &str| -> Vec<f64> {
        read(&out.join(name))
            .lines()
            .skip(2)
            .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
            .collect()
    };
    let m0 = load("pdf_m0.csv");
    let m2 = load("pdf_m2.csv");
    let wn = load("pdf_wn.csv");
    let l1 = |a: &[f64], b: &[f64]| -> f64 {
        // bin-width-weighted half absolute difference
        0.5 * a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .sum::<f64>()
            * (10.0 / 2000.0)
    };
    assert!(l1(&m0, &wn) < 1e-3);
    assert!(l1(&m2, &wn) < 1e-3);
    assert!(l1(&m0, &m2) < 1e-3);
}

#[test]
fn mc_degenerate_noise_gives_a_point_mass_at_the_attractor() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("mc0");
    let result = sddectl(&[
        "mc",
        "--model",
        "bistable",
        "--sigma",
        "0",
        "--equation",
        "uncontrolled",
        "--paths",
        "20",
        "--t-end",
        "5",
        "--burn-in",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "{result:?}");
    let csv = read(&out.join("mc_uncontrolled.csv"));
    let nonzero: Vec<(f64, f64)> = csv
        .lines()
        .skip(2)
        .map(|l| {
            let mut parts = l.split(',');
            (
                parts.next().unwrap().parse().unwrap(),
                parts.next().unwrap().parse().unwrap(),
            )
        })
        .filter(|(_, p)| *p > 0.0)
        .collect();
    assert_eq!(nonzero.len(), 1, "expected a point mass, got {nonzero:?}");
    assert!((nonzero[0].0 - 1.0).abs() < 0.05, "mass at {}", nonzero[0].0);
    assert_eq!(nonzero[0].1, 1.0);
}

#[test]
fn mc_reruns_are_byte_identical_and_l1_reported() {
    let dir = tempfile::tempdir().unwrap();
    let pdf_out = dir.path().join("pdf");
    assert!(sddectl(&[
        "pdf",
        "--model",
        "bistable",
        "--nodes",
        "2001",
        "--out",
        pdf_out.to_str().unwrap(),
    ])
    .status
    .success());
    let analytic = pdf_out.join("pdf_m2.csv");

    let run = |name: &str| -> (String, String) {
        let out = dir.path().join(name);
        let result = sddectl(&[
            "mc",
            "--model",
            "bistable",
            "--equation",
            "uncontrolled",
            "--paths",
            "200",
            "--t-end",
            "15",
            "--burn-in",
            "5",
            "--stride",
            "10",
            "--seed",
            "31",
            "--analytic",
            analytic.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(result.status.success(), "{result:?}");
        (
            read(&out.join("mc_uncontrolled.csv")),
            read(&out.join("l1.csv")),
        )
    };
    let (csv1, l1_1) = run("a");
    let (csv2, l1_2) = run("b");
    assert_eq!(csv1, csv2, "reruns must be byte-identical");
    let dist: f64 = l1_1
        .lines()
        .nth(1)
        .unwrap()
        .rsplit(',')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!(dist > 0.0 && dist < 0.2, "L1 = {dist}");
    assert_eq!(l1_1, l1_2);
}

#[test]
fn cancel_drift_reports_the_shift_and_verification() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cancel");
    let result = sddectl(&[
        "cancel-drift",
        "--model",
        "bistable",
        "--sigma",
        "1.4",
        "--scor",
        "0.2",
        "--a",
        "1",
        "--tau",
        "0.1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "{result:?}");
    let summary = read(&out.join("cancel.csv"));
    let fields: Vec<&str> = summary.lines().nth(1).unwrap().split(',').collect();
    let xhat: f64 = fields[0].parse().unwrap();
    assert!(
        (0.46..=0.50).contains(&xhat),
        "xhat = {xhat} outside the reported window"
    );
    assert_eq!(fields[5], "true", "argmax verification failed: {summary}");
    assert!(out.join("pdf_cancel.csv").exists());
}

#[test]
fn sweep_exports_surface_boundary_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let result = sddectl(&[
        "sweep",
        "--model",
        "bistable",
        "--a",
        "0:2:1",
        "--tau",
        "0.1",
        "--scor",
        "0.2",
        "--sigma",
        "1",
        "--nodes",
        "1001",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "{result:?}");
    let surface = read(&out.join("surface.csv"));
    assert_eq!(surface.lines().count(), 4, "{surface}");
    let boundary = read(&out.join("boundary.csv"));
    assert_eq!(boundary.lines().count(), 2, "{boundary}");
    let manifest = read(&out.join("manifest.json"));
    assert!(manifest.contains("\"total\": 3"), "{manifest}");
    assert!(out.join("config.toml").exists());
}

#[test]
fn exit_codes_distinguish_failure_classes() {
    // validation: a*tau >= 1
    let r = sddectl(&["pdf", "--model", "bistable", "--a", "4", "--tau", "0.3", "--out", "/tmp/x1"]);
    assert_eq!(r.status.code(), Some(2), "{r:?}");
    // convergence: unreachable tolerance with a tiny iteration budget
    let r = sddectl(&[
        "pdf", "--model", "bistable", "--tol", "1e-15", "--max-iter", "2", "--out", "/tmp/x2",
    ]);
    assert_eq!(r.status.code(), Some(3), "{r:?}");
    // io: missing model file
    let r = sddectl(&["pdf", "--model", "/does/not/exist.toml", "--out", "/tmp/x3"]);
    assert_eq!(r.status.code(), Some(4), "{r:?}");
    // validation: sigma = 0 is rejected by the analytic pipeline (but fine for mc)
    let r = sddectl(&["pdf", "--model", "bistable", "--sigma", "0", "--out", "/tmp/x4"]);
    assert_eq!(r.status.code(), Some(2), "{r:?}");
}

#[test]
fn custom_model_files_load_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let model_path = dir.path().join("quartic.toml");
    std::fs::write(
        &model_path,
        r#"
[potential]
coeffs = [0.0, 0.0, -0.5, 0.0, 0.25]
[noise]
kind = "additive"
sigma = 1.0
s_cor = 0.2
[domain]
lo = -5.0
hi = 5.0
[control]
a = 1.0
tau = 0.1
xhat = 1.0
"#,
    )
    .unwrap();
    let out = dir.path().join("run");
    let result = sddectl(&[
        "pdf",
        "--model",
        model_path.to_str().unwrap(),
        "--sigma",
        "1.2",
        "--M",
        "2",
        "--nodes",
        "2001",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "{result:?}");
    let echoed = read(&out.join("config.toml"));
    assert!(echoed.contains("sigma = 1.2"), "{echoed}");
    assert!(!out.join("pdf_m0.csv").exists());
    assert!(out.join("pdf_m2.csv").exists());
}

use std::fs;
use std::path::Path;
use std::process::Command as Process;

use clap::Parser;
use stereocal_cli::formats::{read_json, ExtrinsicsRecord};
use stereocal_cli::{
    parse_correspondences, run, write_correspondences, CalibrationReport, Cli, CliError,
    CompareReport,
};

fn run_args(args: &[&str]) -> stereocal_cli::Result<stereocal_cli::Outcome> {
    let mut argv = vec!["stereocal"];
    argv.extend_from_slice(args);
    run(Cli::try_parse_from(argv).expect("valid arguments"))
}

fn synth(dir: &Path, extra: &[&str]) {
    let out = dir.to_str().unwrap();
    let mut args = vec!["synth", "--output", out];
    args.extend_from_slice(extra);
    run_args(&args).unwrap();
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_owned()
}

#[test]
fn three_line_file_parses_in_order() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &["--pairs", "1"]);
    let file = dir.path().join("three.txt");
    fs::write(&file, "# u_l v_l u_r v_r\n1 2 3 4\n5 6 7 8\n9 10 11 12\n").unwrap();
    let set = parse_correspondences(&file, None).unwrap();
    assert_eq!(set.len(), 3);
    let us: Vec<f64> = set.pairs.iter().map(|p| p.left.u).collect();
    assert_eq!(us, [1.0, 5.0, 9.0]);
}

#[test]
fn malformed_line_is_reported_with_its_number() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &[]);
    let file = dir.path().join("bad.txt");
    fs::write(&file, "1 2 3 4\n\na,b,c,d\n").unwrap();
    match parse_correspondences(&file, None) {
        Err(CliError::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
}

#[test]
fn missing_sidecar_is_an_intrinsics_error() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("p.txt");
    fs::write(&file, "1 2 3 4\n").unwrap();
    assert!(matches!(
        parse_correspondences(&file, None),
        Err(CliError::MissingIntrinsics { .. })
    ));
}

#[test]
fn canonical_files_round_trip_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    synth(
        dir.path(),
        &[
            "--pairs",
            "3",
            "--noise-sigma",
            "0.7",
            "--outlier-frac",
            "0.1",
        ],
    );
    for k in 0..3 {
        let path = dir.path().join(format!("pair_{k:03}.txt"));
        let original = fs::read_to_string(&path).unwrap();
        let set = parse_correspondences(&path, None).unwrap();
        assert_eq!(write_correspondences(&set), original);
    }
}

#[test]
fn noise_free_sequence_recovers_the_reference() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, &["--pairs", "4", "--viewpoint", "left", "--seed", "9"]);
    let out = run_args(&[
        "calibrate-sequence",
        "--input",
        d.to_str().unwrap(),
        "--output",
        &p(d, "report.json"),
        "--reference",
        &p(d, "reference.json"),
    ])
    .unwrap();
    assert_eq!(out.exit_code(), 0);
    let report: CalibrationReport = read_json(&d.join("report.json")).unwrap();
    let m = report.metrics.unwrap();
    assert_eq!(m.m, 4);
    assert!(m.e_theta < 1e-8 && m.e_t < 1e-8, "{m:?}");
}

#[test]
fn report_reads_back_to_the_same_values() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(
        d,
        &["--pairs", "3", "--viewpoint", "top", "--noise-sigma", "0.5"],
    );
    run_args(&[
        "calibrate-sequence",
        "--input",
        d.to_str().unwrap(),
        "--output",
        &p(d, "r.json"),
    ])
    .unwrap();
    let text = fs::read_to_string(d.join("r.json")).unwrap();
    let report: CalibrationReport = serde_json::from_str(&text).unwrap();
    assert_eq!(serde_json::to_string_pretty(&report).unwrap() + "\n", text);
    let estimates = report.estimates().unwrap();
    assert_eq!(estimates.len(), 3);
    for (rec, est) in report.pairs.iter().zip(&estimates) {
        let e = rec.estimate.as_ref().unwrap();
        assert_eq!(e.rotation.to_row_major(), est.rotation.to_row_major());
        assert!(e.homography_left.is_some() && e.homography_right.is_some());
    }
    report.global.unwrap().to_global().unwrap();
}

#[test]
fn evaluating_against_the_estimate_itself_gives_zero() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, &["--noise-sigma", "0.5", "--viewpoint", "right"]);
    let pair = p(d, "pair_000.txt");
    run_args(&[
        "calibrate-pair",
        "--input",
        &pair,
        "--output",
        &p(d, "r.json"),
    ])
    .unwrap();
    let report: CalibrationReport = read_json(&d.join("r.json")).unwrap();
    let est = report.estimates().unwrap().remove(0);
    let reference = ExtrinsicsRecord::from_extrinsics(&est.extrinsics());
    fs::write(
        d.join("self.json"),
        serde_json::to_string(&reference).unwrap(),
    )
    .unwrap();
    run_args(&[
        "evaluate",
        "--input",
        &p(d, "r.json"),
        "--reference",
        &p(d, "self.json"),
        "--output",
        &p(d, "m.json"),
    ])
    .unwrap();
    let m: stereocal::MetricsReport = read_json(&d.join("m.json")).unwrap();
    assert_eq!(m.m, 1);
    for v in [m.e_t, m.e_theta, m.sigma_t, m.sigma_theta] {
        assert!(v < 1e-15, "{m:?}");
    }
}

#[test]
fn compare_emits_one_row_per_method_and_metric() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(
        d,
        &[
            "--pairs",
            "5",
            "--noise-sigma",
            "0.5",
            "--viewpoint",
            "bottom",
        ],
    );
    run_args(&[
        "compare",
        "--input",
        d.to_str().unwrap(),
        "--output",
        &p(d, "c.json"),
        "--reference",
        &p(d, "reference.json"),
    ])
    .unwrap();
    let report: CompareReport = read_json(&d.join("c.json")).unwrap();
    let keys: Vec<(String, String)> = report
        .rows
        .iter()
        .map(|r| (r.method.clone(), r.metric.clone()))
        .collect();
    let mut expected = Vec::new();
    for method in ["ours", "baseline"] {
        for metric in ["e_t", "e_theta", "sigma_t", "sigma_theta"] {
            expected.push((method.to_owned(), metric.to_owned()));
        }
    }
    assert_eq!(keys, expected);
    assert_eq!(report.m, 5);
}

#[test]
fn series_csv_has_one_row_per_setting() {
    let dir = tempfile::tempdir().unwrap();
    let out = p(dir.path(), "noise.csv");
    run_args(&[
        "evaluate",
        "--series",
        "noise",
        "--pairs",
        "3",
        "--viewpoint",
        "top",
        "--output",
        &out,
    ])
    .unwrap();
    let csv = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "noise_sigma,M,e_t,e_theta,sigma_t,sigma_theta");
    assert_eq!(lines.len(), 7);
    assert!(lines[1].starts_with("0,3,"));
}

#[test]
fn output_does_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(
        d,
        &[
            "--pairs",
            "8",
            "--noise-sigma",
            "0.5",
            "--outlier-frac",
            "0.1",
            "--viewpoint",
            "left",
        ],
    );
    let mut texts = Vec::new();
    for threads in [1, 4] {
        let out = p(d, &format!("r{threads}.json"));
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| {
            run_args(&[
                "calibrate-sequence",
                "--input",
                d.to_str().unwrap(),
                "--output",
                &out,
            ])
            .unwrap()
        });
        texts.push(fs::read_to_string(&out).unwrap());
    }
    assert_eq!(texts[0], texts[1]);
}

#[test]
fn exit_codes_follow_the_contract() {
    let bin = env!("CARGO_BIN_EXE_stereocal");
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(
        d,
        &["--pairs", "2", "--noise-sigma", "0.5", "--viewpoint", "top"],
    );
    let status = |args: &[&str]| Process::new(bin).args(args).output().unwrap().status.code();

    assert_eq!(
        status(&[
            "calibrate-sequence",
            "--input",
            d.to_str().unwrap(),
            "--output",
            &p(d, "a.json")
        ]),
        Some(0)
    );

    fs::write(d.join("tight.json"), r#"{"solver": {"max_iterations": 1}}"#).unwrap();
    let args = [
        "calibrate-sequence",
        "--input",
        d.to_str().unwrap(),
        "--output",
        &p(d, "b.json"),
        "--config",
        &p(d, "tight.json"),
    ];
    assert_eq!(status(&args), Some(2));
    assert!(d.join("b.json").exists());

    fs::write(d.join("junk.txt"), "1 2 3\n").unwrap();
    assert_eq!(
        status(&[
            "calibrate-pair",
            "--input",
            &p(d, "junk.txt"),
            "--output",
            &p(d, "c.json")
        ]),
        Some(1)
    );
    assert_eq!(
        status(&[
            "calibrate-pair",
            "--input",
            &p(d, "none.txt"),
            "--output",
            &p(d, "c.json")
        ]),
        Some(1)
    );
}

use std::fs;
use std::path::Path;
use std::process::Command;

use fleximo::io::{cli, fkt_read, fkt_write, DType, FktTensor, Role, SidecarMeta};
use fleximo::numeric::Rng;

fn run(args: &[&str]) -> i32 {
    let mut argv = vec!["fleximo"];
    argv.extend_from_slice(args);
    cli::run(argv)
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

fn write_image(path: &str, c: usize, h: usize, w: usize, seed: u64) {
    let t = FktTensor::new(
        vec![c, h, w],
        DType::F64,
        Rng::new(seed).normal_vec(c * h * w),
    )
    .unwrap();
    fkt_write(path, &t, Some(&SidecarMeta::with_role(Role::Image))).unwrap();
}

#[test]
fn gen_kernel_writes_kernel_bias_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let k = p(dir.path(), "k.fkt");
    let code = run(&[
        "gen-kernel",
        "--wavelengths",
        "0.49,0.56,0.665",
        "--patch",
        "16",
        "--embed-dim",
        "64",
        "--seed",
        "42",
        "--token-dim",
        "32",
        "--out",
        &k,
    ]);
    assert_eq!(code, 0);
    let (t, meta) = fkt_read(&k).unwrap();
    assert_eq!(t.dims, vec![64, 3, 16, 16]);
    let meta = meta.unwrap();
    assert_eq!(meta.role, Some(Role::Kernel));
    assert_eq!(meta.lambdas_um, Some(vec![0.49, 0.56, 0.665]));
    assert_eq!(meta.patch_size, Some(16));
    assert_eq!(meta.semantics.as_deref(), Some("half_pixel"));
    assert_eq!(meta.provenance_str("bias_file"), Some("k.bias.fkt"));
    let (bias, _) = fkt_read(p(dir.path(), "k.bias.fkt")).unwrap();
    assert_eq!(bias.dims, vec![64]);
}

#[test]
fn identical_inputs_give_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (p(dir.path(), "a.fkt"), p(dir.path(), "b.fkt"));
    for out in [&a, &b] {
        let args = [
            "gen-kernel",
            "--wavelengths",
            "0.8,1.6",
            "--patch",
            "4",
            "--embed-dim",
            "8",
            "--seed",
            "3",
            "--token-dim",
            "16",
            "--out",
            out,
        ];
        assert_eq!(run(&args), 0);
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(
        fs::read(p(dir.path(), "a.bias.fkt")).unwrap(),
        fs::read(p(dir.path(), "b.bias.fkt")).unwrap()
    );
}

#[test]
fn resize_to_same_size_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (k, k16) = (p(dir.path(), "k.fkt"), p(dir.path(), "k16.fkt"));
    for dtype in ["f64", "f32"] {
        let gen = [
            "gen-kernel",
            "--wavelengths",
            "0.49,0.56",
            "--patch",
            "16",
            "--embed-dim",
            "8",
            "--token-dim",
            "16",
            "--dtype",
            dtype,
            "--out",
            &k,
        ];
        assert_eq!(run(&gen), 0);
        assert_eq!(
            run(&[
                "resize-kernel",
                "--in",
                &k,
                "--to",
                "16",
                "--method",
                "pi",
                "--out",
                &k16
            ]),
            0
        );
        assert_eq!(
            fs::read(&k).unwrap(),
            fs::read(&k16).unwrap(),
            "dtype {dtype}"
        );
    }
}

#[test]
fn resize_then_tokenize_and_encode() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (k, k8, img, tok, feat) = (
        p(d, "k.fkt"),
        p(d, "k8.fkt"),
        p(d, "img.fkt"),
        p(d, "tok.fkt"),
        p(d, "feat.fkt"),
    );
    let gen = [
        "gen-kernel",
        "--wavelengths",
        "0.49,0.56,0.665",
        "--patch",
        "16",
        "--embed-dim",
        "16",
        "--token-dim",
        "16",
        "--out",
        &k,
    ];
    assert_eq!(run(&gen), 0);
    for method in ["pi", "linear"] {
        assert_eq!(
            run(&[
                "resize-kernel",
                "--in",
                &k,
                "--to",
                "8",
                "--method",
                method,
                "--out",
                &k8
            ]),
            0
        );
        let (t, meta) = fkt_read(&k8).unwrap();
        assert_eq!(t.dims, vec![16, 3, 8, 8]);
        assert_eq!(meta.unwrap().provenance_str("resize_method"), Some(method));
    }

    write_image(&img, 3, 224, 224, 5);
    assert_eq!(
        run(&["tokenize", "--image", &img, "--kernel", &k, "--out", &tok]),
        0
    );
    assert_eq!(fkt_read(&tok).unwrap().0.dims, vec![196, 16]);

    let cfg = p(d, "enc.json");
    fs::write(&cfg, r#"{"depth": 2, "heads": 4}"#).unwrap();
    assert_eq!(
        run(&["encode", "--tokens", &tok, "--config", &cfg, "--seed", "7", "--out", &feat]),
        0
    );
    assert_eq!(fkt_read(&feat).unwrap().0.dims, vec![196, 16]);
}

#[test]
fn build_operator_shape_and_rows() {
    let dir = tempfile::tempdir().unwrap();
    let m = p(dir.path(), "M.fkt");
    assert_eq!(
        run(&["build-operator", "--from", "16", "--to", "8", "--out", &m]),
        0
    );
    let (t, meta) = fkt_read(&m).unwrap();
    assert_eq!(t.dims, vec![64, 256]);
    for row in t.data.chunks(256) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    assert_eq!(meta.unwrap().role, Some(Role::Operator));
}

#[test]
fn compare_writes_both_reports() {
    let dir = tempfile::tempdir().unwrap();
    let (k, json) = (p(dir.path(), "k.fkt"), p(dir.path(), "fidelity.json"));
    let gen = [
        "gen-kernel",
        "--wavelengths",
        "0.49",
        "--patch",
        "4",
        "--embed-dim",
        "8",
        "--token-dim",
        "16",
        "--out",
        &k,
    ];
    assert_eq!(run(&gen), 0);
    assert_eq!(
        run(&[
            "compare", "--kernel", &k, "--to", "8", "--trials", "200", "--seed", "7", "--json",
            &json
        ]),
        0
    );
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(v["schema"], "fleximo-report/1");
    let pi = v["reports"][0]["max_abs_dot_error"].as_f64().unwrap();
    let lin = v["reports"][1]["max_abs_dot_error"].as_f64().unwrap();
    assert_eq!(v["reports"][0]["strategy"], "pi");
    assert!(pi <= 1e-9 && lin > pi, "pi {pi}, linear {lin}");
}

#[test]
fn analyze_writes_maps_previews_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let img = p(dir.path(), "img.fkt");
    write_image(&img, 2, 20, 24, 9);
    let prefix = p(dir.path(), "scene_");
    assert_eq!(
        run(&["analyze", "--image", &img, "--out-prefix", &prefix]),
        0
    );
    assert_eq!(
        fkt_read(format!("{prefix}spectrum.fkt")).unwrap().0.dims,
        vec![2, 20, 24]
    );
    assert_eq!(
        fkt_read(format!("{prefix}entropy.fkt")).unwrap().0.dims,
        vec![2, 20, 24]
    );
    for name in ["spectrum_c0.pgm", "entropy_c1.pgm", "summary.json"] {
        assert!(Path::new(&format!("{prefix}{name}")).exists(), "{name}");
    }
}

#[test]
fn pgm_converts_to_single_channel_image() {
    let dir = tempfile::tempdir().unwrap();
    let (pgm, out) = (p(dir.path(), "a.pgm"), p(dir.path(), "a.fkt"));
    let mut bytes = b"P5\n2 2\n255\n".to_vec();
    bytes.extend_from_slice(&[1, 2, 3, 4]);
    fs::write(&pgm, bytes).unwrap();
    assert_eq!(run(&["pgm-to-fkt", "--in", &pgm, "--out", &out]), 0);
    assert_eq!(fkt_read(&out).unwrap().0.data, vec![1.0, 2.0, 3.0, 4.0]);
}

#[test]
fn domain_errors_exit_one_usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let img = p(dir.path(), "img.fkt");
    write_image(&img, 3, 30, 30, 1);
    let k = p(dir.path(), "k.fkt");
    let gen = [
        "gen-kernel",
        "--wavelengths",
        "0.49,0.56,0.665",
        "--patch",
        "16",
        "--embed-dim",
        "8",
        "--token-dim",
        "16",
        "--out",
        &k,
    ];
    assert_eq!(run(&gen), 0);
    // 30 is not a multiple of 16.
    assert_eq!(
        run(&[
            "tokenize",
            "--image",
            &img,
            "--kernel",
            &k,
            "--out",
            &p(dir.path(), "t.fkt")
        ]),
        1
    );
    assert_eq!(
        run(&[
            "resize-kernel",
            "--in",
            &p(dir.path(), "missing.fkt"),
            "--to",
            "8",
            "--out",
            &k
        ]),
        1
    );
    assert_eq!(
        run(&[
            "resize-kernel",
            "--in",
            &k,
            "--to",
            "8",
            "--method",
            "cubic",
            "--out",
            &k
        ]),
        2
    );
    assert_eq!(
        run(&["gen-kernel", "--wavelengths", "0.5,-1", "--out", &k]),
        2
    );
    assert_eq!(run(&["no-such-command"]), 2);
    assert_eq!(run(&["--help"]), 0);
}

#[test]
fn binary_reports_json_error_on_stderr() {
    let out = Command::new(env!("CARGO_BIN_EXE_fleximo"))
        .args([
            "tokenize",
            "--image",
            "/nonexistent/img.fkt",
            "--kernel",
            "k.fkt",
            "--out",
            "t.fkt",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(v["error"]["kind"], "io");
}

#[test]
fn binary_verify_suite_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let json = p(dir.path(), "report.json");
    let status = Command::new(env!("CARGO_BIN_EXE_fleximo"))
        .args(["verify", "--suite", "recovery", "--json", &json])
        .env("FLEXIMO_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(v["passed"], true);
    assert_eq!(v["suites"][0]["suite"], "recovery");
}

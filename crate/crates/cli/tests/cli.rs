use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY_ARCH: &str = "4x3,pool,4x3,pool,8x3,pool,8x3,16x3,pool,16x3,16x3";

fn siamzero(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_siamzero"))
        .args(args)
        .env_remove("SIAMZERO_SEED")
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn siamzero")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn last_error_line(o: &Output) -> String {
    stderr(o)
        .lines()
        .rev()
        .find(|l| l.starts_with("error: kind="))
        .unwrap_or_default()
        .to_string()
}

fn gen_toy(out: &Path, classes: &str, seed: &str) -> Output {
    siamzero(&[
        "gen-toy",
        "--classes",
        classes,
        "--samples",
        "12",
        "--seed",
        seed,
        "--out",
        out.to_str().unwrap(),
    ])
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn gen_toy_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(gen_toy(&a, "5", "11").status.success());
    assert!(gen_toy(&b, "5", "11").status.success());
    let ta = tree(&a);
    assert!(ta.len() > 5 * 12);
    assert_eq!(ta, tree(&b));
}

#[test]
fn header_lists_resolved_config_before_work() {
    let dir = tempfile::tempdir().unwrap();
    let o = gen_toy(&dir.path().join("d"), "3", "5");
    let err = stderr(&o);
    assert!(err.starts_with("# siamzero gen-toy\n"));
    assert!(err.contains("# seed=5\n"));
    assert!(err.contains("# seed_source=Flag\n"));
    assert!(err.contains("# lr0=0.1\n"));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let o = siamzero(&["bogus"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(last_error_line(&o).starts_with("error: kind=usage msg="));
}

#[test]
fn help_exits_zero() {
    let o = siamzero(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("gen-toy"));
}

#[test]
fn zero_batch_size_is_a_config_error() {
    let o = siamzero(&[
        "train",
        "--batch-size",
        "0",
        "--data",
        "x",
        "--checkpoint",
        "y",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(last_error_line(&o).starts_with("error: kind=config"));
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "learning_rate=0.1\n").unwrap();
    let o = siamzero(&["gradcheck", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(last_error_line(&o).contains("unknown key"));
}

#[test]
fn flag_overrides_file_and_env_fills_unset_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "lr0=0.2\nn=4\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_siamzero"))
        .args([
            "gen-toy",
            "--classes",
            "2",
            "--samples",
            "2",
            "--lr0",
            "0.05",
        ])
        .args(["--config", cfg.to_str().unwrap()])
        .args(["--out", dir.path().join("d").to_str().unwrap()])
        .env("SIAMZERO_SEED", "42")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert!(o.status.success());
    let err = stderr(&o);
    assert!(err.contains("# lr0=0.05\n"));
    assert!(err.contains("# n=4\n"));
    assert!(err.contains("# seed=42\n"));
    assert!(err.contains("# seed_source=Env\n"));
}

#[test]
fn missing_input_is_a_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = siamzero(&[
        "pairs",
        "--manifest",
        dir.path().join("absent.tsv").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(last_error_line(&o).starts_with("error: kind=io"));
}

#[test]
fn gradcheck_passes() {
    let o = siamzero(&["gradcheck"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let out = stdout(&o);
    for op in [
        "conv2d",
        "dense",
        "batchnorm",
        "sigmoid+bce",
        "softmax+ce",
        "pair loss",
    ] {
        assert!(out.contains(&format!("{op}\t")), "{op} missing from {out}");
    }
    assert!(!out.contains("\tfail"));
}

#[test]
fn pairs_match_the_count_identity() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("d");
    assert!(gen_toy(&d, "4", "2").status.success());
    let manifest = d.join("manifest.tsv");
    let o = siamzero(&[
        "pairs",
        "--manifest",
        manifest.to_str().unwrap(),
        "--n",
        "2",
    ]);
    assert!(o.status.success());
    let rows: Vec<String> = stdout(&o)
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("template_class"))
        .map(str::to_string)
        .collect();
    let positives = rows.iter().filter(|r| r.ends_with("\t1")).count();
    assert_eq!(positives, 4 * 12);
    assert_eq!(rows.len() - positives, 4 * 3 * 2);
}

#[test]
fn train_eval_export_classify_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    assert!(gen_toy(&dir.path().join("d"), "5", "9").status.success());
    fs::write(
        p("run.cfg"),
        format!("arch={TINY_ARCH}\nbatch_size=32\nmax_epochs=2\nn=2\nc_seen=3\n"),
    )
    .unwrap();
    let common = ["--config", &p("run.cfg"), "--checkpoint", &p("m.ckpt")];

    let o = siamzero(
        &[
            &["train", "--data", &p("d"), "--history", &p("h.csv")],
            &common[..],
        ]
        .concat(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let history = fs::read_to_string(p("h.csv")).unwrap();
    assert!(history.starts_with("epoch,lr,train_loss,monitor_acc\n"));
    let train_report = stdout(&o);

    let o = siamzero(&[&["eval", "--data", &p("d"), "--errors", "2"], &common[..]].concat());
    assert!(o.status.success(), "{}", stderr(&o));
    let eval_out = stdout(&o);
    assert!(eval_out.starts_with(train_report.trim_end()));
    assert!(eval_out.contains("rank\ttruth\tpredicted\tcount\texemplar"));

    let templates = p("d/templates.tsv");
    let o = siamzero(
        &[
            &[
                "export-features",
                "--templates",
                &templates,
                "--out",
                &p("t.szfm"),
            ],
            &common[..],
        ]
        .concat(),
    );
    assert!(o.status.success(), "{}", stderr(&o));

    let image = p("d/samples/c0002_0000.pgm");
    let via_matrix = siamzero(
        &[
            &["classify", "--templates", &p("t.szfm"), "--image", &image],
            &common[..],
        ]
        .concat(),
    );
    let via_manifest = siamzero(
        &[
            &["classify", "--templates", &templates, "--image", &image],
            &common[..],
        ]
        .concat(),
    );
    assert!(via_matrix.status.success(), "{}", stderr(&via_matrix));
    assert_eq!(stdout(&via_matrix), stdout(&via_manifest));
    let line = stdout(&via_matrix);
    let (class, prob) = line.trim_end().split_once('\t').unwrap();
    assert!(class.parse::<u32>().unwrap() < 5);
    let prob: f32 = prob.parse().unwrap();
    assert!(prob > 0.0 && prob < 1.0);

    let only = siamzero(
        &[
            &[
                "classify",
                "--templates",
                &p("t.szfm"),
                "--image",
                &image,
                "--restrict",
                "4",
            ],
            &common[..],
        ]
        .concat(),
    );
    assert!(stdout(&only).starts_with("4\t"));

    let o = siamzero(
        &[
            &[
                "classify",
                "--templates",
                &p("t.szfm"),
                "--image",
                &image,
                "--restrict",
                "99",
            ],
            &common[..],
        ]
        .concat(),
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(last_error_line(&o).starts_with("error: kind=unknown_class"));
}

#[test]
fn prep_writes_normalized_images_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("d");
    assert!(gen_toy(&d, "2", "4").status.success());
    let out = dir.path().join("p");
    let o = siamzero(&[
        "prep",
        "--in",
        d.to_str().unwrap(),
        "--manifest",
        d.join("manifest.tsv").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest = fs::read_to_string(out.join("manifest.tsv")).unwrap();
    let rows: Vec<&str> = manifest.lines().filter(|l| l.contains(".szim")).collect();
    assert_eq!(rows.len(), 2 * 12);
    let first = rows[0].split('\t').next().unwrap();
    assert!(fs::read(out.join(first)).unwrap().len() > 64 * 64 * 4);
}

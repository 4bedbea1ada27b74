mod common;

use std::path::Path;
use std::process::Command;

fn marketstance(args: &[&str]) -> i32 {
    let output = Command::new(env!("CARGO_BIN_EXE_marketstance"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    output.status.code().unwrap_or(-1)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn stage_commands_chain_and_exit_codes_follow_the_error_kind() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path();
    let toy = common::toy_dir();
    let config = toy.join("config.toml");
    let cfg = s(&config);

    let ingest = t.join("ingest");
    let code = marketstance(&[
        "ingest",
        "--markets",
        s(&toy.join("markets.csv")),
        "--labels",
        s(&toy.join("labels.csv")),
        "--fixtures",
        s(&toy.join("api")),
        "--out",
        s(&ingest),
    ]);
    assert_eq!(code, 0);

    let prep = t.join("prep");
    let ingested = ingest.join("dataset.jsonl");
    assert_eq!(
        marketstance(&["preprocess", "--in", s(&ingested), "--out", s(&prep), "--config", cfg]),
        0
    );
    assert!(prep.join("model_inputs.jsonl").is_file());
    assert_eq!(
        marketstance(&["preprocess", "--in", s(&ingested), "--out", s(&ingest)]),
        1
    );

    let dataset = prep.join("dataset.jsonl");
    let stub = toy.join("stub_replies.json");
    let bad = t.join("bad_dose");
    let code = marketstance(&[
        "augment",
        "--in",
        s(&dataset),
        "--out",
        s(&bad),
        "--dose",
        "1.5",
        "--stub",
        s(&stub),
    ]);
    assert_eq!(code, 1);
    assert!(!bad.exists());

    let aug = t.join("aug");
    let code = marketstance(&[
        "augment",
        "--in",
        s(&dataset),
        "--out",
        s(&aug),
        "--dose",
        "0.5",
        "--stub",
        s(&stub),
        "--config",
        cfg,
    ]);
    assert_eq!(code, 0);
    let mixed = aug.join("dataset.jsonl");
    let pool = aug.join("synthetic_pool.jsonl");

    let with_ctx = t.join("ckpt_ctx");
    let plain = t.join("ckpt_plain");
    assert_eq!(
        marketstance(&[
            "train",
            "--in",
            s(&mixed),
            "--out",
            s(&with_ctx),
            "--context",
            "--config",
            cfg
        ]),
        0
    );
    assert_eq!(
        marketstance(&[
            "train",
            "--in",
            s(&mixed),
            "--out",
            s(&plain),
            "--no-context",
            "--config",
            cfg
        ]),
        0
    );
    assert!(with_ctx.join("params.safetensors").is_file());

    let eval = t.join("eval");
    assert_eq!(
        marketstance(&[
            "evaluate",
            "--ckpt",
            s(&with_ctx),
            "--in",
            s(&dataset),
            "--out",
            s(&eval)
        ]),
        0
    );
    assert!(eval.join("metrics.csv").is_file());
    assert_eq!(
        marketstance(&[
            "evaluate",
            "--ckpt",
            s(&t.join("nope")),
            "--in",
            s(&dataset),
            "--out",
            s(&t.join("e2"))
        ]),
        2
    );

    let interp = t.join("interp");
    let code = marketstance(&[
        "interpret",
        "--ckpt-a",
        s(&plain),
        "--ckpt-b",
        s(&with_ctx),
        "--in",
        s(&dataset),
        "--out",
        s(&interp),
        "--max-cases",
        "2",
    ]);
    assert_eq!(code, 0);
    assert!(interp.join("interpret_summary.json").is_file());
    assert!(interp.join("context_contrast").is_dir());

    assert_eq!(
        marketstance(&["report", "--in", s(&t.join("missing")), "--out", s(&t.join("r"))]),
        2
    );

    let bogus = t.join("bogus");
    std::fs::create_dir_all(&bogus).unwrap();
    std::fs::write(bogus.join("config.json"), "{}").unwrap();
    let broken = t.join("broken.toml");
    std::fs::write(
        &broken,
        "[train.encoder]\nkind = \"pretrained\"\npath = \"bogus\"\n\n[ablation]\nschemes = [\"three_class\"]\ncontexts = [false]\ndoses = [0.0, 1.0]\n",
    )
    .unwrap();
    let grid_args = ["ablate", "--in", s(&dataset), "--synthetic", s(&pool), "--out"];
    let code = marketstance(&[&grid_args[..], &[s(&t.join("grid")), "--config", s(&broken)]].concat());
    assert_eq!(code, 3);
    assert!(t.join("grid/dose_response.csv").is_file());
    let code = marketstance(&[&grid_args[..], &[s(&t.join("g0")), "--config", cfg, "--seeds", "0"]].concat());
    assert_eq!(code, 1);
}

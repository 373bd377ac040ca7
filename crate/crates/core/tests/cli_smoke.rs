mod common;

use std::path::Path;
use std::process::{Command, Output};

fn run(db: &Path, cwd: &Path, args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_scirag"))
        .current_dir(cwd)
        .env_remove("SCIRAG_CONFIG")
        .env("RUST_LOG", "warn")
        .args(["--mock", "--db"])
        .arg(db)
        .args(args)
        .output()
        .unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn subcommands_run_against_one_database() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let db = d.join("c.db");
    let tei = common::fixture_dir();
    let out = run(&db, d, &["ingest", "--tei-dir", tei.to_str().unwrap(), "--chunk-size", "300", "--overlap", "60"]);
    assert_eq!(stdout(&out).lines().count(), 3);

    let out = run(&db, d, &["summarize", "--all"]);
    assert!(stdout(&out).contains("ratio"));

    let out = run(&db, d, &["search", "--text", "swimming strip", "-k", "4", "--measure", "dot"]);
    assert_eq!(stdout(&out).lines().count(), 4);

    let out = run(&db, d, &["ask", "--query", "What limits the graph model?", "--json"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(!v["provenance"].as_array().unwrap().is_empty());

    run(&db, d, &["embed-cache", "--kind", "both", "--out", "cache"]);
    assert!(d.join("cache/mock-1536-raw.vecs").exists());
    assert!(d.join("cache/mock-1536-summary.bin").exists());

    run(&db, d, &["eval", "rank", "--pairs", "3", "--seed", "5", "--out-dir", "ev"]);
    let ranking = std::fs::read_to_string(d.join("ev/ranking.csv")).unwrap();
    assert_eq!(ranking.lines().count(), 4);
    assert!(d.join("ev/rank_report.json").exists());

    std::fs::write(d.join("cats.txt"), "# categories\nSelf-assembly\nMaterials\nOther\n").unwrap();
    std::fs::write(d.join("truth.csv"), "doc_id,category\n").unwrap();
    run(&db, d, &["eval", "classify", "--categories", "cats.txt", "--truth", "truth.csv", "--out-dir", "ev"]);
    let metrics = std::fs::read_to_string(d.join("ev/metrics.csv")).unwrap();
    assert!(metrics.starts_with("category,tp,fp,fn,tn"));

    run(&db, d, &["project", "--kind", "both", "--perplexity", "3", "--iters", "200", "--out", "s.svg", "--csv", "s.csv"]);
    assert!(std::fs::read_to_string(d.join("s.svg")).unwrap().starts_with("<svg"));
    assert!(std::fs::read_to_string(d.join("s.csv")).unwrap().starts_with("row_id,label,x,y"));
    run(&db, d, &["project", "--displacement", "raw-vs-augmented", "--perplexity", "3", "--iters", "200", "--out", "d.svg"]);
    assert!(std::fs::read_to_string(d.join("d.svg")).unwrap().contains("<line"));
}

#[test]
fn image_manifest_ingest_and_search() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::create_dir_all(d.join("beam1")).unwrap();
    for (i, shade) in [10u8, 30, 240].iter().enumerate() {
        let img = image::RgbImage::from_pixel(12, 12, image::Rgb([*shade, 100, 50]));
        img.save(d.join(format!("beam1/i{i}.png"))).unwrap();
    }
    std::fs::write(
        d.join("manifest.csv"),
        "path,kind,doc_id,figure_label,group_key,caption\nbeam1/i0.png,raw,,,,\nbeam1/i1.png,raw,,,,\nbeam1/i2.png,raw,,,b2,\n",
    )
    .unwrap();
    let db = d.join("i.db");
    let out = run(&db, d, &["images", "ingest", "--manifest", "manifest.csv"]);
    assert!(stdout(&out).starts_with("3 stored, 0 failed"));
    let out = run(&db, d, &["images", "search", "--query", "beam1/i0.png", "--measure", "dot", "-k", "5", "--exclude-same-group"]);
    let lines: Vec<_> = stdout(&out).lines().map(String::from).collect();
    assert_eq!(lines.len(), 1);
    assert!(lines[0].contains("i2.png"));
    let out = run(&db, d, &["search", "--image", "beam1/i0.png", "-k", "2"]);
    assert_eq!(stdout(&out).lines().count(), 2);
}

#[test]
fn missing_source_is_a_usage_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_scirag")).args(["ingest"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--tei-dir"));
}

//! Drives the full command-line pipeline in-process, end to end.
//!
//! Every subcommand the `geomcarve` binary exposes is a thin wrapper around
//! `cli::run_command`, so the whole disk workflow — generate sequences,
//! evaluate predictions against ground truth, score losses, predict cost,
//! rank methods — can be scripted and tested without spawning processes.
//! Run with `cargo run --example cli_pipeline`.

use geomcarve::cli::run_command;

fn run(args: &[&str]) -> String {
    let argv: Vec<String> = std::iter::once("geomcarve".to_string())
        .chain(args.iter().map(|s| s.to_string()))
        .collect();
    let (code, out) = run_command(&argv);
    assert_eq!(code, 0, "command {args:?} failed");
    out
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let root = dir.path();
    let gt = root.join("gt");
    let pred = root.join("pred");

    // Two sequences of the same scene from different seeds stand in for a
    // prediction/ground-truth pair with genuine disagreement.
    println!("$ geomcarve synth --preset box-room --frames 4 --seed 60 --out {}", gt.display());
    run(&["synth", "--preset", "box-room", "--frames", "4", "--seed", "60", "--out", gt.to_str().unwrap()]);
    println!("$ geomcarve synth --preset box-room --frames 4 --seed 61 --out {}", pred.display());
    print!("{}", run(&["synth", "--preset", "box-room", "--frames", "4", "--seed", "61", "--out", pred.to_str().unwrap()]));

    let p = pred.to_str().unwrap();
    let g = gt.to_str().unwrap();

    println!("\n$ geomcarve eval points --pred PRED --gt GT");
    print!("{}", run(&["eval", "points", "--pred", p, "--gt", g]));

    println!("\n$ geomcarve eval depth --pred PRED --gt GT --mode video");
    print!("{}", run(&["eval", "depth", "--pred", p, "--gt", g, "--mode", "video"]));

    // Both seeds orbit the same circle, differing only in starting phase, so
    // after trajectory alignment the pose error is at machine precision.
    println!("\n$ geomcarve eval pose --pred PRED --gt GT");
    print!("{}", run(&["eval", "pose", "--pred", p, "--gt", g]));

    println!("\n$ geomcarve eval fov --pred PRED --gt GT");
    print!("{}", run(&["eval", "fov", "--pred", p, "--gt", g]));

    println!("\n$ geomcarve loss --pred PRED --gt GT --recipe ours --seed 1");
    print!("{}", run(&["loss", "--pred", p, "--gt", g, "--recipe", "ours", "--seed", "1"]));

    println!("\n$ geomcarve cost --arch carve1036 --frames 16");
    print!("{}", run(&["cost", "--arch", "carve1036", "--frames", "16"]));

    // Ranking: lower is better for errors, higher for F-score.
    let table = root.join("table.json");
    std::fs::write(
        &table,
        r#"{
            "columns": [
                {"name": "chamfer", "higher_better": false,
                 "values": {"baseline": 0.31, "ours": 0.22, "rival": 0.25}},
                {"name": "f@0.05", "higher_better": true,
                 "values": {"baseline": 0.55, "ours": 0.71, "rival": 0.69}},
                {"name": "ate", "higher_better": false,
                 "values": {"baseline": 0.012, "ours": 0.009, "rival": 0.011}}
            ]
        }"#,
    )?;
    println!("\n$ geomcarve rank --table table.json");
    print!("{}", run(&["rank", "--table", table.to_str().unwrap()]));

    println!("\n$ geomcarve gradcheck --losses reg,consistency --seeds 3 --seed 2");
    print!("{}", run(&["gradcheck", "--losses", "reg,consistency", "--seeds", "3", "--seed", "2"]));

    println!("\n$ geomcarve fusion-check --instances 5 --seed 3");
    print!("{}", run(&["fusion-check", "--instances", "5", "--seed", "3"]));
    Ok(())
}

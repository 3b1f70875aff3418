//! Command-line surface tying scenes, losses, metrics, and the cost model
//! into one binary.
//!
//! Every subcommand prints a single deterministic JSON object on stdout (see
//! [`crate::json`]) and exits 0 on success, 1 on runtime errors (message on
//! stderr), and 2 on usage errors (clap's usage text on stderr). Check-style
//! subcommands (`gradcheck`, `fusion-check`) print their JSON report and exit
//! 1 when the check fails.
//!
//! Subcommands that take a seed read the `GEOMCARVE_SEED` environment
//! variable when the flag is absent and fall back to [`crate::DEFAULT_SEED`].

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::fs;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::fusion::{
    builtin_cost_profile, cross_attend_fuse, gate_sensitivity, predict_tflops, probe_mean_square,
    FusionBlock, TokenGrid,
};
use crate::io::{read_sequence, write_sequence};
use crate::json::JsonValue;
use crate::loss::{
    builtin_recipe, gradcheck, loss_composite, recipe_from_json, GradCheckConfig, GradLoss,
    LossRecipe,
};
use crate::metrics::{
    depth_metrics, evaluate_point_clouds, fov_rel, pose_metrics, rank_aggregate, DepthAlignment,
    MetricTable,
};
use crate::sample::SequenceSample;
use crate::synth::{generate_scene, ScenePreset};
use crate::DEFAULT_SEED;

/// Parses `args` (including the program name) and runs the selected
/// subcommand. Returns the process exit code and the stdout payload; errors
/// and usage text go directly to stderr.
pub fn run_command(args: &[String]) -> (i32, String) {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return (e.exit_code(), String::new());
        }
    };
    match dispatch(cli.command) {
        Ok((json, code)) => (code, json.to_pretty() + "\n"),
        Err(e) => {
            eprintln!("error: {e}");
            (1, String::new())
        }
    }
}

#[derive(Parser)]
#[command(
    name = "geomcarve",
    version,
    about = "Visual-geometry toolkit: synthetic scenes, training losses, \
             alignment, evaluation metrics, and an inference cost model."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic oracle sequence into a directory.
    Synth(SynthArgs),
    /// Evaluate a prediction sequence against a ground-truth sequence.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Itemize a composite training loss between two sequences.
    Loss(LossArgs),
    /// Check analytic loss gradients against central finite differences.
    Gradcheck(GradcheckArgs),
    /// Check the fused-attention gate identities on random token grids.
    FusionCheck(FusionCheckArgs),
    /// Predict inference cost from a built-in per-frame TFLOPs profile.
    Cost(CostArgs),
    /// Aggregate a metric table into a mean rank per method.
    Rank(RankArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Scene preset: plane, box-room, or sphere-field.
    #[arg(long, default_value = "plane")]
    preset: ScenePreset,
    /// Number of frames along the camera orbit.
    #[arg(long, default_value_t = 4)]
    frames: usize,
    /// Image width in pixels (at least 8).
    #[arg(long, default_value_t = 32)]
    width: usize,
    /// Image height in pixels (at least 8).
    #[arg(long, default_value_t = 24)]
    height: usize,
    /// Generation seed.
    #[arg(long, env = "GEOMCARVE_SEED", default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Directory the sequence is written into.
    #[arg(long)]
    out: PathBuf,
    /// Overwrite an existing sequence directory.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Point-map accuracy: chamfer distance and F-scores after
    /// similarity alignment and voxel downsampling.
    Points(EvalPointsArgs),
    /// Depth accuracy: absolute relative error and inlier ratio.
    Depth(EvalDepthArgs),
    /// Camera pose accuracy: trajectory error and relative pose errors.
    Pose(PairArgs),
    /// Field-of-view relative error.
    Fov(PairArgs),
}

#[derive(Args)]
struct PairArgs {
    /// Prediction sequence directory (repeat to evaluate several pairs).
    #[arg(long, required = true)]
    pred: Vec<PathBuf>,
    /// Ground-truth sequence directory, one per --pred, in order.
    #[arg(long, required = true)]
    gt: Vec<PathBuf>,
}

#[derive(Args)]
struct EvalPointsArgs {
    #[command(flatten)]
    pair: PairArgs,
    /// Voxel edge length for downsampling, in scene units.
    #[arg(long, default_value_t = 0.02)]
    voxel: f64,
    /// Comma-separated distance thresholds for F-scores.
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.25,0.50")]
    thresholds: Vec<f64>,
}

#[derive(Args)]
struct EvalDepthArgs {
    #[command(flatten)]
    pair: PairArgs,
    /// Depth alignment before scoring.
    #[arg(long, value_enum, default_value_t = DepthMode::Video)]
    mode: DepthMode,
}

/// CLI spelling of the depth alignment modes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum DepthMode {
    /// One global scale shared by the whole sequence.
    Video,
    /// An independent scale per frame.
    Mono,
    /// Compare raw values without alignment.
    None,
}

impl From<DepthMode> for DepthAlignment {
    fn from(mode: DepthMode) -> Self {
        match mode {
            DepthMode::Video => DepthAlignment::GlobalScale,
            DepthMode::Mono => DepthAlignment::PerFrame,
            DepthMode::None => DepthAlignment::None,
        }
    }
}

#[derive(Args)]
struct LossArgs {
    /// Prediction sequence directory.
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth sequence directory.
    #[arg(long)]
    gt: PathBuf,
    /// Built-in recipe name (vggt, ours) or path to a recipe JSON file.
    #[arg(long, default_value = "vggt")]
    recipe: String,
    /// Seed for stochastic components (sphere-region sampling).
    #[arg(long, env = "GEOMCARVE_SEED", default_value_t = DEFAULT_SEED)]
    seed: u64,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Comma-separated losses to check: reg, sg, tg, conf, consistency.
    /// Defaults to all of them.
    #[arg(long, value_delimiter = ',')]
    losses: Vec<GradLoss>,
    /// Random instances per loss.
    #[arg(long, default_value_t = 10)]
    seeds: usize,
    /// Base seed; instance i uses seed + i.
    #[arg(long, env = "GEOMCARVE_SEED", default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Maximum acceptable relative error between analytic and numeric.
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

#[derive(Args)]
struct FusionCheckArgs {
    /// Number of random instances.
    #[arg(long, default_value_t = 20)]
    instances: usize,
    /// Frames per token grid.
    #[arg(long, default_value_t = 4)]
    frames: usize,
    /// Tokens per frame.
    #[arg(long, default_value_t = 6)]
    tokens: usize,
    /// Channel width (must be divisible by --heads).
    #[arg(long, default_value_t = 8)]
    channels: usize,
    /// Attention heads.
    #[arg(long, default_value_t = 2)]
    heads: usize,
    /// Base seed for token and weight draws.
    #[arg(long, env = "GEOMCARVE_SEED", default_value_t = DEFAULT_SEED)]
    seed: u64,
}

#[derive(Args)]
struct CostArgs {
    /// Architecture profile: vggt518, vggt1036, or carve1036.
    #[arg(long)]
    arch: String,
    /// Frame count to predict the cost for.
    #[arg(long)]
    frames: usize,
}

#[derive(Args)]
struct RankArgs {
    /// Metric table JSON file: {"columns": [{"name": ..., "higher_better":
    /// ..., "values": {"method": value, ...}}, ...]}.
    #[arg(long)]
    table: PathBuf,
}

fn dispatch(command: Command) -> Result<(JsonValue, i32)> {
    match command {
        Command::Synth(args) => cmd_synth(args),
        Command::Eval(EvalCommand::Points(args)) => cmd_eval_points(args),
        Command::Eval(EvalCommand::Depth(args)) => cmd_eval_depth(args),
        Command::Eval(EvalCommand::Pose(args)) => cmd_eval_pose(args),
        Command::Eval(EvalCommand::Fov(args)) => cmd_eval_fov(args),
        Command::Loss(args) => cmd_loss(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
        Command::FusionCheck(args) => cmd_fusion_check(args),
        Command::Cost(args) => cmd_cost(args),
        Command::Rank(args) => cmd_rank(args),
    }
}

fn cmd_synth(args: SynthArgs) -> Result<(JsonValue, i32)> {
    let sample = generate_scene(args.preset, args.frames, args.width, args.height, args.seed)?;
    write_sequence(&sample, &args.out, args.force)?;
    let valid: usize = sample.frames().iter().map(|f| f.mask.count_valid()).sum();
    Ok((
        JsonValue::object([
            ("preset", JsonValue::from(args.preset.name())),
            ("frames", JsonValue::from(args.frames)),
            ("width", JsonValue::from(args.width)),
            ("height", JsonValue::from(args.height)),
            ("seed", JsonValue::Int(args.seed as i64)),
            ("valid_pixels", JsonValue::from(valid)),
            ("out", JsonValue::from(args.out.display().to_string())),
        ]),
        0,
    ))
}

/// Runs `score` on every (--pred, --gt) pair. One pair prints its object
/// directly; several pairs print per-sequence objects plus a key-wise mean.
fn eval_pairs(
    pair: &PairArgs,
    score: impl Fn(&SequenceSample, &SequenceSample) -> Result<JsonValue>,
) -> Result<(JsonValue, i32)> {
    if pair.pred.len() != pair.gt.len() {
        return Err(Error::InvalidInput(format!(
            "{} --pred directories but {} --gt directories",
            pair.pred.len(),
            pair.gt.len()
        )));
    }
    let mut per = Vec::new();
    for (p, g) in pair.pred.iter().zip(&pair.gt) {
        let pred = read_sequence(p)?;
        let gt = read_sequence(g)?;
        per.push(score(&pred, &gt)?);
    }
    if per.len() == 1 {
        return Ok((per.pop().expect("one element"), 0));
    }
    let aggregate = mean_object(&per)?;
    Ok((
        JsonValue::object([
            ("sequences", JsonValue::Array(per)),
            ("aggregate", aggregate),
        ]),
        0,
    ))
}

/// Key-wise arithmetic mean over objects sharing one numeric layout.
fn mean_object(objects: &[JsonValue]) -> Result<JsonValue> {
    let JsonValue::Object(first) = &objects[0] else {
        return Err(Error::InvalidInput("aggregate expects JSON objects".into()));
    };
    let mut out = Vec::with_capacity(first.len());
    for (key, _) in first {
        let mut sum = 0.0;
        for obj in objects {
            let JsonValue::Object(pairs) = obj else {
                return Err(Error::InvalidInput("aggregate expects JSON objects".into()));
            };
            let value = pairs.iter().find(|(k, _)| k == key).map(|(_, v)| v);
            match value {
                Some(JsonValue::Float(f)) => sum += f,
                Some(JsonValue::Int(i)) => sum += *i as f64,
                _ => {
                    return Err(Error::InvalidInput(format!(
                        "aggregate key '{key}' is not numeric in every sequence"
                    )))
                }
            }
        }
        out.push((key.clone(), JsonValue::Float(sum / objects.len() as f64)));
    }
    Ok(JsonValue::Object(out))
}

fn cmd_eval_points(args: EvalPointsArgs) -> Result<(JsonValue, i32)> {
    eval_pairs(&args.pair, |pred, gt| {
        let report = evaluate_point_clouds(pred, gt, args.voxel, &args.thresholds)?;
        let mut pairs = vec![("c_l1".to_string(), JsonValue::Float(report.chamfer))];
        for (tau, score) in &report.fscores {
            pairs.push((format!("f@{tau}"), JsonValue::Float(*score)));
        }
        Ok(JsonValue::Object(pairs))
    })
}

fn cmd_eval_depth(args: EvalDepthArgs) -> Result<(JsonValue, i32)> {
    eval_pairs(&args.pair, |pred, gt| {
        let report = depth_metrics(pred, gt, args.mode.into())?;
        Ok(JsonValue::object([
            ("rel", JsonValue::Float(report.rel)),
            ("delta", JsonValue::Float(report.delta)),
        ]))
    })
}

fn cmd_eval_pose(args: PairArgs) -> Result<(JsonValue, i32)> {
    eval_pairs(&args, |pred, gt| {
        let report = pose_metrics(&pred.cameras(), &gt.cameras())?;
        Ok(JsonValue::object([
            ("ate", JsonValue::Float(report.ate)),
            ("rpe_r", JsonValue::Float(report.rpe_rot_deg)),
            ("rpe_t", JsonValue::Float(report.rpe_trans)),
        ]))
    })
}

fn cmd_eval_fov(args: PairArgs) -> Result<(JsonValue, i32)> {
    eval_pairs(&args, |pred, gt| {
        let err = fov_rel(&pred.cameras(), &gt.cameras())?;
        Ok(JsonValue::object([("fov_rel", JsonValue::Float(err))]))
    })
}

fn resolve_recipe(selector: &str) -> Result<LossRecipe> {
    match selector {
        "vggt" | "ours" => builtin_recipe(selector),
        path => {
            let text = fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.to_string(),
                source: e,
            })?;
            recipe_from_json(&text)
        }
    }
}

fn cmd_loss(args: LossArgs) -> Result<(JsonValue, i32)> {
    let recipe = resolve_recipe(&args.recipe)?;
    let pred = read_sequence(&args.pred)?;
    let gt = read_sequence(&args.gt)?;
    let report = loss_composite(&pred, &gt, &recipe, args.seed)?;
    let components: Vec<JsonValue> = report
        .components
        .iter()
        .map(|c| {
            JsonValue::object([
                ("name", JsonValue::from(c.name.as_str())),
                ("weight", JsonValue::Float(c.weight)),
                ("value", JsonValue::Float(c.value)),
                ("weighted", JsonValue::Float(c.weighted)),
            ])
        })
        .collect();
    Ok((
        JsonValue::object([
            ("recipe", JsonValue::from(report.recipe.as_str())),
            ("pre_scale", JsonValue::Float(report.pre_scale)),
            ("components", JsonValue::Array(components)),
            ("total", JsonValue::Float(report.total)),
        ]),
        0,
    ))
}

fn cmd_gradcheck(args: GradcheckArgs) -> Result<(JsonValue, i32)> {
    let losses: Vec<GradLoss> =
        if args.losses.is_empty() { GradLoss::ALL.to_vec() } else { args.losses.clone() };
    if args.seeds == 0 {
        return Err(Error::InvalidInput("gradcheck needs at least one seed".into()));
    }
    let cfg = GradCheckConfig::default();
    let mut per_loss = Vec::new();
    let mut overall: f64 = 0.0;
    for loss in &losses {
        let mut worst: f64 = 0.0;
        for i in 0..args.seeds {
            let err = gradcheck(*loss, args.seed.wrapping_add(i as u64), &cfg)?;
            worst = worst.max(err);
        }
        overall = overall.max(worst);
        per_loss.push((loss.name().to_string(), JsonValue::Float(worst)));
    }
    let passed = overall <= args.tolerance;
    let json = JsonValue::object([
        ("seeds", JsonValue::from(args.seeds)),
        ("tolerance", JsonValue::Float(args.tolerance)),
        ("max_rel_err", JsonValue::Float(overall)),
        ("losses", JsonValue::Object(per_loss)),
        ("passed", JsonValue::Bool(passed)),
    ]);
    Ok((json, if passed { 0 } else { 1 }))
}

fn cmd_fusion_check(args: FusionCheckArgs) -> Result<(JsonValue, i32)> {
    if args.instances == 0 {
        return Err(Error::InvalidInput("fusion check needs at least one instance".into()));
    }
    let mut max_deviation: f64 = 0.0;
    let mut min_sensitivity = f64::INFINITY;
    for i in 0..args.instances {
        let base = args.seed.wrapping_add(3 * i as u64);
        let low = TokenGrid::random(args.frames, args.tokens, args.channels, base);
        let high =
            TokenGrid::random(args.frames, args.tokens, args.channels, base.wrapping_add(1));
        let block = FusionBlock::new(args.channels, args.heads, base.wrapping_add(2))?;
        let fused = cross_attend_fuse(&low, &high, &block)?.fused;
        for (a, b) in fused.values.iter().zip(&low.values) {
            max_deviation = max_deviation.max((a - b).abs());
        }
        let g = gate_sensitivity(&low, &high, &block, probe_mean_square)?;
        min_sensitivity = min_sensitivity.min(g.abs());
    }
    let passed = max_deviation == 0.0 && min_sensitivity > 0.0;
    let json = JsonValue::object([
        ("instances", JsonValue::from(args.instances)),
        ("max_identity_deviation", JsonValue::Float(max_deviation)),
        ("min_abs_gate_sensitivity", JsonValue::Float(min_sensitivity)),
        ("passed", JsonValue::Bool(passed)),
    ]);
    Ok((json, if passed { 0 } else { 1 }))
}

fn cmd_cost(args: CostArgs) -> Result<(JsonValue, i32)> {
    let profile = builtin_cost_profile(&args.arch)?;
    let tflops = predict_tflops(&profile, args.frames)?;
    Ok((
        JsonValue::object([
            ("arch", JsonValue::from(args.arch.as_str())),
            ("frames", JsonValue::from(args.frames)),
            ("per_frame_tflops", JsonValue::Float(profile.per_frame_tflops)),
            ("tflops", JsonValue::Float(tflops)),
        ]),
        0,
    ))
}

fn cmd_rank(args: RankArgs) -> Result<(JsonValue, i32)> {
    let text = fs::read_to_string(&args.table)
        .map_err(|e| Error::Io { path: args.table.display().to_string(), source: e })?;
    let table: MetricTable = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidInput(format!("metric table JSON: {e}")))?;
    let ranking = rank_aggregate(&table)?;
    let rows: Vec<JsonValue> = ranking
        .into_iter()
        .map(|(method, rank)| {
            JsonValue::object([
                ("method", JsonValue::Str(method)),
                ("mean_rank", JsonValue::Float(rank)),
            ])
        })
        .collect();
    Ok((JsonValue::object([("ranking", JsonValue::Array(rows))]), 0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> (i32, String) {
        let owned: Vec<String> = args.iter().map(|s| s.to_string()).collect();
        run_command(&owned)
    }

    fn run_json(args: &[&str]) -> serde_json::Value {
        let (code, out) = run(args);
        assert_eq!(code, 0, "expected success for {args:?}");
        serde_json::from_str(&out).expect("stdout must be one JSON object")
    }

    fn synth_dir(dir: &std::path::Path, preset: &str, seed: &str) {
        let (code, _) = run(&[
            "geomcarve",
            "synth",
            "--preset",
            preset,
            "--frames",
            "3",
            "--width",
            "16",
            "--height",
            "12",
            "--seed",
            seed,
            "--out",
            dir.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
    }

    #[test]
    fn cost_reproduces_the_largest_profile_cell() {
        let json = run_json(&["geomcarve", "cost", "--arch", "vggt518", "--frames", "256"]);
        let tflops = json["tflops"].as_f64().unwrap();
        assert!((tflops - 818.24).abs() < 1e-9, "got {tflops}");
        assert!((tflops - 818.25).abs() / 818.25 < 0.005, "within half a percent of 818.25");
        assert_eq!(json["arch"].as_str().unwrap(), "vggt518");
        assert_eq!(json["frames"].as_u64().unwrap(), 256);
    }

    #[test]
    fn unknown_architecture_exits_one() {
        let (code, out) = run(&["geomcarve", "cost", "--arch", "pointnet", "--frames", "8"]);
        assert_eq!(code, 1);
        assert!(out.is_empty());
    }

    #[test]
    fn unknown_flags_exit_two_with_no_stdout() {
        let (code, out) =
            run(&["geomcarve", "cost", "--arch", "vggt518", "--frames", "8", "--bogus"]);
        assert_eq!(code, 2);
        assert!(out.is_empty());
    }

    #[test]
    fn eval_points_on_identical_sequences_is_perfect() {
        let dir = tempfile::tempdir().unwrap();
        let seq = dir.path().join("scene");
        synth_dir(&seq, "box-room", "7");
        let path = seq.to_str().unwrap();
        let json =
            run_json(&["geomcarve", "eval", "points", "--pred", path, "--gt", path]);
        // The protocol always solves a similarity before scoring; on
        // identical inputs that solve is identity only up to SVD rounding,
        // which leaves a few-ULP chamfer.
        assert!(json["c_l1"].as_f64().unwrap() < 1e-12);
        assert_eq!(json["f@0.05"].as_f64().unwrap(), 1.0);
        assert_eq!(json["f@0.25"].as_f64().unwrap(), 1.0);
        assert_eq!(json["f@0.5"].as_f64().unwrap(), 1.0);
    }

    #[test]
    fn eval_depth_pose_and_fov_are_zero_on_identical_sequences() {
        let dir = tempfile::tempdir().unwrap();
        let seq = dir.path().join("scene");
        synth_dir(&seq, "sphere-field", "3");
        let path = seq.to_str().unwrap();

        let depth = run_json(&["geomcarve", "eval", "depth", "--pred", path, "--gt", path]);
        assert_eq!(depth["rel"].as_f64().unwrap(), 0.0);
        assert_eq!(depth["delta"].as_f64().unwrap(), 1.0);

        let mono = run_json(&[
            "geomcarve", "eval", "depth", "--pred", path, "--gt", path, "--mode", "mono",
        ]);
        assert_eq!(mono["rel"].as_f64().unwrap(), 0.0);

        let pose = run_json(&["geomcarve", "eval", "pose", "--pred", path, "--gt", path]);
        assert!(pose["ate"].as_f64().unwrap() < 1e-9);
        assert!(pose["rpe_r"].as_f64().unwrap() < 1e-9);
        assert!(pose["rpe_t"].as_f64().unwrap() < 1e-9);

        let fov = run_json(&["geomcarve", "eval", "fov", "--pred", path, "--gt", path]);
        assert_eq!(fov["fov_rel"].as_f64().unwrap(), 0.0);
    }

    #[test]
    fn multiple_pairs_report_sequences_and_their_mean() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a");
        let b = dir.path().join("b");
        synth_dir(&a, "box-room", "1");
        synth_dir(&b, "plane", "2");
        let json = run_json(&[
            "geomcarve",
            "eval",
            "depth",
            "--pred",
            a.to_str().unwrap(),
            "--gt",
            a.to_str().unwrap(),
            "--pred",
            b.to_str().unwrap(),
            "--gt",
            b.to_str().unwrap(),
        ]);
        assert_eq!(json["sequences"].as_array().unwrap().len(), 2);
        assert_eq!(json["aggregate"]["rel"].as_f64().unwrap(), 0.0);
        assert_eq!(json["aggregate"]["delta"].as_f64().unwrap(), 1.0);
    }

    #[test]
    fn mismatched_pair_counts_exit_one() {
        let dir = tempfile::tempdir().unwrap();
        let seq = dir.path().join("scene");
        synth_dir(&seq, "box-room", "1");
        let path = seq.to_str().unwrap();
        let (code, out) = run(&[
            "geomcarve", "eval", "depth", "--pred", path, "--pred", path, "--gt", path,
        ]);
        assert_eq!(code, 1);
        assert!(out.is_empty());
    }

    #[test]
    fn loss_with_each_builtin_recipe_is_zero_on_a_perfect_scene() {
        let dir = tempfile::tempdir().unwrap();
        let seq = dir.path().join("scene");
        synth_dir(&seq, "box-room", "9");
        let path = seq.to_str().unwrap();
        for recipe in ["vggt", "ours"] {
            let json = run_json(&[
                "geomcarve", "loss", "--pred", path, "--gt", path, "--recipe", recipe,
            ]);
            assert_eq!(json["recipe"].as_str().unwrap(), recipe);
            // Sequences round-trip through binary32 storage; the consistency
            // term re-unprojects stored depth in f64, so it vanishes only to
            // f32 precision. Every other component compares identical files
            // and is exactly zero.
            assert!(json["total"].as_f64().unwrap() < 1e-5, "{recipe}");
            for c in json["components"].as_array().unwrap() {
                let value = c["value"].as_f64().unwrap();
                if c["name"].as_str().unwrap().contains("consistency") {
                    assert!(value < 1e-5, "{recipe}/{}: {value}", c["name"]);
                } else {
                    assert_eq!(value, 0.0, "{recipe}/{}", c["name"]);
                }
            }
        }
    }

    #[test]
    fn custom_recipe_files_are_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let seq = dir.path().join("scene");
        synth_dir(&seq, "box-room", "9");
        let recipe_path = dir.path().join("only_reg.json");
        std::fs::write(
            &recipe_path,
            r#"{
                "name": "only-reg",
                "components": [
                    {"kind": {"reg": {"target": "depth", "weights": "unit"}}, "weight": 1.0}
                ]
            }"#,
        )
        .unwrap();
        let path = seq.to_str().unwrap();
        let json = run_json(&[
            "geomcarve",
            "loss",
            "--pred",
            path,
            "--gt",
            path,
            "--recipe",
            recipe_path.to_str().unwrap(),
        ]);
        assert_eq!(json["recipe"].as_str().unwrap(), "only-reg");
        assert_eq!(json["total"].as_f64().unwrap(), 0.0);
    }

    #[test]
    fn gradcheck_passes_for_a_quick_slice() {
        let json = run_json(&[
            "geomcarve",
            "gradcheck",
            "--losses",
            "reg,consistency",
            "--seeds",
            "2",
            "--seed",
            "11",
        ]);
        assert!(json["passed"].as_bool().unwrap());
        assert!(json["max_rel_err"].as_f64().unwrap() < 1e-4);
        assert!(json["losses"]["reg"].as_f64().is_some());
        assert!(json["losses"]["consistency"].as_f64().is_some());
    }

    #[test]
    fn fusion_check_reports_exact_identity_and_live_gate() {
        let json = run_json(&[
            "geomcarve",
            "fusion-check",
            "--instances",
            "5",
            "--seed",
            "13",
        ]);
        assert!(json["passed"].as_bool().unwrap());
        assert_eq!(json["max_identity_deviation"].as_f64().unwrap(), 0.0);
        assert!(json["min_abs_gate_sensitivity"].as_f64().unwrap() > 0.0);
    }

    #[test]
    fn rank_orders_methods_by_mean_rank() {
        let dir = tempfile::tempdir().unwrap();
        let table_path = dir.path().join("table.json");
        std::fs::write(
            &table_path,
            r#"{
                "columns": [
                    {"name": "rel", "higher_better": false,
                     "values": {"ours": 0.1, "baseline": 0.3, "oracle": 0.1}},
                    {"name": "f@0.05", "higher_better": true,
                     "values": {"ours": 0.9, "baseline": 0.5, "oracle": 0.95}}
                ]
            }"#,
        )
        .unwrap();
        let json = run_json(&["geomcarve", "rank", "--table", table_path.to_str().unwrap()]);
        let rows = json["ranking"].as_array().unwrap();
        assert_eq!(rows[0]["method"].as_str().unwrap(), "oracle");
        assert_eq!(rows[0]["mean_rank"].as_f64().unwrap(), 1.0);
        assert_eq!(rows[1]["method"].as_str().unwrap(), "ours");
        assert_eq!(rows[2]["method"].as_str().unwrap(), "baseline");
    }

    #[test]
    fn synth_refuses_overwrite_without_force_and_allows_it_with() {
        let dir = tempfile::tempdir().unwrap();
        let seq = dir.path().join("scene");
        synth_dir(&seq, "plane", "4");
        let args = [
            "geomcarve",
            "synth",
            "--preset",
            "plane",
            "--seed",
            "4",
            "--out",
            seq.to_str().unwrap(),
        ];
        let (code, _) = run(&args);
        assert_eq!(code, 1, "second write without --force must fail");
        let mut forced: Vec<&str> = args.to_vec();
        forced.push("--force");
        let (code, _) = run(&forced);
        assert_eq!(code, 0);
    }

    #[test]
    fn seed_env_variable_fills_in_when_the_flag_is_absent() {
        // Process-global state: this is the only test that manipulates the
        // variable, and every other invocation passes --seed explicitly.
        std::env::set_var("GEOMCARVE_SEED", "7");
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("scene");
        let json = run_json(&[
            "geomcarve",
            "synth",
            "--preset",
            "box-room",
            "--out",
            out.to_str().unwrap(),
        ]);
        std::env::remove_var("GEOMCARVE_SEED");
        assert_eq!(json["seed"].as_i64().unwrap(), 7);
    }

    #[test]
    fn numeric_output_uses_scientific_notation_everywhere() {
        let (code, out) = run(&["geomcarve", "cost", "--arch", "carve1036", "--frames", "16"]);
        assert_eq!(code, 0);
        assert!(out.contains("\"tflops\": 1.0594"), "17-significant-digit output: {out}");
    }
}

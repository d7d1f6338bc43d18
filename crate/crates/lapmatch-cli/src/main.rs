//! `lapmatch` command line: synthetic shape generation, spectral
//! embedding, eigenfunction alignment, end-to-end matching, and
//! evaluation against ground truth.
//!
//! Exit codes: 0 success, 2 input or parse error, 3 numerical failure,
//! 4 no eigenfunction pairs retained.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lapmatch::align::align_eigenfunctions;
use lapmatch::em::EmConfig;
use lapmatch::embed::{embed_with, save_embedding, EmbedConfig};
use lapmatch::eval::{evaluate, load_truth, save_truth, GroundTruth};
use lapmatch::graph::{build_graph, Connectivity};
use lapmatch::pipeline::{
    load_records, run_match, run_report, save_ply, save_records, save_report, PipelineConfig,
};
use lapmatch::synth::{synthesize, ArticulatedModel, ModelKind};
use lapmatch::voxel::{load_voxels, save_voxels, VoxelFormat, VoxelSet};
use lapmatch::{Error, Result};

#[derive(Parser)]
#[command(name = "lapmatch", version, about = "Dense correspondence between articulated voxel shapes")]
struct Cli {
    /// Seed routed to every stage that consumes randomness.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Key=value file overriding stage parameters (one per line, # comments).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads; 0 keeps the library default (all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic articulated shape as a voxel file.
    Synth {
        /// Model: chain, chain-branch, mannequin-lite, or hand-lite.
        #[arg(long)]
        model: String,
        /// Named pose of the model, or comma-separated joint angles (radians).
        #[arg(long, default_value = "rest")]
        pose: String,
        /// Voxels per model unit.
        #[arg(long, default_value_t = 2.0)]
        sampling: f64,
        /// Output voxel file (.csv for CSV, anything else plain text).
        #[arg(long)]
        out: PathBuf,
        /// Optional ground-truth label file.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Embed one voxel file into R^K and write the coordinates.
    Embed {
        #[arg(long)]
        input: PathBuf,
        /// Number of nonzero Laplacian eigenpairs.
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Align the eigenfunctions of two shapes; prints the pair table.
    Align {
        #[arg(long)]
        input_x: PathBuf,
        #[arg(long)]
        input_y: PathBuf,
        /// Output file for the initial orthogonal transform R0.
        #[arg(long)]
        out: PathBuf,
    },
    /// Match two voxel files end to end and write the correspondence CSV.
    Match {
        #[arg(long)]
        input_x: PathBuf,
        #[arg(long)]
        input_y: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Optional JSON run report.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Optional colored point-cloud export of shape X.
        #[arg(long)]
        ply: Option<PathBuf>,
    },
    /// Grade a correspondence CSV against ground-truth files.
    Eval {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        voxels_x: PathBuf,
        #[arg(long)]
        voxels_y: PathBuf,
        #[arg(long)]
        truth_x: PathBuf,
        #[arg(long)]
        truth_y: PathBuf,
        /// Arc-length tolerance in voxel units.
        #[arg(long, default_value_t = 2.0)]
        radius: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    #[cfg(feature = "parallel")]
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            eprintln!("lapmatch: could not set thread count: {e}");
            return ExitCode::from(3);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lapmatch: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Map an error to the documented exit code via its root cause.
fn exit_code(err: &Error) -> u8 {
    match err.root() {
        Error::NoRetainedPairs { .. } => 4,
        Error::Parse { .. }
        | Error::EmptyInput
        | Error::InvalidPose(_)
        | Error::MissingTruth(_)
        | Error::Io(_) => 2,
        _ => 3,
    }
}

fn run(cli: &Cli) -> Result<()> {
    let mut config = PipelineConfig::default().with_seed(cli.seed);
    if let Some(path) = &cli.config {
        apply_config_file(&mut config, path)?;
    }
    match &cli.command {
        Command::Synth {
            model,
            pose,
            sampling,
            out,
            truth,
        } => cmd_synth(model, pose, *sampling, out, truth.as_deref()),
        Command::Embed { input, k, out } => cmd_embed(&config, input, *k, out),
        Command::Align {
            input_x,
            input_y,
            out,
        } => cmd_align(&config, input_x, input_y, out),
        Command::Match {
            input_x,
            input_y,
            out,
            report,
            ply,
        } => cmd_match(&config, input_x, input_y, out, report.as_deref(), ply.as_deref()),
        Command::Eval {
            records,
            voxels_x,
            voxels_y,
            truth_x,
            truth_y,
            radius,
        } => cmd_eval(records, voxels_x, voxels_y, truth_x, truth_y, *radius),
    }
}

fn cmd_synth(
    model_name: &str,
    pose_name: &str,
    sampling: f64,
    out: &Path,
    truth: Option<&Path>,
) -> Result<()> {
    let kind = ModelKind::parse(model_name)
        .ok_or_else(|| Error::InvalidPose(format!("unknown model '{model_name}'")))?;
    let model = ArticulatedModel::new(kind);
    let pose = if pose_name == "rest" {
        model.rest_pose()
    } else if model.pose_names().contains(&pose_name) {
        model.named_pose(pose_name)?
    } else {
        parse_angles(pose_name)?
    };
    let shape = synthesize(&model, &pose, sampling)?;
    save_voxels(out, &shape.voxels, VoxelFormat::from_path(out))?;
    if let Some(path) = truth {
        save_truth(path, &GroundTruth::from_shape(&shape, &model))?;
    }
    println!(
        "model {} pose [{}] sampling {} -> {} voxels, {} self-contacts",
        model.name,
        pose.iter()
            .map(|a| format!("{a:.3}"))
            .collect::<Vec<_>>()
            .join(", "),
        sampling,
        shape.voxels.len(),
        shape.contacts.len()
    );
    for c in &shape.contacts {
        println!(
            "contact: links {} and {} at distance {:.3}",
            c.link_a, c.link_b, c.distance
        );
    }
    Ok(())
}

fn load_input(path: &Path) -> Result<VoxelSet> {
    let (voxels, duplicates) = load_voxels(path, VoxelFormat::from_path(path))?;
    if duplicates > 0 {
        eprintln!(
            "lapmatch: {} duplicate voxels dropped from {}",
            duplicates,
            path.display()
        );
    }
    Ok(voxels)
}

fn cmd_embed(config: &PipelineConfig, input: &Path, k: usize, out: &Path) -> Result<()> {
    let voxels = load_input(input)?;
    let graph = build_graph(&voxels, &config.graph).map_err(|e| e.in_stage("graph"))?;
    let embedding =
        embed_with(&graph, k, &config.embed).map_err(|e| e.in_stage("embed"))?;
    save_embedding(out, &embedding)?;
    println!(
        "{} nodes ({} dropped), K = {}, eigenvalues: {}",
        graph.n_nodes(),
        graph.dropped_nodes(),
        embedding.k(),
        embedding
            .eigenvalues
            .iter()
            .map(|l| format!("{l:.6}"))
            .collect::<Vec<_>>()
            .join(" ")
    );
    Ok(())
}

fn cmd_align(
    config: &PipelineConfig,
    input_x: &Path,
    input_y: &Path,
    out: &Path,
) -> Result<()> {
    let voxels_x = load_input(input_x)?;
    let voxels_y = load_input(input_y)?;
    let graph_x = build_graph(&voxels_x, &config.graph).map_err(|e| e.in_stage("graph"))?;
    let graph_y = build_graph(&voxels_y, &config.graph).map_err(|e| e.in_stage("graph"))?;
    let emb_x = embed_with(&graph_x, config.align.max_k, &config.embed)
        .map_err(|e| e.in_stage("embed"))?;
    let emb_y = embed_with(&graph_y, config.align.max_k, &config.embed)
        .map_err(|e| e.in_stage("embed"))?;
    let alignment =
        align_eigenfunctions(&emb_x, &emb_y, &config.align).map_err(|e| e.in_stage("align"))?;
    println!("k_x l_y sign cost");
    for p in &alignment.pairs {
        println!("{} {} {:+.0} {:.6}", p.k_x, p.l_y, p.sign, p.cost);
    }
    let r0 = &alignment.initial_rotation;
    let mut text = format!("{} {}\n", r0.nrows(), r0.ncols());
    for i in 0..r0.nrows() {
        let row: Vec<String> = (0..r0.ncols()).map(|j| format!("{:.17e}", r0[(i, j)])).collect();
        text.push_str(&row.join(" "));
        text.push('\n');
    }
    std::fs::write(out, text)?;
    Ok(())
}

fn cmd_match(
    config: &PipelineConfig,
    input_x: &Path,
    input_y: &Path,
    out: &Path,
    report: Option<&Path>,
    ply: Option<&Path>,
) -> Result<()> {
    let voxels_x = load_input(input_x)?;
    let voxels_y = load_input(input_y)?;
    let output = run_match(&voxels_x, &voxels_y, config)?;
    save_records(out, &output.records)?;
    let rep = run_report(&output, config);
    if let Some(path) = report {
        save_report(path, &rep)?;
    }
    if let Some(path) = ply {
        save_ply(path, &voxels_x, &output.records)?;
    }
    for w in &rep.warnings {
        eprintln!("lapmatch: warning: {w}");
    }
    println!(
        "K = {}, {} iterations, {} matched, {} outliers, {} unmatched clusters, {:.2} s",
        rep.retained_k,
        rep.iterations,
        rep.matched,
        rep.outliers,
        rep.unmatched_clusters,
        rep.elapsed_seconds
    );
    Ok(())
}

fn cmd_eval(
    records: &Path,
    voxels_x: &Path,
    voxels_y: &Path,
    truth_x: &Path,
    truth_y: &Path,
    radius: f64,
) -> Result<()> {
    let records = load_records(records)?;
    let voxels_x = load_input(voxels_x)?;
    let voxels_y = load_input(voxels_y)?;
    let truth_x = load_truth(truth_x)?;
    let truth_y = load_truth(truth_y)?;
    let metrics = evaluate(&records, &voxels_x, &voxels_y, &truth_x, &truth_y, radius)?;
    let json = serde_json::json!({
        "matched_pairs": metrics.matched_pairs,
        "correct_pairs": metrics.correct_pairs,
        "accuracy": metrics.accuracy,
        "outliers": metrics.outliers,
        "unmatched_clusters": metrics.unmatched_clusters,
        "mean_arc_error": metrics.mean_arc_error,
        "radius": radius,
    });
    println!("{}", serde_json::to_string_pretty(&json).expect("metrics serialize"));
    Ok(())
}

fn parse_angles(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| {
            t.trim().parse().map_err(|_| Error::Parse {
                line: 1,
                message: format!("bad joint angle '{t}'"),
            })
        })
        .collect()
}

/// Apply a key=value configuration file to the stage configs.
fn apply_config_file(config: &mut PipelineConfig, path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(path)?;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: lineno,
            message: format!("expected key=value, got '{line}'"),
        })?;
        apply_key(config, key.trim(), value.trim()).map_err(|message| Error::Parse {
            line: lineno,
            message,
        })?;
    }
    Ok(())
}

fn apply_key(
    config: &mut PipelineConfig,
    key: &str,
    value: &str,
) -> std::result::Result<(), String> {
    fn num<T: std::str::FromStr>(value: &str) -> std::result::Result<T, String> {
        value.parse().map_err(|_| format!("bad value '{value}'"))
    }
    let graph = &mut config.graph;
    let embed: &mut EmbedConfig = &mut config.embed;
    let em: &mut EmConfig = &mut config.em;
    match key {
        "connectivity" => {
            graph.connectivity = match value {
                "6" => Connectivity::Six,
                "18" => Connectivity::Eighteen,
                "26" => Connectivity::TwentySix,
                radius => Connectivity::Radius(
                    radius
                        .strip_prefix("radius:")
                        .ok_or_else(|| format!("bad connectivity '{value}'"))
                        .and_then(num)?,
                ),
            }
        }
        "nu_factor" => graph.nu_factor = num(value)?,
        "min_component_size" => graph.min_component_size = num(value)?,
        "k_request" => embed.k_request = num(value)?,
        "embed_tol" => embed.tol = num(value)?,
        "max_krylov" => embed.max_krylov = Some(num(value)?),
        "bins" => config.align.bins = num(value)?,
        "retain_threshold" => config.align.retain_threshold = num(value)?,
        "max_k" => config.align.max_k = num(value)?,
        "pi_out" => em.pi_out = num(value)?,
        "sigma0_factor" => em.sigma0_factor = num(value)?,
        "sigma_floor" => em.sigma_floor = Some(num(value)?),
        "em_tol" => em.tol = num(value)?,
        "max_iter" => em.max_iter = num(value)?,
        "match_threshold" => em.match_threshold = num(value)?,
        "stop_on_stable_labels" => em.stop_on_stable_labels = num(value)?,
        other => return Err(format!("unknown key '{other}'")),
    }
    Ok(())
}

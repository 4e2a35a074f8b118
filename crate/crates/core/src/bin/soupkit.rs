use std::error::Error;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use soupkit::bench::{emit_table, run_plan, ExperimentPlan, Format};
use soupkit::gnn::{save_checkpoint, Arch, ModelSpec};
use soupkit::graph::{generate_sbm, load_graph, partition, save_graph, GraphData, SbmParams};
use soupkit::ingredients::{
    load_ingredients, save_ingredients, train_population, Optimizer, TrainConfig,
};
use soupkit::soup::{
    gis_soup, greedy_soup, learned_soup, pls_soup, uniform_soup, LsConfig, Method, PlsConfig,
};

type Result<T> = std::result::Result<T, Box<dyn Error>>;

fn at<T, E: Error>(path: &Path, r: std::result::Result<T, E>) -> Result<T> {
    r.map_err(|e| format!("{}: {e}", path.display()).into())
}

#[derive(Parser)]
#[command(
    name = "soupkit",
    version,
    about = "Train GNN ingredients and soup them into one model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a stochastic-block-model graph file.
    Generate(GenerateArgs),
    /// Train N ingredients from one shared initialization.
    Train(TrainArgs),
    /// Combine trained ingredients into one model.
    Soup(SoupArgs),
    /// Run an experiment plan and write result tables.
    Bench(BenchArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 1000)]
    nodes: usize,
    #[arg(long, default_value_t = 7)]
    classes: usize,
    #[arg(long, default_value_t = 0.02)]
    p_in: f64,
    #[arg(long, default_value_t = 0.002)]
    p_out: f64,
    #[arg(long, default_value_t = 64)]
    feat_dim: usize,
    #[arg(long, default_value_t = 0.3)]
    noise: f32,
    /// Train/val/test fractions, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.5, 0.25, 0.25])]
    split: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long, default_value = "gcn")]
    arch: Arch,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long, default_value_t = 64)]
    hidden: usize,
    #[arg(long, default_value_t = 0.5)]
    dropout: f32,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f32,
    #[arg(long, default_value_t = 5e-4)]
    wd: f32,
    #[arg(long, default_value = "adam")]
    opt: Optimizer,
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Seeded gradient noise (std 1e-4) so dropout-free members diverge.
    #[arg(long)]
    diversity_jitter: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SoupArgs {
    #[arg(long)]
    method: Method,
    #[arg(long)]
    ingredients: PathBuf,
    #[arg(long)]
    graph: PathBuf,
    #[arg(long, default_value_t = 20)]
    granularity: usize,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 0.5)]
    lr: f32,
    #[arg(long, default_value_t = 0.0)]
    wd: f32,
    #[arg(long, default_value_t = 100)]
    t0: usize,
    #[arg(long, default_value_t = 32)]
    parts: usize,
    #[arg(long, default_value_t = 8)]
    budget: usize,
    #[arg(long, default_value_t = 10)]
    score_interval: usize,
    /// Use raw alphas as ratios instead of a per-layer softmax.
    #[arg(long)]
    no_simplex: bool,
    /// Fraction of validation nodes reserved for best-epoch selection.
    #[arg(long, default_value_t = 0.0)]
    val_holdout: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report path; the souped checkpoint goes next to it with a `.gskp` extension.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Plan JSON. Without it the built-in desk-scale plan is used.
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Architecture of the built-in plan.
    #[arg(long, default_value = "gcn")]
    arch: Arch,
    #[arg(long)]
    out: PathBuf,
}

fn generate(a: GenerateArgs) -> Result<()> {
    let params = SbmParams {
        nodes: a.nodes,
        classes: a.classes,
        p_in: a.p_in,
        p_out: a.p_out,
        feat_dim: a.feat_dim,
        noise: a.noise,
        split: [a.split[0], a.split[1], a.split[2]],
        seed: a.seed,
    };
    let g = generate_sbm(&params)?;
    save_graph(&g, &a.out)?;
    println!(
        "wrote {} ({} nodes, {} directed edges)",
        a.out.display(),
        g.num_nodes(),
        g.num_edges()
    );
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let g = at(&a.graph, load_graph(&a.graph))?;
    let spec = ModelSpec {
        arch: a.arch,
        num_layers: a.layers,
        in_dim: g.feat_dim(),
        hidden_dim: a.hidden,
        out_dim: g.num_classes(),
        dropout: a.dropout,
    };
    let cfg = TrainConfig {
        epochs: a.epochs,
        lr: a.lr,
        weight_decay: a.wd,
        optimizer: a.opt,
        seed_base: a.seed,
        diversity_jitter: a.diversity_jitter,
    };
    let set = train_population(&g, &spec, &cfg, a.n, a.workers)?;
    save_ingredients(&set, &cfg, a.workers, &a.out)?;
    for (i, acc) in set.val_accs.iter().enumerate() {
        println!(
            "ingredient {i:03}: val acc {acc:.4} ({:.2}s)",
            set.train_times[i]
        );
    }
    println!(
        "wrote {} ingredients to {}",
        set.members.len(),
        a.out.display()
    );
    Ok(())
}

fn soup(a: SoupArgs) -> Result<()> {
    let g = at(&a.graph, load_graph(&a.graph))?;
    let members = at(&a.ingredients, load_ingredients(&a.ingredients))?;
    let ls = LsConfig {
        epochs: a.epochs,
        lr: a.lr,
        weight_decay: a.wd,
        t0: a.t0,
        alpha_seed: a.seed,
        simplex: !a.no_simplex,
        val_holdout: a.val_holdout,
    };
    let report = match a.method {
        Method::Uniform => uniform_soup(&members, &g)?,
        Method::Greedy => greedy_soup(&members, &g)?,
        Method::Gis => gis_soup(&members, &g, a.granularity)?,
        Method::Ls => learned_soup(&members, &g, &ls)?,
        Method::Pls => {
            let parts = partition(&g, a.parts, a.seed)?;
            let cfg = PlsConfig {
                ls,
                k: a.parts,
                r: a.budget,
                score_interval: a.score_interval,
            };
            pls_soup(&members, &g, &parts, &cfg)?
        }
    };
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let checkpoint = a.out.with_extension("gskp");
    save_checkpoint(&report.result, &checkpoint)?;
    let mut value = serde_json::to_value(&report)?;
    value["checkpoint"] = json!(checkpoint
        .file_name()
        .map(|n| n.to_string_lossy().into_owned()));
    value["ingredients"] = json!(members.len());
    write_json(&a.out, &value)?;
    println!(
        "{}: val {:.4} test {:.4} in {:.3}s ({} fwd, {} bwd, peak {} bytes)",
        report.method,
        report.val_acc,
        report.test_acc,
        report.wall_seconds,
        report.counters.forward_passes,
        report.counters.backward_passes,
        report.counters.peak_tracked_bytes
    );
    Ok(())
}

fn bench(a: BenchArgs) -> Result<()> {
    let plan = match &a.plan {
        Some(p) => at(
            p,
            serde_json::from_str::<ExperimentPlan>(&at(p, std::fs::read_to_string(p))?),
        )?,
        None => ExperimentPlan::desk_default(a.arch),
    };
    let report = run_plan(&plan, Some(&a.out))?;
    print!("{}", emit_table(&report.table, Format::Markdown)?);
    for cell in &report.cells {
        for e in &cell.errors {
            eprintln!("cell {}: {e}", cell.label);
        }
    }
    for s in &report.summary {
        println!(
            "{}: speedup {:.2}x, memory ratio {:.3} (vs {})",
            s.label, s.speedup, s.memory_ratio, plan.baseline
        );
    }
    println!("wrote {}", a.out.display());
    Ok(())
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Train(a) => train(a),
        Command::Soup(a) => soup(a),
        Command::Bench(a) => bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

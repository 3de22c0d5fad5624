//! Command-line frontend: distances and edit scripts between tree files,
//! synthetic dataset generation, model training, adversarial attacks, and
//! full crossvalidated experiments.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use treeadv::attacks::ReferencePool;
use treeadv::harness::{
    attack_points, load_dataset, run_experiment, save_dataset, synth_generate, train_classifier,
    AttackMethod, ClassifierKind, Dataset, ExperimentConfig, HyperParams, SynthSpec,
};
use treeadv::kernels::KernelConfig;
use treeadv::models::{load_model, save_model, ClassLabel, Classifier, TrainedModel};
use treeadv::ted::{backtrace, mean_pairwise_ted, ted};
use treeadv::trees::Tree;

#[derive(Parser)]
#[command(
    name = "treeadv",
    about = "Tree edit distances, tree classifiers, and adversarial edit attacks",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the tree edit distance between the trees in two files.
    Dist {
        /// File holding one tree in `a(b(c,d),e)` notation.
        file_a: PathBuf,
        file_b: PathBuf,
    },
    /// Print a shortest edit script between the trees in two files.
    ///
    /// Edits print as `del(i)`, `rep(i,a)`, `ins(i,c,C,a)`, separated by
    /// `;`; applying them left to right transforms the first tree into
    /// the second.
    Script {
        file_a: PathBuf,
        file_b: PathBuf,
    },
    /// Generate a synthetic two-class motif dataset.
    Synth(SynthArgs),
    /// Train one classifier on a full dataset and save it as JSON.
    Train(TrainArgs),
    /// Attack every correctly classified point of a dataset.
    ///
    /// Emits one JSON record per attacked point with the origin index,
    /// method, success flag, prefix length, query count, distances to the
    /// origin and to the nearest other-label reference, the distance
    /// ratio, and the serialized adversarial tree.
    Attack(AttackArgs),
    /// Run a crossvalidated attack experiment from a config file.
    ///
    /// The config is JSON with the fields: `dataset` (either
    /// `{"path": "file.jsonl"}` or `{"synthetic": {"n_examples": 60,
    /// "alphabet_size": 6, "max_depth": 2, "motif": "d(e,f)",
    /// "base_sizes": [3, 8]}}`), `classifiers` (list of linear | rbf |
    /// st | sst | pt | rec | tes; defaults to all), `folds`,
    /// `inner_folds` (default 3), `seed`, `attacks` (list of random |
    /// backtrace; defaults to both), `cap` (edit budget, default 100),
    /// `target_class` (optional class for targeted attacks), and
    /// `normalize_kernels` (default false). Writes the CSV report to
    /// --out and run metadata to `<out>.meta.json`.
    Eval {
        /// Path to the JSON experiment config.
        #[arg(long)]
        config: PathBuf,
        /// Where the CSV report goes.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct SynthArgs {
    /// Output dataset path (line-delimited JSON records).
    #[arg(long)]
    out: PathBuf,
    /// Total number of examples (classes balanced within one).
    #[arg(long, default_value_t = 60)]
    n: usize,
    /// Alphabet size (single letters a, b, c, ...).
    #[arg(long, default_value_t = 6)]
    alphabet_size: usize,
    /// Maximum tree depth of the base trees.
    #[arg(long, default_value_t = 2)]
    max_depth: usize,
    /// Motif subtree marking class 2, in tree notation.
    #[arg(long, default_value = "d(e,f)")]
    motif: String,
    /// Smallest base tree size.
    #[arg(long, default_value_t = 3)]
    base_min: usize,
    /// Largest base tree size.
    #[arg(long, default_value_t = 8)]
    base_max: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    /// Training dataset (line-delimited JSON records).
    #[arg(long)]
    data: PathBuf,
    /// linear | rbf | st | sst | pt | rec | tes
    #[arg(long)]
    classifier: ClassifierKind,
    /// Output model path (JSON).
    #[arg(long)]
    out: PathBuf,
    /// SVM regularization.
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    /// RBF bandwidth as a multiple of the mean pairwise edit distance.
    #[arg(long, default_value_t = 1.0)]
    sigma_factor: f64,
    /// Decay of the ST/SST/PT kernels.
    #[arg(long, default_value_t = 0.01)]
    lambda: f64,
    /// Reservoir scaling (tes only).
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    /// Embedding / reservoir dimension (rec and tes).
    #[arg(long)]
    dim: Option<usize>,
    /// Readout ridge (tes only).
    #[arg(long, default_value_t = 1e-8)]
    ridge: f64,
    /// Normalize the tree kernels.
    #[arg(long, default_value_t = false)]
    normalize: bool,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct AttackArgs {
    /// random | backtrace
    #[arg(long)]
    method: AttackMethod,
    /// Trained model (JSON, as written by `train`).
    #[arg(long)]
    model: PathBuf,
    /// Dataset whose correctly classified points get attacked; the same
    /// points form the reference pool.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Edit budget of the random attack.
    #[arg(long, default_value_t = 100)]
    cap: usize,
    /// Target class for targeted attacks (default: nearest other label).
    #[arg(long)]
    targeted: Option<ClassLabel>,
    /// Write records here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn read_tree(path: &Path) -> Result<Tree> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    Tree::parse(text.trim()).with_context(|| format!("cannot parse tree in {}", path.display()))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Dist { file_a, file_b } => {
            let a = read_tree(&file_a)?;
            let b = read_tree(&file_b)?;
            println!("{}", ted(&a, &b));
        }
        Command::Script { file_a, file_b } => {
            let a = read_tree(&file_a)?;
            let b = read_tree(&file_b)?;
            println!("{}", backtrace(&a, &b));
        }
        Command::Synth(args) => {
            let spec = SynthSpec {
                n_examples: args.n,
                alphabet_size: args.alphabet_size,
                max_depth: args.max_depth,
                motif: Tree::parse(&args.motif).context("cannot parse motif")?,
                base_sizes: (args.base_min, args.base_max),
            };
            let mut rng = seeded(args.seed);
            let dataset = synth_generate(&spec, &mut rng)?;
            save_dataset(&dataset, &args.out)?;
            eprintln!("wrote {} examples to {}", dataset.len(), args.out.display());
        }
        Command::Train(args) => {
            let dataset = load_dataset(&args.data)?;
            let model = train_full(&args, &dataset)?;
            save_model(&model, &args.out)?;
            eprintln!("saved {} model to {}", args.classifier, args.out.display());
        }
        Command::Attack(args) => {
            let dataset = load_dataset(&args.data)?;
            let model = load_model(&args.model)?;
            let records = run_attacks(&args, &dataset, &model)?;
            let mut lines = String::new();
            for record in &records {
                lines.push_str(&serde_json::to_string(record)?);
                lines.push('\n');
            }
            match &args.out {
                Some(path) => fs::write(path, lines)
                    .with_context(|| format!("cannot write {}", path.display()))?,
                None => print!("{lines}"),
            }
            let successes = records.iter().filter(|r| r.success).count();
            eprintln!("{successes}/{} attacks successful", records.len());
        }
        Command::Eval { config, out } => {
            let text = fs::read_to_string(&config)
                .with_context(|| format!("cannot read {}", config.display()))?;
            let config: ExperimentConfig =
                serde_json::from_str(&text).context("cannot parse experiment config")?;
            let report = run_experiment(&config)?;
            fs::write(&out, report.to_csv())
                .with_context(|| format!("cannot write {}", out.display()))?;
            let meta_path = sidecar(&out);
            fs::write(&meta_path, serde_json::to_string_pretty(&report.metadata)?)?;
            for warning in &report.metadata.warnings {
                eprintln!("warning: {warning}");
            }
            eprintln!("report: {} (metadata: {})", out.display(), meta_path.display());
        }
    }
    Ok(())
}

fn sidecar(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    out.with_file_name(name)
}

fn seeded(seed: u64) -> impl rand::Rng {
    use rand::SeedableRng as _;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}

fn train_full(args: &TrainArgs, dataset: &Dataset) -> Result<TrainedModel> {
    let kernel = match args.classifier {
        ClassifierKind::Linear => Some(KernelConfig::Linear),
        ClassifierKind::Rbf => {
            let trees: Vec<Tree> = dataset.examples.iter().map(|(t, _)| t.clone()).collect();
            let d_bar = mean_pairwise_ted(&trees);
            if d_bar <= 0.0 {
                bail!("dataset has zero mean distance; cannot scale an RBF bandwidth");
            }
            Some(KernelConfig::Rbf { sigma: args.sigma_factor * d_bar })
        }
        ClassifierKind::St => Some(KernelConfig::Subtree { lambda: args.lambda }),
        ClassifierKind::Sst => Some(KernelConfig::SubsetTree { lambda: args.lambda }),
        ClassifierKind::Pt => Some(KernelConfig::PartialTree { lambda: args.lambda }),
        ClassifierKind::Rec | ClassifierKind::Tes => None,
    };
    let params = match args.classifier {
        ClassifierKind::Rec => HyperParams::Rec { dim: args.dim.unwrap_or(10) },
        ClassifierKind::Tes => HyperParams::Tes {
            dim: args.dim.unwrap_or(50),
            scale: args.scale,
            ridge: args.ridge,
        },
        _ => HyperParams::Svm { kernel: kernel.expect("svm kinds carry a kernel"), c: args.c },
    };
    let model = train_classifier(&params, &dataset.examples, &[], args.normalize, args.seed)?;
    if let TrainedModel::RecNet(m) = &model {
        if !m.converged {
            eprintln!(
                "warning: training loss {:.4} still above 0.01 after {} iterations",
                m.final_loss, m.iterations
            );
        }
    }
    Ok(model)
}

fn run_attacks(
    args: &AttackArgs,
    dataset: &Dataset,
    model: &TrainedModel,
) -> Result<Vec<treeadv::harness::AttackRecord>> {
    let pool = ReferencePool::build(&dataset.examples, model)?;
    if pool.is_empty() {
        bail!("the model classifies no dataset point correctly; nothing to attack");
    }
    let mut points = Vec::new();
    for (i, (tree, label)) in dataset.examples.iter().enumerate() {
        if model.predict(tree)? == *label {
            points.push((i, tree.clone(), *label));
        }
    }
    let records = attack_points(
        model,
        &pool,
        &points,
        args.method,
        &dataset.alphabet,
        args.cap,
        args.targeted,
        args.seed,
    )?;
    let mut out = records;
    out.sort_by_key(|r| r.origin_index);
    Ok(out)
}

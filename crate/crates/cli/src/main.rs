use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use lsc_core::corpus::{load_corpus_dir, Tokenizer};
use lsc_core::harness::synth::{generate, SynthConfig};
use lsc_core::harness::{
    ablation_past_domains, evaluate, AblationOptions, EvalOptions, EvalReport, Metric, PreparedCorpus, ReportFormat,
    Setting, System, BALANCED_PER_CLASS,
};
use lsc_core::optimizer::{run_gradcheck, GradcheckConfig};
use lsc_core::{sgd_train, KnowledgeBase, LscConfig};

#[derive(Parser)]
#[command(name = "lsc", version, about = "Lifelong sentiment classification experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Leave-one-domain-out evaluation of the selected systems.
    Eval(EvalArgs),
    /// Metric as a function of the number of past domains.
    Ablation(AblationArgs),
    /// Train on one full target domain with knowledge from the others.
    Train(TrainArgs),
    /// Build, inspect and merge knowledge-base snapshots.
    #[command(subcommand)]
    Kb(KbCommand),
    /// Finite-difference check of the analytic gradients.
    Gradcheck(GradcheckArgs),
    /// Write a synthetic corpus directory.
    Synth(SynthArgs),
}

#[derive(Args)]
struct CorpusArgs {
    #[arg(long)]
    corpus_dir: PathBuf,
    #[arg(long, default_value = "natural")]
    setting: Setting,
    /// Documents per class kept in the balanced setting.
    #[arg(long, default_value_t = BALANCED_PER_CLASS)]
    per_class: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long, default_value_t = 6.0)]
    sigma: f64,
    #[arg(long, default_value_t = 6)]
    tau: u32,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    /// Learning rate.
    #[arg(long, default_value_t = 0.1)]
    gamma: f64,
    /// Laplace smoothing.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Convergence threshold on the change of the training objective.
    #[arg(long, default_value_t = 1e-3)]
    epsilon: f64,
    #[arg(long, default_value_t = 100)]
    max_epochs: usize,
}

impl ConfigArgs {
    fn config(&self) -> LscConfig {
        LscConfig {
            sigma: self.sigma,
            tau: self.tau,
            alpha: self.alpha,
            learn_rate: self.gamma,
            lambda: self.lambda,
            epsilon: self.epsilon,
            max_epochs: self.max_epochs,
            ..LscConfig::default()
        }
    }
}

#[derive(Args)]
struct OutputArgs {
    /// Report path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "tsv")]
    format: ReportFormat,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    output: OutputArgs,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Comma-separated subset of NB-T, NB-S, NB-ST, LSC.
    #[arg(long, value_delimiter = ',', default_values = ["NB-T", "NB-S", "NB-ST", "LSC"])]
    systems: Vec<System>,
}

#[derive(Args)]
struct AblationArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    config: ConfigArgs,
    #[command(flatten)]
    output: OutputArgs,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, value_delimiter = ',', default_values = ["0", "1", "3", "5", "10", "15", "19"])]
    sizes: Vec<usize>,
    /// Subset draws per size.
    #[arg(long, default_value_t = 5)]
    repetitions: usize,
    /// Defaults to F1 of the negative class (natural) or accuracy (balanced).
    #[arg(long)]
    metric: Option<Metric>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    target: String,
    /// Past domains; every other domain when absent.
    #[arg(long, value_delimiter = ',')]
    past: Option<Vec<String>>,
    /// Model path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum KbCommand {
    /// Mine a knowledge base from full-domain models.
    Build {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Domains to include; all when absent.
        #[arg(long, value_delimiter = ',')]
        domains: Option<Vec<String>>,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize a snapshot or show individual words.
    Inspect {
        path: PathBuf,
        #[arg(long)]
        word: Vec<String>,
        /// Words with the most tasks agreeing on a polarity.
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
    /// Combine snapshots built from disjoint task sets.
    Merge {
        #[arg(required = true, num_args = 2..)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    instances: usize,
    #[arg(long, default_value_t = 1e-5)]
    rel_tol: f64,
    #[arg(long, default_value_t = 1e-8)]
    abs_tol: f64,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Equal class sizes in every domain.
    #[arg(long)]
    balanced: bool,
    /// JSON file overriding generator fields.
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Bad flag values found after parsing; reported with the usage exit code.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn checked(config: LscConfig) -> anyhow::Result<LscConfig> {
    config.validate().map_err(|e| usage(e.to_string()))?;
    Ok(config)
}

fn load(args: &CorpusArgs, lambda: f64) -> anyhow::Result<PreparedCorpus> {
    let domains = load_corpus_dir(&args.corpus_dir, &Tokenizer::default())?;
    if domains.is_empty() {
        bail!("{}: no .jsonl domain files", args.corpus_dir.display());
    }
    Ok(PreparedCorpus::new(
        domains,
        args.setting,
        args.per_class,
        args.seed,
        lambda,
    )?)
}

fn sink(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn emit(output: &OutputArgs, text: &str) -> anyhow::Result<()> {
    let mut w = sink(output.out.as_deref())?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

fn eval(args: EvalArgs) -> anyhow::Result<()> {
    let config = checked(args.config.config())?;
    if args.folds < 2 {
        return Err(usage("--folds must be at least 2"));
    }
    let corpus = load(&args.corpus, config.lambda)?;
    let options = EvalOptions {
        folds: args.folds,
        seed: args.corpus.seed,
        systems: args.systems,
        config,
    };
    let outcome = evaluate(&corpus, &options)?;
    if !outcome.training.is_empty() {
        let improved = outcome
            .training
            .iter()
            .filter(|t| t.final_objective >= t.initial_objective)
            .count();
        let converged = outcome.training.iter().filter(|t| t.converged).count();
        eprintln!(
            "lsc: {} fold runs, {converged} converged, {improved} with final objective >= initial",
            outcome.training.len()
        );
    }
    emit(&args.output, &outcome.report.render(args.output.format))
}

fn ablation(args: AblationArgs) -> anyhow::Result<()> {
    let config = checked(args.config.config())?;
    if args.folds < 2 {
        return Err(usage("--folds must be at least 2"));
    }
    let corpus = load(&args.corpus, config.lambda)?;
    let options = AblationOptions {
        sizes: args.sizes,
        repetitions: args.repetitions,
        folds: args.folds,
        seed: args.corpus.seed,
        config,
        metric: args.metric,
    };
    let curve = ablation_past_domains(&corpus, &options)?;
    let report = EvalReport::new(corpus.setting(), &[System::Lsc], Vec::new(), curve);
    emit(&args.output, &report.render(args.output.format))
}

fn train(args: TrainArgs) -> anyhow::Result<()> {
    let config = checked(args.config.config())?;
    let corpus = load(&args.corpus, config.lambda)?;
    let target = corpus.domain(&args.target)?;
    let past: Vec<String> = match args.past {
        Some(p) => p,
        None => corpus
            .names()
            .filter(|n| *n != args.target)
            .map(str::to_string)
            .collect(),
    };
    if past.contains(&args.target) {
        return Err(usage("the target cannot also be a past domain"));
    }
    let kb = corpus.knowledge(&past)?;
    let docs: Vec<_> = target.documents().iter().collect();
    let model = sgd_train(&docs, &kb, &config)?;
    eprintln!(
        "lsc: {} epochs, converged {}, objective {:.6} -> {:.6}, |V_T| {}, |V_S| {}",
        model.epochs,
        model.converged,
        model.initial_objective(),
        model.final_objective(),
        model.vt_size,
        model.vs_size
    );
    let mut w = sink(args.out.as_deref())?;
    model.write_to(&mut w)?;
    w.flush()?;
    Ok(())
}

fn read_kb(path: &Path) -> anyhow::Result<KnowledgeBase> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    KnowledgeBase::read_from(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

fn write_kb(kb: &KnowledgeBase, out: Option<&Path>) -> anyhow::Result<()> {
    let mut w = sink(out)?;
    kb.write_to(&mut w)?;
    w.flush()?;
    Ok(())
}

fn kb(cmd: KbCommand) -> anyhow::Result<()> {
    match cmd {
        KbCommand::Build {
            corpus,
            domains,
            lambda,
            out,
        } => {
            if !(lambda > 0.0 && lambda <= 1.0) {
                return Err(usage(format!("--lambda must lie in (0, 1], got {lambda}")));
            }
            let c = load(&corpus, lambda)?;
            let names = domains.unwrap_or_else(|| c.names().map(str::to_string).collect());
            write_kb(&c.knowledge(&names)?, out.as_deref())
        }
        KbCommand::Inspect { path, word, top } => {
            let kb = read_kb(&path)?;
            let mut w = sink(None)?;
            writeln!(w, "tasks\t{}", kb.task_count())?;
            writeln!(w, "words\t{}", kb.words().count())?;
            writeln!(w, "word\tn_pos\tn_neg\tm_pos\tm_neg")?;
            let rows: Vec<_> = if word.is_empty() {
                let mut all: Vec<_> = kb.words().collect();
                all.sort_by(|a, b| {
                    let key = |k: &lsc_core::knowledge::WordKnowledge| k.m_pos.max(k.m_neg);
                    key(b.1).cmp(&key(a.1)).then_with(|| a.0.cmp(b.0))
                });
                all.truncate(top);
                all
            } else {
                word.iter()
                    .map(|x| {
                        kb.get(x)
                            .map(|k| (x.as_str(), k))
                            .with_context(|| format!("{x:?} is not in the knowledge base"))
                    })
                    .collect::<anyhow::Result<_>>()?
            };
            for (name, k) in rows {
                writeln!(w, "{name}\t{}\t{}\t{}\t{}", k.n_pos, k.n_neg, k.m_pos, k.m_neg)?;
            }
            w.flush()?;
            Ok(())
        }
        KbCommand::Merge { inputs, out } => {
            let mut kb = KnowledgeBase::new();
            for p in &inputs {
                kb = kb
                    .merge(&read_kb(p)?)
                    .with_context(|| format!("merging {}", p.display()))?;
            }
            write_kb(&kb, out.as_deref())
        }
    }
}

fn gradcheck(args: GradcheckArgs) -> anyhow::Result<bool> {
    let cfg = GradcheckConfig {
        instances: args.instances,
        seed: args.seed,
        rel_tol: args.rel_tol,
        abs_tol: args.abs_tol,
        ..GradcheckConfig::default()
    };
    let report = run_gradcheck(&cfg);
    for f in report.failures.iter().take(20) {
        println!(
            "FAIL instance {} {} {:?}/{}: analytic {:e} numeric {:e}",
            f.instance, f.term, f.word, f.class, f.analytic, f.numeric
        );
    }
    println!(
        "gradcheck {}: {} instances ({} positive, {} negative documents, {} with penalties), {} partials, {} failures, worst error {:.3} of tolerance",
        if report.passed() { "passed" } else { "FAILED" },
        report.instances,
        report.positive_docs,
        report.negative_docs,
        report.with_penalties,
        report.partials,
        report.failures.len(),
        report.worst_ratio
    );
    Ok(report.passed())
}

fn synth(args: SynthArgs) -> anyhow::Result<()> {
    let mut cfg = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let mut base = serde_json::to_value(SynthConfig::default())?;
            let over: serde_json::Value =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
            let Some(fields) = over.as_object() else {
                bail!("{}: expected a JSON object", p.display());
            };
            for (k, v) in fields {
                if base.get(k).is_none() {
                    bail!("{}: unknown generator field {k:?}", p.display());
                }
                base[k] = v.clone();
            }
            serde_json::from_value(base).with_context(|| format!("parsing {}", p.display()))?
        }
        None => SynthConfig::default(),
    };
    cfg.seed = args.seed;
    if args.balanced {
        cfg = cfg.balanced();
    }
    let corpus = generate(&cfg)?;
    std::fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    corpus.write_dir(&args.out_dir)?;
    eprintln!(
        "lsc: wrote {} domains of {} documents to {}",
        cfg.domains,
        cfg.docs_per_domain,
        args.out_dir.display()
    );
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Eval(a) => eval(a)?,
        Command::Ablation(a) => ablation(a)?,
        Command::Train(a) => train(a)?,
        Command::Kb(c) => kb(c)?,
        Command::Gradcheck(a) => return gradcheck(a),
        Command::Synth(a) => synth(a)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let c = cause.to_string();
                if !msg.ends_with(&c) {
                    msg = format!("{msg}: {c}");
                }
            }
            eprintln!("lsc: error: {msg}");
            ExitCode::from(if e.is::<Usage>() { 2 } else { 1 })
        }
    }
}

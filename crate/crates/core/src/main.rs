use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gazcrf::corpus::{
    class_weights_with_n, clean_corpus, corpus_stats, parse_counts, read_conll, write_conll, write_conll_file,
    ConllFormat, LabeledSentence, DEFAULT_WEIGHT_FLOOR,
};
use gazcrf::crf::{train, CrfModel, OptimConfig, Optimizer, TrainConfig};
use gazcrf::eval::{evaluate, EvalMode};
use gazcrf::features::{
    missing_resources, ClusterSource, FeaturizedCorpus, FeaturizedSentence, Preset, ResourcePresence, Resources,
    Stopwords,
};
use gazcrf::gazetteer::{build_gazetteer, extend_from_tsv, GazetteerTrie, MatchMode};
use gazcrf::quantize::{kmeans_fit, ClusterModel, KMeansConfig};
use gazcrf::sidecar::{read_sidecar, Sidecar};
use gazcrf::synthetic::{generate, SyntheticConfig};
use gazcrf::{io, EntityType, Error};

#[derive(Parser)]
#[command(name = "gazcrf", version, about = "Gazetteer-augmented CRF named entity recognition")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a gazetteer trie from per-type phrase lists.
    GazetteerBuild(GazetteerArgs),
    /// Strip leading punctuation from tokens and repair BIO.
    Clean(CleanArgs),
    /// Entity and label counts of a corpus.
    Stats(StatsArgs),
    /// Class weights from label counts.
    Weights(WeightsArgs),
    /// Fit k-means centroids on sidecar embeddings.
    Kmeans(KmeansArgs),
    /// Write a corpus as feature vectors under a preset.
    Featurize(FeaturizeArgs),
    /// Train a CRF.
    Train(TrainArgs),
    /// Label a corpus with a trained model.
    Tag(TagArgs),
    /// Score predictions against gold labels.
    Eval(EvalArgs),
    /// Generate the synthetic corpus and gazetteer.
    Synth(SynthArgs),
}

#[derive(Args)]
struct GazetteerArgs {
    #[arg(long)]
    per: Vec<PathBuf>,
    #[arg(long)]
    loc: Vec<PathBuf>,
    #[arg(long)]
    grp: Vec<PathBuf>,
    #[arg(long)]
    corp: Vec<PathBuf>,
    #[arg(long)]
    cw: Vec<PathBuf>,
    #[arg(long)]
    prod: Vec<PathBuf>,
    /// `phrase<TAB>TAG` files.
    #[arg(long)]
    tsv: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CorpusArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// `multiconer` or `two_col`.
    #[arg(long, default_value = "multiconer")]
    format: ConllFormat,
}

#[derive(Args)]
struct CleanArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StatsArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Also write `label<TAB>count` lines here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct WeightsArgs {
    /// `label<TAB>count` lines.
    #[arg(long)]
    counts: PathBuf,
    /// Class count in the formula (default: number of rows).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_WEIGHT_FLOOR)]
    floor: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct KmeansArgs {
    /// Embedding sidecars, all from the same layer.
    #[arg(long = "in", required = true)]
    input: Vec<PathBuf>,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = gazcrf::quantize::DEFAULT_MAX_ITERS)]
    max_iters: usize,
    #[arg(long, default_value_t = gazcrf::quantize::DEFAULT_TOL)]
    tol: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ResourceArgs {
    #[arg(long)]
    gazetteer: Option<PathBuf>,
    /// `per-token` or `longest-span`.
    #[arg(long = "match", default_value = "per-token")]
    match_mode: MatchMode,
    /// Longest span tried in `longest-span` mode.
    #[arg(long)]
    max_span: Option<usize>,
    /// One stopword per line (default: bundled Bangla list).
    #[arg(long)]
    stopwords: Option<PathBuf>,
    /// Cluster model for the primary embedding layer.
    #[arg(long)]
    kmeans: Option<PathBuf>,
    /// Embedding sidecar for `--kmeans`.
    #[arg(long)]
    sidecar: Option<PathBuf>,
    #[arg(long)]
    kmeans23: Option<PathBuf>,
    #[arg(long)]
    sidecar23: Option<PathBuf>,
    /// Predicted-tag sidecar.
    #[arg(long)]
    tags: Option<PathBuf>,
    /// Raw embedding sidecar (defaults to `--sidecar`).
    #[arg(long)]
    embeddings: Option<PathBuf>,
}

#[derive(Args)]
struct FeaturizeArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long)]
    preset: Preset,
    #[command(flatten)]
    resources: ResourceArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// CoNLL corpus, or a feature file written by `featurize`.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long, default_value = "multiconer")]
    format: ConllFormat,
    #[arg(long)]
    preset: Preset,
    #[command(flatten)]
    resources: ResourceArgs,
    /// `lbfgs` or `gd`.
    #[arg(long, default_value = "lbfgs")]
    optimizer: Optimizer,
    #[arg(long, default_value_t = 0.1)]
    l2: f64,
    #[arg(long, default_value_t = 200)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
    /// Forbid transitions that break BIO.
    #[arg(long)]
    constrain_bio: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TagArgs {
    #[arg(long)]
    model: PathBuf,
    /// CoNLL corpus, or a feature file written by `featurize`.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value = "multiconer")]
    format: ConllFormat,
    /// Needed only when the model does not record its preset.
    #[arg(long)]
    preset: Option<Preset>,
    #[command(flatten)]
    resources: ResourceArgs,
    /// Defaults to standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    #[arg(long, default_value = "multiconer")]
    format: ConllFormat,
    /// `entity` or `token`.
    #[arg(long, default_value = "entity")]
    mode: EvalMode,
    /// Print `key=value` lines instead of a table.
    #[arg(long)]
    kv: bool,
    /// Also write the `key=value` report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 2000)]
    sentences: usize,
    #[arg(long, default_value_t = 500)]
    phrases: usize,
    #[arg(long, default_value_t = 0.2)]
    held_out: f64,
    /// Also write stand-in embedding and tag sidecars of this dimension.
    #[arg(long)]
    sidecar_dim: Option<usize>,
}

enum CliError {
    Usage(String),
    Lib(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.to_string();
            let first = message.lines().next().unwrap_or("invalid arguments");
            return fail("usage", first.trim_start_matches("error: "), 2);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return fail("config", &e.to_string(), 3);
        }
    }
    match run(cli.command, cli.seed) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => fail("usage", &m, 2),
        Err(CliError::Lib(e)) => {
            let code = match e {
                Error::Config(_) => 3,
                Error::Io { .. } => 4,
                _ => 1,
            };
            fail(e.kind(), &e.to_string(), code)
        }
    }
}

/// One line on stderr: `error kind=<kind>: <message>`.
fn fail(kind: &str, message: &str, code: u8) -> ExitCode {
    let flat: String = message.split_whitespace().collect::<Vec<_>>().join(" ");
    eprintln!("error kind={kind}: {flat}");
    ExitCode::from(code)
}

fn run(command: Command, seed: u64) -> CliResult {
    match command {
        Command::GazetteerBuild(a) => gazetteer_build(a),
        Command::Clean(a) => {
            let sentences = read_conll(&a.corpus.input, a.corpus.format)?;
            let cleaned = clean_corpus(&sentences);
            write_conll_file(&a.out, &cleaned, a.corpus.format)?;
            Ok(())
        }
        Command::Stats(a) => {
            let sentences = read_conll(&a.corpus.input, a.corpus.format)?;
            let stats = corpus_stats(&sentences)?;
            if let Some(out) = &a.out {
                write_text(out, &stats.label_counts_tsv())?;
            }
            print!("{}", stats.to_key_values());
            Ok(())
        }
        Command::Weights(a) => {
            let counts = parse_counts(&io::read_to_string(&a.counts)?)?;
            let n = a.n.unwrap_or(counts.len());
            let weights = class_weights_with_n(&counts, n, a.floor)?;
            let text = weights.to_key_values();
            match &a.out {
                Some(out) => write_text(out, &text)?,
                None => print!("{text}"),
            }
            Ok(())
        }
        Command::Kmeans(a) => kmeans(a, seed),
        Command::Featurize(a) => {
            check_presence(a.preset, &a.resources)?;
            let sentences = read_conll(&a.corpus.input, a.corpus.format)?;
            let loaded = LoadedResources::load(&a.resources)?;
            let corpus = FeaturizedCorpus::build(&sentences, a.preset, &loaded.view(&a.resources))?;
            corpus.save(&a.out)?;
            Ok(())
        }
        Command::Train(a) => train_cmd(a, seed),
        Command::Tag(a) => tag(a),
        Command::Eval(a) => {
            let gold = read_conll(&a.gold, a.format)?;
            let pred = read_conll(&a.pred, a.format)?;
            let report = evaluate(&gold, &pred, a.mode)?;
            if let Some(out) = &a.out {
                write_text(out, &report.to_key_values())?;
            }
            if a.kv {
                print!("{}", report.to_key_values());
            } else {
                print!("{}", report.to_table());
                println!("macro_f1={}", report.macro_f1);
            }
            Ok(())
        }
        Command::Synth(a) => {
            let config = SyntheticConfig {
                sentences: a.sentences,
                phrases: a.phrases,
                held_out: a.held_out,
                seed,
                ..Default::default()
            };
            let data = generate(&config)?;
            data.write_dir(&a.out)?;
            if let Some(dim) = a.sidecar_dim {
                data.write_sidecars(&a.out, dim, seed)?;
            }
            println!(
                "train={} test={} phrases={} held_out={}",
                data.train.len(),
                data.test.len(),
                data.phrases.len(),
                data.held_out.len()
            );
            Ok(())
        }
    }
}

fn write_text(path: &Path, text: &str) -> gazcrf::Result<()> {
    io::write_atomic(path, |out| out.write_all(text.as_bytes()).map_err(|e| Error::io(path, e)))
}

fn gazetteer_build(a: GazetteerArgs) -> CliResult {
    let lists: BTreeMap<EntityType, Vec<PathBuf>> = [
        (EntityType::Per, a.per),
        (EntityType::Loc, a.loc),
        (EntityType::Grp, a.grp),
        (EntityType::Corp, a.corp),
        (EntityType::Cw, a.cw),
        (EntityType::Prod, a.prod),
    ]
    .into_iter()
    .filter(|(_, v)| !v.is_empty())
    .collect();
    if lists.is_empty() && a.tsv.is_empty() {
        return Err(CliError::Usage("give at least one phrase list (--per, --loc, ... or --tsv)".into()));
    }
    let mut trie = build_gazetteer(&lists)?;
    for path in &a.tsv {
        extend_from_tsv(&mut trie, &io::read_to_string(path)?)?;
    }
    trie.save(&a.out)?;
    let counts: Vec<String> = EntityType::ALL
        .iter()
        .map(|&t| format!("{t}={}", trie.entry_count(t)))
        .collect();
    println!("nodes={} {}", trie.node_count(), counts.join(" "));
    Ok(())
}

fn kmeans(a: KmeansArgs, seed: u64) -> CliResult {
    let mut vectors = Vec::new();
    let mut shape: Option<(i64, usize)> = None;
    for path in &a.input {
        let sidecar = read_sidecar(path)?;
        let this = (sidecar.layer(), sidecar.dim());
        match shape {
            Some(s) if s != this => {
                return Err(Error::Config(format!(
                    "{}: layer {} dim {} differs from earlier sidecars (layer {} dim {})",
                    path.display(),
                    this.0,
                    this.1,
                    s.0,
                    s.1
                ))
                .into())
            }
            _ => shape = Some(this),
        }
        vectors.extend(sidecar.vectors().map(<[f64]>::to_vec));
    }
    let (layer, _) = shape.expect("at least one input");
    let config = KMeansConfig {
        max_iters: a.max_iters,
        tol: a.tol,
        layer,
        ..KMeansConfig::new(a.k, seed)
    };
    let fit = kmeans_fit(&vectors, &config)?;
    fit.model.save(&a.out)?;
    println!("k={} points={} iterations={} inertia={}", a.k, vectors.len(), fit.iterations, fit.model.inertia);
    Ok(())
}

fn presence(r: &ResourceArgs) -> ResourcePresence {
    ResourcePresence {
        gazetteer: r.gazetteer.is_some(),
        kmeans24_model: r.kmeans.is_some(),
        kmeans24_embeddings: r.sidecar.is_some(),
        kmeans23_model: r.kmeans23.is_some(),
        kmeans23_embeddings: r.sidecar23.is_some(),
        predicted_tags: r.tags.is_some(),
        raw_embeddings: r.embeddings.is_some() || r.sidecar.is_some(),
    }
}

fn check_presence(preset: Preset, r: &ResourceArgs) -> gazcrf::Result<()> {
    let missing = missing_resources(preset, presence(r));
    if missing.is_empty() {
        return Ok(());
    }
    let flags: Vec<String> = missing.iter().map(|m| format!("--{m}")).collect();
    Err(Error::Config(format!("preset {preset} is missing {}", flags.join(" "))))
}

#[derive(Default)]
struct LoadedResources {
    gazetteer: Option<GazetteerTrie>,
    stopwords: Option<Stopwords>,
    kmeans: Option<ClusterModel>,
    sidecar: Option<Sidecar>,
    kmeans23: Option<ClusterModel>,
    sidecar23: Option<Sidecar>,
    tags: Option<Sidecar>,
    embeddings: Option<Sidecar>,
}

impl LoadedResources {
    fn load(r: &ResourceArgs) -> gazcrf::Result<Self> {
        let sidecar = |p: &Option<PathBuf>| p.as_deref().map(read_sidecar).transpose();
        Ok(Self {
            gazetteer: r.gazetteer.as_deref().map(GazetteerTrie::load).transpose()?,
            stopwords: r
                .stopwords
                .as_deref()
                .map(|p| io::read_to_string(p).map(|t| Stopwords::parse(&t)))
                .transpose()?,
            kmeans: r.kmeans.as_deref().map(ClusterModel::load).transpose()?,
            sidecar: sidecar(&r.sidecar)?,
            kmeans23: r.kmeans23.as_deref().map(ClusterModel::load).transpose()?,
            sidecar23: sidecar(&r.sidecar23)?,
            tags: sidecar(&r.tags)?,
            embeddings: sidecar(&r.embeddings)?,
        })
    }

    fn view(&self, r: &ResourceArgs) -> Resources<'_> {
        let match_mode = match (r.match_mode, r.max_span) {
            (MatchMode::LongestSpan { .. }, Some(max_span)) => MatchMode::LongestSpan { max_span },
            (mode, _) => mode,
        };
        fn cluster<'a>(m: &'a Option<ClusterModel>, s: &'a Option<Sidecar>) -> Option<ClusterSource<'a>> {
            m.as_ref()
                .zip(s.as_ref())
                .map(|(model, embeddings)| ClusterSource { model, embeddings })
        }
        // The primary sidecar doubles as the raw embedding source.
        let raw = self.embeddings.as_ref().or(self.sidecar.as_ref());
        Resources {
            gazetteer: self.gazetteer.as_ref(),
            match_mode,
            stopwords: self.stopwords.as_ref(),
            kmeans24: cluster(&self.kmeans, &self.sidecar),
            kmeans23: cluster(&self.kmeans23, &self.sidecar23),
            predicted_tags: self.tags.as_ref(),
            raw_embeddings: raw,
        }
    }
}

/// A feature file starts with `# preset=`; anything else is read as CoNLL.
fn is_feature_file(path: &Path) -> gazcrf::Result<bool> {
    let mut reader = io::open(path)?;
    let mut first = String::new();
    reader.read_line(&mut first).map_err(|e| Error::io(path, e))?;
    Ok(first.starts_with("# preset="))
}

/// Either loads a feature file or featurizes a corpus with the given
/// resources. Resource presence is checked before anything is read.
fn load_input(
    input: &Path,
    format: ConllFormat,
    preset: Preset,
    resources: &ResourceArgs,
) -> gazcrf::Result<(Vec<LabeledSentence>, Vec<FeaturizedSentence>)> {
    if is_feature_file(input)? {
        let corpus = FeaturizedCorpus::load(input)?;
        if corpus.preset != preset {
            return Err(Error::Config(format!(
                "{} was featurized with preset {} but preset {preset} was requested",
                input.display(),
                corpus.preset
            )));
        }
        let sentences = corpus
            .sentences
            .iter()
            .enumerate()
            .map(|(i, s)| LabeledSentence::new(i.to_string(), s.tokens.clone(), s.labels.clone()))
            .collect();
        return Ok((sentences, corpus.sentences));
    }
    check_presence(preset, resources)?;
    let sentences = read_conll(input, format)?;
    let loaded = LoadedResources::load(resources)?;
    let corpus = FeaturizedCorpus::build(&sentences, preset, &loaded.view(resources))?;
    Ok((sentences, corpus.sentences))
}

fn train_cmd(a: TrainArgs, seed: u64) -> CliResult {
    let Some(input) = a.input.as_deref() else {
        check_presence(a.preset, &a.resources)?;
        return Err(CliError::Usage("train needs --in".into()));
    };
    let (_, featurized) = load_input(input, a.format, a.preset, &a.resources)?;
    let config = TrainConfig {
        optim: OptimConfig {
            optimizer: a.optimizer,
            max_iters: a.max_iters,
            tol: a.tol,
            ..Default::default()
        },
        l2: a.l2,
        seed,
        constrain_bio: a.constrain_bio,
    };
    let model = train(&featurized, Some(a.preset), &config)?;
    model.save(&a.out)?;
    println!(
        "features={} iterations={} final_nll={}",
        model.n_features(),
        model.meta.iterations,
        model.meta.final_nll
    );
    Ok(())
}

fn tag(a: TagArgs) -> CliResult {
    let model = CrfModel::load(&a.model)?;
    let preset = match (model.meta.preset, a.preset) {
        (Some(m), Some(p)) if m != p => {
            return Err(Error::Config(format!("model was trained with preset {m}, not {p}")).into())
        }
        (Some(p), _) | (None, Some(p)) => p,
        (None, None) => return Err(CliError::Usage("model records no preset; pass --preset".into())),
    };
    let (mut sentences, featurized) = load_input(&a.input, a.format, preset, &a.resources)?;
    for (s, f) in sentences.iter_mut().zip(&featurized) {
        s.labels = Some(model.decode(&f.features));
    }
    match &a.out {
        Some(out) => write_conll_file(out, &sentences, a.format)?,
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write_conll(&mut lock, &sentences, a.format)?;
            lock.flush().map_err(|e| Error::io("<stdout>", e))?;
        }
    }
    Ok(())
}

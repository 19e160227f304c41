//! The `attnparse` command line: `select`, `parse`, `evaluate` and
//! `validate-archive`.
//!
//! Exit codes: 0 on success, 1 when input data is invalid, 2 for usage and
//! configuration problems (including unreadable or missing files).

use std::ffi::OsString;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::archive::{check_alignment, read_sidecar, ArchiveError, ArchiveReader, AttentionArchive};
use crate::ensemble::{
    build_multi_pool, parse_sentence, select, EnsembleOptions, HeadSelection, Hyperparameters, SelectionDocument,
    Strategy, SubsetInfo, SubsetSize, ValidationItem, ValidationScorer,
};
use crate::eval::{corpus_f1, label_recall, sentence_f1_with, EmptyGoldPolicy, LabelRecallReport, DEFAULT_LABELS};
use crate::scoring::Measure;
use crate::treebank::{
    parse_bracketed, preprocess_all, read_treebank, write_bracketed, GoldSentence, PreprocessConfig,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DATA: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn data(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_DATA,
            message: message.into(),
        }
    }
}

impl From<ArchiveError> for CliError {
    fn from(e: ArchiveError) -> Self {
        match e {
            ArchiveError::Io(_) => CliError::usage(e.to_string()),
            _ => CliError::data(e.to_string()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "attnparse", version, about = "Induce constituency trees from attention maps")]
pub struct Cli {
    /// Increase log verbosity (-v: info, -vv: debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Choose an ensemble of heads on a validation treebank.
    Select(SelectArgs),
    /// Parse sentences with a head selection.
    Parse(ParseArgs),
    /// Score predicted trees against a gold treebank.
    Evaluate(EvaluateArgs),
    /// Check an ATNA archive and report format violations.
    ValidateArchive(ValidateArgs),
}

#[derive(Debug, Args, Default)]
pub struct PreprocessArgs {
    /// Comma-separated POS tags treated as punctuation.
    #[arg(long, value_delimiter = ',')]
    pub punct_tags: Option<Vec<String>>,
    /// Keep punctuation terminals.
    #[arg(long)]
    pub keep_punct: bool,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// TOML file with defaults for any of these options.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// ATNA archive; repeat for several models.
    #[arg(long = "archive")]
    pub archives: Vec<PathBuf>,
    /// Validation treebank, one bracketed tree per line.
    #[arg(long)]
    pub treebank: Option<PathBuf>,
    /// single, layer, topk, greedy or beam.
    #[arg(long)]
    pub strategy: Option<String>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub beam: Option<usize>,
    /// HEL or JSD.
    #[arg(long)]
    pub measure: Option<String>,
    #[arg(long)]
    pub rank_normalize: bool,
    /// Use this many validation sentences.
    #[arg(long, conflicts_with = "subset_fraction")]
    pub subset_count: Option<usize>,
    /// Use this fraction of the validation sentences.
    #[arg(long)]
    pub subset_fraction: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// exclude or score-one.
    #[arg(long)]
    pub empty_gold: Option<String>,
    #[command(flatten)]
    pub preprocess: PreprocessArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; 0 uses all cores.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ParseArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "archive")]
    pub archives: Vec<PathBuf>,
    /// Selection JSON written by `select`.
    #[arg(long)]
    pub selection: Option<PathBuf>,
    /// Treebank supplying the words of each sentence.
    #[arg(long, conflicts_with = "sentences")]
    pub treebank: Option<PathBuf>,
    /// Plain text, one whitespace-tokenized sentence per line.
    #[arg(long)]
    pub sentences: Option<PathBuf>,
    /// Override the measure recorded in the selection.
    #[arg(long)]
    pub measure: Option<String>,
    #[command(flatten)]
    pub preprocess: PreprocessArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Predicted trees, one per line.
    #[arg(long)]
    pub pred: Option<PathBuf>,
    /// Gold treebank.
    #[arg(long)]
    pub gold: Option<PathBuf>,
    /// Comma-separated labels for per-label recall.
    #[arg(long, value_delimiter = ',')]
    pub labels: Option<Vec<String>>,
    #[arg(long)]
    pub empty_gold: Option<String>,
    #[command(flatten)]
    pub preprocess: PreprocessArgs,
    /// Write the JSON report here.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    pub path: PathBuf,
}

/// Values that may come from a config file. Flags take precedence.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub archives: Vec<PathBuf>,
    pub treebank: Option<PathBuf>,
    pub sentences: Option<PathBuf>,
    pub selection: Option<PathBuf>,
    pub strategy: Option<String>,
    pub k: Option<usize>,
    pub beam: Option<usize>,
    pub measure: Option<String>,
    pub rank_normalize: Option<bool>,
    pub subset_count: Option<usize>,
    pub subset_fraction: Option<f64>,
    pub seed: Option<u64>,
    pub empty_gold: Option<String>,
    pub punct_tags: Option<Vec<String>>,
    pub keep_punct: Option<bool>,
    pub labels: Option<Vec<String>>,
    pub pred: Option<PathBuf>,
    pub gold: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub json: Option<PathBuf>,
    pub workers: Option<usize>,
}

fn load_config(path: Option<&Path>) -> CliResult<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn required<T>(value: Option<T>, name: &str) -> CliResult<T> {
    value.ok_or_else(|| CliError::usage(format!("missing required option --{name}")))
}

fn preprocess_config(args: &PreprocessArgs, file: &FileConfig) -> PreprocessConfig {
    let mut cfg = PreprocessConfig::default();
    if let Some(tags) = args.punct_tags.clone().or_else(|| file.punct_tags.clone()) {
        cfg.punctuation_tags = tags;
    }
    if args.keep_punct || file.keep_punct.unwrap_or(false) {
        cfg.remove_punctuation = false;
    }
    cfg
}

fn parse_measure(s: Option<&str>) -> CliResult<Option<Measure>> {
    s.map(|s| s.parse::<Measure>().map_err(|e| CliError::usage(e.to_string())))
        .transpose()
}

fn parse_policy(s: Option<&str>) -> CliResult<EmptyGoldPolicy> {
    match s {
        None | Some("exclude") => Ok(EmptyGoldPolicy::Exclude),
        Some("score-one") => Ok(EmptyGoldPolicy::ScoreOne),
        Some(other) => Err(CliError::usage(format!(
            "unknown empty-gold policy {other:?} (expected exclude or score-one)"
        ))),
    }
}

fn check_exists(path: &Path) -> CliResult<()> {
    if !path.exists() {
        return Err(CliError::usage(format!("no such file: {}", path.display())));
    }
    Ok(())
}

fn load_archives(paths: &[PathBuf]) -> CliResult<Vec<AttentionArchive>> {
    if paths.is_empty() {
        return Err(CliError::usage("at least one --archive is required"));
    }
    let archives = paths
        .iter()
        .map(|p| {
            check_exists(p)?;
            crate::archive::read_archive(p).map_err(|e| match e {
                ArchiveError::Io(io) => CliError::usage(format!("{}: {io}", p.display())),
                other => CliError::data(format!("{}: {other}", p.display())),
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    check_alignment(&archives)?;
    Ok(archives)
}

fn load_gold(path: &Path, cfg: &PreprocessConfig) -> CliResult<Vec<GoldSentence>> {
    check_exists(path)?;
    let file = fs::File::open(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    let trees = read_treebank(BufReader::new(file)).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    Ok(preprocess_all(&trees, cfg))
}

fn write_output(path: Option<&Path>, text: &str, stdout: &mut dyn Write) -> CliResult<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| CliError::usage(format!("{}: {e}", p.display()))),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| CliError::usage(e.to_string())),
    }
}

fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| CliError::usage(e.to_string()))?;
    Ok(pool.install(f))
}

pub fn cmd_select(args: SelectArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let file = load_config(args.config.as_deref())?;
    let archive_paths = if args.archives.is_empty() {
        file.archives.clone()
    } else {
        args.archives.clone()
    };
    let treebank = required(args.treebank.clone().or(file.treebank.clone()), "treebank")?;
    let strategy: Strategy = required(args.strategy.clone().or(file.strategy.clone()), "strategy")?
        .parse()
        .map_err(|e: crate::ensemble::EnsembleError| CliError::usage(e.to_string()))?;
    let hyper = Hyperparameters {
        k: args.k.or(file.k),
        beam: args.beam.or(file.beam),
    };
    let opts = EnsembleOptions {
        measure: parse_measure(args.measure.as_deref().or(file.measure.as_deref()))?.unwrap_or_default(),
        rank_normalize: args.rank_normalize || file.rank_normalize.unwrap_or(false),
    };
    let policy = parse_policy(args.empty_gold.as_deref().or(file.empty_gold.as_deref()))?;
    let pre = preprocess_config(&args.preprocess, &file);
    let size = match (
        args.subset_count.or(file.subset_count),
        args.subset_fraction.or(file.subset_fraction),
    ) {
        (Some(n), _) => SubsetSize::Count(n),
        (None, Some(f)) => SubsetSize::Fraction(f),
        (None, None) => SubsetSize::All,
    };
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let out = args.out.clone().or(file.out.clone());
    let workers = args.workers.or(file.workers);

    let archives = load_archives(&archive_paths)?;
    let gold = load_gold(&treebank, &pre)?;
    let items: Vec<ValidationItem> = gold
        .iter()
        .filter(|g| !g.skipped)
        .map(|g| ValidationItem {
            sentence_id: g.sentence.id as u32,
            z: g.sentence.len(),
            gold: g.spans.clone(),
        })
        .collect();
    let (items, subset) = match size {
        SubsetSize::All => {
            let n = items.len();
            (
                items,
                SubsetInfo {
                    count: n,
                    total: n,
                    seed: None,
                },
            )
        }
        size => {
            crate::ensemble::subsample_validation(&items, size, seed).map_err(|e| CliError::usage(e.to_string()))?
        }
    };
    info!("selecting with {strategy} on {} validation sentences", items.len());

    let selection: HeadSelection = with_workers(workers, || -> CliResult<HeadSelection> {
        let scorer =
            ValidationScorer::new(&archives, &items, opts, policy).map_err(|e| CliError::data(e.to_string()))?;
        let pool = build_multi_pool(&archives, &scorer).map_err(|e| CliError::data(e.to_string()))?;
        let mut sel = select(strategy, &pool, hyper, &scorer).map_err(|e| CliError::usage(e.to_string()))?;
        sel.subset = Some(subset);
        Ok(sel)
    })??;
    for t in &selection.trace {
        info!(
            "round {} [{}] {:.6}{}",
            t.round,
            t.heads.iter().map(|h| h.to_string()).collect::<Vec<_>>().join(" "),
            t.score,
            if t.accepted { " *" } else { "" }
        );
    }
    let model_ids: Vec<String> = archives.iter().map(|a| a.model_id.clone()).collect();
    let doc = SelectionDocument::new(&selection, opts, &model_ids);
    let mut json = serde_json::to_string_pretty(&doc).expect("selection serializes");
    json.push('\n');
    write_output(out.as_deref(), &json, stdout)
}

pub fn cmd_parse(args: ParseArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let file = load_config(args.config.as_deref())?;
    let archive_paths = if args.archives.is_empty() {
        file.archives.clone()
    } else {
        args.archives.clone()
    };
    let selection_path = required(args.selection.clone().or(file.selection.clone()), "selection")?;
    let pre = preprocess_config(&args.preprocess, &file);
    let out = args.out.clone().or(file.out.clone());
    let workers = args.workers.or(file.workers);

    check_exists(&selection_path)?;
    let text = fs::read_to_string(&selection_path)
        .map_err(|e| CliError::usage(format!("{}: {e}", selection_path.display())))?;
    let doc: SelectionDocument =
        serde_json::from_str(&text).map_err(|e| CliError::data(format!("{}: {e}", selection_path.display())))?;
    let archives = load_archives(&archive_paths)?;
    let heads = doc
        .resolve_heads(&archives)
        .map_err(|e| CliError::data(e.to_string()))?;
    if heads.is_empty() {
        return Err(CliError::data("selection contains no heads"));
    }
    let mut opts = doc.options();
    if let Some(m) = parse_measure(args.measure.as_deref())? {
        opts.measure = m;
    }

    let index = archives[0].index_by_id();
    let sentences: Vec<(usize, Vec<String>)> = if let Some(tb) = args.treebank.clone().or(file.treebank.clone()) {
        load_gold(&tb, &pre)?
            .into_iter()
            .filter(|g| !g.skipped)
            .map(|g| (g.sentence.id, g.sentence.words))
            .collect()
    } else if let Some(path) = args.sentences.clone().or(file.sentences.clone()) {
        check_exists(&path)?;
        let f = fs::File::open(&path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        BufReader::new(f)
            .lines()
            .enumerate()
            .map(|(i, l)| {
                l.map(|l| (i, l.split_whitespace().map(String::from).collect::<Vec<_>>()))
                    .map_err(|e| CliError::usage(e.to_string()))
            })
            .filter(|r| !matches!(r, Ok((_, w)) if w.is_empty()))
            .collect::<CliResult<_>>()?
    } else {
        archives[0]
            .sentences
            .iter()
            .map(|s| (s.id as usize, (1..=s.z).map(|i| format!("w{i}")).collect()))
            .collect()
    };

    let mut jobs = Vec::with_capacity(sentences.len());
    for (id, words) in sentences {
        let pos = *index.get(&(id as u32)).ok_or_else(|| {
            CliError::data(format!(
                "sentence {id} is missing from archive {}",
                archives[0].model_id
            ))
        })?;
        let z = archives[0].sentences[pos].z;
        if z != words.len() {
            return Err(CliError::data(format!(
                "sentence {id} has {} words but the archive has {z}",
                words.len()
            )));
        }
        jobs.push((pos, words));
    }
    let lines = with_workers(workers, || {
        jobs.par_iter()
            .map(|(pos, words)| {
                let tree = parse_sentence(&archives, *pos, &heads, opts).map_err(|e| CliError::data(e.to_string()))?;
                write_bracketed(&tree, words).map_err(|e| CliError::data(e.to_string()))
            })
            .collect::<CliResult<Vec<String>>>()
    })??;
    let mut text = lines.join("\n");
    if !text.is_empty() {
        text.push('\n');
    }
    write_output(out.as_deref(), &text, stdout)
}

/// JSON evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub corpus_f1: f64,
    pub sentences: usize,
    pub scored: usize,
    pub skipped_empty_gold: usize,
    pub skipped_empty_after_filtering: usize,
    pub empty_gold_policy: EmptyGoldPolicy,
    pub punctuation_removed: bool,
    pub punctuation_tags: Vec<String>,
    pub label_recall: LabelRecallReport,
    pub toolkit_version: String,
}

impl EvaluationReport {
    pub fn table(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("corpus F1          {:.2}\n", 100.0 * self.corpus_f1));
        s.push_str(&format!("sentences          {}\n", self.sentences));
        s.push_str(&format!("scored             {}\n", self.scored));
        s.push_str(&format!("skipped (no gold)  {}\n", self.skipped_empty_gold));
        s.push_str(&format!("skipped (empty)    {}\n", self.skipped_empty_after_filtering));
        s.push_str(&format!(
            "empty-gold policy  {}\n",
            match self.empty_gold_policy {
                EmptyGoldPolicy::Exclude => "exclude",
                EmptyGoldPolicy::ScoreOne => "score-one",
            }
        ));
        s.push_str("\nlabel    matched     gold   recall\n");
        for (label, r) in &self.label_recall.labels {
            let recall = r
                .recall
                .map_or_else(|| "-".to_string(), |v| format!("{:.2}", 100.0 * v));
            s.push_str(&format!("{label:<8} {:>7} {:>8} {:>8}\n", r.matched, r.gold, recall));
        }
        s
    }
}

pub fn evaluate_corpora(
    pred_lines: &[String],
    gold: &[GoldSentence],
    labels: &[&str],
    policy: EmptyGoldPolicy,
    pre: &PreprocessConfig,
) -> CliResult<EvaluationReport> {
    let kept: Vec<&GoldSentence> = gold.iter().filter(|g| !g.skipped).collect();
    if pred_lines.len() != kept.len() {
        return Err(CliError::usage(format!(
            "prediction has {} trees but gold has {} (after skipping {} empty sentences)",
            pred_lines.len(),
            kept.len(),
            gold.len() - kept.len()
        )));
    }
    let mut preds = Vec::with_capacity(kept.len());
    let mut scores = Vec::with_capacity(kept.len());
    for (i, (line, g)) in pred_lines.iter().zip(&kept).enumerate() {
        let tree = parse_bracketed(line).map_err(|e| CliError::data(format!("prediction line {}: {e}", i + 1)))?;
        let p = crate::treebank::preprocess(&tree, i, pre);
        if p.sentence.len() != g.sentence.len() {
            return Err(CliError::data(format!(
                "prediction line {} has {} words, gold sentence {} has {}",
                i + 1,
                p.sentence.len(),
                g.sentence.id,
                g.sentence.len()
            )));
        }
        scores.push(sentence_f1_with(&p.spans, &g.spans, policy));
        preds.push(p.spans);
    }
    let corpus = corpus_f1(&scores).map_err(|e| CliError::data(e.to_string()))?;
    let gold_spans: Vec<_> = kept.iter().map(|g| g.spans.clone()).collect();
    let recall = label_recall(&preds, &gold_spans, labels).map_err(|e| CliError::usage(e.to_string()))?;
    Ok(EvaluationReport {
        corpus_f1: corpus,
        sentences: gold.len(),
        scored: scores.iter().filter(|s| !s.skipped).count(),
        skipped_empty_gold: scores.iter().filter(|s| s.skipped).count(),
        skipped_empty_after_filtering: gold.len() - kept.len(),
        empty_gold_policy: policy,
        punctuation_removed: pre.remove_punctuation,
        punctuation_tags: pre.punctuation_tags.clone(),
        label_recall: recall,
        toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
    })
}

pub fn cmd_evaluate(args: EvaluateArgs, stdout: &mut dyn Write) -> CliResult<()> {
    let file = load_config(args.config.as_deref())?;
    let pred_path = required(args.pred.clone().or(file.pred.clone()), "pred")?;
    let gold_path = required(args.gold.clone().or(file.gold.clone()), "gold")?;
    let pre = preprocess_config(&args.preprocess, &file);
    let policy = parse_policy(args.empty_gold.as_deref().or(file.empty_gold.as_deref()))?;
    let labels: Vec<String> = args
        .labels
        .clone()
        .or(file.labels.clone())
        .unwrap_or_else(|| DEFAULT_LABELS.iter().map(|s| s.to_string()).collect());
    let labels: Vec<&str> = labels.iter().map(String::as_str).collect();

    check_exists(&pred_path)?;
    let pred_lines: Vec<String> = fs::read_to_string(&pred_path)
        .map_err(|e| CliError::usage(format!("{}: {e}", pred_path.display())))?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(String::from)
        .collect();
    let gold = load_gold(&gold_path, &pre)?;
    let report = evaluate_corpora(&pred_lines, &gold, &labels, policy, &pre)?;
    if let Some(path) = args.json.clone().or(file.json.clone()) {
        let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
        json.push('\n');
        fs::write(&path, json).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    }
    write_output(None, &report.table(), stdout)
}

pub fn cmd_validate_archive(args: ValidateArgs, stdout: &mut dyn Write) -> CliResult<()> {
    check_exists(&args.path)?;
    let f = fs::File::open(&args.path).map_err(|e| CliError::usage(format!("{}: {e}", args.path.display())))?;
    let mut out = String::new();
    let reader = ArchiveReader::unchecked(BufReader::new(f)).map_err(|e| CliError::data(e.to_string()))?;
    let h = reader.header().clone();
    out.push_str(&format!("format version  {}\n", h.version));
    out.push_str(&format!("model           {}\n", h.model_id));
    out.push_str(&format!("layers          {}\n", h.num_layers));
    out.push_str(&format!("heads           {}\n", h.num_heads));
    out.push_str(&format!("sentences       {}\n", h.num_sentences));
    if let Some(sidecar) = read_sidecar(&args.path) {
        match sidecar {
            Ok(p) => out.push_str(&format!("checkpoint      {}\n", p.checkpoint)),
            Err(e) => out.push_str(&format!("sidecar         unreadable: {e}\n")),
        }
    }
    let archive = match reader.into_archive() {
        Ok(a) => a,
        Err(e) => {
            let _ = stdout.write_all(out.as_bytes());
            return Err(CliError::data(e.to_string()));
        }
    };
    let violations = archive.violations();
    for v in &violations {
        out.push_str(&format!("violation: {v}\n"));
    }
    let _ = stdout.write_all(out.as_bytes());
    if violations.is_empty() {
        let _ = writeln!(stdout, "valid");
        Ok(())
    } else {
        Err(CliError::data(format!("{} violation(s)", violations.len())))
    }
}

pub fn execute(cli: Cli, stdout: &mut dyn Write) -> CliResult<()> {
    match cli.command {
        Command::Select(a) => cmd_select(a, stdout),
        Command::Parse(a) => cmd_parse(a, stdout),
        Command::Evaluate(a) => cmd_evaluate(a, stdout),
        Command::ValidateArchive(a) => cmd_validate_archive(a, stdout),
    }
}

/// Parses arguments and runs a command; returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            if e.use_stderr() {
                let _ = write!(stderr, "{e}");
            } else {
                let _ = write!(stdout, "{e}");
            }
            return code;
        }
    };
    match execute(cli, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.message);
            e.code
        }
    }
}

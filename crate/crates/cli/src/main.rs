//! `hierdetect`: the detection pipeline as composable subcommands. Each
//! subcommand reads and writes plain files under `--out`, so experiments are
//! scriptable and diffable.

mod config;
mod table;

use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use hierdetect::corpus::{self, Corpus, CorpusSplit, Document, Label};
use hierdetect::detector::{self, Annotations, Detection, Detector};
use hierdetect::eval::{self, protocols};
use hierdetect::features::{conllu, semantic};
use hierdetect::fusion::{AblationConfig, Level};

use config::{digest, now_unix, RunConfig, RunManifest};
use table::{pct, Table};

#[derive(Parser, Debug)]
#[command(
    name = "hierdetect",
    version,
    about = "Hierarchical machine-generated text detector"
)]
struct Cli {
    /// TOML run configuration; omitted sections use defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the training and split seeds.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Directory for artifacts and the default location of inputs.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
enum Command {
    /// Validate a corpus JSONL file, drop short documents and split it.
    Ingest(IngestArgs),
    /// Generate a synthetic corpus with a controlled entropy gap.
    Synth(SynthArgs),
    /// Write raw per-document features and the fitted LM.
    Extract(DataArgs),
    /// Train the fusion detector on the training split.
    Train(TrainArgs),
    /// Classify one text read from a file or standard input.
    Detect(DetectArgs),
    /// Evaluate a trained model and the baselines on the test split.
    Eval(ModelArgs),
    /// Train on one corpus and test on another, in both directions.
    Crossdomain(CrossArgs),
    /// Retrain with levels or adaptive fusion switched off.
    Ablate(AblateArgs),
    /// Permutation importance of each feature level.
    Importance(ImportanceArgs),
    /// Accuracy before and after synonym replacement.
    Robustness(RobustnessArgs),
    /// Per-stage timing of detection on the test split.
    Bench(BenchArgs),
}

#[derive(Args, Debug, Serialize)]
struct AnnotationArgs {
    /// CoNLL-U parses keyed by document id.
    #[arg(long, value_name = "PATH")]
    parses: Option<PathBuf>,
    /// Sentence embeddings JSONL keyed by document id.
    #[arg(long, value_name = "PATH")]
    embeddings: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct DataArgs {
    /// Corpus JSONL [default: <out>/corpus.jsonl].
    #[arg(long, value_name = "PATH")]
    corpus: Option<PathBuf>,
    /// Train/test split [default: <out>/split.json].
    #[arg(long, value_name = "PATH")]
    split: Option<PathBuf>,
    #[command(flatten)]
    annotations: AnnotationArgs,
}

#[derive(Args, Debug, Serialize)]
struct ModelArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Trained model [default: <out>/model.json].
    #[arg(long, value_name = "PATH")]
    model: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct IngestArgs {
    /// Corpus JSONL with id, text, label, domain and dataset fields.
    #[arg(long, value_name = "PATH")]
    input: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    n_per_class: usize,
    /// Mean word-entropy difference between human and ai text, in bits.
    #[arg(long, default_value_t = 1.5)]
    entropy_gap: f64,
}

#[derive(Args, Debug, Serialize)]
struct LevelArgs {
    /// Levels to enable, comma separated [default: all].
    #[arg(long, value_delimiter = ',', value_name = "LEVELS")]
    levels: Vec<Level>,
    /// Fixed uniform fusion weights instead of learned attention and gates.
    #[arg(long)]
    fixed_fusion: bool,
}

impl LevelArgs {
    fn ablation(&self) -> AblationConfig {
        let mut a = AblationConfig::COMPLETE;
        if !self.levels.is_empty() {
            for l in Level::ALL {
                a.set(l, self.levels.contains(&l));
            }
        }
        a.adaptive_fusion = !self.fixed_fusion;
        a
    }
}

#[derive(Args, Debug, Serialize)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    levels: LevelArgs,
}

#[derive(Args, Debug, Serialize)]
struct DetectArgs {
    /// Text file; reads standard input when omitted or `-`.
    #[arg(long, value_name = "PATH")]
    input: Option<PathBuf>,
    /// Document id used to look up annotations.
    #[arg(long, default_value = "input")]
    id: String,
    /// Trained model [default: <out>/model.json].
    #[arg(long, value_name = "PATH")]
    model: Option<PathBuf>,
    #[command(flatten)]
    annotations: AnnotationArgs,
}

#[derive(Args, Debug, Serialize)]
struct CrossArgs {
    #[arg(long, value_name = "PATH")]
    corpus_a: PathBuf,
    #[arg(long, value_name = "PATH")]
    corpus_b: PathBuf,
    #[arg(long, default_value = "A")]
    name_a: String,
    #[arg(long, default_value = "B")]
    name_b: String,
    #[command(flatten)]
    annotations: AnnotationArgs,
}

#[derive(Clone, Copy, Debug, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
enum Preset {
    /// Six rows from semantic-only to the complete model.
    Paper,
    /// One row per level plus the complete model.
    Singles,
}

#[derive(Args, Debug, Serialize)]
struct AblateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value = "paper")]
    preset: Preset,
}

#[derive(Args, Debug, Serialize)]
struct ImportanceArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Levels to permute, comma separated [default: all].
    #[arg(long, value_delimiter = ',', value_name = "LEVELS")]
    levels: Vec<Level>,
}

#[derive(Args, Debug, Serialize)]
struct RobustnessArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Synonym lexicon JSON [default: <out>/lexicon.json].
    #[arg(long, value_name = "PATH")]
    lexicon: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct BenchArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Time at most this many test documents.
    #[arg(long)]
    limit: Option<usize>,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Synth(_) => "synth",
            Command::Extract(_) => "extract",
            Command::Train(_) => "train",
            Command::Detect(_) => "detect",
            Command::Eval(_) => "eval",
            Command::Crossdomain(_) => "crossdomain",
            Command::Ablate(_) => "ablate",
            Command::Importance(_) => "importance",
            Command::Robustness(_) => "robustness",
            Command::Bench(_) => "bench",
        }
    }
}

/// State of one invocation: resolved config plus the artifacts written.
struct Run {
    out: PathBuf,
    cfg: RunConfig,
    artifacts: Vec<PathBuf>,
}

impl Run {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn or_default(&self, p: &Option<PathBuf>, name: &str) -> PathBuf {
        p.clone().unwrap_or_else(|| self.path(name))
    }

    /// Writes through a temporary file and renames, so a failed run never
    /// leaves a partial artifact under the final name.
    fn emit(&mut self, name: &str, write: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
        let path = self.path(name);
        let tmp = self.path(&format!(".{name}.tmp"));
        write(&tmp)?;
        std::fs::rename(&tmp, &path)
            .with_context(|| format!("cannot move {} into place", path.display()))?;
        self.artifacts.push(path);
        Ok(())
    }

    fn emit_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        self.emit(name, |p| {
            std::fs::write(p, bytes).with_context(|| format!("cannot write {}", p.display()))
        })
    }

    fn emit_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.emit_bytes(name, s.as_bytes())
    }

    fn emit_jsonl<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let mut s = String::new();
        for r in rows {
            s.push_str(&serde_json::to_string(r)?);
            s.push('\n');
        }
        self.emit_bytes(name, s.as_bytes())
    }

    fn emit_table(&mut self, name: &str, t: &Table) -> Result<()> {
        print!("{}", t.render());
        self.emit_bytes(name, t.to_tsv().as_bytes())
    }
}

fn require(path: &Path) -> Result<()> {
    if !path.exists() {
        bail!("missing input: {}", path.display());
    }
    Ok(())
}

fn load_annotations(a: &AnnotationArgs) -> Result<Annotations> {
    let parses = match &a.parses {
        Some(p) => {
            require(p)?;
            Some(conllu::read_conllu(p).with_context(|| format!("reading {}", p.display()))?)
        }
        None => None,
    };
    let embeddings = match &a.embeddings {
        Some(p) => {
            require(p)?;
            Some(semantic::load_embeddings(p).with_context(|| format!("reading {}", p.display()))?)
        }
        None => None,
    };
    Ok(Annotations { parses, embeddings })
}

fn load_corpus(path: &Path, min_words: usize) -> Result<Corpus> {
    require(path)?;
    corpus::ingest(path, min_words).with_context(|| format!("reading corpus {}", path.display()))
}

fn load_model(path: &Path) -> Result<Detector> {
    require(path)?;
    Detector::load(path).with_context(|| format!("reading model {}", path.display()))
}

struct Data {
    corpus: Corpus,
    split: CorpusSplit,
    ann: Annotations,
}

impl Data {
    fn load(run: &Run, a: &DataArgs) -> Result<Data> {
        let corpus = load_corpus(
            &run.or_default(&a.corpus, "corpus.jsonl"),
            run.cfg.split.min_words,
        )?;
        let sp = run.or_default(&a.split, "split.json");
        require(&sp)?;
        let split =
            CorpusSplit::read(&sp).with_context(|| format!("reading split {}", sp.display()))?;
        Ok(Data {
            corpus,
            split,
            ann: load_annotations(&a.annotations)?,
        })
    }

    fn train(&self) -> Result<Vec<&Document>> {
        Ok(self.corpus.select(&self.split.train)?)
    }

    fn test(&self) -> Result<Vec<&Document>> {
        Ok(self.corpus.select(&self.split.test)?)
    }
}

fn metric_cells(m: &eval::Metrics) -> Vec<String> {
    vec![pct(m.accuracy), pct(m.precision), pct(m.recall), pct(m.f1)]
}

fn write_split(run: &mut Run, c: &Corpus) -> Result<CorpusSplit> {
    let s = &run.cfg.split;
    let sp = corpus::split(c, s.test_fraction, s.seed, s.stratify)?;
    run.emit("corpus.jsonl", |p| Ok(c.write_jsonl(p)?))?;
    run.emit("split.json", |p| Ok(sp.write(p)?))?;
    println!(
        "{} documents ({} human, {} ai), {} filtered; split {} train / {} test",
        c.len(),
        c.count(Label::Human),
        c.count(Label::Ai),
        c.filtered,
        sp.train.len(),
        sp.test.len()
    );
    Ok(sp)
}

fn cmd_ingest(run: &mut Run, a: &IngestArgs) -> Result<()> {
    let c = load_corpus(&a.input, run.cfg.split.min_words)?;
    write_split(run, &c)?;
    Ok(())
}

fn cmd_synth(run: &mut Run, a: &SynthArgs) -> Result<()> {
    let seed = run.cfg.split.seed;
    let c = corpus::generate_synthetic(a.n_per_class, a.entropy_gap, seed)?;
    let c = c.subset(
        &c.docs()
            .iter()
            .filter(|d| d.word_count >= run.cfg.split.min_words)
            .map(|d| d.id.clone())
            .collect::<Vec<_>>(),
    )?;
    write_split(run, &c)?;
    run.emit_json("lexicon.json", &corpus::synthetic_lexicon(seed))
}

#[derive(Serialize)]
struct FeatureRecord<'a> {
    id: &'a str,
    label: Label,
    split: &'a str,
    semantic: Vec<f64>,
    syntactic: Vec<f64>,
    statistical: Vec<f64>,
}

fn feature_record<'a>(
    d: &'a Document,
    split: &'a str,
    f: &detector::DocFeatures,
) -> FeatureRecord<'a> {
    FeatureRecord {
        id: &d.id,
        label: d.label,
        split,
        semantic: f.semantic.to_vec(),
        syntactic: f.syntactic.to_vec(),
        statistical: f.statistical.to_vec(),
    }
}

fn cmd_extract(run: &mut Run, a: &DataArgs) -> Result<()> {
    let data = Data::load(run, a)?;
    let fcfg = &run.cfg.features;
    let train = data.train()?;
    let test = data.test()?;
    // Training documents get out-of-fold LM scores, test documents the full LM.
    let (lm, train_feats) = detector::extract_training_features(&train, &data.ann, fcfg)?;
    let mut rows: Vec<FeatureRecord> = train
        .iter()
        .zip(&train_feats)
        .map(|(d, f)| feature_record(d, "train", f))
        .collect();
    let test_feats = test
        .iter()
        .map(|d| Ok(detector::extract_document(d, &data.ann, fcfg, &lm)?))
        .collect::<Result<Vec<_>>>()?;
    rows.extend(
        test.iter()
            .zip(&test_feats)
            .map(|(d, f)| feature_record(d, "test", f)),
    );
    run.emit_jsonl("features.jsonl", &rows)?;
    run.emit("lm.json", |p| Ok(lm.save(p)?))?;
    println!(
        "{} feature records, LM vocabulary {}",
        rows.len(),
        lm.vocab_size()
    );
    Ok(())
}

fn cmd_train(run: &mut Run, a: &TrainArgs) -> Result<()> {
    let data = Data::load(run, &a.data)?;
    let ablation = a.levels.ablation();
    let train = data.train()?;
    let (det, log) = Detector::fit(
        &train,
        &data.ann,
        &run.cfg.features,
        &run.cfg.training,
        &ablation,
    )?;
    run.emit("model.json", |p| Ok(det.save(p)?))?;
    run.emit_jsonl("train_log.jsonl", &log.epochs)?;
    run.emit_jsonl("steps.jsonl", &log.steps)?;
    let last = log.epochs.last().context("training produced no epochs")?;
    println!(
        "trained {} on {} documents: {} epochs, best epoch {}, final loss {:.4}, train accuracy {}",
        ablation.label(),
        train.len(),
        log.epochs.len(),
        log.best_epoch,
        last.loss.total,
        pct(last.train_accuracy)
    );
    Ok(())
}

fn level_summary(d: &Detection) -> serde_json::Value {
    let f = &d.features;
    let t = &d.trace;
    let gate_mean = |i: usize| t.gates[i].iter().sum::<f64>() / t.gates[i].len().max(1) as f64;
    let sem = &f.semantic;
    let syn = &f.syntactic;
    let stat = &f.statistical;
    json!({
        "semantic": {
            "alpha": t.alpha[0],
            "gate_mean": gate_mean(0),
            "dim": t.inputs[0].len(),
            "consistency_var": sem.consistency_var,
            "adjacent_sim_mean": sem.adjacent_sim_mean,
            "by_convention": sem.by_convention,
        },
        "syntactic": {
            "alpha": t.alpha[1],
            "gate_mean": gate_mean(1),
            "dim": t.inputs[1].len(),
            "avg_tree_depth": syn.avg_tree_depth,
            "branching_factor": syn.branching_factor,
            "yngve_depth": syn.yngve_depth,
            "frazier_score": syn.frazier_score,
            "missing_parse": syn.missing_parse,
        },
        "statistical": {
            "alpha": t.alpha[2],
            "gate_mean": gate_mean(2),
            "dim": t.inputs[2].len(),
            "mean_log_prob": stat.mean_log_prob,
            "mean_rank": stat.mean_rank,
            "h_word": stat.h_word,
            "type_token_ratio": stat.type_token_ratio,
        },
    })
}

fn cmd_detect(run: &mut Run, a: &DetectArgs) -> Result<()> {
    let det = load_model(&run.or_default(&a.model, "model.json"))?;
    let mut text = String::new();
    match a.input.as_deref() {
        Some(p) if p != Path::new("-") => {
            require(p)?;
            text =
                std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        }
        _ => {
            std::io::stdin()
                .read_to_string(&mut text)
                .context("reading standard input")?;
        }
    }
    let ann = load_annotations(&a.annotations)?;
    // The gold label of an unseen text is unknown; it plays no part in detection.
    let doc = Document::new(&a.id, text, Label::Human, "", "");
    let d = det.detect(&doc, &ann)?;
    let p = d.posterior();
    let record = json!({
        "id": a.id,
        "label": d.label,
        "posterior": { "human": p[Label::Human.index()], "ai": p[Label::Ai.index()] },
        "alpha": { "semantic": d.alpha()[0], "syntactic": d.alpha()[1], "statistical": d.alpha()[2] },
        "levels": level_summary(&d),
    });
    println!("label: {}", d.label.as_str());
    println!(
        "posterior: human {:.4}  ai {:.4}",
        p[Label::Human.index()],
        p[Label::Ai.index()]
    );
    let mut t = Table::new(["level", "enabled", "alpha", "gate_mean", "summary"]);
    for (i, l) in Level::ALL.iter().enumerate() {
        let s = &record["levels"][l.name()];
        let summary: Vec<String> = s
            .as_object()
            .into_iter()
            .flatten()
            .filter(|(k, _)| !matches!(k.as_str(), "alpha" | "gate_mean"))
            .map(|(k, v)| match v.as_f64() {
                Some(x) if !v.is_u64() => format!("{k}={x:.4}"),
                _ => format!("{k}={v}"),
            })
            .collect();
        t.row([
            l.name().to_string(),
            det.level_enabled(*l).to_string(),
            format!("{:.4}", d.alpha()[i]),
            format!("{:.4}", s["gate_mean"].as_f64().unwrap_or(f64::NAN)),
            summary.join(" "),
        ]);
    }
    print!("{}", t.render());
    run.emit_json("detection.json", &record)
}

fn cmd_eval(run: &mut Run, a: &ModelArgs) -> Result<()> {
    let data = Data::load(run, &a.data)?;
    let det = load_model(&run.or_default(&a.model, "model.json"))?;
    let train = data.train()?;
    let test = data.test()?;
    let mut rows = vec![protocols::DetectorRow {
        detector: protocols::FUSION_NAME.into(),
        metrics: eval::evaluate(&det, &test, &data.ann)?,
    }];
    for (k, m) in
        eval::baseline_detect(&run.cfg.eval.baselines, &train, &test, &det.feature_config)?
    {
        rows.push(protocols::DetectorRow {
            detector: k.name().into(),
            metrics: m,
        });
    }
    let mut t = Table::new(["detector", "accuracy", "precision", "recall", "f1"]);
    for r in &rows {
        let mut cells = vec![r.detector.clone()];
        cells.extend(metric_cells(&r.metrics));
        t.row(cells);
    }
    run.emit_table("table1.tsv", &t)?;
    run.emit_json("eval.json", &rows)?;
    println!("accuracy: {:.4}", rows[0].metrics.accuracy);
    Ok(())
}

fn cmd_crossdomain(run: &mut Run, a: &CrossArgs) -> Result<()> {
    let min = run.cfg.split.min_words;
    let ca = load_corpus(&a.corpus_a, min)?;
    let cb = load_corpus(&a.corpus_b, min)?;
    let ann = load_annotations(&a.annotations)?;
    let rows = eval::cross_domain_both(
        (&a.name_a, &ca),
        (&a.name_b, &cb),
        &ann,
        &run.cfg.features,
        &run.cfg.training,
        &run.cfg.eval.baselines,
    )?;
    let mut t = Table::new([
        "direction",
        "detector",
        "accuracy",
        "precision",
        "recall",
        "f1",
    ]);
    for r in &rows {
        let mut cells = vec![r.direction.clone(), r.detector.clone()];
        cells.extend(metric_cells(&r.metrics));
        t.row(cells);
    }
    run.emit_table("table2.tsv", &t)?;
    run.emit_json("crossdomain.json", &rows)
}

fn cmd_ablate(run: &mut Run, a: &AblateArgs) -> Result<()> {
    let data = Data::load(run, &a.data)?;
    let configs = match a.preset {
        Preset::Paper => eval::ablation_preset(),
        Preset::Singles => {
            let mut c = protocols::single_level_configs();
            c.push(AblationConfig::COMPLETE);
            c
        }
    };
    let rows = eval::ablate(
        &configs,
        &data.train()?,
        &data.test()?,
        &data.ann,
        &run.cfg.features,
        &run.cfg.training,
        &run.cfg.eval.ablation_seeds,
    )?;
    let mut t = Table::new(["configuration", "accuracy", "std", "seeds"]);
    for r in &rows {
        t.row([
            r.label.clone(),
            pct(r.mean_accuracy),
            pct(r.std_accuracy),
            r.seeds.len().to_string(),
        ]);
    }
    run.emit_table("table3.tsv", &t)?;
    run.emit_json("ablation.json", &rows)
}

fn cmd_importance(run: &mut Run, a: &ImportanceArgs) -> Result<()> {
    let data = Data::load(run, &a.model.data)?;
    let det = load_model(&run.or_default(&a.model.model, "model.json"))?;
    let test = data.test()?;
    let levels = if a.levels.is_empty() {
        Level::ALL.to_vec()
    } else {
        a.levels.clone()
    };
    let e = &run.cfg.eval;
    let reports = levels
        .iter()
        .map(|&l| {
            Ok(eval::permutation_importance(
                &det,
                &test,
                &data.ann,
                l,
                e.n_permutations,
                run.cfg.training.seed,
            )?)
        })
        .collect::<Result<Vec<_>>>()?;
    let domains: Vec<String> = reports
        .first()
        .map(|r| r.per_domain.keys().cloned().collect())
        .unwrap_or_default();
    let mut header = vec!["level".to_string(), "mean_drop".into(), "std_drop".into()];
    header.extend(domains.iter().cloned());
    let mut t = Table::new(header);
    for r in &reports {
        let mut cells = vec![
            r.group.name().to_string(),
            pct(r.mean_drop),
            pct(r.std_drop),
        ];
        cells.extend(domains.iter().map(|d| pct(r.per_domain[d].mean_drop)));
        t.row(cells);
    }
    run.emit_table("table4.tsv", &t)?;
    run.emit_json("importance.json", &reports)
}

fn cmd_robustness(run: &mut Run, a: &RobustnessArgs) -> Result<()> {
    let data = Data::load(run, &a.model.data)?;
    let det = load_model(&run.or_default(&a.model.model, "model.json"))?;
    let lp = run.or_default(&a.lexicon, "lexicon.json");
    require(&lp)?;
    let lexicon = eval::robustness::read_lexicon(&lp)?;
    let r = eval::robustness_eval(
        &det,
        &data.test()?,
        &data.ann,
        run.cfg.eval.robustness_rate,
        &lexicon,
        run.cfg.training.seed,
    )?;
    println!(
        "synonym replacement at rate {}: {} of {} eligible words replaced; accuracy {} -> {} ({:+.1})",
        r.rate,
        r.stats.replaced,
        r.stats.eligible,
        pct(r.before.accuracy),
        pct(r.after.accuracy),
        100.0 * r.accuracy_delta
    );
    run.emit_json("robustness.json", &r)
}

fn cmd_bench(run: &mut Run, a: &BenchArgs) -> Result<()> {
    let data = Data::load(run, &a.model.data)?;
    let det = load_model(&run.or_default(&a.model.model, "model.json"))?;
    let mut docs = data.test()?;
    if let Some(n) = a.limit {
        docs.truncate(n);
    }
    let r = eval::benchmark(&det, &docs, &data.ann, run.cfg.eval.bench_repetitions)?;
    let mut t = Table::new(["stage", "total_ms", "ms_per_doc"]);
    for s in &r.stages {
        t.row([
            s.stage.clone(),
            format!("{:.3}", s.total_ms),
            format!("{:.4}", s.ms_per_doc),
        ]);
    }
    t.row([
        "total".to_string(),
        format!("{:.3}", r.total_ms),
        format!("{:.4}", r.total_ms_per_doc),
    ]);
    run.emit_table("table5.tsv", &t)?;
    println!(
        "working set estimate {} bytes, peak RSS {}",
        r.working_set_estimate_bytes,
        r.peak_rss_bytes
            .map_or("unavailable".into(), |b| format!("{b} bytes"))
    );
    run.emit_json("bench.json", &r)
}

fn dispatch(run: &mut Run, cmd: &Command) -> Result<()> {
    match cmd {
        Command::Ingest(a) => cmd_ingest(run, a),
        Command::Synth(a) => cmd_synth(run, a),
        Command::Extract(a) => cmd_extract(run, a),
        Command::Train(a) => cmd_train(run, a),
        Command::Detect(a) => cmd_detect(run, a),
        Command::Eval(a) => cmd_eval(run, a),
        Command::Crossdomain(a) => cmd_crossdomain(run, a),
        Command::Ablate(a) => cmd_ablate(run, a),
        Command::Importance(a) => cmd_importance(run, a),
        Command::Robustness(a) => cmd_robustness(run, a),
        Command::Bench(a) => cmd_bench(run, a),
    }
}

fn run(cli: Cli) -> Result<()> {
    let started_unix = now_unix();
    let cfg = RunConfig::load(cli.config.as_deref(), cli.seed)?;
    std::fs::create_dir_all(&cli.out)
        .with_context(|| format!("cannot create output directory {}", cli.out.display()))?;
    let name = cli.command.name();
    let config_digest = digest(name, &cli.command, &cfg)?;
    let mut run = Run {
        out: cli.out,
        cfg,
        artifacts: Vec::new(),
    };
    dispatch(&mut run, &cli.command)?;
    let manifest = RunManifest {
        command: name.into(),
        config_digest,
        seed: run.cfg.training.seed,
        artifacts: run.artifacts.clone(),
        started_unix,
        finished_unix: now_unix(),
    };
    run.emit_json(&format!("manifest-{name}.json"), &manifest)?;
    std::io::stdout().flush()?;
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

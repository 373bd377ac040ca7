//! Command-line front end. `scirag --help` lists the subcommands.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::chat::{ChatEngine, QueryOptions};
use crate::config::AppConfig;
use crate::embed::{embed_texts, read_vector_cache, write_vector_cache, EmbeddingVector};
use crate::eval::{
    classify_documents, confusion_metrics, find_cycles, judge_all, load_categories, load_truth, pearson_r_squared,
    sample_pairs, sort_by_comparisons, stub_longer_judge, win_ratios, ConfusionMatrix, JudgeKind, SortConfig,
};
use crate::images::{default_group_key, image_id_for, ingest_images, read_manifest, search_images, ImageQuery, ImageSearchParams};
use crate::ingest::{ChunkKind, ChunkParams, DocId};
use crate::llm::ChatModel;
use crate::pipeline::{IngestReport, Pipeline};
use crate::projection::{
    nearest_centroid_agreement, render_displacement_svg, render_scatter_svg, select_highlight, tsne_project,
    write_coords_csv, write_svg, TsneConfig,
};
use crate::prompt::ContextMode;
use crate::retrieval::SimilarityMeasure;
use crate::service::AppState;
use crate::store::CorpusStore;

#[derive(Debug, Parser)]
#[command(name = "scirag", version, about = "Retrieval-augmented chat over scientific papers")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, env = "SCIRAG_CONFIG")]
    pub config: Option<PathBuf>,
    /// Database path, overriding the configuration.
    #[arg(long, global = true)]
    pub db: Option<PathBuf>,
    /// Use deterministic offline providers instead of HTTP ones.
    #[arg(long, global = true)]
    pub mock: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse, chunk, embed and store documents.
    Ingest(IngestArgs),
    /// Build the summary corpus for one or all documents.
    Summarize(SummarizeArgs),
    /// Export stored embeddings to a binary vector cache.
    EmbedCache(EmbedCacheArgs),
    /// Nearest chunks to a text query, or nearest images to an image.
    Search(SearchArgs),
    /// Image ingest and similarity search.
    #[command(subcommand)]
    Images(ImagesCommand),
    /// Interactive chat on stdin.
    Chat(AnswerArgs),
    /// Answer one question and print the cited chunk ids.
    Ask(AskArgs),
    /// Ranking and classification evaluations.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Two-dimensional map of the chunk embeddings.
    Project(ProjectArgs),
    /// Run the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long, conflicts_with = "pdf_dir", required_unless_present = "pdf_dir")]
    pub tei_dir: Option<PathBuf>,
    #[arg(long)]
    pub pdf_dir: Option<PathBuf>,
    #[arg(long, requires = "pdf_dir")]
    pub grobid_url: Option<String>,
    #[arg(long)]
    pub chunk_size: Option<usize>,
    #[arg(long)]
    pub overlap: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    #[arg(long, conflicts_with = "all", required_unless_present = "all")]
    pub doc: Option<String>,
    #[arg(long)]
    pub all: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Raw,
    Summary,
    Both,
}

impl KindArg {
    fn kinds(self) -> &'static [ChunkKind] {
        match self {
            KindArg::Raw => &[ChunkKind::Raw],
            KindArg::Summary => &[ChunkKind::Summary],
            KindArg::Both => &[ChunkKind::Raw, ChunkKind::Summary],
        }
    }
}

#[derive(Debug, Args)]
pub struct EmbedCacheArgs {
    #[arg(long, value_enum, default_value = "raw")]
    pub kind: KindArg,
    #[arg(long, default_value = "cache")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long, conflicts_with = "image", required_unless_present = "image")]
    pub text: Option<String>,
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[arg(short, long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub measure: Option<SimilarityMeasure>,
    /// Chunk corpus searched by a text query.
    #[arg(long, value_enum, default_value = "raw")]
    pub kind: KindArg,
    #[arg(long)]
    pub exclude_group: Option<String>,
    #[arg(long)]
    pub exclude_same_group: bool,
}

#[derive(Debug, Subcommand)]
pub enum ImagesCommand {
    /// Embed and store images listed in a CSV manifest.
    Ingest {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Nearest stored images to a file or a stored image id.
    Search {
        #[arg(long, conflicts_with = "id", required_unless_present = "id")]
        query: Option<PathBuf>,
        #[arg(long)]
        id: Option<u64>,
        #[arg(long, default_value = "euclidean")]
        measure: SimilarityMeasure,
        #[arg(short, long, default_value_t = 5)]
        k: usize,
        #[arg(long)]
        exclude_same_group: bool,
        #[arg(long)]
        exclude_group: Option<String>,
    },
}

#[derive(Debug, Args)]
pub struct AnswerArgs {
    #[arg(long)]
    pub mode: Option<ContextMode>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(short, long)]
    pub k: Option<usize>,
}

impl AnswerArgs {
    fn options(&self) -> QueryOptions {
        QueryOptions {
            k_cap: self.k,
            mode: self.mode,
            temperature: self.temperature,
        }
    }
}

#[derive(Debug, Args)]
pub struct AskArgs {
    #[arg(long)]
    pub query: String,
    #[command(flatten)]
    pub answer: AnswerArgs,
    /// Print the full answer record as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum JudgeArg {
    Stub,
    Llm,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Pairwise judging followed by a ranking that minimises misordered pairs.
    Rank {
        #[arg(long, default_value_t = 818)]
        pairs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "stub")]
        judge: JudgeArg,
        /// CSV `doc_id,value` of an external score to correlate with rank.
        #[arg(long)]
        impact: Option<PathBuf>,
        #[arg(long, default_value = "eval-out")]
        out_dir: PathBuf,
    },
    /// Classify documents and score them against ground truth.
    Classify {
        #[arg(long)]
        categories: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, default_value = "eval-out")]
        out_dir: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DisplacementArg {
    RawVsAugmented,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    #[arg(long, value_enum, default_value = "raw")]
    pub kind: KindArg,
    #[arg(long)]
    pub perplexity: Option<f64>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "scatter.svg")]
    pub out: PathBuf,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Draw how each raw chunk moves once the document name is prepended.
    #[arg(long, value_enum)]
    pub displacement: Option<DisplacementArg>,
    /// Number of documents drawn in colour.
    #[arg(long, default_value_t = 20)]
    pub highlight: usize,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub addr: Option<String>,
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
}

struct Workspace {
    cfg: AppConfig,
    store: Arc<dyn CorpusStore>,
}

impl Workspace {
    fn load(cli: &Cli) -> Result<Self> {
        let mut cfg = AppConfig::load(cli.config.as_deref())?;
        if let Some(db) = &cli.db {
            cfg.store.path = db.clone();
        }
        if cli.mock {
            cfg.text_provider.kind = crate::config::ProviderKind::Mock;
            cfg.chat_provider.kind = crate::config::ProviderKind::Mock;
        }
        cfg.validate()?;
        let store: Arc<dyn CorpusStore> = cfg.open_store()?;
        Ok(Workspace { cfg, store })
    }

    fn pipeline(&self) -> Pipeline {
        let mut p = Pipeline::new(self.store.clone(), self.cfg.text_embedder(), self.cfg.chunking.clone());
        p.batch = self.cfg.engine_config().embed;
        p
    }

    fn engine(&self) -> Result<ChatEngine> {
        Ok(ChatEngine::new(
            self.store.clone(),
            self.cfg.text_embedder(),
            self.cfg.chat_model(),
            self.cfg.engine_config(),
        )?)
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let ctx = Workspace::load(&cli)?;
    match cli.command {
        Command::Ingest(a) => ingest(ctx, a),
        Command::Summarize(a) => summarize(&ctx, a),
        Command::EmbedCache(a) => embed_cache(&ctx, a),
        Command::Search(a) => search(&ctx, a),
        Command::Images(c) => images(&ctx, c),
        Command::Chat(a) => chat(&ctx, a),
        Command::Ask(a) => ask(&ctx, a),
        Command::Eval(c) => eval(&ctx, c),
        Command::Project(a) => project(&ctx, a),
        Command::Serve(a) => serve(ctx, a),
    }
}

fn print_json(v: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn ingest(mut ctx: Workspace, a: IngestArgs) -> Result<()> {
    let params = ChunkParams::new(
        a.chunk_size.unwrap_or(ctx.cfg.chunking.chunk_size),
        a.overlap.unwrap_or(ctx.cfg.chunking.overlap),
    )?;
    ctx.cfg.chunking = params;
    let pipeline = ctx.pipeline();
    let report: IngestReport = match (&a.tei_dir, &a.pdf_dir) {
        (Some(dir), _) => pipeline.ingest_tei_dir(dir)?,
        (None, Some(dir)) => {
            if let Some(url) = a.grobid_url {
                ctx.cfg.grobid_url = Some(url);
            }
            let Some(grobid) = ctx.cfg.grobid() else {
                bail!("--pdf-dir needs --grobid-url or grobid_url in the configuration");
            };
            pipeline.ingest_pdf_dir(dir, &grobid)?
        }
        (None, None) => unreachable!("clap requires one source"),
    };
    for o in &report.ingested {
        println!("{}\t{} chunks\t{}", o.doc_id, o.raw_chunks, o.title);
    }
    for (p, e) in &report.failed {
        eprintln!("skipped {}: {e}", p.display());
    }
    eprintln!("{} ingested, {} failed", report.ingested.len(), report.failed.len());
    Ok(())
}

fn summarize(ctx: &Workspace, a: SummarizeArgs) -> Result<()> {
    let ids: Vec<DocId> = match a.doc {
        Some(d) => vec![DocId(d)],
        None => ctx.store.documents()?.into_iter().map(|d| d.doc_id).collect(),
    };
    let pipeline = ctx.pipeline();
    let llm = ctx.cfg.chat_model();
    let scfg = ctx.cfg.summary_config();
    let mut failed = 0;
    for id in &ids {
        match pipeline.summarize(id, llm.as_ref(), &scfg) {
            Ok(s) => println!(
                "{}\t{} -> {} chunks\tratio {}",
                s.doc_id,
                s.raw_chunks,
                s.summary_chunks,
                s.compression_ratio.map_or("n/a".into(), |r| format!("{r:.3}"))
            ),
            Err(e) => {
                failed += 1;
                eprintln!("{id}: {e}");
            }
        }
    }
    if failed == ids.len() && !ids.is_empty() {
        bail!("every summary failed");
    }
    Ok(())
}

fn embed_cache(ctx: &Workspace, a: EmbedCacheArgs) -> Result<()> {
    let pipeline = ctx.pipeline();
    let model = pipeline.embedder.model_id().to_string();
    for &kind in a.kind.kinds() {
        let (vecs, ids) = pipeline.export_cache(kind, &a.out)?;
        // Round-trip through the single-file format as well.
        let matrix = ctx.store.embedding_matrix(kind, &model)?;
        let vectors = matrix
            .rows()
            .map(|(_, r)| EmbeddingVector::new(model.clone(), r.to_vec()))
            .collect::<Result<Vec<_>, _>>()?;
        let single = a.out.join(format!("{}-{}.bin", crate::store::file_stem(&model), kind.as_str()));
        let bytes = write_vector_cache(&single, &vectors)?;
        let back = read_vector_cache(&single)?;
        if back.len() != vectors.len() {
            bail!("cache {} did not round-trip", single.display());
        }
        println!(
            "{}: {} vectors\t{}\t{}\t{} ({bytes} bytes)",
            kind.as_str(),
            matrix.len(),
            vecs.display(),
            ids.display(),
            single.display()
        );
    }
    Ok(())
}

fn preview(text: &str) -> String {
    let flat: String = text.split_whitespace().collect::<Vec<_>>().join(" ");
    flat.chars().take(120).collect()
}

fn search(ctx: &Workspace, a: SearchArgs) -> Result<()> {
    if let Some(path) = a.image {
        return image_search(
            ctx,
            Some(path),
            None,
            a.measure.unwrap_or(SimilarityMeasure::Euclidean),
            a.k.unwrap_or(5),
            a.exclude_same_group,
            a.exclude_group,
        );
    }
    let query = a.text.unwrap_or_default();
    let engine = ctx.engine()?;
    let measure = a.measure.unwrap_or(SimilarityMeasure::Cosine);
    let k = a.k.unwrap_or(10);
    for &kind in a.kind.kinds() {
        for h in engine.search_text(&query, k, measure, kind)? {
            println!(
                "{}\t{:.4}\t{}\t{}\t{}",
                h.hit.rank,
                h.hit.score,
                h.chunk.chunk.chunk_id,
                h.chunk.display_name,
                preview(&h.chunk.chunk.raw_text)
            );
        }
    }
    Ok(())
}

fn image_search(
    ctx: &Workspace,
    path: Option<PathBuf>,
    id: Option<u64>,
    measure: SimilarityMeasure,
    k: usize,
    exclude_same_group: bool,
    exclude_group: Option<String>,
) -> Result<()> {
    let provider = ctx.cfg.image_embedder();
    let params = ImageSearchParams {
        measure,
        k,
        exclude_same_group,
    };
    let bytes;
    let name;
    let mut exclude_group = exclude_group;
    let query = match (&path, id) {
        (Some(p), _) => {
            let stored = std::fs::canonicalize(p)
                .ok()
                .map(|abs| image_id_for(&abs))
                .filter(|id| ctx.store.image(*id).is_ok());
            match stored {
                Some(id) => ImageQuery::Stored(id),
                None => {
                    if exclude_same_group && exclude_group.is_none() {
                        exclude_group = default_group_key(p);
                    }
                    bytes = std::fs::read(p).with_context(|| format!("reading {}", p.display()))?;
                    name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                    ImageQuery::Bytes { name: &name, bytes: &bytes }
                }
            }
        }
        (None, Some(id)) => ImageQuery::Stored(id),
        (None, None) => bail!("give an image path or an image id"),
    };
    for h in search_images(query, &params, exclude_group.as_deref(), provider.as_ref(), ctx.store.as_ref())? {
        println!(
            "{}\t{:.4}\t{}\t{}\t{}",
            h.hit.rank,
            h.hit.score,
            h.image.image_id,
            h.image.group_key.as_deref().unwrap_or("-"),
            h.image.path.display()
        );
    }
    Ok(())
}

fn images(ctx: &Workspace, c: ImagesCommand) -> Result<()> {
    match c {
        ImagesCommand::Ingest { manifest } => {
            let records = read_manifest(&manifest)?;
            let provider = ctx.cfg.image_embedder();
            let counts = ingest_images(&records, provider.as_ref(), ctx.store.as_ref(), &ctx.cfg.engine_config().retry);
            println!("{} stored, {} failed", counts.ok, counts.failed);
            Ok(())
        }
        ImagesCommand::Search {
            query,
            id,
            measure,
            k,
            exclude_same_group,
            exclude_group,
        } => image_search(ctx, query, id, measure, k, exclude_same_group, exclude_group),
    }
}

fn print_sources(answer: &crate::chat::ChatAnswer) {
    let ids: Vec<String> = answer.provenance.iter().map(|p| p.chunk_id.to_string()).collect();
    println!("\n[chunks: {}]", ids.join(", "));
    for w in &answer.warnings {
        eprintln!("warning: {w}");
    }
}

fn chat(ctx: &Workspace, a: AnswerArgs) -> Result<()> {
    let engine = ctx.engine()?;
    let opts = a.options();
    let session = "cli";
    let stdin = std::io::stdin();
    let mut out = std::io::stdout();
    eprintln!("{} documents loaded. Empty line or Ctrl-D quits.", ctx.store.document_count()?);
    loop {
        eprint!("> ");
        let mut line = String::new();
        if stdin.lock().read_line(&mut line)? == 0 || line.trim().is_empty() {
            return Ok(());
        }
        let history = engine.session(session).turns().to_vec();
        let mut on_delta = |d: &str| {
            let _ = out.write_all(d.as_bytes());
            let _ = out.flush();
        };
        match engine.answer_streaming(line.trim(), &opts, &history, &mut on_delta) {
            Ok(answer) => {
                engine.record_turn(session, line.trim(), &answer.response_text);
                print_sources(&answer);
            }
            Err(e) => eprintln!("error: {e}"),
        }
    }
}

fn ask(ctx: &Workspace, a: AskArgs) -> Result<()> {
    let engine = ctx.engine()?;
    let answer = engine.answer(&a.query, &a.answer.options(), &[])?;
    if a.json {
        return print_json(&answer);
    }
    println!("{}", answer.response_text);
    print_sources(&answer);
    Ok(())
}

fn eval(ctx: &Workspace, c: EvalCommand) -> Result<()> {
    match c {
        EvalCommand::Rank {
            pairs,
            seed,
            judge,
            impact,
            out_dir,
        } => eval_rank(ctx, pairs, seed, judge, impact.as_deref(), &out_dir),
        EvalCommand::Classify {
            categories,
            truth,
            out_dir,
        } => eval_classify(ctx, &categories, &truth, &out_dir),
    }
}

fn eval_rank(
    ctx: &Workspace,
    n_pairs: usize,
    seed: u64,
    judge: JudgeArg,
    impact: Option<&Path>,
    out_dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let mut docs = HashMap::new();
    for d in ctx.store.documents()? {
        docs.insert(d.doc_id.clone(), ctx.store.document(&d.doc_id)?);
    }
    let ids: Vec<DocId> = docs.keys().cloned().collect();
    let pairs = sample_pairs(&ids, n_pairs, seed)?;
    let (llm, kind): (Arc<dyn ChatModel>, JudgeKind) = match judge {
        JudgeArg::Stub => (Arc::new(stub_longer_judge()), JudgeKind::Stub),
        JudgeArg::Llm => (ctx.cfg.chat_model(), JudgeKind::Llm),
    };
    let (records, failures) = judge_all(&pairs, &docs, llm.as_ref(), kind, &ctx.cfg.judge_config())?;
    ctx.store.insert_comparisons(&records)?;
    let state = sort_by_comparisons(
        &records,
        &ids,
        &SortConfig {
            seed,
            ..SortConfig::default()
        },
    )?;
    let cycles = find_cycles(&records);
    let ratios = win_ratios(&records);

    let mut w = csv::Writer::from_path(out_dir.join("ranking.csv"))?;
    w.write_record(["position", "doc_id", "title", "wins", "comparisons"])?;
    for (pos, id) in state.ordering.iter().enumerate() {
        let (wins, total) = ratios.get(id).copied().unwrap_or_default();
        let title = docs.get(id).map(|d| d.title.as_str()).unwrap_or("");
        w.write_record([pos.to_string(), id.to_string(), title.to_string(), wins.to_string(), total.to_string()])?;
    }
    w.flush()?;

    let impact_r2 = match impact {
        Some(path) => {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for row in csv::Reader::from_path(path)?.records() {
                let row = row?;
                let (Some(id), Some(v)) = (row.get(0), row.get(1)) else { continue };
                if let (Some(pos), Ok(v)) = (state.position(&DocId(id.trim().to_string())), v.trim().parse::<f64>()) {
                    xs.push(pos as f64);
                    ys.push(v);
                }
            }
            pearson_r_squared(&xs, &ys)
        }
        None => None,
    };

    let report = json!({
        "documents": ids.len(),
        "pairs_requested": pairs.len(),
        "records": records.len(),
        "failed_pairs": failures.len(),
        "initial_misordered": state.initial_misordered,
        "misordered": state.misordered_count,
        "misordered_fraction": state.misordered_fraction(),
        "passes": state.passes,
        "cycles": cycles,
        "impact_r_squared": impact_r2,
        "seed": seed,
        "judge": kind.as_str(),
    });
    std::fs::write(out_dir.join("rank_report.json"), serde_json::to_string_pretty(&report)?)?;
    print_json(&report)
}

fn pct(v: Option<f64>) -> String {
    v.map_or("undefined".into(), |x| format!("{:.1}", 100.0 * x))
}

fn eval_classify(ctx: &Workspace, categories: &Path, truth: &Path, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let categories = load_categories(categories)?;
    let truth = load_truth(truth)?;
    let mut docs = Vec::new();
    for d in ctx.store.documents()? {
        docs.push(ctx.store.document(&d.doc_id)?);
    }
    let llm = ctx.cfg.chat_model();
    let rows = classify_documents(&docs, &categories, llm.as_ref(), &ctx.cfg.classify_config())?;
    ctx.store.record_classifications(&rows)?;
    let (matrix, abstained) = ConfusionMatrix::from_assignments(&categories, &truth, &rows)?;

    let mut w = csv::Writer::from_path(out_dir.join("classification.csv"))?;
    w.write_record(["doc_id", "predicted", "truth"])?;
    for r in &rows {
        w.write_record([
            r.doc_id.as_str(),
            r.predicted.as_deref().unwrap_or(""),
            truth.get(&r.doc_id).map(String::as_str).unwrap_or(""),
        ])?;
    }
    w.flush()?;

    let metrics: Vec<_> = (0..categories.len()).map(|k| confusion_metrics(&matrix, k)).collect();
    let mut w = csv::Writer::from_path(out_dir.join("metrics.csv"))?;
    w.write_record(["category", "tp", "fp", "fn", "tn", "precision_pct", "recall_pct", "accuracy_pct"])?;
    for m in &metrics {
        w.write_record([
            m.category.clone(),
            m.tp.to_string(),
            m.fp.to_string(),
            m.fn_.to_string(),
            m.tn.to_string(),
            pct(m.precision),
            pct(m.recall),
            pct(m.accuracy),
        ])?;
    }
    w.flush()?;

    let report = json!({
        "classified": matrix.total(),
        "abstained": abstained,
        "matrix": matrix,
        "metrics": metrics,
    });
    std::fs::write(out_dir.join("classify_report.json"), serde_json::to_string_pretty(&report)?)?;
    print_json(&report)
}

fn project(ctx: &Workspace, a: ProjectArgs) -> Result<()> {
    let mut tcfg: TsneConfig = ctx.cfg.projection.clone();
    if let Some(p) = a.perplexity {
        tcfg.perplexity = p;
    }
    if let Some(i) = a.iters {
        tcfg.iterations = i;
    }
    if let Some(s) = a.seed {
        tcfg.seed = s;
    }
    let model = ctx.cfg.text_embedder().model_id().to_string();
    let kinds = if a.displacement.is_some() { &[ChunkKind::Raw][..] } else { a.kind.kinds() };

    let mut row_ids = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for &kind in kinds {
        let m = ctx.store.embedding_matrix(kind, &model)?;
        for (id, r) in m.rows() {
            row_ids.push(id);
            rows.push(r.iter().map(|&v| v as f64).collect());
        }
    }
    let chunk_ids: Vec<_> = row_ids.iter().map(|&id| crate::ingest::ChunkId(id)).collect();
    let chunks = ctx.store.fetch_chunks(&chunk_ids)?;
    let by_id: HashMap<u64, _> = chunks.iter().map(|c| (c.chunk.chunk_id.0, c)).collect();
    let labels: Vec<String> = row_ids
        .iter()
        .map(|id| by_id.get(id).map(|c| c.display_name.clone()).unwrap_or_default())
        .collect();
    let highlight = select_highlight(&labels, a.highlight, tcfg.seed);

    let (svg, coords, ids, out_labels) = match a.displacement {
        None => {
            let out = tsne_project(&rows, &tcfg)?;
            let svg = render_scatter_svg(&out.coords, &labels, &highlight)?;
            (svg, out.coords, row_ids, labels)
        }
        Some(DisplacementArg::RawVsAugmented) => {
            let embedder = ctx.cfg.text_embedder();
            let texts: Vec<&str> = row_ids
                .iter()
                .map(|id| by_id.get(id).map(|c| c.chunk.raw_text.as_str()).unwrap_or(""))
                .collect();
            let plain = embed_texts(&texts, embedder.as_ref(), &ctx.cfg.engine_config().embed)?;
            let plain_rows: Vec<Vec<f64>> =
                plain.iter().map(|v| v.values().iter().map(|&x| x as f64).collect()).collect();
            eprintln!(
                "nearest-centroid agreement: plain {:.3}, name-prepended {:.3}",
                nearest_centroid_agreement(&plain_rows, &labels)?,
                nearest_centroid_agreement(&rows, &labels)?
            );
            let n = rows.len();
            let joint: Vec<Vec<f64>> = plain_rows.into_iter().chain(rows).collect();
            let out = tsne_project(&joint, &tcfg)?;
            let (from, to) = out.coords.split_at(n);
            let svg = render_displacement_svg(from, to, &labels, &highlight)?;
            let mut ids = row_ids.clone();
            ids.extend(&row_ids);
            let mut l = labels.iter().map(|s| format!("{s} (plain)")).collect::<Vec<_>>();
            l.extend(labels.iter().cloned());
            (svg, out.coords, ids, l)
        }
    };
    write_svg(&a.out, &svg)?;
    if let Some(csv_path) = &a.csv {
        write_coords_csv(csv_path, &ids, &out_labels, &coords)?;
    }
    println!("{} points -> {}", coords.len(), a.out.display());
    Ok(())
}

fn serve(ctx: Workspace, a: ServeArgs) -> Result<()> {
    let addr = a.addr.unwrap_or_else(|| ctx.cfg.server.addr.clone());
    let addr = addr.parse().with_context(|| format!("bad address {addr:?}"))?;
    let static_dir = a.static_dir.or_else(|| ctx.cfg.server.static_dir.clone());
    let engine = Arc::new(ctx.engine()?);
    let state = AppState {
        engine,
        pipeline: Arc::new(ctx.pipeline()),
        images: ctx.cfg.image_embedder(),
    };
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(crate::service::serve(addr, state, static_dir))?;
    Ok(())
}

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context};
use artrec_core::ctfidf::{cluster, ctfidf_scores, reduce_dim, topic_words, ClusterAssignment, NMode};
use artrec_core::lda::{coherence_sweep, sweep_to_csv, topic_coherence, Coherence};
use artrec_core::recsys::{engine_full_ranking, fuse, rank_all, EngineMatrices};
use artrec_core::textprep::{build_vocabulary, preprocess_all, Stopwords, TokenizedDoc, Vocabulary};
use artrec_core::{
    build_similarity, load_corpus, load_embeddings, train_lda, Corpus, EmbeddingSet, Engine, FusionMode, LdaModel,
    Ranking,
};
use artrec_service::export;
use artrec_service::matrices::{load_or_build, quantize};
use artrec_service::store::replay_dir;

use crate::config::PipelineConfig;
use crate::{
    BuildSimArgs, Cli, Command, CorpusArgs, EmbeddingArgs, ExportArgs, FuseArgs, NModeArg, OverlapArgs, RecommendArgs,
    ServeArgs, SweepArgs, TopicEngine, TopicsArgs, TrainLdaArgs, Usage,
};

struct Ctx {
    cfg: PipelineConfig,
    seed: u64,
    out: PathBuf,
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(Usage(msg.into()))
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = PipelineConfig::load(cli.config.as_deref())?;
    let seed = cli.seed.unwrap_or(cfg.service.seed);
    let out = cli.out.or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let ctx = Ctx { cfg, seed, out };
    match cli.command {
        Command::Ingest(a) => ingest(&ctx, &a),
        Command::TrainLda(a) => train(&ctx, &a),
        Command::Topics(a) => topics(&ctx, &a),
        Command::CoherenceSweep(a) => sweep(&ctx, &a),
        Command::BuildSim(a) => build_sim(&ctx, &a),
        Command::Recommend(a) => recommend(&ctx, &a),
        Command::Fuse(a) => fuse_cmd(&ctx, &a),
        Command::OverlapReport(a) => overlap(&ctx, &a),
        Command::Serve(a) => serve(ctx, a),
        Command::Export(a) => export_cmd(&ctx, &a),
    }
}

impl Ctx {
    fn artifact(&self, name: &str, contents: impl AsRef<[u8]>) -> anyhow::Result<PathBuf> {
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        let path = self.out.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        tracing::info!(path = %path.display(), "wrote");
        Ok(path)
    }

    fn corpus(&self, path: Option<&Path>) -> anyhow::Result<Corpus> {
        let path = path.unwrap_or(&self.cfg.service.corpus);
        load_corpus(path).with_context(|| format!("loading corpus {}", path.display()))
    }

    fn stopwords(&self, args: &CorpusArgs) -> anyhow::Result<Stopwords> {
        match args.stopwords.as_ref().or(self.cfg.stopwords.as_ref()) {
            Some(p) => Stopwords::from_file(p).with_context(|| format!("stopwords {}", p.display())),
            None => Ok(Stopwords::english()),
        }
    }

    /// Corpus, preprocessed documents and vocabulary.
    fn documents(&self, args: &CorpusArgs) -> anyhow::Result<(Corpus, Vec<TokenizedDoc>, Vocabulary)> {
        let corpus = self.corpus(args.corpus.as_deref())?;
        let docs = preprocess_all(corpus.paintings(), &self.stopwords(args)?);
        let min_count = args.min_count.unwrap_or(self.cfg.lda.min_count);
        let vocab = build_vocabulary(&docs, min_count)?;
        Ok((corpus, docs, vocab))
    }

    fn mode(&self, flag: Option<&str>) -> anyhow::Result<FusionMode> {
        match flag {
            Some(s) => FusionMode::from_str(s).map_err(|e| usage(e.to_string())),
            None => Ok(self.cfg.service.fusion),
        }
    }

    fn r(&self, flag: Option<usize>) -> usize {
        flag.unwrap_or(self.cfg.service.r)
    }
}

fn parse_engine(s: &str) -> anyhow::Result<Engine> {
    Engine::from_str(s).map_err(|e| usage(e.to_string()))
}

fn parse_base_engine(s: &str) -> anyhow::Result<Engine> {
    let e = parse_engine(s)?;
    if e.components().is_some() {
        return Err(usage(format!("{e} is a fused engine; expected lda, bert or resnet")));
    }
    Ok(e)
}

fn ingest(ctx: &Ctx, args: &CorpusArgs) -> anyhow::Result<()> {
    let (corpus, docs, vocab) = ctx.documents(args)?;
    let mut tokens = String::new();
    for d in &docs {
        let _ = writeln!(tokens, "{}\t{}", d.painting_id, d.tokens.join(" "));
    }
    let mut words = String::new();
    for w in vocab.words() {
        let _ = writeln!(words, "{w}\t{}", vocab.count(w).unwrap_or(0));
    }
    ctx.artifact("tokens.tsv", tokens)?;
    ctx.artifact("vocabulary.tsv", words)?;
    let groups = corpus.story_groups().count();
    let uncategorized = corpus.paintings().iter().filter(|p| p.story_group.is_none()).count();
    let total: usize = docs.iter().map(|d| d.tokens.len()).sum();
    let empty = docs.iter().filter(|d| d.tokens.is_empty()).count();
    println!("paintings      {}", corpus.len());
    println!("story groups   {groups}");
    println!("uncategorized  {uncategorized}");
    println!("tokens         {total}");
    println!("empty docs     {empty}");
    println!("vocabulary     {}", vocab.len());
    Ok(())
}

fn topic_listing(model: &LdaModel, coherence: &Coherence, n_top: usize) -> String {
    let c = &model.config;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "# LDA k={} alpha={} beta={} iterations={} burn_in={} seed={}",
        c.k, c.alpha, c.beta, c.iterations, c.burn_in, c.seed
    );
    let _ = writeln!(s, "# mean coherence (top {n_top} words) = {:.4}", coherence.mean);
    for t in 0..model.k() {
        let _ = writeln!(s, "topic {t}  coherence {:.4}", coherence.per_topic[t]);
        for (w, p) in model.top_words(t, n_top) {
            let _ = writeln!(s, "  {w:<20} {p:.4}");
        }
    }
    s
}

fn train(ctx: &Ctx, args: &TrainLdaArgs) -> anyhow::Result<()> {
    let (corpus, docs, vocab) = ctx.documents(&args.corpus)?;
    let mut section = ctx.cfg.lda.clone();
    if let Some(k) = args.k {
        section.k = k;
        section.alpha = None;
    }
    section.alpha = args.alpha.or(section.alpha);
    section.beta = args.beta.unwrap_or(section.beta);
    section.iterations = args.iters.unwrap_or(section.iterations);
    section.burn_in = args.burn_in.or(section.burn_in.filter(|_| args.iters.is_none()));
    let config = section.to_config(ctx.seed);
    config.validate().map_err(|e| usage(e.to_string()))?;
    let n_top = args.top_n.unwrap_or(section.n_top).clamp(2, vocab.len().max(2));

    let model = train_lda(&docs, &vocab, config)?;
    let coherence = topic_coherence(&model, &docs, n_top.min(model.vocab_size()))?;

    fs::create_dir_all(&ctx.out)?;
    let model_path = ctx.out.join("lda_model.json");
    model.save(&model_path)?;
    let rows = corpus
        .ids()
        .map(|id| Ok((id.to_string(), model.doc_embedding(id)?.to_vec())))
        .collect::<anyhow::Result<Vec<_>>>()?;
    EmbeddingSet::new(Engine::Lda.as_str(), rows)?.save(ctx.out.join("lda.tsv"))?;
    ctx.artifact("lda_topics.txt", topic_listing(&model, &coherence, n_top))?;

    println!("trained k={} on {} documents, vocabulary {}", model.k(), model.num_docs(), model.vocab_size());
    println!("mean coherence {:.4}", coherence.mean);
    println!("model      {}", model_path.display());
    println!("embeddings {}", ctx.out.join("lda.tsv").display());
    Ok(())
}

fn topics(ctx: &Ctx, args: &TopicsArgs) -> anyhow::Result<()> {
    match args.engine {
        TopicEngine::Lda => {
            let path = args.model.clone().unwrap_or_else(|| ctx.out.join("lda_model.json"));
            let model = LdaModel::load(&path).with_context(|| format!("loading model {}", path.display()))?;
            let n_top = args.top_n.unwrap_or(ctx.cfg.lda.n_top).clamp(2, model.vocab_size().max(2));
            let (_, docs, _) = ctx.documents(&args.corpus)?;
            let coherence = topic_coherence(&model, &docs, n_top.min(model.vocab_size()))?;
            let text = topic_listing(&model, &coherence, n_top);
            ctx.artifact("topics_lda.txt", &text)?;
            print!("{text}");
        }
        TopicEngine::Bert => {
            let mut section = ctx.cfg.ctfidf.clone();
            section.target_dim = args.target_dim.unwrap_or(section.target_dim);
            section.min_cluster_size = args.min_cluster_size.unwrap_or(section.min_cluster_size);
            section.cutoff_quantile = args.cutoff_quantile.unwrap_or(section.cutoff_quantile);
            section.log_base = args.log_base.or(section.log_base);
            if let Some(m) = args.n_mode {
                section.n_mode = match m {
                    NModeArg::Average => NMode::Average,
                    NModeArg::PerClassTotal => NMode::PerClassTotal,
                };
            }
            if !(section.cutoff_quantile > 0.0 && section.cutoff_quantile < 1.0) {
                return Err(usage("--cutoff-quantile must be in (0, 1)"));
            }
            if let Some(b) = section.log_base {
                if !(b > 0.0 && b != 1.0) {
                    return Err(usage("--log-base must be positive and not 1"));
                }
            }
            let top_n = args.top_n.unwrap_or(section.top_n);
            let (corpus, docs, _) = ctx.documents(&args.corpus)?;
            let path = args
                .embeddings
                .clone()
                .or_else(|| ctx.cfg.service.embeddings.bert.clone())
                .ok_or_else(|| usage("no embeddings: pass --embeddings or set embeddings.bert in the config"))?;
            let set = load_embeddings(&path, &corpus).with_context(|| format!("embeddings {}", path.display()))?;
            let config = section.to_config();
            let reduced = reduce_dim(&set, config.target_dim)?;
            let assignment = cluster(&reduced, config.min_cluster_size, config.cutoff_quantile)?;
            let scores = ctfidf_scores(&docs, &assignment, &config)?;
            let mut text = cluster_header(&assignment, &section);
            for c in 0..assignment.num_clusters {
                let _ = writeln!(text, "cluster {c}  ({} paintings)", assignment.members(c).count());
                for (w, s) in topic_words(&scores, c, top_n)? {
                    let _ = writeln!(text, "  {w:<20} {s:.4}");
                }
            }
            ctx.artifact("topics_bert.txt", &text)?;
            print!("{text}");
        }
    }
    Ok(())
}

fn cluster_header(a: &ClusterAssignment, s: &crate::config::CtfidfSection) -> String {
    let base = s.log_base.map_or("e".to_string(), |b| b.to_string());
    format!(
        "# c-TF-IDF clusters={} noise={} target_dim={} min_cluster_size={} cutoff_quantile={} n_mode={:?} log_base={base}\n",
        a.num_clusters,
        a.noise_count(),
        s.target_dim,
        s.min_cluster_size,
        s.cutoff_quantile,
        s.n_mode
    )
}

fn sweep(ctx: &Ctx, args: &SweepArgs) -> anyhow::Result<()> {
    if args.k_min < 2 || args.k_min > args.k_max {
        return Err(usage(format!("need 2 ≤ --k-min ≤ --k-max (got {}..{})", args.k_min, args.k_max)));
    }
    let (_, docs, vocab) = ctx.documents(&args.corpus)?;
    let mut section = ctx.cfg.lda.clone();
    section.iterations = args.iters.unwrap_or(section.iterations);
    section.burn_in = args.burn_in.or(section.burn_in.filter(|_| args.iters.is_none()));
    section.k = args.k_min;
    let base = section.to_config(ctx.seed);
    base.validate().map_err(|e| usage(e.to_string()))?;
    let n_top = args.n_top.unwrap_or(section.n_top);
    if n_top < 2 {
        return Err(usage("--n-top must be ≥ 2"));
    }
    let rows = coherence_sweep(&docs, &vocab, args.k_min..=args.k_max, base, n_top, args.keep_alpha)?;
    let csv = sweep_to_csv(&rows);
    ctx.artifact("coherence_sweep.csv", &csv)?;
    print!("{csv}");
    Ok(())
}

fn build_sim(ctx: &Ctx, args: &BuildSimArgs) -> anyhow::Result<()> {
    let engine = parse_base_engine(&args.engine)?;
    let corpus = ctx.corpus(args.corpus.as_deref())?;
    let path = args
        .embeddings
        .clone()
        .or_else(|| configured_embeddings(&ctx.cfg, engine))
        .ok_or_else(|| usage(format!("no embeddings for {engine}: pass --embeddings")))?;
    let set = load_embeddings(&path, &corpus).with_context(|| format!("embeddings {}", path.display()))?;
    let mut m = build_similarity(&set)?;
    m.engine_id = engine.as_str().to_string();
    let m = quantize(m);
    fs::create_dir_all(&ctx.out)?;
    let dest = ctx.out.join(format!("{engine}.sim"));
    m.save_cache(&dest)?;
    println!("{engine}: {} paintings, dim {} -> {}", m.len(), set.dim, dest.display());
    Ok(())
}

fn configured_embeddings(cfg: &PipelineConfig, engine: Engine) -> Option<PathBuf> {
    let e = &cfg.service.embeddings;
    match engine {
        Engine::Lda => e.lda.clone(),
        Engine::Bert => e.bert.clone(),
        Engine::Resnet => e.resnet.clone(),
        _ => None,
    }
}

/// Loads the matrices for the given base engines only.
fn load_matrices(ctx: &Ctx, src: &EmbeddingArgs, corpus: &Corpus, engines: &[Engine]) -> anyhow::Result<EngineMatrices> {
    let cache = src.cache_dir.clone().or_else(|| ctx.cfg.service.cache_dir.clone());
    let mut out = EngineMatrices::new();
    for &e in engines {
        let flag = match e {
            Engine::Lda => &src.lda,
            Engine::Bert => &src.bert,
            _ => &src.resnet,
        };
        // an explicit embeddings flag bypasses the cache
        let (path, cache) = match flag {
            Some(p) => (Some(p.clone()), None),
            None => (configured_embeddings(&ctx.cfg, e), cache.clone()),
        };
        let m = load_or_build(e, path.as_deref(), corpus, cache.as_deref())?;
        out.insert(e, m)?;
    }
    Ok(out)
}

fn ranking_tsv(ranking: &Ranking, corpus: &Corpus) -> String {
    let mut s = String::from("rank\tpainting_id\tscore\ttitle\n");
    for (i, (id, score)) in ranking.items.iter().enumerate() {
        let title = corpus.get(id).map_or("", |p| p.title.as_str());
        let _ = writeln!(s, "{}\t{id}\t{score:.6}\t{title}", i + 1);
    }
    s
}

fn check_r(r: usize, ranking_len: usize) -> anyhow::Result<()> {
    if r == 0 || r > ranking_len {
        return Err(usage(format!("--r must be in 1..={ranking_len}")));
    }
    Ok(())
}

fn recommend(ctx: &Ctx, args: &RecommendArgs) -> anyhow::Result<()> {
    let engine = parse_engine(&args.engine)?;
    let mode = ctx.mode(args.mode.as_deref())?;
    let r = ctx.r(args.r);
    let corpus = ctx.corpus(args.sources.corpus.as_deref())?;
    let ratings = crate::ratings::load(&args.ratings, &corpus)?;
    let bases: Vec<Engine> = match engine.components() {
        Some((a, b)) => vec![a, b],
        None => vec![engine],
    };
    let matrices = load_matrices(ctx, &args.sources, &corpus, &bases)?;
    let full = engine_full_ranking(engine, &ratings, &matrices, mode)?;
    check_r(r, full.len())?;
    let top = full.truncated(r);
    let tsv = ranking_tsv(&top, &corpus);
    ctx.artifact(&format!("recommendations_{}.tsv", engine.as_str().replace('+', "_")), &tsv)?;
    print!("{}", tsv.split_once('\n').map_or("", |(_, rest)| rest));
    Ok(())
}

fn fuse_cmd(ctx: &Ctx, args: &FuseArgs) -> anyhow::Result<()> {
    let (a, b) = (parse_base_engine(&args.a)?, parse_base_engine(&args.b)?);
    if a == b {
        return Err(usage("--a and --b must differ"));
    }
    if !(args.wa >= 0.0 && args.wb >= 0.0 && (args.wa + args.wb - 1.0).abs() < 1e-9) {
        return Err(usage(format!("weights must be ≥ 0 and sum to 1 (got {} + {})", args.wa, args.wb)));
    }
    let mode = ctx.mode(args.mode.as_deref())?;
    let r = ctx.r(args.r);
    let corpus = ctx.corpus(args.sources.corpus.as_deref())?;
    let ratings = crate::ratings::load(&args.ratings, &corpus)?;
    let matrices = load_matrices(ctx, &args.sources, &corpus, &[a, b])?;
    let ra = rank_all(matrices.get(a)?, &ratings)?;
    let rb = rank_all(matrices.get(b)?, &ratings)?;
    check_r(r, ra.len())?;
    let fused = fuse(&ra, &rb, args.wa, args.wb, r, mode)?;
    let tsv = ranking_tsv(&fused, &corpus);
    ctx.artifact(&format!("fused_{a}_{b}.tsv"), &tsv)?;
    print!("{}", tsv.split_once('\n').map_or("", |(_, rest)| rest));
    Ok(())
}

type UserRankings = BTreeMap<String, BTreeMap<String, Vec<String>>>;

/// A rankings CSV file, a directory holding one, or an event-log directory.
fn read_sessions(path: &Path) -> anyhow::Result<UserRankings> {
    let csv = if path.is_file() {
        Some(path.to_path_buf())
    } else {
        Some(path.join("rankings.csv")).filter(|p| p.is_file())
    };
    match csv {
        Some(p) => {
            let f = fs::File::open(&p).with_context(|| format!("opening {}", p.display()))?;
            export::read_rankings_csv(f).with_context(|| format!("reading {}", p.display()))
        }
        None if path.is_dir() => {
            let sessions = replay_dir(path).with_context(|| format!("replaying {}", path.display()))?;
            Ok(export::rankings_map(&sessions))
        }
        None => bail!("{} does not exist", path.display()),
    }
}

fn overlap(ctx: &Ctx, args: &OverlapArgs) -> anyhow::Result<()> {
    let p = args.p.unwrap_or(ctx.cfg.rbo_p);
    if !(p > 0.0 && p < 1.0) {
        return Err(usage("--p must be in (0, 1)"));
    }
    let rankings = read_sessions(&args.sessions)?;
    let report = artrec_core::metrics::overlap_report(&rankings, p)?;
    let table = report.to_table();
    ctx.artifact("overlap_report.txt", &table)?;
    ctx.artifact("overlap_report.csv", report.to_csv())?;
    print!("{table}");
    Ok(())
}

fn serve(ctx: Ctx, args: ServeArgs) -> anyhow::Result<()> {
    let mut cfg = ctx.cfg.service;
    cfg.seed = ctx.seed;
    if let Some(p) = args.port {
        cfg.port = p;
    }
    if let Some(b) = args.bind {
        cfg.bind = b;
    }
    if let Some(d) = args.data_dir {
        cfg.data_dir = d;
    }
    cfg.validate()?;
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(artrec_service::http::serve(cfg))?;
    Ok(())
}

fn export_cmd(ctx: &Ctx, args: &ExportArgs) -> anyhow::Result<()> {
    let dir = args.data_dir.as_ref().unwrap_or(&ctx.cfg.service.data_dir);
    if !dir.is_dir() {
        bail!("{} is not a directory", dir.display());
    }
    let sessions = replay_dir(dir).with_context(|| format!("replaying {}", dir.display()))?;
    let bundle = export::bundle(&sessions);
    ctx.artifact("feedback.csv", export::feedback_csv(&sessions)?)?;
    ctx.artifact("rankings.csv", export::rankings_csv(&sessions)?)?;
    ctx.artifact("export.json", serde_json::to_string_pretty(&bundle)? + "\n")?;
    let complete = sessions.values().filter(|s| s.is_complete()).count();
    println!("sessions {} (complete {complete})", sessions.len());
    println!("feedback rows {}", bundle.feedback.len());
    println!("wrote {}", ctx.out.display());
    Ok(())
}

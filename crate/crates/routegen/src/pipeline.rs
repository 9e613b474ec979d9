//! End-to-end orchestration: prepare data, train the three models, generate
//! instructions for a (map, path) query, and evaluate with BLEU.

use std::collections::BTreeMap;
use std::path::{Path as FsPath, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cas::{tokenize_cas, CasCommand};
use crate::content_select::{
    extract_context, extract_properties, spectral_cluster, train_irl, IrlConfig, IrlDemo,
    IrlError, IrlHyper, IrlModel,
};
use crate::corpus::{build_vocab, tokenize_english, CorpusError, Demonstration, Vocab, BOS, EOS};
use crate::lm::{sequence_instruction, LanguageModel, LmConfig};
use crate::metrics::{evaluate as bleu_evaluate, BleuReport};
use crate::neural::{
    load_checkpoint, meta_strings, save_checkpoint, CheckpointError, OptimError,
};
use crate::planner::{instantiate_scored, plan, structure_segment_kind, PlannerConfig};
use crate::realize::{RealizeConfig, Seq2SeqModel};
use crate::worldmodel::{segment_path, shortest_path, Path, Pose, SearchError, WorldMap};

fn default_kc() -> usize { 100 }
fn default_pt() -> f64 { 0.99 }
fn default_ke() -> usize { 128 }
fn default_lt() -> f64 { 95.0 }
fn default_beam() -> usize { 2 }
fn default_layers() -> usize { 2 }
fn default_hidden() -> usize { 128 }
fn default_seed() -> u64 { 0 }
fn default_clusters() -> usize { 5 }

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub dataset_dir: PathBuf,
    pub checkpoint_dir: PathBuf,
    pub k_c: usize,
    pub p_t: f64,
    pub k_e: usize,
    pub l_t: f64,
    pub beam_width: usize,
    pub layers: usize,
    pub hidden: usize,
    pub seed: u64,
    /// Spectral clusters used to deduplicate retrieved structures.
    pub clusters: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            dataset_dir: PathBuf::from("dataset"),
            checkpoint_dir: PathBuf::from("checkpoints"),
            k_c: default_kc(),
            p_t: default_pt(),
            k_e: default_ke(),
            l_t: default_lt(),
            beam_width: default_beam(),
            layers: default_layers(),
            hidden: default_hidden(),
            seed: default_seed(),
            clusters: default_clusters(),
        }
    }
}

impl PipelineConfig {
    pub fn planner(&self) -> PlannerConfig {
        PlannerConfig {
            p_threshold: self.p_t,
            ..PlannerConfig::default()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainParams {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            epochs: 30,
            lr: 0.003,
            batch: 16,
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("corpus error: {0}")]
    Corpus(#[from] CorpusError),
    #[error("checkpoint error: {0}")]
    Checkpoint(#[from] CheckpointError),
    #[error("irl error: {0}")]
    Irl(#[from] IrlError),
    #[error("optimizer error: {0}")]
    Optim(#[from] OptimError),
    #[error("search error: {0}")]
    Search(#[from] SearchError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Other(String),
}

/// Per-segment (command, sentence) pairs from a list of demonstrations.
pub fn segment_pairs(demos: &[Demonstration]) -> Vec<(CasCommand, String)> {
    let mut out = Vec::new();
    for d in demos {
        for (c, s) in d.cas.iter().zip(d.instruction.iter()) {
            out.push((c.clone(), s.clone()));
        }
    }
    out
}

/// IRL training examples: a (context, property, structure) triple per
/// demonstrated segment.
pub fn irl_demos(
    demos: &[Demonstration],
    maps: &BTreeMap<String, WorldMap>,
) -> Vec<IrlDemo> {
    let mut out = Vec::new();
    for d in demos {
        let Some(map) = maps.get(&d.map_id) else { continue };
        let Ok(path) = Path::new(map, d.poses.clone()) else { continue };
        for (i, cmd) in d.cas.iter().enumerate() {
            let context = extract_context(map, &path, i);
            let structure = cmd.structure_of();
            let property = extract_properties(&structure, Some(cmd));
            out.push(IrlDemo {
                context,
                property,
                structure,
            });
        }
    }
    out
}

pub fn train_irl_model(
    demos: &[Demonstration],
    maps: &BTreeMap<String, WorldMap>,
    config: &PipelineConfig,
) -> Result<IrlModel, PipelineError> {
    let examples = irl_demos(demos, maps);
    let model = train_irl(
        &examples,
        &IrlHyper::default(),
        IrlConfig {
            k_c: config.k_c,
            gamma: 0.95,
        },
    )?;
    Ok(model)
}

/// Trained realizer plus its vocabularies.
pub struct TextGenerator {
    pub model: Seq2SeqModel,
    pub src_vocab: Vocab,
    pub tgt_vocab: Vocab,
}

impl TextGenerator {
    pub fn encode_command(&self, cmd: &CasCommand) -> Vec<usize> {
        self.src_vocab.encode(&tokenize_cas(cmd).tokens)
    }

    pub fn decode_sentence(&self, ids: &[usize]) -> String {
        self.tgt_vocab.decode(ids).join(" ")
    }
}

fn vocab_meta(src: &Vocab, tgt: &Vocab, extra: &[(&str, serde_json::Value)]) -> BTreeMap<String, serde_json::Value> {
    let mut meta = BTreeMap::new();
    meta.insert("src_vocab".into(), serde_json::json!(src.words()));
    meta.insert("tgt_vocab".into(), serde_json::json!(tgt.words()));
    for (k, v) in extra {
        meta.insert((*k).to_string(), v.clone());
    }
    meta
}

pub fn train_seq2seq_model(
    pairs: &[(CasCommand, String)],
    config: &PipelineConfig,
    params: &TrainParams,
    use_aligner: bool,
) -> Result<(TextGenerator, Vec<f64>), PipelineError> {
    if pairs.is_empty() {
        return Err(PipelineError::Other("no training pairs".into()));
    }
    let src_tokens: Vec<Vec<String>> = pairs.iter().map(|(c, _)| tokenize_cas(c).tokens).collect();
    let tgt_tokens: Vec<Vec<String>> = pairs.iter().map(|(_, s)| tokenize_english(s)).collect();
    let src_vocab = build_vocab(&src_tokens, 1);
    let tgt_vocab = build_vocab(&tgt_tokens, 1);
    let rc = RealizeConfig {
        src_vocab_size: src_vocab.len(),
        tgt_vocab_size: tgt_vocab.len(),
        embed: config.k_e,
        hidden: config.hidden,
        layers: config.layers,
        use_aligner,
        bos: BOS,
        eos: EOS,
        max_len: 40,
    };
    let mut model = Seq2SeqModel::new(rc, config.seed);
    let data: Vec<(Vec<usize>, Vec<usize>)> = src_tokens
        .iter()
        .zip(tgt_tokens.iter())
        .map(|(s, t)| (src_vocab.encode(s), tgt_vocab.encode(t)))
        .collect();
    let losses = model.train(&data, params.epochs, params.lr, params.batch, config.seed)?;
    Ok((
        TextGenerator {
            model,
            src_vocab,
            tgt_vocab,
        },
        losses,
    ))
}

pub fn save_seq2seq(path: &FsPath, g: &TextGenerator) -> Result<(), PipelineError> {
    let meta = vocab_meta(
        &g.src_vocab,
        &g.tgt_vocab,
        &[("realize_config", serde_json::to_value(&g.model.config).unwrap())],
    );
    save_checkpoint(path, &g.model.store, &meta)?;
    Ok(())
}

pub fn load_seq2seq(path: &FsPath) -> Result<TextGenerator, PipelineError> {
    let ckpt = load_checkpoint(path)?;
    let config: RealizeConfig = serde_json::from_value(
        ckpt.meta
            .get("realize_config")
            .cloned()
            .ok_or_else(|| PipelineError::Other("checkpoint missing realize_config".into()))?,
    )
    .map_err(|e| PipelineError::Other(e.to_string()))?;
    let src = meta_strings(&ckpt.meta, "src_vocab")
        .ok_or_else(|| PipelineError::Other("checkpoint missing src_vocab".into()))?;
    let tgt = meta_strings(&ckpt.meta, "tgt_vocab")
        .ok_or_else(|| PipelineError::Other("checkpoint missing tgt_vocab".into()))?;
    Ok(TextGenerator {
        model: Seq2SeqModel::from_parts(config, ckpt.store),
        src_vocab: Vocab::from_words(src),
        tgt_vocab: Vocab::from_words(tgt),
    })
}

pub struct FluencyRanker {
    pub model: LanguageModel,
    pub vocab: Vocab,
}

pub fn train_lm_model(
    sentences: &[String],
    config: &PipelineConfig,
    params: &TrainParams,
) -> Result<(FluencyRanker, Vec<f64>), PipelineError> {
    if sentences.is_empty() {
        return Err(PipelineError::Other("no training sentences".into()));
    }
    let tokens: Vec<Vec<String>> = sentences.iter().map(|s| tokenize_english(s)).collect();
    let vocab = build_vocab(&tokens, 1);
    let lc = LmConfig {
        vocab_size: vocab.len(),
        embed: config.k_e,
        hidden: config.hidden,
        layers: config.layers,
        bos: BOS,
        eos: EOS,
    };
    let mut model = LanguageModel::new(lc, config.seed);
    let data: Vec<Vec<usize>> = tokens.iter().map(|t| vocab.encode(t)).collect();
    let losses = model.train(&data, params.epochs, params.lr, params.batch, config.seed)?;
    Ok((FluencyRanker { model, vocab }, losses))
}

pub fn save_lm(path: &FsPath, r: &FluencyRanker) -> Result<(), PipelineError> {
    let mut meta = BTreeMap::new();
    meta.insert("vocab".into(), serde_json::json!(r.vocab.words()));
    meta.insert("lm_config".into(), serde_json::to_value(&r.model.config).unwrap());
    save_checkpoint(path, &r.model.store, &meta)?;
    Ok(())
}

pub fn load_lm(path: &FsPath) -> Result<FluencyRanker, PipelineError> {
    let ckpt = load_checkpoint(path)?;
    let config: LmConfig = serde_json::from_value(
        ckpt.meta
            .get("lm_config")
            .cloned()
            .ok_or_else(|| PipelineError::Other("checkpoint missing lm_config".into()))?,
    )
    .map_err(|e| PipelineError::Other(e.to_string()))?;
    let vocab = meta_strings(&ckpt.meta, "vocab")
        .ok_or_else(|| PipelineError::Other("checkpoint missing vocab".into()))?;
    Ok(FluencyRanker {
        model: LanguageModel::from_parts(config, ckpt.store),
        vocab: Vocab::from_words(vocab),
    })
}

/// What happened for one path segment during generation.
#[derive(Debug, Clone, Serialize)]
pub struct SegmentTrace {
    pub segment: usize,
    pub command: String,
    pub sentence: String,
    /// Planner produced no command above threshold; the best sub-threshold
    /// instantiation was used instead.
    pub fallback: bool,
    pub perplexity: f64,
    /// Perplexity exceeded the fluency threshold.
    pub disfluent: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GenerationOutput {
    pub instruction: String,
    pub segments: Vec<SegmentTrace>,
}

/// Content selection for one segment: IRL MAP property vector, k-NN
/// retrieval, spectral deduplication, then planner instantiation. Returns
/// the candidate commands and whether the sub-threshold fallback fired.
pub fn select_commands(
    irl: &IrlModel,
    map: &WorldMap,
    path: &Path,
    segment_index: usize,
    cfg: &PipelineConfig,
) -> (Vec<CasCommand>, bool) {
    let segments = segment_path(path);
    let seg = &segments[segment_index];
    let seg_path = seg.as_path();
    let planner_cfg = cfg.planner();
    let ctx = extract_context(map, path, segment_index);
    let structures: Vec<CasCommand> = match irl.map_property_vector(&ctx) {
        Ok(target) => {
            let retrieved = irl.knn_retrieve(&target);
            let clustering = spectral_cluster(&retrieved, cfg.clusters);
            clustering
                .representatives(&retrieved)
                .into_iter()
                .cloned()
                .collect()
        }
        Err(_) => Vec::new(),
    };
    let structures: Vec<CasCommand> = structures
        .into_iter()
        .filter(|s| structure_segment_kind(s) == seg.kind)
        .collect();
    let planned = plan(&structures, &seg_path, map, &planner_cfg);
    if !planned.is_empty() {
        return (planned, false);
    }
    // fallback: best-scoring sub-threshold instantiation over the retrieved
    // structures, then over the generic repertoire if retrieval gave nothing
    let mut pool = structures;
    if pool.is_empty() {
        pool = crate::corpus::candidate_structures(seg.kind);
    }
    let mut best: Option<(CasCommand, f64)> = None;
    for s in &pool {
        if let Some((c, like)) = instantiate_scored(s, &seg_path, map, &planner_cfg) {
            if best.as_ref().map_or(true, |(_, b)| like.value > *b) {
                best = Some((c, like.value));
            }
        }
    }
    match best {
        Some((c, _)) => (vec![c], true),
        None => (Vec::new(), true),
    }
}

/// Realize one command list into the best sentence under the LM.
fn realize_best(
    commands: &[CasCommand],
    generator: &TextGenerator,
    ranker: &FluencyRanker,
    cfg: &PipelineConfig,
) -> Option<(String, String, f64, bool)> {
    struct Candidate {
        command: String,
        sentence: String,
    }
    let mut candidates: Vec<Candidate> = Vec::new();
    let mut token_lists: Vec<Vec<usize>> = Vec::new();
    for cmd in commands {
        let src = generator.encode_command(cmd);
        for ids in generator.model.generate_candidates(&src, cfg.beam_width) {
            let sentence = generator.decode_sentence(&ids);
            if candidates.iter().any(|c| c.sentence == sentence) {
                continue;
            }
            token_lists.push(ranker.vocab.encode(&tokenize_english(&sentence)));
            candidates.push(Candidate {
                command: cmd.serialize(),
                sentence,
            });
        }
    }
    let (_, top) = ranker.model.best(&token_lists, cfg.l_t)?;
    let chosen = &candidates[top.index];
    Some((
        chosen.command.clone(),
        chosen.sentence.clone(),
        top.perplexity,
        top.above_threshold,
    ))
}

/// Full generation for a (map, start, goal) query.
pub fn generate(
    map: &WorldMap,
    start: Pose,
    goal: Pose,
    irl: &IrlModel,
    generator: &TextGenerator,
    ranker: &FluencyRanker,
    cfg: &PipelineConfig,
) -> Result<GenerationOutput, PipelineError> {
    let path = shortest_path(map, start, goal)?;
    let segments = segment_path(&path);
    let mut traces = Vec::with_capacity(segments.len());
    for i in 0..segments.len() {
        let (commands, fallback) = select_commands(irl, map, &path, i, cfg);
        if commands.is_empty() {
            return Err(PipelineError::Other(format!(
                "no command could be instantiated for segment {i}"
            )));
        }
        let (command, sentence, perplexity, disfluent) =
            realize_best(&commands, generator, ranker, cfg).ok_or_else(|| {
                PipelineError::Other(format!("no candidate sentences for segment {i}"))
            })?;
        traces.push(SegmentTrace {
            segment: i,
            command,
            sentence,
            fallback,
            perplexity,
            disfluent,
        });
    }
    let instruction = sequence_instruction(
        &traces.iter().map(|t| t.sentence.clone()).collect::<Vec<_>>(),
    );
    Ok(GenerationOutput {
        instruction,
        segments: traces,
    })
}

/// Score generated sentences against references over a test set of
/// (command, reference sentence) pairs.
pub fn evaluate_pairs(
    pairs: &[(CasCommand, String)],
    generator: &TextGenerator,
    ranker: &FluencyRanker,
    cfg: &PipelineConfig,
) -> BleuReport {
    let scored: Vec<(Vec<String>, Vec<String>)> = pairs
        .iter()
        .map(|(cmd, reference)| {
            let hyp = realize_best(std::slice::from_ref(cmd), generator, ranker, cfg)
                .map(|(_, s, _, _)| tokenize_english(&s))
                .unwrap_or_default();
            (hyp, tokenize_english(reference))
        })
        .collect();
    bleu_evaluate(&scored)
}

/// Alignment heat-map data for one command: one row per emitted token
/// (EOS step included), one column per source token.
pub fn export_alignment(
    generator: &TextGenerator,
    cmd: &CasCommand,
) -> (Vec<String>, Vec<String>, Vec<Vec<f64>>) {
    let src_tokens = tokenize_cas(cmd).tokens;
    let src = generator.src_vocab.encode(&src_tokens);
    let (out, rows) = generator.model.greedy_decode_with_alignment(&src);
    let out_tokens = generator.tgt_vocab.decode(&out);
    (src_tokens, out_tokens, rows)
}

/// Minimal SVG rendering of a map with a path overlay.
pub fn render_map_svg(map: &WorldMap, path: Option<&Path>) -> String {
    let nodes: Vec<_> = map.nodes().collect();
    let min_x = nodes.iter().map(|p| p.x).min().unwrap_or(0);
    let min_y = nodes.iter().map(|p| p.y).min().unwrap_or(0);
    let max_x = nodes.iter().map(|p| p.x).max().unwrap_or(0);
    let max_y = nodes.iter().map(|p| p.y).max().unwrap_or(0);
    let scale = 40.0;
    let pad = 20.0;
    let sx = |x: i32| pad + (x - min_x) as f64 * scale;
    // flip y so north points up
    let sy = |y: i32| pad + (max_y - y) as f64 * scale;
    let w = pad * 2.0 + (max_x - min_x) as f64 * scale;
    let h = pad * 2.0 + (max_y - min_y) as f64 * scale;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    );
    for (a, b, info) in map.edges() {
        svg.push_str(&format!(
            "  <line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{}\" stroke-width=\"6\"/>\n",
            sx(a.x),
            sy(a.y),
            sx(b.x),
            sy(b.y),
            info.floor_color
        ));
    }
    for p in &nodes {
        svg.push_str(&format!(
            "  <circle cx=\"{}\" cy=\"{}\" r=\"5\" fill=\"black\"/>\n",
            sx(p.x),
            sy(p.y)
        ));
    }
    for (p, kind) in map.objects() {
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" font-size=\"10\">{kind}</text>\n",
            sx(p.x) + 6.0,
            sy(p.y) - 6.0
        ));
    }
    if let Some(path) = path {
        let pts: Vec<String> = path
            .poses()
            .iter()
            .map(|p| format!("{},{}", sx(p.node.x), sy(p.node.y)))
            .collect();
        svg.push_str(&format!(
            "  <polyline points=\"{}\" fill=\"none\" stroke=\"black\" stroke-width=\"2\" stroke-dasharray=\"4 3\"/>\n",
            pts.join(" ")
        ));
        let s = path.start();
        svg.push_str(&format!(
            "  <circle cx=\"{}\" cy=\"{}\" r=\"7\" fill=\"none\" stroke=\"black\" stroke-width=\"2\"/>\n",
            sx(s.node.x),
            sy(s.node.y)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

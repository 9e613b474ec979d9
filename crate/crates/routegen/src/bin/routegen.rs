use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use routegen::content_select::IrlModel;
use routegen::corpus::{
    augment, load_dataset, save_dataset, split, synth_corpus, synth_lexicon, synth_map,
};
use routegen::neural::{max_rel_error, LstmStack, ParamStore};
use routegen::pipeline::{
    evaluate_pairs, export_alignment, generate, load_lm, load_seq2seq, render_map_svg, save_lm,
    save_seq2seq, segment_pairs, train_irl_model, train_lm_model, train_seq2seq_model,
    PipelineConfig, TrainParams,
};
use routegen::realize::{RealizeConfig, Seq2SeqModel};
use routegen::worldmodel::{load_map, Heading, Path, Pose};

#[derive(Parser)]
#[command(name = "routegen", about = "Route instruction generation pipeline")]
struct Cli {
    /// JSON config file; flags below override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    beam_width: Option<usize>,
    #[arg(long, global = true)]
    kc: Option<usize>,
    #[arg(long, global = true)]
    pt: Option<f64>,
    #[arg(long, global = true)]
    lt: Option<f64>,
    #[arg(long, global = true)]
    checkpoint_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    dataset_dir: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic dataset (maps, demonstrations, lexicon).
    Prepare {
        #[arg(long, default_value_t = 3)]
        maps: usize,
        #[arg(long, default_value_t = 500)]
        demos: usize,
    },
    /// Expand training pairs through lexicon substitution.
    Augment,
    /// Fit the content-selection model on the training split.
    TrainIrl,
    /// Train the surface realizer.
    TrainSeq2seq {
        /// Ablation: feed the final encoder state instead of attention.
        #[arg(long)]
        no_aligner: bool,
        #[arg(long)]
        augmented: bool,
        #[arg(long, default_value_t = 30)]
        epochs: usize,
        #[arg(long, default_value_t = 0.003)]
        lr: f64,
        #[arg(long, default_value_t = 16)]
        batch: usize,
    },
    /// Train the fluency language model.
    TrainLm {
        #[arg(long)]
        augmented: bool,
        #[arg(long, default_value_t = 30)]
        epochs: usize,
        #[arg(long, default_value_t = 0.003)]
        lr: f64,
        #[arg(long, default_value_t = 16)]
        batch: usize,
    },
    /// Generate an instruction for a map and start/goal poses.
    Generate {
        #[arg(long)]
        map: PathBuf,
        /// Pose as x,y,H (H one of N E S W).
        #[arg(long)]
        start: String,
        #[arg(long)]
        goal: String,
        /// Also print the per-segment trace as JSON.
        #[arg(long)]
        trace: bool,
    },
    /// Score generated sentences against the test split references.
    Evaluate {
        #[arg(long, default_value = "none")]
        ablation: String,
    },
    /// Write alignment matrices and a map drawing.
    ExportFigures {
        #[arg(long, default_value_t = 2)]
        samples: usize,
        #[arg(long, default_value = "figures")]
        out: PathBuf,
    },
    /// Finite-difference verification of the model gradients.
    Gradcheck,
}

fn build_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => serde_json::from_str(
            &fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?,
        )
        .with_context(|| format!("parsing {}", path.display()))?,
        None => PipelineConfig::default(),
    };
    if let Some(v) = cli.seed {
        cfg.seed = v;
    }
    if let Some(v) = cli.beam_width {
        cfg.beam_width = v;
    }
    if let Some(v) = cli.kc {
        cfg.k_c = v;
    }
    if let Some(v) = cli.pt {
        cfg.p_t = v;
    }
    if let Some(v) = cli.lt {
        cfg.l_t = v;
    }
    if let Some(v) = &cli.checkpoint_dir {
        cfg.checkpoint_dir = v.clone();
    }
    if let Some(v) = &cli.dataset_dir {
        cfg.dataset_dir = v.clone();
    }
    Ok(cfg)
}

fn parse_pose(text: &str) -> Result<Pose> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 3 {
        bail!("pose must be x,y,H (got '{text}')");
    }
    let x: i32 = parts[0].trim().parse().context("pose x")?;
    let y: i32 = parts[1].trim().parse().context("pose y")?;
    let heading: Heading = parts[2].trim().parse().map_err(|e: String| anyhow::anyhow!(e))?;
    Ok(Pose::new(routegen::worldmodel::GridPos::new(x, y), heading))
}

fn train_pairs(cfg: &PipelineConfig, augmented: bool) -> Result<Vec<(routegen::cas::CasCommand, String)>> {
    let ds = load_dataset(&cfg.dataset_dir)?;
    for w in &ds.warnings {
        eprintln!("warning: {w}");
    }
    let splits = split(&ds.demos, (0.7, 0.1, 0.2), cfg.seed)?;
    let mut pairs = segment_pairs(&splits.train);
    if augmented {
        let (expanded, warnings) = augment(&pairs, &ds.lexicon);
        for w in warnings.iter().take(10) {
            eprintln!("augment warning: {w}");
        }
        if warnings.len() > 10 {
            eprintln!("... {} more augment warnings", warnings.len() - 10);
        }
        pairs = expanded;
    }
    Ok(pairs)
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    let cfg = build_config(&cli)?;
    match cli.cmd {
        Cmd::Prepare { maps, demos } => {
            let world_maps: Vec<_> = (0..maps)
                .map(|i| synth_map(4, 4, cfg.seed.wrapping_add(i as u64)))
                .collect();
            let demo_list = synth_corpus(&world_maps, demos, cfg.seed);
            let by_id = world_maps
                .iter()
                .enumerate()
                .map(|(i, m)| (format!("m{i}"), m.clone()))
                .collect();
            save_dataset(&cfg.dataset_dir, &by_id, &demo_list, &synth_lexicon())?;
            println!(
                "wrote {} demonstrations over {} maps to {}",
                demo_list.len(),
                maps,
                cfg.dataset_dir.display()
            );
        }
        Cmd::Augment => {
            let base = train_pairs(&cfg, false)?;
            let pairs = train_pairs(&cfg, true)?;
            let out = cfg.dataset_dir.join("augmented_pairs.jsonl");
            let mut lines = String::new();
            for (cmd, text) in &pairs {
                lines.push_str(&serde_json::json!({"cas": cmd.serialize(), "text": text}).to_string());
                lines.push('\n');
            }
            fs::write(&out, lines)?;
            let unique_base: std::collections::BTreeSet<(String, &String)> = base
                .iter()
                .map(|(c, t)| (c.serialize(), t))
                .collect();
            println!(
                "expanded {} unique training pairs ({} raw segments) to {} ({})",
                unique_base.len(),
                base.len(),
                pairs.len(),
                out.display()
            );
        }
        Cmd::TrainIrl => {
            let ds = load_dataset(&cfg.dataset_dir)?;
            let splits = split(&ds.demos, (0.7, 0.1, 0.2), cfg.seed)?;
            let model = train_irl_model(&splits.train, &ds.maps, &cfg)?;
            fs::create_dir_all(&cfg.checkpoint_dir)?;
            let path = cfg.checkpoint_dir.join("irl.json");
            fs::write(&path, model.to_json())?;
            println!(
                "trained content selector on {} demos: {} distinct actions, final gradient norm {:.2e}{}",
                splits.train.len(),
                model.action_db.len(),
                model.final_grad_norm,
                if model.converged { " (converged)" } else { "" }
            );
            println!("wrote {}", path.display());
        }
        Cmd::TrainSeq2seq {
            no_aligner,
            augmented,
            epochs,
            lr,
            batch,
        } => {
            let pairs = train_pairs(&cfg, augmented)?;
            let params = TrainParams { epochs, lr, batch };
            let (generator, losses) = train_seq2seq_model(&pairs, &cfg, &params, !no_aligner)?;
            for (i, l) in losses.iter().enumerate() {
                println!("epoch {:>3}: loss {l:.4}", i + 1);
            }
            fs::create_dir_all(&cfg.checkpoint_dir)?;
            let name = if no_aligner { "seq2seq_no_aligner.json" } else { "seq2seq.json" };
            let path = cfg.checkpoint_dir.join(name);
            save_seq2seq(&path, &generator)?;
            println!("wrote {}", path.display());
        }
        Cmd::TrainLm {
            augmented,
            epochs,
            lr,
            batch,
        } => {
            let pairs = train_pairs(&cfg, augmented)?;
            let sentences: Vec<String> = pairs.into_iter().map(|(_, s)| s).collect();
            let params = TrainParams { epochs, lr, batch };
            let (ranker, losses) = train_lm_model(&sentences, &cfg, &params)?;
            for (i, l) in losses.iter().enumerate() {
                println!("epoch {:>3}: loss {l:.4} (perplexity {:.2})", i + 1, l.exp());
            }
            fs::create_dir_all(&cfg.checkpoint_dir)?;
            let path = cfg.checkpoint_dir.join("lm.json");
            save_lm(&path, &ranker)?;
            println!("wrote {}", path.display());
        }
        Cmd::Generate {
            map,
            start,
            goal,
            trace,
        } => {
            let world = load_map(fs::File::open(&map).with_context(|| format!("opening {}", map.display()))?)?;
            let start = parse_pose(&start)?;
            let goal = parse_pose(&goal)?;
            if start == goal {
                println!("start equals goal: nothing to do (empty instruction)");
                return Ok(());
            }
            let irl = IrlModel::from_json(&fs::read_to_string(cfg.checkpoint_dir.join("irl.json"))?)?;
            let generator = load_seq2seq(&cfg.checkpoint_dir.join("seq2seq.json"))?;
            let ranker = load_lm(&cfg.checkpoint_dir.join("lm.json"))?;
            let out = generate(&world, start, goal, &irl, &generator, &ranker, &cfg)?;
            println!("{}", out.instruction);
            if trace {
                println!("{}", serde_json::to_string_pretty(&out.segments)?);
            }
            let fallbacks: Vec<usize> = out
                .segments
                .iter()
                .filter(|s| s.fallback)
                .map(|s| s.segment)
                .collect();
            if !fallbacks.is_empty() {
                eprintln!("note: sub-threshold fallback used for segments {fallbacks:?}");
            }
        }
        Cmd::Evaluate { ablation } => {
            let ds = load_dataset(&cfg.dataset_dir)?;
            let splits = split(&ds.demos, (0.7, 0.1, 0.2), cfg.seed)?;
            let test_pairs = segment_pairs(&splits.test);
            if test_pairs.is_empty() {
                bail!("test split is empty");
            }
            let name = match ablation.as_str() {
                "none" => "seq2seq.json",
                "no_aligner" => "seq2seq_no_aligner.json",
                other => bail!("unknown ablation '{other}' (use none|no_aligner)"),
            };
            let generator = load_seq2seq(&cfg.checkpoint_dir.join(name))?;
            let ranker = load_lm(&cfg.checkpoint_dir.join("lm.json"))?;
            let report = evaluate_pairs(&test_pairs, &generator, &ranker, &cfg);
            println!("pairs evaluated: {}", report.per_pair.len());
            println!("sentence BLEU : {:.2}", report.sentence_mean);
            println!("corpus BLEU   : {:.2}", report.corpus);
            println!(
                "precisions    : p1 {:.3}  p2 {:.3}  p3 {:.3}  p4 {:.3}",
                report.precisions[0], report.precisions[1], report.precisions[2], report.precisions[3]
            );
            println!("brevity       : {:.3}", report.brevity_penalty);
        }
        Cmd::ExportFigures { samples, out } => {
            let ds = load_dataset(&cfg.dataset_dir)?;
            let generator = load_seq2seq(&cfg.checkpoint_dir.join("seq2seq.json"))?;
            fs::create_dir_all(&out)?;
            let splits = split(&ds.demos, (0.7, 0.1, 0.2), cfg.seed)?;
            let pairs = segment_pairs(&splits.test);
            for (i, (cmd, _)) in pairs.iter().take(samples).enumerate() {
                let (src, emitted, rows) = export_alignment(&generator, cmd);
                let doc = serde_json::json!({
                    "source_tokens": src,
                    "output_tokens": emitted,
                    "weights": rows,
                });
                let path = out.join(format!("alignment_{i}.json"));
                fs::write(&path, serde_json::to_string_pretty(&doc)?)?;
                println!("wrote {}", path.display());
            }
            if let Some(demo) = ds.demos.first() {
                if let Some(map) = ds.maps.get(&demo.map_id) {
                    let path = Path::new(map, demo.poses.clone()).ok();
                    let svg = render_map_svg(map, path.as_ref());
                    let file = out.join("map.svg");
                    fs::write(&file, svg)?;
                    println!("wrote {}", file.display());
                }
            }
        }
        Cmd::Gradcheck => {
            let checks = run_gradcheck(cfg.seed);
            let mut failed = false;
            for (name, err, tol) in &checks {
                let ok = err < tol;
                failed |= !ok;
                println!(
                    "{}: rel err {:.3e} (tolerance {:.0e}) {}",
                    name,
                    err,
                    tol,
                    if ok { "ok" } else { "FAIL" }
                );
            }
            if failed {
                bail!("gradient check failed");
            }
        }
    }
    Ok(())
}

fn run_gradcheck(seed: u64) -> Vec<(&'static str, f64, f64)> {
    use rand::SeedableRng;
    let mut out = Vec::new();

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let stack = LstmStack::register("g", 3, 4, 2, &mut store, &mut rng);
    let err = max_rel_error(
        &mut store,
        |t| {
            let mut states = stack.zero_state(t);
            for step in 0..3 {
                let x = t.input(vec![0.2 * step as f64, -0.1, 0.3]);
                states = stack.step(t, x, &states);
            }
            let ones = t.input(vec![1.0; 4]);
            t.dot(states.last().unwrap().h, ones)
        },
        1e-5,
    );
    out.push(("lstm stack (2 layers, 3 steps)", err, 1e-6));

    let model = Seq2SeqModel::new(
        RealizeConfig {
            src_vocab_size: 5,
            tgt_vocab_size: 6,
            embed: 3,
            hidden: 4,
            layers: 2,
            use_aligner: true,
            bos: 1,
            eos: 2,
            max_len: 10,
        },
        seed,
    );
    let mut store = model.store.clone();
    let err = max_rel_error(&mut store, |t| model.loss_on(t, &[3, 4, 0], &[4, 5, 3]), 1e-5);
    out.push(("seq2seq full loss (attention)", err, 1e-4));

    let ablated = Seq2SeqModel::new(
        RealizeConfig {
            src_vocab_size: 5,
            tgt_vocab_size: 6,
            embed: 3,
            hidden: 4,
            layers: 1,
            use_aligner: false,
            bos: 1,
            eos: 2,
            max_len: 10,
        },
        seed,
    );
    let mut store = ablated.store.clone();
    let err = max_rel_error(&mut store, |t| ablated.loss_on(t, &[3, 4], &[4, 5]), 1e-5);
    out.push(("seq2seq full loss (no aligner)", err, 1e-4));
    out
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

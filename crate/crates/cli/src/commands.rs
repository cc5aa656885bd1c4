use crate::config::RunConfig;
use crate::records::*;
use anyhow::{anyhow, bail, Context};
use benchsynth::active::{al_loop as run_al, query_bounds, Committee, EpochLog, Synthesis};
use benchsynth::corpus::{hash_hex, ingest_dir, tokenize_corpus, CorpusEntry};
use benchsynth::downstream::{evaluate, train_tree, LabeledPoint};
use benchsynth::features::{extract_all, pca2_project, relative_proximity, FeatureSpace, FeatureVector};
use benchsynth::kcl::{compile, render_source};
use benchsynth::model::{stream_rng, InfillModel, Model32};
use benchsynth::search::{result_records, run_search, BeamConfig, ModelPolicy, SearchError};
use benchsynth::tokenizer::{build_vocab, Vocabulary, END, START};
use log::{info, warn};
use rand::seq::SliceRandom;
use serde::Serialize;
use serde_json::{json, Value};
use std::fmt::Write as _;
use std::path::Path;

fn load_vocab(path: &Path) -> anyhow::Result<Vocabulary> {
    Vocabulary::load(path).with_context(|| format!("loading vocabulary {}", path.display()))
}

fn load_model(path: &Path) -> anyhow::Result<Model32> {
    InfillModel::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn load_corpus(path: &Path) -> anyhow::Result<Vec<CorpusEntry>> {
    benchsynth::io::read_jsonl(path).with_context(|| format!("reading corpus {}", path.display()))
}

pub fn ingest(cfg: RunConfig, input: &Path, output: &Path) -> anyhow::Result<()> {
    let (entries, rejected) = ingest_dir(input).with_context(|| format!("ingesting {}", input.display()))?;
    info!("kept {} kernels, rejected {}", entries.len(), rejected.len());
    for r in &rejected {
        warn!("rejected {}: {}", r.path, r.reason);
    }
    write_records(&cfg, output, &entries)?;
    let mut rej = output.as_os_str().to_os_string();
    rej.push(".rejections.jsonl");
    write_records(&cfg, Path::new(&rej), &rejected)
}

pub fn tokenize(cfg: RunConfig, corpus: &Path, vocab_out: &Path, output: &Path) -> anyhow::Result<()> {
    let entries = load_corpus(corpus)?;
    let sources: Vec<&str> = entries.iter().map(|e| e.source.as_str()).collect();
    let vocab = build_vocab(&sources, cfg.tokenizer_threshold)?;
    let (kept, rejected) = tokenize_corpus(entries, &vocab, cfg.model.max_seq_len)?;
    info!(
        "vocabulary of {} tokens; {} sequences, {} dropped",
        vocab.size(),
        kept.len(),
        rejected.len()
    );
    for r in &rejected {
        warn!("dropped {}: {}", r.path, r.reason);
    }
    write_text(&cfg, vocab_out, &vocab.to_text())?;
    write_records(&cfg, output, &kept)
}

pub fn train(cfg: RunConfig, corpus: &Path, vocab: &Path, output: &Path) -> anyhow::Result<()> {
    let entries = load_corpus(corpus)?;
    let vocab = load_vocab(vocab)?;
    let mut mcfg = cfg.model.clone();
    mcfg.vocab_size = vocab.size();
    let mut model = Model32::new(mcfg)?;
    model.set_feature_normalization(&entries);
    let every = (cfg.train_steps / 20).max(1);
    let mut log = String::from("step,loss,lr,config_hash\n");
    let hash = cfg.hash();
    model.train_on_corpus(
        &entries,
        cfg.train_steps,
        cfg.train_batch_size,
        cfg.max_hole_fraction,
        cfg.seed,
        |step, loss, lr| {
            let _ = writeln!(log, "{step},{loss},{lr},{hash}");
            if step % every == 0 || step == cfg.train_steps {
                info!("step {step} loss {loss:.4} lr {lr:.2e}");
            }
        },
    )?;
    model.save(output)?;
    write_config(&cfg, output)?;
    let mut log_path = output.as_os_str().to_os_string();
    log_path.push(".log.csv");
    write_text(&cfg, Path::new(&log_path), &log)
}

fn seed_input(vocab: &Vocabulary, text: &str) -> anyhow::Result<Vec<u32>> {
    let mut ids = vec![START];
    ids.extend(vocab.encode_template(text)?);
    ids.push(END);
    Ok(ids)
}

#[derive(Serialize)]
struct SampleRecord {
    id: String,
    index: usize,
    source: String,
    terminated: bool,
    compiles: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    features: Option<benchsynth::features::FeatureSet>,
}

pub fn sample(cfg: RunConfig, model: &Path, vocab: &Path, n: usize, output: &Path) -> anyhow::Result<()> {
    let model = load_model(model)?;
    let vocab = load_vocab(vocab)?;
    let input = seed_input(&vocab, &cfg.beam.seed_text)?;
    let outs = model.sample_workload(&input, None, n, cfg.beam.temperature, cfg.seed)?;
    let mut records = Vec::with_capacity(n);
    for (index, out) in outs.iter().enumerate() {
        let text = vocab.decode(benchsynth::corpus::content_of(&out.tokens))?;
        let ast = if out.terminated { compile(&text).ok() } else { None };
        let source = ast.as_ref().map_or(text, render_source);
        records.push(SampleRecord {
            id: hash_hex(&format!("{index}/{source}")),
            index,
            compiles: ast.is_some(),
            features: ast.as_ref().map(extract_all),
            terminated: out.terminated,
            source,
        });
    }
    let ok = records.iter().filter(|r| r.compiles).count();
    info!("{ok}/{n} samples compile");
    write_records(&cfg, output, &records)
}

fn parse_vector(space: &str, text: &str) -> anyhow::Result<FeatureVector> {
    let space: FeatureSpace = space.parse()?;
    let values = text
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| anyhow!("bad vector component {v:?}")))
        .collect::<anyhow::Result<Vec<f64>>>()?;
    Ok(FeatureVector::new(space, values)?)
}

pub fn target(
    cfg: RunConfig,
    model: &Path,
    vocab: &Path,
    space: &str,
    vector: &str,
    output: &Path,
) -> anyhow::Result<()> {
    let target = parse_vector(space, vector)?;
    let model = load_model(model)?;
    let vocab = load_vocab(vocab)?;
    let policy = ModelPolicy {
        model: &model,
        temperature: cfg.beam.temperature,
    };
    let result = run_search(&policy, &vocab, &target, &cfg.beam)?;
    let records = result_records(&result, &target);
    let summary = records.last().cloned().unwrap_or(Value::Null);
    write_records(&cfg, output, &records)?;
    println!("{}", stamp(&summary, &cfg.hash())?);
    Ok(())
}

pub fn al_loop(
    cfg: RunConfig,
    model: &Path,
    vocab: &Path,
    corpus: &Path,
    output: &Path,
    log_path: &Path,
) -> anyhow::Result<()> {
    let model = load_model(model)?;
    let vocab = load_vocab(vocab)?;
    let corpus = load_corpus(corpus)?;
    if corpus.is_empty() {
        bail!("corpus is empty");
    }
    let labeled: Vec<LabeledPoint> = corpus
        .iter()
        .map(|e| cfg.runtime.label(&e.features.syntax8))
        .collect::<Result<_, _>>()?;
    let split = cfg.al_seed_points.clamp(1, labeled.len());
    let seed = &labeled[..split];
    let eval = if split < labeled.len() { &labeled[split..] } else { &labeled[..] };
    let mut committee = Committee::fit_initial(seed, cfg.committee.clone())?;
    if committee.is_degenerate() {
        warn!("seed data has a single label; the committee starts unanimous");
    }
    let bounds = query_bounds(
        FeatureSpace::Syntax8,
        corpus.iter().map(|e| &e.features.syntax8),
        cfg.al_box_scale,
    );
    let policy = ModelPolicy {
        model: &model,
        temperature: cfg.beam.temperature,
    };
    let outcome = run_al(
        &mut committee,
        &bounds,
        &cfg.al,
        |target, epoch| {
            let beam = BeamConfig {
                seed: cfg.seed.wrapping_add(epoch as u64),
                ..cfg.beam.clone()
            };
            match run_search(&policy, &vocab, target, &beam) {
                Ok(r) => Ok(Synthesis {
                    features: r.trajectory.iter().filter_map(|c| c.features.clone()).collect(),
                    best_proximity: r.best.features.as_ref().and_then(|f| relative_proximity(f, target).ok()),
                }),
                Err(SearchError::NoCompilingCandidate { .. }) => {
                    warn!("epoch {epoch}: no compiling candidate");
                    Ok(Synthesis {
                        features: Vec::new(),
                        best_proximity: None,
                    })
                }
                Err(e) => Err(anyhow::Error::from(e)),
            }
        },
        |fv| Ok(cfg.runtime.label(fv)?),
        |data| {
            let tree = train_tree(data, cfg.tree_max_depth).ok()?;
            Some(evaluate(|fv| tree.predict(fv), eval).speedup)
        },
    )?;
    for l in &outcome.log {
        info!(
            "epoch {} entropy {:.4} dataset {} speedup {:?}",
            l.epoch, l.max_entropy, l.dataset_size, l.speedup
        );
    }
    let hash = cfg.hash();
    let mut csv = format!("{},config_hash\n", EpochLog::CSV_HEADER);
    for l in &outcome.log {
        let _ = writeln!(csv, "{},{hash}", l.to_csv_row());
    }
    write_text(&cfg, log_path, &csv)?;
    write_records(&cfg, output, &outcome.dataset)
}

fn labeled_from(cfg: &RunConfig, path: &Path) -> anyhow::Result<Vec<LabeledPoint>> {
    read_values(path)?
        .iter()
        .filter_map(|r| record_features(r, FeatureSpace::Syntax8))
        .map(|fv| Ok(cfg.runtime.label(&fv)?))
        .collect()
}

pub fn eval_heuristic(
    cfg: RunConfig,
    train: &Path,
    eval: Option<&Path>,
    output: &Path,
    tree_out: Option<&Path>,
) -> anyhow::Result<()> {
    let mut train_set = labeled_from(&cfg, train)?;
    let eval_set = match eval {
        Some(p) => labeled_from(&cfg, p)?,
        None => {
            let mut rng = stream_rng(cfg.seed, 0);
            train_set.shuffle(&mut rng);
            let cut = (train_set.len() * 3).div_ceil(4);
            train_set.split_off(cut.min(train_set.len()))
        }
    };
    if train_set.is_empty() || eval_set.is_empty() {
        bail!("need nonempty training and evaluation sets");
    }
    let tree = train_tree(&train_set, cfg.tree_max_depth)?;
    let report = evaluate(|fv| tree.predict(fv), &eval_set);
    let oracle = evaluate(
        |fv| {
            eval_set
                .iter()
                .find(|p| &p.features == fv)
                .map_or(benchsynth::downstream::Label::Gpu, |p| p.label)
        },
        &eval_set,
    );
    let record = json!({
        "report": report,
        "oracle_speedup": oracle.speedup,
        "n_train": train_set.len(),
        "n_eval": eval_set.len(),
        "tree": tree.to_text(),
        "config_hash": cfg.hash(),
    });
    write_text(&cfg, output, &format!("{record}\n"))?;
    if let Some(p) = tree_out {
        write_text(&cfg, p, &tree.to_text())?;
    }
    println!("{},config_hash", benchsynth::downstream::HeuristicReport::CSV_HEADER);
    println!("{},{}", report.to_csv_row(), cfg.hash());
    Ok(())
}

pub fn pca_export(cfg: RunConfig, inputs: &[String], space: &str, output: &Path) -> anyhow::Result<()> {
    let space: FeatureSpace = space.parse()?;
    let mut rows: Vec<(String, String)> = Vec::new();
    let mut vectors = Vec::new();
    for spec in inputs {
        let (name, path) = named_path(spec, Path::new("."));
        for (i, r) in read_values(&path)?.iter().enumerate() {
            if let Some(fv) = record_features(r, space) {
                rows.push((name.clone(), record_id(r, i)));
                vectors.push(fv);
            }
        }
    }
    let coords = pca2_project(&vectors)?;
    let hash = cfg.hash();
    let mut csv = String::from("dataset,id,pc1,pc2,config_hash\n");
    for ((name, id), (x, y)) in rows.iter().zip(coords) {
        let _ = writeln!(csv, "{name},{id},{x},{y},{hash}");
    }
    write_text(&cfg, output, &csv)
}

fn generated_at() -> String {
    let secs = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.parse::<i64>().ok())
        .unwrap_or_else(|| {
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map_or(0, |d| d.as_secs() as i64)
        });
    chrono::DateTime::from_timestamp(secs, 0)
        .map(|t| t.to_rfc3339())
        .unwrap_or_default()
}

pub fn export_turing(cfg: RunConfig, datasets: &[String], dir: &Path, output: &Path) -> anyhow::Result<()> {
    let mut out = Vec::new();
    for (di, spec) in datasets.iter().enumerate() {
        let (name, path) = named_path(spec, dir);
        let mut samples: Vec<Value> = read_values(&path)?
            .iter()
            .enumerate()
            .filter(|(_, r)| r.get("compiles") != Some(&Value::Bool(false)))
            .filter_map(|(i, r)| {
                let source = r.get("source").or_else(|| r.get("code"))?.as_str()?;
                let code = compile(source).map_or_else(|_| source.to_string(), |ast| render_source(&ast));
                Some(json!({ "id": record_id(r, i), "code": code }))
            })
            .collect();
        let mut rng = stream_rng(cfg.seed, di as u64);
        samples.shuffle(&mut rng);
        samples.truncate(cfg.turing_samples);
        info!("{name}: {} samples", samples.len());
        out.push(json!({ "name": name, "samples": samples }));
    }
    let bundle = json!({
        "datasets": out,
        "generated_at": generated_at(),
        "config_hash": cfg.hash(),
    });
    write_text(&cfg, output, &format!("{}\n", serde_json::to_string_pretty(&bundle)?))
}

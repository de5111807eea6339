use std::collections::{BTreeSet, HashMap};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use hgsum::config::RunConfig;
use hgsum::corpus::{load_clusters, tokenize, DocumentCluster, Vocab};
use hgsum::hetgraph::build_hetero_graph;
use hgsum::model::{summarize, GraphInput, ModelConfig, Resources};
use hgsum::numeric::{init_params, load_checkpoint, save_checkpoint, ParamStore};
use hgsum::rouge::{Rouge, RougeReport};
use hgsum::study::{format_ktable, ksweep, prepare_all, SweepMode};
use hgsum::training::{fit, mean_report, LogRecord};
use hgsum::{Error, Result};
use rayon::prelude::*;
use serde_json::json;

fn required<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    path.as_deref().ok_or_else(|| Error::Config(format!("--{flag} is required")))
}

fn out_dir(cfg: &RunConfig) -> Result<&Path> {
    let dir = required(&cfg.out, "out")?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(dir)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn write_line(w: &mut impl Write, path: &Path, line: &str) -> Result<()> {
    writeln!(w, "{line}").map_err(|e| Error::io(path, e))
}

fn to_line(value: &impl serde::Serialize) -> String {
    serde_json::to_string(value).expect("records serialize")
}

fn default_vocab(vocab: &Option<PathBuf>, checkpoint: &Path) -> PathBuf {
    vocab.clone().unwrap_or_else(|| checkpoint.with_file_name("vocab.txt"))
}

fn load_model(cfg: &RunConfig, checkpoint: &Path, vocab: &Path) -> Result<(Resources, ModelConfig, ParamStore)> {
    let res = cfg.resources(Vocab::load(vocab)?)?;
    let model = cfg.model_config(res.vocab.len())?;
    let params = load_checkpoint(checkpoint)?;
    params
        .check_against(&model.plan())
        .map_err(|e| Error::Config(format!("{} does not fit the configuration: {e}", checkpoint.display())))?;
    Ok((res, model, params))
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let clusters = load_clusters(required(&cfg.data, "data")?, cfg.limit)?;
    let dev = match &cfg.dev {
        Some(path) => load_clusters(path, cfg.limit)?,
        None => Vec::new(),
    };
    let dir = out_dir(cfg)?;
    cfg.save_json(dir.join("config.json"))?;
    let res = cfg.resources(cfg.vocab_for(&clusters))?;
    res.vocab.save(dir.join("vocab.txt"))?;
    let model = cfg.model_config(res.vocab.len())?;
    let train_cfg = cfg.train_config()?;
    let items = prepare_all(&clusters, &res, &model)?;
    let dev_items = prepare_all(&dev, &res, &model)?;
    let params = init_params(&model.plan(), cfg.seed)?;
    log::info!(
        "training on {} clusters ({} dev), {} parameters",
        items.len(),
        dev_items.len(),
        params.scalar_count()
    );

    let metrics_path = dir.join("metrics.jsonl");
    let mut metrics = create(&metrics_path)?;
    let outcome = fit(&items, &dev_items, &res.vocab, params, &model, &train_cfg, |r| {
        if let LogRecord::Dev { epoch, rouge_l, .. } = r {
            log::info!("epoch {epoch}: dev R-L {:.2}", 100.0 * rouge_l);
        }
        write_line(&mut metrics, &metrics_path, &to_line(r))
    })?;
    metrics.flush().map_err(|e| Error::io(&metrics_path, e))?;
    save_checkpoint(&outcome.best, dir.join("checkpoint.bin"))?;
    match outcome.best_dev_rouge_l {
        Some(r) => println!("{} steps, best dev R-L {:.2}", outcome.steps, 100.0 * r),
        None => println!("{} steps", outcome.steps),
    }
    Ok(())
}

pub fn summarize_clusters(
    cfg: &RunConfig,
    checkpoint: &Path,
    vocab: &Option<PathBuf>,
    input: &Option<PathBuf>,
    output: &Option<PathBuf>,
) -> Result<()> {
    let input = input.as_deref().map_or_else(|| required(&cfg.data, "data"), Ok)?;
    let clusters = load_clusters(input, cfg.limit)?;
    let (res, model, params) = load_model(cfg, checkpoint, &default_vocab(vocab, checkpoint))?;
    let beam = cfg.beam()?;
    let lines: Vec<String> = clusters
        .par_iter()
        .map(|c| {
            let source = GraphInput::build(&c.without_summary(), &res, &model)?;
            let ids = summarize(&params, &model, &source, &beam)?;
            Ok(to_line(&json!({ "id": c.id, "summary": res.vocab.decode_text(&ids) })))
        })
        .collect::<Result<_>>()?;
    match output {
        Some(path) => {
            let mut w = create(path)?;
            for line in &lines {
                write_line(&mut w, path, line)?;
            }
            w.flush().map_err(|e| Error::io(path, e))
        }
        None => {
            let stdout = std::io::stdout();
            let mut w = stdout.lock();
            for line in &lines {
                write_line(&mut w, Path::new("<stdout>"), line)?;
            }
            Ok(())
        }
    }
}

/// `id` and `summary` fields of a line-delimited record file. Other fields
/// are ignored, so dataset files work as references.
fn read_summaries(path: &Path) -> Result<Vec<(String, String)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse { path: path.to_path_buf(), line: idx + 1, message };
        let v: serde_json::Value = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let field = |name: &str| {
            v.get(name)
                .and_then(|x| x.as_str())
                .map(str::to_string)
                .ok_or_else(|| parse_err(format!("missing string field {name}")))
        };
        out.push((field("id")?, field("summary")?));
    }
    Ok(out)
}

pub struct EvalReport {
    pub mean: RougeReport,
    pub mean_len: f64,
    pub count: usize,
}

pub fn score(generated: &Path, references: &Path, stem: bool) -> Result<EvalReport> {
    let gen = read_summaries(generated)?;
    let refs = read_summaries(references)?;
    let by_id: HashMap<&str, &str> = gen.iter().map(|(id, s)| (id.as_str(), s.as_str())).collect();
    let ref_ids: BTreeSet<&str> = refs.iter().map(|(id, _)| id.as_str()).collect();
    let missing: Vec<&str> = ref_ids.iter().copied().filter(|id| !by_id.contains_key(id)).collect();
    let extra: BTreeSet<&str> = by_id.keys().copied().filter(|id| !ref_ids.contains(id)).collect();
    if !missing.is_empty() || !extra.is_empty() || by_id.len() != gen.len() {
        return Err(Error::Data(format!(
            "ids do not align: missing from generated {missing:?}, absent from references {extra:?}{}",
            if by_id.len() != gen.len() { ", duplicate generated ids" } else { "" }
        )));
    }
    let rouge = Rouge::new(stem);
    let mut reports = Vec::with_capacity(refs.len());
    let mut total_len = 0;
    for (id, reference) in &refs {
        let candidate = tokenize(by_id[id.as_str()]);
        total_len += candidate.iter().map(|s| s.len()).sum::<usize>();
        reports.push(rouge.report(&candidate, &tokenize(reference)));
    }
    Ok(EvalReport {
        mean: mean_report(&reports),
        mean_len: total_len as f64 / refs.len().max(1) as f64,
        count: refs.len(),
    })
}

pub fn eval(cfg: &RunConfig, generated: &Path, references: &Path) -> Result<()> {
    let r = score(generated, references, cfg.rouge_stem)?;
    println!(
        "R-1 {:.2}  R-2 {:.2}  R-L {:.2}  mean length {:.2}  ({} summaries)",
        100.0 * r.mean.rouge1.f1,
        100.0 * r.mean.rouge2.f1,
        100.0 * r.mean.rouge_l.f1,
        r.mean_len,
        r.count
    );
    println!("{}", to_line(&json!({ "rouge": r.mean, "mean_len": r.mean_len, "count": r.count })));
    Ok(())
}

pub fn sweep(cfg: &RunConfig, ks: &[f64], checkpoint: &Option<PathBuf>, vocab: &Option<PathBuf>) -> Result<()> {
    let train = load_clusters(required(&cfg.data, "data")?, cfg.limit)?;
    let eval_set: Vec<DocumentCluster> = match &cfg.dev {
        Some(path) => load_clusters(path, cfg.limit)?,
        None => train.clone(),
    };
    let beam = cfg.beam()?;
    let rows = match checkpoint {
        Some(ckpt) => {
            let (res, model, params) = load_model(cfg, ckpt, &default_vocab(vocab, ckpt))?;
            ksweep(&[], &eval_set, &res, &model, ks, SweepMode::Redecode(&params), &beam)?
        }
        None => {
            let res = cfg.resources(cfg.vocab_for(&train))?;
            let model = cfg.model_config(res.vocab.len())?;
            let train_cfg = cfg.train_config()?;
            ksweep(&train, &eval_set, &res, &model, ks, SweepMode::Retrain(&train_cfg), &beam)?
        }
    };
    print!("{}", format_ktable(&rows));
    if cfg.out.is_some() {
        let dir = out_dir(cfg)?;
        cfg.save_json(dir.join("config.json"))?;
        let path = dir.join("ksweep.jsonl");
        let mut w = create(&path)?;
        for row in &rows {
            write_line(&mut w, &path, &to_line(row))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Returns the number of clusters whose graph has violations.
pub fn graph(cfg: &RunConfig) -> Result<usize> {
    let clusters = load_clusters(required(&cfg.data, "data")?, cfg.limit)?;
    let dir = out_dir(cfg)?;
    cfg.save_json(dir.join("config.json"))?;
    let res = cfg.resources(cfg.vocab_for(&clusters))?;
    let model = cfg.model_config(res.vocab.len())?;
    let mut report = Vec::new();
    let mut failing = 0;
    for c in &clusters {
        let g = build_hetero_graph(&c.without_summary(), &res.table, &res.embedder, &model.graph)?;
        let stem = file_stem(&c.id);
        let dot = dir.join(format!("{stem}.dot"));
        fs::write(&dot, g.to_dot(&c.id)).map_err(|e| Error::io(&dot, e))?;
        let dump = dir.join(format!("{stem}.json"));
        fs::write(&dump, to_line(&g.dump()) + "\n").map_err(|e| Error::io(&dump, e))?;
        let v = g.validate();
        if !v.is_ok() {
            failing += 1;
            log::error!("{}: {} violations", c.id, v.violations.len());
        }
        report.push(json!({ "id": c.id, "nodes": g.len(), "violations": v.violations }));
    }
    let path = dir.join("validation.json");
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    println!("{} graphs written to {}, {failing} with violations", clusters.len(), dir.display());
    Ok(failing)
}

/// Cluster ids made safe for file names.
fn file_stem(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

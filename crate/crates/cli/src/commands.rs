//! Subcommand bodies. Each reads its inputs, records them in the run
//! manifest, and writes machine outputs that depend only on inputs, flags
//! and seed.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use delineate_core::eval::{
    compute_metrics, f1_by_year_csv, field_crosstab, stratified_split, EvalReport, Partition, SplitAssignment,
    SplitFractions, TableLayout,
};
use delineate_core::features::{extract_features, ScoredLexicon};
use delineate_core::ingest::{read_embeddings, read_labeled_corpus, read_unlabeled_corpus, Corpus, ErrorMode};
use delineate_core::learners::linear::{embedding_dataset, fit_logistic};
use delineate_core::learners::{
    grid_search, predict_forest, train_forest, Dataset, ForestTrainer, GridResult, GridSpec, LearnError, LinearTrainer,
};
use delineate_core::linkage::{cluster, crosswalk_csv, write_clusters_jsonl, LinkageConfig, SpillConfig};
use delineate_core::model_io::{LoadedModel, ModelArtifact};
use delineate_core::records::{derive_relevance_label, PublicationRecord, Source, SubjectConfig};
use delineate_core::{EmbeddingTable, KeywordLexicon, ModelFile};

use crate::config::FileConfig;
use crate::error::{CliResult, Failure};
use crate::manifest::Run;
use crate::{
    CrosstabArgs, DedupArgs, EvaluateArgs, Format, Layout, Method, PartitionArg, PredictArgs, SplitArgs, TrainArgs,
};

/// Directory for linkage spill files; the system temp dir when unset.
pub const SPILL_DIR_ENV: &str = "DELINEATE_SPILL_DIR";

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Failure::io(path, e))
}

fn mode(skip: bool) -> ErrorMode {
    if skip {
        ErrorMode::Skip
    } else {
        ErrorMode::Abort
    }
}

fn read_corpus(run: &mut Run, path: &Path, source: Option<Source>, skip: bool) -> CliResult<Corpus> {
    run.input(path)?;
    let reader = open(path)?;
    let corpus = run.stage("ingest", || {
        match source {
            None => read_labeled_corpus(reader, mode(skip)),
            Some(s) => read_unlabeled_corpus(reader, s, mode(skip)),
        }
        .map_err(|e| Failure::from(e).at(path))
    })?;
    for s in &corpus.skipped {
        eprintln!("warning: {}:{}: skipped: {}", path.display(), s.line, s.message);
    }
    run.count("records_read", corpus.records.len());
    run.count("lines_skipped", corpus.skip_count());
    Ok(corpus)
}

fn load_subjects(run: &mut Run, path: Option<&Path>) -> CliResult<SubjectConfig> {
    match path {
        Some(p) => {
            run.input(p)?;
            SubjectConfig::load(p).map_err(|e| Failure::from(e).at(p))
        }
        None => Ok(SubjectConfig::six_subject()),
    }
}

fn read_split(run: &mut Run, path: &Path) -> CliResult<BTreeMap<String, Partition>> {
    run.input(path)?;
    SplitAssignment::read_jsonl(open(path)?).map_err(|e| Failure::from(e).at(path))
}

fn partition(p: PartitionArg) -> Partition {
    match p {
        PartitionArg::Train => Partition::Train,
        PartitionArg::Dev => Partition::Dev,
        PartitionArg::Test => Partition::Test,
    }
}

/// Keep only records assigned to `part`. Records absent from the split
/// file are dropped.
fn restrict(records: Vec<PublicationRecord>, split: &BTreeMap<String, Partition>, part: Partition) -> Vec<PublicationRecord> {
    records
        .into_iter()
        .filter(|r| split.get(&r.id) == Some(&part))
        .collect()
}

fn display(p: &Option<PathBuf>) -> serde_json::Value {
    p.as_ref().map_or(serde_json::Value::Null, |p| json!(p.display().to_string()))
}

fn required<'a>(path: &'a Option<PathBuf>, flag: &str, why: &str) -> CliResult<&'a Path> {
    path.as_deref()
        .ok_or_else(|| Failure::input("MissingArgument", format!("{flag} is required {why}")))
}

/// `name=path`, or a bare path named by its file stem.
fn named_path(spec: &str) -> (String, PathBuf) {
    match spec.split_once('=') {
        Some((name, path)) if !name.is_empty() => (name.to_string(), PathBuf::from(path)),
        split => {
            let path = PathBuf::from(split.map_or(spec, |(_, p)| p));
            let name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| spec.to_string());
            (name, path)
        }
    }
}

fn labels_of(records: &[PublicationRecord], subjects: &SubjectConfig) -> CliResult<Vec<bool>> {
    records
        .iter()
        .map(|r| derive_relevance_label(r, subjects).map_err(Failure::from))
        .collect()
}

fn year_strata(records: &[PublicationRecord]) -> Vec<i64> {
    records.iter().map(|r| i64::from(r.year.unwrap_or(0))).collect()
}

fn load_grid(run: &mut Run, path: Option<&Path>, default: GridSpec) -> CliResult<GridSpec> {
    match path {
        None => Ok(default),
        Some(p) => {
            run.input(p)?;
            let text = std::fs::read_to_string(p).map_err(|e| Failure::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| Failure::input("InvalidGrid", format!("{}: {e}", p.display())))
        }
    }
}

fn load_embeddings(run: &mut Run, path: &Path) -> CliResult<EmbeddingTable> {
    run.input(path)?;
    let reader = open(path)?;
    let table: EmbeddingTable =
        run.stage("embeddings", || read_embeddings(reader).map_err(|e| Failure::from(e).at(path)))?;
    if table.manifest.is_none() {
        eprintln!(
            "warning: {} declares no embedding manifest; the embedded text convention is unknown",
            path.display()
        );
    }
    run.count("embeddings", table.len());
    Ok(table)
}

// ---------------------------------------------------------------------------

pub fn split(a: SplitArgs, cfg: &FileConfig) -> CliResult<()> {
    let fractions = SplitFractions {
        dev: a.dev.or(cfg.split.dev).unwrap_or(0.1),
        test: a.test.or(cfg.split.test).unwrap_or(0.1),
    };
    let subjects_path = a.subjects.clone().or_else(|| cfg.subjects.clone());
    let mut run = Run::start(
        "split",
        Some(a.seed),
        json!({
            "corpus": a.corpus.display().to_string(),
            "dev": fractions.dev,
            "test": fractions.test,
            "subjects": display(&subjects_path),
            "skip_invalid": a.skip_invalid,
        }),
        &a.out,
    )?;
    let subjects = load_subjects(&mut run, subjects_path.as_deref())?;
    let corpus = read_corpus(&mut run, &a.corpus, None, a.skip_invalid)?;
    let assignment =
        run.stage("split", || Ok(stratified_split(&corpus.records, &subjects, fractions, a.seed)?))?;

    let mut buf = Vec::new();
    assignment.write_jsonl(&mut buf)?;
    run.output("split.jsonl", &buf)?;
    let mut strata = String::from("stratum,size,dev,test\n");
    for s in &assignment.strata {
        strata.push_str(&format!(
            "{},{},{},{}\n",
            delineate_core::eval::csv_field(&s.key),
            s.size,
            s.dev,
            s.test
        ));
    }
    run.output("strata.csv", strata.as_bytes())?;
    for (name, part) in [("train", Partition::Train), ("dev", Partition::Dev), ("test", Partition::Test)] {
        run.count(name, assignment.count(part));
    }
    run.finish()?;
    Ok(())
}

// ---------------------------------------------------------------------------

pub fn train(a: TrainArgs, cfg: &FileConfig) -> CliResult<()> {
    let lexicon_path = a.lexicon.clone().or_else(|| cfg.train.lexicon.clone());
    let grid_path = a.grid.clone().or_else(|| cfg.train.grid.clone());
    let subjects_path = a.subjects.clone().or_else(|| cfg.subjects.clone());
    let mut run = Run::start(
        "train",
        Some(a.seed),
        json!({
            "method": a.method,
            "corpus": display(&a.corpus),
            "split": display(&a.split),
            "lexicon": display(&lexicon_path),
            "embeddings": display(&a.embeddings),
            "grid": display(&grid_path),
            "subjects": display(&subjects_path),
            "skip_invalid": a.skip_invalid,
        }),
        &a.out,
    )?;

    if a.method == Method::Keywords {
        let lexicon = match &lexicon_path {
            Some(p) => {
                run.input(p)?;
                KeywordLexicon::load(p).map_err(|e| Failure::from(e).at(p))?
            }
            None => KeywordLexicon::shipped(),
        };
        run.count("terms", lexicon.len());
        run.output("model.json", ModelFile::keywords(&lexicon).to_json()?.as_bytes())?;
        run.finish()?;
        return Ok(());
    }

    let subjects = load_subjects(&mut run, subjects_path.as_deref())?;
    let corpus_path = required(&a.corpus, "--corpus", "to train a learned method")?;
    let mut records = read_corpus(&mut run, corpus_path, None, a.skip_invalid)?.records;
    if let Some(split) = &a.split {
        let split = read_split(&mut run, split)?;
        records = restrict(records, &split, Partition::Train);
    }
    records.sort_by(|x, y| x.id.cmp(&y.id));
    run.count("training_records", records.len());
    let labels = labels_of(&records, &subjects)?;
    let strata = year_strata(&records);

    let (artifact, cv): (ModelArtifact<f64>, GridResult) = match a.method {
        Method::LexiconForest => {
            let lexicon = match &lexicon_path {
                Some(p) => {
                    run.input(p)?;
                    ScoredLexicon::load(p).map_err(|e| Failure::from(e).at(p))?
                }
                None => {
                    eprintln!("warning: no --lexicon given; using the uniform placeholder lexicon");
                    ScoredLexicon::placeholder()
                }
            };
            let rows = run.stage("features", || {
                records
                    .par_iter()
                    .map(|r| extract_features::<f64>(r, &lexicon).map(|f| f.values))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(Failure::from)
            })?;
            let data = Dataset::from_rows(&rows, &labels)?;
            let grid = load_grid(&mut run, grid_path.as_deref(), GridSpec::forest_default())?;
            let trainer = ForestTrainer::<f64>::default();
            let cv = run.stage("grid_search", || Ok(grid_search(&data, &strata, &grid, &trainer, a.seed)?))?;
            let params = trainer.params_for(&cv.best)?;
            let model = run.stage("fit", || Ok(train_forest(&data, &params, a.seed)?))?;
            (
                ModelArtifact::LexiconForest {
                    lexicon: lexicon.to_tsv(),
                    model,
                },
                cv,
            )
        }
        Method::EmbeddingLinear => {
            let emb_path = required(&a.embeddings, "--embeddings", "for embedding_linear")?;
            let table = load_embeddings(&mut run, emb_path)?;
            let label_map: BTreeMap<String, bool> =
                records.iter().map(|r| r.id.clone()).zip(labels.iter().copied()).collect();
            // `records` is id-sorted, so its year strata line up with the
            // id-ordered dataset rows.
            let data = embedding_dataset(&table, &label_map)?;
            let grid = load_grid(&mut run, grid_path.as_deref(), GridSpec::linear_default())?;
            let trainer = LinearTrainer::<f64>::default();
            let cv = run.stage("grid_search", || Ok(grid_search(&data, &strata, &grid, &trainer, a.seed)?))?;
            let params = trainer.params_for(&cv.best)?;
            let model = run.stage("fit", || Ok(fit_logistic(&data, &params, a.seed)?))?;
            if !model.converged {
                eprintln!("warning: optimizer stopped after {} iterations without converging", model.iterations);
            }
            (
                ModelArtifact::EmbeddingLinear {
                    embedding: table.manifest.clone(),
                    model,
                },
                cv,
            )
        }
        Method::Keywords => unreachable!("handled above"),
    };
    run.output("cv_table.csv", cv.to_csv().as_bytes())?;
    run.output("model.json", ModelFile::new(artifact).to_json()?.as_bytes())?;
    run.finish()?;
    Ok(())
}

// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
pub struct PredictionLine {
    pub id: String,
    pub label: bool,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hits: Option<Vec<String>>,
}

pub fn predict(a: PredictArgs, _cfg: &FileConfig) -> CliResult<()> {
    let mut run = Run::start(
        "predict",
        None,
        json!({
            "model": a.model.display().to_string(),
            "corpus": display(&a.input.corpus),
            "source": a.input.source,
            "embeddings": display(&a.embeddings),
            "split": display(&a.split),
            "partition": a.partition,
            "skip_invalid": a.input.skip_invalid,
        }),
        &a.out,
    )?;
    run.input(&a.model)?;
    let model = ModelFile::load(&a.model)
        .map_err(|e| Failure::from(e).at(&a.model))?
        .into_loaded()
        .map_err(|e| Failure::from(e).at(&a.model))?;
    let corpus_path = required(&a.input.corpus, "--corpus", "to predict")?;
    let mut records = read_corpus(&mut run, corpus_path, a.input.source, a.input.skip_invalid)?.records;
    if let (Some(split), Some(part)) = (&a.split, a.partition) {
        let split = read_split(&mut run, split)?;
        records = restrict(records, &split, partition(part));
    }

    let lines: Vec<PredictionLine> = match &model {
        LoadedModel::Keywords(lex) => run.stage("predict", || {
            records
                .par_iter()
                .map(|r| {
                    let m = lex.classify(r)?;
                    Ok(PredictionLine {
                        id: r.id.clone(),
                        label: m.relevant,
                        score: if m.relevant { 1.0 } else { 0.0 },
                        hits: Some(m.hits.iter().map(|&i| lex.patterns()[i].term().to_string()).collect()),
                    })
                })
                .collect::<CliResult<Vec<_>>>()
        })?,
        LoadedModel::LexiconForest { lexicon, model } => run.stage("predict", || {
            records
                .par_iter()
                .map(|r| {
                    let f = extract_features::<f64>(r, lexicon)?;
                    let (label, score) = predict_forest(model, &f.values)?;
                    Ok(PredictionLine { id: r.id.clone(), label, score, hits: None })
                })
                .collect::<CliResult<Vec<_>>>()
        })?,
        LoadedModel::EmbeddingLinear { embedding, model } => {
            let emb_path = required(&a.embeddings, "--embeddings", "for an embedding_linear model")?;
            let table = load_embeddings(&mut run, emb_path)?;
            if table.manifest.is_some() && embedding.is_some() && &table.manifest != embedding {
                eprintln!("warning: embedding manifest differs from the one the model was trained with");
            }
            run.stage("predict", || {
                records
                    .par_iter()
                    .map(|r| {
                        let x = table
                            .get(&r.id)
                            .ok_or_else(|| LearnError::MissingEmbedding(r.id.clone()))?;
                        let (label, score) = model.predict(x)?;
                        Ok(PredictionLine { id: r.id.clone(), label, score, hits: None })
                    })
                    .collect::<CliResult<Vec<_>>>()
            })?
        }
    };

    let mut out = Vec::new();
    for line in &lines {
        serde_json::to_writer(&mut out, line).map_err(|e| Failure::input("Io", e.to_string()))?;
        out.push(b'\n');
    }
    run.count("predicted", lines.len());
    run.count("predicted_relevant", lines.iter().filter(|l| l.label).count());
    run.output("predictions.jsonl", &out)?;
    run.finish()?;
    Ok(())
}

pub fn read_predictions(path: &Path) -> CliResult<HashMap<String, bool>> {
    let mut map = HashMap::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Failure::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: PredictionLine = serde_json::from_str(&line)
            .map_err(|e| Failure::data("Parse", format!("{}:{}: {e}", path.display(), i + 1)))?;
        if map.insert(row.id.clone(), row.label).is_some() {
            return Err(Failure::data(
                "DuplicateId",
                format!("{}:{}: id {} predicted twice", path.display(), i + 1, row.id),
            ));
        }
    }
    Ok(map)
}

// ---------------------------------------------------------------------------

pub fn evaluate(a: EvaluateArgs, cfg: &FileConfig) -> CliResult<()> {
    let format = a.format.or(cfg.evaluate.format).unwrap_or(Format::Table);
    let layout = match a.layout.or(cfg.evaluate.layout).unwrap_or(Layout::TwoClass) {
        Layout::PositiveOnly => TableLayout::PositiveOnly,
        Layout::TwoClass => TableLayout::TwoClass,
    };
    let subjects_path = a.subjects.clone().or_else(|| cfg.subjects.clone());
    let named: Vec<(String, PathBuf)> = a.predictions.iter().map(|s| named_path(s)).collect();
    let mut run = Run::start(
        "evaluate",
        None,
        json!({
            "predictions": named.iter().map(|(n, p)| json!({"name": n, "path": p.display().to_string()})).collect::<Vec<_>>(),
            "corpus": a.corpus.display().to_string(),
            "split": display(&a.split),
            "partition": a.partition,
            "subjects": display(&subjects_path),
            "format": format,
            "layout": layout,
        }),
        &a.out,
    )?;
    let subjects = load_subjects(&mut run, subjects_path.as_deref())?;
    let mut records = read_corpus(&mut run, &a.corpus, None, a.skip_invalid)?.records;
    if let (Some(split), Some(part)) = (&a.split, a.partition) {
        let split = read_split(&mut run, split)?;
        records = restrict(records, &split, partition(part));
    }
    let label_vec = labels_of(&records, &subjects)?;
    let labels: HashMap<String, bool> = records.iter().map(|r| r.id.clone()).zip(label_vec).collect();
    let years: HashMap<String, i32> = records.iter().filter_map(|r| Some((r.id.clone(), r.year?))).collect();
    run.count("labeled_records", labels.len());

    let mut reports: Vec<(String, EvalReport<f64>)> = Vec::new();
    for (name, path) in &named {
        run.input(path)?;
        let preds = read_predictions(path)?;
        let report = compute_metrics::<f64>(&preds, &labels, &years).map_err(|e| Failure::from(e).at(path))?;
        reports.push((name.clone(), report));
    }
    for (name, report) in &reports {
        match format {
            Format::Table => {
                let text = report.render_text(layout);
                println!("{name}\n{text}");
                run.output(&format!("report_{name}.txt"), text.as_bytes())?;
            }
            Format::Csv => {
                run.output(&format!("report_{name}.csv"), report.to_csv().as_bytes())?;
            }
        }
    }
    let refs: Vec<(&str, &EvalReport<f64>)> = reports.iter().map(|(n, r)| (n.as_str(), r)).collect();
    run.output("f1_by_year.csv", f1_by_year_csv(&refs).as_bytes())?;
    run.finish()?;
    Ok(())
}

pub fn crosstab(a: CrosstabArgs, cfg: &FileConfig) -> CliResult<()> {
    let format = a.format.or(cfg.crosstab.format).unwrap_or(Format::Table);
    let source = a.source.unwrap_or(Source::Mag);
    let named: Vec<(String, PathBuf)> = a.predictions.iter().map(|s| named_path(s)).collect();
    let mut run = Run::start(
        "crosstab",
        None,
        json!({
            "predictions": named.iter().map(|(n, p)| json!({"name": n, "path": p.display().to_string()})).collect::<Vec<_>>(),
            "corpus": a.corpus.display().to_string(),
            "source": source,
            "format": format,
        }),
        &a.out,
    )?;
    let records = read_corpus(&mut run, &a.corpus, Some(source), a.skip_invalid)?.records;
    let mut preds = BTreeMap::new();
    for (name, path) in &named {
        run.input(path)?;
        preds.insert(name.clone(), read_predictions(path)?);
    }
    let table = field_crosstab::<f64>(&records, &preds);
    match format {
        Format::Table => {
            let text = table.render_text();
            print!("{text}");
            run.output("crosstab.txt", text.as_bytes())?;
        }
        Format::Csv => {
            run.output("crosstab.csv", table.to_csv().as_bytes())?;
        }
    }
    run.finish()?;
    Ok(())
}

// ---------------------------------------------------------------------------

pub fn dedup(a: DedupArgs, cfg: &FileConfig) -> CliResult<()> {
    let inputs: Vec<(Source, PathBuf)> = a
        .input
        .iter()
        .map(|spec| {
            let (src, path) = spec
                .split_once('=')
                .ok_or_else(|| Failure::input("Usage", format!("--input expects source=path, got `{spec}`")))?;
            let src: Source = src.parse().map_err(Failure::from)?;
            Ok((src, PathBuf::from(path)))
        })
        .collect::<CliResult<_>>()?;
    let defaults = LinkageConfig::default();
    let config = LinkageConfig {
        source_priority: a
            .priority
            .clone()
            .or_else(|| cfg.dedup.source_priority.clone())
            .unwrap_or(defaults.source_priority),
        spill: SpillConfig {
            max_in_memory: a
                .max_in_memory
                .or(cfg.dedup.max_in_memory)
                .unwrap_or(defaults.spill.max_in_memory),
            dir: std::env::var_os(SPILL_DIR_ENV).map(PathBuf::from),
        },
    };
    let mut run = Run::start(
        "dedup",
        None,
        json!({
            "inputs": inputs.iter().map(|(s, p)| json!({"source": s, "path": p.display().to_string()})).collect::<Vec<_>>(),
            "source_priority": config.source_priority,
            "max_in_memory": config.spill.max_in_memory,
        }),
        &a.out,
    )?;
    let mut records = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (source, path) in &inputs {
        let corpus = read_corpus(&mut run, path, Some(*source), a.skip_invalid)?;
        for r in corpus.records {
            if !seen.insert(r.id.clone()) {
                return Err(Failure::data(
                    "DuplicateId",
                    format!("{}: id {} already appeared in an earlier input", path.display(), r.id),
                ));
            }
            records.push(r);
        }
    }
    run.count("records_read", records.len());
    let (clusters, stats) = run.stage("cluster", || Ok(cluster(&records, &config)?))?;
    run.count("clusters", stats.clusters);
    run.count("duplicate_clusters", clusters.iter().filter(|c| c.member_ids.len() > 1).count());
    run.count("spilled_runs", stats.spilled_runs);
    let mut buf = Vec::new();
    write_clusters_jsonl(&mut buf, &clusters).map_err(|e| Failure::input("Io", e.to_string()))?;
    run.output("clusters.jsonl", &buf)?;
    run.output("crosswalk.csv", crosswalk_csv(&clusters).as_bytes())?;
    run.finish()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn named_paths() {
        assert_eq!(named_path("kw=out/p.jsonl"), ("kw".into(), PathBuf::from("out/p.jsonl")));
        assert_eq!(named_path("out/forest.jsonl"), ("forest".into(), PathBuf::from("out/forest.jsonl")));
        assert_eq!(named_path("=x.jsonl").0, "x");
    }
}

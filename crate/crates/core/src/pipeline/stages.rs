use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;

use super::{BackendKind, PipelineError, Stage, StageIo};
use crate::benchmine::{self, AnnotationRecord, CandidateCase};
use crate::docmap::{crawl_docstrings, count_root_modules, EntityDocMapping, ModuleFrequency};
use crate::ingest::{self, IngestOutcome, WordListClassifier};
use crate::inject::{inject_script, InjectReport};
use crate::metrics::{read_ratings, score_report, PredictionRow, ScoreOptions};
use crate::predictor::{
    predict_batch, train_ngram, DecoderConfig, ExternalModel, LanguageModel, NgramModel, PredictOptions,
    PredictionRecord,
};
use crate::script::{ScriptDoc, Split, CELL, SPECIAL_TOKENS};
use crate::tokenizer::{train_bpe, Tokenizer};

pub(crate) fn run(io: &mut StageIo<'_>) -> Result<(), PipelineError> {
    match io.stage {
        Stage::Ingest => ingest(io),
        Stage::Split => split(io),
        Stage::Modfreq => modfreq(io),
        Stage::Docmap => docmap(io),
        Stage::Inject => inject(io),
        Stage::Concat => concat(io),
        Stage::BpeTrain => bpe_train(io),
        Stage::TrainLm => train_lm(io),
        Stage::BenchMine => bench_mine(io),
        Stage::BenchFilter => bench_filter(io),
        Stage::BenchAccept => bench_accept(io),
        Stage::BenchPost => bench_post(io),
        Stage::BenchStats => bench_stats(io),
        Stage::BenchModules => bench_modules(io),
        Stage::Predict => predict(io),
        Stage::Score => score(io),
        Stage::Report => report(io),
    }
}

fn to_jsonl<T: Serialize>(records: &[T]) -> String {
    benchmine::write_jsonl(records)
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    s
}

fn read_jsonl<T: DeserializeOwned>(io: &mut StageIo<'_>, path: &Path) -> Result<Vec<T>, PipelineError> {
    let text = io.read(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| io.bad(path, format!("line {}: {e}", i + 1))))
        .collect()
}

fn scripts_of(docs: Vec<ScriptDoc>, split: Split) -> Vec<ScriptDoc> {
    docs.into_iter().filter(|d| d.split == split).collect()
}

fn ingest(io: &mut StageIo<'_>) -> Result<(), PipelineError> {
    let cfg = io.cfg;
    let manifest = io.read(&cfg.manifest)?;
    let projects = ingest::read_manifest(&manifest).map_err(|e| io.bad(&cfg.manifest, e))?;
    let kept = ingest::filter_forks(&projects);
    let files = ingest::notebook_files(&kept, &cfg.corpus_dir);
    for (_, path, _) in &files {
        if path.exists() {
            io.record_input(path)?;
        }
    }
    let classifier = WordListClassifier::bundled();
    let outcomes: Vec<IngestOutcome> = files
        .par_iter()
        .map(|(project, path, shown)| ingest::ingest_file(path, shown, project, classifier))
        .collect();
    let mut docs = Vec::new();
    let mut rejected = Vec::new();
    for o in outcomes {
        match o {
            IngestOutcome::Converted(d) => docs.push(d),
            IngestOutcome::Rejected { path, reason } => rejected.push(json!({"path": path, "reason": reason})),
        }
    }
    docs.sort_by(|a, b| (&a.project, &a.source).cmp(&(&b.project, &b.source)));
    let report = json!({
        "projects": projects.len(),
        "forks_dropped": projects.len() - kept.len(),
        "files": files.len(),
        "converted": docs.len(),
        "rejected": rejected,
    });
    io.write(cfg.scripts_path(), to_jsonl(&docs));
    io.write(cfg.output_dir.join("ingest_report.json"), pretty(&report));
    Ok(())
}

fn split(io: &mut StageIo<'_>) -> Result<(), PipelineError> {
    let cfg = io.cfg;
    let mut docs: Vec<ScriptDoc> = read_jsonl(io, &cfg.scripts_path())?;
    if docs.is_empty() {
        return Err(io.fail("no scripts to split"));
    }
    let summary = ingest::split_corpus(&mut docs, cfg.split_ratio, io.seed);
    io.write(cfg.split_path(), to_jsonl(&docs));
    io.write(cfg.output_dir.join("split_summary.json"), pretty(&summary));
    Ok(())
}

fn modfreq(io: &mut StageIo<'_>) -> Result<(), PipelineError> {
    let cfg = io.cfg;
    let train = scripts_of(read_jsonl(io, &cfg.split_path())?, Split::Train);
    let (freq, skipped) = count_root_modules(&train);
    for s in &skipped {
        log::warn!("modfreq: {s} does not parse");
    }
    io.write(cfg.modfreq_path(), ModuleFrequency::to_tsv(&freq.top_k(cfg.top_k, true)));
    Ok(())
}

fn docmap(io: &mut StageIo<'_>) -> Result<(), PipelineError> {
    let cfg = io.cfg;
    if cfg.source_roots.is_empty() {
        return Err(PipelineError::ConfigInvalid(vec![
            "docmap needs source_roots (or set mapping to an existing file)".into(),
        ]));
    }
    for root in &cfg.source_roots {
        if !root.is_dir() {
            return Err(io.missing(root));
        }
    }
    let modfreq = io.read(&cfg.modfreq_path())?;
    let filter: BTreeSet<String> = modfreq
        .lines()
        .filter_map(|l| l.split('\t').next())
        .filter(|m| !m.is_empty())
        .map(str::to_string)
        .collect();
    if filter.is_empty() {
        log::warn!("docmap: no third-party modules in the training split; the mapping will be empty");
    }
    let crawl = if filter.is_empty() {
        Default::default()
    } else {
        crawl_docstrings(&cfg.source_roots, &filter)
    };
    let report = json!({
        "modules": filter.len(),
        "visited": crawl.mapping.visited,
        "documented": crawl.mapping.documented,
        "coverage": crawl.mapping.coverage(),
        "entries": crawl.mapping.len(),
        "unparsable_files": crawl.skipped.len(),
        "module_collisions": crawl.collisions.len(),
    });
    io.write(cfg.crawled_mapping_path(), crawl.mapping.to_jsonl());
    io.write(cfg.output_dir.join("docmap_report.json"), pretty(&report));
    Ok(())
}

fn inject(io: &mut StageIo<'_>) -> Result<(), PipelineError> {
    let cfg = io.cfg;
    let mapping_path = cfg.mapping_path();
    let mapping_text = io.read(&mapping_path)?;
    let mapping = EntityDocMapping::from_jsonl(&mapping_text).map_err(|e| io.bad(&mapping_path, e))?;
    let docs: Vec<ScriptDoc> = read_jsonl(io, &cfg.split_path())?;
    let seed = io.seed;
    let results: Vec<(ScriptDoc, Option<InjectReport>)> = docs
        .par_iter()
        .map(|d| {
            if d.split == Split::Train {
                let (out, r) = inject_script(d, &mapping, cfg.inject_rate, seed, cfg.strip_existing_comments);
                (out, Some(r))
            } else {
                (d.clone(), None)
            }
        })
        .collect();
    let mut total = InjectReport::default();
    let mut out = Vec::with_capacity(results.len());
    for (d, r) in results {
        if let Some(r) = r {
            total.merge(&r);
        }
        out.push(d);
    }
    io.write(cfg.injected_path(), to_jsonl(&out));
    io.write(cfg.output_dir.join("inject_report.json"), pretty(&total));
    Ok(())
}

fn concat(io: &mut StageIo<'_>) -> Result<(), PipelineError> {
    let cfg = io.cfg;
    let train = scripts_of(read_jsonl(io, &cfg.injected_path())?, Split::Train);
    if train.is_empty() {
        return Err(io.fail("the training split is empty"));
    }
    io.write(cfg.train_text_path(), ingest::concatenate_training_file(&train));
    Ok(())
}

fn bpe_train(io: &mut StageIo<'_>) -> Result<(), PipelineError> {
    let cfg = io.cfg;
    let corpus = io.read_bytes(&cfg.train_text_path())?;
    let tok = train_bpe(&corpus, cfg.vocab_size, &SPECIAL_TOKENS).map_err(|e| io.fail(e))?;
    let (vocab, merges) = tok.to_file_texts();
    let dir = cfg.trained_tokenizer_dir();
    io.write(dir.join("vocab.txt"), vocab);
    io.write(dir.join("merges.txt"), merges);
    Ok(())
}

fn load_tokenizer(io: &mut StageIo<'_>) -> Result<Tokenizer, PipelineError> {
    let dir = io.cfg.tokenizer_path();
    let merges = dir.join("merges.txt");
    if !merges.exists() {
        return Err(io.missing(&merges));
    }
    io.record_input(&merges)?;
    for vocab in ["vocab.txt", "vocab.json"].map(|f| dir.join(f)) {
        if vocab.exists() {
            io.record_input(&vocab)?;
            break;
        }
    }
    Tokenizer::load_dir(&dir, &SPECIAL_TOKENS).map_err(|e| io.bad(&dir, e))
}

fn train_lm(io: &mut StageIo<'_>) -> Result<(), PipelineError> {
    let cfg = io.cfg;
    let tok = load_tokenizer(io)?;
    let text = io.read(&cfg.train_text_path())?;
    let tokens = tok.encode(&text);
    let model = train_ngram(&tokens, cfg.ngram_order, tok.vocab_size()).map_err(|e| io.fail(e))?;
    io.write(cfg.trained_model_path(), model.to_json());
    Ok(())
}

fn bench_mine(io: &mut StageIo<'_>) -> Result<(), PipelineError> {
    let cfg = io.cfg;
    let eval = scripts_of(read_jsonl(io, &cfg.split_path())?, Split::Eval);
    let opts = benchmine::MineOptions {
        max_intent_tokens: cfg.max_intent_tokens,
        sample_n: (cfg.sample_n > 0).then_some(cfg.sample_n),
        seed: io.seed,
    };
    let cands = benchmine::mine_candidates(&eval, opts, WordListClassifier::bundled());
    io.write(cfg.candidates_path(), to_jsonl(&cands));
    Ok(())
}

fn bench_filter(io: &mut StageIo<'_>) -> Result<(), PipelineError> {
    let cfg = io.cfg;
    let cands: Vec<CandidateCase> = read_jsonl(io, &cfg.candidates_path())?;
    let corpus = io.read_bytes(&cfg.train_text_path())?;
    let total = cands.len();
    let out = benchmine::overlap_filter(cands, &corpus);
    let report = json!({
        "candidates": total,
        "kept": out.kept.len(),
        "dropped": out.dropped.iter().map(|c| c.id.as_str()).collect::<Vec<_>>(),
    });
    io.write(cfg.filtered_path(), to_jsonl(&out.kept));
    io.write(cfg.output_dir.join("bench/overlap.json"), pretty(&report));
    Ok(())
}

fn annotations_for(io: &mut StageIo<'_>, ids: &BTreeSet<&str>) -> Result<Vec<AnnotationRecord>, PipelineError> {
    let Some(path) = io.cfg.annotations.clone() else {
        return Err(PipelineError::ConfigInvalid(vec![
            "curation needs annotations (a file of per-annotator judgments)".into(),
        ]));
    };
    let text = io.read(&path)?;
    let all = benchmine::read_annotations(&text).map_err(|e| io.bad(&path, e))?;
    let (known, unknown): (Vec<_>, Vec<_>) = all.into_iter().partition(|a| ids.contains(a.case_id.as_str()));
    if !unknown.is_empty() {
        log::warn!("{} annotation(s) refer to cases that are not candidates; ignored", unknown.len());
    }
    Ok(known)
}

fn bench_accept(io: &mut StageIo<'_>) -> Result<(), PipelineError> {
    let cfg = io.cfg;
    let cands: Vec<CandidateCase> = read_jsonl(io, &cfg.filtered_path())?;
    let ids: BTreeSet<&str> = cands.iter().map(|c| c.id.as_str()).collect();
    let anns = annotations_for(io, &ids)?;
    let decisions = benchmine::curation_accept(&anns).map_err(|e| io.fail(e))?;
    let mut by_case: BTreeMap<&str, Vec<&AnnotationRecord>> = BTreeMap::new();
    for a in &anns {
        by_case.entry(&a.case_id).or_default().push(a);
    }
    let matrix: Vec<Vec<bool>> = by_case
        .values()
        .map(|v| {
            let mut v = v.clone();
            v.sort_by(|a, b| a.annotator_id.cmp(&b.annotator_id));
            v.iter().map(|a| a.relevant).collect()
        })
        .collect();
    let kappa = if matrix.is_empty() {
        None
    } else {
        Some(benchmine::fleiss_kappa(&matrix).map_err(|e| io.fail(e))?)
    };
    let accepted = decisions.iter().filter(|d| d.accepted).count();
    let report = json!({
        "candidates": cands.len(),
        "reviewed": decisions.len(),
        "accepted": accepted,
        "fleiss_kappa": kappa,
    });
    io.write(cfg.acceptance_path(), to_jsonl(&decisions));
    io.write(cfg.output_dir.join("bench/agreement.json"), pretty(&report));
    Ok(())
}

fn bench_post(io: &mut StageIo<'_>) -> Result<(), PipelineError> {
    let cfg = io.cfg;
    let cands: Vec<CandidateCase> = read_jsonl(io, &cfg.filtered_path())?;
    let decisions: Vec<benchmine::Acceptance> = read_jsonl(io, &cfg.acceptance_path())?;
    let ids: BTreeSet<&str> = cands.iter().map(|c| c.id.as_str()).collect();
    let anns = annotations_for(io, &ids)?;
    let spans: BTreeMap<&str, (usize, usize)> = decisions
        .iter()
        .filter(|d| d.accepted)
        .filter_map(|d| d.span.map(|s| (d.case_id.as_str(), s)))
        .collect();
    let mut cases = Vec::new();
    for c in &cands {
        let Some(span) = spans.get(c.id.as_str()) else { continue };
        let case_anns: Vec<AnnotationRecord> = anns.iter().filter(|a| a.case_id == c.id).cloned().collect();
        cases.push(benchmine::postprocess(c, *span, &case_anns).map_err(|e| io.fail(e))?);
    }
    io.write(cfg.mined_benchmark_path(), to_jsonl(&cases));
    Ok(())
}

fn read_benchmark(io: &mut StageIo<'_>) -> Result<Vec<benchmine::BenchmarkCase>, PipelineError> {
    let path = io.cfg.benchmark_path();
    let text = io.read(&path)?;
    benchmine::read_benchmark(&text).map_err(|e| io.bad(&path, e))
}

fn bench_stats(io: &mut StageIo<'_>) -> Result<(), PipelineError> {
    let cases = read_benchmark(io)?;
    let stats = benchmine::benchmark_stats(&cases).map_err(|e| io.fail(e))?;
    io.write(io.cfg.output_dir.join("bench/stats.json"), pretty(&stats));
    Ok(())
}

fn bench_modules(io: &mut StageIo<'_>) -> Result<(), PipelineError> {
    let cases = read_benchmark(io)?;
    let (freq, skipped) = benchmine::module_distribution(&cases);
    for id in &skipped {
        log::warn!("bench-modules: target of {id} does not parse");
    }
    let rows = freq.top_k(usize::MAX, false);
    io.write(io.cfg.output_dir.join("bench/modules.tsv"), ModuleFrequency::to_tsv(&rows));
    Ok(())
}

fn backend(io: &mut StageIo<'_>, tok: &Tokenizer) -> Result<Box<dyn LanguageModel>, PipelineError> {
    let cfg = io.cfg;
    match cfg.backend {
        BackendKind::Ngram => {
            let path = cfg.model_path();
            let text = io.read(&path)?;
            let model = NgramModel::from_json(&text).map_err(|e| io.bad(&path, e))?;
            if model.vocab_size() != tok.vocab_size() {
                return Err(io.bad(
                    &path,
                    format!("model covers {} tokens, tokenizer has {}", model.vocab_size(), tok.vocab_size()),
                ));
            }
            Ok(Box::new(model))
        }
        BackendKind::Extern => {
            let command = cfg.extern_command.as_deref().unwrap_or_default();
            let mut parts = command.split_whitespace().map(str::to_string);
            let program = parts.next().ok_or_else(|| io.fail("extern_command is empty"))?;
            let args: Vec<String> = parts.collect();
            let model = ExternalModel::spawn(&program, &args, tok.vocab_size()).map_err(|e| io.fail(e))?;
            Ok(Box::new(model.with_id(format!("extern:{command}"))))
        }
    }
}

fn predict(io: &mut StageIo<'_>) -> Result<(), PipelineError> {
    let cfg = io.cfg;
    let cases = read_benchmark(io)?;
    let tok = load_tokenizer(io)?;
    let stop = tok.special_id(CELL).ok_or_else(|| io.fail("tokenizer has no cell-boundary token"))?;
    let lm = backend(io, &tok)?;
    let opts = PredictOptions {
        decoder: DecoderConfig {
            beam_width: cfg.beam_width,
            min_tokens: cfg.min_tokens,
            max_tokens: cfg.max_tokens,
            stop_token: stop,
        },
        max_context: cfg.max_context,
        record_latency: cfg.record_latency,
    };
    let records = predict_batch(&cases, lm.as_ref(), &tok, &opts);
    let failed = records.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        log::warn!("predict: {failed} of {} case(s) failed; see the error field", records.len());
    }
    io.write(cfg.predictions_path(), to_jsonl(&records));
    Ok(())
}

fn score(io: &mut StageIo<'_>) -> Result<(), PipelineError> {
    let cfg = io.cfg;
    let cases = read_benchmark(io)?;
    let pred_path = cfg.predictions_path();
    let records: Vec<PredictionRecord> = read_jsonl(io, &pred_path)?;
    let ratings = match cfg.ratings.clone() {
        Some(path) => {
            let text = io.read(&path)?;
            read_ratings(&text).map_err(|e| io.bad(&path, e))?
        }
        None => Vec::new(),
    };
    let targets: BTreeMap<String, String> = cases.into_iter().map(|c| (c.id, c.target)).collect();
    let rows: Vec<PredictionRow<'_>> = records
        .iter()
        .map(|r| PredictionRow {
            id: &r.id,
            backend_id: &r.backend_id,
            prediction: &r.prediction,
        })
        .collect();
    let opts = ScoreOptions {
        call_filter: cfg.call_filter,
        per_rater: cfg.per_rater,
    };
    let table = score_report(&rows, &targets, &ratings, opts).map_err(|e| io.bad(&pred_path, e))?;
    let dir = cfg.report_path();
    io.write(dir.join("report.tsv"), table.to_tsv());
    io.write(dir.join("report.json"), table.to_json());
    Ok(())
}

fn optional_json(io: &mut StageIo<'_>, path: PathBuf) -> Result<Option<serde_json::Value>, PipelineError> {
    if !path.exists() {
        return Ok(None);
    }
    let text = io.read(&path)?;
    serde_json::from_str(&text).map(Some).map_err(|e| io.bad(&path, e))
}

fn report(io: &mut StageIo<'_>) -> Result<(), PipelineError> {
    let cfg = io.cfg;
    let table = io.read(&cfg.report_path().join("report.tsv"))?;
    let mut out = String::from("# Run summary\n");
    let sections = [
        ("Corpus", cfg.output_dir.join("split_summary.json")),
        ("Comment injection", cfg.output_dir.join("inject_report.json")),
        ("Overlap filter", cfg.output_dir.join("bench/overlap.json")),
        ("Curation", cfg.output_dir.join("bench/agreement.json")),
        ("Benchmark", cfg.output_dir.join("bench/stats.json")),
    ];
    for (title, path) in sections {
        let Some(value) = optional_json(io, path)? else { continue };
        out.push_str(&format!("\n## {title}\n"));
        if let Some(obj) = value.as_object() {
            for (k, v) in obj {
                let shown = match v {
                    serde_json::Value::Array(a) => format!("{} item(s)", a.len()),
                    other => other.to_string(),
                };
                out.push_str(&format!("{k}: {shown}\n"));
            }
        }
    }
    out.push_str("\n## Scores\n");
    out.push_str(&table);
    io.write(cfg.report_path().join("summary.txt"), out);
    Ok(())
}

//! One function per subcommand, all run through [`run_stage`].

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::Utc;
use serde::Serialize;
use serde_json::{json, Value};

use claimnorm::augment::{augment_pairs, read_examples_jsonl, write_examples_jsonl, AugmentOptions, TrainingExample};
use claimnorm::cleaning::{dedup_post, filter_pairs};
use claimnorm::corpus::{dataset_stats, load_dataset_with, write_jsonl, Format, PostClaimPair, Split};
use claimnorm::inference::{
    normalize_batch, read_predictions_csv, read_predictions_jsonl, write_predictions_csv,
    write_predictions_jsonl, InferenceError, InferenceOptions, Prediction, PromptStyle, RunReport, ShotStore,
};
use claimnorm::llm::{Generator, ResponseCache};
use claimnorm::metrics::{evaluate_run, load_external_scores, render_table, MetricReport};
use claimnorm::retrieval::{replace_subsets, Embedder, VectorIndex};

use crate::error::CliError;
use crate::manifest::{append_manifest, Counts, FileDigest, RunManifest, Status, WorkdirLock};
use crate::{Command, Context, Output, Services};

/// What a stage body hands back to the runner.
pub struct StageOutput {
    pub outputs: Vec<PathBuf>,
    pub counts: Counts,
    pub summary: Value,
    pub table: Option<String>,
}

/// Lock the working directory, check and digest inputs, run `body`, and
/// append a manifest whatever the outcome.
pub fn run_stage<F>(ctx: &Context, stage: &str, inputs: &[&Path], body: F) -> Result<Output, CliError>
where
    F: FnOnce() -> Result<StageOutput, CliError>,
{
    let _lock = WorkdirLock::acquire(&ctx.workdir).map_err(|e| e.in_stage(stage))?;
    let started_at = Utc::now().to_rfc3339();
    let mut digests = Vec::with_capacity(inputs.len());
    for path in inputs {
        let d = FileDigest::of(path)
            .map_err(|e| CliError::data(format!("missing input file {}: {e}", path.display())).in_stage(stage))?;
        digests.push(d);
    }
    let mut manifest = RunManifest {
        stage: stage.to_string(),
        status: Status::Ok,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        started_at,
        finished_at: String::new(),
        seed: ctx.config.decoding.seed,
        mock_services: ctx.mock,
        config: ctx.config.clone(),
        inputs: digests,
        outputs: Vec::new(),
        counts: Counts::default(),
        error: None,
    };
    let result = body().and_then(|out| {
        let outputs = out
            .outputs
            .iter()
            .map(|p| FileDigest::of(p))
            .collect::<Result<Vec<_>, _>>()
            .map_err(CliError::from)?;
        Ok((out, outputs))
    });
    manifest.finished_at = Utc::now().to_rfc3339();
    match result {
        Ok((out, outputs)) => {
            manifest.outputs = outputs;
            manifest.counts = out.counts;
            append_manifest(&ctx.workdir, &manifest).map_err(|e| e.in_stage(stage))?;
            let mut summary = json!({
                "stage": stage,
                "counts": out.counts,
                "outputs": manifest.outputs,
            });
            if let (Value::Object(map), Value::Object(extra)) = (&mut summary, out.summary) {
                map.extend(extra);
            }
            Ok(Output { summary, table: out.table })
        }
        Err(e) => {
            manifest.status = Status::Failed;
            manifest.error = Some(e.message.clone());
            append_manifest(&ctx.workdir, &manifest).map_err(|e| e.in_stage(stage))?;
            Err(e.in_stage(stage))
        }
    }
}

pub fn dispatch(ctx: &Context, command: &Command) -> Result<Output, CliError> {
    match command {
        Command::Stats { input, split } => cmd_stats(ctx, input, split),
        Command::Clean { input, output, split } => cmd_clean(ctx, input, output, split),
        Command::Filter { input, output, report, split } => cmd_filter(ctx, input, output, report.as_deref(), split),
        Command::Augment { input, output, dead_letters, split } => {
            cmd_augment(ctx, input, output, dead_letters.as_deref(), split)
        }
        Command::Index { input, output, replace_subsets } => cmd_index(ctx, input, output, replace_subsets.as_deref()),
        Command::Infer { input, output, examples, index, style, split } => cmd_infer(
            ctx,
            input,
            output,
            examples.as_deref(),
            index.as_deref(),
            (*style).into(),
            split,
        ),
        Command::Evaluate { predictions, references, output, bertscore, split } => {
            cmd_evaluate(ctx, predictions, references, output, bertscore.as_deref(), split)
        }
        Command::Ablate { input, examples, index, output, split } => cmd_ablate(ctx, input, examples, index, output, split),
    }
}

fn parse_split(s: &str) -> Result<Split, CliError> {
    s.parse::<Split>().map_err(CliError::from)
}

fn load(ctx: &Context, path: &Path, split: &str) -> Result<Vec<PostClaimPair>, CliError> {
    let split = parse_split(split)?;
    let format = Format::from_path(path)
        .ok_or_else(|| CliError::config(format!("cannot tell the format of {} (use .csv or .jsonl)", path.display())))?;
    Ok(load_dataset_with(path, format, &ctx.config.language, split, &ctx.config.languages())?)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", path.display())))
}

fn write_json_lines<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut w = create(path)?;
    for row in rows {
        serde_json::to_writer(&mut w, row).map_err(|e| CliError::data(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn read_examples(path: &Path) -> Result<Vec<TrainingExample>, CliError> {
    let file = File::open(path).map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    read_examples_jsonl(BufReader::new(file))
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn read_predictions(path: &Path) -> Result<Vec<Prediction>, CliError> {
    let file = File::open(path).map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    let result = if path.extension().is_some_and(|e| e == "csv") {
        read_predictions_csv(file)
    } else {
        read_predictions_jsonl(BufReader::new(file))
    };
    result.map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn generator<'a>(ctx: &Context, services: &'a Services, cache: &'a ResponseCache) -> Generator<'a> {
    Generator::new(services.chat.as_ref(), cache)
        .with_retry(ctx.config.retry)
        .with_params(ctx.config.decoding)
}

fn embedder<'a>(ctx: &Context, services: &'a Services, cache: &'a ResponseCache, dim: usize) -> Embedder<'a> {
    Embedder::new(services.embeddings.as_ref(), cache)
        .with_batch_size(ctx.config.embedding_batch_size)
        .with_dim(dim)
        .with_retry(ctx.config.retry)
        .with_concurrency(ctx.config.concurrency)
}

pub fn cmd_stats(ctx: &Context, input: &Path, split: &str) -> Result<Output, CliError> {
    run_stage(ctx, "stats", &[input], || {
        let pairs = load(ctx, input, split)?;
        let stats = dataset_stats(&pairs)?;
        Ok(StageOutput {
            outputs: Vec::new(),
            counts: Counts { input: pairs.len(), output: pairs.len(), ..Default::default() },
            summary: json!({ "stats": stats }),
            table: Some(format!("{stats}\n")),
        })
    })
}

pub fn cmd_clean(ctx: &Context, input: &Path, output: &Path, split: &str) -> Result<Output, CliError> {
    run_stage(ctx, "clean", &[input], || {
        let mut pairs = load(ctx, input, split)?;
        let mut changed = 0;
        for pair in &mut pairs {
            let cleaned = dedup_post(&pair.post.text);
            if cleaned != pair.post.text {
                changed += 1;
                pair.post.text = cleaned;
            }
        }
        write_jsonl(&pairs, create(output)?)?;
        Ok(StageOutput {
            outputs: vec![output.to_path_buf()],
            counts: Counts { input: pairs.len(), output: pairs.len(), ..Default::default() },
            summary: json!({ "posts_changed": changed }),
            table: None,
        })
    })
}

pub fn cmd_filter(
    ctx: &Context,
    input: &Path,
    output: &Path,
    report: Option<&Path>,
    split: &str,
) -> Result<Output, CliError> {
    run_stage(ctx, "filter", &[input], || {
        let pairs = load(ctx, input, split)?;
        let outcome = filter_pairs(&pairs, ctx.config.threshold)?;
        write_jsonl(&outcome.retained, create(output)?)?;
        let mut outputs = vec![output.to_path_buf()];
        if let Some(report) = report {
            let records: Vec<_> = outcome.decisions.iter().map(|d| d.report_record()).collect();
            write_json_lines(report, &records)?;
            outputs.push(report.to_path_buf());
        }
        Ok(StageOutput {
            outputs,
            counts: Counts {
                input: pairs.len(),
                output: outcome.retained.len(),
                removed: outcome.removed.len(),
                dead_lettered: 0,
            },
            summary: json!({ "threshold": ctx.config.threshold }),
            table: None,
        })
    })
}

pub fn cmd_augment(
    ctx: &Context,
    input: &Path,
    output: &Path,
    dead_letters: Option<&Path>,
    split: &str,
) -> Result<Output, CliError> {
    run_stage(ctx, "augment", &[input], || {
        let pairs = load(ctx, input, split)?;
        let services = ctx.services()?;
        let cache = ctx.cache()?;
        let generator = generator(ctx, &services, &cache);
        let options = AugmentOptions {
            concurrency: ctx.config.concurrency,
            max_dead_letter_rate: ctx.config.max_dead_letter_rate,
        };
        let outcome = augment_pairs(&pairs, &generator, &options)?;
        let mut w = create(output)?;
        write_examples_jsonl(&outcome.examples, &mut w)?;
        drop(w);
        let mut outputs = vec![output.to_path_buf()];
        if let Some(path) = dead_letters {
            write_json_lines(path, &outcome.dead_letters)?;
            outputs.push(path.to_path_buf());
        }
        Ok(StageOutput {
            outputs,
            counts: Counts {
                input: pairs.len(),
                output: outcome.examples.len(),
                removed: 0,
                dead_lettered: outcome.dead_letters.len(),
            },
            summary: json!({ "cache_hits": outcome.cache_hits, "llm_calls": outcome.llm_calls }),
            table: None,
        })
    })
}

pub fn cmd_index(ctx: &Context, input: &Path, output: &Path, replaced: Option<&Path>) -> Result<Output, CliError> {
    run_stage(ctx, "index", &[input], || {
        let examples = read_examples(input)?;
        let services = ctx.services()?;
        let cache = ctx.cache()?;
        let embedder = embedder(ctx, &services, &cache, ctx.config.embedding_dim);
        let texts: Vec<String> = examples.iter().map(|e| e.post_text().to_string()).collect();
        let vectors = embedder.embed_texts(&texts)?;
        let index = VectorIndex::build(
            ctx.config.embedding_dim,
            examples.iter().map(|e| e.id().to_string()).zip(vectors),
        )?;
        if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        index.save(output)?;
        let mut outputs = vec![output.to_path_buf(), VectorIndex::sidecar_path(output)];
        let mut replacements = 0;
        if let Some(path) = replaced {
            let (updated, log) = replace_subsets(&examples, &index, &ctx.config.superset);
            replacements = log.len();
            let mut w = create(path)?;
            write_examples_jsonl(&updated, &mut w)?;
            drop(w);
            let log_path = path.with_extension("replacements.jsonl");
            write_json_lines(&log_path, &log)?;
            outputs.extend([path.to_path_buf(), log_path]);
        }
        let stats = embedder.stats();
        Ok(StageOutput {
            outputs,
            counts: Counts { input: examples.len(), output: index.len(), ..Default::default() },
            summary: json!({
                "dim": index.dim(),
                "embedding_calls": stats.calls,
                "cache_hits": stats.cache_hits,
                "subset_replacements": replacements,
            }),
            table: None,
        })
    })
}

/// Runs `normalize_batch`, loading the shot store only when needed.
fn predict(
    ctx: &Context,
    posts: &[PostClaimPair],
    style: PromptStyle,
    shots: Option<(&[TrainingExample], &VectorIndex)>,
    services: &Services,
    cache: &ResponseCache,
) -> Result<(Vec<Prediction>, RunReport), InferenceError> {
    let posts: Vec<_> = posts.iter().map(|p| p.post.clone()).collect();
    let options = InferenceOptions {
        style,
        k: ctx.config.k,
        shot_order: ctx.config.shot_order,
        concurrency: ctx.config.concurrency,
        max_dead_letter_rate: ctx.config.max_dead_letter_rate,
    };
    let generator = generator(ctx, services, cache);
    match shots {
        Some((examples, index)) => {
            let embedder = embedder(ctx, services, cache, index.dim());
            let store = ShotStore::new(index, &embedder, examples);
            normalize_batch(&posts, Some(&store), &generator, &options)
        }
        None => normalize_batch(&posts, None, &generator, &options),
    }
}

fn load_shots(examples: &Path, index: &Path) -> Result<(Vec<TrainingExample>, VectorIndex), CliError> {
    let examples = read_examples(examples)?;
    let index = VectorIndex::load(index)?;
    if let Some(e) = examples.iter().find(|e| !index.contains(e.id())) {
        return Err(CliError::data(format!("example {:?} is not in the index", e.id())));
    }
    Ok((examples, index))
}

pub fn cmd_infer(
    ctx: &Context,
    input: &Path,
    output: &Path,
    examples: Option<&Path>,
    index: Option<&Path>,
    style: PromptStyle,
    split: &str,
) -> Result<Output, CliError> {
    if output.extension().is_none_or(|e| e != "csv") {
        return Err(CliError::config("predictions output must be a .csv path").in_stage("infer"));
    }
    let shot_paths = match (style, examples, index) {
        (PromptStyle::FewShot, Some(e), Some(i)) => Some((e, i)),
        (PromptStyle::FewShot, _, _) => {
            return Err(CliError::config("few-shot inference needs --examples and --index").in_stage("infer"))
        }
        _ => None,
    };
    let mut inputs = vec![input];
    if let Some((e, i)) = shot_paths {
        inputs.extend([e, i]);
    }
    run_stage(ctx, "infer", &inputs, || {
        let posts = load(ctx, input, split)?;
        let shots = shot_paths.map(|(e, i)| load_shots(e, i)).transpose()?;
        let services = ctx.services()?;
        let cache = ctx.cache()?;
        let shot_refs = shots.as_ref().map(|(e, i)| (e.as_slice(), i));
        let (predictions, report) = predict(ctx, &posts, style, shot_refs, &services, &cache)?;
        let twin = output.with_extension("jsonl");
        write_predictions_csv(&predictions, create(output)?)?;
        write_predictions_jsonl(&predictions, create(&twin)?)?;
        Ok(StageOutput {
            outputs: vec![output.to_path_buf(), twin],
            counts: Counts {
                input: posts.len(),
                output: report.successes,
                removed: 0,
                dead_lettered: report.dead_letters,
            },
            summary: json!({ "run": report }),
            table: None,
        })
    })
}

pub fn cmd_evaluate(
    ctx: &Context,
    predictions: &Path,
    references: &Path,
    output: &Path,
    bertscore: Option<&Path>,
    split: &str,
) -> Result<Output, CliError> {
    let mut inputs = vec![predictions, references];
    inputs.extend(bertscore);
    run_stage(ctx, "evaluate", &inputs, || {
        let preds = read_predictions(predictions)?;
        let refs = load(ctx, references, split)?;
        let mut report = evaluate_run(&preds, &refs, &ctx.config.language)?;
        if let Some(path) = bertscore {
            report.merge_external(&load_external_scores(path)?)?;
        }
        fs::write(output, report.to_json() + "\n")?;
        Ok(StageOutput {
            outputs: vec![output.to_path_buf()],
            counts: Counts {
                input: refs.len(),
                output: report.n,
                removed: 0,
                dead_lettered: report.dead_letters,
            },
            summary: json!({ "report": report }),
            table: Some(report.table()),
        })
    })
}

/// Ablation configurations, in report order.
pub const ABLATION_ROWS: [(&str, PromptStyle); 3] = [
    ("w/o CoT + w/o Few-Shot", PromptStyle::Plain),
    ("w/ CoT + w/o Few-Shot", PromptStyle::ZeroShot),
    ("w/ CoT + w/ Few-Shot", PromptStyle::FewShot),
];

#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub configuration: String,
    pub style: PromptStyle,
    pub report: Option<MetricReport>,
    pub run: Option<RunReport>,
    pub error: Option<String>,
}

pub fn cmd_ablate(
    ctx: &Context,
    input: &Path,
    examples: &Path,
    index: &Path,
    output: &Path,
    split: &str,
) -> Result<Output, CliError> {
    run_stage(ctx, "ablate", &[input, examples, index], || {
        let refs = load(ctx, input, split)?;
        let (examples, index) = load_shots(examples, index)?;
        let services = ctx.services()?;
        let cache = ctx.cache()?;
        let mut rows = Vec::with_capacity(ABLATION_ROWS.len());
        for (label, style) in ABLATION_ROWS {
            let shots = (style == PromptStyle::FewShot).then_some((examples.as_slice(), &index));
            let outcome = predict(ctx, &refs, style, shots, &services, &cache)
                .map_err(CliError::from)
                .and_then(|(preds, run)| Ok((evaluate_run(&preds, &refs, &ctx.config.language)?, run)));
            rows.push(match outcome {
                Ok((report, run)) => AblationRow {
                    configuration: label.to_string(),
                    style,
                    report: Some(report),
                    run: Some(run),
                    error: None,
                },
                Err(e) => {
                    tracing::warn!(configuration = label, error = %e, "ablation row failed");
                    AblationRow {
                        configuration: label.to_string(),
                        style,
                        report: None,
                        run: None,
                        error: Some(e.message),
                    }
                }
            });
        }
        let body = json!({ "language": ctx.config.language, "rows": rows });
        fs::write(output, serde_json::to_string_pretty(&body).expect("json") + "\n")?;
        let table_rows: Vec<(String, Option<&MetricReport>)> =
            rows.iter().map(|r| (r.configuration.clone(), r.report.as_ref())).collect();
        let failed = rows.iter().filter(|r| r.error.is_some()).count();
        Ok(StageOutput {
            outputs: vec![output.to_path_buf()],
            counts: Counts {
                input: refs.len(),
                output: rows.len() - failed,
                removed: 0,
                dead_lettered: 0,
            },
            summary: body,
            table: Some(render_table("Configuration", &table_rows)),
        })
    })
}

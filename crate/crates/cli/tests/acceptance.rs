//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines go straight to stdout:
//!
//! ```text
//! cargo test -p claimnorm-cli --test acceptance
//! ```

#[path = "../../core/tests/oracles/mod.rs"]
mod oracles;

use std::collections::HashSet;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use clap::Parser;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use claimnorm::augment::{SYSTEM_PROMPT, PLAIN_SYSTEM_PROMPT};
use claimnorm::cleaning::{dedup_post, filter_pairs, segment_sentences, token_recall};
use claimnorm::corpus::{Post, PostClaimPair, Split};
use claimnorm::llm::mock::{target_post, FnChat, HashingEmbedder};
use claimnorm::llm::{ChatRequest, LlmError};
use claimnorm::metrics::{bleu4, meteor_details, meteor_tokens, rouge_l, rouge_n, stem};
use claimnorm::retrieval::{EmbeddingVector, VectorIndex};
use claimnorm_cli::manifest::{read_manifests, Status};
use claimnorm_cli::{run, Cli, Services};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, budget: Duration) -> Result<(), String> {
    ensure(elapsed <= budget, format!("took {elapsed:?}, budget {budget:?}"))
}

// ---------------------------------------------------------------------------

fn recall_filter_rows() -> Check {
    let started = Instant::now();
    let pairs: Vec<PostClaimPair> = oracles::RECALL_EXAMPLES
        .iter()
        .enumerate()
        .map(|(i, (post, claim, _))| pair(&format!("t{i}"), post, claim, Split::Train))
        .collect();
    let first = token_recall(&dedup_post(oracles::RECALL_EXAMPLES[0].0), oracles::RECALL_EXAMPLES[0].1).map_err(|e| e.to_string())?;
    let second = token_recall(&dedup_post(oracles::RECALL_EXAMPLES[1].0), oracles::RECALL_EXAMPLES[1].1).map_err(|e| e.to_string())?;
    ensure((first - 0.09).abs() <= 0.005, format!("first row recall {first}"))?;
    ensure(second == 0.0, format!("second row recall {second}"))?;
    let outcome = filter_pairs(&pairs, 0.4).map_err(|e| e.to_string())?;
    ensure(outcome.retained.is_empty() && outcome.removed.len() == 5, "not all five rows removed at 0.4")?;
    within(started.elapsed(), Duration::from_secs(1))?;
    Ok(format!("recalls {first:.4} and {second:.2}; 5/5 removed"))
}

fn metric_oracles() -> Check {
    let started = Instant::now();
    let oracle_stem = |t: &str| oracles::vocab_stem(t).to_string();
    for w in oracles::VOCAB {
        ensure(stem(w) == oracles::vocab_stem(w), format!("stem table disagrees on {w}"))?;
    }
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in 0..200 {
        let c = oracles::random_sentence(&mut rng, 12);
        let r = oracles::random_sentence(&mut rng, 12);
        let (cs, rs) = (c.join(" "), r.join(" "));
        for n in [1, 2] {
            let got = rouge_n(&cs, &rs, n);
            let (p, rc, f) = oracles::rouge_n(&c, &r, n);
            ensure(close(got.precision, p) && close(got.recall, rc) && close(got.f1, f), format!("ROUGE-{n} case {case}"))?;
        }
        let got = rouge_l(&cs, &rs);
        let (p, rc, f) = oracles::rouge_l(&c, &r);
        ensure(close(got.precision, p) && close(got.recall, rc) && close(got.f1, f), format!("ROUGE-L case {case}"))?;
        let (m, _, chunks) = oracles::meteor_alignment(&c, &r, &oracle_stem);
        let d = meteor_tokens(&c, &r);
        ensure(
            d.matches == m && d.chunks == chunks && close(d.score, oracles::meteor_score(m, chunks, c.len(), r.len())),
            format!("METEOR case {case}: {cs:?} / {rs:?}"),
        )?;
    }
    let fixtures = oracles::bleu_fixtures();
    for (cand, reference, expected) in &fixtures {
        let got = bleu4(cand, reference);
        ensure((got - expected).abs() <= 1e-12 + 1e-9 * expected, format!("BLEU {cand:?}: {got} vs {expected}"))?;
    }
    let bp = bleu4("a b c d e", "a b c d e f");
    ensure((bp - 0.8187).abs() <= 1e-4, format!("BP case {bp}"))?;
    within(started.elapsed(), Duration::from_secs(30))?;
    Ok(format!("200 pairs agree to 1e-9; {} BLEU fixtures; BP case {bp:.4}", fixtures.len()))
}

fn meteor_anchors() -> Check {
    let ten = "officials say the new vaccine study was never published online";
    let a = meteor_details(ten, ten);
    ensure((a.score - 0.9995).abs() <= 1e-6, format!("identical sentences {}", a.score))?;
    let b = meteor_details("the cat sat on the mat", "the cat was on the mat");
    ensure((b.score - 0.8067).abs() <= 1e-4, format!("cat/mat {}", b.score))?;
    Ok(format!("{:.6} and {:.4}", a.score, b.score))
}

fn retrieval_exactness() -> Check {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let items = oracles::synthetic_vectors(&mut rng, 1000, 64);
    let index = VectorIndex::build(
        64,
        items.iter().map(|(id, v)| (id.clone(), EmbeddingVector::new(v.clone()).unwrap())),
    )
    .map_err(|e| e.to_string())?;
    let mut ties = 0;
    for q in 0..50 {
        let query: Vec<f64> = if q % 2 == 0 {
            items[rng.gen_range(0..items.len())].1.clone()
        } else {
            (0..64).map(|_| rng.gen_range(-1.0f32..1.0) as f64).collect()
        };
        let got = index.top_k(&EmbeddingVector::new(query.clone()).unwrap(), 5, None).map_err(|e| e.to_string())?;
        let want = oracles::brute_top_k(&items, &query, 5);
        let got_ids: Vec<&str> = got.iter().map(|r| r.id.as_str()).collect();
        let want_ids: Vec<&str> = want.iter().map(|(id, _)| id.as_str()).collect();
        ensure(got_ids == want_ids, format!("query {q}: {got_ids:?} vs {want_ids:?}"))?;
        ties += want.windows(2).filter(|w| w[0].1 == w[1].1).count();
    }
    within(started.elapsed(), Duration::from_secs(5))?;
    Ok(format!("50 queries identical, {ties} tied neighbours ordered by id"))
}

fn dedup_properties() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for i in 0..1000 {
        let (post, expected) = oracles::duplicate_injected_post(&mut rng);
        let once = dedup_post(&post);
        ensure(segment_sentences(&once) == expected, format!("post {i} lost a first occurrence"))?;
        ensure(dedup_post(&once) == once, format!("post {i} not idempotent"))?;
    }
    let collapsed = dedup_post(oracles::TRIPLICATED);
    ensure(collapsed == "AC MASJID MELEDAK, 2 JEMAAH MENINGGAL DUNIA", format!("triplicated -> {collapsed:?}"))?;
    Ok("1000 posts; triplicated headline kept once".into())
}

// ---------------------------------------------------------------------------
// Pipeline helpers

fn pair(id: &str, post: &str, claim: &str, split: Split) -> PostClaimPair {
    PostClaimPair {
        post: Post { id: id.into(), language: "eng".into(), text: post.into(), split },
        claim: Some(claim.into()),
        recall_score: None,
    }
}

fn write_fixture(path: &Path) {
    let lines: Vec<String> = oracles::twenty_pairs()
        .iter()
        .enumerate()
        .map(|(i, (post, claim))| json!({"id": format!("p{i:02}"), "post": post, "claim": claim}).to_string())
        .collect();
    std::fs::write(path, lines.join("\n") + "\n").unwrap();
}

fn cli(workdir: &Path, args: &[&str]) -> Cli {
    let mut argv = vec!["claimnorm".to_string(), "--workdir".into(), workdir.display().to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    Cli::try_parse_from(argv).expect("valid arguments")
}

fn stage(workdir: &Path, services: &Services, args: &[&str]) -> Result<Value, String> {
    run(&cli(workdir, args), Some(services.clone()))
        .map(|o| o.summary)
        .map_err(|e| format!("{} failed: {}", args[0], e.to_json()))
}

fn reply(request: &ChatRequest, claim: &str) -> String {
    if request.system().is_some_and(|s| s.contains("\"what\"")) {
        json!({"what": claim, "who": "", "where": "", "when": "", "how": "", "why": "", "claim": claim}).to_string()
    } else {
        json!({ "claim": claim }).to_string()
    }
}

/// Answers every prompt with the gold claim embedded in the target post.
fn echo_services() -> Services {
    let claims: Vec<String> = oracles::twenty_pairs().into_iter().map(|(_, c)| c).collect();
    let chat = FnChat::new("echo-reference", move |req: &ChatRequest| {
        let post = req.user().and_then(target_post).ok_or_else(|| LlmError::Protocol("no post".into()))?;
        let claim = claims
            .iter()
            .filter(|c| post.contains(c.as_str()))
            .max_by_key(|c| c.len())
            .ok_or_else(|| LlmError::Protocol(format!("unknown post {post:?}")))?;
        Ok(reply(req, claim))
    });
    Services { chat: Arc::new(chat), embeddings: Arc::new(HashingEmbedder::new(claimnorm::retrieval::DEFAULT_EMBEDDING_DIM)) }
}

fn end_to_end() -> Check {
    let started = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let w = dir.path();
    let p = |name: &str| w.join(name).display().to_string();
    write_fixture(&w.join("raw.jsonl"));
    let services = echo_services();
    stage(w, &services, &["clean", "--input", &p("raw.jsonl"), "--output", &p("clean.jsonl")])?;
    stage(w, &services, &["filter", "--input", &p("clean.jsonl"), "--output", &p("filtered.jsonl")])?;
    stage(w, &services, &["augment", "--input", &p("filtered.jsonl"), "--output", &p("examples.jsonl")])?;
    stage(w, &services, &["index", "--input", &p("examples.jsonl"), "--output", &p("train.idx")])?;
    stage(
        w,
        &services,
        &[
            "infer", "--input", &p("filtered.jsonl"), "--split", "dev", "--output", &p("preds.csv"),
            "--examples", &p("examples.jsonl"), "--index", &p("train.idx"),
        ],
    )?;
    let summary = stage(
        w,
        &services,
        &["evaluate", "--predictions", &p("preds.csv"), "--references", &p("filtered.jsonl"), "--output", &p("report.json")],
    )?;

    let manifests = read_manifests(w).map_err(|e| e.to_string())?;
    let stages: Vec<&str> = manifests.iter().map(|m| m.stage.as_str()).collect();
    ensure(stages == ["clean", "filter", "augment", "index", "infer", "evaluate"], format!("stages {stages:?}"))?;
    ensure(manifests.iter().all(|m| m.status == Status::Ok), "a stage did not succeed")?;
    // each stage consumed exactly what its predecessor wrote
    let links = [(0, 0, 1, 0), (1, 0, 2, 0), (2, 0, 3, 0), (3, 0, 4, 2), (2, 0, 4, 1), (4, 0, 5, 0), (1, 0, 5, 1)];
    for (from, out, to, input) in links {
        ensure(
            manifests[from].outputs[out].sha256 == manifests[to].inputs[input].sha256,
            format!("{} output does not feed {}", stages[from], stages[to]),
        )?;
    }
    ensure(manifests[1].counts.output == 20, format!("filter kept {}", manifests[1].counts.output))?;
    let report = &summary["report"];
    let meteor = report["meteor"].as_f64().unwrap_or(0.0) / 100.0;
    ensure(report["n"] == 20, format!("n = {}", report["n"]))?;
    ensure(meteor >= 0.999, format!("METEOR mean {meteor}"))?;
    within(started.elapsed(), Duration::from_secs(10))?;
    Ok(format!("6 chained manifests; METEOR mean {meteor:.4} over 20 pairs"))
}

fn ablation_structure() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let w = dir.path();
    let p = |name: &str| w.join(name).display().to_string();
    write_fixture(&w.join("raw.jsonl"));
    let setup = echo_services();
    stage(w, &setup, &["augment", "--input", &p("raw.jsonl"), "--output", &p("examples.jsonl")])?;
    stage(w, &setup, &["index", "--input", &p("examples.jsonl"), "--output", &p("train.idx")])?;

    // Variant-sensitive: the answer names the prompt kind and shot count,
    // and every prompt is recorded. A fresh workdir keeps the cache cold.
    let recorded: Arc<Mutex<Vec<ChatRequest>>> = Arc::default();
    let log = recorded.clone();
    let chat = FnChat::new("variant-sensitive", move |req: &ChatRequest| {
        log.lock().unwrap().push(req.clone());
        let user = req.user().unwrap_or_default();
        let kind = match req.system() {
            Some(PLAIN_SYSTEM_PROMPT) => "plain",
            Some(SYSTEM_PROMPT) if user.matches("Post: ").count() > 1 => "fewshot",
            _ => "zeroshot",
        };
        let claim = format!("{kind} answer with {} shots for {}", user.matches("Post: ").count() - 1, target_post(user).unwrap_or(""));
        Ok(reply(req, &claim))
    });
    let services = Services { chat: Arc::new(chat), embeddings: Arc::new(HashingEmbedder::new(claimnorm::retrieval::DEFAULT_EMBEDDING_DIM)) };
    let run_dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let output = run(
        &cli(
            run_dir.path(),
            &[
                "ablate", "--input", &p("raw.jsonl"), "--examples", &p("examples.jsonl"), "--index", &p("train.idx"),
                "--output", &p("ablation.json"),
            ],
        ),
        Some(services),
    )
    .map_err(|e| e.to_json())?;

    let labels: Vec<&str> = output.summary["rows"]
        .as_array()
        .ok_or("no rows")?
        .iter()
        .map(|r| r["configuration"].as_str().unwrap_or(""))
        .collect();
    ensure(
        labels == ["w/o CoT + w/o Few-Shot", "w/ CoT + w/o Few-Shot", "w/ CoT + w/ Few-Shot"],
        format!("rows {labels:?}"),
    )?;
    for row in output.summary["rows"].as_array().unwrap() {
        let report = &row["report"];
        for key in ["rouge1", "rouge2", "rouge_l", "bleu4", "meteor"] {
            ensure(report.get(key).is_some(), format!("{} lacks {key}", row["configuration"]))?;
        }
    }
    let table = output.table.unwrap_or_default();
    for column in ["ROUGE-1", "ROUGE-2", "ROUGE-L", "BLEU-4", "METEOR", "BERTScore"] {
        ensure(table.contains(column), format!("table lacks {column}"))?;
    }

    let requests = recorded.lock().unwrap();
    let plain: Vec<_> = requests.iter().filter(|r| r.system() == Some(PLAIN_SYSTEM_PROMPT)).collect();
    let few: Vec<_> = requests
        .iter()
        .filter(|r| r.system() == Some(SYSTEM_PROMPT) && r.user().unwrap_or("").matches("Post: ").count() > 1)
        .collect();
    ensure(plain.len() == 20 && few.len() == 20, format!("{} plain and {} few-shot prompts", plain.len(), few.len()))?;
    for r in &plain {
        let user = r.user().unwrap_or("");
        ensure(user.matches("Post: ").count() == 1, "plain prompt carries examples")?;
        ensure(!user.contains("\"what\"") && !user.contains("\"who\""), "plain prompt asks for 5W1H")?;
    }
    for r in &few {
        let shots = r.user().unwrap_or("").matches("Post: ").count() - 1;
        ensure(shots == 5, format!("few-shot prompt with {shots} examples"))?;
    }
    let distinct: HashSet<String> = requests.iter().map(|r| r.user().unwrap_or("").to_string()).collect();
    ensure(distinct.len() == requests.len(), "duplicate prompts sent")?;
    Ok("3 rows in order, 6 metric columns; few-shot prompts carry 5 examples, plain prompts none".into())
}

fn main() {
    let criteria: [(&str, fn() -> Check); 7] = [
        ("recall filter reproduces the example rows", recall_filter_rows),
        ("metrics agree with independent oracles", metric_oracles),
        ("METEOR formula anchors", meteor_anchors),
        ("retrieval equals exhaustive scan", retrieval_exactness),
        ("deduplication properties", dedup_properties),
        ("end-to-end mock pipeline", end_to_end),
        ("ablation harness structure", ablation_structure),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

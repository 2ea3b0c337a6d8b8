//! Slow, obviously-correct reference implementations and fixed fixtures.
//!
//! Shared by this crate's integration tests and by the CLI acceptance suite
//! (which includes this file by path). Nothing here calls the code under
//! test except where a function says so.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;

// ---------------------------------------------------------------------------
// Random sentences

/// Small vocabulary with repeats and inflected pairs, so random sentences
/// exercise clipping, repeated tokens and the stem stage.
pub const VOCAB: &[&str] = &[
    "the", "the", "a", "cat", "cats", "dog", "dogs", "sat", "run", "runs", "running", "on", "mat", "mats",
    "claim", "claims", "claimed", "vaccine", "vaccines", "new", "study", ".", ",",
];

/// Hand-written stem table for [`VOCAB`]; words not listed stem to themselves.
pub fn vocab_stem(word: &str) -> &str {
    match word {
        "cats" => "cat",
        "dogs" => "dog",
        "runs" | "running" => "run",
        "mats" => "mat",
        "claims" | "claimed" => "claim",
        "vaccine" | "vaccines" => "vaccin",
        "study" => "studi",
        other => other,
    }
}

pub fn random_sentence<R: Rng>(rng: &mut R, max_tokens: usize) -> Vec<String> {
    let n = rng.gen_range(1..=max_tokens);
    (0..n).map(|_| VOCAB.choose(rng).unwrap().to_string()).collect()
}

// ---------------------------------------------------------------------------
// ROUGE

fn count(tokens: &[String], gram: &[String]) -> usize {
    if tokens.len() < gram.len() {
        return 0;
    }
    (0..=tokens.len() - gram.len()).filter(|&i| &tokens[i..i + gram.len()] == gram).count()
}

fn prf(overlap: usize, c: usize, r: usize) -> (f64, f64, f64) {
    if overlap == 0 || c == 0 || r == 0 {
        return (0.0, 0.0, 0.0);
    }
    let p = overlap as f64 / c as f64;
    let rc = overlap as f64 / r as f64;
    (p, rc, 2.0 * p * rc / (p + rc))
}

/// Clipped n-gram overlap by exhaustive counting.
pub fn rouge_n(cand: &[String], reference: &[String], n: usize) -> (f64, f64, f64) {
    let c_total = cand.len().saturating_sub(n - 1);
    let r_total = reference.len().saturating_sub(n - 1);
    let mut distinct: Vec<&[String]> = Vec::new();
    for i in 0..c_total {
        let g = &cand[i..i + n];
        if !distinct.contains(&g) {
            distinct.push(g);
        }
    }
    let overlap = distinct.iter().map(|g| count(cand, g).min(count(reference, g))).sum();
    prf(overlap, c_total, r_total)
}

/// LCS by top-down recursion with memoization.
pub fn lcs(a: &[String], b: &[String]) -> usize {
    fn go(a: &[String], b: &[String], i: usize, j: usize, memo: &mut HashMap<(usize, usize), usize>) -> usize {
        if i == a.len() || j == b.len() {
            return 0;
        }
        if let Some(&v) = memo.get(&(i, j)) {
            return v;
        }
        let v = if a[i] == b[j] {
            1 + go(a, b, i + 1, j + 1, memo)
        } else {
            go(a, b, i + 1, j, memo).max(go(a, b, i, j + 1, memo))
        };
        memo.insert((i, j), v);
        v
    }
    go(a, b, 0, 0, &mut HashMap::new())
}

pub fn rouge_l(cand: &[String], reference: &[String]) -> (f64, f64, f64) {
    prf(lcs(cand, reference), cand.len(), reference.len())
}

// ---------------------------------------------------------------------------
// METEOR

/// Best alignment found by exhaustive search over every partial matching
/// (memoized on position, used-reference set and previous match):
/// maximize the number of pairs, then the number of exact pairs, then
/// minimize chunks. Returns `(matches, exact, chunks)`.
pub fn meteor_alignment(cand: &[String], reference: &[String], stem: &dyn Fn(&str) -> String) -> (usize, usize, usize) {
    assert!(reference.len() <= 64);
    let cs: Vec<String> = cand.iter().map(|t| stem(t)).collect();
    let rs: Vec<String> = reference.iter().map(|t| stem(t)).collect();
    type Key = (usize, u64, Option<usize>);
    // value: (matches, exact, -chunks) maximized lexicographically
    fn go(
        i: usize,
        used: u64,
        prev: Option<usize>,
        cand: &[String],
        reference: &[String],
        cs: &[String],
        rs: &[String],
        memo: &mut HashMap<Key, (usize, usize, i64)>,
    ) -> (usize, usize, i64) {
        if i == cand.len() {
            return (0, 0, 0);
        }
        if let Some(&v) = memo.get(&(i, used, prev)) {
            return v;
        }
        let mut best = go(i + 1, used, None, cand, reference, cs, rs, memo);
        for j in 0..reference.len() {
            if used & (1 << j) != 0 || cs[i] != rs[j] {
                continue;
            }
            let new_chunk = if prev == Some(j.wrapping_sub(1)) && j > 0 { 0 } else { 1 };
            let (m, e, neg_chunks) = go(i + 1, used | (1 << j), Some(j), cand, reference, cs, rs, memo);
            let option = (m + 1, e + usize::from(cand[i] == reference[j]), neg_chunks - new_chunk);
            if option > best {
                best = option;
            }
        }
        memo.insert((i, used, prev), best);
        best
    }
    let (m, e, neg) = go(0, 0, None, cand, reference, &cs, &rs, &mut HashMap::new());
    (m, e, (-neg) as usize)
}

/// Maximum bipartite matching size by brute force over all injections.
pub fn max_matching(cand: &[String], reference: &[String], stem: &dyn Fn(&str) -> String) -> usize {
    fn go(i: usize, used: &mut Vec<bool>, cand: &[String], reference: &[String], stem: &dyn Fn(&str) -> String) -> usize {
        if i == cand.len() {
            return 0;
        }
        let mut best = go(i + 1, used, cand, reference, stem);
        for j in 0..reference.len() {
            if !used[j] && stem(&cand[i]) == stem(&reference[j]) {
                used[j] = true;
                best = best.max(1 + go(i + 1, used, cand, reference, stem));
                used[j] = false;
            }
        }
        best
    }
    go(0, &mut vec![false; reference.len()], cand, reference, stem)
}

pub fn meteor_score(m: usize, chunks: usize, c: usize, r: usize) -> f64 {
    if m == 0 {
        return 0.0;
    }
    let p = m as f64 / c as f64;
    let rc = m as f64 / r as f64;
    let fmean = 10.0 * p * rc / (rc + 9.0 * p);
    fmean * (1.0 - 0.5 * (chunks as f64 / m as f64).powi(3))
}

// ---------------------------------------------------------------------------
// BLEU-4 fixtures: (candidate, reference, value worked out by hand)

pub fn bleu_fixtures() -> Vec<(&'static str, &'static str, f64)> {
    let eps: f64 = 1e-9;
    vec![
        // all precisions 1, BP = exp(1 - 6/5)
        ("a b c d e", "a b c d e f", (1.0f64 - 6.0 / 5.0).exp()),
        ("the cat sat on the mat", "the cat sat on the mat", 1.0),
        // no overlap at any order
        ("a b c d", "w x y z", eps),
        // p1 = 5/6, p2 = 3/5, p3 = 1/4, p4 = 0
        (
            "the cat sat on the mat",
            "the cat was on the mat",
            (5.0 / 6.0 * 3.0 / 5.0 * 1.0 / 4.0 * eps).powf(0.25),
        ),
        // clipping: "the" counts once; no bigram overlap
        ("the the the the", "the cat", (0.25 * eps * eps * eps).powf(0.25)),
        // c = 2 < r = 4, no trigrams or 4-grams in the candidate
        ("a b", "a b c d", (-1.0f64).exp() * (eps * eps).powf(0.25)),
        // punctuation tokens: hello , world ! against hello world
        ("Hello, world!", "hello world", (0.5 * eps * eps * eps).powf(0.25)),
        ("The Cat  Sat On The Mat ", "the cat sat on the mat", 1.0),
        // p = 5/6, 4/5, 3/4, 2/3, no brevity penalty
        ("a b c d e f", "a b c d e", (1.0f64 / 3.0).powf(0.25)),
        ("", "a b", 0.0),
    ]
}

// ---------------------------------------------------------------------------
// Retrieval

/// Every similarity by a plain loop, sorted by similarity then id.
pub fn brute_top_k(items: &[(String, Vec<f64>)], query: &[f64], k: usize) -> Vec<(String, f64)> {
    let norm = |v: &[f64]| {
        let mut s = 0.0;
        for x in v {
            s += x * x;
        }
        s.sqrt()
    };
    let qn = norm(query);
    let mut all: Vec<(String, f64)> = items
        .iter()
        .map(|(id, v)| {
            let mut d = 0.0;
            for (a, b) in query.iter().zip(v) {
                d += a * b;
            }
            (id.clone(), (d / (qn * norm(v))).clamp(-1.0, 1.0))
        })
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

/// Synthetic vectors with exact duplicates (to force ties) under shuffled
/// ids. Values are f32-representable so the index stores them exactly.
pub fn synthetic_vectors<R: Rng>(rng: &mut R, n: usize, dim: usize) -> Vec<(String, Vec<f64>)> {
    let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        if i % 10 == 9 {
            let j = rng.gen_range(0..i);
            vectors.push(vectors[j].clone());
        } else {
            vectors.push((0..dim).map(|_| rng.gen_range(-1.0f32..1.0) as f64).collect());
        }
    }
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(rng);
    ids.into_iter().zip(vectors).map(|(id, v)| (format!("v{id:04}"), v)).collect()
}

// ---------------------------------------------------------------------------
// Deduplication

/// Posts built from a sentence pool with injected repeats that differ only
/// in case and spacing. Returns the post and its expected deduplicated
/// sentence list (first occurrences, original surface form).
pub fn duplicate_injected_post<R: Rng>(rng: &mut R) -> (String, Vec<String>) {
    const POOL: &[&str] = &[
        "The vaccine was tested on children.",
        "Share before it is deleted!",
        "Is this really true?",
        "Prices rose by 20 percent in March.",
        "The minister denied everything.",
        "Watch the full video",
        "Breaking news from Karachi.",
        "Nobody is talking about this!",
    ];
    let n = rng.gen_range(1..=8);
    let mut seen: HashSet<String> = HashSet::new();
    let mut expected = Vec::new();
    let mut pieces = Vec::new();
    for _ in 0..n {
        let base = POOL.choose(rng).unwrap();
        let variant = match rng.gen_range(0..3) {
            0 => base.to_string(),
            1 => base.to_uppercase(),
            _ => base.replace(' ', "  "),
        };
        let key: String = base.to_lowercase();
        if seen.insert(key) {
            expected.push(variant.clone());
        }
        pieces.push(variant);
    }
    let mut post = String::new();
    for (i, piece) in pieces.iter().enumerate() {
        if i > 0 {
            // a piece without a terminator only ends at a line break
            let terminated = pieces[i - 1].ends_with(['.', '!', '?']);
            post.push_str(if !terminated || rng.gen_bool(0.3) { "\n" } else { " " });
        }
        post.push_str(piece);
    }
    (post, expected)
}

// ---------------------------------------------------------------------------
// Published fixtures

/// The five rows of the recall-filter example table: (post, claim, recall).
/// The third post's three repeats are newline-separated.
pub const RECALL_EXAMPLES: [(&str, &str, f64); 5] = [
    (
        "Photo Before Landing Of PK-320",
        "Image shows Pakistani plane moments before crash in Karachi in May 2020",
        0.09,
    ),
    (
        "Strong people these health workers for Covid 19 ... they carry the dead bodies with one hand",
        "Authorities planted empty body bags in 'fake' pandemic plot",
        0.00,
    ),
    (
        "AC MASJID MELEDAK, 2 JEMAAH MENINGGAL DUNIA\nAC MASJID MELEDAK, 2 JEMAAH MENINGGAL DUNIA\nAC MASJID MELEDAK, 2 JEMAAH MENINGGAL DUNIA None",
        "Photo shows a fatal mosque blast in Bangladesh",
        0.00,
    ),
    (
        "Vladmir Putin has dropped 800 Tigers and lions across the country to push people to stay home..sana all Russia: Containment:",
        "This photo shows a lion patrolling Russian streets during coronavirus lockdown",
        0.00,
    ),
    (
        "\"Say it...you stand with.....?? ZELENSKYY 2018 5 @chrisskyarmy1 45\"",
        "Photo shows Volodymyr Zelensky holding a jersey featuring a swastika",
        0.00,
    ),
];

pub const TRIPLICATED: &str = "AC MASJID MELEDAK, 2 JEMAAH MENINGGAL DUNIA\nAC MASJID MELEDAK, 2 JEMAAH MENINGGAL DUNIA\nAC MASJID MELEDAK, 2 JEMAAH MENINGGAL DUNIA";

/// Deterministic 20-pair fixture; every claim has at least 8 tokens.
pub fn twenty_pairs() -> Vec<(String, String)> {
    const TOPICS: [(&str, &str); 10] = [
        ("vaccine", "children in Lagos"),
        ("election", "ballots in Ohio"),
        ("flood", "bridges in Chennai"),
        ("bank", "savings in Lima"),
        ("school", "laptops in Nairobi"),
        ("hospital", "beds in Madrid"),
        ("airport", "flights in Jakarta"),
        ("market", "prices in Cairo"),
        ("police", "arrests in Manila"),
        ("factory", "workers in Dhaka"),
    ];
    let mut out = Vec::new();
    for (i, (topic, detail)) in TOPICS.iter().enumerate() {
        for variant in 0..2 {
            let claim = format!("The {topic} report number {} affected {detail} last year", i * 2 + variant);
            let post = format!(
                "BREAKING!!! {claim}. Share this now. {claim}. Nobody talks about the {topic} story #truth",
            );
            out.push((post, claim));
        }
    }
    out
}

/// Order-independent summary used by tests that compare maps.
pub fn sorted<K: Ord + Clone, V: Clone>(m: &HashMap<K, V>) -> BTreeMap<K, V> {
    m.iter().map(|(k, v)| (k.clone(), v.clone())).collect()
}

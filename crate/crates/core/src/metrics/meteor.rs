//! METEOR with exact and stem matching stages.
//!
//! Tokens are grouped into classes by stem. Two tokens can be aligned only
//! inside a class, so every class is a complete bipartite graph and the
//! largest alignment has `Σ min(candidate count, reference count)` pairs.
//! Because equal surfaces share a stem, the staged matcher (exact first, then
//! stems among leftovers) reaches that size while also keeping the largest
//! possible number of exact pairs. Among alignments meeting both maxima the
//! one with the fewest chunks is chosen.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::metric_tokenize;
use super::stem::stem;

/// Sentences up to this many tokens get an exhaustive chunk search.
pub const EXACT_SEARCH_MAX_TOKENS: usize = 30;

/// Safety valve for the exhaustive search; the best alignment found so far
/// is returned once this many nodes have been visited.
const NODE_BUDGET: usize = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AlignStrategy {
    /// Branch and bound over all maximal alignments.
    Exact,
    /// First feasible alignment, preferring to extend the current chunk.
    Greedy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment {
    /// `(candidate position, reference position)`, ordered by candidate position.
    pub pairs: Vec<(usize, usize)>,
    pub chunk_count: usize,
}

impl Alignment {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeteorDetails {
    pub matches: usize,
    pub chunks: usize,
    pub precision: f64,
    pub recall: f64,
    pub fmean: f64,
    pub penalty: f64,
    pub score: f64,
}

pub fn meteor(candidate: &str, reference: &str) -> f64 {
    meteor_details(candidate, reference).score
}

pub fn meteor_details(candidate: &str, reference: &str) -> MeteorDetails {
    meteor_tokens(&metric_tokenize(candidate), &metric_tokenize(reference))
}

pub fn meteor_tokens(candidate: &[String], reference: &[String]) -> MeteorDetails {
    let strategy = if candidate.len().max(reference.len()) <= EXACT_SEARCH_MAX_TOKENS {
        AlignStrategy::Exact
    } else {
        AlignStrategy::Greedy
    };
    let alignment = align(candidate, reference, strategy);
    let m = alignment.len();
    if m == 0 {
        return MeteorDetails {
            matches: 0,
            chunks: 0,
            precision: 0.0,
            recall: 0.0,
            fmean: 0.0,
            penalty: 0.0,
            score: 0.0,
        };
    }
    let precision = m as f64 / candidate.len() as f64;
    let recall = m as f64 / reference.len() as f64;
    let fmean = 10.0 * precision * recall / (recall + 9.0 * precision);
    let penalty = 0.5 * (alignment.chunk_count as f64 / m as f64).powi(3);
    MeteorDetails {
        matches: m,
        chunks: alignment.chunk_count,
        precision,
        recall,
        fmean,
        penalty,
        score: (fmean * (1.0 - penalty)).clamp(0.0, 1.0),
    }
}

/// Align candidate tokens to reference tokens.
pub fn align(candidate: &[String], reference: &[String], strategy: AlignStrategy) -> Alignment {
    let mut search = Search::new(candidate, reference);
    match strategy {
        AlignStrategy::Greedy => search.budget = 0,
        AlignStrategy::Exact => search.budget = NODE_BUDGET,
    }
    search.run();
    let pairs: Vec<(usize, usize)> = search
        .best_pairs
        .iter()
        .enumerate()
        .filter_map(|(i, j)| j.map(|j| (i, j)))
        .collect();
    let chunk_count = count_chunks(&pairs);
    debug_assert!(pairs.is_empty() || chunk_count == search.best_chunks);
    Alignment { pairs, chunk_count }
}

fn count_chunks(pairs: &[(usize, usize)]) -> usize {
    pairs
        .iter()
        .enumerate()
        .filter(|&(k, &(i, j))| k == 0 || pairs[k - 1] != (i.wrapping_sub(1), j.wrapping_sub(1)))
        .count()
}

/// Per-bucket counts of candidate tokens still to visit and reference tokens
/// still unused, with `Σ min` kept up to date.
struct Buckets {
    cand: Vec<usize>,
    refs: Vec<usize>,
    potential: usize,
}

impl Buckets {
    fn new(cand_ids: &[usize], ref_ids: &[usize], n: usize) -> Self {
        let mut cand = vec![0; n];
        let mut refs = vec![0; n];
        cand_ids.iter().for_each(|&b| cand[b] += 1);
        ref_ids.iter().for_each(|&b| refs[b] += 1);
        let potential = cand.iter().zip(&refs).map(|(c, r)| *c.min(r)).sum();
        Self { cand, refs, potential }
    }

    fn adjust(&mut self, b: usize, dc: isize, dr: isize) {
        self.potential -= self.cand[b].min(self.refs[b]);
        self.cand[b] = self.cand[b].wrapping_add_signed(dc);
        self.refs[b] = self.refs[b].wrapping_add_signed(dr);
        self.potential += self.cand[b].min(self.refs[b]);
    }
}

struct Search {
    cand_class: Vec<usize>,
    cand_surface: Vec<usize>,
    ref_class: Vec<usize>,
    ref_surface: Vec<usize>,
    /// Reference positions per class, ascending.
    class_refs: Vec<Vec<usize>>,
    classes: Buckets,
    surfaces: Buckets,
    target_total: usize,
    target_exact: usize,
    used: Vec<bool>,
    current: Vec<Option<usize>>,
    best_pairs: Vec<Option<usize>>,
    best_chunks: usize,
    found: bool,
    nodes: usize,
    budget: usize,
}

impl Search {
    fn new(candidate: &[String], reference: &[String]) -> Self {
        fn intern(table: &mut HashMap<String, usize>, key: String) -> usize {
            let n = table.len();
            *table.entry(key).or_insert(n)
        }
        let mut class_ids = HashMap::new();
        let mut surface_ids = HashMap::new();
        let cand_class: Vec<usize> = candidate
            .iter()
            .map(|t| intern(&mut class_ids, stem(t).into_owned()))
            .collect();
        let ref_class: Vec<usize> = reference
            .iter()
            .map(|t| intern(&mut class_ids, stem(t).into_owned()))
            .collect();
        let cand_surface: Vec<usize> = candidate.iter().map(|t| intern(&mut surface_ids, t.clone())).collect();
        let ref_surface: Vec<usize> = reference.iter().map(|t| intern(&mut surface_ids, t.clone())).collect();
        let (n_classes, n_surfaces) = (class_ids.len(), surface_ids.len());

        let mut class_refs = vec![Vec::new(); n_classes];
        for (j, &c) in ref_class.iter().enumerate() {
            class_refs[c].push(j);
        }
        let classes = Buckets::new(&cand_class, &ref_class, n_classes);
        let surfaces = Buckets::new(&cand_surface, &ref_surface, n_surfaces);
        let target_total = classes.potential;
        let target_exact = surfaces.potential;
        Self {
            cand_class,
            cand_surface,
            ref_class,
            ref_surface,
            class_refs,
            classes,
            surfaces,
            target_total,
            target_exact,
            used: vec![false; reference.len()],
            current: vec![None; candidate.len()],
            best_pairs: vec![None; candidate.len()],
            best_chunks: usize::MAX,
            found: false,
            nodes: 0,
            budget: 0,
        }
    }

    fn run(&mut self) {
        self.visit(0, 0, 0, 0);
    }

    fn feasible(&self, matched: usize, exact: usize) -> bool {
        matched + self.classes.potential == self.target_total
            && exact + self.surfaces.potential == self.target_exact
    }

    fn visit(&mut self, i: usize, matched: usize, exact: usize, chunks: usize) {
        if self.found && self.nodes >= self.budget {
            return;
        }
        self.nodes += 1;
        if i == self.current.len() {
            if chunks < self.best_chunks {
                self.best_chunks = chunks;
                self.best_pairs.clone_from(&self.current);
            }
            self.found = true;
            return;
        }
        let class = self.cand_class[i];
        let surface = self.cand_surface[i];
        let prev = if i > 0 { self.current[i - 1] } else { None };
        let continuation = prev.map(|p| p + 1);

        // Options in order: extend the running chunk, other references
        // ascending, leave unmatched.
        let mut options: Vec<usize> = Vec::with_capacity(self.class_refs[class].len());
        if let Some(j) = continuation {
            if j < self.used.len() && !self.used[j] && self.ref_class[j] == class {
                options.push(j);
            }
        }
        for &j in &self.class_refs[class] {
            if !self.used[j] && Some(j) != continuation {
                options.push(j);
            }
        }

        for j in options {
            let new_chunks = chunks + usize::from(Some(j) != continuation);
            if new_chunks >= self.best_chunks {
                continue;
            }
            let is_exact = self.ref_surface[j] == surface;
            self.classes.adjust(class, -1, -1);
            self.surfaces.adjust(surface, -1, 0);
            self.surfaces.adjust(self.ref_surface[j], 0, -1);
            let (m, e) = (matched + 1, exact + usize::from(is_exact));
            if self.feasible(m, e) {
                self.used[j] = true;
                self.current[i] = Some(j);
                self.visit(i + 1, m, e, new_chunks);
                self.current[i] = None;
                self.used[j] = false;
            }
            self.surfaces.adjust(self.ref_surface[j], 0, 1);
            self.surfaces.adjust(surface, 1, 0);
            self.classes.adjust(class, 1, 1);
            if self.found && self.nodes >= self.budget {
                return;
            }
        }

        self.classes.adjust(class, -1, 0);
        self.surfaces.adjust(surface, -1, 0);
        if self.feasible(matched, exact) {
            self.visit(i + 1, matched, exact, chunks);
        }
        self.surfaces.adjust(surface, 1, 0);
        self.classes.adjust(class, 1, 0);
    }
}

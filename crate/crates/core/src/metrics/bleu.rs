use super::metric_tokenize;
use super::rouge::clipped_overlap;

/// Floor applied to zero n-gram precisions before the geometric mean.
pub const BLEU_EPSILON: f64 = 1e-9;

/// Sentence-level BLEU-4 with uniform weights and a single reference.
pub fn bleu4(candidate: &str, reference: &str) -> f64 {
    bleu4_tokens(&metric_tokenize(candidate), &metric_tokenize(reference))
}

/// BLEU-4 over pre-tokenized input.
///
/// Modified (clipped) precisions p1..p4, zero precisions replaced by
/// [`BLEU_EPSILON`], geometric mean, brevity penalty `exp(1 - r/c)` when the
/// candidate is shorter than the reference. An empty candidate scores 0.
pub fn bleu4_tokens(candidate: &[String], reference: &[String]) -> f64 {
    let c = candidate.len();
    let r = reference.len();
    if c == 0 || r == 0 {
        return 0.0;
    }
    let log_mean = (1..=4)
        .map(|n| {
            let (overlap, total, _) = clipped_overlap(candidate, reference, n);
            let p = if total == 0 || overlap == 0 {
                BLEU_EPSILON
            } else {
                overlap as f64 / total as f64
            };
            p.ln()
        })
        .sum::<f64>()
        / 4.0;
    let bp = if c < r {
        (1.0 - r as f64 / c as f64).exp()
    } else {
        1.0
    };
    (bp * log_mean.exp()).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brevity_penalty_case() {
        let s = bleu4("a b c d e", "a b c d e f");
        assert!((s - (1.0f64 - 6.0 / 5.0).exp()).abs() < 1e-12);
        assert!((s - 0.8187).abs() < 1e-4);
    }

    #[test]
    fn identity_and_floor() {
        assert_eq!(bleu4("the cat sat on the mat", "the cat sat on the mat"), 1.0);
        let zero = bleu4("a b c d", "w x y z");
        assert!(zero <= 1e-8);
        assert!(zero > 0.0);
        assert_eq!(bleu4("", "a"), 0.0);
    }

    #[test]
    fn case_and_trailing_space_invariant() {
        assert_eq!(
            bleu4("The Cat sat  ", "the cat sat on"),
            bleu4("the cat sat", "the cat sat on")
        );
    }
}

//! Classification metrics, gestalt sequence similarity and plate-level
//! evaluation reports.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("class {0} out of range for {1} classes")]
    ClassOutOfRange(usize, usize),
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("no plate readings to evaluate")]
    EmptyInput,
}

/// Square count matrix: rows are true classes, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn zeros(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row(&self, truth: usize) -> &[u64] {
        &self.counts[truth * self.classes..(truth + 1) * self.classes]
    }

    /// CSV with a header row of class names; each data row starts with the
    /// true class name.
    pub fn to_csv(&self, names: &[String]) -> String {
        let name = |i: usize| names.get(i).cloned().unwrap_or_else(|| i.to_string());
        let mut s = String::from("true\\pred");
        for p in 0..self.classes {
            s.push(',');
            s.push_str(&name(p));
        }
        s.push('\n');
        for t in 0..self.classes {
            s.push_str(&name(t));
            for v in self.row(t) {
                s.push_str(&format!(",{v}"));
            }
            s.push('\n');
        }
        s
    }
}

pub fn confusion_matrix(pairs: &[(usize, usize)], classes: usize) -> Result<ConfusionMatrix, EvalError> {
    let mut cm = ConfusionMatrix::zeros(classes);
    for &(t, p) in pairs {
        for c in [t, p] {
            if c >= classes {
                return Err(EvalError::ClassOutOfRange(c, classes));
            }
        }
        cm.counts[t * classes + p] += 1;
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerClass {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    pub predicted: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
    /// Classes with at least one true or predicted sample.
    pub included_classes: usize,
    pub per_class: Vec<PerClass>,
}

fn ratio_or_zero(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Accuracy plus per-class, macro and micro precision/recall/F1. Macro
/// values average only classes that occur as truth or prediction.
pub fn metrics(cm: &ConfusionMatrix) -> Result<ClassMetrics, EvalError> {
    let total = cm.total();
    if total == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let n = cm.classes();
    let mut per_class = Vec::with_capacity(n);
    let mut trace = 0u64;
    for c in 0..n {
        let tp = cm.get(c, c);
        trace += tp;
        let support: u64 = cm.row(c).iter().sum();
        let predicted: u64 = (0..n).map(|t| cm.get(t, c)).sum();
        let precision = ratio_or_zero(tp as f64, predicted as f64);
        let recall = ratio_or_zero(tp as f64, support as f64);
        let f1 = ratio_or_zero(2.0 * precision * recall, precision + recall);
        per_class.push(PerClass {
            precision,
            recall,
            f1,
            support,
            predicted,
        });
    }
    let included: Vec<&PerClass> = per_class.iter().filter(|m| m.support > 0 || m.predicted > 0).collect();
    let k = included.len() as f64;
    let mean = |f: fn(&PerClass) -> f64| included.iter().map(|m| f(m)).sum::<f64>() / k;
    let accuracy = trace as f64 / total as f64;
    // Single-label classification: every sample is one prediction, so the
    // micro-averaged values all equal accuracy.
    Ok(ClassMetrics {
        accuracy,
        macro_precision: mean(|m| m.precision),
        macro_recall: mean(|m| m.recall),
        macro_f1: mean(|m| m.f1),
        micro_precision: accuracy,
        micro_recall: accuracy,
        micro_f1: accuracy,
        included_classes: included.len(),
        per_class,
    })
}

/// Longest common block in `a[alo..ahi]` × `b[blo..bhi]` as `(i, j, size)`.
/// Ties go to the earliest block in `a`, then the earliest in `b`.
fn longest_match(a: &[char], b: &[char], alo: usize, ahi: usize, blo: usize, bhi: usize) -> (usize, usize, usize) {
    let (mut bi, mut bj, mut best) = (alo, blo, 0);
    // run[t] = length of the common suffix ending at a[i], b[blo + t - 1].
    let mut prev = vec![0usize; bhi - blo + 1];
    let mut cur = vec![0usize; bhi - blo + 1];
    for i in alo..ahi {
        for j in blo..bhi {
            let t = j - blo + 1;
            let k = if a[i] == b[j] { prev[t - 1] + 1 } else { 0 };
            cur[t] = k;
            if k > best {
                best = k;
                bi = i + 1 - k;
                bj = j + 1 - k;
            }
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    (bi, bj, best)
}

fn matched_chars(a: &[char], b: &[char], alo: usize, ahi: usize, blo: usize, bhi: usize) -> usize {
    if alo >= ahi || blo >= bhi {
        return 0;
    }
    let (i, j, k) = longest_match(a, b, alo, ahi, blo, bhi);
    if k == 0 {
        return 0;
    }
    k + matched_chars(a, b, alo, i, blo, j) + matched_chars(a, b, i + k, ahi, j + k, bhi)
}

/// Gestalt (Ratcliff–Obershelp) similarity `2M / (|a| + |b|)` over Unicode
/// scalar values, with no junk heuristic. Two empty strings score 1.
pub fn sequence_ratio(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let total = a.len() + b.len();
    if total == 0 {
        return 1.0;
    }
    2.0 * matched_chars(&a, &b, 0, a.len(), 0, b.len()) as f64 / total as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalize {
    #[default]
    Casefold,
    None,
}

impl std::str::FromStr for Normalize {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "casefold" => Ok(Self::Casefold),
            "none" => Ok(Self::None),
            other => Err(format!("unknown normalization `{other}` (casefold|none)")),
        }
    }
}

impl std::fmt::Display for Normalize {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Casefold => "casefold",
            Self::None => "none",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlateScore {
    pub generated: String,
    pub desired: String,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub normalize: Normalize,
    pub plates: Vec<PlateScore>,
    pub mean_ratio: f64,
    pub at_least_095: usize,
    pub at_least_090: usize,
}

/// Scores `(generated, desired)` pairs.
pub fn evaluate_plates(pairs: &[(String, String)], normalize: Normalize) -> Result<EvalReport, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let plates: Vec<PlateScore> = pairs
        .iter()
        .map(|(g, d)| {
            let ratio = match normalize {
                Normalize::Casefold => sequence_ratio(&g.to_lowercase(), &d.to_lowercase()),
                Normalize::None => sequence_ratio(g, d),
            };
            PlateScore {
                generated: g.clone(),
                desired: d.clone(),
                ratio,
            }
        })
        .collect();
    let mean_ratio = plates.iter().map(|p| p.ratio).sum::<f64>() / plates.len() as f64;
    Ok(EvalReport {
        normalize,
        mean_ratio,
        at_least_095: plates.iter().filter(|p| p.ratio >= 0.95).count(),
        at_least_090: plates.iter().filter(|p| p.ratio >= 0.90).count(),
        plates,
    })
}

/// Parses `generated<TAB>desired` lines; blank lines and `#` comments are
/// skipped.
pub fn parse_pairs_tsv(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (g, d) = line
            .split_once('\t')
            .ok_or_else(|| format!("line {}: expected `generated<TAB>desired`", n + 1))?;
        out.push((g.to_string(), d.to_string()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Brute-force gestalt matcher: scans every (i, j) start and extends.
    fn oracle_matches(a: &[char], b: &[char]) -> usize {
        if a.is_empty() || b.is_empty() {
            return 0;
        }
        let (mut bi, mut bj, mut best) = (0, 0, 0);
        for i in 0..a.len() {
            for j in 0..b.len() {
                let mut k = 0;
                while i + k < a.len() && j + k < b.len() && a[i + k] == b[j + k] {
                    k += 1;
                }
                if k > best {
                    (bi, bj, best) = (i, j, k);
                }
            }
        }
        if best == 0 {
            return 0;
        }
        best + oracle_matches(&a[..bi], &b[..bj]) + oracle_matches(&a[bi + best..], &b[bj + best..])
    }

    fn oracle_ratio(a: &str, b: &str) -> f64 {
        let (a, b): (Vec<char>, Vec<char>) = (a.chars().collect(), b.chars().collect());
        if a.is_empty() && b.is_empty() {
            return 1.0;
        }
        2.0 * oracle_matches(&a, &b) as f64 / (a.len() + b.len()) as f64
    }

    fn random_string(rng: &mut ChaCha8Rng) -> String {
        const ALPHABET: &[u8] = b"abcde0123456789";
        let n = rng.gen_range(0..=12);
        (0..n).map(|_| ALPHABET[rng.gen_range(0..ALPHABET.len())] as char).collect()
    }

    #[test]
    fn ratio_examples() {
        assert_eq!(sequence_ratio("abcd", "bcde"), 0.75);
        assert_eq!(sequence_ratio("", ""), 1.0);
        assert_eq!(sequence_ratio("a", ""), 0.0);
        assert_eq!(sequence_ratio("2dhaka2matro404ka4", "2dhaka2matro404ka4"), 1.0);
    }

    #[test]
    fn tie_break_prefers_leftmost_block() {
        // "ab" occurs twice in b; matching the first leaves "xab" unmatched.
        assert_eq!(longest_match(&['a', 'b'], &['a', 'b', 'x', 'a', 'b'], 0, 2, 0, 5), (0, 0, 2));
        let a: Vec<char> = "xyab".chars().collect();
        let b: Vec<char> = "abxy".chars().collect();
        assert_eq!(longest_match(&a, &b, 0, 4, 0, 4), (0, 2, 2));
    }

    #[test]
    fn table_pairs_match_reference_matcher() {
        // Values from a reference gestalt matcher (junk heuristic off).
        let rows = [
            ("9Dhaka984Matro773Jha7", "9dhaka94matro773jha7", 40.0 / 41.0, 34.0 / 41.0),
            ("2dhaka2matro404ka4", "2dhaka2matro404ka4", 1.0, 1.0),
            ("553Dhaka47898Jha", "5dhaka47818jha", 26.0 / 30.0, 22.0 / 30.0),
            ("5Dhaka231526", "5dhaka2315ka6", 22.0 / 25.0, 20.0 / 25.0),
        ];
        let pairs: Vec<(String, String)> = rows.iter().map(|r| (r.0.to_string(), r.1.to_string())).collect();
        let folded = evaluate_plates(&pairs, Normalize::Casefold).unwrap();
        let raw = evaluate_plates(&pairs, Normalize::None).unwrap();
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(folded.plates[i].ratio, r.2);
            assert_eq!(raw.plates[i].ratio, r.3);
        }
    }

    #[test]
    fn ratio_matches_oracle_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let (a, b) = (random_string(&mut rng), random_string(&mut rng));
            assert_eq!(sequence_ratio(&a, &b), oracle_ratio(&a, &b), "{a:?} vs {b:?}");
        }
    }

    fn lcs_len(a: &[char], b: &[char]) -> usize {
        let mut dp = vec![vec![0usize; b.len() + 1]; a.len() + 1];
        for i in 0..a.len() {
            for j in 0..b.len() {
                dp[i + 1][j + 1] = if a[i] == b[j] { dp[i][j] + 1 } else { dp[i][j + 1].max(dp[i + 1][j]) };
            }
        }
        dp[a.len()][b.len()]
    }

    #[test]
    fn ratio_depends_on_argument_order() {
        // Greedy block choice differs by direction, as in the reference matcher.
        assert_eq!(sequence_ratio("b2a", "aba"), 4.0 / 6.0);
        assert_eq!(sequence_ratio("aba", "b2a"), 2.0 / 6.0);
    }

    #[test]
    fn binary_metrics_closed_form() {
        // class 0: TP=1, FP=1 (a true-1 predicted as 0), FN=0
        let cm = confusion_matrix(&[(0, 0), (1, 0)], 2).unwrap();
        let m = metrics(&cm).unwrap();
        assert_eq!(m.per_class[0].precision, 0.5);
        assert_eq!(m.per_class[0].recall, 1.0);
        assert!((m.per_class[0].f1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.accuracy, 0.5);
    }

    #[test]
    fn diagonal_is_perfect_and_absent_classes_are_skipped() {
        let pairs: Vec<(usize, usize)> = (0..5).map(|c| (c, c)).collect();
        let m = metrics(&confusion_matrix(&pairs, 17).unwrap()).unwrap();
        assert_eq!((m.accuracy, m.macro_precision, m.macro_recall, m.macro_f1), (1.0, 1.0, 1.0, 1.0));
        assert_eq!(m.included_classes, 5);
    }

    #[test]
    fn errors() {
        assert_eq!(confusion_matrix(&[(17, 0)], 17), Err(EvalError::ClassOutOfRange(17, 17)));
        assert_eq!(confusion_matrix(&[(0, 20)], 17), Err(EvalError::ClassOutOfRange(20, 17)));
        assert_eq!(metrics(&ConfusionMatrix::zeros(17)), Err(EvalError::EmptyMatrix));
        assert_eq!(evaluate_plates(&[], Normalize::None), Err(EvalError::EmptyInput));
        assert_eq!(confusion_matrix(&[], 17).unwrap().total(), 0);
    }

    #[test]
    fn confusion_matches_counter() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pairs: Vec<(usize, usize)> = (0..50).map(|_| (rng.gen_range(0..17), rng.gen_range(0..17))).collect();
        let cm = confusion_matrix(&pairs, 17).unwrap();
        let mut tally = std::collections::HashMap::new();
        for p in &pairs {
            *tally.entry(*p).or_insert(0u64) += 1;
        }
        for t in 0..17 {
            for p in 0..17 {
                assert_eq!(cm.get(t, p), tally.get(&(t, p)).copied().unwrap_or(0));
            }
        }
    }

    #[test]
    fn plate_report_counts() {
        let same: Vec<(String, String)> = (0..30).map(|i| (i.to_string(), i.to_string())).collect();
        let r = evaluate_plates(&same, Normalize::Casefold).unwrap();
        assert_eq!((r.mean_ratio, r.at_least_095, r.at_least_090), (1.0, 30, 30));
        let r = evaluate_plates(&[("a".into(), "b".into())], Normalize::None).unwrap();
        assert_eq!(r.mean_ratio, 0.0);
    }

    #[test]
    fn tsv_parsing() {
        let p = parse_pairs_tsv("# g\td\nab\tac\r\n\nx\t\n").unwrap();
        assert_eq!(p, vec![("ab".into(), "ac".into()), ("x".into(), "".into())]);
        assert!(parse_pairs_tsv("no tab").is_err());
    }

    #[test]
    fn csv_layout() {
        let cm = confusion_matrix(&[(0, 1)], 2).unwrap();
        assert_eq!(cm.to_csv(&["a".into(), "b".into()]), "true\\pred,a,b\na,0,1\nb,0,0\n");
    }

    proptest! {
        #[test]
        fn ratio_is_bounded_by_lcs(a in "[a-e0-9]{0,12}", b in "[a-e0-9]{0,12}") {
            let r = sequence_ratio(&a, &b);
            prop_assert!((0.0..=1.0).contains(&r));
            let (ac, bc): (Vec<char>, Vec<char>) = (a.chars().collect(), b.chars().collect());
            if !(ac.is_empty() && bc.is_empty()) {
                let bound = 2.0 * lcs_len(&ac, &bc) as f64 / (ac.len() + bc.len()) as f64;
                prop_assert!(r <= bound && sequence_ratio(&b, &a) <= bound);
            }
            if !a.is_empty() {
                prop_assert_eq!(sequence_ratio(&a, &a), 1.0);
            }
        }

        #[test]
        fn row_sums_are_true_counts(pairs in proptest::collection::vec((0usize..17, 0usize..17), 0..60)) {
            let cm = confusion_matrix(&pairs, 17).unwrap();
            for t in 0..17 {
                let n = pairs.iter().filter(|p| p.0 == t).count() as u64;
                prop_assert_eq!(cm.row(t).iter().sum::<u64>(), n);
            }
        }

        #[test]
        fn accuracy_is_tp_over_total(pairs in proptest::collection::vec((0usize..17, 0usize..17), 1..60)) {
            let m = metrics(&confusion_matrix(&pairs, 17).unwrap()).unwrap();
            let tp = pairs.iter().filter(|p| p.0 == p.1).count() as f64;
            prop_assert_eq!(m.accuracy, tp / pairs.len() as f64);
            prop_assert!(m.macro_f1 <= 1.0);
            let diagonal = pairs.iter().all(|p| p.0 == p.1);
            prop_assert_eq!(m.macro_f1 == 1.0, diagonal);
        }
    }
}

//! Description-similarity kernel used to group transactions by merchant or
//! biller. Implements a Ratcliff/Obershelp ratio over case-folded strings
//! with junk characters (digits and whitespace by default) removed, so that
//! reference numbers and dates embedded in descriptions do not split
//! otherwise-identical billers.

use std::collections::HashMap;

/// Characters ignored during matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum JunkRule {
    /// Ignore ASCII digits and whitespace (dates, reference numbers).
    #[default]
    DigitsAndWhitespace,
    /// Compare every character.
    None,
}

impl JunkRule {
    fn is_junk(self, c: char) -> bool {
        match self {
            JunkRule::DigitsAndWhitespace => c.is_ascii_digit() || c.is_whitespace(),
            JunkRule::None => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityConfig {
    /// Two descriptions with similarity at or above this value are treated
    /// as the same biller.
    pub threshold: f64,
    pub junk: JunkRule,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        SimilarityConfig {
            threshold: 0.75,
            junk: JunkRule::default(),
        }
    }
}

impl SimilarityConfig {
    pub fn with_threshold(threshold: f64) -> SimilarityConfig {
        SimilarityConfig {
            threshold,
            ..SimilarityConfig::default()
        }
    }
}

/// Case-folds and strips junk characters.
fn normalize(text: &str, junk: JunkRule) -> Vec<char> {
    text.chars()
        .filter(|&c| !junk.is_junk(c))
        .flat_map(char::to_lowercase)
        .collect()
}

/// Longest contiguous matching block between `a[alo..ahi]` and `b[blo..bhi]`.
/// Among equally long blocks the one with the smallest `i`, then smallest
/// `j`, wins.
fn longest_match(
    a: &[char],
    b_index: &HashMap<char, Vec<usize>>,
    alo: usize,
    ahi: usize,
    blo: usize,
    bhi: usize,
) -> (usize, usize, usize) {
    let (mut best_i, mut best_j, mut best_size) = (alo, blo, 0usize);
    // j2len[j] = length of the longest match ending at a[i], b[j].
    let mut j2len: HashMap<usize, usize> = HashMap::new();
    for i in alo..ahi {
        let mut new_j2len: HashMap<usize, usize> = HashMap::new();
        if let Some(positions) = b_index.get(&a[i]) {
            for &j in positions {
                if j < blo {
                    continue;
                }
                if j >= bhi {
                    break;
                }
                let k = if j > 0 { j2len.get(&(j - 1)).copied().unwrap_or(0) + 1 } else { 1 };
                new_j2len.insert(j, k);
                if k > best_size {
                    best_i = i + 1 - k;
                    best_j = j + 1 - k;
                    best_size = k;
                }
            }
        }
        j2len = new_j2len;
    }
    (best_i, best_j, best_size)
}

/// Total number of matched characters, recursing on the flanks of each
/// longest matching block.
fn matched_chars(a: &[char], b: &[char]) -> usize {
    let mut b_index: HashMap<char, Vec<usize>> = HashMap::new();
    for (j, &c) in b.iter().enumerate() {
        b_index.entry(c).or_default().push(j);
    }
    let mut total = 0usize;
    let mut queue = vec![(0usize, a.len(), 0usize, b.len())];
    while let Some((alo, ahi, blo, bhi)) = queue.pop() {
        let (i, j, size) = longest_match(a, &b_index, alo, ahi, blo, bhi);
        if size > 0 {
            total += size;
            queue.push((alo, i, blo, j));
            queue.push((i + size, ahi, j + size, bhi));
        }
    }
    total
}

/// Ratcliff/Obershelp-style ratio in [0, 1]: twice the number of matched
/// characters over the combined length, computed on case-folded,
/// junk-stripped text. Returns 1.0 exactly when the non-junk content is
/// character-identical in order (including the case where both strings have
/// no non-junk content), and 0.0 when nothing matches.
///
/// The raw Ratcliff/Obershelp recursion depends on argument order when
/// equally long blocks tie; the pair is put in a canonical order first so
/// the ratio is symmetric.
pub fn similarity(a: &str, b: &str, config: &SimilarityConfig) -> f64 {
    let ca = normalize(a, config.junk);
    let cb = normalize(b, config.junk);
    if ca.is_empty() && cb.is_empty() {
        return 1.0;
    }
    if ca.is_empty() || cb.is_empty() {
        return 0.0;
    }
    let (first, second) = if ca <= cb { (&ca, &cb) } else { (&cb, &ca) };
    let m = matched_chars(first, second);
    2.0 * m as f64 / (ca.len() + cb.len()) as f64
}

/// True when the two descriptions meet the similarity threshold.
pub fn is_same_biller(a: &str, b: &str, config: &SimilarityConfig) -> bool {
    similarity(a, b, config) >= config.threshold
}

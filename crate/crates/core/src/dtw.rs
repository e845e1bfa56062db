//! Dynamic time warping: banded distance kernel, alignment-path recovery,
//! fast subsequence search over historical balance windows, and alignment of
//! matched windows to payday landmark templates.

use std::collections::BTreeMap;

use chrono::{Days, NaiveDate};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{AccountId, BalanceSeries, Standardization, Step, Transaction};
use crate::recurring::{Frequency, RecurringTransaction};
use crate::textsim::{is_same_biller, SimilarityConfig};

/// Pointwise cost between two observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PointCost {
    #[default]
    SquaredEuclidean,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DtwConfig {
    /// Sakoe-Chiba band radius: cells with |i - j| > window are unreachable.
    pub window: usize,
    pub cost: PointCost,
}

impl Default for DtwConfig {
    fn default() -> Self {
        DtwConfig {
            window: 2,
            cost: PointCost::SquaredEuclidean,
        }
    }
}

impl DtwConfig {
    pub fn with_window(window: usize) -> DtwConfig {
        DtwConfig {
            window,
            ..DtwConfig::default()
        }
    }
}

#[inline]
fn point_cost(a: f64, b: f64) -> f64 {
    let d = a - b;
    d * d
}

fn check_band(n: usize, m: usize, window: usize) -> Result<()> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidInput("empty sequence in DTW".into()));
    }
    if n.abs_diff(m) > window {
        return Err(Error::BandInfeasible(n, m, window));
    }
    Ok(())
}

/// Banded DTW distance: accumulated squared pointwise cost along the best
/// warp path, square-rooted at the end. Zero for identical sequences.
pub fn dtw_distance(a: &[f64], b: &[f64], config: &DtwConfig) -> Result<f64> {
    let (n, m, w) = (a.len(), b.len(), config.window);
    check_band(n, m, w)?;
    let mut prev = vec![f64::INFINITY; m];
    let mut cur = vec![f64::INFINITY; m];
    for i in 0..n {
        cur.fill(f64::INFINITY);
        let j_lo = i.saturating_sub(w);
        let j_hi = (i + w).min(m - 1);
        for j in j_lo..=j_hi {
            let pc = point_cost(a[i], b[j]);
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let diag = if i > 0 && j > 0 { prev[j - 1] } else { f64::INFINITY };
                let up = if i > 0 { prev[j] } else { f64::INFINITY };
                let left = if j > j_lo { cur[j - 1] } else { f64::INFINITY };
                diag.min(up).min(left)
            };
            cur[j] = pc + best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m - 1].sqrt())
}

/// Warp path: monotone index pairs from (0,0) to (n-1,m-1), every step
/// advancing i, j, or both by one, staying inside the band.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WarpPath {
    pub pairs: Vec<(usize, usize)>,
}

/// DTW distance plus a path achieving it. Backtracking ties prefer the
/// diagonal step, then the step advancing i.
pub fn dtw_path(a: &[f64], b: &[f64], config: &DtwConfig) -> Result<(f64, WarpPath)> {
    let (n, m, w) = (a.len(), b.len(), config.window);
    check_band(n, m, w)?;
    let mut dp = vec![f64::INFINITY; n * m];
    for i in 0..n {
        let j_lo = i.saturating_sub(w);
        let j_hi = (i + w).min(m - 1);
        for j in j_lo..=j_hi {
            let pc = point_cost(a[i], b[j]);
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let diag = if i > 0 && j > 0 { dp[(i - 1) * m + j - 1] } else { f64::INFINITY };
                let up = if i > 0 { dp[(i - 1) * m + j] } else { f64::INFINITY };
                let left = if j > 0 { dp[i * m + j - 1] } else { f64::INFINITY };
                diag.min(up).min(left)
            };
            dp[i * m + j] = pc + best;
        }
    }
    let total = dp[n * m - 1];

    let mut pairs = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n - 1, m - 1);
    pairs.push((i, j));
    while i > 0 || j > 0 {
        let diag = if i > 0 && j > 0 { dp[(i - 1) * m + j - 1] } else { f64::INFINITY };
        let up = if i > 0 { dp[(i - 1) * m + j] } else { f64::INFINITY };
        let left = if j > 0 { dp[i * m + j - 1] } else { f64::INFINITY };
        let best = diag.min(up).min(left);
        if diag == best {
            i -= 1;
            j -= 1;
        } else if up == best {
            i -= 1;
        } else {
            j -= 1;
        }
        pairs.push((i, j));
    }
    pairs.reverse();
    Ok((total.sqrt(), WarpPath { pairs }))
}

/// Upper/lower envelopes of a query under a band radius, for the
/// Keogh-style lower bound.
pub fn query_envelope(query: &[f64], window: usize) -> (Vec<f64>, Vec<f64>) {
    let n = query.len();
    let mut upper = vec![0.0; n];
    let mut lower = vec![0.0; n];
    for i in 0..n {
        let lo = i.saturating_sub(window);
        let hi = (i + window).min(n - 1);
        let slice = &query[lo..=hi];
        upper[i] = slice.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        lower[i] = slice.iter().cloned().fold(f64::INFINITY, f64::min);
    }
    (upper, lower)
}

/// Keogh lower bound on the banded DTW distance between the enveloped query
/// and an equal-length candidate. Never exceeds the true distance.
pub fn envelope_lower_bound(upper: &[f64], lower: &[f64], candidate: &[f64]) -> f64 {
    let mut sum = 0.0;
    for ((&u, &l), &c) in upper.iter().zip(lower).zip(candidate) {
        if c > u {
            sum += point_cost(c, u);
        } else if c < l {
            sum += point_cost(c, l);
        }
    }
    sum.sqrt()
}

/// A historical balance window matched to a query: the standardized window,
/// its landmark-aligned form, and its DTW distance to the query prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchedSequence {
    pub source_account: AccountId,
    pub source_start: NaiveDate,
    pub step: Step,
    /// Standardized window values, `total_len` long.
    pub raw: Vec<f64>,
    /// Landmark-aligned values; equals `raw` until alignment is applied.
    pub aligned: Vec<f64>,
    pub dtw_distance: f64,
}

/// Window geometry for a search: candidates are `total_len` steps long,
/// standardized over their first `std_len` values, and matched to the query
/// on their first `match_len` values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchSpec {
    pub total_len: usize,
    pub match_len: usize,
    pub std_len: usize,
    /// Number of matches wanted.
    pub need: usize,
}

/// A per-account date range no returned window may overlap (e.g. the query's
/// own window).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Exclusion {
    pub account: AccountId,
    pub from: NaiveDate,
    pub to: NaiveDate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    /// Best windows in (distance, account, start date) order.
    pub matches: Vec<MatchedSequence>,
    /// Set when fewer than `need` feasible candidates existed.
    pub shortfall: bool,
}

struct Candidate {
    account: AccountId,
    start_date: NaiveDate,
    step: Step,
    values: Vec<f64>,
    lower_bound: f64,
}

fn collect_candidates(
    query: &[f64],
    corpus: &[BalanceSeries],
    spec: &SearchSpec,
    exclusions: &[Exclusion],
    config: &DtwConfig,
) -> Result<Vec<Candidate>> {
    if query.len() != spec.match_len {
        return Err(Error::InvalidInput(format!(
            "query length {} does not match spec.match_len {}",
            query.len(),
            spec.match_len
        )));
    }
    if spec.match_len > spec.total_len || spec.std_len > spec.total_len || spec.std_len < 2 {
        return Err(Error::InvalidInput("inconsistent search window geometry".into()));
    }
    if spec.need == 0 {
        return Err(Error::InvalidInput("need must be at least 1".into()));
    }
    let (upper, lower) = query_envelope(query, config.window);

    let per_series: Vec<Vec<Candidate>> = corpus
        .par_iter()
        .map(|series| {
            let mut out = Vec::new();
            if series.len() < spec.total_len {
                return out;
            }
            let raw = series.values_f64();
            let step_days = series.step.days() as u64;
            for start in 0..=(series.len() - spec.total_len) {
                let start_date = series.date_at(start);
                let end_date = start_date + Days::new((spec.total_len as u64 - 1) * step_days);
                let excluded = exclusions.iter().any(|e| {
                    e.account == series.account_id && start_date <= e.to && end_date >= e.from
                });
                if excluded {
                    continue;
                }
                let window = &raw[start..start + spec.total_len];
                let params = Standardization::fit(&window[..spec.std_len])
                    .expect("std_len >= 2 checked above");
                let values = params.apply_slice(window);
                let lb = envelope_lower_bound(&upper, &lower, &values[..spec.match_len]);
                out.push(Candidate {
                    account: series.account_id.clone(),
                    start_date,
                    step: series.step,
                    values,
                    lower_bound: lb,
                });
            }
            out
        })
        .collect();
    Ok(per_series.into_iter().flatten().collect())
}

/// Greedy selection over candidates sorted by (distance, account, start):
/// a window is kept unless a kept window from the same account starts within
/// `window` steps of it.
fn greedy_select<'a>(
    sorted: &[(f64, &'a Candidate)],
    need: usize,
    window: usize,
) -> Vec<(f64, &'a Candidate)> {
    let mut picked: Vec<(f64, &Candidate)> = Vec::new();
    for &(dist, cand) in sorted {
        if picked.len() == need {
            break;
        }
        let overlaps = picked.iter().any(|(_, p)| {
            p.account == cand.account
                && (p.start_date - cand.start_date).num_days().unsigned_abs()
                    <= window as u64 * cand.step.days() as u64
        });
        if !overlaps {
            picked.push((dist, cand));
        }
    }
    picked
}

fn sort_key(dist: f64, cand: &Candidate) -> (f64, &AccountId, NaiveDate) {
    (dist, &cand.account, cand.start_date)
}

fn outcome_from(picked: Vec<(f64, &Candidate)>, spec: &SearchSpec) -> SearchOutcome {
    let shortfall = picked.len() < spec.need;
    let matches = picked
        .into_iter()
        .map(|(dist, c)| MatchedSequence {
            source_account: c.account.clone(),
            source_start: c.start_date,
            step: c.step,
            raw: c.values.clone(),
            aligned: c.values.clone(),
            dtw_distance: dist,
        })
        .collect();
    SearchOutcome { matches, shortfall }
}

/// Exhaustive-scan subsequence search: computes the true DTW distance of
/// every feasible window and selects greedily. Reference route for the
/// pruned search.
pub fn subsequence_search_exhaustive(
    query: &[f64],
    corpus: &[BalanceSeries],
    spec: &SearchSpec,
    exclusions: &[Exclusion],
    config: &DtwConfig,
) -> Result<SearchOutcome> {
    let candidates = collect_candidates(query, corpus, spec, exclusions, config)?;
    let mut scored: Vec<(f64, &Candidate)> = candidates
        .iter()
        .map(|c| {
            let d = dtw_distance(query, &c.values[..spec.match_len], config)
                .expect("equal lengths are band-feasible");
            (d, c)
        })
        .collect();
    scored.sort_by(|a, b| sort_key(a.0, a.1).partial_cmp(&sort_key(b.0, b.1)).unwrap());
    let picked = greedy_select(&scored, spec.need, config.window);
    Ok(outcome_from(picked, spec))
}

/// Subsequence search with envelope-based pruning. Candidates are evaluated
/// in ascending lower-bound order; once the selection is full and the next
/// lower bound exceeds the worst kept distance, no unevaluated candidate can
/// change the outcome. Results are identical to the exhaustive scan.
pub fn subsequence_search(
    query: &[f64],
    corpus: &[BalanceSeries],
    spec: &SearchSpec,
    exclusions: &[Exclusion],
    config: &DtwConfig,
) -> Result<SearchOutcome> {
    let candidates = collect_candidates(query, corpus, spec, exclusions, config)?;
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&x, &y| {
        let a = &candidates[x];
        let b = &candidates[y];
        (a.lower_bound, &a.account, a.start_date)
            .partial_cmp(&(b.lower_bound, &b.account, b.start_date))
            .unwrap()
    });

    let mut evaluated: Vec<(f64, &Candidate)> = Vec::new();
    for (rank, &idx) in order.iter().enumerate() {
        let cand = &candidates[idx];
        if evaluated.len() >= spec.need {
            // Selection among distances <= T is already final: later
            // candidates have distance >= their lower bound > T.
            let mut sorted = evaluated.clone();
            sorted.sort_by(|a, b| sort_key(a.0, a.1).partial_cmp(&sort_key(b.0, b.1)).unwrap());
            let picked = greedy_select(&sorted, spec.need, config.window);
            if picked.len() == spec.need && cand.lower_bound > picked[spec.need - 1].0 {
                let _ = rank;
                return Ok(outcome_from(picked, spec));
            }
        }
        let d = dtw_distance(query, &cand.values[..spec.match_len], config)
            .expect("equal lengths are band-feasible");
        evaluated.push((d, cand));
    }
    let mut sorted = evaluated;
    sorted.sort_by(|a, b| sort_key(a.0, a.1).partial_cmp(&sort_key(b.0, b.1)).unwrap());
    let picked = greedy_select(&sorted, spec.need, config.window);
    Ok(outcome_from(picked, spec))
}

/// Sparse payday landmarks over a window: step index to deposit magnitude.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkTemplate {
    pub len: usize,
    pub marks: BTreeMap<usize, f64>,
}

impl LandmarkTemplate {
    pub fn empty(len: usize) -> LandmarkTemplate {
        LandmarkTemplate {
            len,
            marks: BTreeMap::new(),
        }
    }

    pub fn is_unmarked(&self) -> bool {
        self.marks.is_empty()
    }

    /// Dense indicator sequence: the mark magnitude at marked steps, zero
    /// elsewhere.
    pub fn indicator_vec(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.len];
        for (&i, &mag) in &self.marks {
            v[i] = mag;
        }
        v
    }

    /// Places dated marks on the window grid. A deposit dated inside a step
    /// lands on that step's sample point (the step end). Marks outside the
    /// window or with non-positive magnitude are dropped.
    pub fn from_dated_marks(
        range_start: NaiveDate,
        len: usize,
        step: Step,
        marks: &[(NaiveDate, f64)],
    ) -> LandmarkTemplate {
        let mut out = LandmarkTemplate::empty(len);
        let step_days = step.days();
        for &(date, magnitude) in marks {
            if magnitude <= 0.0 {
                continue;
            }
            let offset = (date - range_start).num_days();
            if offset < 0 {
                continue;
            }
            let idx = (offset + step_days - 1) / step_days; // step containing the date
            let idx = idx as usize;
            if idx < len {
                let slot = out.marks.entry(idx).or_insert(0.0);
                *slot = slot.max(magnitude);
            }
        }
        out
    }
}

/// The account's paycheck recurring: the inflow with the largest mean
/// magnitude whose category or description marks it as a salary-style
/// deposit.
pub fn find_paycheck<'a>(recurrings: &'a [RecurringTransaction]) -> Option<&'a RecurringTransaction> {
    recurrings
        .iter()
        .filter(|r| r.mean_amount.is_inflow())
        .filter(|r| {
            use crate::model::Category::{Payment, Transfer};
            let salary_text = {
                let d = r.representative_description.to_lowercase();
                d.contains("deposit") || d.contains("payroll") || d.contains("salary")
            };
            r.category == Transfer || r.category == Payment || salary_text
        })
        .max_by(|a, b| {
            (a.mean_amount.cents().abs(), b.account_id.as_str())
                .cmp(&(b.mean_amount.cents().abs(), a.account_id.as_str()))
        })
}

/// Builds the payday landmark template for a window of `len` steps starting
/// at `range_start`: marks at observed paycheck deposits through
/// `observed_until`, and at predicted future paydays beyond it, with
/// magnitudes equal to the deposit values. No paycheck recurring means an
/// unmarked template (alignment becomes the identity).
#[allow(clippy::too_many_arguments)]
pub fn build_payday_template(
    recurrings: &[RecurringTransaction],
    account_txs: &[Transaction],
    simcfg: &SimilarityConfig,
    range_start: NaiveDate,
    len: usize,
    step: Step,
    observed_until: NaiveDate,
) -> LandmarkTemplate {
    let Some(paycheck) = find_paycheck(recurrings) else {
        return LandmarkTemplate::empty(len);
    };
    let range_end = range_start + Days::new(((len as i64 - 1) * step.days()) as u64);
    let mut marks: Vec<(NaiveDate, f64)> = Vec::new();
    for t in account_txs {
        if t.amount.is_inflow()
            && t.category == paycheck.category
            && t.date >= range_start
            && t.date <= observed_until.min(range_end)
            && is_same_biller(&t.description, &paycheck.representative_description, simcfg)
        {
            marks.push((t.date, t.amount.abs().to_f64()));
        }
    }
    // Future paydays projected from the last observed occurrence.
    let freq = Frequency::of(paycheck.frequency.kind);
    let mut k = 1u32;
    loop {
        let date = freq.advance(paycheck.last_date, k);
        if date > range_end {
            break;
        }
        if date > observed_until {
            marks.push((date, paycheck.mean_amount.abs().to_f64()));
        }
        k += 1;
        if k > 1000 {
            break;
        }
    }
    LandmarkTemplate::from_dated_marks(range_start, len, step, &marks)
}

/// Warps a matched window onto the target payday template: the source and
/// target indicator sequences are DTW-aligned (band relaxed to a quarter of
/// the window), and the path transports the raw values so that each target
/// step receives the mean of its matched source values. If either mark set
/// is empty the transform is the identity.
pub fn align_to_template(
    raw: &[f64],
    source: &LandmarkTemplate,
    target: &LandmarkTemplate,
) -> Vec<f64> {
    if source.is_unmarked() || target.is_unmarked() {
        return raw.to_vec();
    }
    debug_assert_eq!(raw.len(), source.len);
    debug_assert_eq!(raw.len(), target.len);
    let window = raw.len().div_ceil(4);
    let config = DtwConfig {
        window,
        cost: PointCost::SquaredEuclidean,
    };
    let (_, path) = dtw_path(&source.indicator_vec(), &target.indicator_vec(), &config)
        .expect("equal lengths are band-feasible");
    let mut sums = vec![0.0; raw.len()];
    let mut counts = vec![0usize; raw.len()];
    for &(i, j) in &path.pairs {
        sums[j] += raw[i];
        counts[j] += 1;
    }
    sums.iter()
        .zip(&counts)
        .map(|(&s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Category, Money, Transaction};
    use proptest::prelude::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    /// Brute-force DP over the full cost matrix restricted to the band.
    fn brute_force_dtw(a: &[f64], b: &[f64], window: usize) -> f64 {
        let (n, m) = (a.len(), b.len());
        let mut dp = vec![vec![f64::INFINITY; m]; n];
        for i in 0..n {
            for j in 0..m {
                if i.abs_diff(j) > window {
                    continue;
                }
                let pc = (a[i] - b[j]) * (a[i] - b[j]);
                let best = if i == 0 && j == 0 {
                    0.0
                } else {
                    let diag = if i > 0 && j > 0 { dp[i - 1][j - 1] } else { f64::INFINITY };
                    let up = if i > 0 { dp[i - 1][j] } else { f64::INFINITY };
                    let left = if j > 0 { dp[i][j - 1] } else { f64::INFINITY };
                    diag.min(up).min(left)
                };
                dp[i][j] = pc + best;
            }
        }
        dp[n - 1][m - 1].sqrt()
    }

    #[test]
    fn identical_sequences_have_zero_distance() {
        let cfg = DtwConfig::default();
        let a = [1.0, 2.0, 3.0];
        assert_eq!(dtw_distance(&a, &a, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn matches_brute_force_on_small_example() {
        let cfg = DtwConfig::with_window(2);
        let a = [0.0, 0.0, 1.0, 0.0];
        let b = [0.0, 1.0, 0.0, 0.0];
        let got = dtw_distance(&a, &b, &cfg).unwrap();
        let want = brute_force_dtw(&a, &b, 2);
        assert!((got - want).abs() < 1e-15);
    }

    #[test]
    fn window_zero_reduces_to_euclidean() {
        let cfg = DtwConfig::with_window(0);
        let a = [1.0, 4.0, 2.0];
        let b = [2.0, 2.0, 5.0];
        let want = ((1.0f64) + 4.0 + 9.0).sqrt();
        assert!((dtw_distance(&a, &b, &cfg).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn infeasible_band_is_an_error() {
        let cfg = DtwConfig::with_window(1);
        assert!(matches!(
            dtw_distance(&[1.0, 2.0, 3.0, 4.0], &[1.0], &cfg),
            Err(Error::BandInfeasible(..))
        ));
    }

    #[test]
    fn path_is_diagonal_for_identical_inputs() {
        let cfg = DtwConfig::default();
        let a = [3.0, 1.0, 4.0, 1.0, 5.0];
        let (dist, path) = dtw_path(&a, &a, &cfg).unwrap();
        assert_eq!(dist, 0.0);
        let want: Vec<(usize, usize)> = (0..a.len()).map(|i| (i, i)).collect();
        assert_eq!(path.pairs, want);
    }

    #[test]
    fn path_endpoints_and_cost_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cfg = DtwConfig::with_window(3);
        for _ in 0..50 {
            let n: usize = rng.random_range(2..10);
            let m_len = (n as i64 + rng.random_range(-3i64..=3)).clamp(1, 12) as usize;
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let b: Vec<f64> = (0..m_len).map(|_| rng.random_range(-2.0..2.0)).collect();
            if n.abs_diff(m_len) > cfg.window {
                continue;
            }
            let (dist, path) = dtw_path(&a, &b, &cfg).unwrap();
            assert_eq!(*path.pairs.first().unwrap(), (0, 0));
            assert_eq!(*path.pairs.last().unwrap(), (n - 1, m_len - 1));
            for w in path.pairs.windows(2) {
                let (i0, j0) = w[0];
                let (i1, j1) = w[1];
                assert!(i1 == i0 || i1 == i0 + 1);
                assert!(j1 == j0 || j1 == j0 + 1);
                assert!(i1 > i0 || j1 > j0);
            }
            for &(i, j) in &path.pairs {
                assert!(i.abs_diff(j) <= cfg.window);
            }
            let walked: f64 = path.pairs.iter().map(|&(i, j)| (a[i] - b[j]) * (a[i] - b[j])).sum();
            assert!((walked.sqrt() - dist).abs() < 1e-12);
        }
    }

    #[test]
    fn wide_band_equals_unconstrained() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n = rng.random_range(1..12);
            let m_len = rng.random_range(1..12);
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..m_len).map(|_| rng.random_range(-1.0..1.0)).collect();
            let w = n.max(m_len);
            let cfg = DtwConfig::with_window(w);
            let got = dtw_distance(&a, &b, &cfg).unwrap();
            let want = brute_force_dtw(&a, &b, w);
            assert!((got - want).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn distance_is_symmetric_and_nonnegative(
            a in proptest::collection::vec(-5.0f64..5.0, 1..10),
            b in proptest::collection::vec(-5.0f64..5.0, 1..10),
        ) {
            let w = a.len().max(b.len());
            let cfg = DtwConfig::with_window(w);
            let ab = dtw_distance(&a, &b, &cfg).unwrap();
            let ba = dtw_distance(&b, &a, &cfg).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - ba).abs() < 1e-12);
        }

        #[test]
        fn lower_bound_never_exceeds_distance(
            pair in proptest::collection::vec(-5.0f64..5.0, 2..16).prop_flat_map(|a| {
                let n = a.len();
                (Just(a), proptest::collection::vec(-5.0f64..5.0, n))
            }),
            window in 0usize..4,
        ) {
            let (a, b) = pair;
            let cfg = DtwConfig { window, cost: PointCost::SquaredEuclidean };
            let (upper, lower) = query_envelope(&a, window);
            let lb = envelope_lower_bound(&upper, &lower, &b);
            let dist = dtw_distance(&a, &b, &cfg).unwrap();
            prop_assert!(lb <= dist + 1e-12, "lb {lb} > dtw {dist}");
        }
    }

    fn series(account: &str, start: NaiveDate, values: Vec<f64>) -> BalanceSeries {
        BalanceSeries {
            account_id: AccountId::new(account),
            start_date: start,
            step: Step::Daily,
            values: values.into_iter().map(|v| Money((v * 100.0).round() as i64)).collect(),
        }
    }

    fn spec(total: usize, matchn: usize, std: usize, need: usize) -> SearchSpec {
        SearchSpec {
            total_len: total,
            match_len: matchn,
            std_len: std,
            need,
        }
    }

    #[test]
    fn planted_exact_copy_ranks_first_with_zero_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // Values on the cent grid, since series round to cents.
        let mut cents = |lo: i64, hi: i64| rng.random_range(lo..hi) as f64 / 100.0;
        let query_raw: Vec<f64> = (0..8).map(|_| cents(-1000, 1000)).collect();
        let continuation: Vec<f64> = (0..4).map(|_| cents(-1000, 1000)).collect();

        // Corpus: noise series plus one containing query + continuation.
        let mut planted: Vec<f64> = (0..5).map(|_| cents(-1000, 1000)).collect();
        planted.extend(&query_raw);
        planted.extend(&continuation);
        let noise: Vec<f64> = (0..30).map(|_| cents(-1000, 1000)).collect();
        let corpus = vec![
            series("noise", d(2020, 1, 1), noise),
            series("planted", d(2020, 1, 1), planted),
        ];

        let params = Standardization::fit(&query_raw).unwrap();
        let query_std = params.apply_slice(&query_raw);
        let sp = spec(12, 8, 8, 1);
        let cfg = DtwConfig::default();
        let out = subsequence_search(&query_std, &corpus, &sp, &[], &cfg).unwrap();
        assert!(!out.shortfall);
        assert_eq!(out.matches[0].source_account, AccountId::new("planted"));
        assert_eq!(out.matches[0].source_start, d(2020, 1, 6));
        assert!(out.matches[0].dtw_distance < 1e-9, "{}", out.matches[0].dtw_distance);
    }

    #[test]
    fn shortfall_flag_when_not_enough_candidates() {
        let corpus = vec![series("a", d(2020, 1, 1), (0..14).map(|i| i as f64).collect())];
        let query = vec![0.0; 8];
        let sp = spec(12, 8, 8, 5);
        let out = subsequence_search(&query, &corpus, &sp, &[], &DtwConfig::default()).unwrap();
        assert!(out.shortfall);
        assert!(!out.matches.is_empty());
    }

    #[test]
    fn exclusions_are_respected() {
        let corpus = vec![series("a", d(2020, 1, 1), (0..30).map(|i| (i % 7) as f64).collect())];
        let query = vec![0.0; 8];
        let sp = spec(12, 8, 8, 3);
        let excl = vec![Exclusion {
            account: AccountId::new("a"),
            from: d(2020, 1, 1),
            to: d(2020, 1, 10),
        }];
        let out = subsequence_search(&query, &corpus, &sp, &excl, &DtwConfig::default()).unwrap();
        for m in &out.matches {
            assert!(m.source_start > d(2020, 1, 10) - chrono::Duration::days(11));
            let end = m.source_start + chrono::Duration::days(11);
            assert!(m.source_start > d(2020, 1, 10) || end < d(2020, 1, 1));
        }
    }

    #[test]
    fn pruned_equals_exhaustive_on_random_corpora() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for round in 0..100 {
            let n_series = rng.random_range(1..5);
            let corpus: Vec<BalanceSeries> = (0..n_series)
                .map(|s| {
                    let len = rng.random_range(14..40);
                    let vals: Vec<f64> = (0..len).map(|_| rng.random_range(-5.0..5.0)).collect();
                    series(&format!("acct{s}"), d(2020, 1, 1), vals)
                })
                .collect();
            let query: Vec<f64> = (0..8).map(|_| rng.random_range(-2.0..2.0)).collect();
            let need = rng.random_range(1..6);
            let sp = spec(12, 8, 8, need);
            let cfg = DtwConfig::default();
            let pruned = subsequence_search(&query, &corpus, &sp, &[], &cfg).unwrap();
            let full = subsequence_search_exhaustive(&query, &corpus, &sp, &[], &cfg).unwrap();
            assert_eq!(pruned.shortfall, full.shortfall, "round {round}");
            assert_eq!(pruned.matches.len(), full.matches.len(), "round {round}");
            for (p, f) in pruned.matches.iter().zip(&full.matches) {
                assert_eq!(p.source_account, f.source_account, "round {round}");
                assert_eq!(p.source_start, f.source_start, "round {round}");
                assert_eq!(p.dtw_distance, f.dtw_distance, "round {round}");
            }
        }
    }

    #[test]
    fn same_account_overlap_is_suppressed() {
        // A constant series matches a constant query equally everywhere;
        // selected windows from one account must differ in start by > window.
        let corpus = vec![series("a", d(2020, 1, 1), vec![1.0; 40])];
        let query = vec![0.0; 8];
        let sp = spec(12, 8, 8, 4);
        let cfg = DtwConfig::default();
        let out = subsequence_search(&query, &corpus, &sp, &[], &cfg).unwrap();
        for (i, m) in out.matches.iter().enumerate() {
            for other in &out.matches[i + 1..] {
                let gap = (m.source_start - other.source_start).num_days().unsigned_abs();
                assert!(gap > cfg.window as u64);
            }
        }
    }

    #[test]
    fn template_marks_land_on_grid() {
        let t = LandmarkTemplate::from_dated_marks(
            d(2020, 1, 1),
            10,
            Step::Daily,
            &[(d(2020, 1, 3), 1000.0), (d(2020, 1, 20), 5.0), (d(2019, 12, 30), 7.0)],
        );
        assert_eq!(t.marks.len(), 1);
        assert_eq!(t.marks[&2], 1000.0);

        let w = LandmarkTemplate::from_dated_marks(
            d(2020, 1, 5),
            4,
            Step::Weekly,
            &[(d(2020, 1, 8), 900.0)],
        );
        // Jan 8 falls in the week ending Jan 12 (index 1).
        assert_eq!(w.marks[&1], 900.0);
    }

    #[test]
    fn align_identity_when_marks_match_or_absent() {
        let raw: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let mut src = LandmarkTemplate::empty(12);
        src.marks.insert(3, 100.0);
        src.marks.insert(9, 100.0);
        let tgt = src.clone();
        assert_eq!(align_to_template(&raw, &src, &tgt), raw);
        let empty = LandmarkTemplate::empty(12);
        assert_eq!(align_to_template(&raw, &empty, &tgt), raw);
        assert_eq!(align_to_template(&raw, &src, &empty), raw);
    }

    #[test]
    fn align_shifts_spikes_toward_target_marks() {
        // Two spikes in the source sit two steps after the target marks; the
        // aligned sequence must carry the spike values onto the mark steps.
        let len = 16;
        let mut raw = vec![0.0; len];
        raw[5] = 10.0;
        raw[13] = 10.0;
        let mut src = LandmarkTemplate::empty(len);
        src.marks.insert(5, 10.0);
        src.marks.insert(13, 10.0);
        let mut tgt = LandmarkTemplate::empty(len);
        tgt.marks.insert(3, 10.0);
        tgt.marks.insert(11, 10.0);
        let aligned = align_to_template(&raw, &src, &tgt);
        assert_eq!(aligned.len(), len);
        assert_eq!(aligned[3], 10.0);
        assert_eq!(aligned[11], 10.0);
        assert_eq!(aligned[5], 0.0);
    }

    #[test]
    fn payday_template_marks_observed_and_predicted() {
        use crate::recurring::extract_all_recurring;
        // Semimonthly salary on the 1st and 15th; t mid-month.
        let mut txs = Vec::new();
        for month in 1..=6u32 {
            for day in [1u32, 15] {
                txs.push(Transaction::new(
                    "a",
                    d(2020, month, day),
                    "Direct Deposit EMPLOYER",
                    Money::from_dollars(-1000),
                    Category::Transfer,
                ));
            }
        }
        txs.sort_by(|x, y| x.date.cmp(&y.date));
        let simcfg = SimilarityConfig::default();
        let t = d(2020, 6, 20);
        let recurrings = extract_all_recurring(&txs, t, &simcfg);
        assert!(find_paycheck(&recurrings).is_some());

        let len = 62;
        let range_start = t - chrono::Duration::days(30);
        let template = build_payday_template(
            &recurrings,
            &txs,
            &simcfg,
            range_start,
            len,
            Step::Daily,
            t,
        );
        // Observed: May 21..Jun 20 window holds Jun 1 and Jun 15; predicted
        // paydays continue past t at the semimonthly period.
        assert!(
            (4..=5).contains(&template.marks.len()),
            "got {} marks: {:?}",
            template.marks.len(),
            template.marks
        );
        assert!(template.marks.values().all(|&m| (m - 1000.0).abs() < 1e-9));

        // No paycheck -> unmarked template.
        let none = build_payday_template(&[], &txs, &simcfg, range_start, len, Step::Daily, t);
        assert!(none.is_unmarked());
    }
}

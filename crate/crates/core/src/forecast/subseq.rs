//! The DTW-subsequence-matched regularized regression forecaster.
//!
//! The recent balance window is matched against historical windows from all
//! accounts, matches are warped onto the query account's payday landmark
//! template, and a weighted penalized NNLS fit combines them. One fit is
//! reused for every horizon step; a refit mode re-matches on the rolling
//! query instead.

use std::collections::BTreeMap;

use chrono::{Days, NaiveDate};
use nalgebra::DMatrix;

use crate::dtw::{
    align_to_template, build_payday_template, subsequence_search, Exclusion, LandmarkTemplate,
    MatchedSequence, SearchSpec,
};
use crate::error::{Error, Result};
use crate::forecast::nnls::fit_weighted_penalized_nnls;
use crate::forecast::{series_at_origin, Diagnostics, ForecastConfig, ForecastResult, Method};
use crate::model::{standardize, AccountId, BalanceSeries, Ledger, Step};
use crate::recurring::{extract_all_recurring, RecurringTransaction};
use crate::textsim::SimilarityConfig;

/// Per-account balance series for the match pool. Each account's series is
/// clipped to its own observed span (one pristine opening point kept), so
/// windows never cover stretches before the account existed.
pub fn build_corpus(view: &Ledger, step: Step) -> Vec<BalanceSeries> {
    let mut corpus = Vec::new();
    for account in view.accounts() {
        let txs = view.transactions_for(&account.account_id);
        if txs.is_empty() {
            continue;
        }
        let first_tx = txs[0].date;
        let Ok(series) = view.build_balance_series(&account.account_id, step) else {
            continue;
        };
        // Last grid point strictly before the account's first transaction.
        let offset = (first_tx - series.start_date).num_days();
        let step_days = step.days();
        let before = if offset <= 0 {
            0
        } else {
            ((offset - 1) / step_days) as usize
        };
        let trimmed = BalanceSeries {
            account_id: series.account_id.clone(),
            start_date: series.date_at(before),
            step,
            values: series.values[before..].to_vec(),
        };
        if trimmed.len() >= 2 {
            corpus.push(trimmed);
        }
    }
    corpus
}

/// Shared state for a batch of SubgseqLS/hybrid forecasts against one match
/// pool: the historical series, and each source account's mined recurring
/// charges (for payday landmarks on matched windows).
pub struct SubseqContext {
    pub corpus: Vec<BalanceSeries>,
    pub recurrings_by_account: BTreeMap<AccountId, Vec<RecurringTransaction>>,
    /// The view the corpus was built from; source-window landmarks read its
    /// transactions.
    pub view: Ledger,
}

impl SubseqContext {
    /// Builds the pool from everything observable in `view` (typically the
    /// training ledger, or a ledger truncated at a tuning origin).
    pub fn build(view: &Ledger, step: Step, simcfg: &SimilarityConfig) -> SubseqContext {
        let corpus = build_corpus(view, step);
        let mut recurrings_by_account = BTreeMap::new();
        for account in view.accounts() {
            let txs = view.transactions_for(&account.account_id);
            if txs.is_empty() {
                continue;
            }
            let as_of = txs.last().map(|t| t.date).unwrap();
            let recurrings = extract_all_recurring(txs, as_of, simcfg);
            recurrings_by_account.insert(account.account_id.clone(), recurrings);
        }
        SubseqContext {
            corpus,
            recurrings_by_account,
            view: view.clone(),
        }
    }
}

/// Anomaly penalty matrix: `D[i][j]` is the absolute difference between
/// matches i and j at the first prediction step. Symmetric, zero diagonal.
pub fn build_anomaly_penalty(matches: &[MatchedSequence], predict_index: usize) -> DMatrix<f64> {
    let m = matches.len();
    DMatrix::from_fn(m, m, |i, j| {
        (matches[i].aligned[predict_index] - matches[j].aligned[predict_index]).abs()
    })
}

pub(crate) struct PreparedFit {
    pub(crate) matches: Vec<MatchedSequence>,
    pub(crate) shortfall: bool,
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn search_and_align(
    query_std: &[f64],
    account: &AccountId,
    origin: NaiveDate,
    config: &ForecastConfig,
    recurrings: &[RecurringTransaction],
    simcfg: &SimilarityConfig,
    ctx: &SubseqContext,
    view: &Ledger,
) -> Result<PreparedFit> {
    let l = config.query_len;
    let s = config.horizon;
    let step_days = config.step_days();
    let exclusions = vec![Exclusion {
        account: account.clone(),
        from: origin - Days::new(((l as i64 - 1) * step_days) as u64),
        to: origin + Days::new((s as i64 * step_days) as u64),
    }];
    let spec = SearchSpec {
        total_len: l + s,
        match_len: config.match_len,
        std_len: l,
        need: config.match_count,
    };
    let outcome = subsequence_search(
        &query_std[..config.match_len],
        &ctx.corpus,
        &spec,
        &exclusions,
        &config.dtw,
    )?;
    if outcome.matches.is_empty() {
        return Err(Error::NoCandidates);
    }
    let mut matches = outcome.matches;

    // Landmark alignment onto the query account's payday template.
    let range_start = origin - Days::new(((l as i64 - 1) * step_days) as u64);
    let target = build_payday_template(
        recurrings,
        view.transactions_for(account),
        simcfg,
        range_start,
        l + s,
        config.step,
        origin,
    );
    if !target.is_unmarked() {
        for m in matches.iter_mut() {
            let src_recurrings = ctx
                .recurrings_by_account
                .get(&m.source_account)
                .map(|v| v.as_slice())
                .unwrap_or(&[]);
            let source: LandmarkTemplate = build_payday_template(
                src_recurrings,
                ctx.view.transactions_for(&m.source_account),
                simcfg,
                m.source_start,
                l + s,
                m.step,
                // Source windows are historical; everything is observed.
                m.source_start + Days::new((((l + s) as i64 - 1) * step_days) as u64),
            );
            m.aligned = align_to_template(&m.raw, &source, &target);
        }
    }
    Ok(PreparedFit {
        matches,
        shortfall: outcome.shortfall,
    })
}

pub(crate) fn fit_and_predict(
    query_std: &[f64],
    matches: &[MatchedSequence],
    config: &ForecastConfig,
    horizon: usize,
) -> Result<(Vec<f64>, f64)> {
    let l = config.query_len;
    let m = matches.len();
    let x = DMatrix::from_fn(l, m, |row, col| matches[col].aligned[row]);
    let w: Vec<f64> = (1..=l).map(|pos| config.position_weight(pos)).collect();
    let d = build_anomaly_penalty(matches, l);
    let fit = fit_weighted_penalized_nnls(query_std, &x, &w, &d, config.penalty)?;
    let mut preds = Vec::with_capacity(horizon);
    for s in 1..=horizon {
        let z = fit.beta0
            + matches
                .iter()
                .zip(&fit.beta)
                .map(|(seq, b)| seq.aligned[l - 1 + s] * b)
                .sum::<f64>();
        preds.push(z);
    }
    Ok((preds, fit.objective))
}

/// SubseqLS forecast. Fails with `NoCandidates` when the pool yields no
/// match at all (callers fall back to HistAvg); a partial pool sets the
/// shortfall flag and proceeds.
#[allow(clippy::too_many_arguments)]
pub fn subseq_ls_forecast(
    ledger: &Ledger,
    account: &AccountId,
    origin: NaiveDate,
    config: &ForecastConfig,
    recurrings: &[RecurringTransaction],
    simcfg: &SimilarityConfig,
    ctx: &SubseqContext,
) -> Result<ForecastResult> {
    config.validate()?;
    let (view, series, idx) = series_at_origin(ledger, account, origin, config.step)?;
    let l = config.query_len;
    if idx + 1 < l {
        return Err(Error::SeriesTooShort {
            need: l,
            got: idx + 1,
        });
    }
    let query_raw: Vec<f64> = series.values[idx + 1 - l..=idx]
        .iter()
        .map(|v| v.to_f64())
        .collect();
    let (query_std, params) = standardize(&query_raw)?;

    if !config.refit_each_step {
        let prepared = search_and_align(
            &query_std, account, origin, config, recurrings, simcfg, ctx, &view,
        )?;
        let (preds_std, objective) =
            fit_and_predict(&query_std, &prepared.matches, config, config.horizon)?;
        let predictions: Vec<f64> = preds_std.iter().map(|&z| params.invert(z)).collect();
        return Ok(ForecastResult {
            account_id: account.clone(),
            method: Method::SubseqLs,
            origin,
            step: config.step,
            predictions,
            diagnostics: Diagnostics {
                matches_used: prepared.matches.len(),
                fit_objective: Some(objective),
                shortfall: prepared.shortfall,
            },
        });
    }

    // Refit mode: roll the query forward one step at a time, re-matching
    // and re-fitting against the last L values (predictions included).
    let mut rolling = query_raw;
    let mut predictions = Vec::with_capacity(config.horizon);
    let mut shortfall = false;
    let mut matches_used = usize::MAX;
    let mut last_objective = 0.0;
    for _ in 0..config.horizon {
        let window = &rolling[rolling.len() - l..];
        let (win_std, win_params) = standardize(window)?;
        let prepared = search_and_align(
            &win_std, account, origin, config, recurrings, simcfg, ctx, &view,
        )?;
        let (preds_std, objective) = fit_and_predict(&win_std, &prepared.matches, config, 1)?;
        shortfall |= prepared.shortfall;
        matches_used = matches_used.min(prepared.matches.len());
        last_objective = objective;
        let pred = win_params.invert(preds_std[0]);
        predictions.push(pred);
        rolling.push(pred);
    }
    Ok(ForecastResult {
        account_id: account.clone(),
        method: Method::SubseqLs,
        origin,
        step: config.step,
        predictions,
        diagnostics: Diagnostics {
            matches_used,
            fit_objective: Some(last_objective),
            shortfall,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Account, AccountKind, Category, Money, Transaction, UserId};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    fn account(id: &str, balance: Money, as_of: NaiveDate) -> Account {
        Account {
            account_id: AccountId::new(id),
            user_id: UserId::new(id),
            kind: AccountKind::Checking,
            current_balance: balance,
            balance_as_of: as_of,
        }
    }

    /// A two-account ledger where account "hist" contains, somewhere in its
    /// past, an exact copy of the query window of account "q" followed by a
    /// known continuation.
    fn planted_ledger(seed: u64, l: usize, s: usize) -> (Ledger, Vec<f64>, NaiveDate) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cents = |lo: i64, hi: i64| Money(rng.random_range(lo..hi));

        // Query account path: random walk deltas over 2*L days.
        let q_len = 2 * l;
        let q_deltas: Vec<Money> = (0..q_len).map(|_| cents(-5000, 5000)).collect();
        // Continuation deltas for the planted copy.
        let cont_deltas: Vec<Money> = (0..s).map(|_| cents(-5000, 5000)).collect();

        let q_start = d(2021, 1, 1);
        let mut txs = Vec::new();
        for (i, delta) in q_deltas.iter().enumerate() {
            txs.push(Transaction::new(
                "q",
                q_start + Days::new(i as u64),
                format!("q spend {i}"),
                *delta,
                Category::Shops,
            ));
        }
        let origin = q_start + Days::new(q_len as u64 - 1);
        let q_balance = cents(-2000, 2000);

        // Historical account: prefix noise, then deltas replicating the
        // query's last L beta movements, then the continuation.
        let h_start = d(2019, 1, 1);
        let prefix = 40usize;
        let mut h_deltas: Vec<Money> = (0..prefix).map(|_| cents(-5000, 5000)).collect();
        // The query window's L values are produced by the last L-1 deltas;
        // replicate them so the balance SHAPE matches exactly.
        let tail = &q_deltas[q_len - (l - 1)..];
        h_deltas.extend(tail.iter().copied());
        h_deltas.extend(cont_deltas.iter().copied());
        let mut h_txs = Vec::new();
        for (i, delta) in h_deltas.iter().enumerate() {
            h_txs.push(Transaction::new(
                "hist",
                h_start + Days::new(i as u64),
                format!("h spend {i}"),
                *delta,
                Category::Shops,
            ));
        }
        let h_as_of = h_start + Days::new(h_deltas.len() as u64 - 1);
        let h_balance = cents(-2000, 2000);
        txs.extend(h_txs);

        let ledger = Ledger::new(
            vec![
                account("q", q_balance, origin),
                account("hist", h_balance, h_as_of),
            ],
            txs,
            origin - Days::new(1),
        )
        .unwrap();

        // True continuation in the query's (standardized) frame: the
        // planted window's values after its first L, de-standardized by the
        // query's own parameters. With lambda=0 and M=1 the forecast must
        // reproduce the continuation's standardized shape exactly, which in
        // original units is query-anchored.
        let q_series = ledger
            .build_balance_series(&AccountId::new("q"), Step::Daily)
            .unwrap();
        let q_idx = q_series.index_of(origin).unwrap();
        let query_raw: Vec<f64> = q_series.values[q_idx + 1 - l..=q_idx]
            .iter()
            .map(|v| v.to_f64())
            .collect();
        let mut expected = Vec::with_capacity(s);
        let mut bal = *query_raw.last().unwrap();
        for delta in &cont_deltas {
            bal -= delta.to_f64();
            expected.push(bal);
        }
        (ledger, expected, origin)
    }

    #[test]
    fn planted_continuation_is_recovered_exactly() {
        let (l, s) = (14, 6);
        for seed in 0..5u64 {
            let (ledger, expected, origin) = planted_ledger(seed, l, s);
            let config = ForecastConfig {
                query_len: l,
                match_len: 10,
                horizon: s,
                match_count: 1,
                penalty: 0.0,
                ..ForecastConfig::default()
            };
            let simcfg = SimilarityConfig::default();
            let train = ledger.truncate_at(origin - Days::new(1)).unwrap();
            let ctx = SubseqContext::build(&train, Step::Daily, &simcfg);
            let result = subseq_ls_forecast(
                &ledger,
                &AccountId::new("q"),
                origin,
                &config,
                &[],
                &simcfg,
                &ctx,
            )
            .unwrap();
            assert_eq!(result.predictions.len(), s);
            for (got, want) in result.predictions.iter().zip(&expected) {
                assert!(
                    (got - want).abs() < 1e-6,
                    "seed {seed}: {got} vs {want} (all: {:?} / {:?})",
                    result.predictions,
                    expected
                );
            }
            assert_eq!(result.diagnostics.matches_used, 1);
        }
    }

    #[test]
    fn anomaly_penalty_matrix_formula() {
        let mk = |vals: Vec<f64>| MatchedSequence {
            source_account: AccountId::new("x"),
            source_start: d(2020, 1, 1),
            step: Step::Daily,
            raw: vals.clone(),
            aligned: vals,
            dtw_distance: 0.0,
        };
        let matches = vec![
            mk(vec![0.0, 0.0]),
            mk(vec![0.0, 1.0]),
            mk(vec![0.0, 3.0]),
        ];
        let dmat = build_anomaly_penalty(&matches, 1);
        assert_eq!(dmat[(0, 0)], 0.0);
        assert_eq!(dmat[(0, 1)], 1.0);
        assert_eq!(dmat[(0, 2)], 3.0);
        assert_eq!(dmat[(1, 2)], 2.0);
        for i in 0..3 {
            assert_eq!(dmat[(i, i)], 0.0);
            for j in 0..3 {
                assert_eq!(dmat[(i, j)], dmat[(j, i)]);
            }
        }
    }

    #[test]
    fn zero_matches_is_an_error_directing_to_histavg() {
        let txs: Vec<Transaction> = (0..40)
            .map(|i| {
                Transaction::new(
                    "q",
                    d(2021, 1, 1) + Days::new(i),
                    format!("spend {i}"),
                    Money::from_dollars(5),
                    Category::Shops,
                )
            })
            .collect();
        let origin = d(2021, 2, 9);
        let ledger = Ledger::new(vec![account("q", Money::ZERO, origin)], txs, origin).unwrap();
        let simcfg = SimilarityConfig::default();
        // Empty corpus: the only account is the query itself and its
        // window is excluded.
        let train = ledger.truncate_at(origin).unwrap();
        let ctx = SubseqContext::build(&train, Step::Daily, &simcfg);
        let config = ForecastConfig {
            query_len: 31,
            match_len: 20,
            horizon: 5,
            match_count: 1,
            ..ForecastConfig::default()
        };
        let err = subseq_ls_forecast(
            &ledger,
            &AccountId::new("q"),
            origin,
            &config,
            &[],
            &simcfg,
            &ctx,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NoCandidates | Error::SeriesTooShort { .. }));
    }

    #[test]
    fn output_length_matches_horizon() {
        let (ledger, _, origin) = planted_ledger(9, 14, 6);
        let simcfg = SimilarityConfig::default();
        let train = ledger.truncate_at(origin - Days::new(1)).unwrap();
        let ctx = SubseqContext::build(&train, Step::Daily, &simcfg);
        let config = ForecastConfig {
            query_len: 14,
            match_len: 10,
            horizon: 6,
            match_count: 3,
            penalty: 0.5,
            ..ForecastConfig::default()
        };
        let result = subseq_ls_forecast(
            &ledger,
            &AccountId::new("q"),
            origin,
            &config,
            &[],
            &simcfg,
            &ctx,
        )
        .unwrap();
        assert_eq!(result.predictions.len(), config.horizon);
        assert!(result.predictions.iter().all(|p| p.is_finite()));
    }
}

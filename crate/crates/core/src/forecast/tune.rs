//! Grid search for the forecaster parameters: the match count M and hybrid
//! switch step tau per account class, and the penalty lambda per account,
//! minimizing held-out MAE over rolling windows inside the training period.

use std::collections::BTreeMap;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::forecast::subseq::{fit_and_predict, search_and_align, SubseqContext};
use crate::forecast::{hist_avg_forecast, ForecastConfig};
use crate::model::{standardize, AccountId, Ledger, Standardization};
use crate::recurring::extract_all_recurring;
use crate::textsim::SimilarityConfig;

/// Parameter grids. Defaults follow the evaluation protocol: M in multiples
/// of five up to 25, lambda between 0 and 10, tau every integer up to the
/// horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct Grids {
    pub match_counts: Vec<usize>,
    pub penalties: Vec<f64>,
    pub switch_steps: Vec<usize>,
}

impl Default for Grids {
    fn default() -> Self {
        Grids {
            match_counts: vec![5, 10, 15, 20, 25],
            penalties: vec![0.0, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0],
            switch_steps: (0..=31).collect(),
        }
    }
}

/// Tuned parameters for one account class.
#[derive(Debug, Clone, PartialEq)]
pub struct TunedClass {
    pub match_count: usize,
    pub switch_step: usize,
    pub penalty_by_account: BTreeMap<AccountId, f64>,
}

struct Window {
    account: AccountId,
    origin: NaiveDate,
    truth_scaled: Vec<f64>,
    scale: f64,
}

const HOLDOUT_WINDOWS_PER_ACCOUNT: usize = 3;
const MIN_WINDOWS: usize = 3;

fn mae(predictions: &[f64], truth_scaled: &[f64], scale: f64) -> f64 {
    predictions
        .iter()
        .zip(truth_scaled)
        .map(|(p, t)| (p * scale - t).abs())
        .sum::<f64>()
        / truth_scaled.len() as f64
}

/// Tunes (M, lambda per account, tau) on rolling windows held out from the
/// end of each account's training history.
pub fn tune_parameters(
    training: &Ledger,
    accounts: &[AccountId],
    grids: &Grids,
    base: &ForecastConfig,
    simcfg: &SimilarityConfig,
) -> Result<TunedClass> {
    base.validate()?;
    if grids.match_counts.is_empty() || grids.penalties.is_empty() || grids.switch_steps.is_empty()
    {
        return Err(Error::InvalidInput("empty tuning grid".into()));
    }
    let l = base.query_len;
    let s = base.horizon;

    // Feasible held-out windows, newest first, up to three per account.
    let mut windows: Vec<Window> = Vec::new();
    for account in accounts {
        let Ok(series) = training.build_balance_series(account, base.step) else {
            continue;
        };
        let values = series.values_f64();
        let Ok(Standardization { stdev, .. }) = Standardization::fit(&values) else {
            continue;
        };
        if stdev == 0.0 {
            continue;
        }
        let scale = 10.0 / stdev;
        let n = series.len();
        if n < l + s {
            continue;
        }
        for k in 0..HOLDOUT_WINDOWS_PER_ACCOUNT {
            // Origin index: leave room for the horizon after it and the
            // query before it.
            let Some(idx) = (n - 1).checked_sub(s + k * s) else {
                break;
            };
            if idx + 1 < l {
                break;
            }
            let origin = series.date_at(idx);
            let truth_scaled: Vec<f64> = series.values[idx + 1..idx + 1 + s]
                .iter()
                .map(|v| v.to_f64() * scale)
                .collect();
            windows.push(Window {
                account: account.clone(),
                origin,
                truth_scaled,
                scale,
            });
        }
    }
    if windows.len() < MIN_WINDOWS {
        return Err(Error::InsufficientData(format!(
            "only {} held-out windows available; need at least {MIN_WINDOWS}",
            windows.len()
        )));
    }

    let m_max = grids.match_counts.iter().copied().max().unwrap();

    // Per-origin truncated contexts, shared across accounts.
    let mut ctx_cache: BTreeMap<NaiveDate, SubseqContext> = BTreeMap::new();
    for w in &windows {
        ctx_cache.entry(w.origin).or_insert_with(|| {
            let view = training
                .truncate_at(w.origin)
                .expect("window origin within range");
            SubseqContext::build(&view, base.step, simcfg)
        });
    }

    // One search per window at the largest M; smaller M reuse the prefix of
    // the greedy match list.
    struct WindowFit {
        query_std: Vec<f64>,
        std: Standardization,
        matches: Vec<crate::dtw::MatchedSequence>,
    }
    let mut fits: Vec<Option<WindowFit>> = Vec::with_capacity(windows.len());
    for w in &windows {
        let ctx = &ctx_cache[&w.origin];
        let prepared = (|| -> Result<WindowFit> {
            let (view, series, idx) =
                crate::forecast::series_at_origin(training, &w.account, w.origin, base.step)?;
            if idx + 1 < l {
                return Err(Error::SeriesTooShort { need: l, got: idx + 1 });
            }
            let raw: Vec<f64> = series.values[idx + 1 - l..=idx]
                .iter()
                .map(|v| v.to_f64())
                .collect();
            let (query_std, std) = standardize(&raw)?;
            let config = ForecastConfig {
                match_count: m_max,
                ..base.clone()
            };
            let recurrings = extract_all_recurring(
                view.transactions_for(&w.account),
                w.origin,
                simcfg,
            );
            let prepared = search_and_align(
                &query_std, &w.account, w.origin, &config, &recurrings, simcfg, ctx, &view,
            )?;
            Ok(WindowFit {
                query_std,
                std,
                matches: prepared.matches,
            })
        })();
        fits.push(prepared.ok());
    }

    // Choose lambda per account per M, then M by class mean.
    let mut best_m = grids.match_counts[0];
    let mut best_m_score = f64::INFINITY;
    let mut best_lambda: BTreeMap<AccountId, f64> = BTreeMap::new();
    for &m in &grids.match_counts {
        let mut lambda_for: BTreeMap<AccountId, f64> = BTreeMap::new();
        let mut account_scores: BTreeMap<AccountId, f64> = BTreeMap::new();
        for account in accounts {
            let mut best_pair: Option<(f64, f64)> = None; // (mae, lambda)
            for &lambda in &grids.penalties {
                let mut errs = Vec::new();
                for (w, fit) in windows.iter().zip(&fits) {
                    if &w.account != account {
                        continue;
                    }
                    let Some(fit) = fit else { continue };
                    let take = m.min(fit.matches.len());
                    if take == 0 {
                        continue;
                    }
                    let config = ForecastConfig {
                        match_count: m,
                        penalty: lambda,
                        ..base.clone()
                    };
                    if let Ok((preds_std, _)) =
                        fit_and_predict(&fit.query_std, &fit.matches[..take], &config, s)
                    {
                        let preds: Vec<f64> =
                            preds_std.iter().map(|&z| fit.std.invert(z)).collect();
                        errs.push(mae(&preds, &w.truth_scaled, w.scale));
                    }
                }
                if errs.is_empty() {
                    continue;
                }
                let mean = errs.iter().sum::<f64>() / errs.len() as f64;
                if best_pair.map(|(b, _)| mean < b).unwrap_or(true) {
                    best_pair = Some((mean, lambda));
                }
            }
            if let Some((score, lambda)) = best_pair {
                lambda_for.insert(account.clone(), lambda);
                account_scores.insert(account.clone(), score);
            }
        }
        if account_scores.is_empty() {
            continue;
        }
        let class_score =
            account_scores.values().sum::<f64>() / account_scores.len() as f64;
        if class_score < best_m_score {
            best_m_score = class_score;
            best_m = m;
            best_lambda = lambda_for;
        }
    }

    // Tau: splice the two constituents per window and score every grid tau.
    let mut tau_errors: Vec<(usize, f64, usize)> = Vec::new(); // (tau, total err, count)
    for &tau in &grids.switch_steps {
        tau_errors.push((tau.min(s), 0.0, 0));
    }
    for (w, fit) in windows.iter().zip(&fits) {
        let view = training.truncate_at(w.origin)?;
        let recurrings =
            extract_all_recurring(view.transactions_for(&w.account), w.origin, simcfg);
        let config = ForecastConfig {
            match_count: best_m,
            penalty: best_lambda.get(&w.account).copied().unwrap_or(base.penalty),
            ..base.clone()
        };
        let ha = hist_avg_forecast(training, &w.account, w.origin, &config, &recurrings, simcfg)
            .map(|r| r.predictions)
            .ok();
        let sls = fit.as_ref().and_then(|f| {
            let take = best_m.min(f.matches.len());
            if take == 0 {
                return None;
            }
            fit_and_predict(&f.query_std, &f.matches[..take], &config, s)
                .ok()
                .map(|(preds_std, _)| {
                    preds_std
                        .iter()
                        .map(|&z| f.std.invert(z))
                        .collect::<Vec<f64>>()
                })
        });
        let (Some(ha), Some(sls)) = (ha, sls) else { continue };
        for entry in tau_errors.iter_mut() {
            let tau = entry.0;
            let spliced: Vec<f64> = (0..s)
                .map(|i| if i < tau { ha[i] } else { sls[i] })
                .collect();
            entry.1 += mae(&spliced, &w.truth_scaled, w.scale);
            entry.2 += 1;
        }
    }
    let best_tau = tau_errors
        .iter()
        .filter(|(_, _, n)| *n > 0)
        .min_by(|a, b| (a.1 / a.2 as f64).total_cmp(&(b.1 / b.2 as f64)))
        .map(|&(tau, _, _)| tau)
        .unwrap_or_else(|| *grids.switch_steps.last().unwrap());

    Ok(TunedClass {
        match_count: best_m,
        switch_step: best_tau,
        penalty_by_account: best_lambda,
    })
}

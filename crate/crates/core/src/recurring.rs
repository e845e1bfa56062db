//! Mining of recurring transactions at four frequencies, next-occurrence
//! prediction, and the unexpected-large-expense list.
//!
//! A recurring charge is a chain of similarly described transactions in one
//! category repeating at a nominal period, anchored at the most recent
//! occurrence and walked strictly backward one period at a time until four
//! windows are filled. A window with no surviving match terminates the chain.

use std::collections::BTreeMap;

use chrono::{Days, Months, NaiveDate};

use crate::model::{AccountId, Category, Ledger, Money, Transaction, UserId};
use crate::textsim::{is_same_biller, similarity, SimilarityConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FrequencyKind {
    Weekly,
    Biweekly,
    Semimonthly,
    Monthly,
}

impl FrequencyKind {
    pub fn label(self) -> &'static str {
        match self {
            FrequencyKind::Weekly => "weekly",
            FrequencyKind::Biweekly => "biweekly",
            FrequencyKind::Semimonthly => "semimonthly",
            FrequencyKind::Monthly => "monthly",
        }
    }

    pub fn parse(text: &str) -> Option<FrequencyKind> {
        match text.to_ascii_lowercase().as_str() {
            "weekly" => Some(FrequencyKind::Weekly),
            "biweekly" => Some(FrequencyKind::Biweekly),
            "semimonthly" => Some(FrequencyKind::Semimonthly),
            "monthly" => Some(FrequencyKind::Monthly),
            _ => None,
        }
    }
}

/// Extraction frequency: how far each backtracking step reaches and how much
/// date slack a match may have. Monthly and semimonthly charges get a 7-day
/// tolerance to accommodate differing month lengths; biweekly and weekly get
/// 2 days for holiday shifts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Frequency {
    pub kind: FrequencyKind,
    pub backtrack_days: i64,
    pub window_days: i64,
}

impl Frequency {
    pub const MONTHLY: Frequency = Frequency {
        kind: FrequencyKind::Monthly,
        backtrack_days: 31,
        window_days: 7,
    };
    pub const SEMIMONTHLY: Frequency = Frequency {
        kind: FrequencyKind::Semimonthly,
        backtrack_days: 15,
        window_days: 7,
    };
    pub const BIWEEKLY: Frequency = Frequency {
        kind: FrequencyKind::Biweekly,
        backtrack_days: 14,
        window_days: 2,
    };
    pub const WEEKLY: Frequency = Frequency {
        kind: FrequencyKind::Weekly,
        backtrack_days: 7,
        window_days: 2,
    };

    /// Longest period first, so monthly chains are tried before weekly ones.
    pub const ALL: [Frequency; 4] = [
        Frequency::MONTHLY,
        Frequency::SEMIMONTHLY,
        Frequency::BIWEEKLY,
        Frequency::WEEKLY,
    ];

    pub fn of(kind: FrequencyKind) -> Frequency {
        match kind {
            FrequencyKind::Monthly => Frequency::MONTHLY,
            FrequencyKind::Semimonthly => Frequency::SEMIMONTHLY,
            FrequencyKind::Biweekly => Frequency::BIWEEKLY,
            FrequencyKind::Weekly => Frequency::WEEKLY,
        }
    }

    /// Date `periods` nominal periods after `date`. Monthly uses calendar
    /// months (clamping to month end); the others use fixed day counts.
    pub fn advance(&self, date: NaiveDate, periods: u32) -> NaiveDate {
        match self.kind {
            FrequencyKind::Monthly => date
                .checked_add_months(Months::new(periods))
                .expect("date in range"),
            _ => date + Days::new(self.backtrack_days as u64 * periods as u64),
        }
    }
}

/// A mined cyclic charge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecurringTransaction {
    pub account_id: AccountId,
    pub frequency: Frequency,
    pub representative_description: String,
    pub category: Category,
    pub mean_amount: Money,
    pub last_date: NaiveDate,
    /// Matched transactions, oldest first; one per backtracking window.
    pub support: Vec<Transaction>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NextOccurrence {
    pub recurring: RecurringTransaction,
    pub predicted_date: NaiveDate,
    pub predicted_amount: Money,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LargeExpense {
    pub description: String,
    pub approximate_cost: Money,
    pub source_user: UserId,
}

const CHAIN_WINDOWS: usize = 4;

/// True when a description carries no matchable content (empty or junk-only).
fn is_blank(description: &str, simcfg: &SimilarityConfig) -> bool {
    // A junk-only description is "identical" to the empty string.
    similarity(description, "", simcfg) == 1.0
}

fn mean_of(amounts: impl Iterator<Item = Money>, n: usize) -> Money {
    let sum: i64 = amounts.map(|m| m.cents()).sum();
    Money((sum as f64 / n as f64).round() as i64)
}

/// Extracts recurring transactions of one frequency from one account's
/// date-sorted transaction list.
///
/// Per category, transactions in the window ending at `as_of` seed candidate
/// chains (one per biller equivalence class). Each chain steps back one
/// period at a time, accepting the in-window transaction closest to the
/// nominal date whose description matches the chain, until four windows are
/// filled.
pub fn extract_recurring(
    transactions: &[Transaction],
    as_of: NaiveDate,
    frequency: Frequency,
    simcfg: &SimilarityConfig,
) -> Vec<RecurringTransaction> {
    let mut by_category: BTreeMap<Category, Vec<&Transaction>> = BTreeMap::new();
    for t in transactions {
        if t.date <= as_of && !is_blank(&t.description, simcfg) {
            by_category.entry(t.category).or_default().push(t);
        }
    }

    let mut found = Vec::new();
    for (category, txs) in &by_category {
        // Seed classes: most recent transactions first, grouped greedily by
        // description similarity.
        let seed_lo = as_of - Days::new(frequency.window_days as u64);
        let mut classes: Vec<Vec<&Transaction>> = Vec::new();
        for t in txs.iter().rev() {
            if t.date < seed_lo || t.date > as_of {
                continue;
            }
            match classes
                .iter_mut()
                .find(|c| is_same_biller(&c[0].description, &t.description, simcfg))
            {
                Some(class) => class.push(t),
                None => classes.push(vec![t]),
            }
        }

        for class in classes {
            let anchor = class[0]; // most recent seed of the class
            let mut chain: Vec<&Transaction> = vec![anchor];
            let mut current = anchor;
            let mut complete = true;
            for _ in 1..CHAIN_WINDOWS {
                let target = current.date - Days::new(frequency.backtrack_days as u64);
                let lo = target - Days::new(frequency.window_days as u64);
                let hi = target + Days::new(frequency.window_days as u64);
                let chosen = txs
                    .iter()
                    .filter(|t| t.date >= lo && t.date <= hi)
                    .filter(|t| {
                        chain
                            .iter()
                            .any(|c| is_same_biller(&c.description, &t.description, simcfg))
                    })
                    .min_by_key(|t| {
                        let dev = (t.date - target).num_days().abs();
                        (dev, t.date, t.description.clone(), t.amount)
                    });
                match chosen {
                    Some(t) => {
                        chain.push(t);
                        current = t;
                    }
                    None => {
                        complete = false;
                        break;
                    }
                }
            }
            if !complete {
                continue;
            }
            let mean = mean_of(chain.iter().map(|t| t.amount), chain.len());
            let mut support: Vec<Transaction> = chain.iter().map(|t| (*t).clone()).collect();
            support.sort_by(|a, b| (a.date, &a.description, a.amount).cmp(&(b.date, &b.description, b.amount)));
            found.push(RecurringTransaction {
                account_id: anchor.account_id.clone(),
                frequency,
                representative_description: anchor.description.clone(),
                category: *category,
                mean_amount: mean,
                last_date: anchor.date,
                support,
            });
        }
    }
    found
}

/// Nominal period in days used when deciding which frequency best explains
/// an observed gap pattern.
pub(crate) fn nominal_days(kind: FrequencyKind) -> f64 {
    match kind {
        FrequencyKind::Monthly => 30.44,
        FrequencyKind::Semimonthly => 15.0,
        FrequencyKind::Biweekly => 14.0,
        FrequencyKind::Weekly => 7.0,
    }
}

/// Mean gap between consecutive distinct occurrence dates. Semimonthly
/// charges alternate 14- and 16/17-day gaps, so the mean (not the median)
/// recovers the ~15.2-day true period.
fn mean_gap(dates: &[NaiveDate]) -> Option<f64> {
    if dates.len() < 2 {
        return None;
    }
    let span = (dates[dates.len() - 1] - dates[0]).num_days();
    if span <= 0 {
        return None;
    }
    Some(span as f64 / (dates.len() - 1) as f64)
}

/// Union of the four per-frequency extractions with cross-frequency
/// deduplication: a short-period charge also chains at every longer period
/// (any window spanning a week contains one of its occurrences), so a biller
/// detected at several frequencies is reported once, at the frequency whose
/// nominal period is closest to the biller's observed median gap (ties to
/// the longer period; billers with no usable gap keep the longest detected
/// period).
pub fn extract_all_recurring(
    transactions: &[Transaction],
    as_of: NaiveDate,
    simcfg: &SimilarityConfig,
) -> Vec<RecurringTransaction> {
    let mut detections: Vec<RecurringTransaction> = Vec::new();
    for freq in Frequency::ALL {
        detections.extend(extract_recurring(transactions, as_of, freq, simcfg));
    }

    // Group detections of the same biller (same category, similar
    // representative descriptions) across frequencies.
    let mut groups: Vec<Vec<RecurringTransaction>> = Vec::new();
    for det in detections {
        match groups.iter_mut().find(|g| {
            g[0].category == det.category
                && is_same_biller(
                    &g[0].representative_description,
                    &det.representative_description,
                    simcfg,
                )
        }) {
            Some(group) => group.push(det),
            None => groups.push(vec![det]),
        }
    }

    let mut kept = Vec::new();
    for group in groups {
        let rep = &group[0];
        let mut dates: Vec<NaiveDate> = transactions
            .iter()
            .filter(|t| {
                t.date <= as_of
                    && t.category == rep.category
                    && is_same_biller(&t.description, &rep.representative_description, simcfg)
            })
            .map(|t| t.date)
            .collect();
        dates.sort_unstable();
        dates.dedup();

        let best_kind = mean_gap(&dates).map(|g| {
            // Closest nominal period; ties resolved toward the longer one
            // by scanning longest-first with a strict improvement test.
            let mut best = FrequencyKind::Monthly;
            let mut best_err = f64::INFINITY;
            for kind in [
                FrequencyKind::Monthly,
                FrequencyKind::Semimonthly,
                FrequencyKind::Biweekly,
                FrequencyKind::Weekly,
            ] {
                let err = (g - nominal_days(kind)).abs();
                if err < best_err {
                    best_err = err;
                    best = kind;
                }
            }
            best
        });

        let pick = best_kind
            .and_then(|kind| group.iter().find(|d| d.frequency.kind == kind))
            .unwrap_or_else(|| {
                group
                    .iter()
                    .max_by_key(|d| d.frequency.backtrack_days)
                    .expect("group is non-empty")
            });
        kept.push(pick.clone());
    }

    kept.sort_by(|a, b| {
        (a.account_id.clone(), a.category, &a.representative_description, a.frequency.kind)
            .cmp(&(b.account_id.clone(), b.category, &b.representative_description, b.frequency.kind))
    });
    kept
}

/// Recurring charges anchored at every transaction date in the history, not
/// just at one `as_of`. Charges whose chains are only visible from past
/// anchor dates (e.g. a rent bill paid three weeks ago) are still reported.
/// Exact duplicates found from nearby anchors are collapsed.
pub fn extract_all_recurring_anywhere(
    transactions: &[Transaction],
    simcfg: &SimilarityConfig,
) -> Vec<RecurringTransaction> {
    let mut dates: Vec<NaiveDate> = transactions.iter().map(|t| t.date).collect();
    dates.sort_unstable();
    dates.dedup();
    let mut all: Vec<RecurringTransaction> = Vec::new();
    for anchor in dates {
        all.extend(extract_all_recurring(transactions, anchor, simcfg));
    }
    all.sort_by(|a, b| {
        (
            a.account_id.clone(),
            a.category,
            &a.representative_description,
            a.frequency.kind,
            a.last_date,
        )
            .cmp(&(
                b.account_id.clone(),
                b.category,
                &b.representative_description,
                b.frequency.kind,
                b.last_date,
            ))
    });
    all.dedup();
    all
}

/// Predicts when and for how much a recurring charge occurs next: one
/// nominal period after the last observed date (calendar-month addition for
/// monthly charges, clamping at month end), at the historical mean amount.
pub fn predict_next(recurring: &RecurringTransaction) -> NextOccurrence {
    let predicted_date = recurring.frequency.advance(recurring.last_date, 1);
    NextOccurrence {
        predicted_amount: recurring.mean_amount,
        predicted_date,
        recurring: recurring.clone(),
    }
}

/// True when `t` belongs to one of the mined recurring charges (same
/// account and category, similar description).
pub fn matches_recurring(
    t: &Transaction,
    recurrings: &[RecurringTransaction],
    simcfg: &SimilarityConfig,
) -> bool {
    recurrings.iter().any(|r| {
        r.account_id == t.account_id
            && r.category == t.category
            && is_same_biller(&r.representative_description, &t.description, simcfg)
    })
}

/// Value at the nearest-rank `p`-th percentile of a sorted ascending slice.
pub(crate) fn percentile_nearest_rank<T: Copy>(sorted: &[T], p: f64) -> Option<T> {
    if sorted.is_empty() {
        return None;
    }
    let rank = (p / 100.0 * sorted.len() as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, sorted.len()) - 1])
}

/// Mines each user's unexpected large expenses: with every recurring-matched
/// transaction removed, the remaining outflows at or above the user's 90th
/// percentile, one representative per biller class, pooled across users.
pub fn unexpected_large_expenses(
    ledger: &Ledger,
    simcfg: &SimilarityConfig,
) -> Vec<LargeExpense> {
    let mut results = Vec::new();
    for user in ledger.user_ids() {
        let mut survivors: Vec<&Transaction> = Vec::new();
        for account in ledger.accounts_of_user(&user) {
            let txs = ledger.transactions_for(&account.account_id);
            if txs.is_empty() {
                continue;
            }
            let recurrings = extract_all_recurring_anywhere(txs, simcfg);
            survivors.extend(
                txs.iter()
                    .filter(|t| !matches_recurring(t, &recurrings, simcfg)),
            );
        }
        let mut outflow_amounts: Vec<Money> = survivors
            .iter()
            .filter(|t| t.amount.is_outflow())
            .map(|t| t.amount)
            .collect();
        outflow_amounts.sort_unstable();
        let Some(cut) = percentile_nearest_rank(&outflow_amounts, 90.0) else {
            continue;
        };
        let mut top: Vec<&Transaction> = survivors
            .iter()
            .copied()
            .filter(|t| t.amount >= cut && t.amount.is_outflow())
            .collect();
        // Largest first; the first member of each biller class represents it.
        top.sort_by(|a, b| {
            (b.amount, &a.description, a.date).cmp(&(a.amount, &b.description, b.date))
        });
        let mut classes: Vec<&Transaction> = Vec::new();
        for t in top {
            if !classes
                .iter()
                .any(|c| is_same_biller(&c.description, &t.description, simcfg))
            {
                classes.push(t);
            }
        }
        for rep in classes {
            results.push(LargeExpense {
                description: rep.description.clone(),
                approximate_cost: rep.amount,
                source_user: user.clone(),
            });
        }
    }
    results
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Category;
    use chrono::Datelike;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    fn tx(date: NaiveDate, desc: &str, amount: i64, category: Category) -> Transaction {
        Transaction::new("a1", date, desc, Money::from_dollars(amount), category)
    }

    fn sorted(mut txs: Vec<Transaction>) -> Vec<Transaction> {
        txs.sort_by(|a, b| (a.date, a.description.clone()).cmp(&(b.date, b.description.clone())));
        txs
    }

    #[test]
    fn exact_monthly_rent_is_detected() {
        let txs = sorted(
            (0..5)
                .map(|i| tx(d(2020, 1 + i, 1), "RENT PAYMENT", 800, Category::Payment))
                .collect(),
        );
        let cfg = SimilarityConfig::default();
        let found = extract_recurring(&txs, d(2020, 5, 3), Frequency::MONTHLY, &cfg);
        assert_eq!(found.len(), 1);
        let r = &found[0];
        assert_eq!(r.mean_amount, Money::from_dollars(800));
        assert!(r.support.len() >= 4);
        assert_eq!(r.last_date, d(2020, 5, 1));
    }

    #[test]
    fn three_months_of_history_is_not_enough() {
        let txs = sorted(
            (0..3)
                .map(|i| tx(d(2020, 1 + i, 1), "RENT PAYMENT", 800, Category::Payment))
                .collect(),
        );
        let cfg = SimilarityConfig::default();
        let found = extract_recurring(&txs, d(2020, 3, 2), Frequency::MONTHLY, &cfg);
        assert!(found.is_empty());
    }

    #[test]
    fn jittered_semimonthly_salary_detected_at_semimonthly() {
        // Salary on the 1st and 15th with fixed +/-2 day jitter. Chain check
        // by hand from as_of 2020-06-17: anchor 06-16 (15th+1); windows
        // [05-25..06-08] catches 06-02, [05-11..05-25] catches 05-13,
        // [04-21..05-05] catches 05-01.
        let jitter: [i64; 12] = [1, -2, 0, 2, -1, 1, 0, -2, 2, 0, -1, 1];
        let mut txs = Vec::new();
        let mut k = 0;
        for month in 1..=6u32 {
            for day in [1u32, 15] {
                let date = d(2020, month, day) + chrono::Duration::days(jitter[k]);
                txs.push(tx(date, "Direct Deposit EMPLOYER", -1000, Category::Transfer));
                k += 1;
            }
        }
        let txs = sorted(txs);
        let cfg = SimilarityConfig::default();
        let found = extract_all_recurring(&txs, d(2020, 6, 17), &cfg);
        assert_eq!(found.len(), 1, "{found:#?}");
        assert_eq!(found[0].frequency.kind, FrequencyKind::Semimonthly);
    }

    #[test]
    fn weekly_charge_reported_weekly_only() {
        let txs = sorted(
            (0..13)
                .map(|i| {
                    tx(
                        d(2020, 1, 7) + chrono::Duration::days(7 * i),
                        "STARBUCKS",
                        5,
                        Category::FoodAndDrink,
                    )
                })
                .collect(),
        );
        let cfg = SimilarityConfig::default();
        let found = extract_all_recurring(&txs, d(2020, 3, 31), &cfg);
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].frequency.kind, FrequencyKind::Weekly);
    }

    #[test]
    fn monthly_charge_not_reported_weekly() {
        let txs = sorted(
            (0..6)
                .map(|i| tx(d(2020, 1 + i, 10), "NETFLIX", 14, Category::Recreation))
                .collect(),
        );
        let cfg = SimilarityConfig::default();
        let weekly = extract_recurring(&txs, d(2020, 6, 11), Frequency::WEEKLY, &cfg);
        assert!(weekly.is_empty());
        let all = extract_all_recurring(&txs, d(2020, 6, 11), &cfg);
        assert_eq!(all.len(), 1);
        assert_eq!(all[0].frequency.kind, FrequencyKind::Monthly);
    }

    #[test]
    fn monthly_bill_plus_weekly_coffee_yields_exactly_two() {
        let mut txs: Vec<Transaction> = (0..6)
            .map(|i| tx(d(2020, 1 + i, 5), "CITY POWER & LIGHT", 120, Category::Service))
            .collect();
        for i in 0..26 {
            txs.push(tx(
                d(2020, 1, 6) + chrono::Duration::days(7 * i),
                "CORNER COFFEE",
                4,
                Category::FoodAndDrink,
            ));
        }
        let txs = sorted(txs);
        let cfg = SimilarityConfig::default();
        // May 6: coffee (May 4) is within the 2-day weekly seed window and
        // the power bill (May 5) within the 7-day monthly one.
        let found = extract_all_recurring(&txs, d(2020, 5, 6), &cfg);
        assert_eq!(found.len(), 2, "{found:#?}");
        let kinds: Vec<(Category, FrequencyKind)> =
            found.iter().map(|r| (r.category, r.frequency.kind)).collect();
        assert!(kinds.contains(&(Category::Service, FrequencyKind::Monthly)));
        assert!(kinds.contains(&(Category::FoodAndDrink, FrequencyKind::Weekly)));
    }

    #[test]
    fn predict_next_clamps_month_end() {
        let r = RecurringTransaction {
            account_id: AccountId::new("a1"),
            frequency: Frequency::MONTHLY,
            representative_description: "RENT".into(),
            category: Category::Payment,
            mean_amount: Money::from_dollars(800),
            last_date: d(2021, 1, 31),
            support: vec![],
        };
        assert_eq!(predict_next(&r).predicted_date, d(2021, 2, 28));
    }

    #[test]
    fn predict_next_weekly_lands_on_same_weekday() {
        let last = d(2020, 3, 10); // a Tuesday
        let r = RecurringTransaction {
            account_id: AccountId::new("a1"),
            frequency: Frequency::WEEKLY,
            representative_description: "GYM".into(),
            category: Category::Recreation,
            mean_amount: Money::from_dollars(10),
            last_date: last,
            support: vec![],
        };
        let next = predict_next(&r).predicted_date;
        assert_eq!(next, d(2020, 3, 17));
        assert_eq!(next.weekday(), last.weekday());
    }

    #[test]
    fn predicted_amount_is_arithmetic_mean() {
        let support: Vec<Transaction> = [1999i64, 1999, 2199, 1999]
            .iter()
            .enumerate()
            .map(|(i, &cents)| {
                Transaction::new(
                    "a1",
                    d(2020, 1 + i as u32, 3),
                    "SPOTIFY",
                    Money(cents),
                    Category::Recreation,
                )
            })
            .collect();
        let mean = mean_of(support.iter().map(|t| t.amount), support.len());
        assert_eq!(mean, Money(2049));
    }

    #[test]
    fn chain_window_invariant_holds() {
        let jitter: [i64; 8] = [3, -3, 0, 2, -2, 1, -1, 0];
        let txs = sorted(
            (0..8)
                .map(|i| {
                    tx(
                        d(2020, 1 + i as u32, 10) + chrono::Duration::days(jitter[i as usize]),
                        "INSURANCE CO",
                        55,
                        Category::Service,
                    )
                })
                .collect(),
        );
        let cfg = SimilarityConfig::default();
        for r in extract_recurring(&txs, d(2020, 8, 12), Frequency::MONTHLY, &cfg) {
            for w in r.support.windows(2) {
                let gap = (w[1].date - w[0].date).num_days();
                assert!(
                    (gap - r.frequency.backtrack_days).abs() <= r.frequency.window_days,
                    "gap {gap} violates the window constraint"
                );
            }
        }
    }

    #[test]
    fn extraction_ignores_intra_day_order() {
        let base: Vec<Transaction> = (0..5)
            .flat_map(|i| {
                vec![
                    tx(d(2020, 1 + i, 1), "RENT PAYMENT", 800, Category::Payment),
                    tx(d(2020, 1 + i, 1), "GROCERY RUN", 60, Category::Shops),
                ]
            })
            .collect();
        let mut reversed = base.clone();
        reversed.reverse();
        let cfg = SimilarityConfig::default();
        let a = extract_all_recurring(&sorted(base), d(2020, 5, 2), &cfg);
        let b = extract_all_recurring(&sorted(reversed), d(2020, 5, 2), &cfg);
        assert_eq!(a, b);
    }

    #[test]
    fn large_expense_mining() {
        use crate::model::{Account, AccountKind};
        let mk_user = |user: &str, account: &str| Account {
            account_id: AccountId::new(account),
            user_id: UserId::new(user),
            kind: AccountKind::Checking,
            current_balance: Money::ZERO,
            balance_as_of: d(2020, 7, 1),
        };
        let mut txs = Vec::new();
        // User u1: recurring rent + small purchases + one car repair.
        for i in 0..6 {
            txs.push(Transaction::new(
                "acc1",
                d(2020, 1 + i, 1),
                "RENT PAYMENT",
                Money::from_dollars(800),
                Category::Payment,
            ));
            txs.push(Transaction::new(
                "acc1",
                d(2020, 1 + i, 12),
                &format!("GROCERY {i}"),
                Money::from_dollars(40),
                Category::Shops,
            ));
        }
        txs.push(Transaction::new(
            "acc1",
            d(2020, 4, 20),
            "CAR REPAIR",
            Money::from_dollars(500),
            Category::Service,
        ));
        // User u2: all spending recurring.
        for i in 0..6 {
            txs.push(Transaction::new(
                "acc2",
                d(2020, 1 + i, 3),
                "HOA DUES",
                Money::from_dollars(200),
                Category::Payment,
            ));
        }
        // Users u3 and u4 both have roofing expenses.
        for (acc, user_month) in [("acc3", 2u32), ("acc4", 3u32)] {
            for i in 0..4 {
                txs.push(Transaction::new(
                    acc,
                    d(2020, 1 + i, 8),
                    &format!("SHOP VISIT {acc} {i}"),
                    Money::from_dollars(25),
                    Category::Shops,
                ));
            }
            txs.push(Transaction::new(
                acc,
                d(2020, user_month, 15),
                "ROOFING",
                Money::from_dollars(8000),
                Category::Service,
            ));
        }
        let accounts = vec![
            mk_user("u1", "acc1"),
            mk_user("u2", "acc2"),
            mk_user("u3", "acc3"),
            mk_user("u4", "acc4"),
        ];
        let ledger = Ledger::new(accounts, txs, d(2020, 6, 1)).unwrap();
        let cfg = SimilarityConfig::default();
        let expenses = unexpected_large_expenses(&ledger, &cfg);

        let u1: Vec<_> = expenses.iter().filter(|e| e.source_user.as_str() == "u1").collect();
        assert_eq!(u1.len(), 1);
        assert_eq!(u1[0].description, "CAR REPAIR");
        assert_eq!(u1[0].approximate_cost, Money::from_dollars(500));

        assert!(expenses.iter().all(|e| e.source_user.as_str() != "u2"));

        let roofing: Vec<_> = expenses.iter().filter(|e| e.description == "ROOFING").collect();
        assert_eq!(roofing.len(), 2, "pooling keeps one row per user");
    }

    #[test]
    fn percentile_nearest_rank_works() {
        let xs: Vec<i64> = (1..=10).collect();
        assert_eq!(percentile_nearest_rank(&xs, 90.0), Some(9));
        assert_eq!(percentile_nearest_rank(&xs, 100.0), Some(10));
        assert_eq!(percentile_nearest_rank::<i64>(&[], 90.0), None);
    }
}

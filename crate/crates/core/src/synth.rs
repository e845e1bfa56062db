//! Seeded synthetic ledger generators used by tests, benchmarks, and the
//! shipped fixture files. Real transaction data from the source application
//! is private, so the repository works from generated ledgers with the same
//! structure: semimonthly salaries, monthly bills, weekly habits, and noisy
//! card spending with reference-number descriptions.

use std::path::Path;

use chrono::{Datelike, Days, NaiveDate};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::model::{
    Account, AccountId, AccountKind, Category, Ledger, Money, Transaction, UserId,
};
use crate::recurring::FrequencyKind;

fn d(y: i32, m: u32, day: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, day).unwrap()
}

fn poisson(rng: &mut ChaCha8Rng, lambda: f64) -> usize {
    let l = (-lambda).exp();
    let mut k = 0usize;
    let mut p = 1.0;
    loop {
        p *= rng.random::<f64>();
        if p <= l {
            return k;
        }
        k += 1;
        if k > 50 {
            return k;
        }
    }
}

const NOISE_CATEGORIES: [Category; 5] = [
    Category::Shops,
    Category::FoodAndDrink,
    Category::Travel,
    Category::Recreation,
    Category::Service,
];

/// Noise purchase with a reference-number description (digits only), which
/// the similarity kernel treats as blank and the miner never chains.
fn noise_tx(
    rng: &mut ChaCha8Rng,
    account: &str,
    date: NaiveDate,
    cents_lo: i64,
    cents_hi: i64,
) -> Transaction {
    let amount = Money(rng.random_range(cents_lo..cents_hi));
    let category = NOISE_CATEGORIES[rng.random_range(0..NOISE_CATEGORIES.len())];
    let refno: u32 = rng.random_range(10_000_000..99_999_999);
    Transaction::new(account, date, format!("{refno}"), amount, category)
}

/// Dates of a monthly charge on `day_of_month` with per-occurrence jitter.
fn monthly_dates(
    rng: &mut ChaCha8Rng,
    from: NaiveDate,
    to: NaiveDate,
    day_of_month: u32,
    jitter: i64,
) -> Vec<NaiveDate> {
    let mut out = Vec::new();
    let mut cursor = d(from.year(), from.month(), 1);
    while cursor <= to {
        let base = d(cursor.year(), cursor.month(), day_of_month.min(28));
        let date = base + chrono::Duration::days(rng.random_range(-jitter..=jitter));
        if date >= from && date <= to {
            out.push(date);
        }
        cursor = cursor.checked_add_months(chrono::Months::new(1)).unwrap();
    }
    out
}

/// Dates at a fixed day period with per-occurrence jitter.
fn periodic_dates(
    rng: &mut ChaCha8Rng,
    from: NaiveDate,
    to: NaiveDate,
    period_days: u64,
    phase: u64,
    jitter: i64,
) -> Vec<NaiveDate> {
    let mut out = Vec::new();
    let mut base = from + Days::new(phase);
    while base <= to {
        let date = base + chrono::Duration::days(rng.random_range(-jitter..=jitter));
        if date >= from && date <= to {
            out.push(date);
        }
        base += chrono::Duration::days(period_days as i64);
    }
    out
}

/// Semimonthly paydays: the 1st and 15th of each month with jitter.
fn semimonthly_dates(
    rng: &mut ChaCha8Rng,
    from: NaiveDate,
    to: NaiveDate,
    jitter: i64,
) -> Vec<NaiveDate> {
    let mut out = Vec::new();
    let mut cursor = d(from.year(), from.month(), 1);
    while cursor <= to {
        for day in [1u32, 15] {
            let base = d(cursor.year(), cursor.month(), day);
            let date = base + chrono::Duration::days(rng.random_range(-jitter..=jitter));
            if date >= from && date <= to {
                out.push(date);
            }
        }
        cursor = cursor.checked_add_months(chrono::Months::new(1)).unwrap();
    }
    out.sort_unstable();
    out
}

/// Sets the account's current balance so its balance path starts at
/// `opening` just before the first transaction.
fn account_with_opening(
    id: &str,
    user: &str,
    kind: AccountKind,
    opening: Money,
    txs: &[Transaction],
    as_of: NaiveDate,
) -> Account {
    let total: Money = txs
        .iter()
        .filter(|t| t.account_id.as_str() == id)
        .map(|t| t.amount)
        .sum();
    Account {
        account_id: AccountId::new(id),
        user_id: UserId::new(user),
        kind,
        current_balance: opening - total,
        balance_as_of: as_of,
    }
}

/// A WageGoal-style synthetic ledger: `n_accounts` daily checking accounts
/// over calendar year 2020 with semimonthly salaries, monthly rent, assorted
/// subscriptions, and Poisson background spending. The train/test boundary
/// is end of September (nine months of training).
pub fn wagegoal_fixture(n_accounts: usize, seed: u64) -> Ledger {
    let from = d(2020, 1, 1);
    let to = d(2020, 12, 31);
    let mut txs: Vec<Transaction> = Vec::new();
    let mut accounts = Vec::new();
    for a in 0..n_accounts {
        let id = format!("acct{a:02}");
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (a as u64).wrapping_mul(0x9E3779B97F4A7C15));

        let salary = Money::from_dollars(-(1200 + 100 * (a as i64 % 7)));
        for date in semimonthly_dates(&mut rng, from, to, 1) {
            txs.push(Transaction::new(
                &id,
                date,
                "DIRECT DEPOSIT EMPLOYER PAYROLL",
                salary,
                Category::Transfer,
            ));
        }

        let rent = Money::from_dollars(650 + 25 * (a as i64 % 8));
        for date in monthly_dates(&mut rng, from, to, 2 + (a as u32 % 5), 1) {
            txs.push(Transaction::new(&id, date, "RENT PAYMENT LLC", rent, Category::Payment));
        }

        if a % 2 == 0 {
            for date in monthly_dates(&mut rng, from, to, 18 + (a as u32 % 4), 1) {
                txs.push(Transaction::new(
                    &id,
                    date,
                    "STREAMCO SUBSCRIPTION",
                    Money(1599),
                    Category::Recreation,
                ));
            }
        }
        if a % 3 == 0 {
            for date in periodic_dates(&mut rng, from, to, 7, 3 + (a as u64 % 4), 1) {
                txs.push(Transaction::new(
                    &id,
                    date,
                    "CORNER COFFEE SHOP",
                    Money(450),
                    Category::FoodAndDrink,
                ));
            }
        }

        // Background spending: around one purchase a day, occasionally large.
        let mut day = from;
        while day <= to {
            for _ in 0..poisson(&mut rng, 0.9) {
                let big = rng.random::<f64>() < 0.02;
                let (lo, hi) = if big { (15_000, 45_000) } else { (500, 6_000) };
                txs.push(noise_tx(&mut rng, &id, day, lo, hi));
            }
            day += chrono::Duration::days(1);
        }

        let opening = Money::from_dollars(600 + 40 * (a as i64 % 9));
        accounts.push(account_with_opening(
            &id,
            &format!("user{:02}", a / 2),
            if a % 3 == 2 { AccountKind::Savings } else { AccountKind::Checking },
            opening,
            &txs,
            to,
        ));
    }
    Ledger::new(accounts, txs, d(2020, 9, 30)).expect("fixture is valid")
}

/// A long-history synthetic ledger in the shape of the public bank dataset:
/// sparse transactions (a few per month) over six years, no descriptions or
/// categories, weekly balances starting at zero. Suitable for the
/// weekly-step evaluation protocol.
pub fn pkdd_like_fixture(n_accounts: usize, seed: u64) -> Ledger {
    let from = d(1993, 1, 1);
    let to = d(1998, 12, 31);
    let mut txs: Vec<Transaction> = Vec::new();
    let mut accounts = Vec::new();
    for a in 0..n_accounts {
        let id = format!("{}", 1000 + a);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (a as u64).wrapping_mul(0xD1B54A32D192ED03));

        let salary_cents = rng.random_range(90_000i64..220_000);
        let payday = 4 + (a as u32 % 18);
        for date in monthly_dates(&mut rng, from, to, payday, 2) {
            txs.push(Transaction {
                account_id: AccountId::new(&id),
                date,
                description: String::new(),
                amount: Money(-salary_cents),
                category: Category::Unlabeled,
                category_label: String::new(),
            });
        }
        // Withdrawals: two or three a month, sized against the salary.
        let mut cursor = from;
        while cursor <= to {
            let n = 2 + (rng.random::<f64>() < 0.5) as usize;
            for _ in 0..n {
                let offset: u64 = rng.random_range(0..28);
                let date = cursor + Days::new(offset);
                if date > to {
                    continue;
                }
                let frac = rng.random_range(0.15..0.45);
                let cents = (salary_cents as f64 * frac) as i64;
                txs.push(Transaction {
                    account_id: AccountId::new(&id),
                    date,
                    description: String::new(),
                    amount: Money(cents),
                    category: Category::Unlabeled,
                    category_label: String::new(),
                });
            }
            cursor = cursor.checked_add_months(chrono::Months::new(1)).unwrap();
        }

        let last = txs
            .iter()
            .filter(|t| t.account_id.as_str() == id)
            .map(|t| t.date)
            .max()
            .unwrap();
        accounts.push(account_with_opening(
            &id,
            &id,
            AccountKind::Other,
            Money::ZERO,
            &txs,
            last,
        ));
    }
    let first = txs.iter().map(|t| t.date).min().unwrap();
    let last = txs.iter().map(|t| t.date).max().unwrap();
    let span = (last - first).num_days();
    let train_end = first + chrono::Duration::days((span as f64 * 0.75) as i64);
    Ledger::new(accounts, txs, train_end).expect("fixture is valid")
}

/// Writes a ledger in the semicolon-delimited public-dataset transaction
/// format (unsigned amounts with a credit/debit type code).
pub fn write_pkdd_like_csv(ledger: &Ledger, path: &Path) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().delimiter(b';').from_path(path)?;
    writer.write_record([
        "trans_id", "account_id", "date", "type", "operation", "amount", "balance", "k_symbol",
        "bank", "account",
    ])?;
    for (i, t) in ledger.transactions().iter().enumerate() {
        let (ty, magnitude) = if t.amount.is_inflow() {
            ("PRIJEM", -t.amount)
        } else {
            ("VYDAJ", t.amount)
        };
        let date = format!(
            "{:02}{:02}{:02}",
            t.date.year() - 1900,
            t.date.month(),
            t.date.day()
        );
        writer.write_record([
            &(i + 1).to_string(),
            t.account_id.as_str(),
            &date,
            ty,
            "",
            &magnitude.to_string(),
            "0.00",
            "",
            "",
            "",
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// A cyclic charge planted into a labeled fixture, with its true occurrence
/// dates.
#[derive(Debug, Clone)]
pub struct PlantedCharge {
    pub account: AccountId,
    pub description: String,
    pub category: Category,
    pub kind: FrequencyKind,
    pub amount: Money,
    pub dates: Vec<NaiveDate>,
}

impl PlantedCharge {
    /// The earliest true occurrence strictly after `date`.
    pub fn next_after(&self, date: NaiveDate) -> Option<NaiveDate> {
        self.dates.iter().copied().find(|&t| t > date)
    }
}

/// A labeled ledger for scoring recurring-charge extraction: planted
/// monthly, semimonthly, biweekly, and weekly charges with date jitter
/// within half their matching window, Poisson noise purchases, plus decoy
/// one-off transactions whose descriptions or raw category labels trip a
/// keyword-rule extractor.
pub fn recurring_labeled_fixture(
    n_accounts: usize,
    seed: u64,
) -> (Ledger, Vec<PlantedCharge>) {
    let from = d(2020, 1, 1);
    let to = d(2020, 12, 31);
    let mut txs: Vec<Transaction> = Vec::new();
    let mut planted: Vec<PlantedCharge> = Vec::new();
    let mut accounts = Vec::new();

    for a in 0..n_accounts {
        let id = format!("acct{a:02}");
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (a as u64).wrapping_mul(0xA24BAED4963EE407));

        let mut plant = |dates: Vec<NaiveDate>,
                         description: &str,
                         category: Category,
                         kind: FrequencyKind,
                         amount: Money,
                         txs: &mut Vec<Transaction>,
                         planted: &mut Vec<PlantedCharge>| {
            for &date in &dates {
                txs.push(Transaction::new(&id, date, description, amount, category));
            }
            planted.push(PlantedCharge {
                account: AccountId::new(&id),
                description: description.to_string(),
                category,
                kind,
                amount,
                dates,
            });
        };

        // Monthly utility for everyone; monthly rent for even accounts.
        let dates = monthly_dates(&mut rng, from, to, 6 + (a as u32 % 3), 3);
        plant(
            dates,
            "CITY POWER AND LIGHT",
            Category::Service,
            FrequencyKind::Monthly,
            Money::from_dollars(80 + a as i64 % 20),
            &mut txs,
            &mut planted,
        );
        if a % 2 == 0 {
            let dates = monthly_dates(&mut rng, from, to, 1 + (a as u32 % 2), 3);
            plant(
                dates,
                "APARTMENT RENT HOLDINGS",
                Category::Payment,
                FrequencyKind::Monthly,
                Money::from_dollars(900),
                &mut txs,
                &mut planted,
            );
        }
        // Semimonthly payroll inflow.
        let dates = semimonthly_dates(&mut rng, from, to, 3);
        plant(
            dates,
            "DIRECT DEPOSIT PAYROLL",
            Category::Transfer,
            FrequencyKind::Semimonthly,
            Money::from_dollars(-(1300 + 50 * (a as i64 % 5))),
            &mut txs,
            &mut planted,
        );
        // Biweekly loan payment for odd accounts.
        if a % 2 == 1 {
            let dates = periodic_dates(&mut rng, from, to, 14, 5 + (a as u64 % 7), 1);
            plant(
                dates,
                "AUTO LOAN SERVICING",
                Category::Payment,
                FrequencyKind::Biweekly,
                Money::from_dollars(210),
                &mut txs,
                &mut planted,
            );
        }
        // Weekly coffee habit for every third account.
        if a % 3 == 0 {
            let dates = periodic_dates(&mut rng, from, to, 7, 2 + (a as u64 % 5), 1);
            plant(
                dates,
                "CORNER COFFEE SHOP",
                Category::FoodAndDrink,
                FrequencyKind::Weekly,
                Money(475),
                &mut txs,
                &mut planted,
            );
        }

        // Poisson background noise.
        let mut day = from;
        while day <= to {
            for _ in 0..poisson(&mut rng, 0.7) {
                txs.push(noise_tx(&mut rng, &id, day, 400, 12_000));
            }
            day += chrono::Duration::days(1);
        }

        // Keyword decoys: sporadic one-offs whose text or raw label trips a
        // keyword extractor but which are not periodic at all.
        for k in 0..6u64 {
            let offset: u64 = rng.random_range(0..350);
            let date = from + Days::new(offset);
            let refno: u32 = rng.random_range(1000..9999);
            txs.push(Transaction::new(
                &id,
                date,
                format!("NON RECURRING SETTLEMENT {refno} {k}"),
                Money(rng.random_range(2_000..20_000)),
                Category::Service,
            ));
        }
        for _ in 0..3 {
            let offset: u64 = rng.random_range(0..350);
            let date = from + Days::new(offset);
            let refno: u32 = rng.random_range(100_000..999_999);
            txs.push(
                Transaction::new(
                    &id,
                    date,
                    format!("{refno}"),
                    Money(rng.random_range(3_000..15_000)),
                    Category::Payment,
                )
                .with_label("Bill Pay"),
            );
        }

        let opening = Money::from_dollars(500 + 30 * (a as i64 % 6));
        accounts.push(account_with_opening(
            &id,
            &id,
            AccountKind::Checking,
            opening,
            &txs,
            to,
        ));
    }

    let ledger = Ledger::new(accounts, txs, d(2020, 8, 31)).expect("fixture is valid");
    (ledger, planted)
}

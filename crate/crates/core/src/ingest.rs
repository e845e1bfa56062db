//! Parsers for the two supported ledger formats, plus dataset filters and
//! train/test splitting.
//!
//! Formats:
//! - WageGoal CSV: header `account_id,date,description,amount,category`,
//!   dates `M/D/YYYY`, comma-delimited, RFC-4180 quoting. Amounts follow the
//!   outflow-positive convention already.
//! - Current-balances CSV: header `account_id,balance,as_of`.
//! - Optional account-metadata CSV: header `account_id,user_id,kind`.
//! - PKDD'99 transaction file: semicolon-delimited, quoted header, dates
//!   `YYMMDD`, unsigned amounts with a credit/debit type code.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Days, NaiveDate};

use crate::error::{Error, Result};
use crate::model::{
    Account, AccountId, AccountKind, Category, Ledger, Money, Transaction, UserId,
};

/// Fraction of the observed range used for training when nothing else is
/// specified: nine months of a year, or 4.5 of 6 years.
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.75;

/// Minimum account span for the long-history dataset: at least four years,
/// measured leap-safely as 1461 days.
pub const MIN_SPAN_DAYS: i64 = 1461;

pub fn parse_mdy(text: &str) -> Option<NaiveDate> {
    let mut parts = text.trim().split('/');
    let m: u32 = parts.next()?.parse().ok()?;
    let d: u32 = parts.next()?.parse().ok()?;
    let y: i32 = parts.next()?.parse().ok()?;
    if parts.next().is_some() {
        return None;
    }
    NaiveDate::from_ymd_opt(y, m, d)
}

pub fn format_mdy(date: NaiveDate) -> String {
    use chrono::Datelike;
    format!("{}/{}/{}", date.month(), date.day(), date.year())
}

fn parse_yymmdd(text: &str) -> Option<NaiveDate> {
    let t = text.trim();
    if t.len() != 6 || !t.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let yy: i32 = t[0..2].parse().ok()?;
    let mm: u32 = t[2..4].parse().ok()?;
    let dd: u32 = t[4..6].parse().ok()?;
    NaiveDate::from_ymd_opt(1900 + yy, mm, dd)
}

/// Current balance with its as-of date.
pub type BalanceEntry = (Money, NaiveDate);

/// Outcome of loading a WageGoal CSV: the ledger plus the number of rows
/// whose category label was not recognized (mapped to Unlabeled).
#[derive(Debug)]
pub struct WageGoalLoad {
    pub ledger: Ledger,
    pub unrecognized_categories: usize,
}

/// Optional per-account metadata (user and account kind).
#[derive(Debug, Clone)]
pub struct AccountMeta {
    pub user_id: UserId,
    pub kind: AccountKind,
}

fn default_train_end(first: NaiveDate, last: NaiveDate) -> NaiveDate {
    let span = (last - first).num_days();
    first + Days::new((span as f64 * DEFAULT_TRAIN_FRACTION).floor() as u64)
}

/// Parses a WageGoal-format CSV. Every account in the file must have a
/// current-balance entry; unrecognized category labels map to `Unlabeled`
/// and are counted. `meta` supplies user/kind data for accounts that have
/// it; others default to a single-account user of kind Other.
pub fn load_wagegoal_csv(
    path: &Path,
    current_balances: &BTreeMap<AccountId, BalanceEntry>,
    meta: &BTreeMap<AccountId, AccountMeta>,
) -> Result<WageGoalLoad> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let mut transactions = Vec::new();
    let mut unrecognized = 0usize;
    for (i, record) in reader.records().enumerate() {
        let line = i + 2; // header is line 1
        let record = record?;
        if record.len() < 5 {
            return Err(Error::RowParse {
                line,
                reason: format!("expected 5 fields, got {}", record.len()),
            });
        }
        let account_id = AccountId::new(record[0].trim());
        let date = parse_mdy(&record[1]).ok_or_else(|| Error::RowParse {
            line,
            reason: format!("bad date {:?}", &record[1]),
        })?;
        let description = record[2].to_string();
        let amount = Money::parse(&record[3]).map_err(|reason| Error::RowParse { line, reason })?;
        let label = record[4].trim().to_string();
        let category = match Category::from_label(&label) {
            Some(c) => c,
            None => {
                unrecognized += 1;
                Category::Unlabeled
            }
        };
        transactions.push(Transaction {
            account_id,
            date,
            description,
            amount,
            category,
            category_label: label,
        });
    }
    if transactions.is_empty() {
        return Err(Error::InsufficientData("no transactions in file".into()));
    }

    let mut account_ids: Vec<AccountId> = transactions.iter().map(|t| t.account_id.clone()).collect();
    account_ids.sort();
    account_ids.dedup();
    let mut accounts = Vec::new();
    for id in account_ids {
        let (balance, as_of) = current_balances
            .get(&id)
            .copied()
            .ok_or_else(|| Error::MissingBalance(id.to_string()))?;
        let m = meta.get(&id);
        accounts.push(Account {
            user_id: m.map(|m| m.user_id.clone()).unwrap_or_else(|| UserId::new(id.as_str())),
            kind: m.map(|m| m.kind).unwrap_or(AccountKind::Other),
            account_id: id,
            current_balance: balance,
            balance_as_of: as_of,
        });
    }

    let first = transactions.iter().map(|t| t.date).min().unwrap();
    let last = transactions.iter().map(|t| t.date).max().unwrap();
    let ledger = Ledger::new(accounts, transactions, default_train_end(first, last))?;
    Ok(WageGoalLoad {
        ledger,
        unrecognized_categories: unrecognized,
    })
}

/// Parses a current-balances CSV (`account_id,balance,as_of`).
pub fn load_balances_csv(path: &Path) -> Result<BTreeMap<AccountId, BalanceEntry>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let mut out = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record?;
        if record.len() < 3 {
            return Err(Error::RowParse {
                line,
                reason: format!("expected 3 fields, got {}", record.len()),
            });
        }
        let id = AccountId::new(record[0].trim());
        let balance = Money::parse(&record[1]).map_err(|reason| Error::RowParse { line, reason })?;
        let as_of = parse_mdy(&record[2]).ok_or_else(|| Error::RowParse {
            line,
            reason: format!("bad date {:?}", &record[2]),
        })?;
        out.insert(id, (balance, as_of));
    }
    Ok(out)
}

/// Parses an optional account-metadata CSV (`account_id,user_id,kind`).
pub fn load_accounts_csv(path: &Path) -> Result<BTreeMap<AccountId, AccountMeta>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let mut out = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record?;
        if record.len() < 3 {
            return Err(Error::RowParse {
                line,
                reason: format!("expected 3 fields, got {}", record.len()),
            });
        }
        let kind = match record[2].trim().to_ascii_lowercase().as_str() {
            "checking" => AccountKind::Checking,
            "savings" => AccountKind::Savings,
            "other" => AccountKind::Other,
            other => {
                return Err(Error::RowParse {
                    line,
                    reason: format!("unknown account kind {other:?}"),
                })
            }
        };
        out.insert(
            AccountId::new(record[0].trim()),
            AccountMeta {
                user_id: UserId::new(record[1].trim()),
                kind,
            },
        );
    }
    Ok(out)
}

/// Writes a ledger in the canonical WageGoal CSV dialect, transactions in
/// canonical order, category labels verbatim.
pub fn write_wagegoal_csv(ledger: &Ledger, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["account_id", "date", "description", "amount", "category"])?;
    for t in ledger.transactions() {
        writer.write_record([
            t.account_id.as_str(),
            &format_mdy(t.date),
            &t.description,
            &t.amount.to_string(),
            &t.category_label,
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Writes the companion current-balances CSV.
pub fn write_balances_csv(ledger: &Ledger, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["account_id", "balance", "as_of"])?;
    for account in ledger.accounts() {
        writer.write_record([
            account.account_id.as_str(),
            &account.current_balance.to_string(),
            &format_mdy(account.balance_as_of),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Writes the optional account-metadata CSV.
pub fn write_accounts_csv(ledger: &Ledger, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["account_id", "user_id", "kind"])?;
    for account in ledger.accounts() {
        let kind = match account.kind {
            AccountKind::Checking => "checking",
            AccountKind::Savings => "savings",
            AccountKind::Other => "other",
        };
        writer.write_record([account.account_id.as_str(), account.user_id.as_str(), kind])?;
    }
    writer.flush()?;
    Ok(())
}

/// Parses the PKDD'99 Discovery Challenge transaction file.
///
/// Credit rows (type PRIJEM) become negative amounts, debit rows positive.
/// Accounts spanning fewer than four years of data are dropped. The file
/// carries no usable opening balances, so every retained account is seeded
/// to start at zero: its current balance is set to the negated sum of its
/// amounts as of its last transaction. The train/test boundary lands at
/// three quarters of the global range (4.5 of 6 years).
pub fn load_pkdd99(path: &Path) -> Result<Ledger> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .delimiter(b';')
        .flexible(true)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| -> Option<usize> {
        headers
            .iter()
            .position(|h| h.trim_matches('"').eq_ignore_ascii_case(name))
    };
    let (c_account, c_date, c_type, c_amount) = match (
        col("account_id"),
        col("date"),
        col("type"),
        col("amount"),
    ) {
        (Some(a), Some(d), Some(t), Some(m)) => (a, d, t, m),
        _ => {
            return Err(Error::RowParse {
                line: 1,
                reason: "missing account_id/date/type/amount columns".into(),
            })
        }
    };

    let mut transactions: Vec<Transaction> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record?;
        let get = |idx: usize| -> std::result::Result<&str, Error> {
            record.get(idx).map(|s| s.trim_matches('"')).ok_or(Error::RowParse {
                line,
                reason: "short row".into(),
            })
        };
        let account_id = AccountId::new(get(c_account)?);
        let date = parse_yymmdd(get(c_date)?).ok_or_else(|| Error::RowParse {
            line,
            reason: format!("bad date {:?}", record.get(c_date).unwrap_or("")),
        })?;
        let type_code = get(c_type)?.to_ascii_uppercase();
        let magnitude = Money::parse(get(c_amount)?).map_err(|reason| Error::RowParse { line, reason })?;
        if magnitude.cents() < 0 {
            return Err(Error::RowParse {
                line,
                reason: "negative magnitude in unsigned amount column".into(),
            });
        }
        let amount = if type_code.contains("PRIJEM") {
            -magnitude // credit: money in
        } else {
            magnitude // debit / withdrawal: money out
        };
        transactions.push(Transaction {
            account_id,
            date,
            description: String::new(),
            amount,
            category: Category::Unlabeled,
            category_label: String::new(),
        });
    }
    if transactions.is_empty() {
        return Err(Error::InsufficientData("no transactions in file".into()));
    }

    // Span filter: at least four years per account.
    let mut span: BTreeMap<AccountId, (NaiveDate, NaiveDate)> = BTreeMap::new();
    for t in &transactions {
        span.entry(t.account_id.clone())
            .and_modify(|(lo, hi)| {
                *lo = (*lo).min(t.date);
                *hi = (*hi).max(t.date);
            })
            .or_insert((t.date, t.date));
    }
    let retained: BTreeMap<AccountId, (NaiveDate, NaiveDate)> = span
        .into_iter()
        .filter(|(_, (lo, hi))| (*hi - *lo).num_days() >= MIN_SPAN_DAYS)
        .collect();
    transactions.retain(|t| retained.contains_key(&t.account_id));
    if transactions.is_empty() {
        return Err(Error::InsufficientData(
            "no account spans four years of data".into(),
        ));
    }

    let mut totals: BTreeMap<AccountId, Money> = BTreeMap::new();
    for t in &transactions {
        *totals.entry(t.account_id.clone()).or_insert(Money::ZERO) += t.amount;
    }
    let accounts: Vec<Account> = retained
        .iter()
        .map(|(id, (_, last))| Account {
            account_id: id.clone(),
            user_id: UserId::new(id.as_str()),
            kind: AccountKind::Other,
            current_balance: -totals[id],
            balance_as_of: *last,
        })
        .collect();

    let first = transactions.iter().map(|t| t.date).min().unwrap();
    let last = transactions.iter().map(|t| t.date).max().unwrap();
    Ledger::new(accounts, transactions, default_train_end(first, last))
}

/// Where to split a ledger into training and testing views.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitSpec {
    /// Fraction of the observed transaction range, e.g. 0.75.
    Fraction(f64),
    Date(NaiveDate),
}

/// Splits into a training view (all information through the split date,
/// balances rewound) and a testing view (transactions strictly after it).
/// The two views partition the transaction multiset exactly.
pub fn split_train_test(ledger: &Ledger, spec: SplitSpec) -> Result<(Ledger, Ledger)> {
    let first = ledger
        .first_transaction_date()
        .ok_or_else(|| Error::InsufficientData("empty ledger".into()))?;
    let last = ledger.last_observed_date().expect("non-empty ledger");
    let split = match spec {
        SplitSpec::Fraction(f) => {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::InvalidInput(format!("fraction {f} outside [0,1]")));
            }
            let last_tx = ledger.last_transaction_date().expect("non-empty ledger");
            first + Days::new(((last_tx - first).num_days() as f64 * f).floor() as u64)
        }
        SplitSpec::Date(d) => d,
    };
    if split <= first || split > last {
        return Err(Error::SplitOutOfRange(split));
    }
    let train = ledger.truncate_at(split)?;
    let test_txs: Vec<Transaction> = ledger
        .transactions()
        .iter()
        .filter(|t| t.date > split)
        .cloned()
        .collect();
    // The test view's own boundary is its first transaction; there is no
    // training data inside it.
    let test_boundary = test_txs.iter().map(|t| t.date).min().unwrap_or(split);
    let test = Ledger::new(ledger.accounts().cloned().collect(), test_txs, test_boundary)?;
    Ok((train, test))
}

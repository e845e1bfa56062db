//! Core domain types: money, transactions, accounts, balance series, and the
//! in-memory ledger store shared by every other module.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, AddAssign, Neg, Sub};

use chrono::{Datelike, Days, NaiveDate};

use crate::error::{Error, Result};

/// Signed currency value stored as integer cents so that balance
/// reconstruction is exact. Positive amounts are outflows (spending),
/// negative amounts are inflows (income).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Money(pub i64);

impl Money {
    pub const ZERO: Money = Money(0);

    pub fn from_cents(cents: i64) -> Money {
        Money(cents)
    }

    /// Whole-dollar constructor, convenient for fixtures.
    pub fn from_dollars(dollars: i64) -> Money {
        Money(dollars * 100)
    }

    pub fn cents(self) -> i64 {
        self.0
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / 100.0
    }

    pub fn abs(self) -> Money {
        Money(self.0.abs())
    }

    pub fn is_outflow(self) -> bool {
        self.0 > 0
    }

    pub fn is_inflow(self) -> bool {
        self.0 < 0
    }

    /// Parses a plain decimal string such as `-1000`, `20.49` or `0.01`.
    /// At most two fractional digits are accepted.
    pub fn parse(text: &str) -> std::result::Result<Money, String> {
        let s = text.trim();
        if s.is_empty() {
            return Err("empty amount".to_string());
        }
        let (negative, digits) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s.strip_prefix('+').unwrap_or(s)),
        };
        let (int_part, frac_part) = match digits.split_once('.') {
            Some((i, f)) => (i, f),
            None => (digits, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(format!("malformed amount {text:?}"));
        }
        if frac_part.len() > 2 {
            return Err(format!("more than two decimal places in {text:?}"));
        }
        if !int_part.chars().all(|c| c.is_ascii_digit())
            || !frac_part.chars().all(|c| c.is_ascii_digit())
        {
            return Err(format!("malformed amount {text:?}"));
        }
        let whole: i64 = if int_part.is_empty() {
            0
        } else {
            int_part
                .parse()
                .map_err(|_| format!("amount out of range {text:?}"))?
        };
        let mut frac: i64 = if frac_part.is_empty() {
            0
        } else {
            frac_part.parse().map_err(|_| format!("malformed amount {text:?}"))?
        };
        if frac_part.len() == 1 {
            frac *= 10;
        }
        let cents = whole
            .checked_mul(100)
            .and_then(|w| w.checked_add(frac))
            .ok_or_else(|| format!("amount out of range {text:?}"))?;
        Ok(Money(if negative { -cents } else { cents }))
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{sign}{}.{:02}", abs / 100, abs % 100)
    }
}

impl Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl AddAssign for Money {
    fn add_assign(&mut self, rhs: Money) {
        self.0 += rhs.0;
    }
}

impl Sub for Money {
    type Output = Money;
    fn sub(self, rhs: Money) -> Money {
        Money(self.0 - rhs.0)
    }
}

impl Neg for Money {
    type Output = Money;
    fn neg(self) -> Money {
        Money(-self.0)
    }
}

impl std::iter::Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        Money(iter.map(|m| m.0).sum())
    }
}

/// Opaque account identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AccountId(pub String);

impl AccountId {
    pub fn new(id: impl Into<String>) -> AccountId {
        AccountId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for AccountId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Opaque user identifier. One user may own several accounts.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UserId(pub String);

impl UserId {
    pub fn new(id: impl Into<String>) -> UserId {
        UserId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// The eleven source categories plus Transfer plus Unlabeled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Category {
    BankFees,
    CashAdvance,
    Community,
    FoodAndDrink,
    Healthcare,
    Interest,
    Payment,
    Recreation,
    Service,
    Shops,
    Travel,
    Transfer,
    Unlabeled,
}

impl Category {
    pub const ALL: [Category; 13] = [
        Category::BankFees,
        Category::CashAdvance,
        Category::Community,
        Category::FoodAndDrink,
        Category::Healthcare,
        Category::Interest,
        Category::Payment,
        Category::Recreation,
        Category::Service,
        Category::Shops,
        Category::Travel,
        Category::Transfer,
        Category::Unlabeled,
    ];

    pub fn canonical_label(self) -> &'static str {
        match self {
            Category::BankFees => "Bank Fees",
            Category::CashAdvance => "Cash Advance",
            Category::Community => "Community",
            Category::FoodAndDrink => "Food and Drink",
            Category::Healthcare => "Healthcare",
            Category::Interest => "Interest",
            Category::Payment => "Payment",
            Category::Recreation => "Recreation",
            Category::Service => "Service",
            Category::Shops => "Shops",
            Category::Travel => "Travel",
            Category::Transfer => "Transfer",
            Category::Unlabeled => "NA",
        }
    }

    /// Maps a raw label to the enumeration. Empty and "NA" labels map to
    /// `Unlabeled` silently; any other unknown label also maps to
    /// `Unlabeled` but is reported as unrecognized by the caller.
    pub fn from_label(label: &str) -> Option<Category> {
        let key: String = label
            .to_lowercase()
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect();
        let cat = match key.as_str() {
            "bankfees" => Category::BankFees,
            "cashadvance" => Category::CashAdvance,
            "community" => Category::Community,
            "foodanddrink" | "fooddrink" => Category::FoodAndDrink,
            "healthcare" => Category::Healthcare,
            "interest" => Category::Interest,
            "payment" => Category::Payment,
            "recreation" => Category::Recreation,
            "service" => Category::Service,
            "shops" => Category::Shops,
            "travel" => Category::Travel,
            "transfer" => Category::Transfer,
            "" | "na" => Category::Unlabeled,
            _ => return None,
        };
        Some(cat)
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.canonical_label())
    }
}

/// One ledger line. `amount` follows the outflow-positive convention:
/// spending is positive, income (e.g. a direct deposit) is negative.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    pub account_id: AccountId,
    pub date: NaiveDate,
    pub description: String,
    pub amount: Money,
    pub category: Category,
    /// Original category label as supplied by the data source. Retained so
    /// that label-based heuristics (and round-trip serialization) see the
    /// source text, not our normalization of it.
    pub category_label: String,
}

impl Transaction {
    pub fn new(
        account_id: impl Into<String>,
        date: NaiveDate,
        description: impl Into<String>,
        amount: Money,
        category: Category,
    ) -> Transaction {
        Transaction {
            account_id: AccountId::new(account_id),
            date,
            description: description.into(),
            amount,
            category,
            category_label: category.canonical_label().to_string(),
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Transaction {
        self.category_label = label.into();
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AccountKind {
    Checking,
    Savings,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Account {
    pub account_id: AccountId,
    pub user_id: UserId,
    pub kind: AccountKind,
    pub current_balance: Money,
    /// Date the current balance was observed; must be on or after the
    /// account's last transaction.
    pub balance_as_of: NaiveDate,
}

/// Spacing of a balance series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Step {
    Daily,
    Weekly,
}

impl Step {
    pub fn days(self) -> i64 {
        match self {
            Step::Daily => 1,
            Step::Weekly => 7,
        }
    }
}

/// Per-account evenly spaced balance vector. `values[i]` is the balance at
/// `start_date + i * step`, after all transactions in that step have applied.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BalanceSeries {
    pub account_id: AccountId,
    pub start_date: NaiveDate,
    pub step: Step,
    pub values: Vec<Money>,
}

impl BalanceSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn date_at(&self, index: usize) -> NaiveDate {
        self.start_date + Days::new((index as u64) * self.step.days() as u64)
    }

    pub fn end_date(&self) -> NaiveDate {
        self.date_at(self.values.len().saturating_sub(1))
    }

    /// Index of `date` on the series grid, if it falls exactly on a step.
    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        let offset = (date - self.start_date).num_days();
        if offset < 0 || offset % self.step.days() != 0 {
            return None;
        }
        let idx = (offset / self.step.days()) as usize;
        (idx < self.values.len()).then_some(idx)
    }

    pub fn values_f64(&self) -> Vec<f64> {
        self.values.iter().map(|m| m.to_f64()).collect()
    }
}

/// Immutable transaction store. Transactions are kept in a canonical order
/// (account, date, description, amount, label) so that downstream results do
/// not depend on input file ordering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ledger {
    accounts: BTreeMap<AccountId, Account>,
    transactions: Vec<Transaction>,
    train_end: NaiveDate,
}

fn canonical_tx_key(t: &Transaction) -> (AccountId, NaiveDate, String, Money, String) {
    (
        t.account_id.clone(),
        t.date,
        t.description.clone(),
        t.amount,
        t.category_label.clone(),
    )
}

impl Ledger {
    /// Builds a ledger, validating that every transaction resolves to an
    /// account and that `train_end` lies within the observed date range.
    pub fn new(
        accounts: Vec<Account>,
        mut transactions: Vec<Transaction>,
        train_end: NaiveDate,
    ) -> Result<Ledger> {
        let accounts: BTreeMap<AccountId, Account> = accounts
            .into_iter()
            .map(|a| (a.account_id.clone(), a))
            .collect();
        for t in &transactions {
            if !accounts.contains_key(&t.account_id) {
                return Err(Error::AccountNotFound(t.account_id.to_string()));
            }
        }
        transactions.sort_by(|a, b| canonical_tx_key(a).cmp(&canonical_tx_key(b)));
        let ledger = Ledger {
            accounts,
            transactions,
            train_end,
        };
        if let (Some(first), Some(last)) = (ledger.first_transaction_date(), ledger.last_observed_date()) {
            if train_end < first || train_end > last {
                return Err(Error::SplitOutOfRange(train_end));
            }
        }
        Ok(ledger)
    }

    pub fn accounts(&self) -> impl Iterator<Item = &Account> {
        self.accounts.values()
    }

    pub fn account(&self, id: &AccountId) -> Option<&Account> {
        self.accounts.get(id)
    }

    pub fn account_ids(&self) -> Vec<AccountId> {
        self.accounts.keys().cloned().collect()
    }

    pub fn transactions(&self) -> &[Transaction] {
        &self.transactions
    }

    pub fn train_end(&self) -> NaiveDate {
        self.train_end
    }

    pub fn user_ids(&self) -> Vec<UserId> {
        let mut ids: Vec<UserId> = self.accounts.values().map(|a| a.user_id.clone()).collect();
        ids.sort();
        ids.dedup();
        ids
    }

    pub fn accounts_of_user(&self, user: &UserId) -> Vec<&Account> {
        self.accounts
            .values()
            .filter(|a| &a.user_id == user)
            .collect()
    }

    /// Transactions of one account, sorted by date.
    pub fn transactions_for(&self, id: &AccountId) -> &[Transaction] {
        let lo = self
            .transactions
            .partition_point(|t| t.account_id < *id);
        let hi = self
            .transactions
            .partition_point(|t| t.account_id <= *id);
        &self.transactions[lo..hi]
    }

    pub fn first_transaction_date(&self) -> Option<NaiveDate> {
        self.transactions.iter().map(|t| t.date).min()
    }

    pub fn last_transaction_date(&self) -> Option<NaiveDate> {
        self.transactions.iter().map(|t| t.date).max()
    }

    /// Latest of all transaction dates and balance as-of dates.
    pub fn last_observed_date(&self) -> Option<NaiveDate> {
        let tx = self.last_transaction_date();
        let bal = self.accounts.values().map(|a| a.balance_as_of).max();
        match (tx, bal) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        }
    }

    /// Balance of `account` at end of day `date`, reconstructed backward
    /// from the account's current balance.
    pub fn balance_at(&self, account: &AccountId, date: NaiveDate) -> Result<Money> {
        let acct = self
            .accounts
            .get(account)
            .ok_or_else(|| Error::AccountNotFound(account.to_string()))?;
        if date > acct.balance_as_of {
            return Err(Error::InvalidInput(format!(
                "date {date} is after the balance as-of date {}",
                acct.balance_as_of
            )));
        }
        // balance[d-1] = balance[d] + sum(amounts on d), so the balance at
        // `date` adds every amount dated strictly after it.
        let later: Money = self
            .transactions_for(account)
            .iter()
            .filter(|t| t.date > date)
            .map(|t| t.amount)
            .sum();
        Ok(acct.current_balance + later)
    }

    /// Reconstructs the per-step balance path of one account.
    ///
    /// Daily series cover every day from the ledger's first transaction date
    /// through the account's balance as-of date. Weekly series sample the
    /// balance on the last day of each ISO week (Sunday), starting with the
    /// Sunday strictly before the first transaction so that an account whose
    /// history begins at zero opens the series at zero.
    pub fn build_balance_series(&self, account: &AccountId, step: Step) -> Result<BalanceSeries> {
        let acct = self
            .accounts
            .get(account)
            .ok_or_else(|| Error::AccountNotFound(account.to_string()))?;
        let txs = self.transactions_for(account);
        if txs.is_empty() {
            return Err(Error::NoTransactions(account.to_string()));
        }
        let first = self
            .first_transaction_date()
            .expect("non-empty ledger has a first date");
        let last_tx = txs.last().map(|t| t.date).unwrap();
        if acct.balance_as_of < last_tx {
            return Err(Error::InvalidInput(format!(
                "balance as-of {} predates the last transaction {} for account {}",
                acct.balance_as_of, last_tx, account
            )));
        }
        let as_of = acct.balance_as_of;

        let start = match step {
            Step::Daily => first,
            Step::Weekly => {
                // Sunday strictly before the first transaction date.
                let days_from_monday = first.weekday().num_days_from_monday() as i64;
                first - Days::new((days_from_monday + 1) as u64)
            }
        };

        let step_days = step.days();
        let n_steps = ((as_of - start).num_days() / step_days) as usize + 1;

        // Walk backward from the as-of balance, subtracting each step's
        // net delta. Steps with no transactions carry the balance forward.
        let mut values = vec![Money::ZERO; n_steps];
        let mut bal = acct.current_balance;
        let grid_end = start + Days::new(((n_steps - 1) as u64) * step_days as u64);
        // Transactions after the last grid point still separate it from the
        // as-of balance.
        let mut tx_iter = txs.iter().rev().peekable();
        while let Some(t) = tx_iter.peek() {
            if t.date > grid_end {
                bal = bal + t.amount;
                tx_iter.next();
            } else {
                break;
            }
        }
        for i in (0..n_steps).rev() {
            values[i] = bal;
            // Step i covers (date_at(i-1), date_at(i)]; undo its transactions
            // to reach the previous sample.
            let prev_sample = start + Days::new((i as u64) * step_days as u64)
                - Days::new(step_days as u64);
            while let Some(t) = tx_iter.peek() {
                if t.date > prev_sample {
                    bal = bal + t.amount;
                    tx_iter.next();
                } else {
                    break;
                }
            }
        }

        Ok(BalanceSeries {
            account_id: account.clone(),
            start_date: start,
            step,
            values,
        })
    }

    /// Returns a view of this ledger containing only information observable
    /// at end of day `cutoff`: transactions dated on or before it, balances
    /// rewound to it, and `train_end` clamped to it.
    pub fn truncate_at(&self, cutoff: NaiveDate) -> Result<Ledger> {
        let mut accounts = Vec::with_capacity(self.accounts.len());
        for acct in self.accounts.values() {
            let as_of = acct.balance_as_of.min(cutoff);
            let balance = self.balance_at(&acct.account_id, as_of)?;
            accounts.push(Account {
                current_balance: balance,
                balance_as_of: as_of,
                ..acct.clone()
            });
        }
        let transactions: Vec<Transaction> = self
            .transactions
            .iter()
            .filter(|t| t.date <= cutoff)
            .cloned()
            .collect();
        Ok(Ledger {
            accounts: accounts
                .into_iter()
                .map(|a| (a.account_id.clone(), a))
                .collect(),
            transactions,
            train_end: self.train_end.min(cutoff),
        })
    }

    /// Replaces the train/test split point.
    pub fn with_train_end(mut self, train_end: NaiveDate) -> Result<Ledger> {
        if let (Some(first), Some(last)) = (self.first_transaction_date(), self.last_observed_date())
        {
            if train_end < first || train_end > last {
                return Err(Error::SplitOutOfRange(train_end));
            }
        }
        self.train_end = train_end;
        Ok(self)
    }
}

/// Standardization parameters recorded alongside a z-scored vector so the
/// transform can be inverted.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub mean: f64,
    pub stdev: f64,
}

impl Standardization {
    /// Fits mean and sample (n-1) standard deviation.
    pub fn fit(values: &[f64]) -> Result<Standardization> {
        if values.len() < 2 {
            return Err(Error::SeriesTooShort {
                need: 2,
                got: values.len(),
            });
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        let stdev = (ss / (n - 1.0)).sqrt();
        Ok(Standardization { mean, stdev })
    }

    pub fn apply(&self, value: f64) -> f64 {
        if self.stdev == 0.0 {
            0.0
        } else {
            (value - self.mean) / self.stdev
        }
    }

    pub fn apply_slice(&self, values: &[f64]) -> Vec<f64> {
        values.iter().map(|&v| self.apply(v)).collect()
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.stdev + self.mean
    }
}

/// Z-scores a series, returning the transformed copy and the parameters
/// needed to invert it. A constant series yields the zero vector with the
/// standard deviation recorded as zero.
pub fn standardize(values: &[f64]) -> Result<(Vec<f64>, Standardization)> {
    let params = Standardization::fit(values)?;
    Ok((params.apply_slice(values), params))
}

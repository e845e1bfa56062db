//! Transaction time-series engine: reconstructs account balance histories
//! from raw bank-ledger data, mines recurring transactions and unexpected
//! large expenses, and forecasts balances with historical averaging,
//! DTW-matched regularized regression, and a hybrid of the two.

pub mod cluster;
pub mod dtw;
pub mod error;
pub mod eval;
pub mod forecast;
pub mod ingest;
pub mod model;
pub mod recurring;
pub mod synth;
pub mod textsim;

pub use error::{Error, Result};
pub use model::{
    standardize, Account, AccountId, AccountKind, BalanceSeries, Category, Ledger, Money,
    Standardization, Step, Transaction, UserId,
};

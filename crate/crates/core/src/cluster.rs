//! Exploratory DTW clustering of balance sequences and category-wise
//! spending summaries.

use std::collections::BTreeMap;

use chrono::NaiveDate;

use crate::dtw::{dtw_distance, DtwConfig};
use crate::error::{Error, Result};
use crate::model::{Category, Ledger, Step, UserId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Linkage {
    Complete,
    Average,
}

impl Linkage {
    pub fn parse(text: &str) -> Option<Linkage> {
        match text.to_ascii_lowercase().as_str() {
            "complete" => Some(Linkage::Complete),
            "average" => Some(Linkage::Average),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    pub assignments: BTreeMap<UserId, usize>,
    pub k: usize,
    pub linkage: Linkage,
    /// Mean per-user category spend within each cluster.
    pub category_profiles: BTreeMap<usize, BTreeMap<Category, f64>>,
}

/// Per-user overall balance sequence over a date range: the sum of the
/// user's account balances, zero-meaned. Users whose accounts do not cover
/// the full period are skipped.
fn user_sequences(
    ledger: &Ledger,
    from: NaiveDate,
    to: NaiveDate,
) -> Result<Vec<(UserId, Vec<f64>)>> {
    if from > to {
        return Err(Error::InvalidInput(format!("empty period {from}..{to}")));
    }
    let days = (to - from).num_days() as usize + 1;
    let mut out = Vec::new();
    'user: for user in ledger.user_ids() {
        let accounts = ledger.accounts_of_user(&user);
        let mut total = vec![0.0; days];
        for account in &accounts {
            let Ok(series) = ledger.build_balance_series(&account.account_id, Step::Daily) else {
                continue 'user;
            };
            if series.start_date > from || series.end_date() < to {
                continue 'user;
            }
            let offset = (from - series.start_date).num_days() as usize;
            for (i, slot) in total.iter_mut().enumerate() {
                *slot += series.values[offset + i].to_f64();
            }
        }
        let mean = total.iter().sum::<f64>() / days as f64;
        for v in total.iter_mut() {
            *v -= mean;
        }
        out.push((user, total));
    }
    Ok(out)
}

/// Hierarchical agglomerative clustering of per-user zero-meaned balance
/// sequences under banded DTW distance, merged until `k` clusters remain.
/// Tie-breaking is deterministic: the pair with the lexicographically
/// smallest member ids wins.
pub fn cluster_balances(
    ledger: &Ledger,
    from: NaiveDate,
    to: NaiveDate,
    k: usize,
    config: &DtwConfig,
    linkage: Linkage,
) -> Result<ClusterResult> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be at least 1".into()));
    }
    let sequences = user_sequences(ledger, from, to)?;
    let n = sequences.len();
    if n < k {
        return Err(Error::InsufficientData(format!(
            "{n} users with full coverage, need at least k = {k}"
        )));
    }

    // Pairwise distance matrix.
    let mut dist = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let d = dtw_distance(&sequences[i].1, &sequences[j].1, config)?;
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }

    // Naive agglomerative merge; n is small here.
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    while clusters.len() > k {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let mut agg: f64 = match linkage {
                    Linkage::Complete => f64::NEG_INFINITY,
                    Linkage::Average => 0.0,
                };
                for &i in &clusters[a] {
                    for &j in &clusters[b] {
                        match linkage {
                            Linkage::Complete => agg = agg.max(dist[i][j]),
                            Linkage::Average => agg += dist[i][j],
                        }
                    }
                }
                if linkage == Linkage::Average {
                    agg /= (clusters[a].len() * clusters[b].len()) as f64;
                }
                let better = match best {
                    None => true,
                    Some((d, ba, bb)) => {
                        agg < d
                            || (agg == d
                                && (clusters[a][0], clusters[b][0])
                                    < (clusters[ba][0], clusters[bb][0]))
                    }
                };
                if better {
                    best = Some((agg, a, b));
                }
            }
        }
        let (_, a, b) = best.expect("at least two clusters remain");
        let merged = clusters.remove(b);
        clusters[a].extend(merged);
        clusters[a].sort_unstable();
    }

    // Label clusters by their smallest member for stable output.
    clusters.sort_by_key(|c| c[0]);
    let mut assignments = BTreeMap::new();
    for (label, members) in clusters.iter().enumerate() {
        for &i in members {
            assignments.insert(sequences[i].0.clone(), label);
        }
    }

    let category_profiles = category_profile(ledger, &assignments);
    Ok(ClusterResult {
        assignments,
        k,
        linkage,
        category_profiles,
    })
}

/// Mean per-user total signed spend per category within each cluster.
/// Income (negative transfers) keeps its sign.
pub fn category_profile(
    ledger: &Ledger,
    assignments: &BTreeMap<UserId, usize>,
) -> BTreeMap<usize, BTreeMap<Category, f64>> {
    // Per-user totals.
    let mut user_totals: BTreeMap<UserId, BTreeMap<Category, f64>> = BTreeMap::new();
    for t in ledger.transactions() {
        let Some(account) = ledger.account(&t.account_id) else {
            continue;
        };
        let user = account.user_id.clone();
        if !assignments.contains_key(&user) {
            continue;
        }
        *user_totals
            .entry(user)
            .or_default()
            .entry(t.category)
            .or_insert(0.0) += t.amount.to_f64();
    }

    let mut cluster_members: BTreeMap<usize, usize> = BTreeMap::new();
    for &cluster in assignments.values() {
        *cluster_members.entry(cluster).or_insert(0) += 1;
    }

    let mut profiles: BTreeMap<usize, BTreeMap<Category, f64>> = BTreeMap::new();
    for (&cluster, _) in cluster_members.iter() {
        let mut profile: BTreeMap<Category, f64> = Category::ALL.iter().map(|&c| (c, 0.0)).collect();
        let members: Vec<&UserId> = assignments
            .iter()
            .filter(|(_, &c)| c == cluster)
            .map(|(u, _)| u)
            .collect();
        for user in &members {
            if let Some(totals) = user_totals.get(*user) {
                for (&cat, &sum) in totals {
                    *profile.entry(cat).or_insert(0.0) += sum;
                }
            }
        }
        for v in profile.values_mut() {
            *v /= members.len() as f64;
        }
        profiles.insert(cluster, profile);
    }
    profiles
}

use std::collections::{BTreeSet, HashSet};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{top_count, FrequencyTable, PassageHandle, QueryRecord};
use crate::error::{Error, Result};

/// How the trials of one experiment relate to each other. Every trial is
/// drawn without replacement.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialOverlap {
    /// Each trial is an independent draw; trials may share items.
    #[default]
    Independent,
    /// Trials are disjoint slices of a single shuffle.
    Disjoint,
}

/// The RNG for one trial: the experiment seed on a trial-specific stream.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Draws `trials` subsets of `n` items from `pool`.
pub fn sample_trials<T: Clone>(
    pool: &[T],
    n: usize,
    trials: usize,
    seed: u64,
    overlap: TrialOverlap,
) -> Result<Vec<Vec<T>>> {
    if n == 0 || trials == 0 {
        return Err(Error::InvalidArgument(
            "sample size and trial count must be >= 1".into(),
        ));
    }
    let needed = match overlap {
        TrialOverlap::Independent => n,
        TrialOverlap::Disjoint => n.saturating_mul(trials),
    };
    if needed > pool.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot draw {needed} items without replacement from a pool of {}",
            pool.len()
        )));
    }
    let pick = |idx: &[usize]| idx.iter().map(|&i| pool[i].clone()).collect::<Vec<_>>();
    Ok(match overlap {
        TrialOverlap::Independent => (0..trials)
            .map(|t| {
                let idx = index::sample(&mut trial_rng(seed, t as u64), pool.len(), n).into_vec();
                pick(&idx)
            })
            .collect(),
        TrialOverlap::Disjoint => {
            let idx = index::sample(&mut trial_rng(seed, 0), pool.len(), needed).into_vec();
            idx.chunks(n).map(pick).collect()
        }
    })
}

/// Queries whose target is among the top `x_percent` most-cited distinct
/// targets of the pool, ranked by `freq` (unseen targets count 0, ties by
/// handle). Pool order is preserved.
pub fn stratify_by_frequency(
    pool: &[QueryRecord],
    freq: &FrequencyTable,
    x_percent: f64,
) -> Result<Vec<QueryRecord>> {
    if !(x_percent > 0.0 && x_percent <= 100.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold must lie in (0, 100], got {x_percent}"
        )));
    }
    if pool.is_empty() {
        return Err(Error::EmptyInput("stratification pool"));
    }
    let distinct: BTreeSet<PassageHandle> = pool.iter().map(|q| q.target).collect();
    let mut ranked: Vec<PassageHandle> = distinct.into_iter().collect();
    ranked.sort_by(|a, b| freq.count(*b).cmp(&freq.count(*a)).then(a.cmp(b)));
    let keep = top_count(x_percent / 100.0, ranked.len()).max(1);
    let kept: HashSet<PassageHandle> = ranked[..keep].iter().copied().collect();
    Ok(pool
        .iter()
        .filter(|q| kept.contains(&q.target))
        .cloned()
        .collect())
}

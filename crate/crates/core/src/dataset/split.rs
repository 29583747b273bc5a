use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Typical subset sizes; sizes outside this range are reported, not rejected.
pub const MIN_SUBSET_SIZE: usize = 30;
pub const MAX_SUBSET_SIZE: usize = 60;

/// How an ordered image sequence is divided into subsets A and B.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplitPolicy {
    /// Inclusive `(first, last)` index ranges per subset.
    ExplicitRanges {
        a: Vec<(usize, usize)>,
        b: Vec<(usize, usize)>,
    },
    /// First half to A, second half to B. With a cap, each half is
    /// uniformly subsampled down to at most `cap` images.
    ContiguousHalves { cap: Option<usize> },
}

fn expand(ranges: &[(usize, usize)], n: usize, name: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for &(first, last) in ranges {
        if first > last {
            return Err(Error::Config(format!(
                "subset {name}: range [{first}, {last}] is reversed"
            )));
        }
        if last >= n {
            return Err(Error::Config(format!(
                "subset {name}: range [{first}, {last}] exceeds {n} images"
            )));
        }
        out.extend(first..=last);
    }
    let mut sorted = out.clone();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Config(format!("subset {name}: ranges overlap")));
    }
    Ok(out)
}

fn subsample(start: usize, len: usize, cap: Option<usize>) -> Vec<usize> {
    match cap {
        Some(cap) if cap > 0 && len > cap => (0..cap).map(|i| start + i * len / cap).collect(),
        _ => (start..start + len).collect(),
    }
}

/// Splits `n` ordered images into index lists for subsets A and B.
pub fn split_indices(n: usize, policy: &SplitPolicy) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 images to split, got {n}"
        )));
    }
    let (a, b) = match policy {
        SplitPolicy::ExplicitRanges { a, b } => {
            let a = expand(a, n, "A")?;
            let b = expand(b, n, "B")?;
            if let Some(i) = a.iter().find(|i| b.contains(i)) {
                return Err(Error::Config(format!(
                    "subsets A and B overlap at index {i}"
                )));
            }
            (a, b)
        }
        SplitPolicy::ContiguousHalves { cap } => {
            let half = n / 2;
            (subsample(0, half, *cap), subsample(half, n - half, *cap))
        }
    };
    if a.is_empty() || b.is_empty() {
        return Err(Error::Config("both subsets must be non-empty".into()));
    }
    for (name, len) in [("A", a.len()), ("B", b.len())] {
        if !(MIN_SUBSET_SIZE..=MAX_SUBSET_SIZE).contains(&len) {
            log::warn!(
                "subset {name} has {len} images, outside the usual {MIN_SUBSET_SIZE}-{MAX_SUBSET_SIZE}"
            );
        }
    }
    Ok((a, b))
}

/// Splits an ordered item list; order within each subset is preserved.
pub fn split_scene<T: Clone>(items: &[T], policy: &SplitPolicy) -> Result<(Vec<T>, Vec<T>)> {
    let (a, b) = split_indices(items.len(), policy)?;
    Ok((
        a.into_iter().map(|i| items[i].clone()).collect(),
        b.into_iter().map(|i| items[i].clone()).collect(),
    ))
}

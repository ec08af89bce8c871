use std::collections::BTreeSet;

use crate::Scalar;

/// Which iterates `x_n` to record. The initial (`n = 1`) and final iterates
/// are always recorded except under [`SnapshotPolicy::FinalOnly`].
#[derive(Clone, Debug, PartialEq)]
pub enum SnapshotPolicy {
    /// Roughly `count` log-spaced iteration indices.
    LogSpaced(usize),
    /// Exactly these iterate indices (values beyond the run are ignored).
    At(Vec<u64>),
    FinalOnly,
}

impl Default for SnapshotPolicy {
    fn default() -> Self {
        SnapshotPolicy::LogSpaced(200)
    }
}

impl SnapshotPolicy {
    /// Sorted, deduplicated iterate indices in `1..=last`.
    pub(crate) fn indices(&self, last: u64) -> Vec<u64> {
        match self {
            SnapshotPolicy::LogSpaced(count) => {
                let mut v = log_spaced(1, last, (*count).max(2));
                v.push(1);
                v.push(last);
                dedup(v)
            }
            SnapshotPolicy::At(points) => dedup(
                points
                    .iter()
                    .copied()
                    .filter(|&n| n >= 1 && n <= last)
                    .collect(),
            ),
            SnapshotPolicy::FinalOnly => vec![last],
        }
    }
}

fn dedup(v: Vec<u64>) -> Vec<u64> {
    v.into_iter().collect::<BTreeSet<_>>().into_iter().collect()
}

/// `count` integers spread evenly in log scale over `[start, end]`,
/// deduplicated.
pub fn log_spaced(start: u64, end: u64, count: usize) -> Vec<u64> {
    assert!(start >= 1 && end >= start);
    if count <= 1 || start == end {
        return vec![end];
    }
    let (a, b) = ((start as f64).ln(), (end as f64).ln());
    let v = (0..count)
        .map(|i| {
            let t = i as f64 / (count - 1) as f64;
            ((a + t * (b - a)).exp().round() as u64).clamp(start, end)
        })
        .collect();
    dedup(v)
}

/// State of the run at iterate `x_n`: the coordinate cost spent to reach
/// it, `‖x_n - x*‖`, its square and `γ_n`.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot<T> {
    pub n: u64,
    pub cumulative_cost: u64,
    pub dist: T,
    pub dist_sq: T,
    pub gamma: T,
}

/// Record of one optimizer run.
#[derive(Clone, Debug)]
pub struct RunTrace<T> {
    pub seed: u64,
    pub replicate: u64,
    /// Number of updates performed; the final iterate is `x_{iterations+1}`.
    pub iterations: u64,
    pub snapshots: Vec<Snapshot<T>>,
    pub initial_dist: T,
    pub final_iterate: Vec<T>,
    pub final_cost: u64,
    /// Seconds per update, main loop only.
    pub wall_time_per_iteration: f64,
}

impl<T: Scalar> RunTrace<T> {
    pub fn final_dist(&self) -> T {
        self.snapshots.last().map(|s| s.dist).unwrap_or_else(T::nan)
    }

    /// `‖x_final - x*‖ / ‖x_1 - x*‖`.
    pub fn final_relative_gap(&self) -> T {
        self.final_dist() / self.initial_dist
    }

    /// Equality of everything except the wall-clock measurement.
    pub fn same_path(&self, other: &Self) -> bool {
        self.seed == other.seed
            && self.replicate == other.replicate
            && self.iterations == other.iterations
            && self.snapshots == other.snapshots
            && self.initial_dist == other.initial_dist
            && self.final_iterate == other.final_iterate
            && self.final_cost == other.final_cost
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_spaced_includes_endpoints() {
        let v = log_spaced(10, 100_000, 20);
        assert_eq!(v.first(), Some(&10));
        assert_eq!(v.last(), Some(&100_000));
        assert!(v.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(log_spaced(1, 3, 50), vec![1, 2, 3]);
    }

    #[test]
    fn policy_indices() {
        let idx = SnapshotPolicy::LogSpaced(200).indices(1_000_001);
        assert!(idx.len() <= 202 && idx.len() > 150);
        assert_eq!(idx[0], 1);
        assert_eq!(*idx.last().unwrap(), 1_000_001);
        assert_eq!(
            SnapshotPolicy::At(vec![5, 0, 3, 99, 3]).indices(10),
            vec![3, 5]
        );
        assert_eq!(SnapshotPolicy::FinalOnly.indices(7), vec![7]);
    }
}

//! Donor/receiver classification and pairing schedules.

use std::fmt;

/// Role of a worker relative to the global fair share.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Donor,
    Receiver,
    Neutral,
}

/// Mean active count per worker.
pub fn fair_share(counts: &[usize]) -> f64 {
    if counts.is_empty() {
        return 0.0;
    }
    counts.iter().sum::<usize>() as f64 / counts.len() as f64
}

/// `(floor, ceil)` of the fair share, computed in integers.
pub fn fair_share_bounds(counts: &[usize]) -> (usize, usize) {
    let p = counts.len().max(1);
    let total: usize = counts.iter().sum();
    (total / p, total.div_ceil(p))
}

/// Donor iff `count > ceil(fair)`, receiver iff `count < floor(fair)`.
pub fn roles(counts: &[usize]) -> Vec<Role> {
    let (lo, hi) = fair_share_bounds(counts);
    counts
        .iter()
        .map(|&c| {
            if c > hi {
                Role::Donor
            } else if c < lo {
                Role::Receiver
            } else {
                Role::Neutral
            }
        })
        .collect()
}

/// Pairs for one round of the circle method: rank 0 stays fixed and the
/// others rotate. With odd `p` a phantom rank is added and whoever meets it
/// sits out. Over `p - 1` (even) or `p` (odd) consecutive rounds every
/// unordered pair meets exactly once.
pub fn round_robin_pairs(p: usize, round: u64) -> Vec<(usize, usize)> {
    if p < 2 {
        return Vec::new();
    }
    let n = if p % 2 == 0 { p } else { p + 1 };
    let r = (round % (n as u64 - 1)) as usize;
    let slot = |i: usize| if i == 0 { 0 } else { 1 + (i - 1 + r + 1) % (n - 1) };
    (0..n / 2)
        .map(|i| (slot(i), slot(n - 1 - i)))
        .filter(|&(a, b)| a < p && b < p)
        .map(|(a, b)| (a.min(b), a.max(b)))
        .collect()
}

/// Regions to move between one pair in one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlannedTransfer {
    pub from: usize,
    pub to: usize,
    pub count: usize,
}

/// Decides the transfer for `pair`: only a donor paired with a receiver
/// moves `min(cap, excess, deficit)` regions, where excess and deficit are
/// measured against the ceiling and floor of the fair share.
pub fn plan_transfer(pair: (usize, usize), counts: &[usize], cap: usize) -> Option<PlannedTransfer> {
    let (a, b) = pair;
    let r = roles(counts);
    let (from, to) = match (r[a], r[b]) {
        (Role::Donor, Role::Receiver) => (a, b),
        (Role::Receiver, Role::Donor) => (b, a),
        _ => return None,
    };
    let (lo, hi) = fair_share_bounds(counts);
    let excess = counts[from] - hi;
    let deficit = lo - counts[to];
    let count = cap.min(excess).min(deficit);
    (count > 0).then_some(PlannedTransfer { from, to, count })
}

/// Strategy deciding which workers exchange regions after each split.
///
/// Plans must be a pure function of the arguments: every worker computes the
/// same plan independently from the reduced metadata.
pub trait RedistributionPolicy: fmt::Debug + Send + Sync {
    fn name(&self) -> &'static str;
    fn plan(&self, round: u64, counts: &[usize], cap: usize) -> Vec<PlannedTransfer>;
}

/// Cyclic pairing from [`round_robin_pairs`], one partner per round.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RoundRobin;

impl RedistributionPolicy for RoundRobin {
    fn name(&self) -> &'static str {
        "round_robin"
    }

    fn plan(&self, round: u64, counts: &[usize], cap: usize) -> Vec<PlannedTransfer> {
        round_robin_pairs(counts.len(), round)
            .into_iter()
            .filter_map(|pair| plan_transfer(pair, counts, cap))
            .collect()
    }
}

/// Never moves anything; useful as a baseline.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NoRedistribution;

impl RedistributionPolicy for NoRedistribution {
    fn name(&self) -> &'static str {
        "none"
    }

    fn plan(&self, _round: u64, _counts: &[usize], _cap: usize) -> Vec<PlannedTransfer> {
        Vec::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn fair_share_examples() {
        assert_eq!(fair_share(&[100, 0, 0, 0]), 25.0);
        assert_eq!(
            roles(&[100, 0, 0, 0]),
            vec![Role::Donor, Role::Receiver, Role::Receiver, Role::Receiver]
        );
        assert!(roles(&[25; 4]).iter().all(|&r| r == Role::Neutral));
        assert_eq!(fair_share(&[7, 5, 5, 3]), 5.0);
        assert_eq!(
            roles(&[7, 5, 5, 3]),
            vec![Role::Donor, Role::Neutral, Role::Neutral, Role::Receiver]
        );
        // 11 / 4 = 2.75: only counts above 3 donate, below 2 receive
        assert_eq!(
            roles(&[4, 3, 2, 2]),
            vec![Role::Donor, Role::Neutral, Role::Neutral, Role::Neutral]
        );
    }

    #[test]
    fn four_rank_schedule() {
        assert_eq!(round_robin_pairs(4, 0), vec![(0, 1), (2, 3)]);
        assert_eq!(round_robin_pairs(4, 1), vec![(0, 2), (1, 3)]);
        assert_eq!(round_robin_pairs(4, 2), vec![(0, 3), (1, 2)]);
        assert_eq!(round_robin_pairs(4, 3), round_robin_pairs(4, 0));
        assert_eq!(round_robin_pairs(2, 17), vec![(0, 1)]);
        assert!(round_robin_pairs(1, 0).is_empty());
    }

    #[test]
    fn schedules_are_complete_and_disjoint() {
        for p in 2..=13 {
            let rounds = if p % 2 == 0 { p - 1 } else { p };
            let mut seen = HashSet::new();
            for r in 0..rounds as u64 {
                let pairs = round_robin_pairs(p, r);
                assert_eq!(pairs.len(), p / 2);
                let mut ranks = HashSet::new();
                for &(a, b) in &pairs {
                    assert!(a < b && b < p);
                    assert!(ranks.insert(a) && ranks.insert(b), "p={p} round {r}");
                    assert!(seen.insert((a, b)), "pair ({a},{b}) repeated for p={p}");
                }
            }
            assert_eq!(seen.len(), p * (p - 1) / 2);
        }
    }

    #[test]
    fn transfer_sizes() {
        // excess 600, deficit 600
        let counts = [1250, 50, 650, 650];
        assert_eq!(
            plan_transfer((0, 1), &counts, 512),
            Some(PlannedTransfer { from: 0, to: 1, count: 512 })
        );
        assert_eq!(plan_transfer((1, 0), &counts, 512).unwrap().from, 0);
        // donor excess 3, receiver deficit 10
        let counts = [13, 0, 12, 15];
        assert_eq!(plan_transfer((0, 1), &counts, 512).unwrap().count, 3);
    }

    #[test]
    fn like_roles_do_not_trade() {
        let counts = [40, 40, 0, 0];
        assert_eq!(plan_transfer((0, 1), &counts, 512), None);
        assert_eq!(plan_transfer((2, 3), &counts, 512), None);
        let counts = [7, 5, 5, 3];
        assert_eq!(plan_transfer((0, 1), &counts, 512), None);
        assert!(plan_transfer((0, 3), &counts, 512).is_some());
    }

    #[test]
    fn round_robin_policy_uses_the_schedule() {
        let plans = RoundRobin.plan(0, &[100, 0, 0, 0], 10);
        assert_eq!(plans, vec![PlannedTransfer { from: 0, to: 1, count: 10 }]);
        assert!(NoRedistribution.plan(0, &[100, 0], 10).is_empty());
    }
}

//! Exhaustive-search ground truth for small instances.
//!
//! Nothing here calls into the allocator or planner; results are used to check them.

use std::collections::{HashSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Config;
use crate::model::{DatacenterState, Placement, Points, ResourceVector};

/// Largest instance the oracle will enumerate.
pub const ENUMERATION_LIMIT: usize = 12;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleResult {
    pub optimum: usize,
    /// Bin index per item. Bins are numbered in order of first use.
    pub witness: Vec<usize>,
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("instance has {0} items, above the enumeration limit of {ENUMERATION_LIMIT}")]
    InstanceTooLarge(usize),
    #[error("item {0} does not fit an empty bin")]
    InfeasibleItem(usize),
    #[error("no move sequence releases the requested number of servers")]
    Infeasible,
}

fn limits(capacity: &[Points], threshold: Points) -> Vec<Points> {
    capacity.iter().map(|c| c * threshold / 100).collect()
}

struct BinSearch<'a> {
    items: &'a [ResourceVector],
    limits: Vec<Points>,
    bins: usize,
    loads: Vec<Vec<Points>>,
    assignment: Vec<usize>,
    /// Remaining demand per dimension from item `i` onwards.
    suffix: Vec<Vec<Points>>,
}

impl BinSearch<'_> {
    fn dfs(&mut self, i: usize, opened: usize) -> bool {
        if i == self.items.len() {
            return true;
        }
        let dims = self.limits.len();
        // Remaining items must fit into spare room of opened bins plus unopened bins.
        for d in 0..dims {
            let spare: Points = self.loads[..opened].iter().map(|l| self.limits[d] - l[d]).sum::<Points>()
                + (self.bins - opened) as Points * self.limits[d];
            if self.suffix[i][d] > spare {
                return false;
            }
        }
        let item = &self.items[i];
        let reach = if opened < self.bins { opened + 1 } else { opened };
        for b in 0..reach {
            if (0..dims).all(|d| self.loads[b][d] + item[d] <= self.limits[d]) {
                for d in 0..dims {
                    self.loads[b][d] += item[d];
                }
                self.assignment[i] = b;
                let next_opened = opened.max(b + 1);
                if self.dfs(i + 1, next_opened) {
                    return true;
                }
                for d in 0..dims {
                    self.loads[b][d] -= item[d];
                }
            }
        }
        false
    }
}

/// Minimum number of identical bins that hold every demand under `threshold` percent
/// of `capacity`, found by enumerating set partitions.
///
/// The witness is the lexicographically first optimal assignment among those that
/// number bins in order of first use.
pub fn optimal_bin_count(demands: &[ResourceVector], capacity: &ResourceVector, threshold: Points) -> Result<OracleResult, OracleError> {
    if demands.len() > ENUMERATION_LIMIT {
        return Err(OracleError::InstanceTooLarge(demands.len()));
    }
    let limits = limits(capacity.as_slice(), threshold);
    let dims = limits.len();
    for (i, d) in demands.iter().enumerate() {
        if (0..dims).any(|k| d[k] > limits[k]) {
            return Err(OracleError::InfeasibleItem(i));
        }
    }
    if demands.is_empty() {
        return Ok(OracleResult {
            optimum: 0,
            witness: Vec::new(),
        });
    }

    let mut suffix = vec![vec![0; dims]; demands.len() + 1];
    for i in (0..demands.len()).rev() {
        for k in 0..dims {
            suffix[i][k] = suffix[i + 1][k] + demands[i][k];
        }
    }
    let lower = (0..dims)
        .filter(|&k| limits[k] > 0)
        .map(|k| suffix[0][k].div_ceil(limits[k]) as usize)
        .max()
        .unwrap_or(1)
        .max(1);

    for bins in lower..=demands.len() {
        let mut search = BinSearch {
            items: demands,
            limits: limits.clone(),
            bins,
            loads: vec![vec![0; dims]; bins],
            assignment: vec![0; demands.len()],
            suffix: suffix.clone(),
        };
        if search.dfs(0, 0) {
            return Ok(OracleResult {
                optimum: bins,
                witness: search.assignment,
            });
        }
    }
    unreachable!("one bin per item always fits")
}

/// Fewest single-task moves that leave at least `k` originally occupied servers empty,
/// with every intermediate state within `config.post_max`. Breadth-first over placements.
pub fn min_migrations_to_release(state: &DatacenterState, k: usize, config: &Config) -> Result<usize, OracleError> {
    let placed: Vec<(usize, &ResourceVector)> = state
        .tasks()
        .filter_map(|t| match &t.placement {
            Placement::On(sid) => state.server_index(sid).map(|i| (i, &t.demand)),
            Placement::Waiting => None,
        })
        .collect();
    if placed.len() > ENUMERATION_LIMIT {
        return Err(OracleError::InstanceTooLarge(placed.len()));
    }
    if k == 0 {
        return Ok(0);
    }

    let n = state.servers().len();
    // placements are stored as u8 server indices
    if n > usize::from(u8::MAX) + 1 {
        return Err(OracleError::InstanceTooLarge(n));
    }
    let dims = state.dims();
    let caps: Vec<Vec<Points>> = state
        .servers()
        .iter()
        .map(|s| limits(s.capacity.as_slice(), config.post_max))
        .collect();
    let start: Vec<u8> = placed.iter().map(|(s, _)| *s as u8).collect();
    let originally_used: Vec<bool> = (0..n).map(|s| start.contains(&(s as u8))).collect();
    if originally_used.iter().filter(|&&u| u).count() < k {
        return Err(OracleError::Infeasible);
    }

    let released = |asg: &[u8]| (0..n).filter(|&s| originally_used[s] && !asg.contains(&(s as u8))).count();
    let loads = |asg: &[u8]| {
        let mut l = vec![vec![0 as Points; dims]; n];
        for (t, &s) in asg.iter().enumerate() {
            for (slot, v) in l[s as usize].iter_mut().zip(placed[t].1.iter()) {
                *slot += v;
            }
        }
        l
    };

    let mut seen = HashSet::from([start.clone()]);
    let mut queue = VecDeque::from([(start, 0usize)]);
    while let Some((asg, depth)) = queue.pop_front() {
        if released(&asg) >= k {
            return Ok(depth);
        }
        let l = loads(&asg);
        for t in 0..asg.len() {
            let from = asg[t] as usize;
            let demand = placed[t].1;
            for to in 0..n {
                if to == from || (0..dims).any(|d| l[to][d] + demand[d] > caps[to][d]) {
                    continue;
                }
                let mut next = asg.clone();
                next[t] = to as u8;
                if seen.insert(next.clone()) {
                    queue.push_back((next, depth + 1));
                }
            }
        }
    }
    Err(OracleError::Infeasible)
}

//! Seeded random scenarios.
//!
//! Each server receives a total load drawn uniformly from a range at a fixed
//! granularity, split over a fixed number of task slots. The split is uniform over all
//! compositions of the total into non-negative parts (stars and bars): choosing which
//! `slots - 1` of the `units + slots - 1` positions hold a bar picks one composition.
//! Empty slots do not become tasks.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{DatacenterState, Points, ResourceVector, DEFAULT_CAPACITY};

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum WorkloadError {
    #[error("total {total} is not a multiple of granularity {granularity}")]
    InfeasibleTotal { total: Points, granularity: Points },
    #[error("a server load needs at least one slot")]
    NoSlots,
    #[error("granularity must be positive")]
    ZeroGranularity,
    #[error("total range ({lo}, {hi}) must satisfy lo <= hi <= pre_max ({pre_max}) and be multiples of {granularity}")]
    Range {
        lo: Points,
        hi: Points,
        pre_max: Points,
        granularity: Points,
    },
    #[error("dimension count must be at least 1")]
    NoDimensions,
}

/// Parameters of a generated scenario.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadSpec {
    pub n_servers: usize,
    pub slots_per_server: usize,
    /// Inclusive range of per-server totals, in points.
    pub total_range: (Points, Points),
    pub dims: usize,
    pub granularity: Points,
    pub seed: u64,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        Self {
            n_servers: 4,
            slots_per_server: 5,
            total_range: (40, 70),
            dims: 2,
            granularity: 10,
            seed: 0,
        }
    }
}

impl WorkloadSpec {
    pub fn validate(&self, pre_max: Points) -> Result<(), WorkloadError> {
        let (lo, hi) = self.total_range;
        if self.slots_per_server == 0 {
            return Err(WorkloadError::NoSlots);
        }
        if self.granularity == 0 {
            return Err(WorkloadError::ZeroGranularity);
        }
        if self.dims == 0 {
            return Err(WorkloadError::NoDimensions);
        }
        let limit = DEFAULT_CAPACITY * pre_max / 100;
        if lo > hi || hi > limit || lo % self.granularity != 0 || hi % self.granularity != 0 {
            return Err(WorkloadError::Range {
                lo,
                hi,
                pre_max,
                granularity: self.granularity,
            });
        }
        Ok(())
    }
}

/// The generator for stream `stream` of `seed`. Streams never overlap, so batch members
/// can be generated independently and in any order.
pub fn scenario_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Splits `total` into exactly `slots` non-negative multiples of `granularity`.
pub fn generate_server_load<R: Rng + ?Sized>(
    total: Points,
    slots: usize,
    granularity: Points,
    rng: &mut R,
) -> Result<Vec<Points>, WorkloadError> {
    if slots == 0 {
        return Err(WorkloadError::NoSlots);
    }
    if granularity == 0 {
        return Err(WorkloadError::ZeroGranularity);
    }
    if !total.is_multiple_of(granularity) {
        return Err(WorkloadError::InfeasibleTotal { total, granularity });
    }
    let units = (total / granularity) as usize;
    let positions = units + slots - 1;
    let mut bars = index::sample(rng, positions, slots - 1).into_vec();
    bars.sort_unstable();

    let mut parts = Vec::with_capacity(slots);
    let mut prev = 0usize;
    for &b in &bars {
        parts.push((b - prev) as Points * granularity);
        prev = b + 1;
    }
    parts.push((positions - prev) as Points * granularity);
    Ok(parts)
}

/// Draws a per-server total uniformly from the range's granularity steps.
pub fn draw_total<R: Rng + ?Sized>(range: (Points, Points), granularity: Points, rng: &mut R) -> Points {
    let (lo, hi) = range;
    let steps = (hi - lo) / granularity;
    lo + rng.gen_range(0..=steps) * granularity
}

/// Builds a state from `spec`, using generator stream 0 of `spec.seed`.
pub fn generate_scenario(spec: &WorkloadSpec) -> DatacenterState {
    generate_scenario_stream(spec, 0)
}

/// Builds a state from `spec` using stream `stream` of `spec.seed`.
///
/// Servers are named `S1..Sn` with capacity 100 per dimension; tasks are named after
/// their server and slot, e.g. `s03t2`. Panics on a spec that fails
/// [`WorkloadSpec::validate`] for a granularity-aligned range.
pub fn generate_scenario_stream(spec: &WorkloadSpec, stream: u64) -> DatacenterState {
    let mut rng = scenario_rng(spec.seed, stream);
    let mut state = DatacenterState::new(spec.dims);
    for s in 0..spec.n_servers {
        state = state.with_server(format!("S{}", s + 1), ResourceVector::splat(spec.dims, DEFAULT_CAPACITY));
    }
    for s in 0..spec.n_servers {
        let per_dim: Vec<Vec<Points>> = (0..spec.dims)
            .map(|_| {
                let total = draw_total(spec.total_range, spec.granularity, &mut rng);
                generate_server_load(total, spec.slots_per_server, spec.granularity, &mut rng)
                    .expect("validated spec yields aligned totals")
            })
            .collect();
        let server = format!("S{}", s + 1);
        for slot in 0..spec.slots_per_server {
            let demand: Vec<Points> = per_dim.iter().map(|d| d[slot]).collect();
            if demand.iter().all(|&v| v == 0) {
                continue;
            }
            state = state.with_task(format!("s{:02}t{}", s + 1, slot + 1), demand, Some(&server));
        }
    }
    state
}

//! Seeded UAV data-collection instances.
//!
//! Sensor nodes are sampled uniformly in a 100×100 field; the UAV flies a
//! closed trajectory visiting every node and the objective is its length.

use rand::RngCore;

use super::{Payload, ProblemError, ProblemInstance, ProblemKind, Rounding};
use crate::rng::{splitmix, Stream};

pub const FIELD_SIZE: f64 = 100.0;

fn unit(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Instance named `uav-n{node_count}-s{seed}`; identical seeds give identical
/// coordinates.
pub fn generate_uav_instance(node_count: usize, seed: u64) -> Result<ProblemInstance, ProblemError> {
    if node_count < 2 {
        return Err(ProblemError::Invalid(format!("UAV instance needs at least 2 nodes, got {node_count}")));
    }
    let mut rng = splitmix(seed, Stream::Instance);
    let coords = (0..node_count)
        .map(|_| {
            let x = unit(rng.next_u64()) * FIELD_SIZE;
            let y = unit(rng.next_u64()) * FIELD_SIZE;
            (x, y)
        })
        .collect();
    ProblemInstance::new(
        ProblemKind::Uav,
        format!("uav-n{node_count}-s{seed}"),
        Payload::Tour { coords, rounding: Rounding::Exact },
    )
}

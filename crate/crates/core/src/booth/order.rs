//! Flip-minimizing execution order for a batch.
//!
//! The solver is greedy nearest-neighbor seeded at the lane with the least
//! total bit variation; whenever the greedy tour ends up costlier than
//! plain arrival order, arrival order wins, so ordering can never increase
//! cost.

use super::batch::BitVariationMatrix;
use super::{flip_table, Radix};

/// Radix-specific pairwise flip costs over the batch lanes.
pub fn flip_cost_matrix(activations: &[i8; 8], radix: Radix) -> [[u32; 8]; 8] {
    let table = flip_table(radix);
    let mut m = [[0u32; 8]; 8];
    for i in 0..8 {
        for j in i + 1..8 {
            let c = table.cost(activations[i] as u8, activations[j] as u8);
            m[i][j] = c;
            m[j][i] = c;
        }
    }
    m
}

/// Sum of consecutive-pair costs along an order.
pub fn path_cost(order: &[usize], costs: &[[u32; 8]; 8]) -> u32 {
    order.windows(2).map(|w| costs[w[0]][w[1]]).sum()
}

/// Valid lanes in arrival order.
pub fn arrival_order(valid_mask: &[bool; 8]) -> Vec<usize> {
    (0..8).filter(|&i| valid_mask[i]).collect()
}

/// Execution order over the valid lanes minimizing consecutive digit
/// flips under the given radix. Fewer than two valid lanes execute in
/// arrival order.
pub fn order_batch(
    bvm: &BitVariationMatrix,
    activations: &[i8; 8],
    radix: Radix,
) -> Vec<usize> {
    let lanes = arrival_order(&bvm.valid_mask);
    if lanes.len() < 2 {
        return lanes;
    }
    let costs = flip_cost_matrix(activations, radix);

    // Seed at the lane with minimal total BV; ties break on lane index.
    let start = *lanes
        .iter()
        .min_by_key(|&&i| {
            let total: u32 = lanes
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| u32::from(bvm.bv[i][j]))
                .sum();
            (total, i)
        })
        .expect("at least two lanes");

    let mut order = Vec::with_capacity(lanes.len());
    let mut used = [false; 8];
    order.push(start);
    used[start] = true;
    while order.len() < lanes.len() {
        let last = *order.last().unwrap();
        let next = *lanes
            .iter()
            .filter(|&&j| !used[j])
            .min_by_key(|&&j| (costs[last][j], j))
            .unwrap();
        order.push(next);
        used[next] = true;
    }

    if path_cost(&order, &costs) <= path_cost(&lanes, &costs) {
        order
    } else {
        lanes
    }
}

//! Carving an MVM into tile dispatches, interleaving weights across VS-unit
//! banks, and executing the tiled computation functionally.
//!
//! Lane mapping for a block with width `k_used` (`g = k_used / k_base` row
//! groups, `C = total_macs / k_used` columns per cycle): VS unit `u` serves
//! row group `u / C` and column `u % C` of the current pass, and its lane `l`
//! multiplies row `row_start + (u / C) * k_base + l`. Units of one row group
//! are contiguous, so the Add Reduce subtree at level `log2(N) - log2(g)`
//! produces exactly one K-wide partial-sum vector per row group.

use serde::{Deserialize, Serialize};

use crate::arch::{derive_tiles, HardwareConfig, TileConfig};
use crate::error::{Result, SharpError};
use crate::lstm::Matrix;
use crate::numeric::{NumericPolicy, Partial};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowBlock {
    pub row_start: usize,
    pub rows_covered: usize,
    pub k_used: usize,
    pub col_passes: usize,
    pub wasted_lane_cycles: u64,
}

impl RowBlock {
    pub fn cols_per_cycle(&self, total_macs: usize) -> usize {
        total_macs / self.k_used
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DispatchPlan {
    pub total_rows: usize,
    pub total_cols: usize,
    pub total_macs: usize,
    pub k_base: usize,
    pub blocks: Vec<RowBlock>,
    pub dispatch_cycles: u64,
    pub useful_macs: u64,
    pub wasted_macs: u64,
}

pub fn plan_mvm(
    total_rows: usize,
    total_cols: usize,
    hw: &HardwareConfig,
    tile: &TileConfig,
    padding_reconfig: bool,
) -> DispatchPlan {
    assert!(total_rows >= 1 && total_cols >= 1, "empty MVM");
    let macs = hw.total_macs;
    let widths: Vec<usize> = derive_tiles(hw).iter().map(|t| t.k_eff).collect();
    let mut blocks = Vec::with_capacity(total_rows.div_ceil(tile.k_eff));
    let mut row = 0;
    while row < total_rows {
        let rows = tile.k_eff.min(total_rows - row);
        let passes = |k: usize| total_cols.div_ceil(macs / k);
        let k_used = if padding_reconfig && rows < tile.k_eff {
            widths
                .iter()
                .copied()
                .find(|&w| w >= rows && w <= tile.k_eff)
                .filter(|&w| passes(w) < passes(tile.k_eff))
                .unwrap_or(tile.k_eff)
        } else {
            tile.k_eff
        };
        let col_passes = passes(k_used);
        blocks.push(RowBlock {
            row_start: row,
            rows_covered: rows,
            k_used,
            col_passes,
            wasted_lane_cycles: (col_passes * macs - rows * total_cols) as u64,
        });
        row += rows;
    }
    let dispatch_cycles = blocks.iter().map(|b| b.col_passes as u64).sum();
    let useful_macs = (total_rows * total_cols) as u64;
    DispatchPlan {
        total_rows,
        total_cols,
        total_macs: macs,
        k_base: hw.k_base,
        wasted_macs: blocks.iter().map(|b| b.wasted_lane_cycles).sum(),
        blocks,
        dispatch_cycles,
        useful_macs,
    }
}

impl DispatchPlan {
    pub fn n_units(&self) -> usize {
        self.total_macs / self.k_base
    }

    /// Matrix coordinate of (block, pass, unit, lane), or `None` for a padding lane.
    pub fn lane_coord(
        &self,
        block: &RowBlock,
        pass: usize,
        unit: usize,
        lane: usize,
    ) -> Option<(usize, usize)> {
        let cpc = block.cols_per_cycle(self.total_macs);
        let group = unit / cpc;
        let local_row = group * self.k_base + lane;
        let col = pass * cpc + unit % cpc;
        (local_row < block.rows_covered && col < self.total_cols)
            .then_some((block.row_start + local_row, col))
    }

    /// (block index, pass) for every dispatch cycle, in dispatch order.
    pub fn cycle_map(&self) -> Vec<(usize, usize)> {
        self.blocks
            .iter()
            .enumerate()
            .flat_map(|(b, blk)| (0..blk.col_passes).map(move |p| (b, p)))
            .collect()
    }
}

/// Weights arranged per VS-unit bank in dispatch order; `None` marks padding.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightLayout {
    pub n_banks: usize,
    pub k_base: usize,
    pub n_cycles: usize,
    words: Vec<Option<f64>>,
}

impl WeightLayout {
    #[inline]
    pub fn word(&self, bank: usize, cycle: usize) -> &[Option<f64>] {
        let base = (bank * self.n_cycles + cycle) * self.k_base;
        &self.words[base..base + self.k_base]
    }

    pub fn occupied_slots(&self) -> usize {
        self.words.iter().filter(|w| w.is_some()).count()
    }
}

pub fn interleave_weights(w: &Matrix, plan: &DispatchPlan) -> Result<WeightLayout> {
    if w.rows != plan.total_rows || w.cols != plan.total_cols {
        return Err(SharpError::Dimension {
            what: "weight matrix vs plan",
            expected: plan.total_rows * plan.total_cols,
            got: w.rows * w.cols,
        });
    }
    let n_banks = plan.n_units();
    let cycles = plan.cycle_map();
    let n_cycles = cycles.len();
    let mut words = vec![None; n_banks * n_cycles * plan.k_base];
    for (c, &(b, pass)) in cycles.iter().enumerate() {
        let blk = &plan.blocks[b];
        for u in 0..n_banks {
            for l in 0..plan.k_base {
                if let Some((r, col)) = plan.lane_coord(blk, pass, u, l) {
                    words[(u * n_cycles + c) * plan.k_base + l] = Some(w.get(r, col));
                }
            }
        }
    }
    Ok(WeightLayout {
        n_banks,
        k_base: plan.k_base,
        n_cycles,
        words,
    })
}

/// Replays the layout in dispatch order to rebuild the dense matrix.
pub fn deinterleave(layout: &WeightLayout, plan: &DispatchPlan) -> Matrix {
    let mut m = Matrix::zeros(plan.total_rows, plan.total_cols);
    for (c, &(b, pass)) in plan.cycle_map().iter().enumerate() {
        let blk = &plan.blocks[b];
        for u in 0..layout.n_banks {
            for (l, v) in layout.word(u, c).iter().enumerate() {
                if let (Some(v), Some((r, col))) = (v, plan.lane_coord(blk, pass, u, l)) {
                    m.set(r, col, *v);
                }
            }
        }
    }
    m
}

/// Runs one row block: VS-lane products, per-row-group tree reduction, and
/// accumulation in pass order into `acc` (indexed by row within the block).
pub fn execute_block(
    plan: &DispatchPlan,
    layout: &WeightLayout,
    block_index: usize,
    x: &[f64],
    policy: &NumericPolicy,
    acc: &mut [Partial],
) {
    let blk = &plan.blocks[block_index];
    let first_cycle: usize = plan.blocks[..block_index]
        .iter()
        .map(|b| b.col_passes)
        .sum();
    let cpc = blk.cols_per_cycle(plan.total_macs);
    let groups = blk.k_used / plan.k_base;
    let mut leaves: Vec<Option<Partial>> = Vec::with_capacity(cpc);
    for pass in 0..blk.col_passes {
        let cycle = first_cycle + pass;
        for g in 0..groups {
            for lane in 0..plan.k_base {
                let local_row = g * plan.k_base + lane;
                if local_row >= blk.rows_covered {
                    break;
                }
                leaves.clear();
                for u in g * cpc..(g + 1) * cpc {
                    let col = pass * cpc + u % cpc;
                    leaves.push(layout.word(u, cycle)[lane].map(|wv| {
                        let mut p = policy.zero();
                        policy.add_product(&mut p, wv, x[col]);
                        p
                    }));
                }
                if let Some(sum) = tree_reduce(&mut leaves, policy) {
                    policy.merge(&mut acc[local_row], &sum);
                }
            }
        }
    }
}

/// Pairwise binary-tree reduction, one level at a time.
fn tree_reduce(level: &mut Vec<Option<Partial>>, policy: &NumericPolicy) -> Option<Partial> {
    while level.len() > 1 {
        let half = level.len().div_ceil(2);
        for i in 0..half {
            let a = level[2 * i].take();
            let b = level.get_mut(2 * i + 1).and_then(Option::take);
            level[i] = match (a, b) {
                (Some(mut a), Some(b)) => {
                    policy.merge(&mut a, &b);
                    Some(a)
                }
                (a, b) => a.or(b),
            };
        }
        level.truncate(half);
    }
    level.pop().flatten()
}

/// Tiled W x with zero-initialized accumulators.
pub fn functional_tiled_mvm(
    plan: &DispatchPlan,
    layout: &WeightLayout,
    x: &[f64],
    policy: &NumericPolicy,
) -> Result<Vec<f64>> {
    if x.len() != plan.total_cols {
        return Err(SharpError::Dimension {
            what: "vector length",
            expected: plan.total_cols,
            got: x.len(),
        });
    }
    let mut out = Vec::with_capacity(plan.total_rows);
    for (b, blk) in plan.blocks.iter().enumerate() {
        let mut acc = vec![policy.zero(); blk.rows_covered];
        execute_block(plan, layout, b, x, policy, &mut acc);
        out.extend(acc.iter().map(Partial::value));
    }
    Ok(out)
}

/// Dense W x under `policy`, summing in natural column order.
pub fn dense_mvm(w: &Matrix, x: &[f64], policy: &NumericPolicy) -> Vec<f64> {
    (0..w.rows)
        .map(|r| {
            let mut acc = policy.zero();
            for (wv, xv) in w.row(r).iter().zip(x) {
                policy.add_product(&mut acc, *wv, *xv);
            }
            acc.value()
        })
        .collect()
}

/// One (bank, cycle, lane) slot of a layout dump.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub bank: usize,
    pub cycle: usize,
    pub lane: usize,
    pub row: Option<usize>,
    pub col: Option<usize>,
}

pub fn layout_records(plan: &DispatchPlan) -> Vec<SlotRecord> {
    let mut out = Vec::new();
    for (c, &(b, pass)) in plan.cycle_map().iter().enumerate() {
        let blk = &plan.blocks[b];
        for u in 0..plan.n_units() {
            for l in 0..plan.k_base {
                let coord = plan.lane_coord(blk, pass, u, l);
                out.push(SlotRecord {
                    bank: u,
                    cycle: c,
                    lane: l,
                    row: coord.map(|p| p.0),
                    col: coord.map(|p| p.1),
                });
            }
        }
    }
    out
}

/// CSV dump `bank,cycle,lane,row,col`; padding slots leave row/col empty.
pub fn layout_csv(plan: &DispatchPlan) -> String {
    let mut s = String::from("bank,cycle,lane,row,col\n");
    for r in layout_records(plan) {
        let opt = |v: Option<usize>| v.map(|v| v.to_string()).unwrap_or_default();
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            r.bank,
            r.cycle,
            r.lane,
            opt(r.row),
            opt(r.col)
        ));
    }
    s
}

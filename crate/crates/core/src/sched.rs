//! Chiplet-aware grid scheduling: the two-step block remap (XCD chunking
//! followed by windowed traversal) plus the hardware's round-robin XCD
//! placement.

use serde::Serialize;

use crate::error::{Error, Result};

/// Launch grid paired with the GEMM problem it covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridConfig {
    pub g_x: u32,
    pub g_y: u32,
    pub g_z: u32,
    pub block_m: u32,
    pub block_n: u32,
    pub m: u32,
    pub n: u32,
}

impl GridConfig {
    /// Grid covering an m x n output with block_m x block_n tiles; x runs
    /// along columns (fastest), y along rows.
    pub fn for_problem(m: u32, n: u32, block_m: u32, block_n: u32, g_z: u32) -> Result<Self> {
        if block_m == 0 || block_n == 0 || g_z == 0 {
            return Err(Error::InvalidInput("zero-sized block or batch".to_string()));
        }
        if !m.is_multiple_of(block_m) || !n.is_multiple_of(block_n) {
            return Err(Error::RaggedGrid(format!(
                "{m}x{n} output does not tile evenly by {block_m}x{block_n} blocks"
            )));
        }
        Ok(Self {
            g_x: n / block_n,
            g_y: m / block_m,
            g_z,
            block_m,
            block_n,
            m,
            n,
        })
    }

    pub fn num_rows(&self) -> u32 {
        self.m / self.block_m
    }

    pub fn num_cols(&self) -> u32 {
        self.n / self.block_n
    }

    pub fn blocks_per_batch(&self) -> u32 {
        self.g_x * self.g_y
    }

    fn validate(&self) -> Result<()> {
        if self.num_rows() * self.num_cols() != self.blocks_per_batch() {
            return Err(Error::RaggedGrid(format!(
                "grid {}x{} does not match {}x{} output tiles",
                self.g_x,
                self.g_y,
                self.num_rows(),
                self.num_cols()
            )));
        }
        Ok(())
    }
}

/// Remap parameters: window height W, chunk size C, XCD count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SwizzleParams {
    pub window_h: u32,
    pub chunk: u32,
    pub n_xcd: u32,
    /// The tail test as written is `xy > limit` (strict); setting this flag
    /// switches to `xy >= limit`. xy == limit is a fixed point of the chunk
    /// remap, so the resulting schedule is identical either way.
    pub tail_inclusive: bool,
}

impl SwizzleParams {
    pub fn new(window_h: u32, chunk: u32, n_xcd: u32) -> Result<Self> {
        if window_h < 1 || chunk < 1 || n_xcd < 1 {
            return Err(Error::InvalidInput(
                "window height, chunk size and XCD count must be >= 1".to_string(),
            ));
        }
        Ok(Self {
            window_h,
            chunk,
            n_xcd,
            tail_inclusive: false,
        })
    }
}

/// One scheduled block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ScheduledBlock {
    pub issue: u32,
    pub row: u32,
    pub col: u32,
    pub z: u32,
    pub xcd: u32,
}

/// Ordered assignment of output tiles to thread blocks with XCD placement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockSchedule {
    pub blocks: Vec<ScheduledBlock>,
    pub grid: GridConfig,
    pub n_xcd: u32,
}

/// Step 1 of the remap: de-interleave the flattened id by XCD and re-chunk so
/// that C consecutive work positions land on one XCD. Ids past the last full
/// nXCD*C-aligned prefix keep their order.
fn chunked_xy(xy: u32, blocks: u32, p: &SwizzleParams) -> u32 {
    let blocks_per_cycle = p.n_xcd * p.chunk;
    let limit = (blocks / blocks_per_cycle) * blocks_per_cycle;
    let in_tail = if p.tail_inclusive {
        xy >= limit
    } else {
        xy > limit
    };
    if in_tail {
        xy
    } else {
        let xcd = xy % p.n_xcd;
        let local = xy / p.n_xcd;
        let chunk_idx = local / p.chunk;
        let pos = local % p.chunk;
        chunk_idx * blocks_per_cycle + xcd * p.chunk + pos
    }
}

/// Step 2: windowed traversal. Processes the grid in vertical windows of
/// height W, descending each window column by column.
fn windowed(xy: u32, grid: &GridConfig, p: &SwizzleParams) -> Result<(u32, u32)> {
    let num_rows = grid.num_rows();
    let num_cols = grid.num_cols();
    let tid_per_group = p.window_h * num_cols;
    let group_id = xy / tid_per_group;
    let first_row = group_id * p.window_h;
    if first_row >= num_rows {
        return Err(Error::Internal(format!(
            "windowed traversal overran the grid at xy={xy}"
        )));
    }
    let win_h = (num_rows - first_row).min(p.window_h);
    let local = xy % tid_per_group;
    let row = first_row + local % win_h;
    let col = local / win_h;
    if col >= num_cols {
        return Err(Error::Internal(format!(
            "windowed traversal produced column {col} outside {num_cols} at xy={xy}"
        )));
    }
    Ok((row, col))
}

/// Remaps launch indices (bx, by, bz) to the output tile the block computes.
pub fn remap(
    bx: u32,
    by: u32,
    bz: u32,
    grid: &GridConfig,
    p: &SwizzleParams,
) -> Result<(u32, u32, u32)> {
    grid.validate()?;
    if bx >= grid.g_x || by >= grid.g_y || bz >= grid.g_z {
        return Err(Error::InvalidInput(format!(
            "block ({bx},{by},{bz}) outside grid {}x{}x{}",
            grid.g_x, grid.g_y, grid.g_z
        )));
    }
    let xy = bx + grid.g_x * by;
    let xy = chunked_xy(xy, grid.blocks_per_batch(), p);
    let (row, col) = windowed(xy, grid, p)?;
    Ok((row, col, bz))
}

/// Row-major baseline: block id maps straight to the tile at its flattened
/// position.
pub fn remap_row_major(bx: u32, by: u32, bz: u32, grid: &GridConfig) -> Result<(u32, u32, u32)> {
    grid.validate()?;
    let xy = bx + grid.g_x * by;
    Ok((xy / grid.num_cols(), xy % grid.num_cols(), bz))
}

/// Applies the remap to every block in issue order and attaches the
/// round-robin XCD placement (global issue index mod n_xcd).
pub fn build_schedule(grid: &GridConfig, p: &SwizzleParams) -> Result<BlockSchedule> {
    build_with(grid, p.n_xcd, |bx, by, bz| remap(bx, by, bz, grid, p))
}

/// Baseline schedule that bypasses the remap.
pub fn build_row_major(grid: &GridConfig, n_xcd: u32) -> Result<BlockSchedule> {
    build_with(grid, n_xcd, |bx, by, bz| remap_row_major(bx, by, bz, grid))
}

fn build_with(
    grid: &GridConfig,
    n_xcd: u32,
    f: impl Fn(u32, u32, u32) -> Result<(u32, u32, u32)>,
) -> Result<BlockSchedule> {
    grid.validate()?;
    let mut blocks = Vec::with_capacity((grid.blocks_per_batch() * grid.g_z) as usize);
    let mut issue = 0u32;
    for bz in 0..grid.g_z {
        for by in 0..grid.g_y {
            for bx in 0..grid.g_x {
                let (row, col, z) = f(bx, by, bz)?;
                blocks.push(ScheduledBlock {
                    issue,
                    row,
                    col,
                    z,
                    xcd: issue % n_xcd,
                });
                issue += 1;
            }
        }
    }
    let schedule = BlockSchedule {
        blocks,
        grid: *grid,
        n_xcd,
    };
    schedule.assert_permutation()?;
    Ok(schedule)
}

impl BlockSchedule {
    /// Every output tile must be produced exactly once; a violation is an
    /// internal transcription bug, not a user error.
    fn assert_permutation(&self) -> Result<()> {
        let per_batch = self.grid.blocks_per_batch();
        let mut seen = vec![false; (per_batch * self.grid.g_z) as usize];
        for block in &self.blocks {
            let idx = block.z * per_batch + block.row * self.grid.num_cols() + block.col;
            let slot = seen.get_mut(idx as usize).ok_or_else(|| {
                Error::Internal(format!(
                    "tile ({},{},{}) outside the grid",
                    block.row, block.col, block.z
                ))
            })?;
            if *slot {
                return Err(Error::Internal(format!(
                    "tile ({},{},{}) scheduled twice",
                    block.row, block.col, block.z
                )));
            }
            *slot = true;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("issue,row,col,xcd\n");
        for b in &self.blocks {
            out.push_str(&format!("{},{},{},{}\n", b.issue, b.row, b.col, b.xcd));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Literal transcription of the remap pseudocode, kept independent of the
    /// production path as a cross-check.
    #[allow(clippy::too_many_arguments)]
    fn remap_literal(
        bx: u32,
        by: u32,
        bz: u32,
        gx: u32,
        n_xcd: u32,
        m: u32,
        n: u32,
        block_m: u32,
        block_n: u32,
        w: u32,
        c: u32,
        blocks: u32,
    ) -> (u32, u32, u32) {
        let mut xy = bx + gx * by;
        let blocks_per_cycle = n_xcd * c;
        let limit = (blocks / blocks_per_cycle) * blocks_per_cycle;
        if xy > limit {
            // tail region: leave order unchanged
        } else {
            let xcd = xy % n_xcd;
            let local = xy / n_xcd;
            let chunk_idx = local / c;
            let pos = local % c;
            xy = chunk_idx * blocks_per_cycle + xcd * c + pos;
        }
        let num_rows = m / block_m;
        let num_cols = n / block_n;
        let tid_per_group = w * num_cols;
        let group_id = xy / tid_per_group;
        let first_row = group_id * w;
        let win_h = (num_rows - first_row).min(w);
        let local = xy % tid_per_group;
        let row = first_row + local % win_h;
        let col = local / win_h;
        (row, col, bz)
    }

    fn grid(rows: u32, cols: u32) -> GridConfig {
        GridConfig::for_problem(rows * 64, cols * 64, 64, 64, 1).unwrap()
    }

    #[test]
    fn worked_example_8x8_grid() {
        // 8x8 tiles, nXCD=8, C=2, W=4: flattened xy=3 de-interleaves to 6,
        // then the window maps it to (row 2, col 1).
        let g = grid(8, 8);
        let p = SwizzleParams::new(4, 2, 8).unwrap();
        assert_eq!(chunked_xy(3, 64, &p), 6);
        assert_eq!(remap(3, 0, 0, &g, &p).unwrap(), (2, 1, 0));
    }

    #[test]
    fn matches_literal_transcription_on_assorted_grids() {
        for (rows, cols) in [(8, 8), (6, 10), (19, 7), (16, 16)] {
            let g = grid(rows, cols);
            for (w, c, n_xcd) in [(1, 1, 1), (4, 2, 8), (3, 5, 4), (8, 64, 8)] {
                let p = SwizzleParams::new(w, c, n_xcd).unwrap();
                for by in 0..g.g_y {
                    for bx in 0..g.g_x {
                        let got = remap(bx, by, 0, &g, &p).unwrap();
                        let want = remap_literal(
                            bx,
                            by,
                            0,
                            g.g_x,
                            n_xcd,
                            g.m,
                            g.n,
                            g.block_m,
                            g.block_n,
                            w,
                            c,
                            g.blocks_per_batch(),
                        );
                        assert_eq!(got, want, "bx={bx} by={by} W={w} C={c} nXCD={n_xcd}");
                    }
                }
            }
        }
    }

    #[test]
    fn chunk_step_is_identity_when_c_and_nxcd_are_one() {
        let p = SwizzleParams::new(4, 1, 1).unwrap();
        for xy in 0..128 {
            assert_eq!(chunked_xy(xy, 128, &p), xy);
        }
    }

    #[test]
    fn tail_ids_keep_their_flattened_order() {
        // 70 blocks, nXCD=8, C=2: limit = 64, so ids 65..69 pass through.
        let p = SwizzleParams::new(1, 2, 8).unwrap();
        for xy in 65..70 {
            assert_eq!(chunked_xy(xy, 70, &p), xy);
        }
        // xy == limit is a fixed point under both tail conventions.
        assert_eq!(chunked_xy(64, 70, &p), 64);
        let inclusive = SwizzleParams {
            tail_inclusive: true,
            ..p
        };
        assert_eq!(chunked_xy(64, 70, &inclusive), 64);
    }

    #[test]
    fn window_of_full_height_gives_column_major() {
        let g = grid(8, 8);
        let p = SwizzleParams::new(8, 1, 1).unwrap();
        for by in 0..8 {
            for bx in 0..8 {
                let xy = bx + 8 * by;
                let (row, col, _) = remap(bx, by, 0, &g, &p).unwrap();
                assert_eq!((row, col), (xy % 8, xy / 8));
            }
        }
    }

    #[test]
    fn window_of_one_gives_row_major() {
        let g = grid(8, 8);
        let p = SwizzleParams::new(1, 1, 1).unwrap();
        for by in 0..8 {
            for bx in 0..8 {
                let xy = bx + 8 * by;
                let (row, col, _) = remap(bx, by, 0, &g, &p).unwrap();
                assert_eq!((row, col), (xy / 8, xy % 8));
            }
        }
    }

    #[test]
    fn schedule_is_a_permutation_with_round_robin_xcds() {
        let g = grid(16, 16);
        for w in 1..=8 {
            for c in [1u32, 2, 4, 8, 16, 25, 64] {
                let p = SwizzleParams::new(w, c, 8).unwrap();
                let schedule = build_schedule(&g, &p).unwrap();
                assert_eq!(schedule.blocks.len(), 256);
                for block in &schedule.blocks {
                    assert_eq!(block.xcd, block.issue % 8);
                }
            }
        }
    }

    #[test]
    fn chunks_of_c_consecutive_work_positions_share_an_xcd() {
        let g = grid(16, 16);
        let p = SwizzleParams::new(4, 4, 8).unwrap();
        let blocks = g.blocks_per_batch();
        let limit = (blocks / (p.n_xcd * p.chunk)) * (p.n_xcd * p.chunk);
        // For each block, its post-chunking position determines its XCD:
        // position div C cycles round-robin over the XCDs.
        for xy in 0..blocks {
            if xy > limit {
                continue;
            }
            let pos = chunked_xy(xy, blocks, &p);
            let expected_xcd = (pos / p.chunk) % p.n_xcd;
            assert_eq!(xy % p.n_xcd, expected_xcd, "xy={xy} pos={pos}");
        }
    }

    #[test]
    fn row_major_baseline_equals_flatten_order() {
        let g = grid(4, 6);
        let schedule = build_row_major(&g, 8).unwrap();
        for block in &schedule.blocks {
            assert_eq!(block.row, block.issue / 6);
            assert_eq!(block.col, block.issue % 6);
        }
    }

    #[test]
    fn ragged_grid_is_rejected() {
        assert!(matches!(
            GridConfig::for_problem(100, 128, 64, 64, 1),
            Err(Error::RaggedGrid(_))
        ));
    }

    #[test]
    fn out_of_grid_block_is_rejected() {
        let g = grid(4, 4);
        let p = SwizzleParams::new(2, 2, 8).unwrap();
        assert!(remap(4, 0, 0, &g, &p).is_err());
    }

    #[test]
    fn production_scale_parameter_sets_build_valid_schedules() {
        // 9216/192 x 9216/256 = 48x36 tiles and 14592/192 x 14592/256 = 76x57
        // tiles; 57 columns is coprime with 8 XCDs.
        let cases = [
            (9216, 9216, 5, 25),
            (9216, 9216, 7, 216),
            (14592, 14592, 8, 64),
            (14592, 14592, 8, 542),
        ];
        for (m, n, w, c) in cases {
            let g = GridConfig::for_problem(m, n, 192, 256, 1).unwrap();
            let p = SwizzleParams::new(w, c, 8).unwrap();
            let schedule = build_schedule(&g, &p).unwrap();
            assert_eq!(
                schedule.blocks.len() as u32,
                g.blocks_per_batch(),
                "W={w} C={c}"
            );
        }
    }

    #[test]
    fn batched_grids_schedule_every_batch_slice() {
        let g = GridConfig::for_problem(256, 256, 64, 64, 3).unwrap();
        let p = SwizzleParams::new(2, 2, 4).unwrap();
        let schedule = build_schedule(&g, &p).unwrap();
        assert_eq!(schedule.blocks.len(), 16 * 3);
        // Round-robin continues across batch boundaries.
        assert!(schedule.blocks.iter().all(|b| b.xcd == b.issue % 4));
    }
}

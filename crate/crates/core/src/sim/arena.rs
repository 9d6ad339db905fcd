use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bayes::Observation;
use crate::error::{Error, Result};

pub const GRID: usize = 5;
pub const TILES: usize = GRID * GRID;
pub const SIDE_M: f64 = 1.0;
pub const TILE_M: f64 = SIDE_M / GRID as f64;

/// The 1 m x 1 m inspection surface: a 5 x 5 grid of vibrating (`true`) and
/// quiet tiles. `tiles[row][col]`, rows along y and columns along x.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arena {
    pub tiles: [[bool; GRID]; GRID],
}

impl Arena {
    pub fn from_tiles(tiles: [[bool; GRID]; GRID]) -> Self {
        Self { tiles }
    }

    pub fn vibrating_count(&self) -> usize {
        self.tiles.iter().flatten().filter(|&&t| t).count()
    }

    pub fn fill_ratio(&self) -> f64 {
        self.vibrating_count() as f64 / TILES as f64
    }

    /// `(col, row)` of the tile containing `(x, y)`. Tiles are half-open, so a
    /// point on an edge belongs to the tile with the larger index.
    pub fn tile_index(x: f64, y: f64) -> (usize, usize) {
        let idx = |v: f64| ((v * GRID as f64).floor().max(0.0) as usize).min(GRID - 1);
        (idx(x), idx(y))
    }

    pub fn tile(&self, col: usize, row: usize) -> bool {
        self.tiles[row][col]
    }

    /// Noise-free binary floor sample at `(x, y)`.
    pub fn sample_floor(&self, x: f64, y: f64) -> Observation {
        debug_assert!(
            (0.0..=SIDE_M).contains(&x) && (0.0..=SIDE_M).contains(&y),
            "({x}, {y}) outside arena"
        );
        let (col, row) = Self::tile_index(x, y);
        Observation::from_bit(self.tile(col, row))
    }
}

/// Number of vibrating tiles for a fill ratio, if it is a multiple of 1/25.
pub fn vibrating_tiles_for(f: f64) -> Result<usize> {
    if !(0.0..=1.0).contains(&f) {
        return Err(Error::FillRatio(f));
    }
    let k = f * TILES as f64;
    let rounded = k.round();
    if (k - rounded).abs() > 1e-6 {
        return Err(Error::FillRatio(f));
    }
    Ok(rounded as usize)
}

/// Seeded uniform placement of exactly `25 f` vibrating tiles.
pub fn generate_pattern(seed: u64, f: f64) -> Result<Arena> {
    let k = vibrating_tiles_for(f)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cells: Vec<usize> = (0..TILES).collect();
    cells.shuffle(&mut rng);
    let mut tiles = [[false; GRID]; GRID];
    for &c in &cells[..k] {
        tiles[c / GRID][c % GRID] = true;
    }
    Ok(Arena { tiles })
}

pub fn sample_floor(arena: &Arena, x: f64, y: f64) -> Observation {
    arena.sample_floor(x, y)
}

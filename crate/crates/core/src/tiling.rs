//! Splitting scenes into square tiles and stitching them back.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::raster::{LabelMask, SceneRaster};

pub const DEFAULT_TILE_SIZE: usize = 256;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum TilingError {
    #[error("cannot split an empty scene")]
    EmptyScene,
    #[error("tile size must be at least 1")]
    ZeroTileSize,
    #[error("missing tile ({0},{1})")]
    MissingTile(usize, usize),
    #[error("duplicate tile ({0},{1})")]
    DuplicateTile(usize, usize),
    #[error("tile ({row},{col}) is outside the {rows}x{cols} grid")]
    OutOfGrid {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
    #[error("tile ({row},{col}) is {width}x{height}, expected {size}x{size}")]
    TileShape {
        row: usize,
        col: usize,
        width: usize,
        height: usize,
        size: usize,
    },
}

/// A square sub-image of a scene with its grid position.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tile {
    pub raster: SceneRaster,
    pub scene_id: String,
    pub grid_row: usize,
    pub grid_col: usize,
}

impl Tile {
    pub fn new(raster: SceneRaster, grid_row: usize, grid_col: usize) -> Self {
        let scene_id = raster.scene_id().to_string();
        Self {
            raster,
            scene_id,
            grid_row,
            grid_col,
        }
    }

    /// Stable name used for per-tile files.
    pub fn file_stem(&self) -> String {
        format!("{}_r{:03}_c{:03}", self.scene_id, self.grid_row, self.grid_col)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileGrid {
    pub scene_id: String,
    pub scene_width: usize,
    pub scene_height: usize,
    pub tile_size: usize,
    pub rows: usize,
    pub cols: usize,
}

impl TileGrid {
    pub fn new(scene_id: impl Into<String>, scene_width: usize, scene_height: usize, tile_size: usize) -> Self {
        Self {
            scene_id: scene_id.into(),
            scene_width,
            scene_height,
            tile_size,
            rows: scene_height.div_ceil(tile_size),
            cols: scene_width.div_ceil(tile_size),
        }
    }

    pub fn tile_count(&self) -> usize {
        self.rows * self.cols
    }
}

/// Cuts a scene into row-major tiles; partial tiles on the right and bottom
/// edges are zero-padded.
pub fn split_scene(scene: &SceneRaster, tile_size: usize) -> Result<(Vec<Tile>, TileGrid), TilingError> {
    if tile_size == 0 {
        return Err(TilingError::ZeroTileSize);
    }
    if scene.width() == 0 || scene.height() == 0 {
        return Err(TilingError::EmptyScene);
    }
    let grid = TileGrid::new(scene.scene_id(), scene.width(), scene.height(), tile_size);
    let src = scene.data();
    let stride = scene.width() * 3;
    let mut tiles = Vec::with_capacity(grid.tile_count());
    for row in 0..grid.rows {
        for col in 0..grid.cols {
            let mut data = vec![0u8; tile_size * tile_size * 3];
            let x0 = col * tile_size;
            let y0 = row * tile_size;
            let cw = tile_size.min(scene.width() - x0);
            let ch = tile_size.min(scene.height() - y0);
            for dy in 0..ch {
                let s = (y0 + dy) * stride + x0 * 3;
                let d = dy * tile_size * 3;
                data[d..d + cw * 3].copy_from_slice(&src[s..s + cw * 3]);
            }
            let raster = SceneRaster::new(tile_size, tile_size, data, scene.scene_id())
                .expect("tile buffer sized to tile");
            tiles.push(Tile::new(raster, row, col));
        }
    }
    Ok((tiles, grid))
}

/// Places `pieces` (row, col, samples with `channels` per pixel) into a
/// scene-sized buffer, cropping padding.
fn assemble<'a, T: Copy + Default>(
    pieces: impl IntoIterator<Item = (usize, usize, &'a [T])>,
    grid: &TileGrid,
    channels: usize,
) -> Result<Vec<T>, TilingError>
where
    T: 'a,
{
    let size = grid.tile_size;
    let mut seen = HashSet::with_capacity(grid.tile_count());
    let stride = grid.scene_width * channels;
    let mut out = vec![T::default(); grid.scene_height * stride];
    for (row, col, samples) in pieces {
        if row >= grid.rows || col >= grid.cols {
            return Err(TilingError::OutOfGrid {
                row,
                col,
                rows: grid.rows,
                cols: grid.cols,
            });
        }
        if !seen.insert((row, col)) {
            return Err(TilingError::DuplicateTile(row, col));
        }
        let x0 = col * size;
        let y0 = row * size;
        let cw = size.min(grid.scene_width - x0);
        let ch = size.min(grid.scene_height - y0);
        for dy in 0..ch {
            let s = dy * size * channels;
            let d = (y0 + dy) * stride + x0 * channels;
            out[d..d + cw * channels].copy_from_slice(&samples[s..s + cw * channels]);
        }
    }
    for row in 0..grid.rows {
        for col in 0..grid.cols {
            if !seen.contains(&(row, col)) {
                return Err(TilingError::MissingTile(row, col));
            }
        }
    }
    Ok(out)
}

fn check_shape(row: usize, col: usize, width: usize, height: usize, size: usize) -> Result<(), TilingError> {
    if width != size || height != size {
        return Err(TilingError::TileShape {
            row,
            col,
            width,
            height,
            size,
        });
    }
    Ok(())
}

/// Inverse of [`split_scene`].
pub fn stitch_scene(tiles: &[Tile], grid: &TileGrid) -> Result<SceneRaster, TilingError> {
    for t in tiles {
        check_shape(t.grid_row, t.grid_col, t.raster.width(), t.raster.height(), grid.tile_size)?;
    }
    let data = assemble(
        tiles.iter().map(|t| (t.grid_row, t.grid_col, t.raster.data())),
        grid,
        3,
    )?;
    Ok(SceneRaster::new(grid.scene_width, grid.scene_height, data, grid.scene_id.clone())
        .expect("grid dimensions are positive"))
}

/// Stitches per-tile label masks given as `(row, col, mask)`.
pub fn stitch_labels(tiles: &[(usize, usize, LabelMask)], grid: &TileGrid) -> Result<LabelMask, TilingError> {
    for (row, col, m) in tiles {
        check_shape(*row, *col, m.width(), m.height(), grid.tile_size)?;
    }
    let data = assemble(tiles.iter().map(|(r, c, m)| (*r, *c, m.data())), grid, 1)?;
    Ok(LabelMask::new(grid.scene_width, grid.scene_height, data).expect("grid dimensions are positive"))
}

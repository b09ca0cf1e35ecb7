//! Overlapping tile extraction for arbitrary-resolution inputs.
//!
//! An input image is resized to exactly fit a grid of square, overlapping
//! tiles (stride `s_win`, shared margin `m_tot` pixels between neighbors),
//! then each tile plus a global thumbnail is cropped out at the base size.
//! With the default geometry (378px tiles, 14px patches, 4+4 patch margins)
//! adjacent tiles overlap by 112 pixels at a stride of 266 pixels, and a
//! 3x4 grid spans 910x1176 pixels.

use crate::error::ConfigError;
use crate::imaging::{resize_bilinear, Image};

/// Geometry knobs for the tiler. Tiles are square (`base_h == base_w`),
/// which is what makes a single stride serve both axes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TilingConfig {
    pub base_h: usize,
    pub base_w: usize,
    pub patch: usize,
    pub max_tiles: usize,
    pub margin_left: usize,
    pub margin_right: usize,
}

impl TilingConfig {
    pub fn new(
        base_h: usize,
        base_w: usize,
        patch: usize,
        max_tiles: usize,
        margin_left: usize,
        margin_right: usize,
    ) -> Result<Self, ConfigError> {
        if patch == 0 {
            return Err(ConfigError("patch size must be >= 1".into()));
        }
        if base_h == 0 || base_w == 0 || !base_h.is_multiple_of(patch) || !base_w.is_multiple_of(patch) {
            return Err(ConfigError(format!(
                "base size {base_h}x{base_w} must be a positive multiple of patch {patch}"
            )));
        }
        if base_h != base_w {
            return Err(ConfigError(format!(
                "tiles must be square: base {base_h}x{base_w}"
            )));
        }
        if base_h / patch <= margin_left + margin_right {
            return Err(ConfigError(format!(
                "margins {margin_left}+{margin_right} leave no positive stride for base {base_h} / patch {patch}"
            )));
        }
        if max_tiles == 0 {
            return Err(ConfigError("max_tiles must be >= 1".into()));
        }
        Ok(TilingConfig {
            base_h,
            base_w,
            patch,
            max_tiles,
            margin_left,
            margin_right,
        })
    }

    /// Patches per tile side.
    pub fn grid_side(&self) -> usize {
        self.base_h / self.patch
    }
}

impl Default for TilingConfig {
    fn default() -> Self {
        TilingConfig::new(378, 378, 14, 12, 4, 4).expect("default tiling config")
    }
}

/// Pixel-level overlap quantities derived from a [`TilingConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OverlapGeometry {
    /// Total overlap margin in pixels shared by adjacent tiles.
    pub m_tot: usize,
    /// Stride in pixels between adjacent tile origins.
    pub s_win: usize,
}

pub fn compute_overlap_geometry(cfg: &TilingConfig) -> OverlapGeometry {
    let m_tot = cfg.patch * (cfg.margin_left + cfg.margin_right);
    let s_win = (cfg.base_h / cfg.patch - (cfg.margin_left + cfg.margin_right)) * cfg.patch;
    debug_assert_eq!(s_win + m_tot, cfg.base_h);
    OverlapGeometry { m_tot, s_win }
}

/// Chosen grid shape and the exact pixel dimensions it spans.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TilePlan {
    pub rows: usize,
    pub cols: usize,
    pub grid_h: usize,
    pub grid_w: usize,
}

impl TilePlan {
    pub fn n_tiles(&self) -> usize {
        self.rows * self.cols
    }
}

/// Pick the tiling whose stride-spanned extent distorts the (margin-reduced)
/// image least. Candidates are every `rows x cols` with
/// `rows * cols <= max_tiles`; each is scored by
/// `|ln(rows*s_win/h)| + |ln(cols*s_win/w)|` and ties fall to fewer tiles,
/// then fewer rows, then fewer columns.
pub fn select_tiling(
    h_reduced: usize,
    w_reduced: usize,
    s_win: usize,
    max_tiles: usize,
) -> (usize, usize) {
    assert!(h_reduced >= 1 && w_reduced >= 1, "reduced dims must be >= 1");
    assert!(s_win >= 1 && max_tiles >= 1);
    let mut best = (f64::INFINITY, usize::MAX, usize::MAX, usize::MAX);
    let mut pick = (1, 1);
    for rows in 1..=max_tiles {
        for cols in 1..=max_tiles / rows {
            let scale_h = (rows * s_win) as f64 / h_reduced as f64;
            let scale_w = (cols * s_win) as f64 / w_reduced as f64;
            let score = scale_h.ln().abs() + scale_w.ln().abs();
            let key = (score, rows * cols, rows, cols);
            if key < best {
                best = key;
                pick = (rows, cols);
            }
        }
    }
    pick
}

/// Full plan for an image of the given size: overlap geometry, tiling
/// selection on the margin-reduced dimensions, and exact grid extent.
pub fn plan_tiling(img_h: usize, img_w: usize, cfg: &TilingConfig) -> TilePlan {
    let geom = compute_overlap_geometry(cfg);
    let h_reduced = img_h.saturating_sub(geom.m_tot).max(1);
    let w_reduced = img_w.saturating_sub(geom.m_tot).max(1);
    let (rows, cols) = select_tiling(h_reduced, w_reduced, geom.s_win, cfg.max_tiles);
    TilePlan {
        rows,
        cols,
        grid_h: rows * geom.s_win + geom.m_tot,
        grid_w: cols * geom.s_win + geom.m_tot,
    }
}

/// A tiled image: global thumbnail first, then tiles in row-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TileSet {
    pub thumbnail: Image,
    pub tiles: Vec<Image>,
    pub plan: TilePlan,
}

impl TileSet {
    /// Crops in model order: thumbnail, then tiles left-to-right, top-to-bottom.
    pub fn crops(&self) -> impl Iterator<Item = &Image> {
        std::iter::once(&self.thumbnail).chain(self.tiles.iter())
    }

    pub fn n_crops(&self) -> usize {
        1 + self.tiles.len()
    }
}

/// Resize to the planned grid, extract every overlapping tile, and prepend
/// the global thumbnail.
pub fn tile_image(img: &Image, cfg: &TilingConfig) -> TileSet {
    let geom = compute_overlap_geometry(cfg);
    let plan = plan_tiling(img.height(), img.width(), cfg);
    let grid = resize_bilinear(img, plan.grid_h, plan.grid_w);
    let mut tiles = Vec::with_capacity(plan.n_tiles());
    for r in 0..plan.rows {
        for c in 0..plan.cols {
            tiles.push(grid.crop(r * geom.s_win, c * geom.s_win, cfg.base_h, cfg.base_w));
        }
    }
    let thumbnail = resize_bilinear(img, cfg.base_h, cfg.base_w);
    TileSet { thumbnail, tiles, plan }
}

/// Sample values used by [`render_grid_overlay`].
pub const OVERLAY_OUTLINE: u8 = 255;
pub const OVERLAY_BAND_GRAY: u8 = 192;

/// Resized grid image with tile outlines and overlap bands marked.
///
/// Grayscale: band pixels become [`OVERLAY_BAND_GRAY`], outline pixels
/// [`OVERLAY_OUTLINE`]. RGB: band pixels get a saturated blue channel,
/// outlines are pure red. Output dimensions are exactly the planned grid.
pub fn render_grid_overlay(img: &Image, cfg: &TilingConfig) -> Image {
    let geom = compute_overlap_geometry(cfg);
    let plan = plan_tiling(img.height(), img.width(), cfg);
    let grid = resize_bilinear(img, plan.grid_h, plan.grid_w);
    let ch = grid.channels();
    let mut data = grid.data().to_vec();

    let mut mark_band = |y: usize, x: usize| {
        let base = (y * plan.grid_w + x) * ch;
        if ch == 3 {
            data[base + 2] = 255;
        } else {
            data[base] = OVERLAY_BAND_GRAY;
        }
    };
    // Vertical overlap bands between adjacent columns, then horizontal ones.
    for c in 1..plan.cols {
        for y in 0..plan.grid_h {
            for x in c * geom.s_win..c * geom.s_win + geom.m_tot {
                mark_band(y, x);
            }
        }
    }
    for r in 1..plan.rows {
        for y in r * geom.s_win..r * geom.s_win + geom.m_tot {
            for x in 0..plan.grid_w {
                mark_band(y, x);
            }
        }
    }

    let mut mark_outline = |y: usize, x: usize| {
        let base = (y * plan.grid_w + x) * ch;
        if ch == 3 {
            data[base] = 255;
            data[base + 1] = 0;
            data[base + 2] = 0;
        } else {
            data[base] = OVERLAY_OUTLINE;
        }
    };
    for r in 0..plan.rows {
        for c in 0..plan.cols {
            let (top, left) = (r * geom.s_win, c * geom.s_win);
            let (bottom, right) = (top + cfg.base_h - 1, left + cfg.base_w - 1);
            for x in left..=right {
                mark_outline(top, x);
                mark_outline(bottom, x);
            }
            for y in top..=bottom {
                mark_outline(y, left);
                mark_outline(y, right);
            }
        }
    }

    Image::new(plan.grid_h, plan.grid_w, ch, data).expect("overlay dims")
}

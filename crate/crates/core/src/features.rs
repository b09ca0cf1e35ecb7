//! Patch feature generation and interchange.
//!
//! A deterministic pseudo encoder stands in for the frozen vision tower: it
//! maps every (crop, retained layer, patch, dim) to a value keyed on the
//! seed and on the patch's pixel content, so tiling mistakes surface as
//! feature diffs. Real encoder outputs can be injected through the JVF
//! binary format defined at the bottom of this module.

use crate::error::{ConfigError, FormatError};
use crate::mix::{chain, unit_f32};
use crate::numerics::Matrix;
use crate::tiling::{TileSet, TilingConfig};

/// Layers retained by default: third- and ninth-to-last.
pub const DEFAULT_RETAINED_LAYERS: [i32; 2] = [-3, -9];

/// Shape of the per-crop feature extraction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderConfig {
    /// Patch edge in pixels.
    pub patch: usize,
    /// Patches per tile side; a crop yields `grid_side^2` patch features.
    pub grid_side: usize,
    /// Feature width per layer.
    pub d_v: usize,
    /// Retained encoder layers as negative indices counted from the end.
    pub retained_layers: Vec<i32>,
}

impl EncoderConfig {
    pub fn new(
        patch: usize,
        grid_side: usize,
        d_v: usize,
        retained_layers: Vec<i32>,
    ) -> Result<Self, ConfigError> {
        if patch == 0 || grid_side == 0 || d_v == 0 {
            return Err(ConfigError("patch, grid_side, d_v must be >= 1".into()));
        }
        if retained_layers.is_empty() {
            return Err(ConfigError("retained_layers must be non-empty".into()));
        }
        if retained_layers.iter().any(|&l| l >= 0) {
            return Err(ConfigError("retained layer indices must be negative".into()));
        }
        let mut dedup = retained_layers.clone();
        dedup.sort_unstable();
        dedup.dedup();
        if dedup.len() != retained_layers.len() {
            return Err(ConfigError("retained layer indices must be distinct".into()));
        }
        Ok(EncoderConfig { patch, grid_side, d_v, retained_layers })
    }

    /// Derive the grid side from a tiling config (`base / patch`).
    pub fn for_tiling(
        tiling: &TilingConfig,
        d_v: usize,
        retained_layers: Vec<i32>,
    ) -> Result<Self, ConfigError> {
        EncoderConfig::new(tiling.patch, tiling.grid_side(), d_v, retained_layers)
    }

    /// Patches per crop.
    pub fn n_patches(&self) -> usize {
        self.grid_side * self.grid_side
    }
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig::new(14, 27, 8, DEFAULT_RETAINED_LAYERS.to_vec()).expect("default encoder config")
    }
}

/// Per-crop, per-retained-layer patch features. Crop order matches the
/// originating [`TileSet`]: thumbnail first, then tiles row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStack {
    layer_indices: Vec<i32>,
    n_patches: usize,
    d_v: usize,
    crops: Vec<Vec<Matrix>>,
}

impl FeatureStack {
    /// # Panics
    /// Panics if the nested shape is inconsistent: `crops[c][l]` must be
    /// `n_patches x d_v` for every crop and layer position.
    pub fn new(layer_indices: Vec<i32>, crops: Vec<Vec<Matrix>>) -> Self {
        assert!(!layer_indices.is_empty(), "need at least one layer");
        assert!(!crops.is_empty(), "need at least one crop");
        let first = &crops[0][0];
        let (n_patches, d_v) = (first.rows(), first.cols());
        for (ci, layers) in crops.iter().enumerate() {
            assert_eq!(layers.len(), layer_indices.len(), "crop {ci} layer count");
            for (li, m) in layers.iter().enumerate() {
                assert_eq!(
                    (m.rows(), m.cols()),
                    (n_patches, d_v),
                    "crop {ci} layer {li} shape"
                );
            }
        }
        FeatureStack { layer_indices, n_patches, d_v, crops }
    }

    pub fn layer_indices(&self) -> &[i32] {
        &self.layer_indices
    }

    pub fn num_crops(&self) -> usize {
        self.crops.len()
    }

    pub fn num_layers(&self) -> usize {
        self.layer_indices.len()
    }

    pub fn n_patches(&self) -> usize {
        self.n_patches
    }

    pub fn d_v(&self) -> usize {
        self.d_v
    }

    /// Feature matrix for one crop at one retained-layer position.
    pub fn crop_layer(&self, crop: usize, layer_pos: usize) -> &Matrix {
        assert!(crop < self.crops.len(), "crop {crop} out of range");
        &self.crops[crop][layer_pos]
    }
}

/// Deterministic stand-in for the frozen vision encoder.
///
/// Every value is a pure function of (seed, crop index, layer index, patch
/// index, dim, patch pixel sum); identical inputs give bit-identical stacks.
/// Values lie on the f32 grid so JVF round trips are lossless.
pub fn pseudo_encode(tiles: &TileSet, cfg: &EncoderConfig, seed: u64) -> FeatureStack {
    let side = cfg.grid_side;
    let n = cfg.n_patches();
    let crops = tiles
        .crops()
        .enumerate()
        .map(|(crop_idx, img)| {
            assert_eq!(
                (img.height(), img.width()),
                (side * cfg.patch, side * cfg.patch),
                "crop {crop_idx} does not match the encoder grid"
            );
            // Patch content sums, computed once per crop.
            let sums: Vec<u64> = (0..n)
                .map(|p| {
                    let (py, px) = (p / side, p % side);
                    img.region_sum(py * cfg.patch, px * cfg.patch, cfg.patch, cfg.patch)
                })
                .collect();
            cfg.retained_layers
                .iter()
                .map(|&layer| {
                    Matrix::from_fn(n, cfg.d_v, |p, d| {
                        unit_f32(chain(&[
                            seed,
                            crop_idx as u64,
                            layer as i64 as u64,
                            p as u64,
                            d as u64,
                            sums[p],
                        ]))
                    })
                })
                .collect()
        })
        .collect();
    FeatureStack::new(cfg.retained_layers.clone(), crops)
}

/// Column-concatenate all retained layers of one crop: `N x (layers * d_v)`,
/// with the first retained layer occupying the leading `d_v` columns.
///
/// # Panics
/// Panics if fewer than two layers are retained or `crop` is out of range.
pub fn concat_layers(stack: &FeatureStack, crop: usize) -> Matrix {
    assert!(
        stack.num_layers() >= 2,
        "layer concatenation expects at least two retained layers"
    );
    assert!(crop < stack.num_crops(), "crop {crop} out of range");
    let (n, d_v, layers) = (stack.n_patches(), stack.d_v(), stack.num_layers());
    Matrix::from_fn(n, layers * d_v, |p, c| {
        stack.crop_layer(crop, c / d_v).get(p, c % d_v)
    })
}

const JVF_MAGIC: &[u8; 4] = b"JVF1";
const JVF_HEADER_LEN: usize = 24;

fn push_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32, FormatError> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(FormatError::Truncated {
            offset: bytes.len(),
            expected: end - bytes.len(),
        });
    }
    Ok(u32::from_le_bytes(bytes[offset..end].try_into().unwrap()))
}

/// Serialize to the JVF1 interchange format (little-endian):
/// magic `JVF1`, u32 crops, u32 n_layers, u32 N, u32 d_v, u32 reserved = 0,
/// i32 layer indices, then f32 values in `[crop][layer][patch][dim]` order.
pub fn save_features(stack: &FeatureStack) -> Vec<u8> {
    let total = stack.num_crops() * stack.num_layers() * stack.n_patches() * stack.d_v();
    let mut out = Vec::with_capacity(JVF_HEADER_LEN + 4 * stack.num_layers() + 4 * total);
    out.extend_from_slice(JVF_MAGIC);
    push_u32(&mut out, stack.num_crops() as u32);
    push_u32(&mut out, stack.num_layers() as u32);
    push_u32(&mut out, stack.n_patches() as u32);
    push_u32(&mut out, stack.d_v() as u32);
    push_u32(&mut out, 0);
    for &layer in stack.layer_indices() {
        out.extend_from_slice(&layer.to_le_bytes());
    }
    for crop in 0..stack.num_crops() {
        for layer_pos in 0..stack.num_layers() {
            for &v in stack.crop_layer(crop, layer_pos).data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
    }
    out
}

/// Parse a JVF1 file, widening stored f32 values to f64.
pub fn load_features(bytes: &[u8]) -> Result<FeatureStack, FormatError> {
    if bytes.len() < 4 || &bytes[..4] != JVF_MAGIC {
        return Err(FormatError::BadMagic { offset: 0, expected: "JVF1" });
    }
    let crops = read_u32(bytes, 4)? as usize;
    let n_layers = read_u32(bytes, 8)? as usize;
    let n_patches = read_u32(bytes, 12)? as usize;
    let d_v = read_u32(bytes, 16)? as usize;
    let reserved = read_u32(bytes, 20)?;
    if reserved != 0 {
        return Err(FormatError::Header {
            offset: 20,
            reason: format!("reserved field must be 0, got {reserved}"),
        });
    }
    for (name, value, offset) in [
        ("crops", crops, 4),
        ("n_layers", n_layers, 8),
        ("N", n_patches, 12),
        ("d_v", d_v, 16),
    ] {
        if value == 0 {
            return Err(FormatError::Dimensions {
                offset,
                reason: format!("{name} must be >= 1"),
            });
        }
    }

    let mut offset = JVF_HEADER_LEN;
    let mut layer_indices = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let raw = read_u32(bytes, offset)?;
        layer_indices.push(raw as i32);
        offset += 4;
    }

    let per_matrix = n_patches * d_v;
    let total = crops * n_layers * per_matrix;
    let expected_len = offset + 4 * total;
    if bytes.len() < expected_len {
        return Err(FormatError::Truncated {
            offset: bytes.len(),
            expected: expected_len - bytes.len(),
        });
    }
    if bytes.len() > expected_len {
        return Err(FormatError::Dimensions {
            offset: expected_len,
            reason: format!("{} unexpected trailing bytes", bytes.len() - expected_len),
        });
    }

    let mut crop_matrices = Vec::with_capacity(crops);
    for _ in 0..crops {
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let mut data = Vec::with_capacity(per_matrix);
            for _ in 0..per_matrix {
                let v = f32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap());
                if !v.is_finite() {
                    return Err(FormatError::Dimensions {
                        offset,
                        reason: "non-finite feature value".into(),
                    });
                }
                data.push(v as f64);
                offset += 4;
            }
            layers.push(Matrix::from_vec(n_patches, d_v, data));
        }
        crop_matrices.push(layers);
    }
    Ok(FeatureStack::new(layer_indices, crop_matrices))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::Image;
    use crate::tiling::tile_image;
    use proptest::prelude::*;

    fn tiny_cfg(d_v: usize) -> EncoderConfig {
        // 2px patches on a 4-patch-per-side grid: crops are 8x8.
        EncoderConfig::new(2, 4, d_v, vec![-3, -9]).unwrap()
    }

    fn tiny_tiles(seed: u64) -> TileSet {
        let cfg = TilingConfig::new(8, 8, 2, 4, 1, 1).unwrap();
        let mut s = seed | 1;
        let data = (0..20 * 14 * 3)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 33) as u8
            })
            .collect();
        let img = Image::new(20, 14, 3, data).unwrap();
        tile_image(&img, &cfg)
    }

    #[test]
    fn pseudo_encode_is_deterministic() {
        let tiles = tiny_tiles(3);
        let cfg = tiny_cfg(4);
        assert_eq!(pseudo_encode(&tiles, &cfg, 42), pseudo_encode(&tiles, &cfg, 42));
    }

    #[test]
    fn different_seeds_change_nearly_all_entries() {
        let tiles = tiny_tiles(3);
        let cfg = tiny_cfg(8);
        let a = pseudo_encode(&tiles, &cfg, 1);
        let b = pseudo_encode(&tiles, &cfg, 2);
        let mut total = 0usize;
        let mut differing = 0usize;
        for crop in 0..a.num_crops() {
            for lp in 0..a.num_layers() {
                for (x, y) in a
                    .crop_layer(crop, lp)
                    .data()
                    .iter()
                    .zip(b.crop_layer(crop, lp).data())
                {
                    total += 1;
                    if x != y {
                        differing += 1;
                    }
                }
            }
        }
        assert!(
            differing as f64 >= 0.99 * total as f64,
            "{differing}/{total} entries differ"
        );
    }

    #[test]
    fn default_config_yields_729_patch_rows() {
        let tiling = TilingConfig::default();
        let img = Image::filled(378, 378, 3, 128);
        let tiles = tile_image(&img, &tiling);
        let cfg = EncoderConfig::for_tiling(&tiling, 8, DEFAULT_RETAINED_LAYERS.to_vec()).unwrap();
        let stack = pseudo_encode(&tiles, &cfg, 0);
        assert_eq!(stack.num_crops(), 2);
        for crop in 0..stack.num_crops() {
            for lp in 0..stack.num_layers() {
                let m = stack.crop_layer(crop, lp);
                assert_eq!((m.rows(), m.cols()), (729, 8));
            }
        }
    }

    #[test]
    fn features_depend_on_pixel_content() {
        let cfg = tiny_cfg(4);
        let tiling = TilingConfig::new(8, 8, 2, 4, 1, 1).unwrap();
        let a = pseudo_encode(&tile_image(&Image::filled(8, 8, 1, 0), &tiling), &cfg, 7);
        let b = pseudo_encode(&tile_image(&Image::filled(8, 8, 1, 200), &tiling), &cfg, 7);
        assert_ne!(a, b);
    }

    #[test]
    fn concat_orders_first_layer_first() {
        let h3 = Matrix::from_vec(1, 2, vec![1.0, 2.0]);
        let h9 = Matrix::from_vec(1, 2, vec![3.0, 4.0]);
        let stack = FeatureStack::new(vec![-3, -9], vec![vec![h3, h9]]);
        let cat = concat_layers(&stack, 0);
        assert_eq!(cat.row(0), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn concat_shape_and_slicing_recover_layers() {
        let tiles = tiny_tiles(9);
        let cfg = tiny_cfg(3);
        let stack = pseudo_encode(&tiles, &cfg, 5);
        let cat = concat_layers(&stack, 1);
        assert_eq!((cat.rows(), cat.cols()), (16, 6));
        let first = stack.crop_layer(1, 0);
        for p in 0..16 {
            for d in 0..3 {
                assert_eq!(cat.get(p, d), first.get(p, d));
            }
        }
    }

    #[test]
    fn jvf_size_follows_layout_formula() {
        let tiles = tiny_tiles(11);
        let cfg = tiny_cfg(5);
        let stack = pseudo_encode(&tiles, &cfg, 3);
        let bytes = save_features(&stack);
        let (crops, layers, n, d_v) = (stack.num_crops(), 2, 16, 5);
        assert_eq!(bytes.len(), 24 + 4 * crops * layers * n * d_v + 4 * layers);
    }

    #[test]
    fn jvf_round_trip_is_bit_exact() {
        let tiles = tiny_tiles(13);
        let cfg = tiny_cfg(4);
        let stack = pseudo_encode(&tiles, &cfg, 17);
        let loaded = load_features(&save_features(&stack)).unwrap();
        assert_eq!(loaded, stack);
        assert_eq!(save_features(&loaded), save_features(&stack));
    }

    #[test]
    fn corrupted_magic_names_expected_value() {
        let tiles = tiny_tiles(15);
        let mut bytes = save_features(&pseudo_encode(&tiles, &tiny_cfg(2), 0));
        bytes[0] = b'X';
        let err = load_features(&bytes).unwrap_err();
        assert_eq!(err, FormatError::BadMagic { offset: 0, expected: "JVF1" });
        assert!(err.to_string().contains("JVF1"));
    }

    #[test]
    fn truncated_and_oversized_files_are_rejected() {
        let tiles = tiny_tiles(17);
        let bytes = save_features(&pseudo_encode(&tiles, &tiny_cfg(2), 0));
        let err = load_features(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(err, FormatError::Truncated { .. }));
        let mut padded = bytes.clone();
        padded.push(0);
        let err = load_features(&padded).unwrap_err();
        assert!(matches!(err, FormatError::Dimensions { .. }));
    }

    #[test]
    fn zero_dimension_header_is_rejected() {
        let tiles = tiny_tiles(19);
        let mut bytes = save_features(&pseudo_encode(&tiles, &tiny_cfg(2), 0));
        bytes[16..20].copy_from_slice(&0u32.to_le_bytes()); // d_v = 0
        assert!(matches!(
            load_features(&bytes).unwrap_err(),
            FormatError::Dimensions { offset: 16, .. }
        ));
    }

    proptest! {
        #[test]
        fn jvf_round_trip_random_shapes(
            crops in 1usize..4,
            n in 1usize..10,
            d_v in 1usize..5,
            seed in proptest::num::u64::ANY,
        ) {
            let mats: Vec<Vec<Matrix>> = (0..crops).map(|c| {
                (0..2).map(|l| Matrix::from_fn(n, d_v, |p, d| {
                    unit_f32(chain(&[seed, c as u64, l as u64, p as u64, d as u64]))
                })).collect()
            }).collect();
            let stack = FeatureStack::new(vec![-3, -9], mats);
            prop_assert_eq!(load_features(&save_features(&stack)).unwrap(), stack);
        }
    }
}

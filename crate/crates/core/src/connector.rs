//! Attention-pooling vision-language connector.
//!
//! Per crop: concatenated two-layer features are grouped into 2x2 patch
//! neighborhoods, each group's mean feature queries an attention pool over
//! the group (local mode) or the whole crop (global mode), and the pooled
//! rows are projected to the decoder width through a gated SwiGLU layer.
//! A 27x27 patch grid pools to 13x14 = 182 rows. The analytic backward pass
//! is verified against central finite differences.

use crate::error::{ConfigError, FormatError};
use crate::features::{concat_layers, FeatureStack};
use crate::mix::{chain, unit_f32, unit_f64};
use crate::numerics::{
    finite_diff_grad, matmul, softmax_slice, swish, swish_prime, Matrix,
};

/// Which keys a pooled query may attend to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AttentionMode {
    /// Keys masked to the query's own neighborhood (default).
    #[default]
    Local,
    /// Keys span every patch in the crop.
    Global,
}

/// The seven learnable matrices. With vision width `d_v` (so concatenated
/// width `2*d_v`, `d_k = d_v`) and decoder width `d_l`:
/// `w_q, w_k: 2d_v x d_v`, `w_v: 2d_v x 2d_v`, `w_o: 2d_v x d_v`,
/// `w_1, w_2: d_v x 3d_l`, `w_3: 3d_l x d_l`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectorParams {
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
    pub w_o: Matrix,
    pub w_1: Matrix,
    pub w_2: Matrix,
    pub w_3: Matrix,
}

/// Fixed serialization order for the parameter matrices.
const PARAM_NAMES: [&str; 7] = ["w_q", "w_k", "w_v", "w_o", "w_1", "w_2", "w_3"];

impl ConnectorParams {
    /// Deterministic seeded init: uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)]
    /// where fan_in is the input (row) dimension of each matrix.
    pub fn init(d_v: usize, d_l: usize, seed: u64) -> Self {
        assert!(d_v >= 1 && d_l >= 1);
        let shape = |idx: usize, rows: usize, cols: usize| {
            let inv = 1.0 / (rows as f64).sqrt();
            Matrix::from_fn(rows, cols, |r, c| {
                unit_f64(chain(&[seed, idx as u64, r as u64, c as u64])) * inv
            })
        };
        ConnectorParams {
            w_q: shape(0, 2 * d_v, d_v),
            w_k: shape(1, 2 * d_v, d_v),
            w_v: shape(2, 2 * d_v, 2 * d_v),
            w_o: shape(3, 2 * d_v, d_v),
            w_1: shape(4, d_v, 3 * d_l),
            w_2: shape(5, d_v, 3 * d_l),
            w_3: shape(6, 3 * d_l, d_l),
        }
    }

    /// Vision feature width (columns of the output projection).
    pub fn d_v(&self) -> usize {
        self.w_o.cols()
    }

    /// Decoder embedding width.
    pub fn d_l(&self) -> usize {
        self.w_3.cols()
    }

    /// Concatenated input width (`2 * d_v`).
    pub fn d_concat(&self) -> usize {
        self.w_q.rows()
    }

    /// Check all dimension relations between the seven matrices.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let d_v = self.d_v();
        let d_l = self.d_l();
        let expect = [
            ("w_q", &self.w_q, 2 * d_v, d_v),
            ("w_k", &self.w_k, 2 * d_v, d_v),
            ("w_v", &self.w_v, 2 * d_v, 2 * d_v),
            ("w_o", &self.w_o, 2 * d_v, d_v),
            ("w_1", &self.w_1, d_v, 3 * d_l),
            ("w_2", &self.w_2, d_v, 3 * d_l),
            ("w_3", &self.w_3, 3 * d_l, d_l),
        ];
        for (name, m, rows, cols) in expect {
            if (m.rows(), m.cols()) != (rows, cols) {
                return Err(ConfigError(format!(
                    "{name} is {}x{}, expected {rows}x{cols} for d_v={d_v}, d_l={d_l}",
                    m.rows(),
                    m.cols()
                )));
            }
        }
        Ok(())
    }

    fn by_name(&self, name: &str) -> &Matrix {
        match name {
            "w_q" => &self.w_q,
            "w_k" => &self.w_k,
            "w_v" => &self.w_v,
            "w_o" => &self.w_o,
            "w_1" => &self.w_1,
            "w_2" => &self.w_2,
            "w_3" => &self.w_3,
            _ => panic!("unknown parameter {name}"),
        }
    }

    fn with_replaced(&self, name: &str, m: Matrix) -> ConnectorParams {
        let mut out = self.clone();
        match name {
            "w_q" => out.w_q = m,
            "w_k" => out.w_k = m,
            "w_v" => out.w_v = m,
            "w_o" => out.w_o = m,
            "w_1" => out.w_1 = m,
            "w_2" => out.w_2 = m,
            "w_3" => out.w_3 = m,
            _ => panic!("unknown parameter {name}"),
        }
        out
    }
}

/// Disjoint grouping of a patch grid into pooled neighborhoods, row-major
/// over the pooled grid. Interior groups are 2x2; an odd final column gets
/// width-1 groups and an odd final row is merged into the last group row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborhoodMap {
    grid_h: usize,
    grid_w: usize,
    pooled_rows: usize,
    pooled_cols: usize,
    groups: Vec<Vec<usize>>,
}

impl NeighborhoodMap {
    pub fn grid_h(&self) -> usize {
        self.grid_h
    }

    pub fn grid_w(&self) -> usize {
        self.grid_w
    }

    pub fn pooled_rows(&self) -> usize {
        self.pooled_rows
    }

    pub fn pooled_cols(&self) -> usize {
        self.pooled_cols
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn group(&self, i: usize) -> &[usize] {
        &self.groups[i]
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn n_patches(&self) -> usize {
        self.grid_h * self.grid_w
    }
}

/// Partition a `grid_h x grid_w` patch grid into pooled neighborhoods:
/// `max(1, grid_h / 2)` group rows by `ceil(grid_w / 2)` group columns,
/// covering every patch exactly once.
pub fn partition_neighborhoods(grid_h: usize, grid_w: usize) -> NeighborhoodMap {
    assert!(grid_h >= 1 && grid_w >= 1);
    let pooled_rows = (grid_h / 2).max(1);
    let pooled_cols = grid_w.div_ceil(2);
    let mut groups = Vec::with_capacity(pooled_rows * pooled_cols);
    for i in 0..pooled_rows {
        let row_start = 2 * i;
        let row_end = if i + 1 == pooled_rows { grid_h } else { 2 * i + 2 };
        for j in 0..pooled_cols {
            let col_start = 2 * j;
            let col_end = (2 * j + 2).min(grid_w);
            let mut members = Vec::with_capacity((row_end - row_start) * (col_end - col_start));
            for y in row_start..row_end {
                for x in col_start..col_end {
                    members.push(y * grid_w + x);
                }
            }
            groups.push(members);
        }
    }
    NeighborhoodMap { grid_h, grid_w, pooled_rows, pooled_cols, groups }
}

/// Mean-pooled query per neighborhood: `M x d_concat` from `N x d_concat`.
/// Boundary groups divide by their actual member count.
///
/// # Panics
/// Panics if `h_concat` does not have one row per grid patch.
pub fn pool_queries(h_concat: &Matrix, map: &NeighborhoodMap) -> Matrix {
    assert_eq!(
        h_concat.rows(),
        map.n_patches(),
        "features rows must equal grid_h * grid_w"
    );
    let cols = h_concat.cols();
    Matrix::from_fn(map.num_groups(), cols, |i, c| {
        let members = map.group(i);
        let mut acc = 0.0;
        for &p in members {
            acc += h_concat.get(p, c);
        }
        acc / members.len() as f64
    })
}

/// Post-softmax attention weights, `M x N`. Each query row sums to 1; in
/// local mode, weights outside the query's own group are exactly zero.
pub fn attention_weights(
    h_concat: &Matrix,
    queries: &Matrix,
    params: &ConnectorParams,
    map: &NeighborhoodMap,
    mode: AttentionMode,
) -> Matrix {
    assert_eq!(h_concat.cols(), params.d_concat(), "feature width mismatch");
    assert_eq!(queries.cols(), params.d_concat(), "query width mismatch");
    assert_eq!(queries.rows(), map.num_groups(), "one query per group");
    assert_eq!(h_concat.rows(), map.n_patches(), "one key per patch");

    let q_proj = matmul(queries, &params.w_q);
    let k_proj = matmul(h_concat, &params.w_k);
    let scale = 1.0 / (params.w_q.cols() as f64).sqrt();
    let scores = matmul(&q_proj, &k_proj.transpose()).scale(scale);

    match mode {
        AttentionMode::Global => crate::numerics::softmax_rows(&scores),
        AttentionMode::Local => {
            let mut out = Matrix::zeros(scores.rows(), scores.cols());
            for (i, members) in map.groups().iter().enumerate() {
                let mut local: Vec<f64> = members.iter().map(|&p| scores.get(i, p)).collect();
                softmax_slice(&mut local);
                for (&p, &w) in members.iter().zip(&local) {
                    out.set(i, p, w);
                }
            }
            out
        }
    }
}

/// Scaled dot-product attention pooling: `softmax(Q Wq (H Wk)^T / sqrt(d_k))
/// (H Wv) Wo`, shape `M x d_v`.
pub fn attention_pool(
    h_concat: &Matrix,
    queries: &Matrix,
    params: &ConnectorParams,
    map: &NeighborhoodMap,
    mode: AttentionMode,
) -> Matrix {
    let weights = attention_weights(h_concat, queries, params, map, mode);
    let v_proj = matmul(h_concat, &params.w_v);
    matmul(&matmul(&weights, &v_proj), &params.w_o)
}

/// Gated projection to the decoder width: `(Swish(H W1) .* (H W2)) W3`,
/// shape `M x d_l`.
pub fn swiglu_project(h_pooled: &Matrix, params: &ConnectorParams) -> Matrix {
    assert_eq!(h_pooled.cols(), params.d_v(), "pooled width mismatch");
    let u1 = matmul(h_pooled, &params.w_1);
    let u2 = matmul(h_pooled, &params.w_2);
    matmul(&swish(&u1).hadamard(&u2), &params.w_3)
}

/// Full per-crop path from concatenated features to decoder-width rows.
pub fn forward_from_concat(
    h_concat: &Matrix,
    params: &ConnectorParams,
    map: &NeighborhoodMap,
    mode: AttentionMode,
) -> Matrix {
    let queries = pool_queries(h_concat, map);
    let pooled = attention_pool(h_concat, &queries, params, map, mode);
    swiglu_project(&pooled, params)
}

fn grid_side_of(n_patches: usize) -> usize {
    let side = (n_patches as f64).sqrt().round() as usize;
    assert_eq!(
        side * side,
        n_patches,
        "crops must form a square patch grid, got N = {n_patches}"
    );
    side
}

/// Run the connector over every crop of a stack. Crops with a 27x27 grid
/// yield 182 output rows each.
pub fn connector_forward(
    stack: &FeatureStack,
    params: &ConnectorParams,
    mode: AttentionMode,
) -> Vec<Matrix> {
    let side = grid_side_of(stack.n_patches());
    let map = partition_neighborhoods(side, side);
    (0..stack.num_crops())
        .map(|crop| forward_from_concat(&concat_layers(stack, crop), params, &map, mode))
        .collect()
}

/// Gradients of `sum(upstream .* forward)` with respect to every parameter
/// matrix and to each crop's concatenated input.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectorGradients {
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
    pub w_o: Matrix,
    pub w_1: Matrix,
    pub w_2: Matrix,
    pub w_3: Matrix,
    pub h_concat: Vec<Matrix>,
}

impl ConnectorGradients {
    fn zeros_like(params: &ConnectorParams) -> Self {
        let z = |m: &Matrix| Matrix::zeros(m.rows(), m.cols());
        ConnectorGradients {
            w_q: z(&params.w_q),
            w_k: z(&params.w_k),
            w_v: z(&params.w_v),
            w_o: z(&params.w_o),
            w_1: z(&params.w_1),
            w_2: z(&params.w_2),
            w_3: z(&params.w_3),
            h_concat: Vec::new(),
        }
    }

    pub fn by_name(&self, name: &str) -> &Matrix {
        match name {
            "w_q" => &self.w_q,
            "w_k" => &self.w_k,
            "w_v" => &self.w_v,
            "w_o" => &self.w_o,
            "w_1" => &self.w_1,
            "w_2" => &self.w_2,
            "w_3" => &self.w_3,
            _ => panic!("unknown parameter {name}"),
        }
    }
}

struct CropTrace {
    q_raw: Matrix,
    q_proj: Matrix,
    k_proj: Matrix,
    v_proj: Matrix,
    weights: Matrix,
    ctx: Matrix,
    pooled: Matrix,
    u1: Matrix,
    u2: Matrix,
    gated: Matrix,
}

fn forward_trace(
    h_concat: &Matrix,
    params: &ConnectorParams,
    map: &NeighborhoodMap,
    mode: AttentionMode,
) -> (CropTrace, Matrix) {
    let q_raw = pool_queries(h_concat, map);
    let q_proj = matmul(&q_raw, &params.w_q);
    let k_proj = matmul(h_concat, &params.w_k);
    let weights = attention_weights(h_concat, &q_raw, params, map, mode);
    let v_proj = matmul(h_concat, &params.w_v);
    let ctx = matmul(&weights, &v_proj);
    let pooled = matmul(&ctx, &params.w_o);
    let u1 = matmul(&pooled, &params.w_1);
    let u2 = matmul(&pooled, &params.w_2);
    let gated = swish(&u1).hadamard(&u2);
    let out = matmul(&gated, &params.w_3);
    (
        CropTrace { q_raw, q_proj, k_proj, v_proj, weights, ctx, pooled, u1, u2, gated },
        out,
    )
}

/// Analytic reverse pass for a single crop. Returns the input gradient and
/// accumulates parameter gradients into `grads`.
fn backward_crop(
    h_concat: &Matrix,
    params: &ConnectorParams,
    map: &NeighborhoodMap,
    mode: AttentionMode,
    upstream: &Matrix,
    grads: &mut ConnectorGradients,
) -> Matrix {
    let (trace, out) = forward_trace(h_concat, params, map, mode);
    assert_eq!(
        (upstream.rows(), upstream.cols()),
        (out.rows(), out.cols()),
        "upstream shape mismatch"
    );

    // SwiGLU block.
    let d_out = upstream;
    grads.w_3.add_in_place(&matmul(&trace.gated.transpose(), d_out));
    let d_gated = matmul(d_out, &params.w_3.transpose());
    let swish_u1 = swish(&trace.u1);
    let d_u2 = d_gated.hadamard(&swish_u1);
    let d_u1 = Matrix::from_fn(trace.u1.rows(), trace.u1.cols(), |r, c| {
        d_gated.get(r, c) * trace.u2.get(r, c) * swish_prime(trace.u1.get(r, c))
    });
    grads.w_1.add_in_place(&matmul(&trace.pooled.transpose(), &d_u1));
    grads.w_2.add_in_place(&matmul(&trace.pooled.transpose(), &d_u2));
    let mut d_pooled = matmul(&d_u1, &params.w_1.transpose());
    d_pooled.add_in_place(&matmul(&d_u2, &params.w_2.transpose()));

    // Output projection and attention-weighted context.
    grads.w_o.add_in_place(&matmul(&trace.ctx.transpose(), &d_pooled));
    let d_ctx = matmul(&d_pooled, &params.w_o.transpose());
    let d_weights = matmul(&d_ctx, &trace.v_proj.transpose());
    let d_v_proj = matmul(&trace.weights.transpose(), &d_ctx);

    // Softmax backward. Zero weights (masked keys) contribute zero, so the
    // same expression serves both modes.
    let d_scores = {
        let a = &trace.weights;
        Matrix::from_fn(a.rows(), a.cols(), |i, j| {
            let row_dot: f64 = (0..a.cols()).map(|k| a.get(i, k) * d_weights.get(i, k)).sum();
            a.get(i, j) * (d_weights.get(i, j) - row_dot)
        })
    };
    let scale = 1.0 / (params.w_q.cols() as f64).sqrt();
    let d_q_proj = matmul(&d_scores, &trace.k_proj).scale(scale);
    let d_k_proj = matmul(&d_scores.transpose(), &trace.q_proj).scale(scale);

    // Projections back to features.
    grads.w_q.add_in_place(&matmul(&trace.q_raw.transpose(), &d_q_proj));
    let d_q_raw = matmul(&d_q_proj, &params.w_q.transpose());
    grads.w_k.add_in_place(&matmul(&h_concat.transpose(), &d_k_proj));
    grads.w_v.add_in_place(&matmul(&h_concat.transpose(), &d_v_proj));
    let mut d_h = matmul(&d_k_proj, &params.w_k.transpose());
    d_h.add_in_place(&matmul(&d_v_proj, &params.w_v.transpose()));

    // Mean-pool backward: distribute each query gradient over its members.
    for (i, members) in map.groups().iter().enumerate() {
        let inv = 1.0 / members.len() as f64;
        for &p in members {
            for c in 0..d_h.cols() {
                d_h.set(p, c, d_h.get(p, c) + d_q_raw.get(i, c) * inv);
            }
        }
    }
    d_h
}

/// Reverse pass over concatenated features of one crop: parameter gradients
/// plus the gradient with respect to `h_concat` itself.
pub fn backward_from_concat(
    h_concat: &Matrix,
    params: &ConnectorParams,
    map: &NeighborhoodMap,
    mode: AttentionMode,
    upstream: &Matrix,
) -> ConnectorGradients {
    let mut grads = ConnectorGradients::zeros_like(params);
    let d_h = backward_crop(h_concat, params, map, mode, upstream, &mut grads);
    grads.h_concat.push(d_h);
    grads
}

/// Reverse pass over a whole stack. Parameter gradients accumulate across
/// crops; `h_concat` holds one input gradient per crop.
pub fn connector_backward(
    stack: &FeatureStack,
    params: &ConnectorParams,
    mode: AttentionMode,
    upstream: &[Matrix],
) -> ConnectorGradients {
    assert_eq!(upstream.len(), stack.num_crops(), "one upstream matrix per crop");
    let side = grid_side_of(stack.n_patches());
    let map = partition_neighborhoods(side, side);
    let mut grads = ConnectorGradients::zeros_like(params);
    for (crop, up) in upstream.iter().enumerate() {
        let h_concat = concat_layers(stack, crop);
        let d_h = backward_crop(&h_concat, params, &map, mode, up, &mut grads);
        grads.h_concat.push(d_h);
    }
    grads
}

/// Guarded max relative error between two same-shape matrices: entries are
/// compared as `|a - b| / max(|a|, |b|, 1e-3)`, so differences below the
/// finite-difference noise floor do not blow up the ratio.
pub fn max_rel_error(a: &Matrix, b: &Matrix) -> f64 {
    assert_eq!((a.rows(), a.cols()), (b.rows(), b.cols()), "shape mismatch");
    a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-3))
        .fold(0.0, f64::max)
}

/// Dimensions and knobs for [`grad_check`]. Defaults are the 5x5-grid toy
/// problem (which exercises the odd-boundary groups) with eps 1e-5 and a
/// 1e-4 pass threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub grid_h: usize,
    pub grid_w: usize,
    pub d_v: usize,
    pub d_l: usize,
    pub mode: AttentionMode,
    pub eps: f64,
    pub threshold: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            grid_h: 5,
            grid_w: 5,
            d_v: 4,
            d_l: 6,
            mode: AttentionMode::Local,
            eps: 1e-5,
            threshold: 1e-4,
        }
    }
}

/// Per-matrix outcome of a gradient verification run.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckEntry {
    pub name: &'static str,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
    pub threshold: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.max_rel_error < self.threshold)
    }
}

impl std::fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for e in &self.entries {
            let verdict = if e.max_rel_error < self.threshold { "PASS" } else { "FAIL" };
            writeln!(f, "{} {:.3e} {verdict}", e.name, e.max_rel_error)?;
        }
        write!(
            f,
            "result {} (threshold {:.0e})",
            if self.passed() { "PASS" } else { "FAIL" },
            self.threshold
        )
    }
}

/// Compare the analytic backward pass against central finite differences on
/// a seeded toy problem: one report entry per weight matrix plus the input.
pub fn grad_check(seed: u64, cfg: &GradCheckConfig) -> GradCheckReport {
    let n = cfg.grid_h * cfg.grid_w;
    let map = partition_neighborhoods(cfg.grid_h, cfg.grid_w);
    let h_concat = Matrix::from_fn(n, 2 * cfg.d_v, |p, c| {
        unit_f32(chain(&[seed, 1, p as u64, c as u64]))
    });
    let params = ConnectorParams::init(cfg.d_v, cfg.d_l, seed ^ 0x5eed_c0de);
    let upstream = Matrix::from_fn(map.num_groups(), cfg.d_l, |i, j| {
        unit_f32(chain(&[seed, 2, i as u64, j as u64]))
    });

    let loss = |h: &Matrix, p: &ConnectorParams| -> f64 {
        let out = forward_from_concat(h, p, &map, cfg.mode);
        out.data().iter().zip(upstream.data()).map(|(a, b)| a * b).sum()
    };

    let analytic = backward_from_concat(&h_concat, &params, &map, cfg.mode, &upstream);
    let mut entries = Vec::with_capacity(PARAM_NAMES.len() + 1);
    for name in PARAM_NAMES {
        let numeric = finite_diff_grad(
            |m| loss(&h_concat, &params.with_replaced(name, m.clone())),
            params.by_name(name),
            cfg.eps,
        );
        entries.push(GradCheckEntry {
            name,
            max_rel_error: max_rel_error(analytic.by_name(name), &numeric),
        });
    }
    let numeric_input = finite_diff_grad(|h| loss(h, &params), &h_concat, cfg.eps);
    entries.push(GradCheckEntry {
        name: "h_concat",
        max_rel_error: max_rel_error(&analytic.h_concat[0], &numeric_input),
    });

    GradCheckReport { entries, threshold: cfg.threshold }
}

const JVP_MAGIC: &[u8; 4] = b"JVP1";

/// Serialize parameters: magic `JVP1`, u32 section count (7), u32 d_v,
/// u32 d_l, u32 reserved = 0, then per matrix (fixed w_q..w_3 order)
/// u32 rows, u32 cols and row-major f64 little-endian values.
pub fn save_params(params: &ConnectorParams) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(JVP_MAGIC);
    out.extend_from_slice(&7u32.to_le_bytes());
    out.extend_from_slice(&(params.d_v() as u32).to_le_bytes());
    out.extend_from_slice(&(params.d_l() as u32).to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for name in PARAM_NAMES {
        let m = params.by_name(name);
        out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
        for &v in m.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Parse a JVP1 parameter container and validate the dimension relations.
pub fn load_params(bytes: &[u8]) -> Result<ConnectorParams, FormatError> {
    if bytes.len() < 4 || &bytes[..4] != JVP_MAGIC {
        return Err(FormatError::BadMagic { offset: 0, expected: "JVP1" });
    }
    let read_u32 = |offset: usize| -> Result<u32, FormatError> {
        if bytes.len() < offset + 4 {
            return Err(FormatError::Truncated {
                offset: bytes.len(),
                expected: offset + 4 - bytes.len(),
            });
        }
        Ok(u32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap()))
    };
    let sections = read_u32(4)?;
    if sections != 7 {
        return Err(FormatError::Header {
            offset: 4,
            reason: format!("expected 7 sections, got {sections}"),
        });
    }
    let reserved = read_u32(16)?;
    if reserved != 0 {
        return Err(FormatError::Header {
            offset: 16,
            reason: format!("reserved field must be 0, got {reserved}"),
        });
    }

    let mut offset = 20;
    let mut matrices = Vec::with_capacity(7);
    for _ in 0..7 {
        let rows = read_u32(offset)? as usize;
        let cols = read_u32(offset + 4)? as usize;
        offset += 8;
        let need = rows * cols * 8;
        if bytes.len() < offset + need {
            return Err(FormatError::Truncated {
                offset: bytes.len(),
                expected: offset + need - bytes.len(),
            });
        }
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            let v = f64::from_le_bytes(bytes[offset..offset + 8].try_into().unwrap());
            if !v.is_finite() {
                return Err(FormatError::Dimensions {
                    offset,
                    reason: "non-finite parameter value".into(),
                });
            }
            data.push(v);
            offset += 8;
        }
        matrices.push(Matrix::from_vec(rows, cols, data));
    }
    if bytes.len() != offset {
        return Err(FormatError::Dimensions {
            offset,
            reason: format!("{} unexpected trailing bytes", bytes.len() - offset),
        });
    }
    let mut it = matrices.into_iter();
    let params = ConnectorParams {
        w_q: it.next().unwrap(),
        w_k: it.next().unwrap(),
        w_v: it.next().unwrap(),
        w_o: it.next().unwrap(),
        w_1: it.next().unwrap(),
        w_2: it.next().unwrap(),
        w_3: it.next().unwrap(),
    };
    params.validate().map_err(|e| FormatError::Dimensions {
        offset: 20,
        reason: e.to_string(),
    })?;
    Ok(params)
}

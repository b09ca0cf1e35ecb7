//! Batch CLI over the tilepool library: tile extraction, the full
//! tile-encode-pool-assemble pipeline, budget reports, gradient checks, and
//! grid overlays. All outputs are deterministic given identical inputs and
//! flags; files are written atomically (temp + rename).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use tilepool::budget::{build_budget_report, LlmConfig, VitConfig};
use tilepool::connector::{
    connector_forward, grad_check, partition_neighborhoods, AttentionMode, ConnectorParams,
    GradCheckConfig,
};
use tilepool::error::ConfigError;
use tilepool::features::{
    load_features, pseudo_encode, save_features, EncoderConfig, FeatureStack,
    DEFAULT_RETAINED_LAYERS,
};
use tilepool::imaging::{read_ppm, write_ppm, Image};
use tilepool::numerics::Matrix;
use tilepool::sequence::{assemble_sequence, DelimiterStyle};
use tilepool::tiling::{
    compute_overlap_geometry, render_grid_overlay, tile_image, TileSet, TilingConfig,
};

#[derive(Parser, Debug)]
#[command(name = "tilepool", version, about = "Overlapping-tile visual token pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Tile an image into a thumbnail plus overlapping crops.
    Tile(TileArgs),
    /// Run tile -> encode -> pool -> sequence and write all artifacts.
    Pipeline(PipelineArgs),
    /// Print the token/FLOPs/KV-cache budget report.
    Budget(BudgetArgs),
    /// Verify analytic connector gradients against finite differences.
    Gradcheck(GradcheckArgs),
    /// Write the resized grid image with tile boundaries marked.
    Render(RenderArgs),
}

#[derive(Args, Debug, Clone)]
struct TilingOpts {
    /// Tile edge in pixels (tiles are square).
    #[arg(long, default_value_t = 378)]
    base: usize,
    /// Patch edge in pixels.
    #[arg(long, default_value_t = 14)]
    patch: usize,
    /// Maximum number of grid tiles.
    #[arg(long, default_value_t = 12)]
    max_tiles: usize,
    /// Top/left overlap margin in patches.
    #[arg(long, default_value_t = 4)]
    margin_left: usize,
    /// Bottom/right overlap margin in patches.
    #[arg(long, default_value_t = 4)]
    margin_right: usize,
}

impl TilingOpts {
    fn to_config(&self) -> Result<TilingConfig> {
        Ok(TilingConfig::new(
            self.base,
            self.base,
            self.patch,
            self.max_tiles,
            self.margin_left,
            self.margin_right,
        )?)
    }
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum ModeOpt {
    Local,
    Global,
}

impl From<ModeOpt> for AttentionMode {
    fn from(m: ModeOpt) -> Self {
        match m {
            ModeOpt::Local => AttentionMode::Local,
            ModeOpt::Global => AttentionMode::Global,
        }
    }
}

#[derive(Args, Debug, Clone)]
struct ConnectorOpts {
    /// Per-layer feature width of the pseudo encoder.
    #[arg(long = "d-v", default_value_t = 8)]
    d_v: usize,
    /// Decoder embedding width of the projection.
    #[arg(long = "d-l", default_value_t = 32)]
    d_l: usize,
    /// Attention masking mode.
    #[arg(long, value_enum, default_value_t = ModeOpt::Local)]
    mode: ModeOpt,
    /// Seed for the pseudo encoder and parameter init.
    #[arg(long, env = "TILEPOOL_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct TileArgs {
    /// Input image (binary PPM/PGM).
    #[arg(long)]
    input: PathBuf,
    /// Directory for numbered crops and the manifest.
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    tiling: TilingOpts,
}

#[derive(Args, Debug)]
struct PipelineArgs {
    /// Input image (binary PPM/PGM). Not needed when --features is given.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Inject encoder features from a JVF file instead of pseudo-encoding.
    #[arg(long)]
    features: Option<PathBuf>,
    /// Also write the (pre-pooling) encoder features as JVF.
    #[arg(long)]
    save_features: Option<PathBuf>,
    /// Output directory for pooled.jvf, sequence.txt, summary.txt.
    #[arg(long)]
    out_dir: PathBuf,
    /// Wrap every crop in its own delimiter pair instead of two pairs total.
    #[arg(long)]
    per_crop_delims: bool,
    #[command(flatten)]
    tiling: TilingOpts,
    #[command(flatten)]
    connector: ConnectorOpts,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum ReportFormat {
    Kv,
    Json,
}

#[derive(Args, Debug)]
struct BudgetArgs {
    /// Named base profile for the decoder-side cost model.
    #[arg(long, default_value = "reference")]
    profile: String,
    #[command(flatten)]
    tiling: TilingOpts,
    /// Pooled tokens per crop; derived from the patch grid when omitted.
    #[arg(long)]
    pooled_per_crop: Option<usize>,
    #[arg(long)]
    llm_layers: Option<usize>,
    #[arg(long)]
    llm_hidden: Option<usize>,
    #[arg(long)]
    llm_kv_width: Option<usize>,
    #[arg(long)]
    llm_params: Option<f64>,
    #[arg(long)]
    bytes_per_value: Option<usize>,
    #[arg(long)]
    vit_params: Option<f64>,
    #[arg(long)]
    vit_tokens_per_crop: Option<usize>,
    #[arg(long, value_enum, default_value_t = ReportFormat::Kv)]
    format: ReportFormat,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[arg(long, env = "TILEPOOL_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    grid_h: usize,
    #[arg(long, default_value_t = 5)]
    grid_w: usize,
    #[arg(long = "d-v", default_value_t = 4)]
    d_v: usize,
    #[arg(long = "d-l", default_value_t = 6)]
    d_l: usize,
    #[arg(long, value_enum, default_value_t = ModeOpt::Local)]
    mode: ModeOpt,
}

#[derive(Args, Debug)]
struct RenderArgs {
    #[arg(long)]
    input: PathBuf,
    /// Output overlay image (PPM/PGM, matches the input channel count).
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    tiling: TilingOpts,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let usage = e.chain().any(|c| c.downcast_ref::<ConfigError>().is_some());
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Tile(args) => cmd_tile(args),
        Command::Pipeline(args) => cmd_pipeline(args),
        Command::Budget(args) => cmd_budget(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
        Command::Render(args) => cmd_render(args),
    }
}

/// Write via a temp file in the same directory, then rename into place.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

fn read_image(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    read_ppm(&bytes).with_context(|| format!("parsing {}", path.display()))
}

fn cmd_tile(args: TileArgs) -> Result<ExitCode> {
    let cfg = args.tiling.to_config()?;
    let img = read_image(&args.input)?;
    let set = tile_image(&img, &cfg);
    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;

    for (i, crop) in set.crops().enumerate() {
        let path = args.out_dir.join(format!("crop_{i:03}.ppm"));
        write_atomic(&path, &write_ppm(crop))?;
    }
    write_atomic(&args.out_dir.join("manifest.txt"), manifest_text(&set, &cfg).as_bytes())?;

    println!(
        "plan {} {} {} {}",
        set.plan.rows, set.plan.cols, set.plan.grid_h, set.plan.grid_w
    );
    Ok(ExitCode::SUCCESS)
}

fn manifest_text(set: &TileSet, cfg: &TilingConfig) -> String {
    let geom = compute_overlap_geometry(cfg);
    let plan = &set.plan;
    let mut s = String::new();
    s.push_str(&format!("rows {}\n", plan.rows));
    s.push_str(&format!("cols {}\n", plan.cols));
    s.push_str(&format!("s_win {}\n", geom.s_win));
    s.push_str(&format!("m_tot {}\n", geom.m_tot));
    s.push_str(&format!("grid_h {}\n", plan.grid_h));
    s.push_str(&format!("grid_w {}\n", plan.grid_w));
    s.push_str(&format!("base_h {}\n", cfg.base_h));
    s.push_str(&format!("base_w {}\n", cfg.base_w));
    s.push_str("crop 000 thumbnail 0 0\n");
    for r in 0..plan.rows {
        for c in 0..plan.cols {
            let idx = 1 + r * plan.cols + c;
            s.push_str(&format!("crop {idx:03} tile {} {}\n", r * geom.s_win, c * geom.s_win));
        }
    }
    s
}

fn cmd_pipeline(args: PipelineArgs) -> Result<ExitCode> {
    let cfg = args.tiling.to_config()?;
    let mode: AttentionMode = args.connector.mode.into();

    // Either pseudo-encode an image or inject a JVF feature stack.
    let (stack, n_tiles): (FeatureStack, usize) = match (&args.features, &args.input) {
        (Some(jvf_path), _) => {
            let bytes = fs::read(jvf_path).with_context(|| format!("reading {}", jvf_path.display()))?;
            let stack = load_features(&bytes).with_context(|| format!("parsing {}", jvf_path.display()))?;
            if stack.num_layers() < 2 {
                bail!(
                    "{} holds {} retained layer(s); the connector concatenates two",
                    jvf_path.display(),
                    stack.num_layers()
                );
            }
            let n_tiles = stack.num_crops() - 1;
            (stack, n_tiles)
        }
        (None, Some(img_path)) => {
            let img = read_image(img_path)?;
            let set = tile_image(&img, &cfg);
            let enc = EncoderConfig::for_tiling(&cfg, args.connector.d_v, DEFAULT_RETAINED_LAYERS.to_vec())?;
            let stack = pseudo_encode(&set, &enc, args.connector.seed);
            (stack, set.plan.n_tiles())
        }
        (None, None) => bail!(ConfigError("pipeline needs --input or --features".into())),
    };

    let side = (stack.n_patches() as f64).sqrt().round() as usize;
    if side * side != stack.n_patches() {
        bail!("feature stack has N = {} patches, which is not a square grid", stack.n_patches());
    }
    let map = partition_neighborhoods(side, side);

    let params = ConnectorParams::init(stack.d_v(), args.connector.d_l, args.connector.seed);
    let outputs = connector_forward(&stack, &params, mode);

    let style = if args.per_crop_delims { DelimiterStyle::PerCrop } else { DelimiterStyle::Grouped };
    let seq = assemble_sequence(n_tiles, map.pooled_rows(), map.pooled_cols(), style);

    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;
    if let Some(path) = &args.save_features {
        write_atomic(path, &save_features(&stack))?;
    }
    // Pooled outputs reuse the JVF container as a single-layer stack.
    let pooled_stack = FeatureStack::new(vec![0], outputs.iter().map(|m| vec![m.clone()]).collect());
    write_atomic(&args.out_dir.join("pooled.jvf"), &save_features(&pooled_stack))?;
    let mut seq_text = seq.to_text();
    seq_text.push('\n');
    write_atomic(&args.out_dir.join("sequence.txt"), seq_text.as_bytes())?;

    let summary = summary_text(&stack, &outputs, seq.len());
    write_atomic(&args.out_dir.join("summary.txt"), summary.as_bytes())?;
    print!("{summary}");
    Ok(ExitCode::SUCCESS)
}

fn summary_text(stack: &FeatureStack, outputs: &[Matrix], sequence_len: usize) -> String {
    let pooled_per_crop = outputs.first().map_or(0, Matrix::rows);
    let mut s = String::new();
    s.push_str(&format!("crops {}\n", stack.num_crops()));
    s.push_str(&format!("n_patches {}\n", stack.n_patches()));
    s.push_str(&format!("pooled_per_crop {pooled_per_crop}\n"));
    s.push_str(&format!("patch_tokens {}\n", stack.num_crops() * pooled_per_crop));
    s.push_str(&format!("sequence_len {sequence_len}\n"));
    s
}

fn cmd_budget(args: BudgetArgs) -> Result<ExitCode> {
    if args.profile != "reference" {
        bail!(ConfigError(format!("unknown budget profile {:?} (available: reference)", args.profile)));
    }
    let cfg = args.tiling.to_config()?;
    let mut llm = LlmConfig::reference_profile();
    if let Some(v) = args.llm_layers {
        llm.n_layers = v;
    }
    if let Some(v) = args.llm_hidden {
        llm.hidden = v;
    }
    if let Some(v) = args.llm_kv_width {
        llm.kv_width = v;
    }
    if let Some(v) = args.llm_params {
        llm.nonembed_params = v;
    }
    if let Some(v) = args.bytes_per_value {
        llm.bytes_per_value = v;
    }
    llm.validate()?;
    let mut vit = VitConfig::reference_profile();
    if let Some(v) = args.vit_params {
        vit.nonembed_params = v;
    }
    if let Some(v) = args.vit_tokens_per_crop {
        vit.tokens_per_crop = v;
    }
    vit.validate()?;

    let pooled_per_crop = match args.pooled_per_crop {
        Some(v) if v >= 1 => v,
        Some(v) => bail!(ConfigError(format!("pooled-per-crop must be >= 1, got {v}"))),
        None => partition_neighborhoods(cfg.grid_side(), cfg.grid_side()).num_groups(),
    };

    let report = build_budget_report(&cfg, pooled_per_crop, &llm, &vit);
    match args.format {
        ReportFormat::Kv => print!("{}", report.to_kv_text()),
        ReportFormat::Json => println!("{}", report.to_json()),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_gradcheck(args: GradcheckArgs) -> Result<ExitCode> {
    if args.grid_h == 0 || args.grid_w == 0 || args.d_v == 0 || args.d_l == 0 {
        bail!(ConfigError("gradcheck dimensions must be >= 1".into()));
    }
    let cfg = GradCheckConfig {
        grid_h: args.grid_h,
        grid_w: args.grid_w,
        d_v: args.d_v,
        d_l: args.d_l,
        mode: args.mode.into(),
        ..GradCheckConfig::default()
    };
    let report = grad_check(args.seed, &cfg);
    println!("{report}");
    Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_render(args: RenderArgs) -> Result<ExitCode> {
    let cfg = args.tiling.to_config()?;
    let img = read_image(&args.input)?;
    let overlay = render_grid_overlay(&img, &cfg);
    if let Some(parent) = args.output.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
    }
    write_atomic(&args.output, &write_ppm(&overlay))?;
    println!("overlay {} {}", overlay.height(), overlay.width());
    Ok(ExitCode::SUCCESS)
}

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use pathdyn::dynamics::{FtleMethod, StrainReconstruction};
use pathdyn::simfield::Colormap;

pub const DEFAULT_PORT: u16 = 8080;

#[derive(Debug, Parser)]
#[command(name = "pathdyn", version, about = "Pathline dynamics similarity for 2D unsteady flows")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rasterize a closed-form flow into a VF2D dataset
    GenField(GenFieldArgs),
    /// Validate a VF2D file, or wrap raw little-endian f32 velocities, and write VF2D
    Ingest(IngestArgs),
    /// Advect every seed and store its α/β progressions in a cache
    BuildDynamics(BuildArgs),
    /// Similarity field of a cache against a reference region
    Similarity(SimilarityArgs),
    /// FTLE field of a dataset
    Ftle(FtleArgs),
    /// Serve loaded caches over HTTP
    Serve(ServeArgs),
}

/// `lo,hi`
pub fn parse_interval(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected lo,hi, got {s:?}"))?;
    let a: f64 = a.trim().parse().map_err(|e| format!("{a:?}: {e}"))?;
    let b: f64 = b.trim().parse().map_err(|e| format!("{b:?}: {e}"))?;
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(format!("need finite lo < hi, got {s:?}"));
    }
    Ok((a, b))
}

/// Bins per invariant: a count, or `auto` for `round(√N)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Bins {
    #[default]
    Auto,
    Count(usize),
}

impl Bins {
    pub fn count(self) -> Option<usize> {
        match self {
            Bins::Auto => None,
            Bins::Count(n) => Some(n),
        }
    }
}

impl std::str::FromStr for Bins {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "auto" {
            return Ok(Bins::Auto);
        }
        match s.parse::<usize>() {
            Ok(n) if n >= 2 => Ok(Bins::Count(n)),
            _ => Err(format!("expected \"auto\" or an integer ≥ 2, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    /// Domain extent in x
    #[arg(long, value_parser = parse_interval, allow_hyphen_values = true, default_value = "0,2")]
    pub x_range: (f64, f64),
    /// Domain extent in y
    #[arg(long, value_parser = parse_interval, allow_hyphen_values = true, default_value = "0,1")]
    pub y_range: (f64, f64),
    /// Covered time interval
    #[arg(long, value_parser = parse_interval, allow_hyphen_values = true, default_value = "0,10")]
    pub t_range: (f64, f64),
    #[arg(long, default_value_t = 256)]
    pub nx: usize,
    #[arg(long, default_value_t = 128)]
    pub ny: usize,
    /// Number of time frames
    #[arg(long, default_value_t = 101)]
    pub nt: usize,
}

#[derive(Debug, Args)]
pub struct GenFieldArgs {
    /// constant, rigid_rotation, saddle, double_gyre or two_population
    #[arg(long)]
    pub flow: String,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    pub input: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
    /// Treat the input as headerless f32 (u, v) pairs, frame-major, laid out
    /// on the grid given by the grid flags
    #[arg(long)]
    pub raw: bool,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Clone, Args)]
pub struct IntegrationArgs {
    /// Seeding time
    #[arg(long, allow_negative_numbers = true)]
    pub t0: f64,
    /// Signed integration time; negative integrates backward
    #[arg(long, allow_negative_numbers = true)]
    pub tau: f64,
    /// Sample distance Δt
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
    /// Adaptive step error tolerance
    #[arg(long, default_value_t = pathdyn::advect::DEFAULT_RK_TOL)]
    pub rk_tol: f64,
    /// Seed at every stride-th grid node
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[arg(long)]
    pub field: PathBuf,
    #[command(flatten)]
    pub integration: IntegrationArgs,
    #[arg(long, short)]
    pub out: PathBuf,
    /// Run on one thread
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Args)]
pub struct SimilarityArgs {
    #[arg(long)]
    pub cache: PathBuf,
    /// circle:cx,cy,r | ellipse:cx,cy,rx,ry[,angle] | polygon:x,y;x,y;x,y[;...]
    #[arg(long, allow_hyphen_values = true)]
    pub region: String,
    /// Bins per invariant, or auto
    #[arg(long, default_value = "auto")]
    pub bins: Bins,
    /// Reject the cache unless it was built from this dataset
    #[arg(long)]
    pub field: Option<PathBuf>,
    #[arg(long)]
    pub out_image: Option<PathBuf>,
    /// SF2D output; provenance goes to <path>.meta.toml
    #[arg(long)]
    pub out_field: Option<PathBuf>,
    #[arg(long, default_value = "viridis")]
    pub colormap: Colormap,
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Args)]
pub struct FtleArgs {
    #[arg(long)]
    pub field: PathBuf,
    #[command(flatten)]
    pub integration: IntegrationArgs,
    /// flow_map, localized or strain_sum
    #[arg(long, default_value = "flow_map")]
    pub method: FtleMethod,
    /// Strain-sum reconstruction: logarithmic or green_lagrange
    #[arg(long, default_value = "logarithmic")]
    pub reconstruction: StrainReconstruction,
    /// PNG, colour-mapped over the finite value range
    #[arg(long)]
    pub out_image: Option<PathBuf>,
    /// SF2D output; parameters go to <path>.meta.toml
    #[arg(long)]
    pub out_field: Option<PathBuf>,
    #[arg(long, default_value = "viridis")]
    pub colormap: Colormap,
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Cache files to load; the id is the file stem
    #[arg(long = "cache")]
    pub caches: Vec<PathBuf>,
    /// Also load every *.dync file in this directory
    #[arg(long, env = "PATHDYN_CACHE_DIR")]
    pub cache_dir: Option<PathBuf>,
    #[arg(long, env = "PATHDYN_PORT", default_value_t = DEFAULT_PORT)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: std::net::IpAddr,
}

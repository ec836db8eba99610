//! Subcommands. Each one composes library calls and reports `key=value`
//! summary lines.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use pathdyn::advect::{IntegrationParams, SeedGrid};
use pathdyn::distribution::Region;
use pathdyn::dynamics::{ftle_field, FtleMethod, StrainReconstruction};
use pathdyn::exec::Exec;
use pathdyn::field::{load_dataset, make_analytic, save_dataset, DatasetHeader, GridSpec, VectorField2D};
use pathdyn::simfield::{
    export_field, finite_range, raster, render, save_png, sidecar_path, write_scalar_grid, DivergenceField,
};
use pathdyn::store::{build_cache, load_cache, load_cache_for, save_cache, DynamicsCache};
use serde::Serialize;

use crate::args::{BuildArgs, Cli, Command, FtleArgs, GenFieldArgs, GridArgs, IngestArgs, IntegrationArgs, SimilarityArgs};
use crate::error::CliError;
use crate::service;

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::GenField(a) => gen_field(&a, out),
        Command::Ingest(a) => ingest(&a, out),
        Command::BuildDynamics(a) => build_dynamics(&a, out),
        Command::Similarity(a) => similarity(&a, out).map(|_| ()),
        Command::Ftle(a) => ftle(&a, out),
        Command::Serve(a) => service::serve_blocking(&a, out),
    }
}

fn exec(sequential: bool) -> Exec {
    if sequential {
        Exec::Sequential
    } else {
        Exec::Parallel
    }
}

fn ms(d: std::time::Duration) -> String {
    format!("{:.3}", d.as_secs_f64() * 1e3)
}

fn open_field(path: &Path) -> Result<VectorField2D, CliError> {
    load_dataset(path).map_err(|e| CliError::from(e).at(path))
}

fn grid_spec(g: &GridArgs) -> Result<GridSpec, CliError> {
    Ok(GridSpec::from_extent(g.x_range, g.y_range, g.nx, g.ny, g.t_range, g.nt)?)
}

fn integration(a: &IntegrationArgs, spec: &GridSpec) -> Result<(IntegrationParams, SeedGrid), CliError> {
    let params = IntegrationParams::with_tolerance(a.t0, a.tau, a.dt, a.rk_tol)?;
    params.check_against(spec)?;
    Ok((params, SeedGrid::from_grid(spec, a.stride)?))
}

fn describe_field(field: &VectorField2D, path: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let s = field.spec();
    writeln!(
        out,
        "field={} nx={} ny={} nt={} t=[{},{}] fingerprint={}",
        path.display(),
        s.nx,
        s.ny,
        s.nt,
        s.t_min,
        s.t_max,
        pathdyn::store::hex(&field.fingerprint())
    )?;
    Ok(())
}

pub fn gen_field(a: &GenFieldArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let field = make_analytic(&a.flow, grid_spec(&a.grid)?)?;
    save_dataset(&field, &a.out)?;
    describe_field(&field, &a.out, out)
}

pub fn ingest(a: &IngestArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let field = if a.raw {
        let spec = grid_spec(&a.grid)?;
        let expected = DatasetHeader { spec }.payload_bytes()?;
        let actual = fs::metadata(&a.input).map_err(|e| CliError::from(e).at(&a.input))?.len();
        if actual != expected {
            return Err(pathdyn::field::FieldError::SizeMismatch { expected, actual }.into());
        }
        let data = fs::read(&a.input)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        VectorField2D::from_raw(spec, data)?
    } else {
        open_field(&a.input)?
    };
    save_dataset(&field, &a.out)?;
    describe_field(&field, &a.out, out)
}

pub fn build_dynamics(a: &BuildArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let field = open_field(&a.field)?;
    let (params, seeds) = integration(&a.integration, field.spec())?;
    let (cache, stats) = build_cache(&field, &params, &seeds, exec(a.sequential))?;
    save_cache(&cache, &a.out)?;
    writeln!(
        out,
        "cache={} seeds={}x{} steps={} bytes={} build_ms={} fingerprint={}",
        a.out.display(),
        seeds.nx,
        seeds.ny,
        cache.header.steps,
        stats.byte_size,
        ms(stats.wall_time),
        cache.header.fingerprint_hex()
    )?;
    Ok(())
}

/// Runs the query and returns the field, so callers can inspect it.
pub fn similarity(a: &SimilarityArgs, out: &mut dyn Write) -> Result<DivergenceField, CliError> {
    let exec = exec(a.sequential);
    let region: Region = a.region.parse()?;
    let field = a.field.as_deref().map(open_field).transpose()?;
    let cache: DynamicsCache = match &field {
        Some(f) => load_cache_for(&a.cache, f, exec),
        None => load_cache(&a.cache, None, exec),
    }
    .map_err(|e| CliError::from(e).at(&a.cache))?;
    let q = cache.query(&region, a.bins.count(), exec)?;
    if let Some(path) = &a.out_image {
        render(&q.field, a.colormap, path)?;
    }
    if let Some(path) = &a.out_field {
        export_field(&q.field, path)?;
    }
    let masked = q.field.values.iter().filter(|v| !v.is_finite()).count();
    write!(
        out,
        "seeds={}x{} bins={} reference_ms={} field_ms={} masked={}",
        q.field.nx(),
        q.field.ny(),
        q.field.reference.policy.n,
        ms(q.reference_time),
        ms(q.field_time),
        masked
    )?;
    if let Some(k) = q.field.argmax() {
        let p = cache.header.seeds.seed(k);
        write!(out, " argmax={k} argmax_x={} argmax_y={} max={}", p.x, p.y, q.field.values[k])?;
    }
    if let Some(f) = &field {
        // the dataset was only hashed, never sampled
        write!(out, " field_samples={}", f.samples_taken())?;
    }
    writeln!(out)?;
    Ok(q.field)
}

#[derive(Serialize)]
struct FtleProvenance {
    fingerprint: String,
    integration: IntegrationParams,
    seeds: SeedGrid,
    method: FtleMethod,
    reconstruction: StrainReconstruction,
}

pub fn ftle(a: &FtleArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let field = open_field(&a.field)?;
    let (params, seeds) = integration(&a.integration, field.spec())?;
    let start = Instant::now();
    let f = ftle_field(&field, &params, &seeds, a.method, a.reconstruction, exec(a.sequential));
    let elapsed = start.elapsed();
    let range = finite_range(&f.values);
    if let Some(path) = &a.out_image {
        save_png(&raster(&f.values, seeds.nx, seeds.ny, range.unwrap_or([0.0, 1.0]), a.colormap), path)?;
    }
    if let Some(path) = &a.out_field {
        let values: Vec<f32> = f.values.iter().map(|&v| v as f32).collect();
        write_scalar_grid(seeds.nx, seeds.ny, &values, BufWriter::new(fs::File::create(path)?))?;
        let meta = FtleProvenance {
            fingerprint: pathdyn::store::hex(&field.fingerprint()),
            integration: params,
            seeds,
            method: a.method,
            reconstruction: a.reconstruction,
        };
        let text = toml::to_string(&meta).map_err(|e| CliError::new("format", e.to_string()))?;
        fs::write(sidecar_path(path), text)?;
    }
    let undefined = f.values.iter().filter(|v| !v.is_finite()).count();
    let [lo, hi] = range.unwrap_or([f64::NAN, f64::NAN]);
    writeln!(
        out,
        "seeds={}x{} method={} min={lo} max={hi} undefined={undefined} ms={}",
        seeds.nx,
        seeds.ny,
        method_name(a.method),
        ms(elapsed)
    )?;
    Ok(())
}

fn method_name(m: FtleMethod) -> &'static str {
    match m {
        FtleMethod::FlowMap => "flow_map",
        FtleMethod::Localized => "localized",
        FtleMethod::StrainSum => "strain_sum",
    }
}


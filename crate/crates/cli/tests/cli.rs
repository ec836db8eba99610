use std::path::{Path, PathBuf};
use std::process::Command as Process;

use clap::Parser;
use pathdyn::advect::{IntegrationParams, SeedGrid};
use pathdyn::distribution::Region;
use pathdyn::dynamics::{ftle_field, FtleMethod, StrainReconstruction};
use pathdyn::exec::Exec;
use pathdyn::field::{load_dataset, make_analytic, save_dataset, GridSpec};
use pathdyn::simfield::{load_provenance, load_scalar_grid};
use pathdyn::store::{build_cache, load_cache_for};
use pathdyn_cli::args::{Bins, Command};
use pathdyn_cli::{run, Cli, CliError};
use tempfile::TempDir;

fn cli(args: &[&str]) -> Result<String, CliError> {
    let parsed = Cli::try_parse_from(std::iter::once("pathdyn").chain(args.iter().copied()))
        .map_err(|e| CliError::usage(e.to_string()))?;
    let mut out = Vec::new();
    run(parsed, &mut out)?;
    Ok(String::from_utf8(out).unwrap())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn value<'a>(line: &'a str, key: &str) -> &'a str {
    line.split_whitespace()
        .find_map(|kv| kv.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .unwrap_or_else(|| panic!("{key} missing in {line:?}"))
}

fn bits(v: &[f32]) -> Vec<u32> {
    v.iter().map(|x| x.to_bits()).collect()
}

/// two_population on [0,2]×[0,1], cache seeded at every other node.
fn two_population(dir: &TempDir) -> (PathBuf, PathBuf) {
    let field = dir.path().join("two.vf2d");
    let cache = dir.path().join("two.dync");
    cli(&["gen-field", "--flow", "two_population", "--nx", "101", "--ny", "51", "--t-range", "0,1", "--nt", "2", "-o", s(&field)])
        .unwrap();
    cli(&["build-dynamics", "--field", s(&field), "--t0", "0", "--tau", "1", "--stride", "2", "-o", s(&cache)]).unwrap();
    (field, cache)
}

#[test]
fn similarity_matches_in_process_pipeline() {
    let dir = TempDir::new().unwrap();
    let (field_path, cache_path) = two_population(&dir);
    let out_field = dir.path().join("sim.sf2d");
    let out_image = dir.path().join("sim.png");
    let line = cli(&[
        "similarity",
        "--cache",
        s(&cache_path),
        "--region",
        "circle:0.5,0.5,0.25",
        "--out-field",
        s(&out_field),
        "--out-image",
        s(&out_image),
    ])
    .unwrap();

    let spec = GridSpec::from_extent((0.0, 2.0), (0.0, 1.0), 101, 51, (0.0, 1.0), 2).unwrap();
    let field = make_analytic("two_population", spec).unwrap();
    let params = IntegrationParams::new(0.0, 1.0, 0.01).unwrap();
    let seeds = SeedGrid::from_grid(&spec, 2).unwrap();
    let (cache, _) = build_cache(&field, &params, &seeds, Exec::Sequential).unwrap();
    let q = cache.query(&Region::circle(0.5, 0.5, 0.25), None, Exec::Sequential).unwrap();

    let grid = load_scalar_grid(&out_field).unwrap();
    assert_eq!((grid.nx, grid.ny), (seeds.nx, seeds.ny));
    assert_eq!(bits(&grid.values), bits(&q.field.values_f32()));
    assert_eq!(load_provenance(&out_field).unwrap(), q.field.provenance);
    assert_eq!(value(&line, "bins"), "10");
    assert_eq!(load_dataset(&field_path).unwrap().fingerprint(), field.fingerprint());

    // rotation side against the saddle side
    let mean = |pick: &dyn Fn(f64) -> bool| {
        let v: Vec<f64> = (0..seeds.len())
            .filter(|&k| pick(seeds.seed(k).x) && (0.2..=0.8).contains(&seeds.seed(k).y))
            .map(|k| f64::from(grid.values[k]))
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let left = mean(&|x| (0.2..=0.8).contains(&x));
    let right = mean(&|x| (1.2..=1.8).contains(&x));
    assert!(left < 0.1, "left mean {left}");
    assert!(right > 0.7, "right mean {right}");
    let img = image_dims(&out_image);
    assert_eq!(img, (seeds.nx as u32, seeds.ny as u32));
}

fn image_dims(path: &Path) -> (u32, u32) {
    let bytes = std::fs::read(path).unwrap();
    assert_eq!(&bytes[1..4], b"PNG");
    let be = |i: usize| u32::from_be_bytes(bytes[i..i + 4].try_into().unwrap());
    (be(16), be(20))
}

#[test]
fn repeated_queries_reuse_the_cache() {
    let dir = TempDir::new().unwrap();
    let (field_path, cache_path) = two_population(&dir);
    let before = std::fs::read(&cache_path).unwrap();
    for region in ["circle:0.5,0.5,0.2", "polygon:1.3,0.3;1.7,0.3;1.7,0.7"] {
        let line = cli(&["similarity", "--cache", s(&cache_path), "--field", s(&field_path), "--region", region]).unwrap();
        assert_eq!(value(&line, "field_samples"), "0");
    }
    assert_eq!(std::fs::read(&cache_path).unwrap(), before);

    let field = load_dataset(&field_path).unwrap();
    let cache = load_cache_for(&cache_path, &field, Exec::Parallel).unwrap();
    cache.query(&Region::circle(0.5, 0.5, 0.2), None, Exec::Parallel).unwrap();
    cache.query(&Region::circle(1.5, 0.5, 0.2), Some(6), Exec::Parallel).unwrap();
    assert_eq!(field.samples_taken(), 0);
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn ftle_methods_correlate_on_double_gyre() {
    let dir = TempDir::new().unwrap();
    let field = dir.path().join("gyre.vf2d");
    cli(&["gen-field", "--flow", "double_gyre", "--nx", "129", "--ny", "65", "-o", s(&field)]).unwrap();
    let mut fields = Vec::new();
    for method in ["flow_map", "strain_sum"] {
        let out = dir.path().join(format!("{method}.sf2d"));
        let png = dir.path().join(format!("{method}.png"));
        let line = cli(&[
            "ftle", "--field", s(&field), "--t0", "0", "--tau", "2", "--dt", "0.01", "--method", method, "--out-field",
            s(&out), "--out-image", s(&png),
        ])
        .unwrap();
        assert_eq!(value(&line, "method"), method);
        assert!(dir.path().join(format!("{method}.sf2d.meta.toml")).exists());
        fields.push(load_scalar_grid(&out).unwrap().values);
    }
    let (a, b): (Vec<f64>, Vec<f64>) = fields[0]
        .iter()
        .zip(&fields[1])
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .map(|(&x, &y)| (f64::from(x), f64::from(y)))
        .unzip();
    assert!(a.len() > 129 * 65 / 2);
    let r = pearson(&a, &b);
    assert!(r >= 0.8, "r = {r}");

    // the CLI output is the library result
    let f = load_dataset(&field).unwrap();
    let params = IntegrationParams::new(0.0, 2.0, 0.01).unwrap();
    let seeds = SeedGrid::from_grid(f.spec(), 1).unwrap();
    let lib = ftle_field(&f, &params, &seeds, FtleMethod::StrainSum, StrainReconstruction::Logarithmic, Exec::Parallel);
    let lib: Vec<f32> = lib.values.iter().map(|&v| v as f32).collect();
    assert_eq!(bits(&fields[1]), bits(&lib));
}

#[test]
fn raw_ingest_round_trips() {
    let dir = TempDir::new().unwrap();
    let spec = GridSpec::from_extent((-1.0, 1.0), (0.0, 1.0), 9, 5, (0.0, 2.0), 3).unwrap();
    let field = make_analytic("saddle", spec).unwrap();
    let raw = dir.path().join("saddle.f32");
    let bytes: Vec<u8> = field.raw().iter().flat_map(|v| v.to_le_bytes()).collect();
    std::fs::write(&raw, &bytes).unwrap();
    let out = dir.path().join("saddle.vf2d");
    let grid = ["--nx", "9", "--ny", "5", "--nt", "3", "--x-range", "-1,1", "--y-range", "0,1", "--t-range", "0,2"];
    let mut args = vec!["ingest", s(&raw), "--raw", "-o", s(&out)];
    args.extend(grid);
    let line = cli(&args).unwrap();
    assert_eq!(value(&line, "fingerprint"), pathdyn::store::hex(&field.fingerprint()));
    assert_eq!(load_dataset(&out).unwrap().raw(), field.raw());

    // VF2D input is validated and copied
    let again = dir.path().join("copy.vf2d");
    cli(&["ingest", s(&out), "-o", s(&again)]).unwrap();
    assert_eq!(std::fs::read(&again).unwrap(), std::fs::read(&out).unwrap());

    std::fs::write(&raw, &bytes[..bytes.len() - 4]).unwrap();
    let mut args = vec!["ingest", s(&raw), "--raw", "-o", s(&out)];
    args.extend(grid);
    assert_eq!(cli(&args).unwrap_err().code, "size_mismatch");
}

#[test]
fn argument_validation() {
    assert!(cli(&["similarity", "--cache", "c.dync", "--region", "circle:0,0,1", "--bins", "1"]).is_err());
    let parsed = Cli::try_parse_from(["pathdyn", "similarity", "--cache", "c", "--region", "circle:0,0,1", "--bins", "12"]);
    match parsed.unwrap().command {
        Command::Similarity(a) => assert_eq!(a.bins, Bins::Count(12)),
        _ => unreachable!(),
    }
    let parsed = Cli::try_parse_from(["pathdyn", "build-dynamics", "--field", "f", "--t0", "15", "--tau", "-15", "-o", "c"]);
    match parsed.unwrap().command {
        Command::BuildDynamics(a) => {
            assert_eq!(a.integration.tau, -15.0);
            assert_eq!(a.integration.dt, 0.01);
        }
        _ => unreachable!(),
    }
    assert!(Cli::try_parse_from(["pathdyn", "gen-field", "--flow", "saddle", "--x-range", "2,1", "-o", "f"]).is_err());
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("f.vf2d");
    assert_eq!(cli(&["gen-field", "--flow", "vortex", "-o", s(&out)]).unwrap_err().code, "unknown_flow");
    assert_eq!(cli(&["gen-field", "--flow", "saddle", "--nt", "1", "-o", s(&out)]).unwrap_err().code, "invalid_grid");
}

#[test]
fn serve_reads_port_and_cache_dir_from_env() {
    std::env::set_var("PATHDYN_PORT", "9123");
    std::env::set_var("PATHDYN_CACHE_DIR", "/srv/caches");
    let parsed = Cli::try_parse_from(["pathdyn", "serve"]).unwrap();
    std::env::remove_var("PATHDYN_PORT");
    std::env::remove_var("PATHDYN_CACHE_DIR");
    match parsed.command {
        Command::Serve(a) => {
            assert_eq!(a.port, 9123);
            assert_eq!(a.cache_dir.as_deref(), Some(Path::new("/srv/caches")));
        }
        _ => unreachable!(),
    }
}

fn binary(args: &[&str]) -> (i32, String, String) {
    let out = Process::new(env!("CARGO_BIN_EXE_pathdyn"))
        .args(args)
        .env_remove("PATHDYN_PORT")
        .env_remove("PATHDYN_CACHE_DIR")
        .output()
        .unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

fn error_code(stderr: &str) -> &str {
    let line = stderr.lines().last().unwrap();
    assert!(line.starts_with("ERROR code="), "{line:?}");
    assert!(line.contains(" msg=\""), "{line:?}");
    line["ERROR code=".len()..].split_whitespace().next().unwrap()
}

#[test]
fn binary_exit_codes_and_error_lines() {
    let dir = TempDir::new().unwrap();
    let (field, cache) = two_population(&dir);

    let (code, stdout, _) = binary(&["similarity", "--cache", s(&cache), "--region", "ellipse:1,0.5,0.3,0.2,0.5"]);
    assert_eq!(code, 0);
    assert!(stdout.starts_with("seeds=51x26 "));

    let (code, _, err) = binary(&["similarity", "--cache", s(&cache), "--region", "circle:9,9,0.1"]);
    assert_eq!((code, error_code(&err)), (1, "empty_region"));

    let (code, _, err) = binary(&["similarity", "--cache", s(&cache), "--region", "square:1"]);
    assert_eq!((code, error_code(&err)), (1, "invalid_region"));

    let (code, _, err) = binary(&["frobnicate"]);
    assert_eq!((code, error_code(&err)), (2, "usage"));

    let (code, _, err) = binary(&["similarity", "--cache", s(&dir.path().join("missing.dync")), "--region", "circle:0,0,1"]);
    assert_eq!((code, error_code(&err)), (1, "io"));
    assert!(err.contains("missing.dync"));

    // a cache checked against a different field
    let other = dir.path().join("other.vf2d");
    let spec = GridSpec::from_extent((0.0, 2.0), (0.0, 1.0), 101, 51, (0.0, 1.0), 2).unwrap();
    save_dataset(&make_analytic("saddle", spec).unwrap(), &other).unwrap();
    let (code, _, err) = binary(&["similarity", "--cache", s(&cache), "--field", s(&other), "--region", "circle:0.5,0.5,0.2"]);
    assert_eq!((code, error_code(&err)), (1, "fingerprint_mismatch"));
    let (code, _, _) = binary(&["similarity", "--cache", s(&cache), "--field", s(&field), "--region", "circle:0.5,0.5,0.2"]);
    assert_eq!(code, 0);

    // truncated cache
    let bytes = std::fs::read(&cache).unwrap();
    let cut = dir.path().join("cut.dync");
    std::fs::write(&cut, &bytes[..bytes.len() / 2]).unwrap();
    let (code, _, err) = binary(&["similarity", "--cache", s(&cut), "--region", "circle:0.5,0.5,0.2"]);
    assert_eq!((code, error_code(&err)), (1, "truncated"));

    let (code, _, err) = binary(&["serve"]);
    assert_eq!((code, error_code(&err)), (1, "usage"));
}

//! Flow-map FTLE ridges of the double gyre at two nested resolutions.

use pathdyn::advect::{IntegrationParams, SeedGrid};
use pathdyn::dynamics::{ftle_field, FtleField, FtleMethod, StrainReconstruction};
use pathdyn::exec::Exec;
use pathdyn::field::{make_analytic, GridSpec};

fn ftle(nx: usize, ny: usize, t0: f64, tau: f64) -> FtleField {
    let spec = GridSpec::from_extent((0.0, 2.0), (0.0, 1.0), nx, ny, (0.0, 10.0), 101).unwrap();
    let field = make_analytic("double_gyre", spec).unwrap();
    let seeds = SeedGrid::from_grid(&spec, 1).unwrap();
    let params = IntegrationParams::new(t0, tau, 0.1).unwrap();
    ftle_field(&field, &params, &seeds, FtleMethod::FlowMap, StrainReconstruction::default(), Exec::Parallel)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.retain(|x| x.is_finite());
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[v.len() / 2]
}

/// Per row in `y ∈ [0.15, 0.85]`: x of the largest value inside `band`,
/// and that value relative to the row median.
fn ridge(f: &FtleField, band: (f64, f64)) -> Vec<(f64, f64, f64)> {
    let s = &f.seeds;
    (0..s.ny)
        .filter(|&j| (0.15..=0.85).contains(&s.position(0, j).y))
        .map(|j| {
            let row = &f.values[j * s.nx..(j + 1) * s.nx];
            let (i, v) = (0..s.nx)
                .filter(|&i| (band.0..=band.1).contains(&s.position(i, j).x) && row[i].is_finite())
                .map(|i| (i, row[i]))
                .fold((0, f64::MIN), |b, c| if c.1 > b.1 { c } else { b });
            (s.position(0, j).y, s.position(i, j).x, v / median(row.to_vec()))
        })
        .collect()
}

fn check(t0: f64, tau: f64, band: (f64, f64)) {
    let coarse = ftle(129, 65, t0, tau);
    let fine = ftle(257, 129, t0, tau);
    let rc = ridge(&coarse, band);
    let rf = ridge(&fine, band);
    for &(y, _, prominence) in rc.iter().chain(&rf) {
        assert!(prominence > 2.0, "weak ridge at y={y}: {prominence}");
    }
    // fine rows 2j coincide with coarse rows j
    let cell = 2.0 / 128.0;
    for (c, f) in rc.iter().zip(rf.iter().step_by(2)) {
        assert!((c.0 - f.0).abs() < 1e-12);
        assert!((c.1 - f.1).abs() <= 3.0 * cell, "ridge moved at y={}: {} vs {}", c.0, c.1, f.1);
    }
    // the two fields agree where they share seeds
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for j in 0..65 {
        for i in 0..129 {
            let (x, y) = (coarse.values[j * 129 + i], fine.values[2 * j * 257 + 2 * i]);
            if x.is_finite() && y.is_finite() {
                a.push(x);
                b.push(y);
            }
        }
    }
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    let r = cov / (va * vb).sqrt();
    assert!(r > 0.9, "coarse/fine correlation {r}");
}

#[test]
fn forward_central_ridge() {
    check(0.0, 10.0, (0.9, 1.4));
}

#[test]
fn backward_central_ridge() {
    check(10.0, -10.0, (0.6, 1.1));
}

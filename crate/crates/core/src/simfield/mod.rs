//! Similarity fields: per-seed `JSD(ξ_p, ξ_R) / ln 2`.

mod colormap;
mod format;

use std::fs;
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::advect::{IntegrationParams, SeedGrid};
use crate::distribution::{
    histogram_of, jsd_bins, reference_distribution, BinningPolicy, DistributionError, DynHistogram, DynamicsSource,
    Region,
};
use crate::exec::Exec;

pub use image::ImageError;
pub use colormap::{finite_range, png_bytes, raster, save_png, Colormap, MASK_COLOR};
pub use format::{
    load_scalar_grid, read_scalar_grid, sidecar_path, write_scalar_grid, FormatError, ScalarGrid, SF2D_HEADER_LEN,
    SF2D_MAGIC, SF2D_VERSION,
};

/// Everything needed to re-run a similarity query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// Hex SHA-256 of the source field, when known.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fingerprint: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub integration: Option<IntegrationParams>,
    pub seeds: SeedGrid,
    pub region: Region,
    pub policy: BinningPolicy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceField {
    /// Row-major normalized divergence in `[0, 1]`; `NaN` for seeds without
    /// valid samples.
    pub values: Vec<f64>,
    pub reference: DynHistogram,
    pub provenance: Provenance,
}

impl DivergenceField {
    pub fn nx(&self) -> usize {
        self.provenance.seeds.nx
    }

    pub fn ny(&self) -> usize {
        self.provenance.seeds.ny
    }

    /// First seed with the largest finite value.
    pub fn argmax(&self) -> Option<usize> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .fold(None, |best: Option<(usize, f64)>, (k, &v)| match best {
                Some((_, b)) if b >= v => best,
                _ => Some((k, v)),
            })
            .map(|(k, _)| k)
    }

    pub fn values_f32(&self) -> Vec<f32> {
        self.values.iter().map(|&v| v as f32).collect()
    }
}

/// Normalized divergence of every seed against `reference`.
pub fn divergence_values<S: DynamicsSource + ?Sized>(source: &S, reference: &DynHistogram, exec: Exec) -> Vec<f64> {
    let policy = reference.policy;
    exec.map_range(source.seed_count(), |k| {
        match histogram_of(source.alphas(k), source.betas(k), &policy) {
            Ok(h) => (jsd_bins(&h.bins, &reference.bins) / std::f64::consts::LN_2).min(1.0),
            Err(_) => f64::NAN,
        }
    })
}

/// `ξ_R` over `region`, then the divergence of every seed against it.
pub fn similarity_field<S: DynamicsSource + ?Sized>(
    source: &S,
    seeds: &SeedGrid,
    region: &Region,
    policy: &BinningPolicy,
    exec: Exec,
) -> Result<DivergenceField, DistributionError> {
    assert_eq!(seeds.len(), source.seed_count(), "seed layout does not match the source");
    let reference = reference_distribution(source, region, policy)?;
    let values = divergence_values(source, &reference, exec);
    Ok(DivergenceField {
        values,
        reference,
        provenance: Provenance {
            fingerprint: None,
            integration: None,
            seeds: *seeds,
            region: region.clone(),
            policy: *policy,
        },
    })
}

/// Color-map `[0, 1]` linearly and write a PNG.
pub fn render(field: &DivergenceField, colormap: Colormap, out: impl AsRef<Path>) -> Result<(), image::ImageError> {
    save_png(&raster(&field.values, field.nx(), field.ny(), [0.0, 1.0], colormap), out)
}

/// Write the SF2D grid to `out` and the provenance to [`sidecar_path`].
pub fn export_field(field: &DivergenceField, out: impl AsRef<Path>) -> Result<(), FormatError> {
    let out = out.as_ref();
    let file = BufWriter::new(fs::File::create(out)?);
    write_scalar_grid(field.nx(), field.ny(), &field.values_f32(), file)?;
    let meta = toml::to_string(&field.provenance).map_err(|e| FormatError::Provenance(e.to_string()))?;
    fs::write(sidecar_path(out), meta)?;
    Ok(())
}

/// Read the provenance sidecar written next to an SF2D file.
pub fn load_provenance(field_path: impl AsRef<Path>) -> Result<Provenance, FormatError> {
    let text = fs::read_to_string(sidecar_path(field_path.as_ref()))?;
    toml::from_str(&text).map_err(|e| FormatError::Provenance(e.to_string()))
}

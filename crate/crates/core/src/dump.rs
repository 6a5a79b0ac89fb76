//! Field dumps: one flat little-endian `f64` file per component plus a JSON
//! sidecar describing its layout.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Geometry, VField};

pub const DUMP_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DumpMeta {
    pub schema_version: u32,
    /// `u1`, `u2` or `u3`.
    pub component: String,
    pub shape: Vec<usize>,
    pub spacings: Vec<f64>,
    /// Thickness of the thin domain; absent for 2D fields.
    pub eps: Option<f64>,
}

fn paths(dir: &Path, name: &str, c: usize) -> (PathBuf, PathBuf) {
    let stem = format!("{name}_u{}", c + 1);
    (dir.join(format!("{stem}.bin")), dir.join(format!("{stem}.json")))
}

/// Writes every component of `u` as `<name>_u<c>.bin` with a `.json` sidecar.
pub fn write_field<G: Geometry>(dir: &Path, name: &str, u: &VField<G>, eps: Option<f64>) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let m = u.mesh();
    let mut written = Vec::new();
    for c in 0..m.dim {
        let (bin, json) = paths(dir, name, c);
        let bytes: Vec<u8> = u.comps[c].iter().flat_map(|v| v.to_le_bytes()).collect();
        std::fs::write(&bin, bytes)?;
        let shape = m.comp_shape(c)[..m.dim].to_vec();
        let meta = DumpMeta {
            schema_version: DUMP_SCHEMA_VERSION,
            component: format!("u{}", c + 1),
            shape,
            spacings: m.h[..m.dim].to_vec(),
            eps,
        };
        std::fs::write(&json, serde_json::to_string_pretty(&meta)?)?;
        written.push(bin);
    }
    Ok(written)
}

/// Reads one component file and its sidecar.
pub fn read_component(bin: &Path) -> Result<(DumpMeta, Vec<f64>)> {
    let meta: DumpMeta = serde_json::from_str(&std::fs::read_to_string(bin.with_extension("json"))?)?;
    let bytes = std::fs::read(bin)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Domain(format!("{} is not a whole number of f64 values", bin.display())));
    }
    let data: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("chunk of 8")))
        .collect();
    if data.len() != meta.shape.iter().product::<usize>() {
        return Err(Error::Domain(format!("{} does not match the shape in its sidecar", bin.display())));
    }
    Ok((meta, data))
}

/// Reads a field written by [`write_field`] onto `grid`.
pub fn read_field<G: Geometry>(dir: &Path, name: &str, grid: G) -> Result<VField<G>> {
    let m = grid.mesh();
    let mut comps = Vec::with_capacity(m.dim);
    for c in 0..m.dim {
        let (bin, _) = paths(dir, name, c);
        let (meta, data) = read_component(&bin)?;
        if meta.shape != m.comp_shape(c)[..m.dim] {
            return Err(Error::GridMismatch);
        }
        comps.push(data);
    }
    VField::from_components(grid, comps)
}

//! On-disk form of a transformed model: one triplet file per matrix block
//! plus `manifest.json`.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use anyhow::{bail, Context, Result};
use gari_core::gari::{structure_report, ColumnLayout, CorrelatedModel, GariModel, MemoryBasis, StructureReport};
use gari_core::{BinMatrix, ObsMask};
use serde::{Deserialize, Serialize};

pub const MANIFEST: &str = "manifest.json";
const FORMAT: &str = "gari-model";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Files {
    pub top_x: String,
    pub top_z: String,
    pub u: String,
    pub v: String,
    pub bottom: String,
    pub d_xyz: String,
}

impl Default for Files {
    fn default() -> Self {
        Self {
            top_x: "top_x.txt".into(),
            top_z: "top_z.txt".into(),
            u: "u.txt".into(),
            v: "v.txt".into(),
            bottom: "bottom.txt".into(),
            d_xyz: "d_xyz.txt".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub source: Option<String>,
    pub memory_basis: MemoryBasis,
    pub rounds: Option<u32>,
    pub layout: ColumnLayout,
    pub num_observables: usize,
    /// Detector index of every `D_X` row, then of every `D_Z` row.
    pub x_detectors: Vec<usize>,
    pub z_detectors: Vec<usize>,
    pub dropped_detectors: Vec<usize>,
    pub fresh_x: usize,
    pub fresh_z: usize,
    pub priors: Vec<f64>,
    pub merged_priors_ex: Vec<f64>,
    pub obs_mask_ex: Vec<ObsMask>,
    pub files: Files,
    pub stats: StructureReport,
}

fn write_matrix(path: &Path, m: &BinMatrix) -> Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    m.write_triplets(BufWriter::new(f))?;
    Ok(())
}

fn read_matrix(path: &Path) -> Result<BinMatrix> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    BinMatrix::read_triplets(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

pub fn write_model(
    dir: &Path,
    cm: &CorrelatedModel,
    gm: &GariModel,
    rounds: Option<u32>,
    source: Option<String>,
) -> Result<Manifest> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let files = Files::default();
    for (name, m) in [
        (&files.top_x, &gm.top_x),
        (&files.top_z, &gm.top_z),
        (&files.u, &gm.u),
        (&files.v, &gm.v),
        (&files.bottom, &gm.bottom),
        (&files.d_xyz, &cm.matrix),
    ] {
        write_matrix(&dir.join(name), m)?;
    }
    let (x_rows, z_rows) = cm.row_detectors.split_at(cm.num_x_rows);
    let manifest = Manifest {
        format: FORMAT.into(),
        version: VERSION,
        source,
        memory_basis: gm.memory_basis,
        rounds,
        layout: gm.layout,
        num_observables: gm.num_observables,
        x_detectors: x_rows.to_vec(),
        z_detectors: z_rows.to_vec(),
        dropped_detectors: cm.dropped_detectors.clone(),
        fresh_x: gm.fresh_x,
        fresh_z: gm.fresh_z,
        priors: gm.priors.clone(),
        merged_priors_ex: gm.merged_priors_ex.clone(),
        obs_mask_ex: gm.obs_mask_ex.clone(),
        files,
        stats: structure_report(cm, gm),
    };
    let f = File::create(dir.join(MANIFEST))?;
    serde_json::to_writer_pretty(BufWriter::new(f), &manifest)?;
    Ok(manifest)
}

pub fn read_model(dir: &Path) -> Result<(GariModel, Manifest)> {
    let path = dir.join(MANIFEST);
    let f = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
    let manifest: Manifest =
        serde_json::from_reader(BufReader::new(f)).with_context(|| format!("parsing {}", path.display()))?;
    if manifest.format != FORMAT || manifest.version != VERSION {
        bail!("unsupported model format {} v{}", manifest.format, manifest.version);
    }
    let gm = GariModel {
        layout: manifest.layout,
        top_x: read_matrix(&dir.join(&manifest.files.top_x))?,
        top_z: read_matrix(&dir.join(&manifest.files.top_z))?,
        u: read_matrix(&dir.join(&manifest.files.u))?,
        v: read_matrix(&dir.join(&manifest.files.v))?,
        bottom: read_matrix(&dir.join(&manifest.files.bottom))?,
        priors: manifest.priors.clone(),
        merged_priors_ex: manifest.merged_priors_ex.clone(),
        obs_mask_ex: manifest.obs_mask_ex.clone(),
        memory_basis: manifest.memory_basis,
        num_observables: manifest.num_observables,
        fresh_x: manifest.fresh_x,
        fresh_z: manifest.fresh_z,
    };
    gm.validate()?;
    if gm.top_x.num_rows() != manifest.x_detectors.len() || gm.top_z.num_rows() != manifest.z_detectors.len() {
        bail!("detector lists do not match the top matrices");
    }
    Ok((gm, manifest))
}

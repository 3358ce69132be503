//! Graph augmentation and rewiring of the correlated decoding matrix.
//!
//! The correlated matrix `D_XYZ` has X-type detector rows on top and Z-type
//! rows below, and its columns split into three blocks:
//!
//! ```text
//!            e_Z   e_X   e_Y
//! D_XYZ = [  D_X    0    D_X' ]   s_X
//!         [   0    D_Z   D_Z' ]   s_Z
//! ```
//!
//! Every column of `D_X'` equals some column of `D_X`, so `D_X' = D_X U` for a
//! matrix `U` with unit column weight (likewise `D_Z' = D_Z V`). Substituting
//! `ebar_Z = e_Z + U e_Y` and `ebar_X = e_X + V e_Y` gives the augmented matrix
//!
//! ```text
//!          e_Z  e_X  e_Y  ebar_Z  ebar_X
//!        [  0    0    0    D_X      0   ]   s_X
//!        [  0    0    0     0      D_Z  ]   s_Z
//!        [  I    0    U     I       0   ]   0
//!        [  0    I    V     0       I   ]   0
//! ```
//!
//! whose bottom part is free of 4-cycles. In an X-memory experiment the roles
//! of X and Z detectors are exchanged before construction, so `ebar_X` and
//! `D_Z` always denote the side whose observables are protected.

use std::collections::HashMap;
use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dem::{canonicalize, xor_fold, DemModel, DetectorType};
use crate::mask::ObsMask;
use crate::seed::stream_rng;
use crate::spmat::{BinMatrix, MatrixError, MatrixStats};

#[derive(Debug, thiserror::Error)]
pub enum GariError {
    #[error("the model has no detector typing")]
    MissingTyping,
    #[error("undetectable logical fault: error(p={probability}) flips observables {observables:?} without triggering any detector")]
    UndetectableFault { probability: f64, observables: Vec<usize> },
    #[error("mechanism flipping only {partner:?}-type detectors {detectors:?} also flips observables {observables:?}; wrong memory basis?")]
    ObservableOnPartnerSide { partner: DetectorType, detectors: Vec<usize>, observables: Vec<usize> },
    #[error("single-type matrix has repeated column {column} (key {key:?})")]
    DuplicateColumn { column: usize, key: Vec<usize> },
    #[error("inconsistent model: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

/// Which logical observables the experiment protects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum MemoryBasis {
    /// Logical-Z observables; decoding targets X errors.
    #[default]
    Z,
    /// Logical-X observables; decoding targets Z errors.
    X,
}

/// Column block of the correlated matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Block {
    /// Errors seen only by X-type detectors (`e_Z`).
    Z,
    /// Errors seen only by Z-type detectors (`e_X`).
    X,
    /// Errors seen by both (`e_Y`).
    Y,
}

/// The correlated decoding matrix `D_XYZ` with its block structure.
#[derive(Debug, Clone)]
pub struct CorrelatedModel {
    /// Rows: X-type detectors then Z-type detectors. Columns: `e_Z | e_X | e_Y`.
    pub matrix: BinMatrix,
    pub num_x_rows: usize,
    pub num_z_cols: usize,
    pub num_x_cols: usize,
    pub num_y_cols: usize,
    pub priors: Vec<f64>,
    pub obs_masks: Vec<ObsMask>,
    /// Detector index of every row.
    pub row_detectors: Vec<usize>,
    /// Detectors without any incident mechanism; they have no row.
    pub dropped_detectors: Vec<usize>,
    pub memory_basis: MemoryBasis,
    pub num_observables: usize,
}

impl CorrelatedModel {
    pub fn num_z_rows(&self) -> usize {
        self.matrix.num_rows() - self.num_x_rows
    }

    pub fn block_range(&self, block: Block) -> Range<usize> {
        let (a, b) = (self.num_z_cols, self.num_z_cols + self.num_x_cols);
        match block {
            Block::Z => 0..a,
            Block::X => a..b,
            Block::Y => b..b + self.num_y_cols,
        }
    }

    pub fn block_of(&self, col: usize) -> Block {
        if col < self.num_z_cols {
            Block::Z
        } else if col < self.num_z_cols + self.num_x_cols {
            Block::X
        } else {
            Block::Y
        }
    }

    /// Splits a full syndrome (one bit per row) into `(s_X, s_Z)`.
    pub fn split_syndrome(&self, s: &[bool]) -> (Vec<bool>, Vec<bool>) {
        (s[..self.num_x_rows].to_vec(), s[self.num_x_rows..].to_vec())
    }
}

/// Builds `D_XYZ` from a typed detector error model.
///
/// Mechanisms are canonicalized first. Columns are classified by the detector
/// types in their footprint and sorted by footprint within each block;
/// detectors with no incident mechanism are dropped.
pub fn build_correlated(model: &DemModel, basis: MemoryBasis) -> Result<CorrelatedModel, GariError> {
    let typing = model.typing.as_ref().ok_or(GariError::MissingTyping)?;
    let typing = match basis {
        MemoryBasis::Z => typing.clone(),
        MemoryBasis::X => typing.flipped(),
    };
    let mechs = canonicalize(&model.mechanisms);

    let mut used = vec![false; model.num_detectors];
    for m in &mechs {
        if m.is_undetectable() {
            return Err(GariError::UndetectableFault {
                probability: m.probability,
                observables: m.observables.clone(),
            });
        }
        for &d in &m.detectors {
            used[d] = true;
        }
    }
    let x_dets = (0..model.num_detectors).filter(|&d| used[d] && typing.type_of(d) == DetectorType::X);
    let z_dets = (0..model.num_detectors).filter(|&d| used[d] && typing.type_of(d) == DetectorType::Z);
    let row_detectors: Vec<usize> = x_dets.chain(z_dets).collect();
    let num_x_rows = row_detectors.iter().take_while(|&&d| typing.type_of(d) == DetectorType::X).count();
    let mut detector_rows = vec![usize::MAX; model.num_detectors];
    for (r, &d) in row_detectors.iter().enumerate() {
        detector_rows[d] = r;
    }
    let dropped_detectors = (0..model.num_detectors).filter(|&d| !used[d]).collect();

    let mut blocks: [Vec<(Vec<usize>, &crate::dem::ErrorMechanism)>; 3] = Default::default();
    for m in &mechs {
        let mut rows: Vec<usize> = m.detectors.iter().map(|&d| detector_rows[d]).collect();
        rows.sort_unstable();
        let has_x = rows.first().is_some_and(|&r| r < num_x_rows);
        let has_z = rows.last().is_some_and(|&r| r >= num_x_rows);
        let block = match (has_x, has_z) {
            (true, false) => 0,
            (false, true) => 1,
            _ => 2,
        };
        if block == 0 && !m.observables.is_empty() {
            return Err(GariError::ObservableOnPartnerSide {
                partner: match basis {
                    MemoryBasis::Z => DetectorType::X,
                    MemoryBasis::X => DetectorType::Z,
                },
                detectors: m.detectors.clone(),
                observables: m.observables.clone(),
            });
        }
        blocks[block].push((rows, m));
    }
    for b in &mut blocks {
        b.sort_by(|(ra, ma), (rb, mb)| ra.cmp(rb).then_with(|| ma.observables.cmp(&mb.observables)));
    }

    let [zb, xb, yb] = &blocks;
    let cols = blocks.iter().flatten();
    let matrix = BinMatrix::from_cols(row_detectors.len(), cols.clone().map(|(rows, _)| rows.clone()).collect())?;
    Ok(CorrelatedModel {
        matrix,
        num_x_rows,
        num_z_cols: zb.len(),
        num_x_cols: xb.len(),
        num_y_cols: yb.len(),
        priors: cols.clone().map(|(_, m)| m.probability).collect(),
        obs_masks: cols.map(|(_, m)| ObsMask::from_indices(m.observables.iter().copied())).collect(),
        row_detectors,
        dropped_detectors,
        memory_basis: basis,
        num_observables: model.num_observables,
    })
}

/// Matching key of a single-type column. The observable mask takes part in
/// the key only on the memory side (`D_Z`).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ColumnKey {
    pub rows: Vec<usize>,
    pub obs: Option<ObsMask>,
}

/// `D_X` and `D_Z` with the matching key of every column.
#[derive(Debug, Clone)]
pub struct SingleTypeMatrices {
    pub d_x: BinMatrix,
    pub d_z: BinMatrix,
    pub keys_x: Vec<ColumnKey>,
    pub keys_z: Vec<ColumnKey>,
}

fn restrict(col: &[usize], rows: Range<usize>) -> Vec<usize> {
    col.iter().filter(|r| rows.contains(r)).map(|r| r - rows.start).collect()
}

/// Restricts the `e_Z` block to X-detector rows and the `e_X` block to
/// Z-detector rows.
pub fn extract_single_type(cm: &CorrelatedModel) -> SingleTypeMatrices {
    let x_rows = 0..cm.num_x_rows;
    let z_rows = cm.num_x_rows..cm.matrix.num_rows();
    let keys_x: Vec<ColumnKey> = cm
        .block_range(Block::Z)
        .map(|c| ColumnKey { rows: restrict(cm.matrix.col(c), x_rows.clone()), obs: None })
        .collect();
    let keys_z: Vec<ColumnKey> = cm
        .block_range(Block::X)
        .map(|c| ColumnKey {
            rows: restrict(cm.matrix.col(c), z_rows.clone()),
            obs: Some(cm.obs_masks[c].clone()),
        })
        .collect();
    let d_x = BinMatrix::from_cols(x_rows.len(), keys_x.iter().map(|k| k.rows.clone()).collect())
        .expect("restricted rows are in range");
    let d_z = BinMatrix::from_cols(z_rows.len(), keys_z.iter().map(|k| k.rows.clone()).collect())
        .expect("restricted rows are in range");
    SingleTypeMatrices { d_x, d_z, keys_x, keys_z }
}

/// Single-type matrices together with the `U` and `V` matchings of the
/// `e_Y` block. Columns appended to `D_X`/`D_Z` for unmatched `e_Y`
/// restrictions are counted in `fresh_x`/`fresh_z`.
#[derive(Debug, Clone)]
pub struct Rewiring {
    pub single: SingleTypeMatrices,
    pub u: BinMatrix,
    pub v: BinMatrix,
    pub fresh_x: usize,
    pub fresh_z: usize,
}

fn index_keys(keys: &[ColumnKey]) -> Result<HashMap<ColumnKey, usize>, GariError> {
    let mut index = HashMap::with_capacity(keys.len());
    for (i, k) in keys.iter().enumerate() {
        if index.insert(k.clone(), i).is_some() {
            return Err(GariError::DuplicateColumn { column: i, key: k.rows.clone() });
        }
    }
    Ok(index)
}

/// Matches every `e_Y` column to the `D_X` column equal to its X-detector
/// restriction (`U`) and to the `D_Z` column equal to its Z-detector
/// restriction and observable mask (`V`).
///
/// A restriction without a matching column gets a fresh column appended to
/// the single-type matrix, with a warning.
pub fn build_uv(cm: &CorrelatedModel, single: SingleTypeMatrices) -> Result<Rewiring, GariError> {
    let SingleTypeMatrices { d_x, d_z, mut keys_x, mut keys_z } = single;
    let mut index_x = index_keys(&keys_x)?;
    let mut index_z = index_keys(&keys_z)?;
    let x_rows = 0..cm.num_x_rows;
    let z_rows = cm.num_x_rows..cm.matrix.num_rows();

    let match_key = |key: ColumnKey, index: &mut HashMap<ColumnKey, usize>, keys: &mut Vec<ColumnKey>| {
        if let Some(&i) = index.get(&key) {
            (i, false)
        } else {
            let i = keys.len();
            index.insert(key.clone(), i);
            keys.push(key);
            (i, true)
        }
    };

    let mut u_entries = Vec::with_capacity(cm.num_y_cols);
    let mut v_entries = Vec::with_capacity(cm.num_y_cols);
    let (mut fresh_x, mut fresh_z) = (0, 0);
    for (j, c) in cm.block_range(Block::Y).enumerate() {
        let col = cm.matrix.col(c);
        let kx = ColumnKey { rows: restrict(col, x_rows.clone()), obs: None };
        let (i, fresh) = match_key(kx, &mut index_x, &mut keys_x);
        if fresh {
            log::warn!("e_Y column {j}: X-detector restriction matches no e_Z column, adding a fresh column");
            fresh_x += 1;
        }
        u_entries.push((i, j));
        let kz = ColumnKey { rows: restrict(col, z_rows.clone()), obs: Some(cm.obs_masks[c].clone()) };
        let (k, fresh) = match_key(kz, &mut index_z, &mut keys_z);
        if fresh {
            log::warn!("e_Y column {j}: Z-detector restriction matches no e_X column, adding a fresh column");
            fresh_z += 1;
        }
        v_entries.push((k, j));
    }

    let d_x = if fresh_x > 0 {
        BinMatrix::from_cols(d_x.num_rows(), keys_x.iter().map(|k| k.rows.clone()).collect())?
    } else {
        d_x
    };
    let d_z = if fresh_z > 0 {
        BinMatrix::from_cols(d_z.num_rows(), keys_z.iter().map(|k| k.rows.clone()).collect())?
    } else {
        d_z
    };
    let u = BinMatrix::from_entries(keys_x.len(), cm.num_y_cols, u_entries)?;
    let v = BinMatrix::from_entries(keys_z.len(), cm.num_y_cols, v_entries)?;
    Ok(Rewiring { single: SingleTypeMatrices { d_x, d_z, keys_x, keys_z }, u, v, fresh_x, fresh_z })
}

/// Column layout of the augmented matrix: `e_Z | e_X | e_Y | ebar_Z | ebar_X`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnLayout {
    pub e_z: usize,
    pub e_x: usize,
    pub e_y: usize,
    pub bar_z: usize,
    pub bar_x: usize,
}

impl ColumnLayout {
    pub fn e_z_range(&self) -> Range<usize> {
        0..self.e_z
    }
    pub fn e_x_range(&self) -> Range<usize> {
        self.e_z..self.e_z + self.e_x
    }
    pub fn e_y_range(&self) -> Range<usize> {
        let s = self.e_z + self.e_x;
        s..s + self.e_y
    }
    pub fn bar_z_range(&self) -> Range<usize> {
        let s = self.e_z + self.e_x + self.e_y;
        s..s + self.bar_z
    }
    pub fn bar_x_range(&self) -> Range<usize> {
        let s = self.e_z + self.e_x + self.e_y + self.bar_z;
        s..s + self.bar_x
    }
    pub fn num_original(&self) -> usize {
        self.e_z + self.e_x + self.e_y
    }
    pub fn total(&self) -> usize {
        self.num_original() + self.bar_z + self.bar_x
    }
}

/// The augmented decoding problem.
#[derive(Debug, Clone)]
pub struct GariModel {
    pub layout: ColumnLayout,
    /// `D_X`: X-detector rows by `ebar_Z` columns.
    pub top_x: BinMatrix,
    /// `D_Z`: Z-detector rows by `ebar_X` columns.
    pub top_z: BinMatrix,
    pub u: BinMatrix,
    pub v: BinMatrix,
    /// One row per `ebar_Z` column then one per `ebar_X` column, over all
    /// augmented columns. Every bottom row has syndrome 0.
    pub bottom: BinMatrix,
    /// Prior of every augmented column; 0.5 on `ebar` columns.
    pub priors: Vec<f64>,
    /// Prior of every `ebar_X` column implied by the variable change.
    pub merged_priors_ex: Vec<f64>,
    pub obs_mask_ex: Vec<ObsMask>,
    pub memory_basis: MemoryBasis,
    pub num_observables: usize,
    pub fresh_x: usize,
    pub fresh_z: usize,
}

/// Bottom rows `[I 0 U I 0; 0 I V 0 I]` over the augmented columns.
pub fn build_bottom(layout: &ColumnLayout, u: &BinMatrix, v: &BinMatrix) -> Result<BinMatrix, GariError> {
    let (ez, ex, ey) = (layout.e_z_range(), layout.e_x_range(), layout.e_y_range());
    let (bz, bx) = (layout.bar_z_range(), layout.bar_x_range());
    let mut rows = Vec::with_capacity(layout.bar_z + layout.bar_x);
    for i in 0..layout.bar_z {
        let mut row = Vec::with_capacity(u.row(i).len() + 2);
        if i < layout.e_z {
            row.push(ez.start + i);
        }
        row.extend(u.row(i).iter().map(|&j| ey.start + j));
        row.push(bz.start + i);
        rows.push(row);
    }
    for k in 0..layout.bar_x {
        let mut row = Vec::with_capacity(v.row(k).len() + 2);
        if k < layout.e_x {
            row.push(ex.start + k);
        }
        row.extend(v.row(k).iter().map(|&j| ey.start + j));
        row.push(bx.start + k);
        rows.push(row);
    }
    Ok(BinMatrix::from_rows(layout.total(), rows)?)
}

/// Assembles the augmented matrix, priors and observable masks.
pub fn assemble_gari(cm: &CorrelatedModel, rw: Rewiring) -> Result<GariModel, GariError> {
    let Rewiring { single, u, v, fresh_x, fresh_z } = rw;
    let layout = ColumnLayout {
        e_z: cm.num_z_cols,
        e_x: cm.num_x_cols,
        e_y: cm.num_y_cols,
        bar_z: single.d_x.num_cols(),
        bar_x: single.d_z.num_cols(),
    };
    if u.num_rows() != layout.bar_z || v.num_rows() != layout.bar_x {
        return Err(GariError::Inconsistent("U/V row counts differ from D_X/D_Z column counts".into()));
    }
    if layout.bar_z < layout.e_z || layout.bar_x < layout.e_x {
        return Err(GariError::Inconsistent("fewer ebar columns than original columns".into()));
    }
    let bottom = build_bottom(&layout, &u, &v)?;
    let (ex, ey) = (layout.e_x_range(), layout.e_y_range());

    let mut priors = cm.priors.clone();
    priors.resize(layout.total(), 0.5);

    let merged_priors_ex = (0..layout.bar_x)
        .map(|k| {
            let own = (k < layout.e_x).then(|| cm.priors[ex.start + k]);
            xor_fold(own.into_iter().chain(v.row(k).iter().map(|&j| cm.priors[ey.start + j])))
        })
        .collect();
    let obs_mask_ex = single
        .keys_z
        .iter()
        .map(|k| k.obs.clone().unwrap_or_default())
        .collect();

    Ok(GariModel {
        layout,
        top_x: single.d_x,
        top_z: single.d_z,
        u,
        v,
        bottom,
        priors,
        merged_priors_ex,
        obs_mask_ex,
        memory_basis: cm.memory_basis,
        num_observables: cm.num_observables,
        fresh_x,
        fresh_z,
    })
}

impl GariModel {
    /// Runs the whole pipeline: single-type extraction, matching, assembly.
    pub fn from_correlated(cm: &CorrelatedModel) -> Result<Self, GariError> {
        let single = extract_single_type(cm);
        let rw = build_uv(cm, single)?;
        assemble_gari(cm, rw)
    }

    /// The full augmented matrix: `D_X` and `D_Z` rows lifted onto the
    /// `ebar` columns, followed by the bottom rows.
    pub fn augmented(&self) -> BinMatrix {
        let bz = self.layout.bar_z_range().start;
        let bx = self.layout.bar_x_range().start;
        let rows = self
            .top_x
            .rows()
            .map(|r| r.iter().map(|&c| c + bz).collect())
            .chain(self.top_z.rows().map(|r| r.iter().map(|&c| c + bx).collect()))
            .chain(self.bottom.rows().map(<[usize]>::to_vec))
            .collect();
        BinMatrix::from_rows(self.layout.total(), rows).expect("lifted rows stay in range")
    }

    /// Checks the structural invariants of a model, e.g. after loading it.
    pub fn validate(&self) -> Result<(), GariError> {
        let l = &self.layout;
        let bad = |msg: &str| Err(GariError::Inconsistent(msg.to_string()));
        if l.bar_z < l.e_z || l.bar_x < l.e_x {
            return bad("fewer ebar columns than original columns");
        }
        if self.top_x.num_cols() != l.bar_z || self.top_z.num_cols() != l.bar_x {
            return bad("top matrices do not match the ebar column counts");
        }
        if self.u.num_rows() != l.bar_z || self.v.num_rows() != l.bar_x {
            return bad("U/V row counts differ from the ebar column counts");
        }
        if self.u.num_cols() != l.e_y || self.v.num_cols() != l.e_y {
            return bad("U/V column counts differ from the e_Y block");
        }
        if self.u.cols().any(|c| c.len() != 1) || self.v.cols().any(|c| c.len() != 1) {
            return bad("U and V must have exactly one 1 per column");
        }
        if build_bottom(l, &self.u, &self.v)? != self.bottom {
            return bad("bottom part does not match U and V");
        }
        if self.priors.len() != l.total() {
            return bad("priors length differs from the augmented column count");
        }
        if self.merged_priors_ex.len() != l.bar_x || self.obs_mask_ex.len() != l.bar_x {
            return bad("ebar_X metadata length differs from the ebar_X column count");
        }
        Ok(())
    }
}

/// Outcome of [`verify_equivalence`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EquivalenceReport {
    pub trials: usize,
    pub failures: usize,
}

impl EquivalenceReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Checks one assignment `(e_Z, e_X, e_Y)` against the variable change:
/// the induced `(ebar_Z, ebar_X)` must satisfy every bottom row and reproduce
/// both syndromes of `D_XYZ` through `D_X` and `D_Z`.
pub fn check_assignment(cm: &CorrelatedModel, gm: &GariModel, e: &[bool]) -> bool {
    let l = &gm.layout;
    let s = cm.matrix.matvec_mod2(e).expect("assignment covers every column");
    let (s_x, s_z) = cm.split_syndrome(&s);

    let mut bar_z = vec![false; l.bar_z];
    for (i, b) in bar_z.iter_mut().enumerate() {
        *b = (i < l.e_z && e[i]) ^ gm.u.row(i).iter().fold(false, |a, &j| a ^ e[l.e_y_range().start + j]);
    }
    let mut bar_x = vec![false; l.bar_x];
    for (k, b) in bar_x.iter_mut().enumerate() {
        *b = (k < l.e_x && e[l.e_x_range().start + k])
            ^ gm.v.row(k).iter().fold(false, |a, &j| a ^ e[l.e_y_range().start + j]);
    }

    let mut full = e.to_vec();
    full.extend(&bar_z);
    full.extend(&bar_x);
    let bottom_ok = gm.bottom.matvec_mod2(&full).expect("dimensions").iter().all(|b| !b);
    bottom_ok
        && gm.top_x.matvec_mod2(&bar_z).expect("dimensions") == s_x
        && gm.top_z.matvec_mod2(&bar_x).expect("dimensions") == s_z
}

/// Checks the equivalence of the two decoding problems on `trials` uniformly
/// random assignments of the original columns.
pub fn verify_equivalence(cm: &CorrelatedModel, gm: &GariModel, trials: usize, seed: u64) -> EquivalenceReport {
    let mut rng = stream_rng(seed, 0);
    let n = gm.layout.num_original();
    let failures = (0..trials)
        .filter(|_| {
            let e: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
            !check_assignment(cm, gm, &e)
        })
        .count();
    EquivalenceReport { trials, failures }
}

/// Size, density and 4-cycle statistics of every matrix involved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureReport {
    pub d_x: MatrixStats,
    pub d_z: MatrixStats,
    pub d_xyz: MatrixStats,
    pub bottom: MatrixStats,
    pub augmented_nnz: u64,
    pub dropped_detectors: Vec<usize>,
    pub fresh_x: usize,
    pub fresh_z: usize,
}

pub fn structure_report(cm: &CorrelatedModel, gm: &GariModel) -> StructureReport {
    StructureReport {
        d_x: gm.top_x.stats(),
        d_z: gm.top_z.stats(),
        d_xyz: cm.matrix.stats(),
        bottom: gm.bottom.stats(),
        augmented_nnz: gm.augmented().nnz(),
        dropped_detectors: cm.dropped_detectors.clone(),
        fresh_x: gm.fresh_x,
        fresh_z: gm.fresh_z,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dem::{parse_dem, parse_sidecar, classify_detectors};

    /// D0 is X-type, D1 is Z-type.
    pub(crate) fn toy_model() -> DemModel {
        let m = parse_dem("error(0.01) D0\nerror(0.01) D1 L0\nerror(0.02) D0 D1 L0\n").unwrap();
        let t = classify_detectors(&m, &parse_sidecar("X: 0\nZ: 1").unwrap()).unwrap();
        m.with_typing(t).unwrap()
    }

    fn dense(m: &BinMatrix) -> Vec<Vec<u8>> {
        (0..m.num_rows()).map(|r| (0..m.num_cols()).map(|c| m.get(r, c) as u8).collect()).collect()
    }

    #[test]
    fn toy_correlated_blocks() {
        let cm = build_correlated(&toy_model(), MemoryBasis::Z).unwrap();
        assert_eq!((cm.num_z_cols, cm.num_x_cols, cm.num_y_cols), (1, 1, 1));
        assert_eq!(dense(&cm.matrix), vec![vec![1, 0, 1], vec![0, 1, 1]]);
        assert_eq!(cm.priors, vec![0.01, 0.01, 0.02]);
        assert_eq!(cm.block_of(2), Block::Y);
    }

    #[test]
    fn only_x_detectors_gives_empty_x_and_y_blocks() {
        let m = parse_dem("error(0.1) D0\nerror(0.1) D0 D1\n").unwrap();
        let t = classify_detectors(&m, &parse_sidecar("X: 0 1").unwrap()).unwrap();
        let cm = build_correlated(&m.with_typing(t).unwrap(), MemoryBasis::Z).unwrap();
        assert_eq!((cm.num_z_cols, cm.num_x_cols, cm.num_y_cols), (2, 0, 0));
    }

    #[test]
    fn build_rejects_bad_models() {
        let m = parse_dem("error(0.1) L0\nerror(0.1) D0").unwrap();
        let t = classify_detectors(&m, &parse_sidecar("X: 0").unwrap()).unwrap();
        assert!(matches!(
            build_correlated(&m.with_typing(t).unwrap(), MemoryBasis::Z),
            Err(GariError::UndetectableFault { .. })
        ));

        let m = parse_dem("error(0.1) D0 L0").unwrap();
        let t = classify_detectors(&m, &parse_sidecar("X: 0").unwrap()).unwrap();
        let m = m.with_typing(t).unwrap();
        assert!(matches!(build_correlated(&m, MemoryBasis::Z), Err(GariError::ObservableOnPartnerSide { .. })));
        // In X-memory the same mechanism sits on the protected side.
        assert!(build_correlated(&m, MemoryBasis::X).is_ok());

        let untyped = parse_dem("error(0.1) D0").unwrap();
        assert!(matches!(build_correlated(&untyped, MemoryBasis::Z), Err(GariError::MissingTyping)));
    }

    #[test]
    fn unused_detectors_are_dropped() {
        let m = parse_dem("error(0.1) D0\nerror(0.1) D2\ndetector D3").unwrap();
        let t = classify_detectors(&m, &parse_sidecar("X: 0 1\nZ: 2 3").unwrap()).unwrap();
        let cm = build_correlated(&m.with_typing(t).unwrap(), MemoryBasis::Z).unwrap();
        assert_eq!(cm.dropped_detectors, vec![1, 3]);
        assert_eq!(cm.row_detectors, vec![0, 2]);
        assert_eq!(cm.num_x_rows, 1);
    }

    #[test]
    fn toy_single_type_matrices() {
        let cm = build_correlated(&toy_model(), MemoryBasis::Z).unwrap();
        let st = extract_single_type(&cm);
        assert_eq!(dense(&st.d_x), vec![vec![1]]);
        assert_eq!(dense(&st.d_z), vec![vec![1]]);
        assert_eq!(st.keys_z[0].obs, Some(ObsMask::from_indices([0])));
        assert_eq!(st.keys_x[0].obs, None);
    }

    #[test]
    fn uncorrelated_model_reproduces_diagonal_blocks() {
        let m = parse_dem("error(0.1) D0 D1\nerror(0.1) D1\nerror(0.1) D2 L0\nerror(0.1) D2 D3").unwrap();
        let t = classify_detectors(&m, &parse_sidecar("X: 0 1\nZ: 2 3").unwrap()).unwrap();
        let cm = build_correlated(&m.with_typing(t).unwrap(), MemoryBasis::Z).unwrap();
        let st = extract_single_type(&cm);
        let top_left = cm.matrix.submatrix_by_rows(&[0, 1]).unwrap().submatrix_by_columns(&[0, 1]).unwrap();
        let bottom_mid = cm.matrix.submatrix_by_rows(&[2, 3]).unwrap().submatrix_by_columns(&[2, 3]).unwrap();
        assert_eq!(st.d_x, top_left);
        assert_eq!(st.d_z, bottom_mid);
        let rw = build_uv(&cm, st).unwrap();
        assert_eq!((rw.u.num_cols(), rw.v.num_cols()), (0, 0));
    }

    #[test]
    fn uv_matching_example() {
        // D_X columns c1 = (1,1,0), c2 = (0,1,1); Y restrictions [c1, c2, c1].
        let text = "\
error(0.01) D0 D1
error(0.01) D1 D2
error(0.01) D3
error(0.01) D4
error(0.01) D5
error(0.02) D0 D1 D3
error(0.02) D1 D2 D4
error(0.02) D0 D1 D5
";
        let m = parse_dem(text).unwrap();
        let t = classify_detectors(&m, &parse_sidecar("X: 0 1 2\nZ: 3 4 5").unwrap()).unwrap();
        let cm = build_correlated(&m.with_typing(t).unwrap(), MemoryBasis::Z).unwrap();
        let rw = build_uv(&cm, extract_single_type(&cm)).unwrap();
        // Y columns sort by footprint: {0,1,3}, {0,1,5}, {1,2,4}.
        assert_eq!(dense(&rw.u), vec![vec![1, 1, 0], vec![0, 0, 1]]);
        assert_eq!(dense(&rw.v), vec![vec![1, 0, 0], vec![0, 0, 1], vec![0, 1, 0]]);
        assert_eq!((rw.fresh_x, rw.fresh_z), (0, 0));
        // Oracle: D_X U reproduces the stacked X restrictions.
        let y = cm.block_range(Block::Y);
        for j in 0..cm.num_y_cols {
            let via_u: Vec<usize> = rw.u.col(j).iter().flat_map(|&i| rw.single.d_x.col(i).to_vec()).collect();
            assert_eq!(via_u, restrict(cm.matrix.col(y.start + j), 0..cm.num_x_rows));
        }
    }

    #[test]
    fn single_y_column_matches_both_sides() {
        let cm = build_correlated(&toy_model(), MemoryBasis::Z).unwrap();
        let rw = build_uv(&cm, extract_single_type(&cm)).unwrap();
        assert_eq!(dense(&rw.u), vec![vec![1]]);
        assert_eq!(dense(&rw.v), vec![vec![1]]);
    }

    #[test]
    fn unmatched_restriction_gets_fresh_column() {
        // The Y footprint's Z part {D2} has no e_X partner.
        let m = parse_dem("error(0.01) D0\nerror(0.01) D1 L0\nerror(0.02) D0 D2 L0").unwrap();
        let t = classify_detectors(&m, &parse_sidecar("X: 0\nZ: 1 2").unwrap()).unwrap();
        let cm = build_correlated(&m.with_typing(t).unwrap(), MemoryBasis::Z).unwrap();
        let gm = GariModel::from_correlated(&cm).unwrap();
        assert_eq!((gm.fresh_x, gm.fresh_z), (0, 1));
        assert_eq!(gm.top_z.num_cols(), 2);
        assert_eq!(gm.obs_mask_ex[1], ObsMask::from_indices([0]));
        assert!((gm.merged_priors_ex[1] - 0.02).abs() < 1e-15);
        gm.validate().unwrap();
        assert!(verify_equivalence(&cm, &gm, 200, 3).passed());
        assert_eq!(gm.bottom.count_4cycles(), 0);
    }

    #[test]
    fn duplicate_single_type_columns_are_rejected() {
        let cm = build_correlated(&toy_model(), MemoryBasis::Z).unwrap();
        let mut st = extract_single_type(&cm);
        st.keys_x.push(st.keys_x[0].clone());
        assert!(matches!(build_uv(&cm, st), Err(GariError::DuplicateColumn { .. })));
    }

    #[test]
    fn toy_assembly() {
        let cm = build_correlated(&toy_model(), MemoryBasis::Z).unwrap();
        let gm = GariModel::from_correlated(&cm).unwrap();
        // Columns: e_Z0 e_X0 e_Y0 ebar_Z0 ebar_X0
        assert_eq!(dense(&gm.bottom), vec![vec![1, 0, 1, 1, 0], vec![0, 1, 1, 0, 1]]);
        assert_eq!(gm.priors, vec![0.01, 0.01, 0.02, 0.5, 0.5]);
        // 0.01 * 0.98 + 0.99 * 0.02
        assert!((gm.merged_priors_ex[0] - 0.0296).abs() < 1e-15);
        assert_eq!(gm.obs_mask_ex, vec![ObsMask::from_indices([0])]);
        let aug = gm.augmented();
        assert_eq!(dense(&aug)[..2], [vec![0, 0, 0, 1, 0], vec![0, 0, 0, 0, 1]]);
        gm.validate().unwrap();
    }

    #[test]
    fn toy_equivalence_cases() {
        let cm = build_correlated(&toy_model(), MemoryBasis::Z).unwrap();
        let gm = GariModel::from_correlated(&cm).unwrap();
        assert!(check_assignment(&cm, &gm, &[false, false, false]));
        // A single Y error: ebar_Z = ebar_X = 1, s_X = s_Z = 1.
        let e = [false, false, true];
        assert!(check_assignment(&cm, &gm, &e));
        let s = cm.matrix.matvec_mod2(&e).unwrap();
        assert_eq!(s, vec![true, true]);
        assert_eq!(gm.top_x.matvec_mod2(&[true]).unwrap(), vec![true]);
        assert!(verify_equivalence(&cm, &gm, 100, 1).passed());
    }

    #[test]
    fn x_memory_mirrors_roles() {
        // Observables flipped by Z errors (seen by X detectors) in X-memory.
        let m = parse_dem("error(0.01) D0 L0\nerror(0.01) D1\nerror(0.02) D0 D1 L0\n").unwrap();
        let t = classify_detectors(&m, &parse_sidecar("X: 0\nZ: 1").unwrap()).unwrap();
        let m = m.with_typing(t).unwrap();
        assert!(build_correlated(&m, MemoryBasis::Z).is_err());
        let cm = build_correlated(&m, MemoryBasis::X).unwrap();
        assert_eq!(cm.row_detectors, vec![1, 0]);
        let gm = GariModel::from_correlated(&cm).unwrap();
        assert_eq!(gm.obs_mask_ex, vec![ObsMask::from_indices([0])]);
        assert!(verify_equivalence(&cm, &gm, 100, 2).passed());
    }
}

//! Random typed detector error models with X, Z and Y mechanisms, for tests
//! and benchmarks.

use std::collections::BTreeSet;

use rand::Rng;

use crate::dem::{DemModel, DetectorType, DetectorTyping, ErrorMechanism, TypingSource};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub x_detectors: usize,
    pub z_detectors: usize,
    /// Mechanisms seen only by X detectors (Z errors).
    pub z_mechs: usize,
    /// Mechanisms seen only by Z detectors (X errors).
    pub x_mechs: usize,
    /// Mechanisms seen by both detector types.
    pub y_mechs: usize,
    pub num_observables: usize,
    pub max_weight: usize,
    pub p_min: f64,
    pub p_max: f64,
    /// Chance that a Y mechanism is not the product of an existing X and Z
    /// mechanism, which forces fresh single-type columns.
    pub p_unmatched_y: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            x_detectors: 3,
            z_detectors: 4,
            z_mechs: 3,
            x_mechs: 4,
            y_mechs: 3,
            num_observables: 1,
            max_weight: 2,
            p_min: 0.01,
            p_max: 0.1,
            p_unmatched_y: 0.0,
        }
    }
}

fn footprint<R: Rng>(rng: &mut R, first: usize, count: usize, max_weight: usize) -> Vec<usize> {
    let w = rng.random_range(1..=max_weight.min(count));
    let mut s = BTreeSet::new();
    while s.len() < w {
        s.insert(first + rng.random_range(0..count));
    }
    s.into_iter().collect()
}

fn observables<R: Rng>(rng: &mut R, n: usize) -> Vec<usize> {
    (0..n).filter(|_| rng.random_bool(0.3)).collect()
}

/// Draws a typed model for a Z-memory experiment. Detectors `0..x_detectors`
/// are X-type, the rest Z-type. Observables only sit on mechanisms with a
/// Z-detector part, and a Y mechanism carries the observables of its X part.
pub fn random_correlated_dem<R: Rng>(rng: &mut R, params: &SynthParams) -> DemModel {
    let (nx, nz) = (params.x_detectors, params.z_detectors);
    assert!(nx > 0 && nz > 0, "both detector types are needed");
    let mut p = || rng.random_range(params.p_min..=params.p_max);
    let probs: Vec<f64> = (0..params.z_mechs + params.x_mechs + params.y_mechs).map(|_| p()).collect();
    let mut probs = probs.into_iter();

    let mut mechs = Vec::new();
    let mut z_parts = Vec::new();
    for _ in 0..params.z_mechs {
        let d = footprint(rng, 0, nx, params.max_weight);
        z_parts.push(d.clone());
        mechs.push(ErrorMechanism::new(probs.next().unwrap(), d, vec![]));
    }
    let mut x_parts = Vec::new();
    for _ in 0..params.x_mechs {
        let d = footprint(rng, nx, nz, params.max_weight);
        let o = observables(rng, params.num_observables);
        x_parts.push((d.clone(), o.clone()));
        mechs.push(ErrorMechanism::new(probs.next().unwrap(), d, o));
    }
    for _ in 0..params.y_mechs {
        let fresh = z_parts.is_empty() || x_parts.is_empty() || rng.random_bool(params.p_unmatched_y);
        let (zd, (xd, o)) = if fresh {
            (footprint(rng, 0, nx, params.max_weight), (footprint(rng, nx, nz, params.max_weight), observables(rng, params.num_observables)))
        } else {
            (
                z_parts[rng.random_range(0..z_parts.len())].clone(),
                x_parts[rng.random_range(0..x_parts.len())].clone(),
            )
        };
        let mut d = zd;
        d.extend(xd);
        mechs.push(ErrorMechanism::new(probs.next().unwrap(), d, o));
    }

    let types = (0..nx + nz).map(|d| if d < nx { DetectorType::X } else { DetectorType::Z }).collect();
    DemModel {
        mechanisms: mechs,
        num_detectors: nx + nz,
        num_observables: params.num_observables,
        coords: vec![None; nx + nz],
        typing: Some(DetectorTyping::new(types, TypingSource::SidecarFile)),
    }
}

//! Detector error models: parsing, canonicalization and detector typing.
//!
//! The accepted text format is the flattened DEM grammar:
//!
//! ```text
//! error(<p>) <targets...>            # targets: D<k>, L<k>, ^
//! detector(<c1>,<c2>,...) D<k>       # coordinates optional
//! logical_observable L<k>
//! shift_detectors(<coords>) <n>      # coordinates optional
//! ```
//!
//! `#` starts a comment. `repeat` blocks are rejected; flatten them upstream.
//! Decomposition separators (`^`) are flattened by symmetric difference.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

/// Errors raised while reading a DEM or typing its detectors.
#[derive(Debug, thiserror::Error)]
pub enum DemError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: repeat blocks are not supported, flatten the model first")]
    Repeat { line: usize },
    #[error("line {line}: probability {value} is outside (0, 1)")]
    Probability { line: usize, value: f64 },
    #[error("detector typing: {0}")]
    Typing(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One independent fault class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorMechanism {
    pub probability: f64,
    /// Strictly increasing detector indices.
    pub detectors: Vec<usize>,
    /// Strictly increasing observable indices.
    pub observables: Vec<usize>,
}

impl ErrorMechanism {
    pub fn new(probability: f64, detectors: Vec<usize>, observables: Vec<usize>) -> Self {
        Self { probability, detectors: xor_normalize(detectors), observables: xor_normalize(observables) }
    }

    /// Flips logical observables without triggering any detector.
    pub fn is_undetectable(&self) -> bool {
        self.detectors.is_empty() && !self.observables.is_empty()
    }

    fn key(&self) -> (Vec<usize>, Vec<usize>) {
        (self.detectors.clone(), self.observables.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DetectorType {
    X,
    Z,
}

impl DetectorType {
    pub fn flipped(self) -> Self {
        match self {
            DetectorType::X => DetectorType::Z,
            DetectorType::Z => DetectorType::X,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TypingSource {
    CoordinateRule,
    SidecarFile,
}

/// Total assignment of an X/Z type to every detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorTyping {
    types: Vec<DetectorType>,
    pub source: TypingSource,
}

impl DetectorTyping {
    pub fn new(types: Vec<DetectorType>, source: TypingSource) -> Self {
        Self { types, source }
    }

    pub fn num_detectors(&self) -> usize {
        self.types.len()
    }

    pub fn type_of(&self, detector: usize) -> DetectorType {
        self.types[detector]
    }

    pub fn types(&self) -> &[DetectorType] {
        &self.types
    }

    /// Exchanges the roles of X and Z detectors.
    pub fn flipped(&self) -> Self {
        Self { types: self.types.iter().map(|t| t.flipped()).collect(), source: self.source }
    }
}

/// How detector types are obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum TypingRule {
    /// Look up coordinate `index` of each detector in `values`.
    Coordinate { index: usize, values: Vec<(f64, DetectorType)> },
    /// Explicit index lists, as read by [`parse_sidecar`].
    Sidecar { x: Vec<usize>, z: Vec<usize> },
}

impl TypingRule {
    /// The convention used by the bundled fixtures: coordinate 3 holds the
    /// basis, 0 for X and 1 for Z.
    pub fn basis_coordinate() -> Self {
        TypingRule::Coordinate {
            index: 3,
            values: vec![(0.0, DetectorType::X), (1.0, DetectorType::Z)],
        }
    }
}

/// A parsed detector error model.
#[derive(Debug, Clone, PartialEq)]
pub struct DemModel {
    pub mechanisms: Vec<ErrorMechanism>,
    pub num_detectors: usize,
    pub num_observables: usize,
    /// Absolute detector coordinates, where declared.
    pub coords: Vec<Option<Vec<f64>>>,
    pub typing: Option<DetectorTyping>,
}

impl DemModel {
    /// Replaces the mechanisms by their canonical set.
    pub fn canonicalized(mut self) -> Self {
        self.mechanisms = canonicalize(&self.mechanisms);
        self
    }

    pub fn with_typing(mut self, typing: DetectorTyping) -> Result<Self, DemError> {
        if typing.num_detectors() != self.num_detectors {
            return Err(DemError::Typing(format!(
                "typing covers {} detectors, model has {}",
                typing.num_detectors(),
                self.num_detectors
            )));
        }
        self.typing = Some(typing);
        Ok(self)
    }

    /// Emits the model in the flattened grammar accepted by [`parse_dem`].
    pub fn to_dem_text(&self) -> String {
        let mut out = String::new();
        for m in &self.mechanisms {
            let _ = write!(out, "error({})", m.probability);
            for d in &m.detectors {
                let _ = write!(out, " D{d}");
            }
            for l in &m.observables {
                let _ = write!(out, " L{l}");
            }
            out.push('\n');
        }
        for (d, coords) in self.coords.iter().enumerate() {
            match coords {
                Some(c) => {
                    let list: Vec<String> = c.iter().map(|x| x.to_string()).collect();
                    let _ = writeln!(out, "detector({}) D{d}", list.join(", "));
                }
                None if d + 1 == self.num_detectors => {
                    let _ = writeln!(out, "detector D{d}");
                }
                None => {}
            }
        }
        if self.num_observables > 0 {
            let _ = writeln!(out, "logical_observable L{}", self.num_observables - 1);
        }
        out
    }
}

/// Sorts and cancels repeated entries in pairs.
fn xor_normalize(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    let mut out: Vec<usize> = Vec::with_capacity(v.len());
    for x in v {
        if out.last() == Some(&x) {
            out.pop();
        } else {
            out.push(x);
        }
    }
    out
}

/// Probability that an odd number of independent events fire.
pub fn xor_fold<I: IntoIterator<Item = f64>>(probs: I) -> f64 {
    probs.into_iter().fold(0.0, |p, q| p * (1.0 - q) + q * (1.0 - p))
}

/// Merges mechanisms with identical `(detectors, observables)` keys, folding
/// their probabilities with `p ^ q = p(1-q) + q(1-p)`, and drops mechanisms
/// that have no symptom at all.
///
/// The result is sorted by key and does not depend on input order.
pub fn canonicalize(mechs: &[ErrorMechanism]) -> Vec<ErrorMechanism> {
    let mut groups: BTreeMap<(Vec<usize>, Vec<usize>), Vec<f64>> = BTreeMap::new();
    for m in mechs {
        if m.detectors.is_empty() && m.observables.is_empty() {
            continue;
        }
        groups.entry(m.key()).or_default().push(m.probability);
    }
    groups
        .into_iter()
        .map(|((detectors, observables), mut probs)| {
            probs.sort_by(f64::total_cmp);
            ErrorMechanism { probability: xor_fold(probs), detectors, observables }
        })
        .collect()
}

/// Parses flattened DEM text. Mechanisms are returned one per `error` line,
/// not yet canonicalized.
pub fn parse_dem(text: &str) -> Result<DemModel, DemError> {
    parse_dem_reader(text.as_bytes())
}

/// Streaming variant of [`parse_dem`].
pub fn parse_dem_reader<R: BufRead>(reader: R) -> Result<DemModel, DemError> {
    let mut p = Parser::default();
    for (i, line) in reader.lines().enumerate() {
        p.line(&line?, i + 1)?;
    }
    Ok(p.finish())
}

/// Opens a DEM file for reading, transparently decompressing gzip input.
pub fn open_dem_file(path: &Path) -> Result<Box<dyn BufRead>, DemError> {
    let mut file = File::open(path)?;
    let mut magic = [0u8; 2];
    let n = file.read(&mut magic)?;
    let file = File::open(path)?;
    if n == 2 && magic == [0x1f, 0x8b] {
        Ok(Box::new(BufReader::new(flate2::read::MultiGzDecoder::new(file))))
    } else {
        Ok(Box::new(BufReader::new(file)))
    }
}

/// Reads and parses a DEM file, gzip or plain.
pub fn load_dem_file(path: &Path) -> Result<DemModel, DemError> {
    parse_dem_reader(open_dem_file(path)?)
}

#[derive(Default)]
struct Parser {
    mechanisms: Vec<ErrorMechanism>,
    coords: BTreeMap<usize, Vec<f64>>,
    det_offset: usize,
    coord_offset: Vec<f64>,
    max_detector: Option<usize>,
    max_observable: Option<usize>,
}

impl Parser {
    fn line(&mut self, raw: &str, lineno: usize) -> Result<(), DemError> {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            return Ok(());
        }
        let syntax = |msg: String| DemError::Syntax { line: lineno, msg };

        let name_end = line.find(|c: char| c == '(' || c == '[' || c.is_whitespace()).unwrap_or(line.len());
        let name = &line[..name_end];
        let mut rest = &line[name_end..];
        // Instruction tags (`error[tag](...)`) carry no semantics here.
        if rest.starts_with('[') {
            let close = rest.find(']').ok_or_else(|| syntax("unterminated tag".into()))?;
            rest = &rest[close + 1..];
        }
        let args: Vec<f64> = if rest.starts_with('(') {
            let close = rest.find(')').ok_or_else(|| syntax("unterminated argument list".into()))?;
            let inner = &rest[1..close];
            rest = &rest[close + 1..];
            if inner.trim().is_empty() {
                Vec::new()
            } else {
                inner
                    .split(',')
                    .map(|a| a.trim().parse::<f64>().map_err(|_| syntax(format!("bad number {a:?}"))))
                    .collect::<Result<_, _>>()?
            }
        } else {
            Vec::new()
        };
        let targets: Vec<&str> = rest.split_whitespace().collect();

        match name {
            "error" => {
                let [p] = args[..] else {
                    return Err(syntax("error takes exactly one probability".into()));
                };
                if !(p > 0.0 && p < 1.0) {
                    return Err(DemError::Probability { line: lineno, value: p });
                }
                let mut dets = Vec::new();
                let mut obs = Vec::new();
                for t in targets {
                    match parse_target(t) {
                        Some(Target::Detector(k)) => dets.push(k + self.det_offset),
                        Some(Target::Observable(k)) => obs.push(k),
                        Some(Target::Separator) => {}
                        None => return Err(syntax(format!("bad target {t:?}"))),
                    }
                }
                let m = ErrorMechanism::new(p, dets, obs);
                for &d in &m.detectors {
                    self.see_detector(d);
                }
                for &l in &m.observables {
                    self.see_observable(l);
                }
                self.mechanisms.push(m);
            }
            "detector" => {
                if targets.is_empty() {
                    return Err(syntax("detector needs a target".into()));
                }
                for t in targets {
                    let Some(Target::Detector(k)) = parse_target(t) else {
                        return Err(syntax(format!("bad detector target {t:?}")));
                    };
                    let d = k + self.det_offset;
                    self.see_detector(d);
                    if !args.is_empty() {
                        let abs = args
                            .iter()
                            .enumerate()
                            .map(|(i, c)| c + self.coord_offset.get(i).copied().unwrap_or(0.0))
                            .collect();
                        self.coords.insert(d, abs);
                    }
                }
            }
            "logical_observable" => {
                for t in targets {
                    let Some(Target::Observable(k)) = parse_target(t) else {
                        return Err(syntax(format!("bad observable target {t:?}")));
                    };
                    self.see_observable(k);
                }
            }
            "shift_detectors" => {
                let [n] = targets[..] else {
                    return Err(syntax("shift_detectors takes one offset".into()));
                };
                let n: usize = n.parse().map_err(|_| syntax(format!("bad offset {n:?}")))?;
                self.det_offset += n;
                if self.coord_offset.len() < args.len() {
                    self.coord_offset.resize(args.len(), 0.0);
                }
                for (acc, a) in self.coord_offset.iter_mut().zip(&args) {
                    *acc += a;
                }
            }
            "repeat" => return Err(DemError::Repeat { line: lineno }),
            _ => return Err(syntax(format!("unknown instruction {name:?}"))),
        }
        Ok(())
    }

    fn see_detector(&mut self, d: usize) {
        self.max_detector = Some(self.max_detector.map_or(d, |m| m.max(d)));
    }

    fn see_observable(&mut self, l: usize) {
        self.max_observable = Some(self.max_observable.map_or(l, |m| m.max(l)));
    }

    fn finish(self) -> DemModel {
        let num_detectors = self.max_detector.map_or(0, |m| m + 1);
        let mut coords = vec![None; num_detectors];
        for (d, c) in self.coords {
            coords[d] = Some(c);
        }
        DemModel {
            mechanisms: self.mechanisms,
            num_detectors,
            num_observables: self.max_observable.map_or(0, |m| m + 1),
            coords,
            typing: None,
        }
    }
}

enum Target {
    Detector(usize),
    Observable(usize),
    Separator,
}

fn parse_target(t: &str) -> Option<Target> {
    if t == "^" {
        return Some(Target::Separator);
    }
    let (kind, num) = t.split_at(1);
    let k = num.parse().ok()?;
    match kind {
        "D" => Some(Target::Detector(k)),
        "L" => Some(Target::Observable(k)),
        _ => None,
    }
}

/// Parses a sidecar typing file: lines `X: <indices>` and `Z: <indices>`.
pub fn parse_sidecar(text: &str) -> Result<TypingRule, DemError> {
    let mut x = None;
    let mut z = None;
    // `;` is accepted as a line separator so short listings fit on one line.
    for part in text.split(['\n', ';']) {
        let part = part.trim();
        if part.is_empty() || part.starts_with('#') {
            continue;
        }
        let (label, list) = part
            .split_once(':')
            .ok_or_else(|| DemError::Typing(format!("expected `X: ...` or `Z: ...`, got {part:?}")))?;
        let indices = list
            .split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|_| DemError::Typing(format!("bad index {t:?}"))))
            .collect::<Result<Vec<_>, _>>()?;
        let slot = match label.trim() {
            "X" => &mut x,
            "Z" => &mut z,
            other => return Err(DemError::Typing(format!("unknown detector type {other:?}"))),
        };
        if slot.replace(indices).is_some() {
            return Err(DemError::Typing(format!("type {} listed twice", label.trim())));
        }
    }
    Ok(TypingRule::Sidecar { x: x.unwrap_or_default(), z: z.unwrap_or_default() })
}

/// Assigns a type to every detector of `model`.
pub fn classify_detectors(model: &DemModel, rule: &TypingRule) -> Result<DetectorTyping, DemError> {
    let n = model.num_detectors;
    match rule {
        TypingRule::Coordinate { index, values } => {
            let types = (0..n)
                .map(|d| {
                    let c = model.coords[d]
                        .as_ref()
                        .and_then(|c| c.get(*index))
                        .ok_or_else(|| DemError::Typing(format!("detector D{d} has no coordinate {index}")))?;
                    values
                        .iter()
                        .find(|(v, _)| v == c)
                        .map(|&(_, t)| t)
                        .ok_or_else(|| DemError::Typing(format!("detector D{d}: unknown coordinate value {c}")))
                })
                .collect::<Result<_, _>>()?;
            Ok(DetectorTyping::new(types, TypingSource::CoordinateRule))
        }
        TypingRule::Sidecar { x, z } => {
            let mut types: Vec<Option<DetectorType>> = vec![None; n];
            for (list, t) in [(x, DetectorType::X), (z, DetectorType::Z)] {
                for &d in list {
                    let slot = types
                        .get_mut(d)
                        .ok_or_else(|| DemError::Typing(format!("index {d} out of range for {n} detectors")))?;
                    if slot.replace(t).is_some() {
                        return Err(DemError::Typing(format!("detector D{d} typed more than once")));
                    }
                }
            }
            let types = types
                .into_iter()
                .enumerate()
                .map(|(d, t)| t.ok_or_else(|| DemError::Typing(format!("detector D{d} is untyped"))))
                .collect::<Result<_, _>>()?;
            Ok(DetectorTyping::new(types, TypingSource::SidecarFile))
        }
    }
}

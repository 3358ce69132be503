use std::io::BufRead;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use gari_core::decoder::DecodeInput;
use gari_core::dem::{classify_detectors, load_dem_file, open_dem_file, parse_sidecar, DemModel, DetectorType, TypingRule};

/// How detector types are assigned.
///
/// Without flags, a sidecar `<dem>.typing` (or `<dem without .gz>.typing`)
/// is used if present, otherwise coordinate 3 with `0=X,1=Z`.
#[derive(Debug, Clone, Args)]
pub struct TypingArgs {
    /// Sidecar file with `X: ...` and `Z: ...` lines.
    #[arg(long, conflicts_with_all = ["coord_index", "coord_map"])]
    pub typing: Option<PathBuf>,
    /// Detector coordinate that holds the basis.
    #[arg(long)]
    pub coord_index: Option<usize>,
    /// Coordinate values per type, e.g. `0=X,1=Z`.
    #[arg(long)]
    pub coord_map: Option<String>,
}

pub struct LoadedDem {
    pub model: DemModel,
    /// `rounds=N` from the leading comment block, if any.
    pub rounds: Option<u32>,
}

fn sidecar_candidates(dem: &Path) -> Vec<PathBuf> {
    let name = dem.as_os_str().to_string_lossy().into_owned();
    let mut out = vec![PathBuf::from(format!("{name}.typing"))];
    if let Some(stem) = name.strip_suffix(".gz") {
        out.push(PathBuf::from(format!("{stem}.typing")));
    }
    out
}

pub fn parse_coord_map(text: &str) -> Result<Vec<(f64, DetectorType)>> {
    text.split(',')
        .map(|pair| {
            let (v, t) = pair.split_once('=').with_context(|| format!("expected value=type, got {pair:?}"))?;
            let v: f64 = v.trim().parse().with_context(|| format!("bad coordinate value {v:?}"))?;
            let t = match t.trim() {
                "X" | "x" => DetectorType::X,
                "Z" | "z" => DetectorType::Z,
                other => bail!("unknown detector type {other:?}"),
            };
            Ok((v, t))
        })
        .collect()
}

fn typing_rule(dem: &Path, args: &TypingArgs) -> Result<TypingRule> {
    if let Some(path) = &args.typing {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        return Ok(parse_sidecar(&text)?);
    }
    if args.coord_index.is_some() || args.coord_map.is_some() {
        let default = TypingRule::basis_coordinate();
        let TypingRule::Coordinate { index, values } = default else { unreachable!() };
        return Ok(TypingRule::Coordinate {
            index: args.coord_index.unwrap_or(index),
            values: match &args.coord_map {
                Some(m) => parse_coord_map(m)?,
                None => values,
            },
        });
    }
    for cand in sidecar_candidates(dem) {
        if cand.is_file() {
            log::info!("using typing sidecar {}", cand.display());
            let text = std::fs::read_to_string(&cand)?;
            return Ok(parse_sidecar(&text)?);
        }
    }
    Ok(TypingRule::basis_coordinate())
}

/// Finds `rounds=N` in the comment lines at the top of a DEM file.
pub fn header_rounds(dem: &Path) -> Result<Option<u32>> {
    for line in open_dem_file(dem)?.lines() {
        let line = line?;
        let Some(comment) = line.trim_start().strip_prefix('#') else { break };
        for tok in comment.split(|c: char| c.is_whitespace() || c == ',') {
            if let Some(n) = tok.strip_prefix("rounds=") {
                return Ok(Some(n.parse().with_context(|| format!("bad rounds value {n:?}"))?));
            }
        }
    }
    Ok(None)
}

pub fn load_typed_dem(dem: &Path, args: &TypingArgs) -> Result<LoadedDem> {
    let model = load_dem_file(dem).with_context(|| format!("loading {}", dem.display()))?;
    let rule = typing_rule(dem, args)?;
    let typing = classify_detectors(&model, &rule)?;
    Ok(LoadedDem { model: model.with_typing(typing)?, rounds: header_rounds(dem)? })
}

/// Parses one bit vector: a `0`/`1` string with bit `i` at position `i`, a
/// `0x` hex number whose bit `i` is bit `i` of the vector, or `-` for an
/// empty vector.
pub fn parse_bits(tok: &str, n: usize) -> Result<Vec<bool>> {
    if tok == "-" {
        if n != 0 {
            bail!("expected {n} bits, got an empty vector");
        }
        return Ok(Vec::new());
    }
    if let Some(hex) = tok.strip_prefix("0x").or_else(|| tok.strip_prefix("0X")) {
        let mut bits = vec![false; n];
        for (j, ch) in hex.chars().rev().enumerate() {
            let d = ch.to_digit(16).with_context(|| format!("bad hex digit {ch:?}"))?;
            for b in 0..4 {
                if d >> b & 1 == 1 {
                    let i = 4 * j + b;
                    *bits.get_mut(i).with_context(|| format!("hex value sets bit {i}, vector has {n} bits"))? = true;
                }
            }
        }
        return Ok(bits);
    }
    if tok.len() != n {
        bail!("expected {n} bits, got {}", tok.len());
    }
    tok.chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            _ => bail!("bad bit {c:?}"),
        })
        .collect()
}

/// Parses a `<s_X> <s_Z>` line.
pub fn parse_syndrome_line(line: &str, nx: usize, nz: usize) -> Result<DecodeInput> {
    let toks: Vec<&str> = line.split_whitespace().collect();
    let [sx, sz] = toks[..] else { bail!("expected two fields `<s_X> <s_Z>`, got {}", toks.len()) };
    Ok(DecodeInput { s_x: parse_bits(sx, nx).context("s_X")?, s_z: parse_bits(sz, nz).context("s_Z")? })
}

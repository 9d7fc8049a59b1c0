//! The PB1 binary bundle format.
//!
//! One block per bundle: magic `SPDR`, format version (u32 LE), n_paths,
//! len, dim (u32 LE each), seed (u64 LE), then n_paths·len·(dim+1) float64
//! LE values laid out path-major, row-major, with time as column 0. A
//! dataset file is a sequence of blocks; a sidecar `.jsonl` file carries one
//! compact model-spec JSON line per block.

use crate::{CliError, CliResult};
use speedrs_core::path::{Path, PathBundle};
use speedrs_core::sde::ModelSpec;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path as FsPath, PathBuf};

pub const MAGIC: [u8; 4] = *b"SPDR";
pub const VERSION: u32 = 1;

/// Writes one PB1 block. Requires a uniform path length and dimension
/// across the bundle (PB1 does not represent ragged bundles).
pub fn write_block(w: &mut impl Write, bundle: &PathBundle) -> CliResult<()> {
    let len = bundle.paths[0].len();
    let dim = bundle.dim();
    for p in &bundle.paths {
        if p.len() != len || p.dim() != dim {
            return Err(CliError::Config(
                "PB1 requires a uniform path length and dimension per bundle".into(),
            ));
        }
    }
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(bundle.len() as u32).to_le_bytes())?;
    w.write_all(&(len as u32).to_le_bytes())?;
    w.write_all(&(dim as u32).to_le_bytes())?;
    w.write_all(&bundle.seed.to_le_bytes())?;
    for p in &bundle.paths {
        for i in 0..len {
            w.write_all(&p.times()[i].to_le_bytes())?;
            for j in 0..dim {
                w.write_all(&p.value(i, j).to_le_bytes())?;
            }
        }
    }
    Ok(())
}

fn read_exact_or_eof(r: &mut impl Read, buf: &mut [u8]) -> CliResult<bool> {
    let mut filled = 0;
    while filled < buf.len() {
        let n = r.read(&mut buf[filled..])?;
        if n == 0 {
            if filled == 0 {
                return Ok(false);
            }
            return Err(CliError::Config("truncated PB1 block".into()));
        }
        filled += n;
    }
    Ok(true)
}

fn read_u32(r: &mut impl Read) -> CliResult<u32> {
    let mut b = [0u8; 4];
    if !read_exact_or_eof(r, &mut b)? {
        return Err(CliError::Config("truncated PB1 block".into()));
    }
    Ok(u32::from_le_bytes(b))
}

/// Reads one PB1 block, or `None` at a clean end of file.
pub fn read_block(r: &mut impl Read, spec_id: &str) -> CliResult<Option<PathBundle>> {
    let mut magic = [0u8; 4];
    if !read_exact_or_eof(r, &mut magic)? {
        return Ok(None);
    }
    if magic != MAGIC {
        return Err(CliError::Config("bad PB1 magic bytes".into()));
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(CliError::Config(format!(
            "unsupported PB1 version {version} (expected {VERSION})"
        )));
    }
    let n_paths = read_u32(r)? as usize;
    let len = read_u32(r)? as usize;
    let dim = read_u32(r)? as usize;
    let mut seed_b = [0u8; 8];
    if !read_exact_or_eof(r, &mut seed_b)? {
        return Err(CliError::Config("truncated PB1 block".into()));
    }
    let seed = u64::from_le_bytes(seed_b);
    if n_paths == 0 || len < 2 || dim == 0 {
        return Err(CliError::Config(format!(
            "invalid PB1 header: n_paths={n_paths}, len={len}, dim={dim}"
        )));
    }
    let mut raw = vec![0u8; n_paths * len * (dim + 1) * 8];
    if !read_exact_or_eof(r, &mut raw)? {
        return Err(CliError::Config("truncated PB1 block".into()));
    }
    let mut vals = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let mut paths = Vec::with_capacity(n_paths);
    for _ in 0..n_paths {
        let mut times = Vec::with_capacity(len);
        let mut values = Vec::with_capacity(len * dim);
        for _ in 0..len {
            times.push(vals.next().unwrap());
            for _ in 0..dim {
                values.push(vals.next().unwrap());
            }
        }
        paths.push(Path::new(times, values, dim)?);
    }
    Ok(Some(PathBundle::new(paths, spec_id, seed)?))
}

/// Sidecar path for a PB1 dataset file: same stem, `.jsonl` extension.
pub fn sidecar_path(pb1: &FsPath) -> PathBuf {
    pb1.with_extension("jsonl")
}

/// Writes a dataset: blocks to `<path>` and one compact spec JSON line per
/// block to the sidecar.
pub fn write_dataset(
    path: &FsPath,
    bundles: &[PathBundle],
    specs: &[ModelSpec],
) -> CliResult<()> {
    if bundles.len() != specs.len() {
        return Err(CliError::Config(format!(
            "{} bundles but {} specs",
            bundles.len(),
            specs.len()
        )));
    }
    let mut w = BufWriter::new(File::create(path)?);
    for b in bundles {
        write_block(&mut w, b)?;
    }
    w.flush()?;
    let mut s = BufWriter::new(File::create(sidecar_path(path))?);
    for spec in specs {
        serde_json::to_writer(&mut s, spec)?;
        s.write_all(b"\n")?;
    }
    s.flush()?;
    Ok(())
}

/// Reads a dataset written by [`write_dataset`]. Bundle `spec_id`s are
/// restored from the sidecar model labels.
pub fn read_dataset(path: &FsPath) -> CliResult<(Vec<PathBundle>, Vec<ModelSpec>)> {
    let side = std::fs::read_to_string(sidecar_path(path))?;
    let specs: Vec<ModelSpec> = side
        .lines()
        .map(serde_json::from_str)
        .collect::<Result<_, _>>()?;
    let mut r = BufReader::new(File::open(path)?);
    let mut bundles = Vec::with_capacity(specs.len());
    for spec in &specs {
        match read_block(&mut r, &spec.label())? {
            Some(b) => bundles.push(b),
            None => {
                return Err(CliError::Config(format!(
                    "PB1 file has fewer blocks than sidecar lines ({})",
                    specs.len()
                )))
            }
        }
    }
    if read_block(&mut r, "extra")?.is_some() {
        return Err(CliError::Config(
            "PB1 file has more blocks than sidecar lines".into(),
        ));
    }
    Ok((bundles, specs))
}

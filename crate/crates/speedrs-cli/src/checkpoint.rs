//! Model checkpoint files: one JSON header line (architecture,
//! standardizer, seed, metadata, version) followed by a raw float64
//! little-endian weight blob (per layer: weights row-major, then biases).

use crate::{CliError, CliResult};
use serde::{Deserialize, Serialize};
use speedrs_core::approx::MmdApproximator;
use speedrs_core::neural::{mlp_init, MlpParams, MlpSpec, Standardizer};
use speedrs_core::pipeline::RegressionModel;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const FORMAT: &str = "SPEEDRS-CKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CkptKind {
    Approximator,
    Regressor,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CkptHeader {
    pub format: String,
    pub version: u32,
    pub kind: CkptKind,
    pub spec: MlpSpec,
    pub standardizer: Standardizer,
    /// Training seed, kept for provenance.
    pub seed: u64,
    /// Approximator truncation level (absent for regressors).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symmetrize: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clamp: Option<bool>,
    pub n_weights: usize,
}

fn blob_len(params: &MlpParams) -> usize {
    params.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
}

fn write_ckpt(path: &Path, header: &CkptHeader, params: &MlpParams) -> CliResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, header)?;
    w.write_all(b"\n")?;
    for layer in &params.layers {
        for v in layer.w.iter().chain(&layer.b) {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_ckpt(path: &Path, want: CkptKind) -> CliResult<(CkptHeader, MlpParams)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header_line = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        if r.read(&mut byte)? == 0 {
            return Err(CliError::Config("checkpoint missing header line".into()));
        }
        if byte[0] == b'\n' {
            break;
        }
        header_line.push(byte[0]);
    }
    let header: CkptHeader = serde_json::from_slice(&header_line)?;
    if header.format != FORMAT {
        return Err(CliError::Config(format!(
            "not a checkpoint file: format {:?}",
            header.format
        )));
    }
    if header.version != VERSION {
        return Err(CliError::Config(format!(
            "unsupported checkpoint version {}",
            header.version
        )));
    }
    if header.kind != want {
        return Err(CliError::Config(format!(
            "checkpoint kind mismatch: found {:?}, expected {want:?}",
            header.kind
        )));
    }
    // layer shapes are a function of the spec, so rebuild and overwrite
    let mut params = mlp_init(header.spec, 0);
    if blob_len(&params) != header.n_weights {
        return Err(CliError::Config(format!(
            "weight count {} inconsistent with architecture",
            header.n_weights
        )));
    }
    let mut blob = vec![0u8; header.n_weights * 8];
    r.read_exact(&mut blob).map_err(|_| {
        CliError::Config("checkpoint weight blob is truncated".into())
    })?;
    let mut vals = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    for layer in &mut params.layers {
        for v in layer.w.iter_mut().chain(layer.b.iter_mut()) {
            *v = vals.next().unwrap();
        }
    }
    Ok((header, params))
}

pub fn save_approximator(path: &Path, m: &MmdApproximator, seed: u64) -> CliResult<()> {
    let header = CkptHeader {
        format: FORMAT.into(),
        version: VERSION,
        kind: CkptKind::Approximator,
        spec: m.mlp.spec,
        standardizer: m.standardizer.clone(),
        seed,
        level: Some(m.level),
        symmetrize: Some(m.symmetrize),
        clamp: Some(m.clamp),
        n_weights: blob_len(&m.mlp),
    };
    write_ckpt(path, &header, &m.mlp)
}

pub fn load_approximator(path: &Path) -> CliResult<MmdApproximator> {
    let (header, mlp) = read_ckpt(path, CkptKind::Approximator)?;
    let level = header
        .level
        .ok_or_else(|| CliError::Config("approximator checkpoint missing level".into()))?;
    Ok(MmdApproximator {
        mlp,
        standardizer: header.standardizer,
        level,
        symmetrize: header.symmetrize.unwrap_or(true),
        clamp: header.clamp.unwrap_or(true),
    })
}

pub fn save_regressor(path: &Path, m: &RegressionModel, seed: u64) -> CliResult<()> {
    let header = CkptHeader {
        format: FORMAT.into(),
        version: VERSION,
        kind: CkptKind::Regressor,
        spec: m.mlp.spec,
        standardizer: m.standardizer.clone(),
        seed,
        level: None,
        symmetrize: None,
        clamp: None,
        n_weights: blob_len(&m.mlp),
    };
    write_ckpt(path, &header, &m.mlp)
}

pub fn load_regressor(path: &Path) -> CliResult<RegressionModel> {
    let (header, mlp) = read_ckpt(path, CkptKind::Regressor)?;
    Ok(RegressionModel {
        mlp,
        standardizer: header.standardizer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use speedrs_core::approx::{approx_distance, feature_len, half_len, hidden_width};
    use speedrs_core::neural::Activation;

    fn toy_approximator() -> MmdApproximator {
        let spec = MlpSpec {
            input_dim: feature_len(2),
            hidden_dim: hidden_width(2),
            activation: Activation::Relu,
        };
        MmdApproximator {
            mlp: mlp_init(spec, 11),
            standardizer: Standardizer {
                mean: vec![0.1; feature_len(2)],
                std: vec![0.9; feature_len(2)],
            },
            level: 2,
            symmetrize: true,
            clamp: true,
        }
    }

    #[test]
    fn approximator_round_trip_is_bit_stable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let m = toy_approximator();
        save_approximator(&path, &m, 3).unwrap();
        let back = load_approximator(&path).unwrap();
        assert_eq!(back.mlp, m.mlp);
        assert_eq!(back.standardizer, m.standardizer);
        assert_eq!(back.level, 2);
        let a: Vec<f64> = (0..half_len(2)).map(|i| 0.3 * i as f64).collect();
        let b: Vec<f64> = (0..half_len(2)).map(|i| -0.1 * i as f64).collect();
        let d0 = approx_distance(&m, &a, &b).unwrap();
        let d1 = approx_distance(&back, &a, &b).unwrap();
        assert_eq!(d0.to_bits(), d1.to_bits());
    }

    #[test]
    fn kind_and_corruption_checks() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let m = toy_approximator();
        save_approximator(&path, &m, 3).unwrap();
        assert!(matches!(
            load_regressor(&path),
            Err(CliError::Config(_))
        ));
        // truncate the blob
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 9]).unwrap();
        assert!(matches!(
            load_approximator(&path),
            Err(CliError::Config(_))
        ));
    }

    #[test]
    fn regressor_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.ckpt");
        let spec = MlpSpec {
            input_dim: 5,
            hidden_dim: 15,
            activation: Activation::Tanhshrink,
        };
        let model = RegressionModel {
            mlp: mlp_init(spec, 2),
            standardizer: Standardizer {
                mean: vec![0.0; 5],
                std: vec![1.0; 5],
            },
        };
        save_regressor(&path, &model, 9).unwrap();
        let back = load_regressor(&path).unwrap();
        assert_eq!(back.mlp, model.mlp);
    }
}

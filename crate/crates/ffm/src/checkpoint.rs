//! Binary checkpoint format.
//!
//! ```text
//! "FFMCKPT" '1'            8 bytes: magic and format version
//! u32 little-endian        header length in bytes
//! header                   UTF-8 `key=value` lines
//! payload                  `params` little-endian f64 values
//! ```
//!
//! The payload lists the operator tensors in [`OperatorConfig::param_shapes`]
//! order, each row-major: lifting (`w1, b1, w2, b2`), then per block the
//! spectral weights `[2, modes, width, width]` and the pointwise bypass
//! (`w, b`), then projection (`w1, b1, w2, b2`). The header carries the
//! operator config, the path, the reference kernel and grid, and a SHA-256
//! of the payload. Floats in the header are written in shortest round-trip
//! form, so a load reproduces the saved values bit for bit.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use ffm_core::gaussian::{Grid, GridKind, KernelFamily, KernelSpec};
use ffm_core::operator::{OperatorConfig, OperatorParams};
use ffm_core::path::PathParametrization;
use sha2::{Digest, Sha256};

pub const MAGIC: &[u8; 7] = b"FFMCKPT";
pub const VERSION: u8 = b'1';

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("checkpoint format version {found:?} is not supported (expected {expected:?})")]
    VersionMismatch { found: char, expected: char },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
}

fn corrupt(msg: impl Into<String>) -> CheckpointError {
    CheckpointError::Corrupt(msg.into())
}

/// Everything besides the weights that sampling needs.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelMeta {
    pub path: PathParametrization,
    pub kernel: KernelSpec,
    /// Training grid.
    pub grid: Grid,
    pub epochs: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: OperatorParams,
    pub meta: ModelMeta,
}

fn kind_name(k: GridKind) -> &'static str {
    match k {
        GridKind::HalfOpen => "half-open",
        GridKind::Inclusive => "inclusive",
    }
}

pub fn parse_grid_kind(s: &str) -> Option<GridKind> {
    match s {
        "half-open" => Some(GridKind::HalfOpen),
        "inclusive" => Some(GridKind::Inclusive),
        _ => None,
    }
}

pub fn family_name(f: KernelFamily) -> &'static str {
    match f {
        KernelFamily::Matern12 => "matern12",
        KernelFamily::SquaredExponential => "squared-exponential",
        KernelFamily::White => "white",
    }
}

pub fn parse_family(s: &str) -> Option<KernelFamily> {
    match s {
        "matern12" => Some(KernelFamily::Matern12),
        "squared-exponential" | "se" => Some(KernelFamily::SquaredExponential),
        "white" => Some(KernelFamily::White),
        _ => None,
    }
}

fn header_lines(ck: &Checkpoint, digest: &str) -> Vec<(String, String)> {
    let c = ck.params.config();
    let m = &ck.meta;
    let mut h: Vec<(String, String)> = vec![
        ("operator.modes".into(), c.modes.to_string()),
        ("operator.width".into(), c.width.to_string()),
        ("operator.layers".into(), c.layers.to_string()),
        ("operator.lifting".into(), c.lifting.to_string()),
        ("operator.projection".into(), c.projection.to_string()),
        ("operator.coord_harmonics".into(), c.coord_harmonics.to_string()),
        ("operator.cond_channels".into(), c.cond_channels.to_string()),
    ];
    match m.path {
        PathParametrization::Ot { sigma_min } => {
            h.push(("path.kind".into(), "ot".into()));
            h.push(("path.sigma_min".into(), format!("{sigma_min:?}")));
        }
        PathParametrization::Vp { s } => {
            h.push(("path.kind".into(), "vp".into()));
            h.push(("path.s".into(), format!("{s:?}")));
        }
    }
    h.extend([
        ("kernel.family".into(), family_name(m.kernel.family).into()),
        ("kernel.variance".into(), format!("{:?}", m.kernel.variance)),
        ("kernel.lengthscale".into(), format!("{:?}", m.kernel.lengthscale)),
        ("grid.start".into(), format!("{:?}", m.grid.start())),
        ("grid.end".into(), format!("{:?}", m.grid.end())),
        ("grid.n".into(), m.grid.len().to_string()),
        ("grid.kind".into(), kind_name(m.grid.kind()).into()),
        ("train.epochs".into(), m.epochs.to_string()),
        ("train.seed".into(), m.seed.to_string()),
        ("params".into(), ck.params.count().to_string()),
        ("payload_sha256".into(), digest.into()),
    ]);
    h
}

pub fn encode(ck: &Checkpoint) -> Vec<u8> {
    let flat = ck.params.flat();
    let mut payload = Vec::with_capacity(flat.len() * 8);
    for v in &flat {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    let digest = hex::encode(Sha256::digest(&payload));
    let header: String = header_lines(ck, &digest)
        .into_iter()
        .map(|(k, v)| format!("{k}={v}\n"))
        .collect();
    let mut out = Vec::with_capacity(12 + header.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&payload);
    out
}

struct Header(BTreeMap<String, String>);

impl Header {
    fn get(&self, key: &str) -> Result<&str, CheckpointError> {
        self.0
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| corrupt(format!("header is missing `{key}`")))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T, CheckpointError> {
        self.get(key)?
            .parse()
            .map_err(|_| corrupt(format!("header value for `{key}` does not parse")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    if bytes.len() < 8 || &bytes[..7] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    if bytes[7] != VERSION {
        return Err(CheckpointError::VersionMismatch {
            found: bytes[7] as char,
            expected: VERSION as char,
        });
    }
    let len_bytes: [u8; 4] = bytes
        .get(8..12)
        .and_then(|b| b.try_into().ok())
        .ok_or_else(|| corrupt("truncated before the header length"))?;
    let hlen = u32::from_le_bytes(len_bytes) as usize;
    let header = bytes
        .get(12..12 + hlen)
        .ok_or_else(|| corrupt("truncated header"))?;
    let header = std::str::from_utf8(header).map_err(|_| corrupt("header is not UTF-8"))?;
    let mut map = BTreeMap::new();
    for line in header.lines().filter(|l| !l.is_empty()) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| corrupt(format!("header line without `=`: {line}")))?;
        map.insert(k.to_string(), v.to_string());
    }
    let h = Header(map);

    let payload = &bytes[12 + hlen..];
    let count: usize = h.parse("params")?;
    if payload.len() != count * 8 {
        return Err(corrupt(format!(
            "payload has {} bytes, header promises {count} values",
            payload.len()
        )));
    }
    if hex::encode(Sha256::digest(payload)) != h.get("payload_sha256")? {
        return Err(corrupt("payload checksum mismatch"));
    }
    let flat: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();

    let config = OperatorConfig {
        modes: h.parse("operator.modes")?,
        width: h.parse("operator.width")?,
        layers: h.parse("operator.layers")?,
        lifting: h.parse("operator.lifting")?,
        projection: h.parse("operator.projection")?,
        coord_harmonics: h.parse("operator.coord_harmonics")?,
        cond_channels: h.parse("operator.cond_channels")?,
    };
    let params = OperatorParams::from_flat(config, &flat).map_err(|e| corrupt(e.to_string()))?;
    let path = match h.get("path.kind")? {
        "ot" => PathParametrization::ot(h.parse("path.sigma_min")?),
        "vp" => PathParametrization::vp(h.parse("path.s")?),
        other => return Err(corrupt(format!("unknown path kind `{other}`"))),
    }
    .map_err(|e| corrupt(e.to_string()))?;
    let family = parse_family(h.get("kernel.family")?).ok_or_else(|| corrupt("unknown kernel family"))?;
    let kernel = KernelSpec::new(family, h.parse("kernel.variance")?, h.parse("kernel.lengthscale")?)
        .map_err(|e| corrupt(e.to_string()))?;
    let kind = parse_grid_kind(h.get("grid.kind")?).ok_or_else(|| corrupt("unknown grid kind"))?;
    let grid = Grid::new(h.parse("grid.start")?, h.parse("grid.end")?, h.parse("grid.n")?, kind)
        .map_err(|e| corrupt(e.to_string()))?;
    Ok(Checkpoint {
        params,
        meta: ModelMeta {
            path,
            kernel,
            grid,
            epochs: h.parse("train.epochs")?,
            seed: h.parse("train.seed")?,
        },
    })
}

/// Writes to a temporary file in the target directory, then renames it over
/// `path`, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn save(path: &Path, ck: &Checkpoint) -> Result<(), CheckpointError> {
    Ok(write_atomic(path, &encode(ck))?)
}

pub fn load(path: &Path) -> Result<Checkpoint, CheckpointError> {
    decode(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let config = OperatorConfig::new(3, 4, 2);
        Checkpoint {
            params: OperatorParams::build(config, 11).unwrap(),
            meta: ModelMeta {
                path: PathParametrization::ot(1e-4).unwrap(),
                kernel: KernelSpec::reference_1d(),
                grid: Grid::unit(16).unwrap(),
                epochs: 3,
                seed: 9,
            },
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = sample();
        let back = decode(&encode(&ck)).unwrap();
        assert_eq!(back, ck);
        let a: Vec<u64> = ck.params.flat().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = back.params.flat().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn vp_meta_round_trips() {
        let mut ck = sample();
        ck.meta.path = PathParametrization::vp(0.08).unwrap();
        ck.meta.grid = Grid::new(0.0, 1.0, 20, GridKind::Inclusive).unwrap();
        assert_eq!(decode(&encode(&ck)).unwrap().meta, ck.meta);
    }

    #[test]
    fn version_and_magic_are_checked() {
        let mut bytes = encode(&sample());
        bytes[7] = b'2';
        assert!(matches!(
            decode(&bytes),
            Err(CheckpointError::VersionMismatch { found: '2', .. })
        ));
        bytes[0] = b'X';
        assert!(matches!(decode(&bytes), Err(CheckpointError::BadMagic)));
        assert!(matches!(decode(b"FFM"), Err(CheckpointError::BadMagic)));
    }

    #[test]
    fn damage_is_detected() {
        let bytes = encode(&sample());
        let mut flipped = bytes.clone();
        let last = flipped.len() - 1;
        flipped[last] ^= 1;
        assert!(matches!(decode(&flipped), Err(CheckpointError::Corrupt(_))));
        assert!(matches!(
            decode(&bytes[..bytes.len() - 8]),
            Err(CheckpointError::Corrupt(_))
        ));
        assert!(matches!(decode(&bytes[..10]), Err(CheckpointError::Corrupt(_))));
    }

    #[test]
    fn atomic_save_then_load() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        let ck = sample();
        save(&p, &ck).unwrap();
        save(&p, &ck).unwrap();
        assert_eq!(load(&p).unwrap(), ck);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}

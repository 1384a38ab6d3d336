//! Versioned binary container for trained networks and PCA models.
//!
//! Layout: 8-byte magic, `u32` version, then fields in declaration order.
//! Integers are `u64`, floats `f64`, both little-endian; matrices are a row
//! and column count followed by row-major entries. Round-trips are bit-exact.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::redunet::{ClassOperator, LayerParams, Mode, TrainConfig, TrainedNetwork};
use crate::spectral::PcaModel;

pub const NETWORK_MAGIC: [u8; 8] = *b"RDANET\0\0";
pub const PCA_MAGIC: [u8; 8] = *b"RDAPCA\0\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }

    fn u64(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u64).to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f64s(&mut self, vs: &[f64]) {
        self.u64(vs.len());
        for &v in vs {
            self.f64(v);
        }
    }

    fn matrix(&mut self, m: &DMatrix<f64>) {
        self.u64(m.nrows());
        self.u64(m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                self.f64(m[(i, j)]);
            }
        }
    }

    fn header(&mut self, magic: &[u8; 8]) {
        self.0.extend_from_slice(magic);
        self.0.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Truncated {
                path: self.path.to_path_buf(),
                expected: self.pos.saturating_add(n),
                found: self.bytes.len(),
            }),
        }
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u64(&mut self) -> Result<usize> {
        let b = self.take(8)?;
        let v = u64::from_le_bytes(b.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| Error::format(self.path, format!("count {v} out of range")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.u64()?;
        self.check_room(n, 8)?;
        (0..n).map(|_| self.f64()).collect()
    }

    fn check_room(&self, count: usize, width: usize) -> Result<()> {
        let need = count.checked_mul(width).and_then(|b| b.checked_add(self.pos));
        match need {
            Some(end) if end <= self.bytes.len() => Ok(()),
            _ => Err(Error::Truncated {
                path: self.path.to_path_buf(),
                expected: need.unwrap_or(usize::MAX),
                found: self.bytes.len(),
            }),
        }
    }

    fn matrix(&mut self) -> Result<DMatrix<f64>> {
        let rows = self.u64()?;
        let cols = self.u64()?;
        self.check_room(rows.saturating_mul(cols), 8)?;
        let mut m = DMatrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = self.f64()?;
            }
        }
        Ok(m)
    }

    fn header(&mut self, magic: &[u8; 8]) -> Result<()> {
        let found = self.take(8)?;
        if found != magic {
            return Err(Error::format(self.path, "not a model file of the expected kind"));
        }
        let version = u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::format(
                self.path,
                format!("unsupported format version {version} (expected {FORMAT_VERSION})"),
            ));
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::format(
                self.path,
                format!("{} trailing bytes", self.bytes.len() - self.pos),
            ));
        }
        Ok(())
    }
}

fn write_config(w: &mut Writer, c: &TrainConfig) {
    w.f64(c.epsilon_sq);
    w.f64(c.eta);
    w.f64(c.lambda_u);
    w.f64(c.delta);
    w.u64(c.max_iterations);
    w.u64(c.layers);
    w.u8(match c.mode {
        Mode::Adaptive => 0,
        Mode::FixedAlphaOne => 1,
    });
    w.f64(c.ns_energy);
    w.u64(c.ns_rank.unwrap_or(0));
}

fn read_config(r: &mut Reader) -> Result<TrainConfig> {
    Ok(TrainConfig {
        epsilon_sq: r.f64()?,
        eta: r.f64()?,
        lambda_u: r.f64()?,
        delta: r.f64()?,
        max_iterations: r.u64()?,
        layers: r.u64()?,
        mode: match r.u8()? {
            0 => Mode::Adaptive,
            1 => Mode::FixedAlphaOne,
            other => return Err(Error::format(r.path, format!("unknown mode tag {other}"))),
        },
        ns_energy: r.f64()?,
        ns_rank: Some(r.u64()?).filter(|&v| v > 0),
    })
}

fn write_pca(w: &mut Writer, p: &PcaModel) {
    w.u64(p.input_dim);
    w.u64(p.output_dim);
    w.matrix(&p.components);
    w.f64s(&p.component_eigenvalues);
    w.f64(p.cumulative_variance_ratio);
    w.f64(p.total_variance);
    w.f64s(p.mean.as_slice());
}

fn read_pca(r: &mut Reader) -> Result<PcaModel> {
    let input_dim = r.u64()?;
    let output_dim = r.u64()?;
    let components = r.matrix()?;
    let component_eigenvalues = r.f64s()?;
    let cumulative_variance_ratio = r.f64()?;
    let total_variance = r.f64()?;
    let mean = DVector::from_vec(r.f64s()?);
    if components.shape() != (input_dim, output_dim) || mean.len() != input_dim {
        return Err(Error::format(r.path, "PCA block has inconsistent shapes"));
    }
    Ok(PcaModel {
        input_dim,
        output_dim,
        components,
        component_eigenvalues,
        cumulative_variance_ratio,
        total_variance,
        mean,
    })
}

/// Serializes a network and the optional PCA front end it expects.
pub fn encode_network(network: &TrainedNetwork, pca: Option<&PcaModel>) -> Vec<u8> {
    let mut w = Writer::default();
    w.header(&NETWORK_MAGIC);
    write_config(&mut w, &network.config);
    w.u64(network.dim);
    w.u64(network.class_count);
    w.u64(network.layers.len());
    for layer in &network.layers {
        w.u64(layer.index);
        w.f64(layer.alpha);
        w.matrix(&layer.expansion);
        w.u64(layer.classes.len());
        for class in &layer.classes {
            w.f64(class.alpha);
            w.matrix(&class.compression);
        }
    }
    w.u64(network.ns_bases.len());
    for basis in &network.ns_bases {
        w.matrix(basis);
    }
    match pca {
        Some(p) => {
            w.u8(1);
            write_pca(&mut w, p);
        }
        None => w.u8(0),
    }
    w.0
}

pub fn decode_network(bytes: &[u8], path: &Path) -> Result<(TrainedNetwork, Option<PcaModel>)> {
    let mut r = Reader { bytes, pos: 0, path };
    r.header(&NETWORK_MAGIC)?;
    let config = read_config(&mut r)?;
    let dim = r.u64()?;
    let class_count = r.u64()?;
    let layer_count = r.u64()?;
    let mut layers = Vec::new();
    for _ in 0..layer_count {
        let index = r.u64()?;
        let alpha = r.f64()?;
        let expansion = r.matrix()?;
        let class_len = r.u64()?;
        let mut classes = Vec::new();
        for _ in 0..class_len {
            let alpha = r.f64()?;
            let compression = r.matrix()?;
            classes.push(ClassOperator { alpha, compression });
        }
        if expansion.shape() != (dim, dim) || classes.len() != class_count {
            return Err(Error::format(path, format!("layer {index} has inconsistent shapes")));
        }
        layers.push(LayerParams {
            index,
            alpha,
            expansion,
            classes,
        });
    }
    let basis_count = r.u64()?;
    let mut ns_bases = Vec::new();
    for _ in 0..basis_count {
        ns_bases.push(r.matrix()?);
    }
    let pca = match r.u8()? {
        0 => None,
        1 => Some(read_pca(&mut r)?),
        other => return Err(Error::format(path, format!("unknown PCA flag {other}"))),
    };
    r.finish()?;
    if let Some(p) = &pca {
        if p.output_dim != dim {
            return Err(Error::format(path, "PCA output does not match the network dimension"));
        }
    }
    Ok((
        TrainedNetwork {
            dim,
            class_count,
            layers,
            ns_bases,
            config,
        },
        pca,
    ))
}

pub fn save_network(path: impl AsRef<Path>, network: &TrainedNetwork, pca: Option<&PcaModel>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_network(network, pca)).map_err(|e| Error::io(path, e))
}

pub fn load_network(path: impl AsRef<Path>) -> Result<(TrainedNetwork, Option<PcaModel>)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_network(&bytes, path)
}

pub fn encode_pca(model: &PcaModel) -> Vec<u8> {
    let mut w = Writer::default();
    w.header(&PCA_MAGIC);
    write_pca(&mut w, model);
    w.0
}

pub fn decode_pca(bytes: &[u8], path: &Path) -> Result<PcaModel> {
    let mut r = Reader { bytes, pos: 0, path };
    r.header(&PCA_MAGIC)?;
    let model = read_pca(&mut r)?;
    r.finish()?;
    Ok(model)
}

pub fn save_pca(path: impl AsRef<Path>, model: &PcaModel) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pca(model)).map_err(|e| Error::io(path, e))
}

pub fn load_pca(path: impl AsRef<Path>) -> Result<PcaModel> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pca(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_network() -> TrainedNetwork {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, -0.25, -0.25, f64::MIN_POSITIVE]);
        TrainedNetwork {
            dim: 2,
            class_count: 1,
            layers: vec![LayerParams {
                index: 0,
                alpha: 0.1,
                expansion: m.clone(),
                classes: vec![ClassOperator {
                    alpha: 1.0 / 3.0,
                    compression: m * 2.0,
                }],
            }],
            ns_bases: vec![DMatrix::from_row_slice(2, 1, &[0.6, 0.8])],
            config: TrainConfig {
                ns_rank: Some(1),
                ..TrainConfig::default()
            },
        }
    }

    #[test]
    fn network_round_trip_is_exact() {
        let net = tiny_network();
        let bytes = encode_network(&net, None);
        let (back, pca) = decode_network(&bytes, Path::new("mem")).unwrap();
        assert_eq!(back, net);
        assert!(pca.is_none());
        assert_eq!(encode_network(&back, None), bytes);
    }

    #[test]
    fn matrices_are_row_major() {
        let net = tiny_network();
        let bytes = encode_network(&net, None);
        let needle: Vec<u8> = [1.0f64, -0.25]
            .iter()
            .flat_map(|v| v.to_le_bytes())
            .collect();
        assert!(bytes.windows(16).any(|w| w == needle.as_slice()));
    }

    #[test]
    fn truncation_and_magic_are_detected() {
        let bytes = encode_network(&tiny_network(), None);
        let cut = &bytes[..bytes.len() - 5];
        assert!(matches!(decode_network(cut, Path::new("m")), Err(Error::Truncated { .. })));
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(decode_network(&wrong, Path::new("m")).is_err());
        let mut longer = bytes;
        longer.push(0);
        assert!(decode_network(&longer, Path::new("m")).is_err());
    }
}

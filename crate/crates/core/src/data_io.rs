//! Dataset ingestion (MNIST IDX, comma-delimited numbers), seeded synthetic
//! union-of-subspaces data, and CSV result tables.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABEL_MAGIC: u32 = 0x0000_0801;

/// Samples as columns, with optional class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `p × m`.
    pub samples: DMatrix<f64>,
    pub labels: Option<Vec<usize>>,
    pub class_count: usize,
    pub provenance: String,
}

impl Dataset {
    pub fn new(samples: DMatrix<f64>, labels: Option<Vec<usize>>, provenance: impl Into<String>) -> Result<Self> {
        if let Some(bad) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::param(format!(
                "non-finite entry in sample {}",
                bad / samples.nrows().max(1)
            )));
        }
        let class_count = match &labels {
            Some(l) => {
                if l.len() != samples.ncols() {
                    return Err(Error::CountMismatch {
                        images: samples.ncols(),
                        labels: l.len(),
                    });
                }
                l.iter().max().map_or(0, |&v| v + 1)
            }
            None => 0,
        };
        Ok(Self {
            samples,
            labels,
            class_count,
            provenance: provenance.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.samples.nrows()
    }

    pub fn len(&self) -> usize {
        self.samples.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Labels, or an error for unlabelled data.
    pub fn require_labels(&self) -> Result<&[usize]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::param(format!("{} has no labels", self.provenance)))
    }

    /// The columns at `indices`, in that order. Keeps the class count.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            samples: self.samples.select_columns(indices),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            class_count: self.class_count,
            provenance: self.provenance.clone(),
        }
    }

    /// First `train_per_class` samples of each class go to the first set,
    /// the rest to the second; order is otherwise preserved.
    pub fn split_per_class(&self, train_per_class: usize) -> Result<(Dataset, Dataset)> {
        let labels = self.require_labels()?;
        let mut seen = vec![0usize; self.class_count];
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for (i, &l) in labels.iter().enumerate() {
            if seen[l] < train_per_class {
                train.push(i);
            } else {
                test.push(i);
            }
            seen[l] += 1;
        }
        Ok((self.subset(&train), self.subset(&test)))
    }

    /// Up to `per_class` samples from each of `classes`, relabelled
    /// `0..classes.len()` in the given order.
    pub fn class_subset(&self, classes: &[usize], per_class: usize) -> Result<Dataset> {
        let labels = self.require_labels()?;
        let mut seen = vec![0usize; classes.len()];
        let mut picked = Vec::new();
        let mut new_labels = Vec::new();
        for (i, l) in labels.iter().enumerate() {
            if let Some(pos) = classes.iter().position(|c| c == l) {
                if seen[pos] < per_class {
                    seen[pos] += 1;
                    picked.push(i);
                    new_labels.push(pos);
                }
            }
        }
        Dataset::new(
            self.samples.select_columns(&picked),
            Some(new_labels),
            format!("{} classes {:?}", self.provenance, classes),
        )
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Truncated {
            path: path.to_path_buf(),
            expected: offset + 4,
            found: bytes.len(),
        })
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<()> {
    let found = be_u32(bytes, 0, path)?;
    if found != expected {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    Ok(())
}

/// Raw IDX image file: count, rows, cols and the pixel bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

pub fn read_idx_images(path: impl AsRef<Path>) -> Result<IdxImages> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    check_magic(&bytes, IDX_IMAGE_MAGIC, path)?;
    let count = be_u32(&bytes, 4, path)? as usize;
    let rows = be_u32(&bytes, 8, path)? as usize;
    let cols = be_u32(&bytes, 12, path)? as usize;
    let expected = 16 + count * rows * cols;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected,
            found: bytes.len(),
        });
    }
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels: bytes[16..expected].to_vec(),
    })
}

pub fn read_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    check_magic(&bytes, IDX_LABEL_MAGIC, path)?;
    let count = be_u32(&bytes, 4, path)? as usize;
    let expected = 8 + count;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected,
            found: bytes.len(),
        });
    }
    Ok(bytes[8..expected].to_vec())
}

/// Loads an IDX image/label pair; pixels become `value / 255`.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let images_path = images_path.as_ref();
    let images = read_idx_images(images_path)?;
    let labels = read_idx_labels(labels_path.as_ref())?;
    if images.count != labels.len() {
        return Err(Error::CountMismatch {
            images: images.count,
            labels: labels.len(),
        });
    }
    let p = images.rows * images.cols;
    let samples = DMatrix::from_iterator(p, images.count, images.pixels.iter().map(|&b| f64::from(b) / 255.0));
    Dataset::new(
        samples,
        Some(labels.iter().map(|&l| usize::from(l)).collect()),
        images_path.display().to_string(),
    )
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_idx_images(path: impl AsRef<Path>, images: &IdxImages) -> Result<()> {
    if images.pixels.len() != images.count * images.rows * images.cols {
        return Err(Error::param("pixel buffer does not match the image shape"));
    }
    let mut bytes = Vec::with_capacity(16 + images.pixels.len());
    for v in [IDX_IMAGE_MAGIC, images.count as u32, images.rows as u32, images.cols as u32] {
        bytes.extend_from_slice(&v.to_be_bytes());
    }
    bytes.extend_from_slice(&images.pixels);
    write_bytes(path.as_ref(), &bytes)
}

pub fn write_idx_labels(path: impl AsRef<Path>, labels: &[u8]) -> Result<()> {
    let mut bytes = Vec::with_capacity(8 + labels.len());
    bytes.extend_from_slice(&IDX_LABEL_MAGIC.to_be_bytes());
    bytes.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    bytes.extend_from_slice(labels);
    write_bytes(path.as_ref(), &bytes)
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::format(path, e.to_string()))
}

/// Reads a comma-delimited numeric file, row for row. A first line that does
/// not parse as numbers is taken as a header and skipped.
pub fn read_matrix_rows(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in csv_reader(path)?.records().enumerate() {
        let record = record.map_err(|e| Error::format(path, e.to_string()))?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if line == 0 => continue,
            Err(e) => return Err(Error::format(path, format!("row {}: {e}", line + 1))),
        }
    }
    let width = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != width) {
        return Err(Error::format(path, "rows have different lengths"));
    }
    Ok(DMatrix::from_row_iterator(rows.len(), width, rows.into_iter().flatten()))
}

/// Reads one integer label per line (or per comma-separated field).
pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let mut labels = Vec::new();
    for (line, record) in csv_reader(path)?.records().enumerate() {
        let record = record.map_err(|e| Error::format(path, e.to_string()))?;
        for field in record.iter().filter(|f| !f.is_empty()) {
            match field.parse::<usize>() {
                Ok(v) => labels.push(v),
                Err(_) if line == 0 && labels.is_empty() => {}
                Err(e) => return Err(Error::format(path, format!("line {}: {e}", line + 1))),
            }
        }
    }
    Ok(labels)
}

/// A dataset from a CSV of samples (one per row) and an optional label file.
pub fn load_csv(data_path: impl AsRef<Path>, labels_path: Option<&Path>) -> Result<Dataset> {
    let data_path = data_path.as_ref();
    let samples = read_matrix_rows(data_path)?.transpose();
    let labels = labels_path.map(read_labels).transpose()?;
    Dataset::new(samples, labels, data_path.display().to_string())
}

/// Seeded union-of-subspaces data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub class_count: usize,
    pub dim: usize,
    pub subspace_dim: usize,
    pub per_class: usize,
    pub noise: f64,
    pub seed: u64,
    /// Draw mutually orthogonal class subspaces.
    pub orthogonal: bool,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.class_count == 0 || self.dim == 0 || self.subspace_dim == 0 {
            return Err(Error::param("class count, dimension and subspace dimension must be positive"));
        }
        if self.subspace_dim > self.dim {
            return Err(Error::param(format!(
                "subspace dimension {} exceeds ambient dimension {}",
                self.subspace_dim, self.dim
            )));
        }
        if self.orthogonal && self.class_count * self.subspace_dim > self.dim {
            return Err(Error::param(format!(
                "{} orthogonal subspaces of dimension {} do not fit in dimension {}",
                self.class_count, self.subspace_dim, self.dim
            )));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::param(format!("noise level must be non-negative, got {}", self.noise)));
        }
        Ok(())
    }
}

fn orthonormal_columns(rng: &mut ChaCha8Rng, n: usize, cols: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, cols, |_, _| rng.sample::<f64, _>(StandardNormal));
    g.qr().q().columns(0, cols).into_owned()
}

/// Each sample is `U_t c + noise * e` with Gaussian `c` and `e`; samples are
/// grouped by class.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let (k, n, d) = (spec.class_count, spec.dim, spec.subspace_dim);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let bases: Vec<DMatrix<f64>> = if spec.orthogonal {
        let q = orthonormal_columns(&mut rng, n, k * d);
        (0..k).map(|t| q.columns(t * d, d).into_owned()).collect()
    } else {
        (0..k).map(|_| orthonormal_columns(&mut rng, n, d)).collect()
    };
    let m = k * spec.per_class;
    let mut samples = DMatrix::zeros(n, m);
    let mut labels = Vec::with_capacity(m);
    for (t, basis) in bases.iter().enumerate() {
        for s in 0..spec.per_class {
            let c = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let mut x = basis * c;
            for v in x.iter_mut() {
                *v += spec.noise * rng.sample::<f64, _>(StandardNormal);
            }
            samples.set_column(t * spec.per_class + s, &x);
            labels.push(t);
        }
    }
    let mut ds = Dataset::new(
        samples,
        Some(labels),
        format!(
            "synthetic k={} n={} d={} per_class={} noise={} seed={}",
            k, n, d, spec.per_class, spec.noise, spec.seed
        ),
    )?;
    ds.class_count = k;
    Ok(ds)
}

/// 17 significant digits, so the text parses back to the same double.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn table_error(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::format(path, e.to_string())
}

/// Writes a header and string rows as comma-separated text.
pub fn write_records(path: impl AsRef<Path>, columns: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let path = path.as_ref();
    if let Some(bad) = rows.iter().find(|r| r.len() != columns.len()) {
        return Err(Error::param(format!(
            "table row has {} fields but the header has {}",
            bad.len(),
            columns.len()
        )));
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file);
    w.write_record(columns).map_err(|e| table_error(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| table_error(path, e))?;
    }
    let mut file = w.into_inner().map_err(|e| table_error(path, e))?;
    file.flush().map_err(|e| Error::io(path, e))
}

pub fn write_table(path: impl AsRef<Path>, columns: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let text: Vec<Vec<String>> = rows
        .iter()
        .map(|r| r.iter().map(|&v| format_float(v)).collect())
        .collect();
    write_records(path, columns, &text)
}

/// Parses a table written by [`write_table`]: header plus numeric rows.
pub fn read_table(path: impl AsRef<Path>) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| table_error(path, e))?;
    let header = r
        .headers()
        .map_err(|e| table_error(path, e))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut rows = Vec::new();
    for record in r.records() {
        let record = record.map_err(|e| table_error(path, e))?;
        let row = record
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| table_error(path, format!("{f:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_text_round_trips() {
        for v in [0.1, 0.7, 1.0 / 3.0, f64::MIN_POSITIVE, 1e300, -2.5e-17, f64::NEG_INFINITY] {
            assert_eq!(format_float(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }

    #[test]
    fn synthetic_rank_one_classes() {
        let spec = SyntheticSpec {
            class_count: 2,
            dim: 4,
            subspace_dim: 1,
            per_class: 5,
            noise: 0.0,
            seed: 1,
            orthogonal: true,
        };
        let ds = generate_synthetic(&spec).unwrap();
        for t in 0..2 {
            let cols = ds.samples.columns(t * 5, 5);
            let u = cols.column(0).normalize();
            for c in cols.column_iter() {
                let residual = c - &u * u.dot(&c);
                assert!(residual.norm() < 1e-12 * c.norm().max(1.0));
            }
        }
        let a = ds.samples.column(0).normalize();
        let b = ds.samples.column(5).normalize();
        assert!(a.dot(&b).abs() < 1e-12);
    }

    #[test]
    fn synthetic_is_seeded() {
        let spec = SyntheticSpec {
            class_count: 3,
            dim: 10,
            subspace_dim: 2,
            per_class: 7,
            noise: 0.1,
            seed: 42,
            orthogonal: false,
        };
        assert_eq!(generate_synthetic(&spec).unwrap(), generate_synthetic(&spec).unwrap());
        let other = SyntheticSpec { seed: 43, ..spec };
        assert_ne!(generate_synthetic(&spec).unwrap(), generate_synthetic(&other).unwrap());
    }

    #[test]
    fn synthetic_rejects_crowded_orthogonal_subspaces() {
        let spec = SyntheticSpec {
            class_count: 3,
            dim: 5,
            subspace_dim: 2,
            per_class: 1,
            noise: 0.0,
            seed: 0,
            orthogonal: true,
        };
        assert!(generate_synthetic(&spec).is_err());
        assert!(generate_synthetic(&SyntheticSpec { orthogonal: false, ..spec }).is_ok());
        assert!(generate_synthetic(&SyntheticSpec { noise: -1.0, ..spec }).is_err());
    }

    #[test]
    fn split_keeps_order() {
        let ds = Dataset::new(
            DMatrix::from_fn(1, 6, |_, j| j as f64),
            Some(vec![0, 1, 0, 1, 0, 1]),
            "t",
        )
        .unwrap();
        let (train, test) = ds.split_per_class(2).unwrap();
        assert_eq!(train.samples.as_slice(), &[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(test.labels.as_deref(), Some(&[0, 1][..]));
        assert_eq!(test.class_count, 2);
    }

    #[test]
    fn non_finite_samples_rejected() {
        assert!(Dataset::new(DMatrix::from_element(2, 2, f64::NAN), None, "t").is_err());
    }
}

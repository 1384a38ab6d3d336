use nalgebra::DMatrix;

use rdalpha::data_io::{self, generate_synthetic, IdxImages, SyntheticSpec};
use rdalpha::error::Error;
use rdalpha::rd::{log_grid, rd_curve, Variant, DEFAULT_DELTA, DEFAULT_GRID_FLOOR};
use rdalpha::redunet::{classify_with_bases, fit_subspaces, init_features, accuracy};
use rdalpha::spectral::Spectrum;

fn fixture() -> IdxImages {
    IdxImages {
        count: 2,
        rows: 2,
        cols: 3,
        pixels: vec![0, 1, 2, 127, 254, 255, 255, 0, 51, 102, 153, 204],
    }
}

#[test]
fn idx_fixture_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (img, lab) = (dir.path().join("img"), dir.path().join("lab"));
    data_io::write_idx_images(&img, &fixture()).unwrap();
    data_io::write_idx_labels(&lab, &[7, 2]).unwrap();

    let bytes = std::fs::read(&img).unwrap();
    assert_eq!(&bytes[..4], &[0, 0, 8, 3]);
    assert_eq!(&bytes[4..8], &[0, 0, 0, 2]);
    assert_eq!(data_io::read_idx_images(&img).unwrap(), fixture());

    let ds = data_io::load_idx(&img, &lab).unwrap();
    assert_eq!(ds.dim(), 6);
    assert_eq!(ds.len(), 2);
    assert_eq!(ds.labels.as_deref(), Some(&[7, 2][..]));
    assert_eq!(ds.class_count, 8);
    for (v, &b) in ds.samples.iter().zip(&fixture().pixels) {
        assert_eq!(*v, f64::from(b) / 255.0);
    }
}

#[test]
fn idx_errors_are_distinct() {
    let dir = tempfile::tempdir().unwrap();
    let (img, lab) = (dir.path().join("img"), dir.path().join("lab"));
    data_io::write_idx_images(&img, &fixture()).unwrap();

    data_io::write_idx_labels(&lab, &[1, 2, 3]).unwrap();
    let err = data_io::load_idx(&img, &lab).unwrap_err();
    assert!(matches!(err, Error::CountMismatch { images: 2, labels: 3 }));
    assert!(err.to_string().contains("count mismatch"));

    assert!(matches!(data_io::load_idx(&lab, &lab), Err(Error::BadMagic { found: 0x801, .. })));

    let mut bytes = std::fs::read(&img).unwrap();
    bytes.truncate(bytes.len() - 1);
    std::fs::write(&img, &bytes).unwrap();
    data_io::write_idx_labels(&lab, &[1, 2]).unwrap();
    assert!(matches!(data_io::load_idx(&img, &lab), Err(Error::Truncated { .. })));

    assert!(matches!(
        data_io::load_idx(dir.path().join("missing"), &lab),
        Err(Error::Io { .. })
    ));
}

#[test]
fn empty_table_is_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    data_io::write_table(&path, &["a", "b"], &[]).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), "a,b\n");
    let (header, rows) = data_io::read_table(&path).unwrap();
    assert_eq!(header, ["a", "b"]);
    assert!(rows.is_empty());
}

#[test]
fn table_floats_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    let rows = vec![vec![0.1, 0.7], vec![f64::NEG_INFINITY, 1.0 / 3.0]];
    data_io::write_table(&path, &["x", "y"], &rows).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.ends_with('\n'));
    let (_, back) = data_io::read_table(&path).unwrap();
    for (a, b) in rows.iter().flatten().zip(back.iter().flatten()) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn ragged_table_rejected() {
    let dir = tempfile::tempdir().unwrap();
    assert!(data_io::write_table(dir.path().join("t.csv"), &["x", "y"], &[vec![1.0]]).is_err());
}

#[test]
fn curve_table_shape() {
    let s = Spectrum::new((1..=10).rev().map(|i| i as f64 / 10.0).collect()).unwrap();
    let grid = log_grid(s.trace(), 200, DEFAULT_GRID_FLOOR);
    let curve = rd_curve(&s, &grid, &Variant::ALL, DEFAULT_DELTA).unwrap();
    let rows: Vec<Vec<f64>> = curve
        .rows
        .iter()
        .map(|r| {
            let mut v = vec![r.distortion];
            v.extend(Variant::ALL.iter().map(|&x| r.get(x).unwrap()));
            v
        })
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("curve.csv");
    data_io::write_table(&path, &["D", "R", "R0", "R1", "Ralpha_star"], &rows).unwrap();
    let (_, back) = data_io::read_table(&path).unwrap();
    assert_eq!(back.len(), 200);
    assert!(back.iter().all(|r| r.len() == 5));
}

#[test]
fn csv_samples_and_labels() {
    let dir = tempfile::tempdir().unwrap();
    let (x, y) = (dir.path().join("x.csv"), dir.path().join("y.csv"));
    std::fs::write(&x, "f0,f1,f2\n1,2,3\n4,5,6\n").unwrap();
    std::fs::write(&y, "label\n1\n0\n").unwrap();
    let ds = data_io::load_csv(&x, Some(&y)).unwrap();
    assert_eq!(ds.samples, DMatrix::from_column_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
    assert_eq!(ds.labels.as_deref(), Some(&[1, 0][..]));

    std::fs::write(&y, "0\n").unwrap();
    assert!(matches!(data_io::load_csv(&x, Some(&y)), Err(Error::CountMismatch { .. })));
    std::fs::write(&x, "1,2\n3\n").unwrap();
    assert!(data_io::load_csv(&x, None).is_err());
}

#[test]
fn raw_synthetic_data_is_already_separable() {
    let spec = SyntheticSpec {
        class_count: 3,
        dim: 20,
        subspace_dim: 2,
        per_class: 200,
        noise: 0.05,
        seed: 1,
        orthogonal: true,
    };
    let (train, test) = generate_synthetic(&spec).unwrap().split_per_class(100).unwrap();
    let z = init_features(&train.samples).unwrap();
    let bases = fit_subspaces(&z, train.labels.as_ref().unwrap(), 3, 0.95, None).unwrap();
    let zt = init_features(&test.samples).unwrap();
    let acc = accuracy(&classify_with_bases(&bases, &zt), test.labels.as_ref().unwrap());
    assert!(acc >= 0.95, "raw accuracy {acc}");
}

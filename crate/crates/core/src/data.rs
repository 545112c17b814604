//! Dataset ingestion and mini-batch iteration.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::shrinkage::ActiveSet;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TargetKind {
    /// Every target row is one-hot.
    Classification,
    /// Arbitrary targets in `[0, 1]`.
    RealValued,
}

/// Features and targets for `n` samples.
///
/// Features are stored sample-major (one contiguous row of `p` values per
/// sample) so that gathering a shuffled mini-batch is a sequence of row
/// copies. [`Dataset::features`] materializes the `p x n` column-per-sample
/// view.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    samples: Matrix,
    targets: Matrix,
    kind: TargetKind,
}

impl Dataset {
    /// Builds a dataset from a `p x n` feature matrix and `n x c` targets,
    /// inferring the target kind.
    pub fn new(features: Matrix, targets: Matrix) -> Result<Self> {
        Self::from_samples(features.transpose(), targets)
    }

    /// Builds a dataset from `n x p` sample rows and `n x c` targets.
    pub fn from_samples(samples: Matrix, targets: Matrix) -> Result<Self> {
        let kind = if is_one_hot(&targets) {
            TargetKind::Classification
        } else {
            TargetKind::RealValued
        };
        Self::with_kind(samples, targets, kind)
    }

    pub fn with_kind(samples: Matrix, targets: Matrix, kind: TargetKind) -> Result<Self> {
        if samples.rows() == 0 || samples.cols() == 0 || targets.cols() == 0 {
            return Err(Error::InvalidDataset("n, p and c must all be at least 1".into()));
        }
        if samples.rows() != targets.rows() {
            return Err(Error::InvalidDataset(format!(
                "{} feature samples but {} target rows",
                samples.rows(),
                targets.rows()
            )));
        }
        if !samples.is_finite() {
            return Err(Error::InvalidDataset("non-finite feature value".into()));
        }
        match kind {
            TargetKind::Classification if !is_one_hot(&targets) => {
                return Err(Error::InvalidDataset("classification targets must be one-hot".into()))
            }
            TargetKind::RealValued
                if targets.as_slice().iter().any(|v| !(0.0..=1.0).contains(v)) =>
            {
                return Err(Error::InvalidDataset("real-valued targets must lie in [0, 1]".into()))
            }
            _ => {}
        }
        Ok(Dataset {
            samples,
            targets,
            kind,
        })
    }

    /// Classification dataset from integer labels, one-hot over `classes`.
    pub fn from_labels(samples: Matrix, labels: &[usize], classes: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::IndexOutOfRange {
                op: "from_labels",
                index: bad,
                len: classes,
            });
        }
        Self::with_kind(samples, one_hot(labels, classes), TargetKind::Classification)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.samples.rows()
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.samples.cols()
    }

    #[inline]
    pub fn c(&self) -> usize {
        self.targets.cols()
    }

    pub fn kind(&self) -> TargetKind {
        self.kind
    }

    /// `p x n`, one column per sample.
    pub fn features(&self) -> Matrix {
        self.samples.transpose()
    }

    /// `n x p`, one row per sample.
    pub fn samples(&self) -> &Matrix {
        &self.samples
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        self.samples.row(i)
    }

    /// `n x c`.
    pub fn targets(&self) -> &Matrix {
        &self.targets
    }

    /// Class index per sample (argmax, ties toward the lowest index).
    pub fn labels(&self) -> Vec<usize> {
        (0..self.n()).map(|i| argmax(self.targets.row(i))).collect()
    }

    /// New dataset holding the given samples in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let samples = gather_rows(&self.samples, indices, "subset")?;
        let targets = gather_rows(&self.targets, indices, "subset")?;
        Self::with_kind(samples, targets, self.kind)
    }

    /// First `n` samples (or all of them if there are fewer).
    pub fn head(&self, n: usize) -> Result<Dataset> {
        let idx: Vec<usize> = (0..n.min(self.n())).collect();
        self.subset(&idx)
    }

    /// Gathers the listed samples as a `p x b` feature block and `b x c`
    /// targets.
    pub fn gather(&self, indices: &[usize]) -> Result<Batch> {
        let rows = gather_rows(&self.samples, indices, "gather")?;
        let targets = gather_rows(&self.targets, indices, "gather")?;
        Ok(Batch {
            sample_indices: indices.to_vec(),
            features: rows.transpose(),
            targets,
        })
    }
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn is_one_hot(targets: &Matrix) -> bool {
    (0..targets.rows()).all(|r| {
        let row = targets.row(r);
        row.iter().filter(|&&v| v == 1.0).count() == 1
            && row.iter().all(|&v| v == 0.0 || v == 1.0)
    })
}

fn one_hot(labels: &[usize], classes: usize) -> Matrix {
    let mut m = Matrix::zeros(labels.len(), classes);
    for (i, &l) in labels.iter().enumerate() {
        m.set(i, l, 1.0);
    }
    m
}

fn gather_rows(m: &Matrix, indices: &[usize], op: &'static str) -> Result<Matrix> {
    let mut data = Vec::with_capacity(indices.len() * m.cols());
    for &i in indices {
        if i >= m.rows() {
            return Err(Error::IndexOutOfRange {
                op,
                index: i,
                len: m.rows(),
            });
        }
        data.extend_from_slice(m.row(i));
    }
    Matrix::new(indices.len(), m.cols(), data)
}

/// A mini-batch: global sample indices with their features (`p x b`) and
/// targets (`b x c`).
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub sample_indices: Vec<usize>,
    pub features: Matrix,
    pub targets: Matrix,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.sample_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_indices.is_empty()
    }
}

/// Orders the active indices (permuted first when `shuffle_seed` is given)
/// and cuts them into chunks of `batch_size`; the last chunk may be short.
pub fn batch_indices(
    active: &ActiveSet,
    batch_size: usize,
    shuffle_seed: Option<u64>,
) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::invalid("batch_size must be at least 1"));
    }
    if active.is_empty() {
        return Err(Error::EmptyActiveSet);
    }
    let mut order = active.indices().to_vec();
    if let Some(seed) = shuffle_seed {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

/// Materialized mini-batches over the active set.
pub fn batches(
    ds: &Dataset,
    active: &ActiveSet,
    batch_size: usize,
    shuffle_seed: Option<u64>,
) -> Result<Vec<Batch>> {
    if active.n_total() != ds.n() {
        return Err(Error::Length {
            op: "batches",
            expected: ds.n(),
            found: active.n_total(),
        });
    }
    batch_indices(active, batch_size, shuffle_seed)?
        .iter()
        .map(|idx| ds.gather(idx))
        .collect()
}

// ---------------------------------------------------------------------------
// IDX

fn read_u32_be(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Truncated {
            path: path.to_path_buf(),
            needed: offset + 4,
            actual: bytes.len(),
        })
}

fn expect_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<()> {
    let found = read_u32_be(bytes, 0, path)?;
    if found != expected {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    Ok(())
}

fn expect_len(bytes: &[u8], needed: usize, path: &Path) -> Result<()> {
    if bytes.len() < needed {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            needed,
            actual: bytes.len(),
        });
    }
    Ok(())
}

/// Raw IDX image file contents.
#[derive(Clone, Debug, PartialEq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<IdxImages> {
    expect_magic(bytes, IDX_IMAGES_MAGIC, path)?;
    let count = read_u32_be(bytes, 4, path)? as usize;
    let rows = read_u32_be(bytes, 8, path)? as usize;
    let cols = read_u32_be(bytes, 12, path)? as usize;
    let needed = 16 + count * rows * cols;
    expect_len(bytes, needed, path)?;
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels: bytes[16..needed].to_vec(),
    })
}

pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    expect_magic(bytes, IDX_LABELS_MAGIC, path)?;
    let count = read_u32_be(bytes, 4, path)? as usize;
    expect_len(bytes, 8 + count, path)?;
    Ok(bytes[8..8 + count].to_vec())
}

/// Loads an IDX image/label pair. Pixels are scaled to `[0, 1]` by 1/255;
/// labels are one-hot encoded over the sorted distinct label values.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();
    let images = parse_idx_images(&fs::read(images_path)?, images_path)?;
    let labels = parse_idx_labels(&fs::read(labels_path)?, labels_path)?;
    if images.count != labels.len() {
        return Err(Error::CountMismatch {
            images: images.count,
            labels: labels.len(),
        });
    }
    let p = images.rows * images.cols;
    let samples = Matrix::new(
        images.count,
        p,
        images.pixels.iter().map(|&b| f64::from(b) / 255.0).collect(),
    )?;
    let alphabet: Vec<u8> = labels.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let encoded: Vec<usize> = labels
        .iter()
        .map(|l| alphabet.binary_search(l).expect("label drawn from alphabet"))
        .collect();
    Dataset::from_labels(samples, &encoded, alphabet.len())
}

/// Writes a classification dataset as an IDX pair. Features are clamped to
/// `[0, 1]` and quantized to bytes; square feature counts are written as
/// `k x k` images, anything else as `1 x p`.
pub fn write_idx(ds: &Dataset, images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<()> {
    if ds.kind() != TargetKind::Classification {
        return Err(Error::Unsupported("IDX labels require classification targets".into()));
    }
    if ds.c() > 256 {
        return Err(Error::Unsupported("IDX labels hold at most 256 classes".into()));
    }
    let p = ds.p();
    let side = (p as f64).sqrt().round() as usize;
    let (rows, cols) = if side * side == p { (side, side) } else { (1, p) };

    let mut img = Vec::with_capacity(16 + ds.n() * p);
    img.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    for v in [ds.n(), rows, cols] {
        img.extend_from_slice(&(v as u32).to_be_bytes());
    }
    img.extend(
        ds.samples
            .as_slice()
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );

    let mut lab = Vec::with_capacity(8 + ds.n());
    lab.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(ds.n() as u32).to_be_bytes());
    lab.extend(ds.labels().into_iter().map(|l| l as u8));

    fs::write(images_path, img)?;
    fs::write(labels_path, lab)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// CSV

/// Loads a numeric CSV whose last `target_cols` columns are targets.
pub fn load_csv(path: impl AsRef<Path>, target_cols: usize, header: bool) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path.as_ref())?;
    let row_offset = usize::from(header) + 1;

    let mut width = None;
    let mut values = Vec::new();
    let mut n = 0;
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row = r + row_offset;
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(Error::RaggedRow {
                row,
                expected,
                found: record.len(),
            });
        }
        for (col, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::NonNumeric {
                row,
                col: col + 1,
                value: cell.to_string(),
            })?;
            values.push(v);
        }
        n += 1;
    }
    let width = width.ok_or_else(|| Error::InvalidDataset("CSV has no data rows".into()))?;
    if target_cols == 0 || target_cols >= width {
        return Err(Error::invalid(format!(
            "target_cols must be in 1..{width}, got {target_cols}"
        )));
    }
    let p = width - target_cols;
    let mut samples = Vec::with_capacity(n * p);
    let mut targets = Vec::with_capacity(n * target_cols);
    for row in values.chunks(width) {
        samples.extend_from_slice(&row[..p]);
        targets.extend_from_slice(&row[p..]);
    }
    Dataset::from_samples(Matrix::new(n, p, samples)?, Matrix::new(n, target_cols, targets)?)
}

/// Writes features then targets per row, with an optional `x0..,y0..` header.
pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>, header: bool) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    if header {
        let names: Vec<String> = (0..ds.p())
            .map(|j| format!("x{j}"))
            .chain((0..ds.c()).map(|k| format!("y{k}")))
            .collect();
        w.write_record(&names)?;
    }
    for i in 0..ds.n() {
        let fields: Vec<String> = ds
            .sample(i)
            .iter()
            .chain(ds.targets.row(i))
            .map(f64::to_string)
            .collect();
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Synthetic

/// Mean of class `k`: coordinate `k mod p` set to `1 + k / p`, others zero.
/// Distinct classes always get distinct means.
fn blob_mean(k: usize, p: usize) -> Vec<f64> {
    let mut mean = vec![0.0; p];
    mean[k % p] = 1.0 + (k / p) as f64;
    mean
}

/// `c` Gaussian blobs with per-coordinate standard deviation `spread`.
/// Samples are interleaved by class (`i mod c`), so class counts differ by at
/// most one and the first `n mod c` classes get the extra sample.
pub fn synth_blobs(n: usize, p: usize, c: usize, spread: f64, seed: u64) -> Result<Dataset> {
    if c < 2 || n < c || p == 0 {
        return Err(Error::invalid(format!(
            "synth_blobs needs n >= c >= 2 and p >= 1 (n={n}, p={p}, c={c})"
        )));
    }
    if !(spread.is_finite() && spread >= 0.0) {
        return Err(Error::invalid(format!("spread must be finite and >= 0, got {spread}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means: Vec<Vec<f64>> = (0..c).map(|k| blob_mean(k, p)).collect();
    let mut samples = Vec::with_capacity(n * p);
    let labels: Vec<usize> = (0..n).map(|i| i % c).collect();
    for &k in &labels {
        for &mu in &means[k] {
            let z: f64 = StandardNormal.sample(&mut rng);
            samples.push(mu + spread * z);
        }
    }
    Dataset::from_labels(Matrix::new(n, p, samples)?, &labels, c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn idx_bytes(magic: u32, header: &[u32], body: &[u8]) -> Vec<u8> {
        let mut v = magic.to_be_bytes().to_vec();
        for h in header {
            v.extend_from_slice(&h.to_be_bytes());
        }
        v.extend_from_slice(body);
        v
    }

    fn write_pair(dir: &Path, images: &[u8], labels: &[u8]) -> (std::path::PathBuf, std::path::PathBuf) {
        let ip = dir.join("images");
        let lp = dir.join("labels");
        fs::write(&ip, images).unwrap();
        fs::write(&lp, labels).unwrap();
        (ip, lp)
    }

    #[test]
    fn idx_all_zero_images() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = write_pair(
            dir.path(),
            &idx_bytes(IDX_IMAGES_MAGIC, &[4, 2, 2], &[0; 16]),
            &idx_bytes(IDX_LABELS_MAGIC, &[4], &[0, 1, 0, 1]),
        );
        let ds = load_idx(ip, lp).unwrap();
        assert_eq!((ds.p(), ds.n(), ds.c()), (4, 4, 2));
        assert!(ds.features().as_slice().iter().all(|&v| v == 0.0));
        assert_eq!(ds.labels(), vec![0, 1, 0, 1]);
    }

    #[test]
    fn idx_label_seven_over_ten_classes() {
        let dir = tempfile::tempdir().unwrap();
        let labels: Vec<u8> = (0..10).collect();
        let (ip, lp) = write_pair(
            dir.path(),
            &idx_bytes(IDX_IMAGES_MAGIC, &[10, 1, 1], &[255; 10]),
            &idx_bytes(IDX_LABELS_MAGIC, &[10], &labels),
        );
        let ds = load_idx(ip, lp).unwrap();
        assert_eq!(ds.c(), 10);
        let row7 = ds.targets().row(7);
        assert_eq!(row7[7], 1.0);
        assert_eq!(row7.iter().sum::<f64>(), 1.0);
        assert_eq!(ds.sample(0), &[1.0]);
    }

    #[test]
    fn idx_errors_are_distinct() {
        let dir = tempfile::tempdir().unwrap();
        let good_labels = idx_bytes(IDX_LABELS_MAGIC, &[2], &[0, 1]);

        let (ip, lp) = write_pair(dir.path(), &idx_bytes(0x0000_0804, &[2, 1, 1], &[0, 0]), &good_labels);
        assert!(matches!(load_idx(&ip, &lp), Err(Error::BadMagic { found: 0x804, .. })));

        let (ip, lp) = write_pair(dir.path(), &idx_bytes(IDX_IMAGES_MAGIC, &[2, 2, 2], &[0; 5]), &good_labels);
        assert!(matches!(load_idx(&ip, &lp), Err(Error::Truncated { needed: 24, .. })));

        let (ip, lp) = write_pair(dir.path(), &idx_bytes(IDX_IMAGES_MAGIC, &[3, 1, 1], &[0; 3]), &good_labels);
        assert!(matches!(
            load_idx(&ip, &lp),
            Err(Error::CountMismatch { images: 3, labels: 2 })
        ));
    }

    #[test]
    fn idx_round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 12;
        let samples: Vec<f64> = (0..n * 9).map(|_| rand::Rng::random::<f64>(&mut rng)).collect();
        let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let ds = Dataset::from_labels(Matrix::new(n, 9, samples).unwrap(), &labels, 3).unwrap();
        let (ip, lp) = (dir.path().join("i"), dir.path().join("l"));
        write_idx(&ds, &ip, &lp).unwrap();
        let back = load_idx(&ip, &lp).unwrap();
        assert_eq!(back.labels(), ds.labels());
        for (a, b) in back.samples().as_slice().iter().zip(ds.samples().as_slice()) {
            assert!((a - b).abs() <= 1.0 / 255.0);
        }
    }

    fn csv_file(contents: &str) -> tempfile::NamedTempFile {
        let f = tempfile::NamedTempFile::new().unwrap();
        fs::write(f.path(), contents).unwrap();
        f
    }

    #[test]
    fn csv_classification_and_real_valued() {
        let f = csv_file("1,2,1,0\n3,4,0,1\n5,6,1,0\n");
        let ds = load_csv(f.path(), 2, false).unwrap();
        assert_eq!((ds.p(), ds.n(), ds.c()), (2, 3, 2));
        assert_eq!(ds.kind(), TargetKind::Classification);

        let f = csv_file("a,b,c,d,e\n1,2,0.3,0.4,0.3\n");
        let ds = load_csv(f.path(), 3, true).unwrap();
        assert_eq!(ds.kind(), TargetKind::RealValued);
        assert_eq!(ds.n(), 1);
    }

    #[test]
    fn csv_errors_report_location() {
        let f = csv_file("1,2,1,0\n3,4,0\n");
        assert!(matches!(
            load_csv(f.path(), 1, false),
            Err(Error::RaggedRow { row: 2, expected: 4, found: 3 })
        ));
        let f = csv_file("h1,h2,h3\n1,x,1\n");
        let err = load_csv(f.path(), 1, true).unwrap_err();
        assert!(matches!(err, Error::NonNumeric { row: 2, col: 2, .. }));
        assert!(err.to_string().contains("row 2, column 2"));
    }

    #[test]
    fn csv_round_trip() {
        let ds = synth_blobs(20, 3, 2, 0.3, 9).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_csv(&ds, f.path(), true).unwrap();
        assert_eq!(load_csv(f.path(), 2, true).unwrap(), ds);
    }

    #[test]
    fn synth_is_deterministic() {
        assert_eq!(synth_blobs(50, 4, 3, 0.5, 11).unwrap(), synth_blobs(50, 4, 3, 0.5, 11).unwrap());
        assert_ne!(synth_blobs(50, 4, 3, 0.5, 11).unwrap(), synth_blobs(50, 4, 3, 0.5, 12).unwrap());
    }

    #[test]
    fn synth_zero_spread_hits_means() {
        let ds = synth_blobs(30, 5, 3, 0.0, 1).unwrap();
        for (i, label) in ds.labels().into_iter().enumerate() {
            assert_eq!(ds.sample(i), blob_mean(label, 5).as_slice());
        }
    }

    #[test]
    fn synth_balanced_counts() {
        let ds = synth_blobs(100, 4, 3, 1.0, 0).unwrap();
        let mut counts = [0; 3];
        ds.labels().into_iter().for_each(|l| counts[l] += 1);
        assert_eq!(counts, [34, 33, 33]);
        assert!(synth_blobs(1, 4, 2, 1.0, 0).is_err());
        assert!(synth_blobs(10, 4, 1, 1.0, 0).is_err());
    }

    #[test]
    fn batches_in_order() {
        let ds = synth_blobs(10, 2, 2, 0.1, 0).unwrap();
        let active = ActiveSet::full(10);
        let got: Vec<Vec<usize>> = batches(&ds, &active, 4, None)
            .unwrap()
            .into_iter()
            .map(|b| b.sample_indices)
            .collect();
        assert_eq!(got, vec![vec![0, 1, 2, 3], vec![4, 5, 6, 7], vec![8, 9]]);
        assert_eq!(batches(&ds, &active, 10, None).unwrap().len(), 1);
        assert_eq!(batches(&ds, &active, 99, None).unwrap().len(), 1);
        assert!(batches(&ds, &active, 0, None).is_err());
    }

    #[test]
    fn batch_contents_match_dataset() {
        let ds = synth_blobs(10, 3, 2, 0.5, 4).unwrap();
        let b = ds.gather(&[7, 2]).unwrap();
        assert_eq!(b.features, ds.features().col_slice(&[7, 2]).unwrap());
        assert_eq!(b.targets.row(0), ds.targets().row(7));
    }

    #[test]
    fn shuffled_batches_are_deterministic() {
        let ds = synth_blobs(40, 2, 2, 0.1, 0).unwrap();
        let active = ActiveSet::full(40);
        let a = batches(&ds, &active, 7, Some(5)).unwrap();
        assert_eq!(a, batches(&ds, &active, 7, Some(5)).unwrap());
        assert_ne!(a, batches(&ds, &active, 7, Some(6)).unwrap());
    }

    proptest! {
        #[test]
        fn batches_partition_active_set(
            members in proptest::collection::btree_set(0usize..200, 1..80),
            bs_seed in 0usize..1000,
            shuffle in proptest::option::of(any::<u64>()),
        ) {
            let active = ActiveSet::new(members.iter().copied().collect(), 200).unwrap();
            let bs = 1 + bs_seed % active.len();
            let chunks = batch_indices(&active, bs, shuffle).unwrap();
            let mut seen = HashSet::new();
            for (i, c) in chunks.iter().enumerate() {
                if i + 1 < chunks.len() {
                    prop_assert_eq!(c.len(), bs);
                } else {
                    prop_assert!(!c.is_empty() && c.len() <= bs);
                }
                for &j in c {
                    prop_assert!(seen.insert(j));
                }
            }
            prop_assert_eq!(seen.len(), active.len());
            prop_assert!(active.indices().iter().all(|j| seen.contains(j)));
        }
    }
}

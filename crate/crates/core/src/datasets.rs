//! Training sets with the bias folded into the last input coordinate.

use std::fmt;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::NormalStream;

pub const IDX_IMAGES_MAGIC: u32 = 2051;
pub const IDX_LABELS_MAGIC: u32 = 2049;

/// Four-point 1-d problem used throughout. Its largest target is 0.8, so
/// the "well-trained" target assumption `max y ≥ ½` holds.
pub const DEFAULT_1D_POINTS: [(f64, f64); 4] = [(0.1, 0.8), (0.35, 0.2), (0.6, 0.6), (0.85, 0.4)];

/// `n × d` inputs stored row-major, with `x[i][d-1] == 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Vec<f64>,
    y: Vec<f64>,
    n: usize,
    d: usize,
}

impl Dataset {
    /// Builds a dataset from rows that already carry the bias coordinate.
    /// Shape is checked; content is left to [`validate`].
    pub fn from_rows(rows: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        if rows.len() != y.len() {
            return Err(Error::DimensionMismatch {
                context: "dataset targets",
                expected: rows.len(),
                actual: y.len(),
            });
        }
        let d = rows[0].len();
        let mut x = Vec::with_capacity(rows.len() * d);
        for r in &rows {
            if r.len() != d {
                return Err(Error::DimensionMismatch {
                    context: "dataset row",
                    expected: d,
                    actual: r.len(),
                });
            }
            x.extend_from_slice(r);
        }
        Self::from_flat(x, y, d)
    }

    pub fn from_flat(x: Vec<f64>, y: Vec<f64>, d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidConfig(format!(
                "augmented input dimension must be ≥ 2, got {d}"
            )));
        }
        let n = y.len();
        if n == 0 {
            return Err(Error::Empty("dataset"));
        }
        if x.len() != n * d {
            return Err(Error::DimensionMismatch {
                context: "dataset inputs",
                expected: n * d,
                actual: x.len(),
            });
        }
        Ok(Self { x, y, n, d })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    pub fn inputs(&self) -> &[f64] {
        &self.x
    }

    pub fn targets(&self) -> &[f64] {
        &self.y
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.x.chunks_exact(self.d).zip(self.y.iter().copied())
    }

    /// Rows in the given order; used to check permutation invariance.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.n {
            return Err(Error::DimensionMismatch {
                context: "permutation",
                expected: self.n,
                actual: order.len(),
            });
        }
        let mut x = Vec::with_capacity(self.x.len());
        let mut y = Vec::with_capacity(self.n);
        for &i in order {
            x.extend_from_slice(self.input(i));
            y.push(self.y[i]);
        }
        Self::from_flat(x, y, self.d)
    }

    /// CSV with header `x1,...,xd,y`, values in shortest round-trip form.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = (1..=self.d).map(|j| format!("x{j}")).collect();
        out.push_str(&header.join(","));
        out.push_str(",y\n");
        for (row, y) in self.rows() {
            for v in row {
                out.push_str(&format!("{v:?},"));
            }
            out.push_str(&format!("{y:?}\n"));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or(Error::Empty("CSV"))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        let d = cols.len().saturating_sub(1);
        let header_ok =
            cols.last() == Some(&"y") && cols[..d].iter().enumerate().all(|(j, c)| *c == format!("x{}", j + 1));
        if d < 2 || !header_ok {
            return Err(Error::Parse(format!("expected header x1,...,xd,y; found `{header}`")));
        }
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let vals = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse(format!("CSV line {}: {e}", lineno + 2)))?;
            if vals.len() != d + 1 {
                return Err(Error::DimensionMismatch {
                    context: "CSV row",
                    expected: d + 1,
                    actual: vals.len(),
                });
            }
            x.extend_from_slice(&vals[..d]);
            y.push(vals[d]);
        }
        Self::from_flat(x, y, d)
    }

    /// SHA-256 of the CSV form, hex encoded.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.to_csv().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// 1-d inputs `t` become rows `(t, 1)`.
pub fn synthetic_1d(points: &[(f64, f64)]) -> Result<Dataset> {
    if points.is_empty() {
        return Err(Error::Empty("point list"));
    }
    for (i, &(a, _)) in points.iter().enumerate() {
        if points[..i].iter().any(|&(b, _)| b == a) {
            return Err(Error::DuplicateInput(a));
        }
    }
    let x = points.iter().flat_map(|&(t, _)| [t, 1.0]).collect();
    let y = points.iter().map(|&(_, v)| v).collect();
    Dataset::from_flat(x, y, 2)
}

pub fn default_1d() -> Dataset {
    synthetic_1d(&DEFAULT_1D_POINTS).expect("default points are valid")
}

/// `n` points with inputs uniform on `[0,1]^(d-1)` plus the bias coordinate
/// and targets uniform on `[0,1]`; the largest target is lifted to at least
/// ½ so theory-mode validation passes.
pub fn random_dataset(n: usize, d: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Empty("dataset"));
    }
    let mut rng = NormalStream::new(seed);
    let mut x = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        for _ in 0..d.saturating_sub(1) {
            x.push(rng.uniform());
        }
        x.push(1.0);
        y.push(rng.uniform());
    }
    let (imax, &ymax) = y.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).expect("n ≥ 1");
    if ymax < 0.5 {
        y[imax] = 0.5 + ymax;
    }
    Dataset::from_flat(x, y, d)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    BiasCoordinate {
        row: usize,
        value: f64,
    },
    NonFinite {
        row: usize,
    },
    InputOutOfRange {
        row: usize,
        col: usize,
        value: f64,
    },
    TargetOutOfRange {
        row: usize,
        value: f64,
    },
    /// Largest target below ½.
    WeakTargets {
        max_target: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::BiasCoordinate { row, value } => {
                write!(f, "row {row}: bias coordinate is {value}, expected 1")
            }
            Violation::NonFinite { row } => write!(f, "row {row}: non-finite value"),
            Violation::InputOutOfRange { row, col, value } => {
                write!(f, "row {row}, column {col}: input {value} outside [0,1]")
            }
            Violation::TargetOutOfRange { row, value } => {
                write!(f, "row {row}: target {value} outside [0,1]")
            }
            Violation::WeakTargets { max_target } => {
                write!(f, "largest target {max_target} is below 1/2")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub max_target: f64,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate(dataset: &Dataset, theory_mode: bool) -> ValidationReport {
    let mut violations = Vec::new();
    let d = dataset.d();
    for (i, (row, y)) in dataset.rows().enumerate() {
        if row.iter().any(|v| !v.is_finite()) || !y.is_finite() {
            violations.push(Violation::NonFinite { row: i });
            continue;
        }
        if row[d - 1] != 1.0 {
            violations.push(Violation::BiasCoordinate {
                row: i,
                value: row[d - 1],
            });
        }
        if theory_mode {
            for (j, &v) in row[..d - 1].iter().enumerate() {
                if !(0.0..=1.0).contains(&v) {
                    violations.push(Violation::InputOutOfRange {
                        row: i,
                        col: j,
                        value: v,
                    });
                }
            }
            if !(0.0..=1.0).contains(&y) {
                violations.push(Violation::TargetOutOfRange { row: i, value: y });
            }
        }
    }
    let max_target = dataset.targets().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if theory_mode && max_target < 0.5 {
        violations.push(Violation::WeakTargets { max_target });
    }
    ValidationReport { violations, max_target }
}

fn read_be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Truncated {
            path: path.to_path_buf(),
            detail: format!("header ends at byte {}", bytes.len()),
        })
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<()> {
    let found = read_be_u32(bytes, 0, path)?;
    if found != expected {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    Ok(())
}

/// Loads the first `count` image/label pairs of an IDX file pair.
///
/// Pixels are divided by 255 and flattened row-major, then the bias
/// coordinate is appended; targets are `label * label_scale`.
pub fn from_idx(images_path: &Path, labels_path: &Path, count: usize, label_scale: f64) -> Result<Dataset> {
    let images = fs::read(images_path)?;
    let labels = fs::read(labels_path)?;
    check_magic(&images, IDX_IMAGES_MAGIC, images_path)?;
    check_magic(&labels, IDX_LABELS_MAGIC, labels_path)?;

    let n_images = read_be_u32(&images, 4, images_path)? as usize;
    let rows = read_be_u32(&images, 8, images_path)? as usize;
    let cols = read_be_u32(&images, 12, images_path)? as usize;
    let n_labels = read_be_u32(&labels, 4, labels_path)? as usize;
    if n_images != n_labels {
        return Err(Error::CountMismatch {
            images: n_images,
            labels: n_labels,
        });
    }
    let take = count.min(n_images);
    if take == 0 {
        return Err(Error::Empty("IDX selection"));
    }
    let pixels = rows * cols;
    let image_end = 16 + take * pixels;
    if images.len() < image_end {
        return Err(Error::Truncated {
            path: images_path.to_path_buf(),
            detail: format!("need {image_end} bytes for {take} images, have {}", images.len()),
        });
    }
    if labels.len() < 8 + take {
        return Err(Error::Truncated {
            path: labels_path.to_path_buf(),
            detail: format!("need {} bytes for {take} labels, have {}", 8 + take, labels.len()),
        });
    }

    let d = pixels + 1;
    let mut x = Vec::with_capacity(take * d);
    for img in images[16..image_end].chunks_exact(pixels) {
        x.extend(img.iter().map(|&p| p as f64 / 255.0));
        x.push(1.0);
    }
    let y = labels[8..8 + take].iter().map(|&l| l as f64 * label_scale).collect();
    Dataset::from_flat(x, y, d)
}

/// Serializes images and labels in IDX format (inverse of [`from_idx`]'s
/// input side).
pub fn write_idx(
    images_path: &Path,
    labels_path: &Path,
    rows: usize,
    cols: usize,
    images: &[u8],
    labels: &[u8],
) -> Result<()> {
    if images.len() != labels.len() * rows * cols {
        return Err(Error::DimensionMismatch {
            context: "IDX image payload",
            expected: labels.len() * rows * cols,
            actual: images.len(),
        });
    }
    let mut img = Vec::with_capacity(16 + images.len());
    img.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    img.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    img.extend_from_slice(&(rows as u32).to_be_bytes());
    img.extend_from_slice(&(cols as u32).to_be_bytes());
    img.extend_from_slice(images);
    let mut lab = Vec::with_capacity(8 + labels.len());
    lab.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    lab.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    lab.extend_from_slice(labels);
    fs::write(images_path, img)?;
    fs::write(labels_path, lab)?;
    Ok(())
}

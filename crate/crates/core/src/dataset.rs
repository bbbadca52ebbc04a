//! MNIST IDX ingestion, rough-grid features, and seeded subset selection.

use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

/// Row heights of the 4×8 feature grid over a 28×28 image.
pub const GRID_ROWS: [usize; 4] = [7, 7, 7, 7];
/// Column widths of the 4×8 feature grid.
pub const GRID_COLS: [usize; 8] = [4, 3, 4, 3, 4, 3, 4, 3];
pub const FEATURE_DIM: usize = GRID_ROWS.len() * GRID_COLS.len();

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub rows: usize,
    pub cols: usize,
    /// Row-major intensities.
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(rows: usize, cols: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} pixels for a {rows}x{cols} image",
                pixels.len()
            )));
        }
        Ok(Self { rows, cols, pixels })
    }
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format {
            offset: bytes.len(),
            message: format!("header truncated, need {} bytes", offset + 4),
        })
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let magic = read_u32(bytes, 0)?;
    if magic != expected {
        return Err(Error::Format {
            offset: 0,
            message: format!("magic {magic:#010x}, expected {expected:#010x}"),
        });
    }
    Ok(())
}

fn payload(bytes: &[u8], header: usize, len: usize) -> Result<&[u8]> {
    bytes.get(header..header + len).ok_or_else(|| Error::Format {
        offset: bytes.len(),
        message: format!("payload truncated, header declares {} bytes", header + len),
    })
}

/// Parses an uncompressed IDX image file.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<GrayImage>> {
    check_magic(bytes, IMAGE_MAGIC)?;
    let count = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    let size = rows * cols;
    let data = payload(bytes, 16, count * size)?;
    Ok(data
        .chunks_exact(size.max(1))
        .take(count)
        .map(|px| GrayImage {
            rows,
            cols,
            pixels: px.to_vec(),
        })
        .collect())
}

/// Parses an uncompressed IDX label file; labels must be digits 0..=9.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    check_magic(bytes, LABEL_MAGIC)?;
    let count = read_u32(bytes, 4)? as usize;
    let data = payload(bytes, 8, count)?;
    if let Some(i) = data.iter().position(|&l| l > 9) {
        return Err(Error::Format {
            offset: 8 + i,
            message: format!("label {} is not a digit", data[i]),
        });
    }
    Ok(data.to_vec())
}

pub fn encode_idx_images(images: &[GrayImage]) -> Result<Vec<u8>> {
    let (rows, cols) = images.first().map_or((28, 28), |i| (i.rows, i.cols));
    let mut out = Vec::with_capacity(16 + images.len() * rows * cols);
    for v in [IMAGE_MAGIC, images.len() as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for img in images {
        if (img.rows, img.cols) != (rows, cols) {
            return Err(Error::Shape("images of mixed dimensions".into()));
        }
        out.extend_from_slice(&img.pixels);
    }
    Ok(out)
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Decompresses gzip input (detected by its magic bytes); other input is
/// returned unchanged.
pub fn maybe_gunzip(bytes: Vec<u8>) -> Result<Vec<u8>> {
    if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&bytes[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::Format {
                offset: 0,
                message: format!("gzip: {e}"),
            })?;
        Ok(out)
    } else {
        Ok(bytes)
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    maybe_gunzip(raw)
}

pub fn read_idx_images(path: impl AsRef<Path>) -> Result<Vec<GrayImage>> {
    parse_idx_images(&read_file(path.as_ref())?)
}

pub fn read_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    parse_idx_labels(&read_file(path.as_ref())?)
}

/// Mean intensity / 255 of each cell of the 4×8 grid, row-major.
pub fn rough_grid_features(image: &GrayImage) -> Result<Vec<f64>> {
    if (image.rows, image.cols) != (28, 28) {
        return Err(Error::Shape(format!(
            "rough grid features need 28x28, got {}x{}",
            image.rows, image.cols
        )));
    }
    let mut out = Vec::with_capacity(FEATURE_DIM);
    let mut r0 = 0;
    for &h in &GRID_ROWS {
        let mut c0 = 0;
        for &w in &GRID_COLS {
            let sum: u32 = (r0..r0 + h)
                .flat_map(|r| &image.pixels[r * 28 + c0..r * 28 + c0 + w])
                .map(|&p| u32::from(p))
                .sum();
            out.push(f64::from(sum) / (255.0 * (h * w) as f64));
            c0 += w;
        }
        r0 += h;
    }
    Ok(out)
}

/// Per-label index lists, ordered like the `wanted` labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Subset {
    pub train: Vec<Vec<usize>>,
    pub test: Vec<Vec<usize>>,
}

/// Seeded selection without replacement of `n_train + n_test` indices per
/// wanted label; the first `n_train` of each shuffled pool go to training.
pub fn select_subset(
    labels: &[u8],
    wanted: &[u8],
    n_train: usize,
    n_test: usize,
    seed: u64,
) -> Result<Subset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::with_capacity(wanted.len());
    let mut test = Vec::with_capacity(wanted.len());
    for (i, &label) in wanted.iter().enumerate() {
        if wanted[..i].contains(&label) {
            return Err(Error::Config(format!("label {label} requested twice")));
        }
        let mut pool: Vec<usize> = (0..labels.len()).filter(|&j| labels[j] == label).collect();
        if pool.len() < n_train + n_test {
            return Err(Error::Data(format!(
                "label {label}: {} samples available, {} requested",
                pool.len(),
                n_train + n_test
            )));
        }
        pool.shuffle(&mut rng);
        test.push(pool[n_train..n_train + n_test].to_vec());
        pool.truncate(n_train);
        train.push(pool);
    }
    Ok(Subset { train, test })
}

/// One cached feature row: dataset label plus 32 grid features.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureRow {
    pub label: u8,
    pub features: Vec<f64>,
}

pub fn write_feature_csv(path: impl AsRef<Path>, rows: &[FeatureRow]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    let dim = rows.first().map_or(FEATURE_DIM, |r| r.features.len());
    let mut header = vec!["label".to_string()];
    header.extend((0..dim).map(|i| format!("f{i}")));
    w.write_record(&header)?;
    for row in rows {
        let mut rec = vec![row.label.to_string()];
        rec.extend(row.features.iter().map(|f| f.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_feature_csv(path: impl AsRef<Path>) -> Result<Vec<FeatureRow>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_io(path, e))?;
    let headers = r.headers()?.clone();
    if headers.get(0) != Some("label") || headers.len() < 2 {
        return Err(Error::Data(format!("{}: header must start with `label`", path.display())));
    }
    let mut rows = Vec::new();
    for (n, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::Data(format!("{}: row {}: bad {what}", path.display(), n + 1));
        let label = rec[0].trim().parse::<u8>().map_err(|_| bad("label"))?;
        let features = rec
            .iter()
            .skip(1)
            .map(|f| f.trim().parse::<f64>().map_err(|_| bad("feature")))
            .collect::<Result<Vec<_>>>()?;
        rows.push(FeatureRow { label, features });
    }
    Ok(rows)
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Data(format!("{}: {other:?}", path.display())),
    }
}

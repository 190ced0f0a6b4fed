//! Training data: IDX image files and a 2-D ring of Gaussians.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::fitness::Classifier;
use crate::genome::Shape;
use crate::rng::{derive_seed, rng_from_seed, RngState, StreamRng};

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// An endless stream of real samples, flattened row-major, scaled to `[-1, 1]`.
pub trait SampleSource: Send {
    fn sample_shape(&self) -> Shape;

    fn sample_len(&self) -> usize {
        self.sample_shape().numel()
    }

    fn next_batch(&mut self, n: usize) -> Result<Vec<f32>>;

    /// Draws `n` samples for evaluation without touching the training stream.
    fn reference_samples(&self, n: usize, rng: &mut StreamRng) -> Result<Vec<f32>>;

    /// Opaque position in the stream, for checkpoints.
    fn state(&self) -> String;

    fn restore_state(&mut self, state: &str) -> Result<()>;
}

/// Maps a pixel byte to `[-1, 1]`.
pub fn rescale_pixel(byte: u8) -> f32 {
    byte as f32 / 127.5 - 1.0
}

/// Inverse of [`rescale_pixel`], clamping out-of-range values.
pub fn pixel_byte(value: f32) -> u8 {
    ((value.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8
}

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl Reader<'_> {
    fn u32(&mut self, what: &str) -> Result<u32> {
        let end = self.offset + 4;
        let chunk = self.bytes.get(self.offset..end).ok_or_else(|| Error::Format {
            offset: self.offset as u64,
            message: format!("truncated while reading {what}"),
        })?;
        self.offset = end;
        Ok(u32::from_be_bytes(chunk.try_into().expect("four bytes")))
    }

    fn rest(&self, len: usize, what: &str) -> Result<&[u8]> {
        let available = self.bytes.len() - self.offset;
        if available < len {
            return Err(Error::Format {
                offset: self.bytes.len() as u64,
                message: format!("truncated {what}: expected {len} bytes, found {available}"),
            });
        }
        Ok(&self.bytes[self.offset..self.offset + len])
    }
}

fn check_magic(reader: &mut Reader, expected: u32) -> Result<()> {
    let magic = reader.u32("magic number")?;
    if magic != expected {
        return Err(Error::Format {
            offset: 0,
            message: format!("magic number {magic:#010x}, expected {expected:#010x}"),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    let mut reader = Reader { bytes, offset: 0 };
    check_magic(&mut reader, IDX_IMAGES_MAGIC)?;
    let count = reader.u32("image count")? as usize;
    let rows = reader.u32("row count")? as usize;
    let cols = reader.u32("column count")? as usize;
    let pixels = reader.rest(count * rows * cols, "pixel data")?.to_vec();
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels,
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let mut reader = Reader { bytes, offset: 0 };
    check_magic(&mut reader, IDX_LABELS_MAGIC)?;
    let count = reader.u32("label count")? as usize;
    Ok(reader.rest(count, "label data")?.to_vec())
}

/// Image dataset served in shuffled epochs. The order of epoch `e` is a
/// permutation seeded by `(seed, e)`, so the position alone determines the stream.
#[derive(Debug, Clone)]
pub struct IdxDataset {
    images: IdxImages,
    labels: Option<Vec<u8>>,
    seed: u64,
    epoch: u64,
    cursor: usize,
    order: Vec<u32>,
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn with_path(path: &Path, e: Error) -> Error {
    match e {
        Error::Format { offset, message } => Error::Format {
            offset,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    }
}

/// Loads an IDX image file, and optionally its label file, as a sample source.
pub fn load_idx_dataset(images: &Path, labels: Option<&Path>, seed: u64) -> Result<IdxDataset> {
    let parsed = parse_idx_images(&read_file(images)?).map_err(|e| with_path(images, e))?;
    let labels = match labels {
        Some(path) => {
            let labels = parse_idx_labels(&read_file(path)?).map_err(|e| with_path(path, e))?;
            if labels.len() != parsed.count {
                return Err(Error::Format {
                    offset: 4,
                    message: format!(
                        "{}: {} labels for {} images",
                        path.display(),
                        labels.len(),
                        parsed.count
                    ),
                });
            }
            Some(labels)
        }
        None => None,
    };
    IdxDataset::new(parsed, labels, seed)
}

impl IdxDataset {
    pub fn new(images: IdxImages, labels: Option<Vec<u8>>, seed: u64) -> Result<Self> {
        if images.count == 0 || images.rows == 0 || images.cols == 0 {
            return Err(Error::Empty("image dataset"));
        }
        let mut dataset = IdxDataset {
            images,
            labels,
            seed,
            epoch: 0,
            cursor: 0,
            order: Vec::new(),
        };
        dataset.shuffle();
        Ok(dataset)
    }

    fn shuffle(&mut self) {
        self.order = (0..self.images.count as u32).collect();
        let mut rng = rng_from_seed(derive_seed(self.seed, self.epoch));
        self.order.shuffle(&mut rng);
    }

    pub fn len(&self) -> usize {
        self.images.count
    }

    pub fn is_empty(&self) -> bool {
        self.images.count == 0
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    pub fn images(&self) -> &IdxImages {
        &self.images
    }

    fn push_sample(&self, index: usize, out: &mut Vec<f32>) {
        let len = self.images.rows * self.images.cols;
        let pixels = &self.images.pixels[index * len..(index + 1) * len];
        out.extend(pixels.iter().map(|&b| rescale_pixel(b)));
    }
}

impl SampleSource for IdxDataset {
    fn sample_shape(&self) -> Shape {
        Shape::spatial(1, self.images.rows, self.images.cols)
    }

    fn next_batch(&mut self, n: usize) -> Result<Vec<f32>> {
        let mut out = Vec::with_capacity(n * self.sample_len());
        for _ in 0..n {
            if self.cursor == self.order.len() {
                self.epoch += 1;
                self.cursor = 0;
                self.shuffle();
            }
            let index = self.order[self.cursor] as usize;
            self.cursor += 1;
            self.push_sample(index, &mut out);
        }
        Ok(out)
    }

    fn reference_samples(&self, n: usize, rng: &mut StreamRng) -> Result<Vec<f32>> {
        if n > self.images.count {
            return Err(Error::InsufficientSamples {
                needed: n,
                available: self.images.count,
            });
        }
        let picks = rand::seq::index::sample(rng, self.images.count, n);
        let mut out = Vec::with_capacity(n * self.sample_len());
        for index in picks {
            self.push_sample(index, &mut out);
        }
        Ok(out)
    }

    fn state(&self) -> String {
        format!("{}:{}", self.epoch, self.cursor)
    }

    fn restore_state(&mut self, state: &str) -> Result<()> {
        let parsed = state
            .split_once(':')
            .and_then(|(e, c)| Some((e.parse().ok()?, c.parse().ok()?)));
        let Some((epoch, cursor)) = parsed else {
            return Err(Error::Format {
                offset: 0,
                message: format!("bad dataset state `{state}`"),
            });
        };
        if cursor > self.images.count {
            return Err(Error::Format {
                offset: 0,
                message: format!("dataset cursor {cursor} beyond {} samples", self.images.count),
            });
        }
        self.epoch = epoch;
        self.cursor = cursor;
        self.shuffle();
        Ok(())
    }
}

/// Mixture of `modes` isotropic Gaussians centered evenly on a circle.
/// Samples are multiplied by `scale` before they are returned.
#[derive(Debug, Clone)]
pub struct Ring2d {
    pub modes: usize,
    pub radius: f64,
    pub sigma: f64,
    pub scale: f64,
    rng: StreamRng,
}

/// Ring of Gaussians in raw coordinates.
pub fn ring2d_dataset(modes: usize, radius: f64, sigma: f64, rng: StreamRng) -> Ring2d {
    assert!(modes >= 1, "ring needs at least one mode");
    Ring2d {
        modes,
        radius,
        sigma,
        scale: 1.0,
        rng,
    }
}

/// Centers sit at `RING_NORMALIZED_RADIUS` after normalization, leaving room for noise inside `[-1, 1]`.
pub const RING_NORMALIZED_RADIUS: f64 = 0.8;

impl Ring2d {
    /// Rescales so mode centers lie at radius [`RING_NORMALIZED_RADIUS`].
    pub fn normalized(mut self) -> Self {
        self.scale = if self.radius > 0.0 {
            RING_NORMALIZED_RADIUS / self.radius
        } else {
            1.0
        };
        self
    }

    /// Mode centers in output (scaled) coordinates.
    pub fn centers(&self) -> Vec<[f64; 2]> {
        ring_centers(self.modes, self.radius * self.scale)
    }

    fn draw<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f32> {
        let centers = ring_centers(self.modes, self.radius);
        let noise = Normal::new(0.0, self.sigma.max(0.0)).expect("finite sigma");
        let mut out = Vec::with_capacity(2 * n);
        for _ in 0..n {
            let [cx, cy] = centers[rng.random_range(0..self.modes)];
            let (x, y) = if self.sigma > 0.0 {
                (cx + noise.sample(rng), cy + noise.sample(rng))
            } else {
                (cx, cy)
            };
            out.push((x * self.scale) as f32);
            out.push((y * self.scale) as f32);
        }
        out
    }
}

pub fn ring_centers(modes: usize, radius: f64) -> Vec<[f64; 2]> {
    (0..modes)
        .map(|k| {
            let angle = 2.0 * std::f64::consts::PI * k as f64 / modes as f64;
            [radius * angle.cos(), radius * angle.sin()]
        })
        .collect()
}

impl SampleSource for Ring2d {
    fn sample_shape(&self) -> Shape {
        Shape::spatial(1, 1, 2)
    }

    fn next_batch(&mut self, n: usize) -> Result<Vec<f32>> {
        let mut rng = self.rng.clone();
        let out = self.draw(n, &mut rng);
        self.rng = rng;
        Ok(out)
    }

    fn reference_samples(&self, n: usize, rng: &mut StreamRng) -> Result<Vec<f32>> {
        Ok(self.draw(n, rng))
    }

    fn state(&self) -> String {
        RngState::capture(&self.rng).encode()
    }

    fn restore_state(&mut self, state: &str) -> Result<()> {
        let decoded = RngState::decode(state).ok_or_else(|| Error::Format {
            offset: 0,
            message: format!("bad ring state `{state}`"),
        })?;
        self.rng = decoded.restore();
        Ok(())
    }
}

/// Number of centers that attract at least 1% of the samples within `capture_radius`.
pub fn mode_coverage(samples: &[f32], centers: &[[f64; 2]], capture_radius: f64) -> usize {
    let n = samples.len() / 2;
    if n == 0 {
        return 0;
    }
    let r2 = capture_radius * capture_radius;
    centers
        .iter()
        .filter(|&&[cx, cy]| {
            let hits = samples
                .chunks_exact(2)
                .filter(|p| {
                    let (dx, dy) = (p[0] as f64 - cx, p[1] as f64 - cy);
                    dx * dx + dy * dy <= r2
                })
                .count();
            hits * 100 >= n
        })
        .count()
}

/// One-hot prediction of the nearest ring center.
#[derive(Debug, Clone)]
pub struct NearestModeClassifier {
    pub centers: Vec<[f64; 2]>,
}

impl Classifier for NearestModeClassifier {
    fn classes(&self) -> usize {
        self.centers.len()
    }

    fn predict(&self, sample: &[f32]) -> Vec<f64> {
        let (x, y) = (sample[0] as f64, sample[1] as f64);
        let nearest = self
            .centers
            .iter()
            .enumerate()
            .map(|(i, &[cx, cy])| (i, (x - cx).powi(2) + (y - cy).powi(2)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let mut p = vec![0.0; self.centers.len()];
        p[nearest] = 1.0;
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn idx_bytes(count: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
        let mut bytes = IDX_IMAGES_MAGIC.to_be_bytes().to_vec();
        for v in [count, rows, cols] {
            bytes.extend(v.to_be_bytes());
        }
        bytes.extend_from_slice(pixels);
        bytes
    }

    #[test]
    fn parses_fixture_exactly() {
        let pixels: Vec<u8> = (0..12).map(|i| (i * 21) as u8).collect();
        let parsed = parse_idx_images(&idx_bytes(3, 2, 2, &pixels)).unwrap();
        assert_eq!((parsed.count, parsed.rows, parsed.cols), (3, 2, 2));
        assert_eq!(parsed.pixels, pixels);
    }

    #[test]
    fn wrong_magic_is_format_error() {
        let mut bytes = idx_bytes(1, 1, 1, &[0]);
        bytes[3] = 0x01;
        assert!(matches!(parse_idx_images(&bytes), Err(Error::Format { offset: 0, .. })));
    }

    #[test]
    fn truncation_reports_offset() {
        let bytes = idx_bytes(2, 2, 2, &[0; 5]);
        match parse_idx_images(&bytes) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 21),
            other => panic!("unexpected {other:?}"),
        }
        match parse_idx_images(&bytes[..6]) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn pixel_endpoints() {
        assert_eq!(rescale_pixel(0), -1.0);
        assert_eq!(rescale_pixel(255), 1.0);
        assert_eq!(pixel_byte(-1.0), 0);
        assert_eq!(pixel_byte(1.0), 255);
        for b in 0..=255u8 {
            assert_eq!(pixel_byte(rescale_pixel(b)), b);
        }
    }

    #[test]
    fn epochs_cover_every_sample_and_resume() {
        let pixels: Vec<u8> = (0..5).collect();
        let images = parse_idx_images(&idx_bytes(5, 1, 1, &pixels)).unwrap();
        let mut data = IdxDataset::new(images, None, 9).unwrap();
        let mut epoch: Vec<u8> = data.next_batch(5).unwrap().iter().map(|&v| pixel_byte(v)).collect();
        epoch.sort();
        assert_eq!(epoch, pixels);
        data.next_batch(2).unwrap();
        let state = data.state();
        let ahead = data.next_batch(7).unwrap();
        data.restore_state(&state).unwrap();
        assert_eq!(data.next_batch(7).unwrap(), ahead);
    }

    #[test]
    fn ring_degenerate_cases() {
        let mut one = ring2d_dataset(1, 2.0, 0.0, rng_from_seed(1));
        assert!(one.next_batch(10).unwrap().chunks(2).all(|p| p == [2.0, 0.0]));
        let mut eight = ring2d_dataset(8, 2.0, 0.0, rng_from_seed(1));
        let mut distinct: Vec<(u32, u32)> = eight
            .next_batch(1000)
            .unwrap()
            .chunks(2)
            .map(|p| (p[0].to_bits(), p[1].to_bits()))
            .collect();
        distinct.sort();
        distinct.dedup();
        assert_eq!(distinct.len(), 8);
    }

    #[test]
    fn coverage_cases() {
        let centers = ring_centers(8, 2.0);
        let all: Vec<f32> = centers.iter().flat_map(|c| [c[0] as f32, c[1] as f32]).collect();
        assert_eq!(mode_coverage(&all, &centers, 0.1), 8);
        let collapsed: Vec<f32> = (0..16).flat_map(|_| [2.0f32, 0.0]).collect();
        assert_eq!(mode_coverage(&collapsed, &centers, 0.1), 1);
        assert_eq!(mode_coverage(&[], &centers, 0.1), 0);
    }
}

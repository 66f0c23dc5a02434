//! Benchmark task generators and the pixel-sequence MNIST loader.
//!
//! Generators are pure functions of their RNG state: the same seed, length,
//! and batch size reproduce a batch bit for bit.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const MNIST_PIXELS: usize = 784;

/// How a batch's outputs are scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Cross-entropy averaged over batch and every timestep.
    SequenceCrossEntropy,
    /// Mean squared error on the final output.
    FinalMse,
    /// Cross-entropy on the final output.
    FinalCrossEntropy,
}

#[derive(Debug, Clone)]
pub enum Targets {
    /// `[t][b]` class indices, one per timestep per batch element.
    PerStepClasses(Vec<Vec<usize>>),
    /// One scalar per batch element, scored at the last step.
    FinalScalars(Vec<f64>),
    /// One class per batch element, scored at the last step.
    FinalClasses(Vec<usize>),
}

/// One mini-batch: a time-major input sequence (each step is `batch x m`),
/// targets, and the loss the task is scored with.
#[derive(Debug, Clone)]
pub struct TaskBatch {
    pub inputs: Vec<Matrix>,
    pub targets: Targets,
    pub loss: LossKind,
}

impl TaskBatch {
    pub fn seq_len(&self) -> usize {
        self.inputs.len()
    }

    pub fn batch_size(&self) -> usize {
        self.inputs.first().map_or(0, Matrix::rows)
    }
}

pub const COPYING_CLASSES: usize = 10;
pub const COPYING_BLANK: usize = 0;
pub const COPYING_MARKER: usize = 9;

/// Copying problem: 10 symbols from classes 1-8 at the head of a length
/// `T + 20` sequence, a marker (class 9) ten steps from the end, blanks
/// everywhere else. Targets are blank until the marker fires, then the ten
/// head symbols; scored with per-step cross-entropy over all 10 classes.
pub fn gen_copying(t: usize, batch: usize, rng: &mut impl Rng) -> Result<TaskBatch> {
    if t < 1 {
        return Err(Error::InvalidArgument("copying task needs T >= 1".into()));
    }
    let total = t + 20;
    let marker_pos = t + 9;
    let mut inputs = vec![Matrix::zeros(batch, COPYING_CLASSES); total];
    let mut targets = vec![vec![COPYING_BLANK; batch]; total];
    for b in 0..batch {
        for k in 0..10 {
            let symbol = rng.gen_range(1..=8usize);
            inputs[k][(b, symbol)] = 1.0;
            targets[t + 10 + k][b] = symbol;
        }
        inputs[marker_pos][(b, COPYING_MARKER)] = 1.0;
        for (step, input) in inputs.iter_mut().enumerate() {
            if !(0..10).contains(&step) && step != marker_pos {
                input[(b, COPYING_BLANK)] = 1.0;
            }
        }
    }
    Ok(TaskBatch {
        inputs,
        targets: Targets::PerStepClasses(targets),
        loss: LossKind::SequenceCrossEntropy,
    })
}

fn fill_adding_element(inputs: &mut [Matrix], b: usize, rng: &mut impl Rng) -> f64 {
    let t = inputs.len();
    for input in inputs.iter_mut() {
        input[(b, 0)] = rng.gen_range(0.0..1.0);
    }
    let first = rng.gen_range(1..t / 2);
    let second = rng.gen_range(t / 2..t);
    inputs[first][(b, 1)] = 1.0;
    inputs[second][(b, 1)] = 1.0;
    inputs[first][(b, 0)] + inputs[second][(b, 0)]
}

/// Adding problem: per step a value channel drawn from Uniform[0,1) and a
/// marker channel that is 1 at exactly two positions, one uniform in
/// `[1, T/2)` and one uniform in `[T/2, T)`. The target is the sum of the
/// two marked values, scored with last-step MSE.
pub fn gen_adding(t: usize, batch: usize, rng: &mut impl Rng) -> Result<TaskBatch> {
    if t < 4 {
        return Err(Error::InvalidArgument("adding task needs T >= 4".into()));
    }
    let mut inputs = vec![Matrix::zeros(batch, 2); t];
    let mut targets = vec![0.0; batch];
    for (b, target) in targets.iter_mut().enumerate() {
        *target = fill_adding_element(&mut inputs, b, rng);
    }
    Ok(TaskBatch {
        inputs,
        targets: Targets::FinalScalars(targets),
        loss: LossKind::FinalMse,
    })
}

/// Builds the adding-task samples with the given dataset indices, each
/// generated from its own seed derived from `data_seed`. Sample `i` is the
/// same bits every time it is requested, so a fixed train/test split never
/// needs to live in memory.
pub fn gen_adding_indexed(t: usize, data_seed: u64, indices: &[usize]) -> Result<TaskBatch> {
    if t < 4 {
        return Err(Error::InvalidArgument("adding task needs T >= 4".into()));
    }
    let mut inputs = vec![Matrix::zeros(indices.len(), 2); t];
    let mut targets = vec![0.0; indices.len()];
    for (b, &index) in indices.iter().enumerate() {
        let mut rng =
            ChaCha8Rng::seed_from_u64(crate::harness::derive_stream_seed(data_seed, index as u64));
        targets[b] = fill_adding_element(&mut inputs, b, &mut rng);
    }
    Ok(TaskBatch {
        inputs,
        targets: Targets::FinalScalars(targets),
        loss: LossKind::FinalMse,
    })
}

/// MNIST in memory: raw pixel bytes (scaled to `[0,1]` when sequences are
/// assembled) plus an optional fixed permutation of the 784-pixel order.
#[derive(Debug, Clone)]
pub struct MnistDataset {
    images: Vec<u8>, // len * 784, row-major pixels
    labels: Vec<u8>,
    permutation: Option<Vec<usize>>,
}

impl MnistDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, index: usize) -> usize {
        self.labels[index] as usize
    }

    pub fn permutation(&self) -> Option<&[usize]> {
        self.permutation.as_deref()
    }

    /// Installs the fixed pixel permutation drawn from `seed` (Fisher-Yates
    /// over 0..784). Replaces any previous permutation, so applying the same
    /// seed twice yields the same ordering.
    pub fn apply_permutation(mut self, seed: u64) -> MnistDataset {
        let mut perm: Vec<usize> = (0..MNIST_PIXELS).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        self.permutation = Some(perm);
        self
    }

    /// Assembles the time-major pixel-sequence batch (784 steps of
    /// `batch x 1`, bytes scaled by 1/255) and the class targets for the
    /// given sample indices.
    pub fn pixel_sequence_batch(&self, indices: &[usize]) -> Result<TaskBatch> {
        let batch = indices.len();
        let mut inputs = vec![Matrix::zeros(batch, 1); MNIST_PIXELS];
        for (b, &idx) in indices.iter().enumerate() {
            if idx >= self.len() {
                return Err(Error::InvalidArgument(format!(
                    "sample index {idx} out of range ({} samples)",
                    self.len()
                )));
            }
            let pixels = &self.images[idx * MNIST_PIXELS..(idx + 1) * MNIST_PIXELS];
            for (step, input) in inputs.iter_mut().enumerate() {
                let src = match &self.permutation {
                    Some(p) => p[step],
                    None => step,
                };
                input[(b, 0)] = pixels[src] as f64 / 255.0;
            }
        }
        let targets = indices.iter().map(|&i| self.label(i)).collect();
        Ok(TaskBatch {
            inputs,
            targets: Targets::FinalClasses(targets),
            loss: LossKind::FinalCrossEntropy,
        })
    }
}

fn read_u32_be(reader: &mut impl Read, path: &Path) -> Result<u32> {
    let mut buf = [0u8; 4];
    reader.read_exact(&mut buf).map_err(|e| Error::MalformedFile {
        path: path.display().to_string(),
        details: format!("reading header: {e}"),
    })?;
    Ok(u32::from_be_bytes(buf))
}

/// Loads an IDX image/label file pair. Pixel dimensions must be 28x28, the
/// label count must match the image count, and both files must carry the
/// standard magic numbers.
pub fn load_mnist(image_path: &Path, label_path: &Path) -> Result<MnistDataset> {
    let mut images = BufReader::new(File::open(image_path)?);
    let magic = read_u32_be(&mut images, image_path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::BadIdxMagic {
            path: image_path.display().to_string(),
            found: magic,
            expected: IDX_IMAGES_MAGIC,
        });
    }
    let count = read_u32_be(&mut images, image_path)? as usize;
    let rows = read_u32_be(&mut images, image_path)? as usize;
    let cols = read_u32_be(&mut images, image_path)? as usize;
    if rows != 28 || cols != 28 {
        return Err(Error::MalformedFile {
            path: image_path.display().to_string(),
            details: format!("expected 28x28 images, found {rows}x{cols}"),
        });
    }
    let mut image_data = vec![0u8; count * rows * cols];
    images
        .read_exact(&mut image_data)
        .map_err(|e| Error::MalformedFile {
            path: image_path.display().to_string(),
            details: format!("reading {count} images: {e}"),
        })?;

    let mut labels = BufReader::new(File::open(label_path)?);
    let magic = read_u32_be(&mut labels, label_path)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::BadIdxMagic {
            path: label_path.display().to_string(),
            found: magic,
            expected: IDX_LABELS_MAGIC,
        });
    }
    let label_count = read_u32_be(&mut labels, label_path)? as usize;
    if label_count != count {
        return Err(Error::MalformedFile {
            path: label_path.display().to_string(),
            details: format!("{label_count} labels for {count} images"),
        });
    }
    let mut label_data = vec![0u8; label_count];
    labels
        .read_exact(&mut label_data)
        .map_err(|e| Error::MalformedFile {
            path: label_path.display().to_string(),
            details: format!("reading {label_count} labels: {e}"),
        })?;
    if let Some(bad) = label_data.iter().find(|&&l| l > 9) {
        return Err(Error::MalformedFile {
            path: label_path.display().to_string(),
            details: format!("label {bad} out of range 0-9"),
        });
    }
    Ok(MnistDataset {
        images: image_data,
        labels: label_data,
        permutation: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn copying_marker_placement_and_targets() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let t = 50;
        let batch = gen_copying(t, 8, &mut rng).unwrap();
        assert_eq!(batch.seq_len(), t + 20);
        let targets = match &batch.targets {
            Targets::PerStepClasses(t) => t,
            _ => panic!("wrong target kind"),
        };
        for b in 0..8 {
            // marker appears exactly at index t+9 and nowhere else
            for (step, input) in batch.inputs.iter().enumerate() {
                let is_marker = input[(b, COPYING_MARKER)] == 1.0;
                assert_eq!(is_marker, step == t + 9, "step {step}");
                let row_sum: f64 = input.row(b).iter().sum();
                assert_eq!(row_sum, 1.0, "one-hot at step {step}");
            }
            // tail targets replay the head symbols; everything else is blank
            for step in 0..t + 20 {
                if step < t + 10 {
                    assert_eq!(targets[step][b], COPYING_BLANK);
                } else {
                    let k = step - (t + 10);
                    let symbol = (1..=8)
                        .find(|&c| batch.inputs[k][(b, c)] == 1.0)
                        .expect("head symbol");
                    assert_eq!(targets[step][b], symbol);
                    assert_ne!(targets[step][b], COPYING_MARKER);
                }
            }
        }
    }

    #[test]
    fn generators_are_deterministic_given_seed() {
        let a = gen_copying(30, 4, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = gen_copying(30, 4, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        for (x, y) in a.inputs.iter().zip(&b.inputs) {
            for (u, v) in x.iter().zip(y.iter()) {
                assert_eq!(u.to_bits(), v.to_bits());
            }
        }
        let a = gen_adding(40, 4, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        let b = gen_adding(40, 4, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        for (x, y) in a.inputs.iter().zip(&b.inputs) {
            for (u, v) in x.iter().zip(y.iter()) {
                assert_eq!(u.to_bits(), v.to_bits());
            }
        }
    }

    #[test]
    fn adding_targets_are_sums_of_marked_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        let t = 64;
        let batch = gen_adding(t, 16, &mut rng).unwrap();
        let targets = match &batch.targets {
            Targets::FinalScalars(v) => v,
            _ => panic!("wrong target kind"),
        };
        for b in 0..16 {
            let marked: Vec<usize> = (0..t)
                .filter(|&s| batch.inputs[s][(b, 1)] == 1.0)
                .collect();
            assert_eq!(marked.len(), 2);
            assert!((1..t / 2).contains(&marked[0]));
            assert!((t / 2..t).contains(&marked[1]));
            let sum = batch.inputs[marked[0]][(b, 0)] + batch.inputs[marked[1]][(b, 0)];
            assert_eq!(sum.to_bits(), targets[b].to_bits());
        }
    }

    #[test]
    fn adding_marker_intervals_cover_both_ends() {
        let mut rng = ChaCha8Rng::seed_from_u64(63);
        let t = 20;
        let (mut min1, mut max1) = (usize::MAX, 0);
        let (mut min2, mut max2) = (usize::MAX, 0);
        for _ in 0..200 {
            let batch = gen_adding(t, 50, &mut rng).unwrap();
            for b in 0..50 {
                let marked: Vec<usize> = (0..t)
                    .filter(|&s| batch.inputs[s][(b, 1)] == 1.0)
                    .collect();
                min1 = min1.min(marked[0]);
                max1 = max1.max(marked[0]);
                min2 = min2.min(marked[1]);
                max2 = max2.max(marked[1]);
            }
        }
        assert_eq!((min1, max1), (1, t / 2 - 1));
        assert_eq!((min2, max2), (t / 2, t - 1));
    }

    fn write_idx_fixture(dir: &Path, count: usize) -> (std::path::PathBuf, std::path::PathBuf) {
        let img_path = dir.join("images-idx3-ubyte");
        let lbl_path = dir.join("labels-idx1-ubyte");
        let mut img = File::create(&img_path).unwrap();
        img.write_all(&IDX_IMAGES_MAGIC.to_be_bytes()).unwrap();
        img.write_all(&(count as u32).to_be_bytes()).unwrap();
        img.write_all(&28u32.to_be_bytes()).unwrap();
        img.write_all(&28u32.to_be_bytes()).unwrap();
        for i in 0..count {
            let pixels: Vec<u8> = (0..784).map(|p| ((i * 31 + p) % 256) as u8).collect();
            img.write_all(&pixels).unwrap();
        }
        let mut lbl = File::create(&lbl_path).unwrap();
        lbl.write_all(&IDX_LABELS_MAGIC.to_be_bytes()).unwrap();
        lbl.write_all(&(count as u32).to_be_bytes()).unwrap();
        let labels: Vec<u8> = (0..count).map(|i| (i % 10) as u8).collect();
        lbl.write_all(&labels).unwrap();
        (img_path, lbl_path)
    }

    #[test]
    fn mnist_fixture_round_trip_and_scaling() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lbl) = write_idx_fixture(dir.path(), 5);
        let ds = load_mnist(&img, &lbl).unwrap();
        assert_eq!(ds.len(), 5);
        assert_eq!(ds.label(3), 3);
        let batch = ds.pixel_sequence_batch(&[0, 4]).unwrap();
        assert_eq!(batch.seq_len(), 784);
        assert_eq!(batch.batch_size(), 2);
        // sample 0, pixel p has byte (p % 256)
        assert_eq!(batch.inputs[255][(0, 0)], 1.0);
        assert_eq!(batch.inputs[0][(0, 0)], 0.0);
        assert!((batch.inputs[1][(0, 0)] - 1.0 / 255.0).abs() < 1e-15);
    }

    #[test]
    fn mnist_bad_magic_and_truncation_errors() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lbl) = write_idx_fixture(dir.path(), 2);

        let bad = dir.path().join("bad-magic");
        let mut f = File::create(&bad).unwrap();
        f.write_all(&0x0000_0802u32.to_be_bytes()).unwrap();
        f.write_all(&[0u8; 12]).unwrap();
        assert!(matches!(
            load_mnist(&bad, &lbl),
            Err(Error::BadIdxMagic { .. })
        ));

        let truncated = dir.path().join("truncated");
        let mut f = File::create(&truncated).unwrap();
        f.write_all(&IDX_IMAGES_MAGIC.to_be_bytes()).unwrap();
        f.write_all(&5u32.to_be_bytes()).unwrap();
        f.write_all(&28u32.to_be_bytes()).unwrap();
        f.write_all(&28u32.to_be_bytes()).unwrap();
        f.write_all(&[7u8; 100]).unwrap();
        assert!(matches!(
            load_mnist(&truncated, &lbl),
            Err(Error::MalformedFile { .. })
        ));

        // count mismatch between image and label files
        let (_, lbl5) = {
            let d2 = dir.path().join("other");
            std::fs::create_dir(&d2).unwrap();
            write_idx_fixture(&d2, 5)
        };
        assert!(matches!(
            load_mnist(&img, &lbl5),
            Err(Error::MalformedFile { .. })
        ));
    }

    #[test]
    fn permutation_is_seeded_bijection() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lbl) = write_idx_fixture(dir.path(), 3);
        let ds = load_mnist(&img, &lbl).unwrap();
        assert!(ds.permutation().is_none());
        let ds = ds.apply_permutation(99);
        let p1 = ds.permutation().unwrap().to_vec();
        // same seed applied again gives the identical ordering
        let ds = ds.apply_permutation(99);
        assert_eq!(ds.permutation().unwrap(), &p1[..]);
        let mut sorted = p1.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..784).collect::<Vec<_>>());
        // a different seed gives a different ordering
        let ds2 = ds.apply_permutation(100);
        assert_ne!(ds2.permutation().unwrap(), &p1[..]);
    }
}

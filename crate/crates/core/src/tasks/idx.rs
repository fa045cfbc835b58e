//! IDX image/label files and a procedurally drawn digit set in that format.

use std::fs;
use std::path::Path;

use crate::model::{SeqInput, Target};
use crate::numkit::{Rng, Vector};

use super::{TaskBatch, TaskError, TaskKind};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

/// Images flattened row-major and scaled to `[0, 1]`, with their labels.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageSet {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl ImageSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

fn header(path: &Path, bytes: &[u8], magic: u32, dims: usize) -> Result<Vec<usize>, TaskError> {
    let head = 4 + 4 * dims;
    if bytes.len() < 4 {
        return Err(TaskError::Truncated {
            path: path.into(),
            expected: head,
            found: bytes.len(),
        });
    }
    let found = be_u32(bytes, 0);
    if found != magic {
        return Err(TaskError::BadMagic {
            path: path.into(),
            found,
            expected: magic,
        });
    }
    if bytes.len() < head {
        return Err(TaskError::Truncated {
            path: path.into(),
            expected: head,
            found: bytes.len(),
        });
    }
    let dims: Vec<usize> = (0..dims).map(|k| be_u32(bytes, 4 + 4 * k) as usize).collect();
    let expected = head + dims.iter().product::<usize>();
    if bytes.len() < expected {
        return Err(TaskError::Truncated {
            path: path.into(),
            expected,
            found: bytes.len(),
        });
    }
    Ok(dims)
}

fn read(path: &Path) -> Result<Vec<u8>, TaskError> {
    fs::read(path).map_err(|e| TaskError::io(path, e))
}

/// Reads an image file: `(rows, cols, images)` with raw bytes per image.
pub fn read_idx_images(path: &Path) -> Result<(usize, usize, Vec<Vec<u8>>), TaskError> {
    let bytes = read(path)?;
    let dims = header(path, &bytes, IMAGE_MAGIC, 3)?;
    let (n, rows, cols) = (dims[0], dims[1], dims[2]);
    let size = rows * cols;
    let images = bytes[16..16 + n * size].chunks(size.max(1)).take(n).map(<[u8]>::to_vec).collect();
    Ok((rows, cols, images))
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>, TaskError> {
    let bytes = read(path)?;
    let dims = header(path, &bytes, LABEL_MAGIC, 1)?;
    Ok(bytes[8..8 + dims[0]].to_vec())
}

/// Loads an image/label IDX pair; pixels become `byte / 255`.
pub fn load_idx_images(images: &Path, labels: &Path) -> Result<ImageSet, TaskError> {
    let (rows, cols, raw) = read_idx_images(images)?;
    let lab = read_idx_labels(labels)?;
    if raw.len() != lab.len() {
        return Err(TaskError::CountMismatch {
            images: raw.len(),
            labels: lab.len(),
        });
    }
    if let Some((index, &label)) = lab.iter().enumerate().find(|(_, &l)| l > 9) {
        return Err(TaskError::BadLabel {
            path: labels.into(),
            index,
            label,
        });
    }
    Ok(ImageSet {
        rows,
        cols,
        pixels: raw.iter().map(|img| img.iter().map(|&b| b as f64 / 255.0).collect()).collect(),
        labels: lab.into_iter().map(usize::from).collect(),
    })
}

pub fn write_idx_images(path: &Path, rows: usize, cols: usize, images: &[Vec<u8>]) -> Result<(), TaskError> {
    let mut bytes = Vec::with_capacity(16 + images.len() * rows * cols);
    for v in [IMAGE_MAGIC, images.len() as u32, rows as u32, cols as u32] {
        bytes.extend(v.to_be_bytes());
    }
    for img in images {
        assert_eq!(img.len(), rows * cols, "image size disagrees with header");
        bytes.extend(img);
    }
    fs::write(path, bytes).map_err(|e| TaskError::io(path, e))
}

pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<(), TaskError> {
    let mut bytes = Vec::with_capacity(8 + labels.len());
    bytes.extend(LABEL_MAGIC.to_be_bytes());
    bytes.extend((labels.len() as u32).to_be_bytes());
    bytes.extend(labels);
    fs::write(path, bytes).map_err(|e| TaskError::io(path, e))
}

// Seven-segment strokes: top, upper-left, upper-right, middle, lower-left,
// lower-right, bottom.
const SEGMENTS: [[bool; 7]; 10] = [
    [true, true, true, false, true, true, true],
    [false, false, true, false, false, true, false],
    [true, false, true, true, true, false, true],
    [true, false, true, true, false, true, true],
    [false, true, true, true, false, true, false],
    [true, true, false, true, false, true, true],
    [true, true, false, true, true, true, true],
    [true, false, true, false, false, true, false],
    [true, true, true, true, true, true, true],
    [true, true, true, true, false, true, true],
];

/// Draws `n` seven-segment digits of `side × side` pixels with a random
/// offset, stroke brightness and speckle noise. Labels are uniform over the
/// ten classes.
pub fn synthetic_digits(rng: &mut Rng, n: usize, side: usize) -> (Vec<Vec<u8>>, Vec<u8>) {
    assert!(side >= 8, "digit canvas must be at least 8 pixels wide");
    let mut images = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let (w, h) = (side / 2, side * 3 / 4);
    for _ in 0..n {
        let label = rng.below(10);
        let x0 = rng.below(side - w) as isize;
        let y0 = rng.below(side - h) as isize;
        let ink = 160 + rng.below(96) as u8;
        let mut img = vec![0u8; side * side];
        let mut plot = |x: isize, y: isize| {
            if (0..side as isize).contains(&x) && (0..side as isize).contains(&y) {
                img[y as usize * side + x as usize] = ink;
            }
        };
        let (w, h, mid) = (w as isize - 1, h as isize - 1, h as isize / 2);
        let on = SEGMENTS[label];
        for x in 0..=w {
            if on[0] {
                plot(x0 + x, y0);
            }
            if on[3] {
                plot(x0 + x, y0 + mid);
            }
            if on[6] {
                plot(x0 + x, y0 + h);
            }
        }
        for y in 0..=mid {
            if on[1] {
                plot(x0, y0 + y);
            }
            if on[2] {
                plot(x0 + w, y0 + y);
            }
        }
        for y in mid..=h {
            if on[4] {
                plot(x0, y0 + y);
            }
            if on[5] {
                plot(x0 + w, y0 + y);
            }
        }
        for px in img.iter_mut() {
            if rng.below(50) == 0 {
                *px = px.saturating_add(rng.below(64) as u8);
            }
        }
        images.push(img);
        labels.push(label as u8);
    }
    (images, labels)
}

/// Pixel sequences (`T = rows·cols`, one intensity per step) of the images
/// at `indices`.
pub fn images_to_batch(set: &ImageSet, indices: &[usize]) -> TaskBatch {
    let inputs = indices
        .iter()
        .map(|&i| SeqInput::Dense(set.pixels[i].iter().map(|&v| Vector::from(vec![v])).collect()))
        .collect();
    let targets = indices.iter().map(|&i| Target::Class(set.labels[i])).collect();
    TaskBatch {
        task: TaskKind::Mnist,
        len: set.rows * set.cols,
        inputs,
        targets,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(dir: &Path, images: &[Vec<u8>], labels: &[u8]) -> (std::path::PathBuf, std::path::PathBuf) {
        let (i, l) = (dir.join("img.idx"), dir.join("lab.idx"));
        write_idx_images(&i, 28, 28, images).unwrap();
        write_idx_labels(&l, labels).unwrap();
        (i, l)
    }

    #[test]
    fn round_trips_two_images() {
        let dir = tempfile::tempdir().unwrap();
        let a: Vec<u8> = (0..784).map(|k| (k % 256) as u8).collect();
        let b: Vec<u8> = (0..784).map(|k| 255 - (k % 256) as u8).collect();
        let (i, l) = pair(dir.path(), &[a.clone(), b.clone()], &[3, 7]);
        let set = load_idx_images(&i, &l).unwrap();
        assert_eq!(set.labels, vec![3, 7]);
        for (img, raw) in set.pixels.iter().zip([a, b]) {
            for (p, r) in img.iter().zip(raw) {
                assert_eq!(*p, r as f64 / 255.0);
                assert!((0.0..=1.0).contains(p));
            }
        }
    }

    #[test]
    fn flattening_is_row_major() {
        let dir = tempfile::tempdir().unwrap();
        let mut img = vec![0u8; 784];
        img[28 * 3 + 17] = 255;
        let (i, l) = pair(dir.path(), &[img], &[1]);
        let set = load_idx_images(&i, &l).unwrap();
        let lit: Vec<usize> = (0..784).filter(|&k| set.pixels[0][k] > 0.0).collect();
        assert_eq!(lit, vec![3 * 28 + 17]);
        let batch = images_to_batch(&set, &[0]);
        let SeqInput::Dense(rows) = &batch.inputs[0] else { panic!() };
        assert_eq!(rows.len(), 784);
        assert_eq!(rows[3 * 28 + 17][0], 1.0);
    }

    #[test]
    fn malformed_files_give_distinct_errors() {
        let dir = tempfile::tempdir().unwrap();
        let (i, l) = pair(dir.path(), &[vec![0; 784], vec![1; 784]], &[1, 2]);

        let bad = dir.path().join("bad.idx");
        let mut bytes = fs::read(&i).unwrap();
        bytes[3] = 0x01;
        fs::write(&bad, &bytes).unwrap();
        assert!(matches!(load_idx_images(&bad, &l), Err(TaskError::BadMagic { found: 0x801, .. })));
        assert!(matches!(load_idx_images(&i, &i), Err(TaskError::BadMagic { expected: 0x801, .. })));

        let short = dir.path().join("short.idx");
        let bytes = fs::read(&i).unwrap();
        fs::write(&short, &bytes[..bytes.len() - 1]).unwrap();
        assert!(matches!(load_idx_images(&short, &l), Err(TaskError::Truncated { .. })));
        fs::write(&short, &bytes[..6]).unwrap();
        assert!(matches!(load_idx_images(&short, &l), Err(TaskError::Truncated { .. })));

        let one = dir.path().join("one.idx");
        write_idx_labels(&one, &[4]).unwrap();
        assert!(matches!(
            load_idx_images(&i, &one),
            Err(TaskError::CountMismatch { images: 2, labels: 1 })
        ));

        write_idx_labels(&one, &[4, 12]).unwrap();
        assert!(matches!(load_idx_images(&i, &one), Err(TaskError::BadLabel { index: 1, .. })));

        assert!(matches!(
            load_idx_images(&dir.path().join("missing"), &l),
            Err(TaskError::Io { .. })
        ));
    }

    #[test]
    fn synthetic_digits_survive_the_format() {
        let dir = tempfile::tempdir().unwrap();
        let (images, labels) = synthetic_digits(&mut Rng::seed_from_u64(4), 20, 28);
        assert!(labels.iter().all(|&l| l < 10));
        assert!(images.iter().all(|img| img.iter().any(|&p| p > 0)));
        let (i, l) = pair(dir.path(), &images, &labels);
        let set = load_idx_images(&i, &l).unwrap();
        assert_eq!(set.len(), 20);
        assert_eq!(set.labels, labels.iter().map(|&l| l as usize).collect::<Vec<_>>());
    }
}

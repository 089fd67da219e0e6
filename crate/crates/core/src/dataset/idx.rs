//! IDX files as used by MNIST: a big-endian header followed by raw `u8`s.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::NUM_CLASSES;

pub const IMAGE_MAGIC: u32 = 2051;
pub const LABEL_MAGIC: u32 = 2049;

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    let word = bytes.get(offset..offset + 4).ok_or(Error::Truncated {
        needed: offset + 4,
        available: bytes.len(),
    })?;
    Ok(u32::from_be_bytes(word.try_into().expect("4-byte slice")))
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let found = read_u32(bytes, 0)?;
    if found != expected {
        return Err(Error::WrongMagic { expected, found });
    }
    Ok(())
}

fn payload(bytes: &[u8], offset: usize, len: usize) -> Result<&[u8]> {
    bytes.get(offset..offset + len).ok_or(Error::Truncated {
        needed: offset + len,
        available: bytes.len(),
    })
}

/// Parses an image file into `[1, H, W]` tensors scaled to `[0, 1]`.
pub fn load_idx_images(bytes: &[u8]) -> Result<Vec<Tensor>> {
    check_magic(bytes, IMAGE_MAGIC)?;
    let count = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    let size = rows * cols;
    if size == 0 && count > 0 {
        return Err(Error::invalid("IDX images with zero rows or columns"));
    }
    let pixels = payload(bytes, 16, count * size)?;
    pixels
        .chunks_exact(size.max(1))
        .take(count)
        .map(|img| {
            Tensor::from_vec(
                &[1, rows, cols],
                img.iter().map(|&b| f64::from(b) / 255.0).collect(),
            )
        })
        .collect()
}

/// Parses a label file; every label must be a valid class id.
pub fn load_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    check_magic(bytes, LABEL_MAGIC)?;
    let count = read_u32(bytes, 4)? as usize;
    payload(bytes, 8, count)?
        .iter()
        .map(|&b| {
            let label = usize::from(b);
            if label >= NUM_CLASSES {
                Err(Error::LabelOutOfRange {
                    label,
                    num_classes: NUM_CLASSES,
                })
            } else {
                Ok(label)
            }
        })
        .collect()
}

/// Serializes `[1, H, W]` images, quantizing each pixel to `round(255 * v)`.
pub fn write_idx_images(images: &[Tensor]) -> Result<Vec<u8>> {
    let (rows, cols) = match images.first().map(|t| t.shape()) {
        Some(&[1, r, c]) => (r, c),
        Some(_) => return Err(Error::invalid("IDX images must have shape [1, H, W]")),
        None => (0, 0),
    };
    let mut out = Vec::with_capacity(16 + images.len() * rows * cols);
    for word in [IMAGE_MAGIC, images.len() as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&word.to_be_bytes());
    }
    for img in images {
        if img.shape() != [1, rows, cols] {
            return Err(Error::invalid("IDX images must share one shape"));
        }
        out.extend(
            img.data()
                .iter()
                .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
        );
    }
    Ok(out)
}

pub fn write_idx_labels(labels: &[usize]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    for &l in labels {
        if l >= NUM_CLASSES {
            return Err(Error::LabelOutOfRange {
                label: l,
                num_classes: NUM_CLASSES,
            });
        }
        out.push(l as u8);
    }
    Ok(out)
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn load_idx_images_file(path: impl AsRef<Path>) -> Result<Vec<Tensor>> {
    load_idx_images(&read_file(path.as_ref())?)
}

pub fn load_idx_labels_file(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    load_idx_labels(&read_file(path.as_ref())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(words: &[u32]) -> Vec<u8> {
        words.iter().flat_map(|w| w.to_be_bytes()).collect()
    }

    #[test]
    fn parses_hand_built_image() {
        let mut bytes = header(&[2051, 1, 2, 2]);
        bytes.extend([0, 255, 128, 64]);
        let images = load_idx_images(&bytes).unwrap();
        assert_eq!(images.len(), 1);
        assert_eq!(images[0].shape(), &[1, 2, 2]);
        assert_eq!(images[0].data(), &[0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0]);
    }

    #[test]
    fn parses_labels() {
        let mut bytes = header(&[2049, 3]);
        bytes.extend([7, 0, 9]);
        assert_eq!(load_idx_labels(&bytes).unwrap(), vec![7, 0, 9]);
    }

    #[test]
    fn distinguishes_wrong_magic_from_truncation() {
        let mut bytes = header(&[2049, 1, 2, 2]);
        bytes.extend([0, 0, 0, 0]);
        assert!(matches!(
            load_idx_images(&bytes),
            Err(Error::WrongMagic { expected: 2051, found: 2049 })
        ));

        let mut bytes = header(&[2051, 2, 2, 2]);
        bytes.extend([1, 2, 3, 4, 5]);
        assert!(matches!(
            load_idx_images(&bytes),
            Err(Error::Truncated { needed: 24, available: 21 })
        ));
        assert!(matches!(load_idx_images(&[0, 0, 8]), Err(Error::Truncated { .. })));

        let mut bytes = header(&[2049, 4]);
        bytes.extend([1, 2]);
        assert!(matches!(load_idx_labels(&bytes), Err(Error::Truncated { .. })));
    }

    #[test]
    fn rejects_out_of_range_label() {
        let mut bytes = header(&[2049, 2]);
        bytes.extend([3, 12]);
        assert!(matches!(
            load_idx_labels(&bytes),
            Err(Error::LabelOutOfRange { label: 12, .. })
        ));
    }

    #[test]
    fn pixel_offset_layout() {
        // pixel (i, j) of image n sits at 16 + n*H*W + i*W + j
        let (h, w) = (2usize, 3usize);
        let mut bytes = header(&[2051, 2, h as u32, w as u32]);
        bytes.extend((0..12u8).map(|b| b * 20));
        let images = load_idx_images(&bytes).unwrap();
        for n in 0..2 {
            for i in 0..h {
                for j in 0..w {
                    let raw = bytes[16 + n * h * w + i * w + j];
                    assert_eq!(images[n].data()[i * w + j], f64::from(raw) / 255.0);
                }
            }
        }
    }
}

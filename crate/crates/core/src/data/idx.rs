//! IDX (MNIST-style) image and label files.

use std::collections::BTreeSet;
use std::path::Path;

use super::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Corruption(format!("{what}: header truncated")))
}

/// Loads an image file (`u8` pixels, scaled to `[0, 1]`) and its label
/// file. Each sample has shape `[1, rows, cols]`. Class names are the label
/// values in decimal, ordered by name.
pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    let img = std::fs::read(images).map_err(|e| Error::io(images, e))?;
    let lab = std::fs::read(labels).map_err(|e| Error::io(labels, e))?;

    let magic = read_u32(&img, 0, "images")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format(format!(
            "{}: image magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}",
            images.display()
        )));
    }
    let magic = read_u32(&lab, 0, "labels")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format(format!(
            "{}: label magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}",
            labels.display()
        )));
    }
    let count = read_u32(&img, 4, "images")? as usize;
    let rows = read_u32(&img, 8, "images")? as usize;
    let cols = read_u32(&img, 12, "images")? as usize;
    let label_count = read_u32(&lab, 4, "labels")? as usize;
    if count != label_count {
        return Err(Error::Consistency(format!("{count} images but {label_count} labels")));
    }
    let pixels = rows * cols;
    let body = &img[16..];
    if body.len() != count * pixels {
        return Err(Error::Corruption(format!(
            "{}: expected {} pixel bytes, found {}",
            images.display(),
            count * pixels,
            body.len()
        )));
    }
    let label_body = &lab[8..];
    if label_body.len() != count {
        return Err(Error::Corruption(format!(
            "{}: expected {count} label bytes, found {}",
            labels.display(),
            label_body.len()
        )));
    }

    let mut names: Vec<String> = label_body
        .iter()
        .copied()
        .collect::<BTreeSet<u8>>()
        .into_iter()
        .map(|v| v.to_string())
        .collect();
    names.sort();
    let mut dense = [usize::MAX; 256];
    for (i, n) in names.iter().enumerate() {
        dense[n.parse::<usize>().expect("decimal")] = i;
    }

    let samples = body
        .chunks_exact(pixels.max(1))
        .take(count)
        .zip(label_body)
        .map(|(px, &l)| {
            let data = px.iter().map(|&p| f64::from(p) / 255.0).collect();
            Ok(Sample {
                x: Tensor::new(vec![1, rows, cols], data)?,
                label: dense[l as usize],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(samples, names, format!("idx:{}", images.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_pair(
        dir: &Path,
        n: u32,
        r: u32,
        c: u32,
        pixels: &[u8],
        labels: &[u8],
    ) -> (std::path::PathBuf, std::path::PathBuf) {
        let mut img = Vec::new();
        img.extend(IDX_IMAGES_MAGIC.to_be_bytes());
        img.extend(n.to_be_bytes());
        img.extend(r.to_be_bytes());
        img.extend(c.to_be_bytes());
        img.extend_from_slice(pixels);
        let mut lab = Vec::new();
        lab.extend(IDX_LABELS_MAGIC.to_be_bytes());
        lab.extend((labels.len() as u32).to_be_bytes());
        lab.extend_from_slice(labels);
        let ip = dir.join("img.idx");
        let lp = dir.join("lab.idx");
        std::fs::write(&ip, img).unwrap();
        std::fs::write(&lp, lab).unwrap();
        (ip, lp)
    }

    #[test]
    fn loads_ten_images() {
        let dir = tempfile::tempdir().unwrap();
        let pixels: Vec<u8> = (0..10 * 6).map(|i| (i * 4) as u8).collect();
        let mut pixels = pixels;
        pixels[0] = 255;
        let labels: Vec<u8> = (0..10).map(|i| (i % 3) as u8).collect();
        let (ip, lp) = write_pair(dir.path(), 10, 2, 3, &pixels, &labels);
        let ds = load_idx(&ip, &lp).unwrap();
        assert_eq!(ds.len(), 10);
        assert_eq!(ds.sample_shape().unwrap(), &[1, 2, 3]);
        assert_eq!(ds.samples()[0].x.data()[0], 1.0);
        assert_eq!(ds.num_classes(), 3);
    }

    #[test]
    fn truncated_payload() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = write_pair(dir.path(), 2, 2, 2, &[0; 7], &[0, 1]);
        assert!(matches!(load_idx(&ip, &lp), Err(Error::Corruption(_))));
    }

    #[test]
    fn bad_magic_and_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = write_pair(dir.path(), 2, 1, 1, &[0, 0], &[0, 1]);
        assert!(matches!(load_idx(&lp, &lp), Err(Error::Format(_))));
        let (ip2, lp2) = write_pair(dir.path(), 2, 1, 1, &[0, 0], &[0, 1, 1]);
        assert!(matches!(load_idx(&ip2, &lp2), Err(Error::Consistency(_))));
        let _ = (ip, lp);
    }
}

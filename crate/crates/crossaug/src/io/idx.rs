//! IDX containers: a big-endian `u32` magic (`0x0000_08nn`, unsigned bytes,
//! `nn` dimensions), `nn` big-endian `u32` sizes, then the raw bytes.
//!
//! Images use `0x803` (`[N, H, W]`, one channel) or `0x804`
//! (`[N, H, W, C]`); labels use `0x801`. Pixels are scaled by `1/255`.

use std::path::Path;

use crossaug_core::data::ImageSet;
use crossaug_core::Tensor;

use super::{read_bytes, write_bytes};
use crate::error::{CliError, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const RGB_IMAGES_MAGIC: u32 = 0x0000_0804;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

struct Idx {
    dims: Vec<usize>,
    payload_offset: usize,
}

fn format_err(path: &Path, offset: usize, message: impl Into<String>) -> CliError {
    CliError::Format {
        path: path.to_path_buf(),
        offset: offset as u64,
        message: message.into(),
    }
}

fn header(path: &Path, bytes: &[u8], allowed: &[u32]) -> Result<Idx> {
    let word = |at: usize| -> Result<u32> {
        bytes
            .get(at..at + 4)
            .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
            .ok_or_else(|| format_err(path, bytes.len(), "truncated header"))
    };
    let magic = word(0)?;
    if !allowed.contains(&magic) {
        return Err(format_err(path, 0, format!("bad magic {magic:#010x}, expected one of {allowed:#010x?}")));
    }
    let ndim = (magic & 0xff) as usize;
    let dims = (0..ndim).map(|i| word(4 + 4 * i).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
    let payload_offset = 4 + 4 * ndim;
    let need = dims.iter().product::<usize>();
    if bytes.len() - payload_offset < need {
        return Err(format_err(
            path,
            bytes.len(),
            format!("truncated payload: {need} bytes expected after offset {payload_offset}"),
        ));
    }
    Ok(Idx { dims, payload_offset })
}

/// Loads `[N, H, W, C]` pixels in `[0, 1]`.
pub fn read_images(path: &Path) -> Result<Tensor> {
    let bytes = read_bytes(path)?;
    let idx = header(path, &bytes, &[IMAGES_MAGIC, RGB_IMAGES_MAGIC])?;
    let mut shape = idx.dims.clone();
    if shape.len() == 3 {
        shape.push(1);
    }
    let n: usize = shape.iter().product();
    let data = bytes[idx.payload_offset..idx.payload_offset + n].iter().map(|&b| f64::from(b) / 255.0).collect();
    Ok(Tensor::new(shape, data)?)
}

pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let bytes = read_bytes(path)?;
    let idx = header(path, &bytes, &[LABELS_MAGIC])?;
    Ok(bytes[idx.payload_offset..idx.payload_offset + idx.dims[0]].iter().map(|&b| b as usize).collect())
}

/// One image file gives grayscale (or an RGB container); three grayscale
/// files of equal shape are stacked as the R, G and B channels.
pub fn load_image_set(images: &[impl AsRef<Path>], labels: &Path) -> Result<ImageSet> {
    let tensors = images.iter().map(|p| read_images(p.as_ref())).collect::<Result<Vec<_>>>()?;
    let stacked = match tensors.len() {
        1 => tensors.into_iter().next().expect("one tensor"),
        3 => {
            let shape = tensors[0].shape().to_vec();
            if tensors.iter().any(|t| t.shape() != shape.as_slice()) || shape[3] != 1 {
                return Err(CliError::Usage("the three channel files must be single-channel and equally shaped".into()));
            }
            let mut data = Vec::with_capacity(3 * tensors[0].len());
            for i in 0..tensors[0].len() {
                data.extend(tensors.iter().map(|t| t.data()[i]));
            }
            Tensor::new(vec![shape[0], shape[1], shape[2], 3], data)?
        }
        k => return Err(CliError::Usage(format!("expected 1 or 3 image files, got {k}"))),
    };
    let labels = read_labels(labels)?;
    Ok(ImageSet::new(stacked, labels)?)
}

fn encode(magic: u32, dims: &[usize], payload: impl Iterator<Item = u8>) -> Vec<u8> {
    let mut out = magic.to_be_bytes().to_vec();
    for &d in dims {
        out.extend((d as u32).to_be_bytes());
    }
    out.extend(payload);
    out
}

/// Writes pixels rounded to the nearest byte; a `[0, 1]` value that came
/// from a byte survives the round trip exactly.
pub fn write_images(path: &Path, images: &Tensor) -> Result<()> {
    let s = images.shape();
    let (magic, dims) = if s[3] == 1 { (IMAGES_MAGIC, &s[..3]) } else { (RGB_IMAGES_MAGIC, s) };
    let bytes = encode(magic, dims, images.data().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    write_bytes(path, &bytes)
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    if let Some(l) = labels.iter().find(|&&l| l > 255) {
        return Err(CliError::Usage(format!("label {l} does not fit in a byte")));
    }
    write_bytes(path, &encode(LABELS_MAGIC, &[labels.len()], labels.iter().map(|&l| l as u8)))
}

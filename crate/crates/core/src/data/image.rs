use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::RangeInclusive;

use crate::{Error, Result, Tensor};

/// Images `[N, H, W, C]` (channels last, values in `[0, 1]`) with labels.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageSet {
    pub images: Tensor,
    pub labels: Vec<usize>,
    /// Provenance ids, one per image.
    pub ids: Vec<u64>,
}

impl ImageSet {
    pub fn new(images: Tensor, labels: Vec<usize>) -> Result<Self> {
        if images.rank() != 4 {
            return Err(Error::Domain(format!("images must be [N, H, W, C], got {:?}", images.shape())));
        }
        if labels.len() != images.shape()[0] {
            return Err(Error::shape("image labels", &[labels.len()], &[images.shape()[0]]));
        }
        let ids = (0..labels.len() as u64).collect();
        Ok(ImageSet { images, labels, ids })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// `(height, width, channels)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        let s = self.images.shape();
        (s[1], s[2], s[3])
    }

    pub fn select(&self, idx: &[usize]) -> ImageSet {
        ImageSet {
            images: self.images.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            ids: idx.iter().map(|&i| self.ids[i]).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    /// Left half plus the common band.
    A,
    /// Common band plus the right half.
    B,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::A => Side::B,
            Side::B => Side::A,
        }
    }
}

impl core::str::FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(Side::A),
            "B" | "b" => Ok(Side::B),
            other => Err(Error::Config(format!("side must be A or B, got `{other}`"))),
        }
    }
}

/// Column geometry of one masked side. The `common` columns form the
/// centred band `[W/2 - n/2, W/2 + n/2 - 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ImageMaskSpec {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub common: usize,
    pub side: Side,
}

impl ImageMaskSpec {
    pub fn new(width: usize, height: usize, channels: usize, common: usize, side: Side) -> Result<Self> {
        let s = ImageMaskSpec {
            width,
            height,
            channels,
            common,
            side,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.channels == 0 || self.width < 4 {
            return Err(Error::Mask(format!(
                "image must be at least 4 columns wide with positive height and channels, got {}x{}x{}",
                self.height, self.width, self.channels
            )));
        }
        if self.common % 2 != 0 || self.common < 2 || self.common + 2 > self.width {
            return Err(Error::Mask(format!(
                "common column count must be even and within [2, {}], got {}",
                self.width - 2,
                self.common
            )));
        }
        Ok(())
    }

    pub fn with_side(self, side: Side) -> Self {
        ImageMaskSpec { side, ..self }
    }

    pub fn common_cols(&self) -> RangeInclusive<usize> {
        let (h, k) = (self.width / 2, self.common / 2);
        h - k..=h + k - 1
    }

    pub fn kept_cols(&self) -> RangeInclusive<usize> {
        let band = self.common_cols();
        match self.side {
            Side::A => 0..=*band.end(),
            Side::B => *band.start()..=self.width - 1,
        }
    }

    /// Columns owned only by the other side; zero after masking.
    pub fn zeroed_cols(&self) -> Vec<usize> {
        let kept = self.kept_cols();
        (0..self.width).filter(|c| !kept.contains(c)).collect()
    }

    /// Width of the flattened common-band matrix, `n * H * C`.
    pub fn common_width(&self) -> usize {
        self.common * self.height * self.channels
    }

    /// Width of the flattened kept-column matrix.
    pub fn kept_width(&self) -> usize {
        self.kept_cols().count() * self.height * self.channels
    }

    fn check(&self, images: &Tensor) -> Result<usize> {
        self.validate()?;
        let s = images.shape();
        if s.len() != 4 || s[1] != self.height || s[2] != self.width || s[3] != self.channels {
            return Err(Error::Mask(format!(
                "images {:?} do not match spec [N, {}, {}, {}]",
                s, self.height, self.width, self.channels
            )));
        }
        Ok(s[0])
    }

    /// Flattens the given image columns: for each column (left to right),
    /// each row (top to bottom), each channel.
    pub fn flatten_cols(&self, images: &Tensor, cols: &[usize]) -> Result<Tensor> {
        let n = self.check(images)?;
        let (h, w, c) = (self.height, self.width, self.channels);
        let per = h * w * c;
        let mut out = Vec::with_capacity(n * cols.len() * h * c);
        for img in images.data().chunks(per.max(1)).take(n) {
            for &x in cols {
                for y in 0..h {
                    let at = (y * w + x) * c;
                    out.extend_from_slice(&img[at..at + c]);
                }
            }
        }
        Tensor::new(vec![n, cols.len() * h * c], out)
    }
}

/// Zeroes every column outside the spec's kept band and returns the masked
/// images together with the flattened common-band matrix.
pub fn mask_images(images: &Tensor, spec: &ImageMaskSpec) -> Result<(Tensor, Tensor)> {
    spec.check(images)?;
    let (h, w, c) = (spec.height, spec.width, spec.channels);
    let zeroed = spec.zeroed_cols();
    let mut masked = images.clone();
    for img in masked.data_mut().chunks_mut(h * w * c) {
        for y in 0..h {
            for &x in &zeroed {
                let at = (y * w + x) * c;
                img[at..at + c].iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }
    let common: Vec<usize> = spec.common_cols().collect();
    let matrix = spec.flatten_cols(images, &common)?;
    Ok((masked, matrix))
}

/// Fills the zeroed columns of side-`spec.side` masked images from a
/// synthetic rendering of the opposite side's kept band (flattened as in
/// [`ImageMaskSpec::flatten_cols`]). Kept columns stay untouched.
pub fn compose_augmented_image(masked: &Tensor, synthetic: &Tensor, spec: &ImageMaskSpec) -> Result<Tensor> {
    let n = spec.check(masked)?;
    let other = spec.with_side(spec.side.opposite());
    let band: Vec<usize> = other.kept_cols().collect();
    if synthetic.shape() != [n, other.kept_width()] {
        return Err(Error::Composition(format!(
            "synthetic output {:?} does not cover the opposite band [{}, {}]",
            synthetic.shape(),
            n,
            other.kept_width()
        )));
    }
    let (h, w, c) = (spec.height, spec.width, spec.channels);
    let mut out = masked.clone();
    let zeroed = spec.zeroed_cols();
    for (i, img) in out.data_mut().chunks_mut(h * w * c).enumerate() {
        let syn = synthetic.row(i);
        for &x in &zeroed {
            let pos = band.iter().position(|&b| b == x).ok_or_else(|| {
                Error::Composition(format!("column {x} is not covered by the opposite side"))
            })?;
            for y in 0..h {
                let src = (pos * h + y) * c;
                let dst = (y * w + x) * c;
                img[dst..dst + c].copy_from_slice(&syn[src..src + c]);
            }
        }
    }
    if let Some(v) = out.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Composition(format!("composed pixel {v} outside [0, 1]")));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::RngState;

    fn images(n: usize, h: usize, w: usize, c: usize, seed: u64) -> Tensor {
        RngState::new(seed).uniform_tensor(&[n, h, w, c]).map(|v| 0.05 + 0.9 * v)
    }

    #[test]
    fn documented_band_for_six_columns() {
        let s = ImageMaskSpec::new(28, 28, 1, 6, Side::A).unwrap();
        assert_eq!(s.kept_cols(), 0..=16);
        assert_eq!(s.zeroed_cols(), (17..28).collect::<Vec<_>>());
        assert_eq!(s.common_cols(), 11..=16);
        let b = ImageMaskSpec::new(28, 28, 1, 26, Side::B).unwrap();
        assert_eq!(b.kept_cols(), 1..=27);
    }

    #[test]
    fn invalid_specs() {
        for n in [0, 1, 3, 27, 28] {
            assert!(matches!(ImageMaskSpec::new(28, 28, 1, n, Side::A), Err(Error::Mask(_))));
        }
    }

    #[test]
    fn geometry_for_every_even_n() {
        for n in (2..=26).step_by(2) {
            let a = ImageMaskSpec::new(28, 28, 1, n, Side::A).unwrap();
            let b = a.with_side(Side::B);
            let ka: Vec<usize> = a.kept_cols().collect();
            let kb: Vec<usize> = b.kept_cols().collect();
            let mut union = ka.clone();
            union.extend(kb.iter().copied().filter(|c| !ka.contains(c)));
            union.sort_unstable();
            assert_eq!(union, (0..28).collect::<Vec<_>>());
            let inter: Vec<usize> = ka.iter().copied().filter(|c| kb.contains(c)).collect();
            assert_eq!(inter, a.common_cols().collect::<Vec<_>>());
            assert_eq!(inter.len(), n);
            assert!(a.zeroed_cols().iter().all(|c| !ka.contains(c)));
        }
    }

    #[test]
    fn masking_keeps_pixels_and_is_idempotent() {
        let x = images(3, 5, 8, 2, 1);
        let s = ImageMaskSpec::new(8, 5, 2, 2, Side::B).unwrap();
        let (m, common) = mask_images(&x, &s).unwrap();
        assert_eq!(common.shape(), &[3, 2 * 5 * 2]);
        for i in 0..3 {
            for y in 0..5 {
                for col in 0..8 {
                    for ch in 0..2 {
                        let at = ((i * 5 + y) * 8 + col) * 2 + ch;
                        let want = if s.kept_cols().contains(&col) { x.data()[at] } else { 0.0 };
                        assert_eq!(m.data()[at].to_bits(), want.to_bits());
                    }
                }
            }
        }
        let (mm, _) = mask_images(&m, &s).unwrap();
        assert_eq!(mm, m);
        // column-major order: first entries are column 3, rows 0.., channels 0..
        assert_eq!(common.get2(0, 0), x.data()[3 * 2]);
        assert_eq!(common.get2(0, 1), x.data()[3 * 2 + 1]);
        assert_eq!(common.get2(0, 2), x.data()[(8 + 3) * 2]);
    }

    #[test]
    fn composition_fills_each_column_once() {
        let x = images(2, 4, 10, 1, 2);
        for n in [2, 4, 6, 8] {
            let a = ImageMaskSpec::new(10, 4, 1, n, Side::A).unwrap();
            let b = a.with_side(Side::B);
            let (masked, _) = mask_images(&x, &a).unwrap();
            let target = b.flatten_cols(&x, &b.kept_cols().collect::<Vec<_>>()).unwrap();
            // a perfect synthesis of B's band reconstructs the original
            assert_eq!(compose_augmented_image(&masked, &target, &a).unwrap(), x);
            let zeros = Tensor::zeros(target.shape());
            assert_eq!(compose_augmented_image(&masked, &zeros, &a).unwrap(), masked);
            let ones = Tensor::full(target.shape(), 1.0);
            let out = compose_augmented_image(&masked, &ones, &a).unwrap();
            for y in 0..4 {
                for col in 0..10 {
                    let v = out.data()[y * 10 + col];
                    if a.kept_cols().contains(&col) {
                        assert_eq!(v, x.data()[y * 10 + col]);
                    } else {
                        assert_eq!(v, 1.0);
                    }
                }
            }
        }
        let a = ImageMaskSpec::new(10, 4, 1, 8, Side::A).unwrap();
        assert_eq!(a.zeroed_cols(), vec![9]);
        let bad = Tensor::zeros(&[2, 3]);
        let (masked, _) = mask_images(&x, &a).unwrap();
        assert!(matches!(compose_augmented_image(&masked, &bad, &a), Err(Error::Composition(_))));
    }
}

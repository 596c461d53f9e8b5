//! PNG and raw `BMAP1` readers/writers.
//!
//! `BMAP1` layout: the 5 ASCII bytes `BMAP1`, then width, height and channel
//! count as little-endian `u32`, then row-major interleaved little-endian `f64`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma};

use super::grid::{ImageGrid, Mask};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const BMAP_MAGIC: &[u8; 5] = b"BMAP1";

/// Load a PNG as a grid in `[0,1]`: one channel for gray, three for color (alpha dropped).
pub fn read_png<T: Scalar>(path: impl AsRef<Path>) -> Result<ImageGrid<T>> {
    let img = image::open(path.as_ref())?;
    dynamic_to_grid(img)
}

fn dynamic_to_grid<T: Scalar>(img: DynamicImage) -> Result<ImageGrid<T>> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        DynamicImage::ImageLuma8(b) => {
            ImageGrid::new(w, h, 1, b.into_raw().into_iter().map(|v| T::lit(v as f64 / 255.0)).collect())
        }
        DynamicImage::ImageLumaA8(_) => dynamic_to_grid(DynamicImage::ImageLuma8(img.to_luma8())),
        DynamicImage::ImageLuma16(b) => {
            ImageGrid::new(w, h, 1, b.into_raw().into_iter().map(|v| T::lit(v as f64 / 65535.0)).collect())
        }
        DynamicImage::ImageLumaA16(_) => dynamic_to_grid(DynamicImage::ImageLuma16(img.to_luma16())),
        DynamicImage::ImageRgb8(b) => {
            ImageGrid::new(w, h, 3, b.into_raw().into_iter().map(|v| T::lit(v as f64 / 255.0)).collect())
        }
        other => dynamic_to_grid(DynamicImage::ImageRgb8(other.to_rgb8())),
    }
}

/// Quantize a score map in `[0,1]` to 16 bits: `round(65535 * clamp(s, 0, 1))`.
pub fn quantize_u16<T: Scalar>(s: T) -> u16 {
    let v = s.as_f64().clamp(0.0, 1.0);
    (65535.0 * v).round() as u16
}

/// Write channel 0 of `map` as a 16-bit grayscale PNG.
pub fn write_png16<T: Scalar>(map: &ImageGrid<T>, path: impl AsRef<Path>) -> Result<()> {
    let raw: Vec<u16> = map.data().iter().step_by(map.channels()).map(|&v| quantize_u16(v)).collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(map.width() as u32, map.height() as u32, raw)
            .ok_or_else(|| Error::Format("16-bit buffer size".into()))?;
    buf.save(path.as_ref())?;
    Ok(())
}

/// Write an 8-bit image (1 or 3 channels) with values clamped to `[0,1]`.
pub fn write_png8<T: Scalar>(img: &ImageGrid<T>, path: impl AsRef<Path>) -> Result<()> {
    let raw: Vec<u8> = img
        .data()
        .iter()
        .map(|&v| (255.0 * v.as_f64().clamp(0.0, 1.0)).round() as u8)
        .collect();
    let (w, h) = (img.width() as u32, img.height() as u32);
    let dynimg = match img.channels() {
        1 => DynamicImage::ImageLuma8(
            ImageBuffer::from_raw(w, h, raw).ok_or_else(|| Error::Format("8-bit buffer size".into()))?,
        ),
        3 => DynamicImage::ImageRgb8(
            ImageBuffer::from_raw(w, h, raw).ok_or_else(|| Error::Format("8-bit buffer size".into()))?,
        ),
        c => return Err(Error::InvalidArgument(format!("cannot write {c}-channel PNG"))),
    };
    dynimg.save(path.as_ref())?;
    Ok(())
}

/// Write a binary mask as an 8-bit PNG (0 / 255).
pub fn write_mask_png(mask: &Mask, path: impl AsRef<Path>) -> Result<()> {
    write_png8(&mask.to_grid::<f64>(), path)
}

/// Read an 8-bit PNG as a binary mask: any nonzero gray value is set.
pub fn read_mask_png(path: impl AsRef<Path>) -> Result<Mask> {
    let img = image::open(path.as_ref())?.to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Mask::new(w, h, img.into_raw().into_iter().map(|v| v > 127).collect())
}

/// Write a label map as an 8-bit indexed PNG with a fixed palette.
pub fn write_label_png(labels: &[u8], width: usize, height: usize, path: impl AsRef<Path>) -> Result<()> {
    if labels.len() != width * height {
        return Err(Error::DataLength {
            width,
            height,
            channels: 1,
            expected: width * height,
            got: labels.len(),
        });
    }
    let file = BufWriter::new(File::create(path.as_ref())?);
    let mut enc = png::Encoder::new(file, width as u32, height as u32);
    enc.set_color(png::ColorType::Indexed);
    enc.set_depth(png::BitDepth::Eight);
    enc.set_palette(label_palette());
    let mut writer = enc.write_header().map_err(|e| Error::Format(e.to_string()))?;
    writer.write_image_data(labels).map_err(|e| Error::Format(e.to_string()))?;
    writer.finish().map_err(|e| Error::Format(e.to_string()))?;
    Ok(())
}

/// PASCAL-VOC style color map for 256 labels.
fn label_palette() -> Vec<u8> {
    let mut pal = Vec::with_capacity(256 * 3);
    for i in 0..256u32 {
        let (mut r, mut g, mut b) = (0u8, 0u8, 0u8);
        let mut c = i;
        for j in 0..8 {
            r |= (((c >> 0) & 1) as u8) << (7 - j);
            g |= (((c >> 1) & 1) as u8) << (7 - j);
            b |= (((c >> 2) & 1) as u8) << (7 - j);
            c >>= 3;
        }
        pal.extend_from_slice(&[r, g, b]);
    }
    pal
}

pub fn encode_bmap<T: Scalar>(grid: &ImageGrid<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(17 + grid.data().len() * 8);
    out.extend_from_slice(BMAP_MAGIC);
    for d in [grid.width(), grid.height(), grid.channels()] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in grid.data() {
        out.extend_from_slice(&v.as_f64().to_le_bytes());
    }
    out
}

pub fn decode_bmap<T: Scalar>(mut bytes: &[u8]) -> Result<ImageGrid<T>> {
    let mut magic = [0u8; 5];
    bytes.read_exact(&mut magic).map_err(|_| Error::Format("truncated BMAP1 header".into()))?;
    if &magic != BMAP_MAGIC {
        return Err(Error::Format("bad BMAP1 magic".into()));
    }
    let mut dims = [0usize; 3];
    for d in &mut dims {
        let mut b = [0u8; 4];
        bytes.read_exact(&mut b).map_err(|_| Error::Format("truncated BMAP1 header".into()))?;
        *d = u32::from_le_bytes(b) as usize;
    }
    let [w, h, c] = dims;
    let n = w
        .checked_mul(h)
        .and_then(|v| v.checked_mul(c))
        .ok_or_else(|| Error::Format("BMAP1 dims overflow".into()))?;
    if bytes.len() != n * 8 {
        return Err(Error::Format(format!(
            "BMAP1 payload has {} bytes, expected {}",
            bytes.len(),
            n * 8
        )));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|b| T::lit(f64::from_le_bytes(b.try_into().expect("8-byte chunk"))))
        .collect();
    ImageGrid::new(w, h, c, data)
}

pub fn write_bmap<T: Scalar>(grid: &ImageGrid<T>, path: impl AsRef<Path>) -> Result<()> {
    let mut f = BufWriter::new(File::create(path.as_ref())?);
    f.write_all(&encode_bmap(grid))?;
    f.flush()?;
    Ok(())
}

pub fn read_bmap<T: Scalar>(path: impl AsRef<Path>) -> Result<ImageGrid<T>> {
    let mut buf = Vec::new();
    BufReader::new(File::open(path.as_ref())?).read_to_end(&mut buf)?;
    decode_bmap(&buf)
}

/// Read a score map from `.bmap` (raw) or any PNG.
pub fn read_map<T: Scalar>(path: impl AsRef<Path>) -> Result<ImageGrid<T>> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("bmap") => read_bmap(path),
        _ => read_png(path),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bmap_header_layout() {
        let g = ImageGrid::new(2, 1, 1, vec![0.25f64, -1.5]).unwrap();
        let b = encode_bmap(&g);
        assert_eq!(&b[..5], b"BMAP1");
        assert_eq!(&b[5..9], &2u32.to_le_bytes());
        assert_eq!(&b[9..13], &1u32.to_le_bytes());
        assert_eq!(&b[13..17], &1u32.to_le_bytes());
        assert_eq!(&b[17..25], &0.25f64.to_le_bytes());
        assert_eq!(b.len(), 33);
    }

    #[test]
    fn bmap_rejects_truncation_and_bad_magic() {
        let g = ImageGrid::new(2, 2, 1, vec![1.0f64; 4]).unwrap();
        let b = encode_bmap(&g);
        assert!(decode_bmap::<f64>(&b[..b.len() - 1]).is_err());
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(decode_bmap::<f64>(&bad).is_err());
    }

    proptest! {
        #[test]
        fn bmap_round_trip_is_bit_exact(w in 1usize..6, h in 1usize..6, c in 1usize..4,
                                        seed in proptest::collection::vec(any::<f64>(), 125)) {
            let data: Vec<f64> = seed.into_iter().take(w * h * c).collect();
            let g = ImageGrid::new(w, h, c, data).unwrap();
            let back: ImageGrid<f64> = decode_bmap(&encode_bmap(&g)).unwrap();
            let same = g.data().iter().zip(back.data()).all(|(a, b)| a.to_bits() == b.to_bits());
            prop_assert!(same);
            prop_assert_eq!(back.dims(), g.dims());
        }
    }

    #[test]
    fn png16_quantization() {
        assert_eq!(quantize_u16(1.5f64), 65535);
        assert_eq!(quantize_u16(-0.1f64), 0);
        assert_eq!(quantize_u16(0.5f64), 32768);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        let g = ImageGrid::new(3, 1, 1, vec![0.0f64, 0.5, 1.0]).unwrap();
        write_png16(&g, &p).unwrap();
        let back: ImageGrid<f64> = read_png(&p).unwrap();
        assert_eq!(back.data()[0], 0.0);
        assert_eq!(back.data()[2], 1.0);
        assert!((back.data()[1] - 32768.0 / 65535.0).abs() < 1e-12);
    }

    #[test]
    fn rgb_png_and_mask_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rgb.png");
        let g = ImageGrid::new(2, 1, 3, vec![1.0f64, 0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        write_png8(&g, &p).unwrap();
        assert_eq!(read_png::<f64>(&p).unwrap(), g);
        let m = Mask::new(2, 2, vec![true, false, false, true]).unwrap();
        let mp = dir.path().join("m.png");
        write_mask_png(&m, &mp).unwrap();
        assert_eq!(read_mask_png(&mp).unwrap(), m);
        let lp = dir.path().join("labels.png");
        write_label_png(&[0, 1, 2, 1], 2, 2, &lp).unwrap();
        assert!(write_label_png(&[0, 1], 2, 2, &lp).is_err());
    }
}

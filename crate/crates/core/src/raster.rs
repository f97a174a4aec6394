//! 8-bit rasters and the pixel operations used for preprocessing and
//! augmentation.
//!
//! Operations that move pixels also move the boxes riding on them: boxes are
//! propagated through the same map, clipped to the frame, and dropped when
//! less than `min_box_area` remains.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::Annotation;
use crate::error::{Error, Result};
use crate::geometry::AffineMap;

/// Boxes with less area than this after clipping are dropped.
pub const DEFAULT_MIN_BOX_AREA: f64 = 16.0;

#[derive(Clone, PartialEq, Eq)]
pub struct Raster {
    width: u32,
    height: u32,
    channels: u8,
    pixels: Vec<u8>,
}

impl std::fmt::Debug for Raster {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Raster")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("channels", &self.channels)
            .finish_non_exhaustive()
    }
}

impl Raster {
    /// Wraps a row-major, channel-interleaved buffer.
    pub fn from_vec(width: u32, height: u32, channels: u8, pixels: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidRaster(format!("{channels} channels")));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidRaster(format!("size {width}x{height}")));
        }
        let expected = width as usize * height as usize * channels as usize;
        if pixels.len() != expected {
            return Err(Error::InvalidRaster(format!(
                "buffer holds {} samples, expected {expected}",
                pixels.len()
            )));
        }
        Ok(Raster {
            width,
            height,
            channels,
            pixels,
        })
    }

    pub fn filled(width: u32, height: u32, channels: u8, value: u8) -> Result<Self> {
        Self::from_vec(
            width,
            height,
            channels,
            vec![value; width as usize * height as usize * channels as usize],
        )
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    fn index(&self, x: u32, y: u32, c: u8) -> usize {
        (y as usize * self.width as usize + x as usize) * self.channels as usize + c as usize
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32, c: u8) -> u8 {
        self.pixels[self.index(x, y, c)]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, c: u8, v: u8) {
        let i = self.index(x, y, c);
        self.pixels[i] = v;
    }

    fn with_pixels(&self, pixels: Vec<u8>) -> Raster {
        Raster {
            width: self.width,
            height: self.height,
            channels: self.channels,
            pixels,
        }
    }

    /// Decodes a PNG (or any format the `image` crate recognizes). Alpha is
    /// discarded; 16-bit samples are reduced to 8 bits.
    pub fn load(path: &Path) -> Result<Raster> {
        let img = image::ImageReader::open(path)
            .map_err(|e| Error::io(path, e))?
            .with_guessed_format()
            .map_err(|e| Error::io(path, e))?
            .decode()
            .map_err(|source| Error::Image {
                path: path.to_owned(),
                source,
            })?;
        let (w, h) = (img.width(), img.height());
        if img.color().channel_count() <= 2 {
            Raster::from_vec(w, h, 1, img.into_luma8().into_raw())
        } else {
            Raster::from_vec(w, h, 3, img.into_rgb8().into_raw())
        }
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let color = if self.channels == 1 {
            image::ExtendedColorType::L8
        } else {
            image::ExtendedColorType::Rgb8
        };
        image::save_buffer_with_format(
            path,
            &self.pixels,
            self.width,
            self.height,
            color,
            image::ImageFormat::Png,
        )
        .map_err(|source| Error::Image {
            path: path.to_owned(),
            source,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropRect {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl CropRect {
    pub fn new(x: u32, y: u32, width: u32, height: u32) -> Self {
        CropRect {
            x,
            y,
            width,
            height,
        }
    }

    /// Horizontally centred window of the given size touching the top edge.
    pub fn top_centered(frame_width: u32, frame_height: u32, width: u32, height: u32) -> Result<Self> {
        if width > frame_width || height > frame_height {
            return Err(Error::CropOutOfBounds {
                x: 0,
                y: 0,
                width,
                height,
                raster_width: frame_width,
                raster_height: frame_height,
            });
        }
        Ok(CropRect::new((frame_width - width) / 2, 0, width, height))
    }

    fn fits(&self, r: &Raster) -> bool {
        self.width > 0
            && self.height > 0
            && self.x as u64 + self.width as u64 <= r.width as u64
            && self.y as u64 + self.height as u64 <= r.height as u64
    }
}

/// Moves boxes through `map`, clips them to a `width × height` frame and
/// drops remnants smaller than `min_box_area`.
pub fn propagate_boxes(
    anns: &[Annotation],
    map: &AffineMap,
    width: u32,
    height: u32,
    min_box_area: f64,
) -> Vec<Annotation> {
    anns.iter()
        .filter_map(|a| {
            let moved = a.bbox.transform(map).clip(width as f64, height as f64)?;
            (moved.area() >= min_box_area).then(|| Annotation {
                bbox: moved,
                ..a.clone()
            })
        })
        .collect()
}

pub fn crop(
    r: &Raster,
    rect: CropRect,
    anns: &[Annotation],
    min_box_area: f64,
) -> Result<(Raster, Vec<Annotation>)> {
    if !rect.fits(r) {
        return Err(Error::CropOutOfBounds {
            x: rect.x,
            y: rect.y,
            width: rect.width,
            height: rect.height,
            raster_width: r.width,
            raster_height: r.height,
        });
    }
    let ch = r.channels as usize;
    let row_len = rect.width as usize * ch;
    let mut pixels = Vec::with_capacity(row_len * rect.height as usize);
    for y in rect.y..rect.y + rect.height {
        let start = r.index(rect.x, y, 0);
        pixels.extend_from_slice(&r.pixels[start..start + row_len]);
    }
    let out = Raster::from_vec(rect.width, rect.height, r.channels, pixels)?;
    let shift = AffineMap::translation(-(rect.x as f64), -(rect.y as f64));
    let anns = propagate_boxes(anns, &shift, rect.width, rect.height, min_box_area);
    Ok((out, anns))
}

/// Replicates a single gray channel into three identical channels.
pub fn gray_to_rgb(r: &Raster) -> Result<Raster> {
    if r.channels != 1 {
        return Err(Error::ChannelMismatch {
            expected: 1,
            actual: r.channels,
        });
    }
    let pixels = r.pixels.iter().flat_map(|&v| [v, v, v]).collect();
    Raster::from_vec(r.width, r.height, 3, pixels)
}

#[inline]
fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Linear stretch sending the 1st-percentile sample to 0 and the
/// 99th-percentile sample to 255.
///
/// Percentiles are order statistics over all samples of all channels:
/// `low = sorted[floor(0.01·(n−1))]`, `high = sorted[ceil(0.99·(n−1))]`.
/// Images with `low == high` are returned unchanged.
pub fn normalize_contrast(r: &Raster) -> Raster {
    let (lo, hi) = percentiles(&r.pixels);
    if hi <= lo {
        return r.clone();
    }
    let scale = 255.0 / (hi - lo) as f64;
    let lut: Vec<u8> = (0..=255u16)
        .map(|v| to_u8((v as f64 - lo as f64) * scale))
        .collect();
    r.with_pixels(r.pixels.iter().map(|&v| lut[v as usize]).collect())
}

fn percentiles(samples: &[u8]) -> (u8, u8) {
    let mut hist = [0usize; 256];
    for &v in samples {
        hist[v as usize] += 1;
    }
    let last = samples.len().saturating_sub(1) as f64;
    let lo_rank = (0.01 * last).floor() as usize;
    let hi_rank = (0.99 * last).ceil() as usize;
    let nth = |rank: usize| {
        let mut seen = 0;
        for (v, &count) in hist.iter().enumerate() {
            seen += count;
            if seen > rank {
                return v as u8;
            }
        }
        255
    };
    (nth(lo_rank), nth(hi_rank))
}

/// Normalized 1-D Gaussian kernel of radius `ceil(3·sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let two_s2 = 2.0 * sigma * sigma;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|x| (-((x * x) as f64) / two_s2).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|w| *w /= sum);
    k
}

/// Separable Gaussian blur with clamp-to-edge borders.
pub fn gaussian_blur(r: &Raster, sigma: f64) -> Raster {
    if !(sigma.is_finite() && sigma > 0.0) {
        return r.clone();
    }
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as i64;
    let (w, h, ch) = (r.width as i64, r.height as i64, r.channels as usize);

    let mut horizontal = vec![0.0f64; r.pixels.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let mut acc = 0.0;
                for (k, weight) in kernel.iter().enumerate() {
                    let sx = (x + k as i64 - radius).clamp(0, w - 1);
                    acc += weight * r.pixels[((y * w + sx) as usize) * ch + c] as f64;
                }
                horizontal[((y * w + x) as usize) * ch + c] = acc;
            }
        }
    }

    let mut out = vec![0u8; r.pixels.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let mut acc = 0.0;
                for (k, weight) in kernel.iter().enumerate() {
                    let sy = (y + k as i64 - radius).clamp(0, h - 1);
                    acc += weight * horizontal[((sy * w + x) as usize) * ch + c];
                }
                out[((y * w + x) as usize) * ch + c] = to_u8(acc);
            }
        }
    }
    r.with_pixels(out)
}

/// `out = clamp(round((in − 128)·factor + 128))`.
pub fn adjust_contrast(r: &Raster, factor: f64) -> Raster {
    let lut: Vec<u8> = (0..=255u16)
        .map(|v| to_u8((v as f64 - 128.0) * factor + 128.0))
        .collect();
    r.with_pixels(r.pixels.iter().map(|&v| lut[v as usize]).collect())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseChannels {
    /// A fresh draw for every sample of every channel.
    #[default]
    Independent,
    /// One draw per pixel, added to all of its channels.
    Shared,
}

/// Adds zero-mean Gaussian noise drawn from a stream seeded by `seed`.
pub fn add_gaussian_noise(r: &Raster, sigma: f64, seed: u64, mode: NoiseChannels) -> Raster {
    if !(sigma.is_finite() && sigma > 0.0) {
        return r.clone();
    }
    let normal = Normal::new(0.0, sigma).expect("sigma is positive and finite");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let out = match mode {
        NoiseChannels::Independent => r
            .pixels
            .iter()
            .map(|&v| to_u8(v as f64 + normal.sample(&mut rng)))
            .collect(),
        NoiseChannels::Shared => r
            .pixels
            .chunks_exact(r.channels as usize)
            .flat_map(|px| {
                let n = normal.sample(&mut rng);
                px.iter().map(move |&v| to_u8(v as f64 + n)).collect::<Vec<_>>()
            })
            .collect(),
    };
    r.with_pixels(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlipAxis {
    /// Left-right mirror.
    Horizontal,
    /// Top-bottom mirror.
    Vertical,
}

impl FlipAxis {
    pub fn map(&self, width: u32, height: u32) -> AffineMap {
        match self {
            FlipAxis::Horizontal => AffineMap::mirror_x(width as f64),
            FlipAxis::Vertical => AffineMap::mirror_y(height as f64),
        }
    }
}

pub fn flip_raster(r: &Raster, axis: FlipAxis) -> Raster {
    let (w, h, ch) = (r.width as usize, r.height as usize, r.channels as usize);
    let row = w * ch;
    let mut out = Vec::with_capacity(r.pixels.len());
    match axis {
        FlipAxis::Horizontal => {
            for y in 0..h {
                let src = &r.pixels[y * row..(y + 1) * row];
                for px in src.chunks_exact(ch).rev() {
                    out.extend_from_slice(px);
                }
            }
        }
        FlipAxis::Vertical => {
            for y in (0..h).rev() {
                out.extend_from_slice(&r.pixels[y * row..(y + 1) * row]);
            }
        }
    }
    r.with_pixels(out)
}

/// Mirrors the raster and its boxes. Mirrored boxes never leave the frame,
/// so no box is dropped.
pub fn flip(r: &Raster, axis: FlipAxis, anns: &[Annotation]) -> (Raster, Vec<Annotation>) {
    let map = axis.map(r.width, r.height);
    let anns = anns
        .iter()
        .map(|a| Annotation {
            bbox: a.bbox.transform(&map),
            ..a.clone()
        })
        .collect();
    (flip_raster(r, axis), anns)
}

/// Resamples `r` under `m` (source → destination) on a canvas of the same
/// size. Each output pixel centre is mapped back through `m⁻¹` and sampled
/// bilinearly; neighbours outside the source read as `fill`.
pub fn warp_raster(r: &Raster, m: &AffineMap, fill: u8) -> Result<Raster> {
    let inv = m.inverse()?;
    let (w, h, ch) = (r.width as i64, r.height as i64, r.channels as usize);
    let sample = |ix: i64, iy: i64, c: usize| -> f64 {
        if ix < 0 || iy < 0 || ix >= w || iy >= h {
            fill as f64
        } else {
            r.pixels[((iy * w + ix) as usize) * ch + c] as f64
        }
    };
    let mut out = vec![0u8; r.pixels.len()];
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = inv.apply(x as f64 + 0.5, y as f64 + 0.5);
            let (fx, fy) = (sx - 0.5, sy - 0.5);
            let (x0, y0) = (fx.floor(), fy.floor());
            let (ax, ay) = (fx - x0, fy - y0);
            let (x0, y0) = (x0 as i64, y0 as i64);
            for c in 0..ch {
                let top = if ax == 0.0 {
                    sample(x0, y0, c)
                } else {
                    (1.0 - ax) * sample(x0, y0, c) + ax * sample(x0 + 1, y0, c)
                };
                let v = if ay == 0.0 {
                    top
                } else {
                    let bottom = if ax == 0.0 {
                        sample(x0, y0 + 1, c)
                    } else {
                        (1.0 - ax) * sample(x0, y0 + 1, c) + ax * sample(x0 + 1, y0 + 1, c)
                    };
                    (1.0 - ay) * top + ay * bottom
                };
                out[((y * w + x) as usize) * ch + c] = to_u8(v);
            }
        }
    }
    Ok(r.with_pixels(out))
}

pub fn affine_warp(
    r: &Raster,
    m: &AffineMap,
    anns: &[Annotation],
    fill: u8,
    min_box_area: f64,
) -> Result<(Raster, Vec<Annotation>)> {
    let out = warp_raster(r, m, fill)?;
    let anns = propagate_boxes(anns, m, r.width, r.height, min_box_area);
    Ok((out, anns))
}

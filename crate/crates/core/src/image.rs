//! Planar image container and the crop / four-quadrant patch primitives.
//!
//! Pixels are stored channel-major, row-major within each channel
//! (`data[c * h * w + y * w + x]`). Zero-width or zero-height images are
//! legal and carry their channel count so that empty patches compose away.

use std::fmt::Debug;

use crate::{Error, Result};

/// Element type of an [`ImageTensor`]. Geometry never inspects pixel values,
/// so any plain copyable type works.
pub trait Pixel: Copy + Default + PartialEq + Debug + Send + Sync + 'static {}

impl Pixel for u8 {}
impl Pixel for f32 {}
impl Pixel for f64 {}

/// Real-valued pixels, required wherever values are blended.
pub trait RealPixel: Pixel {
    fn to_f64(self) -> f64;
    fn from_f64(value: f64) -> Self;
}

impl RealPixel for f32 {
    fn to_f64(self) -> f64 {
        self as f64
    }

    fn from_f64(value: f64) -> Self {
        value as f32
    }
}

impl RealPixel for f64 {
    fn to_f64(self) -> f64 {
        self
    }

    fn from_f64(value: f64) -> Self {
        value
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, serde::Serialize, serde::Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub const fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Self { x, y, w, h }
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn right(&self) -> usize {
        self.x + self.w
    }

    pub fn bottom(&self) -> usize {
        self.y + self.h
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.right() && y >= self.y && y < self.bottom()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor<T> {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Pixel> ImageTensor<T> {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if !matches!(channels, 1 | 3 | 4) {
            return Err(Error::Input(format!(
                "channel count must be 1, 3 or 4, got {channels}"
            )));
        }
        let expected = channels * height * width;
        if data.len() != expected {
            return Err(Error::Input(format!(
                "pixel buffer holds {} values, {channels}x{height}x{width} needs {expected}",
                data.len()
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: T) -> Result<Self> {
        Self::new(channels, height, width, vec![value; channels * height * width])
    }

    /// Builds an image by evaluating `f(channel, y, x)` for every pixel.
    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self::new(channels, height, width, data)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// `(channels, height, width)`
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> T {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, value: T) {
        self.data[(c * self.height + y) * self.width + x] = value;
    }

    pub fn full_rect(&self) -> Rect {
        Rect::new(0, 0, self.width, self.height)
    }

    pub fn crop(&self, region: Rect) -> Result<ImageTensor<T>> {
        if region.right() > self.width {
            return Err(Error::Bounds(format!(
                "crop right edge x={} exceeds width {}",
                region.right(),
                self.width
            )));
        }
        if region.bottom() > self.height {
            return Err(Error::Bounds(format!(
                "crop bottom edge y={} exceeds height {}",
                region.bottom(),
                self.height
            )));
        }
        let mut data = Vec::with_capacity(self.channels * region.area());
        for c in 0..self.channels {
            for y in region.y..region.bottom() {
                let start = (c * self.height + y) * self.width + region.x;
                data.extend_from_slice(&self.data[start..start + region.w]);
            }
        }
        Ok(ImageTensor {
            channels: self.channels,
            height: region.h,
            width: region.w,
            data,
        })
    }

    /// Copies `src` into `self` with its top-left corner at `(dx, dy)`.
    fn blit(&mut self, src: &ImageTensor<T>, dx: usize, dy: usize) {
        for c in 0..self.channels {
            for y in 0..src.height {
                let from = (c * src.height + y) * src.width;
                let to = (c * self.height + dy + y) * self.width + dx;
                self.data[to..to + src.width].copy_from_slice(&src.data[from..from + src.width]);
            }
        }
    }
}

/// Patches four images into an `I_x × I_y` canvas split at `boundary = (w, h)`.
///
/// `ul` must be `w×h`, `ur` `(I_x−w)×h`, `ll` `w×(I_y−h)` and `lr`
/// `(I_x−w)×(I_y−h)`; they land at offsets `(0,0)`, `(w,0)`, `(0,h)`, `(w,h)`.
pub fn patch_compose<T: Pixel>(
    ul: &ImageTensor<T>,
    ur: &ImageTensor<T>,
    ll: &ImageTensor<T>,
    lr: &ImageTensor<T>,
    boundary: (usize, usize),
    canvas: (usize, usize),
) -> Result<ImageTensor<T>> {
    let (w, h) = boundary;
    let (ix, iy) = canvas;
    if w > ix || h > iy {
        return Err(Error::Bounds(format!(
            "boundary ({w}, {h}) lies outside a {ix}x{iy} canvas"
        )));
    }
    let channels = ul.channels;
    let parts = [
        ("upper-left", ul, (w, h)),
        ("upper-right", ur, (ix - w, h)),
        ("lower-left", ll, (w, iy - h)),
        ("lower-right", lr, (ix - w, iy - h)),
    ];
    for (name, img, (pw, ph)) in parts {
        if img.width != pw || img.height != ph {
            return Err(Error::Composition {
                quadrant: name,
                reason: format!(
                    "patch is {}x{}, quadrant needs {pw}x{ph}",
                    img.width, img.height
                ),
            });
        }
        if img.channels != channels {
            return Err(Error::Composition {
                quadrant: name,
                reason: format!("patch has {} channels, expected {channels}", img.channels),
            });
        }
    }
    let mut out = ImageTensor::filled(channels, iy, ix, T::default())?;
    out.blit(ul, 0, 0);
    out.blit(ur, w, 0);
    out.blit(ll, 0, h);
    out.blit(lr, w, h);
    Ok(out)
}

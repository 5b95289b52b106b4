//! Minutiae sets and their fixed-size heatmap encoding.
//!
//! Coordinates follow image raster convention: `x` is the column, `y` the
//! row, origin at the top-left pixel. Orientation `theta` is in degrees.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Default Gaussian spread of a minutia hot-spot, in pixels.
pub const DEFAULT_SIGMA: f64 = 3.0;
/// Default number of orientation channels.
pub const DEFAULT_CHANNELS: usize = 2;
/// Hot-spots are truncated at this many sigmas from their center.
const KERNEL_RADIUS_SIGMAS: f64 = 4.0;

/// Normalize an angle in degrees to `[0, 360)`.
pub fn normalize_degrees(theta: f64) -> f64 {
    let t = theta.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if t >= 360.0 {
        0.0
    } else {
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minutia {
    pub x: f64,
    pub y: f64,
    theta: f64,
}

impl Minutia {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_degrees(theta),
        }
    }

    /// Orientation in degrees, always in `[0, 360)`.
    #[inline]
    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Orientation channel for a `channels`-channel map: with two channels,
    /// `[0, 180)` goes to channel 0 and `[180, 360)` to channel 1.
    #[inline]
    pub fn channel(&self, channels: usize) -> usize {
        if channels >= 2 && self.theta >= 180.0 {
            1
        } else {
            0
        }
    }

    /// Nearest pixel `(row, col)`.
    #[inline]
    pub fn pixel(&self) -> (i64, i64) {
        (self.y.round() as i64, self.x.round() as i64)
    }

    fn total_cmp(&self, other: &Self) -> Ordering {
        self.x
            .total_cmp(&other.x)
            .then(self.y.total_cmp(&other.y))
            .then(self.theta.total_cmp(&other.theta))
    }
}

/// Variable-length, unordered minutiae set for one impression.
#[derive(Debug, Clone)]
pub struct MinutiaeSet {
    width: usize,
    height: usize,
    points: Vec<Minutia>,
}

impl MinutiaeSet {
    /// Builds a set, rejecting any minutia outside `[0, width) x [0, height)`.
    pub fn new(width: usize, height: usize, points: Vec<Minutia>) -> Result<Self> {
        let set = Self {
            width,
            height,
            points,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            points: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, p) in self.points.iter().enumerate() {
            let inside = p.x.is_finite()
                && p.y.is_finite()
                && p.x >= 0.0
                && p.y >= 0.0
                && p.x < self.width as f64
                && p.y < self.height as f64;
            if !inside {
                return Err(Error::Validation(format!(
                    "minutia {i} at (x={}, y={}) lies outside the {}x{} frame",
                    p.x, p.y, self.width, self.height
                )));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn points(&self) -> &[Minutia] {
        &self.points
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn into_points(self) -> Vec<Minutia> {
        self.points
    }

    fn sorted_points(&self) -> Vec<Minutia> {
        let mut pts = self.points.clone();
        pts.sort_by(Minutia::total_cmp);
        pts
    }

    /// Order-insensitive exact equality.
    pub fn set_eq(&self, other: &Self) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.points.len() == other.points.len()
            && self.sorted_points() == other.sorted_points()
    }

    /// Rescale coordinates into a `width x height` frame. Points that land
    /// on the far border after rounding are clamped inside.
    pub fn rescaled(&self, width: usize, height: usize) -> Self {
        let sx = width as f64 / self.width as f64;
        let sy = height as f64 / self.height as f64;
        let max_x = (width as f64 - 1.0).max(0.0);
        let max_y = (height as f64 - 1.0).max(0.0);
        let points = self
            .points
            .iter()
            .map(|p| {
                Minutia::new(
                    ((p.x + 0.5) * sx - 0.5).clamp(0.0, max_x),
                    ((p.y + 0.5) * sy - 0.5).clamp(0.0, max_y),
                    p.theta,
                )
            })
            .collect();
        Self {
            width,
            height,
            points,
        }
    }
}

impl PartialEq for MinutiaeSet {
    fn eq(&self, other: &Self) -> bool {
        self.set_eq(other)
    }
}

/// Dense `height x width x channels` heatmap, stored channel-major:
/// element `(c, row, col)` lives at `data[(c * height + row) * width + col]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MinutiaeMap<T> {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<T>,
}

impl<T: Scalar> MinutiaeMap<T> {
    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![T::zero(); width * height * channels],
        }
    }

    /// A channel-less map; tokenizing with it yields image-only tokens.
    pub fn empty(width: usize, height: usize) -> Self {
        Self::zeros(width, height, 0)
    }

    pub fn from_data(width: usize, height: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::Shape(format!(
                "map buffer holds {} values, expected {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn get(&self, channel: usize, row: usize, col: usize) -> T {
        self.data[(channel * self.height + row) * self.width + col]
    }

    #[inline]
    fn get_mut(&mut self, channel: usize, row: usize, col: usize) -> &mut T {
        &mut self.data[(channel * self.height + row) * self.width + col]
    }

    /// One channel as a row-major plane.
    pub fn channel(&self, channel: usize) -> &[T] {
        let plane = self.width * self.height;
        &self.data[channel * plane..(channel + 1) * plane]
    }
}

/// Encode a minutiae set as a heatmap. Each minutia deposits a Gaussian
/// bump of peak 1 centered on its nearest pixel into its orientation
/// channel; overlapping bumps combine by element-wise maximum.
pub fn build_minutiae_map<T: Scalar>(
    set: &MinutiaeSet,
    channels: usize,
    sigma: f64,
) -> Result<MinutiaeMap<T>> {
    if !(1..=2).contains(&channels) {
        return Err(Error::Config(format!(
            "minutiae map supports 1 or 2 channels, got {channels}"
        )));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Config(format!(
            "minutiae map sigma must be positive, got {sigma}"
        )));
    }
    set.validate()?;

    let (w, h) = (set.width() as i64, set.height() as i64);
    let mut map = MinutiaeMap::zeros(set.width(), set.height(), channels);
    let radius = (KERNEL_RADIUS_SIGMAS * sigma).ceil() as i64;
    let inv_two_var = 1.0 / (2.0 * sigma * sigma);
    // kernel is shared by every minutia
    let side = (2 * radius + 1) as usize;
    let mut kernel = Vec::with_capacity(side * side);
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let d2 = (dx * dx + dy * dy) as f64;
            kernel.push(T::of((-d2 * inv_two_var).exp()));
        }
    }

    for p in set.points() {
        let c = p.channel(channels);
        let (row, col) = p.pixel();
        for dy in -radius..=radius {
            let r = row + dy;
            if r < 0 || r >= h {
                continue;
            }
            for dx in -radius..=radius {
                let cc = col + dx;
                if cc < 0 || cc >= w {
                    continue;
                }
                let k = kernel[((dy + radius) as usize) * side + (dx + radius) as usize];
                let cell = map.get_mut(c, r as usize, cc as usize);
                if k > *cell {
                    *cell = k;
                }
            }
        }
    }
    for v in &mut map.data {
        *v = v.max(T::zero()).min(T::one());
    }
    Ok(map)
}

/// Orientation reported for a recovered hot-spot: the center of its
/// channel's angular bin.
pub fn channel_midpoint(channel: usize, channels: usize) -> f64 {
    match (channels, channel) {
        (1, _) => 180.0,
        (_, 0) => 90.0,
        _ => 270.0,
    }
}

/// Recover minutiae from a heatmap as the strict 8-neighborhood local
/// maxima with value at least `peak_threshold`.
pub fn recover_minutiae<T: Scalar>(map: &MinutiaeMap<T>, peak_threshold: f64) -> Result<MinutiaeSet> {
    if !(peak_threshold > 0.0 && peak_threshold <= 1.0) {
        return Err(Error::Config(format!(
            "peak threshold must lie in (0, 1], got {peak_threshold}"
        )));
    }
    let (w, h) = (map.width(), map.height());
    let threshold = T::of(peak_threshold);
    let mut points = Vec::new();
    for c in 0..map.channels() {
        for row in 0..h {
            for col in 0..w {
                let v = map.get(c, row, col);
                if v < threshold {
                    continue;
                }
                let mut is_peak = true;
                'nb: for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        if dx == 0 && dy == 0 {
                            continue;
                        }
                        let (r, cc) = (row as i64 + dy, col as i64 + dx);
                        if r < 0 || cc < 0 || r >= h as i64 || cc >= w as i64 {
                            continue;
                        }
                        if map.get(c, r as usize, cc as usize) >= v {
                            is_peak = false;
                            break 'nb;
                        }
                    }
                }
                if is_peak {
                    points.push(Minutia::new(
                        col as f64,
                        row as f64,
                        channel_midpoint(c, map.channels()),
                    ));
                }
            }
        }
    }
    MinutiaeSet::new(w, h, points)
}

/// Serialize to the `MNT` text template format.
pub fn encode_minutiae(set: &MinutiaeSet) -> String {
    let mut out = format!("MNT {} {} {}\n", set.width(), set.height(), set.len());
    for p in set.points() {
        let _ = writeln!(out, "{} {} {}", p.x, p.y, p.theta());
    }
    out
}

/// Parse the `MNT` text template format. Errors carry 1-based line numbers.
pub fn parse_minutiae(text: &str) -> Result<MinutiaeSet> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "empty minutiae file".into(),
    })?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 4 || fields[0] != "MNT" {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected `MNT <width> <height> <count>`, found {header:?}"),
        });
    }
    let header_int = |s: &str, what: &str| {
        s.parse::<usize>().map_err(|_| Error::Parse {
            line: 1,
            message: format!("invalid {what} {s:?}"),
        })
    };
    let width = header_int(fields[1], "width")?;
    let height = header_int(fields[2], "height")?;
    let count = header_int(fields[3], "minutiae count")?;

    let mut points = Vec::with_capacity(count);
    for (line, row) in lines {
        if row.is_empty() {
            continue;
        }
        if points.len() == count {
            return Err(Error::Parse {
                line,
                message: format!("header declares {count} minutiae but more rows follow"),
            });
        }
        let vals: Vec<&str> = row.split_whitespace().collect();
        if vals.len() != 3 {
            return Err(Error::Parse {
                line,
                message: format!("expected `<x> <y> <theta>`, found {row:?}"),
            });
        }
        let mut nums = [0.0f64; 3];
        for (slot, s) in nums.iter_mut().zip(&vals) {
            *slot = s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Parse {
                line,
                message: format!("invalid number {s:?}"),
            })?;
        }
        let [x, y, theta] = nums;
        if x < 0.0 || y < 0.0 || x >= width as f64 || y >= height as f64 {
            return Err(Error::Parse {
                line,
                message: format!("minutia (x={x}, y={y}) outside the {width}x{height} frame"),
            });
        }
        points.push(Minutia::new(x, y, theta));
    }
    if points.len() != count {
        return Err(Error::Parse {
            line: text.lines().count().max(1),
            message: format!("header declares {count} minutiae but {} rows found", points.len()),
        });
    }
    MinutiaeSet::new(width, height, points)
}

pub fn write_minutiae_file(set: &MinutiaeSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_minutiae(set)).map_err(|e| Error::io(path, e))
}

pub fn read_minutiae_file(path: impl AsRef<Path>) -> Result<MinutiaeSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_minutiae(&text)
}

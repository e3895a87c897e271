//! Multilayer frame buffer and the graphics primitives behind the screen
//! instructions.
//!
//! Coordinates have their origin at the top-left corner, x grows rightward
//! and y downward. Every primitive clips against the screen: pixels outside
//! it are never read or written, so off-screen frames are harmless no-ops.

mod font;

use std::f64::consts::PI;

use serde::Serialize;
use thiserror::Error;

use crate::machine::{Endianness, MemoryError, Ram};

pub use font::glyph;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScreenError {
    #[error("layer {layer} does not exist (screen has {count})")]
    BadLayer { layer: usize, count: usize },
    #[error("a polygon needs at least 3 edges, got {0}")]
    BadShape(i64),
    #[error("bad parameter: {0}")]
    BadParameter(String),
    #[error("frames differ in size: {0}x{1} vs {2}x{3}")]
    SizeMismatch(i64, i64, i64, i64),
    #[error("no glyph for character code {0}")]
    UnsupportedGlyph(i64),
    #[error(transparent)]
    Memory(#[from] MemoryError),
}

/// RGBA8888 pixel stored as 0xRRGGBBAA. Alpha 0 is transparent.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize)]
pub struct Pixel(pub u32);

impl Pixel {
    pub const TRANSPARENT: Pixel = Pixel(0);

    pub fn rgba(r: u8, g: u8, b: u8, a: u8) -> Pixel {
        Pixel(u32::from_be_bytes([r, g, b, a]))
    }

    pub fn channels(self) -> [u8; 4] {
        self.0.to_be_bytes()
    }

    pub fn alpha(self) -> u8 {
        self.0 as u8
    }
}

/// Named colors accepted by the assembler wherever a literal may appear.
pub const NAMED_COLORS: &[(&str, u32)] = &[
    ("BLACK", 0x0000_00FF),
    ("WHITE", 0xFFFF_FFFF),
    ("RED", 0xFF00_00FF),
    ("GREEN", 0x00FF_00FF),
    ("BLUE", 0x0000_FFFF),
    ("YELLOW", 0xFFFF_00FF),
    ("CYAN", 0x00FF_FFFF),
    ("MAGENTA", 0xFF00_FFFF),
    ("GRAY", 0x8080_80FF),
    ("ORANGE", 0xFFA5_00FF),
    ("TRANSPARENT", 0x0000_0000),
];

pub fn named_color(name: &str) -> Option<u32> {
    NAMED_COLORS.iter().find(|(n, _)| n.eq_ignore_ascii_case(name)).map(|(_, v)| *v)
}

/// Rectangular region on one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Frame {
    pub x: i64,
    pub y: i64,
    pub width: i64,
    pub height: i64,
    pub layer: usize,
}

impl Frame {
    pub fn new(x: i64, y: i64, width: i64, height: i64, layer: usize) -> Frame {
        Frame { x, y, width: width.max(0), height: height.max(0), layer }
    }

    fn cells(&self) -> impl Iterator<Item = (i64, i64)> {
        let (w, h) = (self.width, self.height);
        (0..h).flat_map(move |j| (0..w).map(move |i| (i, j)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vram {
    width: u32,
    height: u32,
    layers: Vec<Vec<Pixel>>,
}

impl Vram {
    pub fn new(width: u32, height: u32, layers: usize) -> Vram {
        Vram { width, height, layers: vec![vec![Pixel::TRANSPARENT; (width * height) as usize]; layers] }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn layer(&self, layer: usize) -> &[Pixel] {
        &self.layers[layer]
    }

    fn check_layer(&self, layer: usize) -> Result<(), ScreenError> {
        if layer < self.layers.len() {
            Ok(())
        } else {
            Err(ScreenError::BadLayer { layer, count: self.layers.len() })
        }
    }

    fn index(&self, x: i64, y: i64) -> Option<usize> {
        (x >= 0 && y >= 0 && x < i64::from(self.width) && y < i64::from(self.height))
            .then(|| (y as usize) * self.width as usize + x as usize)
    }

    pub fn get(&self, layer: usize, x: i64, y: i64) -> Option<Pixel> {
        self.index(x, y).and_then(|i| self.layers.get(layer).map(|l| l[i]))
    }

    /// Clipped write; returns whether the pixel was on screen.
    pub fn put(&mut self, layer: usize, x: i64, y: i64, p: Pixel) -> bool {
        match self.index(x, y) {
            Some(i) => {
                self.layers[layer][i] = p;
                true
            }
            None => false,
        }
    }

    /// Number of non-transparent pixels on a layer.
    pub fn painted(&self, layer: usize) -> usize {
        self.layers[layer].iter().filter(|p| p.alpha() != 0).count()
    }

    pub fn layer_crc(&self, layer: usize) -> u32 {
        let mut h = crc32fast::Hasher::new();
        for p in &self.layers[layer] {
            h.update(&p.0.to_be_bytes());
        }
        h.finalize()
    }

    pub fn layer_crcs(&self) -> Vec<u32> {
        (0..self.layers.len()).map(|l| self.layer_crc(l)).collect()
    }

    fn snapshot(&self, f: &Frame) -> Vec<Option<Pixel>> {
        f.cells().map(|(i, j)| self.get(f.layer, f.x + i, f.y + j)).collect()
    }

    fn fill(&mut self, f: &Frame, p: Pixel) {
        for (i, j) in f.cells() {
            self.put(f.layer, f.x + i, f.y + j, p);
        }
    }

    // ---- drawing ---------------------------------------------------------

    /// Axis-aligned filled rectangle (STF forms 1-3).
    pub fn set_frame(&mut self, f: Frame, color: Pixel) -> Result<(), ScreenError> {
        self.check_layer(f.layer)?;
        self.fill(&f, color);
        Ok(())
    }

    /// Filled rectangle rotated about its center (STF form 4).
    pub fn set_rotated_frame(&mut self, f: Frame, angle_deg: i64, color: Pixel) -> Result<(), ScreenError> {
        self.check_layer(f.layer)?;
        if angle_deg.rem_euclid(360) == 0 {
            self.fill(&f, color);
            return Ok(());
        }
        let rot = Rotation::new(f, angle_deg);
        for (px, py) in rot.destination_pixels() {
            if rot.source_of(px, py).is_some() {
                self.put(f.layer, px, py, color);
            }
        }
        Ok(())
    }

    /// Regular polygon (STF form 5). The polygon's circumscribed square has
    /// its top-left corner at (x, y); its circumradius follows from the edge
    /// length. Pixels within one pixel of an edge take the border color.
    #[allow(clippy::too_many_arguments)]
    pub fn set_polygon(
        &mut self,
        x: i64,
        y: i64,
        edges: i64,
        edge_width: i64,
        angle_deg: i64,
        interior: Pixel,
        border: Pixel,
        layer: usize,
    ) -> Result<(), ScreenError> {
        self.check_layer(layer)?;
        if edges < 3 {
            return Err(ScreenError::BadShape(edges));
        }
        if edge_width <= 0 {
            return Ok(());
        }
        let n = edges as f64;
        let radius = edge_width as f64 / (2.0 * (PI / n).sin());
        let (cx, cy) = (x as f64 + radius, y as f64 + radius);
        let start = (angle_deg as f64).to_radians() - PI / 2.0;
        let vertices: Vec<(f64, f64)> = (0..edges)
            .map(|k| {
                let a = start + 2.0 * PI * k as f64 / n;
                (cx + radius * a.cos(), cy + radius * a.sin())
            })
            .collect();
        let span = radius.ceil() as i64 + 1;
        for py in (cy as i64 - span)..=(cy as i64 + span) {
            for px in (cx as i64 - span)..=(cx as i64 + span) {
                let p = (px as f64 + 0.5, py as f64 + 0.5);
                if !inside_convex(&vertices, p) {
                    continue;
                }
                let edge_distance = (0..vertices.len())
                    .map(|k| segment_distance(p, vertices[k], vertices[(k + 1) % vertices.len()]))
                    .fold(f64::INFINITY, f64::min);
                self.put(layer, px, py, if edge_distance < 1.0 { border } else { interior });
            }
        }
        Ok(())
    }

    pub fn clear_layer(&mut self, layer: usize) -> Result<(), ScreenError> {
        self.check_layer(layer)?;
        self.layers[layer].fill(Pixel::TRANSPARENT);
        Ok(())
    }

    pub fn clear_frame(&mut self, f: Frame) -> Result<(), ScreenError> {
        self.check_layer(f.layer)?;
        self.fill(&f, Pixel::TRANSPARENT);
        Ok(())
    }

    /// Copies a region; the source is read in full before any write.
    pub fn copy_frame(&mut self, src: Frame, dx: i64, dy: i64, dlayer: usize) -> Result<(), ScreenError> {
        self.check_layer(src.layer)?;
        self.check_layer(dlayer)?;
        let pixels = self.snapshot(&src);
        self.paint(&src, dx, dy, dlayer, &pixels);
        Ok(())
    }

    /// Moves a region: the source is read, cleared, then painted at the
    /// destination, so overlapping moves keep the whole image.
    pub fn move_frame(&mut self, src: Frame, dx: i64, dy: i64, dlayer: usize) -> Result<(), ScreenError> {
        self.check_layer(src.layer)?;
        self.check_layer(dlayer)?;
        let pixels = self.snapshot(&src);
        self.fill(&src, Pixel::TRANSPARENT);
        self.paint(&src, dx, dy, dlayer, &pixels);
        Ok(())
    }

    fn paint(&mut self, shape: &Frame, dx: i64, dy: i64, dlayer: usize, pixels: &[Option<Pixel>]) {
        for ((i, j), p) in shape.cells().zip(pixels) {
            if let Some(p) = p {
                self.put(dlayer, dx + i, dy + j, *p);
            }
        }
    }

    /// Exchanges two equal-size regions. Cell pairs with either side off
    /// screen are left alone.
    pub fn swap_frames(&mut self, a: Frame, b: Frame) -> Result<(), ScreenError> {
        self.check_layer(a.layer)?;
        self.check_layer(b.layer)?;
        if (a.width, a.height) != (b.width, b.height) {
            return Err(ScreenError::SizeMismatch(a.width, a.height, b.width, b.height));
        }
        let first = self.snapshot(&a);
        let second = self.snapshot(&b);
        for (((i, j), pa), pb) in a.cells().zip(&first).zip(&second) {
            if let (Some(pa), Some(pb)) = (pa, pb) {
                self.put(a.layer, a.x + i, a.y + j, *pb);
                self.put(b.layer, b.x + i, b.y + j, *pa);
            }
        }
        Ok(())
    }

    /// Rotates a region about its center using nearest-neighbor inverse
    /// mapping. Multiples of 90 degrees map pixel centers exactly.
    pub fn rotate_frame(&mut self, f: Frame, angle_deg: i64) -> Result<(), ScreenError> {
        self.check_layer(f.layer)?;
        if angle_deg.rem_euclid(360) == 0 {
            return Ok(());
        }
        let pixels = self.snapshot(&f);
        self.fill(&f, Pixel::TRANSPARENT);
        let rot = Rotation::new(f, angle_deg);
        for (px, py) in rot.destination_pixels() {
            if let Some((i, j)) = rot.source_of(px, py) {
                if let Some(p) = pixels[(j * f.width + i) as usize] {
                    self.put(f.layer, px, py, p);
                }
            }
        }
        Ok(())
    }

    /// Mirrors a region: axis 0 flips left-right, axis 1 top-bottom.
    pub fn flip_frame(&mut self, f: Frame, axis: i64) -> Result<(), ScreenError> {
        self.check_layer(f.layer)?;
        let pixels = self.snapshot(&f);
        let mirror = |i: i64, j: i64| match axis {
            0 => Ok((f.width - 1 - i, j)),
            1 => Ok((i, f.height - 1 - j)),
            other => Err(ScreenError::BadParameter(format!("flip axis {other} (expected 0 or 1)"))),
        };
        mirror(0, 0)?;
        for (i, j) in f.cells() {
            let (si, sj) = mirror(i, j)?;
            let src = pixels[(sj * f.width + si) as usize];
            let on_screen = self.index(f.x + i, f.y + j).is_some();
            if let (Some(p), true) = (src, on_screen) {
                self.put(f.layer, f.x + i, f.y + j, p);
            }
        }
        Ok(())
    }

    /// Resizes a region by `numerator/denominator` with nearest-neighbor
    /// sampling, anchored at its top-left corner.
    pub fn scale_frame(&mut self, f: Frame, numerator: i64, denominator: i64) -> Result<(), ScreenError> {
        self.check_layer(f.layer)?;
        if numerator <= 0 || denominator <= 0 {
            return Err(ScreenError::BadParameter(format!("scale factor {numerator}/{denominator}")));
        }
        let pixels = self.snapshot(&f);
        self.fill(&f, Pixel::TRANSPARENT);
        let out_w = f.width * numerator / denominator;
        let out_h = f.height * numerator / denominator;
        for j in 0..out_h {
            for i in 0..out_w {
                let (si, sj) = (i * denominator / numerator, j * denominator / numerator);
                if let Some(p) = pixels[(sj * f.width + si) as usize] {
                    self.put(f.layer, f.x + i, f.y + j, p);
                }
            }
        }
        Ok(())
    }

    /// Saves a region to RAM: a width word, a height word, then each pixel
    /// row-major as a 32-bit value packed into RAM words per `endian`.
    /// Off-screen pixels are saved as transparent.
    pub fn save_frame(&self, ram: &mut Ram, address: u64, f: Frame, endian: Endianness) -> Result<(), ScreenError> {
        self.check_layer(f.layer)?;
        let span = ram.span_for(32);
        let total = 2 + (f.width * f.height) as usize * span;
        ram.ensure_span(address, total)?;
        ram.write(address, f.width as u64)?;
        ram.write(address + 1, f.height as u64)?;
        for (k, p) in self.snapshot(&f).into_iter().enumerate() {
            let value = p.unwrap_or_default().0;
            ram.store_value(address + 2 + (k * span) as u64, u64::from(value), 32, endian)?;
        }
        Ok(())
    }

    /// Inverse of [`Vram::save_frame`]: paints the stored image at (x, y).
    pub fn load_frame(
        &mut self,
        ram: &Ram,
        address: u64,
        x: i64,
        y: i64,
        layer: usize,
        endian: Endianness,
    ) -> Result<Frame, ScreenError> {
        self.check_layer(layer)?;
        ram.ensure_span(address, 2)?;
        let width = ram.read(address)?;
        let height = ram.read(address + 1)?;
        let span = ram.span_for(32) as u64;
        let count = width.checked_mul(height).and_then(|c| c.checked_mul(span)).and_then(|c| c.checked_add(2));
        match count.and_then(|c| usize::try_from(c).ok()) {
            Some(c) => ram.ensure_span(address, c)?,
            None => return Err(MemoryError::AddressOutOfRange { address, words: ram.len() }.into()),
        }
        let f = Frame::new(x, y, width as i64, height as i64, layer);
        for (k, (i, j)) in f.cells().enumerate() {
            let (value, _) = ram.load_value(address + 2 + k as u64 * span, 32, endian)?;
            self.put(layer, x + i, y + j, Pixel(value as u32));
        }
        Ok(f)
    }

    /// Draws one character from the bundled font, each font pixel scaled to
    /// a `size`x`size` block. Background pixels are left untouched.
    pub fn draw_char(
        &mut self,
        x: i64,
        y: i64,
        code: i64,
        size: i64,
        color: Pixel,
        layer: usize,
    ) -> Result<(), ScreenError> {
        self.check_layer(layer)?;
        let rows = u8::try_from(code).ok().and_then(glyph).ok_or(ScreenError::UnsupportedGlyph(code))?;
        if size <= 0 {
            return Err(ScreenError::BadParameter(format!("font size {size}")));
        }
        for (r, row) in rows.iter().enumerate() {
            for c in 0..8 {
                if row >> c & 1 == 1 {
                    let block = Frame::new(x + c * size, y + r as i64 * size, size, size, layer);
                    self.fill(&block, color);
                }
            }
        }
        Ok(())
    }

    /// Alpha-over composite of all layers, layer 0 at the bottom, over an
    /// opaque black background.
    pub fn composite(&self) -> CompositeImage {
        let n = (self.width * self.height) as usize;
        let mut rgb = vec![0u8; n * 3];
        for layer in &self.layers {
            for (i, p) in layer.iter().enumerate() {
                let [r, g, b, a] = p.channels();
                if a == 0 {
                    continue;
                }
                for (dst, src) in rgb[i * 3..i * 3 + 3].iter_mut().zip([r, g, b]) {
                    *dst = over(src, *dst, a);
                }
            }
        }
        CompositeImage { width: self.width, height: self.height, rgb }
    }
}

fn over(src: u8, dst: u8, alpha: u8) -> u8 {
    let (s, d, a) = (u32::from(src), u32::from(dst), u32::from(alpha));
    ((s * a + d * (255 - a) + 127) / 255) as u8
}

/// Inverse mapping between a rotated frame and its source cells.
struct Rotation {
    f: Frame,
    cx: f64,
    cy: f64,
    cos: f64,
    sin: f64,
}

impl Rotation {
    fn new(f: Frame, angle_deg: i64) -> Rotation {
        let (cos, sin) = match angle_deg.rem_euclid(360) {
            0 => (1.0, 0.0),
            90 => (0.0, 1.0),
            180 => (-1.0, 0.0),
            270 => (0.0, -1.0),
            a => {
                let r = (a as f64).to_radians();
                (r.cos(), r.sin())
            }
        };
        Rotation {
            f,
            cx: f.x as f64 + f.width as f64 / 2.0,
            cy: f.y as f64 + f.height as f64 / 2.0,
            cos,
            sin,
        }
    }

    fn destination_pixels(&self) -> impl Iterator<Item = (i64, i64)> {
        let (w, h) = (self.f.width as f64, self.f.height as f64);
        let hx = (w * self.cos.abs() + h * self.sin.abs()) / 2.0;
        let hy = (w * self.sin.abs() + h * self.cos.abs()) / 2.0;
        let (x0, x1) = ((self.cx - hx).floor() as i64 - 1, (self.cx + hx).ceil() as i64 + 1);
        let (y0, y1) = ((self.cy - hy).floor() as i64 - 1, (self.cy + hy).ceil() as i64 + 1);
        (y0..=y1).flat_map(move |y| (x0..=x1).map(move |x| (x, y)))
    }

    /// Source cell (column, row) whose center maps onto the destination
    /// pixel, if it lies inside the frame.
    fn source_of(&self, px: i64, py: i64) -> Option<(i64, i64)> {
        let dx = px as f64 + 0.5 - self.cx;
        let dy = py as f64 + 0.5 - self.cy;
        let u = dx * self.cos + dy * self.sin;
        let v = -dx * self.sin + dy * self.cos;
        let i = (u + self.f.width as f64 / 2.0 + 1e-9).floor() as i64;
        let j = (v + self.f.height as f64 / 2.0 + 1e-9).floor() as i64;
        (i >= 0 && j >= 0 && i < self.f.width && j < self.f.height).then_some((i, j))
    }
}

fn inside_convex(vertices: &[(f64, f64)], p: (f64, f64)) -> bool {
    let mut sign = 0.0f64;
    for k in 0..vertices.len() {
        let (a, b) = (vertices[k], vertices[(k + 1) % vertices.len()]);
        let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
        if cross.abs() < 1e-12 {
            continue;
        }
        if sign == 0.0 {
            sign = cross.signum();
        } else if cross.signum() != sign {
            return false;
        }
    }
    true
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (vx, vy) = (b.0 - a.0, b.1 - a.1);
    let len2 = vx * vx + vy * vy;
    let t = if len2 == 0.0 { 0.0 } else { (((p.0 - a.0) * vx + (p.1 - a.1) * vy) / len2).clamp(0.0, 1.0) };
    let (qx, qy) = (a.0 + t * vx, a.1 + t * vy);
    ((p.0 - qx).powi(2) + (p.1 - qy).powi(2)).sqrt()
}

/// Flattened RGB screen image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompositeImage {
    pub width: u32,
    pub height: u32,
    pub rgb: Vec<u8>,
}

impl CompositeImage {
    /// Binary portable pixmap (P6).
    pub fn to_p6(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.rgb);
        out
    }

    pub fn crc(&self) -> u32 {
        crc32fast::hash(&self.rgb)
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = ((y * self.width + x) * 3) as usize;
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }
}

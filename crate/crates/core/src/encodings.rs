//! 2D encodings of a sparse light field: volumetric stack, focal stack,
//! tiled EPI stacks and the strided EPI encoder layer.
//!
//! Tiling index maps, for arm length `A` and `N = 2A + 1`:
//!
//! - tall, `(N*H) x W`: `tall[v*N + k, u] = view(k - A, 0)[v, u]`
//! - wide, `H x (N*W)`: `wide[v, u*N + k] = view(0, k - A)[v, u]`

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{bilinear_sample, Image};
use crate::lightfield::{plus_pattern, SparseLightField, ViewIndex};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StackKind {
    Volumetric,
    Focal,
    TiledEpiTall,
    TiledEpiWide,
    EncodedEpi,
}

impl StackKind {
    pub fn code(self) -> u32 {
        match self {
            StackKind::Volumetric => 0,
            StackKind::Focal => 1,
            StackKind::TiledEpiTall => 2,
            StackKind::TiledEpiWide => 3,
            StackKind::EncodedEpi => 4,
        }
    }

    pub fn from_code(code: u32) -> Option<StackKind> {
        Some(match code {
            0 => StackKind::Volumetric,
            1 => StackKind::Focal,
            2 => StackKind::TiledEpiTall,
            3 => StackKind::TiledEpiWide,
            4 => StackKind::EncodedEpi,
            _ => return None,
        })
    }
}

/// Channels-first real tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedStack {
    kind: StackKind,
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl EncodedStack {
    pub fn new(kind: StackKind, channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::DimensionMismatch(format!(
                "empty stack {channels}x{height}x{width}"
            )));
        }
        if data.len() != channels * height * width {
            return Err(Error::DimensionMismatch(format!(
                "stack {channels}x{height}x{width} needs {} values, got {}",
                channels * height * width,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::DimensionMismatch("non-finite stack value".into()));
        }
        Ok(EncodedStack {
            kind,
            channels,
            height,
            width,
            data,
        })
    }

    pub fn kind(&self) -> StackKind {
        self.kind
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn channel(&self, k: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[k * n..(k + 1) * n]
    }

    /// Channel `k` as a grayscale image.
    pub fn channel_image(&self, k: usize) -> Result<Image> {
        Image::new(self.width, self.height, 1, self.channel(k).to_vec())
    }

    /// Concatenates `other` after `self` along channels.
    pub fn concat(&self, other: &EncodedStack, kind: StackKind) -> Result<EncodedStack> {
        if (self.height, self.width) != (other.height, other.width) {
            return Err(Error::DimensionMismatch(format!(
                "cannot concatenate {}x{} with {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        EncodedStack::new(kind, self.channels + other.channels, self.height, self.width, data)
    }
}

fn planes(img: &Image) -> Vec<Vec<f64>> {
    (0..img.channels()).map(|c| img.channel(c)).collect()
}

/// Stacks the views in `view_order` along channels.
pub fn volumetric_stack(lf: &SparseLightField, view_order: &[ViewIndex]) -> Result<EncodedStack> {
    let mut data = Vec::with_capacity(view_order.len() * lf.width() * lf.height() * lf.channels());
    for &idx in view_order {
        for plane in planes(lf.view(idx)?) {
            data.extend(plane);
        }
    }
    if view_order.is_empty() {
        return Err(Error::InvalidConfig("empty view order".into()));
    }
    EncodedStack::new(
        StackKind::Volumetric,
        view_order.len() * lf.channels(),
        lf.height(),
        lf.width(),
        data,
    )
}

/// Inverse of [`volumetric_stack`] over the full plus pattern.
pub fn lightfield_from_volumetric(
    stack: &EncodedStack,
    view_order: &[ViewIndex],
    arm_length: usize,
    baseline: f64,
) -> Result<SparseLightField> {
    if view_order.is_empty() || stack.channels() % view_order.len() != 0 {
        return Err(Error::DimensionMismatch(format!(
            "{} channels do not split over {} views",
            stack.channels(),
            view_order.len()
        )));
    }
    let c = stack.channels() / view_order.len();
    let (w, h) = (stack.width(), stack.height());
    let mut views = Vec::with_capacity(view_order.len());
    for (k, &idx) in view_order.iter().enumerate() {
        let mut data = vec![0.0; w * h * c];
        for ch in 0..c {
            for (p, v) in stack.channel(k * c + ch).iter().enumerate() {
                data[p * c + ch] = *v;
            }
        }
        views.push((idx, Image::new(w, h, c, data)?));
    }
    SparseLightField::new(arm_length, baseline, views)
}

/// Shift-and-add refocus at `disparity` pixels per unit view offset.
///
/// View `(s, t)` is sampled at `(u - s*d, v - t*d)`, so a fronto-parallel
/// plane with disparity `d = fx*b/Z` comes into focus. Out-of-view samples
/// are left out of the per-pixel mean.
pub fn refocus(lf: &SparseLightField, disparity: f64) -> Image {
    let (w, h, c) = (lf.width(), lf.height(), lf.channels());
    let views: Vec<(ViewIndex, &Image)> = lf.iter().collect();
    let data: Vec<f64> = (0..h)
        .into_par_iter()
        .flat_map_iter(|y| {
            let views = &views;
            (0..w).flat_map(move |x| {
                (0..c).map(move |ch| {
                    // Running mean, exact when all samples agree.
                    let mut mean = 0.0;
                    let mut count = 0usize;
                    for (idx, img) in views {
                        let sx = x as f64 - idx.s as f64 * disparity;
                        let sy = y as f64 - idx.t as f64 * disparity;
                        if let Some(v) = bilinear_sample(img, sx, sy, ch) {
                            count += 1;
                            mean += (v - mean) / count as f64;
                        }
                    }
                    mean
                })
            })
        })
        .collect();
    Image::new(w, h, c, data).expect("refocus preserves dimensions")
}

/// Disparities for the coarser five-plane stack.
pub fn focalstack5_disparities() -> Vec<f64> {
    (0..5).map(|k| k as f64).collect()
}

/// Disparities for the finer nine-plane stack.
pub fn focalstack9_disparities() -> Vec<f64> {
    (0..9).map(|k| 0.5 * k as f64).collect()
}

pub fn focal_stack(lf: &SparseLightField, disparities: &[f64]) -> Result<EncodedStack> {
    if disparities.is_empty() {
        return Err(Error::InvalidConfig("focal stack needs at least one disparity".into()));
    }
    if let Some(d) = disparities.iter().find(|d| !d.is_finite()) {
        return Err(Error::InvalidConfig(format!("non-finite disparity {d}")));
    }
    let mut data = Vec::with_capacity(disparities.len() * lf.width() * lf.height() * lf.channels());
    for &d in disparities {
        for plane in planes(&refocus(lf, d)) {
            data.extend(plane);
        }
    }
    EncodedStack::new(
        StackKind::Focal,
        disparities.len() * lf.channels(),
        lf.height(),
        lf.width(),
        data,
    )
}

/// Mean local variance over 3x3 windows, restricted to pixels whose
/// window lies inside `region` (`x0, y0, x1, y1`, exclusive ends).
pub fn sharpness(channel: &[f64], width: usize, region: (usize, usize, usize, usize)) -> f64 {
    let (x0, y0, x1, y1) = region;
    let mut total = 0.0;
    let mut n = 0usize;
    for y in (y0 + 1)..y1.saturating_sub(1) {
        for x in (x0 + 1)..x1.saturating_sub(1) {
            let mut s = 0.0;
            let mut s2 = 0.0;
            for dy in 0..3 {
                for dx in 0..3 {
                    let v = channel[(y + dy - 1) * width + x + dx - 1];
                    s += v;
                    s2 += v * v;
                }
            }
            let m = s / 9.0;
            total += s2 / 9.0 - m * m;
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        total / n as f64
    }
}

/// Horizontal EPIs (one `N x W` image per row) and vertical EPIs (one
/// `H x N` image per column).
#[derive(Clone, Debug, PartialEq)]
pub struct Epis {
    pub arm_length: usize,
    pub horizontal: Vec<Image>,
    pub vertical: Vec<Image>,
}

pub fn extract_epis(lf: &SparseLightField) -> Result<Epis> {
    let a = lf.arm_length() as i32;
    let n = lf.views_per_arm();
    let (w, h, c) = (lf.width(), lf.height(), lf.channels());
    let horiz: Vec<&Image> = (-a..=a).map(|s| lf.view(ViewIndex::new(s, 0))).collect::<Result<_>>()?;
    let vert: Vec<&Image> = (-a..=a).map(|t| lf.view(ViewIndex::new(0, t))).collect::<Result<_>>()?;
    let mut horizontal = Vec::with_capacity(h);
    for v in 0..h {
        let mut data = Vec::with_capacity(n * w * c);
        for img in &horiz {
            data.extend_from_slice(&img.data()[v * w * c..(v + 1) * w * c]);
        }
        horizontal.push(Image::new(w, n, c, data)?);
    }
    let mut vertical = Vec::with_capacity(w);
    for u in 0..w {
        let mut data = Vec::with_capacity(n * h * c);
        for v in 0..h {
            for img in &vert {
                for ch in 0..c {
                    data.push(img.get(u, v, ch));
                }
            }
        }
        vertical.push(Image::new(n, h, c, data)?);
    }
    Ok(Epis {
        arm_length: lf.arm_length(),
        horizontal,
        vertical,
    })
}

/// Tall and wide tilings of the EPIs (see module docs for the index maps).
pub fn tile_epis(epis: &Epis) -> Result<(Image, Image)> {
    let h = epis.horizontal.len();
    let w = epis.vertical.len();
    let n = 2 * epis.arm_length + 1;
    let c = epis
        .horizontal
        .first()
        .map(|e| e.channels())
        .ok_or_else(|| Error::DimensionMismatch("no EPIs".into()))?;
    for e in &epis.horizontal {
        if e.dims() != (w, n, c) {
            return Err(Error::DimensionMismatch(format!(
                "horizontal EPI is {:?}, expected {:?}",
                e.dims(),
                (w, n, c)
            )));
        }
    }
    for e in &epis.vertical {
        if e.dims() != (n, h, c) {
            return Err(Error::DimensionMismatch(format!(
                "vertical EPI is {:?}, expected {:?}",
                e.dims(),
                (n, h, c)
            )));
        }
    }
    let mut tall = Vec::with_capacity(n * h * w * c);
    for e in &epis.horizontal {
        tall.extend_from_slice(e.data());
    }
    let mut wide = vec![0.0; h * n * w * c];
    for (u, e) in epis.vertical.iter().enumerate() {
        for v in 0..h {
            for k in 0..n {
                for ch in 0..c {
                    wide[(v * n * w + u * n + k) * c + ch] = e.get(k, v, ch);
                }
            }
        }
    }
    Ok((Image::new(w, n * h, c, tall)?, Image::new(n * w, h, c, wide)?))
}

pub fn untile_epis(tall: &Image, wide: &Image, arm_length: usize) -> Result<Epis> {
    let n = 2 * arm_length + 1;
    let (w, th, c) = tall.dims();
    let (ww, h, wc) = wide.dims();
    if th % n != 0 || ww % n != 0 || th / n != h || ww / n != w || c != wc {
        return Err(Error::DimensionMismatch(format!(
            "tilings {}x{} and {}x{} are inconsistent for N={n}",
            th, w, h, ww
        )));
    }
    let horizontal = (0..h)
        .map(|v| Image::new(w, n, c, tall.data()[v * n * w * c..(v + 1) * n * w * c].to_vec()))
        .collect::<Result<Vec<_>>>()?;
    let vertical = (0..w)
        .map(|u| {
            let mut data = Vec::with_capacity(n * h * c);
            for v in 0..h {
                for k in 0..n {
                    for ch in 0..c {
                        data.push(wide.get(u * n + k, v, ch));
                    }
                }
            }
            Image::new(n, h, c, data)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Epis {
        arm_length,
        horizontal,
        vertical,
    })
}

/// Rebuilds the light field from its EPIs. The central view appears in
/// both tilings; they must agree.
pub fn lightfield_from_epis(epis: &Epis, baseline: f64) -> Result<SparseLightField> {
    let a = epis.arm_length as i32;
    let n = 2 * epis.arm_length + 1;
    let h = epis.horizontal.len();
    let w = epis.vertical.len();
    let c = epis
        .horizontal
        .first()
        .map(|e| e.channels())
        .ok_or_else(|| Error::DimensionMismatch("no EPIs".into()))?;
    let mut views = Vec::with_capacity(2 * n - 1);
    for k in 0..n {
        let mut data = Vec::with_capacity(w * h * c);
        for e in &epis.horizontal {
            data.extend_from_slice(&e.data()[k * w * c..(k + 1) * w * c]);
        }
        views.push((ViewIndex::new(k as i32 - a, 0), Image::new(w, h, c, data)?));
    }
    for k in 0..n {
        let mut data = vec![0.0; w * h * c];
        for (u, e) in epis.vertical.iter().enumerate() {
            for v in 0..h {
                for ch in 0..c {
                    data[(v * w + u) * c + ch] = e.get(k, v, ch);
                }
            }
        }
        let img = Image::new(w, h, c, data)?;
        if k as i32 == a {
            if &img != &views[epis.arm_length].1 {
                return Err(Error::InvalidLightField(
                    "central view differs between the two EPI directions".into(),
                ));
            }
            continue;
        }
        views.push((ViewIndex::new(0, k as i32 - a), img));
    }
    SparseLightField::new(epis.arm_length, baseline, views)
}

/// Disparity `d` such that EPI row `k + 1` at `x` matches row `k` at
/// `x + d`, found by minimizing the summed squared difference over all
/// adjacent row pairs. Samples use Catmull-Rom interpolation; the search
/// covers `[-max_disparity, max_disparity]`.
pub fn epi_slope(epis: &[Image], max_disparity: f64) -> Option<f64> {
    let cost = |d: f64| -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for e in epis {
            let (w, rows, c) = e.dims();
            for k in 0..rows.saturating_sub(1) {
                for x in 0..w {
                    let xs = x as f64 + d;
                    for ch in 0..c {
                        if let Some(v) = catmull_rom_row(e, k, xs, ch) {
                            let r = e.get(x, k + 1, ch) - v;
                            sum += r * r;
                            n += 1;
                        }
                    }
                }
            }
        }
        if n == 0 {
            f64::INFINITY
        } else {
            sum / n as f64
        }
    };
    let step = 0.05;
    let steps = (max_disparity / step).ceil() as i64;
    let mut best = (f64::INFINITY, 0.0);
    for i in -steps..=steps {
        let d = i as f64 * step;
        let c = cost(d);
        if c < best.0 {
            best = (c, d);
        }
    }
    if !best.0.is_finite() {
        return None;
    }
    // Golden-section refinement inside the bracketing grid cells.
    let (mut lo, mut hi) = (best.1 - step, best.1 + step);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut a = hi - g * (hi - lo);
    let mut b = lo + g * (hi - lo);
    let (mut fa, mut fb) = (cost(a), cost(b));
    for _ in 0..40 {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - g * (hi - lo);
            fa = cost(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + g * (hi - lo);
            fb = cost(b);
        }
    }
    Some(0.5 * (lo + hi))
}

fn catmull_rom_row(e: &Image, row: usize, x: f64, c: usize) -> Option<f64> {
    let w = e.width();
    if w < 4 || !(x >= 1.0 && x <= (w - 2) as f64) {
        return None;
    }
    let i = (x.floor() as usize).min(w - 3);
    let t = x - i as f64;
    let p = |j: usize| e.get(j, row, c);
    let (p0, p1, p2, p3) = (p(i - 1), p(i), p(i + 1), p(i + 2));
    Some(
        p1 + 0.5
            * t
            * (p2 - p0 + t * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 + t * (3.0 * (p1 - p2) + p3 - p0))),
    )
}

/// Kernels and biases of the two EPI encoder branches.
///
/// Kernels are laid out `[c_out][c_in][ky][kx]` with `ky, kx < n`.
#[derive(Clone, Debug, PartialEq)]
pub struct EpiEncoderWeights {
    pub n: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub tall_kernel: Vec<f64>,
    pub tall_bias: Vec<f64>,
    pub wide_kernel: Vec<f64>,
    pub wide_bias: Vec<f64>,
}

pub const DEFAULT_ENCODER_CHANNELS: usize = 8;

impl EpiEncoderWeights {
    pub fn new(
        n: usize,
        c_in: usize,
        c_out: usize,
        tall_kernel: Vec<f64>,
        tall_bias: Vec<f64>,
        wide_kernel: Vec<f64>,
        wide_bias: Vec<f64>,
    ) -> Result<Self> {
        let k = c_out * c_in * n * n;
        if n % 2 == 0 || c_in == 0 || c_out == 0 {
            return Err(Error::DimensionMismatch(format!(
                "encoder needs odd N and nonzero channels, got N={n} c_in={c_in} c_out={c_out}"
            )));
        }
        if tall_kernel.len() != k || wide_kernel.len() != k || tall_bias.len() != c_out || wide_bias.len() != c_out {
            return Err(Error::DimensionMismatch("encoder weight lengths do not match header".into()));
        }
        let all = tall_kernel.iter().chain(&tall_bias).chain(&wide_kernel).chain(&wide_bias);
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::DimensionMismatch("non-finite encoder weight".into()));
        }
        Ok(EpiEncoderWeights {
            n,
            c_in,
            c_out,
            tall_kernel,
            tall_bias,
            wide_kernel,
            wide_bias,
        })
    }

    pub fn zeros(n: usize, c_in: usize, c_out: usize) -> Result<Self> {
        let k = c_out * c_in * n * n;
        Self::new(n, c_in, c_out, vec![0.0; k], vec![0.0; c_out], vec![0.0; k], vec![0.0; c_out])
    }

    /// One output per input channel, each picking the central-view sample.
    pub fn identity_picking(n: usize, c_in: usize) -> Result<Self> {
        let mut w = Self::zeros(n, c_in, c_in)?;
        let a = n / 2;
        for o in 0..c_in {
            let i = w.index(o, o, a, a);
            w.tall_kernel[i] = 1.0;
            w.wide_kernel[i] = 1.0;
        }
        Ok(w)
    }

    /// Uniform Glorot-style weights, zero bias.
    pub fn seeded_random(n: usize, c_in: usize, c_out: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = c_out * c_in * n * n;
        let limit = (6.0 / ((c_in + c_out) * n * n) as f64).sqrt();
        let mut draw = |len: usize| (0..len).map(|_| rng.random_range(-limit..limit)).collect::<Vec<f64>>();
        let tall = draw(k);
        let wide = draw(k);
        Self::new(n, c_in, c_out, tall, vec![0.0; c_out], wide, vec![0.0; c_out])
    }

    #[inline]
    pub fn index(&self, o: usize, i: usize, ky: usize, kx: usize) -> usize {
        ((o * self.c_in + i) * self.n + ky) * self.n + kx
    }

    pub fn scaled(&self, alpha: f64) -> EpiEncoderWeights {
        let s = |v: &Vec<f64>| v.iter().map(|x| alpha * x).collect();
        EpiEncoderWeights {
            tall_kernel: s(&self.tall_kernel),
            tall_bias: s(&self.tall_bias),
            wide_kernel: s(&self.wide_kernel),
            wide_bias: s(&self.wide_bias),
            ..self.clone()
        }
    }
}

fn check_encoder(lf: &SparseLightField, weights: &EpiEncoderWeights) -> Result<()> {
    if weights.n != lf.views_per_arm() || weights.c_in != lf.channels() {
        return Err(Error::DimensionMismatch(format!(
            "encoder expects N={} with {} channels, light field has N={} with {}",
            weights.n,
            weights.c_in,
            lf.views_per_arm(),
            lf.channels()
        )));
    }
    Ok(())
}

/// Pre-activation responses of both branches, `[branch][o][y][x]`.
fn encoder_preactivation(lf: &SparseLightField, weights: &EpiEncoderWeights) -> Result<Vec<f64>> {
    check_encoder(lf, weights)?;
    let a = lf.arm_length() as i32;
    let n = weights.n;
    let (w, h, c) = (lf.width(), lf.height(), lf.channels());
    let horiz: Vec<&Image> = (-a..=a).map(|s| lf.view(ViewIndex::new(s, 0))).collect::<Result<_>>()?;
    let vert: Vec<&Image> = (-a..=a).map(|t| lf.view(ViewIndex::new(0, t))).collect::<Result<_>>()?;
    let a = a as isize;
    let plane = w * h;
    let out: Vec<f64> = (0..2 * weights.c_out)
        .into_par_iter()
        .flat_map_iter(|bo| {
            let (tall, o) = (bo < weights.c_out, bo % weights.c_out);
            let (kernel, bias) = if tall {
                (&weights.tall_kernel, weights.tall_bias[o])
            } else {
                (&weights.wide_kernel, weights.wide_bias[o])
            };
            let (horiz, vert) = (&horiz, &vert);
            let mut acc = vec![bias; plane];
            for i in 0..c {
                for ky in 0..n {
                    for kx in 0..n {
                        let k = kernel[weights.index(o, i, ky, kx)];
                        if k == 0.0 {
                            continue;
                        }
                        // Tall: rows of block y are views (ky - A, 0), columns
                        // run over x + kx - A. Wide is the transpose.
                        let (img, dx, dy) = if tall {
                            (horiz[ky], kx as isize - a, 0)
                        } else {
                            (vert[kx], 0, ky as isize - a)
                        };
                        for y in 0..h {
                            let sy = y as isize + dy;
                            if sy < 0 || sy >= h as isize {
                                continue;
                            }
                            for x in 0..w {
                                let sx = x as isize + dx;
                                if sx < 0 || sx >= w as isize {
                                    continue;
                                }
                                acc[y * w + x] += k * img.get(sx as usize, sy as usize, i);
                            }
                        }
                    }
                }
            }
            acc
        })
        .collect();
    Ok(out)
}

/// Strided EPI convolution on both tilings followed by ReLU; tall
/// branch channels come first.
pub fn encode_epi_stack(lf: &SparseLightField, weights: &EpiEncoderWeights) -> Result<EncodedStack> {
    let data = encoder_preactivation(lf, weights)?
        .into_iter()
        .map(|v| v.max(0.0))
        .collect();
    EncodedStack::new(StackKind::EncodedEpi, 2 * weights.c_out, lf.height(), lf.width(), data)
}

/// Gradient of `sum(upstream * encode_epi_stack(lf, w))` with respect to
/// the weights. The ReLU derivative at zero is taken as 0.
pub fn encode_epi_stack_weight_gradient(
    lf: &SparseLightField,
    weights: &EpiEncoderWeights,
    upstream: &[f64],
) -> Result<EpiEncoderWeights> {
    let pre = encoder_preactivation(lf, weights)?;
    if upstream.len() != pre.len() {
        return Err(Error::DimensionMismatch(format!(
            "upstream gradient has {} values, expected {}",
            upstream.len(),
            pre.len()
        )));
    }
    let a = lf.arm_length() as isize;
    let n = weights.n;
    let (w, h, c) = (lf.width(), lf.height(), lf.channels());
    let plane = w * h;
    let mut grad = EpiEncoderWeights::zeros(n, c, weights.c_out)?;
    for bo in 0..2 * weights.c_out {
        let (tall, o) = (bo < weights.c_out, bo % weights.c_out);
        let g: Vec<f64> = (0..plane)
            .map(|p| if pre[bo * plane + p] > 0.0 { upstream[bo * plane + p] } else { 0.0 })
            .collect();
        let gb: f64 = g.iter().sum();
        for i in 0..c {
            for ky in 0..n {
                for kx in 0..n {
                    let (img, dx, dy) = if tall {
                        (lf.view(ViewIndex::new(ky as i32 - a as i32, 0))?, kx as isize - a, 0)
                    } else {
                        (lf.view(ViewIndex::new(0, kx as i32 - a as i32))?, 0, ky as isize - a)
                    };
                    let mut s = 0.0;
                    for y in 0..h {
                        let sy = y as isize + dy;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        for x in 0..w {
                            let sx = x as isize + dx;
                            if sx >= 0 && sx < w as isize {
                                s += g[y * w + x] * img.get(sx as usize, sy as usize, i);
                            }
                        }
                    }
                    let idx = grad.index(o, i, ky, kx);
                    if tall {
                        grad.tall_kernel[idx] = s;
                    } else {
                        grad.wide_kernel[idx] = s;
                    }
                }
            }
        }
        if tall {
            grad.tall_bias[o] = gb;
        } else {
            grad.wide_bias[o] = gb;
        }
    }
    Ok(grad)
}

/// Depth-network input: the encoded EPI stack alone.
pub fn depth_input(lf: &SparseLightField, weights: &EpiEncoderWeights) -> Result<EncodedStack> {
    encode_epi_stack(lf, weights)
}

/// Pose-network input: the encoded EPI stack followed by the raw views of
/// the inner plus (centre and its four neighbours, when present).
pub fn pose_input(lf: &SparseLightField, weights: &EpiEncoderWeights) -> Result<EncodedStack> {
    let epi = encode_epi_stack(lf, weights)?;
    let inner: Vec<ViewIndex> = plus_pattern(1).into_iter().filter(|v| lf.contains(*v)).collect();
    let vol = volumetric_stack(lf, &inner)?;
    epi.concat(&vol, StackKind::EncodedEpi)
}

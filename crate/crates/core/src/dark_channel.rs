//! Dark channel and the transmission estimate derived from it.

use std::collections::VecDeque;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{Image, Rgb, ScalarMap};

/// Window and divisor guard for the dark-channel transmission estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcpParams {
    /// Side of the square minimum window. Odd, at least 3.
    pub patch_size: usize,
    /// Lower clamp applied to each airlight channel before dividing by it.
    pub airlight_floor: f64,
}

impl Default for DcpParams {
    fn default() -> Self {
        DcpParams {
            patch_size: 7,
            airlight_floor: 1.0 / 255.0,
        }
    }
}

impl DcpParams {
    pub fn validate(&self) -> Result<()> {
        check_window(self.patch_size)?;
        if !(self.airlight_floor > 0.0 && self.airlight_floor <= 0.1) {
            return Err(Error::config(format!(
                "airlight_floor must be in (0, 0.1], got {}",
                self.airlight_floor
            )));
        }
        Ok(())
    }
}

fn check_window(size: usize) -> Result<()> {
    if size < 3 || size.is_multiple_of(2) {
        return Err(Error::config(format!("window size must be odd and >= 3, got {size}")));
    }
    Ok(())
}

/// `out[i] = min(input[i - radius ..= i + radius])`, window clipped at both ends.
fn sliding_min(input: &[f64], radius: usize, out: &mut [f64]) {
    let n = input.len();
    let mut window: VecDeque<usize> = VecDeque::with_capacity(2 * radius + 1);
    let mut next = 0;
    for i in 0..n {
        let hi = (i + radius).min(n - 1);
        while next <= hi {
            while let Some(&back) = window.back() {
                if input[back] >= input[next] {
                    window.pop_back();
                } else {
                    break;
                }
            }
            window.push_back(next);
            next += 1;
        }
        let lo = i.saturating_sub(radius);
        while let Some(&front) = window.front() {
            if front < lo {
                window.pop_front();
            } else {
                break;
            }
        }
        out[i] = input[*window.front().expect("window never empty")];
    }
}

/// Separable square minimum filter of side `2 * radius + 1`.
pub fn min_filter(map: &ScalarMap, radius: usize) -> ScalarMap {
    let (w, h) = (map.width(), map.height());
    if radius == 0 {
        return map.clone();
    }
    let mut rows = vec![0.0; w * h];
    rows.par_chunks_mut(w)
        .zip(map.values().par_chunks(w))
        .for_each(|(out, row)| sliding_min(row, radius, out));

    let mut transposed = vec![0.0; w * h];
    transpose(&rows, w, h, &mut transposed);
    let mut cols = vec![0.0; w * h];
    cols.par_chunks_mut(h)
        .zip(transposed.par_chunks(h))
        .for_each(|(out, col)| sliding_min(col, radius, out));

    let mut out = vec![0.0; w * h];
    transpose(&cols, h, w, &mut out);
    ScalarMap::new(w, h, out).expect("dimensions preserved")
}

/// Separable square maximum filter of side `2 * radius + 1`.
pub fn max_filter(map: &ScalarMap, radius: usize) -> ScalarMap {
    min_filter(&map.map(|v| -v), radius).map(|v| -v)
}

fn transpose(src: &[f64], w: usize, h: usize, dst: &mut [f64]) {
    for y in 0..h {
        for x in 0..w {
            dst[x * h + y] = src[y * w + x];
        }
    }
}

/// Per-pixel minimum over the three channels.
pub fn channel_min(img: &Image) -> ScalarMap {
    let data = img
        .pixels()
        .iter()
        .map(|p| p[0].min(p[1]).min(p[2]))
        .collect();
    ScalarMap::new(img.width(), img.height(), data).expect("dimensions preserved")
}

/// Minimum over channels and over the `patch_size` window centered on each pixel.
pub fn dark_channel(img: &Image, patch_size: usize) -> Result<ScalarMap> {
    check_window(patch_size)?;
    Ok(min_filter(&channel_min(img), patch_size / 2))
}

fn floored(airlight: Rgb, floor: f64) -> Rgb {
    [
        airlight[0].max(floor),
        airlight[1].max(floor),
        airlight[2].max(floor),
    ]
}

/// `1 - min_c min_{y in window} I^c(y) / A^c`, clamped to `[0, 1]`.
pub fn estimate_transmission_dcp(img: &Image, airlight: Rgb, params: &DcpParams) -> Result<ScalarMap> {
    params.validate()?;
    let a = floored(airlight, params.airlight_floor);
    let ratios = img
        .pixels()
        .iter()
        .map(|p| (p[0] / a[0]).min(p[1] / a[1]).min(p[2] / a[2]))
        .collect();
    let ratios = ScalarMap::new(img.width(), img.height(), ratios)?;
    Ok(min_filter(&ratios, params.patch_size / 2).map(|m| (1.0 - m).clamp(0.0, 1.0)))
}

/// Global airlight color picked from the haziest region: among the
/// `top_fraction` pixels with the brightest dark channel, the one with the
/// largest channel sum.
pub fn estimate_airlight_dcp(img: &Image, dark: &ScalarMap, top_fraction: f64) -> Result<Rgb> {
    dark.matches(img)?;
    if !(top_fraction > 0.0 && top_fraction <= 1.0) {
        return Err(Error::config(format!("top_fraction must be in (0, 1], got {top_fraction}")));
    }
    let n = dark.len();
    let keep = ((n as f64 * top_fraction).ceil() as usize).clamp(1, n);
    let mut order: Vec<usize> = (0..n).collect();
    // brightest first, ties by index
    order.sort_by(|&a, &b| dark.values()[b].total_cmp(&dark.values()[a]).then(a.cmp(&b)));
    let best = order[..keep]
        .iter()
        .copied()
        .max_by(|&a, &b| {
            let sa: f64 = img.pixels()[a].iter().sum();
            let sb: f64 = img.pixels()[b].iter().sum();
            sa.total_cmp(&sb).then(b.cmp(&a))
        })
        .expect("keep >= 1");
    Ok(img.pixels()[best])
}

/// A pixel whose transmission estimate seeds the nearest-neighbor propagation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub x: usize,
    pub y: usize,
    pub t: f64,
}

/// Local maxima of `t_raw` inside a `window`-sized neighborhood, keeping the
/// `top_fraction` highest.
///
/// A pixel qualifies when no other pixel of its window exceeds it, at least
/// one is strictly below it, and no equal pixel of the window precedes it in
/// raster order. Isolated peaks are therefore strict maxima, and a plateau
/// maximum contributes one anchor. A constant map has no maxima; it yields
/// its center pixel instead.
pub fn max_filter_anchor_points(t_raw: &ScalarMap, window: usize, top_fraction: f64) -> Result<Vec<Anchor>> {
    check_window(window)?;
    if !(top_fraction > 0.0 && top_fraction <= 1.0) {
        return Err(Error::config(format!("top_fraction must be in (0, 1], got {top_fraction}")));
    }
    let (w, h) = (t_raw.width(), t_raw.height());
    let r = window / 2;
    let local_max = max_filter(t_raw, r);
    let local_min = min_filter(t_raw, r);

    let mut anchors: Vec<Anchor> = (0..h)
        .into_par_iter()
        .flat_map_iter(|y| {
            let local_max = &local_max;
            let local_min = &local_min;
            (0..w).filter_map(move |x| {
                let v = t_raw.get(x, y);
                if v < local_max.get(x, y) || v <= local_min.get(x, y) {
                    return None;
                }
                // first occurrence of the maximum in raster order wins
                let y0 = y.saturating_sub(r);
                let x0 = x.saturating_sub(r);
                let x1 = (x + r + 1).min(w);
                for yy in y0..=y {
                    let end = if yy == y { x } else { x1 };
                    for xx in x0..end {
                        if t_raw.get(xx, yy) == v {
                            return None;
                        }
                    }
                }
                Some(Anchor { x, y, t: v })
            })
        })
        .collect();

    if anchors.is_empty() {
        let (cx, cy) = (w / 2, h / 2);
        return Ok(vec![Anchor {
            x: cx,
            y: cy,
            t: t_raw.get(cx, cy),
        }]);
    }
    let keep = ((anchors.len() as f64 * top_fraction).ceil() as usize).clamp(1, anchors.len());
    if keep < anchors.len() {
        anchors.sort_by(|a, b| b.t.total_cmp(&a.t).then((a.y, a.x).cmp(&(b.y, b.x))));
        anchors.truncate(keep);
        anchors.sort_by_key(|a| (a.y, a.x));
    }
    Ok(anchors)
}

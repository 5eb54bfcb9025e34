//! Minimal raster line charts for metrics logs and CMC curves. Charts carry
//! axes, a quarter grid and one colour per series; no text is rendered.

use std::fs;
use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{CliError, Result};

pub const WIDTH: u32 = 640;
pub const PANEL_HEIGHT: u32 = 200;
const MARGIN: u32 = 20;

const WHITE: Rgb<u8> = Rgb([255, 255, 255]);
const AXIS: Rgb<u8> = Rgb([40, 40, 40]);
const GRID: Rgb<u8> = Rgb([215, 215, 215]);
pub const PALETTE: [Rgb<u8>; 5] = [
    Rgb([31, 119, 180]),
    Rgb([214, 39, 40]),
    Rgb([44, 160, 44]),
    Rgb([148, 103, 189]),
    Rgb([255, 127, 14]),
];

pub struct Series {
    pub points: Vec<(f64, f64)>,
    pub color: Rgb<u8>,
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, c);
    }
}

/// Bresenham segment.
fn line(img: &mut RgbImage, (mut x0, mut y0): (i64, i64), (x1, y1): (i64, i64), c: Rgb<u8>) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let mut err = dx + dy;
    loop {
        put(img, x0, y0, c);
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

fn finite_range(vals: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = vals
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if lo > hi {
        return None;
    }
    Some(if hi - lo < 1e-12 { (lo - 0.5, hi + 0.5) } else { (lo, hi) })
}

/// Draws one panel spanning rows `top..top + height`. `y_range` fixes the
/// vertical extent; otherwise it spans the finite data. Non-finite points
/// break lines.
pub fn draw_panel(img: &mut RgbImage, top: u32, height: u32, series: &[Series], y_range: Option<(f64, f64)>) {
    let (x0, x1) = (MARGIN as f64, (img.width() - MARGIN) as f64);
    let (y0, y1) = ((top + MARGIN) as f64, (top + height - MARGIN) as f64);
    for q in 0..=4 {
        let f = q as f64 / 4.0;
        let gy = (y0 + f * (y1 - y0)).round() as i64;
        let gx = (x0 + f * (x1 - x0)).round() as i64;
        line(img, (x0 as i64, gy), (x1 as i64, gy), GRID);
        line(img, (gx, y0 as i64), (gx, y1 as i64), GRID);
    }
    line(img, (x0 as i64, y1 as i64), (x1 as i64, y1 as i64), AXIS);
    line(img, (x0 as i64, y0 as i64), (x0 as i64, y1 as i64), AXIS);
    let xr = finite_range(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let yr = y_range.or_else(|| finite_range(series.iter().flat_map(|s| s.points.iter().map(|p| p.1))));
    let (Some((xa, xb)), Some((ya, yb))) = (xr, yr) else {
        return;
    };
    let map = |(x, y): (f64, f64)| {
        let px = x0 + (x - xa) / (xb - xa) * (x1 - x0);
        let py = y1 - (y - ya) / (yb - ya) * (y1 - y0);
        (px.round() as i64, py.round() as i64)
    };
    for s in series {
        let mut prev: Option<(i64, i64)> = None;
        for &p in &s.points {
            if !(p.0.is_finite() && p.1.is_finite()) {
                prev = None;
                continue;
            }
            let q = map(p);
            match prev {
                Some(a) => line(img, a, q, s.color),
                None => put(img, q.0, q.1, s.color),
            }
            prev = Some(q);
        }
    }
}

pub fn canvas(panels: u32) -> RgbImage {
    RgbImage::from_pixel(WIDTH, PANEL_HEIGHT * panels.max(1), WHITE)
}

fn save(img: &RgbImage, out: &Path) -> Result<()> {
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    img.save(out).map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))
}

/// Columns of a metrics log (comment lines skipped, header required).
pub fn read_metrics(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| CliError::Usage("metrics log is empty".into()))?
        .split('\t')
        .map(str::to_string)
        .collect();
    let mut cols = vec![Vec::new(); header.len()];
    for (i, l) in lines.enumerate() {
        let fields: Vec<&str> = l.split('\t').collect();
        if fields.len() != header.len() {
            return Err(CliError::Usage(format!("metrics row {} has {} fields", i + 1, fields.len())));
        }
        for (c, f) in cols.iter_mut().zip(fields) {
            c.push(f.parse::<f64>().map_err(|_| CliError::Usage(format!("bad number {f:?} in metrics row {}", i + 1)))?);
        }
    }
    Ok((header, cols))
}

/// One panel per loss column (`L_r`, `d_loss`, `g_adv`) against `iter`, then
/// one panel with both discriminator accuracies on `[0, 1]`.
pub fn plot_metrics(text: &str, out: &Path) -> Result<()> {
    let (header, cols) = read_metrics(text)?;
    let col = |name: &str| -> Result<&Vec<f64>> {
        header
            .iter()
            .position(|h| h == name)
            .map(|i| &cols[i])
            .ok_or_else(|| CliError::Usage(format!("metrics log has no {name} column")))
    };
    let iter = col("iter")?;
    let xy = |ys: &[f64]| iter.iter().copied().zip(ys.iter().copied()).collect::<Vec<_>>();
    let mut img = canvas(4);
    for (k, name) in ["L_r", "d_loss", "g_adv"].iter().enumerate() {
        let s = Series {
            points: xy(col(name)?),
            color: PALETTE[k],
        };
        draw_panel(&mut img, k as u32 * PANEL_HEIGHT, PANEL_HEIGHT, &[s], None);
    }
    let acc = [
        Series {
            points: xy(col("d_acc_real")?),
            color: PALETTE[3],
        },
        Series {
            points: xy(col("d_acc_fake")?),
            color: PALETTE[4],
        },
    ];
    draw_panel(&mut img, 3 * PANEL_HEIGHT, PANEL_HEIGHT, &acc, Some((0.0, 1.0)));
    save(&img, out)
}

pub fn read_cmc(text: &str) -> Result<Vec<(f64, f64)>> {
    let mut pts = Vec::new();
    for (i, l) in text.lines().enumerate().skip(1) {
        if l.trim().is_empty() {
            continue;
        }
        let (r, a) = l
            .split_once(',')
            .ok_or_else(|| CliError::Usage(format!("CMC line {}: expected rank,accuracy", i + 1)))?;
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("CMC line {}: bad number {s:?}", i + 1)))
        };
        pts.push((parse(r)?, parse(a)?));
    }
    if pts.is_empty() {
        return Err(CliError::Usage("CMC file has no rows".into()));
    }
    Ok(pts)
}

/// Rank-accuracy step curve on `[0, 1]`.
pub fn plot_cmc(curve: &[(f64, f64)], out: &Path) -> Result<()> {
    let mut pts = Vec::with_capacity(2 * curve.len());
    for (i, &(r, a)) in curve.iter().enumerate() {
        if i > 0 {
            pts.push((r, curve[i - 1].1));
        }
        pts.push((r, a));
    }
    let mut img = canvas(2);
    let s = Series {
        points: pts,
        color: PALETTE[0],
    };
    draw_panel(&mut img, 0, 2 * PANEL_HEIGHT, &[s], Some((0.0, 1.0)));
    save(&img, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_endpoints_are_drawn() {
        let mut img = canvas(1);
        line(&mut img, (3, 4), (40, 17), AXIS);
        assert_eq!(*img.get_pixel(3, 4), AXIS);
        assert_eq!(*img.get_pixel(40, 17), AXIS);
    }

    #[test]
    fn metrics_columns_parse_nan() {
        let text = "# ablation=full seed=1\niter\td_loss\n1\tNaN\n2\t0.5\n";
        let (h, c) = read_metrics(text).unwrap();
        assert_eq!(h, vec!["iter", "d_loss"]);
        assert!(c[1][0].is_nan());
        assert_eq!(c[1][1], 0.5);
    }

    #[test]
    fn panel_draws_series_colour() {
        let mut img = canvas(1);
        let s = Series {
            points: vec![(0.0, 0.0), (1.0, 1.0)],
            color: PALETTE[1],
        };
        draw_panel(&mut img, 0, PANEL_HEIGHT, &[s], None);
        assert!(img.pixels().any(|p| *p == PALETTE[1]));
    }

    #[test]
    fn cmc_rows_parse() {
        let pts = read_cmc("rank,accuracy\n1,0.5\n2,1\n").unwrap();
        assert_eq!(pts, vec![(1.0, 0.5), (2.0, 1.0)]);
        assert!(read_cmc("rank,accuracy\n").is_err());
    }
}

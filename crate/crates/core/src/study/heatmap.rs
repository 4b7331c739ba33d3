//! Per-step attribution mass binned by an agent percentile, and a static PNG
//! rendering of it (rows high percentile first, columns steps).

use std::path::Path;

use image::{Rgb, RgbImage};
use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// `mass[b, t] = sum of phi[i, t]` over the agents in percentile bin `b` of
/// `anchor` (bin 0 holds the largest values; ties by lower index).
pub fn bin_step_mass(phi: ArrayView2<'_, f64>, anchor: &[f64], n_bins: usize) -> Result<Array2<f64>> {
    let (n, t) = phi.dim();
    if anchor.len() != n {
        return Err(Error::Shape(format!("{} anchor values for {n} agents", anchor.len())));
    }
    if n_bins == 0 || n_bins > n {
        return Err(Error::invalid(format!("bin count {n_bins} outside 1..={n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| anchor[b].total_cmp(&anchor[a]).then(a.cmp(&b)));
    let mut mass = Array2::zeros((n_bins, t));
    for (pos, &i) in order.iter().enumerate() {
        let b = pos * n_bins / n;
        for s in 0..t {
            mass[[b, s]] += phi[[i, s]];
        }
    }
    Ok(mass)
}

/// Five-stop viridis approximation on `[0, 1]`.
fn colormap(x: f64) -> Rgb<u8> {
    const STOPS: [[f64; 3]; 5] = [
        [68.0, 1.0, 84.0],
        [59.0, 82.0, 139.0],
        [33.0, 145.0, 140.0],
        [94.0, 201.0, 98.0],
        [253.0, 231.0, 37.0],
    ];
    let x = x.clamp(0.0, 1.0) * 4.0;
    let k = (x.floor() as usize).min(3);
    let w = x - k as f64;
    let c = |j: usize| (STOPS[k][j] * (1.0 - w) + STOPS[k + 1][j] * w).round() as u8;
    Rgb([c(0), c(1), c(2)])
}

/// Colour is `log10 |mass|` scaled between the smallest and largest nonzero
/// magnitude; zero cells are drawn black.
pub fn write_heatmap_png(mass: ArrayView2<'_, f64>, path: impl AsRef<Path>, cell_px: u32) -> Result<()> {
    let (rows, cols) = mass.dim();
    if rows == 0 || cols == 0 || cell_px == 0 {
        return Err(Error::invalid("heat map needs at least one cell and a positive cell size"));
    }
    let logs: Vec<f64> = mass.iter().filter(|v| **v != 0.0 && v.is_finite()).map(|v| v.abs().log10()).collect();
    let lo = logs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut img = RgbImage::new(cols as u32 * cell_px, rows as u32 * cell_px);
    for ((r, c), &v) in mass.indexed_iter() {
        let px = if v == 0.0 || !v.is_finite() {
            Rgb([0, 0, 0])
        } else {
            colormap((v.abs().log10() - lo) / span)
        };
        for dy in 0..cell_px {
            for dx in 0..cell_px {
                img.put_pixel(c as u32 * cell_px + dx, r as u32 * cell_px + dy, px);
            }
        }
    }
    img.save(path).map_err(|e| Error::Image(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn bins_by_anchor_descending() {
        let phi = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0], [7.0, 8.0]];
        let m = bin_step_mass(phi.view(), &[0.0, 3.0, 1.0, 2.0], 2).unwrap();
        assert_eq!(m, array![[10.0, 12.0], [6.0, 8.0]]);
        assert!(bin_step_mass(phi.view(), &[0.0; 3], 2).is_err());
    }

    #[test]
    fn png_round_trip_size() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mass.png");
        write_heatmap_png(array![[1.0, 0.0, 10.0], [0.1, 2.0, 3.0]].view(), &path, 4).unwrap();
        let img = image::open(&path).unwrap();
        assert_eq!((img.width(), img.height()), (12, 8));
    }
}

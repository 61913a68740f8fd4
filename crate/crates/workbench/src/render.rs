use std::path::Path;

use anyhow::{Context, Result};
use image::{GrayImage, ImageFormat};
use planforge_core::geometry::{rasterize, Floorplan};

/// Side length of rendered previews.
pub const RENDER_SIZE: usize = 256;

/// Grayscale raster of `plan` with the boundary outline drawn at mid intensity.
pub fn render(plan: &Floorplan, size: usize) -> GrayImage {
    let mut with_outline = plan.clone();
    let outline = plan.boundary.clone();
    with_outline.boundary = None;
    let raster = rasterize(&with_outline, size);
    let mut img = GrayImage::from_raw(size as u32, size as u32, raster.to_u8()).expect("raster size");
    if let Some(b) = outline {
        let to_px = |x: f64, y: f64| {
            let col = ((x + 1.0) * 0.5 * size as f64).floor().clamp(0.0, size as f64 - 1.0);
            let row = ((1.0 - y) * 0.5 * size as f64).floor().clamp(0.0, size as f64 - 1.0);
            (col, row)
        };
        for (a, c) in b.polygon().edges() {
            let (x0, y0) = to_px(a.x, a.y);
            let (x1, y1) = to_px(c.x, c.y);
            let steps = (x1 - x0).abs().max((y1 - y0).abs()).max(1.0) as usize;
            for k in 0..=steps {
                let f = k as f64 / steps as f64;
                let (x, y) = (x0 + (x1 - x0) * f, y0 + (y1 - y0) * f);
                img.put_pixel(x.round() as u32, y.round() as u32, image::Luma([128]));
            }
        }
    }
    img
}

pub fn save_png(plan: &Floorplan, path: &Path) -> Result<()> {
    render(plan, RENDER_SIZE)
        .save_with_format(path, ImageFormat::Png)
        .with_context(|| format!("writing {}", path.display()))
}

use std::collections::BTreeSet;

use crate::project::{Shape, SpectrumPosition};
use crate::raster::Raster;

use super::{AnnotateError, MarkerShape, MarkerStyle};

struct Canvas<'a> {
    buf: &'a mut [u8],
    width: i64,
    height: i64,
    color: [u8; 3],
}

impl Canvas<'_> {
    fn plot(&mut self, x: i64, y: i64) {
        if x >= 0 && y >= 0 && x < self.width && y < self.height {
            let i = 3 * (y * self.width + x) as usize;
            self.buf[i..i + 3].copy_from_slice(&self.color);
        }
    }

    fn fill(&mut self, x0: i64, y0: i64, x1: i64, y1: i64) {
        for y in y0.max(0)..=y1.min(self.height - 1) {
            for x in x0.max(0)..=x1.min(self.width - 1) {
                self.plot(x, y);
            }
        }
    }

    /// Plots pixels whose centers satisfy `inside` within a bounding box.
    fn fill_where(&mut self, bbox: [f64; 4], inside: impl Fn(f64, f64) -> bool) {
        let x0 = (bbox[0].floor() as i64).max(0);
        let y0 = (bbox[1].floor() as i64).max(0);
        let x1 = (bbox[2].ceil() as i64).min(self.width - 1);
        let y1 = (bbox[3].ceil() as i64).min(self.height - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                if inside(x as f64 + 0.5, y as f64 + 0.5) {
                    self.plot(x, y);
                }
            }
        }
    }

    fn segment(&mut self, a: [f64; 2], b: [f64; 2], thickness: f64) {
        let half = thickness / 2.0;
        let bbox = [a[0].min(b[0]) - half, a[1].min(b[1]) - half, a[0].max(b[0]) + half, a[1].max(b[1]) + half];
        self.fill_where(bbox, |px, py| segment_distance([px, py], a, b) <= half);
    }
}

fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 { 0.0 } else { (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0) };
    let (cx, cy) = (a[0] + t * dx, a[1] + t * dy);
    ((p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sqrt()
}

/// Outline thickness for region shapes: 1 px plus one per 1024 px of width.
pub(crate) fn stroke_width(image_width: u32) -> u32 {
    1 + (f64::from(image_width) / 1024.0).round() as u32
}

fn draw_point_marker(c: &mut Canvas<'_>, x: f64, y: f64, style: &MarkerStyle, image_width: u32, t: i64) {
    let extent = ((style.size_pct / 100.0 * f64::from(image_width)).round() as i64).max(1);
    let cx = (x.floor() as i64).min(c.width - 1);
    let cy = (y.floor() as i64).min(c.height - 1);
    let lo = extent / 2;
    let hi = extent - lo - 1;
    let tlo = t / 2;
    let thi = t - tlo - 1;
    match style.shape {
        MarkerShape::Plus => {
            c.fill(cx - lo, cy - tlo, cx + hi, cy + thi);
            c.fill(cx - tlo, cy - lo, cx + thi, cy + hi);
        }
        MarkerShape::Cross => {
            for d in -lo..=hi {
                for k in -tlo..=thi {
                    c.plot(cx + d + k, cy + d);
                    c.plot(cx + d + k, cy - d);
                }
            }
        }
        MarkerShape::Circle | MarkerShape::Dot => {
            let (ccx, ccy) = (cx as f64 + 0.5, cy as f64 + 0.5);
            let r = (extent as f64 - 1.0) / 2.0;
            let half = t as f64 / 2.0;
            let bbox = [ccx - r - half, ccy - r - half, ccx + r + half, ccy + r + half];
            if style.shape == MarkerShape::Dot {
                c.fill_where(bbox, |px, py| (px - ccx).hypot(py - ccy) <= r + 0.5);
            } else {
                c.fill_where(bbox, |px, py| ((px - ccx).hypot(py - ccy) - r).abs() <= half);
            }
        }
    }
}

/// Draws the enabled positions. Points get a marker glyph whose extent is
/// `size_pct` of the image width; regions and lines are outlined.
pub fn draw_markers(
    img: &Raster,
    positions: &[SpectrumPosition],
    style: &MarkerStyle,
    enabled: &BTreeSet<String>,
) -> Result<Raster, AnnotateError> {
    let mut out = img.to_rgb8();
    draw_markers_in_place(&mut out, positions, style, enabled)?;
    Ok(out)
}

pub(crate) fn draw_markers_in_place(
    out: &mut Raster,
    positions: &[SpectrumPosition],
    style: &MarkerStyle,
    enabled: &BTreeSet<String>,
) -> Result<(), AnnotateError> {
    style.validate()?;
    if let Some(unknown) = enabled.iter().find(|id| !positions.iter().any(|p| &p.id == *id)) {
        return Err(AnnotateError::UnknownPositionId(unknown.clone()));
    }
    let (w, h) = out.dims();
    let t = stroke_width(w);
    let tf = f64::from(t);
    let mut c = Canvas {
        buf: out.rgb_mut().expect("draw target is RGB"),
        width: i64::from(w),
        height: i64::from(h),
        color: style.color.rgb().0,
    };
    for p in positions.iter().filter(|p| enabled.contains(&p.id)) {
        match &p.shape {
            Shape::Point { x, y } => draw_point_marker(&mut c, *x, *y, style, w, i64::from(t)),
            Shape::Rect { x, y, w: rw, h: rh } => {
                let x0 = x.round() as i64;
                let y0 = y.round() as i64;
                let x1 = (x + rw).round() as i64 - 1;
                let y1 = (y + rh).round() as i64 - 1;
                let ti = i64::from(t) - 1;
                c.fill(x0, y0, x1, (y0 + ti).min(y1));
                c.fill(x0, (y1 - ti).max(y0), x1, y1);
                c.fill(x0, y0, (x0 + ti).min(x1), y1);
                c.fill((x1 - ti).max(x0), y0, x1, y1);
            }
            Shape::Circle { cx, cy, r } => {
                let half = tf / 2.0;
                let bbox = [cx - r - half, cy - r - half, cx + r + half, cy + r + half];
                c.fill_where(bbox, |px, py| ((px - cx).hypot(py - cy) - r).abs() <= half);
            }
            Shape::Polygon(verts) => {
                for (i, a) in verts.iter().enumerate() {
                    let b = verts[(i + 1) % verts.len()];
                    c.segment(*a, b, tf);
                }
            }
            Shape::Line { x1, y1, x2, y2 } => c.segment([*x1, *y1], [*x2, *y2], tf),
        }
    }
    Ok(())
}

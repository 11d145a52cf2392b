use crate::ingest::SensorFrame;
use crate::pose::{LimbTopology, PoseSkeleton};

pub const PALETTE: [[u8; 3]; 6] = [
    [230, 25, 75],
    [60, 180, 75],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [255, 225, 25],
];

pub const DEFAULT_JOINT_RADIUS: usize = 2;

struct Canvas {
    w: usize,
    h: usize,
    rgb: Vec<u8>,
}

impl Canvas {
    fn put(&mut self, x: i64, y: i64, c: [u8; 3]) {
        if x >= 0 && y >= 0 && (x as usize) < self.w && (y as usize) < self.h {
            let i = 3 * (y as usize * self.w + x as usize);
            self.rgb[i..i + 3].copy_from_slice(&c);
        }
    }

    fn disc(&mut self, cx: f64, cy: f64, r: usize, c: [u8; 3]) {
        let (x0, y0) = (cx.round() as i64, cy.round() as i64);
        let r = r as i64;
        for dy in -r..=r {
            for dx in -r..=r {
                if dx * dx + dy * dy <= r * r {
                    self.put(x0 + dx, y0 + dy, c);
                }
            }
        }
    }

    fn line(&mut self, a: (f64, f64), b: (f64, f64), c: [u8; 3]) {
        let (mut x0, mut y0) = (a.0.round() as i64, a.1.round() as i64);
        let (x1, y1) = (b.0.round() as i64, b.1.round() as i64);
        let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
        let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
        let mut err = dx + dy;
        loop {
            self.put(x0, y0, c);
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
}

/// Binary PPM of the frame with limbs drawn as lines and joints as discs,
/// one palette colour per person. Grayscale frames are replicated to RGB;
/// anything drawn outside the frame is clipped.
pub fn render_overlay(
    frame: &SensorFrame,
    skeletons: &[PoseSkeleton],
    topo: &LimbTopology,
    joint_radius: usize,
) -> Vec<u8> {
    let (w, h, ch) = (frame.width as usize, frame.height as usize, frame.channels as usize);
    let rgb = frame
        .pixels
        .chunks(ch)
        .flat_map(|p| match ch {
            1 => [p[0]; 3],
            2 => [p[0], p[1], 0],
            _ => [p[0], p[1], p[2]],
        })
        .collect();
    let mut canvas = Canvas { w, h, rgb };
    for (i, s) in skeletons.iter().enumerate() {
        let c = PALETTE[i % PALETTE.len()];
        for &(a, b) in topo.limbs() {
            if let (Some(Some(ja)), Some(Some(jb))) = (s.joints.get(a), s.joints.get(b)) {
                canvas.line((ja.x, ja.y), (jb.x, jb.y), c);
            }
        }
        for j in s.joints.iter().flatten() {
            canvas.disc(j.x, j.y, joint_radius, c);
        }
    }
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.extend(canvas.rgb);
    out
}

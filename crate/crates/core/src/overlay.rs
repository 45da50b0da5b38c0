//! RGB overlays of label contours and ids on a grayscale frame.

use crate::image::{normalize, Image2D, LabelMap};

/// 3x5 digit glyphs, one row per `u8`, high bit on the left.
const DIGITS: [[u8; 5]; 10] = [
    [0b111, 0b101, 0b101, 0b101, 0b111],
    [0b010, 0b110, 0b010, 0b010, 0b111],
    [0b111, 0b001, 0b111, 0b100, 0b111],
    [0b111, 0b001, 0b111, 0b001, 0b111],
    [0b101, 0b101, 0b111, 0b001, 0b001],
    [0b111, 0b100, 0b111, 0b001, 0b111],
    [0b111, 0b100, 0b111, 0b101, 0b111],
    [0b111, 0b001, 0b010, 0b010, 0b010],
    [0b111, 0b101, 0b111, 0b101, 0b111],
    [0b111, 0b101, 0b111, 0b001, 0b111],
];

/// Stable, saturated color per label.
pub fn label_color(label: u32) -> [u8; 3] {
    let hue = (label as f64 * 0.618_033_988_75).fract() * 6.0;
    let x = 1.0 - (hue % 2.0 - 1.0).abs();
    let (r, g, b) = match hue as u32 {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    [(r * 255.0) as u8, (g * 255.0) as u8, (b * 255.0) as u8]
}

fn put(rgb: &mut [u8], w: usize, h: usize, x: isize, y: isize, c: [u8; 3]) {
    if x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h {
        let i = 3 * (y as usize * w + x as usize);
        rgb[i..i + 3].copy_from_slice(&c);
    }
}

fn draw_number(rgb: &mut [u8], w: usize, h: usize, cx: f64, cy: f64, n: u32) {
    let text = n.to_string();
    let width = 4 * text.len() as isize - 1;
    let x0 = cx.round() as isize - width / 2;
    let y0 = cy.round() as isize - 2;
    for (k, ch) in text.bytes().enumerate() {
        let glyph = DIGITS[(ch - b'0') as usize];
        let gx = x0 + 4 * k as isize;
        for (row, bits) in glyph.iter().enumerate() {
            for col in 0..3 {
                if bits & (0b100 >> col) != 0 {
                    put(rgb, w, h, gx + col, y0 + row as isize, [255, 255, 255]);
                }
            }
        }
    }
}

/// Frame in gray with each label's boundary pixels in its color and its
/// id written at its centroid.
pub fn render_overlay(frame: &Image2D, labels: &LabelMap) -> Vec<u8> {
    let (w, h) = (frame.width(), frame.height());
    assert_eq!((w, h), (labels.width(), labels.height()));
    let gray = normalize(frame);
    let mut rgb: Vec<u8> = gray
        .data()
        .iter()
        .flat_map(|&v| {
            let g = (v * 255.0).round() as u8;
            [g, g, g]
        })
        .collect();
    let l = labels.labels();
    let max = labels.max_label() as usize;
    let mut sums = vec![(0.0f64, 0.0f64, 0usize); max + 1];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let v = l[i];
            if v == 0 {
                continue;
            }
            let s = &mut sums[v as usize];
            s.0 += x as f64;
            s.1 += y as f64;
            s.2 += 1;
            let edge = x == 0
                || y == 0
                || x + 1 == w
                || y + 1 == h
                || l[i - 1] != v
                || l[i + 1] != v
                || l[i - w] != v
                || l[i + w] != v;
            if edge {
                put(&mut rgb, w, h, x as isize, y as isize, label_color(v));
            }
        }
    }
    for (v, &(sx, sy, n)) in sums.iter().enumerate() {
        if n > 0 {
            draw_number(&mut rgb, w, h, sx / n as f64, sy / n as f64, v as u32);
        }
    }
    rgb
}

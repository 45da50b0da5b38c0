//! Frame enhancement ahead of field construction and segmentation.
//!
//! Detection uses `normalize -> log_brighten -> kuwahara_anisotropic`;
//! segmentation uses `clahe -> fill_dark_spots` on the log-brightened
//! but unsmoothed frame.

mod clahe;
mod kuwahara;

pub use clahe::{clahe, ClaheParams};
pub use kuwahara::{gaussian_blur, kuwahara_anisotropic, KuwaharaParams};

use crate::error::{Error, Result};
use crate::image::Image2D;
use crate::morphology::{reconstruct_by_dilation, Connectivity};

/// `log(1 + c * v) / log(1 + c)`; fixes 0 and 1 and lifts weak signal.
pub fn log_brighten(img: &Image2D, gain: f64) -> Result<Image2D> {
    if !(gain > 0.0) || !gain.is_finite() {
        return Err(Error::param("log_gain", format!("must be > 0, got {gain}")));
    }
    let denom = gain.ln_1p();
    Ok(img.map(|v| ((gain * v).ln_1p() / denom).clamp(0.0, 1.0)))
}

/// Fills dark regions not connected to the image border.
///
/// Complement, reconstruct by dilation from the border, complement back.
/// Output is never darker than the input.
pub fn fill_dark_spots(img: &Image2D) -> Image2D {
    let (w, h) = (img.width(), img.height());
    let inverted: Vec<f64> = img.data().iter().map(|v| 1.0 - v).collect();
    let mut marker = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            if x == 0 || y == 0 || x + 1 == w || y + 1 == h {
                marker[y * w + x] = inverted[y * w + x];
            }
        }
    }
    let rec = reconstruct_by_dilation(&marker, &inverted, w, h, Connectivity::Four);
    let data = rec
        .into_iter()
        .zip(img.data())
        .map(|(r, &orig)| (1.0 - r).max(orig))
        .collect();
    Image2D::from_vec(w, h, data)
}

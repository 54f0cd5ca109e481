use image::{GrayImage, RgbImage};

use crate::error::{Error, Result};

/// Original pixels where the mask is nonzero, generated pixels elsewhere.
pub fn composite(original: &RgbImage, generated: &RgbImage, mask: &GrayImage) -> Result<RgbImage> {
    if original.dimensions() != generated.dimensions() || original.dimensions() != mask.dimensions() {
        return Err(Error::contract(format!(
            "composite inputs differ in size: original {:?}, generated {:?}, mask {:?}",
            original.dimensions(),
            generated.dimensions(),
            mask.dimensions()
        )));
    }
    let mut out = generated.clone();
    for ((dst, src), m) in out.pixels_mut().zip(original.pixels()).zip(mask.pixels()) {
        if m.0[0] != 0 {
            *dst = *src;
        }
    }
    Ok(out)
}

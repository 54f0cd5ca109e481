//! Per-image feature computations. Everything here is a pure function of
//! pixel data.

mod canny;
mod gray;
mod hash;
mod resample;

pub use canny::{canny, canny_stages, gradient_magnitude, CannyParams, CannyStages, EdgeMap};
pub use gray::{brightness, load_gray, to_gray, Brightness, GrayImage};
pub use hash::{
    average_hash, difference_hash, hamming, perceptual_hash, phash, HashAlgorithm, HashBits, PerceptualHash,
};
pub use resample::area_resample;

use super::GrayImage;

/// Integer overlap weights of target cells over source pixels, in units of
/// `1 / dst` source pixels. Each target cell's weights sum to `src`.
fn axis_weights(src: usize, dst: usize) -> Vec<Vec<(usize, u64)>> {
    (0..dst)
        .map(|t| {
            let lo = t * src;
            let hi = (t + 1) * src;
            (lo / dst..hi.div_ceil(dst).min(src))
                .filter_map(|s| {
                    let overlap = hi.min((s + 1) * dst).saturating_sub(lo.max(s * dst));
                    (overlap > 0).then_some((s, overlap as u64))
                })
                .collect()
        })
        .collect()
}

/// Area-averaging resample to `rows` x `cols`, row-major output.
///
/// Each output value is the exact mean of the source region it covers;
/// accumulation is in integers, so a constant image resamples to exactly
/// the same constant.
pub fn area_resample(g: &GrayImage, rows: usize, cols: usize) -> Vec<f64> {
    let wx = axis_weights(g.cols(), cols);
    let wy = axis_weights(g.rows(), rows);
    let mut horizontal = vec![0u64; g.rows() * cols];
    for r in 0..g.rows() {
        let line = &g.pixels()[r * g.cols()..(r + 1) * g.cols()];
        for (tc, weights) in wx.iter().enumerate() {
            horizontal[r * cols + tc] = weights.iter().map(|&(s, w)| w * line[s] as u64).sum();
        }
    }
    let denom = (g.rows() * g.cols()) as f64;
    let mut out = vec![0.0; rows * cols];
    for (tr, weights) in wy.iter().enumerate() {
        for tc in 0..cols {
            let acc: u64 = weights.iter().map(|&(s, w)| w * horizontal[s * cols + tc]).sum();
            out[tr * cols + tc] = acc as f64 / denom;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_cover_source_exactly() {
        for (src, dst) in [(100, 32), (7, 32), (32, 32), (33, 8)] {
            let w = axis_weights(src, dst);
            for cell in &w {
                assert_eq!(cell.iter().map(|&(_, x)| x).sum::<u64>(), src as u64);
            }
        }
    }

    #[test]
    fn constant_stays_constant() {
        let g = GrayImage::from_fn(37, 53, |_, _| 91);
        assert!(area_resample(&g, 32, 32).iter().all(|&v| v == 91.0));
    }

    #[test]
    fn integer_factor_is_block_mean() {
        let g = GrayImage::from_fn(4, 4, |r, c| (r * 4 + c) as u8);
        let out = area_resample(&g, 2, 2);
        assert_eq!(out, vec![2.5, 4.5, 10.5, 12.5]);
    }
}

//! Depth outlier removal: sky masking, depth-gradient thresholding and
//! erosion of the validity mask. Every filter only ever invalidates pixels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene_io::{ClassPalette, DepthMap, LabelMap};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterParams {
    /// Threshold on the gradient norm of clip-range-normalised depth.
    pub gradient_threshold: f64,
    /// Square structuring element radius; 0 disables erosion.
    pub erosion_radius: u32,
    pub clip_min: f64,
    pub clip_max: f64,
    pub remove_sky: bool,
    pub gradient: bool,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            gradient_threshold: 0.05,
            erosion_radius: 0,
            clip_min: 0.5,
            clip_max: 10.0,
            remove_sky: true,
            gradient: true,
        }
    }
}

impl FilterParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gradient_threshold > 0.0 && self.gradient_threshold.is_finite()) {
            return Err(Error::invalid(
                "filter params",
                format!("gradient_threshold must be > 0, got {}", self.gradient_threshold),
            ));
        }
        if !(self.clip_min > 0.0 && self.clip_max > self.clip_min && self.clip_max.is_finite()) {
            return Err(Error::invalid(
                "filter params",
                format!(
                    "need clip_max > clip_min > 0, got ({}, {})",
                    self.clip_min, self.clip_max
                ),
            ));
        }
        Ok(())
    }
}

fn check_size(depth: &DepthMap, labels: &LabelMap) -> Result<()> {
    if depth.size() != labels.size() {
        return Err(Error::DimensionMismatch {
            expected: depth.size(),
            actual: labels.size(),
        });
    }
    Ok(())
}

/// Invalidates every pixel labelled as sky. Without a sky class in the
/// palette the map is returned unchanged.
pub fn remove_sky(depth: &DepthMap, labels: &LabelMap, palette: &ClassPalette) -> Result<DepthMap> {
    check_size(depth, labels)?;
    let Some(sky) = palette.sky_index() else {
        log::warn!("palette has no sky class, sky removal skipped");
        return Ok(depth.clone());
    };
    let mut out = depth.clone();
    let w = depth.width();
    for (i, &l) in labels.labels().iter().enumerate() {
        if l as usize == sky {
            out.invalidate(i % w, i / w);
        }
    }
    Ok(out)
}

/// One-dimensional derivative with central differences, falling back to
/// one-sided differences next to invalid or out-of-image neighbours.
#[inline]
fn derivative(prev: Option<f64>, here: f64, next: Option<f64>) -> f64 {
    match (prev, next) {
        (Some(p), Some(n)) => (n - p) / 2.0,
        (None, Some(n)) => n - here,
        (Some(p), None) => here - p,
        (None, None) => 0.0,
    }
}

/// Invalidates pixels whose normalised depth gradient norm exceeds the
/// threshold.
pub fn gradient_filter(depth: &DepthMap, params: &FilterParams) -> DepthMap {
    let (w, h) = depth.size();
    let range = params.clip_max - params.clip_min;
    let norm = |x: usize, y: usize| -> Option<f64> {
        depth
            .depth(x, y)
            .map(|d| (d as f64 - params.clip_min) / range)
    };
    let mut out = depth.clone();
    for y in 0..h {
        for x in 0..w {
            let Some(here) = norm(x, y) else { continue };
            let left = if x > 0 { norm(x - 1, y) } else { None };
            let right = if x + 1 < w { norm(x + 1, y) } else { None };
            let up = if y > 0 { norm(x, y - 1) } else { None };
            let down = if y + 1 < h { norm(x, y + 1) } else { None };
            let gx = derivative(left, here, right);
            let gy = derivative(up, here, down);
            if gx.hypot(gy) > params.gradient_threshold {
                out.invalidate(x, y);
            }
        }
    }
    out
}

/// Marks, for each position, whether any `true` lies within `radius`
/// along a line of `n` entries spaced `stride` apart.
fn dilate_line(mask: &mut [bool], start: usize, n: usize, stride: usize, radius: usize) {
    let line: Vec<bool> = (0..n).map(|i| mask[start + i * stride]).collect();
    let mut prefix = vec![0u32; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + line[i] as u32;
    }
    for i in 0..n {
        let lo = i.saturating_sub(radius);
        let hi = (i + radius + 1).min(n);
        mask[start + i * stride] = prefix[hi] > prefix[lo];
    }
}

/// Morphological erosion of the validity mask by a `(2r+1)²` square.
/// Pixels outside the image count as valid.
pub fn erosion_filter(depth: &DepthMap, params: &FilterParams) -> DepthMap {
    let r = params.erosion_radius as usize;
    if r == 0 {
        return depth.clone();
    }
    let (w, h) = depth.size();
    let mut invalid: Vec<bool> = depth.validity_mask().iter().map(|v| !v).collect();
    for y in 0..h {
        dilate_line(&mut invalid, y * w, w, 1, r);
    }
    for x in 0..w {
        dilate_line(&mut invalid, x, h, w, r);
    }
    let mut out = depth.clone();
    for (i, &bad) in invalid.iter().enumerate() {
        if bad {
            out.invalidate(i % w, i / w);
        }
    }
    out
}

/// Sky removal, then gradient thresholding, then erosion, each as enabled
/// by `params`. Sky removal only runs when labels are given.
pub fn apply_filters(
    depth: &DepthMap,
    labels: Option<&LabelMap>,
    palette: &ClassPalette,
    params: &FilterParams,
) -> Result<DepthMap> {
    params.validate()?;
    let mut out = match labels {
        Some(labels) if params.remove_sky => remove_sky(depth, labels, palette)?,
        Some(labels) => {
            check_size(depth, labels)?;
            depth.clone()
        }
        None => depth.clone(),
    };
    if params.gradient {
        out = gradient_filter(&out, params);
    }
    Ok(erosion_filter(&out, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn palette_with_sky() -> ClassPalette {
        ClassPalette::new(
            vec!["ground".into(), "sky".into()],
            vec![[0, 128, 0], [0, 0, 255]],
        )
        .unwrap()
    }

    fn params(threshold: f64, erosion: u32, clip: (f64, f64)) -> FilterParams {
        FilterParams {
            gradient_threshold: threshold,
            erosion_radius: erosion,
            clip_min: clip.0,
            clip_max: clip.1,
            ..FilterParams::default()
        }
    }

    fn map_from_mask(w: usize, h: usize, mask: &[bool]) -> DepthMap {
        let values = mask
            .iter()
            .enumerate()
            .map(|(i, &v)| if v { 1.0 + i as f32 * 0.01 } else { 0.0 })
            .collect();
        DepthMap::new(w, h, values).unwrap()
    }

    fn brute_force_erosion(w: usize, h: usize, mask: &[bool], r: i64) -> Vec<bool> {
        let mut out = vec![false; w * h];
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                let mut keep = mask[(y * w as i64 + x) as usize];
                for j in -r..=r {
                    for i in -r..=r {
                        let (u, v) = (x + i, y + j);
                        if u >= 0 && v >= 0 && u < w as i64 && v < h as i64 {
                            keep &= mask[(v * w as i64 + u) as usize];
                        }
                    }
                }
                out[(y * w as i64 + x) as usize] = keep;
            }
        }
        out
    }

    #[test]
    fn sky_removal_cases() {
        let depth = DepthMap::filled(4, 4, 2.0);
        let pal = palette_with_sky();
        let none = LabelMap::filled(4, 4, 0, 2).unwrap();
        assert_eq!(remove_sky(&depth, &none, &pal).unwrap(), depth);
        let all = LabelMap::filled(4, 4, 1, 2).unwrap();
        assert_eq!(remove_sky(&depth, &all, &pal).unwrap().valid_count(), 0);
        let checker: Vec<u8> = (0..16).map(|i| ((i % 4 + i / 4) % 2) as u8).collect();
        let popcount = checker.iter().filter(|&&l| l == 1).count();
        let labels = LabelMap::new(4, 4, checker, 2).unwrap();
        let out = remove_sky(&depth, &labels, &pal).unwrap();
        assert_eq!(16 - out.valid_count(), popcount);
    }

    #[test]
    fn sky_removal_without_sky_class_is_noop() {
        let depth = DepthMap::filled(3, 3, 2.0);
        let pal = ClassPalette::new(vec!["a".into(), "b".into()], vec![[1, 1, 1], [2, 2, 2]])
            .unwrap();
        let labels = LabelMap::filled(3, 3, 1, 2).unwrap();
        assert_eq!(remove_sky(&depth, &labels, &pal).unwrap(), depth);
    }

    #[test]
    fn sky_removal_size_mismatch() {
        let depth = DepthMap::filled(3, 3, 2.0);
        let labels = LabelMap::filled(4, 3, 0, 2).unwrap();
        assert!(matches!(
            remove_sky(&depth, &labels, &palette_with_sky()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn constant_plane_keeps_everything() {
        let depth = DepthMap::filled(10, 8, 3.3);
        assert_eq!(gradient_filter(&depth, &FilterParams::default()), depth);
    }

    #[test]
    fn step_edge_removes_straddling_pair() {
        let (w, h) = (12, 6);
        let values = (0..w * h)
            .map(|i| if i % w < 6 { 1.0 } else { 3.0 })
            .collect();
        let depth = DepthMap::new(w, h, values).unwrap();
        // normalised step is 2 / 9.5; central difference next to it is half that
        let central = (2.0 / 9.5) / 2.0;
        assert!(central > 0.05);
        let out = gradient_filter(&depth, &params(0.05, 0, (0.5, 10.0)));
        for y in 0..h {
            for x in 0..w {
                assert_eq!(out.is_valid(x, y), x != 5 && x != 6, "({x},{y})");
            }
        }
    }

    #[test]
    fn ramp_at_threshold_is_kept() {
        // slope 0.125 m/px over a 2 m range is exactly 0.0625 after normalisation
        let values = (0..16 * 4).map(|i| 1.0 + 0.125 * (i % 16) as f32).collect();
        let depth = DepthMap::new(16, 4, values).unwrap();
        let keep = gradient_filter(&depth, &params(0.0625, 0, (1.0, 3.0)));
        assert_eq!(keep, depth);
        let drop = gradient_filter(&depth, &params(0.0624, 0, (1.0, 3.0)));
        assert_eq!(drop.valid_count(), 0);
    }

    #[test]
    fn isolated_pixel_passes() {
        let mut depth = DepthMap::invalid(5, 5);
        depth.set(2, 2, 7.0);
        assert_eq!(gradient_filter(&depth, &FilterParams::default()), depth);
    }

    #[test]
    fn erosion_cases() {
        let p = params(0.05, 1, (0.5, 10.0));
        let full = DepthMap::filled(6, 6, 1.0);
        assert_eq!(erosion_filter(&full, &p), full);
        let mut hole = full.clone();
        hole.invalidate(3, 2);
        let out = erosion_filter(&hole, &p);
        for y in 0..6 {
            for x in 0..6 {
                let near = (x as i32 - 3).abs() <= 1 && (y as i32 - 2).abs() <= 1;
                assert_eq!(out.is_valid(x, y), !near);
            }
        }
    }

    #[test]
    fn chain_order_is_sky_gradient_erosion() {
        let mut values = vec![2.0f32; 10 * 10];
        for v in values.iter_mut().skip(50) {
            *v = 2.5;
        }
        let depth = DepthMap::new(10, 10, values).unwrap();
        let mut labels = vec![0u8; 100];
        labels[0] = 1;
        let labels = LabelMap::new(10, 10, labels, 2).unwrap();
        let p = params(0.02, 1, (0.5, 10.0));
        let pal = palette_with_sky();
        let expected = erosion_filter(
            &gradient_filter(&remove_sky(&depth, &labels, &pal).unwrap(), &p),
            &p,
        );
        assert_eq!(apply_filters(&depth, Some(&labels), &pal, &p).unwrap(), expected);
    }

    #[test]
    fn params_validation() {
        assert!(params(0.0, 0, (0.5, 10.0)).validate().is_err());
        assert!(params(0.05, 0, (0.0, 10.0)).validate().is_err());
        assert!(params(0.05, 0, (5.0, 1.0)).validate().is_err());
        FilterParams::default().validate().unwrap();
    }

    fn mask_strategy() -> impl Strategy<Value = (usize, usize, Vec<bool>)> {
        (1usize..20, 1usize..20).prop_flat_map(|(w, h)| {
            (Just(w), Just(h), prop::collection::vec(prop::bool::weighted(0.85), w * h))
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn erosion_matches_brute_force((w, h, mask) in mask_strategy(), r in 1u32..4) {
            let depth = map_from_mask(w, h, &mask);
            let out = erosion_filter(&depth, &params(0.05, r, (0.5, 10.0)));
            prop_assert_eq!(out.validity_mask(), brute_force_erosion(w, h, &mask, r as i64));
            let again = erosion_filter(&out, &params(0.05, r, (0.5, 10.0)));
            // a second pass keeps eroding interior borders, but never adds pixels
            prop_assert!(again.validity_mask().iter().zip(out.validity_mask()).all(|(a, b)| !a || b));
        }

        #[test]
        fn filters_only_shrink(
            (w, h, mask) in mask_strategy(),
            seed in any::<u64>(),
            threshold in 0.001f64..0.2,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let values = mask
                .iter()
                .map(|&v| if v { rng.random_range(0.5f32..10.0) } else { 0.0 })
                .collect();
            let depth = DepthMap::new(w, h, values).unwrap();
            let labels: Vec<u8> = (0..w * h).map(|_| rng.random_range(0..2)).collect();
            let labels = LabelMap::new(w, h, labels, 2).unwrap();
            let p = params(threshold, 1, (0.5, 10.0));
            let pal = palette_with_sky();
            let sky = remove_sky(&depth, &labels, &pal).unwrap();
            prop_assert_eq!(&remove_sky(&sky, &labels, &pal).unwrap(), &sky);
            let grad = gradient_filter(&depth, &p);
            let grad2 = gradient_filter(&grad, &p);
            let eroded = erosion_filter(&depth, &p);
            let chained = apply_filters(&depth, Some(&labels), &pal, &p).unwrap();
            for out in [&sky, &grad, &eroded, &chained] {
                for (a, b) in out.values().iter().zip(depth.values()) {
                    prop_assert!(*a <= 0.0 || a == b);
                }
            }
            for (a, b) in grad2.values().iter().zip(grad.values()) {
                prop_assert!(*a <= 0.0 || a == b);
            }
        }
    }
}

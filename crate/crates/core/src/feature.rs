//! Trigonometric pixel embedding.
//!
//! A pixel value `x ∈ [0, 1]` becomes the unit vector
//! `v_s(x) = sqrt(C(d−1, s−1)) · cos(θ)^(d−s) · sin(θ)^(s−1)`, `s = 1..d`,
//! with `θ = ANGLE_FACTOR · x`. An image becomes the product state of its
//! pixel vectors.

use std::f64::consts::FRAC_PI_4;

use crate::error::{Error, Result};

/// Multiplier turning a normalized pixel into the embedding angle.
pub const ANGLE_FACTOR: f64 = FRAC_PI_4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureConfig {
    /// Local (input bond) dimension, at least 2.
    pub d: usize,
    /// Raw pixel values are divided by this before embedding.
    pub pixel_scale: f64,
    pub angle_factor: f64,
}

impl FeatureConfig {
    pub fn new(d: usize) -> Result<Self> {
        let cfg = Self {
            d,
            pixel_scale: 255.0,
            angle_factor: ANGLE_FACTOR,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(Error::Config(format!(
                "feature dimension d={} must be at least 2",
                self.d
            )));
        }
        if self.pixel_scale.is_nan() || self.pixel_scale <= 0.0 {
            return Err(Error::Config("pixel scale must be positive".into()));
        }
        Ok(())
    }

    pub fn normalize(&self, raw: u8) -> f64 {
        f64::from(raw) / self.pixel_scale
    }
}

/// Embeds one normalized pixel with the default angle factor.
pub fn feature_vector(x: f64, d: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; d.max(1)];
    embed_into(x, d, ANGLE_FACTOR, &mut out)?;
    Ok(out)
}

fn embed_into(x: f64, d: usize, angle_factor: f64, out: &mut [f64]) -> Result<()> {
    if d < 2 {
        return Err(Error::Config(format!("feature dimension d={d} must be at least 2")));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("pixel value {x} outside [0, 1]")));
    }
    let theta = angle_factor * x;
    let (sin, cos) = theta.sin_cos();
    let mut binom = 1.0f64;
    for (s, o) in out.iter_mut().enumerate().take(d) {
        // binom = C(d-1, s)
        *o = binom.sqrt() * cos.powi((d - 1 - s) as i32) * sin.powi(s as i32);
        binom = binom * (d - 1 - s) as f64 / (s + 1) as f64;
    }
    Ok(())
}

/// A `side × side` image embedded pixel-by-pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorizedImage {
    side: usize,
    d: usize,
    // (row, col, s) row-major
    data: Vec<f64>,
}

impl VectorizedImage {
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn num_pixels(&self) -> usize {
        self.side * self.side
    }

    pub fn vector(&self, row: usize, col: usize) -> &[f64] {
        self.pixel(row * self.side + col)
    }

    /// Vector of the pixel at row-major position `j`.
    pub fn pixel(&self, j: usize) -> &[f64] {
        &self.data[j * self.d..(j + 1) * self.d]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Wraps raw per-pixel vectors without re-embedding.
    pub fn from_vectors(side: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != side * side * d {
            return Err(Error::Shape(format!(
                "{} values cannot hold {side}×{side} vectors of length {d}",
                data.len()
            )));
        }
        Ok(Self { side, d, data })
    }
}

/// Embeds a `side × side` grid of normalized pixels (row-major).
pub fn vectorize_image(pixels: &[f64], side: usize, cfg: &FeatureConfig) -> Result<VectorizedImage> {
    cfg.validate()?;
    if side == 0 || !side.is_power_of_two() {
        return Err(Error::Layout(format!("image side {side} is not a power of 2")));
    }
    if pixels.len() != side * side {
        return Err(Error::Shape(format!(
            "{} pixels given for a {side}×{side} image",
            pixels.len()
        )));
    }
    let d = cfg.d;
    let mut data = vec![0.0; side * side * d];
    for (x, out) in pixels.iter().zip(data.chunks_exact_mut(d)) {
        embed_into(*x, d, cfg.angle_factor, out)?;
    }
    Ok(VectorizedImage { side, d, data })
}

/// Embeds a byte image, normalizing with `cfg.pixel_scale`.
pub fn vectorize_bytes(pixels: &[u8], side: usize, cfg: &FeatureConfig) -> Result<VectorizedImage> {
    let normalized: Vec<f64> = pixels.iter().map(|&p| cfg.normalize(p)).collect();
    vectorize_image(&normalized, side, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn dark_pixel_is_first_basis_vector() {
        assert_eq!(feature_vector(0.0, 2).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn bright_pixel_d2() {
        let v = feature_vector(1.0, 2).unwrap();
        let h = (PI / 4.0).cos();
        assert!((v[0] - h).abs() < 1e-15 && (v[1] - h).abs() < 1e-15);
    }

    #[test]
    fn midpoint_d3_matches_termwise_values() {
        // cos²(π/8), √2·cos(π/8)·sin(π/8), sin²(π/8)
        let expected = [0.8535533905932737, 0.5, 0.14644660940672624];
        let v = feature_vector(0.5, 3).unwrap();
        for (a, b) in v.iter().zip(expected) {
            assert!((a - b).abs() < 1e-14, "{a} vs {b}");
        }
        let norm: f64 = v.iter().map(|x| x * x).sum();
        assert!((norm - 1.0).abs() < 1e-14);
    }

    #[test]
    fn domain_and_config_errors() {
        assert!(matches!(feature_vector(1.5, 2), Err(Error::Domain(_))));
        assert!(matches!(feature_vector(-0.1, 2), Err(Error::Domain(_))));
        assert!(matches!(feature_vector(0.5, 1), Err(Error::Config(_))));
        assert!(FeatureConfig::new(1).is_err());
    }

    #[test]
    fn first_component_is_cosine_power() {
        for d in 2..=10 {
            for i in 0..=20 {
                let x = i as f64 / 20.0;
                let v = feature_vector(x, d).unwrap();
                assert_eq!(v[0], (PI * x / 4.0).cos().powi(d as i32 - 1));
            }
        }
    }

    #[test]
    fn uniform_images() {
        let cfg = FeatureConfig::new(2).unwrap();
        let dark = vectorize_image(&[0.0; 4], 2, &cfg).unwrap();
        for j in 0..4 {
            assert_eq!(dark.pixel(j), &[1.0, 0.0]);
        }
        let bright = vectorize_image(&[1.0; 4], 2, &cfg).unwrap();
        let h = (PI / 4.0).cos();
        for j in 0..4 {
            assert!((bright.pixel(j)[0] - h).abs() < 1e-15);
            assert!((bright.pixel(j)[1] - h).abs() < 1e-15);
        }
    }

    #[test]
    fn mixed_image_keeps_spatial_order() {
        let cfg = FeatureConfig::new(2).unwrap();
        let img = vectorize_image(&[0.0, 1.0, 0.5, 0.25], 2, &cfg).unwrap();
        for (j, x) in [0.0f64, 1.0, 0.5, 0.25].into_iter().enumerate() {
            let t = PI * x / 4.0;
            let v = img.vector(j / 2, j % 2);
            assert!((v[0] - t.cos()).abs() < 1e-15);
            assert!((v[1] - t.sin()).abs() < 1e-15);
        }
    }

    #[test]
    fn non_power_of_two_side_rejected() {
        let cfg = FeatureConfig::new(2).unwrap();
        assert!(matches!(vectorize_image(&[0.0; 9], 3, &cfg), Err(Error::Layout(_))));
    }
}

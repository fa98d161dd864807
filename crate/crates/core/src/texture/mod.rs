//! Gray-level co-occurrence texture features and the dataset-level
//! statistical comparisons built on them.
//!
//! GLCM defaults follow the pipeline convention: 64 gray levels (8-bit
//! pixels quantized by `floor(g/4)`), offset `(1, 0)`, symmetric,
//! normalized to sum 1. The four features are the standard Haralick
//! definitions: contrast, energy (angular second moment), entropy
//! (natural log), homogeneity.

mod pgm;
mod special;
mod stats;

pub use pgm::{parse_pgm, read_pgm, write_pgm};
pub use special::{betainc_reg, f_survival, ln_gamma, student_t_two_sided_p};
pub use stats::{
    hotelling_t2, kl_divergence, kl_from_histograms, welch_t, HotellingResult, WelchResult,
};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Default gray-level count for feature extraction.
pub const DEFAULT_LEVELS: usize = 64;
/// Default co-occurrence offset `(dx, dy)`: the right-hand neighbor.
pub const DEFAULT_OFFSET: (i32, i32) = (1, 0);

/// A 2-d grid of integer gray levels, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    data: Vec<u32>,
    width: usize,
    height: usize,
}

impl GrayImage {
    pub fn new(data: Vec<u32>, width: usize, height: usize) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                got: data.len(),
            });
        }
        Ok(Self {
            data,
            width,
            height,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u32] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.data[row * self.width + col]
    }

    /// Quantize 8-bit pixels down to `levels` gray levels.
    pub fn quantize_from_8bit(&self, levels: usize) -> GrayImage {
        let data = self
            .data
            .iter()
            .map(|&g| (g as usize * levels / 256) as u32)
            .collect();
        GrayImage {
            data,
            width: self.width,
            height: self.height,
        }
    }
}

/// Normalized gray-level co-occurrence matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GlcmMatrix {
    /// `levels x levels`, entries sum to 1.
    pub p: DMatrix<f64>,
    pub levels: usize,
    pub offset: (i32, i32),
    pub symmetric: bool,
}

/// Count co-occurring gray-level pairs at `offset = (dx, dy)`, optionally
/// symmetrized (counting both directions), normalized to sum 1.
pub fn glcm(
    image: &GrayImage,
    levels: usize,
    offset: (i32, i32),
    symmetric: bool,
) -> Result<GlcmMatrix> {
    if levels < 1 {
        return Err(Error::config("levels must be at least 1"));
    }
    if let Some(&bad) = image.pixels().iter().find(|&&g| g as usize >= levels) {
        return Err(Error::config(format!(
            "pixel value {bad} outside [0, {levels})"
        )));
    }
    let (dx, dy) = offset;
    let (w, h) = (image.width() as i64, image.height() as i64);
    let mut counts = DMatrix::zeros(levels, levels);
    let mut total = 0.0;
    for r in 0..h {
        for c in 0..w {
            let r2 = r + i64::from(dy);
            let c2 = c + i64::from(dx);
            if r2 < 0 || r2 >= h || c2 < 0 || c2 >= w {
                continue;
            }
            let g1 = image.get(r as usize, c as usize) as usize;
            let g2 = image.get(r2 as usize, c2 as usize) as usize;
            counts[(g1, g2)] += 1.0;
            total += 1.0;
            if symmetric {
                counts[(g2, g1)] += 1.0;
                total += 1.0;
            }
        }
    }
    if total == 0.0 {
        return Err(Error::config(
            "image is smaller than the offset reach; no pixel pairs",
        ));
    }
    Ok(GlcmMatrix {
        p: counts / total,
        levels,
        offset,
        symmetric,
    })
}

/// The four Haralick summaries of one GLCM.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TextureFeatures {
    /// `sum (i-j)^2 P_ij`
    pub contrast: f64,
    /// `sum P_ij^2`
    pub energy: f64,
    /// `-sum P_ij ln P_ij`
    pub entropy: f64,
    /// `sum P_ij / (1 + (i-j)^2)`
    pub homogeneity: f64,
}

pub fn texture_features(m: &GlcmMatrix) -> TextureFeatures {
    let mut contrast = 0.0;
    let mut energy = 0.0;
    let mut entropy = 0.0;
    let mut homogeneity = 0.0;
    for i in 0..m.levels {
        for j in 0..m.levels {
            let p = m.p[(i, j)];
            if p == 0.0 {
                continue;
            }
            let d2 = (i as f64 - j as f64).powi(2);
            contrast += d2 * p;
            energy += p * p;
            entropy -= p * p.ln();
            homogeneity += p / (1.0 + d2);
        }
    }
    TextureFeatures {
        contrast,
        energy,
        entropy,
        homogeneity,
    }
}

/// Feature vector of one 8-bit image under the default GLCM settings.
pub fn image_features(image: &GrayImage) -> Result<TextureFeatures> {
    let q = image.quantize_from_8bit(DEFAULT_LEVELS);
    Ok(texture_features(&glcm(
        &q,
        DEFAULT_LEVELS,
        DEFAULT_OFFSET,
        true,
    )?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn constant_image(v: u32, w: usize, h: usize) -> GrayImage {
        GrayImage::new(vec![v; w * h], w, h).unwrap()
    }

    fn checkerboard2x2() -> GrayImage {
        GrayImage::new(vec![0, 1, 1, 0], 2, 2).unwrap()
    }

    #[test]
    fn constant_image_point_mass() {
        let img = constant_image(3, 4, 4);
        let m = glcm(&img, 8, (1, 0), true).unwrap();
        assert_relative_eq!(m.p[(3, 3)], 1.0, epsilon = 1e-15);
        let f = texture_features(&m);
        assert_eq!(f.contrast, 0.0);
        assert_eq!(f.energy, 1.0);
        assert_eq!(f.entropy, 0.0);
        assert_eq!(f.homogeneity, 1.0);
    }

    #[test]
    fn checkerboard_hand_counts() {
        let m = glcm(&checkerboard2x2(), 2, (1, 0), true).unwrap();
        assert_relative_eq!(m.p[(0, 1)], 0.5, epsilon = 1e-15);
        assert_relative_eq!(m.p[(1, 0)], 0.5, epsilon = 1e-15);
        assert_eq!(m.p[(0, 0)], 0.0);
        assert_eq!(m.p[(1, 1)], 0.0);

        let f = texture_features(&m);
        assert_relative_eq!(f.contrast, 1.0, epsilon = 1e-15);
        assert_relative_eq!(f.energy, 0.5, epsilon = 1e-15);
        assert_relative_eq!(f.entropy, std::f64::consts::LN_2, epsilon = 1e-12);
        assert_relative_eq!(f.homogeneity, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn uniform_glcm_features() {
        let l = 4;
        let m = GlcmMatrix {
            p: DMatrix::from_element(l, l, 1.0 / (l * l) as f64),
            levels: l,
            offset: (1, 0),
            symmetric: true,
        };
        let f = texture_features(&m);
        assert_relative_eq!(f.energy, 1.0 / (l * l) as f64, epsilon = 1e-15);
        assert_relative_eq!(f.entropy, 2.0 * (l as f64).ln(), epsilon = 1e-12);
    }

    #[test]
    fn glcm_sums_to_one_and_symmetry() {
        let mut gen = rng::seeded(12);
        for _ in 0..20 {
            let w = gen.gen_range(2..12);
            let h = gen.gen_range(2..12);
            let img =
                GrayImage::new((0..w * h).map(|_| gen.gen_range(0..16)).collect(), w, h).unwrap();
            let m = glcm(&img, 16, (1, 0), true).unwrap();
            assert_relative_eq!(m.p.sum(), 1.0, epsilon = 1e-12);
            assert_relative_eq!((m.p.clone() - m.p.transpose()).norm(), 0.0, epsilon = 1e-15);

            let f = texture_features(&m);
            assert!(f.energy > 0.0 && f.energy <= 1.0);
            assert!(f.homogeneity > 0.0 && f.homogeneity <= 1.0);
            assert!(f.contrast >= 0.0);
            assert!(f.entropy >= 0.0);
        }
    }

    #[test]
    fn offset_reach_error() {
        let img = constant_image(0, 2, 2);
        assert!(glcm(&img, 4, (5, 0), true).is_err());
    }

    #[test]
    fn vertical_offset() {
        // single column alternating 0,1: three vertical pairs
        let img = GrayImage::new(vec![0, 1, 0, 1], 1, 4).unwrap();
        let m = glcm(&img, 2, (0, 1), false).unwrap();
        assert_relative_eq!(m.p[(0, 1)], 2.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(m.p[(1, 0)], 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn quantization_maps_255_to_top_level() {
        let img = constant_image(255, 2, 2);
        let q = img.quantize_from_8bit(64);
        assert!(q.pixels().iter().all(|&p| p == 63));
        let img = constant_image(0, 2, 2);
        assert!(img.quantize_from_8bit(64).pixels().iter().all(|&p| p == 0));
    }
}

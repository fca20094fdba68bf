use serde::{Deserialize, Serialize};

use super::DataError;
use crate::numerics::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AugmentKind {
    Image,
    Vector,
}

/// Transform chain for one view.
///
/// Image: random shift (zero padded), additive noise clamped to `[0, 1]`, then
/// a random rectangular erase. Vector: additive noise, then one scale factor
/// drawn from `1 ± scale_jitter`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentSpec {
    pub kind: AugmentKind,
    pub noise_sigma: f64,
    #[serde(default)]
    pub shift_max_px: usize,
    #[serde(default)]
    pub erase_prob: f64,
    #[serde(default)]
    pub scale_jitter: f64,
}

impl AugmentSpec {
    pub fn image() -> Self {
        AugmentSpec {
            kind: AugmentKind::Image,
            noise_sigma: 0.1,
            shift_max_px: 2,
            erase_prob: 0.25,
            scale_jitter: 0.0,
        }
    }

    pub fn vector() -> Self {
        AugmentSpec {
            kind: AugmentKind::Vector,
            noise_sigma: 0.5,
            shift_max_px: 0,
            erase_prob: 0.0,
            scale_jitter: 0.2,
        }
    }

    /// Every transform switched off.
    pub fn identity(kind: AugmentKind) -> Self {
        AugmentSpec {
            kind,
            noise_sigma: 0.0,
            shift_max_px: 0,
            erase_prob: 0.0,
            scale_jitter: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(DataError::Augment(format!("noise_sigma {}", self.noise_sigma)));
        }
        if !(0.0..=1.0).contains(&self.erase_prob) {
            return Err(DataError::Augment(format!("erase_prob {} outside [0, 1]", self.erase_prob)));
        }
        if !(self.scale_jitter >= 0.0 && self.scale_jitter.is_finite()) {
            return Err(DataError::Augment(format!("scale_jitter {}", self.scale_jitter)));
        }
        Ok(())
    }

    /// Checks the spec against a sample length. Images must be square.
    pub fn check_dim(&self, len: usize) -> Result<(), DataError> {
        self.validate()?;
        if self.kind == AugmentKind::Image && image_side(len).is_none() {
            return Err(DataError::Augment(format!("image length {len} is not a square")));
        }
        Ok(())
    }
}

fn image_side(len: usize) -> Option<usize> {
    let side = (len as f64).sqrt().round() as usize;
    (side > 0 && side * side == len).then_some(side)
}

fn signed_offset(rng: &mut Rng, max: usize) -> isize {
    rng.below(2 * max as u64 + 1) as isize - max as isize
}

fn augment_image(x: &[f64], side: usize, spec: &AugmentSpec, rng: &mut Rng) -> Vec<f64> {
    let mut out = if spec.shift_max_px > 0 {
        let dy = signed_offset(rng, spec.shift_max_px);
        let dx = signed_offset(rng, spec.shift_max_px);
        let s = side as isize;
        let mut shifted = vec![0.0; x.len()];
        for y in 0..s {
            for xx in 0..s {
                let (sy, sx) = (y - dy, xx - dx);
                if (0..s).contains(&sy) && (0..s).contains(&sx) {
                    shifted[(y * s + xx) as usize] = x[(sy * s + sx) as usize];
                }
            }
        }
        shifted
    } else {
        x.to_vec()
    };
    if spec.noise_sigma > 0.0 {
        for v in out.iter_mut() {
            *v = (*v + spec.noise_sigma * rng.normal()).clamp(0.0, 1.0);
        }
    }
    if spec.erase_prob > 0.0 && rng.bernoulli(spec.erase_prob) {
        let max_extent = (side / 2).max(1) as u64;
        let h = 1 + rng.below(max_extent) as usize;
        let w = 1 + rng.below(max_extent) as usize;
        let top = rng.below((side - h + 1) as u64) as usize;
        let left = rng.below((side - w + 1) as u64) as usize;
        for y in top..top + h {
            out[y * side + left..y * side + left + w].fill(0.0);
        }
    }
    out
}

fn augment_vector(x: &[f64], spec: &AugmentSpec, rng: &mut Rng) -> Vec<f64> {
    let mut out = x.to_vec();
    if spec.noise_sigma > 0.0 {
        for v in out.iter_mut() {
            *v += spec.noise_sigma * rng.normal();
        }
    }
    if spec.scale_jitter > 0.0 {
        let s = 1.0 + rng.uniform_range(-spec.scale_jitter, spec.scale_jitter);
        for v in out.iter_mut() {
            *v *= s;
        }
    }
    out
}

/// One draw of the transform chain.
pub fn augment_one(sample: &[f64], spec: &AugmentSpec, rng: &mut Rng) -> Result<Vec<f64>, DataError> {
    spec.check_dim(sample.len())?;
    Ok(match spec.kind {
        AugmentKind::Image => {
            let side = image_side(sample.len()).expect("checked square");
            augment_image(sample, side, spec, rng)
        }
        AugmentKind::Vector => augment_vector(sample, spec, rng),
    })
}

/// Two independent draws from the same chain.
pub fn augment_pair(sample: &[f64], spec: &AugmentSpec, rng: &mut Rng) -> Result<(Vec<f64>, Vec<f64>), DataError> {
    let a = augment_one(sample, spec, rng)?;
    let b = augment_one(sample, spec, rng)?;
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;
    use proptest::prelude::*;

    #[test]
    fn identity_chain_returns_the_sample() {
        let img: Vec<f64> = (0..16).map(|k| k as f64 / 15.0).collect();
        let (a, b) = augment_pair(&img, &AugmentSpec::identity(AugmentKind::Image), &mut Rng::new(0)).unwrap();
        assert_eq!(a, img);
        assert_eq!(b, img);
        let v = vec![3.0, -1.0, 0.5];
        let (a, b) = augment_pair(&v, &AugmentSpec::identity(AugmentKind::Vector), &mut Rng::new(0)).unwrap();
        assert_eq!((a, b), (v.clone(), v));
    }

    #[test]
    fn one_pixel_shift_stays_within_one_step() {
        let spec = AugmentSpec {
            shift_max_px: 1,
            ..AugmentSpec::identity(AugmentKind::Image)
        };
        let mut img = vec![0.0; 9];
        img[4] = 1.0;
        let mut rng = Rng::new(1);
        let mut seen = std::collections::BTreeSet::new();
        for _ in 0..200 {
            let out = augment_one(&img, &spec, &mut rng).unwrap();
            let on: Vec<usize> = (0..9).filter(|&k| out[k] != 0.0).collect();
            assert_eq!(on.len(), 1);
            let (y, x) = (on[0] / 3, on[0] % 3);
            assert!(y.abs_diff(1) <= 1 && x.abs_diff(1) <= 1);
            seen.insert(on[0]);
        }
        assert_eq!(seen.len(), 9);
    }

    #[test]
    fn shift_off_the_edge_zero_pads() {
        let spec = AugmentSpec {
            shift_max_px: 1,
            ..AugmentSpec::identity(AugmentKind::Image)
        };
        let mut img = vec![0.0; 9];
        img[0] = 1.0;
        let mut rng = Rng::new(2);
        let lost = (0..200)
            .filter(|_| augment_one(&img, &spec, &mut rng).unwrap().iter().all(|&v| v == 0.0))
            .count();
        // 5 of the 9 offsets push the corner pixel out
        assert!(lost > 80 && lost < 140, "{lost}");
    }

    #[test]
    fn noise_only_views_have_the_requested_spread() {
        let sigma = 0.1;
        let spec = AugmentSpec {
            noise_sigma: sigma,
            ..AugmentSpec::identity(AugmentKind::Image)
        };
        // mid-gray keeps clamping out of reach at 5σ
        let img = vec![0.5; 4];
        let mut rng = Rng::new(3);
        let n = 10_000;
        let mut sums = [0.0; 4];
        let mut sq = [0.0; 4];
        for _ in 0..n {
            let v = augment_one(&img, &spec, &mut rng).unwrap();
            for k in 0..4 {
                sums[k] += v[k];
                sq[k] += v[k] * v[k];
            }
        }
        for k in 0..4 {
            let mean = sums[k] / n as f64;
            let std = (sq[k] / n as f64 - mean * mean).sqrt();
            assert!((std - sigma).abs() <= 0.05 * sigma, "pixel {k}: {std}");
        }
    }

    #[test]
    fn views_are_independent_draws() {
        let v = vec![1.0; 8];
        let (a, b) = augment_pair(&v, &AugmentSpec::vector(), &mut Rng::new(4)).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn erase_zeroes_a_rectangle() {
        let spec = AugmentSpec {
            erase_prob: 1.0,
            ..AugmentSpec::identity(AugmentKind::Image)
        };
        let img = vec![1.0; 36];
        let mut rng = Rng::new(5);
        for _ in 0..50 {
            let out = augment_one(&img, &spec, &mut rng).unwrap();
            let zeros: Vec<(usize, usize)> = (0..36).filter(|&k| out[k] == 0.0).map(|k| (k / 6, k % 6)).collect();
            assert!(!zeros.is_empty());
            let (y0, y1) = (zeros.iter().map(|p| p.0).min().unwrap(), zeros.iter().map(|p| p.0).max().unwrap());
            let (x0, x1) = (zeros.iter().map(|p| p.1).min().unwrap(), zeros.iter().map(|p| p.1).max().unwrap());
            assert_eq!(zeros.len(), (y1 - y0 + 1) * (x1 - x0 + 1));
            assert!(y1 - y0 < 3 && x1 - x0 < 3);
        }
    }

    #[test]
    fn rejects_bad_specs() {
        let mut rng = Rng::new(0);
        assert!(augment_one(&[0.0; 5], &AugmentSpec::image(), &mut rng).is_err());
        let bad = AugmentSpec {
            erase_prob: 1.5,
            ..AugmentSpec::image()
        };
        assert!(augment_one(&[0.0; 4], &bad, &mut rng).is_err());
        let bad = AugmentSpec {
            noise_sigma: -1.0,
            ..AugmentSpec::vector()
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn image_views_stay_in_unit_range(seed in any::<u64>(), side in 1usize..8, sigma in 0.0f64..2.0) {
            let mut rng = Rng::new(seed);
            let img: Vec<f64> = (0..side * side).map(|_| rng.uniform()).collect();
            let spec = AugmentSpec { noise_sigma: sigma, ..AugmentSpec::image() };
            let (a, b) = augment_pair(&img, &spec, &mut rng).unwrap();
            prop_assert!(a.iter().chain(&b).all(|v| (0.0..=1.0).contains(v)));
        }

        #[test]
        fn augmentation_replays_exactly(seed in any::<u64>()) {
            let img = vec![0.25; 16];
            let x = augment_pair(&img, &AugmentSpec::image(), &mut Rng::new(seed)).unwrap();
            let y = augment_pair(&img, &AugmentSpec::image(), &mut Rng::new(seed)).unwrap();
            prop_assert_eq!(x, y);
        }
    }
}

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::geometry::{farthest_point_sample, Point, PointCloud};
use crate::rng;

/// Acquisition artefacts that separate one domain from another.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DomainProfile {
    /// Standard deviation of per-coordinate Gaussian noise.
    pub noise: f64,
    /// Fraction of points removed behind a random half-space.
    pub occlusion: f64,
    /// Exponent of the non-uniform keep probability; 0 keeps density uniform.
    pub density_bias: f64,
    /// Fraction of the remaining points dropped uniformly at random.
    pub dropout: f64,
}

impl DomainProfile {
    /// No artefacts: output is a plain farthest-point subsample.
    pub const CLEAN: DomainProfile = DomainProfile {
        noise: 0.0,
        occlusion: 0.0,
        density_bias: 0.0,
        dropout: 0.0,
    };

    /// Scanner-like target domain used by the desk-scale experiments.
    pub const SHIFTED: DomainProfile = DomainProfile {
        noise: 0.03,
        occlusion: 0.35,
        density_bias: 1.5,
        dropout: 0.2,
    };

    pub fn validate(&self) -> Result<()> {
        let ok = self.noise >= 0.0
            && self.density_bias >= 0.0
            && (0.0..1.0).contains(&self.occlusion)
            && (0.0..1.0).contains(&self.dropout)
            && self.occlusion + self.dropout < 0.9;
        if ok && [self.noise, self.density_bias].iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "invalid domain profile {self:?}: need noise, bias >= 0 and occlusion + dropout < 0.9"
            )))
        }
    }
}

impl std::fmt::Display for DomainProfile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{},{},{},{}", self.noise, self.occlusion, self.density_bias, self.dropout)
    }
}

impl std::str::FromStr for DomainProfile {
    type Err = Error;

    /// `clean`, `shifted`, or `noise,occlusion,density_bias,dropout`.
    fn from_str(s: &str) -> Result<Self> {
        let p = match s {
            "clean" => DomainProfile::CLEAN,
            "shifted" => DomainProfile::SHIFTED,
            _ => {
                let v = s
                    .split(',')
                    .map(|x| x.trim().parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| Error::invalid(format!("domain profile '{s}': {e}")))?;
                let [noise, occlusion, density_bias, dropout] = v[..] else {
                    return Err(Error::invalid(format!(
                        "domain profile '{s}': expected clean, shifted or four comma-separated numbers"
                    )));
                };
                DomainProfile {
                    noise,
                    occlusion,
                    density_bias,
                    dropout,
                }
            }
        };
        p.validate()?;
        Ok(p)
    }
}

fn random_direction<R: Rng + ?Sized>(r: &mut R) -> Point {
    loop {
        let d: Point = std::array::from_fn(|_| r.sample(StandardNormal));
        let n = crate::geometry::norm(&d);
        if n > 1e-9 {
            return d.map(|v| v / n);
        }
    }
}

fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Applies the profile and returns the final cloud with, for each output
/// point, the index of the input point it came from.
///
/// Order: occlusion, density bias, dropout, noise, farthest-point sampling
/// down to `m_final`.
pub fn apply_domain_indexed(
    cloud: &PointCloud,
    profile: &DomainProfile,
    m_final: usize,
    seed: u64,
) -> Result<(PointCloud, Vec<usize>)> {
    profile.validate()?;
    let mut r = rng::seeded(seed);
    let pts = cloud.points();
    let mut keep: Vec<usize> = (0..pts.len()).collect();

    if profile.occlusion > 0.0 {
        let d = random_direction(&mut r);
        let mut proj: Vec<f64> = keep.iter().map(|&i| dot(&pts[i], &d)).collect();
        proj.sort_by(f64::total_cmp);
        let cut_at = ((1.0 - profile.occlusion) * proj.len() as f64).round() as usize;
        let plane = proj[cut_at.clamp(1, proj.len()) - 1];
        keep.retain(|&i| dot(&pts[i], &d) <= plane);
    }

    if profile.density_bias > 0.0 && !keep.is_empty() {
        let d = random_direction(&mut r);
        let proj: Vec<f64> = keep.iter().map(|&i| dot(&pts[i], &d)).collect();
        let lo = proj.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = proj.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = (hi - lo).max(1e-12);
        let mut survivors = Vec::with_capacity(keep.len());
        for (&i, &s) in keep.iter().zip(&proj) {
            let u = (0.3 + 0.7 * (s - lo) / span).powf(profile.density_bias);
            if r.random::<f64>() < u {
                survivors.push(i);
            }
        }
        keep = survivors;
    }

    if profile.dropout > 0.0 {
        keep.shuffle(&mut r);
        let n = ((1.0 - profile.dropout) * keep.len() as f64).round() as usize;
        keep.truncate(n);
        keep.sort_unstable();
    }

    if keep.len() < m_final || m_final == 0 {
        return Err(Error::invalid(format!(
            "apply_domain: {} points survive, {m_final} requested",
            keep.len()
        )));
    }

    let noisy: Vec<Point> = keep
        .iter()
        .map(|&i| {
            pts[i].map(|c| {
                if profile.noise > 0.0 {
                    c + profile.noise * r.sample::<f64, _>(StandardNormal)
                } else {
                    c
                }
            })
        })
        .collect();
    let noisy = PointCloud::new(noisy)?;
    let chosen = farthest_point_sample(&noisy, m_final, r.random())?;
    let out = noisy.select(&chosen);
    let origin = chosen.into_iter().map(|j| keep[j]).collect();
    Ok((out, origin))
}

pub fn apply_domain(cloud: &PointCloud, profile: &DomainProfile, m_final: usize, seed: u64) -> Result<PointCloud> {
    apply_domain_indexed(cloud, profile, m_final, seed).map(|(c, _)| c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::shapes::{generate_shape, ShapeFamily, ShapeSpec};
    use crate::geometry::farthest_point_sample;

    fn raw() -> PointCloud {
        generate_shape(&ShapeSpec::new(ShapeFamily::Torus, 0.1), 400, 11).unwrap().cloud
    }

    #[test]
    fn clean_profile_is_plain_fps() {
        let c = raw();
        let (out, idx) = apply_domain_indexed(&c, &DomainProfile::CLEAN, 64, 5).unwrap();
        // the FPS seed is the first draw of the stream
        let first_seed: u64 = rng::seeded(5).random();
        assert_eq!(idx, farthest_point_sample(&c, 64, first_seed).unwrap());
        assert_eq!(out, c.select(&idx));
    }

    #[test]
    fn half_occlusion_leaves_nothing_behind_the_plane() {
        let c = raw();
        let profile = DomainProfile {
            occlusion: 0.5,
            ..DomainProfile::CLEAN
        };
        let (_, idx) = apply_domain_indexed(&c, &profile, 32, 9).unwrap();
        // replay the direction draw
        let d = random_direction(&mut rng::seeded(9));
        let mut proj: Vec<f64> = c.points().iter().map(|p| dot(p, &d)).collect();
        proj.sort_by(f64::total_cmp);
        let plane = proj[199];
        assert!(idx.iter().all(|&i| dot(&c.points()[i], &d) <= plane));
    }

    #[test]
    fn output_size_and_reproducibility() {
        let c = raw();
        let a = apply_domain(&c, &DomainProfile::SHIFTED, 64, 1).unwrap();
        assert_eq!(a.len(), 64);
        assert_eq!(a, apply_domain(&c, &DomainProfile::SHIFTED, 64, 1).unwrap());
        assert_ne!(a, apply_domain(&c, &DomainProfile::SHIFTED, 64, 2).unwrap());
    }

    #[test]
    fn too_few_survivors() {
        let c = raw();
        let profile = DomainProfile {
            dropout: 0.8,
            ..DomainProfile::CLEAN
        };
        assert!(apply_domain(&c, &profile, 100, 0).is_err());
    }

    #[test]
    fn profile_parsing_and_validation() {
        assert_eq!("clean".parse::<DomainProfile>().unwrap(), DomainProfile::CLEAN);
        let p: DomainProfile = "0.01, 0.2, 1, 0.1".parse().unwrap();
        assert_eq!(p.density_bias, 1.0);
        assert!("0.1,0.5,0,0.5".parse::<DomainProfile>().is_err());
        assert!("0.1,0.5".parse::<DomainProfile>().is_err());
        let shifted = DomainProfile::SHIFTED;
        assert_eq!(shifted.to_string().parse::<DomainProfile>().unwrap(), shifted);
    }
}

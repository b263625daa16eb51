use std::f64::consts::{PI, TAU};

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{norm, Point, PointCloud};
use crate::rng;

/// Part classes used in segmentation mode.
pub const PART_LATERAL: usize = 0;
pub const PART_TOP: usize = 1;
pub const PART_BOTTOM: usize = 2;
pub const NUM_PARTS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ShapeFamily {
    Sphere,
    Box,
    Cylinder,
    Cone,
    Torus,
    PlaneCross,
}

impl ShapeFamily {
    pub const ALL: [ShapeFamily; 6] = [
        ShapeFamily::Sphere,
        ShapeFamily::Box,
        ShapeFamily::Cylinder,
        ShapeFamily::Cone,
        ShapeFamily::Torus,
        ShapeFamily::PlaneCross,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ShapeFamily::Sphere => "sphere",
            ShapeFamily::Box => "box",
            ShapeFamily::Cylinder => "cylinder",
            ShapeFamily::Cone => "cone",
            ShapeFamily::Torus => "torus",
            ShapeFamily::PlaneCross => "plane-cross",
        }
    }
}

impl std::str::FromStr for ShapeFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ShapeFamily::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown shape family '{s}'")))
    }
}

/// A shape family with per-sample anisotropic scale jitter: each axis is
/// stretched by a factor drawn uniformly from `[1 − scale_jitter, 1 + scale_jitter]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShapeSpec {
    pub family: ShapeFamily,
    pub scale_jitter: f64,
}

impl ShapeSpec {
    pub fn new(family: ShapeFamily, scale_jitter: f64) -> Self {
        ShapeSpec { family, scale_jitter }
    }
}

/// A generated surface sample with one part label per point.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelledCloud {
    pub cloud: PointCloud,
    pub parts: Vec<usize>,
}

// analytic dimensions before scale jitter
const BOX_HALF: [f64; 3] = [0.8, 0.6, 0.5];
const CYL_RADIUS: f64 = 0.5;
const CYL_HALF_HEIGHT: f64 = 0.8;
const CONE_RADIUS: f64 = 0.7;
const CONE_HALF_HEIGHT: f64 = 0.7;
const TORUS_MAJOR: f64 = 0.7;
const TORUS_MINOR: f64 = 0.25;
const CROSS_HALF_WIDTH: f64 = 0.8;
const CROSS_HALF_HEIGHT: f64 = 0.6;

/// Uniform surface sample of `m_raw` points, scaled so the farthest point
/// from the shape centre has norm 1.
pub fn generate_shape(spec: &ShapeSpec, m_raw: usize, seed: u64) -> Result<LabelledCloud> {
    if m_raw < 64 {
        return Err(Error::invalid(format!("generate_shape: need at least 64 raw points, got {m_raw}")));
    }
    if !(0.0..1.0).contains(&spec.scale_jitter) {
        return Err(Error::invalid("generate_shape: scale jitter must be in [0, 1)"));
    }
    let mut r = rng::seeded(seed);
    let j = spec.scale_jitter;
    let stretch: [f64; 3] = std::array::from_fn(|_| if j > 0.0 { r.random_range(1.0 - j..=1.0 + j) } else { 1.0 });
    let mut points = Vec::with_capacity(m_raw);
    let mut parts = Vec::with_capacity(m_raw);
    for _ in 0..m_raw {
        let (p, part) = surface_point(spec.family, &mut r);
        points.push([p[0] * stretch[0], p[1] * stretch[1], p[2] * stretch[2]]);
        parts.push(part);
    }
    let max = points.iter().map(norm).fold(0.0, f64::max);
    let points = points.into_iter().map(|p| p.map(|v| v / max)).collect();
    Ok(LabelledCloud {
        cloud: PointCloud::new(points)?,
        parts,
    })
}

fn height_part(z: f64, cut: f64) -> usize {
    if z > cut {
        PART_TOP
    } else if z < -cut {
        PART_BOTTOM
    } else {
        PART_LATERAL
    }
}

/// Picks index `i` with probability `weights[i] / Σ weights`.
fn pick<R: Rng + ?Sized>(weights: &[f64], r: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = r.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

fn surface_point<R: Rng + ?Sized>(family: ShapeFamily, r: &mut R) -> (Point, usize) {
    match family {
        ShapeFamily::Sphere => {
            let z: f64 = r.random_range(-1.0..=1.0);
            let phi = r.random_range(0.0..TAU);
            let s = (1.0 - z * z).max(0.0).sqrt();
            ([s * phi.cos(), s * phi.sin(), z], height_part(z, 0.5))
        }
        ShapeFamily::Box => {
            let [a, b, c] = BOX_HALF;
            // faces normal to x, y, z
            let axis = pick(&[b * c, a * c, a * b], r);
            let sign = if r.random::<bool>() { 1.0 } else { -1.0 };
            let mut p: Point = std::array::from_fn(|d| r.random_range(-BOX_HALF[d]..=BOX_HALF[d]));
            p[axis] = sign * BOX_HALF[axis];
            let part = match (axis, sign > 0.0) {
                (2, true) => PART_TOP,
                (2, false) => PART_BOTTOM,
                _ => PART_LATERAL,
            };
            (p, part)
        }
        ShapeFamily::Cylinder => {
            let (rad, h) = (CYL_RADIUS, CYL_HALF_HEIGHT);
            let cap_area = PI * rad * rad;
            let body_area = TAU * rad * 2.0 * h;
            let phi = r.random_range(0.0..TAU);
            match pick(&[body_area, cap_area, cap_area], r) {
                0 => ([rad * phi.cos(), rad * phi.sin(), r.random_range(-h..=h)], PART_LATERAL),
                i => {
                    let rr = rad * r.random::<f64>().sqrt();
                    let (z, part) = if i == 1 { (h, PART_TOP) } else { (-h, PART_BOTTOM) };
                    ([rr * phi.cos(), rr * phi.sin(), z], part)
                }
            }
        }
        ShapeFamily::Cone => {
            let (rad, h) = (CONE_RADIUS, CONE_HALF_HEIGHT);
            let slant = (rad * rad + 4.0 * h * h).sqrt();
            let lateral_area = PI * rad * slant;
            let base_area = PI * rad * rad;
            let phi = r.random_range(0.0..TAU);
            if pick(&[lateral_area, base_area], r) == 0 {
                // distance from the apex, as a fraction of the slant, has density ∝ t
                let t = r.random::<f64>().sqrt();
                let z = h - 2.0 * h * t;
                let part = if t < 1.0 / 3.0 { PART_TOP } else { PART_LATERAL };
                ([rad * t * phi.cos(), rad * t * phi.sin(), z], part)
            } else {
                let rr = rad * r.random::<f64>().sqrt();
                ([rr * phi.cos(), rr * phi.sin(), -h], PART_BOTTOM)
            }
        }
        ShapeFamily::Torus => {
            let (big, small) = (TORUS_MAJOR, TORUS_MINOR);
            // rejection on the tube angle gives area-uniform samples
            let theta = loop {
                let t = r.random_range(0.0..TAU);
                if r.random::<f64>() * (big + small) <= big + small * t.cos() {
                    break t;
                }
            };
            let phi = r.random_range(0.0..TAU);
            let ring = big + small * theta.cos();
            let z = small * theta.sin();
            ([ring * phi.cos(), ring * phi.sin(), z], height_part(z, 0.5 * small))
        }
        ShapeFamily::PlaneCross => {
            let u = r.random_range(-CROSS_HALF_WIDTH..=CROSS_HALF_WIDTH);
            let z = r.random_range(-CROSS_HALF_HEIGHT..=CROSS_HALF_HEIGHT);
            let p = if r.random::<bool>() { [u, 0.0, z] } else { [0.0, u, z] };
            (p, height_part(z, 0.5 * CROSS_HALF_HEIGHT))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plain(family: ShapeFamily) -> LabelledCloud {
        generate_shape(&ShapeSpec::new(family, 0.0), 512, 7).unwrap()
    }

    #[test]
    fn sphere_points_sit_on_the_unit_sphere() {
        for p in plain(ShapeFamily::Sphere).cloud.points() {
            assert!((norm(p) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn box_points_lie_on_a_face() {
        let s = plain(ShapeFamily::Box);
        let ext: [f64; 3] =
            std::array::from_fn(|d| s.cloud.points().iter().map(|p| p[d].abs()).fold(0.0, f64::max));
        // extents stay in the analytic proportions
        assert!((ext[0] / ext[2] - BOX_HALF[0] / BOX_HALF[2]).abs() < 1e-12);
        for p in s.cloud.points() {
            let on_face = (0..3).any(|d| (p[d].abs() - ext[d]).abs() < 1e-12);
            assert!(on_face, "{p:?}");
        }
    }

    #[test]
    fn cylinder_caps_get_cap_labels() {
        let s = plain(ShapeFamily::Cylinder);
        let top = s.cloud.points().iter().map(|p| p[2]).fold(f64::MIN, f64::max);
        for (p, &part) in s.cloud.points().iter().zip(&s.parts) {
            let at_cap = (p[2].abs() - top).abs() < 1e-12;
            let radius = (p[0] * p[0] + p[1] * p[1]).sqrt();
            let on_body = (radius - CYL_RADIUS * top / CYL_HALF_HEIGHT).abs() < 1e-12;
            match part {
                PART_TOP => assert!(at_cap && p[2] > 0.0),
                PART_BOTTOM => assert!(at_cap && p[2] < 0.0),
                _ => assert!(on_body),
            }
        }
        assert!(s.parts.contains(&PART_TOP) && s.parts.contains(&PART_BOTTOM));
    }

    #[test]
    fn every_family_is_normalised_labelled_and_seeded() {
        for family in ShapeFamily::ALL {
            let spec = ShapeSpec::new(family, 0.2);
            let a = generate_shape(&spec, 128, 3).unwrap();
            assert_eq!(a, generate_shape(&spec, 128, 3).unwrap());
            assert_ne!(a, generate_shape(&spec, 128, 4).unwrap());
            assert_eq!(a.parts.len(), 128);
            assert!(a.parts.iter().all(|&p| p < NUM_PARTS));
            let max = a.cloud.points().iter().map(norm).fold(0.0, f64::max);
            assert!((max - 1.0).abs() < 1e-12, "{}", family.name());
        }
    }

    #[test]
    fn too_few_raw_points() {
        assert!(generate_shape(&ShapeSpec::new(ShapeFamily::Sphere, 0.0), 63, 0).is_err());
    }

    #[test]
    fn family_names_round_trip() {
        for f in ShapeFamily::ALL {
            assert_eq!(f.name().parse::<ShapeFamily>().unwrap(), f);
        }
    }
}

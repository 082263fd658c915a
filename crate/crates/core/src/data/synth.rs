//! Parametric surface corpus: spheres, boxes, cylinders, tori, and
//! composites, uniformly sampled by surface area, randomly rotated and
//! scaled, then unit-normalized.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::geom::{normalize_unit, PointCloud};
use crate::numerics::Tensor;

/// The synthetic shape families; doubles as the category label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ShapeKind {
    Sphere,
    Box,
    Cylinder,
    Torus,
    Composite,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 5] = [
        ShapeKind::Sphere,
        ShapeKind::Box,
        ShapeKind::Cylinder,
        ShapeKind::Torus,
        ShapeKind::Composite,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ShapeKind::Sphere => "sphere",
            ShapeKind::Box => "box",
            ShapeKind::Cylinder => "cylinder",
            ShapeKind::Torus => "torus",
            ShapeKind::Composite => "composite",
        }
    }
}

impl std::str::FromStr for ShapeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ShapeKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown shape kind {s:?}"))
    }
}

/// `n` points on a randomly-sized, randomly-rotated instance of `kind`,
/// unit-normalized. Deterministic given `(kind, n, seed)`.
pub fn synth_shape(kind: ShapeKind, n: usize, seed: u64) -> PointCloud {
    assert!(n >= 2, "a shape needs at least 2 points to normalize");
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut pts = canonical_surface(kind, n, &mut rng);
    // anisotropic scale, then a uniform random rotation
    let scale = [
        rng.gen_range(0.6..1.4),
        rng.gen_range(0.6..1.4),
        rng.gen_range(0.6..1.4),
    ];
    let rot = random_rotation(&mut rng);
    for p in &mut pts {
        let s = [p[0] * scale[0], p[1] * scale[1], p[2] * scale[2]];
        for (i, row) in rot.iter().enumerate() {
            p[i] = row[0] * s[0] + row[1] * s[1] + row[2] * s[2];
        }
    }
    let data: Vec<f32> = pts.iter().flatten().map(|&v| v as f32).collect();
    let cloud = PointCloud::new(Tensor::new(vec![n, 3], data).expect("surface sample shape"))
        .expect("surface samples are finite");
    let (normed, _, _) = normalize_unit(&cloud).expect("parametric surfaces are non-degenerate");
    normed
}

/// Axis-aligned, origin-centered surface sample before rotation/scale.
/// Exposed within the crate so oracle tests can check surface membership.
pub(crate) fn canonical_surface(kind: ShapeKind, n: usize, rng: &mut ChaCha12Rng) -> Vec<[f64; 3]> {
    match kind {
        ShapeKind::Sphere => {
            let r = rng.gen_range(0.5..1.5);
            (0..n).map(|_| sphere_point(r, rng)).collect()
        }
        ShapeKind::Box => {
            let half = [
                rng.gen_range(0.3..1.0),
                rng.gen_range(0.3..1.0),
                rng.gen_range(0.3..1.0),
            ];
            box_surface(n, half, rng)
        }
        ShapeKind::Cylinder => {
            let r = rng.gen_range(0.3..0.8);
            let h = rng.gen_range(0.8..2.0);
            cylinder_surface(n, r, h, rng)
        }
        ShapeKind::Torus => {
            let major = rng.gen_range(0.6..1.0);
            let minor = rng.gen_range(0.15..0.4) * major;
            (0..n).map(|_| torus_point(major, minor, rng)).collect()
        }
        ShapeKind::Composite => {
            // a box core with a cylinder and sphere attached off-center
            let n_box = n * 2 / 5;
            let n_cyl = n * 3 / 10;
            let n_sph = n - n_box - n_cyl;
            let mut pts = box_surface(n_box, [0.6, 0.4, 0.4], rng);
            let offset_c = [rng.gen_range(-0.4..0.4), rng.gen_range(-0.4..0.4), 0.5];
            pts.extend(cylinder_surface(n_cyl, 0.25, 1.2, rng).into_iter().map(|p| {
                [p[0] + offset_c[0], p[1] + offset_c[1], p[2] + offset_c[2]]
            }));
            let offset_s = [0.7, rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)];
            pts.extend((0..n_sph).map(|_| {
                let p = sphere_point(0.35, rng);
                [p[0] + offset_s[0], p[1] + offset_s[1], p[2] + offset_s[2]]
            }));
            pts
        }
    }
}

fn sphere_point(r: f64, rng: &mut ChaCha12Rng) -> [f64; 3] {
    let z = rng.gen_range(-1.0..=1.0);
    let phi = rng.gen_range(0.0..TAU);
    let s = (1.0f64 - z * z).max(0.0).sqrt();
    [r * s * phi.cos(), r * s * phi.sin(), r * z]
}

fn box_surface(n: usize, half: [f64; 3], rng: &mut ChaCha12Rng) -> Vec<[f64; 3]> {
    let [a, b, c] = half;
    // face-pair areas for x, y, z-normal faces
    let areas = [b * c, a * c, a * b];
    let total: f64 = areas.iter().sum();
    (0..n)
        .map(|_| {
            let mut pick = rng.gen_range(0.0..total);
            let mut axis = 0usize;
            for (i, &area) in areas.iter().enumerate() {
                if pick < area {
                    axis = i;
                    break;
                }
                pick -= area;
            }
            let side = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            let mut p = [
                rng.gen_range(-a..=a),
                rng.gen_range(-b..=b),
                rng.gen_range(-c..=c),
            ];
            p[axis] = side * half[axis];
            p
        })
        .collect()
}

fn cylinder_surface(n: usize, r: f64, h: f64, rng: &mut ChaCha12Rng) -> Vec<[f64; 3]> {
    let side_area = TAU * r * h;
    let cap_area = TAU / 2.0 * r * r; // one cap: πr²
    let total = side_area + 2.0 * cap_area;
    (0..n)
        .map(|_| {
            let pick = rng.gen_range(0.0..total);
            let theta = rng.gen_range(0.0..TAU);
            if pick < side_area {
                let z = rng.gen_range(-h / 2.0..=h / 2.0);
                [r * theta.cos(), r * theta.sin(), z]
            } else {
                let rr = r * rng.gen::<f64>().sqrt();
                let z = if pick < side_area + cap_area { h / 2.0 } else { -h / 2.0 };
                [rr * theta.cos(), rr * theta.sin(), z]
            }
        })
        .collect()
}

fn torus_point(major: f64, minor: f64, rng: &mut ChaCha12Rng) -> [f64; 3] {
    let theta = rng.gen_range(0.0..TAU);
    // rejection-sample the minor angle against the area element R + r·cosψ
    let psi = loop {
        let cand = rng.gen_range(0.0..TAU);
        let accept = (major + minor * cand.cos()) / (major + minor);
        if rng.gen::<f64>() < accept {
            break cand;
        }
    };
    let ring = major + minor * psi.cos();
    [ring * theta.cos(), ring * theta.sin(), minor * psi.sin()]
}

/// Uniform random rotation matrix (rows) via Shoemake's quaternion method.
fn random_rotation(rng: &mut ChaCha12Rng) -> [[f64; 3]; 3] {
    let u1: f64 = rng.gen();
    let u2: f64 = rng.gen();
    let u3: f64 = rng.gen();
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    let (x, y) = (a * (TAU * u2).sin(), a * (TAU * u2).cos());
    let (z, w) = (b * (TAU * u3).sin(), b * (TAU * u3).cos());
    [
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
        ],
        [
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
        ],
        [
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        for kind in ShapeKind::ALL {
            let a = synth_shape(kind, 256, 11);
            let b = synth_shape(kind, 256, 11);
            assert_eq!(a, b, "{kind:?} not deterministic");
            let c = synth_shape(kind, 256, 12);
            assert_ne!(a, c, "{kind:?} ignores the seed");
        }
    }

    #[test]
    fn sphere_points_lie_on_the_sphere() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let r = 1.25;
        for _ in 0..500 {
            let p = sphere_point(r, &mut rng);
            let norm = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            assert!((norm - r).abs() < 1e-5);
        }
    }

    #[test]
    fn box_points_lie_on_a_face_plane() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let half = [0.7, 0.5, 0.9];
        for p in box_surface(500, half, &mut rng) {
            let on_face = (0..3).any(|k| (p[k].abs() - half[k]).abs() < 1e-9);
            assert!(on_face, "point {p:?} not on any face");
            for k in 0..3 {
                assert!(p[k].abs() <= half[k] + 1e-9);
            }
        }
    }

    #[test]
    fn cylinder_points_lie_on_side_or_caps() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let (r, h) = (0.5, 1.5);
        for p in cylinder_surface(500, r, h, &mut rng) {
            let radial = (p[0] * p[0] + p[1] * p[1]).sqrt();
            let on_side = (radial - r).abs() < 1e-9 && p[2].abs() <= h / 2.0 + 1e-9;
            let on_cap = (p[2].abs() - h / 2.0).abs() < 1e-9 && radial <= r + 1e-9;
            assert!(on_side || on_cap, "point {p:?} off the cylinder");
        }
    }

    #[test]
    fn torus_points_satisfy_the_implicit_equation() {
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let (major, minor) = (0.8, 0.2);
        for _ in 0..500 {
            let p = torus_point(major, minor, &mut rng);
            let ring = (p[0] * p[0] + p[1] * p[1]).sqrt() - major;
            let tube = (ring * ring + p[2] * p[2]).sqrt();
            assert!((tube - minor).abs() < 1e-9, "point {p:?} off the torus");
        }
    }

    #[test]
    fn shapes_are_unit_normalized() {
        for kind in ShapeKind::ALL {
            let cloud = synth_shape(kind, 512, 20);
            assert_eq!(cloud.len(), 512);
            let max_norm = cloud
                .iter()
                .map(|p| p.iter().map(|&c| (c as f64).powi(2)).sum::<f64>().sqrt())
                .fold(0.0f64, f64::max);
            assert!((max_norm - 1.0).abs() < 1e-5, "{kind:?} max norm {max_norm}");
            let n = cloud.len() as f64;
            for k in 0..3 {
                let mean = cloud.iter().map(|p| p[k] as f64).sum::<f64>() / n;
                assert!(mean.abs() < 1e-5, "{kind:?} centroid off origin");
            }
        }
    }

    #[test]
    fn rotation_matrices_are_orthonormal() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        for _ in 0..20 {
            let m = random_rotation(&mut rng);
            for i in 0..3 {
                for j in 0..3 {
                    let dot: f64 = (0..3).map(|k| m[i][k] * m[j][k]).sum();
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((dot - want).abs() < 1e-12);
                }
            }
            // proper rotation: determinant +1
            let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
            assert!((det - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_kind_round_trips_through_strings() {
        for kind in ShapeKind::ALL {
            let parsed: ShapeKind = kind.as_str().parse().unwrap();
            assert_eq!(parsed, kind);
        }
        assert!("pyramid".parse::<ShapeKind>().is_err());
    }
}

//! Point-cloud and viewpoint value types plus unit normalization.

use crate::numerics::Tensor;

use super::GeomError;

/// An `n×3` set of finite points, `n ≥ 1`. Row order is meaningful only as
/// storage; the metrics in this module treat clouds as sets.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    points: Tensor<f32>,
}

impl PointCloud {
    pub fn new(points: Tensor<f32>) -> Result<Self, GeomError> {
        if points.rank() != 2 || points.shape()[1] != 3 {
            return Err(GeomError::BadCloud {
                shape: points.shape().to_vec(),
            });
        }
        if let Some(bad) = points.data().iter().position(|v| !v.is_finite()) {
            return Err(GeomError::NonFinite { index: bad / 3 });
        }
        Ok(PointCloud { points })
    }

    pub fn from_points(pts: &[[f32; 3]]) -> Result<Self, GeomError> {
        let data: Vec<f32> = pts.iter().flatten().copied().collect();
        let tensor = Tensor::new(vec![pts.len().max(1), 3], data).map_err(|_| {
            GeomError::BadCloud {
                shape: vec![pts.len(), 3],
            }
        })?;
        PointCloud::new(tensor)
    }

    pub fn len(&self) -> usize {
        self.points.shape()[0]
    }

    pub fn point(&self, i: usize) -> [f32; 3] {
        let d = self.points.data();
        [d[3 * i], d[3 * i + 1], d[3 * i + 2]]
    }

    pub fn iter(&self) -> impl Iterator<Item = [f32; 3]> + '_ {
        (0..self.len()).map(move |i| self.point(i))
    }

    pub fn tensor(&self) -> &Tensor<f32> {
        &self.points
    }

    pub fn into_tensor(self) -> Tensor<f32> {
        self.points
    }

    /// Rows picked by index, in the order given. Indices must be in range.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        let d = self.points.data();
        let mut out = Vec::with_capacity(indices.len() * 3);
        for &i in indices {
            out.extend_from_slice(&d[3 * i..3 * i + 3]);
        }
        PointCloud {
            points: Tensor::new(vec![indices.len(), 3], out).expect("selected cloud shape"),
        }
    }

    /// `self` rows followed by `other` rows.
    pub fn concat(&self, other: &PointCloud) -> PointCloud {
        let mut data = self.points.data().to_vec();
        data.extend_from_slice(other.points.data());
        PointCloud {
            points: Tensor::new(vec![self.len() + other.len(), 3], data)
                .expect("concatenated cloud shape"),
        }
    }
}

/// A unit direction used to place the cropping viewpoint.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Viewpoint {
    direction: [f32; 3],
}

impl Viewpoint {
    /// Normalizes `v`; rejects zero or non-finite vectors.
    pub fn new(v: [f32; 3]) -> Result<Self, GeomError> {
        if v.iter().any(|c| !c.is_finite()) {
            return Err(GeomError::BadDirection);
        }
        let n = (v.iter().map(|&c| (c as f64) * (c as f64)).sum::<f64>()).sqrt();
        if n == 0.0 {
            return Err(GeomError::BadDirection);
        }
        Ok(Viewpoint {
            direction: [
                (v[0] as f64 / n) as f32,
                (v[1] as f64 / n) as f32,
                (v[2] as f64 / n) as f32,
            ],
        })
    }

    pub fn direction(&self) -> [f32; 3] {
        self.direction
    }
}

/// The 8 fixed evaluation viewpoints: normalized cube corners, ordered by the
/// 3-bit pattern of (x,y,z) signs with 0 ↦ −1 and 1 ↦ +1.
pub fn eval_viewpoints() -> [Viewpoint; 8] {
    let mut out = [Viewpoint {
        direction: [0.0; 3],
    }; 8];
    for (i, vp) in out.iter_mut().enumerate() {
        let sign = |bit: usize| if (i >> bit) & 1 == 1 { 1.0 } else { -1.0 };
        *vp = Viewpoint::new([sign(2), sign(1), sign(0)]).expect("cube corner is nonzero");
    }
    out
}

/// Center at the centroid and scale so the farthest point has norm 1.
/// Returns the normalized cloud plus the `(centroid, scale)` that invert it.
pub fn normalize_unit(cloud: &PointCloud) -> Result<(PointCloud, [f32; 3], f32), GeomError> {
    let n = cloud.len() as f64;
    let mut c = [0.0f64; 3];
    for p in cloud.iter() {
        for k in 0..3 {
            c[k] += p[k] as f64;
        }
    }
    for v in &mut c {
        *v /= n;
    }
    let mut max_norm = 0.0f64;
    for p in cloud.iter() {
        let mut sq = 0.0;
        for k in 0..3 {
            let d = p[k] as f64 - c[k];
            sq += d * d;
        }
        max_norm = max_norm.max(sq.sqrt());
    }
    if max_norm == 0.0 {
        return Err(GeomError::Degenerate);
    }
    let mut data = Vec::with_capacity(cloud.len() * 3);
    for p in cloud.iter() {
        for k in 0..3 {
            data.push(((p[k] as f64 - c[k]) / max_norm) as f32);
        }
    }
    let normed = PointCloud::new(
        Tensor::new(vec![cloud.len(), 3], data).expect("normalized cloud shape"),
    )?;
    Ok((
        normed,
        [c[0] as f32, c[1] as f32, c[2] as f32],
        max_norm as f32,
    ))
}

/// Inverse of [`normalize_unit`]: `p * scale + centroid` per point.
pub fn denormalize(cloud: &PointCloud, centroid: [f32; 3], scale: f32) -> PointCloud {
    let mut data = Vec::with_capacity(cloud.len() * 3);
    for p in cloud.iter() {
        for k in 0..3 {
            data.push(p[k] * scale + centroid[k]);
        }
    }
    PointCloud::new(Tensor::new(vec![cloud.len(), 3], data).expect("denormalized cloud shape"))
        .expect("denormalization preserves validity")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cloud_rejects_wrong_shape_and_nonfinite() {
        assert!(matches!(
            PointCloud::new(Tensor::zeros(vec![4, 2])),
            Err(GeomError::BadCloud { .. })
        ));
        let t = Tensor::new(vec![2, 3], vec![0.0, 0.0, 0.0, 1.0, f32::NAN, 0.0]).unwrap();
        assert!(matches!(
            PointCloud::new(t),
            Err(GeomError::NonFinite { index: 1 })
        ));
    }

    #[test]
    fn viewpoints_are_unit_and_distinct() {
        let vps = eval_viewpoints();
        for vp in &vps {
            let n: f64 = vp
                .direction()
                .iter()
                .map(|&c| (c as f64) * (c as f64))
                .sum();
            assert!((n.sqrt() - 1.0).abs() < 1e-6);
        }
        for i in 0..8 {
            for j in i + 1..8 {
                assert_ne!(vps[i].direction(), vps[j].direction());
            }
        }
        // binary-count order: index 0 is (−,−,−), index 7 is (+,+,+)
        assert!(vps[0].direction().iter().all(|&c| c < 0.0));
        assert!(vps[7].direction().iter().all(|&c| c > 0.0));
    }

    #[test]
    fn normalize_cube_corners_is_pure_scaling() {
        let mut pts = Vec::new();
        for i in 0..8u8 {
            pts.push([
                if i & 4 != 0 { 1.0 } else { -1.0 },
                if i & 2 != 0 { 1.0 } else { -1.0 },
                if i & 1 != 0 { 1.0 } else { -1.0 },
            ]);
        }
        let cloud = PointCloud::from_points(&pts).unwrap();
        let (normed, centroid, scale) = normalize_unit(&cloud).unwrap();
        assert_eq!(centroid, [0.0; 3]);
        assert!((scale - 3.0f32.sqrt()).abs() < 1e-6);
        let inv_sqrt3 = 1.0 / 3.0f64.sqrt();
        for (p, q) in cloud.iter().zip(normed.iter()) {
            for k in 0..3 {
                assert!((q[k] as f64 - p[k] as f64 * inv_sqrt3).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn normalize_rejects_degenerate() {
        let cloud = PointCloud::from_points(&[[1.0, 2.0, 3.0]; 5]).unwrap();
        assert!(matches!(normalize_unit(&cloud), Err(GeomError::Degenerate)));
    }

    #[test]
    fn normalize_round_trips() {
        let cloud = PointCloud::from_points(&[
            [4.0, -2.0, 7.5],
            [1.0, 0.0, -3.0],
            [8.0, 8.0, 8.0],
            [-5.0, 2.5, 0.5],
        ])
        .unwrap();
        let (normed, centroid, scale) = normalize_unit(&cloud).unwrap();
        // invariants: centroid at origin, max norm 1
        let n = normed.len() as f64;
        for k in 0..3 {
            let mean: f64 = normed.iter().map(|p| p[k] as f64).sum::<f64>() / n;
            assert!(mean.abs() < 1e-5);
        }
        let max_norm = normed
            .iter()
            .map(|p| p.iter().map(|&c| (c as f64).powi(2)).sum::<f64>().sqrt())
            .fold(0.0f64, f64::max);
        assert!((max_norm - 1.0).abs() < 1e-5);
        let back = denormalize(&normed, centroid, scale);
        for (p, q) in cloud.iter().zip(back.iter()) {
            for k in 0..3 {
                assert!((p[k] - q[k]).abs() < 1e-5);
            }
        }
    }
}

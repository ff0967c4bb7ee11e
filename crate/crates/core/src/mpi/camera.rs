use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Mat3 = [[f64; 3]; 3];

pub const IDENTITY3: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// Pinhole intrinsics in pixels. Pixel centres sit at integer coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraModel {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Self {
        CameraModel { fx, fy, cx, cy }
    }

    /// Focal length of half the image width (roughly a 90 degree horizontal
    /// field of view) with the principal point at the image centre.
    pub fn default_for(width: usize, height: usize) -> Self {
        let f = 0.5 * width as f64;
        CameraModel {
            fx: f,
            fy: f,
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
        }
    }

    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::Geometry(format!(
                "invalid focal lengths in {self:?}"
            )));
        }
        if self.cx < 0.0 || self.cx >= width as f64 || self.cy < 0.0 || self.cy >= height as f64 {
            return Err(Error::Geometry(format!(
                "principal point ({}, {}) outside a {width}x{height} image",
                self.cx, self.cy
            )));
        }
        Ok(())
    }

    /// Intrinsics of the sub-image whose top-left corner is `(x0, y0)`.
    pub fn cropped(&self, x0: usize, y0: usize) -> Self {
        CameraModel {
            cx: self.cx - x0 as f64,
            cy: self.cy - y0 as f64,
            ..*self
        }
    }

    pub fn matrix(&self) -> Mat3 {
        [
            [self.fx, 0.0, self.cx],
            [0.0, self.fy, self.cy],
            [0.0, 0.0, 1.0],
        ]
    }

    pub fn inverse_matrix(&self) -> Mat3 {
        [
            [1.0 / self.fx, 0.0, -self.cx / self.fx],
            [0.0, 1.0 / self.fy, -self.cy / self.fy],
            [0.0, 0.0, 1.0],
        ]
    }
}

/// Rigid motion taking reference-camera coordinates to target-camera
/// coordinates: `X_t = R X_s + t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelativePose {
    pub rotation: Mat3,
    pub translation: [f64; 3],
}

impl Default for RelativePose {
    fn default() -> Self {
        RelativePose::identity()
    }
}

impl RelativePose {
    pub fn identity() -> Self {
        RelativePose {
            rotation: IDENTITY3,
            translation: [0.0; 3],
        }
    }

    pub fn new(rotation: Mat3, translation: [f64; 3]) -> Result<Self> {
        let pose = RelativePose {
            rotation,
            translation,
        };
        pose.validate()?;
        Ok(pose)
    }

    pub fn translation(tx: f64, ty: f64, tz: f64) -> Self {
        RelativePose {
            rotation: IDENTITY3,
            translation: [tx, ty, tz],
        }
    }

    /// Intrinsic XYZ Euler angles in degrees: `R = Rx(rx) Ry(ry) Rz(rz)`.
    pub fn from_euler_deg(translation: [f64; 3], rx: f64, ry: f64, rz: f64) -> Self {
        RelativePose {
            rotation: euler_xyz(rx.to_radians(), ry.to_radians(), rz.to_radians()),
            translation,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.rotation == IDENTITY3 && self.translation == [0.0; 3]
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.rotation;
        if r.iter()
            .flatten()
            .chain(&self.translation)
            .any(|v| !v.is_finite())
        {
            return Err(Error::Geometry("non-finite pose".into()));
        }
        let rtr = mat_mul(&transpose(r), r);
        for i in 0..3 {
            for j in 0..3 {
                if (rtr[i][j] - IDENTITY3[i][j]).abs() > 1e-6 {
                    return Err(Error::Geometry("rotation is not orthonormal".into()));
                }
            }
        }
        if (det(r) - 1.0).abs() > 1e-6 {
            return Err(Error::Geometry("rotation has determinant != 1".into()));
        }
        Ok(())
    }
}

fn euler_xyz(a: f64, b: f64, c: f64) -> Mat3 {
    let (sa, ca) = a.sin_cos();
    let (sb, cb) = b.sin_cos();
    let (sc, cc) = c.sin_cos();
    let rx = [[1.0, 0.0, 0.0], [0.0, ca, -sa], [0.0, sa, ca]];
    let ry = [[cb, 0.0, sb], [0.0, 1.0, 0.0], [-sb, 0.0, cb]];
    let rz = [[cc, -sc, 0.0], [sc, cc, 0.0], [0.0, 0.0, 1.0]];
    mat_mul(&mat_mul(&rx, &ry), &rz)
}

/// Ranges of the uniformly sampled render poses.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoseSamplerConfig {
    pub translation_range: f64,
    pub rotation_range_deg: f64,
}

impl Default for PoseSamplerConfig {
    fn default() -> Self {
        PoseSamplerConfig {
            translation_range: 0.5,
            rotation_range_deg: 8.0,
        }
    }
}

impl PoseSamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.translation_range >= 0.0 && self.rotation_range_deg >= 0.0) {
            return Err(Error::Config(format!(
                "pose ranges must be non-negative: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Draws `tx, ty, tz` then `rx, ry, rz`, each uniform in its symmetric range.
pub fn sample_render_pose<R: Rng + ?Sized>(cfg: &PoseSamplerConfig, rng: &mut R) -> RelativePose {
    let t = cfg.translation_range;
    let r = cfg.rotation_range_deg;
    let mut draw = |range: f64| {
        if range > 0.0 {
            rng.gen_range(-range..=range)
        } else {
            0.0
        }
    };
    let translation = [draw(t), draw(t), draw(t)];
    let (rx, ry, rz) = (draw(r), draw(r), draw(r));
    RelativePose::from_euler_deg(translation, rx, ry, rz)
}

/// Homography mapping reference pixels to target pixels for the
/// fronto-parallel plane `Z = depth` of the reference camera:
/// `H = K (R + t n^T / d) K^-1` with `n = (0, 0, 1)`.
pub fn plane_homography(cam: &CameraModel, pose: &RelativePose, depth: f64) -> Result<Mat3> {
    if !(depth > 0.0 && depth.is_finite()) {
        return Err(Error::Geometry(format!(
            "plane depth must be positive, got {depth}"
        )));
    }
    let mut m = pose.rotation;
    for (row, t) in m.iter_mut().zip(pose.translation) {
        row[2] += t / depth;
    }
    Ok(mat_mul(&mat_mul(&cam.matrix(), &m), &cam.inverse_matrix()))
}

/// Inverse of the plane homography, used to pull target pixels from the
/// reference plane.
pub fn inverse_plane_homography(
    cam: &CameraModel,
    pose: &RelativePose,
    depth: f64,
) -> Result<Mat3> {
    let h = plane_homography(cam, pose, depth)?;
    invert(&h).ok_or_else(|| {
        Error::Geometry(format!(
            "plane at depth {depth} is degenerate under pose {:?}",
            pose.translation
        ))
    })
}

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn transpose(a: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[j][i];
        }
    }
    out
}

pub fn det(a: &Mat3) -> f64 {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
        - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

/// Adjugate inverse; `None` when the matrix is numerically singular
/// relative to its scale.
pub fn invert(a: &Mat3) -> Option<Mat3> {
    let d = det(a);
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    if !d.is_finite() || scale == 0.0 || d.abs() <= 1e-12 * scale.powi(3) {
        return None;
    }
    let mut inv = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let (r0, r1) = ((j + 1) % 3, (j + 2) % 3);
            let (c0, c1) = ((i + 1) % 3, (i + 2) % 3);
            inv[i][j] = (a[r0][c0] * a[r1][c1] - a[r0][c1] * a[r1][c0]) / d;
        }
    }
    Some(inv)
}

pub fn apply(h: &Mat3, x: f64, y: f64) -> [f64; 3] {
    [
        h[0][0] * x + h[0][1] * y + h[0][2],
        h[1][0] * x + h[1][1] * y + h[1][2],
        h[2][0] * x + h[2][1] * y + h[2][2],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_ranges_give_identity() {
        let cfg = PoseSamplerConfig {
            translation_range: 0.0,
            rotation_range_deg: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sample_render_pose(&cfg, &mut rng).is_identity());
    }

    #[test]
    fn sampled_rotations_are_proper() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            sample_render_pose(&PoseSamplerConfig::default(), &mut rng)
                .validate()
                .unwrap();
        }
    }

    #[test]
    fn inverse_round_trips() {
        let pose = RelativePose::from_euler_deg([0.1, -0.2, 0.05], 3.0, -4.0, 1.0);
        let cam = CameraModel::default_for(64, 48);
        let h = plane_homography(&cam, &pose, 2.5).unwrap();
        let hi = invert(&h).unwrap();
        let p = mat_mul(&h, &hi);
        for i in 0..3 {
            for j in 0..3 {
                assert!((p[i][j] - IDENTITY3[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn plane_through_target_centre_is_degenerate() {
        // The target camera centre lies on the plane: every ray is tangent.
        let cam = CameraModel::default_for(16, 16);
        let pose = RelativePose::translation(0.0, 0.0, -2.0);
        assert!(matches!(
            inverse_plane_homography(&cam, &pose, 2.0),
            Err(Error::Geometry(_))
        ));
    }

    #[test]
    fn principal_point_must_be_inside() {
        assert!(CameraModel::new(10.0, 10.0, 16.0, 3.0)
            .validate(16, 16)
            .is_err());
        assert!(CameraModel::default_for(16, 16).validate(16, 16).is_ok());
    }
}

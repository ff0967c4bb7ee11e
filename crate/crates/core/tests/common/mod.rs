//! Brute-force reference implementations shared by the integration tests.
#![allow(dead_code)]

use mpijpeg::mpi::{CameraModel, MpiStack, RelativePose};
use rand::Rng;

pub type M3 = [[f64; 3]; 3];

/// A random stack with depths spread over `[1, 50]`, farthest first.
pub fn random_stack<R: Rng>(rng: &mut R, w: usize, h: usize, planes: usize) -> MpiStack {
    let mut depths: Vec<f64> = (0..planes).map(|_| rng.gen_range(1.0..50.0)).collect();
    depths.sort_by(|a, b| b.partial_cmp(a).unwrap());
    depths.dedup();
    while depths.len() < planes {
        let last = *depths.last().unwrap();
        depths.push(last * 0.9);
    }
    let data = (0..planes * 4 * w * h)
        .map(|_| rng.gen_range(0.0f32..=1.0))
        .collect();
    MpiStack::with_planes(w, h, depths, data).unwrap()
}

pub fn random_small_pose<R: Rng>(rng: &mut R) -> RelativePose {
    let t = [0, 1, 2].map(|_| rng.gen_range(-0.5..0.5));
    RelativePose::from_euler_deg(
        t,
        rng.gen_range(-8.0..8.0),
        rng.gen_range(-8.0..8.0),
        rng.gen_range(-8.0..8.0),
    )
}

fn mul(a: &M3, b: &M3) -> M3 {
    let mut o = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                o[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    o
}

fn inverse(m: &M3) -> M3 {
    let c =
        |r0: usize, c0: usize, r1: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    let cof = [
        [c(1, 1, 2, 2), -c(1, 0, 2, 2), c(1, 0, 2, 1)],
        [-c(0, 1, 2, 2), c(0, 0, 2, 2), -c(0, 0, 2, 1)],
        [c(0, 1, 1, 2), -c(0, 0, 1, 2), c(0, 0, 1, 1)],
    ];
    let det = m[0][0] * cof[0][0] + m[0][1] * cof[0][1] + m[0][2] * cof[0][2];
    let mut inv = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            inv[i][j] = cof[j][i] / det;
        }
    }
    inv
}

/// Back-to-front over compositing of straight-alpha planes on black.
pub fn composite_oracle(mpi: &MpiStack) -> Vec<f64> {
    let (w, h) = (mpi.width(), mpi.height());
    let mut out = vec![0.0; 3 * w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0f64; 3];
            for i in 0..mpi.num_planes() {
                let p = mpi.plane(i);
                let a = p.get(x, y, 3) as f64;
                for (c, v) in acc.iter_mut().enumerate() {
                    *v = p.get(x, y, c) as f64 * a + *v * (1.0 - a);
                }
            }
            for c in 0..3 {
                out[(c * h + y) * w + x] = acc[c];
            }
        }
    }
    out
}

/// Projects every target pixel onto each source plane through the
/// plane-induced homography, samples bilinearly (zero outside), and
/// composites back to front.
pub fn render_oracle(mpi: &MpiStack, pose: &RelativePose, cam: &CameraModel) -> Vec<f64> {
    let (w, h) = (mpi.width(), mpi.height());
    let k = [
        [cam.fx, 0.0, cam.cx],
        [0.0, cam.fy, cam.cy],
        [0.0, 0.0, 1.0],
    ];
    let k_inv = inverse(&k);
    let mut out = vec![0.0; 3 * w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0f64; 3];
            for (i, &d) in mpi.depths().iter().enumerate() {
                let mut m = pose.rotation;
                for r in 0..3 {
                    m[r][2] += pose.translation[r] / d;
                }
                let hinv = inverse(&mul(&mul(&k, &m), &k_inv));
                let q =
                    [0, 1, 2].map(|r| hinv[r][0] * x as f64 + hinv[r][1] * y as f64 + hinv[r][2]);
                let mut rgba = [0.0f64; 4];
                if q[2] > 0.0 {
                    let (u, v) = (q[0] / q[2], q[1] / q[2]);
                    let (u0, v0) = (u.floor(), v.floor());
                    let p = mpi.plane(i);
                    for (dx, dy) in [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)] {
                        let (sx, sy) = (u0 + dx, v0 + dy);
                        let wt = (1.0 - (u - sx).abs()) * (1.0 - (v - sy).abs());
                        if sx >= 0.0 && sy >= 0.0 && sx < w as f64 && sy < h as f64 {
                            for (c, val) in rgba.iter_mut().enumerate() {
                                *val += wt * p.get(sx as usize, sy as usize, c) as f64;
                            }
                        }
                    }
                }
                for c in 0..3 {
                    acc[c] = rgba[c] * rgba[3] + acc[c] * (1.0 - rgba[3]);
                }
            }
            for c in 0..3 {
                out[(c * h + y) * w + x] = acc[c];
            }
        }
    }
    out
}

pub fn max_abs_diff(a: &[f64], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, &y)| (x - y as f64).abs())
        .fold(0.0, f64::max)
}

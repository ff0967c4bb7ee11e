use super::stack::MpiStack;
use crate::error::{Error, Result};
use crate::PREMERGE_PLANES;

const GROUP: usize = 4;

/// Collapses a 128-plane stack into 32 planes by over-compositing each run
/// of four adjacent planes.
///
/// A merged plane carries alpha `1 - prod(1 - a_k)` and the group's
/// premultiplied colour divided by that alpha, so compositing it over any
/// background gives the same result as compositing its four members. Its
/// depth is the geometric mean of the member depths.
pub fn merge_planes(mpi: &MpiStack) -> Result<MpiStack> {
    if mpi.num_planes() != PREMERGE_PLANES {
        return Err(Error::shape(format!(
            "plane merging expects {PREMERGE_PLANES} planes, got {}",
            mpi.num_planes()
        )));
    }
    merge_groups(mpi)
}

/// Merging for any plane count divisible by four.
pub fn merge_groups(mpi: &MpiStack) -> Result<MpiStack> {
    let p = mpi.num_planes();
    if !p.is_multiple_of(GROUP) {
        return Err(Error::shape(format!(
            "{p} planes do not split into groups of {GROUP}"
        )));
    }
    let hw = mpi.width() * mpi.height();
    let mut data = Vec::with_capacity(mpi.data().len() / GROUP);
    let mut depths = Vec::with_capacity(p / GROUP);
    for g in 0..p / GROUP {
        let mut premul = vec![0.0f64; 3 * hw];
        let mut trans = vec![1.0f64; hw];
        for i in g * GROUP..(g + 1) * GROUP {
            let plane = mpi.plane_data(i);
            let alpha = &plane[3 * hw..];
            for c in 0..3 {
                for k in 0..hw {
                    let a = alpha[k] as f64;
                    premul[c * hw + k] =
                        plane[c * hw + k] as f64 * a + premul[c * hw + k] * (1.0 - a);
                }
            }
            for k in 0..hw {
                trans[k] *= 1.0 - alpha[k] as f64;
            }
        }
        let mut merged = vec![0.0f32; 4 * hw];
        for k in 0..hw {
            let a = 1.0 - trans[k];
            merged[3 * hw + k] = a as f32;
            if a > 0.0 {
                for c in 0..3 {
                    merged[c * hw + k] = (premul[c * hw + k] / a).clamp(0.0, 1.0) as f32;
                }
            }
        }
        data.extend(merged);
        let log_mean = mpi.depths()[g * GROUP..(g + 1) * GROUP]
            .iter()
            .map(|d| d.ln())
            .sum::<f64>()
            / GROUP as f64;
        depths.push(log_mean.exp());
    }
    MpiStack::with_planes(mpi.width(), mpi.height(), depths, data)
}

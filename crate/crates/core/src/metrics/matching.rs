use super::MetricError;
use crate::events::{ApsFrame, Micros};
use crate::image::GrayImage;

/// Pairs every ground-truth frame with the reconstruction nearest in time;
/// ties go to the earlier reconstruction. Returns `(gt_index, recon_index)`.
pub fn match_closest_timestamp(
    gt: &[ApsFrame],
    recon: &[(Micros, GrayImage)],
) -> Result<Vec<(usize, usize)>, MetricError> {
    let times: Vec<Micros> = recon.iter().map(|(t, _)| *t).collect();
    let gt_times: Vec<Micros> = gt.iter().map(|f| f.t).collect();
    match_times(&gt_times, &times)
}

/// Timestamp-only core of [`match_closest_timestamp`]; both lists sorted.
pub fn match_times(gt: &[Micros], recon: &[Micros]) -> Result<Vec<(usize, usize)>, MetricError> {
    if gt.is_empty() || recon.is_empty() {
        return Err(MetricError::EmptyList);
    }
    Ok(gt
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let hi = recon.partition_point(|&r| r < t);
            let best = match (hi.checked_sub(1), recon.get(hi)) {
                (Some(lo), Some(&after)) => {
                    // First index of the run of equal timestamps before `t`.
                    let lo = recon.partition_point(|&r| r < recon[lo]);
                    if t - recon[lo] <= after - t {
                        lo
                    } else {
                        hi
                    }
                }
                (Some(lo), None) => recon.partition_point(|&r| r < recon[lo]),
                (None, _) => hi,
            };
            (i, best)
        })
        .collect())
}

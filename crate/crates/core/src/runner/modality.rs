//! Per-modality hit statistics of a record stream.

use serde::Serialize;

use crate::domain::SampleRecord;
use crate::kdtree::dist2;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModalityHits {
    pub center: Vec<f64>,
    pub hits: usize,
    /// Index of the first record assigned to this modality.
    pub first_hit: Option<usize>,
}

/// Assigns every critical record (`y > delta`) to its nearest centre (raw
/// coordinates, lowest index on ties), counting it only within `radius`.
pub fn report_modality_coverage(
    records: &[SampleRecord],
    centers: &[Vec<f64>],
    radius: f64,
    delta: f64,
) -> Vec<ModalityHits> {
    let mut out: Vec<ModalityHits> = centers
        .iter()
        .map(|c| ModalityHits {
            center: c.clone(),
            hits: 0,
            first_hit: None,
        })
        .collect();
    if centers.is_empty() {
        return out;
    }
    let r2 = radius * radius;
    for (i, r) in records.iter().enumerate() {
        if r.y <= delta {
            continue;
        }
        let (best, d2) = centers
            .iter()
            .enumerate()
            .map(|(j, c)| (j, dist2(&r.x, c)))
            .fold((0, f64::INFINITY), |acc, (j, d)| if d < acc.1 { (j, d) } else { acc });
        if d2 <= r2 {
            let m = &mut out[best];
            m.hits += 1;
            m.first_hit.get_or_insert(i);
        }
    }
    out
}

/// Number of modalities with at least one hit.
pub fn modalities_hit(report: &[ModalityHits]) -> usize {
    report.iter().filter(|m| m.hits > 0).count()
}

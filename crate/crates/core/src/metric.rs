//! Distances between entity states.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::text_enum;
use crate::state::{BitMask, MeanMask, State};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    /// One minus the cosine similarity.
    Cosine,
    SquaredEuclidean,
    /// One minus intersection over union; masks only.
    Iou,
}

text_enum!(DistanceMetric {
    Cosine => "cosine",
    SquaredEuclidean => "squared_euclidean",
    Iou => "iou",
});

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("cannot compare a position state with a mask state")]
    RepresentationMismatch,
    #[error("iou is only defined for mask states")]
    IouNeedsMasks,
    #[error("mask sizes differ")]
    SizeMismatch,
}

enum MaskRef<'a> {
    Bits(&'a BitMask),
    Mean(&'a MeanMask),
}

impl MaskRef<'_> {
    fn dims(&self) -> (usize, usize) {
        match self {
            MaskRef::Bits(m) => (m.width(), m.height()),
            MaskRef::Mean(m) => (m.width(), m.height()),
        }
    }

    fn thresholded(&self) -> &BitMask {
        match self {
            MaskRef::Bits(m) => m,
            MaskRef::Mean(m) => m.thresholded(),
        }
    }
}

fn as_mask(s: &State) -> Option<MaskRef<'_>> {
    match s {
        State::Position(_) => None,
        State::Mask(m) => Some(MaskRef::Bits(m)),
        State::MeanMask(m) => Some(MaskRef::Mean(m)),
    }
}

/// `1 - cos` from a dot product and the two squared norms.
fn cosine_from(dot: f64, na2: f64, nb2: f64) -> f64 {
    if na2 == 0.0 && nb2 == 0.0 {
        return 0.0;
    }
    if na2 == 0.0 || nb2 == 0.0 {
        return 1.0;
    }
    (1.0 - dot / (na2 * nb2).sqrt()).max(0.0)
}

fn mask_cosine(a: &MaskRef, b: &MaskRef) -> f64 {
    match (a, b) {
        (MaskRef::Bits(x), MaskRef::Bits(y)) => cosine_from(
            x.and_count(y) as f64,
            x.count() as f64,
            y.count() as f64,
        ),
        (MaskRef::Bits(x), MaskRef::Mean(m)) | (MaskRef::Mean(m), MaskRef::Bits(x)) => {
            let dot: f64 = x.ones().map(|i| m.values()[i]).sum();
            cosine_from(dot, x.count() as f64, m.sq_norm())
        }
        (MaskRef::Mean(x), MaskRef::Mean(y)) => {
            let dot: f64 = x.values().iter().zip(y.values()).map(|(a, b)| a * b).sum();
            cosine_from(dot, x.sq_norm(), y.sq_norm())
        }
    }
}

fn mask_squared(a: &MaskRef, b: &MaskRef) -> f64 {
    match (a, b) {
        (MaskRef::Bits(x), MaskRef::Bits(y)) => x.xor_count(y) as f64,
        (MaskRef::Bits(x), MaskRef::Mean(m)) | (MaskRef::Mean(m), MaskRef::Bits(x)) => {
            // sum over pixels of (b - m)^2 = sum m^2 + sum over set bits (1 - 2m)
            let base = m.sq_norm();
            base + x.ones().map(|i| 1.0 - 2.0 * m.values()[i]).sum::<f64>()
        }
        (MaskRef::Mean(x), MaskRef::Mean(y)) => x
            .values()
            .iter()
            .zip(y.values())
            .map(|(a, b)| (a - b) * (a - b))
            .sum(),
    }
    .max(0.0)
}

fn vec_cosine(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dot = a[0] * b[0] + a[1] * b[1];
    cosine_from(dot, a[0] * a[0] + a[1] * a[1], b[0] * b[0] + b[1] * b[1])
}

/// Distance between two states under `metric`.
///
/// Every metric is symmetric, nonnegative and zero on identical inputs.
pub fn distance(metric: DistanceMetric, a: &State, b: &State) -> Result<f64, MetricError> {
    match (a, b) {
        (State::Position(p), State::Position(q)) => match metric {
            DistanceMetric::SquaredEuclidean => Ok((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)),
            DistanceMetric::Cosine => Ok(vec_cosine(*p, *q)),
            DistanceMetric::Iou => Err(MetricError::IouNeedsMasks),
        },
        _ => {
            let (Some(x), Some(y)) = (as_mask(a), as_mask(b)) else {
                return Err(MetricError::RepresentationMismatch);
            };
            if x.dims() != y.dims() {
                return Err(MetricError::SizeMismatch);
            }
            Ok(match metric {
                DistanceMetric::Cosine => mask_cosine(&x, &y),
                DistanceMetric::SquaredEuclidean => mask_squared(&x, &y),
                DistanceMetric::Iou => {
                    let (p, q) = (x.thresholded(), y.thresholded());
                    let union = p.or_count(q);
                    if union == 0 {
                        0.0
                    } else {
                        1.0 - p.and_count(q) as f64 / union as f64
                    }
                }
            })
        }
    }
}

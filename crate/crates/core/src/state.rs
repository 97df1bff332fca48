//! Entity state representations: workspace positions, binary occupancy masks
//! and soft (mean) masks used as cluster centroids.

use serde::{Deserialize, Serialize};

/// Binary occupancy mask at raster resolution, packed 64 pixels per word.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BitMask {
    width: usize,
    height: usize,
    words: Vec<u64>,
}

impl BitMask {
    pub fn new(width: usize, height: usize) -> Self {
        let words = vec![0; (width * height).div_ceil(64)];
        Self { width, height, words }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    pub fn set(&mut self, index: usize) {
        self.words[index / 64] |= 1 << (index % 64);
    }

    pub fn get(&self, index: usize) -> bool {
        self.words[index / 64] & (1 << (index % 64)) != 0
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn and_count(&self, other: &BitMask) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    pub fn or_count(&self, other: &BitMask) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a | b).count_ones() as usize)
            .sum()
    }

    pub fn xor_count(&self, other: &BitMask) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum()
    }

    /// Indices of set pixels in row-major order.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &word)| {
            let mut w = word;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let bit = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(wi * 64 + bit)
            })
        })
    }

    /// Pixel centre of mass mapped into workspace coordinates.
    pub fn center(&self, extent: [f64; 2]) -> Option<[f64; 2]> {
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
        for idx in self.ones() {
            sx += (idx % self.width) as f64;
            sy += (idx / self.width) as f64;
            n += 1;
        }
        (n > 0).then(|| {
            pixel_to_workspace(
                [sx / n as f64, sy / n as f64],
                self.width,
                self.height,
                extent,
            )
        })
    }
}

/// Soft mask: per-pixel mean occupancy of the masks in a cluster.
///
/// The mask thresholded at 0.5 is cached for IoU evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "MeanMaskRepr", into = "MeanMaskRepr")]
pub struct MeanMask {
    width: usize,
    height: usize,
    values: Vec<f64>,
    thresholded: BitMask,
    sq_norm: f64,
}

#[derive(Serialize, Deserialize)]
struct MeanMaskRepr {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl From<MeanMaskRepr> for MeanMask {
    fn from(r: MeanMaskRepr) -> Self {
        MeanMask::from_values(r.width, r.height, r.values)
    }
}

impl From<MeanMask> for MeanMaskRepr {
    fn from(m: MeanMask) -> Self {
        MeanMaskRepr {
            width: m.width,
            height: m.height,
            values: m.values,
        }
    }
}

impl MeanMask {
    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), width * height, "mean mask size mismatch");
        let mut thresholded = BitMask::new(width, height);
        for (i, &v) in values.iter().enumerate() {
            if v >= 0.5 {
                thresholded.set(i);
            }
        }
        let sq_norm = values.iter().map(|v| v * v).sum::<f64>();
        Self {
            width,
            height,
            values,
            thresholded,
            sq_norm,
        }
    }

    pub fn from_bits(mask: &BitMask) -> Self {
        let mut values = vec![0.0; mask.len()];
        for i in mask.ones() {
            values[i] = 1.0;
        }
        Self::from_values(mask.width, mask.height, values)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn thresholded(&self) -> &BitMask {
        &self.thresholded
    }

    /// Sum of squared occupancies.
    pub fn sq_norm(&self) -> f64 {
        self.sq_norm
    }

    /// Occupancy-weighted centre of mass in workspace coordinates.
    pub fn center(&self, extent: [f64; 2]) -> Option<[f64; 2]> {
        let (mut sx, mut sy, mut total) = (0.0, 0.0, 0.0);
        for (i, &v) in self.values.iter().enumerate() {
            if v != 0.0 {
                sx += v * (i % self.width) as f64;
                sy += v * (i / self.width) as f64;
                total += v;
            }
        }
        (total > 0.0).then(|| {
            pixel_to_workspace([sx / total, sy / total], self.width, self.height, extent)
        })
    }
}

/// Maps a (column, row) pixel coordinate to workspace units, taking pixel
/// centres at half-integer offsets.
pub fn pixel_to_workspace(px: [f64; 2], width: usize, height: usize, extent: [f64; 2]) -> [f64; 2] {
    [
        (px[0] + 0.5) / width as f64 * extent[0],
        (px[1] + 0.5) / height as f64 * extent[1],
    ]
}

/// Action-dependent part of an entity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum State {
    Position([f64; 2]),
    Mask(BitMask),
    MeanMask(MeanMask),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateKind {
    Position,
    Mask,
}

impl State {
    pub fn kind(&self) -> StateKind {
        match self {
            State::Position(_) => StateKind::Position,
            State::Mask(_) | State::MeanMask(_) => StateKind::Mask,
        }
    }

    /// Where the state sits in the workspace: the position itself, or a mask's
    /// centre of mass.
    pub fn location(&self, extent: [f64; 2]) -> Option<[f64; 2]> {
        match self {
            State::Position(p) => Some(*p),
            State::Mask(m) => m.center(extent),
            State::MeanMask(m) => m.center(extent),
        }
    }

    /// Dense vector view, used for averaging and squared distances.
    pub fn dense(&self) -> Vec<f64> {
        match self {
            State::Position(p) => p.to_vec(),
            State::Mask(m) => {
                let mut v = vec![0.0; m.len()];
                for i in m.ones() {
                    v[i] = 1.0;
                }
                v
            }
            State::MeanMask(m) => m.values.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            State::Position(_) => 2,
            State::Mask(m) => m.len(),
            State::MeanMask(m) => m.values.len(),
        }
    }

    /// Exact-equality key used to deduplicate coincident states.
    pub(crate) fn fingerprint(&self) -> Vec<u64> {
        match self {
            State::Position(p) => vec![0, p[0].to_bits(), p[1].to_bits()],
            State::Mask(m) => {
                let mut k = vec![1, m.width as u64];
                k.extend_from_slice(&m.words);
                k
            }
            State::MeanMask(m) => {
                let mut k = vec![2, m.width as u64];
                k.extend(m.values.iter().map(|v| v.to_bits()));
                k
            }
        }
    }
}

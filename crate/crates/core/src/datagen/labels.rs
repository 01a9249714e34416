use serde::{Deserialize, Serialize};

use super::{Dataset, EventClass, Soundscape, SOUNDSCAPE_SECONDS};
use crate::error::{Error, Result};
use crate::nncore::Tensor;

/// Raw feature values are clamped to `[-FEATURE_CLAMP, FEATURE_CLAMP]` before standardization.
pub const FEATURE_CLAMP: f32 = 4.0;

/// `[segments, classes]` 0/1 matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegmentLabels {
    pub segments: usize,
    pub classes: usize,
    pub data: Vec<u8>,
}

impl SegmentLabels {
    pub fn get(&self, segment: usize, class: usize) -> u8 {
        self.data[segment * self.classes + class]
    }

    pub fn row(&self, segment: usize) -> &[u8] {
        &self.data[segment * self.classes..(segment + 1) * self.classes]
    }
}

/// Class `k` is active in segment `[s, s + len)` iff one of its events overlaps
/// it with positive length. Events of classes not in `classes` are ignored.
pub fn segment_labels(soundscape: &Soundscape, segment_s: f64, classes: &[EventClass]) -> SegmentLabels {
    let segments = (soundscape.duration_s() / segment_s).round() as usize;
    let mut data = vec![0u8; segments * classes.len()];
    for e in &soundscape.events {
        let Some(k) = classes.iter().position(|c| c.id == e.class_id) else {
            continue;
        };
        let (on, off) = (e.onset_s as f64, e.offset_s as f64);
        for s in 0..segments {
            let lo = s as f64 * segment_s;
            let hi = lo + segment_s;
            if on < hi && off > lo {
                data[s * classes.len() + k] = 1;
            }
        }
    }
    SegmentLabels {
        segments,
        classes: classes.len(),
        data,
    }
}

/// Splits a soundscape into its ten non-overlapping one-second windows, each
/// paired with that second's label row.
pub fn window_examples(
    soundscape: &Soundscape,
    labels: &SegmentLabels,
) -> Result<Vec<(Tensor<f32>, Vec<f32>)>> {
    let mels = soundscape.mels();
    let total = soundscape.total_frames();
    if total % SOUNDSCAPE_SECONDS != 0 {
        return Err(Error::Data(format!(
            "soundscape has {total} frames, not a multiple of {SOUNDSCAPE_SECONDS} seconds"
        )));
    }
    if labels.segments != SOUNDSCAPE_SECONDS {
        return Err(Error::Data(format!(
            "{} label rows for {SOUNDSCAPE_SECONDS} windows",
            labels.segments
        )));
    }
    let frames = total / SOUNDSCAPE_SECONDS;
    let src = soundscape.features.data();
    (0..SOUNDSCAPE_SECONDS)
        .map(|w| {
            let mut win = Vec::with_capacity(mels * frames);
            for m in 0..mels {
                let row = m * total + w * frames;
                win.extend_from_slice(&src[row..row + frames]);
            }
            let y = labels.row(w).iter().map(|&v| v as f32).collect();
            Ok((Tensor::from_vec(&[mels, frames], win)?, y))
        })
        .collect()
}

/// Clamp-then-standardize transform fitted on a training split.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureNorm {
    pub mean: f32,
    pub std: f32,
}

impl Default for FeatureNorm {
    fn default() -> Self {
        FeatureNorm { mean: 0.0, std: 1.0 }
    }
}

impl FeatureNorm {
    pub fn fit(dataset: &Dataset) -> Self {
        let mut sum = 0.0f64;
        let mut sq = 0.0f64;
        let mut n = 0usize;
        for s in &dataset.soundscapes {
            for &v in s.features.data() {
                let c = v.clamp(-FEATURE_CLAMP, FEATURE_CLAMP) as f64;
                sum += c;
                sq += c * c;
                n += 1;
            }
        }
        if n == 0 {
            return FeatureNorm::default();
        }
        let mean = sum / n as f64;
        let var = (sq / n as f64 - mean * mean).max(0.0);
        let std = if var > 1e-12 { var.sqrt() } else { 1.0 };
        FeatureNorm {
            mean: mean as f32,
            std: std as f32,
        }
    }

    pub fn apply(&self, v: f32) -> f32 {
        (v.clamp(-FEATURE_CLAMP, FEATURE_CLAMP) - self.mean) / self.std
    }
}

/// Flattened one-second examples with multi-label targets, ready for batching.
/// Features are stored raw; models apply their own [`FeatureNorm`].
#[derive(Clone, Debug, PartialEq)]
pub struct WindowSet {
    pub mels: usize,
    pub frames: usize,
    pub classes: Vec<EventClass>,
    features: Vec<f32>,
    labels: Vec<f32>,
}

impl WindowSet {
    /// Windows of every soundscape, labelled over `classes` (which must all be
    /// present in the dataset's class table).
    pub fn from_dataset(dataset: &Dataset, classes: &[EventClass]) -> Result<Self> {
        for c in classes {
            if !dataset.classes.iter().any(|d| d.id == c.id && d.name == c.name) {
                return Err(Error::Data(format!(
                    "class `{}` (id {}) is not in the dataset",
                    c.name, c.id
                )));
            }
        }
        let first = dataset
            .soundscapes
            .first()
            .ok_or_else(|| Error::Data("dataset has no soundscapes".into()))?;
        let mels = first.mels();
        let frames = first.total_frames() / SOUNDSCAPE_SECONDS;
        let mut set = WindowSet {
            mels,
            frames,
            classes: classes.to_vec(),
            features: Vec::new(),
            labels: Vec::new(),
        };
        for (i, s) in dataset.soundscapes.iter().enumerate() {
            if s.mels() != mels || s.total_frames() != frames * SOUNDSCAPE_SECONDS {
                return Err(Error::Data(format!(
                    "soundscape {i} has shape {:?}, expected [{mels}, {}]",
                    s.features.shape(),
                    frames * SOUNDSCAPE_SECONDS
                )));
            }
            let labels = segment_labels(s, 1.0, classes);
            for (x, y) in window_examples(s, &labels)? {
                set.features.extend_from_slice(x.data());
                set.labels.extend(y);
            }
        }
        Ok(set)
    }

    pub fn from_parts(
        mels: usize,
        frames: usize,
        classes: Vec<EventClass>,
        features: Vec<f32>,
        labels: Vec<f32>,
    ) -> Result<Self> {
        let n = labels.len() / classes.len().max(1);
        if classes.is_empty() || labels.len() != n * classes.len() || features.len() != n * mels * frames {
            return Err(Error::Data("window set parts have inconsistent sizes".into()));
        }
        Ok(WindowSet {
            mels,
            frames,
            classes,
            features,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len() / self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn labels(&self) -> &[f32] {
        &self.labels
    }

    pub fn window(&self, i: usize) -> &[f32] {
        let n = self.mels * self.frames;
        &self.features[i * n..(i + 1) * n]
    }

    pub fn label_row(&self, i: usize) -> &[f32] {
        let k = self.classes.len();
        &self.labels[i * k..(i + 1) * k]
    }

    /// `([B, 1, mels, frames], [B, K])` for the given window indices.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor<f32>, Tensor<f32>)> {
        let mut x = Vec::with_capacity(indices.len() * self.mels * self.frames);
        let mut y = Vec::with_capacity(indices.len() * self.classes.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::Data(format!("window index {i} out of range")));
            }
            x.extend_from_slice(self.window(i));
            y.extend_from_slice(self.label_row(i));
        }
        Ok((
            Tensor::from_vec(&[indices.len(), 1, self.mels, self.frames], x)?,
            Tensor::from_vec(&[indices.len(), self.classes.len()], y)?,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_soundscape, Event, GenConfig, Regime};

    fn soundscape_with(events: Vec<Event>) -> Soundscape {
        Soundscape {
            events,
            features: Tensor::zeros(&[4, 40]),
        }
    }

    #[test]
    fn overlap_arithmetic() {
        let classes = EventClass::list(&["a", "b", "c"]);
        let s = soundscape_with(vec![Event { class_id: 2, onset_s: 2.3, offset_s: 4.7 }]);
        let l = segment_labels(&s, 1.0, &classes);
        for seg in 0..10 {
            for k in 0..3 {
                let expect = u8::from(k == 2 && (2..=4).contains(&seg));
                assert_eq!(l.get(seg, k), expect, "segment {seg} class {k}");
            }
        }
    }

    #[test]
    fn empty_soundscape_all_zero() {
        let l = segment_labels(&soundscape_with(vec![]), 1.0, &EventClass::list(&["a"]));
        assert_eq!(l.segments, 10);
        assert!(l.data.iter().all(|&v| v == 0));
    }

    #[test]
    fn half_open_boundary() {
        let s = soundscape_with(vec![Event { class_id: 0, onset_s: 3.0, offset_s: 4.0 }]);
        let l = segment_labels(&s, 1.0, &EventClass::list(&["a"]));
        let active: Vec<usize> = (0..10).filter(|&i| l.get(i, 0) == 1).collect();
        assert_eq!(active, vec![3]);
    }

    #[test]
    fn windows_reassemble_soundscape() {
        let classes = EventClass::list(&["a", "b"]);
        let cfg = GenConfig::with_geometry(16, 8);
        let s = generate_soundscape(&classes, Regime::Clean, &cfg, 1);
        let l = segment_labels(&s, 1.0, &classes);
        let w = window_examples(&s, &l).unwrap();
        assert_eq!(w.len(), 10);
        let total = s.total_frames();
        let mut rebuilt = vec![0.0f32; 16 * total];
        for (i, (x, y)) in w.iter().enumerate() {
            let expect: Vec<f32> = l.row(i).iter().map(|&v| v as f32).collect();
            assert_eq!(y, &expect);
            for m in 0..16 {
                rebuilt[m * total + i * 8..m * total + (i + 1) * 8]
                    .copy_from_slice(&x.data()[m * 8..(m + 1) * 8]);
            }
        }
        let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&rebuilt), bits(s.features.data()));
    }

    #[test]
    fn frame_mismatch_rejected() {
        let s = Soundscape {
            events: vec![],
            features: Tensor::zeros(&[4, 35]),
        };
        let l = segment_labels(&s, 1.0, &EventClass::list(&["a"]));
        assert!(window_examples(&s, &l).is_err());
    }
}

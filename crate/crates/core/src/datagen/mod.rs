//! Synthetic soundscapes in feature space.
//!
//! A soundscape is a `[mels, 10 * frames_per_second]` map holding white
//! Gaussian background noise plus one additive time-frequency pattern per
//! placed event. Each class owns a fixed mel band (disjoint while
//! `classes <= mels / band_width`) and a class-specific amplitude modulation.
//!
//! Two placement regimes are supported:
//! * [`Regime::Clean`]: every class appears once or twice per soundscape and
//!   occurrences of the same class never overlap.
//! * [`Regime::Noisy`]: the total event count is uniform on `0..=9`, classes
//!   are drawn with replacement, empty soundscapes are allowed.
//!
//! Event boundaries are snapped to the frame grid.

mod io;
mod labels;

use serde::{Deserialize, Serialize};

pub use io::{dataset_load, dataset_save, decode_dataset, encode_dataset, export_annotations_csv};
pub use labels::{segment_labels, window_examples, FeatureNorm, SegmentLabels, WindowSet, FEATURE_CLAMP};

use crate::error::{Error, Result};
use crate::nncore::rng::{derive_seed, tag};
use crate::nncore::{Rng, Tensor};

pub const SOUNDSCAPE_SECONDS: usize = 10;
pub const MAX_NOISY_EVENTS: usize = 9;
/// Lowest accepted SNR; below it background noise swamps event patterns.
pub const SNR_FLOOR_DB: f64 = 0.0;
pub const DEFAULT_PROTOTYPE_SEED: u64 = 0x5EED_CAFE;

/// Class names reused from the clean four-class and noisy five-class setups.
pub const CLEAN_CLASS_NAMES: [&str; 4] = ["keyboard", "door_slam", "phone_ringing", "door_knock"];
pub const NOISY_CLASS_NAMES: [&str; 5] = ["street_music", "siren", "gun_shot", "dog_bark", "car_horn"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Clean,
    Noisy,
}

impl Regime {
    pub fn code(self) -> u8 {
        match self {
            Regime::Clean => 0,
            Regime::Noisy => 1,
        }
    }

    pub fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(Regime::Clean),
            1 => Ok(Regime::Noisy),
            _ => Err(Error::Format(format!("unknown regime code {c}"))),
        }
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clean" => Ok(Regime::Clean),
            "noisy" => Ok(Regime::Noisy),
            _ => Err(Error::Config(format!("unknown regime `{s}` (clean|noisy)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventClass {
    pub id: u32,
    pub name: String,
}

impl EventClass {
    pub fn new(id: u32, name: impl Into<String>) -> Self {
        EventClass { id, name: name.into() }
    }

    /// Classes `0..names.len()` with the given names.
    pub fn list(names: &[impl AsRef<str>]) -> Vec<EventClass> {
        names
            .iter()
            .enumerate()
            .map(|(i, n)| EventClass::new(i as u32, n.as_ref()))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub mels: usize,
    pub frames_per_second: usize,
    pub snr_db: f64,
    pub min_event_s: f64,
    pub max_event_s: f64,
    /// Mel rows covered by one class pattern.
    pub band_width: usize,
    pub prototype_seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            mels: 128,
            frames_per_second: 128,
            snr_db: 10.0,
            min_event_s: 0.5,
            max_event_s: 2.0,
            band_width: 16,
            prototype_seed: DEFAULT_PROTOTYPE_SEED,
        }
    }
}

impl GenConfig {
    /// Geometry scaled to `mels x frames` with a band of `mels / 8` rows.
    pub fn with_geometry(mels: usize, frames_per_second: usize) -> Self {
        GenConfig {
            mels,
            frames_per_second,
            band_width: (mels / 8).max(1),
            ..GenConfig::default()
        }
    }

    pub fn total_frames(&self) -> usize {
        SOUNDSCAPE_SECONDS * self.frames_per_second
    }

    pub fn noise_std(&self) -> f64 {
        10f64.powf(-self.snr_db / 20.0)
    }

    fn validate(&self, regime: Regime, classes: &[EventClass]) -> Result<()> {
        if classes.is_empty() {
            return Err(Error::Config("at least one event class is required".into()));
        }
        let mut ids: Vec<u32> = classes.iter().map(|c| c.id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != classes.len() {
            return Err(Error::Config("duplicate class ids".into()));
        }
        if self.mels == 0 || self.frames_per_second == 0 || self.band_width == 0 {
            return Err(Error::Config("mels, frames_per_second and band_width must be positive".into()));
        }
        if self.band_width > self.mels {
            return Err(Error::Config(format!(
                "band width {} exceeds {} mel rows",
                self.band_width, self.mels
            )));
        }
        if !(self.snr_db >= SNR_FLOOR_DB) {
            return Err(Error::Config(format!(
                "snr {} dB is below the {SNR_FLOOR_DB} dB floor",
                self.snr_db
            )));
        }
        let min_frames = (self.min_event_s * self.frames_per_second as f64).round();
        if !(self.min_event_s > 0.0) || min_frames < 1.0 || self.min_event_s > self.max_event_s {
            return Err(Error::Config(format!(
                "event durations [{}, {}] s are not a valid range at {} frames/s",
                self.min_event_s, self.max_event_s, self.frames_per_second
            )));
        }
        let longest = match regime {
            Regime::Clean => 2.0 * self.max_event_s,
            Regime::Noisy => self.max_event_s,
        };
        if longest > SOUNDSCAPE_SECONDS as f64 {
            return Err(Error::Config(format!(
                "placements cannot fit: {longest} s of same-class events in a {SOUNDSCAPE_SECONDS} s soundscape"
            )));
        }
        Ok(())
    }
}

/// Deterministic time-frequency pattern of one class.
#[derive(Clone, Debug, PartialEq)]
pub struct Prototype {
    pub band_lo: usize,
    pub profile: Vec<f32>,
    pub rate_hz: f64,
    pub phase: f64,
}

impl Prototype {
    pub fn new(class_id: u32, config: &GenConfig) -> Self {
        let mut rng = Rng::new(derive_seed(config.prototype_seed, class_id as u64));
        let bw = config.band_width;
        let band_lo = (class_id as usize * bw) % config.mels;
        let bw = bw.min(config.mels - band_lo);
        let profile = (0..bw)
            .map(|i| (std::f64::consts::PI * (i as f64 + 0.5) / bw as f64).sin() as f32)
            .collect();
        Prototype {
            band_lo,
            profile,
            rate_hz: 1.0 + (class_id % 4) as f64 + rng.uniform(0.0, 0.5),
            phase: rng.uniform(0.0, std::f64::consts::TAU),
        }
    }

    /// Value at band row `row` (relative to `band_lo`) and time `t` seconds after onset.
    pub fn value(&self, row: usize, t: f64) -> f32 {
        let m = 0.6 + 0.4 * (std::f64::consts::TAU * self.rate_hz * t + self.phase).sin();
        self.profile[row] * m as f32
    }

    /// Adds the pattern for frames `[start, end)` into a `[mels, total]` map.
    pub fn render_into(&self, features: &mut [f32], total: usize, start: usize, end: usize, fps: usize) {
        for (row, _) in self.profile.iter().enumerate() {
            let base = (self.band_lo + row) * total;
            for f in start..end.min(total) {
                let t = (f - start) as f64 / fps as f64;
                features[base + f] += self.value(row, t);
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub class_id: u32,
    pub onset_s: f32,
    pub offset_s: f32,
}

impl Event {
    pub fn frames(&self, fps: usize) -> (usize, usize) {
        let s = (self.onset_s as f64 * fps as f64).round() as usize;
        let e = (self.offset_s as f64 * fps as f64).round() as usize;
        (s, e)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Soundscape {
    pub events: Vec<Event>,
    /// `[mels, 10 * frames_per_second]`, unnormalized.
    pub features: Tensor<f32>,
}

impl Soundscape {
    pub fn duration_s(&self) -> f64 {
        SOUNDSCAPE_SECONDS as f64
    }

    pub fn mels(&self) -> usize {
        self.features.shape()[0]
    }

    pub fn total_frames(&self) -> usize {
        self.features.shape()[1]
    }
}

/// One split of a generated corpus.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub regime: Regime,
    pub seed: u64,
    pub classes: Vec<EventClass>,
    pub soundscapes: Vec<Soundscape>,
}

impl Dataset {
    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c.name == name)
    }

    pub fn class_by_name(&self, name: &str) -> Option<&EventClass> {
        self.classes.iter().find(|c| c.name == name)
    }

    /// Per-class occurrence totals, indexed like `classes`.
    pub fn event_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes.len()];
        for s in &self.soundscapes {
            for e in &s.events {
                if let Some(i) = self.classes.iter().position(|c| c.id == e.class_id) {
                    counts[i] += 1;
                }
            }
        }
        counts
    }

    pub fn empty_fraction(&self) -> f64 {
        if self.soundscapes.is_empty() {
            return 0.0;
        }
        let empty = self.soundscapes.iter().filter(|s| s.events.is_empty()).count();
        empty as f64 / self.soundscapes.len() as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitCounts {
    pub const DESK_CLEAN: SplitCounts = SplitCounts { train: 200, val: 50, test: 50 };
    pub const FULL_CLEAN: SplitCounts = SplitCounts { train: 800, val: 200, test: 200 };
    pub const DESK_NOISY: SplitCounts = SplitCounts { train: 999, val: 333, test: 333 };
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSplits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

fn place_events(
    classes: &[EventClass],
    regime: Regime,
    config: &GenConfig,
    rng: &mut Rng,
) -> Vec<Event> {
    let fps = config.frames_per_second;
    let total = config.total_frames();
    let min_f = (config.min_event_s * fps as f64).round() as usize;
    let max_f = ((config.max_event_s * fps as f64).round() as usize).max(min_f);
    let to_s = |f: usize| (f as f64 / fps as f64) as f32;
    let mut events = Vec::new();
    match regime {
        Regime::Clean => {
            for class in classes {
                let n = rng.inclusive(1, 2);
                let durs: Vec<usize> = (0..n).map(|_| rng.inclusive(min_f, max_f)).collect();
                let free = total - durs.iter().sum::<usize>();
                let mut cuts: Vec<usize> = (0..n).map(|_| rng.inclusive(0, free)).collect();
                cuts.sort_unstable();
                let mut used = 0;
                for (d, cut) in durs.iter().zip(cuts) {
                    let onset = cut + used;
                    used += d;
                    events.push(Event {
                        class_id: class.id,
                        onset_s: to_s(onset),
                        offset_s: to_s(onset + d),
                    });
                }
            }
        }
        Regime::Noisy => {
            let n = rng.inclusive(0, MAX_NOISY_EVENTS);
            for _ in 0..n {
                let class = &classes[rng.below(classes.len())];
                let d = rng.inclusive(min_f, max_f);
                let onset = rng.inclusive(0, total - d);
                events.push(Event {
                    class_id: class.id,
                    onset_s: to_s(onset),
                    offset_s: to_s(onset + d),
                });
            }
        }
    }
    events.sort_by(|a, b| {
        a.onset_s
            .total_cmp(&b.onset_s)
            .then(a.class_id.cmp(&b.class_id))
    });
    events
}

/// Renders the additive event layer (no noise) for a list of events.
pub fn render_events(events: &[Event], config: &GenConfig) -> Tensor<f32> {
    let total = config.total_frames();
    let mut data = vec![0.0f32; config.mels * total];
    for e in events {
        let (s, end) = e.frames(config.frames_per_second);
        Prototype::new(e.class_id, config).render_into(&mut data, total, s, end, config.frames_per_second);
    }
    Tensor::from_vec(&[config.mels, total], data).expect("render shape")
}

fn render_noise(config: &GenConfig, rng: &mut Rng) -> Vec<f32> {
    let sd = config.noise_std();
    (0..config.mels * config.total_frames())
        .map(|_| (sd * rng.normal()) as f32)
        .collect()
}

pub fn generate_soundscape(
    classes: &[EventClass],
    regime: Regime,
    config: &GenConfig,
    seed: u64,
) -> Soundscape {
    let mut rng = Rng::new(seed);
    let events = place_events(classes, regime, config, &mut rng);
    let mut features = render_events(&events, config);
    let noise = render_noise(config, &mut rng);
    for (f, n) in features.data_mut().iter_mut().zip(noise) {
        *f += n;
    }
    Soundscape { events, features }
}

fn generate_split(
    classes: &[EventClass],
    regime: Regime,
    config: &GenConfig,
    seed: u64,
    split: &str,
    count: usize,
) -> Dataset {
    let split_seed = derive_seed(seed, tag(split));
    let soundscapes = (0..count)
        .map(|i| generate_soundscape(classes, regime, config, derive_seed(split_seed, i as u64)))
        .collect();
    Dataset {
        regime,
        seed,
        classes: classes.to_vec(),
        soundscapes,
    }
}

pub fn generate_dataset(
    classes: &[EventClass],
    regime: Regime,
    counts: SplitCounts,
    seed: u64,
    config: &GenConfig,
) -> Result<DatasetSplits> {
    config.validate(regime, classes)?;
    if counts.train == 0 || counts.val == 0 || counts.test == 0 {
        return Err(Error::Config(format!(
            "split counts must be positive, got {}/{}/{}",
            counts.train, counts.val, counts.test
        )));
    }
    Ok(DatasetSplits {
        train: generate_split(classes, regime, config, seed, "train", counts.train),
        val: generate_split(classes, regime, config, seed, "val", counts.val),
        test: generate_split(classes, regime, config, seed, "test", counts.test),
    })
}

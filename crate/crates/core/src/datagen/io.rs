//! `SEDD` dataset files.
//!
//! Layout (little-endian): magic `SEDD`, version u32, regime u8, seed u64,
//! class count u32 then per class (id u32, name), soundscape count u32, then
//! per soundscape an event count u32, the events (class id u32, onset f32,
//! offset f32) and the feature tensor as a tensor record.

use std::fmt::Write as _;
use std::path::Path;

use super::{Dataset, EventClass, Event, Regime, Soundscape};
use crate::error::{Error, Result};
use crate::format::{read_file, write_file, Reader, Writer};

pub const DATASET_MAGIC: [u8; 4] = *b"SEDD";
pub const DATASET_VERSION: u32 = 1;

pub fn encode_dataset(dataset: &Dataset) -> Result<Vec<u8>> {
    let mut w = Writer::new();
    w.bytes(&DATASET_MAGIC);
    w.u32(DATASET_VERSION);
    w.u8(dataset.regime.code());
    w.u64(dataset.seed);
    w.len_u32(dataset.classes.len())?;
    for c in &dataset.classes {
        w.u32(c.id);
        w.string(&c.name)?;
    }
    w.len_u32(dataset.soundscapes.len())?;
    for (i, s) in dataset.soundscapes.iter().enumerate() {
        w.len_u32(s.events.len())?;
        for e in &s.events {
            w.u32(e.class_id);
            w.f32(e.onset_s);
            w.f32(e.offset_s);
        }
        w.tensor(&format!("soundscape.{i}"), &s.features)?;
    }
    Ok(w.finish())
}

fn with_record<T>(index: usize, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Truncated { what } => Error::Truncated {
            what: format!("soundscape record {index} ({what})"),
        },
        Error::Format(m) => Error::Format(format!("soundscape record {index}: {m}")),
        other => other,
    })
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    let mut r = Reader::new(bytes);
    r.magic(DATASET_MAGIC)?;
    let version = r.u32("version")?;
    if version != DATASET_VERSION {
        return Err(Error::Version {
            found: version,
            expected: DATASET_VERSION,
        });
    }
    let regime = Regime::from_code(r.u8("regime")?)?;
    let seed = r.u64("seed")?;
    let n_classes = r.u32("class count")? as usize;
    let mut classes = Vec::with_capacity(n_classes.min(1024));
    for _ in 0..n_classes {
        let id = r.u32("class table")?;
        let name = r.string("class table")?;
        classes.push(EventClass { id, name });
    }
    let n = r.u32("soundscape count")? as usize;
    let mut soundscapes = Vec::with_capacity(n.min(1 << 16));
    for i in 0..n {
        let s = with_record(i, (|| {
            let n_events = r.u32("event count")? as usize;
            let mut events = Vec::with_capacity(n_events.min(64));
            for _ in 0..n_events {
                events.push(Event {
                    class_id: r.u32("event")?,
                    onset_s: r.f32("event")?,
                    offset_s: r.f32("event")?,
                });
            }
            let (_, features) = r.tensor("feature tensor")?;
            if features.ndim() != 2 {
                return Err(Error::Format("feature tensor must be 2-d".into()));
            }
            Ok(Soundscape { events, features })
        })())?;
        soundscapes.push(s);
    }
    if !r.at_end() {
        return Err(Error::Format("trailing bytes after last soundscape".into()));
    }
    Ok(Dataset {
        regime,
        seed,
        classes,
        soundscapes,
    })
}

pub fn dataset_save(dataset: &Dataset, path: &Path) -> Result<()> {
    write_file(path, &encode_dataset(dataset)?)
}

pub fn dataset_load(path: &Path) -> Result<Dataset> {
    decode_dataset(&read_file(path)?)
}

/// One row per event: `file_id,class_name,onset_s,offset_s`.
pub fn export_annotations_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut out = String::from("file_id,class_name,onset_s,offset_s\n");
    for (i, s) in dataset.soundscapes.iter().enumerate() {
        for e in &s.events {
            let name = dataset
                .classes
                .iter()
                .find(|c| c.id == e.class_id)
                .map(|c| c.name.as_str())
                .unwrap_or("unknown");
            writeln!(out, "soundscape_{i:05},{name},{},{}", e.onset_s, e.offset_s).unwrap();
        }
    }
    write_file(path, out.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_dataset, GenConfig, SplitCounts};

    fn sample(regime: Regime) -> Dataset {
        let classes = EventClass::list(&["a", "b", "c"]);
        let counts = SplitCounts { train: 4, val: 1, test: 1 };
        generate_dataset(&classes, regime, counts, 17, &GenConfig::with_geometry(16, 8))
            .unwrap()
            .train
    }

    #[test]
    fn round_trip_is_exact() {
        for regime in [Regime::Clean, Regime::Noisy] {
            let d = sample(regime);
            let bytes = encode_dataset(&d).unwrap();
            let back = decode_dataset(&bytes).unwrap();
            assert_eq!(back, d);
            assert_eq!(back.regime, regime);
            assert_eq!(encode_dataset(&back).unwrap(), bytes);
        }
    }

    #[test]
    fn truncated_tensor_names_record() {
        let d = sample(Regime::Clean);
        let bytes = encode_dataset(&d).unwrap();
        let err = decode_dataset(&bytes[..bytes.len() - 10]).unwrap_err();
        assert!(err.to_string().contains("soundscape record 3"), "{err}");
    }

    #[test]
    fn bad_magic_and_version() {
        let d = sample(Regime::Clean);
        let mut bytes = encode_dataset(&d).unwrap();
        bytes[4] = 9;
        assert!(matches!(decode_dataset(&bytes), Err(Error::Version { found: 9, .. })));
        bytes[0] = b'X';
        assert!(matches!(decode_dataset(&bytes), Err(Error::BadMagic { .. })));
    }
}

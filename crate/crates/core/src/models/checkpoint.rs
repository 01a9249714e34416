//! Binary checkpoints.
//!
//! Little-endian layout: magic `SEDM`, version `u32`, kind `u8` (0 single
//! model, 1 adapter composite), then one model block, or source block,
//! adapter block and target block.
//!
//! A model block is its configuration as `u32`s (mels, frames, filters,
//! blocks, kernel, pool height, pool width, classes), the class names, and
//! named tensors. An adapter block is input, hidden and output widths, the
//! input mode code, then named tensors. Tensors are stored as
//! `name, ndim, dims, f32 data`.

use std::collections::BTreeMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::datagen::FeatureNorm;
use crate::error::{Error, Result};
use crate::format::{read_file, write_file, Reader, Writer};
use crate::nncore::{Dense, Param, Rng, Tensor};

use super::adapter::{AdapterInput, NeuralAdapter};
use super::composite::AdapterComposite;
use super::sedcnn::{SedCnn, SedCnnConfig};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"SEDM";
pub const CHECKPOINT_VERSION: u32 = 1;

const KIND_MODEL: u8 = 0;
const KIND_COMPOSITE: u8 = 1;
const NORM_TENSOR: &str = "input.norm";

#[derive(Clone, Debug)]
pub enum Checkpoint {
    Model(SedCnn),
    Composite(AdapterComposite),
}

impl Checkpoint {
    pub fn class_names(&self) -> &[String] {
        match self {
            Checkpoint::Model(m) => &m.class_names,
            Checkpoint::Composite(c) => c.class_names(),
        }
    }
}

/// Every tensor that defines `model`'s outputs, under prefix-free names.
pub fn model_tensors(model: &SedCnn) -> Vec<(String, Tensor<f32>)> {
    let prefix = model.prefix();
    let mut out: Vec<(String, Tensor<f32>)> = model
        .params()
        .into_iter()
        .map(|p| (p.name.strip_prefix(prefix).unwrap_or(&p.name).to_string(), p.value.clone()))
        .collect();
    for (i, b) in model.blocks.iter().enumerate() {
        out.push((format!("block{i}.bn.running_mean"), b.bn.running_mean.clone()));
        out.push((format!("block{i}.bn.running_var"), b.bn.running_var.clone()));
    }
    out.push((
        NORM_TENSOR.to_string(),
        Tensor::from_vec(&[2], vec![model.norm.mean, model.norm.std]).expect("two values"),
    ));
    out
}

/// SHA-256 over the names, shapes and values of [`model_tensors`], as hex.
pub fn parameter_hash(model: &SedCnn) -> String {
    let mut h = Sha256::new();
    for (name, t) in model_tensors(model) {
        h.update(name.as_bytes());
        for &d in t.shape() {
            h.update((d as u64).to_le_bytes());
        }
        for &v in t.data() {
            h.update(v.to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn write_model(w: &mut Writer, model: &SedCnn) -> Result<()> {
    let c = &model.config;
    for v in [
        c.input_mels,
        c.input_frames,
        c.conv_filters,
        c.num_conv_blocks,
        c.kernel,
        c.pool.0,
        c.pool.1,
        c.num_classes,
    ] {
        w.len_u32(v)?;
    }
    w.len_u32(model.class_names.len())?;
    for n in &model.class_names {
        w.string(n)?;
    }
    let tensors = model_tensors(model);
    w.len_u32(tensors.len())?;
    for (name, t) in &tensors {
        w.tensor(name, t)?;
    }
    Ok(())
}

fn read_tensors(r: &mut Reader, what: &str) -> Result<BTreeMap<String, Tensor<f32>>> {
    let count = r.u32(&format!("{what} tensor count"))?;
    let mut map = BTreeMap::new();
    for i in 0..count {
        let (name, t) = r.tensor(&format!("{what} tensor {i}"))?;
        if map.insert(name.clone(), t).is_some() {
            return Err(Error::Format(format!("{what}: duplicate tensor `{name}`")));
        }
    }
    Ok(map)
}

fn take_tensor(map: &mut BTreeMap<String, Tensor<f32>>, name: &str, shape: &[usize], what: &str) -> Result<Tensor<f32>> {
    let t = map
        .remove(name)
        .ok_or_else(|| Error::Format(format!("{what}: missing tensor `{name}`")))?;
    if t.shape() != shape {
        return Err(Error::Format(format!(
            "{what}: tensor `{name}` has shape {:?}, expected {shape:?}",
            t.shape()
        )));
    }
    Ok(t)
}

fn fill_param(p: &mut Param<f32>, map: &mut BTreeMap<String, Tensor<f32>>, what: &str) -> Result<()> {
    let shape = p.value.shape().to_vec();
    p.value = take_tensor(map, &p.name, &shape, what)?;
    Ok(())
}

fn read_model(r: &mut Reader, what: &str) -> Result<SedCnn> {
    let mut v = [0usize; 8];
    for x in v.iter_mut() {
        *x = r.u32(&format!("{what} config"))? as usize;
    }
    let config = SedCnnConfig {
        input_mels: v[0],
        input_frames: v[1],
        conv_filters: v[2],
        num_conv_blocks: v[3],
        kernel: v[4],
        pool: (v[5], v[6]),
        num_classes: v[7],
    };
    config
        .validate()
        .map_err(|e| Error::Format(format!("{what}: invalid configuration: {e}")))?;
    let n = r.u32(&format!("{what} class count"))? as usize;
    let mut names = Vec::with_capacity(n.min(4096));
    for i in 0..n {
        names.push(r.string(&format!("{what} class name {i}"))?);
    }
    let mut map = read_tensors(r, what)?;
    let mut model = SedCnn::new(config, names, &mut Rng::new(0))
        .map_err(|e| Error::Format(format!("{what}: {e}")))?;
    for p in model.params_mut() {
        fill_param(p, &mut map, what)?;
    }
    for (i, b) in model.blocks.iter_mut().enumerate() {
        let c = [b.bn.running_mean.len()];
        b.bn.running_mean = take_tensor(&mut map, &format!("block{i}.bn.running_mean"), &c, what)?;
        b.bn.running_var = take_tensor(&mut map, &format!("block{i}.bn.running_var"), &c, what)?;
    }
    let norm = take_tensor(&mut map, NORM_TENSOR, &[2], what)?;
    model.norm = FeatureNorm {
        mean: norm.data()[0],
        std: norm.data()[1],
    };
    if let Some(extra) = map.keys().next() {
        return Err(Error::Format(format!("{what}: unexpected tensor `{extra}`")));
    }
    Ok(model)
}

fn write_adapter(w: &mut Writer, a: &NeuralAdapter) -> Result<()> {
    w.len_u32(a.input_dim())?;
    w.len_u32(a.hidden_dim())?;
    w.len_u32(a.output_dim())?;
    w.u32(a.input.code());
    let params = a.params();
    w.len_u32(params.len())?;
    for p in params {
        w.tensor(&p.name, &p.value)?;
    }
    Ok(())
}

fn read_adapter(r: &mut Reader) -> Result<NeuralAdapter> {
    let what = "adapter";
    let d_in = r.u32("adapter input width")? as usize;
    let hidden = r.u32("adapter hidden width")? as usize;
    let d_out = r.u32("adapter output width")? as usize;
    let input = AdapterInput::from_code(r.u32("adapter input mode")?)?;
    let mut map = read_tensors(r, what)?;
    let mut a = NeuralAdapter::new(d_in, hidden, d_out, input, &mut Rng::new(0))
        .map_err(|e| Error::Format(format!("{what}: {e}")))?;
    for p in a.params_mut() {
        fill_param(p, &mut map, what)?;
    }
    if let Some(extra) = map.keys().next() {
        return Err(Error::Format(format!("{what}: unexpected tensor `{extra}`")));
    }
    let a = NeuralAdapter::from_layers(
        Dense::from_params(a.hidden.weight, a.hidden.bias),
        Dense::from_params(a.output.weight, a.output.bias),
        input,
    )?;
    Ok(a)
}

fn header(w: &mut Writer, kind: u8) {
    w.bytes(&CHECKPOINT_MAGIC);
    w.u32(CHECKPOINT_VERSION);
    w.u8(kind);
}

pub fn encode_model(model: &SedCnn) -> Result<Vec<u8>> {
    let mut w = Writer::new();
    header(&mut w, KIND_MODEL);
    write_model(&mut w, model)?;
    Ok(w.finish())
}

pub fn encode_composite(model: &AdapterComposite) -> Result<Vec<u8>> {
    let mut w = Writer::new();
    header(&mut w, KIND_COMPOSITE);
    write_model(&mut w, &model.source)?;
    write_adapter(&mut w, &model.adapter)?;
    write_model(&mut w, &model.target)?;
    Ok(w.finish())
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader::new(bytes);
    r.magic(CHECKPOINT_MAGIC)?;
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let ckpt = match r.u8("kind")? {
        KIND_MODEL => Checkpoint::Model(read_model(&mut r, "model")?),
        KIND_COMPOSITE => {
            let source = read_model(&mut r, "source")?;
            let adapter = read_adapter(&mut r)?;
            let target = read_model(&mut r, "target")?;
            Checkpoint::Composite(
                AdapterComposite::compose(source, adapter, target)
                    .map_err(|e| Error::Format(format!("composite: {e}")))?,
            )
        }
        k => return Err(Error::Format(format!("unknown checkpoint kind {k}"))),
    };
    if !r.at_end() {
        return Err(Error::Format("trailing bytes after checkpoint".into()));
    }
    Ok(ckpt)
}

pub fn save_model(model: &SedCnn, path: &Path) -> Result<()> {
    write_file(path, &encode_model(model)?)
}

pub fn save_composite(model: &AdapterComposite, path: &Path) -> Result<()> {
    write_file(path, &encode_composite(model)?)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode_checkpoint(&read_file(path)?)
}

pub fn load_model(path: &Path) -> Result<SedCnn> {
    match load_checkpoint(path)? {
        Checkpoint::Model(m) => Ok(m),
        Checkpoint::Composite(_) => Err(Error::Format(format!(
            "{} holds an adapter composite, expected a single model",
            path.display()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::adapter::ADAPTER_HIDDEN;

    fn model(seed: u64) -> SedCnn {
        let cfg = SedCnnConfig {
            input_mels: 8,
            input_frames: 8,
            conv_filters: 3,
            num_classes: 2,
            ..SedCnnConfig::default()
        };
        let mut m = SedCnn::new(cfg, vec!["x".into(), "y".into()], &mut Rng::new(seed)).unwrap();
        m.norm = FeatureNorm { mean: 0.25, std: 1.5 };
        m.blocks[1].bn.running_mean.data_mut()[2] = 0.75;
        m
    }

    #[test]
    fn model_round_trip_is_exact() {
        let m = model(1);
        let bytes = encode_model(&m).unwrap();
        let Checkpoint::Model(back) = decode_checkpoint(&bytes).unwrap() else {
            panic!("wrong kind")
        };
        assert_eq!(parameter_hash(&m), parameter_hash(&back));
        assert_eq!(encode_model(&back).unwrap(), bytes);
    }

    #[test]
    fn composite_round_trip_keeps_source_hash() {
        let s = model(2);
        let mut rng = Rng::new(9);
        let t = s.migrate("z", &mut rng).unwrap();
        let a = NeuralAdapter::new(2, ADAPTER_HIDDEN, 3, AdapterInput::Logits, &mut rng).unwrap();
        let c = AdapterComposite::compose(s.clone(), a, t).unwrap();
        let bytes = encode_composite(&c).unwrap();
        let Checkpoint::Composite(back) = decode_checkpoint(&bytes).unwrap() else {
            panic!("wrong kind")
        };
        assert_eq!(parameter_hash(&back.source), parameter_hash(&s));
        assert_eq!(encode_composite(&back).unwrap(), bytes);
    }

    #[test]
    fn distinct_errors() {
        let bytes = encode_model(&model(3)).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_checkpoint(&bad), Err(Error::BadMagic { .. })));
        let mut bad = bytes.clone();
        bad[4] = 7;
        assert!(matches!(decode_checkpoint(&bad), Err(Error::Version { found: 7, .. })));
        assert!(matches!(
            decode_checkpoint(&bytes[..bytes.len() - 3]),
            Err(Error::Truncated { .. })
        ));
    }
}

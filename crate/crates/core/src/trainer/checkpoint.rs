//! Binary checkpoints, all integers and floats little-endian:
//!
//! ```text
//! "WDRN" | version u32
//! config: levels u32 | variant u8 | scale num u32, den u32 | input_channels u32
//!         | encoder count u32, blocks | decoder count u32, blocks
//!         block = layers u32 | filters u32 | kernel u32 | last_filters u32 (0 = none)
//! params: count u32, then per tensor
//!         name_len u32 | name utf-8 | 4 dims u32 | values f32
//! adam:   t u64 | per tensor m values f32 | per tensor v values f32
//! epoch u64 | step u64 | rng seed [u8; 32] | rng stream u64 | rng word position u128
//! ```

use std::fs;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::error::{Error, Result};
use crate::model::{ConvBlockSpec, DomainVariant, ParameterSet, WdrnConfig, Wdrn, WidthScale};
use crate::tensor::{Shape, Tensor};

use super::adam::AdamState;

pub const MAGIC: [u8; 4] = *b"WDRN";
pub const FORMAT_VERSION: u32 = 1;

/// Position of a ChaCha8 stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        RngState {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Wdrn<f32>,
    pub adam: AdamState,
    pub epoch: u64,
    pub step: u64,
    pub rng: RngState,
}

impl Checkpoint {
    /// A checkpoint of an untrained model with fresh optimizer state.
    pub fn fresh(model: Wdrn<f32>, seed: u64) -> Self {
        let adam = AdamState::new(&model.params);
        Checkpoint {
            model,
            adam,
            epoch: 0,
            step: 0,
            rng: RngState::capture(&ChaCha8Rng::seed_from_u64(seed)),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Vec::new();
        w.extend_from_slice(&MAGIC);
        put_u32(&mut w, FORMAT_VERSION);
        write_config(&mut w, &self.model.config);
        put_u32(&mut w, self.model.params.len() as u32);
        for (name, t) in self.model.params.iter() {
            put_u32(&mut w, name.len() as u32);
            w.extend_from_slice(name.as_bytes());
            for d in t.shape().dims() {
                put_u32(&mut w, d as u32);
            }
            put_f32s(&mut w, t.data());
        }
        w.extend_from_slice(&self.adam.t.to_le_bytes());
        for m in &self.adam.m {
            put_f32s(&mut w, m);
        }
        for v in &self.adam.v {
            put_f32s(&mut w, v);
        }
        w.extend_from_slice(&self.epoch.to_le_bytes());
        w.extend_from_slice(&self.step.to_le_bytes());
        w.extend_from_slice(&self.rng.seed);
        w.extend_from_slice(&self.rng.stream.to_le_bytes());
        w.extend_from_slice(&self.rng.word_pos.to_le_bytes());
        w
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic: [u8; 4] = r.take(4, "magic")?.try_into().expect("4 bytes");
        if magic != MAGIC {
            return Err(Error::BadMagic(magic));
        }
        let version = r.u32("version")?;
        if version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let config = read_config(&mut r)?;
        let count = r.u32("parameter count")? as usize;
        let mut params = ParameterSet::new();
        for _ in 0..count {
            let len = r.u32("parameter name length")? as usize;
            let name = std::str::from_utf8(r.take(len, "parameter name")?)
                .map_err(|_| Error::CheckpointLayout("parameter name is not UTF-8".into()))?
                .to_string();
            let mut dims = [0usize; 4];
            for d in &mut dims {
                *d = r.u32("parameter dims")? as usize;
            }
            let shape = Shape::new(dims[0], dims[1], dims[2], dims[3])
                .map_err(|e| Error::CheckpointLayout(format!("`{name}`: {e}")))?;
            let data = r.f32s(shape.len(), "parameter values")?;
            params.insert(name, Tensor::from_vec(shape, data)?)?;
        }
        let t = r.u64("adam step")?;
        let lens: Vec<usize> = params.iter().map(|(_, p)| p.len()).collect();
        let m = lens.iter().map(|&n| r.f32s(n, "adam first moment")).collect::<Result<Vec<_>>>()?;
        let v = lens.iter().map(|&n| r.f32s(n, "adam second moment")).collect::<Result<Vec<_>>>()?;
        let epoch = r.u64("epoch")?;
        let step = r.u64("step")?;
        let seed: [u8; 32] = r.take(32, "rng seed")?.try_into().expect("32 bytes");
        let stream = r.u64("rng stream")?;
        let word_pos = u128::from_le_bytes(r.take(16, "rng position")?.try_into().expect("16 bytes"));
        if r.pos != bytes.len() {
            return Err(Error::CheckpointLayout(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        let model = Wdrn::from_parts(config, params)?;
        Ok(Checkpoint {
            model,
            adam: AdamState { t, m, v },
            epoch,
            step,
            rng: RngState { seed, stream, word_pos },
        })
    }
}

pub fn save_checkpoint(c: &Checkpoint, path: &Path) -> Result<()> {
    fs::write(path, c.to_bytes())?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&fs::read(path)?)
}

/// Loads a checkpoint and checks its parameters against `expected`.
pub fn load_checkpoint_for(path: &Path, expected: &WdrnConfig) -> Result<Checkpoint> {
    let c = load_checkpoint(path)?;
    Wdrn::from_parts(expected.clone(), c.model.params.clone())?;
    Ok(c)
}

fn put_u32(w: &mut Vec<u8>, v: u32) {
    w.extend_from_slice(&v.to_le_bytes());
}

fn put_f32s(w: &mut Vec<u8>, vs: &[f32]) {
    for v in vs {
        w.extend_from_slice(&v.to_le_bytes());
    }
}

fn write_block(w: &mut Vec<u8>, b: &ConvBlockSpec) {
    put_u32(w, b.layer_count as u32);
    put_u32(w, b.filters as u32);
    put_u32(w, b.kernel as u32);
    put_u32(w, b.last_filters.unwrap_or(0) as u32);
}

fn write_config(w: &mut Vec<u8>, c: &WdrnConfig) {
    put_u32(w, c.levels as u32);
    w.push(match c.domain_variant {
        DomainVariant::Wavelet => 0,
        DomainVariant::Strided => 1,
    });
    put_u32(w, c.width_scale.num);
    put_u32(w, c.width_scale.den);
    put_u32(w, c.input_channels as u32);
    for blocks in [&c.encoder_blocks, &c.decoder_blocks] {
        put_u32(w, blocks.len() as u32);
        for b in blocks {
            write_block(w, b);
        }
    }
}

fn read_config(r: &mut Reader<'_>) -> Result<WdrnConfig> {
    let levels = r.u32("config levels")? as usize;
    let domain_variant = match r.take(1, "config variant")?[0] {
        0 => DomainVariant::Wavelet,
        1 => DomainVariant::Strided,
        other => return Err(Error::CheckpointLayout(format!("unknown domain variant tag {other}"))),
    };
    let width_scale = WidthScale::new(r.u32("config scale")?, r.u32("config scale")?)
        .map_err(|e| Error::CheckpointLayout(e.to_string()))?;
    let input_channels = r.u32("config input channels")? as usize;
    let mut lists = [Vec::new(), Vec::new()];
    for list in &mut lists {
        let n = r.u32("config block count")?;
        for _ in 0..n {
            let layer_count = r.u32("config block")? as usize;
            let filters = r.u32("config block")? as usize;
            let kernel = r.u32("config block")? as usize;
            let last = r.u32("config block")? as usize;
            list.push(ConvBlockSpec {
                layer_count,
                filters,
                kernel,
                last_filters: (last != 0).then_some(last),
            });
        }
    }
    let [encoder_blocks, decoder_blocks] = lists;
    Ok(WdrnConfig {
        levels,
        encoder_blocks,
        decoder_blocks,
        domain_variant,
        width_scale,
        input_channels,
    })
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(Error::Truncated(what))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn f32s(&mut self, n: usize, what: &'static str) -> Result<Vec<f32>> {
        let raw = self.take(n.checked_mul(4).ok_or(Error::Truncated(what))?, what)?;
        Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect())
    }
}

//! Model files. "NET1" stores the architecture, loss tag, label map and all
//! parameters as f32 LE in declaration order (per affine layer: weight, bias,
//! gamma, beta, running mean, running variance; then the head). Training
//! checkpoints ("CKP1") use the same body with f64 parameters so a resume is
//! bit-exact.

use std::path::Path;

use spkver_core::losses::{HeadParams, LossKind, Mining};
use spkver_core::net::{AffineParams, Architecture, LayerKind, LayerSpec, NetParams};
use spkver_core::trainer::{Checkpoint, Model};

use crate::archive::Reader;
use crate::{read_file, write_atomic, Error, Result};

pub const MODEL_MAGIC: &[u8; 4] = b"NET1";
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CKP1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, PartialEq)]
enum Precision {
    F32,
    F64,
}

struct Writer {
    out: Vec<u8>,
    precision: Precision,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.out.push(v);
    }
    fn u32(&mut self, v: usize) {
        self.out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len());
        self.out.extend_from_slice(s.as_bytes());
    }
    fn params(&mut self, v: &[f64]) {
        for &x in v {
            match self.precision {
                Precision::F32 => self.out.extend_from_slice(&(x as f32).to_le_bytes()),
                Precision::F64 => self.out.extend_from_slice(&x.to_le_bytes()),
            }
        }
    }
}

fn read_params(r: &mut Reader, p: Precision, n: usize) -> Result<Vec<f64>> {
    (0..n)
        .map(|_| match p {
            Precision::F32 => r.f32().map(f64::from),
            Precision::F64 => r.f64(),
        })
        .collect()
}

fn write_model(w: &mut Writer, model: &Model) {
    let arch = &model.net.arch;
    w.u32(arch.layers.len());
    for l in &arch.layers {
        w.u8(match l.kind {
            LayerKind::Tdnn => 0,
            LayerKind::Pooling => 1,
            LayerKind::Fc => 2,
        });
        w.u32(l.in_dim);
        w.u32(l.out_dim);
        w.u8(l.relu as u8);
        w.u32(l.context.len());
        for &c in &l.context {
            w.out.extend_from_slice(&c.to_le_bytes());
        }
    }
    w.u32(model.loss.tag() as usize);
    match model.loss {
        LossKind::Softmax => {}
        LossKind::ASoftmax { m } => w.u32(m as usize),
        LossKind::Triplet { margin, mining } => {
            w.out.extend_from_slice(&margin.to_le_bytes());
            w.u8(match mining {
                Mining::SemiHard => 0,
                Mining::Random => 1,
            });
        }
    }
    w.u32(model.speakers.len());
    for s in &model.speakers {
        w.str(s);
    }
    match &model.head {
        Some(h) => {
            w.u8(1);
            w.u32(h.classes);
            w.u32(h.dim);
        }
        None => w.u8(0),
    }
    for p in &model.net.layers {
        for v in [&p.weight, &p.bias, &p.gamma, &p.beta, &p.running_mean, &p.running_var] {
            w.params(v);
        }
    }
    if let Some(h) = &model.head {
        w.params(&h.weight);
        w.params(&h.bias);
    }
}

fn read_model(r: &mut Reader, p: Precision, ctx: &str) -> Result<Model> {
    let bad = |m: String| Error::format(ctx, m);
    let n_layers = r.u32()? as usize;
    let mut layers = Vec::new();
    for _ in 0..n_layers {
        let kind = match r.u8()? {
            0 => LayerKind::Tdnn,
            1 => LayerKind::Pooling,
            2 => LayerKind::Fc,
            k => return Err(bad(format!("unknown layer kind {k}"))),
        };
        let in_dim = r.u32()? as usize;
        let out_dim = r.u32()? as usize;
        let relu = r.u8()? != 0;
        let n_ctx = r.u32()? as usize;
        if n_ctx > 1024 {
            return Err(bad(format!("implausible context length {n_ctx}")));
        }
        let context = (0..n_ctx).map(|_| r.i32()).collect::<Result<Vec<_>>>()?;
        layers.push(LayerSpec { kind, in_dim, out_dim, context, relu });
    }
    let arch = Architecture { layers };
    arch.validate().map_err(|e| bad(e.to_string()))?;
    let loss = match r.u32()? {
        0 => LossKind::Softmax,
        1 => LossKind::ASoftmax { m: r.u32()? },
        2 => {
            let margin = r.f64()?;
            let mining = match r.u8()? {
                0 => Mining::SemiHard,
                1 => Mining::Random,
                k => return Err(bad(format!("unknown mining mode {k}"))),
            };
            LossKind::Triplet { margin, mining }
        }
        t => return Err(bad(format!("unknown loss tag {t}"))),
    };
    let n_spk = r.u32()? as usize;
    let speakers = (0..n_spk).map(|_| r.string()).collect::<Result<Vec<_>>>()?;
    let head_shape = match r.u8()? {
        0 => None,
        _ => Some((r.u32()? as usize, r.u32()? as usize)),
    };
    let mut params = Vec::new();
    for l in arch.layers.iter().filter(|l| l.is_affine()) {
        let weight = read_params(r, p, l.fan_in() * l.out_dim)?;
        let mut next = || read_params(r, p, l.out_dim);
        let (bias, gamma, beta, running_mean, running_var) = (next()?, next()?, next()?, next()?, next()?);
        params.push(AffineParams { weight, bias, gamma, beta, running_mean, running_var });
    }
    let head = match head_shape {
        Some((classes, dim)) => {
            if dim != arch.embed_dim() || classes != speakers.len() {
                return Err(bad("head shape disagrees with the network or label map".into()));
            }
            let weight = read_params(r, p, classes * dim)?;
            let bias = read_params(r, p, classes)?;
            Some(HeadParams { classes, dim, weight, bias })
        }
        None => None,
    };
    if head.is_some() != loss.has_head() {
        return Err(bad("head presence disagrees with the loss tag".into()));
    }
    Ok(Model { net: NetParams { arch, layers: params }, head, loss, speakers })
}

pub fn encode_model(model: &Model) -> Vec<u8> {
    let mut w = Writer { out: MODEL_MAGIC.to_vec(), precision: Precision::F32 };
    w.u32(FORMAT_VERSION as usize);
    write_model(&mut w, model);
    w.out
}

fn check_version(r: &mut Reader, ctx: &str) -> Result<()> {
    let v = r.u32()?;
    if v != FORMAT_VERSION {
        return Err(Error::format(ctx, format!("unsupported format version {v}")));
    }
    Ok(())
}

fn expect_end(r: &Reader, ctx: &str) -> Result<()> {
    if !r.at_end() {
        return Err(Error::format(ctx, "trailing bytes"));
    }
    Ok(())
}

pub fn decode_model(buf: &[u8], ctx: &str) -> Result<Model> {
    let mut r = Reader::new(buf, ctx);
    r.magic(MODEL_MAGIC)?;
    check_version(&mut r, ctx)?;
    let m = read_model(&mut r, Precision::F32, ctx)?;
    expect_end(&r, ctx)?;
    Ok(m)
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Vec<u8> {
    let mut w = Writer { out: CHECKPOINT_MAGIC.to_vec(), precision: Precision::F64 };
    w.u32(FORMAT_VERSION as usize);
    w.out.extend_from_slice(&(ckpt.epoch as u64).to_le_bytes());
    w.out.extend_from_slice(&ckpt.lr.to_le_bytes());
    w.out.extend_from_slice(&ckpt.seed.to_le_bytes());
    write_model(&mut w, &ckpt.model);
    w.u32(ckpt.velocity.len());
    w.params(&ckpt.velocity);
    w.out
}

pub fn decode_checkpoint(buf: &[u8], ctx: &str) -> Result<Checkpoint> {
    let mut r = Reader::new(buf, ctx);
    r.magic(CHECKPOINT_MAGIC)?;
    check_version(&mut r, ctx)?;
    let epoch = r.u64()? as usize;
    let lr = r.f64()?;
    let seed = r.u64()?;
    let model = read_model(&mut r, Precision::F64, ctx)?;
    let n = r.u32()? as usize;
    let velocity = read_params(&mut r, Precision::F64, n)?;
    expect_end(&r, ctx)?;
    Ok(Checkpoint { model, epoch, lr, seed, velocity })
}

pub fn write_model_file(path: &Path, model: &Model) -> Result<()> {
    write_atomic(path, &encode_model(model))
}

pub fn read_model_file(path: &Path) -> Result<Model> {
    decode_model(&read_file(path)?, &path.display().to_string())
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    write_atomic(path, &encode_checkpoint(ckpt))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode_checkpoint(&read_file(path)?, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use spkver_core::rng::rng_from;

    fn model(loss: LossKind) -> Model {
        let arch = Architecture::from_widths(23, [8, 8, 8, 8, 12], 8, 6);
        Model::init(arch, loss, vec!["a".into(), "b".into(), "c".into()], &mut rng_from(3)).unwrap()
    }

    #[test]
    fn model_roundtrip_rounds_to_f32() {
        for loss in [
            LossKind::Softmax,
            LossKind::ASoftmax { m: 3 },
            LossKind::Triplet { margin: 0.2, mining: Mining::Random },
        ] {
            let m = model(loss);
            let bytes = encode_model(&m);
            assert_eq!(&bytes[..4], b"NET1");
            let back = decode_model(&bytes, "t").unwrap();
            assert_eq!(back.loss, loss);
            assert_eq!(back.speakers, m.speakers);
            assert_eq!(back.net.arch, m.net.arch);
            let w0 = &m.net.layers[0].weight;
            assert!(back.net.layers[0].weight.iter().zip(w0).all(|(x, y)| *x == f64::from(*y as f32)));
            assert_eq!(encode_model(&back), bytes);
        }
    }

    #[test]
    fn checkpoint_roundtrip_is_exact() {
        let ck = Checkpoint {
            model: model(LossKind::ASoftmax { m: 2 }),
            epoch: 7,
            lr: 0.0123,
            seed: 99,
            velocity: vec![0.1, -1e-300],
        };
        assert_eq!(decode_checkpoint(&encode_checkpoint(&ck), "t").unwrap(), ck);
    }

    #[test]
    fn rejects_damage() {
        let bytes = encode_model(&model(LossKind::Softmax));
        assert!(decode_model(&bytes[..bytes.len() - 2], "t").is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_model(&extra, "t").is_err());
        let mut v = bytes.clone();
        v[4] = 9;
        assert!(decode_model(&v, "t").is_err());
        assert!(decode_checkpoint(&bytes, "t").is_err());
    }
}

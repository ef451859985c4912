//! Binary checkpoint format, all integers little-endian:
//!
//! ```text
//! "MWPT"                      4 bytes
//! version                     u32 (= 1)
//! frames, input_dim, embed_dim, stages, classes, expansion   6 × u32
//! ablation bits               u8  (msp | wcp<<1 | gdfn<<2 | embedding<<3)
//! tensor count                u32
//! per tensor, in parameter order:
//!   name length u32, name bytes (UTF-8), rank u32, extents rank × u64,
//!   values numel × f64
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::autodiff::Parameterized;
use crate::binio::{put_f64s, put_u32, u32_field, ByteReader};
use crate::error::Result;

use super::{Ablation, GestFormerModel, ModelConfig};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MWPT";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(mut w: W, model: &GestFormerModel) -> Result<()> {
    let c = &model.config;
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    put_u32(&mut out, CHECKPOINT_VERSION);
    for (name, v) in [
        ("frames", c.frames),
        ("input_dim", c.input_dim),
        ("embed_dim", c.embed_dim),
        ("stages", c.stages),
        ("classes", c.classes),
        ("expansion", c.expansion),
    ] {
        put_u32(&mut out, u32_field(v, name)?);
    }
    out.push(c.ablation.bits());
    let params = model.params();
    put_u32(&mut out, u32_field(params.len(), "tensor count")?);
    for p in params {
        put_u32(&mut out, u32_field(p.name.len(), "name length")?);
        out.extend_from_slice(p.name.as_bytes());
        put_u32(&mut out, u32_field(p.value.dims().len(), "rank")?);
        for &d in p.value.dims() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        put_f64s(&mut out, p.value.data());
    }
    w.write_all(&out)?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<GestFormerModel> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut rd = ByteReader::new(&buf);
    rd.expect_magic(CHECKPOINT_MAGIC)?;
    let at = rd.offset();
    let version = rd.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(rd.format_error(at, format!("unsupported checkpoint version {version}")));
    }
    let mut field = |name: &str| -> Result<usize> { Ok(rd.u32(name)? as usize) };
    let frames = field("frames")?;
    let input_dim = field("input_dim")?;
    let embed_dim = field("embed_dim")?;
    let stages = field("stages")?;
    let classes = field("classes")?;
    let expansion = field("expansion")?;
    let at = rd.offset();
    let bits = rd.u8("ablation")?;
    let ablation = Ablation::from_bits(bits)
        .ok_or_else(|| rd.format_error(at, format!("unknown ablation bits {bits:#04b}")))?;
    let config = ModelConfig {
        frames,
        input_dim,
        embed_dim,
        stages,
        classes,
        expansion,
        ablation,
    };
    config
        .validate()
        .map_err(|e| rd.format_error(at, format!("invalid stored config: {e}")))?;

    let mut model = GestFormerModel::new(config, 0)?;
    let at = rd.offset();
    let count = rd.u32("tensor count")? as usize;
    let expected = model.params().len();
    if count != expected {
        return Err(rd.format_error(
            at,
            format!("checkpoint holds {count} tensors, config needs {expected}"),
        ));
    }
    for p in model.params_mut() {
        let at = rd.offset();
        let len = rd.u32("name length")? as usize;
        let name = rd.take(len, "tensor name")?;
        if name != p.name.as_bytes() {
            return Err(rd.format_error(
                at,
                format!(
                    "expected tensor {:?}, found {:?}",
                    p.name,
                    String::from_utf8_lossy(name)
                ),
            ));
        }
        let at = rd.offset();
        let rank = rd.u32("rank")? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(rd.u64("extent")? as usize);
        }
        if dims != p.value.dims() {
            return Err(rd.format_error(
                at,
                format!("tensor {} has extents {dims:?}, expected {:?}", p.name, p.value.dims()),
            ));
        }
        let values = rd.f64s(p.value.numel(), &p.name)?;
        p.value.data_mut().copy_from_slice(&values);
    }
    if rd.remaining() != 0 {
        return Err(rd.format_error(
            rd.offset(),
            format!("{} trailing bytes after last tensor", rd.remaining()),
        ));
    }
    Ok(model)
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &GestFormerModel) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, model)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<GestFormerModel> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(crate::error::Error::io_at(path))?;
    read_checkpoint(std::io::BufReader::new(file))
}

//! Binary model files: a `key=value` manifest of the [`FcnConfig`] followed
//! by named f64 little-endian tensors, batch-norm running statistics
//! included.

use std::io::{Read, Write};
use std::path::Path;

use super::{FcnConfig, FcnModel};
use crate::autograd::{BnStats, Tensor};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: [u8; 4] = *b"NSZM";
const VERSION: u32 = 1;

fn manifest(cfg: &FcnConfig) -> String {
    format!(
        "mode={}\nn_blocks={}\npool_stride={}\nn_maps={}\nfilter_width={}\nn_input_channels={}\ninput_len={}\nseed={}\n",
        cfg.mode, cfg.n_blocks, cfg.pool_stride, cfg.n_maps, cfg.filter_width, cfg.n_input_channels, cfg.input_len, cfg.seed
    )
}

fn parse_manifest(text: &str) -> Result<FcnConfig> {
    let mut cfg = FcnConfig::default();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Format(format!("manifest line {line:?}")))?;
        let num = || v.parse::<usize>().map_err(|_| Error::Format(format!("manifest value {line:?}")));
        match k {
            "mode" => cfg.mode = v.parse()?,
            "n_blocks" => cfg.n_blocks = num()?,
            "pool_stride" => cfg.pool_stride = num()?,
            "n_maps" => cfg.n_maps = num()?,
            "filter_width" => cfg.filter_width = num()?,
            "n_input_channels" => cfg.n_input_channels = num()?,
            "input_len" => cfg.input_len = num()?,
            "seed" => cfg.seed = v.parse().map_err(|_| Error::Format(format!("manifest value {line:?}")))?,
            _ => return Err(Error::Format(format!("unknown manifest key {k:?}"))),
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn put_tensor(out: &mut impl Write, name: &str, t: &Tensor) -> std::io::Result<()> {
    out.write_all(&(name.len() as u16).to_le_bytes())?;
    out.write_all(name.as_bytes())?;
    out.write_all(&[t.shape().len() as u8])?;
    for &d in t.shape() {
        out.write_all(&(d as u32).to_le_bytes())?;
    }
    for v in t.data() {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_model(model: &FcnModel, out: &mut impl Write) -> std::io::Result<()> {
    out.write_all(&MODEL_MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    let text = manifest(model.config());
    out.write_all(&(text.len() as u32).to_le_bytes())?;
    out.write_all(text.as_bytes())?;
    let n = model.params().len() + 2 * model.bn_stats().len();
    out.write_all(&(n as u32).to_le_bytes())?;
    for (name, t) in model.param_names().iter().zip(model.params()) {
        put_tensor(out, name, t)?;
    }
    for (name, s) in model.bn_names().iter().zip(model.bn_stats()) {
        let c = s.mean.len();
        put_tensor(out, &format!("{name}.running_mean"), &Tensor::new(vec![c], s.mean.clone()).expect("1-d"))?;
        put_tensor(out, &format!("{name}.running_var"), &Tensor::new(vec![c], s.var.clone()).expect("1-d"))?;
    }
    Ok(())
}

fn take<const N: usize>(input: &mut impl Read) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    input.read_exact(&mut b).map_err(|e| Error::Format(format!("truncated model file: {e}")))?;
    Ok(b)
}

fn take_vec(input: &mut impl Read, n: usize) -> Result<Vec<u8>> {
    let mut b = vec![0u8; n];
    input.read_exact(&mut b).map_err(|e| Error::Format(format!("truncated model file: {e}")))?;
    Ok(b)
}

fn get_tensor(input: &mut impl Read) -> Result<(String, Tensor)> {
    let name_len = u16::from_le_bytes(take(input)?) as usize;
    let name = String::from_utf8(take_vec(input, name_len)?).map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
    let ndim = take::<1>(input)?[0] as usize;
    let mut shape = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        shape.push(u32::from_le_bytes(take(input)?) as usize);
    }
    let n: usize = shape.iter().product();
    if n > 1 << 28 {
        return Err(Error::Format(format!("tensor {name} is implausibly large")));
    }
    let bytes = take_vec(input, n * 8)?;
    let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Ok((name, Tensor::new(shape, data)?))
}

pub fn read_model(input: &mut impl Read) -> Result<FcnModel> {
    if take::<4>(input)? != MODEL_MAGIC {
        return Err(Error::Format("not a model file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(take(input)?);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported model version {version}")));
    }
    let text_len = u32::from_le_bytes(take(input)?) as usize;
    let text = String::from_utf8(take_vec(input, text_len.min(1 << 16))?)
        .map_err(|_| Error::Format("manifest is not UTF-8".into()))?;
    let config = parse_manifest(&text)?;
    let template = FcnModel::build(config.clone())?;
    let count = u32::from_le_bytes(take(input)?) as usize;
    let expected = template.params().len() + 2 * template.bn_stats().len();
    if count != expected {
        return Err(Error::Format(format!("model file holds {count} tensors, configuration needs {expected}")));
    }
    let mut params = Vec::with_capacity(template.params().len());
    for name in template.param_names() {
        let (got, t) = get_tensor(input)?;
        if &got != name {
            return Err(Error::Format(format!("expected tensor {name}, found {got}")));
        }
        params.push(t);
    }
    let mut stats = Vec::with_capacity(template.bn_stats().len());
    for name in template.bn_names() {
        let (m_name, mean) = get_tensor(input)?;
        let (v_name, var) = get_tensor(input)?;
        if m_name != format!("{name}.running_mean") || v_name != format!("{name}.running_var") {
            return Err(Error::Format(format!("missing running statistics for {name}")));
        }
        stats.push(BnStats::from_parts(mean.into_data(), var.into_data()));
    }
    FcnModel::from_parts(config, params, stats)
}

pub fn save_model(model: &FcnModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_model(model, &mut buf).expect("writing to memory");
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<FcnModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_model(&mut bytes.as_slice())
}

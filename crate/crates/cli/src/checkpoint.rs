//! Versioned little-endian binary checkpoints: a magic, the model
//! configuration, then the named parameter tensors.

use std::io::Write;
use std::path::Path;

use sod_core::network::{load_parameters, load_stats, named_parameters, named_stats, Model, ModelConfig};

use crate::error::{CliError, IoContext, Result};

const MAGIC: &[u8; 8] = b"SODCKPT1";

fn push_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_str(out: &mut Vec<u8>, s: &str) {
    push_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: String,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(CliError::contract(format!(
                "{}: truncated checkpoint at byte {}",
                self.path, self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f64(&mut self) -> Result<f64> {
        let b = self.take(8)?;
        Ok(f64::from_le_bytes([
            b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7],
        ]))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let b = self.take(n)?;
        String::from_utf8(b.to_vec())
            .map_err(|_| CliError::contract(format!("{}: non-UTF8 name in checkpoint", self.path)))
    }
}

pub fn save(path: &Path, model: &Model) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    let cfg = &model.config;
    push_u32(&mut out, cfg.channels.len() as u32);
    for &c in &cfg.channels {
        push_u32(&mut out, c as u32);
    }
    push_u32(&mut out, cfg.input as u32);
    let flags = [
        cfg.ndam_p1,
        cfg.ndam_p2,
        cfg.aiam_i1,
        cfg.aiam_i2,
        cfg.side_outputs,
    ];
    out.push(flags.iter().fold(0u8, |acc, &f| (acc << 1) | u8::from(f)));

    let params = named_parameters(model);
    push_u32(&mut out, params.len() as u32);
    for (name, shape, values) in &params {
        push_str(&mut out, name);
        push_u32(&mut out, shape.len() as u32);
        for &d in shape {
            push_u32(&mut out, d as u32);
        }
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let stats = named_stats(model);
    push_u32(&mut out, stats.len() as u32);
    for (name, mean, var) in &stats {
        push_str(&mut out, name);
        push_u32(&mut out, mean.len() as u32);
        for v in mean.iter().chain(var.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path).io_ctx(format!("creating {}", path.display()))?;
    f.write_all(&out).io_ctx(format!("writing {}", path.display()))
}

pub fn load(path: &Path) -> Result<Model> {
    let bytes = std::fs::read(path).io_ctx(format!("reading {}", path.display()))?;
    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
        path: path.display().to_string(),
    };
    if r.take(8)? != MAGIC {
        return Err(CliError::contract(format!(
            "{}: not a checkpoint (bad magic)",
            path.display()
        )));
    }
    let n_ch = r.u32()? as usize;
    let mut channels = Vec::with_capacity(n_ch);
    for _ in 0..n_ch {
        channels.push(r.u32()? as usize);
    }
    let input = r.u32()? as usize;
    let flags = r.take(1)?[0];
    let cfg = ModelConfig {
        channels,
        input,
        ndam_p1: flags & 0b10000 != 0,
        ndam_p2: flags & 0b01000 != 0,
        aiam_i1: flags & 0b00100 != 0,
        aiam_i2: flags & 0b00010 != 0,
        side_outputs: flags & 0b00001 != 0,
    };
    // weights are loaded over the fresh init, so the build seed is moot
    let mut model = Model::build(cfg, 0)?;

    let n_params = r.u32()? as usize;
    let mut values = Vec::with_capacity(n_params);
    for _ in 0..n_params {
        let name = r.string()?;
        let ndim = r.u32()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u32()? as usize);
        }
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(r.f64()?);
        }
        values.push((name, shape, data));
    }
    let n_stats = r.u32()? as usize;
    let mut stats = Vec::with_capacity(n_stats);
    for _ in 0..n_stats {
        let name = r.string()?;
        let channels = r.u32()? as usize;
        let mut mean = Vec::with_capacity(channels);
        for _ in 0..channels {
            mean.push(r.f64()?);
        }
        let mut var = Vec::with_capacity(channels);
        for _ in 0..channels {
            var.push(r.f64()?);
        }
        stats.push((name, mean, var));
    }
    if r.pos != bytes.len() {
        return Err(CliError::contract(format!(
            "{}: {} trailing bytes after running stats",
            path.display(),
            bytes.len() - r.pos
        )));
    }
    load_parameters(&mut model, &values)?;
    load_stats(&model, &stats)?;
    Ok(model)
}

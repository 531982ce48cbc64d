//! Network checkpoint files.
//!
//! A checkpoint is a text manifest (format version, role, dimensionality,
//! layer count, channel ladder, per-layer geometry, epoch index, seed)
//! terminated by an `end` line, followed by the raw little-endian IEEE-754
//! f64 parameters: layers in order, weights then biases, row-major.
//! Round-trips are bit-exact.

use crate::convnet::{Activation, ConvSpec, LayerParams, NetworkParams, Role};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use std::fs;
use std::io::Write;
use std::path::Path;

const MAGIC: &str = "geogan-checkpoint";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckpointMeta {
    /// Training epoch the parameters were taken from (1-based; 0 = untrained).
    pub epoch: usize,
    /// Master seed of the run that produced the parameters.
    pub seed: u64,
}

pub fn save_checkpoint(
    net: &NetworkParams,
    meta: &CheckpointMeta,
    path: &Path,
) -> Result<()> {
    net.validate()?;
    let mut out: Vec<u8> = Vec::new();
    writeln!(out, "{MAGIC} {VERSION}")?;
    writeln!(out, "role {}", net.role.name())?;
    writeln!(out, "dims {}", net.dims())?;
    writeln!(out, "dp {}", net.dp())?;
    let mut ladder = vec![net.in_channels()];
    ladder.extend(net.layers.iter().map(|l| l.spec.out_channels));
    write!(out, "channels")?;
    for c in &ladder {
        write!(out, " {c}")?;
    }
    out.push(b'\n');
    writeln!(out, "epoch {}", meta.epoch)?;
    writeln!(out, "seed {}", meta.seed)?;
    for (i, layer) in net.layers.iter().enumerate() {
        let s = &layer.spec;
        write!(
            out,
            "layer {i} transposed {} kernel",
            u8::from(s.transposed)
        )?;
        for k in &s.kernel {
            write!(out, " {k}")?;
        }
        write!(out, " stride {} padding", s.stride)?;
        for p in &s.padding {
            write!(out, " {p}")?;
        }
        writeln!(
            out,
            " in {} out {} act {}",
            s.in_channels,
            s.out_channels,
            s.activation.name()
        )?;
    }
    writeln!(out, "end")?;
    for layer in &net.layers {
        for w in layer.weights.data() {
            out.extend_from_slice(&w.to_le_bytes());
        }
        for b in &layer.biases {
            out.extend_from_slice(&b.to_le_bytes());
        }
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(NetworkParams, CheckpointMeta)> {
    let bytes = fs::read(path)?;
    let bad = |msg: String| Error::Format {
        path: path.display().to_string(),
        msg,
    };
    let mut pos = 0usize;
    let mut lines: Vec<String> = Vec::new();
    // header runs until the `end` line; everything after is binary payload
    loop {
        let start = pos;
        while pos < bytes.len() && bytes[pos] != b'\n' {
            pos += 1;
        }
        if pos >= bytes.len() {
            return Err(bad("missing end-of-header marker".into()));
        }
        let line = std::str::from_utf8(&bytes[start..pos])
            .map_err(|_| bad("non-utf8 header".into()))?
            .to_string();
        pos += 1;
        if line.trim() == "end" {
            break;
        }
        lines.push(line);
    }

    let mut it = lines.iter();
    let magic = it.next().ok_or_else(|| bad("empty header".into()))?;
    let mut mp = magic.split_whitespace();
    if mp.next() != Some(MAGIC) {
        return Err(bad("missing checkpoint magic".into()));
    }
    let version: u32 = mp
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| bad("missing version".into()))?;
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }

    let mut field = |name: &str| -> Result<String> {
        let line = it
            .next()
            .ok_or_else(|| bad(format!("missing {name} line")))?;
        line.strip_prefix(name)
            .map(|v| v.trim().to_string())
            .ok_or_else(|| bad(format!("expected {name} line, got {line:?}")))
    };

    let role = Role::parse(&field("role")?)?;
    let dims: usize = field("dims")?
        .parse()
        .map_err(|_| bad("bad dims".into()))?;
    let dp: usize = field("dp")?.parse().map_err(|_| bad("bad dp".into()))?;
    let channels: Vec<usize> = field("channels")?
        .split_whitespace()
        .map(|v| v.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| bad("bad channels".into()))?;
    if channels.len() != dp + 1 {
        return Err(bad(format!(
            "channel ladder has {} entries for dp {dp}",
            channels.len()
        )));
    }
    let epoch: usize = field("epoch")?
        .parse()
        .map_err(|_| bad("bad epoch".into()))?;
    let seed: u64 = field("seed")?.parse().map_err(|_| bad("bad seed".into()))?;

    let mut layers = Vec::with_capacity(dp);
    for i in 0..dp {
        let line = it
            .next()
            .ok_or_else(|| bad(format!("missing layer {i} line")))?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        // layer <i> transposed <t> kernel <k...> stride <s> padding <p...>
        //   in <c> out <c> act <name>
        let want = 14 + 2 * dims;
        if toks.len() != want || toks[0] != "layer" {
            return Err(bad(format!("malformed layer line {line:?}")));
        }
        let idx: usize = toks[1].parse().map_err(|_| bad("bad layer index".into()))?;
        if idx != i {
            return Err(bad(format!("layer {idx} out of order")));
        }
        if toks[2] != "transposed" || toks[4] != "kernel" {
            return Err(bad(format!("malformed layer line {line:?}")));
        }
        let transposed = match toks[3] {
            "0" => false,
            "1" => true,
            other => return Err(bad(format!("bad transposed flag {other:?}"))),
        };
        let kernel: Vec<usize> = toks[5..5 + dims]
            .iter()
            .map(|v| v.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad("bad kernel".into()))?;
        let mut at = 5 + dims;
        if toks[at] != "stride" {
            return Err(bad("missing stride".into()));
        }
        let stride: usize = toks[at + 1]
            .parse()
            .map_err(|_| bad("bad stride".into()))?;
        at += 2;
        if toks[at] != "padding" {
            return Err(bad("missing padding".into()));
        }
        let padding: Vec<usize> = toks[at + 1..at + 1 + dims]
            .iter()
            .map(|v| v.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad("bad padding".into()))?;
        at += 1 + dims;
        if toks[at] != "in" || toks[at + 2] != "out" || toks[at + 4] != "act" {
            return Err(bad(format!("malformed layer line {line:?}")));
        }
        let in_channels: usize = toks[at + 1].parse().map_err(|_| bad("bad in".into()))?;
        let out_channels: usize = toks[at + 3].parse().map_err(|_| bad("bad out".into()))?;
        let activation = Activation::parse(toks[at + 5])?;
        if in_channels != channels[i] || out_channels != channels[i + 1] {
            return Err(bad(format!(
                "layer {i} channels disagree with the ladder"
            )));
        }
        let spec = ConvSpec {
            kernel,
            stride,
            padding,
            transposed,
            activation,
            in_channels,
            out_channels,
        };
        layers.push(LayerParams::zeros(spec)?);
    }

    // binary payload: weights then biases per layer
    let expected: usize = layers.iter().map(|l| l.param_count()).sum();
    let payload = &bytes[pos..];
    if payload.len() != expected * 8 {
        return Err(bad(format!(
            "expected {} parameter bytes, found {}",
            expected * 8,
            payload.len()
        )));
    }
    let mut offset = 0usize;
    let mut take = |n: usize| -> Vec<f64> {
        let vals = payload[offset..offset + 8 * n]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        offset += 8 * n;
        vals
    };
    for layer in &mut layers {
        let w = take(layer.weights.len());
        layer.weights = Tensor::from_vec(layer.weights.shape(), w)?;
        layer.biases = take(layer.biases.len());
    }

    let net = NetworkParams { role, layers };
    net.validate()?;
    Ok((net, CheckpointMeta { epoch, seed }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convnet::{init_params, ArchitectureSpec};

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        for arch in [
            ArchitectureSpec::generator(2, 2, vec![6, 3, 1], 5),
            ArchitectureSpec::discriminator(3, vec![4, 1], 3),
        ] {
            let net = init_params(&arch, 99).unwrap();
            let meta = CheckpointMeta { epoch: 17, seed: 99 };
            let path = dir.path().join(format!("{}.ckpt", arch.role.name()));
            save_checkpoint(&net, &meta, &path).unwrap();
            let (back, meta2) = load_checkpoint(&path).unwrap();
            assert_eq!(meta2, meta);
            assert_eq!(back.role, net.role);
            for (a, b) in back.layers.iter().zip(&net.layers) {
                assert_eq!(a.spec, b.spec);
                for (x, y) in a.weights.data().iter().zip(b.weights.data()) {
                    assert_eq!(x.to_bits(), y.to_bits());
                }
                for (x, y) in a.biases.iter().zip(&b.biases) {
                    assert_eq!(x.to_bits(), y.to_bits());
                }
            }
        }
    }

    #[test]
    fn rejects_truncated_payload() {
        let dir = tempfile::tempdir().unwrap();
        let arch = ArchitectureSpec::generator(2, 1, vec![2, 1], 3);
        let net = init_params(&arch, 1).unwrap();
        let path = dir.path().join("g.ckpt");
        save_checkpoint(&net, &CheckpointMeta { epoch: 1, seed: 1 }, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 8);
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn rejects_wrong_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.ckpt");
        std::fs::write(&path, b"something-else 1\nend\n").unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}

//! File formats.
//!
//! Weight blob layout (little-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "EPWB"
//! 4       2     version (1)
//! 6       2     precision tag (0 = fp32, 1 = fp16)
//! 8       8     number of values that follow
//! 16      ...   values
//! ```
//!
//! Values are ordered per layer, per direction (forward first), per gate
//! (input, forget, cell updater, output), and within a gate as `W_gx`
//! (row-major, one row per neuron), `W_gh`, bias, then the peephole vector
//! for gates that have one in a peephole layer.
//!
//! Input sequences are an 8-byte header (`u32` frame count, `u32` frame
//! width) followed by `f32` values frame by frame, or CSV with one frame
//! per line.

use std::fs;
use std::io::Write;
use std::path::Path;

use half::f16;

use crate::error::{Error, Result};
use crate::model::{
    Gate, GateWeights, LayerDescriptor, Matrix, NetworkDescriptor, NetworkWeights, Precision,
    Sequence, WeightSet,
};

pub const WEIGHT_MAGIC: [u8; 4] = *b"EPWB";
pub const WEIGHT_VERSION: u16 = 1;
const HEADER_BYTES: usize = 16;

pub fn parse_descriptor(text: &str) -> Result<NetworkDescriptor> {
    let net: NetworkDescriptor = serde_json::from_str(text)?;
    net.validate()?;
    Ok(net)
}

pub fn read_descriptor(path: &Path) -> Result<NetworkDescriptor> {
    parse_descriptor(&fs::read_to_string(path)?)
}

pub fn descriptor_json(net: &NetworkDescriptor) -> String {
    serde_json::to_string_pretty(net).expect("descriptor serializes")
}

fn set_values<'a>(layer: &LayerDescriptor, w: &'a WeightSet) -> impl Iterator<Item = f32> + 'a {
    let peep = layer.peephole;
    Gate::ALL.into_iter().flat_map(move |g| {
        let gw = w.gate(g);
        let p: &[f32] = match (&gw.peephole, peep && g.has_peephole()) {
            (Some(p), true) => p,
            _ => &[],
        };
        gw.forward
            .as_slice()
            .iter()
            .chain(gw.recurrent.as_slice())
            .chain(&gw.bias)
            .chain(p)
            .copied()
    })
}

/// Serialize weights; values are rounded to the network's precision.
pub fn encode_weights(net: &NetworkDescriptor, weights: &NetworkWeights) -> Result<Vec<u8>> {
    net.validate()?;
    weights.validate(net)?;
    let prec = net.numeric_precision;
    let count = net.weight_elems();
    let mut out = Vec::with_capacity(HEADER_BYTES + (count * prec.bytes()) as usize);
    out.extend_from_slice(&WEIGHT_MAGIC);
    out.extend_from_slice(&WEIGHT_VERSION.to_le_bytes());
    out.extend_from_slice(&prec.tag().to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    for (layer, sets) in net.layers.iter().zip(&weights.layers) {
        for w in sets {
            for v in set_values(layer, w) {
                match prec {
                    Precision::Fp32 => out.extend_from_slice(&v.to_le_bytes()),
                    Precision::Fp16 => out.extend_from_slice(&f16::from_f32(v).to_le_bytes()),
                }
            }
        }
    }
    Ok(out)
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
    prec: Precision,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Vec<f32> {
        let eb = self.prec.bytes() as usize;
        let bytes = &self.data[self.pos..self.pos + n * eb];
        self.pos += n * eb;
        match self.prec {
            Precision::Fp32 => bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
            Precision::Fp16 => bytes
                .chunks_exact(2)
                .map(|c| f16::from_le_bytes([c[0], c[1]]).to_f32())
                .collect(),
        }
    }
}

pub fn decode_weights(net: &NetworkDescriptor, data: &[u8]) -> Result<NetworkWeights> {
    net.validate()?;
    if data.len() < HEADER_BYTES {
        return Err(Error::Parse(format!(
            "weight blob is {} bytes, shorter than its header",
            data.len()
        )));
    }
    if data[0..4] != WEIGHT_MAGIC {
        return Err(Error::Parse("weight blob has a bad magic number".into()));
    }
    let version = u16::from_le_bytes([data[4], data[5]]);
    if version != WEIGHT_VERSION {
        return Err(Error::Parse(format!(
            "unsupported weight blob version {version}"
        )));
    }
    let tag = u16::from_le_bytes([data[6], data[7]]);
    let prec = Precision::from_tag(tag)
        .ok_or_else(|| Error::Parse(format!("unknown precision tag {tag}")))?;
    if prec != net.numeric_precision {
        return Err(Error::Parse(format!(
            "weight blob is {} but the descriptor declares {}",
            prec.name(),
            net.numeric_precision.name()
        )));
    }
    let count = u64::from_le_bytes(data[8..16].try_into().expect("8 bytes"));
    if count != net.weight_elems() {
        return Err(Error::Parse(format!(
            "weight blob holds {count} values, descriptor needs {}",
            net.weight_elems()
        )));
    }
    let body = (data.len() - HEADER_BYTES) as u64;
    if body != count * prec.bytes() {
        return Err(Error::Parse(format!(
            "weight blob body is {body} bytes, expected {}",
            count * prec.bytes()
        )));
    }
    let mut r = Reader {
        data,
        pos: HEADER_BYTES,
        prec,
    };
    let layers = net
        .layers
        .iter()
        .map(|l| {
            let (nx, nh) = (l.input_size, l.hidden_size);
            (0..l.passes())
                .map(|_| WeightSet {
                    gates: Gate::ALL.map(|g| GateWeights {
                        forward: Matrix::from_vec(nh, nx, r.take(nh * nx)).expect("sized"),
                        recurrent: Matrix::from_vec(nh, nh, r.take(nh * nh)).expect("sized"),
                        bias: r.take(nh),
                        peephole: (l.peephole && g.has_peephole()).then(|| r.take(nh)),
                    }),
                })
                .collect()
        })
        .collect();
    let w = NetworkWeights { layers };
    w.validate(net)?;
    Ok(w)
}

pub fn read_weights(net: &NetworkDescriptor, path: &Path) -> Result<NetworkWeights> {
    decode_weights(net, &fs::read(path)?)
}

pub fn encode_sequence(seq: &Sequence) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + seq.as_slice().len() * 4);
    out.extend_from_slice(&(seq.len() as u32).to_le_bytes());
    out.extend_from_slice(&(seq.dim() as u32).to_le_bytes());
    for v in seq.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_sequence(data: &[u8]) -> Result<Sequence> {
    if data.len() < 8 {
        return Err(Error::Parse(
            "input file is shorter than its 8-byte header".into(),
        ));
    }
    let t = u32::from_le_bytes(data[0..4].try_into().expect("4 bytes")) as usize;
    let dim = u32::from_le_bytes(data[4..8].try_into().expect("4 bytes")) as usize;
    if t == 0 || dim == 0 {
        return Err(Error::Parse(format!(
            "input header declares {t} frames of width {dim}"
        )));
    }
    let want = t
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Parse("input header overflows".into()))?;
    if data.len() - 8 != want {
        return Err(Error::Parse(format!(
            "input body is {} bytes, header implies {want}",
            data.len() - 8
        )));
    }
    let values = data[8..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let seq = Sequence::new(dim, values)?;
    seq.ensure_finite("input sequence")?;
    Ok(seq)
}

/// One frame per non-empty line, values separated by commas. Lines
/// starting with `#` are ignored.
pub fn parse_csv_sequence(text: &str) -> Result<Sequence> {
    let mut frames = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let frame = line
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f32>()
                    .map_err(|e| Error::Parse(format!("line {}: {v:?}: {e}", n + 1)))
            })
            .collect::<Result<Vec<f32>>>()?;
        frames.push(frame);
    }
    if frames.is_empty() {
        return Err(Error::Parse("CSV input has no frames".into()));
    }
    let seq = Sequence::from_frames(&frames)?;
    seq.ensure_finite("input sequence")?;
    Ok(seq)
}

/// Binary unless the file name ends in `.csv`.
pub fn read_sequence(path: &Path) -> Result<Sequence> {
    if path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
    {
        parse_csv_sequence(&fs::read_to_string(path)?)
    } else {
        decode_sequence(&fs::read(path)?)
    }
}

/// Write through a temporary file in the same directory and rename, so a
/// reader never sees a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

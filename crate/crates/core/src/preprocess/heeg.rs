//! `HEEG1` tensor files.
//!
//! Layout: magic `HEEG1\0`, then little-endian `u32` channel count, `u32` sample
//! count, `u32` rate, then `f32` little-endian data in channel-major order.
//!
//! Channel labels (and optionally the layout name) live in a sidecar text file
//! `<file>.channels`: an optional `# layout: <name>` line followed by one label
//! per line. Keyed tensors (window banks, external embeddings) use one row per
//! sample and a `<file>.keys.csv` sidecar with a `sample_id` column.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 6] = b"HEEG1\0";

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub data: Array2<f32>,
    pub rate: u32,
}

pub fn encode(t: &Tensor) -> Vec<u8> {
    let (c, n) = t.data.dim();
    let mut out = Vec::with_capacity(MAGIC.len() + 12 + 4 * c * n);
    out.extend_from_slice(MAGIC);
    // Vec<u8> writes cannot fail
    out.write_u32::<LittleEndian>(c as u32).unwrap();
    out.write_u32::<LittleEndian>(n as u32).unwrap();
    out.write_u32::<LittleEndian>(t.rate).unwrap();
    for v in t.data.iter() {
        out.write_f32::<LittleEndian>(*v).unwrap();
    }
    out
}

pub fn decode(mut bytes: &[u8], origin: &Path) -> Result<Tensor> {
    let mut magic = [0u8; 6];
    bytes
        .read_exact(&mut magic)
        .map_err(|_| Error::format(origin, "truncated header"))?;
    if &magic != MAGIC {
        return Err(Error::format(origin, "bad magic, expected HEEG1"));
    }
    let mut header = || {
        bytes
            .read_u32::<LittleEndian>()
            .map_err(|_| Error::format(origin, "truncated header"))
    };
    let c = header()? as usize;
    let n = header()? as usize;
    let rate = header()?;
    if bytes.len() != 4 * c * n {
        return Err(Error::format(
            origin,
            format!("payload is {} bytes, expected {}", bytes.len(), 4 * c * n),
        ));
    }
    let mut data = vec![0f32; c * n];
    bytes
        .read_f32_into::<LittleEndian>(&mut data)
        .map_err(|e| Error::io(origin, e))?;
    let data = Array2::from_shape_vec((c, n), data).map_err(|e| Error::format(origin, e.to_string()))?;
    Ok(Tensor { data, rate })
}

pub fn write_tensor(path: &Path, t: &Tensor) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    w.write_all(&encode(t)).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    BufReader::new(f)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn channels_path(path: &Path) -> PathBuf {
    sidecar(path, ".channels")
}

pub fn keys_path(path: &Path) -> PathBuf {
    sidecar(path, ".keys.csv")
}

pub fn write_channels(path: &Path, layout: Option<&str>, labels: &[String]) -> Result<()> {
    let mut s = String::new();
    if let Some(l) = layout {
        s.push_str(&format!("# layout: {l}\n"));
    }
    for l in labels {
        s.push_str(l);
        s.push('\n');
    }
    let p = channels_path(path);
    fs::write(&p, s).map_err(|e| Error::io(&p, e))
}

/// Labels and layout name from the `.channels` sidecar, if present.
pub fn read_channels(path: &Path) -> Result<Option<(Option<String>, Vec<String>)>> {
    let p = channels_path(path);
    if !p.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    let mut layout = None;
    let mut labels = Vec::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(n) = rest.trim().strip_prefix("layout:") {
                layout = Some(n.trim().to_string());
            }
        } else {
            labels.push(line.to_string());
        }
    }
    Ok(Some((layout, labels)))
}

/// Rows of a tensor addressed by sample id.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyedTensor {
    pub keys: Vec<String>,
    pub tensor: Tensor,
}

pub fn write_keyed(path: &Path, kt: &KeyedTensor) -> Result<()> {
    if kt.keys.len() != kt.tensor.data.nrows() {
        return Err(Error::Shape {
            expected: kt.tensor.data.nrows(),
            got: kt.keys.len(),
        });
    }
    write_tensor(path, &kt.tensor)?;
    let kp = keys_path(path);
    let mut w = csv::Writer::from_path(&kp)?;
    w.write_record(["sample_id"])?;
    for k in &kt.keys {
        w.write_record([k])?;
    }
    w.flush().map_err(|e| Error::io(&kp, e))
}

pub fn read_keyed(path: &Path) -> Result<KeyedTensor> {
    let tensor = read_tensor(path)?;
    let kp = keys_path(path);
    let mut r = csv::Reader::from_path(&kp)?;
    let keys: Vec<String> = r
        .records()
        .map(|row| row.map(|row| row[0].to_string()))
        .collect::<std::result::Result<_, _>>()?;
    if keys.len() != tensor.data.nrows() {
        return Err(Error::format(
            &kp,
            format!("{} keys for {} rows", keys.len(), tensor.data.nrows()),
        ));
    }
    Ok(KeyedTensor { keys, tensor })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout_is_exact() {
        let t = Tensor {
            data: Array2::from_shape_vec((2, 1), vec![1.0f32, -2.0]).unwrap(),
            rate: 200,
        };
        let bytes = encode(&t);
        assert_eq!(&bytes[..6], b"HEEG1\0");
        assert_eq!(&bytes[6..10], &2u32.to_le_bytes());
        assert_eq!(&bytes[10..14], &1u32.to_le_bytes());
        assert_eq!(&bytes[14..18], &200u32.to_le_bytes());
        assert_eq!(&bytes[18..22], &1.0f32.to_le_bytes());
        assert_eq!(bytes.len(), 26);
        assert!(decode(&bytes[..20], Path::new("x")).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad, Path::new("x")).is_err());
    }

    proptest! {
        #[test]
        fn roundtrip(c in 1usize..5, n in 0usize..20, rate in 1u32..5000, seed in any::<u64>()) {
            let vals: Vec<f32> = (0..c * n).map(|i| ((seed as f64 + i as f64).sin() * 100.0) as f32).collect();
            let t = Tensor { data: Array2::from_shape_vec((c, n), vals).unwrap(), rate };
            prop_assert_eq!(decode(&encode(&t), Path::new("x")).unwrap(), t);
        }
    }

    #[test]
    fn keyed_and_channel_sidecars() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bank.heeg");
        let kt = KeyedTensor {
            keys: vec!["s1".into(), "s2".into()],
            tensor: Tensor {
                data: Array2::zeros((2, 3)),
                rate: 200,
            },
        };
        write_keyed(&p, &kt).unwrap();
        assert_eq!(read_keyed(&p).unwrap(), kt);
        assert_eq!(read_channels(&p).unwrap(), None);
        write_channels(&p, Some("biosemi"), &["A1".into(), "A2".into()]).unwrap();
        let (layout, labels) = read_channels(&p).unwrap().unwrap();
        assert_eq!(layout.as_deref(), Some("biosemi"));
        assert_eq!(labels, vec!["A1", "A2"]);
    }
}

//! Binary checkpoint format. All integers and floats are little-endian.
//!
//! ```text
//! magic      8 bytes   "CARELUCK"
//! version    u32       1
//! spec_len   u64
//! spec       spec_len bytes, UTF-8 JSON of the NetworkSpec
//! count      u64       number of named tensors
//! repeated count times:
//!   name_len u32
//!   name     name_len bytes, UTF-8 (e.g. "layer3.cas.alpha")
//!   ndim     u32
//!   dims     ndim × u64
//!   data     prod(dims) × f64 (IEEE-754 bits)
//! ```
//!
//! Tensors are written in [`Network::param_info`] order, then BN running
//! statistics, then any extra tensors (for instance input normalization).
//! Loading restores every value bit-for-bit.

use std::path::Path;

use crate::error::{Error, Result};
use crate::network::{Network, NetworkSpec};

pub const MAGIC: &[u8; 8] = b"CARELUCK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: NetworkSpec,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    /// Captures parameters and buffers of `net`, followed by `extras`.
    pub fn capture(net: &Network, extras: Vec<NamedTensor>) -> Self {
        let mut tensors: Vec<NamedTensor> = net
            .param_info()
            .into_iter()
            .zip(net.params())
            .map(|(info, values)| NamedTensor {
                name: info.name,
                shape: info.shape,
                data: values.to_vec(),
            })
            .collect();
        for (name, values) in net.buffers() {
            tensors.push(NamedTensor {
                name,
                shape: vec![values.len()],
                data: values.to_vec(),
            });
        }
        tensors.extend(extras);
        Checkpoint {
            spec: net.spec().clone(),
            tensors,
        }
    }

    pub fn get(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// Rebuilds the network from the spec and installs every stored value.
    pub fn to_network(&self) -> Result<Network> {
        let mut net = Network::from_spec(self.spec.clone())
            .map_err(|e| Error::Checkpoint(format!("stored spec is invalid: {e}")))?;
        let info = net.param_info();
        let lookup = |name: &str, len: usize| -> Result<&NamedTensor> {
            let t = self
                .get(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name:?}")))?;
            if t.data.len() != len {
                return Err(Error::Checkpoint(format!(
                    "tensor {name:?} has {} values, spec needs {len}",
                    t.data.len()
                )));
            }
            Ok(t)
        };
        let mut found = Vec::with_capacity(info.len());
        for (i, p) in info.iter().zip(net.params()) {
            found.push(lookup(&i.name, p.len())?);
        }
        for (slot, t) in net.params_mut().into_iter().zip(found) {
            slot.copy_from_slice(&t.data);
        }
        let mut buffers = Vec::new();
        for (name, b) in net.buffers() {
            buffers.push(lookup(&name, b.len())?);
        }
        for ((_, slot), t) in net.buffers_mut().into_iter().zip(buffers) {
            slot.copy_from_slice(&t.data);
        }
        Ok(net)
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let spec = serde_json::to_vec(&self.spec)
            .map_err(|e| Error::Checkpoint(format!("cannot serialize spec: {e}")))?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(spec.len() as u64).to_le_bytes());
        out.extend_from_slice(&spec);
        out.extend_from_slice(&(self.tensors.len() as u64).to_le_bytes());
        for t in &self.tensors {
            let expected: usize = t.shape.iter().product();
            if expected != t.data.len() {
                return Err(Error::Checkpoint(format!(
                    "tensor {:?}: shape {:?} does not match {} values",
                    t.name,
                    t.shape,
                    t.data.len()
                )));
            }
            out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for &d in &t.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(8, "magic")?;
        if magic != MAGIC {
            return Err(Error::Checkpoint(format!(
                "bad magic tag {:?}, expected {:?}",
                String::from_utf8_lossy(magic),
                std::str::from_utf8(MAGIC).unwrap()
            )));
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {version}, this build reads version {VERSION}"
            )));
        }
        let spec_len = r.len_u64("spec length")?;
        let spec: NetworkSpec = serde_json::from_slice(r.take(spec_len, "spec")?)
            .map_err(|e| Error::Checkpoint(format!("spec is not valid JSON: {e}")))?;
        let count = r.len_u64("tensor count")?;
        let mut tensors = Vec::new();
        for _ in 0..count {
            let name_len = r.u32("name length")? as usize;
            let name = std::str::from_utf8(r.take(name_len, "name")?)
                .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?
                .to_string();
            let ndim = r.u32("ndim")? as usize;
            let mut shape = Vec::with_capacity(ndim.min(8));
            for _ in 0..ndim {
                shape.push(r.len_u64("dimension")?);
            }
            let len = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| Error::Checkpoint(format!("tensor {name:?} is too large")))?;
            let raw = r.take(
                len.checked_mul(8)
                    .ok_or_else(|| Error::Checkpoint("tensor too large".into()))?,
                "tensor data",
            )?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push(NamedTensor { name, shape, data });
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes after the last tensor",
                bytes.len() - r.pos
            )));
        }
        Ok(Checkpoint { spec, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::decode(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated while reading {what}")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn len_u64(&mut self, what: &str) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8, what)?.try_into().unwrap());
        usize::try_from(v).map_err(|_| Error::Checkpoint(format!("{what} {v} does not fit in memory")))
    }
}

/// Writes to a sibling temporary file, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Layer, LossKind};
    use crate::tensor::Tensor;
    use proptest::prelude::*;

    fn trained_like(seed: u64) -> Network {
        let spec = NetworkSpec::mlp(3, &[5, 4], 2, "bn_carelu_l1".parse().unwrap(), LossKind::CrossEntropy, seed);
        let mut net = Network::from_spec(spec).unwrap();
        for layer in net.layers_mut() {
            match layer {
                Layer::Cas(p) => {
                    p.alpha = -0.123_456_789;
                    p.beta = 0.1 + 0.2;
                }
                Layer::BatchNorm(bn) => {
                    bn.running_mean[0] = std::f64::consts::PI;
                    bn.running_var[1] = 1e-300;
                }
                _ => {}
            }
        }
        net
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let net = trained_like(3);
        let extra = NamedTensor { name: "input.mean".into(), shape: vec![3], data: vec![0.1, -2.5, 1e-17] };
        let ckpt = Checkpoint::capture(&net, vec![extra.clone()]);
        let bytes = ckpt.encode().unwrap();
        let back = Checkpoint::decode(&bytes).unwrap();
        assert_eq!(back, ckpt);
        assert_eq!(back.encode().unwrap(), bytes);
        let restored = back.to_network().unwrap();
        assert_eq!(restored, net);
        assert_eq!(back.get("input.mean"), Some(&extra));
        let x = Tensor::new(vec![2, 3], vec![0.3, -1.0, 2.0, 0.5, 0.5, -0.5]).unwrap();
        assert_eq!(restored.forward_eval(&x).unwrap(), net.forward_eval(&x).unwrap());
    }

    #[test]
    fn names_follow_the_expanded_layers() {
        let ckpt = Checkpoint::capture(&trained_like(0), vec![]);
        let names: Vec<&str> = ckpt.tensors.iter().map(|t| t.name.as_str()).collect();
        assert!(names.contains(&"layer1.cas.alpha"));
        assert!(names.contains(&"layer2.bn.running_var"));
        assert!(names.contains(&"layer8.dense.bias"));
    }

    #[test]
    fn corrupted_inputs_are_rejected() {
        let bytes = Checkpoint::capture(&trained_like(0), vec![]).encode().unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::decode(&bad), Err(Error::Checkpoint(m)) if m.contains("magic")));
        let mut bad = bytes.clone();
        bad[8] = 9;
        assert!(matches!(Checkpoint::decode(&bad), Err(Error::Checkpoint(m)) if m.contains("version")));
        assert!(Checkpoint::decode(&bytes[..bytes.len() - 3]).is_err());
        let mut long = bytes.clone();
        long.push(0);
        assert!(Checkpoint::decode(&long).is_err());
    }

    #[test]
    fn missing_tensor_is_reported() {
        let mut ckpt = Checkpoint::capture(&trained_like(0), vec![]);
        ckpt.tensors.retain(|t| t.name != "layer1.cas.beta");
        assert!(matches!(ckpt.to_network(), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn atomic_save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let ckpt = Checkpoint::capture(&trained_like(1), vec![]);
        ckpt.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), ckpt);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    proptest! {
        #[test]
        fn arbitrary_values_round_trip(bits in prop::collection::vec(any::<u64>(), 1..40)) {
            let data: Vec<f64> = bits.iter().map(|&b| f64::from_bits(b)).collect();
            let t = NamedTensor { name: "x".into(), shape: vec![data.len()], data };
            let ckpt = Checkpoint::capture(&trained_like(0), vec![t]);
            let back = Checkpoint::decode(&ckpt.encode().unwrap()).unwrap();
            let a: Vec<u64> = back.get("x").unwrap().data.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, bits);
        }
    }
}

//! Binary policy container.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! "GBXP" | version u16 | layer count u8 | (in u16, out u16) per layer
//!        | per layer: weights (out x in, row-major) then biases, as f32
//!        | crc32 of everything above
//! metadata: policy version u32 | source check-in u64 | crc32 of metadata
//! ```

use crate::error::{Error, Result};
use crate::policy::{BehaviorPolicy, Dense, PolicyNet};

pub const POLICY_MAGIC: &[u8; 4] = b"GBXP";
pub const POLICY_FORMAT_VERSION: u16 = 1;

pub fn encode_policy(policy: &BehaviorPolicy) -> Vec<u8> {
    let layers = policy.net().layers();
    let mut out = Vec::with_capacity(16 + policy.net().weight_bytes());
    out.extend_from_slice(POLICY_MAGIC);
    out.extend_from_slice(&POLICY_FORMAT_VERSION.to_le_bytes());
    out.push(u8::try_from(layers.len()).expect("layer count fits in u8"));
    for l in layers {
        out.extend_from_slice(&u16::try_from(l.inputs).expect("width fits in u16").to_le_bytes());
        out.extend_from_slice(&u16::try_from(l.outputs).expect("width fits in u16").to_le_bytes());
    }
    for l in layers {
        for v in l.weights.iter().chain(l.bias.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());

    let mut meta = Vec::with_capacity(16);
    meta.extend_from_slice(&policy.version.to_le_bytes());
    meta.extend_from_slice(&policy.source_checkin.to_le_bytes());
    let meta_crc = crc32fast::hash(&meta);
    out.extend_from_slice(&meta);
    out.extend_from_slice(&meta_crc.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Corrupt("policy file is truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

/// Decode a policy file. The network's shape is not checked against the
/// state schema here; see [`PolicyNet::check_schema`].
pub fn decode_policy(bytes: &[u8]) -> Result<BehaviorPolicy> {
    if bytes.len() < POLICY_MAGIC.len() || &bytes[..4] != POLICY_MAGIC {
        return Err(Error::Format("not a GBXP policy file".into()));
    }
    let mut r = Reader { buf: bytes, pos: 4 };
    let version = r.u16()?;
    if version != POLICY_FORMAT_VERSION {
        return Err(Error::Incompatible(format!("unsupported policy format version {version}")));
    }
    let count = usize::from(r.u8()?);
    let mut dims = Vec::with_capacity(count);
    for _ in 0..count {
        dims.push((usize::from(r.u16()?), usize::from(r.u16()?)));
    }
    let mut layers = Vec::with_capacity(count);
    for &(inputs, outputs) in &dims {
        let mut d = Dense::<f32>::zeros(inputs, outputs);
        for w in d.weights.iter_mut().chain(d.bias.iter_mut()) {
            *w = r.f32()?;
        }
        layers.push(d);
    }
    let body_end = r.pos;
    let crc = r.u32()?;
    if crc32fast::hash(&bytes[..body_end]) != crc {
        return Err(Error::Corrupt("policy checksum mismatch".into()));
    }
    let meta_start = r.pos;
    let policy_version = r.u32()?;
    let source_checkin = r.u64()?;
    let meta_end = r.pos;
    if crc32fast::hash(&bytes[meta_start..meta_end]) != r.u32()? {
        return Err(Error::Corrupt("policy metadata checksum mismatch".into()));
    }
    if r.pos != bytes.len() {
        return Err(Error::Corrupt("trailing bytes after policy metadata".into()));
    }
    let net = PolicyNet::from_layers(layers).map_err(|e| Error::Corrupt(e.to_string()))?;
    Ok(BehaviorPolicy::freeze(&net, policy_version, source_checkin))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{encode_state, RawCounters};
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let p = BehaviorPolicy::freeze(&PolicyNet::init(5), 3, 1234);
        let bytes = encode_policy(&p);
        assert_eq!(&bytes[..4], b"GBXP");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
        assert_eq!(bytes[6], 3);
        assert_eq!(u16::from_le_bytes([bytes[7], bytes[8]]), 44);
        assert_eq!(u16::from_le_bytes([bytes[9], bytes[10]]), 64);
        let header = 4 + 2 + 1 + 3 * 4;
        assert_eq!(bytes.len(), header + 20104 + 4 + 12 + 4);
    }

    #[test]
    fn corruption_is_detected() {
        let p = BehaviorPolicy::freeze(&PolicyNet::init(5), 3, 1234);
        let bytes = encode_policy(&p);
        assert!(matches!(decode_policy(&bytes[..bytes.len() - 30]), Err(Error::Corrupt(_))));
        let mut flipped = bytes.clone();
        flipped[100] ^= 0x40;
        assert!(matches!(decode_policy(&flipped), Err(Error::Corrupt(_))));
        let mut meta = bytes.clone();
        let n = meta.len();
        meta[n - 6] ^= 1;
        assert!(matches!(decode_policy(&meta), Err(Error::Corrupt(_))));
        assert!(matches!(decode_policy(b"NOPE...."), Err(Error::Format(_))));
        let mut ver = bytes;
        ver[4] = 9;
        assert!(matches!(decode_policy(&ver), Err(Error::Incompatible(_))));
    }

    proptest! {
        #[test]
        fn round_trip_preserves_outputs(seed in 0u64..1000, version in 0u32..100, t in 0u64..1_000_000, counts in prop::array::uniform29(0u32..5000)) {
            let p = BehaviorPolicy::freeze(&PolicyNet::init(seed), version, t);
            let back = decode_policy(&encode_policy(&p)).unwrap();
            prop_assert_eq!(&back, &p);
            let mut raw = RawCounters::zeroed((seed % 8) as u8);
            raw.set_counts(&counts);
            let s = encode_state(&raw).unwrap();
            let (a, b) = (p.distribution(&s).unwrap(), back.distribution(&s).unwrap());
            prop_assert_eq!(a[0].to_bits(), b[0].to_bits());
            prop_assert_eq!(a[1].to_bits(), b[1].to_bits());
        }
    }
}

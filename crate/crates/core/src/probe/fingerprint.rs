use std::fmt;

use md5::{Digest, Md5};
use serde::{Deserialize, Serialize};

/// md5 of the information elements followed by the vendor-specific elements.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IeFingerprint(String);

impl IeFingerprint {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Accepts an already computed digest in 32-character lowercase hex.
    pub fn from_hex(hex: &str) -> Option<Self> {
        let ok = hex.len() == 32 && hex.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'));
        ok.then(|| Self(hex.to_string()))
    }
}

impl fmt::Display for IeFingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for IeFingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "IeFingerprint({})", self.0)
    }
}

pub fn fingerprint(ie_bytes: &[u8], vendor_ie_bytes: &[u8]) -> IeFingerprint {
    let mut hasher = Md5::new();
    hasher.update(ie_bytes);
    hasher.update(vendor_ie_bytes);
    IeFingerprint(hex::encode(hasher.finalize()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Digests frozen from Python's hashlib.md5.
    #[test]
    fn known_digests() {
        assert_eq!(
            fingerprint(b"", b"").as_str(),
            "d41d8cd98f00b204e9800998ecf8427e"
        );
        assert_eq!(
            fingerprint(b"abc", b"").as_str(),
            "900150983cd24fb0d6963f7d28e17f72"
        );
        assert_eq!(
            fingerprint(
                &[0xdd, 0x09, 0x00, 0x50, 0xf2, 0x08],
                &[0xdd, 0x05, 0x00, 0x17, 0xf2, 0x0a, 0x00]
            )
            .as_str(),
            "bf4b7ce640d572fdd2aa1a89d225bca9"
        );
    }

    #[test]
    fn concatenation_order() {
        assert_eq!(fingerprint(b"abc", b""), fingerprint(b"", b"abc"));
        assert_eq!(fingerprint(b"ab", b"c"), fingerprint(b"abc", b""));
        assert_ne!(fingerprint(b"ab", b"c"), fingerprint(b"c", b"ab"));
    }

    #[test]
    fn from_hex_validation() {
        assert!(IeFingerprint::from_hex("d41d8cd98f00b204e9800998ecf8427e").is_some());
        assert!(IeFingerprint::from_hex("D41D8CD98F00B204E9800998ECF8427E").is_none());
        assert!(IeFingerprint::from_hex("d41d8cd9").is_none());
    }

    #[test]
    fn deterministic_over_random_inputs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let len_a = rng.random_range(0..64);
            let len_b = rng.random_range(0..32);
            let a: Vec<u8> = (0..len_a).map(|_| rng.random()).collect();
            let b: Vec<u8> = (0..len_b).map(|_| rng.random()).collect();
            assert_eq!(fingerprint(&a, &b), fingerprint(&a, &b));
        }
    }

    proptest! {
        #[test]
        fn shape_is_32_lower_hex(a in proptest::collection::vec(any::<u8>(), 0..128),
                                 b in proptest::collection::vec(any::<u8>(), 0..128)) {
            let fp = fingerprint(&a, &b);
            prop_assert!(IeFingerprint::from_hex(fp.as_str()).is_some());
        }
    }
}

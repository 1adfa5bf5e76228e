use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use thiserror::Error;

use super::mac::{parse_octets, MacAddress};

/// Vendor string reported when a prefix is not in the registry.
pub const UNKNOWN_VENDOR: &str = "unknown";

const BUNDLED_OUI: &str = include_str!("../../data/oui.csv");
const BUNDLED_MOBILE: &str = include_str!("../../data/mobile_vendors.txt");

#[derive(Debug, Error)]
pub enum OuiError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Prefix-to-vendor registry plus the allowlist of phone manufacturers.
///
/// Read-only after load; share it behind an `Arc`.
#[derive(Debug, Clone, Default)]
pub struct OuiDatabase {
    entries: HashMap<[u8; 3], String>,
    mobile_vendors: HashSet<String>,
}

impl OuiDatabase {
    pub fn new() -> Self {
        Self::default()
    }

    /// Small registry extract shipped with the crate.
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_OUI, BUNDLED_MOBILE).expect("bundled OUI data is valid")
    }

    pub fn parse(oui_csv: &str, mobile_list: &str) -> Result<Self, OuiError> {
        let mut db = Self::new();
        for (idx, raw) in oui_csv.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (prefix, vendor) = line.split_once(',').ok_or_else(|| OuiError::Parse {
                line: idx + 1,
                reason: "expected `XX:YY:ZZ,VendorName`".into(),
            })?;
            let prefix = parse_octets::<3>(prefix).map_err(|reason| OuiError::Parse {
                line: idx + 1,
                reason: reason.into(),
            })?;
            let vendor = vendor.trim().trim_matches('"').trim();
            if vendor.is_empty() {
                return Err(OuiError::Parse {
                    line: idx + 1,
                    reason: "empty vendor name".into(),
                });
            }
            db.entries.insert(prefix, vendor.to_string());
        }
        for raw in mobile_list.lines() {
            let name = raw.trim();
            if !name.is_empty() && !name.starts_with('#') {
                db.mobile_vendors.insert(name.to_string());
            }
        }
        Ok(db)
    }

    pub fn load(oui_csv: &Path, mobile_list: &Path) -> Result<Self, OuiError> {
        let read = |p: &Path| {
            fs::read_to_string(p).map_err(|source| OuiError::Io {
                path: p.display().to_string(),
                source,
            })
        };
        Self::parse(&read(oui_csv)?, &read(mobile_list)?)
    }

    pub fn insert(&mut self, prefix: [u8; 3], vendor: impl Into<String>) {
        self.entries.insert(prefix, vendor.into());
    }

    pub fn add_mobile_vendor(&mut self, vendor: impl Into<String>) {
        self.mobile_vendors.insert(vendor.into());
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Exact prefix match. Randomized addresses never resolve: their prefix is not an OUI.
    pub fn lookup(&self, mac: &MacAddress) -> Option<&str> {
        if mac.is_randomized() {
            return None;
        }
        self.entries.get(&mac.oui()).map(String::as_str)
    }

    pub fn vendor(&self, mac: &MacAddress) -> &str {
        self.lookup(mac).unwrap_or(UNKNOWN_VENDOR)
    }

    pub fn is_mobile_vendor(&self, mac: &MacAddress) -> bool {
        if mac.is_randomized() {
            return true;
        }
        self.lookup(mac)
            .is_some_and(|v| self.mobile_vendors.contains(v))
    }
}

pub fn vendor_lookup<'a>(db: &'a OuiDatabase, mac: &MacAddress) -> &'a str {
    db.vendor(mac)
}

pub fn is_mobile_vendor(db: &OuiDatabase, mac: &MacAddress) -> bool {
    db.is_mobile_vendor(mac)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // 0xA8 keeps the locally-administered bit clear; an AA:.. prefix would
    // itself classify as randomized and never resolve.
    fn acme() -> OuiDatabase {
        OuiDatabase::parse(
            "# fixture\nA8:BB:CC,AcmePhones\nAA:BB:CC,AcmePhones\n",
            "AcmePhones\n",
        )
        .unwrap()
    }

    fn mac(s: &str) -> MacAddress {
        s.parse().unwrap()
    }

    #[test]
    fn lookup_examples() {
        let db = acme();
        assert_eq!(vendor_lookup(&db, &mac("A8:BB:CC:11:22:33")), "AcmePhones");
        assert_eq!(
            vendor_lookup(&OuiDatabase::new(), &mac("A8:BB:CC:11:22:33")),
            UNKNOWN_VENDOR
        );
        // locally administered even though the registry lists the prefix
        assert_eq!(
            vendor_lookup(&db, &mac("AA:BB:CC:11:22:33")),
            UNKNOWN_VENDOR
        );
        // randomized bypass even though the bytes after the first octet match
        assert_eq!(
            vendor_lookup(&db, &mac("DA:BB:CC:11:22:33")),
            UNKNOWN_VENDOR
        );
    }

    #[test]
    fn mobile_examples() {
        let db = acme();
        assert!(is_mobile_vendor(&db, &mac("A8:BB:CC:11:22:33")));
        let empty_allowlist = OuiDatabase::parse("A8:BB:CC,AcmePhones\n", "").unwrap();
        assert!(!is_mobile_vendor(
            &empty_allowlist,
            &mac("A8:BB:CC:11:22:33")
        ));
        assert!(is_mobile_vendor(
            &OuiDatabase::new(),
            &mac("02:00:00:00:00:01")
        ));
    }

    #[test]
    fn vendor_with_commas_and_quotes() {
        let db = OuiDatabase::parse("00:12:FB,\"Samsung Electronics Co.,Ltd\"\n", "").unwrap();
        assert_eq!(
            db.vendor(&mac("00:12:FB:00:00:01")),
            "Samsung Electronics Co.,Ltd"
        );
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = OuiDatabase::parse("# c\nAA:BB:CC,Ok\nnot a line\n", "").unwrap_err();
        assert!(matches!(err, OuiError::Parse { line: 3, .. }), "{err}");
        let err = OuiDatabase::parse("AA:BB,Short\n", "").unwrap_err();
        assert!(matches!(err, OuiError::Parse { line: 1, .. }));
    }

    #[test]
    fn bundled_registry_loads() {
        let db = OuiDatabase::bundled();
        assert!(!db.is_empty());
        assert_eq!(
            db.vendor(&mac("64:09:80:00:00:01")),
            "Xiaomi Communications"
        );
        assert!(!db.is_mobile_vendor(&mac("24:0A:C4:00:00:01")));
    }

    proptest! {
        #[test]
        fn lookup_is_total(octets in any::<[u8; 6]>()) {
            let db = OuiDatabase::bundled();
            let m = MacAddress::new(octets);
            let v = db.vendor(&m);
            prop_assert!(!v.is_empty());
            if m.is_randomized() {
                prop_assert_eq!(v, UNKNOWN_VENDOR);
                prop_assert!(db.is_mobile_vendor(&m));
            }
        }
    }
}

//! Option registries and consideration sets.
//!
//! A [`PartySet`] is a bitmask over the indices of a [`PartyRegistry`]. The
//! registry is capped at 32 options so every set fits in one `u32`.

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};

pub const MAX_OPTIONS: usize = 32;
pub const MIN_OPTIONS: usize = 2;

/// Ordered list of option codes. All set indices refer to this order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct PartyRegistry {
    codes: Vec<String>,
}

impl PartyRegistry {
    pub fn new<I, S>(codes: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let codes: Vec<String> = codes.into_iter().map(Into::into).collect();
        if codes.len() < MIN_OPTIONS || codes.len() > MAX_OPTIONS {
            return Err(Error::Registry(format!(
                "expected {MIN_OPTIONS}..={MAX_OPTIONS} options, got {}",
                codes.len()
            )));
        }
        let mut seen = HashSet::new();
        for code in &codes {
            if code.is_empty() {
                return Err(Error::Registry("empty option code".into()));
            }
            if code.contains([';', ',']) || code.trim() != code {
                return Err(Error::Registry(format!("option code `{code}` contains a separator or whitespace")));
            }
            if !seen.insert(code.as_str()) {
                return Err(Error::Registry(format!("duplicate option code `{code}`")));
            }
        }
        Ok(Self { codes })
    }

    /// Parses a comma-separated list such as `SPD,CDU_CSU,GRUENE`.
    pub fn parse_list(list: &str) -> Result<Self> {
        Self::new(list.split([',', '\n']).map(str::trim).filter(|s| !s.is_empty()))
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn codes(&self) -> &[String] {
        &self.codes
    }

    pub fn code(&self, index: usize) -> &str {
        &self.codes[index]
    }

    pub fn index_of(&self, code: &str) -> Option<usize> {
        self.codes.iter().position(|c| c == code)
    }

    /// The set of every registered option.
    pub fn full_set(&self) -> PartySet {
        PartySet::full(self.len())
    }

    pub fn singleton(&self, index: usize) -> PartySet {
        assert!(index < self.len());
        PartySet::singleton(index)
    }

    /// Parses `;`-separated codes into a set.
    pub fn parse_set(&self, text: &str) -> Result<PartySet> {
        let mut bits = 0u32;
        for code in text.split(';').map(str::trim).filter(|s| !s.is_empty()) {
            let idx = self
                .index_of(code)
                .ok_or_else(|| Error::UnknownOption(code.to_string()))?;
            bits |= 1 << idx;
        }
        PartySet::from_bits(bits)
    }

    pub fn set_from_codes<S: AsRef<str>>(&self, codes: &[S]) -> Result<PartySet> {
        let mut bits = 0u32;
        for code in codes {
            let code = code.as_ref();
            let idx = self
                .index_of(code)
                .ok_or_else(|| Error::UnknownOption(code.to_string()))?;
            bits |= 1 << idx;
        }
        PartySet::from_bits(bits)
    }

    /// Formats a set as `;`-separated codes in registry order.
    pub fn format_set(&self, set: PartySet) -> String {
        self.set_codes(set).join(";")
    }

    pub fn set_codes(&self, set: PartySet) -> Vec<&str> {
        set.iter().map(|i| self.code(i)).collect()
    }

    /// Checks that every member of `set` is a registered index.
    pub fn contains_set(&self, set: PartySet) -> bool {
        set.bits() & !self.full_set().bits() == 0
    }
}

impl TryFrom<Vec<String>> for PartyRegistry {
    type Error = Error;

    fn try_from(codes: Vec<String>) -> Result<Self> {
        Self::new(codes)
    }
}

impl From<PartyRegistry> for Vec<String> {
    fn from(r: PartyRegistry) -> Self {
        r.codes
    }
}

/// Nonempty subset of registry indices.
///
/// Ordering is lexicographic on the ascending member-index lists, so
/// `{0} < {0,1} < {0,1,2} < {0,2} < {1}`.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct PartySet(u32);

impl PartySet {
    pub fn from_bits(bits: u32) -> Result<Self> {
        if bits == 0 {
            Err(Error::EmptySet)
        } else {
            Ok(Self(bits))
        }
    }

    pub fn singleton(index: usize) -> Self {
        assert!(index < MAX_OPTIONS);
        Self(1 << index)
    }

    /// Set containing indices `0..n`.
    pub fn full(n: usize) -> Self {
        assert!((1..=MAX_OPTIONS).contains(&n));
        Self(if n == 32 { u32::MAX } else { (1u32 << n) - 1 })
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(indices: I) -> Result<Self> {
        let mut bits = 0u32;
        for i in indices {
            if i >= MAX_OPTIONS {
                return Err(Error::Invalid(format!("index {i} out of range")));
            }
            bits |= 1 << i;
        }
        Self::from_bits(bits)
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    /// Always false: sets are nonempty by construction.
    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_singleton(self) -> bool {
        self.0.is_power_of_two()
    }

    /// The single member of a singleton set.
    pub fn only(self) -> Option<usize> {
        self.is_singleton().then(|| self.0.trailing_zeros() as usize)
    }

    pub fn contains(self, index: usize) -> bool {
        index < MAX_OPTIONS && self.0 & (1 << index) != 0
    }

    pub fn is_subset_of(self, other: PartySet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn intersects(self, other: PartySet) -> bool {
        self.0 & other.0 != 0
    }

    pub fn intersection_len(self, other: PartySet) -> usize {
        (self.0 & other.0).count_ones() as usize
    }

    /// Complement relative to a registry of `n` options; `None` when empty.
    pub fn complement(self, n: usize) -> Option<PartySet> {
        let rest = PartySet::full(n).0 & !self.0;
        (rest != 0).then_some(PartySet(rest))
    }

    pub fn union(self, other: PartySet) -> PartySet {
        PartySet(self.0 | other.0)
    }

    /// Member indices in ascending order.
    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let i = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(i)
            }
        })
    }
}

impl Ord for PartySet {
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b) = (self.0, other.0);
        if a == b {
            return Ordering::Equal;
        }
        // Member lists agree below the lowest differing index `d`; the set
        // holding `d` is smaller unless the other list ends before `d`.
        let d = (a ^ b).trailing_zeros();
        let a_has = a & (1 << d) != 0;
        let other = if a_has { b } else { a };
        let holder_is_less = (other >> d) != 0;
        if a_has == holder_is_less {
            Ordering::Less
        } else {
            Ordering::Greater
        }
    }
}

impl PartialOrd for PartySet {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Serialize for PartySet {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for PartySet {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let indices = Vec::<usize>::deserialize(deserializer)?;
        PartySet::from_indices(indices).map_err(serde::de::Error::custom)
    }
}

impl fmt::Debug for PartySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(ix: &[usize]) -> PartySet {
        PartySet::from_indices(ix.iter().copied()).unwrap()
    }

    #[test]
    fn registry_rejects_duplicates_and_bad_sizes() {
        assert!(PartyRegistry::new(["A"]).is_err());
        assert!(PartyRegistry::new(["A", "A"]).is_err());
        assert!(PartyRegistry::new(["A", ""]).is_err());
        assert!(PartyRegistry::new(["A", "B;C"]).is_err());
        let many: Vec<String> = (0..33).map(|i| format!("P{i}")).collect();
        assert!(PartyRegistry::new(many).is_err());
        let max: Vec<String> = (0..32).map(|i| format!("P{i}")).collect();
        let r = PartyRegistry::new(max).unwrap();
        assert_eq!(r.full_set().len(), 32);
    }

    #[test]
    fn parse_and_format_sets() {
        let r = PartyRegistry::parse_list("SPD, CDU_CSU,GRUENE").unwrap();
        let s = r.parse_set("GRUENE;SPD").unwrap();
        assert_eq!(s.iter().collect::<Vec<_>>(), vec![0, 2]);
        assert_eq!(r.format_set(s), "SPD;GRUENE");
        assert!(matches!(r.parse_set("SPD;AFD"), Err(Error::UnknownOption(c)) if c == "AFD"));
        assert!(matches!(r.parse_set(""), Err(Error::EmptySet)));
    }

    #[test]
    fn lexicographic_order() {
        let mut v = vec![set(&[1]), set(&[0, 2]), set(&[0, 1, 2]), set(&[0]), set(&[0, 1]), set(&[2])];
        v.sort();
        assert_eq!(
            v,
            vec![set(&[0]), set(&[0, 1]), set(&[0, 1, 2]), set(&[0, 2]), set(&[1]), set(&[2])]
        );
    }

    #[test]
    fn set_algebra() {
        let a = set(&[0, 1]);
        let b = set(&[1, 2]);
        assert!(a.intersects(b));
        assert_eq!(a.intersection_len(b), 1);
        assert!(set(&[1]).is_subset_of(a));
        assert_eq!(a.complement(3), Some(set(&[2])));
        assert_eq!(PartySet::full(3).complement(3), None);
        assert_eq!(set(&[4]).only(), Some(4));
        assert_eq!(a.only(), None);
    }

    proptest::proptest! {
        #[test]
        fn order_matches_member_lists(a in 1u32..1024, b in 1u32..1024) {
            let (sa, sb) = (PartySet(a), PartySet(b));
            let la: Vec<usize> = sa.iter().collect();
            let lb: Vec<usize> = sb.iter().collect();
            proptest::prop_assert_eq!(sa.cmp(&sb), la.cmp(&lb));
        }
    }
}

//! Binary encoding of categorical design spaces.
//!
//! Every site holds one of `k` categories and is stored as the 0-indexed
//! category number written in `b = ceil(log2 k)` bits, most significant bit
//! first. Sites are laid out contiguously in declaration order, so the full
//! assignment is a bit vector of length `N = Σ b_i`.
//!
//! Codes `k..2^b` are infeasible. Some of them can be excluded from the
//! argmin of a QUBO with a single pairwise term (two bits that are both 1 only
//! inside the infeasible region); the rest are left to post-solve screening.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A fixed-length assignment of binary variables.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitVector(Box<[u8]>);

impl BitVector {
    pub fn zeros(len: usize) -> Self {
        BitVector(vec![0; len].into_boxed_slice())
    }

    /// Builds a vector from 0/1 values. Any nonzero entry counts as 1.
    pub fn from_bits(bits: &[u8]) -> Self {
        BitVector(bits.iter().map(|&b| u8::from(b != 0)).collect())
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        BitVector(bits.iter().map(|&b| u8::from(b)).collect())
    }

    /// Bit `i` of the vector is bit `i` of `mask` (least significant first).
    pub fn from_mask(mask: u64, len: usize) -> Self {
        debug_assert!(len <= 64);
        BitVector((0..len).map(|i| ((mask >> i) & 1) as u8).collect())
    }

    /// Inverse of [`BitVector::from_mask`]. Only meaningful for `len() <= 64`.
    pub fn to_mask(&self) -> u64 {
        self.0
            .iter()
            .enumerate()
            .fold(0u64, |m, (i, &b)| m | (u64::from(b) << i))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn get(&self, i: usize) -> bool {
        self.0[i] != 0
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|&&b| b != 0).count()
    }

    /// Indices of the bits set to 1, ascending.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &b)| b != 0)
            .map(|(i, _)| i)
    }
}

impl fmt::Display for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in self.0.iter() {
            f.write_str(if b != 0 { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitVector({self})")
    }
}

impl FromStr for BitVector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.trim()
            .chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(Error::Schema(format!(
                    "invalid character {other:?} in bit string {s:?}"
                ))),
            })
            .collect::<Result<Vec<u8>>>()
            .map(|v| BitVector(v.into_boxed_slice()))
    }
}

impl Serialize for BitVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BitVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteSpec {
    pub name: String,
    pub cardinality: usize,
}

impl SiteSpec {
    pub fn new(name: impl Into<String>, cardinality: usize) -> Self {
        SiteSpec {
            name: name.into(),
            cardinality,
        }
    }

    /// Bits needed for codes `0..cardinality`.
    pub fn bits(&self) -> usize {
        bits_for(self.cardinality)
    }

    pub fn has_infeasible_codes(&self) -> bool {
        self.cardinality < (1usize << self.bits())
    }
}

fn bits_for(k: usize) -> usize {
    (usize::BITS - (k - 1).leading_zeros()) as usize
}

/// Ordered categorical sites and their bit layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DesignSpace {
    sites: Vec<SiteSpec>,
    offsets: Vec<usize>,
    total_bits: usize,
    size: u64,
}

impl DesignSpace {
    pub fn new(sites: Vec<SiteSpec>) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::InvalidSpace("no sites declared".into()));
        }
        let mut offsets = Vec::with_capacity(sites.len());
        let mut total_bits = 0usize;
        let mut size = 1u64;
        for site in &sites {
            if site.cardinality < 2 {
                return Err(Error::InvalidSpace(format!(
                    "site `{}` has cardinality {}; at least 2 categories are required",
                    site.name, site.cardinality
                )));
            }
            offsets.push(total_bits);
            total_bits += site.bits();
            size = size.checked_mul(site.cardinality as u64).ok_or_else(|| {
                Error::InvalidSpace("number of feasible points overflows u64".into())
            })?;
        }
        Ok(DesignSpace {
            sites,
            offsets,
            total_bits,
            size,
        })
    }

    /// Sites named `R1, R2, ...` with the given cardinalities.
    pub fn from_cardinalities(cardinalities: &[usize]) -> Result<Self> {
        Self::new(
            cardinalities
                .iter()
                .enumerate()
                .map(|(i, &k)| SiteSpec::new(format!("R{}", i + 1), k))
                .collect(),
        )
    }

    pub fn sites(&self) -> &[SiteSpec] {
        &self.sites
    }

    pub fn num_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn total_bits(&self) -> usize {
        self.total_bits
    }

    /// First bit index of each site.
    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn site_bits(&self, site: usize) -> std::ops::Range<usize> {
        let start = self.offsets[site];
        start..start + self.sites[site].bits()
    }

    /// Number of feasible assignments, `Π k_i`.
    pub fn size(&self) -> u64 {
        self.size
    }

    fn check_len(&self, x: &BitVector) -> Result<()> {
        if x.len() != self.total_bits {
            return Err(Error::LengthMismatch {
                expected: self.total_bits,
                actual: x.len(),
            });
        }
        Ok(())
    }

    fn site_code(&self, x: &BitVector, site: usize) -> usize {
        self.site_bits(site)
            .fold(0usize, |code, i| (code << 1) | usize::from(x.get(i)))
    }
}

/// Result of [`decode`]: raw per-site codes plus whether all of them are valid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decoded {
    pub indices: Vec<usize>,
    pub feasible: bool,
}

pub fn encode(space: &DesignSpace, assignment: &[usize]) -> Result<BitVector> {
    if assignment.len() != space.num_sites() {
        return Err(Error::LengthMismatch {
            expected: space.num_sites(),
            actual: assignment.len(),
        });
    }
    let mut bits = vec![0u8; space.total_bits()];
    for (s, (site, &index)) in space.sites().iter().zip(assignment).enumerate() {
        if index >= site.cardinality {
            return Err(Error::IndexOutOfRange {
                site: site.name.clone(),
                index,
                cardinality: site.cardinality,
            });
        }
        let b = site.bits();
        let start = space.offsets()[s];
        for k in 0..b {
            bits[start + k] = ((index >> (b - 1 - k)) & 1) as u8;
        }
    }
    Ok(BitVector(bits.into_boxed_slice()))
}

pub fn decode(space: &DesignSpace, x: &BitVector) -> Result<Decoded> {
    space.check_len(x)?;
    let indices: Vec<usize> = (0..space.num_sites())
        .map(|s| space.site_code(x, s))
        .collect();
    let feasible = indices
        .iter()
        .zip(space.sites())
        .all(|(&code, site)| code < site.cardinality);
    Ok(Decoded { indices, feasible })
}

pub fn is_feasible(space: &DesignSpace, x: &BitVector) -> Result<bool> {
    space.check_len(x)?;
    Ok((0..space.num_sites()).all(|s| space.site_code(x, s) < space.sites[s].cardinality))
}

/// A pairwise term whose coefficient is replaced by a penalty constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PenaltyPair {
    /// Global bit indices, `i < j`.
    pub i: usize,
    pub j: usize,
    /// Site the pair belongs to.
    pub site: usize,
}

/// Infeasible codes of one site that no pair term excludes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResidualCodes {
    pub site: usize,
    pub codes: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub pair_terms: Vec<PenaltyPair>,
    pub residual_infeasible: Vec<ResidualCodes>,
}

impl PenaltySpec {
    pub fn residual_for(&self, site: usize) -> &[usize] {
        self.residual_infeasible
            .iter()
            .find(|r| r.site == site)
            .map(|r| r.codes.as_slice())
            .unwrap_or(&[])
    }
}

/// Emits a pair term for every two bit positions of a site whose joint 1-state
/// only occurs in infeasible codes. Infeasible codes not blocked by any such
/// pair are recorded as residual.
pub fn build_penalty_spec(space: &DesignSpace) -> PenaltySpec {
    let mut spec = PenaltySpec::default();
    for (s, site) in space.sites().iter().enumerate() {
        if !site.has_infeasible_codes() {
            continue;
        }
        let b = site.bits();
        let k = site.cardinality;
        let n_codes = 1usize << b;
        // position p (0 = most significant) corresponds to mask bit b-1-p
        let mask_of = |p: usize| 1usize << (b - 1 - p);
        let mut blocked = vec![false; n_codes];
        for p in 0..b {
            for q in p + 1..b {
                let both = mask_of(p) | mask_of(q);
                let only_infeasible = (0..n_codes)
                    .filter(|c| c & both == both)
                    .all(|c| c >= k);
                if only_infeasible {
                    let start = space.offsets()[s];
                    spec.pair_terms.push(PenaltyPair {
                        i: start + p,
                        j: start + q,
                        site: s,
                    });
                    for c in (0..n_codes).filter(|c| c & both == both) {
                        blocked[c] = true;
                    }
                }
            }
        }
        let residual: Vec<usize> = (k..n_codes).filter(|&c| !blocked[c]).collect();
        if !residual.is_empty() {
            spec.residual_infeasible.push(ResidualCodes {
                site: s,
                codes: residual,
            });
        }
    }
    spec
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bv(bits: &[u8]) -> BitVector {
        BitVector::from_bits(bits)
    }

    fn four_sites() -> DesignSpace {
        DesignSpace::from_cardinalities(&[6, 29, 64, 64]).unwrap()
    }

    #[test]
    fn layout_of_four_site_space() {
        let space = four_sites();
        let bits: Vec<usize> = space.sites().iter().map(SiteSpec::bits).collect();
        assert_eq!(bits, vec![3, 5, 6, 6]);
        assert_eq!(space.total_bits(), 20);
        assert_eq!(space.offsets(), &[0, 3, 8, 14]);
        assert_eq!(space.size(), 712_704);
    }

    #[test]
    fn encode_worked_example() {
        let x = encode(&four_sites(), &[0, 2, 10, 63]).unwrap();
        assert_eq!(
            x,
            bv(&[0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 1, 0, 1, 0, 1, 1, 1, 1, 1, 1])
        );
    }

    #[test]
    fn encode_zero_and_full_code() {
        assert_eq!(
            encode(&four_sites(), &[0, 0, 0, 0]).unwrap(),
            BitVector::zeros(20)
        );
        let space = DesignSpace::from_cardinalities(&[4]).unwrap();
        assert_eq!(encode(&space, &[3]).unwrap(), bv(&[1, 1]));
    }

    #[test]
    fn encode_rejects_bad_input() {
        let space = four_sites();
        assert!(matches!(
            encode(&space, &[6, 0, 0, 0]),
            Err(Error::IndexOutOfRange { index: 6, cardinality: 6, .. })
        ));
        assert!(matches!(
            encode(&space, &[0, 0, 0]),
            Err(Error::LengthMismatch { expected: 4, actual: 3 })
        ));
    }

    #[test]
    fn decode_examples() {
        let space = four_sites();
        let x = bv(&[0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 1, 0, 1, 0, 1, 1, 1, 1, 1, 1]);
        let d = decode(&space, &x).unwrap();
        assert_eq!(d.indices, vec![0, 2, 10, 63]);
        assert!(d.feasible);

        let six = DesignSpace::from_cardinalities(&[6]).unwrap();
        let d = decode(&six, &bv(&[1, 1, 0])).unwrap();
        assert_eq!(d, Decoded { indices: vec![6], feasible: false });
        let d = decode(&six, &bv(&[1, 0, 1])).unwrap();
        assert_eq!(d, Decoded { indices: vec![5], feasible: true });

        assert!(matches!(
            decode(&six, &bv(&[1, 0])),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn feasibility_examples() {
        let space = four_sites();
        assert!(is_feasible(&space, &encode(&space, &[5, 28, 63, 63]).unwrap()).unwrap());

        let mut bits = encode(&space, &[0, 0, 0, 0]).unwrap().as_slice().to_vec();
        bits[3..8].copy_from_slice(&[1, 1, 1, 0, 1]);
        assert!(!is_feasible(&space, &bv(&bits)).unwrap());

        let pow2 = DesignSpace::from_cardinalities(&[4, 4]).unwrap();
        for m in 0..16u64 {
            assert!(is_feasible(&pow2, &BitVector::from_mask(m, 4)).unwrap());
        }
    }

    #[test]
    fn rejects_degenerate_sites() {
        assert!(DesignSpace::from_cardinalities(&[6, 1]).is_err());
        assert!(DesignSpace::from_cardinalities(&[]).is_err());
    }

    #[test]
    fn penalty_for_six_categories() {
        let space = DesignSpace::from_cardinalities(&[6]).unwrap();
        let spec = build_penalty_spec(&space);
        assert_eq!(spec.pair_terms, vec![PenaltyPair { i: 0, j: 1, site: 0 }]);
        assert!(spec.residual_infeasible.is_empty());
    }

    #[test]
    fn penalty_for_twenty_nine_categories() {
        let space = DesignSpace::from_cardinalities(&[29]).unwrap();
        let spec = build_penalty_spec(&space);
        assert!(spec.pair_terms.is_empty());
        assert_eq!(spec.residual_for(0), &[29, 30, 31]);
    }

    #[test]
    fn penalty_for_power_of_two() {
        let space = DesignSpace::from_cardinalities(&[4, 64]).unwrap();
        assert_eq!(build_penalty_spec(&space), PenaltySpec::default());
    }

    #[test]
    fn penalty_pairs_use_global_indices() {
        let space = DesignSpace::from_cardinalities(&[4, 5]).unwrap();
        let spec = build_penalty_spec(&space);
        // k=5: codes 5,6,7 infeasible; 11x -> {6,7}, 1x1 -> {5,7}
        assert_eq!(
            spec.pair_terms,
            vec![
                PenaltyPair { i: 2, j: 3, site: 1 },
                PenaltyPair { i: 2, j: 4, site: 1 }
            ]
        );
        assert!(spec.residual_infeasible.is_empty());
    }

    #[test]
    fn bit_string_round_trip() {
        let x = bv(&[1, 0, 1, 1]);
        assert_eq!(x.to_string(), "1011");
        assert_eq!("1011".parse::<BitVector>().unwrap(), x);
        assert!("10a1".parse::<BitVector>().is_err());
        assert_eq!(BitVector::from_mask(x.to_mask(), 4), x);
    }
}

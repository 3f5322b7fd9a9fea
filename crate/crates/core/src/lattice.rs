//! Occupancy configurations on a periodic ring and the sitewise order.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest ring supported by the bit-packed representation.
pub const MAX_SITES: usize = 128;

/// Occupancy word on the ring Z/LZ, one bit per site.
///
/// Bit `i` holds the occupancy of site `i`. The text form lists sites left to
/// right starting from site 0, e.g. `"1010"`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Configuration {
    bits: u128,
    len: u8,
}

impl Configuration {
    /// All-empty ring of `len` sites.
    pub fn empty(len: usize) -> Result<Self> {
        if len == 0 || len > MAX_SITES {
            return Err(Error::InvalidArgument(format!(
                "ring size must be in 1..={MAX_SITES}, got {len}"
            )));
        }
        Ok(Self { bits: 0, len: len as u8 })
    }

    /// Build from a bit word; bits at or above `len` must be clear.
    pub fn from_bits(bits: u128, len: usize) -> Result<Self> {
        let c = Self::empty(len)?;
        if bits & !c.mask() != 0 {
            return Err(Error::InvalidArgument(format!(
                "bit word {bits:#x} has bits beyond site {}",
                len - 1
            )));
        }
        Ok(Self { bits, ..c })
    }

    pub fn from_occupancies(occ: &[u8]) -> Result<Self> {
        let mut c = Self::empty(occ.len())?;
        for (i, &v) in occ.iter().enumerate() {
            match v {
                0 => {}
                1 => c.bits |= 1 << i,
                _ => {
                    return Err(Error::InvalidArgument(format!(
                        "occupancy at site {i} is {v}, expected 0 or 1"
                    )))
                }
            }
        }
        Ok(c)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len as usize
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn bits(&self) -> u128 {
        self.bits
    }

    #[inline]
    fn mask(&self) -> u128 {
        if self.len as usize == MAX_SITES {
            u128::MAX
        } else {
            (1u128 << self.len) - 1
        }
    }

    /// Occupancy at `site`, panicking when out of range.
    #[inline]
    pub fn at(&self, site: usize) -> bool {
        debug_assert!(site < self.len());
        (self.bits >> site) & 1 == 1
    }

    /// Occupancy at a site given by any integer, reduced modulo L.
    #[inline]
    pub fn at_wrapped(&self, site: i64) -> bool {
        self.at(self.wrap(site))
    }

    pub fn get(&self, site: usize) -> Result<bool> {
        self.check_site(site)?;
        Ok(self.at(site))
    }

    pub fn set(&mut self, site: usize, value: bool) -> Result<()> {
        self.check_site(site)?;
        if value {
            self.bits |= 1 << site;
        } else {
            self.bits &= !(1 << site);
        }
        Ok(())
    }

    #[inline]
    pub fn wrap(&self, site: i64) -> usize {
        site.rem_euclid(self.len as i64) as usize
    }

    /// Representative of `to - from` in `(-L/2, L/2]`.
    #[inline]
    pub fn offset(&self, from: usize, to: usize) -> i64 {
        signed_offset(to as i64 - from as i64, self.len())
    }

    pub fn particle_count(&self) -> usize {
        self.bits.count_ones() as usize
    }

    fn check_site(&self, site: usize) -> Result<()> {
        if site >= self.len() {
            return Err(Error::SiteOutOfRange { site, len: self.len() });
        }
        Ok(())
    }

    fn check_same_size(&self, other: &Self) -> Result<()> {
        if self.len != other.len {
            return Err(Error::SizeMismatch { left: self.len(), right: other.len() });
        }
        Ok(())
    }

    /// `η^{x,y}`: occupancies of `x` and `y` exchanged.
    pub fn apply_jump(&self, x: usize, y: usize) -> Result<Self> {
        self.check_site(x)?;
        self.check_site(y)?;
        if x == y {
            return Err(Error::SameSite(x));
        }
        Ok(self.swapped(x, y))
    }

    /// Unchecked variant of [`apply_jump`](Self::apply_jump) for hot loops.
    #[inline]
    pub fn swapped(&self, x: usize, y: usize) -> Self {
        let differ = ((self.bits >> x) ^ (self.bits >> y)) & 1;
        let flip = (differ << x) | (differ << y);
        Self { bits: self.bits ^ flip, len: self.len }
    }

    /// Sitewise order `self(x) <= other(x)` for every x.
    pub fn leq(&self, other: &Self) -> Result<bool> {
        self.check_same_size(other)?;
        Ok(self.leq_unchecked(other))
    }

    #[inline]
    pub fn leq_unchecked(&self, other: &Self) -> bool {
        self.bits & !other.bits == 0
    }

    /// Sitewise maximum.
    pub fn join(&self, other: &Self) -> Result<Self> {
        self.check_same_size(other)?;
        Ok(self.join_unchecked(other))
    }

    #[inline]
    pub fn join_unchecked(&self, other: &Self) -> Self {
        Self { bits: self.bits | other.bits, len: self.len }
    }

    /// Number of sites where the two configurations differ.
    pub fn discrepancy_count(&self, other: &Self) -> Result<usize> {
        self.check_same_size(other)?;
        Ok(self.discrepancies_unchecked(other))
    }

    #[inline]
    pub fn discrepancies_unchecked(&self, other: &Self) -> usize {
        (self.bits ^ other.bits).count_ones() as usize
    }

    /// `2L+1`-bit window `η(x-k) .. η(x+k)`, with `η(x-k)` in bit 0.
    #[inline]
    pub fn window(&self, x: usize, k: usize) -> u64 {
        let len = self.len();
        debug_assert!(2 * k + 1 <= 64);
        if 2 * k >= len {
            // the window wraps onto itself on small rings
            return (0..=2 * k).fold(0u64, |w, j| w | (self.at_wrapped(x as i64 - k as i64 + j as i64) as u64) << j);
        }
        let start = (x + len - k) % len;
        let rotated = if start == 0 {
            self.bits
        } else {
            ((self.bits >> start) | (self.bits << (len - start))) & self.mask()
        };
        (rotated as u64) & ((1u64 << (2 * k + 1)) - 1)
    }

    pub fn occupancies(&self) -> Vec<u8> {
        (0..self.len()).map(|i| self.at(i) as u8).collect()
    }

    /// Every configuration on `len` sites, in increasing bit order.
    pub fn all(len: usize) -> impl Iterator<Item = Configuration> {
        assert!(len <= 24, "exhaustive enumeration is limited to 24 sites");
        (0u128..(1u128 << len)).map(move |bits| Configuration { bits, len: len as u8 })
    }

    /// Every configuration on `len` sites holding exactly `n` particles.
    pub fn sector(len: usize, n: usize) -> impl Iterator<Item = Configuration> {
        Self::all(len).filter(move |c| c.particle_count() == n)
    }
}

/// Representative of `d` modulo `len` in `(-len/2, len/2]`.
pub fn signed_offset(d: i64, len: usize) -> i64 {
    let l = len as i64;
    let r = d.rem_euclid(l);
    if 2 * r > l {
        r - l
    } else {
        r
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len() {
            f.write_str(if self.at(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Configuration({self})")
    }
}

impl FromStr for Configuration {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let occ = s
            .chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(Error::Parse {
                    what: "configuration",
                    detail: format!("unexpected character {other:?} in {s:?}"),
                }),
            })
            .collect::<Result<Vec<u8>>>()?;
        Self::from_occupancies(&occ)
    }
}

impl Serialize for Configuration {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Configuration {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Ordered pair `(ξ, ζ)` of configurations on the same ring.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CoupledState {
    pub first: Configuration,
    pub second: Configuration,
}

/// How the two marginals of a pair compare.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairOrder {
    /// `ξ ≤ ζ`, including `ξ = ζ`.
    Below,
    /// `ξ ≥ ζ` and `ξ ≠ ζ`.
    Above,
    Unordered,
}

impl CoupledState {
    pub fn new(first: Configuration, second: Configuration) -> Result<Self> {
        first.check_same_size(&second)?;
        Ok(Self { first, second })
    }

    pub fn len(&self) -> usize {
        self.first.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first.is_empty()
    }

    pub fn join(&self) -> Configuration {
        self.first.join_unchecked(&self.second)
    }

    pub fn discrepancies(&self) -> usize {
        self.first.discrepancies_unchecked(&self.second)
    }

    pub fn order(&self) -> PairOrder {
        if self.first.leq_unchecked(&self.second) {
            PairOrder::Below
        } else if self.second.leq_unchecked(&self.first) {
            PairOrder::Above
        } else {
            PairOrder::Unordered
        }
    }

    pub fn is_ordered(&self) -> bool {
        self.order() != PairOrder::Unordered
    }

    pub fn swapped(&self) -> Self {
        Self { first: self.second, second: self.first }
    }

    /// Every pair on `len` sites (4^len of them).
    pub fn all(len: usize) -> impl Iterator<Item = CoupledState> + Clone {
        assert!(len <= 12, "exhaustive pair enumeration is limited to 12 sites");
        let n = 1u128 << len;
        (0..n).flat_map(move |a| {
            (0..n).map(move |b| CoupledState {
                first: Configuration { bits: a, len: len as u8 },
                second: Configuration { bits: b, len: len as u8 },
            })
        })
    }

    /// Every pair with `ξ ≤ ζ` on `len` sites (3^len of them).
    pub fn all_ordered(len: usize) -> impl Iterator<Item = CoupledState> + Clone {
        Self::all(len).filter(|p| p.first.leq_unchecked(&p.second))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(s: &str) -> Configuration {
        s.parse().unwrap()
    }

    #[test]
    fn jump_examples() {
        assert_eq!(c("1000").apply_jump(0, 1).unwrap(), c("0100"));
        assert_eq!(c("1100").apply_jump(0, 1).unwrap(), c("1100"));
        assert!(c("1000").apply_jump(0, 4).is_err());
        assert_eq!(c("1000").apply_jump(2, 2), Err(Error::SameSite(2)));
    }

    #[test]
    fn jump_is_an_involution_on_eight_sites() {
        for eta in Configuration::all(8) {
            for x in 0..8 {
                for y in (0..8).filter(|&y| y != x) {
                    let once = eta.apply_jump(x, y).unwrap();
                    assert_eq!(once.particle_count(), eta.particle_count());
                    assert_eq!(once.apply_jump(x, y).unwrap(), eta);
                }
            }
        }
    }

    #[test]
    fn order_examples() {
        assert!(c("010").leq(&c("110")).unwrap());
        assert!(!c("10").leq(&c("01")).unwrap());
        assert!(!c("01").leq(&c("10")).unwrap());
        assert!(c("10").leq(&c("100")).is_err());
    }

    #[test]
    fn order_is_a_partial_order_up_to_five_sites() {
        for len in 1..=5 {
            let all: Vec<_> = Configuration::all(len).collect();
            for a in &all {
                assert!(a.leq(a).unwrap());
                for b in &all {
                    if a.leq(b).unwrap() && b.leq(a).unwrap() {
                        assert_eq!(a, b);
                    }
                    for d in &all {
                        if a.leq(b).unwrap() && b.leq(d).unwrap() {
                            assert!(a.leq(d).unwrap());
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn discrepancy_examples() {
        assert_eq!(c("1010").discrepancy_count(&c("0110")).unwrap(), 2);
        assert_eq!(c("1010").discrepancy_count(&c("1010")).unwrap(), 0);
    }

    #[test]
    fn discrepancy_matches_join_identity() {
        for len in 1..=5 {
            for p in CoupledState::all(len) {
                let j = p.join();
                let via_join: usize = (0..len)
                    .map(|x| 2 * j.at(x) as usize - p.first.at(x) as usize - p.second.at(x) as usize)
                    .sum();
                let direct: usize =
                    (0..len).filter(|&x| p.first.at(x) != p.second.at(x)).count();
                assert_eq!(p.discrepancies(), direct);
                assert_eq!(direct, via_join);
            }
        }
    }

    #[test]
    fn discrepancy_is_a_metric_up_to_four_sites() {
        for len in 1..=4 {
            let all: Vec<_> = Configuration::all(len).collect();
            for a in &all {
                for b in &all {
                    let ab = a.discrepancy_count(b).unwrap();
                    assert_eq!(ab, b.discrepancy_count(a).unwrap());
                    assert_eq!(ab == 0, a == b);
                    for d in &all {
                        assert!(a.discrepancy_count(d).unwrap() <= ab + b.discrepancy_count(d).unwrap());
                    }
                }
            }
        }
    }

    #[test]
    fn join_examples() {
        assert_eq!(c("10").join(&c("01")).unwrap(), c("11"));
        for len in 1..=5 {
            for p in CoupledState::all(len) {
                let j = p.join();
                assert!(p.first.leq_unchecked(&j) && p.second.leq_unchecked(&j));
                if p.first.leq_unchecked(&p.second) {
                    assert_eq!(j, p.second);
                }
            }
            for a in Configuration::all(len) {
                assert_eq!(a.join(&a).unwrap(), a);
            }
        }
    }

    #[test]
    fn offsets_use_the_centered_representative() {
        assert_eq!(signed_offset(3, 6), 3);
        assert_eq!(signed_offset(4, 6), -2);
        assert_eq!(signed_offset(-3, 6), 3);
        assert_eq!(signed_offset(2, 5), 2);
        assert_eq!(signed_offset(3, 5), -2);
        let eta = c("000000");
        assert_eq!(eta.offset(5, 0), 1);
        assert_eq!(eta.offset(0, 5), -1);
    }

    #[test]
    fn window_extraction_wraps() {
        let eta = c("100001");
        // sites 5,0,1 around site 0
        assert_eq!(eta.window(0, 1), 0b011);
        assert_eq!(eta.window(5, 1), 0b110);
        assert_eq!(eta.window(2, 2), 0b00001);
    }

    #[test]
    fn pair_enumeration_sizes() {
        assert_eq!(CoupledState::all(3).count(), 64);
        assert_eq!(CoupledState::all_ordered(4).count(), 81);
    }

    proptest! {
        #[test]
        fn text_round_trip(bits in any::<u64>(), len in 1usize..=64) {
            let mask = if len == 64 { u64::MAX } else { (1u64 << len) - 1 };
            let eta = Configuration::from_bits((bits & mask) as u128, len).unwrap();
            let back: Configuration = eta.to_string().parse().unwrap();
            prop_assert_eq!(back, eta);
        }

        #[test]
        fn jump_conserves_particles(bits in any::<u128>(), x in 0usize..100, y in 0usize..100) {
            let eta = Configuration::from_bits(bits & ((1u128 << 100) - 1), 100).unwrap();
            prop_assume!(x != y);
            let moved = eta.apply_jump(x, y).unwrap();
            prop_assert_eq!(moved.particle_count(), eta.particle_count());
            prop_assert_eq!(moved.at(x), eta.at(y));
            prop_assert_eq!(moved.at(y), eta.at(x));
        }

        #[test]
        fn window_matches_sitewise_reads(bits in any::<u64>(), x in 0usize..40, k in 0usize..10) {
            let eta = Configuration::from_bits((bits & ((1u64 << 40) - 1)) as u128, 40).unwrap();
            let w = eta.window(x, k);
            for i in 0..=2 * k {
                let site = x as i64 - k as i64 + i as i64;
                prop_assert_eq!((w >> i) & 1 == 1, eta.at_wrapped(site));
            }
        }
    }
}

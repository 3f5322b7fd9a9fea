//! Explicit coupling rates for pairs of configurations.
//!
//! Three constructions are provided:
//!
//! * [`increasing_rates`]: couples jumps of ordered pairs through the
//!   overlap function `H` of partial-sum series, leaves unordered pairs
//!   uncoupled. Preserves `ξ ≤ ζ` when the rates are monotone.
//! * [`attractive_rates`]: composes the increasing rates through `ξ∨ζ`, so
//!   that discrepancies never increase, ordered or not.
//! * [`strict_rates`]: increasing coupling with proportional allocation of
//!   the excess rates. Composed through `ξ∨ζ` it drives the strict coupled
//!   chain ([`CouplingKind::Strict`]), under which opposite discrepancies
//!   can meet and annihilate.
//!
//! Tables store raw rates `G(x1,y1;x2,y2)` keyed by the first marginal's
//! jump `(x1,y1)` and the second marginal's jump `(x2,y2)`. Exclusion
//! prefactors are applied only when transitions are enumerated.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Configuration, CoupledState, PairOrder};
use crate::rates::RateTable;
use crate::scalar::{min, pos_diff, Rate};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingKind {
    Increasing,
    Attractive,
    Strict,
}

impl CouplingKind {
    pub const ALL: [CouplingKind; 3] =
        [CouplingKind::Increasing, CouplingKind::Attractive, CouplingKind::Strict];

    pub fn name(self) -> &'static str {
        match self {
            CouplingKind::Increasing => "increasing",
            CouplingKind::Attractive => "attractive",
            CouplingKind::Strict => "strict",
        }
    }
}

impl fmt::Display for CouplingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CouplingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CouplingKind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::Parse {
                what: "coupling kind",
                detail: format!("`{s}` (expected increasing, attractive or strict)"),
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Common departure site, doubly occupied.
    Departure,
    /// Common arrival site, doubly empty.
    Arrival,
}

/// Discrepancy sets at a common site for a pair `ξ ≤ ζ`.
///
/// For a departure site `x`: `first` is `Y` (sites with `ξ=0, ζ=1`,
/// `Γ_ξ(x,·) > 0`) with series `S` of `Γ_ξ`, and `second` is `Ȳ` (doubly
/// empty sites with `Γ_ζ > Γ_ξ`) with series `T̄` of the excess.
/// For an arrival site `y`: `first` is `X` (doubly occupied sites with
/// `Γ_ξ > Γ_ζ`) with series `T` of the excess, and `second` is `X̄` (sites
/// with `ξ=0, ζ=1`, `Γ_ζ(·,y) > 0`) with series `S̄` of `Γ_ζ`.
///
/// Sites are listed by ascending signed offset from the common site. The
/// series start at 0, so `series[k]` is the sum of the first `k` terms.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscrepancySets<T> {
    pub role: Role,
    pub site: usize,
    pub first: Vec<usize>,
    pub first_series: Vec<T>,
    pub second: Vec<usize>,
    pub second_series: Vec<T>,
}

impl<T: Rate> DiscrepancySets<T> {
    fn empty(role: Role, site: usize) -> Self {
        Self {
            role,
            site,
            first: Vec::new(),
            first_series: vec![T::zero()],
            second: Vec::new(),
            second_series: vec![T::zero()],
        }
    }

    pub fn first_total(&self) -> &T {
        self.first_series.last().expect("series starts at 0")
    }

    pub fn second_total(&self) -> &T {
        self.second_series.last().expect("series starts at 0")
    }
}

/// Build the discrepancy sets of `ξ ≤ ζ` at `site`. A site whose
/// occupancy does not fit the role gives empty sets.
pub fn build_sets<T: Rate>(
    rates: &RateTable<T>,
    xi: &Configuration,
    zeta: &Configuration,
    site: usize,
    role: Role,
) -> DiscrepancySets<T> {
    let mut sets = DiscrepancySets::empty(role, site);
    let len = xi.len();
    match role {
        Role::Departure => {
            let x = site;
            if !(xi.at(x) && zeta.at(x)) {
                return sets;
            }
            for i in 0..rates.offsets().len() {
                let y = rates.target(len, x, i);
                let gx = rates.by_index(xi, x, i);
                let gz = rates.by_index(zeta, x, i);
                match (xi.at(y), zeta.at(y)) {
                    (false, true) if gx.is_active() => {
                        let next = sets.first_series.last().unwrap().clone() + gx.clone();
                        sets.first.push(y);
                        sets.first_series.push(next);
                    }
                    (false, false) => {
                        let excess = pos_diff(gz, gx);
                        if excess.is_active() {
                            let next = sets.second_series.last().unwrap().clone() + excess;
                            sets.second.push(y);
                            sets.second_series.push(next);
                        }
                    }
                    _ => {}
                }
            }
        }
        Role::Arrival => {
            let y = site;
            if xi.at(y) || zeta.at(y) {
                return sets;
            }
            // offsets of x from y are -d, so walk D downwards
            for i in (0..rates.offsets().len()).rev() {
                let x = (y as i64 - rates.offsets()[i]).rem_euclid(len as i64) as usize;
                let gx = rates.by_index(xi, x, i);
                let gz = rates.by_index(zeta, x, i);
                match (xi.at(x), zeta.at(x)) {
                    (true, true) => {
                        let excess = pos_diff(gx, gz);
                        if excess.is_active() {
                            let next = sets.first_series.last().unwrap().clone() + excess;
                            sets.first.push(x);
                            sets.first_series.push(next);
                        }
                    }
                    (false, true) if gz.is_active() => {
                        let next = sets.second_series.last().unwrap().clone() + gz.clone();
                        sets.second.push(x);
                        sets.second_series.push(next);
                    }
                    _ => {}
                }
            }
        }
    }
    sets
}

/// `H_{m,n}(S,T) = S_m∧T_n - S_{m-1}∧T_n - S_m∧T_{n-1} + S_{m-1}∧T_{n-1}`,
/// for series given with their leading 0.
pub fn h_term<T: Rate>(m: usize, n: usize, s: &[T], t: &[T]) -> Result<T> {
    if m == 0 || n == 0 {
        return Err(Error::InvalidArgument("h_term indices start at 1".into()));
    }
    if m >= s.len() || n >= t.len() {
        return Err(Error::InvalidArgument(format!(
            "h_term index ({m}, {n}) beyond series lengths ({}, {})",
            s.len() - 1,
            t.len() - 1
        )));
    }
    Ok(h_unchecked(m, n, s, t))
}

#[inline]
fn h_unchecked<T: Rate>(m: usize, n: usize, s: &[T], t: &[T]) -> T {
    min(&s[m], &t[n]) - min(&s[m - 1], &t[n]) - min(&s[m], &t[n - 1]) + min(&s[m - 1], &t[n - 1])
}

/// One coupled-jump rate: first marginal jumps `x1 → y1`, second `x2 → y2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoupledRate<T> {
    pub x1: usize,
    pub y1: usize,
    pub x2: usize,
    pub y2: usize,
    pub rate: T,
}

impl<T> CoupledRate<T> {
    fn key(&self) -> (usize, usize, usize, usize) {
        (self.x1, self.y1, self.x2, self.y2)
    }

    fn transposed(self) -> Self {
        Self { x1: self.x2, y1: self.y2, x2: self.x1, y2: self.y1, rate: self.rate }
    }
}

/// Rate of an uncoupled jump `x → y` of one marginal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginalRate<T> {
    pub x: usize,
    pub y: usize,
    pub rate: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CouplingTable<T> {
    pub kind: CouplingKind,
    /// Positive raw rates, sorted by `(x1, y1, x2, y2)`.
    pub coupled: Vec<CoupledRate<T>>,
    /// `Γ_ξ(x,y) - φ(x,y)` for every site and allowed offset.
    pub residual_first: Vec<MarginalRate<T>>,
    /// `Γ_ζ(x,y) - φ̄(x,y)` for every site and allowed offset.
    pub residual_second: Vec<MarginalRate<T>>,
}

impl<T: Rate> CouplingTable<T> {
    pub fn get(&self, x1: usize, y1: usize, x2: usize, y2: usize) -> T {
        self.coupled
            .binary_search_by(|e| e.key().cmp(&(x1, y1, x2, y2)))
            .map(|i| self.coupled[i].rate.clone())
            .unwrap_or_else(|_| T::zero())
    }

    /// `φ(x,y) = Σ ζ(x')(1-ζ(y')) G(x,y;x',y')`.
    pub fn phi(&self, zeta: &Configuration, x: usize, y: usize) -> T {
        let start = self.coupled.partition_point(|e| (e.x1, e.y1) < (x, y));
        self.coupled[start..]
            .iter()
            .take_while(|e| (e.x1, e.y1) == (x, y))
            .filter(|e| zeta.at(e.x2) && !zeta.at(e.y2))
            .fold(T::zero(), |acc, e| acc + e.rate.clone())
    }

    /// `φ̄(x,y) = Σ ξ(x')(1-ξ(y')) G(x',y';x,y)`.
    pub fn phibar(&self, xi: &Configuration, x: usize, y: usize) -> T {
        self.coupled
            .iter()
            .filter(|e| (e.x2, e.y2) == (x, y) && xi.at(e.x1) && !xi.at(e.y1))
            .fold(T::zero(), |acc, e| acc + e.rate.clone())
    }

    /// Smallest residual over both marginals.
    pub fn min_residual(&self) -> Option<T> {
        self.residual_first
            .iter()
            .chain(&self.residual_second)
            .map(|r| r.rate.clone())
            .reduce(|a, b| min(&a, &b))
    }

    pub fn is_diagonal(&self) -> bool {
        self.coupled.iter().all(|e| e.x1 == e.x2 && e.y1 == e.y2)
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Allocation {
    /// Overlap of partial sums.
    Overlap,
    /// Proportional to the first marginal's share.
    Proportional,
}

/// Coupled entries for `lo ≤ hi`, keyed `(lo jump; hi jump)`.
fn ordered_base<T: Rate>(
    rates: &RateTable<T>,
    lo: &Configuration,
    hi: &Configuration,
    alloc: Allocation,
    out: &mut Vec<CoupledRate<T>>,
) {
    let len = lo.len();
    for x in 0..len {
        for i in 0..rates.offsets().len() {
            let m = min(rates.by_index(lo, x, i), rates.by_index(hi, x, i));
            if m.is_active() {
                out.push(CoupledRate { x1: x, y1: rates.target(len, x, i), x2: x, y2: rates.target(len, x, i), rate: m });
            }
        }
    }
    if lo == hi {
        return;
    }
    for site in 0..len {
        if lo.at(site) && hi.at(site) {
            let sets = build_sets(rates, lo, hi, site, Role::Departure);
            if sets.first.is_empty() || sets.second.is_empty() {
                continue;
            }
            match alloc {
                Allocation::Overlap => {
                    for m in 1..=sets.first.len() {
                        for n in 1..=sets.second.len() {
                            let h = h_unchecked(m, n, &sets.first_series, &sets.second_series);
                            if h.is_active() {
                                out.push(CoupledRate { x1: site, y1: sets.first[m - 1], x2: site, y2: sets.second[n - 1], rate: h });
                            }
                        }
                    }
                }
                Allocation::Proportional => {
                    let norm = positive_or_one(sets.first_total());
                    for (m, &y) in sets.first.iter().enumerate() {
                        let share = sets.first_series[m + 1].clone() - sets.first_series[m].clone();
                        for (n, &yb) in sets.second.iter().enumerate() {
                            let excess = sets.second_series[n + 1].clone() - sets.second_series[n].clone();
                            let g = share.clone() * excess / norm.clone();
                            if g.is_active() {
                                out.push(CoupledRate { x1: site, y1: y, x2: site, y2: yb, rate: g });
                            }
                        }
                    }
                }
            }
        } else if !lo.at(site) && !hi.at(site) {
            let sets = build_sets(rates, lo, hi, site, Role::Arrival);
            if sets.first.is_empty() || sets.second.is_empty() {
                continue;
            }
            match alloc {
                Allocation::Overlap => {
                    for m in 1..=sets.first.len() {
                        for n in 1..=sets.second.len() {
                            let h = h_unchecked(m, n, &sets.first_series, &sets.second_series);
                            if h.is_active() {
                                out.push(CoupledRate { x1: sets.first[m - 1], y1: site, x2: sets.second[n - 1], y2: site, rate: h });
                            }
                        }
                    }
                }
                Allocation::Proportional => {
                    let norm = positive_or_one(sets.second_total());
                    for (m, &x) in sets.first.iter().enumerate() {
                        let excess = sets.first_series[m + 1].clone() - sets.first_series[m].clone();
                        for (n, &xb) in sets.second.iter().enumerate() {
                            let share = sets.second_series[n + 1].clone() - sets.second_series[n].clone();
                            let g = excess.clone() * share / norm.clone();
                            if g.is_active() {
                                out.push(CoupledRate { x1: x, y1: site, x2: xb, y2: site, rate: g });
                            }
                        }
                    }
                }
            }
        }
    }
}

fn positive_or_one<T: Rate>(v: &T) -> T {
    if v.is_active() {
        v.clone()
    } else {
        T::one()
    }
}

/// Base entries for any pair: the ordered branch, its transpose, or nothing.
fn base_entries<T: Rate>(
    rates: &RateTable<T>,
    xi: &Configuration,
    zeta: &Configuration,
    alloc: Allocation,
) -> Vec<CoupledRate<T>> {
    let mut out = Vec::new();
    match (CoupledState { first: *xi, second: *zeta }).order() {
        PairOrder::Below => ordered_base(rates, xi, zeta, alloc, &mut out),
        PairOrder::Above => {
            ordered_base(rates, zeta, xi, alloc, &mut out);
            out = out.into_iter().map(CoupledRate::transposed).collect();
        }
        PairOrder::Unordered => {}
    }
    out
}

/// Sort by key and add up duplicates.
fn merge_entries<T: Rate>(mut entries: Vec<CoupledRate<T>>) -> Vec<CoupledRate<T>> {
    entries.sort_by_key(CoupledRate::key);
    let mut out: Vec<CoupledRate<T>> = Vec::with_capacity(entries.len());
    for e in entries {
        match out.last_mut() {
            Some(last) if last.key() == e.key() => last.rate = last.rate.clone() + e.rate,
            _ => out.push(e),
        }
    }
    out.retain(|e| e.rate.is_active());
    out
}

/// `G^D(x1,y1;x2,y2) = Σ_{x,y} J(x)(1-J(y)) / N(x,y) · G_{ξ,J}(x1,y1;x,y) · G_{J,ζ}(x,y;x2,y2)`
/// with `J = ξ∨ζ` and `N = Γ_J(x,y)` (or 1 when that vanishes).
fn composed_entries<T: Rate>(
    rates: &RateTable<T>,
    xi: &Configuration,
    zeta: &Configuration,
    alloc: Allocation,
) -> Vec<CoupledRate<T>> {
    let join = xi.join_unchecked(zeta);
    let left = base_entries(rates, xi, &join, alloc);
    let mut right = base_entries(rates, &join, zeta, alloc);
    right.sort_by_key(|e| (e.x1, e.y1));
    let mut acc = Vec::new();
    for a in &left {
        let (x, y) = (a.x2, a.y2);
        if !join.at(x) || join.at(y) {
            continue;
        }
        let start = right.partition_point(|b| (b.x1, b.y1) < (x, y));
        let matching = right[start..].iter().take_while(|b| (b.x1, b.y1) == (x, y));
        let gamma = rates.gamma(&join, x, y);
        debug_assert!(gamma.is_active() || matching.clone().next().is_none() || !a.rate.is_active());
        let norm = positive_or_one(&gamma);
        for b in matching {
            acc.push(CoupledRate {
                x1: a.x1,
                y1: a.y1,
                x2: b.x2,
                y2: b.y2,
                rate: a.rate.clone() * b.rate.clone() / norm.clone(),
            });
        }
    }
    merge_entries(acc)
}

fn with_residuals<T: Rate>(
    rates: &RateTable<T>,
    xi: &Configuration,
    zeta: &Configuration,
    kind: CouplingKind,
    coupled: Vec<CoupledRate<T>>,
) -> CouplingTable<T> {
    let len = xi.len();
    let nd = rates.offsets().len();
    let mut phi = vec![T::zero(); len * nd];
    let mut phibar = vec![T::zero(); len * nd];
    for e in &coupled {
        if zeta.at(e.x2) && !zeta.at(e.y2) {
            let i = rates.jump_index(len, e.x1, e.y1).expect("coupled jumps use allowed offsets");
            phi[e.x1 * nd + i] = phi[e.x1 * nd + i].clone() + e.rate.clone();
        }
        if xi.at(e.x1) && !xi.at(e.y1) {
            let i = rates.jump_index(len, e.x2, e.y2).expect("coupled jumps use allowed offsets");
            phibar[e.x2 * nd + i] = phibar[e.x2 * nd + i].clone() + e.rate.clone();
        }
    }
    let mut residual_first = Vec::with_capacity(len * nd);
    let mut residual_second = Vec::with_capacity(len * nd);
    for x in 0..len {
        for i in 0..nd {
            let y = rates.target(len, x, i);
            residual_first.push(MarginalRate { x, y, rate: rates.by_index(xi, x, i).clone() - phi[x * nd + i].clone() });
            residual_second.push(MarginalRate { x, y, rate: rates.by_index(zeta, x, i).clone() - phibar[x * nd + i].clone() });
        }
    }
    CouplingTable { kind, coupled, residual_first, residual_second }
}

/// Increasing coupling: overlap allocation for ordered pairs, uncoupled otherwise.
pub fn increasing_rates<T: Rate>(rates: &RateTable<T>, xi: &Configuration, zeta: &Configuration) -> CouplingTable<T> {
    let coupled = merge_entries(base_entries(rates, xi, zeta, Allocation::Overlap));
    with_residuals(rates, xi, zeta, CouplingKind::Increasing, coupled)
}

/// Attractive coupling: increasing rates composed through `ξ∨ζ`.
pub fn attractive_rates<T: Rate>(rates: &RateTable<T>, xi: &Configuration, zeta: &Configuration) -> CouplingTable<T> {
    let coupled = composed_entries(rates, xi, zeta, Allocation::Overlap);
    with_residuals(rates, xi, zeta, CouplingKind::Attractive, coupled)
}

/// Increasing coupling with proportional allocation: for a common
/// departure `x`, `G(x,y;x,ȳ) = Γ_ξ(x,y) [Γ_ζ-Γ_ξ]^+(x,ȳ) / S*`; for a
/// common arrival `y`, `G(x,y;x̄,y) = [Γ_ξ-Γ_ζ]^+(x,y) Γ_ζ(x̄,y) / S̄*`.
pub fn strict_rates<T: Rate>(rates: &RateTable<T>, xi: &Configuration, zeta: &Configuration) -> CouplingTable<T> {
    let coupled = merge_entries(base_entries(rates, xi, zeta, Allocation::Proportional));
    with_residuals(rates, xi, zeta, CouplingKind::Strict, coupled)
}

/// Proportional rates composed through `ξ∨ζ`; the table behind the strict coupled chain.
pub fn strict_attractive_rates<T: Rate>(
    rates: &RateTable<T>,
    xi: &Configuration,
    zeta: &Configuration,
) -> CouplingTable<T> {
    let coupled = composed_entries(rates, xi, zeta, Allocation::Proportional);
    with_residuals(rates, xi, zeta, CouplingKind::Strict, coupled)
}

/// Table that drives the coupled chain of the given kind.
pub fn chain_table<T: Rate>(
    rates: &RateTable<T>,
    xi: &Configuration,
    zeta: &Configuration,
    kind: CouplingKind,
) -> CouplingTable<T> {
    match kind {
        CouplingKind::Increasing => increasing_rates(rates, xi, zeta),
        CouplingKind::Attractive => attractive_rates(rates, xi, zeta),
        CouplingKind::Strict => strict_attractive_rates(rates, xi, zeta),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveKind {
    Coupled,
    FirstOnly,
    SecondOnly,
}

/// One move of the coupled chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionAudit<T> {
    pub kind: MoveKind,
    pub first_jump: Option<(usize, usize)>,
    pub second_jump: Option<(usize, usize)>,
    pub rate: T,
    pub target: CoupledState,
    /// Ordered sources stay ordered the same way.
    pub order_preserved: bool,
    pub discrepancy_delta: i64,
}

/// Every move of the coupled chain from `pair` with a rate beyond tolerance
/// (negative rates are kept so that broken couplings show up in audits).
pub fn coupled_transitions<T: Rate>(
    rates: &RateTable<T>,
    pair: &CoupledState,
    kind: CouplingKind,
) -> Vec<TransitionAudit<T>> {
    let table = chain_table(rates, &pair.first, &pair.second, kind);
    transitions_from_table(pair, &table)
}

pub fn transitions_from_table<T: Rate>(pair: &CoupledState, table: &CouplingTable<T>) -> Vec<TransitionAudit<T>> {
    let (xi, zeta) = (&pair.first, &pair.second);
    let order = pair.order();
    let before = pair.discrepancies() as i64;
    let audit = |kind, first_jump: Option<(usize, usize)>, second_jump: Option<(usize, usize)>, rate: T| {
        let first = first_jump.map_or(*xi, |(x, y)| xi.swapped(x, y));
        let second = second_jump.map_or(*zeta, |(x, y)| zeta.swapped(x, y));
        let target = CoupledState { first, second };
        let order_preserved = match order {
            PairOrder::Below => first.leq_unchecked(&second),
            PairOrder::Above => second.leq_unchecked(&first),
            PairOrder::Unordered => true,
        };
        TransitionAudit {
            kind,
            first_jump,
            second_jump,
            rate,
            target,
            order_preserved,
            discrepancy_delta: target.discrepancies() as i64 - before,
        }
    };
    let significant = |r: &T| r.is_active() || (T::zero() - r.clone()).is_active();
    let mut out = Vec::new();
    for e in &table.coupled {
        if xi.at(e.x1) && !xi.at(e.y1) && zeta.at(e.x2) && !zeta.at(e.y2) {
            out.push(audit(MoveKind::Coupled, Some((e.x1, e.y1)), Some((e.x2, e.y2)), e.rate.clone()));
        }
    }
    for r in &table.residual_first {
        if xi.at(r.x) && !xi.at(r.y) && significant(&r.rate) {
            out.push(audit(MoveKind::FirstOnly, Some((r.x, r.y)), None, r.rate.clone()));
        }
    }
    for r in &table.residual_second {
        if zeta.at(r.x) && !zeta.at(r.y) && significant(&r.rate) {
            out.push(audit(MoveKind::SecondOnly, None, Some((r.x, r.y)), r.rate.clone()));
        }
    }
    out
}

/// Offending entry found by [`one_d_cross_check`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossCheckMismatch {
    pub xi: Configuration,
    pub zeta: Configuration,
    pub quadruple: (usize, usize, usize, usize),
    pub engine: String,
    pub prefix_sums: String,
}

/// Recompute every prefactor-active increasing-coupling entry of an ordered
/// pair from prefix sums along the line (sites compared by their offset
/// from the common site) and compare with [`increasing_rates`].
pub fn one_d_cross_check<T: Rate>(
    rates: &RateTable<T>,
    xi: &Configuration,
    zeta: &Configuration,
) -> std::result::Result<(), Box<CrossCheckMismatch>> {
    let order = CoupledState { first: *xi, second: *zeta }.order();
    if order == PairOrder::Unordered {
        return Ok(());
    }
    let table = increasing_rates(rates, xi, zeta);
    let len = xi.len();
    let jumps = |eta: &Configuration| -> Vec<(usize, usize)> {
        (0..len)
            .filter(|&x| eta.at(x))
            .flat_map(|x| (0..rates.offsets().len()).map(move |i| (x, i)))
            .map(|(x, i)| (x, rates.target(len, x, i)))
            .filter(|&(_, y)| !eta.at(y))
            .collect()
    };
    for (x1, y1) in jumps(xi) {
        for (x2, y2) in jumps(zeta) {
            let formula = if (x1, y1) == (x2, y2) {
                min(&rates.gamma(xi, x1, y1), &rates.gamma(zeta, x1, y1))
            } else {
                let mut g = T::zero();
                match order {
                    PairOrder::Below => {
                        if x1 == x2 {
                            g = g + pos(h_initial(rates, xi, zeta, x1, y1, y2));
                        }
                        if y1 == y2 {
                            g = g + pos(h_final(rates, xi, zeta, x1, x2, y1));
                        }
                    }
                    _ => {
                        if x1 == x2 {
                            g = g + pos(h_initial(rates, zeta, xi, x1, y2, y1));
                        }
                        if y1 == y2 {
                            g = g + pos(h_final(rates, zeta, xi, x2, x1, y1));
                        }
                    }
                }
                g
            };
            let engine = table.get(x1, y1, x2, y2);
            if !engine.approx_eq(&formula) {
                return Err(Box::new(CrossCheckMismatch {
                    xi: *xi,
                    zeta: *zeta,
                    quadruple: (x1, y1, x2, y2),
                    engine: engine.to_text(),
                    prefix_sums: formula.to_text(),
                }));
            }
        }
    }
    Ok(())
}

fn pos<T: Rate>(v: T) -> T {
    pos_diff(&v, &T::zero())
}

/// Sum of `term(s)` over sites `s` whose offset from `base` is at most
/// (or strictly below) the offset of `limit`.
fn prefix<T: Rate>(len: usize, base: usize, limit: usize, strict: bool, term: impl Fn(usize) -> T) -> T {
    let bound = crate::lattice::signed_offset(limit as i64 - base as i64, len);
    (0..len)
        .filter(|&s| s != base)
        .filter(|&s| {
            let o = crate::lattice::signed_offset(s as i64 - base as i64, len);
            if strict {
                o < bound
            } else {
                o <= bound
            }
        })
        .fold(T::zero(), |acc, s| acc + term(s))
}

/// `A(≤y) ∧ B(≤z) - A(<y) ∨ B(<z)` for a common departure `x`.
fn h_initial<T: Rate>(rates: &RateTable<T>, xi: &Configuration, zeta: &Configuration, x: usize, y: usize, z: usize) -> T {
    let len = xi.len();
    let a = |s: usize| if !xi.at(s) && zeta.at(s) { rates.gamma(xi, x, s) } else { T::zero() };
    let b = |s: usize| if !zeta.at(s) { pos_diff(&rates.gamma(zeta, x, s), &rates.gamma(xi, x, s)) } else { T::zero() };
    let upper = min(&prefix(len, x, y, false, a), &prefix(len, x, z, false, b));
    let lower = crate::scalar::max(&prefix(len, x, y, true, a), &prefix(len, x, z, true, b));
    upper - lower
}

/// Same-arrival analogue at the common arrival `z`.
fn h_final<T: Rate>(rates: &RateTable<T>, xi: &Configuration, zeta: &Configuration, x: usize, y: usize, z: usize) -> T {
    let len = xi.len();
    let a = |s: usize| if xi.at(s) { pos_diff(&rates.gamma(xi, s, z), &rates.gamma(zeta, s, z)) } else { T::zero() };
    let b = |s: usize| if zeta.at(s) && !xi.at(s) { rates.gamma(zeta, s, z) } else { T::zero() };
    let upper = min(&prefix(len, z, x, false, a), &prefix(len, z, y, false, b));
    let lower = crate::scalar::max(&prefix(len, z, x, true, a), &prefix(len, z, y, true, b));
    upper - lower
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::monotone::is_monotone;
    use crate::rates::{make_model, make_model_positional, zoo, ModelId, RateSpec};
    use crate::scalar::Exact;
    use num_traits::Zero;
    use proptest::prelude::*;

    fn q(n: i128, d: i128) -> Exact {
        Exact::new(n, d)
    }

    fn c(s: &str) -> Configuration {
        s.parse().unwrap()
    }

    fn traffic(a: Exact, b: Exact) -> RateSpec {
        make_model_positional(ModelId::Traffic2, &[a, b]).unwrap()
    }

    #[test]
    fn equal_marginals_have_no_excess_sets() {
        let t = traffic(q(3, 10), q(7, 10)).table::<Exact>();
        for eta in Configuration::all(6) {
            for s in 0..6 {
                let dep = build_sets(&t, &eta, &eta, s, Role::Departure);
                assert!(dep.second.is_empty() && dep.first.is_empty());
                let arr = build_sets(&t, &eta, &eta, s, Role::Arrival);
                assert!(arr.first.is_empty() && arr.second.is_empty());
            }
        }
    }

    #[test]
    fn sets_match_their_defining_predicates() {
        let spec = make_model(ModelId::TwoStarStep, &[]).unwrap();
        let t = spec.table::<Exact>();
        for p in CoupledState::all_ordered(6) {
            let (xi, zeta) = (&p.first, &p.second);
            for s in 0..6 {
                let dep = build_sets(&t, xi, zeta, s, Role::Departure);
                let arr = build_sets(&t, xi, zeta, s, Role::Arrival);
                let g = |eta: &Configuration, a: usize, b: usize| t.gamma(eta, a, b);
                let ys: Vec<usize> = (0..6)
                    .filter(|&y| xi.at(s) && zeta.at(s) && !xi.at(y) && zeta.at(y) && g(xi, s, y) > Exact::zero())
                    .collect();
                let ybar: Vec<usize> = (0..6)
                    .filter(|&y| xi.at(s) && zeta.at(s) && !zeta.at(y) && g(zeta, s, y) > g(xi, s, y))
                    .collect();
                let xs: Vec<usize> = (0..6)
                    .filter(|&x| !zeta.at(s) && xi.at(x) && g(xi, x, s) > g(zeta, x, s))
                    .collect();
                let xbar: Vec<usize> = (0..6)
                    .filter(|&x| !zeta.at(s) && !xi.at(x) && zeta.at(x) && g(zeta, x, s) > Exact::zero())
                    .collect();
                let sorted = |v: &Vec<usize>| {
                    let mut v = v.clone();
                    v.sort();
                    v
                };
                assert_eq!(sorted(&dep.first), ys);
                assert_eq!(sorted(&dep.second), ybar);
                assert_eq!(sorted(&arr.first), xs);
                assert_eq!(sorted(&arr.second), xbar);
                // canonical order: ascending signed offset from the common site
                for w in dep.first.windows(2).chain(dep.second.windows(2)) {
                    assert!(xi.offset(s, w[0]) < xi.offset(s, w[1]));
                }
                for w in arr.first.windows(2).chain(arr.second.windows(2)) {
                    assert!(xi.offset(s, w[0]) < xi.offset(s, w[1]));
                }
            }
        }
    }

    #[test]
    fn sep_has_no_excess_sets() {
        let t = make_model(ModelId::Sep, &[("p1".into(), q(2, 3)), ("p-1".into(), q(1, 3))]).unwrap().table::<Exact>();
        for p in CoupledState::all_ordered(5) {
            for s in 0..5 {
                assert!(build_sets(&t, &p.first, &p.second, s, Role::Departure).second.is_empty());
                assert!(build_sets(&t, &p.first, &p.second, s, Role::Arrival).first.is_empty());
            }
        }
    }

    #[test]
    fn h_term_examples() {
        let s = [0.0, 1.0];
        let t = [0.0, 2.0];
        assert_eq!(h_term(1, 1, &s, &t).unwrap(), 1.0);
        assert!(h_term(0, 1, &s, &t).is_err());
        assert!(h_term(2, 1, &s, &t).is_err());
    }

    fn series() -> impl Strategy<Value = Vec<Exact>> {
        proptest::collection::vec(0i128..5, 1..=6).prop_map(|inc| {
            let mut out = vec![Exact::zero()];
            for v in inc {
                let next = *out.last().unwrap() + Exact::new(v, 2);
                out.push(next);
            }
            out
        })
    }

    proptest! {
        #[test]
        fn h_term_is_an_interval_overlap(s in series(), t in series()) {
            for m in 1..s.len() {
                for n in 1..t.len() {
                    let h = h_term(m, n, &s, &t).unwrap();
                    prop_assert!(h >= Exact::zero());
                    let overlap = pos_diff(&min(&s[m], &t[n]), &crate::scalar::max(&s[m - 1], &t[n - 1]));
                    prop_assert_eq!(h, overlap);
                    let alt = pos_diff(&min(&s[m], &t[n]), &s[m - 1]) - pos_diff(&min(&s[m], &t[n - 1]), &s[m - 1]);
                    prop_assert_eq!(h, alt);
                }
            }
        }

        #[test]
        fn h_term_telescopes(s in series(), t in series()) {
            let (ss, ts) = (*s.last().unwrap(), *t.last().unwrap());
            for n in 1..t.len() {
                let sum: Exact = (1..s.len()).map(|m| h_term(m, n, &s, &t).unwrap()).sum();
                prop_assert_eq!(sum, min(&ss, &t[n]) - min(&ss, &t[n - 1]));
            }
            for m in 1..s.len() {
                let sum: Exact = (1..t.len()).map(|n| h_term(m, n, &s, &t).unwrap()).sum();
                prop_assert_eq!(sum, min(&s[m], &ts) - min(&s[m - 1], &ts));
            }
        }
    }

    #[test]
    fn telescoping_holds_for_constructed_series() {
        let t = traffic(q(3, 10), q(7, 10)).table::<Exact>();
        for p in CoupledState::all_ordered(6) {
            for s in 0..6 {
                for role in [Role::Departure, Role::Arrival] {
                    let sets = build_sets(&t, &p.first, &p.second, s, role);
                    let (a, b) = (&sets.first_series, &sets.second_series);
                    for n in 1..b.len() {
                        let sum: Exact = (1..a.len()).map(|m| h_unchecked(m, n, a, b)).sum();
                        assert_eq!(sum, min(sets.first_total(), &b[n]) - min(sets.first_total(), &b[n - 1]));
                    }
                }
            }
        }
    }

    #[test]
    fn sep_tables_are_basic_coupling() {
        let spec = make_model(ModelId::Sep, &[("p1".into(), q(2, 3)), ("p-1".into(), q(1, 3))]).unwrap();
        let t = spec.table::<Exact>();
        for p in CoupledState::all(5) {
            let inc = increasing_rates(&t, &p.first, &p.second);
            assert!(inc.is_diagonal());
            if p.is_ordered() {
                assert_eq!(inc.coupled.len(), 10);
                for e in &inc.coupled {
                    assert_eq!(e.rate, t.gamma(&p.first, e.x1, e.y1));
                }
            } else {
                assert!(inc.coupled.is_empty());
            }
            assert_eq!(strict_rates(&t, &p.first, &p.second), CouplingTable { kind: CouplingKind::Strict, ..inc });
            let att = attractive_rates(&t, &p.first, &p.second);
            let j = p.join();
            assert!(att.is_diagonal());
            for e in &att.coupled {
                assert!(j.at(e.x1) && !j.at(e.y1));
                assert_eq!(e.rate, t.gamma(&j, e.x1, e.y1));
            }
        }
    }

    #[test]
    fn unordered_pairs_are_uncoupled_under_the_increasing_kind() {
        let t = traffic(q(1, 2), q(1, 4)).table::<Exact>();
        let (xi, zeta) = (c("101000"), c("010100"));
        let table = increasing_rates(&t, &xi, &zeta);
        assert!(table.coupled.is_empty());
        for r in &table.residual_first {
            assert_eq!(r.rate, t.gamma(&xi, r.x, r.y));
        }
        for r in &table.residual_second {
            assert_eq!(r.rate, t.gamma(&zeta, r.x, r.y));
        }
    }

    #[test]
    fn traffic_same_departure_rate() {
        // x = 0: ξ(1) = 0, ζ(1) = 1
        let (a, b) = (q(9, 10), q(1, 5));
        let t = traffic(a, b).table::<Exact>();
        let table = increasing_rates(&t, &c("100000"), &c("110000"));
        assert_eq!(table.get(0, 1, 0, 2), a - b);
        let table = increasing_rates(&t, &c("100000"), &c("100000"));
        assert_eq!(table.get(0, 1, 0, 2), Exact::zero());
    }

    #[test]
    fn marginal_sums_hold_for_ordered_pairs() {
        for spec in zoo() {
            let t = spec.table::<Exact>();
            for p in CoupledState::all_ordered(spec.min_ring().max(5)) {
                let (xi, zeta) = (&p.first, &p.second);
                for kind in [CouplingKind::Increasing, CouplingKind::Strict] {
                    let table = if kind == CouplingKind::Increasing {
                        increasing_rates(&t, xi, zeta)
                    } else {
                        strict_rates(&t, xi, zeta)
                    };
                    for x in 0..xi.len() {
                        for i in 0..t.offsets().len() {
                            let y = t.target(xi.len(), x, i);
                            if xi.at(x) && !xi.at(y) {
                                let phi = table.phi(zeta, x, y);
                                let g = t.gamma(xi, x, y);
                                if !zeta.at(y) {
                                    assert_eq!(phi, g, "{} {kind}", spec.name());
                                }
                                assert!(phi <= g);
                            }
                            if !zeta.at(y) && zeta.at(x) && !xi.at(y) && xi.at(x) {
                                assert_eq!(table.phibar(xi, x, y), t.gamma(zeta, x, y));
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn proportional_allocation_matches_its_closed_form() {
        let spec = traffic(q(1, 2), q(3, 2));
        let t = spec.table::<Exact>();
        for p in CoupledState::all_ordered(6) {
            let (xi, zeta) = (&p.first, &p.second);
            let table = strict_rates(&t, xi, zeta);
            for x in 0..6 {
                for i in 0..t.offsets().len() {
                    let y = t.target(6, x, i);
                    if !(xi.at(x) && !xi.at(y) && zeta.at(x)) {
                        continue;
                    }
                    let sets = build_sets(&t, xi, zeta, x, Role::Departure);
                    let g = t.gamma(xi, x, y);
                    let expected = if !zeta.at(y) {
                        g
                    } else if sets.first_total().is_active() {
                        *sets.second_total() / *sets.first_total() * g
                    } else {
                        Exact::zero()
                    };
                    assert_eq!(table.phi(zeta, x, y), expected);
                }
            }
        }
    }

    #[test]
    fn residuals_are_nonnegative_for_monotone_zoo_models() {
        for spec in zoo() {
            assert!(is_monotone::<Exact>(&spec).monotone);
            let t = spec.table::<Exact>();
            let len = spec.min_ring().max(6);
            if len > 6 {
                continue;
            }
            for p in CoupledState::all(len) {
                for table in [
                    increasing_rates(&t, &p.first, &p.second),
                    attractive_rates(&t, &p.first, &p.second),
                    strict_rates(&t, &p.first, &p.second),
                    strict_attractive_rates(&t, &p.first, &p.second),
                ] {
                    assert!(table.coupled.iter().all(|e| e.rate > Exact::zero()));
                    let low = table.min_residual().unwrap();
                    assert!(low >= Exact::zero(), "{} {:?} {}", spec.name(), table.kind, p.first);
                }
            }
        }
    }

    #[test]
    fn attractive_equals_increasing_on_ordered_active_jumps() {
        let spec = traffic(q(3, 10), q(7, 10));
        let t = spec.table::<Exact>();
        for p in CoupledState::all(6).filter(CoupledState::is_ordered) {
            let inc = increasing_rates(&t, &p.first, &p.second);
            let att = attractive_rates(&t, &p.first, &p.second);
            let active = |e: &CoupledRate<Exact>| {
                p.first.at(e.x1) && !p.first.at(e.y1) && p.second.at(e.x2) && !p.second.at(e.y2)
            };
            let a: Vec<_> = inc.coupled.iter().filter(|e| active(e)).collect();
            let b: Vec<_> = att.coupled.iter().filter(|e| active(e)).collect();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn attractive_traffic_couples_different_departures() {
        let (a, b) = (q(1, 5), q(9, 10));
        let t = traffic(a, b).table::<Exact>();
        // ξ(x)=1, ξ(x+1)=0, ζ(x+1)=1, ζ(x)=0, x+2 empty in both
        let (xi, zeta) = (c("100000"), c("010000"));
        let att = attractive_rates(&t, &xi, &zeta);
        assert_eq!(att.get(0, 2, 1, 2), b - a);
    }

    #[test]
    fn transitions_preserve_each_marginal() {
        let spec = traffic(q(2, 5), q(4, 5));
        let t = spec.table::<Exact>();
        for p in CoupledState::all(5) {
            for kind in CouplingKind::ALL {
                let moves = coupled_transitions(&t, &p, kind);
                let out_first: Exact = moves.iter().filter(|m| m.first_jump.is_some()).map(|m| m.rate).sum();
                let expected: Exact = (0..5)
                    .flat_map(|x| (0..5).map(move |y| (x, y)))
                    .filter(|&(x, y)| p.first.at(x) && !p.first.at(y))
                    .map(|(x, y)| t.gamma(&p.first, x, y))
                    .sum();
                assert_eq!(out_first, expected);
            }
        }
    }

    #[test]
    fn increasing_moves_keep_order_and_attractive_moves_shrink_discrepancies() {
        let t = traffic(q(3, 10), q(7, 10)).table::<Exact>();
        for p in CoupledState::all(5) {
            if p.order() == PairOrder::Below {
                for m in coupled_transitions(&t, &p, CouplingKind::Increasing) {
                    assert!(m.order_preserved);
                }
            }
            for m in coupled_transitions(&t, &p, CouplingKind::Attractive) {
                assert!(m.discrepancy_delta <= 0);
            }
        }
    }

    #[test]
    fn prefix_sum_path_agrees_on_traffic_and_sep() {
        for spec in [traffic(q(7, 10), q(1, 5)), make_model(ModelId::Sep, &[]).unwrap()] {
            let t = spec.table::<Exact>();
            for p in CoupledState::all(6).filter(CoupledState::is_ordered) {
                one_d_cross_check(&t, &p.first, &p.second).unwrap();
            }
        }
    }

    #[test]
    fn prefix_sum_path_agrees_on_random_gg_pairs() {
        use rand::{Rng, SeedableRng};
        let spec = make_model_positional(ModelId::GgSymmetrized, &[q(2, 1), q(1, 1), q(1, 1), q(2, 1)]).unwrap();
        let t = spec.table::<Exact>();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let hi = Configuration::from_bits(rng.gen::<u128>() & 0x3ff, 10).unwrap();
            let lo = Configuration::from_bits(hi.bits() & rng.gen::<u128>(), 10).unwrap();
            let (a, b) = if rng.gen_bool(0.5) { (lo, hi) } else { (hi, lo) };
            one_d_cross_check(&t, &a, &b).unwrap();
        }
    }

    #[test]
    fn kind_names_round_trip() {
        for k in CouplingKind::ALL {
            assert_eq!(k.name().parse::<CouplingKind>().unwrap(), k);
        }
        assert!("basic".parse::<CouplingKind>().is_err());
    }
}

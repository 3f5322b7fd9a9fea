//! Finite-range, translation-invariant jump rates `Γ_η(x, y)`.
//!
//! A [`RateSpec`] is built from a closed-form law and then tabulated: for
//! every allowed offset `d` and every occupancy pattern of the window
//! `x-K ..= x+K` (with `K = R + max|d|`) the rate is stored as an exact
//! rational. Evaluation on a configuration is a table lookup, so translation
//! invariance and finite range hold by construction.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Configuration;
use crate::scalar::{format_exact, parse_exact, Exact, Rate};

/// Largest window (in sites) that is tabulated.
pub const MAX_WINDOW: usize = 21;

/// The built-in rate families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelId {
    Sep,
    SpeedChangeIncreasing,
    SpeedChangeDecreasing,
    TwoStep,
    TwoStarStep,
    Traffic2,
    GgSymmetrized,
    CustomTable,
}

impl ModelId {
    pub const ALL: [ModelId; 8] = [
        ModelId::Sep,
        ModelId::SpeedChangeIncreasing,
        ModelId::SpeedChangeDecreasing,
        ModelId::TwoStep,
        ModelId::TwoStarStep,
        ModelId::Traffic2,
        ModelId::GgSymmetrized,
        ModelId::CustomTable,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelId::Sep => "sep",
            ModelId::SpeedChangeIncreasing => "speed_change_increasing",
            ModelId::SpeedChangeDecreasing => "speed_change_decreasing",
            ModelId::TwoStep => "two_step",
            ModelId::TwoStarStep => "two_star_step",
            ModelId::Traffic2 => "traffic2",
            ModelId::GgSymmetrized => "gg_symmetrized",
            ModelId::CustomTable => "custom_table",
        }
    }

    /// Parameter names accepted positionally, in order.
    pub fn positional(self) -> &'static [&'static str] {
        match self {
            ModelId::Sep | ModelId::TwoStarStep => &["p1", "p-1"],
            ModelId::SpeedChangeIncreasing => &["K", "q1", "q-1"],
            ModelId::SpeedChangeDecreasing => &["range"],
            ModelId::TwoStep | ModelId::CustomTable => &[],
            ModelId::Traffic2 => &["alpha", "beta"],
            ModelId::GgSymmetrized => &["alpha", "beta", "gamma", "delta"],
        }
    }

    /// Kernel prefix for models parameterized by a jump kernel.
    fn kernel_prefix(self) -> Option<char> {
        match self {
            ModelId::Sep | ModelId::TwoStarStep => Some('p'),
            ModelId::SpeedChangeIncreasing => Some('q'),
            _ => None,
        }
    }

    /// Scalar (non-kernel) parameters with their defaults.
    fn scalar_defaults(self) -> Vec<(&'static str, Exact)> {
        let q = |n: i128, d: i128| Exact::new(n, d);
        match self {
            ModelId::SpeedChangeIncreasing => vec![("K", q(1, 1))],
            ModelId::SpeedChangeDecreasing => vec![("range", q(2, 1))],
            ModelId::Traffic2 => vec![("alpha", q(1, 2)), ("beta", q(1, 2))],
            ModelId::GgSymmetrized => vec![
                ("alpha", q(2, 1)),
                ("beta", q(1, 1)),
                ("gamma", q(1, 1)),
                ("delta", q(2, 1)),
            ],
            _ => vec![],
        }
    }

    fn kernel_defaults(self) -> Vec<(i64, Exact)> {
        match self {
            ModelId::Sep | ModelId::TwoStarStep => vec![(1, Exact::one())],
            ModelId::SpeedChangeIncreasing => vec![(-1, Exact::one()), (1, Exact::one())],
            _ => vec![],
        }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        ModelId::ALL
            .into_iter()
            .find(|m| m.name() == key)
            .ok_or_else(|| Error::Parse {
                what: "model id",
                detail: format!(
                    "unknown model `{s}` (expected one of {})",
                    ModelId::ALL.map(|m| m.name()).join(", ")
                ),
            })
    }
}

/// One row of a custom rate table.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableEntry {
    pub offset: i64,
    /// Occupancies of `x-(R+|d|) ..= x+(R+|d|)`, left to right.
    pub pattern: String,
    #[serde(with = "crate::scalar::exact_text")]
    pub rate: Exact,
}

impl TableEntry {
    /// Parse `"offset, pattern, rate"`.
    pub fn parse(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.split(',').map(str::trim).collect();
        let err = |detail: String| Error::Parse { what: "table entry", detail };
        if parts.len() != 3 {
            return Err(err(format!("`{text}`: expected `offset, pattern, rate`")));
        }
        let offset: i64 = parts[0]
            .parse()
            .map_err(|_| err(format!("`{text}`: bad offset `{}`", parts[0])))?;
        if offset == 0 {
            return Err(err(format!("`{text}`: offset must be nonzero")));
        }
        if parts[1].is_empty() || !parts[1].chars().all(|c| c == '0' || c == '1') {
            return Err(err(format!("`{text}`: pattern must be a 0/1 string")));
        }
        Ok(Self { offset, pattern: parts[1].to_string(), rate: parse_exact(parts[2])? })
    }
}

impl fmt::Display for TableEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}, {}, {}", self.offset, self.pattern, format_exact(&self.rate))
    }
}

/// Closed-form rate laws. Each reads `η(x + k)` through a callback.
#[derive(Clone, Debug, PartialEq)]
enum Law {
    /// `Γ(d) = p(d)`.
    Kernel(BTreeMap<i64, Exact>),
    /// `Γ(d) = q(d) · K / u`, `u = Σ_e (1 - η(x+e)) q(e)`.
    InverseVacancySpeed { q: BTreeMap<i64, Exact>, k: Exact },
    /// `Γ(d) = 1{0<d≤ℓ} · (2ℓ - η(x)η(x+1))`.
    DecreasingSpeed { range: i64 },
    /// `Γ(d) = p(d) + Σ_a p(a) p(d-a) (1 - η(x+a))`.
    TwoStar(BTreeMap<i64, Exact>),
    /// `Γ(1) = 1`, `Γ(2) = α η(x+1) + β (1 - η(x+1))`.
    Traffic { alpha: Exact, beta: Exact },
    /// Nearest-neighbour rates selected by the (back, front) neighbours.
    Gg { alpha: Exact, beta: Exact, gamma: Exact, delta: Exact },
    Table { radius: usize, entries: BTreeMap<(i64, u64), Exact> },
}

impl Law {
    fn eval(&self, occ: &mut dyn FnMut(i64) -> bool, d: i64) -> Exact {
        let zero = Exact::zero();
        let one = Exact::one();
        let bit = |b: bool| if b { Exact::one() } else { Exact::zero() };
        match self {
            Law::Kernel(p) => p.get(&d).copied().unwrap_or(zero),
            Law::InverseVacancySpeed { q, k } => {
                let Some(qd) = q.get(&d) else { return zero };
                let mut u = Exact::zero();
                for (&e, qe) in q {
                    if !occ(e) {
                        u += qe;
                    }
                }
                if u.is_zero() {
                    zero
                } else {
                    qd * k / u
                }
            }
            Law::DecreasingSpeed { range } => {
                if d <= 0 || d > *range {
                    return zero;
                }
                let crowd = occ(0) && occ(1);
                Exact::from_integer(2 * *range as i128) - bit(crowd)
            }
            Law::TwoStar(p) => {
                let mut g = p.get(&d).copied().unwrap_or(zero);
                for (&a, pa) in p {
                    if a == d {
                        continue;
                    }
                    if let Some(pb) = p.get(&(d - a)) {
                        if !occ(a) {
                            g += pa * pb;
                        }
                    }
                }
                g
            }
            Law::Traffic { alpha, beta } => match d {
                1 => one,
                2 => {
                    if occ(1) {
                        *alpha
                    } else {
                        *beta
                    }
                }
                _ => zero,
            },
            Law::Gg { alpha, beta, gamma, delta } => {
                let (back, front) = match d {
                    1 => (occ(-1), occ(2)),
                    -1 => (occ(1), occ(-2)),
                    _ => return zero,
                };
                match (back, front) {
                    (true, false) => *alpha,
                    (false, true) => *beta,
                    (true, true) => *gamma,
                    (false, false) => *delta,
                }
            }
            Law::Table { radius, entries } => {
                let r = (*radius as i64) + d.abs();
                let mut pattern = 0u64;
                for (i, k) in (-r..=r).enumerate() {
                    if occ(k) {
                        pattern |= 1 << i;
                    }
                }
                entries.get(&(d, pattern)).copied().unwrap_or(zero)
            }
        }
    }
}

/// Tabulated rate specification.
#[derive(Clone, Debug)]
pub struct RateSpec {
    id: ModelId,
    params: Vec<(String, Exact)>,
    custom: Vec<TableEntry>,
    offsets: Vec<i64>,
    dep_radius: usize,
    reach: usize,
    /// Exact rates, `rates[offset_index][window]`.
    rates: Vec<Vec<Exact>>,
    /// Largest `|k|` read relative to `x`, per offset.
    reads: Vec<usize>,
    /// Smallest ring on which the sites read, the departure and the target
    /// of every jump are distinct.
    min_ring: usize,
}

impl PartialEq for RateSpec {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
            && self.params == other.params
            && self.custom == other.custom
            && self.offsets == other.offsets
            && self.dep_radius == other.dep_radius
    }
}

/// `traffic2(alpha=3/10, beta=7/10)`; custom tables list their entry count.
impl fmt::Display for RateSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let params: Vec<String> = self.params.iter().map(|(n, v)| format!("{n}={}", format_exact(v))).collect();
        if self.custom.is_empty() {
            write!(f, "{}({})", self.name(), params.join(", "))
        } else {
            write!(f, "{}({} entries)", self.name(), self.custom.len())
        }
    }
}

/// Serializable summary of a spec.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpecSummary {
    pub model: ModelId,
    pub params: BTreeMap<String, String>,
    pub offsets: Vec<i64>,
    pub dep_radius: usize,
    pub min_ring: usize,
}

impl RateSpec {
    fn tabulate(
        id: ModelId,
        params: Vec<(String, Exact)>,
        custom: Vec<TableEntry>,
        law: &Law,
        offsets: Vec<i64>,
        dep_radius: usize,
    ) -> Result<Self> {
        if offsets.is_empty() {
            return Err(Error::InvalidArgument("a rate spec needs at least one jump offset".into()));
        }
        let max_d = offsets.iter().map(|d| d.unsigned_abs() as usize).max().unwrap_or(0);
        let reach = dep_radius + max_d;
        let width = 2 * reach + 1;
        if width > MAX_WINDOW {
            return Err(Error::InvalidArgument(format!(
                "rate window of {width} sites exceeds the supported {MAX_WINDOW}"
            )));
        }
        let k = reach as i64;
        let mut rates = Vec::with_capacity(offsets.len());
        let mut reads = Vec::with_capacity(offsets.len());
        let lowest = offsets.iter().copied().chain([0]).min().unwrap();
        let highest = offsets.iter().copied().chain([0]).max().unwrap();
        let mut min_ring = (highest - lowest + 1) as usize;
        for &d in &offsets {
            let mut row = Vec::with_capacity(1 << width);
            let mut widest = 0usize;
            let (mut lo, mut hi) = (d.min(0), d.max(0));
            for w in 0u64..(1u64 << width) {
                let mut occ = |j: i64| {
                    widest = widest.max(j.unsigned_abs() as usize);
                    lo = lo.min(j);
                    hi = hi.max(j);
                    let i = j + k;
                    (0..width as i64).contains(&i) && (w >> i) & 1 == 1
                };
                row.push(law.eval(&mut occ, d));
            }
            rates.push(row);
            reads.push(widest);
            min_ring = min_ring.max((hi - lo + 1) as usize);
        }
        Ok(Self { id, params, custom, offsets, dep_radius, reach, rates, reads, min_ring })
    }

    pub fn id(&self) -> ModelId {
        self.id
    }

    pub fn name(&self) -> &'static str {
        self.id.name()
    }

    /// Canonical parameter list, defaults filled in.
    pub fn params(&self) -> &[(String, Exact)] {
        &self.params
    }

    pub fn param(&self, name: &str) -> Option<Exact> {
        self.params.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn custom_entries(&self) -> &[TableEntry] {
        &self.custom
    }

    /// Allowed offsets `D`, ascending.
    pub fn offsets(&self) -> &[i64] {
        &self.offsets
    }

    pub fn dep_radius(&self) -> usize {
        self.dep_radius
    }

    pub fn max_offset(&self) -> usize {
        self.reach - self.dep_radius
    }

    /// Window radius `K = R + max|d|`.
    pub fn reach(&self) -> usize {
        self.reach
    }

    /// Smallest ring on which every rate sees distinct sites: the sites its
    /// law reads, the departure site and the target.
    pub fn min_ring(&self) -> usize {
        self.min_ring
    }

    pub fn check_ring(&self, len: usize) -> Result<()> {
        if len < self.min_ring() {
            return Err(Error::RingTooSmall { len, min: self.min_ring() });
        }
        Ok(())
    }

    pub fn offset_index(&self, d: i64) -> Option<usize> {
        self.offsets.binary_search(&d).ok()
    }

    /// Index of the offset taking `x` to `y` on a ring of `len` sites.
    pub fn jump_index(&self, len: usize, x: usize, y: usize) -> Option<usize> {
        jump_index(&self.offsets, len, x, y)
    }

    /// Exact rate for offset index `i` and a radius-`K` window.
    pub fn exact_rate(&self, i: usize, window: u64) -> Exact {
        self.rates[i][window as usize]
    }

    /// `Γ_η(x, y)` without the exclusion prefactor.
    pub fn rate<T: Rate>(&self, eta: &Configuration, x: usize, y: usize) -> Result<T> {
        self.check_ring(eta.len())?;
        eta.get(x)?;
        eta.get(y)?;
        Ok(match self.jump_index(eta.len(), x, y) {
            Some(i) if x != y => T::from_exact(&self.exact_rate(i, eta.window(x, self.reach))),
            _ => T::zero(),
        })
    }

    /// Same spec with every rate multiplied by `c`.
    pub fn scaled(&self, c: Exact) -> Result<Self> {
        if !c.is_positive() {
            return Err(Error::InvalidArgument("rescaling factor must be positive".into()));
        }
        let mut out = self.clone();
        for row in &mut out.rates {
            for r in row.iter_mut() {
                *r *= c;
            }
        }
        out.params.push(("scale".into(), c));
        Ok(out)
    }

    pub fn table<T: Rate>(&self) -> RateTable<T> {
        let patterns = 1usize << (2 * self.reach + 1);
        let mut flat = Vec::with_capacity(patterns * self.offsets.len());
        for row in &self.rates {
            flat.extend(row.iter().map(T::from_exact));
        }
        RateTable { offsets: self.offsets.clone(), reach: self.reach, min_ring: self.min_ring, patterns, rates: flat }
    }

    pub fn summary(&self) -> SpecSummary {
        SpecSummary {
            model: self.id,
            params: self.params.iter().map(|(n, v)| (n.clone(), format_exact(v))).collect(),
            offsets: self.offsets.clone(),
            dep_radius: self.dep_radius,
            min_ring: self.min_ring(),
        }
    }

    /// Evaluate the rate of offset `d` on a window given as a 0/1 string
    /// centred at the departure site (length `2K+1`).
    pub fn rate_on_pattern(&self, d: i64, pattern: &str) -> Result<Exact> {
        let width = 2 * self.reach + 1;
        if pattern.len() != width {
            return Err(Error::InvalidArgument(format!(
                "pattern must have {width} sites, got {}",
                pattern.len()
            )));
        }
        let mut w = 0u64;
        for (i, ch) in pattern.chars().enumerate() {
            match ch {
                '1' => w |= 1 << i,
                '0' => {}
                _ => return Err(Error::Parse { what: "pattern", detail: pattern.into() }),
            }
        }
        Ok(self.offset_index(d).map_or(Exact::zero(), |i| self.exact_rate(i, w)))
    }
}

/// Rates converted to a working scalar, indexed for fast lookup.
#[derive(Clone, Debug)]
pub struct RateTable<T> {
    offsets: Vec<i64>,
    reach: usize,
    min_ring: usize,
    patterns: usize,
    rates: Vec<T>,
}

impl<T: Rate> RateTable<T> {
    pub fn offsets(&self) -> &[i64] {
        &self.offsets
    }

    pub fn reach(&self) -> usize {
        self.reach
    }

    pub fn min_ring(&self) -> usize {
        self.min_ring
    }

    pub fn check_ring(&self, len: usize) -> Result<()> {
        if len < self.min_ring() {
            return Err(Error::RingTooSmall { len, min: self.min_ring() });
        }
        Ok(())
    }

    pub fn offset_index(&self, d: i64) -> Option<usize> {
        self.offsets.binary_search(&d).ok()
    }

    /// Index of the offset taking `x` to `y` on a ring of `len` sites.
    #[inline]
    pub fn jump_index(&self, len: usize, x: usize, y: usize) -> Option<usize> {
        jump_index(&self.offsets, len, x, y)
    }

    /// Rate of the jump from `x` by the `i`-th offset.
    #[inline]
    pub fn by_index(&self, eta: &Configuration, x: usize, i: usize) -> &T {
        &self.rates[i * self.patterns + eta.window(x, self.reach) as usize]
    }

    /// Rate for offset index `i` on a radius-`K` window word.
    #[inline]
    pub fn by_window(&self, i: usize, window: u64) -> &T {
        &self.rates[i * self.patterns + window as usize]
    }

    /// `Γ_η(x, y)`; zero when `y - x` is not an allowed offset.
    #[inline]
    pub fn gamma(&self, eta: &Configuration, x: usize, y: usize) -> T {
        if x == y {
            return T::zero();
        }
        match self.jump_index(eta.len(), x, y) {
            Some(i) => self.by_index(eta, x, i).clone(),
            None => T::zero(),
        }
    }

    /// Target site of the `i`-th offset from `x`.
    #[inline]
    pub fn target(&self, len: usize, x: usize, i: usize) -> usize {
        (x as i64 + self.offsets[i]).rem_euclid(len as i64) as usize
    }
}

#[inline]
fn jump_index(offsets: &[i64], len: usize, x: usize, y: usize) -> Option<usize> {
    let l = len as i64;
    let diff = (y as i64 - x as i64).rem_euclid(l);
    offsets.iter().position(|&d| d.rem_euclid(l) == diff)
}

fn kernel_name(prefix: char, d: i64) -> String {
    format!("{prefix}{d}")
}

fn parse_kernel_name(prefix: char, name: &str) -> Option<i64> {
    name.strip_prefix(prefix)?.parse().ok()
}

/// Build one of the built-in models from named parameters. Missing
/// parameters take their defaults; for kernel models, giving any kernel
/// entry replaces the default kernel.
pub fn make_model(id: ModelId, params: &[(String, Exact)]) -> Result<RateSpec> {
    if id == ModelId::CustomTable {
        return Err(Error::InvalidArgument(
            "custom_table models are built from a table (use make_custom)".into(),
        ));
    }
    let mut scalars: BTreeMap<&'static str, Exact> = id.scalar_defaults().into_iter().collect();
    let mut kernel: Option<BTreeMap<i64, Exact>> = None;
    for (name, value) in params {
        if value.is_negative() {
            return Err(Error::NegativeParameter { name: name.clone(), value: format_exact(value) });
        }
        if let Some(slot) = scalars.keys().find(|k| **k == name.as_str()).copied() {
            scalars.insert(slot, *value);
            continue;
        }
        match id.kernel_prefix().and_then(|p| parse_kernel_name(p, name)) {
            Some(0) => {
                return Err(Error::InvalidArgument(format!("kernel entry `{name}` has offset 0")))
            }
            Some(d) => {
                kernel.get_or_insert_with(BTreeMap::new).insert(d, *value);
            }
            None => {
                return Err(Error::InvalidArgument(format!(
                    "model {id} has no parameter `{name}` (accepted: {})",
                    accepted_names(id)
                )))
            }
        }
    }
    let kernel: BTreeMap<i64, Exact> = kernel
        .unwrap_or_else(|| id.kernel_defaults().into_iter().collect())
        .into_iter()
        .filter(|(_, v)| !v.is_zero())
        .collect();

    let mut canonical: Vec<(String, Exact)> =
        scalars.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    if let Some(prefix) = id.kernel_prefix() {
        if kernel.is_empty() {
            return Err(Error::InvalidArgument(format!("model {id} needs a nonzero kernel")));
        }
        canonical.extend(kernel.iter().map(|(d, v)| (kernel_name(prefix, *d), *v)));
    }
    let support_reach = |k: &BTreeMap<i64, Exact>, offsets: &[i64]| {
        let max_e = k.keys().map(|e| e.unsigned_abs()).max().unwrap_or(0);
        let min_d = offsets.iter().map(|d| d.unsigned_abs()).min().unwrap_or(0);
        max_e.saturating_sub(min_d) as usize
    };

    let s = |name: &str| scalars[name];
    let (law, offsets, radius) = match id {
        ModelId::Sep => {
            let offsets: Vec<i64> = kernel.keys().copied().collect();
            (Law::Kernel(kernel), offsets, 0)
        }
        ModelId::SpeedChangeIncreasing => {
            let offsets: Vec<i64> = kernel.keys().copied().collect();
            let radius = support_reach(&kernel, &offsets);
            (Law::InverseVacancySpeed { q: kernel, k: s("K") }, offsets, radius)
        }
        ModelId::SpeedChangeDecreasing => {
            let range = s("range");
            if !range.is_integer() || range < Exact::one() || range > Exact::from_integer(6) {
                return Err(Error::InvalidArgument(format!(
                    "range must be an integer in 1..=6, got {}",
                    format_exact(&range)
                )));
            }
            let r = range.to_integer() as i64;
            (Law::DecreasingSpeed { range: r }, (1..=r).collect(), 0)
        }
        ModelId::TwoStep => (
            Law::Traffic { alpha: Exact::one(), beta: Exact::zero() },
            vec![1, 2],
            0,
        ),
        ModelId::TwoStarStep => {
            let mut offsets: Vec<i64> = kernel.keys().copied().collect();
            for a in kernel.keys() {
                for b in kernel.keys() {
                    if a + b != 0 {
                        offsets.push(a + b);
                    }
                }
            }
            offsets.sort_unstable();
            offsets.dedup();
            let radius = support_reach(&kernel, &offsets);
            (Law::TwoStar(kernel), offsets, radius)
        }
        ModelId::Traffic2 => {
            (Law::Traffic { alpha: s("alpha"), beta: s("beta") }, vec![1, 2], 0)
        }
        ModelId::GgSymmetrized => (
            Law::Gg { alpha: s("alpha"), beta: s("beta"), gamma: s("gamma"), delta: s("delta") },
            vec![-1, 1],
            1,
        ),
        ModelId::CustomTable => unreachable!(),
    };
    RateSpec::tabulate(id, canonical, Vec::new(), &law, offsets, radius)
}

/// Build a model from values given in the model's positional order.
pub fn make_model_positional(id: ModelId, values: &[Exact]) -> Result<RateSpec> {
    let names = id.positional();
    if values.len() > names.len() {
        return Err(Error::InvalidArgument(format!(
            "model {id} takes at most {} positional parameters ({}), got {}",
            names.len(),
            names.join(", "),
            values.len()
        )));
    }
    let named: Vec<(String, Exact)> =
        names.iter().zip(values).map(|(n, v)| (n.to_string(), *v)).collect();
    make_model(id, &named)
}

/// Build a spec from an explicit `(offset, pattern) → rate` table. Patterns
/// not listed have rate 0. Negative rates are accepted here and flagged by
/// [`validate_spec`].
pub fn make_custom(radius: usize, entries: &[TableEntry]) -> Result<RateSpec> {
    let mut table = BTreeMap::new();
    let mut offsets = Vec::new();
    for e in entries {
        if e.offset == 0 {
            return Err(Error::InvalidArgument("table entry with offset 0".into()));
        }
        let width = 2 * (radius + e.offset.unsigned_abs() as usize) + 1;
        if e.pattern.len() != width {
            return Err(Error::InvalidArgument(format!(
                "entry `{e}`: pattern for offset {} must cover {width} sites",
                e.offset
            )));
        }
        let mut bits = 0u64;
        for (i, ch) in e.pattern.chars().enumerate() {
            match ch {
                '1' => bits |= 1 << i,
                '0' => {}
                _ => return Err(Error::Parse { what: "pattern", detail: e.pattern.clone() }),
            }
        }
        if table.insert((e.offset, bits), e.rate).is_some() {
            return Err(Error::InvalidArgument(format!("duplicate table entry `{e}`")));
        }
        offsets.push(e.offset);
    }
    offsets.sort_unstable();
    offsets.dedup();
    let mut canonical = entries.to_vec();
    canonical.sort_by(|a, b| (a.offset, &a.pattern).cmp(&(b.offset, &b.pattern)));
    let law = Law::Table { radius, entries: table };
    RateSpec::tabulate(
        ModelId::CustomTable,
        vec![("radius".into(), Exact::from_integer(radius as i128))],
        canonical,
        &law,
        offsets,
        radius,
    )
}

fn accepted_names(id: ModelId) -> String {
    let mut names: Vec<String> = id.scalar_defaults().iter().map(|(n, _)| n.to_string()).collect();
    if let Some(p) = id.kernel_prefix() {
        names.push(format!("{p}<offset>"));
    }
    if names.is_empty() {
        "none".into()
    } else {
        names.join(", ")
    }
}

/// Default instance of every built-in model.
pub fn zoo() -> Vec<RateSpec> {
    ModelId::ALL
        .into_iter()
        .filter(|&m| m != ModelId::CustomTable)
        .map(|m| make_model(m, &[]).expect("defaults are valid"))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateIssue {
    Negative,
    NonFinite,
    /// The law read a site outside `R + |d|`.
    OutsideWindow,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RateProblem {
    pub offset: i64,
    /// Window pattern, `x-K ..= x+K` left to right.
    pub pattern: String,
    pub value: String,
    pub issue: RateIssue,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub valid: bool,
    /// `sup_η Σ_y Γ_η(x, y)`.
    pub sup_outgoing: f64,
    /// `Σ_d sup_η Γ_η(y - d, y)`, an upper bound on incoming rates.
    pub sup_incoming: f64,
    pub problems: Vec<RateProblem>,
}

/// Check every tabulated rate for finiteness and nonnegativity and report
/// the sup-sums that bound the total jump intensity.
pub fn validate_spec(spec: &RateSpec) -> ValidationReport {
    let width = 2 * spec.reach + 1;
    let mut problems = Vec::new();
    let pattern_str = |w: u64| -> String {
        (0..width).map(|i| if (w >> i) & 1 == 1 { '1' } else { '0' }).collect()
    };
    for (i, &d) in spec.offsets.iter().enumerate() {
        if spec.reads[i] > spec.dep_radius + d.unsigned_abs() as usize {
            problems.push(RateProblem {
                offset: d,
                pattern: String::new(),
                value: format!("reads |k| = {}", spec.reads[i]),
                issue: RateIssue::OutsideWindow,
            });
        }
        for (w, r) in spec.rates[i].iter().enumerate() {
            if r.is_negative() {
                problems.push(RateProblem {
                    offset: d,
                    pattern: pattern_str(w as u64),
                    value: format_exact(r),
                    issue: RateIssue::Negative,
                });
            } else if !Rate::as_f64(r).is_finite() {
                problems.push(RateProblem {
                    offset: d,
                    pattern: pattern_str(w as u64),
                    value: format_exact(r),
                    issue: RateIssue::NonFinite,
                });
            }
        }
    }
    let n = 1usize << width;
    let sup_outgoing = (0..n)
        .map(|w| spec.rates.iter().map(|row| row[w]).fold(Exact::zero(), |a, b| a + b))
        .max()
        .unwrap_or_else(Exact::zero);
    let sup_incoming = spec
        .rates
        .iter()
        .map(|row| row.iter().copied().max().unwrap_or_else(Exact::zero))
        .fold(Exact::zero(), |a, b| a + b);
    ValidationReport {
        valid: problems.is_empty(),
        sup_outgoing: Rate::as_f64(&sup_outgoing),
        sup_incoming: Rate::as_f64(&sup_incoming),
        problems,
    }
}

/// Greek letters accepted in place of the spelled-out parameter names.
fn param_alias(name: &str) -> &str {
    match name {
        "α" => "alpha",
        "β" => "beta",
        "γ" => "gamma",
        "δ" => "delta",
        other => other,
    }
}

/// Parse `name=value` pairs or bare positional values (not mixed).
pub fn parse_params(id: ModelId, items: &[String]) -> Result<Vec<(String, Exact)>> {
    let mut named = Vec::new();
    let mut positional = Vec::new();
    for item in items.iter().flat_map(|s| s.split([',', ' ']).filter(|t| !t.is_empty())) {
        match item.split_once('=') {
            Some((k, v)) => named.push((param_alias(k.trim()).to_string(), parse_exact(v)?)),
            None => positional.push(parse_exact(item)?),
        }
    }
    if !positional.is_empty() && !named.is_empty() {
        return Err(Error::InvalidArgument(
            "mix of positional and named parameters".into(),
        ));
    }
    if positional.is_empty() {
        return Ok(named);
    }
    let names = id.positional();
    if positional.len() > names.len() {
        return Err(Error::InvalidArgument(format!(
            "model {id} takes at most {} positional parameters ({}), got {}",
            names.len(),
            if names.is_empty() { "none".to_string() } else { names.join(", ") },
            positional.len()
        )));
    }
    Ok(names.iter().map(|n| n.to_string()).zip(positional).collect())
}

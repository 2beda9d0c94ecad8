//! Non-crossing partitions and exact moment/cumulant combinatorics.
//!
//! Single-variable transforms use the functional recursion
//! `m_n = Σ_s κ_s [z^{n-s}] M(z)^s`, which needs no enumeration and works for
//! any [`Coefficient`] type. Two-face tables are reduced to the word
//! `ℓ…ℓ r…r` and expanded over non-crossing partitions; the block-type
//! counts of each word are computed once and cached.

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Zero};
use std::collections::HashMap;
use std::fmt::Debug;
use std::ops::{Add, Mul, Sub};
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};

/// Exact rational scalar used by the combinatorial routines.
pub type Rational = BigRational;

/// Default cutoff for two-face tables.
pub const DEFAULT_ORDER: usize = 12;

/// Largest size accepted by partition enumeration.
pub const MAX_NC_ORDER: usize = 14;

/// Largest order accepted by the one-variable series recursion.
pub const MAX_SERIES_ORDER: usize = 512;

/// Ring elements that moments and cumulants can take values in.
pub trait Coefficient:
    Clone + Debug + Zero + One + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Send + Sync
{
    /// Embeds a non-negative integer.
    fn from_count(c: u64) -> Self;
}

impl Coefficient for Rational {
    fn from_count(c: u64) -> Self {
        BigRational::from_integer(BigInt::from(c))
    }
}

impl Coefficient for f64 {
    fn from_count(c: u64) -> Self {
        c as f64
    }
}

impl Coefficient for Complex64 {
    fn from_count(c: u64) -> Self {
        Complex64::new(c as f64, 0.0)
    }
}

/// Builds the rational `num / den`.
pub fn ratio(num: i64, den: i64) -> Rational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Builds the integer `v` as a rational.
pub fn int(v: i64) -> Rational {
    BigRational::from_integer(BigInt::from(v))
}

/// Converts an exact rational to the nearest double.
pub fn to_f64(q: &Rational) -> f64 {
    use num_traits::ToPrimitive;
    q.to_f64().unwrap_or(f64::NAN)
}

/// Non-crossing partition of `{1..n}`, blocks listed by smallest element.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NonCrossingPartition {
    blocks: Vec<Vec<usize>>,
}

impl NonCrossingPartition {
    /// Validates a list of 1-based blocks.
    pub fn new(n: usize, blocks: Vec<Vec<usize>>) -> Result<Self> {
        let mut labels = vec![usize::MAX; n];
        for (b, block) in blocks.iter().enumerate() {
            if block.is_empty() {
                return Err(Error::InvalidArgument("empty block".into()));
            }
            for &i in block {
                if i == 0 || i > n || labels[i - 1] != usize::MAX {
                    return Err(Error::InvalidArgument(format!("element {i} is out of range or repeated")));
                }
                labels[i - 1] = b;
            }
        }
        if labels.contains(&usize::MAX) {
            return Err(Error::InvalidArgument("blocks do not cover the ground set".into()));
        }
        if !labels_non_crossing(&labels) {
            return Err(Error::InvalidArgument("partition has a crossing".into()));
        }
        let labels: Vec<u8> = canonical_labels(&labels);
        Ok(Self::from_labels(&labels))
    }

    fn from_labels(labels: &[u8]) -> Self {
        let count = labels.iter().map(|l| *l as usize + 1).max().unwrap_or(0);
        let mut blocks = vec![Vec::new(); count];
        for (i, l) in labels.iter().enumerate() {
            blocks[*l as usize].push(i + 1);
        }
        Self { blocks }
    }

    /// Blocks as sorted 1-based index lists.
    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    /// Size of the ground set.
    pub fn len(&self) -> usize {
        self.blocks.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }
}

fn canonical_labels(labels: &[usize]) -> Vec<u8> {
    let mut map = HashMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len() as u8;
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

fn labels_non_crossing(labels: &[usize]) -> bool {
    let n = labels.len();
    for a in 0..n {
        for b in a + 1..n {
            if labels[b] == labels[a] {
                continue;
            }
            for c in b + 1..n {
                if labels[c] != labels[a] {
                    continue;
                }
                if (c + 1..n).any(|d| labels[d] == labels[b]) {
                    return false;
                }
            }
        }
    }
    true
}

/// Visits every non-crossing partition of `{1..n}` as a label array:
/// `labels[i]` is the block of element `i + 1`, blocks numbered by first
/// appearance. The second argument is the number of blocks.
pub fn for_each_nc<F: FnMut(&[u8], usize)>(n: usize, mut visit: F) -> Result<()> {
    if n == 0 || n > MAX_NC_ORDER {
        return Err(Error::OrderOverflow { requested: n, limit: MAX_NC_ORDER });
    }
    let mut labels = vec![0u8; n];
    let mut open = Vec::with_capacity(n);
    walk(0, 0, &mut labels, &mut open, &mut visit);
    Ok(())
}

// `open` holds the blocks that may still receive elements, most recent last.
// Joining a block closes every block opened after it.
fn walk<F: FnMut(&[u8], usize)>(i: usize, count: u8, labels: &mut [u8], open: &mut Vec<u8>, visit: &mut F) {
    if i == labels.len() {
        visit(labels, count as usize);
        return;
    }
    labels[i] = count;
    open.push(count);
    walk(i + 1, count + 1, labels, open, visit);
    open.pop();
    for depth in (0..open.len()).rev() {
        let b = open[depth];
        let closed: Vec<u8> = open.drain(depth + 1..).collect();
        labels[i] = b;
        walk(i + 1, count, labels, open, visit);
        open.extend(closed);
    }
}

/// All non-crossing partitions of `{1..n}`.
pub fn enumerate_nc(n: usize) -> Result<Vec<NonCrossingPartition>> {
    let mut out = Vec::new();
    for_each_nc(n, |labels, _| out.push(NonCrossingPartition::from_labels(labels)))?;
    Ok(out)
}

fn check_series_order(n: usize) -> Result<()> {
    if n > MAX_SERIES_ORDER {
        return Err(Error::OrderOverflow { requested: n, limit: MAX_SERIES_ORDER });
    }
    Ok(())
}

/// Coefficients of `M(z)^s` truncated at `z^len`, for `s = 0..=len`.
fn series_powers<T: Coefficient>(m: &[T], len: usize) -> Vec<Vec<T>> {
    let mut base = vec![T::zero(); len + 1];
    base[0] = T::one();
    for (k, v) in m.iter().take(len).enumerate() {
        base[k + 1] = v.clone();
    }
    let mut powers = Vec::with_capacity(len + 1);
    let mut cur = vec![T::zero(); len + 1];
    cur[0] = T::one();
    powers.push(cur.clone());
    for _ in 0..len {
        let mut next = vec![T::zero(); len + 1];
        for (i, a) in cur.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in base.iter().enumerate().take(len + 1 - i) {
                next[i + j] = next[i + j].clone() + a.clone() * b.clone();
            }
        }
        powers.push(next.clone());
        cur = next;
    }
    powers
}

/// Free cumulants `κ_1..κ_n` from moments `m_1..m_n`.
pub fn moments_to_cumulants<T: Coefficient>(m: &[T]) -> Result<Vec<T>> {
    let n = m.len();
    check_series_order(n)?;
    let powers = series_powers(m, n);
    let mut k: Vec<T> = Vec::with_capacity(n);
    for order in 1..=n {
        let mut acc = m[order - 1].clone();
        for (s, ks) in k.iter().enumerate() {
            let s = s + 1;
            acc = acc - ks.clone() * powers[s][order - s].clone();
        }
        k.push(acc);
    }
    Ok(k)
}

/// Moments `m_1..m_n` from free cumulants `κ_1..κ_n`.
pub fn cumulants_to_moments<T: Coefficient>(k: &[T]) -> Result<Vec<T>> {
    let n = k.len();
    check_series_order(n)?;
    let mut m: Vec<T> = Vec::with_capacity(n);
    for order in 1..=n {
        // Only m_1..m_{order-1} enter [z^{order-s}] M^s for s ≥ 1.
        let powers = series_powers(&m, order);
        let mut acc = T::zero();
        for (s, ks) in k.iter().take(order).enumerate() {
            let s = s + 1;
            acc = acc + ks.clone() * powers[s][order - s].clone();
        }
        m.push(acc);
    }
    Ok(m)
}

/// Which side of a two-faced pair a variable acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Face {
    Left,
    Right,
}

/// Evaluates `κ_{n,m}` of a commuting pair as the free cumulant of the word
/// with `n` left letters followed by `m` right letters.
pub fn reduce_bifree_cumulant<T, F>(n: usize, m: usize, free_cumulant: F) -> Result<T>
where
    F: Fn(&[Face]) -> T,
{
    if n + m == 0 {
        return Err(Error::InvalidArgument("cumulant order must be positive".into()));
    }
    let mut word = vec![Face::Left; n];
    word.extend(std::iter::repeat_n(Face::Right, m));
    Ok(free_cumulant(&word))
}

fn check_table_order(order: usize) -> Result<()> {
    if order == 0 || order > MAX_NC_ORDER {
        return Err(Error::OrderOverflow { requested: order, limit: MAX_NC_ORDER });
    }
    Ok(())
}

/// Two-face cumulants `κ_{n,m}` for `1 ≤ n + m ≤ order`.
///
/// `κ_{n,0}` is the left marginal cumulant, `κ_{0,m}` the right one.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulantTable<T = Rational> {
    order: usize,
    // entries[n][m], with entries[0][0] unused.
    entries: Vec<Vec<T>>,
}

impl<T: Coefficient> CumulantTable<T> {
    /// Table with every entry zero.
    pub fn zero(order: usize) -> Result<Self> {
        check_table_order(order)?;
        let entries = (0..=order).map(|n| vec![T::zero(); order + 1 - n]).collect();
        Ok(Self { order, entries })
    }

    /// Table filled by `f(n, m)`.
    pub fn from_fn<F: FnMut(usize, usize) -> T>(order: usize, mut f: F) -> Result<Self> {
        let mut t = Self::zero(order)?;
        for n in 0..=order {
            for m in 0..=order - n {
                if n + m > 0 {
                    t.entries[n][m] = f(n, m);
                }
            }
        }
        Ok(t)
    }

    /// Cumulants of a bi-free Gaussian pair with covariance `(a, c; c, b)`.
    pub fn bifree_gaussian(a: T, b: T, c: T, order: usize) -> Result<Self> {
        Self::from_fn(order.max(2), |n, m| match (n, m) {
            (2, 0) => a.clone(),
            (0, 2) => b.clone(),
            (1, 1) => c.clone(),
            _ => T::zero(),
        })
    }

    /// Bi-free Poisson pair: `κ_{n,m} = ℓ` when `n > 0`, `r` when `n = 0`.
    pub fn free_poisson_pair(l: T, r: T, order: usize) -> Result<Self> {
        Self::from_fn(order, |n, _| if n > 0 { l.clone() } else { r.clone() })
    }

    /// Cumulants of `(X, X + Y)` for free `X`, `Y` with one-variable
    /// cumulants `kx` and `ky` listed from order 1.
    pub fn increment_pair(kx: &[T], ky: &[T], order: usize) -> Result<Self> {
        if kx.len() < order || ky.len() < order {
            return Err(Error::InvalidArgument(format!("need cumulants up to order {order}")));
        }
        Self::from_fn(order, |n, m| {
            let s = n + m - 1;
            if n > 0 {
                kx[s].clone()
            } else {
                kx[s].clone() + ky[s].clone()
            }
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// `κ_{n,m}`; indices beyond the cutoff are rejected.
    pub fn get(&self, n: usize, m: usize) -> Result<T> {
        if n + m == 0 {
            return Err(Error::InvalidArgument("cumulant order must be positive".into()));
        }
        if n + m > self.order {
            return Err(Error::OrderOverflow { requested: n + m, limit: self.order });
        }
        Ok(self.entries[n][m].clone())
    }

    pub fn set(&mut self, n: usize, m: usize, value: T) -> Result<()> {
        self.get(n, m)?;
        self.entries[n][m] = value;
        Ok(())
    }

    /// Left marginal cumulants `κ_1..κ_order`.
    pub fn left(&self) -> Vec<T> {
        (1..=self.order).map(|n| self.entries[n][0].clone()).collect()
    }

    /// Right marginal cumulants.
    pub fn right(&self) -> Vec<T> {
        (1..=self.order).map(|m| self.entries[0][m].clone()).collect()
    }

    /// `(n, m, κ_{n,m})` for every `n, m ≥ 1`.
    pub fn mixed(&self) -> Vec<(usize, usize, T)> {
        let mut out = Vec::new();
        for n in 1..self.order {
            for m in 1..=self.order - n {
                out.push((n, m, self.entries[n][m].clone()));
            }
        }
        out
    }

    /// Entrywise sum, the table of a sum of bi-free pairs.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.order != other.order {
            return Err(Error::InvalidArgument("tables have different cutoffs".into()));
        }
        Self::from_fn(self.order, |n, m| self.entries[n][m].clone() + other.entries[n][m].clone())
    }

    pub fn map<U: Coefficient, F: Fn(&T) -> U>(&self, f: F) -> CumulantTable<U> {
        CumulantTable {
            order: self.order,
            entries: self.entries.iter().map(|row| row.iter().map(&f).collect()).collect(),
        }
    }
}

impl CumulantTable<Rational> {
    pub fn to_f64(&self) -> CumulantTable<f64> {
        self.map(to_f64)
    }
}

/// Joint moments `τ(X^n Y^m)` for `0 ≤ n + m ≤ order`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentTable<T = Rational> {
    order: usize,
    entries: Vec<Vec<T>>,
}

impl<T: Coefficient> MomentTable<T> {
    /// Builds a table from `f(n, m)`; the `(0, 0)` entry is always 1.
    pub fn from_fn<F: FnMut(usize, usize) -> T>(order: usize, mut f: F) -> Result<Self> {
        check_table_order(order)?;
        let entries = (0..=order)
            .map(|n| (0..=order - n).map(|m| if n + m == 0 { T::one() } else { f(n, m) }).collect())
            .collect();
        Ok(Self { order, entries })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn get(&self, n: usize, m: usize) -> Result<T> {
        if n + m > self.order {
            return Err(Error::OrderOverflow { requested: n + m, limit: self.order });
        }
        Ok(self.entries[n][m].clone())
    }

    pub fn map<U: Coefficient, F: Fn(&T) -> U>(&self, f: F) -> MomentTable<U> {
        MomentTable {
            order: self.order,
            entries: self.entries.iter().map(|row| row.iter().map(&f).collect()).collect(),
        }
    }
}

impl MomentTable<Rational> {
    pub fn to_f64(&self) -> MomentTable<f64> {
        self.map(to_f64)
    }
}

/// Sorted multiset of block types `(left count, right count)`.
type Signature = Vec<(u8, u8)>;

/// For each left count `n ≤ k`, the block-type signatures of `NC(k)` on
/// the word with `n` left letters followed by `k − n` right letters.
type SignatureCounts = Vec<Vec<(Signature, u64)>>;

fn signature_counts(k: usize) -> Result<Arc<SignatureCounts>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<SignatureCounts>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(hit) = cache.lock().expect("signature cache poisoned").get(&k) {
        return Ok(hit.clone());
    }
    let mut maps: Vec<HashMap<Signature, u64>> = vec![HashMap::new(); k + 1];
    let mut left = vec![0u8; k];
    let mut right = vec![0u8; k];
    for_each_nc(k, |labels, count| {
        left[..count].fill(0);
        right[..count].fill(0);
        for l in labels {
            right[*l as usize] += 1;
        }
        for n in 0..=k {
            if n > 0 {
                let b = labels[n - 1] as usize;
                left[b] += 1;
                right[b] -= 1;
            }
            let mut sig: Signature = (0..count).map(|b| (left[b], right[b])).collect();
            sig.sort_unstable();
            *maps[n].entry(sig).or_insert(0) += 1;
        }
    })?;
    let counts: SignatureCounts = maps.into_iter().map(|m| m.into_iter().collect()).collect();
    let counts = Arc::new(counts);
    cache.lock().expect("signature cache poisoned").insert(k, counts.clone());
    Ok(counts)
}

fn signature_product<T: Coefficient>(sig: &Signature, count: u64, entries: &[Vec<T>]) -> T {
    sig.iter()
        .fold(T::from_count(count), |acc, (a, b)| acc * entries[*a as usize][*b as usize].clone())
}

/// Joint moments of a commuting pair from its two-face cumulants.
pub fn joint_moments_from_table<T: Coefficient>(t: &CumulantTable<T>) -> Result<MomentTable<T>> {
    let order = t.order;
    let mut entries: Vec<Vec<T>> = (0..=order).map(|n| vec![T::zero(); order + 1 - n]).collect();
    entries[0][0] = T::one();
    for k in 1..=order {
        let counts = signature_counts(k)?;
        for (n, sigs) in counts.iter().enumerate() {
            let mut acc = T::zero();
            for (sig, c) in sigs {
                acc = acc + signature_product(sig, *c, &t.entries);
            }
            entries[n][k - n] = acc;
        }
    }
    Ok(MomentTable { order, entries })
}

/// Two-face cumulants from joint moments; inverse of
/// [`joint_moments_from_table`].
pub fn table_from_joint_moments<T: Coefficient>(mt: &MomentTable<T>) -> Result<CumulantTable<T>> {
    let order = mt.order;
    let mut t = CumulantTable::<T>::zero(order)?;
    for k in 1..=order {
        let counts = signature_counts(k)?;
        for (n, sigs) in counts.iter().enumerate() {
            let m = k - n;
            let mut acc = mt.entries[n][m].clone();
            for (sig, c) in sigs {
                if sig.len() > 1 {
                    acc = acc - signature_product(sig, *c, &t.entries);
                }
            }
            t.entries[n][m] = acc;
        }
    }
    Ok(t)
}

fn word_cumulants<T: Coefficient>(mom1: &[T], mom2: &[T], word: &[u8]) -> Result<[Vec<T>; 2]> {
    let mut need = [0usize; 2];
    for w in word {
        match w {
            1 | 2 => need[(*w - 1) as usize] += 1,
            other => return Err(Error::InvalidArgument(format!("word letter {other} is not 1 or 2"))),
        }
    }
    for (i, (mom, n)) in [mom1, mom2].iter().zip(need).enumerate() {
        if mom.len() < n {
            return Err(Error::InvalidArgument(format!("element {} needs {n} moments", i + 1)));
        }
    }
    Ok([moments_to_cumulants(&mom1[..need[0]])?, moments_to_cumulants(&mom2[..need[1]])?])
}

/// Moment of a word in two free elements given their moment sequences.
pub fn mixed_moments_free<T: Coefficient>(mom1: &[T], mom2: &[T], word: &[u8]) -> Result<T> {
    if word.is_empty() {
        return Ok(T::one());
    }
    let kappa = word_cumulants(mom1, mom2, word)?;
    let mut total = T::zero();
    let mut colour = vec![0u8; word.len()];
    let mut size = vec![0usize; word.len()];
    for_each_nc(word.len(), |labels, count| {
        colour[..count].fill(0);
        size[..count].fill(0);
        for (l, w) in labels.iter().zip(word) {
            let b = *l as usize;
            if colour[b] != 0 && colour[b] != *w {
                return;
            }
            colour[b] = *w;
            size[b] += 1;
        }
        let term = (0..count).fold(T::one(), |acc, b| {
            acc * kappa[(colour[b] - 1) as usize][size[b] - 1].clone()
        });
        total = total.clone() + term;
    })?;
    Ok(total)
}

/// Free cumulant of a word in two free elements, computed from the mixed
/// moments by Möbius inversion over non-crossing partitions.
pub fn free_cumulant_of_word<T: Coefficient>(mom1: &[T], mom2: &[T], word: &[u8]) -> Result<T> {
    if word.is_empty() || word.len() > MAX_NC_ORDER {
        return Err(Error::OrderOverflow { requested: word.len(), limit: MAX_NC_ORDER });
    }
    word_cumulants(mom1, mom2, word)?;
    let mut memo = HashMap::new();
    word_cumulant_rec(mom1, mom2, word, &mut memo)
}

fn word_cumulant_rec<T: Coefficient>(
    mom1: &[T],
    mom2: &[T],
    word: &[u8],
    memo: &mut HashMap<Vec<u8>, T>,
) -> Result<T> {
    if let Some(v) = memo.get(word) {
        return Ok(v.clone());
    }
    let mut partitions = Vec::new();
    for_each_nc(word.len(), |labels, count| {
        if count > 1 {
            partitions.push((labels.to_vec(), count));
        }
    })?;
    let mut acc = mixed_moments_free(mom1, mom2, word)?;
    for (labels, count) in partitions {
        let mut term = T::one();
        for b in 0..count {
            let sub: Vec<u8> = labels.iter().zip(word).filter(|(l, _)| **l as usize == b).map(|(_, w)| *w).collect();
            term = term * word_cumulant_rec(mom1, mom2, &sub, memo)?;
        }
        acc = acc - term;
    }
    memo.insert(word.to_vec(), acc.clone());
    Ok(acc)
}

fn exact_sqrt(n: u64) -> Option<u64> {
    let r = (n as f64).sqrt().round() as u64;
    (r.saturating_sub(1)..=r + 1).find(|s| s * s == n)
}

fn check_centred<T: Coefficient>(t: &CumulantTable<T>) -> Result<()> {
    if t.entries[1][0].is_zero() && t.entries[0][1].is_zero() {
        Ok(())
    } else {
        Err(Error::NotCentred)
    }
}

/// Table of `N^{-1/2} Σ` of `N` bi-free copies of a centred pair:
/// `κ_{n,m} ↦ N^{1-(n+m)/2} κ_{n,m}`. Exact scaling needs `N` to be a
/// perfect square.
pub fn clt_scaled_table(t: &CumulantTable<Rational>, copies: u64) -> Result<CumulantTable<Rational>> {
    check_centred(t)?;
    let root = exact_sqrt(copies)
        .filter(|r| *r > 0)
        .ok_or_else(|| Error::InvalidArgument(format!("{copies} is not a positive perfect square")))?;
    let root = Rational::from_count(root);
    CumulantTable::from_fn(t.order, |n, m| {
        let k = n + m;
        let v = t.entries[n][m].clone();
        if k <= 2 {
            v
        } else {
            let mut d = Rational::one();
            for _ in 0..k - 2 {
                d *= root.clone();
            }
            v / d
        }
    })
}

/// Floating-point version of [`clt_scaled_table`] for arbitrary `N`.
pub fn clt_scaled_table_f64(t: &CumulantTable<f64>, copies: f64) -> Result<CumulantTable<f64>> {
    check_centred(t)?;
    if !(copies >= 1.0) {
        return Err(Error::InvalidArgument("number of copies must be at least 1".into()));
    }
    CumulantTable::from_fn(t.order, |n, m| {
        t.entries[n][m] * copies.powf(1.0 - (n + m) as f64 / 2.0)
    })
}

/// Limit of [`clt_scaled_table`] as `N → ∞`: only second-order entries survive.
pub fn clt_limit_table<T: Coefficient>(t: &CumulantTable<T>) -> Result<CumulantTable<T>> {
    check_centred(t)?;
    CumulantTable::from_fn(t.order, |n, m| if n + m == 2 { t.entries[n][m].clone() } else { T::zero() })
}

//! Symbolic bookkeeping for the Kerr interaction Σ a†_n a†_q a_m a_p over
//! modes |l| ≤ K with m + p = n + q.
//!
//! A monomial is one ordered index tuple (n, q, m, p); this is the convention
//! under which the count is (2M³ + M)/3 with M = 2K + 1. Operator identities
//! (cancellations in commutators) are decided on normal-ordered products with
//! sorted creator and annihilator multisets and exact rational coefficients,
//! in units of the common prefactor ħg0.

use num_rational::Rational64;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use thiserror::Error;

/// Largest truncation accepted for symbolic work.
pub const MAX_K: u32 = 6;

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("K = {0} exceeds the symbolic cap {MAX_K}")]
    TooLarge(u32),
    #[error("mode {l} outside [-{k}, {k}]")]
    Mode { l: i32, k: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn check(k: u32, l: Option<i32>) -> Result<(), AuditError> {
    if k > MAX_K {
        return Err(AuditError::TooLarge(k));
    }
    if let Some(l) = l {
        if l.unsigned_abs() > k {
            return Err(AuditError::Mode { l, k });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Tag {
    Spm,
    Cpm,
    Fwm,
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tag::Spm => "SPM",
            Tag::Cpm => "CPM",
            Tag::Fwm => "FWM",
        })
    }
}

/// a†_n a†_q a_m a_p.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Monomial {
    pub creators: [i32; 2],
    pub annihilators: [i32; 2],
    pub tag: Tag,
}

fn sorted2(x: [i32; 2]) -> [i32; 2] {
    if x[0] <= x[1] {
        x
    } else {
        [x[1], x[0]]
    }
}

/// SPM when all four indices agree, CPM when both sides hold the same two
/// distinct modes, FWM otherwise.
pub fn tag_of(creators: [i32; 2], annihilators: [i32; 2]) -> Tag {
    let (c, a) = (sorted2(creators), sorted2(annihilators));
    if c[0] == c[1] && c == a {
        Tag::Spm
    } else if c == a {
        Tag::Cpm
    } else {
        Tag::Fwm
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [n, q] = self.creators;
        let [m, p] = self.annihilators;
        write!(f, "a†_{n} a†_{q} a_{m} a_{p} [{}]", self.tag)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MonomialSet {
    pub k: u32,
    pub monomials: Vec<Monomial>,
    pub counts: BTreeMap<Tag, usize>,
}

impl MonomialSet {
    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn write_text<W: Write>(&self, mut w: W) -> Result<(), AuditError> {
        for m in &self.monomials {
            writeln!(w, "{m}")?;
        }
        Ok(())
    }
}

pub fn enumerate_monomials(k: u32) -> Result<MonomialSet, AuditError> {
    check(k, None)?;
    let k = k as i32;
    let mut monomials = Vec::new();
    let mut counts = BTreeMap::new();
    for n in -k..=k {
        for q in -k..=k {
            for m in -k..=k {
                let p = n + q - m;
                if p.abs() > k {
                    continue;
                }
                let tag = tag_of([n, q], [m, p]);
                *counts.entry(tag).or_insert(0) += 1;
                monomials.push(Monomial {
                    creators: [n, q],
                    annihilators: [m, p],
                    tag,
                });
            }
        }
    }
    Ok(MonomialSet {
        k: k as u32,
        monomials,
        counts,
    })
}

/// (2M³ + M)/3 with M = 2K + 1.
pub fn monomial_count_formula(k: u32) -> u64 {
    let m = 2 * k as u64 + 1;
    (2 * m * m * m + m) / 3
}

/// Σ_s c_s² over pair sums s, with c_s = M - |s| ordered pairs summing to s.
pub fn pair_sum_count(k: u32) -> u64 {
    let m = 2 * k as i64 + 1;
    (-2 * k as i64..=2 * k as i64)
        .map(|s| ((m - s.abs()) as u64).pow(2))
        .sum()
}

/// 3K² + 3K - l² + 1.
pub fn commutator_count_formula(k: u32, l: i32) -> i64 {
    let k = k as i64;
    3 * k * k + 3 * k - (l as i64).pow(2) + 1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Ladder {
    Create(i32),
    Annihilate(i32),
}

pub type Word = Vec<Ladder>;

/// Normal-ordered word, creators and annihilators each keeping their
/// relative order, with integer multiplicities.
pub fn normal_order(word: &[Ladder]) -> Vec<(i64, Word)> {
    let pos = word
        .windows(2)
        .position(|w| matches!((w[0], w[1]), (Ladder::Annihilate(_), Ladder::Create(_))));
    let i = match pos {
        None => return vec![(1, word.to_vec())],
        Some(i) => i,
    };
    let (Ladder::Annihilate(a), Ladder::Create(c)) = (word[i], word[i + 1]) else {
        unreachable!()
    };
    let mut swapped = word.to_vec();
    swapped.swap(i, i + 1);
    let mut out = normal_order(&swapped);
    if a == c {
        let contracted: Word = word[..i].iter().chain(&word[i + 2..]).copied().collect();
        out.extend(normal_order(&contracted));
    }
    out
}

/// Sorted creator and annihilator multisets.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Canonical {
    pub creators: Vec<i32>,
    pub annihilators: Vec<i32>,
}

impl Canonical {
    pub fn of(word: &[Ladder]) -> Self {
        let mut creators = Vec::new();
        let mut annihilators = Vec::new();
        for op in word {
            match *op {
                Ladder::Create(i) => creators.push(i),
                Ladder::Annihilate(i) => annihilators.push(i),
            }
        }
        creators.sort_unstable();
        annihilators.sort_unstable();
        Canonical {
            creators,
            annihilators,
        }
    }
}

impl fmt::Display for Canonical {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<String> = self.creators.iter().map(|i| format!("a†_{i}")).collect();
        parts.extend(self.annihilators.iter().map(|i| format!("a_{i}")));
        if parts.is_empty() {
            parts.push("1".into());
        }
        f.write_str(&parts.join(" "))
    }
}

/// Linear combination of normal-ordered words.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OperatorSum {
    pub terms: BTreeMap<Word, Rational64>,
}

impl OperatorSum {
    pub fn add_word(&mut self, coef: Rational64, word: &[Ladder]) {
        for (mult, w) in normal_order(word) {
            *self
                .terms
                .entry(w)
                .or_insert_with(|| Rational64::from_integer(0)) += coef * mult;
        }
    }

    /// AB - BA.
    pub fn commutator(a: &OperatorSum, b: &OperatorSum) -> OperatorSum {
        let mut out = OperatorSum::default();
        for (wa, ca) in &a.terms {
            for (wb, cb) in &b.terms {
                let ab: Word = wa.iter().chain(wb).copied().collect();
                let ba: Word = wb.iter().chain(wa).copied().collect();
                out.add_word(ca * cb, &ab);
                out.add_word(-(ca * cb), &ba);
            }
        }
        out
    }

    /// Coefficients after identifying words that differ only by the order
    /// of commuting creators or annihilators; zero entries dropped.
    pub fn canonical(&self) -> BTreeMap<Canonical, Rational64> {
        let mut out: BTreeMap<Canonical, Rational64> = BTreeMap::new();
        for (w, c) in &self.terms {
            *out.entry(Canonical::of(w))
                .or_insert_with(|| Rational64::from_integer(0)) += *c;
        }
        out.retain(|_, c| *c != Rational64::from_integer(0));
        out
    }

    pub fn is_zero(&self) -> bool {
        self.canonical().is_empty()
    }

    pub fn plus(&self, other: &OperatorSum) -> OperatorSum {
        let mut out = self.clone();
        for (w, c) in &other.terms {
            *out.terms
                .entry(w.clone())
                .or_insert_with(|| Rational64::from_integer(0)) += *c;
        }
        out
    }
}

/// Kerr interaction -(1/2) Σ a†_n a†_q a_m a_p restricted to `tags`.
pub fn kerr_hamiltonian(set: &MonomialSet, tags: &[Tag]) -> OperatorSum {
    let mut h = OperatorSum::default();
    let half = Rational64::new(-1, 2);
    for m in set.monomials.iter().filter(|m| tags.contains(&m.tag)) {
        let [n, q] = m.creators;
        let [a, b] = m.annihilators;
        h.add_word(
            half,
            &[
                Ladder::Create(n),
                Ladder::Create(q),
                Ladder::Annihilate(a),
                Ladder::Annihilate(b),
            ],
        );
    }
    h
}

/// Distinct monomials a†_c a_m a_p (ordered) left by [a_l, H_Kerr].
pub fn commutator_mode_count(k: u32, l: i32) -> Result<usize, AuditError> {
    check(k, Some(l))?;
    let set = enumerate_monomials(k)?;
    let h = kerr_hamiltonian(&set, &[Tag::Spm, Tag::Cpm, Tag::Fwm]);
    let mut a_l = OperatorSum::default();
    a_l.add_word(Rational64::from_integer(1), &[Ladder::Annihilate(l)]);
    let c = OperatorSum::commutator(&a_l, &h);
    let surviving = c.canonical();
    let ordered: BTreeSet<&Word> = c
        .terms
        .iter()
        .filter(|(w, coef)| {
            **coef != Rational64::from_integer(0) && surviving.contains_key(&Canonical::of(w))
        })
        .map(|(w, _)| w)
        .collect();
    Ok(ordered.len())
}

#[derive(Debug, Clone, PartialEq)]
pub struct NumberDifferenceReport {
    pub k: u32,
    pub l: i32,
    pub spm_zero: bool,
    pub cpm_zero: bool,
    pub fwm_zero: bool,
    /// Surviving FWM terms of [n_l - n_{-l}, H_FWM] in units of ħg0.
    pub fwm_residual: Vec<(Canonical, Rational64)>,
    /// [n_Δ, H] equals the sum of the part-wise commutators.
    pub linear: bool,
}

/// [n_l - n_{-l}, H_part] for the SPM, CPM and FWM parts of the interaction.
pub fn number_difference_commutators(k: u32, l: i32) -> Result<NumberDifferenceReport, AuditError> {
    check(k, Some(l))?;
    let set = enumerate_monomials(k)?;
    let mut n_delta = OperatorSum::default();
    n_delta.add_word(
        Rational64::from_integer(1),
        &[Ladder::Create(l), Ladder::Annihilate(l)],
    );
    n_delta.add_word(
        Rational64::from_integer(-1),
        &[Ladder::Create(-l), Ladder::Annihilate(-l)],
    );
    let part = |tags: &[Tag]| OperatorSum::commutator(&n_delta, &kerr_hamiltonian(&set, tags));
    let (spm, cpm, fwm) = (part(&[Tag::Spm]), part(&[Tag::Cpm]), part(&[Tag::Fwm]));
    let total = part(&[Tag::Spm, Tag::Cpm, Tag::Fwm]);
    let linear = total.canonical() == spm.plus(&cpm).plus(&fwm).canonical();
    Ok(NumberDifferenceReport {
        k,
        l,
        spm_zero: spm.is_zero(),
        cpm_zero: cpm.is_zero(),
        fwm_zero: fwm.is_zero(),
        fwm_residual: fwm.canonical().into_iter().collect(),
        linear,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn monomial_counts() {
        assert_eq!(enumerate_monomials(0).unwrap().len(), 1);
        assert_eq!(enumerate_monomials(0).unwrap().monomials[0].tag, Tag::Spm);
        assert_eq!(enumerate_monomials(1).unwrap().len(), 19);
        assert_eq!(enumerate_monomials(2).unwrap().len(), 85);
        for k in 0..=MAX_K {
            let set = enumerate_monomials(k).unwrap();
            assert_eq!(set.len() as u64, monomial_count_formula(k));
            assert_eq!(pair_sum_count(k), monomial_count_formula(k));
            assert_eq!(set.counts.values().sum::<usize>(), set.len());
        }
        assert!(enumerate_monomials(MAX_K + 1).is_err());
    }

    #[test]
    fn brute_force_quadruples_agree() {
        for k in 1..=2i32 {
            let mut n = 0;
            for a in -k..=k {
                for b in -k..=k {
                    for c in -k..=k {
                        for d in -k..=k {
                            if a - b + c - d == 0 {
                                n += 1;
                            }
                        }
                    }
                }
            }
            assert_eq!(n, enumerate_monomials(k as u32).unwrap().len());
        }
    }

    #[test]
    fn every_monomial_conserves_momentum() {
        for k in 0..=MAX_K {
            let set = enumerate_monomials(k).unwrap();
            for m in &set.monomials {
                assert_eq!(
                    m.creators[0] + m.creators[1],
                    m.annihilators[0] + m.annihilators[1]
                );
                assert!(m
                    .creators
                    .iter()
                    .chain(&m.annihilators)
                    .all(|i| i.unsigned_abs() <= k));
            }
        }
    }

    #[test]
    fn tags_at_k1() {
        let set = enumerate_monomials(1).unwrap();
        // SPM: one per mode; CPM: ordered (n,q) with n≠q and (m,p) a permutation
        assert_eq!(set.counts[&Tag::Spm], 3);
        assert_eq!(set.counts[&Tag::Cpm], 3 * 2 * 2);
        assert_eq!(set.counts[&Tag::Fwm], 19 - 3 - 12);
        assert_eq!(tag_of([1, -1], [0, 0]), Tag::Fwm);
        assert_eq!(tag_of([1, 0], [0, 1]), Tag::Cpm);
    }

    #[test]
    fn normal_ordering_rules() {
        // a_1 a†_1 = a†_1 a_1 + 1
        let out = normal_order(&[Ladder::Annihilate(1), Ladder::Create(1)]);
        assert_eq!(
            out,
            vec![
                (1, vec![Ladder::Create(1), Ladder::Annihilate(1)]),
                (1, vec![])
            ]
        );
        let out = normal_order(&[Ladder::Annihilate(1), Ladder::Create(2)]);
        assert_eq!(out.len(), 1);
        // a a a† a† has 1 + 4 + 2 terms
        let w = [
            Ladder::Annihilate(0),
            Ladder::Annihilate(0),
            Ladder::Create(0),
            Ladder::Create(0),
        ];
        let mut s = OperatorSum::default();
        s.add_word(Rational64::from_integer(1), &w);
        let c = s.canonical();
        let key = |n: usize| Canonical {
            creators: vec![0; n],
            annihilators: vec![0; n],
        };
        assert_eq!(c[&key(2)], Rational64::from_integer(1));
        assert_eq!(c[&key(1)], Rational64::from_integer(4));
        assert_eq!(c[&key(0)], Rational64::from_integer(2));
    }

    #[test]
    fn commutator_counts() {
        assert_eq!(commutator_mode_count(0, 0).unwrap(), 1);
        assert_eq!(commutator_mode_count(1, 0).unwrap(), 7);
        assert_eq!(commutator_mode_count(2, 2).unwrap(), 15);
        for k in 0..=4u32 {
            for l in -(k as i32)..=k as i32 {
                assert_eq!(
                    commutator_mode_count(k, l).unwrap() as i64,
                    commutator_count_formula(k, l),
                    "K={k} l={l}"
                );
            }
        }
        assert!(commutator_mode_count(2, 3).is_err());
    }

    #[test]
    fn number_difference_spm_cpm_always_commute() {
        for k in 0..=5u32 {
            for l in 0..=k as i32 {
                let r = number_difference_commutators(k, l).unwrap();
                assert!(r.spm_zero && r.cpm_zero, "K={k} l={l}");
                assert!(r.linear);
            }
        }
    }

    #[test]
    fn three_modes_conserve_the_difference() {
        let r = number_difference_commutators(1, 1).unwrap();
        assert!(r.fwm_zero);
    }

    #[test]
    fn five_modes_break_it() {
        let r = number_difference_commutators(2, 1).unwrap();
        assert!(!r.fwm_zero);
        // 2ω_{-1} -> ω_0 + ω_{-2}
        let key = Canonical {
            creators: vec![-2, 0],
            annihilators: vec![-1, -1],
        };
        assert!(
            r.fwm_residual.iter().any(|(c, _)| *c == key),
            "{:?}",
            r.fwm_residual
        );
    }

    #[test]
    fn text_dump() {
        let mut buf = Vec::new();
        enumerate_monomials(1)
            .unwrap()
            .write_text(&mut buf)
            .unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 19);
        assert!(text.contains("a†_-1 a†_1 a_0 a_0 [FWM]"));
    }

    proptest! {
        #[test]
        fn commutator_is_antisymmetric(k in 0u32..3, l in 0i32..3) {
            prop_assume!(l as u32 <= k);
            let set = enumerate_monomials(k).unwrap();
            let h = kerr_hamiltonian(&set, &[Tag::Fwm]);
            let mut a = OperatorSum::default();
            a.add_word(Rational64::from_integer(1), &[Ladder::Annihilate(l)]);
            let x = OperatorSum::commutator(&a, &h).canonical();
            let y = OperatorSum::commutator(&h, &a).canonical();
            prop_assert_eq!(x.len(), y.len());
            for (key, c) in x {
                prop_assert_eq!(y[&key], -c);
            }
        }
    }
}

//! Decidable subsets of the countable atom universe.
//!
//! Level-0 sets are restricted to shapes with decidable membership, equality
//! and complement: finite sets, eventually periodic sets (given by a
//! preperiod and a repeating period of bits), and the powers of two together
//! with their complement. Equality is structural equality of the canonical
//! form produced by [`BaseSet::normalize`].

use crate::error::Result;
use crate::text::{parse_all, Cursor};
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BaseSet {
    /// Sorted, deduplicated atom indexes.
    Finite(Vec<u64>),
    /// Bit i of the characteristic sequence is `pre[i]` for i < pre.len(),
    /// then `per` repeats forever. Canonical form: `per` has minimal length,
    /// is not all-false, and `pre` cannot be shortened further.
    EvPeriodic { pre: Vec<bool>, per: Vec<bool> },
    /// {1, 2, 4, 8, ...}
    Pow2,
    /// Complement of [`BaseSet::Pow2`].
    Pow2Comp,
}

impl BaseSet {
    pub fn empty() -> Self {
        BaseSet::Finite(Vec::new())
    }

    pub fn full() -> Self {
        BaseSet::EvPeriodic { pre: vec![], per: vec![true] }
    }

    pub fn finite(mut atoms: Vec<u64>) -> Self {
        atoms.sort_unstable();
        atoms.dedup();
        BaseSet::Finite(atoms)
    }

    pub fn member(&self, atom: u64) -> bool {
        match self {
            BaseSet::Finite(v) => v.binary_search(&atom).is_ok(),
            BaseSet::EvPeriodic { pre, per } => {
                let i = atom as usize;
                if i < pre.len() {
                    pre[i]
                } else {
                    per[(i - pre.len()) % per.len()]
                }
            }
            BaseSet::Pow2 => atom != 0 && atom & (atom - 1) == 0,
            BaseSet::Pow2Comp => !(atom != 0 && atom & (atom - 1) == 0),
        }
    }

    pub fn complement(&self) -> BaseSet {
        match self {
            BaseSet::Finite(v) => {
                let top = v.last().map(|&m| m + 1).unwrap_or(0) as usize;
                let pre: Vec<bool> = (0..top as u64).map(|i| !self.member(i)).collect();
                BaseSet::EvPeriodic { pre, per: vec![true] }.normalize()
            }
            BaseSet::EvPeriodic { pre, per } => {
                let flip = |bits: &[bool]| bits.iter().map(|b| !b).collect::<Vec<_>>();
                BaseSet::EvPeriodic { pre: flip(pre), per: flip(per) }.normalize()
            }
            BaseSet::Pow2 => BaseSet::Pow2Comp,
            BaseSet::Pow2Comp => BaseSet::Pow2,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, BaseSet::Finite(_))
    }

    pub fn finite_members(&self) -> Option<&[u64]> {
        match self {
            BaseSet::Finite(v) => Some(v),
            _ => None,
        }
    }

    /// Atoms of the set with index <= bound, ascending.
    pub fn members_upto(&self, bound: u64) -> Vec<u64> {
        (0..=bound).filter(|&i| self.member(i)).collect()
    }

    /// Canonical form: finite sets become `Finite`, eventually periodic sets
    /// get a minimal period and then a minimal preperiod. The minimal period
    /// of an infinite eventually periodic sequence divides every other
    /// period, so scanning divisors suffices.
    pub fn normalize(self) -> BaseSet {
        match self {
            BaseSet::Finite(v) => BaseSet::finite(v),
            BaseSet::EvPeriodic { pre, mut per } => {
                assert!(!per.is_empty(), "period must be nonempty");
                for d in 1..=per.len() {
                    if per.len() % d == 0 && per.chunks(d).all(|c| c == &per[..d]) {
                        per.truncate(d);
                        break;
                    }
                }
                let mut pre = pre;
                while let Some(&last) = pre.last() {
                    if last == *per.last().unwrap() {
                        pre.pop();
                        per.rotate_right(1);
                    } else {
                        break;
                    }
                }
                if per.iter().all(|&b| !b) {
                    let atoms = pre
                        .iter()
                        .enumerate()
                        .filter_map(|(i, &b)| b.then_some(i as u64))
                        .collect();
                    BaseSet::Finite(atoms)
                } else {
                    BaseSet::EvPeriodic { pre, per }
                }
            }
            other => other,
        }
    }

    /// Smallest atom on which the two sets differ, if one exists below the
    /// bound. Normalized equal sets never differ; distinct normalized sets
    /// differ within pre+lcm(periods) except for the pow2 kinds, which differ
    /// from any eventually periodic set at some power of two or its
    /// neighbours, found well within any reasonable bound.
    pub fn separator(&self, other: &BaseSet, bound: u64) -> Option<u64> {
        (0..=bound).find(|&i| self.member(i) != other.member(i))
    }

    pub fn parse_from(cur: &mut Cursor) -> Result<BaseSet> {
        if cur.eat_str("fin[") {
            let mut atoms = Vec::new();
            if !cur.eat(']') {
                loop {
                    atoms.push(cur.nat()?);
                    if cur.eat(']') {
                        break;
                    }
                    cur.expect(',')?;
                }
            }
            Ok(BaseSet::finite(atoms))
        } else if cur.eat_str("ep(") {
            let pre = parse_bits(cur)?;
            cur.expect(';')?;
            let per = parse_bits(cur)?;
            if per.is_empty() {
                return Err(cur.err("period must be nonempty"));
            }
            cur.expect(')')?;
            Ok(BaseSet::EvPeriodic { pre, per }.normalize())
        } else if cur.eat_str("pow2'") {
            Ok(BaseSet::Pow2Comp)
        } else if cur.eat_str("pow2") {
            Ok(BaseSet::Pow2)
        } else {
            Err(cur.err("expected a base set: fin[..], ep(..;..), pow2 or pow2'"))
        }
    }

    pub fn parse(src: &str) -> Result<BaseSet> {
        parse_all(src, BaseSet::parse_from)
    }
}

fn parse_bits(cur: &mut Cursor) -> Result<Vec<bool>> {
    let mut bits = Vec::new();
    while let Some(c) = cur.peek() {
        match c {
            '0' => bits.push(false),
            '1' => bits.push(true),
            _ => break,
        }
        cur.bump();
    }
    Ok(bits)
}

impl fmt::Display for BaseSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BaseSet::Finite(v) => {
                write!(f, "fin[")?;
                for (i, a) in v.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, "]")
            }
            BaseSet::EvPeriodic { pre, per } => {
                let bits = |b: &[bool]| b.iter().map(|&x| if x { '1' } else { '0' }).collect::<String>();
                write!(f, "ep({};{})", bits(pre), bits(per))
            }
            BaseSet::Pow2 => write!(f, "pow2"),
            BaseSet::Pow2Comp => write!(f, "pow2'"),
        }
    }
}

pub fn evens() -> BaseSet {
    BaseSet::EvPeriodic { pre: vec![], per: vec![true, false] }
}

pub fn odds() -> BaseSet {
    BaseSet::EvPeriodic { pre: vec![], per: vec![false, true] }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn membership_of_each_kind() {
        let e = evens();
        assert!(e.member(0) && !e.member(1) && e.member(2) && e.member(100));
        let f = BaseSet::finite(vec![3, 1, 3]);
        assert_eq!(f, BaseSet::Finite(vec![1, 3]));
        assert!(f.member(1) && f.member(3) && !f.member(0) && !f.member(4));
        assert!(BaseSet::Pow2.member(1) && BaseSet::Pow2.member(2) && BaseSet::Pow2.member(1024));
        assert!(!BaseSet::Pow2.member(0) && !BaseSet::Pow2.member(3) && !BaseSet::Pow2.member(63));
        assert!(BaseSet::Pow2Comp.member(0) && !BaseSet::Pow2Comp.member(4));
    }

    #[test]
    fn complement_of_singleton_has_expected_shape() {
        let c = BaseSet::finite(vec![1]).complement();
        assert_eq!(
            c,
            BaseSet::EvPeriodic { pre: vec![true, false], per: vec![true] }
        );
        assert_eq!(c.to_string(), "ep(10;1)");
    }

    #[test]
    fn complement_is_an_involution() {
        for s in [
            BaseSet::empty(),
            BaseSet::full(),
            evens(),
            odds(),
            BaseSet::finite(vec![0, 5, 7]),
            BaseSet::Pow2,
            BaseSet::EvPeriodic { pre: vec![true], per: vec![false, false, true] },
        ] {
            assert_eq!(s.complement().complement(), s.clone().normalize());
            for i in 0..64 {
                assert_ne!(s.member(i), s.complement().member(i), "atom {i} of {s}");
            }
        }
    }

    #[test]
    fn normalization_finds_the_canonical_form() {
        // 1,0,1,0,... written with a redundant preperiod is just the evens.
        let messy = BaseSet::EvPeriodic { pre: vec![true, false], per: vec![true, false] };
        assert_eq!(messy.normalize(), evens());
        // A doubled period collapses.
        let doubled = BaseSet::EvPeriodic { pre: vec![], per: vec![true, false, true, false] };
        assert_eq!(doubled.normalize(), evens());
        // All-false period is a finite set.
        let fin = BaseSet::EvPeriodic { pre: vec![false, true, true], per: vec![false, false] };
        assert_eq!(fin.normalize(), BaseSet::Finite(vec![1, 2]));
        // Sets that merely shift into their period still reduce fully.
        let odd = BaseSet::EvPeriodic { pre: vec![false, true], per: vec![false, true] };
        assert_eq!(odd.normalize(), odds());
    }

    #[test]
    fn complement_of_evens_is_odds() {
        assert_eq!(evens().complement(), odds());
        assert_eq!(odds().complement(), evens());
    }

    #[test]
    fn printing_round_trips() {
        for s in [
            BaseSet::empty(),
            BaseSet::full(),
            evens(),
            odds(),
            BaseSet::finite(vec![0, 2, 9]),
            BaseSet::Pow2,
            BaseSet::Pow2Comp,
            BaseSet::finite(vec![1]).complement(),
        ] {
            let text = s.to_string();
            assert_eq!(BaseSet::parse(&text).unwrap(), s, "round trip of {text}");
        }
        assert_eq!(BaseSet::parse("fin[]").unwrap(), BaseSet::empty());
        assert_eq!(BaseSet::empty().to_string(), "fin[]");
        assert_eq!(evens().to_string(), "ep(;10)");
    }

    #[test]
    fn parse_rejects_malformed_input() {
        assert!(BaseSet::parse("fin[1,]").is_err());
        assert!(BaseSet::parse("ep(;)").is_err());
        assert!(BaseSet::parse("ep(10)").is_err());
        assert!(BaseSet::parse("fin[01]").is_err());
        assert!(BaseSet::parse("fin[1] trailing").is_err());
    }

    #[test]
    fn separators_exist_for_distinct_sets() {
        assert_eq!(evens().separator(&odds(), 64), Some(0));
        assert_eq!(evens().separator(&evens(), 64), None);
        let s = BaseSet::Pow2.separator(&evens(), 1 << 10);
        assert_eq!(s, Some(0), "0 is even and not a power of two");
        assert!(BaseSet::Pow2.separator(&BaseSet::Pow2Comp, 4).is_some());
    }
}

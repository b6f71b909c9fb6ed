//! Reduced words over signed demand letters, i.e. elements of the free
//! group generated by the registered demands. All public constructors keep
//! the reduced-form invariant: no letter is adjacent to its inverse.

use crate::error::Result;
use crate::text::{parse_all, Cursor};
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DemandId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sign {
    Pos,
    Neg,
}

impl Sign {
    pub fn flip(self) -> Sign {
        match self {
            Sign::Pos => Sign::Neg,
            Sign::Neg => Sign::Pos,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Letter {
    pub demand: DemandId,
    pub sign: Sign,
}

impl Letter {
    pub fn pos(d: DemandId) -> Letter {
        Letter { demand: d, sign: Sign::Pos }
    }

    pub fn neg(d: DemandId) -> Letter {
        Letter { demand: d, sign: Sign::Neg }
    }

    pub fn inverse(self) -> Letter {
        Letter { demand: self.demand, sign: self.sign.flip() }
    }

    pub fn cancels(self, other: Letter) -> bool {
        self.demand == other.demand && self.sign != other.sign
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Word(Vec<Letter>);

impl Word {
    pub fn identity() -> Word {
        Word(Vec::new())
    }

    pub fn letter(l: Letter) -> Word {
        Word(vec![l])
    }

    /// Reduce an arbitrary letter sequence.
    pub fn reduce(letters: impl IntoIterator<Item = Letter>) -> Word {
        let mut out: Vec<Letter> = Vec::new();
        for l in letters {
            if out.last().is_some_and(|&last| last.cancels(l)) {
                out.pop();
            } else {
                out.push(l);
            }
        }
        Word(out)
    }

    pub fn compose(&self, rhs: &Word) -> Word {
        Word::reduce(self.0.iter().chain(rhs.0.iter()).copied())
    }

    pub fn invert(&self) -> Word {
        Word(self.0.iter().rev().map(|l| l.inverse()).collect())
    }

    /// Right-append a single letter with cancellation.
    pub fn push(&self, l: Letter) -> Word {
        let mut out = self.0.clone();
        if out.last().is_some_and(|&last| last.cancels(l)) {
            out.pop();
        } else {
            out.push(l);
        }
        Word(out)
    }

    pub fn letters(&self) -> &[Letter] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn parse_from(cur: &mut Cursor) -> Result<Word> {
        if cur.eat('e') {
            return Ok(Word::identity());
        }
        let mut letters = Vec::new();
        letters.push(parse_letter(cur)?);
        while cur.eat('.') {
            letters.push(parse_letter(cur)?);
        }
        Ok(Word::reduce(letters))
    }

    pub fn parse(src: &str) -> Result<Word> {
        parse_all(src, Word::parse_from)
    }
}

pub fn parse_letter(cur: &mut Cursor) -> Result<Letter> {
    cur.expect('d')?;
    let id = cur.nat()?;
    let id = u32::try_from(id).map_err(|_| cur.err("demand id out of range"))?;
    let sign = if cur.eat('\'') { Sign::Neg } else { Sign::Pos };
    Ok(Letter { demand: DemandId(id), sign })
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "d{}", self.demand.0)?;
        if self.sign == Sign::Neg {
            write!(f, "'")?;
        }
        Ok(())
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "e");
        }
        for (i, l) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ".")?;
            }
            write!(f, "{l}")?;
        }
        Ok(())
    }
}

/// All reduced words of length 1..=max_len over the given demands, in
/// deterministic order: by length, then lexicographically by (id, sign) with
/// the positive letter first. The identity word is not included.
pub fn reduced_words(demands: &[DemandId], max_len: usize) -> Vec<Word> {
    let mut alphabet: Vec<Letter> = Vec::new();
    for &d in demands {
        alphabet.push(Letter::pos(d));
        alphabet.push(Letter::neg(d));
    }
    alphabet.sort();
    alphabet.dedup();
    let mut out = Vec::new();
    let mut frontier: Vec<Word> = vec![Word::identity()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for w in &frontier {
            for &l in &alphabet {
                if w.letters().last().is_some_and(|&last| last.cancels(l)) {
                    continue;
                }
                next.push(w.push(l));
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(s: &str) -> Word {
        Word::parse(s).unwrap()
    }

    #[test]
    fn reduction_cancels_adjacent_inverses() {
        assert_eq!(w("d1.d1'"), Word::identity());
        assert_eq!(w("d1.d2.d2'.d1'"), Word::identity());
        assert_eq!(w("d1.d2.d2'.d3"), w("d1.d3"));
        // d1 d1 does not cancel.
        assert_eq!(w("d1.d1").len(), 2);
    }

    #[test]
    fn compose_and_invert_satisfy_the_group_laws() {
        let u = w("d1.d2'");
        let v = w("d2.d3");
        assert_eq!(u.compose(&v), w("d1.d3"));
        assert_eq!(u.compose(&u.invert()), Word::identity());
        assert_eq!(u.invert().compose(&u), Word::identity());
        assert_eq!(u.compose(&Word::identity()), u);
        assert_eq!(u.invert(), w("d2.d1'"));
    }

    #[test]
    fn display_round_trips() {
        for s in ["e", "d0", "d1'", "d1.d2'.d1", "d10.d10"] {
            assert_eq!(w(s).to_string(), s);
        }
    }

    #[test]
    fn parse_rejects_malformed_words() {
        assert!(Word::parse("d").is_err());
        assert!(Word::parse("d1.").is_err());
        assert!(Word::parse("d1..d2").is_err());
        assert!(Word::parse("x1").is_err());
        assert!(Word::parse("e.d1").is_err());
    }

    #[test]
    fn reduced_word_counts_follow_the_free_group_recurrence() {
        // Over g generators there are 2g words of length 1 and each extends
        // by 2g-1 letters, so 2g*(2g-1)^(n-1) words of length n.
        let demands: Vec<DemandId> = (0..5).map(DemandId).collect();
        let words = reduced_words(&demands, 4);
        let count = |n: usize| words.iter().filter(|w| w.len() == n).count();
        assert_eq!(count(1), 10);
        assert_eq!(count(2), 90);
        assert_eq!(count(3), 810);
        assert_eq!(count(4), 7290);
        assert_eq!(words.len(), 10 + 90 + 810 + 7290);
        // All results are reduced and pairwise distinct.
        let mut seen = std::collections::HashSet::new();
        for word in &words {
            assert!(word
                .letters()
                .windows(2)
                .all(|p| !p[0].cancels(p[1])));
            assert!(seen.insert(word.clone()));
        }
    }

    #[test]
    fn positive_words_over_five_demands_count_780() {
        let demands: Vec<DemandId> = (0..5).map(DemandId).collect();
        let words = reduced_words(&demands, 4);
        let positive = words
            .iter()
            .filter(|w| w.letters().iter().all(|l| l.sign == Sign::Pos))
            .count();
        assert_eq!(positive, 5 + 25 + 125 + 625);
    }
}

//! Names for the points of the lazily constructed universes.
//!
//! Three shapes exist: plain atoms, table points added by the tower
//! extension step (a finite support plus a bit for every subset of that
//! support), and string points of the grid construction (an atom with a
//! history of appended letter words, one reduced word per construction
//! step). Every point has one canonical encoding, and the derived ordering
//! on the structure is the canonical order used wherever points are sorted.

use crate::error::{Error, Result};
use crate::text::{parse_all, Cursor};
use crate::word::Word;
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PointName {
    Atom(u64),
    B(BPoint),
    Grid(GridPoint),
}

/// A point created by one tower extension step: a function from the subsets
/// of its finite support into {0,1}.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BPoint {
    pub step: u32,
    /// Strictly ascending in the canonical point order; all members live at
    /// levels <= step.
    pub support: Vec<PointName>,
    /// Bit for every subset of the support, indexed by the bitmask whose
    /// bit i selects support[i].
    pub table: Vec<bool>,
}

/// A string point of the grid construction: a base atom with a history of
/// appended words, at most one nonempty reduced word per step, steps
/// strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridPoint {
    pub base: u64,
    pub history: Vec<(u32, Word)>,
}

impl BPoint {
    pub fn new(step: u32, support: Vec<PointName>, table: Vec<bool>) -> Result<BPoint> {
        if support.len() >= 16 {
            return Err(Error::BudgetExceeded {
                budget: 16,
                what: format!("support of size {}", support.len()),
            });
        }
        if table.len() != 1usize << support.len() {
            return Err(Error::CorruptDump(format!(
                "table has {} entries for support of size {}",
                table.len(),
                support.len()
            )));
        }
        for pair in support.windows(2) {
            if pair[0] >= pair[1] {
                return Err(Error::CorruptDump(
                    "support is not sorted in canonical order".into(),
                ));
            }
        }
        for p in &support {
            if p.level() > step {
                return Err(Error::LevelMismatch {
                    point_level: p.level(),
                    set_level: step,
                });
            }
        }
        Ok(BPoint { step, support, table })
    }

    /// Table lookup by subset bitmask.
    pub fn eval_mask(&self, mask: u32) -> bool {
        self.table[mask as usize]
    }

    /// Bitmask of the support members satisfying the predicate.
    pub fn mask_of(&self, mut pred: impl FnMut(&PointName) -> bool) -> u32 {
        let mut mask = 0u32;
        for (i, p) in self.support.iter().enumerate() {
            if pred(p) {
                mask |= 1 << i;
            }
        }
        mask
    }
}

impl GridPoint {
    pub fn new(base: u64, history: Vec<(u32, Word)>) -> Result<GridPoint> {
        for (i, (step, word)) in history.iter().enumerate() {
            if word.is_empty() {
                return Err(Error::CorruptDump("empty history word".into()));
            }
            if i > 0 && history[i - 1].0 >= *step {
                return Err(Error::CorruptDump(
                    "history steps must be strictly increasing".into(),
                ));
            }
            let _ = step;
        }
        Ok(GridPoint { base, history })
    }
}

impl PointName {
    pub fn atom(i: u64) -> PointName {
        PointName::Atom(i)
    }

    /// Construction level: atoms live at level 0, a table point of step n
    /// first exists at level n+1, a string point one level above its last
    /// history step.
    pub fn level(&self) -> u32 {
        match self {
            PointName::Atom(_) => 0,
            PointName::B(b) => b.step + 1,
            PointName::Grid(g) => g.history.last().map(|(s, _)| s + 1).unwrap_or(0),
        }
    }

    pub fn as_atom(&self) -> Option<u64> {
        match self {
            PointName::Atom(i) => Some(*i),
            _ => None,
        }
    }

    pub fn parse_from(cur: &mut Cursor) -> Result<PointName> {
        match cur.peek() {
            Some('a') => {
                cur.bump();
                let base = cur.nat()?;
                let mut history = Vec::new();
                while cur.eat('\u{b7}') {
                    cur.expect('[')?;
                    let step = cur.nat()?;
                    let step = u32::try_from(step).map_err(|_| cur.err("step out of range"))?;
                    cur.expect(':')?;
                    let word = Word::parse_from(cur)?;
                    cur.expect(']')?;
                    history.push((step, word));
                }
                if history.is_empty() {
                    Ok(PointName::Atom(base))
                } else {
                    GridPoint::new(base, history)
                        .map(PointName::Grid)
                        .map_err(|e| cur.err(e.to_string()))
                }
            }
            Some('b') => {
                cur.bump();
                let step = cur.nat()?;
                let step = u32::try_from(step).map_err(|_| cur.err("step out of range"))?;
                cur.expect_str("{[")?;
                let mut support = Vec::new();
                if !cur.eat(']') {
                    loop {
                        support.push(PointName::parse_from(cur)?);
                        if cur.eat(']') {
                            break;
                        }
                        cur.expect(',')?;
                    }
                }
                cur.expect_str(";[")?;
                let mut entries: Vec<(Vec<PointName>, bool)> = Vec::new();
                if !cur.eat(']') {
                    loop {
                        cur.expect('[')?;
                        let mut subset = Vec::new();
                        if !cur.eat(']') {
                            loop {
                                subset.push(PointName::parse_from(cur)?);
                                if cur.eat(']') {
                                    break;
                                }
                                cur.expect(',')?;
                            }
                        }
                        cur.expect(':')?;
                        let bit = match cur.bump() {
                            Some('0') => false,
                            Some('1') => true,
                            _ => return Err(cur.err("expected table bit 0 or 1")),
                        };
                        entries.push((subset, bit));
                        if cur.eat(']') {
                            break;
                        }
                        cur.expect(',')?;
                    }
                }
                cur.expect('}')?;
                let table = assemble_table(&support, entries).map_err(|e| cur.err(e))?;
                BPoint::new(step, support, table)
                    .map(PointName::B)
                    .map_err(|e| cur.err(e.to_string()))
            }
            _ => Err(cur.err("expected a point: aN, bN{..} or aN·[..]")),
        }
    }

    pub fn parse(src: &str) -> Result<PointName> {
        parse_all(src, PointName::parse_from)
    }
}

/// Subset bitmasks of a size-k support in canonical entry order: subsets
/// compared as sorted point lists, lexicographically, so [] < [s0] <
/// [s0,s1] < ... < [s1] < ... (support is itself sorted ascending).
pub fn subset_masks_lex(k: usize) -> Vec<u32> {
    let mut masks: Vec<u32> = (0..(1u32 << k)).collect();
    masks.sort_by_key(|&m| {
        (0..k).filter(|i| m >> i & 1 == 1).collect::<Vec<_>>()
    });
    masks
}

fn assemble_table(
    support: &[PointName],
    entries: Vec<(Vec<PointName>, bool)>,
) -> std::result::Result<Vec<bool>, String> {
    let k = support.len();
    if entries.len() != 1 << k {
        return Err(format!(
            "expected {} table entries, found {}",
            1 << k,
            entries.len()
        ));
    }
    let order = subset_masks_lex(k);
    let mut table = vec![false; 1 << k];
    for (slot, (subset, bit)) in entries.into_iter().enumerate() {
        let mut mask = 0u32;
        for p in &subset {
            match support.iter().position(|s| s == p) {
                Some(i) => {
                    if mask >> i & 1 == 1 {
                        return Err("duplicate point in table subset".into());
                    }
                    mask |= 1 << i;
                }
                None => return Err("table subset mentions a point outside the support".into()),
            }
        }
        if mask != order[slot] {
            return Err("table entries are not in canonical subset order".into());
        }
        table[mask as usize] = bit;
    }
    Ok(table)
}

impl fmt::Display for PointName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PointName::Atom(i) => write!(f, "a{i}"),
            PointName::B(b) => {
                write!(f, "b{}{{[", b.step)?;
                for (i, p) in b.support.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{p}")?;
                }
                write!(f, "];[")?;
                for (slot, &mask) in subset_masks_lex(b.support.len()).iter().enumerate() {
                    if slot > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "[")?;
                    let mut first = true;
                    for (i, p) in b.support.iter().enumerate() {
                        if mask >> i & 1 == 1 {
                            if !first {
                                write!(f, ",")?;
                            }
                            write!(f, "{p}")?;
                            first = false;
                        }
                    }
                    write!(f, "]:{}", if b.table[mask as usize] { '1' } else { '0' })?;
                }
                write!(f, "]}}")
            }
            PointName::Grid(g) => {
                write!(f, "a{}", g.base)?;
                for (step, word) in &g.history {
                    write!(f, "\u{b7}[{step}:{word}]")?;
                }
                Ok(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> PointName {
        PointName::parse(s).unwrap()
    }

    #[test]
    fn atoms_round_trip_and_order_by_index() {
        assert_eq!(p("a0"), PointName::Atom(0));
        assert_eq!(p("a42").to_string(), "a42");
        assert!(p("a2") < p("a10"));
        assert_eq!(p("a0").level(), 0);
    }

    #[test]
    fn empty_support_points_have_two_forms() {
        let f0 = p("b0{[];[[]:0]}");
        let f1 = p("b0{[];[[]:1]}");
        assert_ne!(f0, f1);
        assert_eq!(f0.level(), 1);
        assert_eq!(f0.to_string(), "b0{[];[[]:0]}");
        assert_eq!(f1.to_string(), "b0{[];[[]:1]}");
    }

    #[test]
    fn subset_order_is_lexicographic_on_sorted_lists() {
        assert_eq!(subset_masks_lex(2), vec![0b00, 0b01, 0b11, 0b10]);
        assert_eq!(subset_masks_lex(3), vec![0, 1, 3, 7, 5, 2, 6, 4]);
    }

    #[test]
    fn table_points_round_trip() {
        let text = "b0{[a0,a1];[[]:0,[a0]:1,[a0,a1]:0,[a1]:1]}";
        let pt = p(text);
        assert_eq!(pt.to_string(), text);
        if let PointName::B(b) = &pt {
            assert_eq!(b.support.len(), 2);
            // mask 0b01 = {a0}, printed second.
            assert!(b.eval_mask(0b01));
            assert!(!b.eval_mask(0b11));
            assert!(b.eval_mask(0b10));
        } else {
            panic!("expected a table point");
        }
    }

    #[test]
    fn nested_supports_parse() {
        let text = "b1{[a0,b0{[];[[]:1]}];[[]:0,[a0]:0,[a0,b0{[];[[]:1]}]:1,[b0{[];[[]:1]}]:0]}";
        let pt = p(text);
        assert_eq!(pt.level(), 2);
        assert_eq!(pt.to_string(), text);
    }

    #[test]
    fn grid_points_round_trip() {
        let text = "a3\u{b7}[0:d1.d2']\u{b7}[2:d5]";
        let pt = p(text);
        assert_eq!(pt.level(), 3);
        assert_eq!(pt.to_string(), text);
        assert_eq!(p("a3").level(), 0);
    }

    #[test]
    fn malformed_points_are_rejected() {
        // Wrong number of table entries.
        assert!(PointName::parse("b0{[a0];[[]:0]}").is_err());
        // Entries out of canonical order.
        assert!(PointName::parse("b0{[a0];[[a0]:0,[]:0]}").is_err());
        // Support out of order.
        assert!(PointName::parse("b0{[a1,a0];[[]:0,[a1]:0,[a1,a0]:0,[a0]:0]}").is_err());
        // Subset mentions a stranger.
        assert!(PointName::parse("b0{[a0];[[]:0,[a7]:1]}").is_err());
        // History steps must increase.
        assert!(PointName::parse("a0\u{b7}[1:d1]\u{b7}[0:d2]").is_err());
        // Empty history words are not canonical.
        assert!(PointName::parse("a0\u{b7}[0:e]").is_err());
        // A support member above the creation step.
        assert!(PointName::parse("b0{[b0{[];[[]:1]}];[[]:0,[b0{[];[[]:1]}]:0]}").is_err());
    }

    #[test]
    fn canonical_order_ranks_kinds_then_structure() {
        let a = p("a7");
        let b = p("b0{[];[[]:0]}");
        let g = p("a0\u{b7}[0:d1]");
        assert!(a < b && b < g);
        // Among table points: step, then support, then table.
        let b0 = p("b0{[];[[]:0]}");
        let b1 = p("b0{[];[[]:1]}");
        let b2 = p("b1{[];[[]:0]}");
        assert!(b0 < b1 && b1 < b2);
    }
}

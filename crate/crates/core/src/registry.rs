//! Shared name stores: registered set names with separating witnesses, and
//! registered demands.
//!
//! A set name is an expression over base sets, lift steps, permutation
//! images and step-word images. Names are deduplicated structurally after
//! canonicalization (the session owning the registry rewrites expressions
//! before pushing them here). Distinctness of names denoting different sets
//! is certified at registration time by a recorded separating point.

use crate::base::BaseSet;
use crate::error::{Error, Result};
use crate::point::PointName;
use crate::word::{DemandId, Sign, Word};
use std::collections::HashMap;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SetId(pub u32);

impl fmt::Display for SetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "S{}", self.0)
    }
}

/// Opaque reference to a session-owned permutation handle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PermId(pub u32);

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SetExpr {
    /// A decidable level-0 set.
    Base(BaseSet),
    /// An explicit finite set of materialized points at a positive level.
    FiniteAt { level: u32, points: Vec<PointName> },
    /// Complement of an explicit finite set within its level universe.
    CofiniteAt { level: u32, points: Vec<PointName> },
    /// Image of a level-`step` set under the extension step into level
    /// `step + 1`.
    Lift { step: u32, inner: SetId },
    /// Image of a set under a registered permutation at the same level.
    Perm { perm: PermId, inner: SetId },
    /// Image of the level-(step+1) set `inner` under the step-`step` action
    /// of a word. Canonical names of this shape are orphans: the letterwise
    /// set image of the word is undefined, so no lifted name exists.
    Xi { step: u32, word: Word, inner: SetId },
}

impl SetExpr {
    pub fn level_of(&self, registry: &Registry) -> u32 {
        match self {
            SetExpr::Base(_) => 0,
            SetExpr::FiniteAt { level, .. } | SetExpr::CofiniteAt { level, .. } => *level,
            SetExpr::Lift { step, .. } => step + 1,
            SetExpr::Perm { inner, .. } => registry.level(*inner),
            SetExpr::Xi { step, .. } => step + 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Registry {
    entries: Vec<(SetExpr, u32)>,
    index: HashMap<SetExpr, SetId>,
    separators: HashMap<(SetId, SetId), PointName>,
}

impl Registry {
    pub fn new() -> Registry {
        Registry { entries: Vec::new(), index: HashMap::new(), separators: HashMap::new() }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn find(&self, expr: &SetExpr) -> Option<SetId> {
        self.index.get(expr).copied()
    }

    /// Insert a canonical expression without separator bookkeeping; the
    /// session performs the separator search and records witnesses after.
    pub fn push(&mut self, expr: SetExpr) -> SetId {
        if let Some(id) = self.find(&expr) {
            return id;
        }
        let level = expr.level_of(self);
        let id = SetId(self.entries.len() as u32);
        self.entries.push((expr.clone(), level));
        self.index.insert(expr, id);
        id
    }

    pub fn expr(&self, id: SetId) -> Result<&SetExpr> {
        self.entries
            .get(id.0 as usize)
            .map(|(e, _)| e)
            .ok_or(Error::UnknownSet(id.0))
    }

    pub fn level(&self, id: SetId) -> u32 {
        self.entries.get(id.0 as usize).map(|(_, l)| *l).unwrap_or(0)
    }

    pub fn ids(&self) -> impl Iterator<Item = SetId> + '_ {
        (0..self.entries.len() as u32).map(SetId)
    }

    pub fn ids_at_level(&self, level: u32) -> Vec<SetId> {
        self.ids().filter(|&id| self.level(id) == level).collect()
    }

    pub fn record_separator(&mut self, a: SetId, b: SetId, witness: PointName) {
        let key = if a < b { (a, b) } else { (b, a) };
        self.separators.entry(key).or_insert(witness);
    }

    pub fn separator(&self, a: SetId, b: SetId) -> Option<&PointName> {
        let key = if a < b { (a, b) } else { (b, a) };
        self.separators.get(&key)
    }
}

impl Default for Registry {
    fn default() -> Self {
        Registry::new()
    }
}

/// A demand: a finite injection of points paired with a finite injection of
/// registered set names, compatible with membership. The level records the
/// step whose family the set names belong to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Demand {
    pub id: DemandId,
    pub level: u32,
    /// Sorted by source point; injective.
    pub h: Vec<(PointName, PointName)>,
    /// Sorted by source id; injective.
    pub f: Vec<(SetId, SetId)>,
}

impl Demand {
    /// Apply the point map in the direction of the sign.
    pub fn h_apply(&self, p: &PointName, sign: Sign) -> Option<&PointName> {
        match sign {
            Sign::Pos => self.h.iter().find(|(x, _)| x == p).map(|(_, y)| y),
            Sign::Neg => self.h.iter().find(|(_, y)| y == p).map(|(x, _)| x),
        }
    }

    /// Apply the set map in the direction of the sign.
    pub fn f_apply(&self, x: SetId, sign: Sign) -> Option<SetId> {
        match sign {
            Sign::Pos => self.f.iter().find(|&&(a, _)| a == x).map(|&(_, b)| b),
            Sign::Neg => self.f.iter().find(|&&(_, b)| b == x).map(|&(a, _)| a),
        }
    }

    pub fn h_points(&self) -> impl Iterator<Item = &PointName> {
        self.h.iter().flat_map(|(x, y)| [x, y])
    }

    pub fn f_sets(&self) -> impl Iterator<Item = SetId> + '_ {
        self.f.iter().flat_map(|&(a, b)| [a, b])
    }
}

/// Structural checks shared by every session: both maps injective, levels
/// plausible. Membership compatibility is checked by the session, which
/// owns the evaluator.
pub fn check_demand_shape(
    level: u32,
    h: &[(PointName, PointName)],
    f: &[(SetId, SetId)],
    registry: &Registry,
) -> Result<()> {
    for (i, (x, y)) in h.iter().enumerate() {
        if x.level() > level || y.level() > level {
            return Err(Error::LevelMismatch {
                point_level: x.level().max(y.level()),
                set_level: level,
            });
        }
        for (x2, y2) in &h[i + 1..] {
            if x == x2 {
                return Err(Error::NotInjective(format!("point {x} mapped twice")));
            }
            if y == y2 {
                return Err(Error::NotInjective(format!("point {y} hit twice")));
            }
        }
    }
    for (i, &(a, b)) in f.iter().enumerate() {
        registry.expr(a)?;
        registry.expr(b)?;
        if registry.level(a) != level || registry.level(b) != level {
            return Err(Error::WrongLevel(format!(
                "demand at level {level} references {a} at level {} and {b} at level {}",
                registry.level(a),
                registry.level(b)
            )));
        }
        for &(a2, b2) in &f[i + 1..] {
            if a == a2 {
                return Err(Error::SetMapNotInjective(format!("{a} mapped twice")));
            }
            if b == b2 {
                return Err(Error::SetMapNotInjective(format!("{b} hit twice")));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base::evens;

    #[test]
    fn registration_deduplicates_structurally() {
        let mut r = Registry::new();
        let a = r.push(SetExpr::Base(evens()));
        let b = r.push(SetExpr::Base(evens()));
        assert_eq!(a, b);
        assert_eq!(r.len(), 1);
        let lifted = r.push(SetExpr::Lift { step: 0, inner: a });
        assert_eq!(r.level(lifted), 1);
        assert_ne!(lifted, a);
    }

    #[test]
    fn separators_are_symmetric() {
        let mut r = Registry::new();
        let a = r.push(SetExpr::Base(evens()));
        let b = r.push(SetExpr::Base(evens().complement()));
        r.record_separator(b, a, PointName::Atom(0));
        assert_eq!(r.separator(a, b), Some(&PointName::Atom(0)));
        assert_eq!(r.separator(b, a), Some(&PointName::Atom(0)));
    }

    #[test]
    fn demand_shape_rejects_non_injective_maps() {
        let mut r = Registry::new();
        let a = r.push(SetExpr::Base(evens()));
        let b = r.push(SetExpr::Base(evens().complement()));
        let h = vec![
            (PointName::Atom(0), PointName::Atom(1)),
            (PointName::Atom(2), PointName::Atom(1)),
        ];
        assert!(matches!(
            check_demand_shape(0, &h, &[], &r),
            Err(Error::NotInjective(_))
        ));
        let f = vec![(a, b), (a, a)];
        assert!(matches!(
            check_demand_shape(0, &[], &f, &r),
            Err(Error::SetMapNotInjective(_))
        ));
        assert!(check_demand_shape(0, &[], &[(a, b)], &r).is_ok());
    }

    #[test]
    fn demand_maps_apply_in_both_directions() {
        let d = Demand {
            id: DemandId(0),
            level: 0,
            h: vec![(PointName::Atom(0), PointName::Atom(1))],
            f: vec![(SetId(0), SetId(1))],
        };
        assert_eq!(d.h_apply(&PointName::Atom(0), Sign::Pos), Some(&PointName::Atom(1)));
        assert_eq!(d.h_apply(&PointName::Atom(1), Sign::Neg), Some(&PointName::Atom(0)));
        assert_eq!(d.h_apply(&PointName::Atom(1), Sign::Pos), None);
        assert_eq!(d.f_apply(SetId(0), Sign::Pos), Some(SetId(1)));
        assert_eq!(d.f_apply(SetId(1), Sign::Neg), Some(SetId(0)));
        assert_eq!(d.f_apply(SetId(1), Sign::Pos), None);
    }
}

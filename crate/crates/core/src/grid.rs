//! The string universe: points are atoms with histories of appended letter
//! words, one reduced word per construction step, and each registered demand
//! acts as a letter of a free group. Everything here is driven by three
//! mechanisms:
//!
//! * the letter action `xi_letter`: apply the demand's point map where it is
//!   defined on a bare point, otherwise append the letter (with free-group
//!   cancellation against the existing step word);
//! * membership `grid_member`, which peels the last letter of the point and
//!   converts it into a set operation on the name - an f-map lookup for
//!   letters born at the set's step, a recursive word image for older ones;
//! * canonical word-image names `canon_xi`, which rewrite the action image
//!   of a lifted set into the lift of the mapped set whenever the letterwise
//!   f-image is defined, and otherwise keep an explicit image name together
//!   with a bound on its atom trace.
//!
//! On top of these the session offers eta-selectors (pick one side of every
//! complementary generator pair), alphabet pruning, and the disjointness
//! sweep for the pruned universe.

use crate::base::BaseSet;
use crate::error::{Error, Result};
use crate::point::{GridPoint, PointName};
use crate::registry::{check_demand_shape, Demand, Registry, SetExpr, SetId};
use crate::text::{parse_all, Cursor};
use crate::tower::SatisfiesOutcome;
use crate::word::{reduced_words, DemandId, Letter, Sign, Word};
use std::collections::{HashMap, HashSet};

/// Atom bound for separator searches between registered names.
const SEPARATOR_ATOM_BOUND: u64 = 64;

/// Level-0 trace of a registered name: either a generator of the base
/// family, or an explicit finite list of atoms (a family member whenever
/// finite sets are included).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Trace {
    InFamily(SetId),
    FiniteTrace(Vec<u64>),
}

/// A choice of one side from every complementary pair of generators.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EtaSelector {
    /// (selected, rejected) per pair, in generator registration order.
    pairs: Vec<(SetId, SetId)>,
}

impl EtaSelector {
    pub fn pairs(&self) -> &[(SetId, SetId)] {
        &self.pairs
    }

    /// 1 for selected sets, 0 for their complements, None for strangers.
    pub fn value(&self, id: SetId) -> Option<bool> {
        for &(sel, rej) in &self.pairs {
            if id == sel {
                return Some(true);
            }
            if id == rej {
                return Some(false);
            }
        }
        None
    }

    pub fn selected(&self) -> impl Iterator<Item = SetId> + '_ {
        self.pairs.iter().map(|&(sel, _)| sel)
    }
}

/// First pair on which two selectors over the same generator list disagree,
/// returned as (chosen by `a`, chosen by `b`). The two chosen sets are
/// complementary, so each induced family contains a set whose complement
/// generates the other family.
pub fn incompatibility_witness(a: &EtaSelector, b: &EtaSelector) -> Option<(SetId, SetId)> {
    a.pairs.iter().zip(b.pairs.iter()).find_map(|(&(sa, _), &(sb, _))| {
        if sa != sb {
            Some((sa, sb))
        } else {
            None
        }
    })
}

/// The demands that survive selector-driven pruning.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrunedAlphabet {
    /// Sorted demand ids.
    pub allowed: Vec<DemandId>,
}

impl PrunedAlphabet {
    pub fn allows(&self, d: DemandId) -> bool {
        self.allowed.binary_search(&d).is_ok()
    }
}

/// Result of one of the sweeping checks: how many cases were examined and
/// which of them failed (expected: none).
#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub checked: u64,
    pub failures: Vec<String>,
}

impl CheckOutcome {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }
}

/// A lazily evaluated string-universe session: a level-0 generator family,
/// lifted step by step up to `depth`, acted on by the letters of the
/// registered demands.
pub struct GridSession {
    depth: u32,
    budget: u64,
    include_fin: bool,
    registry: Registry,
    demands: Vec<Demand>,
    base_ids: Vec<SetId>,
    /// Recorded atom-trace bounds for word-image names whose letterwise
    /// f-image is undefined.
    orphan_bound: HashMap<SetId, u64>,
    m_demand_memo: HashMap<u32, u64>,
    eta: Option<EtaSelector>,
    prune: Option<PrunedAlphabet>,
}

impl GridSession {
    /// Build a session whose level-0 family is generated by `bases` (plus
    /// every finite set of atoms when `include_fin` holds), exposing levels
    /// 0..=depth. Distinctness of the generators is certified up front by
    /// separating atoms.
    pub fn homogenize(
        bases: Vec<BaseSet>,
        include_fin: bool,
        depth: u32,
        budget: u64,
    ) -> Result<GridSession> {
        if depth == 0 || depth > 16 {
            return Err(Error::Config(format!(
                "session depth must be between 1 and 16, got {depth}"
            )));
        }
        if budget == 0 {
            return Err(Error::Config("budget must be positive".into()));
        }
        let mut s = GridSession {
            depth,
            budget,
            include_fin,
            registry: Registry::new(),
            demands: Vec::new(),
            base_ids: Vec::new(),
            orphan_bound: HashMap::new(),
            m_demand_memo: HashMap::new(),
            eta: None,
            prune: None,
        };
        if bases.is_empty() {
            return Err(Error::Config("at least one generator set is required".into()));
        }
        for b in bases {
            s.register_base(b)?;
        }
        Ok(s)
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn demands(&self) -> &[Demand] {
        &self.demands
    }

    pub fn base_ids(&self) -> &[SetId] {
        &self.base_ids
    }

    pub fn fin_included(&self) -> bool {
        self.include_fin
    }

    /// Without finite sets in the family, orphan traces may land outside it;
    /// sessions built that way carry this warning flag.
    pub fn fin_warning(&self) -> bool {
        !self.include_fin
    }

    pub fn eta(&self) -> Option<&EtaSelector> {
        self.eta.as_ref()
    }

    pub fn pruned_alphabet(&self) -> Option<&PrunedAlphabet> {
        self.prune.as_ref()
    }

    /// Install a pruned alphabet directly (session restore and adversarial
    /// tests); `prune_alphabet` is the computed path.
    pub fn set_pruned_alphabet(&mut self, pa: PrunedAlphabet) {
        self.prune = Some(pa);
    }

    pub fn demand(&self, id: DemandId) -> Result<&Demand> {
        self.demands
            .get(id.0 as usize)
            .ok_or(Error::UnknownDemand(id.0))
    }

    /// Register a level-0 generator. The normalized form is deduplicated and
    /// separated from every previously registered base set.
    pub fn register_base(&mut self, b: BaseSet) -> Result<SetId> {
        let b = b.normalize();
        let id = self.registry.push(SetExpr::Base(b));
        for other in self.registry.ids_at_level(0) {
            if other != id {
                self.ensure_separator(id, other)?;
            }
        }
        if !self.base_ids.contains(&id) {
            self.base_ids.push(id);
        }
        Ok(id)
    }

    /// The chain name of `id` at `level`: iterated one-step lifts.
    pub fn lift_to(&mut self, id: SetId, level: u32) -> Result<SetId> {
        let cur_level = self.registry.level(id);
        if level < cur_level {
            return Err(Error::WrongLevel(format!(
                "cannot lower {} from level {cur_level} to {level}",
                self.describe(id)
            )));
        }
        if level > self.depth {
            return Err(Error::WrongLevel(format!(
                "level {level} is beyond the session depth {}",
                self.depth
            )));
        }
        let mut cur = id;
        for step in cur_level..level {
            cur = self.registry.push(SetExpr::Lift { step, inner: cur });
        }
        Ok(cur)
    }

    /// Register a demand at `level`: a finite injection of points of level
    /// <= `level` and a finite injection of level-`level` names, compatible
    /// with membership. Registering the same content twice returns the
    /// original id.
    pub fn add_demand(
        &mut self,
        level: u32,
        h: Vec<(PointName, PointName)>,
        f: Vec<(SetId, SetId)>,
    ) -> Result<DemandId> {
        if level + 1 > self.depth {
            return Err(Error::WrongLevel(format!(
                "a demand at step {level} acts into level {}, beyond the session depth {}",
                level + 1,
                self.depth
            )));
        }
        for (x, y) in &h {
            self.require_canonical(x)?;
            self.require_canonical(y)?;
        }
        check_demand_shape(level, &h, &f, &self.registry)?;
        for (x, y) in &h {
            for &(a, b) in &f {
                let in_a = self.grid_member(x, a)?;
                let in_b = self.grid_member(y, b)?;
                if in_a != in_b {
                    return Err(Error::CompatibilityViolation {
                        point: x.to_string(),
                        set: self.describe(a),
                    });
                }
            }
        }
        let mut h = h;
        h.sort_by(|p, q| p.0.cmp(&q.0));
        let mut f = f;
        f.sort_by_key(|&(a, _)| a);
        if let Some(d) = self
            .demands
            .iter()
            .find(|d| d.level == level && d.h == h && d.f == f)
        {
            return Ok(d.id);
        }
        let id = DemandId(self.demands.len() as u32);
        self.demands.push(Demand { id, level, h, f });
        Ok(id)
    }

    /// A point name is canonical when replaying its letters from the base
    /// atom reproduces it: no letter is absorbed by a point map, no word
    /// collapses. Demands and exported data must use canonical names.
    pub fn canonical_point(&mut self, p: &PointName) -> Result<PointName> {
        match p {
            PointName::Atom(_) => Ok(p.clone()),
            PointName::B(_) => Err(Error::WrongLevel(
                "table points do not live in the string universe".into(),
            )),
            PointName::Grid(g) => {
                let mut cur = PointName::Atom(g.base);
                for (step, w) in &g.history {
                    cur = self.xi_apply(*step, w, &cur)?;
                }
                Ok(cur)
            }
        }
    }

    fn require_canonical(&mut self, p: &PointName) -> Result<()> {
        let canon = self.canonical_point(p)?;
        if canon != *p {
            return Err(Error::Config(format!(
                "{p} is not a canonical string point (it denotes {canon})"
            )));
        }
        Ok(())
    }

    /// One letter of the step-`n` action. A point that is bare at step `n`
    /// (no step-`n` word yet) and lies in the letter's point map moves by
    /// that map; every other point gets the letter appended to its step-`n`
    /// word, cancelling against an inverse tail letter.
    pub fn xi_letter(&mut self, n: u32, l: Letter, p: &PointName) -> Result<PointName> {
        if n >= self.depth {
            return Err(Error::WrongLevel(format!(
                "step {n} acts into level {}, beyond the session depth {}",
                n + 1,
                self.depth
            )));
        }
        let d = self.demand(l.demand)?.clone();
        if d.level > n {
            return Err(Error::WrongLevel(format!(
                "demand d{} first exists at step {}, it cannot act at step {n}",
                l.demand.0, d.level
            )));
        }
        if matches!(p, PointName::B(_)) {
            return Err(Error::WrongLevel(
                "table points do not live in the string universe".into(),
            ));
        }
        if p.level() > n + 1 {
            return Err(Error::LevelMismatch { point_level: p.level(), set_level: n + 1 });
        }
        if p.level() <= n {
            if let Some(q) = d.h_apply(p, l.sign) {
                return Ok(q.clone());
            }
        }
        push_letter(p, n, l)
    }

    /// The step-`n` action of a whole word, letters applied left to right.
    /// This composes as a right action: the image under `u.compose(&v)` is
    /// the image under `v` of the image under `u`.
    pub fn xi_apply(&mut self, n: u32, w: &Word, p: &PointName) -> Result<PointName> {
        let mut cur = p.clone();
        for &l in w.letters() {
            cur = self.xi_letter(n, l, &cur)?;
        }
        Ok(cur)
    }

    /// Decide membership of a point in a registered name. Non-canonical
    /// string points are accepted and resolved to the point they denote.
    pub fn grid_member(&mut self, p: &PointName, s: SetId) -> Result<bool> {
        let canon = self.canonical_point(p)?;
        let mut steps = 0u64;
        self.member_inner(&canon, s, &mut steps)
    }

    fn member_inner(&mut self, p: &PointName, s: SetId, steps: &mut u64) -> Result<bool> {
        *steps += 1;
        if *steps > self.budget {
            return Err(Error::BudgetExceeded {
                budget: self.budget,
                what: "membership recursion".into(),
            });
        }
        let set_level = self.registry.level(s);
        if p.level() > set_level {
            return Err(Error::LevelMismatch {
                point_level: p.level(),
                set_level,
            });
        }
        match self.registry.expr(s)?.clone() {
            SetExpr::Base(b) => {
                let a = p.as_atom().expect("level-0 points are atoms");
                Ok(b.member(a))
            }
            SetExpr::FiniteAt { points, .. } => Ok(points.contains(p)),
            SetExpr::CofiniteAt { points, .. } => Ok(!points.contains(p)),
            SetExpr::Lift { step, inner } => {
                if p.level() <= step {
                    // The lift meets the lower universe in exactly the inner set.
                    return self.member_inner(p, inner, steps);
                }
                let (rest, wstep, l) =
                    pop_letter(p).expect("a point above the lift step carries a letter");
                debug_assert_eq!(wstep, step);
                let d = self.demand(l.demand)?.clone();
                let target = if d.level == step {
                    // Letter born at this step: membership transports along
                    // the inverse f-map, and a missing preimage decides.
                    match d.f_apply(inner, l.sign.flip()) {
                        None => return Ok(false),
                        Some(y) => y,
                    }
                } else {
                    // Older letter: its action already exists one level
                    // down, so take the set image there.
                    self.word_image(step, &Word::letter(l.inverse()), inner)?
                };
                let lifted = self.registry.push(SetExpr::Lift { step, inner: target });
                self.member_inner(&rest, lifted, steps)
            }
            SetExpr::Xi { step, word, inner } => {
                let q = self.xi_apply(step, &word.invert(), p)?;
                self.member_inner(&q, inner, steps)
            }
            SetExpr::Perm { .. } => Err(Error::Internal(
                "permutation-image names do not occur in string sessions".into(),
            )),
        }
    }

    /// Image of the level-`lvl` name `y` under a word whose letters all live
    /// strictly below `lvl`. Total: lifted names rewrite through the
    /// letterwise f-image one level down, explicit point lists map
    /// pointwise, and word-image names compose their words.
    pub fn word_image(&mut self, lvl: u32, w: &Word, y: SetId) -> Result<SetId> {
        if self.registry.level(y) != lvl {
            return Err(Error::WrongLevel(format!(
                "word image at level {lvl} applied to {} at level {}",
                self.describe(y),
                self.registry.level(y)
            )));
        }
        for l in w.letters() {
            if self.demand(l.demand)?.level >= lvl {
                return Err(Error::WrongLevel(format!(
                    "letter d{} is not older than level {lvl}",
                    l.demand.0
                )));
            }
        }
        if w.is_empty() {
            return Ok(y);
        }
        match self.registry.expr(y)?.clone() {
            SetExpr::Lift { step, inner } => self.canon_xi(step, w, inner),
            SetExpr::Xi { step, word, inner } => {
                let SetExpr::Lift { inner: x, .. } = self.registry.expr(inner)?.clone() else {
                    return Err(Error::Internal(
                        "word-image name whose inner name is not a lift".into(),
                    ));
                };
                self.canon_xi(step, &word.compose(w), x)
            }
            SetExpr::FiniteAt { level, points } => {
                let points = self.map_points(lvl - 1, w, points)?;
                Ok(self.registry.push(SetExpr::FiniteAt { level, points }))
            }
            SetExpr::CofiniteAt { level, points } => {
                let points = self.map_points(lvl - 1, w, points)?;
                Ok(self.registry.push(SetExpr::CofiniteAt { level, points }))
            }
            SetExpr::Base(_) => Err(Error::WrongLevel(
                "no letters act below the base level".into(),
            )),
            SetExpr::Perm { .. } => Err(Error::Internal(
                "permutation-image names do not occur in string sessions".into(),
            )),
        }
    }

    fn map_points(&mut self, n: u32, w: &Word, points: Vec<PointName>) -> Result<Vec<PointName>> {
        let mut out = Vec::with_capacity(points.len());
        for p in &points {
            out.push(self.xi_apply(n, w, p)?);
        }
        out.sort();
        out.dedup();
        Ok(out)
    }

    /// Canonical name for the step-`n` action image of the lift of `x`
    /// under `w`. The longest prefix with a letterwise image folds into a
    /// plain lift; an undefined letter leaves an explicit word-image name
    /// for the remainder, with a recorded bound on its atom trace.
    pub fn canon_xi(&mut self, n: u32, w: &Word, x: SetId) -> Result<SetId> {
        if n >= self.depth {
            return Err(Error::WrongLevel(format!(
                "step {n} acts into level {}, beyond the session depth {}",
                n + 1,
                self.depth
            )));
        }
        if self.registry.level(x) != n {
            return Err(Error::WrongLevel(format!(
                "step-{n} image of {} at level {}",
                self.describe(x),
                self.registry.level(x)
            )));
        }
        let letters = w.letters().to_vec();
        for l in &letters {
            if self.demand(l.demand)?.level > n {
                return Err(Error::WrongLevel(format!(
                    "letter d{} does not act at step {n}",
                    l.demand.0
                )));
            }
        }
        let mut cur = x;
        let mut i = 0;
        while i < letters.len() {
            let l = letters[i];
            if self.demand(l.demand)?.level == n {
                match self.demand(l.demand)?.f_apply(cur, l.sign) {
                    Some(y) => {
                        cur = y;
                        i += 1;
                    }
                    None => break,
                }
            } else {
                let mut j = i;
                while j < letters.len() && self.demand(letters[j].demand)?.level < n {
                    j += 1;
                }
                let block = Word::reduce(letters[i..j].iter().copied());
                cur = self.word_image(n, &block, cur)?;
                i = j;
            }
        }
        let lifted = self.registry.push(SetExpr::Lift { step: n, inner: cur });
        if i == letters.len() {
            return Ok(lifted);
        }
        let remainder = Word::reduce(letters[i..].iter().copied());
        let id = self.registry.push(SetExpr::Xi { step: n, word: remainder.clone(), inner: lifted });
        if !self.orphan_bound.contains_key(&id) {
            let bound = self.compute_orphan_bound(&remainder, cur)?;
            self.orphan_bound.insert(id, bound);
        }
        Ok(id)
    }

    /// Bound on the atom trace of the word-image name for `remainder`
    /// applied to the lift of `cur`. Above the bound the remainder appends
    /// as a plain string, and peeling its first letter needs an f-preimage
    /// that stays missing at every level where `cur` is separated from each
    /// set the letter reads from; the bound dominates the word's own level
    /// and those separators.
    fn compute_orphan_bound(&mut self, remainder: &Word, cur: SetId) -> Result<u64> {
        let mut bound = self.m_word(remainder)?;
        let first = remainder.letters()[0];
        let d = self.demand(first.demand)?.clone();
        let read_side: Vec<SetId> = d
            .f
            .iter()
            .map(|&(a, b)| if first.sign == Sign::Pos { a } else { b })
            .collect();
        for s in read_side {
            if s == cur {
                continue;
            }
            let witness = self.ensure_separator(cur, s)?;
            bound = bound.max(self.m_point(&witness)?);
        }
        Ok(bound)
    }

    /// Recorded (or recomputed) atom-trace bound of a word-image name.
    pub fn orphan_trace_bound(&mut self, id: SetId) -> Result<u64> {
        if let Some(&b) = self.orphan_bound.get(&id) {
            return Ok(b);
        }
        let SetExpr::Xi { word, inner, .. } = self.registry.expr(id)?.clone() else {
            return Err(Error::WrongLevel(format!(
                "{} is not a word-image name",
                self.describe(id)
            )));
        };
        let SetExpr::Lift { inner: x, .. } = self.registry.expr(inner)?.clone() else {
            return Err(Error::Internal(
                "word-image name whose inner name is not a lift".into(),
            ));
        };
        let b = self.compute_orphan_bound(&word, x)?;
        self.orphan_bound.insert(id, b);
        Ok(b)
    }

    pub fn orphan_bounds(&self) -> &HashMap<SetId, u64> {
        &self.orphan_bound
    }

    /// Level-0 trace of a name: chain names descend to their base set,
    /// word-image names enumerate their atoms exactly within the recorded
    /// bound, explicit finite lists keep their atoms.
    pub fn trace(&mut self, s: SetId) -> Result<Trace> {
        match self.registry.expr(s)?.clone() {
            SetExpr::Base(_) => Ok(Trace::InFamily(s)),
            SetExpr::Lift { inner, .. } => self.trace(inner),
            SetExpr::Xi { .. } => {
                let bound = self.orphan_trace_bound(s)?;
                let mut atoms = Vec::new();
                for i in 0..=bound {
                    if self.grid_member(&PointName::Atom(i), s)? {
                        atoms.push(i);
                    }
                }
                Ok(Trace::FiniteTrace(atoms))
            }
            SetExpr::FiniteAt { points, .. } => {
                Ok(Trace::FiniteTrace(points.iter().filter_map(|p| p.as_atom()).collect()))
            }
            SetExpr::CofiniteAt { .. } => Err(Error::WrongLevel(
                "cofinite point lists have no level-0 trace descriptor".into(),
            )),
            SetExpr::Perm { .. } => Err(Error::Internal(
                "permutation-image names do not occur in string sessions".into(),
            )),
        }
    }

    /// Separating point for two distinct registered names, searched lazily:
    /// recorded witnesses first, structural inheritance along same-step
    /// lifts, decidable comparison for base sets, then bounded scans over
    /// atoms and short strings.
    pub fn ensure_separator(&mut self, a: SetId, b: SetId) -> Result<PointName> {
        if a == b {
            return Err(Error::Internal("separator of a name from itself".into()));
        }
        if let Some(p) = self.registry.separator(a, b) {
            return Ok(p.clone());
        }
        let ea = self.registry.expr(a)?.clone();
        let eb = self.registry.expr(b)?.clone();
        if let (SetExpr::Lift { step: sa, inner: ia }, SetExpr::Lift { step: sb, inner: ib }) =
            (&ea, &eb)
        {
            if sa == sb && ia != ib {
                let w = self.ensure_separator(*ia, *ib)?;
                self.registry.record_separator(a, b, w.clone());
                return Ok(w);
            }
        }
        if let (SetExpr::Base(x), SetExpr::Base(y)) = (&ea, &eb) {
            return match x.separator(y, SEPARATOR_ATOM_BOUND) {
                Some(i) => {
                    let w = PointName::Atom(i);
                    self.registry.record_separator(a, b, w.clone());
                    Ok(w)
                }
                None => Err(Error::SeparationFailure {
                    left: a.0,
                    right: b.0,
                    bound: SEPARATOR_ATOM_BOUND,
                }),
            };
        }
        let level = self.registry.level(a).max(self.registry.level(b));
        for cand in self.separator_candidates(level)? {
            if cand.level() > self.registry.level(a).min(self.registry.level(b)) {
                continue;
            }
            if self.grid_member(&cand, a)? != self.grid_member(&cand, b)? {
                self.registry.record_separator(a, b, cand.clone());
                return Ok(cand);
            }
        }
        Err(Error::SeparationFailure { left: a.0, right: b.0, bound: SEPARATOR_ATOM_BOUND })
    }

    /// Atoms, then short strings over the registered demands.
    fn separator_candidates(&mut self, level: u32) -> Result<Vec<PointName>> {
        let mut out: Vec<PointName> =
            (0..=SEPARATOR_ATOM_BOUND).map(PointName::Atom).collect();
        let demands: Vec<Demand> = self.demands.clone();
        let mut strings = Vec::new();
        for d in &demands {
            for n in d.level..level.min(self.depth) {
                for sign in [Sign::Pos, Sign::Neg] {
                    for atom in 0..8u64 {
                        let l = Letter { demand: d.id, sign };
                        let p = self.xi_letter(n, l, &PointName::Atom(atom))?;
                        strings.push(p);
                    }
                }
            }
        }
        for d in &demands {
            for n in d.level..level.min(self.depth) {
                for sign in [Sign::Pos, Sign::Neg] {
                    let l = Letter { demand: d.id, sign };
                    for base in strings.clone() {
                        if base.level() <= n + 1 {
                            strings.push(self.xi_letter(n, l, &base)?);
                        }
                        if strings.len() > 512 {
                            break;
                        }
                    }
                }
            }
        }
        strings.sort();
        strings.dedup();
        out.extend(strings);
        Ok(out)
    }

    /// Least level at which the point exists: its base atom and the levels
    /// of every letter demand in its history.
    pub fn m_point(&mut self, p: &PointName) -> Result<u64> {
        match p {
            PointName::Atom(a) => Ok(*a),
            PointName::B(_) => Err(Error::WrongLevel(
                "table points do not live in the string universe".into(),
            )),
            PointName::Grid(g) => {
                let mut m = g.base;
                for (_, w) in &g.history {
                    m = m.max(self.m_word(w)?);
                }
                Ok(m)
            }
        }
    }

    /// Least level at which every letter of the word is defined.
    pub fn m_word(&mut self, w: &Word) -> Result<u64> {
        let mut m = 0;
        for l in w.letters() {
            m = m.max(self.m_demand(l.demand)?);
        }
        Ok(m)
    }

    /// Least level at which the demand restricts to a well-defined demand:
    /// all point-map endpoints exist and all names touched by the set map
    /// still have distinct traces, certified by separator levels.
    pub fn m_demand(&mut self, id: DemandId) -> Result<u64> {
        if let Some(&m) = self.m_demand_memo.get(&id.0) {
            return Ok(m);
        }
        let d = self.demand(id)?.clone();
        let mut m = 0;
        for (x, y) in &d.h {
            m = m.max(self.m_point(x)?).max(self.m_point(y)?);
        }
        let mut names: Vec<SetId> = d.f_sets().collect();
        names.sort();
        names.dedup();
        for (i, &a) in names.iter().enumerate() {
            for &b in &names[i + 1..] {
                let w = self.ensure_separator(a, b)?;
                m = m.max(self.m_point(&w)?);
            }
        }
        self.m_demand_memo.insert(id.0, m);
        Ok(m)
    }

    /// Least level at which the name's trace is a family member for every
    /// level from there on.
    pub fn m_name(&mut self, s: SetId) -> Result<u64> {
        match self.registry.expr(s)?.clone() {
            SetExpr::Base(_) => Ok(0),
            SetExpr::Lift { inner, .. } => self.m_name(inner),
            SetExpr::Xi { .. } => self.orphan_trace_bound(s),
            SetExpr::FiniteAt { points, .. } | SetExpr::CofiniteAt { points, .. } => {
                let mut m = 0;
                for p in &points {
                    m = m.max(self.m_point(p)?);
                }
                Ok(m)
            }
            SetExpr::Perm { .. } => Err(Error::Internal(
                "permutation-image names do not occur in string sessions".into(),
            )),
        }
    }

    /// The demand viewed at level `m`, or None when it does not restrict
    /// there. Defined levels are upward closed, so this is monotone in `m`.
    pub fn restrict_demand(&mut self, id: DemandId, m: u64) -> Result<Option<Demand>> {
        if self.m_demand(id)? <= m {
            Ok(Some(self.demand(id)?.clone()))
        } else {
            Ok(None)
        }
    }

    /// Check that the demand's own letter acts as a satisfier: the point
    /// map is realized on its pairs and membership transports along the set
    /// map on sampled points in both directions.
    pub fn check_satisfies(&mut self, id: DemandId, sample_atoms: u64) -> Result<SatisfiesOutcome> {
        let d = self.demand(id)?.clone();
        let n = d.level;
        let pos = Letter::pos(id);
        for (x, y) in &d.h {
            let img = self.xi_letter(n, pos, x)?;
            if img != *y {
                return Ok(SatisfiesOutcome {
                    ok: false,
                    witness: Some(format!("point map: {x} moves to {img}, expected {y}")),
                });
            }
            let back = self.xi_letter(n, pos.inverse(), y)?;
            if back != *x {
                return Ok(SatisfiesOutcome {
                    ok: false,
                    witness: Some(format!("inverse point map: {y} moves to {back}, expected {x}")),
                });
            }
        }
        let samples = self.sample_points(n, sample_atoms)?;
        for &(a, b) in &d.f {
            let phi_a = self.lift_to(a, n + 1)?;
            let phi_b = self.lift_to(b, n + 1)?;
            for p in &samples {
                let img = self.xi_letter(n, pos, p)?;
                let before = self.grid_member(p, phi_a)?;
                let after = self.grid_member(&img, phi_b)?;
                if before != after {
                    return Ok(SatisfiesOutcome {
                        ok: false,
                        witness: Some(format!(
                            "set map: {p} in {} is {before}, image {img} in {} is {after}",
                            self.describe(phi_a),
                            self.describe(phi_b)
                        )),
                    });
                }
                let pre = self.xi_letter(n, pos.inverse(), p)?;
                let before = self.grid_member(p, phi_b)?;
                let after = self.grid_member(&pre, phi_a)?;
                if before != after {
                    return Ok(SatisfiesOutcome {
                        ok: false,
                        witness: Some(format!(
                            "inverse set map: {p} in {} is {before}, preimage {pre} in {} is {after}",
                            self.describe(phi_b),
                            self.describe(phi_a)
                        )),
                    });
                }
            }
        }
        Ok(SatisfiesOutcome { ok: true, witness: None })
    }

    /// Atoms up to the bound plus one short string per demand usable at
    /// step `n`, all of level <= n+1.
    fn sample_points(&mut self, n: u32, atoms: u64) -> Result<Vec<PointName>> {
        let mut out: Vec<PointName> = (0..=atoms).map(PointName::Atom).collect();
        for d in self.demands.clone() {
            if d.level <= n {
                let p = self.xi_letter(n, Letter::pos(d.id), &PointName::Atom(atoms / 2))?;
                out.push(p);
                let q = self.xi_letter(n, Letter::neg(d.id), &PointName::Atom(atoms / 3))?;
                out.push(q);
            }
        }
        out.sort();
        out.dedup();
        Ok(out)
    }

    /// Sweep every registered name: its trace must land in the generator
    /// family or be finite (allowed when finite sets are family members).
    pub fn check_projection(&mut self) -> Result<CheckOutcome> {
        let ids: Vec<SetId> = self.registry.ids().collect();
        let mut checked = 0;
        let mut failures = Vec::new();
        for id in ids {
            match self.registry.expr(id)? {
                SetExpr::Perm { .. } | SetExpr::CofiniteAt { .. } => continue,
                _ => {}
            }
            checked += 1;
            match self.trace(id)? {
                Trace::InFamily(b) => {
                    let finite_base = matches!(
                        self.registry.expr(b)?,
                        SetExpr::Base(s) if s.is_finite()
                    );
                    if !self.base_ids.contains(&b) && !(finite_base && self.include_fin) {
                        failures.push(format!(
                            "{}: trace lands outside the generator family",
                            self.describe(id)
                        ));
                    }
                }
                Trace::FiniteTrace(_) => {
                    if !self.include_fin {
                        failures.push(format!(
                            "{}: finite trace, but finite sets are not family members",
                            self.describe(id)
                        ));
                    }
                }
            }
        }
        Ok(CheckOutcome { checked, failures })
    }

    /// Sweep reduced words: beyond its own level every word moves every
    /// atom, never raises levels, and distinct words produce distinct
    /// images of a common far atom.
    pub fn check_free_action(&mut self, max_len: usize, spread: u64) -> Result<CheckOutcome> {
        let ids: Vec<DemandId> = self.demands.iter().map(|d| d.id).collect();
        let mut checked = 0;
        let mut failures = Vec::new();
        if ids.is_empty() {
            return Ok(CheckOutcome { checked, failures });
        }
        let n = self.depth - 1;
        let words = reduced_words(&ids, max_len);
        let mut far = 0;
        for w in &words {
            far = far.max(self.m_word(w)?);
        }
        let mut images: HashMap<PointName, Word> = HashMap::new();
        for w in &words {
            let m = self.m_word(w)?;
            for a in (m + 1)..=(m + spread.max(1)) {
                checked += 1;
                let p = PointName::Atom(a);
                let img = self.xi_apply(n, w, &p)?;
                if img == p {
                    failures.push(format!("{w} fixes a{a} beyond its level {m}"));
                }
                let lvl = self.m_point(&img)?;
                if lvl > m.max(a) {
                    failures.push(format!(
                        "{w} raises a{a} from level {a} to level {lvl}"
                    ));
                }
            }
            checked += 1;
            let img = self.xi_apply(n, w, &PointName::Atom(far + 1))?;
            if let Some(prev) = images.insert(img, w.clone()) {
                failures.push(format!("{w} and {prev} agree on a{}", far + 1));
            }
        }
        Ok(CheckOutcome { checked, failures })
    }

    /// Sweep (word, generator) pairs: the canonical image name must agree
    /// with the pointwise action on samples, and word-image names must keep
    /// their atom trace inside the recorded bound.
    pub fn check_star2(&mut self, max_len: usize, sample_atoms: u64) -> Result<CheckOutcome> {
        let ids: Vec<DemandId> = self.demands.iter().map(|d| d.id).collect();
        let mut checked = 0;
        let mut failures = Vec::new();
        let words = reduced_words(&ids, max_len);
        let bases = self.base_ids.clone();
        for w in &words {
            let mut n = 0;
            for l in w.letters() {
                n = n.max(self.demand(l.demand)?.level);
            }
            if n + 1 > self.depth {
                continue;
            }
            for &b in &bases {
                let x = self.lift_to(b, n)?;
                let name = self.canon_xi(n, w, x)?;
                let phi_x = self.lift_to(b, n + 1)?;
                let samples = self.sample_points(n, sample_atoms)?;
                for p in &samples {
                    checked += 1;
                    let via_name = self.grid_member(p, name)?;
                    let q = self.xi_apply(n, &w.invert(), p)?;
                    let via_action = self.grid_member(&q, phi_x)?;
                    if via_name != via_action {
                        failures.push(format!(
                            "{} disagrees with the action of {w} at {p}",
                            self.describe(name)
                        ));
                    }
                }
                if matches!(self.registry.expr(name)?, SetExpr::Xi { .. }) {
                    let bound = self.orphan_trace_bound(name)?;
                    for i in (bound + 1)..=(bound + 16) {
                        checked += 1;
                        if self.grid_member(&PointName::Atom(i), name)? {
                            failures.push(format!(
                                "{}: trace atom a{i} beyond the recorded bound {bound}",
                                self.describe(name)
                            ));
                        }
                    }
                }
            }
        }
        Ok(CheckOutcome { checked, failures })
    }

    /// Pair every generator with its complement and select the picked side
    /// of each pair. Finite sets are family members regardless of any
    /// selector, so a pick may not reject the finite side of a pair.
    pub fn eta_make(&mut self, picks: &[bool]) -> Result<EtaSelector> {
        let gens = self.base_ids.clone();
        let mut used: HashSet<SetId> = HashSet::new();
        let mut paired: Vec<(SetId, SetId)> = Vec::new();
        for &g in &gens {
            if used.contains(&g) {
                continue;
            }
            let SetExpr::Base(b) = self.registry.expr(g)?.clone() else {
                return Err(Error::Internal("generator is not a base set".into()));
            };
            let comp = b.complement();
            let partner = self
                .registry
                .find(&SetExpr::Base(comp))
                .filter(|c| gens.contains(c));
            let Some(c) = partner else {
                return Err(Error::NotComplementClosed(format!(
                    "generator {} has no complement among the generators",
                    self.describe(g)
                )));
            };
            used.insert(g);
            used.insert(c);
            paired.push((g, c));
        }
        if picks.len() != paired.len() {
            return Err(Error::Config(format!(
                "{} picks supplied for {} complementary pairs",
                picks.len(),
                paired.len()
            )));
        }
        let mut pairs = Vec::new();
        for (i, &(x, xc)) in paired.iter().enumerate() {
            let (sel, rej) = if picks[i] { (x, xc) } else { (xc, x) };
            let rejected_finite =
                matches!(self.registry.expr(rej)?, SetExpr::Base(s) if s.is_finite());
            let selected_finite =
                matches!(self.registry.expr(sel)?, SetExpr::Base(s) if s.is_finite());
            if self.include_fin && rejected_finite && !selected_finite {
                return Err(Error::BadSelector(format!(
                    "pick {i} rejects {}, which is finite and therefore a family member either way",
                    self.describe(rej)
                )));
            }
            pairs.push((sel, rej));
        }
        let sel = EtaSelector { pairs };
        self.eta = Some(sel.clone());
        Ok(sel)
    }

    /// Keep exactly the demands that are safe for the selected family: no
    /// complementary pair of generators may appear together on one side of
    /// the set map. Both sides are checked because the free group contains
    /// each letter's inverse, whose range is the original domain.
    pub fn prune_alphabet(&mut self, sel: &EtaSelector) -> Result<PrunedAlphabet> {
        let demands = self.demands.clone();
        let mut allowed = Vec::new();
        for d in &demands {
            if self.demand_is_selector_safe(d, sel)? {
                allowed.push(d.id);
            }
        }
        allowed.sort();
        let pa = PrunedAlphabet { allowed };
        self.prune = Some(pa.clone());
        Ok(pa)
    }

    fn demand_is_selector_safe(&mut self, d: &Demand, sel: &EtaSelector) -> Result<bool> {
        let dom: Vec<SetId> = d.f.iter().map(|&(a, _)| a).collect();
        let ran: Vec<SetId> = d.f.iter().map(|&(_, b)| b).collect();
        for side in [dom, ran] {
            let mut bases = HashSet::new();
            for id in side {
                if let Some(b) = self.chain_base(id)? {
                    bases.insert(b);
                }
            }
            for &(x, xc) in sel.pairs() {
                if bases.contains(&x) && bases.contains(&xc) {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    /// Base set at the bottom of a chain of lifts, if the name is one.
    pub fn chain_base(&self, id: SetId) -> Result<Option<SetId>> {
        let mut cur = id;
        loop {
            match self.registry.expr(cur)? {
                SetExpr::Base(_) => return Ok(Some(cur)),
                SetExpr::Lift { inner, .. } => cur = *inner,
                _ => return Ok(None),
            }
        }
    }

    /// Membership in the pruned universe: every letter of every history
    /// word must be an allowed demand. Atoms always belong.
    pub fn pruned_member(&self, p: &PointName) -> Result<bool> {
        let Some(pa) = &self.prune else {
            return Err(Error::Config("pruning is not enabled for this session".into()));
        };
        match p {
            PointName::Atom(_) => Ok(true),
            PointName::B(_) => Err(Error::WrongLevel(
                "table points do not live in the string universe".into(),
            )),
            PointName::Grid(g) => Ok(g
                .history
                .iter()
                .all(|(_, w)| w.letters().iter().all(|l| pa.allows(l.demand)))),
        }
    }

    /// Exhaust the pruned orbit of the bounded atoms (up to `applications`
    /// appended letters) and verify that no point lies in the lifts of both
    /// halves of the given complementary pair.
    pub fn disjointness_check(
        &mut self,
        x0: SetId,
        x1: SetId,
        applications: u32,
        atom_bound: u64,
    ) -> Result<CheckOutcome> {
        let Some(pa) = self.prune.clone() else {
            return Err(Error::Config("pruning is not enabled for this session".into()));
        };
        if self.registry.level(x0) != 0 || self.registry.level(x1) != 0 {
            return Err(Error::WrongLevel(
                "disjointness pairs are level-0 generators".into(),
            ));
        }
        let top0 = self.lift_to(x0, self.depth)?;
        let top1 = self.lift_to(x1, self.depth)?;
        let mut seen: HashSet<PointName> = (0..=atom_bound).map(PointName::Atom).collect();
        let mut frontier: Vec<PointName> = seen.iter().cloned().collect();
        for _ in 0..applications {
            let mut next = Vec::new();
            for p in &frontier {
                for &did in &pa.allowed {
                    let dl = self.demand(did)?.level;
                    for sign in [Sign::Pos, Sign::Neg] {
                        let l = Letter { demand: did, sign };
                        for n in dl..self.depth {
                            if p.level() > n + 1 {
                                continue;
                            }
                            let q = self.xi_letter(n, l, p)?;
                            if seen.len() as u64 >= self.budget {
                                return Err(Error::BudgetExceeded {
                                    budget: self.budget,
                                    what: "pruned orbit enumeration".into(),
                                });
                            }
                            if seen.insert(q.clone()) {
                                next.push(q);
                            }
                        }
                    }
                }
            }
            frontier = next;
        }
        let mut checked = 0;
        let mut failures = Vec::new();
        for p in &seen {
            checked += 1;
            if self.grid_member(p, top0)? && self.grid_member(p, top1)? {
                failures.push(format!(
                    "{p} lies in both {} and {}",
                    self.describe(top0),
                    self.describe(top1)
                ));
            }
        }
        failures.sort();
        Ok(CheckOutcome { checked, failures })
    }

    /// Canonical text for a registered name; parseable by `parse_set_with`.
    pub fn describe(&self, id: SetId) -> String {
        match self.registry.expr(id) {
            Ok(SetExpr::Base(b)) => b.to_string(),
            Ok(SetExpr::Lift { step, inner }) => {
                format!("Phi{step}({})", self.describe(*inner))
            }
            Ok(SetExpr::Xi { step, word, inner }) => {
                format!("xi{step}({word})[{}]", self.describe(*inner))
            }
            Ok(SetExpr::FiniteAt { level, points }) => {
                let items: Vec<String> = points.iter().map(|p| p.to_string()).collect();
                format!("finat{level}[{}]", items.join(","))
            }
            Ok(SetExpr::CofiniteAt { level, points }) => {
                let items: Vec<String> = points.iter().map(|p| p.to_string()).collect();
                format!("cofinat{level}[{}]", items.join(","))
            }
            Ok(SetExpr::Perm { perm, inner }) => {
                format!("perm{}({})", perm.0, self.describe(*inner))
            }
            Err(_) => format!("S{}?", id.0),
        }
    }

    /// Parse a set expression. Identifiers resolve through the caller's
    /// lookup; base-set literals resolve to registered generators (finite
    /// literals register on the fly when finite sets are family members).
    pub fn parse_set_with(
        &mut self,
        src: &str,
        lookup: &dyn Fn(&str) -> Option<SetId>,
    ) -> Result<SetId> {
        parse_all(src, |cur| self.parse_set_from(cur, lookup))
    }

    fn parse_set_from(
        &mut self,
        cur: &mut Cursor,
        lookup: &dyn Fn(&str) -> Option<SetId>,
    ) -> Result<SetId> {
        if peek_keyword(cur, "Phi") {
            cur.eat_str("Phi");
            let step = nat_u32(cur)?;
            cur.expect('(')?;
            let inner = self.parse_set_from(cur, lookup)?;
            cur.expect(')')?;
            if self.registry.level(inner) != step {
                return Err(cur.err(format!(
                    "Phi{step} needs a level-{step} set, found level {}",
                    self.registry.level(inner)
                )));
            }
            if step + 1 > self.depth {
                return Err(cur.err(format!(
                    "level {} is beyond the session depth {}",
                    step + 1,
                    self.depth
                )));
            }
            return Ok(self.registry.push(SetExpr::Lift { step, inner }));
        }
        if peek_keyword(cur, "xi") {
            cur.eat_str("xi");
            let step = nat_u32(cur)?;
            cur.expect('(')?;
            let word = Word::parse_from(cur)?;
            cur.expect(')')?;
            cur.expect('[')?;
            let inner = self.parse_set_from(cur, lookup)?;
            cur.expect(']')?;
            if self.registry.level(inner) != step + 1 {
                return Err(cur.err(format!(
                    "xi{step} applies to a level-{} set, found level {}",
                    step + 1,
                    self.registry.level(inner)
                )));
            }
            return self.word_image_at_step(step, &word, inner);
        }
        if peek_keyword(cur, "finat") || peek_keyword(cur, "cofinat") {
            let cofinite = cur.eat_str("cofinat");
            if !cofinite {
                cur.expect_str("finat")?;
            }
            let level = nat_u32(cur)?;
            cur.expect('[')?;
            let mut points = Vec::new();
            if !cur.eat(']') {
                loop {
                    points.push(PointName::parse_from(cur)?);
                    if cur.eat(']') {
                        break;
                    }
                    cur.expect(',')?;
                }
            }
            for p in &points {
                if p.level() > level {
                    return Err(cur.err(format!("{p} is above level {level}")));
                }
            }
            points.sort();
            points.dedup();
            let expr = if cofinite {
                SetExpr::CofiniteAt { level, points }
            } else {
                SetExpr::FiniteAt { level, points }
            };
            return Ok(self.registry.push(expr));
        }
        if cur.rest().starts_with("fin[")
            || cur.rest().starts_with("ep(")
            || cur.rest().starts_with("pow2")
        {
            let b = BaseSet::parse_from(cur)?.normalize();
            if let Some(id) = self.registry.find(&SetExpr::Base(b.clone())) {
                return Ok(id);
            }
            if b.is_finite() && self.include_fin {
                return Ok(self.registry.push(SetExpr::Base(b)));
            }
            return Err(Error::Undeclared(format!("{b} is not in the generator family")));
        }
        let ident = scan_ident(cur)?;
        lookup(&ident).ok_or(Error::Undeclared(ident))
    }

    /// The step-`step` word action applied to a level-(step+1) name: lifted
    /// names go through the canonical rewrite, word-image names compose.
    pub fn word_image_at_step(&mut self, step: u32, w: &Word, inner: SetId) -> Result<SetId> {
        if self.registry.level(inner) != step + 1 {
            return Err(Error::WrongLevel(format!(
                "step-{step} image of {} at level {}",
                self.describe(inner),
                self.registry.level(inner)
            )));
        }
        match self.registry.expr(inner)?.clone() {
            SetExpr::Lift { inner: x, .. } => self.canon_xi(step, w, x),
            SetExpr::Xi { word, inner: lifted, .. } => {
                let SetExpr::Lift { inner: x, .. } = self.registry.expr(lifted)?.clone() else {
                    return Err(Error::Internal(
                        "word-image name whose inner name is not a lift".into(),
                    ));
                };
                self.canon_xi(step, &word.compose(w), x)
            }
            SetExpr::FiniteAt { level, points } => {
                let points = self.map_points(step, w, points)?;
                Ok(self.registry.push(SetExpr::FiniteAt { level, points }))
            }
            SetExpr::CofiniteAt { level, points } => {
                let points = self.map_points(step, w, points)?;
                Ok(self.registry.push(SetExpr::CofiniteAt { level, points }))
            }
            _ => Err(Error::WrongLevel(format!(
                "the step-{step} action applies to level-{} names",
                step + 1
            ))),
        }
    }
}

fn peek_keyword(cur: &Cursor, kw: &str) -> bool {
    cur.rest()
        .strip_prefix(kw)
        .is_some_and(|r| r.chars().next().is_some_and(|c| c.is_ascii_digit()))
}

fn nat_u32(cur: &mut Cursor) -> Result<u32> {
    let n = cur.nat()?;
    u32::try_from(n).map_err(|_| cur.err("number out of range"))
}

fn scan_ident(cur: &mut Cursor) -> Result<String> {
    let mut ident = String::new();
    while let Some(c) = cur.peek() {
        if c.is_ascii_alphanumeric() || c == '_' || (c == '-' && !ident.is_empty()) {
            ident.push(c);
            cur.bump();
        } else {
            break;
        }
    }
    if ident.is_empty() || ident.starts_with(|c: char| c.is_ascii_digit()) {
        return Err(cur.err("expected a set expression"));
    }
    Ok(ident)
}

/// Append a letter to the step-`n` word of a string point, cancelling an
/// inverse tail letter; collapsed words drop their history entry.
fn push_letter(p: &PointName, n: u32, l: Letter) -> Result<PointName> {
    match p {
        PointName::Atom(a) => Ok(PointName::Grid(GridPoint::new(
            *a,
            vec![(n, Word::letter(l))],
        )?)),
        PointName::Grid(g) => {
            let mut history = g.history.clone();
            match history.last() {
                Some(&(s, _)) if s > n => Err(Error::LevelMismatch {
                    point_level: p.level(),
                    set_level: n + 1,
                }),
                Some(&(s, _)) if s == n => {
                    let w = history.last().expect("just matched").1.push(l);
                    if w.is_empty() {
                        history.pop();
                    } else {
                        history.last_mut().expect("just matched").1 = w;
                    }
                    if history.is_empty() {
                        Ok(PointName::Atom(g.base))
                    } else {
                        Ok(PointName::Grid(GridPoint::new(g.base, history)?))
                    }
                }
                _ => {
                    history.push((n, Word::letter(l)));
                    Ok(PointName::Grid(GridPoint::new(g.base, history)?))
                }
            }
        }
        PointName::B(_) => Err(Error::WrongLevel(
            "table points do not live in the string universe".into(),
        )),
    }
}

/// Remove the last letter of the last history word; returns the shortened
/// point, the step of the removed letter and the letter itself.
fn pop_letter(p: &PointName) -> Option<(PointName, u32, Letter)> {
    let PointName::Grid(g) = p else { return None };
    let (step, w) = g.history.last()?;
    let letters = w.letters();
    let last = *letters.last()?;
    let mut history = g.history.clone();
    if letters.len() == 1 {
        history.pop();
    } else {
        let shorter = Word::reduce(letters[..letters.len() - 1].iter().copied());
        history.last_mut().expect("nonempty history").1 = shorter;
    }
    let rest = if history.is_empty() {
        PointName::Atom(g.base)
    } else {
        PointName::Grid(GridPoint { base: g.base, history })
    };
    Some((rest, *step, last))
}

//! Exact counting and lazy enumeration inside membership cells.
//!
//! The universe at a positive level consists of the atoms together with the
//! table points created at every earlier step. A family of decidable base
//! sets, each lifted through every step, splits the level into cells by
//! membership signature. This module ranks points inside one cell and
//! produces the point at any given rank, purely by counting — the infinite
//! universe is never enumerated.
//!
//! The order is graded. grade(atom j) = j; a table point gets
//! max(1 + max member grade, support size), with 0 for an empty support.
//! Every grade class is finite. Inside a grade the order is: the atom first,
//! then table points by creation step, then by support size, then by the
//! composition of the support over (membership pattern × old/new grade)
//! classes, then by the colex position of the support inside each class
//! pool, then by the free entries of the table read as a little-endian
//! integer. Class pools recursively use the same order one level down, so
//! rank and unrank are exact inverses everywhere.
//!
//! All counts are big integers: grade classes grow doubly exponentially.
//! Budgets bound the walked grades, support widths and composition walks;
//! beyond them queries fail with an explicit budget error rather than
//! stalling.

use crate::base::BaseSet;
use crate::error::{Error, Result};
use crate::point::{BPoint, PointName};
use num_bigint::BigUint;
use std::collections::HashMap;

#[derive(Debug, Clone, Copy)]
pub struct Limits {
    /// Highest grade a walk may visit.
    pub max_grade: u64,
    /// Widest support a count may quantify over (table factor is 2^(2^k)).
    pub max_support: u64,
    /// Composition-walk and search-step budget per public call.
    pub walk: u64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { max_grade: 64, max_support: 15, walk: 2_000_000 }
    }
}

/// One lift-chain family: base sets at level 0, implicitly lifted through
/// every step. Signatures and patterns are bitmasks over the bases, bit i
/// set when the point belongs to chain i.
pub struct ChainFamily {
    bases: Vec<BaseSet>,
    level: u32,
    limits: Limits,
    steps: u64,
    /// (step, grade, pattern) -> exact table-point count.
    bp_exact: HashMap<(u32, u64, u32), BigUint>,
    /// (level bound, pattern) -> cumulative counts by grade.
    cum: HashMap<(u32, u32), Vec<BigUint>>,
}

fn big(v: u64) -> BigUint {
    BigUint::from(v)
}

/// n choose k for big n and small k, exact.
pub fn binom(n: &BigUint, k: u64) -> BigUint {
    if *n < big(k) {
        return BigUint::ZERO;
    }
    let mut acc = big(1);
    for t in 0..k {
        acc *= n - big(t);
        acc /= big(t + 1);
    }
    acc
}

/// Colex rank of a strictly ascending index tuple: sum of C(i_t, t+1).
pub fn colex_rank(indexes: &[BigUint]) -> BigUint {
    let mut r = BigUint::ZERO;
    for (t, i) in indexes.iter().enumerate() {
        r += binom(i, t as u64 + 1);
    }
    r
}

fn factorial(k: u64) -> BigUint {
    let mut acc = big(1);
    for t in 2..=k {
        acc *= big(t);
    }
    acc
}

/// Largest i with C(i, k) <= r, for k >= 1.
fn invbinom(r: &BigUint, k: u64, steps: &mut u64, limits: &Limits) -> Result<BigUint> {
    if r == &BigUint::ZERO {
        return Ok(big(k - 1));
    }
    // C(i, k) ~ i^k / k!: start near (r * k!)^(1/k) and refine.
    let mut i = (r * factorial(k)).nth_root(k as u32);
    if i < big(k - 1) {
        i = big(k - 1);
    }
    while binom(&i, k) > *r {
        i -= 1u32;
        *steps += 1;
        if *steps > limits.walk {
            return Err(Error::BudgetExceeded { budget: limits.walk, what: "rank search".into() });
        }
    }
    loop {
        let next = &i + 1u32;
        if binom(&next, k) <= *r {
            i = next;
        } else {
            return Ok(i);
        }
        *steps += 1;
        if *steps > limits.walk {
            return Err(Error::BudgetExceeded { budget: limits.walk, what: "rank search".into() });
        }
    }
}

/// Strictly ascending index tuple of length k at colex rank r.
pub fn colex_unrank(r: &BigUint, k: u64, steps: &mut u64, limits: &Limits) -> Result<Vec<BigUint>> {
    let mut rem = r.clone();
    let mut out = vec![BigUint::ZERO; k as usize];
    for t in (1..=k).rev() {
        let i = invbinom(&rem, t, steps, limits)?;
        rem -= binom(&i, t);
        out[t as usize - 1] = i;
    }
    if rem != BigUint::ZERO {
        return Err(Error::Internal("colex unrank leftover".into()));
    }
    Ok(out)
}

/// Grade of a point; grid histories have no grade here.
pub fn grade_of(p: &PointName) -> Result<u64> {
    match p {
        PointName::Atom(i) => Ok(*i),
        PointName::B(bp) => {
            if bp.support.is_empty() {
                return Ok(0);
            }
            let mut mg = 0u64;
            for q in &bp.support {
                mg = mg.max(grade_of(q)?);
            }
            Ok((mg + 1).max(bp.support.len() as u64))
        }
        PointName::Grid(_) => Err(Error::WrongLevel("grid point has no extension grade".into())),
    }
}

impl ChainFamily {
    /// `level` is the level whose universe the family streams (>= 1); points
    /// of every lower level belong to it too.
    pub fn new(bases: Vec<BaseSet>, level: u32, limits: Limits) -> Result<ChainFamily> {
        if bases.len() > 8 {
            return Err(Error::BudgetExceeded {
                budget: 8,
                what: format!("cell counting over {} constraint sets", bases.len()),
            });
        }
        Ok(ChainFamily {
            bases,
            level,
            limits,
            steps: 0,
            bp_exact: HashMap::new(),
            cum: HashMap::new(),
        })
    }

    pub fn width(&self) -> u32 {
        self.bases.len() as u32
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    fn atom_sig(&self, i: u64) -> u32 {
        let mut sig = 0u32;
        for (b, base) in self.bases.iter().enumerate() {
            if base.member(i) {
                sig |= 1 << b;
            }
        }
        sig
    }

    /// Membership bits of a point over the lifted chains. Depends only on
    /// the point itself, not on the level it is viewed at.
    pub fn pattern_of(&self, p: &PointName) -> Result<u32> {
        match p {
            PointName::Atom(i) => Ok(self.atom_sig(*i)),
            PointName::B(bp) => {
                let mut masks = vec![0u32; self.bases.len()];
                for (pos, q) in bp.support.iter().enumerate() {
                    let qp = self.pattern_of(q)?;
                    for (b, mask) in masks.iter_mut().enumerate() {
                        if qp >> b & 1 == 1 {
                            *mask |= 1 << pos;
                        }
                    }
                }
                let mut sig = 0u32;
                for (b, mask) in masks.iter().enumerate() {
                    if bp.eval_mask(*mask) {
                        sig |= 1 << b;
                    }
                }
                Ok(sig)
            }
            PointName::Grid(_) => Err(Error::WrongLevel("grid point in extension counting".into())),
        }
    }

    fn bump(&mut self, what: &str) -> Result<()> {
        self.steps += 1;
        if self.steps > self.limits.walk {
            return Err(Error::BudgetExceeded { budget: self.limits.walk, what: what.into() });
        }
        Ok(())
    }

    /// Number of tables over a size-k support realizing signature `pat`,
    /// when the support meets exactly the pattern classes in `present`.
    fn table_count(&mut self, pat: u32, present: &[u32], k: u64) -> Result<BigUint> {
        if k > self.limits.max_support {
            return Err(Error::BudgetExceeded {
                budget: self.limits.max_support,
                what: format!("table counting over support of size {k}"),
            });
        }
        // Chains whose intersections with the support coincide must agree in
        // the signature; each distinct intersection pins one table entry.
        let mut constrained: HashMap<u64, bool> = HashMap::new();
        for b in 0..self.bases.len() {
            let mut col = 0u64;
            for (t, ro) in present.iter().enumerate() {
                if ro >> b & 1 == 1 {
                    col |= 1 << t;
                }
            }
            let want = pat >> b & 1 == 1;
            match constrained.get(&col) {
                Some(&w) if w != want => return Ok(BigUint::ZERO),
                Some(_) => {}
                None => {
                    constrained.insert(col, want);
                }
            }
        }
        let free = (1u64 << k) - constrained.len() as u64;
        Ok(big(1) << free)
    }

    /// Exact count of table points at `step` with grade `g` and pattern
    /// `pat`. Grade 0 means empty support.
    fn bp_count(&mut self, step: u32, g: u64, pat: u32) -> Result<BigUint> {
        if let Some(c) = self.bp_exact.get(&(step, g, pat)) {
            return Ok(c.clone());
        }
        let total = if g == 0 {
            let j = self.bases.len() as u32;
            if j == 0 {
                big(2)
            } else if pat == 0 || pat == (1 << j) - 1 {
                big(1)
            } else {
                BigUint::ZERO
            }
        } else {
            let pools = self.pools(step, g)?;
            let mut total = BigUint::ZERO;
            self.walk_comps(g, &pools, &mut |fam, comp| {
                total += fam.comp_count(pat, comp, &pools)?;
                Ok(true)
            })?;
            total
        };
        self.bp_exact.insert((step, g, pat), total.clone());
        Ok(total)
    }

    /// Per pattern class: (count of grade <= g-2 members, count of grade
    /// g-1 members), all of level <= `lvl`.
    fn pools(&mut self, lvl: u32, g: u64) -> Result<Vec<(BigUint, BigUint)>> {
        let npat = 1u32 << self.bases.len();
        let mut out = Vec::with_capacity(npat as usize);
        for ro in 0..npat {
            let newer = self.cum_upto(lvl, ro, g - 1)?;
            let old = if g >= 2 { self.cum_upto(lvl, ro, g - 2)? } else { BigUint::ZERO };
            out.push((old.clone(), newer - old));
        }
        Ok(out)
    }

    /// Count of one composition: supports drawn per class pool, times
    /// consistent tables.
    fn comp_count(&mut self, pat: u32, comp: &[(u64, u64)], pools: &[(BigUint, BigUint)]) -> Result<BigUint> {
        let mut acc = big(1);
        let mut k = 0u64;
        let mut present = Vec::new();
        for (ro, &(o, n)) in comp.iter().enumerate() {
            if o + n > 0 {
                present.push(ro as u32);
            }
            k += o + n;
            if o > 0 {
                acc *= binom(&pools[ro].0, o);
            }
            if n > 0 {
                acc *= binom(&pools[ro].1, n);
            }
            if acc == BigUint::ZERO {
                return Ok(BigUint::ZERO);
            }
        }
        Ok(acc * self.table_count(pat, &present, k)?)
    }

    /// Enumerate compositions for grade g in canonical order: total size
    /// ascending, then lexicographic over the flattened (old, new) tuple.
    /// A composition is valid when size == g or it contains a grade-(g-1)
    /// member. The callback returns false to stop the walk.
    fn walk_comps(
        &mut self,
        g: u64,
        pools: &[(BigUint, BigUint)],
        f: &mut dyn FnMut(&mut ChainFamily, &[(u64, u64)]) -> Result<bool>,
    ) -> Result<()> {
        let npat = pools.len();
        let mut comp = vec![(0u64, 0u64); npat];
        for k in 1..=g {
            if !self.walk_rec(g, k, 0, 0, pools, &mut comp, f)? {
                return Ok(());
            }
        }
        Ok(())
    }

    fn walk_rec(
        &mut self,
        g: u64,
        rem: u64,
        slot: usize,
        new_used: u64,
        pools: &[(BigUint, BigUint)],
        comp: &mut Vec<(u64, u64)>,
        f: &mut dyn FnMut(&mut ChainFamily, &[(u64, u64)]) -> Result<bool>,
    ) -> Result<bool> {
        if slot == pools.len() * 2 {
            if rem > 0 {
                return Ok(true);
            }
            let k: u64 = comp.iter().map(|&(o, n)| o + n).sum();
            if k < g && new_used == 0 {
                return Ok(true);
            }
            self.bump("composition walk")?;
            return f(self, comp);
        }
        let ro = slot / 2;
        let pool = if slot % 2 == 0 { &pools[ro].0 } else { &pools[ro].1 };
        let cap = if *pool >= big(rem) { rem } else { u64::try_from(pool).unwrap_or(0) };
        for take in 0..=cap {
            if slot % 2 == 0 {
                comp[ro].0 = take;
            } else {
                comp[ro].1 = take;
            }
            let nu = new_used + if slot % 2 == 1 { take } else { 0 };
            if !self.walk_rec(g, rem - take, slot + 1, nu, pools, comp, f)? {
                return Ok(false);
            }
        }
        if slot % 2 == 0 {
            comp[ro].0 = 0;
        } else {
            comp[ro].1 = 0;
        }
        Ok(true)
    }

    /// 1 when the grade-g atom has pattern `pat`.
    fn atom_term(&self, g: u64, pat: u32) -> u64 {
        (self.atom_sig(g) == pat) as u64
    }

    /// Count of points of level <= lvl at exactly grade g with pattern pat.
    pub fn count_block(&mut self, lvl: u32, g: u64, pat: u32) -> Result<BigUint> {
        let mut c = big(self.atom_term(g, pat));
        for s in 0..lvl {
            c += self.bp_count(s, g, pat)?;
        }
        Ok(c)
    }

    /// Count of points of level <= lvl, grade <= g, pattern pat.
    fn cum_upto(&mut self, lvl: u32, pat: u32, g: u64) -> Result<BigUint> {
        if g > self.limits.max_grade {
            return Err(Error::BudgetExceeded {
                budget: self.limits.max_grade,
                what: "grade walk".into(),
            });
        }
        let have = self.cum.get(&(lvl, pat)).map(|v| v.len()).unwrap_or(0);
        for gg in have as u64..=g {
            let block = self.count_block(lvl, gg, pat)?;
            let v = self.cum.entry((lvl, pat)).or_default();
            let prev = if gg == 0 { BigUint::ZERO } else { v[gg as usize - 1].clone() };
            v.push(prev + block);
        }
        Ok(self.cum[&(lvl, pat)][g as usize].clone())
    }

    /// Rank of p among points of level <= lvl with p's pattern, graded
    /// order. `pat` must equal pattern_of(p).
    pub fn rank_in(&mut self, lvl: u32, pat: u32, p: &PointName) -> Result<BigUint> {
        self.steps = 0;
        self.rank_inner(lvl, pat, p)
    }

    fn rank_inner(&mut self, lvl: u32, pat: u32, p: &PointName) -> Result<BigUint> {
        if p.level() > lvl {
            return Err(Error::LevelMismatch { point_level: p.level(), set_level: lvl });
        }
        let g = grade_of(p)?;
        let mut r = if g == 0 { BigUint::ZERO } else { self.cum_upto(lvl, pat, g - 1)? };
        let bp = match p {
            PointName::Atom(_) => return Ok(r),
            PointName::B(bp) => bp.clone(),
            PointName::Grid(_) => {
                return Err(Error::WrongLevel("grid point in extension counting".into()))
            }
        };
        r += big(self.atom_term(g, pat));
        for s in 0..bp.step {
            r += self.bp_count(s, g, pat)?;
        }
        if g == 0 {
            // Empty support: at most two tables, false before true.
            let idx = if self.bases.is_empty() && bp.table[0] { 1u64 } else { 0 };
            return Ok(r + big(idx));
        }
        // Classify the support into class pools.
        let pools = self.pools(bp.step, g)?;
        let npat = pools.len();
        let mut target = vec![(0u64, 0u64); npat];
        let mut members: Vec<Vec<BigUint>> = vec![Vec::new(); npat * 2];
        for q in &bp.support {
            let ro = self.pattern_of(q)? as usize;
            let qg = grade_of(q)?;
            let qrank = self.rank_inner(bp.step, ro as u32, q)?;
            if qg == g - 1 {
                target[ro].1 += 1;
                let off =
                    if g >= 2 { self.cum_upto(bp.step, ro as u32, g - 2)? } else { BigUint::ZERO };
                members[ro * 2 + 1].push(qrank - off);
            } else if g >= 2 && qg <= g - 2 {
                target[ro].0 += 1;
                members[ro * 2].push(qrank);
            } else {
                return Err(Error::Internal(format!("member grade {qg} incompatible with {g}")));
            }
        }
        // Walk compositions before the target.
        let mut before = BigUint::ZERO;
        let mut found = false;
        self.walk_comps(g, &pools, &mut |fam, comp| {
            if comp == target.as_slice() {
                found = true;
                return Ok(false);
            }
            before += fam.comp_count(pat, comp, &pools)?;
            Ok(true)
        })?;
        if !found {
            return Err(Error::Internal("support composition not reached".into()));
        }
        r += before;
        // Mixed radix over class pools, then the free-table index.
        let mut acc = BigUint::ZERO;
        for slot in 0..npat * 2 {
            let ro = slot / 2;
            let (kk, pool) = if slot % 2 == 0 {
                (target[ro].0, pools[ro].0.clone())
            } else {
                (target[ro].1, pools[ro].1.clone())
            };
            if kk == 0 {
                continue;
            }
            let mut idx = members[slot].clone();
            idx.sort();
            acc = acc * binom(&pool, kk) + colex_rank(&idx);
        }
        let present: Vec<u32> =
            (0..npat as u32).filter(|&ro| target[ro as usize].0 + target[ro as usize].1 > 0).collect();
        let tcount = self.table_count(pat, &present, bp.support.len() as u64)?;
        let tidx = self.table_index(&bp, pat)?;
        r += acc * tcount + tidx;
        Ok(r)
    }

    /// Free-table index of a table point: entries not pinned by the chain
    /// intersections, read in ascending mask order as a little-endian
    /// integer.
    fn table_index(&mut self, bp: &BPoint, pat: u32) -> Result<BigUint> {
        let (frees, _) = self.table_layout(bp, pat)?;
        let mut idx = BigUint::ZERO;
        for (t, &m) in frees.iter().enumerate() {
            if bp.table[m as usize] {
                idx |= big(1) << t;
            }
        }
        Ok(idx)
    }

    /// Free masks (ascending) and pinned (mask, bit) entries of a support
    /// with respect to the signature `pat`.
    fn table_layout(&mut self, bp: &BPoint, pat: u32) -> Result<(Vec<u16>, Vec<(u16, bool)>)> {
        let mut masks = vec![0u16; self.bases.len()];
        for (pos, q) in bp.support.iter().enumerate() {
            let qp = self.pattern_of(q)?;
            for (b, mask) in masks.iter_mut().enumerate() {
                if qp >> b & 1 == 1 {
                    *mask |= 1 << pos;
                }
            }
        }
        let mut pinned: Vec<(u16, bool)> = Vec::new();
        for (b, &m) in masks.iter().enumerate() {
            let want = pat >> b & 1 == 1;
            match pinned.iter().find(|&&(pm, _)| pm == m) {
                Some(&(_, w)) if w != want => {
                    return Err(Error::Internal("inconsistent pinned table entries".into()))
                }
                Some(_) => {}
                None => pinned.push((m, want)),
            }
        }
        let k = bp.support.len();
        let frees: Vec<u16> =
            (0..1u32 << k).map(|m| m as u16).filter(|m| !pinned.iter().any(|&(pm, _)| pm == *m)).collect();
        Ok((frees, pinned))
    }

    /// The point of pattern `pat` at rank `idx` among points of level <=
    /// lvl, graded order.
    pub fn unrank_in(&mut self, lvl: u32, pat: u32, idx: &BigUint) -> Result<PointName> {
        self.steps = 0;
        self.unrank_inner(lvl, pat, idx)
    }

    fn unrank_inner(&mut self, lvl: u32, pat: u32, idx: &BigUint) -> Result<PointName> {
        let mut rem = idx.clone();
        let mut g = 0u64;
        loop {
            if g > self.limits.max_grade {
                return Err(Error::BudgetExceeded {
                    budget: self.limits.max_grade,
                    what: "grade walk".into(),
                });
            }
            let c = self.count_block(lvl, g, pat)?;
            if rem < c {
                break;
            }
            rem -= c;
            g += 1;
        }
        if self.atom_term(g, pat) == 1 {
            if rem == BigUint::ZERO {
                return Ok(PointName::Atom(g));
            }
            rem -= 1u32;
        }
        for s in 0..lvl {
            let c = self.bp_count(s, g, pat)?;
            if rem < c {
                return self.unrank_bp(s, g, pat, &rem);
            }
            rem -= c;
        }
        Err(Error::Internal("unrank walked past the grade block".into()))
    }

    fn unrank_bp(&mut self, step: u32, g: u64, pat: u32, idx: &BigUint) -> Result<PointName> {
        if g == 0 {
            let j = self.bases.len() as u32;
            let bit = if j == 0 {
                idx == &big(1)
            } else {
                pat == (1 << j) - 1
            };
            return Ok(PointName::B(BPoint::new(step, Vec::new(), vec![bit])?));
        }
        let pools = self.pools(step, g)?;
        let mut rem = idx.clone();
        let mut chosen: Option<Vec<(u64, u64)>> = None;
        self.walk_comps(g, &pools, &mut |fam, comp| {
            let c = fam.comp_count(pat, comp, &pools)?;
            if rem < c {
                chosen = Some(comp.to_vec());
                return Ok(false);
            }
            rem -= c;
            Ok(true)
        })?;
        let comp = chosen.ok_or_else(|| Error::Internal("unrank composition overflow".into()))?;
        let k: u64 = comp.iter().map(|&(o, n)| o + n).sum();
        let present: Vec<u32> =
            (0..comp.len() as u32).filter(|&ro| comp[ro as usize].0 + comp[ro as usize].1 > 0).collect();
        let tcount = self.table_count(pat, &present, k)?;
        let support_value = &rem / &tcount;
        let tidx = &rem % &tcount;
        // Reverse the mixed radix: compute suffix products, then digits.
        let npat = pools.len();
        let mut radixes = Vec::new();
        for slot in 0..npat * 2 {
            let ro = slot / 2;
            let (kk, pool) =
                if slot % 2 == 0 { (comp[ro].0, &pools[ro].0) } else { (comp[ro].1, &pools[ro].1) };
            if kk > 0 {
                radixes.push((slot, kk, binom(pool, kk)));
            }
        }
        let mut digits = vec![BigUint::ZERO; radixes.len()];
        let mut val = support_value;
        for (t, (_, _, radix)) in radixes.iter().enumerate().rev() {
            digits[t] = &val % radix;
            val /= radix;
        }
        if val != BigUint::ZERO {
            return Err(Error::Internal("support index overflow".into()));
        }
        // Materialize members per pool.
        let mut members: Vec<(PointName, u32)> = Vec::new();
        let limits = self.limits;
        for ((slot, kk, _), digit) in radixes.iter().zip(digits.iter()) {
            let ro = (slot / 2) as u32;
            let mut steps_local = self.steps;
            let idxs = colex_unrank(digit, *kk, &mut steps_local, &limits)?;
            self.steps = steps_local;
            for pool_idx in idxs {
                let global = if slot % 2 == 0 {
                    pool_idx
                } else {
                    let off =
                        if g >= 2 { self.cum_upto(step, ro, g - 2)? } else { BigUint::ZERO };
                    pool_idx + off
                };
                let q = self.unrank_inner(step, ro, &global)?;
                members.push((q, ro));
            }
        }
        members.sort_by(|a, b| a.0.cmp(&b.0));
        // Rebuild the table: pinned entries from the signature, free entries
        // from the table index.
        let mut masks = vec![0u16; self.bases.len()];
        for (pos, (_, ro)) in members.iter().enumerate() {
            for (b, mask) in masks.iter_mut().enumerate() {
                if ro >> b & 1 == 1 {
                    *mask |= 1 << pos;
                }
            }
        }
        let mut table = vec![false; 1 << k];
        let mut pinned_masks: Vec<u16> = Vec::new();
        for (b, &m) in masks.iter().enumerate() {
            table[m as usize] = pat >> b & 1 == 1;
            if !pinned_masks.contains(&m) {
                pinned_masks.push(m);
            }
        }
        let frees: Vec<u16> = (0..1u32 << k)
            .map(|m| m as u16)
            .filter(|m| !pinned_masks.contains(m))
            .collect();
        for (t, &m) in frees.iter().enumerate() {
            table[m as usize] = tidx.bit(t as u64);
        }
        let support: Vec<PointName> = members.into_iter().map(|(q, _)| q).collect();
        Ok(PointName::B(BPoint::new(step, support, table)?))
    }

    /// First `count` points of the cell with signature `pat` at this
    /// family's level.
    pub fn stream(&mut self, pat: u32, count: usize) -> Result<Vec<PointName>> {
        let mut out = Vec::with_capacity(count);
        for i in 0..count {
            out.push(self.unrank_in(self.level, pat, &big(i as u64))?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base::{evens, BaseSet};

    fn fam(bases: Vec<BaseSet>, level: u32) -> ChainFamily {
        ChainFamily::new(bases, level, Limits::default()).unwrap()
    }

    #[test]
    fn binomials_and_colex_agree_with_definitions() {
        assert_eq!(binom(&big(7), 3), big(35));
        assert_eq!(binom(&big(2), 3), big(0));
        assert_eq!(binom(&big(40), 1), big(40));
        let mut steps = 0;
        let lim = Limits::default();
        // All 3-subsets of 0..6 in colex order round-trip.
        let mut seen = Vec::new();
        for r in 0..20u64 {
            let t = colex_unrank(&big(r), 3, &mut steps, &lim).unwrap();
            assert_eq!(colex_rank(&t), big(r));
            seen.push(t);
        }
        assert_eq!(seen[0], vec![big(0), big(1), big(2)]);
        assert_eq!(seen[1], vec![big(0), big(1), big(3)]);
        for w in seen.windows(2) {
            assert_ne!(w[0], w[1]);
        }
    }

    /// Brute-force enumeration of every level-1 point of grade <= 4: atoms
    /// 0..=4 and all step-0 table points over supports within {a0..a3}
    /// (grade-(<=4) supports cannot contain higher atoms or exceed size 4).
    fn brute_level1(bases: &[BaseSet]) -> Vec<(PointName, u32, u64)> {
        let fam0 = fam(bases.to_vec(), 1);
        let mut out = Vec::new();
        for i in 0..=4u64 {
            out.push((PointName::Atom(i), fam0.atom_sig(i), i));
        }
        for mask in 0u32..16 {
            let support: Vec<PointName> =
                (0..4u64).filter(|a| mask >> a & 1 == 1).map(PointName::Atom).collect();
            let k = support.len();
            for t in 0u64..1 << (1 << k) {
                let table: Vec<bool> = (0..1 << k).map(|e| t >> e & 1 == 1).collect();
                let bp = BPoint::new(0, support.clone(), table).unwrap();
                let p = PointName::B(bp);
                let sig = fam0.pattern_of(&p).unwrap();
                let g = grade_of(&p).unwrap();
                out.push((p, sig, g));
            }
        }
        out
    }

    #[test]
    fn counts_match_brute_force_at_level_one() {
        let bases = vec![evens(), BaseSet::finite(vec![0, 1])];
        let mut f = fam(bases.clone(), 1);
        // Supports at grade <= 4 only involve atoms 0..=3, so enumerating
        // supports over 5 atoms is complete for grades <= 4.
        let brute = brute_level1(&bases);
        for pat in 0u32..4 {
            for g in 0..=4u64 {
                let want =
                    brute.iter().filter(|(_, s, gg)| *s == pat && *gg == g).count();
                let got = f.count_block(1, g, pat).unwrap();
                assert_eq!(got, big(want as u64), "pattern {pat} grade {g}");
            }
        }
    }

    #[test]
    fn rank_and_unrank_invert_each_other_at_level_one() {
        let bases = vec![evens(), BaseSet::finite(vec![0, 1])];
        let mut f = fam(bases.clone(), 1);
        let brute = brute_level1(&bases);
        for (p, pat, _) in &brute {
            let r = f.rank_in(1, *pat, p).unwrap();
            let q = f.unrank_in(1, *pat, &r).unwrap();
            assert_eq!(&q, p, "round trip at rank {r}");
        }
        // Ranks within one cell are a bijection onto an initial segment.
        for pat in 0u32..4 {
            let cell: Vec<&PointName> =
                brute.iter().filter(|(_, s, _)| *s == pat).map(|(p, _, _)| p).collect();
            let mut ranks: Vec<BigUint> =
                cell.iter().map(|p| f.rank_in(1, pat, p).unwrap()).collect();
            ranks.sort();
            ranks.dedup();
            assert_eq!(ranks.len(), cell.len());
            // Grades <= 4 are fully enumerated, so the cell's ranks must
            // cover 0..count-of-grades<=4 exactly.
            let within: BigUint = (0..=4u64)
                .map(|g| f.count_block(1, g, pat).unwrap())
                .fold(BigUint::ZERO, |a, b| a + b);
            let covered = ranks.iter().filter(|r| **r < within).count();
            assert_eq!(big(covered as u64), within);
        }
    }

    #[test]
    fn stream_is_strictly_graded_and_fresh() {
        let bases = vec![evens()];
        let mut f = fam(bases, 1);
        let s = f.stream(1, 40).unwrap();
        assert_eq!(s.len(), 40);
        let mut grades: Vec<u64> = Vec::new();
        for p in &s {
            assert_eq!(f.pattern_of(p).unwrap(), 1);
            grades.push(grade_of(p).unwrap());
        }
        let mut sorted = grades.clone();
        sorted.sort();
        assert_eq!(grades, sorted, "stream must be graded");
        let mut dedup = s.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(dedup.len(), s.len(), "stream must not repeat points");
    }

    #[test]
    fn level_two_counts_match_brute_force_for_small_supports() {
        // Cross-level recursion: count step-1 table points of grade <= 3
        // with supports of size <= 2 by hand and compare against the
        // composition walk restricted to those sizes.
        let bases = vec![evens()];
        let mut f = fam(bases.clone(), 2);
        // Pool: every point of level <= 1 and grade <= 2.
        let mut pool: Vec<PointName> = Vec::new();
        for (p, _, g) in brute_level1(&bases) {
            if g <= 2 {
                pool.push(p);
            }
        }
        pool.sort();
        pool.dedup();
        // 3 atoms (0,1,2), 2 empty-support points, 4 over {a0}, 4 over
        // {a1}, 16 over {a0,a1}: 29 in total.
        assert_eq!(pool.len(), 29);
        for pat in 0u32..2 {
            for g in 2..=3u64 {
                let mut want = 0u64;
                for i in 0..pool.len() {
                    for j2 in i + 1..pool.len() {
                        let support = {
                            let mut v = vec![pool[i].clone(), pool[j2].clone()];
                            v.sort();
                            v
                        };
                        for t in 0u32..16 {
                            let table: Vec<bool> = (0..4).map(|e| t >> e & 1 == 1).collect();
                            let bp = BPoint::new(1, support.clone(), table).unwrap();
                            let p = PointName::B(bp);
                            if grade_of(&p).unwrap() == g
                                && f.pattern_of(&p).unwrap() == pat
                            {
                                want += 1;
                            }
                        }
                    }
                }
                for i in 0..pool.len() {
                    for t in 0u32..4 {
                        let table: Vec<bool> = (0..2).map(|e| t >> e & 1 == 1).collect();
                        let bp = BPoint::new(1, vec![pool[i].clone()], table).unwrap();
                        let p = PointName::B(bp);
                        if grade_of(&p).unwrap() == g && f.pattern_of(&p).unwrap() == pat {
                            want += 1;
                        }
                    }
                }
                // Compare against the counting walk, restricted to supports
                // of size <= 2 by subtracting the size-3 compositions.
                let mut got = BigUint::ZERO;
                let pools = f.pools(1, g).unwrap();
                f.walk_comps(g, &pools, &mut |fam, comp| {
                    let k: u64 = comp.iter().map(|&(o, n)| o + n).sum();
                    if k <= 2 {
                        got += fam.comp_count(pat, comp, &pools)?;
                    }
                    Ok(true)
                })
                .unwrap();
                assert_eq!(got, big(want), "level 2 pattern {pat} grade {g}");
            }
        }
    }

    #[test]
    fn level_two_round_trips_on_nested_points() {
        let bases = vec![evens(), BaseSet::finite(vec![1, 2])];
        let mut f = fam(bases, 2);
        let inner = BPoint::new(0, vec![PointName::Atom(0)], vec![true, false]).unwrap();
        let nested = BPoint::new(
            1,
            vec![PointName::Atom(1), PointName::B(inner)],
            vec![false, true, true, false],
        )
        .unwrap();
        let p = PointName::B(nested);
        let pat = f.pattern_of(&p).unwrap();
        let r = f.rank_in(2, pat, &p).unwrap();
        assert_eq!(f.unrank_in(2, pat, &r).unwrap(), p);
        // And the first elements of every cell at level 2 round-trip.
        for pat in 0u32..4 {
            for i in 0..25u64 {
                let q = f.unrank_in(2, pat, &big(i)).unwrap();
                assert_eq!(f.pattern_of(&q).unwrap(), pat);
                assert_eq!(f.rank_in(2, pat, &q).unwrap(), big(i));
            }
        }
    }

    #[test]
    fn empty_family_counts_every_point_in_one_cell() {
        let mut f = fam(Vec::new(), 1);
        assert_eq!(f.count_block(1, 0, 0).unwrap(), big(3)); // atom 0 + two empty-support tables
        for i in 0..40u64 {
            let p = f.unrank_in(1, 0, &big(i)).unwrap();
            assert_eq!(f.rank_in(1, 0, &p).unwrap(), big(i));
        }
    }

    #[test]
    fn budget_guards_fire_instead_of_stalling() {
        let mut f = ChainFamily::new(
            vec![evens()],
            1,
            Limits { max_grade: 3, max_support: 15, walk: 2_000_000 },
        )
        .unwrap();
        let huge = BigUint::from(10u8).pow(40);
        match f.unrank_in(1, 1, &huge) {
            Err(Error::BudgetExceeded { .. }) => {}
            other => panic!("expected budget error, got {other:?}"),
        }
    }
}

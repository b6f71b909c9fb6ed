//! Session configuration: a line-oriented text format describing how to
//! build a tower or grid session — generators, demands, depth, budgets,
//! seed and selector picks — with a canonical printer whose output parses
//! back to the same value.

use crate::base::BaseSet;
use crate::error::{Error, Result};
use crate::grid::GridSession;
use crate::registry::{SetExpr, SetId};
use crate::word::DemandId;
use crate::text::Cursor;
use crate::tower::TowerSession;
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Tower,
    Grid,
    GridPruned,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Tower => write!(f, "tower"),
            Mode::Grid => write!(f, "grid"),
            Mode::GridPruned => write!(f, "grid-pruned"),
        }
    }
}

/// Reference to a set in a demand declaration: a declared generator name,
/// possibly pushed up through one-step lifts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SetRef {
    Name(String),
    Phi(u32, Box<SetRef>),
}

impl fmt::Display for SetRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SetRef::Name(n) => write!(f, "{n}"),
            SetRef::Phi(step, inner) => write!(f, "Phi{step}({inner})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DemandDecl {
    pub level: u32,
    /// Point half: atom pairs.
    pub h: Vec<(u64, u64)>,
    /// Set half: pairs of set references at the demand's level.
    pub f: Vec<(SetRef, SetRef)>,
}

/// Step budgets. `eval` caps engine evaluation steps, `enumeration` caps
/// how many objects sweeps materialize, `separator` is the atom-scan
/// ceiling for disjointness sweeps and import probes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budgets {
    pub eval: u64,
    pub enumeration: u64,
    pub separator: u64,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets { eval: 2_000_000, enumeration: 100_000, separator: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionConfig {
    pub mode: Mode,
    /// Tower only: size of the atom universe.
    pub atoms: u64,
    /// Tower only: largest support a table point may carry.
    pub support_bound: usize,
    pub depth: u32,
    /// Grid modes only: whether finite sets count as family members.
    pub include_fin: bool,
    pub seed: u64,
    pub budgets: Budgets,
    /// Named generators, in declaration order.
    pub bases: Vec<(String, BaseSet)>,
    pub demands: Vec<DemandDecl>,
    /// Pruned mode only: one pick per complementary generator pair.
    pub eta_picks: Vec<bool>,
}

impl SessionConfig {
    /// A minimal starting point for the given mode; callers fill in
    /// generators and demands.
    pub fn new(mode: Mode, depth: u32) -> SessionConfig {
        SessionConfig {
            mode,
            atoms: 3,
            support_bound: 3,
            depth,
            include_fin: true,
            seed: 0,
            budgets: Budgets::default(),
            bases: Vec::new(),
            demands: Vec::new(),
            eta_picks: Vec::new(),
        }
    }

    /// Canonical text form. Fields irrelevant to the mode are omitted;
    /// everything else is printed explicitly, defaults included.
    pub fn print(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("mode {}\n", self.mode));
        if self.mode == Mode::Tower {
            out.push_str(&format!("atoms {}\n", self.atoms));
            out.push_str(&format!("support-bound {}\n", self.support_bound));
        }
        out.push_str(&format!("depth {}\n", self.depth));
        if self.mode != Mode::Tower {
            out.push_str(&format!("fin {}\n", if self.include_fin { "on" } else { "off" }));
        }
        out.push_str(&format!("seed {}\n", self.seed));
        out.push_str(&format!(
            "budget eval={} enum={} separator={}\n",
            self.budgets.eval, self.budgets.enumeration, self.budgets.separator
        ));
        for (name, b) in &self.bases {
            out.push_str(&format!("base {name} = {b}\n"));
        }
        for d in &self.demands {
            let h: Vec<String> = d.h.iter().map(|(x, y)| format!("a{x}->a{y}")).collect();
            let f: Vec<String> = d.f.iter().map(|(x, y)| format!("{x}->{y}")).collect();
            out.push_str(&format!(
                "demand {} h[{}] f[{}]\n",
                d.level,
                h.join(","),
                f.join(",")
            ));
        }
        if self.mode == Mode::GridPruned {
            let bits: String = self.eta_picks.iter().map(|&b| if b { '1' } else { '0' }).collect();
            out.push_str(&format!("eta {bits}\n"));
        }
        out
    }

    /// Hex digest of the canonical text; certificates carry this so a
    /// re-run can prove it used the same configuration.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.print().as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn parse(text: &str) -> Result<SessionConfig> {
        Parser::new(text).run()
    }

    /// Build a tower session and register the declared demands.
    pub fn build_tower(&self) -> Result<(TowerSession, Vec<DemandId>)> {
        if self.mode != Mode::Tower {
            return Err(Error::Config(format!("mode {} does not build a tower session", self.mode)));
        }
        let mut s = TowerSession::new(self.atoms, self.depth, self.support_bound, self.budgets.eval)?;
        // Every subset of the atom universe is pre-registered; declared
        // names are aliases and must denote finite sets inside it.
        let mut names: HashMap<String, SetId> = HashMap::new();
        for (name, b) in &self.bases {
            let b = b.clone().normalize();
            if !matches!(b, BaseSet::Finite(_)) {
                return Err(Error::Config(format!(
                    "tower generators are finite subsets of the atom universe; {name} = {b} is not"
                )));
            }
            let id = s
                .registry()
                .find(&SetExpr::Base(b.clone()))
                .ok_or_else(|| Error::Config(format!("{name} = {b} lies outside the {}-atom universe", self.atoms)))?;
            names.insert(name.clone(), id);
        }
        let mut dids = Vec::new();
        for d in &self.demands {
            let mut f = Vec::new();
            for (x, y) in &d.f {
                f.push((resolve_tower(&mut s, &names, x)?, resolve_tower(&mut s, &names, y)?));
            }
            let h = d.h.iter().map(|&(x, y)| (crate::point::PointName::Atom(x), crate::point::PointName::Atom(y))).collect();
            dids.push(s.add_demand(d.level, h, f)?);
        }
        Ok((s, dids))
    }

    /// Build a grid session, register the declared demands, and in pruned
    /// mode install the selector and the pruned alphabet.
    pub fn build_grid(&self) -> Result<(GridSession, Vec<DemandId>)> {
        if self.mode == Mode::Tower {
            return Err(Error::Config("mode tower does not build a grid session".into()));
        }
        if self.bases.is_empty() {
            return Err(Error::Config("grid sessions need at least one generator".into()));
        }
        let sets: Vec<BaseSet> = self.bases.iter().map(|(_, b)| b.clone()).collect();
        let mut g = GridSession::homogenize(sets, self.include_fin, self.depth, self.budgets.eval)?;
        let mut names: HashMap<String, SetId> = HashMap::new();
        for (name, b) in &self.bases {
            let id = g
                .registry()
                .find(&SetExpr::Base(b.clone().normalize()))
                .ok_or_else(|| Error::Internal(format!("generator {name} vanished after registration")))?;
            names.insert(name.clone(), id);
        }
        let mut dids = Vec::new();
        for d in &self.demands {
            let mut f = Vec::new();
            for (x, y) in &d.f {
                let lookup = |n: &str| names.get(n).copied();
                f.push((
                    g.parse_set_with(&x.to_string(), &lookup)?,
                    g.parse_set_with(&y.to_string(), &lookup)?,
                ));
            }
            let h = d.h.iter().map(|&(x, y)| (crate::point::PointName::Atom(x), crate::point::PointName::Atom(y))).collect();
            dids.push(g.add_demand(d.level, h, f)?);
        }
        if self.mode == Mode::GridPruned {
            let sel = g.eta_make(&self.eta_picks)?;
            g.prune_alphabet(&sel)?;
        }
        Ok((g, dids))
    }
}

fn resolve_tower(
    s: &mut TowerSession,
    names: &HashMap<String, SetId>,
    r: &SetRef,
) -> Result<SetId> {
    match r {
        SetRef::Name(n) => names.get(n).copied().ok_or_else(|| Error::Undeclared(n.clone())),
        SetRef::Phi(step, inner) => {
            let id = resolve_tower(s, names, inner)?;
            let level = s.registry().level(id);
            if level != *step {
                return Err(Error::Config(format!(
                    "Phi{step} applies to a level-{step} set, {inner} has level {level}"
                )));
            }
            s.phi_set(id)
        }
    }
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

struct Parser<'a> {
    lines: Vec<(u32, &'a str)>,
    at: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        let lines = text
            .lines()
            .enumerate()
            .map(|(i, raw)| {
                let body = raw.split('#').next().unwrap_or("").trim();
                (i as u32 + 1, body)
            })
            .filter(|(_, body)| !body.is_empty())
            .collect();
        Parser { lines, at: 0 }
    }

    fn run(mut self) -> Result<SessionConfig> {
        let (line, body) = self
            .next_line()
            .ok_or_else(|| Error::Syntax { line: 1, col: 1, msg: "empty configuration".into() })?;
        let mut cur = Cursor::with_line(body, line);
        cur.expect_str("mode")?;
        skip_space(&mut cur);
        let mode = if cur.eat_str("grid-pruned") {
            Mode::GridPruned
        } else if cur.eat_str("grid") {
            Mode::Grid
        } else if cur.eat_str("tower") {
            Mode::Tower
        } else {
            return Err(cur.err("expected tower, grid or grid-pruned"));
        };
        cur.expect_end()?;

        let mut cfg = SessionConfig::new(mode, 0);
        let mut seen: HashMap<&'static str, u32> = HashMap::new();
        let mut depth_set = false;
        let mut names_declared: Vec<String> = Vec::new();

        while let Some((line, body)) = self.next_line() {
            let mut cur = Cursor::with_line(body, line);
            let key = key_ident(&mut cur)?;
            skip_space(&mut cur);
            let once = |seen: &mut HashMap<&'static str, u32>, k: &'static str| -> Result<()> {
                if let Some(prev) = seen.insert(k, line) {
                    return Err(Error::Syntax {
                        line,
                        col: 1,
                        msg: format!("{k} already given on line {prev}"),
                    });
                }
                Ok(())
            };
            match key.as_str() {
                "atoms" => {
                    once(&mut seen, "atoms")?;
                    require_mode(&cur, mode == Mode::Tower, "atoms applies to tower mode")?;
                    cfg.atoms = cur.nat()?;
                    cur.expect_end()?;
                }
                "support-bound" => {
                    once(&mut seen, "support-bound")?;
                    require_mode(&cur, mode == Mode::Tower, "support-bound applies to tower mode")?;
                    cfg.support_bound = cur.nat()? as usize;
                    cur.expect_end()?;
                }
                "depth" => {
                    once(&mut seen, "depth")?;
                    cfg.depth = small_nat(&mut cur, "depth")?;
                    depth_set = true;
                    cur.expect_end()?;
                }
                "fin" => {
                    once(&mut seen, "fin")?;
                    require_mode(&cur, mode != Mode::Tower, "fin applies to grid modes")?;
                    cfg.include_fin = if cur.eat_str("on") {
                        true
                    } else if cur.eat_str("off") {
                        false
                    } else {
                        return Err(cur.err("expected on or off"));
                    };
                    cur.expect_end()?;
                }
                "seed" => {
                    once(&mut seen, "seed")?;
                    cfg.seed = cur.nat()?;
                    cur.expect_end()?;
                }
                "budget" => {
                    once(&mut seen, "budget")?;
                    cur.expect_str("eval=")?;
                    cfg.budgets.eval = cur.nat()?;
                    skip_space(&mut cur);
                    cur.expect_str("enum=")?;
                    cfg.budgets.enumeration = cur.nat()?;
                    skip_space(&mut cur);
                    cur.expect_str("separator=")?;
                    cfg.budgets.separator = cur.nat()?;
                    cur.expect_end()?;
                }
                "base" => {
                    let name = ident(&mut cur)?;
                    if names_declared.contains(&name) {
                        return Err(Error::Syntax {
                            line,
                            col: 1,
                            msg: format!("generator {name} declared twice"),
                        });
                    }
                    skip_space(&mut cur);
                    cur.expect('=')?;
                    skip_space(&mut cur);
                    let b = BaseSet::parse_from(&mut cur)?;
                    cur.expect_end()?;
                    names_declared.push(name.clone());
                    cfg.bases.push((name, b));
                }
                "demand" => {
                    let level = small_nat(&mut cur, "demand level")?;
                    skip_space(&mut cur);
                    cur.expect_str("h[")?;
                    let mut h = Vec::new();
                    if !cur.eat(']') {
                        loop {
                            cur.expect('a')?;
                            let x = cur.nat()?;
                            cur.expect_str("->")?;
                            cur.expect('a')?;
                            let y = cur.nat()?;
                            h.push((x, y));
                            if cur.eat(']') {
                                break;
                            }
                            cur.expect(',')?;
                        }
                    }
                    skip_space(&mut cur);
                    cur.expect_str("f[")?;
                    let mut f = Vec::new();
                    if !cur.eat(']') {
                        loop {
                            let x = set_ref(&mut cur, &names_declared)?;
                            cur.expect_str("->")?;
                            let y = set_ref(&mut cur, &names_declared)?;
                            f.push((x, y));
                            if cur.eat(']') {
                                break;
                            }
                            cur.expect(',')?;
                        }
                    }
                    cur.expect_end()?;
                    cfg.demands.push(DemandDecl { level, h, f });
                }
                "eta" => {
                    once(&mut seen, "eta")?;
                    require_mode(&cur, mode == Mode::GridPruned, "eta applies to grid-pruned mode")?;
                    let mut picks = Vec::new();
                    while let Some(c) = cur.peek() {
                        match c {
                            '0' => picks.push(false),
                            '1' => picks.push(true),
                            _ => break,
                        }
                        cur.bump();
                    }
                    if picks.is_empty() {
                        return Err(cur.err("expected a nonempty bit string"));
                    }
                    cur.expect_end()?;
                    cfg.eta_picks = picks;
                }
                "mode" => {
                    return Err(Error::Syntax { line, col: 1, msg: "mode already given on line 1".into() })
                }
                other => {
                    return Err(Error::Syntax {
                        line,
                        col: 1,
                        msg: format!("unknown key {other}"),
                    })
                }
            }
        }
        if !depth_set {
            return Err(Error::Config("depth is required".into()));
        }
        if mode == Mode::GridPruned && cfg.eta_picks.is_empty() {
            return Err(Error::Config("grid-pruned mode requires an eta line".into()));
        }
        Ok(cfg)
    }

    fn next_line(&mut self) -> Option<(u32, &'a str)> {
        let item = self.lines.get(self.at).copied();
        self.at += 1;
        item
    }
}

fn require_mode(cur: &Cursor, ok: bool, msg: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(cur.err(msg))
    }
}

fn skip_space(cur: &mut Cursor) {
    while matches!(cur.peek(), Some(' ') | Some('\t')) {
        cur.bump();
    }
}

fn small_nat(cur: &mut Cursor, what: &str) -> Result<u32> {
    let v = cur.nat()?;
    u32::try_from(v).map_err(|_| cur.err(format!("{what} out of range")))
}

/// Line keys: lowercase with dashes ("support-bound").
fn key_ident(cur: &mut Cursor) -> Result<String> {
    let mut s = String::new();
    while let Some(c) = cur.peek() {
        if c.is_ascii_lowercase() || c == '-' {
            s.push(c);
            cur.bump();
        } else {
            break;
        }
    }
    if s.is_empty() {
        return Err(cur.err("expected a key"));
    }
    Ok(s)
}

/// Generator names: lowercase, digits and underscores, no dash — so a name
/// never swallows the arrow of a demand pair, and stays disjoint from the
/// capitalized set grammar.
fn ident(cur: &mut Cursor) -> Result<String> {
    let mut s = String::new();
    while let Some(c) = cur.peek() {
        if c.is_ascii_lowercase() || c == '_' || (!s.is_empty() && c.is_ascii_digit()) {
            s.push(c);
            cur.bump();
        } else {
            break;
        }
    }
    if s.is_empty() {
        return Err(cur.err("expected a name"));
    }
    Ok(s)
}

fn set_ref(cur: &mut Cursor, declared: &[String]) -> Result<SetRef> {
    if cur.eat_str("Phi") {
        let step = small_nat(cur, "lift step")?;
        cur.expect('(')?;
        let inner = set_ref(cur, declared)?;
        cur.expect(')')?;
        return Ok(SetRef::Phi(step, Box::new(inner)));
    }
    let name = ident(cur)?;
    if !declared.contains(&name) {
        return Err(Error::Undeclared(name));
    }
    Ok(SetRef::Name(name))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn demo_text() -> &'static str {
        "# demo session\n\
         mode grid\n\
         depth 3\n\
         fin on\n\
         seed 42\n\
         budget eval=2000000 enum=100000 separator=64\n\
         base ev = ep(;10)\n\
         base od = ep(;01)\n\
         base p2 = pow2\n\
         base p2c = pow2'\n\
         demand 0 h[] f[ev->od]\n\
         demand 0 h[a1->a0] f[ev->od]\n\
         demand 0 h[] f[od->ev,p2->p2c]\n"
    }

    #[test]
    fn a_minimal_tower_config_parses() {
        let cfg = SessionConfig::parse("mode tower\natoms 3\ndepth 1\n").unwrap();
        assert_eq!(cfg.mode, Mode::Tower);
        assert_eq!(cfg.atoms, 3);
        assert_eq!(cfg.depth, 1);
        assert_eq!(cfg.budgets, Budgets::default());
        let (s, dids) = cfg.build_tower().unwrap();
        assert_eq!(s.atoms(), 3);
        assert!(dids.is_empty());
    }

    #[test]
    fn an_undeclared_set_name_is_rejected() {
        let err = SessionConfig::parse(
            "mode grid\ndepth 2\nbase ev = ep(;10)\ndemand 0 h[] f[ev->odd]\n",
        )
        .unwrap_err();
        assert_eq!(err, Error::Undeclared("odd".into()));
    }

    #[test]
    fn parse_then_print_normalizes_the_demo_text() {
        let cfg = SessionConfig::parse(demo_text()).unwrap();
        let printed = cfg.print();
        let again = SessionConfig::parse(&printed).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(printed, again.print());
        // Comments and omitted defaults are the only differences.
        assert!(printed.contains("mode grid\n"));
        assert!(printed.contains("base ev = ep(;10)\n"));
        assert!(printed.contains("demand 0 h[a1->a0] f[ev->od]\n"));
    }

    #[test]
    fn the_demo_config_builds_a_working_grid() {
        let cfg = SessionConfig::parse(demo_text()).unwrap();
        let (mut g, dids) = cfg.build_grid().unwrap();
        assert_eq!(dids.len(), 3);
        assert_eq!(g.depth(), 3);
        let ev = g.base_ids()[0];
        assert!(g.grid_member(&crate::point::PointName::Atom(2), ev).unwrap());
    }

    #[test]
    fn pruned_mode_installs_the_selector() {
        let text = "mode grid-pruned\ndepth 3\nfin on\nbase ev = ep(;10)\nbase od = ep(;01)\n\
                    demand 0 h[] f[ev->ev]\ndemand 0 h[] f[ev->od]\neta 1\n";
        let cfg = SessionConfig::parse(text).unwrap();
        let (g, _) = cfg.build_grid().unwrap();
        assert!(g.eta().is_some());
        assert!(g.pruned_alphabet().is_some());
    }

    #[test]
    fn mode_specific_keys_are_fenced() {
        let err = SessionConfig::parse("mode grid\ndepth 2\natoms 3\n").unwrap_err();
        assert!(matches!(err, Error::Syntax { line: 3, .. }));
        let err = SessionConfig::parse("mode tower\ndepth 1\nfin on\n").unwrap_err();
        assert!(matches!(err, Error::Syntax { line: 3, .. }));
        let err = SessionConfig::parse("mode grid\ndepth 2\neta 1\n").unwrap_err();
        assert!(matches!(err, Error::Syntax { line: 3, .. }));
        let err = SessionConfig::parse("mode tower\ndepth 1\ndepth 2\n").unwrap_err();
        assert!(matches!(err, Error::Syntax { line: 3, .. }));
    }

    #[test]
    fn syntax_errors_carry_line_and_column() {
        let err = SessionConfig::parse("mode grid\ndepth x\n").unwrap_err();
        match err {
            Error::Syntax { line, col, .. } => {
                assert_eq!(line, 2);
                assert!(col >= 6);
            }
            other => panic!("expected a syntax error, got {other}"),
        }
    }

    #[test]
    fn the_hash_tracks_content_not_comments() {
        let a = SessionConfig::parse(demo_text()).unwrap();
        let b = SessionConfig::parse(&demo_text().replace("# demo session\n", "")).unwrap();
        assert_eq!(a.hash(), b.hash());
        let mut c = a.clone();
        c.seed = 43;
        assert_ne!(a.hash(), c.hash());
    }

    fn arb_base() -> impl Strategy<Value = BaseSet> {
        prop_oneof![
            proptest::collection::vec(0u64..16, 0..4).prop_map(BaseSet::finite),
            Just(BaseSet::Pow2),
            Just(BaseSet::Pow2Comp),
            (
                proptest::collection::vec(any::<bool>(), 0..3),
                proptest::collection::vec(any::<bool>(), 1..4)
            )
                .prop_map(|(pre, per)| BaseSet::EvPeriodic { pre, per }.normalize()),
        ]
    }

    fn arb_config() -> impl Strategy<Value = SessionConfig> {
        let mode = prop_oneof![Just(Mode::Tower), Just(Mode::Grid), Just(Mode::GridPruned)];
        (
            mode,
            1u64..5,
            1u32..4,
            any::<bool>(),
            any::<u64>(),
            (1u64..10_000_000, 1u64..1_000_000, 1u64..512),
            proptest::collection::vec(arb_base(), 0..4),
            proptest::collection::vec(any::<bool>(), 1..4),
        )
            .prop_map(|(mode, atoms, depth, fin, seed, (ev, en, sep), bases, picks)| {
                let mut cfg = SessionConfig::new(mode, depth);
                // Mode-irrelevant fields stay at their defaults: the printer
                // omits them, so only canonical values can round-trip.
                if mode == Mode::Tower {
                    cfg.atoms = atoms;
                    cfg.support_bound = atoms as usize;
                } else {
                    cfg.include_fin = fin;
                }
                cfg.seed = seed;
                cfg.budgets = Budgets { eval: ev, enumeration: en, separator: sep };
                cfg.bases = bases
                    .into_iter()
                    .enumerate()
                    .map(|(i, b)| (format!("g{i}"), b))
                    .collect();
                if !cfg.bases.is_empty() {
                    let name = cfg.bases[0].0.clone();
                    cfg.demands.push(DemandDecl {
                        level: 0,
                        h: vec![(0, 1)],
                        f: vec![(SetRef::Name(name.clone()), SetRef::Name(name))],
                    });
                }
                if mode == Mode::GridPruned {
                    cfg.eta_picks = picks;
                }
                cfg
            })
    }

    proptest! {
        #[test]
        fn printing_then_parsing_is_the_identity(cfg in arb_config()) {
            let text = cfg.print();
            let parsed = SessionConfig::parse(&text).unwrap();
            prop_assert_eq!(&parsed, &cfg);
            prop_assert_eq!(parsed.print(), text);
        }
    }
}

//! Session persistence and check certificates.
//!
//! A session dump is a line-delimited text file: the configuration that
//! built the session, followed by replay instructions for every name
//! registered after the build, the runtime selector state, the recorded
//! trace bounds, a self-contained probe suite, and a checksum. Importing
//! rebuilds the session by replaying the same construction calls and then
//! proves agreement by re-answering every recorded probe.

use crate::base::BaseSet;
use crate::config::{Mode, SessionConfig};
use crate::error::{Error, Result};
use crate::grid::GridSession;
use crate::point::PointName;
use crate::registry::{PermId, SetExpr, SetId};
use crate::text::Cursor;
use crate::tower::{PermHandle, TowerSession};
use crate::verify::CheckReport;
use crate::word::DemandId;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::Path;

const DUMP_HEADER: &str = "homlim-session";
const PROBE_COUNT: usize = 100;

/// A built session of either kind, together with the demand ids the
/// configuration declared (in declaration order).
pub enum Session {
    Tower { s: TowerSession, demands: Vec<DemandId> },
    Grid { g: GridSession, demands: Vec<DemandId> },
}

impl Session {
    pub fn from_config(cfg: &SessionConfig) -> Result<Session> {
        match cfg.mode {
            Mode::Tower => {
                let (s, demands) = cfg.build_tower()?;
                Ok(Session::Tower { s, demands })
            }
            Mode::Grid | Mode::GridPruned => {
                let (g, demands) = cfg.build_grid()?;
                Ok(Session::Grid { g, demands })
            }
        }
    }

    pub fn demand_ids(&self) -> &[DemandId] {
        match self {
            Session::Tower { demands, .. } => demands,
            Session::Grid { demands, .. } => demands,
        }
    }

    /// The configuration's declared generator names, resolved to the ids
    /// they registered under.
    pub fn declared_names(
        &self,
        cfg: &SessionConfig,
    ) -> Result<std::collections::HashMap<String, SetId>> {
        let mut map = std::collections::HashMap::new();
        for (name, b) in &cfg.bases {
            let expr = SetExpr::Base(b.clone().normalize());
            let id = match self {
                Session::Tower { s, .. } => s.registry().find(&expr),
                Session::Grid { g, .. } => g.registry().find(&expr),
            }
            .ok_or_else(|| {
                Error::Internal(format!("declared generator {name} is not registered"))
            })?;
            map.insert(name.clone(), id);
        }
        Ok(map)
    }

    fn member(&mut self, p: &PointName, id: SetId) -> Result<bool> {
        match self {
            Session::Tower { s, .. } => s.member(p, id),
            Session::Grid { g, .. } => g.grid_member(p, id),
        }
    }
}

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

/// Render the dump text for a session built from `cfg`. The session must
/// have been constructed by `Session::from_config` on the same
/// configuration; the replay prefix is recomputed from it.
pub fn render_dump(cfg: &SessionConfig, session: &mut Session) -> Result<String> {
    let mut out = String::new();
    writeln!(out, "{DUMP_HEADER} v={}", env!("CARGO_PKG_VERSION")).unwrap();
    writeln!(out, "config-begin").unwrap();
    out.push_str(&cfg.print());
    writeln!(out, "config-end").unwrap();

    let (prefix_sets, prefix_demands) = match Session::from_config(cfg)? {
        Session::Tower { s, .. } => (s.registry().ids().count(), s.demands().len()),
        Session::Grid { g, .. } => (g.registry().ids().count(), g.demands().len()),
    };

    match session {
        Session::Tower { s, .. } => {
            // Probes are generated first: evaluating them can register new
            // names, which must themselves land in the replay section.
            let probes = generate_probes(&mut TowerProbe(s), cfg.seed)?;
            for (i, h) in s.perms().iter().enumerate() {
                writeln!(out, "perm P{i} = {}", render_perm(h)).unwrap();
            }
            render_extra_demands(&mut out, s.demands(), prefix_demands);
            let ids: Vec<SetId> = s.registry().ids().collect();
            for id in ids.iter().skip(prefix_sets) {
                writeln!(out, "set {}", tower_set_name(s, *id)?).unwrap();
            }
            for (p, id, v) in &probes {
                writeln!(out, "probe {p} S{} {v}", id.0).unwrap();
            }
        }
        Session::Grid { g, .. } => {
            let probes = generate_probes(&mut GridProbe(g), cfg.seed)?;
            render_extra_demands(&mut out, g.demands(), prefix_demands);
            let ids: Vec<SetId> = g.registry().ids().collect();
            for id in ids.iter().skip(prefix_sets) {
                let expr = g.registry().expr(*id)?.clone();
                match expr {
                    SetExpr::Base(b) => writeln!(out, "gen {b}").unwrap(),
                    _ => writeln!(out, "set {}", g.describe(*id)).unwrap(),
                }
            }
            if cfg.mode != Mode::GridPruned {
                if let Some(sel) = g.eta().cloned() {
                    let picks = eta_picks_of(g, &sel)?;
                    let bits: String =
                        picks.iter().map(|&b| if b { '1' } else { '0' }).collect();
                    writeln!(out, "eta {bits}").unwrap();
                    if g.pruned_alphabet().is_some() {
                        writeln!(out, "pruned on").unwrap();
                    }
                }
            }
            let mut bounds: Vec<(SetId, u64)> =
                g.orphan_bounds().iter().map(|(k, v)| (*k, *v)).collect();
            bounds.sort();
            for (id, b) in bounds {
                writeln!(out, "orphan S{} {b}", id.0).unwrap();
            }
            for (p, id, v) in &probes {
                writeln!(out, "probe {p} S{} {v}", id.0).unwrap();
            }
        }
    }

    let digest = checksum(&out);
    writeln!(out, "sha256 {digest}").unwrap();
    Ok(out)
}

/// Recover the pick bits that produced `sel`, by walking the generator
/// pairing in the same deterministic order the selector builder uses.
fn eta_picks_of(g: &GridSession, sel: &crate::grid::EtaSelector) -> Result<Vec<bool>> {
    let gens = g.base_ids().to_vec();
    let mut used: std::collections::HashSet<SetId> = std::collections::HashSet::new();
    let mut picks = Vec::new();
    let mut idx = 0usize;
    for &gen in &gens {
        if used.contains(&gen) {
            continue;
        }
        let SetExpr::Base(b) = g.registry().expr(gen)?.clone() else {
            return Err(Error::Internal("generator is not a base set".into()));
        };
        let comp = g
            .registry()
            .find(&SetExpr::Base(b.complement()))
            .filter(|c| gens.contains(c))
            .ok_or_else(|| Error::Internal("selector exists without complement closure".into()))?;
        used.insert(gen);
        used.insert(comp);
        let (selected, _) = sel
            .pairs()
            .get(idx)
            .ok_or_else(|| Error::Internal("selector shorter than the generator pairing".into()))?;
        picks.push(*selected == gen);
        idx += 1;
    }
    Ok(picks)
}

struct TowerProbe<'a>(&'a mut TowerSession);
struct GridProbe<'a>(&'a mut GridSession);

trait Probe {
    fn member(&mut self, p: &PointName, id: SetId) -> Result<bool>;
    fn set_ids(&self) -> Vec<SetId>;
    fn point_pool(&mut self) -> Vec<PointName>;
}

impl Probe for TowerProbe<'_> {
    fn member(&mut self, p: &PointName, id: SetId) -> Result<bool> {
        self.0.member(p, id)
    }
    fn set_ids(&self) -> Vec<SetId> {
        self.0.registry().ids().collect()
    }
    fn point_pool(&mut self) -> Vec<PointName> {
        let mut pool: Vec<PointName> = (0..16).map(PointName::Atom).collect();
        pool.extend(self.0.points_upto(1));
        pool
    }
}

impl Probe for GridProbe<'_> {
    fn member(&mut self, p: &PointName, id: SetId) -> Result<bool> {
        self.0.grid_member(p, id)
    }
    fn set_ids(&self) -> Vec<SetId> {
        self.0.registry().ids().collect()
    }
    fn point_pool(&mut self) -> Vec<PointName> {
        let mut pool: Vec<PointName> = (0..24).map(PointName::Atom).collect();
        let words: Vec<_> = self
            .0
            .demands()
            .iter()
            .map(|d| crate::word::Word::letter(crate::word::Letter::pos(d.id)))
            .collect();
        for w in words.iter().take(4) {
            for a in 0..6 {
                if let Ok(q) = self.0.xi_apply(self.0.depth() - 1, w, &PointName::Atom(a)) {
                    pool.push(q);
                }
            }
        }
        pool
    }
}

fn generate_probes(
    probe: &mut dyn Probe,
    seed: u64,
) -> Result<Vec<(PointName, SetId, bool)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5e55_10d0);
    let sets = probe.set_ids();
    let pool = probe.point_pool();
    if sets.is_empty() || pool.is_empty() {
        return Err(Error::Internal("nothing to probe".into()));
    }
    let mut probes = Vec::with_capacity(PROBE_COUNT);
    let mut attempts = 0;
    while probes.len() < PROBE_COUNT && attempts < PROBE_COUNT * 40 {
        attempts += 1;
        let p = pool[rng.random_range(0..pool.len())].clone();
        let id = sets[rng.random_range(0..sets.len())];
        match probe.member(&p, id) {
            Ok(v) => probes.push((p, id, v)),
            Err(_) => continue,
        }
    }
    if probes.len() < PROBE_COUNT {
        return Err(Error::Internal(format!(
            "probe generation stalled after {} probes",
            probes.len()
        )));
    }
    Ok(probes)
}

fn render_extra_demands(out: &mut String, live: &[crate::registry::Demand], prefix: usize) {
    for d in live.iter().skip(prefix) {
        let h: Vec<String> = d.h.iter().map(|(x, y)| format!("{x}->{y}")).collect();
        let f: Vec<String> = d.f.iter().map(|(a, b)| format!("S{}->S{}", a.0, b.0)).collect();
        writeln!(out, "xdemand {} h[{}] f[{}]", d.level, h.join(","), f.join(",")).unwrap();
    }
}

fn render_perm(h: &PermHandle) -> String {
    match h {
        PermHandle::Identity => "id".into(),
        PermHandle::BasePerm(pairs) => {
            let items: Vec<String> = pairs.iter().map(|(a, b)| format!("a{a}->a{b}")).collect();
            format!("pairs[{}]", items.join(","))
        }
        PermHandle::Lift(inner) => format!("lift({})", render_perm(inner)),
        PermHandle::Satisfier(d) => format!("sat(d{})", d.0),
        PermHandle::Compose(a, b) => format!("comp({},{})", render_perm(a), render_perm(b)),
        PermHandle::Inverse(inner) => format!("inv({})", render_perm(inner)),
    }
}

/// Canonical recursive name of a tower-registered set.
fn tower_set_name(s: &TowerSession, id: SetId) -> Result<String> {
    Ok(match s.registry().expr(id)? {
        SetExpr::Base(b) => b.to_string(),
        SetExpr::Lift { step, inner } => format!("Phi{step}({})", tower_set_name(s, *inner)?),
        SetExpr::Perm { perm, inner } => {
            format!("img(P{})({})", perm.0, tower_set_name(s, *inner)?)
        }
        other => {
            return Err(Error::Internal(format!(
                "tower registries do not hold {other:?} names"
            )))
        }
    })
}

pub fn export_session(cfg: &SessionConfig, session: &mut Session, path: &Path) -> Result<()> {
    let text = render_dump(cfg, session)?;
    std::fs::write(path, text)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Import
// ---------------------------------------------------------------------------

pub fn import_session(path: &Path) -> Result<(SessionConfig, Session)> {
    let text = std::fs::read_to_string(path)?;
    parse_dump(&text)
}

pub fn parse_dump(text: &str) -> Result<(SessionConfig, Session)> {
    let lines: Vec<&str> = text.lines().collect();
    let (last, body_lines) = lines
        .split_last()
        .ok_or_else(|| Error::CorruptDump("empty dump".into()))?;
    let expected = last
        .strip_prefix("sha256 ")
        .ok_or_else(|| Error::CorruptDump("missing checksum line".into()))?;
    let mut body = body_lines.join("\n");
    body.push('\n');
    let actual = checksum(&body);
    if actual != expected {
        return Err(Error::CorruptDump(format!(
            "checksum mismatch: recorded {expected}, content hashes to {actual}"
        )));
    }

    let mut it = body_lines.iter();
    let header = it.next().ok_or_else(|| Error::CorruptDump("empty dump".into()))?;
    let version = header
        .strip_prefix(&format!("{DUMP_HEADER} v="))
        .ok_or_else(|| Error::CorruptDump("missing header".into()))?;
    if version != env!("CARGO_PKG_VERSION") {
        return Err(Error::VersionMismatch {
            found: version.into(),
            expected: env!("CARGO_PKG_VERSION").into(),
        });
    }
    if it.next() != Some(&"config-begin") {
        return Err(Error::CorruptDump("expected config-begin".into()));
    }
    let mut config_text = String::new();
    loop {
        let line = it
            .next()
            .ok_or_else(|| Error::CorruptDump("unterminated config block".into()))?;
        if *line == "config-end" {
            break;
        }
        config_text.push_str(line);
        config_text.push('\n');
    }
    let cfg = SessionConfig::parse(&config_text)?;
    let mut session = Session::from_config(&cfg)?;

    let mut probes: Vec<(PointName, SetId, bool)> = Vec::new();
    let mut orphans: Vec<(SetId, u64)> = Vec::new();
    for raw in it {
        let line = *raw;
        if let Some(rest) = line.strip_prefix("perm ") {
            let Session::Tower { s, .. } = &mut session else {
                return Err(Error::CorruptDump("perm line in a grid dump".into()));
            };
            let (ptag, body) = rest
                .split_once(" = ")
                .ok_or_else(|| Error::CorruptDump(format!("malformed perm line: {line}")))?;
            let h = parse_perm(body)?;
            let id = s.register_perm(h)?;
            let want: u32 = ptag
                .strip_prefix('P')
                .and_then(|n| n.parse().ok())
                .ok_or_else(|| Error::CorruptDump(format!("malformed perm tag: {ptag}")))?;
            if id.0 != want {
                return Err(Error::CorruptDump(format!(
                    "perm replay landed on P{}, dump says {ptag}",
                    id.0
                )));
            }
        } else if let Some(rest) = line.strip_prefix("xdemand ") {
            replay_xdemand(&mut session, rest)?;
        } else if let Some(rest) = line.strip_prefix("gen ") {
            let Session::Grid { g, .. } = &mut session else {
                return Err(Error::CorruptDump("gen line in a tower dump".into()));
            };
            let b = BaseSet::parse(rest)?;
            g.register_base(b)?;
        } else if let Some(rest) = line.strip_prefix("set ") {
            replay_set(&mut session, rest)?;
        } else if let Some(rest) = line.strip_prefix("eta ") {
            let Session::Grid { g, .. } = &mut session else {
                return Err(Error::CorruptDump("eta line in a tower dump".into()));
            };
            let picks: Vec<bool> = rest
                .chars()
                .map(|c| match c {
                    '0' => Ok(false),
                    '1' => Ok(true),
                    _ => Err(Error::CorruptDump(format!("bad eta bit {c}"))),
                })
                .collect::<Result<_>>()?;
            g.eta_make(&picks)?;
        } else if line == "pruned on" {
            let Session::Grid { g, .. } = &mut session else {
                return Err(Error::CorruptDump("pruned line in a tower dump".into()));
            };
            let sel = g
                .eta()
                .cloned()
                .ok_or_else(|| Error::CorruptDump("pruned before eta".into()))?;
            g.prune_alphabet(&sel)?;
        } else if let Some(rest) = line.strip_prefix("orphan ") {
            let (id, b) = rest
                .split_once(' ')
                .ok_or_else(|| Error::CorruptDump(format!("malformed orphan line: {line}")))?;
            let id: u32 = id
                .strip_prefix('S')
                .and_then(|n| n.parse().ok())
                .ok_or_else(|| Error::CorruptDump(format!("malformed set id: {id}")))?;
            let b: u64 = b
                .parse()
                .map_err(|_| Error::CorruptDump(format!("malformed bound: {b}")))?;
            orphans.push((SetId(id), b));
        } else if let Some(rest) = line.strip_prefix("probe ") {
            probes.push(parse_probe(rest)?);
        } else {
            return Err(Error::CorruptDump(format!("unrecognized line: {line}")));
        }
    }

    // Replay must reproduce the recorded trace bounds exactly.
    if let Session::Grid { g, .. } = &session {
        for (id, want) in &orphans {
            match g.orphan_bounds().get(id) {
                Some(have) if have == want => {}
                Some(have) => {
                    return Err(Error::CorruptDump(format!(
                        "trace bound of S{} replayed as {have}, dump says {want}",
                        id.0
                    )))
                }
                None => {
                    return Err(Error::CorruptDump(format!(
                        "replay produced no trace bound for S{}",
                        id.0
                    )))
                }
            }
        }
    }

    // The rebuilt session must answer every recorded probe identically.
    for (p, id, want) in &probes {
        let got = session.member(p, *id).map_err(|e| {
            Error::CorruptDump(format!("probe {p} S{} no longer evaluates: {e}", id.0))
        })?;
        if got != *want {
            return Err(Error::CorruptDump(format!(
                "probe {p} S{} answers {got}, dump recorded {want}",
                id.0
            )));
        }
    }
    Ok((cfg, session))
}

fn replay_set(session: &mut Session, src: &str) -> Result<()> {
    match session {
        Session::Grid { g, .. } => {
            g.parse_set_with(src, &|_| None)?;
        }
        Session::Tower { s, .. } => {
            crate::text::parse_all(src, |cur| tower_set_from(cur, s))?;
        }
    }
    Ok(())
}

fn tower_set_from(cur: &mut Cursor, s: &mut TowerSession) -> Result<SetId> {
    if cur.eat_str("Phi") {
        let step = cur.nat()? as u32;
        cur.expect('(')?;
        let inner = tower_set_from(cur, s)?;
        cur.expect(')')?;
        let level = s.registry().level(inner);
        if level != step {
            return Err(Error::CorruptDump(format!(
                "Phi{step} applied to a level-{level} name"
            )));
        }
        return s.phi_set(inner);
    }
    if cur.eat_str("img(P") {
        let perm = cur.nat()? as u32;
        cur.expect(')')?;
        cur.expect('(')?;
        let inner = tower_set_from(cur, s)?;
        cur.expect(')')?;
        return s.perm_image(PermId(perm), inner);
    }
    let b = BaseSet::parse_from(cur)?;
    s.registry()
        .find(&SetExpr::Base(b.clone()))
        .ok_or_else(|| Error::CorruptDump(format!("{b} is not part of the tower universe")))
}

fn replay_xdemand(session: &mut Session, rest: &str) -> Result<()> {
    crate::text::parse_all(rest, |cur| {
        let level = cur.nat()? as u32;
        skip_one_space(cur)?;
        cur.expect_str("h[")?;
        let mut h = Vec::new();
        if !cur.eat(']') {
            loop {
                let x = PointName::parse_from(cur)?;
                cur.expect_str("->")?;
                let y = PointName::parse_from(cur)?;
                h.push((x, y));
                if cur.eat(']') {
                    break;
                }
                cur.expect(',')?;
            }
        }
        skip_one_space(cur)?;
        cur.expect_str("f[")?;
        let mut f = Vec::new();
        if !cur.eat(']') {
            loop {
                cur.expect('S')?;
                let a = cur.nat()? as u32;
                cur.expect_str("->")?;
                cur.expect('S')?;
                let b = cur.nat()? as u32;
                f.push((SetId(a), SetId(b)));
                if cur.eat(']') {
                    break;
                }
                cur.expect(',')?;
            }
        }
        match session {
            Session::Tower { s, .. } => s.add_demand(level, h, f).map(|_| ()),
            Session::Grid { g, .. } => g.add_demand(level, h, f).map(|_| ()),
        }
    })
}

fn skip_one_space(cur: &mut Cursor) -> Result<()> {
    cur.expect(' ')
}

fn parse_perm(src: &str) -> Result<PermHandle> {
    crate::text::parse_all(src, perm_from)
}

fn perm_from(cur: &mut Cursor) -> Result<PermHandle> {
    if cur.eat_str("id") {
        return Ok(PermHandle::Identity);
    }
    if cur.eat_str("pairs[") {
        let mut pairs = Vec::new();
        if !cur.eat(']') {
            loop {
                cur.expect('a')?;
                let a = cur.nat()?;
                cur.expect_str("->")?;
                cur.expect('a')?;
                let b = cur.nat()?;
                pairs.push((a, b));
                if cur.eat(']') {
                    break;
                }
                cur.expect(',')?;
            }
        }
        return PermHandle::base_perm(pairs);
    }
    if cur.eat_str("lift(") {
        let inner = perm_from(cur)?;
        cur.expect(')')?;
        return Ok(PermHandle::Lift(Box::new(inner)));
    }
    if cur.eat_str("sat(d") {
        let d = cur.nat()? as u32;
        cur.expect(')')?;
        return Ok(PermHandle::Satisfier(DemandId(d)));
    }
    if cur.eat_str("comp(") {
        let a = perm_from(cur)?;
        cur.expect(',')?;
        let b = perm_from(cur)?;
        cur.expect(')')?;
        return Ok(PermHandle::Compose(Box::new(a), Box::new(b)));
    }
    if cur.eat_str("inv(") {
        let inner = perm_from(cur)?;
        cur.expect(')')?;
        return Ok(PermHandle::Inverse(Box::new(inner)));
    }
    Err(cur.err("expected a permutation handle"))
}

fn parse_probe(rest: &str) -> Result<(PointName, SetId, bool)> {
    let mut parts = rest.rsplitn(3, ' ');
    let val = parts
        .next()
        .ok_or_else(|| Error::CorruptDump(format!("malformed probe: {rest}")))?;
    let sid = parts
        .next()
        .ok_or_else(|| Error::CorruptDump(format!("malformed probe: {rest}")))?;
    let point = parts
        .next()
        .ok_or_else(|| Error::CorruptDump(format!("malformed probe: {rest}")))?;
    let p = PointName::parse(point)?;
    let id: u32 = sid
        .strip_prefix('S')
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| Error::CorruptDump(format!("malformed set id: {sid}")))?;
    let want = match val {
        "true" => true,
        "false" => false,
        other => return Err(Error::CorruptDump(format!("malformed probe value: {other}"))),
    };
    Ok((p, SetId(id), want))
}

fn checksum(body: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(body.as_bytes());
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

// ---------------------------------------------------------------------------
// Certificates
// ---------------------------------------------------------------------------

/// The output of a verification run: engine version, the hash of the
/// configuration it ran under, the seed, and one canonical line per check.
/// Rendering is deterministic — identical runs produce identical bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Certificate {
    pub engine_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub checks: usize,
    pub passed: usize,
    pub report_lines: Vec<String>,
}

impl Certificate {
    pub fn new(config_hash: &str, seed: u64, reports: &[CheckReport]) -> Certificate {
        Certificate {
            engine_version: env!("CARGO_PKG_VERSION").into(),
            config_hash: config_hash.into(),
            seed,
            checks: reports.len(),
            passed: reports.iter().filter(|r| r.pass).count(),
            report_lines: reports.iter().map(|r| r.canonical_line()).collect(),
        }
    }

    pub fn all_pass(&self) -> bool {
        self.passed == self.checks
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        writeln!(out, "homlim-certificate v={}", self.engine_version).unwrap();
        writeln!(out, "config {}", self.config_hash).unwrap();
        writeln!(out, "seed {}", self.seed).unwrap();
        for line in &self.report_lines {
            out.push_str(line);
            out.push('\n');
        }
        writeln!(out, "end checks={} pass={}", self.checks, self.passed).unwrap();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verify;

    fn grid_config() -> SessionConfig {
        SessionConfig::parse(
            "mode grid\ndepth 3\nfin on\nseed 9\n\
             base ev = ep(;10)\nbase od = ep(;01)\nbase p2 = pow2\nbase p2c = pow2'\n\
             demand 0 h[] f[ev->od]\ndemand 0 h[] f[od->ev,p2->p2c]\n",
        )
        .unwrap()
    }

    fn tower_config() -> SessionConfig {
        SessionConfig::parse(
            "mode tower\natoms 2\nsupport-bound 2\ndepth 2\nseed 5\n\
             base lo = fin[0]\nbase hi = fin[1]\n\
             demand 0 h[a0->a1] f[lo->hi]\n",
        )
        .unwrap()
    }

    #[test]
    fn an_unqueried_session_round_trips() {
        let cfg = grid_config();
        let mut live = Session::from_config(&cfg).unwrap();
        let text = render_dump(&cfg, &mut live).unwrap();
        let (cfg2, _) = parse_dump(&text).unwrap();
        assert_eq!(cfg, cfg2);
    }

    #[test]
    fn a_driven_grid_session_answers_probes_after_import() {
        let cfg = grid_config();
        let mut live = Session::from_config(&cfg).unwrap();
        {
            let Session::Grid { g, demands } = &mut live else { unreachable!() };
            // Register derived names and force trace-bound bookkeeping.
            let ev = g.base_ids()[0];
            let mid = g.lift_to(ev, 2).unwrap();
            let w = crate::word::Word::letter(crate::word::Letter::pos(demands[0]));
            let img = g.canon_xi(2, &w, mid).unwrap();
            let _ = g.grid_member(&PointName::Atom(5), img).unwrap();
            let fin13 = g.register_base(BaseSet::finite(vec![1, 3])).unwrap();
            let _ = g.lift_to(fin13, 2).unwrap();
        }
        let text = render_dump(&cfg, &mut live).unwrap();
        assert!(text.contains("\nset "));
        assert!(text.contains("\ngen fin[1,3]\n"));
        let (_, mut rebuilt) = parse_dump(&text).unwrap();
        // Spot-check beyond the recorded probes.
        let Session::Grid { g, .. } = &mut rebuilt else { panic!("wrong session kind") };
        assert_eq!(g.registry().ids().count(), {
            let Session::Grid { g: old, .. } = &live else { unreachable!() };
            old.registry().ids().count()
        });
    }

    #[test]
    fn a_driven_tower_session_round_trips_with_permutations() {
        let cfg = tower_config();
        let mut live = Session::from_config(&cfg).unwrap();
        {
            let Session::Tower { s, demands } = &mut live else { unreachable!() };
            let pi = s.satisfy_demand(demands[0]).unwrap();
            let lifted = s.lift_demand(demands[0]).unwrap();
            let outcome = s.satisfies(&pi, lifted).unwrap();
            assert!(outcome.ok, "{:?}", outcome.witness);
        }
        let text = render_dump(&cfg, &mut live).unwrap();
        let (_, rebuilt) = parse_dump(&text).unwrap();
        let Session::Tower { s, .. } = &rebuilt else { panic!("wrong session kind") };
        let Session::Tower { s: old, .. } = &live else { unreachable!() };
        assert_eq!(s.registry().ids().count(), old.registry().ids().count());
        assert_eq!(s.perms().len(), old.perms().len());
    }

    #[test]
    fn a_tampered_dump_is_rejected() {
        let cfg = grid_config();
        let mut live = Session::from_config(&cfg).unwrap();
        let text = render_dump(&cfg, &mut live).unwrap();
        let tampered = text.replacen("depth 3", "depth 2", 1);
        assert!(matches!(parse_dump(&tampered), Err(Error::CorruptDump(_))));
        let truncated: String = text.lines().skip(1).collect::<Vec<_>>().join("\n") + "\n";
        assert!(matches!(parse_dump(&truncated), Err(Error::CorruptDump(_))));
    }

    #[test]
    fn a_dump_from_another_engine_version_is_refused() {
        let cfg = grid_config();
        let mut live = Session::from_config(&cfg).unwrap();
        let text = render_dump(&cfg, &mut live).unwrap();
        let other = text.replacen(
            &format!("{DUMP_HEADER} v={}", env!("CARGO_PKG_VERSION")),
            &format!("{DUMP_HEADER} v=9.9.9"),
            1,
        );
        // Re-seal so the version line is the only discrepancy.
        let body_end = other.rfind("sha256 ").unwrap();
        let body = &other[..body_end];
        let resealed = format!("{body}sha256 {}\n", checksum(body));
        assert!(matches!(
            parse_dump(&resealed),
            Err(Error::VersionMismatch { .. })
        ));
    }

    #[test]
    fn certificates_render_deterministically() {
        let cfg = grid_config();
        let reports = vec![
            verify::verify_named("trivial-guard", 3).unwrap(),
            verify::verify_named("micro-agreement", 3).unwrap(),
        ];
        let a = Certificate::new(&cfg.hash(), 3, &reports);
        let again = vec![
            verify::verify_named("trivial-guard", 3).unwrap(),
            verify::verify_named("micro-agreement", 3).unwrap(),
        ];
        let b = Certificate::new(&cfg.hash(), 3, &again);
        assert_eq!(a.render(), b.render());
        assert!(a.all_pass());
        assert!(a.render().starts_with("homlim-certificate v="));
        assert!(a.render().ends_with("end checks=2 pass=2\n"));
    }
}

//! Command-line surface. Sessions persist as dump files between
//! invocations: build commands write one, query commands import it, answer,
//! and leave it untouched. Exit codes are the machine-readable channel:
//! 0 all checks pass / query answered, 1 a check failed, 2 usage or
//! configuration error.

use crate::config::{Mode, SessionConfig};
use crate::error::{Error, Result};
use crate::grid::Trace;
use crate::point::PointName;
use crate::session_io::{self, Certificate, Session};
use crate::verify::{self, CHECK_NAMES};
use crate::word::DemandId;
use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "homlim", version, about = "lazy engine for homogeneous set families")]
struct Cli {
    /// Session dump file that build commands write and query commands read.
    #[arg(long, global = true, default_value = "homlim.session")]
    session: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// One-dimensional extension-step sessions.
    Tower {
        #[command(subcommand)]
        cmd: TowerCmd,
    },
    /// Two-dimensional string-point sessions.
    Grid {
        #[command(subcommand)]
        cmd: GridCmd,
    },
    /// Run the deterministic check suite ("all" or one check by name).
    Verify {
        target: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the certificate to this file.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Validate the session dump and write a freshly sealed copy.
    Export { out: PathBuf },
    /// Validate a dump: replay it and re-answer its probe suite.
    Import { path: PathBuf },
}

#[derive(Subcommand)]
enum TowerCmd {
    /// Build a session over a finite atom universe and save it.
    Build {
        #[arg(long)]
        atoms: u64,
        #[arg(long)]
        depth: u32,
        #[arg(long, default_value_t = 3)]
        support_bound: usize,
        /// File of `base`/`demand` declaration lines.
        #[arg(long)]
        demands: Option<PathBuf>,
    },
    /// Decide whether POINT lies in SET.
    Member { point: String, set: String },
    /// Construct the satisfier of a demand and check it.
    Satisfy {
        demand: String,
        /// Also sweep the materialized fragment through the full check.
        #[arg(long)]
        check_fragment: bool,
    },
}

#[derive(Subcommand)]
enum GridCmd {
    /// Build a homogenized session from a configuration file and save it.
    Homogenize {
        #[arg(long)]
        config: PathBuf,
        /// Override the configured depth.
        #[arg(long)]
        depth: Option<u32>,
        /// Selector-pick bits file: switches the session to pruned mode.
        #[arg(long)]
        prune: Option<PathBuf>,
    },
    /// Decide whether POINT lies in SET.
    Member { point: String, set: String },
    /// Project SET to its base-level trace.
    Trace { set: String },
    /// Check that a demand's letter action realizes the demand.
    Satisfy { demand: String },
    /// Run one structural check on the session.
    Check {
        #[arg(value_parser = ["disjoint", "projection", "free-action", "star2"])]
        what: String,
    },
}

/// Entry point behind the binary: parses argv from the environment.
pub fn cli_main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are successful outputs, not usage errors.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn run(cli: Cli) -> Result<i32> {
    match cli.cmd {
        Cmd::Tower { cmd } => tower_cmd(&cli.session, cmd),
        Cmd::Grid { cmd } => grid_cmd(&cli.session, cmd),
        Cmd::Verify { target, seed, report } => verify_cmd(&target, seed, report.as_deref()),
        Cmd::Export { out } => {
            let (cfg, mut session) = load(&cli.session)?;
            session_io::export_session(&cfg, &mut session, &out)?;
            println!("exported {} -> {}", cli.session.display(), out.display());
            Ok(0)
        }
        Cmd::Import { path } => {
            let (cfg, session) = session_io::import_session(&path)?;
            let (sets, demands) = match &session {
                Session::Tower { s, .. } => (s.registry().ids().count(), s.demands().len()),
                Session::Grid { g, .. } => (g.registry().ids().count(), g.demands().len()),
            };
            println!(
                "imported {} mode={} sets={sets} demands={demands} probes=ok",
                path.display(),
                cfg.mode
            );
            Ok(0)
        }
    }
}

fn load(path: &Path) -> Result<(SessionConfig, Session)> {
    if !path.exists() {
        return Err(Error::Config(format!(
            "no session at {}; run a build command first",
            path.display()
        )));
    }
    session_io::import_session(path)
}

/// Environment override for the evaluation-step budget.
fn budget_override(cfg: &mut SessionConfig) -> Result<()> {
    if let Ok(v) = std::env::var("HOMLIM_BUDGET") {
        let steps: u64 = v
            .parse()
            .map_err(|_| Error::Config(format!("HOMLIM_BUDGET must be a step count, got {v:?}")))?;
        cfg.budgets.eval = steps;
    }
    Ok(())
}

fn save(cfg: &SessionConfig, session: &mut Session, path: &Path) -> Result<()> {
    session_io::export_session(cfg, session, path)?;
    println!("session saved to {}", path.display());
    Ok(())
}

fn parse_demand_id(src: &str) -> Result<DemandId> {
    let digits = src.strip_prefix('d').unwrap_or(src);
    digits
        .parse::<u32>()
        .map(DemandId)
        .map_err(|_| Error::Config(format!("demand ids look like d0, got {src:?}")))
}

fn tower_cmd(session_path: &Path, cmd: TowerCmd) -> Result<i32> {
    match cmd {
        TowerCmd::Build { atoms, depth, support_bound, demands } => {
            let mut text = format!(
                "mode tower\natoms {atoms}\nsupport-bound {support_bound}\ndepth {depth}\n"
            );
            if let Some(file) = demands {
                text.push_str(&std::fs::read_to_string(&file)?);
            }
            let mut cfg = SessionConfig::parse(&text)?;
            budget_override(&mut cfg)?;
            let mut session = Session::from_config(&cfg)?;
            let Session::Tower { s, demands } = &session else { unreachable!() };
            println!(
                "tower built: atoms={atoms} depth={depth} sets={} demands={}",
                s.registry().ids().count(),
                demands.len()
            );
            save(&cfg, &mut session, session_path)?;
            Ok(0)
        }
        TowerCmd::Member { point, set } => {
            let (cfg, mut session) = load(session_path)?;
            let names = session.declared_names(&cfg)?;
            let Session::Tower { s, .. } = &mut session else {
                return Err(Error::Config("the saved session is a grid session".into()));
            };
            let p = PointName::parse(&point)?;
            let id = s.parse_set_with(&set, &|n| names.get(n).copied())?;
            println!("{}", s.member(&p, id)?);
            Ok(0)
        }
        TowerCmd::Satisfy { demand, check_fragment } => {
            let (_, mut session) = load(session_path)?;
            let Session::Tower { s, .. } = &mut session else {
                return Err(Error::Config("the saved session is a grid session".into()));
            };
            let did = parse_demand_id(&demand)?;
            let pi = s.satisfy_demand(did)?;
            println!("satisfier constructed for d{}", did.0);
            if check_fragment {
                let lifted = s.lift_demand(did)?;
                let outcome = s.satisfies(&pi, lifted)?;
                match outcome.witness {
                    None if outcome.ok => {
                        println!("fragment sweep: ok");
                        Ok(0)
                    }
                    w => {
                        println!("fragment sweep: FAILED {}", w.unwrap_or_default());
                        Ok(1)
                    }
                }
            } else {
                Ok(0)
            }
        }
    }
}

fn grid_cmd(session_path: &Path, cmd: GridCmd) -> Result<i32> {
    match cmd {
        GridCmd::Homogenize { config, depth, prune } => {
            let text = std::fs::read_to_string(&config)?;
            let mut cfg = SessionConfig::parse(&text)?;
            if cfg.mode == Mode::Tower {
                return Err(Error::Config("the configuration describes a tower session".into()));
            }
            if let Some(d) = depth {
                cfg.depth = d;
            }
            if let Some(etafile) = prune {
                let bits = std::fs::read_to_string(&etafile)?;
                let picks: Vec<bool> = bits
                    .chars()
                    .filter(|c| !c.is_whitespace())
                    .map(|c| match c {
                        '0' => Ok(false),
                        '1' => Ok(true),
                        other => Err(Error::Config(format!(
                            "selector picks are 0/1 bits, found {other:?}"
                        ))),
                    })
                    .collect::<Result<_>>()?;
                if picks.is_empty() {
                    return Err(Error::Config("the selector file holds no picks".into()));
                }
                cfg.mode = Mode::GridPruned;
                cfg.eta_picks = picks;
            }
            budget_override(&mut cfg)?;
            let mut session = Session::from_config(&cfg)?;
            let Session::Grid { g, demands } = &session else { unreachable!() };
            println!(
                "grid built: mode={} depth={} generators={} demands={}",
                cfg.mode,
                g.depth(),
                g.base_ids().len(),
                demands.len()
            );
            if let Some(pa) = g.pruned_alphabet() {
                println!("pruned alphabet keeps {} demands", pa.allowed.len());
            }
            save(&cfg, &mut session, session_path)?;
            Ok(0)
        }
        GridCmd::Member { point, set } => {
            let (cfg, mut session) = load(session_path)?;
            let names = session.declared_names(&cfg)?;
            let Session::Grid { g, .. } = &mut session else {
                return Err(Error::Config("the saved session is a tower session".into()));
            };
            let p = PointName::parse(&point)?;
            let id = g.parse_set_with(&set, &|n| names.get(n).copied())?;
            println!("{}", g.grid_member(&p, id)?);
            Ok(0)
        }
        GridCmd::Trace { set } => {
            let (cfg, mut session) = load(session_path)?;
            let names = session.declared_names(&cfg)?;
            let Session::Grid { g, .. } = &mut session else {
                return Err(Error::Config("the saved session is a tower session".into()));
            };
            let id = g.parse_set_with(&set, &|n| names.get(n).copied())?;
            match g.trace(id)? {
                Trace::InFamily(base) => println!("in-family {}", g.describe(base)),
                Trace::FiniteTrace(atoms) => {
                    let items: Vec<String> = atoms.iter().map(|a| a.to_string()).collect();
                    println!("finite [{}]", items.join(","));
                }
            }
            Ok(0)
        }
        GridCmd::Satisfy { demand } => {
            let (_, mut session) = load(session_path)?;
            let Session::Grid { g, .. } = &mut session else {
                return Err(Error::Config("the saved session is a tower session".into()));
            };
            let did = parse_demand_id(&demand)?;
            let outcome = g.check_satisfies(did, 16)?;
            if outcome.ok {
                println!("demand d{} is realized by its letter action", did.0);
                Ok(0)
            } else {
                println!(
                    "demand d{} check FAILED: {}",
                    did.0,
                    outcome.witness.unwrap_or_default()
                );
                Ok(1)
            }
        }
        GridCmd::Check { what } => {
            let (cfg, mut session) = load(session_path)?;
            let Session::Grid { g, .. } = &mut session else {
                return Err(Error::Config("the saved session is a tower session".into()));
            };
            let outcome = match what.as_str() {
                "projection" => g.check_projection()?,
                "free-action" => g.check_free_action(3, 3)?,
                "star2" => g.check_star2(2, 2)?,
                "disjoint" => {
                    let sel = g.eta().cloned().ok_or_else(|| {
                        Error::Config(
                            "disjointness needs a pruned session; rebuild with --prune".into(),
                        )
                    })?;
                    let &(x0, x1) = sel
                        .pairs()
                        .first()
                        .ok_or_else(|| Error::Config("the selector holds no pairs".into()))?;
                    g.disjointness_check(x0, x1, 3, cfg.budgets.separator)?
                }
                _ => unreachable!("clap restricts the value"),
            };
            println!("check {what}: swept {} objects", outcome.checked);
            if outcome.failures.is_empty() {
                println!("check {what}: ok");
                Ok(0)
            } else {
                for w in outcome.failures.iter().take(8) {
                    println!("check {what}: FAILED {w}");
                }
                Ok(1)
            }
        }
    }
}

fn verify_cmd(target: &str, seed: u64, report: Option<&Path>) -> Result<i32> {
    let reports = if target == "all" {
        verify::verify_all(seed)
    } else {
        if !CHECK_NAMES.contains(&target) {
            return Err(Error::Config(format!(
                "unknown check {target:?}; available: all, {}",
                CHECK_NAMES.join(", ")
            )));
        }
        vec![verify::verify_named(target, seed)?]
    };
    let cert = Certificate::new(&verify::suite_fingerprint(), seed, &reports);
    print!("{}", cert.render());
    if let Some(path) = report {
        std::fs::write(path, cert.render())?;
    }
    Ok(if cert.all_pass() { 0 } else { 1 })
}

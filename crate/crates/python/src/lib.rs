//! Python bindings: one `Engine` class wrapping a session (tower or grid,
//! chosen by the configuration text) plus a module-level `verify` runner.
//! Everything crosses the boundary as strings in the same syntax the CLI
//! speaks; answers come back as plain Python values.

use homlim_core::{
    verify_all, verify_named, Certificate, Error, PointName, SessionConfig, Trace, CHECK_NAMES,
};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use std::collections::HashMap;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Syntax { .. }
        | Error::Undeclared(_)
        | Error::Config(_)
        | Error::NotInjective(_)
        | Error::SetMapNotInjective(_)
        | Error::BadSelector(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// A live session built from configuration text.
///
/// Usage:
///
///     import homlim
///     e = homlim.Engine("mode grid\ndepth 2\nbase ev = ep(;10)\n")
///     e.member("a4", "ev")          # True
///     e.trace("Phi0(ev)")           # "in-family ep(;10)"
#[pyclass]
struct Engine {
    cfg: SessionConfig,
    session: homlim_core::Session,
    names: HashMap<String, homlim_core::SetId>,
}

impl Engine {
    fn build(cfg: SessionConfig) -> PyResult<Self> {
        let session = homlim_core::Session::from_config(&cfg).map_err(py_err)?;
        let names = session.declared_names(&cfg).map_err(py_err)?;
        Ok(Engine { cfg, session, names })
    }

    fn parse_set(&mut self, set: &str) -> PyResult<homlim_core::SetId> {
        let names = &self.names;
        match &mut self.session {
            homlim_core::Session::Tower { s, .. } => {
                s.parse_set_with(set, &|n| names.get(n).copied())
            }
            homlim_core::Session::Grid { g, .. } => {
                g.parse_set_with(set, &|n| names.get(n).copied())
            }
        }
        .map_err(py_err)
    }

    fn demand(&self, demand: &str) -> PyResult<homlim_core::DemandId> {
        let digits = demand.strip_prefix('d').unwrap_or(demand);
        let n: u32 = digits
            .parse()
            .map_err(|_| PyValueError::new_err(format!("demand ids look like d0, got {demand:?}")))?;
        let known = self.session.demand_ids();
        if !known.contains(&homlim_core::DemandId(n)) {
            return Err(PyValueError::new_err(format!(
                "d{n} is not one of the {} configured demands",
                known.len()
            )));
        }
        Ok(homlim_core::DemandId(n))
    }
}

#[pymethods]
impl Engine {
    #[new]
    fn new(config: &str) -> PyResult<Self> {
        let cfg = SessionConfig::parse(config).map_err(py_err)?;
        Engine::build(cfg)
    }

    /// "tower", "grid" or "grid-pruned".
    fn mode(&self) -> String {
        self.cfg.mode.to_string()
    }

    /// The configuration in canonical form.
    fn config(&self) -> String {
        self.cfg.print()
    }

    fn config_hash(&self) -> String {
        self.cfg.hash()
    }

    /// Decide whether the point lies in the set, both given as text.
    fn member(&mut self, point: &str, set: &str) -> PyResult<bool> {
        let p = PointName::parse(point).map_err(py_err)?;
        let id = self.parse_set(set)?;
        match &mut self.session {
            homlim_core::Session::Tower { s, .. } => s.member(&p, id),
            homlim_core::Session::Grid { g, .. } => g.grid_member(&p, id),
        }
        .map_err(py_err)
    }

    /// Base-level trace of a grid set: "in-family NAME" or "finite [a,b,..]".
    fn trace(&mut self, set: &str) -> PyResult<String> {
        let id = self.parse_set(set)?;
        let homlim_core::Session::Grid { g, .. } = &mut self.session else {
            return Err(PyValueError::new_err("traces are a grid-session query"));
        };
        Ok(match g.trace(id).map_err(py_err)? {
            Trace::InFamily(base) => format!("in-family {}", g.describe(base)),
            Trace::FiniteTrace(atoms) => {
                let items: Vec<String> = atoms.iter().map(|a| a.to_string()).collect();
                format!("finite [{}]", items.join(","))
            }
        })
    }

    /// Check that a demand is realized; returns None on success or the
    /// failure witness.
    fn satisfy(&mut self, demand: &str) -> PyResult<Option<String>> {
        let did = self.demand(demand)?;
        match &mut self.session {
            homlim_core::Session::Grid { g, .. } => {
                let out = g.check_satisfies(did, 16).map_err(py_err)?;
                Ok(if out.ok { None } else { out.witness })
            }
            homlim_core::Session::Tower { s, .. } => {
                let pi = s.satisfy_demand(did).map_err(py_err)?;
                let lifted = s.lift_demand(did).map_err(py_err)?;
                let out = s.satisfies(&pi, lifted).map_err(py_err)?;
                Ok(if out.ok { None } else { out.witness })
            }
        }
    }

    /// Run a structural sweep ("projection", "free-action", "star2" or
    /// "disjoint"); returns (objects checked, failure witnesses).
    fn check(&mut self, what: &str) -> PyResult<(u64, Vec<String>)> {
        let homlim_core::Session::Grid { g, .. } = &mut self.session else {
            return Err(PyValueError::new_err("structural sweeps are grid-session checks"));
        };
        let out = match what {
            "projection" => g.check_projection(),
            "free-action" => g.check_free_action(3, 3),
            "star2" => g.check_star2(2, 2),
            "disjoint" => match g.eta().map(|sel| sel.pairs().first().copied()) {
                Some(Some((x0, x1))) => {
                    g.disjointness_check(x0, x1, 3, self.cfg.budgets.separator)
                }
                Some(None) => Err(Error::Config("the selector holds no pairs".into())),
                None => Err(Error::Config(
                    "disjointness needs a pruned session (mode grid-pruned)".into(),
                )),
            },
            other => {
                return Err(PyValueError::new_err(format!(
                    "unknown check {other:?}; one of projection, free-action, star2, disjoint"
                )))
            }
        }
        .map_err(py_err)?;
        Ok((out.checked, out.failures))
    }

    /// Serialize the session as a self-verifying dump.
    fn dump(&mut self) -> PyResult<String> {
        homlim_core::session_io::render_dump(&self.cfg, &mut self.session).map_err(py_err)
    }

    /// Rebuild a session from dump text, replaying and re-checking it.
    #[staticmethod]
    fn load(text: &str) -> PyResult<Engine> {
        let (cfg, session) = homlim_core::session_io::parse_dump(text).map_err(py_err)?;
        let names = session.declared_names(&cfg).map_err(py_err)?;
        Ok(Engine { cfg, session, names })
    }

    fn __repr__(&self) -> String {
        format!(
            "Engine(mode={}, depth={}, demands={})",
            self.cfg.mode,
            self.cfg.depth,
            self.session.demand_ids().len()
        )
    }
}

/// Run the built-in check suite ("all" or one check by name); returns
/// (all_passed, certificate_text).
#[pyfunction]
#[pyo3(signature = (target = "all", seed = 0))]
fn verify(target: &str, seed: u64) -> PyResult<(bool, String)> {
    let reports = if target == "all" {
        verify_all(seed)
    } else {
        if !CHECK_NAMES.contains(&target) {
            return Err(PyValueError::new_err(format!(
                "unknown check {target:?}; available: all, {}",
                CHECK_NAMES.join(", ")
            )));
        }
        vec![verify_named(target, seed).map_err(py_err)?]
    };
    let cert = Certificate::new(&homlim_core::verify::suite_fingerprint(), seed, &reports);
    Ok((cert.all_pass(), cert.render()))
}

#[pymodule]
fn homlim(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Engine>()?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add("CHECK_NAMES", CHECK_NAMES.to_vec())?;
    Ok(())
}

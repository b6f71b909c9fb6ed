//! End-to-end acceptance sweep: one test per headline property, each
//! printing a single pass/fail line with its timing and asserting both the
//! property and the time budget. Tests serialize on a shared lock so the
//! timings are measured in isolation.

use homlim_core::verify::{
    check_free_action, check_grid_membership, check_homogeneity_sample, check_independence,
    check_micro_agreement, check_star2, demo_grid, disjointness_report, micro_tower,
    projection_report, trivial_guard_report, verify_all, CheckReport,
};
use std::sync::Mutex;
use std::time::Instant;

static GATE: Mutex<()> = Mutex::new(());

fn lock() -> std::sync::MutexGuard<'static, ()> {
    GATE.lock().unwrap_or_else(|p| p.into_inner())
}

fn count(r: &CheckReport, key: &str) -> u64 {
    r.counts
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| *v)
        .unwrap_or_else(|| panic!("report {} lacks the count {key}", r.name))
}

fn conclude(n: u32, label: &str, budget_ms: u128, t0: Instant, r: &CheckReport) {
    let elapsed = t0.elapsed().as_millis();
    let status = if r.pass { "PASS" } else { "FAIL" };
    println!("criterion {n} ({label}): {status} in {elapsed} ms (budget {budget_ms} ms)");
    assert!(
        r.pass,
        "criterion {n} ({label}) failed ({} total failures): {:#?}",
        r.failure_total, r.witnesses
    );
    assert!(
        elapsed <= budget_ms,
        "criterion {n} ({label}) took {elapsed} ms, budget {budget_ms} ms"
    );
}

#[test]
fn criterion_01_micro_enumeration() {
    let _g = lock();
    let t0 = Instant::now();
    let r = check_micro_agreement(0xACCE_0001).unwrap();
    assert_eq!(count(&r, "points-3"), 321);
    assert_eq!(count(&r, "table-points-3"), 318);
    assert!(count(&r, "membership-queries") >= 321 * 8);
    conclude(1, "micro enumeration", 5_000, t0, &r);
}

#[test]
fn criterion_02_independence_cells() {
    let _g = lock();
    let t0 = Instant::now();
    let mut s = micro_tower().unwrap();
    let r = check_independence(&mut s, 3, 3, 0xACCE_0002).unwrap();
    // Exhaustive over 1, 2 and 3 of the 8 lifted base sets, all signings.
    assert_eq!(count(&r, "primal-cells"), 8 * 2 + 28 * 4 + 56 * 8);
    conclude(2, "independence cells", 10_000, t0, &r);
}

#[test]
fn criterion_03_demand_satisfaction() {
    let _g = lock();
    let t0 = Instant::now();
    let mut s = micro_tower().unwrap();
    let r = check_homogeneity_sample(&mut s, 100, 0xACCE_0003).unwrap();
    assert_eq!(count(&r, "trials"), 100);
    conclude(3, "demand satisfaction", 30_000, t0, &r);
}

#[test]
fn criterion_04_grid_membership_decidability() {
    let _g = lock();
    let t0 = Instant::now();
    let (mut g, dids) = demo_grid().unwrap();
    let r = check_grid_membership(&mut g, &dids, 1000, 0xACCE_0004).unwrap();
    assert_eq!(count(&r, "agreements"), 1000);
    conclude(4, "grid membership decidability", 30_000, t0, &r);
}

#[test]
fn criterion_05_star_transport_soundness() {
    let _g = lock();
    let t0 = Instant::now();
    let (mut g, dids) = demo_grid().unwrap();
    let r = check_star2(&mut g, &dids, 50, 50, 200, 0xACCE_0005).unwrap();
    assert_eq!(count(&r, "defined-collected"), 50);
    assert_eq!(count(&r, "undefined-collected"), 50);
    assert_eq!(count(&r, "transport-points"), 50 * 200);
    conclude(5, "set-image transport soundness", 60_000, t0, &r);
}

#[test]
fn criterion_06_projection_traces() {
    let _g = lock();
    let t0 = Instant::now();
    let r = projection_report(0xACCE_0006).unwrap();
    assert!(count(&r, "names-swept") > 0);
    assert!(count(&r, "max-orphan-bound") <= 63);
    conclude(6, "projection traces", 60_000, t0, &r);
}

#[test]
fn criterion_07_free_action() {
    let _g = lock();
    let t0 = Instant::now();
    let (mut g, dids) = demo_grid().unwrap();
    let r = check_free_action(&mut g, &dids, 4, 0xACCE_0007).unwrap();
    // Census of reduced words over five letter pairs, by length.
    assert_eq!(count(&r, "words-len-1"), 10);
    assert_eq!(count(&r, "words-len-2"), 90);
    assert_eq!(count(&r, "words-len-3"), 810);
    assert_eq!(count(&r, "words-len-4"), 7290);
    assert_eq!(count(&r, "words-total"), 8200);
    conclude(7, "free action", 60_000, t0, &r);
}

#[test]
fn criterion_08_pairwise_incompatibility() {
    let _g = lock();
    let t0 = Instant::now();
    let r = disjointness_report(0xACCE_0008).unwrap();
    assert!(r.params.iter().any(|(k, _)| k == "incompatibility-witness"));
    assert!(count(&r, "orbit-points") > 0);
    conclude(8, "pairwise incompatibility", 60_000, t0, &r);
}

#[test]
fn criterion_09_trivial_family_guard() {
    let _g = lock();
    let t0 = Instant::now();
    let r = trivial_guard_report(0xACCE_0009);
    assert!(r.params.iter().any(|(k, v)| k == "singletons" && v == "degenerate-3"));
    assert!(r.params.iter().any(|(k, v)| k == "finite-witness" && v.contains("fin[0,1]")));
    conclude(9, "trivial-family guard", 1_000, t0, &r);
}

#[test]
fn criterion_10_deterministic_certificates() {
    let _g = lock();
    let t0 = Instant::now();
    let seed = 0xACCE_0010;
    let first = verify_all(seed);
    let second = verify_all(seed);
    let render = |rs: &[CheckReport]| {
        rs.iter().map(|r| r.canonical_line()).collect::<Vec<_>>().join("\n")
    };
    let (a, b) = (render(&first), render(&second));
    let elapsed = t0.elapsed().as_millis();
    let pass = a == b && first.iter().all(|r| r.pass);
    let status = if pass { "PASS" } else { "FAIL" };
    println!("criterion 10 (deterministic certificates): {status} in {elapsed} ms");
    assert_eq!(a, b, "criterion 10: certificates differ between identically seeded runs");
    for r in &first {
        assert!(r.pass, "criterion 10: check {} failed: {:#?}", r.name, r.witnesses);
    }
}

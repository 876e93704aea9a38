//! Acceptance criteria. Prints one PASS/FAIL line per criterion with the
//! measured values underneath and exits non-zero if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ccm_core::benchmarks::{planner, regime_report, Regime};
use ccm_core::equivalence::{sample_feasible_points, verify_equivalence, RECONSTRUCTION_TOL};
use ccm_core::experiments::{bid_sweep, capacity_sweep, congestion_report, SweepGrid};
use ccm_core::kkt::{binary_count, verify_milp_equivalence_with, MilpVerifyOptions, ScaleStatus};
use ccm_core::lp::{solve_lp, LpStatus};
use ccm_core::market::{clear, MarketInstance};
use ccm_core::scenario::bundled;
use ccm_core::settlement::{vcg_settle, SettlementRule};

use common::{close, grid_planner, random_micro_lp, random_small_instance, rel_err, vertex_oracle};

struct Criterion {
    id: u8,
    title: &'static str,
    lines: Vec<String>,
    failed: bool,
}

impl Criterion {
    fn new(id: u8, title: &'static str) -> Self {
        Self {
            id,
            title,
            lines: Vec::new(),
            failed: false,
        }
    }

    fn check(&mut self, ok: bool, what: impl Into<String>) {
        let what = what.into();
        self.lines.push(format!("{} {what}", if ok { "ok  " } else { "MISS" }));
        self.failed |= !ok;
    }

    fn error(&mut self, what: impl std::fmt::Display) {
        self.check(false, format!("error: {what}"));
    }
}

fn load(name: &str) -> MarketInstance {
    bundled(name).unwrap_or_else(|e| panic!("bundled scenario {name}: {e}"))
}

fn within(value: f64, expected: f64, rel: f64) -> bool {
    rel_err(value, expected) <= rel
}

fn c1_threebus_welfare() -> Criterion {
    let mut k = Criterion::new(1, "3-bus welfare table");
    let inst = load("threebus");
    let t = Instant::now();
    let report = match regime_report(&inst) {
        Ok(r) => r,
        Err(e) => {
            k.error(e);
            return k;
        }
    };
    let elapsed = t.elapsed();
    for (regime, expected) in [
        (Regime::Administrative, 9.97e6),
        (Regime::ProRata, 8.78e6),
        (Regime::Ccm, 13.26e6),
        (Regime::Planner, 13.26e6),
    ] {
        let w = report.row(regime).welfare;
        k.check(within(w, expected, 5e-3), format!("{} W = {w:.2} (expected {expected:.0} ± 0.5%)", regime.label()));
    }
    k.check(elapsed < Duration::from_secs(1), format!("runtime {:.3} s < 1 s", elapsed.as_secs_f64()));
    k
}

fn c2_threebus_allocation() -> Criterion {
    let mut k = Criterion::new(2, "3-bus CCM allocation and binding line 3->1");
    let inst = load("threebus");
    let out = match clear(&inst, &inst.volls()) {
        Ok(o) => o,
        Err(e) => {
            k.error(e);
            return k;
        }
    };
    let want = [0.0, 0.0, 50.0, 80.0, 50.0, 50.0];
    let worst = out.curtailment.iter().zip(&want).fold(0.0_f64, |a, (c, w)| a.max((c - w).abs()));
    k.check(worst <= 0.1, format!("c = {:?}, max deviation {worst:.2e} MW ≤ 0.1", out.curtailment));
    let l = inst.network().branch_index("L31").expect("L31 exists");
    let flow = out.audit.flows[l];
    k.check((flow - 40.0).abs() <= 1e-4, format!("flow 3->1 = {flow:.6} MW"));
    k.check(out.audit.slack_plus[l] <= 1e-4, format!("slack {:.2e} MW ≤ 1e-4", out.audit.slack_plus[l]));
    k
}

fn c3_threebus_vcg() -> Criterion {
    let mut k = Criterion::new(3, "3-bus VCG surpluses");
    let inst = load("threebus");
    let v = inst.volls();
    let r = match vcg_settle(&inst, &v, &v) {
        Ok(r) => r,
        Err(e) => {
            k.error(e);
            return k;
        }
    };
    k.check(within(r.surpluses[0], 9.75e6, 1e-2), format!("S(DC-1) = {:.2}", r.surpluses[0]));
    k.check(within(r.surpluses[1], 2.75e6, 1e-2), format!("S(DC-2) = {:.2}", r.surpluses[1]));
    for (i, a) in inst.agents().iter().enumerate() {
        let admin = a.voll * (a.load - a.obligation);
        k.check(
            r.surpluses[i] >= admin - 1e-6,
            format!("{}: S = {:.2} ≥ admin {admin:.2}", a.name, r.surpluses[i]),
        );
    }
    k
}

fn c4_nygrid() -> Criterion {
    let mut k = Criterion::new(4, "NYGrid welfare, allocation and IF_11 congestion");
    let inst = load("nygrid");
    let run = || -> ccm_core::Result<_> { Ok((regime_report(&inst)?, congestion_report(&inst)?, clear(&inst, &inst.volls())?)) };
    let (report, cong, out) = match run() {
        Ok(x) => x,
        Err(e) => {
            k.error(e);
            return k;
        }
    };
    for (regime, expected) in [
        (Regime::ProRata, 207.79e6),
        (Regime::Ccm, 293.41e6),
        (Regime::Planner, 293.41e6),
        (Regime::Copperplate, 355.7e6),
    ] {
        let w = report.row(regime).welfare;
        k.check(within(w, expected, 5e-3), format!("{} W = {w:.2} (expected {expected:.0} ± 0.5%)", regime.label()));
    }
    k.check(within(cong.gap, 62.34e6, 5e-3), format!("congestion gap {:.2}", cong.gap));
    k.check((cong.gap_pct - 17.5).abs() <= 0.5, format!("gap {:.2}% of copperplate", cong.gap_pct));
    let want = [1990.0, 1406.0, 2093.0, 0.0, 1326.0];
    let worst = out.curtailment.iter().zip(&want).fold(0.0_f64, |a, (c, w)| a.max((c - w).abs()));
    k.check(worst <= 1.0, format!("c = {:?}, max deviation {worst:.3} MW ≤ 1", out.curtailment));
    let l = inst.network().branch_index("IF_11").expect("IF_11 exists");
    let flow = out.audit.flows[l];
    k.check(
        (flow - 1290.0).abs() <= 1e-4 && out.audit.slack_plus[l] <= 1e-4,
        format!("IF_11 southbound flow {flow:.4} MW at its 1290 MW limit"),
    );
    let ids: Vec<String> = cong.binding.iter().map(|b| format!("{}{:+}", b.id, b.direction)).collect();
    k.check(ids == ["IF_11+1"], format!("binding set {ids:?}"));
    match cong.wedge {
        Some(w) => k.check((w - 47_000.0).abs() <= 1.0, format!("nodal wedge {w:.4} $/MWh")),
        None => k.check(false, "no interior agent to anchor prices"),
    }
    k
}

fn c5_efficiency() -> Criterion {
    let mut k = Criterion::new(5, "efficiency ratio on bundled scenarios");
    for name in ["threebus", "nygrid", "ieee24"] {
        let inst = load(name);
        let v = inst.volls();
        match (clear(&inst, &v), planner(&inst, &v, true)) {
            (Ok(out), Ok(plan)) => {
                let eta = out.true_welfare / plan.welfare;
                k.check((eta - 1.0).abs() <= 1e-6, format!("{name}: eta = {eta:.12}"));
            }
            (Err(e), _) | (_, Err(e)) => k.error(format!("{name}: {e}")),
        }
    }
    k
}

fn c6_incentives() -> Criterion {
    let mut k = Criterion::new(6, "incentive suite (VCG and uniform price)");
    let grid = SweepGrid::bids();
    for name in ["threebus", "nygrid"] {
        let inst = load(name);
        for (i, a) in inst.agents().iter().enumerate() {
            let t = Instant::now();
            match bid_sweep(&inst, i, &grid, SettlementRule::Vcg) {
                Ok(r) => {
                    let secs = t.elapsed().as_secs_f64();
                    k.check(r.gain <= 1e-4, format!("{name} VCG {}: g = {:.3e} ({secs:.1} s)", a.name, r.gain));
                    k.check(secs < 60.0, format!("{name} VCG {} sweep under 60 s", a.name));
                }
                Err(e) => k.error(format!("{name} VCG {}: {e}", a.name)),
            }
        }
    }
    let inst = load("threebus");
    for (i, a) in inst.agents().iter().enumerate() {
        let t = Instant::now();
        let r = match bid_sweep(&inst, i, &grid, SettlementRule::UniformPrice) {
            Ok(r) => r,
            Err(e) => {
                k.error(format!("UP {}: {e}", a.name));
                continue;
            }
        };
        let secs = t.elapsed().as_secs_f64();
        k.check(secs < 60.0, format!("UP {} sweep {secs:.1} s under 60 s", a.name));
        let g = 100.0 * r.gain;
        let line = format!("UP {}: g = {g:.2}% at b/v = {:.2}", a.name, r.best_multiplier);
        match a.name.as_str() {
            "VPP-1" => {
                k.check((g - 197.1).abs() <= 2.0, format!("{line} (expected 197.1 ± 2 pp)"));
                k.check(
                    (r.best_multiplier - 4.94).abs() <= 0.02 + 1e-9,
                    format!("UP VPP-1 best multiplier {:.2} (expected 4.94 ± 0.02)", r.best_multiplier),
                );
            }
            "DC-1" | "DC-2" | "VPP-2" => k.check(r.gain.abs() <= 1e-4, format!("{line} (expected 0)")),
            "C&I" => k.check(r.gain > 0.0 && (g - 29.6).abs() <= 5.0, format!("{line} (expected 29.6 ± 5 pp)")),
            "Res" => k.check(r.gain > 0.0 && (g - 41.7).abs() <= 5.0, format!("{line} (expected 41.7 ± 5 pp)")),
            _ => k.check(r.gain > 0.0, format!("{line} (expected > 0)")),
        }
    }
    k
}

fn c7_equivalence() -> Criterion {
    let mut k = Criterion::new(7, "feasible-set equivalence on 1000 samples per scenario");
    for name in ["threebus", "nygrid", "ieee24"] {
        let inst = load(name);
        let points = match sample_feasible_points(&inst, 1000, 42) {
            Ok(p) => p,
            Err(e) => {
                k.error(format!("{name}: {e}"));
                continue;
            }
        };
        let mut ok = 0;
        let mut worst = 0.0_f64;
        let mut negative = false;
        for c in &points {
            match verify_equivalence(&inst, c) {
                Ok(r) => {
                    worst = worst.max(r.max_error);
                    negative |= r.flows.iter().flatten().any(|&x| x < 0.0);
                    ok += usize::from(r.matches);
                }
                Err(e) => k.error(format!("{name}: {e}")),
            }
        }
        k.check(
            ok == points.len() && worst <= RECONSTRUCTION_TOL && !negative,
            format!("{name}: {ok}/{} matched, worst reconstruction {worst:.2e} MW, nonnegative flows {}", points.len(), !negative),
        );
    }
    k
}

fn c8_milp() -> Criterion {
    let mut k = Criterion::new(8, "MILP binary counts, LP agreement and big-M stability");
    for (name, want) in [("threebus", 48), ("ieee24", 148), ("nygrid", 52)] {
        let inst = load(name);
        let got = binary_count(inst.num_agents(), inst.network().num_branches());
        k.check(got == want, format!("{name}: {got} binaries (expected {want})"));
    }
    for (name, budget, limit) in [("threebus", 10.0, Some(10.0)), ("nygrid", 300.0, None)] {
        let inst = load(name);
        let options = MilpVerifyOptions {
            time_budget: Duration::from_secs_f64(budget),
            ..MilpVerifyOptions::default()
        };
        let t = Instant::now();
        let r = match verify_milp_equivalence_with(&inst, &inst.volls(), &[1.0, 10.0, 100.0], &options) {
            Ok(r) => r,
            Err(e) => {
                k.error(format!("{name}: {e}"));
                continue;
            }
        };
        let secs = t.elapsed().as_secs_f64();
        for s in &r.results {
            k.check(
                s.status == ScaleStatus::Optimal && s.relative_gap.is_some_and(|g| g <= 1e-6),
                format!(
                    "{name} x{}: {:?}, objective {:?} vs LP {:.2}, gap {:?}, {:.2} s",
                    s.scale, s.status, s.objective, r.lp_objective, s.relative_gap, s.elapsed_secs
                ),
            );
        }
        k.check(r.stable, format!("{name}: scales agree to 4 significant figures"));
        if let Some(limit) = limit {
            // the three scales run concurrently; the slowest must finish in time
            let slowest = r.results.iter().map(|s| s.elapsed_secs).fold(0.0, f64::max);
            k.check(slowest < limit, format!("{name}: slowest solve {slowest:.2} s < {limit} s (wall {secs:.2} s)"));
        }
    }
    k
}

fn c9_capacity() -> Criterion {
    let mut k = Criterion::new(9, "3-bus capacity sweep on line 3->1");
    let inst = load("threebus");
    let l = inst.network().branch_index("L31").expect("L31 exists");
    let caps = SweepGrid::new(5.0, 80.0, 0.5).expect("grid").points();
    let pts = match capacity_sweep(&inst, l, &caps, true) {
        Ok(p) => p,
        Err(e) => {
            k.error(e);
            return k;
        }
    };
    let w: Vec<f64> = pts.iter().map(|p| p.w_ccm).collect();
    let tol = 1e-6 * w.iter().fold(1.0_f64, |a, &b| a.max(b.abs()));
    let monotone = w.windows(2).all(|p| p[1] >= p[0] - tol);
    let concave = w.windows(3).all(|p| p[2] - 2.0 * p[1] + p[0] <= tol);
    k.check(monotone, "welfare nondecreasing in capacity");
    k.check(concave, "welfare concave in capacity");
    let w_max = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sat = pts.iter().position(|p| p.w_ccm >= w_max - tol).expect("maximum attained");
    let cap_sat = pts[sat].capacity;
    // the kink lies between the last unsaturated grid point and `cap_sat`
    let kink = if sat > 0 {
        let (a, b) = (&pts[sat - 1], &pts[sat]);
        let slope = (b.w_ccm - a.w_ccm) / (b.capacity - a.capacity);
        if slope > 0.0 { a.capacity + (w_max - a.w_ccm) / slope } else { a.capacity }
    } else {
        cap_sat
    };
    k.check(
        (40.0..=55.0).contains(&kink),
        format!("saturates at {kink:.2} MW (grid point {cap_sat:.1})"),
    );
    k.check(within(w_max, 13.30e6, 5e-3), format!("saturated welfare {w_max:.2}"));
    let mu_beyond = pts[sat + 1..].iter().map(|p| p.mu.abs()).fold(0.0, f64::max);
    k.check(mu_beyond <= 1e-6, format!("mu beyond saturation max {mu_beyond:.2e}"));
    let bad: Vec<f64> = pts
        .iter()
        .filter(|p| p.capacity < 22.0 && p.prorata_feasible)
        .map(|p| p.capacity)
        .collect();
    k.check(bad.is_empty(), format!("pro-rata infeasible for every capacity below 22 MW (exceptions {bad:?})"));
    k
}

fn c10_ieee24() -> Criterion {
    let mut k = Criterion::new(10, "IEEE 24-bus properties");
    let inst = load("ieee24");
    let v = inst.volls();
    let got = binary_count(inst.num_agents(), inst.network().num_branches());
    k.check(got == 148, format!("{got} binaries"));
    match (clear(&inst, &v), planner(&inst, &v, true), vcg_settle(&inst, &v, &v)) {
        (Ok(out), Ok(plan), Ok(vcg)) => {
            let eta = out.true_welfare / plan.welfare;
            k.check((eta - 1.0).abs() <= 1e-6, format!("eta = {eta:.12}"));
            for (i, a) in inst.agents().iter().enumerate() {
                let admin = a.voll * (a.load - a.obligation);
                k.check(vcg.surpluses[i] >= admin - 1e-6, format!("{}: S = {:.2} ≥ admin {admin:.2}", a.name, vcg.surpluses[i]));
            }
            for (i, a) in inst.agents().iter().enumerate().filter(|(_, a)| a.name.starts_with("DC")) {
                k.check(out.curtailment[i].abs() <= 1e-6, format!("{} curtails {:.6} MW", a.name, out.curtailment[i]));
            }
        }
        (Err(e), _, _) | (_, Err(e), _) | (_, _, Err(e)) => k.error(e),
    }
    k
}

fn c11_oracles() -> Criterion {
    let mut k = Criterion::new(11, "LP and planner oracles");
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut agree = 0;
    for case in 0..200 {
        let p = random_micro_lp(&mut rng);
        let o = vertex_oracle(&p);
        match solve_lp(&p) {
            Ok(s) if s.status == o.status && (s.status != LpStatus::Optimal || close(s.objective, o.objective, 1e-6)) => agree += 1,
            Ok(s) => k.check(false, format!("case {case}: simplex {:?} {} vs oracle {:?} {}", s.status, s.objective, o.status, o.objective)),
            Err(e) => k.error(format!("case {case}: {e}")),
        }
    }
    k.check(agree == 200, format!("{agree}/200 micro-LPs match vertex enumeration"));
    let step = 0.5;
    let mut matched = 0;
    let trials = 60;
    for _ in 0..trials {
        let inst = random_small_instance(&mut rng);
        let v = inst.volls();
        let Some(best) = grid_planner(&inst, step) else { continue };
        match planner(&inst, &v, true) {
            Ok(p) => {
                let spread = v.iter().copied().fold(0.0, f64::max) - v.iter().copied().fold(f64::INFINITY, f64::min);
                let allowance = step * spread;
                if p.welfare >= best - 1e-6 && p.welfare - best <= allowance + 1e-6 {
                    matched += 1;
                } else {
                    k.check(false, format!("planner {:.2} vs grid {best:.2} (allowance {allowance:.2})", p.welfare));
                }
            }
            Err(e) => k.error(e),
        }
    }
    k.check(matched == trials, format!("{matched}/{trials} small instances within one grid step of the 0.5 MW brute force"));
    k
}

fn main() {
    let criteria: Vec<fn() -> Criterion> = vec![
        c1_threebus_welfare,
        c2_threebus_allocation,
        c3_threebus_vcg,
        c4_nygrid,
        c5_efficiency,
        c6_incentives,
        c7_equivalence,
        c8_milp,
        c9_capacity,
        c10_ieee24,
        c11_oracles,
    ];
    let mut failed = 0;
    for f in criteria {
        let t = Instant::now();
        let c = f();
        println!(
            "{} criterion {:>2}: {} ({:.2} s)",
            if c.failed { "FAIL" } else { "PASS" },
            c.id,
            c.title,
            t.elapsed().as_secs_f64()
        );
        for l in &c.lines {
            println!("       {l}");
        }
        failed += usize::from(c.failed);
    }
    println!("acceptance: {} passed, {failed} failed", 11 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

//! Independent oracles shared by the integration targets.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use ccm_core::benchmarks::welfare;
use ccm_core::lp::{LpProblem, LpStatus, Relation};
use ccm_core::market::{validate_instance, Agent, MarketInstance};
use ccm_core::network::{Branch, Bus, LineData, Network};

const VERTEX_TOL: f64 = 1e-9;

/// A half-space `a·x ≤ b` or hyperplane `a·x = b`.
#[derive(Clone)]
struct Face {
    a: Vec<f64>,
    b: f64,
    equality: bool,
}

fn faces(p: &LpProblem) -> Vec<Face> {
    let n = p.num_vars();
    let mut out: Vec<Face> = p
        .constraints()
        .iter()
        .map(|c| Face {
            a: c.coefficients.clone(),
            b: c.rhs,
            equality: c.relation == Relation::Equal,
        })
        .collect();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = -1.0;
        out.push(Face {
            a: e.clone(),
            b: -p.lower()[j],
            equality: false,
        });
        if p.upper()[j].is_finite() {
            e[j] = 1.0;
            out.push(Face {
                a: e,
                b: p.upper()[j],
                equality: false,
            });
        }
    }
    out
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Maximizes `c·x` over the vertices of `{faces}`; `None` when no vertex
/// exists. Every equality face is forced tight.
fn best_vertex(c: &[f64], fs: &[Face], n: usize) -> Option<(f64, Vec<f64>)> {
    let eq: Vec<usize> = (0..fs.len()).filter(|&i| fs[i].equality).collect();
    let ineq: Vec<usize> = (0..fs.len()).filter(|&i| !fs[i].equality).collect();
    if eq.len() > n {
        return None;
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    for pick in combinations(ineq.len(), n - eq.len()) {
        let rows: Vec<usize> = eq.iter().copied().chain(pick.iter().map(|&k| ineq[k])).collect();
        let a = DMatrix::from_fn(n, n, |r, j| fs[rows[r]].a[j]);
        let b = DVector::from_fn(n, |r, _| fs[rows[r]].b);
        let Some(x) = a.lu().solve(&b) else { continue };
        let x: Vec<f64> = x.iter().copied().collect();
        if x.iter().any(|v| !v.is_finite()) {
            continue;
        }
        let ok = fs.iter().all(|f| {
            let act: f64 = f.a.iter().zip(&x).map(|(p, q)| p * q).sum();
            let tol = VERTEX_TOL * (1.0 + f.b.abs());
            if f.equality {
                (act - f.b).abs() <= tol
            } else {
                act <= f.b + tol
            }
        });
        if ok {
            let v: f64 = c.iter().zip(&x).map(|(p, q)| p * q).sum();
            if best.as_ref().is_none_or(|(b, _)| v > *b) {
                best = Some((v, x));
            }
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub status: LpStatus,
    pub objective: f64,
}

/// Vertex enumeration with a recession-cone test for unboundedness.
/// Requires finite lower bounds, so a non-empty feasible set has a vertex.
pub fn vertex_oracle(p: &LpProblem) -> OracleResult {
    let n = p.num_vars();
    let infeasible = OracleResult {
        status: LpStatus::Infeasible,
        objective: f64::NAN,
    };
    // zero rows carry no geometry: drop them if satisfied
    let mut fs = faces(p);
    for f in fs.iter().filter(|f| f.a.iter().all(|&v| v == 0.0)) {
        if (f.equality && f.b != 0.0) || f.b < 0.0 {
            return infeasible;
        }
    }
    fs.retain(|f| f.a.iter().any(|&v| v != 0.0));
    let Some((best, _)) = best_vertex(p.objective(), &fs, n) else {
        return infeasible;
    };
    // directions d with A d ≤ 0 (= 0 on equalities), d ≥ 0, d_j = 0 where
    // u_j is finite, normalized by Σd = 1
    let mut cone: Vec<Face> = fs
        .iter()
        .map(|f| Face {
            a: f.a.clone(),
            b: 0.0,
            equality: f.equality,
        })
        .collect();
    cone.push(Face {
        a: vec![1.0; n],
        b: 1.0,
        equality: true,
    });
    let ray = best_vertex(p.objective(), &cone, n).map(|(v, _)| v);
    if ray.is_some_and(|v| v > VERTEX_TOL) {
        OracleResult {
            status: LpStatus::Unbounded,
            objective: f64::INFINITY,
        }
    } else {
        OracleResult {
            status: LpStatus::Optimal,
            objective: best,
        }
    }
}

/// Small random LP with integer data: 1–3 variables, 1–4 rows, some
/// equalities, bounds 0 ≤ x ≤ u with u possibly infinite.
pub fn random_micro_lp<R: Rng>(rng: &mut R) -> LpProblem {
    let n = rng.gen_range(1..=3);
    let m = rng.gen_range(1..=4);
    let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-5..=5) as f64).collect();
    let mut p = LpProblem::maximize(c);
    for _ in 0..m {
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-4..=4) as f64).collect();
        let b = rng.gen_range(-3..=10) as f64;
        if rng.gen_bool(0.15) {
            p.equal(a, b);
        } else {
            p.less_eq(a, b);
        }
    }
    for j in 0..n {
        let lo = if rng.gen_bool(0.2) { rng.gen_range(-2..=1) as f64 } else { 0.0 };
        let hi = if rng.gen_bool(0.4) {
            f64::INFINITY
        } else {
            lo + rng.gen_range(0..=6) as f64
        };
        p.set_bounds(j, lo, hi);
    }
    p
}

/// Relative comparison used by the oracle suites.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

pub fn rel_err(value: f64, expected: f64) -> f64 {
    (value - expected).abs() / expected.abs()
}

/// Triangle network of equal reactances with random limits and 2–3 agents
/// on distinct buses. Loads, target and limits are multiples of 0.5 MW.
pub fn random_small_instance<R: Rng>(rng: &mut R) -> MarketInstance {
    loop {
        let buses = (1..=3)
            .map(|id| Bus {
                id,
                name: format!("B{id}"),
                reference: id == 3,
            })
            .collect();
        let lines = [(1, 2), (2, 3), (3, 1)];
        let branches = lines
            .iter()
            .map(|&(f, t)| {
                let cap = 0.5 * rng.gen_range(4..=60) as f64;
                Branch {
                    id: format!("L{f}{t}"),
                    label: String::new(),
                    f_plus: cap,
                    f_minus: cap,
                    line: Some(LineData {
                        from: f,
                        to: t,
                        reactance: 0.1,
                    }),
                    ptdf_row: None,
                }
            })
            .collect();
        let net = Network::new(buses, branches).expect("triangle network");
        let n = rng.gen_range(2..=3);
        let mut agents: Vec<Agent> = (0..n)
            .map(|i| Agent {
                name: format!("A{i}"),
                bus: (i + 1) as u32,
                load: 0.5 * rng.gen_range(4..=60) as f64,
                obligation: 0.0,
                voll: 100.0 * rng.gen_range(1..=50) as f64,
            })
            .collect();
        let total: f64 = agents.iter().map(|a| a.load).sum();
        let steps = (total / 0.5) as i64;
        let d = 0.5 * rng.gen_range(1..steps) as f64;
        // obligations: fill agents in order up to D
        let mut left = d;
        for a in &mut agents {
            a.obligation = a.load.min(left);
            left -= a.obligation;
        }
        if let Ok(inst) = validate_instance(net, agents, d) {
            return inst;
        }
    }
}

/// Best welfare over allocations on a `step`-MW grid that pass the audit.
pub fn grid_planner(inst: &MarketInstance, step: f64) -> Option<f64> {
    let n = inst.num_agents();
    let loads = inst.loads();
    let v = inst.volls();
    let d = inst.target();
    let mut best: Option<f64> = None;
    let mut c = vec![0.0; n];
    fn rec(k: usize, n: usize, step: f64, loads: &[f64], d: f64, c: &mut Vec<f64>, f: &mut dyn FnMut(&[f64])) {
        if k == n - 1 {
            let used: f64 = c[..k].iter().sum();
            let last = d - used;
            if last >= -1e-9 && last <= loads[k] + 1e-9 {
                c[k] = last.max(0.0);
                f(c);
            }
            return;
        }
        let mut x = 0.0;
        while x <= loads[k] + 1e-9 {
            c[k] = x;
            rec(k + 1, n, step, loads, d, c, f);
            x += step;
        }
    }
    rec(0, n, step, &loads, d, &mut c, &mut |cc: &[f64]| {
        if inst.audit(cc).is_ok_and(|a| a.feasible) {
            let w = welfare(inst, cc, &v).expect("grid point within bounds");
            if best.is_none_or(|b| w > b) {
                best = Some(w);
            }
        }
    });
    best
}

//! Bounded-variable revised simplex with an explicit basis inverse.
// dense kernels index several parallel arrays per loop
#![allow(clippy::needless_range_loop)]

use super::{dot, reduced_costs, LpError, LpProblem, LpSolution, LpStatus, Relation};
use super::{PIVOT_TOL, TOL_CS, TOL_FEAS, TOL_GAP};

const REFACTOR_EVERY: usize = 64;
const DEGENERATE_RUN_FOR_BLAND: usize = 30;
const DEGENERATE_STEP: f64 = 1e-12;
/// Bound relaxation in the Harris ratio test, kept well inside `TOL_FEAS`.
const HARRIS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VarState {
    Basic,
    Lower,
    Upper,
}

enum PhaseEnd {
    Optimal,
    Unbounded,
}

struct Simplex {
    m: usize,
    first_artificial: usize,
    cols: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    upper: Vec<f64>,
    basis: Vec<usize>,
    state: Vec<VarState>,
    binv: Vec<f64>,
    xb: Vec<f64>,
    pivots_since_refactor: usize,
    iterations: usize,
    max_iterations: usize,
}

/// Solves `problem` to optimality, or reports infeasibility/unboundedness.
///
/// Returns [`LpError::NumericalFailure`] when the iteration limit is hit,
/// the basis becomes singular, or the final primal/dual pair fails the
/// feasibility, complementarity or duality-gap check.
pub fn solve_lp(problem: &LpProblem) -> Result<LpSolution, LpError> {
    problem.validate()?;
    let n = problem.num_vars();
    let m = problem.num_constraints();

    // shift x = l + x', scale each row by its largest coefficient, flip to rhs >= 0
    let mut row_scale = vec![1.0; m];
    let mut row_sign = vec![1.0; m];
    let mut rhs = vec![0.0; m];
    for (i, row) in problem.constraints().iter().enumerate() {
        let big = row.coefficients.iter().fold(0.0_f64, |a, &c| a.max(c.abs()));
        let s = if big > 0.0 { big } else { 1.0 };
        let r = (row.rhs - dot(&row.coefficients, problem.lower())) / s;
        row_scale[i] = s;
        row_sign[i] = if r < 0.0 { -1.0 } else { 1.0 };
        rhs[i] = r.abs();
    }

    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n + 2 * m);
    let mut upper: Vec<f64> = Vec::with_capacity(n + 2 * m);
    for j in 0..n {
        let col = problem
            .constraints()
            .iter()
            .enumerate()
            .map(|(i, row)| row_sign[i] * row.coefficients[j] / row_scale[i])
            .collect();
        cols.push(col);
        upper.push(problem.upper()[j] - problem.lower()[j]);
    }

    // slack per inequality row; basic at start when its coefficient is +1
    let mut basis = vec![usize::MAX; m];
    for (i, row) in problem.constraints().iter().enumerate() {
        if row.relation == Relation::LessEq {
            let mut col = vec![0.0; m];
            col[i] = row_sign[i];
            if row_sign[i] > 0.0 {
                basis[i] = cols.len();
            }
            cols.push(col);
            upper.push(f64::INFINITY);
        }
    }
    let first_artificial = cols.len();
    for (i, slot) in basis.iter_mut().enumerate() {
        if *slot == usize::MAX {
            let mut col = vec![0.0; m];
            col[i] = 1.0;
            *slot = cols.len();
            cols.push(col);
            upper.push(f64::INFINITY);
        }
    }

    let total = cols.len();
    let mut state = vec![VarState::Lower; total];
    for &k in &basis {
        state[k] = VarState::Basic;
    }
    let mut sx = Simplex {
        m,
        first_artificial,
        cols,
        rhs,
        upper,
        basis,
        state,
        binv: Vec::new(),
        xb: Vec::new(),
        pivots_since_refactor: 0,
        iterations: 0,
        max_iterations: 20_000 + 50 * (m + total),
    };
    sx.refactor()?;

    if total > first_artificial {
        let mut phase1 = vec![0.0; total];
        for c in phase1.iter_mut().skip(first_artificial) {
            *c = -1.0;
        }
        sx.run(&phase1)?;
        let infeasibility: f64 = (0..m)
            .filter(|&i| sx.basis[i] >= first_artificial)
            .map(|i| sx.xb[i].max(0.0))
            .sum();
        let rhs_scale = sx.rhs.iter().fold(1.0_f64, |a, &b| a.max(b));
        if infeasibility > TOL_FEAS * rhs_scale {
            return Ok(LpSolution::without_point(LpStatus::Infeasible, sx.iterations));
        }
        sx.drive_out_artificials()?;
        for k in first_artificial..total {
            sx.upper[k] = 0.0;
        }
    }

    let mut cost = vec![0.0; total];
    cost[..n].copy_from_slice(problem.objective());
    if let PhaseEnd::Unbounded = sx.run(&cost)? {
        return Ok(LpSolution::without_point(LpStatus::Unbounded, sx.iterations));
    }
    // clear accumulated drift and make sure the fresh basis is still optimal
    sx.refactor()?;
    if let PhaseEnd::Unbounded = sx.run(&cost)? {
        return Ok(LpSolution::without_point(LpStatus::Unbounded, sx.iterations));
    }

    let mut primal = vec![0.0; n];
    for (j, xj) in primal.iter_mut().enumerate() {
        let shifted = match sx.state[j] {
            VarState::Lower => 0.0,
            VarState::Upper => sx.upper[j],
            VarState::Basic => 0.0,
        };
        *xj = problem.lower()[j] + shifted;
    }
    for (i, &k) in sx.basis.iter().enumerate() {
        if k < n {
            primal[k] = problem.lower()[k] + sx.xb[i];
        }
    }
    for (j, xj) in primal.iter_mut().enumerate() {
        *xj = xj.clamp(problem.lower()[j], problem.upper()[j]);
    }

    let y_scaled = sx.prices(&cost);
    let duals: Vec<f64> = (0..m)
        .map(|i| y_scaled[i] * row_sign[i] / row_scale[i])
        .collect();
    let reduced = reduced_costs(problem, &duals);
    let solution = LpSolution {
        status: LpStatus::Optimal,
        objective: problem.objective_value(&primal),
        primal,
        duals,
        reduced_costs: reduced,
        iterations: sx.iterations,
    };
    verify(problem, &solution)?;
    Ok(solution)
}

impl Simplex {
    fn total(&self) -> usize {
        self.cols.len()
    }

    fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.m;
        // Gauss-Jordan on [B | I]
        let mut a = vec![0.0; m * m];
        for (c, &k) in self.basis.iter().enumerate() {
            for r in 0..m {
                a[r * m + c] = self.cols[k][r];
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for c in 0..m {
            let (p, best) = (c..m)
                .map(|r| (r, a[r * m + c].abs()))
                .fold((c, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if best < 1e-12 {
                return Err(LpError::NumericalFailure("singular basis during refactorization".into()));
            }
            if p != c {
                for j in 0..m {
                    a.swap(p * m + j, c * m + j);
                    inv.swap(p * m + j, c * m + j);
                }
            }
            let piv = a[c * m + c];
            for j in 0..m {
                a[c * m + j] /= piv;
                inv[c * m + j] /= piv;
            }
            for r in 0..m {
                if r != c {
                    let f = a[r * m + c];
                    if f != 0.0 {
                        for j in 0..m {
                            a[r * m + j] -= f * a[c * m + j];
                            inv[r * m + j] -= f * inv[c * m + j];
                        }
                    }
                }
            }
        }
        self.binv = inv;
        self.pivots_since_refactor = 0;
        self.recompute_xb();
        Ok(())
    }

    fn recompute_xb(&mut self) {
        let m = self.m;
        let mut eff = self.rhs.clone();
        for k in 0..self.total() {
            if self.state[k] == VarState::Upper {
                let u = self.upper[k];
                for (e, a) in eff.iter_mut().zip(&self.cols[k]) {
                    *e -= a * u;
                }
            }
        }
        let mut xb: Vec<f64> = (0..m)
            .map(|i| dot(&self.binv[i * m..(i + 1) * m], &eff))
            .collect();
        // one step of iterative refinement against B xb = eff
        let mut resid = eff;
        for (&k, &v) in self.basis.iter().zip(&xb) {
            for (r, a) in resid.iter_mut().zip(&self.cols[k]) {
                *r -= a * v;
            }
        }
        for (i, x) in xb.iter_mut().enumerate() {
            *x += dot(&self.binv[i * m..(i + 1) * m], &resid);
        }
        self.xb = xb;
    }

    fn ftran(&self, k: usize) -> Vec<f64> {
        let m = self.m;
        let col = &self.cols[k];
        (0..m).map(|i| dot(&self.binv[i * m..(i + 1) * m], col)).collect()
    }

    /// Simplex multipliers `c_B B⁻¹`.
    fn prices(&self, cost: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (i, &k) in self.basis.iter().enumerate() {
            let cb = cost[k];
            if cb != 0.0 {
                let row = &self.binv[i * m..(i + 1) * m];
                for (yk, b) in y.iter_mut().zip(row) {
                    *yk += cb * b;
                }
            }
        }
        y
    }

    fn pivot(&mut self, r: usize, alpha: &[f64]) {
        let m = self.m;
        let piv = alpha[r];
        for j in 0..m {
            self.binv[r * m + j] /= piv;
        }
        for i in 0..m {
            if i != r && alpha[i] != 0.0 {
                let f = alpha[i];
                for j in 0..m {
                    self.binv[i * m + j] -= f * self.binv[r * m + j];
                }
            }
        }
        self.pivots_since_refactor += 1;
    }

    fn run(&mut self, cost: &[f64]) -> Result<PhaseEnd, LpError> {
        let cost_scale = cost.iter().fold(1.0_f64, |a, &c| a.max(c.abs()));
        let tol_d = 1e-9 * cost_scale;
        let mut degenerate_run = 0usize;
        loop {
            if self.iterations >= self.max_iterations {
                return Err(LpError::NumericalFailure(format!(
                    "iteration limit {} reached",
                    self.max_iterations
                )));
            }
            if self.pivots_since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
            }
            let bland = degenerate_run >= DEGENERATE_RUN_FOR_BLAND;
            let y = self.prices(cost);

            let mut entering: Option<(usize, f64)> = None;
            for k in 0..self.total() {
                let st = self.state[k];
                if st == VarState::Basic || self.upper[k] <= 0.0 {
                    continue;
                }
                let d = cost[k] - dot(&y, &self.cols[k]);
                let score = match st {
                    VarState::Lower if d > tol_d => d,
                    VarState::Upper if d < -tol_d => -d,
                    _ => continue,
                };
                if bland {
                    entering = Some((k, score));
                    break;
                }
                if entering.is_none_or(|(_, s)| score > s) {
                    entering = Some((k, score));
                }
            }
            let Some((q, _)) = entering else {
                return Ok(PhaseEnd::Optimal);
            };
            self.iterations += 1;

            let sigma = if self.state[q] == VarState::Lower { 1.0 } else { -1.0 };
            let alpha = self.ftran(q);

            // exact and relaxed ratios per candidate row
            let mut rows: Vec<(usize, f64, f64, bool)> = Vec::new();
            for i in 0..self.m {
                let t = sigma * alpha[i];
                let ub = self.upper[self.basis[i]];
                if t > PIVOT_TOL {
                    let x = self.xb[i];
                    rows.push((i, (x / t).max(0.0), (x + HARRIS_TOL) / t, false));
                } else if t < -PIVOT_TOL && ub.is_finite() {
                    let room = ub - self.xb[i];
                    rows.push((i, (room / -t).max(0.0), (room + HARRIS_TOL) / -t, true));
                }
            }
            let chosen = if rows.is_empty() {
                None
            } else if bland {
                let min = rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
                let cut = min + DEGENERATE_STEP * (1.0 + min);
                rows.iter()
                    .filter(|r| r.1 <= cut)
                    .min_by_key(|r| self.basis[r.0])
                    .copied()
            } else {
                // rows already slightly outside their bounds would make this negative
                let relaxed = rows.iter().map(|r| r.2).fold(f64::INFINITY, f64::min).max(0.0);
                rows.iter()
                    .filter(|r| r.1 <= relaxed)
                    .max_by(|a, b| alpha[a.0].abs().total_cmp(&alpha[b.0].abs()))
                    .copied()
            };

            let flip = self.upper[q];
            let theta = match chosen {
                Some(row) if row.1 < flip => row.1,
                _ if flip.is_finite() => flip,
                _ => return Ok(PhaseEnd::Unbounded),
            };

            for i in 0..self.m {
                self.xb[i] -= sigma * theta * alpha[i];
            }
            degenerate_run = if theta <= DEGENERATE_STEP { degenerate_run + 1 } else { 0 };

            match chosen {
                Some((r, ratio, _, to_upper)) if ratio < flip => {
                    let leaving = self.basis[r];
                    self.state[leaving] = if to_upper { VarState::Upper } else { VarState::Lower };
                    let entering_value = if sigma > 0.0 { theta } else { self.upper[q] - theta };
                    self.pivot(r, &alpha);
                    self.basis[r] = q;
                    self.state[q] = VarState::Basic;
                    self.xb[r] = entering_value;
                }
                _ => {
                    self.state[q] = if sigma > 0.0 { VarState::Upper } else { VarState::Lower };
                }
            }
        }
    }

    /// Swaps zero-valued artificials out of the basis where a structural or
    /// slack column can replace them; rows left with an artificial are
    /// linearly dependent on the others.
    fn drive_out_artificials(&mut self) -> Result<(), LpError> {
        let m = self.m;
        let mut changed = false;
        for r in 0..m {
            if self.basis[r] < self.first_artificial {
                continue;
            }
            let row = self.binv[r * m..(r + 1) * m].to_vec();
            let mut best: Option<(usize, f64)> = None;
            for k in 0..self.first_artificial {
                if self.state[k] == VarState::Basic {
                    continue;
                }
                let v = dot(&row, &self.cols[k]).abs();
                if v > 1e-7 && best.is_none_or(|(_, b)| v > b) {
                    best = Some((k, v));
                }
            }
            if let Some((k, _)) = best {
                let alpha = self.ftran(k);
                let leaving = self.basis[r];
                self.state[leaving] = VarState::Lower;
                self.pivot(r, &alpha);
                self.basis[r] = k;
                self.state[k] = VarState::Basic;
                changed = true;
            }
        }
        if changed {
            self.refactor()?;
        }
        Ok(())
    }
}

fn verify(problem: &LpProblem, sol: &LpSolution) -> Result<(), LpError> {
    let x = &sol.primal;
    for (i, row) in problem.constraints().iter().enumerate() {
        let act = row.activity(x);
        let mag: f64 = row
            .coefficients
            .iter()
            .zip(x)
            .map(|(a, v)| (a * v).abs())
            .sum::<f64>()
            + row.rhs.abs();
        // judged on the row scaled by its largest coefficient, as solved
        let big = row.coefficients.iter().fold(0.0_f64, |a, &c| a.max(c.abs()));
        let s = if big > 0.0 { big } else { 1.0 };
        let tol = TOL_FEAS * (1.0 + mag / s);
        let viol = match row.relation {
            Relation::LessEq => act - row.rhs,
            Relation::Equal => (act - row.rhs).abs(),
        } / s;
        if viol > tol {
            return Err(LpError::NumericalFailure(format!(
                "row {i} violated by {viol:e} at the final basis"
            )));
        }
    }

    let c_scale = problem.objective().iter().fold(1.0_f64, |a, &c| a.max(c.abs()));
    let y_scale = sol.duals.iter().fold(c_scale, |a, &y| a.max(y.abs()));
    let tol_dual = TOL_CS * y_scale;
    for (i, row) in problem.constraints().iter().enumerate() {
        if row.relation == Relation::LessEq && sol.duals[i] < -tol_dual {
            return Err(LpError::NumericalFailure(format!(
                "negative multiplier {} on inequality row {i}",
                sol.duals[i]
            )));
        }
    }
    for (j, &d) in sol.reduced_costs.iter().enumerate() {
        let (l, u) = (problem.lower()[j], problem.upper()[j]);
        let span = 1.0 + l.abs() + if u.is_finite() { u.abs() } else { 0.0 };
        let above_lower = x[j] - l > TOL_FEAS * span;
        let below_upper = u - x[j] > TOL_FEAS * span;
        if (above_lower && d < -tol_dual) || (below_upper && d > tol_dual) {
            return Err(LpError::NumericalFailure(format!(
                "reduced cost {d:e} of variable {j} is not complementary"
            )));
        }
    }

    // gap measured against the magnitude of the terms that make up each side
    let primal = sol.objective;
    let dual = problem.dual_objective(&sol.duals, &sol.reduced_costs);
    let mut mag = 1.0 + primal.abs();
    for (row, y) in problem.constraints().iter().zip(&sol.duals) {
        mag += (row.rhs * y).abs();
    }
    for (j, &d) in sol.reduced_costs.iter().enumerate() {
        let bound = if d > 0.0 { problem.upper()[j] } else { problem.lower()[j] };
        if bound.is_finite() {
            mag += (d * bound).abs();
        }
    }
    if !dual.is_finite() || (primal - dual).abs() > TOL_GAP * mag {
        return Err(LpError::NumericalFailure(format!(
            "duality gap {:e} exceeds tolerance",
            (primal - dual).abs()
        )));
    }
    Ok(())
}

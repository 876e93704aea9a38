//! Deterministic selection among alternative optima.

use super::{solve_lp, LpError, LpProblem, LpSolution, LpStatus, TOL_FEAS};

/// Relative slacks tried in turn when a fixing stage turns out numerically
/// infeasible.
const SLACKS: [f64; 4] = [0.0, 1e-9, 1e-7, 1e-6];

/// Among points attaining `optimal_value`, returns the one that first
/// minimizes `Σ x` and then minimizes each variable in `order`.
///
/// Multipliers in the result come from a solve of the unrestricted
/// problem; see [`lex_refine_from`] to reuse an existing solution.
pub fn lex_refine(problem: &LpProblem, optimal_value: f64, order: &[usize]) -> Result<LpSolution, LpError> {
    let primal = lex_primal(problem, optimal_value, order)?;
    let base = solve_lp(problem)?;
    Ok(assemble(problem, primal, &base))
}

/// Same as [`lex_refine`] with the optimum and multipliers taken from
/// `solution`, which must be optimal for `problem`.
pub fn lex_refine_from(problem: &LpProblem, solution: &LpSolution, order: &[usize]) -> Result<LpSolution, LpError> {
    if !solution.is_optimal() {
        return Err(LpError::InvalidProblem("lexicographic refinement needs an optimal solution".into()));
    }
    let primal = lex_primal(problem, solution.objective, order)?;
    Ok(assemble(problem, primal, solution))
}

fn assemble(problem: &LpProblem, primal: Vec<f64>, base: &LpSolution) -> LpSolution {
    LpSolution {
        status: LpStatus::Optimal,
        objective: problem.objective_value(&primal),
        primal,
        duals: base.duals.clone(),
        reduced_costs: base.reduced_costs.clone(),
        iterations: base.iterations,
    }
}

fn lex_primal(problem: &LpProblem, optimal_value: f64, order: &[usize]) -> Result<Vec<f64>, LpError> {
    problem.validate()?;
    let n = problem.num_vars();
    if let Some(&bad) = order.iter().find(|&&j| j >= n) {
        return Err(LpError::InvalidProblem(format!("variable {bad} in refinement order is out of range")));
    }
    let mut last_best = f64::NEG_INFINITY;
    for slack in SLACKS {
        match lex_attempt(problem, optimal_value, order, slack)? {
            Some(x) => return Ok(x),
            None => {
                if last_best == f64::NEG_INFINITY {
                    let free = solve_lp(problem)?;
                    last_best = match free.status {
                        LpStatus::Optimal => free.objective,
                        LpStatus::Unbounded => f64::INFINITY,
                        LpStatus::Infeasible => f64::NAN,
                    };
                    // clearly out of reach: no point loosening further
                    if last_best.is_nan() || last_best < optimal_value - 1e-6 * (1.0 + optimal_value.abs()) {
                        break;
                    }
                }
            }
        }
    }
    Err(LpError::InconsistentValue {
        target: optimal_value,
        best: last_best,
    })
}

fn lex_attempt(problem: &LpProblem, optimal_value: f64, order: &[usize], slack: f64) -> Result<Option<Vec<f64>>, LpError> {
    let n = problem.num_vars();
    let mut lp = problem.clone();
    let neg_c: Vec<f64> = problem.objective().iter().map(|c| -c).collect();
    lp.less_eq(neg_c, -(optimal_value - slack * (1.0 + optimal_value.abs())));

    lp.set_objective(vec![-1.0; n]);
    let stage = solve_lp(&lp)?;
    if stage.status != LpStatus::Optimal {
        return Ok(None);
    }
    let total = -stage.objective;
    lp.less_eq(vec![1.0; n], total + slack * (1.0 + total.abs()));
    let mut x = stage.primal;

    for &j in order {
        let lo = lp.lower()[j];
        if x[j] - lo <= TOL_FEAS * (1.0 + lo.abs()) {
            lp.set_upper(j, lo);
            x[j] = lo;
            continue;
        }
        let mut obj = vec![0.0; n];
        obj[j] = -1.0;
        lp.set_objective(obj);
        let stage = solve_lp(&lp)?;
        if stage.status != LpStatus::Optimal {
            return Ok(None);
        }
        let v = stage.primal[j];
        let pad = if slack > SLACKS[1] { slack * (1.0 + v.abs()) } else { 0.0 };
        lp.set_upper(j, (v + pad).max(lo));
        x = stage.primal;
    }
    Ok(Some(x))
}

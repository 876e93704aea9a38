//! Dense linear programming with dual extraction.
//!
//! Problems are always stated in maximization form:
//!
//! ```text
//! max  cᵀx
//! s.t. aᵢᵀx ≤ bᵢ   or   aᵢᵀx = bᵢ
//!      l ≤ x ≤ u
//! ```
//!
//! Lower bounds must be finite (default 0), upper bounds default to +∞.
//! Duals follow the maximization convention: multipliers on `≤` rows are
//! non-negative, multipliers on `=` rows are free, and the reduced cost of
//! variable `j` is `cⱼ − Σᵢ yᵢ aᵢⱼ`.

mod lex;
mod simplex;

pub use lex::{lex_refine, lex_refine_from};
pub use simplex::solve_lp;

use thiserror::Error;

/// Primal/dual feasibility tolerance.
pub const TOL_FEAS: f64 = 1e-7;
/// Relative duality-gap tolerance.
pub const TOL_GAP: f64 = 1e-7;
/// Complementary-slackness tolerance.
pub const TOL_CS: f64 = 1e-6;
/// Smallest magnitude accepted as a pivot element.
pub const PIVOT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    LessEq,
    Equal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coefficients: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn activity(&self, x: &[f64]) -> f64 {
        dot(&self.coefficients, x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    objective: Vec<f64>,
    constraints: Vec<Constraint>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl LpProblem {
    /// New maximization problem with default bounds `0 ≤ x < ∞`.
    pub fn maximize(objective: Vec<f64>) -> Self {
        let n = objective.len();
        Self {
            objective,
            constraints: Vec::new(),
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn set_objective(&mut self, objective: Vec<f64>) {
        assert_eq!(objective.len(), self.num_vars(), "objective length changed");
        self.objective = objective;
    }

    /// Appends a constraint and returns its row index.
    pub fn add_constraint(&mut self, coefficients: Vec<f64>, relation: Relation, rhs: f64) -> usize {
        self.constraints.push(Constraint {
            coefficients,
            relation,
            rhs,
        });
        self.constraints.len() - 1
    }

    pub fn less_eq(&mut self, coefficients: Vec<f64>, rhs: f64) -> usize {
        self.add_constraint(coefficients, Relation::LessEq, rhs)
    }

    pub fn equal(&mut self, coefficients: Vec<f64>, rhs: f64) -> usize {
        self.add_constraint(coefficients, Relation::Equal, rhs)
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        self.lower[var] = lower;
        self.upper[var] = upper;
    }

    pub fn set_upper(&mut self, var: usize, upper: f64) {
        self.upper[var] = upper;
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if let Some(j) = self.objective.iter().position(|c| !c.is_finite()) {
            return Err(LpError::InvalidProblem(format!("objective coefficient {j} is not finite")));
        }
        for (i, row) in self.constraints.iter().enumerate() {
            if row.coefficients.len() != n {
                return Err(LpError::InvalidProblem(format!(
                    "constraint {i} has {} coefficients, expected {n}",
                    row.coefficients.len()
                )));
            }
            if !row.rhs.is_finite() || row.coefficients.iter().any(|a| !a.is_finite()) {
                return Err(LpError::InvalidProblem(format!("constraint {i} has non-finite data")));
            }
        }
        for j in 0..n {
            let (l, u) = (self.lower[j], self.upper[j]);
            if !l.is_finite() {
                return Err(LpError::InvalidProblem(format!("variable {j} has a non-finite lower bound")));
            }
            if u.is_nan() || u < l {
                return Err(LpError::InvalidProblem(format!("variable {j} has bounds [{l}, {u}]")));
            }
        }
        Ok(())
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        dot(&self.objective, x)
    }

    /// Largest absolute violation of any row or bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0_f64;
        for row in &self.constraints {
            let r = row.activity(x) - row.rhs;
            let v = match row.relation {
                Relation::LessEq => r.max(0.0),
                Relation::Equal => r.abs(),
            };
            worst = worst.max(v);
        }
        for (j, &xj) in x.iter().enumerate() {
            worst = worst.max(self.lower[j] - xj).max(xj - self.upper[j]);
        }
        worst
    }

    /// Dual objective `bᵀy + Σⱼ (dⱼ⁺ uⱼ + dⱼ⁻ lⱼ)` for a multiplier vector
    /// and its reduced costs. Returns +∞ when a positive reduced cost meets
    /// an infinite upper bound.
    pub fn dual_objective(&self, duals: &[f64], reduced_costs: &[f64]) -> f64 {
        let mut value: f64 = self.constraints.iter().zip(duals).map(|(r, y)| r.rhs * y).sum();
        for (j, &d) in reduced_costs.iter().enumerate() {
            if d > 0.0 {
                if self.upper[j].is_infinite() {
                    if d > TOL_FEAS {
                        return f64::INFINITY;
                    }
                } else {
                    value += d * self.upper[j];
                }
            } else {
                value += d * self.lower[j];
            }
        }
        value
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub primal: Vec<f64>,
    /// One multiplier per constraint, in row order.
    pub duals: Vec<f64>,
    /// One reduced cost per variable.
    pub reduced_costs: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

impl LpSolution {
    pub(crate) fn without_point(status: LpStatus, iterations: usize) -> Self {
        Self {
            status,
            primal: Vec::new(),
            duals: Vec::new(),
            reduced_costs: Vec::new(),
            objective: f64::NAN,
            iterations,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LpError {
    #[error("invalid linear program: {0}")]
    InvalidProblem(String),
    #[error("numerical failure in simplex: {0}")]
    NumericalFailure(String),
    #[error("no feasible point attains objective {target} (best found {best})")]
    InconsistentValue { target: f64, best: f64 },
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Reduced costs `cⱼ − Σᵢ yᵢ aᵢⱼ` for the given multipliers.
pub fn reduced_costs(problem: &LpProblem, duals: &[f64]) -> Vec<f64> {
    let mut d = problem.objective.clone();
    for (row, &y) in problem.constraints.iter().zip(duals) {
        if y != 0.0 {
            for (dj, &a) in d.iter_mut().zip(&row.coefficients) {
                *dj -= y * a;
            }
        }
    }
    d
}

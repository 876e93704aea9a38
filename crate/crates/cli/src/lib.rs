//! `ccm` command-line driver.

pub mod results;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ccm_core::benchmarks::{regime_allocation, regime_report, welfare, Regime};
use ccm_core::equivalence::{verify_equivalence, verify_samples, RECONSTRUCTION_TOL};
use ccm_core::experiments::{bid_sweep, capacity_sweep, congestion_report, SweepGrid};
use ccm_core::kkt::{binary_count, verify_milp_equivalence_with, BigMConfig, MilpObjective, MilpVerifyOptions, ScaleStatus, AGREEMENT_TOL, STABILITY_TOL};
use ccm_core::lp::{TOL_FEAS, TOL_GAP};
use ccm_core::market::{clear, nodal_prices, MarketInstance, BALANCE_TOL, INTERIOR_TOL};
use ccm_core::network::AUDIT_TOL;
use ccm_core::scenario::{bundled_with, load_scenario_with, LoadOptions, BUNDLED};
use ccm_core::settlement::{settle, SettlementRule};
use ccm_core::Error;

use results::{write_csv, write_json, Cell, ResultSet, Table, Unit};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "ccm", version, about = "Curtailment credit market laboratory")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Scenario file, or one of the bundled names: threebus, nygrid, ieee24.
    #[arg(long, global = true, default_value = "threebus")]
    pub scenario: String,
    /// Write results here instead of standard output.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Overrides the derating factor declared by the scenario.
    #[arg(long, global = true)]
    pub derating: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Structured,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "lower")]
pub enum RuleArg {
    Vcg,
    Up,
}

impl From<RuleArg> for SettlementRule {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::Vcg => SettlementRule::Vcg,
            RuleArg::Up => SettlementRule::UniformPrice,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegimeArg {
    Admin,
    Prorata,
    Ccm,
    Planner,
    Copperplate,
}

impl From<RegimeArg> for Regime {
    fn from(r: RegimeArg) -> Self {
        match r {
            RegimeArg::Admin => Regime::Administrative,
            RegimeArg::Prorata => Regime::ProRata,
            RegimeArg::Ccm => Regime::Ccm,
            RegimeArg::Planner => Regime::Planner,
            RegimeArg::Copperplate => Regime::Copperplate,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Clear the market under truthful bids.
    Clear,
    /// Welfare of every allocation regime.
    Benchmarks,
    /// VCG settlement under truthful bids.
    Vcg,
    /// Uniform-price settlement under truthful bids.
    Up,
    /// Payoff of one agent as its bid multiplier moves over a grid.
    SweepBid {
        #[arg(long)]
        agent: String,
        #[arg(long, value_enum, ignore_case = true)]
        rule: RuleArg,
        /// Bid multipliers as LO:HI:STEP.
        #[arg(long, default_value = "0.1:5.0:0.01")]
        grid: String,
    },
    /// Welfare and multipliers as one branch limit varies.
    SweepCapacity {
        #[arg(long)]
        branch: String,
        /// Capacities in MW as LO:HI:STEP.
        #[arg(long, default_value = "10:80:1")]
        grid: String,
        /// Vary only the positive-direction limit.
        #[arg(long)]
        positive_only: bool,
    },
    /// Solve the KKT MILP at several big-M scales and compare with the LP.
    MilpVerify {
        /// Solve at this scale only instead of 1, 10 and 100.
        #[arg(long)]
        big_m_scale: Option<f64>,
        #[arg(long, default_value_t = 300.0)]
        time_budget: f64,
        /// Stop at the first integral KKT point.
        #[arg(long)]
        first_feasible: bool,
    },
    /// Flow audit of one regime's allocation.
    Audit {
        #[arg(long, value_enum, default_value_t = RegimeArg::Ccm)]
        regime: RegimeArg,
    },
    /// Decompose an allocation into bilateral credit flows.
    Decompose {
        #[arg(long, value_enum, default_value_t = RegimeArg::Planner)]
        regime: RegimeArg,
        /// Also verify this many sampled feasible points.
        #[arg(long, default_value_t = 0)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Clear => "clear",
            Command::Benchmarks => "benchmarks",
            Command::Vcg => "vcg",
            Command::Up => "up",
            Command::SweepBid { .. } => "sweep-bid",
            Command::SweepCapacity { .. } => "sweep-capacity",
            Command::MilpVerify { .. } => "milp-verify",
            Command::Audit { .. } => "audit",
            Command::Decompose { .. } => "decompose",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("cannot write {path}: {source}")]
    Output { path: String, source: io::Error },
    /// Results were produced but a solve ran out of time.
    #[error("time budget exhausted: {0}")]
    Budget(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) => core_exit_code(e),
            CliError::Output { .. } => EXIT_INPUT,
            CliError::Budget(_) => EXIT_BUDGET,
        }
    }
}

pub fn core_exit_code(e: &Error) -> i32 {
    match e {
        Error::Lp(_) | Error::SolverFailure(_) | Error::NoInteriorAgent | Error::DegeneratePtdf | Error::DegenerateDenominator(_) => {
            EXIT_SOLVER
        }
        Error::TimeBudgetExceeded { .. } => EXIT_BUDGET,
        _ => EXIT_INPUT,
    }
}

/// Parses `argv` (including the program name), runs the command and
/// returns the process exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let instance = resolve_scenario(&cli.common.scenario, cli.common.derating)?;
    let mut set = ResultSet::new(cli.command.name(), &cli.common.scenario)
        .tolerance("balance_mw", BALANCE_TOL)
        .tolerance("audit_mw", AUDIT_TOL)
        .tolerance("interior_mw", INTERIOR_TOL)
        .tolerance("lp_feasibility", TOL_FEAS)
        .tolerance("lp_gap", TOL_GAP);
    let outcome = build(&cli.command, &instance, &mut set);
    // a budget overrun still reports what was computed
    match outcome {
        Ok(()) => emit(&set, &cli.common),
        Err(CliError::Budget(msg)) => {
            emit(&set, &cli.common)?;
            Err(CliError::Budget(msg))
        }
        Err(e) => Err(e),
    }
}

pub fn resolve_scenario(scenario: &str, derating: Option<f64>) -> Result<MarketInstance, Error> {
    let options = LoadOptions { derating };
    let path = Path::new(scenario);
    if path.exists() {
        load_scenario_with(path, options)
    } else if BUNDLED.contains(&scenario) {
        bundled_with(scenario, options)
    } else {
        Err(Error::InvalidArgument(format!(
            "{scenario:?} is neither a scenario file nor a bundled name ({})",
            BUNDLED.join(", ")
        )))
    }
}

fn emit(set: &ResultSet, common: &Common) -> Result<(), CliError> {
    let write = |w: &mut dyn Write| -> io::Result<()> {
        match common.format {
            Format::Csv => write_csv(set, w),
            Format::Structured => write_json(set, w),
        }
    };
    match &common.output {
        Some(p) => {
            let err = |source| CliError::Output {
                path: p.display().to_string(),
                source,
            };
            let mut f = BufWriter::new(File::create(p).map_err(err)?);
            write(&mut f).and_then(|_| f.flush()).map_err(err)
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write(&mut lock).map_err(|source| CliError::Output {
                path: "<stdout>".into(),
                source,
            })
        }
    }
}

fn build(command: &Command, inst: &MarketInstance, set: &mut ResultSet) -> Result<(), CliError> {
    match command {
        Command::Clear => clear_tables(inst, set),
        Command::Benchmarks => benchmark_tables(inst, set),
        Command::Vcg => settlement_tables(inst, SettlementRule::Vcg, set),
        Command::Up => settlement_tables(inst, SettlementRule::UniformPrice, set),
        Command::SweepBid { agent, rule, grid } => sweep_bid_tables(inst, agent, (*rule).into(), grid, set),
        Command::SweepCapacity {
            branch,
            grid,
            positive_only,
        } => sweep_capacity_tables(inst, branch, grid, !positive_only, set),
        Command::MilpVerify {
            big_m_scale,
            time_budget,
            first_feasible,
        } => milp_tables(inst, *big_m_scale, *time_budget, *first_feasible, set),
        Command::Audit { regime } => audit_tables(inst, (*regime).into(), set),
        Command::Decompose { regime, samples, seed } => decompose_tables(inst, (*regime).into(), *samples, *seed, set),
    }
}

fn allocation_table(inst: &MarketInstance, curtailment: &[f64]) -> Table {
    let mut t = Table::new(
        "allocation",
        &[
            ("agent", Unit::Text),
            ("bus", Unit::Count),
            ("load", Unit::Mw),
            ("obligation", Unit::Mw),
            ("curtailment", Unit::Mw),
            ("served", Unit::Mw),
            ("net_credit", Unit::Mw),
        ],
    );
    for (a, &c) in inst.agents().iter().zip(curtailment) {
        t.push(vec![
            a.name.as_str().into(),
            (a.bus as usize).into(),
            a.load.into(),
            a.obligation.into(),
            c.into(),
            (a.load - c).into(),
            (c - a.obligation).into(),
        ]);
    }
    t
}

fn flow_table(inst: &MarketInstance, curtailment: &[f64], mu: Option<(&[f64], &[f64])>) -> Result<Table, CliError> {
    let audit = inst.audit(curtailment)?;
    let mut t = Table::new(
        "flows",
        &[
            ("branch", Unit::Text),
            ("flow", Unit::Mw),
            ("f_plus", Unit::Mw),
            ("f_minus", Unit::Mw),
            ("slack_plus", Unit::Mw),
            ("slack_minus", Unit::Mw),
            ("mu_plus", Unit::DollarsPerMwh),
            ("mu_minus", Unit::DollarsPerMwh),
        ],
    );
    for (l, br) in inst.network().branches().iter().enumerate() {
        t.push(vec![
            br.id.as_str().into(),
            audit.flows[l].into(),
            br.f_plus.into(),
            br.f_minus.into(),
            audit.slack_plus[l].into(),
            audit.slack_minus[l].into(),
            mu.map(|m| m.0[l]).into(),
            mu.map(|m| m.1[l]).into(),
        ]);
    }
    Ok(t)
}

fn clear_tables(inst: &MarketInstance, set: &mut ResultSet) -> Result<(), CliError> {
    let v = inst.volls();
    let out = clear(inst, &v)?;
    set.tables.push(allocation_table(inst, &out.curtailment));
    set.tables
        .push(flow_table(inst, &out.curtailment, Some((&out.duals.mu_plus, &out.duals.mu_minus)))?);
    let names: Vec<&str> = inst.agents().iter().map(|a| a.name.as_str()).collect();
    let mut credits = Table::new("credit_flows", &[("seller", Unit::Text), ("buyer", Unit::Text), ("flow", Unit::Mw)]);
    for (i, row) in out.x.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            if x > INTERIOR_TOL {
                credits.push(vec![names[i].into(), names[j].into(), x.into()]);
            }
        }
    }
    set.tables.push(credits);
    let mut summary = Table::new(
        "summary",
        &[
            ("declared_welfare", Unit::Dollars),
            ("true_welfare", Unit::Dollars),
            ("feasible", Unit::Flag),
            ("min_slack", Unit::Mw),
            ("price_wedge", Unit::DollarsPerMwh),
        ],
    );
    let prices = match nodal_prices(inst, &v, &out) {
        Ok(p) => Some(p),
        Err(Error::NoInteriorAgent) => None,
        Err(e) => return Err(e.into()),
    };
    summary.push(vec![
        out.declared_welfare.into(),
        out.true_welfare.into(),
        out.audit.feasible.into(),
        finite(out.audit.min_slack),
        prices.as_ref().map(|p| p.wedge).into(),
    ]);
    set.tables.push(summary);
    if let Some(p) = prices {
        let mut t = Table::new("nodal_prices", &[("bus", Unit::Count), ("price", Unit::DollarsPerMwh)]);
        for (b, price) in inst.network().buses().iter().zip(&p.prices) {
            t.push(vec![(b.id as usize).into(), (*price).into()]);
        }
        set.tables.push(t);
    }
    Ok(())
}

fn finite(v: f64) -> Cell {
    if v.is_finite() {
        v.into()
    } else {
        Cell::Empty
    }
}

fn benchmark_tables(inst: &MarketInstance, set: &mut ResultSet) -> Result<(), CliError> {
    let report = regime_report(inst)?;
    let mut t = Table::new(
        "welfare",
        &[
            ("regime", Unit::Text),
            ("welfare", Unit::Dollars),
            ("vs_admin", Unit::Percent),
            ("vs_prorata", Unit::Percent),
            ("feasible", Unit::Flag),
            ("min_slack", Unit::Mw),
        ],
    );
    for r in &report.rows {
        t.push(vec![
            r.regime.label().into(),
            r.welfare.into(),
            (100.0 * (r.vs_admin - 1.0)).into(),
            (100.0 * (r.vs_prorata - 1.0)).into(),
            r.audit.feasible.into(),
            finite(r.audit.min_slack),
        ]);
    }
    set.tables.push(t);

    let mut cols: Vec<(&str, Unit)> = vec![("regime", Unit::Text)];
    let names: Vec<String> = inst.agents().iter().map(|a| a.name.clone()).collect();
    cols.extend(names.iter().map(|n| (n.as_str(), Unit::Mw)));
    let mut alloc = Table::new("allocations", &cols);
    for r in &report.rows {
        let mut row: Vec<Cell> = vec![r.regime.label().into()];
        row.extend(r.curtailment.iter().map(|&c| c.into()));
        alloc.push(row);
    }
    set.tables.push(alloc);

    let w_ccm = report.row(Regime::Ccm).welfare;
    let w_plan = report.row(Regime::Planner).welfare;
    let cong = congestion_report(inst)?;
    let mut s = Table::new(
        "summary",
        &[
            ("efficiency_ratio", Unit::Ratio),
            ("congestion_cost", Unit::Dollars),
            ("congestion_gap", Unit::Percent),
            ("binding_branches", Unit::Text),
            ("price_wedge", Unit::DollarsPerMwh),
        ],
    );
    let binding: Vec<String> = cong
        .binding
        .iter()
        .map(|b| format!("{}{}", b.id, if b.direction > 0 { "+" } else { "-" }))
        .collect();
    s.push(vec![
        ccm_core::benchmarks::efficiency_ratio(w_ccm, w_plan)?.into(),
        report.congestion_cost.into(),
        cong.gap_pct.into(),
        binding.join(" ").into(),
        cong.wedge.into(),
    ]);
    set.tables.push(s);
    Ok(())
}

fn settlement_tables(inst: &MarketInstance, rule: SettlementRule, set: &mut ResultSet) -> Result<(), CliError> {
    let v = inst.volls();
    let r = settle(rule, inst, &v, &v)?;
    let mut t = Table::new(
        "settlement",
        &[
            ("agent", Unit::Text),
            ("curtailment", Unit::Mw),
            ("payment", Unit::Dollars),
            ("surplus", Unit::Dollars),
            ("admin_surplus", Unit::Dollars),
        ],
    );
    for (i, a) in inst.agents().iter().enumerate() {
        t.push(vec![
            a.name.as_str().into(),
            r.outcome.curtailment[i].into(),
            r.payments[i].into(),
            r.surpluses[i].into(),
            (a.voll * (a.load - a.obligation)).into(),
        ]);
    }
    set.tables.push(t);
    let mut s = Table::new(
        "summary",
        &[
            ("rule", Unit::Text),
            ("budget", Unit::Dollars),
            ("deficit", Unit::Flag),
            ("price", Unit::DollarsPerMwh),
            ("price_fallback", Unit::Flag),
            ("solves", Unit::Count),
        ],
    );
    s.push(vec![
        rule.label().into(),
        r.budget.into(),
        r.deficit.into(),
        r.price.into(),
        r.price_fallback.into(),
        r.solves.into(),
    ]);
    set.tables.push(s);
    Ok(())
}

fn sweep_bid_tables(inst: &MarketInstance, agent: &str, rule: SettlementRule, grid: &str, set: &mut ResultSet) -> Result<(), CliError> {
    let i = inst.agent_index(agent)?;
    let grid = SweepGrid::parse(grid)?;
    let r = bid_sweep(inst, i, &grid, rule)?;
    let mut t = Table::new(
        "sweep",
        &[
            ("multiplier", Unit::Ratio),
            ("bid", Unit::DollarsPerMwh),
            ("payoff", Unit::Dollars),
            ("curtailment", Unit::Mw),
            ("price", Unit::DollarsPerMwh),
            ("error", Unit::Text),
        ],
    );
    for p in &r.points {
        t.push(vec![
            p.multiplier.into(),
            p.bid.into(),
            p.payoff.into(),
            p.curtailment.into(),
            p.price.into(),
            p.error.clone().into(),
        ]);
    }
    set.tables.push(t);
    let mut s = Table::new(
        "summary",
        &[
            ("agent", Unit::Text),
            ("rule", Unit::Text),
            ("u_truthful", Unit::Dollars),
            ("u_best", Unit::Dollars),
            ("gain", Unit::Percent),
            ("best_multiplier", Unit::Ratio),
        ],
    );
    s.push(vec![
        agent.into(),
        rule.label().into(),
        r.u_truthful.into(),
        r.u_best.into(),
        (100.0 * r.gain).into(),
        r.best_multiplier.into(),
    ]);
    set.tables.push(s);
    Ok(())
}

fn sweep_capacity_tables(inst: &MarketInstance, branch: &str, grid: &str, symmetric: bool, set: &mut ResultSet) -> Result<(), CliError> {
    let l = inst
        .network()
        .branch_index(branch)
        .ok_or_else(|| Error::UnknownBranch(branch.to_string()))?;
    let caps = SweepGrid::parse(grid)?.points();
    let points = capacity_sweep(inst, l, &caps, symmetric)?;
    let mut t = Table::new(
        "capacity_sweep",
        &[
            ("capacity", Unit::Mw),
            ("w_ccm", Unit::Dollars),
            ("w_planner", Unit::Dollars),
            ("w_prorata", Unit::Dollars),
            ("mu", Unit::DollarsPerMwh),
            ("prorata_feasible", Unit::Flag),
            ("prorata_min_slack", Unit::Mw),
            ("admin_feasible", Unit::Flag),
        ],
    );
    for p in points {
        t.push(vec![
            p.capacity.into(),
            p.w_ccm.into(),
            p.w_plan.into(),
            p.w_prorata.into(),
            p.mu.into(),
            p.prorata_feasible.into(),
            finite(p.prorata_min_slack),
            p.admin_feasible.into(),
        ]);
    }
    set.tables.push(t);
    Ok(())
}

fn milp_tables(inst: &MarketInstance, scale: Option<f64>, budget: f64, first_feasible: bool, set: &mut ResultSet) -> Result<(), CliError> {
    if !(budget.is_finite() && budget >= 0.0) {
        return Err(Error::InvalidArgument(format!("time budget {budget} must be a non-negative number of seconds")).into());
    }
    let scales = scale.map_or_else(|| vec![1.0, 10.0, 100.0], |s| vec![s]);
    let options = MilpVerifyOptions {
        bigm: BigMConfig::default(),
        objective: if first_feasible {
            MilpObjective::None
        } else {
            MilpObjective::DeclaredWelfare
        },
        time_budget: Duration::from_secs_f64(budget),
    };
    set.tolerances.insert("milp_agreement".into(), AGREEMENT_TOL);
    set.tolerances.insert("milp_stability".into(), STABILITY_TOL);
    let v = inst.volls();
    let r = verify_milp_equivalence_with(inst, &v, &scales, &options)?;
    let mut t = Table::new(
        "milp",
        &[
            ("scale", Unit::Ratio),
            ("status", Unit::Text),
            ("objective", Unit::Dollars),
            ("lp_objective", Unit::Dollars),
            ("relative_gap", Unit::Ratio),
            ("nodes", Unit::Count),
            ("elapsed", Unit::Seconds),
            ("stationarity", Unit::DollarsPerMwh),
            ("primal_violation", Unit::Mw),
        ],
    );
    for s in &r.results {
        t.push(vec![
            s.scale.into(),
            status_label(s.status).into(),
            s.objective.into(),
            r.lp_objective.into(),
            s.relative_gap.into(),
            s.nodes.into(),
            s.elapsed_secs.into(),
            s.kkt.as_ref().map(|k| k.stationarity).into(),
            s.kkt.as_ref().map(|k| k.primal_violation.max(0.0)).into(),
        ]);
    }
    set.tables.push(t);
    let mut s = Table::new(
        "summary",
        &[
            ("binaries", Unit::Count),
            ("expected_binaries", Unit::Count),
            ("agrees_with_lp", Unit::Flag),
            ("stable", Unit::Flag),
        ],
    );
    s.push(vec![
        r.binaries.into(),
        binary_count(inst.num_agents(), inst.network().num_branches()).into(),
        r.agrees_with_lp.into(),
        r.stable.into(),
    ]);
    set.tables.push(s);
    for res in &r.results {
        if let Some(m) = &res.message {
            eprintln!("scale {}: {m}", res.scale);
        }
    }
    if r.results.iter().any(|s| s.status == ScaleStatus::BudgetExceeded) {
        return Err(CliError::Budget(format!("MILP did not finish within {budget} s")));
    }
    if r.results.iter().any(|s| s.status == ScaleStatus::NumericalFailure) {
        return Err(Error::SolverFailure("the MILP relaxation lost numerical accuracy".into()).into());
    }
    Ok(())
}

fn status_label(s: ScaleStatus) -> &'static str {
    match s {
        ScaleStatus::Optimal => "optimal",
        ScaleStatus::UndersizedM => "infeasible-undersized-m",
        ScaleStatus::BudgetExceeded => "time-budget-exceeded",
        ScaleStatus::NumericalFailure => "numerical-failure",
    }
}

fn audit_tables(inst: &MarketInstance, regime: Regime, set: &mut ResultSet) -> Result<(), CliError> {
    let c = regime_allocation(inst, regime)?;
    let audit = inst.audit(&c)?;
    set.tables.push(allocation_table(inst, &c));
    set.tables.push(flow_table(inst, &c, None)?);
    let mut s = Table::new(
        "summary",
        &[
            ("regime", Unit::Text),
            ("feasible", Unit::Flag),
            ("min_slack", Unit::Mw),
            ("welfare", Unit::Dollars),
        ],
    );
    s.push(vec![
        regime.label().into(),
        audit.feasible.into(),
        finite(audit.min_slack),
        welfare(inst, &c, &inst.volls())?.into(),
    ]);
    set.tables.push(s);
    Ok(())
}

fn decompose_tables(inst: &MarketInstance, regime: Regime, samples: usize, seed: u64, set: &mut ResultSet) -> Result<(), CliError> {
    set.tolerances.insert("reconstruction_mw".into(), RECONSTRUCTION_TOL);
    let c = regime_allocation(inst, regime)?;
    let r = verify_equivalence(inst, &c)?;
    let names: Vec<&str> = inst.agents().iter().map(|a| a.name.as_str()).collect();
    let mut t = Table::new("credit_flows", &[("seller", Unit::Text), ("buyer", Unit::Text), ("flow", Unit::Mw)]);
    for (i, row) in r.flows.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            if x > 0.0 {
                t.push(vec![names[i].into(), names[j].into(), x.into()]);
            }
        }
    }
    set.tables.push(t);
    let mut s = Table::new(
        "summary",
        &[
            ("regime", Unit::Text),
            ("max_error", Unit::Mw),
            ("audit_feasible", Unit::Flag),
            ("matches", Unit::Flag),
        ],
    );
    s.push(vec![
        regime.label().into(),
        r.max_error.into(),
        r.audit_target.feasible.into(),
        r.matches.into(),
    ]);
    set.tables.push(s);
    if samples > 0 {
        set.seed = Some(seed);
        let sum = verify_samples(inst, samples, seed)?;
        let mut t = Table::new(
            "samples",
            &[
                ("samples", Unit::Count),
                ("matched", Unit::Count),
                ("worst_error", Unit::Mw),
                ("max_support", Unit::Count),
            ],
        );
        t.push(vec![
            sum.samples.into(),
            sum.matched.into(),
            sum.worst_error.into(),
            sum.max_support.into(),
        ]);
        set.tables.push(t);
    }
    Ok(())
}

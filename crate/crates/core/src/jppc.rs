//! Decoupled solution of the joint backhaul-precoding / access-power problem
//! for one channel realization.
//!
//! At the optimum each backhaul carries exactly the sum of its cell's UE
//! requirements. That pins the backhaul rate targets (and therefore the
//! proportional ratios), after which the access and backhaul subproblems
//! share no variables and are solved independently.

use serde::{Deserialize, Serialize};

use crate::access::{solve_power_control, AccessSolution};
use crate::backhaul::{solve_dpc, zfbf_solve, BackhaulParams, BackhaulSolution, OrderStrategy};
use crate::scenario::{rate_to_sinr, ChannelRealization, NetworkScenario};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Dpc,
    Zfbf,
}

impl Scheme {
    pub fn label(self) -> &'static str {
        match self {
            Scheme::Dpc => "DPC",
            Scheme::Zfbf => "ZFBF",
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dpc" => Ok(Scheme::Dpc),
            "zfbf" | "zf" => Ok(Scheme::Zfbf),
            other => Err(Error::InvalidArgument(format!("unknown scheme `{other}` (expected dpc or zfbf)"))),
        }
    }
}

/// Per-UE requirements with the derived per-cell sums and ratios.
#[derive(Debug, Clone, PartialEq)]
pub struct RateRequirements {
    pub per_ue_nats: Vec<Vec<f64>>,
    pub per_cell_nats: Vec<f64>,
    pub ratios: Vec<f64>,
}

impl RateRequirements {
    pub fn new(per_ue_nats: Vec<Vec<f64>>) -> Result<Self> {
        let ratios = proportional_ratios(&per_ue_nats)?;
        let per_cell_nats = per_ue_nats.iter().map(|c| c.iter().sum()).collect();
        Ok(Self { per_ue_nats, per_cell_nats, ratios })
    }
}

/// Backhaul rate ratios `phi_m = R_m / sum R`, with `R_m` the sum of the
/// requirements of cell `m`.
pub fn proportional_ratios(per_ue_nats: &[Vec<f64>]) -> Result<Vec<f64>> {
    if per_ue_nats.is_empty() {
        return Err(Error::InvalidArgument("no cells".into()));
    }
    let mut sums = Vec::with_capacity(per_ue_nats.len());
    for (m, cell) in per_ue_nats.iter().enumerate() {
        if cell.is_empty() {
            return Err(Error::InvalidArgument(format!("cell {m} has no UEs")));
        }
        if let Some(r) = cell.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
            return Err(Error::InvalidArgument(format!("cell {m} has a nonpositive requirement {r}")));
        }
        sums.push(cell.iter().sum::<f64>());
    }
    let total: f64 = sums.iter().sum();
    Ok(sums.into_iter().map(|s| s / total).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub scheme: Scheme,
    pub backhaul: BackhaulSolution,
    pub access: AccessSolution,
    pub system_outage: bool,
    /// Backhaul plus access power; zero under outage since nothing is sent.
    pub total_power_w: f64,
}

impl TrialOutcome {
    pub fn backhaul_outage(&self) -> bool {
        !self.backhaul.feasible
    }

    pub fn access_outage(&self) -> bool {
        !self.access.feasible
    }
}

/// Solver knobs not carried by the scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub scheme: Scheme,
    /// `None` picks [`OrderStrategy::default_for`] the cell count.
    pub order: Option<OrderStrategy>,
}

impl SolveOptions {
    pub fn new(scheme: Scheme) -> Self {
        Self { scheme, order: None }
    }
}

/// Solves both subproblems for one realization and classifies the outcome.
///
/// Both subproblems are always solved so that backhaul-only and access-only
/// outages can be told apart.
pub fn solve_jppc(scenario: &NetworkScenario, channels: &ChannelRealization, opts: SolveOptions) -> Result<TrialOutcome> {
    let reqs = scenario.rate_requirements();
    let cell_targets: Vec<f64> = reqs.iter().map(|c| c.iter().sum()).collect();
    let sinr_targets: Vec<Vec<f64>> = reqs.iter().map(|c| c.iter().map(|r| rate_to_sinr(*r)).collect()).collect();

    let access = solve_power_control(channels, &sinr_targets, &scenario.scbs_budgets(), scenario.noise_power_w)?;

    let params = BackhaulParams {
        noise_w: scenario.noise_power_w,
        power_budget_w: scenario.gateway_power_budget_w,
        frame_share: scenario.backhaul_frame_share,
    };
    let backhaul = match opts.scheme {
        Scheme::Dpc => {
            let strategy = opts.order.unwrap_or_else(|| OrderStrategy::default_for(channels.num_cells()));
            solve_dpc(&channels.backhaul, &cell_targets, &params, strategy)?
        }
        Scheme::Zfbf => zfbf_solve(&channels.backhaul, &cell_targets, &params)?,
    };

    let system_outage = !backhaul.feasible || !access.feasible;
    let total_power_w = if system_outage { 0.0 } else { backhaul.total_power_w + access.total_power_w() };
    Ok(TrialOutcome { scheme: opts.scheme, backhaul, access, system_outage, total_power_w })
}

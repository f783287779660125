//! Built-in property checks on seeded random instances.
//!
//! Each check reports the worst error it saw against its tolerance. The
//! tolerances can be overridden to confirm that the harness actually fails.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::access::{eval_access_rates, solve_power_control};
use crate::backhaul::{
    closed_form_precoders, cross_check_precoders, dpc_rates_from_precoders, duality_transform, solve_dpc_with_order,
    solve_dual_powers, zfbf_solve, BackhaulParams, EncodingOrder,
};
use crate::jppc::{proportional_ratios, solve_jppc, Scheme, SolveOptions};
use crate::numerics::{hpd_inv_sqrt, hpd_solve, HermitianMatrix, HpdFactor};
use crate::scenario::{
    access_pathloss_db, backhaul_pathloss_db, dbm_to_watts, sample_channels, sample_cscg, CellConfig, ChannelRealization,
    NetworkScenario, UeConfig,
};
use crate::{oracle, CVector, Complex64, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub conservation: f64,
    pub rate_fidelity: f64,
    pub closed_form: f64,
    pub grid: f64,
    pub access_round_trip: f64,
    pub access_scaling: f64,
    pub hpd_solve: f64,
    pub inv_sqrt_commute: f64,
    pub flow: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            conservation: 1e-9,
            rate_fidelity: 1e-9,
            closed_form: 1e-8,
            grid: 1e-3,
            access_round_trip: 1e-9,
            access_scaling: 1e-9,
            hpd_solve: 1e-10,
            inv_sqrt_commute: 1e-9,
            flow: 1e-9,
        }
    }
}

impl Tolerances {
    /// Every tolerance replaced by `tol`.
    pub fn uniform(tol: f64) -> Self {
        Self {
            conservation: tol,
            rate_fidelity: tol,
            closed_form: tol,
            grid: tol,
            access_round_trip: tol,
            access_scaling: tol,
            hpd_solve: tol,
            inv_sqrt_commute: tol,
            flow: tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    /// Largest observed error; NaN for pass/fail-only checks.
    pub worst: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        if self.worst.is_nan() {
            write!(f, "{tag}  {}", self.name)?;
        } else {
            write!(f, "{tag}  {} (worst {:.3e}, tol {:.1e})", self.name, self.worst, self.tolerance)?;
        }
        if !self.detail.is_empty() {
            write!(f, ": {}", self.detail)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SelftestReport {
    pub checks: Vec<CheckResult>,
}

impl SelftestReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// Tracks the worst error of one property; an `Err` from the code under test
/// fails the property and is kept as the detail.
struct Check {
    name: &'static str,
    tol: f64,
    worst: f64,
    error: Option<String>,
}

impl Check {
    fn new(name: &'static str, tol: f64) -> Self {
        Self { name, tol, worst: 0.0, error: None }
    }

    fn observe(&mut self, err: f64) {
        if !(err <= self.worst) {
            self.worst = err;
        }
    }

    fn run(&mut self, f: impl FnOnce(&mut Self) -> Result<()>) {
        if self.error.is_some() {
            return;
        }
        if let Err(e) = f(self) {
            self.error = Some(e.to_string());
        }
    }

    fn finish(self) -> CheckResult {
        let passed = self.error.is_none() && self.worst <= self.tol;
        CheckResult { name: self.name, passed, worst: self.worst, tolerance: self.tol, detail: self.error.unwrap_or_default() }
    }
}

fn flag(name: &'static str, ok: bool, detail: String) -> CheckResult {
    CheckResult { name, passed: ok, worst: f64::NAN, tolerance: f64::NAN, detail: if ok { String::new() } else { detail } }
}

struct BackhaulInstance {
    channels: Vec<CVector>,
    targets: Vec<f64>,
    order: EncodingOrder,
    noise: f64,
}

fn random_channels(rng: &mut impl Rng, m: usize, l: usize, variance: f64) -> Vec<CVector> {
    (0..m).map(|_| DVector::from_fn(l, |_, _| sample_cscg(rng, variance))).collect()
}

fn random_order(rng: &mut impl Rng, m: usize) -> EncodingOrder {
    let mut p: Vec<usize> = (0..m).collect();
    for i in (1..m).rev() {
        p.swap(i, rng.random_range(0..=i));
    }
    EncodingOrder::new(p).expect("shuffle is a permutation")
}

fn backhaul_instance(rng: &mut impl Rng) -> BackhaulInstance {
    let m = rng.random_range(1..=6);
    let l = rng.random_range(2..=8);
    // pathloss-like scale so the numbers resemble a real link budget
    let variance = 10f64.powf(-rng.random_range(9.0..12.0));
    BackhaulInstance {
        channels: random_channels(rng, m, l, variance),
        targets: (0..m).map(|_| rng.random_range(0.1..3.0)).collect(),
        order: random_order(rng, m),
        noise: dbm_to_watts(-107.0),
    }
}

fn random_hpd(rng: &mut impl Rng, n: usize) -> HermitianMatrix {
    let b = DMatrix::from_fn(n, n, |_, _| sample_cscg(rng, 1.0));
    let a = &b * b.adjoint() + DMatrix::identity(n, n) * Complex64::new(0.1, 0.0);
    HermitianMatrix::new(a).expect("B B^H + cI is Hermitian")
}

fn gains_realization(gains: &[[f64; 2]; 2]) -> ChannelRealization {
    ChannelRealization {
        backhaul: vec![CVector::zeros(1); 2],
        access_gain_sq: (0..2).map(|j| (0..2).map(|m| vec![gains[j][m]]).collect()).collect(),
    }
}

fn access_instance(rng: &mut impl Rng) -> (ChannelRealization, Vec<Vec<f64>>) {
    let m = rng.random_range(1..=4);
    let n: Vec<usize> = (0..m).map(|_| rng.random_range(1..=2)).collect();
    let access_gain_sq = (0..m)
        .map(|j| {
            (0..m)
                .map(|c| {
                    (0..n[c])
                        .map(|_| if j == c { rng.random_range(0.5..2.0) * 1e-7 } else { rng.random_range(0.0..0.05) * 1e-7 })
                        .collect()
                })
                .collect()
        })
        .collect();
    let gamma = n.iter().map(|&k| (0..k).map(|_| rng.random_range(0.1..0.8)).collect()).collect();
    let ch = ChannelRealization { backhaul: vec![CVector::zeros(1); m], access_gain_sq };
    (ch, gamma)
}

fn small_scenario(rng: &mut impl Rng) -> NetworkScenario {
    let m = rng.random_range(1..=4);
    let cells = (0..m)
        .map(|c| CellConfig {
            backhaul_distance_m: rng.random_range(80.0..200.0),
            scbs_power_budget_w: dbm_to_watts(23.0),
            ues: (0..rng.random_range(1..=2))
                .map(|_| UeConfig {
                    distances_to_scbs_m: (0..m)
                        .map(|j| if j == c { rng.random_range(3.0..10.0) } else { rng.random_range(150.0..300.0) })
                        .collect(),
                    rate_req_nats: rng.random_range(0.1..0.5),
                })
                .collect(),
        })
        .collect();
    NetworkScenario {
        num_antennas: rng.random_range(m..=8),
        cells,
        carrier_freq_ghz: 2.0,
        noise_power_w: dbm_to_watts(-107.0),
        gateway_power_budget_w: 1.0,
        backhaul_frame_share: rng.random_range(0.5..=1.0),
        rng_seed: rng.random(),
    }
}

/// Runs every property with `instances` random draws each (grid oracles use
/// a tenth of that) from `seed`.
pub fn run_selftest(tol: &Tolerances, seed: u64, instances: usize) -> SelftestReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();
    let grid_instances = (instances / 10).max(1);

    let mut conservation = Check::new("duality power conservation", tol.conservation);
    let mut fidelity = Check::new("rate fidelity", tol.rate_fidelity);
    let mut closed = Check::new("closed-form precoder cross-check", tol.closed_form);
    let mut sweep = Check::new("backward-sweep well-posedness", 0.0);
    let mut monotone = Check::new("monotonicity of dual power in targets", 0.0);
    for _ in 0..instances {
        let inst = backhaul_instance(&mut rng);
        let bump = rng.random_range(0..inst.targets.len());
        conservation.run(|c| {
            let dual = solve_dual_powers(&inst.channels, &inst.targets, &inst.order, inst.noise)?;
            let w = duality_transform(&inst.channels, &dual, &inst.order, inst.noise)?;
            let dual_sum: f64 = dual.iter().sum();
            c.observe(rel(w.iter().map(|v| v.norm_squared()).sum(), dual_sum));

            let rates = dpc_rates_from_precoders(&inst.channels, &w, &inst.order, inst.noise, 1.0)?;
            for (r, t) in rates.iter().zip(&inst.targets) {
                fidelity.observe(rel(*r, *t));
            }

            let cf = closed_form_precoders(&inst.channels, &inst.targets, &inst.order, inst.noise)?;
            let worst = w.iter().zip(&cf).map(|(a, b)| rel(a.norm_squared(), b.norm_squared())).fold(0.0, f64::max);
            closed.observe(worst);
            if let Err(e) = cross_check_precoders(&w, &cf, tol.closed_form) {
                closed.error.get_or_insert(e.to_string());
            }

            // every interference covariance is at least noise * I
            let mut theta_bar = HermitianMatrix::scaled_identity(inst.channels[0].len(), inst.noise);
            for pos in (0..inst.order.len()).rev() {
                let u = inst.order.user_at(pos);
                HpdFactor::new(&theta_bar)?;
                let lo = theta_bar.eigenvalues()[0];
                sweep.observe(((inst.noise - lo) / inst.noise - 1e-6).max(0.0));
                theta_bar.add_outer(&inst.channels[u], dual[u]);
            }

            let mut raised = inst.targets.clone();
            raised[bump] += 0.05;
            let more: f64 = solve_dual_powers(&inst.channels, &raised, &inst.order, inst.noise)?.iter().sum();
            if !(more > dual_sum) {
                monotone.observe(1.0);
            }
            Ok(())
        });
    }
    checks.extend([conservation, fidelity, closed, sweep, monotone].map(Check::finish));

    let mut dominance = Check::new("DPC dominance over ZFBF", 0.0);
    for _ in 0..instances {
        let mut inst = backhaul_instance(&mut rng);
        let l = inst.channels[0].len();
        inst.channels.truncate(l);
        inst.targets.truncate(l);
        let m = inst.channels.len();
        let order = random_order(&mut rng, m);
        dominance.run(|c| {
            let params = BackhaulParams::new(inst.noise, f64::INFINITY);
            let dpc = solve_dpc_with_order(&inst.channels, &inst.targets, &params, order)?;
            let zf = zfbf_solve(&inst.channels, &inst.targets, &params)?;
            if zf.feasible {
                c.observe(((dpc.total_power_w - zf.total_power_w) / zf.total_power_w - 1e-9).max(0.0));
            }
            Ok(())
        });
    }
    checks.push(dominance.finish());

    let mut grid = Check::new("backhaul optimality against grid search", tol.grid);
    for _ in 0..grid_instances {
        let channels = random_channels(&mut rng, 2, 2, 1.0);
        let targets = [rng.random_range(0.1..1.5), rng.random_range(0.1..1.5)];
        let order = if rng.random::<bool>() { [0, 1] } else { [1, 0] };
        let noise = 0.1;
        grid.run(|c| {
            let dual = solve_dual_powers(&channels, &targets, &EncodingOrder::new(order.to_vec())?, noise)?;
            let sum = dual[0] + dual[1];
            match oracle::backhaul_grid_min(&channels, targets, order, noise, sum * 2e-5, sum * 1.2) {
                Some((best, _)) => c.observe(rel(best, sum)),
                None => c.observe(f64::INFINITY),
            }
            Ok(())
        });
    }
    checks.push(grid.finish());

    let mut round_trip = Check::new("access round-trip", tol.access_round_trip);
    let mut scaling = Check::new("access scaling", tol.access_scaling);
    let mut coupling = Check::new("access monotone coupling", 0.0);
    for _ in 0..instances {
        let (ch, gamma) = access_instance(&mut rng);
        let noise = dbm_to_watts(-107.0);
        let budgets = vec![1.0; gamma.len()];
        let c_scale = rng.random_range(0.1..10.0);
        let bump_cell = rng.random_range(0..gamma.len());
        round_trip.run(|c| {
            let sol = solve_power_control(&ch, &gamma, &budgets, noise)?;
            if !sol.feasible {
                return Ok(());
            }
            let rates = eval_access_rates(&ch, &sol.powers_w, noise)?;
            for (rc, gc) in rates.iter().zip(&gamma) {
                for (r, g) in rc.iter().zip(gc) {
                    c.observe(rel(*r, g.ln_1p()));
                }
            }
            let scaled_budgets: Vec<f64> = budgets.iter().map(|b| b * c_scale).collect();
            let scaled = solve_power_control(&ch, &gamma, &scaled_budgets, noise * c_scale)?;
            for (a, b) in scaled.powers_w.iter().flatten().zip(sol.powers_w.iter().flatten()) {
                scaling.observe(rel(*a, b * c_scale));
            }
            let mut raised = gamma.clone();
            raised[bump_cell][0] *= 1.1;
            let up = solve_power_control(&ch, &raised, &budgets, noise)?;
            if !up.powers_w.is_empty() {
                for (a, b) in up.powers_w.iter().flatten().zip(sol.powers_w.iter().flatten()) {
                    if a < b {
                        coupling.observe(rel(*a, *b));
                    }
                }
            }
            Ok(())
        });
    }
    checks.extend([round_trip, scaling, coupling].map(Check::finish));

    let mut minimal = Check::new("access componentwise minimality against grid search", tol.grid);
    for _ in 0..grid_instances {
        let g =
            [[rng.random_range(0.5..2.0), rng.random_range(0.0..0.1)], [rng.random_range(0.0..0.1), rng.random_range(0.5..2.0)]];
        let gamma = [rng.random_range(1.0..10.0), rng.random_range(1.0..10.0)];
        minimal.run(|c| {
            let sol = solve_power_control(&gains_realization(&g), &[vec![gamma[0]], vec![gamma[1]]], &[10.0, 10.0], 0.01)?;
            if !sol.feasible {
                return Ok(());
            }
            let v = [sol.powers_w[0][0], sol.powers_w[1][0]];
            let sum = v[0] + v[1];
            match oracle::access_grid_min(g, gamma, 0.01, [10.0, 10.0], [2.0 * v[0], 2.0 * v[1]], 20_000) {
                Some((best, _)) => c.observe(rel(best, sum)),
                None => c.observe(f64::INFINITY),
            }
            Ok(())
        });
    }
    checks.push(minimal.finish());

    let mut solve = Check::new("hpd_solve round-trip", tol.hpd_solve);
    let mut commute = Check::new("hpd_inv_sqrt commutes with its argument", tol.inv_sqrt_commute);
    for _ in 0..instances {
        let n = rng.random_range(1..=16);
        let a = random_hpd(&mut rng, n);
        let b = DVector::from_fn(n, |_, _| sample_cscg(&mut rng, 1.0));
        solve.run(|c| {
            let x = hpd_solve(&a, &b)?;
            c.observe((a.as_matrix() * x - &b).norm() / b.norm());
            let s = hpd_inv_sqrt(&a)?;
            let (sa, as_) = (s.as_matrix() * a.as_matrix(), a.as_matrix() * s.as_matrix());
            commute.observe((&sa - &as_).norm() / sa.norm());
            Ok(())
        });
    }
    checks.extend([solve, commute].map(Check::finish));

    let mut flow = Check::new("flow conservation and ratio consistency", tol.flow);
    let mut reproducible = true;
    for _ in 0..grid_instances {
        let sc = small_scenario(&mut rng);
        let draw_seed: u64 = rng.random();
        flow.run(|c| {
            let ch = sample_channels(&sc, &mut ChaCha8Rng::seed_from_u64(draw_seed));
            reproducible &= ch == sample_channels(&sc, &mut ChaCha8Rng::seed_from_u64(draw_seed));
            let out = solve_jppc(&sc, &ch, SolveOptions::new(Scheme::Dpc))?;
            if out.system_outage {
                return Ok(());
            }
            let carried = eval_access_rates(&ch, &out.access.powers_w, sc.noise_power_w)?;
            let bh = &out.backhaul.achieved_rates_nats;
            let total: f64 = bh.iter().sum();
            let ratios = proportional_ratios(&sc.rate_requirements())?;
            for m in 0..bh.len() {
                c.observe(rel(bh[m], carried[m].iter().sum()));
                c.observe(rel(bh[m] / total, ratios[m]));
            }
            Ok(())
        });
    }
    checks.push(flow.finish());
    checks.push(flag("channel sampling reproducibility", reproducible, "same seed gave different draws".into()));

    let increasing = [(1.0, 2.0), (10.0, 11.0), (100.0, 400.0)].iter().all(|&(a, b)| {
        matches!((backhaul_pathloss_db(a, 2.0), backhaul_pathloss_db(b, 2.0)), (Ok(x), Ok(y)) if y > x)
            && matches!((access_pathloss_db(a, 2.0), access_pathloss_db(b, 2.0)), (Ok(x), Ok(y)) if y > x)
            && matches!((backhaul_pathloss_db(a, 2.0), backhaul_pathloss_db(a, 2.4)), (Ok(x), Ok(y)) if y > x)
    });
    checks.push(flag("pathloss monotonicity", increasing, "pathloss not increasing".into()));

    SelftestReport { checks }
}

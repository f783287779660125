//! Access-link power control under mutual intra- and inter-cell interference.
//!
//! With every SINR constraint tight, the per-UE powers are the solution of a
//! square linear system. When that solution is positive it is also the
//! componentwise smallest power vector meeting the targets, so no iterative
//! or conic solver is needed. Infeasibility is reported as data.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::scenario::ChannelRealization;
use crate::{Error, Result};

/// Reciprocal condition number below which the SINR system counts as singular.
pub const RCOND_MIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AccessStatus {
    Feasible,
    /// The equality system is numerically singular.
    Singular,
    /// The targets lie outside the achievable SINR region.
    NegativePower,
    /// Powers exist but some ScBS exceeds its budget.
    BudgetExceeded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccessSolution {
    /// `powers_w[m][n]`; empty when no valid power vector exists.
    pub powers_w: Vec<Vec<f64>>,
    /// Achieved SINR per UE, empty alongside `powers_w`.
    pub sinr: Vec<Vec<f64>>,
    pub per_cell_power_w: Vec<f64>,
    pub feasible: bool,
    pub status: AccessStatus,
}

impl AccessSolution {
    pub fn total_power_w(&self) -> f64 {
        self.per_cell_power_w.iter().sum()
    }

    fn without_powers(cells: usize, status: AccessStatus) -> Self {
        Self { powers_w: Vec::new(), sinr: Vec::new(), per_cell_power_w: vec![0.0; cells], feasible: false, status }
    }
}

/// Flat indexing of the UEs, cell-major.
#[derive(Debug, Clone)]
struct UeLayout {
    offsets: Vec<usize>,
}

impl UeLayout {
    fn new(per_cell: &[usize]) -> Self {
        let mut offsets = Vec::with_capacity(per_cell.len() + 1);
        offsets.push(0);
        for n in per_cell {
            offsets.push(offsets.last().unwrap() + n);
        }
        Self { offsets }
    }

    fn total(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    fn cells(&self) -> usize {
        self.offsets.len() - 1
    }

    fn index(&self, m: usize, n: usize) -> usize {
        self.offsets[m] + n
    }

    fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.cells()).flat_map(move |m| (0..self.offsets[m + 1] - self.offsets[m]).map(move |n| (m, n)))
    }

    fn unflatten(&self, flat: &[f64]) -> Vec<Vec<f64>> {
        (0..self.cells()).map(|m| flat[self.offsets[m]..self.offsets[m + 1]].to_vec()).collect()
    }
}

fn layout_for(channels: &ChannelRealization, per_ue: &[Vec<f64>]) -> Result<UeLayout> {
    let per_cell = channels.ues_per_cell();
    if per_ue.len() != per_cell.len() {
        return Err(Error::DimensionMismatch { expected: per_cell.len(), found: per_ue.len() });
    }
    for (row, &n) in per_ue.iter().zip(&per_cell) {
        if row.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: row.len() });
        }
    }
    Ok(UeLayout::new(&per_cell))
}

/// Coupling matrix and right-hand side of the tight SINR constraints
/// `v |g|^2 / Gamma - (intra + inter interference) = noise`, one row per UE
/// in cell-major order.
pub fn build_sinr_system(
    channels: &ChannelRealization,
    targets: &[Vec<f64>],
    noise_w: f64,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let layout = layout_for(channels, targets)?;
    for (m, n) in layout.iter() {
        if !(targets[m][n] > 0.0) {
            return Err(Error::InvalidArgument(format!("SINR target of UE ({m}, {n}) must be positive, got {}", targets[m][n])));
        }
        if !(channels.serving_gain(m, n) > 0.0) {
            return Err(Error::InvalidArgument(format!("serving gain of UE ({m}, {n}) is zero")));
        }
    }
    let ues: Vec<(usize, usize)> = layout.iter().collect();
    Ok(assemble(channels, targets, noise_w, &ues))
}

fn assemble(
    channels: &ChannelRealization,
    targets: &[Vec<f64>],
    noise_w: f64,
    ues: &[(usize, usize)],
) -> (DMatrix<f64>, DVector<f64>) {
    let k = ues.len();
    let a = DMatrix::from_fn(k, k, |row, col| {
        let (m, n) = ues[row];
        let (j, _) = ues[col];
        if row == col {
            channels.serving_gain(m, n) / targets[m][n]
        } else {
            -channels.access_gain_sq[j][m][n]
        }
    });
    (a, DVector::from_element(k, noise_w))
}

/// Minimum-power allocation meeting every SINR target (linear) with equality.
///
/// UEs with a zero target get zero power and drop out of the system. The
/// outcome is infeasible when the system is singular, when a power comes out
/// nonpositive, or when a per-cell budget is exceeded; only dimension
/// mismatches are errors.
pub fn solve_power_control(
    channels: &ChannelRealization,
    targets: &[Vec<f64>],
    budgets_w: &[f64],
    noise_w: f64,
) -> Result<AccessSolution> {
    let layout = layout_for(channels, targets)?;
    if budgets_w.len() != layout.cells() {
        return Err(Error::DimensionMismatch { expected: layout.cells(), found: budgets_w.len() });
    }
    let active: Vec<(usize, usize)> = layout.iter().filter(|&(m, n)| targets[m][n] > 0.0).collect();
    if active.iter().any(|&(m, n)| !(channels.serving_gain(m, n) > 0.0)) {
        return Ok(AccessSolution::without_powers(layout.cells(), AccessStatus::Singular));
    }

    let mut flat = vec![0.0; layout.total()];
    if !active.is_empty() {
        let (a, b) = assemble(channels, targets, noise_w, &active);
        let sv = a.clone().singular_values();
        let (lo, hi) = sv.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &s| (lo.min(s), hi.max(s)));
        if !(hi > 0.0) || lo / hi < RCOND_MIN {
            return Ok(AccessSolution::without_powers(layout.cells(), AccessStatus::Singular));
        }
        let Some(v) = a.lu().solve(&b) else {
            return Ok(AccessSolution::without_powers(layout.cells(), AccessStatus::Singular));
        };
        if v.iter().any(|p| !(*p > 0.0) || !p.is_finite()) {
            return Ok(AccessSolution::without_powers(layout.cells(), AccessStatus::NegativePower));
        }
        for (&(m, n), p) in active.iter().zip(v.iter()) {
            flat[layout.index(m, n)] = *p;
        }
    }

    let powers = layout.unflatten(&flat);
    let per_cell: Vec<f64> = powers.iter().map(|c| c.iter().sum()).collect();
    let within = per_cell.iter().zip(budgets_w).all(|(p, b)| p <= b);
    let sinr = access_sinr(channels, &powers, noise_w)?;
    Ok(AccessSolution {
        powers_w: powers,
        sinr,
        per_cell_power_w: per_cell,
        feasible: within,
        status: if within { AccessStatus::Feasible } else { AccessStatus::BudgetExceeded },
    })
}

/// Received SINR of every UE for the given powers.
pub fn access_sinr(channels: &ChannelRealization, powers: &[Vec<f64>], noise_w: f64) -> Result<Vec<Vec<f64>>> {
    let layout = layout_for(channels, powers)?;
    if powers.iter().flatten().any(|p| !(*p >= 0.0)) {
        return Err(Error::InvalidArgument("powers must be nonnegative".into()));
    }
    let mut out: Vec<Vec<f64>> = powers.iter().map(|c| vec![0.0; c.len()]).collect();
    for (m, n) in layout.iter() {
        let signal = powers[m][n] * channels.serving_gain(m, n);
        let mut interference = 0.0;
        for (j, cell) in powers.iter().enumerate() {
            let g = channels.access_gain_sq[j][m][n];
            for (i, p) in cell.iter().enumerate() {
                if (j, i) != (m, n) {
                    interference += p * g;
                }
            }
        }
        out[m][n] = signal / (interference + noise_w);
    }
    Ok(out)
}

/// Achieved access rates `ln(1 + SINR)` in nats.
pub fn eval_access_rates(channels: &ChannelRealization, powers: &[Vec<f64>], noise_w: f64) -> Result<Vec<Vec<f64>>> {
    Ok(access_sinr(channels, powers, noise_w)?.into_iter().map(|c| c.into_iter().map(f64::ln_1p).collect()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use crate::CVector;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const NOISE: f64 = 2e-14;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    /// Channel realization with only access gains filled in.
    fn gains_only(access: Vec<Vec<Vec<f64>>>) -> ChannelRealization {
        let m = access.len();
        ChannelRealization { backhaul: vec![CVector::zeros(1); m], access_gain_sq: access }
    }

    fn two_cell(g: [[f64; 2]; 2]) -> ChannelRealization {
        gains_only(vec![vec![vec![g[0][0]], vec![g[0][1]]], vec![vec![g[1][0]], vec![g[1][1]]]])
    }

    fn random_gains(rng: &mut impl Rng, per_cell: &[usize], cross: f64) -> ChannelRealization {
        let m = per_cell.len();
        let access = (0..m)
            .map(|j| {
                per_cell
                    .iter()
                    .enumerate()
                    .map(|(cell, &n)| {
                        (0..n)
                            .map(|_| {
                                let base: f64 = rng.random_range(0.2..2.0) * 1e-8;
                                if j == cell {
                                    base
                                } else {
                                    base * cross
                                }
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        gains_only(access)
    }

    #[test]
    fn single_ue_closed_form() {
        let ch = gains_only(vec![vec![vec![3e-9]]]);
        let sol = solve_power_control(&ch, &[vec![40.0]], &[0.2], NOISE).unwrap();
        assert!(sol.feasible);
        assert!(rel(sol.powers_w[0][0], 40.0 * NOISE / 3e-9) < 1e-14);
        let (a, b) = build_sinr_system(&ch, &[vec![40.0]], NOISE).unwrap();
        assert_eq!(a.shape(), (1, 1));
        assert!(rel(b[0] / a[(0, 0)], 40.0 * NOISE / 3e-9) < 1e-14);
        let tiny = solve_power_control(&ch, &[vec![40.0]], &[1e-9], NOISE).unwrap();
        assert!(!tiny.feasible);
        assert_eq!(tiny.status, AccessStatus::BudgetExceeded);
    }

    #[test]
    fn isolated_cells_decouple() {
        let ch = two_cell([[2e-9, 0.0], [0.0, 5e-9]]);
        let t = [vec![10.0], vec![30.0]];
        let (a, _) = build_sinr_system(&ch, &t, NOISE).unwrap();
        assert_eq!(a[(0, 1)], 0.0);
        assert_eq!(a[(1, 0)], 0.0);
        let sol = solve_power_control(&ch, &t, &[1.0, 1.0], NOISE).unwrap();
        assert!(rel(sol.powers_w[0][0], 10.0 * NOISE / 2e-9) < 1e-14);
        assert!(rel(sol.powers_w[1][0], 30.0 * NOISE / 5e-9) < 1e-14);
    }

    #[test]
    fn symmetric_pair_matches_hand_elimination() {
        let g = [[4e-9, 1e-10], [1e-10, 4e-9]];
        let gamma = [20.0, 20.0];
        let sol = solve_power_control(&two_cell(g), &[vec![20.0], vec![20.0]], &[1.0, 1.0], NOISE).unwrap();
        let hand = oracle::access_solve_2cell(g, gamma, NOISE);
        // symmetric: v = noise * Gamma / (g - Gamma * c)
        let closed = NOISE * 20.0 / (4e-9 - 20.0 * 1e-10);
        assert!(rel(hand[0], closed) < 1e-12);
        assert!(rel(sol.powers_w[0][0], hand[0]) < 1e-12);
        assert!(rel(sol.powers_w[1][0], hand[1]) < 1e-12);
    }

    #[test]
    fn intra_cell_row_uses_serving_gain() {
        // one cell, two UEs: v_n g_n / G_n = v_other g_n + noise
        let ch = gains_only(vec![vec![vec![1e-8, 2e-8]]]);
        let (a, _) = build_sinr_system(&ch, &[vec![0.5, 0.25]], NOISE).unwrap();
        assert!(rel(a[(0, 0)], 2e-8) < 1e-15);
        assert_eq!(a[(0, 1)], -1e-8);
        assert_eq!(a[(1, 0)], -2e-8);
        let sol = solve_power_control(&ch, &[vec![0.5, 0.25]], &[1.0], NOISE).unwrap();
        let r = eval_access_rates(&ch, &sol.powers_w, NOISE).unwrap();
        assert!(rel(r[0][0], 1.5f64.ln()) < 1e-12);
        assert!(rel(r[0][1], 1.25f64.ln()) < 1e-12);
    }

    #[test]
    fn outside_region_is_infeasible_not_error() {
        let g = [[1e-9, 5e-10], [5e-10, 1e-9]];
        let mut gamma = 0.5;
        let mut seen_infeasible = false;
        for _ in 0..20 {
            let sol = solve_power_control(&two_cell(g), &[vec![gamma], vec![gamma]], &[1.0, 1.0], NOISE).unwrap();
            if !sol.feasible {
                assert!(sol.powers_w.is_empty());
                assert!(matches!(sol.status, AccessStatus::NegativePower | AccessStatus::Singular));
                seen_infeasible = true;
                break;
            }
            gamma *= 1.5;
        }
        assert!(seen_infeasible);
        // exactly on the boundary: a singular coupling matrix
        let sol = solve_power_control(&two_cell(g), &[vec![2.0], vec![2.0]], &[1.0, 1.0], NOISE).unwrap();
        assert_eq!(sol.status, AccessStatus::Singular);
    }

    #[test]
    fn zero_targets_and_errors() {
        let ch = two_cell([[2e-9, 1e-10], [1e-10, 5e-9]]);
        let sol = solve_power_control(&ch, &[vec![0.0], vec![0.0]], &[1.0, 1.0], NOISE).unwrap();
        assert!(sol.feasible);
        assert_eq!(sol.total_power_w(), 0.0);
        let sol = solve_power_control(&ch, &[vec![0.0], vec![5.0]], &[1.0, 1.0], NOISE).unwrap();
        assert_eq!(sol.powers_w[0][0], 0.0);
        assert!(rel(sol.powers_w[1][0], 5.0 * NOISE / 5e-9) < 1e-14);

        assert!(matches!(solve_power_control(&ch, &[vec![1.0]], &[1.0, 1.0], NOISE), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(solve_power_control(&ch, &[vec![1.0], vec![1.0]], &[1.0], NOISE), Err(Error::DimensionMismatch { .. })));
        assert!(build_sinr_system(&ch, &[vec![0.0], vec![1.0]], NOISE).is_err());
        let dead = two_cell([[0.0, 1e-10], [1e-10, 5e-9]]);
        assert!(build_sinr_system(&dead, &[vec![1.0], vec![1.0]], NOISE).is_err());
        let sol = solve_power_control(&dead, &[vec![1.0], vec![1.0]], &[1.0, 1.0], NOISE).unwrap();
        assert!(!sol.feasible);
    }

    #[test]
    fn zero_powers_zero_rates() {
        let ch = two_cell([[2e-9, 1e-10], [1e-10, 5e-9]]);
        let r = eval_access_rates(&ch, &[vec![0.0], vec![0.0]], NOISE).unwrap();
        assert_eq!(r, vec![vec![0.0], vec![0.0]]);
        let r = eval_access_rates(&gains_only(vec![vec![vec![2e-9]]]), &[vec![1e-3]], NOISE).unwrap();
        assert!(rel(r[0][0], (1e-3 * 2e-9 / NOISE).ln_1p()) < 1e-14);
    }

    #[test]
    fn grid_oracle_confirms_tight_constraints() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let g = [
                [rng.random_range(0.5..2.0) * 1e-9, rng.random_range(0.0..0.05) * 1e-9],
                [rng.random_range(0.0..0.05) * 1e-9, rng.random_range(0.5..2.0) * 1e-9],
            ];
            let gamma = [rng.random_range(5.0..15.0), rng.random_range(5.0..15.0)];
            let sol = solve_power_control(&two_cell(g), &[vec![gamma[0]], vec![gamma[1]]], &[1.0, 1.0], NOISE).unwrap();
            assert!(sol.feasible);
            let v = [sol.powers_w[0][0], sol.powers_w[1][0]];
            let (best, _) = oracle::access_grid_min(g, gamma, NOISE, [1.0, 1.0], [2.0 * v[0], 2.0 * v[1]], 200_000).unwrap();
            let sum = v[0] + v[1];
            assert!(best >= sum * (1.0 - 1e-9));
            assert!(rel(best, sum) < 1e-3);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn round_trip_and_scaling(seed in any::<u64>(), c in 0.1f64..10.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let per_cell: Vec<usize> = (0..rng.random_range(1..4)).map(|_| rng.random_range(1..3)).collect();
            let ch = random_gains(&mut rng, &per_cell, 1e-3);
            let targets: Vec<Vec<f64>> = per_cell.iter().map(|&n| (0..n).map(|_| rng.random_range(0.05..0.6)).collect()).collect();
            let budgets = vec![1.0; per_cell.len()];
            let sol = solve_power_control(&ch, &targets, &budgets, NOISE).unwrap();
            prop_assume!(sol.feasible);
            let rates = eval_access_rates(&ch, &sol.powers_w, NOISE).unwrap();
            for (rc, tc) in rates.iter().zip(&targets) {
                for (r, t) in rc.iter().zip(tc) {
                    prop_assert!(rel(*r, t.ln_1p()) < 1e-9);
                }
            }
            let scaled_budgets: Vec<f64> = budgets.iter().map(|b| b * c).collect();
            let scaled = solve_power_control(&ch, &targets, &scaled_budgets, NOISE * c).unwrap();
            for (a, b) in scaled.powers_w.iter().flatten().zip(sol.powers_w.iter().flatten()) {
                prop_assert!(rel(*a, b * c) < 1e-12);
            }
        }

        #[test]
        fn raising_a_target_raises_every_power(seed in any::<u64>(), bump in 0.01f64..0.5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let per_cell = vec![1, 2, 1];
            let ch = random_gains(&mut rng, &per_cell, 1e-2);
            let targets: Vec<Vec<f64>> = per_cell.iter().map(|&n| (0..n).map(|_| rng.random_range(0.05..0.4)).collect()).collect();
            let base = solve_power_control(&ch, &targets, &[1.0; 3], NOISE).unwrap();
            prop_assume!(base.feasible);
            let mut raised = targets.clone();
            let m = rng.random_range(0..3);
            let n = rng.random_range(0..per_cell[m]);
            raised[m][n] += bump;
            let up = solve_power_control(&ch, &raised, &[1.0; 3], NOISE).unwrap();
            prop_assume!(up.status != AccessStatus::NegativePower && up.status != AccessStatus::Singular);
            for (a, b) in up.powers_w.iter().flatten().zip(base.powers_w.iter().flatten()) {
                prop_assert!(*a >= *b * (1.0 - 1e-12));
            }
        }
    }
}

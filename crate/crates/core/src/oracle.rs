//! Independent reference computations for verification.
//!
//! Nothing here calls into the solvers: rates are evaluated from their
//! definitions with explicit sums and 2x2 determinants, and minimizers are
//! found by grid search. Used by the test suites and by `selftest`.

use crate::{CVector, Complex64};

/// DPC rates from the scalar definitions, rank-one covariances `w w^H`.
/// `order[pos]` is the user at encoding position `pos`.
pub fn dpc_rates_scalar(channels: &[CVector], precoders: &[CVector], order: &[usize], noise: f64, share: f64) -> Vec<f64> {
    let m = channels.len();
    let mut rates = vec![0.0; m];
    for pos in 0..m {
        let u = order[pos];
        let h = &channels[u];
        let received = |k: usize| -> f64 {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..h.len() {
                acc += h[i].conj() * precoders[k][i];
            }
            acc.norm_sqr()
        };
        let mut theta = noise;
        for &k in &order[..pos] {
            theta += received(k);
        }
        let psi = theta + received(u);
        rates[u] = share * (psi / theta).ln();
    }
    rates
}

fn det2(a: [[Complex64; 2]; 2]) -> f64 {
    (a[0][0] * a[1][1] - a[0][1] * a[1][0]).re
}

/// `noise * I + sum_k p_k h_k h_k^H` for 2-antenna channels.
fn cov2(noise: f64, terms: &[(&CVector, f64)]) -> [[Complex64; 2]; 2] {
    let mut a = [[Complex64::new(0.0, 0.0); 2]; 2];
    a[0][0].re = noise;
    a[1][1].re = noise;
    for (h, p) in terms {
        for r in 0..2 {
            for c in 0..2 {
                a[r][c] += h[r] * h[c].conj() * *p;
            }
        }
    }
    a
}

/// Dual uplink rates for two users on two antennas via explicit
/// determinants. `order = [first, second]`; the second-position user is
/// decoded last and sees only noise.
pub fn dual_rates_2x2(channels: &[CVector], powers: [f64; 2], order: [usize; 2], noise: f64) -> [f64; 2] {
    let (a, b) = (order[0], order[1]);
    let mut out = [0.0; 2];
    let only_b = cov2(noise, &[(&channels[b], powers[b])]);
    let both = cov2(noise, &[(&channels[a], powers[a]), (&channels[b], powers[b])]);
    let none = cov2(noise, &[]);
    out[b] = (det2(only_b) / det2(none)).ln();
    out[a] = (det2(both) / det2(only_b)).ln();
    out
}

/// Grid minimizer of `p_0 + p_1` subject to dual uplink rates at least the
/// targets, on the lattice `step * (i, j)` over `[0, extent]^2`.
///
/// User 1's rate increases with `p_1` and user 0's decreases with it, so for
/// each `p_0` the smallest feasible lattice `p_1` is the smallest one meeting
/// user 1's target, located by bisection. Returns the best sum found, or
/// `None` when no lattice point is feasible.
pub fn backhaul_grid_min(
    channels: &[CVector],
    targets: [f64; 2],
    order: [usize; 2],
    noise: f64,
    step: f64,
    extent: f64,
) -> Option<(f64, [f64; 2])> {
    let n = (extent / step).ceil() as usize;
    let rates = |p: [f64; 2]| dual_rates_2x2(channels, p, order, noise);
    let mut best: Option<(f64, [f64; 2])> = None;
    for i in 0..=n {
        let p0 = i as f64 * step;
        let second_ok = |j: usize| rates([p0, j as f64 * step])[1] >= targets[1];
        if !second_ok(n) {
            continue;
        }
        let (mut lo, mut hi) = (0usize, n);
        if second_ok(0) {
            hi = 0;
        }
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if second_ok(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let p = [p0, hi as f64 * step];
        if rates(p)[0] < targets[0] {
            continue;
        }
        let sum = p[0] + p[1];
        if best.is_none_or(|(b, _)| sum < b) {
            best = Some((sum, p));
        }
    }
    best
}

/// Two single-UE cells: `gains[j][m]` is |g|^2 from ScBS `j` to the UE of cell `m`.
pub fn access_sinr_2cell(gains: [[f64; 2]; 2], v: [f64; 2], noise: f64) -> [f64; 2] {
    [v[0] * gains[0][0] / (v[1] * gains[1][0] + noise), v[1] * gains[1][1] / (v[0] * gains[0][1] + noise)]
}

/// Hand elimination of the two-cell SINR equalities.
pub fn access_solve_2cell(gains: [[f64; 2]; 2], gamma: [f64; 2], noise: f64) -> [f64; 2] {
    // v0 g00 / G0 - v1 g10 = s ;  -v0 g01 + v1 g11 / G1 = s
    let a = gains[0][0] / gamma[0];
    let b = gains[1][0];
    let c = gains[0][1];
    let d = gains[1][1] / gamma[1];
    let det = a * d - b * c;
    [noise * (d + b) / det, noise * (a + c) / det]
}

/// Grid minimizer of `v_0 + v_1` subject to SINR at least the targets and
/// the per-cell budgets, over the lattice of `n + 1` points per axis on
/// `[0, extent[0]] x [0, extent[1]]`.
///
/// For each `v_0` the second UE's constraint holds on an upward-closed set
/// of `v_1` and the first UE's on a downward-closed one, so the smallest
/// feasible lattice `v_1` is the smallest one meeting the second constraint,
/// found by bisection. This visits the same lattice an exhaustive scan would.
pub fn access_grid_min(
    gains: [[f64; 2]; 2],
    gamma: [f64; 2],
    noise: f64,
    budgets: [f64; 2],
    extent: [f64; 2],
    n: usize,
) -> Option<(f64, [f64; 2])> {
    let at = |axis: usize, i: usize| extent[axis] * i as f64 / n as f64;
    let mut best: Option<(f64, [f64; 2])> = None;
    for i in 0..=n {
        let v0 = at(0, i);
        if v0 > budgets[0] {
            break;
        }
        let second_ok = |j: usize| access_sinr_2cell(gains, [v0, at(1, j)], noise)[1] >= gamma[1];
        if !second_ok(n) {
            continue;
        }
        let (mut lo, mut hi) = (0usize, n);
        if second_ok(0) {
            hi = 0;
        }
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if second_ok(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let v = [v0, at(1, hi)];
        let s = access_sinr_2cell(gains, v, noise);
        if v[1] <= budgets[1] && s[0] >= gamma[0] {
            let sum = v[0] + v[1];
            if best.is_none_or(|(b, _)| sum < b) {
                best = Some((sum, v));
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_elimination_satisfies_equalities() {
        let g = [[3.0, 0.2], [0.1, 2.0]];
        let gamma = [4.0, 5.0];
        let v = access_solve_2cell(g, gamma, 0.5);
        let s = access_sinr_2cell(g, v, 0.5);
        assert!((s[0] - 4.0).abs() < 1e-12 && (s[1] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn dual_rates_single_antenna_like() {
        let c = |x: f64| Complex64::new(x, 0.0);
        let h = vec![CVector::from_vec(vec![c(1.0), c(0.0)]), CVector::from_vec(vec![c(0.0), c(2.0)])];
        let r = dual_rates_2x2(&h, [3.0, 1.0], [0, 1], 1.0);
        assert!((r[0] - 4f64.ln()).abs() < 1e-12);
        assert!((r[1] - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn backhaul_grid_agrees_with_a_full_scan() {
        let c = Complex64::new;
        let h = vec![CVector::from_vec(vec![c(1.0, 0.2), c(0.3, -0.5)]), CVector::from_vec(vec![c(-0.4, 0.1), c(0.9, 0.6)])];
        for order in [[0, 1], [1, 0]] {
            let (targets, step, extent) = ([0.8, 1.1], 0.01, 3.0);
            let n = 300;
            let mut full: Option<(f64, [f64; 2])> = None;
            for i in 0..=n {
                for j in 0..=n {
                    let p = [i as f64 * step, j as f64 * step];
                    let r = dual_rates_2x2(&h, p, order, 0.1);
                    if r[0] >= targets[0] && r[1] >= targets[1] && full.is_none_or(|(b, _)| p[0] + p[1] < b) {
                        full = Some((p[0] + p[1], p));
                    }
                }
            }
            assert!(full.is_some());
            assert_eq!(backhaul_grid_min(&h, targets, order, 0.1, step, extent), full);
        }
    }

    #[test]
    fn access_grid_agrees_with_a_full_scan() {
        let g = [[2.0, 0.3], [0.2, 1.5]];
        let gamma = [3.0, 2.0];
        let (budgets, extent, n) = ([1.5, 1.5], [2.0, 2.0], 300);
        let mut full: Option<(f64, [f64; 2])> = None;
        for i in 0..=n {
            for j in 0..=n {
                let v = [extent[0] * i as f64 / n as f64, extent[1] * j as f64 / n as f64];
                let s = access_sinr_2cell(g, v, 0.1);
                if v[0] <= budgets[0]
                    && v[1] <= budgets[1]
                    && s[0] >= gamma[0]
                    && s[1] >= gamma[1]
                    && full.is_none_or(|(b, _)| v[0] + v[1] < b)
                {
                    full = Some((v[0] + v[1], v));
                }
            }
        }
        assert_eq!(access_grid_min(g, gamma, 0.1, budgets, extent, n), full);
    }
}

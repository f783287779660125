//! Backhaul precoding for the DPC-coded MISO broadcast channel.
//!
//! The minimum-power precoders for a fixed encoding order are found in the
//! dual uplink: a backward sweep over the encoding positions gives the dual
//! powers in closed form, and the uplink-downlink covariance transformation
//! maps them to rank-one downlink covariances with the same rates and the
//! same total power. A zero-forcing baseline shares the solution type.
//!
//! Per-user quantities (`dual_powers_w`, `precoders`, rates, targets) are
//! always indexed by user, never by encoding position.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::numerics::{hpd_inv_sqrt, HermitianMatrix, HpdFactor};
use crate::{CVector, Complex64, Error, Result};

/// Largest user count accepted by the exhaustive order search.
pub const MAX_EXHAUSTIVE_USERS: usize = 8;

/// Relative tolerance used when comparing precoders from the two routes.
pub const PRECODER_AGREEMENT_TOL: f64 = 1e-8;

/// DPC encoding order. Position 0 is encoded last and sees no downlink
/// interference; position `m` sees the users at positions `0..m`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EncodingOrder(Vec<usize>);

impl EncodingOrder {
    pub fn identity(users: usize) -> Self {
        Self((0..users).collect())
    }

    pub fn new(perm: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; perm.len()];
        for &u in &perm {
            if u >= perm.len() || std::mem::replace(&mut seen[u], true) {
                return Err(Error::InvalidArgument(format!("{perm:?} is not a permutation")));
            }
        }
        Ok(Self(perm))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// User encoded at `position`.
    pub fn user_at(&self, position: usize) -> usize {
        self.0[position]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderStrategy {
    Identity,
    /// Weakest channel first.
    NormAscending,
    /// Minimum total dual power over all `M!` orders.
    Exhaustive,
}

impl OrderStrategy {
    /// Exhaustive search for small networks, norm-ascending beyond four cells.
    pub fn default_for(users: usize) -> Self {
        if users <= 4 {
            OrderStrategy::Exhaustive
        } else {
            OrderStrategy::NormAscending
        }
    }
}

/// Radio parameters shared by the backhaul solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackhaulParams {
    pub noise_w: f64,
    pub power_budget_w: f64,
    /// Share `s` of the frame spent on the backhaul; rates are `s * ln(.)`.
    pub frame_share: f64,
}

impl BackhaulParams {
    pub fn new(noise_w: f64, power_budget_w: f64) -> Self {
        Self { noise_w, power_budget_w, frame_share: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackhaulSolution {
    pub order: EncodingOrder,
    /// Dual uplink powers for DPC; per-link transmit powers for ZFBF.
    pub dual_powers_w: Vec<f64>,
    pub precoders: Vec<CVector>,
    pub achieved_rates_nats: Vec<f64>,
    /// `+inf` when ZFBF cannot separate the links.
    pub total_power_w: f64,
    pub feasible: bool,
}

impl BackhaulSolution {
    /// Sum of `||w_m||^2`.
    pub fn precoder_power(&self) -> f64 {
        self.precoders.iter().map(|w| w.norm_squared()).sum()
    }
}

fn check_dims(channels: &[CVector], per_user: usize, order: Option<&EncodingOrder>) -> Result<usize> {
    let m = channels.len();
    if per_user != m {
        return Err(Error::DimensionMismatch { expected: m, found: per_user });
    }
    if let Some(order) = order {
        if order.len() != m {
            return Err(Error::DimensionMismatch { expected: m, found: order.len() });
        }
    }
    let l = channels.first().map_or(0, |h| h.len());
    for h in channels {
        if h.len() != l {
            return Err(Error::DimensionMismatch { expected: l, found: h.len() });
        }
    }
    Ok(l)
}

/// DPC rates `s * ln(Psi / Theta)` for general PSD covariances.
pub fn dpc_rates(
    channels: &[CVector],
    covariances: &[HermitianMatrix],
    order: &EncodingOrder,
    noise_w: f64,
    frame_share: f64,
) -> Result<Vec<f64>> {
    let l = check_dims(channels, covariances.len(), Some(order))?;
    for (user, w) in covariances.iter().enumerate() {
        if w.dim() != l {
            return Err(Error::DimensionMismatch { expected: l, found: w.dim() });
        }
        let ev = w.eigenvalues();
        let top = ev.last().copied().unwrap_or(0.0).max(0.0);
        if ev.first().is_some_and(|&lo| lo < -1e-10 * top.max(f64::MIN_POSITIVE)) {
            return Err(Error::NotPsd { user });
        }
    }
    let gains = |u: usize, k: usize| covariances[k].sandwich(&channels[u]).max(0.0);
    Ok(downlink_rates(order, noise_w, frame_share, gains))
}

/// DPC rates for rank-one covariances `w w^H`.
pub fn dpc_rates_from_precoders(
    channels: &[CVector],
    precoders: &[CVector],
    order: &EncodingOrder,
    noise_w: f64,
    frame_share: f64,
) -> Result<Vec<f64>> {
    let l = check_dims(channels, precoders.len(), Some(order))?;
    if let Some(w) = precoders.iter().find(|w| w.len() != l) {
        return Err(Error::DimensionMismatch { expected: l, found: w.len() });
    }
    let gains = |u: usize, k: usize| channels[u].dotc(&precoders[k]).norm_sqr();
    Ok(downlink_rates(order, noise_w, frame_share, gains))
}

// `gain(u, k)` is the power of user k's signal received by user u.
fn downlink_rates(order: &EncodingOrder, noise_w: f64, frame_share: f64, gain: impl Fn(usize, usize) -> f64) -> Vec<f64> {
    let mut rates = vec![0.0; order.len()];
    for pos in 0..order.len() {
        let u = order.user_at(pos);
        let theta = noise_w + (0..pos).map(|k| gain(u, order.user_at(k))).sum::<f64>();
        let signal = gain(u, u);
        rates[u] = frame_share * (signal / theta).ln_1p();
    }
    rates
}

/// Dual uplink rates `ln|Psi_bar| - ln|Theta_bar|` under successive decoding
/// in the reverse of the encoding order.
pub fn dual_uplink_rates(channels: &[CVector], dual_powers: &[f64], order: &EncodingOrder, noise_w: f64) -> Result<Vec<f64>> {
    let l = check_dims(channels, dual_powers.len(), Some(order))?;
    if dual_powers.iter().any(|p| !(*p >= 0.0)) {
        return Err(Error::InvalidArgument("dual powers must be nonnegative".into()));
    }
    let mut rates = vec![0.0; channels.len()];
    let mut theta_bar = HermitianMatrix::scaled_identity(l, noise_w);
    let mut ln_det_theta = HpdFactor::new(&theta_bar)?.ln_det();
    for pos in (0..order.len()).rev() {
        let u = order.user_at(pos);
        theta_bar.add_outer(&channels[u], dual_powers[u]);
        let ln_det_psi = HpdFactor::new(&theta_bar)?.ln_det();
        rates[u] = (ln_det_psi - ln_det_theta).max(0.0);
        ln_det_theta = ln_det_psi;
    }
    Ok(rates)
}

/// Minimum dual powers meeting the rate targets (nats) with equality.
///
/// Backward sweep: the interference covariance of position `m` only involves
/// positions `m+1..M`, so each power follows in closed form from the ones
/// already fixed, `w_bar = (exp(R) - 1) / (h^H Theta_bar^-1 h)`.
pub fn solve_dual_powers(channels: &[CVector], rate_targets: &[f64], order: &EncodingOrder, noise_w: f64) -> Result<Vec<f64>> {
    let l = check_dims(channels, rate_targets.len(), Some(order))?;
    if let Some(r) = rate_targets.iter().find(|r| !(**r >= 0.0 && r.is_finite())) {
        return Err(Error::InvalidArgument(format!("rate target {r} must be finite and nonnegative")));
    }
    let mut powers = vec![0.0; channels.len()];
    let mut theta_bar = HermitianMatrix::scaled_identity(l, noise_w);
    for pos in (0..order.len()).rev() {
        let u = order.user_at(pos);
        let target = rate_targets[u];
        if target == 0.0 {
            continue;
        }
        let gain = HpdFactor::new(&theta_bar)?.quad_form(&channels[u])?;
        if gain <= 0.0 {
            return Err(Error::ZeroChannel { user: u });
        }
        powers[u] = target.exp_m1() / gain;
        theta_bar.add_outer(&channels[u], powers[u]);
    }
    Ok(powers)
}

/// Uplink interference-plus-noise covariances `Theta_bar` for every user.
fn dual_interference(
    channels: &[CVector],
    dual_powers: &[f64],
    order: &EncodingOrder,
    noise_w: f64,
    l: usize,
) -> Vec<HermitianMatrix> {
    let mut out = vec![HermitianMatrix::scaled_identity(l, noise_w); channels.len()];
    let mut acc = HermitianMatrix::scaled_identity(l, noise_w);
    for pos in (0..order.len()).rev() {
        let u = order.user_at(pos);
        out[u] = acc.clone();
        acc.add_outer(&channels[u], dual_powers[u]);
    }
    out
}

/// Maps dual uplink powers to downlink DPC precoders.
///
/// Forward sweep over the encoding positions: with `Theta` the downlink
/// interference-plus-noise of the user (from the precoders already built),
/// `w = Theta_bar^{-1/2} u sqrt(Theta * w_bar)` where `u` is the unit vector
/// along `Theta_bar^{-1/2} h`. The covariance `w w^H` is the rank-one output
/// of the MAC-to-BC transformation, so rates and total power carry over.
pub fn duality_transform(channels: &[CVector], dual_powers: &[f64], order: &EncodingOrder, noise_w: f64) -> Result<Vec<CVector>> {
    let l = check_dims(channels, dual_powers.len(), Some(order))?;
    let theta_bars = dual_interference(channels, dual_powers, order, noise_w, l);
    let mut precoders = vec![CVector::zeros(l); channels.len()];
    for pos in 0..order.len() {
        let u = order.user_at(pos);
        let w_bar = dual_powers[u];
        if w_bar == 0.0 {
            continue;
        }
        let h = &channels[u];
        let theta = noise_w + (0..pos).map(|k| h.dotc(&precoders[order.user_at(k)]).norm_sqr()).sum::<f64>();
        let inv_sqrt = hpd_inv_sqrt(&theta_bars[u])?;
        let whitened = inv_sqrt.as_matrix() * h;
        let norm = whitened.norm();
        if norm == 0.0 {
            return Err(Error::ZeroChannel { user: u });
        }
        let direction = inv_sqrt.as_matrix() * (whitened / Complex64::new(norm, 0.0));
        precoders[u] = direction * Complex64::new((theta * w_bar).sqrt(), 0.0);
    }
    Ok(precoders)
}

/// Closed-form downlink precoders straight from the rate targets:
/// `w = sqrt((exp(R) - 1) * Theta) * Theta_bar^-1 h / (h^H Theta_bar^-1 h)`.
///
/// Shares nothing with [`duality_transform`] beyond the dual powers that set
/// `Theta_bar`; it uses a linear solve where the transform uses the inverse
/// square root, so [`cross_check_precoders`] on the two outputs is a genuine
/// consistency check.
pub fn closed_form_precoders(
    channels: &[CVector],
    rate_targets: &[f64],
    order: &EncodingOrder,
    noise_w: f64,
) -> Result<Vec<CVector>> {
    let l = check_dims(channels, rate_targets.len(), Some(order))?;
    let dual = solve_dual_powers(channels, rate_targets, order, noise_w)?;
    let theta_bars = dual_interference(channels, &dual, order, noise_w, l);
    let mut precoders = vec![CVector::zeros(l); channels.len()];
    for pos in 0..order.len() {
        let u = order.user_at(pos);
        if rate_targets[u] == 0.0 {
            continue;
        }
        let h = &channels[u];
        let theta = noise_w + (0..pos).map(|k| h.dotc(&precoders[order.user_at(k)]).norm_sqr()).sum::<f64>();
        let mmse = HpdFactor::new(&theta_bars[u])?.solve(h)?;
        let gain = h.dotc(&mmse).re;
        if gain <= 0.0 {
            return Err(Error::ZeroChannel { user: u });
        }
        let scale = (rate_targets[u].exp_m1() * theta).sqrt() / gain;
        precoders[u] = mmse * Complex64::new(scale, 0.0);
    }
    Ok(precoders)
}

/// Checks that `candidate[m]` equals `reference[m]` up to a unit-modulus
/// phase, to `tol` relative in norm.
pub fn cross_check_precoders(reference: &[CVector], candidate: &[CVector], tol: f64) -> Result<()> {
    if reference.len() != candidate.len() {
        return Err(Error::DimensionMismatch { expected: reference.len(), found: candidate.len() });
    }
    for (user, (a, b)) in reference.iter().zip(candidate).enumerate() {
        let (na, nb) = (a.norm(), b.norm());
        if na == 0.0 && nb == 0.0 {
            continue;
        }
        let power_gap = (na * na - nb * nb).abs() / (na * na).max(nb * nb);
        if power_gap > tol {
            return Err(Error::PrecoderMismatch {
                user,
                detail: format!(
                    "power {:.6e} vs {:.6e} (relative gap {power_gap:.3e}, ratio of norms {:.6e})",
                    na * na,
                    nb * nb,
                    nb / na
                ),
            });
        }
        let inner = b.dotc(a);
        let phase = if inner.norm() > 0.0 { inner / inner.norm() } else { Complex64::new(1.0, 0.0) };
        let gap = (a - b * phase).norm() / na.max(nb);
        if gap > tol {
            return Err(Error::PrecoderMismatch {
                user,
                detail: format!("directions differ beyond a common phase (relative gap {gap:.3e})"),
            });
        }
    }
    Ok(())
}

/// Picks a DPC encoding order.
pub fn choose_order(channels: &[CVector], rate_targets: &[f64], noise_w: f64, strategy: OrderStrategy) -> Result<EncodingOrder> {
    let m = channels.len();
    check_dims(channels, rate_targets.len(), None)?;
    match strategy {
        OrderStrategy::Identity => Ok(EncodingOrder::identity(m)),
        OrderStrategy::NormAscending => {
            let mut idx: Vec<usize> = (0..m).collect();
            idx.sort_by(|&a, &b| channels[a].norm_squared().total_cmp(&channels[b].norm_squared()));
            EncodingOrder::new(idx)
        }
        OrderStrategy::Exhaustive => {
            if m > MAX_EXHAUSTIVE_USERS {
                return Err(Error::OrderSearchTooLarge { users: m, max: MAX_EXHAUSTIVE_USERS });
            }
            let mut best: Option<(f64, Vec<usize>)> = None;
            // itertools yields permutations of a sorted input lexicographically
            for perm in (0..m).permutations(m) {
                let order = EncodingOrder(perm);
                let total: f64 = solve_dual_powers(channels, rate_targets, &order, noise_w)?.iter().sum();
                // ties within rounding keep the lexicographically first order
                let better = best.as_ref().is_none_or(|(b, _)| total < b * (1.0 - 1e-12));
                if better {
                    best = Some((total, order.0));
                }
            }
            let (_, perm) = best.expect("at least one permutation");
            Ok(EncodingOrder(perm))
        }
    }
}

/// Minimum-power DPC backhaul for the given per-user rate targets (nats).
///
/// Targets are divided by the frame share before solving, so achieved rates
/// (which carry the factor `s`) equal the targets.
pub fn solve_dpc(
    channels: &[CVector],
    rate_targets: &[f64],
    params: &BackhaulParams,
    strategy: OrderStrategy,
) -> Result<BackhaulSolution> {
    let effective: Vec<f64> = rate_targets.iter().map(|r| r / params.frame_share).collect();
    let order = choose_order(channels, &effective, params.noise_w, strategy)?;
    solve_dpc_with_order(channels, rate_targets, params, order)
}

pub fn solve_dpc_with_order(
    channels: &[CVector],
    rate_targets: &[f64],
    params: &BackhaulParams,
    order: EncodingOrder,
) -> Result<BackhaulSolution> {
    let effective: Vec<f64> = rate_targets.iter().map(|r| r / params.frame_share).collect();
    let dual = solve_dual_powers(channels, &effective, &order, params.noise_w)?;
    let precoders = duality_transform(channels, &dual, &order, params.noise_w)?;
    let achieved = dpc_rates_from_precoders(channels, &precoders, &order, params.noise_w, params.frame_share)?;
    let total: f64 = precoders.iter().map(|w| w.norm_squared()).sum();
    Ok(BackhaulSolution {
        order,
        dual_powers_w: dual,
        precoders,
        achieved_rates_nats: achieved,
        total_power_w: total,
        feasible: total <= params.power_budget_w,
    })
}

/// Rates of linearly precoded links, all other streams treated as noise.
pub fn linear_precoding_rates(channels: &[CVector], precoders: &[CVector], noise_w: f64, frame_share: f64) -> Vec<f64> {
    channels
        .iter()
        .enumerate()
        .map(|(m, h)| {
            let signal = h.dotc(&precoders[m]).norm_sqr();
            let interference: f64 =
                precoders.iter().enumerate().filter(|(k, _)| *k != m).map(|(_, w)| h.dotc(w).norm_sqr()).sum();
            frame_share * (signal / (noise_w + interference)).ln_1p()
        })
        .collect()
}

/// Reciprocal condition number below which the stacked channel is treated as
/// rank deficient.
pub const ZF_RCOND_MIN: f64 = 1e-12;

/// Zero-forcing baseline: normalized columns of the right pseudo-inverse of
/// the stacked channel matrix, each scaled to meet its rate target exactly.
///
/// More links than antennas, or a rank-deficient channel, yields an
/// infeasible solution with infinite power rather than an error.
pub fn zfbf_solve(channels: &[CVector], rate_targets: &[f64], params: &BackhaulParams) -> Result<BackhaulSolution> {
    let l = check_dims(channels, rate_targets.len(), None)?;
    let m = channels.len();
    let infeasible = || BackhaulSolution {
        order: EncodingOrder::identity(m),
        dual_powers_w: vec![f64::INFINITY; m],
        precoders: vec![CVector::zeros(l); m],
        achieved_rates_nats: vec![0.0; m],
        total_power_w: f64::INFINITY,
        feasible: false,
    };
    if m > l {
        return Ok(infeasible());
    }
    // rows are h_m^H
    let stacked = DMatrix::from_fn(m, l, |r, c| channels[r][c].conj());
    let gram = &stacked * stacked.adjoint();
    let gram = HermitianMatrix::new(gram)?;
    let ev = gram.eigenvalues();
    let (lo, hi) = (ev[0], ev[ev.len() - 1]);
    if !(hi > 0.0) || lo / hi < ZF_RCOND_MIN {
        return Ok(infeasible());
    }
    let factor = match HpdFactor::new(&gram) {
        Ok(f) => f,
        Err(Error::NotPositiveDefinite) => return Ok(infeasible()),
        Err(e) => return Err(e),
    };
    let mut precoders = Vec::with_capacity(m);
    let mut powers = Vec::with_capacity(m);
    for k in 0..m {
        let mut e = DVector::zeros(m);
        e[k] = Complex64::new(1.0, 0.0);
        let column = stacked.adjoint() * factor.solve(&e)?;
        let col_norm_sq = column.norm_squared();
        // h_k^H (column / |column|) = 1 / |column|
        let power = (rate_targets[k] / params.frame_share).exp_m1() * params.noise_w * col_norm_sq;
        powers.push(power);
        precoders.push(column * Complex64::new((power / col_norm_sq).sqrt(), 0.0));
    }
    let achieved = linear_precoding_rates(channels, &precoders, params.noise_w, params.frame_share);
    let total: f64 = powers.iter().sum();
    Ok(BackhaulSolution {
        order: EncodingOrder::identity(m),
        dual_powers_w: powers,
        precoders,
        achieved_rates_nats: achieved,
        total_power_w: total,
        feasible: total <= params.power_budget_w,
    })
}

//! Static network description, unit conversions, pathloss and Rayleigh
//! channel sampling.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{CVector, Complex64, Error, Result};

/// Default carrier frequency in GHz.
pub const DEFAULT_CARRIER_GHZ: f64 = 2.0;

pub fn db_to_linear(x_db: f64) -> f64 {
    10f64.powf(x_db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn dbm_to_watts(x_dbm: f64) -> f64 {
    db_to_linear(x_dbm - 30.0)
}

/// `-inf` for zero power.
pub fn watts_to_dbm(w: f64) -> f64 {
    linear_to_db(w) + 30.0
}

/// SINR target corresponding to a rate in nats: `exp(R) - 1`.
pub fn rate_to_sinr(rate_nats: f64) -> f64 {
    rate_nats.exp_m1()
}

/// Rate in nats carried at a given linear SINR: `ln(1 + sinr)`.
pub fn sinr_to_rate(sinr: f64) -> f64 {
    sinr.ln_1p()
}

fn check_positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be positive and finite, got {value}")))
    }
}

/// Gateway-to-ScBS pathloss in dB.
pub fn backhaul_pathloss_db(distance_m: f64, fc_ghz: f64) -> Result<f64> {
    check_positive("distance", distance_m)?;
    check_positive("carrier frequency", fc_ghz)?;
    Ok(32.4 + 20.0 * fc_ghz.log10() + 31.9 * distance_m.log10())
}

/// ScBS-to-UE pathloss in dB.
pub fn access_pathloss_db(distance_m: f64, fc_ghz: f64) -> Result<f64> {
    check_positive("distance", distance_m)?;
    check_positive("carrier frequency", fc_ghz)?;
    Ok(17.3 + 24.9 * fc_ghz.log10() + 38.3 * distance_m.log10())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UeConfig {
    /// Distance from every ScBS to this UE; entry `m` of a UE served by cell
    /// `m` is the serving-link distance.
    pub distances_to_scbs_m: Vec<f64>,
    pub rate_req_nats: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellConfig {
    pub backhaul_distance_m: f64,
    pub scbs_power_budget_w: f64,
    pub ues: Vec<UeConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkScenario {
    pub num_antennas: usize,
    pub cells: Vec<CellConfig>,
    pub carrier_freq_ghz: f64,
    pub noise_power_w: f64,
    pub gateway_power_budget_w: f64,
    /// Fraction of the frame used by the backhaul, in (0, 1].
    pub backhaul_frame_share: f64,
    pub rng_seed: u64,
}

impl NetworkScenario {
    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn num_ues(&self) -> usize {
        self.cells.iter().map(|c| c.ues.len()).sum()
    }

    /// Per-UE requirements in nats, grouped by cell.
    pub fn rate_requirements(&self) -> Vec<Vec<f64>> {
        self.cells.iter().map(|c| c.ues.iter().map(|u| u.rate_req_nats).collect()).collect()
    }

    pub fn scbs_budgets(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.scbs_power_budget_w).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_antennas == 0 {
            return Err(Error::config("num_antennas", "must be at least 1"));
        }
        if self.cells.is_empty() {
            return Err(Error::config("cells", "at least one cell is required"));
        }
        let positive = |key: &str, v: f64| -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(key, format!("must be positive and finite, got {v}")))
            }
        };
        positive("carrier_freq_ghz", self.carrier_freq_ghz)?;
        positive("noise_power_w", self.noise_power_w)?;
        positive("gateway_power_budget_w", self.gateway_power_budget_w)?;
        if !(self.backhaul_frame_share > 0.0 && self.backhaul_frame_share <= 1.0) {
            return Err(Error::config("backhaul_frame_share", format!("must lie in (0, 1], got {}", self.backhaul_frame_share)));
        }
        let m = self.cells.len();
        for (ci, cell) in self.cells.iter().enumerate() {
            positive(&format!("cells[{ci}].backhaul_distance_m"), cell.backhaul_distance_m)?;
            positive(&format!("cells[{ci}].scbs_power_budget_w"), cell.scbs_power_budget_w)?;
            if cell.ues.is_empty() {
                return Err(Error::config(format!("cells[{ci}].ues"), "every cell needs at least one UE"));
            }
            for (ui, ue) in cell.ues.iter().enumerate() {
                let key = format!("cells[{ci}].ues[{ui}]");
                if ue.distances_to_scbs_m.len() != m {
                    return Err(Error::config(
                        format!("{key}.distances_to_scbs_m"),
                        format!("expected {m} entries, found {}", ue.distances_to_scbs_m.len()),
                    ));
                }
                for (j, &d) in ue.distances_to_scbs_m.iter().enumerate() {
                    positive(&format!("{key}.distances_to_scbs_m[{j}]"), d)?;
                }
                if !(ue.rate_req_nats.is_finite() && ue.rate_req_nats >= 0.0) {
                    return Err(Error::config(
                        format!("{key}.rate_req_nats"),
                        format!("must be nonnegative, got {}", ue.rate_req_nats),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// One fading draw.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// `backhaul[m]` is the gateway-to-ScBS `m` channel, length L.
    pub backhaul: Vec<CVector>,
    /// `access_gain_sq[j][m][n]` is |g|^2 from ScBS `j` to UE `(m, n)`.
    pub access_gain_sq: Vec<Vec<Vec<f64>>>,
}

impl ChannelRealization {
    /// Squared gain of the serving link of UE `(m, n)`.
    pub fn serving_gain(&self, m: usize, n: usize) -> f64 {
        self.access_gain_sq[m][m][n]
    }

    pub fn num_cells(&self) -> usize {
        self.backhaul.len()
    }

    /// UEs per cell, read from the serving slice of the gain tensor.
    pub fn ues_per_cell(&self) -> Vec<usize> {
        (0..self.access_gain_sq.len()).map(|m| self.access_gain_sq[m].get(m).map_or(0, Vec::len)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.backhaul.len();
        if self.access_gain_sq.len() != m {
            return Err(Error::DimensionMismatch { expected: m, found: self.access_gain_sq.len() });
        }
        let l = self.backhaul.first().map_or(0, |h| h.len());
        for h in &self.backhaul {
            if h.len() != l {
                return Err(Error::DimensionMismatch { expected: l, found: h.len() });
            }
            if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::InvalidArgument("backhaul channel has non-finite entries".into()));
            }
        }
        let per_cell = self.ues_per_cell();
        for slab in &self.access_gain_sq {
            if slab.len() != m {
                return Err(Error::DimensionMismatch { expected: m, found: slab.len() });
            }
            for (cell, gains) in slab.iter().enumerate() {
                if gains.len() != per_cell[cell] {
                    return Err(Error::DimensionMismatch { expected: per_cell[cell], found: gains.len() });
                }
                if gains.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
                    return Err(Error::InvalidArgument("access gains must be finite and nonnegative".into()));
                }
            }
        }
        Ok(())
    }
}

/// Circularly-symmetric complex Gaussian sample with the given variance.
pub fn sample_cscg<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let scale = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * scale, im * scale)
}

/// Draws Rayleigh fading for every backhaul and access link of `scenario`.
///
/// Backhaul entries are CN(0, 1/Omega_m) and access coefficients CN(0, 1/omega),
/// with the access pathloss evaluated at the distance from the transmitting
/// ScBS to the receiving UE. The draw order is fixed, so the result only
/// depends on the scenario and the RNG state.
pub fn sample_channels<R: Rng + ?Sized>(scenario: &NetworkScenario, rng: &mut R) -> ChannelRealization {
    let fc = scenario.carrier_freq_ghz;
    let l = scenario.num_antennas;
    let backhaul = scenario
        .cells
        .iter()
        .map(|cell| {
            let var = 1.0 / db_to_linear(pathloss_or_inf(backhaul_pathloss_db(cell.backhaul_distance_m, fc)));
            DVector::from_fn(l, |_, _| sample_cscg(rng, var))
        })
        .collect();

    let m = scenario.num_cells();
    let access_gain_sq = (0..m)
        .map(|j| {
            scenario
                .cells
                .iter()
                .map(|cell| {
                    cell.ues
                        .iter()
                        .map(|ue| {
                            let pl = pathloss_or_inf(access_pathloss_db(ue.distances_to_scbs_m[j], fc));
                            sample_cscg(rng, 1.0 / db_to_linear(pl)).norm_sqr()
                        })
                        .collect()
                })
                .collect()
        })
        .collect();

    ChannelRealization { backhaul, access_gain_sq }
}

/// One draw from a ChaCha stream seeded with the scenario's `rng_seed`.
pub fn sample_channels_seeded(scenario: &NetworkScenario) -> ChannelRealization {
    use rand::SeedableRng;
    sample_channels(scenario, &mut rand_chacha::ChaCha8Rng::seed_from_u64(scenario.rng_seed))
}

// validated scenarios never hit the error arm
fn pathloss_or_inf(pl: Result<f64>) -> f64 {
    pl.unwrap_or(f64::INFINITY)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1e-300)
    }

    fn toy_scenario() -> NetworkScenario {
        NetworkScenario {
            num_antennas: 4,
            cells: vec![
                CellConfig {
                    backhaul_distance_m: 150.0,
                    scbs_power_budget_w: 0.2,
                    ues: vec![UeConfig { distances_to_scbs_m: vec![20.0, 90.0], rate_req_nats: 1.0 }],
                },
                CellConfig {
                    backhaul_distance_m: 250.0,
                    scbs_power_budget_w: 0.2,
                    ues: vec![
                        UeConfig { distances_to_scbs_m: vec![120.0, 35.0], rate_req_nats: 2.0 },
                        UeConfig { distances_to_scbs_m: vec![80.0, 10.0], rate_req_nats: 0.5 },
                    ],
                },
            ],
            carrier_freq_ghz: 2.0,
            noise_power_w: dbm_to_watts(-107.0),
            gateway_power_budget_w: 1.0,
            backhaul_frame_share: 1.0,
            rng_seed: 7,
        }
    }

    #[test]
    fn db_conversions() {
        assert_eq!(db_to_linear(0.0), 1.0);
        assert!(close(dbm_to_watts(30.0), 1.0, 1e-15));
        assert!(close(dbm_to_watts(-107.0), 1.995_262_314_968_883e-14, 1e-12));
        assert!(close(watts_to_dbm(0.2), 23.010_299_956_639_81, 1e-12));
        assert_eq!(watts_to_dbm(0.0), f64::NEG_INFINITY);
    }

    #[test]
    fn backhaul_pathloss_values() {
        assert!(close(backhaul_pathloss_db(1.0, 1.0).unwrap(), 32.4, 1e-15));
        // 32.4 + 20 log10(2) + 31.9 * 2
        assert!(close(backhaul_pathloss_db(100.0, 2.0).unwrap(), 102.220_599_913_279_6, 1e-12));
        assert!(close(backhaul_pathloss_db(380.0, 2.0).unwrap(), 120.715_696_645_355_88, 1e-12));
    }

    #[test]
    fn access_pathloss_values() {
        assert!(close(access_pathloss_db(1.0, 1.0).unwrap(), 17.3, 1e-15));
        assert!(close(access_pathloss_db(50.0, 2.0).unwrap(), 89.866_198_058_102_64, 1e-12));
        assert!(close(access_pathloss_db(10.0, 2.0).unwrap(), 63.095_646_892_033_13, 1e-12));
    }

    #[test]
    fn pathloss_rejects_nonpositive() {
        assert!(backhaul_pathloss_db(0.0, 2.0).is_err());
        assert!(backhaul_pathloss_db(10.0, -1.0).is_err());
        assert!(access_pathloss_db(-3.0, 2.0).is_err());
        assert!(access_pathloss_db(f64::NAN, 2.0).is_err());
    }

    #[test]
    fn pathloss_increasing() {
        let mut prev_b = f64::NEG_INFINITY;
        let mut prev_a = f64::NEG_INFINITY;
        for i in 1..200 {
            let d = i as f64 * 3.7;
            let b = backhaul_pathloss_db(d, 2.0).unwrap();
            let a = access_pathloss_db(d, 2.0).unwrap();
            assert!(b > prev_b && a > prev_a);
            prev_b = b;
            prev_a = a;
        }
        assert!(backhaul_pathloss_db(50.0, 3.5).unwrap() > backhaul_pathloss_db(50.0, 3.4).unwrap());
        assert!(access_pathloss_db(50.0, 3.5).unwrap() > access_pathloss_db(50.0, 3.4).unwrap());
    }

    #[test]
    fn sampling_is_deterministic() {
        let sc = toy_scenario();
        let a = sample_channels(&sc, &mut ChaCha8Rng::seed_from_u64(11));
        let b = sample_channels(&sc, &mut ChaCha8Rng::seed_from_u64(11));
        let c = sample_channels(&sc, &mut ChaCha8Rng::seed_from_u64(12));
        assert_eq!(a, b);
        assert_ne!(a, c);
        a.validate().unwrap();
        assert_eq!(a.ues_per_cell(), vec![1, 2]);
        assert_eq!(a.backhaul[0].len(), 4);
    }

    #[test]
    fn sampling_matches_declared_variances() {
        let sc = toy_scenario();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let draws = 100_000;
        let mut bh = [0.0; 2];
        let mut serving = [0.0; 3];
        let mut cross = 0.0;
        for _ in 0..draws {
            let ch = sample_channels(&sc, &mut rng);
            bh[0] += ch.backhaul[0][0].norm_sqr();
            bh[1] += ch.backhaul[1][3].norm_sqr();
            serving[0] += ch.access_gain_sq[0][0][0];
            serving[1] += ch.access_gain_sq[1][1][0];
            serving[2] += ch.access_gain_sq[1][1][1];
            cross += ch.access_gain_sq[0][1][1];
        }
        let n = draws as f64;
        let inv = |pl: f64| 1.0 / db_to_linear(pl);
        assert!(close(bh[0] / n, inv(backhaul_pathloss_db(150.0, 2.0).unwrap()), 0.02));
        assert!(close(bh[1] / n, inv(backhaul_pathloss_db(250.0, 2.0).unwrap()), 0.02));
        assert!(close(serving[0] / n, inv(access_pathloss_db(20.0, 2.0).unwrap()), 0.02));
        assert!(close(serving[1] / n, inv(access_pathloss_db(35.0, 2.0).unwrap()), 0.02));
        assert!(close(serving[2] / n, inv(access_pathloss_db(10.0, 2.0).unwrap()), 0.02));
        assert!(close(cross / n, inv(access_pathloss_db(80.0, 2.0).unwrap()), 0.02));
    }

    #[test]
    fn cscg_parts_are_balanced() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let (mut re2, mut im2, mut cross) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let z = sample_cscg(&mut rng, 3.0);
            re2 += z.re * z.re;
            im2 += z.im * z.im;
            cross += z.re * z.im;
        }
        let n = n as f64;
        assert!(close(re2 / n, 1.5, 0.02));
        assert!(close(im2 / n, 1.5, 0.02));
        assert!((cross / n).abs() < 0.02);
    }

    #[test]
    fn validation_names_offending_key() {
        let mut sc = toy_scenario();
        sc.validate().unwrap();
        sc.cells[1].ues[0].distances_to_scbs_m.pop();
        let err = sc.validate().unwrap_err().to_string();
        assert!(err.contains("cells[1].ues[0].distances_to_scbs_m"), "{err}");

        let mut sc = toy_scenario();
        sc.backhaul_frame_share = 0.0;
        assert!(sc.validate().unwrap_err().to_string().contains("backhaul_frame_share"));

        let mut sc = toy_scenario();
        sc.cells[0].ues.clear();
        assert!(sc.validate().is_err());
    }
}

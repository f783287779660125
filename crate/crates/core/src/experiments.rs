//! Monte Carlo sweeps over the backhaul distance.
//!
//! Every trial draws a fresh topology, SINR requirements and fading from its
//! own ChaCha stream keyed by `(seed, distance index, trial index)`, and all
//! schemes are evaluated on that same draw. Trials run in parallel but are
//! reduced in index order, so results are bit-identical for any thread count.

use std::f64::consts::TAU;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backhaul::OrderStrategy;
use crate::jppc::{solve_jppc, Scheme, SolveOptions, TrialOutcome};
use crate::scenario::{db_to_linear, sample_channels, sinr_to_rate, watts_to_dbm, CellConfig, NetworkScenario, UeConfig};
use crate::{Error, Result};

/// z-value of a two-sided 95% normal interval.
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadioParams {
    pub num_antennas: usize,
    pub carrier_freq_ghz: f64,
    pub noise_power_w: f64,
    pub gateway_power_budget_w: f64,
    pub scbs_power_budget_w: f64,
    pub backhaul_frame_share: f64,
}

impl RadioParams {
    /// Eight gateway antennas, 30 dBm gateway and 23 dBm ScBS budgets,
    /// -107 dBm noise, 2 GHz carrier.
    pub fn reference() -> Self {
        use crate::scenario::dbm_to_watts;
        Self {
            num_antennas: 8,
            carrier_freq_ghz: crate::scenario::DEFAULT_CARRIER_GHZ,
            noise_power_w: dbm_to_watts(-107.0),
            gateway_power_budget_w: dbm_to_watts(30.0),
            scbs_power_budget_w: dbm_to_watts(23.0),
            backhaul_frame_share: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SinrUnits {
    #[default]
    Linear,
    Db,
}

impl SinrUnits {
    pub fn to_linear(self, value: f64) -> f64 {
        match self {
            SinrUnits::Linear => value,
            SinrUnits::Db => db_to_linear(value),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopologyParams {
    /// UEs are dropped uniformly in a disc of this radius around their ScBS.
    pub ue_radius_m: f64,
    /// Floor applied to every ScBS-to-UE distance.
    pub min_distance_m: f64,
    /// Radius of the ScBS ring in the access plane. `None` places the ring
    /// at the backhaul distance around the gateway.
    pub ring_radius_m: Option<f64>,
    pub angle_offset_rad: f64,
}

impl Default for TopologyParams {
    fn default() -> Self {
        Self { ue_radius_m: 10.0, min_distance_m: 1.0, ring_radius_m: None, angle_offset_rad: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub radio: RadioParams,
    pub num_cells: usize,
    pub ues_per_cell: usize,
    pub distances_m: Vec<f64>,
    pub trials: usize,
    pub schemes: Vec<Scheme>,
    /// Per-UE SINR requirement drawn uniformly from this range.
    pub sinr_range: (f64, f64),
    pub sinr_units: SinrUnits,
    pub topology: TopologyParams,
    pub order: Option<OrderStrategy>,
    pub seed: u64,
    /// Worker threads; `None` uses the global rayon pool.
    pub threads: Option<usize>,
}

impl SweepSpec {
    /// Four single-UE cells around an eight-antenna gateway with linear SINR
    /// requirements in (35, 45).
    pub fn reference(distances_m: Vec<f64>, trials: usize, seed: u64) -> Self {
        Self {
            radio: RadioParams::reference(),
            num_cells: 4,
            ues_per_cell: 1,
            distances_m,
            trials,
            schemes: vec![Scheme::Dpc, Scheme::Zfbf],
            sinr_range: (35.0, 45.0),
            sinr_units: SinrUnits::Linear,
            topology: TopologyParams::default(),
            order: None,
            seed,
            threads: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::config("sweep.trials", "must be at least 1"));
        }
        if self.num_cells == 0 {
            return Err(Error::config("sweep.cells", "must be at least 1"));
        }
        if self.ues_per_cell == 0 {
            return Err(Error::config("sweep.ues_per_cell", "must be at least 1"));
        }
        if self.radio.num_antennas == 0 {
            return Err(Error::config("num_antennas", "must be at least 1"));
        }
        if self.schemes.is_empty() {
            return Err(Error::config("sweep.schemes", "at least one scheme is required"));
        }
        if self.distances_m.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::config("sweep.distances_m", "distances must be positive"));
        }
        if self.distances_m.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("sweep.distances_m", "distances must be strictly ascending"));
        }
        let (lo, hi) = self.sinr_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) || (self.sinr_units == SinrUnits::Linear && lo < 0.0) {
            return Err(Error::config("sweep.sinr_range", format!("invalid range ({lo}, {hi})")));
        }
        let t = &self.topology;
        if !(t.ue_radius_m >= 0.0 && t.ue_radius_m.is_finite()) {
            return Err(Error::config("sweep.ue_radius_m", "must be nonnegative"));
        }
        if !(t.min_distance_m > 0.0 && t.min_distance_m.is_finite()) {
            return Err(Error::config("sweep.min_ue_distance_m", "must be positive"));
        }
        if t.ring_radius_m.is_some_and(|r| !(r >= 0.0 && r.is_finite())) {
            return Err(Error::config("sweep.ring_radius_m", "must be nonnegative"));
        }
        if self.threads == Some(0) {
            return Err(Error::config("sweep.threads", "must be at least 1"));
        }
        if !(self.radio.backhaul_frame_share > 0.0 && self.radio.backhaul_frame_share <= 1.0) {
            return Err(Error::config("backhaul_frame_share", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Placement of one trial plus the scenario derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub scbs_xy: Vec<[f64; 2]>,
    /// `ue_xy[m][n]`.
    pub ue_xy: Vec<Vec<[f64; 2]>>,
    pub scenario: NetworkScenario,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Places ScBSs at equal angles on a ring and drops each UE uniformly in a
/// disc around its ScBS; draws every UE's SINR requirement from the range.
///
/// Every cell uses `distance_m` as its backhaul distance. Cross distances are
/// computed from the coordinates and floored at `min_distance_m`.
pub fn generate_topology<R: Rng + ?Sized>(spec: &SweepSpec, distance_m: f64, rng: &mut R) -> Topology {
    let m = spec.num_cells;
    let ring = spec.topology.ring_radius_m.unwrap_or(distance_m);
    let scbs_xy: Vec<[f64; 2]> = (0..m)
        .map(|k| {
            let a = spec.topology.angle_offset_rad + TAU * k as f64 / m as f64;
            [ring * a.cos(), ring * a.sin()]
        })
        .collect();
    let ue_xy: Vec<Vec<[f64; 2]>> = scbs_xy
        .iter()
        .map(|c| {
            (0..spec.ues_per_cell)
                .map(|_| {
                    let r = spec.topology.ue_radius_m * rng.random::<f64>().sqrt();
                    let a = TAU * rng.random::<f64>();
                    [c[0] + r * a.cos(), c[1] + r * a.sin()]
                })
                .collect()
        })
        .collect();
    let (lo, hi) = spec.sinr_range;
    let floor = spec.topology.min_distance_m;
    let cells = ue_xy
        .iter()
        .map(|ues| CellConfig {
            backhaul_distance_m: distance_m,
            scbs_power_budget_w: spec.radio.scbs_power_budget_w,
            ues: ues
                .iter()
                .map(|&u| {
                    let sinr = spec.sinr_units.to_linear(lo + (hi - lo) * rng.random::<f64>());
                    UeConfig {
                        distances_to_scbs_m: scbs_xy.iter().map(|&s| dist(s, u).max(floor)).collect(),
                        rate_req_nats: sinr_to_rate(sinr),
                    }
                })
                .collect(),
        })
        .collect();
    let scenario = NetworkScenario {
        num_antennas: spec.radio.num_antennas,
        cells,
        carrier_freq_ghz: spec.radio.carrier_freq_ghz,
        noise_power_w: spec.radio.noise_power_w,
        gateway_power_budget_w: spec.radio.gateway_power_budget_w,
        backhaul_frame_share: spec.radio.backhaul_frame_share,
        rng_seed: spec.seed,
    };
    log::trace!("topology at {distance_m} m: scbs {scbs_xy:?}, ues {ue_xy:?}");
    Topology { scbs_xy, ue_xy, scenario }
}

/// RNG stream for one trial.
pub fn trial_rng(seed: u64, distance_index: usize, trial_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((distance_index as u64) << 32) | trial_index as u64);
    rng
}

/// Runs one trial for every scheme in the spec, in spec order.
pub fn run_trial(spec: &SweepSpec, distance_index: usize, trial_index: usize) -> Result<(Topology, Vec<TrialOutcome>)> {
    let mut rng = trial_rng(spec.seed, distance_index, trial_index);
    let topo = generate_topology(spec, spec.distances_m[distance_index], &mut rng);
    let channels = sample_channels(&topo.scenario, &mut rng);
    let outcomes = spec
        .schemes
        .iter()
        .map(|&scheme| solve_jppc(&topo.scenario, &channels, SolveOptions { scheme, order: spec.order }))
        .collect::<Result<Vec<_>>>()?;
    Ok((topo, outcomes))
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct TrialRecord {
    power_w: f64,
    outage: bool,
    backhaul_outage: bool,
    access_outage: bool,
}

/// Aggregates for one (distance, scheme) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointStats {
    pub distance_m: f64,
    pub scheme: Scheme,
    pub trials: usize,
    /// Mean over all trials, outage trials counting as zero.
    pub mean_power_w: f64,
    pub mean_power_dbm: f64,
    /// Mean over trials without outage; zero when every trial is in outage.
    pub mean_served_power_w: f64,
    pub outage_prob: f64,
    pub backhaul_outage_prob: f64,
    pub access_outage_prob: f64,
    /// 95% normal half-width of `outage_prob`.
    pub ci_halfwidth: f64,
    /// 95% normal half-width of `mean_power_w`.
    pub power_ci_halfwidth_w: f64,
}

impl PointStats {
    fn from_records(distance_m: f64, scheme: Scheme, records: &[TrialRecord]) -> Self {
        let n = records.len() as f64;
        let mean = records.iter().map(|r| r.power_w).sum::<f64>() / n;
        let var =
            if records.len() > 1 { records.iter().map(|r| (r.power_w - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        let served: Vec<f64> = records.iter().filter(|r| !r.outage).map(|r| r.power_w).collect();
        let frac = |f: fn(&TrialRecord) -> bool| records.iter().filter(|r| f(r)).count() as f64 / n;
        let outage = frac(|r| r.outage);
        Self {
            distance_m,
            scheme,
            trials: records.len(),
            mean_power_w: mean,
            mean_power_dbm: watts_to_dbm(mean),
            mean_served_power_w: if served.is_empty() { 0.0 } else { served.iter().sum::<f64>() / served.len() as f64 },
            outage_prob: outage,
            backhaul_outage_prob: frac(|r| r.backhaul_outage),
            access_outage_prob: frac(|r| r.access_outage),
            ci_halfwidth: Z95 * (outage * (1.0 - outage) / n).sqrt(),
            power_ci_halfwidth_w: Z95 * (var / n).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepStatistics {
    pub seed: u64,
    /// Distance-major, schemes in spec order.
    pub points: Vec<PointStats>,
}

impl SweepStatistics {
    pub fn point(&self, distance_index: usize, scheme: Scheme) -> Option<&PointStats> {
        let mut distances: Vec<f64> = self.points.iter().map(|p| p.distance_m).collect();
        distances.dedup();
        let d = *distances.get(distance_index)?;
        self.points.iter().find(|p| p.distance_m == d && p.scheme == scheme)
    }

    /// Points of one scheme in distance order.
    pub fn series(&self, scheme: Scheme) -> Vec<&PointStats> {
        self.points.iter().filter(|p| p.scheme == scheme).collect()
    }
}

/// Runs the full sweep.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepStatistics> {
    spec.validate()?;
    match spec.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
            pool.install(|| sweep_inner(spec))
        }
        None => sweep_inner(spec),
    }
}

fn sweep_inner(spec: &SweepSpec) -> Result<SweepStatistics> {
    let mut points = Vec::with_capacity(spec.distances_m.len() * spec.schemes.len());
    for (di, &distance) in spec.distances_m.iter().enumerate() {
        let per_trial: Vec<Vec<TrialRecord>> = (0..spec.trials)
            .into_par_iter()
            .map(|t| {
                let (_, outcomes) = run_trial(spec, di, t)?;
                Ok(outcomes
                    .iter()
                    .map(|o| TrialRecord {
                        power_w: o.total_power_w,
                        outage: o.system_outage,
                        backhaul_outage: o.backhaul_outage(),
                        access_outage: o.access_outage(),
                    })
                    .collect())
            })
            .collect::<Result<_>>()?;
        for (si, &scheme) in spec.schemes.iter().enumerate() {
            let records: Vec<TrialRecord> = per_trial.iter().map(|r| r[si]).collect();
            let stats = PointStats::from_records(distance, scheme, &records);
            log::info!("{distance:>8.1} m {scheme:<4}  power {:.4e} W  outage {:.4}", stats.mean_power_w, stats.outage_prob);
            points.push(stats);
        }
    }
    Ok(SweepStatistics { seed: spec.seed, points })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

pub const CSV_HEADER: [&str; 9] = [
    "distance_m",
    "scheme",
    "mean_power_dbm",
    "mean_power_w",
    "outage_prob",
    "backhaul_outage_prob",
    "access_outage_prob",
    "trials",
    "ci_halfwidth",
];

/// One CSV data row as read back from disk.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct CsvRow {
    pub distance_m: f64,
    pub scheme: String,
    pub mean_power_dbm: f64,
    pub mean_power_w: f64,
    pub outage_prob: f64,
    pub backhaul_outage_prob: f64,
    pub access_outage_prob: f64,
    pub trials: usize,
    pub ci_halfwidth: f64,
}

/// Twelve significant digits.
pub fn fmt_sig(x: f64) -> String {
    format!("{x:.11e}")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Parse { path: path.to_path_buf(), message: e.to_string() }
}

pub fn write_csv(stats: &SweepStatistics, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(CSV_HEADER).map_err(|e| csv_err(path, e))?;
    for p in &stats.points {
        w.write_record([
            fmt_sig(p.distance_m),
            p.scheme.to_string(),
            fmt_sig(p.mean_power_dbm),
            fmt_sig(p.mean_power_w),
            fmt_sig(p.outage_prob),
            fmt_sig(p.backhaul_outage_prob),
            fmt_sig(p.access_outage_prob),
            p.trials.to_string(),
            fmt_sig(p.ci_halfwidth),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_csv(path: &Path) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

/// Structured summary written next to (or instead of) the CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary<'a> {
    pub seed: u64,
    pub config: &'a SweepSpec,
    pub points: Vec<SummaryPoint<'a>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryPoint<'a> {
    #[serde(flatten)]
    pub stats: &'a PointStats,
    /// dBm of the mean power; `None` when it is zero.
    pub mean_power_dbm_finite: Option<f64>,
}

fn round_sig(x: f64) -> f64 {
    if x.is_finite() {
        fmt_sig(x).parse().unwrap_or(x)
    } else {
        x
    }
}

pub fn write_summary(stats: &SweepStatistics, spec: &SweepSpec, path: &Path) -> Result<()> {
    let rounded: Vec<PointStats> = stats
        .points
        .iter()
        .map(|p| PointStats {
            distance_m: round_sig(p.distance_m),
            mean_power_w: round_sig(p.mean_power_w),
            mean_power_dbm: round_sig(p.mean_power_dbm),
            mean_served_power_w: round_sig(p.mean_served_power_w),
            outage_prob: round_sig(p.outage_prob),
            backhaul_outage_prob: round_sig(p.backhaul_outage_prob),
            access_outage_prob: round_sig(p.access_outage_prob),
            ci_halfwidth: round_sig(p.ci_halfwidth),
            power_ci_halfwidth_w: round_sig(p.power_ci_halfwidth_w),
            ..p.clone()
        })
        .collect();
    let summary = Summary {
        seed: stats.seed,
        config: spec,
        points: rounded
            .iter()
            .map(|p| SummaryPoint { stats: p, mean_power_dbm_finite: p.mean_power_dbm.is_finite().then_some(p.mean_power_dbm) })
            .collect(),
    };
    let mut file = File::create(path).map_err(io_err(path))?;
    serde_json::to_writer_pretty(&mut file, &summary)
        .map_err(|e| Error::Parse { path: path.to_path_buf(), message: e.to_string() })?;
    file.write_all(b"\n").map_err(io_err(path))
}

/// Writes the results. CSV output also writes `<stem>.summary.json` beside it.
pub fn emit_results(stats: &SweepStatistics, spec: &SweepSpec, path: &Path, format: OutputFormat) -> Result<()> {
    match format {
        OutputFormat::Csv => {
            write_csv(stats, path)?;
            write_summary(stats, spec, &summary_path(path))
        }
        OutputFormat::Json => write_summary(stats, spec, path),
    }
}

pub fn summary_path(csv_path: &Path) -> std::path::PathBuf {
    csv_path.with_extension("summary.json")
}

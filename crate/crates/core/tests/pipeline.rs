use std::path::Path;

use jppc_core::access::eval_access_rates;
use jppc_core::config::{ChannelFile, ConfigFile};
use jppc_core::experiments::{emit_results, read_csv, run_sweep, summary_path, OutputFormat};
use jppc_core::jppc::{solve_jppc, Scheme, SolveOptions};
use jppc_core::scenario::sample_channels_seeded;

fn config(name: &str) -> ConfigFile {
    ConfigFile::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)).unwrap()
}

#[test]
fn shipped_two_cell_config_solves_with_both_schemes() {
    let file = config("two_cells.toml");
    let scenario = file.to_scenario().unwrap();
    let ch = sample_channels_seeded(&scenario);
    let dpc = solve_jppc(&scenario, &ch, SolveOptions { scheme: Scheme::Dpc, order: file.order }).unwrap();
    let zf = solve_jppc(&scenario, &ch, SolveOptions::new(Scheme::Zfbf)).unwrap();
    assert!(!dpc.system_outage && !zf.system_outage);
    assert!(dpc.backhaul.total_power_w <= zf.backhaul.total_power_w);
    // the access subproblem does not depend on the backhaul scheme
    assert_eq!(dpc.access, zf.access);

    let rates = eval_access_rates(&ch, &dpc.access.powers_w, scenario.noise_power_w).unwrap();
    for (m, cell) in scenario.cells.iter().enumerate() {
        let carried: f64 = rates[m].iter().sum();
        let wanted: f64 = cell.ues.iter().map(|u| u.rate_req_nats).sum();
        assert!((carried - wanted).abs() <= 1e-9 * wanted);
        assert!((dpc.backhaul.achieved_rates_nats[m] - wanted).abs() <= 1e-9 * wanted);
    }
}

#[test]
fn channel_file_replays_a_draw() {
    let scenario = config("two_cells.toml").to_scenario().unwrap();
    let ch = sample_channels_seeded(&scenario);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ch.json");
    std::fs::write(&path, serde_json::to_string(&ChannelFile::from_realization(&ch)).unwrap()).unwrap();
    let back = ChannelFile::load(&path).unwrap();
    ChannelFile::check_against(&back, &scenario).unwrap();
    assert_eq!(back, ch);
    let a = solve_jppc(&scenario, &ch, SolveOptions::new(Scheme::Dpc)).unwrap();
    let b = solve_jppc(&scenario, &back, SolveOptions::new(Scheme::Dpc)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn sweep_round_trips_through_csv() {
    let mut spec = config("paper_defaults.toml").to_sweep_spec().unwrap();
    spec.trials = 50;
    spec.distances_m = vec![200.0, 400.0, 550.0];
    let stats = run_sweep(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.csv");
    emit_results(&stats, &spec, &path, OutputFormat::Csv).unwrap();

    let rows = read_csv(&path).unwrap();
    assert_eq!(rows.len(), stats.points.len());
    for (row, p) in rows.iter().zip(&stats.points) {
        assert_eq!(row.scheme, p.scheme.to_string());
        assert_eq!(row.trials, 50);
        assert!((row.mean_power_w - p.mean_power_w).abs() <= 1e-11 * p.mean_power_w);
        assert_eq!(row.outage_prob, p.outage_prob);
        assert!(row.outage_prob >= row.backhaul_outage_prob.max(row.access_outage_prob));
    }
    assert!(summary_path(&path).exists());

    // DPC never needs more power or suffers more outage than ZFBF
    for pair in stats.points.chunks(2) {
        assert!(pair[0].outage_prob <= pair[1].outage_prob);
        assert!(pair[0].mean_served_power_w <= pair[1].mean_served_power_w || pair[1].outage_prob == 1.0);
    }
}

use boussinesq::boundary::{boundary_depth, components_hs, jonswap_components, BoundaryKind, BoundarySet, Side, SpectrumSpec, WaveComponent};
use boussinesq::scenario::{time_averages, Gauge, GaugeSpec};
use boussinesq::stepper::{Simulation, SimulationConfig};
use boussinesq::{Bathymetry, Field2, FieldState, Grid};

const DEPTH: f64 = 0.5;

fn channel(nx: usize) -> (Grid, Bathymetry) {
    let grid = Grid::new(nx, 5, 0.05, 0.05).unwrap();
    let bathy = Bathymetry::flat(&grid, DEPTH).unwrap();
    (grid, bathy)
}

/// Runs a flat channel forced from the west and returns gauge series.
fn run_channel(nx: usize, west: BoundaryKind, east: BoundaryKind, xs: &[f64], t_end: f64) -> Vec<Gauge> {
    let (grid, bathy) = channel(nx);
    let state = FieldState::still(&grid, &bathy);
    let set = BoundarySet::new(&grid, &bathy, west, east, BoundaryKind::Wall, BoundaryKind::Wall).unwrap();
    let mut gauges: Vec<Gauge> = xs
        .iter()
        .enumerate()
        .map(|(k, &x)| Gauge::new(GaugeSpec { id: format!("x{k}"), x, y: 0.125, record_interval: 0.0 }, &grid).unwrap())
        .collect();
    let mut sim = Simulation::new(grid, bathy, state, set, SimulationConfig::new(2e-3)).unwrap();
    sim.run_until(t_end, |s, _| {
        for g in gauges.iter_mut() {
            g.record(s.state(), s.bathymetry(), s.phys(), s.time());
        }
    })
    .unwrap();
    gauges
}

fn sine(amplitude: f64, period: f64) -> BoundaryKind {
    BoundaryKind::Maker(vec![WaveComponent::new(amplitude, period, 0.0, DEPTH, 9.81).unwrap()])
}

fn sponge() -> BoundaryKind {
    BoundaryKind::Sponge { width: 4.0, lambda_max: 5.0 }
}

#[test]
fn sine_maker_generates_requested_height() {
    let a = 0.01;
    let gauges = run_channel(240, sine(a, 1.5), sponge(), &[1.0, 3.0], 24.0);
    for g in &gauges {
        let avg = time_averages(&g.samples, 12.0, 24.0).unwrap();
        let oracle = 4.0 * a / 2f64.sqrt();
        assert!((avg.hs - oracle).abs() < 0.1 * oracle, "gauge {}: Hs {} vs {oracle}", g.spec.id, avg.hs);
        assert!(avg.mwl.abs() < 0.05 * a, "mwl {}", avg.mwl);
    }
}

/// Spread of Hs along a line spanning half a wavelength; a standing
/// component of reflection coefficient R gives (max - min) / (max + min) = R.
fn reflection(gauges: &[Gauge], t0: f64, t1: f64) -> f64 {
    let hs: Vec<f64> = gauges.iter().map(|g| time_averages(&g.samples, t0, t1).unwrap().hs).collect();
    let max = hs.iter().cloned().fold(f64::MIN, f64::max);
    let min = hs.iter().cloned().fold(f64::MAX, f64::min);
    (max - min) / (max + min)
}

#[test]
fn sponge_absorbs_outgoing_waves() {
    let xs: Vec<f64> = (0..13).map(|k| 2.0 + 0.125 * k as f64).collect();
    let absorbed = run_channel(240, sine(0.005, 1.2), sponge(), &xs, 30.0);
    let reflected = run_channel(240, sine(0.005, 1.2), BoundaryKind::Wall, &xs, 30.0);
    let r_sponge = reflection(&absorbed, 18.0, 30.0);
    let r_wall = reflection(&reflected, 18.0, 30.0);
    assert!(r_sponge < 0.1, "sponge reflection {r_sponge}");
    assert!(r_wall > 3.0 * r_sponge, "wall {r_wall} vs sponge {r_sponge}");
}

#[test]
fn irregular_maker_variance_matches_spectrum() {
    let (grid, bathy) = channel(240);
    let depth = boundary_depth(&grid, &bathy, Side::West);
    let spec = SpectrumSpec { hs: 0.03, tp: 1.6, gamma: 3.3, n_components: 68, df: 0.01, seed: 7 };
    let comps = jonswap_components(&spec, depth, 9.81).unwrap();
    let target = components_hs(&comps);
    assert!((target - spec.hs).abs() < 1e-12);
    let gauges = run_channel(240, BoundaryKind::Maker(comps), sponge(), &[1.0], 120.0);
    let avg = time_averages(&gauges[0].samples, 20.0, 120.0).unwrap();
    assert!((avg.hs - target).abs() < 0.12 * target, "Hs {} vs {target}", avg.hs);
}

#[test]
fn closed_basin_conserves_mass_with_moving_shoreline() {
    let grid = Grid::new(60, 40, 0.05, 0.05).unwrap();
    let bed = Field2::from_fn(&grid, |x, _| 0.2 * (x - 1.0));
    let bathy = Bathymetry::build(&grid, &bed, 0.3).unwrap();
    let mut state = FieldState::still(&grid, &bathy);
    for j in grid.interior_rows() {
        for i in grid.interior_cols() {
            let (x, y) = (grid.xc(i), grid.yc(j));
            if bathy.d.at(i, j) > 0.0 {
                let bump = 0.03 * (-((x - 0.8).powi(2) + (y - 1.0).powi(2)) / 0.1).exp();
                state.w.set(i, j, state.w.at(i, j) + bump);
            }
        }
    }
    let mut cfg = SimulationConfig::new(1e-3);
    cfg.phys.h_eps = 1e-3;
    let mut sim = Simulation::new(grid.clone(), bathy.clone(), state, BoundarySet::walls(), cfg).unwrap();
    let v0 = sim.state().volume(&grid, &bathy);
    let mut min_depth = f64::MAX;
    for _ in 0..3000 {
        sim.advance().unwrap();
        for j in grid.interior_rows() {
            for i in grid.interior_cols() {
                min_depth = min_depth.min(sim.state().depth(&bathy, i, j));
            }
        }
    }
    let v1 = sim.state().volume(&grid, &bathy);
    assert!(((v1 - v0) / v0).abs() < 1e-12, "drift {}", (v1 - v0) / v0);
    assert!(min_depth >= 0.0);
}

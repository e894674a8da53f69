//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::time::Instant;

use boussinesq::boundary::BoundarySet;
use boussinesq::dispersion::{compute_stages, compute_ustar_vstar, StageSet};
use boussinesq::hydro::NumericsParams;
use boussinesq::implicit::{cyclic_reduction_solve, thomas_solve, MomentumOperator, SolverKind, TridiagonalSystem};
use boussinesq::multistep::{ab3_step, ab3_weights, integrated_derivative_weights, vfd_weights, Level, StepTriple};
use boussinesq::scenario::{
    runup_profile, time_averages, ConicalIslandParams, Gauge, GaugeSample, GaugeSpec, HammParams, MaxAccumulator, RunupPoint,
    RunupSpec,
};
use boussinesq::stepper::{
    cfl_stats, max_surface_deviation, ControllerParams, CrossTermScheme, Simulation, SimulationConfig, StepMode, StepRecord,
    TimeController,
};
use boussinesq::{Bathymetry, Field2, FieldState, Grid, PhysParams, GHOST};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn ulps(a: f64, b: f64) -> u64 {
    if a == b {
        return 0;
    }
    if a.signum() != b.signum() {
        return u64::MAX;
    }
    (a.to_bits() as i64 - b.to_bits() as i64).unsigned_abs()
}

// ---------------------------------------------------------------------------
// 1. Equal-step reduction

fn equal_step_reduction() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0u64;
    for _ in 0..10_000 {
        let dt = 10f64.powf(rng.gen_range(-6.0..0.0));
        let w = ab3_weights(StepTriple::uniform(dt).unwrap());
        worst = worst.max(ulps(w.w_i, 23.0 * dt / 12.0));
        worst = worst.max(ulps(w.w_im1, -16.0 * dt / 12.0));
        worst = worst.max(ulps(w.w_im2, 5.0 * dt / 12.0));
        let h2 = 2.0 * dt;
        let classic = [
            (Level::AtI, [3.0 / h2, -4.0 / h2, 1.0 / h2]),
            (Level::AtIm1, [1.0 / h2, 0.0, -1.0 / h2]),
            (Level::AtIm2, [-1.0 / h2, 4.0 / h2, -3.0 / h2]),
        ];
        for (level, c) in classic {
            let d = vfd_weights(level, dt, dt).unwrap();
            worst = worst.max(ulps(d.c_i, c[0])).max(ulps(d.c_im1, c[1])).max(ulps(d.c_im2, c[2]));
        }
    }
    verdict(worst <= 4, format!("worst deviation {worst} ulp over 10^4 steps"))
}

// ---------------------------------------------------------------------------
// 2. Composite uniform equivalence

fn smooth_field(grid: &Grid, rng: &mut ChaCha8Rng, base: f64, amp: f64) -> Field2 {
    let modes: Vec<(f64, f64, f64, f64)> =
        (0..3).map(|_| (rng.gen_range(0.2..1.5), rng.gen_range(0.2..1.5), rng.gen_range(0.0..6.3), rng.gen_range(-1.0..1.0))).collect();
    Field2::from_fn(grid, |x, y| base + amp * modes.iter().map(|(kx, ky, ph, a)| a * (kx * x + ph).sin() * (ky * y + 0.5 * ph).cos()).sum::<f64>() / 3.0)
}

fn random_smooth_case(seed: u64) -> (Grid, Bathymetry, FieldState) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = Grid::new(40, 30, 0.1, 0.1).unwrap();
    let bed = smooth_field(&grid, &mut rng, 0.0, 0.02);
    let bathy = Bathymetry::build(&grid, &bed, 0.08).unwrap();
    let w = smooth_field(&grid, &mut rng, 0.08, 0.004);
    let p = smooth_field(&grid, &mut rng, 0.0, 0.002);
    let q = smooth_field(&grid, &mut rng, 0.0, 0.002);
    let state = FieldState::new(&grid, &bathy, w, p, q).unwrap();
    (grid, bathy, state)
}

/// Direct transcription of the equal-step scheme: classical AB3 for all
/// rates, `2 F* - 3 F* + F*` for the cross terms, after two Euler steps.
fn uniform_scheme(grid: &Grid, bathy: &Bathymetry, mut s: FieldState, dt: f64, steps: usize) -> FieldState {
    let numerics = NumericsParams::default();
    let phys = PhysParams::default();
    let walls = BoundarySet::walls();
    let op = MomentumOperator::new(grid, bathy, &phys, walls.closures(), SolverKind::Thomas);
    let mut hist: Vec<StageSet> = Vec::new();
    let nx = grid.nx;
    for n in 0..steps {
        let t = n as f64 * dt;
        walls.apply_ghosts(grid, bathy, &mut s, t);
        let stage = compute_stages(&s, bathy, grid, &numerics, &phys, t).unwrap();
        let (mut us, mut vs) = compute_ustar_vstar(&s, bathy, grid, &phys);
        hist.insert(0, stage);
        hist.truncate(3);
        let h = &hist;
        let ab3 = |r: &dyn Fn(&StageSet) -> &Vec<f64>, c: usize| -> f64 {
            match n {
                0 | 1 => dt * r(&h[0])[c],
                _ => dt / 12.0 * (23.0 * r(&h[0])[c] - 16.0 * r(&h[1])[c] + 5.0 * r(&h[2])[c]),
            }
        };
        let cross = |r: &dyn Fn(&StageSet) -> &Vec<f64>, c: usize| -> f64 {
            match n {
                0 => 0.0,
                1 => r(&h[0])[c] - r(&h[1])[c],
                _ => 2.0 * r(&h[0])[c] - 3.0 * r(&h[1])[c] + r(&h[2])[c],
            }
        };
        let mut w = s.w.clone();
        for cj in 0..grid.ny {
            for ci in 0..nx {
                let (i, j, c) = (ci + GHOST, cj + GHOST, cj * nx + ci);
                w.set(i, j, s.w.at(i, j) + ab3(&|st| &st.e, c));
                us[c] += ab3(&|st| &st.f, c) + cross(&|st| &st.fstar, c);
                vs[c] += ab3(&|st| &st.g, c) + cross(&|st| &st.gstar, c);
            }
        }
        let (mut p, mut q) = (s.p.clone(), s.q.clone());
        op.solve_momentum(&us, &vs, &mut p, &mut q).unwrap();
        s = FieldState { w, p, q };
    }
    s
}

fn composite_uniform_equivalence() -> Verdict {
    let dt = 0.01;
    let mut worst: f64 = 0.0;
    for seed in 0..3 {
        let (grid, bathy, state) = random_smooth_case(seed);
        let oracle = uniform_scheme(&grid, &bathy, state.clone(), dt, 50);
        let mut cfg = SimulationConfig::new(dt);
        cfg.controller.dt_max = dt;
        cfg.cross_term = CrossTermScheme::Extrapolated;
        let mut sim = Simulation::new(grid.clone(), bathy.clone(), state, BoundarySet::walls(), cfg).unwrap();
        for _ in 0..50 {
            let r = sim.advance().unwrap();
            if r.dt != dt {
                return verdict(false, format!("controller left the forced step: {}", r.dt));
            }
        }
        let s = sim.state();
        for j in grid.interior_rows() {
            for i in grid.interior_cols() {
                worst = worst
                    .max((s.w.at(i, j) - oracle.w.at(i, j)).abs())
                    .max((s.p.at(i, j) - oracle.p.at(i, j)).abs())
                    .max((s.q.at(i, j) - oracle.q.at(i, j)).abs());
            }
        }
    }
    verdict(worst <= 1e-12, format!("max-norm difference {worst:.2e} after 50 steps (3 random states)"))
}

// ---------------------------------------------------------------------------
// 3. Temporal order

fn exact_ode(t: f64) -> f64 {
    // X' = -X + cos t with X(0) = 1.
    0.5 * (t.cos() + t.sin()) + 0.5 * (-t).exp()
}

fn random_steps(n: usize, t_end: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut s = vec![1.0f64];
    while s.len() < n {
        let last = *s.last().unwrap();
        let lo = 0.7f64.max(0.5 / last);
        let hi = 1.4f64.min(2.0 / last);
        s.push(last * rng.gen_range(lo..hi));
    }
    let total: f64 = s.iter().sum();
    s.iter().map(|v| v * t_end / total).collect()
}

fn temporal_order() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let t_end = 8.0;
    let rhs = |t: f64, x: f64| -x + t.cos();
    let mut pts = Vec::new();
    for level in 0..4 {
        let n = 40 << level;
        let steps = random_steps(n, t_end, &mut rng);
        assert!(steps.windows(2).all(|w| (0.7 - 1e-12..=1.4 + 1e-12).contains(&(w[1] / w[0]))));
        let mut t = vec![0.0];
        for dt in &steps {
            t.push(t.last().unwrap() + dt);
        }
        let mut x = vec![exact_ode(t[0]), exact_ode(t[1]), exact_ode(t[2])];
        for i in 2..n {
            let f = |k: usize| rhs(t[k], x[k]);
            let triple = StepTriple::new(steps[i], steps[i - 1], steps[i - 2]).unwrap();
            x.push(ab3_step(x[i], f(i), f(i - 1), f(i - 2), triple).unwrap());
        }
        let h = steps.iter().cloned().fold(0.0, f64::max);
        pts.push((h.ln(), (x[n] - exact_ode(t[n])).abs().ln()));
    }
    let m = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / m, sy / m);
    let slope = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / pts.iter().map(|(x, _)| (x - mx).powi(2)).sum::<f64>();
    verdict(slope >= 2.7, format!("fitted order {slope:.3} over 4 levels (step ratios in [0.7, 1.4])"))
}

// ---------------------------------------------------------------------------
// 4. Quadrature and stencil exactness

fn quadrature_exactness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let d0 = rng.gen_range(0.01..1.0);
        let d1 = d0 * rng.gen_range(0.2..5.0);
        let d2 = d1 * rng.gen_range(0.2..5.0);
        let ti = rng.gen_range(-2.0..2.0);
        let (t1, t2) = (ti - d1, ti - d1 - d2);
        let [a, b, c]: [f64; 3] = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let poly = |t: f64| a + b * t + c * t * t;
        let anti = |t: f64| a * t + b * t * t / 2.0 + c * t * t * t / 3.0;
        let dpoly = |t: f64| b + 2.0 * c * t;
        let triple = StepTriple::new(d0, d1, d2).unwrap();
        let rel = |got: f64, want: f64, scale: f64| (got - want).abs() / scale.max(want.abs());

        // AB3 on a quadratic right-hand side.
        let got = ab3_step(0.0, poly(ti), poly(t1), poly(t2), triple).unwrap();
        let scale = d0 * (a.abs() + b.abs() * (ti.abs() + d0) + c.abs() * (ti.abs() + d0).powi(2));
        worst = worst.max(rel(got, anti(ti + d0) - anti(ti), scale));

        // Difference stencils on a quadratic.
        let ys = [poly(ti), poly(t1), poly(t2)];
        let dscale = b.abs() + 2.0 * c.abs() * (ti.abs() + d1 + d2);
        for (level, t) in [(Level::AtI, ti), (Level::AtIm1, t1), (Level::AtIm2, t2)] {
            let w = vfd_weights(level, d1, d2).unwrap();
            worst = worst.max(rel(w.apply(ys[0], ys[1], ys[2]), dpoly(t), dscale));
        }

        // Cross-term weights integrate the derivative of a quadratic exactly.
        let cw = integrated_derivative_weights(triple);
        let got = cw[0] * ys[0] + cw[1] * ys[1] + cw[2] * ys[2];
        worst = worst.max(rel(got, poly(ti + d0) - poly(ti), d0 * dscale));
    }
    verdict(worst <= 1e-11, format!("worst relative error {worst:.2e} over 10^4 random step triples"))
}

// ---------------------------------------------------------------------------
// 5. Well-balance

fn well_balance() -> Verdict {
    let grid = Grid::new(101, 101, 0.1, 0.1).unwrap();
    let bed = Field2::from_fn(&grid, |x, y| 0.3 * (-((x - 5.05).powi(2) + (y - 5.05).powi(2)) / 2.25).exp());
    let bathy = Bathymetry::build(&grid, &bed, 0.5).unwrap();
    let state = FieldState::still(&grid, &bathy);
    let mut sim = Simulation::new(grid.clone(), bathy.clone(), state, BoundarySet::walls(), SimulationConfig::new(0.005)).unwrap();
    for _ in 0..1000 {
        if let Err(e) = sim.advance() {
            return verdict(false, e.to_string());
        }
    }
    let s = sim.state();
    let dev = max_surface_deviation(s, &bathy, &grid);
    let flux = s.p.max_abs_interior(&grid).max(s.q.max_abs_interior(&grid));
    let worst = dev.max(flux);
    verdict(worst <= 1e-11, format!("after 1000 adaptive steps max|w - ws| = {dev:.2e}, max|P|,|Q| = {flux:.2e}"))
}

// ---------------------------------------------------------------------------
// 6. Positivity and conservation

fn positivity_and_conservation() -> Verdict {
    let grid = Grid::new(400, 5, 0.025, 0.025).unwrap();
    let bathy = Bathymetry::build(&grid, &Field2::zeros(&grid), 0.5).unwrap();
    let w = Field2::from_fn(&grid, |x, _| if x < 5.0 { 0.5 } else { 0.0 });
    let state = FieldState::new(&grid, &bathy, w, Field2::zeros(&grid), Field2::zeros(&grid)).unwrap();
    let mut cfg = SimulationConfig::new(1e-4);
    cfg.phys.h_eps = 1e-3;
    let mut sim = Simulation::new(grid.clone(), bathy.clone(), state, BoundarySet::walls(), cfg).unwrap();
    let v0 = sim.state().volume(&grid, &bathy);
    let mut min_h = f64::MAX;
    for _ in 0..10_000 {
        if let Err(e) = sim.advance() {
            return verdict(false, e.to_string());
        }
        for j in grid.interior_rows() {
            for i in grid.interior_cols() {
                min_h = min_h.min(sim.state().depth(&bathy, i, j));
            }
        }
    }
    let drift = ((sim.state().volume(&grid, &bathy) - v0) / v0).abs();
    verdict(
        min_h >= 0.0 && drift <= 1e-8,
        format!("dam break onto dry bed, 10^4 steps to t = {:.2} s: min depth {min_h:.2e} m, mass drift {drift:.2e}", sim.time()),
    )
}

// ---------------------------------------------------------------------------
// 7. Tridiagonal solvers

/// Gaussian elimination with partial pivoting on the full matrix. Rows with
/// a zero in the pivot column are skipped, which keeps the cost quadratic
/// for banded input.
fn dense_solve(mut m: Vec<Vec<f64>>, mut r: Vec<f64>) -> Vec<f64> {
    let n = r.len();
    for k in 0..n {
        let p = (k..n).max_by(|&x, &y| m[x][k].abs().total_cmp(&m[y][k].abs())).unwrap();
        m.swap(k, p);
        r.swap(k, p);
        let last = (k..n).rev().find(|&c| m[k][c] != 0.0).unwrap_or(k);
        for row in k + 1..n {
            let f = m[row][k] / m[k][k];
            if f == 0.0 {
                continue;
            }
            for c in k..=last {
                m[row][c] -= f * m[k][c];
            }
            r[row] -= f * r[k];
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let mut s = r[k];
        for c in k + 1..n {
            if m[k][c] != 0.0 {
                s -= m[k][c] * x[c];
            }
        }
        x[k] = s / m[k][k];
    }
    x
}

fn tridiagonal_solvers() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for k in 0..1000 {
        let n = match k {
            0 => 2,
            1 => 1025,
            _ => rng.gen_range(2..=1025),
        };
        let a: Vec<f64> = (0..n).map(|i| if i == 0 { 0.0 } else { rng.gen_range(-1.0..1.0) }).collect();
        let c: Vec<f64> = (0..n).map(|i| if i + 1 == n { 0.0 } else { rng.gen_range(-1.0..1.0) }).collect();
        let b: Vec<f64> = (0..n).map(|i| (a[i].abs() + c[i].abs() + rng.gen_range(0.1..1.0)) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 }).collect();
        let rhs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut dense = vec![vec![0.0; n]; n];
        for i in 0..n {
            dense[i][i] = b[i];
            if i > 0 {
                dense[i][i - 1] = a[i];
            }
            if i + 1 < n {
                dense[i][i + 1] = c[i];
            }
        }
        let oracle = dense_solve(dense, rhs.clone());
        let sys = TridiagonalSystem::new(a, b, c, rhs).unwrap();
        let norm = oracle.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for x in [thomas_solve(&sys).unwrap(), cyclic_reduction_solve(&sys).unwrap()] {
            let e = x.iter().zip(&oracle).fold(0.0f64, |m, (u, v)| m.max((u - v).abs())) / norm;
            worst = worst.max(e);
        }
    }
    let mut exact = true;
    for n in [1usize, 2, 7, 64, 1025] {
        let rhs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1e3..1e3)).collect();
        let sys = TridiagonalSystem::identity(rhs.clone()).unwrap();
        exact &= thomas_solve(&sys).unwrap() == rhs && cyclic_reduction_solve(&sys).unwrap() == rhs;
    }
    verdict(
        worst <= 1e-10 && exact,
        format!("worst relative deviation from dense elimination {worst:.2e} over 10^3 systems; zero-depth systems exact: {exact}"),
    )
}

// ---------------------------------------------------------------------------
// Conical island runs shared by criteria 8-10.

const ISLAND_DURATION: f64 = 14.0;
const ISLAND_H_EPS: f64 = 1e-3;
const ISLAND_DT_INIT: f64 = 0.0033;

struct IslandRun {
    records: Vec<StepRecord>,
    /// CFL of every step recomputed from the state it started from.
    cfl: Vec<f64>,
    gauges: Vec<Gauge>,
    runup: Result<Vec<RunupPoint>, String>,
    abort: Option<String>,
    wall: f64,
}

fn island_run(mode: StepMode, dt: f64, detailed: bool) -> IslandRun {
    let params = ConicalIslandParams::default();
    let mut phys = PhysParams::default();
    phys.h_eps = ISLAND_H_EPS;
    let setup = params.build(&phys).unwrap();
    let mut cfg = SimulationConfig::new(dt);
    cfg.phys = phys;
    cfg.controller.mode = mode;
    let grid = setup.grid.clone();
    let mut gauges: Vec<Gauge> = setup.gauges.iter().map(|g| Gauge::new(g.clone(), &grid).unwrap()).collect();
    let mut sim = Simulation::new(setup.grid, setup.bathy, setup.state, setup.boundaries, cfg).unwrap();
    let mut max = MaxAccumulator::new(sim.state());
    let (mut records, mut cfl) = (Vec::new(), Vec::new());
    let start = Instant::now();
    let mut abort = None;
    while sim.time() < ISLAND_DURATION - 1e-12 {
        let rate = if detailed { cfl_stats(sim.state(), sim.bathymetry(), sim.grid(), sim.phys()).unwrap().max_rate } else { 0.0 };
        match sim.advance() {
            Ok(r) => {
                cfl.push(r.dt * rate);
                records.push(r);
            }
            Err(e) => {
                abort = Some(e.to_string());
                break;
            }
        }
        if detailed {
            max.update(sim.state());
            for g in gauges.iter_mut() {
                g.record(sim.state(), sim.bathymetry(), sim.phys(), sim.time());
            }
        }
    }
    let runup = if detailed {
        let spec = RunupSpec::for_island(&params.island, sim.grid());
        runup_profile(&max.max_w, sim.bathymetry(), sim.grid(), &spec, 72).map_err(|e| e.to_string())
    } else {
        Err("not computed".into())
    };
    IslandRun { records, cfl, gauges, runup, abort, wall: start.elapsed().as_secs_f64() }
}

// 8. CFL ceiling

fn cfl_ceiling(run: &IslandRun) -> Verdict {
    if let Some(a) = &run.abort {
        return verdict(false, format!("adaptive run aborted: {a}"));
    }
    let boot = TimeController::BOOTSTRAP_STEPS as usize;
    let limit = 0.125 * (1.0 + 1e-6);
    let worst = run.cfl[boot..].iter().cloned().fold(0.0, f64::max);
    let ceiling = worst <= limit;
    let dts: Vec<(f64, f64)> = run.records[boot..].iter().map(|r| (r.time, r.dt)).collect();
    let early = dts.iter().filter(|(t, _)| *t <= 2.0).map(|p| p.1).fold(0.0, f64::max);
    let (t_low, low) = dts.iter().cloned().fold((0.0, f64::MAX), |m, p| if p.1 < m.1 { p } else { m });
    let late = dts.iter().filter(|(t, _)| *t > t_low).map(|p| p.1).fold(0.0, f64::max);
    let dropped = low < 0.9 * early;
    let recovered = late - low >= 0.5 * (early - low);
    verdict(
        ceiling && dropped && recovered,
        format!(
            "max post-bootstrap CFL {worst:.9}; dt {early:.3e} s early, minimum {low:.3e} s at t = {t_low:.2} s, recovers to {late:.3e} s ({} steps, {:.0} s wall)",
            run.records.len(),
            run.wall
        ),
    )
}

// 9. Adaptive efficiency

fn fixed_is_stable(dt: f64, log: &mut Vec<String>) -> bool {
    let run = island_run(StepMode::Fixed, dt, false);
    let ok = run.abort.is_none();
    log.push(format!("{dt:.5}:{}", if ok { "stable" } else { "unstable" }));
    ok
}

fn adaptive_efficiency(run: &IslandRun) -> Verdict {
    let mean = run.records.iter().map(|r| r.dt).sum::<f64>() / run.records.len() as f64;
    let mut log = Vec::new();
    let mut lo = 0.5 * mean;
    while !fixed_is_stable(lo, &mut log) {
        lo *= 0.5;
    }
    let mut hi = 4.0 * mean;
    while fixed_is_stable(hi, &mut log) {
        lo = hi;
        hi *= 2.0;
    }
    while (hi - lo) / lo > 0.05 {
        let mid = 0.5 * (lo + hi);
        if fixed_is_stable(mid, &mut log) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let ratio = mean / lo;
    verdict(
        ratio >= 1.5,
        format!(
            "mean adaptive dt {mean:.4e} s, largest stable fixed dt {lo:.4e} s (first unstable {hi:.4e} s), ratio {ratio:.3}; runs [{}]",
            log.join(", ")
        ),
    )
}

// 10. Conical-island physics

fn leading_crest(samples: &[GaugeSample], threshold: f64) -> Option<f64> {
    let start = samples.iter().position(|s| s.eta > threshold)?;
    let end = samples[start..].iter().position(|s| s.eta < threshold).map_or(samples.len(), |k| start + k);
    Some(samples[start..end].iter().map(|s| s.eta).fold(f64::MIN, f64::max))
}

fn island_physics(run: &IslandRun) -> Verdict {
    let h = ConicalIslandParams::default().wave_height;
    let Some(front) = run.gauges.iter().find(|g| g.spec.id == "g6") else {
        return verdict(false, "front gauge missing");
    };
    let crest = leading_crest(&front.samples, 0.5 * h);
    let amp_ok = crest.is_some_and(|c| (c - h).abs() <= 0.25 * h);
    let points = match &run.runup {
        Ok(p) => p,
        Err(e) => return verdict(false, format!("runup profile failed: {e}")),
    };
    let r0 = ConicalIslandParams::default().island.shoreline_radius();
    let n = points.len();
    let asym = (1..n / 2).map(|k| (points[k].radius - points[n - k].radius).abs() / r0).fold(0.0, f64::max);
    // Azimuth 0 faces east, away from the incoming wave.
    let back = (r0 - points[0].radius) / r0;
    verdict(
        amp_ok && asym <= 0.02 && back > 0.0,
        format!(
            "front toe leading crest {:.4} m (H = {h} m); runup asymmetry {:.2}% of the shoreline radius; back-face runup {:.3} r0",
            crest.unwrap_or(f64::NAN),
            100.0 * asym,
            back
        ),
    )
}

// ---------------------------------------------------------------------------
// 11. Irregular sea over a rip channel

const HAMM_DURATION: f64 = 100.0;
const HAMM_SPIN_UP: f64 = 40.0;

/// Splits a step trace into maximal runs of falling and rising dt, each as
/// (duration, end dt over start dt). Flat steps extend the current run.
fn monotone_episodes(records: &[&StepRecord]) -> (Vec<(f64, f64)>, Vec<(f64, f64)>) {
    let (mut falls, mut rises) = (Vec::new(), Vec::new());
    if records.len() < 2 {
        return (falls, rises);
    }
    let mut start = 0;
    let mut falling = records[1].dt < records[0].dt;
    let mut close = |a: usize, b: usize, falling: bool| {
        let e = (records[b].time - records[a].time, records[b].dt / records[a].dt);
        if falling {
            falls.push(e)
        } else {
            rises.push(e)
        }
    };
    for k in 1..records.len() - 1 {
        let (d0, d1) = (records[k].dt, records[k + 1].dt);
        if d1 == d0 || (d1 < d0) == falling {
            continue;
        }
        close(start, k, falling);
        start = k;
        falling = d1 < d0;
    }
    close(start, records.len() - 1, falling);
    (falls, rises)
}

fn hamm_behaviour() -> Verdict {
    let params = HammParams::default();
    let mut phys = PhysParams::default();
    phys.c_f = 0.0025;
    phys.h_eps = 1e-3;
    let setup = params.build(&phys).unwrap();
    let mut cfg = SimulationConfig::new(0.00325);
    cfg.phys = phys;
    cfg.controller = ControllerParams { dt_max: 0.05, ..ControllerParams::with_dt(0.00325) };
    let grid = setup.grid.clone();
    let mut gauges: Vec<Gauge> = setup
        .gauges
        .iter()
        .map(|g| Gauge::new(GaugeSpec { record_interval: 0.05, ..g.clone() }, &grid).unwrap())
        .collect();
    let mut sim = Simulation::new(setup.grid, setup.bathy, setup.state, setup.boundaries, cfg).unwrap();
    let mut records = Vec::new();
    let start = Instant::now();
    while sim.time() < HAMM_DURATION - 1e-12 {
        match sim.advance() {
            Ok(r) => records.push(r),
            Err(e) => return verdict(false, format!("run aborted: {e}")),
        }
        for g in gauges.iter_mut() {
            g.record(sim.state(), sim.bathymetry(), sim.phys(), sim.time());
        }
    }
    let avg = |id: &str| {
        let g = gauges.iter().find(|g| g.spec.id == id).unwrap();
        time_averages(&g.samples, HAMM_SPIN_UP, HAMM_DURATION).unwrap()
    };
    let decay = |prefix: &str| avg(&format!("{prefix}_x14")).hs / avg(&format!("{prefix}_x11")).hs;
    let (beach, channel) = (decay("beach"), decay("rip"));
    let u_rip: Vec<f64> = (11..=14).map(|x| avg(&format!("rip_x{x:02}")).u_avg).collect();
    let u_mean = u_rip.iter().sum::<f64>() / u_rip.len() as f64;

    let post: Vec<&StepRecord> = records.iter().filter(|r| r.time >= HAMM_SPIN_UP).collect();
    // Rises are smoothed, so any decrease of dt is an instant drop to the CFL step.
    let drops = post.windows(2).filter(|w| w[1].dt < w[0].dt).count();
    let (falls, rises) = monotone_episodes(&post);
    let mean_len = |e: &[(f64, f64)]| e.iter().map(|x| x.0).sum::<f64>() / e.len().max(1) as f64;
    let (fall_len, rise_len) = (mean_len(&falls), mean_len(&rises));
    let deepest_fall = falls.iter().map(|x| x.1).fold(1.0, f64::min);
    let (dmin, dmax) = post.iter().fold((f64::MAX, 0.0f64), |(a, b), r| (a.min(r.dt), b.max(r.dt)));
    let fluctuates = drops >= 1 && fall_len < rise_len && deepest_fall < 0.95 && dmax / dmin > 1.05;
    verdict(
        beach < channel && u_mean < 0.0 && fluctuates,
        format!(
            "Hs(14 m)/Hs(11 m) beach {beach:.3} vs channel {channel:.3}; mean u in the channel at 11-14 m {u_mean:.4} m/s; dt in [{dmin:.3e}, {dmax:.3e}] s, {drops} instant drops, falls last {fall_len:.3} s vs rises {rise_len:.3} s on average, deepest fall x{deepest_fall:.3} ({} steps, {:.0} s wall)",
            records.len(),
            start.elapsed().as_secs_f64()
        ),
    )
}

fn main() {
    // Optional criterion numbers restrict the run; by default all are run.
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |n: usize| only.is_empty() || only.contains(&n);
    let mut failed = 0;
    let mut report = |n: usize, name: &str, v: Verdict| {
        println!("criterion {n:>2} {}: {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        if !v.pass {
            failed += 1;
        }
    };
    let cheap: [(usize, &str, fn() -> Verdict); 7] = [
        (1, "equal-step reduction", equal_step_reduction),
        (2, "composite uniform equivalence", composite_uniform_equivalence),
        (3, "temporal order", temporal_order),
        (4, "quadrature and stencil exactness", quadrature_exactness),
        (5, "well-balance", well_balance),
        (6, "positivity and conservation", positivity_and_conservation),
        (7, "tridiagonal solvers", tridiagonal_solvers),
    ];
    for (n, name, f) in cheap {
        if wanted(n) {
            report(n, name, f());
        }
    }
    if wanted(8) || wanted(9) || wanted(10) {
        let island = island_run(StepMode::Adaptive, ISLAND_DT_INIT, true);
        if wanted(8) {
            report(8, "CFL ceiling under adaptivity", cfl_ceiling(&island));
        }
        if wanted(9) {
            report(9, "adaptive efficiency", adaptive_efficiency(&island));
        }
        if wanted(10) {
            report(10, "conical-island physics", island_physics(&island));
        }
    }
    if wanted(11) {
        report(11, "irregular sea over a rip channel", hamm_behaviour());
    }
    println!(
        "criterion 12 OUT OF SCOPE: experimental gauge overlays, the shelf and barred rip-channel benchmarks, and real-time/GPU performance are not reproducible at desk scale"
    );
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

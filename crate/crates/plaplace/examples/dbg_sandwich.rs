use std::sync::Arc;
use plaplace::params::*;
use plaplace::sample::SampleGrid;
use plaplace::solver::*;
use plaplace::barriers::BarrierSide;
use plaplace::Trajectory;

fn main() {
    let cfg = validate_exponents(ExponentConfig {
        n: 2, p: 4.0, lambda: 0.5, lambda_prime: 0.8, k: 2.0, k_prime: 1.0,
    }).unwrap();
    let grid0 = SampleGrid::default_certification();
    let params = tune_constants(&cfg, &grid0, &SearchOptions::default()).unwrap();
    let traj = Trajectory::stationary(vec![0.0, 0.0]);
    let v0 = |r: f64| InitialData::GeometricMean.eval(&params, r);

    for (cells, dtinv) in [(512usize, 512.0f64), (1024, 1024.0)] {
        let t0 = std::time::Instant::now();
        let grid = Arc::new(AnnulusGrid::radial(3, 2, cells).unwrap());
        let opts = StepperOptions { dt: 1.0 / dtinv, ..Default::default() };
        let mut maxvp = 0.0f64;
        for side in [BarrierSide::Sub, BarrierSide::Super] {
            let run = solve_on_annulus(&grid, 1.0, side, &v0, &opts, &params, &traj).unwrap();
            let viol = sandwich_violation(&run, &params);
            for f in &run.fields { maxvp = maxvp.max(f.max_value()); }
            let total_iters: u32 = run.stats.iter().map(|s| s.inner_iters).sum();
            let energy_ok = run.stats.iter().all(|s| s.energy_new + s.penalty <= s.energy_anchor * (1.0 + 1e-8));
            println!("cells={cells} {:?}: viol={:+.6e} at (r={:.4}, t={:.4}) iters={} energy_ineq={} [{:?}]",
                side, viol.worst_gap, viol.worst_r, viol.worst_t, total_iters, energy_ok, t0.elapsed());
        }
        println!("  max v+ on grid ~ {maxvp:.3}  tol=1e-2*max={:.4}", 1e-2*maxvp);
    }
}

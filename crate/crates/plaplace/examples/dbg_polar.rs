use std::sync::Arc;
use plaplace::params::*;
use plaplace::sample::SampleGrid;
use plaplace::solver::*;
use plaplace::analysis::*;
use plaplace::barriers::BarrierSide;
use plaplace::Trajectory;

fn main() {
    let cfg = validate_exponents(ExponentConfig {
        n: 2, p: 4.0, lambda: 0.5, lambda_prime: 0.8, k: 2.0, k_prime: 1.0,
    }).unwrap();
    let grid0 = SampleGrid::default_certification();
    let params = tune_constants(&cfg, &grid0, &SearchOptions::default()).unwrap();
    let traj = Trajectory::log_drift(vec![0.0, 0.0], params.c_xi / 2.0, params.a_time, vec![1.0, 0.0]).unwrap();
    let v0 = |r: f64| InitialData::GeometricMean.eval(&params, r);
    let grid = Arc::new(AnnulusGrid::polar(3, 256, 64).unwrap());
    let opts = StepperOptions { dt: 1.0/256.0, ..Default::default() };

    let t0 = std::time::Instant::now();
    for side in [BarrierSide::Super, BarrierSide::Sub] {
        let run = solve_on_annulus(&grid, 1.0, side, &v0, &opts, &params, &traj).unwrap();
        let viol = sandwich_violation(&run, &params);
        let last = run.fields.last().unwrap();
        let window = inner_decade(last);
        let fit = fit_growth_exponent(last, window).unwrap();
        let gc = gradient_blowup_check(last, window).unwrap();
        let total_iters: u32 = run.stats.iter().map(|s| s.inner_iters).sum();
        println!("{side:?}: viol={:+.4e}, fit slope={:.4} (rms {:.3}), grad slope={:.4} monotone={}, iters={} [{:?}]",
            viol.worst_gap, fit.slope, fit.residual_rms, gc.slope, gc.monotone_divergence, total_iters, t0.elapsed());
        // argmin tracking
        let spec = ProbeSpec::default_for(last, &traj);
        for idx in [run.fields.len()/2, run.fields.len()-1] {
            let f = &run.fields[idx];
            let probe = reconstruct_u(f, &traj, &spec);
            let (xmin, vmin) = probe.argmin().unwrap();
            let pos = traj.position(f.time);
            let d = ((xmin[0]-pos[0]).powi(2) + (xmin[1]-pos[1]).powi(2)).sqrt();
            println!("   t={:.3}: argmin=({:+.4},{:+.4}) v={:.4e} xi=({:+.6},{:+.6}) dist={:.3} cells={:.2}",
                f.time, xmin[0], xmin[1], vmin, pos[0], pos[1], d, d/spec.spacing);
        }
        // fit at a few windows
        for w in [(0.25, 2.5), (0.4, 2.5), (0.25, 1.0)] {
            if let Ok(f2) = fit_growth_exponent(last, w) {
                println!("   window {w:?}: slope {:.4}", f2.slope);
            }
        }
    }
}

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
    for (nr, nt) in [(64usize, 16usize), (128, 32), (256, 64)] {
        let grid = Arc::new(AnnulusGrid::polar(3, nr, nt).unwrap());
        let opts = StepperOptions { dt: 1.0/256.0, ..Default::default() };
        let field = blend_initial(&grid, &v0, &params, BarrierSide::Sub).unwrap();
        let t0 = std::time::Instant::now();
        let (f1, st1) = step(&field, &opts, &params, &traj).unwrap();
        let t1 = std::time::Instant::now();
        let (_f2, st2) = step(&f1, &opts, &params, &traj).unwrap();
        println!("{nr}x{nt}: step1 {:?} ({} newton iters), step2 {:?} ({} iters)",
            t1 - t0, st1.inner_iters, t1.elapsed(), st2.inner_iters);
    }
}

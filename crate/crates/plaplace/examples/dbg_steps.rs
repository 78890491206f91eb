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
    let grid = Arc::new(AnnulusGrid::radial(3, 2, 512).unwrap());
    let opts = StepperOptions { dt: 1.0/512.0, inner_max_iter: 40, ..Default::default() };
    let mut field = blend_initial(&grid, &v0, &params, BarrierSide::Sub).unwrap();
    for k in 0..213 {
        match step(&field, &opts, &params, &traj) {
            Ok((next, st)) => {
                if k >= 211 { std::env::set_var("PLAP_DEBUG_NEWTON", "1"); } if st.inner_iters > 300 {
                    println!("step {k}: iters={} clamped={} E:{:.6e}->{:.6e}+{:.3e}", st.inner_iters, st.clamped, st.energy_anchor, st.energy_new, st.penalty);
                }
                field = next;
            }
            Err(e) => { println!("step {k}: ERROR {e}"); break; }
        }
    }
}

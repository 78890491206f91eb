use plaplace::params::*;
use plaplace::sample::SampleGrid;
use plaplace::barriers;

fn main() {
    let cfg = validate_exponents(ExponentConfig {
        n: 2, p: 4.0, lambda: 0.5, lambda_prime: 0.8, k: 2.0, k_prime: 1.0,
    }).unwrap();
    let grid = SampleGrid::default_certification();
    let t0 = std::time::Instant::now();
    let tuned = tune_constants(&cfg, &grid, &SearchOptions::default()).unwrap();
    println!("tuned in {:?}", t0.elapsed());
    println!("K={} C_xi={} sigma={} A={}", tuned.k_scale, tuned.c_xi, tuned.sigma, tuned.a_time);
    println!("R={} theta={} delta={} b={}", tuned.r_ratio, tuned.theta, tuned.delta, tuned.b_coeff);
    let t1 = std::time::Instant::now();
    let report = barriers::certify(&tuned, &grid);
    println!("certify in {:?} -> pass={}", t1.elapsed(), report.pass);
    for c in &report.checks {
        println!("  [{}] {:28} margin={:+.6e} at (r={:.3e}, t={:.3e}) samples={} skipped={}",
            if c.pass {"pass"} else {"FAIL"}, c.name, c.margin, c.worst_r, c.worst_t, c.samples, c.skipped);
    }
}

use plaplace::barriers::radial_p_laplacian;
use plaplace::sample::log_spaced;

fn main() {
    for (n, p) in [(2u32, 3.0f64), (2, 4.0), (3, 5.0)] {
        let m = (p - n as f64) / (p - 1.0);
        let mut worst = 0.0f64;
        let mut worst_r = 0.0;
        for r in log_spaced(1e-3, 1e3, 1000) {
            let q = r.powf(m - 2.0);
            let ddf = (m * (m - 1.0)) * q;
            let df = m * (r * q);
            let v = radial_p_laplacian(df, ddf, r, n, p).unwrap().abs();
            if v > worst { worst = v; worst_r = r; }
        }
        println!("(n={n}, p={p}): worst |residual| = {worst:.3e} at r = {worst_r:.3e}");
    }
}

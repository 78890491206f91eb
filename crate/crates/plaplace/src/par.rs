//! Thin execution shim: rayon when the `parallel` feature is on, plain
//! loops otherwise. All reductions are deterministic regardless of thread
//! scheduling: sums are accumulated per fixed-size chunk and combined in
//! index order, minima break ties toward the smaller index.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub(crate) const SUM_CHUNK: usize = 1024;

/// Map `f` over `0..n` into a vector.
pub(crate) fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Sum `f(i)` over `0..n` with a fixed chunked reduction tree.
pub(crate) fn sum_indexed<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let nchunks = n.div_ceil(SUM_CHUNK);
    let partial = |c: usize| -> f64 {
        let lo = c * SUM_CHUNK;
        let hi = (lo + SUM_CHUNK).min(n);
        let mut acc = 0.0;
        for i in lo..hi {
            acc += f(i);
        }
        acc
    };
    #[cfg(feature = "parallel")]
    let partials: Vec<f64> = (0..nchunks).into_par_iter().map(partial).collect();
    #[cfg(not(feature = "parallel"))]
    let partials: Vec<f64> = (0..nchunks).map(partial).collect();
    partials.iter().sum()
}

/// Minimum of `f(i)` over `0..n` together with the smallest attaining index.
/// Returns `None` for `n == 0` or if every value is NaN.
pub(crate) fn min_indexed<F>(n: usize, f: F) -> Option<(usize, f64)>
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let pick = |a: Option<(usize, f64)>, b: Option<(usize, f64)>| match (a, b) {
        (None, x) | (x, None) => x,
        (Some((ia, va)), Some((ib, vb))) => {
            if vb < va || (vb == va && ib < ia) {
                Some((ib, vb))
            } else {
                Some((ia, va))
            }
        }
    };
    let eval = |i: usize| {
        let v = f(i);
        if v.is_nan() {
            None
        } else {
            Some((i, v))
        }
    };
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(eval).reduce(|| None, pick)
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(eval).fold(None, pick)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_matches_sequential() {
        let n = 10_000;
        let s = sum_indexed(n, |i| (i as f64).sin());
        let mut q = 0.0;
        // Same chunking as the parallel path.
        let mut c = 0;
        while c < n {
            let hi = (c + SUM_CHUNK).min(n);
            let mut acc = 0.0;
            for i in c..hi {
                acc += (i as f64).sin();
            }
            q += acc;
            c = hi;
        }
        assert_eq!(s, q);
    }

    #[test]
    fn min_breaks_ties_by_index() {
        let vals = [3.0, 1.0, 2.0, 1.0];
        let got = min_indexed(vals.len(), |i| vals[i]).unwrap();
        assert_eq!(got, (1, 1.0));
    }

    #[test]
    fn min_skips_nan() {
        let vals = [f64::NAN, 5.0];
        assert_eq!(min_indexed(vals.len(), |i| vals[i]), Some((1, 5.0)));
        assert_eq!(min_indexed(1, |_| f64::NAN), None);
    }
}

//! Discrete p-Dirichlet energies on annuli and the stepping primitives.
//!
//! Both modes discretize the regularized energy
//! `E(w) = ∫ (|∇w|² + ε²)^{p/2} / p` (angular measure omitted; it scales
//! both sides of every inequality the stepper guarantees):
//!
//! * radial: faces between log-spaced nodes, weight `r̃^{n−1} h` per face;
//! * polar (n = 2): quadrilateral cells with a one-point quadrature of the
//!   full gradient magnitude, so the energy is variational in 2D as well.
//!
//! The proximal step minimizes `E(w) + Σ m (w − w*)²/(2dt)` over interior
//! nodes by damped Newton (exact tridiagonal solve in 1D, Jacobi-
//! preconditioned CG in 2D) starting from `w*`, accepting only
//! energy-decreasing iterates; the implicit-Euler energy inequality
//! `E(new) + ‖new−w*‖²/(2dt) ≤ E(w*)` therefore holds for every step.
//! The explicit scheme is forward Euler on the same discrete operator
//! under the CFL-type bound `dt ≤ 0.2 h_min² / ((p−1) max Φ)` with
//! `Φ = (|∇w|²+ε²)^{(p−2)/2}`.

use crate::par;
use crate::solver::SolverError;

fn psi_prime(g: f64, p: f64, eps2: f64) -> f64 {
    let s = g * g + eps2;
    if s == 0.0 {
        return 0.0;
    }
    g * s.powf((p - 2.0) / 2.0)
}

fn psi_second(g: f64, p: f64, eps2: f64) -> f64 {
    let s = g * g + eps2;
    if s == 0.0 {
        return 0.0;
    }
    s.powf((p - 4.0) / 2.0) * ((p - 1.0) * g * g + eps2)
}

// ---------------------------------------------------------------------
// Radial mode
// ---------------------------------------------------------------------

/// Face/mass geometry of a radial log grid with weight `r^{n−1} dr`.
#[derive(Debug, Clone)]
pub(crate) struct RadialDisc {
    /// Face widths `r[j+1] − r[j]`.
    pub h: Vec<f64>,
    /// Face weights `r̃^{n−1} h` with `r̃ = √(r_j r_{j+1})`.
    pub wface: Vec<f64>,
    /// Flux coefficients `r̃^{n−1}`.
    pub cflux: Vec<f64>,
    /// Node masses `(r̃_j^n − r̃_{j−1}^n)/n`; boundary entries unused.
    pub mass: Vec<f64>,
}

impl RadialDisc {
    pub fn new(r: &[f64], n: u32) -> Self {
        let nn = n as f64;
        let nf = r.len() - 1;
        let mut h = Vec::with_capacity(nf);
        let mut wface = Vec::with_capacity(nf);
        let mut cflux = Vec::with_capacity(nf);
        let mut rtilde = Vec::with_capacity(nf);
        for j in 0..nf {
            let hj = r[j + 1] - r[j];
            let rt = (r[j] * r[j + 1]).sqrt();
            h.push(hj);
            rtilde.push(rt);
            cflux.push(rt.powi(n as i32 - 1));
            wface.push(rt.powi(n as i32 - 1) * hj);
        }
        let mut mass = vec![0.0; r.len()];
        for j in 1..r.len() - 1 {
            mass[j] = (rtilde[j].powf(nn) - rtilde[j - 1].powf(nn)) / nn;
        }
        Self {
            h,
            wface,
            cflux,
            mass,
        }
    }

    pub fn energy(&self, w: &[f64], p: f64, eps: f64) -> f64 {
        let eps2 = eps * eps;
        par::sum_indexed(self.h.len(), |j| {
            let g = (w[j + 1] - w[j]) / self.h[j];
            self.wface[j] * (g * g + eps2).powf(p / 2.0) / p
        })
    }

    /// p-Dirichlet quadrature without regularization, `Σ W |g|^p` (angular
    /// measure not included).
    pub fn dirichlet_energy(&self, w: &[f64], p: f64) -> f64 {
        par::sum_indexed(self.h.len(), |j| {
            let g = (w[j + 1] - w[j]) / self.h[j];
            self.wface[j] * g.abs().powf(p)
        })
    }

    /// Gradient of `E` at interior nodes (boundary entries left zero).
    fn grad_energy(&self, w: &[f64], p: f64, eps2: f64, out: &mut [f64]) {
        let n = w.len();
        for j in 1..n - 1 {
            let gl = (w[j] - w[j - 1]) / self.h[j - 1];
            let gr = (w[j + 1] - w[j]) / self.h[j];
            out[j] = self.cflux[j - 1] * psi_prime(gl, p, eps2) - self.cflux[j] * psi_prime(gr, p, eps2);
        }
        out[0] = 0.0;
        out[n - 1] = 0.0;
    }
}

pub(crate) struct ProxOutcome {
    pub iters: u32,
    pub energy_anchor: f64,
    pub energy_new: f64,
    pub penalty: f64,
}

/// One implicit minimizing-movement step in radial mode. `anchor` carries
/// the boundary values of the new time level; they are kept fixed.
pub(crate) fn prox_step_radial(
    disc: &RadialDisc,
    anchor: &[f64],
    p: f64,
    eps: f64,
    dt: f64,
    tol: f64,
    max_iter: u32,
) -> Result<(Vec<f64>, ProxOutcome), SolverError> {
    let n = anchor.len();
    let eps2 = eps * eps;
    let objective = |w: &[f64]| -> f64 {
        let mut f = disc.energy(w, p, eps);
        for j in 1..n - 1 {
            let d = w[j] - anchor[j];
            f += disc.mass[j] * d * d / (2.0 * dt);
        }
        f
    };
    let energy_anchor = disc.energy(anchor, p, eps);
    let mut w = anchor.to_vec();
    let mut fw = energy_anchor;
    let mut grad = vec![0.0; n];
    let mut iters = 0;
    loop {
        disc.grad_energy(&w, p, eps2, &mut grad);
        let mut gmax = 0.0f64;
        for j in 1..n - 1 {
            grad[j] += disc.mass[j] * (w[j] - anchor[j]) / dt;
            gmax = gmax.max(grad[j].abs() / disc.mass[j]);
        }
        if gmax <= tol {
            break;
        }
        if iters >= max_iter {
            return Err(SolverError::Nonconvergence {
                iters,
                residual: gmax,
            });
        }
        iters += 1;
        // Tridiagonal Newton system on interior nodes.
        let ni = n - 2;
        let mut diag = vec![0.0; ni];
        let mut off = vec![0.0; ni.saturating_sub(1)];
        for j in 1..n - 1 {
            let cl = disc.wface[j - 1] / (disc.h[j - 1] * disc.h[j - 1]);
            let cr = disc.wface[j] / (disc.h[j] * disc.h[j]);
            let sl = psi_second((w[j] - w[j - 1]) / disc.h[j - 1], p, eps2);
            let sr = psi_second((w[j + 1] - w[j]) / disc.h[j], p, eps2);
            diag[j - 1] = cl * sl + cr * sr + disc.mass[j] / dt;
            if j < n - 2 {
                off[j - 1] = -cr * sr;
            }
        }
        let rhs: Vec<f64> = (1..n - 1).map(|j| -grad[j]).collect();
        let d = solve_tridiagonal(&diag, &off, &rhs);
        let slope: f64 = (1..n - 1).map(|j| grad[j] * d[j - 1]).sum();
        debug_assert!(slope <= 0.0);
        // A predicted decrease of a few ulps of F cannot be resolved by
        // the line search; the iterate is converged in energy and value.
        if slope.abs() <= 32.0 * f64::EPSILON * fw.abs() {
            break;
        }
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<f64> = (0..n)
                .map(|j| {
                    if j == 0 || j == n - 1 {
                        w[j]
                    } else {
                        w[j] + alpha * d[j - 1]
                    }
                })
                .collect();
            let ft = objective(&trial);
            if ft <= fw + 1e-4 * alpha * slope {
                w = trial;
                fw = ft;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if std::env::var_os("PLAP_DEBUG_NEWTON").is_some() {
            eprintln!(
                "  newton iter {iters}: gmax={:.3e} slope={:.3e} alpha={alpha:.3e} accepted={accepted} fw={fw:.12e}",
                {
                    let mut g = 0.0f64;
                    for j in 1..n - 1 {
                        g = g.max(grad[j].abs() / disc.mass[j]);
                    }
                    g
                },
                slope
            );
        }
        if !accepted {
            // Search direction exhausted at machine precision.
            break;
        }
    }
    let energy_new = disc.energy(&w, p, eps);
    let mut penalty = 0.0;
    for j in 1..n - 1 {
        let d = w[j] - anchor[j];
        penalty += disc.mass[j] * d * d / (2.0 * dt);
    }
    Ok((
        w,
        ProxOutcome {
            iters,
            energy_anchor,
            energy_new,
            penalty,
        },
    ))
}

fn solve_tridiagonal(diag: &[f64], off: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = if n > 1 { off[0] / diag[0] } else { 0.0 };
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - off[i - 1] * c[i - 1];
        if i < n - 1 {
            c[i] = off[i] / m;
        }
        d[i] = (rhs[i] - off[i - 1] * d[i - 1]) / m;
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        let next = x[i + 1];
        x[i] -= c[i] * next;
    }
    x
}

/// Largest stable explicit step `0.2 h_min² / ((p−1) max Φ)`.
pub(crate) fn explicit_dt_bound_radial(disc: &RadialDisc, w: &[f64], p: f64, eps: f64) -> f64 {
    let eps2 = eps * eps;
    let mut phi_max = 0.0f64;
    let mut h_min = f64::INFINITY;
    for j in 0..disc.h.len() {
        let g = (w[j + 1] - w[j]) / disc.h[j];
        phi_max = phi_max.max((g * g + eps2).powf((p - 2.0) / 2.0));
        h_min = h_min.min(disc.h[j]);
    }
    if phi_max == 0.0 {
        f64::INFINITY
    } else {
        0.2 * h_min * h_min / ((p - 1.0) * phi_max)
    }
}

/// Forward Euler on the discrete operator; fails if `dt` exceeds the
/// recomputed stability bound.
pub(crate) fn explicit_step_radial(
    disc: &RadialDisc,
    w: &[f64],
    p: f64,
    eps: f64,
    dt: f64,
) -> Result<Vec<f64>, SolverError> {
    let bound = explicit_dt_bound_radial(disc, w, p, eps);
    if dt > bound {
        return Err(SolverError::Stability {
            dt,
            bound,
        });
    }
    let n = w.len();
    let eps2 = eps * eps;
    let mut grad = vec![0.0; n];
    disc.grad_energy(w, p, eps2, &mut grad);
    let mut out = w.to_vec();
    for j in 1..n - 1 {
        out[j] -= dt * grad[j] / disc.mass[j];
    }
    Ok(out)
}

// ---------------------------------------------------------------------
// Polar mode (n = 2)
// ---------------------------------------------------------------------

/// Cell geometry of a polar log-radial × uniform-angle grid.
#[derive(Debug, Clone)]
pub(crate) struct PolarDisc {
    pub r: Vec<f64>,
    pub ntheta: usize,
    pub dphi: f64,
    /// Radial face widths per layer.
    pub h: Vec<f64>,
    /// Cell-center radii per layer (geometric mean).
    pub rc: Vec<f64>,
    /// Cell areas `rc · h · Δφ` per layer.
    pub area: Vec<f64>,
    /// Node mass per ring: `(r̃_j² − r̃_{j−1}²)/2 · Δφ`.
    pub mass_ring: Vec<f64>,
}

impl PolarDisc {
    pub fn new(r: &[f64], ntheta: usize) -> Self {
        let dphi = std::f64::consts::TAU / ntheta as f64;
        let layers = r.len() - 1;
        let mut h = Vec::with_capacity(layers);
        let mut rc = Vec::with_capacity(layers);
        let mut area = Vec::with_capacity(layers);
        for j in 0..layers {
            let hj = r[j + 1] - r[j];
            let c = (r[j] * r[j + 1]).sqrt();
            h.push(hj);
            rc.push(c);
            area.push(c * hj * dphi);
        }
        let mut mass_ring = vec![0.0; r.len()];
        for j in 1..r.len() - 1 {
            mass_ring[j] = (rc[j] * rc[j] - rc[j - 1] * rc[j - 1]) / 2.0 * dphi;
        }
        Self {
            r: r.to_vec(),
            ntheta,
            dphi,
            h,
            rc,
            area,
            mass_ring,
        }
    }

    pub fn layers(&self) -> usize {
        self.r.len() - 1
    }

    pub fn nodes(&self) -> usize {
        self.r.len() * self.ntheta
    }

    #[inline]
    fn idx(&self, j: usize, m: usize) -> usize {
        j * self.ntheta + m
    }

    /// Cell gradient `(g_r, g_φ)` of cell `(j, m)`.
    #[inline]
    fn cell_gradient(&self, w: &[f64], j: usize, m: usize) -> (f64, f64) {
        let mp = (m + 1) % self.ntheta;
        let (a, b) = (w[self.idx(j, m)], w[self.idx(j, mp)]);
        let (c, d) = (w[self.idx(j + 1, m)], w[self.idx(j + 1, mp)]);
        let g_r = ((c + d) - (a + b)) / (2.0 * self.h[j]);
        let g_p = ((b + d) - (a + c)) / (2.0 * self.rc[j] * self.dphi);
        (g_r, g_p)
    }

    pub fn energy(&self, w: &[f64], p: f64, eps: f64) -> f64 {
        let eps2 = eps * eps;
        let nt = self.ntheta;
        par::sum_indexed(self.layers() * nt, |c| {
            let (j, m) = (c / nt, c % nt);
            let (g_r, g_p) = self.cell_gradient(w, j, m);
            self.area[j] * (g_r * g_r + g_p * g_p + eps2).powf(p / 2.0) / p
        })
    }

    pub fn dirichlet_energy(&self, w: &[f64], p: f64) -> f64 {
        let nt = self.ntheta;
        par::sum_indexed(self.layers() * nt, |c| {
            let (j, m) = (c / nt, c % nt);
            let (g_r, g_p) = self.cell_gradient(w, j, m);
            self.area[j] * (g_r * g_r + g_p * g_p).powf(p / 2.0)
        })
    }

    /// Per-cell flux buffer `(area Φ g_r, area Φ g_p)`, Φ = s^{(p−2)/2}.
    fn cell_fluxes(&self, w: &[f64], p: f64, eps2: f64) -> Vec<(f64, f64)> {
        let nt = self.ntheta;
        par::map_indexed(self.layers() * nt, |c| {
            let (j, m) = (c / nt, c % nt);
            let (g_r, g_p) = self.cell_gradient(w, j, m);
            let phi = (g_r * g_r + g_p * g_p + eps2).powf((p - 2.0) / 2.0);
            (self.area[j] * phi * g_r, self.area[j] * phi * g_p)
        })
    }

    /// Gathers the energy gradient at node `(j, m)` from the four adjacent
    /// cells of a per-cell flux buffer.
    #[inline]
    fn gather(&self, fluxes: &[(f64, f64)], j: usize, m: usize) -> f64 {
        let nt = self.ntheta;
        let mm = (m + nt - 1) % nt;
        let mut g = 0.0;
        if j > 0 {
            let (ar, ap) = (1.0 / (2.0 * self.h[j - 1]), 1.0 / (2.0 * self.rc[j - 1] * self.dphi));
            let (fr, fp) = fluxes[(j - 1) * nt + mm];
            g += fr * ar + fp * ap; // this node is the outer-forward corner
            let (fr, fp) = fluxes[(j - 1) * nt + m];
            g += fr * ar - fp * ap; // outer-backward corner
        }
        if j < self.layers() {
            let (ar, ap) = (1.0 / (2.0 * self.h[j]), 1.0 / (2.0 * self.rc[j] * self.dphi));
            let (fr, fp) = fluxes[j * nt + mm];
            g += -fr * ar + fp * ap; // inner-forward corner
            let (fr, fp) = fluxes[j * nt + m];
            g += -fr * ar - fp * ap; // inner-backward corner
        }
        g
    }

    /// Energy gradient over all nodes (boundary rings zeroed).
    fn grad_energy(&self, w: &[f64], p: f64, eps2: f64) -> Vec<f64> {
        let fluxes = self.cell_fluxes(w, p, eps2);
        let nt = self.ntheta;
        let last = self.r.len() - 1;
        par::map_indexed(self.nodes(), |i| {
            let (j, m) = (i / nt, i % nt);
            if j == 0 || j == last {
                0.0
            } else {
                self.gather(&fluxes, j, m)
            }
        })
    }
}

/// One implicit step in polar mode: damped Newton with matrix-free CG.
pub(crate) fn prox_step_polar(
    disc: &PolarDisc,
    anchor: &[f64],
    p: f64,
    eps: f64,
    dt: f64,
    tol: f64,
    max_iter: u32,
) -> Result<(Vec<f64>, ProxOutcome), SolverError> {
    let eps2 = eps * eps;
    let nt = disc.ntheta;
    let last = disc.r.len() - 1;
    let nodes = disc.nodes();
    let interior = |i: usize| {
        let j = i / nt;
        j > 0 && j < last
    };
    let mass = |i: usize| disc.mass_ring[i / nt];

    let objective = |w: &[f64]| -> f64 {
        disc.energy(w, p, eps)
            + par::sum_indexed(nodes, |i| {
                if interior(i) {
                    let d = w[i] - anchor[i];
                    mass(i) * d * d / (2.0 * dt)
                } else {
                    0.0
                }
            })
    };

    let energy_anchor = disc.energy(anchor, p, eps);
    let mut w = anchor.to_vec();
    let mut fw = energy_anchor;
    let mut iters = 0;
    loop {
        let mut grad = disc.grad_energy(&w, p, eps2);
        let mut gmax = 0.0f64;
        for i in 0..nodes {
            if interior(i) {
                grad[i] += mass(i) * (w[i] - anchor[i]) / dt;
                gmax = gmax.max(grad[i].abs() / mass(i));
            }
        }
        if gmax <= tol {
            break;
        }
        if iters >= max_iter {
            return Err(SolverError::Nonconvergence {
                iters,
                residual: gmax,
            });
        }
        iters += 1;

        // Newton system H d = −grad, matrix-free CG. The radial coupling
        // is far stiffer than the angular one on log grids, so the
        // preconditioner solves a tridiagonal system along each angular
        // column (full diagonal, radial off-diagonals, angular mix
        // dropped).
        let cells = par::map_indexed(disc.layers() * nt, |c| {
            let (j, m) = (c / nt, c % nt);
            let (g_r, g_p) = disc.cell_gradient(&w, j, m);
            let s = g_r * g_r + g_p * g_p + eps2;
            let phi1 = s.powf((p - 2.0) / 2.0);
            let phi2 = if s == 0.0 { 0.0 } else { (p - 2.0) * s.powf((p - 4.0) / 2.0) };
            (g_r, g_p, phi1, phi2)
        });
        let hv = |u: &[f64]| -> Vec<f64> {
            let hflux = par::map_indexed(disc.layers() * nt, |c| {
                let (j, m) = (c / nt, c % nt);
                let mp = (m + 1) % nt;
                let (a, b) = (u[disc.idx(j, m)], u[disc.idx(j, mp)]);
                let (cc, d) = (u[disc.idx(j + 1, m)], u[disc.idx(j + 1, mp)]);
                let ur = ((cc + d) - (a + b)) / (2.0 * disc.h[j]);
                let up = ((b + d) - (a + cc)) / (2.0 * disc.rc[j] * disc.dphi);
                let (g_r, g_p, phi1, phi2) = cells[c];
                let gu = g_r * ur + g_p * up;
                (
                    disc.area[j] * (phi1 * ur + phi2 * gu * g_r),
                    disc.area[j] * (phi1 * up + phi2 * gu * g_p),
                )
            });
            par::map_indexed(nodes, |i| {
                if !interior(i) {
                    return 0.0;
                }
                let (j, m) = (i / nt, i % nt);
                disc.gather(&hflux, j, m) + mass(i) * u[i] / dt
            })
        };
        // Jacobi diagonal via corner-wise gather.
        let diag = par::map_indexed(nodes, |i| {
            if !interior(i) {
                return 1.0;
            }
            let (j, m) = (i / nt, i % nt);
            let mm = (m + nt - 1) % nt;
            let mut dsum = mass(i) / dt;
            let mut add = |jc: usize, mc: usize, sr: f64, sp: f64| {
                let (g_r, g_p, phi1, phi2) = cells[jc * nt + mc];
                let ar = 1.0 / (2.0 * disc.h[jc]);
                let ap = 1.0 / (2.0 * disc.rc[jc] * disc.dphi);
                let gdir = sr * g_r * ar + sp * g_p * ap;
                dsum += disc.area[jc] * (phi1 * (ar * ar + ap * ap) + phi2 * gdir * gdir);
            };
            if j > 0 {
                add(j - 1, mm, 1.0, 1.0);
                add(j - 1, m, 1.0, -1.0);
            }
            if j < disc.layers() {
                add(j, mm, -1.0, 1.0);
                add(j, m, -1.0, -1.0);
            }
            dsum
        });

        // Radial line couplings: for nodes (j,m)-(j+1,m) keep the
        // `ar²`-aligned parts of the two shared cells (m−1 and m).
        let line_off = par::map_indexed(disc.layers() * nt, |c| {
            let (j, m) = (c / nt, c % nt);
            let mm = (m + nt - 1) % nt;
            let ar = 1.0 / (2.0 * disc.h[j]);
            let mut couple = 0.0;
            for cc in [j * nt + mm, j * nt + m] {
                let (g_r, _g_p, phi1, phi2) = cells[cc];
                couple += disc.area[j] * (phi1 + phi2 * g_r * g_r) * ar * ar;
            }
            -couple
        });
        let last_ring = disc.r.len() - 1;
        let psolve = |res: &[f64]| -> Vec<f64> {
            let cols: Vec<Vec<f64>> = par::map_indexed(nt, |m| {
                let ni = last_ring - 1;
                let mut dg = vec![0.0; ni];
                let mut off = vec![0.0; ni.saturating_sub(1)];
                let mut rhs_col = vec![0.0; ni];
                for j in 1..last_ring {
                    dg[j - 1] = diag[j * nt + m];
                    rhs_col[j - 1] = res[j * nt + m];
                    if j < last_ring - 1 {
                        off[j - 1] = line_off[j * nt + m];
                    }
                }
                solve_tridiagonal(&dg, &off, &rhs_col)
            });
            let mut z = vec![0.0; nodes];
            for m in 0..nt {
                for j in 1..last_ring {
                    z[j * nt + m] = cols[m][j - 1];
                }
            }
            z
        };
        let rhs: Vec<f64> = grad.iter().map(|g| -g).collect();
        let d = cg_solve(&hv, &rhs, &psolve, &interior, 200, 1e-4);
        let slope: f64 = (0..nodes).filter(|&i| interior(i)).map(|i| grad[i] * d[i]).sum();
        if slope.abs() <= 32.0 * f64::EPSILON * fw.abs() {
            break;
        }
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<f64> = (0..nodes)
                .map(|i| if interior(i) { w[i] + alpha * d[i] } else { w[i] })
                .collect();
            let ft = objective(&trial);
            if ft <= fw + 1e-4 * alpha * slope {
                w = trial;
                fw = ft;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let energy_new = disc.energy(&w, p, eps);
    let penalty = par::sum_indexed(nodes, |i| {
        if interior(i) {
            let d = w[i] - anchor[i];
            mass(i) * d * d / (2.0 * dt)
        } else {
            0.0
        }
    });
    Ok((
        w,
        ProxOutcome {
            iters,
            energy_anchor,
            energy_new,
            penalty,
        },
    ))
}

/// Preconditioned CG for the SPD Newton system restricted to interior
/// nodes. Inner products run sequentially so results do not depend on the
/// thread schedule.
fn cg_solve<Hv, Ps, I>(
    hv: &Hv,
    rhs: &[f64],
    psolve: &Ps,
    interior: &I,
    max_iter: usize,
    rel_tol: f64,
) -> Vec<f64>
where
    Hv: Fn(&[f64]) -> Vec<f64>,
    Ps: Fn(&[f64]) -> Vec<f64>,
    I: Fn(usize) -> bool,
{
    let n = rhs.len();
    let dot = |a: &[f64], b: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            if interior(i) {
                s += a[i] * b[i];
            }
        }
        s
    };
    let mut x = vec![0.0; n];
    let mut res = rhs.to_vec();
    let rhs_norm = dot(&res, &res).sqrt();
    if rhs_norm == 0.0 {
        return x;
    }
    let mut z = psolve(&res);
    let mut pdir = z.clone();
    let mut rz = dot(&res, &z);
    for _ in 0..max_iter {
        let hp = hv(&pdir);
        let php = dot(&pdir, &hp);
        if php <= 0.0 {
            break;
        }
        let alpha = rz / php;
        for i in 0..n {
            if interior(i) {
                x[i] += alpha * pdir[i];
                res[i] -= alpha * hp[i];
            }
        }
        if dot(&res, &res).sqrt() <= rel_tol * rhs_norm {
            break;
        }
        z = psolve(&res);
        let rz_new = dot(&res, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            if interior(i) {
                pdir[i] = z[i] + beta * pdir[i];
            }
        }
    }
    x
}

pub(crate) fn explicit_dt_bound_polar(disc: &PolarDisc, w: &[f64], p: f64, eps: f64) -> f64 {
    let eps2 = eps * eps;
    let nt = disc.ntheta;
    let mut phi_max = 0.0f64;
    let mut h_min = f64::INFINITY;
    for j in 0..disc.layers() {
        h_min = h_min.min(disc.h[j]).min(disc.rc[j] * disc.dphi);
        for m in 0..nt {
            let (g_r, g_p) = disc.cell_gradient(w, j, m);
            phi_max = phi_max.max((g_r * g_r + g_p * g_p + eps2).powf((p - 2.0) / 2.0));
        }
    }
    if phi_max == 0.0 {
        f64::INFINITY
    } else {
        0.2 * h_min * h_min / ((p - 1.0) * phi_max)
    }
}

pub(crate) fn explicit_step_polar(
    disc: &PolarDisc,
    w: &[f64],
    p: f64,
    eps: f64,
    dt: f64,
) -> Result<Vec<f64>, SolverError> {
    let bound = explicit_dt_bound_polar(disc, w, p, eps);
    if dt > bound {
        return Err(SolverError::Stability { dt, bound });
    }
    let grad = disc.grad_energy(w, p, eps * eps);
    let nt = disc.ntheta;
    let last = disc.r.len() - 1;
    Ok(par::map_indexed(disc.nodes(), |i| {
        let j = i / nt;
        if j == 0 || j == last {
            w[i]
        } else {
            w[i] - dt * grad[i] / disc.mass_ring[j]
        }
    }))
}

/// Explicit upwind transport step for `∂_t v = a·∇v` with a constant
/// Cartesian velocity, sub-cycled to respect the transport CFL. For
/// `a·∇v` the donor value sits on the side the shift pulls from, so a
/// positive component takes the forward difference.
pub(crate) fn advect_polar(disc: &PolarDisc, w: &[f64], vel: [f64; 2], dt: f64) -> (Vec<f64>, u32) {
    let speed = (vel[0] * vel[0] + vel[1] * vel[1]).sqrt();
    if speed == 0.0 || dt == 0.0 {
        return (w.to_vec(), 0);
    }
    let nt = disc.ntheta;
    let last = disc.r.len() - 1;
    // Global CFL estimate: |a_r|/h + |a_φ|/(r Δφ) ≤ speed (1/h_min + 1/(r Δφ)_min).
    let mut rate = 0.0f64;
    for j in 1..last {
        let h_loc = disc.h[j - 1].min(disc.h[j]);
        rate = rate.max(speed / h_loc + speed / (disc.r[j] * disc.dphi));
    }
    let nsub = (dt * rate / 0.9).ceil().max(1.0) as u32;
    let sub_dt = dt / nsub as f64;
    let mut cur = w.to_vec();
    for _ in 0..nsub {
        let next = par::map_indexed(disc.nodes(), |i| {
            let (j, m) = (i / nt, i % nt);
            if j == 0 || j == last {
                return cur[i];
            }
            let phi = m as f64 * disc.dphi;
            let (sin, cos) = phi.sin_cos();
            let a_r = vel[0] * cos + vel[1] * sin;
            let a_p = -vel[0] * sin + vel[1] * cos;
            let d_r = if a_r >= 0.0 {
                (cur[disc.idx(j + 1, m)] - cur[i]) / disc.h[j]
            } else {
                (cur[i] - cur[disc.idx(j - 1, m)]) / disc.h[j - 1]
            };
            let d_p = if a_p >= 0.0 {
                (cur[disc.idx(j, (m + 1) % nt)] - cur[i]) / disc.dphi
            } else {
                (cur[i] - cur[disc.idx(j, (m + nt - 1) % nt)]) / disc.dphi
            };
            cur[i] + sub_dt * (a_r * d_r + a_p * d_p / disc.r[j])
        });
        cur = next;
    }
    (cur, nsub)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample::log_spaced;

    #[test]
    fn tridiagonal_solver_matches_dense_solution() {
        let diag = vec![4.0, 5.0, 6.0, 5.0];
        let off = vec![-1.0, -2.0, -1.0];
        let x_true = [1.0, -2.0, 3.0, 0.5];
        // rhs = T x
        let rhs = vec![
            4.0 * 1.0 + -1.0 * -2.0,
            -1.0 * 1.0 + 5.0 * -2.0 + -2.0 * 3.0,
            -2.0 * -2.0 + 6.0 * 3.0 + -1.0 * 0.5,
            -1.0 * 3.0 + 5.0 * 0.5,
        ];
        let x = solve_tridiagonal(&diag, &off, &rhs);
        for (a, b) in x.iter().zip(x_true.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn proximal_p2_step_equals_implicit_heat_step() {
        // p = 2, ε = 0: the proximal step minimizes a quadratic, so it must
        // match the linear implicit-Euler solve of the same discretization.
        let r = log_spaced(0.25, 4.0, 65);
        let disc = RadialDisc::new(&r, 2);
        let n = r.len();
        let anchor: Vec<f64> = r.iter().map(|&x| 1.0 + x.powf(0.5) + (x * 2.0).sin() * 0.1).collect();
        let dt = 1e-2;
        let (w, _) = prox_step_radial(&disc, &anchor, 2.0, 0.0, dt, 1e-10, 60).unwrap();
        // Direct linear solve: (M/dt + L) w = M/dt anchor + boundary fluxes.
        let ni = n - 2;
        let mut diag = vec![0.0; ni];
        let mut off = vec![0.0; ni - 1];
        let mut rhs = vec![0.0; ni];
        for j in 1..n - 1 {
            let cl = disc.wface[j - 1] / (disc.h[j - 1] * disc.h[j - 1]);
            let cr = disc.wface[j] / (disc.h[j] * disc.h[j]);
            diag[j - 1] = cl + cr + disc.mass[j] / dt;
            if j < n - 2 {
                off[j - 1] = -cr;
            }
            rhs[j - 1] = disc.mass[j] * anchor[j] / dt;
        }
        rhs[0] += disc.wface[0] / (disc.h[0] * disc.h[0]) * anchor[0];
        rhs[ni - 1] += disc.wface[n - 2] / (disc.h[n - 2] * disc.h[n - 2]) * anchor[n - 1];
        let direct = solve_tridiagonal(&diag, &off, &rhs);
        for j in 1..n - 1 {
            assert!(
                (w[j] - direct[j - 1]).abs() < 1e-9,
                "node {j}: {} vs {}",
                w[j],
                direct[j - 1]
            );
        }
    }

    #[test]
    fn constant_field_is_a_fixed_point() {
        let r = log_spaced(0.25, 4.0, 33);
        let disc = RadialDisc::new(&r, 3);
        let anchor = vec![2.5; r.len()];
        let (w, out) = prox_step_radial(&disc, &anchor, 4.0, 0.0, 0.05, 1e-14, 60).unwrap();
        for v in &w {
            assert!((v - 2.5).abs() < 1e-13);
        }
        assert_eq!(out.iters, 0);
        let we = explicit_step_radial(&disc, &anchor, 4.0, 0.0, 1e-3).unwrap();
        for v in &we {
            assert!((v - 2.5).abs() < 1e-13);
        }
    }

    #[test]
    fn p_harmonic_profile_is_steady() {
        // f(r) = r^{(p−n)/(p−1)} is an exact steady state. On a log grid
        // with geometric-mean face radii the discrete flux
        // r̃^{n−1}|g|^{p−2}g is constant in j for this profile (the
        // exponents cancel identically), so the discrete drift sits at
        // roundoff rather than at the generic O(h) truncation level.
        for (n, p) in [(2u32, 4.0), (3, 5.0)] {
            let m = (p - n as f64) / (p - 1.0);
            for cells in [64usize, 128] {
                let r = log_spaced(0.25, 4.0, cells + 1);
                let disc = RadialDisc::new(&r, n);
                let anchor: Vec<f64> = r.iter().map(|&x| x.powf(m)).collect();
                let dt = 1e-3;
                let (w, _) = prox_step_radial(&disc, &anchor, p, 0.0, dt, 1e-11, 80).unwrap();
                let drift = w
                    .iter()
                    .zip(&anchor)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0f64, f64::max);
                assert!(drift <= 1e-10, "n={n} p={p} cells={cells}: drift {drift:.3e}");
            }
        }
    }

    #[test]
    fn explicit_step_rejects_large_dt() {
        let r = log_spaced(0.25, 4.0, 129);
        let disc = RadialDisc::new(&r, 2);
        let w: Vec<f64> = r.iter().map(|&x| x.powf(0.5)).collect();
        let bound = explicit_dt_bound_radial(&disc, &w, 4.0, 1e-6);
        assert!(explicit_step_radial(&disc, &w, 4.0, 1e-6, bound * 2.0).is_err());
        assert!(explicit_step_radial(&disc, &w, 4.0, 1e-6, bound * 0.5).is_ok());
    }

    #[test]
    fn explicit_and_proximal_agree_to_first_order() {
        // On a smooth field both schemes deviate O(dt); their difference
        // must shrink proportionally with dt.
        let r = log_spaced(0.5, 2.0, 33);
        let disc = RadialDisc::new(&r, 2);
        let w0: Vec<f64> = r.iter().map(|&x| x.powf(0.6)).collect();
        let mut diffs = Vec::new();
        for scale in [1.0, 0.5] {
            let dt = 0.5 * scale * explicit_dt_bound_radial(&disc, &w0, 4.0, 1e-6);
            let we = explicit_step_radial(&disc, &w0, 4.0, 1e-6, dt).unwrap();
            let (wp, _) = prox_step_radial(&disc, &w0, 4.0, 1e-6, dt, 1e-12, 60).unwrap();
            let diff = we
                .iter()
                .zip(&wp)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            diffs.push(diff / dt); // O(dt²) difference → ratio ∝ dt
        }
        assert!(diffs[1] < diffs[0] * 0.7, "scaled diffs: {diffs:?}");
    }

    #[test]
    fn polar_energy_matches_radial_for_radial_fields() {
        let r = log_spaced(0.25, 4.0, 65);
        let radial = RadialDisc::new(&r, 2);
        let polar = PolarDisc::new(&r, 16);
        let prof: Vec<f64> = r.iter().map(|&x| x.powf(0.7)).collect();
        let mut w2 = vec![0.0; polar.nodes()];
        for (j, &v) in prof.iter().enumerate() {
            for m in 0..16 {
                w2[polar.idx(j, m)] = v;
            }
        }
        let e1 = radial.energy(&prof, 4.0, 1e-3) * std::f64::consts::TAU;
        let e2 = polar.energy(&w2, 4.0, 1e-3);
        assert!((e1 - e2).abs() / e1 < 1e-12);
    }

    #[test]
    fn polar_gradient_matches_finite_differences_of_energy() {
        let r = log_spaced(0.5, 2.0, 9);
        let disc = PolarDisc::new(&r, 8);
        let eps = 1e-2;
        let mut w: Vec<f64> = (0..disc.nodes())
            .map(|i| {
                let (j, m) = (i / 8, i % 8);
                r[j].powf(0.6) * (1.0 + 0.1 * (m as f64).sin())
            })
            .collect();
        let grad = disc.grad_energy(&w, 4.0, eps * eps);
        let h = 1e-7;
        for &i in &[9usize, 20, 35, 50] {
            w[i] += h;
            let e_plus = disc.energy(&w, 4.0, eps);
            w[i] -= 2.0 * h;
            let e_minus = disc.energy(&w, 4.0, eps);
            w[i] += h;
            let fd = (e_plus - e_minus) / (2.0 * h);
            let scale = fd.abs().max(grad[i].abs()).max(1e-12);
            assert!(
                (fd - grad[i]).abs() / scale < 1e-5,
                "node {i}: fd {fd:.6e} vs analytic {:.6e}",
                grad[i]
            );
        }
    }

    #[test]
    fn polar_proximal_step_decreases_objective() {
        let r = log_spaced(0.25, 4.0, 33);
        let disc = PolarDisc::new(&r, 16);
        let anchor: Vec<f64> = (0..disc.nodes())
            .map(|i| {
                let (j, m) = (i / 16, i % 16);
                r[j].powf(0.65) * (1.0 + 0.05 * ((m as f64) * 0.7).cos())
            })
            .collect();
        let dt = 1e-2;
        let (w, out) = prox_step_polar(&disc, &anchor, 4.0, 1e-4, dt, 1e-10, 50).unwrap();
        assert!(out.energy_new + out.penalty <= out.energy_anchor * (1.0 + 1e-12));
        // Boundary rings untouched.
        for m in 0..16 {
            assert_eq!(w[m], anchor[m]);
            let lastring = (r.len() - 1) * 16;
            assert_eq!(w[lastring + m], anchor[lastring + m]);
        }
    }

    #[test]
    fn advection_transports_against_the_gradient_sign() {
        // ∂_t v = a·∇v with a pointing along +x: values are pulled inward
        // from the +x side, so a field increasing in x decreases nowhere.
        let r = log_spaced(0.5, 2.0, 33);
        let disc = PolarDisc::new(&r, 32);
        let w: Vec<f64> = (0..disc.nodes())
            .map(|i| {
                let (j, m) = (i / 32, i % 32);
                let phi = m as f64 * disc.dphi;
                r[j] * phi.cos() // v = x
            })
            .collect();
        let (out, subs) = advect_polar(&disc, &w, [0.5, 0.0], 0.01);
        assert!(subs >= 1);
        // v = x has a·∇v = 0.5 exactly; every interior node rises by dt·0.5
        // up to upwind truncation error.
        for j in 1..r.len() - 1 {
            for m in 0..32 {
                let i = disc.idx(j, m);
                let inc = out[i] - w[i];
                assert!((inc - 0.005).abs() < 0.005 * 0.2 + 1e-4, "inc {inc}");
            }
        }
    }

    #[test]
    fn advection_leaves_constant_fields_alone() {
        let r = log_spaced(0.5, 2.0, 17);
        let disc = PolarDisc::new(&r, 64);
        let w = vec![1.7; disc.nodes()];
        let (out, _) = advect_polar(&disc, &w, [0.2, -0.3], 0.01);
        for (a, b) in out.iter().zip(&w) {
            assert_eq!(a, b);
        }
    }
}

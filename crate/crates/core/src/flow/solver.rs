//! Coarse-to-fine Horn–Schunck solver.
//!
//! Each pyramid level repeatedly warps the second frame by the current
//! estimate, linearises the brightness-constancy term around it and runs
//! Jacobi sweeps on the resulting quadratic energy
//!
//! ```text
//! E(u, v) = Σ_i (Ix·u + Iy·v + c)²  +  α² Σ_{i~j} w_ij [(u_i − u_j)² + (v_i − v_j)²]
//! ```
//!
//! where `c = It − Ix·u0 − Iy·v0`, `i~j` runs over unordered pairs of 8-connected
//! in-bounds neighbours and `w` is the classic 1/6 (edge) / 1/12 (corner)
//! averaging kernel. Each Jacobi update is the exact per-pixel minimiser given
//! the neighbour averages, and because `S + W` is positive semi-definite for this
//! kernel the simultaneous update never increases `E`.

use crate::image::{build_pyramid, Plane};

use super::FlowEstimatorConfig;

const EDGE_W: f64 = 1.0 / 6.0;
const CORNER_W: f64 = 1.0 / 12.0;
const NEIGHBOURS: [(isize, isize, f64); 8] = [
    (-1, 0, EDGE_W),
    (1, 0, EDGE_W),
    (0, -1, EDGE_W),
    (0, 1, EDGE_W),
    (-1, -1, CORNER_W),
    (1, -1, CORNER_W),
    (-1, 1, CORNER_W),
    (1, 1, CORNER_W),
];
/// Coarsest pyramid level keeps at least this many pixels per side.
const MIN_LEVEL_SIDE: usize = 4;

/// Per-call solver report. Non-convergence is not an error.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlowDiagnostics {
    /// Whether the finest level stopped on `convergence_eps`.
    pub converged: bool,
    /// Jacobi sweeps run per level summed over warps, coarsest first.
    pub iterations: Vec<usize>,
    /// Energy before the first sweep and after every sweep of the last warp
    /// at the finest level. Only filled when requested.
    pub energy_trace: Vec<f64>,
}

/// Linearised data term of one level.
struct LevelProblem {
    width: usize,
    height: usize,
    ix: Vec<f64>,
    iy: Vec<f64>,
    c: Vec<f64>,
    /// Sum of in-bounds neighbour weights per pixel.
    wsum: Vec<f64>,
    alpha2: f64,
}

impl LevelProblem {
    fn new(a: &Plane, b: &Plane, u0: &[f64], v0: &[f64], alpha2: f64) -> Self {
        let (w, h) = (a.width(), a.height());
        let warped = Plane::from_fn(w, h, |x, y| {
            let i = y * w + x;
            b.sample(x as f64 + u0[i], y as f64 + v0[i])
        });
        let n = w * h;
        let mut ix = vec![0.0; n];
        let mut iy = vec![0.0; n];
        let mut c = vec![0.0; n];
        let mut wsum = vec![0.0; n];
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let (xi, yi) = (x as isize, y as isize);
                let dx = |p: &Plane| 0.5 * (p.get_clamped(xi + 1, yi) - p.get_clamped(xi - 1, yi));
                let dy = |p: &Plane| 0.5 * (p.get_clamped(xi, yi + 1) - p.get_clamped(xi, yi - 1));
                ix[i] = 0.5 * (dx(a) + dx(&warped));
                iy[i] = 0.5 * (dy(a) + dy(&warped));
                let (tx, ty) = (x as f64 + u0[i], y as f64 + v0[i]);
                if tx < 0.0 || ty < 0.0 || tx > (w - 1) as f64 || ty > (h - 1) as f64 {
                    // the match left the frame: no data, smoothness fills in
                    ix[i] = 0.0;
                    iy[i] = 0.0;
                } else {
                    let it = warped.get(x, y) - a.get(x, y);
                    c[i] = it - ix[i] * u0[i] - iy[i] * v0[i];
                }
                wsum[i] = NEIGHBOURS
                    .iter()
                    .filter(|(ox, oy, _)| in_bounds(xi + ox, yi + oy, w, h))
                    .map(|&(_, _, wt)| wt)
                    .sum();
            }
        }
        Self {
            width: w,
            height: h,
            ix,
            iy,
            c,
            wsum,
            alpha2,
        }
    }

    fn energy(&self, u: &[f64], v: &[f64]) -> f64 {
        let (w, h) = (self.width, self.height);
        let mut data = 0.0;
        let mut smooth = 0.0;
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let r = self.ix[i] * u[i] + self.iy[i] * v[i] + self.c[i];
                data += r * r;
                // forward half of the neighbourhood visits each unordered pair once
                for &(ox, oy, wt) in &[
                    (1isize, 0isize, EDGE_W),
                    (0, 1, EDGE_W),
                    (1, 1, CORNER_W),
                    (-1, 1, CORNER_W),
                ] {
                    let (nx, ny) = (x as isize + ox, y as isize + oy);
                    if in_bounds(nx, ny, w, h) {
                        let j = ny as usize * w + nx as usize;
                        let du = u[i] - u[j];
                        let dv = v[i] - v[j];
                        smooth += wt * (du * du + dv * dv);
                    }
                }
            }
        }
        data + self.alpha2 * smooth
    }

    /// One Jacobi sweep from (`u`, `v`) into (`nu`, `nv`); returns the largest
    /// per-pixel component change.
    fn sweep(&self, u: &[f64], v: &[f64], nu: &mut [f64], nv: &mut [f64]) -> f64 {
        let (w, h) = (self.width, self.height);
        let mut max_change: f64 = 0.0;
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let (mut su, mut sv) = (0.0, 0.0);
                for &(ox, oy, wt) in &NEIGHBOURS {
                    let (nx, ny) = (x as isize + ox, y as isize + oy);
                    if in_bounds(nx, ny, w, h) {
                        let j = ny as usize * w + nx as usize;
                        su += wt * u[j];
                        sv += wt * v[j];
                    }
                }
                let s = self.wsum[i];
                let (ubar, vbar) = (su / s, sv / s);
                let (gx, gy) = (self.ix[i], self.iy[i]);
                let t = (gx * ubar + gy * vbar + self.c[i]) / (self.alpha2 * s + gx * gx + gy * gy);
                nu[i] = ubar - gx * t;
                nv[i] = vbar - gy * t;
                max_change = max_change
                    .max((nu[i] - u[i]).abs())
                    .max((nv[i] - v[i]).abs());
            }
        }
        max_change
    }
}

#[inline]
fn in_bounds(x: isize, y: isize, w: usize, h: usize) -> bool {
    x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h
}

/// Solves for the forward flow from `a` to `b` (same dimensions, checked by
/// the caller). Returns `(u, v, diagnostics)` at full resolution.
pub(crate) fn solve(
    a: &Plane,
    b: &Plane,
    cfg: &FlowEstimatorConfig,
    track_energy: bool,
) -> (Vec<f64>, Vec<f64>, FlowDiagnostics) {
    let pyr_a = build_pyramid(a, cfg.pyramid_levels, MIN_LEVEL_SIDE);
    let pyr_b = build_pyramid(b, pyr_a.len(), MIN_LEVEL_SIDE);
    let mut diag = FlowDiagnostics::default();

    let coarsest = pyr_a.len() - 1;
    let mut u = vec![0.0; pyr_a[coarsest].width() * pyr_a[coarsest].height()];
    let mut v = u.clone();
    let mut prev_dims = (pyr_a[coarsest].width(), pyr_a[coarsest].height());

    for level in (0..=coarsest).rev() {
        let (la, lb) = (&pyr_a[level], &pyr_b[level]);
        let (w, h) = (la.width(), la.height());
        if (w, h) != prev_dims {
            u = upsample_component(&u, prev_dims, (w, h), w as f64 / prev_dims.0 as f64);
            v = upsample_component(&v, prev_dims, (w, h), h as f64 / prev_dims.1 as f64);
            prev_dims = (w, h);
        }
        let finest = level == 0;
        let mut sweeps = 0;
        let mut converged = false;
        for warp in 0..cfg.warps {
            let problem = LevelProblem::new(la, lb, &u, &v, cfg.smoothness_weight);
            let traced = finest && track_energy && warp + 1 == cfg.warps;
            if traced {
                diag.energy_trace.push(problem.energy(&u, &v));
            }
            let mut nu = vec![0.0; u.len()];
            let mut nv = vec![0.0; v.len()];
            converged = false;
            for _ in 0..cfg.iterations {
                let change = problem.sweep(&u, &v, &mut nu, &mut nv);
                std::mem::swap(&mut u, &mut nu);
                std::mem::swap(&mut v, &mut nv);
                sweeps += 1;
                if traced {
                    diag.energy_trace.push(problem.energy(&u, &v));
                }
                if change < cfg.convergence_eps {
                    converged = true;
                    break;
                }
            }
        }
        diag.iterations.push(sweeps);
        if finest {
            diag.converged = converged;
        }
    }
    (u, v, diag)
}

fn upsample_component(
    c: &[f64],
    from: (usize, usize),
    to: (usize, usize),
    scale: f64,
) -> Vec<f64> {
    let p = Plane::new(from.0, from.1, c.to_vec());
    p.resize(to.0, to.1).into_data().into_iter().map(|x| x * scale).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn textured(w: usize, h: usize, dx: f64, dy: f64) -> Plane {
        Plane::from_fn(w, h, |x, y| {
            let (x, y) = (x as f64 - dx, y as f64 - dy);
            128.0 + 40.0 * (0.5 * x).sin() * (0.4 * y).cos() + 25.0 * (0.3 * x + 0.7 * y).sin()
        })
    }

    #[test]
    fn energy_trace_non_increasing() {
        let a = textured(24, 20, 0.0, 0.0);
        let b = textured(24, 20, 1.3, -0.6);
        let cfg = FlowEstimatorConfig {
            convergence_eps: 1e-9,
            iterations: 60,
            ..Default::default()
        };
        let (_, _, d) = solve(&a, &b, &cfg, true);
        assert!(d.energy_trace.len() >= 2);
        assert!(d.energy_trace.len() <= cfg.iterations + 1);
        for pair in d.energy_trace.windows(2) {
            assert!(pair[1] <= pair[0] * (1.0 + 1e-12), "{} -> {}", pair[0], pair[1]);
        }
        assert!(d.energy_trace.last().unwrap() < &d.energy_trace[0]);
    }

    #[test]
    fn subpixel_translation_recovered() {
        let a = textured(32, 32, 0.0, 0.0);
        let b = textured(32, 32, 0.7, 0.4);
        let (u, v, _) = solve(&a, &b, &FlowEstimatorConfig::default(), false);
        // interior only
        let mut us = Vec::new();
        let mut vs = Vec::new();
        for y in 6..26 {
            for x in 6..26 {
                us.push(u[y * 32 + x]);
                vs.push(v[y * 32 + x]);
            }
        }
        let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
        assert!((mean(&us) - 0.7).abs() < 0.1, "u {}", mean(&us));
        assert!((mean(&vs) - 0.4).abs() < 0.1, "v {}", mean(&vs));
    }
}

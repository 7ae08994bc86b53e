//! Quasi-Newton minimization on unconstrained coordinates, and the maps
//! from those coordinates onto constrained parameter vectors.

use crate::error::{Error, Result};

/// Smallest share kept when mapping a boundary value into free coordinates.
const EDGE: f64 = 1e-8;

/// One block of a parameter vector and its map from free coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum Block {
    /// Unrestricted.
    Free,
    /// `theta > lower`, via `lower + exp(u)`.
    Above(f64),
    /// `lo < theta < hi`, via a logistic map.
    Interval(f64, f64),
    /// `theta_j = w_j p_j` with `p` the first entries of a softmax over
    /// `[u_1, .., u_m, 0]`, so that every `theta_j >= 0` and
    /// `sum_j theta_j / w_j < 1`. With weights `[1, 2, 1]` this is the
    /// region `a + g/2 + b < 1`.
    Simplex(Vec<f64>),
    /// Held at its value; takes no free coordinate.
    Fixed(f64),
}

impl Block {
    fn len(&self) -> usize {
        match self {
            Block::Simplex(w) => w.len(),
            _ => 1,
        }
    }

    fn free_len(&self) -> usize {
        match self {
            Block::Simplex(w) => w.len(),
            Block::Fixed(_) => 0,
            _ => 1,
        }
    }
}

/// Ordered blocks covering a parameter vector.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Transform {
    blocks: Vec<Block>,
}

impl Transform {
    pub fn new(blocks: Vec<Block>) -> Self {
        Transform { blocks }
    }

    pub fn push(&mut self, b: Block) -> &mut Self {
        self.blocks.push(b);
        self
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    /// Length of the parameter vector.
    pub fn dim(&self) -> usize {
        self.blocks.iter().map(Block::len).sum()
    }

    pub fn free_dim(&self) -> usize {
        self.blocks.iter().map(Block::free_len).sum()
    }

    pub fn to_theta(&self, u: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        let mut k = 0;
        for b in &self.blocks {
            match b {
                Block::Free => out.push(u[k]),
                Block::Above(lo) => out.push(lo + u[k].exp()),
                Block::Interval(lo, hi) => out.push(lo + (hi - lo) / (1.0 + (-u[k]).exp())),
                Block::Simplex(w) => {
                    let m = w.len();
                    let top = u[k..k + m].iter().copied().fold(0.0, f64::max);
                    let e: Vec<f64> = u[k..k + m].iter().map(|v| (v - top).exp()).collect();
                    let total = e.iter().sum::<f64>() + (-top).exp();
                    out.extend(e.iter().zip(w).map(|(e, w)| w * e / total));
                }
                Block::Fixed(v) => out.push(*v),
            }
            k += b.free_len();
        }
        out
    }

    /// Inverse map. Values on or outside a boundary are pulled just inside.
    pub fn to_free(&self, theta: &[f64]) -> Result<Vec<f64>> {
        if theta.len() != self.dim() {
            return Err(Error::invalid(format!(
                "parameter vector has {} entries, expected {}",
                theta.len(),
                self.dim()
            )));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("starting values must be finite"));
        }
        let mut out = Vec::with_capacity(self.free_dim());
        let mut k = 0;
        for b in &self.blocks {
            match b {
                Block::Free => out.push(theta[k]),
                Block::Above(lo) => out.push((theta[k] - lo).max(EDGE * (1.0 + lo.abs())).ln()),
                Block::Interval(lo, hi) => {
                    let s = ((theta[k] - lo) / (hi - lo)).clamp(EDGE, 1.0 - EDGE);
                    out.push((s / (1.0 - s)).ln());
                }
                Block::Simplex(w) => {
                    let mut p: Vec<f64> =
                        theta[k..k + w.len()].iter().zip(w).map(|(t, w)| (t / w).max(EDGE)).collect();
                    let total: f64 = p.iter().sum();
                    if total > 1.0 - EDGE {
                        let scale = (1.0 - EDGE) / total;
                        p.iter_mut().for_each(|v| *v *= scale);
                    }
                    let slack = 1.0 - p.iter().sum::<f64>();
                    out.extend(p.iter().map(|v| (v / slack).ln()));
                }
                Block::Fixed(_) => {}
            }
            k += b.len();
        }
        Ok(out)
    }

    /// Whether `theta` satisfies every block strictly.
    pub fn contains(&self, theta: &[f64]) -> bool {
        if theta.len() != self.dim() {
            return false;
        }
        let mut k = 0;
        for b in &self.blocks {
            let ok = match b {
                Block::Free => theta[k].is_finite(),
                Block::Above(lo) => theta[k] > *lo && theta[k].is_finite(),
                Block::Interval(lo, hi) => theta[k] > *lo && theta[k] < *hi,
                Block::Simplex(w) => {
                    let s = &theta[k..k + w.len()];
                    s.iter().all(|v| *v >= 0.0)
                        && s.iter().zip(w).map(|(t, w)| t / w).sum::<f64>() < 1.0
                }
                Block::Fixed(v) => theta[k] == *v,
            };
            if !ok {
                return false;
            }
            k += b.len();
        }
        true
    }

    /// Per entry: whether the value sits within `tol` (relative) of a
    /// boundary of its block.
    pub fn near_bound(&self, theta: &[f64], tol: f64) -> Vec<bool> {
        let mut out = Vec::with_capacity(theta.len());
        let mut k = 0;
        for b in &self.blocks {
            match b {
                Block::Free | Block::Fixed(_) => out.push(false),
                Block::Above(lo) => out.push(theta[k] - lo <= tol * (1.0 + lo.abs())),
                Block::Interval(lo, hi) => {
                    let span = hi - lo;
                    out.push(theta[k] - lo <= tol * span || hi - theta[k] <= tol * span)
                }
                Block::Simplex(w) => {
                    let s = &theta[k..k + w.len()];
                    let slack = 1.0 - s.iter().zip(w).map(|(t, w)| t / w).sum::<f64>();
                    for v in s {
                        out.push(*v <= tol || slack <= tol);
                    }
                }
            }
            k += b.len();
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Stop when the sup-norm of the gradient is below this.
    pub grad_tol: f64,
    /// Stop when the relative objective change stays below this.
    pub f_tol: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions { max_iter: 500, grad_tol: 1e-8, f_tol: 1e-13 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
    pub message: String,
}

/// Central-difference gradient; nonfinite values count as `+inf`.
pub fn numeric_gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64]) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|j| {
            let h = 1e-6 * (1.0 + x[j].abs());
            xp[j] = x[j] + h;
            let fp = finite_or_inf(f(&xp));
            xp[j] = x[j] - h;
            let fm = finite_or_inf(f(&xp));
            xp[j] = x[j];
            let g = (fp - fm) / (2.0 * h);
            if g.is_finite() {
                g
            } else {
                0.0
            }
        })
        .collect()
}

#[inline]
fn finite_or_inf(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

/// BFGS with Armijo backtracking and numeric gradients.
pub fn bfgs<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], opts: &BfgsOptions) -> Result<Minimum> {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = finite_or_inf(f(&x));
    if !fx.is_finite() {
        return Err(Error::Unfeasible("objective is not finite at the starting values".into()));
    }
    if n == 0 {
        return Ok(Minimum { x, f: fx, iterations: 0, converged: true, message: "no free parameters".into() });
    }
    let mut g = numeric_gradient(&f, &x);
    let mut h = identity(n);
    let mut small_steps = 0;
    for iter in 0..opts.max_iter {
        let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gmax < opts.grad_tol {
            return Ok(Minimum { x, f: fx, iterations: iter, converged: true, message: "gradient tolerance".into() });
        }
        let mut d: Vec<f64> = (0..n).map(|i| -(0..n).map(|j| h[i][j] * g[j]).sum::<f64>()).collect();
        let mut slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        if !(slope < 0.0) {
            h = identity(n);
            d = g.iter().map(|v| -v).collect();
            slope = -g.iter().map(|v| v * v).sum::<f64>();
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            let ft = finite_or_inf(f(&trial));
            if ft <= fx + 1e-4 * step * slope {
                accepted = Some((trial, ft));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fnew)) = accepted else {
            if h != identity(n) {
                h = identity(n);
                continue;
            }
            return Ok(Minimum { x, f: fx, iterations: iter, converged: false, message: "line search failed".into() });
        };
        let gn = numeric_gradient(&f, &xn);
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        if sy > 1e-12 * norm(&s) * norm(&y) && sy > 0.0 {
            update_inverse(&mut h, &s, &y, sy);
        }
        let rel = (fx - fnew).abs() / (1.0 + fx.abs());
        x = xn;
        fx = fnew;
        g = gn;
        if rel < opts.f_tol {
            small_steps += 1;
            if small_steps >= 3 {
                return Ok(Minimum { x, f: fx, iterations: iter + 1, converged: true, message: "objective tolerance".into() });
            }
        } else {
            small_steps = 0;
        }
    }
    Ok(Minimum { x, f: fx, iterations: opts.max_iter, converged: false, message: "iteration limit".into() })
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn update_inverse(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| h[i][j] * y[j]).sum()).collect();
    let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
    let rho = 1.0 / sy;
    for i in 0..n {
        for j in 0..n {
            h[i][j] += (1.0 + rho * yhy) * rho * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}

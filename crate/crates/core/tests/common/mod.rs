//! Reference solvers used to check the library against independent answers.
//!
//! Nothing here calls into the solver code under test: the box QP oracle
//! enumerates active sets, the allocation oracles evaluate the penalized
//! objectives from scratch on a grid, and the samplers draw points from the
//! feasible sets directly.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// `0.5 x'Hx + g'x`.
pub fn quad_value(h: &DMatrix<f64>, g: &DVector<f64>, x: &[f64]) -> f64 {
    let x = DVector::from_column_slice(x);
    0.5 * x.dot(&(h * &x)) + g.dot(&x)
}

/// Exact minimizer of `0.5 x'Hx + g'x` over `lo <= x <= hi` for positive
/// definite `H`, by enumerating all `3^n` active-set patterns (each
/// coordinate at its lower bound, upper bound or free). Among patterns whose
/// reduced solution is feasible the lowest objective wins; ties go to the
/// lexicographically smallest point.
pub fn box_qp_active_set(h: &DMatrix<f64>, g: &DVector<f64>, lo: &[f64], hi: &[f64]) -> Vec<f64> {
    let n = g.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let patterns = 3usize.pow(n as u32);
    for code in 0..patterns {
        let mut pattern = Vec::with_capacity(n);
        let mut c = code;
        for _ in 0..n {
            pattern.push(c % 3);
            c /= 3;
        }
        let mut x = vec![0.0; n];
        let free: Vec<usize> = (0..n).filter(|&i| pattern[i] == 2).collect();
        for i in 0..n {
            match pattern[i] {
                0 => x[i] = lo[i],
                1 => x[i] = hi[i],
                _ => {}
            }
        }
        if !free.is_empty() {
            let k = free.len();
            let mut hff = DMatrix::zeros(k, k);
            let mut rhs = DVector::zeros(k);
            for (a, &i) in free.iter().enumerate() {
                let mut r = -g[i];
                for j in 0..n {
                    if pattern[j] != 2 {
                        r -= h[(i, j)] * x[j];
                    }
                }
                rhs[a] = r;
                for (b, &j) in free.iter().enumerate() {
                    hff[(a, b)] = h[(i, j)];
                }
            }
            let Some(sol) = hff.lu().solve(&rhs) else { continue };
            for (a, &i) in free.iter().enumerate() {
                x[i] = sol[a];
            }
        }
        let feasible = (0..n).all(|i| x[i] >= lo[i] - 1e-12 && x[i] <= hi[i] + 1e-12);
        if !feasible {
            continue;
        }
        for i in 0..n {
            x[i] = x[i].clamp(lo[i], hi[i]);
        }
        let v = quad_value(h, g, &x);
        let better = match &best {
            None => true,
            Some((bv, bx)) => v < *bv - 1e-13 || ((v - *bv).abs() <= 1e-13 && x < *bx),
        };
        if better {
            best = Some((v, x));
        }
    }
    best.expect("the all-bounds pattern is always feasible").1
}

/// Random symmetric positive definite matrix with eigenvalues in `[lo, hi]`.
pub fn random_spd(n: usize, lo: f64, hi: f64, rng: &mut impl Rng) -> DMatrix<f64> {
    let raw = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let q = raw.qr().q();
    let d = DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| rng.gen_range(lo..=hi)));
    let m = &q * d * q.transpose();
    (&m + m.transpose()) * 0.5
}

/// Penalized allocation objective with memoryless network dynamics
/// (`xi_{t+1} = a_t`) and one allocation held over `steps` steps:
/// `sum_{t=0..steps} |xi_t - r_t|^2 + rho * sum_i max(0, s_i - a_i)^2`.
/// With `steps == 1` this is also the one-step receding-horizon objective.
pub struct HeldObjective {
    pub xi0: Vec<f64>,
    /// `r_0 .. r_steps`.
    pub targets: Vec<Vec<f64>>,
    pub floor: Vec<f64>,
    pub rho: f64,
}

impl HeldObjective {
    pub fn new(
        xi0: Vec<f64>,
        targets: Vec<Vec<f64>>,
        lower: &[f64],
        requested: &[f64],
        max_dev: &[f64],
        rho: f64,
    ) -> Self {
        let floor = lower
            .iter()
            .zip(requested)
            .zip(max_dev)
            .map(|((l, r), d)| l.max(r - d))
            .collect();
        Self {
            xi0,
            targets,
            floor,
            rho,
        }
    }

    pub fn value(&self, a: &[f64]) -> f64 {
        let mut v: f64 = self.xi0.iter().zip(&self.targets[0]).map(|(x, r)| (x - r).powi(2)).sum();
        for r in &self.targets[1..] {
            v += a.iter().zip(r).map(|(x, r)| (x - r).powi(2)).sum::<f64>();
        }
        v + self.rho * a.iter().zip(&self.floor).map(|(x, s)| (s - x).max(0.0).powi(2)).sum::<f64>()
    }
}

/// Visits every grid point of `{a >= 0, sum(a) <= b}` with spacing `step`.
pub fn for_each_simplex_grid_point(n: usize, b: f64, step: f64, mut f: impl FnMut(&[f64])) {
    let ticks = (b / step + 1e-9).floor() as usize;
    let mut idx = vec![0usize; n];
    let mut point = vec![0.0; n];
    loop {
        let used: usize = idx.iter().sum();
        if used <= ticks {
            for (p, &i) in point.iter_mut().zip(&idx) {
                *p = i as f64 * step;
            }
            f(&point);
        }
        // Odometer increment, skipping branches that already exceed the budget.
        let mut pos = 0;
        loop {
            if pos == n {
                return;
            }
            idx[pos] += 1;
            if idx.iter().sum::<usize>() <= ticks {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

/// Best grid point of `{a >= 0, sum(a) <= b}` for `f`, refined once with a
/// finer local grid around the coarse winner.
pub fn simplex_grid_min(n: usize, b: f64, step: f64, f: impl Fn(&[f64]) -> f64) -> (f64, Vec<f64>) {
    let mut best = (f64::INFINITY, vec![0.0; n]);
    for_each_simplex_grid_point(n, b, step, |p| {
        let v = f(p);
        if v < best.0 {
            best = (v, p.to_vec());
        }
    });
    let centre = best.1.clone();
    let fine = step / 10.0;
    let reach = 10i64;
    let mut offsets = vec![-reach; n];
    loop {
        let p: Vec<f64> = centre
            .iter()
            .zip(&offsets)
            .map(|(c, &o)| c + o as f64 * fine)
            .collect();
        if p.iter().all(|v| *v >= 0.0) && p.iter().sum::<f64>() <= b + 1e-12 {
            let v = f(&p);
            if v < best.0 {
                best = (v, p);
            }
        }
        let mut pos = 0;
        loop {
            if pos == n {
                return best;
            }
            offsets[pos] += 1;
            if offsets[pos] <= reach {
                break;
            }
            offsets[pos] = -reach;
            pos += 1;
        }
    }
}

/// Uniform-ish random point of `{x >= lower, sum(x) <= cap}`: a random
/// fraction of the free budget split by normalized exponentials.
pub fn sample_capped_simplex(lower: &[f64], cap: f64, rng: &mut impl Rng) -> Vec<f64> {
    let free = cap - lower.iter().sum::<f64>();
    let weights: Vec<f64> = lower.iter().map(|_| -rng.gen_range(f64::EPSILON..1.0f64).ln()).collect();
    let total: f64 = weights.iter().sum::<f64>() + -rng.gen_range(f64::EPSILON..1.0f64).ln();
    lower
        .iter()
        .zip(&weights)
        .map(|(l, w)| l + free * w / total)
        .collect()
}

pub fn sample_box(lo: &[f64], hi: &[f64], rng: &mut impl Rng) -> Vec<f64> {
    lo.iter().zip(hi).map(|(l, h)| rng.gen_range(*l..=*h)).collect()
}

pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

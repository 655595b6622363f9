//! Derivative-free maximizers over a box: simulated annealing, Nelder–Mead
//! and Brent, all recording every evaluation and the best point seen.

use rand::Rng;
use rand_distr::StandardNormal;

/// Where in the search an evaluation happened.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Init,
    Global,
    Local,
}

/// Wraps the objective: clamps points to the box, records each evaluation
/// and keeps the best (earliest on ties). NaN counts as `-∞`.
pub struct Tracker<'f> {
    f: &'f mut dyn FnMut(&[f64]) -> f64,
    pub lower: f64,
    pub upper: f64,
    pub trace: Vec<(Stage, Vec<f64>, f64)>,
    best: Option<(Vec<f64>, f64)>,
}

impl<'f> Tracker<'f> {
    pub fn new(f: &'f mut dyn FnMut(&[f64]) -> f64, lower: f64, upper: f64) -> Self {
        Self { f, lower, upper, trace: Vec::new(), best: None }
    }

    pub fn clamp(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|v| v.clamp(self.lower, self.upper)).collect()
    }

    pub fn eval(&mut self, x: &[f64], stage: Stage) -> f64 {
        let x = self.clamp(x);
        let mut v = (self.f)(&x);
        if v.is_nan() {
            v = f64::NEG_INFINITY;
        }
        self.record(x, v, stage);
        v
    }

    /// Record a value computed elsewhere (e.g. the exact initializer).
    pub fn record(&mut self, x: Vec<f64>, v: f64, stage: Stage) {
        let better = match &self.best {
            None => true,
            Some((_, b)) => v > *b,
        };
        if better {
            self.best = Some((x.clone(), v));
        }
        self.trace.push((stage, x, v));
    }

    pub fn best(&self) -> Option<(&[f64], f64)> {
        self.best.as_ref().map(|(x, v)| (x.as_slice(), *v))
    }

    pub fn evaluations(&self) -> usize {
        self.trace.len()
    }
}

/// Annealing from `(x0, f0)`: step `k` proposes `x + s·0.8ᵏ·N(0, I)` and
/// accepts with probability `min(1, exp(Δ/T_k))`, `T_k = T_0·decayᵏ`.
#[allow(clippy::too_many_arguments)]
pub fn simulated_annealing<R: Rng>(
    t: &mut Tracker<'_>,
    x0: &[f64],
    f0: f64,
    iters: usize,
    temperature: f64,
    decay: f64,
    step: f64,
    rng: &mut R,
) {
    let mut x = x0.to_vec();
    let mut fx = f0;
    for k in 0..iters {
        let temp = temperature * decay.powi(k as i32);
        let scale = step * decay.powi(k as i32);
        let proposal: Vec<f64> = x
            .iter()
            .map(|v| v + scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let proposal = t.clamp(&proposal);
        let fp = t.eval(&proposal, Stage::Global);
        let u: f64 = rng.random();
        let accept = fp >= fx || (fp.is_finite() && u < ((fp - fx) / temp).exp());
        if accept {
            x = proposal;
            fx = fp;
        }
    }
}

/// Nelder–Mead maximization from the simplex `x0, x0 ± e_i`, with
/// reflection 1, expansion 2, contraction 0.5 and shrink 0.5; stops after
/// `max_evals` evaluations or when the simplex collapses.
pub fn nelder_mead(t: &mut Tracker<'_>, x0: &[f64], f0: Option<f64>, max_evals: usize) {
    let d = x0.len();
    let start = t.evaluations();
    let budget_left = |t: &Tracker<'_>| t.evaluations() - start < max_evals;
    let x0 = t.clamp(x0);
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(d + 1);
    let f0 = match f0 {
        Some(v) => v,
        None => {
            if !budget_left(t) {
                return;
            }
            t.eval(&x0, Stage::Local)
        }
    };
    simplex.push((x0.clone(), f0));
    for i in 0..d {
        if !budget_left(t) {
            return;
        }
        let mut xi = x0.clone();
        xi[i] = if xi[i] + 1.0 <= t.upper { xi[i] + 1.0 } else { xi[i] - 1.0 };
        let fi = t.eval(&xi, Stage::Local);
        simplex.push((xi, fi));
    }
    let combine = |a: &[f64], b: &[f64], w: f64| -> Vec<f64> {
        a.iter().zip(b).map(|(p, q)| p + w * (q - p)).collect()
    };
    while budget_left(t) {
        // best first; stable so equal values keep their order
        simplex.sort_by(|a, b| b.1.total_cmp(&a.1));
        let size = simplex[1..]
            .iter()
            .map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if size < 1e-9 {
            break;
        }
        let centroid: Vec<f64> = (0..d)
            .map(|j| simplex[..d].iter().map(|(x, _)| x[j]).sum::<f64>() / d as f64)
            .collect();
        let (worst, f_worst) = simplex[d].clone();
        let f_best = simplex[0].1;
        let f_second = simplex[d - 1].1;

        let xr = t.clamp(&combine(&centroid, &worst, -1.0));
        let fr = t.eval(&xr, Stage::Local);
        if fr > f_best {
            if !budget_left(t) {
                simplex[d] = (xr, fr);
                break;
            }
            let xe = t.clamp(&combine(&centroid, &worst, -2.0));
            let fe = t.eval(&xe, Stage::Local);
            simplex[d] = if fe > fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr > f_second {
            simplex[d] = (xr, fr);
            continue;
        }
        if !budget_left(t) {
            break;
        }
        let (xc, fc, accept) = if fr > f_worst {
            let xc = t.clamp(&combine(&centroid, &xr, 0.5));
            let fc = t.eval(&xc, Stage::Local);
            let ok = fc >= fr;
            (xc, fc, ok)
        } else {
            let xc = t.clamp(&combine(&centroid, &worst, 0.5));
            let fc = t.eval(&xc, Stage::Local);
            let ok = fc > f_worst;
            (xc, fc, ok)
        };
        if accept {
            simplex[d] = (xc, fc);
            continue;
        }
        let best = simplex[0].0.clone();
        for i in 1..=d {
            if !budget_left(t) {
                return;
            }
            let xs = combine(&best, &simplex[i].0, 0.5);
            let fs = t.eval(&xs, Stage::Local);
            simplex[i] = (xs, fs);
        }
    }
}

/// Brent's bounded scalar maximization on `[a, b]` (golden section with
/// parabolic steps) to absolute tolerance `xtol`, at most `max_evals`
/// evaluations.
pub fn brent(t: &mut Tracker<'_>, a: f64, b: f64, xtol: f64, max_evals: usize) {
    const GOLDEN: f64 = 0.381_966_011_250_105_1;
    let sqrt_eps = f64::EPSILON.sqrt();
    let (mut a, mut b) = (a.max(t.lower), b.min(t.upper));
    if max_evals == 0 || a > b {
        return;
    }
    let f = |t: &mut Tracker<'_>, x: f64| -t.eval(&[x], Stage::Local);
    let mut x = a + GOLDEN * (b - a);
    let (mut v, mut w) = (x, x);
    let mut fx = f(t, x);
    let (mut fv, mut fw) = (fx, fx);
    let (mut d, mut e): (f64, f64) = (0.0, 0.0);
    let mut used = 1;
    while used < max_evals {
        let xm = 0.5 * (a + b);
        let tol1 = sqrt_eps * x.abs() + xtol / 3.0;
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let r = e;
            e = d;
            if p.abs() < (0.5 * q * r).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if (u - a) < tol2 || (b - u) < tol2 {
                    d = if xm >= x { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= xm { a - x } else { b - x };
            d = GOLDEN * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = f(t, u);
        used += 1;
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
}

/// Scalar maximization: unit-spaced grid over `[lower, upper]`, then Brent
/// on the grid cell around the best grid point. Returns `(argmax, max)`.
pub fn grid_then_brent(
    f: &mut dyn FnMut(f64) -> f64,
    lower: f64,
    upper: f64,
    xtol: f64,
    brent_evals: usize,
) -> (f64, f64) {
    let mut g = |x: &[f64]| f(x[0]);
    let mut t = Tracker::new(&mut g, lower, upper);
    let steps = (upper - lower).floor() as usize;
    for i in 0..=steps {
        t.eval(&[lower + i as f64], Stage::Global);
    }
    let (x0, _) = t.best().map(|(x, v)| (x[0], v)).expect("grid evaluated");
    brent(&mut t, x0 - 1.0, x0 + 1.0, xtol, brent_evals);
    let (x, v) = t.best().expect("evaluated");
    (x[0], v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brent_finds_quadratic_peak() {
        let mut f = |x: &[f64]| -(x[0] - 2.0).powi(2);
        let mut t = Tracker::new(&mut f, -10.0, 30.0);
        brent(&mut t, -2.0, 6.0, 1e-8, 25);
        let (x, _) = t.best().unwrap();
        assert!((x[0] - 2.0).abs() < 1e-6);
        assert!(t.evaluations() <= 25);
    }

    #[test]
    fn nelder_mead_two_dims() {
        let mut f = |x: &[f64]| -(x[0] - 1.0).powi(2) - 3.0 * (x[1] + 2.0).powi(2);
        let mut t = Tracker::new(&mut f, -10.0, 30.0);
        nelder_mead(&mut t, &[0.0, 0.0], None, 200);
        let (x, _) = t.best().unwrap();
        assert!((x[0] - 1.0).abs() < 1e-3 && (x[1] + 2.0).abs() < 1e-3);
        assert!(t.evaluations() <= 200);
    }

    #[test]
    fn earliest_tie_wins() {
        let mut f = |_: &[f64]| 1.0;
        let mut t = Tracker::new(&mut f, -1.0, 1.0);
        t.eval(&[0.5], Stage::Init);
        t.eval(&[-0.5], Stage::Global);
        assert_eq!(t.best().unwrap().0, &[0.5]);
    }

    #[test]
    fn grid_handles_boundary_optimum() {
        let mut f = |x: f64| x;
        let (x, _) = grid_then_brent(&mut f, -10.0, 30.0, 1e-8, 50);
        assert!((x - 30.0).abs() < 1e-6);
    }
}

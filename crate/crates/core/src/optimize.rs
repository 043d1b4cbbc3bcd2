//! Box-constrained limited-memory quasi-Newton minimization.
//!
//! A projected L-BFGS: variables sitting on a bound with the gradient pushing
//! outward are frozen for the iteration, the two-loop recursion runs on the
//! free subspace, and an Armijo backtracking search is carried out along the
//! projected path.

use crate::linalg::dot;
use crate::Scalar;

#[derive(Clone, Debug)]
pub struct MinimizeOptions<T> {
    pub max_iter: usize,
    /// Stop when the projected-gradient infinity norm drops below this.
    pub gtol: T,
    /// Stop when the relative objective decrease drops below this.
    pub ftol: T,
    /// L-BFGS memory.
    pub memory: usize,
    /// Largest coordinate move of the very first (steepest-descent) step.
    pub initial_step: T,
}

impl<T: Scalar> Default for MinimizeOptions<T> {
    fn default() -> Self {
        Self {
            max_iter: 200,
            gtol: T::of(1e-8),
            ftol: T::of(1e-12),
            memory: 8,
            initial_step: T::of(0.1),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Minimum<T> {
    pub x: Vec<T>,
    pub value: T,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// Minimizes `f` over the box `[lo, hi]` starting from `x0` (projected into
/// the box). `f` returns `(value, gradient)`; a non-finite value is treated
/// as infeasible and the line search backs off from it.
pub fn minimize_box<T, F>(
    mut f: F,
    x0: &[T],
    lo: &[T],
    hi: &[T],
    opts: &MinimizeOptions<T>,
) -> Minimum<T>
where
    T: Scalar,
    F: FnMut(&[T]) -> (T, Vec<T>),
{
    let n = x0.len();
    assert!(lo.len() == n && hi.len() == n, "bounds dimension mismatch");
    let project = |x: &mut [T]| {
        for i in 0..n {
            x[i] = x[i].max(lo[i]).min(hi[i]);
        }
    };

    let mut x = x0.to_vec();
    project(&mut x);
    let (mut fx, mut g) = f(&x);
    let mut evaluations = 1;
    if !fx.is_finite() {
        return Minimum {
            x,
            value: fx,
            iterations: 0,
            evaluations,
            converged: false,
        };
    }

    let mut s_hist: Vec<Vec<T>> = Vec::new();
    let mut y_hist: Vec<Vec<T>> = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let c1 = T::of(1e-4);
    let half = T::of(0.5);

    while iterations < opts.max_iter {
        iterations += 1;

        let free: Vec<bool> = (0..n)
            .map(|i| !((x[i] <= lo[i] && g[i] > T::zero()) || (x[i] >= hi[i] && g[i] < T::zero())))
            .collect();
        let pg: Vec<T> = (0..n)
            .map(|i| if free[i] { g[i] } else { T::zero() })
            .collect();
        let pg_norm = pg.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        if pg_norm <= opts.gtol {
            converged = true;
            break;
        }

        let mut d = two_loop(&pg, &s_hist, &y_hist, &free);
        let mut slope = dot(&d, &pg);
        if s_hist.is_empty() || !(slope < T::zero()) {
            let scale = opts.initial_step / pg_norm;
            d = pg.iter().map(|&v| -v * scale).collect();
            slope = dot(&d, &pg);
            s_hist.clear();
            y_hist.clear();
        }
        debug_assert!(slope < T::zero());

        let mut t = T::one();
        let mut accepted = None;
        for _ in 0..40 {
            let mut xt: Vec<T> = (0..n).map(|i| x[i] + t * d[i]).collect();
            project(&mut xt);
            let step: Vec<T> = (0..n).map(|i| xt[i] - x[i]).collect();
            if step.iter().all(|v| *v == T::zero()) {
                break;
            }
            let (ft, gt) = f(&xt);
            evaluations += 1;
            if ft.is_finite() && ft <= fx + c1 * dot(&g, &step) {
                accepted = Some((xt, ft, gt, step));
                break;
            }
            t = t * half;
        }

        let Some((xt, ft, gt, step)) = accepted else {
            // No progress along a descent direction: stationary to working precision.
            converged = true;
            break;
        };

        let yk: Vec<T> = (0..n).map(|i| gt[i] - g[i]).collect();
        let sy = dot(&step, &yk);
        if sy > T::epsilon() * dot(&yk, &yk).sqrt() * dot(&step, &step).sqrt() {
            s_hist.push(step);
            y_hist.push(yk);
            if s_hist.len() > opts.memory {
                s_hist.remove(0);
                y_hist.remove(0);
            }
        }

        let decrease = fx - ft;
        x = xt;
        g = gt;
        let scale = fx.abs().max(ft.abs()).max(T::one());
        fx = ft;
        if decrease <= opts.ftol * scale {
            converged = true;
            break;
        }
    }

    Minimum {
        x,
        value: fx,
        iterations,
        evaluations,
        converged,
    }
}

/// L-BFGS two-loop recursion restricted to the free coordinates.
fn two_loop<T: Scalar>(g: &[T], s_hist: &[Vec<T>], y_hist: &[Vec<T>], free: &[bool]) -> Vec<T> {
    let n = g.len();
    let masked = |v: &[T]| -> Vec<T> {
        (0..n)
            .map(|i| if free[i] { v[i] } else { T::zero() })
            .collect()
    };
    let mut q = g.to_vec();
    if s_hist.is_empty() {
        return q.iter().map(|&v| -v).collect();
    }
    let s_m: Vec<Vec<T>> = s_hist.iter().map(|s| masked(s)).collect();
    let y_m: Vec<Vec<T>> = y_hist.iter().map(|y| masked(y)).collect();
    let k = s_m.len();
    let mut alpha = vec![T::zero(); k];
    let mut rho = vec![T::zero(); k];
    for i in (0..k).rev() {
        let sy = dot(&s_m[i], &y_m[i]);
        rho[i] = if sy > T::zero() { T::one() / sy } else { T::zero() };
        alpha[i] = rho[i] * dot(&s_m[i], &q);
        for j in 0..n {
            q[j] = q[j] - alpha[i] * y_m[i][j];
        }
    }
    let (sl, yl) = (&s_m[k - 1], &y_m[k - 1]);
    let yy = dot(yl, yl);
    let gamma = if yy > T::zero() { dot(sl, yl) / yy } else { T::one() };
    let gamma = if gamma > T::zero() { gamma } else { T::one() };
    for v in q.iter_mut() {
        *v = *v * gamma;
    }
    for i in 0..k {
        let beta = rho[i] * dot(&y_m[i], &q);
        for j in 0..n {
            q[j] = q[j] + (alpha[i] - beta) * s_m[i][j];
        }
    }
    (0..n)
        .map(|i| if free[i] { -q[i] } else { T::zero() })
        .collect()
}

/// Central-difference gradient with step `h`.
pub fn central_difference<T: Scalar>(f: &mut impl FnMut(&[T]) -> T, x: &[T], h: T) -> Vec<T> {
    let mut xp = x.to_vec();
    let two_h = h + h;
    (0..x.len())
        .map(|i| {
            let xi = x[i];
            xp[i] = xi + h;
            let fp = f(&xp);
            xp[i] = xi - h;
            let fm = f(&xp);
            xp[i] = xi;
            (fp - fm) / two_h
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn rosenbrock(x: &[f64]) -> (f64, Vec<f64>) {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![
            -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
            200.0 * (b - a * a),
        ];
        (f, g)
    }

    #[test]
    fn unconstrained_rosenbrock() {
        let opts = MinimizeOptions {
            max_iter: 500,
            ..Default::default()
        };
        let m = minimize_box(rosenbrock, &[-1.2, 1.0], &[-5.0, -5.0], &[5.0, 5.0], &opts);
        assert_relative_eq!(m.x[0], 1.0, epsilon = 1e-4);
        assert_relative_eq!(m.x[1], 1.0, epsilon = 1e-4);
    }

    #[test]
    fn active_bound() {
        // minimum of (x-3)^2 + (y+1)^2 on [0,2]x[0,2] is (2, 0)
        let f = |x: &[f64]| {
            (
                (x[0] - 3.0).powi(2) + (x[1] + 1.0).powi(2),
                vec![2.0 * (x[0] - 3.0), 2.0 * (x[1] + 1.0)],
            )
        };
        let m = minimize_box(f, &[1.0, 1.0], &[0.0, 0.0], &[2.0, 2.0], &MinimizeOptions::default());
        assert!(m.converged);
        assert_relative_eq!(m.x[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(m.x[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn start_projected_into_box() {
        let f = |x: &[f64]| (x[0] * x[0], vec![2.0 * x[0]]);
        let m = minimize_box(f, &[10.0], &[1.0], &[3.0], &MinimizeOptions::default());
        assert_eq!(m.x, vec![1.0]);
    }

    #[test]
    fn central_difference_quadratic() {
        let mut f = |x: &[f64]| x[0] * x[0] + 3.0 * x[1];
        let g = central_difference(&mut f, &[2.0, -1.0], 1e-6);
        assert_relative_eq!(g[0], 4.0, epsilon = 1e-6);
        assert_relative_eq!(g[1], 3.0, epsilon = 1e-6);
    }
}

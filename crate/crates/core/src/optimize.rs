//! Small dense BFGS minimiser with a backtracking line search, plus a Newton
//! finisher using a finite-difference Hessian of the analytic gradient.

use nalgebra::{DMatrix, DVector};

/// Objective returning `None` outside its domain; writes the gradient into the slice.
pub(crate) trait Objective {
    fn eval(&self, x: &[f64], grad: &mut [f64]) -> Option<f64>;
}

impl<F: Fn(&[f64], &mut [f64]) -> Option<f64>> Objective for F {
    fn eval(&self, x: &[f64], grad: &mut [f64]) -> Option<f64> {
        self(x, grad)
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Runs BFGS from `x0` until the gradient norm drops below `grad_tol` or
/// `max_iter` iterations pass. Returns `None` if `x0` is outside the domain.
pub(crate) fn bfgs(f: &impl Objective, x0: Vec<f64>, grad_tol: f64, max_iter: usize) -> Option<Minimum> {
    let n = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut fx = f.eval(&x, &mut g)?;
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut fresh = true;
    let mut iterations = 0;
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];

    while iterations < max_iter && norm(&g) >= grad_tol {
        iterations += 1;
        let gv = DVector::from_column_slice(&g);
        let mut p: Vec<f64> = (-(&h * &gv)).iter().copied().collect();
        let mut slope = dot(&g, &p);
        if slope >= 0.0 {
            h.fill_with_identity();
            fresh = true;
            p = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..80 {
            for k in 0..n {
                x_new[k] = x[k] + step * p[k];
            }
            if let Some(v) = f.eval(&x_new, &mut g_new) {
                let armijo = v <= fx + 1e-4 * step * slope;
                // Near the optimum the function value stalls in rounding; a
                // smaller gradient still counts as progress there.
                let stalled = v <= fx + 1e-15 * fx.abs().max(1e-300) && norm(&g_new) < norm(&g);
                if armijo || stalled {
                    accepted = Some(v);
                    break;
                }
            }
            step *= 0.5;
        }
        let Some(v) = accepted else {
            if fresh {
                break;
            }
            h.fill_with_identity();
            fresh = true;
            continue;
        };

        let s: Vec<f64> = (0..n).map(|k| x_new[k] - x[k]).collect();
        let y: Vec<f64> = (0..n).map(|k| g_new[k] - g[k]).collect();
        let sy = dot(&s, &y);
        if sy > 1e-14 * norm(&s) * norm(&y) {
            let sv = DVector::from_column_slice(&s);
            let yv = DVector::from_column_slice(&y);
            if fresh {
                h *= sy / dot(&y, &y);
            }
            let rho = 1.0 / sy;
            let hy = &h * &yv;
            let yhy = yv.dot(&hy);
            // H+ = H - ρ(H y sᵀ + s yᵀ H) + (ρ² yᵀHy + ρ) s sᵀ
            h -= (&hy * sv.transpose() + &sv * hy.transpose()) * rho;
            h += (&sv * sv.transpose()) * (rho * rho * yhy + rho);
            fresh = false;
        }
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        fx = v;
    }
    let grad_norm = norm(&g);
    Some(Minimum { x, value: fx, grad_norm, iterations })
}

/// A few damped Newton steps with a central-difference Hessian; keeps a step
/// only if it lowers the gradient norm without raising the value noticeably.
pub(crate) fn newton_polish(f: &impl Objective, start: Minimum, steps: usize) -> Minimum {
    let n = start.x.len();
    let mut best = start;
    let mut g = vec![0.0; n];
    let mut gp = vec![0.0; n];
    let mut gm = vec![0.0; n];
    for _ in 0..steps {
        if f.eval(&best.x, &mut g).is_none() {
            break;
        }
        let mut hess = DMatrix::<f64>::zeros(n, n);
        let mut ok = true;
        for j in 0..n {
            let hstep = 1e-6 * best.x[j].abs().max(1.0);
            let mut xp = best.x.clone();
            let mut xm = best.x.clone();
            xp[j] += hstep;
            xm[j] -= hstep;
            if f.eval(&xp, &mut gp).is_none() || f.eval(&xm, &mut gm).is_none() {
                ok = false;
                break;
            }
            for i in 0..n {
                hess[(i, j)] = (gp[i] - gm[i]) / (2.0 * hstep);
            }
        }
        if !ok {
            break;
        }
        let hess = (&hess + hess.transpose()) * 0.5;
        let rhs = -DVector::from_column_slice(&g);
        let Some(dx) = hess.lu().solve(&rhs) else { break };
        let x_new: Vec<f64> = best.x.iter().zip(dx.iter()).map(|(a, b)| a + b).collect();
        let mut g_new = vec![0.0; n];
        match f.eval(&x_new, &mut g_new) {
            // Near the optimum the value only moves by rounding noise.
            Some(v) if norm(&g_new) < best.grad_norm && v <= best.value + 1e-14 * best.value.abs().max(1.0) => {
                best = Minimum {
                    x: x_new,
                    value: v,
                    grad_norm: norm(&g_new),
                    iterations: best.iterations + 1,
                };
            }
            _ => break,
        }
    }
    best
}

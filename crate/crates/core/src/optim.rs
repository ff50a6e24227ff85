//! Derivative-free simplex descent followed by a quasi-Newton polish, with
//! finite-difference derivatives.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimOptions {
    /// Simplex iterations per start.
    pub max_iter: usize,
    /// Quasi-Newton iterations after the simplex stage.
    pub polish_iter: usize,
    /// Relative function tolerance for the simplex stage.
    pub ftol: f64,
    /// Gradient tolerance: converged when |∇f| < gtol·(1 + |f|).
    pub gtol: f64,
}

impl Default for OptimOptions {
    fn default() -> Self {
        OptimOptions { max_iter: 2000, polish_iter: 200, ftol: 1e-12, gtol: 1e-5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub converged: bool,
    pub iterations: usize,
}

fn eval<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64]) -> f64 {
    let v = f(x);
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

/// Central-difference gradient with steps h_i = 1e-5·max(1, |x_i|).
pub fn gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64]) -> Result<Vec<f64>> {
    let mut p = x.to_vec();
    let mut g = vec![0.0; x.len()];
    for i in 0..x.len() {
        let h = 1e-5 * x[i].abs().max(1.0);
        p[i] = x[i] + h;
        let fp = f(&p);
        p[i] = x[i] - h;
        let fm = f(&p);
        p[i] = x[i];
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::Optimization(format!("non-finite objective probing coordinate {i}")));
        }
        g[i] = (fp - fm) / (2.0 * h);
    }
    Ok(g)
}

/// Symmetrized central-difference Hessian with steps 1e-4·max(1, |x_i|).
pub fn hessian<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64]) -> Result<Vec<Vec<f64>>> {
    let n = x.len();
    let h: Vec<f64> = x.iter().map(|v| 1e-4 * v.abs().max(1.0)).collect();
    let mut p = x.to_vec();
    let at = |p: &mut Vec<f64>, di: (usize, f64), dj: (usize, f64)| -> Result<f64> {
        p[di.0] += di.1;
        p[dj.0] += dj.1;
        let v = f(p);
        p[di.0] -= di.1;
        p[dj.0] -= dj.1;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Optimization("non-finite objective in Hessian probe".into()))
        }
    };
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let v = (at(&mut p, (i, h[i]), (j, h[j]))? - at(&mut p, (i, h[i]), (j, -h[j]))?
                - at(&mut p, (i, -h[i]), (j, h[j]))?
                + at(&mut p, (i, -h[i]), (j, -h[j]))?)
                / (4.0 * h[i] * h[j]);
            out[i][j] = v;
            out[j][i] = v;
        }
    }
    Ok(out)
}

/// Nelder–Mead with reflection 1, expansion 2, contraction 1/2, shrink 1/2.
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(f: &F, x0: &[f64], opts: &OptimOptions) -> Minimum {
    let n = x0.len();
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += if x0[i] == 0.0 { 0.1 } else { 0.1 * x0[i].abs().max(0.5) };
        simplex.push(v);
    }
    let mut fv: Vec<f64> = simplex.iter().map(|x| eval(f, x)).collect();
    let mut iter = 0;
    while iter < opts.max_iter {
        iter += 1;
        let mut idx: Vec<usize> = (0..=n).collect();
        idx.sort_by(|&a, &b| fv[a].total_cmp(&fv[b]));
        simplex = idx.iter().map(|&i| simplex[i].clone()).collect();
        fv = idx.iter().map(|&i| fv[i]).collect();
        let (best, worst) = (fv[0], fv[n]);
        if worst.is_finite() && (worst - best).abs() <= opts.ftol * (best.abs() + 1e-300) + 1e-300 {
            let diam = simplex[1..]
                .iter()
                .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max);
            if diam < 1e-10 {
                break;
            }
        }
        let centroid: Vec<f64> = (0..n).map(|k| simplex[..n].iter().map(|v| v[k]).sum::<f64>() / n as f64).collect();
        let towards = |t: f64| -> Vec<f64> {
            centroid.iter().zip(&simplex[n]).map(|(c, w)| c + t * (w - c)).collect()
        };
        let xr = towards(-1.0);
        let fr = eval(f, &xr);
        if fr < fv[0] {
            let xe = towards(-2.0);
            let fe = eval(f, &xe);
            if fe < fr {
                simplex[n] = xe;
                fv[n] = fe;
            } else {
                simplex[n] = xr;
                fv[n] = fr;
            }
        } else if fr < fv[n - 1] {
            simplex[n] = xr;
            fv[n] = fr;
        } else {
            let (xc, fc) = if fr < fv[n] {
                let xc = towards(-0.5);
                let fc = eval(f, &xc);
                (xc, fc)
            } else {
                let xc = towards(0.5);
                let fc = eval(f, &xc);
                (xc, fc)
            };
            if fc < fv[n].min(fr) {
                simplex[n] = xc;
                fv[n] = fc;
            } else {
                let b = simplex[0].clone();
                for k in 1..=n {
                    for (v, bk) in simplex[k].iter_mut().zip(&b) {
                        *v = bk + 0.5 * (*v - bk);
                    }
                    fv[k] = eval(f, &simplex[k]);
                }
            }
        }
    }
    let k = (0..=n).min_by(|&a, &b| fv[a].total_cmp(&fv[b])).unwrap_or(0);
    Minimum { x: simplex[k].clone(), f: fv[k], grad_norm: f64::NAN, converged: false, iterations: iter }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// BFGS with backtracking line search and numerical gradients.
pub fn bfgs<F: Fn(&[f64]) -> f64>(f: &F, x0: &[f64], opts: &OptimOptions) -> Minimum {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = eval(f, &x);
    let mut g = match gradient(f, &x) {
        Ok(g) => g,
        Err(_) => return Minimum { x, f: fx, grad_norm: f64::NAN, converged: false, iterations: 0 },
    };
    let mut hinv = vec![vec![0.0; n]; n];
    for (i, row) in hinv.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let mut iter = 0;
    while iter < opts.polish_iter {
        if norm(&g) < opts.gtol * (1.0 + fx.abs()) {
            break;
        }
        iter += 1;
        let mut d: Vec<f64> = (0..n).map(|i| -(0..n).map(|j| hinv[i][j] * g[j]).sum::<f64>()).collect();
        let mut slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        if slope >= 0.0 {
            for (i, row) in hinv.iter_mut().enumerate() {
                row.iter_mut().for_each(|v| *v = 0.0);
                row[i] = 1.0;
            }
            d = g.iter().map(|v| -v).collect();
            slope = -norm(&g).powi(2);
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            let fnew = eval(f, &xn);
            if fnew <= fx + 1e-4 * step * slope {
                accepted = Some((xn, fnew));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fnew)) = accepted else { break };
        let Ok(gn) = gradient(f, &xn) else { break };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&yv).map(|(a, b)| a * b).sum();
        if sy > 1e-16 * norm(&s) * norm(&yv) && sy > 0.0 {
            let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| hinv[i][j] * yv[j]).sum()).collect();
            let yhy: f64 = yv.iter().zip(&hy).map(|(a, b)| a * b).sum();
            for i in 0..n {
                for j in 0..n {
                    hinv[i][j] += (sy + yhy) * s[i] * s[j] / (sy * sy) - (hy[i] * s[j] + s[i] * hy[j]) / sy;
                }
            }
        }
        let progress = fx - fnew;
        x = xn;
        fx = fnew;
        g = gn;
        if progress <= 1e-15 * (1.0 + fx.abs()) && step < 1e-6 {
            break;
        }
    }
    let gn = norm(&g);
    Minimum { converged: gn < opts.gtol * (1.0 + fx.abs()), x, f: fx, grad_norm: gn, iterations: iter }
}

/// Simplex descent then quasi-Newton polish from one start.
pub fn minimize<F: Fn(&[f64]) -> f64>(f: &F, x0: &[f64], opts: &OptimOptions) -> Minimum {
    let nm = nelder_mead(f, x0, opts);
    if !nm.f.is_finite() {
        return nm;
    }
    let mut m = bfgs(f, &nm.x, opts);
    if m.f > nm.f {
        m.x = nm.x;
        m.f = nm.f;
    }
    m.iterations += nm.iterations;
    m
}

/// Outcome of a multistart run; `per_start` keeps every local result in
/// start order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiMinimum {
    pub best: Minimum,
    pub best_index: usize,
    pub per_start: Vec<Minimum>,
}

/// Relative tolerance under which two local minima count as tied; ties go
/// to the lowest start index.
pub const TIE_RTOL: f64 = 1e-8;

pub fn pick_best(results: &[Minimum]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, m) in results.iter().enumerate() {
        if !m.f.is_finite() {
            continue;
        }
        match best {
            None => best = Some(i),
            Some(b) => {
                let fb = results[b].f;
                if m.f < fb - TIE_RTOL * fb.abs().max(1e-300) {
                    best = Some(i);
                }
            }
        }
    }
    best
}

/// Run [`minimize`] from every start concurrently.
pub fn multistart<F>(f: &F, starts: &[Vec<f64>], opts: &OptimOptions) -> Result<MultiMinimum>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if starts.is_empty() {
        return Err(Error::InvalidArgument("no start vectors".into()));
    }
    let per_start: Vec<Minimum> = starts.par_iter().map(|s| minimize(f, s, opts)).collect();
    let k = pick_best(&per_start).ok_or_else(|| {
        Error::Optimization(format!("objective non-finite at every probed point from all {} starts", starts.len()))
    })?;
    Ok(MultiMinimum { best: per_start[k].clone(), best_index: k, per_start })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosen(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    #[test]
    fn quadratic_gradient() {
        let g = gradient(&|x: &[f64]| x[0] * x[0], &[3.0]).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-6);
    }

    #[test]
    fn hessian_of_quadratic_form() {
        let a = [[2.0, 0.5], [0.5, 1.0]];
        let f = |x: &[f64]| (0..2).map(|i| (0..2).map(|j| x[i] * a[i][j] * x[j]).sum::<f64>()).sum::<f64>();
        let h = hessian(&f, &[0.3, -0.7]).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((h[i][j] - 2.0 * a[i][j]).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn rosenbrock() {
        let m = minimize(&rosen, &[-1.2, 1.0], &OptimOptions::default());
        assert!((m.x[0] - 1.0).abs() < 1e-5 && (m.x[1] - 1.0).abs() < 1e-5, "{m:?}");
        assert!(m.converged);
    }

    #[test]
    fn nonfinite_regions_are_avoided() {
        let f = |x: &[f64]| if x[0] < 0.0 { f64::NAN } else { (x[0] - 0.5).powi(2) };
        let m = minimize(&f, &[2.0], &OptimOptions::default());
        assert!((m.x[0] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn ties_go_to_first_start() {
        let f = |x: &[f64]| (x[0] * x[0] - 1.0).powi(2);
        let r = multistart(&f, &[vec![2.0], vec![-2.0], vec![0.9]], &OptimOptions::default()).unwrap();
        assert_eq!(r.best_index, 0);
        assert!((r.best.x[0] - 1.0).abs() < 1e-6);
        assert!(multistart(&f, &[], &OptimOptions::default()).is_err());
    }
}

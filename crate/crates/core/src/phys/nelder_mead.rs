//! Derivative-free simplex minimization with a lower bound on every
//! coordinate.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    pub reflection: f64,
    pub expansion: f64,
    pub contraction: f64,
    pub shrink: f64,
    /// Stop when `f(worst) - f(best)` drops below this.
    pub spread_tolerance: f64,
    pub max_iterations: usize,
    /// Restarts from the best vertex after convergence, until a restart no
    /// longer improves the best value.
    pub max_restarts: usize,
    pub lower_bound: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            reflection: 1.0,
            expansion: 2.0,
            contraction: 0.5,
            shrink: 0.5,
            spread_tolerance: 1e-10,
            max_iterations: 5000,
            max_restarts: 10,
            lower_bound: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Best objective value after each iteration.
    pub best_trace: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Vertex {
    x: Vec<f64>,
    f: f64,
}

fn clip(x: &mut [f64], lower: f64) {
    for v in x.iter_mut() {
        if *v < lower {
            *v = lower;
        }
    }
}

/// Point `centroid + coef * (centroid - worst)`, clipped to the bound.
fn towards(centroid: &[f64], worst: &[f64], coef: f64, lower: f64) -> Vec<f64> {
    let mut x: Vec<f64> = centroid.iter().zip(worst).map(|(c, w)| c + coef * (c - w)).collect();
    clip(&mut x, lower);
    x
}

fn initial_simplex(x0: &[f64], f: &mut impl FnMut(&[f64]) -> f64, lower: f64) -> Vec<Vertex> {
    let mut simplex = vec![Vertex { x: x0.to_vec(), f: f(x0) }];
    for i in 0..x0.len() {
        let mut x = x0.to_vec();
        let step = if x0[i].abs() > 1e-8 { 0.25 * x0[i].abs() } else { 0.05 };
        x[i] += step;
        clip(&mut x, lower);
        let fx = f(&x);
        simplex.push(Vertex { x, f: fx });
    }
    simplex
}

fn sort(simplex: &mut [Vertex]) {
    simplex.sort_by(|a, b| a.f.total_cmp(&b.f));
}

pub fn minimize(mut f: impl FnMut(&[f64]) -> f64, x0: &[f64], opts: &NelderMeadOptions) -> NelderMeadResult {
    let n = x0.len();
    let lower = opts.lower_bound;
    let mut start = x0.to_vec();
    clip(&mut start, lower);

    let mut simplex = initial_simplex(&start, &mut f, lower);
    sort(&mut simplex);
    let mut iterations = 0;
    let mut restarts = 0;
    let mut best_at_restart = simplex[0].f;
    let mut trace = Vec::new();
    let mut converged = false;

    while iterations < opts.max_iterations {
        if simplex[n].f - simplex[0].f < opts.spread_tolerance {
            let improved = simplex[0].f < best_at_restart - opts.spread_tolerance;
            if restarts >= opts.max_restarts || (restarts > 0 && !improved) {
                converged = true;
                break;
            }
            restarts += 1;
            best_at_restart = simplex[0].f;
            let best = simplex[0].x.clone();
            simplex = initial_simplex(&best, &mut f, lower);
            sort(&mut simplex);
            continue;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for v in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(&v.x) {
                *c += x / n as f64;
            }
        }
        let worst = simplex[n].x.clone();
        let xr = towards(&centroid, &worst, opts.reflection, lower);
        let fr = f(&xr);

        if fr < simplex[0].f {
            let xe = towards(&centroid, &worst, opts.reflection * opts.expansion, lower);
            let fe = f(&xe);
            simplex[n] = if fe < fr { Vertex { x: xe, f: fe } } else { Vertex { x: xr, f: fr } };
        } else if fr < simplex[n - 1].f {
            simplex[n] = Vertex { x: xr, f: fr };
        } else {
            let (xc, fc) = if fr < simplex[n].f {
                let xc = towards(&centroid, &worst, opts.reflection * opts.contraction, lower);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = towards(&centroid, &worst, -opts.contraction, lower);
                let fc = f(&xc);
                (xc, fc)
            };
            if fc < fr.min(simplex[n].f) {
                simplex[n] = Vertex { x: xc, f: fc };
            } else {
                let best = simplex[0].x.clone();
                for v in simplex.iter_mut().skip(1) {
                    for (x, b) in v.x.iter_mut().zip(&best) {
                        *x = b + opts.shrink * (*x - b);
                    }
                    clip(&mut v.x, lower);
                    v.f = f(&v.x);
                }
            }
        }
        sort(&mut simplex);
        trace.push(simplex[0].f);
    }

    NelderMeadResult { x: simplex[0].x.clone(), value: simplex[0].f, iterations, converged, best_trace: trace }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_rosenbrock_minimum() {
        let rosen = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let opts = NelderMeadOptions { lower_bound: f64::NEG_INFINITY, ..Default::default() };
        let r = minimize(rosen, &[-1.2, 1.0], &opts);
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{:?}", r.x);
        assert!(r.best_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn respects_lower_bound() {
        // Unconstrained minimum at (-1, 2); the bound pins x0 at 0.
        let f = |x: &[f64]| (x[0] + 1.0).powi(2) + (x[1] - 2.0).powi(2);
        let r = minimize(f, &[1.0, 1.0], &NelderMeadOptions::default());
        assert!(r.x.iter().all(|&v| v >= 0.0));
        assert!(r.x[0] < 1e-4 && (r.x[1] - 2.0).abs() < 1e-4, "{:?}", r.x);
    }

    #[test]
    fn budget_limits_iterations() {
        let f = |x: &[f64]| x.iter().map(|v| (v - 3.0).powi(2)).sum::<f64>();
        let opts = NelderMeadOptions { max_iterations: 7, ..Default::default() };
        let r = minimize(f, &[0.0, 0.0, 0.0], &opts);
        assert_eq!(r.iterations, 7);
        assert!(!r.converged);
    }
}

//! Derivative-free minimisation.

/// Nelder–Mead settings. Coefficients are the textbook ones
/// (reflection 1, expansion 2, contraction 0.5, shrink 0.5).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NelderMead {
    /// Iteration cap per run.
    pub max_iterations: usize,
    /// Stop once the spread of objective values over the simplex falls below this.
    pub tolerance: f64,
    /// Extra runs from the best point after convergence.
    pub restarts: usize,
}

impl Default for NelderMead {
    fn default() -> Self {
        NelderMead {
            max_iterations: 200,
            tolerance: 1e-5,
            restarts: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    /// False when the iteration cap was hit before the tolerance was met.
    pub converged: bool,
}

struct Counted<F> {
    f: F,
    evals: usize,
}

impl<F: FnMut(&[f64]) -> f64> Counted<F> {
    fn call(&mut self, x: &[f64]) -> f64 {
        self.evals += 1;
        let v = (self.f)(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }
}

fn order(simplex: &mut [(Vec<f64>, f64)]) {
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
}

impl NelderMead {
    /// Minimise `f` starting at `x0`, with initial simplex edges `step[i]`
    /// along each axis. NaN objective values are treated as +inf.
    pub fn minimize<F>(&self, f: F, x0: &[f64], step: &[f64]) -> Minimum
    where
        F: FnMut(&[f64]) -> f64,
    {
        assert_eq!(x0.len(), step.len());
        let mut f = Counted { f, evals: 0 };
        let mut best_x = x0.to_vec();
        let mut best = f.call(x0);
        let mut iterations = 0;
        let mut converged = false;
        for _ in 0..=self.restarts {
            let (x, v, it, conv) = self.run(&mut f, &best_x, best, step);
            iterations += it;
            converged = conv;
            let improved = v < best;
            if improved {
                best_x = x;
                best = v;
            }
            if !improved || !conv {
                break;
            }
        }
        Minimum {
            x: best_x,
            value: best,
            iterations,
            evaluations: f.evals,
            converged,
        }
    }

    fn run<F: FnMut(&[f64]) -> f64>(
        &self,
        f: &mut Counted<F>,
        x0: &[f64],
        f0: f64,
        step: &[f64],
    ) -> (Vec<f64>, f64, usize, bool) {
        let n = x0.len();
        if n == 0 {
            return (Vec::new(), f0, 0, true);
        }
        let mut simplex: Vec<(Vec<f64>, f64)> = vec![(x0.to_vec(), f0)];
        for i in 0..n {
            let mut x = x0.to_vec();
            x[i] += step[i];
            let v = f.call(&x);
            simplex.push((x, v));
        }
        order(&mut simplex);
        let lerp = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> {
            a.iter().zip(b).map(|(p, q)| p + t * (q - p)).collect()
        };
        for it in 0..self.max_iterations {
            let spread = simplex[n].1 - simplex[0].1;
            if spread.is_finite() && spread.abs() < self.tolerance {
                let (x, v) = simplex.swap_remove(0);
                return (x, v, it, true);
            }
            let mut centroid = vec![0.0; n];
            for (x, _) in &simplex[..n] {
                for (c, v) in centroid.iter_mut().zip(x) {
                    *c += v / n as f64;
                }
            }
            let worst = simplex[n].0.clone();
            let fw = simplex[n].1;
            // reflection x_r = c + (c - w)
            let xr = lerp(&centroid, &worst, -1.0);
            let fr = f.call(&xr);
            if fr < simplex[0].1 {
                let xe = lerp(&centroid, &worst, -2.0);
                let fe = f.call(&xe);
                simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            } else if fr < simplex[n - 1].1 {
                simplex[n] = (xr, fr);
            } else {
                let (xc, fc) = if fr < fw {
                    let xc = lerp(&centroid, &xr, 0.5);
                    let fc = f.call(&xc);
                    (xc, fc)
                } else {
                    let xc = lerp(&centroid, &worst, 0.5);
                    let fc = f.call(&xc);
                    (xc, fc)
                };
                if fc < fw.min(fr) {
                    simplex[n] = (xc, fc);
                } else {
                    let best = simplex[0].0.clone();
                    for s in simplex.iter_mut().skip(1) {
                        s.0 = lerp(&best, &s.0, 0.5);
                        s.1 = f.call(&s.0);
                    }
                }
            }
            order(&mut simplex);
        }
        let (x, v) = simplex.swap_remove(0);
        (x, v, self.max_iterations, false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_bowl() {
        let nm = NelderMead {
            max_iterations: 500,
            tolerance: 1e-12,
            restarts: 1,
        };
        let m = nm.minimize(
            |x| (x[0] - 3.0).powi(2) + 10.0 * (x[1] + 1.0).powi(2),
            &[0.0, 0.0],
            &[1.0, 1.0],
        );
        assert!(m.converged);
        assert!((m.x[0] - 3.0).abs() < 1e-4 && (m.x[1] + 1.0).abs() < 1e-4, "{:?}", m.x);
    }

    #[test]
    fn rosenbrock() {
        let nm = NelderMead {
            max_iterations: 5000,
            tolerance: 1e-14,
            restarts: 2,
        };
        let m = nm.minimize(
            |x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2),
            &[-1.2, 1.0],
            &[0.5, 0.5],
        );
        assert!((m.x[0] - 1.0).abs() < 1e-3 && (m.x[1] - 1.0).abs() < 1e-3, "{:?}", m.x);
    }

    #[test]
    fn never_worse_than_start() {
        let nm = NelderMead::default();
        let m = nm.minimize(|x| if x[0] == 0.0 { -1.0 } else { x[0].abs() }, &[0.0], &[1.0]);
        assert_eq!(m.value, -1.0);
        assert_eq!(m.x, vec![0.0]);
    }

    #[test]
    fn cap_reports_not_converged() {
        let nm = NelderMead {
            max_iterations: 3,
            tolerance: 1e-15,
            restarts: 0,
        };
        let m = nm.minimize(|x| x.iter().map(|v| v * v).sum(), &[5.0, 5.0, 5.0], &[1.0, 1.0, 1.0]);
        assert!(!m.converged);
        assert!(m.value < 75.0);
    }

    #[test]
    fn nan_is_treated_as_infinite() {
        let nm = NelderMead::default();
        let m = nm.minimize(|x| if x[0] > 0.5 { f64::NAN } else { (x[0] + 1.0).powi(2) }, &[0.0], &[1.0]);
        assert!((m.x[0] + 1.0).abs() < 1e-2);
    }
}

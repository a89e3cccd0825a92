//! Derivative-free minimization.

/// Objective evaluated by a [`Minimizer`]; errors abort the run.
pub type Objective<'a, E> = dyn FnMut(&[f64]) -> Result<f64, E> + 'a;

#[derive(Debug, Clone, PartialEq)]
pub struct MinimizeOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    /// Budget ran out before the convergence test was met.
    pub max_evals_reached: bool,
}

pub trait Minimizer {
    fn minimize<E>(&self, f: &mut Objective<'_, E>, x0: &[f64], max_evals: usize) -> Result<MinimizeOutcome, E>;
}

#[derive(Debug, Clone)]
pub struct NelderMead {
    /// Initial simplex edge length.
    pub step: f64,
    /// Stop once the spread of simplex values falls below this.
    pub ftol: f64,
    /// Stop once the simplex diameter falls below this.
    pub xtol: f64,
    /// Rebuild the simplex around the incumbent after convergence while
    /// budget remains.
    pub restart: bool,
}

impl Default for NelderMead {
    fn default() -> Self {
        NelderMead { step: 0.6, ftol: 1e-9, xtol: 1e-7, restart: true }
    }
}

const ALPHA: f64 = 1.0;
const GAMMA: f64 = 2.0;
const RHO: f64 = 0.5;
const SIGMA: f64 = 0.5;

struct Budget<'f, 'a, E> {
    f: &'f mut Objective<'a, E>,
    used: usize,
    max: usize,
    best: (Vec<f64>, f64),
}

impl<E> Budget<'_, '_, E> {
    fn left(&self) -> bool {
        self.used < self.max
    }

    fn eval(&mut self, x: &[f64]) -> Result<f64, E> {
        self.used += 1;
        let v = (self.f)(x)?;
        let v = if v.is_nan() { f64::INFINITY } else { v };
        if v < self.best.1 {
            self.best = (x.to_vec(), v);
        }
        Ok(v)
    }
}

impl NelderMead {
    /// One simplex run from `x0`. Returns `true` on convergence.
    fn run<E>(&self, b: &mut Budget<'_, '_, E>, x0: &[f64], step: f64) -> Result<bool, E> {
        let n = x0.len();
        let mut pts = vec![x0.to_vec()];
        for i in 0..n {
            let mut p = x0.to_vec();
            p[i] += step;
            pts.push(p);
        }
        let mut vals = Vec::with_capacity(n + 1);
        for p in &pts {
            if !b.left() {
                return Ok(false);
            }
            vals.push(b.eval(p)?);
        }

        loop {
            let mut order: Vec<usize> = (0..=n).collect();
            order.sort_by(|&i, &j| vals[i].total_cmp(&vals[j]).then(i.cmp(&j)));
            pts = order.iter().map(|&i| pts[i].clone()).collect();
            vals = order.iter().map(|&i| vals[i]).collect();

            let spread = vals[n] - vals[0];
            let diameter = pts[1..]
                .iter()
                .map(|p| p.iter().zip(&pts[0]).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max))
                .fold(0.0, f64::max);
            if spread <= self.ftol || diameter <= self.xtol {
                return Ok(true);
            }
            if !b.left() {
                return Ok(false);
            }

            let centroid: Vec<f64> =
                (0..n).map(|k| pts[..n].iter().map(|p| p[k]).sum::<f64>() / n as f64).collect();
            let along = |t: f64| -> Vec<f64> { centroid.iter().zip(&pts[n]).map(|(c, w)| c + t * (c - w)).collect() };

            let xr = along(ALPHA);
            let fr = b.eval(&xr)?;
            if fr < vals[0] {
                if !b.left() {
                    pts[n] = xr;
                    vals[n] = fr;
                    continue;
                }
                let xe = along(GAMMA);
                let fe = b.eval(&xe)?;
                if fe < fr {
                    pts[n] = xe;
                    vals[n] = fe;
                } else {
                    pts[n] = xr;
                    vals[n] = fr;
                }
                continue;
            }
            if fr < vals[n - 1] {
                pts[n] = xr;
                vals[n] = fr;
                continue;
            }
            if !b.left() {
                return Ok(false);
            }
            let (xc, fc) = if fr < vals[n] {
                let xc = along(RHO);
                let fc = b.eval(&xc)?;
                (xc, fc)
            } else {
                let xc = along(-RHO);
                let fc = b.eval(&xc)?;
                (xc, fc)
            };
            if fc < vals[n].min(fr) {
                pts[n] = xc;
                vals[n] = fc;
                continue;
            }
            // shrink toward the best vertex
            for i in 1..=n {
                if !b.left() {
                    return Ok(false);
                }
                pts[i] = pts[0].iter().zip(&pts[i]).map(|(a, p)| a + SIGMA * (p - a)).collect();
                vals[i] = b.eval(&pts[i])?;
            }
        }
    }
}

impl Minimizer for NelderMead {
    fn minimize<E>(&self, f: &mut Objective<'_, E>, x0: &[f64], max_evals: usize) -> Result<MinimizeOutcome, E> {
        let mut b = Budget { f, used: 0, max: max_evals.max(1), best: (x0.to_vec(), f64::INFINITY) };
        let mut start = x0.to_vec();
        let mut step = self.step;
        loop {
            let converged = self.run(&mut b, &start, step)?;
            if !converged || !self.restart || !b.left() {
                break;
            }
            start = b.best.0.clone();
            step *= 0.5;
            if step < self.xtol {
                break;
            }
        }
        let max_evals_reached = !b.left();
        Ok(MinimizeOutcome { x: b.best.0, value: b.best.1, evaluations: b.used, max_evals_reached })
    }
}

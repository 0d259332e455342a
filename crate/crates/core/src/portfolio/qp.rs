use nalgebra::SymmetricEigen;

use crate::error::{ConstraintFamily, Error, Result};

use super::CovEstimate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Budget {
    #[default]
    None,
    /// Weights sum to exactly one.
    SumToOne,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TurnoverMode {
    /// `|w_i - w_prev_i| <= C2` for every instrument.
    #[default]
    Elementwise,
    /// `sum_i |w_i - w_prev_i| <= C2`.
    AggregateL1,
}

/// Long-only mean-variance program:
/// maximize `rᵀw` subject to `wᵀΣw <= risk_cap`, the turnover bound against
/// `prev_weights`, `0 <= w_i <= weight_cap` and the optional budget.
#[derive(Debug, Clone)]
pub struct QpSpec {
    pub expected_returns: Vec<f64>,
    pub sigma: CovEstimate,
    pub risk_cap: f64,
    pub turnover_cap: f64,
    pub weight_cap: f64,
    pub prev_weights: Vec<f64>,
    pub budget: Budget,
    pub turnover_mode: TurnoverMode,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Iteration stops once no weight moves by more than this.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            max_iterations: 10_000,
        }
    }
}

/// Slack allowed when certifying a returned vector.
pub const CERTIFY_TOLERANCE: f64 = 1e-6;

impl QpSpec {
    pub fn validate(&self) -> Result<()> {
        let n = self.expected_returns.len();
        if self.sigma.dim() != n || self.prev_weights.len() != n {
            return Err(Error::InvalidInput(format!(
                "dimension mismatch: {n} returns, {}x{} sigma, {} previous weights",
                self.sigma.dim(),
                self.sigma.dim(),
                self.prev_weights.len()
            )));
        }
        if n == 0 {
            return Err(Error::InvalidInput("empty program".into()));
        }
        if self.expected_returns.iter().chain(&self.prev_weights).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite returns or previous weights".into()));
        }
        if !(self.risk_cap > 0.0 && self.risk_cap.is_finite()) {
            return Err(Error::InvalidInput(format!("risk cap must be positive, got {}", self.risk_cap)));
        }
        if !(self.turnover_cap >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "turnover cap must be non-negative, got {}",
                self.turnover_cap
            )));
        }
        if !(self.weight_cap > 0.0 && self.weight_cap <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "weight cap must lie in (0, 1], got {}",
                self.weight_cap
            )));
        }
        let eig = SymmetricEigen::new(self.sigma.matrix().clone());
        let scale = eig.eigenvalues.amax().max(1e-300);
        if eig.eigenvalues.min() < -1e-10 * scale.max(1.0) {
            return Err(Error::InvalidInput(format!(
                "covariance is not positive semidefinite (smallest eigenvalue {})",
                eig.eigenvalues.min()
            )));
        }
        Ok(())
    }

    pub fn objective(&self, w: &[f64]) -> f64 {
        dot(&self.expected_returns, w)
    }

    pub fn risk(&self, w: &[f64]) -> f64 {
        self.sigma.quad_form(w)
    }

    /// Check all four constraint families at [`CERTIFY_TOLERANCE`].
    pub fn certify(&self, w: &[f64]) -> Result<()> {
        let tol = CERTIFY_TOLERANCE;
        let fail = |family: ConstraintFamily, detail: String| {
            Err(Error::Invariant(format!("{family} constraint violated: {detail}")))
        };
        if w.len() != self.expected_returns.len() || w.iter().any(|v| !v.is_finite()) {
            return fail(ConstraintFamily::Box, "malformed weight vector".into());
        }
        let risk = self.risk(w);
        if risk > self.risk_cap + tol {
            return fail(ConstraintFamily::Risk, format!("{risk} > {}", self.risk_cap));
        }
        match self.turnover_mode {
            TurnoverMode::Elementwise => {
                for (i, (a, b)) in w.iter().zip(&self.prev_weights).enumerate() {
                    if (a - b).abs() > self.turnover_cap + tol {
                        return fail(ConstraintFamily::Turnover, format!("instrument {i} moves {}", (a - b).abs()));
                    }
                }
            }
            TurnoverMode::AggregateL1 => {
                let l1 = l1_distance(w, &self.prev_weights);
                if l1 > self.turnover_cap + tol {
                    return fail(ConstraintFamily::Turnover, format!("total move {l1}"));
                }
            }
        }
        for (i, v) in w.iter().enumerate() {
            if *v < -tol || *v > self.weight_cap + tol {
                return fail(ConstraintFamily::Box, format!("weight {i} = {v}"));
            }
        }
        if self.budget == Budget::SumToOne {
            let s: f64 = w.iter().sum();
            if (s - 1.0).abs() > tol {
                return fail(ConstraintFamily::Budget, format!("weights sum to {s}"));
            }
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

fn soft(x: f64, t: f64) -> f64 {
    x.signum() * (x.abs() - t).max(0.0)
}

/// Bisection for the root of a nonincreasing function on `[lo, hi]`.
fn bisect_decreasing(mut lo: f64, mut hi: f64, target: f64, f: impl Fn(f64) -> f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Polyhedral part of the feasible set: box, turnover and budget.
struct Polytope {
    lo: Vec<f64>,
    hi: Vec<f64>,
    budget: bool,
    /// Aggregate turnover ball `(centre, radius)`.
    l1: Option<(Vec<f64>, f64)>,
}

impl Polytope {
    fn new(spec: &QpSpec) -> Result<Self> {
        let n = spec.expected_returns.len();
        let cap = spec.weight_cap;
        let c2 = spec.turnover_cap;
        let budget = spec.budget == Budget::SumToOne;
        if budget && (n as f64) * cap < 1.0 - 1e-12 {
            return Err(Error::Infeasible {
                family: ConstraintFamily::Budget,
                detail: format!("{n} instruments capped at {cap} cannot sum to one"),
            });
        }
        match spec.turnover_mode {
            TurnoverMode::Elementwise => {
                let lo: Vec<f64> = spec.prev_weights.iter().map(|p| (p - c2).max(0.0)).collect();
                let hi: Vec<f64> = spec.prev_weights.iter().map(|p| (p + c2).min(cap)).collect();
                if let Some(i) = (0..n).find(|&i| lo[i] > hi[i]) {
                    return Err(Error::Infeasible {
                        family: ConstraintFamily::Turnover,
                        detail: format!(
                            "instrument {i}: previous weight {} is more than {c2} outside [0, {cap}]",
                            spec.prev_weights[i]
                        ),
                    });
                }
                if budget {
                    let (sl, sh): (f64, f64) = (lo.iter().sum(), hi.iter().sum());
                    if sl > 1.0 + 1e-12 || sh < 1.0 - 1e-12 {
                        return Err(Error::Infeasible {
                            family: ConstraintFamily::Budget,
                            detail: format!("reachable weight sums span [{sl}, {sh}]"),
                        });
                    }
                }
                Ok(Self { lo, hi, budget, l1: None })
            }
            TurnoverMode::AggregateL1 => {
                let clipped: Vec<f64> = spec.prev_weights.iter().map(|p| p.clamp(0.0, cap)).collect();
                let mut need = l1_distance(&clipped, &spec.prev_weights);
                if budget {
                    need += (clipped.iter().sum::<f64>() - 1.0).abs();
                }
                if need > c2 + 1e-12 {
                    return Err(Error::Infeasible {
                        family: ConstraintFamily::Turnover,
                        detail: format!("reaching the box{} needs total move {need} > {c2}", if budget { " and budget" } else { "" }),
                    });
                }
                Ok(Self {
                    lo: vec![0.0; n],
                    hi: vec![cap; n],
                    budget,
                    l1: Some((spec.prev_weights.clone(), c2)),
                })
            }
        }
    }

    fn project(&self, v: &[f64], out: &mut [f64]) {
        match &self.l1 {
            None => self.project_box(v, out),
            Some((centre, radius)) => self.project_l1(v, centre, *radius, out),
        }
    }

    fn project_box(&self, v: &[f64], out: &mut [f64]) {
        let fill = |nu: f64, out: &mut [f64]| {
            for i in 0..v.len() {
                out[i] = (v[i] - nu).clamp(self.lo[i], self.hi[i]);
            }
        };
        if !self.budget {
            fill(0.0, out);
            return;
        }
        let sum_at = |nu: f64| -> f64 {
            (0..v.len()).map(|i| (v[i] - nu).clamp(self.lo[i], self.hi[i])).sum()
        };
        let lo = (0..v.len()).map(|i| v[i] - self.hi[i]).fold(f64::INFINITY, f64::min) - 1.0;
        let hi = (0..v.len()).map(|i| v[i] - self.lo[i]).fold(f64::NEG_INFINITY, f64::max) + 1.0;
        let nu = bisect_decreasing(lo, hi, 1.0, sum_at);
        fill(nu, out);
    }

    fn project_l1(&self, v: &[f64], centre: &[f64], radius: f64, out: &mut [f64]) {
        let n = v.len();
        let coord = |i: usize, tau: f64, nu: f64| -> f64 {
            (centre[i] + soft(v[i] - nu - centre[i], tau)).clamp(self.lo[i], self.hi[i])
        };
        let spread = v
            .iter()
            .zip(centre)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
            + self.hi.iter().fold(0.0_f64, |a, b| a.max(*b))
            + 1.0;
        // nu solving the budget at fixed tau
        let nu_for = |tau: f64| -> f64 {
            if !self.budget {
                return 0.0;
            }
            let sum_at = |nu: f64| (0..n).map(|i| coord(i, tau, nu)).sum::<f64>();
            let lo = -spread - tau;
            let hi = spread + tau;
            bisect_decreasing(lo, hi, 1.0, sum_at)
        };
        let move_at = |tau: f64| -> f64 {
            let nu = nu_for(tau);
            (0..n).map(|i| (coord(i, tau, nu) - centre[i]).abs()).sum()
        };
        let tau = if move_at(0.0) <= radius {
            0.0
        } else {
            let mut hi = spread;
            while move_at(hi) > radius && hi < 1e12 {
                hi *= 2.0;
            }
            // the upper end is always within the ball
            let mut lo = 0.0;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if move_at(mid) > radius {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            hi
        };
        let nu = nu_for(tau);
        for i in 0..n {
            out[i] = coord(i, tau, nu);
        }
    }
}

/// Solver state shared across the multiplier search.
struct Problem<'a> {
    spec: &'a QpSpec,
    poly: Polytope,
    lambda_max: f64,
    opts: SolverOptions,
}

impl Problem<'_> {
    fn sigma_times(&self, w: &[f64], out: &mut [f64]) {
        let m = self.spec.sigma.matrix();
        let n = w.len();
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += m[(i, j)] * w[j];
            }
            out[i] = acc;
        }
    }

    /// Maximize `rᵀw - (mu/2) wᵀΣw` over the polytope by accelerated projected
    /// gradient with adaptive restart, starting from `start`.
    fn ascend(&self, r: &[f64], mu: f64, start: &[f64]) -> Vec<f64> {
        let n = r.len();
        let lip = mu * self.lambda_max;
        let rmax = r.iter().fold(0.0_f64, |a, b| a.max(b.abs()));
        let step = if lip > 0.0 {
            1.0 / lip
        } else if rmax > 0.0 {
            // linear objective: a long step lands on a vertex of the polytope
            1e3 / rmax
        } else {
            let mut x = vec![0.0; n];
            self.poly.project(start, &mut x);
            return x;
        };
        let mut x = vec![0.0; n];
        self.poly.project(start, &mut x);
        let mut y = x.clone();
        let mut t = 1.0_f64;
        let mut sy = vec![0.0; n];
        let mut probe = vec![0.0; n];
        let mut next = vec![0.0; n];
        for _ in 0..self.opts.max_iterations {
            self.sigma_times(&y, &mut sy);
            let grad: Vec<f64> = (0..n).map(|i| r[i] - mu * sy[i]).collect();
            for i in 0..n {
                probe[i] = y[i] + step * grad[i];
            }
            self.poly.project(&probe, &mut next);
            let change = (0..n).map(|i| (next[i] - x[i]).abs()).fold(0.0, f64::max);
            let restart = (0..n).map(|i| grad[i] * (next[i] - x[i])).sum::<f64>() < 0.0;
            let t_next = if restart { 1.0 } else { 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt()) };
            let beta = if restart { 0.0 } else { (t - 1.0) / t_next };
            for i in 0..n {
                y[i] = next[i] + beta * (next[i] - x[i]);
            }
            std::mem::swap(&mut x, &mut next);
            t = t_next;
            if change < self.opts.tolerance {
                break;
            }
        }
        x
    }

    /// Exact maximizer of `rᵀw` over the elementwise polytope.
    fn linear_vertex(&self, r: &[f64]) -> Option<Vec<f64>> {
        if self.poly.l1.is_some() {
            return None;
        }
        let n = r.len();
        let (lo, hi) = (&self.poly.lo, &self.poly.hi);
        if !self.poly.budget {
            return Some((0..n).map(|i| if r[i] > 0.0 { hi[i] } else { lo[i] }).collect());
        }
        let mut w = lo.clone();
        let mut left = 1.0 - lo.iter().sum::<f64>();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| r[b].total_cmp(&r[a]).then(a.cmp(&b)));
        for i in order {
            if left <= 0.0 {
                break;
            }
            let add = (hi[i] - lo[i]).min(left);
            w[i] += add;
            left -= add;
        }
        Some(w)
    }

    fn risk(&self, w: &[f64]) -> f64 {
        self.spec.risk(w)
    }
}

/// Solve the program. The returned vector has been certified against every
/// constraint family at [`CERTIFY_TOLERANCE`].
///
/// When the risk bound is slack at the linear optimum that vertex is
/// returned. Otherwise the risk bound is priced by a multiplier `mu`, found by
/// bisection, and each priced subproblem is solved by accelerated projected
/// gradient over box ∩ turnover ∩ budget, whose projections are closed form
/// up to one or two scalar bisections.
pub fn solve_weights(spec: &QpSpec, opts: &SolverOptions) -> Result<Vec<f64>> {
    spec.validate()?;
    let poly = Polytope::new(spec)?;
    let eig = SymmetricEigen::new(spec.sigma.matrix().clone());
    let lambda_max = eig.eigenvalues.max().max(0.0);
    let prob = Problem {
        spec,
        poly,
        lambda_max,
        opts: *opts,
    };
    let n = spec.expected_returns.len();
    let r = &spec.expected_returns;
    let cap = spec.risk_cap;

    let clipped: Vec<f64> = spec.prev_weights.iter().map(|p| p.clamp(0.0, spec.weight_cap)).collect();
    let anchor = prob.ascend(&vec![0.0; n], 0.0, &clipped);

    let linear = match prob.linear_vertex(r) {
        Some(w) => w,
        None => prob.ascend(r, 0.0, &anchor),
    };
    if prob.risk(&linear) <= cap {
        spec.certify(&linear)?;
        return Ok(linear);
    }

    // a point satisfying every constraint
    let feasible = if prob.risk(&anchor) <= cap {
        anchor.clone()
    } else {
        let min_risk = prob.ascend(&vec![0.0; n], 1.0, &anchor);
        let risk = prob.risk(&min_risk);
        if risk > cap * (1.0 + 1e-9) + 1e-15 {
            return Err(Error::Infeasible {
                family: ConstraintFamily::Risk,
                detail: format!("smallest reachable risk {risk} exceeds cap {cap}"),
            });
        }
        min_risk
    };

    let rnorm = dot(r, r).sqrt();
    let avg_var = (spec.sigma.matrix().trace() / n as f64).max(1e-300);
    let mut hi = rnorm / (cap * avg_var).sqrt();
    let mut w_hi = prob.ascend(r, hi, &feasible);
    let mut doublings = 0;
    while prob.risk(&w_hi) > cap && doublings < 200 {
        hi *= 2.0;
        w_hi = prob.ascend(r, hi, &w_hi);
        doublings += 1;
    }
    if prob.risk(&w_hi) > cap {
        w_hi = feasible.clone();
    } else {
        let mut lo = 0.0_f64;
        for _ in 0..200 {
            if lo > 0.0 && hi / lo - 1.0 < 1e-10 {
                break;
            }
            let mid = if lo == 0.0 { 0.5 * hi } else { (lo * hi).sqrt() };
            let w = prob.ascend(r, mid, &w_hi);
            if prob.risk(&w) <= cap {
                hi = mid;
                w_hi = w;
            } else {
                lo = mid;
            }
        }
    }

    let w = pull_inside(&prob, w_hi, &feasible);
    spec.certify(&w)?;
    Ok(w)
}

/// Move `w` toward `feasible` just far enough to satisfy the risk bound.
fn pull_inside(prob: &Problem<'_>, w: Vec<f64>, feasible: &[f64]) -> Vec<f64> {
    let cap = prob.spec.risk_cap;
    if prob.risk(&w) <= cap {
        return w;
    }
    let blend = |theta: f64| -> Vec<f64> {
        w.iter().zip(feasible).map(|(a, b)| (1.0 - theta) * a + theta * b).collect()
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if prob.risk(&blend(mid)) <= cap {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    blend(hi)
}

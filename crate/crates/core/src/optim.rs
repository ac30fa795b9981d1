//! Polak–Ribière nonlinear conjugate gradient with a strong-Wolfe line
//! search.
//!
//! The line search brackets a step by extrapolation, then shrinks the
//! bracket by interpolation. Steps accepted straight out of the
//! extrapolation phase get one extra interpolation step, kept only if it
//! lowers the objective, so that on a quadratic every line search lands on
//! the exact minimizer along its direction.

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CgConfig {
    /// Number of line searches (CG iterations) to run.
    pub line_searches: usize,
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    /// Function evaluations allowed per line search.
    pub max_evals_per_search: usize,
    /// Stop once the gradient's Euclidean norm falls to this value.
    pub gradient_tolerance: f64,
}

impl Default for CgConfig {
    fn default() -> Self {
        Self {
            line_searches: 3,
            c1: 1e-4,
            c2: 0.9,
            max_evals_per_search: 20,
            gradient_tolerance: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    /// Line searches that moved the point.
    pub line_searches: usize,
    pub evaluations: usize,
}

// Cap on how much the initial step may grow from one search to the next.
const MAX_STEP_RATIO: f64 = 100.0;
const MAX_EXTRAPOLATION: f64 = 3.0;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(x: &[f64], alpha: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(xi, di)| xi + alpha * di).collect()
}

struct Objective<F> {
    f: F,
    evaluations: usize,
}

impl<F> Objective<F>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    fn eval(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.evaluations += 1;
        let (v, g) = (self.f)(x)?;
        if !v.is_finite() || g.iter().any(|x| !x.is_finite()) {
            return Err(Error::Divergence(format!("non-finite objective value {v}")));
        }
        if g.len() != x.len() {
            return Err(Error::Shape(format!(
                "gradient of length {} for {} parameters",
                g.len(),
                x.len()
            )));
        }
        Ok((v, g))
    }
}

#[derive(Clone)]
struct Point {
    alpha: f64,
    value: f64,
    slope: f64,
    gradient: Vec<f64>,
}

/// Minimizer of the cubic matching values and slopes at two steps, if the
/// cubic has one.
fn cubic_min(a: &Point, b: &Point) -> Option<f64> {
    let d1 = a.slope + b.slope - 3.0 * (a.value - b.value) / (a.alpha - b.alpha);
    let disc = d1 * d1 - a.slope * b.slope;
    if disc < 0.0 {
        return None;
    }
    let d2 = (b.alpha - a.alpha).signum() * disc.sqrt();
    let denom = b.slope - a.slope + 2.0 * d2;
    let t = b.alpha - (b.alpha - a.alpha) * (b.slope + d2 - d1) / denom;
    t.is_finite().then_some(t)
}

/// Zero of the linear interpolant of the slopes. Exact on quadratics and
/// free of the cancellation in function values near a minimum.
fn secant_min(a: &Point, b: &Point) -> Option<f64> {
    let t = b.alpha - b.slope * (b.alpha - a.alpha) / (b.slope - a.slope);
    t.is_finite().then_some(t)
}

fn interpolate(a: &Point, b: &Point) -> Option<f64> {
    if a.slope * b.slope < 0.0 {
        secant_min(a, b)
    } else {
        cubic_min(a, b)
    }
}

struct LineSearch<'a, F> {
    obj: &'a mut Objective<F>,
    x: &'a [f64],
    dir: &'a [f64],
    start: Point,
    c1: f64,
    c2: f64,
    budget: usize,
}

impl<F> LineSearch<'_, F>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    fn probe(&mut self, alpha: f64) -> Result<Point> {
        self.budget = self.budget.saturating_sub(1);
        let (value, gradient) = self.obj.eval(&axpy(self.x, alpha, self.dir))?;
        Ok(Point {
            alpha,
            value,
            slope: dot(&gradient, self.dir),
            gradient,
        })
    }

    fn armijo(&self, p: &Point) -> bool {
        p.value <= self.start.value + self.c1 * p.alpha * self.start.slope
    }

    fn curvature(&self, p: &Point) -> bool {
        p.slope.abs() <= -self.c2 * self.start.slope
    }

    /// Returns an accepted point with a strictly lower value, or `None`.
    fn run(mut self, first_step: f64) -> Result<Option<Point>> {
        let mut prev = self.start.clone();
        let mut alpha = first_step;
        let mut first = true;
        while self.budget > 0 {
            let p = self.probe(alpha)?;
            if !self.armijo(&p) || (!first && p.value >= prev.value) {
                return self.zoom(prev, p);
            }
            if self.curvature(&p) {
                return self.refine(prev, p).map(Some);
            }
            if p.slope >= 0.0 {
                return self.zoom(p, prev);
            }
            let lo = p.alpha + 1.1 * (p.alpha - prev.alpha);
            let hi = p.alpha + MAX_EXTRAPOLATION * (p.alpha - prev.alpha);
            alpha = match cubic_min(&prev, &p) {
                Some(t) if t > lo && t < hi => t,
                _ => hi,
            };
            prev = p;
            first = false;
        }
        Ok(self.best_of(prev))
    }

    /// One interpolation past a point accepted without bracketing.
    fn refine(&mut self, prev: Point, accepted: Point) -> Result<Point> {
        if self.budget == 0 || accepted.slope == 0.0 {
            return Ok(accepted);
        }
        let Some(t) = interpolate(&prev, &accepted) else {
            return Ok(accepted);
        };
        let lo = accepted.alpha.min(prev.alpha);
        let span = (accepted.alpha - prev.alpha).abs();
        if t <= lo || t > accepted.alpha + MAX_STEP_RATIO * span || t == accepted.alpha {
            return Ok(accepted);
        }
        // Speculative probe: a blow-up here only rejects the refinement.
        let p = match self.probe(t) {
            Ok(p) => p,
            Err(Error::Divergence(_)) => return Ok(accepted),
            Err(e) => return Err(e),
        };
        Ok(if p.value < accepted.value && self.armijo(&p) {
            p
        } else {
            accepted
        })
    }

    /// Bracket `[lo, hi]` where `lo` satisfies sufficient decrease and has
    /// the lower value.
    fn zoom(&mut self, mut lo: Point, mut hi: Point) -> Result<Option<Point>> {
        let mut stalled = false;
        while self.budget > 0 {
            let (a, b) = (lo.alpha.min(hi.alpha), lo.alpha.max(hi.alpha));
            let width = b - a;
            if width <= f64::EPSILON * b.abs() {
                break;
            }
            // Interpolating twice in a row from the same side can stall, so
            // every other step without progress on `hi` bisects.
            let t = match interpolate(&lo, &hi) {
                Some(t) if t > a && t < b && !stalled => t,
                _ => 0.5 * (a + b),
            };
            let old_width = width;
            let p = self.probe(t)?;
            if !self.armijo(&p) || p.value >= lo.value {
                hi = p;
            } else {
                if self.curvature(&p) {
                    return Ok(Some(p));
                }
                if p.slope * (hi.alpha - lo.alpha) >= 0.0 {
                    hi = lo;
                }
                lo = p;
            }
            let new_width = (hi.alpha - lo.alpha).abs();
            stalled = !stalled && new_width > 0.5 * old_width;
        }
        Ok(self.best_of(lo))
    }

    fn best_of(&self, p: Point) -> Option<Point> {
        (p.alpha > 0.0 && p.value < self.start.value).then_some(p)
    }
}

/// Minimizes `objective`, which returns the value and gradient at a point.
///
/// The returned value never exceeds the value at `x0`. A direction that is
/// not a descent direction is replaced by the negative gradient. A
/// non-finite value or gradient aborts with [`Error::Divergence`].
pub fn minimize_cg<F>(objective: F, x0: Vec<f64>, config: &CgConfig) -> Result<CgOutcome>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let mut obj = Objective {
        f: objective,
        evaluations: 0,
    };
    let mut x = x0;
    let (mut value, mut grad) = obj.eval(&x)?;
    let mut dir: Vec<f64> = grad.iter().map(|g| -g).collect();
    let mut slope = -dot(&grad, &grad);
    let mut step = 1.0 / (1.0 - slope);
    let mut moved = 0;

    for _ in 0..config.line_searches {
        if (-slope).sqrt() <= config.gradient_tolerance || slope == 0.0 {
            break;
        }
        let search = LineSearch {
            obj: &mut obj,
            x: &x,
            dir: &dir,
            start: Point {
                alpha: 0.0,
                value,
                slope,
                gradient: grad.clone(),
            },
            c1: config.c1,
            c2: config.c2,
            budget: config.max_evals_per_search,
        };
        let Some(p) = search.run(step)? else {
            // Failed along a conjugate direction: retry with steepest descent.
            let steepest = -dot(&grad, &grad);
            if slope == steepest {
                break;
            }
            dir = grad.iter().map(|g| -g).collect();
            slope = steepest;
            step = 1.0 / (1.0 - slope);
            continue;
        };
        moved += 1;
        x = axpy(&x, p.alpha, &dir);
        value = p.value;

        let gg = dot(&grad, &grad);
        let beta = ((dot(&p.gradient, &p.gradient) - dot(&p.gradient, &grad)) / gg).max(0.0);
        for (d, g) in dir.iter_mut().zip(&p.gradient) {
            *d = beta * *d - g;
        }
        grad = p.gradient;
        let old_slope = slope;
        slope = dot(&grad, &dir);
        if slope >= 0.0 {
            dir = grad.iter().map(|g| -g).collect();
            slope = -dot(&grad, &grad);
        }
        step = if slope < 0.0 {
            p.alpha * (old_slope / slope).min(MAX_STEP_RATIO)
        } else {
            p.alpha
        };
    }

    Ok(CgOutcome {
        x,
        value,
        gradient: grad,
        line_searches: moved,
        evaluations: obj.evaluations,
    })
}

//! Bounded Nelder-Mead simplex search with restarts.
//!
//! Works in coordinates normalised to the unit box; every trial point is
//! projected back onto the box before evaluation.

use std::cmp::Ordering;

use rand::Rng;
use rayon::prelude::*;

use crate::rng;

/// Objective value with tie-breakers, compared lexicographically. Lower is
/// better in every slot.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Score(pub [f64; 3]);

impl Score {
    pub fn compare(&self, other: &Score) -> Ordering {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| a.total_cmp(b))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
    }

    pub fn better_than(&self, other: &Score) -> bool {
        self.compare(other) == Ordering::Less
    }
}

#[derive(Clone, Copy, Debug)]
pub struct NelderMeadConfig {
    /// Initial simplex edge in normalised units.
    pub initial_step: f64,
    /// Simplex diameter below which the search restarts.
    pub min_diameter: f64,
    /// Iterations without improvement of the best vertex before a restart.
    pub stall_iterations: usize,
    pub restart_step: f64,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        Self {
            initial_step: 0.1,
            min_diameter: 1e-7,
            stall_iterations: 40,
            restart_step: 0.05,
        }
    }
}

pub struct Evaluation {
    pub x: Vec<f64>,
    pub score: Score,
}

struct Budgeted<'a, F> {
    f: &'a F,
    lo: &'a [f64],
    hi: &'a [f64],
    remaining: usize,
    log: Vec<Evaluation>,
}

impl<F> Budgeted<'_, F>
where
    F: Fn(&[f64]) -> Score + Sync,
{
    fn denormalise(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.lo.iter().zip(self.hi))
            .map(|(u, (lo, hi))| lo + u.clamp(0.0, 1.0) * (hi - lo))
            .collect()
    }

    /// Evaluates as many of `points` as the budget allows, in parallel.
    fn eval_many(&mut self, points: Vec<Vec<f64>>) -> Vec<(Vec<f64>, Score)> {
        let take = points.len().min(self.remaining);
        let pts: Vec<Vec<f64>> = points
            .into_iter()
            .take(take)
            .map(|u| u.iter().map(|v| v.clamp(0.0, 1.0)).collect())
            .collect();
        let xs: Vec<Vec<f64>> = pts.iter().map(|u| self.denormalise(u)).collect();
        let f = self.f;
        let scores: Vec<Score> = xs.par_iter().map(|x| f(x)).collect();
        self.remaining -= take;
        for (x, s) in xs.into_iter().zip(&scores) {
            self.log.push(Evaluation { x, score: *s });
        }
        pts.into_iter().zip(scores).collect()
    }

    fn eval(&mut self, u: Vec<f64>) -> Option<(Vec<f64>, Score)> {
        self.eval_many(vec![u]).pop()
    }
}

fn diameter(simplex: &[(Vec<f64>, Score)]) -> f64 {
    let best = &simplex[0].0;
    simplex[1..]
        .iter()
        .map(|(v, _)| v.iter().zip(best).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
        .fold(0.0, f64::max)
}

fn sort(simplex: &mut [(Vec<f64>, Score)]) {
    simplex.sort_by(|a, b| a.1.compare(&b.1));
}

/// Minimises `f` over the box `[lo, hi]` starting from `x0`, spending at most
/// `budget` evaluations. Returns every evaluation in the order performed;
/// `x0` is always evaluated first.
pub fn minimize<F>(
    f: &F,
    x0: &[f64],
    lo: &[f64],
    hi: &[f64],
    budget: usize,
    seed: u64,
    config: NelderMeadConfig,
) -> Vec<Evaluation>
where
    F: Fn(&[f64]) -> Score + Sync,
{
    let dim = x0.len();
    let mut run = Budgeted {
        f,
        lo,
        hi,
        remaining: budget,
        log: Vec::with_capacity(budget),
    };
    let normalise = |x: &[f64]| -> Vec<f64> {
        x.iter()
            .zip(lo.iter().zip(hi))
            .map(|(x, (lo, hi))| if hi > lo { (x - lo) / (hi - lo) } else { 0.0 })
            .collect()
    };
    // axes with lo == hi are frozen
    let free: Vec<usize> = (0..dim).filter(|&i| hi[i] > lo[i]).collect();
    let mut rng = rng::stream(seed, 0x6e6d);

    let Some(start) = run.eval(normalise(x0)) else {
        return run.log;
    };
    if free.is_empty() {
        return run.log;
    }

    let build = |centre: &[f64], step: f64, jitter: &mut dyn FnMut() -> f64| -> Vec<Vec<f64>> {
        free.iter()
            .map(|&i| {
                let mut v = centre.to_vec();
                let s = step * jitter();
                // step away from the nearer wall so the vertex stays distinct
                v[i] = if v[i] + s <= 1.0 { v[i] + s } else { v[i] - s };
                v
            })
            .collect()
    };

    let mut simplex = vec![start];
    let others = build(&simplex[0].0, config.initial_step, &mut || 1.0);
    simplex.extend(run.eval_many(others));
    if simplex.len() < free.len() + 1 {
        return run.log;
    }
    sort(&mut simplex);

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut stall = 0usize;
    let mut best_score = simplex[0].1;

    while run.remaining > 0 {
        if diameter(&simplex) < config.min_diameter || stall >= config.stall_iterations {
            let centre = simplex[0].clone();
            let step = config.restart_step;
            let pts = build(&centre.0, step, &mut || rng.random_range(0.5..1.5));
            let fresh = run.eval_many(pts);
            if fresh.len() < free.len() {
                break;
            }
            simplex = vec![centre];
            simplex.extend(fresh);
            sort(&mut simplex);
            stall = 0;
            continue;
        }

        let n = simplex.len() - 1;
        let centroid: Vec<f64> = (0..dim)
            .map(|d| simplex[..n].iter().map(|(v, _)| v[d]).sum::<f64>() / n as f64)
            .collect();
        let worst = simplex[n].clone();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&worst.0)
                .map(|(c, w)| (c + t * (c - w)).clamp(0.0, 1.0))
                .collect()
        };

        let Some(reflected) = run.eval(along(alpha)) else { break };
        if reflected.1.better_than(&simplex[0].1) {
            match run.eval(along(gamma)) {
                Some(expanded) if expanded.1.better_than(&reflected.1) => simplex[n] = expanded,
                _ => simplex[n] = reflected,
            }
        } else if reflected.1.better_than(&simplex[n - 1].1) {
            simplex[n] = reflected;
        } else {
            let outside = reflected.1.better_than(&worst.1);
            let t = if outside { rho } else { -rho };
            let Some(contracted) = run.eval(along(t)) else { break };
            let accept = if outside {
                !reflected.1.better_than(&contracted.1)
            } else {
                contracted.1.better_than(&worst.1)
            };
            if accept {
                simplex[n] = contracted;
            } else {
                let best = simplex[0].0.clone();
                let pts: Vec<Vec<f64>> = simplex[1..]
                    .iter()
                    .map(|(v, _)| v.iter().zip(&best).map(|(x, b)| b + sigma * (x - b)).collect())
                    .collect();
                let shrunk = run.eval_many(pts);
                let k = shrunk.len();
                for (slot, s) in simplex[1..].iter_mut().zip(shrunk) {
                    *slot = s;
                }
                if k < n {
                    break;
                }
            }
        }
        sort(&mut simplex);
        if simplex[0].1.better_than(&best_score) {
            best_score = simplex[0].1;
            stall = 0;
        } else {
            stall += 1;
        }
    }
    run.log
}

#[cfg(test)]
mod tests {
    use super::*;

    fn best(log: &[Evaluation]) -> &Evaluation {
        log.iter().min_by(|a, b| a.score.compare(&b.score)).unwrap()
    }

    #[test]
    fn finds_quadratic_minimum_inside_box() {
        let f = |x: &[f64]| Score([(x[0] - 0.3).powi(2) + 4.0 * (x[1] + 1.2).powi(2), 0.0, 0.0]);
        let log = minimize(&f, &[1.0, 1.0], &[-2.0, -2.0], &[2.0, 2.0], 400, 1, NelderMeadConfig::default());
        assert!(log.len() <= 400);
        let b = best(&log);
        assert!((b.x[0] - 0.3).abs() < 1e-4 && (b.x[1] + 1.2).abs() < 1e-4, "{:?}", b.x);
    }

    #[test]
    fn respects_bounds_when_optimum_is_outside() {
        let f = |x: &[f64]| Score([-(x[0] + x[1]), 0.0, 0.0]);
        let log = minimize(&f, &[0.1, 0.1], &[0.0, 0.0], &[1.0, 2.0], 200, 3, NelderMeadConfig::default());
        assert!(log.iter().all(|e| e.x[0] >= 0.0 && e.x[0] <= 1.0 && e.x[1] >= 0.0 && e.x[1] <= 2.0));
        let b = best(&log);
        assert!((b.x[0] - 1.0).abs() < 1e-6 && (b.x[1] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn rosenbrock_within_budget() {
        let f = |x: &[f64]| Score([(1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2), 0.0, 0.0]);
        let log = minimize(&f, &[-1.2, 1.0], &[-2.0, -2.0], &[2.0, 2.0], 1000, 9, NelderMeadConfig::default());
        assert!(best(&log).score.0[0] < 1e-6);
    }

    #[test]
    fn budget_one_only_evaluates_start() {
        let f = |x: &[f64]| Score([x[0], 0.0, 0.0]);
        let log = minimize(&f, &[0.5], &[0.0], &[1.0], 1, 0, NelderMeadConfig::default());
        assert_eq!(log.len(), 1);
        assert_eq!(log[0].x, vec![0.5]);
    }

    #[test]
    fn deterministic_for_seed() {
        let f = |x: &[f64]| Score([(x[0] - 0.7).abs() + (x[1] * x[0]).sin(), 0.0, 0.0]);
        let a = minimize(&f, &[0.1, 0.4], &[0.0, 0.0], &[1.0, 1.0], 150, 5, NelderMeadConfig::default());
        let b = minimize(&f, &[0.1, 0.4], &[0.0, 0.0], &[1.0, 1.0], 150, 5, NelderMeadConfig::default());
        assert_eq!(a.len(), b.len());
        assert!(a.iter().zip(&b).all(|(p, q)| p.x == q.x && p.score == q.score));
    }

    #[test]
    fn tie_breakers_order_equal_objectives() {
        assert!(Score([1.0, 2.0, 0.0]).better_than(&Score([1.0, 3.0, 0.0])));
        assert!(Score([1.0, 2.0, 0.5]).better_than(&Score([1.0, 2.0, 0.7])));
        assert!(!Score([1.0, 2.0, 0.5]).better_than(&Score([1.0, 2.0, 0.5])));
    }
}

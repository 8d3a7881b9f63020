//! Full-batch minimizers: L-BFGS with a backtracking Armijo line search, and
//! plain gradient descent using the same line search.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Optimizer {
    #[default]
    Lbfgs,
    GradientDescent,
}

impl fmt::Display for Optimizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Optimizer::Lbfgs => "lbfgs",
            Optimizer::GradientDescent => "gd",
        })
    }
}

impl FromStr for Optimizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lbfgs" | "l-bfgs" => Ok(Optimizer::Lbfgs),
            "gd" | "sgd" => Ok(Optimizer::GradientDescent),
            other => Err(Error::Config(format!("unknown optimizer {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimConfig {
    pub optimizer: Optimizer,
    pub max_iters: usize,
    /// Relative objective change that counts as converged.
    pub tol: f64,
    pub memory: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            optimizer: Optimizer::Lbfgs,
            max_iters: 200,
            tol: 1e-5,
            memory: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    /// Objective after every accepted step, starting with the initial point.
    pub history: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

const ARMIJO_C1: f64 = 1e-4;
const BACKTRACK: f64 = 0.5;
const MAX_BACKTRACKS: usize = 40;

fn check_finite(value: f64, iteration: usize, step: f64) -> Result<()> {
    if value.is_nan() {
        return Err(Error::Training(format!(
            "objective became NaN at iteration {iteration} (step {step:e})"
        )));
    }
    Ok(())
}

struct LineSearchOutcome {
    x: Vec<f64>,
    value: f64,
    grad: Vec<f64>,
    step: f64,
}

fn line_search<F>(
    objective: &mut F,
    x: &[f64],
    value: f64,
    grad: &[f64],
    dir: &[f64],
    initial_step: f64,
    iteration: usize,
) -> Result<Option<LineSearchOutcome>>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let slope = dot(grad, dir);
    if slope >= 0.0 {
        return Ok(None);
    }
    let mut step = initial_step;
    for _ in 0..MAX_BACKTRACKS {
        let candidate: Vec<f64> = x.iter().zip(dir).map(|(xi, di)| xi + step * di).collect();
        let (v, g) = objective(&candidate)?;
        check_finite(v, iteration, step)?;
        if v.is_finite() && v <= value + ARMIJO_C1 * step * slope {
            return Ok(Some(LineSearchOutcome {
                x: candidate,
                value: v,
                grad: g,
                step,
            }));
        }
        step *= BACKTRACK;
    }
    Ok(None)
}

/// Minimizes `objective`, which returns the value and gradient at a point.
/// Every accepted step satisfies the Armijo condition, so the recorded
/// objective never increases.
pub fn minimize<F>(mut objective: F, x0: Vec<f64>, config: &OptimConfig) -> Result<OptimResult>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let (mut value, mut grad) = objective(&x0)?;
    check_finite(value, 0, 0.0)?;
    if !value.is_finite() {
        return Err(Error::Training(format!("initial objective is {value}")));
    }
    let mut x = x0;
    let mut history = vec![value];
    let mut memory: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut last_step = 1.0f64;
    let mut iterations = 0;

    while iterations < config.max_iters {
        let gnorm = dot(&grad, &grad).sqrt();
        if gnorm == 0.0 {
            break;
        }
        let steepest: Vec<f64> = grad.iter().map(|g| -g).collect();
        let (dir, initial) = match config.optimizer {
            Optimizer::Lbfgs if !memory.is_empty() => (two_loop(&grad, &memory), 1.0),
            Optimizer::Lbfgs => (steepest.clone(), 1.0 / gnorm.max(1.0)),
            Optimizer::GradientDescent => (steepest.clone(), (last_step * 2.0).min(1.0 / gnorm.max(1e-12))),
        };
        let mut outcome = line_search(&mut objective, &x, value, &grad, &dir, initial, iterations + 1)?;
        if outcome.is_none() && config.optimizer == Optimizer::Lbfgs && !memory.is_empty() {
            // Curvature history led nowhere; restart from steepest descent.
            memory.clear();
            outcome = line_search(&mut objective, &x, value, &grad, &steepest, 1.0 / gnorm.max(1.0), iterations + 1)?;
        }
        let Some(step) = outcome else {
            break;
        };
        iterations += 1;
        last_step = step.step;

        let s: Vec<f64> = step.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = step.grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if config.optimizer == Optimizer::Lbfgs && sy > 1e-10 {
            if memory.len() == config.memory.max(1) {
                memory.pop_front();
            }
            memory.push_back((s, y, 1.0 / sy));
        }

        let previous = value;
        x = step.x;
        value = step.value;
        grad = step.grad;
        history.push(value);
        let scale = previous.abs().max(value.abs()).max(1.0);
        if (previous - value).abs() / scale < config.tol {
            break;
        }
    }

    Ok(OptimResult {
        x,
        value,
        iterations,
        history,
    })
}

fn two_loop(grad: &[f64], memory: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = grad.to_vec();
    let mut alphas = Vec::with_capacity(memory.len());
    for (s, y, rho) in memory.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    let (s, y, _) = memory.back().expect("non-empty memory");
    let gamma = dot(s, y) / dot(y, y);
    for qi in q.iter_mut() {
        *qi *= gamma;
    }
    for ((s, y, rho), a) in memory.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

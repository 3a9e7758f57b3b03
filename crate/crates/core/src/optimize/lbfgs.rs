//! Limited-memory BFGS with Armijo backtracking.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iterations: usize,
    /// Stop once the gradient infinity-norm falls to this.
    pub gradient_tolerance: f64,
    /// Cap on the per-coordinate length of a trial step.
    pub max_step: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions { memory: 10, max_iterations: 100, gradient_tolerance: 1e-6, max_step: 0.2 }
    }
}

pub(crate) trait Objective {
    fn value(&mut self, z: &[f64]) -> Result<f64>;
    fn value_grad(&mut self, z: &[f64], grad: &mut [f64]) -> Result<f64>;
}

#[derive(Debug, Clone)]
pub(crate) struct LbfgsResult {
    pub z: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_nan() {
        Err(Error::Divergence(format!("{what} is NaN")))
    } else {
        Ok(v)
    }
}

pub(crate) fn minimize(obj: &mut impl Objective, z0: &[f64], opts: &LbfgsOptions) -> Result<LbfgsResult> {
    let n = z0.len();
    let mut z = z0.to_vec();
    let mut g = vec![0.0; n];
    let mut f = finite(obj.value_grad(&z, &mut g)?, "objective")?;
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut iterations = 0;
    let mut trial = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    while iterations < opts.max_iterations {
        if g.iter().any(|v| v.is_nan()) {
            return Err(Error::Divergence("gradient is NaN".into()));
        }
        if g.iter().fold(0.0f64, |m, v| m.max(v.abs())) <= opts.gradient_tolerance {
            break;
        }
        iterations += 1;

        // two-loop recursion
        let mut p: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &p);
            for (pi, yi) in p.iter_mut().zip(y) {
                *pi -= a * yi;
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            p.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &p);
            for (pi, si) in p.iter_mut().zip(s) {
                *pi += (a - b) * si;
            }
        }
        let mut slope = dot(&g, &p);
        if !(slope < 0.0) {
            history.clear();
            p = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }
        let largest = p.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut t = if largest > opts.max_step { opts.max_step / largest } else { 1.0 };

        let mut accepted = None;
        for _ in 0..40 {
            for i in 0..n {
                trial[i] = z[i] + t * p[i];
            }
            let ft = finite(obj.value(&trial)?, "objective")?;
            if ft <= f + 1e-4 * t * slope {
                accepted = Some(ft);
                break;
            }
            t *= 0.5;
        }
        if accepted.is_none() {
            break;
        }
        let f_new = finite(obj.value_grad(&trial, &mut g_new)?, "objective")?;
        let s: Vec<f64> = trial.iter().zip(&z).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() && sy > 0.0 {
            if history.len() == opts.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        let decrease = f - f_new;
        z.copy_from_slice(&trial);
        g.copy_from_slice(&g_new);
        f = f_new;
        if decrease.abs() <= 1e-14 * f.abs().max(1.0) {
            break;
        }
    }
    Ok(LbfgsResult { z, value: f, iterations })
}

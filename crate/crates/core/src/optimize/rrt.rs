use rand::Rng;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::geometry::Environment;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RrtOptions {
    /// Largest per-joint change of one extension.
    pub step: f64,
    /// Largest per-joint change between collision checks along an edge.
    pub check_resolution: f64,
    pub max_iterations: usize,
    /// Oracle clearance every checked configuration must exceed.
    pub clearance: f64,
}

impl Default for RrtOptions {
    fn default() -> Self {
        RrtOptions { step: 0.2, check_resolution: 0.05, max_iterations: 50_000, clearance: 0.0 }
    }
}

/// Oracle distance, infinite in an obstacle-free workspace.
pub(crate) fn clearance(env: &Environment, x: &[f64]) -> Result<f64> {
    if env.obstacles.is_empty() {
        check_dim(env.robot.dof(), x.len())?;
        return Ok(f64::INFINITY);
    }
    env.distance(x)
}

fn max_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// True when every densified configuration on the segment `a -> b` (excluding `a`) is clear.
pub(crate) fn segment_free(env: &Environment, a: &[f64], b: &[f64], opts: &RrtOptions) -> Result<bool> {
    let n = (max_norm(a, b) / opts.check_resolution).ceil().max(1.0) as usize;
    let mut q = vec![0.0; a.len()];
    for k in 1..=n {
        let u = k as f64 / n as f64;
        for j in 0..a.len() {
            q[j] = a[j] + u * (b[j] - a[j]);
        }
        if clearance(env, &q)? <= opts.clearance {
            return Ok(false);
        }
    }
    Ok(true)
}

struct Tree {
    nodes: Vec<Vec<f64>>,
    parent: Vec<usize>,
}

enum Extend {
    Reached(usize),
    Advanced(usize),
    Trapped,
}

impl Tree {
    fn new(root: &[f64]) -> Self {
        Tree { nodes: vec![root.to_vec()], parent: vec![usize::MAX] }
    }

    fn nearest(&self, q: &[f64]) -> usize {
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (i, sq_dist(n, q)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map_or(0, |(i, _)| i)
    }

    /// One step of at most `opts.step` per joint from the nearest node toward `target`.
    fn extend(&mut self, env: &Environment, target: &[f64], opts: &RrtOptions) -> Result<Extend> {
        let near = self.nearest(target);
        let from = &self.nodes[near];
        let span = max_norm(from, target);
        if span == 0.0 {
            return Ok(Extend::Reached(near));
        }
        let reached = span <= opts.step;
        let new: Vec<f64> = if reached {
            target.to_vec()
        } else {
            let u = opts.step / span;
            from.iter().zip(target).map(|(a, b)| a + u * (b - a)).collect()
        };
        if !segment_free(env, from, &new, opts)? {
            return Ok(Extend::Trapped);
        }
        self.nodes.push(new);
        self.parent.push(near);
        let idx = self.nodes.len() - 1;
        Ok(if reached { Extend::Reached(idx) } else { Extend::Advanced(idx) })
    }

    /// Root-to-node path.
    fn path_to(&self, mut i: usize) -> Vec<Vec<f64>> {
        let mut path = Vec::new();
        while i != usize::MAX {
            path.push(self.nodes[i].clone());
            i = self.parent[i];
        }
        path.reverse();
        path
    }
}

/// Bidirectional RRT-Connect between `start` and `goal`. Each iteration
/// extends one tree toward a uniform sample and greedily connects the other
/// tree to the new node; the trees swap roles every iteration.
pub fn rrt_plan<R: Rng + ?Sized>(
    env: &Environment,
    start: &[f64],
    goal: &[f64],
    rng: &mut R,
    opts: &RrtOptions,
) -> Result<Vec<Vec<f64>>> {
    let robot = &env.robot;
    check_dim(robot.dof(), start.len())?;
    check_dim(robot.dof(), goal.len())?;
    for (name, q) in [("start", start), ("goal", goal)] {
        if !robot.within_limits(q) {
            return Err(Error::InvalidArgument(format!("{name} configuration outside joint limits")));
        }
        if clearance(env, q)? <= opts.clearance {
            return Err(Error::EndpointInCollision(name.to_string()));
        }
    }
    if start == goal {
        return Ok(vec![start.to_vec()]);
    }
    let mut a = Tree::new(start);
    let mut b = Tree::new(goal);
    // true while `a` is rooted at the start
    let mut a_is_start = true;
    let limits = robot.joint_limits();
    let mut sample = vec![0.0; start.len()];
    for _ in 0..opts.max_iterations {
        for (s, [lo, hi]) in sample.iter_mut().zip(limits) {
            *s = rng.random_range(*lo..=*hi);
        }
        let new = match a.extend(env, &sample, opts)? {
            Extend::Trapped => None,
            Extend::Reached(i) | Extend::Advanced(i) => Some(i),
        };
        if let Some(i) = new {
            let target = a.nodes[i].clone();
            let joined = loop {
                match b.extend(env, &target, opts)? {
                    Extend::Advanced(_) => continue,
                    Extend::Reached(j) => break Some(j),
                    Extend::Trapped => break None,
                }
            };
            if let Some(j) = joined {
                let (mut head, tail) = if a_is_start { (a.path_to(i), b.path_to(j)) } else { (b.path_to(j), a.path_to(i)) };
                // both halves end at the shared node
                head.pop();
                head.extend(tail.into_iter().rev());
                return Ok(head);
            }
        }
        std::mem::swap(&mut a, &mut b);
        a_is_start = !a_is_start;
    }
    Err(Error::NoPlanFound(opts.max_iterations))
}

/// Greedy shortcutting: from each kept waypoint, jump to the farthest later
/// waypoint reachable by a collision-free straight segment.
pub fn shortcut_path(env: &Environment, path: &[Vec<f64>], opts: &RrtOptions) -> Result<Vec<Vec<f64>>> {
    if path.len() <= 2 {
        return Ok(path.to_vec());
    }
    let mut out = vec![path[0].clone()];
    let mut i = 0;
    while i < path.len() - 1 {
        let mut j = path.len() - 1;
        while j > i + 1 && !segment_free(env, &path[i], &path[j], opts)? {
            j -= 1;
        }
        out.push(path[j].clone());
        i = j;
    }
    Ok(out)
}

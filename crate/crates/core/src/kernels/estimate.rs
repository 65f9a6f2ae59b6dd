use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::problem::{KernelProblem, Scratch};
use super::{Budget, KernelEstimate};
use crate::error::{invalid, Error, Result};
use crate::numeric::lse2_diff;
use crate::rng::RngStream;

const NINF: f64 = f64::NEG_INFINITY;

/// Streaming log-domain accumulator of a self-normalised estimator.
///
/// Holds `Σw, Σwf, Σw², Σw²f, Σw²f²` relative to `exp(shift)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Accumulator {
    shift: f64,
    s0: f64,
    s1: f64,
    q0: f64,
    q1: f64,
    q2: f64,
    n: u64,
    max_lw: f64,
    min_lw: f64,
}

impl Default for Accumulator {
    fn default() -> Self {
        Self::new()
    }
}

impl Accumulator {
    pub fn new() -> Self {
        Self { shift: NINF, s0: 0.0, s1: 0.0, q0: 0.0, q1: 0.0, q2: 0.0, n: 0, max_lw: NINF, min_lw: f64::INFINITY }
    }

    fn rescale(&mut self, new_shift: f64) {
        if self.shift == NINF {
            self.shift = new_shift;
            return;
        }
        let f = (self.shift - new_shift).exp();
        let f2 = f * f;
        self.s0 *= f;
        self.s1 *= f;
        self.q0 *= f2;
        self.q1 *= f2;
        self.q2 *= f2;
        self.shift = new_shift;
    }

    pub fn add(&mut self, log_weight: f64, value: f64) {
        self.n += 1;
        if log_weight == NINF {
            return;
        }
        self.max_lw = self.max_lw.max(log_weight);
        self.min_lw = self.min_lw.min(log_weight);
        if log_weight > self.shift {
            self.rescale(log_weight);
        }
        let w = (log_weight - self.shift).exp();
        let w2 = w * w;
        self.s0 += w;
        self.s1 += w * value;
        self.q0 += w2;
        self.q1 += w2 * value;
        self.q2 += w2 * value * value;
    }

    pub fn merge(&mut self, other: &Accumulator) {
        self.n += other.n;
        if other.shift == NINF {
            return;
        }
        self.max_lw = self.max_lw.max(other.max_lw);
        self.min_lw = self.min_lw.min(other.min_lw);
        let mut o = *other;
        if o.shift > self.shift {
            self.rescale(o.shift);
        } else {
            o.rescale(self.shift);
        }
        self.s0 += o.s0;
        self.s1 += o.s1;
        self.q0 += o.q0;
        self.q1 += o.q1;
        self.q2 += o.q2;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn finish(&self, ess_floor: f64) -> Result<KernelEstimate> {
        if self.s0 == 0.0 {
            return Err(Error::ConditioningInconsistent);
        }
        let mu = self.s1 / self.s0;
        let var = ((self.q2 - 2.0 * mu * self.q1) + mu * mu * self.q0) / (self.s0 * self.s0);
        let ess = self.s0 * self.s0 / self.q0;
        let mut warnings = Vec::new();
        if ess < ess_floor {
            warnings.push(format!("effective sample size {ess:.1} below floor {ess_floor}"));
        }
        Ok(KernelEstimate {
            value: mu,
            std_error: var.max(0.0).sqrt(),
            n_samples: self.n,
            ess,
            max_log_weight: self.max_lw,
            min_log_weight: if self.min_lw.is_finite() { self.min_lw } else { NINF },
            warnings,
        })
    }
}

/// Self-normalised estimate of the kernel applied to its observable.
pub fn estimate(problem: &KernelProblem, budget: &Budget, rng: RngStream) -> Result<KernelEstimate> {
    let parts: Vec<Result<Accumulator>> = budget
        .split()
        .into_par_iter()
        .enumerate()
        .map(|(r, n)| {
            let mut g = rng.substream(r as u64).generator();
            let mut sc = Scratch::default();
            let mut acc = Accumulator::new();
            for _ in 0..n {
                problem.draw_points(&mut g, &mut sc);
                problem.build_groups(&mut sc)?;
                let lw = problem.log_weight(&sc);
                let v = if lw == NINF { 0.0 } else { problem.rb_value(&sc) };
                acc.add(lw, v);
            }
            Ok(acc)
        })
        .collect();
    let mut total = Accumulator::new();
    for p in parts {
        total.merge(&p?);
    }
    let mut est = total.finish(budget.ess_floor)?;
    est.warnings.extend(problem.params().warnings());
    Ok(est)
}

/// `μ_second - μ_first` from common random numbers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairDifference {
    pub first: usize,
    pub second: usize,
    pub value: f64,
    pub std_error: f64,
    /// False when the paired estimator fell back to independent differencing.
    pub paired: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommonEstimate {
    pub estimates: Vec<KernelEstimate>,
    pub pairs: Vec<PairDifference>,
}

/// Near-cluster correspondence `first → second` when both problems see the
/// same conditioning points within `2a` of the target, grouped the same way.
fn correspondence(p: &KernelProblem, q: &KernelProblem) -> Option<Vec<u32>> {
    if p.near_points.len() != q.near_points.len() || p.near.len() != q.near.len() {
        return None;
    }
    let key = |pt: &crate::geometry::Point| pt.coords().iter().map(|x| x.to_bits()).collect::<Vec<u64>>();
    let index: HashMap<Vec<u64>, usize> = q.near_points.iter().enumerate().map(|(j, pt)| (key(pt), j)).collect();
    let mut map = vec![u32::MAX; p.near.len()];
    let mut back = vec![u32::MAX; q.near.len()];
    for (i, pt) in p.near_points.iter().enumerate() {
        let j = *index.get(&key(pt))?;
        let (cp, cq) = (p.near_cluster_of[i], q.near_cluster_of[j]);
        if map[cp as usize] == u32::MAX && back[cq as usize] == u32::MAX {
            map[cp as usize] = cq;
            back[cq as usize] = cp;
        } else if map[cp as usize] != cq || back[cq as usize] != cp {
            return None;
        }
    }
    Some(map)
}

/// `l_q - l_p` summed cluster by cluster so that tiny differences survive.
fn paired_delta(p: &KernelProblem, sp: &Scratch, q: &KernelProblem, sq: &Scratch, map: &[u32]) -> Option<f64> {
    if sp.groups.len() != sq.groups.len() {
        return None;
    }
    let mut delta = 0.0;
    for (gp, gq) in sp.groups.iter().zip(&sq.groups) {
        if gp.key != gq.key || gp.clusters.len() != gq.clusters.len() {
            return None;
        }
        delta += lse2_diff(gp.weights.plus, gp.weights.minus, gq.weights.plus, gq.weights.minus);
        for &c in &sp.group_clusters[gp.clusters.clone()] {
            let a = p.near[c as usize].standalone;
            let b = q.near[map[c as usize] as usize].standalone;
            delta -= lse2_diff(a.plus, a.minus, b.plus, b.minus);
        }
    }
    delta.is_finite().then_some(delta)
}

/// Evaluates several kernels that share the target window, observable and
/// `λ-` on the same `ω_B` draws, and returns their estimates together with
/// paired differences for the requested index pairs.
pub fn estimate_common(
    problems: &[KernelProblem],
    pairs: &[(usize, usize)],
    budget: &Budget,
    rng: RngStream,
) -> Result<CommonEstimate> {
    let Some(first) = problems.first() else {
        return Ok(CommonEstimate { estimates: Vec::new(), pairs: Vec::new() });
    };
    for pr in problems {
        let (a, b) = (pr.spec(), first.spec());
        if a.target != b.target || a.observable != b.observable || pr.params().lambda_minus() != first.params().lambda_minus() {
            return invalid("paired kernels must share target window, observable and λ-");
        }
    }
    if pairs.iter().any(|&(i, j)| i >= problems.len() || j >= problems.len()) {
        return invalid("pair index out of range");
    }
    let maps: Vec<Option<Vec<u32>>> = pairs.iter().map(|&(i, j)| correspondence(&problems[i], &problems[j])).collect();
    let np = problems.len();
    let stride = 2 * np + pairs.len();
    let parts: Vec<Result<Vec<f64>>> = budget
        .split()
        .into_par_iter()
        .enumerate()
        .map(|(r, n)| {
            let mut g = rng.substream(r as u64).generator();
            let mut draw = Scratch::default();
            let mut sc: Vec<Scratch> = vec![Scratch::default(); np];
            let mut rows = Vec::with_capacity(n as usize * stride);
            for _ in 0..n {
                first.draw_points(&mut g, &mut draw);
                for (k, pr) in problems.iter().enumerate() {
                    sc[k].pts.clear();
                    sc[k].pts.extend_from_slice(&draw.pts);
                    pr.build_groups(&mut sc[k])?;
                    let lw = pr.log_weight(&sc[k]);
                    rows.push(lw);
                    rows.push(if lw == NINF { 0.0 } else { pr.rb_value(&sc[k]) });
                }
                let base = rows.len() - 2 * np;
                for (pi, &(i, j)) in pairs.iter().enumerate() {
                    let (li, lj) = (rows[base + 2 * i], rows[base + 2 * j]);
                    let d = maps[pi]
                        .as_ref()
                        .filter(|_| li > NINF && lj > NINF)
                        .and_then(|m| paired_delta(&problems[i], &sc[i], &problems[j], &sc[j], m))
                        .unwrap_or(lj - li);
                    rows.push(d);
                }
            }
            Ok(rows)
        })
        .collect();
    let mut rows = Vec::new();
    for p in parts {
        rows.extend(p?);
    }
    let n_rows = rows.len() / stride;
    let row = |s: usize, c: usize| rows[s * stride + c];

    let mut estimates = Vec::with_capacity(np);
    for (k, pr) in problems.iter().enumerate() {
        let mut acc = Accumulator::new();
        for s in 0..n_rows {
            acc.add(row(s, 2 * k), row(s, 2 * k + 1));
        }
        let mut e = acc.finish(budget.ess_floor)?;
        e.warnings.extend(pr.params().warnings());
        estimates.push(e);
    }

    let mut out = Vec::with_capacity(pairs.len());
    for (pi, &(i, j)) in pairs.iter().enumerate() {
        let col = 2 * np + pi;
        let centre = problems[j].evaluate_points(&[])?.value;
        let fallback = || PairDifference {
            first: i,
            second: j,
            value: estimates[j].value - estimates[i].value,
            std_error: estimates[i].std_error.hypot(estimates[j].std_error),
            paired: false,
        };
        let unpaired = (0..n_rows).any(|s| row(s, 2 * i) == NINF && row(s, 2 * j) > NINF);
        if unpaired {
            out.push(fallback());
            continue;
        }
        let m = (0..n_rows).map(|s| row(s, 2 * i)).fold(NINF, f64::max);
        let mut w_sum = 0.0;
        let mut e_sum = 0.0;
        for s in 0..n_rows {
            let lp = row(s, 2 * i);
            if lp == NINF {
                continue;
            }
            let w = (lp - m).exp();
            w_sum += w;
            e_sum += w * row(s, col).exp_m1();
        }
        let l = (e_sum / w_sum).ln_1p();
        let mu_q = estimates[j].value;
        let (mut dsum, mut terms) = (0.0, Vec::with_capacity(n_rows));
        for s in 0..n_rows {
            let lp = row(s, 2 * i);
            if lp == NINF {
                continue;
            }
            let w = (lp - m).exp() / w_sum;
            let rm1 = (row(s, col) - l).exp_m1();
            let (fp, fq) = (row(s, 2 * i + 1), row(s, 2 * j + 1));
            dsum += w * (rm1 * (fq - centre) + (fq - fp));
            terms.push((w, rm1 * (fq - mu_q) + (fq - fp)));
        }
        let var: f64 = terms.iter().map(|(w, t)| (w * (t - dsum)).powi(2)).sum();
        if !(dsum.is_finite() && var.is_finite()) {
            out.push(fallback());
            continue;
        }
        out.push(PairDifference { first: i, second: j, value: dsum, std_error: var.sqrt(), paired: true });
    }
    Ok(CommonEstimate { estimates, pairs: out })
}

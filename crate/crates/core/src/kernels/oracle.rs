//! Brute-force reference for one-dimensional kernels.
//!
//! The conditional expectation is written directly from its definition:
//! a sum over time-zero colourings of `ω_B` and the evolved conditioning,
//! weighted by `λ_σ` per point, `p_t(σ, σ̂)` per evolved point and the colour
//! constraint, with the time-`t` colours of `ω_B` summed out explicitly.
//! Clusters reaching the horizon start plus (`γ^∞`), or contribute `λ-` per
//! point with uniform colours (`γ^f`). The Poisson series is truncated at
//! `N_max` points and each term integrated on a midpoint grid aligned with
//! every discontinuity of the integrand.

use serde::{Deserialize, Serialize};

use super::{KernelKind, KernelSpec};
use crate::error::{invalid, Error, Result};
use crate::geometry::{ColoredConfiguration, GreyConfiguration, Point, Spin};
use crate::model::flip_kernel;
use crate::numeric::poisson_tail;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub value: f64,
    /// `tail_bound + richardson`.
    pub error_bound: f64,
    pub tail_bound: f64,
    pub richardson: f64,
    pub n_max: usize,
    pub h: f64,
}

struct Ctx<'a> {
    spec: &'a KernelSpec,
    cond: Vec<Point>,
    /// `Some(σ̂)` for evolved points, `None` marks fixed points (handled via `fixed_spin`).
    evolved_spin: Vec<Option<Spin>>,
    fixed_spin: Vec<Option<Spin>>,
    horizon_point: Vec<bool>,
}

fn clusters(points: &[Point], a: f64) -> Vec<usize> {
    let n = points.len();
    let mut label: Vec<usize> = (0..n).collect();
    let r2 = 4.0 * a * a;
    let mut changed = true;
    while changed {
        changed = false;
        for i in 0..n {
            for j in 0..n {
                if points[i].dist2(&points[j]) < r2 && label[j] < label[i] {
                    label[i] = label[j];
                    changed = true;
                }
            }
        }
    }
    label
}

impl Ctx<'_> {
    /// Numerator and denominator contributions of one `ω_B`.
    fn integrand(&self, xs: &[Point]) -> (f64, f64) {
        let p = &self.spec.params;
        let t = p.t();
        let n = xs.len();
        let mut all: Vec<Point> = xs.to_vec();
        all.extend_from_slice(&self.cond);
        let label = clusters(&all, p.a());
        let m = all.len();
        let infinite_label: Vec<bool> = {
            let mut inf = vec![false; m];
            for (j, &h) in self.horizon_point.iter().enumerate() {
                if h {
                    inf[label[n + j]] = true;
                }
            }
            inf
        };
        let pinned = |i: usize| infinite_label[label[i]];
        let kind = self.spec.kind;
        // Free indices: ω_B and evolved points outside horizon clusters.
        let free: Vec<usize> = (0..m)
            .filter(|&i| !pinned(i) && (i < n || self.evolved_spin[i - n].is_some()))
            .collect();
        let mut num = 0.0;
        let mut den = 0.0;
        let mut sigma0 = vec![Spin::Plus; m];
        for i in n..m {
            if let Some(s) = self.fixed_spin[i - n] {
                sigma0[i] = s;
            }
        }
        for mask in 0u32..(1u32 << free.len()) {
            for (b, &i) in free.iter().enumerate() {
                sigma0[i] = if mask >> b & 1 == 1 { Spin::Minus } else { Spin::Plus };
            }
            for i in 0..m {
                if pinned(i) && (i < n || self.evolved_spin[i - n].is_some()) {
                    sigma0[i] = Spin::Plus;
                }
            }
            // Colour constraint on all pairs whose time-zero colours are meaningful.
            let mut ok = true;
            'outer: for i in 0..m {
                for j in (i + 1)..m {
                    if label[i] == label[j] && all[i].dist2(&all[j]) < 4.0 * p.a() * p.a() && sigma0[i] != sigma0[j] {
                        ok = false;
                        break 'outer;
                    }
                }
            }
            if !ok {
                continue;
            }
            let mut w = 1.0;
            for i in 0..n {
                w *= if pinned(i) && kind == KernelKind::Free { p.lambda_minus() } else { p.intensity(sigma0[i]) };
            }
            for j in 0..self.cond.len() {
                if let Some(hat) = self.evolved_spin[j] {
                    w *= p.intensity(sigma0[n + j]) * flip_kernel(t, sigma0[n + j], hat);
                }
            }
            if w == 0.0 {
                continue;
            }
            // Sum the observable over the time-t colours of ω_B.
            let mut ef = 0.0;
            for hat_mask in 0u32..(1u32 << n) {
                let mut pr = 1.0;
                let mut spins = Vec::with_capacity(n);
                for i in 0..n {
                    let hat = if hat_mask >> i & 1 == 1 { Spin::Minus } else { Spin::Plus };
                    spins.push(hat);
                    pr *= if pinned(i) && kind == KernelKind::Free { 0.5 } else { flip_kernel(t, sigma0[i], hat) };
                }
                if pr == 0.0 {
                    continue;
                }
                let cfg = ColoredConfiguration::from_grey(GreyConfiguration::from_sampled(1, xs.to_vec()), spins).expect("lengths");
                ef += pr * self.spec.observable.evaluate(&cfg);
            }
            num += w * ef;
            den += w;
        }
        (num, den)
    }
}

/// Cells of `[lo, hi]` split at `breaks` and refined to width at most `h`.
fn cells(lo: f64, hi: f64, breaks: &[f64], h: f64) -> Vec<(f64, f64)> {
    let mut cuts: Vec<f64> = vec![lo, hi];
    cuts.extend(breaks.iter().copied().filter(|&b| b > lo && b < hi));
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup();
    let mut out = Vec::new();
    for w in cuts.windows(2) {
        let len = w[1] - w[0];
        let k = (len / h).ceil().max(1.0) as usize;
        let step = len / k as f64;
        for i in 0..k {
            out.push((w[0] + (i as f64 + 0.5) * step, step));
        }
    }
    out
}

fn integrate(ctx: &Ctx, cells: &[(f64, f64)], n_max: usize) -> (f64, f64) {
    let mut num = 0.0;
    let mut den = 0.0;
    // Multisets i1 ≤ ... ≤ in of cells; weight Π widths / Π multiplicity!.
    for n in 0..=n_max {
        let mut idx = vec![0usize; n];
        loop {
            let xs: Vec<Point> = idx.iter().map(|&i| Point::new(&[cells[i].0]).expect("finite")).collect();
            let mut vol = 1.0;
            let mut run = 1.0;
            for (k, &i) in idx.iter().enumerate() {
                vol *= cells[i].1;
                if k > 0 && idx[k - 1] == i {
                    run += 1.0;
                    vol /= run;
                } else {
                    run = 1.0;
                }
            }
            let (a, b) = ctx.integrand(&xs);
            num += vol * a;
            den += vol * b;
            // Next nondecreasing index tuple.
            let mut k = n;
            loop {
                if k == 0 {
                    break;
                }
                k -= 1;
                if idx[k] + 1 < cells.len() {
                    idx[k] += 1;
                    for l in k + 1..n {
                        idx[l] = idx[k];
                    }
                    k = usize::MAX;
                    break;
                }
            }
            if k != usize::MAX {
                break;
            }
        }
    }
    (num, den)
}

/// Truncated-series quadrature of a one-dimensional kernel. The grid is
/// refined once (`h`, `h/2`); the reported value uses the finer grid.
pub fn oracle_eval(spec: &KernelSpec, n_max: usize, h: f64, tolerance: f64) -> Result<OracleResult> {
    let p = &spec.params;
    if p.dim() != 1 {
        return invalid("the quadrature oracle is one-dimensional");
    }
    if n_max > 6 {
        return invalid("N_max above 6 is not supported");
    }
    if !(h > 0.0) {
        return invalid("grid step must be positive");
    }
    if let KernelKind::PlusMinus(_) = spec.kind {
        return invalid("the quadrature oracle covers the finite-volume, γ^∞ and γ^f kernels");
    }
    let (lo, hi) = spec.target.bounds();
    let (lo, hi) = (lo.coords()[0], hi.coords()[0]);
    let mu = p.total_intensity() * (hi - lo);
    let tail = 2.0 * spec.observable.sup_norm() * mu.exp() * poisson_tail(mu, n_max as u64);
    if tail > tolerance {
        return Err(Error::IncreaseNMax { tail, tolerance });
    }
    let mut cond = spec.evolved.points().to_vec();
    cond.extend_from_slice(spec.fixed.points());
    let ne = spec.evolved.len();
    let evolved_spin: Vec<Option<Spin>> = (0..cond.len()).map(|j| (j < ne).then(|| spec.evolved.spins()[j])).collect();
    let fixed_spin: Vec<Option<Spin>> = (0..cond.len()).map(|j| (j >= ne).then(|| spec.fixed.spins()[j - ne])).collect();
    let horizon_point: Vec<bool> = (0..cond.len())
        .map(|j| j < ne && spec.kind != KernelKind::FiniteVolume && spec.horizon.as_ref().is_some_and(|hz| hz.touches(&cond[j])))
        .collect();
    let ctx = Ctx { spec, cond: cond.clone(), evolved_spin, fixed_spin, horizon_point };
    let two_a = 2.0 * p.a();
    let mut breaks = Vec::new();
    for c in &cond {
        breaks.push(c.coords()[0] - two_a);
        breaks.push(c.coords()[0] + two_a);
    }
    let (olo, ohi) = spec.observable.window.bounds();
    breaks.push(olo.coords()[0]);
    breaks.push(ohi.coords()[0]);
    let value_at = |step: f64| -> Result<f64> {
        let (num, den) = integrate(&ctx, &cells(lo, hi, &breaks, step), n_max);
        if den == 0.0 {
            return Err(Error::ConditioningInconsistent);
        }
        Ok(num / den)
    };
    let coarse = value_at(h)?;
    let fine = value_at(0.5 * h)?;
    let richardson = (fine - coarse).abs();
    Ok(OracleResult { value: fine, error_bound: tail + richardson, tail_bound: tail, richardson, n_max, h })
}

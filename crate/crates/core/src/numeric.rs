//! Log-domain arithmetic helpers.

/// `log(e^a + e^b)`, exact for infinite arguments.
#[inline]
pub fn lse2(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `lse2(a2, b2) - lse2(a1, b1)`, accurate when the pairs share a component.
pub fn lse2_diff(a1: f64, b1: f64, a2: f64, b2: f64) -> f64 {
    if a1 == a2 && b1 == b2 {
        return 0.0;
    }
    if a1 == a2 {
        return shift_one(a1, b1, b2);
    }
    if b1 == b2 {
        return shift_one(b1, a1, a2);
    }
    lse2(a2, b2) - lse2(a1, b1)
}

/// `lse2(k, y) - lse2(k, x)`.
fn shift_one(k: f64, x: f64, y: f64) -> f64 {
    let ninf = f64::NEG_INFINITY;
    if k == ninf {
        return y - x;
    }
    if x == ninf {
        return (y - k).exp().ln_1p();
    }
    if y == ninf {
        return -(x - k).exp().ln_1p();
    }
    let base = lse2(k, x);
    let r = (x - base).exp() * (y - x).exp_m1();
    if r < -0.5 {
        lse2(k, y) - base
    } else {
        r.ln_1p()
    }
}

/// `ln(1 + x)` for `x ≥ -1` returning `-∞` at `-1`.
#[inline]
pub fn ln1p_safe(x: f64) -> f64 {
    if x <= -1.0 {
        f64::NEG_INFINITY
    } else {
        x.ln_1p()
    }
}

/// `ln Γ(n + 1)` for small integers by direct summation.
pub fn ln_factorial(n: u64) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Upper tail `P(N > n)` of a Poisson(`mu`) variable, summed term by term.
pub fn poisson_tail(mu: f64, n: u64) -> f64 {
    if mu == 0.0 {
        return 0.0;
    }
    let mut term = (-mu).exp();
    let mut head = 0.0;
    for k in 0..=n {
        if k > 0 {
            term *= mu / k as f64;
        }
        head += term;
    }
    // Sum the tail directly to avoid cancellation in 1 - head when it is tiny.
    let mut tail = 0.0;
    let mut t = term;
    let mut k = n + 1;
    loop {
        t *= mu / k as f64;
        tail += t;
        if t < 1e-300 || t < tail * 1e-18 {
            break;
        }
        k += 1;
        if k > n + 10_000 {
            break;
        }
    }
    if head < 0.5 {
        (1.0 - head).max(tail)
    } else {
        tail
    }
}

/// Wilson score interval for `k` successes in `n` trials at normal quantile `z`.
pub fn wilson_interval(k: f64, n: f64, z: f64) -> (f64, f64) {
    if n <= 0.0 {
        return (0.0, 1.0);
    }
    let p = k / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Weighted least squares `y = c0 + c1 x`; returns `(c0, c1, se0, se1)`.
pub fn weighted_linear_fit(x: &[f64], y: &[f64], sigma: &[f64]) -> Option<(f64, f64, f64, f64)> {
    let n = x.len();
    if n < 2 {
        return None;
    }
    let (mut s, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        let w = 1.0 / (sigma[i] * sigma[i]).max(1e-300);
        s += w;
        sx += w * x[i];
        sy += w * y[i];
        sxx += w * x[i] * x[i];
        sxy += w * x[i] * y[i];
    }
    let det = s * sxx - sx * sx;
    if det.abs() < 1e-300 {
        return None;
    }
    let c0 = (sxx * sy - sx * sxy) / det;
    let c1 = (s * sxy - sx * sy) / det;
    // Inflate by the reduced chi-square when residual scatter exceeds the stated errors.
    let mut chi2 = 0.0;
    for i in 0..n {
        let r = (y[i] - c0 - c1 * x[i]) / sigma[i].max(1e-300);
        chi2 += r * r;
    }
    let scale = if n > 2 { (chi2 / (n - 2) as f64).max(1.0) } else { 1.0 };
    Some((c0, c1, (scale * sxx / det).sqrt(), (scale * s / det).sqrt()))
}

//! Gauss rules on intervals, boxes and simplices.

/// Default number of Gauss points per axis.
pub const DEFAULT_ORDER: usize = 4;

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(order: usize) -> Vec<(f64, f64)> {
    assert!(order >= 1, "quadrature order must be positive");
    let n = order;
    let mut rule = Vec::with_capacity(n);
    for i in 0..n {
        // Tricomi initial guess, then Newton on P_n
        let mut x = ((4 * i + 3) as f64 * std::f64::consts::PI / (4 * n + 2) as f64).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule.push((0.5 * (1.0 - x), 0.5 * w));
    }
    rule.sort_by(|a, b| a.0.total_cmp(&b.0));
    rule
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let pk = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = pk;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Rule on the reference simplex `{λ ∈ R^{dim+1}_{≥0}, Σλ = 1}` by collapsed
/// (conical product) Gauss points. Returns barycentric coordinates and weights
/// summing to `1/dim!`, the reference volume.
///
/// Exact for polynomials of total degree `≤ 2·order − dim`.
pub fn simplex_rule(dim: usize, order: usize) -> Vec<(Vec<f64>, f64)> {
    if dim == 0 {
        return vec![(vec![1.0], 1.0)];
    }
    let g = gauss_legendre(order);
    let mut out = Vec::with_capacity(order.pow(dim as u32));
    let mut idx = vec![0usize; dim];
    loop {
        let mut remaining = 1.0;
        let mut weight = 1.0;
        let mut xi = Vec::with_capacity(dim);
        for (axis, &k) in idx.iter().enumerate() {
            let (u, w) = g[k];
            xi.push(remaining * u);
            weight *= w * (1.0 - u).powi((dim - 1 - axis) as i32);
            remaining *= 1.0 - u;
        }
        let mut bary = Vec::with_capacity(dim + 1);
        bary.push(1.0 - xi.iter().sum::<f64>());
        bary.extend(xi);
        out.push((bary, weight));
        if !advance(&mut idx, order) {
            break;
        }
    }
    out
}

/// Tensor rule on `[0,1]^dim` with `order` points per axis.
pub fn box_rule(dim: usize, order: usize) -> Vec<(Vec<f64>, f64)> {
    let g = gauss_legendre(order);
    let mut out = Vec::new();
    let mut idx = vec![0usize; dim];
    loop {
        let p = idx.iter().map(|&k| g[k].0).collect();
        let w = idx.iter().map(|&k| g[k].1).product();
        out.push((p, w));
        if dim == 0 || !advance(&mut idx, order) {
            break;
        }
    }
    out
}

/// Odometer increment; false once every index wrapped.
pub(crate) fn advance(idx: &mut [usize], base: usize) -> bool {
    for d in idx.iter_mut() {
        *d += 1;
        if *d < base {
            return true;
        }
        *d = 0;
    }
    false
}

pub(crate) fn factorial(k: usize) -> usize {
    (1..=k).product()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials() {
        for order in 1..=8 {
            let rule = gauss_legendre(order);
            for deg in 0..2 * order {
                let s: f64 = rule.iter().map(|(x, w)| w * x.powi(deg as i32)).sum();
                assert!((s - 1.0 / (deg as f64 + 1.0)).abs() < 1e-14, "order {order} deg {deg}");
            }
        }
    }

    #[test]
    fn simplex_rule_is_exact() {
        // ∫_simplex λ_1^a λ_2^b = a! b! / (a+b+2)! in 2D
        let rule = simplex_rule(2, 4);
        let total: f64 = rule.iter().map(|(_, w)| w).sum();
        assert!((total - 0.5).abs() < 1e-15, "{total}");
        for a in 0..4i32 {
            for b in 0..(6 - a) {
                let s: f64 = rule.iter().map(|(l, w)| w * l[1].powi(a) * l[2].powi(b)).sum();
                let exact = (factorial(a as usize) * factorial(b as usize)) as f64
                    / factorial((a + b + 2) as usize) as f64;
                assert!((s - exact).abs() < 1e-15, "{a} {b}");
            }
        }
        let rule3 = simplex_rule(3, 4);
        let s: f64 = rule3.iter().map(|(l, w)| w * l[0] * l[1] * l[2] * l[3]).sum();
        assert!((s - 1.0 / 5040.0).abs() < 1e-16);
    }
}

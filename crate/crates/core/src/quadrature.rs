//! Fixed quadrature rules shared by the geometry kernel and the error metrics.

use crate::geom::Point2;

/// Symmetric 6-point rule on a triangle, exact for polynomials of degree 4.
/// Entries are (barycentric a, weight); each orbit is (a, a, 1 - 2a).
const TRIANGLE_DEG4: [(f64, f64); 2] = [
    (0.445_948_490_915_965, 0.223_381_589_678_011),
    (0.091_576_213_509_771, 0.109_951_743_655_322),
];

/// Calls `visit(point, weight)` for the degree-4 rule on triangle (a, b, c).
/// Weights already include the (unsigned) triangle area.
pub fn triangle_deg4(a: Point2, b: Point2, c: Point2, mut visit: impl FnMut(Point2, f64)) {
    let area = 0.5 * (b - a).cross(c - a).abs();
    if area == 0.0 {
        return;
    }
    for &(s, w) in &TRIANGLE_DEG4 {
        let t = 1.0 - 2.0 * s;
        let w = w * area;
        visit(a * s + b * s + c * t, w);
        visit(a * s + b * t + c * s, w);
        visit(a * t + b * s + c * s, w);
    }
}

/// Integrates `f` over triangle (a, b, c) with the degree-4 rule.
pub fn integrate_triangle(a: Point2, b: Point2, c: Point2, f: impl Fn(Point2) -> f64) -> f64 {
    let mut acc = 0.0;
    triangle_deg4(a, b, c, |p, w| acc += w * f(p));
    acc
}

/// Gauss-Legendre nodes and weights on [0, 1].
pub fn gauss_legendre_unit(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1);
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        // Chebyshev initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((0.5 * (1.0 - x), 0.5 * w));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Integrates `f` over the triangle with apex `apex` using collapsed (Duffy)
/// coordinates, so integrands with a cone-type singularity at the apex such as
/// `|x - apex|` are resolved to near machine precision. The result carries the
/// orientation sign of (apex, b, c), so fans from any point sum correctly.
pub fn integrate_triangle_apex(
    apex: Point2,
    b: Point2,
    c: Point2,
    rule: &[(f64, f64)],
    f: impl Fn(Point2) -> f64,
) -> f64 {
    let ea = b - apex;
    let eb = c - b;
    let jac = ea.cross(eb);
    if jac == 0.0 {
        return 0.0;
    }
    let mut acc = 0.0;
    for &(s, ws) in rule {
        for &(t, wt) in rule {
            let p = apex + (ea + eb * t) * s;
            acc += ws * wt * s * f(p);
        }
    }
    acc * jac
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deg4_rule_integrates_quartic_monomials() {
        // Reference triangle (0,0),(1,0),(0,1): int x^a y^b = a! b! / (a+b+2)!
        let fact = |n: u32| (1..=n).map(|k| k as f64).product::<f64>();
        let a = Point2::new(0.0, 0.0);
        let b = Point2::new(1.0, 0.0);
        let c = Point2::new(0.0, 1.0);
        for i in 0..=4u32 {
            for j in 0..=(4 - i) {
                let got = integrate_triangle(a, b, c, |p| p.x.powi(i as i32) * p.y.powi(j as i32));
                let want = fact(i) * fact(j) / fact(i + j + 2);
                assert!((got - want).abs() < 1e-14, "x^{i} y^{j}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn gauss_legendre_is_exact_to_degree_2n_minus_1() {
        let rule = gauss_legendre_unit(5);
        let sum: f64 = rule.iter().map(|&(_, w)| w).sum();
        assert!((sum - 1.0).abs() < 1e-15);
        let m9: f64 = rule.iter().map(|&(x, w)| w * x.powi(9)).sum();
        assert!((m9 - 0.1).abs() < 1e-14);
    }

    #[test]
    fn duffy_rule_handles_apex_singularity() {
        // Mean distance from the centre of a unit square.
        let rule = gauss_legendre_unit(20);
        let o = Point2::new(0.0, 0.0);
        let corners = [
            Point2::new(-0.5, -0.5),
            Point2::new(0.5, -0.5),
            Point2::new(0.5, 0.5),
            Point2::new(-0.5, 0.5),
        ];
        let total: f64 = (0..4)
            .map(|k| integrate_triangle_apex(o, corners[k], corners[(k + 1) % 4], &rule, |p| p.norm()))
            .sum();
        let exact = (2f64.sqrt() + (1.0 + 2f64.sqrt()).ln()) / 6.0;
        assert!((total - exact).abs() < 1e-12, "{total} vs {exact}");
    }
}

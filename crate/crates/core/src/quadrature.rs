//! Composite Gauss–Legendre quadrature.

use num_traits::Float;

/// Gauss–Legendre nodes and weights on [-1, 1].
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Nodes by Newton iteration on P_k from Chebyshev initial guesses.
    pub fn new(k: usize) -> GaussLegendre {
        assert!(k >= 1);
        let mut nodes = vec![0.0; k];
        let mut weights = vec![0.0; k];
        for i in 0..k {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (k as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre(k, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(k, x);
            if d != 0.0 {
                dp = d;
            }
            nodes[i] = x;
            weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        GaussLegendre { nodes, weights }
    }
}

/// P_k(x) and P_k'(x) by the three-term recurrence.
fn legendre(k: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if k == 0 {
        return (1.0, 0.0);
    }
    for j in 2..=k {
        let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = k as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// ∫_a^b f over `cells` equal panels.
pub fn integrate_1d<T: Float>(f: impl Fn(T) -> T, a: T, b: T, cells: usize, rule: &GaussLegendre) -> T {
    let h = (b - a) / T::from(cells).unwrap();
    let half = h / T::from(2.0).unwrap();
    let mut acc = T::zero();
    for c in 0..cells {
        let mid = a + h * T::from(c as f64 + 0.5).unwrap();
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            acc = acc + T::from(*w).unwrap() * f(mid + half * T::from(*x).unwrap());
        }
    }
    acc * half
}

/// Tensor-product rule over [a,b]×[c,d] with `cells`×`cells` panels.
pub fn integrate_2d<T: Float>(f: impl Fn(T, T) -> T, rect: [T; 4], cells: usize, rule: &GaussLegendre) -> T {
    let [a, b, c, d] = rect;
    integrate_1d(|y| integrate_1d(|x| f(x, y), a, b, cells, rule), c, d, cells, rule)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_for_low_degree() {
        let r = GaussLegendre::new(3);
        let v = integrate_1d(|x: f64| x.powi(5) - 2.0 * x * x, 0.0, 2.0, 1, &r);
        assert!((v - (64.0 / 6.0 - 16.0 / 3.0)).abs() < 1e-12);
        let w: f64 = r.weights.iter().sum();
        assert!((w - 2.0).abs() < 1e-14);
    }

    #[test]
    fn two_dimensional_and_f32() {
        let r = GaussLegendre::new(4);
        let v = integrate_2d(|x: f64, y: f64| (x + y).exp(), [0.0, 1.0, 0.0, 1.0], 4, &r);
        let e = (std::f64::consts::E - 1.0).powi(2);
        assert!((v - e).abs() < 1e-12);
        let v32 = integrate_2d(|x: f32, y: f32| x * y, [0.0, 1.0, 0.0, 1.0], 2, &r);
        assert!((v32 - 0.25).abs() < 1e-6);
    }
}

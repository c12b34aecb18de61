use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::eval::{Compiled, Point};
use super::{normalize, Expr};

#[derive(Clone, Debug)]
pub struct EqualConfig {
    pub trials: usize,
    /// relative tolerance: |a-b| <= tol * max(1, |a|, |b|)
    pub tol: f64,
    pub seed: u64,
}

impl Default for EqualConfig {
    fn default() -> Self {
        EqualConfig { trials: 20, tol: 1e-9, seed: 0x1e9a_9e }
    }
}

impl EqualConfig {
    pub fn with_seed(seed: u64) -> Self {
        EqualConfig { seed, ..Self::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Witness {
    pub point: BTreeMap<String, f64>,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Equality {
    Equal,
    Unequal(Witness),
    Unknown,
}

impl Equality {
    pub fn is_equal(&self) -> bool {
        matches!(self, Equality::Equal)
    }

    pub fn is_unequal(&self) -> bool {
        matches!(self, Equality::Unequal(_))
    }
}

/// Draws a value from [-2,-0.1] ∪ [0.1,2].
pub(crate) fn sample_value(rng: &mut ChaCha8Rng) -> f64 {
    let v: f64 = rng.gen_range(0.1..2.0);
    if rng.gen_bool(0.5) {
        v
    } else {
        -v
    }
}

/// Random point on all free symbols and opaque applications of the given expressions.
pub(crate) fn sample_point(exprs: &[&Expr], rng: &mut ChaCha8Rng) -> Point {
    let mut p = Point::new();
    for e in exprs {
        for s in e.free_symbols() {
            if !p.coords.contains_key(&s) {
                let v = sample_value(rng);
                p.coords.insert(s, v);
            }
        }
        for k in e.opaque_keys() {
            if !p.opaque.contains_key(&k) {
                let v = sample_value(rng);
                p.opaque.insert(k, v);
            }
        }
    }
    p
}

pub fn equal(a: &Expr, b: &Expr, cfg: &EqualConfig) -> Equality {
    equal_guarded(a, b, cfg, &|_| true)
}

/// `equal` with an extra admissibility predicate on sample points
/// (for example positive-definiteness of a metric).
pub fn equal_guarded(a: &Expr, b: &Expr, cfg: &EqualConfig, guard: &dyn Fn(&Point) -> bool) -> Equality {
    let diff = a - b;
    if diff.is_zero() || normalize(&diff).map(|d| d.is_zero()).unwrap_or(false) {
        return Equality::Equal;
    }
    let (ca, cb) = (Compiled::new(a), Compiled::new(b));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut used = 0;
    for _ in 0..cfg.trials.max(1) * 10 {
        if used >= cfg.trials.max(1) {
            break;
        }
        let p = sample_point(&[a, b], &mut rng);
        if !guard(&p) {
            continue;
        }
        let (va, vb) = match (ca.eval_with(&p, 1e-10), cb.eval_with(&p, 1e-10)) {
            (Ok(x), Ok(y)) => (x, y),
            _ => continue,
        };
        used += 1;
        let scale = 1f64.max(va.abs()).max(vb.abs());
        if (va - vb).abs() > cfg.tol * scale {
            let mut point: BTreeMap<String, f64> = p.coords.iter().map(|(k, v)| (k.to_string(), *v)).collect();
            point.extend(p.opaque.iter().map(|(k, v)| (k.clone(), *v)));
            return Equality::Unequal(Witness { point, lhs: va, rhs: vb });
        }
    }
    if used == 0 {
        Equality::Unknown
    } else {
        Equality::Equal
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::CoordSymbol;

    #[test]
    fn spec_examples() {
        let cfg = EqualConfig::default();
        let (x, y) = (Expr::x(1), Expr::y(1));
        assert!(equal(&(&x + &y), &(&y + &x), &cfg).is_equal());
        match equal(&Expr::y1(1, 1), &Expr::y1(1, 2), &cfg) {
            Equality::Unequal(w) => {
                assert!((w.lhs - w.rhs).abs() > cfg.tol);
                assert_eq!(w.point["y1_1"], w.lhs);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn all_skipped_is_unknown() {
        // sqrt(-x^2 - 1) has no admissible point
        let e = (-(Expr::x(1) * Expr::x(1)) - Expr::one()).sqrt();
        assert_eq!(equal(&e, &Expr::zero(), &EqualConfig::default()), Equality::Unknown);
    }

    #[test]
    fn surd_identity_by_sampling() {
        // sqrt(x^2 y^2) = |x y|, not x*y: sampling must notice
        let (x, y) = (Expr::x(1), Expr::sym(CoordSymbol::Y(1)));
        let e = (&x * &x * &y * &y).sqrt();
        assert!(equal(&e, &(&x * &y), &EqualConfig::default()).is_unequal());
    }
}

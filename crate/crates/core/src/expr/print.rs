use num_traits::{One, Signed};

use super::poly::{Atom, Poly};
use super::Rational;

fn rat_str(c: &Rational) -> String {
    if c.is_integer() {
        c.numer().to_string()
    } else {
        format!("{}/{}", c.numer(), c.denom())
    }
}

fn atom_dsl(a: &Atom, e: i32) -> String {
    let base = match a {
        Atom::Sym(s) => s.to_string(),
        Atom::Opaque(o) => {
            let mut s = o.name.to_string();
            if !o.derivs.is_empty() {
                s.push_str("__");
                for d in &o.derivs {
                    s.push_str(&d.to_string());
                }
            }
            let args: Vec<String> = o.args.iter().map(dsl).collect();
            format!("{s}({})", args.join(", "))
        }
        Atom::Elem(f, p) => format!("{}({})", f.name(), dsl(p)),
        Atom::Sqrt(p) => format!("sqrt({})", dsl(p)),
        Atom::Recip(p) => return format!("({})^-{e}", dsl(p)),
    };
    if e == 1 {
        base
    } else {
        format!("{base}^{e}")
    }
}

pub(super) fn dsl(p: &Poly) -> String {
    if p.is_zero() {
        return "0".into();
    }
    let mut out = String::new();
    for (i, (m, c)) in p.terms.iter().enumerate() {
        let neg = c.is_negative();
        if i == 0 {
            if neg {
                out.push('-');
            }
        } else {
            out.push_str(if neg { " - " } else { " + " });
        }
        let a = c.abs();
        let factors: Vec<String> = m.0.iter().map(|(at, e)| atom_dsl(at, *e)).collect();
        if factors.is_empty() {
            out.push_str(&rat_str(&a));
        } else {
            if !a.is_one() {
                out.push_str(&rat_str(&a));
                out.push('*');
            }
            out.push_str(&factors.join("*"));
        }
    }
    out
}

fn atom_latex(a: &Atom, e: i32) -> String {
    let base = match a {
        Atom::Sym(s) => s.latex(),
        Atom::Opaque(o) => {
            let mut s = o.name.to_string();
            if !o.derivs.is_empty() {
                let d: String = o.derivs.iter().map(|d| d.to_string()).collect();
                s = format!("{s}_{{,{d}}}");
            }
            let args: Vec<String> = o.args.iter().map(latex).collect();
            format!("{s}\\left({}\\right)", args.join(", "))
        }
        Atom::Elem(f, p) => format!("\\{}\\left({}\\right)", f.name(), latex(p)),
        Atom::Sqrt(p) => format!("\\sqrt{{{}}}", latex(p)),
        Atom::Recip(p) => return format!("\\left({}\\right)^{{-{e}}}", latex(p)),
    };
    if e == 1 {
        base
    } else if matches!(a, Atom::Sym(_)) {
        format!("\\left({base}\\right)^{{{e}}}")
    } else {
        format!("{base}^{{{e}}}")
    }
}

pub(super) fn latex(p: &Poly) -> String {
    if p.is_zero() {
        return "0".into();
    }
    let mut out = String::new();
    for (i, (m, c)) in p.terms.iter().enumerate() {
        let neg = c.is_negative();
        if i == 0 {
            if neg {
                out.push('-');
            }
        } else {
            out.push_str(if neg { " - " } else { " + " });
        }
        let a = c.abs();
        let coef = if a.is_integer() {
            a.numer().to_string()
        } else {
            format!("\\frac{{{}}}{{{}}}", a.numer(), a.denom())
        };
        let factors: Vec<String> = m.0.iter().map(|(at, e)| atom_latex(at, *e)).collect();
        if factors.is_empty() {
            out.push_str(&coef);
        } else {
            if !a.is_one() {
                out.push_str(&coef);
                out.push_str(" \\, ");
            }
            out.push_str(&factors.join(" \\, "));
        }
    }
    out
}

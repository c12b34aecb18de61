use std::fmt;
use std::sync::Arc;

/// A coordinate function on one of the jet, Grassmann or group charts.
///
/// Indices are 1-based. Second-order index pairs are kept sorted so that
/// `y^K_jk` and `y^K_kj` are the same symbol.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CoordSymbol {
    /// base coordinate x^i
    X(u16),
    /// fiber coordinate y^K
    Y(u16),
    /// first jet y^K_j
    Y1(u16, u16),
    /// second jet y^K_jk, j <= k
    Y2(u16, u16, u16),
    /// adapted w^K
    W(u16),
    /// adapted w^i_j (K in the subsequence) or w^σ_i (K in the complement)
    W1(u16, u16),
    /// second-order Grassmann coordinate w^σ_ij, i <= j
    W2(u16, u16, u16),
    /// z^k_i, entries of the inverse of the (i)-minor
    Z(u16, u16),
    /// group coordinate a^i_j
    A(u16, u16),
    /// declared free parameter
    Param(Arc<str>),
}

impl CoordSymbol {
    pub fn y2(k: u16, i: u16, j: u16) -> Self {
        if i <= j {
            CoordSymbol::Y2(k, i, j)
        } else {
            CoordSymbol::Y2(k, j, i)
        }
    }

    pub fn w2(s: u16, i: u16, j: u16) -> Self {
        if i <= j {
            CoordSymbol::W2(s, i, j)
        } else {
            CoordSymbol::W2(s, j, i)
        }
    }

    pub fn param(name: &str) -> Self {
        CoordSymbol::Param(Arc::from(name))
    }

    /// Jet order of a y-family symbol (0 for everything else).
    pub fn jet_order(&self) -> u8 {
        match self {
            CoordSymbol::Y1(..) => 1,
            CoordSymbol::Y2(..) => 2,
            _ => 0,
        }
    }

    pub fn is_w_family(&self) -> bool {
        matches!(self, CoordSymbol::W(_) | CoordSymbol::W1(..) | CoordSymbol::W2(..))
    }

    pub fn latex(&self) -> String {
        match self {
            CoordSymbol::X(i) => format!("x^{{{i}}}"),
            CoordSymbol::Y(k) => format!("y^{{{k}}}"),
            CoordSymbol::Y1(k, j) => format!("y^{{{k}}}_{{{j}}}"),
            CoordSymbol::Y2(k, i, j) => format!("y^{{{k}}}_{{{i}{j}}}"),
            CoordSymbol::W(k) => format!("w^{{{k}}}"),
            CoordSymbol::W1(k, j) => format!("w^{{{k}}}_{{{j}}}"),
            CoordSymbol::W2(k, i, j) => format!("w^{{{k}}}_{{{i}{j}}}"),
            CoordSymbol::Z(k, i) => format!("z^{{{k}}}_{{{i}}}"),
            CoordSymbol::A(i, j) => format!("a^{{{i}}}_{{{j}}}"),
            CoordSymbol::Param(p) => p.to_string(),
        }
    }
}

impl fmt::Display for CoordSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoordSymbol::X(i) => write!(f, "x{i}"),
            CoordSymbol::Y(k) => write!(f, "y{k}"),
            CoordSymbol::Y1(k, j) => write!(f, "y{k}_{j}"),
            CoordSymbol::Y2(k, i, j) => write!(f, "y{k}_{i}{j}"),
            CoordSymbol::W(k) => write!(f, "w{k}"),
            CoordSymbol::W1(k, j) => write!(f, "w{k}_{j}"),
            CoordSymbol::W2(k, i, j) => write!(f, "w{k}_{i}{j}"),
            CoordSymbol::Z(k, i) => write!(f, "z{k}_{i}"),
            CoordSymbol::A(i, j) => write!(f, "a{i}_{j}"),
            CoordSymbol::Param(p) => write!(f, "{p}"),
        }
    }
}

use std::collections::BTreeSet;
use std::fmt;

use super::registry::{Op, ParamKind};

/// A symbolic factor: constants and meta-field leaves combined by registered operators.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Field(String),
    Call(Op, Vec<Arg>),
}

/// One argument slot of a call; its variant always matches the operator's `ParamKind`.
#[derive(Debug, Clone, PartialEq)]
pub enum Arg {
    Expr(Expr),
    Window(usize),
    Group(String),
    Fraction(f64),
}

impl Arg {
    pub fn kind(&self) -> ParamKind {
        match self {
            Arg::Expr(_) => ParamKind::Series,
            Arg::Window(_) => ParamKind::Window,
            Arg::Group(_) => ParamKind::Group,
            Arg::Fraction(_) => ParamKind::Fraction,
        }
    }

    pub fn as_expr(&self) -> Option<&Expr> {
        match self {
            Arg::Expr(e) => Some(e),
            _ => None,
        }
    }
}

impl Expr {
    pub fn field(name: &str) -> Expr {
        Expr::Field(name.to_string())
    }

    pub fn unary(op: Op, x: Expr) -> Expr {
        Expr::Call(op, vec![Arg::Expr(x)])
    }

    pub fn binary(op: Op, a: Expr, b: Expr) -> Expr {
        Expr::Call(op, vec![Arg::Expr(a), Arg::Expr(b)])
    }

    pub fn windowed(op: Op, x: Expr, window: usize) -> Expr {
        Expr::Call(op, vec![Arg::Expr(x), Arg::Window(window)])
    }

    pub fn ts_corr(a: Expr, b: Expr, window: usize) -> Expr {
        Expr::Call(Op::TsCorr, vec![Arg::Expr(a), Arg::Expr(b), Arg::Window(window)])
    }

    pub fn grouped(op: Op, x: Expr, group: &str) -> Expr {
        Expr::Call(op, vec![Arg::Expr(x), Arg::Group(group.to_string())])
    }

    /// Leaves count as depth 1.
    pub fn depth(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Field(_) => 1,
            Expr::Call(_, args) => {
                1 + args
                    .iter()
                    .filter_map(Arg::as_expr)
                    .map(Expr::depth)
                    .max()
                    .unwrap_or(0)
            }
        }
    }

    /// Expression nodes only; window/group/fraction parameters are not counted.
    pub fn node_count(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Field(_) => 1,
            Expr::Call(_, args) => {
                1 + args.iter().filter_map(Arg::as_expr).map(Expr::node_count).sum::<usize>()
            }
        }
    }

    pub fn is_terminal(&self) -> bool {
        !matches!(self, Expr::Call(..))
    }

    /// Every meta-field leaf and group parameter the expression reads.
    pub fn required_fields(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_fields(&mut out);
        out
    }

    fn collect_fields(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Const(_) => {}
            Expr::Field(name) => {
                out.insert(name.clone());
            }
            Expr::Call(_, args) => {
                for a in args {
                    match a {
                        Arg::Expr(e) => e.collect_fields(out),
                        Arg::Group(g) => {
                            out.insert(g.clone());
                        }
                        Arg::Window(_) | Arg::Fraction(_) => {}
                    }
                }
            }
        }
    }

    /// Check argument kinds against the registry, window >= 2 and fraction range.
    pub fn is_well_formed(&self) -> bool {
        match self {
            Expr::Const(c) => c.is_finite(),
            Expr::Field(name) => is_identifier(name),
            Expr::Call(op, args) => {
                let params = op.params();
                params.len() == args.len()
                    && params.iter().zip(args).all(|(kind, arg)| {
                        *kind == arg.kind()
                            && match arg {
                                Arg::Expr(e) => e.is_well_formed(),
                                Arg::Window(w) => *w >= 2,
                                Arg::Group(g) => is_identifier(g),
                                Arg::Fraction(p) => (0.0..0.5).contains(p),
                            }
                    })
            }
        }
    }

    pub fn canonical(&self) -> String {
        self.to_string()
    }
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_lowercase() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

impl fmt::Display for Expr {
    /// Canonical form: call syntax everywhere except unary minus, which prints
    /// as a `-` prefix. A non-negative constant under minus is parenthesized so
    /// it does not read back as a negative literal.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::Field(name) => f.write_str(name),
            Expr::Call(Op::Neg, args) => match &args[..] {
                [Arg::Expr(Expr::Const(c))] if !c.is_sign_negative() => write!(f, "-({c})"),
                [Arg::Expr(inner)] => write!(f, "-{inner}"),
                _ => write_call(f, Op::Neg, args),
            },
            Expr::Call(op, args) => write_call(f, *op, args),
        }
    }
}

fn write_call(f: &mut fmt::Formatter<'_>, op: Op, args: &[Arg]) -> fmt::Result {
    write!(f, "{}(", op.name())?;
    for (k, a) in args.iter().enumerate() {
        if k > 0 {
            f.write_str(", ")?;
        }
        match a {
            Arg::Expr(e) => write!(f, "{e}")?,
            Arg::Window(w) => write!(f, "{w}")?,
            Arg::Group(g) => f.write_str(g)?,
            Arg::Fraction(p) => write!(f, "{p}")?,
        }
    }
    f.write_str(")")
}

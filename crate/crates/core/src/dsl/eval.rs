//! Vectorized evaluation of expressions over a panel.
//!
//! Every operator at date `t` reads only dates `<= t`. Window operators need
//! the full trailing window observed; cross-sectional operators work on the
//! observed cells of one date.

use std::collections::BTreeMap;

use super::ast::{Arg, Expr};
use super::matrix::FactorMatrix;
use super::registry::Op;
use crate::error::{Error, Result};
use crate::panel::PanelFrame;
use crate::stats;

pub const DEFAULT_MAX_DEPTH: usize = 8;
pub const DEFAULT_MAX_NODES: usize = 64;
const DIV_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    pub max_depth: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            max_depth: DEFAULT_MAX_DEPTH,
        }
    }
}

pub fn evaluate(expr: &Expr, panel: &PanelFrame) -> Result<FactorMatrix> {
    evaluate_with(expr, panel, EvalOptions::default())
}

pub fn evaluate_with(expr: &Expr, panel: &PanelFrame, opts: EvalOptions) -> Result<FactorMatrix> {
    let depth = expr.depth();
    if depth > opts.max_depth {
        return Err(Error::DepthExceeded {
            depth,
            cap: opts.max_depth,
        });
    }
    let ctx = Ctx {
        panel,
        nd: panel.n_dates(),
        ni: panel.n_instruments(),
    };
    let s = ctx.eval(expr)?;
    FactorMatrix::new(panel.dates_arc(), panel.instruments_arc(), s.values, s.mask)
}

struct Surface {
    values: Vec<f64>,
    mask: Vec<bool>,
}

impl Surface {
    fn masked(n: usize) -> Self {
        Self {
            values: vec![f64::NAN; n],
            mask: vec![false; n],
        }
    }

    fn set(&mut self, k: usize, v: f64) {
        if v.is_finite() {
            self.values[k] = v;
            self.mask[k] = true;
        }
    }
}

struct Ctx<'a> {
    panel: &'a PanelFrame,
    nd: usize,
    ni: usize,
}

impl Ctx<'_> {
    fn n(&self) -> usize {
        self.nd * self.ni
    }

    fn eval(&self, expr: &Expr) -> Result<Surface> {
        match expr {
            Expr::Const(c) => Ok(Surface {
                values: vec![*c; self.n()],
                mask: vec![true; self.n()],
            }),
            Expr::Field(name) => {
                let f = self.panel.field_index(name)?;
                let (v, m) = self.panel.surface(f);
                Ok(Surface {
                    values: v.to_vec(),
                    mask: m.to_vec(),
                })
            }
            Expr::Call(op, args) => self.call(*op, args),
        }
    }

    fn series(&self, arg: &Arg) -> Result<Surface> {
        match arg {
            Arg::Expr(e) => self.eval(e),
            other => Err(Error::InvalidInput(format!("expected series argument, got {other:?}"))),
        }
    }

    fn group_keys(&self, arg: &Arg) -> Result<Surface> {
        match arg {
            Arg::Group(name) => {
                let f = self.panel.field_index(name)?;
                let (v, m) = self.panel.surface(f);
                Ok(Surface {
                    values: v.to_vec(),
                    mask: m.to_vec(),
                })
            }
            other => Err(Error::InvalidInput(format!("expected group argument, got {other:?}"))),
        }
    }

    fn call(&self, op: Op, args: &[Arg]) -> Result<Surface> {
        if args.len() != op.params().len() {
            return Err(Error::InvalidInput(format!("{op} takes {} arguments", op.params().len())));
        }
        let window = |k: usize| match args.get(k) {
            Some(Arg::Window(w)) if *w >= 2 => Ok(*w),
            other => Err(Error::InvalidInput(format!("{op}: bad window {other:?}"))),
        };
        Ok(match op {
            Op::Neg => unary(self.series(&args[0])?, |x| -x),
            Op::Abs => unary(self.series(&args[0])?, f64::abs),
            Op::Sign => unary(self.series(&args[0])?, |x| {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }),
            Op::SafeSqrt => unary(self.series(&args[0])?, |x| x.signum() * x.abs().sqrt()),
            Op::SafeLog => unary(self.series(&args[0])?, |x| x.signum() * x.abs().ln_1p()),
            Op::Add => binary(self.series(&args[0])?, self.series(&args[1])?, |a, b| Some(a + b)),
            Op::Sub => binary(self.series(&args[0])?, self.series(&args[1])?, |a, b| Some(a - b)),
            Op::Mul => binary(self.series(&args[0])?, self.series(&args[1])?, |a, b| Some(a * b)),
            Op::SafeDiv => binary(self.series(&args[0])?, self.series(&args[1])?, |a, b| {
                (b.abs() >= DIV_EPS).then(|| a / b)
            }),
            Op::TsMean => self.rolling(self.series(&args[0])?, window(1)?, |w| Some(stats::mean(w))),
            Op::TsStd => {
                self.rolling(self.series(&args[0])?, window(1)?, |w| Some(stats::sample_std(w)))
            }
            Op::TsDelta => self.rolling(self.series(&args[0])?, window(1)?, |w| {
                Some(w[w.len() - 1] - w[0])
            }),
            Op::TsRank => self.rolling(self.series(&args[0])?, window(1)?, |w| {
                let cur = w[w.len() - 1];
                let less = w.iter().filter(|v| **v < cur).count() as f64;
                let equal = w.iter().filter(|v| **v == cur).count() as f64;
                let pos = less + (equal - 1.0) / 2.0;
                Some(2.0 * pos / (w.len() - 1) as f64 - 1.0)
            }),
            Op::TsMax => self.rolling(self.series(&args[0])?, window(1)?, |w| {
                Some(w.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            }),
            Op::TsMin => self.rolling(self.series(&args[0])?, window(1)?, |w| {
                Some(w.iter().copied().fold(f64::INFINITY, f64::min))
            }),
            Op::DecayLinear => self.rolling(self.series(&args[0])?, window(1)?, |w| {
                let n = w.len();
                let total = (n * (n + 1) / 2) as f64;
                let s: f64 = w.iter().enumerate().map(|(k, v)| (k + 1) as f64 * v).sum();
                Some(s / total)
            }),
            Op::TsCorr => self.rolling_corr(
                self.series(&args[0])?,
                self.series(&args[1])?,
                window(2)?,
            ),
            Op::Rank => self.per_date(self.series(&args[0])?, |vals, out| {
                out.copy_from_slice(&stats::unit_ranks(vals));
                true
            }),
            Op::Zscore => self.per_date(self.series(&args[0])?, |vals, out| {
                let std = stats::sample_std(vals);
                if vals.len() < 2 || stats::is_degenerate(vals, std) {
                    return false;
                }
                let m = stats::mean(vals);
                for (o, v) in out.iter_mut().zip(vals) {
                    *o = (v - m) / std;
                }
                true
            }),
            Op::Winsorize => {
                let p = match &args[1] {
                    Arg::Fraction(p) if (0.0..0.5).contains(p) => *p,
                    other => return Err(Error::InvalidInput(format!("winsorize: bad fraction {other:?}"))),
                };
                self.per_date(self.series(&args[0])?, |vals, out| {
                    let mut sorted = vals.to_vec();
                    sorted.sort_by(f64::total_cmp);
                    let (lo, hi) = if p == 0.0 {
                        (f64::NEG_INFINITY, f64::INFINITY)
                    } else {
                        (stats::nearest_rank(&sorted, p), stats::nearest_rank(&sorted, 1.0 - p))
                    };
                    for (o, v) in out.iter_mut().zip(vals) {
                        *o = v.clamp(lo, hi);
                    }
                    true
                })
            }
            Op::GroupRank => self.per_group(
                self.series(&args[0])?,
                self.group_keys(&args[1])?,
                |vals, out| out.copy_from_slice(&stats::unit_ranks(vals)),
            ),
            Op::GroupDemean | Op::Neutralize => self.per_group(
                self.series(&args[0])?,
                self.group_keys(&args[1])?,
                |vals, out| {
                    let m = stats::mean(vals);
                    for (o, v) in out.iter_mut().zip(vals) {
                        *o = v - m;
                    }
                },
            ),
        })
    }

    /// Trailing-window reducer per instrument; masked unless all `w` cells are observed.
    fn rolling(&self, x: Surface, w: usize, f: impl Fn(&[f64]) -> Option<f64>) -> Surface {
        let (nd, ni) = (self.nd, self.ni);
        let mut out = Surface::masked(nd * ni);
        let mut buf = Vec::with_capacity(w);
        for i in 0..ni {
            let mut run = 0usize;
            for d in 0..nd {
                let k = d * ni + i;
                run = if x.mask[k] { run + 1 } else { 0 };
                if run >= w {
                    buf.clear();
                    buf.extend((d + 1 - w..=d).map(|t| x.values[t * ni + i]));
                    if let Some(v) = f(&buf) {
                        out.set(k, v);
                    }
                }
            }
        }
        out
    }

    fn rolling_corr(&self, x: Surface, y: Surface, w: usize) -> Surface {
        let (nd, ni) = (self.nd, self.ni);
        let mut out = Surface::masked(nd * ni);
        let mut bx = Vec::with_capacity(w);
        let mut by = Vec::with_capacity(w);
        for i in 0..ni {
            let mut run = 0usize;
            for d in 0..nd {
                let k = d * ni + i;
                run = if x.mask[k] && y.mask[k] { run + 1 } else { 0 };
                if run >= w {
                    bx.clear();
                    by.clear();
                    for t in d + 1 - w..=d {
                        bx.push(x.values[t * ni + i]);
                        by.push(y.values[t * ni + i]);
                    }
                    if let Some(c) = stats::pearson(&bx, &by) {
                        out.set(k, c);
                    }
                }
            }
        }
        out
    }

    /// Apply `f` to the observed cross-section of each date. Returning false masks the date.
    fn per_date(&self, x: Surface, f: impl Fn(&[f64], &mut [f64]) -> bool) -> Surface {
        let (nd, ni) = (self.nd, self.ni);
        let mut out = Surface::masked(nd * ni);
        let mut idx = Vec::with_capacity(ni);
        let mut vals = Vec::with_capacity(ni);
        let mut res = Vec::with_capacity(ni);
        for d in 0..nd {
            idx.clear();
            vals.clear();
            for i in 0..ni {
                let k = d * ni + i;
                if x.mask[k] {
                    idx.push(k);
                    vals.push(x.values[k]);
                }
            }
            if vals.is_empty() {
                continue;
            }
            res.clear();
            res.resize(vals.len(), 0.0);
            if f(&vals, &mut res) {
                for (&k, &v) in idx.iter().zip(&res) {
                    out.set(k, v);
                }
            }
        }
        out
    }

    /// Apply `f` within each group of each date; cells without a group label are masked.
    fn per_group(&self, x: Surface, g: Surface, f: impl Fn(&[f64], &mut [f64])) -> Surface {
        let (nd, ni) = (self.nd, self.ni);
        let mut out = Surface::masked(nd * ni);
        for d in 0..nd {
            let mut groups: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
            for i in 0..ni {
                let k = d * ni + i;
                if x.mask[k] && g.mask[k] {
                    // +0.0 and -0.0 label the same group
                    let key = (g.values[k] + 0.0).to_bits();
                    groups.entry(key).or_default().push(k);
                }
            }
            for members in groups.values() {
                let vals: Vec<f64> = members.iter().map(|&k| x.values[k]).collect();
                let mut res = vec![0.0; vals.len()];
                f(&vals, &mut res);
                for (&k, &v) in members.iter().zip(&res) {
                    out.set(k, v);
                }
            }
        }
        out
    }
}

fn unary(mut x: Surface, f: impl Fn(f64) -> f64) -> Surface {
    for (v, m) in x.values.iter_mut().zip(x.mask.iter_mut()) {
        if *m {
            *v = f(*v);
            if !v.is_finite() {
                *m = false;
                *v = f64::NAN;
            }
        }
    }
    x
}

fn binary(a: Surface, b: Surface, f: impl Fn(f64, f64) -> Option<f64>) -> Surface {
    let mut out = Surface::masked(a.values.len());
    for k in 0..a.values.len() {
        if a.mask[k] && b.mask[k] {
            if let Some(v) = f(a.values[k], b.values[k]) {
                out.set(k, v);
            }
        }
    }
    out
}

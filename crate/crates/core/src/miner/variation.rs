use rand::seq::IndexedRandom;
use rand::Rng;

use crate::dsl::{within_caps, Arg, Expr, Op, ParamKind};
use crate::error::Result;

use super::MinerConfig;

/// Address of a position: argument indices from the root.
type Path = Vec<usize>;

struct Position {
    path: Path,
    kind: ParamKind,
}

fn positions(expr: &Expr) -> Vec<Position> {
    let mut out = Vec::new();
    collect(expr, &mut Vec::new(), &mut out);
    out
}

fn collect(expr: &Expr, path: &mut Path, out: &mut Vec<Position>) {
    out.push(Position {
        path: path.clone(),
        kind: ParamKind::Series,
    });
    if let Expr::Call(_, args) = expr {
        for (k, a) in args.iter().enumerate() {
            path.push(k);
            match a {
                Arg::Expr(e) => collect(e, path, out),
                other => out.push(Position {
                    path: path.clone(),
                    kind: other.kind(),
                }),
            }
            path.pop();
        }
    }
}

fn get(expr: &Expr, path: &[usize]) -> Arg {
    match path.split_first() {
        None => Arg::Expr(expr.clone()),
        Some((k, rest)) => match expr {
            Expr::Call(_, args) => match &args[*k] {
                Arg::Expr(e) => get(e, rest),
                other => other.clone(),
            },
            _ => unreachable!("path leads through a leaf"),
        },
    }
}

fn replace(expr: &Expr, path: &[usize], new: Arg) -> Expr {
    match path.split_first() {
        None => match new {
            Arg::Expr(e) => e,
            _ => unreachable!("only series replace a series position"),
        },
        Some((k, rest)) => match expr {
            Expr::Call(op, args) => {
                let mut args = args.clone();
                args[*k] = match (&args[*k], rest.is_empty()) {
                    (Arg::Expr(e), false) => Arg::Expr(replace(e, rest, new)),
                    (_, true) => new,
                    _ => unreachable!("path leads through a parameter"),
                };
                Expr::Call(*op, args)
            }
            _ => unreachable!("path leads through a leaf"),
        },
    }
}

fn arg_nodes(a: &Arg) -> usize {
    a.as_expr().map_or(0, Expr::node_count)
}

fn arg_depth(a: &Arg) -> usize {
    a.as_expr().map_or(0, Expr::depth)
}

fn random_param<R: Rng + ?Sized>(kind: ParamKind, cfg: &MinerConfig, rng: &mut R) -> Arg {
    match kind {
        ParamKind::Window => Arg::Window(*cfg.windows.choose(rng).expect("windows checked")),
        ParamKind::Group => Arg::Group(cfg.group_fields.choose(rng).expect("groups checked").clone()),
        ParamKind::Fraction => Arg::Fraction(*cfg.fractions.choose(rng).expect("fractions checked")),
        ParamKind::Series => unreachable!("series are generated as subtrees"),
    }
}

fn terminal<R: Rng + ?Sized>(cfg: &MinerConfig, rng: &mut R) -> Expr {
    if !cfg.constants.is_empty() && rng.random::<f64>() < cfg.p_constant {
        Expr::Const(*cfg.constants.choose(rng).expect("nonempty"))
    } else {
        Expr::Field(cfg.fields.choose(rng).expect("fields checked").clone())
    }
}

/// Grow a tree of at most `max_depth` levels using at most `*budget` nodes,
/// where `level` is the 1-based depth of the root being grown.
fn grow<R: Rng + ?Sized>(
    cfg: &MinerConfig,
    ops: &[Op],
    level: usize,
    max_depth: usize,
    budget: &mut usize,
    rng: &mut R,
) -> Expr {
    let fits: Vec<Op> = ops
        .iter()
        .copied()
        .filter(|op| op.spec().series_arity() < *budget)
        .collect();
    let p_terminal = if level >= max_depth || fits.is_empty() {
        1.0
    } else {
        // grows from 0.1 at the root to 1 at the depth cap
        0.1 + 0.9 * (level - 1) as f64 / (max_depth - 1) as f64
    };
    if rng.random::<f64>() < p_terminal {
        *budget -= 1;
        return terminal(cfg, rng);
    }
    let op = *fits.choose(rng).expect("nonempty");
    *budget -= 1;
    let params = op.params();
    let series_total = op.spec().series_arity();
    let mut series_done = 0;
    let mut args = Vec::with_capacity(params.len());
    for kind in params {
        if *kind == ParamKind::Series {
            let reserve = series_total - series_done - 1;
            let mut sub = *budget - reserve;
            let before = sub;
            let child = grow(cfg, ops, level + 1, max_depth, &mut sub, rng);
            *budget -= before - sub;
            series_done += 1;
            args.push(Arg::Expr(child));
        } else {
            args.push(random_param(*kind, cfg, rng));
        }
    }
    Expr::Call(op, args)
}

/// Random valid tree within the configured depth and node caps.
pub fn random_expr<R: Rng + ?Sized>(cfg: &MinerConfig, rng: &mut R) -> Result<Expr> {
    cfg.validate()?;
    Ok(random_tree(cfg, &cfg.usable_operators(), cfg.max_depth, cfg.max_nodes, rng))
}

pub(crate) fn random_tree<R: Rng + ?Sized>(
    cfg: &MinerConfig,
    ops: &[Op],
    max_depth: usize,
    max_nodes: usize,
    rng: &mut R,
) -> Expr {
    let mut budget = max_nodes;
    grow(cfg, ops, 1, max_depth, &mut budget, rng)
}

/// Result of a variation operator; `applied` is false when the retry budget
/// ran out and the input was passed through.
#[derive(Debug, Clone, PartialEq)]
pub struct Varied<T> {
    pub value: T,
    pub applied: bool,
}

/// Replace one uniformly chosen position with a fresh subtree (or parameter)
/// of the same kind.
pub fn mutate<R: Rng + ?Sized>(expr: &Expr, cfg: &MinerConfig, rng: &mut R) -> Varied<Expr> {
    let ops = cfg.usable_operators();
    let total = expr.node_count();
    let pos = positions(expr);
    for _ in 0..cfg.retries.max(1) {
        let p = pos.choose(rng).expect("a tree has a root");
        let old = get(expr, &p.path);
        let new = if p.kind == ParamKind::Series {
            let depth_left = cfg.max_depth.saturating_sub(p.path_level());
            let nodes_left = cfg.max_nodes.saturating_sub(total - arg_nodes(&old));
            if depth_left == 0 || nodes_left == 0 {
                continue;
            }
            Arg::Expr(random_tree(cfg, &ops, depth_left, nodes_left, rng))
        } else {
            random_param(p.kind, cfg, rng)
        };
        let out = replace(expr, &p.path, new);
        if within_caps(&out, cfg.max_depth, cfg.max_nodes) {
            return Varied { value: out, applied: true };
        }
    }
    Varied {
        value: expr.clone(),
        applied: false,
    }
}

impl Position {
    /// Number of expression levels above this position.
    fn path_level(&self) -> usize {
        self.path.len()
    }
}

/// Swap a uniformly chosen position of `a` with a uniformly chosen
/// kind-compatible position of `b` whose swap keeps both children in caps.
pub fn crossover<R: Rng + ?Sized>(
    a: &Expr,
    b: &Expr,
    cfg: &MinerConfig,
    rng: &mut R,
) -> Varied<(Expr, Expr)> {
    let pa = positions(a);
    let pb = positions(b);
    let (na, nb) = (a.node_count(), b.node_count());
    for _ in 0..cfg.retries.max(1) {
        let x = pa.choose(rng).expect("a tree has a root");
        let sx = get(a, &x.path);
        let compatible: Vec<&Position> = pb
            .iter()
            .filter(|y| {
                if y.kind != x.kind {
                    return false;
                }
                if x.kind != ParamKind::Series {
                    return true;
                }
                let sy = get(b, &y.path);
                let (gx, gy) = (arg_nodes(&sx), arg_nodes(&sy));
                na - gx + gy <= cfg.max_nodes
                    && nb - gy + gx <= cfg.max_nodes
                    && x.path.len() + arg_depth(&sy) <= cfg.max_depth
                    && y.path.len() + arg_depth(&sx) <= cfg.max_depth
            })
            .collect();
        let Some(y) = compatible.choose(rng) else { continue };
        let sy = get(b, &y.path);
        let ca = replace(a, &x.path, sy);
        let cb = replace(b, &y.path, sx);
        return Varied {
            value: (ca, cb),
            applied: true,
        };
    }
    Varied {
        value: (a.clone(), b.clone()),
        applied: false,
    }
}

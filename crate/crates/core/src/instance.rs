//! Robust instances: a nominal problem plus `N` scenario cost vectors.
//!
//! Also hosts the uniform random (RU) baseline sampler and the HIRO-text
//! instance format.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Nominal problem and its sizing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    /// Choose exactly `p` of `n` items.
    Selection { n: usize, p: usize },
    /// Asymmetric TSP on `m` nodes; costs are the `m * m` arc matrix in
    /// row-major order with the diagonal pinned to zero.
    Tsp { m: usize },
}

impl ProblemKind {
    /// Length of a cost vector.
    pub fn n(&self) -> usize {
        match *self {
            ProblemKind::Selection { n, .. } => n,
            ProblemKind::Tsp { m } => m * m,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ProblemKind::Selection { .. } => "selection",
            ProblemKind::Tsp { .. } => "tsp",
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            ProblemKind::Selection { n, p } => {
                if n == 0 {
                    return Err(Error::Invariant("selection needs n >= 1".into()));
                }
                if p == 0 || p > n {
                    return Err(Error::Invariant(format!("selection needs 1 <= p <= n, got p={p}, n={n}")));
                }
            }
            ProblemKind::Tsp { m } => {
                if m < 3 {
                    return Err(Error::Invariant(format!("tsp needs m >= 3, got {m}")));
                }
            }
        }
        Ok(())
    }

    /// True for coefficients that are structurally zero (TSP self-loops).
    pub fn is_pinned_zero(&self, k: usize) -> bool {
        match *self {
            ProblemKind::Selection { .. } => false,
            ProblemKind::Tsp { m } => k / m == k % m,
        }
    }
}

const COST_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    kind: ProblemKind,
    max_cost: f64,
    costs: Vec<Vec<f64>>,
}

impl Instance {
    pub fn new(kind: ProblemKind, max_cost: f64, costs: Vec<Vec<f64>>) -> Result<Self> {
        kind.validate()?;
        if !(max_cost.is_finite() && max_cost >= 0.0) {
            return Err(Error::Invariant(format!("max cost must be finite and >= 0, got {max_cost}")));
        }
        if costs.is_empty() {
            return Err(Error::Invariant("at least one scenario is required".into()));
        }
        let n = kind.n();
        let slack = COST_TOL * max_cost.max(1.0);
        for (i, row) in costs.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Invariant(format!(
                    "scenario {} has {} coefficients, expected {n}",
                    i + 1,
                    row.len()
                )));
            }
            for (k, &c) in row.iter().enumerate() {
                if !c.is_finite() || c < -slack || c > max_cost + slack {
                    return Err(Error::Invariant(format!(
                        "cost {c} of scenario {}, coefficient {} outside [0, {max_cost}]",
                        i + 1,
                        k + 1
                    )));
                }
                if kind.is_pinned_zero(k) && c != 0.0 {
                    return Err(Error::Invariant(format!(
                        "tsp diagonal coefficient {} of scenario {} must be 0",
                        k + 1,
                        i + 1
                    )));
                }
            }
        }
        Ok(Self { kind, max_cost, costs })
    }

    /// Same problem, new cost matrix.
    pub fn with_costs(&self, costs: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(self.kind, self.max_cost, costs)
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.kind.n()
    }

    pub fn scenarios(&self) -> usize {
        self.costs.len()
    }

    pub fn max_cost(&self) -> f64 {
        self.max_cost
    }

    pub fn costs(&self) -> &[Vec<f64>] {
        &self.costs
    }

    pub fn into_costs(self) -> Vec<Vec<f64>> {
        self.costs
    }

    /// Average scenario.
    pub fn midpoint(&self) -> Vec<f64> {
        midpoint(&self.costs)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("HIRO 1\n");
        let _ = writeln!(out, "problem {}", self.kind.name());
        let _ = writeln!(out, "n {}", self.n());
        let _ = writeln!(out, "N {}", self.scenarios());
        let _ = writeln!(out, "C {}", format_number(self.max_cost));
        match self.kind {
            ProblemKind::Selection { p, .. } => {
                let _ = writeln!(out, "p {p}");
            }
            ProblemKind::Tsp { m } => {
                let _ = writeln!(out, "m {m}");
            }
        }
        out.push_str("costs\n");
        for row in &self.costs {
            let line: Vec<String> = row.iter().map(|&c| format_number(c)).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        Parser::new(text).parse()
    }
}

pub(crate) fn midpoint(costs: &[Vec<f64>]) -> Vec<f64> {
    let n = costs.first().map_or(0, Vec::len);
    let scale = 1.0 / costs.len() as f64;
    (0..n)
        .map(|k| costs.iter().map(|c| c[k]).sum::<f64>() * scale)
        .collect()
}

/// Up to 12 significant digits, shortest representation of the rounded value.
pub fn format_number(v: f64) -> String {
    let rounded: f64 = format!("{v:.11e}").parse().unwrap_or(v);
    if rounded == 0.0 {
        return "0".into();
    }
    format!("{rounded}")
}

struct Token<'a> {
    text: &'a str,
    line: usize,
    column: usize,
}

struct Parser<'a> {
    lines: Vec<(usize, Vec<Token<'a>>)>,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        let lines = text
            .lines()
            .enumerate()
            .filter_map(|(idx, raw)| {
                let content = raw.split('#').next().unwrap_or("");
                let mut tokens = Vec::new();
                let mut start = None;
                for (col, ch) in content.char_indices().chain(std::iter::once((content.len(), ' '))) {
                    match (ch.is_whitespace(), start) {
                        (false, None) => start = Some(col),
                        (true, Some(s)) => {
                            tokens.push(Token {
                                text: &content[s..col],
                                line: idx + 1,
                                column: s + 1,
                            });
                            start = None;
                        }
                        _ => {}
                    }
                }
                (!tokens.is_empty()).then_some((idx + 1, tokens))
            })
            .collect();
        Self { lines, pos: 0 }
    }

    fn err(line: usize, column: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            line,
            column,
            message: message.into(),
        }
    }

    fn eof_line(&self) -> usize {
        self.lines.last().map_or(1, |(l, _)| *l)
    }

    fn next_line(&mut self, what: &str) -> Result<&[Token<'a>]> {
        let eof = self.eof_line();
        let line = self
            .lines
            .get(self.pos)
            .ok_or_else(|| Self::err(eof, 1, format!("unexpected end of file, expected {what}")))?;
        self.pos += 1;
        Ok(&line.1)
    }

    fn parse_usize(tok: &Token<'_>) -> Result<usize> {
        tok.text
            .parse()
            .map_err(|_| Self::err(tok.line, tok.column, format!("expected a non-negative integer, found `{}`", tok.text)))
    }

    fn parse_f64(tok: &Token<'_>) -> Result<f64> {
        tok.text
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Self::err(tok.line, tok.column, format!("expected a number, found `{}`", tok.text)))
    }

    fn parse(mut self) -> Result<Instance> {
        let magic = self.next_line("`HIRO 1` header")?;
        if magic.len() != 2 || magic[0].text != "HIRO" {
            return Err(Self::err(magic[0].line, magic[0].column, "expected `HIRO 1` header"));
        }
        if magic[1].text != "1" {
            return Err(Self::err(magic[1].line, magic[1].column, format!("unsupported format version `{}`", magic[1].text)));
        }

        let mut problem: Option<&str> = None;
        let (mut n, mut scenarios, mut max_cost, mut p, mut m) = (None, None, None, None, None);
        let header_end;
        loop {
            let line = self.next_line("`costs`")?;
            let key = &line[0];
            if key.text == "costs" {
                if line.len() != 1 {
                    return Err(Self::err(line[1].line, line[1].column, "unexpected token after `costs`"));
                }
                header_end = (key.line, key.column);
                break;
            }
            if line.len() != 2 {
                let col = line.get(2).map_or(key.column, |t| t.column);
                return Err(Self::err(key.line, col, format!("expected `{} <value>`", key.text)));
            }
            let val = &line[1];
            match key.text {
                "problem" => match val.text {
                    "selection" | "tsp" => problem = Some(val.text),
                    other => return Err(Self::err(val.line, val.column, format!("unknown problem `{other}`"))),
                },
                "n" => n = Some(Self::parse_usize(val)?),
                "N" => scenarios = Some(Self::parse_usize(val)?),
                "C" => max_cost = Some(Self::parse_f64(val)?),
                "p" => p = Some(Self::parse_usize(val)?),
                "m" => m = Some(Self::parse_usize(val)?),
                other => return Err(Self::err(key.line, key.column, format!("unknown header key `{other}`"))),
            }
        }

        let (hl, hc) = header_end;
        let missing = |what: &str| Self::err(hl, hc, format!("header is missing `{what}`"));
        let n = n.ok_or_else(|| missing("n"))?;
        let scenarios = scenarios.ok_or_else(|| missing("N"))?;
        let max_cost = max_cost.ok_or_else(|| missing("C"))?;
        let kind = match problem.ok_or_else(|| missing("problem"))? {
            "selection" => ProblemKind::Selection {
                n,
                p: p.ok_or_else(|| missing("p"))?,
            },
            _ => {
                let m = m.ok_or_else(|| missing("m"))?;
                if m * m != n {
                    return Err(Self::err(hl, hc, format!("tsp header declares m={m} but n={n} (expected n = m*m)")));
                }
                ProblemKind::Tsp { m }
            }
        };
        if scenarios == 0 {
            return Err(Self::err(hl, hc, "N must be at least 1"));
        }

        let mut costs = Vec::with_capacity(scenarios);
        for i in 0..scenarios {
            let line = self.next_line(&format!("cost line {} of {scenarios}", i + 1))?;
            if line.len() != n {
                let tok = line.get(n).unwrap_or(&line[line.len() - 1]);
                return Err(Self::err(
                    tok.line,
                    tok.column,
                    format!("cost line has {} values, expected n = {n}", line.len()),
                ));
            }
            costs.push(line.iter().map(Self::parse_f64).collect::<Result<Vec<_>>>()?);
        }
        if let Some((_, rest)) = self.lines.get(self.pos) {
            return Err(Self::err(rest[0].line, rest[0].column, format!("unexpected data after {scenarios} cost lines")));
        }
        Instance::new(kind, max_cost, costs)
    }
}

/// Uniform random baseline: integer costs drawn i.i.d. from `{0, ..., floor(C)}`.
///
/// TSP diagonals are fixed to zero and consume no draws. With `symmetric`,
/// arc `(u, v)` and `(v, u)` share one draw (TSP only).
pub fn sample_ru(kind: ProblemKind, scenarios: usize, max_cost: f64, seed: u64, symmetric: bool) -> Result<Instance> {
    kind.validate()?;
    if scenarios == 0 {
        return Err(Error::Invariant("at least one scenario is required".into()));
    }
    if !(max_cost.is_finite() && max_cost >= 0.0) {
        return Err(Error::Invariant(format!("max cost must be finite and >= 0, got {max_cost}")));
    }
    let upper = max_cost.floor() as u64;
    let mut rng = Rng::new(seed);
    let n = kind.n();
    let mut costs = vec![vec![0.0; n]; scenarios];
    for row in costs.iter_mut() {
        match kind {
            ProblemKind::Selection { .. } => {
                for c in row.iter_mut() {
                    *c = rng.uniform_inclusive(upper) as f64;
                }
            }
            ProblemKind::Tsp { m } => {
                for u in 0..m {
                    for v in 0..m {
                        if u == v || (symmetric && v < u) {
                            continue;
                        }
                        let draw = rng.uniform_inclusive(upper) as f64;
                        row[u * m + v] = draw;
                        if symmetric {
                            row[v * m + u] = draw;
                        }
                    }
                }
            }
        }
    }
    Instance::new(kind, max_cost, costs)
}

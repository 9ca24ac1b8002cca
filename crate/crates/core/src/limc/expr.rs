use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Var(String),
    Not(Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Xor(Box<Expr>, Box<Expr>),
}

pub fn var(name: &str) -> Expr {
    Expr::Var(name.to_string())
}

#[allow(clippy::should_implement_trait)]
impl Expr {
    pub fn not(e: Expr) -> Expr {
        Expr::Not(Box::new(e))
    }

    pub fn or(a: Expr, b: Expr) -> Expr {
        Expr::Or(Box::new(a), Box::new(b))
    }

    pub fn and(a: Expr, b: Expr) -> Expr {
        Expr::And(Box::new(a), Box::new(b))
    }

    pub fn xor(a: Expr, b: Expr) -> Expr {
        Expr::Xor(Box::new(a), Box::new(b))
    }

    /// Sorted, de-duplicated variable names.
    pub fn variables(&self) -> Vec<String> {
        fn walk(e: &Expr, out: &mut BTreeSet<String>) {
            match e {
                Expr::Var(n) => {
                    out.insert(n.clone());
                }
                Expr::Not(a) => walk(a, out),
                Expr::Or(a, b) | Expr::And(a, b) | Expr::Xor(a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
            }
        }
        let mut set = BTreeSet::new();
        walk(self, &mut set);
        set.into_iter().collect()
    }

    pub fn depth(&self) -> usize {
        match self {
            Expr::Var(_) => 0,
            Expr::Not(a) => 1 + a.depth(),
            Expr::Or(a, b) | Expr::And(a, b) | Expr::Xor(a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    pub fn size(&self) -> usize {
        match self {
            Expr::Var(_) => 1,
            Expr::Not(a) => 1 + a.size(),
            Expr::Or(a, b) | Expr::And(a, b) | Expr::Xor(a, b) => 1 + a.size() + b.size(),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Or(..) => 1,
            Expr::Xor(..) => 2,
            Expr::And(..) => 3,
            Expr::Not(_) => 4,
            Expr::Var(_) => 5,
        }
    }
}

impl fmt::Display for Expr {
    /// Minimal parentheses; binary operators are left-associative, so a right
    /// operand of equal precedence is parenthesized.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let operand = |f: &mut fmt::Formatter<'_>, e: &Expr, min: u8| {
            if e.precedence() < min {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        };
        match self {
            Expr::Var(n) => f.write_str(n),
            Expr::Not(a) => {
                f.write_str("!")?;
                operand(f, a, 4)
            }
            Expr::Or(a, b) | Expr::And(a, b) | Expr::Xor(a, b) => {
                let p = self.precedence();
                let sym = match self {
                    Expr::Or(..) => " | ",
                    Expr::Xor(..) => " ^ ",
                    _ => " & ",
                };
                operand(f, a, p)?;
                f.write_str(sym)?;
                operand(f, b, p + 1)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at byte {offset}: expected {}", expected.join(" or "))]
pub struct ParseError {
    pub offset: usize,
    pub expected: Vec<&'static str>,
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn error(&mut self, expected: &[&'static str]) -> ParseError {
        self.skip_ws();
        ParseError {
            offset: self.pos,
            expected: expected.to_vec(),
        }
    }

    fn binary(
        &mut self,
        op: u8,
        build: fn(Expr, Expr) -> Expr,
        next: fn(&mut Self) -> Result<Expr, ParseError>,
    ) -> Result<Expr, ParseError> {
        let mut lhs = next(self)?;
        while self.eat(op) {
            lhs = build(lhs, next(self)?);
        }
        Ok(lhs)
    }

    fn or(&mut self) -> Result<Expr, ParseError> {
        self.binary(b'|', Expr::or, Self::xor)
    }

    fn xor(&mut self) -> Result<Expr, ParseError> {
        self.binary(b'^', Expr::xor, Self::and)
    }

    fn and(&mut self) -> Result<Expr, ParseError> {
        self.binary(b'&', Expr::and, Self::factor)
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        const FACTOR: &[&str] = &["identifier", "'!'", "'~'", "'('"];
        match self.peek() {
            Some(b'!' | b'~') => {
                self.pos += 1;
                Ok(Expr::not(self.factor()?))
            }
            Some(b'(') => {
                self.pos += 1;
                let e = self.or()?;
                if !self.eat(b')') {
                    return Err(self.error(&["')'", "'|'", "'^'", "'&'"]));
                }
                Ok(e)
            }
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let start = self.pos;
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
                Ok(Expr::Var(name.to_string()))
            }
            _ => Err(self.error(FACTOR)),
        }
    }
}

/// Operators, loosest first: `|`, `^`, `&`, then prefix `!`/`~`.
pub fn parse_expr(text: &str) -> Result<Expr, ParseError> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
    };
    let e = p.or()?;
    if p.peek().is_some() {
        return Err(p.error(&["'|'", "'^'", "'&'", "end of input"]));
    }
    Ok(e)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("variable `{0}` is unbound")]
pub struct UnboundVariable(pub String);

pub fn evaluate_expr(e: &Expr, assignment: &BTreeMap<String, bool>) -> Result<bool, UnboundVariable> {
    Ok(match e {
        Expr::Var(n) => *assignment.get(n).ok_or_else(|| UnboundVariable(n.clone()))?,
        Expr::Not(a) => !evaluate_expr(a, assignment)?,
        Expr::Or(a, b) => evaluate_expr(a, assignment)? | evaluate_expr(b, assignment)?,
        Expr::And(a, b) => evaluate_expr(a, assignment)? & evaluate_expr(b, assignment)?,
        Expr::Xor(a, b) => evaluate_expr(a, assignment)? ^ evaluate_expr(b, assignment)?,
    })
}

fn negate(e: Expr) -> Expr {
    match e {
        Expr::Not(inner) => *inner,
        e => Expr::not(e),
    }
}

/// Rewrites into `Var`/`Not`/`Or` only, cancelling double negations.
pub fn lower_to_or_not(e: &Expr) -> Expr {
    match e {
        Expr::Var(_) => e.clone(),
        Expr::Not(a) => negate(lower_to_or_not(a)),
        Expr::Or(a, b) => Expr::or(lower_to_or_not(a), lower_to_or_not(b)),
        Expr::And(a, b) => negate(Expr::or(negate(lower_to_or_not(a)), negate(lower_to_or_not(b)))),
        Expr::Xor(a, b) => lower_to_or_not(&Expr::and(
            Expr::or((**a).clone(), (**b).clone()),
            Expr::not(Expr::and((**a).clone(), (**b).clone())),
        )),
    }
}

pub fn is_or_not(e: &Expr) -> bool {
    match e {
        Expr::Var(_) => true,
        Expr::Not(a) => !matches!(**a, Expr::Not(_)) && is_or_not(a),
        Expr::Or(a, b) => is_or_not(a) && is_or_not(b),
        _ => false,
    }
}

/// Every assignment of `vars`, in binary counting order with the first
/// variable as the most significant bit.
pub fn assignments(vars: &[String]) -> Vec<BTreeMap<String, bool>> {
    (0..1usize << vars.len())
        .map(|k| {
            vars.iter()
                .enumerate()
                .map(|(i, v)| (v.clone(), (k >> (vars.len() - 1 - i)) & 1 == 1))
                .collect()
        })
        .collect()
}

/// Random expression over `vars` with depth at most `max_depth`. Leaves get
/// likelier with depth, so sizes stay moderate.
pub fn random_expr<R: Rng + ?Sized>(rng: &mut R, vars: &[&str], max_depth: usize) -> Expr {
    fn go<R: Rng + ?Sized>(rng: &mut R, vars: &[&str], depth: usize, max_depth: usize) -> Expr {
        let leaf_p = if depth == 0 {
            0.0
        } else {
            depth as f64 / max_depth as f64
        };
        if depth >= max_depth || rng.random_bool(leaf_p.min(1.0)) {
            return var(vars[rng.random_range(0..vars.len())]);
        }
        let sub = |rng: &mut R| go(rng, vars, depth + 1, max_depth);
        match rng.random_range(0..10) {
            0..=2 => Expr::not(sub(rng)),
            3..=5 => Expr::or(sub(rng), sub(rng)),
            6..=8 => Expr::and(sub(rng), sub(rng)),
            _ => Expr::xor(sub(rng), sub(rng)),
        }
    }
    go(rng, vars, 0, max_depth)
}

/// Every expression with at most `max_ops` operators over at most `vars.len()`
/// distinct variables, up to renaming: leaves are named in order of first
/// appearance, so `b | a` is not produced separately from `a | b`.
pub fn enumerate_exprs(max_ops: usize, vars: &[&str]) -> Vec<Expr> {
    fn shapes(n: usize) -> Vec<Expr> {
        if n == 0 {
            return vec![var("_")];
        }
        let mut out: Vec<Expr> = shapes(n - 1).into_iter().map(Expr::not).collect();
        for i in 0..n {
            for l in shapes(i) {
                for r in shapes(n - 1 - i) {
                    out.push(Expr::or(l.clone(), r.clone()));
                    out.push(Expr::and(l.clone(), r.clone()));
                    out.push(Expr::xor(l.clone(), r.clone()));
                }
            }
        }
        out
    }
    fn fill(e: &Expr, names: &mut std::slice::Iter<'_, &str>) -> Expr {
        match e {
            Expr::Var(_) => var(names.next().expect("one name per leaf")),
            Expr::Not(a) => Expr::not(fill(a, names)),
            Expr::Or(a, b) => Expr::or(fill(a, names), fill(b, names)),
            Expr::And(a, b) => Expr::and(fill(a, names), fill(b, names)),
            Expr::Xor(a, b) => Expr::xor(fill(a, names), fill(b, names)),
        }
    }
    fn namings<'a>(leaves: usize, vars: &[&'a str]) -> Vec<Vec<&'a str>> {
        let mut out = vec![(Vec::new(), 0usize)];
        for _ in 0..leaves {
            out = out
                .into_iter()
                .flat_map(|(prefix, used)| {
                    (0..(used + 1).min(vars.len())).map(move |j| {
                        let mut p = prefix.clone();
                        p.push(j);
                        (p, used.max(j + 1))
                    })
                })
                .collect();
        }
        out.into_iter()
            .map(|(p, _)| p.into_iter().map(|j| vars[j]).collect())
            .collect()
    }
    let mut out = Vec::new();
    for n in 0..=max_ops {
        for shape in shapes(n) {
            let leaves = shape.size() - n;
            for names in namings(leaves, vars) {
                out.push(fill(&shape, &mut names.iter()));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn a() -> Expr {
        var("a")
    }
    fn b() -> Expr {
        var("b")
    }

    #[test]
    fn precedence() {
        assert_eq!(parse_expr("a | b").unwrap(), Expr::or(a(), b()));
        assert_eq!(parse_expr("!a & b").unwrap(), Expr::and(Expr::not(a()), b()));
        assert_eq!(
            parse_expr("a | b & c").unwrap(),
            Expr::or(a(), Expr::and(b(), var("c")))
        );
        assert_eq!(
            parse_expr("a ^ b & c | d").unwrap(),
            Expr::or(Expr::xor(a(), Expr::and(b(), var("c"))), var("d"))
        );
        assert_eq!(parse_expr("a|b|c").unwrap(), Expr::or(Expr::or(a(), b()), var("c")));
        assert_eq!(
            parse_expr(" ~ ( a_1|B ) ").unwrap(),
            Expr::not(Expr::or(var("a_1"), var("B")))
        );
        assert_eq!(parse_expr("!!a").unwrap(), Expr::not(Expr::not(a())));
    }

    #[test]
    fn syntax_errors() {
        let e = parse_expr("a|").unwrap_err();
        assert_eq!(e.offset, 2);
        assert!(e.expected.contains(&"identifier"));
        let e = parse_expr("(a").unwrap_err();
        assert_eq!(e.offset, 2);
        assert!(e.expected.contains(&"')'"));
        let e = parse_expr("a b").unwrap_err();
        assert_eq!(e.offset, 2);
        assert!(e.expected.contains(&"end of input"));
        assert_eq!(parse_expr("").unwrap_err().offset, 0);
        assert_eq!(parse_expr("1a").unwrap_err().offset, 0);
        assert!(parse_expr("a | b").is_ok());
    }

    #[test]
    fn printer() {
        for (src, want) in [
            ("a|b&c", "a | b & c"),
            ("(a|b)&c", "(a | b) & c"),
            ("a|(b|c)", "a | (b | c)"),
            ("!(a^b)", "!(a ^ b)"),
            ("!!a", "!!a"),
        ] {
            assert_eq!(parse_expr(src).unwrap().to_string(), want);
        }
    }

    #[test]
    fn evaluation() {
        let env = |x: bool, y: bool| BTreeMap::from([("a".to_string(), x), ("b".to_string(), y)]);
        assert!(evaluate_expr(&Expr::or(a(), b()), &env(true, false)).unwrap());
        assert!(!evaluate_expr(&Expr::not(a()), &env(true, false)).unwrap());
        assert!(!evaluate_expr(&Expr::xor(a(), b()), &env(true, true)).unwrap());
        assert_eq!(
            evaluate_expr(&var("z"), &env(true, true)),
            Err(UnboundVariable("z".into()))
        );
    }

    #[test]
    fn enumeration_counts() {
        let vars = ["a", "b", "c", "d"];
        assert_eq!(enumerate_exprs(0, &vars).len(), 1);
        assert_eq!(enumerate_exprs(1, &vars).len(), 8);
        assert_eq!(enumerate_exprs(2, &vars).len(), 117);
        let all = enumerate_exprs(2, &vars);
        let unique: BTreeSet<String> = all.iter().map(|e| e.to_string()).collect();
        assert_eq!(unique.len(), all.len());
        assert!(all.contains(&Expr::or(a(), b())));
        assert!(!all.contains(&Expr::or(b(), a())));
    }

    #[test]
    fn lowering_shapes() {
        assert_eq!(
            lower_to_or_not(&Expr::and(a(), b())),
            Expr::not(Expr::or(Expr::not(a()), Expr::not(b())))
        );
        assert_eq!(lower_to_or_not(&Expr::not(Expr::not(a()))), a());
        let x = lower_to_or_not(&Expr::xor(a(), b()));
        assert!(is_or_not(&x));
        let vars = vec!["a".to_string(), "b".to_string()];
        let got: Vec<bool> = assignments(&vars)
            .iter()
            .map(|m| evaluate_expr(&x, m).unwrap())
            .collect();
        assert_eq!(got, [false, true, true, false]);
    }

    pub(crate) fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop::sample::select(vec!["a", "b", "c", "d"]).prop_map(var);
        leaf.prop_recursive(6, 48, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(Expr::not),
                (inner.clone(), inner.clone()).prop_map(|(x, y)| Expr::or(x, y)),
                (inner.clone(), inner.clone()).prop_map(|(x, y)| Expr::and(x, y)),
                (inner.clone(), inner).prop_map(|(x, y)| Expr::xor(x, y)),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(e in arb_expr()) {
            prop_assert_eq!(parse_expr(&e.to_string()).unwrap(), e);
        }

        #[test]
        fn lowering_is_sound(e in arb_expr()) {
            let l = lower_to_or_not(&e);
            prop_assert!(is_or_not(&l));
            let vars = e.variables();
            for m in assignments(&vars) {
                prop_assert_eq!(evaluate_expr(&l, &m).unwrap(), evaluate_expr(&e, &m).unwrap());
            }
        }
    }
}

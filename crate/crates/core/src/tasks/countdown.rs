//! Countdown arithmetic: combine every given number exactly once with `+ - * /` and
//! parentheses to hit the target. Evaluation is exact over rationals.

use num_rational::Ratio;
use num_traits::{CheckedAdd, CheckedDiv, CheckedMul, CheckedSub, Zero};
use rand::seq::SliceRandom;
use rand::Rng;

type Q = Ratio<i128>;

/// Parsed expression: literals in source order and the value, if it evaluates.
#[derive(Debug, Clone, PartialEq)]
pub struct Parsed {
    pub numbers: Vec<u64>,
    /// `None` on division by zero or overflow.
    pub value: Option<Q>,
}

struct Parser<'a> {
    s: &'a [u8],
    i: usize,
    numbers: Vec<u64>,
}

impl Parser<'_> {
    fn peek(&self) -> Option<u8> {
        self.s.get(self.i).copied()
    }

    // value is Ok(None) when evaluation failed but syntax is fine
    fn expr(&mut self) -> Result<Option<Q>, ()> {
        let mut acc = self.term()?;
        while let Some(op @ (b'+' | b'-')) = self.peek() {
            self.i += 1;
            let rhs = self.term()?;
            acc = match (acc, rhs) {
                (Some(a), Some(b)) => if op == b'+' { a.checked_add(&b) } else { a.checked_sub(&b) },
                _ => None,
            };
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<Option<Q>, ()> {
        let mut acc = self.factor()?;
        while let Some(op @ (b'*' | b'/')) = self.peek() {
            self.i += 1;
            let rhs = self.factor()?;
            acc = match (acc, rhs) {
                (Some(a), Some(b)) if op == b'*' => a.checked_mul(&b),
                (Some(a), Some(b)) if !b.is_zero() => a.checked_div(&b),
                _ => None,
            };
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<Option<Q>, ()> {
        match self.peek() {
            Some(b'(') => {
                self.i += 1;
                let v = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(());
                }
                self.i += 1;
                Ok(v)
            }
            Some(c) if c.is_ascii_digit() => {
                let start = self.i;
                while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                    self.i += 1;
                }
                let text = std::str::from_utf8(&self.s[start..self.i]).expect("ascii digits");
                match text.parse::<u64>() {
                    Ok(n) => {
                        self.numbers.push(n);
                        Ok(Some(Q::from_integer(n as i128)))
                    }
                    Err(_) => {
                        self.numbers.push(u64::MAX);
                        Ok(None)
                    }
                }
            }
            _ => Err(()),
        }
    }
}

/// Parses an arithmetic expression; `None` if it is not well formed.
pub fn parse(text: &str) -> Option<Parsed> {
    let mut p = Parser { s: text.as_bytes(), i: 0, numbers: Vec::new() };
    let value = p.expr().ok()?;
    if p.i != p.s.len() {
        return None;
    }
    Some(Parsed { numbers: p.numbers, value })
}

/// Whether `text` uses exactly the multiset `numbers` and evaluates to `target`.
pub fn solves(text: &str, numbers: &[u64], target: u64) -> bool {
    let Some(parsed) = parse(text) else { return false };
    let mut used = parsed.numbers.clone();
    let mut given = numbers.to_vec();
    used.sort_unstable();
    given.sort_unstable();
    used == given && parsed.value == Some(Q::from_integer(target as i128))
}

/// Random numbers in `1..=max_operand`, a random expression combining all of them, and its
/// value, retried until the value is an integer in `0..=max_target` and the expression fits
/// in `max_len` characters.
pub fn generate<R: Rng + ?Sized>(
    rng: &mut R,
    operands: usize,
    max_operand: u64,
    max_target: u64,
    max_len: usize,
) -> (Vec<u64>, u64, String) {
    loop {
        let numbers: Vec<u64> = (0..operands).map(|_| rng.gen_range(1..=max_operand)).collect();
        let mut order = numbers.clone();
        order.shuffle(rng);
        let mut parts: Vec<String> = order.iter().map(|n| n.to_string()).collect();
        // merge random adjacent pairs until one expression remains
        while parts.len() > 1 {
            let i = rng.gen_range(0..parts.len() - 1);
            let op = *b"+-*/".choose(rng).unwrap() as char;
            let wrap = |s: &str| if s.len() > 1 { format!("({s})") } else { s.to_string() };
            let merged = format!("{}{}{}", wrap(&parts[i]), op, wrap(&parts[i + 1]));
            parts.splice(i..i + 2, [merged]);
        }
        let expr = parts.swap_remove(0);
        if expr.len() > max_len {
            continue;
        }
        let Some(Parsed { value: Some(v), .. }) = parse(&expr) else { continue };
        if !v.is_integer() || *v.numer() < 0 || *v.numer() as u64 > max_target {
            continue;
        }
        let target = *v.numer() as u64;
        debug_assert!(solves(&expr, &numbers, target));
        return (numbers, target, expr);
    }
}

//! Trigonometric polynomials on the torus with analytic derivatives.
//!
//! Text form: a sum of terms, each a product of a numeric coefficient and
//! factors `sin(k*qA)` / `cos(k*qA)` (axes are 1-based, `k` a non-negative
//! integer that may be omitted), e.g. `0.05*sin(q1)*sin(q2) - 0.1*cos(2*q1) + 1`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::PeriodicGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Wave {
    Sin,
    Cos,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Factor {
    pub wave: Wave,
    /// 0-based axis.
    pub axis: usize,
    pub k: u32,
}

impl Factor {
    /// Value and first two derivatives along its own axis.
    fn eval(&self, q: &[f64; 3]) -> (f64, f64, f64) {
        let k = self.k as f64;
        let (s, c) = (k * q[self.axis]).sin_cos();
        match self.wave {
            Wave::Sin => (s, k * c, -k * k * s),
            Wave::Cos => (c, -k * s, -k * k * c),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub coeff: f64,
    pub factors: Vec<Factor>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrigPoly {
    pub terms: Vec<Term>,
}

/// Value, gradient and Hessian of a function at a point (first `n` slots used).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Jet2 {
    pub value: f64,
    pub grad: [f64; 3],
    pub hess: [[f64; 3]; 3],
}

impl TrigPoly {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self {
            terms: vec![Term {
                coeff: c,
                factors: vec![],
            }],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.coeff == 0.0)
    }

    /// Largest axis index referenced (0-based), if any.
    pub fn max_axis(&self) -> Option<usize> {
        self.terms
            .iter()
            .flat_map(|t| t.factors.iter().map(|f| f.axis))
            .max()
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .map(|t| Term {
                    coeff: a * t.coeff,
                    factors: t.factors.clone(),
                })
                .collect(),
        }
    }

    pub fn eval(&self, q: &[f64; 3]) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coeff * t.factors.iter().map(|f| f.eval(q).0).product::<f64>())
            .sum()
    }

    /// Value, gradient and Hessian by the product rule over factors.
    pub fn jet(&self, q: &[f64; 3]) -> Jet2 {
        let mut out = Jet2::default();
        for term in &self.terms {
            let ev: Vec<(f64, f64, f64)> = term.factors.iter().map(|f| f.eval(q)).collect();
            let m = ev.len();
            let prod_except = |skip: &[usize]| -> f64 {
                (0..m)
                    .filter(|i| !skip.contains(i))
                    .map(|i| ev[i].0)
                    .product::<f64>()
            };
            out.value += term.coeff * prod_except(&[]);
            for a in 0..m {
                let ax = term.factors[a].axis;
                out.grad[ax] += term.coeff * ev[a].1 * prod_except(&[a]);
                out.hess[ax][ax] += term.coeff * ev[a].2 * prod_except(&[a]);
                for b in 0..m {
                    if b == a {
                        continue;
                    }
                    let bx = term.factors[b].axis;
                    out.hess[ax][bx] += term.coeff * ev[a].1 * ev[b].1 * prod_except(&[a, b]);
                }
            }
        }
        out
    }

    pub fn sample(&self, grid: PeriodicGrid) -> ScalarField {
        ScalarField::from_fn(grid, |q| self.eval(&q))
    }

    /// Band-limited random polynomial in `dim` variables: every product of
    /// `sin`/`cos` modes with wavenumbers `0..=kmax` per axis (excluding the
    /// constant mode) gets a coefficient uniform in `[-amp, amp]`.
    pub fn random_band_limited<R: Rng>(rng: &mut R, dim: usize, kmax: u32, amp: f64) -> Self {
        let mut terms = Vec::new();
        let mut ks = vec![0u32; dim];
        loop {
            if ks.iter().any(|&k| k > 0) {
                for mask in 0..(1u32 << dim) {
                    // sin of a zero wavenumber vanishes identically
                    if (0..dim).any(|a| ks[a] == 0 && mask & (1 << a) != 0) {
                        continue;
                    }
                    let factors = (0..dim)
                        .filter(|&a| ks[a] > 0)
                        .map(|a| Factor {
                            wave: if mask & (1 << a) != 0 { Wave::Sin } else { Wave::Cos },
                            axis: a,
                            k: ks[a],
                        })
                        .collect();
                    terms.push(Term {
                        coeff: rng.gen_range(-amp..=amp),
                        factors,
                    });
                }
            }
            let mut a = 0;
            loop {
                if a == dim {
                    return Self { terms };
                }
                ks[a] += 1;
                if ks[a] <= kmax {
                    break;
                }
                ks[a] = 0;
                a += 1;
            }
        }
    }
}

impl fmt::Display for TrigPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, t) in self.terms.iter().enumerate() {
            let c = if i > 0 && t.coeff.is_sign_negative() {
                write!(f, " - ")?;
                -t.coeff
            } else {
                if i > 0 {
                    write!(f, " + ")?;
                }
                t.coeff
            };
            write!(f, "{c:?}")?;
            for fac in &t.factors {
                let w = match fac.wave {
                    Wave::Sin => "sin",
                    Wave::Cos => "cos",
                };
                if fac.k == 1 {
                    write!(f, "*{w}(q{})", fac.axis + 1)?;
                } else {
                    write!(f, "*{w}({}*q{})", fac.k, fac.axis + 1)?;
                }
            }
        }
        Ok(())
    }
}

struct Parser<'a> {
    src: &'a str,
    chars: Vec<char>,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err(&self, reason: impl Into<String>) -> Error {
        Error::TrigParse {
            input: self.src.to_string(),
            reason: format!("{} (at offset {})", reason.into(), self.pos),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).copied()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.err(format!("expected '{c}'")))
        }
    }

    fn number(&mut self) -> Result<f64> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.chars.len() {
            let c = self.chars[self.pos];
            let exp_sign = (c == '-' || c == '+')
                && self.pos > start
                && matches!(self.chars[self.pos - 1], 'e' | 'E');
            if c.is_ascii_digit() || c == '.' || c == 'e' || c == 'E' || exp_sign {
                self.pos += 1;
            } else {
                break;
            }
        }
        let s: String = self.chars[start..self.pos].iter().collect();
        s.parse::<f64>().map_err(|_| self.err(format!("bad number {s:?}")))
    }

    fn ident(&mut self) -> String {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.chars.len() && self.chars[self.pos].is_ascii_alphabetic() {
            self.pos += 1;
        }
        self.chars[start..self.pos].iter().collect()
    }

    fn axis(&mut self) -> Result<usize> {
        if self.ident() != "q" {
            return Err(self.err("expected coordinate qN"));
        }
        let a = self.number()?;
        if a.fract() != 0.0 || !(1.0..=3.0).contains(&a) {
            return Err(self.err(format!("coordinate index {a} not in 1..=3")));
        }
        Ok(a as usize - 1)
    }

    fn factor(&mut self, coeff: &mut f64, factors: &mut Vec<Factor>) -> Result<()> {
        match self.peek() {
            Some(c) if c.is_ascii_digit() || c == '.' => {
                *coeff *= self.number()?;
                Ok(())
            }
            Some(c) if c.is_ascii_alphabetic() => {
                let name = self.ident();
                let wave = match name.as_str() {
                    "sin" => Wave::Sin,
                    "cos" => Wave::Cos,
                    _ => return Err(self.err(format!("unknown function {name:?}"))),
                };
                self.expect('(')?;
                let k = match self.peek() {
                    Some(c) if c.is_ascii_digit() => {
                        let k = self.number()?;
                        if k.fract() != 0.0 || k < 0.0 {
                            return Err(self.err("wavenumber must be a non-negative integer"));
                        }
                        self.eat('*');
                        k as u32
                    }
                    _ => 1,
                };
                let axis = self.axis()?;
                self.expect(')')?;
                factors.push(Factor { wave, axis, k });
                Ok(())
            }
            _ => Err(self.err("expected number, sin or cos")),
        }
    }

    fn poly(&mut self) -> Result<TrigPoly> {
        let mut terms = Vec::new();
        let mut sign = if self.eat('-') {
            -1.0
        } else {
            self.eat('+');
            1.0
        };
        loop {
            let mut coeff = sign;
            let mut factors = Vec::new();
            self.factor(&mut coeff, &mut factors)?;
            while self.eat('*') {
                self.factor(&mut coeff, &mut factors)?;
            }
            terms.push(Term { coeff, factors });
            if self.eat('+') {
                sign = 1.0;
            } else if self.eat('-') {
                sign = -1.0;
            } else {
                break;
            }
        }
        if self.peek().is_some() {
            return Err(self.err("trailing input"));
        }
        Ok(TrigPoly { terms })
    }
}

impl FromStr for TrigPoly {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut p = Parser {
            src: s,
            chars: s.chars().collect(),
            pos: 0,
        };
        if p.peek().is_none() {
            return Err(p.err("empty expression"));
        }
        p.poly()
    }
}

impl Serialize for TrigPoly {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for TrigPoly {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Text(String),
            Number(f64),
        }
        match Repr::deserialize(d)? {
            Repr::Text(s) => s.parse().map_err(serde::de::Error::custom),
            Repr::Number(c) => Ok(TrigPoly::constant(c)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn parses_and_evaluates() {
        let p: TrigPoly = "0.05*sin(q1)*sin(q2) - 0.1*cos(2*q1) + 1".parse().unwrap();
        let q = [0.3, 1.1, 0.0];
        let exact = 0.05 * 0.3f64.sin() * 1.1f64.sin() - 0.1 * 0.6f64.cos() + 1.0;
        assert!((p.eval(&q) - exact).abs() < 1e-15);
        let round: TrigPoly = p.to_string().parse().unwrap();
        assert_eq!(round, p);
    }

    #[test]
    fn rejects_garbage() {
        for bad in ["", "sin(x1)", "0.1*tan(q1)", "sin(q4)", "1 +", "cos(1.5*q1)"] {
            assert!(bad.parse::<TrigPoly>().is_err(), "{bad}");
        }
    }

    #[test]
    fn jet_matches_finite_differences() {
        let p: TrigPoly = "0.3*sin(q1)*cos(2*q2) + 0.2*cos(q1)*sin(q1) - 0.1*sin(3*q3)".parse().unwrap();
        let q = [0.4, -0.7, 1.3];
        let j = p.jet(&q);
        let eps = 1e-4;
        for a in 0..3 {
            let mut qp = q;
            let mut qm = q;
            qp[a] += eps;
            qm[a] -= eps;
            let d = (p.eval(&qp) - p.eval(&qm)) / (2.0 * eps);
            assert!((d - j.grad[a]).abs() < 1e-8);
            for b in 0..3 {
                let d2 = (p.jet(&qp).grad[b] - p.jet(&qm).grad[b]) / (2.0 * eps);
                assert!((d2 - j.hess[a][b]).abs() < 1e-7, "{a}{b}");
            }
        }
    }

    #[test]
    fn random_polynomials_are_seeded_and_mean_free() {
        let mut r1 = ChaCha8Rng::seed_from_u64(7);
        let mut r2 = ChaCha8Rng::seed_from_u64(7);
        let a = TrigPoly::random_band_limited(&mut r1, 2, 2, 0.1);
        let b = TrigPoly::random_band_limited(&mut r2, 2, 2, 0.1);
        assert_eq!(a, b);
        // (kmax+1)^2 - 1 = 8 mode pairs; 2 axis-aligned pairs per axis have 2 waves, 4 mixed have 4
        assert_eq!(a.terms.len(), 2 * 2 + 2 * 2 + 4 * 4);
        assert!(a.terms.iter().all(|t| !t.factors.is_empty()));
    }
}

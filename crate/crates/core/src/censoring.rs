//! Type-I progressively hybrid censoring: schemes, generated samples and
//! the CSV interchange format.
//!
//! A scheme places `n` units on test and withdraws `R_i` survivors at the
//! i-th failure. The experiment stops at `min(X_(m), T)`. When the m-th
//! failure comes first the sample is *Case I*; otherwise the test is cut at
//! `T` with `J < m` failures and every remaining unit is withdrawn there
//! (*Case II*, `R_T` of them).

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::{Rng, RngExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::weibull::{quantile, WeibullParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensoringScheme {
    n: usize,
    m: usize,
    removals: Vec<usize>,
    t_max: f64,
}

impl CensoringScheme {
    pub fn new(n: usize, m: usize, removals: Vec<usize>, t_max: f64) -> Result<Self> {
        if m == 0 || m > n {
            return Err(Error::InvalidParameter(format!("need 1 <= m <= n, got n={n}, m={m}")));
        }
        if removals.len() != m {
            return Err(Error::SchemeBalance(format!(
                "removal vector has {} entries but m = {m}",
                removals.len()
            )));
        }
        let total: usize = removals.iter().sum();
        if total + m != n {
            return Err(Error::SchemeBalance(format!(
                "sum of removals ({total}) + m ({m}) != n ({n})"
            )));
        }
        if t_max.is_nan() || t_max <= 0.0 {
            return Err(Error::InvalidParameter(format!("truncation time must be positive, got {t_max}")));
        }
        Ok(Self { n, m, removals, t_max })
    }

    /// Builds a scheme from run-length shorthand such as `(0^{m-1},n-m)`.
    pub fn from_shorthand(spec: &str, n: usize, m: usize, t_max: f64) -> Result<Self> {
        let removals = scheme_from_shorthand(spec, n, m)?;
        Self::new(n, m, removals, t_max)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn removals(&self) -> &[usize] {
        &self.removals
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Case {
    /// The m-th failure occurred before `T`.
    #[serde(rename = "I")]
    CaseI,
    /// The test was stopped at `T`.
    #[serde(rename = "II")]
    CaseII,
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Case::CaseI => "I",
            Case::CaseII => "II",
        })
    }
}

impl FromStr for Case {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "I" | "1" => Ok(Case::CaseI),
            "II" | "2" => Ok(Case::CaseII),
            other => Err(Error::Parse(format!("unknown case '{other}'"))),
        }
    }
}

/// An observed progressively hybrid censored sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhcsSample {
    n: usize,
    m: usize,
    t_max: f64,
    failures: Vec<f64>,
    applied_removals: Vec<usize>,
    case: Case,
    r_t: usize,
}

impl PhcsSample {
    /// Validates the Case I / Case II bookkeeping.
    pub fn new(
        n: usize,
        m: usize,
        t_max: f64,
        failures: Vec<f64>,
        applied_removals: Vec<usize>,
        case: Case,
        r_t: usize,
    ) -> Result<Self> {
        let r = failures.len();
        if applied_removals.len() != r {
            return Err(Error::InvalidParameter(format!(
                "{} removal entries for {r} failures",
                applied_removals.len()
            )));
        }
        if failures.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(Error::InvalidParameter("failure times must be finite and positive".into()));
        }
        if failures.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidParameter("failure times must be nondecreasing".into()));
        }
        if t_max.is_nan() || t_max <= 0.0 {
            return Err(Error::InvalidParameter(format!("truncation time must be positive, got {t_max}")));
        }
        let withdrawn: usize = applied_removals.iter().sum();
        match case {
            Case::CaseI => {
                if r != m {
                    return Err(Error::InvalidParameter(format!("Case I needs r = m, got r={r}, m={m}")));
                }
                if r_t != 0 {
                    return Err(Error::InvalidParameter("Case I has no withdrawals at T".into()));
                }
                if failures[r - 1] > t_max {
                    return Err(Error::InvalidParameter("Case I needs x_(m) <= T".into()));
                }
                if withdrawn + m != n {
                    return Err(Error::SchemeBalance(format!("removals ({withdrawn}) + m ({m}) != n ({n})")));
                }
            }
            Case::CaseII => {
                if r >= m {
                    return Err(Error::InvalidParameter(format!("Case II needs r < m, got r={r}, m={m}")));
                }
                if let Some(&last) = failures.last() {
                    if last >= t_max {
                        return Err(Error::InvalidParameter("Case II needs x_(r) < T".into()));
                    }
                }
                if r + withdrawn + r_t != n {
                    return Err(Error::SchemeBalance(format!(
                        "r ({r}) + removals ({withdrawn}) + R_T ({r_t}) != n ({n})"
                    )));
                }
            }
        }
        Ok(Self { n, m, t_max, failures, applied_removals, case, r_t })
    }

    /// A complete (uncensored) sample; values are sorted.
    pub fn complete(mut values: Vec<f64>) -> Result<Self> {
        values.sort_by(f64::total_cmp);
        let n = values.len();
        if n == 0 {
            return Err(Error::InvalidParameter("empty sample".into()));
        }
        Self::new(n, n, f64::INFINITY, values, vec![0; n], Case::CaseI, 0)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    /// Number of observed failures.
    pub fn r(&self) -> usize {
        self.failures.len()
    }

    pub fn failures(&self) -> &[f64] {
        &self.failures
    }

    pub fn applied_removals(&self) -> &[usize] {
        &self.applied_removals
    }

    pub fn case(&self) -> Case {
        self.case
    }

    /// Units withdrawn at `T` (zero in Case I).
    pub fn r_t(&self) -> usize {
        self.r_t
    }

    /// End of the experiment: `x_(m)` in Case I, `T` in Case II.
    pub fn c_end(&self) -> f64 {
        match self.case {
            Case::CaseI => *self.failures.last().expect("Case I sample has m >= 1 failures"),
            Case::CaseII => self.t_max,
        }
    }

    /// Number of units whose lifetimes were not observed.
    pub fn censored_units(&self) -> usize {
        self.n - self.r()
    }

    /// Rejects samples on which a two-parameter fit is undefined.
    pub fn require_failures(&self, needed: usize) -> Result<()> {
        if self.r() < needed {
            return Err(Error::InsufficientFailures { needed, got: self.r() });
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# phcs-sample v1")?;
        writeln!(out, "# n={}", self.n)?;
        writeln!(out, "# m={}", self.m)?;
        writeln!(out, "# t_max={}", self.t_max)?;
        writeln!(out, "# case={}", self.case)?;
        writeln!(out, "# r_t={}", self.r_t)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["index", "failure_time", "removals_applied"])?;
        for (i, (x, rm)) in self.failures.iter().zip(&self.applied_removals).enumerate() {
            w.serialize((i + 1, x, rm))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut header = HeaderFields::default();
        let mut body = String::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if let Some(rest) = trimmed.strip_prefix('#') {
                header.absorb(rest.trim(), lineno + 1)?;
            } else if !trimmed.is_empty() {
                body.push_str(trimmed);
                body.push('\n');
            }
        }
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(body.as_bytes());
        let cols = reader.headers()?.clone();
        if cols.iter().collect::<Vec<_>>() != ["index", "failure_time", "removals_applied"] {
            return Err(Error::Parse(format!("unexpected columns: {cols:?}")));
        }
        let mut failures = Vec::new();
        let mut removals = Vec::new();
        for (k, row) in reader.deserialize::<(usize, f64, usize)>().enumerate() {
            let (idx, x, rm) = row?;
            if idx != k + 1 {
                return Err(Error::Parse(format!("row {} has index {idx}", k + 1)));
            }
            failures.push(x);
            removals.push(rm);
        }
        let n = header.n.ok_or_else(|| Error::Parse("missing header field n".into()))?;
        let m = header.m.ok_or_else(|| Error::Parse("missing header field m".into()))?;
        let t_max = header.t_max.ok_or_else(|| Error::Parse("missing header field t_max".into()))?;
        let case = header.case.ok_or_else(|| Error::Parse("missing header field case".into()))?;
        let r_t = header.r_t.ok_or_else(|| Error::Parse("missing header field r_t".into()))?;
        Self::new(n, m, t_max, failures, removals, case, r_t)
    }
}

#[derive(Default)]
struct HeaderFields {
    n: Option<usize>,
    m: Option<usize>,
    t_max: Option<f64>,
    case: Option<Case>,
    r_t: Option<usize>,
}

impl HeaderFields {
    fn absorb(&mut self, text: &str, lineno: usize) -> Result<()> {
        let Some((key, value)) = text.split_once('=') else {
            return Ok(()); // free-form comment
        };
        let bad = |what: &str| Error::Parse(format!("line {lineno}: bad value for {what}: '{}'", value.trim()));
        let value = value.trim();
        match key.trim() {
            "n" => self.n = Some(value.parse().map_err(|_| bad("n"))?),
            "m" => self.m = Some(value.parse().map_err(|_| bad("m"))?),
            "t_max" => self.t_max = Some(value.parse().map_err(|_| bad("t_max"))?),
            "case" => self.case = Some(value.parse().map_err(|_| bad("case"))?),
            "r_t" => self.r_t = Some(value.parse().map_err(|_| bad("r_t"))?),
            _ => {}
        }
        Ok(())
    }
}

/// Progressive Type-II censored order statistics by the uniform-spacings
/// construction of Balakrishnan and Sandhu.
pub fn progressive_type2<R: Rng + ?Sized>(
    scheme: &CensoringScheme,
    truth: WeibullParams,
    rng: &mut R,
) -> Vec<f64> {
    let m = scheme.m;
    let r = &scheme.removals;
    // tail[i] = R_{m-i} + ... + R_m (0-based i), so the exponent for V_i is i + tail
    let mut v = vec![0.0; m];
    let mut tail = 0usize;
    for i in 1..=m {
        tail += r[m - i];
        let w: f64 = rng.sample(rand_distr::Open01);
        v[i - 1] = w.powf(1.0 / (i + tail) as f64);
    }
    // U_i = 1 - V_m V_{m-1} ... V_{m-i+1}
    let mut prod = 1.0;
    let mut out = Vec::with_capacity(m);
    for i in 1..=m {
        prod *= v[m - i];
        let u = 1.0 - prod;
        let u = u.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
        out.push(quantile(u, truth).expect("u clamped into (0,1)"));
    }
    out
}

/// Applies the time truncation at `T` to a progressive Type-II sample.
pub fn truncate(scheme: &CensoringScheme, progressive: &[f64]) -> Result<PhcsSample> {
    let m = scheme.m;
    if progressive.len() != m {
        return Err(Error::InvalidParameter(format!(
            "expected {m} progressive order statistics, got {}",
            progressive.len()
        )));
    }
    let t = scheme.t_max;
    if progressive[m - 1] <= t {
        return PhcsSample::new(
            scheme.n,
            m,
            t,
            progressive.to_vec(),
            scheme.removals.clone(),
            Case::CaseI,
            0,
        );
    }
    let j = progressive.iter().take_while(|&&x| x < t).count();
    if j == 0 {
        return Err(Error::NoFailures);
    }
    let applied = scheme.removals[..j].to_vec();
    let r_t = scheme.n - j - applied.iter().sum::<usize>();
    PhcsSample::new(scheme.n, m, t, progressive[..j].to_vec(), applied, Case::CaseII, r_t)
}

/// Draws one Type-I progressively hybrid censored sample.
///
/// Returns [`Error::NoFailures`] when the first failure falls after `T`.
/// Replicates containing float-rounding ties are redrawn.
pub fn generate<R: Rng + ?Sized>(
    scheme: &CensoringScheme,
    truth: WeibullParams,
    rng: &mut R,
) -> Result<PhcsSample> {
    const MAX_REDRAWS: usize = 1000;
    for _ in 0..MAX_REDRAWS {
        let xs = progressive_type2(scheme, truth, rng);
        if xs.windows(2).all(|w| w[0] < w[1]) && xs[0] > 0.0 {
            return truncate(scheme, &xs);
        }
    }
    Err(Error::Domain("could not draw a tie-free sample".into()))
}

/// Runs the censoring experiment on an observed complete dataset: at each
/// failure `R_i` survivors are withdrawn uniformly at random, and the test
/// stops at `min(x_(m), T)`.
pub fn censor_observed<R: Rng + ?Sized>(
    values: &[f64],
    scheme: &CensoringScheme,
    rng: &mut R,
) -> Result<PhcsSample> {
    if values.len() != scheme.n {
        return Err(Error::SchemeBalance(format!(
            "dataset has {} values but n = {}",
            values.len(),
            scheme.n
        )));
    }
    let mut alive: Vec<f64> = values.to_vec();
    if alive.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(Error::InvalidParameter("lifetimes must be finite and positive".into()));
    }
    alive.sort_by(f64::total_cmp);
    let mut failures = Vec::with_capacity(scheme.m);
    for &remove in &scheme.removals {
        let x = alive.remove(0);
        if x > scheme.t_max || (x == scheme.t_max && failures.len() + 1 < scheme.m) {
            break;
        }
        failures.push(x);
        for _ in 0..remove {
            let k = rng.random_range(0..alive.len());
            alive.remove(k);
        }
    }
    truncate_partial(scheme, failures)
}

fn truncate_partial(scheme: &CensoringScheme, failures: Vec<f64>) -> Result<PhcsSample> {
    let j = failures.len();
    if j == scheme.m {
        return PhcsSample::new(
            scheme.n,
            scheme.m,
            scheme.t_max,
            failures,
            scheme.removals.clone(),
            Case::CaseI,
            0,
        );
    }
    if j == 0 {
        return Err(Error::NoFailures);
    }
    let applied = scheme.removals[..j].to_vec();
    let r_t = scheme.n - j - applied.iter().sum::<usize>();
    PhcsSample::new(scheme.n, scheme.m, scheme.t_max, failures, applied, Case::CaseII, r_t)
}

/// Expands run-length notation such as `(2^5,0^{m-6},n-m-10)` into an
/// explicit removal vector. Counts and values may use `n`, `m`, integer
/// literals, `+` and `-`; a count after `^` is either a single atom or a
/// braced expression.
pub fn scheme_from_shorthand(spec: &str, n: usize, m: usize) -> Result<Vec<usize>> {
    let mut p = ShorthandParser { chars: spec.chars().filter(|c| !c.is_whitespace()).collect(), pos: 0, n, m };
    let out = p.list()?;
    if out.len() != m {
        return Err(Error::SchemeBalance(format!("'{spec}' expands to {} entries but m = {m}", out.len())));
    }
    let total: usize = out.iter().sum();
    if total + m != n {
        return Err(Error::SchemeBalance(format!(
            "'{spec}': sum of removals ({total}) + m ({m}) != n ({n})"
        )));
    }
    Ok(out)
}

struct ShorthandParser {
    chars: Vec<char>,
    pos: usize,
    n: usize,
    m: usize,
}

impl ShorthandParser {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn err(&self, msg: &str) -> Error {
        let text: String = self.chars.iter().collect();
        Error::Parse(format!("scheme '{text}' at position {}: {msg}", self.pos))
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn list(&mut self) -> Result<Vec<usize>> {
        let parens = self.eat('(');
        let mut out = Vec::new();
        loop {
            let value = self.expr()?;
            let count = if self.eat('^') {
                if self.eat('{') {
                    let c = self.expr()?;
                    if !self.eat('}') {
                        return Err(self.err("expected '}'"));
                    }
                    c
                } else {
                    self.atom()?
                }
            } else {
                1
            };
            let value = usize::try_from(value).map_err(|_| self.err("negative removal count"))?;
            let count = usize::try_from(count).map_err(|_| self.err("negative repeat count"))?;
            out.extend(std::iter::repeat_n(value, count));
            if !self.eat(',') {
                break;
            }
        }
        if parens && !self.eat(')') {
            return Err(self.err("expected ')'"));
        }
        if self.pos != self.chars.len() {
            return Err(self.err("trailing characters"));
        }
        Ok(out)
    }

    fn expr(&mut self) -> Result<i64> {
        let mut acc = self.atom()?;
        loop {
            if self.eat('+') {
                acc += self.atom()?;
            } else if self.eat('-') {
                acc -= self.atom()?;
            } else {
                return Ok(acc);
            }
        }
    }

    fn atom(&mut self) -> Result<i64> {
        match self.peek() {
            Some('n') => {
                self.pos += 1;
                Ok(self.n as i64)
            }
            Some('m') => {
                self.pos += 1;
                Ok(self.m as i64)
            }
            Some('{') => {
                self.pos += 1;
                let v = self.expr()?;
                if !self.eat('}') {
                    return Err(self.err("expected '}'"));
                }
                Ok(v)
            }
            Some(c) if c.is_ascii_digit() => {
                let start = self.pos;
                while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                    self.pos += 1;
                }
                let digits: String = self.chars[start..self.pos].iter().collect();
                digits.parse().map_err(|_| self.err("integer overflow"))
            }
            _ => Err(self.err("expected an integer, 'n' or 'm'")),
        }
    }
}

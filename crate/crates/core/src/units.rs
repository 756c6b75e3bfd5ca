//! Quantity parsing with unit suffixes.
//!
//! Values in scenario files carry an explicit unit (`2.0 MW/kg`,
//! `1.2955e-5 mm^2/s`, `4 mmHg`) and are converted to SI base units at load
//! time. A unit expression is a product of prefixed unit symbols with optional
//! integer exponents, separated by `*` or `/`, with parentheses for grouping:
//! `W/(m^2*K)`, `W/mm^2/K`, `1/s`.

use std::fmt;

/// Exponents of (kg, m, s, K).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dim(pub [i8; 4]);

impl Dim {
    pub const NONE: Dim = Dim([0, 0, 0, 0]);
    pub const LENGTH: Dim = Dim([0, 1, 0, 0]);
    pub const TIME: Dim = Dim([0, 0, 1, 0]);
    pub const TEMPERATURE: Dim = Dim([0, 0, 0, 1]);
    pub const PRESSURE: Dim = Dim([1, -1, -2, 0]);
    pub const DENSITY: Dim = Dim([1, -3, 0, 0]);
    pub const DIFFUSIVITY: Dim = Dim([0, 2, -1, 0]);
    pub const RATE: Dim = Dim([0, 0, -1, 0]);
    pub const VELOCITY: Dim = Dim([0, 1, -1, 0]);
    pub const AREA: Dim = Dim([0, 2, 0, 0]);
    pub const INV_LENGTH: Dim = Dim([0, -1, 0, 0]);
    pub const VISCOSITY: Dim = Dim([1, -1, -1, 0]);
    /// m^2 s / kg, equivalently m / (Pa s).
    pub const HYDRAULIC_CONDUCTIVITY: Dim = Dim([-1, 2, 1, 0]);
    /// 1 / (Pa s).
    pub const FILTRATION: Dim = Dim([-1, 1, 1, 0]);
    /// m^2 / (Pa s), the Darcy mobility k/mu.
    pub const MOBILITY: Dim = Dim([-1, 3, 1, 0]);
    pub const SPECIFIC_HEAT: Dim = Dim([0, 2, -2, -1]);
    pub const CONDUCTIVITY: Dim = Dim([1, 1, -3, -1]);
    pub const HEAT_TRANSFER: Dim = Dim([1, 0, -3, -1]);
    /// W/kg.
    pub const SPECIFIC_POWER: Dim = Dim([0, 2, -3, 0]);
    pub const POWER_DENSITY: Dim = Dim([1, -1, -3, 0]);

    fn add(self, other: Dim, sign: i8) -> Dim {
        let mut out = self.0;
        for (o, x) in out.iter_mut().zip(other.0) {
            *o += sign * x;
        }
        Dim(out)
    }

    fn scale(self, k: i8) -> Dim {
        Dim(self.0.map(|x| x * k))
    }
}

impl fmt::Display for Dim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self == Dim::NONE {
            return write!(f, "1");
        }
        let names = ["kg", "m", "s", "K"];
        let mut first = true;
        for (n, e) in names.iter().zip(self.0) {
            if e == 0 {
                continue;
            }
            if !first {
                write!(f, "*")?;
            }
            first = false;
            if e == 1 {
                write!(f, "{n}")?;
            } else {
                write!(f, "{n}^{e}")?;
            }
        }
        Ok(())
    }
}

/// A value in SI base units together with its dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantity {
    pub value: f64,
    pub dim: Dim,
}

const CELSIUS_OFFSET: f64 = 273.15;

/// Parse `"<number> [unit]"` into SI. Absolute Celsius temperatures (`degC`)
/// are accepted only as a standalone unit.
pub fn parse_quantity(text: &str) -> Result<Quantity, String> {
    let text = text.trim();
    let split = text
        .find(|c: char| c.is_whitespace())
        .unwrap_or(text.len());
    let (num, unit) = text.split_at(split);
    let value: f64 = num
        .parse()
        .map_err(|_| format!("cannot parse number '{num}'"))?;
    let unit = unit.trim();
    if unit.is_empty() {
        return Ok(Quantity {
            value,
            dim: Dim::NONE,
        });
    }
    if matches!(unit, "degC" | "°C" | "C") {
        return Ok(Quantity {
            value: value + CELSIUS_OFFSET,
            dim: Dim::TEMPERATURE,
        });
    }
    let (factor, dim) = parse_unit(unit)?;
    Ok(Quantity {
        value: value * factor,
        dim,
    })
}

/// Parse a quantity and check it against the expected dimension.
pub fn parse_as(text: &str, expected: Dim) -> Result<f64, String> {
    let q = parse_quantity(text)?;
    if q.dim != expected {
        return Err(format!(
            "unit mismatch in '{}': expected {expected}, got {}",
            text.trim(),
            q.dim
        ));
    }
    Ok(q.value)
}

/// Parse a unit expression, returning (SI factor, dimension).
pub fn parse_unit(expr: &str) -> Result<(f64, Dim), String> {
    let tokens = tokenize(expr)?;
    let mut pos = 0;
    let out = parse_product(&tokens, &mut pos)?;
    if pos != tokens.len() {
        return Err(format!("trailing input in unit '{expr}'"));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Sym(String),
    Int(i32),
    Mul,
    Div,
    Pow,
    Open,
    Close,
}

fn tokenize(expr: &str) -> Result<Vec<Tok>, String> {
    let mut out = Vec::new();
    let mut chars = expr.chars().peekable();
    while let Some(&c) = chars.peek() {
        match c {
            ' ' => {
                chars.next();
            }
            '*' | '·' => {
                chars.next();
                out.push(Tok::Mul);
            }
            '/' => {
                chars.next();
                out.push(Tok::Div);
            }
            '^' => {
                chars.next();
                out.push(Tok::Pow);
            }
            '(' => {
                chars.next();
                out.push(Tok::Open);
            }
            ')' => {
                chars.next();
                out.push(Tok::Close);
            }
            '-' | '0'..='9' => {
                let mut s = String::new();
                s.push(c);
                chars.next();
                while let Some(&d) = chars.peek() {
                    if d.is_ascii_digit() {
                        s.push(d);
                        chars.next();
                    } else {
                        break;
                    }
                }
                out.push(Tok::Int(
                    s.parse().map_err(|_| format!("bad exponent '{s}'"))?,
                ));
            }
            c if c.is_alphabetic() || c == 'µ' => {
                let mut s = String::new();
                while let Some(&d) = chars.peek() {
                    if d.is_alphabetic() || d == 'µ' {
                        s.push(d);
                        chars.next();
                    } else {
                        break;
                    }
                }
                out.push(Tok::Sym(s));
            }
            other => return Err(format!("unexpected character '{other}' in unit")),
        }
    }
    Ok(out)
}

fn parse_product(toks: &[Tok], pos: &mut usize) -> Result<(f64, Dim), String> {
    let (mut f, mut d) = parse_factor(toks, pos)?;
    while *pos < toks.len() {
        let sign = match toks[*pos] {
            Tok::Mul => 1,
            Tok::Div => -1,
            _ => break,
        };
        *pos += 1;
        let (g, e) = parse_factor(toks, pos)?;
        if sign > 0 {
            f *= g;
        } else {
            f /= g;
        }
        d = d.add(e, sign);
    }
    Ok((f, d))
}

fn parse_factor(toks: &[Tok], pos: &mut usize) -> Result<(f64, Dim), String> {
    let (f, d) = match toks.get(*pos) {
        Some(Tok::Open) => {
            *pos += 1;
            let inner = parse_product(toks, pos)?;
            if toks.get(*pos) != Some(&Tok::Close) {
                return Err("unbalanced parentheses in unit".into());
            }
            *pos += 1;
            inner
        }
        Some(Tok::Sym(s)) => {
            *pos += 1;
            lookup_symbol(s)?
        }
        Some(Tok::Int(1)) => {
            *pos += 1;
            (1.0, Dim::NONE)
        }
        other => return Err(format!("unexpected token {other:?} in unit")),
    };
    if toks.get(*pos) == Some(&Tok::Pow) {
        *pos += 1;
        match toks.get(*pos) {
            Some(Tok::Int(k)) => {
                *pos += 1;
                let k8 = i8::try_from(*k).map_err(|_| "exponent out of range".to_string())?;
                return Ok((f.powi(*k), d.scale(k8)));
            }
            _ => return Err("expected integer exponent".into()),
        }
    }
    Ok((f, d))
}

fn base_unit(sym: &str) -> Option<(f64, Dim)> {
    Some(match sym {
        "m" => (1.0, Dim::LENGTH),
        "g" => (1e-3, Dim([1, 0, 0, 0])),
        "s" => (1.0, Dim::TIME),
        "K" => (1.0, Dim::TEMPERATURE),
        "W" => (1.0, Dim([1, 2, -3, 0])),
        "J" => (1.0, Dim([1, 2, -2, 0])),
        "N" => (1.0, Dim([1, 1, -2, 0])),
        "Pa" => (1.0, Dim::PRESSURE),
        _ => return None,
    })
}

fn lookup_symbol(sym: &str) -> Result<(f64, Dim), String> {
    // Units that would otherwise be mis-read as prefix + symbol.
    match sym {
        "mmHg" => return Ok((133.322_387_415, Dim::PRESSURE)),
        "min" => return Ok((60.0, Dim::TIME)),
        "h" => return Ok((3600.0, Dim::TIME)),
        _ => {}
    }
    if let Some(u) = base_unit(sym) {
        return Ok(u);
    }
    let mut chars = sym.chars();
    let prefix = chars.next().ok_or("empty unit symbol")?;
    let rest = chars.as_str();
    let scale = match prefix {
        'G' => 1e9,
        'M' => 1e6,
        'k' => 1e3,
        'c' => 1e-2,
        'm' => 1e-3,
        'u' | 'µ' => 1e-6,
        'n' => 1e-9,
        _ => return Err(format!("unknown unit '{sym}'")),
    };
    let (f, d) = base_unit(rest).ok_or_else(|| format!("unknown unit '{sym}'"))?;
    Ok((scale * f, d))
}

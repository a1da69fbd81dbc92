//! Plain-text setup descriptions.
//!
//! A setup file is a sequence of lines, one directive each. A `#` at the
//! start of a line or after whitespace starts a comment; blank lines are
//! skipped. Header directives (`order`,
//! `annihilation`, `param`, `detectors`) may appear anywhere but by
//! convention come first; every other line appends an element in the order
//! written, which is the order the experiment applies them.
//!
//! ```text
//! # two overlapped pair sources
//! order 1
//! param phi 0
//! detectors S_d S_d'
//! crystal S_a I_a
//! attenuator I_a T
//! identify I_a I_b
//! crystal S_b I_b phase=phi
//! bs S_a S_b -> S_d S_d'
//! ```
//!
//! Emission modes are written `modes=<a>,<b>` with one entry per path:
//! `-` (bare), `H`, `V`, `A<angle>`, `l<shift>`, `#<tag>`, or several of
//! these joined by `|`. Scalar fields accept a number or a parameter name.

use std::fmt;
use std::str::FromStr;

use crate::element::{Bindings, Element, Expr, SimOptions};
use crate::engine::{DetectionPattern, ExperimentSetup, PatternEntry};
use crate::fock::{Angle, InternalMode, Path, Polarization};
use crate::{Error, Result};

/// A parsed setup file: header data plus the element list. Keeps exactly
/// what was written, so serializing and reparsing is lossless.
#[derive(Clone, Debug, PartialEq)]
pub struct SetupDocument {
    pub truncation: Option<u32>,
    pub annihilation: bool,
    /// Declared parameters with optional default values, in file order.
    pub params: Vec<(String, Option<f64>)>,
    pub detectors: Vec<Path>,
    pub elements: Vec<Element>,
}

impl Default for SetupDocument {
    fn default() -> Self {
        SetupDocument {
            truncation: None,
            annihilation: true,
            params: Vec::new(),
            detectors: Vec::new(),
            elements: Vec::new(),
        }
    }
}

fn err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

/// A `#` opens a comment only at the start of a line or after whitespace;
/// inside a token it is ordinary text (mode tags are spelled `#name`).
fn comment_start(line: &str) -> Option<usize> {
    let mut after_space = true;
    for (i, c) in line.char_indices() {
        if c == '#' && after_space {
            return Some(i);
        }
        after_space = c.is_whitespace();
    }
    None
}

fn parse_path(token: &str, line: usize) -> Result<Path> {
    if token.is_empty() {
        return Err(err(line, "empty path name"));
    }
    if token.starts_with('~') {
        return Err(err(
            line,
            format!("path {token} uses the reserved loss prefix '~'"),
        ));
    }
    if token.contains('=') || token.contains(',') || token.contains(':') {
        return Err(err(line, format!("path {token} contains a reserved character")));
    }
    Ok(Path::new(token))
}

fn parse_param_name(token: &str, line: usize) -> Result<String> {
    let mut chars = token.chars();
    let ok = matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_');
    if ok {
        Ok(token.to_string())
    } else {
        Err(err(line, format!("invalid parameter name {token}")))
    }
}

fn parse_expr(token: &str, line: usize) -> Result<Expr> {
    if let Ok(v) = f64::from_str(token) {
        if !v.is_finite() {
            return Err(err(line, format!("non-finite value {token}")));
        }
        return Ok(Expr::Const(v));
    }
    Ok(Expr::Param(parse_param_name(token, line)?))
}

fn parse_polarization(token: &str, line: usize) -> Result<Polarization> {
    match token {
        "H" => Ok(Polarization::H),
        "V" => Ok(Polarization::V),
        _ => {
            if let Some(rest) = token.strip_prefix('A') {
                let v: f64 = rest
                    .parse()
                    .map_err(|_| err(line, format!("bad polarization angle {token}")))?;
                Ok(Polarization::Angle(Angle::radians(v)))
            } else {
                Err(err(line, format!("unknown polarization {token}")))
            }
        }
    }
}

fn parse_mode(token: &str, line: usize) -> Result<InternalMode> {
    if token == "-" {
        return Ok(InternalMode::plain());
    }
    let mut mode = InternalMode::plain();
    for part in token.split('|') {
        if part == "H" || part == "V" || part.starts_with('A') {
            if mode.pol.is_some() {
                return Err(err(line, format!("mode {token} sets polarization twice")));
            }
            mode.pol = Some(parse_polarization(part, line)?);
        } else if let Some(rest) = part.strip_prefix('l') {
            let l: i32 = rest
                .parse()
                .map_err(|_| err(line, format!("bad mode index {part}")))?;
            mode.oam = l;
        } else if let Some(tag) = part.strip_prefix('#') {
            if tag.is_empty() {
                return Err(err(line, "empty mode tag"));
            }
            mode.tag = Some(tag.to_string());
        } else {
            return Err(err(line, format!("unknown mode component {part}")));
        }
    }
    Ok(mode)
}

fn mode_spec(mode: &InternalMode) -> String {
    if mode.is_plain() {
        return "-".into();
    }
    let mut parts = Vec::new();
    if let Some(p) = &mode.pol {
        parts.push(p.to_string());
    }
    if mode.oam != 0 {
        parts.push(format!("l{}", mode.oam));
    }
    if let Some(t) = &mode.tag {
        parts.push(format!("#{t}"));
    }
    parts.join("|")
}

/// Trailing `key=value` options of an element line.
struct Options {
    line: usize,
    entries: Vec<(String, String)>,
}

impl Options {
    fn parse(tokens: &[&str], line: usize) -> Result<Self> {
        let mut entries = Vec::new();
        for t in tokens {
            let Some((key, value)) = t.split_once('=') else {
                return Err(err(line, format!("expected key=value, got {t}")));
            };
            if entries.iter().any(|(k, _)| k == key) {
                return Err(err(line, format!("duplicate option {key}")));
            }
            entries.push((key.to_string(), value.to_string()));
        }
        Ok(Options { line, entries })
    }

    fn take(&mut self, key: &str) -> Option<String> {
        let i = self.entries.iter().position(|(k, _)| k == key)?;
        Some(self.entries.remove(i).1)
    }

    fn take_expr(&mut self, key: &str, default: f64) -> Result<Expr> {
        match self.take(key) {
            Some(v) => parse_expr(&v, self.line),
            None => Ok(Expr::Const(default)),
        }
    }

    fn finish(self) -> Result<()> {
        match self.entries.first() {
            Some((k, _)) => Err(err(self.line, format!("unknown option {k}"))),
            None => Ok(()),
        }
    }
}

fn split_arrow<'a>(tokens: &[&'a str], line: usize) -> Result<(Vec<&'a str>, Vec<&'a str>)> {
    let Some(pos) = tokens.iter().position(|t| *t == "->") else {
        return Err(err(line, "expected '->' between input and output ports"));
    };
    Ok((tokens[..pos].to_vec(), tokens[pos + 1..].to_vec()))
}

impl SetupDocument {
    pub fn parse(text: &str) -> Result<Self> {
        let mut doc = SetupDocument::default();
        let mut saw_order = false;
        let mut saw_annihilation = false;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let stripped = match comment_start(raw) {
                Some(pos) => &raw[..pos],
                None => raw,
            };
            let tokens: Vec<&str> = stripped.split_whitespace().collect();
            let Some((&keyword, rest)) = tokens.split_first() else {
                continue;
            };
            match keyword {
                "order" => {
                    if saw_order {
                        return Err(err(line, "order given twice"));
                    }
                    saw_order = true;
                    let [value] = rest else {
                        return Err(err(line, "usage: order <k>"));
                    };
                    let k: u32 = value
                        .parse()
                        .map_err(|_| err(line, format!("bad order {value}")))?;
                    if k == 0 {
                        return Err(err(line, "order must be at least 1"));
                    }
                    doc.truncation = Some(k);
                }
                "annihilation" => {
                    if saw_annihilation {
                        return Err(err(line, "annihilation given twice"));
                    }
                    saw_annihilation = true;
                    doc.annihilation = match rest {
                        ["on"] => true,
                        ["off"] => false,
                        _ => return Err(err(line, "usage: annihilation on|off")),
                    };
                }
                "param" => {
                    let (name, value) = match rest {
                        [name] => (parse_param_name(name, line)?, None),
                        [name, value] => {
                            let v: f64 = value
                                .parse()
                                .map_err(|_| err(line, format!("bad value {value}")))?;
                            if !v.is_finite() {
                                return Err(err(line, format!("non-finite value {value}")));
                            }
                            (parse_param_name(name, line)?, Some(v))
                        }
                        _ => return Err(err(line, "usage: param <name> [<value>]")),
                    };
                    if doc.params.iter().any(|(n, _)| *n == name) {
                        return Err(err(line, format!("parameter {name} declared twice")));
                    }
                    doc.params.push((name, value));
                }
                "detectors" => {
                    if rest.is_empty() {
                        return Err(err(line, "usage: detectors <path>..."));
                    }
                    for t in rest {
                        let p = parse_path(t, line)?;
                        if doc.detectors.contains(&p) {
                            return Err(err(line, format!("detector {p} listed twice")));
                        }
                        doc.detectors.push(p);
                    }
                }
                "crystal" => {
                    let (paths, opts) = rest.split_at(rest.iter().take_while(|t| !t.contains('=')).count());
                    let [a, b] = paths else {
                        return Err(err(line, "usage: crystal <a> <b> [options]"));
                    };
                    let mut opts = Options::parse(opts, line)?;
                    let (mode_a, mode_b) = match opts.take("modes") {
                        Some(spec) => {
                            let parts: Vec<&str> = spec.split(',').collect();
                            let [ma, mb] = parts[..] else {
                                return Err(err(line, "modes wants two comma-separated entries"));
                            };
                            (parse_mode(ma, line)?, parse_mode(mb, line)?)
                        }
                        None => (InternalMode::plain(), InternalMode::plain()),
                    };
                    let gain = opts.take_expr("weight", 1.0)?;
                    let phase = opts.take_expr("phase", 0.0)?;
                    opts.finish()?;
                    doc.elements.push(Element::Crystal {
                        a: parse_path(a, line)?,
                        b: parse_path(b, line)?,
                        mode_a,
                        mode_b,
                        gain,
                        phase,
                    });
                }
                "source" => {
                    let (paths, opts) = rest.split_at(rest.iter().take_while(|t| !t.contains('=')).count());
                    if paths.is_empty() {
                        return Err(err(line, "usage: source <path>... [options]"));
                    }
                    let paths: Vec<Path> = paths
                        .iter()
                        .map(|t| parse_path(t, line))
                        .collect::<Result<_>>()?;
                    let mut opts = Options::parse(opts, line)?;
                    let modes = match opts.take("modes") {
                        Some(spec) => {
                            let parts: Vec<&str> = spec.split(',').collect();
                            if parts.len() != paths.len() {
                                return Err(err(
                                    line,
                                    format!(
                                        "modes wants {} comma-separated entries",
                                        paths.len()
                                    ),
                                ));
                            }
                            parts
                                .iter()
                                .map(|m| parse_mode(m, line))
                                .collect::<Result<_>>()?
                        }
                        None => vec![InternalMode::plain(); paths.len()],
                    };
                    let gain = opts.take_expr("weight", 1.0)?;
                    let phase = opts.take_expr("phase", 0.0)?;
                    opts.finish()?;
                    doc.elements.push(Element::Source {
                        paths,
                        modes,
                        gain,
                        phase,
                    });
                }
                "bs" => {
                    let (ports, opts) = rest.split_at(rest.iter().take_while(|t| !t.contains('=')).count());
                    let (ins, outs) = split_arrow(&ports, line)?;
                    let ([in_a, in_b], [out_a, out_b]) = (&ins[..], &outs[..]) else {
                        return Err(err(line, "usage: bs <in_a> <in_b> -> <out_a> <out_b>"));
                    };
                    let mut opts = Options::parse(opts, line)?;
                    let phase = opts.take_expr("phase", 0.0)?;
                    opts.finish()?;
                    doc.elements.push(Element::BeamSplitter {
                        in_a: parse_path(in_a, line)?,
                        in_b: parse_path(in_b, line)?,
                        out_a: parse_path(out_a, line)?,
                        out_b: parse_path(out_b, line)?,
                        phase,
                    });
                }
                "pbs" => {
                    let (ins, outs) = split_arrow(rest, line)?;
                    let ([in_a, in_b], [out_a, out_b]) = (&ins[..], &outs[..]) else {
                        return Err(err(line, "usage: pbs <in_a> <in_b> -> <out_a> <out_b>"));
                    };
                    doc.elements.push(Element::PolarizingBeamSplitter {
                        in_a: parse_path(in_a, line)?,
                        in_b: parse_path(in_b, line)?,
                        out_a: parse_path(out_a, line)?,
                        out_b: parse_path(out_b, line)?,
                    });
                }
                "phase" => {
                    let [path, value] = rest else {
                        return Err(err(line, "usage: phase <path> <value>"));
                    };
                    doc.elements.push(Element::Phase {
                        path: parse_path(path, line)?,
                        phase: parse_expr(value, line)?,
                    });
                }
                "oam" => {
                    let [path, delta] = rest else {
                        return Err(err(line, "usage: oam <path> <shift>"));
                    };
                    let delta: i32 = delta
                        .parse()
                        .map_err(|_| err(line, format!("bad mode shift {delta}")))?;
                    doc.elements.push(Element::OamShift {
                        path: parse_path(path, line)?,
                        delta,
                    });
                }
                "rotate" => {
                    let [path, value] = rest else {
                        return Err(err(line, "usage: rotate <path> <angle>"));
                    };
                    doc.elements.push(Element::Rotate {
                        path: parse_path(path, line)?,
                        angle: parse_expr(value, line)?,
                    });
                }
                "polset" => {
                    let [path, value] = rest else {
                        return Err(err(line, "usage: polset <path> <H|V|A...>"));
                    };
                    doc.elements.push(Element::PolSet {
                        path: parse_path(path, line)?,
                        pol: parse_polarization(value, line)?,
                    });
                }
                "attenuator" => {
                    let (args, opts) = rest.split_at(rest.iter().take_while(|t| !t.contains('=')).count());
                    let [path, value] = args else {
                        return Err(err(line, "usage: attenuator <path> <T> [phase=...]"));
                    };
                    let mut opts = Options::parse(opts, line)?;
                    let phase = opts.take_expr("phase", 0.0)?;
                    opts.finish()?;
                    doc.elements.push(Element::Attenuator {
                        path: parse_path(path, line)?,
                        transmission: parse_expr(value, line)?,
                        phase,
                        loss: Path::loss(0),
                    });
                }
                "identify" => {
                    let [from, to] = rest else {
                        return Err(err(line, "usage: identify <from> <to>"));
                    };
                    doc.elements.push(Element::Identify {
                        from: parse_path(from, line)?,
                        to: parse_path(to, line)?,
                    });
                }
                other => return Err(err(line, format!("unknown directive {other}"))),
            }
        }
        Ok(doc)
    }

    /// Builds the runnable experiment. Loss paths for the attenuators are
    /// minted here, numbered in element order.
    pub fn compile(&self) -> ExperimentSetup {
        let mut setup = ExperimentSetup::new(self.elements.clone(), self.detectors.clone());
        setup.truncation = self.truncation;
        setup.options = SimOptions {
            annihilation: self.annihilation,
        };
        let mut defaults = Bindings::new();
        for (name, value) in &self.params {
            if let Some(v) = value {
                defaults.insert(name.clone(), *v);
            }
        }
        setup.defaults = defaults;
        setup
    }
}

fn write_scaled(
    f: &mut fmt::Formatter<'_>,
    gain: &Expr,
    phase: &Expr,
) -> fmt::Result {
    if *gain != Expr::Const(1.0) {
        write!(f, " weight={gain}")?;
    }
    if *phase != Expr::Const(0.0) {
        write!(f, " phase={phase}")?;
    }
    Ok(())
}

impl fmt::Display for SetupDocument {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(k) = self.truncation {
            writeln!(f, "order {k}")?;
        }
        if !self.annihilation {
            writeln!(f, "annihilation off")?;
        }
        for (name, value) in &self.params {
            match value {
                Some(v) => writeln!(f, "param {name} {v}")?,
                None => writeln!(f, "param {name}")?,
            }
        }
        if !self.detectors.is_empty() {
            write!(f, "detectors")?;
            for d in &self.detectors {
                write!(f, " {d}")?;
            }
            writeln!(f)?;
        }
        for el in &self.elements {
            match el {
                Element::Crystal {
                    a,
                    b,
                    mode_a,
                    mode_b,
                    gain,
                    phase,
                } => {
                    write!(f, "crystal {a} {b}")?;
                    if !mode_a.is_plain() || !mode_b.is_plain() {
                        write!(f, " modes={},{}", mode_spec(mode_a), mode_spec(mode_b))?;
                    }
                    write_scaled(f, gain, phase)?;
                    writeln!(f)?;
                }
                Element::Source {
                    paths,
                    modes,
                    gain,
                    phase,
                } => {
                    write!(f, "source")?;
                    for p in paths {
                        write!(f, " {p}")?;
                    }
                    if modes.iter().any(|m| !m.is_plain()) {
                        let specs: Vec<String> = modes.iter().map(mode_spec).collect();
                        write!(f, " modes={}", specs.join(","))?;
                    }
                    write_scaled(f, gain, phase)?;
                    writeln!(f)?;
                }
                Element::BeamSplitter {
                    in_a,
                    in_b,
                    out_a,
                    out_b,
                    phase,
                } => {
                    write!(f, "bs {in_a} {in_b} -> {out_a} {out_b}")?;
                    if *phase != Expr::Const(0.0) {
                        write!(f, " phase={phase}")?;
                    }
                    writeln!(f)?;
                }
                Element::PolarizingBeamSplitter {
                    in_a,
                    in_b,
                    out_a,
                    out_b,
                } => writeln!(f, "pbs {in_a} {in_b} -> {out_a} {out_b}")?,
                Element::Phase { path, phase } => writeln!(f, "phase {path} {phase}")?,
                Element::OamShift { path, delta } => writeln!(f, "oam {path} {delta}")?,
                Element::Rotate { path, angle } => writeln!(f, "rotate {path} {angle}")?,
                Element::PolSet { path, pol } => writeln!(f, "polset {path} {pol}")?,
                Element::Attenuator {
                    path,
                    transmission,
                    phase,
                    ..
                } => {
                    write!(f, "attenuator {path} {transmission}")?;
                    if *phase != Expr::Const(0.0) {
                        write!(f, " phase={phase}")?;
                    }
                    writeln!(f)?;
                }
                Element::Identify { from, to } => writeln!(f, "identify {from} {to}")?,
            }
        }
        Ok(())
    }
}

/// Parses a detection pattern: comma-separated entries of the form
/// `path`, `path=count`, `path:mode`, or `path=count:mode`. A bare path
/// means one photon; a mode makes the entry mode-resolved.
pub fn parse_pattern(text: &str) -> Result<DetectionPattern> {
    let mut entries = Vec::new();
    for raw in text.split(',') {
        let item = raw.trim();
        if item.is_empty() {
            return Err(Error::invalid("empty detection pattern entry"));
        }
        let (head, mode) = match item.split_once(':') {
            Some((head, spec)) => (head, Some(parse_mode(spec, 0).map_err(strip_line)?)),
            None => (item, None),
        };
        let (path, count) = match head.split_once('=') {
            Some((path, count)) => {
                let n: u32 = count.parse().map_err(|_| {
                    Error::invalid(format!("bad photon count {count} in pattern"))
                })?;
                (path, n)
            }
            None => (head, 1),
        };
        entries.push(PatternEntry {
            path: parse_path(path, 0).map_err(strip_line)?,
            count,
            mode,
        });
    }
    if entries.is_empty() {
        return Err(Error::invalid("empty detection pattern"));
    }
    let mode_blind = entries.iter().all(|e| e.mode.is_none());
    Ok(DetectionPattern {
        entries,
        mode_blind,
    })
}

fn strip_line(e: Error) -> Error {
    match e {
        Error::Parse { msg, .. } => Error::invalid(msg),
        other => other,
    }
}

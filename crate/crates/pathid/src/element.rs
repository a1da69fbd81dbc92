//! Optical elements and their action on operator polynomials.
//!
//! Linear elements substitute creation operators; nonlinear elements
//! (crystals and multi-photon emitters) apply a truncated exponential series
//! that raises the formal perturbation order by one per emission event.

use std::collections::BTreeMap;
use std::fmt;

use crate::fock::{
    InternalMode, ModeLabel, Monomial, OperatorPolynomial, Path, Polarization, Term,
};
use crate::{C64, Error, Result};

/// Scalar that is either a literal or a named parameter bound at run time.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    Param(String),
}

impl Expr {
    pub fn eval(&self, bindings: &Bindings) -> Result<f64> {
        match self {
            Expr::Const(v) => Ok(*v),
            Expr::Param(name) => bindings
                .get(name)
                .copied()
                .ok_or_else(|| Error::UnboundParam(name.clone())),
        }
    }

    pub fn param_name(&self) -> Option<&str> {
        match self {
            Expr::Const(_) => None,
            Expr::Param(name) => Some(name),
        }
    }
}

impl From<f64> for Expr {
    fn from(v: f64) -> Self {
        Expr::Const(v)
    }
}

impl From<&str> for Expr {
    fn from(name: &str) -> Self {
        Expr::Param(name.to_string())
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(v) => write!(f, "{v}"),
            Expr::Param(name) => f.write_str(name),
        }
    }
}

/// Named parameter values.
pub type Bindings = BTreeMap<String, f64>;

/// Options shared by every element application.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimOptions {
    /// Keep the annihilation part of pair sources. Switching it off drops
    /// stimulated-emission corrections; the leading order is unaffected.
    pub annihilation: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { annihilation: true }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Element {
    /// Parametric pair source emitting into two distinct paths.
    Crystal {
        a: Path,
        b: Path,
        mode_a: InternalMode,
        mode_b: InternalMode,
        gain: Expr,
        phase: Expr,
    },
    /// Idealized N-photon emitter: one photon into each listed path per
    /// emission event, all events sharing a single amplitude.
    Source {
        paths: Vec<Path>,
        modes: Vec<InternalMode>,
        gain: Expr,
        phase: Expr,
    },
    /// Symmetric 50/50 beam splitter. `in_b` additionally picks up `phase`.
    BeamSplitter {
        in_a: Path,
        in_b: Path,
        out_a: Path,
        out_b: Path,
        phase: Expr,
    },
    /// Polarizing beam splitter: H transmits, V reflects.
    PolarizingBeamSplitter {
        in_a: Path,
        in_b: Path,
        out_a: Path,
        out_b: Path,
    },
    /// Phase shifter on one path.
    Phase { path: Path, phase: Expr },
    /// Orbital-angular-momentum shifter (mode hologram) on one path.
    OamShift { path: Path, delta: i32 },
    /// Polarization rotator by an angle from H towards V.
    Rotate { path: Path, angle: Expr },
    /// Sets the emission polarization of later crystals on this path.
    /// Folded away when a setup is built; it never acts on a state.
    PolSet { path: Path, pol: Polarization },
    /// Partial transmission T with the reflected part routed to a fresh
    /// loss path. A global phase `phase` applies to both arms.
    Attenuator {
        path: Path,
        transmission: Expr,
        phase: Expr,
        loss: Path,
    },
    /// Path identity: relabels `from` as `to`, merging the modes.
    Identify { from: Path, to: Path },
}

impl Element {
    pub fn crystal(a: impl Into<Path>, b: impl Into<Path>) -> Self {
        Element::Crystal {
            a: a.into(),
            b: b.into(),
            mode_a: InternalMode::plain(),
            mode_b: InternalMode::plain(),
            gain: Expr::Const(1.0),
            phase: Expr::Const(0.0),
        }
    }

    pub fn beam_splitter(
        in_a: impl Into<Path>,
        in_b: impl Into<Path>,
        out_a: impl Into<Path>,
        out_b: impl Into<Path>,
    ) -> Self {
        Element::BeamSplitter {
            in_a: in_a.into(),
            in_b: in_b.into(),
            out_a: out_a.into(),
            out_b: out_b.into(),
            phase: Expr::Const(0.0),
        }
    }

    pub fn phase(path: impl Into<Path>, phase: impl Into<Expr>) -> Self {
        Element::Phase {
            path: path.into(),
            phase: phase.into(),
        }
    }

    pub fn identify(from: impl Into<Path>, to: impl Into<Path>) -> Self {
        Element::Identify {
            from: from.into(),
            to: to.into(),
        }
    }

    pub fn attenuator(path: impl Into<Path>, transmission: impl Into<Expr>) -> Self {
        Element::Attenuator {
            path: path.into(),
            transmission: transmission.into(),
            phase: Expr::Const(0.0),
            loss: Path::loss(0),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Element::Crystal { .. } => "crystal",
            Element::Source { .. } => "source",
            Element::BeamSplitter { .. } => "beam splitter",
            Element::PolarizingBeamSplitter { .. } => "polarizing beam splitter",
            Element::Phase { .. } => "phase shifter",
            Element::OamShift { .. } => "mode shifter",
            Element::Rotate { .. } => "rotator",
            Element::PolSet { .. } => "polarization preset",
            Element::Attenuator { .. } => "attenuator",
            Element::Identify { .. } => "path identification",
        }
    }

    /// Parameter names referenced by this element.
    pub fn param_names(&self) -> Vec<&str> {
        let exprs: Vec<&Expr> = match self {
            Element::Crystal { gain, phase, .. } => vec![gain, phase],
            Element::Source { gain, phase, .. } => vec![gain, phase],
            Element::BeamSplitter { phase, .. } => vec![phase],
            Element::Phase { phase, .. } => vec![phase],
            Element::Rotate { angle, .. } => vec![angle],
            Element::Attenuator {
                transmission,
                phase,
                ..
            } => vec![transmission, phase],
            _ => vec![],
        };
        exprs.iter().filter_map(|e| e.param_name()).collect()
    }

    /// Paths this element reads or writes.
    pub fn paths(&self) -> Vec<&Path> {
        match self {
            Element::Crystal { a, b, .. } => vec![a, b],
            Element::Source { paths, .. } => paths.iter().collect(),
            Element::BeamSplitter {
                in_a,
                in_b,
                out_a,
                out_b,
                ..
            }
            | Element::PolarizingBeamSplitter {
                in_a,
                in_b,
                out_a,
                out_b,
            } => vec![in_a, in_b, out_a, out_b],
            Element::Phase { path, .. }
            | Element::OamShift { path, .. }
            | Element::Rotate { path, .. }
            | Element::PolSet { path, .. } => vec![path],
            Element::Attenuator { path, loss, .. } => vec![path, loss],
            Element::Identify { from, to } => vec![from, to],
        }
    }

    /// Applies the element with default options.
    pub fn apply(&self, poly: &OperatorPolynomial, bindings: &Bindings) -> Result<OperatorPolynomial> {
        self.apply_with(poly, bindings, &SimOptions::default())
    }

    pub fn apply_with(
        &self,
        poly: &OperatorPolynomial,
        bindings: &Bindings,
        opts: &SimOptions,
    ) -> Result<OperatorPolynomial> {
        match self {
            Element::Crystal {
                a,
                b,
                mode_a,
                mode_b,
                gain,
                phase,
            } => apply_crystal(poly, a, b, mode_a, mode_b, gain, phase, bindings, opts),
            Element::Source {
                paths,
                modes,
                gain,
                phase,
            } => apply_source(poly, paths, modes, gain, phase, bindings, opts),
            Element::BeamSplitter {
                in_a,
                in_b,
                out_a,
                out_b,
                phase,
            } => apply_beam_splitter(poly, in_a, in_b, out_a, out_b, phase, bindings),
            Element::PolarizingBeamSplitter {
                in_a,
                in_b,
                out_a,
                out_b,
            } => apply_polarizing_beam_splitter(poly, in_a, in_b, out_a, out_b),
            Element::Phase { path, phase } => apply_phase(poly, path, phase, bindings),
            Element::OamShift { path, delta } => apply_oam_shift(poly, path, *delta),
            Element::Rotate { path, angle } => apply_rotate(poly, path, angle, bindings),
            Element::PolSet { .. } => Err(Error::PolSetAtRuntime),
            Element::Attenuator {
                path,
                transmission,
                phase,
                loss,
            } => apply_attenuator(poly, path, transmission, phase, loss, bindings),
            Element::Identify { from, to } => apply_identify(poly, from, to),
        }
    }
}

/// Rewrites every creation operator through `rule`: `None` keeps the label,
/// `Some(list)` replaces it by a linear combination.
fn substitute<F>(poly: &OperatorPolynomial, rule: F) -> Result<OperatorPolynomial>
where
    F: Fn(&ModeLabel) -> Result<Option<Vec<(ModeLabel, C64)>>>,
{
    let mut out = OperatorPolynomial::zero(poly.truncation());
    for (term, &c) in poly.terms() {
        let mut acc: Vec<(Vec<ModeLabel>, C64)> =
            vec![(Vec::with_capacity(term.mono.degree() as usize), c)];
        for label in term.mono.labels() {
            match rule(label)? {
                None => {
                    for (m, _) in acc.iter_mut() {
                        m.push(label.clone());
                    }
                }
                Some(images) => {
                    let mut next = Vec::with_capacity(acc.len() * images.len());
                    for (m, amp) in &acc {
                        for (l, w) in &images {
                            let mut m2 = m.clone();
                            m2.push(l.clone());
                            next.push((m2, amp * w));
                        }
                    }
                    acc = next;
                }
            }
        }
        for (labels, coeff) in acc {
            out.add_term(Term::new(term.order, Monomial::new(labels)), coeff);
        }
    }
    Ok(out)
}

/// Expands an emission mode: an angle label becomes cos on H plus sin on V;
/// anything else emits as given.
pub(crate) fn expand_emission(path: &Path, mode: &InternalMode) -> Vec<(ModeLabel, f64)> {
    if let Some(Polarization::Angle(g)) = mode.pol {
        let h = InternalMode {
            pol: Some(Polarization::H),
            ..mode.clone()
        };
        let v = InternalMode {
            pol: Some(Polarization::V),
            ..mode.clone()
        };
        vec![
            (ModeLabel::new(path.clone(), h), g.value().cos()),
            (ModeLabel::new(path.clone(), v), g.value().sin()),
        ]
    } else {
        vec![(ModeLabel::new(path.clone(), mode.clone()), 1.0)]
    }
}

/// One application of `w A† - conj(w) A` where `A†` creates one photon in
/// every emission slot. Raises the formal order by one.
fn emission_step(
    poly: &OperatorPolynomial,
    emissions: &[Vec<(ModeLabel, f64)>],
    w: C64,
    opts: &SimOptions,
) -> OperatorPolynomial {
    let mut out = OperatorPolynomial::zero(poly.truncation());
    // Cartesian product over the emission slots.
    let mut combos: Vec<(Vec<ModeLabel>, f64)> = vec![(Vec::new(), 1.0)];
    for slot in emissions {
        let mut next = Vec::with_capacity(combos.len() * slot.len());
        for (labels, amp) in &combos {
            for (l, c) in slot {
                let mut ls = labels.clone();
                ls.push(l.clone());
                next.push((ls, amp * c));
            }
        }
        combos = next;
    }
    for (term, &c) in poly.terms() {
        if term.order + 1 > poly.truncation() {
            continue;
        }
        for (labels, amp) in &combos {
            // Creation part.
            let mut created = term.mono.clone();
            for l in labels {
                created = created.with(l.clone());
            }
            out.add_term(Term::new(term.order + 1, created), c * w * *amp);

            // Annihilation part: every slot must find a photon to remove.
            if !opts.annihilation {
                continue;
            }
            let mut removed = Some(term.mono.clone());
            let mut factor = 1.0f64;
            for l in labels {
                removed = removed.and_then(|m| {
                    let n = m.count(l);
                    if n == 0 {
                        None
                    } else {
                        factor *= n as f64;
                        m.without(l)
                    }
                });
            }
            if let Some(m) = removed {
                out.add_term(
                    Term::new(term.order + 1, m),
                    -c * w.conj() * *amp * factor,
                );
            }
        }
    }
    out
}

/// Truncated exponential series of the emission generator.
fn emission_series(
    poly: &OperatorPolynomial,
    emissions: &[Vec<(ModeLabel, f64)>],
    w: C64,
    opts: &SimOptions,
) -> OperatorPolynomial {
    let mut result = poly.clone();
    let mut power = poly.clone();
    let mut factorial = 1.0f64;
    for j in 1..=poly.truncation() {
        power = emission_step(&power, emissions, w, opts);
        if power.is_empty() {
            break;
        }
        factorial *= j as f64;
        result.add_scaled(&power, C64::new(1.0 / factorial, 0.0));
    }
    result
}

#[allow(clippy::too_many_arguments)]
pub fn apply_crystal(
    poly: &OperatorPolynomial,
    a: &Path,
    b: &Path,
    mode_a: &InternalMode,
    mode_b: &InternalMode,
    gain: &Expr,
    phase: &Expr,
    bindings: &Bindings,
    opts: &SimOptions,
) -> Result<OperatorPolynomial> {
    if a == b {
        return Err(Error::CrystalSamePath(a.clone()));
    }
    let w = C64::from_polar(gain.eval(bindings)?, phase.eval(bindings)?);
    let emissions = [expand_emission(a, mode_a), expand_emission(b, mode_b)];
    Ok(emission_series(poly, &emissions, w, opts))
}

pub fn apply_source(
    poly: &OperatorPolynomial,
    paths: &[Path],
    modes: &[InternalMode],
    gain: &Expr,
    phase: &Expr,
    bindings: &Bindings,
    opts: &SimOptions,
) -> Result<OperatorPolynomial> {
    if paths.is_empty() || modes.len() != paths.len() {
        return Err(Error::SourcePathsClash);
    }
    for (i, p) in paths.iter().enumerate() {
        if paths[i + 1..].contains(p) {
            return Err(Error::SourcePathsClash);
        }
    }
    let w = C64::from_polar(gain.eval(bindings)?, phase.eval(bindings)?);
    let emissions: Vec<Vec<(ModeLabel, f64)>> = paths
        .iter()
        .zip(modes)
        .map(|(p, m)| expand_emission(p, m))
        .collect();
    Ok(emission_series(poly, &emissions, w, opts))
}

pub fn apply_beam_splitter(
    poly: &OperatorPolynomial,
    in_a: &Path,
    in_b: &Path,
    out_a: &Path,
    out_b: &Path,
    phase: &Expr,
    bindings: &Bindings,
) -> Result<OperatorPolynomial> {
    let ports = [in_a, in_b, out_a, out_b];
    for (i, p) in ports.iter().enumerate() {
        if ports[i + 1..].contains(p) {
            return Err(Error::PortClash);
        }
    }
    let r = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let i_r = C64::new(0.0, std::f64::consts::FRAC_1_SQRT_2);
    let ph = C64::from_polar(1.0, phase.eval(bindings)?);
    substitute(poly, |label| {
        if &label.path == in_a {
            Ok(Some(vec![
                (ModeLabel::new(out_a.clone(), label.mode.clone()), r),
                (ModeLabel::new(out_b.clone(), label.mode.clone()), i_r),
            ]))
        } else if &label.path == in_b {
            Ok(Some(vec![
                (ModeLabel::new(out_b.clone(), label.mode.clone()), ph * r),
                (ModeLabel::new(out_a.clone(), label.mode.clone()), ph * i_r),
            ]))
        } else {
            Ok(None)
        }
    })
}

pub fn apply_polarizing_beam_splitter(
    poly: &OperatorPolynomial,
    in_a: &Path,
    in_b: &Path,
    out_a: &Path,
    out_b: &Path,
) -> Result<OperatorPolynomial> {
    let ports = [in_a, in_b, out_a, out_b];
    for (i, p) in ports.iter().enumerate() {
        if ports[i + 1..].contains(p) {
            return Err(Error::PortClash);
        }
    }
    let one = C64::new(1.0, 0.0);
    let route = |label: &ModeLabel, transmit: &Path, reflect: &Path| {
        match label.mode.pol {
            Some(Polarization::H) => Ok(Some(vec![(
                ModeLabel::new(transmit.clone(), label.mode.clone()),
                one,
            )])),
            Some(Polarization::V) => Ok(Some(vec![(
                ModeLabel::new(reflect.clone(), label.mode.clone()),
                one,
            )])),
            _ => Err(Error::MissingPolarization(
                label.path.clone(),
                "polarizing beam splitter",
            )),
        }
    };
    substitute(poly, |label| {
        if &label.path == in_a {
            route(label, out_a, out_b)
        } else if &label.path == in_b {
            route(label, out_b, out_a)
        } else {
            Ok(None)
        }
    })
}

pub fn apply_phase(
    poly: &OperatorPolynomial,
    path: &Path,
    phase: &Expr,
    bindings: &Bindings,
) -> Result<OperatorPolynomial> {
    let ph = C64::from_polar(1.0, phase.eval(bindings)?);
    substitute(poly, |label| {
        if &label.path == path {
            Ok(Some(vec![(label.clone(), ph)]))
        } else {
            Ok(None)
        }
    })
}

pub fn apply_oam_shift(
    poly: &OperatorPolynomial,
    path: &Path,
    delta: i32,
) -> Result<OperatorPolynomial> {
    substitute(poly, |label| {
        if &label.path == path {
            let mode = InternalMode {
                oam: label.mode.oam + delta,
                ..label.mode.clone()
            };
            Ok(Some(vec![(
                ModeLabel::new(label.path.clone(), mode),
                C64::new(1.0, 0.0),
            )]))
        } else {
            Ok(None)
        }
    })
}

pub fn apply_rotate(
    poly: &OperatorPolynomial,
    path: &Path,
    angle: &Expr,
    bindings: &Bindings,
) -> Result<OperatorPolynomial> {
    let g = angle.eval(bindings)?;
    let (sin, cos) = g.sin_cos();
    substitute(poly, |label| {
        if &label.path != path {
            return Ok(None);
        }
        let with_pol = |p: Polarization| InternalMode {
            pol: Some(p),
            ..label.mode.clone()
        };
        match label.mode.pol {
            Some(Polarization::H) => Ok(Some(vec![
                (
                    ModeLabel::new(path.clone(), with_pol(Polarization::H)),
                    C64::new(cos, 0.0),
                ),
                (
                    ModeLabel::new(path.clone(), with_pol(Polarization::V)),
                    C64::new(sin, 0.0),
                ),
            ])),
            Some(Polarization::V) => Ok(Some(vec![
                (
                    ModeLabel::new(path.clone(), with_pol(Polarization::H)),
                    C64::new(-sin, 0.0),
                ),
                (
                    ModeLabel::new(path.clone(), with_pol(Polarization::V)),
                    C64::new(cos, 0.0),
                ),
            ])),
            _ => Err(Error::MissingPolarization(path.clone(), "rotator")),
        }
    })
}

pub fn apply_attenuator(
    poly: &OperatorPolynomial,
    path: &Path,
    transmission: &Expr,
    phase: &Expr,
    loss: &Path,
    bindings: &Bindings,
) -> Result<OperatorPolynomial> {
    let t = transmission.eval(bindings)?;
    if !(0.0..=1.0).contains(&t) || !t.is_finite() {
        return Err(Error::BadTransmission(t));
    }
    let ph = C64::from_polar(1.0, phase.eval(bindings)?);
    let refl = (1.0 - t * t).max(0.0).sqrt();
    substitute(poly, |label| {
        if &label.path == path {
            Ok(Some(vec![
                (label.clone(), ph * t),
                (
                    ModeLabel::new(loss.clone(), label.mode.clone()),
                    ph * refl,
                ),
            ]))
        } else {
            Ok(None)
        }
    })
}

pub fn apply_identify(
    poly: &OperatorPolynomial,
    from: &Path,
    to: &Path,
) -> Result<OperatorPolynomial> {
    if from.is_loss() || to.is_loss() {
        let p = if from.is_loss() { from } else { to };
        return Err(Error::LossPath(p.clone(), "path identification"));
    }
    substitute(poly, |label| {
        if &label.path == from {
            Ok(Some(vec![(
                ModeLabel::new(to.clone(), label.mode.clone()),
                C64::new(1.0, 0.0),
            )]))
        } else {
            Ok(None)
        }
    })
}

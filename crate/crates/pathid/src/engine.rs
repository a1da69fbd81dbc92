//! Experiment execution: ordered element sequences applied to the vacuum,
//! post-selection on detection patterns, count rates and parameter sweeps.
//!
//! Rates are reported at the leading nonvanishing formal order and are
//! proportional to g^(2*order) in the common gain; absolute rates are not
//! modelled.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use crate::element::{Bindings, Element, Expr, SimOptions};
use crate::fock::{
    FockState, InternalMode, ModeLabel, OperatorPolynomial, Path, Polarization, PureState,
};
use crate::{C64, Error, Result, ORDER_EPS, TOL};

/// Ordered experiment description.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSetup {
    pub elements: Vec<Element>,
    pub detectors: Vec<Path>,
    /// Explicit truncation; derived from the detection pattern when absent.
    pub truncation: Option<u32>,
    /// Default parameter values, overridable per run.
    pub defaults: Bindings,
    pub options: SimOptions,
}

impl ExperimentSetup {
    /// Builds a setup and mints one fresh loss path per attenuator, in
    /// element order.
    pub fn new(mut elements: Vec<Element>, detectors: Vec<Path>) -> Self {
        let mut counter = 0usize;
        for el in &mut elements {
            if let Element::Attenuator { loss, .. } = el {
                counter += 1;
                *loss = Path::loss(counter);
            }
        }
        ExperimentSetup {
            elements,
            detectors,
            truncation: None,
            defaults: Bindings::new(),
            options: SimOptions::default(),
        }
    }

    pub fn with_truncation(mut self, k: u32) -> Self {
        self.truncation = Some(k);
        self
    }

    pub fn with_defaults(mut self, defaults: Bindings) -> Self {
        self.defaults = defaults;
        self
    }

    pub fn with_options(mut self, options: SimOptions) -> Self {
        self.options = options;
        self
    }

    /// All parameter names known to the setup.
    pub fn param_names(&self) -> BTreeSet<String> {
        let mut names: BTreeSet<String> = self
            .elements
            .iter()
            .flat_map(|e| e.param_names().into_iter().map(str::to_string))
            .collect();
        names.extend(self.defaults.keys().cloned());
        names
    }

    /// Paths appearing anywhere in the setup, loss modes excluded.
    pub fn user_paths(&self) -> BTreeSet<Path> {
        let mut paths: BTreeSet<Path> = self
            .elements
            .iter()
            .flat_map(|e| e.paths().into_iter().cloned())
            .filter(|p| !p.is_loss())
            .collect();
        paths.extend(self.detectors.iter().cloned());
        paths
    }

    pub fn validate(&self) -> Result<()> {
        for (i, d) in self.detectors.iter().enumerate() {
            if d.is_loss() {
                return Err(Error::LossPath(d.clone(), "detector list"));
            }
            if self.detectors[i + 1..].contains(d) {
                return Err(Error::invalid(format!("detector {d} listed twice")));
            }
        }
        for el in &self.elements {
            let user_paths: Vec<&Path> = match el {
                // The minted loss path is the only legitimate loss mode.
                Element::Attenuator { path, .. } => vec![path],
                other => other.paths(),
            };
            for p in user_paths {
                if p.is_loss() {
                    return Err(Error::LossPath(p.clone(), "element input"));
                }
            }
        }
        // An identification must come before anything that feeds its target.
        for (i, el) in self.elements.iter().enumerate() {
            if let Element::Identify { to, .. } = el {
                for earlier in &self.elements[..i] {
                    if earlier.paths().contains(&to) {
                        return Err(Error::invalid(format!(
                            "path {to} is used before being identified into"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Truncation used for a run: explicit if set, otherwise half the
    /// requested photon count plus one to expose leading corrections.
    pub fn effective_truncation(&self, pattern: Option<&DetectionPattern>) -> u32 {
        if let Some(k) = self.truncation {
            return k;
        }
        let photons = pattern
            .map(|p| p.total())
            .unwrap_or(self.detectors.len() as u32);
        photons / 2 + 1
    }

    /// Defaults overlaid with per-run overrides; overrides must name known
    /// parameters.
    pub fn bound(&self, overrides: &Bindings) -> Result<Bindings> {
        let known = self.param_names();
        for name in overrides.keys() {
            if !known.contains(name) {
                return Err(Error::UnknownParam(name.clone()));
            }
        }
        let mut bindings = self.defaults.clone();
        bindings.extend(overrides.iter().map(|(k, v)| (k.clone(), *v)));
        Ok(bindings)
    }

    /// Folds polarization presets into the emission modes of later crystals
    /// and emitters, and drops the preset markers.
    pub(crate) fn normalized_elements(&self) -> Vec<Element> {
        let mut presets: BTreeMap<Path, Polarization> = BTreeMap::new();
        let mut out = Vec::with_capacity(self.elements.len());
        for el in &self.elements {
            match el {
                Element::PolSet { path, pol } => {
                    presets.insert(path.clone(), *pol);
                }
                Element::Crystal {
                    a,
                    b,
                    mode_a,
                    mode_b,
                    gain,
                    phase,
                } => {
                    let fix = |p: &Path, m: &InternalMode| match presets.get(p) {
                        Some(pol) => InternalMode {
                            pol: Some(*pol),
                            ..m.clone()
                        },
                        None => m.clone(),
                    };
                    out.push(Element::Crystal {
                        a: a.clone(),
                        b: b.clone(),
                        mode_a: fix(a, mode_a),
                        mode_b: fix(b, mode_b),
                        gain: gain.clone(),
                        phase: phase.clone(),
                    });
                }
                Element::Source {
                    paths,
                    modes,
                    gain,
                    phase,
                } => {
                    let modes = paths
                        .iter()
                        .zip(modes)
                        .map(|(p, m)| match presets.get(p) {
                            Some(pol) => InternalMode {
                                pol: Some(*pol),
                                ..m.clone()
                            },
                            None => m.clone(),
                        })
                        .collect();
                    out.push(Element::Source {
                        paths: paths.clone(),
                        modes,
                        gain: gain.clone(),
                        phase: phase.clone(),
                    });
                }
                other => out.push(other.clone()),
            }
        }
        out
    }

    pub fn simulate(&self, overrides: &Bindings) -> Result<PureState> {
        self.simulate_for(overrides, None)
    }

    pub fn simulate_for(
        &self,
        overrides: &Bindings,
        pattern: Option<&DetectionPattern>,
    ) -> Result<PureState> {
        self.validate()?;
        self.simulate_at(overrides, self.effective_truncation(pattern))
    }

    /// Runs the element sequence at an explicit truncation. Deterministic:
    /// elements apply strictly in order.
    pub fn simulate_at(&self, overrides: &Bindings, truncation: u32) -> Result<PureState> {
        let bindings = self.bound(overrides)?;
        let mut poly = OperatorPolynomial::one(truncation);
        for el in self.normalized_elements() {
            poly = el.apply_with(&poly, &bindings, &self.options)?;
        }
        Ok(PureState { poly })
    }
}

/// Requirement on detected photon numbers. Paths not listed are
/// unconstrained. Mode-blind entries count every internal mode on the path;
/// mode-resolved entries count one exact mode.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectionPattern {
    pub entries: Vec<PatternEntry>,
    pub mode_blind: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatternEntry {
    pub path: Path,
    pub count: u32,
    pub mode: Option<InternalMode>,
}

impl DetectionPattern {
    /// One photon in each listed path, mode-blind.
    pub fn coincidence<P: Clone + Into<Path>>(paths: &[P]) -> Self {
        DetectionPattern {
            entries: paths
                .iter()
                .map(|p| PatternEntry {
                    path: p.clone().into(),
                    count: 1,
                    mode: None,
                })
                .collect(),
            mode_blind: true,
        }
    }

    pub fn single(path: impl Into<Path>) -> Self {
        DetectionPattern::coincidence(&[path.into()])
    }

    pub fn total(&self) -> u32 {
        self.entries.iter().map(|e| e.count).sum()
    }

    pub fn matches(&self, f: &FockState) -> bool {
        self.entries.iter().all(|e| {
            let n = match (&e.mode, self.mode_blind) {
                (Some(m), false) => f.occupation(&ModeLabel::new(e.path.clone(), m.clone())),
                _ => f.photons_on(&e.path),
            };
            n == e.count
        })
    }
}

/// Outcome of conditioning on a detection pattern. A pattern with no
/// matching component is flagged by `order: None`, not an error.
#[derive(Clone, Debug)]
pub struct PostSelection {
    /// Renormalized projection at the leading order; zero if degenerate.
    pub state: PureState,
    /// Squared norm of the leading-order projection of the (unnormalized)
    /// input state.
    pub probability: f64,
    pub order: Option<u32>,
}

/// Projects onto Fock components satisfying `pattern` and keeps the leading
/// nonvanishing formal order: the smallest degree with any amplitude above
/// the order threshold.
pub fn postselect(state: &PureState, pattern: &DetectionPattern) -> PostSelection {
    let truncation = state.poly.truncation();
    let mut projected = OperatorPolynomial::zero(truncation);
    for (term, &c) in state.poly.terms() {
        if pattern.matches(&term.mono.to_fock()) {
            projected.add_term(term.clone(), c);
        }
    }
    let by_order = projected.amplitudes_by_order();
    let leading = by_order
        .iter()
        .find(|(_, amps)| amps.values().any(|a| a.norm() > ORDER_EPS))
        .map(|(o, _)| *o);
    match leading {
        None => PostSelection {
            state: PureState {
                poly: OperatorPolynomial::zero(truncation),
            },
            probability: 0.0,
            order: None,
        },
        Some(order) => {
            let mut at = projected.at_order(order);
            let prob = at.norm_sq();
            at.scale(C64::new(1.0 / prob.sqrt(), 0.0));
            PostSelection {
                state: PureState { poly: at },
                probability: prob,
                order: Some(order),
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CountRate {
    /// Squared norm of the pattern projection at the leading order,
    /// proportional to g^(2*order).
    pub rate: f64,
    pub order: Option<u32>,
}

pub fn count_rate(
    setup: &ExperimentSetup,
    pattern: &DetectionPattern,
    overrides: &Bindings,
) -> Result<CountRate> {
    setup.validate()?;
    let known = setup.user_paths();
    for e in &pattern.entries {
        if !known.contains(&e.path) {
            return Err(Error::invalid(format!(
                "pattern path {} does not occur in the setup",
                e.path
            )));
        }
    }
    let state = setup.simulate_for(overrides, Some(pattern))?;
    let ps = postselect(&state, pattern);
    Ok(CountRate {
        rate: ps.probability,
        order: ps.order,
    })
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub param: String,
    pub values: Vec<f64>,
    /// Rate per grid point, all taken at the shared leading order.
    pub rates: Vec<f64>,
    /// Leading order: smallest formal degree at which any grid point has a
    /// nonvanishing rate.
    pub order: u32,
    pub truncation: u32,
}

/// Evaluates the pattern rate across a parameter grid. All points report the
/// same formal order so exact zeros stay visible; a sweep with no signal at
/// any order up to the truncation is degenerate.
pub fn sweep(
    setup: &ExperimentSetup,
    param: &str,
    values: &[f64],
    pattern: &DetectionPattern,
    overrides: &Bindings,
) -> Result<SweepResult> {
    setup.validate()?;
    if values.is_empty() {
        return Err(Error::invalid("sweep grid is empty"));
    }
    if !setup.param_names().contains(param) {
        return Err(Error::UnknownParam(param.to_string()));
    }
    let truncation = setup.effective_truncation(Some(pattern));

    // Per point: norm at every populated order plus the orders that pass the
    // significance threshold. Grid points evaluate independently; collect
    // preserves index order, so the result is identical to a serial run.
    type PointData = (BTreeMap<u32, f64>, BTreeSet<u32>);
    let per_point: Result<Vec<PointData>> = values
        .par_iter()
        .map(|&v| {
            let mut overlay = overrides.clone();
            overlay.insert(param.to_string(), v);
            let state = setup.simulate_at(&overlay, truncation)?;
            let mut projected = OperatorPolynomial::zero(truncation);
            for (term, &c) in state.poly.terms() {
                if pattern.matches(&term.mono.to_fock()) {
                    projected.add_term(term.clone(), c);
                }
            }
            let mut norms = BTreeMap::new();
            let mut significant = BTreeSet::new();
            for (order, amps) in projected.amplitudes_by_order() {
                norms.insert(order, amps.values().map(|a| a.norm_sqr()).sum());
                if amps.values().any(|a| a.norm() > ORDER_EPS) {
                    significant.insert(order);
                }
            }
            Ok((norms, significant))
        })
        .collect();
    let per_point = per_point?;

    let order = per_point
        .iter()
        .filter_map(|(_, sig)| sig.first().copied())
        .min()
        .ok_or(Error::DegenerateSweep(truncation))?;
    let rates = per_point
        .iter()
        .map(|(norms, _)| norms.get(&order).copied().unwrap_or(0.0))
        .collect();
    Ok(SweepResult {
        param: param.to_string(),
        values: values.to_vec(),
        rates,
        order,
        truncation,
    })
}

/// Visibility and which-way distinguishability for a photon split across two
/// paths. Everything else, internal modes included, counts as environment.
#[derive(Clone, Copy, Debug)]
pub struct WhichWay {
    pub distinguishability: f64,
    pub visibility: f64,
}

pub fn which_way(state: &PureState, a: &Path, b: &Path) -> Result<WhichWay> {
    let keep: BTreeSet<Path> = [a.clone(), b.clone()].into();
    let mut amp_a: BTreeMap<(InternalMode, FockState), C64> = BTreeMap::new();
    let mut amp_b: BTreeMap<(InternalMode, FockState), C64> = BTreeMap::new();
    for (f, amp) in state.fock_amplitudes() {
        let (on_ab, rest) = f.split(&keep);
        if on_ab.total() != 1 {
            continue;
        }
        let (label, _) = on_ab.iter().next().expect("one photon present");
        let key = (label.mode.clone(), rest);
        if &label.path == a {
            *amp_a.entry(key).or_default() += amp;
        } else {
            *amp_b.entry(key).or_default() += amp;
        }
    }
    let pa: f64 = amp_a.values().map(|x| x.norm_sqr()).sum();
    let pb: f64 = amp_b.values().map(|x| x.norm_sqr()).sum();
    let total = pa + pb;
    if total <= TOL {
        return Err(Error::invalid(format!(
            "no single-photon component across {a} and {b}"
        )));
    }
    let mut overlap = C64::default();
    for (key, x) in &amp_a {
        if let Some(y) = amp_b.get(key) {
            overlap += x.conj() * y;
        }
    }
    let visibility = 2.0 * overlap.norm() / total;
    let distinguishability =
        ((total * total - 4.0 * overlap.norm_sqr()).max(0.0)).sqrt() / total;
    Ok(WhichWay {
        distinguishability,
        visibility,
    })
}

/// Degree of polarization of the single-photon component on one path, from
/// the 2x2 coherency matrix of the reduced state.
pub fn polarization_degree(state: &PureState, path: &Path) -> Result<f64> {
    let ps = postselect(state, &DetectionPattern::single(path.clone()));
    if ps.order.is_none() {
        return Err(Error::DegenerateSelection(state.poly.truncation()));
    }
    let keep: BTreeSet<Path> = [path.clone()].into();
    let rho = ps.state.partial_trace(&keep)?;
    let h = FockState::single(ModeLabel::pol(path.clone(), Polarization::H));
    let v = FockState::single(ModeLabel::pol(path.clone(), Polarization::V));
    let ih = rho.index_of(&h);
    let iv = rho.index_of(&v);
    let j_hh = ih.map(|i| rho.entry(i, i).re).unwrap_or(0.0);
    let j_vv = iv.map(|i| rho.entry(i, i).re).unwrap_or(0.0);
    let j_hv = match (ih, iv) {
        (Some(i), Some(j)) => rho.entry(i, j),
        _ => C64::default(),
    };
    let trace = j_hh + j_vv;
    if trace <= TOL {
        return Err(Error::invalid(format!(
            "no polarized single-photon component on {path}"
        )));
    }
    Ok(((j_hh - j_vv).powi(2) + 4.0 * j_hv.norm_sqr()).sqrt() / trace)
}

/// Interference figures for the three-crystal cascade: two signal paths fed
/// by three pair sources sharing idler paths.
#[derive(Clone, Copy, Debug)]
pub struct ThreeCrystalReport {
    /// Singles fringe visibility between the two signal paths.
    pub singles_visibility: f64,
    /// Which-way information accompanying the singles fringe.
    pub singles_distinguishability: f64,
    /// Visibility of the signal-idler coincidence fringe over the full
    /// two-phase plane (signal-arm and idler-arm phases scanned jointly).
    pub heralded_visibility: f64,
}

fn three_crystal_elements(g1: f64, g2: f64, g3: f64, with_splitters: bool) -> Vec<Element> {
    let crystal = |a: &str, b: &str, g: f64| Element::Crystal {
        a: a.into(),
        b: b.into(),
        mode_a: InternalMode::plain(),
        mode_b: InternalMode::plain(),
        gain: Expr::Const(g),
        phase: Expr::Const(0.0),
    };
    let mut elements = vec![
        crystal("s1", "i1", g1),
        Element::identify("s1", "s3"),
        Element::identify("i1", "i2"),
        crystal("s2", "i2", g2),
        Element::phase("i2", "phi_i"),
        crystal("s3", "i3", g3),
        Element::phase("s3", "phi_s"),
    ];
    if with_splitters {
        elements.push(Element::beam_splitter("s3", "s2", "A", "A'"));
        elements.push(Element::beam_splitter("i2", "i3", "D", "D'"));
    }
    elements
}

/// Singles and heralded visibilities of the three-crystal cascade.
///
/// The singles figure comes from the which-way overlap of the two signal
/// paths. The heralded figure treats the two arm phases as independent
/// knobs: the three coincidence amplitudes are separated by probing the
/// fringe at four phase settings, and the visibility is taken over the full
/// reachable fringe, so it reports 1 exactly when the amplitude magnitudes
/// can close a triangle.
pub fn three_crystal_visibility(g1: f64, g2: f64, g3: f64) -> Result<ThreeCrystalReport> {
    for g in [g1, g2, g3] {
        if !(g.is_finite() && g >= 0.0) {
            return Err(Error::invalid(format!("crystal gain {g} must be >= 0")));
        }
    }
    let zero_phases = || {
        let mut b = Bindings::new();
        b.insert("phi_s".to_string(), 0.0);
        b.insert("phi_i".to_string(), 0.0);
        b
    };

    let bare = ExperimentSetup::new(
        three_crystal_elements(g1, g2, g3, false),
        vec![Path::new("s2"), Path::new("s3")],
    )
    .with_truncation(1);
    let state = bare.simulate_at(&zero_phases(), 1)?;
    let ww = which_way(&state, &Path::new("s2"), &Path::new("s3"))?;

    let full = ExperimentSetup::new(
        three_crystal_elements(g1, g2, g3, true),
        vec![Path::new("A"), Path::new("D")],
    )
    .with_truncation(1);
    let coincidence = FockState::vacuum()
        .with(ModeLabel::plain("A"), 1)
        .with(ModeLabel::plain("D"), 1);
    let amp_at = |phi_s: f64, phi_i: f64| -> Result<C64> {
        let mut b = Bindings::new();
        b.insert("phi_s".to_string(), phi_s);
        b.insert("phi_i".to_string(), phi_i);
        let st = full.simulate_at(&b, 1)?;
        Ok(st
            .fock_amplitudes()
            .get(&coincidence)
            .copied()
            .unwrap_or_default())
    };
    use std::f64::consts::PI;
    let z00 = amp_at(0.0, 0.0)?;
    let z10 = amp_at(PI, 0.0)?;
    let z01 = amp_at(0.0, PI)?;
    let z11 = amp_at(PI, PI)?;
    // z(phi_s, phi_i) = c1 e^{i(phi_s+phi_i)} + c2 e^{i phi_i} + c3 e^{i phi_s}.
    let c2 = (z00 + z10) / 2.0;
    let c3 = (z00 + z01) / 2.0;
    let c1 = z00 - c2 - c3;
    let scale = z00.norm().max(1.0);
    if (z11 - (c1 - c2 - c3)).norm() > 1e-9 * scale {
        return Err(Error::invalid(
            "coincidence fringe is not a three-term two-phase sinusoid",
        ));
    }
    let mags = [c1.norm(), c2.norm(), c3.norm()];
    let sum: f64 = mags.iter().sum();
    if sum <= TOL {
        return Err(Error::invalid("coincidence amplitude vanishes identically"));
    }
    let max = mags.iter().cloned().fold(0.0, f64::max);
    let r_max = sum * sum;
    let r_min = (2.0 * max - sum).max(0.0).powi(2);
    Ok(ThreeCrystalReport {
        singles_visibility: ww.visibility,
        singles_distinguishability: ww.distinguishability,
        heralded_visibility: (r_max - r_min) / (r_max + r_min),
    })
}

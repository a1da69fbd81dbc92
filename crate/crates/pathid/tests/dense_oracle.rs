//! Cross-checks the engine against a from-scratch dense simulator.
//!
//! The oracle tracks per-order maps from occupation lists to Fock
//! amplitudes and applies every element with explicit sqrt(n) ladder
//! arithmetic, sharing no code with the engine's symbolic polynomial
//! representation. Agreement on every bundled setup at every order pins
//! down normalization, phase conventions, and series truncation at once.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use pathid::element::{Bindings, Element, SimOptions};
use pathid::engine::ExperimentSetup;
use pathid::fock::{FockState, InternalMode, ModeLabel, Path, Polarization};
use pathid::setup::SetupDocument;
use pathid::C64;

type Occ = BTreeMap<ModeLabel, u32>;
type Layer = BTreeMap<Occ, C64>;

#[derive(Clone)]
struct Dense {
    truncation: u32,
    layers: Vec<Layer>,
}

impl Dense {
    fn one(truncation: u32) -> Self {
        let mut layers = vec![Layer::new(); truncation as usize + 1];
        layers[0].insert(Occ::new(), C64::new(1.0, 0.0));
        Dense { truncation, layers }
    }

    fn zero_like(&self) -> Self {
        Dense {
            truncation: self.truncation,
            layers: vec![Layer::new(); self.truncation as usize + 1],
        }
    }

    fn add(&mut self, order: usize, occ: Occ, amp: C64) {
        *self.layers[order].entry(occ).or_default() += amp;
    }

    fn add_scaled(&mut self, other: &Dense, factor: f64) {
        for (order, layer) in other.layers.iter().enumerate() {
            for (occ, &amp) in layer {
                self.add(order, occ.clone(), amp * factor);
            }
        }
    }

    fn is_empty(&self) -> bool {
        self.layers.iter().all(|l| l.is_empty())
    }

    fn fock_by_order(&self) -> BTreeMap<(u32, FockState), C64> {
        let mut out = BTreeMap::new();
        for (order, layer) in self.layers.iter().enumerate() {
            for (occ, &amp) in layer {
                let f = occ
                    .iter()
                    .fold(FockState::vacuum(), |f, (l, &n)| f.with(l.clone(), n));
                *out.entry((order as u32, f)).or_default() += amp;
            }
        }
        out
    }
}

fn sqrt_factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product::<f64>().sqrt()
}

/// a_dag |n> = sqrt(n+1) |n+1> on one mode.
fn created(occ: &Occ, label: &ModeLabel) -> (Occ, f64) {
    let mut o = occ.clone();
    let n = o.entry(label.clone()).or_insert(0);
    *n += 1;
    let factor = f64::from(*n).sqrt();
    (o, factor)
}

/// a |n> = sqrt(n) |n-1>, or nothing on an empty mode.
fn annihilated(occ: &Occ, label: &ModeLabel) -> Option<(Occ, f64)> {
    let n = *occ.get(label)?;
    let mut o = occ.clone();
    if n == 1 {
        o.remove(label);
    } else {
        o.insert(label.clone(), n - 1);
    }
    Some((o, f64::from(n).sqrt()))
}

/// Rewrites every photon on a matched label into the rule's image sum:
/// strip all matched photons (dividing out their sqrt(n!) normalization),
/// then re-create each one as the weighted sum of image labels.
fn substitute(state: &Dense, rule: &dyn Fn(&ModeLabel) -> Option<Vec<(ModeLabel, C64)>>) -> Dense {
    let mut out = state.zero_like();
    for (order, layer) in state.layers.iter().enumerate() {
        for (occ, &amp) in layer {
            let affected: Vec<(ModeLabel, u32, Vec<(ModeLabel, C64)>)> = occ
                .iter()
                .filter_map(|(l, &n)| rule(l).map(|images| (l.clone(), n, images)))
                .collect();
            if affected.is_empty() {
                out.add(order, occ.clone(), amp);
                continue;
            }
            let mut base = occ.clone();
            let mut seed = amp;
            for (l, n, _) in &affected {
                base.remove(l);
                seed /= sqrt_factorial(*n);
            }
            let mut partial: Layer = BTreeMap::from([(base, seed)]);
            for (_, n, images) in &affected {
                for _ in 0..*n {
                    let mut next = Layer::new();
                    for (o, a) in &partial {
                        for (image, c) in images {
                            let (o2, f) = created(o, image);
                            *next.entry(o2).or_default() += a * c * f;
                        }
                    }
                    partial = next;
                }
            }
            for (o, a) in partial {
                out.add(order, o, a);
            }
        }
    }
    out
}

/// One application of w A_dag - conj(w) A, where A_dag creates one photon
/// per emission slot; raises the formal order by one.
fn generator_step(
    state: &Dense,
    combos: &[(Vec<ModeLabel>, f64)],
    w: C64,
    annihilation: bool,
) -> Dense {
    let mut out = state.zero_like();
    for (order, layer) in state.layers.iter().enumerate() {
        if order + 1 > state.truncation as usize {
            continue;
        }
        for (occ, &amp) in layer {
            for (labels, weight) in combos {
                let mut o = occ.clone();
                let mut f = 1.0;
                for l in labels {
                    let (o2, fi) = created(&o, l);
                    o = o2;
                    f *= fi;
                }
                out.add(order + 1, o, amp * w * (weight * f));

                if annihilation {
                    let mut cur = Some((occ.clone(), 1.0f64));
                    for l in labels {
                        cur = cur
                            .and_then(|(o, f)| annihilated(&o, l).map(|(o2, fi)| (o2, f * fi)));
                    }
                    if let Some((o, f)) = cur {
                        out.add(order + 1, o, -amp * w.conj() * (weight * f));
                    }
                }
            }
        }
    }
    out
}

/// Truncated exponential series of the emission generator.
fn emission_series(
    state: &Dense,
    combos: &[(Vec<ModeLabel>, f64)],
    w: C64,
    annihilation: bool,
) -> Dense {
    let mut result = state.clone();
    let mut power = state.clone();
    let mut factorial = 1.0;
    for j in 1..=state.truncation {
        power = generator_step(&power, combos, w, annihilation);
        if power.is_empty() {
            break;
        }
        factorial *= f64::from(j);
        result.add_scaled(&power, 1.0 / factorial);
    }
    result
}

/// Cartesian product of the per-slot emission expansions; an angle
/// polarization splits into cos on H and sin on V.
fn emission_combos(slots: &[(Path, InternalMode)]) -> Vec<(Vec<ModeLabel>, f64)> {
    let mut combos: Vec<(Vec<ModeLabel>, f64)> = vec![(Vec::new(), 1.0)];
    for (path, mode) in slots {
        let expansion: Vec<(ModeLabel, f64)> = match mode.pol {
            Some(Polarization::Angle(g)) => {
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
            }
            _ => vec![(ModeLabel::new(path.clone(), mode.clone()), 1.0)],
        };
        let mut next = Vec::new();
        for (labels, weight) in &combos {
            for (l, c) in &expansion {
                let mut ls = labels.clone();
                ls.push(l.clone());
                next.push((ls, weight * c));
            }
        }
        combos = next;
    }
    combos
}

fn apply_element(
    state: &Dense,
    element: &Element,
    bindings: &Bindings,
    options: &SimOptions,
) -> Dense {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    match element {
        Element::Crystal {
            a,
            b,
            mode_a,
            mode_b,
            gain,
            phase,
        } => {
            let w = C64::from_polar(gain.eval(bindings).unwrap(), phase.eval(bindings).unwrap());
            let slots = [(a.clone(), mode_a.clone()), (b.clone(), mode_b.clone())];
            emission_series(state, &emission_combos(&slots), w, options.annihilation)
        }
        Element::Source {
            paths,
            modes,
            gain,
            phase,
        } => {
            let w = C64::from_polar(gain.eval(bindings).unwrap(), phase.eval(bindings).unwrap());
            let slots: Vec<(Path, InternalMode)> = paths
                .iter()
                .cloned()
                .zip(modes.iter().cloned())
                .collect();
            emission_series(state, &emission_combos(&slots), w, options.annihilation)
        }
        Element::BeamSplitter {
            in_a,
            in_b,
            out_a,
            out_b,
            phase,
        } => {
            let ph = C64::from_polar(1.0, phase.eval(bindings).unwrap());
            substitute(state, &|label| {
                if &label.path == in_a {
                    Some(vec![
                        (
                            ModeLabel::new(out_a.clone(), label.mode.clone()),
                            C64::new(r, 0.0),
                        ),
                        (
                            ModeLabel::new(out_b.clone(), label.mode.clone()),
                            C64::new(0.0, r),
                        ),
                    ])
                } else if &label.path == in_b {
                    Some(vec![
                        (
                            ModeLabel::new(out_b.clone(), label.mode.clone()),
                            ph * C64::new(r, 0.0),
                        ),
                        (
                            ModeLabel::new(out_a.clone(), label.mode.clone()),
                            ph * C64::new(0.0, r),
                        ),
                    ])
                } else {
                    None
                }
            })
        }
        Element::PolarizingBeamSplitter {
            in_a,
            in_b,
            out_a,
            out_b,
        } => substitute(state, &|label| {
            let (transmit, reflect) = if &label.path == in_a {
                (out_a, out_b)
            } else if &label.path == in_b {
                (out_b, out_a)
            } else {
                return None;
            };
            let target = match label.mode.pol {
                Some(Polarization::H) => transmit,
                Some(Polarization::V) => reflect,
                _ => panic!("unpolarized photon on a polarizing splitter"),
            };
            Some(vec![(
                ModeLabel::new(target.clone(), label.mode.clone()),
                C64::new(1.0, 0.0),
            )])
        }),
        Element::Phase { path, phase } => {
            let ph = C64::from_polar(1.0, phase.eval(bindings).unwrap());
            substitute(state, &|label| {
                (&label.path == path).then(|| vec![(label.clone(), ph)])
            })
        }
        Element::OamShift { path, delta } => substitute(state, &|label| {
            (&label.path == path).then(|| {
                let mode = InternalMode {
                    oam: label.mode.oam + delta,
                    ..label.mode.clone()
                };
                vec![(
                    ModeLabel::new(path.clone(), mode),
                    C64::new(1.0, 0.0),
                )]
            })
        }),
        Element::Rotate { path, angle } => {
            let (sin, cos) = angle.eval(bindings).unwrap().sin_cos();
            substitute(state, &|label| {
                if &label.path != path {
                    return None;
                }
                let with_pol = |p: Polarization| InternalMode {
                    pol: Some(p),
                    ..label.mode.clone()
                };
                let (h, v) = match label.mode.pol {
                    Some(Polarization::H) => (cos, sin),
                    Some(Polarization::V) => (-sin, cos),
                    _ => panic!("unpolarized photon on a rotator"),
                };
                Some(vec![
                    (
                        ModeLabel::new(path.clone(), with_pol(Polarization::H)),
                        C64::new(h, 0.0),
                    ),
                    (
                        ModeLabel::new(path.clone(), with_pol(Polarization::V)),
                        C64::new(v, 0.0),
                    ),
                ])
            })
        }
        Element::Attenuator {
            path,
            transmission,
            phase,
            loss,
        } => {
            let t = transmission.eval(bindings).unwrap();
            let ph = C64::from_polar(1.0, phase.eval(bindings).unwrap());
            let refl = (1.0 - t * t).max(0.0).sqrt();
            substitute(state, &|label| {
                (&label.path == path).then(|| {
                    vec![
                        (label.clone(), ph * t),
                        (ModeLabel::new(loss.clone(), label.mode.clone()), ph * refl),
                    ]
                })
            })
        }
        Element::Identify { from, to } => substitute(state, &|label| {
            (&label.path == from).then(|| {
                vec![(
                    ModeLabel::new(to.clone(), label.mode.clone()),
                    C64::new(1.0, 0.0),
                )]
            })
        }),
        Element::PolSet { .. } => panic!("preset elements are folded before simulation"),
    }
}

fn dense_simulate(setup: &ExperimentSetup, overrides: &Bindings, truncation: u32) -> Dense {
    let bindings = setup.bound(overrides).expect("bindings resolve");
    let mut state = Dense::one(truncation);
    for el in &setup.elements {
        state = apply_element(&state, el, &bindings, &setup.options);
    }
    state
}

fn load(name: &str) -> ExperimentSetup {
    let path =
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(format!("../../setups/{name}.setup"));
    let text = fs::read_to_string(&path).expect("bundled setup file");
    SetupDocument::parse(&text)
        .expect("bundled setup parses")
        .compile()
}

fn bind(pairs: &[(&str, f64)]) -> Bindings {
    pairs.iter().map(|&(k, v)| (k.to_string(), v)).collect()
}

fn assert_agrees(name: &str, setup: &ExperimentSetup, overrides: &Bindings, truncation: u32) {
    let engine_state = setup.simulate_at(overrides, truncation).unwrap();
    let mut engine: BTreeMap<(u32, FockState), C64> = BTreeMap::new();
    for (order, amps) in engine_state.amplitudes_by_order() {
        for (f, a) in amps {
            engine.insert((order, f), a);
        }
    }
    let oracle = dense_simulate(setup, overrides, truncation).fock_by_order();

    let signal: f64 = oracle.values().map(|a| a.norm_sqr()).sum();
    assert!(signal > 0.5, "{name}: oracle state carries no weight");

    let keys: Vec<&(u32, FockState)> = engine.keys().chain(oracle.keys()).collect();
    for key in keys {
        let a = engine.get(key).copied().unwrap_or_default();
        let b = oracle.get(key).copied().unwrap_or_default();
        assert!(
            (a - b).norm() < 1e-12,
            "{name} at order {}, state {:?}: engine {a}, oracle {b}",
            key.0,
            key.1
        );
    }
}

#[test]
fn engine_agrees_with_dense_ladder_on_every_bundled_setup() {
    let cases: Vec<(&str, Bindings)> = vec![
        (
            "zwm",
            bind(&[("T", 0.7), ("phi", 1.1), ("phi_S", 0.4), ("theta_I", 0.25)]),
        ),
        ("frustrated", bind(&[("phi", 1.3)])),
        ("hardy-pol", bind(&[("phi", 0.9)])),
        ("dop", bind(&[("T", 0.6), ("gamma", 0.8)])),
        (
            "menzel3",
            bind(&[
                ("g1", 0.8),
                ("g2", 1.1),
                ("g3", 0.6),
                ("phi_s", 0.7),
                ("phi_i", 0.3),
            ]),
        ),
        ("ghz2d", Bindings::new()),
        ("ghz3d", Bindings::new()),
        ("fourphoton", bind(&[("phi", 2.1)])),
        (
            "nm-scheme",
            bind(&[
                ("T", 0.55),
                ("phi0", 0.35),
                ("phi1", 0.2),
                ("phi2", 0.15),
                ("theta3", 0.45),
            ]),
        ),
        ("random-net", Bindings::new()),
    ];
    for (name, overrides) in &cases {
        let setup = load(name);
        assert_agrees(name, &setup, overrides, 2);
    }
}

#[test]
fn agreement_holds_at_deeper_truncation() {
    for (name, overrides) in [
        ("frustrated", bind(&[("phi", 1.3)])),
        (
            "zwm",
            bind(&[("T", 0.7), ("phi", 1.1), ("phi_S", 0.4), ("theta_I", 0.25)]),
        ),
    ] {
        let setup = load(name);
        assert_agrees(name, &setup, &overrides, 3);
    }
}

#[test]
fn agreement_holds_without_the_annihilation_part() {
    for name in ["frustrated", "fourphoton", "menzel3"] {
        let mut setup = load(name);
        setup.options = SimOptions {
            annihilation: false,
        };
        assert_agrees(name, &setup, &Bindings::new(), 2);
    }
}

#[test]
fn single_crystal_vacuum_depletion_matches_the_series() {
    // At second order the vacuum amplitude is 1 - |w|^2/2: the annihilation
    // half of the squared generator acting back on the created pair.
    let setup = ExperimentSetup::new(
        vec![Element::crystal("a", "b")],
        vec![Path::new("a"), Path::new("b")],
    );
    let dense = dense_simulate(&setup, &Bindings::new(), 2);
    let vacuum_correction = dense.layers[2]
        .get(&Occ::new())
        .copied()
        .unwrap_or_default();
    assert!((vacuum_correction - C64::new(-0.5, 0.0)).norm() < 1e-12);
    let pair: Occ = [
        (ModeLabel::plain("a"), 1),
        (ModeLabel::plain("b"), 1),
    ]
    .into();
    let created = dense.layers[1].get(&pair).copied().unwrap_or_default();
    assert!((created - C64::new(1.0, 0.0)).norm() < 1e-12);
}

//! States as creation-operator polynomials acting on the vacuum.
//!
//! A term is a monomial in creation operators together with the formal
//! perturbation order it was produced at. Monomials are kept sorted, so two
//! products of the same operators always collapse into one term. Terms with
//! the same monomial but different formal orders stay separate; they only
//! merge when Fock amplitudes are read out.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use nalgebra::DMatrix;

use crate::{C64, Error, Result, ORDER_EPS, TOL};

/// Spatial path label. Paths starting with `~` are reserved for loss modes
/// minted by attenuators.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Path(Box<str>);

impl Path {
    pub fn new(name: impl Into<String>) -> Self {
        Path(name.into().into_boxed_str())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Loss paths never appear in user input; attenuators mint them.
    pub fn is_loss(&self) -> bool {
        self.0.starts_with('~')
    }

    pub(crate) fn loss(index: usize) -> Self {
        Path::new(format!("~loss{index}"))
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Path({})", self.0)
    }
}

impl From<&str> for Path {
    fn from(s: &str) -> Self {
        Path::new(s)
    }
}

/// Angle label compared by bit pattern. Arithmetic happens before a label is
/// formed; two labels are the same mode only if the bits agree.
#[derive(Clone, Copy)]
pub struct Angle(f64);

impl Angle {
    pub fn radians(value: f64) -> Self {
        Angle(value)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl PartialEq for Angle {
    fn eq(&self, other: &Self) -> bool {
        self.0.to_bits() == other.0.to_bits()
    }
}

impl Eq for Angle {}

impl PartialOrd for Angle {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Angle {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl std::hash::Hash for Angle {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.0.to_bits().hash(state);
    }
}

impl fmt::Debug for Angle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Polarization {
    H,
    V,
    /// Linear polarization at an arbitrary angle from H.
    Angle(Angle),
}

impl fmt::Display for Polarization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Polarization::H => f.write_str("H"),
            Polarization::V => f.write_str("V"),
            Polarization::Angle(a) => write!(f, "A{}", a.value()),
        }
    }
}

/// Internal degrees of freedom carried by a photon besides its path.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct InternalMode {
    pub pol: Option<Polarization>,
    pub oam: i32,
    pub tag: Option<String>,
}

impl InternalMode {
    pub fn plain() -> Self {
        InternalMode::default()
    }

    pub fn pol(p: Polarization) -> Self {
        InternalMode {
            pol: Some(p),
            ..InternalMode::default()
        }
    }

    pub fn oam(l: i32) -> Self {
        InternalMode {
            oam: l,
            ..InternalMode::default()
        }
    }

    pub fn is_plain(&self) -> bool {
        self.pol.is_none() && self.oam == 0 && self.tag.is_none()
    }
}

impl fmt::Display for InternalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_plain() {
            return f.write_str("-");
        }
        let mut parts = Vec::new();
        if let Some(p) = &self.pol {
            parts.push(p.to_string());
        }
        if self.oam != 0 {
            parts.push(format!("l{:+}", self.oam));
        }
        if let Some(t) = &self.tag {
            parts.push(format!("#{t}"));
        }
        f.write_str(&parts.join(","))
    }
}

/// One bosonic mode: a path plus internal degrees of freedom.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ModeLabel {
    pub path: Path,
    pub mode: InternalMode,
}

impl ModeLabel {
    pub fn new(path: Path, mode: InternalMode) -> Self {
        ModeLabel { path, mode }
    }

    pub fn plain(path: impl Into<Path>) -> Self {
        ModeLabel {
            path: path.into(),
            mode: InternalMode::plain(),
        }
    }

    pub fn pol(path: impl Into<Path>, p: Polarization) -> Self {
        ModeLabel {
            path: path.into(),
            mode: InternalMode::pol(p),
        }
    }
}

impl From<&str> for ModeLabel {
    fn from(s: &str) -> Self {
        ModeLabel::plain(s)
    }
}

impl fmt::Display for ModeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.mode.is_plain() {
            write!(f, "{}", self.path)
        } else {
            write!(f, "{}:{}", self.path, self.mode)
        }
    }
}

/// Occupation-number state over labelled modes. Zero occupations are never
/// stored.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FockState(BTreeMap<ModeLabel, u32>);

impl FockState {
    pub fn vacuum() -> Self {
        FockState::default()
    }

    pub fn with(mut self, label: ModeLabel, n: u32) -> Self {
        if n > 0 {
            *self.0.entry(label).or_insert(0) += n;
        }
        self
    }

    pub fn single(label: ModeLabel) -> Self {
        FockState::vacuum().with(label, 1)
    }

    pub fn occupation(&self, label: &ModeLabel) -> u32 {
        self.0.get(label).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u32 {
        self.0.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ModeLabel, u32)> {
        self.0.iter().map(|(l, &n)| (l, n))
    }

    pub fn photons_on(&self, path: &Path) -> u32 {
        self.0
            .iter()
            .filter(|(l, _)| &l.path == path)
            .map(|(_, &n)| n)
            .sum()
    }

    pub fn paths(&self) -> BTreeSet<&Path> {
        self.0.keys().map(|l| &l.path).collect()
    }

    /// Splits into the part on `keep` paths and the rest.
    pub fn split(&self, keep: &BTreeSet<Path>) -> (FockState, FockState) {
        let mut kept = FockState::vacuum();
        let mut rest = FockState::vacuum();
        for (l, &n) in &self.0 {
            if keep.contains(&l.path) {
                kept = kept.with(l.clone(), n);
            } else {
                rest = rest.with(l.clone(), n);
            }
        }
        (kept, rest)
    }
}

impl fmt::Display for FockState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("|vac>");
        }
        let body: Vec<String> = self
            .0
            .iter()
            .map(|(l, &n)| {
                if n == 1 {
                    l.to_string()
                } else {
                    format!("{n}*{l}")
                }
            })
            .collect();
        write!(f, "|{}>", body.join(" "))
    }
}

/// Product of creation operators, kept in sorted canonical form.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Monomial(Vec<ModeLabel>);

impl Monomial {
    pub fn empty() -> Self {
        Monomial::default()
    }

    pub fn new(mut labels: Vec<ModeLabel>) -> Self {
        labels.sort();
        Monomial(labels)
    }

    pub fn degree(&self) -> u32 {
        self.0.len() as u32
    }

    pub fn labels(&self) -> &[ModeLabel] {
        &self.0
    }

    pub fn count(&self, label: &ModeLabel) -> u32 {
        self.0.iter().filter(|l| *l == label).count() as u32
    }

    pub fn with(mut self, label: ModeLabel) -> Self {
        let pos = self.0.partition_point(|l| l <= &label);
        self.0.insert(pos, label);
        self
    }

    /// Removes one occurrence, or `None` if absent.
    pub fn without(&self, label: &ModeLabel) -> Option<Monomial> {
        let pos = self.0.iter().position(|l| l == label)?;
        let mut v = self.0.clone();
        v.remove(pos);
        Some(Monomial(v))
    }

    pub fn to_fock(&self) -> FockState {
        let mut f = FockState::vacuum();
        for l in &self.0 {
            f = f.with(l.clone(), 1);
        }
        f
    }

    /// Run-length view: each distinct label with its multiplicity.
    pub fn distinct(&self) -> Vec<(&ModeLabel, u32)> {
        let mut out: Vec<(&ModeLabel, u32)> = Vec::new();
        for l in &self.0 {
            match out.last_mut() {
                Some((prev, n)) if *prev == l => *n += 1,
                _ => out.push((l, 1)),
            }
        }
        out
    }
}

/// Monomial together with the formal perturbation order it arose at.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Term {
    pub order: u32,
    pub mono: Monomial,
}

impl Term {
    pub fn new(order: u32, mono: Monomial) -> Self {
        Term { order, mono }
    }

    pub fn vacuum() -> Self {
        Term {
            order: 0,
            mono: Monomial::empty(),
        }
    }
}

fn sqrt_factorial(n: u32) -> f64 {
    (1..=n).map(|k| (k as f64).sqrt()).product()
}

/// Polynomial in creation operators, truncated at a fixed formal order.
/// Applied to the vacuum it represents an unnormalized state.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorPolynomial {
    terms: BTreeMap<Term, C64>,
    truncation: u32,
}

impl OperatorPolynomial {
    /// The unit operator: a single vacuum term at order zero.
    pub fn one(truncation: u32) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(Term::vacuum(), C64::new(1.0, 0.0));
        OperatorPolynomial { terms, truncation }
    }

    pub fn zero(truncation: u32) -> Self {
        OperatorPolynomial {
            terms: BTreeMap::new(),
            truncation,
        }
    }

    pub fn truncation(&self) -> u32 {
        self.truncation
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Term, &C64)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, term: &Term) -> C64 {
        self.terms.get(term).copied().unwrap_or_default()
    }

    /// Adds a term; terms above the truncation order are dropped, exact
    /// cancellations are removed.
    pub fn add_term(&mut self, term: Term, coeff: C64) {
        use std::collections::btree_map::Entry;
        if term.order > self.truncation || coeff == C64::new(0.0, 0.0) {
            return;
        }
        match self.terms.entry(term) {
            Entry::Occupied(mut e) => {
                *e.get_mut() += coeff;
                if *e.get() == C64::new(0.0, 0.0) {
                    e.remove();
                }
            }
            Entry::Vacant(e) => {
                e.insert(coeff);
            }
        }
    }

    pub fn add_scaled(&mut self, other: &OperatorPolynomial, factor: C64) {
        for (t, c) in &other.terms {
            self.add_term(t.clone(), c * factor);
        }
    }

    pub fn scale(&mut self, factor: C64) {
        if factor == C64::new(0.0, 0.0) {
            self.terms.clear();
            return;
        }
        for c in self.terms.values_mut() {
            *c *= factor;
        }
    }

    /// Drops coefficients with magnitude at or below `eps`.
    pub fn prune(&mut self, eps: f64) {
        self.terms.retain(|_, c| c.norm() > eps);
    }

    /// Collapses formal orders and converts operator coefficients into Fock
    /// amplitudes: a monomial with occupations `n_j` contributes
    /// `coeff * prod_j sqrt(n_j!)`.
    pub fn fock_amplitudes(&self) -> BTreeMap<FockState, C64> {
        let mut out: BTreeMap<FockState, C64> = BTreeMap::new();
        for (term, &c) in &self.terms {
            let mut factor = 1.0;
            for (_, n) in term.mono.distinct() {
                factor *= sqrt_factorial(n);
            }
            *out.entry(term.mono.to_fock()).or_default() += c * factor;
        }
        out.retain(|_, a| a.norm() > 0.0);
        out
    }

    /// Fock amplitudes kept separate per formal order.
    pub fn amplitudes_by_order(&self) -> BTreeMap<u32, BTreeMap<FockState, C64>> {
        let mut out: BTreeMap<u32, BTreeMap<FockState, C64>> = BTreeMap::new();
        for (term, &c) in &self.terms {
            let mut factor = 1.0;
            for (_, n) in term.mono.distinct() {
                factor *= sqrt_factorial(n);
            }
            *out.entry(term.order)
                .or_default()
                .entry(term.mono.to_fock())
                .or_default() += c * factor;
        }
        out
    }

    /// Inverse of [`fock_amplitudes`](Self::fock_amplitudes): every state
    /// enters at formal order zero.
    pub fn from_fock_amplitudes(
        amps: &BTreeMap<FockState, C64>,
        truncation: u32,
    ) -> OperatorPolynomial {
        let mut poly = OperatorPolynomial::zero(truncation);
        for (f, &a) in amps {
            let mut labels = Vec::new();
            let mut factor = 1.0;
            for (l, n) in f.iter() {
                factor *= sqrt_factorial(n);
                for _ in 0..n {
                    labels.push(l.clone());
                }
            }
            poly.add_term(Term::new(0, Monomial::new(labels)), a / factor);
        }
        poly
    }

    /// Squared norm of the represented state.
    pub fn norm_sq(&self) -> f64 {
        self.fock_amplitudes().values().map(|a| a.norm_sqr()).sum()
    }

    /// Smallest formal order carrying any coefficient above the order
    /// threshold.
    pub fn leading_order(&self) -> Option<u32> {
        self.terms
            .iter()
            .filter(|(_, c)| c.norm() > ORDER_EPS)
            .map(|(t, _)| t.order)
            .min()
    }

    /// Restriction to a single formal order.
    pub fn at_order(&self, order: u32) -> OperatorPolynomial {
        let terms = self
            .terms
            .iter()
            .filter(|(t, _)| t.order == order)
            .map(|(t, c)| (t.clone(), *c))
            .collect();
        OperatorPolynomial {
            terms,
            truncation: self.truncation,
        }
    }
}

/// Pure state: an operator polynomial applied to the vacuum.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    pub poly: OperatorPolynomial,
}

impl PureState {
    pub fn vacuum(truncation: u32) -> Self {
        PureState {
            poly: OperatorPolynomial::one(truncation),
        }
    }

    pub fn from_fock_amplitudes(amps: &BTreeMap<FockState, C64>, truncation: u32) -> Self {
        PureState {
            poly: OperatorPolynomial::from_fock_amplitudes(amps, truncation),
        }
    }

    pub fn fock_amplitudes(&self) -> BTreeMap<FockState, C64> {
        self.poly.fock_amplitudes()
    }

    pub fn amplitudes_by_order(&self) -> BTreeMap<u32, BTreeMap<FockState, C64>> {
        self.poly.amplitudes_by_order()
    }

    pub fn norm(&self) -> f64 {
        self.poly.norm_sq().sqrt()
    }

    pub fn normalized(&self) -> Result<PureState> {
        let n = self.norm();
        if n <= TOL {
            return Err(Error::ZeroNorm);
        }
        let mut poly = self.poly.clone();
        poly.scale(C64::new(1.0 / n, 0.0));
        Ok(PureState { poly })
    }

    pub fn leading_order(&self) -> Option<u32> {
        self.poly.leading_order()
    }

    pub fn at_order(&self, order: u32) -> PureState {
        PureState {
            poly: self.poly.at_order(order),
        }
    }

    /// `<self|other>` over Fock amplitudes; truncations must agree.
    pub fn inner_product(&self, other: &PureState) -> Result<C64> {
        if self.poly.truncation() != other.poly.truncation() {
            return Err(Error::TruncationMismatch(
                self.poly.truncation(),
                other.poly.truncation(),
            ));
        }
        let a = self.fock_amplitudes();
        let b = other.fock_amplitudes();
        let mut acc = C64::new(0.0, 0.0);
        for (f, x) in &a {
            if let Some(y) = b.get(f) {
                acc += x.conj() * y;
            }
        }
        Ok(acc)
    }

    /// Keeps only components whose total photon number over `paths` is `n`.
    pub fn sector(&self, paths: &BTreeSet<Path>, n: u32) -> PureState {
        let mut poly = OperatorPolynomial::zero(self.poly.truncation());
        for (term, &c) in self.poly.terms() {
            let count: u32 = term
                .mono
                .labels()
                .iter()
                .filter(|l| paths.contains(&l.path))
                .count() as u32;
            if count == n {
                poly.add_term(term.clone(), c);
            }
        }
        PureState { poly }
    }

    /// Reduced density operator on `keep`, tracing out every other path.
    /// The result is normalized; a state with no weight on `keep` is an
    /// error.
    pub fn partial_trace(&self, keep: &BTreeSet<Path>) -> Result<DensityOperator> {
        if keep.is_empty() {
            return Err(Error::EmptyKeepSet);
        }
        let amps = self.fock_amplitudes();
        let mut kept_states: BTreeSet<FockState> = BTreeSet::new();
        for f in amps.keys() {
            kept_states.insert(f.split(keep).0);
        }
        let basis: Vec<FockState> = kept_states.into_iter().collect();
        let index: BTreeMap<&FockState, usize> =
            basis.iter().enumerate().map(|(i, f)| (f, i)).collect();

        let mut groups: BTreeMap<FockState, Vec<(usize, C64)>> = BTreeMap::new();
        for (f, a) in &amps {
            let (kept, rest) = f.split(keep);
            groups.entry(rest).or_default().push((index[&kept], *a));
        }

        let dim = basis.len();
        let mut mat = DMatrix::<C64>::zeros(dim, dim);
        for members in groups.values() {
            for &(i, a) in members {
                for &(j, b) in members {
                    mat[(i, j)] += a * b.conj();
                }
            }
        }
        let trace: f64 = (0..dim).map(|i| mat[(i, i)].re).sum();
        if trace <= TOL {
            return Err(Error::ZeroNorm);
        }
        mat.scale_mut(1.0 / trace);
        DensityOperator::new(basis, mat)
    }
}

/// Density operator over an explicit Fock basis.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityOperator {
    basis: Vec<FockState>,
    mat: DMatrix<C64>,
}

impl DensityOperator {
    pub fn new(basis: Vec<FockState>, mat: DMatrix<C64>) -> Result<Self> {
        if mat.nrows() != basis.len() || mat.ncols() != basis.len() {
            return Err(Error::invalid(format!(
                "matrix is {}x{} but the basis has {} states",
                mat.nrows(),
                mat.ncols(),
                basis.len()
            )));
        }
        let rho = DensityOperator { basis, mat };
        rho.check_hermitian()?;
        Ok(rho)
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[FockState] {
        &self.basis
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn entry(&self, i: usize, j: usize) -> C64 {
        self.mat[(i, j)]
    }

    pub fn index_of(&self, f: &FockState) -> Option<usize> {
        self.basis.iter().position(|b| b == f)
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.mat[(i, i)].re).sum()
    }

    pub fn purity(&self) -> f64 {
        (&self.mat * &self.mat).trace().re
    }

    fn check_hermitian(&self) -> Result<()> {
        let mut dev: f64 = 0.0;
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                dev = dev.max((self.mat[(i, j)] - self.mat[(j, i)].conj()).norm());
            }
        }
        if dev > TOL {
            return Err(Error::NotHermitian(dev));
        }
        Ok(())
    }

    /// Eigenvalues sorted descending. The matrix is hermitian by
    /// construction.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let eig = nalgebra::SymmetricEigen::new(self.mat.clone());
        let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        ev
    }

    /// Full physicality check: hermitian, unit trace, positive semidefinite.
    pub fn validate(&self) -> Result<()> {
        self.check_hermitian()?;
        let tr = self.trace();
        if (tr - 1.0).abs() > 1e-9 {
            return Err(Error::BadTrace(tr));
        }
        if let Some(&min) = self
            .eigenvalues()
            .iter()
            .min_by(|a, b| a.total_cmp(b))
        {
            if min < -1e-9 {
                return Err(Error::NotPositive(min));
            }
        }
        Ok(())
    }

    /// `<target|rho|target>` with the target normalized first. Every path in
    /// the target must occur in the operator's basis.
    pub fn fidelity(&self, target: &PureState) -> Result<f64> {
        let amps = target.fock_amplitudes();
        let norm_sq: f64 = amps.values().map(|a| a.norm_sqr()).sum();
        if norm_sq <= TOL {
            return Err(Error::ZeroNorm);
        }
        let mut basis_paths: BTreeSet<&Path> = BTreeSet::new();
        for b in &self.basis {
            basis_paths.extend(b.paths());
        }
        for f in amps.keys() {
            for p in f.paths() {
                if !basis_paths.contains(p) {
                    return Err(Error::BasisMismatch);
                }
            }
        }
        let mut v = DMatrix::<C64>::zeros(self.dim(), 1);
        for (f, a) in &amps {
            if let Some(i) = self.index_of(f) {
                v[(i, 0)] = *a;
            }
        }
        let fv = (v.adjoint() * &self.mat * &v)[(0, 0)].re;
        Ok(fv / norm_sq)
    }
}

//! Simulator for quantum-optics experiments built on path identity: photon
//! pairs from parametric down-conversion whose emission paths are overlapped
//! so that which-source information is erased.
//!
//! The crate models experiments at the level of truncated creation-operator
//! polynomials ([`fock`]), provides the standard element vocabulary (crystals,
//! beam splitters, attenuators, path identification; [`element`]), runs
//! ordered element sequences with post-selection and parameter sweeps
//! ([`engine`]), translates crystal-only setups into colored weighted graphs
//! whose perfect matchings give the post-selected state ([`graph`]), and
//! carries the closed-form analysis tools used alongside the simulations
//! ([`analysis`]). Plain-text setup descriptions are parsed by [`setup`].

pub mod analysis;
pub mod element;
pub mod engine;
pub mod error;
pub mod fock;
pub mod graph;
pub mod setup;

pub use error::{Error, Result};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;

/// Tolerance for exact-identity coefficient comparisons.
pub const TOL: f64 = 1e-12;

/// Threshold below which a coefficient does not count towards the leading
/// perturbation order.
pub const ORDER_EPS: f64 = 1e-14;

/// Formats with nine significant digits: positional for exponents in
/// `[-4, 8]`, scientific outside. Stable across runs and platforms.
pub fn sig9(x: f64) -> String {
    if x == 0.0 {
        return "0.00000000".into();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{:.8e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("{:.8e} always has an exponent");
    let exp: i32 = exp.parse().expect("exponent is an integer");
    let neg = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    debug_assert_eq!(digits.len(), 9);
    let sign = if neg { "-" } else { "" };
    if (0..=8).contains(&exp) {
        let split = exp as usize + 1;
        if split == digits.len() {
            format!("{sign}{digits}")
        } else {
            format!("{sign}{}.{}", &digits[..split], &digits[split..])
        }
    } else if (-4..0).contains(&exp) {
        let zeros = "0".repeat((-exp - 1) as usize);
        format!("{sign}0.{zeros}{digits}")
    } else {
        format!("{sign}{}.{}e{}", &digits[..1], &digits[1..], exp)
    }
}

/// Complex counterpart of [`sig9`]: `re+imi` / `re-imi`.
pub fn sig9_complex(z: C64) -> String {
    let im = sig9(z.im.abs());
    let sign = if z.im.is_sign_negative() { '-' } else { '+' };
    format!("{}{}{}i", sig9(z.re), sign, im)
}

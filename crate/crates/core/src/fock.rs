//! Occupation-vector polynomials over bosonic creation operators.
//!
//! A pure photonic state on `n` modes is written as a polynomial in the
//! creation operators applied to the vacuum: each monomial
//! `Π_i (a†_i)^{m_i}` is keyed by its occupation vector `m`, and the physical
//! amplitude of the Fock state `|m⟩` is the stored coefficient times the
//! normalization `√(Π_i m_i!)` ([`monomial_normalization`]).
//!
//! The four Bell states live on modes 1–4 in dual-rail encoding,
//! `|Φ±⟩ = (a†₁a†₃ ± a†₂a†₄)/√2` and `|Ψ±⟩ = (a†₁a†₄ ± a†₂a†₃)/√2`; ancillas
//! occupy modes 5 and above. Mode indices are 1-based in documentation and
//! 0-based in occupation vectors.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::exact::Radical;
use crate::{Error, Result};

/// Photon counts per mode; the detection events and polynomial keys of the
/// whole crate.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OccupationVector(Vec<u32>);

impl OccupationVector {
    pub fn new(counts: Vec<u32>) -> Self {
        OccupationVector(counts)
    }

    /// Number of modes (vector length).
    pub fn modes(&self) -> usize {
        self.0.len()
    }

    /// Total photon number.
    pub fn photons(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn counts(&self) -> &[u32] {
        &self.0
    }

    /// `Π_i e_i!` as an exact integer (photon counts are small).
    pub fn factorial_product(&self) -> u64 {
        self.0.iter().map(|&c| FACTORIALS[c as usize]).product()
    }
}

impl std::ops::Deref for OccupationVector {
    type Target = [u32];
    fn deref(&self) -> &[u32] {
        &self.0
    }
}

impl From<Vec<u32>> for OccupationVector {
    fn from(v: Vec<u32>) -> Self {
        OccupationVector(v)
    }
}

impl fmt::Display for OccupationVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// Factorials up to 20! (largest that fits u64; photon counts stay far below).
const FACTORIALS: [u64; 21] = {
    let mut t = [1u64; 21];
    let mut i = 1;
    while i < 21 {
        t[i] = t[i - 1] * i as u64;
        i += 1;
    }
    t
};

/// `√(Π_i e_i!)` — converts a monomial coefficient into a physical amplitude.
pub fn monomial_normalization(e: &OccupationVector) -> f64 {
    (e.factorial_product() as f64).sqrt()
}

/// The four Bell states, in the fixed order used by every table and pattern.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BellState {
    PhiPlus,
    PhiMinus,
    PsiPlus,
    PsiMinus,
}

impl BellState {
    pub const ALL: [BellState; 4] = [
        BellState::PhiPlus,
        BellState::PhiMinus,
        BellState::PsiPlus,
        BellState::PsiMinus,
    ];

    /// Row index in probability tables and patterns.
    pub fn index(self) -> usize {
        match self {
            BellState::PhiPlus => 0,
            BellState::PhiMinus => 1,
            BellState::PsiPlus => 2,
            BellState::PsiMinus => 3,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            BellState::PhiPlus => "Phi+",
            BellState::PhiMinus => "Phi-",
            BellState::PsiPlus => "Psi+",
            BellState::PsiMinus => "Psi-",
        }
    }
}

impl fmt::Display for BellState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Sparse homogeneous polynomial in creation operators: a finite map from
/// occupation vectors (all of length `n`) to complex coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct AmplitudePolynomial {
    n: usize,
    terms: BTreeMap<OccupationVector, Complex64>,
}

impl AmplitudePolynomial {
    /// The zero polynomial on `n` modes.
    pub fn new(n: usize) -> Self {
        AmplitudePolynomial { n, terms: BTreeMap::new() }
    }

    pub fn from_terms<I>(n: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (OccupationVector, Complex64)>,
    {
        let mut poly = AmplitudePolynomial::new(n);
        for (occ, coef) in terms {
            if occ.modes() != n {
                return Err(Error::DimensionMismatch(format!(
                    "term {occ} has {} modes, polynomial has {n}",
                    occ.modes()
                )));
            }
            poly.add_term(occ, coef);
        }
        Ok(poly)
    }

    /// Adds `coef`·monomial, collecting like terms and dropping exact zeros.
    pub fn add_term(&mut self, occ: OccupationVector, coef: Complex64) {
        use std::collections::btree_map::Entry;
        debug_assert_eq!(occ.modes(), self.n);
        match self.terms.entry(occ) {
            Entry::Vacant(slot) => {
                if coef != Complex64::ZERO {
                    slot.insert(coef);
                }
            }
            Entry::Occupied(mut slot) => {
                let sum = slot.get() + coef;
                if sum == Complex64::ZERO {
                    slot.remove();
                } else {
                    *slot.get_mut() = sum;
                }
            }
        }
    }

    pub fn n_modes(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Iterates terms in the deterministic (lexicographic) key order.
    pub fn terms(&self) -> impl Iterator<Item = (&OccupationVector, &Complex64)> {
        self.terms.iter()
    }

    /// Coefficient of the monomial `e` (zero when absent).
    pub fn coefficient(&self, e: &OccupationVector) -> Complex64 {
        self.terms.get(e).copied().unwrap_or(Complex64::ZERO)
    }

    /// Physical amplitude of the Fock state `|e⟩`: coefficient times
    /// `√(Π e_i!)`.
    pub fn amplitude(&self, e: &OccupationVector) -> Complex64 {
        self.coefficient(e) * monomial_normalization(e)
    }

    /// Degree shared by every term, if the polynomial is homogeneous.
    pub fn degree(&self) -> Option<u32> {
        let mut degrees = self.terms.keys().map(|k| k.photons());
        let first = degrees.next()?;
        degrees.all(|d| d == first).then_some(first)
    }

    /// Squared state norm `Σ |c_m|² · Π_i m_i!`.
    pub fn norm_sqr(&self) -> f64 {
        self.terms
            .iter()
            .map(|(m, c)| c.norm_sqr() * m.factorial_product() as f64)
            .sum()
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        let terms = self.terms.iter().map(|(k, c)| (k.clone(), c * factor)).collect();
        AmplitudePolynomial { n: self.n, terms }
    }

    /// Product of two polynomials over the same mode space.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply polynomials on {} and {} modes",
                self.n, other.n
            )));
        }
        let mut out = AmplitudePolynomial::new(self.n);
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                let occ: Vec<u32> = ma.iter().zip(mb.iter()).map(|(a, b)| a + b).collect();
                out.add_term(occ.into(), ca * cb);
            }
        }
        Ok(out)
    }

    /// Tensor product: `other`'s modes are appended after `self`'s.
    pub fn tensor(&self, other: &Self) -> Self {
        let n = self.n + other.n;
        let mut out = AmplitudePolynomial::new(n);
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                let mut occ = Vec::with_capacity(n);
                occ.extend_from_slice(ma);
                occ.extend_from_slice(mb);
                out.add_term(occ.into(), ca * cb);
            }
        }
        out
    }

    /// Same polynomial on `n ≥ self.n` modes, trailing modes unoccupied.
    pub fn pad_to(&self, n: usize) -> Result<Self> {
        if n < self.n {
            return Err(Error::DimensionMismatch(format!(
                "cannot pad {}-mode polynomial down to {n} modes",
                self.n
            )));
        }
        let terms = self
            .terms
            .iter()
            .map(|(k, c)| {
                let mut occ = k.counts().to_vec();
                occ.resize(n, 0);
                (occ.into(), *c)
            })
            .collect();
        Ok(AmplitudePolynomial { n, terms })
    }

    /// Rescales so that the state norm is exactly 1.
    pub fn normalized(&self) -> Result<Self> {
        let norm = self.norm_sqr().sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidAncilla("state has zero norm".into()));
        }
        Ok(self.scale(Complex64::new(1.0 / norm, 0.0)))
    }
}

/// `|Φ±⟩`, `|Ψ±⟩` as degree-2 polynomials on the four Bell modes.
pub fn bell_polynomial(bell: BellState) -> AmplitudePolynomial {
    let inv_sqrt2 = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let (first, second, sign) = match bell {
        BellState::PhiPlus => ([1, 0, 1, 0], [0, 1, 0, 1], 1.0),
        BellState::PhiMinus => ([1, 0, 1, 0], [0, 1, 0, 1], -1.0),
        BellState::PsiPlus => ([1, 0, 0, 1], [0, 1, 1, 0], 1.0),
        BellState::PsiMinus => ([1, 0, 0, 1], [0, 1, 1, 0], -1.0),
    };
    let mut poly = AmplitudePolynomial::new(4);
    poly.add_term(first.to_vec().into(), inv_sqrt2);
    poly.add_term(second.to_vec().into(), sign * inv_sqrt2);
    poly
}

/// A single monomial of a custom ancilla: occupation plus complex coefficient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomTerm {
    pub occupation: Vec<u32>,
    pub re: f64,
    pub im: f64,
}

/// The ancilla catalogue. Every family is normalized and occupies modes
/// `5 .. 4 + ancilla_modes()` of the full interferometer.
///
/// * `vacuum` — no ancilla photons or modes.
/// * `single_photons(k)` — `a†₅ ⋯ a†_{k+4}`.
/// * `bell_pairs(m)` — `Π_i (a†_{4i+5}a†_{4i+7} + a†_{4i+6}a†_{4i+8})/√2`.
/// * `ghz(k)` — `(a†₅a†₇⋯a†_{2k+3} + a†₆a†₈⋯a†_{2k+4})/√2`.
/// * `w3` — `(a†₆a†₇a†₉ + a†₅a†₈a†₉ + a†₅a†₇a†₁₀)/√3`.
/// * `grice(N)` — `ϒ₁⋯ϒ_N` where `ϒ_m` is a dual-rail GHZ state of `2^m`
///   qubits (`2^{m+1}` modes); photon count `k = 2^{N+1} − 2`.
/// * `evl(N)` — `(ϒ₁⋯ϒ_N)⊗(ϒ₁⋯ϒ_N)` where `ϒ₁ = a†a†` on one mode pair and
///   `ϒ_m = (Π_p a†²_{H_p} + Π_p a†²_{V_p})/√(2^{2^{m−1}+1})` spreads `2^m`
///   photons over `2^{m−1}` pairs; photon count `k = 2^{N+2} − 4 = ` mode
///   count, mirroring the single-photon families it generalizes.
/// * `custom` — explicit term list, normalized automatically.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum AncillaSpec {
    Vacuum,
    SinglePhotons { k: u32 },
    BellPairs { m: u32 },
    Ghz { k: u32 },
    W3,
    Grice { iterations: u32 },
    Evl { iterations: u32 },
    Custom { terms: Vec<CustomTerm> },
}

// Hand-written so that unknown keys are rejected even under the internal
// "family" tag (the derive silently ignores them there).
impl<'de> Deserialize<'de> for AncillaSpec {
    fn deserialize<D>(deserializer: D) -> std::result::Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        use serde::de::Error as DeError;
        let value = serde_json::Value::deserialize(deserializer)?;
        let obj = value
            .as_object()
            .ok_or_else(|| DeError::custom("ancilla spec must be a JSON object"))?;
        let family = obj
            .get("family")
            .and_then(|f| f.as_str())
            .ok_or_else(|| DeError::custom("ancilla spec needs a string \"family\" key"))?;

        fn check_keys<E: DeError>(
            obj: &serde_json::Map<String, serde_json::Value>,
            allowed: &[&str],
        ) -> std::result::Result<(), E> {
            for key in obj.keys() {
                if key != "family" && !allowed.contains(&key.as_str()) {
                    return Err(E::custom(format!("unknown key `{key}` in ancilla spec")));
                }
            }
            Ok(())
        }
        fn get_u32<E: DeError>(
            obj: &serde_json::Map<String, serde_json::Value>,
            key: &str,
        ) -> std::result::Result<u32, E> {
            obj.get(key)
                .and_then(|v| v.as_u64())
                .and_then(|v| u32::try_from(v).ok())
                .ok_or_else(|| E::custom(format!("missing or invalid `{key}`")))
        }

        match family {
            "vacuum" => {
                check_keys(obj, &[])?;
                Ok(AncillaSpec::Vacuum)
            }
            "single_photons" => {
                check_keys(obj, &["k"])?;
                Ok(AncillaSpec::SinglePhotons { k: get_u32(obj, "k")? })
            }
            "bell_pairs" => {
                check_keys(obj, &["m"])?;
                Ok(AncillaSpec::BellPairs { m: get_u32(obj, "m")? })
            }
            "ghz" => {
                check_keys(obj, &["k"])?;
                Ok(AncillaSpec::Ghz { k: get_u32(obj, "k")? })
            }
            "w3" => {
                check_keys(obj, &[])?;
                Ok(AncillaSpec::W3)
            }
            "grice" => {
                check_keys(obj, &["iterations"])?;
                Ok(AncillaSpec::Grice { iterations: get_u32(obj, "iterations")? })
            }
            "evl" => {
                check_keys(obj, &["iterations"])?;
                Ok(AncillaSpec::Evl { iterations: get_u32(obj, "iterations")? })
            }
            "custom" => {
                check_keys(obj, &["terms"])?;
                let terms = obj
                    .get("terms")
                    .cloned()
                    .ok_or_else(|| DeError::custom("custom ancilla needs `terms`"))?;
                let terms: Vec<CustomTerm> =
                    serde_json::from_value(terms).map_err(DeError::custom)?;
                Ok(AncillaSpec::Custom { terms })
            }
            other => Err(DeError::custom(format!("unknown ancilla family `{other}`"))),
        }
    }
}

/// Iteration cap for the recursive families; beyond it the photon counts are
/// far past anything the rest of the crate could touch, and the term-list
/// radicands would overflow.
const MAX_ITERATIONS: u32 = 6;

impl AncillaSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            AncillaSpec::Vacuum | AncillaSpec::W3 => Ok(()),
            AncillaSpec::SinglePhotons { .. } | AncillaSpec::BellPairs { .. } => Ok(()),
            AncillaSpec::Ghz { k } => {
                if *k < 2 {
                    return Err(Error::InvalidAncilla(format!("ghz requires k >= 2, got {k}")));
                }
                Ok(())
            }
            AncillaSpec::Grice { iterations } | AncillaSpec::Evl { iterations } => {
                if *iterations < 1 {
                    return Err(Error::InvalidAncilla("iterations must be >= 1".into()));
                }
                if *iterations > MAX_ITERATIONS {
                    return Err(Error::InvalidAncilla(format!(
                        "iterations capped at {MAX_ITERATIONS}, got {iterations}"
                    )));
                }
                Ok(())
            }
            AncillaSpec::Custom { terms } => {
                if terms.is_empty() {
                    return Err(Error::InvalidAncilla("custom ancilla has no terms".into()));
                }
                let modes = terms[0].occupation.len();
                let photons: u32 = terms[0].occupation.iter().sum();
                for t in terms {
                    if t.occupation.len() != modes {
                        return Err(Error::InvalidAncilla(
                            "custom terms have inconsistent mode counts".into(),
                        ));
                    }
                    if t.occupation.iter().sum::<u32>() != photons {
                        return Err(Error::InvalidAncilla(
                            "custom terms have inconsistent photon counts".into(),
                        ));
                    }
                }
                if terms.iter().all(|t| t.re == 0.0 && t.im == 0.0) {
                    return Err(Error::InvalidAncilla("custom ancilla is identically zero".into()));
                }
                Ok(())
            }
        }
    }

    /// Ancilla photon count `k`.
    pub fn photons(&self) -> u32 {
        match self {
            AncillaSpec::Vacuum => 0,
            AncillaSpec::SinglePhotons { k } => *k,
            AncillaSpec::BellPairs { m } => 2 * m,
            AncillaSpec::Ghz { k } => *k,
            AncillaSpec::W3 => 3,
            AncillaSpec::Grice { iterations } => (1u32 << (iterations + 1)) - 2,
            AncillaSpec::Evl { iterations } => (1u32 << (iterations + 2)) - 4,
            AncillaSpec::Custom { terms } => {
                terms.first().map_or(0, |t| t.occupation.iter().sum())
            }
        }
    }

    /// Number of ancilla modes (the full problem has `4 +` this many).
    pub fn ancilla_modes(&self) -> usize {
        match self {
            AncillaSpec::Vacuum => 0,
            AncillaSpec::SinglePhotons { k } => *k as usize,
            AncillaSpec::BellPairs { m } => 4 * *m as usize,
            AncillaSpec::Ghz { k } => 2 * *k as usize,
            AncillaSpec::W3 => 6,
            AncillaSpec::Grice { iterations } => (1usize << (iterations + 2)) - 4,
            AncillaSpec::Evl { iterations } => (1usize << (iterations + 2)) - 4,
            AncillaSpec::Custom { terms } => terms.first().map_or(0, |t| t.occupation.len()),
        }
    }

    /// Smallest interferometer size hosting Bell modes plus this ancilla.
    pub fn min_modes(&self) -> usize {
        4 + self.ancilla_modes()
    }

    /// Short human-readable label for reports.
    pub fn label(&self) -> String {
        match self {
            AncillaSpec::Vacuum => "vacuum".into(),
            AncillaSpec::SinglePhotons { k } => format!("single_photons({k})"),
            AncillaSpec::BellPairs { m } => format!("bell_pairs({m})"),
            AncillaSpec::Ghz { k } => format!("ghz({k})"),
            AncillaSpec::W3 => "w3".into(),
            AncillaSpec::Grice { iterations } => format!("grice({iterations})"),
            AncillaSpec::Evl { iterations } => format!("evl({iterations})"),
            AncillaSpec::Custom { .. } => "custom".into(),
        }
    }
}

/// One summand of a product-form ancilla: local occupation plus exact
/// coefficient. A family is a product of factors, each factor a sum of such
/// monomials over its own block of modes.
type ExactTerm = (Vec<u32>, Radical);

/// Exact term list for every built-in family (`None` for `custom`, whose
/// coefficients are free floats). Shared by the float constructor below and
/// by the bounds layer, which needs the coefficients as radicals.
pub(crate) fn exact_ancilla_terms(spec: &AncillaSpec) -> Result<Option<Vec<ExactTerm>>> {
    spec.validate()?;
    let factors: Vec<Vec<ExactTerm>> = match spec {
        AncillaSpec::Custom { .. } => return Ok(None),
        AncillaSpec::Vacuum => vec![],
        AncillaSpec::SinglePhotons { k } => {
            (0..*k).map(|_| vec![(vec![1], Radical::one())]).collect()
        }
        AncillaSpec::BellPairs { m } => (0..*m)
            .map(|_| {
                vec![
                    (vec![1, 0, 1, 0], Radical::inv_sqrt(2)),
                    (vec![0, 1, 0, 1], Radical::inv_sqrt(2)),
                ]
            })
            .collect(),
        AncillaSpec::Ghz { k } => vec![ghz_factor(*k as usize)],
        AncillaSpec::W3 => {
            let c = Radical::inv_sqrt(3);
            vec![vec![
                (vec![0, 1, 1, 0, 1, 0], c.clone()),
                (vec![1, 0, 0, 1, 1, 0], c.clone()),
                (vec![1, 0, 1, 0, 0, 1], c),
            ]]
        }
        AncillaSpec::Grice { iterations } => {
            (1..=*iterations).map(|m| ghz_factor(1usize << m)).collect()
        }
        AncillaSpec::Evl { iterations } => {
            let half: Vec<Vec<ExactTerm>> = (1..=*iterations).map(evl_factor).collect();
            let mut factors = half.clone();
            factors.extend(half);
            factors
        }
    };
    Ok(Some(product_of_factors(&factors)))
}

/// Dual-rail GHZ state of `q` qubits on `2q` modes: all photons on the odd
/// rails plus all photons on the even rails, each with amplitude `1/√2`.
fn ghz_factor(q: usize) -> Vec<ExactTerm> {
    let mut odd = vec![0u32; 2 * q];
    let mut even = vec![0u32; 2 * q];
    for p in 0..q {
        odd[2 * p] = 1;
        even[2 * p + 1] = 1;
    }
    vec![(odd, Radical::inv_sqrt(2)), (even, Radical::inv_sqrt(2))]
}

/// The `m`-th factor of the Ewert–van-Loock family: `a†a†` on one pair for
/// `m = 1`, and `(Π_p a†²_{H_p} + Π_p a†²_{V_p})/√(2^{2^{m−1}+1})` on
/// `2^{m−1}` pairs for `m ≥ 2`, so that the factor always carries `2^m`
/// photons on `2^m` modes with all-H/all-V weight 1/2 each (after a π/4
/// rotation of the pair in the `m = 1` case).
fn evl_factor(m: u32) -> Vec<ExactTerm> {
    if m == 1 {
        return vec![(vec![1, 1], Radical::one())];
    }
    let pairs = 1usize << (m - 1);
    let mut h = vec![0u32; 2 * pairs];
    let mut v = vec![0u32; 2 * pairs];
    for p in 0..pairs {
        h[2 * p] = 2;
        v[2 * p + 1] = 2;
    }
    let coef = Radical::inv_sqrt(1u64 << (pairs + 1));
    vec![(h, coef.clone()), (v, coef)]
}

/// Expands a product of factors into a flat term list, concatenating the
/// per-factor mode blocks.
fn product_of_factors(factors: &[Vec<ExactTerm>]) -> Vec<ExactTerm> {
    let mut acc: Vec<ExactTerm> = vec![(vec![], Radical::one())];
    for factor in factors {
        let mut next = Vec::with_capacity(acc.len() * factor.len());
        for (occ_a, coef_a) in &acc {
            for (occ_b, coef_b) in factor {
                let mut occ = occ_a.clone();
                occ.extend_from_slice(occ_b);
                next.push((occ, coef_a.mul(coef_b)));
            }
        }
        acc = next;
    }
    acc
}

/// The normalized ancilla polynomial on its own `ancilla_modes()` modes
/// (constant 1 on zero modes for the vacuum).
pub fn ancilla_polynomial(spec: &AncillaSpec) -> Result<AmplitudePolynomial> {
    if let Some(exact) = exact_ancilla_terms(spec)? {
        let n = spec.ancilla_modes();
        return AmplitudePolynomial::from_terms(
            n,
            exact
                .into_iter()
                .map(|(occ, coef)| (occ.into(), Complex64::new(coef.to_f64(), 0.0))),
        );
    }
    let AncillaSpec::Custom { terms } = spec else { unreachable!() };
    let n = spec.ancilla_modes();
    let poly = AmplitudePolynomial::from_terms(
        n,
        terms
            .iter()
            .map(|t| (t.occupation.clone().into(), Complex64::new(t.re, t.im))),
    )?;
    poly.normalized()
}

/// `(P_in)_β = B_β(a†₁..a†₄) · Q(a†₅..a†_n)`: the full input polynomial on
/// `4 + ancilla_modes()` modes.
pub fn input_polynomial(bell: BellState, spec: &AncillaSpec) -> Result<AmplitudePolynomial> {
    Ok(bell_polynomial(bell).tensor(&ancilla_polynomial(spec)?))
}

/// Exact squared norm `Σ q²·rad·Π m_i!` of a built-in family's term list —
/// used by tests to pin normalization without floating error.
#[cfg(test)]
pub(crate) fn exact_norm_sqr(terms: &[ExactTerm]) -> num_rational::BigRational {
    use num_rational::BigRational;
    use num_traits::Zero;
    let mut acc = BigRational::zero();
    for (occ, coef) in terms {
        let fact: u64 = occ.iter().map(|&c| FACTORIALS[c as usize]).product();
        acc += coef.sqr() * BigRational::from_integer(fact.into());
    }
    acc
}

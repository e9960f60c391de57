//! Evolution of creation-operator polynomials through an interferometer.
//!
//! A linear-optical network is an `n×n` unitary acting on the mode operators
//! as `a†_i → Σ_j u_ij c†_j`. Evolving an input polynomial is therefore a
//! substitution-and-expand step ([`substitute`]); the amplitude of a detection
//! event is the coefficient of its monomial times the monomial normalization.
//! [`amplitude_oracle`] recomputes the same amplitude from matrix permanents,
//! giving an independent cross-check used heavily by the test suite.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::fock::{monomial_normalization, AmplitudePolynomial, OccupationVector};
use crate::{Error, Result};

/// Default tolerance on `max |U†U − I|` for a matrix to count as unitary.
pub const UNITARITY_TOLERANCE: f64 = 1e-9;

/// An `n×n` complex matrix connecting input modes (rows) to output modes
/// (columns). Nothing enforces unitarity on construction; call
/// [`UnitaryMatrix::validate`] where it matters.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitaryMatrix {
    mat: DMatrix<Complex64>,
}

impl UnitaryMatrix {
    pub fn from_matrix(mat: DMatrix<Complex64>) -> Self {
        assert_eq!(mat.nrows(), mat.ncols(), "mode-coupling matrix must be square");
        UnitaryMatrix { mat }
    }

    pub fn identity(n: usize) -> Self {
        UnitaryMatrix { mat: DMatrix::identity(n, n) }
    }

    /// Permutation matrix sending input mode `i` to output `perm[i]`.
    pub fn permutation(perm: &[usize]) -> Self {
        let n = perm.len();
        let mut mat = DMatrix::zeros(n, n);
        for (i, &j) in perm.iter().enumerate() {
            assert!(j < n, "permutation target out of range");
            mat[(i, j)] = Complex64::ONE;
        }
        UnitaryMatrix { mat }
    }

    pub fn n(&self) -> usize {
        self.mat.nrows()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.mat[(row, col)]
    }

    pub fn as_matrix(&self) -> &DMatrix<Complex64> {
        &self.mat
    }

    /// `max_ij |（U†U − I)_ij|`.
    pub fn unitarity_deviation(&self) -> f64 {
        let n = self.n();
        let gram = self.mat.adjoint() * &self.mat;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { Complex64::ONE } else { Complex64::ZERO };
                worst = worst.max((gram[(i, j)] - target).norm());
            }
        }
        worst
    }

    pub fn validate(&self, tolerance: f64) -> Result<()> {
        let deviation = self.unitarity_deviation();
        if deviation > tolerance {
            return Err(Error::NotUnitary { deviation, tolerance });
        }
        Ok(())
    }

    /// Nearest unitary in Frobenius norm (the polar factor, via SVD).
    pub fn project_unitary(&self) -> UnitaryMatrix {
        let svd = self.mat.clone().svd(true, true);
        let u = svd.u.expect("svd with u requested");
        let v_t = svd.v_t.expect("svd with v_t requested");
        UnitaryMatrix { mat: u * v_t }
    }

    /// Short content hash of the entry bit patterns, for run records.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.n() as u64).to_le_bytes());
        for i in 0..self.n() {
            for j in 0..self.n() {
                let z = self.mat[(i, j)];
                hasher.update(z.re.to_bits().to_le_bytes());
                hasher.update(z.im.to_bits().to_le_bytes());
            }
        }
        let digest = hasher.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UnitaryWire {
    n: usize,
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
}

impl Serialize for UnitaryMatrix {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let n = self.n();
        let rows = |part: fn(&Complex64) -> f64| -> Vec<Vec<f64>> {
            (0..n)
                .map(|i| (0..n).map(|j| part(&self.mat[(i, j)])).collect())
                .collect()
        };
        UnitaryWire { n, re: rows(|z| z.re), im: rows(|z| z.im) }.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for UnitaryMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as DeError;
        let wire = UnitaryWire::deserialize(deserializer)?;
        let n = wire.n;
        for (name, rows) in [("re", &wire.re), ("im", &wire.im)] {
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return Err(DeError::custom(format!("`{name}` is not an {n}×{n} array")));
            }
        }
        let mat = DMatrix::from_fn(n, n, |i, j| Complex64::new(wire.re[i][j], wire.im[i][j]));
        Ok(UnitaryMatrix { mat })
    }
}

/// One interferometer element. Mode numbers are 1-based, matching the
/// convention that the Bell state enters modes 1–4.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum CircuitElement {
    /// Real rotation `[[cos θ, −sin θ], [sin θ, cos θ]]` on rows `(i, j)`.
    #[serde(alias = "bs")]
    Beamsplitter { i: u32, j: u32, theta: f64 },
    /// Multiplies row `i` by `e^{iφ}`.
    Phase { i: u32, phi: f64 },
    /// Exchanges rows `i` and `j`.
    Swap { i: u32, j: u32 },
}

/// An ordered element list, applied left to right.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Circuit {
    pub elements: Vec<CircuitElement>,
}

/// Builds the total `n×n` matrix of a circuit: the product of the element
/// matrices in application order (`a†_i → Σ_j u_ij c†_j` composes by right
/// multiplication).
pub fn circuit_to_unitary(circuit: &Circuit, n: usize) -> Result<UnitaryMatrix> {
    let mode = |index: u32, what: &str| -> Result<usize> {
        if index < 1 || index as usize > n {
            return Err(Error::InvalidCircuit(format!(
                "{what} mode {index} out of range 1..={n}"
            )));
        }
        Ok(index as usize - 1)
    };
    let mut total: DMatrix<Complex64> = DMatrix::identity(n, n);
    for element in &circuit.elements {
        let mut step: DMatrix<Complex64> = DMatrix::identity(n, n);
        match *element {
            CircuitElement::Beamsplitter { i, j, theta } => {
                let (a, b) = (mode(i, "beamsplitter")?, mode(j, "beamsplitter")?);
                if a == b {
                    return Err(Error::InvalidCircuit("beamsplitter needs two distinct modes".into()));
                }
                let (c, s) = (theta.cos(), theta.sin());
                step[(a, a)] = Complex64::new(c, 0.0);
                step[(a, b)] = Complex64::new(-s, 0.0);
                step[(b, a)] = Complex64::new(s, 0.0);
                step[(b, b)] = Complex64::new(c, 0.0);
            }
            CircuitElement::Phase { i, phi } => {
                let a = mode(i, "phase")?;
                step[(a, a)] = Complex64::from_polar(1.0, phi);
            }
            CircuitElement::Swap { i, j } => {
                let (a, b) = (mode(i, "swap")?, mode(j, "swap")?);
                step[(a, a)] = Complex64::ZERO;
                step[(b, b)] = Complex64::ZERO;
                step[(a, b)] = Complex64::ONE;
                step[(b, a)] = Complex64::ONE;
            }
        }
        total *= step;
    }
    Ok(UnitaryMatrix::from_matrix(total))
}

/// Replaces every generator by its image row `a†_i → Σ_j u_ij c†_j` and
/// expands, collecting like terms after each single-generator product so the
/// intermediate term count stays bounded by the final one.
pub fn substitute(p: &AmplitudePolynomial, u: &UnitaryMatrix) -> Result<AmplitudePolynomial> {
    let n = p.n_modes();
    if n != u.n() {
        return Err(Error::DimensionMismatch(format!(
            "polynomial on {n} modes, matrix on {} modes",
            u.n()
        )));
    }
    // Image rows as sparse single-photon polynomials, built once.
    let mut rows: Vec<Option<AmplitudePolynomial>> = vec![None; n];
    let row_poly = |i: usize| -> AmplitudePolynomial {
        let mut poly = AmplitudePolynomial::new(n);
        for j in 0..n {
            let coef = u.get(i, j);
            if coef != Complex64::ZERO {
                let mut occ = vec![0u32; n];
                occ[j] = 1;
                poly.add_term(occ.into(), coef);
            }
        }
        poly
    };

    let mut out = AmplitudePolynomial::new(n);
    for (monomial, &coef) in p.terms() {
        let mut acc = AmplitudePolynomial::from_terms(
            n,
            [(OccupationVector::new(vec![0; n]), Complex64::ONE)],
        )?;
        for (i, &count) in monomial.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let row = rows[i].get_or_insert_with(|| row_poly(i)).clone();
            for _ in 0..count {
                acc = acc.mul(&row)?;
            }
        }
        for (occ, c) in acc.terms() {
            out.add_term(occ.clone(), coef * c);
        }
    }
    Ok(out)
}

/// All occupation vectors of length `n` summing to `photons`, in ascending
/// lexicographic order.
pub fn enumerate_events(n: usize, photons: u32) -> Vec<OccupationVector> {
    assert!(n >= 1, "need at least one mode");
    let mut events = Vec::with_capacity(event_count(n, photons) as usize);
    let mut current = vec![0u32; n];
    fill_events(&mut events, &mut current, 0, photons);
    events
}

fn fill_events(out: &mut Vec<OccupationVector>, current: &mut Vec<u32>, pos: usize, left: u32) {
    if pos + 1 == current.len() {
        current[pos] = left;
        out.push(OccupationVector::new(current.clone()));
        current[pos] = 0;
        return;
    }
    for c in 0..=left {
        current[pos] = c;
        fill_events(out, current, pos + 1, left - c);
    }
    current[pos] = 0;
}

/// `binom(n + photons − 1, photons)` — the number of detection events,
/// computed without enumerating them.
pub fn event_count(n: usize, photons: u32) -> u64 {
    let mut acc = 1u128;
    for i in 0..photons as u128 {
        acc = acc * (n as u128 + i) / (i + 1);
    }
    u64::try_from(acc).expect("event count overflows u64")
}

fn check_event(p_in: &AmplitudePolynomial, e: &OccupationVector) -> Result<()> {
    let degree = p_in
        .degree()
        .expect("input states are homogeneous by construction");
    if e.photons() != degree {
        return Err(Error::PhotonMismatch { event: e.photons(), state: degree });
    }
    if e.modes() != p_in.n_modes() {
        return Err(Error::DimensionMismatch(format!(
            "event on {} modes, state on {}",
            e.modes(),
            p_in.n_modes()
        )));
    }
    Ok(())
}

/// Amplitude of detection event `e` after evolving `p_in` through `u`:
/// coefficient of the monomial `e` in the output polynomial, times
/// `√(Π e_i!)`.
///
/// Sweeping many events? Run [`substitute`] once and read
/// [`AmplitudePolynomial::amplitude`] off the result instead.
pub fn amplitude(
    u: &UnitaryMatrix,
    p_in: &AmplitudePolynomial,
    e: &OccupationVector,
) -> Result<Complex64> {
    check_event(p_in, e)?;
    Ok(substitute(p_in, u)?.amplitude(e))
}

/// The same amplitude, recomputed from permanents: for each input monomial
/// `m`, build the matrix repeating row `i` of `U` `m_i` times and column `j`
/// `e_j` times; then the amplitude is `Σ_m coef(m)·per(A_{m,e}) / √(Π e_j!)`.
pub fn amplitude_oracle(
    u: &UnitaryMatrix,
    p_in: &AmplitudePolynomial,
    e: &OccupationVector,
) -> Result<Complex64> {
    check_event(p_in, e)?;
    let cols: Vec<usize> = expand_multiset(e);
    let mut total = Complex64::ZERO;
    for (monomial, &coef) in p_in.terms() {
        let rows: Vec<usize> = expand_multiset(monomial);
        debug_assert_eq!(rows.len(), cols.len());
        let a = DMatrix::from_fn(rows.len(), cols.len(), |r, c| u.get(rows[r], cols[c]));
        total += coef * ryser_permanent(&a)?;
    }
    Ok(total / monomial_normalization(e))
}

/// Index `i` repeated `v_i` times.
fn expand_multiset(v: &OccupationVector) -> Vec<usize> {
    let mut out = Vec::with_capacity(v.photons() as usize);
    for (i, &c) in v.iter().enumerate() {
        out.extend(std::iter::repeat_n(i, c as usize));
    }
    out
}

/// Permanent by Ryser's inclusion–exclusion formula with Gray-code column
/// updates, `O(n·2^n)`. Sized for the photon counts of this crate; refuses
/// matrices past 12×12 where the cost stops being sensible.
pub fn ryser_permanent(a: &DMatrix<Complex64>) -> Result<Complex64> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::DimensionMismatch("permanent needs a square matrix".into()));
    }
    if n == 0 {
        return Ok(Complex64::ONE); // empty product
    }
    if n > 12 {
        return Err(Error::EnumerationGuard(format!(
            "permanent of a {n}×{n} matrix (limit 12)"
        )));
    }
    let mut row_sums = vec![Complex64::ZERO; n];
    let mut total = Complex64::ZERO;
    let mut prev_gray = 0u32;
    for step in 1u32..(1u32 << n) {
        let gray = step ^ (step >> 1);
        let flipped = (gray ^ prev_gray).trailing_zeros() as usize;
        if gray & (1 << flipped) != 0 {
            for (i, sum) in row_sums.iter_mut().enumerate() {
                *sum += a[(i, flipped)];
            }
        } else {
            for (i, sum) in row_sums.iter_mut().enumerate() {
                *sum -= a[(i, flipped)];
            }
        }
        prev_gray = gray;
        let product: Complex64 = row_sums.iter().product();
        if gray.count_ones() % 2 == 0 {
            total -= product;
        } else {
            total += product;
        }
    }
    if n.is_multiple_of(2) {
        total = -total;
    }
    Ok(total)
}

/// Permanent by direct permutation expansion, `O(n·n!)`; the second-level
/// cross-check for Ryser on tiny matrices.
pub fn naive_permanent(a: &DMatrix<Complex64>) -> Result<Complex64> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::DimensionMismatch("permanent needs a square matrix".into()));
    }
    if n >= 5 {
        return Err(Error::EnumerationGuard(format!(
            "naive permanent of a {n}×{n} matrix (limit 4)"
        )));
    }
    let mut cols: Vec<usize> = (0..n).collect();
    let mut total = Complex64::ZERO;
    permute_and_sum(a, &mut cols, 0, &mut total);
    Ok(total)
}

fn permute_and_sum(
    a: &DMatrix<Complex64>,
    cols: &mut Vec<usize>,
    depth: usize,
    total: &mut Complex64,
) {
    let n = cols.len();
    if depth == n {
        let mut product = Complex64::ONE;
        for (row, &col) in cols.iter().enumerate() {
            product *= a[(row, col)];
        }
        *total += product;
        return;
    }
    for i in depth..n {
        cols.swap(depth, i);
        permute_and_sum(a, cols, depth + 1, total);
        cols.swap(depth, i);
    }
}


#[cfg(test)]
mod tests {
    use super::test_support::random_unitary;
    use super::*;
    use crate::fock::{bell_polynomial, input_polynomial, AncillaSpec, BellState};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn occ(v: &[u32]) -> OccupationVector {
        v.to_vec().into()
    }

    #[test]
    fn enumerate_events_counts_and_order() {
        let events = enumerate_events(4, 2);
        assert_eq!(events.len(), 10);
        assert_eq!(event_count(4, 2), 10);
        assert_eq!(events.first().unwrap(), &occ(&[0, 0, 0, 2]));
        assert_eq!(events.last().unwrap(), &occ(&[2, 0, 0, 0]));
        let mut sorted = events.clone();
        sorted.sort();
        assert_eq!(events, sorted, "events come out in ascending lex order");
        for e in &events {
            assert_eq!(e.photons(), 2);
        }

        assert_eq!(enumerate_events(8, 4).len(), 330);
        assert_eq!(event_count(8, 4) * 4, 1320);
        assert_eq!(enumerate_events(1, 3), vec![occ(&[3])]);
        // Spot-check the closed form against the enumeration on a grid.
        for n in 1..=6 {
            for p in 0..=5 {
                assert_eq!(enumerate_events(n, p).len() as u64, event_count(n, p));
            }
        }
    }

    #[test]
    fn permanent_basics() {
        let id = DMatrix::<Complex64>::identity(4, 4);
        assert_eq!(ryser_permanent(&id).unwrap(), Complex64::ONE);
        let ones = DMatrix::from_element(4, 4, Complex64::ONE);
        assert!((ryser_permanent(&ones).unwrap().re - 24.0).abs() < 1e-12);
        let empty = DMatrix::<Complex64>::zeros(0, 0);
        assert_eq!(ryser_permanent(&empty).unwrap(), Complex64::ONE);
        let single = DMatrix::from_element(1, 1, Complex64::new(3.0, -1.0));
        assert_eq!(ryser_permanent(&single).unwrap(), Complex64::new(3.0, -1.0));

        // per([[a,b],[c,d]]) = ad + bc.
        let m = DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(1.0, 2.0),
                Complex64::new(0.5, 0.0),
                Complex64::new(-1.0, 1.0),
                Complex64::new(2.0, -1.0),
            ],
        );
        let expected = Complex64::new(1.0, 2.0) * Complex64::new(2.0, -1.0)
            + Complex64::new(0.5, 0.0) * Complex64::new(-1.0, 1.0);
        assert!((ryser_permanent(&m).unwrap() - expected).norm() < 1e-14);
    }

    #[test]
    fn ryser_matches_naive_expansion() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..=4 {
            for _ in 0..20 {
                let m = DMatrix::from_fn(n, n, |_, _| {
                    Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
                });
                let fast = ryser_permanent(&m).unwrap();
                let slow = naive_permanent(&m).unwrap();
                assert!((fast - slow).norm() < 1e-12, "n={n}");
            }
        }
        assert!(naive_permanent(&DMatrix::<Complex64>::identity(5, 5)).is_err());
        assert!(ryser_permanent(&DMatrix::<Complex64>::identity(13, 13)).is_err());
    }

    #[test]
    fn substitute_identity_and_permutation() {
        let phi_plus = bell_polynomial(BellState::PhiPlus);
        let same = substitute(&phi_plus, &UnitaryMatrix::identity(4)).unwrap();
        assert_eq!(same, phi_plus);

        // Swapping modes 1↔2 turns the Φ⁺ monomials into (0,1,1,0)/(1,0,0,1).
        let swap12 = UnitaryMatrix::permutation(&[1, 0, 2, 3]);
        let mapped = substitute(&phi_plus, &swap12).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(mapped.coefficient(&occ(&[0, 1, 1, 0])), Complex64::new(s, 0.0));
        assert_eq!(mapped.coefficient(&occ(&[1, 0, 0, 1])), Complex64::new(s, 0.0));
        assert_eq!(mapped.len(), 2);

        assert!(substitute(&phi_plus, &UnitaryMatrix::identity(5)).is_err());
    }

    #[test]
    fn substitute_coefficient_formula() {
        // Coefficient of (1,1,0,0) in the evolved Φ⁺ polynomial is
        // (u11·u32 + u12·u31 + u21·u42 + u22·u41)/√2.
        let u = random_unitary(4, 42);
        let out = substitute(&bell_polynomial(BellState::PhiPlus), &u).unwrap();
        let expected = (u.get(0, 0) * u.get(2, 1)
            + u.get(0, 1) * u.get(2, 0)
            + u.get(1, 0) * u.get(3, 1)
            + u.get(1, 1) * u.get(3, 0))
            / 2f64.sqrt();
        assert!((out.coefficient(&occ(&[1, 1, 0, 0])) - expected).norm() < 1e-14);

        // And the (2,0,0,0) amplitude is u11·u31 + u21·u41 after the √2
        // normalization cancels the Bell 1/√2.
        let expected2 = u.get(0, 0) * u.get(2, 0) + u.get(1, 0) * u.get(3, 0);
        assert!((out.amplitude(&occ(&[2, 0, 0, 0])) - expected2).norm() < 1e-14);
    }

    #[test]
    fn amplitude_identity_examples() {
        let phi_plus = bell_polynomial(BellState::PhiPlus);
        let id = UnitaryMatrix::identity(4);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let a = amplitude(&id, &phi_plus, &occ(&[1, 0, 1, 0])).unwrap();
        assert!((a - Complex64::new(s, 0.0)).norm() < 1e-15);
        let a = amplitude(&id, &phi_plus, &occ(&[2, 0, 0, 0])).unwrap();
        assert_eq!(a, Complex64::ZERO);
        let o = amplitude_oracle(&id, &phi_plus, &occ(&[1, 0, 1, 0])).unwrap();
        assert!((o - Complex64::new(s, 0.0)).norm() < 1e-15);

        // Photon-count mismatch is a caller bug, not a zero.
        assert!(matches!(
            amplitude(&id, &phi_plus, &occ(&[1, 0, 0, 0])),
            Err(Error::PhotonMismatch { .. })
        ));
    }

    #[test]
    fn probability_normalization_over_events() {
        for (spec, seed) in [
            (AncillaSpec::Vacuum, 1u64),
            (AncillaSpec::SinglePhotons { k: 2 }, 2),
            (AncillaSpec::BellPairs { m: 1 }, 3),
        ] {
            let p_in = input_polynomial(BellState::PsiMinus, &spec).unwrap();
            let n = p_in.n_modes();
            let u = random_unitary(n, seed);
            let out = substitute(&p_in, &u).unwrap();
            let total: f64 = enumerate_events(n, spec.photons() + 2)
                .iter()
                .map(|e| out.amplitude(e).norm_sqr())
                .sum();
            assert!((total - 1.0).abs() < 1e-10, "{}: total {total}", spec.label());
        }
    }

    #[test]
    fn oracle_agrees_with_expansion() {
        for (spec, seeds) in [
            (AncillaSpec::Vacuum, 0..6u64),
            (AncillaSpec::SinglePhotons { k: 2 }, 6..10),
        ] {
            let n = spec.min_modes();
            for bell in BellState::ALL {
                let p_in = input_polynomial(bell, &spec).unwrap();
                for seed in seeds.clone() {
                    let u = random_unitary(n, seed);
                    let out = substitute(&p_in, &u).unwrap();
                    for e in enumerate_events(n, spec.photons() + 2) {
                        let direct = out.amplitude(&e);
                        let oracle = amplitude_oracle(&u, &p_in, &e).unwrap();
                        assert!(
                            (direct - oracle).norm() < 1e-12,
                            "{} {bell} {e}: {direct} vs {oracle}",
                            spec.label()
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn column_permutation_covariance() {
        // amplitude(U, P, σ(e)) = amplitude(U·P_σ⁻¹ columns, P, e):
        // permuting detector labels is the same as permuting U's columns.
        let spec = AncillaSpec::SinglePhotons { k: 1 };
        let p_in = input_polynomial(BellState::PhiMinus, &spec).unwrap();
        let n = p_in.n_modes();
        let u = random_unitary(n, 11);
        let perm = [2usize, 0, 4, 1, 3]; // σ: position i of e moves to perm[i]
        let permuted_u = {
            let mut m = u.as_matrix().clone();
            for i in 0..n {
                for j in 0..n {
                    m[(i, perm[j])] = u.get(i, j);
                }
            }
            UnitaryMatrix::from_matrix(m)
        };
        for e in enumerate_events(n, 3) {
            let mut permuted_e = vec![0u32; n];
            for (j, &c) in e.iter().enumerate() {
                permuted_e[perm[j]] = c;
            }
            let lhs = amplitude(&permuted_u, &p_in, &permuted_e.into()).unwrap();
            let rhs = amplitude(&u, &p_in, &e).unwrap();
            assert!((lhs - rhs).norm() < 1e-13);
        }
    }

    #[test]
    fn circuit_builder() {
        let empty = circuit_to_unitary(&Circuit { elements: vec![] }, 3).unwrap();
        assert_eq!(empty, UnitaryMatrix::identity(3));

        let quarter = Circuit {
            elements: vec![CircuitElement::Beamsplitter { i: 1, j: 2, theta: std::f64::consts::FRAC_PI_4 }],
        };
        let u = circuit_to_unitary(&quarter, 2).unwrap();
        u.validate(1e-15).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((u.get(0, 0).re - s).abs() < 1e-15);
        assert!((u.get(0, 1).re + s).abs() < 1e-15);
        assert!((u.get(1, 0).re - s).abs() < 1e-15);

        // Two π/4 rotations compose to a π/2 rotation: [[0,−1],[1,0]].
        let twice = Circuit {
            elements: vec![
                CircuitElement::Beamsplitter { i: 1, j: 2, theta: std::f64::consts::FRAC_PI_4 },
                CircuitElement::Beamsplitter { i: 1, j: 2, theta: std::f64::consts::FRAC_PI_4 },
            ],
        };
        let u2 = circuit_to_unitary(&twice, 2).unwrap();
        assert!((u2.get(0, 1).re + 1.0).abs() < 1e-15);
        assert!((u2.get(1, 0).re - 1.0).abs() < 1e-15);
        assert!(u2.get(0, 0).norm() < 1e-15);

        let phased = Circuit {
            elements: vec![
                CircuitElement::Phase { i: 2, phi: std::f64::consts::FRAC_PI_2 },
                CircuitElement::Swap { i: 1, j: 2 },
            ],
        };
        let u3 = circuit_to_unitary(&phased, 2).unwrap();
        // Row 2 got the phase, then rows swapped: a†₂ → i·c†... swap acts on
        // the *output* composition: total = Phase·Swap.
        assert!((u3.get(1, 0) - Complex64::new(0.0, 1.0)).norm() < 1e-15);
        assert!((u3.get(0, 1) - Complex64::ONE).norm() < 1e-15);

        assert!(circuit_to_unitary(
            &Circuit { elements: vec![CircuitElement::Phase { i: 3, phi: 0.1 }] },
            2
        )
        .is_err());
        assert!(circuit_to_unitary(
            &Circuit { elements: vec![CircuitElement::Beamsplitter { i: 1, j: 1, theta: 0.3 }] },
            2
        )
        .is_err());
    }

    #[test]
    fn hong_ou_mandel_on_psi_minus() {
        // 50:50 beamsplitters on (1,2) and (3,4): the singlet is invariant
        // under U⊗U, so photons never bunch into the same dual-rail pair.
        let circuit = Circuit {
            elements: vec![
                CircuitElement::Beamsplitter { i: 1, j: 2, theta: std::f64::consts::FRAC_PI_4 },
                CircuitElement::Beamsplitter { i: 3, j: 4, theta: std::f64::consts::FRAC_PI_4 },
            ],
        };
        let u = circuit_to_unitary(&circuit, 4).unwrap();
        let psi_minus = bell_polynomial(BellState::PsiMinus);
        let out = substitute(&psi_minus, &u).unwrap();
        assert!(out.amplitude(&occ(&[1, 1, 0, 0])).norm() < 1e-14);
        assert!(out.amplitude(&occ(&[0, 0, 1, 1])).norm() < 1e-14);
        assert!(out.amplitude(&occ(&[2, 0, 0, 0])).norm() < 1e-14);
        assert!((out.amplitude(&occ(&[1, 0, 0, 1])).norm_sqr() - 0.5).abs() < 1e-12);
        assert!((out.amplitude(&occ(&[0, 1, 1, 0])).norm_sqr() - 0.5).abs() < 1e-12);
        // Cross-check through the permanent oracle.
        let o = amplitude_oracle(&u, &psi_minus, &occ(&[1, 1, 0, 0])).unwrap();
        assert!(o.norm() < 1e-14);
    }

    #[test]
    fn unitary_serde_roundtrip() {
        let u = random_unitary(3, 99);
        let json = serde_json::to_string(&u).unwrap();
        let back: UnitaryMatrix = serde_json::from_str(&json).unwrap();
        assert_eq!(u, back);
        assert_eq!(u.content_hash(), back.content_hash());
        assert_eq!(u.content_hash().len(), 16);

        // Shape mismatch and unknown keys are rejected.
        assert!(serde_json::from_str::<UnitaryMatrix>(r#"{"n":2,"re":[[1,0]],"im":[[0,0]]}"#).is_err());
        assert!(serde_json::from_str::<UnitaryMatrix>(
            r#"{"n":1,"re":[[1]],"im":[[0]],"x":3}"#
        )
        .is_err());

        // A near-identity with a defect fails validation with the deviation.
        let mut m = DMatrix::<Complex64>::identity(2, 2);
        m[(0, 0)] = Complex64::new(1.1, 0.0);
        let bad = UnitaryMatrix::from_matrix(m);
        match bad.validate(1e-9) {
            Err(Error::NotUnitary { deviation, .. }) => assert!(deviation > 0.1),
            other => panic!("expected NotUnitary, got {other:?}"),
        }
        // Polar projection repairs it.
        bad.project_unitary().validate(1e-12).unwrap();
    }
}

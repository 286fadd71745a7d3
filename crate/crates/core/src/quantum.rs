//! Exact statevector simulation of the handful of primitives the protocol
//! needs: Bell pairs, Bell-state measurement, Pauli corrections, Hadamard
//! basis measurement, teleportation and entanglement swapping.
//!
//! Amplitude ordering is big-endian in qubit index: qubit 0 is the most
//! significant bit of the basis-state index. A two-qubit register therefore
//! lists amplitudes as `|00>, |01>, |10>, |11>` with the first qubit on the
//! left.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Absolute tolerance for every floating comparison in the crate.
pub const TOLERANCE: f64 = 1e-9;

/// Largest register a [`StateVector`] accepts unless a different limit is given.
pub const DEFAULT_MAX_QUBITS: usize = 24;

/// A classical bit, always 0 or 1.
pub type Bit = u8;

/// A normalized single-qubit pure state `alpha|0> + beta|1>`.
pub type Qubit = [Complex64; 2];

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

pub fn ket_zero() -> Qubit {
    [Complex64::new(1.0, 0.0), ZERO]
}

pub fn ket_one() -> Qubit {
    [ZERO, Complex64::new(1.0, 0.0)]
}

pub fn ket_plus() -> Qubit {
    [Complex64::new(FRAC_1_SQRT_2, 0.0); 2]
}

pub fn ket_minus() -> Qubit {
    [
        Complex64::new(FRAC_1_SQRT_2, 0.0),
        Complex64::new(-FRAC_1_SQRT_2, 0.0),
    ]
}

/// `|+>` for 0, `|->` for 1.
pub fn hadamard_eigenstate(bit: Bit) -> Qubit {
    if bit == 0 {
        ket_plus()
    } else {
        ket_minus()
    }
}

fn check_bit(name: &str, v: Bit) {
    assert!(v <= 1, "{name} must be 0 or 1, got {v}");
}

macro_rules! two_bit_label {
    ($(#[$meta:meta])* $name:ident, $first:ident, $second:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub struct $name {
            $first: Bit,
            $second: Bit,
        }

        impl $name {
            pub const ALL: [$name; 4] = [
                $name { $first: 0, $second: 0 },
                $name { $first: 0, $second: 1 },
                $name { $first: 1, $second: 0 },
                $name { $first: 1, $second: 1 },
            ];

            /// Panics if either argument is not a bit.
            pub fn new($first: Bit, $second: Bit) -> Self {
                check_bit(stringify!($first), $first);
                check_bit(stringify!($second), $second);
                Self { $first, $second }
            }

            pub fn $first(self) -> Bit {
                self.$first
            }

            pub fn $second(self) -> Bit {
                self.$second
            }

            /// Packs the label as `2 * first + second`.
            pub fn index(self) -> u8 {
                2 * self.$first + self.$second
            }

            pub fn from_index(index: u8) -> Option<Self> {
                (index < 4).then(|| Self {
                    $first: index >> 1,
                    $second: index & 1,
                })
            }

            /// Bitwise XOR of two labels.
            pub fn xor(self, other: Self) -> Self {
                Self {
                    $first: self.$first ^ other.$first,
                    $second: self.$second ^ other.$second,
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}{}", self.$first, self.$second)
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                match s.as_str() {
                    "00" => Ok(Self::ALL[0]),
                    "01" => Ok(Self::ALL[1]),
                    "10" => Ok(Self::ALL[2]),
                    "11" => Ok(Self::ALL[3]),
                    other => Err(serde::de::Error::custom(format!(
                        "expected a two-bit string, got {other:?}"
                    ))),
                }
            }
        }
    };
}

two_bit_label!(
    /// Label `(a, b)` of the Bell state `(|0>|b> + (-1)^a |1>|1^b>) / sqrt(2)`.
    BellLabel,
    a,
    b
);

two_bit_label!(
    /// Two-bit result of a Bell-state measurement, using the same `(a, b)`
    /// labelling as [`BellLabel`]: projecting onto `|ab>` yields `(a, b)`.
    BsmOutcome,
    first,
    second
);

impl From<BsmOutcome> for BellLabel {
    fn from(o: BsmOutcome) -> Self {
        BellLabel::new(o.first(), o.second())
    }
}

/// Exponents `(k, k')` of the correction `sigma_z^k sigma_x^k'`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PauliFrame {
    k: Bit,
    k_prime: Bit,
}

impl PauliFrame {
    pub const IDENTITY: PauliFrame = PauliFrame { k: 0, k_prime: 0 };

    pub fn new(k: Bit, k_prime: Bit) -> Self {
        check_bit("k", k);
        check_bit("k_prime", k_prime);
        Self { k, k_prime }
    }

    /// sigma_z exponent.
    pub fn k(self) -> Bit {
        self.k
    }

    /// sigma_x exponent.
    pub fn k_prime(self) -> Bit {
        self.k_prime
    }
}

impl fmt::Display for PauliFrame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.k, self.k_prime) {
            (0, 0) => f.write_str("I"),
            (0, 1) => f.write_str("X"),
            (1, 0) => f.write_str("Z"),
            _ => f.write_str("ZX"),
        }
    }
}

/// Frame relating the receiver's half to the payload after a teleportation
/// over the Bell pair `shared` whose measurement gave `outcome = (b, b')`.
///
/// | shared | k     | k'     |
/// |--------|-------|--------|
/// | `00`   | b     | b'     |
/// | `01`   | b     | 1 ^ b' |
/// | `10`   | 1 ^ b | b'     |
/// | `11`   | 1 ^ b | 1 ^ b' |
pub fn pauli_frame_from(shared: BellLabel, outcome: BsmOutcome) -> PauliFrame {
    let (b, b_prime) = (outcome.first(), outcome.second());
    match (shared.a(), shared.b()) {
        (0, 0) => PauliFrame::new(b, b_prime),
        (0, 1) => PauliFrame::new(b, 1 ^ b_prime),
        (1, 0) => PauliFrame::new(1 ^ b, b_prime),
        _ => PauliFrame::new(1 ^ b, 1 ^ b_prime),
    }
}

/// Amplitudes of `|ab>` over `|00>, |01>, |10>, |11>`.
fn bell_amplitudes(label: BellLabel) -> [f64; 4] {
    let mut amps = [0.0; 4];
    let b = label.b() as usize;
    amps[b] = FRAC_1_SQRT_2;
    amps[2 + (1 - b)] = if label.a() == 0 {
        FRAC_1_SQRT_2
    } else {
        -FRAC_1_SQRT_2
    };
    amps
}

/// Global pure state of a small qubit register.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    num_qubits: usize,
    max_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// `|0...0>` on `num_qubits` qubits.
    pub fn zero(num_qubits: usize) -> Result<Self> {
        Self::zero_with_limit(num_qubits, DEFAULT_MAX_QUBITS)
    }

    pub fn zero_with_limit(num_qubits: usize, max_qubits: usize) -> Result<Self> {
        if num_qubits > max_qubits {
            return Err(Error::TooManyQubits {
                requested: num_qubits,
                max: max_qubits,
            });
        }
        let mut amplitudes = vec![ZERO; 1 << num_qubits];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        Ok(Self {
            num_qubits,
            max_qubits,
            amplitudes,
        })
    }

    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let len = amplitudes.len();
        if !len.is_power_of_two() {
            return Err(Error::InvalidTarget(format!(
                "amplitude count {len} is not a power of two"
            )));
        }
        let num_qubits = len.trailing_zeros() as usize;
        if num_qubits > DEFAULT_MAX_QUBITS {
            return Err(Error::TooManyQubits {
                requested: num_qubits,
                max: DEFAULT_MAX_QUBITS,
            });
        }
        let sv = Self {
            num_qubits,
            max_qubits: DEFAULT_MAX_QUBITS,
            amplitudes,
        };
        let norm = sv.norm_sqr();
        if (norm - 1.0).abs() > TOLERANCE {
            return Err(Error::NotNormalized(norm));
        }
        Ok(sv)
    }

    pub fn from_qubit(q: Qubit) -> Result<Self> {
        Self::from_amplitudes(q.to_vec())
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sqr() - 1.0).abs() <= TOLERANCE
    }

    /// `self ⊗ other`; the qubits of `other` are appended after those of `self`.
    pub fn tensor(&self, other: &StateVector) -> Result<StateVector> {
        let num_qubits = self.num_qubits + other.num_qubits;
        let max_qubits = self.max_qubits.min(other.max_qubits);
        if num_qubits > max_qubits {
            return Err(Error::TooManyQubits {
                requested: num_qubits,
                max: max_qubits,
            });
        }
        let mut amplitudes = Vec::with_capacity(1 << num_qubits);
        for a in &self.amplitudes {
            amplitudes.extend(other.amplitudes.iter().map(|b| a * b));
        }
        Ok(StateVector {
            num_qubits,
            max_qubits,
            amplitudes,
        })
    }

    fn mask(&self, q: usize) -> Result<usize> {
        if q >= self.num_qubits {
            return Err(Error::InvalidTarget(format!(
                "qubit {q} outside a {}-qubit register",
                self.num_qubits
            )));
        }
        Ok(1 << (self.num_qubits - 1 - q))
    }

    fn pair_masks(&self, q1: usize, q2: usize) -> Result<(usize, usize)> {
        if q1 == q2 {
            return Err(Error::InvalidTarget(format!(
                "two-qubit operation on a single qubit {q1}"
            )));
        }
        Ok((self.mask(q1)?, self.mask(q2)?))
    }

    pub fn apply_x(&mut self, q: usize) -> Result<()> {
        let m = self.mask(q)?;
        for i in (0..self.amplitudes.len()).filter(|i| i & m == 0) {
            self.amplitudes.swap(i, i | m);
        }
        Ok(())
    }

    pub fn apply_z(&mut self, q: usize) -> Result<()> {
        let m = self.mask(q)?;
        for (i, a) in self.amplitudes.iter_mut().enumerate() {
            if i & m != 0 {
                *a = -*a;
            }
        }
        Ok(())
    }

    pub fn apply_h(&mut self, q: usize) -> Result<()> {
        let m = self.mask(q)?;
        for i in (0..self.amplitudes.len()).filter(|i| i & m == 0) {
            let (a0, a1) = (self.amplitudes[i], self.amplitudes[i | m]);
            self.amplitudes[i] = (a0 + a1) * FRAC_1_SQRT_2;
            self.amplitudes[i | m] = (a0 - a1) * FRAC_1_SQRT_2;
        }
        Ok(())
    }

    /// Applies `sigma_z^k sigma_x^k'` to `q`: the bit flip first, then the phase.
    pub fn apply_pauli(&mut self, q: usize, frame: PauliFrame) -> Result<()> {
        self.mask(q)?;
        if frame.k_prime() == 1 {
            self.apply_x(q)?;
        }
        if frame.k() == 1 {
            self.apply_z(q)?;
        }
        Ok(())
    }

    /// Undoes [`apply_pauli`](Self::apply_pauli): `sigma_x^k' sigma_z^k`.
    pub fn apply_pauli_inverse(&mut self, q: usize, frame: PauliFrame) -> Result<()> {
        self.mask(q)?;
        if frame.k() == 1 {
            self.apply_z(q)?;
        }
        if frame.k_prime() == 1 {
            self.apply_x(q)?;
        }
        Ok(())
    }

    /// Overlaps `<label|_{q1 q2}` for every basis state of the other qubits,
    /// visiting each group of four amplitudes once.
    fn for_each_quad(&self, m1: usize, m2: usize, mut f: impl FnMut(usize, [Complex64; 4])) {
        let both = m1 | m2;
        for i in (0..self.amplitudes.len()).filter(|i| i & both == 0) {
            let quad = [
                self.amplitudes[i],
                self.amplitudes[i | m2],
                self.amplitudes[i | m1],
                self.amplitudes[i | both],
            ];
            f(i, quad);
        }
    }

    /// Born probabilities of the four Bell outcomes on `(q1, q2)`, indexed by
    /// [`BsmOutcome::index`].
    pub fn bell_probabilities(&self, q1: usize, q2: usize) -> Result<[f64; 4]> {
        let (m1, m2) = self.pair_masks(q1, q2)?;
        let bells = BellLabel::ALL.map(bell_amplitudes);
        let mut probs = [0.0; 4];
        self.for_each_quad(m1, m2, |_, quad| {
            for (p, bell) in probs.iter_mut().zip(&bells) {
                let c: Complex64 = quad.iter().zip(bell).map(|(a, b)| a * *b).sum();
                *p += c.norm_sqr();
            }
        });
        Ok(probs)
    }

    /// Projects `(q1, q2)` onto `|outcome>` and renormalizes. Returns the
    /// probability of that projection; a zero-probability projection is
    /// rejected.
    pub fn project_bell(&mut self, q1: usize, q2: usize, outcome: BsmOutcome) -> Result<f64> {
        let (m1, m2) = self.pair_masks(q1, q2)?;
        let bell = bell_amplitudes(outcome.into());
        let mut overlaps = Vec::with_capacity(self.amplitudes.len() / 4);
        let mut prob = 0.0;
        self.for_each_quad(m1, m2, |i, quad| {
            let c: Complex64 = quad.iter().zip(&bell).map(|(a, b)| a * *b).sum();
            prob += c.norm_sqr();
            overlaps.push((i, c));
        });
        if prob <= TOLERANCE * TOLERANCE {
            return Err(Error::InvalidTarget(format!(
                "Bell projection onto {outcome} has zero probability"
            )));
        }
        let scale = 1.0 / prob.sqrt();
        for (i, c) in overlaps {
            let c = c * scale;
            self.amplitudes[i] = c * bell[0];
            self.amplitudes[i | m2] = c * bell[1];
            self.amplitudes[i | m1] = c * bell[2];
            self.amplitudes[i | m1 | m2] = c * bell[3];
        }
        Ok(prob)
    }

    /// Hadamard-basis probabilities `(p(+), p(-))` for qubit `q`.
    pub fn hadamard_probabilities(&self, q: usize) -> Result<[f64; 2]> {
        let m = self.mask(q)?;
        let mut probs = [0.0; 2];
        for i in (0..self.amplitudes.len()).filter(|i| i & m == 0) {
            let (a0, a1) = (self.amplitudes[i], self.amplitudes[i | m]);
            probs[0] += ((a0 + a1) * FRAC_1_SQRT_2).norm_sqr();
            probs[1] += ((a0 - a1) * FRAC_1_SQRT_2).norm_sqr();
        }
        Ok(probs)
    }

    /// Projects `q` onto `|+>` (0) or `|->` (1) and renormalizes.
    pub fn project_hadamard(&mut self, q: usize, bit: Bit) -> Result<f64> {
        let m = self.mask(q)?;
        let sign = if bit == 0 { 1.0 } else { -1.0 };
        let prob = self.hadamard_probabilities(q)?[bit as usize];
        if prob <= TOLERANCE * TOLERANCE {
            return Err(Error::InvalidTarget(format!(
                "Hadamard projection onto {bit} has zero probability"
            )));
        }
        let scale = 1.0 / prob.sqrt();
        for i in (0..self.amplitudes.len()).filter(|i| i & m == 0) {
            let (a0, a1) = (self.amplitudes[i], self.amplitudes[i | m]);
            let c = (a0 + a1 * sign) * 0.5 * scale;
            self.amplitudes[i] = c;
            self.amplitudes[i | m] = c * sign;
        }
        Ok(prob)
    }

    /// Reduced pure state of `q`, provided `q` is not entangled with the rest.
    pub fn qubit_state(&self, q: usize) -> Result<Qubit> {
        let m = self.mask(q)?;
        let (row0, row1): (Vec<_>, Vec<_>) = (0..self.amplitudes.len())
            .filter(|i| i & m == 0)
            .map(|i| (self.amplitudes[i], self.amplitudes[i | m]))
            .unzip();
        let n0: f64 = row0.iter().map(|a| a.norm_sqr()).sum();
        let n1: f64 = row1.iter().map(|a| a.norm_sqr()).sum();
        let cross: Complex64 = row0.iter().zip(&row1).map(|(a, b)| a.conj() * b).sum();
        // Gram determinant vanishes iff the 2 x 2^(n-1) coefficient matrix has rank 1.
        if n0 * n1 - cross.norm_sqr() > TOLERANCE {
            return Err(Error::NotProduct { qubit: q });
        }
        let (dominant, norm) = if n0 >= n1 { (&row0, n0) } else { (&row1, n1) };
        let scale = 1.0 / norm.sqrt();
        let project = |row: &[Complex64]| -> Complex64 {
            dominant
                .iter()
                .zip(row)
                .map(|(u, r)| u.conj() * r)
                .sum::<Complex64>()
                * scale
        };
        let state = [project(&row0), project(&row1)];
        let total = (state[0].norm_sqr() + state[1].norm_sqr()).sqrt();
        Ok([state[0] / total, state[1] / total])
    }

    /// True if both states agree up to a global phase.
    pub fn approx_eq_up_to_phase(&self, other: &StateVector) -> bool {
        self.num_qubits == other.num_qubits
            && approx_eq_up_to_phase(&self.amplitudes, &other.amplitudes)
    }
}

/// Rotates `amps` so its first non-negligible amplitude is real and positive.
pub fn canonical_phase(amps: &[Complex64]) -> Vec<Complex64> {
    match amps.iter().find(|a| a.norm() > TOLERANCE) {
        Some(lead) => {
            let phase = lead.conj() / lead.norm();
            amps.iter().map(|a| a * phase).collect()
        }
        None => amps.to_vec(),
    }
}

pub fn approx_eq_up_to_phase(a: &[Complex64], b: &[Complex64]) -> bool {
    a.len() == b.len()
        && canonical_phase(a)
            .iter()
            .zip(canonical_phase(b))
            .all(|(x, y)| (x - y).norm() <= TOLERANCE)
}

/// `(|0>|b> + (-1)^a |1>|1^b>) / sqrt(2)` on two qubits.
pub fn make_bell(label: BellLabel) -> StateVector {
    let amplitudes = bell_amplitudes(label)
        .iter()
        .map(|&x| Complex64::new(x, 0.0))
        .collect();
    StateVector {
        num_qubits: 2,
        max_qubits: DEFAULT_MAX_QUBITS,
        amplitudes,
    }
}

/// Identifies which Bell state a two-qubit vector is, up to global phase.
pub fn identify_bell(amps: &[Complex64]) -> Option<BellLabel> {
    BellLabel::ALL
        .into_iter()
        .find(|&l| approx_eq_up_to_phase(amps, make_bell(l).amplitudes()))
}

fn sample_index(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= TOLERANCE * TOLERANCE {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding gap above the cumulative sum.
    last
}

/// Bell-state measurement on `(q1, q2)`. Draws one uniform `f64` from `rng`.
pub fn bsm(
    state: &mut StateVector,
    q1: usize,
    q2: usize,
    rng: &mut impl Rng,
) -> Result<BsmOutcome> {
    let probs = state.bell_probabilities(q1, q2)?;
    let outcome = BsmOutcome::ALL[sample_index(&probs, rng)];
    state.project_bell(q1, q2, outcome)?;
    Ok(outcome)
}

pub fn apply_pauli(state: &mut StateVector, q: usize, frame: PauliFrame) -> Result<()> {
    state.apply_pauli(q, frame)
}

/// Measures `q` in `{|+>, |->}`, returning 0 for `|+>` and 1 for `|->`.
/// Draws one uniform `f64` from `rng`.
pub fn hadamard_measure(state: &mut StateVector, q: usize, rng: &mut impl Rng) -> Result<Bit> {
    let probs = state.hadamard_probabilities(q)?;
    let bit = sample_index(&probs, rng) as Bit;
    state.project_hadamard(q, bit)?;
    Ok(bit)
}

/// Teleports `payload` over the pair `(sender_half, receiver)` prepared as
/// `make_bell(shared)`. After the call the receiver holds
/// `sigma_z^k sigma_x^k' |payload>` for the returned frame.
pub fn teleport(
    state: &mut StateVector,
    payload: usize,
    sender_half: usize,
    shared: BellLabel,
    rng: &mut impl Rng,
) -> Result<(BsmOutcome, PauliFrame)> {
    let outcome = bsm(state, payload, sender_half, rng)?;
    Ok((outcome, pauli_frame_from(shared, outcome)))
}

/// Label of the outer pair produced by swapping `make_bell(shared1)` and
/// `make_bell(shared2)` with Bell outcome `outcome` on the inner halves.
/// Pauli labels compose by XOR once global phases are ignored.
pub fn swapped_label(shared1: BellLabel, shared2: BellLabel, outcome: BsmOutcome) -> BellLabel {
    shared1.xor(shared2).xor(outcome.into())
}

/// Bell measurement on `(mid1, mid2)` where `(outer1, mid1)` was prepared as
/// `make_bell(shared1)` and `(mid2, outer2)` as `make_bell(shared2)`. Returns the
/// outcome and the label of the now-entangled outer pair.
pub fn entanglement_swap(
    state: &mut StateVector,
    mid1: usize,
    mid2: usize,
    shared1: BellLabel,
    shared2: BellLabel,
    rng: &mut impl Rng,
) -> Result<(BsmOutcome, BellLabel)> {
    let outcome = bsm(state, mid1, mid2, rng)?;
    Ok((outcome, swapped_label(shared1, shared2, outcome)))
}

/// `|<target|q>|^2` for an unentangled qubit `q`.
pub fn fidelity(state: &StateVector, q: usize, target: Qubit) -> Result<f64> {
    let t_norm = target[0].norm_sqr() + target[1].norm_sqr();
    if (t_norm - 1.0).abs() > TOLERANCE {
        return Err(Error::NotNormalized(t_norm));
    }
    let psi = state.qubit_state(q)?;
    let overlap = target[0].conj() * psi[0] + target[1].conj() * psi[1];
    Ok(overlap.norm_sqr().clamp(0.0, 1.0))
}

//! Brute-force reference checks built from dense matrices.
//!
//! Nothing here goes through [`StateVector`](crate::quantum::StateVector):
//! states are plain `nalgebra` vectors, projectors are assembled entry by
//! entry, and Pauli operators are embedded with explicit Kronecker products.
//! The functions under test are passed in, so a deliberately broken table
//! can be fed through the same suites.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};

use crate::quantum::{BellLabel, Bit, BsmOutcome, PauliFrame, TOLERANCE};

type Vector = DVector<Complex64>;
type Matrix = DMatrix<Complex64>;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Bell vector written straight from `(|0>|b> + (-1)^a |1>|1^b>) / sqrt(2)`.
pub fn bell_vector(label: BellLabel) -> Vector {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut v = Vector::zeros(4);
    let b = label.b() as usize;
    v[b] = c(s);
    v[2 + (1 - b)] = c(if label.a() == 1 { -s } else { s });
    v
}

pub fn kron_vec(a: &Vector, b: &Vector) -> Vector {
    Vector::from_fn(a.len() * b.len(), |i, _| a[i / b.len()] * b[i % b.len()])
}

pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    a.kronecker(b)
}

fn pauli_x() -> Matrix {
    Matrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)])
}

fn pauli_z() -> Matrix {
    Matrix::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(-1.0)])
}

/// `Z^k X^k'` as a 2x2 matrix.
pub fn frame_matrix(frame: PauliFrame) -> Matrix {
    let mut m = Matrix::identity(2, 2);
    if frame.k() == 1 {
        m = &m * pauli_z();
    }
    if frame.k_prime() == 1 {
        m = &m * pauli_x();
    }
    m
}

/// Single-qubit operator acting on qubit `q` of an `n`-qubit register
/// (qubit 0 is the leftmost tensor factor).
pub fn embed(op: &Matrix, q: usize, n: usize) -> Matrix {
    (0..n).fold(Matrix::identity(1, 1), |acc, i| {
        if i == q {
            kron(&acc, op)
        } else {
            kron(&acc, &Matrix::identity(2, 2))
        }
    })
}

/// `|L><L|` on qubits `(q1, q2)` of an `n`-qubit register, assembled entry
/// by entry from the basis expansion.
pub fn bell_projector(q1: usize, q2: usize, label: BellLabel, n: usize) -> Matrix {
    let dim = 1usize << n;
    let bell = bell_vector(label);
    let bit = |i: usize, q: usize| (i >> (n - 1 - q)) & 1;
    let rest_mask = !((1usize << (n - 1 - q1)) | (1usize << (n - 1 - q2)));
    Matrix::from_fn(dim, dim, |i, j| {
        if i & rest_mask != j & rest_mask {
            return c(0.0);
        }
        let bi = 2 * bit(i, q1) + bit(i, q2);
        let bj = 2 * bit(j, q1) + bit(j, q2);
        bell[bi] * bell[bj].conj()
    })
}

/// Uniformly random direction in C^2 from four normal deviates.
pub fn random_qubit(rng: &mut impl Rng) -> [Complex64; 2] {
    loop {
        let mut g = [0.0f64; 4];
        for x in g.iter_mut() {
            // Box-Muller
            let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
            let u2: f64 = rng.gen();
            *x = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        }
        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            return [
                Complex64::new(g[0] / norm, g[1] / norm),
                Complex64::new(g[2] / norm, g[3] / norm),
            ];
        }
    }
}

fn qubit_vec(q: [Complex64; 2]) -> Vector {
    Vector::from_vec(q.to_vec())
}

/// Projects `state` with `proj` and renormalizes.
fn project(state: &Vector, proj: &Matrix) -> Option<Vector> {
    let v = proj * state;
    let norm = v.norm();
    (norm > TOLERANCE).then(|| v / c(norm))
}

fn overlap_sq(a: &Vector, b: &Vector) -> f64 {
    a.dotc(b).norm_sqr()
}

/// Receiver state after teleporting `payload` over `bell(shared)` with the
/// Bell outcome forced to `outcome`. Register order: payload, sender half,
/// receiver half. The returned vector is the full 3-qubit post-measurement state.
fn teleport_projected(payload: [Complex64; 2], shared: BellLabel, outcome: BsmOutcome) -> Vector {
    let state = kron_vec(&qubit_vec(payload), &bell_vector(shared));
    project(&state, &bell_projector(0, 1, outcome.into(), 3))
        .expect("every Bell outcome has probability 1/4 in teleportation")
}

/// Result of one oracle suite.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    pub cases: usize,
    pub failures: Vec<String>,
}

impl SuiteReport {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            cases: 0,
            failures: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, describe: impl FnOnce() -> String) {
        self.cases += 1;
        if !ok {
            self.failures.push(describe());
        }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed() { "PASS" } else { "FAIL" };
        write!(
            f,
            "{status} {:<10} {} cases, {} failures",
            self.name,
            self.cases,
            self.failures.len()
        )?;
        for msg in self.failures.iter().take(5) {
            write!(f, "\n    {msg}")?;
        }
        Ok(())
    }
}

/// Teleports every payload over all 16 (shared, outcome) combinations, undoes
/// the frame reported by `frame_fn` on the receiver, and checks fidelity 1.
pub fn teleport_round_trip(
    frame_fn: impl Fn(BellLabel, BsmOutcome) -> PauliFrame,
    payloads: &[[Complex64; 2]],
) -> SuiteReport {
    let mut report = SuiteReport::new("teleport");
    for shared in BellLabel::ALL {
        for outcome in BsmOutcome::ALL {
            let frame = frame_fn(shared, outcome);
            let inverse = frame_matrix(frame)
                .try_inverse()
                .expect("Pauli products are invertible");
            let undo = embed(&inverse, 2, 3);
            for (i, &payload) in payloads.iter().enumerate() {
                let restored = &undo * teleport_projected(payload, shared, outcome);
                let target = kron_vec(&bell_vector(outcome.into()), &qubit_vec(payload));
                let fid = overlap_sq(&target, &restored);
                report.check((fid - 1.0).abs() <= TOLERANCE, || {
                    format!("shared {shared} outcome {outcome} payload #{i}: fidelity {fid}")
                });
            }
        }
    }
    report
}

/// Derives the frame for `(shared, outcome)` by trying all four Pauli
/// corrections against a fixed generic payload.
pub fn derive_frame(shared: BellLabel, outcome: BsmOutcome) -> Option<PauliFrame> {
    let payload = [
        Complex64::new(0.6, 0.1),
        Complex64::new(0.3, -0.734_846_922_834_953_4),
    ];
    let norm = (payload[0].norm_sqr() + payload[1].norm_sqr()).sqrt();
    let payload = [payload[0] / norm, payload[1] / norm];
    let projected = teleport_projected(payload, shared, outcome);
    [(0, 0), (0, 1), (1, 0), (1, 1)]
        .into_iter()
        .map(|(k, kp)| PauliFrame::new(k, kp))
        .find(|&frame| {
            let expected = kron_vec(
                &bell_vector(outcome.into()),
                &(frame_matrix(frame) * qubit_vec(payload)),
            );
            (overlap_sq(&expected, &projected) - 1.0).abs() <= TOLERANCE
        })
}

/// Compares `frame_fn` against brute-force derivation on all 16 inputs.
pub fn frame_table(frame_fn: impl Fn(BellLabel, BsmOutcome) -> PauliFrame) -> SuiteReport {
    let mut report = SuiteReport::new("frame");
    for shared in BellLabel::ALL {
        for outcome in BsmOutcome::ALL {
            let derived = derive_frame(shared, outcome);
            let claimed = frame_fn(shared, outcome);
            report.check(derived == Some(claimed), || {
                format!("shared {shared} outcome {outcome}: table {claimed}, derived {derived:?}")
            });
        }
    }
    report
}

/// Outer-pair label after swapping `bell(shared1)` on qubits (0, 1) with
/// `bell(shared2)` on qubits (2, 3), measuring (1, 2) with forced `outcome`.
pub fn derive_swap_label(
    shared1: BellLabel,
    shared2: BellLabel,
    outcome: BsmOutcome,
) -> Option<BellLabel> {
    let state = kron_vec(&bell_vector(shared1), &bell_vector(shared2));
    let projected = project(&state, &bell_projector(1, 2, outcome.into(), 4))?;
    let inner = bell_vector(outcome.into());
    BellLabel::ALL.into_iter().find(|&outer| {
        let outer_v = bell_vector(outer);
        let target = Vector::from_fn(16, |i, _| {
            let (o1, m1, m2, o2) = ((i >> 3) & 1, (i >> 2) & 1, (i >> 1) & 1, i & 1);
            outer_v[2 * o1 + o2] * inner[2 * m1 + m2]
        });
        (overlap_sq(&target, &projected) - 1.0).abs() <= TOLERANCE
    })
}

/// Checks `label_fn` against all 64 (shared1, shared2, outcome) cases.
pub fn swap_labels(
    label_fn: impl Fn(BellLabel, BellLabel, BsmOutcome) -> BellLabel,
) -> SuiteReport {
    let mut report = SuiteReport::new("swap");
    for s1 in BellLabel::ALL {
        for s2 in BellLabel::ALL {
            for outcome in BsmOutcome::ALL {
                let derived = derive_swap_label(s1, s2, outcome);
                let claimed = label_fn(s1, s2, outcome);
                report.check(derived == Some(claimed), || {
                    format!("shared {s1},{s2} outcome {outcome}: claimed {claimed}, derived {derived:?}")
                });
            }
        }
    }
    report
}

/// Checks that the single announced bit, decoded with the secret label,
/// reproduces the sigma_z exponent of the full frame on all 16 inputs.
pub fn reduction_table(
    reduce_fn: impl Fn(BsmOutcome) -> Bit,
    decode_fn: impl Fn(Bit, BellLabel) -> Bit,
    frame_fn: impl Fn(BellLabel, BsmOutcome) -> PauliFrame,
) -> SuiteReport {
    let mut report = SuiteReport::new("reduction");
    for shared in BellLabel::ALL {
        for pp in BsmOutcome::ALL {
            let announced = reduce_fn(pp);
            let decoded = decode_fn(announced, shared);
            let expected = frame_fn(shared, pp).k();
            report.check(decoded == expected, || {
                format!("shared {shared} pp' {pp}: announced {announced} decodes to {decoded}, frame k = {expected}")
            });
        }
    }
    report
}

/// The oracle suites available to the self-test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Teleport,
    Swap,
    Frame,
    Reduction,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Teleport, Suite::Swap, Suite::Frame, Suite::Reduction];
}

/// The simulator functions the self-test exercises.
#[derive(Clone, Copy)]
pub struct Implementations {
    pub frame: fn(BellLabel, BsmOutcome) -> PauliFrame,
    pub swap: fn(BellLabel, BellLabel, BsmOutcome) -> BellLabel,
    pub reduce: fn(BsmOutcome) -> Bit,
    pub decode: fn(Bit, BellLabel) -> Bit,
}

impl Default for Implementations {
    fn default() -> Self {
        Self {
            frame: crate::quantum::pauli_frame_from,
            swap: crate::quantum::swapped_label,
            reduce: crate::protocol::reduce_announcement,
            decode: crate::protocol::phase_exponent_from_bit,
        }
    }
}

/// Random payloads per (shared, outcome) case in the teleport suite.
pub const SELFTEST_PAYLOADS: usize = 100;

/// Runs the requested suites against `imp`.
pub fn run_selftest(suites: &[Suite], imp: &Implementations) -> Vec<SuiteReport> {
    suites
        .iter()
        .map(|suite| match suite {
            Suite::Teleport => {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x7e1e);
                let payloads: Vec<_> = (0..SELFTEST_PAYLOADS)
                    .map(|_| random_qubit(&mut rng))
                    .collect();
                teleport_round_trip(imp.frame, &payloads)
            }
            Suite::Swap => swap_labels(imp.swap),
            Suite::Frame => frame_table(imp.frame),
            Suite::Reduction => reduction_table(imp.reduce, imp.decode, imp.frame),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projector_is_idempotent_and_hermitian() {
        for l in BellLabel::ALL {
            let p = bell_projector(0, 2, l, 3);
            assert!((&p * &p - &p).norm() < 1e-12);
            assert!((p.adjoint() - &p).norm() < 1e-12);
            assert!((p.trace().re - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn embed_places_operator_on_the_right_factor() {
        let x0 = embed(&pauli_x(), 0, 2);
        let v = Vector::from_vec(vec![c(1.0), c(0.0), c(0.0), c(0.0)]);
        assert_eq!((x0 * v)[2], c(1.0));
    }

    #[test]
    fn every_frame_is_derivable() {
        for s in BellLabel::ALL {
            for o in BsmOutcome::ALL {
                assert!(derive_frame(s, o).is_some(), "{s} {o}");
            }
        }
    }
}

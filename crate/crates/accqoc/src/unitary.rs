//! Dense complex linear algebra for small unitaries.
//!
//! Everything here is generic over the real scalar; the pipeline uses the
//! `f64` aliases. Qubit ordering is big-endian: the first qubit of a group
//! is the most significant bit of the basis index.

use crate::circuit::{Gate, GateKind};
use crate::scalar::{cnorm, cnorm_sqr, Scalar};
use nalgebra::DMatrix;
use num_complex::Complex;

pub type CMatrix<T> = DMatrix<Complex<T>>;

/// A 2x2 or 4x4 unitary matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Unitary<T: Scalar> {
    m: CMatrix<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum SimilarityFn {
    /// Entrywise absolute difference.
    D1,
    /// Frobenius norm of the difference.
    D2,
    /// Trace distance `dim - |Tr(A^dag B)|`.
    D3Trace,
    /// Fidelity-derived distance; coincides with the trace form for unitaries.
    D4Fid,
    /// Reciprocal of D4, an anti-metric used only as a negative control.
    D4Inv,
}

impl SimilarityFn {
    pub fn parse(s: &str) -> Option<SimilarityFn> {
        match s {
            "d1" => Some(SimilarityFn::D1),
            "d2" => Some(SimilarityFn::D2),
            "d3" => Some(SimilarityFn::D3Trace),
            "d4" => Some(SimilarityFn::D4Fid),
            "d4inv" => Some(SimilarityFn::D4Inv),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            SimilarityFn::D1 => "d1",
            SimilarityFn::D2 => "d2",
            SimilarityFn::D3Trace => "d3",
            SimilarityFn::D4Fid => "d4",
            SimilarityFn::D4Inv => "d4inv",
        }
    }
}

impl<T: Scalar> Unitary<T> {
    pub fn from_matrix(m: CMatrix<T>) -> Unitary<T> {
        debug_assert!(
            unitarity_defect(&m) < T::of(1e-6),
            "matrix is not unitary (defect {:?})",
            unitarity_defect(&m)
        );
        Unitary { m }
    }

    pub fn identity(dim: usize) -> Unitary<T> {
        Unitary { m: CMatrix::identity(dim, dim) }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &CMatrix<T> {
        &self.m
    }

    pub fn into_matrix(self) -> CMatrix<T> {
        self.m
    }
}

/// Frobenius norm of `U^dag U - I`.
pub fn unitarity_defect<T: Scalar>(m: &CMatrix<T>) -> T {
    let d = m.nrows();
    let prod = m.adjoint() * m;
    let diff = prod - CMatrix::<T>::identity(d, d);
    diff.iter().map(cnorm_sqr).fold(T::zero(), |a, b| a + b).sqrt()
}

fn c<T: Scalar>(re: f64, im: f64) -> Complex<T> {
    Complex::new(T::of(re), T::of(im))
}

fn cis<T: Scalar>(theta: f64) -> Complex<T> {
    Complex::new(T::of(theta.cos()), T::of(theta.sin()))
}

/// Standard matrix of a gate on its own qubit ordering (control first for cx).
pub fn gate_unitary<T: Scalar>(kind: &GateKind) -> Unitary<T> {
    use std::f64::consts::FRAC_1_SQRT_2 as S2;
    let m = match *kind {
        GateKind::X => CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)]),
        GateKind::H => {
            CMatrix::from_row_slice(2, 2, &[c(S2, 0.), c(S2, 0.), c(S2, 0.), c(-S2, 0.)])
        }
        GateKind::T => phase_gate(std::f64::consts::FRAC_PI_4),
        GateKind::Tdg => phase_gate(-std::f64::consts::FRAC_PI_4),
        GateKind::S => phase_gate(std::f64::consts::FRAC_PI_2),
        GateKind::Sdg => phase_gate(-std::f64::consts::FRAC_PI_2),
        GateKind::U1(lambda) => phase_gate(lambda),
        GateKind::Rz(theta) => CMatrix::from_row_slice(
            2,
            2,
            &[cis(-theta / 2.0), c(0., 0.), c(0., 0.), cis(theta / 2.0)],
        ),
        GateKind::U2(phi, lambda) => CMatrix::from_row_slice(
            2,
            2,
            &[
                c(S2, 0.),
                -cis::<T>(lambda) * c(S2, 0.),
                cis::<T>(phi) * c(S2, 0.),
                cis::<T>(phi + lambda) * c(S2, 0.),
            ],
        ),
        GateKind::U3(theta, phi, lambda) => {
            let (ch, sh) = ((theta / 2.0).cos(), (theta / 2.0).sin());
            CMatrix::from_row_slice(
                2,
                2,
                &[
                    c(ch, 0.),
                    -cis::<T>(lambda) * c(sh, 0.),
                    cis::<T>(phi) * c(sh, 0.),
                    cis::<T>(phi + lambda) * c(ch, 0.),
                ],
            )
        }
        GateKind::Cx => {
            // control = most significant bit
            let mut m = CMatrix::identity(4, 4);
            m[(2, 2)] = c(0., 0.);
            m[(3, 3)] = c(0., 0.);
            m[(2, 3)] = c(1., 0.);
            m[(3, 2)] = c(1., 0.);
            m
        }
        GateKind::Swap => {
            let mut m = CMatrix::identity(4, 4);
            m[(1, 1)] = c(0., 0.);
            m[(2, 2)] = c(0., 0.);
            m[(1, 2)] = c(1., 0.);
            m[(2, 1)] = c(1., 0.);
            m
        }
    };
    Unitary::from_matrix(m)
}

fn phase_gate<T: Scalar>(lambda: f64) -> CMatrix<T> {
    CMatrix::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), cis(lambda)])
}

/// Embed a 2^k x 2^k gate matrix acting on qubit `positions` into an
/// `n`-qubit space (big-endian bit order).
pub fn embed<T: Scalar>(gate: &CMatrix<T>, positions: &[usize], n: usize) -> CMatrix<T> {
    let dim = 1usize << n;
    let k = positions.len();
    assert_eq!(gate.nrows(), 1 << k);
    let mut out = CMatrix::<T>::zeros(dim, dim);
    for col in 0..dim {
        let sub_in = sub_index(col, positions, n);
        let rest = col & !mask(positions, n);
        for sub_out in 0..(1 << k) {
            let amp = gate[(sub_out, sub_in)];
            if cnorm_sqr(&amp) > T::zero() {
                let row = rest | spread(sub_out, positions, n);
                out[(row, col)] += amp;
            }
        }
    }
    out
}

fn bit_of(idx: usize, pos: usize, n: usize) -> usize {
    (idx >> (n - 1 - pos)) & 1
}

fn sub_index(idx: usize, positions: &[usize], n: usize) -> usize {
    positions.iter().fold(0, |acc, &p| (acc << 1) | bit_of(idx, p, n))
}

fn spread(sub: usize, positions: &[usize], n: usize) -> usize {
    let k = positions.len();
    positions
        .iter()
        .enumerate()
        .fold(0, |acc, (i, &p)| acc | (((sub >> (k - 1 - i)) & 1) << (n - 1 - p)))
}

fn mask(positions: &[usize], n: usize) -> usize {
    positions.iter().fold(0, |acc, &p| acc | (1 << (n - 1 - p)))
}

/// Full unitary of a gate sequence on `n` qubits (n <= 12 or so; intended for
/// small verification circuits).
pub fn circuit_unitary<T: Scalar>(gates: &[Gate], n: usize) -> CMatrix<T> {
    let mut u = CMatrix::<T>::identity(1 << n, 1 << n);
    for g in gates {
        let gm = gate_unitary::<T>(&g.kind).into_matrix();
        u = embed(&gm, &g.qubits, n) * u;
    }
    u
}

/// Product of a group's gates on the group's local qubit ordering
/// (sorted ascending).
pub fn gates_unitary_local<T: Scalar>(gates: &[Gate], qubits: &[usize]) -> Unitary<T> {
    let n = qubits.len();
    assert!(n <= 2, "groups are limited to 2 qubits");
    let mut u = CMatrix::<T>::identity(1 << n, 1 << n);
    for g in gates {
        let positions: Vec<usize> = g
            .qubits
            .iter()
            .map(|q| qubits.iter().position(|x| x == q).expect("gate qubit not in group"))
            .collect();
        let gm = gate_unitary::<T>(&g.kind).into_matrix();
        u = embed(&gm, &positions, n) * u;
    }
    Unitary::from_matrix(u)
}

pub fn similarity<T: Scalar>(a: &Unitary<T>, b: &Unitary<T>, f: SimilarityFn) -> T {
    assert_eq!(a.dim(), b.dim(), "similarity requires equal dimensions");
    let dim = T::of(a.dim() as f64);
    match f {
        SimilarityFn::D1 => {
            let mut s = T::zero();
            for (x, y) in a.m.iter().zip(b.m.iter()) {
                s += cnorm(&(x - y));
            }
            s
        }
        SimilarityFn::D2 => {
            let mut s = T::zero();
            for (x, y) in a.m.iter().zip(b.m.iter()) {
                s += cnorm_sqr(&(x - y));
            }
            s.sqrt()
        }
        SimilarityFn::D3Trace | SimilarityFn::D4Fid => dim - trace_overlap(a, b),
        SimilarityFn::D4Inv => {
            let d = dim - trace_overlap(a, b);
            T::one() / d.max(T::of(1e-12))
        }
    }
}

fn trace_overlap<T: Scalar>(a: &Unitary<T>, b: &Unitary<T>) -> T {
    let prod = a.m.adjoint() * &b.m;
    let mut tr = Complex::new(T::zero(), T::zero());
    for i in 0..prod.nrows() {
        tr += prod[(i, i)];
    }
    cnorm(&tr)
}

/// Phase-invariant average gate fidelity `|Tr(target^dag u)|^2 / dim^2`.
pub fn avg_gate_fidelity<T: Scalar>(u: &Unitary<T>, target: &Unitary<T>) -> T {
    assert_eq!(u.dim(), target.dim());
    let d = T::of(u.dim() as f64);
    let t = trace_overlap(target, u);
    (t * t) / (d * d)
}

/// Divide by the phase of the first entry with modulus above `1e-9`,
/// scanning row-major.
pub fn phase_normalize<T: Scalar>(m: &CMatrix<T>) -> CMatrix<T> {
    let thresh = T::of(1e-9);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let z = m[(i, j)];
            if cnorm(&z) > thresh {
                let phase = z / Complex::new(cnorm(&z), T::zero());
                return m / phase;
            }
        }
    }
    m.clone()
}

/// Entrywise equality after phase normalization.
pub fn eq_up_to_phase<T: Scalar>(a: &CMatrix<T>, b: &CMatrix<T>, tol: T) -> bool {
    if a.shape() != b.shape() {
        return false;
    }
    let an = phase_normalize(a);
    let bn = phase_normalize(b);
    an.iter().zip(bn.iter()).all(|(x, y)| cnorm(&(x - y)) <= tol)
}

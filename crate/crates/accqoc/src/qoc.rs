//! Piecewise-constant optimal control.
//!
//! A pulse is a step-major amplitude vector u[j*K + k] for K controls over S
//! steps of length dt. The realized unitary is the left-ordered product of
//! the per-step propagators exp(-i dt (H_d + sum_k u_k H_k)). The cost is
//! the trace infidelity 1 - |tr(T^dag U)|^2 / d^2, minimized by L-BFGS under
//! the amplitude box |u| <= amp_max. Gradients come from the eigenbasis
//! divided-difference form of the propagator derivative, or a first-order
//! approximation in fast mode.

use crate::scalar::Scalar;
use crate::unitary::CMatrix;
use crate::{Error, Result};
use num_complex::Complex;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

#[derive(Debug, Clone)]
pub struct ControlModel<T: Scalar> {
    pub drift: CMatrix<T>,
    pub controls: Vec<CMatrix<T>>,
    pub dim: usize,
    /// Step length in ns.
    pub dt: T,
    /// Amplitude bound in rad/ns.
    pub amp_max: T,
}

fn pauli_x<T: Scalar>() -> CMatrix<T> {
    let z = Complex::new(T::zero(), T::zero());
    let o = Complex::new(T::one(), T::zero());
    CMatrix::from_row_slice(2, 2, &[z, o, o, z])
}

fn pauli_y<T: Scalar>() -> CMatrix<T> {
    let z = Complex::new(T::zero(), T::zero());
    let i = Complex::new(T::zero(), T::one());
    CMatrix::from_row_slice(2, 2, &[z, -i, i, z])
}

fn pauli_z<T: Scalar>() -> CMatrix<T> {
    let z = Complex::new(T::zero(), T::zero());
    let o = Complex::new(T::one(), T::zero());
    CMatrix::from_row_slice(2, 2, &[o, z, z, -o])
}

fn kron<T: Scalar>(a: &CMatrix<T>, b: &CMatrix<T>) -> CMatrix<T> {
    a.kronecker(b)
}

impl<T: Scalar> ControlModel<T> {
    /// Rotating-frame single qubit: zero drift, controls sx/2 and sy/2.
    pub fn one_qubit(dt: T, amp_max: T) -> ControlModel<T> {
        let half = Complex::new(T::of(0.5), T::zero());
        ControlModel {
            drift: CMatrix::zeros(2, 2),
            controls: vec![pauli_x::<T>() * half, pauli_y::<T>() * half],
            dim: 2,
            dt,
            amp_max,
        }
    }

    /// Two coupled qubits: always-on ZZ drift of angular strength `j`
    /// (rad/ns), local sx/2 and sy/2 per qubit plus a tunable ZZ control.
    pub fn two_qubit(dt: T, amp_max: T, j: T) -> ControlModel<T> {
        let id = CMatrix::<T>::identity(2, 2);
        let half = Complex::new(T::of(0.5), T::zero());
        let zz = kron(&pauli_z::<T>(), &pauli_z::<T>());
        let controls = vec![
            kron(&pauli_x::<T>(), &id) * half,
            kron(&pauli_y::<T>(), &id) * half,
            kron(&id, &pauli_x::<T>()) * half,
            kron(&id, &pauli_y::<T>()) * half,
            zz.clone(),
        ];
        ControlModel {
            drift: zz * Complex::new(j, T::zero()),
            controls,
            dim: 4,
            dt,
            amp_max,
        }
    }

    /// Model for a unitary of the given dimension under `cfg`.
    pub fn for_dim(dim: usize, cfg: &crate::config::Config) -> ControlModel<T> {
        let dt = T::of(cfg.dt_ns);
        let amp = T::of(cfg.amp_max);
        match dim {
            2 => ControlModel::one_qubit(dt, amp),
            4 => {
                // J/2pi in MHz -> angular rad/ns
                let j = T::of(2.0 * std::f64::consts::PI * cfg.j_coupling_mhz * 1e-3);
                ControlModel::two_qubit(dt, amp, j)
            }
            other => panic!("unsupported model dimension {other}"),
        }
    }

    pub fn num_controls(&self) -> usize {
        self.controls.len()
    }

    pub fn amp(&self, u: &[T], step: usize, k: usize) -> T {
        u[step * self.num_controls() + k]
    }
}

fn cexp<T: Scalar>(z: Complex<T>) -> Complex<T> {
    let r = z.re.exp();
    Complex::new(r * z.im.cos(), r * z.im.sin())
}

/// Eigendecomposition of one step's Hermitian generator.
struct StepEigen<T: Scalar> {
    vectors: CMatrix<T>,
    /// a_p = -i dt lambda_p
    a: Vec<Complex<T>>,
    unitary: CMatrix<T>,
}

fn step_hamiltonian<T: Scalar>(model: &ControlModel<T>, u: &[T], step: usize) -> CMatrix<T> {
    let mut h = model.drift.clone();
    for (k, hk) in model.controls.iter().enumerate() {
        let a = Complex::new(model.amp(u, step, k), T::zero());
        h += hk * a;
    }
    h
}

fn step_eigen<T: Scalar>(model: &ControlModel<T>, u: &[T], step: usize) -> StepEigen<T> {
    let h = step_hamiltonian(model, u, step);
    let se = nalgebra::linalg::SymmetricEigen::new(h);
    let a: Vec<Complex<T>> =
        se.eigenvalues.iter().map(|&l| Complex::new(T::zero(), -model.dt * l)).collect();
    let d = model.dim;
    let mut diag = CMatrix::<T>::zeros(d, d);
    for (p, &ap) in a.iter().enumerate() {
        diag[(p, p)] = cexp(ap);
    }
    let unitary = &se.eigenvectors * diag * se.eigenvectors.adjoint();
    StepEigen { vectors: se.eigenvectors, a, unitary }
}

/// Propagator of the whole pulse, last step leftmost.
pub fn evolve<T: Scalar>(model: &ControlModel<T>, u: &[T], steps: usize) -> CMatrix<T> {
    let d = model.dim;
    let mut total = CMatrix::<T>::identity(d, d);
    for j in 0..steps {
        total = step_eigen(model, u, j).unitary * total;
    }
    total
}

pub fn infidelity<T: Scalar>(u: &CMatrix<T>, target: &CMatrix<T>) -> T {
    let d = T::of(u.nrows() as f64);
    let g = (target.adjoint() * u).trace();
    T::one() - crate::scalar::cnorm_sqr(&g) / (d * d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientMode {
    /// Divided-difference propagator derivative in the step eigenbasis.
    Exact,
    /// dU/du ~= -i dt H_k U, cheaper and adequate far from convergence.
    FirstOrder,
}

/// Cost and gradient in one pass.
///
/// With prefix products F_j and suffixes W_j = T^dag U_S..U_{j+1}, the
/// derivative of g = tr(T^dag U) in step j is tr(M_j dU_j) for
/// M_j = F_{j-1} W_j, evaluated per control in the step eigenbasis.
pub fn cost_and_grad<T: Scalar>(
    model: &ControlModel<T>,
    target: &CMatrix<T>,
    u: &[T],
    steps: usize,
    mode: GradientMode,
) -> Result<(T, Vec<T>)> {
    let d = model.dim;
    let dim_t = T::of(d as f64);
    let kcount = model.num_controls();
    let eigens: Vec<StepEigen<T>> = (0..steps).map(|j| step_eigen(model, u, j)).collect();

    let mut prefixes: Vec<CMatrix<T>> = Vec::with_capacity(steps + 1);
    prefixes.push(CMatrix::<T>::identity(d, d));
    for e in &eigens {
        let last = prefixes.last().unwrap();
        prefixes.push(&e.unitary * last);
    }
    let total = prefixes[steps].clone();
    let g = (target.adjoint() * &total).trace();
    let phi = T::one() - crate::scalar::cnorm_sqr(&g) / (dim_t * dim_t);

    let mut grad = vec![T::zero(); steps * kcount];
    let scale = T::of(-2.0) / (dim_t * dim_t);
    let mdt = Complex::new(T::zero(), -model.dt);
    // W_j built backwards
    let mut w = target.adjoint();
    for j in (0..steps).rev() {
        let m_j = &prefixes[j] * &w;
        match mode {
            GradientMode::Exact => {
                let e = &eigens[j];
                let n_j = e.vectors.adjoint() * &m_j * &e.vectors;
                for k in 0..kcount {
                    let kk = e.vectors.adjoint()
                        * (&model.controls[k] * mdt)
                        * &e.vectors;
                    // tr(N (Gamma o K)) with Gamma the Loewner matrix of exp
                    let mut tr = Complex::new(T::zero(), T::zero());
                    for p in 0..d {
                        for q in 0..d {
                            let diff = e.a[p] - e.a[q];
                            let gamma = if crate::scalar::cnorm(&diff) < T::of(1e-10) {
                                cexp((e.a[p] + e.a[q]) * Complex::new(T::of(0.5), T::zero()))
                            } else {
                                (cexp(e.a[p]) - cexp(e.a[q])) / diff
                            };
                            tr += n_j[(q, p)] * gamma * kk[(p, q)];
                        }
                    }
                    grad[j * kcount + k] = scale * (g.conj() * tr).re;
                }
            }
            GradientMode::FirstOrder => {
                for k in 0..kcount {
                    let du = &model.controls[k] * mdt * &eigens[j].unitary;
                    let tr = (&m_j * du).trace();
                    grad[j * kcount + k] = scale * (g.conj() * tr).re;
                }
            }
        }
        w = &w * &eigens[j].unitary;
    }
    if grad.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteGradient(format!("steps={steps} dim={d}")));
    }
    Ok((phi, grad))
}

#[derive(Debug, Clone, Copy)]
pub struct OptBudget {
    pub max_iters: usize,
    pub target_infidelity: f64,
    /// Wall-clock cap in seconds for one optimization run.
    pub wall_secs: f64,
}

impl Default for OptBudget {
    fn default() -> Self {
        OptBudget { max_iters: 5000, target_infidelity: 1e-4, wall_secs: 600.0 }
    }
}

#[derive(Debug, Clone)]
pub struct OptResult<T> {
    pub amps: Vec<T>,
    pub infidelity: T,
    pub iterations: usize,
    pub converged: bool,
}

fn clip<T: Scalar>(u: &mut [T], bound: T) {
    for x in u.iter_mut() {
        *x = (*x).clamp(-bound, bound);
    }
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Box-constrained L-BFGS with backtracking Armijo line search. Returns with
/// zero iterations if the initial point already meets the target.
pub fn optimize<T: Scalar>(
    model: &ControlModel<T>,
    target: &CMatrix<T>,
    init: Vec<T>,
    steps: usize,
    budget: &OptBudget,
    mode: GradientMode,
) -> Result<OptResult<T>> {
    let n = steps * model.num_controls();
    assert_eq!(init.len(), n);
    let start = Instant::now();
    let tol = T::of(budget.target_infidelity);
    let memory = 10usize;

    let mut u = init;
    clip(&mut u, model.amp_max);
    let (mut phi, mut grad) = cost_and_grad(model, target, &u, steps, mode)?;
    let mut s_hist: Vec<Vec<T>> = Vec::new();
    let mut y_hist: Vec<Vec<T>> = Vec::new();
    let mut iterations = 0usize;

    while phi > tol
        && iterations < budget.max_iters
        && start.elapsed().as_secs_f64() < budget.wall_secs
    {
        // projected gradient: zero where the box is active and pushes outward
        let pg_norm = u
            .iter()
            .zip(&grad)
            .map(|(&x, &g)| {
                if (x >= model.amp_max && g < T::zero())
                    || (x <= -model.amp_max && g > T::zero())
                {
                    T::zero()
                } else {
                    g.abs()
                }
            })
            .fold(T::zero(), |a, b| a.max(b));
        if pg_norm < T::of(1e-12) {
            break;
        }

        // two-loop recursion
        let mut d: Vec<T> = grad.iter().map(|&g| -g).collect();
        let m = s_hist.len();
        let mut alphas = vec![T::zero(); m];
        for i in (0..m).rev() {
            let rho = T::one() / dot(&y_hist[i], &s_hist[i]);
            let a = rho * dot(&s_hist[i], &d);
            alphas[i] = a;
            for (dj, yj) in d.iter_mut().zip(&y_hist[i]) {
                *dj -= a * *yj;
            }
        }
        if m > 0 {
            let last = m - 1;
            let gamma = dot(&s_hist[last], &y_hist[last]) / dot(&y_hist[last], &y_hist[last]);
            for dj in d.iter_mut() {
                *dj *= gamma;
            }
        }
        for i in 0..m {
            let rho = T::one() / dot(&y_hist[i], &s_hist[i]);
            let b = rho * dot(&y_hist[i], &d);
            for (dj, sj) in d.iter_mut().zip(&s_hist[i]) {
                *dj += (alphas[i] - b) * *sj;
            }
        }
        if dot(&grad, &d) >= T::zero() {
            // not a descent direction: reset to steepest descent
            d = grad.iter().map(|&g| -g).collect();
            s_hist.clear();
            y_hist.clear();
        }

        // backtracking Armijo on the projected step
        let gd = dot(&grad, &d);
        let c1 = T::of(1e-4);
        let mut alpha = T::one();
        let mut accepted: Option<(Vec<T>, T, Vec<T>)> = None;
        while alpha > T::of(1e-12) {
            let mut trial: Vec<T> =
                u.iter().zip(&d).map(|(&x, &dx)| x + alpha * dx).collect();
            clip(&mut trial, model.amp_max);
            let (phi_t, grad_t) = cost_and_grad(model, target, &trial, steps, mode)?;
            if phi_t <= phi + c1 * alpha * gd || phi_t < phi {
                accepted = Some((trial, phi_t, grad_t));
                break;
            }
            alpha *= T::of(0.5);
        }
        let Some((u_new, phi_new, grad_new)) = accepted else { break };

        let s: Vec<T> = u_new.iter().zip(&u).map(|(&a, &b)| a - b).collect();
        let y: Vec<T> = grad_new.iter().zip(&grad).map(|(&a, &b)| a - b).collect();
        // skip the pair unless it keeps the Hessian estimate positive definite
        if dot(&y, &s) > T::of(1e-14) {
            s_hist.push(s);
            y_hist.push(y);
            if s_hist.len() > memory {
                s_hist.remove(0);
                y_hist.remove(0);
            }
        }
        u = u_new;
        phi = phi_new;
        grad = grad_new;
        iterations += 1;
    }

    Ok(OptResult { amps: u, infidelity: phi, iterations, converged: phi.to_f64() <= budget.target_infidelity })
}

/// Small random initial amplitudes, deterministic in the seed.
pub fn random_init<T: Scalar>(num_controls: usize, steps: usize, amp_max: T, seed: u64) -> Vec<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..steps * num_controls)
        .map(|_| T::of(rng.gen_range(-0.01..0.01)) * amp_max)
        .collect()
}

/// Linear-in-time resampling of a step-major pulse to a new step count.
/// Samples sit at step midpoints; constant pulses are preserved exactly.
pub fn resample<T: Scalar>(amps: &[T], steps: usize, kcount: usize, new_steps: usize) -> Vec<T> {
    assert_eq!(amps.len(), steps * kcount);
    if new_steps == 0 || steps == 0 {
        return vec![T::zero(); new_steps * kcount];
    }
    let mut out = vec![T::zero(); new_steps * kcount];
    for j in 0..new_steps {
        // midpoint of the new step in old-step coordinates
        let t = (T::of(j as f64) + T::of(0.5)) * T::of(steps as f64)
            / T::of(new_steps as f64)
            - T::of(0.5);
        let t = t.clamp(T::zero(), T::of((steps - 1) as f64));
        let lo = t.floor().to_f64() as usize;
        let hi = (lo + 1).min(steps - 1);
        let frac = t - T::of(lo as f64);
        for k in 0..kcount {
            let a = amps[lo * kcount + k];
            let b = amps[hi * kcount + k];
            out[j * kcount + k] = a + frac * (b - a);
        }
    }
    out
}

/// A pulse known to realize a target at some step count, used to warm-start
/// probes at other durations.
#[derive(Debug, Clone)]
pub struct WarmStart<T> {
    pub amps: Vec<T>,
    pub steps: usize,
}

#[derive(Debug, Clone)]
pub struct SynthesisOutcome<T> {
    pub steps: usize,
    pub amps: Vec<T>,
    pub infidelity: T,
    /// Optimizer iterations summed over all probes.
    pub iterations_total: usize,
}

/// Find the shortest feasible pulse duration by binary search on the step
/// count. The upper bound starts at 40 steps (1 qubit) or 200 steps
/// (2 qubits) and doubles up to 8x until a probe succeeds. Probes warm-start
/// from `donor` when given, else from the best feasible pulse so far.
pub fn binary_search_latency<T: Scalar>(
    model: &ControlModel<T>,
    target: &CMatrix<T>,
    budget: &OptBudget,
    seed: u64,
    donor: Option<&WarmStart<T>>,
    mode: GradientMode,
    key: &str,
) -> Result<SynthesisOutcome<T>> {
    let d = model.dim;
    let identity = CMatrix::<T>::identity(d, d);
    if infidelity(&identity, target).to_f64() <= budget.target_infidelity {
        return Ok(SynthesisOutcome {
            steps: 0,
            amps: Vec::new(),
            infidelity: infidelity(&identity, target),
            iterations_total: 0,
        });
    }

    let kcount = model.num_controls();
    let hi0 = if d == 2 { 40 } else { 200 };
    let mut iterations_total = 0usize;
    let mut best: Option<(usize, Vec<T>, T)> = None;

    let probe = |steps: usize,
                     best: &Option<(usize, Vec<T>, T)>,
                     iterations_total: &mut usize|
     -> Result<Option<(Vec<T>, T)>> {
        let init = if let Some(ws) = donor {
            resample(&ws.amps, ws.steps, kcount, steps)
        } else if let Some((bs, amps, _)) = best {
            resample(amps, *bs, kcount, steps)
        } else {
            random_init(kcount, steps, model.amp_max, seed)
        };
        let r = optimize(model, target, init, steps, budget, mode)?;
        *iterations_total += r.iterations;
        Ok(r.converged.then_some((r.amps, r.infidelity)))
    };

    let mut hi = hi0;
    for _ in 0..4 {
        if let Some((amps, inf)) = probe(hi, &best, &mut iterations_total)? {
            best = Some((hi, amps, inf));
            break;
        }
        hi *= 2;
    }
    let Some(mut feasible) = best.take() else {
        return Err(Error::Infeasible {
            key: key.to_string(),
            max_duration: (hi / 2) as f64 * model.dt.to_f64(),
        });
    };

    let mut lo = 0usize; // 0 steps is infeasible here (identity handled above)
    let mut hi = feasible.0;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        let wrapped = Some(feasible.clone());
        match probe(mid, &wrapped, &mut iterations_total)? {
            Some((amps, inf)) => {
                hi = mid;
                feasible = (mid, amps, inf);
            }
            None => lo = mid,
        }
    }
    Ok(SynthesisOutcome {
        steps: feasible.0,
        amps: feasible.1,
        infidelity: feasible.2,
        iterations_total,
    })
}

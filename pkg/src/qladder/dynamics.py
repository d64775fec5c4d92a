"""Unitary time evolution and the quench observables.

Times are in microseconds and energies in MHz, so a level ``E`` picks up
the phase ``exp(-2j pi E t)``.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .core import SectorError, StateVector

TWO_PI = 2.0 * math.pi


class KrylovConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class EvolutionOptions:
    krylov_dim: int = 30
    tol: float = 1e-12  # local error bound per Krylov step
    dense_threshold: int = 4096  # exact diagonalization below this dimension
    method: str = "auto"  # auto | krylov | dense

    def __post_init__(self):
        if self.krylov_dim < 2:
            raise ValueError("krylov_dim must be >= 2")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.method not in ("auto", "krylov", "dense"):
            raise ValueError(f"unknown method {self.method!r}")


@dataclass(eq=False)
class Trajectory:
    times: np.ndarray  # microseconds
    observables: dict = field(default_factory=dict)
    states: list | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.times.size


# ---------------------------------------------------------------------------
# propagators
# ---------------------------------------------------------------------------


def _lanczos(matvec, v0, m, scale):
    """Lanczos with full reorthogonalization; returns (V, alpha, beta, beta_last)."""
    n = v0.size
    V = np.empty((m, n), dtype=complex)
    alpha = np.zeros(m)
    beta = np.zeros(m)
    V[0] = v0 / np.linalg.norm(v0)
    for j in range(m):
        w = matvec(V[j])
        alpha[j] = np.vdot(V[j], w).real
        w = w - alpha[j] * V[j]
        if j:
            w -= beta[j - 1] * V[j - 1]
        basis = V[: j + 1]
        w -= basis.T @ (basis.conj() @ w)
        b = np.linalg.norm(w)
        if b <= 1e-13 * scale:  # invariant subspace: the step is exact
            return V[: j + 1], alpha[: j + 1], beta[:j], 0.0
        if j + 1 < m:
            beta[j] = b
            V[j + 1] = w / b
        else:
            return V, alpha, beta[: m - 1], b
    raise AssertionError("unreachable")


class KrylovPropagator:
    """Adaptive Lanczos propagator with an a posteriori local error bound.

    For each substep the error estimate is ``beta_m |e_m^T exp(-i 2pi tau T) e_1|``;
    the step ``tau`` is halved until the estimate falls below ``tol``.
    """

    def __init__(self, H, opts):
        self.H = H
        self.opts = opts
        self.scale = max(H.norm_bound, 1e-300)
        self.last_step = None
        self.n_steps = 0

    def advance(self, psi, dt):
        remaining = dt
        while remaining > 0:
            V, a, b, b_last = _lanczos(self.H.dot, psi, self.opts.krylov_dim, self.scale)
            if a.size == 1:
                theta, S = a.copy(), np.ones((1, 1))
            else:
                theta, S = eigh_tridiagonal(a, b)
            e1 = S[0].conj()
            tau = remaining if self.last_step is None else min(remaining, 2.0 * self.last_step)
            limited = tau < remaining
            while True:
                c = S @ (np.exp(-1j * TWO_PI * theta * tau) * e1)
                err = b_last * abs(c[-1])
                if err <= self.opts.tol:
                    break
                tau *= 0.5
                limited = True
                if tau < dt * 1e-12:
                    raise KrylovConvergenceError(
                        f"tolerance {self.opts.tol:g} unreachable with krylov_dim={self.opts.krylov_dim}: "
                        f"error {err:.3g} at step {tau:.3g} us (|H| <= {self.scale:.3g} MHz)"
                    )
            nrm = np.linalg.norm(psi)
            psi = nrm * (V.T @ c)
            remaining -= tau
            if remaining < 1e-15 * dt:
                remaining = 0.0
            self.last_step = tau if limited else max(self.last_step or 0.0, tau)
            self.n_steps += 1
        return psi


class DensePropagator:
    def __init__(self, H):
        E, V = np.linalg.eigh(H.toarray())
        self.E, self.V = E, V

    def advance(self, psi, dt):
        c = self.V.conj().T @ psi
        return self.V @ (np.exp(-1j * TWO_PI * self.E * dt) * c)


def make_propagator(H, opts):
    if not H.is_hermitian:
        raise SectorError(f"Hamiltonian is not Hermitian (max |H - H^dag| = {H.hermiticity_error:.3g})")
    dense = opts.method == "dense" or (opts.method == "auto" and H.dim <= opts.dense_threshold)
    return DensePropagator(H) if dense else KrylovPropagator(H, opts)


def evolve(H, state, times, opts=None, observables=None, keep_states=True):
    """Evolve ``state`` under ``H`` and sample on the grid ``times`` (microseconds).

    ``observables`` maps names to callables of the amplitude vector; they
    are evaluated at every grid time, so states need not be kept.
    """
    opts = opts or EvolutionOptions()
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ValueError("times must be a non-empty 1-d array")
    if np.any(times < 0) or np.any(np.diff(times) <= 0):
        raise ValueError("times must be non-negative and strictly increasing")
    if not H.basis.same_space(state.basis):
        raise SectorError("state and Hamiltonian live on different sectors")
    prop = make_propagator(H, opts)
    observables = observables or {}
    psi = state.amplitudes.astype(complex)
    t_now = 0.0
    snaps = [] if keep_states else None
    series = {name: np.empty(times.size) for name in observables}
    for i, t in enumerate(times):
        if t > t_now:
            psi = prop.advance(psi, t - t_now)
            t_now = t
        if keep_states:
            snaps.append(StateVector(state.basis, psi.copy()))
        for name, f in observables.items():
            series[name][i] = f(psi)
    meta = {"propagator": type(prop).__name__, "dim": H.dim}
    if isinstance(prop, KrylovPropagator):
        meta["krylov_steps"] = prop.n_steps
    return Trajectory(times, series, snaps, meta)


# ---------------------------------------------------------------------------
# observables
# ---------------------------------------------------------------------------


def _sigma_z(basis):
    """Table of ``2 n - 1`` per (configuration, site)."""
    return 2.0 * basis.digits() - 1.0


def imbalance_weights(basis, reference):
    """Weights ``w_c`` with ``I = sum_c |psi_c|^2 w_c`` for the given reference state."""
    if not reference.basis.same_space(basis) and reference.basis.spec != basis.spec:
        raise SectorError("reference belongs to a different ladder")
    z_ref = (np.abs(reference.amplitudes) ** 2) @ _sigma_z(reference.basis)
    return _sigma_z(basis) @ z_ref / basis.spec.N


def imbalance(trajectory, reference):
    """``I(t) = (1/N) sum_j <sigma^z_j(0)> <sigma^z_j(t)>`` from stored snapshots."""
    if trajectory.states is None:
        raise ValueError("trajectory has no stored states; stream the imbalance observable instead")
    w = imbalance_weights(trajectory.states[0].basis, reference)
    return np.array([float(np.abs(s.amplitudes) ** 2 @ w) for s in trajectory.states])


def imbalance_observable(basis, reference):
    w = imbalance_weights(basis, reference)
    return lambda psi: float(np.abs(psi) ** 2 @ w)


def _subsystem_matrix(state, subset):
    """Amplitudes reshaped to (d^|A|, d^|B|); row index puts subset[0] least significant."""
    basis = state.basis
    if basis.kind == "dimer":
        raise SectorError("reduced density matrices need a computational-basis state")
    d = basis.base
    n = basis.n_digits
    subset = list(subset)
    if len(set(subset)) != len(subset) or any(not 0 <= s < n for s in subset):
        raise ValueError(f"invalid subset {subset}")
    rest = [s for s in range(n) if s not in subset]
    full = state.to_full() if basis.dim != d**n else state.amplitudes
    t = full.reshape((d,) * n)
    # axis a holds site n - 1 - a
    order = [n - 1 - s for s in reversed(subset)] + [n - 1 - s for s in reversed(rest)]
    return np.transpose(t, order).reshape(d ** len(subset), d ** len(rest))


def reduced_density_matrix(state, subset):
    """``rho_A`` on ``subset``; index ``sum_j digit(subset[j]) d^j``."""
    m = _subsystem_matrix(state, subset)
    rho = m @ m.conj().T
    return 0.5 * (rho + rho.conj().T)


def schmidt_probabilities(state, subset):
    m = _subsystem_matrix(state, subset)
    s = np.linalg.svd(m, compute_uv=False)
    p = s * s
    return np.sort(p)[::-1]


def entanglement_entropy(state, subset, cutoff=1e-12):
    """Von Neumann entropy in nats; Schmidt weights below ``cutoff`` are dropped."""
    p = schmidt_probabilities(state, subset)
    p = p[p > cutoff]
    return float(-np.sum(p * np.log(p)))


def entropy_observable(basis, subset):
    def f(psi):
        return entanglement_entropy(StateVector(basis, psi), subset)

    return f


def _psd_factor(rho, floor=-1e-10, rel_cutoff=1e-12):
    """``L`` with ``rho = L L^dag``; eigenvalues below ``rel_cutoff * max`` are dropped."""
    w, v = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    if w.min(initial=0.0) < floor:
        raise ValueError(f"density matrix has eigenvalue {w.min():.3g} below {floor:g}")
    keep = w > rel_cutoff * max(w.max(initial=0.0), 0.0)
    return v[:, keep] * np.sqrt(w[keep])


def uhlmann_fidelity(rho_a, rho_b):
    """``(tr sqrt(sqrt(rho_a) rho_b sqrt(rho_a)))^2``.

    Evaluated as the squared nuclear norm of ``L_a^dag L_b``; square roots of
    round-off eigenvalues would otherwise leak ``~1e-8`` into pure-state results.
    """
    rho_a = np.asarray(rho_a)
    rho_b = np.asarray(rho_b)
    if rho_a.shape != rho_b.shape:
        raise ValueError("density matrices have different shapes")
    la = _psd_factor(rho_a)
    lb = _psd_factor(rho_b)
    if la.shape[1] == 0 or lb.shape[1] == 0:
        return 0.0
    s = np.linalg.svd(la.conj().T @ lb, compute_uv=False)
    f = float(np.sum(s) ** 2)
    return min(max(f, 0.0), 1.0)


def subsystem_fidelity_observable(psi0, subset, sqrt=False):
    rho0 = reduced_density_matrix(psi0, subset)
    basis = psi0.basis

    def f(psi):
        F = uhlmann_fidelity(reduced_density_matrix(StateVector(basis, psi), subset), rho0)
        return math.sqrt(F) if sqrt else F

    return f


def loschmidt_fidelity(psi0, psit):
    a = psi0.amplitudes if isinstance(psi0, StateVector) else np.asarray(psi0)
    b = psit.amplitudes if isinstance(psit, StateVector) else np.asarray(psit)
    return float(min(abs(np.vdot(a, b)) ** 2, 1.0))


def loschmidt_observable(psi0):
    a = psi0.amplitudes.astype(complex)
    return lambda psi: float(min(abs(np.vdot(a, psi)) ** 2, 1.0))


# ---------------------------------------------------------------------------
# spectral analysis of time series
# ---------------------------------------------------------------------------


def fourier_peaks(series, dt, threshold_fraction=0.2, window="hann", pad=4):
    """Peaks of the zero-padded magnitude spectrum of a uniformly sampled series.

    ``dt`` is a step in microseconds (frequencies come out in MHz) or the
    sample-time array itself, which must then be uniform. The series is
    mean-subtracted and tapered (``window="hann"`` or ``"rect"``). A peak is
    an interior local maximum above ``threshold_fraction`` times the global
    maximum. Returns ``[(frequency, magnitude), ...]`` sorted by frequency.
    """
    x = np.asarray(series, dtype=float)
    if x.size < 16:
        raise ValueError("need at least 16 samples")
    dt_arr = np.asarray(dt, dtype=float)
    if dt_arr.ndim:
        if dt_arr.size != x.size:
            raise ValueError("time array and series lengths differ")
        steps = np.diff(dt_arr)
        if np.ptp(steps) > 1e-9 * abs(steps.mean()):
            raise ValueError("time grid is not uniform")
        step = float(steps.mean())
    else:
        step = float(dt_arr)
    if not step > 0:
        raise ValueError("dt must be positive")
    x = x - x.mean()
    if window == "hann":
        x = x * np.hanning(x.size)
    elif window != "rect":
        raise ValueError(f"unknown window {window!r}")
    n = pad * x.size
    mag = np.abs(np.fft.rfft(x, n))
    freq = np.fft.rfftfreq(n, step)
    top = mag.max()
    if top == 0.0:
        return []
    inner = np.arange(1, mag.size - 1)
    is_peak = (mag[inner] > mag[inner - 1]) & (mag[inner] >= mag[inner + 1]) & (mag[inner] >= threshold_fraction * top)
    idx = inner[is_peak]
    return [(float(freq[i]), float(mag[i])) for i in idx]

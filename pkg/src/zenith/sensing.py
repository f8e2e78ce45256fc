"""DC magnetometry under the decoupling protocol.

A longitudinal DC signal mu * Sz is not removed by the sequence; its
zeroth-order average over the twelve toggling frames redistributes it as

    H_eff = (mu/6) (ex Sx + ey Sy + ez Sz + cxz Sxt + cyz Syt + cxy Szt),

with every coefficient +-1 and ez = +1 (the protocol starts with free
evolution).  The unit-coefficient form h is traceless with Tr(h^2) = 12
and Tr(h^3) = +-12, so its spectrum is one of the two root sets
{2, -1 +- sqrt3} / {-2, 1 -+ sqrt3} of lambda^3 - 6 lambda -+ 4 = 0, and
the spectral range is always 3 + sqrt3.  A Ramsey experiment started in
the equal superposition of the two extremal eigenvectors oscillates at
the single frequency mu (3 + sqrt3)/6 = mu (1 + sqrt3)/(2 sqrt3); that
state lies entirely in the {|+1>, |-1>} double-quantum subspace, so a
single drive pulse prepares it.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import least_squares

from .control import PulseSequence, toggling_frames
from .dynamics import RunConfig, TimeSeries, stroboscopic_run
from .operators import SPIN_MATS, operator_coefficients

SQRT3 = np.sqrt(3.0)

#: spectral range of the unit-coefficient signal Hamiltonian
DELTA_LAMBDA = 3.0 + SQRT3

#: single-site signal frequency per unit mu
FREQUENCY_RATIO = DELTA_LAMBDA / 6.0     # = (1 + sqrt3)/(2 sqrt3) ~ 0.7887

_COEFF_KEYS = ("Sx", "Sy", "Sz", "Sxt", "Syt", "Szt")


class SequenceInconsistency(RuntimeError):
    """Signal average is not of the expected +-mu/6 form."""


class DegenerateSpectrum(RuntimeError):
    """Extremal eigenvalues too close; input coefficients are corrupt."""


class EstimationError(RuntimeError):
    """Frequency fit failed to converge."""


@dataclass(frozen=True)
class EffectiveSignal:
    """Zeroth-order average of mu*Sz over a sequence's toggling frames."""

    coefficients: dict[str, int]    # label -> +-1
    mu: float
    unit_matrix: np.ndarray         # the +-1-coefficient form h

    @property
    def matrix(self) -> np.ndarray:
        return (self.mu / 6.0) * self.unit_matrix

    @property
    def trace_h3(self) -> float:
        h = self.unit_matrix
        return float(np.trace(h @ h @ h).real)


def effective_hamiltonian(seq, mu: float = 1.0,
                          tol: float = 1e-10) -> EffectiveSignal:
    """Average mu*Sz over the single-site toggling frames of a sequence.

    The frame average of Sz must decompose with coefficients +-1/6 and a
    +1/6 Sz component; anything else means the sequence is not a member
    of the full-decoupling family.
    """
    pulses = seq.pulses if isinstance(seq, PulseSequence) else seq.sequence.pulses
    frames = toggling_frames(pulses)
    acc = np.zeros((3, 3), dtype=complex)
    for f in frames:
        acc += f @ SPIN_MATS["Sz"] @ f.conj().T
    avg = acc / len(frames)     # signal average per unit mu

    coeffs = operator_coefficients(avg)
    signs: dict[str, int] = {}
    for key in _COEFF_KEYS:
        c = coeffs[key] * 6.0
        if abs(abs(c) - 1.0) > tol:
            raise SequenceInconsistency(
                f"coefficient of {key} is {c/6:.3e}, expected +-1/6")
        signs[key] = +1 if c > 0 else -1
    if signs["Sz"] != +1:
        raise SequenceInconsistency("Sz coefficient must be +mu/6")
    return EffectiveSignal(signs, mu, 6.0 * avg)


def spectral_range(es: EffectiveSignal):
    """Eigenvalues of h from the depressed cubic, range, signal frequency.

    h solves lambda^3 - 6 lambda - Tr(h^3)/3 = 0; the trigonometric root
    formula is cross-checked against direct diagonalization.
    Returns (eigenvalues ascending, delta_lambda, effective_frequency).
    """
    tr3 = es.trace_h3
    q = -tr3 / 3.0
    # roots of t^3 + p t + q, p = -6:
    #   t_k = 2 sqrt2 cos( acos(3q/(2p) sqrt(-3/p))/3 - 2 pi k/3 )
    arg = np.clip((-q / 4.0) / np.sqrt(2.0), -1.0, 1.0)
    roots = sorted(2.0 * np.sqrt(2.0)
                   * np.cos(np.arccos(arg) / 3.0 - 2.0 * np.pi * k / 3.0)
                   for k in range(3))
    direct = np.linalg.eigvalsh(es.unit_matrix)
    if np.abs(np.asarray(roots) - direct).max() > 1e-12:
        raise ArithmeticError("cubic roots disagree with diagonalization")
    delta = roots[-1] - roots[0]
    return np.asarray(roots), float(delta), float(abs(es.mu) * delta / 6.0)


def optimal_state(es: EffectiveSignal) -> np.ndarray:
    """Equal superposition of the extremal eigenvectors of the signal average.

    Eigenvectors come from the closed-form cofactor expression; after the
    common phase convention (|0> component real non-negative) their |0>
    amplitudes coincide, so the difference combination lies entirely in
    the double-quantum subspace.
    """
    c = es.coefficients
    ez, ex, ey = c["Sz"], c["Sx"], c["Sy"]
    cxz, cyz, cxy = c["Sxt"], c["Syt"], c["Szt"]
    alpha = (ex + cxz - 1j * (ey + cyz)) / np.sqrt(2.0)
    beta = (ex - cxz - 1j * (ey - cyz)) / np.sqrt(2.0)

    evals, _, _ = spectral_range(es)
    if abs(evals[-1] - evals[1]) < 1e-8 or abs(evals[1] - evals[0]) < 1e-8:
        raise DegenerateSpectrum("extremal eigenvalues nearly degenerate")

    def eigvec(lam: float) -> np.ndarray:
        v = np.array([
            -(ez + lam) * alpha + 1j * cxy * np.conj(beta),
            ez ** 2 + cxy ** 2 - lam ** 2,
            (ez - lam) * np.conj(beta) - 1j * cxy * alpha,
        ], dtype=complex)
        v /= np.linalg.norm(v)
        phase = v[1] / abs(v[1])
        return v / phase

    psi = eigvec(float(evals[-1])) - eigvec(float(evals[0]))
    psi /= np.linalg.norm(psi)
    if abs(psi[1]) > 1e-10:
        raise ArithmeticError(
            f"optimal state leaks onto |0>: {abs(psi[1]):.2e}")
    return psi


def generic_state(seed: int = 11) -> np.ndarray:
    """A fixed three-component state for the suboptimal-readout comparison."""
    rng = np.random.default_rng(seed)
    v = rng.normal(size=3) + 1j * rng.normal(size=3)
    return v / np.linalg.norm(v)


# ---------------------------------------------------------------------------
# frequency estimation


def estimate_frequency(times: np.ndarray, values: np.ndarray,
                       n_grid: int = 4000) -> tuple[float, float]:
    """Fit a*cos(w t + p) + c; returns (w, stderr of w).

    Coarse grid over the demeaned projection power picks the starting
    frequency; a local least-squares refinement follows.  A flat trace
    returns (0, inf).
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if len(t) < 8:
        raise ValueError("need at least 8 samples")
    if np.ptp(y) < 1e-12:
        return 0.0, np.inf

    span = t[-1] - t[0]
    dt = float(np.min(np.diff(t)))
    yc = y - y.mean()
    grid = np.linspace(2.0 * np.pi / (50.0 * span), np.pi / dt, n_grid)
    power = [(np.cos(w * t) @ yc) ** 2 + (np.sin(w * t) @ yc) ** 2
             for w in grid]
    w0 = float(grid[int(np.argmax(power))])

    def residual(p):
        a, w, ph, c0 = p
        return a * np.cos(w * t + ph) + c0 - y

    sol = least_squares(residual, x0=[np.ptp(y) / 2.0, w0, 0.0, float(y.mean())])
    if not sol.success:
        raise EstimationError(f"cosine fit failed: {sol.message}")
    w_hat = float(abs(sol.x[1]))
    dof = max(len(t) - 4, 1)
    sigma2 = float(2.0 * sol.cost) / dof
    jtj = sol.jac.T @ sol.jac
    try:
        cov = np.linalg.inv(jtj) * sigma2
        stderr = float(np.sqrt(max(cov[1, 1], 0.0)))
    except np.linalg.LinAlgError:
        stderr = np.inf
    return w_hat, stderr


# ---------------------------------------------------------------------------
# paired protocol/FID sensing run


@dataclass(frozen=True)
class SensingResult:
    protocol_trace: TimeSeries
    fid_trace: TimeSeries
    estimated_mu: float
    relative_deviation: float
    fit_stderr: float
    delta_lambda: float
    coefficients: dict[str, int]
    fid_estimated_mu: float | None
    fid_relative_deviation: float | None
    fid_fit_stderr: float


def ramsey_run(cfg: RunConfig, sequence: PulseSequence,
               initial: str | np.ndarray = "optimal",
               threads: int | None = None) -> SensingResult:
    """Paired protocol/FID traces under a DC signal, with mu estimation.

    Both traces share cluster seeds.  The protocol trace is fitted to a
    single cosine and converted through the universal frequency ratio; the
    FID trace is fitted the same way and converted through its own ideal
    double-quantum factor of 2.
    """
    es = effective_hamiltonian(sequence, mu=cfg.signal_mu)
    _, delta, _ = spectral_range(es)

    if isinstance(initial, str):
        state = optimal_state(es) if initial == "optimal" else generic_state()
    else:
        state = np.asarray(initial, dtype=complex)
        state = state / np.linalg.norm(state)

    states = {"sig": state}
    ts_protocol = stroboscopic_run(
        replace(cfg, sequence=sequence), initial_states=states, threads=threads)
    ts_fid = stroboscopic_run(
        replace(cfg, sequence=None), initial_states=states, threads=threads)

    mu = abs(cfg.signal_mu)
    ratio = delta / 6.0
    w_hat, w_err = estimate_frequency(ts_protocol.times,
                                      ts_protocol.traces["sig"])
    mu_hat = w_hat / ratio
    rel = abs(mu_hat - mu) / mu if mu > 0 else (np.inf if mu_hat else 0.0)

    try:
        wf, wf_err = estimate_frequency(ts_fid.times, ts_fid.traces["sig"])
        mu_fid = wf / 2.0
        rel_fid = (abs(mu_fid - mu) / mu if mu > 0
                   else (np.inf if mu_fid else 0.0))
    except EstimationError:
        mu_fid, rel_fid, wf_err = None, None, np.inf

    return SensingResult(ts_protocol, ts_fid, mu_hat, rel, w_err / ratio,
                         delta, es.coefficients, mu_fid, rel_fid, wf_err)

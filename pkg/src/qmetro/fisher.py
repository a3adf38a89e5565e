"""Classical and quantum Fisher information, logarithmic derivatives and bounds."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

SUPPORT_EPS = 1e-10
P_ZERO = 1e-12
DP_ZERO = 1e-9
SLD_RESIDUAL_TOL = 1e-7


class DivergentFisherWarning(RuntimeWarning):
    """An outcome has vanishing probability but non-vanishing derivative."""


class SupportError(ValueError):
    """A derivative is inconsistent with the support of the state."""


class RankDeficientError(ValueError):
    pass


def _mat(x) -> np.ndarray:
    return np.asarray(getattr(x, "matrix", x), dtype=complex)


def _ket(x) -> np.ndarray:
    return np.asarray(getattr(x, "amplitudes", x), dtype=complex).ravel()


# ---------------------------------------------------------------- classical


def classical_fim(probs, jacobian) -> np.ndarray:
    """``F_hk = sum_x dp_h dp_k / p`` for an outcome distribution.

    Outcomes with ``p < 1e-12`` are skipped when their derivatives vanish too;
    if a derivative does not vanish the information diverges, the result is
    ``+inf`` on the affected diagonal entries and a
    :class:`DivergentFisherWarning` names the outcomes.
    """
    p = np.asarray(probs, dtype=float).ravel()
    jac = np.asarray(jacobian, dtype=float).reshape(len(p), -1)
    if p.min() < -1e-12 or abs(p.sum() - 1) > 1e-9:
        raise ValueError("probabilities must be non-negative and sum to one")
    small = p < P_ZERO
    divergent = small & (np.abs(jac) >= DP_ZERO).any(axis=1)
    keep = ~small
    fim = (jac[keep].T / p[keep]) @ jac[keep]
    fim = (fim + fim.T) / 2
    if divergent.any():
        bad = np.flatnonzero(divergent)
        warnings.warn(f"Fisher information diverges at outcomes {bad.tolist()}",
                      DivergentFisherWarning, stacklevel=2)
        hit = (np.abs(jac[divergent]) >= DP_ZERO).any(axis=0)
        fim[hit, hit] = np.inf
    return fim


def classical_fi(probs, dprobs) -> float:
    return float(classical_fim(probs, np.asarray(dprobs, dtype=float).reshape(-1, 1))[0, 0])


def divergent_outcomes(probs, jacobian) -> list[int]:
    p = np.asarray(probs, dtype=float).ravel()
    jac = np.asarray(jacobian, dtype=float).reshape(len(p), -1)
    return np.flatnonzero((p < P_ZERO) & (np.abs(jac) >= DP_ZERO).any(axis=1)).tolist()


def povm_jacobian(povm, derivatives) -> np.ndarray:
    """``Re Tr[E_x d_h rho]`` for each effect and parameter."""
    ds = [_mat(d) for d in derivatives]
    return np.array([[np.einsum("ij,ji->", e, d).real for d in ds] for e in povm.effects])


# ---------------------------------------------------------------- SLD / QFI


def _eig(rho):
    m = _mat(rho)
    vals, vecs = np.linalg.eigh((m + m.conj().T) / 2)
    return np.clip(vals, 0.0, None), vecs


def sld(rho, drho, eps: float = SUPPORT_EPS, return_residual: bool = False):
    """Symmetric logarithmic derivative ``L`` with ``d rho = (L rho + rho L) / 2``.

    Solved in the eigenbasis of ``rho``; pairs with ``l_i + l_j <= eps * l_max``
    are set to zero.
    """
    vals, vecs = _eig(rho)
    d = vecs.conj().T @ _mat(drho) @ vecs
    denom = vals[:, None] + vals[None, :]
    mask = denom > eps * vals.max()
    l_eig = np.zeros_like(d)
    l_eig[mask] = 2 * d[mask] / denom[mask]
    L = vecs @ l_eig @ vecs.conj().T
    L = (L + L.conj().T) / 2
    m = _mat(rho)
    residual = float(np.linalg.norm((L @ m + m @ L) / 2 - _mat(drho)))
    if residual > SLD_RESIDUAL_TOL * max(1.0, np.linalg.norm(_mat(drho))):
        raise SupportError(f"SLD equation residual {residual:.3g}: derivative leaves the support")
    return (L, residual) if return_residual else L


def qfi(rho, drho) -> float:
    L = sld(rho, drho)
    return float(np.einsum("ij,jk,ki->", L, L, _mat(rho)).real)


def qfi_pure(psi, dpsi) -> float:
    """``4 (<dpsi|dpsi> - |<dpsi|psi>|^2)`` for a normalised ket.

    For normalised families ``<dpsi|psi>`` is imaginary, so the second term
    equals ``+(<dpsi|psi>)^2``.
    """
    psi, dpsi = _ket(psi), _ket(dpsi)
    if abs(np.linalg.norm(psi) - 1) > 1e-10:
        raise ValueError("state must be normalised")
    overlap = np.vdot(dpsi, psi)
    return float(4 * (np.vdot(dpsi, dpsi).real - abs(overlap) ** 2))


def qfi_generator(psi, generator) -> float:
    """Four times the variance of the generator."""
    psi, g = _ket(psi), _mat(generator)
    gpsi = g @ psi
    mean = np.vdot(psi, gpsi).real
    return float(4 * (np.vdot(gpsi, gpsi).real - mean**2))


def pure_sld(psi, dpsi) -> np.ndarray:
    psi, dpsi = _ket(psi), _ket(dpsi)
    return 2 * (np.outer(dpsi, psi.conj()) + np.outer(psi, dpsi.conj()))


@dataclass
class QfimResult:
    H: np.ndarray
    D: np.ndarray
    weak_commutators: np.ndarray
    sld_ops: list = field(default_factory=list)


def qfim(rho, drhos) -> QfimResult:
    """Quantum Fisher information matrix and weak commutators.

    ``H_hk = Tr[rho {L_h, L_k}] / 2`` (anticommutator). ``weak_commutators``
    holds the real numbers ``(i/2) Tr[rho [L_h, L_k]]``; ``D`` is the same
    information as ``i * weak_commutators``, the form that enters
    ``J^-1 = H^-1 + H^-1 D H^-1``.
    """
    m = _mat(rho)
    Ls = [sld(m, d) for d in drhos]
    n = len(Ls)
    corr = np.empty((n, n), dtype=complex)
    for h in range(n):
        for k in range(n):
            corr[h, k] = np.einsum("ij,jk,ki->", m, Ls[h], Ls[k])
    H = corr.real
    H = (H + H.T) / 2
    weak = -corr.imag
    weak = (weak - weak.T) / 2
    return QfimResult(H=H, D=1j * weak, weak_commutators=weak, sld_ops=Ls)


# ---------------------------------------------------------------- RLD


def rld_fim(rho, drhos, eps: float = SUPPORT_EPS) -> np.ndarray:
    """RLD information matrix ``J_hk = Tr[R_h^+ rho R_k]``, ``R_h = rho^-1 d_h rho``."""
    m = _mat(rho)
    vals = np.linalg.eigvalsh((m + m.conj().T) / 2)
    if vals.min() <= eps * vals.max():
        raise RankDeficientError(
            "RLD needs a full-rank state; for pure D-invariant models use rld_pure_d_invariant"
        )
    Rs = [np.linalg.solve(m, _mat(d)) for d in drhos]
    n = len(Rs)
    J = np.empty((n, n), dtype=complex)
    for h in range(n):
        for k in range(n):
            J[h, k] = np.trace(Rs[h].conj().T @ m @ Rs[k])
    return (J + J.conj().T) / 2


def rld_operators(rho, drhos) -> list[np.ndarray]:
    m = _mat(rho)
    return [np.linalg.solve(m, _mat(d)) for d in drhos]


def _checked_inv(H) -> np.ndarray:
    H = np.atleast_2d(np.asarray(H))
    if not np.all(np.isfinite(H)):
        raise np.linalg.LinAlgError("matrix has non-finite entries")
    s = np.linalg.svd(H, compute_uv=False)
    if s.size == 0 or s.min() <= 1e-12 * max(s.max(), 1e-300):
        raise np.linalg.LinAlgError("matrix is singular")
    return np.linalg.inv(H)


def rld_pure_d_invariant(H, D) -> np.ndarray:
    """Inverse RLD matrix ``H^-1 + H^-1 D H^-1`` for D-invariant pure models."""
    Hi = _checked_inv(H)
    return Hi + Hi @ np.asarray(D, dtype=complex) @ Hi


def trace_norm(a) -> float:
    return float(np.linalg.svd(np.atleast_2d(a), compute_uv=False).sum())


def scalar_bounds(W, H, J_inv=None, M: int = 1) -> dict[str, float]:
    """Weighted-variance bounds ``Tr[W H^-1]/M`` and the RLD counterpart."""
    W = np.atleast_2d(np.asarray(W, dtype=float))
    if not np.allclose(W, np.diag(np.diag(W))) or np.diag(W).min() < 0:
        raise ValueError("weight matrix must be diagonal and non-negative")
    out = {"sld_bound": float(np.trace(W @ _checked_inv(H)).real) / M}
    if J_inv is not None:
        J_inv = np.atleast_2d(np.asarray(J_inv, dtype=complex))
        sw = np.sqrt(W)
        out["rld_bound"] = (float(np.trace(W @ J_inv.real)) + trace_norm(sw @ J_inv.imag @ sw)) / M
    return out


def extraction_efficiency(F, H) -> float:
    """``Tr[F H^-1]``; snapped to ``[0, P]`` when within 1e-9 of an edge."""
    F = np.atleast_2d(np.asarray(F, dtype=float))
    val = float(np.trace(F @ _checked_inv(H)).real)
    p = F.shape[0]
    if -1e-9 < val < 0:
        val = 0.0
    elif p < val < p + 1e-9:
        val = float(p)
    return val


def reparametrize(F, B) -> np.ndarray:
    """Information matrix in new parameters, ``B F B^T`` with ``B_ij = d phi_j / d theta_i``."""
    F = np.atleast_2d(np.asarray(F))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if B.shape[1] != F.shape[0]:
        raise ValueError(f"B has {B.shape[1]} columns, F is {F.shape[0]}x{F.shape[0]}")
    return B @ F @ B.T


def effective_fi(F) -> tuple[float, float]:
    F = np.asarray(F, dtype=float)
    if F.shape != (2, 2):
        raise ValueError("effective information is defined for 2x2 matrices")
    if F[0, 0] <= 0 or F[1, 1] <= 0:
        raise ValueError("diagonal entries must be positive")
    return (float(F[0, 0] - F[0, 1] ** 2 / F[1, 1]), float(F[1, 1] - F[0, 1] ** 2 / F[0, 0]))


# ---------------------------------------------------------------- report


@dataclass
class FisherReport:
    F: np.ndarray | None
    H: np.ndarray
    D: np.ndarray
    weak_commutators: np.ndarray
    J_inv: np.ndarray | None
    sld_ops: list
    upsilon: float | None
    divergent: list = field(default_factory=list)

    @property
    def n_params(self) -> int:
        return self.H.shape[0]


def fisher_report(model, phi, povm=None, pure_d_invariant: bool = False) -> FisherReport:
    """Collect F, H, D, the RLD inverse (when defined) and the extraction efficiency."""
    rho = model.state_at(phi)
    ds = [model.derivative(phi, h) for h in range(model.n_params)]
    q = qfim(rho, ds)
    F = upsilon = None
    divergent: list = []
    if povm is not None:
        from .fock import outcome_distribution

        p = outcome_distribution(rho, povm)
        jac = povm_jacobian(povm, ds)
        divergent = divergent_outcomes(p, jac)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DivergentFisherWarning)
            F = classical_fim(p, jac)
        try:
            upsilon = extraction_efficiency(F, q.H) if np.all(np.isfinite(F)) else None
        except np.linalg.LinAlgError:
            upsilon = None
    J_inv = None
    try:
        J_inv = np.linalg.inv(rld_fim(rho, ds))
    except RankDeficientError:
        if pure_d_invariant:
            J_inv = rld_pure_d_invariant(q.H, q.D)
    except np.linalg.LinAlgError:
        J_inv = None
    return FisherReport(F=F, H=q.H, D=q.D, weak_commutators=q.weak_commutators, J_inv=J_inv,
                        sld_ops=q.sld_ops, upsilon=upsilon, divergent=divergent)

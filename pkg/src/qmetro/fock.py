"""Truncated multimode Fock-space states, operators, channels and detectors.

Basis ordering: occupation tuples are enumerated lexicographically with mode 0
varying slowest, so the full space is ``kron(mode_0, mode_1, ...)``.

Quadratures use ``x = sqrt(N0) (a^+ + a)`` and ``p = i sqrt(N0) (a^+ - a)``
with ``N0 = 1/2`` throughout; :func:`rescale_quadrature` converts values to
the other common conventions.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import expm
from scipy.special import gammaln
from scipy.stats import poisson

N0 = 0.5
DEFAULT_TAIL_TOL = 1e-6
TAIL_WARN = 1e-8


class TruncationError(ValueError):
    """Raised when a state loses too much probability to the photon cutoff."""


class TruncationWarning(UserWarning):
    pass


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FockBasis:
    n_modes: int
    cutoff: int

    def __post_init__(self):
        if self.n_modes < 1:
            raise ValueError("n_modes must be positive")
        if self.cutoff < 0:
            raise ValueError("cutoff must be non-negative")

    @property
    def local_dim(self) -> int:
        return self.cutoff + 1

    @property
    def dim(self) -> int:
        return self.local_dim ** self.n_modes

    @property
    def occupations(self) -> np.ndarray:
        """(dim, n_modes) integer array of occupation tuples in basis order."""
        grids = np.indices((self.local_dim,) * self.n_modes).reshape(self.n_modes, -1)
        return grids.T

    def index(self, occupation: Sequence[int]) -> int:
        occ = tuple(int(n) for n in occupation)
        if len(occ) != self.n_modes or min(occ) < 0 or max(occ) > self.cutoff:
            raise ValueError(f"occupation {occ} not in basis")
        return int(np.ravel_multi_index(occ, (self.local_dim,) * self.n_modes))

    def total_photons(self) -> np.ndarray:
        return self.occupations.sum(axis=1)

    def safe_indices(self, margin: int = 1) -> np.ndarray:
        """Basis indices whose occupations all stay ``margin`` below the cutoff.

        Commutator identities such as ``[a, a^+] = 1`` hold exactly on this block.
        """
        return np.flatnonzero((self.occupations <= self.cutoff - margin).all(axis=1))

    def check_mode(self, mode: int) -> int:
        if not 0 <= int(mode) < self.n_modes:
            raise IndexError(f"mode {mode} out of range for {self.n_modes} modes")
        return int(mode)

    def embed(self, local: np.ndarray, mode: int) -> np.ndarray:
        """Lift a single-mode matrix to the full space acting on ``mode``."""
        mode = self.check_mode(mode)
        out = np.ones((1, 1))
        eye = np.eye(self.local_dim)
        for m in range(self.n_modes):
            out = np.kron(out, local if m == mode else eye)
        return out


@dataclass(frozen=True, eq=False)
class LinearOperator:
    basis: FockBasis
    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "matrix", _frozen(self.matrix))
        if self.matrix.shape != (self.basis.dim, self.basis.dim):
            raise ValueError("operator shape does not match basis")

    @property
    def H(self) -> "LinearOperator":
        return LinearOperator(self.basis, self.matrix.conj().T)

    def __matmul__(self, other):
        if isinstance(other, LinearOperator):
            return LinearOperator(self.basis, self.matrix @ other.matrix)
        if isinstance(other, StateVector):
            return StateVector(self.basis, self.matrix @ other.amplitudes)
        return self.matrix @ other

    def __add__(self, other: "LinearOperator") -> "LinearOperator":
        return LinearOperator(self.basis, self.matrix + other.matrix)

    def __sub__(self, other: "LinearOperator") -> "LinearOperator":
        return LinearOperator(self.basis, self.matrix - other.matrix)

    def __mul__(self, c) -> "LinearOperator":
        return LinearOperator(self.basis, c * self.matrix)

    __rmul__ = __mul__

    def is_hermitian(self, atol: float = 1e-10) -> bool:
        return bool(np.allclose(self.matrix, self.matrix.conj().T, atol=atol))

    def is_unitary(self, atol: float = 1e-9) -> bool:
        eye = np.eye(self.basis.dim)
        return bool(np.allclose(self.matrix.conj().T @ self.matrix, eye, atol=atol))


@dataclass(frozen=True, eq=False)
class StateVector:
    basis: FockBasis
    amplitudes: np.ndarray
    tail_mass: float = 0.0

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).ravel()
        if amps.shape != (self.basis.dim,):
            raise ValueError("amplitude vector does not match basis")
        norm = np.linalg.norm(amps)
        if norm == 0:
            raise ValueError("zero vector is not a state")
        object.__setattr__(self, "amplitudes", _frozen(amps / norm))

    def dm(self) -> "DensityOperator":
        psi = self.amplitudes
        return DensityOperator(self.basis, np.outer(psi, psi.conj()))

    def expect(self, op) -> complex:
        m = getattr(op, "matrix", op)
        return complex(self.amplitudes.conj() @ m @ self.amplitudes)

    def variance(self, op) -> float:
        m = getattr(op, "matrix", op)
        mean = self.expect(m)
        return float((self.expect(m @ m) - mean * mean).real)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


@dataclass(frozen=True, eq=False)
class DensityOperator:
    basis: FockBasis
    matrix: np.ndarray

    def __post_init__(self):
        m = _frozen(self.matrix)
        if m.shape != (self.basis.dim, self.basis.dim):
            raise ValueError("density matrix does not match basis")
        if not np.allclose(m, m.conj().T, atol=1e-10):
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(m) - 1) > 1e-10:
            raise ValueError(f"density matrix trace is {np.trace(m).real!r}, expected 1")
        if np.linalg.eigvalsh(m).min() < -1e-9:
            raise ValueError("density matrix has a negative eigenvalue")
        object.__setattr__(self, "matrix", m)

    def expect(self, op) -> complex:
        m = getattr(op, "matrix", op)
        return complex(np.trace(self.matrix @ m))

    def variance(self, op) -> float:
        m = getattr(op, "matrix", op)
        mean = self.expect(m)
        return float((self.expect(m @ m) - mean * mean).real)

    def purity(self) -> float:
        return float(np.trace(self.matrix @ self.matrix).real)


def as_density(state) -> DensityOperator:
    if isinstance(state, DensityOperator):
        return state
    if isinstance(state, StateVector):
        return state.dm()
    raise TypeError(f"expected a state, got {type(state).__name__}")


# ---------------------------------------------------------------- operators


def _local_annihilation(d: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, d, dtype=float)), 1)


def build_mode_operators(basis: FockBasis, mode: int) -> dict[str, LinearOperator]:
    """Annihilation, creation, number and quadrature operators of one mode."""
    a_loc = _local_annihilation(basis.local_dim)
    a = basis.embed(a_loc, mode)
    ad = a.conj().T
    ops = {
        "annihilation": a,
        "creation": ad,
        "number": ad @ a,
        "x": np.sqrt(N0) * (ad + a),
        "p": 1j * np.sqrt(N0) * (ad - a),
    }
    return {k: LinearOperator(basis, v) for k, v in ops.items()}


def generalised_quadrature(basis: FockBasis, mode: int, angle: float) -> LinearOperator:
    ops = build_mode_operators(basis, mode)
    return np.cos(angle) * ops["x"] + np.sin(angle) * ops["p"]


def rescale_quadrature(value, n0_to: float, n0_from: float = N0):
    """Convert a quadrature value (not a variance) between unit conventions."""
    return value * np.sqrt(n0_to / n0_from)


# ---------------------------------------------------------------- states


def _checked_state(basis, amps, tail, tail_tol) -> StateVector:
    if tail > tail_tol:
        raise TruncationError(
            f"truncation discards probability {tail:.3g} (> {tail_tol:g}); raise the cutoff"
        )
    if tail > TAIL_WARN:
        warnings.warn(f"truncation discards probability {tail:.3g}", TruncationWarning, stacklevel=3)
    return StateVector(basis, amps, tail_mass=float(max(tail, 0.0)))


def fock_state(basis: FockBasis, occupation: Sequence[int]) -> StateVector:
    amps = np.zeros(basis.dim, dtype=complex)
    amps[basis.index(occupation)] = 1.0
    return StateVector(basis, amps)


def vacuum(basis: FockBasis) -> StateVector:
    return fock_state(basis, (0,) * basis.n_modes)


def _single_mode(basis: FockBasis, mode: int, local: np.ndarray) -> np.ndarray:
    """Product state with ``local`` on ``mode`` and vacuum elsewhere."""
    mode = basis.check_mode(mode)
    vac = np.zeros(basis.local_dim)
    vac[0] = 1.0
    out = np.ones(1)
    for m in range(basis.n_modes):
        out = np.kron(out, local if m == mode else vac)
    return out


def coherent_state(basis: FockBasis, alpha: complex, mode: int = 0,
                   tail_tol: float = DEFAULT_TAIL_TOL) -> StateVector:
    """Coherent state with amplitudes ``exp(-|a|^2/2) a^n / sqrt(n!)``."""
    alpha = complex(alpha)
    n = np.arange(basis.local_dim)
    mag = abs(alpha)
    if mag == 0:
        local = (n == 0).astype(complex)
        tail = 0.0
    else:
        log_amp = -0.5 * mag**2 + n * np.log(mag) - 0.5 * gammaln(n + 1)
        local = np.exp(log_amp) * np.exp(1j * n * np.angle(alpha))
        tail = float(poisson.sf(basis.cutoff, mag**2))
    return _checked_state(basis, _single_mode(basis, mode, local), tail, tail_tol)


def squeezed_vacuum(basis: FockBasis, s: float, theta: float = 0.0, mode: int = 0,
                    tail_tol: float = DEFAULT_TAIL_TOL, method: str = "series") -> StateVector:
    """Single-mode squeezed vacuum; ``theta = 0`` squeezes the x quadrature.

    ``method="series"`` (default) truncates the even-photon expansion
    ``sech^(1/2)(s) sum_k sqrt((2k)!)/k! (-e^{i theta} tanh(s) / 2)^k |2k>`` and
    renormalises. ``method="generator"`` applies ``exp((xi* a^2 - xi a^+2) / 2)``,
    ``xi = s e^{i theta}``, built on the truncated space (the usual
    truncated-operator construction); the two agree away from the cutoff.
    The reported tail mass is the series probability above the cutoff either way.
    """
    k = np.arange(basis.cutoff // 2 + 1)
    if s == 0:
        local = np.zeros(basis.local_dim, dtype=complex)
        local[0] = 1.0
        return _checked_state(basis, _single_mode(basis, mode, local), 0.0, tail_tol)
    th = np.tanh(abs(s))
    phase = -np.exp(1j * theta) * np.sign(s)
    log_mag = (-0.5 * np.log(np.cosh(s)) + 0.5 * gammaln(2 * k + 1) - gammaln(k + 1)
               + k * np.log(0.5 * th))
    series = np.zeros(basis.local_dim, dtype=complex)
    series[2 * k] = np.exp(log_mag) * phase**k
    tail = 1.0 - float(np.sum(np.abs(series) ** 2))
    if method == "series":
        local = series
    elif method == "generator":
        a = _local_annihilation(basis.local_dim)
        xi = s * np.exp(1j * theta)
        local = expm(0.5 * (np.conj(xi) * a @ a - xi * a.T @ a.T))[:, 0]
    else:
        raise ValueError(f"unknown method {method!r}")
    return _checked_state(basis, _single_mode(basis, mode, local), tail, tail_tol)


def two_mode_squeezed(basis: FockBasis, s: float, theta: float = 0.0,
                      tail_tol: float = DEFAULT_TAIL_TOL) -> StateVector:
    """``sum_n (-e^{i theta} tanh s)^n |n>|n> / cosh s`` on a two-mode basis."""
    if basis.n_modes != 2:
        raise ValueError("two-mode squeezed vacuum needs a two-mode basis")
    amps = np.zeros(basis.dim, dtype=complex)
    n = np.arange(basis.local_dim)
    coeff = (-np.exp(1j * theta) * np.tanh(s)) ** n / np.cosh(s)
    for k, c in zip(n, coeff):
        amps[basis.index((k, k))] = c
    tail = float(np.tanh(s) ** (2 * basis.local_dim))
    return _checked_state(basis, amps, tail, tail_tol)


def fixed_n_state(basis: FockBasis, beta: Sequence[complex]) -> StateVector:
    """``sum_k beta_k |k>|N-k>`` with ``N = len(beta) - 1``; mode 0 is the probe arm."""
    if basis.n_modes != 2:
        raise ValueError("fixed photon-number states need a two-mode basis")
    beta = np.asarray(beta, dtype=complex)
    n_tot = len(beta) - 1
    if n_tot > basis.cutoff:
        raise ValueError(f"N = {n_tot} exceeds the cutoff {basis.cutoff}")
    if abs(np.sum(np.abs(beta) ** 2) - 1) > 1e-10:
        raise ValueError("beta coefficients are not normalised")
    amps = np.zeros(basis.dim, dtype=complex)
    for k, b in enumerate(beta):
        amps[basis.index((k, n_tot - k))] = b
    return StateVector(basis, amps)


def noon_state(basis: FockBasis, n: int) -> StateVector:
    beta = np.zeros(n + 1)
    beta[0] = beta[-1] = 1 / np.sqrt(2)
    if n == 0:
        beta = np.ones(1)
    return fixed_n_state(basis, beta)


# ---------------------------------------------------------------- unitaries


def beam_splitter(basis: FockBasis, t: float, modes: tuple[int, int] = (0, 1)) -> LinearOperator:
    """Real beam splitter, ``U^+ a_i U = t a_i + r a_j`` and ``U^+ a_j U = t a_j - r a_i``.

    Built as ``expm(theta (a_i^+ a_j - a_i a_j^+))`` with ``t = cos(theta)``, so
    it is exactly unitary on the truncated space and exact on every sector
    with total photon number up to the cutoff.
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"transmissivity {t} outside [0, 1]")
    i, j = (basis.check_mode(m) for m in modes)
    if i == j:
        raise ValueError("beam splitter needs two distinct modes")
    a_i = build_mode_operators(basis, i)["annihilation"].matrix
    a_j = build_mode_operators(basis, j)["annihilation"].matrix
    gen = a_i.conj().T @ a_j - a_i @ a_j.conj().T
    theta = np.arccos(t)
    return LinearOperator(basis, expm(theta * gen))


def phase_shifter(basis: FockBasis, phi: float, mode: int = 0) -> LinearOperator:
    """Diagonal unitary ``exp(-i n phi)`` on one mode (``a -> e^{-i phi} a``)."""
    n = basis.occupations[:, basis.check_mode(mode)]
    return LinearOperator(basis, np.diag(np.exp(-1j * phi * n)))


def displacement(basis: FockBasis, alpha: complex, mode: int = 0) -> LinearOperator:
    ops = build_mode_operators(basis, mode)
    a = ops["annihilation"].matrix
    gen = alpha * a.conj().T - np.conj(alpha) * a
    return LinearOperator(basis, expm(gen))


def mzi_unitary(basis: FockBasis, phi: float, t_in: float = 1 / np.sqrt(2),
                t_out: float = 1 / np.sqrt(2)) -> LinearOperator:
    """Splitter, phases ``+phi/2`` / ``-phi/2`` on modes 0 / 1, recombiner.

    With ``|1,0>`` at the input the photon leaves through mode 0 with
    probability ``cos^2(phi/2)``.
    """
    prep = beam_splitter(basis, t_in).H
    shift = phase_shifter(basis, phi / 2, 0) @ phase_shifter(basis, -phi / 2, 1)
    return beam_splitter(basis, t_out) @ shift @ prep


# ---------------------------------------------------------------- channels


def _loss_kraus(d: int, eta: float) -> list[np.ndarray]:
    ops = []
    for k in range(d):
        m = np.zeros((d, d))
        for nn in range(k, d):
            log_c = gammaln(nn + 1) - gammaln(k + 1) - gammaln(nn - k + 1)
            m[nn - k, nn] = np.sqrt(np.exp(log_c) * eta ** (nn - k) * (1 - eta) ** k)
        ops.append(m)
    return ops


def loss_channel(state, eta: float, mode: int = 0) -> DensityOperator:
    """Pure-loss channel of transmissivity ``eta`` on one mode.

    Equivalent to mixing the mode with vacuum on a beam splitter with
    ``t = sqrt(eta)`` and discarding the other output; applied here through
    its Kraus operators, which are exact under truncation.
    """
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"efficiency {eta} outside [0, 1]")
    rho = as_density(state)
    basis = rho.basis
    out = np.zeros_like(rho.matrix)
    for k_loc in _loss_kraus(basis.local_dim, eta):
        k = basis.embed(k_loc, mode)
        out += k @ rho.matrix @ k.T
    return DensityOperator(basis, (out + out.conj().T) / 2)


def partial_trace(rho: np.ndarray, basis: FockBasis, keep: Sequence[int]) -> np.ndarray:
    """Reduced density matrix on the modes in ``keep`` (in their basis order)."""
    keep = sorted(basis.check_mode(m) for m in keep)
    n, d = basis.n_modes, basis.local_dim
    t = np.asarray(rho).reshape((d,) * (2 * n))
    traced = [m for m in range(n) if m not in keep]
    for offset, m in enumerate(traced):
        ax = m - offset
        t = np.trace(t, axis1=ax, axis2=ax + t.ndim // 2)
    dk = d ** len(keep)
    return t.reshape(dk, dk)


# ---------------------------------------------------------------- measurements


@dataclass(frozen=True, eq=False)
class Povm:
    effects: tuple
    labels: tuple = field(default=())

    def __post_init__(self):
        effects = tuple(_frozen(getattr(e, "matrix", e)) for e in self.effects)
        labels = tuple(self.labels) if self.labels else tuple(range(len(effects)))
        if len(labels) != len(effects):
            raise ValueError("one label per effect required")
        object.__setattr__(self, "effects", effects)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return len(self.effects)

    def check(self, atol: float = 1e-9) -> None:
        dim = self.effects[0].shape[0]
        total = np.zeros((dim, dim), dtype=complex)
        for e in self.effects:
            if not np.allclose(e, e.conj().T, atol=1e-10):
                raise ValueError("POVM effect is not Hermitian")
            if np.linalg.eigvalsh(e).min() < -1e-10:
                raise ValueError("POVM effect is not positive")
            total += e
        if not np.allclose(total, np.eye(dim), atol=atol):
            raise ValueError("POVM effects do not resolve the identity")

    def conjugated(self, unitary) -> "Povm":
        """Effects ``U^+ E U``: apply ``U`` to the state, then measure."""
        u = getattr(unitary, "matrix", unitary)
        return Povm(tuple(u.conj().T @ e @ u for e in self.effects), self.labels)

    def mixture(self, other: "Povm", weight: float) -> "Povm":
        """Randomly run this POVM with probability ``weight``, else ``other``."""
        effects = [weight * e for e in self.effects] + [(1 - weight) * e for e in other.effects]
        labels = [("a", lab) for lab in self.labels] + [("b", lab) for lab in other.labels]
        return Povm(tuple(effects), tuple(labels))


def _product_diagonal_povm(basis, modes, local_effects, local_labels) -> Povm:
    """Joint POVM from per-mode diagonal effects on the selected modes."""
    occ = basis.occupations
    effects, labels = [], []
    for combo in np.ndindex(*[len(local_labels)] * len(modes)):
        diag = np.ones(basis.dim)
        for m, c in zip(modes, combo):
            diag = diag * local_effects[c][occ[:, m]]
        effects.append(np.diag(diag))
        lab = tuple(local_labels[c] for c in combo)
        labels.append(lab[0] if len(modes) == 1 else lab)
    return Povm(tuple(effects), tuple(labels))


def build_povm(kind: str, basis: FockBasis | None = None, *, modes: Sequence[int] | None = None,
               efficiency: float = 1.0, dark_count: float = 0.0, operator=None,
               degeneracy_tol: float = 1e-8) -> Povm:
    """Construct a detector POVM.

    kind ``"on_off"``: click detectors, no-click effect ``sum_n (1-eta)^n |n><n|``,
    with an optional dark-click probability admixed into the click outcome.
    kind ``"photon_number"``: counting with binomial thinning by ``efficiency``.
    kind ``"sld_eigenbasis"``: projectors on the eigenspaces of ``operator``.
    """
    if kind == "sld_eigenbasis":
        if operator is None:
            raise ValueError("sld_eigenbasis needs an operator")
        return eigenbasis_povm(operator, degeneracy_tol)
    if basis is None:
        raise ValueError(f"{kind} POVM needs a basis")
    if not 0.0 <= efficiency <= 1.0:
        raise ValueError(f"efficiency {efficiency} outside [0, 1]")
    if not 0.0 <= dark_count <= 1.0:
        raise ValueError(f"dark-count probability {dark_count} outside [0, 1]")
    modes = list(range(basis.n_modes)) if modes is None else [basis.check_mode(m) for m in modes]
    n = np.arange(basis.local_dim)
    if kind == "on_off":
        no_click = (1 - dark_count) * (1 - efficiency) ** n
        return _product_diagonal_povm(basis, modes, [no_click, 1 - no_click], [0, 1])
    if kind == "photon_number":
        local = []
        for m in n:
            log_c = gammaln(n + 1) - gammaln(m + 1) - gammaln(np.maximum(n - m, 0) + 1)
            with np.errstate(divide="ignore"):
                w = np.where(n >= m, np.exp(log_c) * efficiency**m * (1 - efficiency) ** (n - m), 0.0)
            local.append(w)
        return _product_diagonal_povm(basis, modes, local, list(n))
    raise ValueError(f"unknown POVM kind {kind!r}")


def eigenbasis_povm(operator, degeneracy_tol: float = 1e-8) -> Povm:
    """Projective measurement on the eigenspaces of a Hermitian operator.

    Eigenvalues closer than ``degeneracy_tol`` times the spectral range are
    merged into one projector.
    """
    m = np.asarray(getattr(operator, "matrix", operator), dtype=complex)
    if not np.allclose(m, m.conj().T, atol=1e-10 * max(1.0, np.abs(m).max())):
        raise ValueError("eigenbasis POVM needs a Hermitian operator")
    vals, vecs = np.linalg.eigh((m + m.conj().T) / 2)
    spread = vals[-1] - vals[0]
    gap = degeneracy_tol * spread if spread > 0 else np.inf
    groups = [[0]]
    for i in range(1, len(vals)):
        if vals[i] - vals[groups[-1][0]] <= gap:
            groups[-1].append(i)
        else:
            groups.append([i])
    effects, labels = [], []
    for g in groups:
        v = vecs[:, g]
        effects.append(v @ v.conj().T)
        labels.append(float(np.mean(vals[g])))
    return Povm(tuple(effects), tuple(labels))


def outcome_distribution(state, povm: Povm) -> np.ndarray:
    """Born-rule probabilities ``Tr[E rho]`` for each effect."""
    if isinstance(state, StateVector):
        psi = state.amplitudes
        if povm.effects[0].shape[0] != psi.shape[0]:
            raise ValueError("POVM and state dimensions differ")
        probs = np.array([(psi.conj() @ e @ psi).real for e in povm.effects])
    else:
        rho = getattr(state, "matrix", state)
        if povm.effects[0].shape != rho.shape:
            raise ValueError("POVM and state dimensions differ")
        probs = np.array([np.einsum("ij,ji->", e, rho).real for e in povm.effects])
    if probs.min() < -1e-12:
        raise ValueError(f"negative outcome probability {probs.min():.3g}")
    probs = np.clip(probs, 0.0, None)
    if abs(probs.sum() - 1) > 1e-9:
        raise ValueError(f"outcome probabilities sum to {probs.sum()!r}")
    return probs

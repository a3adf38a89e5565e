"""Parametric statistical models and sampling.

Four model families are supported:

* :class:`UnitaryModel` -- ``|psi(phi)> = exp(-i sum_h phi_h G_h) |psi_0>``;
* :class:`DensityModel` -- any map ``phi -> rho(phi)``, differentiated by
  central finite differences unless an analytic derivative is supplied;
* :class:`DiscreteModel` -- closed-form outcome distributions ``p(x|phi)``;
* :class:`GaussianModel` -- a scalar Gaussian readout with mean ``mu(phi)``
  and variance ``v(phi)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import expm

from .fock import DensityOperator, FockBasis, Povm, StateVector, as_density, outcome_distribution

FD_REL_STEP = 1e-5
SAMPLE_BLOCK = 4096


class NonCommutingGeneratorsError(ValueError):
    pass


@dataclass(frozen=True)
class ParamPoint:
    names: tuple
    values: np.ndarray

    def __post_init__(self):
        names = tuple(self.names)
        values = np.atleast_1d(np.asarray(self.values, dtype=float)).copy()
        values.setflags(write=False)
        if len(names) != len(values):
            raise ValueError("names and values differ in length")
        if len(set(names)) != len(names):
            raise ValueError("parameter names must be unique")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "values", values)

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, map(float, self.values)))


def _values(phi) -> np.ndarray:
    if isinstance(phi, ParamPoint):
        return np.asarray(phi.values, dtype=float)
    return np.atleast_1d(np.asarray(phi, dtype=float))


def fd_step(value: float, rel: float = FD_REL_STEP) -> float:
    step = rel * max(1.0, abs(value))
    if step < 1e-12:
        raise ValueError(f"finite-difference step {step:g} underflows")
    return step


def _central_difference(fn, phi: np.ndarray, h: int, rel: float):
    d = fd_step(phi[h], rel)
    up, down = phi.copy(), phi.copy()
    up[h] += d
    down[h] -= d
    return (fn(up) - fn(down)) / (2 * d)


class UnitaryModel:
    """Pure-state model generated by Hermitian operators.

    Generators must commute up to a multiple of the identity (checked on the
    block away from the photon cutoff); quadrature displacements qualify, and
    for them ``d rho / d phi_h = -i [G_h, rho]`` remains exact.
    """

    def __init__(self, generators: Sequence, initial: StateVector, names: Sequence[str] | None = None):
        self.basis: FockBasis = initial.basis
        self.generators = tuple(np.asarray(getattr(g, "matrix", g), dtype=complex) for g in generators)
        self.initial = initial
        self.names = tuple(names) if names is not None else tuple(f"phi{h}" for h in range(len(self.generators)))
        if len(self.names) != len(self.generators):
            raise ValueError("one name per generator required")
        for g in self.generators:
            if not np.allclose(g, g.conj().T, atol=1e-10):
                raise ValueError("generators must be Hermitian")
        self._check_commutators()

    @property
    def n_params(self) -> int:
        return len(self.generators)

    def _check_commutators(self) -> None:
        safe = self.basis.safe_indices(margin=2)
        for i in range(self.n_params):
            for j in range(i + 1, self.n_params):
                gi, gj = self.generators[i], self.generators[j]
                comm = (gi @ gj - gj @ gi)[np.ix_(safe, safe)]
                c = np.trace(comm) / max(len(safe), 1)
                if np.linalg.norm(comm - c * np.eye(len(safe))) > 1e-9:
                    raise NonCommutingGeneratorsError(
                        f"generators {self.names[i]!r} and {self.names[j]!r} do not commute"
                    )

    def ket_at(self, phi) -> StateVector:
        phi = _values(phi)
        gen = sum(v * g for v, g in zip(phi, self.generators))
        return StateVector(self.basis, expm(-1j * gen) @ self.initial.amplitudes)

    def ket_derivative(self, phi, h: int) -> np.ndarray:
        """``-i (G_h - <G_h>) |psi(phi)>``; the centring only fixes the gauge."""
        psi = self.ket_at(phi).amplitudes
        g = self.generators[h]
        gpsi = g @ psi
        return -1j * (gpsi - (psi.conj() @ gpsi) * psi)

    def state_at(self, phi) -> DensityOperator:
        return self.ket_at(phi).dm()

    def derivative(self, phi, h: int) -> np.ndarray:
        rho = self.state_at(phi).matrix
        g = self.generators[h]
        d = -1j * (g @ rho - rho @ g)
        return (d + d.conj().T) / 2


class DensityModel:
    """Arbitrary state family ``phi -> rho``.

    ``state_fn`` may return a :class:`DensityOperator`, :class:`StateVector` or
    square array. Derivatives use central differences with step
    ``rel_step * max(1, |phi_h|)`` unless ``derivative_fn(phi, h)`` is given.
    """

    def __init__(self, state_fn: Callable, names: Sequence[str], derivative_fn: Callable | None = None,
                 rel_step: float = FD_REL_STEP):
        self.state_fn = state_fn
        self.names = tuple(names)
        self.derivative_fn = derivative_fn
        self.rel_step = rel_step

    @property
    def n_params(self) -> int:
        return len(self.names)

    def state_at(self, phi) -> DensityOperator:
        out = self.state_fn(_values(phi).copy())
        if isinstance(out, (DensityOperator, StateVector)):
            return as_density(out)
        raise TypeError("state_fn must return a DensityOperator or StateVector")

    def derivative(self, phi, h: int) -> np.ndarray:
        phi = _values(phi).copy()
        if self.derivative_fn is not None:
            d = np.asarray(self.derivative_fn(phi, h), dtype=complex)
        else:
            d = _central_difference(lambda p: self.state_at(p).matrix, phi, h, self.rel_step)
        return (d + d.conj().T) / 2


class DiscreteModel:
    """Closed-form outcome distribution ``p(x|phi)`` with optional Jacobian."""

    def __init__(self, prob_fn: Callable, names: Sequence[str], labels: Sequence | None = None,
                 jacobian_fn: Callable | None = None, rel_step: float = FD_REL_STEP):
        self.prob_fn = prob_fn
        self.names = tuple(names)
        self.jacobian_fn = jacobian_fn
        self.rel_step = rel_step
        self._labels = tuple(labels) if labels is not None else None

    @property
    def n_params(self) -> int:
        return len(self.names)

    def labels(self, phi=None) -> tuple:
        if self._labels is not None:
            return self._labels
        n = len(self.probabilities(phi if phi is not None else np.zeros(self.n_params)))
        return tuple(range(n))

    def probabilities(self, phi) -> np.ndarray:
        p = np.asarray(self.prob_fn(_values(phi).copy()), dtype=float)
        if p.min() < -1e-12:
            raise ValueError(f"negative probability {p.min():.3g}")
        p = np.clip(p, 0.0, None)
        if abs(p.sum() - 1) > 1e-9:
            raise ValueError(f"probabilities sum to {p.sum()!r}")
        return p

    def jacobian(self, phi) -> np.ndarray:
        """(n_outcomes, n_params) matrix of ``dp(x)/dphi_h``."""
        phi = _values(phi).copy()
        if self.jacobian_fn is not None:
            jac = np.asarray(self.jacobian_fn(phi), dtype=float)
            return jac.reshape(-1, self.n_params)
        cols = [_central_difference(lambda p: np.asarray(self.prob_fn(p), float), phi, h, self.rel_step)
                for h in range(self.n_params)]
        return np.stack(cols, axis=1)

    def probability_table(self, grid: np.ndarray) -> np.ndarray:
        """(len(grid), n_outcomes) probabilities along a one-parameter grid."""
        if self.n_params != 1:
            raise ValueError("probability tables need a single-parameter model")
        return np.stack([self.probabilities([g]) for g in np.asarray(grid, float)])

    @classmethod
    def measured(cls, model, povm: Povm) -> "DiscreteModel":
        """Outcome model of ``povm`` applied to a quantum model.

        Jacobian entries are ``Re Tr[E_x d rho]`` using the model's own
        derivative, so unitary models stay exact.
        """
        effects = povm.effects

        def probs(phi):
            return outcome_distribution(model.state_at(phi), povm)

        def jac(phi):
            ds = [model.derivative(phi, h) for h in range(model.n_params)]
            return np.array([[np.einsum("ij,ji->", e, d).real for d in ds] for e in effects])

        return cls(probs, model.names, labels=povm.labels, jacobian_fn=jac)


class GaussianModel:
    """Scalar Gaussian readout: mean ``mean_fn(phi)``, variance ``var_fn(phi)``."""

    def __init__(self, mean_fn: Callable, var_fn: Callable, names: Sequence[str] = ("phi",),
                 mean_derivative: Callable | None = None, rel_step: float = FD_REL_STEP):
        self.mean_fn = mean_fn
        self.var_fn = var_fn
        self.names = tuple(names)
        self.mean_derivative = mean_derivative
        self.rel_step = rel_step

    @property
    def n_params(self) -> int:
        return len(self.names)

    def mean(self, phi) -> float:
        return float(self.mean_fn(_values(phi).copy()))

    def variance(self, phi) -> float:
        v = float(self.var_fn(_values(phi).copy()))
        if v <= 0:
            raise ValueError("Gaussian model variance must be positive")
        return v

    def mean_slope(self, phi, h: int = 0) -> float:
        phi = _values(phi).copy()
        if self.mean_derivative is not None:
            return float(self.mean_derivative(phi))
        return float(_central_difference(lambda p: np.asarray(self.mean_fn(p), float), phi, h, self.rel_step))


# ---------------------------------------------------------------- operations


def state_at(model, phi) -> DensityOperator:
    if not hasattr(model, "state_at"):
        raise TypeError(f"{type(model).__name__} does not describe quantum states")
    return model.state_at(phi)


def state_derivative(model, phi, h: int = 0) -> np.ndarray:
    if not hasattr(model, "derivative"):
        raise TypeError(f"{type(model).__name__} does not describe quantum states")
    return model.derivative(phi, h)


@dataclass(frozen=True)
class OutcomeSample:
    outcomes: np.ndarray
    seed: int
    true_params: ParamPoint
    labels: tuple = field(default=())

    @property
    def M(self) -> int:
        return len(self.outcomes)

    def counts(self, n_outcomes: int | None = None) -> np.ndarray:
        n = n_outcomes if n_outcomes is not None else len(self.labels)
        return np.bincount(self.outcomes, minlength=n)


def _block_uniforms(seed: int, m: int) -> np.ndarray:
    """Uniforms drawn in fixed blocks, each from its own seed-derived stream.

    The draw for index ``i`` depends only on ``(seed, i)``, so any split of
    the work over blocks reproduces the same sample.
    """
    out = np.empty(m)
    for b, start in enumerate(range(0, m, SAMPLE_BLOCK)):
        stop = min(start + SAMPLE_BLOCK, m)
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(b,)))
        out[start:stop] = rng.random(SAMPLE_BLOCK)[: stop - start]
    return out


def _block_normals(seed: int, m: int) -> np.ndarray:
    out = np.empty(m)
    for b, start in enumerate(range(0, m, SAMPLE_BLOCK)):
        stop = min(start + SAMPLE_BLOCK, m)
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(b,)))
        out[start:stop] = rng.standard_normal(SAMPLE_BLOCK)[: stop - start]
    return out


def draw_outcomes(probs: np.ndarray, m: int, seed: int) -> np.ndarray:
    probs = np.asarray(probs, dtype=float)
    total = probs.sum()
    if total <= 0:
        raise ValueError("distribution has no probability mass")
    cdf = np.cumsum(probs / total)
    cdf[-1] = 1.0
    idx = np.searchsorted(cdf, _block_uniforms(seed, m), side="right")
    return np.minimum(idx, len(probs) - 1)


def sample(model, phi, M: int, seed: int, measurement: Povm | None = None) -> OutcomeSample:
    """Draw ``M`` i.i.d. outcomes at ``phi``; deterministic given ``seed``."""
    if M < 1:
        raise ValueError("sample size must be at least 1")
    names = getattr(model, "names", ("phi",))
    point = ParamPoint(names, _values(phi))
    if isinstance(model, GaussianModel):
        x = model.mean(phi) + np.sqrt(model.variance(phi)) * _block_normals(seed, M)
        return OutcomeSample(x, int(seed), point)
    if measurement is not None:
        model = DiscreteModel.measured(model, measurement)
    if not isinstance(model, DiscreteModel):
        raise TypeError("quantum models need a measurement to be sampled")
    probs = model.probabilities(phi)
    return OutcomeSample(draw_outcomes(probs, M, seed), int(seed), point, model.labels(phi))


def error_propagation(model: GaussianModel, phi) -> float:
    """Variance estimate ``v / (d mu / d phi)^2``; infinite at a flat mean."""
    slope = model.mean_slope(phi)
    if slope == 0:
        return float("inf")
    return model.variance(phi) / slope**2

"""Staircase data distribution.

Inputs live on a finite support: every stair ``j`` in ``0..s-1`` contributes an
anchor point ``j`` and two perturbation points ``j - eps`` and ``j + eps``.
Targets are ``m * round(x)`` plus Gaussian noise.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, NamedTuple

import numpy as np

TAIL_WEIGHT = 0.01

# Offsets of the three atoms of a stair, in the order (anchor, minus, plus).
_OFFSET_SIGNS = np.array([0.0, -1.0, 1.0])


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator; the bit stream is stable across platforms for a seed."""
    return np.random.Generator(np.random.PCG64(seed))


def build_weights(s: int, s0: int, tail_weight: float = TAIL_WEIGHT) -> np.ndarray:
    """Stair probabilities: the first ``s0`` stairs are heavy, the rest light.

    Unnormalized weights are ``1/s0`` for ``j < s0`` and ``tail_weight``
    otherwise.
    """
    if s < 1:
        raise ValueError(f"s must be a positive integer, got {s}")
    if not 1 <= s0 <= s:
        raise ValueError(f"s0 must satisfy 1 <= s0 <= s, got s0={s0}, s={s}")
    if tail_weight < 0:
        raise ValueError("tail_weight must be nonnegative")
    raw = np.where(np.arange(s) < s0, 1.0 / s0, tail_weight)
    return raw / raw.sum()


@dataclass(frozen=True)
class StaircaseParams:
    s: int
    s0: int
    delta: float
    epsilon: float
    sigma: float
    m: float
    weights: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if int(self.s) != self.s or self.s < 1:
            raise ValueError(f"s must be a positive integer, got {self.s}")
        if int(self.s0) != self.s0 or not 1 <= self.s0 <= self.s:
            raise ValueError(f"s0 must satisfy 1 <= s0 <= s, got {self.s0}")
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError(f"delta must lie in [0, 1], got {self.delta}")
        if not 0.0 < self.epsilon < 0.5:
            raise ValueError(f"epsilon must lie in (0, 0.5), got {self.epsilon}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be nonnegative, got {self.sigma}")
        object.__setattr__(self, "s", int(self.s))
        object.__setattr__(self, "s0", int(self.s0))
        if len(self.weights) == 0:
            w = build_weights(self.s, self.s0)
        else:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (self.s,):
                raise ValueError(f"weights must have length s={self.s}")
            if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
                raise ValueError("weights must be a probability vector")
        object.__setattr__(self, "weights", tuple(float(v) for v in w))

    @classmethod
    def create(cls, s: int = 10, s0: int = 5, delta: float = 0.01,
               epsilon: float = 0.4, sigma: float = 0.2, m: float = 1.0,
               tail_weight: float = TAIL_WEIGHT) -> "StaircaseParams":
        """Build params with weights from :func:`build_weights`."""
        return cls(s=s, s0=s0, delta=delta, epsilon=epsilon, sigma=sigma, m=m,
                   weights=tuple(build_weights(s, s0, tail_weight)))

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["weights"] = list(self.weights)
        return d

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "StaircaseParams":
        allowed = {"s", "s0", "delta", "epsilon", "sigma", "m", "weights"}
        unknown = set(data) - allowed
        if unknown:
            raise ValueError(f"unknown StaircaseParams fields: {sorted(unknown)}")
        missing = allowed - {"weights"} - set(data)
        if missing:
            raise ValueError(f"missing StaircaseParams fields: {sorted(missing)}")
        kwargs = dict(data)
        kwargs["weights"] = tuple(kwargs.get("weights") or ())
        return cls(**kwargs)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "StaircaseParams":
        return cls.from_dict(json.loads(text))

    @property
    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]

    @property
    def w(self) -> np.ndarray:
        return np.asarray(self.weights)


class SupportAtom(NamedTuple):
    x: float
    anchor: int
    prob: float


def atom_grid(params: StaircaseParams) -> np.ndarray:
    """Support points as an ``(s, 3)`` array, rows ``(j, j - eps, j + eps)``."""
    anchors = np.arange(params.s, dtype=float)[:, None]
    return anchors + _OFFSET_SIGNS[None, :] * params.epsilon


def atom_probs(params: StaircaseParams) -> np.ndarray:
    """Probabilities matching :func:`atom_grid`, shape ``(s, 3)``."""
    split = np.array([1.0 - params.delta, params.delta / 2, params.delta / 2])
    return params.w[:, None] * split[None, :]


def support(params: StaircaseParams) -> list[SupportAtom]:
    xs, ps = atom_grid(params), atom_probs(params)
    return [SupportAtom(float(xs[j, k]), j, float(ps[j, k]))
            for j in range(params.s) for k in range(3)]


def round_nearest(x):
    """Round to nearest integer, ties to even."""
    return np.rint(x)


def f_star(params: StaircaseParams, x):
    """Optimal predictor ``m * round(x)``; accepts scalars or arrays."""
    out = params.m * round_nearest(np.asarray(x, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def invariance_set(params: StaircaseParams, x):
    """Points ``(a, a - eps, a + eps)`` with ``a = round(x)``.

    For an array of ``n`` inputs the result has shape ``(n, 3)``.
    """
    a = round_nearest(np.asarray(x, dtype=float))
    pts = a[..., None] + _OFFSET_SIGNS * params.epsilon
    if np.ndim(x) == 0:
        return tuple(float(v) for v in pts)
    return pts


InvarianceFn = Callable[[np.ndarray], np.ndarray]


def default_invariance(params: StaircaseParams) -> InvarianceFn:
    return lambda xs: invariance_set(params, np.asarray(xs, dtype=float))


def singleton_invariance(xs: np.ndarray) -> np.ndarray:
    """Degenerate ``B(x) = {x}``, repeated to keep the three-column shape."""
    xs = np.asarray(xs, dtype=float)
    return np.repeat(xs[:, None], 3, axis=1)


def frozen_array(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    xs: np.ndarray
    ys: np.ndarray
    seed: int | None = None
    params_fingerprint: str = ""

    def __post_init__(self):
        object.__setattr__(self, "xs", frozen_array(self.xs))
        object.__setattr__(self, "ys", frozen_array(self.ys))
        if self.xs.ndim != 1 or self.xs.shape != self.ys.shape:
            raise ValueError("xs and ys must be 1-D arrays of equal length")

    def __len__(self) -> int:
        return self.xs.size

    def to_bytes(self) -> bytes:
        return self.xs.tobytes() + self.ys.tobytes()


def on_support(params: StaircaseParams, xs, tol: float = 1e-9) -> bool:
    grid = atom_grid(params).ravel()
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    dist = np.abs(xs[:, None] - grid[None, :]).min(axis=1)
    return bool(np.all(dist < tol))


def sample_inputs(params: StaircaseParams, n: int, rng: np.random.Generator) -> np.ndarray:
    stairs = rng.choice(params.s, size=n, p=params.w)
    kind = rng.choice(3, size=n, p=[1.0 - params.delta, params.delta / 2, params.delta / 2])
    return atom_grid(params)[stairs, kind]


def sample_dataset(params: StaircaseParams, n: int, seed: int) -> Dataset:
    """Draw ``n`` i.i.d. pairs; identical arguments give identical arrays."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = make_rng(seed)
    xs = sample_inputs(params, n, rng)
    ys = f_star(params, xs) + params.sigma * rng.standard_normal(n)
    return Dataset(xs, np.atleast_1d(ys), seed=seed,
                   params_fingerprint=params.fingerprint)

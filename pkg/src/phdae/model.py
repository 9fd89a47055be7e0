"""Linear port-Hamiltonian descriptor models and their parametrization.

The model class is

    E x'(t) = (J - R) Q x(t) + G u(t),      y(t) = G^T Q x(t),

with J skew-symmetric, R and E symmetric positive semidefinite, and Q
fixed to the identity. Structure is preserved for every parameter value
by assembling J from the skew part of a raw matrix M and R, E from
Gram factors L_R L_R^T, L_E L_E^T. Structural masks freeze entries known
from topology (including exact zero rows of L_E, which yield exact
algebraic equations).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .errors import DimensionMismatch

__all__ = [
    "StructuralMask",
    "PhDaeParams",
    "PhDaeModel",
    "assemble",
    "unflatten",
    "initialize_params",
    "save_model",
    "load_model",
]


@dataclass(frozen=True)
class StructuralMask:
    """Per-entry freedom pattern: True entries are free (optimized), False
    entries are pinned to the corresponding frozen value."""

    pattern: np.ndarray
    frozen: np.ndarray

    def __post_init__(self):
        pattern = np.ascontiguousarray(np.asarray(self.pattern, dtype=bool))
        frozen = np.ascontiguousarray(np.asarray(self.frozen, dtype=np.float64))
        if pattern.shape != frozen.shape:
            raise DimensionMismatch(
                f"mask pattern {pattern.shape} vs frozen values {frozen.shape}"
            )
        object.__setattr__(self, "pattern", pattern)
        object.__setattr__(self, "frozen", frozen)

    @property
    def n_free(self) -> int:
        return int(self.pattern.sum())

    def apply(self, raw: np.ndarray) -> np.ndarray:
        """Substitute frozen values into the raw matrix."""
        if raw.shape != self.pattern.shape:
            raise DimensionMismatch(f"raw {raw.shape} vs mask {self.pattern.shape}")
        return np.where(self.pattern, raw, self.frozen)

    @staticmethod
    def free(shape) -> "StructuralMask":
        return StructuralMask(np.ones(shape, dtype=bool), np.zeros(shape))

    @staticmethod
    def fixed(values) -> "StructuralMask":
        values = np.asarray(values, dtype=np.float64)
        return StructuralMask(np.zeros(values.shape, dtype=bool), values)

    @staticmethod
    def lower_triangular(n: int, free_rows=None) -> "StructuralMask":
        """Cholesky-style factor mask: free at or below the diagonal.

        free_rows restricts freedom to the given row indices (used to pin
        exact zero rows for algebraic states).
        """
        pattern = np.tril(np.ones((n, n), dtype=bool))
        if free_rows is not None:
            keep = np.zeros(n, dtype=bool)
            keep[list(free_rows)] = True
            pattern &= keep[:, None] & keep[None, :]
        return StructuralMask(pattern, np.zeros((n, n)))


@dataclass(frozen=True)
class PhDaeParams:
    """Raw factor matrices with their structural masks.

    J comes from the skew part of m_j, R from l_r l_r^T, E from l_e l_e^T,
    G directly; Q is fixed to the identity. The free entries of
    (m_j, l_r, l_e, g), in that order and row-major within each matrix,
    form the parameter vector theta.
    """

    m_j: np.ndarray
    mask_j: StructuralMask
    l_r: np.ndarray
    mask_r: StructuralMask
    l_e: np.ndarray
    mask_e: StructuralMask
    g: np.ndarray
    mask_g: StructuralMask

    def __post_init__(self):
        for name in ("m_j", "l_r", "l_e", "g"):
            object.__setattr__(
                self, name, np.ascontiguousarray(np.asarray(getattr(self, name), dtype=np.float64))
            )
        n = self.m_j.shape[0]
        for name, mat in (("m_j", self.m_j), ("l_r", self.l_r), ("l_e", self.l_e)):
            if mat.shape != (n, n):
                raise DimensionMismatch(f"{name} must be {n}x{n}, got {mat.shape}")
        if self.g.ndim != 2 or self.g.shape[0] != n:
            raise DimensionMismatch(f"g must have {n} rows, got {self.g.shape}")
        for mat, mask in self._pairs():
            if mask.pattern.shape != mat.shape:
                raise DimensionMismatch("mask shape does not match its matrix")

    def _pairs(self):
        return (
            (self.m_j, self.mask_j),
            (self.l_r, self.mask_r),
            (self.l_e, self.mask_e),
            (self.g, self.mask_g),
        )

    @property
    def n(self) -> int:
        return self.m_j.shape[0]

    @property
    def m(self) -> int:
        return self.g.shape[1]

    @property
    def n_theta(self) -> int:
        return sum(mask.n_free for _, mask in self._pairs())

    def flatten(self) -> np.ndarray:
        """Free entries as a vector (bijective with unflatten)."""
        return np.concatenate([mat[mask.pattern] for mat, mask in self._pairs()])

    def with_theta(self, theta) -> "PhDaeParams":
        """New params with the free entries replaced by theta."""
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.n_theta,):
            raise DimensionMismatch(
                f"theta length {theta.shape} != free entry count {self.n_theta}"
            )
        out = {}
        offset = 0
        for name, (mat, mask) in zip(("m_j", "l_r", "l_e", "g"), self._pairs()):
            k = mask.n_free
            new = mat.copy()
            new[mask.pattern] = theta[offset : offset + k]
            offset += k
            out[name] = new
        return replace(self, **out)

    @staticmethod
    def dense(n: int, m: int) -> "PhDaeParams":
        """Fully parametrized template: full m_j and g, lower-triangular
        factors for R and E."""
        return PhDaeParams(
            m_j=np.zeros((n, n)),
            mask_j=StructuralMask.free((n, n)),
            l_r=np.zeros((n, n)),
            mask_r=StructuralMask.lower_triangular(n),
            l_e=np.zeros((n, n)),
            mask_e=StructuralMask.lower_triangular(n),
            g=np.zeros((n, m)),
            mask_g=StructuralMask.free((n, m)),
        )


def unflatten(theta, template: PhDaeParams) -> PhDaeParams:
    return template.with_theta(theta)


def initialize_params(template: PhDaeParams, rng: np.random.Generator) -> PhDaeParams:
    """Randomize free entries: positive diagonal factor entries uniform in
    [0.1, 1.0] keep the initial descriptor nondegenerate, everything else
    N(0, 0.1)."""
    out = {}
    for name, (mat, mask) in zip(
        ("m_j", "l_r", "l_e", "g"), template._pairs()
    ):
        new = mat.copy()
        free = mask.pattern
        new[free] = 0.1 * rng.standard_normal(int(free.sum()))
        if name in ("l_r", "l_e"):
            diag = np.zeros_like(free)
            np.fill_diagonal(diag, True)
            sel = free & diag
            new[sel] = rng.uniform(0.1, 1.0, int(sel.sum()))
        out[name] = new
    return replace(template, **out)


@dataclass(frozen=True)
class PhDaeModel:
    """Assembled system matrices (E, J, R, Q, G) with validated structure."""

    e: np.ndarray
    j: np.ndarray
    r: np.ndarray
    q: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        for name in ("e", "j", "r", "q", "g"):
            object.__setattr__(
                self, name, np.ascontiguousarray(np.asarray(getattr(self, name), dtype=np.float64))
            )
        n = self.e.shape[0]
        for name in ("e", "j", "r", "q"):
            if getattr(self, name).shape != (n, n):
                raise DimensionMismatch(f"{name} must be {n}x{n}")
        if self.g.ndim != 2 or self.g.shape[0] != n:
            raise DimensionMismatch(f"g must have {n} rows, got {self.g.shape}")

    @property
    def n(self) -> int:
        return self.e.shape[0]

    @property
    def m(self) -> int:
        return self.g.shape[1]

    def hamiltonian(self, x) -> float:
        """Stored energy H(x) = 0.5 x^T Q^T E x (joules for physical units)."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n,):
            raise DimensionMismatch(f"state length {x.shape} != {self.n}")
        return 0.5 * float(self.q @ x @ (self.e @ x))

    def output(self, x, selector=None) -> np.ndarray:
        """Port output G^T Q x, or selector @ x when a fixed observation
        matrix is supplied (extra training targets)."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n,):
            raise DimensionMismatch(f"state length {x.shape} != {self.n}")
        if selector is None:
            return self.g.T @ (self.q @ x)
        selector = np.asarray(selector, dtype=np.float64)
        if selector.shape[-1] != self.n:
            raise DimensionMismatch(
                f"selector columns {selector.shape} != state dim {self.n}"
            )
        return selector @ x

    def validate(self, tol: float = 1e-10) -> None:
        """Check the structural conditions; raises ValueError on violation.

        Assembly guarantees them by construction; this is for models read
        back from files.
        """
        if not np.array_equal(self.j, -self.j.T):
            raise ValueError("J is not skew-symmetric")
        for name, mat in (("R", self.r), ("E^T Q", self.e.T @ self.q)):
            if not np.allclose(mat, mat.T, atol=tol, rtol=0.0):
                raise ValueError(f"{name} is not symmetric")
            if np.linalg.eigvalsh(0.5 * (mat + mat.T)).min() < -tol:
                raise ValueError(f"{name} is not positive semidefinite")


def assemble(params: PhDaeParams) -> PhDaeModel:
    """Assemble a structurally valid model from raw parameters.

    J = (M - M^T)/2, R = L_R L_R^T, E = L_E L_E^T and Q = I hold for every
    parameter value, so the result is port-Hamiltonian by construction.
    Skew-symmetrization is applied on every assembly, not once.
    """
    m = params.mask_j.apply(params.m_j)
    l_r = params.mask_r.apply(params.l_r)
    l_e = params.mask_e.apply(params.l_e)
    g = params.mask_g.apply(params.g)
    return PhDaeModel(
        e=l_e @ l_e.T,
        j=0.5 * (m - m.T),
        r=l_r @ l_r.T,
        q=np.eye(params.n),
        g=g,
    )


def _mask_to_json(mask: StructuralMask) -> dict:
    return {
        "pattern": mask.pattern.astype(int).tolist(),
        "frozen": mask.frozen.tolist(),
    }


def _mask_from_json(obj) -> StructuralMask:
    return StructuralMask(
        np.asarray(obj["pattern"], dtype=bool),
        np.asarray(obj["frozen"], dtype=np.float64),
    )


def save_model(path, model: PhDaeModel, params: PhDaeParams | None = None,
               selector=None, extra: dict | None = None) -> None:
    """Write a self-describing JSON document with row-major arrays.

    Floats are serialized in round-trip precision. Optional sections carry
    the parametrization (masks + raw values), a fixed output selector, and
    caller metadata such as a trained encoder.
    """
    doc = {
        "n": model.n,
        "m": model.m,
        "e": model.e.tolist(),
        "j": model.j.tolist(),
        "r": model.r.tolist(),
        "q": model.q.tolist(),
        "g": model.g.tolist(),
    }
    if params is not None:
        doc["params"] = {
            "m_j": params.m_j.tolist(),
            "mask_j": _mask_to_json(params.mask_j),
            "l_r": params.l_r.tolist(),
            "mask_r": _mask_to_json(params.mask_r),
            "l_e": params.l_e.tolist(),
            "mask_e": _mask_to_json(params.mask_e),
            "g": params.g.tolist(),
            "mask_g": _mask_to_json(params.mask_g),
        }
    if selector is not None:
        doc["selector"] = np.asarray(selector, dtype=np.float64).tolist()
    if extra:
        doc.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_model(path) -> dict:
    """Read a model document; returns a dict with keys 'model', optional
    'params', 'selector', plus any extra sections verbatim."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    out = dict(doc)
    out["model"] = PhDaeModel(
        e=np.asarray(doc["e"]),
        j=np.asarray(doc["j"]),
        r=np.asarray(doc["r"]),
        q=np.asarray(doc["q"]),
        g=np.asarray(doc["g"]),
    )
    if "params" in doc:
        p = doc["params"]
        out["params"] = PhDaeParams(
            m_j=np.asarray(p["m_j"]),
            mask_j=_mask_from_json(p["mask_j"]),
            l_r=np.asarray(p["l_r"]),
            mask_r=_mask_from_json(p["mask_r"]),
            l_e=np.asarray(p["l_e"]),
            mask_e=_mask_from_json(p["mask_e"]),
            g=np.asarray(p["g"]),
            mask_g=_mask_from_json(p["mask_g"]),
        )
    if doc.get("selector") is not None:
        out["selector"] = np.asarray(doc["selector"], dtype=np.float64)
    return out

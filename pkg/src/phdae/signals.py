"""Excitation signals, measurement noise, and dataset file I/O.

Datasets are uniformly sampled input/output records. The CSV format is
UTF-8, comma-separated, one header line naming the columns
t, u1..uM, y1..yP and optionally y_clean1..y_cleanP; numbers are written
in full round-trip precision so files regenerate bit-identically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateSignal,
    DimensionMismatch,
    InsufficientData,
    InvalidParameter,
    ParseError,
)

__all__ = [
    "MultisineSpec",
    "Dataset",
    "multisine",
    "add_noise",
    "read_csv",
    "write_csv",
    "stream_rng",
]


def stream_rng(seed: int, *key: int) -> np.random.Generator:
    """Seed-derived generator for one purpose; distinct keys give
    independent streams."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


@dataclass(frozen=True)
class MultisineSpec:
    """Sum of n_sines harmonics of f0 with per-realization phases,
    u(t) = sum_i amplitude * sin(2 pi i f0 t + phi_i), i = 1..n_sines."""

    f0: float
    n_sines: int
    phases: np.ndarray
    amplitude: float = 1.0

    def __post_init__(self):
        phases = np.asarray(self.phases, dtype=np.float64)
        if phases.shape != (self.n_sines,):
            raise DimensionMismatch(
                f"need {self.n_sines} phases, got shape {phases.shape}"
            )
        if np.any(phases < 0.0) or np.any(phases >= 2.0 * np.pi):
            raise InvalidParameter("phases must lie in [0, 2*pi)")
        if self.f0 <= 0:
            raise InvalidParameter("base frequency must be positive")
        object.__setattr__(self, "phases", phases)

    @staticmethod
    def random(f0: float, n_sines: int, rng: np.random.Generator,
               amplitude: float = 1.0) -> "MultisineSpec":
        return MultisineSpec(f0=f0, n_sines=n_sines,
                             phases=rng.uniform(0.0, 2.0 * np.pi, n_sines),
                             amplitude=amplitude)


def multisine(spec: MultisineSpec, t):
    """Evaluate the multisine at scalar or array times."""
    t = np.asarray(t, dtype=np.float64)
    harmonics = 2.0 * np.pi * spec.f0 * np.arange(1, spec.n_sines + 1)
    u = spec.amplitude * np.sin(t[..., None] * harmonics + spec.phases).sum(axis=-1)
    return float(u) if u.ndim == 0 else u


def add_noise(signal, snr_db: float, rng: np.random.Generator):
    """Additive zero-mean white Gaussian noise at the requested SNR.

    The noise std is sigma_y * 10^(-SNR/20) per channel, with sigma_y the
    population std of the clean channel. snr_db = inf returns the signal
    unchanged. Returns (noisy, noise_std); std is a scalar for 1-D input.
    """
    sig = np.asarray(signal, dtype=np.float64)
    one_d = sig.ndim == 1
    cols = sig[:, None] if one_d else sig
    if math.isinf(snr_db) and snr_db > 0:
        std = np.zeros(cols.shape[1])
        noisy = cols.copy()
    else:
        sigma = cols.std(axis=0, ddof=0)
        if np.any(sigma == 0.0):
            raise DegenerateSignal("constant channel: SNR-relative noise undefined")
        std = sigma * 10.0 ** (-snr_db / 20.0)
        noisy = cols + rng.standard_normal(cols.shape) * std
    if one_d:
        return noisy[:, 0], float(std[0])
    return noisy, std


@dataclass
class Dataset:
    """Uniformly sampled input/output records plus noise metadata."""

    t_s: float
    inputs: np.ndarray                 # (N, m_u)
    outputs: np.ndarray                # (N, m_y)
    outputs_clean: np.ndarray | None = None
    snr_db: float | None = None
    noise_std: np.ndarray | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.t_s <= 0:
            raise InvalidParameter("sampling period must be positive")
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=np.float64))
        self.outputs = np.atleast_2d(np.asarray(self.outputs, dtype=np.float64))
        if self.inputs.ndim != 2 or self.outputs.ndim != 2:
            raise DimensionMismatch("inputs/outputs must be (N, channels)")
        if self.inputs.shape[0] != self.outputs.shape[0]:
            raise DimensionMismatch(
                f"{self.inputs.shape[0]} input rows vs {self.outputs.shape[0]} output rows"
            )
        if self.outputs_clean is not None:
            self.outputs_clean = np.atleast_2d(
                np.asarray(self.outputs_clean, dtype=np.float64)
            )
            if self.outputs_clean.shape != self.outputs.shape:
                raise DimensionMismatch("clean outputs must match outputs shape")

    @property
    def n_samples(self) -> int:
        return self.inputs.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.inputs.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.outputs.shape[1]

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_samples) * self.t_s

    def data_equal(self, other: "Dataset") -> bool:
        """Bitwise equality of the sampled data (metadata excluded)."""
        if self.t_s != other.t_s:
            return False
        if not (np.array_equal(self.inputs, other.inputs)
                and np.array_equal(self.outputs, other.outputs)):
            return False
        if (self.outputs_clean is None) != (other.outputs_clean is None):
            return False
        if self.outputs_clean is not None:
            return np.array_equal(self.outputs_clean, other.outputs_clean)
        return True


def write_csv(dataset: Dataset, path) -> None:
    """Write the dataset; numbers use repr so the file round-trips doubles
    exactly and regenerates byte-identically."""
    header = ["t"]
    header += [f"u{i + 1}" for i in range(dataset.n_inputs)]
    header += [f"y{i + 1}" for i in range(dataset.n_outputs)]
    if dataset.outputs_clean is not None:
        header += [f"y_clean{i + 1}" for i in range(dataset.n_outputs)]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for k in range(dataset.n_samples):
            row = [k * dataset.t_s]
            row += list(dataset.inputs[k])
            row += list(dataset.outputs[k])
            if dataset.outputs_clean is not None:
                row += list(dataset.outputs_clean[k])
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def _parse_header(fields, line_no):
    if not fields or fields[0] != "t":
        raise ParseError("first column must be 't'", line=line_no)
    n_u = n_y = n_clean = 0
    pos = 1
    while pos < len(fields) and fields[pos] == f"u{n_u + 1}":
        n_u += 1
        pos += 1
    while pos < len(fields) and fields[pos] == f"y{n_y + 1}":
        n_y += 1
        pos += 1
    while pos < len(fields) and fields[pos] == f"y_clean{n_clean + 1}":
        n_clean += 1
        pos += 1
    if pos != len(fields) or n_u == 0 or n_y == 0 or n_clean not in (0, n_y):
        raise ParseError(f"unrecognized column layout {fields}", line=line_no)
    return n_u, n_y, n_clean > 0


def read_csv(path) -> Dataset:
    """Read a dataset written by write_csv; raises ParseError with the
    offending line number, InsufficientData for fewer than two samples."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise InsufficientData(f"{path}: empty file")
    n_u, n_y, has_clean = _parse_header(lines[0].split(","), 1)
    n_cols = 1 + n_u + n_y + (n_y if has_clean else 0)
    rows = []
    for line_no, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != n_cols:
            raise ParseError(
                f"expected {n_cols} columns, got {len(parts)}", line=line_no
            )
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise ParseError(str(exc), line=line_no) from exc
    if len(rows) < 2:
        raise InsufficientData(
            f"{path}: need at least 2 samples, got {len(rows)}"
        )
    data = np.asarray(rows)
    t_s = data[1, 0] - data[0, 0]
    if t_s <= 0:
        raise ParseError("time column is not increasing", line=3)
    clean = data[:, 1 + n_u + n_y:] if has_clean else None
    return Dataset(
        t_s=t_s,
        inputs=data[:, 1:1 + n_u],
        outputs=data[:, 1 + n_u:1 + n_u + n_y],
        outputs_clean=clean,
    )

"""Observation sampling for the additive Gaussian noise model.

Null observations are i.i.d. N(0,1) tensors; planted ones add the rank-one
signal lambda x^(tensor p).  Also provides the maps between the asymmetric
noise model used everywhere here and the standard symmetric one: matrix
symmetrization/asymmetrization, and the one-dimensional k-sample simplex
construction that underlies tensor resymmetrization.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass
from functools import lru_cache, reduce
from typing import Union

import numpy as np

from .ldlr import ModelSpec
from .priors import sample_spikes
from .rng import GENERATOR_ID, make_rng

MEMORY_CAP = 2**30  # max tensor entries held dense

TENSOR_MAGIC = b"LDLRTNSR"


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class Observation:
    """A dense order-p observation tensor with sampling provenance."""

    p: int
    n: int
    entries: np.ndarray  # shape (n,) * p, float64
    provenance: dict

    def __post_init__(self):
        if self.entries.shape != (self.n,) * self.p:
            raise ModelError(f"entries shape {self.entries.shape} != {(self.n,) * self.p}")

    @property
    def flat(self) -> np.ndarray:
        return self.entries.reshape(-1)


def _check_size(p: int, n: int, memory_cap: int):
    if n**p > memory_cap:
        raise ModelError(f"tensor with n^p = {n**p} entries exceeds memory cap {memory_cap}")


def sample_null(p: int, n: int, seed: int, memory_cap: int = MEMORY_CAP) -> Observation:
    """Pure-noise observation: i.i.d. standard Gaussian entries."""
    _check_size(p, n, memory_cap)
    rng = make_rng(seed, "null", p, n)
    z = rng.standard_normal((n,) * p)
    return Observation(p, n, z, {"kind": "null", "seed": seed, "generator": GENERATOR_ID})


def rank_one(x: np.ndarray, p: int) -> np.ndarray:
    """x^(tensor p) as a dense array."""
    return reduce(np.multiply.outer, [x] * (p - 1), x)


def spike_hash(x: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(x, dtype="<f8").tobytes()).hexdigest()[:16]


def sample_planted(model: ModelSpec, seed: int, memory_cap: int = MEMORY_CAP) -> tuple[Observation, np.ndarray]:
    """Planted observation Y = lambda x^(tensor p) + Z, plus the spike x."""
    _check_size(model.p, model.n, memory_cap)
    spike = sample_spikes(model.prior_handle, model.n, 1, make_rng(seed, "spike"))[0]
    noise = make_rng(seed, "noise", model.p, model.n).standard_normal((model.n,) * model.p)
    y = model.lam * rank_one(spike, model.p) + noise
    prov = {
        "kind": "planted",
        "seed": seed,
        "spike_hash": spike_hash(spike),
        "generator": GENERATOR_ID,
    }
    return Observation(model.p, model.n, y, prov), spike


def _as_matrix(Y: Union[Observation, np.ndarray]) -> np.ndarray:
    if isinstance(Y, Observation):
        if Y.p != 2:
            raise ModelError("matrix operation needs p = 2")
        return Y.entries
    m = np.asarray(Y, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ModelError("expected a square matrix")
    return m


def symmetrize(Y: Union[Observation, np.ndarray]) -> np.ndarray:
    """Ybar = (Y + Y^T) / sqrt(2n); GOE-distributed under the null."""
    m = _as_matrix(Y)
    n = m.shape[0]
    return (m + m.T) / math.sqrt(2 * n)


def asymmetrize(sym: np.ndarray, seed: int) -> Observation:
    """Recover the asymmetric model from Ytilde = (Y + Y^T)/2.

    Adds an independent skew part (G - G^T)/2; the result matches the
    asymmetric observation in distribution.  Note the input is on the
    (Y + Y^T)/2 scale, not the sqrt(2n)-normalized one, so
    symmetrize(asymmetrize(S)) equals S * sqrt(2/n).
    """
    m = np.asarray(sym, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ModelError("expected a square matrix")
    if not np.array_equal(m, m.T):
        raise ModelError("input matrix is not symmetric")
    n = m.shape[0]
    g = make_rng(seed, "asymmetrize", n).standard_normal((n, n))
    out = m + 0.5 * (g - g.T)
    return Observation(2, n, out, {"kind": "asymmetrized", "seed": seed, "generator": GENERATOR_ID})


@lru_cache(maxsize=32)
def simplex_vectors(k: int) -> np.ndarray:
    """k unit vectors in R^{k-1} with <a_i, a_j> = -1/(k-1) for i != j.

    Built once per k from the square root of the simplex Gram matrix, so
    the pairwise inner products hold to machine precision.
    """
    if k < 2:
        raise ModelError("simplex needs k >= 2")
    gram = np.full((k, k), -1.0 / (k - 1))
    np.fill_diagonal(gram, 1.0)
    w, v = np.linalg.eigh(gram)
    # rank k-1: drop the null eigenvalue (the first after ascending sort)
    a = v[:, 1:] * np.sqrt(np.clip(w[1:], 0, None))
    return a


def resymmetrize_tensor_sample(x_target: float, k: int, seed: int) -> np.ndarray:
    """Turn one low-noise sample into k independent unit-noise samples.

    Draws ytilde = x + N(0, 1/k), then y_i = ytilde + sqrt(1-1/k) <a_i, u>
    with u ~ N(0, I_{k-1}) and a_i the simplex vectors.  The output is
    jointly distributed as k independent x + N(0,1) draws.

    This is the entrywise building block for converting a symmetric-noise
    tensor to the asymmetric model: apply it independently to each orbit of
    index permutations, with k the orbit size; the converse direction is
    averaging each orbit.  Only this one-dimensional step is implemented
    and validated.
    """
    a = simplex_vectors(k)
    rng = make_rng(seed, "resym", k)
    ytilde = x_target + rng.standard_normal() / math.sqrt(k)
    u = rng.standard_normal(k - 1)
    return ytilde + math.sqrt(1.0 - 1.0 / k) * (a @ u)


# -- tensor dump --------------------------------------------------------------


def write_tensor(path, obs: Observation) -> None:
    """Flat little-endian f64 dump with a 16-byte header and JSON sidecar."""
    header = TENSOR_MAGIC + struct.pack("<II", obs.p, obs.n)
    payload = np.ascontiguousarray(obs.entries, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)
    with open(f"{path}.json", "w", encoding="utf-8") as fh:
        json.dump(obs.provenance, fh, sort_keys=True, indent=2)
        fh.write("\n")


def read_tensor(path) -> Observation:
    with open(path, "rb") as fh:
        header = fh.read(16)
        if header[:8] != TENSOR_MAGIC:
            raise ModelError(f"bad magic in {path}")
        p, n = struct.unpack("<II", header[8:])
        entries = np.frombuffer(fh.read(), dtype="<f8").reshape((n,) * p).copy()
    try:
        with open(f"{path}.json", "r", encoding="utf-8") as fh:
            prov = json.load(fh)
    except FileNotFoundError:
        prov = {"kind": "unknown"}
    return Observation(p, n, entries, prov)

"""Dataset generation and round-trip persistence.

A dataset is n i.i.d. pairs (x_i, y_i) with x_i ~ q and
y_i = r0(x_i) + N(0, sigma^2 I_N).  Generation is a pure function of
(truth, n, seed): inputs are drawn first, then the noise block, from one
Philox stream, so a dataset is reproducible from its sidecar alone.

Persistence is CSV (x_1..x_M, y_1..y_N, 17 significant digits, exact float
round-trip) plus a JSON sidecar with n, seed, model id, sigma, and the RNG
note.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import SchemaError, ValidationError
from .models import TrueProcess
from . import seeds

__all__ = ["Dataset", "generate", "save_dataset", "load_dataset"]


@dataclass(frozen=True, eq=False)
class Dataset:
    """Fixed sample: inputs xs (n, M), responses ys (n, N), and provenance."""

    xs: np.ndarray
    ys: np.ndarray
    seed: int

    def __post_init__(self) -> None:
        if self.xs.ndim != 2 or self.ys.ndim != 2:
            raise ValidationError("xs and ys must be 2-d arrays")
        if self.xs.shape[0] != self.ys.shape[0]:
            raise ValidationError("xs and ys must have the same number of rows")
        if self.xs.shape[0] < 1:
            raise ValidationError("a dataset needs at least one observation")
        self.xs.setflags(write=False)
        self.ys.setflags(write=False)

    @property
    def n(self) -> int:
        return self.xs.shape[0]


def generate(truth: TrueProcess, n: int, seed: int) -> Dataset:
    """Draw a dataset of size n from the true process using one seed."""
    if n < 1:
        raise ValidationError("n must be >= 1")
    rng = seeds.generator(seed)
    xs = truth.q_sample(rng, n)
    noise = rng.standard_normal((n, truth.n_out)) * truth.sigma
    ys = truth.r0(xs) + noise
    return Dataset(xs=xs, ys=ys, seed=int(seed))


def _sidecar_path(path: Path) -> Path:
    return path.with_suffix(path.suffix + ".json")


def save_dataset(dataset: Dataset, path: str | Path, *, model_id: str, sigma: float) -> None:
    """Write the sample as CSV with a JSON sidecar next to it."""
    path = Path(path)
    m = dataset.xs.shape[1]
    n_out = dataset.ys.shape[1]
    header = [f"x_{j + 1}" for j in range(m)] + [f"y_{j + 1}" for j in range(n_out)]
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(dataset.n):
            row = [format(v, ".17g") for v in dataset.xs[i]] + [format(v, ".17g") for v in dataset.ys[i]]
            writer.writerow(row)
    sidecar = {
        "schema_version": 1,
        "n": dataset.n,
        "m_in": m,
        "n_out": n_out,
        "seed": dataset.seed,
        "model": model_id,
        "sigma": sigma,
        "rng": seeds.RNG_NOTE,
    }
    with _sidecar_path(path).open("w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_dataset(path: str | Path) -> tuple[Dataset, dict]:
    """Read a saved sample back; returns the dataset and its sidecar."""
    path = Path(path)
    try:
        with _sidecar_path(path).open() as fh:
            sidecar = json.load(fh)
    except FileNotFoundError as exc:
        raise SchemaError(f"missing sidecar for {path}") from exc
    for key in ("n", "m_in", "n_out", "seed"):
        if key not in sidecar:
            raise SchemaError(f"sidecar for {path} lacks {key!r}")
    m, n_out = int(sidecar["m_in"]), int(sidecar["n_out"])
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        expected = [f"x_{j + 1}" for j in range(m)] + [f"y_{j + 1}" for j in range(n_out)]
        if header != expected:
            raise SchemaError(f"{path} columns {header} do not match sidecar dimensions")
        rows = [[float(v) for v in row] for row in reader]
    arr = np.asarray(rows, dtype=np.float64)
    if arr.shape[0] != int(sidecar["n"]):
        raise SchemaError(f"{path} has {arr.shape[0]} rows, sidecar says {sidecar['n']}")
    return Dataset(xs=arr[:, :m].copy(), ys=arr[:, m:].copy(), seed=int(sidecar["seed"])), sidecar

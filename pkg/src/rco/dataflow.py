"""Data ingestion, sliding windows, and synthetic planted-permutation tasks.

The CSV contract: header ``timestamp,turbine_id,<attr1>,<attr2>,...`` with
ISO-8601 or epoch-seconds timestamps and one row per (timestamp, turbine).
A timestep with any missing cell (absent turbine row or blank/NaN value) is
dropped whole and counted.

Synthetic tasks plant a hidden permutation: a smooth advecting field gives
neighboring turbines (in canonical order) strongly correlated signals and
attributes a local dependency chain, then both axes are shuffled.  The
ground-truth shuffle is returned so oracle runs can invert it.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import ContractError, IngestionError, ShapeError


@dataclass
class SeriesTable:
    """A gap-free (time, turbine, attribute) panel with uniform sampling."""

    timestamps: np.ndarray  # (T,) epoch seconds, strictly increasing
    values: np.ndarray  # (T, G, A) float64
    attributes: list[str]
    turbine_ids: list[str]
    dropped_steps: int = 0

    @property
    def n_steps(self) -> int:
        return self.values.shape[0]

    @property
    def n_turbines(self) -> int:
        return self.values.shape[1]

    @property
    def n_attributes(self) -> int:
        return self.values.shape[2]


def _parse_timestamp(cell: str, row_num: int) -> float:
    cell = cell.strip()
    try:
        return float(cell)
    except ValueError:
        pass
    try:
        dt = datetime.fromisoformat(cell.replace("Z", "+00:00"))
    except ValueError:
        raise IngestionError(f"row {row_num}: unparseable timestamp {cell!r}") from None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def ingest_csv(path, attributes: list[str] | None = None) -> SeriesTable:
    """Load and pivot a long-format CSV into a SeriesTable.

    ``attributes`` optionally pins the expected attribute columns; any
    mismatch with the header is an error.  Rows sharing a (timestamp,
    turbine) key are rejected, and timesteps with gaps are dropped.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError("row 1: empty file") from None
        if len(header) < 3 or header[0].strip() != "timestamp" or header[1].strip() != "turbine_id":
            raise IngestionError(
                "row 1: header must start with 'timestamp,turbine_id' followed by attributes"
            )
        file_attrs = [h.strip() for h in header[2:]]
        if attributes is not None:
            unknown = [a for a in file_attrs if a not in attributes]
            if unknown:
                raise IngestionError(f"row 1: unknown column {unknown[0]!r}")
            missing = [a for a in attributes if a not in file_attrs]
            if missing:
                raise IngestionError(f"row 1: missing column {missing[0]!r}")

        cells: dict[tuple[float, str], list[float]] = {}
        turbines: list[str] = []
        n_attrs = len(file_attrs)
        for row_num, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 2 + n_attrs:
                raise IngestionError(
                    f"row {row_num}: expected {2 + n_attrs} fields, got {len(row)}"
                )
            ts = _parse_timestamp(row[0], row_num)
            turbine = row[1].strip()
            key = (ts, turbine)
            if key in cells:
                raise IngestionError(f"row {row_num}: duplicate (timestamp, turbine) {key}")
            if turbine not in turbines:
                turbines.append(turbine)
            vals = []
            for name, cell in zip(file_attrs, row[2:]):
                cell = cell.strip()
                if not cell or cell.lower() == "nan":
                    vals.append(math.nan)
                    continue
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise IngestionError(
                        f"row {row_num}: unparseable value {cell!r} in column {name!r}"
                    ) from None
            cells[key] = vals

    times = sorted({ts for ts, _ in cells})
    time_pos = {ts: i for i, ts in enumerate(times)}
    turbine_pos = {t: i for i, t in enumerate(turbines)}
    grid = np.full((len(times), len(turbines), n_attrs), np.nan)
    for (ts, turbine), vals in cells.items():
        grid[time_pos[ts], turbine_pos[turbine], :] = vals

    keep = np.isfinite(grid).all(axis=(1, 2))
    dropped = int((~keep).sum())
    return SeriesTable(
        timestamps=np.asarray(times, dtype=np.float64)[keep],
        values=np.ascontiguousarray(grid[keep]),
        attributes=file_attrs,
        turbine_ids=turbines,
        dropped_steps=dropped,
    )


def write_csv(table: SeriesTable, path) -> None:
    """Inverse of ingest_csv (long format, epoch-second timestamps)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp", "turbine_id"] + list(table.attributes))
        for ti, ts in enumerate(table.timestamps):
            for gi, turbine in enumerate(table.turbine_ids):
                writer.writerow(
                    [repr(float(ts)), turbine] + [repr(float(v)) for v in table.values[ti, gi]]
                )


# ---------------------------------------------------------------------------
# Sliding windows
# ---------------------------------------------------------------------------


@dataclass
class WindowedDataset:
    """Sliding windows (stride 1) with a chronological train/val/test split.

    ``x`` is (n, t, G, A) and ``y`` is (n, s); normalization statistics are
    fit only on the timesteps touched by training windows.
    """

    x: np.ndarray
    y: np.ndarray
    t: int
    s: int
    target_turbine: int
    target_attribute: int
    mean: np.ndarray  # (A,)
    std: np.ndarray  # (A,)
    n_train: int
    n_val: int
    n_test: int
    normalized: bool

    _SPLITS = ("train", "val", "test")

    def split(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        if name not in self._SPLITS:
            raise ContractError(f"unknown split {name!r}")
        bounds = {
            "train": (0, self.n_train),
            "val": (self.n_train, self.n_train + self.n_val),
            "test": (self.n_train + self.n_val, len(self.x)),
        }
        lo, hi = bounds[name]
        return self.x[lo:hi], self.y[lo:hi]

    @property
    def grid(self) -> tuple[int, int]:
        return self.x.shape[2], self.x.shape[3]


def make_windows(
    table: SeriesTable,
    t: int,
    s: int,
    target_turbine: int,
    target_attribute: int,
    splits: tuple[float, float, float] = (0.7, 0.1, 0.2),
    normalize: bool = True,
) -> WindowedDataset:
    """Build ([X^1..X^t], label in R^s) samples with stride 1.

    The label is the target attribute of the target turbine over the s
    steps following each window.  Window count is T - t - s + 1.
    """
    values = table.values
    T, G, A = values.shape
    if t < 1 or s < 1:
        raise ContractError(f"t and s must be >= 1, got t={t} s={s}")
    if T < t + s:
        raise ContractError(f"series too short: T={T} < t+s={t + s}")
    if not 0 <= target_turbine < G:
        raise ShapeError(f"target turbine {target_turbine} out of range 0..{G - 1}")
    if not 0 <= target_attribute < A:
        raise ShapeError(f"target attribute {target_attribute} out of range 0..{A - 1}")
    if not math.isclose(sum(splits), 1.0, abs_tol=1e-9):
        raise ContractError(f"splits must sum to 1, got {splits}")

    n_win = T - t - s + 1
    starts = np.arange(n_win)
    x = np.stack([values[i : i + t] for i in starts])
    y = np.stack([values[i + t : i + t + s, target_turbine, target_attribute] for i in starts])

    n_train = int(splits[0] * n_win)
    n_val = int(splits[1] * n_win)
    n_test = n_win - n_train - n_val

    # Statistics come only from timesteps some training window touches
    # (inputs and labels), i.e. the first n_train-1 + t + s steps.
    stat_hi = (n_train - 1) + t + s if n_train > 0 else t + s
    train_span = values[:stat_hi]
    mean = train_span.mean(axis=(0, 1))
    std = np.maximum(train_span.std(axis=(0, 1)), 1e-12)

    if normalize:
        x = (x - mean) / std
        y = (y - mean[target_attribute]) / std[target_attribute]

    return WindowedDataset(
        x=np.ascontiguousarray(x),
        y=np.ascontiguousarray(y),
        t=t,
        s=s,
        target_turbine=target_turbine,
        target_attribute=target_attribute,
        mean=mean,
        std=std,
        n_train=n_train,
        n_val=n_val,
        n_test=n_test,
        normalized=normalize,
    )


# ---------------------------------------------------------------------------
# Synthetic planted-permutation tasks
# ---------------------------------------------------------------------------


@dataclass
class SyntheticTaskSpec:
    """Recipe for a shuffled advection task with known ground truth.

    ``perm_turbine``/``perm_attribute`` map shuffled position i to canonical
    position perm[i]; None draws random permutations from the seed.  The
    canonical prediction target is attribute 0 of the middle turbine.
    """

    turbines: int = 6
    attributes: int = 4
    n_steps: int = 240
    perm_turbine: tuple[int, ...] | None = None
    perm_attribute: tuple[int, ...] | None = None
    corr_length: float = 4.0
    noise: float = 0.1
    seed: int = 0


def _check_perm(perm, n: int, name: str) -> np.ndarray:
    perm = np.asarray(perm, dtype=np.int64)
    if sorted(perm.tolist()) != list(range(n)):
        raise ContractError(f"{name} is not a permutation of 0..{n - 1}: {perm.tolist()}")
    return perm


def synthesize(spec: SyntheticTaskSpec) -> tuple[SeriesTable, dict]:
    """Generate a shuffled SeriesTable plus its ground-truth permutations.

    Canonical structure: the base signal advects one turbine slot per step
    (turbine g at time tau sees what turbine g-1 saw at tau-1), giving
    correlations that decay with canonical distance; attribute 0 carries
    the signal, each following informative attribute is a lagged smoothing
    of the previous one, and the remainder are independent nuisance fields.
    """
    G, A, T = spec.turbines, spec.attributes, spec.n_steps
    if G < 2 or A < 2:
        raise ContractError(f"need at least 2 turbines and 2 attributes, got {G}x{A}")
    seq = np.random.SeedSequence(spec.seed)
    rng_field, rng_perm = [np.random.default_rng(s) for s in seq.spawn(2)]

    def smooth_stream(rng, length: int) -> np.ndarray:
        # AR(1) with autocorrelation exp(-d / corr_length) at lag d, plus a
        # weak slow sinusoid.  The AR part carries most of the variance, so
        # the signal moves fast enough that a cell's own history predicts
        # its future poorly compared to reading the advected neighbor.
        rho = float(np.exp(-1.0 / spec.corr_length))
        eps = rng.normal(0.0, np.sqrt(1.0 - rho * rho), size=length)
        ar = np.empty(length)
        ar[0] = rng.normal()
        for i in range(1, length):
            ar[i] = rho * ar[i - 1] + eps[i]
        phase = rng.uniform(0, 2 * np.pi)
        slow = 0.3 * np.sin(2 * np.pi * np.arange(length) / (12.0 * spec.corr_length) + phase)
        return ar + slow

    # Exact advection: turbine g at time tau carries u(tau - g), so the
    # neighbor one slot upstream holds next step's value for this slot.
    u = smooth_stream(rng_field, T + G)
    z = np.empty((T, G))
    for g in range(G):
        z[:, g] = u[G - g : G - g + T]
    z += 0.05 * rng_field.normal(0, 1, size=z.shape)  # idiosyncratic per-cell jitter

    values = np.empty((T, G, A))
    values[:, :, 0] = z
    n_chain = min(A, 3)
    for a in range(1, n_chain):
        prev = values[:, :, a - 1]
        lagged = np.vstack([prev[:1], prev[:-1]])
        values[:, :, a] = 0.5 * prev + 0.5 * lagged + 0.05 * rng_field.normal(0, 1, size=z.shape)
    for a in range(n_chain, A):
        nuis = smooth_stream(rng_field, T + G)
        for g in range(G):
            values[:, g, a] = nuis[G - g : G - g + T]
    values += spec.noise * rng_field.normal(0, 1, size=values.shape)

    if spec.perm_turbine is None:
        perm_t = rng_perm.permutation(G)
    else:
        perm_t = _check_perm(spec.perm_turbine, G, "perm_turbine")
    if spec.perm_attribute is None:
        perm_a = rng_perm.permutation(A)
    else:
        perm_a = _check_perm(spec.perm_attribute, A, "perm_attribute")

    shuffled = np.take(np.take(values, perm_t, axis=1), perm_a, axis=2)

    target_turbine = G // 2
    inv_t = np.argsort(perm_t)
    inv_a = np.argsort(perm_a)
    truth = {
        "perm_turbine": perm_t.tolist(),
        "perm_attribute": perm_a.tolist(),
        "inverse_perm_turbine": inv_t.tolist(),
        "inverse_perm_attribute": inv_a.tolist(),
        "target_turbine_canonical": target_turbine,
        "target_attribute_canonical": 0,
        "target_turbine": int(inv_t[target_turbine]),
        "target_attribute": int(inv_a[0]),
    }
    table = SeriesTable(
        timestamps=np.arange(T, dtype=np.float64) * 600.0,
        values=np.ascontiguousarray(shuffled),
        attributes=[f"attr{j}" for j in range(A)],
        turbine_ids=[f"WT{i:02d}" for i in range(G)],
    )
    return table, truth


def write_truth_json(truth: dict, path) -> None:
    Path(path).write_text(json.dumps(truth, indent=2) + "\n")

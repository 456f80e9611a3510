"""Longitudinal panel data: schema, CSV ingest/emit, counting-process rows.

A panel holds, for each of ``n`` subjects, ``T`` time-ordered pairs
``(X_t, A_t)`` followed by a single outcome.  Storage is columnar (numpy
arrays) and read-only; :attr:`PanelDataset.subjects` gives the per-subject
record view.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence, Union

import numpy as np
import pandas as pd

from .errors import PanelFormatError


class OutcomeKind(str, enum.Enum):
    CONTINUOUS = "continuous"
    COUNT = "count"
    BINARY = "binary"
    SURVIVAL = "survival"


@dataclass(frozen=True)
class Continuous:
    y: float


@dataclass(frozen=True)
class Count:
    y: int

    def __post_init__(self):
        if self.y < 0 or int(self.y) != self.y:
            raise ValueError(f"count outcome must be a nonnegative integer, got {self.y}")


@dataclass(frozen=True)
class Binary:
    y: int

    def __post_init__(self):
        if self.y not in (0, 1):
            raise ValueError(f"binary outcome must be 0 or 1, got {self.y}")


@dataclass(frozen=True)
class Survival:
    time: float
    event: int

    def __post_init__(self):
        if not self.time > 0:
            raise ValueError(f"survival time must be positive, got {self.time}")
        if self.event not in (0, 1):
            raise ValueError(f"event indicator must be 0 or 1, got {self.event}")


Outcome = Union[Continuous, Count, Binary, Survival]

_OUTCOME_KIND = {
    Continuous: OutcomeKind.CONTINUOUS,
    Count: OutcomeKind.COUNT,
    Binary: OutcomeKind.BINARY,
    Survival: OutcomeKind.SURVIVAL,
}


@dataclass(frozen=True)
class SubjectRecord:
    id: str
    covariates: tuple  # T arrays, X_1..X_T
    treatments: np.ndarray
    outcome: Outcome
    baseline: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _readonly(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PanelDataset:
    """Equal-length panel of ``n`` subjects observed at ``T`` time points.

    Parameters
    ----------
    ids : sequence of str
        Unique subject identifiers.
    covariates : sequence of arrays
        ``T`` arrays, the ``t``-th of shape ``(n, d_t)``.  ``d_t`` may be 0
        and may differ across ``t``.
    treatments : array, shape (n, T)
    outcome_kind : OutcomeKind
    y : array, shape (n,)
        Outcome value, or the observed time for survival outcomes.
    event : array, shape (n,), optional
        Event indicator (survival only); 0 means right-censored.
    time_grid : array, shape (T,), optional
        Times at which ``(X_t, A_t)`` take effect.  Defaults to ``1..T``.
    baseline : array, shape (n, b), optional
        Time-invariant pre-treatment covariates.
    """

    ids: np.ndarray
    covariates: tuple
    treatments: np.ndarray
    outcome_kind: OutcomeKind
    y: np.ndarray
    event: np.ndarray | None = None
    time_grid: np.ndarray | None = None
    baseline: np.ndarray | None = None
    covariate_names: tuple | None = None
    baseline_names: tuple | None = None
    treatment_name: str = "a"

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        kind = OutcomeKind(self.outcome_kind)
        set_("outcome_kind", kind)
        ids = np.asarray([str(i) for i in self.ids], dtype=object)
        ids.setflags(write=False)
        set_("ids", ids)
        n = len(ids)
        if len(set(ids)) != n:
            seen, dup = set(), None
            for i in ids:
                if i in seen:
                    dup = i
                    break
                seen.add(i)
            raise PanelFormatError(f"duplicate subject id {dup!r}")

        A = _readonly(self.treatments)
        if A.ndim != 2 or A.shape[0] != n:
            raise PanelFormatError(f"treatments must have shape (n, T) = ({n}, T), got {A.shape}")
        if not np.all(np.isfinite(A)):
            raise PanelFormatError("treatments must be finite")
        set_("treatments", A)
        T = A.shape[1]
        if T < 1:
            raise PanelFormatError("panel needs at least one time point")

        if len(self.covariates) != T:
            raise PanelFormatError(f"expected {T} covariate blocks, got {len(self.covariates)}")
        covs = []
        for t, X in enumerate(self.covariates):
            X = np.asarray(X, dtype=float)
            if X.ndim == 1:
                X = X.reshape(n, -1) if X.size else np.zeros((n, 0))
            if X.shape[0] != n:
                raise PanelFormatError(f"covariates at time {t + 1} have {X.shape[0]} rows, expected {n}")
            if not np.all(np.isfinite(X)):
                raise PanelFormatError(f"covariates at time {t + 1} contain missing or non-finite values")
            covs.append(_readonly(X))
        set_("covariates", tuple(covs))

        if self.covariate_names is None:
            names = tuple(tuple(f"x{j + 1}" if X.shape[1] > 1 else "x" for j in range(X.shape[1])) for X in covs)
        else:
            names = tuple(tuple(str(c) for c in nm) for nm in self.covariate_names)
            if [len(nm) for nm in names] != [X.shape[1] for X in covs]:
                raise PanelFormatError("covariate_names do not match covariate dimensions")
        set_("covariate_names", names)

        B = np.zeros((n, 0)) if self.baseline is None else np.asarray(self.baseline, dtype=float)
        if B.ndim == 1:
            B = B.reshape(n, -1)
        if B.shape[0] != n or not np.all(np.isfinite(B)):
            raise PanelFormatError("baseline covariates must be finite with one row per subject")
        set_("baseline", _readonly(B))
        if self.baseline_names is None:
            set_("baseline_names", tuple(f"b{j + 1}" for j in range(B.shape[1])))
        else:
            bn = tuple(str(c) for c in self.baseline_names)
            if len(bn) != B.shape[1]:
                raise PanelFormatError("baseline_names do not match baseline dimension")
            set_("baseline_names", bn)

        grid = np.arange(1, T + 1, dtype=float) if self.time_grid is None else np.asarray(self.time_grid, float)
        if grid.shape != (T,) or np.any(np.diff(grid) <= 0):
            raise PanelFormatError("time_grid must hold T strictly increasing values")
        set_("time_grid", _readonly(grid))

        y = _readonly(self.y)
        if y.shape != (n,) or not np.all(np.isfinite(y)):
            raise PanelFormatError("outcome must be a finite vector of length n")
        set_("y", y)
        if kind is OutcomeKind.SURVIVAL:
            if self.event is None:
                raise PanelFormatError("survival outcome needs an event indicator")
            ev = _readonly(self.event)
            if ev.shape != (n,) or not np.all(np.isin(ev, (0.0, 1.0))):
                raise PanelFormatError("event indicator must be 0/1")
            if np.any(y <= 0):
                raise PanelFormatError("survival times must be positive")
            set_("event", ev)
        else:
            if self.event is not None:
                raise PanelFormatError("event indicator only applies to survival outcomes")
            if kind is OutcomeKind.BINARY and not np.all(np.isin(y, (0.0, 1.0))):
                raise PanelFormatError("binary outcome must be 0/1")
            if kind is OutcomeKind.COUNT and (np.any(y < 0) or np.any(y != np.round(y))):
                raise PanelFormatError("count outcome must hold nonnegative integers")

    # -- shape --------------------------------------------------------------
    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def T(self) -> int:
        return self.treatments.shape[1]

    @property
    def covariate_dims(self) -> list[int]:
        return [X.shape[1] for X in self.covariates]

    # -- views --------------------------------------------------------------
    def outcome(self, i: int) -> Outcome:
        kind = self.outcome_kind
        if kind is OutcomeKind.CONTINUOUS:
            return Continuous(float(self.y[i]))
        if kind is OutcomeKind.COUNT:
            return Count(int(self.y[i]))
        if kind is OutcomeKind.BINARY:
            return Binary(int(self.y[i]))
        return Survival(float(self.y[i]), int(self.event[i]))

    @property
    def subjects(self) -> list[SubjectRecord]:
        return list(self.iter_subjects())

    def iter_subjects(self) -> Iterator[SubjectRecord]:
        for i in range(self.n):
            yield SubjectRecord(
                id=self.ids[i],
                covariates=tuple(X[i].copy() for X in self.covariates),
                treatments=self.treatments[i].copy(),
                outcome=self.outcome(i),
                baseline=self.baseline[i].copy(),
            )

    @classmethod
    def from_subjects(cls, subjects: Sequence[SubjectRecord], **kwargs) -> "PanelDataset":
        if not subjects:
            raise PanelFormatError("no subjects")
        kinds = {_OUTCOME_KIND[type(s.outcome)] for s in subjects}
        if len(kinds) != 1:
            raise PanelFormatError("subjects carry outcomes of different kinds")
        kind = kinds.pop()
        T = len(subjects[0].treatments)
        for s in subjects:
            if len(s.treatments) != T or len(s.covariates) != T:
                raise PanelFormatError(f"subject {s.id!r} does not have {T} time points")
        covs = []
        for t in range(T):
            dims = {np.size(s.covariates[t]) for s in subjects}
            if len(dims) != 1:
                raise PanelFormatError(f"covariate dimension differs across subjects at time {t + 1}")
            covs.append(np.array([np.ravel(s.covariates[t]) for s in subjects], dtype=float).reshape(len(subjects), -1))
        if kind is OutcomeKind.SURVIVAL:
            y = [s.outcome.time for s in subjects]
            event = [s.outcome.event for s in subjects]
        else:
            y = [s.outcome.y for s in subjects]
            event = None
        return cls(
            ids=[s.id for s in subjects],
            covariates=covs,
            treatments=[s.treatments for s in subjects],
            outcome_kind=kind,
            y=y,
            event=event,
            baseline=np.array([np.ravel(s.baseline) for s in subjects], dtype=float).reshape(len(subjects), -1),
            **kwargs,
        )

    def take(self, idx) -> "PanelDataset":
        """Subset (or resample) subjects by position.

        Repeated positions get distinct ids (``"<id>#<k>"``) so the result
        remains a valid panel; bootstrap resampling relies on this.
        """
        idx = np.asarray(idx, dtype=int)
        counts: dict[int, int] = {}
        ids = []
        for i in idx:
            k = counts.get(i, 0)
            counts[i] = k + 1
            ids.append(self.ids[i] if k == 0 else f"{self.ids[i]}#{k}")
        return PanelDataset(
            ids=ids,
            covariates=[X[idx] for X in self.covariates],
            treatments=self.treatments[idx],
            outcome_kind=self.outcome_kind,
            y=self.y[idx],
            event=None if self.event is None else self.event[idx],
            time_grid=self.time_grid,
            baseline=self.baseline[idx],
            covariate_names=self.covariate_names,
            baseline_names=self.baseline_names,
            treatment_name=self.treatment_name,
        )

    def equals(self, other: "PanelDataset") -> bool:
        """Field-by-field equality, exact on every numeric value."""
        if not isinstance(other, PanelDataset):
            return False
        same = (
            self.outcome_kind == other.outcome_kind
            and list(self.ids) == list(other.ids)
            and self.covariate_names == other.covariate_names
            and self.baseline_names == other.baseline_names
            and self.covariate_dims == other.covariate_dims
        )
        if not same:
            return False
        arrays = [(self.treatments, other.treatments), (self.y, other.y), (self.time_grid, other.time_grid),
                  (self.baseline, other.baseline)]
        arrays += list(zip(self.covariates, other.covariates))
        if (self.event is None) != (other.event is None):
            return False
        if self.event is not None:
            arrays.append((self.event, other.event))
        return all(a.shape == b.shape and np.array_equal(a, b) for a, b in arrays)


# ---------------------------------------------------------------------------
# CSV ingest / emit
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PanelSchema:
    """Column mapping for the long-format CSV (one row per subject-time).

    The time column holds the grid time at which ``(X_t, A_t)`` take effect;
    rows are ordered by it.  Outcome columns are repeated on every row of a
    subject, or supplied through ``outcome_path`` (one row per subject).
    ``covariates_by_time`` maps a time position (1-based) to the covariate
    columns in force at that time when dimensions vary across time.
    """

    outcome_kind: OutcomeKind
    id: str = "id"
    time: str = "t"
    covariates: tuple = ("x",)
    treatment: str = "a"
    outcome: str = "y"
    survival_time: str = "time"
    event: str = "event"
    baseline: tuple = ()
    covariates_by_time: dict | None = None
    outcome_path: str | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "PanelSchema":
        d = dict(d)
        d["outcome_kind"] = OutcomeKind(d["outcome_kind"])
        for key in ("covariates", "baseline"):
            if key in d and d[key] is not None:
                d[key] = tuple(d[key])
        if d.get("covariates_by_time"):
            d["covariates_by_time"] = {int(k): tuple(v) for k, v in d["covariates_by_time"].items()}
        return cls(**d)

    def to_dict(self) -> dict:
        out = {
            "outcome_kind": self.outcome_kind.value,
            "id": self.id,
            "time": self.time,
            "covariates": list(self.covariates),
            "treatment": self.treatment,
            "baseline": list(self.baseline),
        }
        if self.outcome_kind is OutcomeKind.SURVIVAL:
            out.update(survival_time=self.survival_time, event=self.event)
        else:
            out["outcome"] = self.outcome
        if self.covariates_by_time:
            out["covariates_by_time"] = {int(k): list(v) for k, v in self.covariates_by_time.items()}
        if self.outcome_path:
            out["outcome_path"] = self.outcome_path
        return out

    @property
    def outcome_columns(self) -> tuple:
        if self.outcome_kind is OutcomeKind.SURVIVAL:
            return (self.survival_time, self.event)
        return (self.outcome,)


def _numeric(df: pd.DataFrame, cols, what: str) -> np.ndarray:
    """Convert string cells to float, reporting the file line of the first bad cell."""
    out = np.empty((len(df), len(cols)))
    for j, c in enumerate(cols):
        raw = df[c]
        vals = pd.to_numeric(raw, errors="coerce")
        bad = vals.isna().to_numpy() | ~np.isfinite(vals.to_numpy(dtype=float, na_value=np.nan))
        if bad.any():
            pos = int(np.flatnonzero(bad)[0])
            line = int(df["_line"].iloc[pos])
            cell = raw.iloc[pos]
            problem = "missing value" if str(cell).strip() == "" else f"non-numeric value {cell!r}"
            raise PanelFormatError(f"line {line}: {problem} in {what} column {c!r}")
        # pandas' fast parser can be off by an ulp; numpy's conversion is exact
        out[:, j] = raw.to_numpy(dtype=str).astype(float)
    return out


def _read_csv(path) -> pd.DataFrame:
    df = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    df.columns = [c.strip() for c in df.columns]
    df["_line"] = np.arange(2, len(df) + 2)
    return df


def load_panel_csv(path, schema: PanelSchema | dict) -> PanelDataset:
    """Read a long-format panel CSV into a validated :class:`PanelDataset`.

    Errors (missing columns, missing or non-numeric cells, duplicate
    (subject, time) pairs, ragged panels, outcome values that change within
    a subject) raise :class:`PanelFormatError` naming the offending line or
    subject.
    """
    if isinstance(schema, dict):
        schema = PanelSchema.from_dict(schema)
    path = Path(path)
    df = _read_csv(path)

    cov_cols = list(schema.covariates)
    if schema.covariates_by_time:
        cov_cols = sorted({c for v in schema.covariates_by_time.values() for c in v}, key=str)
    needed = [schema.id, schema.time, schema.treatment, *cov_cols, *schema.baseline]
    if schema.outcome_path is None:
        needed += list(schema.outcome_columns)
    missing = [c for c in needed if c not in df.columns]
    if missing:
        raise PanelFormatError(f"{path.name}: missing columns {missing}")

    ids = df[schema.id].str.strip()
    if (ids == "").any():
        line = int(df["_line"][(ids == "").to_numpy()].iloc[0])
        raise PanelFormatError(f"line {line}: missing subject id")
    times = _numeric(df, [schema.time], "time")[:, 0]
    df = df.assign(_id=ids.to_numpy(), _t=times)

    dup = df.duplicated(["_id", "_t"], keep="first")
    if dup.any():
        row = df[dup.to_numpy()].iloc[0]
        raise PanelFormatError(f"line {row['_line']}: duplicate (subject, time) pair ({row['_id']!r}, {row['_t']:g})")

    grid = np.unique(times)
    order_ids = list(dict.fromkeys(df["_id"]))
    per_subject = df.groupby("_id", sort=False)["_t"].apply(lambda s: set(s.to_numpy()))
    full = set(grid)
    for sid in order_ids:
        got = per_subject[sid]
        if got != full:
            lacking = sorted(full - got)
            raise PanelFormatError(f"ragged panel: subject {sid!r} is missing time(s) {[float(v) for v in lacking]}")

    df = df.sort_values(["_id", "_t"], kind="stable")
    df = df.set_index("_id").loc[order_ids].reset_index()
    n, T = len(order_ids), len(grid)
    first = df.groupby("_id", sort=False).head(1)

    A = _numeric(df, [schema.treatment], "treatment")[:, 0].reshape(n, T)

    covs, names = [], []
    for t in range(T):
        cols = list(schema.covariates)
        if schema.covariates_by_time:
            cols = list(schema.covariates_by_time.get(t + 1, ()))
        rows_t = df.iloc[t::T]
        covs.append(_numeric(rows_t, cols, "covariate") if cols else np.zeros((n, 0)))
        names.append(tuple(cols))

    B = _numeric(df, list(schema.baseline), "baseline") if schema.baseline else np.zeros((len(df), 0))
    for j, c in enumerate(schema.baseline):
        _check_constant(df, B[:, j].reshape(n, T), c, order_ids)
    B = B[::T] if schema.baseline else np.zeros((n, 0))

    if schema.outcome_path is not None:
        odf = _read_csv(Path(schema.outcome_path) if Path(schema.outcome_path).is_absolute()
                        else path.parent / schema.outcome_path)
        miss = [c for c in (schema.id, *schema.outcome_columns) if c not in odf.columns]
        if miss:
            raise PanelFormatError(f"outcome file: missing columns {miss}")
        odf["_id"] = odf[schema.id].str.strip()
        if odf["_id"].duplicated().any():
            row = odf[odf["_id"].duplicated().to_numpy()].iloc[0]
            raise PanelFormatError(f"outcome file line {row['_line']}: duplicate subject {row['_id']!r}")
        absent = [s for s in order_ids if s not in set(odf["_id"])]
        if absent:
            raise PanelFormatError(f"outcome file: no outcome for subject {absent[0]!r}")
        odf = odf.set_index("_id").loc[order_ids].reset_index()
        O = _numeric(odf, list(schema.outcome_columns), "outcome")
    else:
        O_all = _numeric(df, list(schema.outcome_columns), "outcome")
        for j, c in enumerate(schema.outcome_columns):
            _check_constant(df, O_all[:, j].reshape(n, T), c, order_ids)
        O = O_all[::T]

    kind = schema.outcome_kind
    event = O[:, 1] if kind is OutcomeKind.SURVIVAL else None
    return PanelDataset(
        ids=order_ids,
        covariates=covs,
        treatments=A,
        outcome_kind=kind,
        y=O[:, 0],
        event=event,
        time_grid=grid,
        baseline=B,
        covariate_names=names,
        baseline_names=tuple(schema.baseline),
        treatment_name=schema.treatment,
    )


def _check_constant(df, values, col, order_ids):
    varies = np.any(values != values[:, :1], axis=1)
    if varies.any():
        raise PanelFormatError(f"column {col!r} changes within subject {order_ids[int(np.flatnonzero(varies)[0])]!r}")


def panel_schema(panel: PanelDataset) -> PanelSchema:
    """Schema that reads back the CSV written by :func:`write_panel_csv`."""
    union = list(dict.fromkeys(c for nm in panel.covariate_names for c in nm))
    by_time = None
    if any(list(nm) != union for nm in panel.covariate_names):
        by_time = {t + 1: tuple(nm) for t, nm in enumerate(panel.covariate_names)}
    return PanelSchema(
        outcome_kind=panel.outcome_kind,
        covariates=tuple(union),
        treatment=panel.treatment_name,
        baseline=tuple(panel.baseline_names),
        covariates_by_time=by_time,
    )


def write_panel_csv(panel: PanelDataset, path) -> PanelSchema:
    """Write ``panel`` in long format; returns the schema needed to reload it."""
    schema = panel_schema(panel)
    n, T = panel.n, panel.T
    cols: dict[str, object] = {
        schema.id: np.repeat(panel.ids, T),
        schema.time: np.tile(panel.time_grid, n),
    }
    for c in schema.covariates:
        col = np.full((n, T), np.nan)
        for t, nm in enumerate(panel.covariate_names):
            if c in nm:
                col[:, t] = panel.covariates[t][:, nm.index(c)]
        cols[c] = col.ravel()
    cols[schema.treatment] = panel.treatments.ravel()
    for j, c in enumerate(panel.baseline_names):
        cols[c] = np.repeat(panel.baseline[:, j], T)
    if panel.outcome_kind is OutcomeKind.SURVIVAL:
        cols[schema.survival_time] = np.repeat(panel.y, T)
        cols[schema.event] = np.repeat(panel.event, T).astype(int)
    else:
        y = panel.y if panel.outcome_kind is OutcomeKind.CONTINUOUS else panel.y.astype(int)
        cols[schema.outcome] = np.repeat(y, T)
    pd.DataFrame(cols).to_csv(path, index=False, float_format="%.17g", na_rep="")
    return schema


# ---------------------------------------------------------------------------
# Counting-process representation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CountingProcessRow:
    subject_id: str
    tstart: float
    tstop: float
    event: int
    covariates: np.ndarray


@dataclass(frozen=True, eq=False)
class CountingProcessData:
    """Columnar (tstart, tstop] rows; the storage behind a list of rows.

    ``period`` records which time point (0-based) each row belongs to.
    """

    subject: np.ndarray
    tstart: np.ndarray
    tstop: np.ndarray
    event: np.ndarray
    Z: np.ndarray
    column_names: tuple = ()
    period: np.ndarray | None = None

    def __post_init__(self):
        Z = np.asarray(self.Z, dtype=float)
        if Z.ndim == 1:
            Z = Z.reshape(-1, 1)
        object.__setattr__(self, "Z", Z)
        for k in ("tstart", "tstop", "event"):
            object.__setattr__(self, k, np.asarray(getattr(self, k), dtype=float))
        object.__setattr__(self, "subject", np.asarray(self.subject, dtype=object))
        if not self.column_names:
            object.__setattr__(self, "column_names", tuple(f"z{j + 1}" for j in range(Z.shape[1])))
        m = len(self.tstart)
        if not (len(self.tstop) == len(self.event) == Z.shape[0] == len(self.subject) == m):
            raise ValueError("counting-process columns have inconsistent lengths")
        if np.any(self.tstart >= self.tstop):
            raise ValueError("every row needs tstart < tstop")
        if not np.all(np.isfinite(Z)):
            raise ValueError("covariates must be finite")

    def __len__(self):
        return len(self.tstart)

    def rows(self) -> list[CountingProcessRow]:
        return [
            CountingProcessRow(str(s), float(a), float(b), int(e), z.copy())
            for s, a, b, e, z in zip(self.subject, self.tstart, self.tstop, self.event, self.Z)
        ]

    @classmethod
    def from_rows(cls, rows: Sequence[CountingProcessRow], column_names=()) -> "CountingProcessData":
        if not rows:
            raise ValueError("no rows")
        return cls(
            subject=[r.subject_id for r in rows],
            tstart=[r.tstart for r in rows],
            tstop=[r.tstop for r in rows],
            event=[r.event for r in rows],
            Z=np.array([np.ravel(r.covariates) for r in rows], dtype=float),
            column_names=tuple(column_names),
        )

    def with_columns(self, Z, column_names) -> "CountingProcessData":
        return CountingProcessData(self.subject, self.tstart, self.tstop, self.event, Z, tuple(column_names), self.period)


def counting_process_index(panel: PanelDataset, time_grid=None):
    """Interval layout for survival panels.

    Returns ``(subject_pos, period, tstart, tstop, event)`` arrays.  Period
    ``t`` covers ``(g_t, g_{t+1}]`` except the first, which starts at 0, and
    the last, which is open-ended; each subject's rows are cut at their
    observed time.
    """
    if panel.outcome_kind is not OutcomeKind.SURVIVAL:
        raise ValueError("counting-process rows need a survival outcome")
    grid = panel.time_grid if time_grid is None else np.asarray(time_grid, dtype=float)
    if grid.shape != (panel.T,):
        raise ValueError(f"time grid needs {panel.T} entries, got {grid.shape}")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("time grid must be strictly increasing")
    if grid[0] < 0:
        raise ValueError("time grid must start at or after 0")
    starts = np.concatenate([[0.0], grid[1:]])
    stops = np.concatenate([grid[1:], [np.inf]])
    time = panel.y
    # period t is entered when the observed time exceeds its start
    n_rows = 1 + np.sum(time[:, None] > grid[None, 1:], axis=1)
    subj = np.repeat(np.arange(panel.n), n_rows)
    period = np.concatenate([np.arange(k) for k in n_rows])
    tstart = starts[period]
    tstop = np.minimum(stops[period], time[subj])
    last = np.cumsum(n_rows) - 1
    event = np.zeros(len(subj))
    event[last] = panel.event
    return subj, period, tstart, tstop, event


def to_counting_process(panel: PanelDataset, time_grid=None, *, as_rows: bool = True):
    """Split each survival subject into ``(tstart, tstop]`` rows.

    Row ``t`` carries ``(X_t, A_t)`` (and baseline covariates) for the
    interval in which they are in force.  Censoring exactly on a grid point
    closes the interval there; survival at or before the second grid point
    yields a single truncated row.

    Returns a list of :class:`CountingProcessRow` (default) or the columnar
    :class:`CountingProcessData` with ``as_rows=False``.
    """
    subj, period, tstart, tstop, event = counting_process_index(panel, time_grid)
    blocks, names = [], []
    dims = panel.covariate_dims
    width = max(dims) if dims else 0
    if len(set(dims)) > 1:
        raise ValueError("counting-process rows need the same covariate dimension at every time")
    X = np.stack([Xt for Xt in panel.covariates], axis=1) if width else np.zeros((panel.n, panel.T, 0))
    blocks.append(X[subj, period])
    names += list(panel.covariate_names[0])
    blocks.append(panel.treatments[subj, period][:, None])
    names.append(panel.treatment_name)
    blocks.append(panel.baseline[subj])
    names += list(panel.baseline_names)
    data = CountingProcessData(
        subject=panel.ids[subj], tstart=tstart, tstop=tstop, event=event,
        Z=np.hstack(blocks), column_names=tuple(names), period=period,
    )
    return data.rows() if as_rows else data


# ---------------------------------------------------------------------------
# Positivity
# ---------------------------------------------------------------------------

@dataclass
class PositivityReport:
    epsilon: float
    min_propensity: list
    max_propensity: list
    violation_fraction: list
    failures: dict

    @property
    def ok(self) -> bool:
        return not self.failures and all(v == 0 for v in self.violation_fraction if v == v)

    def table(self) -> pd.DataFrame:
        return pd.DataFrame({
            "t": np.arange(1, len(self.min_propensity) + 1),
            "min_propensity": self.min_propensity,
            "max_propensity": self.max_propensity,
            "violation_fraction": self.violation_fraction,
            "failure": [self.failures.get(t + 1, "") for t in range(len(self.min_propensity))],
        })


def check_positivity(panel: PanelDataset, epsilon: float, spec=None) -> PositivityReport:
    """Fit a propensity model per time point and flag near-deterministic assignment.

    Fitted propensities outside ``[epsilon, 1 - epsilon]`` count as
    violations.  A time point whose propensity fit fails (separation,
    constant treatment, non-convergence) is recorded in ``failures`` and
    the remaining time points are still checked.
    """
    from .propensity import PropensitySpec, fit_propensity_at

    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    if not np.all(np.isin(panel.treatments, (0.0, 1.0))):
        raise ValueError("positivity check needs binary treatments")
    spec = PropensitySpec(denominator_treatment_lags=None, denominator_covariate_lags=None) if spec is None else spec
    lo, hi, frac, failures = [], [], [], {}
    for t in range(panel.T):
        try:
            fitted = fit_propensity_at(panel, t, spec, "denominator")
        except Exception as exc:  # report and keep going
            failures[t + 1] = f"{type(exc).__name__}: {exc}"
            lo.append(np.nan)
            hi.append(np.nan)
            frac.append(np.nan)
            continue
        if not fitted.converged:
            failures[t + 1] = "propensity fit did not converge"
        p = fitted.p1
        lo.append(float(p.min()))
        hi.append(float(p.max()))
        frac.append(float(np.mean((p < epsilon) | (p > 1 - epsilon))))
    return PositivityReport(epsilon, lo, hi, frac, failures)

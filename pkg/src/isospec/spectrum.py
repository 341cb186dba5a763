"""Length spectra as bucketed multisets, and the arithmetic around them:
comparison, Wolpert ratios, the dyadic quasiconformal obstruction, and
isolation intervals for perturbing pants lengths."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

from .schedule import ASINH1, CENSUS_THRESHOLD, LengthSchedule, ScheduleError, dyadic_value


class SpectrumError(ValueError):
    pass


@dataclass(frozen=True)
class Spectrum:
    entries: tuple  # ((length, multiplicity), ...) strictly increasing
    tol: float = 1e-9
    cutoff: float | None = None
    meta: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        prev = None
        for l, m in self.entries:
            if not l > 0 or m < 1:
                raise SpectrumError("lengths must be positive and multiplicities >= 1")
            if prev is not None and l - prev <= self.tol:
                raise SpectrumError("entries are not bucketed")
            prev = l

    @classmethod
    def from_values(cls, values, tol: float = 1e-9, cutoff=None, meta=None) -> "Spectrum":
        """Bucket with absolute tolerance: sorted values whose consecutive
        gaps are <= tol share a bucket, represented by its mean."""
        if not tol > 0:
            raise SpectrumError("tolerance must be positive")
        vals = sorted(float(v) for v in values)
        buckets = []
        for v in vals:
            if buckets and v - buckets[-1][-1] <= tol:
                buckets[-1].append(v)
            else:
                buckets.append([v])
        entries = []
        for b in buckets:
            mean = math.fsum(b) / len(b)
            if entries and mean - entries[-1][0] <= tol:
                raise SpectrumError("ambiguous bucketing; lower the tolerance")
            entries.append((mean, len(b)))
        return cls(tuple(entries), tol, cutoff, dict(meta or {}))

    @property
    def lengths(self) -> list:
        return [l for l, _ in self.entries]

    @property
    def total(self) -> int:
        return sum(m for _, m in self.entries)

    def __len__(self):
        return len(self.entries)

    def multiplicity(self, length: float) -> int:
        for l, m in self.entries:
            if abs(l - length) <= self.tol:
                return m
        return 0

    def truncate(self, cutoff: float) -> "Spectrum":
        return Spectrum(tuple(e for e in self.entries if e[0] <= cutoff), self.tol, cutoff, dict(self.meta))

    def to_csv(self) -> str:
        rows = ["length,multiplicity"] + [f"{l:.12g},{m}" for l, m in self.entries]
        return "\n".join(rows) + "\n"

    def to_dict(self) -> dict:
        return {
            "tolerance": self.tol,
            "cutoff": self.cutoff,
            "entries": [[float(f"{l:.12g}"), m] for l, m in self.entries],
        }


@dataclass(frozen=True)
class Comparison:
    equal: bool
    discrepancy: float | None = None
    left: int = 0
    right: int = 0

    def __bool__(self):
        return self.equal


def compare(S1: Spectrum, S2: Spectrum, tol: float | None = None) -> Comparison:
    """Equal iff both bucket lists agree; otherwise the smallest length at
    which the multiplicities differ."""
    if S1.tol != S2.tol or (tol is not None and tol != S1.tol):
        raise SpectrumError("spectra were bucketed with different tolerances")
    tol = S1.tol
    i = j = 0
    a, b = S1.entries, S2.entries
    while i < len(a) or j < len(b):
        if i < len(a) and j < len(b) and abs(a[i][0] - b[j][0]) <= tol:
            if a[i][1] != b[j][1]:
                return Comparison(False, min(a[i][0], b[j][0]), a[i][1], b[j][1])
            i += 1
            j += 1
        elif j >= len(b) or (i < len(a) and a[i][0] < b[j][0]):
            return Comparison(False, a[i][0], a[i][1], 0)
        else:
            return Comparison(False, b[j][0], 0, b[j][1])
    return Comparison(True)


def wolpert_check(pairs, K: float) -> bool:
    """True iff every ratio l2/l1 lies in [1/K, K]."""
    if not K >= 1:
        raise SpectrumError("K must be >= 1")
    for l1, l2 in pairs:
        if not (l1 > 0 and l2 > 0):
            raise SpectrumError("lengths must be positive")
        r = l2 / l1
        if r > K or r < 1.0 / K:
            return False
    return True


# quasiconformal obstruction on dyadic schedules


def qc_predicate(n: int, K) -> bool:
    """Both image cases break a K-quasiconformal length ratio at index n:
    a long image gives ratio >= 2^{n^2}, a short image with index m != n
    gives ratio >= 2^{2n-1}."""
    K = Fraction(K)
    return n >= 1 and 2 ** (n * n) > K and 2 ** (2 * n - 1) > K


@dataclass(frozen=True)
class QCWitness:
    K: Fraction
    n: int
    case: str  # binding case: "long-image" or "short-image"
    ratio: Fraction  # smallest ratio over both cases
    ratios: dict
    values: dict

    def to_dict(self) -> dict:
        return {
            "K": str(self.K),
            "n": self.n,
            "case": self.case,
            "ratio": str(self.ratio),
            "ratios": {k: str(v) for k, v in self.ratios.items()},
            "values": self.values,
        }


def qc_obstruction(schedule: LengthSchedule, K) -> QCWitness:
    """Minimal index n at which no K-quasiconformal map can match the short
    curve δ_n = arcsinh(1)/2^{n^2} to anything."""
    if schedule.mode != "strict":
        raise ScheduleError("quasiconformal obstruction needs a strict dyadic schedule")
    K = Fraction(K)
    if K < 1:
        raise SpectrumError("K must be >= 1")
    n = 1
    while not qc_predicate(n, K):
        n += 1
    long_r = Fraction(2 ** (n * n))
    short_r = Fraction(2 ** (2 * n - 1))
    case = "short-image" if short_r <= long_r else "long-image"
    values = {
        "delta_n": {"m": n, "length": dyadic_value(n)},
        "long_image_floor": ASINH1,
        "nearest_short_neighbour": {"m": n - 1 if n > 1 else n + 1, "length": dyadic_value(n - 1 if n > 1 else n + 1)},
    }
    return QCWitness(K, n, case, min(long_r, short_r), {"long-image": long_r, "short-image": short_r}, values)


# isolation intervals and perturbations


@dataclass(frozen=True)
class IsolationIntervals:
    intervals: dict  # pants-curve label -> (a, b)
    values: dict  # label -> schedule value
    cutoff: float

    def contains(self, label, v) -> bool:
        a, b = self.intervals[label]
        return a < v < b

    def to_dict(self) -> dict:
        return {"cutoff": self.cutoff, "intervals": {k: list(v) for k, v in sorted(self.intervals.items())}}


def isolation_intervals(schedule: LengthSchedule, S: Spectrum) -> IsolationIntervals:
    """Symmetric interval around each pants value reaching halfway to the
    nearest other spectrum value, clipped to (0, min(2 arcsinh(1), L))."""
    L = S.cutoff if S.cutoff is not None else CENSUS_THRESHOLD
    top = min(CENSUS_THRESHOLD, L)
    lengths = S.lengths
    owners = {}
    for label, v in schedule.pants.items():
        if not v < L:
            raise SpectrumError(f"pants value {v} is not below the cutoff {L}")
        k = min(range(len(lengths)), key=lambda i: abs(lengths[i] - v)) if lengths else None
        if k is None or abs(lengths[k] - v) > S.tol:
            raise SpectrumError(f"pants value {v} missing from the spectrum")
        if k in owners:
            raise SpectrumError(f"pants curves {owners[k]!r} and {label!r} share a length; not isolated")
        owners[k] = label
    out = {}
    for k, label in owners.items():
        v = lengths[k]
        gaps = [abs(lengths[i] - v) for i in range(len(lengths)) if i != k]
        r = min(gaps) / 2 if gaps else math.inf
        out[label] = (max(0.0, v - r), min(top, v + r))
    return IsolationIntervals(out, dict(schedule.pants), L)


def perturb_lengths(schedule: LengthSchedule, quotients, intervals: IsolationIntervals, deltas: dict) -> LengthSchedule:
    """Shift each pants-curve family by its delta.  The same label names the
    curve in every vertex piece of every quotient, so one shift moves all
    copies at once."""
    for q in quotients:
        for c in q.template.curves:
            if c not in schedule.pants:
                raise ScheduleError(f"quotient curve {c!r} has no scheduled length")
    new = dict(schedule.pants)
    for label, d in deltas.items():
        if label not in new:
            raise ScheduleError(f"unknown pants label {label!r}")
        v = new[label] + d
        if not intervals.contains(label, v):
            raise SpectrumError(f"offset {d} moves {label!r} out of its isolation interval")
        new[label] = v
    return schedule.with_pants(new)

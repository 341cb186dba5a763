"""Length schedules: the injective length assignments λ (ports), μ (edge
curves) and P (vertex pants curves)."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

ASINH1 = math.asinh(1.0)
# geodesics shorter than this are disjoint pants curves (census threshold)
CENSUS_THRESHOLD = 2.0 * ASINH1
# "short" in the quasiconformal argument
SHORT_THRESHOLD = ASINH1


class ScheduleError(ValueError):
    pass


def dyadic_value(m: int) -> float:
    """arcsinh(1) / 2^{m^2}; underflows to 0.0 for m >= 32."""
    if m < 1:
        raise ScheduleError("dyadic index must be >= 1")
    return math.ldexp(ASINH1, -m * m)


@dataclass
class LengthSchedule:
    lam: dict  # port (j, h, k) -> length
    mu: dict  # m -> length
    pants: dict  # internal curve name -> length
    mode: str = "free"
    exponents: dict = field(default_factory=dict)  # (family, key) -> m, strict mode only

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.mode not in ("strict", "free"):
            raise ScheduleError(f"unknown schedule mode {self.mode!r}")
        vals = self.values()
        if self.mode == "strict":
            ms = list(self.exponents.values())
            if len(ms) != len(vals) or len(set(ms)) != len(ms):
                raise ScheduleError("strict schedule needs one distinct dyadic index per label")
            return
        for v in vals:
            if not 0.0 < v < CENSUS_THRESHOLD:
                raise ScheduleError(f"length {v} outside (0, 2 arcsinh 1)")
        if len(set(vals)) != len(vals):
            raise ScheduleError("schedule is not injective")

    def values(self) -> list:
        return list(self.lam.values()) + list(self.mu.values()) + list(self.pants.values())

    @property
    def Lambda(self) -> frozenset:
        return frozenset(self.lam.values())

    @property
    def M(self) -> frozenset:
        return frozenset(self.mu.values())

    @property
    def P(self) -> frozenset:
        return frozenset(self.pants.values())

    def lambda_of(self, port):
        try:
            return self.lam[port]
        except KeyError:
            raise ScheduleError(f"port {port} has no λ length") from None

    def mu_of(self, m):
        return self.mu.get(m)

    def pants_of(self, name):
        try:
            return self.pants[name]
        except KeyError:
            raise ScheduleError(f"curve {name!r} has no length") from None

    def exponent(self, family: str, key) -> int:
        if self.mode != "strict":
            raise ScheduleError("dyadic exponents exist only in strict mode")
        return self.exponents[(family, key)]

    def with_pants(self, pants: dict) -> "LengthSchedule":
        mode = self.mode
        exps = self.exponents
        if pants != self.pants:
            mode, exps = "free", {}
        return replace(self, pants=dict(pants), mode=mode, exponents=dict(exps))

    def to_dict(self, label=str) -> dict:
        def port(p):
            return f"{p[0]},{label(p[1])},{p[2]}"

        out = {
            "mode": self.mode,
            "lambda": {port(p): v for p, v in sorted(self.lam.items())},
            "mu": {str(m): v for m, v in sorted(self.mu.items())},
            "pants": {k: v for k, v in sorted(self.pants.items())},
        }
        if self.mode == "strict":
            out["exponents"] = {
                f"{fam}:{port(k) if fam == 'lambda' else k}": m for (fam, k), m in sorted(self.exponents.items(), key=str)
            }
        return out


def make_schedule(ports, pants_labels, m_max: int, mode: str = "free", low: float = 0.1, high: float = 1.4, m_budget: int = 1000) -> LengthSchedule:
    """Injective schedule over the given labels.

    strict: the three families use dyadic indices m ≡ 2 (λ), 1 (P), 0 (μ)
    mod 3.  free: evenly spaced distinct values in [low, high], λ first,
    then P, then μ.
    """
    ports = sorted(set(ports))
    pants_labels = sorted(set(pants_labels))
    mus = list(range(1, m_max + 1))
    if mode == "strict":
        need = 3 * max(len(ports), len(pants_labels), len(mus), 1)
        if need > m_budget:
            raise ScheduleError(f"{need} dyadic indices needed, budget is {m_budget}")
        exps = {}
        for k, p in enumerate(ports):
            exps[("lambda", p)] = 3 * k + 2
        for k, c in enumerate(pants_labels):
            exps[("pants", c)] = 3 * k + 1
        for k, m in enumerate(mus):
            exps[("mu", m)] = 3 * k + 3
        lam = {p: dyadic_value(exps[("lambda", p)]) for p in ports}
        pants = {c: dyadic_value(exps[("pants", c)]) for c in pants_labels}
        mu = {m: dyadic_value(exps[("mu", m)]) for m in mus}
        return LengthSchedule(lam, mu, pants, "strict", exps)
    if mode != "free":
        raise ScheduleError(f"unknown schedule mode {mode!r}")
    if not 0.0 < low < high < CENSUS_THRESHOLD:
        raise ScheduleError("free range must lie inside (0, 2 arcsinh 1)")
    total = len(ports) + len(pants_labels) + len(mus)
    grid = [low + (high - low) * (k + 0.5) / total for k in range(total)]
    it = iter(grid)
    lam = {p: next(it) for p in ports}
    pants = {c: next(it) for c in pants_labels}
    mu = {m: next(it) for m in mus}
    return LengthSchedule(lam, mu, pants, "free")


def schedule_for_graph(graph, mode: str = "free", **kw) -> LengthSchedule:
    return make_schedule(graph.template.ports, graph.template.curves, graph.m_max, mode, **kw)

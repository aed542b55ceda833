"""Hazard quantification for a two-channel voted obstacle detector.

One detection request flows through two independent channels (a learnt
perceptor and a conventional one), each a pipeline of sensor, perceptor,
and communication stages, and a 2-out-of-2 voter.  Messages take one of
three values: 0 (no obstacle), 1 (obstacle), 2 (degraded / invalid).  The
voter forwards agreeing non-degraded results; on contradiction or any
degraded input it falls to the safe side by raising the muted flag --
unless the voter itself faults, in which case it emits one of its unsafe
modes.

A false negative of the whole module is an unmuted response that does not
match the demand: the system neither reports the demand correctly nor
falls back to the safe state.  Because the pipeline is acyclic and every
stage law is a plain conditional probability, the false-negative
probability is computed by exact enumeration over the joint outcome
distribution, not by simulation; the per-path contributions are returned
alongside the total, and they sum to it by construction.

The fused deployment runs three such modules whose false negatives are
assumed independent, giving a hazard rate of lambda_od * pfn^3 per hour of
demand exposure.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from typing import Sequence

from .errors import DomainError

__all__ = [
    "RiskParams",
    "RiskReport",
    "pfn",
    "fusion_hazard_rate",
    "pfn_parametric_sweep",
    "sweep_to_csv",
]

_NO_OBSTACLE, _OBSTACLE, _DEGRADED = 0, 1, 2


@dataclasses.dataclass(frozen=True)
class RiskParams:
    """Fault probabilities of one detection request.

    p_n and p_c are the per-request miss probabilities of the learnt and
    the conventional perceptor.  p_v is the voter fault probability,
    p_comm the per-channel communication fault probability (a faulted
    message arrives marked degraded).  p_sensor_fault is the probability
    that a sensor delivers no usable data on an obstacle demand (the
    channel then reports no obstacle); p_degrade_detect is the probability
    that degraded input passes unflagged and is processed as if normal.
    env distributes the demand kind: 1 = obstacle present, 2 = degraded
    data.  lambda_od is the demand rate per hour.
    """

    p_n: float
    p_c: float
    p_v: float = 1e-6
    p_comm: float = 1e-7
    p_sensor_fault: float = 0.0
    p_degrade_detect: float = 0.0
    env: tuple[tuple[int, float], ...] = ((1, 0.999), (2, 0.001))
    lambda_od: float = 2.0 / 24.0

    def __post_init__(self) -> None:
        for name in ("p_n", "p_c", "p_v", "p_comm", "p_sensor_fault",
                     "p_degrade_detect"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0 or not math.isfinite(value):
                raise DomainError(f"{name} outside [0,1]: {value}")
        if self.lambda_od < 0.0 or not math.isfinite(self.lambda_od):
            raise DomainError(f"lambda_od must be nonnegative: "
                              f"{self.lambda_od}")
        demands = [d for d, _ in self.env]
        if len(set(demands)) != len(demands) or not set(demands) <= {1, 2}:
            raise DomainError(f"env demands must be unique members of "
                              f"{{1, 2}}: {demands}")
        weights = [w for _, w in self.env]
        if any(w < 0.0 for w in weights) or abs(sum(weights) - 1.0) > 1e-12:
            raise DomainError(f"env weights must be a distribution: "
                              f"{weights}")


@dataclasses.dataclass(frozen=True)
class RiskReport:
    pfn: float
    hazard_rate_single: float
    hazard_rate_3oo3: float
    breakdown: tuple[tuple[str, float], ...]
    lambda_od: float


def _channel_dist(d: int, p_miss: float,
                  params: RiskParams) -> dict[int, float]:
    """Distribution of one channel's communicated message given demand d."""
    sen: dict[int, float] = {}
    if d == 1:
        sen[_OBSTACLE] = 1.0 - params.p_sensor_fault
        sen[_NO_OBSTACLE] = params.p_sensor_fault
    else:
        sen[_DEGRADED] = 1.0 - params.p_degrade_detect
        sen[_OBSTACLE] = params.p_degrade_detect

    per: dict[int, float] = {_NO_OBSTACLE: 0.0, _OBSTACLE: 0.0,
                             _DEGRADED: 0.0}
    for s, ps in sen.items():
        if s == _OBSTACLE:
            per[_NO_OBSTACLE] += ps * p_miss
            per[_OBSTACLE] += ps * (1.0 - p_miss)
        elif s == _DEGRADED:
            per[_DEGRADED] += ps
        else:
            per[_NO_OBSTACLE] += ps

    com: dict[int, float] = {_NO_OBSTACLE: 0.0, _OBSTACLE: 0.0,
                             _DEGRADED: 0.0}
    for v, pv in per.items():
        com[_DEGRADED] += pv * params.p_comm
        com[v] += pv * (1.0 - params.p_comm)
    return com


def _voter_modes(cc: int, cn: int, p_v: float):
    """Voter outcome modes as (label, probability, muted_flag, result)."""
    if cc == _DEGRADED or cn == _DEGRADED or cc != cn:
        yield "mute", 1.0 - p_v, True, max(cc, cn)
        for r in (_NO_OBSTACLE, _OBSTACLE, _DEGRADED):
            yield f"unmuted-r{r}", p_v / 3.0, False, r
    else:
        yield "forward", 1.0 - p_v, False, cc
        yield "spurious-mute", p_v / 3.0, True, cc
        yield "spurious-r0", p_v / 3.0, False, _NO_OBSTACLE
        yield "spurious-r2", p_v / 3.0, False, _DEGRADED


def pfn(params: RiskParams) -> tuple[float, tuple[tuple[str, float], ...]]:
    """False-negative probability of one module per demand, with the
    per-path contributions that sum to it.

    A path contributes when the voter output is unmuted and either the
    channels disagreed or the result does not match the demand.
    """
    contributions: list[tuple[str, float]] = []
    for d, pd in params.env:
        if pd == 0.0:
            continue
        dist_c = _channel_dist(d, params.p_c, params)
        dist_n = _channel_dist(d, params.p_n, params)
        for cc, pcc in dist_c.items():
            if pcc == 0.0:
                continue
            for cn, pcn in dist_n.items():
                if pcn == 0.0:
                    continue
                for label, pm, muted, r in _voter_modes(cc, cn, params.p_v):
                    if pm == 0.0:
                        continue
                    fin = (not muted) and (cc != cn or r != d)
                    if fin:
                        path = f"d={d}|c={cc}|n={cn}|{label}"
                        contributions.append((path, pd * pcc * pcn * pm))
    breakdown = tuple(contributions)
    return math.fsum(p for _, p in breakdown), breakdown


def fusion_hazard_rate(params: RiskParams, pfn_value: float,
                       breakdown: tuple[tuple[str, float], ...] = ()
                       ) -> RiskReport:
    """Hazard rates of one module and of the 3-module fusion at the given
    per-demand false-negative probability."""
    if not 0.0 <= pfn_value <= 1.0 or not math.isfinite(pfn_value):
        raise DomainError(f"pfn outside [0,1]: {pfn_value}")
    return RiskReport(
        pfn=pfn_value,
        hazard_rate_single=params.lambda_od * pfn_value,
        hazard_rate_3oo3=params.lambda_od * pfn_value ** 3,
        breakdown=breakdown,
        lambda_od=params.lambda_od)


def pfn_parametric_sweep(pn_values: Sequence[float],
                         pc_values: Sequence[float],
                         base: RiskParams
                         ) -> list[tuple[float, float, float]]:
    """pfn over the (p_n, p_c) grid with the base's auxiliary parameters."""
    rows = []
    for pn_v in pn_values:
        for pc_v in pc_values:
            params = dataclasses.replace(base, p_n=pn_v, p_c=pc_v)
            value, _ = pfn(params)
            rows.append((pn_v, pc_v, value))
    return rows


def sweep_to_csv(rows: Sequence[tuple[float, float, float]], path) -> None:
    with open(path, "w", encoding="ascii", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["p_n", "p_c", "pfn"])
        for pn_v, pc_v, value in rows:
            writer.writerow([repr(pn_v), repr(pc_v), repr(value)])

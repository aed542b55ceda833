"""Campaign statistics: residual-error estimation, confidence limits,
batch bookkeeping, coverage planning, and seeded simulation.

Two estimation strategies live here.  The model-agnostic route estimates a
failure probability from a flat Monte Carlo sample and bounds it with a
normal-approximation upper confidence limit (``mc_estimate``,
``normal_ucl``, ``required_sample_size``).  The class-aware route evaluates
batches of fixed size, summarizes per-batch false-negative and
false-positive rates with Student-t limits (``batch_stats``,
``student_ucl``), sizes batches with the coupon-collector expectation
(``coupon_expected_draws``), checks class coverage by seeded multinomial
simulation (``simulate_coverage``), and bounds the probability of hitting a
class the partition has not seen yet (``estimate_unknown_class_bound``).

Quantile functions for the normal, Student-t, and chi-square families are
inverted numerically from their CDFs (erfc, regularized incomplete beta,
regularized incomplete gamma); no statistics library is used so the numbers
are auditable and bit-stable.  All simulation randomness comes from Philox
counter streams keyed by (seed, index tuples); multinomial variates are
produced as sequential conditional binomials so every draw is reproducible
across platforms.
"""

from __future__ import annotations

import dataclasses
import json
import math
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, ParseError

__all__ = [
    "PRNG_IDENTITY",
    "UNKNOWN_ID",
    "ProbabilityArray",
    "BatchResult",
    "EstimateWithUCL",
    "CoverageSample",
    "spawned_generator",
    "multinomial_counts",
    "outcome_kind",
    "mc_estimate",
    "normal_cdf",
    "normal_quantile",
    "normal_ucl",
    "required_sample_size",
    "batch_stats",
    "student_cdf",
    "student_quantile",
    "student_ucl",
    "chi2_cdf",
    "chi2_quantile",
    "chi2_independence",
    "coupon_expected_draws",
    "simulate_coverage",
    "estimate_unknown_class_bound",
    "rearrange_batches",
    "save_parray",
    "load_parray",
]

PRNG_IDENTITY = ("numpy.random.Philox 4x64 via SeedSequence spawn keys; "
                 "multinomial as sequential conditional binomials")

UNKNOWN_ID = "__unknown__"


# ---------------------------------------------------------------------------
# Probability arrays

@dataclasses.dataclass(frozen=True)
class ProbabilityArray:
    """Ordered class probabilities, optionally with an unknown-class slot.

    The entry probabilities plus the unknown slot always total 1 (within
    1e-12); ``extended`` rescales the known entries by (1 - p_u) so the
    closure is preserved for any unknown-slot value.
    """

    entries: tuple[tuple[str, float], ...]
    p_unknown: float = 0.0

    def __post_init__(self) -> None:
        if not self.entries:
            raise DomainError("probability array needs at least one entry")
        ids = [eid for eid, _ in self.entries]
        if len(set(ids)) != len(ids):
            raise DomainError("probability array ids must be unique")
        for eid, p in self.entries:
            if not (0.0 <= p <= 1.0) or not math.isfinite(p):
                raise DomainError(f"probability of {eid!r} outside [0,1]: {p}")
        if not (0.0 <= self.p_unknown < 1.0):
            raise DomainError(f"unknown-slot probability outside [0,1): "
                              f"{self.p_unknown}")
        total = math.fsum(p for _, p in self.entries) + self.p_unknown
        if abs(total - 1.0) > 1e-12:
            raise DomainError(f"probabilities sum to {total}, not 1")

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(eid for eid, _ in self.entries)

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([p for _, p in self.entries], dtype=np.float64)

    def extended(self, p_u: float) -> "ProbabilityArray":
        """Rescaled copy whose known entries leave room for an unknown
        class of probability ``p_u``."""
        if not (0.0 < p_u < 1.0):
            raise DomainError(f"p_u must be in (0,1), got {p_u}")
        if self.p_unknown != 0.0:
            raise DomainError("array already carries an unknown slot")
        scale = 1.0 - p_u
        return ProbabilityArray(
            entries=tuple((eid, p * scale) for eid, p in self.entries),
            p_unknown=p_u)


def save_parray(p: ProbabilityArray, path) -> None:
    doc = {"entries": [[eid, prob] for eid, prob in p.entries],
           "p_unknown": p.p_unknown}
    with open(path, "w", encoding="ascii") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_parray(path) -> ProbabilityArray:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        return ProbabilityArray(
            entries=tuple((str(eid), float(prob))
                          for eid, prob in doc["entries"]),
            p_unknown=float(doc.get("p_unknown", 0.0)))
    except OSError as exc:
        raise ParseError(f"cannot read probability array {path}: {exc}") from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed probability array {path}: {exc}") from exc


def outcome_kind(class_id: str) -> str:
    """Correctness kind encoded in a class id ('FalseNeg[1]::rep-3' ->
    'FalseNeg')."""
    head = class_id.split("::", 1)[0]
    return head.split("[", 1)[0]


# ---------------------------------------------------------------------------
# Monte Carlo estimation and normal-approximation limits

def mc_estimate(n: int, n_fail: int) -> float:
    """Failure-rate point estimate n_fail / n."""
    if n <= 0:
        raise DomainError(f"sample size must be positive, got {n}")
    if not 0 <= n_fail <= n:
        raise DomainError(f"failure count {n_fail} outside 0..{n}")
    return n_fail / n


def normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def _bisect_cdf(cdf, target: float, lo: float, hi: float) -> float:
    # cdf must be nondecreasing with cdf(lo) <= target <= cdf(hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if cdf(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def normal_quantile(p: float) -> float:
    """Standard normal quantile by bisection of the CDF.

    Upper-tail arguments go through the complement (exact for p >= 0.5)
    so the bisection always runs in the lower tail, where the erfc-based
    CDF keeps full relative precision and the result matches direct
    inverse implementations to near machine accuracy.
    """
    if not 0.0 < p < 1.0:
        raise DomainError(f"quantile argument must be in (0,1), got {p}")
    if p == 0.5:
        return 0.0
    if p > 0.5:
        return -normal_quantile(1.0 - p)
    return _bisect_cdf(normal_cdf, p, -50.0, 0.0)


def normal_ucl(p_hat: float, n: int, alpha: float) -> tuple[float, float]:
    """Error margin and upper confidence limit of a Monte Carlo estimate.

    The margin combines the 1/(2n) continuity correction with the
    normal-approximation term z(alpha) * sqrt(p_hat (1-p_hat) / n).
    """
    if n <= 0:
        raise DomainError(f"sample size must be positive, got {n}")
    if not 0.0 < alpha < 0.5:
        raise DomainError(f"alpha must be in (0, 0.5), got {alpha}")
    if not 0.0 <= p_hat <= 1.0:
        raise DomainError(f"estimate outside [0,1]: {p_hat}")
    z = normal_quantile(1.0 - alpha)
    e = 1.0 / (2.0 * n) + z * math.sqrt(p_hat * (1.0 - p_hat) / n)
    return e, p_hat + e


def required_sample_size(p_hat: float, e_max: float, alpha: float) -> int:
    """Smallest n whose normal_ucl margin at p_hat is at most e_max."""
    if e_max <= 0.0:
        raise DomainError(f"margin target must be positive, got {e_max}")
    if not 0.0 < alpha < 0.5:
        raise DomainError(f"alpha must be in (0, 0.5), got {alpha}")
    if not 0.0 <= p_hat <= 1.0:
        raise DomainError(f"estimate outside [0,1]: {p_hat}")
    z = normal_quantile(1.0 - alpha)
    var = p_hat * (1.0 - p_hat)

    def margin(n: int) -> float:
        return 1.0 / (2.0 * n) + z * math.sqrt(var / n)

    hi = 1
    while margin(hi) > e_max:
        hi *= 2
        if hi > 1 << 62:
            raise DomainError("margin target unreachable")
    lo = hi // 2
    while lo + 1 < hi:
        mid = (lo + hi) // 2
        if margin(mid) <= e_max:
            hi = mid
        else:
            lo = mid
    return hi


# ---------------------------------------------------------------------------
# Batch statistics and Student-t limits

@dataclasses.dataclass(frozen=True)
class BatchResult:
    """Per-batch tallies of a verification campaign."""

    batch_index: int
    q: int
    false_neg: int
    false_pos: int
    hits: dict[str, int]
    covered_all: bool
    complete: bool = True

    def __post_init__(self) -> None:
        if self.q <= 0:
            raise DomainError(f"batch size must be positive, got {self.q}")
        if self.false_neg < 0 or self.false_pos < 0:
            raise DomainError("counts must be nonnegative")
        if self.false_neg + self.false_pos > self.q:
            raise DomainError("failure counts exceed batch size")


@dataclasses.dataclass(frozen=True)
class EstimateWithUCL:
    mean: float
    sample_std: float
    w: int
    alpha: float
    ucl: float


def batch_stats(batches: Sequence[BatchResult]) -> tuple[float, float,
                                                          float, float]:
    """Sample means and Bessel-corrected sample standard deviations of the
    per-batch false-negative and false-positive rates.

    Returns (mean_fn, std_fn, mean_fp, std_fp).
    """
    w = len(batches)
    if w < 2:
        raise DomainError(f"need at least 2 batches, got {w}")
    q = batches[0].q
    if any(b.q != q for b in batches):
        raise DomainError("batches must share one size q")
    fn = [b.false_neg / q for b in batches]
    fp = [b.false_pos / q for b in batches]

    def mean_std(xs: list[float]) -> tuple[float, float]:
        m = math.fsum(xs) / w
        var = math.fsum((x - m) ** 2 for x in xs) / (w - 1)
        return m, math.sqrt(var)

    mfn, sfn = mean_std(fn)
    mfp, sfp = mean_std(fp)
    return mfn, sfn, mfp, sfp


def _log_beta(a: float, b: float) -> float:
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)


def _beta_cf(a: float, b: float, x: float) -> float:
    # Lentz continued fraction for the regularized incomplete beta
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 400):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 3e-16:
            return h
    raise DomainError("incomplete beta continued fraction did not converge")


def _reg_inc_beta(a: float, b: float, x: float) -> float:
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    front = math.exp(a * math.log(x) + b * math.log1p(-x) - _log_beta(a, b))
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cf(a, b, x) / a
    return 1.0 - front * _beta_cf(b, a, 1.0 - x) / b


def student_cdf(t: float, df: int) -> float:
    if df < 1:
        raise DomainError(f"degrees of freedom must be >= 1, got {df}")
    x = df / (df + t * t)
    tail = 0.5 * _reg_inc_beta(df / 2.0, 0.5, x)
    return 1.0 - tail if t >= 0.0 else tail


def student_quantile(p: float, df: int) -> float:
    """Student-t quantile by bisection of the incomplete-beta CDF."""
    if not 0.0 < p < 1.0:
        raise DomainError(f"quantile argument must be in (0,1), got {p}")
    if df < 1:
        raise DomainError(f"degrees of freedom must be >= 1, got {df}")
    if p == 0.5:
        return 0.0
    if p < 0.5:
        return -student_quantile(1.0 - p, df)
    hi = 1.0
    while student_cdf(hi, df) < p:
        hi *= 2.0
        if hi > 1e300:
            raise DomainError("quantile bracket overflow")
    return _bisect_cdf(lambda t: student_cdf(t, df), p, 0.0, hi)


def student_ucl(mean: float, std: float, w: int,
                alpha: float) -> EstimateWithUCL:
    """Upper confidence limit mean + t(alpha, w-1) * std / sqrt(w)."""
    if w < 2:
        raise DomainError(f"need at least 2 batches, got {w}")
    if std < 0.0:
        raise DomainError(f"standard deviation must be nonnegative: {std}")
    if not 0.0 < alpha < 0.5:
        raise DomainError(f"alpha must be in (0, 0.5), got {alpha}")
    t = student_quantile(1.0 - alpha, w - 1)
    return EstimateWithUCL(mean=mean, sample_std=std, w=w, alpha=alpha,
                           ucl=mean + t * std / math.sqrt(w))


# ---------------------------------------------------------------------------
# Chi-square

def _gamma_p(a: float, x: float) -> float:
    # regularized lower incomplete gamma P(a, x)
    if x < 0.0 or a <= 0.0:
        raise DomainError(f"incomplete gamma needs a > 0, x >= 0, "
                          f"got a={a}, x={x}")
    if x == 0.0:
        return 0.0
    if x < a + 1.0:
        term = 1.0 / a
        total = term
        n = 0
        while True:
            n += 1
            term *= x / (a + n)
            total += term
            if abs(term) < abs(total) * 3e-16:
                break
            if n > 10000:
                raise DomainError("incomplete gamma series did not converge")
        return total * math.exp(-x + a * math.log(x) - math.lgamma(a))
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 10000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 3e-16:
            q = h * math.exp(-x + a * math.log(x) - math.lgamma(a))
            return 1.0 - q
    raise DomainError("incomplete gamma continued fraction did not converge")


def chi2_cdf(x: float, df: int) -> float:
    if df < 1:
        raise DomainError(f"degrees of freedom must be >= 1, got {df}")
    if x <= 0.0:
        return 0.0
    return _gamma_p(df / 2.0, x / 2.0)


def chi2_quantile(p: float, df: int) -> float:
    if not 0.0 < p < 1.0:
        raise DomainError(f"quantile argument must be in (0,1), got {p}")
    if df < 1:
        raise DomainError(f"degrees of freedom must be >= 1, got {df}")
    hi = float(max(df, 1))
    while chi2_cdf(hi, df) < p:
        hi *= 2.0
        if hi > 1e300:
            raise DomainError("quantile bracket overflow")
    return _bisect_cdf(lambda x: chi2_cdf(x, df), p, 0.0, hi)


def chi2_independence(table: Sequence[Sequence[float]],
                      alpha: float = 0.05) -> tuple[float, int, bool]:
    """Pearson independence test on a two-way contingency table.

    Returns (statistic, degrees of freedom, reject-at-alpha).
    """
    obs = np.array(table, dtype=np.float64)
    if obs.ndim != 2 or obs.shape[0] < 2 or obs.shape[1] < 2:
        raise DomainError("contingency table must be at least 2x2")
    if np.any(obs < 0.0) or not np.all(np.isfinite(obs)):
        raise DomainError("cell counts must be finite and nonnegative")
    if not 0.0 < alpha < 0.5:
        raise DomainError(f"alpha must be in (0, 0.5), got {alpha}")
    rows = obs.sum(axis=1)
    cols = obs.sum(axis=0)
    total = obs.sum()
    if np.any(rows == 0.0) or np.any(cols == 0.0):
        raise DomainError("every marginal sum must be positive")
    expected = np.outer(rows, cols) / total
    stat = float(((obs - expected) ** 2 / expected).sum())
    df = (obs.shape[0] - 1) * (obs.shape[1] - 1)
    critical = chi2_quantile(1.0 - alpha, df)
    return stat, df, stat > critical


# ---------------------------------------------------------------------------
# Coupon-collector batch sizing

def _adaptive_simpson(f, a: float, fa: float, b: float, fb: float,
                      m: float, fm: float, whole: float, eps: float,
                      depth: int) -> float:
    lm = 0.5 * (a + m)
    rm = 0.5 * (m + b)
    flm, frm = f(lm), f(rm)
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    if depth <= 0 or abs(left + right - whole) <= 15.0 * eps:
        return left + right + (left + right - whole) / 15.0
    return (_adaptive_simpson(f, a, fa, m, fm, lm, flm, left, eps / 2.0,
                              depth - 1)
            + _adaptive_simpson(f, m, fm, b, fb, rm, frm, right, eps / 2.0,
                                depth - 1))


def coupon_expected_draws(p: ProbabilityArray,
                          rel_tol: float = 1e-6) -> float:
    """Expected number of draws until every entry class is hit at least
    once: the integral over x of 1 - prod_i (1 - exp(-p_i x)).

    The integrand decreases monotonically from 1 to 0; integration runs
    adaptively over doubling segments up to the point where it falls below
    1e-12.
    """
    probs = p.probabilities
    if np.any(probs <= 0.0):
        raise DomainError("coupon expectation needs strictly positive "
                          "entry probabilities")
    if float(probs.sum()) > 1.0 + 1e-12:
        raise DomainError("entry probabilities exceed 1")

    def integrand(x: float) -> float:
        # at x = 0 the log1p argument is -1; the -inf intermediate is the
        # correct limit and expm1 turns it into an exact integrand value 1
        with np.errstate(divide="ignore"):
            return -math.expm1(float(np.log1p(-np.exp(-probs * x)).sum()))

    cutoff = 1.0
    while integrand(cutoff) >= 1e-12:
        cutoff *= 2.0
    total = 0.0
    a = 0.0
    b = 1.0
    segments = []
    while a < cutoff:
        b = min(b, cutoff)
        segments.append((a, b))
        a, b = b, b * 4.0
    coarse = 0.0
    cached = []
    for a, b in segments:
        m = 0.5 * (a + b)
        fa, fm, fb = integrand(a), integrand(m), integrand(b)
        whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
        cached.append((a, fa, b, fb, m, fm, whole))
        coarse += whole
    eps_seg = rel_tol * max(abs(coarse), 1.0) / len(segments)
    for a, fa, b, fb, m, fm, whole in cached:
        total += _adaptive_simpson(integrand, a, fa, b, fb, m, fm, whole,
                                   eps_seg, 48)
    return total


# ---------------------------------------------------------------------------
# Seeded simulation

def spawned_generator(seed: int, *key: int) -> np.random.Generator:
    """Philox generator on the stream addressed by (seed, key)."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(key))
    return np.random.Generator(np.random.Philox(ss))


def multinomial_counts(gen: np.random.Generator, n: int,
                       probs: np.ndarray) -> np.ndarray:
    """One multinomial variate of n trials as sequential conditional
    binomials over the given category probabilities."""
    k = len(probs)
    counts = np.zeros(k, dtype=np.int64)
    # suffix sums keep the conditional probabilities exact at the tail
    suffix = np.cumsum(probs[::-1])[::-1]
    remaining = n
    for i in range(k - 1):
        if remaining == 0:
            break
        cond = min(max(float(probs[i] / suffix[i]), 0.0), 1.0)
        x = int(gen.binomial(remaining, cond))
        counts[i] = x
        remaining -= x
    counts[k - 1] = remaining
    return counts


def _category_layout(p: ProbabilityArray) -> tuple[list[str], np.ndarray]:
    ids = list(p.ids)
    probs = list(p.probabilities)
    if p.p_unknown > 0.0:
        ids.append(UNKNOWN_ID)
        probs.append(p.p_unknown)
    return ids, np.array(probs, dtype=np.float64)


@dataclasses.dataclass(frozen=True)
class CoverageSample:
    """One simulated batch of a coverage check."""

    sample_index: int
    hits: dict[str, int]
    zero_hit_ids: tuple[str, ...]
    covered_all: bool


def simulate_coverage(p: ProbabilityArray, sample_size: int,
                      num_samples: int, seed: int) -> list[CoverageSample]:
    """Draw num_samples multinomial batches and report which classes each
    batch failed to hit.  covered_all refers to the known entries only; the
    unknown slot, when present, is reported like any other category in
    hits and zero_hit_ids.
    """
    if sample_size <= 0:
        raise DomainError(f"sample_size must be positive, got {sample_size}")
    if num_samples <= 0:
        raise DomainError(f"num_samples must be positive, got {num_samples}")
    ids, probs = _category_layout(p)
    known = set(p.ids)
    out = []
    for s in range(num_samples):
        gen = spawned_generator(seed, s)
        counts = multinomial_counts(gen, sample_size, probs)
        hits = {eid: int(c) for eid, c in zip(ids, counts)}
        zero = tuple(eid for eid, c in zip(ids, counts) if c == 0)
        covered = all(hits[eid] > 0 for eid in known)
        out.append(CoverageSample(sample_index=s, hits=hits,
                                  zero_hit_ids=zero, covered_all=covered))
    return out


def estimate_unknown_class_bound(p: ProbabilityArray, sample_size: int,
                                 num_samples: int, seed: int,
                                 p_u_start: float,
                                 shrink_factor: float = 0.1) -> float:
    """Largest unknown-class probability the campaign cannot distinguish
    from zero: shrink p_u from p_u_start until at least one simulated batch
    records zero unknown-class hits, and return that p_u.
    """
    if not 0.0 < p_u_start < 1.0:
        raise DomainError(f"p_u_start must be in (0,1), got {p_u_start}")
    if not 0.0 < shrink_factor < 1.0:
        raise DomainError(f"shrink_factor must be in (0,1), "
                          f"got {shrink_factor}")
    if sample_size <= 0 or num_samples <= 0:
        raise DomainError("sample_size and num_samples must be positive")
    ids, _ = _category_layout(p.extended(p_u_start))
    unknown_index = ids.index(UNKNOWN_ID)
    p_u = p_u_start
    for iteration in range(200):
        _, probs = _category_layout(p.extended(p_u))
        for s in range(num_samples):
            gen = spawned_generator(seed, iteration, s)
            counts = multinomial_counts(gen, sample_size, probs)
            if counts[unknown_index] == 0:
                return p_u
        p_u *= shrink_factor
    raise DomainError("unknown-class search did not terminate in 200 "
                      "shrink steps")


# ---------------------------------------------------------------------------
# Batch re-arrangement

def rearrange_batches(outcomes: Sequence[str], new_q: int,
                      universe: Iterable[str] | None = None
                      ) -> list[BatchResult]:
    """Re-partition per-image class-id outcomes into consecutive batches of
    size new_q.  A trailing partial batch is kept with complete=False.
    Coverage is judged against ``universe`` (default: every id occurring in
    the outcomes).
    """
    if new_q <= 0:
        raise DomainError(f"batch size must be positive, got {new_q}")
    known = set(universe) if universe is not None else set(outcomes)
    batches = []
    for index, start in enumerate(range(0, len(outcomes), new_q)):
        chunk = outcomes[start:start + new_q]
        hits: dict[str, int] = {}
        fn = fp = 0
        for cid in chunk:
            hits[cid] = hits.get(cid, 0) + 1
            kind = outcome_kind(cid)
            if kind == "FalseNeg":
                fn += 1
            elif kind == "FalsePos":
                fp += 1
        covered = all(hits.get(eid, 0) > 0 for eid in known)
        batches.append(BatchResult(batch_index=index, q=len(chunk),
                                   false_neg=fn, false_pos=fp, hits=hits,
                                   covered_all=covered,
                                   complete=len(chunk) == new_q))
    return batches

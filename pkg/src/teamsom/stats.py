"""Kolmogorov-Smirnov goodness of fit, Kendall tau-b, and Table-I style matrices."""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import asdict, dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import EmptySample, LengthMismatch, TooShort, ZeroVariance

# ---------------------------------------------------------------- Kendall tau-b


@dataclass(frozen=True)
class CorrelationResult:
    tau_b: float
    concordant: int
    discordant: int
    ties_x: tuple[int, ...]  # sizes of tie groups (t >= 2) in x
    ties_y: tuple[int, ...]
    n: int
    z: float
    p_two_sided: float
    degenerate: bool = False


def _tie_groups(values: np.ndarray) -> tuple[int, ...]:
    _, counts = np.unique(values, return_counts=True)
    return tuple(sorted(int(c) for c in counts if c > 1))


def _count_inversions(y: np.ndarray) -> int:
    """Strict inversions (i < j with y[i] > y[j]) via bottom-up block merging."""
    n = y.shape[0]
    if n < 2:
        return 0
    _, ranks = np.unique(y, return_inverse=True)
    ranks = ranks.astype(np.int64)
    m = int(ranks.max()) + 1
    idx = np.arange(n, dtype=np.int64)
    total = 0
    width = 1
    while width < n:
        block = idx // (2 * width)
        left = (idx // width) % 2 == 0
        keys = block * m + ranks
        left_sorted = np.sort(keys[left])
        right_keys = keys[~left]
        right_block = block[~left]
        # left members of the same block strictly greater than each right member
        upper = np.searchsorted(left_sorted, (right_block + 1) * m, side="left")
        lower = np.searchsorted(left_sorted, right_keys, side="right")
        total += int((upper - lower).sum())
        width *= 2
    return total


def kendall_tau_b(x: Sequence[float], y: Sequence[float]) -> CorrelationResult:
    """Kendall's tau-b with tie-corrected normal-approximation p-value.

    O(n log^2 n): records are sorted by (x, y) and discordant pairs are the
    strict inversions of the resulting y sequence.
    """
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    if xa.shape != ya.shape or xa.ndim != 1:
        raise LengthMismatch(f"lengths differ: {xa.shape} vs {ya.shape}")
    n = xa.shape[0]
    if n < 2:
        raise TooShort("kendall tau-b needs n >= 2")

    ties_x = _tie_groups(xa)
    ties_y = _tie_groups(ya)
    n0 = n * (n - 1) // 2
    n1 = sum(t * (t - 1) // 2 for t in ties_x)
    n2 = sum(u * (u - 1) // 2 for u in ties_y)
    # pairs tied in both
    _, joint = np.unique(np.column_stack([xa, ya]), axis=0, return_counts=True)
    n3 = int(sum(int(c) * (int(c) - 1) // 2 for c in joint))

    order = np.lexsort((ya, xa))
    discordant = _count_inversions(ya[order])
    concordant = n0 - n1 - n2 + n3 - discordant
    s = concordant - discordant

    if n1 == n0 or n2 == n0:
        return CorrelationResult(0.0, concordant, discordant, ties_x, ties_y, n, 0.0, 1.0, True)

    tau = s / math.sqrt((n0 - n1) * (n0 - n2))
    tau = max(-1.0, min(1.0, tau))

    v0 = n * (n - 1) * (2 * n + 5)
    vt = sum(t * (t - 1) * (2 * t + 5) for t in ties_x)
    vu = sum(u * (u - 1) * (2 * u + 5) for u in ties_y)
    v1 = sum(t * (t - 1) for t in ties_x) * sum(u * (u - 1) for u in ties_y) / (2 * n * (n - 1))
    v2 = 0.0
    if n > 2:
        v2 = (
            sum(t * (t - 1) * (t - 2) for t in ties_x)
            * sum(u * (u - 1) * (u - 2) for u in ties_y)
            / (9 * n * (n - 1) * (n - 2))
        )
    var = (v0 - vt - vu) / 18 + v1 + v2
    z = s / math.sqrt(var) if var > 0 else 0.0
    p = math.erfc(abs(z) / math.sqrt(2))
    return CorrelationResult(float(tau), int(concordant), int(discordant), ties_x, ties_y, n, float(z), min(1.0, p))


# ---------------------------------------------------------------- Kolmogorov-Smirnov


@dataclass(frozen=True)
class Reference:
    """A continuous reference distribution, or ``family="normal-fitted"``."""

    family: str
    params: tuple[float, ...] = ()

    def describe(self) -> str:
        if not self.params:
            return self.family
        return f"{self.family}({', '.join(f'{p:g}' for p in self.params)})"


NORMAL_FITTED = Reference("normal-fitted")


def _normal_cdf(mu: float, sigma: float) -> Callable[[np.ndarray], np.ndarray]:
    from scipy.special import ndtr

    return lambda v: ndtr((np.asarray(v, dtype=float) - mu) / sigma)


def reference_cdf(ref: Reference) -> Callable[[np.ndarray], np.ndarray]:
    fam = ref.family
    if fam == "uniform":
        a, b = ref.params if ref.params else (0.0, 1.0)
        return lambda v: np.clip((np.asarray(v, dtype=float) - a) / (b - a), 0.0, 1.0)
    if fam == "normal":
        mu, sigma = ref.params if ref.params else (0.0, 1.0)
        return _normal_cdf(mu, sigma)
    if fam == "exponential":
        (rate,) = ref.params if ref.params else (1.0,)
        return lambda v: np.where(np.asarray(v) > 0, -np.expm1(-rate * np.maximum(np.asarray(v, dtype=float), 0)), 0.0)
    if fam == "lognormal":
        mu, sigma = ref.params if ref.params else (0.0, 1.0)
        norm = _normal_cdf(mu, sigma)

        def cdf(v):
            v = np.asarray(v, dtype=float)
            out = np.zeros_like(v)
            pos = v > 0
            out[pos] = norm(np.log(v[pos]))
            return out

        return cdf
    raise ValueError(f"unknown reference family {fam!r}")


@dataclass(frozen=True)
class KsResult:
    d_statistic: float
    n: int
    p_value: float
    reference: str
    anti_conservative: bool = False
    mc_p_value: float | None = None
    mc_replicates: int = 0


def ks_statistic(x: Sequence[float], cdf: Callable[[np.ndarray], np.ndarray]) -> float:
    xs = np.sort(np.asarray(x, dtype=float))
    n = xs.shape[0]
    if n == 0:
        raise EmptySample("KS test needs at least one observation")
    f = np.asarray(cdf(xs), dtype=float)
    i = np.arange(1, n + 1)
    d = np.maximum(i / n - f, f - (i - 1) / n).max()
    return float(min(1.0, max(0.0, d)))


def kolmogorov_q(lam: float, tol: float = 1e-12, max_terms: int = 100_000) -> float:
    """Asymptotic Kolmogorov survival function ``2 * sum (-1)^(k-1) exp(-2 k^2 lam^2)``.

    The alternating series is cut once a term drops below ``tol``.
    """
    if lam <= 0:
        return 1.0
    if lam < 0.2:
        # the complementary theta series puts 1 - Q below 1e-12 here
        return 1.0
    total = 0.0
    sign = 1.0
    for k in range(1, max_terms + 1):
        term = math.exp(-2.0 * k * k * lam * lam)
        total += sign * term
        if term < tol:
            break
        sign = -sign
    return min(1.0, max(0.0, 2.0 * total))


def ks_p_value(d: float, n: int) -> float:
    sq = math.sqrt(n)
    return kolmogorov_q((sq + 0.12 + 0.11 / sq) * d)


def ks_test(
    x: Sequence[float],
    reference: Reference | str | Callable = NORMAL_FITTED,
    *,
    mc_replicates: int = 0,
    seed: int = 0,
) -> KsResult:
    """One-sample KS test against a fully specified CDF or a fitted normal.

    With ``"normal-fitted"`` the asymptotic p-value is anti-conservative
    (Lilliefors situation); pass ``mc_replicates > 0`` to also get a Monte
    Carlo p-value that accounts for parameter estimation.
    """
    xa = np.asarray(x, dtype=float)
    n = xa.shape[0]
    if n == 0:
        raise EmptySample("KS test needs at least one observation")
    if isinstance(reference, str):
        reference = Reference(reference)
    if callable(reference) and not isinstance(reference, Reference):
        d = ks_statistic(xa, reference)
        return KsResult(d, n, ks_p_value(d, n), getattr(reference, "__name__", "custom"))

    if reference.family == "normal-fitted":
        if n < 3:
            raise TooShort("normal-fitted KS needs n >= 3")
        mu = float(xa.mean())
        sigma = float(xa.std(ddof=1))
        if not sigma > 1e-12 * max(1.0, abs(mu)):
            raise ZeroVariance("sample has zero variance")
        d = ks_statistic(xa, _normal_cdf(mu, sigma))
        mc_p = None
        if mc_replicates > 0:
            rng = np.random.default_rng(seed)
            exceed = 0
            for _ in range(mc_replicates):
                sim = rng.standard_normal(n)
                ds = ks_statistic(sim, _normal_cdf(float(sim.mean()), float(sim.std(ddof=1))))
                exceed += ds >= d
            mc_p = (exceed + 1) / (mc_replicates + 1)
        return KsResult(
            d, n, ks_p_value(d, n), f"normal-fitted(mu={mu:.6g}, sd={sigma:.6g})", True, mc_p, mc_replicates
        )

    d = ks_statistic(xa, reference_cdf(reference))
    return KsResult(d, n, ks_p_value(d, n), reference.describe())


# ---------------------------------------------------------------- Table I


@dataclass(frozen=True)
class CorrelationMatrix:
    names: tuple[str, ...]
    results: dict[tuple[int, int], CorrelationResult]
    alpha: float
    noteworthy_tau: float
    markdown: str

    def to_json(self) -> str:
        pairs = []
        for (i, j), r in sorted(self.results.items()):
            rec = asdict(r)
            rec["ties_x"] = list(r.ties_x)
            rec["ties_y"] = list(r.ties_y)
            pairs.append({"x": self.names[i], "y": self.names[j], **rec,
                          "significant": r.p_two_sided < self.alpha,
                          "noteworthy": self.is_noteworthy(r)})
        record = {"factors": list(self.names), "alpha": self.alpha,
                  "noteworthy_tau": self.noteworthy_tau, "pairs": pairs}
        return json.dumps(record, indent=1) + "\n"

    def is_noteworthy(self, r: CorrelationResult) -> bool:
        return r.p_two_sided < self.alpha and abs(r.tau_b) >= self.noteworthy_tau


def format_tau_cell(r: CorrelationResult, alpha: float = 0.05, noteworthy_tau: float = 0.30) -> str:
    text = f"{r.tau_b:.2f}"
    if text == "-0.00":
        text = "0.00"
    if r.p_two_sided < alpha:
        text += "*"
        if abs(r.tau_b) >= noteworthy_tau:
            text = f"**{text}**"
    return text


def correlation_matrix(
    columns: Mapping[str, Sequence[float]], alpha: float = 0.05, noteworthy_tau: float = 0.30
) -> CorrelationMatrix:
    """Pairwise tau-b over named columns, rendered as an upper-triangular markdown table."""
    names = tuple(columns)
    if len(names) < 2:
        raise TooShort("need at least two columns")
    arrays = [np.asarray(columns[n], dtype=float) for n in names]
    if len({a.shape for a in arrays}) != 1:
        raise LengthMismatch("columns differ in length")
    results = {}
    for i in range(len(names)):
        for j in range(i + 1, len(names)):
            results[(i, j)] = kendall_tau_b(arrays[i], arrays[j])

    k = len(names)
    lines = ["| Factor | " + " | ".join(str(j + 1) for j in range(k)) + " |",
             "|---|" + "---|" * k]
    for i, name in enumerate(names):
        cells = []
        for j in range(k):
            if j < i:
                cells.append("")
            elif j == i:
                cells.append("1.0")
            else:
                cells.append(format_tau_cell(results[(i, j)], alpha, noteworthy_tau))
        lines.append(f"| {i + 1} {name} | " + " | ".join(cells) + " |")
    lines.append("")
    lines.append(f"Note: *p < {alpha:g}; bold values represent noteworthy results (|tau| >= {noteworthy_tau:.2f})")
    return CorrelationMatrix(names, results, alpha, noteworthy_tau, "\n".join(lines) + "\n")


def ks_table_markdown(rows: Mapping[str, KsResult | str], alpha: float = 0.05) -> str:
    lines = ["| Attribute | n | D | p | Normal at alpha? | Reference |", "|---|---|---|---|---|---|"]
    for name, res in rows.items():
        if isinstance(res, str):
            lines.append(f"| {name} | | | | | {res} |")
            continue
        verdict = "rejected" if res.p_value < alpha else "not rejected"
        lines.append(
            f"| {name} | {res.n} | {res.d_statistic:.4f} | {res.p_value:.3g} | {verdict} | {res.reference} |"
        )
    return "\n".join(lines) + "\n"


def tie_summary(values: Sequence[float]) -> dict[int, int]:
    """Tie-group size -> number of groups of that size."""
    return dict(sorted(Counter(_tie_groups(np.asarray(values, dtype=float))).items()))

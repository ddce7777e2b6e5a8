"""Seeded synthetic work-item data with planted monotone couplings.

Items belong to latent clusters that shift iteration, duration and priority.
Developer count, comment count, role count and message wording are drawn
independently of the latent cluster, so the only dependence among them is
what the ``coupling`` table plants.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import stats as sps

from .errors import InvalidConfig
from .lexicon import DEMO_CATEGORIES, Lexicon, load_demo_lexicon
from .model import Dataset, FeatureMatrix, Message, WorkItem, write_messages, write_work_items

WORK_ITEMS_FILE = "work_items.csv"
MESSAGES_FILE = "messages.csv"
GROUND_TRUTH_FILE = "ground_truth.json"

DEFAULT_COUPLING = {
    ("comment_count", "developer_count"): 0.7,
    ("negemo", "developer_count"): 0.3,
}

# per-category share of message words before per-item jitter
BASE_RATES = {
    "social": 0.06,
    "posemo": 0.03,
    "negemo": 0.015,
    "cogmech": 0.05,
    "work": 0.04,
    "achieve": 0.02,
}

BACKGROUND_WORDS = (
    "the a an this that it is was be are on in at of to for from with by as "
    "into about over under after before then than so also just still only "
    "file line method class function module api server client view page "
    "patch change update value field table query schema index cache log "
    "error message stack trace output input config option flag setting "
    "plugin editor window dialog button menu panel model data record item "
    "user admin role build stream repository branch merge version new old "
    "first last next other same each some all any more most less few many "
    "see run use add set get put call open close start stop move copy "
    "here there now today tomorrow yesterday week day time again soon later "
    "attached screenshot comment note following above below see also"
).split()

DEVELOPER_RATE = 1.2  # developer_count = 1 + Poisson(rate)
COMMENT_RATE = 2.8  # comment_count = 1 + Poisson(rate) marginal
# within-cluster spread of the cluster-dependent attributes
ITERATION_SD = 0.06  # as a share of n_iterations
TIME_LOG_SD = 0.3
PRIORITY_HIGH_SHARE = (0.1, 0.9)  # chance of a high priority at the low / high level
ROLE_SHARE = 0.45  # role_count = 1 + Binomial(developer_count, share)
PRACTITIONERS = 474
PROJECT_START = datetime(2005, 6, 1, tzinfo=timezone.utc)
ITERATION_DAYS = 36.5


@dataclass(frozen=True)
class GenConfig:
    n_items: int = 10_215
    n_iterations: int = 30
    median_time_days: float = 35.0
    priority_range: tuple[float, float] = (1.0, 4.0)
    n_latent_clusters: int = 4
    coupling: dict = field(default_factory=lambda: dict(DEFAULT_COUPLING))
    words_per_message: int = 40
    seed: int = 0

    def validate(self) -> None:
        for name in ("n_items", "n_iterations", "n_latent_clusters", "words_per_message"):
            if int(getattr(self, name)) < 1:
                raise InvalidConfig(f"{name} must be >= 1")
        if not self.median_time_days > 0:
            raise InvalidConfig("median_time_days must be > 0")
        lo, hi = self.priority_range
        if not 1.0 <= lo < hi <= 4.0:
            raise InvalidConfig("priority_range must satisfy 1 <= low < high <= 4")
        for pair, strength in self.coupling.items():
            if not -1.0 <= strength <= 1.0:
                raise InvalidConfig(f"coupling {pair} strength {strength} outside [-1, 1]")
            key = _coupling_key(pair)
            if key is None:
                raise InvalidConfig(
                    f"unsupported coupling {pair}: expected (comment_count, developer_count) "
                    f"or (<category>, developer_count)"
                )

    def strength(self, a: str, b: str = "developer_count") -> float:
        for pair, value in self.coupling.items():
            if set(pair) == {a, b}:
                return float(value)
        return 0.0


def _coupling_key(pair) -> str | None:
    pair = tuple(pair)
    if len(pair) != 2 or "developer_count" not in pair:
        return None
    other = pair[0] if pair[1] == "developer_count" else pair[1]
    if other == "comment_count" or other in DEMO_CATEGORIES:
        return other
    return None


@dataclass(frozen=True)
class GroundTruth:
    latent_cluster: tuple[int, ...]
    long_cluster: int
    rates: dict  # category -> per-item injected rates
    config: dict

    def to_json(self, item_ids) -> str:
        items = []
        for i, ident in enumerate(item_ids):
            items.append({
                "id": ident,
                "latent_cluster": self.latent_cluster[i],
                "rates": {c: self.rates[c][i] for c in DEMO_CATEGORIES},
            })
        record = {"config": self.config, "long_cluster": self.long_cluster, "items": items}
        return json.dumps(record, indent=1) + "\n"


# ---------------------------------------------------------------- latent structure


def cluster_levels(k: int) -> list[tuple[int, int, int]]:
    """(iteration, time, priority) level codes per latent cluster.

    Up to eight clusters use binary levels, even-parity codes first so four
    clusters differ pairwise in exactly two of the three attributes.
    """
    if k <= 8:
        codes = [(0, 0, 0), (0, 1, 1), (1, 0, 1), (1, 1, 0), (1, 1, 1), (1, 0, 0), (0, 1, 0), (0, 0, 1)]
        return codes[:k]
    base = math.ceil(round(k ** (1 / 3), 9))
    while base**3 < k:
        base += 1
    return [(c // (base * base), (c // base) % base, c % base) for c in range(k)]


def _level_fraction(level: int, levels: int) -> float:
    return 0.0 if levels <= 1 else level / (levels - 1)


def _normal_scores_discrete(values: np.ndarray, cdf, rng: np.random.Generator) -> np.ndarray:
    """Randomized PIT: continuous normal scores that preserve the order of discrete values."""
    lo = cdf(values - 1)
    hi = cdf(values)
    u = lo + rng.random(values.shape[0]) * (hi - lo)
    return sps.norm.ppf(np.clip(u, 1e-12, 1 - 1e-12))


def _coupled_latent(z_dev: np.ndarray, r: float, rng: np.random.Generator) -> np.ndarray:
    return r * z_dev + math.sqrt(max(0.0, 1.0 - r * r)) * rng.standard_normal(z_dev.shape[0])


def _developer_cdf(v):
    return sps.poisson.cdf(np.asarray(v) - 1, DEVELOPER_RATE)


def _comments_from_latent(z: np.ndarray) -> np.ndarray:
    return 1 + sps.poisson.ppf(sps.norm.cdf(z), COMMENT_RATE).astype(np.int64)


def _tau_b(x, y) -> float:
    from .stats import kendall_tau_b

    return kendall_tau_b(x, y).tau_b


@lru_cache(maxsize=64)
def comment_mixing(target: float, pilot: int = 20_000, seed: int = 12345) -> float:
    """Copula correlation whose discretized (developer, comment) tau-b hits ``target``.

    Ties in both count variables shrink tau-b below the latent tau, so the
    latent correlation is found by bisection on a fixed pilot sample.
    """
    if target == 0:
        return 0.0
    rng = np.random.default_rng(seed)
    dev = 1 + rng.poisson(DEVELOPER_RATE, pilot)
    z_dev = _normal_scores_discrete(dev, _developer_cdf, rng)
    eps = rng.standard_normal(pilot)

    def measured(r):
        z = r * z_dev + math.sqrt(max(0.0, 1 - r * r)) * eps
        return _tau_b(dev, _comments_from_latent(z))

    sign = 1.0 if target > 0 else -1.0
    goal = abs(target)
    lo, hi = 0.0, 1.0
    if measured(sign * hi) * sign <= goal:
        return sign
    for _ in range(30):
        mid = (lo + hi) / 2
        if measured(sign * mid) * sign < goal:
            lo = mid
        else:
            hi = mid
    return sign * (lo + hi) / 2


def injection_vocabulary(lexicon: Lexicon) -> dict[str, list[str]]:
    """Words that hit exactly one demo category, usable for rate injection."""
    vocab: dict[str, list[str]] = {}
    for idx, cat in enumerate(lexicon.categories):
        words = set()
        for pat in lexicon.patterns[cat]:
            word = pat.rstrip("*")
            if len(word) > 1 and lexicon.categories_for(word) == frozenset({idx}):
                words.add(word)
        if not words:
            raise InvalidConfig(f"no category-unique words for {cat!r}")
        vocab[cat] = sorted(words)
    return vocab


def background_vocabulary(lexicon: Lexicon) -> list[str]:
    return sorted({w for w in BACKGROUND_WORDS if not lexicon.categories_for(w)})


# ---------------------------------------------------------------- generation


def generate(config: GenConfig = GenConfig()) -> tuple[Dataset, GroundTruth]:
    config.validate()
    rng = np.random.default_rng(config.seed)
    n = int(config.n_items)
    k = int(config.n_latent_clusters)
    n_iter = int(config.n_iterations)

    levels = cluster_levels(k)
    n_levels = [max(code[j] for code in levels) + 1 for j in range(3)]
    time_levels = [code[1] for code in levels]
    long_cluster = max(range(k), key=lambda c: (time_levels[c], c))

    latent = rng.integers(0, k, n)

    # iteration: cluster-specific rounded normal
    it_center = np.array([n_iter * (0.15 + 0.6 * _level_fraction(c[0], n_levels[0])) for c in levels])
    iteration = np.rint(it_center[latent] + rng.normal(0.0, max(0.5, ITERATION_SD * n_iter), n))
    iteration = np.clip(iteration, 1, n_iter).astype(np.int64)

    # time taken: lognormal around a cluster-specific median
    t_mult = np.array([0.55 * (1.8 / 0.55) ** _level_fraction(c[1], n_levels[1]) for c in levels])
    t_mult[long_cluster] *= 1.7
    time_taken = config.median_time_days * t_mult[latent] * np.exp(rng.normal(0.0, TIME_LOG_SD, n))
    time_taken = np.round(time_taken, 3)

    # priority: mostly low (range floor) or high (top unit of the range)
    lo_p, hi_p = config.priority_range
    lo_share, hi_share = PRIORITY_HIGH_SHARE
    p_high = np.array([lo_share + (hi_share - lo_share) * _level_fraction(c[2], n_levels[2]) for c in levels])
    is_high = rng.random(n) < p_high[latent]
    high_draw = np.round(rng.uniform(max(lo_p, hi_p - 1.0), hi_p, n), 2)
    priority = np.where(is_high, high_draw, lo_p)

    developers = 1 + rng.poisson(DEVELOPER_RATE, n)
    z_dev = _normal_scores_discrete(developers, _developer_cdf, rng)
    roles = 1 + rng.binomial(developers, ROLE_SHARE)

    r_comment = comment_mixing(config.strength("comment_count"))
    comments = _comments_from_latent(_coupled_latent(z_dev, r_comment, rng))

    rates: dict[str, np.ndarray] = {}
    for cat in DEMO_CATEGORIES:
        tau = config.strength(cat)
        r = math.sin(math.pi * tau / 2)
        w = _coupled_latent(z_dev, r, rng)
        rates[cat] = np.round(BASE_RATES[cat] * np.exp(0.6 * w), 6)

    kinds = rng.choice(np.array(["support", "defect", "enhancement"]), size=n, p=[0.2, 0.5, 0.3])

    lexicon = load_demo_lexicon()
    inject = injection_vocabulary(lexicon)
    background = background_vocabulary(lexicon)
    cats = list(DEMO_CATEGORIES)

    items = []
    messages = []
    width = len(str(n))
    msg_no = 0
    for i in range(n):
        ident = f"WI-{i + 1:0{width}d}"
        items.append(WorkItem(
            ident, str(kinds[i]), int(iteration[i]), float(time_taken[i]), float(priority[i]),
            int(comments[i]), int(developers[i]), int(roles[i]),
        ))
        created = PROJECT_START + timedelta(days=ITERATION_DAYS * (int(iteration[i]) - 1 + float(rng.random())))
        probs = np.array([rates[c][i] for c in cats])
        probs = np.append(probs, max(0.0, 1.0 - probs.sum()))
        probs = probs / probs.sum()
        offsets = np.sort(rng.random(int(comments[i]))) * float(time_taken[i])
        for j in range(int(comments[i])):
            n_words = max(3, int(rng.poisson(config.words_per_message)))
            source = rng.choice(len(probs), size=n_words, p=probs)
            picks = rng.random(n_words)
            words = []
            for s, u in zip(source, picks):
                pool = inject[cats[s]] if s < len(cats) else background
                words.append(pool[int(u * len(pool))])
            text = " ".join(words)
            text = text[0].upper() + text[1:] + "."
            msg_no += 1
            stamp = (created + timedelta(days=float(offsets[j]))).replace(microsecond=0)
            author = f"P{int(rng.integers(1, PRACTITIONERS + 1)):03d}"
            messages.append(Message(f"M-{msg_no:07d}", ident, author, text, stamp))

    dataset = Dataset(tuple(items), tuple(messages), n_iter)
    truth = GroundTruth(
        tuple(int(c) for c in latent),
        int(long_cluster),
        {c: [float(v) for v in rates[c]] for c in cats},
        _config_record(config),
    )
    return dataset, truth


def _config_record(config: GenConfig) -> dict:
    return {
        "n_items": config.n_items,
        "n_iterations": config.n_iterations,
        "median_time_days": config.median_time_days,
        "priority_range": list(config.priority_range),
        "n_latent_clusters": config.n_latent_clusters,
        "coupling": [[a, b, v] for (a, b), v in sorted(config.coupling.items())],
        "words_per_message": config.words_per_message,
        "seed": config.seed,
    }


def write_generated(dataset: Dataset, truth: GroundTruth, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / WORK_ITEMS_FILE, out / MESSAGES_FILE, out / GROUND_TRUTH_FILE]
    write_work_items(dataset.work_items, paths[0])
    write_messages(dataset.messages, paths[1])
    paths[2].write_text(truth.to_json([w.id for w in dataset.work_items]), encoding="utf-8")
    return paths


def load_ground_truth(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def gaussian_benchmark(
    n: int = 400, d: int = 2, k: int = 4, separation: float = 4.0, seed: int = 0
) -> tuple[FeatureMatrix, np.ndarray]:
    """Isotropic unit-variance Gaussian blobs at binary-coded corners ``±separation``.

    Cluster ``c`` sits at ``separation * (2 * bit_j(c) - 1)`` on the first
    ``ceil(log2 k)`` axes and 0 elsewhere. Returns raw (unnormalized) data and
    the true labels.
    """
    bits = max(1, math.ceil(math.log2(k))) if k > 1 else 0
    if bits > d:
        raise InvalidConfig(f"{k} clusters need at least {bits} dimensions")
    centers = np.zeros((k, d))
    for c in range(k):
        for j in range(bits):
            centers[c, j] = separation * (2 * ((c >> (bits - 1 - j)) & 1) - 1)
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % k
    x = centers[labels] + rng.standard_normal((n, d))
    ids = tuple(f"g{i}" for i in range(n))
    names = tuple(f"x{j + 1}" for j in range(d))
    return FeatureMatrix(ids, names, x), labels

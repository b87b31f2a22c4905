"""Rank tests and a Bayesian linear model over per-seed scores.

Scores live in a :class:`ScoreTable` of ``(task, method, seed, metric,
score)`` records.  Two instruments are provided:

* Kruskal-Wallis with Dunn's post-hoc test of every method against the
  highest-mean method of a (task, metric) cell, two-sided, unadjusted.
* The linear model ``score ~ Normal(eta[task] + tau[method], eps[task])``
  with Normal priors on ``eta`` and ``tau`` and HalfCauchy on ``eps``,
  sampled by Metropolis-within-Gibbs.
"""

from __future__ import annotations

import csv
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np
from scipy import stats as sps

BLEU, CHRF3 = "BLEU", "CHRF3"
METRIC_NAMES = {"bleu": BLEU, "chrf3": CHRF3, "chrf": CHRF3}
CSV_HEADER = ("task", "method", "seed", "metric", "score")
BASELINE = "Subword-NMT"
SIGNIFICANCE = 0.05
RHAT_LIMIT = 1.05


def normalize_metric(name: str) -> str:
    try:
        return METRIC_NAMES[name.strip().lower()]
    except KeyError:
        raise ValueError(f"unknown metric {name!r}; expected BLEU or CHRF3") from None


# -- score tables -------------------------------------------------------------


class ScoreRecord(NamedTuple):
    task: str
    method: str
    seed: int
    metric: str
    score: float


@dataclass(frozen=True)
class ScoreTable:
    records: tuple[ScoreRecord, ...]

    def __post_init__(self):
        seen = set()
        clean = []
        for r in self.records:
            r = ScoreRecord(str(r.task), str(r.method), int(r.seed), normalize_metric(r.metric), float(r.score))
            if not r.task or not r.method:
                raise ValueError("empty task or method label")
            if not math.isfinite(r.score):
                raise ValueError(f"non-finite score for {r[:4]}")
            key = r[:4]
            if key in seen:
                raise ValueError(f"duplicate record {key}")
            seen.add(key)
            clean.append(r)
        object.__setattr__(self, "records", tuple(clean))

    def __len__(self):
        return len(self.records)

    def tasks(self, metric: str | None = None) -> list[str]:
        return sorted({r.task for r in self._select(metric)})

    def methods(self, metric: str | None = None) -> list[str]:
        return sorted({r.method for r in self._select(metric)})

    def metrics(self) -> list[str]:
        return sorted({r.metric for r in self.records})

    def _select(self, metric):
        if metric is None:
            return self.records
        metric = normalize_metric(metric)
        return [r for r in self.records if r.metric == metric]

    def cell(self, task: str, method: str, metric: str) -> list[float]:
        """Scores of one (task, method, metric) ordered by seed."""
        metric = normalize_metric(metric)
        rows = sorted((r.seed, r.score) for r in self.records
                      if r.task == task and r.method == method and r.metric == metric)
        return [s for _, s in rows]

    def groups(self, task: str, metric: str) -> dict[str, list[float]]:
        metric = normalize_metric(metric)
        out: dict[str, list[tuple[int, float]]] = defaultdict(list)
        for r in self.records:
            if r.task == task and r.metric == metric:
                out[r.method].append((r.seed, r.score))
        return {m: [s for _, s in sorted(v)] for m, v in sorted(out.items())}

    def shifted(self, delta: float) -> ScoreTable:
        return ScoreTable(tuple(r._replace(score=r.score + delta) for r in self.records))

    # -- CSV ---------------------------------------------------------------

    def dumps(self) -> str:
        lines = [",".join(CSV_HEADER)]
        for r in sorted(self.records, key=lambda r: (r.task, r.method, r.metric, r.seed)):
            lines.append(f"{_csv_field(r.task)},{_csv_field(r.method)},{r.seed},{r.metric},{r.score!r}")
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path) -> ScoreTable:
        with open(path, encoding="utf-8", newline="") as fh:
            return cls.from_rows(csv.reader(fh), source=str(path))

    @classmethod
    def from_rows(cls, rows: Iterable[Sequence[str]], source: str = "<rows>") -> ScoreTable:
        rows = iter(rows)
        header = next(rows, None)
        if header is None or tuple(h.strip().lower() for h in header) != CSV_HEADER:
            raise ValueError(f"{source}: expected header {','.join(CSV_HEADER)}")
        records = []
        for line_no, row in enumerate(rows, 2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 5:
                raise ValueError(f"{source}:{line_no}: expected 5 fields, got {len(row)}")
            task, method, seed, metric, score = (c.strip() for c in row)
            try:
                records.append(ScoreRecord(task, method, int(seed), normalize_metric(metric), float(score)))
            except ValueError as exc:
                raise ValueError(f"{source}:{line_no}: {exc}") from None
        return cls(tuple(records))


def _csv_field(text: str) -> str:
    if any(ch in text for ch in ',"\n'):
        return '"' + text.replace('"', '""') + '"'
    return text


# -- rank tests ---------------------------------------------------------------


def _tie_sum(values: np.ndarray) -> float:
    _, counts = np.unique(values, return_counts=True)
    return float(np.sum(counts.astype(float) ** 3 - counts))


def kruskal_wallis(groups: Sequence[Sequence[float]]) -> tuple[float, float]:
    """H statistic with tie correction and its chi-squared p-value."""
    if len(groups) < 2:
        raise ValueError("Kruskal-Wallis needs at least two groups")
    if any(len(g) == 0 for g in groups):
        raise ValueError("every group must be non-empty")
    pooled = np.concatenate([np.asarray(g, dtype=float) for g in groups])
    n = len(pooled)
    ranks = sps.rankdata(pooled)
    correction = 1.0 - _tie_sum(pooled) / (n**3 - n) if n > 1 else 0.0
    if correction <= 0:
        return 0.0, 1.0
    h = 0.0
    pos = 0
    for g in groups:
        r = ranks[pos : pos + len(g)].sum()
        h += r * r / len(g)
        pos += len(g)
    h = (12.0 / (n * (n + 1)) * h - 3.0 * (n + 1)) / correction
    h = max(h, 0.0)
    return h, float(sps.chi2.sf(h, len(groups) - 1))


@dataclass(frozen=True)
class DunnReport:
    task: str
    metric: str
    best: str
    means: dict[str, float]
    z: dict[str, float]
    p: dict[str, float]
    h: float = 0.0
    h_p: float = 1.0

    def tied_with_best(self, alpha: float = SIGNIFICANCE) -> list[str]:
        return [m for m in self.p if m == self.best or self.p[m] > alpha]


def dunn_z(groups: Sequence[Sequence[float]], best: int) -> list[tuple[float, float]]:
    """Dunn z and two-sided p of each group against group ``best``."""
    pooled = np.concatenate([np.asarray(g, dtype=float) for g in groups])
    n = len(pooled)
    ranks = sps.rankdata(pooled)
    mean_ranks = []
    pos = 0
    for g in groups:
        mean_ranks.append(ranks[pos : pos + len(g)].mean())
        pos += len(g)
    base = n * (n + 1) / 12.0 - _tie_sum(pooled) / (12.0 * (n - 1))
    out = []
    for i, g in enumerate(groups):
        var = base * (1.0 / len(g) + 1.0 / len(groups[best]))
        if i == best or var <= 1e-12:
            out.append((0.0, 1.0))
            continue
        z = (mean_ranks[best] - mean_ranks[i]) / math.sqrt(var)
        out.append((z, float(min(1.0, 2.0 * sps.norm.sf(abs(z))))))
    return out


def dunns_test(table: ScoreTable, task: str, metric: str) -> DunnReport:
    metric = normalize_metric(metric)
    groups = table.groups(task, metric)
    if len(groups) < 2:
        raise ValueError(f"{task}/{metric}: Dunn's test needs at least two methods")
    for m, g in groups.items():
        if len(g) < 2:
            raise ValueError(f"{task}/{metric}/{m}: need at least two seeds, got {len(g)}")
    methods = list(groups)
    means = {m: math.fsum(g) / len(g) for m, g in groups.items()}
    # highest mean; equal means resolved by method name
    best = min(methods, key=lambda m: (-means[m], m))
    results = dunn_z([groups[m] for m in methods], methods.index(best))
    h, h_p = kruskal_wallis([groups[m] for m in methods])
    return DunnReport(
        task, metric, best, means,
        {m: r[0] for m, r in zip(methods, results)},
        {m: r[1] for m, r in zip(methods, results)},
        h, h_p,
    )


def dunn_all(table: ScoreTable, metric: str | None = None) -> list[DunnReport]:
    metrics = [normalize_metric(metric)] if metric else table.metrics()
    return [dunns_test(table, t, m) for m in metrics for t in table.tasks(m)]


def best_count_report(table: ScoreTable, reports: Iterable[DunnReport],
                      alpha: float = SIGNIFICANCE) -> dict[str, dict[str, int]]:
    """metric -> method -> number of tasks where it was best or tied with best."""
    out: dict[str, dict[str, int]] = {}
    for metric in table.metrics():
        out[metric] = {m: 0 for m in table.methods(metric)}
    for rep in reports:
        counts = out.setdefault(rep.metric, {})
        for m in rep.tied_with_best(alpha):
            counts[m] = counts.get(m, 0) + 1
    return out


# -- Bayesian linear model ----------------------------------------------------


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, summary: PosteriorSummary | None = None):
        super().__init__(message)
        self.summary = summary


@dataclass(frozen=True)
class PriorConfig:
    eta_mean: float
    eta_sd: float
    tau_mean: float = 0.0
    tau_sd: float = 1.0
    eps_scale: float = 5.0

    @classmethod
    def for_metric(cls, metric: str) -> PriorConfig:
        metric = normalize_metric(metric)
        return cls(4.0, 3.0) if metric == BLEU else cls(15.0, 7.0)


@dataclass(frozen=True)
class SamplerConfig:
    chains: int = 4
    warmup: int = 2000
    draws: int = 2000
    seed: int = 0
    eps_steps: int = 2
    target_accept: float = 0.44
    rhat_limit: float = RHAT_LIMIT

    def __post_init__(self):
        if self.chains < 2:
            raise ValueError("at least two chains are needed for R-hat")
        if self.draws < 4 or self.warmup < 0:
            raise ValueError("draws must be >= 4 and warmup >= 0")


class ParamStats(NamedTuple):
    mean: float
    sd: float
    rhat: float
    ess: float


@dataclass(frozen=True)
class PosteriorSummary:
    metric: str
    tasks: tuple[str, ...]
    methods: tuple[str, ...]
    # parameter name -> draws with shape (chains, draws)
    draws: dict[str, np.ndarray] = field(repr=False)
    params: dict[str, ParamStats]
    accept_rate: float = 0.0

    def eta(self, task: str) -> ParamStats:
        return self.params[f"eta[{task}]"]

    def tau(self, method: str) -> ParamStats:
        return self.params[f"tau[{method}]"]

    def eps(self, task: str) -> ParamStats:
        return self.params[f"eps[{task}]"]

    @property
    def max_rhat(self) -> float:
        return max(p.rhat for p in self.params.values())


def split_rhat(x: np.ndarray) -> float:
    """Split R-hat of draws shaped (chains, draws)."""
    chains, n = x.shape
    half = n // 2
    if half < 2:
        return math.nan
    parts = np.concatenate([x[:, :half], x[:, n - half :]], axis=0)
    means = parts.mean(axis=1)
    w = parts.var(axis=1, ddof=1).mean()
    b = half * means.var(ddof=1)
    if w <= 0:
        return 1.0 if b <= 0 else math.inf
    var_plus = (half - 1) / half * w + b / half
    return float(math.sqrt(var_plus / w))


def effective_sample_size(x: np.ndarray) -> float:
    """Multi-chain ESS with Geyer's initial monotone sequence."""
    chains, n = x.shape
    if n < 4:
        return float(chains * n)
    centered = x - x.mean(axis=1, keepdims=True)
    size = 1 << (2 * n - 1).bit_length()
    spec = np.fft.rfft(centered, size, axis=1)
    acov = np.fft.irfft(spec * np.conj(spec), size, axis=1)[:, :n] / n
    chain_var = acov[:, 0] * n / (n - 1)
    w = chain_var.mean()
    var_plus = w * (n - 1) / n
    if chains > 1:
        var_plus += x.mean(axis=1).var(ddof=1)
    if var_plus <= 0:
        return float(chains * n)
    rho = 1.0 - (w - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    total = 0.0
    prev = math.inf
    t = 0
    while t + 1 < n:
        pair = rho[t] + rho[t + 1]
        if pair < 0:
            break
        pair = min(pair, prev)
        total += pair
        prev = pair
        t += 2
    tau = -1.0 + 2.0 * total
    return float(chains * n / max(tau, 1.0 / math.log10(chains * n + 10)))


class _CellStats:
    """Sufficient statistics of the score table per (task, method) cell."""

    def __init__(self, table: ScoreTable, metric: str, tasks, methods):
        t_index = {t: i for i, t in enumerate(tasks)}
        m_index = {m: j for j, m in enumerate(methods)}
        shape = (len(tasks), len(methods))
        self.n = np.zeros(shape)
        self.s = np.zeros(shape)
        self.q = np.zeros(shape)
        for r in table.records:
            if r.metric != metric:
                continue
            i, j = t_index[r.task], m_index[r.method]
            self.n[i, j] += 1
            self.s[i, j] += r.score
            self.q[i, j] += r.score * r.score
        self.n_task = self.n.sum(axis=1)

    def sum_sq(self, eta: np.ndarray, tau: np.ndarray) -> np.ndarray:
        mu = eta[:, None] + tau[None, :]
        return np.maximum((self.q - 2.0 * mu * self.s + self.n * mu * mu).sum(axis=1), 0.0)


def _draw_effects(cells: _CellStats, eps: np.ndarray, prior: PriorConfig, rng) -> np.ndarray:
    """Joint Gaussian draw of (eta, tau) given the noise scales."""
    n_t, n_m = cells.n.shape
    w = cells.n / (eps * eps)[:, None]
    prec = np.zeros((n_t + n_m, n_t + n_m))
    prec[:n_t, :n_t] = np.diag(w.sum(axis=1) + 1.0 / prior.eta_sd**2)
    prec[n_t:, n_t:] = np.diag(w.sum(axis=0) + 1.0 / prior.tau_sd**2)
    prec[:n_t, n_t:] = w
    prec[n_t:, :n_t] = w.T
    ws = cells.s / (eps * eps)[:, None]
    rhs = np.concatenate([
        ws.sum(axis=1) + prior.eta_mean / prior.eta_sd**2,
        ws.sum(axis=0) + prior.tau_mean / prior.tau_sd**2,
    ])
    chol = np.linalg.cholesky(prec)
    mean = np.linalg.solve(chol.T, np.linalg.solve(chol, rhs))
    return mean + np.linalg.solve(chol.T, rng.standard_normal(n_t + n_m))


def _log_eps_density(log_eps: np.ndarray, n: np.ndarray, ss: np.ndarray, scale: float) -> np.ndarray:
    # Normal likelihood, HalfCauchy prior, plus log|d eps / d log eps| = log eps
    eps2 = np.exp(2.0 * log_eps)
    return -n * log_eps - ss / (2.0 * eps2) - np.log1p(eps2 / scale**2) + log_eps


def _run_chain(cells: _CellStats, prior: PriorConfig, cfg: SamplerConfig, seed_seq) -> tuple[np.ndarray, float]:
    rng = np.random.default_rng(seed_seq)
    n_t, n_m = cells.n.shape
    log_eps = rng.normal(0.0, 1.0, n_t)
    step = np.full(n_t, 0.5)
    out = np.empty((cfg.draws, 2 * n_t + n_m))
    accepted = 0
    proposals = 0
    for it in range(cfg.warmup + cfg.draws):
        theta = _draw_effects(cells, np.exp(log_eps), prior, rng)
        eta, tau = theta[:n_t], theta[n_t:]
        ss = cells.sum_sq(eta, tau)
        current = _log_eps_density(log_eps, cells.n_task, ss, prior.eps_scale)
        for _ in range(cfg.eps_steps):
            proposal = log_eps + step * rng.standard_normal(n_t)
            new = _log_eps_density(proposal, cells.n_task, ss, prior.eps_scale)
            accept = np.log(rng.random(n_t)) < new - current
            log_eps = np.where(accept, proposal, log_eps)
            current = np.where(accept, new, current)
            if it < cfg.warmup:
                # Robbins-Monro adaptation of the per-task step, frozen after warmup
                gain = 1.0 / math.sqrt(it + 1.0)
                step *= np.exp(gain * (accept - cfg.target_accept))
            else:
                accepted += int(accept.sum())
                proposals += n_t
        if it >= cfg.warmup:
            out[it - cfg.warmup] = np.concatenate([eta, tau, np.exp(log_eps)])
    return out, accepted / max(proposals, 1)


def fit_bayes_linear(
    table: ScoreTable,
    metric: str,
    priors: PriorConfig | None = None,
    sampler: SamplerConfig | None = None,
    check: bool = True,
) -> PosteriorSummary:
    """Posterior of ``score ~ Normal(eta[task] + tau[method], eps[task])``.

    Each iteration draws (eta, tau) jointly from their Gaussian conditional
    and then updates every log eps by adaptive random-walk Metropolis.
    Raises :class:`ConvergenceError` when any split R-hat exceeds the limit
    (unless ``check`` is false).
    """
    metric = normalize_metric(metric)
    priors = priors or PriorConfig.for_metric(metric)
    sampler = sampler or SamplerConfig()
    tasks = tuple(table.tasks(metric))
    methods = tuple(table.methods(metric))
    if not tasks:
        raise ValueError(f"no {metric} scores in the table")
    cells = _CellStats(table, metric, tasks, methods)
    empty = [(tasks[i], methods[j]) for i, j in zip(*np.nonzero(cells.n == 0))]
    if empty:
        raise ValueError(f"empty cells: {empty[:5]}")

    seqs = np.random.SeedSequence(sampler.seed).spawn(sampler.chains)
    runs = [_run_chain(cells, priors, sampler, s) for s in seqs]
    stacked = np.stack([r[0] for r in runs])  # chains x draws x params
    names = [f"eta[{t}]" for t in tasks] + [f"tau[{m}]" for m in methods] + [f"eps[{t}]" for t in tasks]
    n_t, n_m = len(tasks), len(methods)
    order = list(range(n_t)) + list(range(n_t, n_t + n_m)) + list(range(n_t + n_m, 2 * n_t + n_m))
    draws = {name: np.ascontiguousarray(stacked[:, :, k]) for name, k in zip(names, order)}
    params = {
        name: ParamStats(float(d.mean()), float(d.std(ddof=1)), split_rhat(d), effective_sample_size(d))
        for name, d in draws.items()
    }
    summary = PosteriorSummary(metric, tasks, methods, draws, params,
                               float(np.mean([r[1] for r in runs])))
    if check:
        bad = {k: p.rhat for k, p in params.items() if not p.rhat <= sampler.rhat_limit}
        if bad:
            worst = max(bad, key=lambda k: bad[k])
            raise ConvergenceError(
                f"{len(bad)} parameters exceed R-hat {sampler.rhat_limit}; worst {worst} = {bad[worst]:.3f}",
                summary,
            )
    return summary


def pairwise_tau(summary: PosteriorSummary, baseline: str = BASELINE) -> dict[str, tuple[float, float]]:
    """Posterior mean and sd of ``tau[m] - tau[baseline]``, computed draw-wise."""
    key = f"tau[{baseline}]"
    if key not in summary.draws:
        raise KeyError(f"baseline method {baseline!r} not in the posterior")
    base = summary.draws[key]
    out = {}
    for m in summary.methods:
        diff = summary.draws[f"tau[{m}]"] - base
        out[m] = (float(diff.mean()), float(diff.std(ddof=1)) if m != baseline else 0.0)
    return out


# -- resampling of published aggregates -------------------------------------------


def resample_summary(
    summary: Mapping[tuple[str, str, str], tuple[float, float]],
    seeds: int = 5,
    seed: int = 0,
) -> ScoreTable:
    """Draw ``seeds`` scores per cell from Normal(mean, sd).

    ``summary`` maps (task, method, metric) to (mean, sd).  Cells are visited
    in sorted order so the output depends only on ``seed``.
    """
    rng = np.random.default_rng(seed)
    records = []
    for task, method, metric in sorted(summary):
        mean, sd = summary[(task, method, metric)]
        for s, x in enumerate(rng.normal(mean, sd, seeds)):
            records.append(ScoreRecord(task, method, s, metric, float(x)))
    return ScoreTable(tuple(records))

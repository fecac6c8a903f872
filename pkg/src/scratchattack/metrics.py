"""Fooling rate, average and median queries, aggregated per seed and across seeds."""
import statistics
from dataclasses import dataclass, field

from .attack import STATUS_ERRORED, STATUS_SKIPPED

__all__ = ["CampaignSummary", "SeedMetrics", "compute_metrics", "mean_std", "summarize"]


@dataclass
class SeedMetrics:
    """Metrics of one seed. AQ and MQ are ``None`` when nothing succeeded."""

    seed: int
    attacked: int
    successes: int
    fooling_rate: float
    avg_queries: float = None
    median_queries: float = None
    skipped_misclassified: int = 0
    errored: int = 0

    def to_dict(self):
        return dict(self.__dict__)


def compute_metrics(records, seed=None):
    """FR over attacked records; AQ and MQ over the successful ones only.

    Skipped (misclassified clean) and errored records are counted but never
    enter FR, AQ or MQ.
    """
    records = list(records)
    attacked = [r for r in records if r.attacked]
    wins = [r.queries for r in attacked if r.success]
    return SeedMetrics(
        seed=seed,
        attacked=len(attacked),
        successes=len(wins),
        fooling_rate=len(wins) / len(attacked) if attacked else 0.0,
        avg_queries=statistics.fmean(wins) if wins else None,
        median_queries=float(statistics.median(wins)) if wins else None,
        skipped_misclassified=sum(r.status == STATUS_SKIPPED for r in records),
        errored=sum(r.status == STATUS_ERRORED for r in records),
    )


def mean_std(values):
    """Mean and sample standard deviation of the non-missing values.

    The deviation is ``None`` for fewer than two values; both are ``None``
    when no value is present.
    """
    present = [float(v) for v in values if v is not None]
    if not present:
        return None, None
    std = statistics.stdev(present) if len(present) > 1 else None
    return statistics.fmean(present), std


@dataclass
class CampaignSummary:
    """Per-seed metrics plus their mean and sample standard deviation."""

    per_seed: list
    fooling_rate: float
    fooling_rate_std: float = None
    avg_queries: float = None
    avg_queries_std: float = None
    median_queries: float = None
    median_queries_std: float = None
    avg_l0: float = None
    skipped_misclassified: int = 0
    errored: int = 0
    n_records: int = 0
    config: dict = field(default_factory=dict)

    def to_dict(self):
        doc = dict(self.__dict__)
        doc["per_seed"] = [m.to_dict() for m in self.per_seed]
        return doc


def summarize(records, config=None):
    """Group records by seed, compute metrics per seed and aggregate them."""
    records = list(records)
    seeds = sorted({r.seed for r in records})
    per_seed = [compute_metrics([r for r in records if r.seed == s], seed=s) for s in seeds]
    fr, fr_std = mean_std(m.fooling_rate for m in per_seed if m.attacked)
    aq, aq_std = mean_std(m.avg_queries for m in per_seed)
    mq, mq_std = mean_std(m.median_queries for m in per_seed)
    l0s = [r.achieved_l0 for r in records if r.attacked and r.success]
    return CampaignSummary(
        per_seed=per_seed,
        fooling_rate=fr if fr is not None else 0.0,
        fooling_rate_std=fr_std,
        avg_queries=aq,
        avg_queries_std=aq_std,
        median_queries=mq,
        median_queries_std=mq_std,
        avg_l0=statistics.fmean(l0s) if l0s else None,
        skipped_misclassified=sum(m.skipped_misclassified for m in per_seed),
        errored=sum(m.errored for m in per_seed),
        n_records=len(records),
        config=dict(config or {}),
    )

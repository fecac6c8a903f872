"""Attacks over a manifest and several seeds, optionally in worker processes."""
import logging
import os
from concurrent.futures import ProcessPoolExecutor

from .attack import attack_image, optimizer_seed, targeted_attack_image
from .exceptions import DomainError
from .metrics import summarize

logger = logging.getLogger(__name__)

__all__ = ["run_attacks", "run_campaign"]


def _attack_one(entry, config, oracle, seed, strategy, targeted, optimizer_options):
    image, region = entry.load()
    common = dict(
        strategy=strategy,
        image_id=entry.image_id,
        seed=seed,
        optimizer_options=optimizer_options,
    )
    opt_seed = optimizer_seed(seed, entry.image_id)
    if targeted:
        if entry.target_label is None:
            raise DomainError(f"entry {entry.image_id!r} has no target_label")
        return targeted_attack_image(image, entry.target_label, region, config, oracle, opt_seed,
                                     true_label=entry.label, **common)
    return attack_image(image, entry.label, region, config, oracle, opt_seed, **common)


def _attack_job(args):
    return _attack_one(*args)


def run_attacks(manifest, config, oracle, seeds, strategy="ngo", workers=1, targeted=False,
                optimizer_options=None):
    """All (image, seed) attacks, returned sorted by ``(image_id, seed)``.

    Each optimizer is seeded from the campaign seed and the image id, so the
    result does not depend on ``workers`` or on scheduling order. Worker
    processes are used only when ``workers > 1`` and the oracle allows
    concurrent calls.
    """
    manifest, seeds = list(manifest), [int(s) for s in seeds]
    if not manifest:
        raise DomainError("manifest is empty")
    if not seeds:
        raise DomainError("at least one seed is required")
    jobs = [(e, config, oracle, s, strategy, targeted, optimizer_options) for e in manifest for s in seeds]
    if workers is None:
        workers = os.cpu_count() or 1
    if workers > 1 and not getattr(oracle, "concurrent_safe", False):
        logger.info("oracle does not allow concurrent calls; running sequentially")
        workers = 1
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            records = list(pool.map(_attack_job, jobs))
    else:
        records = [_attack_job(job) for job in jobs]
    return sorted(records, key=lambda r: (r.image_id, r.seed))


def run_campaign(manifest, config, oracle, seeds, strategy="ngo", workers=1, targeted=False,
                 optimizer_options=None):
    """Run every attack and summarize it.

    :returns: ``(summary, records)``
    """
    records = run_attacks(manifest, config, oracle, seeds, strategy, workers, targeted, optimizer_options)
    summary_config = {"attack": config.to_dict(), "strategy": strategy, "seeds": sorted(int(s) for s in seeds)}
    return summarize(records, summary_config), records

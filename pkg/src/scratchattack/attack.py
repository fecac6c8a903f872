"""
Per-image attack loop and attack records.

One query is charged per loop iteration: ask a vector, clip and paint the
scratches, query the oracle once, compute the loss, stop on success,
otherwise tell the loss back to the optimizer (attributed to the unclipped
vector). The clean-image prediction that decides whether an image is attacked
at all is not charged.
"""
import logging
import time
import zlib
from dataclasses import asdict, dataclass, field

import numpy as np

from .exceptions import DomainError, OracleProtocolError, OracleTransportError
from .losses import confidence_loss, margin_loss, targeted_cross_entropy
from .optimizers import SearchSpace, make_optimizer
from .oracle import QueryLedger
from .scratch import AttackConfig, ScratchParams, render_scratches, search_bounds, split_vector
from .validation import check_image, check_region

logger = logging.getLogger(__name__)

__all__ = [
    "AttackRecord",
    "SCHEMA_VERSION",
    "attack_image",
    "confidence_attack_image",
    "optimizer_seed",
    "replay_record",
    "targeted_attack_image",
]

SCHEMA_VERSION = 1

STATUS_OK = "ok"
STATUS_SKIPPED = "skipped"
STATUS_ERRORED = "errored"


@dataclass
class AttackRecord:
    """Outcome of one attack on one image with one seed.

    ``queries`` is the number of charged oracle calls: the iteration of the
    first success, or the query limit on failure. ``final_params`` holds the
    clipped scratches (``[x0, y0, ..., c0, c1, c2]`` per scratch) of the
    successful candidate, or of the best candidate when the attack failed.
    """

    image_id: str
    seed: int
    success: bool = False
    queries: int = 0
    final_params: list = None
    raw_params: list = None
    achieved_l0: int = 0
    final_loss: float = None
    status: str = STATUS_OK
    true_label: int = None
    target_label: int = None
    clean_label: int = None
    adv_label: int = None
    bezier_order: int = 2
    color_mode: str = None
    per_scratch_l0: int = None
    strategy: str = None
    wall_time: float = 0.0
    error: str = None
    extra: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    @property
    def attacked(self):
        """Counted in FR/AQ/MQ: neither skipped nor errored."""
        return self.status == STATUS_OK

    def scratch_params(self):
        if self.final_params is None:
            return None
        return [ScratchParams.from_vector(np.asarray(p), self.bezier_order) for p in self.final_params]

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, doc):
        doc = dict(doc)
        version = doc.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise DomainError(f"unsupported record schema version {version}")
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise DomainError(f"unknown record fields: {sorted(unknown)}")
        return cls(**doc)


def optimizer_seed(seed, image_id):
    """Seed for the optimizer of one (campaign seed, image) pair."""
    return np.random.SeedSequence([int(seed), zlib.crc32(str(image_id).encode())])


def _query(fn, image, max_errors):
    # transport failures are not charged; give up after max_errors of them
    failures = 0
    while True:
        try:
            return fn(image)
        except OracleTransportError:
            failures += 1
            if failures > max_errors:
                raise


def _run(image, region, config, strategy, seed, evaluate, optimizer_options, max_errors):
    """Shared loop. ``evaluate(scores_or_answer)`` returns ``(loss, success)``."""
    image = check_image(image)
    region = check_region(region, image.shape)
    lower, upper = search_bounds(image.shape, config.bezier_order, config.scratch_count)
    space = SearchSpace(lower, upper)
    options = dict(optimizer_options or {})
    if strategy == "rs":
        options.setdefault("schedule_budget", 10_000)
    opt = make_optimizer(strategy, space, seed, **options)
    best = {"loss": np.inf, "clipped": None, "raw": None, "l0": 0, "answer": None}
    ledger = QueryLedger(config.query_limit)
    while ledger.remaining:
        v = opt.ask()
        params = split_vector(v, config.bezier_order, config.scratch_count)
        adv, l0, clipped, _ = render_scratches(
            image, params, config.per_scratch_l0, region, config.color_mode
        )
        answer = _query(evaluate.query, adv, max_errors)
        ledger.charge()
        loss, success = evaluate(answer)
        if success or loss < best["loss"]:
            best.update(loss=loss, clipped=clipped, raw=params, l0=l0, answer=answer)
        if success:
            return ledger.count, True, best
        opt.tell(v, loss)
    return ledger.count, False, best


class _Objective:
    def __init__(self, query, fn):
        self.query = query
        self.fn = fn

    def __call__(self, answer):
        return self.fn(answer)


def _finish(record, outcome, t_start):
    queries, success, best = outcome
    record.success = success
    record.queries = queries
    if best["clipped"] is not None:
        record.final_params = [p.to_list() for p in best["clipped"]]
        record.raw_params = [p.to_list() for p in best["raw"]]
        record.final_loss = float(best["loss"])
        record.achieved_l0 = best["l0"]
        answer = best["answer"]
        if isinstance(answer, np.ndarray):
            record.adv_label = int(np.argmax(answer))
        elif isinstance(answer, tuple):
            record.extra = {"confidence": answer[0], "caption": answer[1]}
    record.wall_time = time.perf_counter() - t_start
    return record


def _base_record(image_id, seed, config, strategy):
    return AttackRecord(
        image_id=str(image_id),
        seed=int(seed),
        bezier_order=config.bezier_order,
        color_mode=config.color_mode.value,
        per_scratch_l0=config.per_scratch_l0,
        strategy=strategy,
    )


def _errored(record, exc, t_start):
    record.status = STATUS_ERRORED
    record.error = f"{type(exc).__name__}: {exc}"
    record.wall_time = time.perf_counter() - t_start
    logger.warning("attack on %s (seed %s) errored: %s", record.image_id, record.seed, record.error)
    return record


def attack_image(image, true_label, region, config, oracle, optimizer_seed=0, *,
                 strategy="ngo", image_id="", seed=None, optimizer_options=None, max_errors=3):
    """Untargeted attack minimizing the margin loss; success iff margin < 0.

    Images that the oracle already misclassifies are not attacked and come
    back with ``status="skipped"``. Oracle transport errors are retried
    (uncharged) up to ``max_errors`` times; beyond that, or on a protocol
    error, the record is returned with ``status="errored"``.

    :param optimizer_seed: seed (or ``SeedSequence``) of the optimizer.
    :param seed: campaign seed stored in the record (defaults to
        ``optimizer_seed`` when that is an int).
    """
    t_start = time.perf_counter()
    record = _base_record(image_id, seed if seed is not None else _int_seed(optimizer_seed), config, strategy)
    record.true_label = int(true_label)
    try:
        clean = _query(oracle.classify, check_image(image), max_errors)
        record.clean_label = clean.label
        if clean.label != true_label:
            record.status = STATUS_SKIPPED
            record.wall_time = time.perf_counter() - t_start
            return record

        def evaluate(scores):
            loss = margin_loss(scores, true_label)
            return loss, loss < 0

        objective = _Objective(oracle.scores, evaluate)
        outcome = _run(image, region, config, strategy, optimizer_seed, objective,
                       optimizer_options, max_errors)
    except (OracleTransportError, OracleProtocolError) as exc:
        return _errored(record, exc, t_start)
    return _finish(record, outcome, t_start)


def targeted_attack_image(image, target_label, region, config, oracle, optimizer_seed=0, *,
                          true_label=None, strategy="ngo", image_id="", seed=None,
                          optimizer_options=None, max_errors=3):
    """Targeted attack minimizing the cross entropy towards ``target_label``.

    Success is decided by ``argmax(scores) == target_label`` alone. When
    ``true_label`` is given, misclassified clean images are skipped as in
    :func:`attack_image`.
    """
    t_start = time.perf_counter()
    record = _base_record(image_id, seed if seed is not None else _int_seed(optimizer_seed), config, strategy)
    record.target_label = int(target_label)
    record.true_label = None if true_label is None else int(true_label)
    try:
        clean = _query(oracle.classify, check_image(image), max_errors)
        record.clean_label = clean.label
        if true_label is not None and clean.label != true_label:
            record.status = STATUS_SKIPPED
            record.wall_time = time.perf_counter() - t_start
            return record
        if clean.label == target_label:
            raise DomainError("target_label must differ from the clean prediction")

        def evaluate(scores):
            loss = targeted_cross_entropy(scores, target_label)
            return loss, int(np.argmax(scores)) == target_label

        objective = _Objective(oracle.scores, evaluate)
        outcome = _run(image, region, config, strategy, optimizer_seed, objective,
                       optimizer_options, max_errors)
    except (OracleTransportError, OracleProtocolError) as exc:
        return _errored(record, exc, t_start)
    return _finish(record, outcome, t_start)


def confidence_attack_image(image, region, config, oracle, optimizer_seed=0, *, success_fn=None,
                            strategy="ngo", image_id="", seed=None, optimizer_options=None,
                            max_errors=3):
    """Attack a captioning-style oracle by minimizing its reported confidence.

    ``oracle.confidence(image)`` must return ``(confidence, caption)``. Without
    ``success_fn`` the loop always spends the whole budget and the record
    keeps the lowest confidence reached (``extra["confidence"]`` and
    ``extra["caption"]``); with it, the loop stops as soon as
    ``success_fn(confidence, caption)`` is true.
    """
    t_start = time.perf_counter()
    record = _base_record(image_id, seed if seed is not None else _int_seed(optimizer_seed), config, strategy)
    try:
        clean_conf, clean_caption = _query(oracle.confidence, check_image(image), max_errors)
        record.extra = {"clean_confidence": clean_conf, "clean_caption": clean_caption}

        def evaluate(answer):
            conf, caption = answer
            loss = confidence_loss(conf)
            return loss, bool(success_fn(conf, caption)) if success_fn else False

        objective = _Objective(oracle.confidence, evaluate)
        outcome = _run(image, region, config, strategy, optimizer_seed, objective,
                       optimizer_options, max_errors)
    except (OracleTransportError, OracleProtocolError) as exc:
        return _errored(record, exc, t_start)
    clean_extra = record.extra
    _finish(record, outcome, t_start)
    record.extra = {**clean_extra, **record.extra}
    return record


def _int_seed(seed):
    return int(seed) if isinstance(seed, (int, np.integer)) else 0


def replay_record(record, image, region=None, color_mode=None):
    """Re-apply a record's ``final_params`` to ``image``.

    :returns: ``(perturbed, total_l0)``
    """
    params = record.scratch_params()
    if not params:
        raise DomainError(f"record {record.image_id!r} carries no scratch parameters")
    image = check_image(image)
    region = check_region(region, image.shape)
    adv, l0, _, _ = render_scratches(
        image, params, record.per_scratch_l0, region, color_mode or record.color_mode
    )
    return adv, l0


def config_from_record(record, scratch_count, query_limit):
    return AttackConfig(
        scratch_count=scratch_count,
        per_scratch_l0=record.per_scratch_l0,
        bezier_order=record.bezier_order,
        color_mode=record.color_mode,
        query_limit=query_limit,
    )

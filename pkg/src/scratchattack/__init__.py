"""Sparse black-box adversarial attacks with Bézier-curve scratches."""
from .attack import AttackRecord, attack_image, confidence_attack_image, replay_record, targeted_attack_image
from .bezier import BezierCurve, PixelSupport, evaluate, rasterize, subdivide, trace
from .campaign import run_attacks, run_campaign
from .defenses import DefenseSpec, JPEGCompression, MedianFilter, defend, jpeg_roundtrip, median3x3
from .estimator import ScratchAttack
from .exceptions import (
    ConfigError,
    ContractError,
    DomainError,
    ManifestError,
    OracleProtocolError,
    OracleTransportError,
    ScratchAttackError,
)
from .losses import confidence_loss, margin_loss, targeted_cross_entropy
from .metrics import CampaignSummary, compute_metrics, summarize
from .optimizers import (
    DifferentialEvolution,
    NGOLike,
    ParticleSwarm,
    RandomSearch,
    SearchSpace,
    make_optimizer,
    minimize,
)
from .oracle import HTTPOracle, ModelOracle, Network, QueryLedger, StubOracle, toy_oracle
from .scratch import AttackConfig, ColorMode, ScratchParams, apply_scratches, clip_scratch

__version__ = "0.1.0"

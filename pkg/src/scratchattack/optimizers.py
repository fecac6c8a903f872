"""
Gradient-free optimizers with an ask/tell interface over a box.

Every strategy hands out candidates generation by generation. Candidates of
the current generation can be asked one after the other; the next generation
is only built once every asked candidate has been told, so calling
:meth:`Optimizer.ask` while an exhausted generation still waits for losses is
a :class:`~scratchattack.exceptions.ContractError`.

Strategies:

``rs``
    Random search around the incumbent with a decaying, piecewise constant
    step schedule (Sparse-RS style).
``de``
    Differential evolution, rand/1/bin, with periodic population restarts.
``pso``
    Global-best particle swarm with constriction coefficients.
``ngo``
    An adaptive (mu + lambda) evolution strategy with the 1/5 success rule.
    It stands in for Nevergrad's NGOpt meta-optimizer and does not reproduce
    its trajectories.
"""
from collections import defaultdict, deque
from dataclasses import dataclass

import numpy as np

from .exceptions import ContractError, DomainError

__all__ = [
    "DifferentialEvolution",
    "MinimizeResult",
    "NGOLike",
    "Optimizer",
    "ParticleSwarm",
    "RandomSearch",
    "SearchSpace",
    "STRATEGIES",
    "make_optimizer",
    "minimize",
]


@dataclass(frozen=True)
class SearchSpace:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.array(self.lower, dtype=float).ravel()
        upper = np.array(self.upper, dtype=float).ravel()
        if lower.shape != upper.shape or lower.size == 0:
            raise DomainError("lower and upper must be non-empty vectors of equal length")
        if not np.all(lower < upper):
            raise DomainError("every lower bound must be strictly below its upper bound")
        lower.flags.writeable = upper.flags.writeable = False
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dim(self):
        return self.lower.size

    @property
    def width(self):
        return self.upper - self.lower

    def clip(self, x):
        return np.clip(x, self.lower, self.upper)

    def uniform(self, rng, size=None):
        shape = (self.dim,) if size is None else (size, self.dim)
        return self.lower + rng.random(shape) * self.width

    def contains(self, x):
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))


class Optimizer:
    """Ask/tell bookkeeping shared by all strategies.

    Subclasses implement ``_next_generation()`` returning an ``(m, dim)`` array
    and ``_update(losses)`` receiving the told losses of that generation in
    ask order.
    """

    name = None

    def __init__(self, space, seed=None):
        self.space = space
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.best_x = None
        self.best_loss = np.inf
        self.n_asked = 0
        self.n_told = 0
        self._batch = None
        self._losses = None
        self._next = 0
        self._pending = defaultdict(deque)

    def ask(self):
        if self._batch is None or self._next == len(self._batch):
            if self._batch is not None and np.isnan(self._losses).any():
                raise ContractError("previous generation has candidates that were never told")
            self._batch = self.space.clip(np.atleast_2d(self._next_generation()))
            self._losses = np.full(len(self._batch), np.nan)
            self._next = 0
        x = self._batch[self._next].copy()
        self._pending[x.tobytes()].append(self._next)
        self._next += 1
        self.n_asked += 1
        return x

    def tell(self, candidate, loss):
        x = np.asarray(candidate, dtype=float)
        queue = self._pending.get(x.tobytes())
        if not queue:
            raise ContractError("told a candidate that was not asked (or was already told)")
        slot = queue.popleft()
        if not queue:
            del self._pending[x.tobytes()]
        loss = float(loss)
        if np.isnan(loss):
            raise DomainError("loss must not be NaN")
        self._losses[slot] = loss
        self.n_told += 1
        if loss < self.best_loss:
            self.best_loss = loss
            self.best_x = x.copy()
        if self._next == len(self._batch) and not np.isnan(self._losses).any():
            self._update(self._losses.copy())

    def _next_generation(self):
        raise NotImplementedError

    def _update(self, losses):
        raise NotImplementedError


class RandomSearch(Optimizer):
    """(1+1) random search with a Sparse-RS style step schedule.

    Each candidate copies the incumbent and redraws a random subset of
    coordinates within ``alpha * (upper - lower)`` of their current value.
    ``alpha`` starts at 0.5 and halves when the number of told candidates
    passes 1%, 5%, 10%, 25%, 50% and 75% of ``schedule_budget``, never going
    below 0.03125. The subset has ``max(1, ceil(2 * alpha * dim))``
    coordinates. Equal losses replace the incumbent, which lets the search
    drift across plateaus.
    """

    name = "rs"
    milestones = (0.01, 0.05, 0.10, 0.25, 0.50, 0.75)
    alpha_init = 0.5
    alpha_min = 0.03125

    def __init__(self, space, seed=None, schedule_budget=10_000):
        super().__init__(space, seed)
        self.schedule_budget = schedule_budget
        self.x = None
        self.loss = np.inf

    def alpha(self):
        done = self.n_told / self.schedule_budget
        halvings = sum(done >= m for m in self.milestones)
        return max(self.alpha_init / 2**halvings, self.alpha_min)

    def _next_generation(self):
        if self.x is None:
            return self.space.uniform(self.rng)
        alpha = self.alpha()
        dim = self.space.dim
        n_mut = max(1, int(np.ceil(2 * alpha * dim)))
        idx = self.rng.choice(dim, size=n_mut, replace=False)
        cand = self.x.copy()
        step = self.rng.uniform(-alpha, alpha, size=n_mut) * self.space.width[idx]
        cand[idx] += step
        return cand

    def _update(self, losses):
        if losses[0] <= self.loss:
            self.loss = losses[0]
            self.x = self._batch[0].copy()


class DifferentialEvolution(Optimizer):
    """Generational DE/rand/1/bin with clamping and periodic restarts.

    Generation 0 is ``popsize`` uniform samples. Afterwards, for every target
    ``i``: three distinct indices ``r1, r2, r3 != i`` are drawn, the mutant is
    ``x[r1] + F (x[r2] - x[r3])``, and the trial takes mutant coordinates where
    ``rng.random(dim) < CR`` (plus one forced index ``jrand``) and target
    coordinates elsewhere, then is clamped to the box. A trial replaces its
    target when its loss is not worse. Every ``restart_every`` generations
    the population is redrawn uniformly except for one slot that keeps the
    best-so-far point.

    ``F = 0.6`` rather than the textbook 0.5: with only 20 members in 9
    dimensions, ``F = 0.5`` lets the population collapse short of the optimum
    on a sizeable fraction of seeds.
    """

    name = "de"

    def __init__(self, space, seed=None, popsize=20, F=0.6, CR=0.9, restart_every=200):
        super().__init__(space, seed)
        if popsize < 4:
            raise DomainError("DE/rand/1 needs a population of at least 4")
        self.popsize = popsize
        self.F = F
        self.CR = CR
        self.restart_every = restart_every
        self.population = None
        self.fitness = None
        self.generation = 0
        self._since_restart = 0
        self._initializing = True
        self.last_mask = None

    def _next_generation(self):
        if self._initializing:
            pop = self.space.uniform(self.rng, self.popsize)
            if self.best_x is not None:
                pop[0] = self.best_x
            return pop
        n, dim = self.popsize, self.space.dim
        trials = np.empty((n, dim))
        masks = np.empty((n, dim), dtype=bool)
        for i in range(n):
            choices = [j for j in range(n) if j != i]
            r1, r2, r3 = self.rng.choice(choices, size=3, replace=False)
            mutant = self.population[r1] + self.F * (self.population[r2] - self.population[r3])
            mask = self.rng.random(dim) < self.CR
            mask[self.rng.integers(dim)] = True
            trials[i] = np.where(mask, mutant, self.population[i])
            masks[i] = mask
        self.last_mask = masks
        return trials

    def _update(self, losses):
        if self._initializing:
            self.population = self._batch.copy()
            self.fitness = losses
            self._initializing = False
            self._since_restart = 0
            return
        better = losses <= self.fitness
        self.population[better] = self._batch[better]
        self.fitness[better] = losses[better]
        self.generation += 1
        self._since_restart += 1
        if self.restart_every and self._since_restart >= self.restart_every:
            self._initializing = True


class ParticleSwarm(Optimizer):
    """Synchronous global-best PSO with constriction coefficients.

    ``v <- w v + c1 r1 (pbest - x) + c2 r2 (gbest - x)``, velocities clamped to
    ``vmax_frac * (upper - lower)``, positions clamped to the box.
    """

    name = "pso"

    def __init__(self, space, seed=None, swarm_size=40, inertia=0.7298,
                 cognitive=1.49618, social=1.49618, vmax_frac=0.5):
        super().__init__(space, seed)
        self.swarm_size = swarm_size
        self.inertia = inertia
        self.cognitive = cognitive
        self.social = social
        self.vmax = vmax_frac * space.width
        self.position = space.uniform(self.rng, swarm_size)
        self.velocity = np.clip(
            0.5 * (space.uniform(self.rng, swarm_size) - self.position), -self.vmax, self.vmax
        )
        self.pbest = self.position.copy()
        self.pbest_loss = np.full(swarm_size, np.inf)
        self._first = True

    def _next_generation(self):
        if self._first:
            self._first = False
            return self.position
        gbest = self.pbest[np.argmin(self.pbest_loss)]
        shape = self.position.shape
        r1, r2 = self.rng.random(shape), self.rng.random(shape)
        self.velocity = (
            self.inertia * self.velocity
            + self.cognitive * r1 * (self.pbest - self.position)
            + self.social * r2 * (gbest - self.position)
        )
        self.velocity = np.clip(self.velocity, -self.vmax, self.vmax)
        self.position = self.space.clip(self.position + self.velocity)
        return self.position

    def _update(self, losses):
        better = losses < self.pbest_loss
        self.pbest[better] = self._batch[better]
        self.pbest_loss[better] = losses[better]


class NGOLike(Optimizer):
    """(mu + lambda) evolution strategy with per-coordinate step sizes.

    Generation 0 draws ``lam`` uniform points; the best ``mu`` become parents.
    Each later generation creates ``lam`` children, each from a uniformly
    chosen parent plus ``sigma * N(0, I)``. After evaluation the step sizes
    grow by ``1 / 0.85`` when more than a fifth of the children beat their
    parent and shrink by ``0.85`` when fewer do. Parents and children compete
    for the ``mu`` slots, children winning ties. Once every step size has
    shrunk below ``restart_sigma`` of the box width the parents are redrawn
    uniformly and the step sizes reset (best-so-far is kept).
    """

    name = "ngo"

    def __init__(self, space, seed=None, mu=8, lam=16, sigma_init=0.3,
                 adapt=0.85, restart_sigma=1e-3):
        super().__init__(space, seed)
        self.mu = mu
        self.lam = lam
        self.sigma_init = sigma_init
        self.adapt = adapt
        self.restart_sigma = restart_sigma
        self.sigma = sigma_init * space.width
        self.parents = None
        self.parent_loss = None
        self._parent_of = None
        self.restarts = 0

    def _next_generation(self):
        if self.parents is None:
            return self.space.uniform(self.rng, self.lam)
        self._parent_of = self.rng.integers(self.mu, size=self.lam)
        noise = self.rng.standard_normal((self.lam, self.space.dim))
        return self.parents[self._parent_of] + noise * self.sigma

    def _update(self, losses):
        if self.parents is None:
            order = np.argsort(losses, kind="stable")[: self.mu]
            self.parents = self._batch[order].copy()
            self.parent_loss = losses[order].copy()
            return
        rate = np.mean(losses < self.parent_loss[self._parent_of])
        if rate > 0.2:
            self.sigma = np.minimum(self.sigma / self.adapt, self.space.width)
        elif rate < 0.2:
            self.sigma = self.sigma * self.adapt
        pool = np.vstack([self._batch, self.parents])
        pool_loss = np.concatenate([losses, self.parent_loss])
        order = np.argsort(pool_loss, kind="stable")[: self.mu]
        self.parents = pool[order].copy()
        self.parent_loss = pool_loss[order].copy()
        if np.all(self.sigma < self.restart_sigma * self.space.width):
            self.restarts += 1
            self.parents = None
            self.sigma = self.sigma_init * self.space.width


STRATEGIES = {
    "rs": RandomSearch,
    "de": DifferentialEvolution,
    "pso": ParticleSwarm,
    "ngo": NGOLike,
}


def make_optimizer(strategy, space, seed=None, **options):
    try:
        cls = STRATEGIES[str(strategy).lower()]
    except KeyError:
        raise DomainError(f"unknown strategy {strategy!r}; choose from {sorted(STRATEGIES)}") from None
    return cls(space, seed=seed, **options)


@dataclass
class MinimizeResult:
    best_vector: np.ndarray
    best_loss: float
    evals_used: int
    aborted: bool = False
    error: BaseException = None


def minimize(space, objective, budget, seed=None, strategy="de", **options):
    """Minimize ``objective`` over ``space`` with at most ``budget`` evaluations.

    If the objective raises, the search stops and the result carries the
    best point seen so far with ``aborted=True`` and the exception in
    ``error``.
    """
    if budget < 1:
        raise DomainError(f"budget must be >= 1, got {budget}")
    if strategy == "rs":
        options.setdefault("schedule_budget", budget)
    opt = make_optimizer(strategy, space, seed, **options)
    used = 0
    for _ in range(budget):
        x = opt.ask()
        try:
            loss = objective(x)
        except Exception as exc:  # noqa: BLE001 - reported to the caller
            return MinimizeResult(opt.best_x, opt.best_loss, used, aborted=True, error=exc)
        used += 1
        opt.tell(x, loss)
    return MinimizeResult(opt.best_x, opt.best_loss, used)

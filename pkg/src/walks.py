"""
Monte-Carlo simulation of the continuous-time walks generated by -H0:
paths, hitting times, killing and occupation times
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Set, Tuple, Union

import numpy as np
from scipy import stats
from tqdm.auto import tqdm

import config
from src.core import Family, ModelSpec, Potential, Seed, Site
from src.errors import FamilyMismatchError, ValidationError

logger = logging.getLogger(__name__)

# stream tags keep per-walk, per-chunk and one-step draws independent
_WALK_STREAM = 1
_CHUNK_STREAM = 2
_SAMPLE_STREAM = 3


@dataclass(frozen=True)
class WalkConfig:
    """What to simulate and for how long"""

    model: ModelSpec
    start: Site
    t_cap: float
    step_cap: int = 10 ** 7
    seed: Seed = field(default_factory=Seed)
    n_walks: int = 1000
    workers: Optional[int] = None
    progress: bool = False

    def __post_init__(self):
        if not self.t_cap > 0 or self.step_cap <= 0:
            raise ValidationError("Walk caps must be positive", field='walk.t_cap')
        if self.n_walks < 1:
            raise ValidationError(f"n_walks must be at least 1, got {self.n_walks}", field='walk.n_walks')
        if self.model.family == Family.FRACTIONAL:
            raise FamilyMismatchError("Fractional walks have heavy-tailed jumps and are not simulated")


@dataclass
class WalkStats:
    """Monte-Carlo mean with its standard error"""

    estimate: float
    std_error: float
    n_effective: int
    censored_fraction: float
    samples: Optional[np.ndarray] = None
    method: str = 'mc'

    def __post_init__(self):
        if self.std_error < 0 or not 0.0 <= self.censored_fraction <= 1.0:
            raise ValidationError("Walk statistics out of range")

    def within(self, target: float, sigmas: float = 3.0) -> bool:
        return abs(self.estimate - target) <= sigmas * self.std_error + 1e-12

    def to_dict(self):
        return {'estimate': self.estimate, 'std_error': self.std_error,
                'n_effective': self.n_effective, 'censored_fraction': self.censored_fraction,
                'method': self.method}


def _mean_stats(values: np.ndarray, censored: np.ndarray, samples: Optional[np.ndarray] = None) -> WalkStats:
    n = values.size
    se = float(values.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return WalkStats(float(values.mean()), se, n, float(censored.mean()) if n else 0.0, samples)


# Jump mechanics

class Stepper:
    """Holding rate and jump law of one family"""

    def __init__(self, model: ModelSpec):
        self.model = model

    def rate(self, x: Site) -> float:
        raise NotImplementedError

    def jump(self, x: Site, rng: np.random.Generator) -> Tuple[Optional[Site], int]:
        """Next site (None when the walk is killed) and the jump rank"""
        raise NotImplementedError


class LatticeStepper(Stepper):
    def __init__(self, model: ModelSpec):
        super().__init__(model)
        d = model.dim
        self.moves = [tuple((s if i == k else 0) for i in range(d)) for k in range(d) for s in (1, -1)]

    def rate(self, x: Site) -> float:
        return 2.0 * self.model.dim

    def jump(self, x: Site, rng: np.random.Generator) -> Tuple[Optional[Site], int]:
        move = self.moves[int(rng.integers(len(self.moves)))]
        return Site(tuple(a + b for a, b in zip(x.coords, move))), 1


class HierarchicalStepper(Stepper):
    """Unit-rate clock; rank r ~ a_r, then a uniform site of the rank-r cube"""

    def rate(self, x: Site) -> float:
        return 1.0

    def jump(self, x: Site, rng: np.random.Generator) -> Tuple[Optional[Site], int]:
        nu = self.model.nu
        r = int(rng.geometric(1.0 - self.model.p))
        offset = 0
        for _ in range(r):
            offset = offset * nu + int(rng.integers(nu))
        block = nu ** r
        return Site(((x.index // block) * block + offset,)), r


class GraphStepper(Stepper):
    """Rates from the generator table; the row defect is a killing rate"""

    def __init__(self, model: ModelSpec):
        super().__init__(model)
        table = model.generator_table
        matrix = table.to_matrix().tocsr()
        self.sites = table.sites
        self.index = {s: i for i, s in enumerate(self.sites)}
        self.rows: List[Tuple[np.ndarray, np.ndarray, float]] = []
        for i in range(matrix.shape[0]):
            start, end = matrix.indptr[i], matrix.indptr[i + 1]
            cols, vals = matrix.indices[start:end], matrix.data[start:end]
            diag = float(vals[cols == i].sum())
            off = cols != i
            targets, weights = cols[off], -vals[off]
            death = max(diag - float(weights.sum()), 0.0)
            self.rows.append((targets, np.append(weights, death) / diag if diag > 0 else weights, diag))

    def rate(self, x: Site) -> float:
        return self.rows[self.index[x]][2]

    def jump(self, x: Site, rng: np.random.Generator) -> Tuple[Optional[Site], int]:
        targets, probs, _ = self.rows[self.index[x]]
        k = int(rng.choice(probs.size, p=probs / probs.sum()))
        if k >= targets.size:
            return None, 0
        return self.sites[int(targets[k])], 1


def make_stepper(model: ModelSpec) -> Stepper:
    if model.family in (Family.Z1, Family.Z2):
        return LatticeStepper(model)
    if model.family == Family.HIERARCHICAL:
        return HierarchicalStepper(model)
    if model.family == Family.GENERAL_GRAPH:
        return GraphStepper(model)
    raise FamilyMismatchError(f"No walk for family {model.family.value}")


@dataclass
class WalkPath:
    """Arrival times and sites; the walk holds at sites[i] on [times[i], times[i+1])"""

    times: List[float]
    sites: List[Site]
    ranks: List[int]
    end_time: float
    killed: bool = False
    censored: bool = False

    def holding_intervals(self) -> Iterable[Tuple[Site, float, float]]:
        ends = self.times[1:] + [self.end_time]
        return zip(self.sites, self.times, ends)


StopRule = Callable[[Site], bool]


def _walk(stepper: Stepper, start: Site, t_cap: float, step_cap: int, rng: np.random.Generator,
          stop: Optional[StopRule] = None) -> WalkPath:
    times, sites, ranks = [0.0], [start], [0]
    t, x = 0.0, start
    if stop is not None and stop(x):
        return WalkPath(times, sites, ranks, 0.0)
    for _ in range(step_cap):
        rate = stepper.rate(x)
        if rate <= 0:
            return WalkPath(times, sites, ranks, t_cap)
        t += rng.exponential(1.0 / rate)
        if t > t_cap:
            return WalkPath(times, sites, ranks, t_cap, censored=True)
        y, r = stepper.jump(x, rng)
        if y is None:
            return WalkPath(times, sites, ranks, t, killed=True)
        times.append(t)
        sites.append(y)
        ranks.append(r)
        x = y
        if stop is not None and stop(x):
            return WalkPath(times, sites, ranks, t)
    return WalkPath(times, sites, ranks, t, censored=True)


def simulate_walk(cfg: WalkConfig, walk_index: int = 0, stop: Optional[StopRule] = None) -> WalkPath:
    """One path, deterministic in (seed, walk_index)"""
    rng = cfg.seed.rng(_WALK_STREAM, walk_index)
    return _walk(make_stepper(cfg.model), cfg.start, cfg.t_cap, cfg.step_cap, rng, stop)


def _map_walks(cfg: WalkConfig, fn: Callable[[WalkPath], float], stop: Optional[StopRule] = None,
               desc: str = 'walks') -> Tuple[np.ndarray, np.ndarray]:
    """fn over every walk in parallel; (values, censored) in walk order"""
    stepper = make_stepper(cfg.model)
    chunk = config.MC_CHUNK_SIZE
    starts = list(range(0, cfg.n_walks, chunk))

    def run_chunk(first: int):
        values, censored = [], []
        for i in range(first, min(first + chunk, cfg.n_walks)):
            path = _walk(stepper, cfg.start, cfg.t_cap, cfg.step_cap, cfg.seed.rng(_WALK_STREAM, i), stop)
            values.append(fn(path))
            censored.append(path.censored)
        return values, censored

    results = {}
    with ThreadPoolExecutor(max_workers=cfg.workers or config.MC_WORKERS) as executor:
        futures = {executor.submit(run_chunk, s): s for s in starts}
        with tqdm(total=cfg.n_walks, desc=desc, unit='walk', disable=not cfg.progress) as bar:
            for future in as_completed(futures):
                results[futures[future]] = future.result()
                bar.update(len(results[futures[future]][0]))
    values = np.concatenate([np.asarray(results[s][0], dtype=float) for s in starts])
    censored = np.concatenate([np.asarray(results[s][1], dtype=bool) for s in starts])
    return values, censored


# Hitting times

def _lattice_hits(model: ModelSpec, offset: np.ndarray, t_cap: float,
                  rng: np.random.Generator) -> np.ndarray:
    """
    Hitting times of 0 for a batch of Z^1/Z^2 walks started at the offsets.

    A walk at l1-distance d cannot reach 0 in fewer than d steps, so d - 1
    steps are taken at once: on Z^2 the rotated coordinates x+y and x-y move
    as independent simple walks, on Z^1 x itself does. The clock advances by
    a Gamma(k, 1/rate) time. Censored walks get inf.
    """
    dim = model.dim
    rate = 2.0 * dim
    n = offset.shape[0]
    if dim == 1:
        u = offset[:, 0].astype(np.int64)
        v = np.zeros(n, dtype=np.int64)
    else:
        u = (offset[:, 0] + offset[:, 1]).astype(np.int64)
        v = (offset[:, 0] - offset[:, 1]).astype(np.int64)
    t = np.zeros(n)
    hit = np.full(n, np.inf)
    active = (u != 0) | (v != 0)
    hit[~active] = 0.0
    while np.any(active):
        idx = np.nonzero(active)[0]
        d = np.abs(u[idx]) if dim == 1 else (np.maximum(np.abs(u[idx]), np.abs(v[idx])))
        k = np.maximum(d - 1, 1)
        t[idx] += rng.gamma(k, 1.0 / rate)
        u[idx] += 2 * rng.binomial(k, 0.5) - k
        if dim == 2:
            v[idx] += 2 * rng.binomial(k, 0.5) - k
        over = t[idx] > t_cap
        arrived = (u[idx] == 0) & (v[idx] == 0) & ~over
        hit[idx[arrived]] = t[idx[arrived]]
        active[idx[over | arrived]] = False
    return hit


def _hit_samples(cfg: WalkConfig, target: Site) -> np.ndarray:
    """tau for every walk, inf when censored"""
    model = cfg.model
    if model.family in (Family.Z1, Family.Z2):
        offset = np.array((cfg.start - target).coords)
        chunk = config.MC_CHUNK_SIZE
        starts = list(range(0, cfg.n_walks, chunk))

        def run_chunk(first: int) -> np.ndarray:
            size = min(chunk, cfg.n_walks - first)
            rng = cfg.seed.rng(_CHUNK_STREAM, first // chunk)
            return _lattice_hits(model, np.tile(offset, (size, 1)), cfg.t_cap, rng)

        results = {}
        with ThreadPoolExecutor(max_workers=cfg.workers or config.MC_WORKERS) as executor:
            futures = {executor.submit(run_chunk, s): s for s in starts}
            with tqdm(total=cfg.n_walks, desc='hitting', unit='walk', disable=not cfg.progress) as bar:
                for future in as_completed(futures):
                    results[futures[future]] = future.result()
                    bar.update(results[futures[future]].size)
        return np.concatenate([results[s] for s in starts])

    def tau(path: WalkPath) -> float:
        if path.censored or path.killed or path.sites[-1] != target:
            return math.inf
        return path.end_time

    values, _ = _map_walks(cfg, tau, stop=lambda x: x == target, desc='hitting')
    return values


def hitting_time(cfg: WalkConfig, target: Site) -> WalkStats:
    """
    First time the walk sits at target.

    Returns:
        WalkStats whose estimate is P(tau <= t_cap); samples holds tau per
        walk with inf for censored (or killed) walks
    """
    taus = _hit_samples(cfg, target)
    reached = np.isfinite(taus)
    stats_ = _mean_stats(reached.astype(float), ~reached, taus)
    stats_.n_effective = int(reached.sum())
    logger.debug(f"Hitting {target} from {cfg.start}: P(tau <= {cfg.t_cap}) = {stats_.estimate:.4f}")
    return stats_


def laplace_hitting_mc(cfg: WalkConfig, target: Site, lam: float) -> WalkStats:
    """
    E_x exp(-lambda tau); censored walks contribute exp(-lambda t_cap), an
    upper bias of at most exp(-lambda t_cap) times the censored fraction
    """
    if not lam > 0:
        raise ValidationError(f"lambda must be positive, got {lam}", field='lambda')
    taus = _hit_samples(cfg, target)
    censored = ~np.isfinite(taus)
    values = np.exp(-lam * np.where(censored, cfg.t_cap, taus))
    return _mean_stats(values, censored)


def laplace_hitting_exact(model: ModelSpec, start: Site, target: Site, lam: float,
                          tol=None) -> float:
    """R_lambda(x, target) / R_lambda(target, target)"""
    from src.kernels import resolvent

    num = resolvent(model, lam, start, target, tol).value
    den = resolvent(model, lam, target, target, tol).value
    return num / den


@dataclass(frozen=True)
class HittingCdfRow:
    alpha: float
    empirical: float
    limit: float
    stderr: float
    n: int
    censored_fraction: float

    def as_row(self) -> List[float]:
        return [self.alpha, self.empirical, self.limit, self.stderr, self.n, self.censored_fraction]


HITTING_CDF_COLUMNS = ['alpha', 'empirical', 'limit', 'stderr', 'n', 'censored_fraction']


def hitting_cdf_experiment(distance: int, alpha_grid: Sequence[float], cfg: WalkConfig) -> List[HittingCdfRow]:
    """
    Empirical P(ln tau / ln|x| <= alpha) on Z^2 against the limit (alpha - 2)_+ / alpha

    Raises:
        ValidationError: t_cap below |x|^max(alpha)
    """
    cfg.model.require(Family.Z2)
    if distance < 2:
        raise ValidationError(f"distance must be at least 2, got {distance}", field='distance')
    alphas = sorted(float(a) for a in alpha_grid)
    if not alphas or alphas[0] <= 0:
        raise ValidationError("alpha grid must be nonempty and positive", field='alpha_grid')
    if cfg.t_cap < distance ** alphas[-1]:
        raise ValidationError(f"t_cap {cfg.t_cap} is below |x|^{alphas[-1]} = {distance ** alphas[-1]:.4g}",
                              field='walk.t_cap')
    run = WalkConfig(cfg.model, Site((distance, 0)), cfg.t_cap, cfg.step_cap, cfg.seed, cfg.n_walks,
                     cfg.workers, cfg.progress)
    taus = _hit_samples(run, Site((0, 0)))
    n = taus.size
    censored = float(np.mean(~np.isfinite(taus)))
    rows = []
    for a in alphas:
        p = float(np.mean(taus <= distance ** a))
        rows.append(HittingCdfRow(a, p, max(a - 2.0, 0.0) / a, math.sqrt(p * (1.0 - p) / n), n, censored))
    return rows


# Killing and occupation

def _killing_integral(path: WalkPath, q: Potential, t: float) -> float:
    total = 0.0
    for x, a, b in path.holding_intervals():
        if a >= t:
            break
        rate = q[x]
        if rate > 0:
            if math.isinf(rate):
                return math.inf
            total += rate * (min(b, t) - a)
    return total


def killed_survival(cfg: WalkConfig, q: Union[Potential, float], t: Optional[float] = None) -> WalkStats:
    """
    pi(tau > t) = E exp(-int_0^t q(x(u)) du), integrated exactly over the
    holding intervals; a float q is a constant killing rate everywhere and an
    infinite q(x) kills on the first visit
    """
    t = cfg.t_cap if t is None else t
    if t < 0 or t > cfg.t_cap:
        raise ValidationError(f"t must lie in [0, t_cap], got {t}", field='t')
    if not isinstance(q, Potential):
        q0 = float(q)
        if q0 < 0:
            raise ValidationError(f"Killing rate must be nonnegative, got {q0}")
        values = np.full(cfg.n_walks, math.exp(-q0 * t))
        return _mean_stats(values, np.zeros(cfg.n_walks, dtype=bool))
    run = WalkConfig(cfg.model, cfg.start, t, cfg.step_cap, cfg.seed, cfg.n_walks, cfg.workers,
                     cfg.progress)
    values, censored = _map_walks(run, lambda path: math.exp(-_killing_integral(path, q, t)),
                                  desc='killing')
    # reaching t is the point of the run, not censoring
    stats_ = _mean_stats(values, np.zeros(values.size, dtype=bool))
    logger.debug(f"Survival to t={t}: {stats_.estimate:.4f} +- {stats_.std_error:.4f}")
    return stats_


def occupation_time(cfg: WalkConfig, region: Iterable[Site]) -> WalkStats:
    """Mean time spent in region up to t_cap"""
    region: Set[Site] = set(region)
    if not region:
        raise ValidationError("Occupation region is empty", field='region')

    def occupied(path: WalkPath) -> float:
        return sum(b - a for x, a, b in path.holding_intervals() if x in region)

    values, censored = _map_walks(cfg, occupied, desc='occupation')
    return _mean_stats(values, censored)


# Jump-law diagnostics

@dataclass
class OneStepSample:
    holding_mean: float
    holding_se: float
    observed: Dict[int, int]
    expected: Dict[int, float]
    p_value: float


def jump_rank_histogram(cfg: WalkConfig, n_jumps: int) -> OneStepSample:
    """
    Holding times and jump cells of single steps from cfg.start, drawn
    through the walk's own stepper and tested against the generator.

    Cells are move directions on Z^d, cube ranks hierarchically (the tail
    pooled into the last cell) and target rows on a general graph, with
    one extra cell for killing.
    """
    if n_jumps < 2:
        raise ValidationError("Need at least two jumps", field='n_jumps')
    model = cfg.model
    stepper = make_stepper(model)
    rng = cfg.seed.rng(_SAMPLE_STREAM)
    rate = stepper.rate(cfg.start)
    holds = rng.exponential(1.0 / rate, size=n_jumps)

    if model.family in (Family.Z1, Family.Z2):
        n_moves = len(stepper.moves)
        expected = {k: n_jumps / n_moves for k in range(n_moves)}

        def cell(y: Site, r: int) -> int:
            return stepper.moves.index((y - cfg.start).coords)
    elif model.family == Family.HIERARCHICAL:
        last = 1
        while n_jumps * model.p ** last >= 5.0:
            last += 1
        expected = {r: n_jumps * (1.0 - model.p) * model.p ** (r - 1) for r in range(1, last)}
        expected[last] = n_jumps * model.p ** (last - 1)

        def cell(y: Site, r: int) -> int:
            return min(r, last)
    else:
        targets, probs, _ = stepper.rows[stepper.index[cfg.start]]
        probs = probs / probs.sum()
        expected = {k: n_jumps * float(p) for k, p in enumerate(probs)}
        row = {stepper.sites[int(t)]: k for k, t in enumerate(targets)}

        def cell(y: Optional[Site], r: int) -> int:
            return targets.size if y is None else row[y]

    observed: Dict[int, int] = {}
    for _ in range(n_jumps):
        y, r = stepper.jump(cfg.start, rng)
        k = cell(y, r)
        observed[k] = observed.get(k, 0) + 1

    keys = [k for k in sorted(expected) if expected[k] > 0]
    f_obs = np.array([observed.get(k, 0) for k in keys], dtype=float)
    f_exp = np.array([expected[k] for k in keys])
    p_value = float(stats.chisquare(f_obs, f_exp * f_obs.sum() / f_exp.sum()).pvalue) \
        if len(keys) > 1 else 1.0
    logger.debug(f"One-step law from {cfg.start}: chi-square p = {p_value:.4g}")
    return OneStepSample(float(holds.mean()), float(holds.std(ddof=1) / math.sqrt(n_jumps)),
                         observed, expected, p_value)

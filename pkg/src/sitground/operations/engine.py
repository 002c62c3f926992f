# File Name: engine.py
# Created By: ZW
# Created On: 2023-03-20
# Purpose: define the active grounding loop. a pool of explorer, refiner and
#  prior agents is drawn from at random; each agent scores one proposal with
#  internal (localizer) and external (relationship model) support, may spawn
#  refiners, and may promote its proposal to a provisional detection in the
#  Workspace. every detection change re-conditions the relationship model.

# module imports
# ----------------------------------------------------------------------------
import logging
import zlib
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import ClassVar, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import special, stats

from ..core.boxes import BoxParams, ImageDims, PixelBox, clip_box, from_params, to_params
from ..core.errors import ConfigError
from ..core.gaussian import BLOCK, GaussianModel, condition_on, mahalanobis_sq, marginal, sample_gaussian
from ..core.linear import apply_refinement, predict
from ..core.lognormal import sample_lognormal
from ..core.records import PriorProposal
from .features import FeatureProvider
from .training import TrainedSituationModel

logger = logging.getLogger(__name__)


# constants definitions
# ----------------------------------------------------------------------------
NEUTRAL_EXTERNAL = 0.5
AREA_BOUNDS = (1e-4, 1.0)
ASPECT_BOUNDS = (0.05, 20.0)


# class definitions
# ----------------------------------------------------------------------------

# class EngineConfig() - every hyperparameter of a run.
# * w_int + w_ext == 1, both thresholds inside (0, 1)
# * an empty categories tuple means "use the trained model's categories"
@dataclass(frozen=True)
class EngineConfig:
    categories: Tuple[str, ...] = ()
    p: int = 10
    p_prime: int = 30
    max_iterations: int = 300
    tau_refine: float = 0.3
    tau_detect: float = 0.65
    w_int: float = 0.6
    w_ext: float = 0.4
    pad: float = 0.01
    r_max: int = 2
    uniform_mode: bool = False
    uniform_area_range: Tuple[float, float] = (0.01, 0.5)
    uniform_aspect_range: Tuple[float, float] = (0.25, 4.0)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "categories", tuple(self.categories))
        object.__setattr__(self, "uniform_area_range", tuple(float(v) for v in self.uniform_area_range))
        object.__setattr__(self, "uniform_aspect_range", tuple(float(v) for v in self.uniform_aspect_range))
        if abs(self.w_int + self.w_ext - 1.0) > 1e-9 or min(self.w_int, self.w_ext) < 0:
            raise ConfigError(f"support weights must be >= 0 and sum to 1, got {self.w_int} + {self.w_ext}")
        for name in ("tau_refine", "tau_detect"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ConfigError(f"{name} must lie in (0, 1), got {getattr(self, name)}")
        if self.p < 1 or self.p_prime < 1:
            raise ConfigError(f"p and p_prime must be positive, got {self.p} and {self.p_prime}")
        if self.max_iterations < 0 or self.r_max < 0:
            raise ConfigError("max_iterations and r_max must be >= 0")
        if self.pad <= 0:
            raise ConfigError(f"pad must be positive, got {self.pad}")
        lo, hi = self.uniform_area_range
        if not 0 < lo < hi <= 1:
            raise ConfigError(f"uniform_area_range must satisfy 0 < lo < hi <= 1, got {self.uniform_area_range}")
        lo, hi = self.uniform_aspect_range
        if not 0 < lo < hi:
            raise ConfigError(f"uniform_aspect_range must satisfy 0 < lo < hi, got {self.uniform_aspect_range}")

    def total_support(self, internal, external):
        return self.w_int * internal + self.w_ext * external


# class Proposal() - a scored (category, box) hypothesis.
# * total is always w_int * internal + w_ext * external for the Workspace
#   state it was scored (or last rescored) against
@dataclass(frozen=True)
class Proposal:
    category: str
    box: PixelBox
    params: BoxParams
    internal: float
    external: float
    total: float
    source: str
    feature: np.ndarray = field(default=None, repr=False, compare=False)


# class Detection() - a proposal promoted into the Workspace; weak once its
# total support falls below tau_detect after the Workspace changes
@dataclass(frozen=True)
class Detection:
    proposal: Proposal
    weak: bool = False

    @property
    def category(self):
        return self.proposal.category

    @property
    def box(self):
        return self.proposal.box

    @property
    def total(self):
        return self.proposal.total


@dataclass(frozen=True)
class Explorer:
    kind: ClassVar[str] = "explorer"


@dataclass(frozen=True)
class Refiner:
    target: Proposal
    chain_depth: int = 1
    kind: ClassVar[str] = "refiner"


@dataclass(frozen=True)
class Prior:
    category: str
    box: PixelBox
    detector_confidence: float
    kind: ClassVar[str] = "prior"


Agent = Union[Explorer, Refiner, Prior]


# class TraceEvent() - one executed agent, as written to the trace log
@dataclass(frozen=True)
class TraceEvent:
    iteration: int
    agent: str
    category: str
    box: Tuple[float, float, float, float]
    internal: float
    external: float
    total: float
    action: str
    spawned: int
    chain_depth: int
    score: float

    def to_record(self):
        return {
            "iteration": self.iteration,
            "agent": self.agent,
            "category": self.category,
            "box": list(self.box),
            "internal": self.internal,
            "external": self.external,
            "total": self.total,
            "action": self.action,
            "spawned": self.spawned,
            "chain_depth": self.chain_depth,
            "score": self.score,
        }


# class Snapshot() - Workspace state captured after a given iteration, used
# to draw the run strip
@dataclass(frozen=True)
class Snapshot:
    iteration: int
    detections: Dict[str, Detection]
    conditioned: Dict[str, Optional[GaussianModel]]
    proposal: Optional[Proposal]


# class Outcome() - what running one agent produced
@dataclass
class Outcome:
    proposal: Optional[Proposal]
    spawned: List[Agent] = field(default_factory=list)
    action: str = "discarded"
    chain_depth: int = 0


# class Workspace() - the mutable state of one run.
# * detections holds at most one Detection per category
# * conditioned[c] is the 4-dim marginal of category c conditioned on every
#   other category's current detection, or None when no other category is
#   detected. it is refreshed on every detection change.
@dataclass
class Workspace:
    image_id: str
    dims: ImageDims
    relationship: GaussianModel
    categories: Tuple[str, ...]
    detections: Dict[str, Optional[Detection]] = field(default_factory=dict)
    conditioned: Dict[str, Optional[GaussianModel]] = field(default_factory=dict)
    trace: List[TraceEvent] = field(default_factory=list)

    def __post_init__(self):
        for cat in self.categories:
            self.detections.setdefault(cat, None)
            self.conditioned.setdefault(cat, None)

    # condition the relationship model on the other categories' detections
    def _condition_for(self, category):
        others = {c: d.proposal.params.as_vector() for c, d in self.detections.items()
                  if c != category and d is not None}
        if not others: return None
        return marginal(condition_on(self.relationship, others), category)

    # recompute every conditioned marginal, then rescore every detection's
    # external and total support against the new Workspace
    def refresh(self, config: EngineConfig):
        for cat in self.categories:
            self.conditioned[cat] = self._condition_for(cat)
        for cat, det in self.detections.items():
            if det is None: continue
            external = external_support(self, None, cat, det.proposal.params)
            total = config.total_support(det.proposal.internal, external)
            rescored = replace(det.proposal, external=external, total=total)
            self.detections[cat] = Detection(rescored, weak=total < config.tau_detect)

    def all_grounded(self):
        return all(d is not None and not d.weak for d in self.detections.values())

    def snapshot(self, iteration, proposal=None) -> Snapshot:
        return Snapshot(iteration, dict(self.detections), dict(self.conditioned), proposal)


# class RunResult() - the output of run_image()
@dataclass(frozen=True)
class RunResult:
    image_id: str
    score: float
    detections: Dict[str, Optional[Detection]]
    trace: Tuple[TraceEvent, ...]
    snapshots: Tuple[Snapshot, ...] = ()
    final_pool_size: int = 0

    @property
    def agents_executed(self):
        return len(self.trace)


# function definitions
# ----------------------------------------------------------------------------

# define derive_rng() which returns the per-image generator; the stream seed
# is the run seed xor a stable crc32 of the image id
def derive_rng(seed: int, image_id: str) -> np.random.Generator:
    crc = zlib.crc32(image_id.encode("utf-8")) & 0xFFFFFFFF
    return np.random.default_rng((int(seed) ^ crc) & 0xFFFFFFFF)


# define external_support() which measures how well params fit the
# relationship model conditioned on the other detections: the chi-square(4)
# survival function of the Mahalanobis distance to the conditioned marginal.
# with no other detections the support is the neutral 0.5.
def external_support(workspace: Workspace, model: Optional[TrainedSituationModel],
                     category: str, params: BoxParams) -> float:
    cond = workspace.conditioned.get(category)
    if cond is None: return NEUTRAL_EXTERNAL
    m2 = mahalanobis_sq(cond, params.as_vector())
    return float(special.chdtrc(BLOCK, m2))


def total_support(internal, external, config: EngineConfig) -> float:
    return config.total_support(internal, external)


# define match_score() which returns the padded geometric mean of the
# detections' total supports, or the minimum (pad) when a category is
# still ungrounded. weak detections count.
def match_score(workspace: Workspace, config: EngineConfig) -> float:
    dets = [workspace.detections.get(c) for c in workspace.categories]
    if not dets or any(d is None for d in dets): return config.pad
    return float(stats.gmean([d.total + config.pad for d in dets]))


# define promote() which installs a proposal into an empty slot when its
# total clears tau_detect, or replaces the incumbent when its total is
# strictly greater. any change rescores every detection.
def promote(workspace: Workspace, proposal: Proposal, config: EngineConfig) -> bool:
    incumbent = workspace.detections.get(proposal.category)
    if incumbent is None:
        if not proposal.total > config.tau_detect: return False
    elif not proposal.total > incumbent.total:
        return False
    workspace.detections[proposal.category] = Detection(proposal, weak=False)
    workspace.refresh(config)
    return True


# define init_pool() which seeds the pool with the p most confident priors of
# every category (ties keep file order) followed by p_prime explorers
def init_pool(priors: Iterable[PriorProposal], config: EngineConfig, rng=None) -> List[Agent]:
    by_category = defaultdict(list)
    for prior in priors: by_category[prior.category].append(prior)
    pool: List[Agent] = []
    for cat in config.categories or sorted(by_category):
        ranked = sorted(by_category[cat], key=lambda p: -p.detector_confidence)
        pool.extend(Prior(p.category, p.box, p.detector_confidence) for p in ranked[:config.p])
    pool.extend(Explorer() for _ in range(config.p_prime))
    return pool


# define sanitize_params() which maps a raw sample onto valid box params
def sanitize_params(cx, cy, area_ratio, aspect_ratio) -> BoxParams:
    return BoxParams(
        _clamp(cx, 0.0, 1.0),
        _clamp(cy, 0.0, 1.0),
        _clamp(area_ratio, *AREA_BOUNDS),
        _clamp(aspect_ratio, *ASPECT_BOUNDS),
    )


def _clamp(value, lo, hi) -> float:
    return min(max(float(value), lo), hi)


# define score_proposal() which computes internal, external and total
# support for a box of the given category
def score_proposal(workspace: Workspace, model: TrainedSituationModel, provider: FeatureProvider,
                   config: EngineConfig, category: str, box: PixelBox, source: str) -> Proposal:
    feature = np.asarray(provider.features(workspace.image_id, box), dtype=float)
    internal = _clamp(predict(model.localizers[category], feature), 0.0, 1.0)
    params = to_params(box, workspace.dims)
    external = external_support(workspace, model, category, params)
    return Proposal(category, box, params, internal, external,
                    config.total_support(internal, external), source, feature)


# define follow_up() which applies the refine and promote rules shared by
# every agent type to a freshly scored proposal
def follow_up(workspace: Workspace, proposal: Proposal, config: EngineConfig, next_depth: int) -> Outcome:
    outcome = Outcome(proposal, chain_depth=next_depth - 1)
    if proposal.internal > config.tau_refine and next_depth <= config.r_max:
        outcome.spawned.append(Refiner(proposal, next_depth))
        outcome.action = "refine"
    if proposal.total > config.tau_detect:
        incumbent = workspace.detections.get(proposal.category)
        if promote(workspace, proposal, config):
            outcome.action = "replaced" if incumbent is not None else "detected"
        else:
            outcome.action = "rejected"
    return outcome


# define sample_explorer_params() which draws box params for a category:
# uniform location with prior size/shape until another category is
# detected, then jointly from the conditioned marginal. the uniform lesion
# never reads the learned models.
def sample_explorer_params(workspace: Workspace, model: TrainedSituationModel, config: EngineConfig,
                           category: str, rng: np.random.Generator) -> BoxParams:
    if config.uniform_mode:
        cx, cy = rng.uniform(0.0, 1.0, size=2)
        return sanitize_params(cx, cy, rng.uniform(*config.uniform_area_range),
                               rng.uniform(*config.uniform_aspect_range))
    cond = workspace.conditioned.get(category)
    if cond is None:
        cx, cy = rng.uniform(0.0, 1.0, size=2)
        area_prior, aspect_prior = model.size_shape_priors[category]
        return sanitize_params(cx, cy, sample_lognormal(area_prior, rng), sample_lognormal(aspect_prior, rng))
    return sanitize_params(*sample_gaussian(cond, rng))


def run_explorer(workspace: Workspace, model: TrainedSituationModel, provider: FeatureProvider,
                 config: EngineConfig, rng: np.random.Generator) -> Outcome:
    category = workspace.categories[int(rng.integers(len(workspace.categories)))]
    params = sample_explorer_params(workspace, model, config, category, rng)
    box = from_params(params, workspace.dims)
    proposal = score_proposal(workspace, model, provider, config, category, box, "explorer")
    return follow_up(workspace, proposal, config, next_depth=1)


def run_refiner(workspace: Workspace, agent: Refiner, model: TrainedSituationModel,
                provider: FeatureProvider, config: EngineConfig) -> Outcome:
    target = agent.target
    feature = target.feature
    if feature is None: feature = provider.features(workspace.image_id, target.box)
    box = apply_refinement(model.refiners[target.category], feature, target.box, workspace.dims)
    proposal = score_proposal(workspace, model, provider, config, target.category, box, "refiner")
    outcome = follow_up(workspace, proposal, config, next_depth=agent.chain_depth + 1)
    outcome.chain_depth = agent.chain_depth
    return outcome


# define run_prior_agent() which scores a detector box with the situation's
# own localizer; the detector confidence only ordered the pool
def run_prior_agent(workspace: Workspace, agent: Prior, model: TrainedSituationModel,
                    provider: FeatureProvider, config: EngineConfig) -> Outcome:
    box = clip_box(agent.box, workspace.dims)
    proposal = score_proposal(workspace, model, provider, config, agent.category, box, "prior")
    return follow_up(workspace, proposal, config, next_depth=1)


# define step() which draws one agent uniformly at random, runs it, deletes
# it from the pool, replaces it if it was an explorer, queues any refiners it
# spawned and logs the event
def step(workspace: Workspace, pool: List[Agent], model: TrainedSituationModel,
         provider: FeatureProvider, config: EngineConfig, rng: np.random.Generator) -> TraceEvent:
    agent = pool.pop(int(rng.integers(len(pool))))
    if isinstance(agent, Explorer):
        outcome = run_explorer(workspace, model, provider, config, rng)
    elif isinstance(agent, Refiner):
        outcome = run_refiner(workspace, agent, model, provider, config)
    else:
        outcome = run_prior_agent(workspace, agent, model, provider, config)
    pool.extend(outcome.spawned)
    if isinstance(agent, Explorer): pool.append(Explorer())

    prop = outcome.proposal
    event = TraceEvent(
        iteration=len(workspace.trace) + 1,
        agent=agent.kind,
        category=prop.category,
        box=prop.box.as_tuple(),
        internal=prop.internal,
        external=prop.external,
        total=prop.total,
        action=outcome.action,
        spawned=len(outcome.spawned),
        chain_depth=outcome.chain_depth,
        score=match_score(workspace, config),
    )
    workspace.trace.append(event)
    logger.debug(f"{workspace.image_id} #{event.iteration} {event.agent} {event.category} "
                 f"total={event.total:.3f} {event.action}")
    return event


# define run_image() which grounds the situation in one image. the loop stops
# when every category holds a non-weak detection or after max_iterations
# agents; the score is the padded geometric mean of the detections.
def run_image(image_id: str, dims: ImageDims, priors: Sequence[PriorProposal],
              model: TrainedSituationModel, provider: FeatureProvider, config: EngineConfig,
              rng: np.random.Generator, snapshot_at: Iterable[int] = ()) -> RunResult:
    categories = config.categories or model.categories
    if config.categories != categories: config = replace(config, categories=categories)
    snapshot_at = set(snapshot_at)
    workspace = Workspace(image_id, dims, model.relationship, categories)
    pool = init_pool(priors, config, rng)
    snapshots = [workspace.snapshot(0)] if 0 in snapshot_at else []

    for iteration in range(1, config.max_iterations + 1):
        if workspace.all_grounded() or not pool: break
        step(workspace, pool, model, provider, config, rng)
        if iteration in snapshot_at:
            snapshots.append(workspace.snapshot(iteration, _last_proposal(workspace, model, dims)))
    # always close the strip with the final state
    if snapshot_at and (not snapshots or snapshots[-1].iteration != len(workspace.trace)):
        snapshots.append(workspace.snapshot(len(workspace.trace), _last_proposal(workspace, model, dims)))

    score = match_score(workspace, config)
    logger.debug(f"{image_id}: {len(workspace.trace)} agents, score {score:.4f}")
    return RunResult(image_id, score, dict(workspace.detections), tuple(workspace.trace),
                     tuple(snapshots), len(pool))


# rebuild the last event's proposal (without its feature) for a snapshot
def _last_proposal(workspace: Workspace, model, dims) -> Optional[Proposal]:
    if not workspace.trace: return None
    ev = workspace.trace[-1]
    box = PixelBox(*ev.box)
    return Proposal(ev.category, box, to_params(box, dims), ev.internal, ev.external, ev.total, ev.agent)

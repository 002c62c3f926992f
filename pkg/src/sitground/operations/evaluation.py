# File Name: evaluation.py
# Created By: ZW
# Created On: 2023-03-27
# Purpose: define image ranking and Single-Image Recall@N, multi-run
#  aggregation, and the comparison methods: the active search, its uniform
#  lesion, top-box detector scoring and a pairwise-GMM energy ranking.

# module imports
# ----------------------------------------------------------------------------
import logging
import multiprocessing
from dataclasses import dataclass, field, replace
from itertools import combinations
from math import inf, isfinite
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from ..core.boxes import ImageDims, clip_box, to_params
from ..core.errors import ModelError, ValidationError
from ..core.gmm import DEFAULT_COMPONENTS, GmmModel, fit_gmm, gmm_logdensity
from ..core.linear import predict
from ..core.records import AnnotationRecord, PriorProposal
from .engine import EngineConfig, RunResult, derive_rng, run_image
from .features import FeatureProvider
from .intersect import iou
from .training import TrainedSituationModel

logger = logging.getLogger(__name__)


# constants definitions
# ----------------------------------------------------------------------------
N_GRID = (1, 2, 5, 10, 20, 100)
DESCENDING = "descending"
ASCENDING = "ascending-energy"
ORDERINGS = (DESCENDING, ASCENDING)
UNARY_EPS = 1e-6
DENSITY_EPS = 1e-12
DEFAULT_TOP_K = 20
DEFAULT_SEEDS = tuple(range(10))
# finite stand-in for an infinite energy; ranks behind every real energy
WORST_ENERGY = float(np.finfo(float).max)
METHODS = ("situate", "uniform", "topbox", "irsg")
UNARY_MODES = ("confidence", "localizer")


# class definitions
# ----------------------------------------------------------------------------

# class ScoredImage() - one ranked test image
@dataclass(frozen=True)
class ScoredImage:
    image_id: str
    score: float
    is_positive: bool
    ordering: str = DESCENDING

    def __post_init__(self):
        object.__setattr__(self, "score", float(self.score))
        if not isfinite(self.score):
            raise ValidationError(f"score of {self.image_id!r} must be finite, got {self.score}")
        if self.ordering not in ORDERINGS:
            raise ValidationError(f"unknown ordering {self.ordering!r}; expected one of {ORDERINGS}")


# class RecallTable() - mean and (population) standard deviation of R@N over
# runs, one entry per N in n_grid
@dataclass(frozen=True)
class RecallTable:
    method: str
    means: Tuple[float, ...]
    stds: Tuple[float, ...]
    n_grid: Tuple[int, ...] = N_GRID
    stochastic: bool = False
    runs: int = 1

    def __post_init__(self):
        for name in ("means", "stds", "n_grid"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if not len(self.means) == len(self.stds) == len(self.n_grid):
            raise ValidationError("means, stds and n_grid must have equal lengths")

    def mean_at(self, n):
        return self.means[self.n_grid.index(n)]

    def std_at(self, n):
        return self.stds[self.n_grid.index(n)]

    def to_document(self):
        return {
            "method": self.method,
            "stochastic": self.stochastic,
            "runs": self.runs,
            "recall": {f"R@{n}": {"mean": m, "std": s} for n, m, s in zip(self.n_grid, self.means, self.stds)},
        }


# class IrsgResult() - the minimum energy assignment of prior boxes to
# categories; config is None and energy inf when a category has no boxes
@dataclass(frozen=True)
class IrsgResult:
    config: Optional[Dict[str, PriorProposal]]
    energy: float


# class ComparisonReport() - the recall tables of every compared method
@dataclass(frozen=True)
class ComparisonReport:
    tables: Tuple[RecallTable, ...]
    seeds: Tuple[int, ...]
    n_positive: int
    n_negative: int
    extras: Dict[str, object] = field(default_factory=dict)

    def table(self, method) -> RecallTable:
        for tbl in self.tables:
            if tbl.method == method: return tbl
        raise KeyError(method)

    def to_document(self):
        doc = {
            "seeds": list(self.seeds),
            "n_positive": self.n_positive,
            "n_negative": self.n_negative,
            "methods": [t.to_document() for t in self.tables],
        }
        doc.update(self.extras)
        return doc


# function definitions
# ----------------------------------------------------------------------------

# define positive_ranks() which returns the Single-Image rank of every
# positive: 1 + the number of negatives scoring at least as well. ties count
# against the positive.
def positive_ranks(pos_scores, neg_scores, ordering=DESCENDING) -> np.ndarray:
    if ordering not in ORDERINGS:
        raise ValidationError(f"unknown ordering {ordering!r}; expected one of {ORDERINGS}")
    pos = np.asarray(pos_scores, dtype=float).reshape(-1)
    neg = np.sort(np.asarray(neg_scores, dtype=float).reshape(-1))
    if ordering == DESCENDING:
        beaten_by = neg.size - np.searchsorted(neg, pos, side="left")
    else:
        beaten_by = np.searchsorted(neg, pos, side="right")
    return 1 + beaten_by


# define recall_at_n() which returns the fraction of positives whose rank,
# inserted alone among the negatives, is at most n
def recall_at_n(pos_scores, neg_scores, n: int, ordering=DESCENDING) -> float:
    if n < 1:
        raise ValidationError(f"N must be >= 1, got {n}")
    if len(pos_scores) == 0 or len(neg_scores) == 0:
        raise ValidationError("recall_at_n needs at least one positive and one negative score")
    return float(np.mean(positive_ranks(pos_scores, neg_scores, ordering) <= n))


# define recall_row() which evaluates R@N over a grid for one ranked run
def recall_row(scored: Sequence[ScoredImage], n_grid=N_GRID) -> Tuple[float, ...]:
    if not scored:
        raise ValidationError("cannot compute recall over an empty ranking")
    orderings = {s.ordering for s in scored}
    if len(orderings) != 1:
        raise ValidationError(f"ranking mixes orderings {sorted(orderings)}")
    pos = [s.score for s in scored if s.is_positive]
    neg = [s.score for s in scored if not s.is_positive]
    ordering = orderings.pop()
    return tuple(recall_at_n(pos, neg, n, ordering) for n in n_grid)


# define aggregate_runs() which collapses per-run recall rows into a table of
# per-N mean and population standard deviation
def aggregate_runs(rows: Sequence[Sequence[float]], method="", n_grid=N_GRID, stochastic=True) -> RecallTable:
    if len(rows) == 0:
        raise ValidationError("aggregate_runs needs at least one run")
    arr = np.asarray(rows, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != len(n_grid):
        raise ValidationError(f"every run must carry {len(n_grid)} recall values, got shape {arr.shape}")
    return RecallTable(
        method=method,
        means=tuple(float(v) for v in arr.mean(axis=0)),
        stds=tuple(float(v) for v in arr.std(axis=0)),
        n_grid=tuple(n_grid),
        stochastic=stochastic,
        runs=arr.shape[0],
    )


# define topbox_score() which scores an image from its detector boxes alone:
# the padded geometric mean of each category's highest confidence, or pad if
# a category has no box
def topbox_score(priors: Iterable[PriorProposal], categories: Sequence[str], pad=0.01) -> float:
    best = {}
    for prior in priors:
        if prior.category in best and best[prior.category] >= prior.detector_confidence: continue
        best[prior.category] = prior.detector_confidence
    if any(cat not in best for cat in categories): return pad
    return float(stats.gmean([best[cat] + pad for cat in categories]))


# define pair_features() which describes how box b sits relative to box a:
# (cx_b - cx_a, cy_b - cy_a, ln(area_b / area_a), ln(aspect_b / aspect_a))
def pair_features(params_a, params_b) -> np.ndarray:
    a = np.asarray(params_a, dtype=float)
    b = np.asarray(params_b, dtype=float)
    return np.concatenate([b[..., :2] - a[..., :2], np.log(b[..., 2:] / a[..., 2:])], axis=-1)


# define fit_pairwise_gmms() which fits one GMM per unordered category pair
# (in situation order) on the ground-truth pair features of the positives
def fit_pairwise_gmms(annotations: Iterable[AnnotationRecord], categories: Sequence[str],
                      k=DEFAULT_COMPONENTS, rng=None) -> Dict[Tuple[str, str], GmmModel]:
    rng = rng if rng is not None else np.random.default_rng(0)
    positives = [r for r in annotations if r.is_positive]
    if len(positives) < 5 * k:
        raise ModelError(f"pairwise GMMs with k={k} need at least {5 * k} positive images, got {len(positives)}")
    params = {
        cat: np.stack([to_params(r.box_for(cat), r.dims).as_vector() for r in positives])
        for cat in categories
    }
    gmms = {}
    for a, b in combinations(categories, 2):
        gmms[(a, b)] = fit_gmm(pair_features(params[a], params[b]), k=k, rng=rng)
        logger.debug(f"fitted {k}-component pair GMM for {a}-{b}")
    return gmms


# define irsg_energy() which exhaustively minimizes
#   E = -sum_c ln(unary_c + UNARY_EPS) - sum_pairs ln(density + DENSITY_EPS)
# over every assignment of one of its top_k boxes to each category. unary
# defaults to the detector confidence.
def irsg_energy(priors_by_cat: Mapping[str, Sequence[PriorProposal]], gmms: Mapping[Tuple[str, str], GmmModel],
                categories: Sequence[str], dims: ImageDims, top_k=DEFAULT_TOP_K,
                unary: Optional[Callable[[PriorProposal], float]] = None) -> IrsgResult:
    cats = tuple(categories)
    candidates = []
    for cat in cats:
        ranked = sorted(priors_by_cat.get(cat, ()), key=lambda p: -p.detector_confidence)[:top_k]
        if not ranked: return IrsgResult(None, inf)
        candidates.append(ranked)

    axes = len(cats)
    energy = np.zeros(tuple(len(c) for c in candidates))
    params = []
    for i, ranked in enumerate(candidates):
        u = np.array([unary(p) if unary is not None else p.detector_confidence for p in ranked])
        shape = [1] * axes
        shape[i] = len(ranked)
        energy = energy - np.log(np.clip(u, 0.0, None) + UNARY_EPS).reshape(shape)
        params.append(np.stack([to_params(clip_box(p.box, dims), dims).as_vector() for p in ranked]))

    for (i, a), (j, b) in combinations(enumerate(cats), 2):
        gmm = gmms.get((a, b))
        if gmm is None:
            raise ModelError(f"no pair GMM for ({a!r}, {b!r})")
        feats = pair_features(params[i][:, None, :], params[j][None, :, :])
        dens = np.exp(gmm_logdensity(gmm, feats.reshape(-1, 4))).reshape(len(params[i]), len(params[j]))
        shape = [1] * axes
        shape[i], shape[j] = len(params[i]), len(params[j])
        energy = energy - np.log(dens + DENSITY_EPS).reshape(shape)

    best = np.unravel_index(int(np.argmin(energy)), energy.shape)
    config = {cat: candidates[i][best[i]] for i, cat in enumerate(cats)}
    return IrsgResult(config, float(energy[best]))


def group_priors(priors: Iterable[PriorProposal]) -> Dict[str, List[PriorProposal]]:
    grouped = {}
    for prior in priors:
        grouped.setdefault(prior.image_id, []).append(prior)
    return grouped


# worker state of a process pool: the read-only inputs every task shares,
# installed once per worker by _init_worker()
_WORKER = {}


def _init_worker(model, provider, priors_by_image):
    _WORKER.update(model=model, provider=provider, priors_by_image=priors_by_image)


def _score_record(record: AnnotationRecord, priors_by_image, model, provider, config: EngineConfig) -> RunResult:
    rng = derive_rng(config.seed, record.image_id)
    return run_image(record.image_id, record.dims, priors_by_image.get(record.image_id, ()),
                     model, provider, config, rng)


def _run_task(task) -> RunResult:
    config, record = task
    return _score_record(record, _WORKER["priors_by_image"], _WORKER["model"], _WORKER["provider"], config)


# define run_tasks() which runs the active search for every (config, record)
# task, spread over jobs worker processes. results keep the task order.
def run_tasks(tasks: Sequence[Tuple[EngineConfig, AnnotationRecord]],
              priors_by_image: Mapping[str, Sequence[PriorProposal]],
              model: TrainedSituationModel, provider: FeatureProvider, jobs=1) -> List[RunResult]:
    tasks = list(tasks)
    if jobs <= 1 or len(tasks) <= 1:
        return [_score_record(record, priors_by_image, model, provider, config) for config, record in tasks]
    with multiprocessing.Pool(min(jobs, len(tasks)), initializer=_init_worker,
                              initargs=(model, provider, dict(priors_by_image))) as pool:
        return pool.map(_run_task, tasks)


# define score_corpus() which runs the active search on every test image,
# up to jobs images at a time. results keep the order of the annotations.
def score_corpus(test: Sequence[AnnotationRecord], priors_by_image: Mapping[str, Sequence[PriorProposal]],
                 model: TrainedSituationModel, provider: FeatureProvider, config: EngineConfig,
                 jobs=1) -> List[RunResult]:
    return run_tasks([(config, r) for r in test], priors_by_image, model, provider, jobs)


def ranked(results: Sequence[RunResult], test: Sequence[AnnotationRecord]) -> List[ScoredImage]:
    return [ScoredImage(res.image_id, res.score, rec.is_positive) for res, rec in zip(results, test)]


def topbox_ranking(test, priors_by_image, categories, pad=0.01) -> List[ScoredImage]:
    return [
        ScoredImage(r.image_id, topbox_score(priors_by_image.get(r.image_id, ()), categories, pad), r.is_positive)
        for r in test
    ]


# define localizer_unary() which returns a unary that scores a prior box with
# the trained localizer of its category instead of the detector confidence
def localizer_unary(model: TrainedSituationModel, provider: FeatureProvider, dims_by_image):
    def unary(prior: PriorProposal) -> float:
        box = clip_box(prior.box, dims_by_image[prior.image_id])
        feature = provider.features(prior.image_id, box)
        return float(np.clip(predict(model.localizers[prior.category], feature), 0.0, 1.0))
    return unary


def irsg_ranking(test, priors_by_image, gmms, categories, top_k=DEFAULT_TOP_K, unary=None) -> List[ScoredImage]:
    out = []
    for r in test:
        by_cat = {}
        for prior in priors_by_image.get(r.image_id, ()):
            by_cat.setdefault(prior.category, []).append(prior)
        result = irsg_energy(by_cat, gmms, categories, r.dims, top_k, unary)
        energy = result.energy if isfinite(result.energy) else WORST_ENERGY
        out.append(ScoredImage(r.image_id, energy, r.is_positive, ASCENDING))
    return out


# define evaluate_method() which builds the recall table of one method;
# stochastic methods run once per seed
def evaluate_method(method, test: Sequence[AnnotationRecord], priors: Iterable[PriorProposal],
                    model: TrainedSituationModel, provider: FeatureProvider, config: EngineConfig,
                    seeds=DEFAULT_SEEDS, top_k=DEFAULT_TOP_K, unary="confidence", jobs=1,
                    n_grid=N_GRID) -> RecallTable:
    if method not in METHODS:
        raise ValidationError(f"unknown method {method!r}; expected one of {METHODS}")
    if unary not in UNARY_MODES:
        raise ValidationError(f"unknown unary {unary!r}; expected one of {UNARY_MODES}")
    test = list(test)
    priors_by_image = group_priors(priors)
    cats = config.categories or model.categories

    if method in ("situate", "uniform"):
        if not seeds:
            raise ValidationError("stochastic methods need at least one seed")
        configs = [replace(config, categories=cats, seed=seed, uniform_mode=method == "uniform") for seed in seeds]
        logger.info(f"Scoring {len(test)} images with {method} over {len(configs)} seeds..")
        results = run_tasks([(c, r) for c in configs for r in test], priors_by_image, model, provider, jobs)
        rows = [recall_row(ranked(results[i * len(test):(i + 1) * len(test)], test), n_grid)
                for i in range(len(configs))]
        return aggregate_runs(rows, method, n_grid, stochastic=True)

    if method == "topbox":
        scored = topbox_ranking(test, priors_by_image, cats, config.pad)
    else:
        if not model.pair_gmms:
            raise ModelError("the trained model carries no pair GMMs; retrain it to rank with irsg")
        fn = None
        if unary == "localizer":
            fn = localizer_unary(model, provider, {r.image_id: r.dims for r in test})
        scored = irsg_ranking(test, priors_by_image, model.pair_gmms, cats, top_k, fn)
    return aggregate_runs([recall_row(scored, n_grid)], method, n_grid, stochastic=False)


# define compare_methods() which evaluates all four methods on one test set
def compare_methods(test: Sequence[AnnotationRecord], priors: Iterable[PriorProposal],
                    model: TrainedSituationModel, provider: FeatureProvider, config: EngineConfig,
                    seeds=DEFAULT_SEEDS, top_k=DEFAULT_TOP_K, unary="confidence", jobs=1) -> ComparisonReport:
    test = list(test)
    priors = list(priors)
    tables = tuple(
        evaluate_method(m, test, priors, model, provider, config, seeds, top_k, unary, jobs) for m in METHODS
    )
    n_pos = sum(1 for r in test if r.is_positive)
    return ComparisonReport(tables, tuple(seeds), n_pos, len(test) - n_pos)


# define grounding_accuracy() which returns, per category, the fraction of
# positive images whose final detection overlaps the ground truth with IOU
# at or above the threshold
def grounding_accuracy(results: Sequence[RunResult], annotations: Iterable[AnnotationRecord],
                       categories: Sequence[str], iou_threshold=0.5) -> Dict[str, float]:
    by_id = {r.image_id: r for r in annotations if r.is_positive}
    hits = {cat: 0 for cat in categories}
    count = 0
    for res in results:
        record = by_id.get(res.image_id)
        if record is None: continue
        count += 1
        for cat in categories:
            det, gt = res.detections.get(cat), record.box_for(cat)
            if det is not None and gt is not None and iou(det.box, gt) >= iou_threshold:
                hits[cat] += 1
    if count == 0:
        raise ValidationError("grounding_accuracy needs at least one positive image among the results")
    return {cat: hits[cat] / count for cat in categories}


# define format_table() which lays recall tables out as aligned text, one row
# per method and one column per N
def format_table(tables: Sequence[RecallTable]) -> str:
    if not tables: return ""
    n_grid = tables[0].n_grid
    header = ["method"] + [f"R@{n}" for n in n_grid]
    rows = []
    for tbl in tables:
        cells = [tbl.method]
        for m, s in zip(tbl.means, tbl.stds):
            cells.append(f"{m:.3f} ({s:.3f})" if tbl.stochastic else f"{m:.3f}")
        rows.append(cells)
    widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths)))
             for r in [header] + rows]
    return "\n".join(line.rstrip() for line in lines) + "\n"

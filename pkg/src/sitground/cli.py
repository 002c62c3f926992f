# File Name: cli.py
# Created By: ZW
# Created On: 2023-04-05
# Purpose: command-line surface for sitground. subcommands generate a
#  synthetic corpus, train a situation model, run one image, rank a test set
#  and evaluate or compare the ranking methods.

# module imports
# ----------------------------------------------------------------------------
import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .config import engine_config, load_config, synth_spec, training_config
from .core.errors import FormatError, LookupMissError, ValidationError
from .core.records import AnnotationRecord
from .operations.engine import RunResult, derive_rng, run_image
from .operations.evaluation import (DEFAULT_SEEDS, DEFAULT_TOP_K, METHODS, UNARY_MODES, compare_methods,
                                    evaluate_method, fit_pairwise_gmms, format_table, group_priors, ranked,
                                    run_tasks)
from .operations.features import FileFeatures, OracleFeatures, store_read
from .operations.readers import (load_annotations, load_json, load_model, load_priors, load_scenes,
                                 load_situation, load_synth_spec)
from .operations.render import DEFAULT_SNAPSHOTS, render_run
from .operations.synth import generate_synthetic
from .operations.training import train_situation
from .operations.writers import (write_annotations, write_json, write_model, write_priors, write_rankings,
                                 write_scenes, write_situation, write_trace)

logger = logging.getLogger(__name__)


# constants definitions
# ----------------------------------------------------------------------------
EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_FORMAT = 3
STORE_SUFFIX = ".sitf"
CORPUS_FILES = {
    "situation": "situation.json",
    "spec": "synth_spec.json",
    "train": "train.jsonl",
    "test": "test.jsonl",
    "priors": "priors.jsonl",
    "scenes": "scenes.jsonl",
}


# function definitions
# ----------------------------------------------------------------------------

def parse_seeds(text) -> List[int]:
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be comma separated integers, got {text!r}") from None
    if not seeds:
        raise argparse.ArgumentTypeError("at least one seed is required")
    return seeds


# define open_features() which builds the feature provider named by --features:
# a .sitf feature store, or a synthetic scene file driving the oracle
def open_features(path, annotations: Sequence[AnnotationRecord]):
    fpath = Path(path)
    if fpath.suffix == STORE_SUFFIX:
        store = store_read(fpath)
        return FileFeatures(store, {r.image_id: r.dims for r in annotations})
    scenes, categories, oracle = load_scenes(fpath)
    return OracleFeatures(scenes, categories, oracle)


def seed_list(args) -> List[int]:
    if args.seeds is not None: return args.seeds
    if args.seed is not None: return [args.seed]
    return list(DEFAULT_SEEDS)


# collect the engine flags that were actually given
def engine_overrides(args) -> Dict:
    overrides = {
        "max_iterations": args.max_iter,
        "p": args.p,
        "p_prime": args.p_prime,
        "tau_refine": args.tau_refine,
        "tau_detect": args.tau_detect,
        "seed": getattr(args, "seed", None),
        "uniform_mode": True if args.uniform else None,
    }
    if args.w_int is not None:
        overrides["w_int"] = args.w_int
        overrides["w_ext"] = 1.0 - args.w_int
    return overrides


# define cmd_synth() which writes a complete synthetic corpus and a manifest
def cmd_synth(args) -> int:
    config = load_config(args.config)
    base = None
    if args.spec is not None:
        base = load_json(args.spec)
        if "format" in base or "version" in base: base = load_synth_spec(args.spec).to_document()
        # a bare situation file only names the categories
        if set(base) == {"name", "categories"}: base = {"situation": base}
    spec = synth_spec(config, base, seed=args.seed)
    corpus = generate_synthetic(spec)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_situation(spec.situation, out / CORPUS_FILES["situation"])
    write_json(spec.to_document(), out / CORPUS_FILES["spec"], "synth spec")
    write_annotations(corpus.train, out / CORPUS_FILES["train"])
    write_annotations(corpus.test, out / CORPUS_FILES["test"])
    write_priors(corpus.priors, out / CORPUS_FILES["priors"])
    write_scenes(corpus.scenes, spec.situation.categories, spec.oracle, out / CORPUS_FILES["scenes"])
    manifest = {
        "seed": spec.seed,
        "files": {
            key: {"path": name, "bytes": (out / name).stat().st_size}
            for key, name in CORPUS_FILES.items()
        },
        "counts": {"train": len(corpus.train), "test": len(corpus.test), "priors": len(corpus.priors)},
    }
    write_json(manifest, out / "manifest.json", "manifest")
    print(out.resolve())
    return EXIT_OK


# define cmd_train() which trains the situation model (plus the pair GMMs
# used by the irsg ranking) and writes the model document
def cmd_train(args) -> int:
    config = load_config(args.config)
    tconf = training_config(config, seed=args.seed)
    situation = load_situation(args.spec)
    annotations = load_annotations(args.annotations, situation)
    provider = open_features(args.features, annotations)
    model = train_situation(annotations, situation, provider, tconf)

    positives = [r for r in annotations if r.is_positive]
    if len(positives) >= 5 * tconf.gmm_components:
        gmms = fit_pairwise_gmms(positives, situation.categories, tconf.gmm_components,
                                 np.random.default_rng(tconf.seed))
        model = type(model)(model.categories, model.relationship, model.size_shape_priors,
                            model.localizers, model.refiners, gmms)
    else:
        logger.warning(f"only {len(positives)} positives; skipping pair GMMs (irsg will be unavailable)")
    write_model(model, args.model)
    print(Path(args.model).resolve())
    return EXIT_OK


def _load_run_inputs(args):
    model = load_model(args.model)
    annotations = load_annotations(args.annotations)
    priors = load_priors(args.priors) if args.priors is not None else []
    provider = open_features(args.features, annotations)
    return model, annotations, priors, provider


# define cmd_run() which grounds the situation in one image, optionally
# writing the per-agent trace and the SVG strip
def cmd_run(args) -> int:
    model, annotations, priors, provider = _load_run_inputs(args)
    record = next((r for r in annotations if r.image_id == args.image_id), None)
    if record is None:
        raise LookupMissError(f"image {args.image_id!r} is not in {args.annotations}")
    config = engine_config(load_config(args.config), **engine_overrides(args))
    mine = [p for p in priors if p.image_id == record.image_id]
    snapshot_at = DEFAULT_SNAPSHOTS if args.svg is not None else ()
    result: RunResult = run_image(record.image_id, record.dims, mine, model, provider, config,
                                  derive_rng(config.seed, record.image_id), snapshot_at)
    if args.trace is not None:
        write_trace(result.trace, args.trace, record.image_id)
    if args.svg is not None:
        cats = config.categories or model.categories
        gt = {c: record.box_for(c) for c in cats if record.box_for(c) is not None}
        render_run(result, record.dims, cats, args.svg, gt)
    print(f"{result.image_id}\t{result.score!r}\t{result.agents_executed}")
    return EXIT_OK


# define cmd_rank() which scores every test image and writes one ranked CSV
# per seed
def cmd_rank(args) -> int:
    model, annotations, priors, provider = _load_run_inputs(args)
    config = engine_config(load_config(args.config), **engine_overrides(args))
    by_image = group_priors(priors)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    method = "uniform" if config.uniform_mode else "situate"
    seeds = seed_list(args)
    tasks = [(replace(config, seed=seed), r) for seed in seeds for r in annotations]
    results = run_tasks(tasks, by_image, model, provider, args.jobs)
    for i, seed in enumerate(seeds):
        chunk = results[i * len(annotations):(i + 1) * len(annotations)]
        print(write_rankings(ranked(chunk, annotations), out / f"{method}_seed{seed}.csv"))
    return EXIT_OK


def cmd_eval(args) -> int:
    model, annotations, priors, provider = _load_run_inputs(args)
    config = engine_config(load_config(args.config), **engine_overrides(args))
    table = evaluate_method(args.method, annotations, priors, model, provider, config,
                            seed_list(args), args.top_k_irsg, args.unary, args.jobs)
    if args.out is not None:
        write_json({"methods": [table.to_document()]}, args.out, "recall report")
    sys.stdout.write(format_table([table]))
    return EXIT_OK


def cmd_compare(args) -> int:
    model, annotations, priors, provider = _load_run_inputs(args)
    config = engine_config(load_config(args.config), **engine_overrides(args))
    report = compare_methods(annotations, priors, model, provider, config,
                             seed_list(args), args.top_k_irsg, args.unary, args.jobs)
    if args.out is not None:
        write_json(report.to_document(), args.out, "comparison report")
    sys.stdout.write(format_table(report.tables))
    return EXIT_OK


def _add_engine_flags(parser):
    group = parser.add_argument_group("engine")
    group.add_argument("--max-iter", type=int, help="agents run per image (default 300)")
    group.add_argument("--p", type=int, help="prior agents per category (default 10)")
    group.add_argument("--p-prime", type=int, help="explorer agents in the pool (default 30)")
    group.add_argument("--tau-refine", type=float, help="internal support that spawns a refiner")
    group.add_argument("--tau-detect", type=float, help="total support that promotes a detection")
    group.add_argument("--w-int", type=float, help="weight of internal support; external gets 1 - w-int")
    group.add_argument("--uniform", action="store_true", help="run the uniform lesion")


def _add_run_inputs(parser, out_help=None):
    parser.add_argument("--model", required=True, help="trained model document")
    parser.add_argument("--annotations", required=True, help="annotations of the images to score")
    parser.add_argument("--priors", help="prior proposals (JSON lines)")
    parser.add_argument("--features", required=True, help="scene file (oracle) or .sitf feature store")
    if out_help is not None: parser.add_argument("--out", help=out_help)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sitground", description="Ground and rank multi-object visual situations.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v info, -vv debug logging")
    parser.add_argument("--config", type=Path, help="JSON file with engine/training/synth sections")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--spec", help="synth spec or situation JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a situation model")
    p.add_argument("--spec", required=True, help="situation JSON")
    p.add_argument("--annotations", required=True)
    p.add_argument("--features", required=True, help="scene file (oracle) or .sitf feature store")
    p.add_argument("--model", "--out", dest="model", required=True, help="output model document")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("run", help="ground the situation in one image")
    _add_run_inputs(p)
    p.add_argument("--image-id", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--trace", help="write the agent trace (JSON lines)")
    p.add_argument("--svg", help="write the run strip (SVG)")
    _add_engine_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("rank", help="rank the test images, one CSV per seed")
    _add_run_inputs(p, "output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--seeds", type=parse_seeds, help="comma separated seeds")
    p.add_argument("--jobs", type=int, default=1)
    _add_engine_flags(p)
    p.set_defaults(func=cmd_rank)

    for name, func, help_text in (("eval", cmd_eval, "recall table of one method"),
                                  ("compare", cmd_compare, "recall tables of every method")):
        p = sub.add_parser(name, help=help_text)
        _add_run_inputs(p, "JSON report path")
        if name == "eval":
            p.add_argument("--method", choices=METHODS, default="situate")
        p.add_argument("--seed", type=int)
        p.add_argument("--seeds", type=parse_seeds, help="comma separated seeds (default 0-9)")
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--top-k-irsg", type=int, default=DEFAULT_TOP_K)
        p.add_argument("--unary", choices=UNARY_MODES, default="confidence")
        _add_engine_flags(p)
        p.set_defaults(func=func)
    return parser


# print the one-line failure reason to stderr
def report_error(err, code) -> int:
    reason = " ".join(str(err).split())
    print(f"error: {type(err).__name__}: {reason}", file=sys.stderr)
    return code


def configure_logging(verbosity):
    level = logging.WARNING
    if verbosity == 1: level = logging.INFO
    elif verbosity > 1: level = logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", force=True)


# define main() which runs one subcommand and maps failures to exit codes:
# 2 for invalid input, 3 for unreadable or malformed files
def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    try:
        return args.func(args)
    except (ValidationError, LookupMissError) as err:
        return report_error(err, EXIT_VALIDATION)
    except (FormatError, OSError) as err:
        return report_error(err, EXIT_FORMAT)


if __name__ == "__main__":
    sys.exit(main())

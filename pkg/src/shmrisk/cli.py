"""Command-line front end for the case-study pipeline.

Every subcommand accepts ``--config`` (a JSON file or the literal
``default``), ``--seed`` to override the configured seed, and ``--out``
to override the output directory (which also honours the SHMRISK_OUT
environment variable).  Exit status is 0 on success, 1 with a
stage-tagged message on pipeline failure, 2 on bad usage.
"""

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .classify import GaussianNoveltyDetector, MlpLocaliser
from .decision import optimal_strategy
from .faulttree import FaultTree, four_bay_fault_tree, top_event_probability
from .harness import (
    DAMAGE_STATES,
    SWEEP_MODES,
    UNDAMAGED,
    ExperimentConfig,
    HarnessError,
    _build_case,
    _build_decision_model,
    _features,
    _labels,
    _write_csv,
    resolve_output_dir,
    run_case_study,
    sweep_costs,
    synthesize_dataset,
)
from .transition import LoadGrid, build_transition, calibrate_wmax, maintenance_matrix
from .truss import build_four_bay_truss

_SPLITS = {
    # (states, loads attribute, reps attribute or count, seed stream)
    "train": (DAMAGE_STATES, "train_loads", None, 0),
    "validation": (DAMAGE_STATES, "validation_loads", None, 1),
    "train-undamaged": ((UNDAMAGED,), "train_loads", None, 2),
    "test-damaged": (DAMAGE_STATES, "validation_loads", 1, 3),
    "test-undamaged": ((UNDAMAGED,), "validation_loads", len(DAMAGE_STATES), 4),
}


def _load_config(args) -> ExperimentConfig:
    source = getattr(args, "config", None)
    if source in (None, "default"):
        config = ExperimentConfig()
    else:
        config = ExperimentConfig.load(source)
    if getattr(args, "seed", None) is not None:
        config = replace(config, seed=args.seed)
    return config


def _out_dir(config, args) -> Path:
    return resolve_output_dir(config, getattr(args, "out", None))


def _cmd_calibrate(args) -> int:
    config = _load_config(args)
    model = build_four_bay_truss()
    w_max = config.w_max if config.w_max is not None else calibrate_wmax(model)
    print(repr(float(w_max)))
    return 0


def _cmd_transition(args) -> int:
    config = _load_config(args)
    model = build_four_bay_truss()
    w_max = config.w_max if config.w_max is not None else calibrate_wmax(model)
    directory = _out_dir(config, args)
    directory.mkdir(parents=True, exist_ok=True)
    do_nothing = build_transition(model, LoadGrid(w_max))
    for matrix, name in (
        (do_nothing, "transition_do_nothing.csv"),
        (maintenance_matrix(), "transition_maintenance.csv"),
    ):
        path = directory / name
        matrix.to_csv(path)
        print(path)
    return 0


def _cmd_synth(args) -> int:
    config = _load_config(args)
    states, loads_attr, reps, stream = _SPLITS[args.split]
    loads = getattr(config, loads_attr)
    reps = config.repetitions if reps is None else reps
    model = build_four_bay_truss()
    samples = synthesize_dataset(
        model, states, loads, reps, config.noise_rms, (config.seed, stream)
    )
    directory = _out_dir(config, args)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"samples_{args.split}.csv"
    _write_csv(
        path,
        ["state", "location", "magnitude_kg", "noise_seed"]
        + [f"s{i}" for i in range(1, 13)],
        (
            [
                s.true_health.decimal,
                s.load_case.location,
                s.load_case.magnitude_kg,
                s.noise_seed,
                *s.strains.tolist(),
            ]
            for s in samples
        ),
    )
    print(path)
    return 0


def _cmd_train(args) -> int:
    config = _load_config(args)
    model = build_four_bay_truss()
    seed = config.seed
    train = synthesize_dataset(
        model, DAMAGE_STATES, config.train_loads,
        config.repetitions, config.noise_rms, (seed, 0),
    )
    validation = synthesize_dataset(
        model, DAMAGE_STATES, config.validation_loads,
        config.repetitions, config.noise_rms, (seed, 1),
    )
    undamaged = synthesize_dataset(
        model, (UNDAMAGED,), config.train_loads,
        config.repetitions, config.noise_rms, (seed, 2),
    )
    detector = GaussianNoveltyDetector().fit(_features(undamaged))
    localiser = MlpLocaliser(max_iter=config.localiser_max_iter, random_state=seed)
    localiser.fit(
        _features(train), _labels(train),
        validation=(_features(validation), _labels(validation)),
    )
    directory = _out_dir(config, args)
    directory.mkdir(parents=True, exist_ok=True)
    detector_path = directory / "detector.json"
    localiser_path = directory / "localiser.json"
    detector.save(detector_path)
    localiser.save(localiser_path)
    accuracy = float(
        np.mean(localiser.predict(_features(validation)) == _labels(validation))
    )
    print(detector_path)
    print(localiser_path)
    print(f"validation_accuracy,{accuracy!r}")
    return 0


def _read_belief(path) -> np.ndarray:
    text = Path(path).read_text(encoding="utf-8")
    values = [float(v) for v in text.replace(",", " ").split()]
    return np.array(values)


def _cmd_decide(args) -> int:
    config = _load_config(args)
    _, _, decision_model = _build_decision_model(config)
    if args.belief is not None:
        belief = _read_belief(args.belief)
    else:
        if not 0 <= args.state < decision_model.n_states:
            raise ValueError(
                f"state must be in [0, {decision_model.n_states}), got {args.state}"
            )
        belief = np.zeros(decision_model.n_states)
        belief[args.state] = 1.0
    strategy, utility = optimal_strategy(decision_model, belief, config.utilities)
    print(f"{strategy.d0},{strategy.d1},{float(utility)!r}")
    return 0


def _cmd_case_study(args) -> int:
    config = _load_config(args)
    result = run_case_study(config, out_dir=getattr(args, "out", None))
    print(result.output_dir / "summary.md")
    print(f"detector_accuracy,{result.detector_accuracy!r}")
    print(f"localiser_accuracy,{result.localiser_accuracy!r}")
    print(f"decision_accuracy,{result.score_overall.accuracy!r}")
    return 0


def _cmd_sweep(args) -> int:
    config = _load_config(args)
    c_fail = [float(v) for v in args.c_fail.split(",") if v]
    c_maint = [float(v) for v in args.c_maint.split(",") if v]
    case = _build_case(config) if args.mode == "accuracy-vs-cost" else None
    path, _ = sweep_costs(
        config, c_fail, c_maint, args.mode,
        out_dir=getattr(args, "out", None), case=case,
    )
    print(path)
    return 0


def _cmd_ft(args) -> int:
    if args.action == "emit":
        path = Path(args.out_file if args.out_file else "truss.ft")
        four_bay_fault_tree().dump(path)
        print(path)
        return 0
    tree = FaultTree.load(args.tree) if args.tree else four_bay_fault_tree()
    priors = {basic: args.prior for basic in tree.basic_ids}
    print(repr(float(top_event_probability(tree, priors))))
    return 0


def _add_common(parser) -> None:
    parser.add_argument("--config", default=None,
                        help="JSON config file, or 'default' for built-ins")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the configured seed")
    parser.add_argument("--out", default=None,
                        help="output directory (also settable via SHMRISK_OUT)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shmrisk",
        description="risk-based maintenance decisions for a monitored truss",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    _add_common(sub.add_parser("calibrate", help="print the calibrated peak load"))
    _add_common(sub.add_parser("transition", help="write both transition matrices"))

    synth = sub.add_parser("synth", help="write one synthetic dataset split")
    synth.add_argument("--split", choices=sorted(_SPLITS), default="train")
    _add_common(synth)

    _add_common(sub.add_parser("train", help="fit and save both classifiers"))

    decide = sub.add_parser("decide", help="optimal strategy for one belief")
    group = decide.add_mutually_exclusive_group(required=True)
    group.add_argument("--state", type=int, help="decimal health state, certainty")
    group.add_argument("--belief", help="file of 256 probabilities")
    _add_common(decide)

    _add_common(sub.add_parser("case-study", help="run the full report bundle"))

    sweep = sub.add_parser("sweep", help="cost sensitivity tables")
    sweep.add_argument("--mode", choices=SWEEP_MODES, required=True)
    sweep.add_argument("--c-fail", required=True, help="comma-separated costs")
    sweep.add_argument("--c-maint", default="100", help="comma-separated costs")
    _add_common(sweep)

    ft = sub.add_parser("ft", help="fault-tree queries")
    ft.add_argument("action", choices=["top-prob", "emit"])
    ft.add_argument("--tree",
                    help="fault-tree document to load (default: built-in tree)")
    ft.add_argument("--prior", type=float, default=0.5,
                    help="failure prior applied to every basic event")
    ft.add_argument("--out-file", default=None, help="where 'emit' writes the tree")
    _add_common(ft)

    return parser


_DISPATCH = {
    "calibrate": _cmd_calibrate,
    "transition": _cmd_transition,
    "synth": _cmd_synth,
    "train": _cmd_train,
    "decide": _cmd_decide,
    "case-study": _cmd_case_study,
    "sweep": _cmd_sweep,
    "ft": _cmd_ft,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _DISPATCH[args.command](args)
    except HarnessError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: [{args.command}] {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

#!/usr/bin/env python3
"""End-to-end comparison: default SVM vs DE-SVM vs PSO-SVM on one dataset.

Loads a daily OHLCV CSV (or generates a synthetic walk), normalizes on the
training rows, tunes with both optimizers, and prints the side-by-side
table plus a per-row prediction sample in price units. Artifacts (reports,
models, histories, prediction CSV) land in --out.
"""

import argparse
import os
from pathlib import Path

from svrtune.cli import EXIT_OK
from svrtune.dataset import (
    SplitSpec,
    apply_normalizer,
    build_supervised,
    fit_normalizer,
    normalizer_to_json,
    parse_csv,
    series_to_csv,
    split,
)
from svrtune.optim import DeConfig, PsoConfig, history_csv
from svrtune.svr import SolverSettings, model_to_json
from svrtune.synth import synthetic_ohlcv
from svrtune.tuning import (
    FitnessSpec,
    ParamBox,
    PRESET_BOXES,
    compare_report,
    evaluate_triple,
    report_to_json,
    tune,
)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--data", help="OHLCV CSV; omit to generate a synthetic walk")
    parser.add_argument("--synthetic-seed", type=int, default=0)
    parser.add_argument("--rows", type=int, default=701)
    parser.add_argument("--train-n", type=int, default=500)
    parser.add_argument("--test-n", type=int, default=200)
    parser.add_argument("--preset", choices=sorted(PRESET_BOXES), default=None)
    parser.add_argument("--np", dest="np_size", type=int, default=15)
    parser.add_argument("--gmax", type=int, default=50)
    parser.add_argument("--swarm", type=int, default=15)
    parser.add_argument("--iters", type=int, default=50)
    parser.add_argument("--fitness", default="holdout:0.2")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    parser.add_argument("--out", required=True)
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if args.data:
        text = Path(args.data).read_text(encoding="utf-8")
        series = parse_csv(text)
    else:
        series = synthetic_ohlcv(rows=args.rows, seed=args.synthetic_seed, drift=0.0)
        (out / "data.csv").write_text(series_to_csv(series), encoding="utf-8")

    sset = build_supervised(series)
    nmap = fit_normalizer(sset, -1.0, 1.0, fit_rows=range(args.train_n))
    normed = apply_normalizer(nmap, sset)
    train, test = split(normed, SplitSpec(args.train_n, args.test_n))
    (out / "normalizer.json").write_text(normalizer_to_json(nmap), encoding="utf-8")

    if args.preset:
        box = PRESET_BOXES[args.preset]
    else:
        box = ParamBox((1.0, 550.0), (0.01, 0.3), (0.2, 4.0))
    if args.fitness.startswith("holdout:"):
        fitness = FitnessSpec.holdout(float(args.fitness.split(":")[1]))
    elif args.fitness.startswith("kfold:"):
        fitness = FitnessSpec.kfold(int(args.fitness.split(":")[1]))
    else:
        fitness = FitnessSpec.train_mse()
    settings = SolverSettings(max_passes=3)

    default_report, default_model = evaluate_triple(
        train, test, 1.0, 0.1, 0.2, settings=settings, seed=args.seed)
    de_config = DeConfig(pop_size=args.np_size, g_max=args.gmax, cr=0.7, f=0.9,
                         strategy="local_to_best_1_bin", seed=args.seed)
    de_report, de_model = tune(train, test, box, de_config, fitness, settings,
                               workers=args.threads)
    pso_config = PsoConfig(swarm=args.swarm, iters=args.iters, seed=args.seed)
    pso_report, pso_model = tune(train, test, box, pso_config, fitness, settings,
                                 workers=args.threads)

    for name, report, model in (
        ("svm", default_report, default_model),
        ("de", de_report, de_model),
        ("pso", pso_report, pso_model),
    ):
        (out / f"{name}_report.json").write_text(report_to_json(report), encoding="utf-8")
        (out / f"{name}_model.json").write_text(model_to_json(model), encoding="utf-8")
        if report.optimizer_history is not None:
            (out / f"{name}_history.csv").write_text(
                history_csv(report.optimizer_history), encoding="utf-8")

    table = compare_report([default_report, de_report, pso_report],
                           normalizer=nmap, test=test,
                           models=[default_model, de_model, pso_model])
    print(table.render())
    (out / "predictions.csv").write_text(table.predictions_csv(), encoding="utf-8")
    print("\nfirst five test-day predictions (price units):")
    header = ",".join(table.prediction_columns)
    print(header)
    for row in table.predictions[:5]:
        print(",".join(f"{v:.4f}" for v in row))
    print(f"\nartifacts in {out}")
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())

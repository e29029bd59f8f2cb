"""Command-line frontend for the whole pipeline.

Exit codes: 0 success, 2 usage error, 3 data validation error,
4 degenerate computation. All randomness flows from --seed; every
mutating command writes a run manifest sufficient to reproduce it.
"""

from __future__ import annotations

import argparse
import csv as _csv
import io as _io
import json
import os
import sys
import time
from typing import Any, Sequence

import numpy as np

from . import __version__
from .analysis import (
    ALL_METHODS,
    ad_report,
    discover_patterns,
    evaluate_situation,
    EvaluationReport,
    optimize_baseline_focal,
    ratings_matrix,
    run_ablation,
)
from .calibration import Calibration, calibrate_situation
from .core import DegenerateDataError, ValidationError
from .io import (
    dataset_hash,
    load_dataset,
    manual_ratings_from_csv,
    profile_from_dict,
    save_dataset,
    situation_model_to_dict,
)
from .learning import GridSpec, TrainedModel, grid_search_train, trace_to_csv
from .synth import SynthConfig, generate
from .util import (
    atomic_write_text,
    default_jobs,
    parse_int_range,
    read_json,
    write_json,
)

OUT_DIR_ENV = "LERVUP_OUT_DIR"


def _variant_name(cli_name: str) -> str:
    return cli_name.replace("-", "_")


def _resolve_out(path: str) -> str:
    override = os.environ.get(OUT_DIR_ENV)
    return override if override else path


def _load_grid(path: str | None) -> GridSpec:
    if path is None:
        return GridSpec()
    return GridSpec.from_dict(read_json(path))


def _write_manifest(out_dir: str, command: str, args: dict[str, Any],
                    outputs: Sequence[str], started: float,
                    extra: dict[str, Any] | None = None) -> None:
    manifest = {
        "command": command,
        "args": {k: v for k, v in sorted(args.items())},
        "outputs": sorted(outputs),
        "elapsed_seconds": round(time.time() - started, 3),
        "version": __version__,
    }
    if extra:
        manifest.update(extra)
    write_json(os.path.join(out_dir, "manifest.json"), manifest)


def _emit(payload: Any, fmt: str, rows=None) -> None:
    if fmt == "json":
        print(json.dumps(payload, indent=2, sort_keys=True, default=str))
    elif fmt == "csv" and rows is not None:
        buffer = _io.StringIO()
        writer = _csv.writer(buffer, lineterminator="\n")
        for row in rows:
            writer.writerow(row)
        print(buffer.getvalue(), end="")
    elif fmt == "md" and rows is not None:
        header, *body = rows
        print("| " + " | ".join(str(c) for c in header) + " |")
        print("|" + "---|" * len(header))
        for row in body:
            print("| " + " | ".join(str(c) for c in row) + " |")
    else:
        print(json.dumps(payload, indent=2, sort_keys=True, default=str))


def cmd_synth(args) -> int:
    started = time.time()
    config = SynthConfig.from_dict(read_json(args.config))
    if args.seed is not None:
        config = SynthConfig.from_dict({**config.to_dict(), "seed": args.seed})
    models, dataset = generate(config)
    out = _resolve_out(args.out)
    save_dataset(out, dataset, models, extra={"synth_config.json": config.to_dict()})
    digest = dataset_hash(dataset, models)
    _write_manifest(out, "synth",
                    {"config": os.path.abspath(args.config),
                     "seed": config.seed, "out": os.path.abspath(out)},
                    ["situations/", "profiles.json", "ratings.csv",
                     "split.json", "synth_config.json"],
                    started, {"dataset_hash": digest})
    print(json.dumps({"out": out, "dataset_hash": digest,
                      "users": config.n_users,
                      "situations": list(config.situations)}))
    return 0


def cmd_calibrate(args) -> int:
    started = time.time()
    dataset, models = load_dataset(args.dataset)
    if args.situation not in models:
        raise ValidationError(f"situation {args.situation!r} not in dataset")
    calibration = calibrate_situation(
        dataset, args.situation, models[args.situation],
        rank_transform=args.rank_transform, jobs=args.jobs,
        global_eta=not args.no_global_eta)
    out = _resolve_out(args.out)
    calibration.save(out)
    print(json.dumps({
        "situation": args.situation,
        "objects": len(calibration.table.entries),
        "tau_threshold": calibration.selection.tau_threshold,
        "active_objects": len(calibration.selection.active_objects),
        "global_eta": calibration.global_eta,
        "out": out,
    }))
    _write_manifest(os.path.dirname(os.path.abspath(out)) or ".", "calibrate",
                    {"dataset": os.path.abspath(args.dataset),
                     "situation": args.situation,
                     "rank_transform": args.rank_transform,
                     "out": os.path.abspath(out)},
                    [os.path.basename(out)], started,
                    {"dataset_hash": dataset_hash(dataset, models)})
    return 0


def _train_one(dataset, models, situation_code, variant, grid, seed, jobs,
               calibration_path=None):
    model = models[situation_code]
    if calibration_path:
        calibration = Calibration.load(calibration_path)
    else:
        calibration = calibrate_situation(dataset, situation_code, model,
                                          jobs=jobs, global_eta=False)
    digest = dataset_hash(dataset, models)
    trained = grid_search_train(dataset, situation_code, model, calibration,
                                variant, grid, seed=seed, dataset_hash=digest)
    return trained, calibration, digest


def cmd_train(args) -> int:
    started = time.time()
    dataset, models = load_dataset(args.dataset)
    if args.situation not in models:
        raise ValidationError(f"situation {args.situation!r} not in dataset")
    variant = _variant_name(args.variant)
    grid = _load_grid(args.grid)
    trained, calibration, digest = _train_one(
        dataset, models, args.situation, variant, grid, args.seed, args.jobs,
        args.calibration)
    out = _resolve_out(args.out)
    os.makedirs(out, exist_ok=True)
    model_path = os.path.join(out, f"{variant}.json")
    trace_path = os.path.join(out, f"{variant}_trace.csv")
    trained.save(model_path)
    atomic_write_text(trace_path, trace_to_csv(trained.trace))
    _write_manifest(out, "train",
                    {"dataset": os.path.abspath(args.dataset),
                     "situation": args.situation, "variant": variant,
                     "grid": os.path.abspath(args.grid) if args.grid else None,
                     "seed": args.seed, "out": os.path.abspath(out)},
                    [os.path.basename(model_path), os.path.basename(trace_path)],
                    started, {"dataset_hash": digest,
                              "model_hash": trained.model_hash()})
    print(json.dumps({
        "variant": variant, "situation": args.situation,
        "validation_pearson": trained.provenance.get("validation_pearson"),
        "grid_points": trained.provenance.get("grid_points"),
        "model": model_path, "trace": trace_path,
    }))
    return 0


def cmd_evaluate(args) -> int:
    started = time.time()
    dataset, models = load_dataset(args.dataset)
    codes = sorted(models) if args.situations is None \
        else [c for c in args.situations.split(",") if c]
    for code in codes:
        if code not in models:
            raise ValidationError(f"situation {code!r} not in dataset")
    methods = list(ALL_METHODS) if args.methods == "all" \
        else [_variant_name(m) for m in args.methods.split(",") if m]
    grid = _load_grid(args.grid)
    digest = dataset_hash(dataset, models)
    out = _resolve_out(args.out)
    os.makedirs(out, exist_ok=True)
    all_results = []
    outputs = []
    for code in codes:
        model = models[code]
        calibration = calibrate_situation(
            dataset, code, model, jobs=args.jobs,
            global_eta="base" in methods)
        if "base_eta_fr" in methods:
            focal = optimize_baseline_focal(dataset, code, model, calibration,
                                            grid.k_params, grid.gammas)
            calibration = Calibration(calibration.table, calibration.selection,
                                      calibration.global_eta, focal)
        os.makedirs(os.path.join(out, "situations"), exist_ok=True)
        os.makedirs(os.path.join(out, "calibration"), exist_ok=True)
        write_json(os.path.join(out, "situations", f"{code}.json"),
                   situation_model_to_dict(model))
        calibration.save(os.path.join(out, "calibration", f"{code}.json"))
        outputs += [f"situations/{code}.json", f"calibration/{code}.json"]
        trained: dict[str, TrainedModel] = {}
        for method in methods:
            if method in ("base", "base_eta", "base_eta_fr"):
                continue
            trained[method] = grid_search_train(
                dataset, code, model, calibration, method, grid,
                seed=args.seed, dataset_hash=digest)
            model_dir = os.path.join(out, "models", code)
            os.makedirs(model_dir, exist_ok=True)
            trained[method].save(os.path.join(model_dir, f"{method}.json"))
            atomic_write_text(os.path.join(model_dir, f"{method}_trace.csv"),
                              trace_to_csv(trained[method].trace))
            outputs += [f"models/{code}/{method}.json",
                        f"models/{code}/{method}_trace.csv"]
        all_results.extend(evaluate_situation(
            dataset, code, model, methods, grid, seed=args.seed,
            calibration=calibration, trained=trained))
    report = EvaluationReport(tuple(all_results))
    os.makedirs(os.path.join(out, "reports"), exist_ok=True)
    atomic_write_text(os.path.join(out, "reports", "evaluation.csv"),
                      report.to_csv())
    atomic_write_text(os.path.join(out, "reports", "evaluation.md"),
                      report.to_markdown())
    outputs += ["reports/evaluation.csv", "reports/evaluation.md"]
    _write_manifest(out, "evaluate",
                    {"dataset": os.path.abspath(args.dataset),
                     "situations": codes, "methods": methods,
                     "grid": os.path.abspath(args.grid) if args.grid else None,
                     "seed": args.seed, "out": os.path.abspath(out)},
                    outputs, started, {"dataset_hash": digest})
    if args.format == "md":
        print(report.to_markdown(), end="")
    elif args.format == "csv":
        print(report.to_csv(), end="")
    else:
        print(json.dumps([r.__dict__ for r in report.results], indent=2,
                         sort_keys=True))
    return 0


def cmd_ablate(args) -> int:
    started = time.time()
    dataset, models = load_dataset(args.dataset)
    if args.situation not in models:
        raise ValidationError(f"situation {args.situation!r} not in dataset")
    seeds = parse_int_range(args.seeds)
    grid = _load_grid(args.grid)
    report = run_ablation(dataset, args.situation, models[args.situation],
                          _variant_name(args.variant), args.mode, seeds, grid,
                          jobs=args.jobs)
    payload = report.to_dict()
    if args.out:
        out = _resolve_out(args.out)
        write_json(out, payload)
        _write_manifest(os.path.dirname(os.path.abspath(out)) or ".", "ablate",
                        {"dataset": os.path.abspath(args.dataset),
                         "situation": args.situation, "mode": args.mode,
                         "variant": _variant_name(args.variant),
                         "seeds": seeds,
                         "out": os.path.abspath(out)},
                        [os.path.basename(out)], started,
                        {"dataset_hash": dataset_hash(dataset, models)})
    print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


def cmd_rate(args) -> int:
    from .core import validate_profile_objects
    from .service import ExposureEngine, SituationArtifacts, load_artifacts

    profile = profile_from_dict(read_json(args.profile))
    if args.model:
        trained = TrainedModel.load(args.model)
        if args.strict:
            validate_profile_objects(profile, trained.model_table)
        code = trained.situation.code
        artifacts = {code: SituationArtifacts(
            trained.model_table, trained.calibration,
            {trained.variant: trained})}
        engine = ExposureEngine(artifacts)
        payload = engine.rating_payload(code, trained.variant, profile)
        payload.update({
            "user_id": profile.user_id, "situation": code,
            "method": trained.variant,
            "photos": engine.photo_payloads(code, profile),
        })
        print(json.dumps(payload, indent=2, sort_keys=True))
        return 0
    artifacts = load_artifacts(args.models)
    engine = ExposureEngine(artifacts)
    situations = {}
    for code in engine.situation_codes():
        method = args.method or engine.artifacts[code].methods()[-1]
        if method not in engine.artifacts[code].methods():
            continue
        entry = engine.rating_payload(code, method, profile)
        entry["method"] = method
        entry["photos"] = engine.photo_payloads(code, profile)
        situations[code] = entry
    print(json.dumps({"user_id": profile.user_id, "situations": situations},
                     indent=2, sort_keys=True))
    return 0


def cmd_patterns(args) -> int:
    with open(args.input, encoding="utf-8") as fh:
        manual = manual_ratings_from_csv(fh.read())
    user_ids, codes, matrix = ratings_matrix(manual)
    k_values = parse_int_range(args.k)
    result = discover_patterns(matrix, k_values, seed=args.seed,
                               mode=args.mode)
    counts = np.bincount(result.assignments, minlength=result.k)
    payload = {
        "k": result.k, "silhouette": result.silhouette, "mode": result.mode,
        "situations": codes,
        "patterns": [
            {"pattern": f"P{i + 1}",
             "members": int(counts[i]),
             "centroid": [round(float(v), 3) for v in result.centroids[i]]}
            for i in range(result.k)
        ],
        "per_k": [{"k": k, "silhouette": s} for k, s in result.per_k],
    }
    rows = [["pattern", "members"] + codes]
    for entry in payload["patterns"]:
        rows.append([entry["pattern"], entry["members"]] + entry["centroid"])
    _emit(payload, args.format, rows)
    return 0


def cmd_agreement(args) -> int:
    with open(args.input, encoding="utf-8") as fh:
        manual = manual_ratings_from_csv(fh.read())
    by_situation: dict[str, dict[str, list[int]]] = {}
    for (user_id, code), record in manual.items():
        by_situation.setdefault(code, {})[user_id] = list(record.rater_ratings)
    import warnings as _warnings

    payload = {}
    for code in sorted(by_situation):
        with _warnings.catch_warnings():
            _warnings.simplefilter("ignore")
            report = ad_report(by_situation[code], bound=args.bound)
        payload[code] = {"mean_ad": report["mean"],
                         "acceptable": report["acceptable"],
                         "items_over_bound": report["items_over_bound"]}
    rows = [["situation", "mean_ad", "acceptable"]]
    for code, entry in payload.items():
        rows.append([code, f"{entry['mean_ad']:.4f}",
                     "yes" if entry["acceptable"] else "no"])
    _emit(payload, args.format, rows)
    return 0


def cmd_reference(args) -> int:
    started = time.time()
    from .service import ExposureEngine, build_reference, load_artifacts

    dataset, _ = load_dataset(args.dataset)
    engine = ExposureEngine(load_artifacts(args.models))
    reference = build_reference(engine, list(dataset.profiles),
                                _variant_name(args.method),
                                min_size=args.min_size)
    out = _resolve_out(args.out)
    write_json(out, reference.to_dict())
    _write_manifest(os.path.dirname(os.path.abspath(out)) or ".", "reference",
                    {"models": os.path.abspath(args.models),
                     "dataset": os.path.abspath(args.dataset),
                     "method": _variant_name(args.method),
                     "out": os.path.abspath(out)},
                    [os.path.basename(out)], started)
    print(json.dumps({"out": out,
                      "situations": sorted(reference.ratings),
                      "sizes": {k: len(v)
                                for k, v in reference.ratings.items()}}))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import (
        ExposureEngine,
        ReferenceCommunity,
        create_app,
        load_artifacts,
    )

    artifacts = load_artifacts(args.models)
    reference = None
    if args.reference:
        reference = ReferenceCommunity.from_dict(read_json(args.reference))
    engine = ExposureEngine(artifacts, reference)
    app = create_app(engine)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_rerun(args) -> int:
    manifest = read_json(args.manifest)
    command = manifest["command"]
    stored = manifest["args"]
    argv = [command]
    for key, value in stored.items():
        if value is None or value is False:
            continue
        flag = "--" + key.replace("_", "-")
        if value is True:
            argv.append(flag)
        elif isinstance(value, list):
            argv.extend([flag, ",".join(str(v) for v in value)])
        else:
            argv.extend([flag, str(value)])
    if args.out:
        try:
            index = argv.index("--out")
            argv[index + 1] = args.out
        except ValueError:
            argv.extend(["--out", args.out])
    return main(argv)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lervup",
        description="Situation-aware photo-sharing exposure ratings")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("calibrate", help="calibrate detection thresholds")
    p.add_argument("--situation", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--rank-transform", action="store_true")
    p.add_argument("--no-global-eta", action="store_true")
    p.add_argument("--jobs", type=int, default=default_jobs())
    p.set_defaults(fn=cmd_calibrate)

    p = sub.add_parser("train", help="grid-search train one learned variant")
    p.add_argument("--dataset", required=True)
    p.add_argument("--situation", required=True)
    p.add_argument("--variant", required=True,
                   choices=["reg-raw", "reg-pca", "lervup", "lervup-fr"])
    p.add_argument("--grid", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--calibration", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=default_jobs())
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("evaluate", help="train and compare methods")
    p.add_argument("--dataset", required=True)
    p.add_argument("--methods", default="all")
    p.add_argument("--situations", default=None)
    p.add_argument("--grid", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=["json", "csv", "md"], default="md")
    p.add_argument("--jobs", type=int, default=default_jobs())
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("ablate", help="50% data ablation study")
    p.add_argument("--dataset", required=True)
    p.add_argument("--situation", required=True)
    p.add_argument("--variant", default="lervup-fr")
    p.add_argument("--mode", required=True, choices=["users50", "objects50"])
    p.add_argument("--seeds", required=True, help="e.g. 1..5 or 1,2,3")
    p.add_argument("--grid", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--jobs", type=int, default=default_jobs())
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("rate", help="rate one profile")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--model", help="single trained model artifact")
    group.add_argument("--models", help="artifact directory (all situations)")
    p.add_argument("--profile", required=True)
    p.add_argument("--method", default=None)
    p.set_defaults(fn=cmd_rate)

    p = sub.add_parser("patterns", help="cluster rating patterns")
    p.add_argument("--input", required=True)
    p.add_argument("--k", required=True, help="e.g. 2..60")
    p.add_argument("--mode", choices=["max", "min"], default="max")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=["json", "csv", "md"], default="json")
    p.set_defaults(fn=cmd_patterns)

    p = sub.add_parser("agreement", help="inter-rater agreement report")
    p.add_argument("--input", required=True)
    p.add_argument("--bound", type=float, default=1.2)
    p.add_argument("--format", choices=["json", "csv", "md"], default="json")
    p.set_defaults(fn=cmd_agreement)

    p = sub.add_parser("reference", help="build a reference community")
    p.add_argument("--models", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--method", default="base_eta")
    p.add_argument("--min-size", type=int, default=100)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_reference)

    p = sub.add_parser("serve", help="run the what-if HTTP service")
    p.add_argument("--models", required=True)
    p.add_argument("--reference", default=None)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8321)
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("rerun", help="replay a run manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_rerun)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except DegenerateDataError as exc:
        print(f"degenerate: {exc}", file=sys.stderr)
        return 4
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

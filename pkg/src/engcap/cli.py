"""Command-line entry point.

Every command writes ``run.json`` (resolved arguments plus toolkit
version) into its output directory; ``engcap replay run.json`` re-executes
it.  Exit codes: 0 success, 2 configuration error, 3 data-format error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__

OUT_ENV = "ENGCAP_OUT"
ARCH_CHOICES = ("escape", "escape16", "mobilescape", "e0", "e1", "e2", "e3", "e4", "e5")

log = logging.getLogger("engcap")


class ConfigError(Exception):
    pass


def g6(x) -> str:
    """Fixed 6-significant-digit text for floats."""
    return f"{x:.6g}"


# argument groups ----------------------------------------------------------

def _add_train_args(p):
    p.add_argument("--max-epochs", type=int, default=150)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--beta1", type=float, default=0.9)
    p.add_argument("--beta2", type=float, default=0.999)
    p.add_argument("--adam-eps", type=float, default=1e-8)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--test-fraction", type=float, default=0.15)
    p.add_argument("--non-stratified", action="store_true")


def _add_pipeline_args(p):
    p.add_argument("--clip-uv", type=float, default=40.0)
    p.add_argument("--filter-order", type=int, default=6)
    p.add_argument("--low-hz", type=float, default=800.0)
    p.add_argument("--high-hz", type=float, default=5000.0)
    p.add_argument("--single-pass", action="store_true", help="causal filtering instead of zero-phase")
    p.add_argument("--stage-order", choices=("filter_first", "reference_first"), default="filter_first")
    p.add_argument("--bpm", type=float, default=None, help="stimulus tempo; default from the recording header or 70")
    p.add_argument("--on-window-s", type=float, default=0.64)
    p.add_argument("--activity-window-s", type=float, default=0.2)
    p.add_argument("--activity-floor", type=float, default=1.1)
    p.add_argument("--k-lower", type=float, default=3.5)
    p.add_argument("--k-upper", type=float, default=10.0)
    p.add_argument("--exclusion-ms", type=float, default=3.0)
    p.add_argument("--align-ms", type=float, default=2.0)
    p.add_argument("--width", type=int, default=100)
    p.add_argument("--events", choices=("detect", "ground_truth"), default="detect")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="engcap", description="Cuff-electrode ENG synthesis, preprocessing and CAP classification.")
    ap.add_argument("--version", action="version", version=f"engcap {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=None, help="BLAS threads (default: all cores)")
    common.add_argument("--out", default=None, help=f"output directory (default ${OUT_ENV}/<command> or runs/<command>)")
    common.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate synthetic ENGR1 recordings")
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--per-class", type=int, default=2)
    p.add_argument("--rings", type=int, default=8)
    p.add_argument("--contacts", type=int, default=7)
    p.add_argument("--periods", type=int, default=6)
    p.add_argument("--bpm", type=float, default=70.0)
    p.add_argument("--on-window-s", type=float, default=0.64)
    p.add_argument("--fs", type=float, default=30000.0)
    p.add_argument("--awgn-std", type=float, default=2.0)
    p.add_argument("--emg-std", type=float, default=5.0)
    p.add_argument("--artifact-std", type=float, default=0.3)
    p.add_argument("--cap-rate", type=float, default=150.0)
    p.add_argument("--source-scale", type=float, default=1.0, help="CAP amplitude multiplier (0 = no neural signal)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", parents=[common], help="ENGR1 recordings -> ENGS1 signatures")
    p.add_argument("inputs", nargs="*", help="ENGR1 files or a synth manifest.json")
    _add_pipeline_args(p)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("signatures", parents=[common], help="inspect an ENGS1 file / export it to CSV")
    p.add_argument("input")
    p.add_argument("--pixels", action="store_true", help="include every pixel in the CSV")
    p.set_defaults(func=cmd_signatures)

    p = sub.add_parser("train", parents=[common], help="cross-validate an architecture on ENGS1 signatures")
    p.add_argument("signatures")
    p.add_argument("--arch", default="mobilescape")
    _add_train_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="score an ENGM1 checkpoint on ENGS1 signatures")
    p.add_argument("model")
    p.add_argument("signatures")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablation", parents=[common], help="cross-validate variants E0-E5")
    p.add_argument("signatures")
    p.add_argument("--variants", default="e0,e1,e2,e3,e4,e5")
    _add_train_args(p)
    p.set_defaults(func=cmd_ablation)

    p = sub.add_parser("complexity", parents=[common], help="parameter and FLOP table of an architecture")
    p.add_argument("--arch", default="mobilescape")
    p.add_argument("--input-shape", default="56,100", help="rows,width of the signature")
    p.set_defaults(func=cmd_complexity)

    p = sub.add_parser("snr", parents=[common], help="per-recording SNR table, optionally against F1 scores")
    p.add_argument("inputs", nargs="*", help="ENGR1 files or a synth manifest.json")
    p.add_argument("--f1", default=None, help="JSON list of {snr_db, f1} points for the scatter report")
    _add_pipeline_args(p)
    p.set_defaults(func=cmd_snr)

    p = sub.add_parser("replay", help="re-execute a run.json")
    p.add_argument("run_json")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_replay)
    return ap


# helpers -------------------------------------------------------------------

def _out_dir(args) -> Path:
    out = Path(args.out) if args.out else Path(os.environ.get(OUT_ENV, "runs")) / args.command
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from None
    if not os.access(out, os.W_OK):
        raise ConfigError(f"output directory {out} is not writable")
    return out


def _args_dict(args) -> dict:
    return {k: v for k, v in vars(args).items() if k not in ("func",)}


def _write_run_json(out: Path, args):
    from ._backend import BACKEND

    record = {"command": args.command, "args": _args_dict(args), "version": __version__, "backend": BACKEND}
    (out / "run.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")


def _expand_inputs(inputs) -> list[Path]:
    files = []
    for item in inputs:
        path = Path(item)
        if path.suffix == ".json":
            try:
                manifest = json.loads(path.read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read manifest {path}: {exc}") from None
            files += [path.parent / r["file"] for r in manifest["recordings"]]
        else:
            files.append(path)
    if not files:
        raise ConfigError("no inputs")
    missing = [str(f) for f in files if not f.exists()]
    if missing:
        raise ConfigError(f"missing input files: {', '.join(missing)}")
    return files


def _pipeline_config(args, recording):
    from .dsp import BandpassSpec, PipelineConfig
    from .engsim import StimulusProtocol

    base = recording.protocol or StimulusProtocol()
    bpm = args.bpm if args.bpm is not None else base.bpm
    protocol = StimulusProtocol(bpm=bpm, n_periods=base.n_periods, on_window_s=args.on_window_s, duration_s=recording.duration_s)
    return PipelineConfig(
        clip_uv=args.clip_uv,
        bandpass=BandpassSpec(args.filter_order, args.low_hz, args.high_hz, not args.single_pass),
        protocol=protocol,
        activity_window_s=args.activity_window_s,
        activity_floor_ratio=args.activity_floor,
        k_lower=args.k_lower,
        k_upper=args.k_upper,
        exclusion_ms=args.exclusion_ms,
        align_ms=args.align_ms,
        width_samples=args.width,
        order=args.stage_order,
        events=args.events,
    )


def _train_config(args):
    from .bench import TrainConfig

    return TrainConfig(args.max_epochs, args.batch_size, args.lr, args.beta1, args.beta2, args.adam_eps, args.patience, args.seed)


def _load_dataset(path):
    from .bench import signatures_to_arrays
    from .formats import read_signatures

    sigs, names = read_signatures(path)
    unlabelled = sum(s.label is None for s in sigs)
    if unlabelled:
        raise ConfigError(f"{unlabelled} signatures in {path} have no label")
    images, labels = signatures_to_arrays(sigs, names)
    return images, labels, tuple(names)


def _build_arch(name, input_shape):
    from .nn import build_architecture

    if name.lower() not in ARCH_CHOICES:
        raise ConfigError(f"unknown architecture {name!r}; valid names: {', '.join(ARCH_CHOICES)}")
    return build_architecture(name, input_shape)


# commands ------------------------------------------------------------------

def cmd_synth(args) -> int:
    from .dsp import PipelineConfig, preprocess_pipeline
    from .engsim import CuffGeometry, NoiseSpec, StimulusProtocol, default_class_configs, generate_class_dataset
    from .formats import write_recording

    if args.classes != 3:
        raise ConfigError("the generator models exactly 3 stimulus classes")
    if args.per_class < 1:
        raise ConfigError("--per-class must be >= 1")
    out = _out_dir(args)
    protocol = StimulusProtocol(args.bpm, args.periods, args.on_window_s, args.periods * 60.0 / args.bpm)
    recs = generate_class_dataset(
        default_class_configs(),
        3 * args.per_class,
        geometry=CuffGeometry(args.rings, args.contacts),
        noise=NoiseSpec(args.awgn_std, args.emg_std, args.artifact_std),
        protocol=protocol,
        sample_rate_hz=args.fs,
        cap_rate_hz=args.cap_rate,
        source_scale=args.source_scale,
        seed=args.seed,
    )
    config = PipelineConfig(protocol=protocol)
    entries = []
    for i, rec in enumerate(recs):
        name = f"rec{i:03d}_{rec.class_label}.engr"
        write_recording(out / name, rec)
        _, snr, _ = preprocess_pipeline(rec, config) if args.rings >= 3 else (None, None, None)
        entries.append({"file": name, "label": rec.class_label, "subject_id": rec.subject_id,
                        "n_caps": len(rec.ground_truth_caps), "snr_db": snr})
        print(f"{name}  {rec.class_label:15s} caps {len(rec.ground_truth_caps):5d}  snr {g6(snr) if snr is not None else 'n/a'} dB")
    manifest = {"recordings": entries, "source_scale": args.source_scale,
                "noise": {"awgn_std_uv": args.awgn_std, "emg_std_uv": args.emg_std, "artifact_std_uv": args.artifact_std}}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    _write_run_json(out, args)
    return 0


def cmd_preprocess(args) -> int:
    from .dsp import preprocess_pipeline
    from .engsim import CLASS_NAMES
    from .formats import read_recording, write_signatures

    files = _expand_inputs(args.inputs)
    out = _out_dir(args)
    signatures, table, diagnostics = [], [], []
    for f in files:
        rec = read_recording(f)
        sigs, snr, diag = preprocess_pipeline(rec, _pipeline_config(args, rec))
        signatures += sigs
        table.append({"file": f.name, "subject_id": rec.subject_id, "label": rec.class_label,
                      "snr_db": snr, "signatures": len(sigs)})
        diagnostics.append({"file": f.name, **diag.as_dict()})
        print(f"{f.name}  snr {g6(snr) if snr is not None else 'n/a'} dB  signatures {len(sigs)}")
    if not signatures:
        raise ConfigError("no signatures were extracted")
    labels = sorted({s.label for s in signatures if s.label is not None})
    names = list(CLASS_NAMES) if set(labels) <= set(CLASS_NAMES) else labels
    write_signatures(out / "signatures.engs", signatures, names)
    (out / "diagnostics.json").write_text(json.dumps({"recordings": diagnostics}, indent=2, sort_keys=True) + "\n")
    with open(out / "snr.csv", "w") as fh:
        fh.write("file,subject_id,label,snr_db,signatures\n")
        for r in table:
            fh.write(f"{r['file']},{r['subject_id']},{r['label']},{g6(r['snr_db']) if r['snr_db'] is not None else ''},{r['signatures']}\n")
    print(f"{len(signatures)} signatures -> {out / 'signatures.engs'}")
    _write_run_json(out, args)
    return 0


def cmd_signatures(args) -> int:
    from collections import Counter

    from .formats import read_signatures

    sigs, names = read_signatures(args.input)
    out = _out_dir(args)
    shape = sigs[0].image.shape if sigs else (0, 0)
    with open(out / "signatures.csv", "w") as fh:
        cols = ["index", "label", "subject_id", "cap_time_s", "min", "max"]
        if args.pixels:
            cols += [f"p{r}_{c}" for r in range(shape[0]) for c in range(shape[1])]
        fh.write(",".join(cols) + "\n")
        for i, s in enumerate(sigs):
            vals = [str(i), s.label or "", s.subject_id, g6(s.cap_time_s), g6(float(s.image.min())), g6(float(s.image.max()))]
            if args.pixels:
                vals += [g6(float(v)) for v in s.image.ravel()]
            fh.write(",".join(vals) + "\n")
    counts = Counter(s.label for s in sigs)
    print(f"{len(sigs)} signatures of {shape[0]}x{shape[1]}")
    for name in names:
        print(f"  {name:15s} {counts.get(name, 0)}")
    _write_run_json(out, args)
    return 0


def _cv_outputs(out, result, plan, tag=""):
    from .bench import cv_rows, write_csv, write_history_csv, write_json
    from .formats import write_model

    for k, (state, hist) in enumerate(zip(result.states, result.histories)):
        write_model(out / f"{tag}fold{k}.engm", state)
        write_history_csv(out / f"{tag}history_fold{k}.csv", hist)
    rows = cv_rows(result)
    write_csv(out / f"{tag}report.csv", rows)
    write_json(out / f"{tag}report.json", {
        "model": result.arch.name,
        "params": result.params,
        "flops": result.flops,
        "folds": [r.to_dict() for r in result.fold_reports],
        "aggregate": result.aggregate.to_dict(),
        "split": {"test": len(plan.test_indices), "folds": [[len(t), len(v)] for t, v in plan.folds]},
        "rows": rows,
    })


def cmd_train(args) -> int:
    from .bench import make_split_plan, run_cross_validation, write_json

    images, labels, names = _load_dataset(args.signatures)
    arch = _build_arch(args.arch, (*images.shape[1:], 1))
    config = _train_config(args)
    out = _out_dir(args)
    plan = make_split_plan(labels, args.seed, args.test_fraction, args.folds, not args.non_stratified)
    write_json(out / "split.json", plan.to_dict())
    result = run_cross_validation(arch, images, labels, plan, config, names)
    _cv_outputs(out, result, plan)
    for k, rep in enumerate(result.fold_reports):
        print(f"fold {k}: accuracy {g6(rep.accuracy)}  macro F1 {g6(rep.macro_f1)}")
    fs = result.aggregate.fold_stats
    print(f"{arch.name}: accuracy {g6(fs['accuracy']['mean'])} +- {g6(fs['accuracy']['std'])}  "
          f"macro F1 {g6(fs['macro_f1']['mean'])} +- {g6(fs['macro_f1']['std'])}")
    _write_run_json(out, args)
    return 0


def cmd_eval(args) -> int:
    from .bench import evaluate, metrics_rows, write_csv, write_json
    from .formats import read_model

    state = read_model(args.model)
    images, labels, names = _load_dataset(args.signatures)
    if images.shape[1:] != state.arch.input_shape[:2]:
        raise ConfigError(f"signatures are {images.shape[1:]}, model expects {state.arch.input_shape[:2]}")
    out = _out_dir(args)
    rep = evaluate(state, images, labels, names)
    write_json(out / "report.json", {"model": state.arch.name, **rep.to_dict()})
    write_csv(out / "report.csv", metrics_rows(state.arch.name, "", rep))
    print(f"{state.arch.name}: accuracy {g6(rep.accuracy)}  macro F1 {g6(rep.macro_f1)}")
    for name, f in zip(names, rep.f1):
        print(f"  {name:15s} F1 {g6(float(f))}")
    _write_run_json(out, args)
    return 0


def cmd_ablation(args) -> int:
    from .bench import make_split_plan, run_ablation, write_csv, write_json
    from .nn.arch import VARIANTS

    variants = [v.strip().lower() for v in args.variants.split(",") if v.strip()]
    bad = [v for v in variants if v not in VARIANTS]
    if bad:
        raise ConfigError(f"unknown variants {bad}; valid: {', '.join(VARIANTS)}")
    images, labels, names = _load_dataset(args.signatures)
    config = _train_config(args)
    out = _out_dir(args)
    plan = make_split_plan(labels, args.seed, args.test_fraction, args.folds, not args.non_stratified)
    rows, _ = run_ablation(images, labels, plan, config, names, variants)
    write_json(out / "ablation.json", {"rows": rows})
    write_csv(out / "ablation.csv", rows, ("variant", "macro_f1_mean", "macro_f1_std", "params", "flops"))
    for r in rows:
        print(f"{r['variant']}: macro F1 {g6(r['macro_f1_mean'])} +- {g6(r['macro_f1_std'])}  params {r['params']}")
    _write_run_json(out, args)
    return 0


PAPER_COMPLEXITY = {"escape": (91_837_635, 1.1e9), "mobilescape": (67_843, 82.8e6)}


def cmd_complexity(args) -> int:
    from .bench import write_json
    from .nn import analyze

    try:
        rows, width = (int(v) for v in args.input_shape.split(","))
    except ValueError:
        raise ConfigError(f"--input-shape must be 'rows,width', got {args.input_shape!r}") from None
    arch = _build_arch(args.arch, (rows, width, 1))
    report = analyze(arch)
    out = _out_dir(args)
    print(report.format_table())
    summary = report.to_dict()
    ref = PAPER_COMPLEXITY.get(arch.name)
    if ref is not None and (rows, width) == (56, 100):
        p_ref, f_ref = ref
        dp = report.trainable_params - p_ref
        summary["published"] = {"params": p_ref, "flops": f_ref,
                                "params_delta": dp, "params_delta_rel": dp / p_ref,
                                "flops_delta_rel": (report.headline_flops - f_ref) / f_ref}
        print(f"published: params {p_ref} (delta {dp:+d}, {g6(100 * dp / p_ref)}%)  "
              f"flops {g6(f_ref)} (delta {g6(100 * summary['published']['flops_delta_rel'])}%)")
    print(f"trainable params {report.trainable_params}  non-trainable {report.non_trainable_params}  FLOPs {report.headline_flops}")
    write_json(out / "complexity.json", summary)
    _write_run_json(out, args)
    return 0


def cmd_snr(args) -> int:
    from .bench import snr_f1_report, write_json
    from .dsp import (
        apply_filter,
        clip_extremes,
        compute_snr,
        design_butterworth_bandpass,
        estimate_activity_intervals,
        tripolar_reference,
    )
    from .formats import read_recording

    out = _out_dir(args)
    result = {}
    if args.inputs:
        table = []
        for f in _expand_inputs(args.inputs):
            rec = read_recording(f)
            cfg = _pipeline_config(args, rec)
            x = clip_extremes(rec, cfg.clip_uv)
            x = tripolar_reference(apply_filter(x, design_butterworth_bandpass(cfg.bandpass, x.sample_rate_hz), cfg.bandpass.zero_phase))
            iv = estimate_activity_intervals(x, cfg.protocol, cfg.activity_window_s, cfg.activity_floor_ratio)
            snr = compute_snr(x, iv) if iv.on_intervals and iv.off_intervals else None
            table.append({"file": f.name, "subject_id": rec.subject_id, "label": rec.class_label, "snr_db": snr})
            print(f"{f.name}  {rec.class_label or '':15s} snr {g6(snr) if snr is not None else 'n/a'} dB")
        result["recordings"] = table
    if args.f1:
        try:
            points = json.loads(Path(args.f1).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read {args.f1}: {exc}") from None
        rep = snr_f1_report([(p["snr_db"], p["f1"]) for p in points])
        result["snr_f1"] = rep
        std = "undefined" if rep["std_undefined"] else g6(rep["f1_std"])
        print(f"F1 {g6(rep['f1_mean'])} +- {std} over {len(rep['points'])} points")
    if not result:
        raise ConfigError("no inputs")
    write_json(out / "snr.json", result)
    _write_run_json(out, args)
    return 0


def cmd_replay(args) -> int:
    try:
        record = json.loads(Path(args.run_json).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {args.run_json}: {exc}") from None
    if record.get("command") in (None, "replay"):
        raise ConfigError("run.json does not describe a replayable command")
    ns = argparse.Namespace(**record["args"])
    if args.out is not None:
        ns.out = args.out
    defaults = build_parser().parse_args(_minimal_argv(record["command"]))
    for key, value in vars(defaults).items():
        if not hasattr(ns, key):
            setattr(ns, key, value)
    ns.func = defaults.func
    if record.get("version") != __version__:
        log.warning("run.json was written by engcap %s, replaying with %s", record.get("version"), __version__)
    return ns.func(ns)


def _minimal_argv(command):
    positional = {"preprocess": [], "signatures": ["x"], "train": ["x"], "eval": ["x", "y"], "ablation": ["x"], "snr": []}
    return [command, *positional.get(command, [])]


def _set_threads(n):
    if n is None:
        return
    if n < 1:
        raise ConfigError("--threads must be >= 1")
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(getattr(args, "verbose", 0), 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        _set_threads(getattr(args, "threads", None))
        from .formats import FormatError
        from .nn.model import NumericalError

        try:
            return args.func(args)
        except FormatError as exc:
            print(f"format error: {exc}", file=sys.stderr)
            return 3
        except NumericalError as exc:
            print(f"numerical failure: {exc}", file=sys.stderr)
            return 4
        except (ValueError, OSError) as exc:
            print(f"configuration error: {exc}", file=sys.stderr)
            return 2
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

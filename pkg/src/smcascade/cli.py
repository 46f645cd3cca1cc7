"""Command-line interface.

Every subcommand exits 0 on success.  On failure it prints one line to
stderr, ``error: <ErrorClass>: <message>``, and exits 1.  Argument errors
keep argparse's usual exit status 2.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import io, optimizer, synth
from .config import RunConfig, generator_config, read_config_file, run_config
from .core import CascadeError, CascadeSpec, ConsistencyError, InvalidInput
from .evaluation import (
    SweepMode,
    compare_policies,
    evaluate_policy,
    max_accuracy_summary,
    sm_histogram,
    sweep_alpha,
)


def _load_config(args) -> tuple[RunConfig, dict]:
    if getattr(args, "config", None):
        doc = read_config_file(args.config)
        return run_config(doc, args.config), doc
    return RunConfig(), {}


def _stage_pair(args, cfg: RunConfig, flag="stage", keys=("stage_files",), what="stage files"):
    """Stage files from ``--<flag>1/2``, else from the first config key that is set."""
    opt = flag.replace("_", "-")
    s1, s2 = getattr(args, f"{flag}1", None), getattr(args, f"{flag}2", None)
    if (s1 is None) != (s2 is None):
        raise InvalidInput(f"--{opt}1 and --{opt}2 must be given together")
    if s1 is not None:
        return Path(s1), Path(s2)
    for key in keys:
        pair = getattr(cfg, key)
        if pair:
            return pair
    raise InvalidInput(f"missing {what}: pass --{opt}1/--{opt}2 or set {keys[0]} in --config")


def _load(pair, cfg: RunConfig, args):
    renorm = cfg.renormalize or getattr(args, "renormalize", False)
    return io.load_prediction_set(pair[0], pair[1], renormalize=renorm, class_names=cfg.class_names)


def _cascade(args, cfg: RunConfig, class_count: int) -> CascadeSpec:
    energy = args.energy or cfg.energy_mj
    if not energy:
        raise InvalidInput("missing stage energies: pass --energy E1 E2 or set energy_mj in --config")
    return CascadeSpec.two_stage(energy[0], energy[1], class_count)


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _png(csv_path) -> Path:
    return Path(csv_path).with_suffix(".png")


def cmd_generate(args):
    _, doc = _load_config(args)
    gen = generator_config(doc, args.config or "<defaults>", seed=args.seed)
    if args.samples is not None:
        gen = synth.GeneratorConfig(gen.class_profiles, args.samples, gen.seed, gen.class_names)
    ps = synth.generate(gen)
    out = _out_dir(args.out_dir)
    io.save_prediction_set(ps, out / "stage1.csv", out / "stage2.csv")
    print(f"wrote {len(ps)} samples, {ps.class_count} classes to {out}")


def cmd_split(args):
    cfg, _ = _load_config(args)
    ps = _load(_stage_pair(args, cfg), cfg, args)
    frac = args.val_fraction if args.val_fraction is not None else cfg.val_fraction
    seed = args.seed if args.seed is not None else cfg.seed
    val, test = synth.split(ps, frac, seed)
    out = _out_dir(args.out_dir)
    io.save_prediction_set(val, out / "val_stage1.csv", out / "val_stage2.csv")
    io.save_prediction_set(test, out / "test_stage1.csv", out / "test_stage2.csv")
    print(f"validation {len(val)} / test {len(test)} samples in {out}")


def cmd_resample(args):
    cfg, _ = _load_config(args)
    ps = _load(_stage_pair(args, cfg), cfg, args)
    seed = args.seed if args.seed is not None else cfg.seed
    res = synth.resample_by_class(ps, args.fractions, seed)
    out = _out_dir(args.out_dir)
    io.save_prediction_set(res, out / "stage1.csv", out / "stage2.csv")
    print(f"kept {len(res)} of {len(ps)} samples in {out}")


def _alphas(args, cfg: RunConfig):
    return tuple(args.alpha) if args.alpha else cfg.alphas


def cmd_optimize(args, mode=None):
    cfg, _ = _load_config(args)
    mode = SweepMode(mode or args.mode)
    ps = _load(_stage_pair(args, cfg, keys=("stage_files", "validation_files")), cfg, args)
    policies = []
    for a in sorted(_alphas(args, cfg)):
        if mode is SweepMode.PER_CLASS:
            policies.append(optimizer.optimize_class_thresholds(ps, a).policy())
        else:
            policies.append(optimizer.optimize_global_threshold(ps, a))
    params = {"mode": mode.value, "alphas": [p.alpha for p in policies], "samples": len(ps)}
    io.save_policy(policies, args.out, class_count=ps.class_count, params=params)
    print(f"wrote {len(policies)} {mode.value} policies to {args.out}")


def cmd_evaluate(args):
    cfg, _ = _load_config(args)
    pf = io.load_policy(args.policy)
    pair = _stage_pair(args, cfg, keys=("stage_files", "test_files"))
    ps = _load(pair, cfg, args)
    if pf.class_count is not None and pf.class_count != ps.class_count:
        raise ConsistencyError(
            f"{args.policy}, field class_count: policy has {pf.class_count} classes, "
            f"{pair[0]} has {ps.class_count}"
        )
    cascade = _cascade(args, cfg, ps.class_count)
    chosen = [pf.select(args.alpha)] if args.alpha is not None else list(pf.policies)
    reports = [(evaluate_policy(ps, p, cascade), p) for p in chosen]
    io.write_reports(args.out, reports, params={
        "policy_file": Path(args.policy).name, "energy_mj": [cascade.little_mj, cascade.big_mj]})
    print(f"wrote {len(reports)} report(s) to {args.out}")


def _sweep(args, mode: SweepMode):
    cfg, _ = _load_config(args)
    val = _load(_stage_pair(args, cfg, "val_stage", ("validation_files",), "validation stage files"), cfg, args)
    test = _load(_stage_pair(args, cfg, "test_stage", ("test_files",), "test stage files"), cfg, args)
    cascade = _cascade(args, cfg, test.class_count)
    curve = sweep_alpha(val, test, cascade, _alphas(args, cfg), mode)
    out = _out_dir(args.out_dir)
    io.write_curve(out / "curve.csv", curve, test.class_count)
    io.save_policy([p.policy for p in curve.points], out / "policies.json", class_count=test.class_count,
                   params={"mode": mode.value, "alphas": [p.alpha for p in curve.points],
                           "validation_samples": len(val)})
    io.write_json(out / "summary.json", io.summary_to_dict(max_accuracy_summary(curve)))
    if not args.no_plot:
        from .plotting import plot_tradeoff
        plot_tradeoff([curve], _png(out / "curve.csv"))
    print(f"wrote {len(curve.points)} {mode.value} curve points to {out}")


def cmd_sweep(args):
    _sweep(args, SweepMode(args.mode))


def cmd_baseline(args):
    if args.test_stage1 or args.config and run_config(read_config_file(args.config)).test_files:
        _sweep(args, SweepMode.GLOBAL)
        return
    # no test data: behave like `optimize --mode global`
    if not args.out_dir:
        raise InvalidInput("missing --out-dir")
    args.stage1, args.stage2 = args.val_stage1, args.val_stage2
    args.out = str(_out_dir(args.out_dir) / "policies.json")
    cmd_optimize(args, mode=SweepMode.GLOBAL.value)


def cmd_compare(args):
    cfg, _ = _load_config(args)
    pc = io.read_curve(args.per_class)
    gl = io.read_curve(args.global_curve)
    if pc.mode is not SweepMode.PER_CLASS or gl.mode is not SweepMode.GLOBAL:
        raise ConsistencyError(
            f"{args.per_class} must hold a per_class sweep and {args.global_curve} a global one"
        )
    quantiles = tuple(args.quantiles) if args.quantiles else cfg.quantiles
    rows = compare_policies(pc, gl, quantiles)
    io.write_comparison(args.out, rows)
    if not args.no_plot:
        from .plotting import plot_comparison, plot_tradeoff
        plot_comparison(rows, _png(args.out))
        plot_tradeoff([pc, gl], Path(args.out).with_name(Path(args.out).stem + "_tradeoff.png"),
                      labels=["per-class", "single threshold"])
    print(f"wrote {len(rows)} comparison rows to {args.out}")


def _class_label(ps, class_id):
    return ps.class_names[class_id] if ps.class_names else str(class_id)


def cmd_histogram(args):
    cfg, _ = _load_config(args)
    ps = _load(_stage_pair(args, cfg), cfg, args)
    hist = sm_histogram(ps, args.class_id, args.bins)
    io.write_histogram(args.out, hist)
    if not args.no_plot:
        from .plotting import plot_histogram
        plot_histogram(hist, _png(args.out), _class_label(ps, args.class_id))
    print(f"wrote {args.bins} bins to {args.out}")


def cmd_curve(args):
    cfg, _ = _load_config(args)
    ps = _load(_stage_pair(args, cfg), cfg, args)
    if not 0 <= args.class_id < ps.class_count:
        raise InvalidInput(f"--class-id {args.class_id} outside [0, {ps.class_count})")
    sl = optimizer.build_class_slices(ps)[args.class_id]
    points = optimizer.objective_curve(sl, args.alpha)
    io.write_objective_curve(args.out, points)
    if not args.no_plot:
        from .plotting import plot_objective_curve
        plot_objective_curve(points, args.alpha, _png(args.out), _class_label(ps, args.class_id))
    print(f"wrote {len(points)} objective points to {args.out}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="smcascade", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, stages=True):
        sp.add_argument("--config", help="flat YAML config file")
        sp.add_argument("--renormalize", action="store_true",
                        help="divide probability vectors by their sum instead of rejecting them")
        if stages:
            sp.add_argument("--stage1", help="stage-1 (little model) CSV")
            sp.add_argument("--stage2", help="stage-2 (big model) CSV")

    def sweep_inputs(sp):
        common(sp, stages=False)
        for side in ("val", "test"):
            for k in (1, 2):
                sp.add_argument(f"--{side}-stage{k}", dest=f"{side}_stage{k}")
        sp.add_argument("--energy", nargs=2, type=float, metavar=("E1", "E2"), help="stage energies in mJ")
        sp.add_argument("--alpha", nargs="+", type=float, help="alpha values (default: built-in grid)")
        sp.add_argument("--out-dir", required=True)
        sp.add_argument("--no-plot", action="store_true")

    sp = sub.add_parser("generate", help="write a synthetic pair of stage files")
    sp.add_argument("--config")
    sp.add_argument("--samples", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out-dir", required=True)
    sp.set_defaults(func=cmd_generate)

    sp = sub.add_parser("split", help="stratified validation/test split")
    common(sp)
    sp.add_argument("--val-fraction", type=float)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out-dir", required=True)
    sp.set_defaults(func=cmd_split)

    sp = sub.add_parser("resample", help="undersample classes by true label")
    common(sp)
    sp.add_argument("--fractions", nargs="+", type=float, required=True)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out-dir", required=True)
    sp.set_defaults(func=cmd_resample)

    sp = sub.add_parser("optimize", help="optimize thresholds on validation data")
    common(sp)
    sp.add_argument("--alpha", nargs="+", type=float)
    sp.add_argument("--mode", choices=[m.value for m in SweepMode], default=SweepMode.PER_CLASS.value)
    sp.add_argument("--out", required=True, help="policy file (JSON)")
    sp.set_defaults(func=cmd_optimize)

    sp = sub.add_parser("evaluate", help="evaluate a policy file on test data")
    common(sp)
    sp.add_argument("--policy", required=True)
    sp.add_argument("--alpha", type=float, help="evaluate only the record with this alpha")
    sp.add_argument("--energy", nargs=2, type=float, metavar=("E1", "E2"))
    sp.add_argument("--out", required=True, help="report file (JSON)")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("sweep", help="energy/accuracy trade-off over alpha")
    sweep_inputs(sp)
    sp.add_argument("--mode", choices=[m.value for m in SweepMode], default=SweepMode.PER_CLASS.value)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("baseline", help="single-threshold sweep (or optimize without test data)")
    sweep_inputs(sp)
    sp.set_defaults(func=cmd_baseline)

    sp = sub.add_parser("compare", help="energy at normalized accuracy-gain targets")
    sp.add_argument("--config")
    sp.add_argument("--per-class", required=True, help="curve.csv of a per_class sweep")
    sp.add_argument("--global", dest="global_curve", required=True, help="curve.csv of a global sweep")
    sp.add_argument("--quantiles", nargs="+", type=float)
    sp.add_argument("--out", required=True)
    sp.add_argument("--no-plot", action="store_true")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("histogram", help="stage-1 margin histogram for one predicted class")
    common(sp)
    sp.add_argument("--class-id", type=int, required=True)
    sp.add_argument("--bins", type=int, default=20)
    sp.add_argument("--out", required=True)
    sp.add_argument("--no-plot", action="store_true")
    sp.set_defaults(func=cmd_histogram)

    sp = sub.add_parser("curve", help="objective against threshold for one predicted class")
    common(sp)
    sp.add_argument("--class-id", type=int, required=True)
    sp.add_argument("--alpha", type=float, required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--no-plot", action="store_true")
    sp.set_defaults(func=cmd_curve)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (CascadeError, OSError) as exc:
        msg = " ".join(str(exc).split())
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

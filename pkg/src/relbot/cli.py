"""``relbot`` command line: similarity, model training, simulated runs, analysis, synthetic data.

Exit codes: 0 success, 2 config/usage, 3 data, 4 training/runtime.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .agent import RunLog, read_predictions, run_episode, train_transfer_model
from .bdne import load_bundle, save_bundle, train_bdne, write_response_file
from .config import GlobalConfig, load_config
from .errors import ConfigError, InputError, RelbotError
from .metrics import (FACTOR_COLUMNS, MetricsReport, PairImprovement, aggregate_pairs, fit_exponential,
                      improvement_factor, pair_improvement, rolling_variance, warmup_metrics)
from .neural import load_net, save_net
from .similarity import building_similarity, format_table
from .synth import SCENARIOS, synth_pair

log = logging.getLogger("relbot")


def _seed(cfg: GlobalConfig, args) -> int:
    return cfg.seed if args.seed is None else args.seed


def _config(args) -> GlobalConfig:
    if not args.config:
        raise ConfigError(f"'{args.command}' needs --config")
    cfg = load_config(args.config)
    if args.out and args.command != "analyze":  # analyze writes its report to --out but reads runs in place
        cfg.output_dir = Path(args.out)
    return cfg


def cmd_similarity(args) -> int:
    cfg = _config(args)
    transfer, target = cfg.building(args.transfer), cfg.building(args.target)
    report = building_similarity(transfer.load(), target.load())
    print(json.dumps({"transfer": transfer.id, "target": target.id, **report.to_dict()}, indent=2))
    print(format_table(report))
    return 0


def cmd_train_transfer(args) -> int:
    cfg = _config(args)
    entry = cfg.building(args.building)
    seed = _seed(cfg, args)
    net = train_transfer_model(entry.load(), cfg.agent, entry.constants(cfg.emulator.energy_floor), seed=seed)
    net.meta["building_id"] = entry.id
    path = cfg.transfer_path(entry.id, seed)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_net(net, path)
    print(f"transfer model for {entry.id} (seed {seed}): final loss {net.meta['final_loss']:.6f} -> {path}")
    return 0


def cmd_train_bdne(args) -> int:
    cfg = _config(args)
    entry = cfg.building(args.building)
    ecfg = replace(cfg.emulator, train=replace(cfg.emulator.train, seed=_seed(cfg, args)))
    bundle = train_bdne(entry.load(), ecfg, entry.id, entry.flow_factor)
    out = save_bundle(bundle, cfg.bdne_dir(entry.id))
    for factor, mse in bundle.holdout_mse.items():
        print(f"{entry.id} {factor}: holdout mse {mse:.6g}")
    print(f"emulator bundle ({len(bundle.models)} models) -> {out}")
    return 0


def _metrics_doc(report: MetricsReport, runlog: RunLog, args, seed: int) -> dict:
    tail = runlog.setpoints[-200:]
    return {**report.to_dict(), "target": args.target, "transfer": None if args.no_transfer else args.transfer,
            "seed": seed, "steps": len(runlog), "final_setpoint_mean": float(np.mean(tail))}


def cmd_run(args) -> int:
    cfg = _config(args)
    seed = _seed(cfg, args)
    target = cfg.building(args.target)
    use_tl = bool(args.transfer) and not args.no_transfer
    bdne_dir = cfg.bdne_dir(target.id)
    if not (bdne_dir / "manifest.json").exists():
        raise ConfigError(f"no emulator bundle at {bdne_dir}; run `relbot train-bdne --building {target.id}` first")
    transfer = None
    if use_tl:
        cfg.building(args.transfer)
        tpath = cfg.transfer_path(args.transfer, seed)
        if not tpath.exists():
            raise ConfigError(f"no transfer model at {tpath}; run "
                              f"`relbot train-transfer --building {args.transfer} --seed {seed}` first")
        transfer = load_net(tpath)
    series = target.load()
    bundle = load_bundle(bdne_dir)
    agent_cfg = replace(cfg.agent, transfer_enabled=use_tl)
    runlog = run_episode(series, bundle, transfer, agent_cfg, target.constants(cfg.emulator.energy_floor), seed=seed)

    out = cfg.run_dir(target.id, args.transfer if use_tl else None, seed)
    out.mkdir(parents=True, exist_ok=True)
    runlog.write_predictions(out / "predictions.csv")
    write_response_file(out / "response.csv", series, runlog.states, runlog.timestamps)
    report = warmup_metrics(runlog.predicted, cfg.window)
    doc = _metrics_doc(report, runlog, args, seed)
    (out / "metrics.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    print(json.dumps(doc, indent=2))
    return 0


# ---------------------------------------------------------------- analyze

def _scan_runs(root: Path) -> dict[tuple[str, str], dict[int, Path]]:
    """{(target, transfer-or-'solo'): {seed: run dir}} for dirs holding a predictions file."""
    arms: dict[tuple[str, str], dict[int, Path]] = {}
    for pred in sorted(root.glob("*/*/predictions.csv")):
        run_dir = pred.parent
        arm, seed = run_dir.parent.name, run_dir.name
        if "-" not in arm or not seed.isdigit():
            continue
        target, transfer = arm.rsplit("-", 1)
        arms.setdefault((target, transfer), {})[int(seed)] = run_dir
    return arms


def _read_pairs_csv(path: Path) -> list[PairImprovement]:
    if not path.exists():
        raise ConfigError(f"pairs file not found: {path}")
    rows = []
    with path.open(newline="", encoding="utf-8") as fh:
        for r in csv.DictReader(fh):
            if r.get("target", "").strip().lower() == "average":
                continue
            try:
                rows.append(PairImprovement(r["target"], r["transfer"], float(r["similarity"]),
                                            *(float(r[c]) for c in FACTOR_COLUMNS)))
            except (KeyError, ValueError) as exc:
                raise InputError(f"{path}: bad pair row {r!r} ({exc})") from None
    return rows


def _fit_doc(rows: Sequence[PairImprovement]) -> dict:
    fits = {}
    for c in FACTOR_COLUMNS:
        pts = [(p.similarity, getattr(p, c)) for p in rows]
        usable = [(s, y) for s, y in pts if math.isfinite(y) and y > 0]
        try:
            f = fit_exponential(usable)
            fits[c] = {"a": f.a, "b": f.b, "r_squared": f.r_squared, "points": len(usable)}
        except InputError as exc:
            fits[c] = {"error": str(exc), "points": len(usable)}
    return fits


def _write_rows(path: Path, header: Sequence[str], rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(x: float) -> str:
    return "inf" if math.isinf(x) else f"{x:.6f}"


def cmd_analyze(args) -> int:
    if args.pairs:
        rows = _read_pairs_csv(Path(args.pairs))
        out = Path(args.out) if args.out else Path(args.pairs).parent
        return _emit_analysis(rows, out)

    cfg = _config(args)
    roots = [Path(r) for r in args.runs] if args.runs else [cfg.output_dir]
    arms: dict[tuple[str, str], dict[int, Path]] = {}
    for root in roots:
        for key, seeds in _scan_runs(root).items():
            arms.setdefault(key, {}).update(seeds)
    solo = {t: seeds for (t, x), seeds in arms.items() if x == "solo"}
    tl_arms = {k: v for k, v in arms.items() if k[1] != "solo"}
    if not tl_arms:
        raise ConfigError(f"no transfer-arm runs found under {', '.join(map(str, roots))}")

    orphans, used_solo = [], set()
    for (target, transfer), seeds in sorted(tl_arms.items()):
        for seed, d in sorted(seeds.items()):
            if seed not in solo.get(target, {}):
                orphans.append(str(d))
            else:
                used_solo.add((target, seed))
    for target, seeds in sorted(solo.items()):
        orphans += [str(d) for seed, d in sorted(seeds.items()) if (target, seed) not in used_solo]
    if orphans:
        print("unmatched run arms:\n  " + "\n  ".join(orphans), file=sys.stderr)
        raise ConfigError(f"{len(orphans)} run arm(s) have no with/without partner")

    out = Path(args.out) if args.out else cfg.output_dir / "analysis"
    (out / "plots").mkdir(parents=True, exist_ok=True)
    rows, by_seed = [], []
    for (target, transfer), seeds in sorted(tl_arms.items()):
        sim = building_similarity(cfg.building(transfer).load(), cfg.building(target).load()).score
        with_m, without_m = [], []
        for seed, d in sorted(seeds.items()):
            m_with = _run_metrics(d, cfg.window, out / "plots" / f"rewards_{target}-{transfer}_{seed}.csv")
            m_without = _run_metrics(solo[target][seed], cfg.window,
                                     out / "plots" / f"rewards_{target}-solo_{seed}.csv")
            p = pair_improvement(target, transfer, sim, m_without, m_with)
            by_seed.append((seed, p))
            with_m.append(m_with)
            without_m.append(m_without)
        # one summary row per pair: factors of the seed-averaged metrics
        rows.append(PairImprovement(target, transfer, sim, *(
            improvement_factor(float(np.mean([getattr(m, k) for m in without_m])),
                               float(np.mean([getattr(m, k) for m in with_m])))
            for k in ("warmup_duration", "warmup_variance", "mean_variance"))))
    _write_rows(out / "pairs_by_seed.csv", ["target", "transfer", "seed", "similarity", *FACTOR_COLUMNS],
                [[p.target, p.transfer, seed, _fmt(p.similarity), *(_fmt(getattr(p, c)) for c in FACTOR_COLUMNS)]
                 for seed, p in by_seed])
    return _emit_analysis(rows, out)


def _run_metrics(run_dir: Path, window: int, plot_path: Path) -> MetricsReport:
    pred = read_predictions(run_dir / "predictions.csv")
    r = pred["predicted_reward"]
    v = rolling_variance(r, window)
    _write_rows(plot_path, ["step", "predicted_reward", "actual_reward", "setpoint", "rolling_variance"],
                [[int(pred["step"][t]), _fmt(r[t]), _fmt(pred["actual_reward"][t]), _fmt(pred["setpoint"][t]),
                  _fmt(v[t - window + 1]) if t >= window - 1 else ""] for t in range(len(r))])
    return warmup_metrics(r, window)


def _emit_analysis(rows: list[PairImprovement], out: Path) -> int:
    summary = aggregate_pairs(rows)
    (out / "plots").mkdir(parents=True, exist_ok=True)
    (out / "table.csv").write_text(summary.to_csv(), encoding="utf-8")
    fits = _fit_doc(rows)
    (out / "fit.json").write_text(json.dumps(fits, indent=2) + "\n", encoding="utf-8")
    _write_rows(out / "plots" / "similarity_factors.csv", ["similarity", *FACTOR_COLUMNS],
                [[_fmt(p.similarity), *(_fmt(getattr(p, c)) for c in FACTOR_COLUMNS)] for p in rows])
    print(summary.to_csv(), end="")
    print(json.dumps(fits, indent=2))
    return 0


def cmd_synth(args) -> int:
    seed = 0 if args.seed is None else args.seed
    out = Path(args.out) if args.out else Path(f"synth-{args.scenario}-{seed}")
    pair = synth_pair(args.scenario, seed, out, rows=args.rows)
    print(f"{args.scenario} seed {seed}: true optima target={pair.target.optimum} "
          f"donor={pair.transfer.optimum} -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="relbot", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--seed", type=int, help="override the configured seed")
        sp.add_argument("--out", help="override the output directory")
        sp.set_defaults(func=fn)
        return sp

    sp = add("similarity", cmd_similarity, "similarity score between two configured buildings")
    sp.add_argument("--transfer", required=True)
    sp.add_argument("--target", required=True)
    sp = add("train-transfer", cmd_train_transfer, "train a donor building's transfer model")
    sp.add_argument("--building", required=True)
    sp = add("train-bdne", cmd_train_bdne, "train a building's neural emulator")
    sp.add_argument("--building", required=True)
    sp = add("run", cmd_run, "simulated on-line optimisation run against the target's emulator")
    sp.add_argument("--target", required=True)
    sp.add_argument("--transfer", help="donor building id for the transfer arm")
    sp.add_argument("--no-transfer", action="store_true", help="run the solo arm even if --transfer is given")
    sp = add("analyze", cmd_analyze, "pair run arms, aggregate improvement factors, fit the similarity trend")
    sp.add_argument("--runs", nargs="*", help="run roots to scan (default: the configured output dir)")
    sp.add_argument("--pairs", help="aggregate a CSV of pair rows instead of scanning runs")
    sp = add("synth", cmd_synth, "write a synthetic building pair with a known COP optimum")
    sp.add_argument("--scenario", choices=SCENARIOS, required=True)
    sp.add_argument("--rows", type=int, default=2400)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except RelbotError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())

"""Command-line pipeline: synth | train | run-filter | eval | plot.

Every command is deterministic given its seed and inputs, writes plain
files only, and exits 0 on success or 2 on usage/input errors. The default
output directory may be set via the ``INTENTRAJ_OUT`` environment variable;
everything else is explicit flags.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from intentraj import data as data_mod
from intentraj import filtering, metrics, plots, warp
from intentraj.motion import LinearMotionModel

__all__ = ["main"]


def _load_json(path: str | Path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _out_dir(args) -> Path:
    out = args.out or os.environ.get("INTENTRAJ_OUT")
    if not out:
        raise ValueError("no output directory: pass --out or set INTENTRAJ_OUT")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def cmd_synth(args) -> int:
    cfg = _load_json(args.config)
    out = _out_dir(args)
    imap = data_mod.build_boundary_map(
        tuple(cfg["bounds"]), int(cfg["num_regions"]), float(cfg.get("side", 1.5))
    )
    seed = args.seed if args.seed is not None else int(cfg.get("rng_seed", 0))
    synth_cfg = data_mod.SynthConfig(
        map=imap,
        num_trajectories=int(cfg["num_trajectories"]),
        speed_range=tuple(cfg.get("speed_range", (0.08, 0.15))),
        heading_noise_std=float(cfg.get("heading_noise_std", 0.0)),
        position_noise_std=float(cfg.get("position_noise_std", 0.0)),
        curvature_amplitude=float(cfg.get("curvature_amplitude", 0.0)),
        intention_switch_probability=float(cfg.get("intention_switch_probability", 0.0)),
        rng_seed=seed,
        frame_interval=float(cfg.get("frame_interval", data_mod.DEFAULT_FRAME_INTERVAL)),
    )
    records = data_mod.generate_synthetic(synth_cfg)
    data_mod.save_map(imap, out / "map.json")
    data_mod.save_corpus(records, out, config=synth_cfg)
    print(f"wrote {len(records)} trajectories to {out}")
    return 0


def cmd_train(args) -> int:
    records = data_mod.load_corpus(args.corpus)
    labeled = [r for r in records if r.goal_region_id is not None]
    skipped = [r.ped_id for r in records if r.goal_region_id is None]
    for ped_id in skipped:
        print(f"warning: skipping unlabeled record {ped_id}", file=sys.stderr)
    if not labeled:
        raise ValueError("all records unlabeled; nothing to train on")
    out = _out_dir(args)

    overrides = _load_json(args.config) if args.config else {}
    if args.seed is not None:
        overrides["rng_seed"] = args.seed
    cfg = warp.TrainConfig(**overrides)

    percents = [int(p) for p in args.percents.split(",")]
    bank = warp.ModelBank()
    for pct in percents:
        losses: list[tuple[int, float]] = []
        model = warp.train(
            labeled, pct, cfg,
            on_epoch=lambda epoch, loss: losses.append((epoch, loss)),
        )
        bank.models[pct] = model
        curve = "epoch,loss\n" + "".join(f"{e},{l!r}\n" for e, l in losses)
        data_mod.write_atomic(out / f"loss_pct{pct:02d}.csv", curve)
        print(f"pct {pct:02d}: loss {losses[0][1]:.6f} -> {losses[-1][1]:.6f}")
    index = warp.save_bank(bank, out, train_config=cfg)
    print(f"wrote model bank to {index}")
    return 0


def _resolve_model(name: str):
    if name == "ilm":
        return LinearMotionModel(), "ilm"
    bank = warp.load_bank(name)
    return warp.WarpMotionModel(bank), "wlstm"


def _filter_config(args) -> filtering.FilterConfig:
    overrides = _load_json(args.config) if args.config else {}
    if args.tau is not None:
        overrides["tau"] = args.tau
    if args.p_mutation is not None:
        overrides["p_mutation"] = args.p_mutation
    if args.num_particles is not None:
        overrides["num_particles"] = args.num_particles
    return filtering.FilterConfig(**overrides)


def cmd_run_filter(args) -> int:
    records = data_mod.load_corpus(args.corpus)
    imap = data_mod.load_map(args.map)
    model, model_name = _resolve_model(args.model)
    config = _filter_config(args)
    out = _out_dir(args)
    seed = args.seed if args.seed is not None else 0

    written = []
    for i, rec in enumerate(records):
        header, results = filtering.run_filter_on_record(
            rec, imap, model, config, [seed, i],
            model_name=model_name, final_margin=args.final_margin,
        )
        log_path = out / f"{rec.ped_id}.jsonl"
        filtering.write_run_log(log_path, header, results)
        written.append(log_path.name)
    manifest = {
        "command": "run-filter",
        "corpus": str(args.corpus),
        "map": str(args.map),
        "model": args.model,
        "seed": seed,
        "config": config.params_dict(),
        "logs": written,
    }
    data_mod.write_atomic(out / "run_manifest.json",
                          json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"wrote {len(written)} run logs to {out}")
    return 0


def cmd_eval(args) -> int:
    records = data_mod.load_corpus(args.corpus)
    imap = data_mod.load_map(args.map)
    out = _out_dir(args)
    ntis = [int(x) for x in args.nti.split(",")]

    runs_dir = Path(args.runs)
    log_paths = sorted(runs_dir.glob("*.jsonl"))
    if not log_paths:
        raise ValueError(f"no .jsonl run logs under {runs_dir}")

    groups: dict[tuple, list] = {}
    for path in log_paths:
        header, iters = filtering.read_run_log(path)
        cfg = header.get("config", {})
        key = (header.get("model", "?"), cfg.get("tau"), cfg.get("p_mutation"))
        groups.setdefault(key, []).append((header, iters))

    by_ped = {r.ped_id: r for r in records}
    all_reports = []
    for (model_name, tau, p_mut), runs in sorted(groups.items()):
        run_peds = {h["ped_id"] for h, _ in runs}
        missing = sorted(set(by_ped) - run_peds)
        extra = sorted(run_peds - set(by_ped))
        if missing or extra:
            raise ValueError(
                f"log/corpus mismatch for {model_name}: missing logs for {missing}, "
                f"logs without records {extra}"
            )
        for nti in ntis:
            report = metrics.evaluate_run(runs, records, imap, nti)
            tag = f"{model_name}_tau{tau:g}_pm{p_mut:g}_nti{nti}"
            metrics.write_report_json(report, out / f"report_{tag}.json")
            all_reports.append((model_name, report))
            print(
                f"{tag}: IEA {report.iea:.3f} NLL {report.nll:.3f} "
                f"minAOE {report.min_aoe:.3f} meanAOE {report.mean_aoe:.3f}"
            )

    metrics.write_report_csv(all_reports, out / "report.csv")
    nll_iea = "model,tau,p_mutation,nti,nll,iea\n" + "".join(
        f"{m},{rep.config.get('tau')},{rep.config.get('p_mutation')},"
        f"{rep.nti},{rep.nll!r},{rep.iea!r}\n"
        for m, rep in all_reports
    )
    data_mod.write_atomic(out / "nll_iea.csv", nll_iea)
    plots.plot_report_summary(
        [(m, rep.to_jsonable()) for m, rep in all_reports], out / "summary.svg"
    )
    return 0


def cmd_plot(args) -> int:
    header, iters = filtering.read_run_log(args.run)
    if not iters:
        raise ValueError(f"{args.run}: empty run log")
    imap = data_mod.load_map(args.map)
    out = _out_dir(args)

    truth = None
    if args.corpus:
        for rec in data_mod.load_corpus(args.corpus):
            if rec.ped_id == header["ped_id"]:
                truth = rec.trajectory.points
                break

    if args.iteration is not None:
        if not 0 <= args.iteration < len(iters):
            raise ValueError(f"iteration {args.iteration} out of range [0, {len(iters)})")
        chosen = iters[args.iteration]
    else:
        chosen = iters[-1]
    fan_path = out / f"fan_frame{int(chosen['frame']):04d}.svg"
    plots.plot_sample_fan(header, chosen, imap, fan_path, truth=truth)
    timeline_path = out / "belief_timeline.svg"
    plots.plot_belief_timeline(header, iters, imap, timeline_path)
    print(f"wrote {fan_path} and {timeline_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="intentraj",
        description="Intention filtering and trajectory prediction pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--config", required=True, help="SynthConfig JSON")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="override the config rng seed")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train the warp model bank")
    p.add_argument("--corpus", required=True, help="corpus manifest.json")
    p.add_argument("--out", help="output directory")
    p.add_argument("--config", help="TrainConfig JSON")
    p.add_argument("--seed", type=int, help="override the training rng seed")
    p.add_argument("--percents", default="0,25,50,75",
                   help="comma-separated observed-percentage buckets")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("run-filter", help="run the intention filter over a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--map", required=True, help="goal-map JSON")
    p.add_argument("--model", default="ilm", help="'ilm' or path to a model bank")
    p.add_argument("--out", help="output directory")
    p.add_argument("--config", help="FilterConfig JSON")
    p.add_argument("--seed", type=int)
    p.add_argument("--tau", type=float)
    p.add_argument("--p-mutation", type=float, dest="p_mutation")
    p.add_argument("--num-particles", type=int, dest="num_particles")
    p.add_argument("--final-margin", type=int, dest="final_margin",
                   help="frames held out after the last iteration (default: lookback)")
    p.set_defaults(func=cmd_run_filter)

    p = sub.add_parser("eval", help="score run logs against the corpus")
    p.add_argument("--runs", required=True, help="directory of .jsonl run logs")
    p.add_argument("--corpus", required=True)
    p.add_argument("--map", required=True)
    p.add_argument("--out", help="output directory")
    p.add_argument("--nti", default="1", help="comma-separated NTI values")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plot", help="render figures from a run log")
    p.add_argument("--run", required=True, help="one .jsonl run log")
    p.add_argument("--map", required=True)
    p.add_argument("--out", help="output directory")
    p.add_argument("--corpus", help="corpus manifest for ground-truth overlay")
    p.add_argument("--iteration", type=int, help="iteration index (default: last)")
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

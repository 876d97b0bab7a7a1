"""Command line entry point (``sense``)."""

from __future__ import annotations

import argparse
import json
import sys

from . import channel as channel_mod
from . import harness as harness_mod


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sense",
        description="CSI sensing experiments from low-resolution feedback")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a Monte-Carlo sweep from a config file")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--threads", type=int, default=1)
    p_run.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
    p_run.add_argument("--no-plots", action="store_true",
                       help="skip figure rendering")

    p_cmp = sub.add_parser("compare", help="summarize result CSVs and check trends")
    p_cmp.add_argument("csvs", nargs="+")
    p_cmp.add_argument("--trend", action="append", default=[],
                       help="monotonic:<alg> or order:<algA>>=<algB> (repeatable)")
    p_cmp.add_argument("--tol", type=float, default=0.01)
    p_cmp.add_argument("--out", default=None, help="write the markdown report here")

    p_gen = sub.add_parser("gen-scenario", help="generate a synthetic CSI dataset")
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--n1", type=int, default=8)
    p_gen.add_argument("--n2", type=int, default=4)
    p_gen.add_argument("--dual-pol", action="store_true")
    p_gen.add_argument("--n-ru", type=int, default=10)
    p_gen.add_argument("--n-paths", type=int, default=12)
    p_gen.add_argument("--n-carriers", type=int, default=1)
    p_gen.add_argument("--area-size", type=float, default=30.0)

    p_val = sub.add_parser("validate-dataset", help="check a CSI interchange file")
    p_val.add_argument("file")

    p_ovh = sub.add_parser("overhead", help="feedback bit-budget arithmetic")
    p_ovh.add_argument("--n-carriers", type=int, required=True)
    p_ovh.add_argument("--pmi-group", type=int, required=True)
    p_ovh.add_argument("--pmi-bits", type=int, required=True)
    p_ovh.add_argument("--cqi-group", type=int, required=True)
    p_ovh.add_argument("--cqi-bits", type=int, required=True)
    p_ovh.add_argument("--rounds", type=int, required=True)

    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _dispatch(args) -> int:
    if args.command == "run":
        cfg = harness_mod.parse_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        summary = harness_mod.run_experiment(cfg, args.out, threads=args.threads,
                                             render_plots=not args.no_plots)
        print(json.dumps({k: v for k, v in summary.items() if k != "config"},
                         indent=2, sort_keys=True))
        return 0

    if args.command == "compare":
        report, ok = harness_mod.compare_report(args.csvs, trends=args.trend,
                                                tol=args.tol)
        if args.out:
            with open(args.out, "w") as f:
                f.write(report)
        print(report)
        return 0 if ok else 1

    if args.command == "gen-scenario":
        geo = channel_mod.ArrayGeometry(n_horizontal=args.n1, n_vertical=args.n2,
                                        dual_polarized=args.dual_pol)
        cfg = channel_mod.ScenarioConfig(geometry=geo, n_ru=args.n_ru,
                                         n_paths=args.n_paths,
                                         n_carriers=args.n_carriers,
                                         area_size=args.area_size)
        scenario = channel_mod.gen_scenario(cfg, args.seed)
        channel_mod.save_csi_dataset(scenario, args.out)
        print(f"wrote {args.out}: M={geo.n_ports} nC={args.n_carriers} "
              f"nUE={1 + args.n_ru}")
        return 0

    if args.command == "validate-dataset":
        try:
            scenario = channel_mod.load_csi_dataset(args.file)
        except channel_mod.DatasetFormatError as exc:
            print(f"invalid dataset: {exc}", file=sys.stderr)
            return 1
        m, n_c = scenario.tu.channel.matrix.shape
        print(f"ok: M={m} nC={n_c} nUE={1 + scenario.n_rus}")
        return 0

    if args.command == "overhead":
        report = harness_mod.overhead_report(
            n_carriers=args.n_carriers, pmi_group=args.pmi_group,
            pmi_bits=args.pmi_bits, cqi_group=args.cqi_group,
            cqi_bits=args.cqi_bits, t_rounds=args.rounds)
        print(json.dumps(report, indent=2, sort_keys=True))
        return 0

    raise ValueError(f"unknown command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())

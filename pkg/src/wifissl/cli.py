"""Command-line entry point (``wifissl``).

Exit codes: 0 success, 1 usage error, 2 data error, 3 training divergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .ap_select import build_mask, save_mask
from .data import DataError, Role, load_csv
from .evaluate import EvalError
from .mean_teacher import DivergenceError
from .models import ModelError
from .nn.checkpoint import CheckpointError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="training seed (default 0)")
    p.add_argument("--seeds", type=int, default=1, help="replicate over seeds seed..seed+N-1")
    p.add_argument("--config", type=Path, help="JSON file mirroring ExperimentConfig")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--train", type=Path, help="training CSV")
    p.add_argument("--test", type=Path, help="validation CSV")
    p.add_argument("--model", choices=["simo", "cnnloc"])
    p.add_argument("--max-epochs", type=int, help="cap for SSL / SL epochs")
    p.add_argument("--pretrain-epochs", type=int, help="cap for pre-training epochs")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wifissl", description="Mean Teacher Wi-Fi fingerprint localization")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="validate a UJIIndoorLoc CSV and print a summary")
    p.add_argument("path", type=Path)
    p.add_argument("--role", choices=[r.value for r in Role], default="labeled")

    p = sub.add_parser("select-aps", help="build the AP selection mask")
    p.add_argument("--train", type=Path, required=True)
    p.add_argument("--unlabeled", type=Path, help="extra CSV read as unlabeled")
    p.add_argument("--out", type=Path, required=True, help="mask file to write")

    p = sub.add_parser("train", help="run a hybrid case or online learning")
    _common(p)
    p.add_argument("--scenario", choices=["hybrid", "online"])
    p.add_argument("--case", type=int, choices=[1, 2, 3, 4])
    p.add_argument("--strategy", choices=["sl", "ssl"])
    p.add_argument("--periods", type=int)
    p.add_argument("--reference", type=Path, help="online: pre-trained Case-4 SL checkpoint")
    p.add_argument("--no-ap-selection", action="store_true")

    p = sub.add_parser("ablate", help="AP-selection or noise-type ablation")
    p.add_argument("which", choices=["ap", "noise"])
    _common(p)
    p.add_argument("--strategy", choices=["sl", "ssl"], help="ap ablation strategy")
    p.add_argument("--noise", choices=["gaussian", "uniform"], help="noise ablation kind")

    p = sub.add_parser("eval", help="evaluate a checkpoint on a labeled CSV")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--test", type=Path, required=True)

    p = sub.add_parser("report", help="summarize all runs under a directory")
    p.add_argument("--dir", type=Path, required=True)
    return parser


def make_config(args, scenario: str) -> ex.ExperimentConfig:
    """Config from ``--config`` (if any) overridden by explicit flags."""
    base = json.loads(args.config.read_text()) if args.config else {}
    base.setdefault("scenario", scenario)
    if scenario in ("hybrid", "online") and base["scenario"] not in ("hybrid", "online"):
        raise UsageError(f"config scenario {base['scenario']!r} does not fit 'train'")
    over = {
        "scenario": getattr(args, "scenario", None),
        "case": getattr(args, "case", None),
        "model": args.model,
        "strategy": getattr(args, "strategy", None),
        "periods": getattr(args, "periods", None),
        "train_path": str(args.train) if args.train else None,
        "test_path": str(args.test) if args.test else None,
        "output_dir": str(args.out) if args.out else None,
        "reference": str(args.reference) if getattr(args, "reference", None) else None,
    }
    base.update({k: v for k, v in over.items() if v is not None})
    if getattr(args, "no_ap_selection", False):
        base["ap_selection"] = False
    ssl = dict(base.get("ssl", {}))
    for key, val in (("seed", args.seed), ("max_epochs", args.max_epochs),
                     ("pretrain_max_epochs", args.pretrain_epochs)):
        if val is not None:
            ssl[key] = val
    base["ssl"] = ssl
    if getattr(args, "noise", None):
        base["noise"] = {**base.get("noise", {}), "kind": args.noise}
    try:
        return ex.ExperimentConfig.from_dict(base)
    except (TypeError, ValueError) as e:
        raise UsageError(str(e)) from e


def _seeds(cfg, n: int) -> list[int]:
    if n < 1:
        raise UsageError("--seeds must be >= 1")
    return [cfg.ssl.seed + i for i in range(n)]


def _print_records(records, summary: bool = True) -> None:
    for r in records:
        print(f"seed {r.seed} {r.config['strategy']}: EvAAL {r.evaal_error:.3f} m  gamma {r.gamma:.4f}  ({Path(r.checkpoint_path).parent})")
    if summary and len(records) > 1:
        s = ex.summarize(records)
        print(f"mean EvAAL {s['evaal_error']:.3f} ± {s['evaal_error_std']:.3f} m  "
              f"gamma {s['gamma']:.4f} ± {s['gamma_std']:.4f}")


def cmd_ingest(args) -> int:
    d = load_csv(args.path, args.role)
    summary = {"rows": len(d), "aps": len(d.ap_ids), "role": d.role.value}
    if d.role is not Role.UNLABELED:
        summary["buildings"] = sorted(int(b) for b in np.unique(d.building))
        summary["floors"] = sorted(int(f) for f in np.unique(d.floor))
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_select(args) -> int:
    labeled = load_csv(args.train, Role.LABELED)
    unlabeled = load_csv(args.unlabeled, Role.UNLABELED) if args.unlabeled else None
    mask = build_mask(labeled, unlabeled)
    save_mask(mask, args.out)
    print(f"{len(mask)} of {len(labeled.ap_ids)} APs retained -> {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = make_config(args, args.scenario or "hybrid")
    data = ex.load_data(cfg)
    fn = ex.run_online if cfg.scenario == "online" else ex.run_hybrid_case
    records = [fn(cfg.with_(ssl={**cfg.ssl.to_dict(), "seed": s}), data)
               for s in _seeds(cfg, args.seeds)]
    _print_records(records)
    return EXIT_OK


def cmd_ablate(args) -> int:
    scenario = "ablation_ap" if args.which == "ap" else "ablation_noise"
    cfg = make_config(args, scenario).with_(scenario=scenario)
    data = ex.load_data(cfg)
    fn = ex.run_ablation_ap if args.which == "ap" else ex.run_ablation_noise
    for s in _seeds(cfg, args.seeds):
        pair = fn(cfg.with_(ssl={**cfg.ssl.to_dict(), "seed": s}), data)
        _print_records(list(pair), summary=False)
    return EXIT_OK


def cmd_eval(args) -> int:
    spec, params, mask, scaler = ex.load_model(args.checkpoint)
    report = ex.evaluate_model(spec, params, mask, scaler, load_csv(args.test, Role.TEST))
    out = {k: v for k, v in report.to_dict().items() if k != "per_sample_errors"}
    print(json.dumps(out, sort_keys=True))
    return EXIT_OK


def cmd_report(args) -> int:
    if not args.dir.is_dir():
        raise FileNotFoundError(f"{args.dir} is not a directory")
    print(ex.collect_report(args.dir))
    return EXIT_OK


COMMANDS = {
    "ingest": cmd_ingest,
    "select-aps": cmd_select,
    "train": cmd_train,
    "ablate": cmd_ablate,
    "eval": cmd_eval,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as e:
        print(f"wifissl: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as e:
        print(f"wifissl: training diverged: {e}", file=sys.stderr)
        return EXIT_DIVERGED
    except (DataError, EvalError, ModelError, CheckpointError, FileNotFoundError, IsADirectoryError) as e:
        print(f"wifissl: data error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

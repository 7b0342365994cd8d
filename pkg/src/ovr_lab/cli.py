"""Command-line front end: estimate-rtf, simulate, train, reconstruct, evaluate."""

from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import shutil
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .audio_io import read_wav, write_wav
from .manifest import CorpusManifest
from .metrics import evaluate_pairs
from .rtf import estimate_talker_rtfs, load_bank, save_bank, select_rtfs
from .simulate import SimConfig, build_corpus, list_wavs
from .unet.model import PRESETS, load_model, reconstruct, save_model
from .unet.train import TrainConfig, config_dict, run_strategy

log = logging.getLogger("ovr_lab")

STRATEGY_FLAGS = {"r": "R", "s": "S", "s+": "S+", "s+r": "S+R"}


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(f"usage: {message}")


def _snr_range(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LOW:HIGH, got {text!r}")
    return lo, hi


def _prepare_out(path: Path, force: bool, is_dir: bool) -> None:
    if path.exists() and (path.is_file() or any(path.iterdir())):
        if not force:
            raise CliError(f"output {path} exists; pass --force to overwrite")
        if path.is_dir():
            shutil.rmtree(path)
        else:
            path.unlink()
    if is_dir:
        path.mkdir(parents=True, exist_ok=True)
    else:
        path.parent.mkdir(parents=True, exist_ok=True)


def _write_run_record(args, out: Path, is_dir: bool, extra: dict | None = None) -> None:
    cfg = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()
           if k != "func"}
    record = {"subcommand": args.command, "config": cfg, "versions": {
        "ovr_lab": __version__, "python": platform.python_version(),
        "numpy": np.__version__, "scipy": scipy.__version__}}
    record.update(extra or {})
    target = out / "run.json" if is_dir else out.with_name(out.name + ".run.json")
    target.write_text(json.dumps(record, indent=2, sort_keys=True, default=str) + "\n")


def cmd_estimate_rtf(args) -> None:
    if len(args.inear) != len(args.outer):
        raise CliError("--inear and --outer must be given the same number of times")
    talkers = args.talker or [f"t{i:02d}" for i in range(len(args.inear))]
    if len(talkers) != len(args.inear):
        raise CliError("--talker must be given once per recording pair")
    per_talker: dict[str, list] = {}
    for tid, inear_path, outer_path in zip(talkers, args.inear, args.outer):
        inear = read_wav(inear_path, args.channel)
        outer = read_wav(outer_path, args.channel)
        n = min(len(inear), len(outer))
        inear.samples, outer.samples = inear.samples[:n], outer.samples[:n]
        per_talker.setdefault(tid, []).extend(estimate_talker_rtfs(inear, outer, tid))
    out = Path(args.out)
    _prepare_out(out, args.force, True)
    bank = select_rtfs(per_talker, args.mode, "all")
    save_bank(bank, out, mode=args.mode)
    _write_run_record(args, out, True, {"n_reirs": len(bank)})
    log.info("wrote %d ReIRs to %s", len(bank), out)


def cmd_simulate(args) -> None:
    bank_dir = Path(args.bank).resolve()
    bank_doc = json.loads((bank_dir / "bank.json").read_text())
    noise = None
    if args.noise:
        noise = [(p.stem, read_wav(p)) for p in list_wavs(args.noise)]
        if not noise:
            raise CliError(f"no WAV files in noise dir {args.noise}")
    cfg = SimConfig(reir_bank=load_bank(bank_dir),
                    talker_scope="1T" if args.talkers == "1t" else "14T",
                    rtf_mode=bank_doc.get("mode", ""), noise=noise, snr_range_db=args.snr,
                    seed=args.seed, talker_id=args.talker_id, jobs=args.jobs,
                    bank_ref=str(bank_dir))
    out = Path(args.out)
    _prepare_out(out, args.force, True)
    manifest = build_corpus(args.speech, cfg, out)
    _write_run_record(args, out, True, {"n_entries": len(manifest.entries)})


def cmd_train(args) -> None:
    strategy = STRATEGY_FLAGS[args.strategy]
    corpus = CorpusManifest.load(args.corpus) if args.corpus else None
    real = CorpusManifest.load(args.real) if args.real else None
    if strategy == "R" and real is None and corpus is not None and corpus.kind == "pairs":
        real, corpus = corpus, None
    net_cfg = PRESETS[args.preset]
    overrides = {}
    if args.dtype:
        overrides["dtype"] = args.dtype
    if overrides:
        net_cfg = type(net_cfg)(**{**asdict(net_cfg), **overrides})
    train_cfg = TrainConfig(strategy=strategy, seed=args.seed)
    for flag, key in (("max_epochs", "max_epochs"), ("batches_per_epoch", "batches_per_epoch"),
                      ("batch_size", "batch_size"), ("lr", "lr0"),
                      ("finetune_lr", "finetune_lr"), ("val_max_segments", "val_max_segments")):
        value = getattr(args, flag)
        if value is not None:
            setattr(train_cfg, key, value)
    out = Path(args.out)
    _prepare_out(out, args.force, True)
    params, logs = run_strategy(strategy, net_cfg, train_cfg, corpus, real)
    provenance = {"strategy": strategy, "seed": args.seed, "preset": args.preset,
                  "train_config": config_dict(train_cfg),
                  "epochs": {phase: len(tl.records) for phase, tl in logs.items()},
                  "corpus": args.corpus, "real": args.real}
    save_model(params, net_cfg, out, provenance)
    for phase, tl in logs.items():
        name = "trainlog.jsonl" if phase in ("train", "pretrain") else f"trainlog_{phase}.jsonl"
        (out / name).write_text(tl.to_jsonl())
    _write_run_record(args, out, True)


def cmd_reconstruct(args) -> None:
    params, net_cfg, _ = load_model(args.model)
    buf = read_wav(args.input)
    out = Path(args.out)
    _prepare_out(out, args.force, False)
    write_wav(out, reconstruct(params, net_cfg, buf))
    _write_run_record(args, out, False)


def cmd_evaluate(args) -> None:
    manifest = CorpusManifest.load(args.pairs)
    params = net_cfg = None
    provenance = {}
    if args.model:
        params, net_cfg, provenance = load_model(args.model)
    report = evaluate_pairs(manifest, params, net_cfg, split=args.split, label=args.label or "")
    if provenance:
        report.data = f"[{provenance.get('strategy', '?')}]"
    if args.rtfs:
        report.rtfs = args.rtfs
    if args.pesq:
        report.attach_pesq(args.pesq)
    out = Path(args.out)
    _prepare_out(out, args.force, False)
    out.write_text(report.to_json())
    out.with_suffix(".txt").write_text(report.to_table())
    _write_run_record(args, out, False, {"means": report.means})
    print(report.to_table(), end="")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ovr-lab", description=__doc__)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=int(os.environ.get("OVR_LAB_JOBS", "1")))
    p.add_argument("--force", action="store_true", help="overwrite existing outputs")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("estimate-rtf", help="estimate a ReIR bank from paired recordings")
    s.add_argument("--inear", action="append", required=True)
    s.add_argument("--outer", action="append", required=True)
    s.add_argument("--talker", action="append")
    s.add_argument("--channel", type=int, default=0)
    s.add_argument("--mode", choices=["s-rtf", "m-rtf"], default="m-rtf")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_estimate_rtf)

    s = sub.add_parser("simulate", help="simulate an in-ear corpus")
    s.add_argument("--speech", required=True)
    s.add_argument("--bank", required=True)
    s.add_argument("--talkers", choices=["1t", "all"], default="all")
    s.add_argument("--talker-id")
    s.add_argument("--noise")
    s.add_argument("--snr", type=_snr_range, default=(10.0, 60.0))
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("train", help="train the U-Net under a strategy")
    s.add_argument("--corpus")
    s.add_argument("--real")
    s.add_argument("--preset", choices=sorted(PRESETS), default="desk")
    s.add_argument("--strategy", choices=sorted(STRATEGY_FLAGS), required=True)
    s.add_argument("--max-epochs", type=int)
    s.add_argument("--batches-per-epoch", type=int)
    s.add_argument("--batch-size", type=int)
    s.add_argument("--lr", type=float)
    s.add_argument("--finetune-lr", type=float)
    s.add_argument("--val-max-segments", type=int)
    s.add_argument("--dtype", choices=["float64", "float32"])
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("reconstruct", help="run a trained model on a WAV file")
    s.add_argument("--model", required=True)
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_reconstruct)

    s = sub.add_parser("evaluate", help="LSD/STOI report for a pair manifest")
    s.add_argument("--pairs", required=True)
    s.add_argument("--model")
    s.add_argument("--split")
    s.add_argument("--label")
    s.add_argument("--rtfs")
    s.add_argument("--pesq", help="JSON file of externally computed PESQ-WB scores")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_evaluate)
    return p


def dispatch(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                            format="%(levelname)s %(name)s: %(message)s")
        if args.command == "train" and args.strategy == "s+r" and not args.real:
            raise CliError("strategy s+r requires --real")
        args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError, FloatingPointError) as exc:
        msg = str(exc).replace("\n", " ")
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(dispatch())

"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical error.
Every subcommand accepts --config (JSON overrides of the printed defaults)
and writes only under paths named in its arguments.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, TrainConfig, config_from_dict, dump_config, load_config
from .conllu import parse_conllu
from .dataset import load_bundles
from .errors import DataError, NumericalError, SynretError, UsageError
from .hierarchy import build_hierarchy, hierarchy_to_json
from .metrics import compute_metrics, evaluate_matrix
from .params import init_params, load_checkpoint, save_checkpoint
from .pipeline import build_pair_features
from .scoring import dsl_postprocess, score_matrix
from .selfcheck import run_selfcheck
from .tensor_store import gen_fixture, write_tensor
from .train import train, write_loss_log


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits with code 2
        raise UsageError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="synret", description=__doc__)
    p.add_argument("--version", action="version", version=f"synret {__version__}")
    p.add_argument("--verbose", action="store_true", help="print tracebacks on errors")
    p.add_argument("--dump-config", action="store_true",
                   help="print the full default configuration as JSON and exit")
    sub = p.add_subparsers(dest="command")

    def common(sp):
        sp.add_argument("--config", help="JSON file overriding default configuration")
        sp.add_argument("--threads", type=int, help="worker threads for cross-pair builds")

    g = sub.add_parser("gen-fixtures", help="write a seeded synthetic dataset")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--pairs", type=int, required=True)
    g.add_argument("--tokens", type=int, default=6, help="caption length N_t")
    g.add_argument("--frames", type=int, default=4, help="frames per video N_v")
    g.add_argument("--patches", type=int, default=9, help="patches per frame N_p")
    g.add_argument("--dim", type=int, default=16, help="feature width d")
    g.add_argument("--out", required=True, help="output directory")

    b = sub.add_parser("build-hierarchy", help="build the caption hierarchy from a parse")
    b.add_argument("conllu", help="input CoNLL-U file")
    b.add_argument("-o", "--out", help="output JSON path (default: stdout)")

    f = sub.add_parser("fuse", help="write per-pair fused features")
    common(f)
    f.add_argument("--manifest", required=True)
    f.add_argument("--params", required=True, help="checkpoint directory")
    f.add_argument("--out", required=True, help="output directory")
    f.add_argument("--literal-patch-norm", action="store_true",
                   help="use the fixed 1/lambda_patch frame-average normalizer")

    s = sub.add_parser("score", help="write the caption x video score matrix")
    common(s)
    s.add_argument("--manifest", required=True)
    s.add_argument("--params", required=True)
    s.add_argument("--out", required=True, help="output .shet path (JSON sidecar alongside)")
    s.add_argument("--dsl", action="store_true",
                   help="apply dual-softmax prior weighting (caption-to-video direction)")
    s.add_argument("--literal-patch-norm", action="store_true")

    t = sub.add_parser("train", help="train the fusion modules on a manifest")
    common(t)
    t.add_argument("--manifest", required=True)
    t.add_argument("--out", required=True, help="checkpoint output directory")

    e = sub.add_parser("eval", help="retrieval metrics for both directions")
    common(e)
    e.add_argument("--manifest", required=True)
    e.add_argument("--params", required=True)
    e.add_argument("--report", required=True, help="output report JSON path")
    e.add_argument("--dsl", action="store_true")
    e.add_argument("--literal-patch-norm", action="store_true")

    c = sub.add_parser("selfcheck", help="run the built-in invariant suite")
    common(c)
    return p


def _load_cfg(args) -> tuple[RunConfig, TrainConfig]:
    if getattr(args, "config", None):
        run, tr = load_config(args.config)
    else:
        run, tr = config_from_dict({})
    if getattr(args, "threads", None):
        run.threads = args.threads
    if getattr(args, "literal_patch_norm", False):
        run.literal_patch_norm = True
    run.validate()
    tr.validate()
    return run, tr


def _cfg_for_checkpoint(run: RunConfig, params) -> RunConfig:
    """Model geometry always comes from the checkpoint."""
    run.d = params.d
    run.heads = params.heads
    run.max_frames = params.max_frames
    run.tau = params.tau
    return run


def _cmd_gen_fixtures(args) -> int:
    manifest = gen_fixture(args.seed, args.pairs, args.tokens, args.frames,
                           args.patches, args.dim, args.out)
    print(manifest)
    return 0


def _cmd_build_hierarchy(args) -> int:
    try:
        raw = Path(args.conllu).read_text(encoding="utf-8")
    except OSError as e:
        raise DataError(f"cannot read {args.conllu}: {e}") from None
    doc = hierarchy_to_json(build_hierarchy(parse_conllu(raw)))
    if args.out:
        Path(args.out).write_text(doc, encoding="utf-8")
    else:
        sys.stdout.write(doc)
    return 0


def _cmd_fuse(args) -> int:
    run, _ = _load_cfg(args)
    params = load_checkpoint(args.params)
    run = _cfg_for_checkpoint(run, params)
    bundles = load_bundles(args.manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    index = {}
    for b in bundles:
        tc, vc, pf = build_pair_features(b, params, run)
        tensors = {
            "e1": tc.e1, "e2": tc.e2, "e3": tc.e3, "e3p": tc.e3p, "f3p": tc.f3p,
            "ev1": pf.ev1, "g": vc.g, "ev2": pf.ev2, "ev3": pf.ev3,
        }
        files = {}
        for name, value in tensors.items():
            fname = f"{b.pair_id}.{name}.shet"
            write_tensor(np.asarray(value, dtype=np.float32), out / fname)
            files[name] = fname
        index[b.pair_id] = {
            "tensors": files,
            "frame_selection": [sel.tolist() for sel in pf.psi2],
            "patch_selection": [[sel.tolist() for sel in per_entity] for per_entity in pf.psi3],
        }
    (out / "index.json").write_text(json.dumps(index, indent=2, sort_keys=True) + "\n",
                                    encoding="utf-8")
    print(f"wrote features for {len(bundles)} pairs to {out}")
    return 0


def _cmd_score(args) -> int:
    run, _ = _load_cfg(args)
    params = load_checkpoint(args.params)
    run = _cfg_for_checkpoint(run, params)
    bundles = load_bundles(args.manifest)
    s = score_matrix(bundles, bundles, params, run, threads=run.threads)
    if args.dsl:
        s = dsl_postprocess(s, run.tau_dsl, "t2v")
    if not np.isfinite(s).all():
        raise NumericalError("score matrix contains non-finite values")
    write_tensor(s.astype(np.float32), args.out)
    sidecar = {
        "rows": [b.pair_id for b in bundles],
        "cols": [b.pair_id for b in bundles],
        "dsl": bool(args.dsl),
        "dsl_direction": "t2v" if args.dsl else None,
        "tau_dsl": run.tau_dsl if args.dsl else None,
        "literal_patch_norm": run.literal_patch_norm,
    }
    Path(str(args.out) + ".json").write_text(
        json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote {s.shape[0]}x{s.shape[1]} score matrix to {args.out}")
    return 0


def _cmd_train(args) -> int:
    run, tr = _load_cfg(args)
    bundles = load_bundles(args.manifest)
    d = bundles[0].d
    if run.d != d:
        raise DataError(f"dimension mismatch: config d={run.d}, manifest features d={d}")
    params = init_params(run.seed, run.d, heads=run.heads,
                         max_frames=run.max_frames, tau=run.tau)
    curve = train(bundles, params, run, tr)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(params, out, seed=run.seed)
    write_loss_log(curve, out / "loss.csv")
    print(f"trained {len(curve)} steps, final loss {curve[-1][1]!r}; checkpoint in {out}")
    return 0


def _cmd_eval(args) -> int:
    run, _ = _load_cfg(args)
    params = load_checkpoint(args.params)
    run = _cfg_for_checkpoint(run, params)
    bundles = load_bundles(args.manifest)
    s = score_matrix(bundles, bundles, params, run, threads=run.threads)
    if not np.isfinite(s).all():
        raise NumericalError("score matrix contains non-finite values")
    if args.dsl:
        report = {
            "t2v": compute_metrics(dsl_postprocess(s, run.tau_dsl, "t2v"), "t2v").to_dict(),
            "v2t": compute_metrics(dsl_postprocess(s, run.tau_dsl, "v2t"), "v2t").to_dict(),
        }
        report["rsum"] = sum(report["t2v"][f"r{k}"] for k in (1, 5, 10)) + \
            sum(report["v2t"][f"r{k}"] for k in (1, 5, 10))
        report["dsl"] = True
    else:
        report = evaluate_matrix(s)
        report["dsl"] = False
    report["pairs"] = len(bundles)
    Path(args.report).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n",
                                 encoding="utf-8")
    print(json.dumps(report, sort_keys=True))
    return 0


def _cmd_selfcheck(_args) -> int:
    failures = run_selfcheck()
    return 0 if failures == 0 else 2


_COMMANDS = {
    "gen-fixtures": _cmd_gen_fixtures,
    "build-hierarchy": _cmd_build_hierarchy,
    "fuse": _cmd_fuse,
    "score": _cmd_score,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "selfcheck": _cmd_selfcheck,
}


def main(argv=None) -> int:
    parser = _build_parser()
    verbose = False
    try:
        args = parser.parse_args(argv)
        verbose = args.verbose
        if args.dump_config:
            run, tr = config_from_dict({})
            sys.stdout.write(dump_config(run, tr))
            return 0
        if not args.command:
            parser.print_help()
            return 1
        return _COMMANDS[args.command](args)
    except UsageError as e:
        print(f"synret: usage error: {e}", file=sys.stderr)
        if verbose:
            traceback.print_exc()
        return 1
    except DataError as e:
        print(f"synret: data error: {e}", file=sys.stderr)
        if verbose:
            traceback.print_exc()
        return 2
    except NumericalError as e:
        print(f"synret: numerical error: {e}", file=sys.stderr)
        if verbose:
            traceback.print_exc()
        return 3
    except SynretError as e:
        print(f"synret: error: {e}", file=sys.stderr)
        if verbose:
            traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())

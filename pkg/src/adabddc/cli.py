"""Command-line entry point: ``adabddc <subcommand> [options]``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import stochastic
from .adaptive_coarse import compute_constraints
from .config import ConfigError, load_config
from .pipeline import (
    Experiment,
    LayoutMismatch,
    emit_report,
    evaluate_surrogate,
    generate_dataset,
    read_dataset,
    read_records,
    summarize,
)
from .surrogate import TrainConfig, init_network, load_model, nrmse, save_model, scg_train

log = logging.getLogger("adabddc")


def _common(p):
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--preset", choices=["desk", "paper"], default="desk")
    p.add_argument("--out", help="output path")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="adabddc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate (xi, eigenvector) samples")
    _common(p)
    p.add_argument("--samples", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--split", choices=["train", "test"], default="train")

    p = sub.add_parser("train", help="train the surrogate network with SCG")
    _common(p)
    p.add_argument("--data", help="dataset directory (default <out>/data_train)")
    p.add_argument("--seed", type=int, help="weight initialization seed")
    p.add_argument("--epochs", type=int, help="override max_epochs")

    p = sub.add_parser("evaluate", help="compare surrogate-built and exact preconditioners")
    _common(p)
    p.add_argument("--model", help="model file (default <out>/model.json)")
    p.add_argument("--data", help="test dataset directory (default <out>/data_test)")
    p.add_argument("--oracle", action="store_true", help="pipe true targets instead of model predictions")

    p = sub.add_parser("solve", help="one adaptive BDDC solve, prints the PCG report")
    _common(p)
    p.add_argument("--rho", default="sample", help="constant:<c> | sample | A | B")
    p.add_argument("--seed", type=int, default=0, help="KL sample seed for --rho sample")
    p.add_argument("--k", type=int, help="adaptive constraints per edge")
    p.add_argument("--tol", type=float, help="eigenvalue threshold instead of fixed k")

    p = sub.add_parser("report", help="rebuild summary and histograms from records.csv")
    _common(p)
    p.add_argument("--records", required=True)

    p = sub.add_parser("selftest", help="run quick invariant checks")
    _common(p)
    return parser


def _out(args, cfg, default):
    return Path(args.out) if args.out else Path(cfg.out) / default


def cmd_gen_data(args, cfg):
    train = args.split == "train"
    samples = args.samples if args.samples is not None else (cfg.n_train if train else cfg.n_test)
    seed = args.seed if args.seed is not None else (cfg.train_data_seed if train else cfg.test_data_seed)
    out = _out(args, cfg, f"data_{args.split}")
    ds = generate_dataset(cfg, samples, seed, out)
    print(json.dumps({"out": str(out), "samples": len(ds), "O": ds.meta["O"], "sha256": _dir_hash(out)}))
    return 0


def _dir_hash(path):
    import hashlib

    h = hashlib.sha256()
    for name in ("meta.json", "data.csv"):
        h.update((Path(path) / name).read_bytes())
    return h.hexdigest()


def cmd_train(args, cfg):
    data = Path(args.data) if args.data else Path(cfg.out) / "data_train"
    ds = read_dataset(data)
    seed = args.seed if args.seed is not None else cfg.train_seed
    epochs = args.epochs if args.epochs is not None else cfg.max_epochs
    net = init_network((ds.inputs.shape[1], cfg.hidden, ds.targets.shape[1]), seed)
    net, hist = scg_train(net, ds, TrainConfig(cfg.grad_min, epochs, seed))
    train_nrmse = nrmse(ds.targets, net(ds.inputs))
    out = _out(args, cfg, "model.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    extra = {
        "epochs": hist.epochs[-1],
        "stop_reason": hist.stop_reason,
        "train_mse": hist.loss[-1],
        "train_nrmse": train_nrmse,
        "config_hash": cfg.hash(),
        "train_seed": seed,
    }
    save_model(net, out, ds.meta.get("layout_hash", ""), extra)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "mse", "grad_norm", "accepted"])
    for row in zip(hist.epochs, hist.loss, hist.grad_norm, hist.accepted):
        w.writerow([row[0], repr(row[1]), repr(row[2]), str(row[3]).lower()])
    out.with_name(out.stem + "_history.csv").write_text(buf.getvalue())
    print(json.dumps({"model": str(out), **extra}))
    return 0


def cmd_evaluate(args, cfg):
    data = Path(args.data) if args.data else Path(cfg.out) / "data_test"
    ds = read_dataset(data)
    if args.oracle:
        rows = {tuple(x): y for x, y in zip(map(tuple, ds.inputs), ds.targets)}
        predict, layout_hash = (lambda xi: rows[tuple(xi)]), ds.meta.get("layout_hash")
    else:
        model = Path(args.model) if args.model else Path(cfg.out) / "model.json"
        net, header = load_model(model)
        predict, layout_hash = (lambda xi: net(xi)[0]), header.get("layout_hash")
    records, summary = evaluate_surrogate(cfg, predict, ds, layout_hash)
    out = _out(args, cfg, "report")
    summary = emit_report(records, out, summary)
    print(json.dumps({"out": str(out), "test_nrmse": summary["test_nrmse"],
                      "iterations_linf": summary["iterations"]["linf"],
                      "lambda_max_smape": summary["lambda_max"]["smape"]}))
    return 0


def cmd_solve(args, cfg):
    if args.k is not None:
        cfg = cfg.replace(k=args.k)
    exp = Experiment(cfg)
    kind, _, val = args.rho.partition(":")
    if kind == "constant":
        rho = np.full(exp.grid.num_elements, float(val or 1.0))
    elif kind in ("sample", "A", "B"):
        if kind != "sample":
            exp = Experiment(cfg.replace(expected=kind))
        rho = exp.field(stochastic.sample_xi(cfg.R, args.seed))
    else:
        raise ConfigError(f"unknown --rho {args.rho!r}")
    prob = exp.problem(rho=rho)
    if args.tol is not None:
        cs = compute_constraints(prob.subs, prob.partition, prob.classes, tol=args.tol)
    else:
        cs = compute_constraints(prob.subs, prob.partition, prob.classes, k=cfg.k)
    pre = prob.preconditioner(cs.constraint_blocks())
    u, rep = prob.solve(pre, cfg.pcg_tol, cfg.pcg_max_iter)
    doc = rep.to_dict()
    doc["num_primal"] = pre.num_primal
    print(json.dumps(doc))
    return 0 if rep.converged else 1


def cmd_report(args, cfg):
    records = read_records(args.records)
    out = Path(args.out) if args.out else Path(args.records).parent
    emit_report(records, out, summarize(records))
    print(json.dumps({"out": str(out), "samples": len(records)}))
    return 0


def cmd_selftest(args, cfg):
    from .selftest import run_selftest

    results = run_selftest()
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return 0 if all(ok for _, ok, _ in results) else 1


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "solve": cmd_solve,
    "report": cmd_report,
    "selftest": cmd_selftest,
}


def cli_main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.preset)
        return COMMANDS[args.command](args, cfg)
    except (ConfigError, LayoutMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        log.debug("failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()

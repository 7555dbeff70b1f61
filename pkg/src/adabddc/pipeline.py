"""Dataset generation, surrogate evaluation, metrics and report files."""

import csv
import hashlib
import io
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import stochastic
from .adaptive_coarse import compute_constraints, constraints_from_vectors
from .bddc import InterfaceProblem, relative_error, reference_solution
from .config import ConfigError
from .decomp import classify_interface, partition_uniform
from .grid_fem import build_grid
from .surrogate import Dataset, nrmse

log = logging.getLogger(__name__)

MAX_SKIP_FRACTION = 0.01


class LayoutMismatch(ConfigError):
    pass


def fmt(x):
    """Shortest repr that round-trips a double exactly."""
    return repr(float(x))


def smape(q_true, q_pred):
    """Symmetric mean absolute percentage error in [0, 1]; 0/0 terms count as 0."""
    q = np.asarray(q_true, dtype=float).ravel()
    qh = np.asarray(q_pred, dtype=float).ravel()
    if q.shape != qh.shape or q.size == 0:
        raise ValueError("sMAPE needs two nonempty vectors of equal length")
    num = np.abs(q - qh)
    den = np.abs(q) + np.abs(qh)
    terms = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    return float(terms.mean())


def linf(q_true, q_pred):
    return float(np.max(np.abs(np.asarray(q_true, dtype=float) - np.asarray(q_pred, dtype=float))))


class Experiment:
    """Geometry, KL basis and mean field shared by all samples of one config."""

    def __init__(self, config):
        self.config = config.validate()
        self.grid = build_grid(config.n)
        self.partition = partition_uniform(self.grid, config.per_side)
        self.classes = classify_interface(self.partition)
        if config.covariance == "brownian":
            self.basis = stochastic.brownian_basis(config.R)
        else:
            self.basis = stochastic.exponential_basis(config.R, config.sigma2, config.eta1, config.eta2)
        self.expected = make_expected(config.expected, self.grid, config.expected_seed)

    def field(self, xi):
        return stochastic.realize_field(self.basis, self.expected, xi, self.grid)

    def problem(self, xi=None, rho=None):
        if rho is None:
            rho = self.field(xi)
        return InterfaceProblem.build(
            self.grid, rho, self.config.per_side, self.config.source, self.partition, self.classes
        )

    def true_constraints(self, prob):
        return compute_constraints(prob.subs, prob.partition, prob.classes, k=self.config.k)

    def layout(self):
        lay = self.classes.layout()
        lay.update(
            {
                "n": self.config.n,
                "per_side": self.config.per_side,
                "k": self.config.k,
                "edge_lengths": [int(e.nodes.size) for e in self.classes.edges],
            }
        )
        return lay

    @property
    def O(self):
        return self.config.k * sum(int(e.nodes.size) for e in self.classes.edges)

    def layout_hash(self):
        blob = json.dumps(self.layout(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def split_target(self, y):
        """Per-edge ``(k, |F|)`` blocks of a concatenated target vector."""
        y = np.asarray(y, dtype=float)
        if y.size != self.O:
            raise LayoutMismatch(f"target length {y.size} != O={self.O}")
        out, a = [], 0
        for e in self.classes.edges:
            m = self.config.k * e.nodes.size
            out.append(y[a : a + m].reshape(self.config.k, e.nodes.size))
            a += m
        return out


def make_expected(desc, grid, seed):
    kind, _, arg = desc.partition(":")
    if kind == "A":
        return stochastic.expected_random_exponent(grid, seed)
    if kind == "B":
        return stochastic.expected_trig(grid)
    if kind == "constant":
        return stochastic.expected_constant(grid, float(arg or 0.0))
    if kind == "raster":
        return stochastic.load_raster(arg, grid)
    raise ConfigError(f"unknown expected field {desc!r}")


# -- datasets ----------------------------------------------------------------


def generate_dataset(config, samples, seed, out_dir=None, experiment=None):
    """Draw ``xi`` for each sample (seed ``seed + i``) and compute its target stack.

    Writes ``meta.json`` and ``data.csv`` into `out_dir` when given and
    returns the :class:`Dataset`.
    """
    exp = experiment or Experiment(config)
    R, O = config.R, exp.O
    inputs, targets, flags, skipped, seeds = [], [], [], [], []
    for i in range(samples):
        s = seed + i
        xi = stochastic.sample_xi(R, s)
        try:
            cs = exp.true_constraints(exp.problem(xi))
        except (np.linalg.LinAlgError, RuntimeError, ValueError) as exc:
            log.warning("sample %d (seed %d) skipped: %s", i, s, exc)
            skipped.append({"sample": i, "seed": s, "error": str(exc)})
            if len(skipped) > MAX_SKIP_FRACTION * samples:
                raise RuntimeError(f"{len(skipped)} of {samples} samples failed; aborting") from exc
            continue
        if cs.near_degenerate:
            flags.append({"row": len(inputs), "edges": cs.near_degenerate})
        inputs.append(xi)
        targets.append(cs.target())
        seeds.append(s)
    meta = {
        "R": R,
        "O": O,
        "k": config.k,
        "samples": len(inputs),
        "seed": seed,
        "seed_rule": "sample i uses numpy default_rng(seed + i).standard_normal(R)",
        "sample_seeds": seeds,
        "skipped": skipped,
        "near_degenerate": flags,
        "layout": exp.layout(),
        "layout_hash": exp.layout_hash(),
        "config": config.to_dict(),
        "config_hash": config.hash(),
    }
    meta["config"].pop("out", None)
    ds = Dataset(np.array(inputs).reshape(-1, R), np.array(targets).reshape(-1, O), meta)
    if out_dir is not None:
        write_dataset(ds, out_dir)
    return ds


def write_dataset(ds, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "meta.json").write_text(json.dumps(ds.meta, indent=1, sort_keys=True) + "\n")
    R, O = ds.inputs.shape[1], ds.targets.shape[1]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"xi_{a + 1}" for a in range(R)] + [f"y_{b + 1}" for b in range(O)])
    for x, y in zip(ds.inputs, ds.targets):
        w.writerow([fmt(v) for v in x] + [fmt(v) for v in y])
    (out / "data.csv").write_text(buf.getvalue())


def read_dataset(path):
    path = Path(path)
    meta = json.loads((path / "meta.json").read_text())
    R, O = meta["R"], meta["O"]
    with open(path / "data.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if len(header) != R + O:
        raise LayoutMismatch(f"data.csv has {len(header)} columns, meta says R + O = {R + O}")
    data = np.array([[float(v) for v in row] for row in body]).reshape(len(body), R + O)
    return Dataset(data[:, :R], data[:, R:], meta)


# -- evaluation --------------------------------------------------------------

RECORD_FIELDS = [
    "sample",
    "iterations_true",
    "iterations_pred",
    "lambda_min_true",
    "lambda_min_pred",
    "lambda_max_true",
    "lambda_max_pred",
    "error_true",
    "error_pred",
    "converged_true",
    "converged_pred",
    "fallback_edges",
]


@dataclass
class EvaluationRecord:
    sample: int
    iterations_true: int
    iterations_pred: int
    lambda_min_true: float
    lambda_min_pred: float
    lambda_max_true: float
    lambda_max_pred: float
    error_true: float
    error_pred: float
    converged_true: bool
    converged_pred: bool
    fallback_edges: int

    def row(self):
        return [getattr(self, f) for f in RECORD_FIELDS]


def evaluate_sample(exp, xi, y_pred, sample=0):
    """True vs surrogate-built preconditioner for one KL sample.

    Returns ``(record, y_true)``.  Both constraint sets go through the same
    vector-to-constraint path, so identical eigenvector stacks give identical
    preconditioners.
    """
    cfg = exp.config
    prob = exp.problem(xi)
    true_cs = exp.true_constraints(prob)
    y_true = true_cs.target()
    u_ref = reference_solution(exp.grid, exp.field(xi), cfg.source)
    results = []
    fallback = 0
    for y in (y_true, y_pred):
        cs, dropped = constraints_from_vectors(prob.subs, prob.partition, prob.classes, exp.split_target(y))
        fallback = len(dropped)
        pre = prob.preconditioner(cs.constraint_blocks())
        u, rep = prob.solve(pre, cfg.pcg_tol, cfg.pcg_max_iter)
        results.append((rep, relative_error(u, u_ref)))
    (rt, et), (rp, ep) = results
    rec = EvaluationRecord(
        sample, rt.iterations, rp.iterations,
        rt.lambda_min, rp.lambda_min, rt.lambda_max, rp.lambda_max,
        et, ep, rt.converged, rp.converged, fallback,
    )
    return rec, y_true


def evaluate_surrogate(config, predict, dataset, layout_hash=None, experiment=None):
    """Evaluate a predictor ``xi -> target stack`` over a test set.

    Returns ``(records, summary)``.
    """
    exp = experiment or Experiment(config)
    want = exp.layout_hash()
    for name, h in (("model", layout_hash), ("dataset", dataset.meta.get("layout_hash"))):
        if h is not None and h != want:
            raise LayoutMismatch(f"{name} layout hash {h} does not match config layout {want}")
    records, Y_true, Y_pred = [], [], []
    for i, xi in enumerate(dataset.inputs):
        y_pred = np.asarray(predict(xi), dtype=float).ravel()
        rec, y_true = evaluate_sample(exp, xi, y_pred, i)
        if rec.fallback_edges:
            log.warning("sample %d: %d edges fell back to vertex-only constraints", i, rec.fallback_edges)
        records.append(rec)
        Y_true.append(y_true)
        Y_pred.append(y_pred)
    summary = summarize(records)
    summary["test_nrmse"] = nrmse(np.array(Y_true), np.array(Y_pred)) if records else float("nan")
    summary["config_hash"] = config.hash()
    summary["layout_hash"] = want
    return records, summary


def summarize(records):
    out = {"samples": len(records)}
    if not records:
        return out
    for q in ("iterations", "lambda_min", "lambda_max"):
        t = [getattr(r, f"{q}_true") for r in records]
        p = [getattr(r, f"{q}_pred") for r in records]
        out[q] = {
            "smape": smape(t, p),
            "linf": linf(t, p),
            "mean_true": float(np.mean(t)),
            "mean_pred": float(np.mean(p)),
        }
    out["max_error_true"] = float(max(r.error_true for r in records))
    out["max_error_pred"] = float(max(r.error_pred for r in records))
    out["all_converged"] = bool(all(r.converged_true and r.converged_pred for r in records))
    out["fallback_edges"] = int(sum(r.fallback_edges for r in records))
    return out


# -- reports -----------------------------------------------------------------


def _histogram(values):
    edges = np.histogram_bin_edges(values, bins="fd")
    counts, _ = np.histogram(values, bins=edges)
    return edges, counts


def _write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    Path(path).write_text(buf.getvalue())


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return fmt(v)


def emit_report(records, path, summary=None):
    """Write ``summary.json``, ``records.csv`` and ``hist_*.csv`` into `path`."""
    if not records:
        raise ValueError("no records to report")
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    summary = dict(summary or summarize(records))
    _write_csv(out / "records.csv", RECORD_FIELDS, [[_cell(v) for v in r.row()] for r in records])
    bins = {}
    for q in ("iterations", "lambda_min", "lambda_max"):
        t = np.array([getattr(r, f"{q}_true") for r in records], dtype=float)
        p = np.array([getattr(r, f"{q}_pred") for r in records], dtype=float)
        edges = np.histogram_bin_edges(np.concatenate([t, p]), bins="fd")
        ct, _ = np.histogram(t, bins=edges)
        cp, _ = np.histogram(p, bins=edges)
        _write_csv(
            out / f"hist_{q}.csv",
            ["bin_left", "bin_right", "count_true", "count_pred"],
            [[fmt(edges[a]), fmt(edges[a + 1]), int(ct[a]), int(cp[a])] for a in range(ct.size)],
        )
        d_edges, cd = _histogram(p - t)
        _write_csv(
            out / f"hist_{q}_diff.csv",
            ["bin_left", "bin_right", "count"],
            [[fmt(d_edges[a]), fmt(d_edges[a + 1]), int(cd[a])] for a in range(cd.size)],
        )
        bins[q] = {"width": float(edges[1] - edges[0]), "diff_width": float(d_edges[1] - d_edges[0])}
    summary["histogram_bins"] = {"rule": "freedman-diaconis", **bins}
    (out / "summary.json").write_text(json.dumps(_jsonable(summary), indent=1, sort_keys=True) + "\n")
    return summary


def read_records(path):
    recs = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            recs.append(
                EvaluationRecord(
                    int(row["sample"]), int(row["iterations_true"]), int(row["iterations_pred"]),
                    float(row["lambda_min_true"]), float(row["lambda_min_pred"]),
                    float(row["lambda_max_true"]), float(row["lambda_max_pred"]),
                    float(row["error_true"]), float(row["error_pred"]),
                    row["converged_true"] == "true", row["converged_pred"] == "true",
                    int(row["fallback_edges"]),
                )
            )
    return recs


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, np.generic):
        return obj.item()
    return obj

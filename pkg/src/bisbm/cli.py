"""Experiment driver: generate instances, run partitioners, sweep densities,
run probes, and emit CSV/JSON artifacts.

Every run is described by a flat key-value manifest (JSON-compatible). The
manifest plus the seed determine every output byte: derived seeds are
hashed from (seed, role, index), rows are written in a fixed order, and
each result file starts with a `# manifest <sha256>` comment naming the
manifest that produced it. `--jobs` parallelizes sweep cells without
changing any output.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import analysis, partition, seeding, treesim
from .errors import BisbmError, ConvergenceError, InvalidParameterError, NoSignalError
from .model import (
    HashLabeling,
    Labeling,
    ModelParams,
    gen_bipartite_sbm,
    gen_labeling,
    load_graph,
    load_labeling,
    save_graph,
    save_labeling,
)

KINDS = ("generate", "partition", "sweep", "localize", "treesim", "probe")
ALGORITHMS = ("svd", "dd", "reduction")
_SCALARS = (bool, int, float, str)
_REQUIRED = object()


def threshold_value(name: str, n1: int, n2: int, delta: float) -> float:
    """Named density thresholds; grids are expressed as multiples of one."""
    if name == "detection":
        if delta == 1.0:
            raise InvalidParameterError("detection threshold undefined at delta = 1")
        return (delta - 1.0) ** -2 / np.sqrt(n1 * n2)
    if name == "dd":
        return float(np.log(n1) / np.sqrt(n1 * n2))
    if name == "svd":
        return float(n1 ** (-2.0 / 3.0) * n2 ** (-1.0 / 3.0) * np.log(n1))
    raise InvalidParameterError(
        f"unknown threshold {name!r}; expected detection, dd, or svd"
    )


@dataclasses.dataclass(frozen=True)
class RunManifest:
    """Flat description of one experiment run.

    kind, seed, trials, and out are first-class; everything else lives in
    params as flat scalars. The canonical JSON form (sorted keys, compact
    separators) round-trips losslessly and is what gets hashed.
    """

    kind: str
    seed: int
    trials: int
    out: str
    params: Dict[str, object]

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidParameterError(f"unknown kind {self.kind!r}")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise InvalidParameterError("seed must be an integer")
        if not isinstance(self.trials, int) or self.trials < 1:
            raise InvalidParameterError("trials must be an integer >= 1")
        for key, value in self.params.items():
            if not isinstance(key, str):
                raise InvalidParameterError("manifest keys must be strings")
            if key in ("kind", "seed", "trials", "out"):
                raise InvalidParameterError(f"reserved manifest key {key!r}")
            if not isinstance(value, _SCALARS):
                raise InvalidParameterError(
                    f"manifest value for {key!r} must be a flat scalar"
                )

    def flat(self) -> Dict[str, object]:
        return {
            "kind": self.kind,
            "seed": self.seed,
            "trials": self.trials,
            "out": self.out,
            **self.params,
        }

    def to_json(self) -> str:
        return json.dumps(self.flat(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_mapping(cls, mapping: Dict[str, object]) -> "RunManifest":
        data = dict(mapping)
        kind = data.pop("kind", None)
        if kind is None:
            raise InvalidParameterError("manifest needs a kind")
        seed = data.pop("seed", 0)
        trials = data.pop("trials", 1)
        out = data.pop("out", "bisbm-out")
        return cls(kind=str(kind), seed=seed, trials=trials, out=str(out), params=data)

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        data = json.loads(text)
        if not isinstance(data, dict):
            raise InvalidParameterError("manifest must be a flat JSON object")
        return cls.from_mapping(data)

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()


def _get(m: RunManifest, key: str, default=_REQUIRED, cast=None):
    if key in m.params:
        value = m.params[key]
    elif default is _REQUIRED:
        raise InvalidParameterError(f"manifest key {key!r} required for {m.kind}")
    else:
        value = default
    if cast is not None and value is not None:
        try:
            value = cast(value)
        except (TypeError, ValueError) as exc:
            raise InvalidParameterError(f"manifest key {key!r}: {exc}") from exc
    return value


def _model_shape(m: RunManifest) -> Tuple[int, int, float]:
    return (
        _get(m, "n1", cast=int),
        _get(m, "n2", cast=int),
        _get(m, "delta", cast=float),
    )


def resolve_density(m: RunManifest, n1: int, n2: int, delta: float):
    """p from the manifest: either `p` directly, or `p_mult` times a named
    `threshold`. Returns (p, p_mult, threshold_name)."""
    has_p = "p" in m.params
    has_mult = "p_mult" in m.params or "threshold" in m.params
    if has_p and has_mult:
        raise InvalidParameterError("give either p or p_mult+threshold, not both")
    if has_p:
        return _get(m, "p", cast=float), "", ""
    name = _get(m, "threshold", cast=str)
    mult = _get(m, "p_mult", cast=float)
    return mult * threshold_value(name, n1, n2, delta), mult, name


def instance_for_trial(m: RunManifest, p: float, index: int):
    """The graph and labelings of trial `index`; pure function of the
    manifest, p, and index, so any cell can be reproduced in isolation."""
    n1, n2, delta = _model_shape(m)
    balanced = bool(_get(m, "balanced", False))
    tau_mode = _get(m, "tau", "explicit", cast=str)
    base = seeding.mix_seed(m.seed, f"{m.kind}-instance", index)
    sigma = gen_labeling(n1, seed=seeding.mix_seed(base, "sigma"), balanced=balanced)
    if tau_mode == "hash":
        tau = HashLabeling(n2, seed=seeding.mix_seed(base, "tau"))
    elif tau_mode == "explicit":
        tau = gen_labeling(n2, seed=seeding.mix_seed(base, "tau"), balanced=balanced)
    else:
        raise InvalidParameterError(f"tau must be explicit or hash, got {tau_mode!r}")
    g = gen_bipartite_sbm(
        ModelParams(n1, n2, p, delta), sigma, tau, seed=seeding.mix_seed(base, "graph")
    )
    return g, sigma, tau


def _run_algorithm(name: str, g, sigma, m: RunManifest, solver_seed: int):
    tol = _get(m, "tol", 1e-8, cast=float)
    max_iter = _get(m, "max_iter", 10_000, cast=int)
    margin = _get(m, "detect_margin", 0.05, cast=float)
    if name == "svd":
        return partition.svd_partition(
            g, sigma=sigma, tol=tol, max_iter=max_iter, seed=solver_seed, detect_margin=margin
        )
    if name == "dd":
        return partition.dd_svd_partition(
            g, sigma=sigma, tol=tol, max_iter=max_iter, seed=solver_seed, detect_margin=margin
        )
    if name == "reduction":
        dp = partition.DetectionParams(
            epsilon=_get(m, "epsilon", 1.0, cast=float),
            delta_hat=_get(m, "delta_hat", g.params.delta, cast=float),
            subsample_rate_override=_get(m, "subsample_rate_override", None, cast=float),
        )
        return partition.sbm_reduction_detect(
            g,
            dp,
            sigma=sigma,
            tol=tol,
            max_iter=max_iter,
            seed=solver_seed,
            detect_margin=margin,
            with_replacement=bool(_get(m, "with_replacement", False)),
        )
    raise InvalidParameterError(f"unknown algorithm {name!r}")


def _pmap(fn, payloads, jobs: int) -> list:
    """map preserving payload order, optionally across worker processes."""
    if jobs > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, payloads))
    return [fn(payload) for payload in payloads]


def _fmt(value) -> object:
    if value is None:
        return ""
    if isinstance(value, bool):
        return int(value)
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    return value


def _write_csv(path: Path, fieldnames: List[str], rows: List[dict], digest: str) -> Path:
    with open(path, "w", newline="") as fh:
        fh.write(f"# manifest {digest}\n")
        writer = csv.DictWriter(fh, fieldnames=fieldnames, restval="", lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(v) for k, v in row.items()})
    return path


def _fields(rows: List[dict], leading: List[str]) -> List[str]:
    extras = sorted({k for row in rows for k in row} - set(leading))
    return list(leading) + extras


def _write_manifest_json(outdir: Path, m: RunManifest, outputs: List[Path]) -> Path:
    path = outdir / "manifest.json"
    doc = {
        "hash": m.digest(),
        "manifest": m.flat(),
        "outputs": sorted(p.name for p in outputs),
    }
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def run_generate(m: RunManifest, jobs: int = 1) -> List[Path]:
    outdir = Path(m.out)
    n1, n2, delta = _model_shape(m)
    p, _, _ = resolve_density(m, n1, n2, delta)
    g, sigma, tau = instance_for_trial(m, p, 0)
    files = []
    save_graph(g, outdir / "graph.txt")
    files.append(outdir / "graph.txt")
    save_labeling(sigma, outdir / "sigma.txt")
    files.append(outdir / "sigma.txt")
    if isinstance(tau, Labeling):
        save_labeling(tau, outdir / "tau.txt")
        files.append(outdir / "tau.txt")
    files.append(_write_manifest_json(outdir, m, files))
    return files


def _partition_trial(payload):
    flat, trial = payload
    m = RunManifest.from_mapping(dict(flat))
    algorithm = _get(m, "algorithm", cast=str)
    if algorithm not in ALGORITHMS:
        raise InvalidParameterError(f"unknown algorithm {algorithm!r}")
    if "graph" in m.params:
        g = load_graph(_get(m, "graph", cast=str))
        sigma = (
            load_labeling(_get(m, "sigma", cast=str)) if "sigma" in m.params else None
        )
        p = g.params.p
    else:
        n1, n2, delta = _model_shape(m)
        p, _, _ = resolve_density(m, n1, n2, delta)
        g, sigma, _ = instance_for_trial(m, p, trial)
    outcome = _run_algorithm(
        algorithm, g, sigma, m, solver_seed=seeding.mix_seed(m.seed, "solve", trial)
    )
    labels_name = f"labels_t{trial}.txt"
    row = {
        "p": p,
        "algorithm": algorithm,
        "trial": trial,
        **outcome.to_record(labels_file=labels_name),
    }
    return row, outcome.labels


def run_partition(m: RunManifest, jobs: int = 1) -> List[Path]:
    outdir = Path(m.out)
    payloads = [(m.flat(), trial) for trial in range(m.trials)]
    results = _pmap(_partition_trial, payloads, jobs)
    rows = []
    files = []
    for row, labels in results:
        path = outdir / row["labels_file"]
        save_labeling(labels, path)
        files.append(path)
        rows.append(row)
    leading = ["p", "algorithm", "trial", "overlap", "detected", "labels_file"]
    csv_path = _write_csv(outdir / "partition.csv", _fields(rows, leading), rows, m.digest())
    files.insert(0, csv_path)
    files.append(_write_manifest_json(outdir, m, files))
    return files


def _sweep_plan(m: RunManifest):
    algorithms = [a.strip() for a in _get(m, "algorithms", "svd", cast=str).split(",") if a.strip()]
    if not algorithms:
        raise InvalidParameterError("no algorithms given")
    for name in algorithms:
        if name not in ALGORITHMS:
            raise InvalidParameterError(f"unknown algorithm {name!r}")
    grid_text = str(_get(m, "grid"))
    mults = [float(tok) for tok in grid_text.split(",") if tok.strip()]
    if not mults:
        raise InvalidParameterError("empty p-grid")
    name = _get(m, "threshold", cast=str)
    n1, n2, delta = _model_shape(m)
    thr = threshold_value(name, n1, n2, delta)
    return algorithms, name, mults, thr


def _sweep_cell(payload) -> List[dict]:
    flat, gi, mult, trial = payload
    m = RunManifest.from_mapping(dict(flat))
    algorithms, name, _, thr = _sweep_plan(m)
    p = mult * thr
    index = gi * m.trials + trial
    g, sigma, _ = instance_for_trial(m, p, index)
    solver_seed = seeding.mix_seed(m.seed, "sweep-solve", index)
    rows = []
    for alg in algorithms:
        try:
            rec = _run_algorithm(alg, g, sigma, m, solver_seed=solver_seed).to_record()
        except (ConvergenceError, NoSignalError) as exc:
            rec = {
                "overlap": None,
                "detected": False,
                "labels_file": None,
                "diagnostics.error": type(exc).__name__,
            }
        rows.append(
            {
                "grid_index": gi,
                "p": p,
                "p_mult": mult,
                "threshold": name,
                "algorithm": alg,
                "trial": trial,
                **rec,
            }
        )
    return rows


def run_sweep(m: RunManifest, jobs: int = 1) -> List[Path]:
    outdir = Path(m.out)
    algorithms, name, mults, thr = _sweep_plan(m)
    payloads = [
        (m.flat(), gi, mult, trial)
        for gi, mult in enumerate(mults)
        for trial in range(m.trials)
    ]
    cell_rows = _pmap(_sweep_cell, payloads, jobs)
    rows = [row for cell in cell_rows for row in cell]
    alg_order = {a: i for i, a in enumerate(algorithms)}
    rows.sort(key=lambda r: (r["grid_index"], alg_order[r["algorithm"]], r["trial"]))

    summary = []
    for gi, mult in enumerate(mults):
        for alg in algorithms:
            cell = [
                r for r in rows if r["grid_index"] == gi and r["algorithm"] == alg
            ]
            overlaps = np.array(
                [r["overlap"] for r in cell if r["overlap"] is not None],
                dtype=np.float64,
            )
            mean = float(overlaps.mean()) if overlaps.size else None
            stderr = (
                float(overlaps.std(ddof=1) / np.sqrt(overlaps.size))
                if overlaps.size > 1
                else (0.0 if overlaps.size else None)
            )
            summary.append(
                {
                    "p": mult * thr,
                    "p_mult": mult,
                    "threshold": name,
                    "algorithm": alg,
                    "trials": len(cell),
                    "overlap_mean": mean,
                    "overlap_stderr": stderr,
                    "detected_rate": float(np.mean([r["detected"] for r in cell])),
                }
            )
    for row in rows:
        del row["grid_index"]
    leading = ["p", "p_mult", "threshold", "algorithm", "trial", "overlap", "detected", "labels_file"]
    files = [
        _write_csv(outdir / "sweep.csv", _fields(rows, leading), rows, m.digest()),
        _write_csv(
            outdir / "summary.csv",
            [
                "p",
                "p_mult",
                "threshold",
                "algorithm",
                "trials",
                "overlap_mean",
                "overlap_stderr",
                "detected_rate",
            ],
            summary,
            m.digest(),
        ),
    ]
    files.append(_write_manifest_json(outdir, m, files))
    return files


def _localize_trial(payload):
    flat, trial = payload
    m = RunManifest.from_mapping(dict(flat))
    n1, n2, delta = _model_shape(m)
    p, _, _ = resolve_density(m, n1, n2, delta)
    t = _get(m, "t", 3, cast=int)
    g, sigma, _ = instance_for_trial(m, p, trial)
    rep = analysis.localization_report(
        g,
        sigma,
        t=t,
        r=_get(m, "r", None, cast=int),
        tol=_get(m, "tol", 1e-8, cast=float),
        max_iter=_get(m, "max_iter", 10_000, cast=int),
        seed=seeding.mix_seed(m.seed, "localize-solve", trial),
    )
    return [
        {
            "trial": trial,
            "vector": i + 1,
            "r": rep.r,
            "mass_fraction": float(rep.mass_fractions[i]),
            "sigma_correlation": float(rep.sigma_correlations[i]),
        }
        for i in range(t)
    ]


def run_localize(m: RunManifest, jobs: int = 1) -> List[Path]:
    outdir = Path(m.out)
    payloads = [(m.flat(), trial) for trial in range(m.trials)]
    rows = [row for chunk in _pmap(_localize_trial, payloads, jobs) for row in chunk]
    fields = ["trial", "vector", "r", "mass_fraction", "sigma_correlation"]
    files = [_write_csv(outdir / "localize.csv", fields, rows, m.digest())]
    files.append(_write_manifest_json(outdir, m, files))
    return files


def run_treesim(m: RunManifest, jobs: int = 1) -> List[Path]:
    outdir = Path(m.out)
    d_text = str(_get(m, "d"))
    ds = [float(tok) for tok in d_text.split(",") if tok.strip()]
    if not ds:
        raise InvalidParameterError("empty d list")
    delta = _get(m, "delta", cast=float)
    depth = _get(m, "R", cast=int)
    rows = []
    for i, d in enumerate(ds):
        tp = treesim.TreeParams(d=d, delta=delta, R=depth, trials=m.trials)
        est = treesim.reconstruction_variance(tp, seed=seeding.mix_seed(m.seed, "treesim", i))
        rows.append(est.to_record())
    fields = ["d", "delta", "R", "trials", "var_mean", "var_stderr"]
    files = [_write_csv(outdir / "treesim.csv", fields, rows, m.digest())]
    files.append(_write_manifest_json(outdir, m, files))
    return files


def run_probe(m: RunManifest, jobs: int = 1) -> List[Path]:
    outdir = Path(m.out)
    which = _get(m, "probe", cast=str)
    n1, n2, delta = _model_shape(m)
    p, _, _ = resolve_density(m, n1, n2, delta)
    rows = []
    if which == "noise":
        res = analysis.noise_norm_probe(
            ModelParams(n1, n2, p, delta),
            trials=m.trials,
            seed=m.seed,
            tol=_get(m, "tol", 1e-6, cast=float),
            max_iter=_get(m, "max_iter", 200, cast=int),
            balanced=bool(_get(m, "balanced", False)),
        )
        for trial in range(m.trials):
            rows.append(
                {
                    "trial": trial,
                    "b_dev_norm": float(res.b_dev_norms[trial]),
                    "d_dev_norm": float(res.d_dev_norms[trial]),
                }
            )
        fields = ["trial", "b_dev_norm", "d_dev_norm"]
    elif which == "degree":
        for trial in range(m.trials):
            g, _, _ = instance_for_trial(m, p, trial)
            rec = analysis.degree_stats(g, c=_get(m, "c", 1.0, cast=float)).to_record()
            rows.append({"trial": trial, **rec})
        fields = ["trial"] + list(analysis.DegreeStats.__dataclass_fields__)
    else:
        raise InvalidParameterError(f"unknown probe {which!r}; expected noise or degree")
    files = [_write_csv(outdir / "probe.csv", fields, rows, m.digest())]
    files.append(_write_manifest_json(outdir, m, files))
    return files


RUNNERS = {
    "generate": run_generate,
    "partition": run_partition,
    "sweep": run_sweep,
    "localize": run_localize,
    "treesim": run_treesim,
    "probe": run_probe,
}

_EPILOGS = {
    "generate": """\
manifest keys: n1, n2, delta, p (or p_mult + threshold), balanced, tau (explicit|hash)
writes: graph.txt, sigma.txt, tau.txt (explicit tau only), manifest.json""",
    "partition": """\
manifest keys: algorithm (svd|dd|reduction); either graph (+ optional sigma) file paths
  or n1, n2, delta, p/p_mult+threshold, balanced, tau; solver knobs tol, max_iter,
  detect_margin; reduction knobs epsilon, delta_hat, subsample_rate_override,
  with_replacement
partition.csv columns: p, algorithm, trial, overlap, detected, labels_file,
  diagnostics.* (flattened solver scalars)""",
    "sweep": """\
manifest keys: n1, n2, delta, threshold (detection|dd|svd), grid (comma multipliers),
  algorithms (comma of svd|dd|reduction), plus the partition solver knobs
sweep.csv columns: p, p_mult, threshold, algorithm, trial, overlap, detected,
  labels_file, diagnostics.*
summary.csv columns: p, p_mult, threshold, algorithm, trials, overlap_mean,
  overlap_stderr, detected_rate
failures are data: a cell where a solver does not converge or finds no usable
  spectrum becomes a row with empty overlap, detected=0, and diagnostics.error
  naming the exception; the exit code stays 0""",
    "localize": """\
manifest keys: n1, n2, delta, p/p_mult+threshold, t, r (optional), tau, balanced,
  tol, max_iter
localize.csv columns: trial, vector, r, mass_fraction, sigma_correlation""",
    "treesim": """\
manifest keys: d (value or comma list), delta, R
treesim.csv columns: d, delta, R, trials, var_mean, var_stderr""",
    "probe": """\
manifest keys: probe (noise|degree), n1, n2, delta, p/p_mult+threshold; noise knobs
  tol, max_iter, balanced; degree knob c
probe.csv columns (noise): trial, b_dev_norm, d_dev_norm
probe.csv columns (degree): trial, max_degree, expected_degree, c, threshold_log,
  threshold_loglog, count_above_log, count_above_loglog""",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bisbm",
        description="Bipartite block model experiment driver.",
    )
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        p = sub.add_parser(
            kind,
            epilog=_EPILOGS[kind],
            formatter_class=argparse.RawDescriptionHelpFormatter,
            help=f"run a {kind} experiment",
        )
        p.add_argument("--manifest", help="flat JSON manifest file")
        p.add_argument("--seed", type=int, help="master seed (overrides manifest)")
        p.add_argument("--trials", type=int, help="trial count (overrides manifest)")
        p.add_argument("--out", help="output directory (overrides manifest)")
        p.add_argument(
            "--jobs",
            type=int,
            default=1,
            help="worker processes for independent trials/cells; "
            "outputs are identical for any value",
        )
        p.add_argument(
            "--set",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override or add a manifest key (value parsed as JSON, else string)",
        )
    return parser


def _manifest_from_args(args) -> RunManifest:
    data: Dict[str, object] = {}
    if args.manifest:
        loaded = json.loads(Path(args.manifest).read_text())
        if not isinstance(loaded, dict):
            raise InvalidParameterError("manifest must be a flat JSON object")
        data.update(loaded)
        if "kind" in data and data["kind"] != args.kind:
            raise InvalidParameterError(
                f"manifest kind {data['kind']!r} does not match subcommand {args.kind!r}"
            )
    for item in args.set:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise InvalidParameterError(f"--set expects KEY=VALUE, got {item!r}")
        try:
            data[key] = json.loads(raw)
        except json.JSONDecodeError:
            data[key] = raw
    data["kind"] = args.kind
    if args.seed is not None:
        data["seed"] = args.seed
    if args.trials is not None:
        data["trials"] = args.trials
    if args.out is not None:
        data["out"] = args.out
    return RunManifest.from_mapping(data)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        m = _manifest_from_args(args)
        outdir = Path(m.out)
        outdir.mkdir(parents=True, exist_ok=True)
        files = RUNNERS[m.kind](m, jobs=args.jobs)
    except BisbmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"manifest {m.digest()}")
    for path in files:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())

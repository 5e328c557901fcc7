"""Command-line front end.

Subcommands: ``reduce`` (embed a feature file), ``annotate`` (run the
KNN annotation grid and emit a results CSV), ``bench`` (time the four
reducers), ``synth`` (generate a benchmark manifold, embed it, score it),
and ``features`` (extract descriptors from a directory of PPM images).

Every emitted file starts with '#'-prefixed header lines recording the
tool version, the fully resolved configuration, and the seed, so reruns
with identical flags are byte-identical. A plain-text config file
("key = value" lines) can pre-set any flag; explicit flags win.
"""

import argparse
import os
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, annotation, features, synthetic
from .annotation import ReducerSpec, run_reducer
from .baselines import DEFAULT_K_NN, DEFAULT_LLE_REG

_REAL_FMT = ".17g"

METHOD_NAMES = {"dm": "DM", "pca": "PCA", "lle": "LLE", "lem": "LEM"}

SYNTH_NAMES = ("swiss_roll", "punctured_sphere")


@dataclass(frozen=True)
class ExperimentGrid:
    """The sweep an ``annotate`` run covers: methods x features x dims x ks."""

    methods: tuple
    dims: tuple
    ks: tuple
    feature_kinds: tuple
    sigma: float = 10.0
    t: int = 1
    k_nn: int = DEFAULT_K_NN
    lle_reg: float = DEFAULT_LLE_REG
    lem_sigma: float | None = None
    seed: int = 0
    prune_min: int = 5
    oos: str = "transductive"

    def __post_init__(self):
        if not self.methods or not self.dims or not self.ks or not self.feature_kinds:
            raise ValueError("methods, dims, ks, and feature kinds must be non-empty")
        for m in self.methods:
            if m not in METHOD_NAMES:
                raise ValueError(f"unknown method {m!r}")
        for d in self.dims:
            if d < 1:
                raise ValueError(f"target dimensions must be >= 1, got {d}")
        for k in self.ks:
            if k < 1:
                raise ValueError(f"neighbour counts must be >= 1, got {k}")

    def cells(self):
        """All (method, feature, d, k) cells in deterministic sorted order."""
        return sorted(
            (METHOD_NAMES[m], f, d, k)
            for m in self.methods
            for f in self.feature_kinds
            for d in self.dims
            for k in self.ks
        )


@dataclass(frozen=True)
class BenchRecord:
    """One timing measurement: reducer wall-clock on one feature matrix."""

    method: str
    feature: str
    d: int
    seconds: float
    n: int
    machine: str


# ---------------------------------------------------------------------------
# Formatting, config files, output handling


def format_value(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), _REAL_FMT)
    return str(value)


def parse_cell(text):
    """Parse a CSV cell: int if possible, then float, else the raw string."""
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def read_config_file(path):
    """Parse "key = value" lines; '#' comments and blank lines are skipped."""
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, _, raw = stripped.partition("=")
            values[key.strip()] = raw.strip()
    return values


def header_lines(command, config):
    lines = [f"# manifold-annot {__version__}", f"# command = {command}"]
    for key in sorted(config):
        lines.append(f"# {key} = {format_value(config[key])}")
    return lines


def write_text(path, text):
    """Write atomically: no partial file survives a failure."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    try:
        tmp.write_text(text, encoding="utf-8")
        os.replace(tmp, path)
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise


def write_results_csv(path, command, config, columns, rows):
    lines = header_lines(command, config)
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(format_value(v) for v in row))
    write_text(path, "\n".join(lines) + "\n")


def read_results_csv(path):
    """Read a results CSV back into (header_lines, columns, typed rows)."""
    headers, columns, rows = [], None, []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                headers.append(line)
            elif columns is None:
                columns = line.split(",")
            elif line:
                rows.append([parse_cell(c) for c in line.split(",")])
    if columns is None:
        raise ValueError(f"{path}: no column header found")
    return headers, columns, rows


def reemit_results_csv(path, out_path):
    """Round-trip a results CSV; the output is byte-identical to the input."""
    headers, columns, rows = read_results_csv(path)
    lines = list(headers)
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(format_value(v) for v in row))
    write_text(out_path, "\n".join(lines) + "\n")


def max_threads():
    raw = os.environ.get("MANIFOLD_THREADS")
    if raw is None:
        return min(4, os.cpu_count() or 1)
    value = int(raw)
    if value < 1:
        raise ValueError(f"MANIFOLD_THREADS must be >= 1, got {raw}")
    return value


def _parallel_map(fn, items):
    # Order-preserving map; the worker count never changes the results.
    items = list(items)
    workers = min(max_threads(), max(len(items), 1))
    if workers == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _resolve(args, defaults):
    """defaults < config file < explicit flags, with type coercion."""
    resolved = dict(defaults)
    if getattr(args, "config", None):
        file_values = read_config_file(args.config)
        for key, raw in file_values.items():
            if key not in resolved:
                raise ValueError(f"unknown config key {key!r} in {args.config}")
            template = defaults[key]
            if isinstance(template, bool):
                resolved[key] = raw.lower() in ("1", "true", "yes")
            elif isinstance(template, int):
                resolved[key] = int(raw)
            elif isinstance(template, float) or template is None:
                resolved[key] = float(raw)
            else:
                resolved[key] = raw
    for key in defaults:
        flag = getattr(args, key, None)
        if flag is not None:
            resolved[key] = flag
    return resolved


def _reducer_spec(method, resolved, d):
    return ReducerSpec(
        method=method,
        d=d,
        sigma=resolved["sigma"],
        t=resolved["t"],
        k_nn=resolved["knn"],
        lle_reg=resolved["lle_reg"],
        lem_sigma=resolved["lem_sigma"],
        oos=resolved.get("oos", "transductive"),
    )


def _parse_feature_args(pairs):
    """--features [name=]path, repeatable; name defaults to the file stem."""
    named = []
    for raw in pairs:
        if "=" in raw:
            name, _, path = raw.partition("=")
        else:
            path = raw
            name = Path(raw).stem
        named.append((name, path))
    if len({name for name, _ in named}) != len(named):
        raise ValueError("duplicate feature names in --features")
    return named


# ---------------------------------------------------------------------------
# Subcommands


def cmd_reduce(args):
    defaults = {
        "method": None,
        "dim": 2,
        "sigma": 10.0,
        "t": 1,
        "knn": DEFAULT_K_NN,
        "lle_reg": DEFAULT_LLE_REG,
        "lem_sigma": None,
        "seed": 0,
    }
    resolved = _resolve(args, defaults)
    if resolved["method"] is None:
        raise ValueError("no method given (flag --method or config key 'method')")
    resolved["method"] = str(resolved["method"]).lower()
    if resolved["method"] not in METHOD_NAMES:
        raise ValueError(f"unknown method {resolved['method']!r}")
    ids, matrix = features.read_feature_file(args.input)
    spec = _reducer_spec(resolved["method"], resolved, resolved["dim"])
    emb = run_reducer(spec, matrix)
    config = dict(resolved)
    config["method"] = METHOD_NAMES[resolved["method"]]
    config["input"] = args.input
    config["n"] = len(ids)
    lines = header_lines("reduce", config)
    for i, image_id in enumerate(ids):
        coords = " ".join(format(v, _REAL_FMT) for v in emb.coords[i])
        lines.append(f"{image_id} {coords}")
    write_text(args.out, "\n".join(lines) + "\n")
    return 0


def _load_labeled(feature_pairs, labels_path, vocab_path):
    vocabulary = annotation.read_vocabulary_file(vocab_path)
    label_map = annotation.read_label_file(labels_path, len(vocabulary))
    datasets = {}
    for name, path in feature_pairs:
        ids, matrix = features.read_feature_file(path)
        datasets[name] = annotation.join_features_labels(ids, matrix, label_map, vocabulary)
    return datasets


def cmd_annotate(args):
    defaults = {
        "method": "dm,pca,lle,lem",
        "dim": "10,20,30,40,50",
        "k": "8",
        "sigma": 10.0,
        "t": 1,
        "knn": DEFAULT_K_NN,
        "lle_reg": DEFAULT_LLE_REG,
        "lem_sigma": None,
        "seed": 0,
        "prune_min": 5,
        "oos": "transductive",
    }
    resolved = _resolve(args, defaults)
    methods = tuple(m.strip().lower() for m in str(resolved["method"]).split(","))
    dims = tuple(int(v) for v in str(resolved["dim"]).split(","))
    ks = tuple(int(v) for v in str(resolved["k"]).split(","))
    feature_pairs = _parse_feature_args(args.features)
    grid = ExperimentGrid(
        methods=methods,
        dims=dims,
        ks=ks,
        feature_kinds=tuple(name for name, _ in feature_pairs),
        sigma=resolved["sigma"],
        t=resolved["t"],
        k_nn=resolved["knn"],
        lle_reg=resolved["lle_reg"],
        lem_sigma=resolved["lem_sigma"],
        seed=resolved["seed"],
        prune_min=resolved["prune_min"],
        oos=resolved["oos"],
    )
    datasets = _load_labeled(feature_pairs, args.labels, args.vocab)
    splits = {
        name: annotation.prune_and_split(ds, grid.prune_min, grid.seed)
        for name, ds in datasets.items()
    }

    # One reduction serves every k; parallelize over (method, feature, d).
    groups = sorted(
        {(method, feat, d) for method, feat, d, _ in grid.cells()}
    )

    def run_group(group):
        method, feat, d = group
        lower = {v: k for k, v in METHOD_NAMES.items()}[method]
        spec = _reducer_spec(lower, dict(resolved, oos=grid.oos), d)
        split = splits[feat]
        rows = []
        for k in grid.ks:
            report = annotation.evaluate_pipeline(split, spec, k)
            rows.append(
                [
                    method,
                    feat,
                    d,
                    k,
                    report.mean_ap,
                    report.precision_at_5,
                    report.recall_at_5,
                    report.n_train,
                    report.n_test,
                    report.n_scored,
                    grid.seed,
                ]
            )
        return rows

    rows = [row for group_rows in _parallel_map(run_group, groups) for row in group_rows]
    rows.sort(key=lambda r: (r[0], r[1], r[2], r[3]))
    config = dict(resolved)
    config["features"] = ",".join(f"{n}={p}" for n, p in feature_pairs)
    config["labels"] = args.labels
    config["vocab"] = args.vocab
    columns = [
        "method",
        "feature",
        "d",
        "k",
        "mean_ap",
        "precision_at_5",
        "recall_at_5",
        "n_train",
        "n_test",
        "n_scored",
        "seed",
    ]
    write_results_csv(args.out, "annotate", config, columns, rows)
    return 0


def cmd_bench(args):
    defaults = {
        "method": "pca,lle,lem,dm",
        "dim": 30,
        "sigma": 10.0,
        "t": 1,
        "knn": DEFAULT_K_NN,
        "lle_reg": DEFAULT_LLE_REG,
        "lem_sigma": None,
        "seed": 0,
    }
    resolved = _resolve(args, defaults)
    methods = [m.strip().lower() for m in str(resolved["method"]).split(",")]
    feature_pairs = _parse_feature_args(args.features)
    machine = platform.platform()
    records = []
    # Timing must not share the core with other cells; always sequential.
    for name, path in sorted(feature_pairs):
        ids, matrix = features.read_feature_file(path)
        for method in methods:
            spec = _reducer_spec(method, resolved, resolved["dim"])
            start = time.perf_counter()
            run_reducer(spec, matrix)
            elapsed = time.perf_counter() - start
            records.append(
                BenchRecord(
                    method=METHOD_NAMES[method],
                    feature=name,
                    d=resolved["dim"],
                    seconds=elapsed,
                    n=len(ids),
                    machine=machine,
                )
            )
    records.sort(key=lambda r: (r.method, r.feature))
    config = dict(resolved)
    config["features"] = ",".join(f"{n}={p}" for n, p in sorted(feature_pairs))
    columns = ["method", "feature", "d", "seconds", "n", "machine"]
    rows = [[r.method, r.feature, r.d, r.seconds, r.n, r.machine] for r in records]
    write_results_csv(args.out, "bench", config, columns, rows)
    return 0


def cmd_synth(args):
    defaults = {
        "method": "dm",
        "dim": 2,
        "sigma": 10.0,
        "t": 1,
        "knn": DEFAULT_K_NN,
        "lle_reg": DEFAULT_LLE_REG,
        "lem_sigma": None,
        "k": 10,
        "seed": 0,
        "n": 2000,
        "height_scale": 1.0,
    }
    resolved = _resolve(args, defaults)
    resolved["method"] = str(resolved["method"]).lower()
    if resolved["method"] not in METHOD_NAMES:
        raise ValueError(f"unknown method {resolved['method']!r}")
    if args.name == "swiss_roll":
        sample = synthetic.swiss_roll(resolved["n"], resolved["seed"])
    else:
        sample = synthetic.punctured_sphere(
            resolved["n"], resolved["height_scale"], resolved["seed"]
        )
    spec = _reducer_spec(resolved["method"], resolved, resolved["dim"])
    emb = run_reducer(spec, sample.points)
    quality = synthetic.embedding_quality(emb, sample.intrinsic, resolved["k"])

    config = dict(resolved)
    config["name"] = args.name
    config["method"] = METHOD_NAMES[resolved["method"]]
    sample_lines = header_lines("synth", config)
    sample_lines.append("x,y,z,intrinsic1,intrinsic2")
    for point, intr in zip(sample.points, sample.intrinsic):
        cells = list(point) + list(intr)
        sample_lines.append(",".join(format(v, _REAL_FMT) for v in cells))
    embed_lines = header_lines("synth", config)
    embed_lines.append(",".join(f"e{j + 1}" for j in range(emb.coords.shape[1])))
    for row in emb.coords:
        embed_lines.append(",".join(format(v, _REAL_FMT) for v in row))

    if args.out:
        write_text(f"{args.out}.sample.csv", "\n".join(sample_lines) + "\n")
        write_text(f"{args.out}.embedding.csv", "\n".join(embed_lines) + "\n")
    else:
        print("\n".join(sample_lines))
        print("\n".join(embed_lines))
    print(f"quality = {format(quality, _REAL_FMT)}")
    return 0


def cmd_features(args):
    defaults = {"kind": "edh73", "seed": 0}
    resolved = _resolve(args, defaults)
    kind = resolved["kind"]
    if kind not in features.EXTRACTORS:
        raise ValueError(
            f"unknown feature kind {kind!r}; expected one of {sorted(features.EXTRACTORS)}"
        )
    paths = sorted(Path(args.images).glob("*.ppm"))
    if not paths:
        raise ValueError(f"no .ppm images found in {args.images}")

    def one(path):
        img = features.read_ppm(path)
        vec = features.extract(img, kind)
        return features.format_feature_line(path.stem, vec.values)

    lines = header_lines("features", dict(resolved, images=str(args.images)))
    lines.extend(_parallel_map(one, paths))
    write_text(args.out, "\n".join(lines) + "\n")
    return 0


# ---------------------------------------------------------------------------
# Parser


def build_parser():
    parser = argparse.ArgumentParser(
        prog="manifold-annot",
        description="Manifold-learning dimensionality reduction and KNN image annotation.",
    )
    parser.add_argument("--version", action="version", version=f"manifold-annot {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, *, grid=False):
        p.add_argument("--config", help="plain-text 'key = value' config file")
        p.add_argument("--seed", type=int, help="random seed (default 0)")
        if grid:
            p.add_argument("--method", help="comma-separated: dm,pca,lle,lem")
            p.add_argument("--dim", help="comma-separated target dimensions")
        else:
            p.add_argument("--method", choices=sorted(METHOD_NAMES), help="reducer")
            p.add_argument("--dim", type=int, help="target dimension")
        p.add_argument("--sigma", type=float, help="Gaussian kernel width (DM)")
        p.add_argument("--t", type=int, help="diffusion time steps (DM)")
        p.add_argument("--knn", type=int, help="neighbourhood size (LLE/LEM)")

    p = sub.add_parser("reduce", help="embed a feature file")
    p.add_argument("input", help="feature file: '<id> <v1> ...' lines")
    add_common(p)
    p.add_argument("--out", required=True, help="output embedding file")
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("annotate", help="run the annotation grid, emit results CSV")
    p.add_argument(
        "--features",
        action="append",
        required=True,
        metavar="[NAME=]PATH",
        help="feature file (repeatable); NAME defaults to the file stem",
    )
    p.add_argument("--labels", required=True, help="label file")
    p.add_argument("--vocab", required=True, help="vocabulary file")
    add_common(p, grid=True)
    p.add_argument("--k", help="comma-separated annotator neighbour counts")
    p.add_argument("--prune-min", dest="prune_min", type=int, help="minimum labels per image")
    p.add_argument(
        "--oos",
        choices=("transductive", "nystrom"),
        help="fit on train+test jointly (default) or extend train-only fits",
    )
    p.add_argument("--out", required=True, help="output results CSV")
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("bench", help="time the reducers on feature files")
    p.add_argument("--features", action="append", required=True, metavar="[NAME=]PATH")
    add_common(p, grid=True)
    p.add_argument("--out", required=True, help="output timing CSV")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("synth", help="generate, embed, and score a benchmark manifold")
    p.add_argument("name", choices=SYNTH_NAMES, help="benchmark dataset")
    add_common(p)
    p.add_argument("--n", type=int, help="sample size (default 2000)")
    p.add_argument("--k", type=int, help="k_eval for the quality score (default 10)")
    p.add_argument("--out", help="output prefix for .sample.csv / .embedding.csv")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("features", help="extract descriptors from PPM images")
    p.add_argument("images", help="directory of .ppm files")
    p.add_argument("--kind", choices=sorted(features.EXTRACTORS), help="descriptor")
    p.add_argument("--config", help="plain-text 'key = value' config file")
    p.add_argument("--seed", type=int, help="echoed into the header (unused)")
    p.add_argument("--out", required=True, help="output feature file")
    p.set_defaults(func=cmd_features)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

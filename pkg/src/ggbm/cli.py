"""Command-line pipelines: generate, train, predict, evaluate, experiment, importance, hcp-prepare.

Every command reads a JSON config (``--config``), applies ``--set key=value``
overrides, validates against the bundled schema and writes its artifacts plus
``manifest.json`` into ``--out``. Exit codes: 0 ok, 1 invalid config or input,
2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
import time
import zlib
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import estimator, hcp
from .experiment import ExperimentConfig, default_train_config, run_experiment
from .hin import HinError, load_graph, save_graph
from .metrics import MetricError, roc_curve, roc_auc, pr_auc
from .paths import MetapathSchema, build_dataset
from .randgraph import GraphModelParams, ScenarioConfig, assign_features, generate, scenario_labels
from .trees import TrainConfig

log = logging.getLogger("ggbm")

COMMANDS = ("generate", "train", "predict", "evaluate", "experiment", "importance", "hcp-prepare")


class ConfigError(ValueError):
    pass


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------- config


def load_schema() -> dict:
    return json.loads(resources.files("ggbm").joinpath("config_schema.json").read_text())


def command_schema(command: str) -> dict:
    root = load_schema()
    return {"$schema": root["$schema"], "$defs": root["$defs"], **root["commands"][command]}


def validate_config(command: str, cfg: dict) -> None:
    v = jsonschema.Draft202012Validator(command_schema(command))
    errors = sorted(v.iter_errors(cfg), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        lines = []
        for e in errors:
            where = ".".join(str(p) for p in e.absolute_path) or "<root>"
            lines.append(f"config.{where}: {e.message}" if where != "<root>" else f"config: {e.message}")
        raise ConfigError("\n".join(lines))


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(cfg: dict, assignment: str) -> None:
    """``a.b.0.c=value``; value parsed as JSON when possible, else kept as a string."""
    key, sep, raw = assignment.partition("=")
    if not sep or not key:
        raise ConfigError(f"--set expects key=value, got {assignment!r}")
    parts = key.split(".")
    node = cfg
    for i, p in enumerate(parts[:-1]):
        if isinstance(node, list):
            node = node[int(p)]
        else:
            if node.get(p) is None:
                node[p] = {}
            node = node[p]
    last = parts[-1]
    if isinstance(node, list):
        node[int(last)] = _parse_value(raw)
    else:
        node[last] = _parse_value(raw)


def canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def stage_seed(seed: int, stage: str) -> int:
    """Independent 32-bit seed for one pipeline stage."""
    return int(np.random.SeedSequence([seed, zlib.crc32(stage.encode())]).generate_state(1)[0])


def sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


# --------------------------------------------------------------------------- artifacts


class Run:
    def __init__(self, command: str, config: dict, seed: int, out: Path, workers: int):
        self.command, self.config, self.seed, self.out, self.workers = command, config, seed, out, workers
        self.digest = hashlib.sha256(canonical({"command": command, "config": config, "seed": seed})
                                     .encode()).hexdigest()[:16]
        self.artifacts: list[Path] = []
        out.mkdir(parents=True, exist_ok=True)

    @property
    def stamp(self) -> dict:
        return {"config_digest": self.digest, "command": self.command}

    def json(self, name: str, obj: dict) -> Path:
        p = self.out / name
        p.write_text(json.dumps({**self.stamp, **obj}, indent=1) + "\n")
        self.artifacts.append(p)
        return p

    def csv(self, name: str, header: list[str], rows) -> Path:
        p = self.out / name
        with p.open("w", newline="") as fh:
            fh.write(f"# ggbm {self.command} config_digest={self.digest}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
        self.artifacts.append(p)
        return p

    def text(self, name: str, body: str) -> Path:
        p = self.out / name
        p.write_text(f"# ggbm {self.command} config_digest={self.digest}\n" + body)
        self.artifacts.append(p)
        return p

    def graph(self, name: str, g) -> list[Path]:
        paths = save_graph(g, self.out / name, self.stamp)
        self.artifacts.extend(paths)
        return paths

    def manifest(self, started: float) -> Path:
        p = self.out / "manifest.json"
        doc = {
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "config_digest": self.digest,
            "workers": self.workers,
            "artifacts": {str(a.relative_to(self.out)): sha256_file(a) for a in self.artifacts},
            "wall_clock_seconds": round(time.perf_counter() - started, 3),
        }
        p.write_text(json.dumps(doc, indent=1) + "\n")
        return p


def _read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def _num(x: float) -> str:
    return repr(float(x))


# --------------------------------------------------------------------------- commands


def cmd_generate(run: Run) -> None:
    c = run.config
    params = GraphModelParams.from_dict({**c["graph"], "seed": stage_seed(run.seed, "graph")})
    g = assign_features(generate(params), stage_seed(run.seed, "features"))
    if c.get("scenario") is not None:
        g = g.with_labels(scenario_labels(g, ScenarioConfig(**c["scenario"])))
    run.graph("graph", g)


def _train_config(c: dict, seed: int) -> TrainConfig:
    return TrainConfig.from_dict({**c.get("ggbm", {}), "seed": seed})


def cmd_train(run: Run) -> None:
    c = run.config
    g = load_graph(c["graph"])
    n = int(c.get("n", 2))
    mp = MetapathSchema(n, None if c.get("metapaths") is None else tuple(tuple(s) for s in c["metapaths"]))
    mp.validate(g.schema)
    valid = None
    if c.get("valid_graph"):
        valid = (load_graph(c["valid_graph"]), None)
    m = estimator.fit(g, None, mp, n, _train_config(c, stage_seed(run.seed, "train")), valid=valid,
                      threshold=c.get("threshold", 0.5), max_paths=c.get("max_paths"),
                      max_ego_nodes=c.get("max_ego_nodes"))
    run.json("model.json", m.to_dict())


def cmd_predict(run: Run) -> None:
    c = run.config
    m = estimator.GgbmModel.load(c["model"])
    g = load_graph(c["graph"])
    nodes = np.arange(g.num_nodes) if c.get("nodes") is None else [g.node(v) for v in c["nodes"]]
    scores = estimator.predict_nodes(m, g, nodes)
    rows = []
    for v, s in zip(nodes, scores):
        y = g.label(int(v))
        rows.append([g.ids[v], _num(s), "" if y is None else y, estimator.classify(s, m.threshold)])
    run.csv("predictions.csv", ["node_id", "score", "label", "predicted"], rows)


def cmd_evaluate(run: Run) -> None:
    rows = [r for r in _read_csv(run.config["predictions"]) if (r.get("label") or "").strip() != ""]
    if not rows:
        raise MetricError("no labelled rows in predictions")
    try:
        s = np.array([float(r["score"]) for r in rows])
        y = np.array([int(r["label"]) for r in rows])
    except (KeyError, ValueError) as exc:
        raise MetricError(f"predictions: expected node_id,score,label columns ({exc})") from None
    run.json("metrics.json", {"roc_auc": roc_auc(s, y), "pr_auc": pr_auc(s, y),
                              "n_pos": int(y.sum()), "n_neg": int(len(y) - y.sum())})
    curve = roc_curve(s, y)
    run.csv("roc.csv", ["fpr", "tpr"], ([_num(f), _num(t)] for f, t in zip(curve.fpr, curve.tpr)))


def experiment_config(c: dict, seed: int) -> ExperimentConfig:
    d = dict(c)
    d.pop("seed", None)
    d["seed"] = seed
    d["ggbm"] = {**default_train_config().to_dict(), **d.get("ggbm", {})}
    return ExperimentConfig.from_dict(d)


def cmd_experiment(run: Run) -> None:
    cfg = experiment_config(run.config, run.seed)
    rep = run_experiment(cfg, workers=run.workers)
    run.csv("report.csv", rep.REPORT_HEADER, rep.report_rows())
    run.csv("runs.csv", rep.RUNS_HEADER, rep.run_rows())
    run.text("table.txt", rep.table() + "\n")
    run.json("experiment.json", {"resolved": cfg.to_dict()})
    print(rep.table())


def cmd_importance(run: Run) -> None:
    c = run.config
    m = estimator.GgbmModel.load(c["model"])
    kind = c.get("kind", "gain")
    ds = None
    if kind == "permutation":
        if not c.get("graph"):
            raise ConfigError("config.graph: permutation importance needs a labelled graph")
        g = load_graph(c["graph"])
        estimator._check_graph(m, g)
        ds = build_dataset(g, g.labeled_nodes(), m.n, m.metapaths, m.max_paths, m.max_ego_nodes)
    imp = estimator.importance_grouped(m, ds, kind, seed=stage_seed(run.seed, "importance"),
                                       repeats=c.get("repeats", 5))
    rows = []
    for group, d in (("column", imp.columns), ("slot_type", imp.by_slot_type),
                     ("slot", imp.by_slot), ("level", imp.by_level)):
        rows.extend([kind, group, k, _num(v)] for k, v in d.items())
    run.csv("importance.csv", ["kind", "group", "key", "score"], rows)


def cmd_hcp_prepare(run: Run) -> None:
    c = run.config
    _, split = hcp.prepare(c["claims"], c["beneficiaries"], c.get("labels"),
                           test_fraction=c.get("test_fraction", 0.3), seed=stage_seed(run.seed, "split"),
                           amount_column=c.get("amount_column", "amount_paid"))
    run.graph("train", split.train)
    run.graph("test", split.test)
    run.json("split_report.json", split.report())


HANDLERS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "experiment": cmd_experiment,
    "importance": cmd_importance,
    "hcp-prepare": cmd_hcp_prepare,
}


# --------------------------------------------------------------------------- entry point


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="ggbm", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", metavar="COMMAND")
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config, or a manifest.json from an earlier run")
        p.add_argument("--seed", type=int, help="master seed (default: config 'seed', else 0)")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--out", default="out")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
        p.add_argument("--print-schema", action="store_true", help="print the config schema and exit")
    return ap


def resolve(args) -> tuple[dict, int]:
    cfg: dict = {}
    seed = None
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise ConfigError(f"{args.config}: cannot read ({exc.strerror})") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}:{exc.lineno}: {exc.msg}") from None
        if not isinstance(cfg, dict):
            raise ConfigError(f"{args.config}: top level must be an object")
        if {"command", "config", "seed", "artifacts"} <= cfg.keys():  # a manifest
            if cfg["command"] != args.command:
                raise ConfigError(f"manifest is for {cfg['command']!r}, not {args.command!r}")
            cfg, seed = cfg["config"], cfg["seed"]
    for a in args.overrides:
        apply_override(cfg, a)
    if args.seed is not None:
        seed = args.seed
    elif seed is None:
        seed = cfg.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"seed: must be a nonnegative integer (got {seed!r})")
    cfg.pop("seed", None)
    validate_config(args.command, cfg)
    return cfg, seed


def main(argv=None) -> int:
    started = time.perf_counter()
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"ggbm: error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command is None:
        build_parser().print_help(sys.stderr)
        return 1
    if args.print_schema:
        print(json.dumps(command_schema(args.command), indent=2))
        return 0
    if args.workers < 1:
        print("ggbm: error: --workers must be >= 1", file=sys.stderr)
        return 1
    try:
        cfg, seed = resolve(args)
        run = Run(args.command, cfg, seed, Path(args.out), args.workers)
        HANDLERS[args.command](run)
        run.manifest(started)
    except (ConfigError, HinError, MetricError, ValueError) as exc:
        print(f"ggbm: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"ggbm: runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""``robot-kit`` command line.

Every subcommand resolves one flat configuration from built-in defaults, an
optional ``--config`` file (TOML, or a previous run's ``manifest.json``),
repeatable ``--set key=value`` overrides and finally explicit flags.  Outputs
land in ``<out>/<YYYYmmdd-HHMMSS>-seed<seed>/`` together with a manifest that
echoes the resolved configuration, so ``robot-kit <cmd> --config
<run>/manifest.json`` repeats a run.

Exit codes: 0 success, 1 domain error, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, attacks, io, loop, metrics, nn, selection
from .errors import ConfigError, RobotKitError
from .fuzzer import FuzzConfig, fol_fuzz
from .suite import TestSuite

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger("robotkit")

THREADS_ENV = "ROBOTKIT_THREADS"

DEFAULTS: dict[str, object] = {
    "seed": 0,
    "out": "runs",
    "data.train": None,
    "data.train_labels": None,
    "data.test": None,
    "data.test_labels": None,
    "data.num_classes": 10,
    "model": None,
    "suite": None,
    "dv": None,
    "train.hidden": "128",
    "train.epochs": 10,
    "train.batch_size": 32,
    "train.lr": 0.05,
    "attack.kinds": "fgsm,pgd",
    "attack.norm": "linf",
    "attack.epsilon": 0.3,
    "attack.steps": 10,
    "attack.step_size": None,
    "attack.n_each": 1000,
    "fuzz.seeds": 500,
    "fuzz.epsilon": 0.3,
    "fuzz.xi": 1e-18,
    "fuzz.k": 5,
    "fuzz.lam": 1.0,
    "fuzz.iters": 3,
    "fuzz.lr": 0.1,
    "fuzz.norm": "linf",
    "fuzz.fol_norm": "l2",
    "fuzz.push_cap": 20,
    "metrics.norm": "l2",
    "metrics.epsilon": None,
    "select.strategy": "be-st",
    "select.n": None,
    "select.fraction": None,
    "select.k": 10,
    "retrain.epochs": 10,
    "retrain.batch_size": 32,
    "retrain.lr": 0.05,
    "robot.r": 0.5,
    "robot.r_margin": None,
    "robot.max_iterations": 3,
    "robot.generator": "attack-pool",
    "robot.pool_size": 10000,
    "robot.accuracy_floor": None,
    "robot.score_norm": "linf",
    "robot.dv_each": 1000,
}

# config sections each subcommand reads; echoed into its manifest
SECTIONS = {
    "train": ("data", "train"),
    "attack": ("data", "model", "attack"),
    "fuzz": ("data", "model", "fuzz"),
    "metrics": ("model", "suite", "metrics"),
    "select": ("model", "suite", "metrics", "select"),
    "eval-robustness": ("data", "model", "dv"),
    "retrain": ("data", "model", "suite", "retrain"),
    "robot": ("data", "model", "dv", "train", "attack", "fuzz", "select", "retrain", "robot"),
}


class UsageError(Exception):
    pass


# ------------------------------------------------------------------ config


def _flatten(table: dict, prefix: str = "") -> dict:
    flat = {}
    for key, value in table.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, name + "."))
        else:
            flat[name] = value
    return flat


def _coerce(key: str, value):
    default = DEFAULTS[key]
    if value is None or default is None:
        return value
    try:
        if isinstance(default, bool):
            if isinstance(value, str):
                return value.lower() in ("1", "true", "yes")
            return bool(value)
        if isinstance(default, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        if isinstance(default, float):
            return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot use {value!r} as {type(default).__name__}") from None
    if isinstance(value, (list, tuple)):
        return ",".join(str(v) for v in value)
    return str(value)


def _parse_value(text: str):
    if text.lower() in ("none", "null"):
        return None
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def _load_config_file(path: str, command: str) -> dict:
    p = Path(path)
    try:
        raw = p.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        if p.suffix == ".json":
            doc = json.loads(raw)
            if "config" in doc:  # a manifest from an earlier run
                doc = doc["config"]
        else:
            doc = tomllib.loads(raw.decode("utf-8"))
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    flat = _flatten(doc)
    out = {}
    for key, value in flat.items():
        # keys under another subcommand's table (e.g. [robot] when running train) are skipped
        if key.startswith(f"{command}.") and key not in DEFAULTS:
            key = key[len(command) + 1 :]
        if key not in DEFAULTS:
            section = key.split(".")[0]
            if section in SECTIONS and section != command:
                continue
            raise ConfigError(f"{path}: unknown config key {key!r}")
        out[key] = value
    return out


def resolve_config(command: str, config_path: str | None, overrides: list[str], flags: dict) -> dict:
    cfg = dict(DEFAULTS)
    if config_path:
        cfg.update(_load_config_file(config_path, command))
    for item in overrides:
        key, sep, text = item.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        cfg[key] = _parse_value(text.strip())
    cfg.update(flags)
    return {k: _coerce(k, v) for k, v in cfg.items()}


def _relevant(cfg: dict, command: str) -> dict:
    keep = ("seed", "out") + SECTIONS[command]
    return {k: v for k, v in cfg.items() if k.split(".")[0] in keep}


def resolve_threads(flag: int | None) -> int:
    if flag is not None:
        value = flag
    else:
        env = os.environ.get(THREADS_ENV)
        if not env:
            return 1
        try:
            value = int(env)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV}={env!r} is not an integer") from None
    if value < 1:
        raise ConfigError("threads must be >= 1")
    return value


# ------------------------------------------------------------------ run dir


class Run:
    def __init__(self, command: str, cfg: dict, threads: int, argv: list[str]):
        stamp = time.strftime("%Y%m%d-%H%M%S")
        base = Path(cfg["out"]) / f"{stamp}-seed{cfg['seed']}"
        path = base
        n = 1
        while path.exists():
            path = Path(f"{base}-{n}")
            n += 1
        path.mkdir(parents=True)
        self.path = path
        self.command = command
        self.outputs: dict[str, str] = {}
        self.manifest = {
            "tool": "robot-kit",
            "version": __version__,
            "subcommand": command,
            "argv": argv,
            "threads": threads,
            "seeds": {"seed": cfg["seed"]},
            "config": _relevant(cfg, command),
            "inputs": {},
            "outputs": self.outputs,
            "started": time.strftime("%Y-%m-%dT%H:%M:%S"),
        }
        self._write_manifest()

    def note_input(self, key: str, path):
        digest = hashlib.sha256(Path(path).read_bytes()).hexdigest()
        self.manifest["inputs"][key] = {"path": str(path), "sha256": digest}

    def file(self, name: str) -> Path:
        self.outputs[name] = str(self.path / name)
        return self.path / name

    def write_json(self, name: str, obj):
        self.file(name).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")

    def finish(self, status: str = "ok"):
        self.manifest["status"] = status
        self.manifest["finished"] = time.strftime("%Y-%m-%dT%H:%M:%S")
        self._write_manifest()

    def _write_manifest(self):
        (self.path / "manifest.json").write_text(json.dumps(self.manifest, indent=2) + "\n")


# ------------------------------------------------------------------ loaders


def _require(cfg: dict, key: str, flag: str):
    if cfg[key] is None:
        raise UsageError(f"missing {flag} (config key {key})")
    return cfg[key]


def _load_data(run: Run, cfg: dict, which: str = "train", required: bool = True) -> nn.LabeledDataset | None:
    path = cfg[f"data.{which}"]
    if path is None:
        if required:
            raise UsageError(f"missing --{'data' if which == 'train' else 'test-data'} (config key data.{which})")
        return None
    labels = cfg[f"data.{which}_labels"]
    run.note_input(f"data.{which}", path)
    if labels is not None:
        run.note_input(f"data.{which}_labels", labels)
        return io.load_idx(path, labels)
    return io.load_csv(path, cfg["data.num_classes"])


def _load_model(run: Run, cfg: dict) -> nn.MlpModel:
    path = _require(cfg, "model", "--model")
    run.note_input("model", path)
    return io.load_checkpoint(path)


def _load_suite(run: Run, cfg: dict, key: str = "suite", flag: str = "--suite") -> TestSuite:
    path = _require(cfg, key, flag)
    run.note_input(key, path)
    return io.load_suite(path)


def _attack_cfgs(cfg: dict, seed: int) -> list[attacks.AttackConfig]:
    eps = cfg["attack.epsilon"]
    step = cfg["attack.step_size"]
    out = []
    for kind in str(cfg["attack.kinds"]).split(","):
        kind = kind.strip().lower()
        if kind == attacks.FGSM:
            out.append(attacks.AttackConfig(attacks.FGSM, eps, 1, eps, cfg["attack.norm"], seed, False))
        else:
            out.append(attacks.AttackConfig(kind, eps, cfg["attack.steps"], step, cfg["attack.norm"], seed))
    return out


def _train_cfg(cfg: dict, section: str, seed: int) -> nn.TrainConfig:
    return nn.TrainConfig(cfg[f"{section}.epochs"], cfg[f"{section}.batch_size"], cfg[f"{section}.lr"], seed)


def _fuzz_cfg(cfg: dict, seed: int) -> FuzzConfig:
    return FuzzConfig(
        epsilon=cfg["fuzz.epsilon"], xi=cfg["fuzz.xi"], k=cfg["fuzz.k"], lam=cfg["fuzz.lam"],
        iters=cfg["fuzz.iters"], learning_rate=cfg["fuzz.lr"], norm=cfg["fuzz.norm"],
        fol_norm=cfg["fuzz.fol_norm"], rng_seed=seed, push_cap=cfg["fuzz.push_cap"],
    )


def _selection_request(cfg: dict, seed: int) -> selection.SelectionRequest:
    n = cfg["select.n"]
    fraction = cfg["select.fraction"]
    if n is None and fraction is None:
        fraction = 0.1
    return selection.SelectionRequest(cfg["select.strategy"], n if n is not None else 1, cfg["select.k"],
                                      seed, None if n is not None else fraction)


def _hidden(cfg: dict) -> list[int]:
    text = str(cfg["train.hidden"]).strip()
    if not text:
        return []
    try:
        return [int(h) for h in text.split(",")]
    except ValueError:
        raise ConfigError(f"train.hidden must be comma-separated integers, got {text!r}") from None


def _train_f0(cfg: dict, data: nn.LabeledDataset) -> nn.MlpModel:
    seed = cfg["seed"]
    sizes = [data.dim, *_hidden(cfg), cfg["data.num_classes"]]
    return nn.train(nn.init_mlp(sizes, seed), data, _train_cfg(cfg, "train", seed))


# ------------------------------------------------------------------ commands


def cmd_train(run: Run, cfg: dict, threads: int):
    data = _load_data(run, cfg)
    test = _load_data(run, cfg, "test", required=False)
    model = _train_f0(cfg, data)
    io.save_checkpoint(model, run.file("model.bin"))
    report = {"train_accuracy": nn.accuracy(model, data), "sizes": model.sizes}
    if test is not None:
        report["test_accuracy"] = nn.accuracy(model, test)
    run.write_json("report.json", report)
    print(f"trained {'-'.join(map(str, model.sizes))} MLP: train accuracy {report['train_accuracy']:.4f}")
    if test is not None:
        print(f"test accuracy {report['test_accuracy']:.4f}")


def cmd_attack(run: Run, cfg: dict, threads: int):
    data = _load_data(run, cfg)
    model = _load_model(run, cfg)
    atts = _attack_cfgs(cfg, cfg["seed"])
    suite = loop.build_attack_suite(model, data, atts, cfg["attack.n_each"], cfg["seed"], threads)
    io.save_suite(suite, run.file("suite.bin"))
    rep = loop.empirical_robustness(model, suite) if len(suite) else None
    report = {"count": len(suite), "attacks": [a.name for a in atts],
              "robustness": rep.as_dict() if rep else None}
    run.write_json("report.json", report)
    print(f"generated {len(suite)} adversarial cases ({', '.join(report['attacks'])})")
    if rep:
        print(f"model accuracy on them: {rep.er:.4f}")


def cmd_fuzz(run: Run, cfg: dict, threads: int):
    data = _load_data(run, cfg)
    model = _load_model(run, cfg)
    fz = _fuzz_cfg(cfg, cfg["seed"])
    n = min(cfg["fuzz.seeds"], len(data))
    idx = np.sort(np.random.default_rng(cfg["seed"]).choice(len(data), size=n, replace=False))
    out = fol_fuzz(model, data.subset(idx), fz, threads=threads)
    suite = out.cases
    if len(suite):
        suite = replace(suite, seed_index=idx[suite.seed_index])
    io.save_suite(suite, run.file("suite.bin"))
    run.write_json("stats.json", out.stats.as_dict())
    s = out.stats
    print(f"fuzzed {s.seeds_processed} seeds in {s.perturbation_steps} steps: {s.label_flips} cases emitted")


def cmd_metrics(run: Run, cfg: dict, threads: int):
    model = _load_model(run, cfg)
    suite = _load_suite(run, cfg)
    scored = metrics.score_suite(model, suite, cfg["metrics.norm"], cfg["metrics.epsilon"])
    io.save_suite(scored, run.file("suite.bin"))
    cases = [
        {"fol": float(scored.fol[i]), "zol": float(scored.zol[i]), "gini": float(scored.gini[i]),
         "seed_index": int(scored.seed_index[i]), "ground_truth": int(scored.ground_truth[i]),
         "predicted": int(scored.predicted[i])}
        for i in range(len(scored))
    ]
    summary = metrics.summarize(scored)
    eps = scored.epsilon if cfg["metrics.epsilon"] is None else cfg["metrics.epsilon"]
    run.write_json("metrics.json", {"norm": cfg["metrics.norm"], "epsilon": eps,
                                    "cases": cases, "summary": summary})
    if summary["count"]:
        print(f"scored {summary['count']} cases ({scored.metric_variant}, eps={eps:g}): "
              f"mean FOL {summary['mean_fol']:.4g}, mean ZOL {summary['mean_zol']:.4g}, "
              f"mean Gini {summary['mean_gini']:.4g}")
    else:
        print("suite is empty; nothing to score")


def cmd_select(run: Run, cfg: dict, threads: int):
    suite = _load_suite(run, cfg)
    req = _selection_request(cfg, cfg["seed"])
    if not suite.scored and req.strategy != selection.RANDOM:
        if cfg["model"] is None:
            raise RobotKitError("suite has no FOL scores; run `metrics` first or pass --model")
        suite = metrics.score_suite(_load_model(run, cfg), suite, cfg["metrics.norm"], cfg["metrics.epsilon"])
    chosen = selection.select(suite, req)
    io.save_suite(chosen, run.file("selected.bin"))
    run.write_json("report.json", {"strategy": req.strategy, "n": len(chosen), "from": len(suite),
                                   "seed_index": chosen.seed_index.tolist()})
    print(f"selected {len(chosen)} of {len(suite)} cases with {req.strategy}")


def cmd_eval(run: Run, cfg: dict, threads: int):
    model = _load_model(run, cfg)
    d_v = _load_suite(run, cfg, "dv", "--dv")
    clean = _load_data(run, cfg, "test", required=False)
    rep = loop.empirical_robustness(model, d_v, clean)
    run.write_json("report.json", rep.as_dict())
    print(f"empirical robustness {rep.er:.4f} on {rep.n_adv} cases; clean accuracy {rep.clean_accuracy:.4f}")
    for name, acc in rep.per_attack.items():
        print(f"  {name}: {acc:.4f}")


def cmd_retrain(run: Run, cfg: dict, threads: int):
    data = _load_data(run, cfg)
    model = _load_model(run, cfg)
    suite = _load_suite(run, cfg)
    new = loop.retrain(model, data, suite, _train_cfg(cfg, "retrain", cfg["seed"]))
    io.save_checkpoint(new, run.file("model.bin"))
    report = {"train_accuracy": nn.accuracy(new, data), "added_cases": len(suite)}
    run.write_json("report.json", report)
    print(f"retrained on {len(data)} + {len(suite)} cases: train accuracy {report['train_accuracy']:.4f}")


def cmd_robot(run: Run, cfg: dict, threads: int):
    seed = cfg["seed"]
    run.manifest["seeds"].update({
        "init_and_train": seed, "validation_suite": seed + 1,
        "generation": "seed*1000 + iteration", "selection": "seed + iteration",
        "retrain": "seed + iteration",
    })
    data = _load_data(run, cfg)
    test = _load_data(run, cfg, "test", required=False)
    if cfg["model"] is not None:
        f0 = _load_model(run, cfg)
    else:
        f0 = _train_f0(cfg, data)
        io.save_checkpoint(f0, run.file("f0.bin"))
    if cfg["dv"] is not None:
        d_v = _load_suite(run, cfg, "dv", "--dv")
    else:
        if test is None:
            raise UsageError("robot needs --dv or --test-data to build the validation suite")
        d_v = loop.build_validation_suite(f0, test, _attack_cfgs(cfg, seed + 1), cfg["robot.dv_each"],
                                          seed + 1, threads)
        io.save_suite(d_v, run.file("dv.bin"))
    r = cfg["robot.r"]
    if cfg["robot.r_margin"] is not None:
        r = min(1.0, loop.empirical_robustness(f0, d_v, test).er + cfg["robot.r_margin"])
    rcfg = loop.RobotConfig(
        requirement_r=r,
        max_iterations=cfg["robot.max_iterations"],
        generator=cfg["robot.generator"],
        selection=_selection_request(cfg, seed),
        retrain=_train_cfg(cfg, "retrain", seed),
        accuracy_floor=cfg["robot.accuracy_floor"],
        pool_size=cfg["robot.pool_size"],
        attacks=tuple(_attack_cfgs(cfg, seed)),
        fuzz=_fuzz_cfg(cfg, seed),
        fuzz_seeds=cfg["fuzz.seeds"],
        score_norm=cfg["robot.score_norm"],
        rng_seed=seed,
        threads=threads,
    )
    history = run.file("history.jsonl")
    with history.open("w") as fh:
        def on_iteration(rec):
            fh.write(json.dumps(rec.as_dict()) + "\n")
            fh.flush()
            print(f"iteration {rec.iter}: ER {rec.er:.4f}, clean accuracy {rec.clean_acc:.4f}")

        result = loop.robot(f0, data, d_v, rcfg, clean=test, on_iteration=on_iteration)
    io.save_checkpoint(result.model, run.file("model.bin"))
    run.write_json("report.json", {
        "status": result.status, "requirement_r": r, "iterations": result.iterations,
        "best_iteration": result.best_iteration, "er": [h.er for h in result.history],
        "history": [h.as_dict() for h in result.history],
    })
    print(f"status {result.status} after {result.iterations} iteration(s); "
          f"best ER {result.history[result.best_iteration].er:.4f} (iteration {result.best_iteration})")
    return result.status


COMMANDS = {
    "train": cmd_train,
    "attack": cmd_attack,
    "fuzz": cmd_fuzz,
    "metrics": cmd_metrics,
    "select": cmd_select,
    "eval-robustness": cmd_eval,
    "retrain": cmd_retrain,
    "robot": cmd_robot,
}

# flag -> config key, per subcommand; a flag missing from a subcommand is a usage error
FLAGS = {
    "common": [("--seed", "seed", int), ("--out", "out", str)],
    "data": [("--data", "data.train", str), ("--labels", "data.train_labels", str),
             ("--test-data", "data.test", str), ("--test-labels", "data.test_labels", str),
             ("--num-classes", "data.num_classes", int)],
    "train": [("--hidden", "train.hidden", str), ("--epochs", "train.epochs", int),
              ("--batch-size", "train.batch_size", int), ("--lr", "train.lr", float)],
    "attack": [("--attack", "attack.kinds", str), ("--norm", "attack.norm", str),
               ("--epsilon", "attack.epsilon", float), ("--steps", "attack.steps", int),
               ("--step-size", "attack.step_size", float), ("--n-each", "attack.n_each", int)],
    "fuzz": [("--seeds", "fuzz.seeds", int), ("--epsilon", "fuzz.epsilon", float), ("--xi", "fuzz.xi", float),
             ("--k", "fuzz.k", int), ("--lam", "fuzz.lam", float), ("--iters", "fuzz.iters", int),
             ("--lr", "fuzz.lr", float), ("--norm", "fuzz.norm", str), ("--fol-norm", "fuzz.fol_norm", str)],
    "metrics": [("--norm", "metrics.norm", str), ("--epsilon", "metrics.epsilon", float)],
    "select": [("--strategy", "select.strategy", str), ("--n", "select.n", int),
               ("--fraction", "select.fraction", float), ("--k", "select.k", int),
               ("--norm", "metrics.norm", str)],
    "retrain": [("--epochs", "retrain.epochs", int), ("--batch-size", "retrain.batch_size", int),
                ("--lr", "retrain.lr", float)],
    "robot": [("--r", "robot.r", float), ("--r-margin", "robot.r_margin", float),
              ("--max-iterations", "robot.max_iterations", int), ("--generator", "robot.generator", str),
              ("--pool-size", "robot.pool_size", int), ("--accuracy-floor", "robot.accuracy_floor", float),
              ("--strategy", "select.strategy", str), ("--fraction", "select.fraction", float),
              ("--n", "select.n", int), ("--epsilon", "attack.epsilon", float), ("--norm", "attack.norm", str),
              ("--epochs", "retrain.epochs", int)],
}

COMMAND_FLAGS = {
    "train": ("data", "train"),
    "attack": ("data", "attack"),
    "fuzz": ("data", "fuzz"),
    "metrics": ("metrics",),
    "select": ("select",),
    "eval-robustness": ("data",),
    "retrain": ("data", "retrain"),
    "robot": ("data", "robot"),
}

HELP = {
    "train": "train an MLP on a dataset",
    "attack": "generate an FGSM/PGD adversarial suite",
    "fuzz": "FOL-guided fuzzing from dataset seeds",
    "metrics": "score a suite with FOL, ZOL and Gini",
    "select": "pick a retraining subset from a scored suite",
    "eval-robustness": "empirical robustness on a validation suite",
    "retrain": "continue training a model on data plus a suite",
    "robot": "test-select-retrain loop until a robustness target is met",
}

FILE_FLAGS = {
    "attack": ("model",), "fuzz": ("model",), "metrics": ("model", "suite"),
    "select": ("model", "suite"), "eval-robustness": ("model", "dv"),
    "retrain": ("model", "suite"), "robot": ("model", "dv"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="robot-kit", description="Robustness-oriented testing and retraining.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name in COMMANDS:
        p = sub.add_parser(name, help=HELP[name], description=HELP[name])
        p.add_argument("--config", help="TOML config file or a run's manifest.json")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", dest="overrides",
                       help="override one config key (repeatable)")
        p.add_argument("--threads", type=int, default=None, help=f"worker threads (fallback: ${THREADS_ENV})")
        p.add_argument("-v", "--verbose", action="store_true")
        seen = set()
        for group in ("common",) + COMMAND_FLAGS[name]:
            for flag, key, typ in FLAGS[group]:
                if flag in seen:
                    continue
                seen.add(flag)
                p.add_argument(flag, dest=key, type=typ, default=argparse.SUPPRESS,
                               metavar=key.split(".")[-1].upper(), help=f"config key {key}")
        for key in FILE_FLAGS.get(name, ()):
            p.add_argument(f"--{key}", dest=key, default=argparse.SUPPRESS, metavar="PATH",
                           help=f"config key {key}")
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    ns = vars(args)
    command = ns.pop("command")
    config_path = ns.pop("config")
    overrides = ns.pop("overrides")
    thread_flag = ns.pop("threads")
    verbose = ns.pop("verbose")
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(command, config_path, overrides, ns)
        threads = resolve_threads(thread_flag)
        run = Run(command, cfg, threads, argv)
    except ConfigError as exc:
        print(f"robot-kit: config error: {exc}", file=sys.stderr)
        return 2
    try:
        status = COMMANDS[command](run, cfg, threads)
    except (UsageError, ConfigError) as exc:
        run.finish("usage_error")
        print(f"robot-kit {command}: {exc}", file=sys.stderr)
        return 2
    except (RobotKitError, OSError) as exc:
        run.finish("error")
        print(f"robot-kit {command}: {exc}", file=sys.stderr)
        return 1
    run.finish(status or "ok")
    print(f"outputs: {run.path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

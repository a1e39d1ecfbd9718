"""Command-line front end: collect, mix, subsample, train, eval, compare, rerun.

Every command writes a JSON run manifest next to its main output.  The
manifest stores the fully resolved arguments and configs, so ``omarl rerun``
can reproduce the outputs byte for byte.

Exit codes: 0 ok, 2 usage, 3 config, 4 I/O, 5 numerical abort.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import fields

from . import __version__
from .baselines import KINDS, make_policy
from .dataset import Dataset, collect, file_sha256, mix, subsample
from .env import NetConfig
from .errors import ConfigError, DatasetIOError, IncompatibleConfigError, OmarlError, UsageError
from .marl import OFFLINE_ALGOS, AgentNets, ModelPolicy, TrainerConfig, train_offline, train_online
from .metrics import evaluate, moving_average

MANIFEST_FORMAT = "omarl.manifest/1"
NET_KEYS = {f.name for f in fields(NetConfig)}
TRAIN_KEYS = {f.name for f in fields(TrainerConfig)}
EXTRA_DEFAULTS = {"itlinq_m_db": 25.0, "itlinq_eta": 0.5, "mu1": None, "mu2": 3.0, "eval_seed": None}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------- config


def read_config(path):
    """Flat ``key = value`` file; ``#`` starts a comment."""
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    out = {}
    for n, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in NET_KEYS | TRAIN_KEYS | set(EXTRA_DEFAULTS):
            raise ConfigError(f"{path}:{n}: unknown key {key!r}")
        out[key] = value
    return out


def _coerce(mapping, cls):
    try:
        return cls.from_mapping(mapping)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad {cls.__name__} value: {exc}") from exc


def resolve(args):
    """Merge config file values with flags (flags win) into concrete configs."""
    if getattr(args, "resolved", None):
        r = args.resolved
        return NetConfig.from_mapping(r["net_config"]), TrainerConfig.from_mapping(r["trainer_config"]), dict(r["extra"])
    raw = read_config(args.config)
    if args.seed is not None:
        raw["seed"] = args.seed
    if getattr(args, "algo", None):
        raw["algo"] = args.algo
    if getattr(args, "iters", None) is not None:
        raw["iterations"] = args.iters
    if getattr(args, "grad_steps", None) is not None:
        raw["grad_steps"] = args.grad_steps
    if args.command == "train" and args.episodes is not None:
        raw["episodes"] = args.episodes
    net = _coerce({k: v for k, v in raw.items() if k in NET_KEYS}, NetConfig)
    tcfg = _coerce({k: v for k, v in raw.items() if k in TRAIN_KEYS}, TrainerConfig)
    extra = dict(EXTRA_DEFAULTS)
    for key in EXTRA_DEFAULTS:
        if key in raw:
            try:
                extra[key] = int(raw[key]) if key == "eval_seed" else float(raw[key])
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {raw[key]!r}") from exc
    return net, tcfg, extra


# ---------------------------------------------------------------- policies


def load_model(path):
    try:
        return AgentNets.load(path)
    except OSError as exc:
        raise DatasetIOError(f"cannot read model {path}: {exc}") from exc
    except (ValueError, KeyError) as exc:
        raise DatasetIOError(f"unreadable model {path}: {exc}") from exc


def make_named_policy(name, net_cfg, extra):
    """``rw``, ``greedy``, ``tdm``, ``itlinq`` or ``model:<path>``."""
    if name.startswith("model:"):
        nets = load_model(name[len("model:"):])
        if nets.net_config is not None and NetConfig.from_mapping(nets.net_config) != net_cfg:
            raise IncompatibleConfigError(f"model {name} was trained under a different network config")
        return ModelPolicy(nets, name=name)
    if name not in KINDS:
        raise UsageError(f"unknown policy {name!r}; expected one of {list(KINDS)} or model:<path>")
    return make_policy(name, extra["itlinq_m_db"], extra["itlinq_eta"])


def _load_dataset(path, net_cfg=None):
    ds = Dataset.load(path)
    if net_cfg is not None and ds.meta.config_hash != net_cfg.config_hash():
        raise IncompatibleConfigError(f"dataset {path} was collected under a different network config")
    return ds


# ---------------------------------------------------------------- manifest


def _manifest_path(out):
    return out + ".manifest.json"


def write_manifest(args, net, tcfg, extra, inputs, outputs, started):
    keep = {k: v for k, v in vars(args).items() if k not in ("resolved", "config", "argv", "started")}
    doc = {
        "format": MANIFEST_FORMAT,
        "version": __version__,
        "command_line": list(getattr(args, "argv", [])),
        "command": args.command,
        "args": keep,
        "seed": tcfg.seed,
        "resolved": {"net_config": net.to_dict(), "trainer_config": tcfg.to_dict(), "extra": extra},
        "config_hash": net.config_hash(),
        "inputs": {p: file_sha256(p) for p in inputs},
        "outputs": {p: file_sha256(p) for p in outputs},
        "wall_clock_s": round(time.time() - started, 3),
        "finished_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    path = _manifest_path(outputs[0])
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise DatasetIOError(f"cannot write manifest {path}: {exc}") from exc
    return path


def _require(args, name):
    if getattr(args, name) in (None, [], ""):
        raise UsageError(f"{args.command} needs --{name.replace('_', '-')}")


# ---------------------------------------------------------------- commands


def cmd_collect(args, out):
    _require(args, "policy")
    _require(args, "out")
    net, tcfg, extra = resolve(args)
    policy = make_named_policy(args.policy, net, extra)
    episodes = 1 if args.episodes is None else args.episodes
    if episodes < 0:
        raise ConfigError("episodes must be >= 0")
    ds = collect(net, policy, episodes, seed=tcfg.seed, path=args.out)
    if episodes == 0:
        print("warning: 0 episodes requested; wrote an empty dataset", file=sys.stderr)
    mean = float(ds.rewards.mean()) if len(ds) else float("nan")
    print(f"records {len(ds)}  mean_reward {mean:.6g}  -> {args.out}", file=out)
    inputs = [args.policy[6:]] if args.policy.startswith("model:") else []
    return write_manifest(args, net, tcfg, extra, inputs, [args.out], args.started)


def cmd_mix(args, out):
    _require(args, "dataset")
    _require(args, "proportions")
    _require(args, "out")
    net, tcfg, extra = resolve(args)
    try:
        props = [float(x) for x in args.proportions.split(",")]
    except ValueError as exc:
        raise UsageError(f"bad --proportions {args.proportions!r}") from exc
    sources = [_load_dataset(p) for p in args.dataset]
    try:
        ds = mix(sources, props, size=args.size, seed=tcfg.seed, path=args.out)
    except IncompatibleConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    print(f"records {len(ds)}  behavior {ds.meta.behavior}  -> {args.out}", file=out)
    return write_manifest(args, sources[0].cfg, tcfg, extra, list(args.dataset), [args.out], args.started)


def cmd_subsample(args, out):
    _require(args, "dataset")
    _require(args, "size")
    _require(args, "out")
    net, tcfg, extra = resolve(args)
    if len(args.dataset) != 1:
        raise UsageError("subsample takes exactly one --dataset")
    src = _load_dataset(args.dataset[0])
    try:
        ds = subsample(src, args.size, seed=tcfg.seed, path=args.out)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    print(f"records {len(ds)}  -> {args.out}", file=out)
    return write_manifest(args, src.cfg, tcfg, extra, list(args.dataset), [args.out], args.started)


def cmd_train(args, out):
    _require(args, "out")
    net, tcfg, extra = resolve(args)
    offline = tcfg.algo in OFFLINE_ALGOS
    if offline and not args.dataset:
        raise UsageError(f"{tcfg.algo} is an offline algorithm and needs --dataset")
    if not offline and args.dataset:
        raise UsageError(f"{tcfg.algo} trains online and takes no --dataset")

    def progress(row):
        if args.verbose:
            print(" ".join(f"{k}={v:.5g}" if isinstance(v, float) else f"{k}={v}" for k, v in row.items()),
                  file=out, flush=True)

    inputs = []
    if offline:
        if len(args.dataset) != 1:
            raise UsageError("train takes exactly one --dataset")
        ds = _load_dataset(args.dataset[0], net)
        inputs = list(args.dataset)
        result = train_offline(tcfg, ds, net, progress=progress)
    else:
        result = train_online(tcfg, net, progress=progress)
    try:
        result.nets.save(args.out, net.config_hash(), extra={"trainer_config": tcfg.to_dict()})
    except OSError as exc:
        raise DatasetIOError(f"cannot write model {args.out}: {exc}") from exc
    outputs = [args.out]
    if args.csv:
        _write_text(args.csv, result.curves_csv())
        outputs.append(args.csv)
    print(f"{tcfg.algo}: {result.gradient_steps} gradient steps -> {args.out}", file=out)
    return write_manifest(args, net, tcfg, extra, inputs, outputs, args.started)


def _write_text(path, text):
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise DatasetIOError(f"cannot write {path}: {exc}") from exc


def _smoothed_csv(summary, window):
    if not window or window <= 1:
        return summary.to_csv()
    smooth = moving_average(summary.rsum_per_episode, window)
    head, *lines = summary.to_csv().splitlines()
    rows = [head + ",Rsum_smoothed"]
    rows += [f"{line},{s!r}" for line, s in zip(lines, smooth.tolist())]
    return "\n".join(rows) + "\n"


def _evaluate_named(names, args, net, tcfg, extra):
    episodes = 1 if args.episodes is None else args.episodes
    if episodes < 1:
        raise ConfigError("episodes must be >= 1")
    seed = tcfg.seed if extra["eval_seed"] is None else extra["eval_seed"]
    summaries = []
    for name in names:
        policy = make_named_policy(name, net, extra)
        summaries.append(evaluate(policy, net, episodes, seed=seed, mu1=extra["mu1"],
                                  mu2=extra["mu2"], run_id=name))
    return summaries


def _model_inputs(names):
    return [n[6:] for n in names if n.startswith("model:")]


def cmd_eval(args, out):
    _require(args, "policy")
    _require(args, "csv")
    net, tcfg, extra = resolve(args)
    (summary,) = _evaluate_named([args.policy], args, net, tcfg, extra)
    _write_text(args.csv, _smoothed_csv(summary, args.window))
    outputs = [args.csv]
    if args.out:
        _write_text(args.out, summary.to_text())
        outputs.append(args.out)
    print(f"{args.policy}: Rsum {summary.rsum_mean:.4f} +- {summary.rsum_std:.4f}  "
          f"Rperc5 {summary.rperc5:.4f}  Rscore {summary.rscore:.4f}", file=out)
    return write_manifest(args, net, tcfg, extra, _model_inputs([args.policy]), outputs, args.started)


def compare_table(summaries):
    lines = ["policy,episodes,Rsum_mean,Rsum_std,Rperc5,Rscore"]
    for s in summaries:
        lines.append(f"{s.run_id},{s.episodes},{s.rsum_mean!r},{s.rsum_std!r},{s.rperc5!r},{s.rscore!r}")
    return "\n".join(lines) + "\n"


def cmd_compare(args, out):
    _require(args, "csv")
    net, tcfg, extra = resolve(args)
    names = (args.policy or ",".join(KINDS)).split(",")
    summaries = _evaluate_named(names, args, net, tcfg, extra)
    _write_text(args.csv, compare_table(summaries))
    outputs = [args.csv]
    if args.out:
        parts = [_smoothed_csv(s, args.window) for s in summaries]
        _write_text(args.out, parts[0] + "".join(p.split("\n", 1)[1] for p in parts[1:]))
        outputs.append(args.out)
    width = max(len(n) for n in names)
    print(f"{'policy':{width}s}  {'Rsum':>8s}  {'Rperc5':>8s}  {'Rscore':>8s}", file=out)
    for s in summaries:
        print(f"{s.run_id:{width}s}  {s.rsum_mean:8.4f}  {s.rperc5:8.4f}  {s.rscore:8.4f}", file=out)
    return write_manifest(args, net, tcfg, extra, _model_inputs(names), outputs, args.started)


def cmd_rerun(args, out):
    """Re-execute a manifest, optionally redirecting outputs into ``--out-dir``."""
    try:
        with open(args.manifest, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise DatasetIOError(f"cannot read manifest {args.manifest}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"malformed manifest {args.manifest}: {exc}") from exc
    if doc.get("format") != MANIFEST_FORMAT:
        raise ConfigError(f"unsupported manifest format {doc.get('format')!r}")
    ns = argparse.Namespace(**doc["args"])
    ns.config = None
    ns.resolved = doc["resolved"]
    ns.argv = ["rerun", args.manifest]
    ns.started = time.time()
    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
        for key in ("out", "csv"):
            if getattr(ns, key, None):
                setattr(ns, key, os.path.join(args.out_dir, os.path.basename(getattr(ns, key))))
    for path, digest in doc.get("inputs", {}).items():
        if os.path.exists(path) and file_sha256(path) != digest:
            print(f"warning: input {path} changed since the manifest was written", file=sys.stderr)
    return COMMANDS[ns.command](ns, out)


COMMANDS = {
    "collect": cmd_collect,
    "mix": cmd_mix,
    "subsample": cmd_subsample,
    "train": cmd_train,
    "eval": cmd_eval,
    "compare": cmd_compare,
}


def build_parser():
    p = _Parser(prog="omarl", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"omarl {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="flat key = value config file; flags win")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out")
        return sp

    sp = common(sub.add_parser("collect", help="roll out a behavior policy into a dataset file"))
    sp.add_argument("--policy")
    sp.add_argument("--episodes", type=int)

    sp = common(sub.add_parser("mix", help="mix datasets in given proportions"))
    sp.add_argument("--dataset", action="append")
    sp.add_argument("--proportions", help="comma separated, one per --dataset")
    sp.add_argument("--size", type=int)

    sp = common(sub.add_parser("subsample", help="uniform subsample of a dataset"))
    sp.add_argument("--dataset", action="append")
    sp.add_argument("--size", type=int)

    sp = common(sub.add_parser("train", help="train an online or offline agent"))
    sp.add_argument("--algo")
    sp.add_argument("--dataset", action="append")
    sp.add_argument("--episodes", type=int, help="online episodes")
    sp.add_argument("--iters", type=int)
    sp.add_argument("--grad-steps", type=int)
    sp.add_argument("--csv", help="learning-curve CSV")
    sp.add_argument("--verbose", action="store_true")

    for name, text in (("eval", "evaluate one policy"), ("compare", "evaluate several policies on shared seeds")):
        sp = common(sub.add_parser(name, help=text))
        sp.add_argument("--policy", help="rw, greedy, tdm, itlinq or model:<path>" +
                        ("; comma separated" if name == "compare" else ""))
        sp.add_argument("--episodes", type=int)
        sp.add_argument("--csv")
        sp.add_argument("--window", type=int, default=0, help="moving-average window for the CSV")

    sp = sub.add_parser("rerun", help="re-execute a run manifest")
    sp.add_argument("manifest")
    sp.add_argument("--out-dir")
    return p


def main(argv=None, out=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    out = sys.stdout if out is None else out
    try:
        args = build_parser().parse_args(argv)
        args.argv = argv
        args.started = time.time()
        if args.command == "rerun":
            cmd_rerun(args, out)
        else:
            COMMANDS[args.command](args, out)
    except OmarlError as exc:
        print(f"omarl: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FloatingPointError as exc:
        print(f"omarl: numerical error: {exc}", file=sys.stderr)
        return 5
    return 0


if __name__ == "__main__":
    sys.exit(main())

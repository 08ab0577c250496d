"""Command line: train, compare, oracle, simulate, synth.

Every subcommand accepts ``--config FILE`` (JSON); explicit flags win over
the file, and the file wins over built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import baselines, oracle, traces
from .abr_env import AbrConfig
from .cls_env import ClsConfig
from .evalkit import ABR_SESSION_COLUMNS, CLS_SESSION_COLUMNS, tournament
from .rules import ABR_RULE, CLS_RULE, RuleConfig
from .selfplay import AbrTask, ClsTask, NetPolicy, PpoConfig, load_checkpoint, rollout, train

log = logging.getLogger("zwei")


class UsageError(Exception):
    pass


COMMON = {
    "task": "abr",
    "trace_dir": None,
    "trace": [],
    "synth_trace": [],
    "manifest": None,
    "ladder": "hd",
    "chunks": 48,
    "world": None,
    "world_seed": 7,
    "providers": 3,
    "seed": 0,
    "out": "out",
    "jobs": os.cpu_count() or 1,
    # env / rule overrides
    "history_len": 8,
    "buffer_cap": 60.0,
    "rtt": 0.08,
    "payload_ratio": 0.95,
    "window": 20,
    "episode_len": 288,
    "eps_primary": None,
    "eps_secondary": None,
}

DEFAULTS = {
    "train": {**COMMON, "epochs": 500, "samples": 16, "lr": 1e-4, "clip": 0.2, "entropy": 0.01,
              "ppo_epochs": 5, "eval_every": 10, "checkpoint_every": 100},
    "compare": {**COMMON, "policies": "rate,bola,mpc", "matches": 100, "alpha": 4.3},
    "simulate": {**COMMON, "policy": "rate", "alpha": 4.3},
    "oracle": {**COMMON, "max_chunks": 6, "alpha": 4.3, "trace_start": 0.0, "out": None},
    "synth": {"what": None, "kind": "fixed", "level": 1.0, "low": 0.5, "high": 3.0, "period": 20.0,
              "mean": 2.0, "sigma": 0.3, "lo": 0.2, "hi": 6.0, "duration": 200.0, "count": 1,
              "seed": 0, "ladder": "hd", "chunks": 48, "variation": 0.0, "providers": 3, "out": None},
}


@dataclass
class RunConfig:
    command: str
    values: dict = field(default_factory=dict)

    def __getattr__(self, name):
        try:
            return self.values[name]
        except KeyError:
            raise AttributeError(name) from None


def _add(p, cmd, flag, dest=None, **kw):
    dest = dest or flag.lstrip("-").replace("-", "_")
    default = DEFAULTS[cmd].get(dest)
    kw["help"] = f"{kw.get('help', '')} (default: {default})".strip()
    p.add_argument(flag, dest=dest, default=None, **kw)


def _add_common(p, cmd):
    _add(p, cmd, "--config", dest="config_file", help="JSON config file")
    _add(p, cmd, "--task", choices=["abr", "cls"])
    _add(p, cmd, "--trace-dir", help="directory of '<t> <mbps>' trace files")
    _add(p, cmd, "--trace", action="append", help="trace file (repeatable)")
    _add(p, cmd, "--synth-trace", action="append",
         help="synthetic trace spec KIND[:k=v,...], e.g. fixed:level=2.0 or random-walk:count=8,seed=1")
    _add(p, cmd, "--manifest", help="video manifest JSON")
    _add(p, cmd, "--ladder", choices=sorted(traces.LADDERS), help="built-in ladder when no manifest")
    _add(p, cmd, "--chunks", type=int, help="chunks for the built-in manifest")
    _add(p, cmd, "--world", help="CLS world dir (workload.csv, providers.json)")
    _add(p, cmd, "--world-seed", type=int, help="synthetic CLS world seed when --world is absent")
    _add(p, cmd, "--providers", type=int, help="providers in the synthetic CLS world")
    _add(p, cmd, "--seed", type=int)
    _add(p, cmd, "-o", dest="out", help="output directory")
    _add(p, cmd, "--jobs", type=int, help="concurrent rollouts")
    _add(p, cmd, "--history-len", type=int)
    _add(p, cmd, "--buffer-cap", type=float)
    _add(p, cmd, "--rtt", type=float)
    _add(p, cmd, "--payload-ratio", type=float)
    _add(p, cmd, "--window", type=int)
    _add(p, cmd, "--episode-len", type=int)
    _add(p, cmd, "--eps-primary", type=float, help="rule threshold on rebuffer (s) / stall ratio")
    _add(p, cmd, "--eps-secondary", type=float, help="rule threshold on bitrate (kbps) / cost")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="zwei", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="self-play training")
    _add_common(p, "train")
    _add(p, "train", "--epochs", type=int)
    _add(p, "train", "--samples", type=int, help="trajectories per start state (N)")
    _add(p, "train", "--lr", type=float)
    _add(p, "train", "--clip", type=float)
    _add(p, "train", "--entropy", type=float, help="entropy coefficient")
    _add(p, "train", "--ppo-epochs", type=int)
    _add(p, "train", "--eval-every", type=int)
    _add(p, "train", "--checkpoint-every", type=int)

    p = sub.add_parser("compare", help="Elo tournament between policies")
    _add_common(p, "compare")
    _add(p, "compare", "--policies",
         help="comma list: rate, bola, mpc, oracle, wrr-uniform, wrr-best, ckpt:PATH")
    _add(p, "compare", "--matches", type=int)
    _add(p, "compare", "--alpha", type=float, help="rebuffer penalty in reported QoE")

    p = sub.add_parser("simulate", help="run one policy over every trace -> sessions.csv")
    _add_common(p, "simulate")
    _add(p, "simulate", "--policy")
    _add(p, "simulate", "--alpha", type=float)

    p = sub.add_parser("oracle", help="linear- and requirement-optimal sequences (JSON)")
    _add_common(p, "oracle")
    _add(p, "oracle", "--max-chunks", type=int)
    _add(p, "oracle", "--alpha", type=float)
    _add(p, "oracle", "--trace-start", type=float)

    p = sub.add_parser("synth", help="write synthetic traces, manifests or CLS worlds")
    p.add_argument("what", choices=["trace", "manifest", "world"])
    _add(p, "synth", "--kind", choices=["fixed", "step", "random-walk"])
    for flag in ("level", "low", "high", "period", "mean", "sigma", "lo", "hi", "duration", "variation"):
        _add(p, "synth", f"--{flag}", type=float)
    _add(p, "synth", "--count", type=int, help="number of traces (random-walk seeds seed..seed+count-1)")
    _add(p, "synth", "--seed", type=int)
    _add(p, "synth", "--ladder", choices=sorted(traces.LADDERS))
    _add(p, "synth", "--chunks", type=int)
    _add(p, "synth", "--providers", type=int)
    _add(p, "synth", "-o", dest="out", help="output file or directory")
    return parser


def resolve(args: argparse.Namespace) -> RunConfig:
    values = dict(DEFAULTS[args.command])
    cfg_file = getattr(args, "config_file", None)
    if cfg_file:
        path = Path(cfg_file)
        if not path.is_file():
            raise UsageError(f"config file not found: {path}")
        values.update({k.replace("-", "_"): v for k, v in json.loads(path.read_text()).items()})
    for k, v in vars(args).items():
        if v is not None and k not in ("command", "config_file"):
            values[k] = v
    return RunConfig(args.command, values)


def _parse_spec(spec: str) -> tuple[str, dict]:
    kind, _, rest = spec.partition(":")
    params = {}
    for item in filter(None, rest.split(",")):
        k, _, v = item.partition("=")
        params[k.strip()] = float(v)
    return kind, params


def load_traces(cfg: RunConfig) -> list:
    out = []
    if cfg.trace_dir:
        out += traces.load_trace_dir(cfg.trace_dir)
    for path in cfg.trace or []:
        if not Path(path).is_file():
            raise UsageError(f"trace file not found: {path}")
        out.append(traces.load_network_trace(path))
    for spec in cfg.synth_trace or []:
        kind, params = _parse_spec(spec)
        count = int(params.pop("count", 1))
        seed = int(params.pop("seed", cfg.seed))
        out += [traces.synth_network_trace(kind, params, seed + i) for i in range(count)]
    if not out:
        raise UsageError("no traces: pass --trace-dir, --trace or --synth-trace")
    return out


def load_manifest(cfg: RunConfig):
    if cfg.manifest:
        if not Path(cfg.manifest).is_file():
            raise UsageError(f"manifest not found: {cfg.manifest}")
        return traces.load_manifest(cfg.manifest)
    return traces.synth_manifest(traces.LADDERS[cfg.ladder], cfg.chunks)


def _rule_cfg(cfg: RunConfig, default: RuleConfig) -> RuleConfig:
    return RuleConfig(
        default.eps_primary if cfg.eps_primary is None else cfg.eps_primary,
        default.eps_secondary if cfg.eps_secondary is None else cfg.eps_secondary,
    )


def abr_config(cfg: RunConfig) -> AbrConfig:
    return AbrConfig(history_len=cfg.history_len, buffer_cap=cfg.buffer_cap, rtt=cfg.rtt,
                     payload_ratio=cfg.payload_ratio)


def build_task(cfg: RunConfig):
    if cfg.task == "abr":
        return AbrTask(load_traces(cfg), load_manifest(cfg), abr_config(cfg), _rule_cfg(cfg, ABR_RULE))
    if cfg.world:
        if not Path(cfg.world).is_dir():
            raise UsageError(f"world directory not found: {cfg.world}")
        world = traces.load_cls_world(cfg.world)
    else:
        world = traces.synth_cls_world(cfg.providers, cfg.world_seed)
    return ClsTask(world, ClsConfig(window=cfg.window, episode_len=cfg.episode_len), _rule_cfg(cfg, CLS_RULE))


def make_policy(spec: str, task, seed: int = 0):
    spec = spec.strip()
    if spec.startswith("ckpt:"):
        path = Path(spec[5:])
        if not path.is_file():
            raise UsageError(f"checkpoint not found: {path}")
        try:
            doc, net, _ = load_checkpoint(path)
        except (ValueError, KeyError) as e:
            raise UsageError(f"unloadable checkpoint {path}: {e}") from None
        if doc.get("task") != task.kind or net.n_in != task.obs_dim:
            raise UsageError(f"checkpoint {path} does not fit this {task.kind} task")
        return NetPolicy(net, task.kind)
    if task.kind == "abr":
        if spec in baselines.ABR_BASELINES:
            return baselines.ABR_BASELINES[spec]()
        if spec in ("oracle", "oracle-requirement"):
            return oracle.OraclePolicy("requirement")
        if spec == "oracle-linear":
            return oracle.OraclePolicy("linear")
    else:
        if spec == "wrr-uniform":
            return baselines.uniform_wrr(len(task.world.providers))
        if spec == "wrr-best":
            return baselines.best_wrr(task.world, task.config)
    raise UsageError(f"unknown {task.kind} policy {spec!r}")


def _policy_name(spec: str) -> str:
    return spec.strip()


def cmd_train(cfg: RunConfig) -> int:
    task = build_task(cfg)
    ppo = PpoConfig(clip=cfg.clip, entropy_coef=cfg.entropy, epochs=cfg.ppo_epochs,
                    n_samples=cfg.samples, lr=cfg.lr)
    out = Path(cfg.out)
    res = train(task, ppo, cfg.epochs, cfg.seed, out, eval_every=cfg.eval_every,
                checkpoint_every=cfg.checkpoint_every)
    rows = res["rows"]
    evals = [r for r in rows if r[5] is not None]
    if evals:
        last = evals[-1]
        label = ("avg_bitrate_kbps", "rebuffer_s") if task.kind == "abr" else ("avg_stall", "total_cost")
        print(f"epoch {last[0]}: {label[0]}={last[5]:.6g} {label[1]}={last[6]:.6g}")
    print(f"wrote {out / 'train_log.csv'}")
    return 0


def cmd_compare(cfg: RunConfig) -> int:
    specs = [s for s in cfg.policies.split(",") if s.strip()] if isinstance(cfg.policies, str) \
        else list(cfg.policies)
    if len(specs) < 2:
        raise UsageError("compare needs at least 2 policies")
    task = build_task(cfg)
    policies = {_policy_name(s): make_policy(s, task, cfg.seed) for s in specs}
    res = tournament(policies, task, cfg.matches, cfg.seed, cfg.alpha, jobs=cfg.jobs)
    cols = ABR_SESSION_COLUMNS if task.kind == "abr" else CLS_SESSION_COLUMNS
    res.write(cfg.out, cols)
    for name in res.names:
        print(f"{name:>16s}  elo {res.elo.ratings[name]:8.2f}")
    if res.failures:
        print(f"{res.failures} rollouts failed and were skipped", file=sys.stderr)
    return 0


def cmd_simulate(cfg: RunConfig) -> int:
    import csv
    from .evalkit import session_row
    task = build_task(cfg)
    policy = make_policy(cfg.policy, task, cfg.seed)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    cols = ABR_SESSION_COLUMNS if task.kind == "abr" else CLS_SESSION_COLUMNS
    starts = [(i, 0.0) for i in range(len(task.traces))] if task.kind == "abr" else [0]
    with open(out / "sessions.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["policy", "trace", *cols])
        for st in starts:
            s = rollout(task, policy, st)
            _, row = session_row(task.kind, s, cfg.alpha)
            name = task.traces[st[0]].name if task.kind == "abr" else "world"
            w.writerow([cfg.policy, name, *(f"{x:.10g}" for x in row)])
    print(f"wrote {out / 'sessions.csv'}")
    return 0


def cmd_oracle(cfg: RunConfig) -> int:
    if cfg.max_chunks > oracle.MAX_CHUNKS:
        raise UsageError(f"--max-chunks {cfg.max_chunks} exceeds the enumeration limit {oracle.MAX_CHUNKS}")
    trace = load_traces(cfg)[0]
    res = oracle.both_optima(trace, load_manifest(cfg), abr_config(cfg), cfg.alpha, cfg.max_chunks,
                             cfg.trace_start)
    doc = {"trace": trace.name, "alpha": cfg.alpha, "max_chunks": cfg.max_chunks,
           **{k: v.to_json() for k, v in res.items()}}
    text = json.dumps(doc, indent=2)
    if cfg.out:
        Path(cfg.out).write_text(text + "\n")
    print(text)
    return 0


def cmd_synth(cfg: RunConfig) -> int:
    if not cfg.out:
        raise UsageError("synth needs -o")
    out = Path(cfg.out)
    if cfg.what == "trace":
        params = {k: cfg.values[k] for k in ("level", "low", "high", "period", "mean", "sigma", "lo", "hi",
                                              "duration")}
        if cfg.count == 1:
            out.parent.mkdir(parents=True, exist_ok=True)
            traces.write_network_trace(traces.synth_network_trace(cfg.kind, params, cfg.seed), out)
        else:
            out.mkdir(parents=True, exist_ok=True)
            for i in range(cfg.count):
                tr = traces.synth_network_trace(cfg.kind, params, cfg.seed + i)
                traces.write_network_trace(tr, out / f"{cfg.kind}_{cfg.seed + i:04d}.txt")
    elif cfg.what == "manifest":
        out.parent.mkdir(parents=True, exist_ok=True)
        traces.write_manifest(traces.synth_manifest(traces.LADDERS[cfg.ladder], cfg.chunks,
                                                    variation=cfg.variation, seed=cfg.seed), out)
    else:
        traces.write_cls_world(traces.synth_cls_world(cfg.providers, cfg.seed), out)
    print(f"wrote {out}")
    return 0


COMMANDS = {"train": cmd_train, "compare": cmd_compare, "simulate": cmd_simulate, "oracle": cmd_oracle,
            "synth": cmd_synth}


def setup_logging() -> None:
    level = os.environ.get("ZWEI_LOG", "error").upper()
    logging.basicConfig(level=getattr(logging, level, logging.ERROR), format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve(args)
        return COMMANDS[cfg.command](cfg)
    except (UsageError, traces.TraceError, ValueError, OSError) as e:
        print(f"zwei {args.command}: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

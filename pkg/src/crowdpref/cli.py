"""Command-line pipeline: generate -> annotate -> train -> evaluate.

Every stage reads and writes files under ``<output_dir>/seed-<n>/``, so
stages can be rerun on their own. Example::

    crowdpref run-all --config configs/gridworld.ini
    crowdpref train --config configs/gridworld.ini --variant dcbt --seed 0
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import math
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from . import aggregate, core, crowd, envgen, policy, prefmodels
from .envgen import Mdp
from .prefmodels import PreferenceModel, TrainConfig, Variant

VARIANTS = ("bt", "mv", "crowd-bt", "dcbt-no-collab", "dcbt")
ORACLE = "true"
REPORT_COLUMNS = ("variant", "seed", "avg_return", "pearson", "spearman", "label_error_raw", "label_error_mv")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DataConfig:
    n_trajectories: int = 2000
    horizon: int = 30
    t_c: int = 30
    n_clips: int = 2000
    n_queries: int = 1000
    labels_per_query: int = 5


@dataclass(frozen=True)
class EvalConfig:
    episodes: int = 200
    horizon: int = 100
    q_iterations: int = 60
    q_lr: float = 0.5


@dataclass(frozen=True)
class ExperimentConfig:
    env: dict
    data: DataConfig
    crowd: dict
    train: dict
    eval: EvalConfig
    seeds: tuple[int, ...]
    output_dir: Path
    variants: tuple[str, ...] = field(default=(ORACLE,) + VARIANTS)

    def mdp(self) -> Mdp:
        return envgen.gridworld_from_section(self.env)

    def crowd_config(self, seed: int) -> crowd.CrowdConfig:
        return crowd.CrowdConfig(seed=seed, **self.crowd)

    def train_config(self, variant: str) -> TrainConfig:
        name = "bt" if variant == "mv" else variant
        return TrainConfig(variant=Variant(name), **self.train)

    def seed_dir(self, seed: int) -> Path:
        return self.output_dir / f"seed-{seed}"


def _typed(cls, section: configparser.SectionProxy | dict, name: str) -> dict:
    """Convert a section's strings to the field types of dataclass ``cls``."""
    known = {f.name: f for f in fields(cls)}
    out = {}
    for key, raw in section.items():
        if key not in known:
            raise ConfigError(f"[{name}] unknown key {key!r}")
        kind = str(known[key].type)
        text = raw.strip()
        try:
            if text.lower() in ("", "none") and "None" in kind:
                out[key] = None
            elif kind.startswith("bool"):
                out[key] = text.lower() in ("1", "true", "yes", "on")
            elif kind.startswith("int"):
                out[key] = int(text)
            elif kind.startswith("float"):
                out[key] = float(text)
            elif kind.startswith("tuple"):
                out[key] = tuple(float(v) if "." in v else int(v) for v in text.replace(",", " ").split())
            else:
                out[key] = text
        except ValueError:
            raise ConfigError(f"[{name}] bad value for {key}: {raw!r}") from None
    return out


def load_config(path: str | Path, *, seed: int | None = None, output_dir: str | Path | None = None) -> ExperimentConfig:
    """Parse and fully validate an experiment config without touching the filesystem beyond reading it."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc.message}") from None
    for name in ("env", "data", "crowd", "train", "eval", "experiment"):
        if not parser.has_section(name):
            raise ConfigError(f"config {path} has no [{name}] section")

    exp = parser["experiment"]
    try:
        seeds = tuple(int(s) for s in exp.get("seeds", "0").replace(",", " ").split())
    except ValueError:
        raise ConfigError("[experiment] seeds must be integers") from None
    if seed is not None:
        seeds = (seed,)
    if not seeds:
        raise ConfigError("[experiment] seeds is empty")
    variants = tuple(v.strip() for v in exp.get("variants", ",".join((ORACLE,) + VARIANTS)).split(",") if v.strip())
    for v in variants:
        if v not in VARIANTS + (ORACLE,):
            raise ConfigError(f"[experiment] unknown variant {v!r}")
    out = Path(output_dir if output_dir is not None else exp.get("output_dir", "runs"))

    crowd_keys = _typed(crowd.CrowdConfig, parser["crowd"], "crowd")
    if "seed" in crowd_keys:
        raise ConfigError("[crowd] seed is taken from [experiment] seeds")
    train_keys = _typed(TrainConfig, parser["train"], "train")
    if "variant" in train_keys:
        raise ConfigError("[train] variant is chosen with --variant")
    cfg = ExperimentConfig(
        env=dict(parser["env"]),
        data=DataConfig(**_typed(DataConfig, parser["data"], "data")),
        crowd=crowd_keys,
        train=train_keys,
        eval=EvalConfig(**_typed(EvalConfig, parser["eval"], "eval")),
        seeds=seeds,
        output_dir=out,
        variants=variants,
    )
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig) -> None:
    try:
        cfg.mdp()
        for s in cfg.seeds:
            cfg.crowd_config(s)
        for v in VARIANTS:
            cfg.train_config(v)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"invalid config: {exc}") from None
    d, e = cfg.data, cfg.eval
    if min(d.n_trajectories, d.horizon, d.t_c, d.n_clips, d.n_queries, d.labels_per_query) < 1:
        raise ConfigError("[data] counts must be positive")
    available = d.n_trajectories * (d.horizon // d.t_c)
    if d.n_clips > available:
        raise ConfigError(f"[data] n_clips={d.n_clips} but trajectories yield only {available} clips")
    if d.n_queries > d.n_clips * (d.n_clips - 1) // 2:
        raise ConfigError(f"[data] n_queries={d.n_queries} exceeds the number of distinct clip pairs")
    cc = cfg.crowd_config(cfg.seeds[0])
    if d.labels_per_query > cc.max_annotators_per_query:
        raise ConfigError("[data] labels_per_query exceeds [crowd] max_annotators_per_query")
    if d.n_queries * d.labels_per_query > cc.n_annotators * cc.max_queries_per_annotator:
        raise ConfigError("[data] label budget exceeds what the annotator pool can give")
    if min(e.episodes, e.horizon, e.q_iterations) < 1 or e.q_lr <= 0:
        raise ConfigError("[eval] episodes, horizon, q_iterations and q_lr must be positive")


# --------------------------------------------------------------------------
# Stages

def cmd_generate(cfg: ExperimentConfig, seed: int) -> Path:
    mdp = cfg.mdp()
    trajs = envgen.generate_trajectories(mdp, cfg.data.n_trajectories, cfg.data.horizon, seed)
    clips = envgen.clip_trajectories(trajs, cfg.data.t_c)[:cfg.data.n_clips]
    out = cfg.seed_dir(seed)
    out.mkdir(parents=True, exist_ok=True)
    core.write_clips(out / "clips.txt", clips)
    with open(out / "clips.scores", "w") as fh:
        for clip in clips:
            fh.write(f"{clip.id},{envgen.true_clip_score(clip, mdp)!r}\n")
    return out / "clips.txt"


def _require(path: Path, stage: str) -> Path:
    if not path.exists():
        raise FileNotFoundError(f"{path} is missing; run `{stage}` first")
    return path


def cmd_annotate(cfg: ExperimentConfig, seed: int) -> Path:
    out = cfg.seed_dir(seed)
    clips = core.read_clips(_require(out / "clips.txt", "generate"))
    dataset, truth = crowd.build_dataset(clips, cfg.mdp(), cfg.data.n_queries, cfg.data.labels_per_query,
                                         cfg.crowd_config(seed))
    core.write_records(out / "dataset.txt", dataset.records)
    crowd.write_truth(out / "dataset.truth", dataset, truth)
    return out / "dataset.txt"


def load_run_dataset(cfg: ExperimentConfig, seed: int) -> core.PreferenceDataset:
    out = cfg.seed_dir(seed)
    return core.load_dataset(_require(out / "clips.txt", "generate"), _require(out / "dataset.txt", "annotate"),
                             cfg.crowd_config(seed).n_annotators)


def cmd_train(cfg: ExperimentConfig, seed: int, variant: str) -> Path:
    if variant not in VARIANTS:
        raise ConfigError(f"cannot train variant {variant!r}; choose from {', '.join(VARIANTS)}")
    dataset = load_run_dataset(cfg, seed)
    if variant == "mv":
        dataset = aggregate.mv_collapse(dataset, seed)
    mdp = cfg.mdp()
    result = prefmodels.train(dataset, cfg.train_config(variant), seed,
                              n_states=mdp.n_states, n_actions=mdp.n_actions)
    out = cfg.seed_dir(seed) / variant
    out.mkdir(parents=True, exist_ok=True)
    result.model.save(out / "checkpoint.npz")
    prefmodels.write_log(out / "train_log.csv", result.log)
    return out / "checkpoint.npz"


def reward_table(cfg: ExperimentConfig, seed: int, variant: str) -> np.ndarray:
    if variant == ORACLE:
        return cfg.mdp().true_reward
    path = _require(cfg.seed_dir(seed) / variant / "checkpoint.npz", "train")
    return PreferenceModel.load(path).reward.reward_table()


def evaluate_row(cfg: ExperimentConfig, seed: int, variant: str) -> dict:
    mdp = cfg.mdp()
    out = cfg.seed_dir(seed)
    clips = core.read_clips(_require(out / "clips.txt", "generate"))
    table = reward_table(cfg, seed, variant)
    terminal = sorted(mdp.state(x, y) for x, y in mdp.goals) if cfg.env.get("goal_mode", "absorb") == "absorb" else ()
    transitions = policy.relabel(clips, table, terminal)
    q = policy.offline_q_learning(transitions, mdp.n_states, mdp.n_actions, mdp.gamma,
                                  cfg.eval.q_iterations, cfg.eval.q_lr)
    avg_return = policy.evaluate_policy(mdp, q, cfg.eval.episodes, cfg.eval.horizon, seed)
    pearson, spearman = policy.reward_alignment(table, mdp)

    dataset = load_run_dataset(cfg, seed)
    truth = crowd.read_truth(_require(out / "dataset.truth", "annotate"), dataset.n_annotators)
    query_truth = truth.query_truth(dataset)
    return {
        "variant": variant,
        "seed": seed,
        "avg_return": avg_return,
        "pearson": pearson,
        "spearman": spearman,
        "label_error_raw": aggregate.label_error_rate(dataset, truth),
        "label_error_mv": aggregate.label_error_rate(aggregate.mv_collapse(dataset, seed), query_truth),
    }


def _fmt(value) -> str:
    if isinstance(value, float):
        return "nan" if math.isnan(value) else repr(value)
    return str(value)


def write_report(path: Path, rows: Sequence[dict]) -> None:
    order = {v: k for k, v in enumerate((ORACLE,) + VARIANTS)}
    rows = sorted(rows, key=lambda r: (int(r["seed"]), order.get(r["variant"], len(order)), r["variant"]))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in REPORT_COLUMNS])
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue())


def read_report(path: Path) -> list[dict]:
    if not path.exists():
        return []
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def cmd_evaluate(cfg: ExperimentConfig, seed: int, variant: str) -> Path:
    """Evaluate one (variant, seed) and upsert its row in ``<output_dir>/report.csv``."""
    if variant not in VARIANTS + (ORACLE,):
        raise ConfigError(f"unknown variant {variant!r}")
    row = evaluate_row(cfg, seed, variant)
    path = cfg.output_dir / "report.csv"
    rows = [r for r in read_report(path) if not (r["variant"] == variant and int(r["seed"]) == seed)]
    write_report(path, rows + [row])
    return path


def cmd_run_all(cfg: ExperimentConfig, variants: Sequence[str]) -> Path:
    rows = []
    for seed in cfg.seeds:
        cmd_generate(cfg, seed)
        cmd_annotate(cfg, seed)
        for v in variants:
            if v != ORACLE:
                cmd_train(cfg, seed, v)
            rows.append(evaluate_row(cfg, seed, v))
    path = cfg.output_dir / "report.csv"
    write_report(path, rows)
    return path


# --------------------------------------------------------------------------
# Entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crowdpref", description="Reward learning from crowd-sourced preferences.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("generate", "roll out trajectories and cut clips"),
                       ("annotate", "simulate crowd labels on clip pairs"),
                       ("train", "fit a preference model"),
                       ("evaluate", "learn a policy from the reward and score it"),
                       ("run-all", "every stage for every seed and variant")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="experiment .ini file")
        p.add_argument("--seed", type=int, help="run only this seed")
        p.add_argument("--output-dir", help="override [experiment] output_dir")
        if name in ("train", "evaluate"):
            p.add_argument("--variant", required=True, choices=VARIANTS + ((ORACLE,) if name == "evaluate" else ()))
        elif name == "run-all":
            p.add_argument("--variant", action="append", choices=VARIANTS + (ORACLE,),
                           help="restrict to this variant (repeatable)")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, seed=args.seed, output_dir=args.output_dir)
        if args.command == "run-all":
            print(cmd_run_all(cfg, args.variant or cfg.variants))
            return 0
        for seed in cfg.seeds:
            if args.command == "generate":
                print(cmd_generate(cfg, seed))
            elif args.command == "annotate":
                print(cmd_annotate(cfg, seed))
            elif args.command == "train":
                print(cmd_train(cfg, seed, args.variant))
            else:
                print(cmd_evaluate(cfg, seed, args.variant))
    except (ConfigError, FileNotFoundError, crowd.InfeasibleBudget, prefmodels.TrainingDiverged) as exc:
        print(f"crowdpref: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"crowdpref: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

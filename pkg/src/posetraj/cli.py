"""Command-line entry point.

Subcommands: generate, train, eval, perturb, attention, navsim, plot.
Each invocation resolves a configuration (defaults < config file <
``--section.key value`` flags), writes its artifacts into a fresh run
directory named ``<timestamp>-<subcommand>-<confighash>``, and echoes the
resolved configuration into every artifact so a run can be reproduced
from what it wrote.

Exit codes: 0 success, 1 configuration error (the message names the
offending key or flag), 2 data error (missing or corrupt input), 3
numeric failure (non-finite values).  The run-directory root comes from
``paths.runs``, or the POSETRAJ_RUNS environment variable when that is
left at its default.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import analysis, navsim, plots
from .backbones import ModelConfig, build_model
from .checkpoint import load_checkpoint, save_checkpoint
from .config import DEFAULTS, apply_overrides, config_hash, load_config
from .errors import ConfigError, DataError, NumericError
from .metrics import MetricsReport
from .scenes import (
    JOINT_INDEX,
    JOINT_NAMES,
    CategorizerConfig,
    read_scenes,
    write_scenes,
)
from .synth import (
    CameraConfig,
    GaitModel,
    WorldConfig,
    generate_corpus,
    generate_crossing_corpus,
    project_to_2d,
)
from .training import TrainConfig, evaluate_model, predict_corpus, train

RUNS_ENV_VAR = "POSETRAJ_RUNS"

COMMANDS = ("generate", "train", "eval", "perturb", "attention", "navsim", "plot")


class _Parser(argparse.ArgumentParser):
    """argparse that reports problems as ConfigError instead of exiting."""

    def error(self, message):
        raise ConfigError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="posetraj", description=__doc__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(p):
        p.add_argument("--config", help="INI config file")
        p.add_argument("--seed", type=int, help="override seed.value")

    p = sub.add_parser("generate", help="synthesize a scene corpus")
    common(p)
    p.add_argument("--scenes", type=int, help="override world.n_scenes")
    p.add_argument("--out", help="corpus path (default: run dir)")

    p = sub.add_parser("train", help="train a prediction model")
    common(p)
    p.add_argument("--corpus", help="training corpus (JSONL)")
    p.add_argument("--pose", choices=["on", "off"], help="override pose.enabled")
    p.add_argument("--epochs", type=int, help="override train.epochs")

    p = sub.add_parser("eval", help="evaluate a checkpoint on a corpus")
    common(p)
    p.add_argument("--model", help="checkpoint path")
    p.add_argument("--corpus", help="evaluation corpus (JSONL)")
    p.add_argument("--k", type=int, help="override eval.k (best-of-k)")

    p = sub.add_parser("perturb", help="write a perturbed copy of a corpus")
    common(p)
    p.add_argument("--corpus", help="input corpus (JSONL)")
    p.add_argument("--kind", help="override eval.perturb_kind")
    p.add_argument("--out", help="output corpus path (default: run dir)")

    p = sub.add_parser("attention", help="rank joints by encoder attention")
    common(p)
    p.add_argument("--model", help="checkpoint path")
    p.add_argument("--corpus", help="corpus (JSONL)")

    p = sub.add_parser("navsim", help="run the navigation suite")
    common(p)
    p.add_argument("--corpus", help="scene corpus to replay (JSONL)")
    p.add_argument("--predictor", choices=list(navsim.PREDICTORS),
                   help="override navsim.predictor")
    p.add_argument("--model", help="checkpoint for the learned predictor")

    p = sub.add_parser("plot", help="render figures from reports")
    common(p)
    p.add_argument("--kind", choices=["trajectories", "attention", "navigation"],
                   required=True)
    p.add_argument("--report", nargs="+", required=True,
                   help="report.json file(s) from a previous run")

    return parser


def _resolve_config(args, overrides) -> dict:
    config = load_config(args.config)
    flag_map = {
        "seed": ("seed", "value"),
        "scenes": ("world", "n_scenes"),
        "corpus": ("paths", "corpus"),
        "model": ("paths", "model"),
        "out": ("paths", "out"),
        "epochs": ("train", "epochs"),
        "k": ("eval", "k"),
        "kind": ("eval", "perturb_kind"),
        "predictor": ("navsim", "predictor"),
    }
    if args.command == "plot":
        del flag_map["kind"]  # plot's --kind selects the figure, not a perturbation
    for flag, (section, key) in flag_map.items():
        value = getattr(args, flag, None)
        if value is not None:
            config[section][key] = value
    if getattr(args, "pose", None) is not None:
        config["pose"]["enabled"] = args.pose == "on"
    apply_overrides(config, overrides)
    return config


def _make_run_dir(config: dict, command: str) -> Path:
    root = config["paths"]["runs"]
    if root == DEFAULTS["paths"]["runs"]:
        root = os.environ.get(RUNS_ENV_VAR, root)
    stamp = time.strftime("%Y%m%d-%H%M%S")
    base = Path(root) / f"{stamp}-{command}-{config_hash(config)}"
    run_dir = base
    n = 1
    while run_dir.exists():
        n += 1
        run_dir = base.with_name(f"{base.name}-{n}")
    run_dir.mkdir(parents=True)
    return run_dir


def _write_report(run_dir: Path, command: str, config: dict, payload: dict) -> Path:
    report = {"command": command, "config": config,
              "seed": config["seed"]["value"], **payload}
    path = run_dir / "report.json"
    path.write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")
    return path


def _read_corpus(config: dict):
    path = config["paths"]["corpus"]
    if not path:
        raise ConfigError("paths.corpus is required (set --corpus or the config key)")
    if not Path(path).exists():
        raise DataError(f"corpus file {path} does not exist")
    scenes = read_scenes(path)
    if not scenes:
        raise DataError(f"corpus file {path} contains no scenes")
    return scenes


def _load_model(config: dict):
    path = config["paths"]["model"]
    if not path:
        raise ConfigError("paths.model is required (set --model or the config key)")
    if not Path(path).exists():
        raise DataError(f"checkpoint {path} does not exist")
    model, extra = load_checkpoint(path)
    return model, extra


def _check_model_corpus(model, scenes) -> None:
    scene = scenes[0]
    cfg = model.cfg
    if cfg.t_obs != scene.t_obs or cfg.t_pred != scene.t_pred:
        raise ConfigError(
            f"world.t_obs/t_pred mismatch: model expects {cfg.t_obs}/{cfg.t_pred} "
            f"frames, corpus provides {scene.t_obs}/{scene.t_pred}"
        )
    if cfg.use_pose:
        if cfg.n_joints != scene.n_joints:
            raise ConfigError(
                f"pose joint-count mismatch: model expects {cfg.n_joints}, "
                f"corpus provides {scene.n_joints}"
            )
        if cfg.pose_dims != scene.pose_dims:
            raise ConfigError(
                f"pose.enabled with incompatible corpus: model expects "
                f"{cfg.pose_dims}D joints, corpus provides {scene.pose_dims}D"
            )


def _parse_keep_joints(text: str) -> list[int]:
    if not text.strip():
        raise ConfigError("eval.keep_joints is required for the restrict perturbation")
    keep = []
    for token in text.split(","):
        token = token.strip()
        if not token:
            continue
        if token in JOINT_INDEX:
            keep.append(JOINT_INDEX[token])
        else:
            try:
                keep.append(int(token))
            except ValueError as exc:
                raise ConfigError(f"eval.keep_joints: unknown joint {token!r}") from exc
    return keep


def _perturbed(scenes, config: dict):
    kind = config["eval"]["perturb_kind"]
    if not kind:
        return scenes
    seed = config["seed"]["value"]
    if kind == "restrict":
        keep = _parse_keep_joints(config["eval"]["keep_joints"])
        return [analysis.restrict_joints(s, keep) for s in scenes]
    try:
        pert = analysis.Perturbation(
            kind=kind,
            std=config["eval"]["perturb_std"],
            scheme=config["eval"]["perturb_scheme"],
            seed=seed,
        )
    except ValueError as exc:
        raise ConfigError(f"eval.perturb_kind: {exc}") from exc
    return pert.apply(scenes)


def _model_config(config: dict, scene) -> ModelConfig:
    b, p, w = config["backbone"], config["pose"], config["world"]
    return ModelConfig(
        family=b["family"],
        embed_dim=b["embed_dim"],
        hidden_dim=b["hidden_dim"],
        interaction=b["interaction"],
        interaction_dim=b["interaction_dim"] or None,
        noise_dim=b["noise_dim"],
        use_pose=p["enabled"],
        pose_dim=p["dim"],
        pose_layers=p["layers"],
        pose_heads=p["heads"],
        pose_tokenization=p["tokenization"],
        pose_pooling=p["pooling"],
        fusion=p["fusion"],
        t_obs=scene.t_obs,
        t_pred=scene.t_pred,
        n_joints=scene.n_joints,
        pose_dims=scene.pose_dims,
        seed=config["seed"]["value"],
    )


# ---------------------------------------------------------------------------
# subcommands


def _cmd_generate(config: dict, run_dir: Path) -> None:
    w, g = config["world"], config["gait"]
    seed = config["seed"]["value"]
    gait = GaitModel(
        step_frequency=g["step_frequency"],
        stride_amplitude=g["stride_amplitude"],
        lead_time=g["lead_time"],
        noise_std=g["noise_std"],
    )
    categorizer = CategorizerConfig(
        static_eps=config["eval"]["static_eps"],
        linear_eps=config["eval"]["linear_eps"],
        interaction_radius=config["eval"]["interaction_radius"],
    )
    if w["kind"] == "random":
        world = WorldConfig(
            n_agents=(w["n_agents_min"], w["n_agents_max"]),
            speed=(w["speed_min"], w["speed_max"]),
            turn_prob=w["turn_prob"],
            turn_angle=(w["turn_angle_min"], w["turn_angle_max"]),
            bounds=(w["bounds_min"], w["bounds_min"], w["bounds_max"], w["bounds_max"]),
            frame_rate=w["frame_rate"],
            turn_rate=w["turn_rate"],
            seed=seed,
        )
        scenes = generate_corpus(world, gait, w["n_scenes"],
                                 t_obs=w["t_obs"], t_pred=w["t_pred"],
                                 categorizer=categorizer)
    elif w["kind"] == "crossing":
        scenes = generate_crossing_corpus(
            w["n_scenes"],
            seed=seed,
            frame_rate=w["frame_rate"],
            t_obs=w["t_obs"],
            t_pred=w["t_pred"],
            n_crossers=(w["n_agents_min"], w["n_agents_max"]),
            gait=gait,
        )
    else:
        raise ConfigError(f"world.kind must be 'random' or 'crossing', got {w['kind']!r}")

    if w["project_2d"]:
        camera = CameraConfig(
            position=(w["camera_x"], w["camera_y"], w["camera_z"]),
            look_at=(w["look_x"], w["look_y"], w["look_z"]),
            focal=w["focal"],
        )
        scenes = [project_to_2d(s, camera) for s in scenes]

    out = Path(config["paths"]["out"]) if config["paths"]["out"] else run_dir / "corpus.jsonl"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_scenes(scenes, out)
    counts: dict[str, int] = {}
    for scene in scenes:
        counts[scene.category.value] = counts.get(scene.category.value, 0) + 1
    _write_report(run_dir, "generate", config, {
        "corpus": str(out),
        "n_scenes": len(scenes),
        "categories": dict(sorted(counts.items())),
    })
    print(f"wrote {len(scenes)} scenes to {out}")


def _cmd_train(config: dict, run_dir: Path) -> None:
    scenes = _read_corpus(config)
    t = config["train"]
    n_val = int(round(t["val_fraction"] * len(scenes)))
    train_scenes = scenes[: len(scenes) - n_val]
    val_scenes = scenes[len(scenes) - n_val :] or None
    if not train_scenes:
        raise ConfigError("train.val_fraction leaves no training scenes")

    model = build_model(_model_config(config, scenes[0]))
    cfg = TrainConfig(
        epochs=t["epochs"],
        batch_size=t["batch_size"],
        lr=t["lr"] or None,
        lr_decay=t["lr_decay"],
        lr_step=t["lr_step"],
        seed=config["seed"]["value"],
        noise_frac=t["noise_frac"],
        noise_std=t["noise_std"],
        early_stop_patience=t["early_stop_patience"] or None,
    )
    history = train(model, train_scenes, cfg, val_scenes=val_scenes,
                    run_dir=run_dir if t["epoch_checkpoints"] else None)

    save_checkpoint(model, run_dir / "model.json",
                    extra={"config": config, "seed": cfg.seed,
                           "epochs_run": len(history)})
    fields = list(history[0].keys())
    with (run_dir / "loss.csv").open("w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=fields)
        writer.writeheader()
        for row in history:
            writer.writerow({k: row.get(k, "") for k in fields})
    _write_report(run_dir, "train", config, {
        "model": str(run_dir / "model.json"),
        "history": history,
    })
    last = history[-1]
    line = f"epoch {last['epoch']}: train_loss {last['train_loss']:.6f}"
    if "val_loss" in last:
        line += f", val_loss {last['val_loss']:.6f}"
    print(line)
    print(f"checkpoint: {run_dir / 'model.json'}")


def _format_table(report: MetricsReport) -> str:
    with_aswaee = report.aswaee is not None
    headers = ["category", "n", "ADE", "FDE"] + (["ASWAEE"] if with_aswaee else [])
    rows = []
    for name in sorted(report.per_category):
        stats = report.per_category[name]
        row = [name, str(stats["n_scenes"]), f"{stats['ade']:.4f}", f"{stats['fde']:.4f}"]
        if with_aswaee:
            row.append(f"{stats['aswaee']:.4f}")
        rows.append(row)
    row = ["all", str(report.n_scenes), f"{report.ade:.4f}", f"{report.fde:.4f}"]
    if with_aswaee:
        row.append(f"{report.aswaee:.4f}")
    rows.append(row)
    widths = [max(len(headers[i]), *(len(r[i]) for r in rows)) for i in range(len(headers))]
    lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(headers))]
    for r in rows:
        lines.append("  ".join(r[i].ljust(widths[i]) for i in range(len(r))))
    return "\n".join(lines)


def _cmd_eval(config: dict, run_dir: Path) -> None:
    model, _ = _load_model(config)
    scenes = _read_corpus(config)
    _check_model_corpus(model, scenes)
    scenes = _perturbed(scenes, config)
    k = config["eval"]["k"]
    if k < 1:
        raise ConfigError("eval.k must be >= 1")
    seed = config["seed"]["value"]
    report = evaluate_model(model, scenes, k=k, seed=seed)

    n_examples = min(config["eval"]["examples"], len(scenes))
    predictions = predict_corpus(model, scenes[:n_examples], k=k, seed=seed)
    examples = []
    for i in range(n_examples):
        scene = scenes[i]
        examples.append({
            "scene": i,
            "category": scene.category.value,
            "observed": scene.primary.positions[: scene.t_obs].tolist(),
            "future": scene.primary.positions[scene.t_obs :].tolist(),
            "predictions": predictions[i].tolist(),
        })
    _write_report(run_dir, "eval", config, {
        "model": config["paths"]["model"],
        "k": k,
        "metrics": report.to_dict(),
        "examples": examples,
    })
    print(_format_table(report))


def _cmd_perturb(config: dict, run_dir: Path) -> None:
    scenes = _read_corpus(config)
    if not config["eval"]["perturb_kind"]:
        raise ConfigError("eval.perturb_kind is required (set --kind or the config key)")
    perturbed = _perturbed(scenes, config)
    out = Path(config["paths"]["out"]) if config["paths"]["out"] else run_dir / "corpus.jsonl"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_scenes(perturbed, out)
    _write_report(run_dir, "perturb", config, {
        "corpus": str(out),
        "n_scenes": len(perturbed),
        "kind": config["eval"]["perturb_kind"],
    })
    print(f"wrote {len(perturbed)} perturbed scenes to {out}")


def _cmd_attention(config: dict, run_dir: Path) -> None:
    model, _ = _load_model(config)
    scenes = _read_corpus(config)
    _check_model_corpus(model, scenes)
    scores = analysis.joint_attention(model, scenes)
    k = config["eval"]["top_joints"]
    top = analysis.select_top_joints(scores, k)
    _write_report(run_dir, "attention", config, {
        "scores": {JOINT_NAMES[j]: float(scores[j]) for j in range(len(scores))},
        "top_joints": [JOINT_NAMES[j] for j in top],
        "top_indices": [int(j) for j in top],
    })
    order = np.argsort(-scores, kind="stable")
    width = max(len(n) for n in JOINT_NAMES)
    for rank, j in enumerate(order, start=1):
        marker = " *" if int(j) in set(top) else ""
        print(f"{rank:2d}  {JOINT_NAMES[j].ljust(width)}  {scores[j]:.4f}{marker}")


def _cmd_navsim(config: dict, run_dir: Path) -> None:
    scenes = _read_corpus(config)
    n = config["navsim"]["max_episodes"]
    if n:
        scenes = scenes[:n]
    c = config["navsim"]
    params = navsim.SFMParams(
        relaxation_time=c["relaxation_time"],
        repulsion_strength=c["repulsion_strength"],
        repulsion_range=c["repulsion_range"],
        agent_radius=c["agent_radius"],
        desired_speed=c["desired_speed"],
        dt=c["dt"],
        prediction_force_scale=c["prediction_force_scale"],
        prediction_horizon_used=c["prediction_horizon"],
    )
    predictor = c["predictor"]
    model = None
    if predictor == "model":
        model, _ = _load_model(config)
        _check_model_corpus(model, scenes)

    episodes_dir = run_dir / "episodes"
    episodes_dir.mkdir()
    episodes = []
    summaries = []
    for i, scene in enumerate(scenes):
        episode = navsim.run_episode(scene, predictor=predictor, params=params,
                                     model=model, seed=config["seed"]["value"])
        navsim.write_episode_log(episode, episodes_dir / f"ep_{i:03d}.jsonl")
        episodes.append(episode)
        summaries.append({
            "episode": i,
            "completion_time": episode.completion_time,
            "collision": episode.collision,
            "min_distance": episode.min_distance
            if np.isfinite(episode.min_distance) else None,
        })
    metrics = navsim.evaluate_navigation(episodes,
                                         exclude_timeouts=c["exclude_timeouts"])
    _write_report(run_dir, "navsim", config, {
        "predictor": predictor,
        "metrics": metrics,
        "episodes": summaries,
    })
    print(f"{predictor}: completion_time_mean {metrics['completion_time_mean']:.2f} s, "
          f"collision_rate {metrics['collision_rate']:.3f}, "
          f"{metrics['n_timeouts']}/{metrics['n_episodes']} timeouts")


# ---------------------------------------------------------------------------
# plotting


def _read_report(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise DataError(f"report {path} does not exist")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"report {path} is not valid JSON: {exc}") from exc


def _plot_trajectories(reports: list[dict], paths: list[str], run_dir: Path) -> list[Path]:
    base = reports[0]
    examples = base.get("examples", [])
    if not examples:
        raise ConfigError(f"report {paths[0]} contains no example trajectories to plot")
    written = []
    for idx, example in enumerate(examples):
        predictions = []
        for m, report in enumerate(reports):
            rows = report.get("examples", [])
            if idx >= len(rows):
                continue
            is_pose = bool(report["config"]["pose"]["enabled"])
            label = "pose" if is_pose else "baseline"
            if m >= 2:
                label = f"{label}-{m}"
            predictions.append((label, plots.model_color(m, is_pose),
                                np.asarray(rows[idx]["predictions"])))
        out = run_dir / f"trajectories_{idx:02d}.png"
        plots.plot_trajectories(
            np.asarray(example["observed"]),
            np.asarray(example["future"]),
            predictions,
            out,
            title=f"scene {example['scene']} ({example['category']})",
        )
        written.append(out)
    return written


def _plot_attention(report: dict, path: str, run_dir: Path) -> list[Path]:
    scores = report.get("scores", {})
    if not scores:
        raise ConfigError(f"report {path} contains no attention scores to plot")
    try:
        values = np.array([scores[name] for name in JOINT_NAMES])
    except KeyError as exc:
        raise DataError(f"report {path} is missing joint {exc}") from exc
    out = run_dir / "attention.png"
    plots.plot_attention(values, out, title="attention share per joint",
                         highlight=report.get("top_joints", []))
    return [out]


def _plot_navigation(report: dict, path: str, run_dir: Path) -> list[Path]:
    summaries = report.get("episodes", [])
    if not summaries:
        raise ConfigError(f"report {path} contains no episodes to plot")
    episodes_dir = Path(path).parent / "episodes"
    corpus_path = report["config"]["paths"].get("corpus", "")
    scenes = read_scenes(corpus_path) if corpus_path and Path(corpus_path).exists() else []
    predictor = report.get("predictor", "none")
    color = {"none": plots.BASELINE_COLOR, "oracle": plots.GT_COLOR,
             "model": plots.POSE_COLOR}.get(predictor, plots.EXTRA_COLOR)
    written = []
    for summary in summaries[:4]:
        i = summary["episode"]
        log = episodes_dir / f"ep_{i:03d}.jsonl"
        if not log.exists():
            raise DataError(f"episode log {log} does not exist")
        lines = log.read_text().splitlines()
        header = json.loads(lines[0])
        trace = np.array([json.loads(line)["position"] for line in lines[1:]])
        neighbors = []
        if i < len(scenes):
            scene = scenes[i]
            neighbors = [a.positions for j, a in enumerate(scene.agents)
                         if j != scene.primary_index]
        out = run_dir / f"navigation_{i:03d}.png"
        plots.plot_navigation([(predictor, color, trace)], header["goal"],
                              neighbors, out, title=f"episode {i} ({predictor})")
        written.append(out)
    return written


def _cmd_plot(config: dict, run_dir: Path, kind: str, report_paths: list[str]) -> None:
    reports = [_read_report(p) for p in report_paths]
    if kind == "trajectories":
        written = _plot_trajectories(reports, report_paths, run_dir)
    elif kind == "attention":
        written = _plot_attention(reports[0], report_paths[0], run_dir)
    elif kind == "navigation":
        written = _plot_navigation(reports[0], report_paths[0], run_dir)
    else:
        raise ConfigError(f"unknown plot kind {kind!r}")
    _write_report(run_dir, "plot", config, {
        "kind": kind,
        "inputs": [str(p) for p in report_paths],
        "figures": [str(p) for p in written],
    })
    for p in written:
        print(p)


# ---------------------------------------------------------------------------


def _dispatch(argv) -> int:
    parser = _build_parser()
    args, overrides = parser.parse_known_args(argv)
    if args.command is None:
        parser.print_help()
        return 1
    config = _resolve_config(args, overrides)
    run_dir = _make_run_dir(config, args.command)
    if args.command == "generate":
        _cmd_generate(config, run_dir)
    elif args.command == "train":
        _cmd_train(config, run_dir)
    elif args.command == "eval":
        _cmd_eval(config, run_dir)
    elif args.command == "perturb":
        _cmd_perturb(config, run_dir)
    elif args.command == "attention":
        _cmd_attention(config, run_dir)
    elif args.command == "navsim":
        _cmd_navsim(config, run_dir)
    elif args.command == "plot":
        _cmd_plot(config, run_dir, args.kind, args.report)
    return 0


def main(argv=None) -> int:
    try:
        return _dispatch(argv)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

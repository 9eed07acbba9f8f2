"""Operator command-line driver.

Subcommands: ``scene gen``, ``capture``, ``query``, ``eval``, ``compare``,
``env run``, ``explain``.  Every command writes exactly one
``run_manifest.json`` into its output directory; together with the seed it
fully determines the outputs in baseline mode.  Exit codes: 0 success, 2
usage error, 1 runtime error.  ``AW4RE_THREADS`` caps the per-frame decode
parallelism of ``query`` and ``compare``.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, svgplot
from .completion import PluginDescriptor, complete_baseline, complete_external
from .corpus import (
    EvidenceCorpus,
    decode_mask_png,
    decode_png,
    encode_mask_png,
    encode_png,
)
from .corpus import load as load_corpus
from .corpus import save as save_corpus
from .decoder import DecoderConfig, PartialObservation, decode
from .completion import CompletedObservation
from .env import (
    EnvConfig,
    actions_hash,
    frame_hash,
    random_orbit_policy,
    reset,
    scripted_policy,
    step,
    write_log,
)
from .errors import EngineError
from .geometry import ActionSequence
from .metrics import evaluate_query, write_csv
from .retrieval import RetrievalConfig, select_evidence
from .scene import SceneConfig, SceneSpec, generate_scene, render_oracle
from .trajectories import (
    GENERATORS,
    default_intrinsics,
    hold_sequence,
    rewind_sequence,
)

RETRIEVAL_4D = "4d"
RETRIEVAL_TIME_LOCAL = "time-local"
_RETRIEVAL_NAMES = {RETRIEVAL_4D: "4d_informed", RETRIEVAL_TIME_LOCAL: "time_local"}


def thread_count() -> int:
    raw = os.environ.get("AW4RE_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _config_hash(payload) -> str:
    return hashlib.sha256(
        json.dumps(payload, sort_keys=True, default=str).encode("utf-8")
    ).hexdigest()


def write_manifest(out_dir: Path, command: str, config, inputs: dict, outputs: dict, started: float):
    manifest = {
        "command": command,
        "argv": sys.argv[1:] if sys.argv else [],
        "config_hash": _config_hash(config),
        "inputs": inputs,
        "outputs": outputs,
        "engine_version": __version__,
        "wall_time_s": round(time.monotonic() - started, 3),
    }
    (out_dir / "run_manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def _load_json(path) -> dict:
    return json.loads(Path(path).read_text())


def _load_actions(path) -> ActionSequence:
    data = _load_json(path)
    if isinstance(data, dict):
        data = data["actions"]
    return ActionSequence.from_list(data)


def _load_scene(path) -> SceneSpec:
    return SceneSpec.from_dict(_load_json(path))


def _pipeline_configs(args) -> tuple:
    retrieval = RetrievalConfig()
    decoder = DecoderConfig()
    if getattr(args, "config", None):
        cfg = _load_json(args.config)
        if "retrieval" in cfg:
            retrieval = RetrievalConfig.from_dict({**retrieval.to_dict(), **cfg["retrieval"]})
        if "decoder" in cfg:
            decoder = DecoderConfig.from_dict({**decoder.to_dict(), **cfg["decoder"]})
    if getattr(args, "retrieval", None) == RETRIEVAL_TIME_LOCAL:
        retrieval = replace(retrieval, restrict_same_time=True)
    return retrieval, decoder


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# scene gen
# ---------------------------------------------------------------------------

def cmd_scene_gen(args) -> int:
    started = time.monotonic()
    out = _out_dir(args)
    config = SceneConfig.from_dict(_load_json(args.config)) if args.config else SceneConfig()
    scene = generate_scene(args.seed, config)
    scene_path = out / "scene.json"
    scene_path.write_text(json.dumps(scene.to_dict(), indent=2, sort_keys=True))
    write_manifest(
        out,
        "scene gen",
        scene.config.to_dict() | {"seed": args.seed},
        {"config": args.config},
        {"scene": scene_path.name},
        started,
    )
    print(f"scene with {len(scene.objects)} objects -> {scene_path}")
    return 0


# ---------------------------------------------------------------------------
# capture
# ---------------------------------------------------------------------------

def _build_trajectory(args, scene: SceneSpec) -> ActionSequence:
    intr = default_intrinsics(width=args.width, height=args.height, focal=args.focal)
    traj_args = json.loads(args.traj_args) if args.traj_args else {}
    name = args.traj
    horizon = scene.horizon
    if name == "orbit":
        traj_args.setdefault("radius", 0.8 * scene.config.extent)
        return GENERATORS["orbit"](intr, horizon, **traj_args)
    if name == "zoom":
        return GENERATORS["zoom"](intr, horizon, **traj_args)
    if name == "corner":
        traj_args.setdefault("extent", scene.config.extent)
        return GENERATORS["corner"](intr, horizon, **traj_args)
    if name == "static":
        traj_args.setdefault("eye", (0.85 * scene.config.extent, 0.0, 4.0))
        traj_args.setdefault("target", (0.0, 0.0, 0.5))
        return GENERATORS["static"](intrinsics=intr, horizon=horizon, **traj_args)
    raise ValueError(f"unknown trajectory {name!r}")


def cmd_capture(args) -> int:
    started = time.monotonic()
    out = _out_dir(args)
    if args.scene:
        scene = _load_scene(args.scene)
        scene_config = scene.config
        seed = scene.seed
    else:
        scene_config = SceneConfig.from_dict(_load_json(args.config)) if args.config else SceneConfig()
        seed = args.seed
        scene = generate_scene(seed, scene_config)

    env_config = EnvConfig(scene=scene_config, mode="real")
    episode = reset(env_config, seed)
    sequence = _build_trajectory(args, scene)
    for _ in range(args.iters):
        _, _, episode = step(episode, sequence)

    corpus_dir = out / "corpus"
    save_corpus(episode.corpus, corpus_dir)
    (out / "scene.json").write_text(json.dumps(scene.to_dict(), indent=2, sort_keys=True))
    (out / "actions.json").write_text(json.dumps(sequence.to_list(), indent=2))
    write_log(episode, out / "episode.jsonl")
    write_manifest(
        out,
        "capture",
        {"env": env_config.to_dict(), "seed": seed, "traj": args.traj, "iters": args.iters},
        {"scene": args.scene, "config": args.config},
        {"corpus": "corpus", "episode_log": "episode.jsonl"},
        started,
    )
    print(
        f"captured {args.iters} iteration(s) of horizon {scene.horizon} -> {corpus_dir} "
        f"(corpus hash {episode.corpus.content_hash()[:12]})"
    )
    return 0


# ---------------------------------------------------------------------------
# query
# ---------------------------------------------------------------------------

def run_query_pipeline(
    corpus: EvidenceCorpus,
    actions: ActionSequence,
    retrieval_cfg: RetrievalConfig,
    decoder_cfg: DecoderConfig,
    plugin: str | None,
    strict: bool,
    out: Path,
    threads: int | None = None,
):
    """Counterfactual query: select, decode, complete, persist.

    Per-frame decodes are independent and run on a thread pool capped by
    AW4RE_THREADS; outputs do not depend on the worker count.
    """
    threads = threads or thread_count()
    selections = [select_evidence(corpus, a, retrieval_cfg) for a in actions]

    def _decode_one(idx):
        return decode(actions[idx], selections[idx], corpus, decoder_cfg)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            partials = list(pool.map(_decode_one, range(len(actions))))
    else:
        partials = [_decode_one(i) for i in range(len(actions))]

    if plugin:
        completed = complete_external(
            partials, PluginDescriptor(command=plugin, strict=strict)
        )
    else:
        completed = complete_baseline(partials)

    out.mkdir(parents=True, exist_ok=True)
    for t, (partial, comp) in enumerate(zip(partials, completed), start=1):
        (out / f"partial_{t:04d}.png").write_bytes(encode_png(partial.rgb))
        (out / f"mask_{t:04d}.png").write_bytes(encode_mask_png(partial.support_mask))
        (out / f"completed_{t:04d}.png").write_bytes(encode_png(comp.rgb))
    (out / "actions.json").write_text(json.dumps(actions.to_list(), indent=2))
    (out / "selections.json").write_text(
        json.dumps([sel.to_json_dict() for sel in selections], indent=2)
    )
    meta = {
        "corpus_hash": corpus.content_hash(),
        "actions_hash": actions_hash(actions),
        "retrieval": retrieval_cfg.to_dict(),
        "decoder": decoder_cfg.to_dict(),
        "completion": "baseline" if not plugin else f"external:{plugin}",
        "frame_hashes": {
            "partial": [frame_hash(p.rgb) for p in partials],
            "completed": [frame_hash(c.rgb) for c in completed],
        },
        "support_density": [p.support_density for p in partials],
    }
    (out / "query_meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    return partials, completed, selections, meta


def cmd_query(args) -> int:
    started = time.monotonic()
    out = _out_dir(args)
    corpus = load_corpus(args.corpus)
    actions = _load_actions(args.actions)
    retrieval_cfg, decoder_cfg = _pipeline_configs(args)
    _, _, _, meta = run_query_pipeline(
        corpus, actions, retrieval_cfg, decoder_cfg, args.plugin, args.strict, out
    )
    write_manifest(
        out,
        "query",
        {"retrieval": retrieval_cfg.to_dict(), "decoder": decoder_cfg.to_dict()},
        {"corpus": str(args.corpus), "actions": str(args.actions)},
        {"frames": len(actions), "corpus_hash": meta["corpus_hash"]},
        started,
    )
    mean_density = float(np.mean(meta["support_density"]))
    print(f"decoded {len(actions)} frames (mean support {mean_density:.3f}) -> {out}")
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def _load_query_outputs(run_dir: Path):
    actions = _load_actions(run_dir / "actions.json")
    meta = _load_json(run_dir / "query_meta.json")
    partials, completed = [], []
    for t in range(1, len(actions) + 1):
        rgb = decode_png((run_dir / f"partial_{t:04d}.png").read_bytes())
        mask = decode_mask_png((run_dir / f"mask_{t:04d}.png").read_bytes())
        partials.append(
            PartialObservation(
                rgb=rgb, support_mask=mask, depth_buffer=np.zeros(mask.shape, np.float32)
            )
        )
        crgb = decode_png((run_dir / f"completed_{t:04d}.png").read_bytes())
        completed.append(
            CompletedObservation(
                rgb=crgb, support_mask=mask, completion_source=meta.get("completion", "baseline")
            )
        )
    return actions, partials, completed, meta


def cmd_eval(args) -> int:
    started = time.monotonic()
    run_dir = Path(args.run)
    out = Path(args.out) if args.out else run_dir
    out.mkdir(parents=True, exist_ok=True)
    actions, partials, completed, meta = _load_query_outputs(run_dir)

    reference = None
    if args.scene:
        scene = _load_scene(args.scene)
        reference = [render_oracle(scene, a) for a in actions]

    report = evaluate_query(
        completed,
        partials,
        reference,
        query_id=run_dir.name,
        metadata={"corpus_hash": meta["corpus_hash"], "mode_config": meta["retrieval"]},
    )
    (out / "report.json").write_text(report.to_json())
    write_csv([report], out / "report.csv")
    write_manifest(
        out,
        "eval",
        meta["retrieval"],
        {"run": str(run_dir), "scene": args.scene},
        {"report": "report.json"},
        started,
    )
    summary = report.evidence.get("psnr")
    print(f"report mode={report.mode} evidence_psnr={summary} -> {out / 'report.json'}")
    return 0


# ---------------------------------------------------------------------------
# compare
# ---------------------------------------------------------------------------

def cmd_compare(args) -> int:
    started = time.monotonic()
    out = _out_dir(args)
    corpus = load_corpus(args.corpus)
    actions = _load_actions(args.actions)
    scene = _load_scene(args.scene)
    retrieval_cfg, decoder_cfg = _pipeline_configs(args)
    reference = [render_oracle(scene, a) for a in actions]

    reports = {}
    hashes = {}
    for flag, name in _RETRIEVAL_NAMES.items():
        mode_cfg = replace(retrieval_cfg, restrict_same_time=(flag == RETRIEVAL_TIME_LOCAL))
        mode_out = out / name
        hashes[name] = corpus.content_hash()
        partials, completed, _, _ = run_query_pipeline(
            corpus, actions, mode_cfg, decoder_cfg, args.plugin, args.strict, mode_out
        )
        reports[name] = evaluate_query(
            completed, partials, reference, query_id=name,
            metadata={"corpus_hash": hashes[name]},
        )

    if hashes["4d_informed"] != hashes["time_local"]:
        raise EngineError("corpus changed between retrieval modes")

    margin = None
    a = reports["4d_informed"].full.get("psnr")
    b = reports["time_local"].full.get("psnr")
    if a is not None and b is not None:
        margin = a - b
    payload = {
        "corpus_hash": hashes,
        "corpus_hash_equal": True,
        "modes": {name: rep.to_json_dict() for name, rep in reports.items()},
        "full_psnr_margin_db": margin,
    }
    (out / "compare.json").write_text(json.dumps(payload, indent=2, sort_keys=True))
    write_csv(reports.values(), out / "compare.csv")
    svgplot.bar_chart(
        ["full PSNR", "evidence PSNR"],
        {
            name: [
                rep.full.get("psnr") or 0.0,
                rep.evidence.get("psnr") or 0.0,
            ]
            for name, rep in reports.items()
        },
        out / "compare.svg",
        title="retrieval ablation",
        ylabel="dB",
    )
    write_manifest(
        out,
        "compare",
        {"retrieval": retrieval_cfg.to_dict(), "decoder": decoder_cfg.to_dict()},
        {"corpus": str(args.corpus), "actions": str(args.actions), "scene": str(args.scene)},
        {"compare": "compare.json", "margin_db": margin},
        started,
    )
    print(f"4d_informed vs time_local full-frame PSNR margin: {margin and round(margin, 3)} dB")
    return 0


# ---------------------------------------------------------------------------
# env run
# ---------------------------------------------------------------------------

def cmd_env_run(args) -> int:
    started = time.monotonic()
    out = _out_dir(args)
    config = EnvConfig.from_dict(_load_json(args.config)) if args.config else EnvConfig()
    if args.mode:
        config = replace(config, mode=args.mode)
    episode = reset(config, args.seed)

    if args.policy == "scripted":
        if not args.actions:
            raise ValueError("scripted policy needs --actions FILE [FILE ...]")
        policy = scripted_policy([_load_actions(p) for p in args.actions])
    else:
        policy = random_orbit_policy(args.seed, default_intrinsics(args.width, args.height, args.focal))

    frames_dir = out / "frames"
    for k in range(args.steps):
        sequence = policy(episode, k)
        obs, reward, episode = step(episode, sequence)
        if args.save_frames:
            frames_dir.mkdir(exist_ok=True)
            for t, frame in enumerate(obs, start=1):
                (frames_dir / f"step{k + 1:03d}_frame_{t:04d}.png").write_bytes(
                    encode_png(frame.rgb)
                )

    write_log(episode, out / "episode.jsonl")
    if args.save_corpus:
        save_corpus(episode.corpus, out / "corpus")
    write_manifest(
        out,
        "env run",
        config.to_dict() | {"seed": args.seed, "steps": args.steps, "policy": args.policy},
        {"config": args.config, "actions": list(args.actions or [])},
        {"episode_log": "episode.jsonl"},
        started,
    )
    totals = [entry["total"] for entry in episode.reward_log]
    print(f"{args.steps} step(s), reward totals: {[round(v, 5) for v in totals]}")
    return 0


# ---------------------------------------------------------------------------
# explain
# ---------------------------------------------------------------------------

def cmd_explain(args) -> int:
    started = time.monotonic()
    corpus = load_corpus(args.corpus)
    actions = _load_actions(args.actions)
    retrieval_cfg, _ = _pipeline_configs(args)
    if not (1 <= args.t <= actions.horizon):
        raise ValueError(f"--t {args.t} outside 1..{actions.horizon}")
    selection = select_evidence(corpus, actions[args.t - 1], retrieval_cfg)
    text = selection.to_json()
    if args.out:
        out = _out_dir(args)
        (out / "selection.json").write_text(text)
        write_manifest(
            out,
            "explain",
            retrieval_cfg.to_dict(),
            {"corpus": str(args.corpus), "actions": str(args.actions), "t": args.t},
            {"selection": "selection.json"},
            started,
        )
    print(text)
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aw4re", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_scene = sub.add_parser("scene", help="scene utilities")
    scene_sub = p_scene.add_subparsers(dest="scene_command", required=True)
    p_gen = scene_sub.add_parser("gen", help="generate a procedural scene")
    p_gen.add_argument("--seed", type=int, required=True)
    p_gen.add_argument("--config", help="SceneConfig JSON")
    p_gen.add_argument("--out", required=True)
    p_gen.set_defaults(func=cmd_scene_gen)

    p_cap = sub.add_parser("capture", help="real-mode rollout into a corpus")
    p_cap.add_argument("--scene", help="scene.json from `scene gen`")
    p_cap.add_argument("--seed", type=int, default=0)
    p_cap.add_argument("--config", help="SceneConfig JSON (when no --scene)")
    p_cap.add_argument("--traj", default="orbit", choices=sorted(GENERATORS))
    p_cap.add_argument("--traj-args", help="JSON kwargs for the generator")
    p_cap.add_argument("--iters", type=int, default=1)
    p_cap.add_argument("--width", type=int, default=160)
    p_cap.add_argument("--height", type=int, default=120)
    p_cap.add_argument("--focal", type=float, default=150.0)
    p_cap.add_argument("--out", required=True)
    p_cap.set_defaults(func=cmd_capture)

    p_query = sub.add_parser("query", help="counterfactual camera query")
    p_query.add_argument("--corpus", required=True)
    p_query.add_argument("--actions", required=True)
    p_query.add_argument("--retrieval", choices=[RETRIEVAL_4D, RETRIEVAL_TIME_LOCAL], default=RETRIEVAL_4D)
    p_query.add_argument("--config", help="{retrieval: ..., decoder: ...} JSON")
    p_query.add_argument("--plugin", help="external completion plugin command")
    p_query.add_argument("--strict", action="store_true")
    p_query.add_argument("--out", required=True)
    p_query.set_defaults(func=cmd_query)

    p_eval = sub.add_parser("eval", help="score a query run")
    p_eval.add_argument("--run", required=True, help="query output directory")
    p_eval.add_argument("--scene", help="scene.json enabling full-reference metrics")
    p_eval.add_argument("--out")
    p_eval.set_defaults(func=cmd_eval)

    p_cmp = sub.add_parser("compare", help="4d-informed vs time-local retrieval")
    p_cmp.add_argument("--corpus", required=True)
    p_cmp.add_argument("--actions", required=True)
    p_cmp.add_argument("--scene", required=True)
    p_cmp.add_argument("--config")
    p_cmp.add_argument("--plugin")
    p_cmp.add_argument("--strict", action="store_true")
    p_cmp.add_argument("--out", required=True)
    p_cmp.set_defaults(func=cmd_compare)

    p_env = sub.add_parser("env", help="environment loop")
    env_sub = p_env.add_subparsers(dest="env_command", required=True)
    p_run = env_sub.add_parser("run", help="policy rollout")
    p_run.add_argument("--config", help="EnvConfig JSON")
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--steps", type=int, default=1)
    p_run.add_argument("--mode", choices=["real", "surrogate"])
    p_run.add_argument("--policy", choices=["random", "scripted"], default="random")
    p_run.add_argument("--actions", nargs="*", help="sequences for the scripted policy")
    p_run.add_argument("--width", type=int, default=160)
    p_run.add_argument("--height", type=int, default=120)
    p_run.add_argument("--focal", type=float, default=150.0)
    p_run.add_argument("--save-corpus", action="store_true")
    p_run.add_argument("--save-frames", action="store_true")
    p_run.add_argument("--out", required=True)
    p_run.set_defaults(func=cmd_env_run)

    p_exp = sub.add_parser("explain", help="dump selection scores for one query frame")
    p_exp.add_argument("--corpus", required=True)
    p_exp.add_argument("--actions", required=True)
    p_exp.add_argument("--t", type=int, required=True)
    p_exp.add_argument("--retrieval", choices=[RETRIEVAL_4D, RETRIEVAL_TIME_LOCAL], default=RETRIEVAL_4D)
    p_exp.add_argument("--config")
    p_exp.add_argument("--out")
    p_exp.set_defaults(func=cmd_explain)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (EngineError, OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

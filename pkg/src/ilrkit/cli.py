"""Command-line entry point wiring all modules into reproducible pipelines.

Outputs are written to a temporary sibling directory and promoted
atomically, so interrupted runs never leave half-written files. Every
output directory carries a manifest.json recording each artifact's
config hash, seed, and tool version. Exit codes: 0 success, 2 config
error, 3 data validation error, 4 numeric divergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__, checkpoint, dataengine, evalkit, expert, fusion, simcore, synthgen
from .config import ENV_CONFIG, PipelineConfig, load_config
from .embedstore import (
    EmbeddingSet,
    load_embedding_set,
    load_token_maps,
    save_embedding_set,
    save_token_maps,
)
from .errors import ConfigError, DataValidationError, IlrkitError

logger = logging.getLogger(__name__)


class _OutputStage:
    """Collects output files in a temp dir, then promotes them atomically."""

    def __init__(self, out_dir: Path):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self._tmp = tempfile.mkdtemp(prefix=".stage-", dir=self.out_dir)
        self.manifest: dict[str, dict] = {}

    def path(self, name: str) -> Path:
        return Path(self._tmp) / name

    def record(self, name: str, config_hash: str, seed: int) -> Path:
        self.manifest[name] = {
            "config_hash": config_hash,
            "seed": seed,
            "version": __version__,
        }
        return self.path(name)

    def promote(self) -> None:
        manifest_path = self.out_dir / "manifest.json"
        existing = {}
        if manifest_path.exists():
            existing = json.loads(manifest_path.read_text(encoding="utf-8"))
        existing.update(self.manifest)
        for name in self.manifest:
            os.replace(self.path(name), self.out_dir / name)
        tmp_manifest = Path(self._tmp) / "manifest.json"
        tmp_manifest.write_text(
            json.dumps(existing, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        os.replace(tmp_manifest, manifest_path)
        os.rmdir(self._tmp)

    def discard(self) -> None:
        for p in Path(self._tmp).iterdir():
            p.unlink()
        os.rmdir(self._tmp)


def _write_ground_truth(path: Path, ground_truth: dict[str, str]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for image_id in sorted(ground_truth):
            fh.write(
                json.dumps({"image_id": image_id, "instance_id": ground_truth[image_id]}) + "\n"
            )


def _load_predictions(path: Path, model_name: str = "file") -> evalkit.PredictionLog:
    entries: dict[str, str | int] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                entries[obj["task_id"]] = obj["response"]
            except (json.JSONDecodeError, KeyError) as exc:
                raise DataValidationError(f"{path}: line {lineno}: {exc}") from exc
    return evalkit.PredictionLog(entries=entries, model_name=model_name)


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args, config: PipelineConfig) -> None:
    bundle = synthgen.generate(config.synth)
    stage = _OutputStage(args.out)
    h, seed = config.config_hash(), config.synth.seed
    ext = config.format
    save_embedding_set(bundle.raw_set, stage.record(f"raw.{ext}", h, seed), ext)
    save_embedding_set(bundle.general_set, stage.record(f"general.{ext}", h, seed), ext)
    save_token_maps(bundle.token_maps, stage.record("token_maps.jsonl", h, seed))
    _write_ground_truth(stage.record("ground_truth.jsonl", h, seed), bundle.ground_truth)
    stage.promote()
    print(f"wrote synthetic bundle ({len(bundle.raw_set.records)} images) to {args.out}")


def cmd_split(args, config: PipelineConfig) -> None:
    eset = load_embedding_set(args.embeddings, args.format)
    manifest = dataengine.make_split(eset, args.test_fraction, args.seed)
    stage = _OutputStage(Path(args.out).parent)
    stage.manifest = {}
    path = stage.record(Path(args.out).name, config.config_hash(), args.seed)
    dataengine.save_split(manifest, path)
    stage.promote()
    print(
        f"split {len(manifest.train_instances)} train / "
        f"{len(manifest.test_instances)} test instances -> {args.out}"
    )


def _split_side(args) -> frozenset[str]:
    manifest = dataengine.load_split(args.split)
    return manifest.test_instances if args.side == "test" else manifest.train_instances


def cmd_build_galleries(args, config: PipelineConfig) -> None:
    if args.k < 2:
        raise ConfigError("k must be >= 2 (use build-detection for K=1)")
    general = load_embedding_set(args.embeddings, args.format)
    if args.per_category:
        tasks = dataengine.build_gallery_tasks_per_category(
            general, _split_side(args), k=args.k, tau=args.tau,
            n_per_category=args.n_tasks, seed=args.seed, hardest=args.hardest,
        )
    else:
        tasks = dataengine.build_gallery_tasks(
            general, _split_side(args), k=args.k, tau=args.tau,
            n_tasks=args.n_tasks, seed=args.seed, hardest=args.hardest,
        )
    stage = _OutputStage(Path(args.out).parent)
    dataengine.save_jsonl(tasks, stage.record(Path(args.out).name, config.config_hash(), args.seed))
    stage.promote()
    relaxed = sum(t.relaxed for t in tasks)
    print(f"wrote {len(tasks)} gallery tasks ({relaxed} relaxed) -> {args.out}")


def cmd_build_detection(args, config: PipelineConfig) -> None:
    general = load_embedding_set(args.embeddings, args.format)
    tasks = dataengine.build_detection_tasks(
        general, _split_side(args), tau=args.tau, n_tasks=args.n_tasks,
        positive_rate=args.positive_rate, seed=args.seed,
    )
    stage = _OutputStage(Path(args.out).parent)
    dataengine.save_jsonl(tasks, stage.record(Path(args.out).name, config.config_hash(), args.seed))
    stage.promote()
    print(f"wrote {len(tasks)} detection tasks -> {args.out}")


def cmd_emit(args, config: PipelineConfig) -> None:
    tasks = dataengine.load_gallery_tasks(args.tasks)
    captions = None
    if args.stage == "caption":
        if args.captions:
            captions = {}
            with open(args.captions, "r", encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        obj = json.loads(line)
                        captions[obj["query_id"]] = obj["caption"]
        else:
            captions = dataengine.template_captions(tasks)
    records = dataengine.emit_conversations(tasks, args.stage, captions=captions)
    stage = _OutputStage(Path(args.out).parent)
    dataengine.save_jsonl(
        records, stage.record(Path(args.out).name, config.config_hash(), config.seed)
    )
    stage.promote()
    print(f"wrote {len(records)} {args.stage} conversations -> {args.out}")


def cmd_train_expert(args, config: PipelineConfig) -> None:
    raw = load_embedding_set(args.embeddings, args.format)
    if args.split:
        side = dataengine.load_split(args.split).train_instances
        keep = [rec for rec in raw.records if rec.instance_id in side]
        raw = raw.__class__.from_records(raw.encoder_name, keep)
    head = expert.train_expert(raw, config=config.expert)
    stage = _OutputStage(Path(args.out).parent)
    checkpoint.save_expert(
        head, stage.record(Path(args.out).name, config.config_hash(), config.expert.seed),
        seed=config.expert.seed,
    )
    stage.promote()
    print(f"trained expert head ({head.w.shape[0]} -> {head.w.shape[1]}) -> {args.out}")


def cmd_embed(args, config: PipelineConfig) -> None:
    head = checkpoint.load_expert(args.checkpoint)
    raw = load_embedding_set(args.embeddings, args.format)
    eset = expert.embed_set(head, raw)
    stage = _OutputStage(Path(args.out).parent)
    save_embedding_set(
        eset, stage.record(Path(args.out).name, config.config_hash(), config.seed), args.format
    )
    stage.promote()
    print(f"embedded {len(eset.records)} images -> {args.out}")


def _load_views(args):
    token_maps = {t.image_id: t for t in load_token_maps(args.token_maps)}
    expert_set = load_embedding_set(args.expert_embeddings, args.format)
    expert_vectors = {
        rec.image_id: np.asarray(rec.vector, dtype=np.float64) for rec in expert_set.records
    }
    return token_maps, expert_vectors


def cmd_train_adapter(args, config: PipelineConfig) -> None:
    tasks = dataengine.load_gallery_tasks(args.tasks)
    token_maps, expert_vectors = _load_views(args)
    any_map = next(iter(token_maps.values()))
    expert_dim = len(next(iter(expert_vectors.values())))
    adapter = fusion.init_adapter(
        expert_dim, any_map.tokens.shape[1], seed=config.adapter.seed
    )
    adapter = fusion.train_adapter(adapter, tasks, token_maps, expert_vectors, config.adapter)
    stage = _OutputStage(Path(args.out).parent)
    checkpoint.save_adapter(
        adapter, stage.record(Path(args.out).name, config.config_hash(), config.adapter.seed),
        seed=config.adapter.seed,
    )
    stage.promote()
    print(f"trained fusion adapter -> {args.out}")


def cmd_fuse(args, config: PipelineConfig) -> None:
    adapter = checkpoint.load_adapter(args.checkpoint)
    token_maps, expert_vectors = _load_views(args)
    if args.image_id not in token_maps:
        raise DataValidationError(f"no token map for image {args.image_id!r}")
    out = fusion.fuse(adapter, token_maps[args.image_id], expert_vectors[args.image_id])
    obj = {
        "image_id": args.image_id,
        "attention": [float(a) for a in out.attention],
        "projected": [float(x) for x in out.projected],
        "fused": [[float(x) for x in row] for row in out.fused],
    }
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_match(args, config: PipelineConfig) -> None:
    view = load_embedding_set(args.embeddings, args.format)
    tasks = dataengine.load_gallery_tasks(args.tasks)
    matcher = evalkit.similarity_matcher(view, args.kind)
    stage = _OutputStage(Path(args.out).parent)
    path = stage.record(Path(args.out).name, config.config_hash(), config.seed)
    with open(path, "w", encoding="utf-8") as fh:
        for task in tasks:
            fh.write(
                json.dumps({"task_id": task.task_id, "response": f"Image {matcher(task) + 1}"})
                + "\n"
            )
    stage.promote()
    print(f"matched {len(tasks)} tasks -> {args.out}")


def cmd_evaluate(args, config: PipelineConfig) -> None:
    tasks = dataengine.load_gallery_tasks(args.tasks)
    log = _load_predictions(Path(args.predictions))
    report = evalkit.score_matching(tasks, log)
    if args.detection_tasks and args.detection_predictions:
        det_tasks = dataengine.load_detection_tasks(args.detection_tasks)
        det_log = _load_predictions(Path(args.detection_predictions))
        report.detection = evalkit.score_detection(det_tasks, det_log, args.equal_weight)
    stage = _OutputStage(args.out)
    h = config.config_hash()
    stage.record("report.json", h, config.seed).write_text(report.to_json(), encoding="utf-8")
    stage.record("report.txt", h, config.seed).write_text(report.render_table(), encoding="utf-8")
    stage.promote()
    print(report.render_table())


def _sweep_matchers(args, general):
    matchers = {"general": evalkit.similarity_matcher(general)}
    if args.expert_embeddings:
        expert_set = load_embedding_set(args.expert_embeddings, args.format)
        matchers["expert"] = evalkit.similarity_matcher(expert_set)
    if args.adapter and args.token_maps and args.expert_embeddings:
        adapter = checkpoint.load_adapter(args.adapter)
        token_maps = {t.image_id: t for t in load_token_maps(args.token_maps)}
        expert_set = load_embedding_set(args.expert_embeddings, args.format)
        vectors = {r.image_id: np.asarray(r.vector, np.float64) for r in expert_set.records}
        matchers["fused"] = evalkit.fused_matcher(adapter, token_maps, vectors)
    return matchers


def cmd_sweep(args, config: PipelineConfig) -> None:
    general = load_embedding_set(args.embeddings, args.format)
    side = _split_side(args)
    matchers = _sweep_matchers(args, general)
    result = evalkit.sweep_difficulty(
        general, side, matchers, taus=tuple(args.taus), k=args.k,
        n_tasks=args.n_tasks, seed=args.seed,
    )
    stage = _OutputStage(args.out)
    h = config.config_hash()
    stage.record("sweep.json", h, args.seed).write_text(
        json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    if args.emit_plot_data:
        series = {
            name: {"x": sorted(row), "y": [row[t] for t in sorted(row)]}
            for name, row in result.accuracies.items()
        }
        stage.record("sweep_plot.json", h, args.seed).write_text(
            json.dumps(series, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    stage.promote()
    for name, row in sorted(result.accuracies.items()):
        cells = ", ".join(f"tau={t:g}: {100 * a:.1f}%" for t, a in sorted(row.items()))
        print(f"{name}: {cells}")


def cmd_pipeline(args, config: PipelineConfig) -> None:
    """synth -> split -> train-expert -> build tiers -> train-adapter ->
    evaluate all matchers -> sweep, with one manifest for everything."""
    out = Path(args.out)
    stage = _OutputStage(out)
    h = config.config_hash()
    seed = config.seed
    ext = config.format

    logger.info("pipeline: generating synthetic bundle")
    bundle = synthgen.generate(config.synth)
    save_embedding_set(bundle.raw_set, stage.record(f"raw.{ext}", h, seed), ext)
    save_embedding_set(bundle.general_set, stage.record(f"general.{ext}", h, seed), ext)
    save_token_maps(bundle.token_maps, stage.record("token_maps.jsonl", h, seed))
    _write_ground_truth(stage.record("ground_truth.jsonl", h, seed), bundle.ground_truth)

    split = dataengine.make_split(bundle.general_set, config.test_fraction, seed)
    dataengine.save_split(split, stage.record("split.json", h, seed))

    logger.info("pipeline: training expert head")
    train_raw = bundle.raw_set.__class__.from_records(
        "raw", [r for r in bundle.raw_set.records if r.instance_id in split.train_instances]
    )
    head = expert.train_expert(train_raw, config=config.expert)
    checkpoint.save_expert(head, stage.record("expert_head.ckpt", h, config.expert.seed))
    expert_set = expert.embed_set(head, bundle.raw_set)
    save_embedding_set(expert_set, stage.record(f"expert.{ext}", h, seed), ext)

    logger.info("pipeline: building benchmark tiers")
    test_tasks = {}
    for tau in sorted({config.tau, *config.taus}):
        tasks = dataengine.build_gallery_tasks_per_category(
            bundle.general_set, split.test_instances, k=config.k, tau=tau,
            n_per_category=config.n_tasks, seed=seed, task_prefix=f"t{tau:g}-",
        )
        test_tasks[tau] = tasks
        dataengine.save_jsonl(tasks, stage.record(f"tasks_tau{tau:g}.jsonl", h, seed))
    detection = dataengine.build_detection_tasks(
        bundle.general_set, split.test_instances, tau=config.tau,
        n_tasks=config.n_tasks, positive_rate=config.positive_rate, seed=seed,
    )
    dataengine.save_jsonl(detection, stage.record("detection_tasks.jsonl", h, seed))

    mcq = dataengine.emit_conversations(test_tasks[config.tau], "match_mcq")
    dataengine.save_jsonl(mcq, stage.record("conversations_mcq.jsonl", h, seed))
    captions = dataengine.template_captions(test_tasks[config.tau])
    cap = dataengine.emit_conversations(test_tasks[config.tau], "caption", captions=captions)
    dataengine.save_jsonl(cap, stage.record("conversations_caption.jsonl", h, seed))

    logger.info("pipeline: training fusion adapter")
    train_tasks = dataengine.build_gallery_tasks(
        bundle.general_set, split.train_instances, k=config.k, tau=config.tau,
        n_tasks=config.n_train_tasks, seed=seed + 1, task_prefix="a-",
    )
    token_maps = {t.image_id: t for t in bundle.token_maps}
    expert_vectors = {
        rec.image_id: np.asarray(rec.vector, dtype=np.float64) for rec in expert_set.records
    }
    any_map = next(iter(token_maps.values()))
    adapter = fusion.init_adapter(
        expert_set.dimension, any_map.tokens.shape[1], seed=config.adapter.seed
    )
    adapter = fusion.train_adapter(adapter, train_tasks, token_maps, expert_vectors, config.adapter)
    checkpoint.save_adapter(adapter, stage.record("adapter.ckpt", h, config.adapter.seed))

    logger.info("pipeline: evaluating matchers")
    matchers = {
        "general": evalkit.similarity_matcher(bundle.general_set),
        "expert": evalkit.similarity_matcher(expert_set),
        "fused": evalkit.fused_matcher(adapter, token_maps, expert_vectors),
    }
    tier = test_tasks[config.tau]
    matcher_reports = {}
    for name, matcher in matchers.items():
        log = evalkit.PredictionLog(
            entries={t.task_id: f"Image {matcher(t) + 1}" for t in tier}, model_name=name
        )
        matcher_reports[name] = evalkit.score_matching(tier, log)

    sweep = evalkit.sweep_difficulty(
        bundle.general_set, split.test_instances, matchers, taus=config.taus,
        k=config.k, n_tasks=config.n_sweep_tasks, seed=seed,
    )

    report = matcher_reports["fused"]
    report.sweep = {
        name: {f"{t:g}": a for t, a in row.items()} for name, row in sweep.accuracies.items()
    }
    summary = {
        "matching_accuracy": {
            name: rep.to_dict() for name, rep in sorted(matcher_reports.items())
        },
        "sweep": sweep.to_dict(),
        "recall_at_1": {
            "general": synthgen.recall_at_1(
                EmbeddingSet.from_records(
                    "general",
                    [r for r in bundle.general_set.records if r.instance_id in split.test_instances],
                )
            ),
            "expert": synthgen.recall_at_1(
                EmbeddingSet.from_records(
                    "expert",
                    [r for r in expert_set.records if r.instance_id in split.test_instances],
                )
            ),
        },
    }
    stage.record("report.json", h, seed).write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    stage.record("report.txt", h, seed).write_text(report.render_table(), encoding="utf-8")
    stage.promote()

    fused_avg = matcher_reports["fused"].average
    general_avg = matcher_reports["general"].average
    print(
        f"pipeline complete: general {100 * general_avg:.1f}% / expert "
        f"{100 * matcher_reports['expert'].average:.1f}% / fused {100 * fused_avg:.1f}% "
        f"matching accuracy at tau={config.tau:g} -> {out}"
    )


# ---------------------------------------------------------------------------
# argument parsing


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=os.environ.get(ENV_CONFIG), help="pipeline config JSON")
    p.add_argument("--threads", type=int, default=1,
                   help="worker bound; results are independent of this value")
    p.add_argument("--format", choices=("jsonl", "bin"), default=None,
                   help="embedding interchange format override")
    p.add_argument("--seed", type=int, default=None, help="seed override")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ilrkit", description=__doc__)
    parser.add_argument("--version", action="version", version=f"ilrkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate the synthetic dual-view bundle")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("split", help="identity-disjoint train/test split")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--test-fraction", type=float, default=0.3)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("build-galleries", help="difficulty-controlled gallery tasks")
    p.add_argument("--embeddings", required=True, help="general-view embedding set")
    p.add_argument("--split", required=True)
    p.add_argument("--side", choices=("train", "test"), default="test")
    p.add_argument("--k", type=int, default=dataengine.DEFAULT_K)
    p.add_argument("--tau", type=float, default=dataengine.DEFAULT_TAU)
    p.add_argument("--n-tasks", type=int, default=dataengine.DEFAULT_TASKS_PER_CATEGORY)
    p.add_argument("--hardest", action="store_true",
                   help="take the top-(k-1) most similar distractors instead of sampling")
    p.add_argument("--per-category", action="store_true",
                   help="build n-tasks for every category, distractors within category")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_build_galleries)

    p = sub.add_parser("build-detection", help="single-candidate detection tasks")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--side", choices=("train", "test"), default="test")
    p.add_argument("--tau", type=float, default=dataengine.DEFAULT_TAU)
    p.add_argument("--n-tasks", type=int, default=dataengine.DEFAULT_TASKS_PER_CATEGORY)
    p.add_argument("--positive-rate", type=float, default=0.5)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_build_detection)

    p = sub.add_parser("emit", help="emit conversation records for a task file")
    p.add_argument("--tasks", required=True)
    p.add_argument("--stage", choices=dataengine.STAGES, required=True)
    p.add_argument("--captions", help="JSONL of {query_id, caption} with one [SUBJECT] each")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_emit)

    p = sub.add_parser("train-expert", help="train the toy expert head")
    p.add_argument("--embeddings", required=True, help="raw-view embedding set")
    p.add_argument("--split", help="restrict training to the train side of this split")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_train_expert)

    p = sub.add_parser("embed", help="embed a raw set with a trained expert head")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("train-adapter", help="train the fusion adapter on gallery tasks")
    p.add_argument("--tasks", required=True)
    p.add_argument("--token-maps", required=True)
    p.add_argument("--expert-embeddings", required=True)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_train_adapter)

    p = sub.add_parser("fuse", help="dump the fusion output for one image")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--token-maps", required=True)
    p.add_argument("--expert-embeddings", required=True)
    p.add_argument("--image-id", required=True)
    p.add_argument("--out")
    _add_common(p)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("match", help="feature-similarity predictions for gallery tasks")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--tasks", required=True)
    p.add_argument("--kind", choices=simcore.KINDS, default="cosine")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("evaluate", help="score predictions against tasks")
    p.add_argument("--tasks", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--detection-tasks")
    p.add_argument("--detection-predictions")
    p.add_argument("--equal-weight", action="store_true",
                   help="equal-count mean for the weighted detection accuracy")
    p.add_argument("--out", required=True, help="output directory for report files")
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="difficulty sweep over tau tiers")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--side", choices=("train", "test"), default="test")
    p.add_argument("--expert-embeddings")
    p.add_argument("--adapter")
    p.add_argument("--token-maps")
    p.add_argument("--taus", type=float, nargs="+", default=[0.2, 0.5, 0.8])
    p.add_argument("--k", type=int, default=dataengine.DEFAULT_K)
    p.add_argument("--n-tasks", type=int, default=200)
    p.add_argument("--emit-plot-data", action="store_true")
    p.add_argument("--out", required=True, help="output directory")
    _add_common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("pipeline", help="full synthetic pipeline end to end")
    p.add_argument("--out", required=True, help="output directory")
    _add_common(p)
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = load_config(getattr(args, "config", None))
        if getattr(args, "seed", None) is not None:
            config.seed = args.seed
        else:
            args.seed = config.seed
        if getattr(args, "format", None) is None:
            args.format = config.format
        else:
            config.format = args.format
        if getattr(args, "threads", 1) < 1:
            raise ConfigError("--threads must be >= 1")
        config.validate()
        args.func(args, config)
    except IlrkitError as exc:
        sys.stderr.write(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n"
        )
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())

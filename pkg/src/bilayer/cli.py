"""Command-line entry point.

One binary, five subcommands:

    bilayer gen   --config world.json --out DIR
    bilayer train WORLD_DIR --config train.json --out DIR [--checkpoint BASE]
    bilayer decode CHECKPOINT --world WORLD_DIR --mode MODE [--t NAME] [--s NAME]
                   [--gamma G] [--n N] --out DIR
    bilayer eval  CHECKPOINT WORLD_DIR --experiments NAMES --out DIR
    bilayer ssl   CHECKPOINT WORLD_DIR --out DIR [--config train.json]

stdout carries data (JSON Lines); logs go to stderr.  Exit codes: 0 ok,
2 usage, 3 data error, 4 numeric failure.  Every command writes a
manifest.json into --out recording config/input hashes and outputs, even when
it fails; timestamps live only there, so reruns with one seed are
byte-identical everywhere else.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time

from . import __version__
from .evaluation import EXPERIMENTS, EvalContext, EvalError, run_experiment
from .network import (
    DecodeRequest,
    NetworkError,
    NumericsError,
    SceneInput,
    decode,
    fused_stream,
)
from .params import (
    ColumnMap,
    NetConfig,
    NetParams,
    ParamError,
    load_checkpoint,
    save_checkpoint,
)
from .training import (
    TrainConfig,
    TrainError,
    TrainingDiverged,
    ssl_step,
    train,
    write_history_csv,
)
from .triple_store import StoreError
from .vocab import VocabError, Vocabulary
from .world import (
    WorldConfig,
    WorldError,
    export_world,
    gen_world,
    load_world,
    substream,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

log = logging.getLogger("bilayer")


class UsageError(ValueError):
    pass


def _sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fp:
        for chunk in iter(lambda: fp.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _emit(record: dict) -> None:
    sys.stdout.write(json.dumps(record, sort_keys=True) + "\n")


def _load_json(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fp:
        return json.load(fp)


def _split_train_config(doc: dict, feature_dim: int, seed: int | None) -> tuple[TrainConfig, NetConfig]:
    """One flat config file carries both the optimizer and network widths."""
    net_keys = {"rep_dim", "ctx_dim", "tied", "dtype"}
    net_doc = {k: doc[k] for k in list(doc) if k in net_keys}
    train_doc = {k: v for k, v in doc.items() if k not in net_keys}
    if seed is not None:
        train_doc["seed"] = seed
    return TrainConfig.from_dict(train_doc), NetConfig(feature_dim=feature_dim, **net_doc)


def _manifest_run(command: str, args: argparse.Namespace, inputs: list[str], body) -> None:
    """Run a command body, then write the manifest (also on failure)."""
    outdir = args.out
    os.makedirs(outdir, exist_ok=True)
    manifest = {
        "command": command,
        "argv": sys.argv[1:],
        "version": __version__,
        "seed": getattr(args, "seed", None),
        "config": getattr(args, "config", None),
        "config_sha256": _sha256_file(args.config) if getattr(args, "config", None) else None,
        "inputs": {p: _sha256_file(p) for p in inputs if os.path.isfile(p)},
        "input_dirs": [p for p in inputs if os.path.isdir(p)],
        "outputs": [],
        "status": "failed",
        "started_at": time.time(),
    }
    try:
        manifest["outputs"] = body()
        manifest["status"] = "ok"
    finally:
        manifest["finished_at"] = time.time()
        with open(os.path.join(outdir, "manifest.json"), "w", encoding="utf-8") as fp:
            json.dump(manifest, fp, indent=2, sort_keys=True)
            fp.write("\n")


def _world_inputs(world_dir: str) -> list[str]:
    names = ("config.json", "vocab.json", "triples.jsonl", "negatives.jsonl",
             "features.json", "features.bin", "world.json")
    return [os.path.join(world_dir, n) for n in names]


def _checkpoint_base(checkpoint: str) -> str:
    return checkpoint[:-5] if checkpoint.endswith(".json") else checkpoint


def _checkpoint_inputs(checkpoint: str) -> list[str]:
    base = _checkpoint_base(checkpoint)
    return [base + ".json", base + ".bin"]


def _load_model(checkpoint: str, vocab: Vocabulary) -> tuple[NetParams, ColumnMap]:
    params = load_checkpoint(_checkpoint_base(checkpoint), vocab)
    return params, ColumnMap(vocab)


# -- subcommands -----------------------------------------------------------------


def cmd_gen(args: argparse.Namespace) -> None:
    doc = _load_json(args.config) if args.config else {}
    if args.seed is not None:
        doc["seed"] = args.seed
    try:
        config = WorldConfig(**doc)
    except TypeError as exc:
        raise UsageError(f"bad world config: {exc}") from exc

    def body() -> list[str]:
        world = gen_world(config)
        written = export_world(world, args.out)
        store = world.build_store()
        _emit(
            {
                "event": "world",
                "entities": len(world.entities),
                "test_entities": len(world.test_entities),
                "scenes": len(world.scenes),
                "instances": len(world.vocab.instances),
                "triples": sum(1 for _ in store.iter_positive()),
                "negatives": sum(1 for _ in store.iter_negative()),
                "held_out_combos": len(world.heldout),
                "out": args.out,
            }
        )
        return written

    _manifest_run("gen", args, [args.config] if args.config else [], body)


def cmd_train(args: argparse.Namespace) -> None:
    world = load_world(args.world)
    store = world.build_store()
    doc = _load_json(args.config) if args.config else {}
    train_config, net_config = _split_train_config(doc, world.config.feature_dim, args.seed)

    def body() -> list[str]:
        cmap = ColumnMap(world.vocab)
        if args.checkpoint:
            params, _ = _load_model(args.checkpoint, world.vocab)
            if params.config.to_dict() != net_config.to_dict():
                log.info("resuming with the checkpoint's network shape")
        else:
            params = NetParams.init(
                world.vocab, net_config, substream(train_config.seed, "init")
            )
        history = train(params, cmap, world.vocab, store, train_config, world=world)
        for row in history:
            _emit({"event": "epoch", **row})
        save_checkpoint(params, world.vocab, os.path.join(args.out, "model"))
        with open(os.path.join(args.out, "history.csv"), "w", encoding="utf-8") as fp:
            write_history_csv(history, fp)
        with open(os.path.join(args.out, "train-config.json"), "w", encoding="utf-8") as fp:
            json.dump(train_config.to_dict(), fp, indent=2, sort_keys=True)
            fp.write("\n")
        final = history[-1]["loss"] if history else float("nan")
        _emit({"event": "trained", "checkpoint": "model.json", "final_loss": final})
        return ["model.json", "model.bin", "history.csv", "train-config.json"]

    inputs = _world_inputs(args.world) + ([args.config] if args.config else [])
    _manifest_run("train", args, inputs, body)


def _decode_record(trace, vocab: Vocabulary, mode: str) -> dict:
    name = lambda i: None if i is None else vocab.name_of(i)  # noqa: E731
    return {
        "mode": mode,
        "t": name(trace.instance_id),
        "s": name(trace.subject_id),
        "p": name(trace.predicate_id),
        "o": name(trace.object_id),
        "labels": {fam: vocab.name_of(i) for fam, i in sorted(trace.labels.items())},
    }


def cmd_decode(args: argparse.Namespace) -> None:
    world = load_world(args.world)
    vocab = world.vocab

    def body() -> list[str]:
        params, cmap = _load_model(args.checkpoint, vocab)
        rng = substream(args.seed if args.seed is not None else 0, "decode", args.mode)
        n = args.n

        if args.mode == "perceive":
            if not args.t:
                raise UsageError("perceive needs --t SCENE")
            scene = world.scene(args.t)
            if scene.scene_key not in world.features:
                raise StoreError(f"scene {args.t!r} has no stored features")
            passes = []
            if scene.binaries:
                for i, _ in enumerate(scene.binaries):
                    s_name, _p, o_name = scene.binaries[i]
                    passes.append(
                        SceneInput(
                            scene=world.features[scene.scene_key],
                            subject_box=world.features[scene.bb_key(s_name)],
                            object_box=world.features[scene.bb_key(o_name)],
                            predicate_box=world.features[scene.rel_key(i)],
                        )
                    )
            else:
                for m in scene.members:
                    passes.append(
                        SceneInput(
                            scene=world.features[scene.scene_key],
                            subject_box=world.features[scene.bb_key(m)],
                        )
                    )
            for feats in passes:
                request = DecodeRequest(
                    mode="perception", features=feats, instance_attention=True,
                    subject_support=args.support, object_support=args.support,
                )
                trace = decode(params, cmap, vocab, request, rng)
                _emit(_decode_record(trace, vocab, "perceive"))
            return []

        if args.mode == "episodic":
            if not args.t:
                raise UsageError("episodic needs --t INSTANCE")
            t = vocab.id_of(args.t)
            for _ in range(n):
                request = DecodeRequest(
                    mode="episodic", instance_id=t,
                    subject_support=args.support, object_support=args.support,
                )
                trace = decode(params, cmap, vocab, request, rng)
                _emit(_decode_record(trace, vocab, "episodic"))
            return []

        if args.mode == "semantic":
            s = vocab.id_of(args.s) if args.s else None
            for _ in range(n):
                request = DecodeRequest(
                    mode="semantic", subject_id=s,
                    subject_support=args.support, object_support=args.support,
                )
                trace = decode(params, cmap, vocab, request, rng)
                _emit(_decode_record(trace, vocab, "semantic"))
            return []

        if args.mode == "fuse":
            if not args.t:
                raise UsageError("fuse needs --t INSTANCE")
            if args.gamma is None:
                raise UsageError("fuse needs --gamma")
            t = vocab.id_of(args.t)
            store = world.build_store()
            n_obs = store.n_statements(t)

            def episodic_draw(r):
                request = DecodeRequest(
                    mode="episodic", instance_id=t,
                    subject_support=args.support, object_support=args.support,
                )
                return _decode_record(decode(params, cmap, vocab, request, r), vocab, "fuse")

            def semantic_draw(r):
                request = DecodeRequest(
                    mode="semantic",
                    subject_support=args.support, object_support=args.support,
                )
                return _decode_record(decode(params, cmap, vocab, request, r), vocab, "fuse")

            for record in fused_stream(semantic_draw, episodic_draw, args.gamma, n_obs, rng, n):
                _emit(record)
            return []

        raise UsageError(f"unknown mode {args.mode!r}")

    inputs = _world_inputs(args.world) + _checkpoint_inputs(args.checkpoint)
    _manifest_run("decode", args, inputs, body)


def cmd_eval(args: argparse.Namespace) -> None:
    world = load_world(args.world)
    names = (
        sorted(EXPERIMENTS) if args.experiments == "all"
        else [n.strip() for n in args.experiments.split(",") if n.strip()]
    )
    if not names:
        raise UsageError("no experiments named")

    def body() -> list[str]:
        store = world.build_store()
        params, cmap = _load_model(args.checkpoint, world.vocab)
        doc = _load_json(args.config) if args.config else {}
        train_config, _ = _split_train_config(doc, world.config.feature_dim, args.seed)
        ctx = EvalContext(
            world=world, store=store, vocab=world.vocab,
            params=params, cmap=cmap, train_config=train_config,
            seed=args.seed if args.seed is not None else train_config.seed,
        )
        outputs = []
        rows = []
        for name in names:
            report = run_experiment(name, ctx)
            log.info("experiment %s done in %.1fs", name, report.wall_clock_s)
            fname = f"report-{name}.json"
            with open(os.path.join(args.out, fname), "w", encoding="utf-8") as fp:
                json.dump(report.to_dict(volatile=False), fp, indent=2, sort_keys=True)
                fp.write("\n")
            outputs.append(fname)
            rows.extend(report.rows())
            _emit({"event": "report", **report.to_dict(volatile=False)})
        with open(os.path.join(args.out, "metrics.csv"), "w", encoding="utf-8") as fp:
            fp.write("experiment,metric,value\n")
            for exp, metric, value in rows:
                fp.write(f"{exp},{metric},{value}\n")
        with open(os.path.join(args.out, "index.json"), "w", encoding="utf-8") as fp:
            json.dump({"reports": outputs, "csv": "metrics.csv"}, fp, indent=2, sort_keys=True)
            fp.write("\n")
        return outputs + ["metrics.csv", "index.json"]

    inputs = _world_inputs(args.world) + _checkpoint_inputs(args.checkpoint)
    _manifest_run("eval", args, inputs, body)


def cmd_ssl(args: argparse.Namespace) -> None:
    world = load_world(args.world)

    def body() -> list[str]:
        vocab = world.vocab
        params, cmap = _load_model(args.checkpoint, vocab)
        doc = _load_json(args.config) if args.config else {}
        config, _ = _split_train_config(doc, world.config.feature_dim, args.seed)
        unlabeled = [s.name for s in world.scenes_of_kind("unlabeled")]
        if not unlabeled:
            raise StoreError("world has no unlabeled scenes")
        store = world.build_store()
        params, cmap, report = ssl_step(
            params, cmap, vocab, world, unlabeled, config, store=store
        )
        save_checkpoint(params, vocab, os.path.join(args.out, "model"))
        with open(os.path.join(args.out, "vocab.json"), "w", encoding="utf-8") as fp:
            fp.write(vocab.dumps() + "\n")
        with open(os.path.join(args.out, "pseudo.jsonl"), "w", encoding="utf-8") as fp:
            for ex in report.pseudo_unary:
                if ex["fam"] == "Identity":
                    continue
                fp.write(json.dumps(
                    {"s": vocab.name_of(ex["s"]), "p": "hasAttribute",
                     "o": vocab.name_of(ex["o"]), "t": vocab.name_of(ex["t"]),
                     "y": 1, "provenance": "ssl"}, separators=(", ", ": ")) + "\n")
            for ex in report.pseudo_binary:
                fp.write(json.dumps(
                    {"s": vocab.name_of(ex["s"]), "p": vocab.name_of(ex["p"]),
                     "o": vocab.name_of(ex["o"]), "t": vocab.name_of(ex["t"]),
                     "y": 1, "provenance": "ssl"}, separators=(", ", ": ")) + "\n")
        summary = {
            "event": "ssl",
            "new_instances": len(report.new_instances),
            "new_entities": len(report.new_entities),
            "pseudo_statements": len(report.pseudo_unary) + len(report.pseudo_binary),
        }
        log.info(
            "vocabulary grew by %d instances and %d entities",
            len(report.new_instances), len(report.new_entities),
        )
        _emit(summary)
        return ["model.json", "model.bin", "vocab.json", "pseudo.jsonl"]

    inputs = (
        _world_inputs(args.world)
        + _checkpoint_inputs(args.checkpoint)
        + ([args.config] if args.config else [])
    )
    _manifest_run("ssl", args, inputs, body)


# -- argument parsing ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bilayer",
        description="Bilayer index/representation network over a symbolic triple store",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic world")
    p.add_argument("--config", help="flat JSON world config")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("train", help="train a model on a generated world")
    p.add_argument("world", help="world directory from `bilayer gen`")
    p.add_argument("--config", help="flat JSON train/network config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--checkpoint", help="resume from this checkpoint")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("decode", help="stream sampled statements from a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("--world", required=True)
    p.add_argument("--mode", required=True, choices=("perceive", "episodic", "semantic", "fuse"))
    p.add_argument("--t", help="instance (episodic/fuse) or scene (perceive) name")
    p.add_argument("--s", help="subject clamp for semantic mode")
    p.add_argument("--gamma", type=float, help="background concentration for fuse")
    p.add_argument("--n", type=int, default=100, help="number of sampled passes")
    p.add_argument("--seed", type=int)
    p.add_argument("--support", choices=("concepts", "entities"), default="entities",
                   help="index support for subject/object sampling")
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(fn=cmd_decode)

    p = sub.add_parser("eval", help="run experiment scenarios and write reports")
    p.add_argument("checkpoint")
    p.add_argument("world")
    p.add_argument("--experiments", default="all",
                   help="comma-separated scenario names, or 'all'")
    p.add_argument("--config", help="train config for scenarios that train models")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("ssl", help="self-labeled growth on the unlabeled shard")
    p.add_argument("checkpoint")
    p.add_argument("world")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(fn=cmd_ssl)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "threads", 1) != 1:
        log.info("--threads is accepted but execution is single-threaded")
    try:
        args.fn(args)
    except UsageError as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except (TrainingDiverged, NumericsError) as exc:
        log.error("%s", exc)
        return EXIT_NUMERIC
    except (
        VocabError, StoreError, WorldError, ParamError, EvalError,
        TrainError, NetworkError, OSError, json.JSONDecodeError, KeyError,
    ) as exc:
        log.error("%s", exc)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

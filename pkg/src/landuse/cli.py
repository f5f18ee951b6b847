"""Pipeline driver: filter -> train -> adapt -> predict -> map -> eval.

Configuration is a flat key=value text file with command-line overrides
(``landuse <cmd> --config cfg.txt key=value ...``); every artifact embeds
the config hash and seed for provenance. Model files are binary, so their
provenance goes to a ``.meta.json`` sidecar.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import synth
from .adaptive import GateConfig, adaptive_finetune
from .classifier import Schedule, init_model, load_model, save_model, train
from .dataset import load_manifest
from .evaluation import image_accuracy, mapping_metrics, per_class_report
from .fusion_mapping import (aggregate_parcels, equal_weights, export_map,
                             predict_image)
from .geodata import (assign, assignments_from_jsonl, assignments_to_jsonl,
                      parse_parcels)
from .taxonomy import Level, Taxonomy, builtin_taxonomy

SUBCOMMANDS = ("filter", "train", "adapt", "predict", "map", "eval",
               "synth", "all")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration


def parse_config_text(text: str) -> dict[str, str]:
    cfg = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        cfg[key.strip()] = value.strip()
    return cfg


def load_config(path: str, overrides) -> dict[str, str]:
    cfg = parse_config_text(Path(path).read_text(encoding="utf-8"))
    cfg["_config_dir"] = str(Path(path).resolve().parent)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected key=value")
        key, value = item.split("=", 1)
        cfg[key] = value
    if "seed" not in cfg:
        raise ConfigError("config must set a seed")
    return cfg


def config_hash(cfg: dict[str, str]) -> str:
    payload = "\n".join(f"{k}={cfg[k]}" for k in sorted(cfg)
                        if not k.startswith("_"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class Pipeline:
    def __init__(self, cfg: dict[str, str]):
        self.cfg = cfg
        self.seed = int(cfg["seed"])
        self.hash = config_hash(cfg)
        self.base = Path(cfg.get("_config_dir", "."))
        out = os.environ.get("LANDUSE_OUT_DIR") or cfg.get("out_dir", "out")
        self.out_dir = self._resolve(out)
        self.streams = [s for s in self.cfg.get("streams", "object,scene").split(",") if s]
        taxonomy_path = cfg.get("taxonomy")
        if taxonomy_path:
            self.taxonomy = Taxonomy.from_text(
                self._resolve(taxonomy_path).read_text(encoding="utf-8"))
        else:
            self.taxonomy = builtin_taxonomy()

    # -- config access ---------------------------------------------------

    def _resolve(self, value: str) -> Path:
        p = Path(value)
        return p if p.is_absolute() else self.base / p

    def path(self, key: str) -> Path:
        if key not in self.cfg:
            raise ConfigError(f"config key {key!r} is required")
        return self._resolve(self.cfg[key])

    def f(self, key: str, default: float) -> float:
        return float(self.cfg.get(key, default))

    def i(self, key: str, default: int) -> int:
        return int(self.cfg.get(key, default))

    @property
    def level(self) -> Level:
        return Level(self.cfg.get("level", "fine"))

    @property
    def provenance(self) -> dict:
        return {"config_sha256": self.hash, "seed": self.seed}

    def train_schedule(self, stream_index: int) -> Schedule:
        return Schedule(
            initial_lr=self.f("train.lr", 0.01),
            decay_factor=self.f("train.decay_factor", 10.0),
            decay_every=self.i("train.decay_every", 5),
            total_epochs=self.i("train.epochs", 12),
            batch_size=self.i("train.batch_size", 256),
            seed=self.seed + 1000 * (stream_index + 1),
            domain_ratio=self.f("train.domain_ratio", 0.5),
            momentum=self.f("train.momentum", 0.0),
            weight_decay=self.f("train.weight_decay", 0.0))

    def gate_config(self, stream_index: int) -> GateConfig:
        schedule = Schedule(
            initial_lr=self.f("finetune.lr", 1e-5),
            decay_factor=self.f("finetune.decay_factor", 10.0),
            decay_every=self.i("finetune.decay_every", 1),
            total_epochs=self.i("finetune.epochs", 4),
            batch_size=self.i("finetune.batch_size",
                              self.i("train.batch_size", 256)),
            seed=self.seed + 1000 * (stream_index + 1) + 500,
            domain_ratio=self.f("train.domain_ratio", 0.5))
        return GateConfig(mode=self.cfg.get("gate.mode", "hard"),
                          threshold=self.f("gate.threshold", 0.5),
                          schedule=schedule)

    def fusion_weights(self) -> dict[str, float]:
        spec = self.cfg.get("fusion.weights", "equal")
        if spec == "equal":
            return equal_weights(self.streams)
        weights = {}
        for part in spec.split(","):
            stream, value = part.split(":")
            weights[stream.strip()] = float(value)
        return weights

    # -- artifact paths --------------------------------------------------

    def model_path(self, stream: str, adapted: bool = False) -> Path:
        suffix = "_adapted" if adapted else ""
        return self.out_dir / f"model_{stream}{suffix}.lusm"

    @property
    def assignments_path(self) -> Path:
        return self.out_dir / "assignments.jsonl"

    @property
    def predictions_path(self) -> Path:
        return self.out_dir / "predictions.jsonl"

    # -- shared loaders --------------------------------------------------

    def load_parcels(self):
        return parse_parcels(self.path("parcels").read_text(encoding="utf-8"),
                             self.taxonomy)

    def load_split(self, key: str):
        return load_manifest(self.path(key), self.taxonomy)

    def read_predictions(self) -> dict[str, int]:
        preds = {}
        for line in self.predictions_path.read_text(encoding="utf-8").splitlines():
            obj = json.loads(line)
            if "image" in obj:
                preds[obj["image"]] = obj["pred"]
        return preds

    def _write_jsonl(self, path: Path, body: str) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        header = json.dumps({"provenance": self.provenance})
        path.write_text(header + "\n" + body, encoding="utf-8")


# ---------------------------------------------------------------------------
# subcommands


def cmd_filter(p: Pipeline) -> None:
    records = [(r.id, r.geo) for r in p.load_split("map_manifest")
               if r.geo is not None]
    assignments = assign(records, p.load_parcels(),
                         dilation_m=p.f("dilation_m", 5.0))
    p._write_jsonl(p.assignments_path, assignments_to_jsonl(assignments))


def cmd_train(p: Pipeline) -> None:
    train_records = p.load_split("train_manifest")
    val_records = (p.load_split("val_manifest")
                   if "val_manifest" in p.cfg else None)
    n = len(p.taxonomy.fine_classes)
    p.out_dir.mkdir(parents=True, exist_ok=True)
    for k, stream in enumerate(p.streams):
        d = len(train_records[0].features[stream])
        result = train(init_model(n, d, stream), train_records,
                       p.train_schedule(k), validation=val_records)
        save_model(result.model, p.model_path(stream))
        meta = dict(p.provenance, stream=stream,
                    val_accuracy=result.val_accuracy)
        p.model_path(stream).with_suffix(".lusm.meta.json").write_text(
            json.dumps(meta, indent=2) + "\n", encoding="utf-8")


def cmd_adapt(p: Pipeline) -> None:
    train_records = p.load_split("train_manifest")
    val_records = (p.load_split("val_manifest")
                   if "val_manifest" in p.cfg else None)
    for k, stream in enumerate(p.streams):
        model = load_model(p.model_path(stream))
        result = adaptive_finetune(model, train_records, p.gate_config(k),
                                   validation=val_records)
        save_model(result.model, p.model_path(stream, adapted=True))
        meta = dict(p.provenance, stream=stream,
                    val_accuracy=result.val_accuracy)
        p.model_path(stream, adapted=True).with_suffix(
            ".lusm.meta.json").write_text(
            json.dumps(meta, indent=2) + "\n", encoding="utf-8")


def cmd_predict(p: Pipeline) -> None:
    use_adapted = p.cfg.get("predict.use_adapted", "true").lower() != "false"
    models = {}
    for stream in p.streams:
        path = p.model_path(stream, adapted=use_adapted)
        if use_adapted and not path.exists():
            path = p.model_path(stream)
        models[stream] = load_model(path)
    weights = p.fusion_weights()
    lines = []
    for record in p.load_split("map_manifest"):
        pred, _scores = predict_image(models, record, weights)
        lines.append(json.dumps({"image": record.id, "pred": pred,
                                 "class": p.taxonomy.fine_classes[pred]}))
    p._write_jsonl(p.predictions_path,
                   "\n".join(lines) + ("\n" if lines else ""))


def cmd_map(p: Pipeline) -> None:
    parcels = p.load_parcels()
    assignments = assignments_from_jsonl(
        p.assignments_path.read_text(encoding="utf-8"))
    parcel_preds = aggregate_parcels(assignments, p.read_predictions())
    doc = json.loads(export_map(parcels, parcel_preds, p.taxonomy, p.level))
    doc["provenance"] = p.provenance
    (p.out_dir / "map.geojson").write_text(
        json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def cmd_eval(p: Pipeline) -> None:
    parcels = p.load_parcels()
    assignments = assignments_from_jsonl(
        p.assignments_path.read_text(encoding="utf-8"))
    predictions = p.read_predictions()
    include = p.cfg.get("eval.include_untruthed", "false").lower() == "true"
    report = mapping_metrics(assignments, predictions, parcels, p.taxonomy,
                             level=p.level, include_untruthed=include)
    labels = {r.id: r.label for r in p.load_split("map_manifest")
              if r.label is not None}
    accuracy = None
    if all(i in labels for i in predictions):
        rolled_preds = {i: p.taxonomy.roll_up(c, p.level)
                        for i, c in predictions.items()}
        rolled_labels = {i: p.taxonomy.roll_up(c, p.level)
                         for i, c in labels.items()}
        accuracy = image_accuracy(rolled_preds, rolled_labels)
    out = {"provenance": p.provenance, "image_accuracy": accuracy,
           "mapping": report.to_json()}
    (p.out_dir / "report.json").write_text(
        json.dumps(out, indent=2) + "\n", encoding="utf-8")
    (p.out_dir / "per_class.csv").write_text(
        per_class_report(report, p.taxonomy,
                         image_predictions=predictions, image_labels=labels),
        encoding="utf-8")


def cmd_synth(p: Pipeline) -> None:
    data_dir = p.path("parcels").parent
    paths = synth.make_city(
        data_dir, p.taxonomy, seed=p.seed,
        n_classes=p.i("synth.classes", 8),
        grid=p.i("synth.grid", 4),
        images_per_parcel=p.i("synth.images_per_parcel", 6),
        geo_sigma_m=p.f("synth.geo_sigma_m", 10.0),
        train_per_class=p.i("synth.train_per_class", 40),
        val_per_class=p.i("synth.val_per_class", 10),
        dim=p.i("synth.dim", 16),
        noise_rate=p.f("synth.noise", 0.3),
        separation=p.f("synth.separation", 3.0),
        spread=p.f("synth.spread", 1.0),
        feature_scale=p.f("synth.feature_scale", 1.0),
        streams=tuple(p.streams))
    for key in ("parcels", "train_manifest", "val_manifest", "map_manifest"):
        short = {"parcels": "parcels", "train_manifest": "train",
                 "val_manifest": "val", "map_manifest": "map"}[key]
        if key in p.cfg and p.path(key).resolve() != paths[short].resolve():
            raise ConfigError(
                f"synth wrote {paths[short]}, but config {key} points at"
                f" {p.path(key)}")


COMMANDS = {
    "filter": cmd_filter,
    "train": cmd_train,
    "adapt": cmd_adapt,
    "predict": cmd_predict,
    "map": cmd_map,
    "eval": cmd_eval,
    "synth": cmd_synth,
}


def cmd_all(p: Pipeline) -> None:
    for name in ("synth", "filter", "train", "adapt", "predict", "map", "eval"):
        if name == "synth" and p.cfg.get("all.skip_synth", "false").lower() == "true":
            continue
        COMMANDS[name](p)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="landuse",
        description="Land-use mapping pipeline over geotagged image features.")
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", required=True, help="key=value config file")
    parser.add_argument("overrides", nargs="*", metavar="key=value",
                        help="config overrides")
    args = parser.parse_intermixed_args(argv)
    try:
        cfg = load_config(args.config, args.overrides)
        pipeline = Pipeline(cfg)
        if args.subcommand == "all":
            cmd_all(pipeline)
        else:
            COMMANDS[args.subcommand](pipeline)
    except Exception as e:  # noqa: BLE001 - single-line machine-parsable exit
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

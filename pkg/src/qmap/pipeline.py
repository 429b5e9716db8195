"""Pipeline stages behind the command line, one function per stage.

A run works inside one workspace directory::

    data/manifest.csv           synthesized dataset (or ``manifest=`` in config)
    labels/<method>/            label stores (``$QMAP_CACHE`` overrides the root)
    models/gen_<method>.ckpt    trained generators
    models/pool.ckpt            trained pooler
    eval/ predict/ study/       reports and maps
    <stage>.cfg                 resolved configuration of the last run
    <stage>.jsonl               machine-readable summary of the last run

Artifacts record a fingerprint of the dataset they were built from, and a
stage refuses to consume artifacts whose fingerprint does not match.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .config import format_key_values, read_key_values
from .dataset import (
    DatasetManifest,
    DistortionRecipe,
    SplitSpec,
    load_labels,
    load_manifest,
    materialize_labels,
    patch_arrays,
    split,
    synthesize,
)
from .errors import DomainError, FingerprintError, LoadError, StateError
from .eval import StudySetup, evaluate, logistic_holdout, patch_average_study, write_reports, write_study
from .image import as_image, crop_border, extract_patches, load_image
from .maps import FrMethod, MapConfig, compute_map, map_border, pool_map, save_map
from .models import (
    FusionMode,
    PoolKind,
    PoolNetSpec,
    UNetSpec,
    build_generator,
    build_pooler,
    pooler_scores,
    predict_score,
    train_generator,
    train_pooler,
)
from .nn import load_checkpoint, save_checkpoint

log = logging.getLogger(__name__)

DEFAULTS: dict[str, str] = {
    "seed": "0",
    "workers": "1",
    "methods": "fsim_gm",
    "fusion": "single",
    "manifest": "",
    "n_bases": "10",
    "image_size": "192",
    "kinds": "gaussian_blur,white_noise,jpeg_blocking,local_blockwise",
    "levels": "1,2,3,4,5",
    "train_fraction": "0.8",
    "patch_size": "144",
    "stride": "120",
    "gen_channels": "32,64,128,256",
    "gen_epochs": "10",
    "gen_lr": "0.001",
    "gen_batch": "8",
    "pool_kind": "dpn",
    "pool_source": "predicted",
    "pool_channels": "32,64,128,128,128",
    "pool_fc": "512",
    "pool_fc2": "1024",
    "pool_epochs": "10",
    "pool_lr": "0.005",
    "pool_batch": "8",
    "hflip": "true",
    "weight_decay": "1e-11",
    "eval_logistic": "false",
    "study_blocks": "1,2,4,8,16,24,36,48",
    "study_target": "std_dev",
    "study_epochs": "10",
}

POOL_SOURCES = ("predicted", "ground_truth", "raw")
BUNDLED = ("smoke",)


def bundled_config(name: str) -> str:
    """Path of a config shipped with the package."""
    ref = resources.files("qmap") / "configs" / f"{name}.cfg"
    return str(ref)


@dataclass(frozen=True)
class RunConfig:
    """Resolved ``key=value`` settings for one run."""

    values: dict

    @classmethod
    def resolve(cls, config_path: str | None = None, overrides: dict | None = None) -> "RunConfig":
        values = dict(DEFAULTS)
        if config_path:
            path = bundled_config(config_path) if config_path in BUNDLED else config_path
            loaded = read_key_values(path)
            unknown = sorted(set(loaded) - set(DEFAULTS))
            if unknown:
                raise LoadError(f"{path}: unknown config keys {', '.join(unknown)}")
            values.update(loaded)
        for key, value in (overrides or {}).items():
            if key not in DEFAULTS:
                raise LoadError(f"unknown config key {key!r}")
            if value is not None:
                values[key] = str(value)
        cfg = cls(values)
        cfg.validate()
        return cfg

    def text(self) -> str:
        return format_key_values(self.values)

    def get(self, key: str) -> str:
        return self.values[key]

    def get_int(self, key: str) -> int:
        return self._cast(key, int)

    def get_float(self, key: str) -> float:
        return self._cast(key, float)

    def get_bool(self, key: str) -> bool:
        v = self.values[key].strip().lower()
        if v not in ("true", "false", "1", "0", "yes", "no"):
            raise LoadError(f"{key}: expected a boolean, got {v!r}")
        return v in ("true", "1", "yes")

    def get_ints(self, key: str) -> tuple[int, ...]:
        return tuple(self._cast(key, int, part) for part in self.get_list(key))

    def get_list(self, key: str) -> list[str]:
        return [p.strip() for p in self.values[key].split(",") if p.strip()]

    def _cast(self, key, caster, raw=None):
        raw = self.values[key] if raw is None else raw
        try:
            return caster(raw)
        except ValueError:
            raise LoadError(f"{key}: cannot parse {raw!r} as {caster.__name__}") from None

    @property
    def methods(self) -> tuple[FrMethod, ...]:
        return tuple(FrMethod.parse(m) for m in self.get_list("methods"))

    @property
    def fusion(self) -> FusionMode:
        return FusionMode(self.get("fusion"), self.methods)

    def validate(self) -> None:
        self.methods
        self.fusion
        if self.get("pool_source") not in POOL_SOURCES:
            raise DomainError(f"pool_source must be one of {POOL_SOURCES}")
        PoolKind.parse(self.get("pool_kind"))
        if self.get("study_target") not in ("average", "std_dev"):
            raise DomainError("study_target must be average or std_dev")
        for key in ("seed", "workers", "n_bases", "image_size", "patch_size", "stride",
                    "gen_epochs", "gen_batch", "pool_fc", "pool_fc2", "pool_epochs",
                    "pool_batch", "study_epochs"):
            self.get_int(key)
        for key in ("train_fraction", "gen_lr", "pool_lr", "weight_decay"):
            self.get_float(key)
        for key in ("levels", "gen_channels", "pool_channels", "study_blocks"):
            self.get_ints(key)
        self.get_bool("hflip")
        self.get_bool("eval_logistic")
        if self.get_int("workers") < 1:
            raise DomainError("workers must be at least 1")


# --- workspace helpers -----------------------------------------------------

class Workspace:
    def __init__(self, root: str, cfg: RunConfig):
        self.root = os.path.abspath(root)
        self.cfg = cfg

    def path(self, *parts: str) -> str:
        return os.path.join(self.root, *parts)

    def rel(self, path: str) -> str:
        return os.path.relpath(path, self.root).replace(os.sep, "/")

    @property
    def manifest_path(self) -> str:
        return os.path.abspath(self.cfg.get("manifest")) if self.cfg.get("manifest") else self.path("data", "manifest.csv")

    @property
    def label_root(self) -> str:
        return os.environ.get("QMAP_CACHE") or self.path("labels")

    def gen_path(self, method: FrMethod) -> str:
        return self.path("models", f"gen_{method.value}.ckpt")

    @property
    def pool_path(self) -> str:
        return self.path("models", "pool.ckpt")

    def manifest(self) -> DatasetManifest:
        return load_manifest(self.manifest_path)

    def splits(self, m: DatasetManifest):
        return split(m, SplitSpec(self.cfg.get_float("train_fraction"), self.cfg.get_int("seed")))


def dataset_fingerprint(m: DatasetManifest) -> str:
    """Hash of every entry and the bytes of every file it points to."""
    h = hashlib.sha256()
    for e in m.entries:
        h.update(json.dumps([e.id, e.distortion_type, e.level, e.score, e.score_kind]).encode())
        for p in (m.distorted_path(e), m.reference_path(e)):
            if p:
                with open(p, "rb") as fh:
                    h.update(hashlib.sha256(fh.read()).digest())
    return h.hexdigest()


def _check_fingerprint(found, expected: str, what: str) -> None:
    if found != expected:
        raise FingerprintError(
            f"{what} was built from a different dataset (fingerprint {str(found)[:12]}, "
            f"current dataset {expected[:12]}); rebuild it or point the config at the matching manifest"
        )


class Summary:
    """Collects JSON-lines records for a stage summary."""

    def __init__(self, stage: str):
        self.records = [{"stage": stage}]

    def add(self, **record) -> None:
        self.records.append(record)

    def write(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for r in self.records:
                fh.write(json.dumps(r, sort_keys=True) + "\n")


def _finish(ws: Workspace, stage: str, summary: Summary, outputs: list[str]) -> Summary:
    summary.add(event="done", outputs=sorted(ws.rel(p) for p in outputs))
    with open(ws.path(f"{stage}.cfg"), "w", encoding="utf-8") as fh:
        fh.write(ws.cfg.text())
    summary.write(ws.path(f"{stage}.jsonl"))
    return summary


def _rgb(img: np.ndarray) -> np.ndarray:
    return np.repeat(img, 3, axis=2) if img.shape[2] == 1 else img


# --- stages ----------------------------------------------------------------

def run_map(dist_path: str, ref_path: str, method, out: str | None = None,
            cfg: MapConfig | None = None) -> dict[str, float]:
    qmap = compute_map(method, load_image(dist_path), load_image(ref_path), cfg)
    scores = {s: pool_map(qmap, s) for s in ("average", "std_dev", "deviation")}
    if out:
        save_map(qmap, out)
    return scores


def run_synth(ws: Workspace) -> Summary:
    cfg = ws.cfg
    recipes = [DistortionRecipe(k, lv) for k in cfg.get_list("kinds") for lv in cfg.get_ints("levels")]
    m = synthesize(ws.path("data"), n_bases=cfg.get_int("n_bases"), recipes=recipes,
                   seed=cfg.get_int("seed"), size=cfg.get_int("image_size"), workers=cfg.get_int("workers"))
    s = Summary("synth")
    s.add(event="dataset", entries=len(m), fingerprint=dataset_fingerprint(m),
          manifest=ws.rel(ws.path("data", "manifest.csv")))
    return _finish(ws, "synth", s, [ws.path("data", "manifest.csv")])


def run_labels(ws: Workspace) -> Summary:
    m = ws.manifest()
    fp = dataset_fingerprint(m)
    s = Summary("labels")
    outputs = []
    for method in ws.cfg.methods:
        store = materialize_labels(m, method, ws.label_root, workers=ws.cfg.get_int("workers"))
        sidecar = os.path.join(store.root, "fingerprint.json")
        with open(sidecar, "w", encoding="utf-8") as fh:
            json.dump({"dataset": fp, "method": method.value}, fh, sort_keys=True)
        outputs += [store.index_path, sidecar]
        s.add(event="labels", method=method.value, entries=len(store.rows))
    return _finish(ws, "labels", s, outputs)


def _labels_for(ws: Workspace, method: FrMethod, fp: str):
    root = os.path.join(ws.label_root, method.value)
    try:
        with open(os.path.join(root, "fingerprint.json"), encoding="utf-8") as fh:
            found = json.load(fh).get("dataset")
    except OSError:
        raise LoadError(f"no {method.value} label store under {ws.label_root}; run the labels stage") from None
    _check_fingerprint(found, fp, f"label store {root}")
    return load_labels(root)


def run_train_gen(ws: Workspace) -> Summary:
    cfg = ws.cfg
    m = ws.manifest()
    fp = dataset_fingerprint(m)
    train_m, _ = ws.splits(m)
    ids = [e.id for e in train_m.entries]
    os.makedirs(ws.path("models"), exist_ok=True)
    s = Summary("train-gen")
    outputs = []
    for method in cfg.methods:
        store = _labels_for(ws, method, fp)
        x, y, _, _ = patch_arrays(store, cfg.get_int("patch_size"), cfg.get_int("stride"), ids=ids)
        gen = build_generator(UNetSpec(stage_channels=cfg.get_ints("gen_channels")), seed=cfg.get_int("seed"))
        gen, hist = train_generator(gen, _rgb_batch(x), y, epochs=cfg.get_int("gen_epochs"),
                                    lr=cfg.get_float("gen_lr"), seed=cfg.get_int("seed"),
                                    batch_size=cfg.get_int("gen_batch"), hflip=cfg.get_bool("hflip"),
                                    weight_decay=cfg.get_float("weight_decay"))
        gen.meta = dict(gen.meta, dataset=fp, method=method.value)
        save_checkpoint(ws.gen_path(method), gen, seed=cfg.get_int("seed"))
        outputs.append(ws.gen_path(method))
        s.add(event="generator", method=method.value, patches=len(x), checksum=gen.checksum(),
              **hist.to_dict())
    return _finish(ws, "train-gen", s, outputs)


def _rgb_batch(x: np.ndarray) -> np.ndarray:
    return np.repeat(x, 3, axis=3) if x.shape[3] == 1 else x


def _frozen_generators(ws: Workspace, fp: str) -> list:
    gens = []
    for method in ws.cfg.methods:
        path = ws.gen_path(method)
        if not os.path.isfile(path):
            raise LoadError(f"missing generator checkpoint {path}; run train-gen first")
        gen, _, _ = load_checkpoint(path)
        _check_fingerprint(gen.meta.get("dataset"), fp, f"generator checkpoint {path}")
        gen.frozen = True
        gens.append(gen)
    return gens


def _common_maps(maps: list[np.ndarray], methods) -> np.ndarray:
    # Maps with different border trims are cropped to their common centre.
    borders = [map_border(mt) for mt in methods]
    widest = max(borders)
    return np.stack([crop_border(mp, widest - b) for mp, b in zip(maps, borders)], axis=-1)


def _gt_maps(ws: Workspace, fp: str, ids) -> dict[str, np.ndarray]:
    stores = [_labels_for(ws, mt, fp) for mt in ws.cfg.methods]
    out = {}
    for eid in ids:
        maps = []
        for store in stores:
            row = next(r for r in store.rows if r.id == eid)
            maps.append(store.load(row)[1])
        out[eid] = _common_maps(maps, ws.cfg.methods)
    return out


def _source_arrays(ws: Workspace, m: DatasetManifest, fp: str, entries):
    """Per-entry arrays fed to patch extraction for the configured source."""
    source = ws.cfg.get("pool_source")
    if source == "ground_truth":
        return _gt_maps(ws, fp, [e.id for e in entries])
    return {e.id: _rgb(load_image(m.distorted_path(e))) for e in entries}


def _pool_spec(ws: Workspace):
    cfg = ws.cfg
    kind = PoolKind.parse(cfg.get("pool_kind"))
    common = dict(kind=kind, input_size=cfg.get_int("patch_size"), conv_channels=cfg.get_ints("pool_channels"),
                  fc_units=cfg.get_int("pool_fc"), fc2_units=cfg.get_int("pool_fc2"))
    if cfg.get("pool_source") == "raw":
        return PoolNetSpec(input_channels=3, **common)
    return cfg.fusion.pooler_spec(**common)


def run_train_pool(ws: Workspace) -> Summary:
    cfg = ws.cfg
    m = ws.manifest()
    fp = dataset_fingerprint(m)
    train_m, _ = ws.splits(m)
    source = cfg.get("pool_source")
    gens = _frozen_generators(ws, fp) if source == "predicted" else []
    arrays = _source_arrays(ws, m, fp, train_m.entries)
    patches, scores = [], []
    for e in train_m.entries:
        grid = extract_patches(arrays[e.id], cfg.get_int("patch_size"), cfg.get_int("stride"))
        patches.extend(grid.patches)
        scores.extend([e.score] * len(grid))
    x = np.stack(patches)
    pool = build_pooler(_pool_spec(ws), seed=cfg.get_int("seed"))
    pool, hist = train_pooler(pool, x, scores, epochs=cfg.get_int("pool_epochs"), lr=cfg.get_float("pool_lr"),
                              seed=cfg.get_int("seed"), frozen_gen=gens or None,
                              fusion=cfg.fusion if gens else None, batch_size=cfg.get_int("pool_batch"),
                              hflip=cfg.get_bool("hflip"), weight_decay=cfg.get_float("weight_decay"))
    pool.meta = dict(pool.meta, dataset=fp, source=source, fusion=cfg.fusion.to_dict(),
                     generators=[g.checksum() for g in gens])
    os.makedirs(ws.path("models"), exist_ok=True)
    save_checkpoint(ws.pool_path, pool, seed=cfg.get_int("seed"))
    s = Summary("train-pool")
    s.add(event="pooler", source=source, patches=len(x), checksum=pool.checksum(),
          generators=[g.checksum() for g in gens], **hist.to_dict())
    return _finish(ws, "train-pool", s, [ws.pool_path])


def _load_pool(ws: Workspace, fp: str | None):
    if not os.path.isfile(ws.pool_path):
        raise LoadError(f"missing pooler checkpoint {ws.pool_path}; run train-pool first")
    pool, _, _ = load_checkpoint(ws.pool_path)
    if fp is not None:
        _check_fingerprint(pool.meta.get("dataset"), fp, f"pooler checkpoint {ws.pool_path}")
    source = pool.meta.get("source", "predicted")
    gens = []
    if source == "predicted":
        gens = [load_checkpoint(ws.gen_path(mt))[0] for mt in ws.cfg.methods]
        if [g.checksum() for g in gens] != pool.meta.get("generators"):
            raise FingerprintError("generator checkpoints changed since the pooler was trained")
    return pool, gens, source


def _score_array(pool, arr, patch, stride, batch) -> float:
    grid = extract_patches(arr, patch, stride)
    x = np.stack(grid.patches).transpose(0, 3, 1, 2).astype(pool.dtype)
    return float(np.mean(pooler_scores(pool, x, batch_size=batch)))


def run_eval(ws: Workspace) -> Summary:
    cfg = ws.cfg
    m = ws.manifest()
    fp = dataset_fingerprint(m)
    _, test_m = ws.splits(m)
    pool, gens, source = _load_pool(ws, fp)
    patch, stride, batch, workers = (cfg.get_int("patch_size"), cfg.get_int("stride"),
                                     cfg.get_int("pool_batch"), cfg.get_int("workers"))
    preds = []
    if source == "predicted":
        for e in test_m.entries:
            img = _rgb(load_image(m.distorted_path(e)))
            score, _ = predict_score(gens, pool, cfg.fusion, img, patch, stride, batch, workers)
            preds.append(score)
    else:
        arrays = _source_arrays(ws, m, fp, test_m.entries)
        preds = [_score_array(pool, arrays[e.id], patch, stride, batch) for e in test_m.entries]
    gt = [e.score for e in test_m.entries]
    if cfg.get_bool("eval_logistic"):
        report = logistic_holdout(preds, gt, seed=cfg.get_int("seed"))
    else:
        report = evaluate(preds, gt, types=[e.distortion_type for e in test_m.entries])
    os.makedirs(ws.path("eval"), exist_ok=True)
    pred_path = ws.path("eval", "predictions.csv")
    with open(pred_path, "w", encoding="utf-8") as fh:
        fh.write("id,type,level,score,prediction\n")
        for e, p in zip(test_m.entries, preds):
            fh.write(f"{e.id},{e.distortion_type},{e.level},{e.score!r},{p!r}\n")
    report_path = ws.path("eval", "report.csv")
    write_reports([("test", report)], report_path)
    s = Summary("eval")
    s.add(event="report", source=source, **report.to_dict())
    return _finish(ws, "eval", s, [pred_path, report_path])


def run_predict(ws: Workspace, image_path: str) -> Summary:
    cfg = ws.cfg
    pool, gens, source = _load_pool(ws, None)
    if source != "predicted":
        raise StateError(f"the pooler was trained on {source} inputs; prediction needs generator maps")
    img = _rgb(as_image(load_image(image_path)))
    score, qmap = predict_score(gens, pool, cfg.fusion, img, cfg.get_int("patch_size"), cfg.get_int("stride"),
                                cfg.get_int("pool_batch"), cfg.get_int("workers"))
    os.makedirs(ws.path("predict"), exist_ok=True)
    stem = os.path.splitext(os.path.basename(image_path))[0]
    planes = qmap[..., None] if qmap.ndim == 2 else qmap
    outputs = []
    for k, method in enumerate(cfg.methods):
        path = ws.path("predict", f"{stem}_{method.value}.png")
        save_map(planes[..., k], path)
        outputs.append(path)
    s = Summary("predict")
    s.add(event="prediction", image=os.path.basename(image_path), score=score)
    return _finish(ws, "predict", s, outputs)


def run_study(ws: Workspace) -> Summary:
    cfg = ws.cfg
    m = ws.manifest()
    fp = dataset_fingerprint(m)
    method = cfg.methods[0]
    store = _labels_for(ws, method, fp)
    by_id = m.by_id()
    maps, groups = [], []
    for row in store.rows:
        maps.append(store.load(row)[1])
        groups.append(by_id[row.id].reference_id)
    if cfg.get("study_target") == "std_dev":
        scores = [100.0 * (1.0 - 2.0 * pool_map(mp, "std_dev")) for mp in maps]
    else:
        scores = [row.score for row in store.rows]
    spec = PoolNetSpec(kind=PoolKind.DPN, input_size=cfg.get_int("patch_size"),
                       conv_channels=cfg.get_ints("pool_channels"), fc_units=cfg.get_int("pool_fc"))
    setup = StudySetup(spec=spec, epochs=cfg.get_int("study_epochs"), lr=cfg.get_float("pool_lr"),
                       batch_size=cfg.get_int("pool_batch"), stride=cfg.get_int("stride"),
                       train_fraction=cfg.get_float("train_fraction"), seed=cfg.get_int("seed"))
    rows = patch_average_study(maps, scores, groups, cfg.get_ints("study_blocks"), setup)
    os.makedirs(ws.path("study"), exist_ok=True)
    out = ws.path("study", "study.csv")
    write_study(rows, out)
    s = Summary("study")
    for r in rows:
        s.add(event="block", block=r.block, srcc=r.srcc, plcc=r.plcc)
    return _finish(ws, "study", s, [out])


STAGES = {
    "synth": run_synth,
    "labels": run_labels,
    "train-gen": run_train_gen,
    "train-pool": run_train_pool,
    "eval": run_eval,
    "study": run_study,
}

SMOKE_ORDER = ("synth", "labels", "train-gen", "train-pool", "eval")

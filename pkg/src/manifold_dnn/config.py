"""Experiment configuration: a nested key-value document (YAML, with JSON
accepted since it parses as YAML) validated field by field before anything
runs.

Top-level keys::

    kind:      mixture-classify | shape-classify | spd-classify | rate-check
    seed:      integer
    splits:    integer >= 1          (classification kinds)
    families:  list of model families
    data:      generator parameters for the chosen kind
    train:     epochs, batch_size, learning_rate, validation_fraction,
               tune_lr
    model:     hidden, atlas_radius, spd_dims, reeig_eps, spd_metric,
               embedding, knn_k
    out_dir:   output directory (CLI --out overrides)
    figures:   render figures alongside the CSV/JSON reports (default true)
    jobs:      parallel split workers (CLI --jobs overrides)
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError
from .experiments import (
    ALL_FAMILIES,
    DNN_FAMILIES,
    SPDNET_FAMILIES,
    ModelSpec,
    TrainConfig,
)
from .nn import LossKind
from .synthdata import (
    Dataset,
    MixtureSpec,
    gen_planar_shapes,
    gen_spd_dataset,
    random_spd_bases,
    sample_mixture,
    shape_template,
)

KINDS = ("mixture-classify", "shape-classify", "spd-classify", "rate-check")

_CLASSIFY_FAMILIES = {
    "mixture-classify": ("dnn", "ednn", "tdnn", "idnn", "knn"),
    "shape-classify": ("dnn", "ednn", "tdnn", "idnn", "knn"),
    "spd-classify": ("dnn", "ednn", "tdnn", "knn") + SPDNET_FAMILIES,
}

_DATA_DEFAULTS = {
    "mixture-classify": {
        "sphere_dim": 2, "n_classes": 2, "n_per_class": 2000,
        "kappa1": 4.0, "kappa2": 20.0, "subcenters": 10,
    },
    "shape-classify": {
        "landmarks": 12, "templates": ["bean", "trefoil"], "sigma": 0.1,
        "n_per_class": 300, "rotation": "full", "scale_jitter": 0.3,
        "translation_scale": 1.0,
    },
    "spd-classify": {
        "matrix_dim": 20, "n_classes": 3, "n_per_class": 200,
        "spread": 0.2, "separation": 0.5,
    },
    "rate-check": {
        "f0": "smooth", "sigma": 0.1, "n_grid": [500, 2000, 8000],
        "replications": 5, "test_size": 10000, "sphere_dim": 2,
    },
}

_TRAIN_DEFAULTS = {
    "epochs": 200, "batch_size": 128, "learning_rate": 1e-3,
    "validation_fraction": 0.25, "tune_lr": False,
}

_MODEL_DEFAULTS = {
    "hidden": [100, 100, 100, 100, 100],
    "atlas_radius": 1.9, "atlas_sharpness": 1.0,
    "spd_dims": None, "reeig_eps": 1e-4, "spd_metric": "affine",
    "embedding": None, "knn_k": None,
}

_TEMPLATE_NAMES = ("circle", "ellipse", "trefoil", "bean")


@dataclass
class ExperimentConfig:
    kind: str
    seed: int
    splits: int
    families: list[str]
    data: dict
    train: dict
    model: dict
    out_dir: str | None = None
    figures: bool = True
    jobs: int = 1

    def canonical(self) -> dict:
        return {
            "kind": self.kind,
            "seed": self.seed,
            "splits": self.splits,
            "families": list(self.families),
            "data": dict(sorted(self.data.items())),
            "train": dict(sorted(self.train.items())),
            "model": dict(sorted(self.model.items())),
        }

    def fingerprint(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()


def _check_number(doc, path, key, violations, *, integer=False, minimum=None,
                  strict=False):
    value = doc.get(key)
    if value is None:
        return None
    ok_types = (int,) if integer else (int, float)
    if isinstance(value, bool) or not isinstance(value, ok_types):
        violations.append(f"{path}.{key}: expected a number")
        return None
    if minimum is not None and (value <= minimum if strict else value < minimum):
        op = ">" if strict else ">="
        violations.append(f"{path}.{key}: must be {op} {minimum}")
        return None
    return value


def validate_config(doc: dict) -> list[str]:
    """Full schema and cross-field validation; returns every violation as
    ``path: message`` without executing anything."""
    violations: list[str] = []
    if not isinstance(doc, dict):
        return ["<root>: configuration must be a mapping"]
    unknown = set(doc) - {
        "kind", "seed", "splits", "families", "data", "train", "model",
        "out_dir", "figures", "jobs",
    }
    for key in sorted(unknown):
        violations.append(f"{key}: unknown field")
    kind = doc.get("kind")
    if kind not in KINDS:
        violations.append(f"kind: must be one of {', '.join(KINDS)}")
        return violations
    _check_number(doc, "<root>", "seed", violations, integer=True, minimum=0)
    _check_number(doc, "<root>", "splits", violations, integer=True, minimum=1)
    _check_number(doc, "<root>", "jobs", violations, integer=True, minimum=1)
    if "figures" in doc and not isinstance(doc["figures"], bool):
        violations.append("figures: expected true or false")

    data = doc.get("data", {})
    if not isinstance(data, dict):
        violations.append("data: expected a mapping")
        data = {}
    unknown = set(data) - set(_DATA_DEFAULTS[kind])
    for key in sorted(unknown):
        violations.append(f"data.{key}: unknown field for kind {kind}")
    if kind == "mixture-classify":
        _check_number(data, "data", "sphere_dim", violations, integer=True, minimum=1)
        n_classes = _check_number(data, "data", "n_classes", violations,
                                  integer=True, minimum=2)
        _check_number(data, "data", "n_per_class", violations, integer=True, minimum=1)
        _check_number(data, "data", "kappa1", violations, minimum=0)
        _check_number(data, "data", "kappa2", violations, minimum=0)
        _check_number(data, "data", "subcenters", violations, integer=True, minimum=1)
        sphere_dim = data.get("sphere_dim", _DATA_DEFAULTS[kind]["sphere_dim"])
        if (isinstance(sphere_dim, int) and isinstance(n_classes, int)
                and n_classes > sphere_dim + 1):
            violations.append(
                "data.n_classes: default orthogonal centers need "
                "n_classes <= sphere_dim + 1")
    elif kind == "shape-classify":
        _check_number(data, "data", "landmarks", violations, integer=True, minimum=3)
        _check_number(data, "data", "sigma", violations, minimum=0)
        _check_number(data, "data", "n_per_class", violations, integer=True, minimum=1)
        _check_number(data, "data", "scale_jitter", violations, minimum=0)
        _check_number(data, "data", "translation_scale", violations, minimum=0)
        rotation = data.get("rotation")
        if rotation is not None and rotation != "full" and (
                isinstance(rotation, bool)
                or not isinstance(rotation, (int, float)) or rotation < 0):
            violations.append('data.rotation: expected "full" or an angle >= 0')
        templates = data.get("templates")
        if templates is not None:
            if (not isinstance(templates, list) or len(templates) < 2
                    or any(t not in _TEMPLATE_NAMES for t in templates)):
                violations.append(
                    "data.templates: expected >= 2 names from "
                    f"{', '.join(_TEMPLATE_NAMES)}")
    elif kind == "spd-classify":
        _check_number(data, "data", "matrix_dim", violations, integer=True, minimum=2)
        _check_number(data, "data", "n_classes", violations, integer=True, minimum=2)
        _check_number(data, "data", "n_per_class", violations, integer=True, minimum=1)
        _check_number(data, "data", "spread", violations, minimum=0)
        _check_number(data, "data", "separation", violations, minimum=0)
    else:  # rate-check
        if data.get("f0") is not None and data["f0"] not in ("smooth", "constant", "zero"):
            violations.append("data.f0: expected smooth, constant, or zero")
        _check_number(data, "data", "sigma", violations, minimum=0)
        _check_number(data, "data", "replications", violations, integer=True, minimum=1)
        _check_number(data, "data", "test_size", violations, integer=True, minimum=1)
        _check_number(data, "data", "sphere_dim", violations, integer=True, minimum=2)
        grid = data.get("n_grid")
        if grid is not None:
            if (not isinstance(grid, list) or len(grid) < 3
                    or any(not isinstance(n, int) or n < 1 for n in grid)
                    or any(b <= a for a, b in zip(grid, grid[1:]))):
                violations.append(
                    "data.n_grid: expected an increasing list of >= 3 "
                    "positive integers")

    families = doc.get("families")
    if families is not None:
        if not isinstance(families, list) or not families:
            violations.append("families: expected a nonempty list")
        else:
            allowed = (DNN_FAMILIES if kind == "rate-check"
                       else _CLASSIFY_FAMILIES[kind])
            for i, fam in enumerate(families):
                if fam not in ALL_FAMILIES:
                    violations.append(f"families[{i}]: unknown family {fam!r}")
                elif fam not in allowed:
                    if fam == "idnn" and kind == "spd-classify":
                        violations.append(
                            "families[{}]: idnn requires a chart atlas; none "
                            "is defined on spd data".format(i))
                    else:
                        violations.append(
                            f"families[{i}]: {fam!r} is not supported for "
                            f"kind {kind}")
            if kind == "rate-check" and isinstance(families, list) and len(families) != 1:
                violations.append("families: rate-check takes exactly one family")
            if len(set(families)) != len(families):
                violations.append("families: duplicate entries")

    train = doc.get("train", {})
    if not isinstance(train, dict):
        violations.append("train: expected a mapping")
        train = {}
    unknown = set(train) - set(_TRAIN_DEFAULTS)
    for key in sorted(unknown):
        violations.append(f"train.{key}: unknown field")
    _check_number(train, "train", "epochs", violations, integer=True, minimum=0)
    _check_number(train, "train", "batch_size", violations, integer=True, minimum=1)
    _check_number(train, "train", "learning_rate", violations, minimum=0, strict=True)
    vf = _check_number(train, "train", "validation_fraction", violations, minimum=0)
    if vf is not None and vf >= 1:
        violations.append("train.validation_fraction: must be < 1")
    if "tune_lr" in train and not isinstance(train["tune_lr"], bool):
        violations.append("train.tune_lr: expected true or false")

    model = doc.get("model", {})
    if not isinstance(model, dict):
        violations.append("model: expected a mapping")
        model = {}
    unknown = set(model) - set(_MODEL_DEFAULTS)
    for key in sorted(unknown):
        violations.append(f"model.{key}: unknown field")
    hidden = model.get("hidden")
    if hidden is not None and (
            not isinstance(hidden, list) or not hidden
            or any(not isinstance(h, int) or h < 1 for h in hidden)):
        violations.append("model.hidden: expected a nonempty list of widths >= 1")
    _check_number(model, "model", "atlas_radius", violations, minimum=0, strict=True)
    _check_number(model, "model", "atlas_sharpness", violations, minimum=0, strict=True)
    _check_number(model, "model", "reeig_eps", violations, minimum=0, strict=True)
    _check_number(model, "model", "knn_k", violations, integer=True, minimum=1)
    if model.get("spd_metric") not in (None, "affine", "log-euclidean"):
        violations.append("model.spd_metric: expected affine or log-euclidean")
    dims = model.get("spd_dims")
    if dims is not None:
        ok = (isinstance(dims, list) and dims
              and all(isinstance(d, int) and d >= 1 for d in dims)
              and all(b <= a for a, b in zip(dims, dims[1:])))
        if not ok:
            violations.append(
                "model.spd_dims: expected a non-increasing list of sizes >= 1")
        elif kind == "spd-classify":
            d = data.get("matrix_dim", _DATA_DEFAULTS[kind]["matrix_dim"])
            if isinstance(d, int) and dims[0] != d:
                violations.append(
                    f"model.spd_dims: chain must start at matrix_dim {d}")
    return violations


def normalize_config(doc: dict) -> ExperimentConfig:
    """Fill defaults; assumes :func:`validate_config` passed."""
    kind = doc["kind"]
    data = {**_DATA_DEFAULTS[kind], **doc.get("data", {})}
    train = {**_TRAIN_DEFAULTS, **doc.get("train", {})}
    model = {**_MODEL_DEFAULTS, **doc.get("model", {})}
    default_fams = (["tdnn"] if kind == "rate-check"
                    else list(_CLASSIFY_FAMILIES[kind][:2]))
    return ExperimentConfig(
        kind=kind,
        seed=int(doc.get("seed", 0)),
        splits=int(doc.get("splits", 1)),
        families=list(doc.get("families", default_fams)),
        data=data,
        train=train,
        model=model,
        out_dir=doc.get("out_dir"),
        figures=bool(doc.get("figures", True)),
        jobs=int(doc.get("jobs", 1)),
    )


def load_config(path: str | Path) -> tuple[ExperimentConfig | None, list[str]]:
    """Parse and validate a config file; returns (config, violations) with
    config None when validation failed."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path} does not parse: {exc}") from exc
    violations = validate_config(doc)
    if violations:
        return None, violations
    return normalize_config(doc), []


def build_dataset(config: ExperimentConfig) -> Dataset:
    """Generate the dataset the config describes (not for rate-check)."""
    data = config.data
    if config.kind == "mixture-classify":
        spec = MixtureSpec(
            sphere_dim=data["sphere_dim"], n_classes=data["n_classes"],
            n_per_class=data["n_per_class"], kappa1=data["kappa1"],
            kappa2=data["kappa2"], subcenters=data["subcenters"],
            seed=config.seed)
        return sample_mixture(spec)
    if config.kind == "shape-classify":
        tpls = [shape_template(name, data["landmarks"])
                for name in data["templates"]]
        return gen_planar_shapes(
            tpls, data["sigma"], data["n_per_class"], config.seed,
            rotation=data["rotation"], scale_jitter=data["scale_jitter"],
            translation_scale=data["translation_scale"])
    if config.kind == "spd-classify":
        ss = np.random.SeedSequence(config.seed)
        base_seed, data_seed = (int(s.generate_state(1)[0]) for s in ss.spawn(2))
        bases = random_spd_bases(data["matrix_dim"], data["n_classes"],
                                 data["separation"], base_seed)
        return gen_spd_dataset(data["matrix_dim"], bases, data["spread"],
                               data["n_per_class"], data_seed)
    raise ConfigError(f"kind {config.kind} does not generate a dataset")


def model_specs(config: ExperimentConfig) -> list[ModelSpec]:
    m = config.model
    specs = []
    for family in config.families:
        specs.append(ModelSpec(
            family=family,
            hidden=tuple(m["hidden"]),
            embedding=m["embedding"],
            atlas_radius=m["atlas_radius"],
            atlas_sharpness=m["atlas_sharpness"],
            spd_metric=m["spd_metric"],
            spd_dims=None if m["spd_dims"] is None else tuple(m["spd_dims"]),
            reeig_eps=m["reeig_eps"],
            k_neighbors=m["knn_k"],
        ))
    return specs


def train_config(config: ExperimentConfig, spec: ModelSpec) -> TrainConfig:
    t = config.train
    loss = (LossKind.SQUARED_ERROR if config.kind == "rate-check"
            else LossKind.CROSS_ENTROPY)
    return TrainConfig(
        model=spec,
        loss=loss,
        epochs=t["epochs"],
        batch_size=t["batch_size"],
        learning_rate=t["learning_rate"],
        seed=config.seed,
        validation_fraction=t["validation_fraction"],
        tune_lr=t["tune_lr"],
    )

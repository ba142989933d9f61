"""Training (empirical risk minimization by minibatch Adam), evaluation,
repeated random splits, the geodesic kNN baseline, and the empirical
convergence-rate experiment.

Everything is deterministic given the seeds: shuffle streams are fixed,
reductions run in sample order, and per-split seeds are derived with
``numpy.random.SeedSequence`` so splits can run in any order (or in
parallel workers) and still assemble identically.
"""

from __future__ import annotations

import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import models as mdl
from . import nn, spdnet
from .errors import ShapeError, SpecError, TrainingDivergedError
from .manifolds import manifold_kind, sphere_dist_matrix
from .manifolds.spd import logm_batch, spd_invsqrt
from .synthdata import Dataset, gen_regression_sphere

DNN_FAMILIES = ("dnn", "ednn", "tdnn", "idnn")
SPDNET_FAMILIES = ("spdnet", "spdnet-tdnn-log", "spdnet-tdnn-affine")
ALL_FAMILIES = DNN_FAMILIES + SPDNET_FAMILIES + ("knn",)

KNN_K_GRID = (1, 3, 5, 7, 9, 11, 15, 21)


@dataclass
class ModelSpec:
    """Which architecture to build, and its geometry bindings."""

    family: str
    hidden: tuple = (100, 100, 100, 100, 100)
    embedding: str | None = None
    atlas_radius: float = 1.9
    atlas_sharpness: float = 1.0
    spd_metric: str = "affine"
    spd_dims: tuple | None = None
    reeig_eps: float = 1e-4
    k_neighbors: int | None = None

    def __post_init__(self):
        if self.family not in ALL_FAMILIES:
            raise SpecError(f"unknown model family {self.family!r}")
        self.hidden = tuple(int(h) for h in self.hidden)


@dataclass
class TrainConfig:
    """ERM budget and bookkeeping for one training run."""

    model: ModelSpec
    loss: nn.LossKind = nn.LossKind.CROSS_ENTROPY
    epochs: int = 200
    batch_size: int = 128
    learning_rate: float = 1e-3
    seed: int = 0
    validation_fraction: float = 0.25
    tune_lr: bool = False
    lr_grid: tuple = (1e-2, 1e-3, 1e-4)

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise SpecError("epochs must be >= 0 and batch size positive")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise SpecError("validation fraction must lie in [0, 1)")


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int | None = None


@dataclass
class MetricsReport:
    """Per-split metric values with their mean, SD, and standard error."""

    family: str
    metric: str
    per_split: list[float]
    mean: float
    sd: float
    se: float
    wall_clock_s: float
    n_splits: int
    config_fingerprint: str | None = None


@dataclass
class RateResult:
    n_grid: list[int]
    mean_risks: list[float]
    sd_risks: list[float]
    per_rep: list[list[float]]
    slope: float | None
    degenerate: bool


def _default_spd_dims(d: int) -> tuple:
    dims = [d]
    for _ in range(3):
        dims.append(max(3, int(round(dims[-1] * 0.7))))
    return tuple(dims)


def _derive_seed(ss: np.random.SeedSequence) -> int:
    return int(ss.generate_state(1)[0])


def build_model(spec: ModelSpec, manifold: str, train_points: np.ndarray,
                out_width: int, seed: int):
    """Instantiate a fresh model of the requested family, computing any
    data-dependent geometry (Fréchet-mean base points) from the training
    points."""
    family = spec.family
    if family == "knn":
        raise SpecError("knn is a baseline, not a trainable model")
    if family == "dnn":
        return mdl.build_ednn(manifold, spec.hidden, out_width, seed,
                              embedding="ambient")
    if family == "ednn":
        return mdl.build_ednn(manifold, spec.hidden, out_width, seed,
                              embedding=spec.embedding)
    if family == "tdnn":
        metric = spec.spd_metric
        return mdl.build_tdnn_at_mean(manifold, train_points, spec.hidden,
                                      out_width, seed, metric=metric)
    if family == "idnn":
        from .manifolds import two_pole_atlas

        kind, _ = manifold_kind(manifold)
        if kind == "spd":
            raise SpecError("idnn requires a chart atlas; none is defined on spd")
        atlas = two_pole_atlas(manifold, radius=spec.atlas_radius,
                               sharpness=spec.atlas_sharpness)
        return mdl.build_idnn(manifold, atlas, spec.hidden, out_width, seed)
    if family in SPDNET_FAMILIES:
        kind, size = manifold_kind(manifold)
        if kind != "spd":
            raise SpecError(f"{family} requires spd data, got {manifold}")
        dims = spec.spd_dims or _default_spd_dims(size)
        if dims[0] != size:
            raise SpecError(f"spd dimension chain {dims} must start at {size}")
        terminal = {
            "spdnet": "logeig",
            "spdnet-tdnn-log": "tangent-log",
            "spdnet-tdnn-affine": "tangent-affine",
        }[family]
        return spdnet.build_spdnet(dims, spec.hidden, out_width, seed,
                                   terminal=terminal, reeig_eps=spec.reeig_eps)
    raise SpecError(f"unknown model family {family!r}")


def _out_width(dataset: Dataset, loss: nn.LossKind) -> int:
    if loss is nn.LossKind.CROSS_ENTROPY:
        if not dataset.is_classification:
            raise SpecError("cross-entropy needs integer class targets")
        return dataset.n_classes
    return 1


def train_erm(config: TrainConfig, dataset: Dataset):
    """Minibatch Adam on the empirical loss; returns the trained model and
    the per-epoch train/validation loss history.

    The parameters from the epoch with the lowest validation loss are
    returned when a validation split exists. With ``tune_lr`` the learning
    rate is selected from ``lr_grid`` by final validation loss.
    """
    if len(dataset) == 0:
        raise SpecError("cannot train on an empty dataset")
    if config.tune_lr:
        best = None
        for lr in config.lr_grid:
            sub = replace(config, tune_lr=False, learning_rate=lr)
            model, hist = train_erm(sub, dataset)
            score = hist.val_loss[hist.best_epoch] if hist.val_loss else (
                hist.train_loss[-1] if hist.train_loss else np.inf)
            if best is None or score < best[0]:
                best = (score, model, hist)
        return best[1], best[2]

    ss = np.random.SeedSequence(config.seed)
    split_ss, init_ss, shuffle_ss = ss.spawn(3)
    n = len(dataset)
    order = np.random.default_rng(split_ss).permutation(n)
    n_val = int(round(config.validation_fraction * n))
    if 0 < n_val < n:
        val_rows, train_rows = order[:n_val], order[n_val:]
    else:
        val_rows, train_rows = np.array([], dtype=np.int64), order
    out_width = _out_width(dataset, config.loss)
    model = build_model(config.model, dataset.manifold,
                        dataset.points[train_rows], out_width,
                        _derive_seed(init_ss))
    if config.model.family in SPDNET_FAMILIES:
        return _train_spdnet(config, dataset, model, train_rows, val_rows,
                             shuffle_ss)
    return _train_dense(config, dataset, model, train_rows, val_rows,
                        shuffle_ss)


def _train_dense(config, dataset, model, train_rows, val_rows, shuffle_ss):
    feats_train = mdl.prepare_features(model, dataset.points[train_rows])
    y_train = dataset.targets[train_rows]
    feats_val = (mdl.prepare_features(model, dataset.points[val_rows])
                 if val_rows.size else None)
    y_val = dataset.targets[val_rows] if val_rows.size else None

    nets = mdl.model_networks(model)
    states = [nn.init_adam(net, learning_rate=config.learning_rate)
              for net in nets]
    rng = np.random.default_rng(shuffle_ss)
    history = TrainHistory()
    best = None
    n_train = train_rows.size
    for epoch in range(config.epochs):
        perm = rng.permutation(n_train)
        total, seen = 0.0, 0
        for start in range(0, n_train, config.batch_size):
            rows = perm[start : start + config.batch_size]
            batch = mdl.subset_features(feats_train, rows)
            value, grads = mdl.gradients_from_features(
                model, batch, y_train[rows], config.loss)
            nets = mdl.model_networks(model)
            new_nets = []
            for k, net in enumerate(nets):
                net, states[k] = nn.adam_step(net, grads[k], states[k])
                new_nets.append(net)
            mdl.set_model_networks(model, new_nets)
            total += value * rows.size
            seen += rows.size
        epoch_loss = total / seen
        if not np.isfinite(epoch_loss):
            raise TrainingDivergedError(
                f"training loss became non-finite at epoch {epoch}",
                epoch=epoch)
        history.train_loss.append(epoch_loss)
        if feats_val is not None:
            outputs = mdl.forward_from_features(model, feats_val)
            val_value, _ = nn.loss_and_output_grad(outputs, y_val, config.loss)
            history.val_loss.append(val_value)
            if best is None or val_value < best[0]:
                best = (val_value, [net.copy() for net in mdl.model_networks(model)],
                        epoch)
    if best is not None:
        mdl.set_model_networks(model, best[1])
        history.best_epoch = best[2]
    elif history.train_loss:
        history.best_epoch = len(history.train_loss) - 1
    return model, history


def _train_spdnet(config, dataset, model, train_rows, val_rows, shuffle_ss):
    ps_train = dataset.points[train_rows]
    y_train = dataset.targets[train_rows]
    ps_val = dataset.points[val_rows] if val_rows.size else None
    y_val = dataset.targets[val_rows] if val_rows.size else None

    state = nn.init_adam(model.net, learning_rate=config.learning_rate)
    rng = np.random.default_rng(shuffle_ss)
    history = TrainHistory()
    best = None
    n_train = train_rows.size
    tangent = model.terminal != "logeig"
    for epoch in range(config.epochs):
        perm = rng.permutation(n_train)
        total, seen = 0.0, 0
        for start in range(0, n_train, config.batch_size):
            rows = perm[start : start + config.batch_size]
            ps, ys = ps_train[rows], y_train[rows]
            base = None
            if tangent:
                out, _ = spdnet.stack_forward(model, ps)
                base = spdnet.batch_base(model, out)
            value, net_grads, w_grads, _ = spdnet.spdnet_loss_grads(
                model, ps, ys, config.loss, base=base)
            model.net, state = nn.adam_step(model.net, net_grads, state)
            model.bimaps = [
                spdnet.stiefel_update(b, g, config.learning_rate)
                for b, g in zip(model.bimaps, w_grads)
            ]
            total += value * rows.size
            seen += rows.size
        epoch_loss = total / seen
        if not np.isfinite(epoch_loss):
            raise TrainingDivergedError(
                f"training loss became non-finite at epoch {epoch}",
                epoch=epoch)
        history.train_loss.append(epoch_loss)
        spdnet.freeze_base(model, ps_train)
        if ps_val is not None:
            outputs = spdnet.spdnet_forward(model, ps_val)
            val_value, _ = nn.loss_and_output_grad(outputs, y_val, config.loss)
            history.val_loss.append(val_value)
            if best is None or val_value < best[0]:
                best = (val_value, model.copy(), epoch)
    if best is not None:
        model = best[1]
        history.best_epoch = best[2]
    elif history.train_loss:
        history.best_epoch = len(history.train_loss) - 1
    if model.base is None and model.terminal != "logeig":
        spdnet.freeze_base(model, ps_train)
    return model, history


def predict(model, points: np.ndarray) -> np.ndarray:
    if isinstance(model, spdnet.SPDNetModel):
        return spdnet.spdnet_forward(model, points)
    return mdl.model_forward(model, points)


def evaluate(model, dataset: Dataset, metric: str) -> float:
    """Mean 0-1 correctness of the argmax class, or mean squared error."""
    if len(dataset) == 0:
        raise SpecError("cannot evaluate on an empty dataset")
    outputs = predict(model, dataset.points)
    if metric == "accuracy":
        pred = outputs.argmax(axis=1)
        return float(np.mean(pred == dataset.targets))
    if metric == "risk":
        return float(np.mean((outputs[:, 0] - np.asarray(dataset.targets,
                                                         dtype=np.float64)) ** 2))
    raise SpecError(f"unknown metric {metric!r}")


# ---------------------------------------------------------------------------
# geodesic kNN baseline

def _geodesic_distances(manifold: str, test_pts: np.ndarray,
                        train_pts: np.ndarray, metric: str) -> np.ndarray:
    kind, _ = manifold_kind(manifold)
    if kind in ("sphere", "preshape"):
        return sphere_dist_matrix(test_pts, train_pts)
    if metric == "log-euclidean":
        lt = logm_batch(train_pts).reshape(train_pts.shape[0], -1)
        le = logm_batch(test_pts).reshape(test_pts.shape[0], -1)
        sq = (np.sum(le**2, axis=1)[:, None] + np.sum(lt**2, axis=1)[None, :]
              - 2.0 * le @ lt.T)
        return np.sqrt(np.maximum(sq, 0.0))
    out = np.empty((test_pts.shape[0], train_pts.shape[0]))
    for i in range(test_pts.shape[0]):
        isq = spd_invsqrt(test_pts[i])
        whitened = isq[None] @ train_pts @ isq[None]
        s = np.linalg.eigvalsh(0.5 * (whitened + whitened.transpose(0, 2, 1)))
        out[i] = 0.5 * np.linalg.norm(np.log(np.maximum(s, 1e-300)), axis=1)
    return out


def knn_baseline(train: Dataset, test: Dataset, k: int,
                 metric: str = "affine") -> float:
    """Accuracy of majority vote among the k geodesically nearest training
    points; ties break by the smallest summed distance, then lowest label."""
    if not train.is_classification:
        raise SpecError("knn baseline requires class labels")
    if k < 1 or k > len(train):
        raise SpecError(f"k must lie in [1, {len(train)}], got {k}")
    dist = _geodesic_distances(train.manifold, test.points, train.points, metric)
    labels = train.targets
    correct = 0
    for i in range(len(test)):
        order = np.argsort(dist[i], kind="stable")[:k]
        neigh_labels = labels[order]
        neigh_dists = dist[i][order]
        counts = np.bincount(neigh_labels)
        top = counts.max()
        tied = np.nonzero(counts == top)[0]
        if tied.size > 1:
            sums = np.array([neigh_dists[neigh_labels == lab].sum() for lab in tied])
            tied = tied[sums == sums.min()]
        if int(tied[0]) == test.targets[i]:
            correct += 1
    return correct / len(test)


def _tune_knn_k(train: Dataset, seed: int, metric: str,
                grid=KNN_K_GRID, val_fraction: float = 0.25) -> int:
    rng = np.random.default_rng(seed)
    n = len(train)
    order = rng.permutation(n)
    n_val = max(1, int(round(val_fraction * n)))
    val = train.subset(order[:n_val])
    fit = train.subset(order[n_val:])
    best_k, best_acc = None, -1.0
    for k in grid:
        if k > len(fit):
            continue
        acc = knn_baseline(fit, val, k, metric=metric)
        if acc > best_acc:
            best_k, best_acc = k, acc
    return best_k if best_k is not None else 1


# ---------------------------------------------------------------------------
# repeated random splits

def stratified_split(targets: np.ndarray, rng: np.random.Generator,
                     test_fraction: float = 0.25):
    """75/25 split stratified by label; falls back (with a warning) to an
    unstratified split when any class has fewer than 4 members."""
    targets = np.asarray(targets)
    n = targets.shape[0]
    if np.issubdtype(targets.dtype, np.integer):
        classes, counts = np.unique(targets, return_counts=True)
        if counts.min() >= 4:
            test_idx = []
            for c in classes:
                rows = np.nonzero(targets == c)[0]
                rows = rows[rng.permutation(rows.size)]
                n_test = int(round(test_fraction * rows.size))
                test_idx.append(rows[:n_test])
            test_idx = np.sort(np.concatenate(test_idx))
            mask = np.ones(n, dtype=bool)
            mask[test_idx] = False
            return np.nonzero(mask)[0], test_idx
        warnings.warn(
            "a class has fewer than 4 members; falling back to an "
            "unstratified split", stacklevel=2)
    perm = rng.permutation(n)
    n_test = int(round(test_fraction * n))
    test_idx = np.sort(perm[:n_test])
    mask = np.ones(n, dtype=bool)
    mask[test_idx] = False
    return np.nonzero(mask)[0], test_idx


def _split_task(payload):
    (dataset, specs, train_config, split_index, seed, metric,
     want_history) = payload
    split_ss = np.random.SeedSequence(entropy=seed, spawn_key=(split_index,))
    children = split_ss.spawn(len(specs) + 1)
    rng = np.random.default_rng(children[0])
    train_rows, test_rows = stratified_split(dataset.targets, rng)
    train_ds = dataset.subset(train_rows)
    test_ds = dataset.subset(test_rows)
    values, histories = {}, {}
    for j, spec in enumerate(specs):
        fam_seed = _derive_seed(children[j + 1])
        if spec.family == "knn":
            metric_name = spec.spd_metric
            k = spec.k_neighbors or _tune_knn_k(train_ds, fam_seed,
                                                metric_name)
            values[spec.family] = knn_baseline(train_ds, test_ds, k,
                                               metric=metric_name)
            histories[spec.family] = None
        else:
            cfg = replace(train_config, model=spec, seed=fam_seed)
            model, history = train_erm(cfg, train_ds)
            values[spec.family] = evaluate(model, test_ds, metric)
            histories[spec.family] = history if want_history else None
    return values, histories


def repeated_splits(dataset: Dataset, specs: list[ModelSpec], splits: int,
                    seed: int, train_config: TrainConfig, jobs: int = 1,
                    metric: str | None = None, fingerprint: str | None = None):
    """Train/evaluate every model family over repeated stratified 75/25
    splits. Returns ``(reports, histories)`` where histories holds the
    first split's training curves per family."""
    if splits < 1:
        raise SpecError("need at least one split")
    if metric is None:
        metric = "accuracy" if dataset.is_classification else "risk"
    payloads = [
        (dataset, specs, train_config, i, seed, metric, i == 0)
        for i in range(splits)
    ]
    start = time.perf_counter()
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_split_task, payloads))
    else:
        results = [_split_task(p) for p in payloads]
    elapsed = time.perf_counter() - start
    reports = {}
    for spec in specs:
        fam = spec.family
        per_split = [res[0][fam] for res in results]
        mean = float(np.mean(per_split))
        sd = float(np.std(per_split, ddof=1)) if splits > 1 else 0.0
        reports[fam] = MetricsReport(
            family=fam, metric=metric, per_split=per_split, mean=mean,
            sd=sd, se=sd / np.sqrt(splits), wall_clock_s=elapsed,
            n_splits=splits, config_fingerprint=fingerprint)
    histories = {spec.family: results[0][1][spec.family] for spec in specs}
    return reports, histories


# ---------------------------------------------------------------------------
# empirical convergence-rate experiment

def rate_experiment(f0: str, n_grid, spec: ModelSpec, replications: int,
                    sigma: float, seed: int, train_config: TrainConfig,
                    test_size: int = 10000, sphere_dim: int = 2,
                    degenerate_threshold: float = 1e-12) -> RateResult:
    """Held-out excess risk of the trained regressor over a grid of sample
    sizes, with the least-squares slope of log risk against log n.

    Risks at or below ``degenerate_threshold`` (default: the float64 noise
    floor) mark the fit as degenerate and the slope is skipped, since the
    log-log fit would measure rounding noise rather than a rate.
    """
    n_grid = [int(n) for n in n_grid]
    if len(n_grid) < 3 or any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise SpecError("n_grid must be increasing with at least 3 points")
    if replications < 1:
        raise SpecError("need at least one replication")
    ss = np.random.SeedSequence(seed)
    per_rep: list[list[float]] = [[] for _ in range(replications)]
    for rep in range(replications):
        for gi, n in enumerate(n_grid):
            child = np.random.SeedSequence(
                entropy=seed, spawn_key=(rep, gi))
            data_seed, test_seed, fit_seed = (
                _derive_seed(s) for s in child.spawn(3))
            train_ds = gen_regression_sphere(f0, sigma, n, data_seed,
                                             sphere_dim=sphere_dim)
            test_ds = gen_regression_sphere(f0, 0.0, test_size, test_seed,
                                            sphere_dim=sphere_dim)
            cfg = replace(train_config, model=spec, seed=fit_seed,
                          loss=nn.LossKind.SQUARED_ERROR)
            model, _ = train_erm(cfg, train_ds)
            per_rep[rep].append(evaluate(model, test_ds, "risk"))
    risks = np.array(per_rep)
    mean_risks = risks.mean(axis=0)
    sd_risks = (risks.std(axis=0, ddof=1) if replications > 1
                else np.zeros(len(n_grid)))
    degenerate = bool(np.any(mean_risks <= degenerate_threshold))
    slope = None
    if not degenerate:
        slope = float(np.polyfit(np.log(n_grid), np.log(mean_risks), 1)[0])
    return RateResult(
        n_grid=n_grid,
        mean_risks=mean_risks.tolist(),
        sd_risks=np.asarray(sd_risks).tolist(),
        per_rep=[list(r) for r in per_rep],
        slope=slope,
        degenerate=degenerate,
    )

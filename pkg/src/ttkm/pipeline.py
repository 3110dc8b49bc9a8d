"""End-to-end training and prediction for TT kernel machines.

The training procedure mirrors the usual kernel-SVM recipe, with the twist
that samples are decomposed jointly: for every candidate rank setting, the
train and validation samples are stacked and decomposed together so all
trains share one rank chain (a requirement for a PSD Gram matrix), then a
grid over (C, sigma) is scanned on the validation split, and the winning
combination is refit.  Prediction decomposes each incoming sample at the
model's rank chain by keeping the support vectors' shared trailing cores
and fitting a fresh first core by least squares, which keeps new samples
in the same core representation the kernel values were trained on.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConvergenceError
from .kernels import (
    KernelSpec,
    LinearKernel,
    PolynomialKernel,
    RbfKernel,
    build_gram,
    cross_gram,
)
from .solver import (
    SUPPORT_EPS,
    DualProblem,
    decision_values,
    predict_labels,
    solve_dual,
)
from .tensor import (
    DenseTensor,
    TensorTrain,
    TtSvdConfig,
    stack_and_decompose,
)

logger = logging.getLogger(__name__)

SPLIT_NAMES = ("train", "validation", "test")
MODE_KINDS = ("linear", "poly", "rbf")


@dataclass
class Dataset:
    """Labeled same-shape tensor samples with a train/validation/test split."""

    samples: list[DenseTensor]
    labels: np.ndarray
    split: np.ndarray

    def __post_init__(self):
        self.samples = list(self.samples)
        labels = np.asarray(self.labels)
        if not np.issubdtype(labels.dtype, np.integer):
            if not np.all(labels == labels.astype(np.int64)):
                raise ValueError("labels must be integers")
        self.labels = labels.astype(np.int64)
        self.split = np.asarray(self.split, dtype=object)
        n = len(self.samples)
        if self.labels.shape != (n,) or self.split.shape != (n,):
            raise ValueError(
                f"{n} samples with labels {self.labels.shape} and split {self.split.shape}"
            )
        bad = set(self.split) - set(SPLIT_NAMES)
        if bad:
            raise ValueError(f"unknown split names: {sorted(bad)}")
        if n:
            dims = self.samples[0].dims
            for i, s in enumerate(self.samples):
                if s.dims != dims:
                    raise ValueError(f"sample {i} has dims {s.dims}, expected {dims}")

    @property
    def dims(self) -> tuple[int, ...]:
        if not self.samples:
            raise ValueError("empty dataset has no dims")
        return self.samples[0].dims

    @property
    def classes(self) -> tuple[int, ...]:
        return tuple(int(c) for c in np.unique(self.labels))

    def subset(self, split: str):
        if split not in SPLIT_NAMES:
            raise ValueError(f"unknown split {split!r}")
        idx = np.nonzero(self.split == split)[0]
        return [self.samples[i] for i in idx], self.labels[idx]

    def restrict_classes(self, classes) -> "Dataset":
        keep = np.isin(self.labels, list(classes))
        idx = np.nonzero(keep)[0]
        return Dataset(
            samples=[self.samples[i] for i in idx],
            labels=self.labels[idx],
            split=self.split[idx],
        )

    def counts(self) -> dict:
        return {
            name: int(np.sum(self.split == name)) for name in SPLIT_NAMES
        }

    @classmethod
    def from_arrays(cls, x, labels, split) -> "Dataset":
        x = np.asarray(x, dtype=np.float64)
        return cls(
            samples=[DenseTensor(x[i]) for i in range(x.shape[0])],
            labels=labels,
            split=split,
        )


def make_pair_dataset(
    train_samples,
    train_labels,
    test_samples,
    test_labels,
    classes,
    train_per_class: int,
    val_per_class: int,
    seed: int,
) -> Dataset:
    """Seeded two-class subset: per-class train/validation draws, full test.

    From the pool of training samples, each of the two classes contributes
    ``train_per_class`` training and ``val_per_class`` validation samples
    drawn by a seeded shuffle; every test sample of the two classes is kept.
    """
    a, b = sorted(int(c) for c in classes)
    if a == b:
        raise ValueError("need two distinct classes")
    train_labels = np.asarray(train_labels, dtype=np.int64)
    test_labels = np.asarray(test_labels, dtype=np.int64)
    rng = np.random.default_rng(seed)
    samples, labels, split = [], [], []
    for cls in (a, b):
        pool = np.nonzero(train_labels == cls)[0]
        need = train_per_class + val_per_class
        if len(pool) < need:
            raise ValueError(
                f"class {cls} has {len(pool)} training samples, need {need}"
            )
        picked = rng.permutation(pool)[:need]
        for j, idx in enumerate(picked):
            samples.append(train_samples[idx])
            labels.append(cls)
            split.append("train" if j < train_per_class else "validation")
    for idx in np.nonzero(np.isin(test_labels, [a, b]))[0]:
        samples.append(test_samples[idx])
        labels.append(int(test_labels[idx]))
        split.append("test")
    return Dataset(samples=samples, labels=np.array(labels), split=np.array(split, dtype=object))


@dataclass(frozen=True)
class GridConfig:
    """Search space of the training procedure.

    ``rank_values`` entries are either a single int (uniform interior rank)
    or a tuple with one rank per interior position.  ``mode_kinds`` names
    the base kernel for each tensor mode; sigma from ``sigma_values`` is
    substituted into every RBF mode at each grid point, so with no RBF mode
    the sigma axis collapses to a single pass.
    """

    c_values: tuple[float, ...]
    sigma_values: tuple[float, ...]
    rank_values: tuple
    mode_kinds: tuple[str, ...]
    combine: str = "prod"
    poly_c: float = 1.0
    poly_degree: int = 2

    def __post_init__(self):
        object.__setattr__(self, "c_values", tuple(float(c) for c in self.c_values))
        object.__setattr__(self, "sigma_values", tuple(float(s) for s in self.sigma_values))
        object.__setattr__(self, "rank_values", tuple(self.rank_values))
        object.__setattr__(self, "mode_kinds", tuple(str(k) for k in self.mode_kinds))
        if not self.c_values or any(c <= 0 for c in self.c_values):
            raise ValueError(f"c_values must be positive, got {self.c_values}")
        if any(s <= 0 for s in self.sigma_values):
            raise ValueError(f"sigma_values must be positive, got {self.sigma_values}")
        if not self.rank_values:
            raise ValueError("rank_values must not be empty")
        for kind in self.mode_kinds:
            if kind not in MODE_KINDS:
                raise ValueError(f"mode kind must be one of {MODE_KINDS}, got {kind!r}")
        if self.has_rbf and not self.sigma_values:
            raise ValueError("sigma_values must not be empty when an rbf mode is used")

    @property
    def has_rbf(self) -> bool:
        return "rbf" in self.mode_kinds

    def rank_settings(self, d: int) -> list[tuple[int, ...]]:
        out = []
        for entry in self.rank_values:
            if isinstance(entry, (int, np.integer)):
                setting = (int(entry),) * (d - 1)
            else:
                setting = tuple(int(r) for r in entry)
            if len(setting) != d - 1:
                raise ValueError(
                    f"rank setting {entry} has {len(setting)} entries; order-{d} data needs {d - 1}"
                )
            if any(r < 1 for r in setting):
                raise ValueError(f"ranks must be >= 1, got {entry}")
            out.append(setting)
        return out

    def sigmas(self) -> tuple:
        return self.sigma_values if self.has_rbf else (None,)

    def make_spec(self, sigma) -> KernelSpec:
        per_mode = []
        for kind in self.mode_kinds:
            if kind == "linear":
                per_mode.append(LinearKernel())
            elif kind == "poly":
                per_mode.append(PolynomialKernel(c=self.poly_c, degree=self.poly_degree))
            else:
                if sigma is None:
                    raise ValueError("rbf mode requires a sigma")
                per_mode.append(RbfKernel(float(sigma)))
        return KernelSpec(per_mode=tuple(per_mode), combine=self.combine)

    def to_dict(self) -> dict:
        return {
            "c_values": list(self.c_values),
            "sigma_values": list(self.sigma_values),
            "rank_values": [
                int(r) if isinstance(r, (int, np.integer)) else [int(x) for x in r]
                for r in self.rank_values
            ],
            "mode_kinds": list(self.mode_kinds),
            "combine": self.combine,
            "poly_c": self.poly_c,
            "poly_degree": self.poly_degree,
        }


@dataclass
class SvmModel:
    """A trained binary TT kernel machine."""

    support: tuple[TensorTrain, ...]
    coef: np.ndarray  # alpha_i * y_i per support sample
    bias: float
    spec: KernelSpec
    dims: tuple[int, ...]
    interior_ranks: tuple[int, ...]
    neg_class: int
    pos_class: int
    normalize: bool = False
    grid_point: dict = field(default_factory=dict)
    validation_accuracy: float = float("nan")
    info: dict = field(default_factory=dict)

    @property
    def classes(self) -> tuple[int, ...]:
        return (self.neg_class, self.pos_class)

    def predict(self, samples) -> np.ndarray:
        return predict(self, samples)


def _tail_basis(tail) -> np.ndarray:
    """Chain trailing cores into a basis matrix of shape (R_2, I_2*...*I_d).

    Any tensor X representable with these trailing cores factors as
    X_(1) = A @ basis for some first-core matrix A of shape (I_1, R_2),
    where X_(1) is the mode-1 unfolding in first-index-fastest order.
    """
    acc = tail[0]
    for core in tail[1:]:
        acc = np.tensordot(acc, core, axes=(acc.ndim - 1, 0))
    return acc[..., 0].reshape(acc.shape[0], -1, order="F")


def _prepare_samples(model: SvmModel, samples) -> list[TensorTrain]:
    """Decompose incoming samples at the model's rank chain.

    Every support TT carries the same trailing cores (training stacks all
    samples into one decomposition), so each new sample keeps those cores
    and only its first core is fit by least squares against the trailing
    basis.  TT kernels are functions of the cores rather than of the
    reconstructed tensor, so reusing the stored representation is what
    keeps kernel values between new samples and support vectors on the
    same footing as the training Gram matrix; an independent decomposition
    is free to pick different core scales and bases, which the kernel
    registers as a systematic shift.
    """
    prepared = []
    for sample in samples:
        if sample.dims != tuple(model.dims):
            raise ValueError(
                f"sample dims {sample.dims} do not match model dims {model.dims}"
            )
        if model.normalize:
            nrm = sample.norm()
            if nrm > 0:
                sample = DenseTensor(sample.values / nrm)
        prepared.append(sample)
    if len(model.dims) == 1:
        # order-1 data has no interior ranks; the single core is the sample
        return [TensorTrain(cores=(s.values[None, :, None],)) for s in prepared]
    tail = model.support[0].cores[1:]
    basis = _tail_basis(tail)
    tts = []
    for s in prepared:
        unfolding = s.values.reshape(model.dims[0], -1, order="F")
        first = np.linalg.lstsq(basis.T, unfolding.T, rcond=None)[0].T
        tts.append(TensorTrain(cores=(first[None, :, :],) + tuple(tail)))
    return tts


def decision_function(model: SvmModel, samples) -> np.ndarray:
    """Signed decision values, one per sample."""
    samples = list(samples)
    if not samples:
        return np.zeros(0)
    if not model.support:
        return np.full(len(samples), model.bias)
    tts = _prepare_samples(model, samples)
    rows = cross_gram(model.support, tts, model.spec)
    return decision_values(model.coef, model.bias, rows)


def predict(model: SvmModel, samples) -> np.ndarray:
    """Predicted class ids; a decision value of exactly 0 goes positive."""
    signs = predict_labels(decision_function(model, samples))
    return np.where(signs > 0, model.pos_class, model.neg_class).astype(np.int64)


def _signed_labels(labels, neg_class, pos_class) -> np.ndarray:
    return np.where(labels == pos_class, 1.0, -1.0)


def _normalized(samples):
    out = []
    for s in samples:
        nrm = s.norm()
        out.append(DenseTensor(s.values / nrm) if nrm > 0 else s)
    return out


def _grid_key(entry) -> tuple:
    # maximize accuracy, then prefer smaller ranks, smaller C, smaller sigma
    sigma = entry["sigma"] if entry["sigma"] is not None else 0.0
    return (-entry["validation_accuracy"], tuple(entry["ranks"]), entry["C"], sigma)


def train_binary(
    ds: Dataset,
    grid: GridConfig,
    normalize: bool = False,
    solver_tol: float = 1e-3,
    solver_max_iter: int | None = None,
) -> SvmModel:
    """Grid-searched binary training.

    For every rank setting the train and validation samples are decomposed
    jointly; for every (sigma, C) the dual is solved on the training Gram
    matrix and scored on the validation split.  Accuracy ties are broken
    toward smaller ranks, then smaller C, then smaller sigma.  The winner
    is refit along the identical deterministic path and returned with the
    full scan attached under ``info["grid"]``.
    """
    train_s, train_y = ds.subset("train")
    val_s, val_y = ds.subset("validation")
    if not train_s:
        raise ValueError("training split is empty")
    if not val_s:
        raise ValueError("validation split is empty")
    classes = tuple(int(c) for c in np.unique(train_y))
    if len(classes) != 2:
        raise ValueError(f"binary training needs exactly 2 classes, got {classes}")
    if not set(int(c) for c in np.unique(val_y)) <= set(classes):
        raise ValueError("validation labels outside the training classes")
    neg_class, pos_class = classes
    d = len(ds.dims)
    if len(grid.mode_kinds) != d:
        raise ValueError(
            f"grid names {len(grid.mode_kinds)} mode kinds but data has order {d}"
        )

    if normalize:
        train_s = _normalized(train_s)
        val_s = _normalized(val_s)
    y_train = _signed_labels(train_y, neg_class, pos_class)
    y_val = _signed_labels(val_y, neg_class, pos_class)
    n_train = len(train_s)

    def fit_point(ranks, sigma, c_value):
        tts = stack_and_decompose(train_s + val_s, TtSvdConfig(max_ranks=ranks))
        tr_tts, va_tts = tts[:n_train], tts[n_train:]
        spec = grid.make_spec(sigma)
        gram = build_gram(tr_tts, spec)
        rows = cross_gram(tr_tts, va_tts, spec)
        sol = solve_dual(
            DualProblem(gram=gram, labels=y_train, C=c_value),
            tol=solver_tol,
            max_iter=solver_max_iter,
        )
        vals = decision_values(sol.alphas * y_train, sol.bias, rows)
        acc = float(np.mean(predict_labels(vals) == y_val))
        return tr_tts, spec, sol, acc

    report = []
    for ranks in grid.rank_settings(d):
        tts = stack_and_decompose(train_s + val_s, TtSvdConfig(max_ranks=ranks))
        tr_tts, va_tts = tts[:n_train], tts[n_train:]
        for sigma in grid.sigmas():
            spec = grid.make_spec(sigma)
            gram = build_gram(tr_tts, spec)
            rows = cross_gram(tr_tts, va_tts, spec)
            for c_value in grid.c_values:
                sol = solve_dual(
                    DualProblem(gram=gram, labels=y_train, C=c_value),
                    tol=solver_tol,
                    max_iter=solver_max_iter,
                )
                vals = decision_values(sol.alphas * y_train, sol.bias, rows)
                acc = float(np.mean(predict_labels(vals) == y_val))
                report.append(
                    {
                        "ranks": list(ranks),
                        "sigma": sigma,
                        "C": c_value,
                        "validation_accuracy": acc,
                        "converged": sol.converged,
                        "iterations": sol.iterations,
                        "support_count": int(len(sol.support_indices)),
                    }
                )

    best = min(report, key=_grid_key)
    ranks = tuple(best["ranks"])
    tr_tts, spec, sol, acc = fit_point(ranks, best["sigma"], best["C"])
    if not sol.converged:
        raise ConvergenceError(
            f"solver did not converge at the selected grid point "
            f"(ranks={ranks}, C={best['C']}, sigma={best['sigma']}): "
            f"{sol.iterations} iterations, objective {sol.objective:.6g}"
        )
    if acc != best["validation_accuracy"]:
        logger.warning(
            "refit validation accuracy %.6f differs from scan %.6f",
            acc, best["validation_accuracy"],
        )

    sv = sol.support_indices
    return SvmModel(
        support=tuple(tr_tts[i] for i in sv),
        coef=(sol.alphas * y_train)[sv],
        bias=sol.bias,
        spec=spec,
        dims=ds.dims,
        interior_ranks=tr_tts[0].interior_ranks,
        neg_class=neg_class,
        pos_class=pos_class,
        normalize=normalize,
        grid_point={"ranks": list(ranks), "C": best["C"], "sigma": best["sigma"]},
        validation_accuracy=acc,
        info={
            "grid": report,
            "train_count": n_train,
            "validation_count": len(val_s),
            "solver": {
                "tol": solver_tol,
                "iterations": sol.iterations,
                "converged": sol.converged,
                "objective": sol.objective,
            },
        },
    )


@dataclass
class OvoModel:
    """One-vs-one ensemble of binary models over K classes."""

    classes: tuple[int, ...]
    models: dict

    def predict(self, samples) -> np.ndarray:
        samples = list(samples)
        n = len(samples)
        k = len(self.classes)
        index = {c: i for i, c in enumerate(self.classes)}
        votes = np.zeros((n, k), dtype=np.int64)
        strength = np.zeros((n, k))
        for (a, b), model in self.models.items():
            vals = decision_function(model, samples)
            signs = predict_labels(vals)
            winners = np.where(signs > 0, index[b], index[a])
            votes[np.arange(n), winners] += 1
            strength[:, index[a]] += np.abs(vals)
            strength[:, index[b]] += np.abs(vals)
        out = np.empty(n, dtype=np.int64)
        for i in range(n):
            top = votes[i].max()
            tied = np.nonzero(votes[i] == top)[0]
            if len(tied) > 1:
                best = strength[i, tied].max()
                tied = tied[strength[i, tied] >= best]
            out[i] = self.classes[int(tied.min())]
        return out


def train_multiclass_ovo(
    ds: Dataset,
    grid: GridConfig,
    normalize: bool = False,
    solver_tol: float = 1e-3,
    solver_max_iter: int | None = None,
) -> OvoModel:
    """Train one binary model per unordered class pair; vote at prediction.

    Vote ties are broken by the larger accumulated |decision value| over
    the models a class participates in, then by the smaller class id.
    """
    train_s, train_y = ds.subset("train")
    classes = tuple(int(c) for c in np.unique(train_y))
    if len(classes) < 2:
        raise ValueError(f"need at least 2 classes, got {classes}")
    models = {}
    for i, a in enumerate(classes):
        for b in classes[i + 1:]:
            sub = ds.restrict_classes((a, b))
            models[(a, b)] = train_binary(
                sub, grid, normalize=normalize,
                solver_tol=solver_tol, solver_max_iter=solver_max_iter,
            )
    return OvoModel(classes=classes, models=models)


@dataclass
class Metrics:
    accuracy: float
    classes: tuple[int, ...]
    confusion: np.ndarray  # rows = true class, columns = predicted class
    per_class_recall: dict

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "classes": list(self.classes),
            "confusion": self.confusion.tolist(),
            "per_class_recall": {str(c): r for c, r in self.per_class_recall.items()},
        }


def compute_metrics(true_labels, predicted_labels, classes) -> Metrics:
    true_labels = np.asarray(true_labels, dtype=np.int64)
    predicted_labels = np.asarray(predicted_labels, dtype=np.int64)
    classes = tuple(int(c) for c in classes)
    index = {c: i for i, c in enumerate(classes)}
    k = len(classes)
    confusion = np.zeros((k, k), dtype=np.int64)
    for t, p in zip(true_labels, predicted_labels):
        confusion[index[int(t)], index[int(p)]] += 1
    recall = {}
    for c in classes:
        i = index[c]
        total = int(confusion[i].sum())
        recall[c] = float(confusion[i, i] / total) if total else float("nan")
    accuracy = float(np.mean(true_labels == predicted_labels)) if len(true_labels) else float("nan")
    return Metrics(accuracy=accuracy, classes=classes, confusion=confusion,
                   per_class_recall=recall)


def evaluate(model, ds: Dataset, split: str = "test") -> Metrics:
    """Accuracy, confusion matrix, and per-class recall on one split."""
    samples, labels = ds.subset(split)
    if not samples:
        raise ValueError(f"split {split!r} is empty")
    classes = model.classes
    unknown = set(int(c) for c in np.unique(labels)) - set(classes)
    if unknown:
        raise ValueError(f"labels {sorted(unknown)} not covered by the model classes {classes}")
    predicted = model.predict(samples)
    return compute_metrics(labels, predicted, classes)


def rank_sweep(
    ds: Dataset,
    grid: GridConfig,
    rank_values=None,
    normalize: bool = False,
    solver_tol: float = 1e-3,
) -> list[dict]:
    """Train at each rank setting separately and report test accuracy.

    Each entry restricts the grid to a single rank setting, runs the full
    (sigma, C) search, and evaluates the winner on the test split.
    """
    if rank_values is None:
        rank_values = grid.rank_values
    rows = []
    for entry in rank_values:
        sub_grid = replace(grid, rank_values=(entry,))
        model = train_binary(ds, sub_grid, normalize=normalize, solver_tol=solver_tol)
        metrics = evaluate(model, ds, split="test")
        rows.append(
            {
                "ranks": model.grid_point["ranks"],
                "C": model.grid_point["C"],
                "sigma": model.grid_point["sigma"],
                "validation_accuracy": model.validation_accuracy,
                "test_accuracy": metrics.accuracy,
                "support_count": int(len(model.support)),
            }
        )
    return rows

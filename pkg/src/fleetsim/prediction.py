"""Hourly sector demand prediction: a from-scratch MLP regressor trained with
Adam, a historical-average baseline, feature encoding and percent error."""

from __future__ import annotations

import csv
import hashlib
import json
import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_X_y


class MissingHistoryWarning(UserWarning):
    """Baseline predictor queried for a slot with no history."""


class MlpRegressor(RegressorMixin, BaseEstimator):
    """Feed-forward count regressor: two ReLU hidden layers, linear head,
    predictions clamped at zero.

    Training is plain mini-batch Adam on the MSE of the linear head (the
    clamp applies at prediction time only, so gradients never die at zero).
    Everything is seeded: same data and seed give identical weights.
    """

    def __init__(self, hidden=(32, 32), learning_rate=1e-4, weight_decay=1e-6,
                 batch_size=64, epochs=100, seed=0, beta1=0.9, beta2=0.999,
                 eps=1e-8):
        self.hidden = hidden
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.batch_size = batch_size
        self.epochs = epochs
        self.seed = seed
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps

    # -- parameters ------------------------------------------------------

    def initialize(self, n_features: int, seed: int | None = None) -> "MlpRegressor":
        """Seeded He-style uniform init; usable without fit for hand-built nets."""
        rng = np.random.default_rng(self.seed if seed is None else seed)
        dims = [int(n_features)] + [int(h) for h in self.hidden] + [1]
        self.weights_ = []
        self.biases_ = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            bound = np.sqrt(6.0 / fan_in)
            self.weights_.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.biases_.append(np.zeros(fan_out))
        self.n_features_in_ = int(n_features)
        return self

    def _params(self):
        return self.weights_ + self.biases_

    def get_flat_params(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self._params()])

    def set_flat_params(self, flat: np.ndarray) -> None:
        pos = 0
        for p in self._params():
            p.flat[:] = flat[pos:pos + p.size]
            pos += p.size

    @property
    def n_parameters(self) -> int:
        return sum(p.size for p in self._params())

    # -- forward / backward ----------------------------------------------

    def _forward_linear(self, x: np.ndarray):
        acts = [x]
        h = x
        last = len(self.weights_) - 1
        for i, (w, b) in enumerate(zip(self.weights_, self.biases_)):
            h = h @ w + b
            if i < last:
                h = np.maximum(h, 0.0)
            acts.append(h)
        return h[:, 0], acts

    def forward(self, x) -> float:
        """Single-example prediction, clamped at zero."""
        x = np.asarray(x, dtype=np.float64).reshape(1, -1)
        if x.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {x.shape[1]}")
        out, _ = self._forward_linear(x)
        return float(max(out[0], 0.0))

    def _loss_and_grads(self, x: np.ndarray, y: np.ndarray, weight_decay: float = 0.0):
        """Mean squared error of the linear head and its parameter gradients."""
        n = x.shape[0]
        out, acts = self._forward_linear(x)
        err = out - y
        loss = float(np.mean(err ** 2))
        grad_w = [np.zeros_like(w) for w in self.weights_]
        grad_b = [np.zeros_like(b) for b in self.biases_]
        delta = (2.0 * err / n)[:, None]
        for i in range(len(self.weights_) - 1, -1, -1):
            inp = acts[i]
            grad_w[i] = inp.T @ delta
            grad_b[i] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights_[i].T) * (acts[i] > 0)
        if weight_decay:
            for gw, w in zip(grad_w, self.weights_):
                gw += weight_decay * w
            for gb, b in zip(grad_b, self.biases_):
                gb += weight_decay * b
        return loss, grad_w + grad_b

    # -- estimator API -----------------------------------------------------

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.initialize(X.shape[1])
        rng = np.random.default_rng(self.seed)
        params = self._params()
        m = [np.zeros_like(p) for p in params]
        v = [np.zeros_like(p) for p in params]
        step = 0
        self.loss_curve_ = []
        n = X.shape[0]
        for epoch in range(self.epochs):
            order = rng.permutation(n)
            epoch_loss = 0.0
            seen = 0
            for start in range(0, n, self.batch_size):
                idx = order[start:start + self.batch_size]
                loss, grads = self._loss_and_grads(X[idx], y[idx], self.weight_decay)
                if not np.isfinite(loss):
                    raise RuntimeError(
                        f"non-finite training loss at epoch {epoch}, batch {start // self.batch_size}")
                epoch_loss += loss * len(idx)
                seen += len(idx)
                step += 1
                c1 = 1.0 - self.beta1 ** step
                c2 = 1.0 - self.beta2 ** step
                for p, g, mi, vi in zip(params, grads, m, v):
                    mi *= self.beta1
                    mi += (1 - self.beta1) * g
                    vi *= self.beta2
                    vi += (1 - self.beta2) * g * g
                    p -= self.learning_rate * (mi / c1) / (np.sqrt(vi / c2) + self.eps)
            self.loss_curve_.append(epoch_loss / seen)
        return self

    def predict(self, X) -> np.ndarray:
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        out, _ = self._forward_linear(X)
        return np.maximum(out, 0.0)


def gradient_check(model: MlpRegressor, X, y, step: float = 1e-4) -> float:
    """Max relative error between backprop gradients and central finite
    differences of the training loss, over all parameters."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _, grads = model._loss_and_grads(X, y)
    analytic = np.concatenate([g.ravel() for g in grads])
    flat = model.get_flat_params()
    fd = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        model.set_flat_params(flat)
        lo_hi, _ = model._loss_and_grads(X, y)
        flat[i] = orig - step
        model.set_flat_params(flat)
        lo_lo, _ = model._loss_and_grads(X, y)
        flat[i] = orig
        fd[i] = (lo_hi - lo_lo) / (2 * step)
    model.set_flat_params(flat)
    denom = np.maximum(np.abs(analytic) + np.abs(fd), 1e-8)
    return float(np.max(np.abs(analytic - fd) / denom))


# -- historical-average baseline -----------------------------------------


class HistoricalAveragePredictor:
    """Baseline: mean count for a (sector, hour-of-day) slot, or the previous
    hour's observation when mode="previous_hour"."""

    def __init__(self, mode: str = "hourly_mean"):
        if mode not in ("hourly_mean", "previous_hour"):
            raise ValueError(f"unknown mode {mode!r}")
        self.mode = mode
        self._slot_sums: dict[tuple[int, int], float] = {}
        self._slot_counts: dict[tuple[int, int], int] = {}
        self._exact: dict[tuple[str, int, int], float] = {}

    def fit(self, records) -> "HistoricalAveragePredictor":
        """records: iterable of (date, hour, sector, count)."""
        for date, hour, sector, count in records:
            key = (int(sector), int(hour))
            self._slot_sums[key] = self._slot_sums.get(key, 0.0) + float(count)
            self._slot_counts[key] = self._slot_counts.get(key, 0) + 1
            self._exact[(str(date), int(hour), int(sector))] = float(count)
        return self

    def predict(self, sector: int, hour: int, date: str | None = None) -> float:
        if self.mode == "previous_hour":
            if date is None:
                raise ValueError("previous_hour mode needs a date")
            key = (str(date), int(hour) - 1, int(sector))
            if key in self._exact:
                return self._exact[key]
            warnings.warn(f"no previous-hour record for sector {sector} at {date} {hour}",
                          MissingHistoryWarning)
            return 0.0
        key = (int(sector), int(hour))
        if key not in self._slot_counts:
            warnings.warn(f"no history for sector {sector} hour {hour}",
                          MissingHistoryWarning)
            return 0.0
        return self._slot_sums[key] / self._slot_counts[key]


def percent_error(predictions, actuals) -> tuple[float, int]:
    """Mean absolute relative error over rows with a positive actual.

    Returns (pe, n_excluded); pe is nan when every actual is zero.
    """
    pred = np.asarray(predictions, dtype=np.float64)
    act = np.asarray(actuals, dtype=np.float64)
    if pred.shape != act.shape:
        raise ValueError("predictions and actuals differ in length")
    mask = act > 0
    excluded = int(np.sum(~mask))
    if not np.any(mask):
        return float("nan"), excluded
    pe = float(np.mean(np.abs(act[mask] - pred[mask]) / act[mask]))
    return pe, excluded


# -- feature encoding ------------------------------------------------------


DATASET_HEADER = ["date", "hour", "sector", "count", "temperature", "precipitation"]


@dataclass
class DatasetRow:
    date: str
    hour: int
    sector: int
    count: float
    weather: tuple[float, ...]


def load_dataset(path) -> list[DatasetRow]:
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != DATASET_HEADER:
            raise ValueError(f"unexpected dataset header: {header}")
        for row in reader:
            if not row:
                continue
            rows.append(DatasetRow(row[0], int(row[1]), int(row[2]), float(row[3]),
                                   (float(row[4]), float(row[5]))))
    return rows


def save_dataset(rows, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(DATASET_HEADER)
        for r in rows:
            writer.writerow([r.date, r.hour, r.sector, repr(float(r.count))]
                            + [repr(float(w)) for w in r.weather])


def split_by_date(rows, train_fraction: float = 8 / 12):
    """Date-ordered split: the earliest train_fraction of distinct dates train."""
    dates = sorted({r.date for r in rows})
    cut = max(1, int(round(train_fraction * len(dates))))
    train_dates = set(dates[:cut])
    train = [r for r in rows if r.date in train_dates]
    test = [r for r in rows if r.date not in train_dates]
    return train, test


def _day_of_week(date: str) -> int:
    import datetime

    return datetime.date.fromisoformat(date).weekday()


class FeatureEncoder:
    """Temporal one-hots (day-of-week, month, hour) plus weather channels
    standardized with training-split statistics."""

    BASE_DIM = 7 + 12 + 24

    def __init__(self):
        self.weather_mean_: np.ndarray | None = None
        self.weather_std_: np.ndarray | None = None

    def fit(self, rows) -> "FeatureEncoder":
        weather = np.array([r.weather for r in rows], dtype=np.float64)
        if len(weather) == 0:
            raise ValueError("cannot fit an encoder on no rows")
        self.weather_mean_ = weather.mean(axis=0)
        std = weather.std(axis=0)
        std[std == 0] = 1.0
        self.weather_std_ = std
        return self

    @property
    def dim(self) -> int:
        return self.BASE_DIM + len(self.weather_mean_)

    def transform_row(self, row: DatasetRow) -> np.ndarray:
        out = np.zeros(self.dim)
        out[_day_of_week(row.date)] = 1.0
        month = int(row.date[5:7])
        out[7 + month - 1] = 1.0
        out[7 + 12 + row.hour] = 1.0
        w = (np.asarray(row.weather) - self.weather_mean_) / self.weather_std_
        out[self.BASE_DIM:] = w
        return out

    def transform(self, rows) -> np.ndarray:
        return np.array([self.transform_row(r) for r in rows])

    def state(self) -> dict:
        return {"mean": self.weather_mean_.tolist(), "std": self.weather_std_.tolist()}

    @classmethod
    def from_state(cls, state: dict) -> "FeatureEncoder":
        enc = cls()
        enc.weather_mean_ = np.array(state["mean"], dtype=np.float64)
        enc.weather_std_ = np.array(state["std"], dtype=np.float64)
        return enc


# -- two-network dispatch ---------------------------------------------------


class DemandPredictor:
    """Routes each (date, sector) to the event-enhanced network when that
    sector has events that day, otherwise to the base network."""

    def __init__(self, base_model: MlpRegressor, event_model: MlpRegressor | None,
                 encoder: FeatureEncoder,
                 event_features: dict[tuple[str, int], np.ndarray] | None = None):
        self.base_model = base_model
        self.event_model = event_model
        self.encoder = encoder
        self.event_features = event_features or {}

    def network_for(self, date: str, sector: int) -> str:
        if self.event_model is not None and (date, sector) in self.event_features:
            return "enhanced"
        return "base"

    def predict_row(self, row: DatasetRow) -> float:
        base = self.encoder.transform_row(row)
        if self.network_for(row.date, row.sector) == "enhanced":
            x = np.concatenate([base, self.event_features[(row.date, row.sector)]])
            return float(self.event_model.predict(x.reshape(1, -1))[0])
        return float(self.base_model.predict(base.reshape(1, -1))[0])


# -- checkpoints -------------------------------------------------------------


def _model_arrays(model: MlpRegressor, prefix: str) -> dict[str, np.ndarray]:
    out = {}
    for i, (w, b) in enumerate(zip(model.weights_, model.biases_)):
        out[f"{prefix}_w{i}"] = w
        out[f"{prefix}_b{i}"] = b
    return out


def save_checkpoint(path, predictor: DemandPredictor, config: dict) -> None:
    """Tensor dump with a JSON header (layer dims, seed, config hash)."""
    header = {
        "base_dims": [predictor.base_model.n_features_in_]
        + list(predictor.base_model.hidden) + [1],
        "base_params": predictor.base_model.get_params(),
        "encoder": predictor.encoder.state(),
        "config": config,
        "config_hash": hashlib.sha256(
            json.dumps(config, sort_keys=True).encode()).hexdigest(),
        "has_event_model": predictor.event_model is not None,
    }
    arrays = _model_arrays(predictor.base_model, "base")
    if predictor.event_model is not None:
        header["event_dims"] = [predictor.event_model.n_features_in_] \
            + list(predictor.event_model.hidden) + [1]
        header["event_params"] = predictor.event_model.get_params()
        arrays.update(_model_arrays(predictor.event_model, "event"))
    np.savez(path, header=np.frombuffer(json.dumps(header, sort_keys=True).encode(),
                                        dtype=np.uint8), **arrays)


def _load_model(data, header_params, dims, prefix) -> MlpRegressor:
    params = dict(header_params)
    params["hidden"] = tuple(params["hidden"])
    model = MlpRegressor(**params)
    model.initialize(dims[0])
    model.weights_ = [data[f"{prefix}_w{i}"] for i in range(len(dims) - 1)]
    model.biases_ = [data[f"{prefix}_b{i}"] for i in range(len(dims) - 1)]
    return model


def load_checkpoint(path, event_features=None) -> tuple[DemandPredictor, dict]:
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(bytes(data["header"]).decode())
        base = _load_model(data, header["base_params"], header["base_dims"], "base")
        event = None
        if header["has_event_model"]:
            event = _load_model(data, header["event_params"], header["event_dims"], "event")
    encoder = FeatureEncoder.from_state(header["encoder"])
    return DemandPredictor(base, event, encoder, event_features), header

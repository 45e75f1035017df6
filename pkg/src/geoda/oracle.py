"""Hard-label oracles with exact query accounting.

Every oracle exposes only the top-1 class index. A query counter tracks each
answered label request by phase so the budget discipline of an attack run can
be audited afterwards. Analytic oracles (hyperplane, sphere) have known
geometry and serve as ground truth in tests; the remote oracle speaks a small
JSON wire protocol to a model server.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass

import numpy as np
import requests

from .core import GeodaError, as_point

PHASES = ("estimation", "binary_search", "line_search", "sparse_search")


class OracleError(GeodaError):
    pass


class DimensionMismatch(OracleError):
    pass


class RemoteUnavailable(OracleError):
    """The remote endpoint failed to answer; query counters are preserved."""


class UnsupportedOracle(OracleError):
    pass


class QueryCounter:
    """Monotone per-phase counter of answered label queries.

    ``total`` always equals the sum of the per-phase counts. Updates are
    atomic so estimation batches may fan out across threads.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._counts = {phase: 0 for phase in PHASES}

    def record(self, phase: str, n: int = 1) -> None:
        if phase not in self._counts:
            raise ValueError(f"unknown query phase {phase!r}")
        if n < 0:
            raise ValueError("query count increments must be non-negative")
        with self._lock:
            self._counts[phase] += n

    @property
    def total(self) -> int:
        with self._lock:
            return sum(self._counts.values())

    @property
    def by_phase(self) -> dict:
        with self._lock:
            return dict(self._counts)

    def snapshot(self) -> dict:
        counts = self.by_phase
        counts["total"] = sum(counts.values())
        return counts


class Oracle:
    """Base top-1 label oracle.

    Subclasses implement ``_classify`` (and, if they can, a vectorized
    ``_classify_batch``). ``clip_box`` is the valid input range enforced
    before querying, or None when any real vector is a legal query.
    """

    dim: int
    clip_box = None

    def __init__(self):
        self.counter = QueryCounter()

    def _classify(self, x: np.ndarray) -> int:
        raise NotImplementedError

    def _classify_batch(self, xs: np.ndarray) -> np.ndarray:
        return np.array([self._classify(x) for x in xs], dtype=np.int64)

    def _check_dim(self, x: np.ndarray) -> None:
        if x.shape[-1] != self.dim:
            raise DimensionMismatch(
                f"oracle expects dimension {self.dim}, got {x.shape[-1]}"
            )

    def top1(self, x: np.ndarray, phase: str = "estimation") -> int:
        """Answer one label query and charge it to ``phase``."""
        self._check_dim(x)
        label = self._classify(x)
        self.counter.record(phase, 1)
        return label

    def top1_batch(self, xs: np.ndarray, phase: str = "estimation") -> np.ndarray:
        """Answer a batch of label queries; one counter increment per row."""
        xs = np.atleast_2d(xs)
        self._check_dim(xs)
        labels = self._classify_batch(xs)
        self.counter.record(phase, len(xs))
        return labels


class LinearOracle(Oracle):
    """Classifier with a hyperplane boundary w.x + b = 0 (w unit l2).

    Points with w.x + b > 0 get ``label_outside``; the boundary itself ties
    to ``label_inside`` so that binary search converges onto the adversarial
    side from above.
    """

    def __init__(self, w, b: float = 0.0, label_inside: int = 0, label_outside: int = 1):
        super().__init__()
        self.w = as_point(w)
        norm = np.linalg.norm(self.w)
        if abs(norm - 1.0) > 1e-12:
            self.w = self.w / norm
        self.b = float(b)
        self.label_inside = int(label_inside)
        self.label_outside = int(label_outside)
        self.dim = self.w.size

    def _classify(self, x):
        return self.label_outside if float(self.w @ x) + self.b > 0 else self.label_inside

    def _classify_batch(self, xs):
        outside = xs @ self.w + self.b > 0
        return np.where(outside, self.label_outside, self.label_inside)

    def min_perturbation(self, x: np.ndarray):
        g = float(self.w @ x) + self.b
        direction = -self.w if g > 0 else self.w
        return abs(g), direction


class BallOracle(Oracle):
    """Classifier whose boundary is a sphere of radius R around ``center``.

    Inside the ball (distance <= R, ties included) classifies as
    ``label_inside``. Starting an attack inside the ball exercises a convex
    boundary (curvature 1/R bends away from the data point); starting outside
    exercises the concave case.
    """

    def __init__(self, center, radius: float, label_inside: int = 0, label_outside: int = 1):
        super().__init__()
        self.center = as_point(center)
        if radius <= 0:
            raise ValueError("ball radius must be positive")
        self.radius = float(radius)
        self.label_inside = int(label_inside)
        self.label_outside = int(label_outside)
        self.dim = self.center.size

    def _classify(self, x):
        inside = float(np.linalg.norm(x - self.center)) <= self.radius
        return self.label_inside if inside else self.label_outside

    def _classify_batch(self, xs):
        inside = np.linalg.norm(xs - self.center, axis=1) <= self.radius
        return np.where(inside, self.label_inside, self.label_outside)

    def min_perturbation(self, x: np.ndarray):
        delta = x - self.center
        dist = float(np.linalg.norm(delta))
        if dist == 0.0:
            radial = np.zeros(self.dim)
            radial[0] = 1.0
        else:
            radial = delta / dist
        if dist <= self.radius:
            return self.radius - dist, radial
        return dist - self.radius, -radial


class RemoteOracle(Oracle):
    """Client of a label-only model server.

    Wire protocol (bit-exact):
      POST {endpoint}/predict        {"shape": [C,H,W], "x": [f64,...]} -> {"label": int}
      POST {endpoint}/predict_batch  {"shape": [C,H,W], "xs": [[...],...]} -> {"labels": [...]}
    with ``x`` flattened in (channel, row, column) order, values in [0, 1].

    A transient network failure is retried once; retries do not touch the
    counter because only answered queries count. Inputs are clipped into
    [0, 1] before transmission since the server only accepts valid images.
    """

    clip_box = (0.0, 1.0)

    def __init__(self, endpoint: str, input_shape, timeout: float = 30.0, batch_size: int = 64):
        super().__init__()
        self.endpoint = endpoint.rstrip("/")
        self.input_shape = tuple(int(s) for s in input_shape)
        if len(self.input_shape) != 3:
            raise ValueError("input_shape must be (channels, height, width)")
        self.timeout = float(timeout)
        self.batch_size = int(batch_size)
        self.dim = int(np.prod(self.input_shape))

    def _post(self, path: str, payload: dict) -> dict:
        body = json.dumps(payload)
        last_err = None
        for _ in range(2):  # one retry on transient failure
            try:
                resp = requests.post(
                    self.endpoint + path,
                    data=body,
                    headers={"Content-Type": "application/json"},
                    timeout=self.timeout,
                )
            except requests.RequestException as err:
                last_err = err
                continue
            if resp.status_code == 400:
                raise DimensionMismatch(f"server rejected shape: {resp.text}")
            if resp.status_code == 503:
                last_err = RemoteUnavailable("model not loaded (HTTP 503)")
                continue
            if resp.status_code != 200:
                raise OracleError(f"unexpected HTTP {resp.status_code}: {resp.text}")
            return resp.json()
        raise RemoteUnavailable(f"remote oracle unavailable: {last_err}")

    def _prepare(self, xs: np.ndarray) -> np.ndarray:
        return np.clip(xs, self.clip_box[0], self.clip_box[1])

    def _classify(self, x):
        x = self._prepare(x)
        out = self._post("/predict", {"shape": list(self.input_shape), "x": x.tolist()})
        return int(out["label"])

    def _classify_batch(self, xs):
        xs = self._prepare(xs)
        labels = []
        for start in range(0, len(xs), self.batch_size):
            chunk = xs[start : start + self.batch_size]
            out = self._post(
                "/predict_batch",
                {"shape": list(self.input_shape), "xs": chunk.tolist()},
            )
            labels.extend(int(v) for v in out["labels"])
        return np.asarray(labels, dtype=np.int64)


def min_perturbation_analytic(oracle: Oracle, x: np.ndarray):
    """Exact minimal l2 perturbation (distance, unit direction) of an analytic oracle.

    The direction is oriented so that stepping distance + eps along it flips
    the label of x; no query counter is touched. Remote oracles have no closed
    form and raise UnsupportedOracle.
    """
    if isinstance(oracle, (LinearOracle, BallOracle)):
        return oracle.min_perturbation(as_point(x))
    raise UnsupportedOracle(f"no analytic minimal perturbation for {type(oracle).__name__}")


@dataclass
class DecisionOracle:
    """An oracle plus the cached label of the point under attack.

    Caching the original label costs exactly one query (charged to the
    binary-search phase, as part of attack initialization); afterwards each
    adversariality test costs one query.
    """

    oracle: Oracle
    original: np.ndarray
    original_label: int

    @classmethod
    def for_point(cls, oracle: Oracle, x, phase: str = "binary_search") -> "DecisionOracle":
        x = as_point(x)
        return cls(oracle=oracle, original=x, original_label=oracle.top1(x, phase))

    def is_adversarial(self, x: np.ndarray, phase: str) -> bool:
        return self.oracle.top1(x, phase) != self.original_label

    def is_adversarial_batch(self, xs: np.ndarray, phase: str) -> np.ndarray:
        return self.oracle.top1_batch(xs, phase) != self.original_label

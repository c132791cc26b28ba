"""Plant description: a linear stochastic system with attacker input channels.

    x_{t+1} = A x_t + B u_t + Gamma e_t + w_t
    y_t     = C x_t + Psi e_t + v_t

with w ~ N(0, Sigma_w), v ~ N(0, Sigma_v) and an initial state drawn from
N(x_bar, Sigma_x).  Models are plain frozen containers loaded from / saved to
JSON files of named row-major arrays; validation is explicit and returns a
report rather than raising, so callers can surface every broken assumption at
once.
"""

from __future__ import annotations

import hashlib
import os
import json
from dataclasses import dataclass, field

import numpy as np

from .numerics import definiteness, numeric_rank, symmetrize

MODEL_KEYS = ("A", "B", "C", "Gamma", "Psi", "Sigma_w", "Sigma_v", "Sigma_x", "x_bar")


class ModelFormatError(ValueError):
    """A model file is missing a key or holds a malformed array."""


@dataclass(frozen=True)
class SystemModel:
    """Immutable plant model.  Cholesky factors of the noise covariances are
    cached at construction for fast sampling."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    Gamma: np.ndarray
    Psi: np.ndarray
    Sigma_w: np.ndarray
    Sigma_v: np.ndarray
    Sigma_x: np.ndarray
    x_bar: np.ndarray
    name: str = "unnamed"
    _chol_w: np.ndarray = field(init=False, repr=False, compare=False)
    _chol_v: np.ndarray = field(init=False, repr=False, compare=False)
    _chol_x: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        arrays = {k: np.atleast_2d(np.asarray(getattr(self, k), dtype=float))
                  for k in MODEL_KEYS if k != "x_bar"}
        x_bar = np.asarray(self.x_bar, dtype=float).reshape(-1)
        n = arrays["A"].shape[0]
        shapes = {
            "A": (n, n),
            "B": (n, arrays["B"].shape[1]),
            "C": (arrays["C"].shape[0], n),
            "Gamma": (n, arrays["Gamma"].shape[1]),
            "Psi": (arrays["C"].shape[0], arrays["Gamma"].shape[1]),
            "Sigma_w": (n, n),
            "Sigma_v": (arrays["C"].shape[0], arrays["C"].shape[0]),
            "Sigma_x": (n, n),
        }
        for key, want in shapes.items():
            if arrays[key].shape != want:
                raise ModelFormatError(
                    f"array {key!r} has shape {arrays[key].shape}, expected {want}")
        if x_bar.shape != (n,):
            raise ModelFormatError(
                f"array 'x_bar' has shape {x_bar.shape}, expected ({n},)")
        for key in ("Sigma_w", "Sigma_v", "Sigma_x"):
            arrays[key] = symmetrize(arrays[key], name=key)
        for key, value in arrays.items():
            object.__setattr__(self, key, value)
        object.__setattr__(self, "x_bar", x_bar)
        object.__setattr__(self, "_chol_w", _safe_cholesky(arrays["Sigma_w"]))
        object.__setattr__(self, "_chol_v", _safe_cholesky(arrays["Sigma_v"]))
        object.__setattr__(self, "_chol_x", _safe_cholesky(arrays["Sigma_x"]))

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def p(self):
        return self.C.shape[0]

    @property
    def s(self):
        return self.Gamma.shape[1]


def _safe_cholesky(Sigma):
    """Cholesky factor, or None when Sigma is not positive definite.

    Validation reports PD failures separately; sampling from a model whose
    factor is missing raises at sampling time.
    """
    try:
        return np.linalg.cholesky(Sigma)
    except np.linalg.LinAlgError:
        return None


@dataclass
class ValidationReport:
    observable: bool
    controllable: bool
    attack_injective: bool
    noise_pd: bool
    messages: list

    @property
    def ok(self):
        return self.observable and self.controllable and self.attack_injective and self.noise_pd


def validate(model, rank_cutoff=1e-8):
    """Check the standing assumptions: (A, C) observable, (A, B) controllable,
    [Gamma; Psi] injective, and all three covariances positive definite."""
    n = model.n
    obs = np.vstack([model.C @ np.linalg.matrix_power(model.A, k) for k in range(n)])
    ctr = np.hstack([np.linalg.matrix_power(model.A, k) @ model.B for k in range(n)])
    atk = np.vstack([model.Gamma, model.Psi])
    observable = numeric_rank(obs, rank_cutoff) == n
    controllable = numeric_rank(ctr, rank_cutoff) == n
    attack_injective = numeric_rank(atk, rank_cutoff) == model.s
    messages = []
    if not observable:
        messages.append("(A, C) is not observable")
    if not controllable:
        messages.append("(A, B) is not controllable")
    if not attack_injective:
        messages.append("[Gamma; Psi] does not have full column rank")
    pd_ok = True
    for key in ("Sigma_w", "Sigma_v", "Sigma_x"):
        if not definiteness(getattr(model, key)).is_pd:
            pd_ok = False
            messages.append(f"{key} is not positive definite")
    return ValidationReport(observable, controllable, attack_injective, pd_ok, messages)


def step(model, x, u, e=None, w=None):
    """One state transition x_{t+1} = A x + B u + Gamma e + w."""
    x_next = model.A @ x + model.B @ u
    if e is not None:
        x_next = x_next + model.Gamma @ e
    if w is not None:
        x_next = x_next + w
    return x_next

def output(model, x, e=None, v=None):
    """Measurement y = C x + Psi e + v."""
    y = model.C @ x
    if e is not None:
        y = y + model.Psi @ e
    if v is not None:
        y = y + v
    return y


def sample_noise(model, stream):
    """Draw one process/measurement noise pair (w, v) from the given stream.

    A single block of n + p standard normals is consumed per call (w first),
    so batched simulators can reproduce the exact same draws.
    """
    if model._chol_w is None or model._chol_v is None:
        raise ValueError("model noise covariance is not positive definite; cannot sample")
    z = stream.standard_normal(model.n + model.p)
    return model._chol_w @ z[:model.n], model._chol_v @ z[model.n:]


def sample_initial_state(model, stream):
    """Draw x ~ N(x_bar, Sigma_x)."""
    if model._chol_x is None:
        raise ValueError("Sigma_x is not positive definite; cannot sample initial state")
    return model.x_bar + model._chol_x @ stream.standard_normal(model.n)


def _to_lists(M):
    return np.asarray(M, dtype=float).tolist()


def model_to_dict(model):
    doc = {key: _to_lists(getattr(model, key)) for key in MODEL_KEYS if key != "x_bar"}
    doc["x_bar"] = list(np.asarray(model.x_bar, dtype=float))
    doc["name"] = model.name
    return doc


def model_from_dict(doc, name=None):
    kwargs = {}
    for key in MODEL_KEYS:
        if key not in doc:
            raise ModelFormatError(f"model document is missing key {key!r}")
        try:
            kwargs[key] = np.asarray(doc[key], dtype=float)
        except (TypeError, ValueError) as exc:
            raise ModelFormatError(f"array {key!r} is malformed: {exc}") from exc
        if not np.all(np.isfinite(kwargs[key])):
            raise ModelFormatError(f"array {key!r} contains non-finite entries")
    return SystemModel(name=name or doc.get("name", "unnamed"), **kwargs)


def save_model(model, path):
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_model(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ModelFormatError(f"{path}: top level must be an object")
    try:
        return model_from_dict(doc)
    except ModelFormatError as exc:
        raise ModelFormatError(f"{path}: {exc}") from exc


def model_hash(model):
    """Content hash of the model arrays (used to tie policy files to models)."""
    doc = model_to_dict(model)
    doc.pop("name", None)
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def bundled_model_path(name):
    """Filesystem path of a model shipped with the package (by stem name)."""
    from importlib import resources

    return str(resources.files("cpsattack.models").joinpath(f"{name}.json"))


def load_bundled(name):
    path = bundled_model_path(name)
    if not os.path.exists(path):
        from importlib import resources

        stems = sorted(entry.name[:-5]
                       for entry in resources.files("cpsattack.models").iterdir()
                       if entry.name.endswith(".json"))
        raise ModelFormatError(
            f"no bundled model named {name!r}; available: {', '.join(stems)}")
    return load_model(path)

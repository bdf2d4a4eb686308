"""Flat text serialization for trained models.

Layout::

    watergenius-model 1
    family mlp
    <key> <value>                 one scalar per line
    array <name> <rows> <cols>
    <row of whitespace-separated floats>   repeated <rows> times
    end

Floats are written with ``repr`` so a reload is bit-identical. An optional
``scaler_min``/``scaler_max`` array pair stores the min-max bounds the model
was trained under (input columns, then target).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataio import Scaler
from .mlp import MlpConfig, MlpModel
from .rbf import CentreFit, RbfConfig, RbfModel
from .svr import Kernel, SvrConfig, SvrModel

MAGIC = "watergenius-model 1"


class FormatError(ValueError):
    """The text is not a complete serialized model."""


@dataclass(frozen=True)
class SavedModel:
    model: object
    scaler: Scaler | None = None
    label: str | None = None


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _array_lines(name, arr):
    arr = np.atleast_2d(np.asarray(arr, dtype=np.float64))
    lines = [f"array {name} {arr.shape[0]} {arr.shape[1]}"]
    lines += [" ".join(repr(float(v)) for v in row) for row in arr]
    return lines


def dumps(model, scaler: Scaler | None = None, label: str | None = None) -> str:
    if isinstance(model, MlpModel):
        c = model.config
        header = {"family": "mlp", "n_inputs": c.n_inputs, "n_hidden": c.n_hidden,
                  "output_activation": c.output_activation, "optimizer": c.optimizer,
                  "max_iters": c.max_iters, "grad_tol": float(c.grad_tol), "seed": c.seed,
                  "training_error": float(model.training_error),
                  "iterations": model.iterations, "converged": bool(model.converged)}
        arrays = [("w1", model.w1), ("w2", model.w2)]
    elif isinstance(model, RbfModel):
        c = model.config
        header = {"family": "rbf", "n_inputs": c.n_inputs, "n_hidden": c.n_hidden,
                  "activation": c.activation, "em_iters": c.em_iters, "seed": c.seed,
                  "training_error": float(model.training_error)}
        arrays = [("centres", model.centres), ("widths", model.widths[None, :]), ("w", model.w)]
    elif isinstance(model, SvrModel):
        c = model.config
        header = {"family": "svr", "kernel": c.kernel.family}
        header.update({f"kernel_{k}": (float(v) if isinstance(v, float) else v)
                       for k, v in c.kernel.params().items()})
        header.update({"c": float(c.c), "epsilon": float(c.epsilon), "kkt_tol": float(c.kkt_tol),
                       "max_passes": c.max_passes, "seed": c.seed, "b": float(model.b),
                       "n_features": model.n_features,
                       "training_error": float(model.training_error),
                       "converged": bool(model.converged),
                       "kkt_violation": float(model.kkt_violation),
                       "iterations": model.iterations,
                       "dual_objective": float(model.dual_objective)})
        sv = model.support_vectors.reshape(-1, model.n_features)
        arrays = [("support_vectors", sv),
                  ("dual_coefficients", model.dual_coefficients[None, :])]
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    if label is not None:
        header["label"] = label
    lines = [MAGIC] + [f"{k} {_fmt(v)}" for k, v in header.items()]
    for name, arr in arrays:
        if name in ("support_vectors", "dual_coefficients") and arr.size == 0:
            lines.append(f"array {name} {arr.shape[0]} {arr.shape[1]}")
            continue
        lines += _array_lines(name, arr)
    if scaler is not None:
        lines += _array_lines("scaler_min", scaler.x_min[None, :])
        lines += _array_lines("scaler_max", scaler.x_max[None, :])
    lines.append("end")
    return "\n".join(lines) + "\n"


def save_model(path, model, scaler: Scaler | None = None, label: str | None = None) -> None:
    Path(path).write_text(dumps(model, scaler, label))


def _parse(text: str):
    lines = text.splitlines()
    if not lines or lines[0].strip() != MAGIC:
        raise FormatError("missing model header")
    scalars: dict[str, str] = {}
    arrays: dict[str, np.ndarray] = {}
    i = 1
    while i < len(lines):
        line = lines[i].strip()
        i += 1
        if not line:
            continue
        if line == "end":
            return scalars, arrays
        parts = line.split()
        if parts[0] == "array":
            if len(parts) != 4:
                raise FormatError(f"line {i}: malformed array header")
            name = parts[1]
            try:
                rows, cols = int(parts[2]), int(parts[3])
            except ValueError:
                raise FormatError(f"line {i}: malformed array shape") from None
            if rows == 0 or cols == 0:
                arrays[name] = np.zeros((rows, cols))
                continue
            if i + rows > len(lines):
                raise FormatError(f"array {name} is truncated")
            try:
                data = [[float(v) for v in lines[i + r].split()] for r in range(rows)]
            except ValueError:
                raise FormatError(f"array {name} has a non-numeric entry") from None
            if any(len(row) != cols for row in data):
                raise FormatError(f"array {name} has ragged rows")
            arrays[name] = np.array(data, dtype=np.float64)
            i += rows
        else:
            if len(parts) != 2:
                raise FormatError(f"line {i}: expected 'key value'")
            scalars[parts[0]] = parts[1]
    raise FormatError("file is truncated (no 'end' marker)")


def _bool(s: str) -> bool:
    if s not in ("true", "false"):
        raise FormatError(f"expected true/false, got {s!r}")
    return s == "true"


def loads(text: str) -> SavedModel:
    scalars, arrays = _parse(text)
    try:
        family = scalars["family"]
        if family == "mlp":
            cfg = MlpConfig(int(scalars["n_inputs"]), int(scalars["n_hidden"]),
                            scalars["output_activation"], scalars["optimizer"],
                            int(scalars["max_iters"]), float(scalars["grad_tol"]),
                            int(scalars["seed"]))
            model = MlpModel(arrays["w1"], arrays["w2"], cfg, float(scalars["training_error"]),
                             int(scalars["iterations"]), _bool(scalars["converged"]))
        elif family == "rbf":
            cfg = RbfConfig(int(scalars["n_inputs"]), int(scalars["n_hidden"]),
                            scalars["activation"], int(scalars["em_iters"]), int(scalars["seed"]))
            centres, widths = arrays["centres"], arrays["widths"][0]
            model = RbfModel(centres, widths, arrays["w"], cfg, float(scalars["training_error"]),
                             CentreFit(centres, widths))
        elif family == "svr":
            kparams = {}
            for key, val in scalars.items():
                if key.startswith("kernel_"):
                    name = key[len("kernel_"):]
                    kparams[name] = int(val) if name in ("degree", "max_order") else float(val)
            kernel = Kernel(scalars["kernel"], **kparams)
            cfg = SvrConfig(kernel, float(scalars["c"]), float(scalars["epsilon"]),
                            float(scalars["kkt_tol"]), int(scalars["max_passes"]),
                            int(scalars["seed"]))
            coef = arrays["dual_coefficients"].reshape(-1)
            model = SvrModel(arrays["support_vectors"], coef, float(scalars["b"]), cfg,
                             float(scalars["training_error"]), _bool(scalars["converged"]),
                             float(scalars["kkt_violation"]), int(scalars["iterations"]),
                             float(scalars["dual_objective"]), int(scalars["n_features"]))
        else:
            raise FormatError(f"unknown model family {family!r}")
    except KeyError as exc:
        raise FormatError(f"missing field {exc.args[0]!r}") from None
    except FormatError:
        raise
    except ValueError as exc:
        raise FormatError(str(exc)) from None
    scaler = None
    if "scaler_min" in arrays and "scaler_max" in arrays:
        scaler = Scaler(arrays["scaler_min"][0], arrays["scaler_max"][0])
    return SavedModel(model, scaler, scalars.get("label"))


def load_model(path) -> SavedModel:
    return loads(Path(path).read_text())


def describe(model) -> str:
    """One-line summary such as ``mlp, linear output, 10 hidden, scg``."""
    if isinstance(model, MlpModel):
        c = model.config
        return f"mlp, {c.output_activation} output, {c.n_hidden} hidden, {c.optimizer}"
    if isinstance(model, RbfModel):
        c = model.config
        return f"rbf, {c.activation} activation, {c.n_hidden} hidden"
    if isinstance(model, SvrModel):
        return (f"svr, {model.config.kernel.label} kernel, "
                f"{model.dual_coefficients.size} support vectors")
    raise TypeError(f"unsupported model type {type(model).__name__}")


def summary(saved: SavedModel) -> str:
    m = saved.model
    lines = [describe(m)]
    if saved.label:
        lines.append(f"label: {saved.label}")
    if isinstance(m, MlpModel):
        c = m.config
        lines += [f"inputs: {c.n_inputs}", f"parameters: {m.w1.size + m.w2.size}",
                  f"max_iters: {c.max_iters}", f"grad_tol: {c.grad_tol:g}",
                  f"iterations: {m.iterations}", f"converged: {m.converged}"]
    elif isinstance(m, RbfModel):
        c = m.config
        lines += [f"inputs: {c.n_inputs}", f"centres: {m.centres.shape[0]}",
                  f"parameters: {m.centres.size + m.widths.size + m.w.size}",
                  f"em_iters: {c.em_iters}"]
    else:
        c = m.config
        params = ", ".join(f"{k}={v:g}" for k, v in c.kernel.params().items()) or "none"
        lines += [f"inputs: {m.n_features}", f"kernel parameters: {params}",
                  f"support vectors: {m.dual_coefficients.size}",
                  f"C: {c.c:g}", f"epsilon: {c.epsilon:g}", f"b: {m.b!r}",
                  f"converged: {m.converged} (KKT violation {m.kkt_violation:.3g})"]
    lines.append(f"training error: {m.training_error!r}")
    lines.append(f"scaler: {'present' if saved.scaler is not None else 'absent'}")
    return "\n".join(lines)

"""JSON network manifests and compiled artifacts.

Tensors are referenced by paths relative to the JSON file that names them.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bitslice import Slicing
from .compiler import CompiledLayer
from .layers import CONVOLUTION, FULLY_CONNECTED, LayerSpec, QuantParams
from .oracle import run_network
from .tensorio import atomic_write, read_tensor, write_tensor
from .xbar import CrossbarConfig

ARTIFACT_FORMAT = "pimslice-compiled"
ARTIFACT_VERSION = 1


class ManifestError(ValueError):
    pass


@dataclass
class NetworkManifest:
    layers: list[LayerSpec]
    input_shape: tuple[int, ...]
    seed: int = 0
    inputs_path: Path | None = None
    path: Path | None = None

    def load_inputs(self) -> np.ndarray:
        if self.inputs_path is None:
            raise ManifestError("manifest names no input tensor; pass one explicitly")
        return read_tensor(self.inputs_path)


def _layer_from_dict(d: dict, base: Path, n: int, index: int) -> LayerSpec:
    name = d.get("name", f"layer{index}")
    try:
        kind = d["kind"]
        wpath = base / d["weights"]
        q = d["quant"]
    except KeyError as e:
        raise ManifestError(f"{name}: missing field {e}") from None
    if not wpath.is_file():
        raise ManifestError(f"{name}: weight file not found: {wpath}")
    try:
        weights = read_tensor(wpath)
        quant = QuantParams(q["scale"], q.get("bias", 0.0), q.get("activation", "relu"),
                            bool(q.get("output_signed", False)))
        return LayerSpec(name, kind, weights, quant,
                         weight_zero_point=int(d.get("weight_zero_point", 128)),
                         stride=d.get("stride", 1), padding=d.get("padding", 0),
                         input_signed=bool(d.get("input_signed", False)),
                         is_last_layer=bool(d.get("is_last_layer", index == n - 1)),
                         meta={"weights": d["weights"]})
    except (ValueError, KeyError) as e:
        raise ManifestError(f"{name}: {e}") from None


def load_manifest(path) -> NetworkManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ManifestError(f"cannot read manifest {path}: {e}") from None
    base = path.parent
    entries = doc.get("layers") or []
    if not entries:
        raise ManifestError("manifest has no layers")
    layers = [_layer_from_dict(d, base, len(entries), i) for i, d in enumerate(entries)]
    if "input_shape" not in doc:
        raise ManifestError("manifest needs an input_shape")
    m = NetworkManifest(layers, tuple(int(v) for v in doc["input_shape"]),
                        int(doc.get("seed", 0)),
                        base / doc["inputs"] if doc.get("inputs") else None, path)
    check_chain(m)
    return m


def check_chain(m: NetworkManifest) -> None:
    """Propagate a zero input so every shape or signedness mismatch names its layer."""
    prev_signed = m.layers[0].input_signed
    for i, layer in enumerate(m.layers):
        if i and layer.input_signed != prev_signed:
            raise ManifestError(f"{layer.name}: input signedness does not match the "
                                f"previous layer's output")
        prev_signed = layer.quant.output_signed
    x = np.zeros((1,) + m.input_shape, dtype=np.int64)
    for layer in m.layers:
        try:
            x = run_network([layer], x)[-1]
        except ValueError as e:
            raise ManifestError(str(e)) from None


def write_manifest(path, layers: list[LayerSpec], input_shape, seed: int = 0,
                   inputs: np.ndarray | None = None) -> None:
    """Write weights and a manifest referencing them (next to ``path``)."""
    path = Path(path)
    base = path.parent
    entries = []
    for layer in layers:
        wname = f"{layer.name}.weights.rtsr"
        write_tensor(base / wname, layer.weights)
        entries.append({
            "name": layer.name,
            "kind": layer.kind,
            "weights": wname,
            "weight_zero_point": layer.weight_zero_point,
            "stride": list(layer.stride),
            "padding": list(layer.padding),
            "input_signed": layer.input_signed,
            "is_last_layer": layer.is_last_layer,
            "quant": {
                "scale": [float(v) for v in layer.quant.scale],
                "bias": [float(v) for v in layer.quant.bias],
                "activation": layer.quant.activation,
                "output_signed": layer.quant.output_signed,
            },
        })
    doc = {"input_shape": list(input_shape), "seed": seed, "layers": entries}
    if inputs is not None:
        write_tensor(base / "inputs.rtsr", inputs)
        doc["inputs"] = "inputs.rtsr"
    atomic_write(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def artifact_json(compiled: list[CompiledLayer], manifest: NetworkManifest,
                  config: CrossbarConfig, path, test_inputs: int) -> str:
    rel = os.path.relpath(manifest.path.resolve(), Path(path).resolve().parent)
    doc = {
        "format": ARTIFACT_FORMAT,
        "version": ARTIFACT_VERSION,
        "manifest": rel,
        "config": config.to_dict(),
        "test_inputs": test_inputs,
        "layers": [{
            "name": c.name,
            "slicing": list(c.slicing.widths),
            "centers": c.centers.tolist(),
            "rows": c.rows,
            "center_mode": c.center_mode,
            "measured_error": c.measured_error,
            "error_budget": c.error_budget,
            "fallback": c.fallback,
            "forced_last_layer": c.forced,
            "candidates_evaluated": c.candidates_evaluated,
        } for c in compiled],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def write_artifact(path, compiled, manifest, config, test_inputs: int) -> None:
    atomic_write(path, artifact_json(compiled, manifest, config, path, test_inputs))


def load_artifact(path) -> tuple[list[CompiledLayer], NetworkManifest, CrossbarConfig]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ManifestError(f"cannot read artifact {path}: {e}") from None
    if doc.get("format") != ARTIFACT_FORMAT:
        raise ManifestError(f"{path} is not a compiled artifact")
    manifest = load_manifest(path.parent / doc["manifest"])
    config = CrossbarConfig(**doc["config"])
    by_name = {l.name: l for l in manifest.layers}
    compiled = []
    for d in doc["layers"]:
        if d["name"] not in by_name:
            raise ManifestError(f"artifact layer {d['name']} missing from manifest")
        compiled.append(CompiledLayer(
            by_name[d["name"]], Slicing(tuple(d["slicing"])),
            np.asarray(d["centers"], dtype=np.int64), int(d["rows"]),
            float(d["measured_error"]), float(d["error_budget"]),
            fallback=bool(d["fallback"]), forced=bool(d["forced_last_layer"]),
            candidates_evaluated=int(d["candidates_evaluated"]),
            center_mode=d.get("center_mode", "center")))
    return compiled, manifest, config


__all__ = ["NetworkManifest", "ManifestError", "load_manifest", "write_manifest",
           "load_artifact", "write_artifact", "artifact_json", "FULLY_CONNECTED",
           "CONVOLUTION"]

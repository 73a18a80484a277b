"""Run configuration: circuit description plus protocol parameters.

A config is a JSON object::

    {
      "widths": [2, 3, 2],
      "device": "arctan",                      # or {"table": "w.csv", "W_min": .., "W_max": .., "beta": ..}
      "activation": "tanh",                    # or {"name": "scaled_sigmoid", "eta": 0.75}
      "mode": "single",                        # or "differential"
      "initial_flux": 0.0,                     # scalar, per-layer matrices, "from_weights", "random"
                                               # or {"state": "circuit_state.json"} from a write run
      "random_flux": [-3, 3],
      "weights": "academic",                   # weight file, inline {"widths", "layers"}, "academic" or "synthetic"
      "input": [-1, 1],
      "protocol": {"tau": 5, "eps": 0.05, "T": 1, "alpha": "auto", "x0": 1, "step": null, "seed": 0},
      "mnist": {"images": "...", "labels": "..."}   # or {"synthetic": 64}
    }

Relative paths are resolved against the config file's directory.
"""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .activation import Activation, by_name
from .circuit import CircuitState, build_circuit, circuit_from_weights
from .device import DeviceModel, arctan_device, load_device_csv
from .ingest import load_weights, synthetic_weights, weights_from_dict
from .oracle import AnnSpec, academic_spec

DEFAULT_PROTOCOL = {"tau": 5.0, "eps": 0.05, "T": 1.0, "alpha": "auto", "x0": 1.0,
                    "step": None, "seed": 0, "limit": None}


@dataclass
class RunConfig:
    data: dict
    base_dir: Path = field(default_factory=Path.cwd)
    source: str = "<inline>"

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        return cls(json.loads(path.read_text()), path.resolve().parent, str(path))

    @property
    def params(self) -> dict:
        p = dict(DEFAULT_PROTOCOL)
        p.update(self.data.get("protocol", {}))
        return p

    def override(self, **kw) -> "RunConfig":
        """Copy with protocol parameters replaced (``None`` values are ignored)."""
        data = copy.deepcopy(self.data)
        proto = data.setdefault("protocol", {})
        for k, v in kw.items():
            if v is not None:
                proto[k] = v
        return RunConfig(data, self.base_dir, self.source)

    def hash(self, verb: str = "") -> str:
        blob = json.dumps({"config": self.data, "verb": verb}, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def resolve(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    @property
    def mode(self) -> str:
        return self.data.get("mode", "single")

    def device(self) -> DeviceModel:
        spec = self.data.get("device", "arctan")
        if spec == "arctan":
            return arctan_device()
        if isinstance(spec, dict) and "table" in spec:
            return load_device_csv(self.resolve(spec["table"]), W_min=spec["W_min"],
                                   W_max=spec["W_max"], beta=spec["beta"])
        if isinstance(spec, dict) and spec.get("name", "arctan") == "arctan":
            return arctan_device(spec.get("center", 2.0), spec.get("amplitude", 1.0),
                                 spec.get("width", 1.0), spec.get("beta"))
        raise ValueError(f"unknown device spec {spec!r}")

    def activation(self) -> Activation:
        spec = self.data.get("activation", "tanh")
        if isinstance(spec, str):
            return by_name(spec)
        return by_name(spec["name"], spec.get("eta"))

    def weights(self, activation: Activation | None = None) -> AnnSpec:
        act = activation or self.activation()
        spec = self.data.get("weights")
        if spec is None:
            raise ValueError("config has no 'weights'")
        if spec == "academic":
            return academic_spec(act)
        if spec == "synthetic":
            return synthetic_weights(self.widths, self.device(), self.mode, int(self.params["seed"]), act)
        if isinstance(spec, dict):
            return weights_from_dict(spec, act, self.source)
        return load_weights(self.resolve(spec), act)

    @property
    def widths(self) -> tuple[int, ...]:
        if "widths" in self.data:
            return tuple(int(n) for n in self.data["widths"])
        w = self.data.get("weights")
        if isinstance(w, dict):
            return tuple(w["widths"])
        if w == "academic":
            return (2, 3, 2)
        if isinstance(w, str) and w != "synthetic":
            return load_weights(self.resolve(w)).widths
        raise ValueError("config needs 'widths'")

    def circuit(self) -> CircuitState:
        dev, act = self.device(), self.activation()
        init = self.data.get("initial_flux", 0.0)
        if isinstance(init, dict) and "state" in init:
            state = json.loads(self.resolve(init["state"]).read_text())
            c = build_circuit(self.widths, dev, act, self.mode, [np.array(p) for p in state["flux"]])
            c.mask = [np.array(m, dtype=np.int8) for m in state["mask"]]
        elif init == "from_weights":
            c = circuit_from_weights(self.weights(act).weights, dev, act, self.mode)
        elif init == "random":
            lo, hi = self.data.get("random_flux", [-3.0, 3.0])
            rng = np.random.default_rng(int(self.params["seed"]))
            c = build_circuit(self.widths, dev, act, self.mode)
            for xb in c.layers:
                xb.phi = rng.uniform(lo, hi, xb.phi.shape)
        else:
            c = build_circuit(self.widths, dev, act, self.mode, init)
        sw = self.data.get("switches")
        if sw not in (None, "closed"):
            for xb, S in zip(c.layers, sw):
                xb.switches = np.asarray(S, dtype=np.int8)
        return c

    def input(self) -> np.ndarray:
        u = self.data.get("input")
        if u is None:
            return np.zeros(self.widths[0])
        return np.asarray(u, dtype=float)

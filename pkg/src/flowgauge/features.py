"""Fixed-width feature vectors from packet sequences.

A flow's first ``n_packets`` packets are embedded as the concatenation
[sizes | ipts | dirs] (the ipt block is dropped when ``use_ipt`` is false).
Sizes are copied unscaled; IPTs are clipped to ``ipt_maxclip`` and then
multiplied by ``ipt_scale``; directions are multiplied by ``dir_scale``.
Positions past the flow's length are zero in every block.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from math import isfinite
from typing import Sequence

import numpy as np

from .errors import UsageError
from .model import CAPTURE_CAP, FlowRecord

# A feature vector is a plain 1-D float64 array.
FeatureVector = np.ndarray


@dataclass(frozen=True)
class ScalingConfig:
    """The baseline's four reweighting parameters plus the IPT on/off switch."""

    n_packets: int
    dir_scale: float
    ipt_scale: float
    ipt_maxclip: float
    use_ipt: bool = True

    def __post_init__(self) -> None:
        if not 1 <= self.n_packets <= CAPTURE_CAP:
            raise UsageError(f"n_packets must be in [1, {CAPTURE_CAP}]")
        for name in ("dir_scale", "ipt_scale", "ipt_maxclip"):
            v = getattr(self, name)
            if not isfinite(v):
                raise UsageError(f"{name} must be finite")
        if self.dir_scale < 0 or self.ipt_scale < 0:
            raise UsageError("scales must be non-negative")
        if self.use_ipt and self.ipt_maxclip <= 0:
            raise UsageError("ipt_maxclip must be positive when IPTs are used")

    @property
    def width(self) -> int:
        return (3 if self.use_ipt else 2) * self.n_packets

    def to_json_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json_dict(cls, obj: dict) -> "ScalingConfig":
        try:
            return cls(
                n_packets=int(obj["n_packets"]),
                dir_scale=float(obj["dir_scale"]),
                ipt_scale=float(obj["ipt_scale"]),
                ipt_maxclip=float(obj["ipt_maxclip"]),
                use_ipt=bool(obj["use_ipt"]),
            )
        except KeyError as exc:
            raise UsageError(f"scaling config missing field {exc}") from exc

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ScalingConfig":
        return cls.from_json_dict(json.loads(text))


def default_config() -> ScalingConfig:
    """The untuned baseline configuration: N=10, directions at 1, IPTs clipped
    at 1000 ms and scaled by 0.1."""
    return ScalingConfig(
        n_packets=10, dir_scale=1.0, ipt_scale=0.1, ipt_maxclip=1000.0, use_ipt=True
    )


def featurize(flow: FlowRecord, cfg: ScalingConfig) -> FeatureVector:
    """Embed one flow as a fixed-width vector under ``cfg``."""
    n = cfg.n_packets
    k = min(flow.seq_len, n)
    out = np.zeros(cfg.width, dtype=np.float64)
    out[:k] = flow.sizes[:k]
    if cfg.use_ipt:
        ipts = np.asarray(flow.ipts[:k], dtype=np.float64)
        out[n : n + k] = np.minimum(ipts, cfg.ipt_maxclip) * cfg.ipt_scale
        out[2 * n : 2 * n + k] = np.asarray(flow.dirs[:k], dtype=np.float64) * cfg.dir_scale
    else:
        out[n : n + k] = np.asarray(flow.dirs[:k], dtype=np.float64) * cfg.dir_scale
    return out


def featurize_flows(flows: Sequence[FlowRecord], cfg: ScalingConfig) -> np.ndarray:
    """Embed many flows as a contiguous (n_flows, width) matrix."""
    out = np.zeros((len(flows), cfg.width), dtype=np.float64)
    for i, flow in enumerate(flows):
        out[i] = featurize(flow, cfg)
    return out


def l1_distance(a: FeatureVector, b: FeatureVector) -> float:
    """Manhattan distance between two equal-width vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise UsageError(f"width mismatch: {a.shape} vs {b.shape}")
    return float(np.abs(a - b).sum())

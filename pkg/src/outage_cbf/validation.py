"""Input-validation helpers shared by the estimators and the command line."""
from __future__ import annotations

import numpy as np

from .model import PSD_TOL, BeamformerSet, ChannelSet
from .utility import UtilitySpec


def channel_set_issues(cs: ChannelSet) -> list:
    """Human-readable list of problems with an instance; empty when it is usable."""
    issues = []
    Q = cs.Q
    if not np.all(np.isfinite(Q)):
        issues.append("Q has non-finite entries")
        return issues
    herm = np.max(np.abs(Q - np.conj(np.swapaxes(Q, -1, -2))), initial=0.0)
    if herm > 1e-12 * max(1.0, np.max(np.abs(Q), initial=0.0)):
        issues.append(f"Q is not Hermitian (max asymmetry {herm:.2e})")
    lam = np.linalg.eigvalsh(Q)
    scale = np.maximum(1.0, np.abs(lam[..., -1]))
    bad = np.argwhere(lam[..., 0] < -PSD_TOL * scale)
    for k, i in bad:
        issues.append(f"Q[{k},{i}] is not PSD (min eigenvalue {lam[k, i, 0]:.2e})")
    for name in ("sigma2", "P"):
        v = getattr(cs, name)
        if np.any(~np.isfinite(v)) or np.any(v <= 0):
            issues.append(f"{name} must be positive and finite")
    if np.any(cs.eps <= 0) or np.any(cs.eps >= 1):
        issues.append("eps must lie in (0, 1)")
    if not np.isfinite(cs.delta) or cs.delta <= 0:
        issues.append("delta must be positive")
    for i in range(cs.K):
        if lam[i, i, -1] <= 0:
            issues.append(f"direct link Q[{i},{i}] is zero")
    return issues


def check_channel_set(cs) -> ChannelSet:
    """Coerce ``cs`` (a ChannelSet, dict, or JSON path) and raise ValueError on any issue."""
    if isinstance(cs, dict):
        cs = ChannelSet.from_dict(cs)
    elif isinstance(cs, str) or hasattr(cs, "__fspath__"):
        cs = ChannelSet.load(cs)
    if not isinstance(cs, ChannelSet):
        raise TypeError(f"expected a ChannelSet, got {type(cs).__name__}")
    issues = channel_set_issues(cs)
    if issues:
        raise ValueError("invalid channel set: " + "; ".join(issues))
    return cs


def check_spec(spec, K: int, beta: float = 0.0) -> UtilitySpec:
    """Default to equal weights; check the weight count matches K."""
    if spec is None:
        return UtilitySpec.uniform(K, beta)
    if not isinstance(spec, UtilitySpec):
        raise TypeError("spec must be a UtilitySpec")
    if len(spec.alpha) != K:
        raise ValueError(f"spec has {len(spec.alpha)} weights but K = {K}")
    return spec


def check_beamformers(bf: BeamformerSet, cs: ChannelSet, vector: bool = False) -> BeamformerSet:
    if not isinstance(bf, BeamformerSet):
        raise TypeError("expected a BeamformerSet")
    if bf.K != cs.K:
        raise ValueError(f"beamformer count {bf.K} does not match K = {cs.K}")
    if vector and not bf.is_vector:
        raise ValueError("vector beamformers are required")
    shape = bf.vectors.shape[1:] if bf.is_vector else bf.matrices.shape[1:2]
    if shape[0] != cs.Nt:
        raise ValueError(f"beamformer dimension {shape[0]} does not match Nt = {cs.Nt}")
    return bf


def check_power(bf: BeamformerSet, cs: ChannelSet, tol: float = 1e-9) -> None:
    p = bf.power()
    if np.any(p > cs.P + tol):
        i = int(np.argmax(p - cs.P))
        raise ValueError(f"transmitter {i} exceeds its power budget ({p[i]:.6g} > {cs.P[i]:.6g})")

"""Full-batch Adam training of S-EPGP parameters with per-group learning
rates and epoch-indexed schedules."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .linalg import NotPositiveDefinite
from .sepgp import SpectralParams, nlml_and_grad

log = logging.getLogger(__name__)

#: Parameter groups, each with its own base learning rate.
GROUPS = ("spectral", "sigma", "noise", "scale")


class NonFiniteGradient(FloatingPointError):
    pass


@dataclass(frozen=True)
class Schedule:
    """Learning-rate multiplier per epoch: ``constant``,
    ``step`` (``gamma ** (epoch // period)``) or ``cosine_warm_restart``
    (``(1 + cos(pi * (epoch mod T0) / T0)) / 2``)."""

    kind: str = "constant"
    period: int = 1000
    gamma: float = 0.1
    T0: int = 500

    def __post_init__(self):
        if self.kind not in ("constant", "step", "cosine_warm_restart"):
            raise ValueError(f"unknown schedule {self.kind!r}")

    def to_dict(self):
        return {"kind": self.kind, "period": self.period, "gamma": self.gamma, "T0": self.T0}


def schedule_multiplier(s: Schedule, epoch: int) -> float:
    if epoch < 0:
        raise ValueError("epoch must be nonnegative")
    if s.kind == "constant":
        return 1.0
    if s.kind == "step":
        return float(s.gamma ** (epoch // s.period))
    return 0.5 * (1.0 + math.cos(math.pi * (epoch % s.T0) / s.T0))


@dataclass
class OptimState:
    lrs: dict
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(state: OptimState, params: dict, grads: dict, epoch_multiplier=1.0):
    """One bias-corrected Adam update of every group in ``params``.

    Returns new parameter arrays; ``state`` is updated in place.
    """
    if epoch_multiplier <= 0:
        raise ValueError("learning-rate multiplier must be positive")
    for k, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"non-finite gradient in group {k!r} at step {state.step + 1}")
    state.step += 1
    t = state.step
    out = {}
    for k, p in params.items():
        g = np.asarray(grads[k], dtype=float)
        m = state.m.get(k, np.zeros_like(g))
        v = state.v.get(k, np.zeros_like(g))
        m = state.beta1 * m + (1 - state.beta1) * g
        v = state.beta2 * v + (1 - state.beta2) * g * g
        state.m[k], state.v[k] = m, v
        m_hat = m / (1 - state.beta1**t)
        v_hat = v / (1 - state.beta2**t)
        lr = state.lrs[k] * epoch_multiplier
        out[k] = p - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return out


@dataclass
class TrainConfig:
    epochs: int = 1000
    lrs: dict = field(default_factory=lambda: {g: 1e-2 for g in GROUPS})
    schedule: Schedule = field(default_factory=Schedule)
    seed: int = 0
    log_every: int = 0


@dataclass
class TraceRow:
    epoch: int
    nlml: float
    lr_multiplier: float
    wall_ms: float


def _pack(theta: SpectralParams):
    p = {}
    mask = {}
    if not np.all(theta.frozen):
        p["spectral"] = np.stack([theta.Zre, theta.Zim])
        m = np.ones_like(p["spectral"], dtype=bool)
        m[:, theta.frozen] = False
        m[0, theta.imaginary] = False
        mask["spectral"] = m
        p["sigma"] = theta.log_sigma.copy()
        mask["sigma"] = ~theta.frozen
    if not theta.noise_frozen:
        p["noise"] = np.array(theta.log_noise)
    if theta.log_scale is not None:
        p["scale"] = np.array(theta.log_scale)
    return p, mask


def _unpack(theta: SpectralParams, p):
    out = theta.copy()
    if "spectral" in p:
        out.Zre, out.Zim = p["spectral"][0].copy(), p["spectral"][1].copy()
        out.log_sigma = p["sigma"].copy()
    if "noise" in p:
        out.log_noise = float(p["noise"])
    if "scale" in p:
        out.log_scale = float(p["scale"])
    return out


def _grads(g, p):
    out = {}
    if "spectral" in p:
        out["spectral"] = np.stack([g.Zre, g.Zim])
        out["sigma"] = g.log_sigma
    if "noise" in p:
        out["noise"] = np.array(g.log_noise)
    if "scale" in p:
        out["scale"] = np.array(g.log_scale)
    return out


def train(spec, theta0: SpectralParams, data, config: TrainConfig):
    """Run ``config.epochs`` full-batch Adam steps on the NLML.

    Returns the trained parameters and a list of :class:`TraceRow`, one per
    epoch, recording the NLML evaluated before that epoch's update. Frozen
    and pinned coordinates are restored exactly after every step.
    """
    theta = theta0.copy()
    params, mask = _pack(theta)
    state = OptimState({k: config.lrs[k] for k in params})
    trace = []
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        mult = schedule_multiplier(config.schedule, epoch)
        try:
            value, g = nlml_and_grad(spec, theta, data)
        except NotPositiveDefinite as exc:
            raise NotPositiveDefinite(f"epoch {epoch}: {exc}") from exc
        if not math.isfinite(value):
            raise NonFiniteGradient(f"non-finite NLML at epoch {epoch}")
        grads = _grads(g, params)
        try:
            new = adam_step(state, params, grads, mult)
        except NonFiniteGradient as exc:
            raise NonFiniteGradient(f"epoch {epoch}: {exc}") from exc
        for k, m in mask.items():
            new[k] = np.where(m, new[k], params[k])
        params = new
        theta = _unpack(theta, params)
        trace.append(TraceRow(epoch, value, mult, 1e3 * (time.perf_counter() - t0)))
        if config.log_every and epoch % config.log_every == 0:
            log.info("epoch %d  nlml %.6g  lr x %.3g", epoch, value, mult)
    return theta, trace

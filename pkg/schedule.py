"""Residual-shift (eta), noise (kappa) and dissipation-time (tau) schedules."""

import numpy as np
from loguru import logger

from models import DiffusionSchedule

DEFAULT_STEPS = 15
DEFAULT_SIGMA2_B = 2.0
VARIANCE_MODES = ("consistent", "alpha")


def build_schedule(T=DEFAULT_STEPS, kappa=1.0, sigma2_B=DEFAULT_SIGMA2_B, eta1=0.001, etaT=0.999,
                   patch_size=8, variance_mode="consistent"):
    """Build a schedule indexed 0..T with eta_0 = 0 and tau_0 = 0.

    sqrt(eta) is geometric between sqrt(eta1) and sqrt(etaT); tau grows
    linearly to sigma2_B / 2 (Gaussian blur variance = 2 tau).
    """

    if T < 2:
        raise ValueError(f"need at least 2 steps, got T={T}")
    if not 0 < eta1 < etaT <= 1:
        raise ValueError(f"need 0 < eta1 < etaT <= 1, got eta1={eta1} etaT={etaT}")
    if sigma2_B < 0:
        raise ValueError(f"blur intensity must be non-negative, got {sigma2_B}")
    if kappa < 0:
        raise ValueError(f"kappa must be non-negative, got {kappa}")
    if patch_size < 1:
        raise ValueError(f"patch size must be positive, got {patch_size}")
    if variance_mode not in VARIANCE_MODES:
        raise ValueError(f"variance_mode must be one of {VARIANCE_MODES}, got {variance_mode!r}")

    steps = np.arange(1, T + 1)
    base = np.sqrt(etaT / eta1)
    sqrt_eta = np.sqrt(eta1) * base ** ((steps - 1) / (T - 1))

    eta = np.zeros(T + 1)
    eta[1:] = sqrt_eta ** 2
    eta[1], eta[T] = eta1, etaT

    alpha = np.zeros(T + 1)
    alpha[1:] = np.diff(eta)

    tau = np.arange(T + 1) / T * sigma2_B / 2
    tau[T] = sigma2_B / 2

    for arr in (eta, alpha, tau):
        arr.setflags(write=False)

    sched = DiffusionSchedule(steps=T, eta=eta, alpha=alpha, kappa=float(kappa), tau=tau,
                              sigma2_b=float(sigma2_B), patch_size=int(patch_size),
                              variance_mode=variance_mode)
    logger.debug("built {}", sched)
    return sched


def validate(s):
    """List every violated schedule invariant, naming the offending index."""

    found = []
    T = s.steps
    for name in ("eta", "alpha", "tau"):
        if len(getattr(s, name)) != T + 1:
            found.append(f"{name} has length {len(getattr(s, name))}, expected {T + 1}")
    if found:
        return found

    if not np.all(np.isfinite(s.eta)) or not np.all(np.isfinite(s.tau)):
        found.append("eta and tau must be finite")
    if s.eta[0] != 0:
        found.append(f"eta[0] must be 0, got {s.eta[0]}")
    for t in range(2, T + 1):
        if not s.eta[t] > s.eta[t - 1]:
            found.append(f"eta not strictly increasing at t={t}: {s.eta[t - 1]} -> {s.eta[t]}")
    if s.eta[1] > 0.01:
        found.append(f"eta[1] = {s.eta[1]} exceeds 0.01")
    if s.eta[T] < 0.99:
        found.append(f"terminal eta[{T}] = {s.eta[T]} is below 0.99")
    for t in range(1, T + 1):
        if not s.alpha[t] > 0:
            found.append(f"alpha[{t}] = {s.alpha[t]} is not positive")
    if s.tau[0] != 0:
        found.append(f"tau[0] must be 0, got {s.tau[0]}")
    for t in range(1, T + 1):
        if s.tau[t] < s.tau[t - 1]:
            found.append(f"tau decreases at t={t}: {s.tau[t - 1]} -> {s.tau[t]}")
    if s.kappa < 0:
        found.append(f"kappa = {s.kappa} is negative")
    if s.variance_mode not in VARIANCE_MODES:
        found.append(f"unknown variance_mode {s.variance_mode!r}")
    return found

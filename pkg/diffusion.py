"""Blurring-ResShift forward process, transition kernel and reverse sampler.

All states live in the patch-DCT domain (see spectral.dct2_patches) with the
padded frame layout, so the blur operator is an elementwise factor.
Per coefficient, with D_t = e^{Lambda tau_t}:

    q(u_t | u_0, u_l)     = N((1 - eta_t) D_t u_0 + eta_t u_l,  kappa^2 eta_t)
    q(u_t | u_{t-1}, u_l) = N(lam_t (u_{t-1} - eta_{t-1} u_l) + eta_t u_l,  kappa^2 beta_t)
    lam_t = (1 - eta_t) / (1 - eta_{t-1}) * e^{Lambda (tau_t - tau_{t-1})}

beta_t is alpha_t in "alpha" mode and eta_t - lam_t^2 eta_{t-1} in
"consistent" mode; only the latter composes into the marginal above.
"""

from dataclasses import replace

import numpy as np
from loguru import logger
from tqdm import tqdm

from errors import DimensionError
from models import PatchSpectrum, PosteriorParams, SpectralState
from spectral import dct2_patches, global_blur, idct2_patches, lambda_grid

PROCESSES = ("blurring_resshift", "resshift", "patch_blur", "global_blur")
IHDM_SIGMA_MAX = 20.0


##############################################################################
# Schedule helpers


def _check_step(t, sched, low=1):
    if not low <= t <= sched.steps:
        raise ValueError(f"step t={t} outside {low}..{sched.steps}")


def _lambda(sched, shape):
    return lambda_grid(sched.patch_size, shape[-2], shape[-1])


def decay(sched, t, shape):
    """D_t = e^{Lambda tau_t} over a coefficient grid of the given shape."""

    return np.exp(_lambda(sched, shape) * sched.tau[t])


def shift_factor(sched, t, shape):
    """lam_t, per coefficient."""

    ratio = (1.0 - sched.eta[t]) / (1.0 - sched.eta[t - 1])
    return ratio * np.exp(_lambda(sched, shape) * (sched.tau[t] - sched.tau[t - 1]))


def step_variance(sched, t, lam):
    """beta_t such that the transition noise is kappa^2 beta_t."""

    if sched.variance_mode == "alpha":
        return np.full_like(lam, sched.alpha[t])
    return sched.eta[t] - lam ** 2 * sched.eta[t - 1]


##############################################################################
# Forward process


def marginal_moments(u0, ul, t, sched):
    """Mean and variance of q(u_t | u_0, u_l)."""

    _check_step(t, sched, low=0)
    eta = sched.eta[t]
    mean = (1.0 - eta) * decay(sched, t, u0.u.shape) * u0.u + eta * ul.u
    var = np.full(mean.shape, sched.kappa ** 2 * eta)
    return mean, var


def transition_moments(mean_prev, var_prev, ul, t, sched):
    """Push the moments of u_{t-1} through one transition."""

    _check_step(t, sched)
    lam = shift_factor(sched, t, ul.u.shape)
    mean = lam * (mean_prev - sched.eta[t - 1] * ul.u) + sched.eta[t] * ul.u
    var = lam ** 2 * var_prev + sched.kappa ** 2 * step_variance(sched, t, lam)
    return mean, var


def forward_marginal_sample(u0, ul, t, sched, rng, frames=None):
    """Draw u_t ~ q(u_t | u_0, u_l) in one shot."""

    _check_step(t, sched)
    if u0.u.shape != ul.u.shape:
        raise DimensionError(f"u0 {u0.u.shape} and ul {ul.u.shape} differ")

    mean, _ = marginal_moments(u0, ul, t, sched)
    eps = rng.normal(mean.shape, "forward", t, frames=frames)
    return SpectralState(u=mean + sched.kappa * np.sqrt(sched.eta[t]) * eps, t=t)


def transition_sample(u_prev, ul, t, sched, rng, frames=None):
    """Draw u_t ~ q(u_t | u_{t-1}, u_l)."""

    _check_step(t, sched)
    if u_prev.t != t - 1:
        raise ValueError(f"transition to t={t} needs a state at t={t - 1}, got t={u_prev.t}")

    lam = shift_factor(sched, t, ul.u.shape)
    mean = lam * (u_prev.u - sched.eta[t - 1] * ul.u) + sched.eta[t] * ul.u
    eps = rng.normal(mean.shape, "transition", t, frames=frames)
    return SpectralState(u=mean + sched.kappa * np.sqrt(step_variance(sched, t, lam)) * eps, t=t)


##############################################################################
# Reverse process


def gaussian_posterior(u_t, u0_hat, ul, eta_prev, eta_t, lam, decay_prev, kappa, beta):
    """Closed-form q(u_{t-1} | u_t, u_0, u_l) for elementwise Gaussians.

    Evaluated in gain form: prior mean m of u_{t-1}, corrected by the
    innovation of u_t. Expanded, the mean is
        [lam eta' u_t + beta (1 - eta') D' u0 + (lam^2 eta'^2 - lam eta' eta + beta eta') u_l]
        / (lam^2 eta' + beta)
    and the variance kappa^2 beta eta' / (lam^2 eta' + beta).
    """

    denom = lam ** 2 * eta_prev + beta
    prior = (1.0 - eta_prev) * decay_prev * u0_hat + eta_prev * ul
    gain = lam * eta_prev / denom
    mu = prior + gain * (u_t - lam * (prior - eta_prev * ul) - eta_t * ul)
    sigma2 = kappa ** 2 * beta * eta_prev / denom
    return mu, sigma2


def posterior_params(u_t, u0_hat, ul, t, sched):
    """Mean and per-coefficient variance of q(u_{t-1} | u_t, u0_hat, u_l)."""

    _check_step(t, sched)
    shape = u_t.u.shape
    if u0_hat.u.shape != shape or ul.u.shape != shape:
        raise DimensionError(f"state shapes differ: {shape}, {u0_hat.u.shape}, {ul.u.shape}")

    lam = shift_factor(sched, t, shape)
    mu, sigma2 = gaussian_posterior(
        u_t.u, u0_hat.u, ul.u,
        eta_prev=sched.eta[t - 1],
        eta_t=sched.eta[t],
        lam=lam,
        decay_prev=decay(sched, t - 1, shape),
        kappa=sched.kappa,
        beta=step_variance(sched, t, lam),
    )
    return PosteriorParams(mu=mu, sigma2=np.broadcast_to(sigma2, shape).copy())


def reverse_sample(ul, denoiser, sched, rng, conditioning=None, frames=None, progress=False):
    """Run the reverse chain from u_T ~ N(u_l, kappa^2) down to t = 0.

    `denoiser(u_t, t, conditioning)` returns an estimate of u_0 as an array
    with the shape of u_t.
    """

    u = ul.u + sched.kappa * rng.normal(ul.u.shape, "prior", frames=frames)
    state = SpectralState(u=u, t=sched.steps)

    for t in tqdm(range(sched.steps, 0, -1), desc="reverse", disable=not progress, leave=False):
        u0_hat = np.asarray(denoiser(state.u, t, conditioning), dtype=float)
        if u0_hat.shape != state.u.shape:
            raise DimensionError(f"denoiser returned {u0_hat.shape} for a state of shape {state.u.shape}")

        post = posterior_params(state, SpectralState(u0_hat, 0), ul, t, sched)
        eps = rng.normal(state.u.shape, "reverse", t, frames=frames)
        state = SpectralState(u=post.mu + np.sqrt(post.sigma2) * eps, t=t - 1)

    logger.debug("reverse chain finished after {} steps", sched.steps)
    return state


def oracle_denoiser(u0_true):
    """Denoiser that ignores its input and returns the true u_0."""

    target = np.asarray(u0_true.u, dtype=float)

    def denoise(u_t, t, conditioning=None):
        return target

    return denoise


##############################################################################
# Degradation endpoints (PSD analysis)


def degrade(hr, lr_up, sched, process, rng, ihdm_sigma_max=IHDM_SIGMA_MAX, frames=None):
    """Pixel-space endpoint of one degradation process.

    hr and lr_up are pixel frames of the same size (lr_up is the LR frame
    resampled to the HR grid).
    """

    if process not in PROCESSES:
        raise ValueError(f"unknown process {process!r}; expected one of {PROCESSES}")

    if process == "global_blur":
        return global_blur(hr, ihdm_sigma_max ** 2 / 2)

    p = sched.patch_size
    u0 = dct2_patches(hr, p)
    ul = dct2_patches(lr_up, p)
    T = sched.steps

    if process == "patch_blur":
        coeffs = decay(sched, T, u0.coefficients.shape) * u0.coefficients
    else:
        if process == "resshift":
            sched = _without_blur(sched)
        state = forward_marginal_sample(SpectralState(u0.coefficients, 0), SpectralState(ul.coefficients, 0),
                                        T, sched, rng, frames=frames)
        coeffs = state.u
    return idct2_patches(PatchSpectrum(coefficients=coeffs, patch_size=p, shape=u0.shape))


def _without_blur(sched):
    tau = np.zeros_like(sched.tau)
    tau.setflags(write=False)
    return replace(sched, tau=tau, sigma2_b=0.0)

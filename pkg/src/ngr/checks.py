"""Numerical self-checks: small oracles that a healthy build must pass.

Each check returns a :class:`CheckResult`; :func:`run_all` runs them in a fixed
order. The same oracles back the ``ngr selfcheck`` command.
"""

import time
from dataclasses import dataclass

import numpy as np

from ngr import net, solver
from ngr.net import NetConfig
from ngr.solver import SolverConfig
from ngr.tensor import AXES, grad, grad_adjoint, grad_spectrum, make_rng


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    value: float
    limit: float
    seconds: float

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: {self.value:.3e} (limit {self.limit:.0e}, {self.seconds:.2f}s)"


def _timed(name, limit, fn):
    start = time.perf_counter()
    value = float(fn())
    return CheckResult(name, bool(value <= limit), value, limit, time.perf_counter() - start)


def adjoint_error(pairs=100, shape=(8, 8, 3), seed=0):
    """Worst |<grad x, g> - <x, grad^T g>| / (|x| |g|) over random pairs and axes."""
    rng = make_rng(seed)
    worst = 0.0
    for _ in range(pairs):
        x = rng.standard_normal(shape)
        g = rng.standard_normal(shape)
        scale = np.linalg.norm(x) * np.linalg.norm(g)
        for a in AXES:
            err = abs(np.sum(grad(x, a) * g) - np.sum(x * grad_adjoint(g, a)))
            worst = max(worst, err / scale)
    return worst


def spectrum_error(sizes=(2, 3, 4, 7, 8, 16)):
    """Worst deviation of the spectrum from both the closed form and an FFT of the kernel."""
    worst = 0.0
    for n in sizes:
        spec = grad_spectrum(n)
        closed = 4.0 * np.sin(np.pi * np.arange(n) / n) ** 2
        kernel = np.zeros(n)
        kernel[0] -= 1.0
        kernel[1 % n] += 1.0
        fft = np.abs(np.fft.fft(kernel)) ** 2
        worst = max(worst, np.max(np.abs(spec - closed)), np.max(np.abs(spec - fft)))
    return worst


def dense_difference_ops(shape):
    """Periodic forward-difference matrices acting on a C-order ravel of ``shape``."""
    eyes = [np.eye(n) for n in shape]
    ops = []
    for i, n in enumerate(shape):
        mats = list(eyes)
        mats[i] = np.roll(np.eye(n), 1, axis=1) - np.eye(n)
        ops.append(np.kron(np.kron(mats[0], mats[1]), mats[2]))
    return ops


def solve_error(instances=20, shape=(6, 6, 2), seed=0):
    """Worst relative error of the FFT X-update against dense normal equations."""
    rng = make_rng(seed)
    ops = dense_difference_ops(shape)
    small = NetConfig(blocks=1, width=2)
    worst = 0.0
    for _ in range(instances):
        lambdas = rng.uniform(0.0, 4.0, size=3)
        mu = float(rng.uniform(0.1, 100.0))
        cfg = SolverConfig(lambda_h=lambdas[0], lambda_v=lambdas[1], lambda_t=lambdas[2], mu=mu, net=small)
        y = rng.random(shape)
        mask = rng.random(shape) < 0.5
        mask.flat[0] = True
        state = solver.init_state(y, mask, cfg)
        state.k = np.where(mask, 0.0, rng.standard_normal(shape))
        state.lam = rng.standard_normal(shape)
        triple = tuple(rng.standard_normal(shape) for _ in range(3))
        got = solver.update_x(solver.compute_rhs(state, y, mask, cfg, triple), cfg)

        py = np.where(mask, y, 0.0).ravel()
        a = mu * np.eye(py.size) + sum(l * d.T @ d for l, d in zip(lambdas, ops))
        b = sum(l * d.T @ f.ravel() for l, d, f in zip(lambdas, ops, triple))
        b = b + mu * (py - state.k.ravel()) + state.lam.ravel()
        expected = np.linalg.solve(a, b).reshape(shape)
        worst = max(worst, np.linalg.norm(got - expected) / np.linalg.norm(expected))
    return worst


def backprop_error(cfg=None, shape=(6, 6), seed=0, h=1e-5, floor=1e-3):
    """Worst relative error of reverse-mode gradients against central differences.

    The relative error is ``|a - fd| / max(|a|, |fd|, floor)``. The floor
    matters for biases in front of a per-channel normalization: their true
    gradient is exactly zero and the difference quotient is pure roundoff.
    """
    if cfg is None:
        cfg = NetConfig(blocks=2, width=4, precision="float64")
    channels = cfg.output_channels or cfg.input_channels or 2
    cfg = cfg.resolved(channels)
    rng = make_rng(seed)
    x = net.init_input(rng, (*shape, cfg.input_channels), amplitude=1.0)
    params = net.init_params(rng, cfg)
    params = {k: v + 0.1 * rng.standard_normal(v.shape) for k, v in params.items()}
    target = tuple(rng.standard_normal((*shape, cfg.output_channels)) for _ in range(3))
    weights = (1.0, 0.5, 2.0)
    _, grads = net.loss_and_grad(params, cfg, x, target, weights)
    worst = 0.0
    for name, p in params.items():
        for idx in np.ndindex(p.shape):
            saved = p[idx]
            p[idx] = saved + h
            lp = net.loss_from_prediction(net.forward(params, cfg, x), target, weights)
            p[idx] = saved - h
            lm = net.loss_from_prediction(net.forward(params, cfg, x), target, weights)
            p[idx] = saved
            fd = (lp - lm) / (2 * h)
            a = grads[name][idx]
            worst = max(worst, abs(a - fd) / max(abs(a), abs(fd), floor))
    return worst


def run_all():
    return [
        _timed("adjoint identity", 1e-10, adjoint_error),
        _timed("gradient spectrum", 1e-12, spectrum_error),
        _timed("FFT solve vs dense", 1e-8, solve_error),
        _timed("backprop vs finite differences", 1e-4, backprop_error),
        _timed(
            "hourglass backprop vs finite differences",
            1e-4,
            lambda: backprop_error(
                NetConfig(blocks=5, width=3, architecture="hourglass", precision="float64"),
                shape=(7, 9),
            ),
        ),
    ]

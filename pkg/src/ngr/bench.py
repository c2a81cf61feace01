"""Desk-scale benchmark suites on the synthetic images.

A suite expands into independent :class:`Job` values. Every job derives its
mask seed from ``(seed, image index, sampling-rate index)`` only, so results do
not depend on how many jobs run at once or in which order they finish.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from ngr import baselines, degrade, metrics, phantoms, solver
from ngr.baselines import TvConfig
from ngr.solver import SolverConfig
from ngr.tensor import make_rng

SR_LEVELS = (0.5, 0.3, 0.1)
MU_LEVELS = (4.0, 16.0, 64.0, 256.0)
LAMBDA_T_LEVELS = (0.0, 0.25, 0.5, 1.0, 2.0)
METHODS = ("ngr", "tv3d", "zero_fill")
SUITES = ("sr-sweep", "mu-sweep", "lambda-sweep", "smoke")
FIELDS = ("suite", "image", "sr", "mu", "lambda_t", "method", "psnr", "ssim", "sam", "ergas")


@dataclass(frozen=True)
class Job:
    suite: str
    image: str
    image_index: int
    shape: tuple
    sr: float
    sr_index: int
    method: str
    solver_cfg: SolverConfig
    tv_cfg: TvConfig
    seed: int


def _jobs_for(suite, shape, cfg, tv_cfg, seed, images):
    jobs = []
    for i, name in enumerate(images):
        def job(method, sr, sr_index, scfg=cfg, tcfg=tv_cfg):
            return Job(suite, name, i, shape, sr, sr_index, method, scfg, tcfg, seed)

        if suite in ("sr-sweep", "smoke"):
            for j, sr in enumerate(SR_LEVELS):
                jobs.extend(job(m, sr, j) for m in METHODS)
        elif suite == "mu-sweep":
            for mu in MU_LEVELS:
                jobs.append(job("ngr", 0.3, 1, scfg=replace(cfg, mu=mu)))
        elif suite == "lambda-sweep":
            for lt in LAMBDA_T_LEVELS:
                jobs.append(job("ngr", 0.3, 1, scfg=replace(cfg, lambda_t=lt)))
                jobs.append(job("tv3d", 0.3, 1, tcfg=replace(tv_cfg, lambda_t=lt)))
        else:
            raise ValueError(f"unknown suite {suite!r}; choose from {', '.join(SUITES)}")
    return jobs


def expand(suite, cfg=None, tv_cfg=None, seed=0, shape=None):
    """List the jobs of a suite. ``smoke`` is a short, small-image sr-sweep."""
    cfg = cfg or SolverConfig()
    tv_cfg = tv_cfg or TvConfig()
    if suite == "smoke":
        shape = shape or (24, 24, 3)
        cfg = replace(cfg, outer_iters=min(cfg.outer_iters, 30))
        tv_cfg = replace(tv_cfg, iters=min(tv_cfg.iters, 30))
        images = ["smooth0"]
    else:
        shape = shape or (64, 64, 3)
        images = list(phantoms.SUITE)
    return _jobs_for(suite, tuple(shape), cfg, tv_cfg, seed, images)


def observation(job):
    gt = phantoms.SUITE[job.image](job.shape)
    rng = make_rng((job.seed, job.image_index, job.sr_index))
    mask = degrade.random_mask(rng, gt.shape, job.sr)
    return gt, mask


def run_job(job):
    gt, mask = observation(job)
    y = np.where(mask, gt, 0.0)
    if job.method == "ngr":
        x, _ = solver.run_inpainting(y, mask, job.solver_cfg)
        mu, lambda_t = job.solver_cfg.mu, job.solver_cfg.lambda_t
    elif job.method == "tv3d":
        x = baselines.tv3d_inpaint(y, mask, job.tv_cfg)
        mu, lambda_t = job.tv_cfg.mu, job.tv_cfg.lambda_t
    else:
        x = baselines.zero_fill(y, mask)
        mu, lambda_t = "", ""
    rep = metrics.evaluate(x, gt)
    return {
        "suite": job.suite,
        "image": job.image,
        "sr": job.sr,
        "mu": mu,
        "lambda_t": lambda_t,
        "method": job.method,
        "psnr": f"{rep.psnr:.4f}",
        "ssim": f"{rep.ssim:.4f}",
        "sam": "" if rep.sam is None else f"{rep.sam:.4f}",
        "ergas": "" if rep.ergas is None else f"{rep.ergas:.4f}",
    }


def run(jobs, workers=1):
    """Run jobs, at most ``workers`` at a time; rows come back in job order."""
    if workers <= 1 or len(jobs) <= 1:
        return [run_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_job, jobs))

"""``lillab`` command-line entry point.

Exit codes: 0 when the run passes, 2 when it ran correctly but the checked
hypothesis failed, 1 on usage or validation errors.
"""

import argparse
import datetime
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import config as C
from .corrector import OuCorrector, corrector_ctmc, poisson_residual, sigma_pairing
from .errors import DegenerateVarianceError, LilLabError
from .functionals import heyde_scott_diagnostics, martingale_property_test, simulate_martingale, simulate_paths
from .lil import clt_proxy, lil_envelope, run_discretization, sigma_triple
from .models import CtmcModel, invariant_measure
from .report import TOOL_VERSION, dumps
from .space import LyapunovConfig
from .transport import certify_contraction, certify_ergodicity, certify_moments

EXIT_PASS, EXIT_ERROR, EXIT_FAIL = 0, 1, 2


class Context:
    def __init__(self, cfg: dict, threads: int):
        self.cfg = cfg
        self.p = cfg["params"]
        self.seed = cfg["seed"]
        self.threads = threads
        self.model = C.build_model(cfg)
        self.g = C.build_observable(cfg, self.model)
        self.mu = C.build_initial(cfg, self.model)
        self.ctmc = isinstance(self.model, CtmcModel)

    def corrector(self):
        if self.ctmc:
            return corrector_ctmc(self.model, self.g)
        return OuCorrector(self.model, self.g)

    def sigma_exact(self, chi=None):
        chi = self.corrector() if chi is None else chi
        return sigma_pairing(self.g, chi, invariant_measure(self.model))

    def mesh(self, ctmc_default=1.0, ou_default=1.0 / 16.0):
        m = self.p.get("mesh")
        return m if m is not None else (ctmc_default if self.ctmc else ou_default)


# ---------------------------------------------------------------- commands


def cmd_certify_mixing(ctx):
    p = ctx.p
    if ctx.ctmc:
        states = np.arange(ctx.model.n_states)
        xs = p["x_grid"] or states
        ys = p["y_grid"] or states
        ts = p["t_grid"] or np.linspace(0.1, 3.0, 10).tolist()
    else:
        xs = p["x_grid"] or np.linspace(-3.0, 3.0, 10).tolist()
        ys = p["y_grid"] or np.linspace(-2.7, 3.3, 10).tolist()
        ts = p["t_grid"] or np.linspace(0.0, 4.5, 10).tolist()
    cert = certify_contraction(ctx.model, xs, ys, ts, tol=p["tol"], seed=ctx.seed)
    return cert, cert.passed


def cmd_certify_moments(ctx):
    p = ctx.p
    anchor = int(p["anchor"]) if ctx.ctmc else float(p["anchor"])
    cfg = LyapunovConfig(anchor, float(p["zeta"]), ctx.model.metric)
    ts = p["t_grid"] or np.linspace(0.0, 5.0, 11).tolist()
    rep = certify_moments(ctx.model, ctx.mu, cfg, ts, burn_in=p["burn_in"], seed=ctx.seed)
    return rep, rep.non_increasing_after_burn_in and math.isfinite(rep.max_value)


def cmd_ergodicity(ctx):
    p = ctx.p
    ts = p["t_grid"] or (np.linspace(0.25, 6.0, 24) if ctx.ctmc else np.linspace(0.25, 4.0, 16)).tolist()
    rep = certify_ergodicity(ctx.model, ctx.mu, ts, samples_per_t=p["samples_per_t"], seed=ctx.seed)
    ok = rep.bound_holds and abs(rep.fitted_slope + rep.gamma) <= p["slope_rtol"] * rep.gamma
    return rep, ok


def cmd_corrector(ctx):
    chi = ctx.corrector()
    sigma = ctx.sigma_exact(chi)
    if ctx.ctmc:
        res = poisson_residual(ctx.model, ctx.g, chi)
        out = {"chi": chi, "residual": res, "sigma_pair": sigma}
        return out, res < 1e-12
    out = dict(chi.to_table(), sigma_pair=sigma, error_bound=chi.error_bound)
    return out, chi.error_bound <= ctx.p["max_error"]


def cmd_sigma(ctx):
    p = ctx.p
    chi = ctx.corrector()
    horizon = p["horizon"] or (200.0 if ctx.ctmc else 100.0)
    rep = sigma_triple(ctx.model, ctx.g, chi, ctx.mu, n_paths=p["n_paths"], horizon=horizon, seed=ctx.seed,
                       tolerance_se=p["tolerance_se"], threads=ctx.threads, chunk=p["chunk"])
    return rep, rep.verdict == "pass"


def _feature_maps(ctx, chi):
    if ctx.ctmc:
        g = ctx.g
        return {
            "one": lambda s: np.ones(np.shape(s)),
            "indicator_0": lambda s: (np.asarray(s) == 0).astype(float),
            "g": lambda s: g(s),
            "chi": lambda s: np.asarray(chi)[s],
        }
    return {
        "one": lambda x: np.ones(np.shape(x)),
        "x": lambda x: np.asarray(x, dtype=float),
        "g": lambda x: ctx.g(x),
        "chi": lambda x: chi(x),
    }


def _trace(ctx, chi, mesh_default_ctmc=1.0, ou_default=1.0 / 16.0):
    p = ctx.p
    return simulate_martingale(ctx.model, ctx.g, chi, ctx.mu, p["horizon"], ctx.mesh(mesh_default_ctmc, ou_default),
                               ctx.seed, p["n_paths"], threads=ctx.threads, chunk_size=p["chunk"])


def cmd_martingale_check(ctx):
    chi = ctx.corrector()
    maps = _feature_maps(ctx, chi)
    f = ctx.p["corrupt_factor"]
    if f is not None:
        chi = np.asarray(chi) * f if ctx.ctmc else (lambda x, _c=chi: f * _c(x))
    rep = martingale_property_test(_trace(ctx, chi), maps)
    return rep, rep.passed


def cmd_heyde_scott(ctx):
    chi = ctx.corrector()
    ref = ctx.p["sigma_ref"]
    ref = ctx.sigma_exact(chi) if ref is None else ref
    rep = heyde_scott_diagnostics(_trace(ctx, chi), ref)
    return rep, all(v == "pass" for v in rep.verdicts.values())


def cmd_lil(ctx):
    p = ctx.p
    chi = ctx.corrector()
    sigma = p["sigma"] if p["sigma"] is not None else ctx.sigma_exact(chi)
    rep = lil_envelope(ctx.model, ctx.g, sigma, chi, ctx.mu, n_paths=p["n_paths"], horizon=p["horizon"],
                       delta=p["delta"], mesh=p["mesh"], seed=ctx.seed, threads=ctx.threads, chunk=p["chunk"])
    ok = (rep.envelope_exceedance_fraction <= p["max_exceedance"] and rep.upward_trend
          and rep.discretization.verdict == "pass")
    return rep, ok


def cmd_clt_proxy(ctx):
    p = ctx.p
    sigma = p["sigma"] if p["sigma"] is not None else ctx.sigma_exact()
    if not sigma > 0:
        raise DegenerateVarianceError()
    b = simulate_paths(ctx.model, ctx.mu, p["t_eval"], ctx.mesh(), ctx.seed, p["n_paths"],
                       threads=ctx.threads, chunk_size=p["chunk"])
    rep = clt_proxy(b, ctx.g, sigma, p["t_eval"], model=ctx.model)
    return rep, rep.passed


def cmd_discretization(ctx):
    p = ctx.p
    rep = run_discretization(ctx.model, ctx.g, ctx.mu, n_paths=p["n_paths"], horizon=p["horizon"],
                             mesh=p["mesh"], seed=ctx.seed, threads=ctx.threads, chunk=p["chunk"])
    return rep, rep.verdict == "pass"


HANDLERS = {
    "certify-mixing": cmd_certify_mixing,
    "certify-moments": cmd_certify_moments,
    "ergodicity": cmd_ergodicity,
    "corrector": cmd_corrector,
    "sigma": cmd_sigma,
    "martingale-check": cmd_martingale_check,
    "heyde-scott": cmd_heyde_scott,
    "lil": cmd_lil,
    "clt-proxy": cmd_clt_proxy,
    "discretization": cmd_discretization,
}


# -------------------------------------------------------------------- driver


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lillab", description="Monte Carlo checks of the LIL for Markov processes.")
    ap.add_argument("command", choices=C.COMMANDS)
    ap.add_argument("--config", help="JSON experiment config")
    ap.add_argument("--seed", type=int, help="64-bit seed (overrides LILLAB_SEED and the config)")
    ap.add_argument("--threads", type=int, default=1, help="worker threads; output does not depend on it")
    ap.add_argument("--out", help="directory for <command>.json (and .csv)")
    ap.add_argument("--format", choices=("json", "csv"), default="json")
    return ap


def run(command: str, raw_cfg: dict, threads: int = 1, fmt: str = "json", out=None,
        stdout=None, now=None) -> int:
    """Run one command; returns the exit code. ``now`` fixes the timestamp (tests)."""
    stdout = stdout or sys.stdout
    cfg = C.resolve(command, raw_cfg)
    ctx = Context(cfg, threads)
    degenerate = None
    try:
        result, passed = HANDLERS[command](ctx)
    except DegenerateVarianceError as exc:
        result, passed, degenerate = {"error": str(exc)}, False, str(exc)
    if not isinstance(result, dict) and hasattr(result, "verdict") and result.verdict == "degenerate variance":
        degenerate = result.verdict
    stamp = (now or datetime.datetime.now(datetime.timezone.utc)).isoformat()
    report = {
        "command": command,
        "tool_version": TOOL_VERSION,
        "config": cfg,
        "passed": bool(passed),
        "status": degenerate or ("pass" if passed else "fail"),
        "result": result,
        "timestamp": stamp,
    }
    text = dumps(report)
    csv_text = result.to_csv() if fmt == "csv" and hasattr(result, "to_csv") else None
    if out is not None:
        d = Path(out)
        d.mkdir(parents=True, exist_ok=True)
        (d / f"{command}.json").write_text(text, encoding="utf-8")
        if csv_text is not None:
            (d / f"{command}.csv").write_text(csv_text, encoding="utf-8")
    else:
        stdout.write(csv_text if csv_text is not None else text)
    return EXIT_PASS if passed else EXIT_FAIL


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PASS if exc.code == 0 else EXIT_ERROR
    try:
        raw = C.load_config_file(args.config) if args.config else {}
        env_seed = os.environ.get("LILLAB_SEED")
        if env_seed is not None:
            try:
                raw["seed"] = int(env_seed, 0)
            except ValueError:
                raise C.ConfigError([f"LILLAB_SEED is not an integer: {env_seed!r}"]) from None
        if args.seed is not None:
            raw["seed"] = args.seed
        if args.threads < 1:
            raise C.ConfigError(["--threads must be at least 1"])
        return run(args.command, raw, args.threads, args.format, args.out)
    except C.ConfigError as exc:
        print("invalid configuration:", file=sys.stderr)
        for item in exc.problems:
            print(f"  - {item}", file=sys.stderr)
        return EXIT_ERROR
    except LilLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

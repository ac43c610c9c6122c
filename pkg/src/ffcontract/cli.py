"""
Command-line front end.

Subcommands: ``analyze``, ``synthesize``, ``simulate``, ``verify`` and
``reproduce-figure``. Exit codes: 0 pass, 1 check failure, 2 configuration
error, 3 numeric failure.
"""
import argparse
import json
import math
import sys as _sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

try:
    import tomllib as tomli
except ImportError:  # Python < 3.11
    import tomli

from . import intervals as iv
from . import plots, sim, synth, sysmodel
from . import verify as vf
from .errors import (
    AssumptionViolated,
    ConfigurationError,
    EvaluationError,
    FFContractError,
    IntegrationFailure,
    InvalidInputError,
    NumericFailure,
    PeriodizationError,
    StructuralError,
    SynthesisInfeasible,
)
from .expr import compile_time_fn

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

FIGURES = {
    "fig1": dict(system="eq47", forcing=None, input="-3*sin(t)", span=(0.0, 30.0),
                 ics=[[v] for v in np.linspace(-5.0, 5.0, 10)]),
    "fig2": dict(system="eq47", forcing="tCosT", input="-3*sin(t)", span=(0.0, 30.0),
                 ics=[[v] for v in np.linspace(-5.0, 5.0, 10)]),
    "fig3": dict(system="eq48", forcing=None, input=-2.0, span=(0.0, 10.0),
                 ics=[[-2.0, -2.0], [2.0, 2.0], [-2.0, 2.0], [2.0, -2.0],
                      [0.0, 2.0], [0.0, -2.0], [2.0, 0.0], [-1.0, 0.5]]),
    "fig4": dict(system="eq49", forcing=None, input=3.0, span=(0.0, 10.0),
                 ics=[[v] for v in np.linspace(-3.0, 3.0, 8)]),
}
FIG4_ROOT_BRACKET = (2.0, 3.0)


@dataclass
class RunConfig:
    """Declarative run description, read from TOML."""

    system: object = "eq47"
    window: tuple = (0.0, 2 * math.pi)
    m: float = 1.0
    alpha: float = 0.5
    margin: float = synth.DEFAULT_MARGIN
    input_mode: object = "synthesized"
    forcing: Optional[str] = None
    initial_conditions: object = None
    span: Optional[tuple] = None
    rtol: float = sim.DEFAULT_RTOL
    atol: float = sim.DEFAULT_ATOL
    samples: int = sim.DEFAULT_SAMPLES
    output_dir: str = "out"
    seed: int = 0
    verify: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d):
        known = {"system", "window", "m", "alpha", "margin", "inputMode", "forcing", "initialConditions",
                 "tolerances", "outputDir", "span", "samples", "seed", "verify"}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown configuration keys: {', '.join(sorted(unknown))}")
        cfg = cls()
        if "system" in d:
            cfg.system = d["system"]
        if "window" in d:
            cfg.window = _interval(d["window"], "window")
        if "span" in d:
            cfg.span = _interval(d["span"], "span")
        for key in ("m", "alpha", "margin"):
            if key in d:
                setattr(cfg, key, _number(d[key], key))
        cfg.input_mode = d.get("inputMode", cfg.input_mode)
        cfg.forcing = d.get("forcing")
        cfg.initial_conditions = d.get("initialConditions")
        tol = d.get("tolerances", {})
        if not isinstance(tol, dict):
            raise ConfigurationError("tolerances must be a table with relTol/absTol")
        cfg.rtol = _number(tol.get("relTol", cfg.rtol), "relTol")
        cfg.atol = _number(tol.get("absTol", cfg.atol), "absTol")
        if cfg.rtol <= 0 or cfg.atol <= 0:
            raise ConfigurationError("tolerances must be positive")
        cfg.samples = int(d.get("samples", cfg.samples))
        cfg.output_dir = str(d.get("outputDir", cfg.output_dir))
        cfg.seed = int(d.get("seed", cfg.seed))
        cfg.verify = dict(d.get("verify", {}))
        return cfg

    @classmethod
    def load(cls, path):
        try:
            with open(path, "rb") as fh:
                data = tomli.load(fh)
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from None
        except tomli.TOMLDecodeError as exc:
            raise ConfigurationError(f"invalid TOML in {path}: {exc}") from None
        return cls.from_dict(data)

    # -- resolution ---------------------------------------------------------

    def build_system(self):
        if isinstance(self.system, str):
            return sysmodel.builtin(self.system, forcing=self.forcing)
        if isinstance(self.system, dict):
            s = self.system
            try:
                return sysmodel.from_expressions(
                    s["dimension"], s["drift"], s["controlDir"], s["driftJacobian"], s["controlJacobian"],
                    envelopes=s.get("envelopes"), period=s.get("period"), state_box=s.get("stateBox"),
                    name=s.get("name", "custom"),
                )
            except KeyError as exc:
                raise ConfigurationError(f"custom system is missing {exc.args[0]!r}") from None
        raise ConfigurationError("system must be a built-in name or a table of expressions")

    def simulation_span(self):
        return self.span if self.span is not None else self.window

    def initial_states(self, sys):
        ic = self.initial_conditions
        if ic is None:
            ic = {"count": 5}
        if isinstance(ic, list):
            pts = [np.atleast_1d(np.asarray(p, dtype=float)) for p in ic]
            if not pts or any(p.size != sys.dimension for p in pts):
                raise ConfigurationError(f"initial conditions must be vectors of length {sys.dimension}")
            return pts
        if isinstance(ic, dict):
            count = int(ic.get("count", 5))
            if count < 1:
                raise ConfigurationError("initialConditions.count must be at least 1")
            box = ic.get("box", sys.state_box)
            if box is None:
                raise ConfigurationError("initialConditions.box is required for this system")
            box = np.asarray(box, dtype=float).reshape(-1, 2)
            if box.shape[0] != sys.dimension:
                raise ConfigurationError("initialConditions.box does not match the dimension")
            rng = np.random.default_rng(int(ic.get("seed", self.seed)))
            return [rng.uniform(box[:, 0], box[:, 1]) for _ in range(count)]
        raise ConfigurationError("initialConditions must be a list or a {count, box, seed} table")


def _number(v, what):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigurationError(f"{what} must be a number")
    return float(v)


def _interval(v, what):
    if not isinstance(v, (list, tuple)) or len(v) != 2:
        raise ConfigurationError(f"{what} must be [start, end]")
    a, b = _number(v[0], what), _number(v[1], what)
    if not b > a:
        raise ConfigurationError(f"{what} must be nonempty")
    return a, b


# ---------------------------------------------------------------------------
# pipeline pieces


def _write_json(path, obj):
    path.write_text(json.dumps(obj, indent=2) + "\n")


def _synthesis(cfg, sys):
    if sys.period is not None:
        return synth.synthesize_periodic(sys, cfg.m, cfg.alpha, cfg.margin)
    return synth.synthesize(sys, cfg.window, cfg.m, cfg.alpha, cfg.margin)


def _resolve_input(cfg, sys):
    """Return ``(u, synthesis or None)``."""
    mode = cfg.input_mode
    if mode == "synthesized":
        return None, _synthesis(cfg, sys)
    if isinstance(mode, dict) and len(mode) == 1:
        (kind, value), = mode.items()
        if kind == "expression":
            return compile_time_fn(value), None
        if kind == "constant":
            return _number(value, "inputMode.constant"), None
    if isinstance(mode, (int, float)) and not isinstance(mode, bool):
        return float(mode), None
    raise ConfigurationError("inputMode must be 'synthesized', {expression = ...} or {constant = ...}")


def _pairwise_spread(trajs):
    finals = np.array([tr.states[-1] for tr in trajs if tr.status == "ok"])
    if len(finals) < 2:
        return None
    diff = finals[:, None, :] - finals[None, :, :]
    return float(np.max(np.linalg.norm(diff, axis=2)))


def _run_ensemble(cfg, sys, u, syn, out):
    span = cfg.simulation_span()
    structure = syn.structure if syn else None
    ics = cfg.initial_states(sys)
    trajs = sim.ensemble(sys, u, ics, "unitBasisCycle", None, span, cfg.rtol, cfg.atol,
                         sim.output_grid(span, cfg.samples), structure)
    gain = syn.gain if syn else None
    for i, tr in enumerate(trajs):
        if tr.status == "ok":
            sim.write_csv(out / f"traj_{i:03d}.csv", tr, gain)
    (out / "simulate.svg").write_text(plots.trajectory_plot(trajs, title=f"{sys.name} trajectories"))
    return trajs


def cmd_analyze(cfg, out):
    sys = cfg.build_system()
    structure = iv.find_knots(sys, cfg.window, cfg.m)
    report = iv.validate_assumption(structure, sys)
    _write_json(out / "structure.json", {"structure": structure.to_dict(), "validation": report.to_dict()})
    print(f"system {sys.name}, window [{cfg.window[0]:.6g}, {cfg.window[1]:.6g}], m={cfg.m:g}")
    print("knots: " + ", ".join(f"{k:.12g}" for k in structure.knots))
    print("signs: " + ", ".join("+" if s > 0 else "-" for s in structure.signs))
    print(f"M={structure.M:.12g} k={structure.min_even_length:.12g} L={structure.max_odd_length:.12g}")
    for w in structure.warnings:
        print(f"warning: {w}")
    for note in report.notes:
        print(f"note: {note}")
    if not report.passed:
        bad = report.first_failure
        print(f"assumption violated: {bad.condition} ({bad.detail})", file=_sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def cmd_synthesize(cfg, out):
    sys = cfg.build_system()
    syn = _synthesis(cfg, sys)
    c = syn.constants
    _write_json(out / "input.json", syn.input.to_dict())
    _write_json(out / "gain.json", syn.gain.to_dict())
    _write_json(out / "structure.json", syn.structure.to_dict())
    t0, t1 = syn.input.domain
    ts = np.linspace(t0, t1, 1001)
    svg = plots.line_plot(
        [(ts, syn.input.evaluate(ts), "u(t)"), (ts, syn.gain.evaluate(ts), "g(t)")], "t", "u, g",
        f"{sys.name} synthesized input and gain",
    )
    (out / "synthesis.svg").write_text(svg)
    amp = max(abs(p.v0) for p in syn.input.pieces if p.kind == "plateau")
    k_ies, lam_ies = c.ies_constants()
    print(f"alpha={c.alpha:g} margin={c.margin:g} m={c.m:g} M={c.M:.6g} k={c.k:.6g} L={c.L:.6g}")
    print(f"c={c.c:.10g}")
    print(f"plateau amplitude {amp:.6f}")
    print(f"IES constants: overshoot {k_ies:.6g}, rate {lam_ies:.6g}")
    for note in syn.notes:
        print(f"note: {note}")
    checks = list(syn.smoothness.checks) + list(syn.gain_report.checks)
    bad = [ch for ch in checks if not ch.passed]
    for ch in bad:
        print(f"check failed: {ch.name} (margin {ch.worst_margin:.3e})", file=_sys.stderr)
    return EXIT_CHECK if bad else EXIT_OK


def cmd_simulate(cfg, out):
    sys = cfg.build_system()
    u, syn = _resolve_input(cfg, sys)
    if syn is not None:
        u = syn.input
    trajs = _run_ensemble(cfg, sys, u, syn, out)
    failed = [i for i, tr in enumerate(trajs) if tr.status != "ok"]
    for i in failed:
        print(f"member {i} failed: {trajs[i].error}", file=_sys.stderr)
    print(f"{len(trajs) - len(failed)} of {len(trajs)} trajectories integrated")
    spread = _pairwise_spread(trajs)
    if spread is not None:
        print(f"final pairwise spread {spread:.6e}")
    return EXIT_NUMERIC if failed else EXIT_OK


def _periodic_check(cfg, sys, u, syn, ics, period, bound):
    periods = int(cfg.verify.get("periods", 6))
    t0 = cfg.simulation_span()[0]
    structure = syn.structure if syn else None
    u_period = getattr(u, "period", None)
    if sys.period is not None and (u_period is not None or not callable(u)):
        if u_period is None:
            # constant input is periodic with any period
            u = synth.FeedforwardInput([synth.InputPiece(t0, t0 + period, "plateau", float(u), float(u))], period)
        src = sim.period_samples(sys, u, ics[0], t0, period, periods + 1, cfg.rtol, cfg.atol, structure)
    else:
        per = 200
        grid = t0 + period * np.arange(periods * per + 1) / per
        src = sim.integrate(sys, u, ics[0], None, (t0, grid[-1]), cfg.rtol, cfg.atol, grid, structure)
    return vf.check_periodic_convergence(src, period, bound)


def cmd_verify(cfg, out):
    sys = cfg.build_system()
    u, syn = _resolve_input(cfg, sys)
    if syn is not None:
        u = syn.input
    span = cfg.simulation_span()
    ics = cfg.initial_states(sys)
    trajs = _run_ensemble(cfg, sys, u, syn, out)
    if any(tr.status != "ok" for tr in trajs):
        print("integration failed for some members", file=_sys.stderr)
        return EXIT_NUMERIC
    report = vf.VerificationReport(
        scope="periodic" if (syn and syn.input.period) else "window",
        sampling=f"{len(trajs)} trajectories, every output sample used as t0",
    )
    k = cfg.verify.get("overshootConst")
    lam = cfg.verify.get("decayRate")
    if syn is not None:
        c = syn.constants
        report.constants_used = dict(alpha=c.alpha, c=c.c, m=c.m, M=c.M, k=c.k, L=c.L)
        for i, tr in enumerate(trajs):
            res = vf.check_certificate(sim.lyapunov_trace(tr, syn.gain), c.alpha)
            res.name = f"certificate #{i}"
            report.checks.append(res)
        if k is None or lam is None:
            k, lam = c.ies_constants()
        pairs = vf.random_pairs(int(cfg.verify.get("pairs", 10)), sys.state_box or [(-1, 1)] * sys.dimension,
                                cfg.seed)
        report.checks.append(vf.ies_with_predicted_constants(sys, u, c, span, pairs=pairs, structure=syn.structure,
                                                      rtol=cfg.rtol, atol=cfg.atol, samples=cfg.samples))
    if k is not None and lam is not None:
        k, lam = float(k), float(lam)
        report.constants_used.update(overshootConst=k, decayRate=lam)
        report.checks.append(vf.check_contraction(trajs, k, lam))
        if len(ics) > 1:
            grid = sim.output_grid(span, cfg.samples)
            pairs = [sim.integrate_pair(sys, u, a, b, span, cfg.rtol, cfg.atol, grid, syn.structure if syn else None)
                     for a, b in zip(ics[:-1], ics[1:])]
            report.checks.append(vf.check_ies(pairs, k, lam))
    skip = syn.structure.max_odd_length if syn else 0.0
    for i, tr in enumerate(trajs):
        norms = tr.displacement_norms()
        try:
            report.decay_fits[f"displacement #{i}"] = vf.fit_decay(tr.times, norms, skip=skip)
        except FFContractError as exc:
            print(f"note: no fit for displacement #{i}: {exc}")
    if cfg.verify.get("periodic", False):
        period = float(cfg.verify.get("period", sys.period or 2 * math.pi))
        bound = float(cfg.verify.get("ratioBound", 0.25))
        res, fixed = _periodic_check(cfg, sys, u, syn, ics, period, bound)
        res.detail += f"; extrapolated periodic point {np.array2string(np.asarray(fixed), precision=6)}"
        report.checks.append(res)
    (out / "report.json").write_text(report.to_json() + "\n")
    (out / "report.txt").write_text(report.to_text() + "\n")
    print(report.to_text())
    return EXIT_OK if report.passed else EXIT_CHECK


def figure_config(fig_id):
    if fig_id not in FIGURES:
        raise ConfigurationError(f"unknown figure {fig_id!r}; choose from {', '.join(FIGURES)}")
    fig = FIGURES[fig_id]
    u = fig["input"]
    return RunConfig(
        system=fig["system"],
        forcing=fig["forcing"],
        input_mode={"expression": u} if isinstance(u, str) else {"constant": u},
        initial_conditions=[list(p) for p in fig["ics"]],
        span=fig["span"],
        window=fig["span"],
    )


def reproduce_figure(fig_id, out, samples=sim.DEFAULT_SAMPLES):
    """
    Simulate one of the four figure setups and write ``figN.svg`` plus one
    CSV per trajectory. Returns a dict with the quantitative stand-in.
    """
    cfg = figure_config(fig_id)
    cfg.samples = samples
    sys = cfg.build_system()
    u, _ = _resolve_input(cfg, sys)
    ics = cfg.initial_states(sys)
    trajs = sim.ensemble(sys, u, ics, "unitBasisCycle", None, cfg.span, cfg.rtol, cfg.atol,
                         sim.output_grid(cfg.span, samples))
    for i, tr in enumerate(trajs):
        sim.write_csv(out / f"{fig_id}_{i:03d}.csv", tr)
    (out / f"{fig_id}.svg").write_text(plots.trajectory_plot(trajs, title=f"{fig_id}: {sys.name}"))
    result = {"figure": fig_id, "members": len(trajs)}
    if fig_id in ("fig1", "fig2"):
        result["initialSpread"] = float(np.ptp([p[0] for p in ics]))
        result["finalSpread"] = _pairwise_spread(trajs)
    elif fig_id == "fig3":
        rates = []
        for a, b in zip(trajs[:-1], trajs[1:]):
            d = np.linalg.norm(a.states - b.states, axis=1)
            rates.append(vf.fit_decay(a.times, d).lambda_hat)
        result["minFittedRate"] = float(min(rates))
    else:
        root = iv.bisect_root(lambda x: x**3 - 3 * x - 9, *FIG4_ROOT_BRACKET, 1e-14)
        result["root"] = root
        result["maxEndpointError"] = float(max(abs(tr.states[-1, 0] - root) for tr in trajs))
    return result


def cmd_reproduce(fig_id, out, samples):
    if fig_id is None:
        raise ConfigurationError("--figure is required")
    result = reproduce_figure(fig_id, out, samples)
    _write_json(out / f"{fig_id}.json", result)
    for key, value in result.items():
        print(f"{key}: {value}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="ffcontract", description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("analyze", "synthesize", "simulate", "verify", "reproduce-figure"):
        p = sub.add_parser(name)
        p.add_argument("--config", metavar="PATH")
        p.add_argument("--out", metavar="DIR")
        p.add_argument("--system", help="built-in system name (overrides the config)")
        p.add_argument("--figure", metavar="ID")
        p.add_argument("--alpha", type=float)
        p.add_argument("--m", type=float)
        p.add_argument("--margin", type=float)
        p.add_argument("--seed", type=int)
    return parser


def _config_from_args(args):
    if args.command == "reproduce-figure":
        cfg = RunConfig() if args.config is None else RunConfig.load(args.config)
    elif args.config is not None:
        cfg = RunConfig.load(args.config)
    elif args.figure is not None:
        cfg = figure_config(args.figure)
    else:
        cfg = RunConfig()
    if args.system is not None:
        cfg.system = args.system
    for key in ("alpha", "m", "margin", "seed"):
        v = getattr(args, key)
        if v is not None:
            setattr(cfg, key, v)
    if args.out is not None:
        cfg.output_dir = args.out
    return cfg


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = _config_from_args(args)
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "analyze":
            return cmd_analyze(cfg, out)
        if args.command == "synthesize":
            return cmd_synthesize(cfg, out)
        if args.command == "simulate":
            return cmd_simulate(cfg, out)
        if args.command == "verify":
            return cmd_verify(cfg, out)
        return cmd_reproduce(args.figure, out, cfg.samples)
    except (ConfigurationError, InvalidInputError) as exc:
        print(f"configuration error: {exc}", file=_sys.stderr)
        return EXIT_CONFIG
    except AssumptionViolated as exc:
        print(f"assumption violated ({exc.condition}): {exc}", file=_sys.stderr)
        return EXIT_CHECK
    except (StructuralError, SynthesisInfeasible, PeriodizationError) as exc:
        print(f"synthesis failed: {exc}", file=_sys.stderr)
        return EXIT_CHECK
    except (NumericFailure, IntegrationFailure, EvaluationError) as exc:
        print(f"numeric failure: {exc}", file=_sys.stderr)
        return EXIT_NUMERIC
    except FFContractError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return EXIT_CHECK


if __name__ == "__main__":
    _sys.exit(main())

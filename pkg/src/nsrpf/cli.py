"""Batch front-end: config in, certification + solves + verifier artifacts out.

Subcommands
-----------
run <config>      full pipeline: certify, solve, verify, export
certify <config>  certification and the constants ledger only
oracle <config>   dense-product cross-check of the solver (matrix chains)

Config files use INI syntax with the sections [system], [cone], [solver],
[outputs], [checks]; see the shipped configs/ directory for examples.  The
output directory can be overridden with the NSRPF_OUTDIR environment
variable.  Exit codes: 0 all requested checks passed, 1 a verifier failed,
2 config error, 3 certification failure (the message names the axiom).

Artifacts: lambda.csv (n, lambda, k_star, residual), m_<n>.csv and
h_<n>.csv per reported index, rates.csv (n, k, error_lambda, error_m,
error_h), constants.txt (flat name = value ledger), report.txt (one
PASS/FAIL line per check).  Numbers are written with 17 significant digits
so reruns with the same seeds reproduce files byte for byte.
"""
from __future__ import annotations

import argparse
import configparser
import math
import os
import sys
import tempfile
from dataclasses import dataclass

import numpy as np

from .cones import ConeParams
from .errors import CertificationError, ConvergenceError, DomainError, StructuralError
from .hypotheses import (certify_cone_conditions, certify_map_hypotheses,
                         default_Q, derive_constants)
from .rpf import (build_invariant_chain, solve_backward, solve_forward,
                  verify_cone_contraction, verify_eigen_relations,
                  verify_exponential_rates, verify_independence, verify_uniqueness)
from .systems import (CircleMapSpec, MatrixChainSpec, build_circle_chain,
                      build_matrix_chain, oracle_rpf_chain)

KNOWN_CHECKS = ("eigen", "rates", "uniqueness", "independence",
                "invariant_chain", "cone_contraction")


@dataclass
class RunConfig:
    kind: str
    system: object
    q_mode: str          # "auto" or a float literal
    delta: float
    beta: float
    tol: float
    k_max: int | None
    solver_seed: int
    out_dir: str
    checks: list


class ConfigError(Exception):
    pass


def _get(cp, section, key, conv, default=None):
    if not cp.has_option(section, key):
        if default is not None:
            return default
        raise ConfigError(f"[{section}].{key}: missing required key")
    raw = cp.get(section, key)
    try:
        return conv(raw)
    except (ValueError, TypeError) as e:
        raise ConfigError(f"[{section}].{key}: {e}") from e


def _window(raw: str) -> tuple[int, int]:
    parts = raw.split()
    if len(parts) != 2:
        raise ValueError("window needs two integers, e.g. '-50 50'")
    lo, hi = int(parts[0]), int(parts[1])
    if hi <= lo:
        raise ValueError("window upper end must exceed the lower end")
    return lo, hi


def parse_config(path: str) -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    read = cp.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path!r}")
    kind = _get(cp, "system", "kind", str)
    window = _get(cp, "system", "window", _window)
    if kind == "matrix":
        d = _get(cp, "system", "d", int, 2)
        if cp.has_option("system", "matrix"):
            entries = [float(t) for t in cp.get("system", "matrix").split()]
            if len(entries) != d * d:
                raise ConfigError(f"[system].matrix: need {d * d} row-major entries")
            m = np.array(entries).reshape(d, d)
            system = MatrixChainSpec.stationary(m, window)
        else:
            system = MatrixChainSpec.random(
                d=d, window=window,
                low=_get(cp, "system", "entry_low", float, 1.0),
                high=_get(cp, "system", "entry_high", float, 2.0),
                seed=_get(cp, "system", "seed", int, 0))
    elif kind == "circle":
        system = CircleMapSpec.make(
            N=_get(cp, "system", "n_grid", int, 1024), window=window,
            eps=_get(cp, "system", "eps", float, 0.05),
            eps_mode=_get(cp, "system", "eps_mode", str, "alternating"),
            a=_get(cp, "system", "a", float, 0.1),
            a_mode=_get(cp, "system", "a_mode", str, "sin"),
            b=_get(cp, "system", "b", float, 0.0),
            b_mode=_get(cp, "system", "b_mode", str, "constant"),
            delta=_get(cp, "cone", "delta", float, 0.2),
            seed=_get(cp, "system", "seed", int, 0))
    else:
        raise ConfigError(f"[system].kind: unknown kind {kind!r}")
    q_mode = _get(cp, "cone", "q", str, "auto")
    if q_mode != "auto":
        try:
            float(q_mode)
        except ValueError:
            raise ConfigError("[cone].q: must be 'auto' or a number") from None
    tol = _get(cp, "solver", "tol", float, 1e-10 if kind == "matrix" else 1e-6)
    if tol <= 0.0:
        raise ConfigError("[solver].tol: must be positive")
    k_max = _get(cp, "solver", "k_max", int, 0) or None
    out_dir = os.environ.get("NSRPF_OUTDIR") or _get(cp, "outputs", "dir", str, "out")
    checks = _get(cp, "checks", "run", str, "eigen").split()
    for c in checks:
        if c not in KNOWN_CHECKS:
            raise ConfigError(f"[checks].run: unknown check {c!r} "
                              f"(known: {', '.join(KNOWN_CHECKS)})")
    return RunConfig(kind=kind, system=system, q_mode=q_mode,
                     delta=_get(cp, "cone", "delta", float, 0.2 if kind == "circle" else 0.5),
                     beta=_get(cp, "cone", "beta", float, 1.0),
                     tol=tol, k_max=k_max,
                     solver_seed=_get(cp, "solver", "seed", int, 123),
                     out_dir=out_dir, checks=checks)


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.17g}"
    return str(x)


def _atomic_write(path: str, text: str):
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-nsrpf-")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_csv(path: str, header: list, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    _atomic_write(path, "\n".join(lines) + "\n")


def _certify(cfg: RunConfig):
    """Build the chain and certify; returns everything the solvers need."""
    if cfg.kind == "matrix":
        seq = build_matrix_chain(cfg.system)
        params = None
        cone = ConeParams(Q=1.0, delta=0.5, beta=1.0)   # pair set empty: cone = C+
        ledger = None
    else:
        seq = build_circle_chain(cfg.system)
        params = certify_map_hypotheses(seq)
        q = default_Q(params) if cfg.q_mode == "auto" else float(cfg.q_mode)
        ledger = derive_constants(params, q)   # rejects Q at or below threshold
        cone = ConeParams(Q=q, delta=cfg.delta, beta=cfg.beta)
    cert = certify_cone_conditions(seq, cone, params=params)
    return seq, params, cone, cert, ledger


def _constants_text(cfg, params, cone, cert, ledger) -> str:
    lines = [f"system = {cfg.kind}",
             f"seed = {getattr(cfg.system, 'seed', None)}",
             f"Q = {_fmt(cone.Q)}", f"delta = {_fmt(cone.delta)}",
             f"beta = {_fmt(cone.beta)}",
             f"tau = {cert.tau}",
             f"Delta_measured = {_fmt(cert.Delta_measured)}",
             f"block_factor = {_fmt(cert.block_factor)}",
             f"density_basis = {cert.density_basis}"]
    rcm = cert.rate_constants()
    lines += [f"gamma_measured = {_fmt(rcm.gamma)}",
              f"C1_measured = {_fmt(rcm.C1)}", f"C3_measured = {_fmt(rcm.C3)}"]
    if ledger is not None:
        lines.append("# closed-form ledger from the certified map hypotheses")
        lines.append(ledger.as_text())
    return "\n".join(lines) + "\n"


def cmd_certify(cfg: RunConfig) -> int:
    seq, params, cone, cert, ledger = _certify(cfg)
    os.makedirs(cfg.out_dir, exist_ok=True)
    text = _constants_text(cfg, params, cone, cert, ledger)
    _atomic_write(os.path.join(cfg.out_dir, "constants.txt"), text)
    sys.stdout.write(text)
    return 0


def cmd_run(cfg: RunConfig) -> int:
    seq, params, cone, cert, ledger = _certify(cfg)
    os.makedirs(cfg.out_dir, exist_ok=True)
    _atomic_write(os.path.join(cfg.out_dir, "constants.txt"),
                  _constants_text(cfg, params, cone, cert, ledger))
    fwd = solve_forward(seq, tol=cfg.tol, tau=cert.tau,
                        block_factor=cert.block_factor, cone_params=cone,
                        k_max=cfg.k_max)
    bwd = solve_backward(seq, fwd, tol=cfg.tol, k_max=cfg.k_max) if seq.two_sided else None

    report_lines = []
    all_passed = True
    eig = verify_eigen_relations(seq, fwd, bwd, cfg.tol)

    def note(name, passed, detail):
        nonlocal all_passed
        all_passed = all_passed and passed
        report_lines.append(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")

    if "eigen" in cfg.checks:
        note("eigen", eig.passed,
             f"max dual residual {_fmt(eig.max_resid_dual)}, "
             f"max |<h,m>-1| {_fmt(eig.max_pair_h)}, "
             f"max h residual {_fmt(eig.max_resid_h)} (tol {_fmt(cfg.tol)})")
    rates = None
    if "rates" in cfg.checks:
        rates = verify_exponential_rates(fwd, bwd, cert.rate_constants())
        note("rates", rates.passed,
             f"{rates.violations} envelope violations over {len(rates.rows)} records")
    if "independence" in cfg.checks:
        ind = verify_independence(seq, fwd, bwd, tol=cfg.tol, cone_params=cone)
        note("independence", ind.passed,
             f"max dlam {_fmt(ind.max_dlam)}, max dm {_fmt(ind.max_dm)}, "
             f"max dh {_fmt(ind.max_dh)} (threshold {_fmt(ind.threshold)})")
    if "uniqueness" in cfg.checks:
        uq = verify_uniqueness(seq, fwd, bwd, tol=cfg.tol, cone_params=cone)
        note("uniqueness", uq.passed,
             f"tail-shift dlam {_fmt(uq.max_dlam_shift)}, dm {_fmt(uq.max_dm_shift)}, "
             f"xi gap {_fmt(uq.max_xi_gap)}, seed dh {_fmt(uq.max_dh_seed)}")
    if "cone_contraction" in cfg.checks:
        cc = verify_cone_contraction(seq, cone, tau=cert.tau,
                                     extra_delta=cert.Delta_measured,
                                     rng=np.random.default_rng(cfg.solver_seed))
        note("cone_contraction", cc.passed,
             f"{cc.n_pairs} pairs, Delta {_fmt(cc.Delta_measured)}, "
             f"max ratio {_fmt(float(cc.ratios.max()) if cc.n_pairs else 0.0)} "
             f"vs tanh(Delta/4) {_fmt(cc.block_factor)}")
    chain = None
    if "invariant_chain" in cfg.checks and bwd is not None:
        if cfg.kind == "matrix":
            chain_tol = cfg.tol
        else:
            # the pushforward pairing is limited by linear-interpolation error,
            # which scales like 1/N^2; 1e-4 is the measured scale at N = 1024
            n = seq.space(seq.n_min).n_points
            chain_tol = max(cfg.tol, 1e-4 * (1024.0 / n) ** 2)
        chain = build_invariant_chain(seq, fwd, bwd, tol=chain_tol)
        note("invariant_chain", chain.passed,
             f"max push gap {_fmt(max(chain.push_gap.values()))}, "
             f"max ||L~1 - 1|| {_fmt(max(chain.tilde_one_err.values()))}, "
             f"max dual gap {_fmt(max(chain.tilde_dual_gap.values()))} "
             f"(tol {_fmt(chain_tol)})")

    # artifacts
    resid = {n: r for (n, r, _, _) in eig.rows}
    _write_csv(os.path.join(cfg.out_dir, "lambda.csv"),
               ["n", "lambda", "k_star", "residual"],
               [(n, fwd.lam[n], fwd.k_star.get(n, -1), resid.get(n, math.nan))
                for n in fwd.reported_lam])
    for n in fwd.reported_m:
        _write_csv(os.path.join(cfg.out_dir, f"m_{n}.csv"), ["index", "weight"],
                   list(enumerate(fwd.m[n].weights)))
    if bwd is not None:
        for n in bwd.reported_h:
            _write_csv(os.path.join(cfg.out_dir, f"h_{n}.csv"), ["index", "value"],
                       list(enumerate(bwd.h[n].values)))
    rate_rows = (rates.rows if rates is not None
                 else verify_exponential_rates(fwd, bwd, cert.rate_constants()).rows)
    _write_csv(os.path.join(cfg.out_dir, "rates.csv"),
               ["n", "k", "error_lambda", "error_m", "error_h"], rate_rows)
    _atomic_write(os.path.join(cfg.out_dir, "report.txt"),
                  "\n".join(report_lines) + "\n")
    sys.stdout.write("\n".join(report_lines) + "\n")
    return 0 if all_passed else 1


def cmd_oracle(cfg: RunConfig) -> int:
    if cfg.kind != "matrix":
        raise ConfigError("oracle mode needs a matrix system (dense products)")
    seq, params, cone, cert, ledger = _certify(cfg)
    fwd = solve_forward(seq, tol=cfg.tol, tau=cert.tau,
                        block_factor=cert.block_factor, cone_params=cone,
                        with_diagnostics=False)
    bwd = solve_backward(seq, fwd, tol=cfg.tol, with_diagnostics=False)
    lams, ms, hs = oracle_rpf_chain(cfg.system)
    rows = []
    worst = 0.0
    for n in fwd.reported_lam:
        dl = abs(lams[n] - fwd.lam[n]) / fwd.lam[n]
        dm = float(np.abs(ms[n] - fwd.m[n].weights).max())
        dh = (float(np.abs(hs[n] - bwd.h[n].values).max())
              if n in bwd.reported_h else math.nan)
        worst = max(worst, dl, dm, 0.0 if math.isnan(dh) else dh)
        rows.append((n, dl, dm, dh))
    os.makedirs(cfg.out_dir, exist_ok=True)
    _write_csv(os.path.join(cfg.out_dir, "oracle_diff.csv"),
               ["n", "dlambda_rel", "dm_max", "dh_max"], rows)
    ok = worst < 1e-9
    line = f"{'PASS' if ok else 'FAIL'} oracle: max solver-oracle gap {_fmt(worst)}\n"
    _atomic_write(os.path.join(cfg.out_dir, "report.txt"), line)
    sys.stdout.write(line)
    return 0 if ok else 1


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="nsrpf", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="cmd", required=True)
    for name in ("run", "certify", "oracle"):
        sp = sub.add_parser(name)
        sp.add_argument("config")
    args = ap.parse_args(argv)
    try:
        cfg = parse_config(args.config)
    except (ConfigError, configparser.Error) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    try:
        if args.cmd == "run":
            return cmd_run(cfg)
        if args.cmd == "certify":
            return cmd_certify(cfg)
        return cmd_oracle(cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except CertificationError as e:
        print(f"certification failure: {e}", file=sys.stderr)
        return 3
    except (DomainError, StructuralError, ConvergenceError) as e:
        # domain errors from a Q below threshold are certification-level
        if "threshold" in str(e):
            print(f"certification failure: {e}", file=sys.stderr)
            return 3
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command line entry point: ``l2morse <command> --config <path> [--out <dir>]``.

Exit codes: 0 when every verdict passes, 2 on a verdict failure, 1 on a
configuration or runtime error.
"""
from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .betti import (
    BettiError,
    heat_traces,
    morse_inequality_eval,
    oracle_betti,
    rational_phase_betti,
)
from .calculus import Heat, chebyshev_fit, poly_rows
from .complex import ComplexError, CoverComplex, build_base, laplacian
from .config import ConfigError, ExperimentConfig, load_config
from .groups import GroupModel, WindowError
from .morse import FileMorse, InvariantZigzag, MorseError, Quasiperiodic
from .operators import (
    decay_fit,
    gershgorin_bound,
    inverse_k_fit,
    random_operator,
    trace_commutator_defect,
)
from .rng import stream

log = logging.getLogger("l2morse")

COMMANDS = ("oracle-betti", "heat-trace", "morse-verify", "trace-props", "decay-fit")


def fmt(x) -> str:
    if isinstance(x, bool):
        return "pass" if x else "fail"
    if isinstance(x, (float, np.floating, Fraction)):
        return f"{float(x):.17g}"
    return str(x)


def write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fp:
        w = csv.writer(fp, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(x) for x in row])


def fmt_g(g) -> str:
    return ":".join(str(x) for x in g)


@dataclass
class Setup:
    cfg: ExperimentConfig
    base: object
    group: GroupModel
    pattern: object
    out: Path
    verdicts: dict = field(default_factory=dict)


def build(cfg: ExperimentConfig, out: Path | None) -> Setup:
    spec = cfg.complex["base"]
    if spec.startswith("file:"):
        spec = "file:" + str(cfg.resolve(spec[5:].strip()))
    base = build_base(spec)
    if cfg.complex["weights"] is not None:
        base = base.scaled_weights(cfg.complex["weights"])
    g = cfg.group
    if g["kind"] == "cyclic":
        group = GroupModel.cyclic(g["order"])
    else:
        group = GroupModel.lattice(g["rank"] or base.offset_rank)
    m = cfg.morse
    pattern = None
    if m["pattern"] == "invariant_zigzag":
        pattern = InvariantZigzag(m["c"])
    elif m["pattern"] == "quasiperiodic":
        pattern = Quasiperiodic(m["alpha"], m["amplitude"])
    elif m["pattern"] == "file":
        pattern = FileMorse.from_file(cfg.resolve(m["path"]), base.offset_rank)
    out_dir = Path(out) if out is not None else cfg.resolve(cfg.run["output"])
    return Setup(cfg, base, group, pattern, out_dir)


def cmd_oracle_betti(st: Setup) -> bool:
    r = st.cfg.run
    rep = oracle_betti(st.base, st.group, r["samples"], r["ker_tol"], r["rank_tol"], r["seed"])
    rows = rep.rows()
    ok = abs(rep.euler() - st.base.euler) <= 1e-9
    if st.group.is_finite:
        phases = rational_phase_betti(st.base, st.group.order, r["ker_tol"])
        rows += [(k, v, "floquet_rational", r["ker_tol"], st.group.order) for k, v in enumerate(phases)]
        ok = ok and all(abs(float(a) - float(b)) <= 1e-9 for a, b in zip(phases, rep.values))
    write_csv(st.out / "betti.csv", ["degree", "value", "method", "tolerance", "samples"], rows)
    return ok


def _invariant(st: Setup) -> bool:
    return st.pattern is None or isinstance(st.pattern, InvariantZigzag)


def cmd_heat_trace(st: Setup) -> bool:
    r = st.cfg.run
    kmax = r["folner_kmax"]
    rows, ok = [], True
    for t in r["t_list"]:
        per = [
            heat_traces(st.base, st.group, k, r["s"], kmax, st.pattern, t, r["cheb_eps"],
                        r["window_radius"]).traces
            for k in range(st.base.dim + 1)
        ]
        for g in st.group.box(kmax):
            for k in range(st.base.dim + 1):
                rows.append((fmt_g(g), k, r["s"], t, per[k](g)))
            if _invariant(st):
                # alternating sum per tile equals the Euler characteristic
                alt = sum((-1) ** k * per[k](g) for k in range(st.base.dim + 1))
                slack = r["tol"] + 2 * r["cheb_eps"] * sum(st.base.counts)
                ok = ok and abs(alt - st.base.euler) <= slack
    write_csv(st.out / "traces.csv", ["g", "degree", "s", "t", "trace"], rows)
    return ok


def cmd_morse_verify(st: Setup) -> bool:
    if st.pattern is None:
        raise ConfigError("morse-verify needs morse.pattern")
    r = st.cfg.run
    betti = oracle_betti(st.base, st.group, r["samples"], r["ker_tol"], r["rank_tol"], r["seed"])
    led = morse_inequality_eval(
        st.base, st.group, st.pattern, betti, r["s"], r["t_list"], st.cfg.folner_range,
        r["tol"], r["cheb_eps"],
    )
    write_csv(
        st.out / "ledger.csv",
        ["k", "lhs_avg", "rhs", "verdict", "folner_k", "defect"],
        [(x.k, x.lhs_avg, x.rhs, x.verdict, x.folner_k, x.defect) for x in led.rows],
    )
    write_csv(
        st.out / "heat_ledger.csv",
        ["k", "s", "t", "folner_k", "lhs_avg", "rhs", "verdict"],
        [(x.k, x.s, x.t, x.folner_k, x.lhs_avg, x.rhs, x.verdict) for x in led.heat_rows],
    )
    for k, v in led.count_verdicts.items():
        log.info("degree %d count inequality: %s", k, fmt(v))
    for (k, t), v in led.heat_verdicts.items():
        log.info("degree %d heat analog at t=%g: %s", k, t, fmt(v))
    return led.passed


def defect_study(base, group, pairs, radius, ks, seed):
    """Trace-commutator defects of random pairs; returns per-pair reports and the
    aggregate ``(C, R²)`` of the mean normalized defect against ``1/(2k+1)``."""
    kmax = max(ks)
    R = kmax + 2 * radius + 1 if not group.is_finite else 1
    cover = CoverComplex(base, group, R)
    space = cover.space()
    reports = []
    for i in range(pairs):
        rng = stream(seed, "trace-pairs", i)
        A = random_operator(space, space, radius, rng, name="A")
        B = random_operator(space, space, radius, rng, name="B")
        reports.append(trace_commutator_defect(A, B, ks))
    scaled = np.array([np.abs(rep.averages) / (rep.norm_a * rep.norm_b) for rep in reports])
    mean = scaled.mean(axis=0)
    c, r2 = inverse_k_fit(ks, mean)
    return reports, scaled, mean, c, r2


def cmd_trace_props(st: Setup) -> bool:
    r = st.cfg.run
    ks = list(st.cfg.folner_range)
    reports, scaled, mean, c, r2 = defect_study(
        st.base, st.group, r["pairs"], r["op_radius"], ks, r["seed"]
    )
    rows = []
    for i, rep in enumerate(reports):
        for j, k in enumerate(ks):
            within = abs(rep.averages[j]) <= rep.bounds[j] * (1 + 1e-9) + 1e-12
            rows.append((i, k, rep.averages[j], rep.bounds[j], scaled[i, j], within))
    for j, k in enumerate(ks):
        rows.append(("mean", k, mean[j], c / (2 * k + 1), mean[j], True))
    write_csv(st.out / "defects.csv", ["pair", "k", "average", "bound", "normalized", "verdict"], rows)
    final_ok = bool(np.all(scaled[:, -1] <= 1e-2))
    bound_ok = all(rep.within_bound for rep in reports)
    fit_ok = st.group.is_finite or r2 >= 0.95
    log.info("defect fit C=%.6g R^2=%.6g; final max %.3g", c, r2, float(scaled[:, -1].max()))
    return final_ok and bound_ok and fit_ok


def cmd_decay_fit(st: Setup) -> bool:
    r = st.cfg.run
    t = r["t_list"][0]
    rows, ok = [], True
    for k in range(st.base.dim + 1):
        R = r["window_radius"] or 4
        while True:
            cover = CoverComplex(st.base, st.group, R)
            f = st.pattern.cell_function(cover) if st.pattern is not None else None
            delta = laplacian(cover, k, f, t)
            approx = chebyshev_fit(Heat(r["s"]), gershgorin_bound(delta), r["cheb_eps"])
            margin = delta.margin - max(approx.degree - 1, 0) * delta.radius
            if approx.degree == 0 or margin >= 0:
                break
            R += int(math.ceil(-margin))
        H = poly_rows(delta, Heat(r["s"]), r["cheb_eps"], 0)
        fit = decay_fit(H)
        ok = ok and fit.gaussian_class
        for d, v in zip(fit.distances, fit.profile):
            env = math.exp(fit.log_c1 - fit.c2 * d * d)
            rows.append((k, d, v, env, fit.c1, fit.c2, fit.r_squared, fit.gaussian_class))
    write_csv(
        st.out / "decay.csv",
        ["degree", "distance", "max_entry", "envelope", "c1", "c2", "r_squared", "gaussian_class"],
        rows,
    )
    return ok


HANDLERS = {
    "oracle-betti": cmd_oracle_betti,
    "heat-trace": cmd_heat_trace,
    "morse-verify": cmd_morse_verify,
    "trace-props": cmd_trace_props,
    "decay-fit": cmd_decay_fit,
}


def run_experiment(cfg: ExperimentConfig, command: str, out: Path | None = None) -> int:
    st = build(cfg, out)
    passed = HANDLERS[command](st)
    return 0 if passed else 2


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="l2morse",
        description="L2 Morse inequality experiments on periodic cell complexes.",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="experiment configuration file")
    parser.add_argument("--out", default=None, help="output directory (overrides run.output)")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(message)s",
    )
    try:
        cfg = load_config(args.config)
        code = run_experiment(cfg, args.command, Path(args.out) if args.out else None)
    except (ConfigError, ComplexError, MorseError, BettiError, WindowError, ValueError,
            OverflowError, MemoryError, OSError) as exc:
        print(f"l2morse: error: {exc}", file=sys.stderr)
        return 1
    if code == 2:
        print(f"l2morse: {args.command}: verdict failed", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())

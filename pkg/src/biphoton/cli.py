"""Command-line front end.

Exit codes: 0 success, 1 validation or physics failure (including bad
invocations), 2 I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import fock_oracle
from .analysis import (NoSignal, PhaseGrid, ScanTable, TimeScan, evaluate, fringe_stats,
                       which_path_contrast)
from .expfile import ExperimentFile, ExperimentFileError, load
from .network import Coupling, NetworkError, validate
from .rates import network_rate

OUTPUT_DIR_ENV = "BIPHOTON_OUTPUT_DIR"
CSV_HEADER = ("phi_S", "phi_I", "rate_A", "rate_D", "rate_coinc")
ORACLE_TOL = 1e-8

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2


class CliError(Exception):
    def __init__(self, message, code=EXIT_INVALID):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _read(path, truncation_order=None, paper_normalization=False) -> ExperimentFile:
    try:
        exp = load(path)
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror or exc}", EXIT_IO)
    except UnicodeDecodeError as exc:
        raise CliError(f"{path}: not UTF-8 text ({exc.reason})")
    net = exp.network
    if truncation_order is not None:
        net = replace(net, truncation_order=truncation_order)
    if paper_normalization:
        net = replace(net, paper_normalization=True)
    exp.network = net
    return exp


def _require(exp: ExperimentFile, *labels):
    dets = exp.network.detectors
    missing = [lab for lab in labels if lab not in dets]
    if missing:
        raise CliError(f"network has no detector(s) {', '.join(missing)}")


def _points(exp: ExperimentFile):
    if exp.scan is None:
        raise CliError("file declares no scan")
    return exp.scan.points()


def scan_csv(exp: ExperimentFile) -> str:
    """CSV text for a file's scan: one row per point, fixed column order."""
    _require(exp, "A", "D")
    phi_s, phi_i = _points(exp)
    net, coh = exp.network, exp.coherence
    cols = [np.broadcast_to(evaluate(net, w, phi_s, phi_i, coh), phi_s.shape)
            for w in ("A", "D", ("A", "D"))]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for row in zip(phi_s, phi_i, *cols):
        w.writerow([repr(float(x)) for x in row])
    return buf.getvalue()


def gnuplot_script(csv_path: str) -> str:
    return "\n".join([
        "set datafile separator ','",
        "set key autotitle columnhead",
        "set xlabel 'point index'",
        "set ylabel 'rate (engine units)'",
        f"plot '{csv_path}' using 0:3 with lines, '' using 0:4 with lines, "
        "'' using 0:5 with lines",
        "",
    ])


def _write(path: Path, text: str):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc.strerror or exc}", EXIT_IO)


def cmd_scan(args) -> int:
    exp = _read(args.file, args.truncation_order, args.paper_normalization)
    text = scan_csv(exp)
    out = args.output
    if out is None and os.environ.get(OUTPUT_DIR_ENV):
        out = Path(os.environ[OUTPUT_DIR_ENV]) / (Path(args.file).stem + ".csv")
    if out is None or str(out) == "-":
        sys.stdout.write(text)
    else:
        _write(Path(out), text)
    if args.gnuplot:
        _write(Path(args.gnuplot), gnuplot_script(str(out) if out else "scan.csv"))
    return EXIT_OK


def _fmt(x: float) -> str:
    return "nan" if x is None or math.isnan(x) else f"{x:.3f}"


def report_lines(exp: ExperimentFile) -> list[str]:
    """One ``key=value`` line per observable, plus diagnostics."""
    net, coh = exp.network, exp.coherence
    phi_s, phi_i = _points(exp)
    if isinstance(exp.scan, TimeScan):
        axis = "time"
    elif isinstance(exp.scan, PhaseGrid) and exp.scan.phi_S.num == 1 and exp.scan.phi_I.num > 1:
        axis = "phi_I"
    else:
        axis = "phi_S"
    observables = _observables(net)
    lines = [f"file={exp.name or '-'} points={len(phi_s)} scan_axis={axis}"]
    base = {"phi_S": float(phi_s[0]), "phi_I": float(phi_i[0])}
    for obs in observables:
        name = obs if isinstance(obs, str) else "*".join(obs)
        rates = np.broadcast_to(evaluate(net, obs, phi_s, phi_i, coh), phi_s.shape)
        table = ScanTable(phi_s, phi_i, np.asarray(rates))
        try:
            k = which_path_contrast(net, obs, base["phi_S"], base["phi_I"])
        except NoSignal:
            k = math.nan
        st = fringe_stats(table, contrast=k)
        mean = float(np.mean(rates))
        bg = st.r_min / mean if mean > 0 else math.nan
        rr = network_rate(net, obs, base)
        orders = ",".join(f"{o}:{v:.6e}" for o, v in rr.all_orders.items()) or "-"
        lines.append(
            f"observable={name} V={_fmt(st.visibility)} K={_fmt(st.contrast)} "
            f"V2K2={_fmt(st.v2k2)} background_fraction={_fmt(bg)} "
            f"r_min={st.r_min:.6e} r_max={st.r_max:.6e} "
            f"leading_order={rr.leading_order if rr.leading_order is not None else '-'} "
            f"orders={orders}")
    for d in validate(net):
        lines.append(f"diagnostic={d.level} code={d.code} message={d.message!r}")
    return lines


def cmd_report(args) -> int:
    exp = _read(args.file, args.truncation_order, args.paper_normalization)
    print("\n".join(report_lines(exp)))
    return EXIT_OK


def _observables(net):
    dets = net.detectors
    reg = net.registry
    obs = list(dets)
    obs += [(a, d) for a, d in itertools.combinations(dets, 2)
            if reg[dets[a]].id != reg[dets[d]].id]
    return obs


def _fit_deviation(engine, oracle) -> tuple[float, float]:
    """Least-squares global scale ``s`` (oracle ~ s * engine) and max relative residual."""
    e = np.asarray(engine, dtype=float)
    o = np.asarray(oracle, dtype=float)
    den = float(e @ e)
    s = float(e @ o) / den if den > 0 else 1.0
    ref = float(np.max(np.abs(o))) if o.size else 0.0
    if ref == 0.0:
        return s, float(np.max(np.abs(e))) if e.size else 0.0
    return s, float(np.max(np.abs(s * e - o))) / ref


def oracle_check(exp: ExperimentFile, trials: int, seed: int) -> dict:
    """Compare engine leading-order rates with the Fock oracle on perturbed copies.

    Returns the fitted scale and max relative deviation at leading order
    (the pass criterion), the same for the normalized second-order oracle
    state (low-gain leakage), and the network diagnostics.
    """
    if trials < 1:
        raise CliError("trials must be >= 1")
    net = replace(exp.network, paper_normalization=False, truncation_order=1)
    obs = _observables(net)
    if not obs:
        raise CliError("network has no detectors")
    rng = np.random.default_rng(seed)
    settings = [(net, 0.0, 0.0)]
    if exp.scan is not None:
        ps, pi = exp.scan.points()
        settings[0] = (net, float(ps[0]), float(pi[0]))
    for _ in range(trials):
        couplings = {c.name: Coupling(c.coupling.magnitude * rng.uniform(0.5, 1.5),
                                      rng.uniform(0, 2 * math.pi)) for c in net.crystals}
        settings.append((net.with_couplings(couplings), *rng.uniform(0, 2 * math.pi, 2)))
    eng, lead, full = [], [], []
    for n, ps, pi in settings:
        phases = {"phi_S": ps, "phi_I": pi}
        st1 = fock_oracle.build_state(n, 1, n_max=2, phases=phases)
        st2 = fock_oracle.build_state(n, 2, n_max=4, phases=phases)
        for o in obs:
            eng.append(float(evaluate(n, o, ps, pi)))
            if isinstance(o, str):
                lead.append(fock_oracle.leading_click(st1, o))
                full.append(fock_oracle.click_probability(st2, o))
            else:
                lead.append(fock_oracle.leading_pair(st1, *o))
                full.append(fock_oracle.pair_probability(st2, *o))
    scale, dev = _fit_deviation(eng, lead)
    lscale, leak = _fit_deviation(eng, full)
    return {"settings": len(settings), "observables": len(obs), "scale": scale,
            "max_rel_deviation": dev, "leakage_scale": lscale, "leakage": leak,
            "diagnostics": validate(net), "passed": dev < ORACLE_TOL}


def cmd_oracle_check(args) -> int:
    exp = _read(args.file)
    res = oracle_check(exp, args.trials, args.seed)
    print(f"settings={res['settings']} observables={res['observables']} "
          f"scale={res['scale']:.12g} max_rel_deviation={res['max_rel_deviation']:.3e} "
          f"tolerance={ORACLE_TOL:.0e}")
    print(f"second_order_leakage={res['leakage']:.3e} (normalized order-2 oracle state vs "
          f"leading-order engine)")
    for d in res["diagnostics"]:
        print(f"diagnostic={d.level} code={d.code} message={d.message!r}")
    print("PASS" if res["passed"] else "FAIL")
    return EXIT_OK if res["passed"] else EXIT_INVALID


def cmd_validate(args) -> int:
    exp = _read(args.file)
    diags = validate(exp.network)
    for d in diags:
        print(d)
    if not diags:
        print("ok")
    return EXIT_INVALID if any(d.level == "error" for d in diags) else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="biphoton", description="Induced-coherence biphoton interferometer simulator")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("file", help="experiment file (.exp)")
        sp.add_argument("--truncation-order", type=_positive_int, default=None)
        sp.add_argument("--paper-normalization", action="store_true",
                        help="beam splitters with t = r = 1 (term-exact field expressions)")

    sp = sub.add_parser("scan", help="write the file's scan as CSV")
    common(sp)
    sp.add_argument("--output", "-o", default=None,
                    help=f"CSV path ('-' for stdout; default ${OUTPUT_DIR_ENV}/<stem>.csv or stdout)")
    sp.add_argument("--gnuplot", default=None, help="also write a gnuplot script here")
    sp.set_defaults(func=cmd_scan)

    sp = sub.add_parser("report", help="visibility / contrast summary")
    common(sp)
    sp.set_defaults(func=cmd_report)

    sp = sub.add_parser("oracle-check", help="cross-check against the Fock-space oracle")
    sp.add_argument("file")
    sp.add_argument("--trials", type=_positive_int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_oracle_check)

    sp = sub.add_parser("validate", help="structural diagnostics")
    sp.add_argument("file")
    sp.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"biphoton: {exc}", file=sys.stderr)
        return exc.code
    except (ExperimentFileError, NetworkError, KeyError, ValueError) as exc:
        print(f"biphoton: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"biphoton: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``dpqt {calibrate,fixed,rdp-curves,simulate,fixtures}``.

Tables are written as CSV (header row, LF line endings, 12 significant
digits). Without ``--out`` the main table goes to stdout. The exit status is
0 when every check a command performs passes, 1 when some check fails (the
failures are listed as JSON on stderr) and 2 for invalid input.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from dpqt import config as cfg
from dpqt import fixed, fixtures, mclab, rdp
from dpqt.calibrate import PrivacyLevel, dp_slack, min_sigma
from dpqt.errors import (
    ConfigError,
    DomainError,
    NotPositiveDefiniteError,
    NotSymmetricError,
)
from dpqt.numcore import chisq_quantile

EXIT_OK, EXIT_CHECK_FAILED, EXIT_BAD_INPUT = 0, 1, 2


def fmt(value) -> str:
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.12g}"
    return str(value)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    return buf.getvalue()


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


class Output:
    """Collects named tables; the first one doubles as stdout when no --out."""

    def __init__(self, out_dir):
        self.out_dir = Path(out_dir) if out_dir else None
        self.tables: list[tuple[str, str]] = []

    def table(self, name: str, header, rows) -> None:
        self.tables.append((name, csv_text(header, rows)))

    def flush(self, every_table: bool = False) -> None:
        if self.out_dir is None:
            shown = self.tables if every_table else self.tables[:1]
            sys.stdout.write("\n".join(text for _, text in shown))
            return
        self.out_dir.mkdir(parents=True, exist_ok=True)
        for name, text in self.tables:
            with open(self.out_dir / name, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)


def _finish(failures: list[dict]) -> int:
    if failures:
        json.dump({"failed": failures}, sys.stderr)
        sys.stderr.write("\n")
        return EXIT_CHECK_FAILED
    return EXIT_OK


# -- subcommands --------------------------------------------------------------

def cmd_calibrate(args, out: Output) -> int:
    conf = cfg.load("calibrate", args.config)
    for key in ("epsilon", "delta", "sensitivity"):
        value = getattr(args, key)
        if value is not None:
            conf[key] = value
    cfg.validate("calibrate", conf)
    level = PrivacyLevel(conf["epsilon"], conf["delta"])
    sigma = min_sigma(level, conf["sensitivity"])
    slack = dp_slack(level.epsilon, conf["sensitivity"], sigma)
    print(f"epsilon={fmt(level.epsilon)} delta={fmt(level.delta)} "
          f"sensitivity={fmt(conf['sensitivity'])} sigma={fmt(sigma)} slack={fmt(slack)}")
    if out.out_dir is not None:
        out.table("calibrate.csv", ["epsilon", "delta", "sensitivity", "sigma", "slack"],
                  [[level.epsilon, level.delta, conf["sensitivity"], sigma, slack]])
    return EXIT_OK


def fixed_rows(conf: dict) -> list[list]:
    psi = cfg.psi_of(conf)
    eta = np.asarray(conf["eta"], dtype=float)
    if eta.size != psi.size:
        raise ConfigError("eta and the sensitivity vector differ in length")
    alpha = conf.get("alpha", 0.05)
    k = psi.size
    sigma = min_sigma(PrivacyLevel(conf["epsilon"], conf["delta"]), float(np.linalg.norm(psi)))
    t = chisq_quantile(k, conf.get("coverage", 0.95))
    ones = np.ones(k)
    xi_cr = fixed.xi_star_cr(psi)
    xi_test = fixed.xi_star_test(psi, eta)
    rows: list[list] = []
    for name, vec in (("psi", psi), ("xi_star_cr", xi_cr), ("xi_star_test", xi_test)):
        rows += [[name, i, v] for i, v in enumerate(vec)]
    rows += [
        ["sigma", "", sigma],
        ["lambda", "", fixed.lambda_xi(ones, psi, sigma)],
        ["t", "", t],
        ["volume_xi1", "", fixed.cr_volume(ones, sigma, t)],
        ["volume_xi_star", "", fixed.cr_volume(xi_cr, sigma, t)],
        ["volume_ratio", "", fixed.volume_ratio(psi)],
        ["power_xi1", "", fixed.test_power_fixed(ones, eta, sigma, alpha)],
        ["power_xi_star_test", "", fixed.test_power_fixed(xi_test, eta, sigma, alpha)],
    ]
    return rows


FIXED_HEADER = ["quantity", "index", "value"]


def cmd_fixed(args, out: Output) -> int:
    conf = cfg.validate("fixed", cfg.load("fixed", args.config))
    out.table("fixed.csv", FIXED_HEADER, fixed_rows(conf))
    return EXIT_OK


# Orderings are allowed to hold with equality up to rounding (e.g. Sigma = c I).
ORDER_RTOL = 1e-12


def _leq(a: float, b: float) -> bool:
    return a <= b + ORDER_RTOL * max(abs(a), abs(b))


CURVE_COLUMNS = ["epsilon", "pi_g", "pi_fg", "pi_f", "pi_naive", "level_super_naive",
                 "vol_g", "vol_fg", "vol_f"]


def rdp_curve_rows(conf: dict, grid: list[float]) -> tuple[list[list], list[dict]]:
    inputs = cfg.random_inputs(conf)
    model = rdp.CovarianceModel(inputs["covariance"], int(inputs["n"]))
    radii = rdp.privacy_radii(model, inputs["gamma"])
    t = chisq_quantile(model.k, inputs["coverage"])
    vol_f_guaranteed = rdp.whitening_beats_hf_volume(model, inputs["gamma"])
    rows, failures = [], []
    for eps in grid:
        suite = rdp.mechanism_suite(model, rdp.RdpLevel(eps, inputs["delta"], inputs["gamma"]),
                                    radii)
        p = rdp.power_suite(model, suite, inputs["eta"], inputs["alpha"])
        v = rdp.cr_volumes(model, suite, t)
        rows.append([eps, p.g, p.fg, p.f, p.naive, p.level_super_naive, v.g, v.fg, v.f])
        checks = {"pi_g>=pi_fg": _leq(p.fg, p.g), "pi_f>=pi_fg": _leq(p.fg, p.f),
                  "vol_g<=vol_fg": _leq(v.g, v.fg)}
        if vol_f_guaranteed:
            checks["vol_g<=vol_f"] = _leq(v.g, v.f)
        failures += [{"check": name, "epsilon": eps} for name, ok in checks.items() if not ok]
    for col in (1, 2, 3, 4):
        for prev, cur in zip(rows, rows[1:]):
            if not _leq(prev[col], cur[col]):
                failures.append({"check": f"{CURVE_COLUMNS[col]} nondecreasing",
                                 "epsilon": cur[0]})
    return rows, failures


def cmd_rdp_curves(args, out: Output) -> int:
    conf = cfg.validate("rdp-curves", cfg.load("rdp-curves", args.config))
    grid = conf.get("grid", {"start": 0.1, "stop": 3.0, "step": 0.1})
    if args.grid:
        grid = cfg.parse_grid(args.grid)
    rows, failures = rdp_curve_rows(conf, cfg.grid_values(grid))
    out.table("rdp_curves.csv", CURVE_COLUMNS, rows)
    tidy = [[name, row[0], row[j]] for j, name in enumerate(CURVE_COLUMNS) if j
            for row in rows]
    out.table("rdp_curves_plot.csv", ["curve", "epsilon", "value"], tidy)
    return _finish(failures)


SIM_HEADER = ["scenario", "estimand", "check", "empirical", "se", "replications", "analytic",
              "discrepancy", "z", "status"]


def simulate_rows(report: mclab.SimReport) -> list[list]:
    return [[e.scenario, e.name, e.check, e.empirical, e.se, e.replications, e.analytic,
             e.discrepancy, e.z, "PASS" if e.passed else "FAIL"] for e in report.estimates]


def cmd_simulate(args, out: Output) -> int:
    conf = cfg.validate("simulate", cfg.load("simulate", args.config))
    if args.seed is not None:
        conf["seed"] = args.seed
    report = mclab.run_plan(cfg.sim_plan(conf))
    out.table("simulate.csv", SIM_HEADER, simulate_rows(report))
    return _finish([{"scenario": e.scenario, "estimand": e.name, "z": e.z}
                    for e in report.estimates if not e.passed])


def cmd_fixtures(args, out: Output) -> int:
    sigma = fixtures.blood6()
    out.table("blood6.csv", ["variable", *fixtures.BLOOD6_VARIABLES],
              [[name, *row] for name, row in zip(fixtures.BLOOD6_VARIABLES, sigma)])
    out.table("examples.csv", ["example", "eta", "n", "delta", "gamma"],
              [[ex.number, " ".join(fmt(float(v)) for v in ex.eta), ex.n, ex.delta, ex.gamma]
               for ex in fixtures.EXAMPLES.values()])
    out.flush(every_table=True)
    out.tables.clear()
    return EXIT_OK


COMMANDS = {
    "calibrate": cmd_calibrate,
    "fixed": cmd_fixed,
    "rdp-curves": cmd_rdp_curves,
    "simulate": cmd_simulate,
    "fixtures": cmd_fixtures,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dpqt", description="Gaussian-mechanism calibration and query-transformation planning.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--out", help="directory for CSV outputs (default: stdout)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", parents=[common], help="minimal sigma for (eps, delta, D)")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--sensitivity", type=float)
    sub.add_parser("fixed", parents=[common], help="optimal scalings for a fixed dataset")
    p = sub.add_parser("rdp-curves", parents=[common], help="power/volume curves over epsilon")
    p.add_argument("--grid", help="epsilon grid as start:stop:step")
    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo verification")
    p.add_argument("--seed", type=int)
    sub.add_parser("fixtures", parents=[common], help="print the bundled data")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Output(args.out)
    try:
        status = COMMANDS[args.command](args, out)
    except (ConfigError, DomainError, NotSymmetricError, NotPositiveDefiniteError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    out.flush()
    return status


if __name__ == "__main__":
    sys.exit(main())

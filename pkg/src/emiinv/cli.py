"""``emi`` command-line front end.

Subcommands
-----------
forward   readings of a layered model for a device configuration
synth     synthetic surveys (``gaussian``, ``step``, ``pseudo2d``) with noise
invert    1D inversion of every sounding of a survey file
doi       depth of investigation from a result file at a chosen threshold

Exit codes: 0 success, 2 bad input, 3 some sounding did not converge,
4 numerical failure.  ``EMI_THREADS`` sets the number of worker processes
used by ``invert`` (default 1).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .doi import DEFAULT_ETA, doi_depth
from .errors import (ArgumentError, DomainError, EmiError, InversionFailure,
                     NumericalRankError, SingularComponentError)
from .forward import apparent_conductivity, forward_response
from .inversion import (MODE_CHOICES, REG_CHOICES, RULE_CHOICES, STRATEGY_CHOICES,
                        InversionConfig, invert_section)
from .io import (ParseError, Survey, config_hash, load_device, load_model, load_result,
                 load_survey, result_record, save_device, save_result, save_survey,
                 write_csv)
from .model import cmd_explorer, stack, unstack
from .synthdata import (PROFILES, add_noise, discretize_profile, make_pseudo2d_model,
                        pseudo2d_interfaces, snr_db)

log = logging.getLogger("emiinv")

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_CONVERGENCE = 3
EXIT_NUMERICAL = 4

NUMERICAL_ERRORS = (NumericalRankError, DomainError, SingularComponentError,
                    InversionFailure, FloatingPointError, np.linalg.LinAlgError)

# line length of the pseudo-2D section (m)
SECTION_LENGTH = 10.0


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _threads() -> int:
    raw = os.environ.get("EMI_THREADS", "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ArgumentError(f"EMI_THREADS must be an integer, got {raw!r}") from exc
    return max(n, 1)


# -- forward -------------------------------------------------------------------

def cmd_forward(args) -> int:
    model = load_model(args.model)
    device = load_device(args.config)
    readings = forward_response(model, device)
    out = _out_dir(args)
    save_survey(Survey(device, ["0"], readings[None, :]), out / "readings.csv")
    sigma_a = apparent_conductivity(readings, device)
    rows = []
    for i, (lab, v, sa) in enumerate(zip(device.labels(), readings, sigma_a)):
        orient, h, r, f = lab
        rows.append([i, orient, h, r, f, float(v.real), float(v.imag),
                     1e3 * float(v.real), 1e3 * float(v.imag), float(sa)])
    write_csv(out / "readings_view.csv",
              ["index", "orientation", "height", "rho", "freq", "re", "im",
               "in_phase_ppt", "quadrature_ppt", "sigma_a"], rows)
    log.info("wrote %d readings to %s", device.m, out)
    return EXIT_OK


# -- synth ---------------------------------------------------------------------

def synth_survey(experiment: str, delta: float, seed: int, vertical_only: bool = False):
    """Noisy survey, truth models and per-sounding SNR for a named experiment."""
    orient = (0,) if vertical_only else (0, 1)
    device = cmd_explorer(orientations=orient)
    if experiment in PROFILES:
        models = [discretize_profile(PROFILES[experiment])]
        positions = ["0"]
        seeds = [seed]
    elif experiment == "pseudo2d":
        models = make_pseudo2d_model()
        positions = [format(x, ".17g") for x in np.linspace(0.0, SECTION_LENGTH, len(models))]
        seeds = np.random.SeedSequence(seed).spawn(len(models))
    else:
        raise ArgumentError(f"unknown experiment {experiment!r}")
    rows, snrs = [], []
    for model, s in zip(models, seeds):
        b = stack(forward_response(model, device))
        noisy = add_noise(b, delta, s)
        rows.append(unstack(noisy))
        snrs.append(snr_db(b, noisy))
    return Survey(device, positions, np.array(rows)), models, snrs


def cmd_synth(args) -> int:
    survey, models, snrs = synth_survey(args.experiment, args.delta, args.seed, args.vertical_only)
    out = _out_dir(args)
    save_survey(survey, out / "survey.csv")
    save_device(survey.device, out / "device.json")
    rows = []
    for pos, model in zip(survey.positions, models):
        rows += [[pos, z, s] for z, s in zip(model.depths, model.sigma)]
    write_csv(out / "truth.csv", ["position", "depth", "sigma"], rows)
    meta = {"experiment": args.experiment, "delta": args.delta, "seed": args.seed,
            "vertical_only": args.vertical_only, "snr_db": snrs, "version": __version__}
    if args.experiment == "pseudo2d":
        meta["interfaces"] = pseudo2d_interfaces(len(models)).tolist()
    (out / "synth.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
    log.info("wrote %d soundings to %s", len(models), out)
    return EXIT_OK


# -- invert --------------------------------------------------------------------

INVERSION_KEYS = ("reg", "tau", "rule", "ell", "delta", "safety", "forcing", "strategy",
                  "mode", "starts", "n_layers", "depth", "max_iter", "tol_sigma", "tol_r",
                  "beta", "armijo_c", "max_backtracks", "eta")


def inversion_config(args) -> InversionConfig:
    """Options from ``--config`` (key ``inversion`` or top level), overridden by flags."""
    opts = {}
    if args.config:
        try:
            doc = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, args.config, exc.lineno) from exc
        doc = doc.get("inversion", doc) if isinstance(doc, dict) else {}
        unknown = set(doc) - set(INVERSION_KEYS) - {"device"}
        if unknown:
            raise ParseError(f"unknown inversion options {sorted(unknown)}", args.config)
        opts.update({k: v for k, v in doc.items() if k in INVERSION_KEYS})
    flags = {"reg": args.reg, "tau": args.tau, "rule": args.param, "ell": args.ell,
             "delta": args.delta, "mode": args.mode, "eta": args.eta,
             "strategy": args.strategy, "forcing": args.forcing,
             "n_layers": args.layers, "depth": args.depth,
             "starts": tuple(args.starts) if args.starts else None}
    opts.update({k: v for k, v in flags.items() if v is not None})
    if "starts" in opts:
        opts["starts"] = tuple(opts["starts"])
    return InversionConfig(**opts)


def _options_dict(cfg: InversionConfig) -> dict:
    return {k: (list(getattr(cfg, k)) if k == "starts" else getattr(cfg, k))
            for k in INVERSION_KEYS}


def _max_gradient(depths, sigma):
    g = np.abs(np.diff(sigma))
    if not g.size or not np.all(np.isfinite(g)):
        return None, None
    i = int(np.argmax(g))
    return float(g[i]), float(depths[i + 1])


def cmd_invert(args) -> int:
    survey = load_survey(args.survey)
    cfg = inversion_config(args)
    results = invert_section(list(survey.readings), survey.device, cfg, workers=_threads())
    out = _out_dir(args)

    records = [result_record(pos, r) for pos, r in zip(survey.positions, results)]
    options = _options_dict(cfg)
    meta = {
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "version": __version__,
        "seed": args.seed,
        "survey": Path(args.survey).name,
        "device": survey.device.to_dict(),
        "inversion": options,
        "config_hash": config_hash({"device": survey.device.to_dict(), "inversion": options}),
        "active_rows": survey.device.m if cfg.quadrature_only else 2 * survey.device.m,
    }
    save_result(out / "result.json", records, meta)

    sig_rows, doi_rows, hist_rows, summary = [], [], [], []
    for pos, r in zip(survey.positions, results):
        sig_rows += [[pos, z, s] for z, s in zip(r.depths, r.sigma)]
        doi_rows.append([pos, cfg.eta, r.doi])
        for k, rn in enumerate(r.rnorm_history):
            it = r.iterations[k - 1] if k else None
            hist_rows.append([pos, k, it.ell if it else None, it.alpha if it else None, rn])
        gmax, zmax = _max_gradient(r.depths, r.sigma)
        summary.append([pos, r.converged, r.reason, r.misfit, len(r.iterations),
                        r.doi, gmax, zmax])
    write_csv(out / "sigma.csv", ["position", "depth", "sigma"], sig_rows)
    write_csv(out / "doi.csv", ["position", "eta", "doi"], doi_rows)
    write_csv(out / "history.csv", ["position", "iteration", "ell", "alpha", "rnorm"], hist_rows)
    write_csv(out / "summary.csv",
              ["position", "converged", "reason", "misfit", "iterations", "doi",
               "max_gradient", "max_gradient_depth"], summary)

    failed = [pos for pos, r in zip(survey.positions, results) if r.reason == "failed"]
    stuck = [pos for pos, r in zip(survey.positions, results)
             if not r.converged and r.reason != "failed"]
    for pos in failed:
        log.error("sounding %s failed: %s", pos, records[survey.positions.index(pos)]["error"])
    for pos in stuck:
        log.warning("sounding %s did not converge", pos)
    if failed:
        return EXIT_NUMERICAL
    return EXIT_CONVERGENCE if stuck else EXIT_OK


# -- doi -----------------------------------------------------------------------

def cmd_doi(args) -> int:
    doc = load_result(args.result)
    rows = []
    for rec in doc["soundings"]:
        sens = rec.get("sensitivity")
        if sens is None or not np.all(np.isfinite(sens)):
            raise ParseError(f"sounding {rec.get('position')} has no sensitivity data",
                             args.result)
        for eta in args.eta:
            rows.append([rec["position"], eta, doi_depth(sens, rec["depths"], eta)])
    out = _out_dir(args)
    write_csv(out / "doi_table.csv", ["position", "eta", "doi"], rows)
    return EXIT_OK


# -- entry point -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="emi", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--out-dir", default=".", help="output directory (created if needed)")
        sp.add_argument("--seed", type=int, default=0, help="noise seed (recorded in metadata)")

    f = sub.add_parser("forward", help="forward-model a layered earth")
    f.add_argument("--model", required=True, help="CSV with depth,sigma columns")
    f.add_argument("--config", required=True, help="device configuration JSON")
    common(f)
    f.set_defaults(func=cmd_forward)

    s = sub.add_parser("synth", help="generate a synthetic survey")
    s.add_argument("experiment", choices=sorted(PROFILES) + ["pseudo2d"])
    s.add_argument("--delta", type=float, default=1e-3, help="relative noise level")
    s.add_argument("--vertical-only", action="store_true",
                   help="only the vertical coil orientation")
    common(s)
    s.set_defaults(func=cmd_synth)

    i = sub.add_parser("invert", help="invert a survey file")
    i.add_argument("survey")
    i.add_argument("--config", help="JSON file with inversion options")
    i.add_argument("--reg", choices=REG_CHOICES)
    i.add_argument("--tau", type=float, help="MGS focusing parameter")
    i.add_argument("--param", choices=RULE_CHOICES, help="truncation-parameter rule")
    i.add_argument("--ell", type=int, help="truncation parameter for --param fixed")
    i.add_argument("--delta", type=float, help="noise level for --param disc")
    i.add_argument("--mode", choices=MODE_CHOICES)
    i.add_argument("--strategy", choices=STRATEGY_CHOICES)
    i.add_argument("--forcing", type=float)
    i.add_argument("--starts", type=float, nargs="+", help="homogeneous starting models (S/m)")
    i.add_argument("--eta", type=float, help=f"DOI threshold (default {DEFAULT_ETA})")
    i.add_argument("--layers", type=int, help="number of layers")
    i.add_argument("--depth", type=float, help="depth of the deepest layer top grid (m)")
    common(i)
    i.set_defaults(func=cmd_invert)

    d = sub.add_parser("doi", help="depth of investigation from a result file")
    d.add_argument("result")
    d.add_argument("--eta", type=float, nargs="+", default=[DEFAULT_ETA])
    common(d)
    d.set_defaults(func=cmd_doi)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ParseError, ArgumentError, OSError) as exc:
        print(f"emi: error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except NUMERICAL_ERRORS as exc:
        print(f"emi: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except EmiError as exc:
        print(f"emi: error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())

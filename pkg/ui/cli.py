# ui/cli.py
# -*- coding: utf-8 -*-
"""
Batch command line: `movlab <subcommand> --config FILE [flags]`.

Exit codes: 0 ok, 2 configuration or input error, 3 numerical or geometry
failure, 4 acceptance failure in gate mode. Failures also leave a JSON
error record on stderr and in <out>/error.json.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

from domain import CODE_VERSION
from domain.config import RunConfig, load_config
from domain.errors import (
    AcceptanceError,
    ConfigError,
    GeometryError,
    MovlabError,
    NumericalError,
)
from domain.models import StabilityRecord
from services.geometry_service import GeometryService
from services.inverse_service import InverseService
from services.simulation_service import SimulationService
from services.verification_service import VerificationService
from storage.db import Database
from storage.exports import OutputWriter, atomic_write_text, sha256_file
from storage.repos import ArtifactRepo, RunRepo, StabilityRecordRepo
from ui.report_renderer import ReportRenderer

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_ACCEPTANCE = 4

SUBCOMMANDS = ("simulate", "verify-carleman", "verify-ucp", "reconstruct", "stability-sweep", "check-geometry")

_handler: Optional[logging.Handler] = None


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise ConfigError(message)


def setup_logging(verbose: bool = False, quiet: bool = False) -> None:
    global _handler
    root = logging.getLogger()
    if _handler is None:
        _handler = logging.StreamHandler(sys.stderr)
        _handler.setFormatter(logging.Formatter(LOG_FORMAT))
        root.addHandler(_handler)
    root.setLevel(logging.DEBUG if verbose else (logging.WARNING if quiet else logging.INFO))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="movlab", description="Stochastic parabolic equations on moving domains.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    parser.add_argument("--quiet", action="store_true", help="warnings and errors only")
    sub = parser.add_subparsers(dest="subcommand", metavar="SUBCOMMAND", parser_class=_Parser)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="INI run configuration")
        p.add_argument("--seed", type=int, help="base seed of the Brownian ensemble")
        p.add_argument("--samples", type=int, help="number of Brownian paths")
        p.add_argument("--threads", type=int, help="worker threads (0 = available CPUs)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--ledger", help="sqlite run ledger")
        p.add_argument("--gate", action="store_true", help="exit 4 when an acceptance check fails")
    return parser


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, AcceptanceError):
        return EXIT_ACCEPTANCE
    if isinstance(exc, (NumericalError, GeometryError)):
        return EXIT_NUMERICAL
    if isinstance(exc, (MovlabError, ValueError)):
        return EXIT_CONFIG
    return EXIT_NUMERICAL


def error_record(exc: BaseException, subcommand: str) -> Dict[str, str]:
    return {"error": type(exc).__name__, "message": str(exc), "subcommand": subcommand}


def _report_error(exc: BaseException, subcommand: str, out_dir: Optional[str]) -> None:
    text = json.dumps(error_record(exc, subcommand), sort_keys=True)
    sys.stderr.write(text + "\n")
    if not out_dir:
        return
    try:
        atomic_write_text(os.path.join(out_dir, "error.json"), text + "\n")
    except Exception:
        pass


def _progress(msg, total=None) -> None:
    if total is None:
        logger.debug("%s", msg)
    else:
        logger.debug("paths %d/%d", msg, total)


class _Deferred(Exception):
    """Carries an acceptance failure past the summary and ledger steps."""

    def __init__(self, report, error: AcceptanceError, records=()):
        super().__init__(str(error))
        self.report = report
        self.error = error
        self.records = list(records)


# ---- subcommand handlers: (summary, stability records) ----
Handler = Callable[[RunConfig, OutputWriter], Tuple[Mapping[str, object], List[StabilityRecord]]]


def _simulate(cfg: RunConfig, writer: OutputWriter):
    svc = SimulationService(cfg)
    svc.progress_hook = _progress
    result = svc.run()
    svc.write(result, writer)
    return result.report, []


def _check_geometry(cfg: RunConfig, writer: OutputWriter):
    svc = GeometryService(cfg)
    svc.progress_hook = _progress
    checks = svc.checks()
    report = {"passed": all(c.passed for c in checks),
              "failures": [c.name for c in checks if not c.passed],
              "checks": {c.name: c.passed for c in checks}}
    svc.write(checks, writer)
    if not report["passed"] and cfg.output.gate:
        raise _Deferred(report, AcceptanceError("geometry checks failed", report["failures"]))
    return report, []


def _verify_carleman(cfg: RunConfig, writer: OutputWriter):
    svc = VerificationService(cfg)
    svc.progress_hook = _progress
    reports = svc.carleman_sweep()
    worst = min(reports, key=lambda r: r.margin) if reports else None
    summary = {"configurations": len(reports),
               "worst": None if worst is None else {"solution": worst.name, "lambda": worst.lam,
                                                     "margin": worst.margin}}
    return _deferred_write(summary, lambda: svc.write_carleman(reports, writer))


def _verify_ucp(cfg: RunConfig, writer: OutputWriter):
    svc = VerificationService(cfg)
    svc.progress_hook = _progress
    report = svc.ucp()
    summary = {"two_sphere": report["two_sphere"]["fit"], "holdout": report["two_sphere"]["validation"],
               "sucp": {"vanishing_order": report["sucp"]["vanishing_order"],
                        "inconclusive": report["sucp"]["inconclusive"]},
               "cone_chain": {"k_bar": report["cone_chain"]["k_bar"], "nesting": report["cone_chain"]["nesting"]},
               "draws": report["draws"]}
    return _deferred_write(summary, lambda: svc.write_ucp(report, writer))


def _reconstruct(cfg: RunConfig, writer: OutputWriter):
    svc = InverseService(cfg)
    svc.progress_hook = _progress
    fitted, result, extra = svc.reconstruct()
    summary = {"coeffs": list(result.coeffs), "misfit": result.misfit, "evaluations": result.evaluations,
               "flagged": result.flagged}
    summary.update(extra)
    return _deferred_write(summary, lambda: svc.write_reconstruction(fitted, result, extra, writer))


def _stability_sweep(cfg: RunConfig, writer: OutputWriter):
    svc = InverseService(cfg)
    svc.progress_hook = _progress
    outcome = svc.stability()
    fit = outcome.fit
    summary = {"records": len(outcome.records), "excluded": len(outcome.excluded),
               "fit": None if fit is None else {"q": fit.q, "q_lower95": fit.q_lower95, "A": fit.A,
                                                "significant": fit.significant}}
    try:
        svc.write_stability(outcome, writer)
    except AcceptanceError as exc:
        raise _Deferred(summary, exc, outcome.records) from exc
    return summary, outcome.records


def _deferred_write(summary, write: Callable[[], List[str]]):
    try:
        write()
    except AcceptanceError as exc:
        raise _Deferred(summary, exc) from exc
    return summary, []


HANDLERS: Dict[str, Handler] = {
    "simulate": _simulate,
    "verify-carleman": _verify_carleman,
    "verify-ucp": _verify_ucp,
    "reconstruct": _reconstruct,
    "stability-sweep": _stability_sweep,
    "check-geometry": _check_geometry,
}


def _ledger_open(path: str) -> Tuple[Database, RunRepo]:
    db = Database(db_path=path)
    db.init_schema()
    return db, RunRepo(db)


def dispatch(argv: Sequence[str], env: Optional[Mapping[str, str]] = None) -> int:
    subcommand = ""
    out_dir: Optional[str] = None
    try:
        args = build_parser().parse_args(list(argv))
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except ConfigError as exc:
        _report_error(exc, subcommand, None)
        return EXIT_CONFIG
    setup_logging(args.verbose, args.quiet)
    subcommand = args.subcommand or ""
    out_dir = getattr(args, "out", None)
    if not subcommand:
        _report_error(ConfigError(f"missing subcommand; choose one of {', '.join(SUBCOMMANDS)}"), "", None)
        return EXIT_CONFIG

    db: Optional[Database] = None
    runs: Optional[RunRepo] = None
    run_id = ""
    try:
        cfg = load_config(args.config, env=env).with_overrides(
            seed=args.seed, samples=args.samples, threads=args.threads, out=args.out, ledger=args.ledger)
        if args.gate:
            cfg = replace(cfg, output=replace(cfg.output, gate=True))
        out_dir = cfg.output.out
        provenance = cfg.provenance(CODE_VERSION)
        writer = OutputWriter(out_dir, provenance)
        if cfg.output.ledger:
            db, runs = _ledger_open(cfg.output.ledger)
            run_id = runs.start(subcommand, cfg.config_hash, cfg.ensemble.seed, CODE_VERSION).id
        logger.info("%s: config %s (hash %s), seed %d, %d paths", subcommand, cfg.source,
                    cfg.config_hash[:12], cfg.ensemble.seed, cfg.ensemble.samples)

        pending: Optional[AcceptanceError] = None
        records = []
        try:
            report, records = HANDLERS[subcommand](cfg, writer)
        except _Deferred as d:
            report, pending, records = d.report, d.error, d.records
            report = dict(report)
            report["passed"] = False
            report["failures"] = d.error.failures

        renderer = ReportRenderer()
        files = [p for p, _ in writer.written]
        md = renderer.summary_markdown(subcommand, provenance, report, files)
        writer.text("summary.html", renderer.to_html(md), kind="html")

        if db is not None:
            artifacts = ArtifactRepo(db)
            for path, kind in writer.written:
                artifacts.add(run_id, os.path.basename(path), kind, sha256_file(path))
            if records:
                StabilityRecordRepo(db).add_many(run_id, records)
        if pending is not None:
            raise pending
        if runs is not None:
            runs.finish(run_id, EXIT_OK)
        logger.info("%s: wrote %d file(s) to %s", subcommand, len(writer.written), out_dir)
        return EXIT_OK
    except Exception as exc:
        code = exit_code_for(exc)
        if code == EXIT_NUMERICAL and not isinstance(exc, MovlabError):
            logger.exception("%s failed", subcommand)
        else:
            logger.error("%s failed: %s", subcommand, exc)
        _report_error(exc, subcommand, out_dir)
        if runs is not None:
            try:
                runs.finish(run_id, code, str(exc))
            except Exception:
                pass
        return code
    finally:
        if db is not None:
            db.close()


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))

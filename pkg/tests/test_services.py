# tests/test_services.py
# -*- coding: utf-8 -*-

from __future__ import annotations

import json
import os
from dataclasses import replace

import pytest

from domain.config import loads_config
from domain.errors import AcceptanceError, ConfigError
from services.inverse_service import InverseService, SweepOutcome
from services.verification_service import VerificationService
from storage.exports import OutputWriter
from tests.helpers import small_config_text


def _cfg(tmp_path, experiment: str = "", **kw):
    return loads_config(small_config_text(out=str(tmp_path / "out"), experiment=experiment, **kw))


def _writer(cfg) -> OutputWriter:
    return OutputWriter(cfg.output.out, cfg.provenance("test"))


def test_progress_hook_errors_are_swallowed(tmp_path):
    svc = VerificationService(_cfg(tmp_path))
    seen = []
    svc.progress_hook = seen.append
    svc._progress("one")
    svc.progress_hook = lambda msg: 1 / 0
    svc._progress("two")
    assert seen == ["one"]


def test_corpus_selection(tmp_path):
    assert len(VerificationService(_cfg(tmp_path)).corpus_members()) == 6
    picked = VerificationService(_cfg(tmp_path, "corpus = eigenmode, forced_mode")).corpus_members()
    assert [m.name for m in picked][1] == "forced_mode"
    with pytest.raises(ConfigError):
        VerificationService(_cfg(tmp_path, "corpus = soliton")).corpus_members()


def test_sigma_summary(tmp_path):
    s = VerificationService(_cfg(tmp_path)).sigma_summary()
    assert s["bounds_hold"]
    assert s["C0"] > 0
    assert s["lambda_threshold"] >= 0.5


def test_random_draws_have_no_failures(tmp_path):
    svc = VerificationService(_cfg(tmp_path, "iteration_draws = 50\ncone_draws = 20"))
    draws = svc.random_draws()
    assert draws["iteration_draws"] == 50 and draws["cone_draws"] == 20
    assert draws["iteration_failures"] == 0
    assert draws["cone_failures"] == 0


def test_empty_carleman_sweep_writes_reports(tmp_path):
    cfg = _cfg(tmp_path)
    paths = VerificationService(cfg).write_carleman([], _writer(cfg))
    assert [os.path.basename(p) for p in paths] == ["carleman.json", "carleman.csv"]
    with open(paths[0], encoding="utf-8") as fh:
        report = json.load(fh)
    assert report["passed"] and report["terms"] == []


def test_inverse_defaults_follow_the_domain(tmp_path):
    svc = InverseService(_cfg(tmp_path))
    p = svc.parametrization()
    assert p.kind == "endpoint"
    assert p.basis == ("linear",)
    assert p.lower == (-0.2,) and p.upper == (0.2,)
    w = svc.window()
    assert w.lo == (0.1,) and w.hi == (0.3,)


def test_inverse_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        InverseService(_cfg(tmp_path, "boundary_basis = wobble")).parametrization()
    with pytest.raises(ConfigError):
        InverseService(_cfg(tmp_path, "window_lo = 0.1, 0.1")).window()
    with pytest.raises(ConfigError):
        InverseService(_cfg(tmp_path, "boundary_truth = 0.5")).reconstruct()


def test_stability_gate_needs_a_fit(tmp_path):
    cfg = _cfg(tmp_path)
    cfg = replace(cfg, output=replace(cfg.output, gate=True))
    outcome = SweepOutcome(records=[], excluded=[], fit=None, fit_error="too few records")
    with pytest.raises(AcceptanceError):
        InverseService(cfg).write_stability(outcome, _writer(cfg))
    assert os.path.exists(os.path.join(cfg.output.out, "stability_fit.json"))


@pytest.mark.slow
def test_random_draws_default_counts(tmp_path):
    draws = VerificationService(_cfg(tmp_path)).random_draws()
    assert draws["iteration_draws"] == 10000 and draws["cone_draws"] == 1000
    assert draws["iteration_failures"] == 0
    assert draws["cone_failures"] == 0


def test_log_law_sweep_fits_and_holds_out(tmp_path):
    svc = VerificationService(_cfg(tmp_path))
    sweep = svc.log_law_sweep(0.5, 0.2, 0.5, (1.0, 0.3, 0.1, 0.03, 0.01, 0.003))
    assert len(sweep["sigmas"]) == 6
    assert sweep["sigmas"] == sorted(sweep["sigmas"], reverse=True)
    assert sweep["C"] == 1.0
    assert sweep["holdout_passed"] is True
    assert all(m <= b for m, b in zip(sweep["measured"], sweep["bounds"]))


def test_log_law_sweep_without_signal(tmp_path):
    svc = VerificationService(_cfg(tmp_path))
    sweep = svc.log_law_sweep(0.0, 0.0, 0.5, (1.0, 0.1))
    assert sweep["C"] is None and sweep["holdout_passed"] is None


def test_domain_difference_has_a_positive_interior_floor(tmp_path):
    svc = InverseService(_cfg(tmp_path))
    out = svc.domain_difference(svc.parametrization(), (1.0,), (0.1, 0.2), svc.model(), svc.window())
    assert out["records"]
    assert out["lower_positive"]
    for rec in out["records"]:
        assert rec["rho_bar"] > 0
        assert rec["lower"] > 0
        assert 0 < rec["z"][0] < 1.0

# tests/test_config.py
# -*- coding: utf-8 -*-

from __future__ import annotations

import math
import os

import pytest

from domain.config import RunConfig, load_config, loads_config
from domain.errors import ConfigError
from services.simulation_service import (
    build_domain,
    build_motion,
    coefficient_forms,
    parse_harmonics,
    time_grid,
)
from tests.helpers import CONFIG_DIR, small_config_text, write_config


def test_defaults_fill_missing_sections():
    cfg = loads_config("[domain]\nreference = interval\n")
    assert cfg.grid.theta == 0.5
    assert cfg.ensemble.samples == 100
    assert cfg.coefficients.kappa0 == pytest.approx(math.e)
    assert cfg.domain.dim == 1


def test_small_config(small_cfg):
    assert small_cfg.grid.cells == 16
    assert small_cfg.ensemble.seed == 5
    assert small_cfg.ensemble.workers == 1
    assert time_grid(small_cfg).size == 33
    assert coefficient_forms(small_cfg.coefficients)["c1"] == {"name": "constant", "params": {"value": 0.3}}


def test_unknown_section_is_rejected():
    with pytest.raises(ConfigError):
        loads_config("[domian]\nreference = interval\n")


@pytest.mark.parametrize("text", [
    "[grid]\ntheta = 0.7\n",
    "[grid]\ncells = 2\n",
    "[grid]\nsteps = 10\nstride = 20\n",
    "[ensemble]\nsamples = 0\n",
    "[domain]\nreference = torus\n",
    "[domain]\nalpha = 1.2\n",
    "[domain]\neta1 = 0.5\n",
    "[coefficients]\nkappa0 = 2\n",
    "[output]\ngate = maybe\n",
    "[grid\ncells = 8\n",
])
def test_invalid_values_raise_config_error(text):
    with pytest.raises(ConfigError):
        loads_config(text)


def test_env_override_changes_hash(tmp_path):
    base = loads_config(small_config_text(out=str(tmp_path)))
    bumped = loads_config(small_config_text(out=str(tmp_path)), env={"MOVLAB_GRID__CELLS": "32"})
    assert bumped.grid.cells == 32
    assert bumped.config_hash != base.config_hash


def test_env_override_needs_known_section():
    with pytest.raises(ConfigError):
        loads_config(small_config_text(), env={"MOVLAB_SOLVER__CELLS": "32"})


def test_threads_and_out_do_not_change_hash(small_cfg):
    other = small_cfg.with_overrides(threads=8, out="/tmp/elsewhere")
    assert other.ensemble.threads == 8
    assert other.output.out == "/tmp/elsewhere"
    assert other.config_hash == small_cfg.config_hash
    assert small_cfg.with_overrides(seed=6).config_hash != small_cfg.config_hash


def test_seed_override_range(small_cfg):
    with pytest.raises(ConfigError):
        small_cfg.with_overrides(seed=-1)
    with pytest.raises(ConfigError):
        small_cfg.with_overrides(seed=2 ** 64)
    with pytest.raises(ConfigError):
        small_cfg.with_overrides(samples=0)


def test_provenance_fields(small_cfg):
    prov = small_cfg.provenance("1.2.3")
    assert prov["config_hash"] == small_cfg.config_hash
    assert prov["seed"] == 5
    assert prov["grid"] == "cells=16,steps=32,stride=8"
    assert prov["code_version"] == "1.2.3"


def test_experiment_accessors():
    cfg = loads_config(small_config_text(experiment="radii = 0.2, 0.1\nsearch = grid\ncheck = yes\nnt = 17"))
    ex = cfg.experiment
    assert ex.numbers("radii") == (0.2, 0.1)
    assert ex.text("search") == "grid"
    assert ex.flag("check")
    assert ex.integer("nt", 3) == 17
    assert ex.number("missing", 1.5) == 1.5
    assert ex.words("missing", ("a",)) == ("a",)
    assert not ex.has("missing")
    with pytest.raises(ConfigError):
        loads_config(small_config_text(experiment="nt = many")).experiment.integer("nt", 3)


def test_motion_must_match_reference():
    with pytest.raises(ConfigError):
        loads_config("[domain]\nreference = disk\nmotion = endpoint linear=0.1\n")
    with pytest.raises(ConfigError):
        loads_config("[domain]\nreference = interval\nmotion = radial cos2=0.1\n")


def test_endpoint_motion_builds_interval_family():
    cfg = loads_config(small_config_text(motion="endpoint linear=0.2"))
    dom = build_domain(cfg.domain)
    assert not dom.is_static
    assert dom.tau(1.0, [[1.0]])[0, 0] == pytest.approx(1.2)
    with pytest.raises(ConfigError):
        build_motion(loads_config(small_config_text(motion="endpoint wobble=0.2")).domain)


def test_parse_harmonics():
    assert parse_harmonics("3:0.1:0, 5:0:0.05") == ((3, 0.1, 0.0), (5, 0.0, 0.05))
    assert parse_harmonics("") == ()
    with pytest.raises(ConfigError):
        parse_harmonics("0:0.1")
    with pytest.raises(ConfigError):
        parse_harmonics("3")


def test_missing_file_raises(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "absent.cfg"), env={})


def test_load_from_file(tmp_path):
    path = write_config(tmp_path, small_config_text(out=str(tmp_path / "out")))
    cfg = load_config(path, env={"MOVLAB_ENSEMBLE__SAMPLES": "3"})
    assert isinstance(cfg, RunConfig)
    assert cfg.source == path
    assert cfg.ensemble.samples == 3


@pytest.mark.parametrize("name", ["interval_1d.cfg", "star_2d.cfg"])
def test_bundled_configs_build(name):
    cfg = load_config(os.path.join(CONFIG_DIR, name), env={})
    dom = build_domain(cfg.domain)
    assert dom.dim == cfg.domain.dim
    assert set(coefficient_forms(cfg.coefficients)) == {"a1", "b1", "c1", "f", "u0"}

# tests/helpers.py
# -*- coding: utf-8 -*-

from __future__ import annotations

import math
import os

from core.motion import MovingDomain
from core.solver import SPDECoefficients

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CONFIG_DIR = os.path.join(ROOT, "configs")

SMALL_INTERVAL = """
[domain]
reference = interval
length = 1.0
motion = {motion}
horizon = 1.0
{domain_extra}

[coefficients]
c1 = constant value=0.3
f = constant value=1
u0 = ramp value=1 length=1
f_bound = {f_bound}

[grid]
cells = 16
steps = 32
stride = 8

[ensemble]
seed = 5
samples = 6
threads = 1

[experiment]
{experiment}

[output]
out = {out}
"""


def small_config_text(out: str = "movlab-out", motion: str = "identity", experiment: str = "",
                      domain_extra: str = "", f_bound: float = 1.0) -> str:
    return SMALL_INTERVAL.format(out=out, motion=motion, experiment=experiment,
                                 domain_extra=domain_extra, f_bound=f_bound)


def write_config(tmp_path, text: str, name: str = "run.cfg") -> str:
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def form(name: str, **params) -> dict:
    return {"name": name, "params": params}


def coefficients(domain: MovingDomain, F: float = 1.0, **forms) -> SPDECoefficients:
    return SPDECoefficients.from_forms(forms, domain, F=F, kappa0=math.e, spacing=0.05)

"""Plain-text experiment configuration.

One INI file per run, sections mirroring the module names::

    [kernel]
    form = indicator          ; or fractional
    dimension = 2
    radius = 1.0              ; indicator cutoff
    ; s = 0.5  lam = 1.0  Lam = 1.0   (fractional)

    [domain]
    shape = ball              ; or box
    center = 0 0
    radius = 1.0
    margin = 1.0              ; bounding box = shape bounds +- margin
    ; or explicit bounding_lo / bounding_hi

    [grid]
    h = 0.015625

    [task]
    name = energy             ; energy | minimize | calibrate | gamma
    field = halfspace:0,1:0
    datum = halfspace:0,1:0

    [output]
    directory = out

Dotted overrides (``--set section.key=value``) are applied before parsing.
Field sources: ``halfspace:NX,NY[:OFFSET]``, ``const:VALUE`` (interior value;
needs a datum), ``csv:PATH``. Radial-profile and custom kernels need Python
handles and are not configurable from files.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .calibration import Calibration, halfspace_sign
from .errors import ValidationError
from .grid import (
    DomainSpec,
    Grid,
    ScalarField,
    constant_field,
    domain_ball,
    domain_box,
    field_from_values,
    indicator_halfspace,
    load_field_values,
    make_grid,
)
from .gamma import halfspace_facet_in_ball
from .kernels import KernelSpec, fractional_kernel, indicator_kernel

_TASKS = ("energy", "minimize", "calibrate", "gamma")


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    kernel: KernelSpec
    domain: DomainSpec
    grid: Grid
    task: str
    task_params: dict
    outdir: Path
    raw_text: str = field(repr=False, default="")


def _floats(text: str) -> list:
    return [float(v) for v in text.replace(",", " ").split()]


def _parse_kernel(sec) -> KernelSpec:
    form = sec.get("form", fallback=None)
    if form is None:
        raise ValidationError("[kernel] section requires a 'form' key")
    d = sec.getint("dimension", fallback=0)
    if d < 1:
        raise ValidationError("[kernel] requires dimension >= 1")
    if form == "indicator":
        radius = sec.getfloat("radius", fallback=None)
        if radius is None:
            raise ValidationError("indicator kernel requires 'radius'")
        return indicator_kernel(d, radius)
    if form == "fractional":
        s = sec.getfloat("s", fallback=None)
        if s is None:
            raise ValidationError("fractional kernel requires 's'")
        lam = sec.getfloat("lam", fallback=1.0)
        big = sec.getfloat("Lam", fallback=lam)
        return fractional_kernel(d, s, lam=lam, Lam=big)
    raise ValidationError(
        f"kernel form {form!r} is not configurable from files (use 'indicator' or 'fractional')"
    )


def _parse_domain(sec, dimension: int) -> DomainSpec:
    shape = sec.get("shape", fallback=None)
    if shape not in ("ball", "box"):
        raise ValidationError("[domain] requires shape = ball | box")
    margin = sec.getfloat("margin", fallback=None)
    blo = sec.get("bounding_lo", fallback=None)
    bhi = sec.get("bounding_hi", fallback=None)
    if shape == "ball":
        center = _floats(sec.get("center", fallback="0"))
        radius = sec.getfloat("radius", fallback=None)
        if radius is None:
            raise ValidationError("ball domain requires 'radius'")
        if len(center) != dimension:
            raise ValidationError("domain center dimension must match the kernel dimension")
        if margin is not None:
            return domain_ball(center, radius, margin)
        if blo is None or bhi is None:
            raise ValidationError("domain needs either 'margin' or explicit bounding_lo/bounding_hi")
        from .grid import Ball

        return DomainSpec(Ball(tuple(center), radius), tuple(_floats(blo)), tuple(_floats(bhi)))
    lo = _floats(sec.get("lo", fallback=""))
    hi = _floats(sec.get("hi", fallback=""))
    if len(lo) != dimension or len(hi) != dimension:
        raise ValidationError("box domain requires 'lo' and 'hi' matching the dimension")
    if margin is not None:
        return domain_box(lo, hi, margin)
    if blo is None or bhi is None:
        raise ValidationError("domain needs either 'margin' or explicit bounding_lo/bounding_hi")
    from .grid import Box

    return DomainSpec(Box(tuple(lo), tuple(hi)), tuple(_floats(blo)), tuple(_floats(bhi)))


def parse_source(spec: str, grid: Grid, datum: Optional[ScalarField] = None,
                 base_dir: Optional[Path] = None) -> ScalarField:
    """Build a field from a source spec: halfspace:..., const:..., csv:..."""
    parts = spec.split(":")
    kind = parts[0]
    if kind == "halfspace":
        if len(parts) < 2:
            raise ValidationError("halfspace source needs a normal, e.g. halfspace:0,1:0")
        normal = _floats(parts[1])
        offset = float(parts[2]) if len(parts) > 2 else 0.0
        return indicator_halfspace(grid, normal, offset)
    if kind == "const":
        if datum is None:
            raise ValidationError("const source needs a datum for the exterior cells")
        return constant_field(grid, float(parts[1]), datum.datum)
    if kind == "csv":
        path = Path(":".join(parts[1:]))
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        if not path.exists():
            raise ValidationError(f"field CSV not found: {path}")
        values = load_field_values(grid, path)
        if datum is None:
            return field_from_values(grid, values, values.copy())
        return field_from_values(grid, values, datum.datum)
    raise ValidationError(f"unknown field source {spec!r}")


def parse_calibration(spec: str) -> Calibration:
    parts = spec.split(":")
    if parts[0] == "halfspace_sign":
        if len(parts) < 2:
            raise ValidationError("halfspace_sign needs a normal, e.g. halfspace_sign:0,1")
        return halfspace_sign(_floats(parts[1]))
    if parts[0] == "plugin":
        if len(parts) < 3:
            raise ValidationError("plugin calibration spec is plugin:module:attribute")
        import importlib

        try:
            mod = importlib.import_module(parts[1])
        except ImportError as exc:
            raise ValidationError(f"cannot import calibration plugin module {parts[1]!r}: {exc}")
        obj = getattr(mod, parts[2], None)
        if obj is None:
            raise ValidationError(f"calibration plugin {parts[1]}:{parts[2]} not found")
        cal = obj() if callable(obj) and not isinstance(obj, Calibration) else obj
        if not isinstance(cal, Calibration):
            raise ValidationError("calibration plugin must provide a Calibration instance")
        return cal
    raise ValidationError(f"unknown calibration {spec!r}")


def parse_facets(spec: str, cfg_domain: DomainSpec, set_spec: str, dimension: int) -> list:
    """Facet list for the limit-energy reference: 'auto' or 'n1,n2:area;...'."""
    if spec == "auto":
        parts = set_spec.split(":")
        if parts[0] != "halfspace":
            raise ValidationError("facets = auto requires a halfspace set source")
        normal = np.asarray(_floats(parts[1]))
        offset = float(parts[2]) if len(parts) > 2 else 0.0
        shape = cfg_domain.shape
        from .grid import Ball, Box

        if isinstance(shape, Ball):
            return [halfspace_facet_in_ball(normal, offset - float(np.dot(shape.center, normal)),
                                            shape.radius, dimension)]
        if isinstance(shape, Box):
            axis = int(np.argmax(np.abs(normal)))
            if abs(abs(normal[axis]) - 1.0) > 1e-12:
                raise ValidationError("facets = auto over a box needs an axis-aligned halfspace")
            if not (shape.lo[axis] < offset * normal[axis] < shape.hi[axis]):
                raise ValidationError("the hyperplane must cut through the box")
            area = 1.0
            for ax in range(dimension):
                if ax != axis:
                    area *= shape.hi[ax] - shape.lo[ax]
            return [(tuple(normal), area)]
        raise ValidationError("facets = auto is limited to ball and box domains")
    facets = []
    for item in spec.split(";"):
        body = item.strip()
        if not body:
            continue
        normal_txt, area_txt = body.rsplit(":", 1)
        facets.append((tuple(_floats(normal_txt)), float(area_txt)))
    if not facets:
        raise ValidationError("empty facet list")
    return facets


def load_config(path, overrides: Optional[list] = None) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    text = path.read_text()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ValidationError(f"config does not parse: {exc}")

    for ov in overrides or []:
        if "=" not in ov or "." not in ov.split("=", 1)[0]:
            raise ValidationError(f"override must look like section.key=value, got {ov!r}")
        key, value = ov.split("=", 1)
        section, name = key.split(".", 1)
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section.strip(), name.strip(), value.strip())

    for required in ("kernel", "domain", "grid", "task"):
        if not parser.has_section(required):
            raise ValidationError(f"config is missing the [{required}] section")

    kernel = _parse_kernel(parser["kernel"])
    dom = _parse_domain(parser["domain"], kernel.dimension)
    h = parser["grid"].getfloat("h", fallback=None)
    if h is None:
        raise ValidationError("[grid] requires 'h'")
    grid = make_grid(dom, h)

    task_sec = parser["task"]
    task = task_sec.get("name", fallback=None)
    if task not in _TASKS:
        raise ValidationError(f"[task] name must be one of {_TASKS}, got {task!r}")
    params = {key: task_sec.get(key) for key in task_sec.keys() if key != "name"}

    outdir = Path(parser.get("output", "directory", fallback="out"))
    if not outdir.is_absolute():
        outdir = path.parent / outdir

    # normalized text for the manifest hash: the effective (post-override) config
    effective = []
    for section in sorted(parser.sections()):
        effective.append(f"[{section}]")
        for key in sorted(parser[section]):
            effective.append(f"{key} = {parser[section][key]}")
    return ExperimentConfig(
        kernel=kernel,
        domain=dom,
        grid=grid,
        task=task,
        task_params=params,
        outdir=outdir,
        raw_text="\n".join(effective),
    )

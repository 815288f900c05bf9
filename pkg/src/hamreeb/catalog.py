"""Built-in named surfaces, fields and area forms."""

from __future__ import annotations

import numpy as np

from .fields import CIRCLE, ScalarField, polynomial_field
from .surface import AreaForm, SurfaceModel, make_area_form, make_model_surface

TWOPI = 2 * np.pi

# ((x+1)^2 + y^2)((x-1)^2 + y^2) expanded
TWOWELL_TERMS = [(4, 0, 1.0), (2, 2, 2.0), (0, 4, 1.0), (2, 0, -2.0), (0, 2, 2.0), (0, 0, 1.0)]


def _torus_height(ky=2.0):
    # unequal weights put the two saddles on different levels
    def val(x, y):
        return np.cos(TWOPI * x) + ky * np.cos(TWOPI * y)

    def grad(x, y):
        return np.stack([-TWOPI * np.sin(TWOPI * x), -ky * TWOPI * np.sin(TWOPI * y)], axis=-1)

    def hess(x, y):
        z = np.zeros_like(np.asarray(x, dtype=float))
        hxx = -TWOPI**2 * np.cos(TWOPI * x)
        hyy = -ky * TWOPI**2 * np.cos(TWOPI * y)
        return np.stack([np.stack([hxx, z], -1), np.stack([z, hyy], -1)], -2)

    return ScalarField("torus-height", {0: val}, {0: grad}, {0: hess}, spec={"name": "torus-height"})


def _torus_angle():
    def val(x, y):
        return np.asarray(x, dtype=float) + 0.0 * np.asarray(y, dtype=float)

    def grad(x, y):
        x = np.asarray(x, dtype=float)
        return np.stack([np.ones_like(x), np.zeros_like(x)], axis=-1)

    def hess(x, y):
        return np.zeros(np.shape(x) + (2, 2))

    return ScalarField("torus-angle", {0: val}, {0: grad}, {0: hess}, codomain=CIRCLE, period=1.0,
                       spec={"name": "torus-angle"})


def _sphere_height():
    # Z as a function of s = |p|^2 in each stereographic chart
    def make(sign):
        def val(x, y):
            s = np.asarray(x) ** 2 + np.asarray(y) ** 2
            return sign * (s - 1) / (s + 1)

        def grad(x, y):
            s = np.asarray(x) ** 2 + np.asarray(y) ** 2
            d = sign * 2.0 / (s + 1) ** 2
            return np.stack([2 * d * x, 2 * d * y], axis=-1)

        def hess(x, y):
            x = np.asarray(x, dtype=float)
            y = np.asarray(y, dtype=float)
            s = x * x + y * y
            d1 = sign * 2.0 / (s + 1) ** 2
            d2 = sign * -4.0 / (s + 1) ** 3
            hxx = 2 * d1 + 4 * d2 * x * x
            hxy = 4 * d2 * x * y
            hyy = 2 * d1 + 4 * d2 * y * y
            return np.stack([np.stack([hxx, hxy], -1), np.stack([hxy, hyy], -1)], -2)

        return val, grad, hess

    v0, g0, h0 = make(1.0)
    v1, g1, h1 = make(-1.0)
    return ScalarField("sphere-height", {0: v0, 1: v1}, {0: g0, 1: g1}, {0: h0, 1: h1},
                       spec={"name": "sphere-height"})


def _angular():
    # height on the cylinder; its Hamiltonian flow runs around the S^1 factor
    f = polynomial_field([(0, 1, -1.0)], "angular")
    return ScalarField("angular", f.values, f.grads, f.hessians, spec={"name": "angular"})


def _named_poly(name, terms):
    f = polynomial_field(terms, name)
    return ScalarField(name, f.values, f.grads, f.hessians, spec={"name": name})


FIELDS = {
    "r2": lambda: _named_poly("r2", [(2, 0, 1.0), (0, 2, 1.0)]),
    "r4": lambda: _named_poly("r4", [(4, 0, 1.0), (2, 2, 2.0), (0, 4, 1.0)]),
    "twowell": lambda: _named_poly("twowell", TWOWELL_TERMS),
    "angular": _angular,
    "torus-height": _torus_height,
    "torus-angle": _torus_angle,
    "sphere-height": _sphere_height,
    "x": lambda: _named_poly("x", [(1, 0, 1.0)]),
    "y": lambda: _named_poly("y", [(0, 1, 1.0)]),
    "xy": lambda: _named_poly("xy", [(1, 1, 1.0)]),
    "monkey": lambda: _named_poly("monkey", [(3, 0, 1.0), (1, 2, -3.0)]),
}

SURFACES = ("disk", "annulus", "torus", "sphere", "twowell-domain")

DEFAULT_FIELD = {
    "disk": "r2",
    "annulus": "angular",
    "torus": "torus-height",
    "sphere": "sphere-height",
    "twowell-domain": "twowell",
}


def named_field(name: str) -> ScalarField:
    try:
        return FIELDS[name]()
    except KeyError:
        raise ValueError(f"unknown field {name!r}; known: {sorted(FIELDS)}") from None


SURFACE_ALIASES = {"twowell": "twowell-domain"}


def canonical_surface_name(name: str) -> str:
    return SURFACE_ALIASES.get(name, name)


def named_surface(name: str) -> SurfaceModel:
    name = canonical_surface_name(name)
    if name == "disk":
        return make_model_surface("disk", radius=1.0)
    if name == "annulus":
        return make_model_surface("annulus", period=1.0, height=1.0)
    if name == "torus":
        return make_model_surface("torus", periods=(1.0, 1.0))
    if name == "sphere":
        return make_model_surface("sphere")
    if name == "twowell-domain":
        return make_model_surface("sublevel", g=named_field("twowell"), c=2.0)
    raise ValueError(f"unknown surface {name!r}; known: {list(SURFACES)}")


def named_form(surface: SurfaceModel, name: str) -> AreaForm:
    """``standard``, ``tilted`` (1 + x/2), ``quadratic`` (1 + x^2/2), ``radial-bump``,
    or ``const:<value>``."""
    if name.startswith("const:"):
        return make_area_form(surface, "const", value=float(name.split(":", 1)[1]))
    if name == "tilted":
        return make_area_form(surface, "tilted", slope=0.5)
    if name == "quadratic":
        return make_area_form(surface, "quadratic", coef=0.5)
    return make_area_form(surface, name)

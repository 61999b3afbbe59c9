"""Parametric adversarial attacks: cost, chain-rule steps and the attack loop.

All attacks minimize::

    C = -CE(f(I), L_d) + CE(f(I), L_i) = log f_d - log f_i

by plain gradient descent in a physical parameter space (lighting
coefficients, vertex positions or skylight parameters), followed by an L-inf
projection onto the parametric norm ball around the starting parameters.
The L_i term is dropped for untargeted attacks.

A classifier handle is any object with ``evaluate(image, label, target)``
returning ``(probabilities, dC_dI)``; see :mod:`paramball.classifier`.
"""

import json
import logging
from dataclasses import dataclass, field
from math import inf, pi

import numpy as np

from . import lighting, shading
from .errors import AttackError, InvalidDistributionError
from .mesh import degenerate_faces, face_normals
from .raster import rasterize

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-12
SPACES = ("lighting", "geometry", "skylight")


# ---------------------------------------------------------------------------
# Cost


def check_distribution(probs, atol=1e-6):
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 1 or len(probs) < 1:
        raise InvalidDistributionError("probabilities must be a non-empty vector")
    if not np.all(np.isfinite(probs)) or np.any(probs < 0):
        raise InvalidDistributionError("probabilities must be finite and non-negative")
    if abs(probs.sum() - 1.0) > atol:
        raise InvalidDistributionError(f"probabilities sum to {probs.sum():.9g}, not 1")
    return probs


def _check_label(label, k, name):
    if label is not None and not 0 <= int(label) < k:
        raise InvalidDistributionError(f"{name}={label} outside [0, {k})")


def cost(probs, label, target=None):
    """``-CE(f, label) + CE(f, target)``, probabilities floored at 1e-12."""
    probs = check_distribution(probs)
    _check_label(label, len(probs), "label")
    _check_label(target, len(probs), "target")
    c = np.log(max(probs[label], PROB_FLOOR))
    if target is not None:
        c -= np.log(max(probs[target], PROB_FLOOR))
    return float(c)


def cost_logit_grad(probs, label, target=None):
    """dC/dz for softmax logits z, consistent with the floored :func:`cost`."""
    probs = np.asarray(probs, dtype=float)
    g = np.zeros_like(probs)
    if probs[label] > PROB_FLOOR:
        g -= probs
        g[label] += 1.0
    if target is not None and probs[target] > PROB_FLOOR:
        g += probs
        g[target] -= 1.0
    return g


def is_fooled(probs, label, target=None):
    top = int(np.argmax(probs))
    return top == target if target is not None else top != label


# ---------------------------------------------------------------------------
# Projection and single steps


def project_norm_ball(current, initial, eps):
    """Clamp ``current - initial`` componentwise to [-eps, eps]."""
    current = np.asarray(current, dtype=float)
    initial = np.asarray(initial, dtype=float)
    if current.shape != initial.shape:
        raise ValueError(f"shape mismatch {current.shape} vs {initial.shape}")
    if eps == inf:
        return current.copy()
    if eps < 0:
        raise ValueError("eps must be non-negative")
    return initial + np.clip(current - initial, -eps, eps)


def _check_grad_shape(frags, dC_dI):
    dC_dI = np.asarray(dC_dI, dtype=float)
    if dC_dI.shape != frags.shape + (3,):
        raise ValueError(f"dC_dI has shape {dC_dI.shape}, image is {frags.shape + (3,)}")
    return dC_dI


def lighting_gradient(frags, normals, albedo, dC_dI, bands=lighting.DEFAULT_BANDS):
    """dC/dU = (dC/dI)(dI/dU), shape (K, 3)."""
    dC_dI = _check_grad_shape(frags, dC_dI)
    return shading.d_image_d_lighting(frags, normals, albedo, bands).vjp(dC_dI)


def lighting_step(U, frags, normals, albedo, dC_dI, gamma=0.05, initial=None, eps=inf):
    """One descent step on lighting coefficients, then the norm-ball projection."""
    U = np.asarray(U, dtype=float)
    g = lighting_gradient(frags, normals, albedo, dC_dI, lighting.sh.bands_from_count(len(U)))
    return project_norm_ball(U - gamma * g, U if initial is None else initial, eps)


def multiview_lighting_step(U, views, normals, albedo=None, gamma=0.05, initial=None, eps=inf):
    """Sum of per-view lighting steps; ``views`` is a list of (frags, dC_dI)."""
    if not views:
        raise ValueError("multiview step needs at least one view")
    U = np.asarray(U, dtype=float)
    bands = lighting.sh.bands_from_count(len(U))
    g = sum(lighting_gradient(frags, normals, albedo, dC_dI, bands) for frags, dC_dI in views)
    return project_norm_ball(U - gamma * g, U if initial is None else initial, eps)


def geometry_gradient(mesh, views, U):
    """dC/dV summed over views given as (frags, dC_dI), shape (|V|, 3)."""
    g = np.zeros_like(mesh.V)
    for frags, dC_dI in views:
        dC_dI = _check_grad_shape(frags, dC_dI)
        g += shading.d_image_d_vertices(frags, mesh, U).vjp(dC_dI)
    return g


def descend_geometry(mesh, grad, gamma, initial=None, eps=inf, halvings=5):
    """Step ``V - gamma * grad`` with projection; halve gamma while faces degenerate.

    Returns ``(V_new, gamma_used)``.  If every retry degenerates the step is
    rejected and the current vertices come back with ``gamma_used = 0``.
    """
    V = mesh.V
    V0 = V if initial is None else np.asarray(initial, dtype=float)
    g = gamma
    for _ in range(halvings + 1):
        V_new = project_norm_ball(V - g * grad, V0, eps)
        if not len(degenerate_faces(V_new, mesh.F)):
            return V_new, g
        g /= 2
    log.info("geometry step rejected after %d halvings", halvings)
    return V.copy(), 0.0


def geometry_step(V, mesh, frags, U, dC_dI, gamma=0.05, initial=None, eps=inf, halvings=5):
    """One descent step on vertex positions through the frozen-visibility Jacobian."""
    mesh = mesh.with_vertices(V, check=False)
    g = geometry_gradient(mesh, [(frags, dC_dI)], U)
    return descend_geometry(mesh, g, gamma, initial, eps, halvings)[0]


def skylight_gradient(params, fit, views, normals, albedo=None):
    """dC/d(theta_s, phi_s, turbidity) through the fitted sky coefficients."""
    dU = [lighting_gradient(f, normals, albedo, d, fit.bands) for f, d in views]
    dC_dU = sum(dU)
    return np.array([np.sum(dC_dU * part) for part in lighting.skylight_sh_grad(params, fit)])


def clamp_skylight(x, fit):
    lo, hi = fit.turbidity_range
    theta = min(max(float(x[0]), 0.0), pi / 2)
    tau = min(max(float(x[2]), lo), hi)
    return lighting.SkylightParams.clamped(theta, x[1], tau)


def skylight_step(params, fit, frags, normals, albedo, dC_dI, gamma=0.05, initial=None, eps=inf):
    """One descent step on (theta_s, phi_s, turbidity), clamped to valid ranges."""
    x = params.as_array()
    g = skylight_gradient(params, fit, [(frags, dC_dI)], normals, albedo)
    x0 = x if initial is None else np.asarray(initial.as_array() if hasattr(initial, "as_array") else initial)
    return clamp_skylight(project_norm_ball(x - gamma * g, x0, eps), fit)


# ---------------------------------------------------------------------------
# Attack loop


@dataclass
class AttackConfig:
    """``target`` is None (untargeted), one label, or one label per attacked view."""

    label: int
    target: object = None
    gamma: float = 0.05
    max_iter: int = 30
    eps: float = 0.1
    space: str = "lighting"
    views: tuple = None
    halvings: int = 5

    def __post_init__(self):
        if self.space not in SPACES:
            raise ValueError(f"space must be one of {SPACES}")
        if not self.gamma >= 0:
            raise ValueError("gamma must be non-negative")
        if not self.eps >= 0:
            raise ValueError("eps must be non-negative")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")

    def view_indices(self, n_cameras):
        views = tuple(range(n_cameras)) if self.views is None else tuple(int(v) for v in self.views)
        if not views or any(not 0 <= v < n_cameras for v in views):
            raise ValueError(f"attacked views {views} not a subset of {n_cameras} cameras")
        return views

    def targets(self, n_views):
        if self.target is None or np.isscalar(self.target):
            return [self.target] * n_views
        t = list(self.target)
        if len(t) != n_views:
            raise ValueError(f"{len(t)} per-view targets for {n_views} attacked views")
        return t

    def to_dict(self):
        return {
            "label": self.label,
            "target": self.target if self.target is None or np.isscalar(self.target) else list(self.target),
            "gamma": self.gamma,
            "max_iter": self.max_iter,
            "eps": None if self.eps == inf else self.eps,
            "space": self.space,
            "views": None if self.views is None else list(self.views),
        }


@dataclass
class AttackTrace:
    config: dict
    initial: dict
    records: list = field(default_factory=list)
    final_params: np.ndarray = None
    initial_params: np.ndarray = None

    @property
    def fooled(self):
        return bool(self.records and self.records[-1]["fooled"]) or bool(self.initial.get("fooled"))

    def __len__(self):
        return len(self.records)

    def max_linf(self):
        return max([r["linf_distance"] for r in self.records], default=0.0)

    def to_jsonl(self, path):
        with open(path, "w") as fh:
            fh.write(json.dumps({"config": self.config, **self.initial}) + "\n")
            for r in self.records:
                fh.write(json.dumps(r) + "\n")

    @staticmethod
    def read_jsonl(path):
        with open(path) as fh:
            return [json.loads(line) for line in fh if line.strip()]


class _State:
    """Parameters, derived lighting/mesh and per-view fragments for one attack."""

    def __init__(self, scene, space, views):
        self.scene = scene
        self.space = space
        self.views = views
        self.mesh = scene.mesh
        if space == "skylight":
            if scene.skylight is None or scene.fit is None:
                raise ValueError("skylight attack needs a scene lit by skylight parameters")
            self.params = scene.skylight
        elif space == "lighting":
            self.params = np.array(scene.lighting, dtype=float)
        else:
            self.params = scene.mesh.V.copy()
        self.frags = [scene.fragments(v) for v in views]
        self.normals = scene.normals()
        self._jacs = None

    @property
    def U(self):
        if self.space == "skylight":
            return lighting.skylight_sh(self.params, self.scene.fit)
        if self.space == "lighting":
            return self.params
        return self.scene.lighting

    def as_array(self):
        return self.params.as_array() if self.space == "skylight" else np.asarray(self.params)

    def set(self, params):
        self.params = params
        if self.space == "geometry":
            self.mesh = self.mesh.with_vertices(params, check=False)
            self.normals = face_normals(self.mesh)
            # visibility is refreshed for every view after a geometry step
            self.frags = [rasterize(self.mesh, self.scene.cameras[v], self.scene.backgrounds[v]) for v in self.views]

    def lighting_jacobians(self):
        """Per-view dI/dU; constant while geometry and visibility are fixed."""
        if self._jacs is None:
            bands = lighting.sh.bands_from_count(len(self.U))
            self._jacs = [shading.d_image_d_lighting(f, self.normals, self.mesh.albedo, bands) for f in self.frags]
        return self._jacs

    def images(self):
        U = self.U
        if self.space == "geometry":
            return [shading.shade(f, self.normals, U, self.mesh.albedo) for f in self.frags]
        # shading is linear in U, so reuse the cached Jacobian
        out = []
        for f, J in zip(self.frags, self.lighting_jacobians()):
            img = J.apply(U)
            img[~f.covered] = f.background[~f.covered]
            out.append(np.maximum(img, 0.0))
        return out


def _evaluate(state, classifier, label, targets, iteration):
    out = []
    for img, t in zip(state.images(), targets):
        try:
            probs, grad = classifier.evaluate(img, label, t)
        except Exception as exc:
            raise AttackError(iteration, exc) from exc
        out.append((np.asarray(probs, dtype=float), np.asarray(grad, dtype=float)))
    return out


def _record(iteration, evals, label, targets, linf, gamma):
    probs = [p for p, _ in evals]
    return {
        "iteration": iteration,
        "cost": float(sum(cost(p, label, t) for p, t in zip(probs, targets))),
        "confidence_d": [float(p[label]) for p in probs],
        "confidence_i": [None if t is None else float(p[t]) for p, t in zip(probs, targets)],
        "predicted": [int(np.argmax(p)) for p in probs],
        "linf_distance": float(linf),
        "gamma": float(gamma),
        "fooled": all(is_fooled(p, label, t) for p, t in zip(probs, targets)),
    }


def _gradient(state, evals):
    pairs = [(f, g) for f, (_, g) in zip(state.frags, evals)]
    if state.space == "geometry":
        return geometry_gradient(state.mesh, pairs, state.U)
    dC_dU = sum(J.vjp(_check_grad_shape(f, g)) for J, (f, g) in zip(state.lighting_jacobians(), pairs))
    if state.space == "lighting":
        return dC_dU
    return np.array([np.sum(dC_dU * part) for part in lighting.skylight_sh_grad(state.params, state.scene.fit)])


def _offset(state, x0):
    """Parameters relative to the start; the sun azimuth is taken the short way round."""
    d = state.as_array() - x0
    if state.space == "skylight":
        d[1] = (d[1] + pi) % (2 * pi) - pi
    return d


def run_attack(scene, classifier, config):
    """Iterate render -> classify -> step -> project until fooled or out of budget."""
    views = config.view_indices(len(scene.cameras))
    targets = config.targets(len(views))
    state = _State(scene, config.space, views)
    x0 = state.as_array().copy()

    evals = _evaluate(state, classifier, config.label, targets, 0)
    initial = _record(0, evals, config.label, targets, 0.0, 0.0)
    trace = AttackTrace(config.to_dict(), initial, initial_params=x0)

    for it in range(1, config.max_iter + 1):
        grad = _gradient(state, evals)
        gamma = config.gamma
        if config.space == "geometry":
            new, gamma = descend_geometry(state.mesh, grad, config.gamma, x0, config.eps, config.halvings)
        elif config.space == "lighting":
            new = project_norm_ball(state.params - gamma * grad, x0, config.eps)
        else:
            x = x0 + _offset(state, x0)
            new = clamp_skylight(project_norm_ball(x - gamma * grad, x0, config.eps), scene.fit)
        state.set(new)
        evals = _evaluate(state, classifier, config.label, targets, it)
        linf = float(np.abs(_offset(state, x0)).max()) if x0.size else 0.0
        rec = _record(it, evals, config.label, targets, linf, gamma)
        trace.records.append(rec)
        if rec["fooled"]:
            break

    trace.final_params = state.as_array().copy()
    return trace


# ---------------------------------------------------------------------------
# Random baseline


def random_perturbation(initial, eps, rng):
    """Uniform per-coordinate offset in [-eps, eps]."""
    initial = np.asarray(initial, dtype=float)
    return initial + rng.uniform(-eps, eps, size=initial.shape)


def random_attack(scene, classifier, config, trials, rng):
    """Fraction of ``trials`` uniform norm-ball samples that fool the classifier."""
    views = config.view_indices(len(scene.cameras))
    targets = config.targets(len(views))
    state = _State(scene, config.space, views)
    x0 = state.as_array().copy()
    fooled = 0
    for _ in range(trials):
        x = random_perturbation(x0, config.eps, rng)
        if config.space == "skylight":
            x = clamp_skylight(x, scene.fit)
        elif config.space == "geometry" and len(degenerate_faces(x, state.mesh.F)):
            continue
        state.set(x)
        evals = _evaluate(state, classifier, config.label, targets, 0)
        fooled += all(is_fooled(p, config.label, t) for (p, _), t in zip(evals, targets))
    return fooled / trials if trials else 0.0


__all__ = [
    "AttackConfig",
    "AttackTrace",
    "cost",
    "cost_logit_grad",
    "descend_geometry",
    "geometry_gradient",
    "geometry_step",
    "is_fooled",
    "lighting_gradient",
    "lighting_step",
    "multiview_lighting_step",
    "project_norm_ball",
    "random_attack",
    "run_attack",
    "skylight_gradient",
    "skylight_step",
]

"""Random instance generators shared by the test modules."""

import math

import numpy as np

from strategic_screening.geometry import (
    HalfspaceClassifier,
    Pipeline,
    boundary_intersection,
    general_position,
)


def unit(angle):
    return np.array([math.cos(angle), math.sin(angle)])


def random_pair(rng, max_abs_cos=0.999, apex_box=1.0):
    """Two non-parallel planar tests meeting inside ``[-apex_box, apex_box]^2``."""
    while True:
        a1, a2 = rng.uniform(0.0, 2 * math.pi, 2)
        w1, w2 = unit(a1), unit(a2)
        if abs(w1 @ w2) <= max_abs_cos:
            break
    v = rng.uniform(-apex_box, apex_box, 2)
    return HalfspaceClassifier(w1, w1 @ v), HalfspaceClassifier(w2, w2 @ v)


def pair_with_angle(rng, theta, apex_box=1.0):
    """Random rotation of a wedge with opening angle ``theta``."""
    phi = rng.uniform(0.0, 2 * math.pi)
    w1 = unit(phi)
    # cos(theta) = -w1 @ w2
    w2 = unit(phi + math.pi - theta)
    v = rng.uniform(-apex_box, apex_box, 2)
    return HalfspaceClassifier(w1, w1 @ v), HalfspaceClassifier(w2, w2 @ v)


def random_monotone_pipeline(rng, k, d):
    cls = []
    for _ in range(k):
        w = rng.uniform(0.0, 1.0, d)
        w[rng.random(d) < 0.2] = 0.0
        if not np.any(w):
            w[rng.integers(d)] = 1.0
        cls.append(HalfspaceClassifier(w, rng.uniform(0.2, 2.0)))
    return Pipeline(tuple(cls))


def random_general_position_pipeline(rng, k, box=3.0):
    """Planar pipeline in general position whose accept region is an
    unbounded polygon (all normals within an open half-plane) with every
    boundary meeting point inside ``[-box, box]^2``."""
    while True:
        phi = rng.uniform(0.0, 2 * math.pi)
        offsets = np.sort(rng.uniform(-0.42 * math.pi, 0.42 * math.pi, k))
        if k > 1 and np.min(np.diff(offsets)) < 0.15:
            continue
        W = [unit(phi + o) for o in offsets]
        v = rng.uniform(-1.0, 1.0, 2)
        cls = tuple(HalfspaceClassifier(w, w @ v - rng.uniform(0.0, 1.0)) for w in W)
        rng.shuffle(list(cls))
        if not general_position(cls):
            continue
        ok = True
        for i in range(k):
            for j in range(i + 1, k):
                if np.abs(boundary_intersection(cls[i], cls[j])).max() > box:
                    ok = False
        if ok:
            return Pipeline(tuple(cls[i] for i in rng.permutation(k)))

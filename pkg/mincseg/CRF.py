# -*- coding: utf-8 -*-
#
# This file is part of the mincseg library.
# Copyright (C) 2026 The mincseg authors
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with this program. If not, see <http://www.gnu.org/licenses/>.

# NOTE: Fully connected CRF with a Potts pairwise term and one Gaussian
#       kernel over (x, y, L*, a*, b*) features, solved by synchronous
#       mean-field updates for a fixed number of iterations.

import json
import logging
import os

import numpy as np
import PIL.Image
import scipy.ndimage

from .Consts import CATEGORY_NAMES, DEFAULT_CRF_ITERATIONS, PROBABILITY_FLOOR
from .Image import LAB_F32, resample_array, resize_bilinear, rgb_to_lab
from .Lattice import PermutohedralLattice
from .ProbabilityMap import ProbabilityMap

logger = logging.getLogger(__name__)

BACKENDS = [EXACT, LATTICE] = range(2)
BACKEND_NAMES = ["exact", "lattice"]

FEATURE_DIM = 5
CALIBRATION_PIXELS = 64
LABELMAP_VERSION = 1


class CrfParams(object):
    def __init__(self, theta_p, theta_L, theta_ab, w_p, iterations=DEFAULT_CRF_ITERATIONS):
        if theta_p <= 0 or theta_L <= 0 or theta_ab <= 0:
            raise ValueError("Kernel bandwidths must be positive, got ({0}, {1}, {2})".format(theta_p, theta_L, theta_ab))
        if w_p < 0:
            raise ValueError("Pairwise weight must be non-negative, got {0}".format(w_p))
        if iterations < 1:
            raise ValueError("At least one mean-field iteration is needed, got {0}".format(iterations))
        self.theta_p = float(theta_p)
        self.theta_L = float(theta_L)
        self.theta_ab = float(theta_ab)
        self.w_p = float(w_p)
        self.iterations = int(iterations)

    def replace(self, **kwargs):
        d = self.to_dict()
        d.update(kwargs)
        return CrfParams(**d)

    def to_dict(self):
        return {
            "theta_p": self.theta_p,
            "theta_L": self.theta_L,
            "theta_ab": self.theta_ab,
            "w_p": self.w_p,
            "iterations": self.iterations,
        }

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(d["theta_p"], d["theta_L"], d["theta_ab"], d["w_p"], d.get("iterations", DEFAULT_CRF_ITERATIONS))
        except KeyError as e:
            raise ValueError("CRF parameters are missing {0}".format(e))

    def __eq__(self, other):
        try:
            return self.to_dict() == other.to_dict()
        except AttributeError:
            return False

    def __ne__(self, other):
        return not self.__eq__(other)

    def __hash__(self):
        return hash(tuple(sorted(self.to_dict().items())))

    def __repr__(self):
        return "CrfParams({0})".format(", ".join("{0}={1!r}".format(k, v) for k, v in self.to_dict().items()))


class PixelFeatures(object):
    def __init__(self, values, width, height):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (width * height, FEATURE_DIM):
            raise ValueError("Expected {0}x{1} features, got {2}".format(width * height, FEATURE_DIM, values.shape))
        if not np.all(np.isfinite(values)):
            raise ValueError("Pixel features must be finite")
        self.values = values
        self.width = width
        self.height = height

    @property
    def d(self):
        return min(self.width, self.height)


class UnaryPotentials(object):
    def __init__(self, values):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 3 or not np.all(np.isfinite(values)):
            raise ValueError("Unary potentials must be a finite H x W x L array")
        self.values = values

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]

    @property
    def labels(self):
        return self.values.shape[2]

    def argmax(self):
        return np.argmin(self.values, axis=2)


class MarginalField(object):
    def __init__(self, values):
        self.values = np.asarray(values, dtype=np.float64)

    def to_probability_map(self):
        return ProbabilityMap(self.values)


class LabelMap(object):
    def __init__(self, labels, names=None):
        labels = np.asarray(labels)
        if labels.ndim != 2:
            raise ValueError("Label maps are 2-D, got shape {0}".format(labels.shape))
        self.labels = labels.astype(np.int64)
        self.names = list(CATEGORY_NAMES if names is None else names)

    @property
    def height(self):
        return self.labels.shape[0]

    @property
    def width(self):
        return self.labels.shape[1]

    def __eq__(self, other):
        try:
            return self.names == other.names and np.array_equal(self.labels, other.labels)
        except AttributeError:
            return False

    def __ne__(self, other):
        return not self.__eq__(other)


def build_features(lab, params):
    if lab.space != LAB_F32 or lab.channels != 3:
        raise ValueError("Pairwise features need an L*a*b* image, got {0!r}".format(lab))
    h, w = lab.height, lab.width
    d = float(min(w, h))
    ys, xs = np.mgrid[0:h, 0:w]
    data = lab.data.astype(np.float64)
    values = np.stack(
        [
            xs.reshape(-1) / (params.theta_p * d),
            ys.reshape(-1) / (params.theta_p * d),
            data[:, :, 0].reshape(-1) / params.theta_L,
            data[:, :, 1].reshape(-1) / params.theta_ab,
            data[:, :, 2].reshape(-1) / params.theta_ab,
        ],
        axis=1,
    )
    return PixelFeatures(values, w, h)


def unary_from_probabilities(probabilities):
    return UnaryPotentials(-np.log(np.maximum(probabilities, PROBABILITY_FLOOR)))


def unary_from_probmap(probmap, target_w, target_h):
    if target_w < 1 or target_h < 1:
        raise ValueError("Unary target must be at least 1x1, got {0}x{1}".format(target_w, target_h))
    return unary_from_probabilities(resample_array(probmap.values, target_w, target_h))


def gaussian_filter_exact(features, values):
    """
    out_i = sum_j exp(-|f_i - f_j|^2 / 2) v_j over all j, including i.
    Quadratic in the number of pixels.
    """
    f = features.values if isinstance(features, PixelFeatures) else np.asarray(features, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    squeeze = v.ndim == 1
    if squeeze:
        v = v[:, np.newaxis]
    n = f.shape[0]
    if v.shape[0] != n:
        raise ValueError("Expected {0} value rows, got {1}".format(n, v.shape[0]))
    out = np.empty_like(v)
    chunk = max(1, (1 << 22) // max(1, n * f.shape[1]))
    for start in range(0, n, chunk):
        diff = f[start : start + chunk, np.newaxis, :] - f[np.newaxis, :, :]
        kernel = np.exp(-0.5 * (diff * diff).sum(axis=2))
        out[start : start + chunk] = kernel @ v
    return out[:, 0] if squeeze else out


def gaussian_filter_lattice(features, values):
    f = features.values if isinstance(features, PixelFeatures) else features
    return PermutohedralLattice(f).filter(values)


class ExactFilter(object):
    def __init__(self, features):
        self.features = features

    def __call__(self, values):
        return gaussian_filter_exact(self.features, values)


class LatticeFilter(object):
    """
    Lattice filter rescaled by one constant so that its response to the
    all-ones vector matches the exact Gaussian sum on a fixed set of sample
    pixels.
    """

    def __init__(self, features):
        f = features.values if isinstance(features, PixelFeatures) else np.asarray(features, dtype=np.float64)
        self.lattice = PermutohedralLattice(f)
        n = f.shape[0]
        anchors = np.unique(np.linspace(0, n - 1, min(n, CALIBRATION_PIXELS)).astype(np.intp))
        sq = (f * f).sum(axis=1)
        exact = np.empty(anchors.size)
        for start in range(0, anchors.size, 16):
            p = anchors[start : start + 16]
            dist = sq[p, np.newaxis] + sq[np.newaxis, :] - 2.0 * (f[p] @ f.T)
            exact[start : start + 16] = np.exp(-0.5 * np.maximum(dist, 0.0)).sum(axis=1)
        approx = self.lattice.filter(np.ones(n))[anchors]
        self.scale = float(np.median(exact / np.maximum(approx, 1e-30)))

    def __call__(self, values):
        return self.scale * self.lattice.filter(values)


def make_filter(features, backend):
    if backend == EXACT:
        return ExactFilter(features)
    if backend == LATTICE:
        return LatticeFilter(features)
    raise ValueError("Unknown filter backend: {0}".format(backend))


def _normalize_exp(energy):
    energy = energy - energy.max(axis=1, keepdims=True)
    np.exp(energy, out=energy)
    energy /= energy.sum(axis=1, keepdims=True)
    return energy


def meanfield_infer(unary, features, w_p, iterations=DEFAULT_CRF_ITERATIONS, backend=LATTICE, callback=None):
    """
    Synchronous mean-field inference. Q starts at softmax(-unary); each round
    passes messages m = K Q - Q and applies the Potts penalty
    w_p * (sum_l' m(l') - m(l)).
    """
    if w_p < 0:
        raise ValueError("Pairwise weight must be non-negative, got {0}".format(w_p))
    if iterations < 1:
        raise ValueError("At least one mean-field iteration is needed, got {0}".format(iterations))
    h, w, labels = unary.values.shape
    if (features.width, features.height) != (w, h):
        raise ValueError("Features are {0}x{1}, unary is {2}x{3}".format(features.width, features.height, w, h))

    psi = unary.values.reshape(-1, labels)
    q = _normalize_exp(-psi)
    kernel = make_filter(features, backend) if w_p > 0 else None

    for iteration in range(iterations):
        if kernel is not None:
            # sum_l' m(l') is constant per pixel and cancels in the softmax.
            energy = kernel(q)
            energy -= q
            energy *= w_p
            energy -= psi
            q = _normalize_exp(energy)
        if callback is not None:
            callback(iteration, q.reshape(h, w, labels))
        logger.debug("Mean-field iteration %d/%d done", iteration + 1, iterations)
    return MarginalField(q.reshape(h, w, labels))


def map_labels(q, names=None):
    values = q.values if isinstance(q, MarginalField) else np.asarray(q)
    # np.argmax returns the first maximum, so ties go to the lowest index.
    return LabelMap(np.argmax(values, axis=2), names)


def crf_segment(image, probmap, params, backend=LATTICE):
    """
    Runs the CRF for ``image`` on the grid of the fused ``probmap``: the image
    is resized to the map's grid and converted to L*a*b*.
    """
    resized = resize_bilinear(image, probmap.cols, probmap.rows)
    features = build_features(rgb_to_lab(resized), params)
    unary = unary_from_probmap(probmap, probmap.cols, probmap.rows)
    q = meanfield_infer(unary, features, params.w_p, params.iterations, backend)
    return map_labels(q)


def count_components(labels):
    """
    Number of 4-connected regions of equal label.
    """
    labels = labels.labels if isinstance(labels, LabelMap) else np.asarray(labels)
    total = 0
    for label in np.unique(labels):
        _, count = scipy.ndimage.label(labels == label)
        total += count
    return total


class Parser:
    @staticmethod
    def parse_labelmap_file(path):
        with PIL.Image.open(path) as f:
            labels = np.asarray(f.convert("L"), dtype=np.int64)
        names = None
        sidecar = os.path.splitext(path)[0] + ".json"
        if os.path.exists(sidecar):
            with open(sidecar) as f:
                meta = json.load(f)
            if meta.get("version") != LABELMAP_VERSION:
                raise ValueError("Unsupported label map sidecar version: {0}".format(meta.get("version")))
            names = meta["labels"]
        return LabelMap(labels, names)

    @staticmethod
    def parse_params_str(params_str):
        return CrfParams.from_dict(json.loads(params_str))

    @staticmethod
    def parse_params_file(path):
        with open(path) as f:
            return Parser.parse_params_str(f.read())


class Exporter:
    @staticmethod
    def labelmap(labelmap, path):
        if labelmap.labels.min() < 0 or labelmap.labels.max() > 255:
            raise ValueError("Label indices must fit in 8 bits")
        PIL.Image.fromarray(labelmap.labels.astype(np.uint8)).save(path, format="PNG")
        with open(os.path.splitext(path)[0] + ".json", "w") as f:
            f.write(json.dumps({"version": LABELMAP_VERSION, "labels": labelmap.names}, indent=2) + "\n")

    @staticmethod
    def params_json(params):
        return json.dumps(params.to_dict(), indent=2, sort_keys=True) + "\n"

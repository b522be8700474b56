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

# NOTE: Mosaic photos are jittered grids of flat-colored rectangles with
#       per-pixel color noise. Their unary is built from the ground truth:
#       the true label gets a logit bonus, every logit gets Gaussian noise.

import logging

import numpy as np

from .Consts import NUM_CATEGORIES
from .CRF import unary_from_probabilities
from .Dataset import ClickLabel, Photo, SegmentPolygon
from .Eval import ValidationPhoto
from .Image import SRGB_U8, Image
from .ProbabilityMap import ProbabilityMap

logger = logging.getLogger(__name__)


class MosaicSample(object):
    def __init__(self, photo_id, image, truth, probabilities, segments, clicks):
        self.photo_id = photo_id
        self.image = image
        self.truth = truth
        self.probabilities = probabilities
        self.segments = segments
        self.clicks = clicks

    @property
    def photo(self):
        return Photo(self.photo_id, self.image.width, self.image.height)

    def probability_map(self):
        return ProbabilityMap(self.probabilities)

    def validation_photo(self):
        return ValidationPhoto(
            self.photo_id,
            self.image,
            unary_from_probabilities(self.probabilities),
            self.segments,
            self.clicks,
            (self.image.width, self.image.height),
        )


def _cuts(rng, size, parts):
    base = np.linspace(0, size, parts + 1)
    jitter = size // (4 * parts)
    inner = base[1:-1] + rng.integers(-jitter, jitter + 1, parts - 1) if jitter else base[1:-1]
    return [0] + [int(v) for v in inner] + [size]


def mosaic(
    seed,
    width=48,
    height=48,
    grid=(3, 3),
    num_labels=NUM_CATEGORIES,
    color_noise=8.0,
    unary_strength=1.5,
    unary_noise=1.0,
    photo_id=None,
):
    rng = np.random.default_rng(seed)
    cols, rows = grid
    xs = _cuts(rng, width, cols)
    ys = _cuts(rng, height, rows)

    truth = np.zeros((height, width), dtype=np.int64)
    data = np.zeros((height, width, 3))
    photo_id = photo_id or "mosaic-{0}".format(seed)
    segments = []
    clicks = []
    for r in range(rows):
        for c in range(cols):
            x0, x1, y0, y1 = xs[c], xs[c + 1], ys[r], ys[r + 1]
            category = int(rng.integers(num_labels))
            truth[y0:y1, x0:x1] = category
            data[y0:y1, x0:x1] = rng.integers(30, 226, 3)
            segments.append(SegmentPolygon(photo_id, category, [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]))
            point = (x0 + 0.5 + rng.random() * (x1 - x0 - 1), y0 + 0.5 + rng.random() * (y1 - y0 - 1))
            clicks.append(ClickLabel(photo_id, category, point))

    data += rng.normal(0.0, color_noise, data.shape)
    image = Image(np.floor(np.clip(data, 0, 255) + 0.5), SRGB_U8)

    logits = unary_strength * np.eye(num_labels)[truth] + rng.normal(0.0, unary_noise, (height, width, num_labels))
    logits -= logits.max(axis=2, keepdims=True)
    probabilities = np.exp(logits)
    probabilities /= probabilities.sum(axis=2, keepdims=True)
    return MosaicSample(photo_id, image, truth, probabilities, segments, clicks)


def mosaic_corpus(count=50, seed=0, **kwargs):
    children = np.random.SeedSequence(seed).spawn(count)
    corpus = [mosaic(child, photo_id="mosaic{0:03d}".format(i), **kwargs) for i, child in enumerate(children)]
    logger.debug("Generated %d mosaic photos", count)
    return corpus

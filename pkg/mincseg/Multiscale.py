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

import logging
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .Consts import FUSION_DIM, PATCH_SIZE
from .Image import preprocess, round_half_up, scale_to_min_dim
from .Network import forward_dense
from .ProbabilityMap import ProbabilityMap

logger = logging.getLogger(__name__)


class ScalePlan(object):
    def __init__(self, patch_scale, base_dim, scales, fusion_dim=FUSION_DIM):
        self.patch_scale = float(patch_scale)
        self.base_dim = int(base_dim)
        self.scales = tuple(int(s) for s in scales)
        self.fusion_dim = int(fusion_dim)

    def to_dict(self):
        return {
            "patch_scale": self.patch_scale,
            "base_dim": self.base_dim,
            "scales": list(self.scales),
            "fusion_dim": self.fusion_dim,
        }

    def __eq__(self, other):
        try:
            return self.to_dict() == other.to_dict()
        except AttributeError:
            return False

    def __ne__(self, other):
        return not self.__eq__(other)

    def __repr__(self):
        return "ScalePlan({0})".format(self.to_dict())


def plan_scales(patch_scale, num_scales=3, fusion_dim=FUSION_DIM):
    """
    Smaller image dimensions at which a patch of ``patch_scale`` maps to a
    256 pixel square, together with the half-octave neighbours.
    """
    if not (0.0 < patch_scale <= 1.0):
        raise ValueError("Patch scale must lie in (0, 1], got {0}".format(patch_scale))
    d = round_half_up(PATCH_SIZE / patch_scale)
    if num_scales == 3:
        scales = (round_half_up(d / math.sqrt(2.0)), d, round_half_up(d * math.sqrt(2.0)))
    elif num_scales == 1:
        scales = (d,)
    else:
        raise ValueError("Only 1 or 3 scales are supported, got {0}".format(num_scales))
    return ScalePlan(patch_scale, d, scales, fusion_dim)


def fusion_size(width, height, fusion_dim=FUSION_DIM):
    if width <= height:
        return fusion_dim, max(1, round_half_up(height * fusion_dim / float(width)))
    return max(1, round_half_up(width * fusion_dim / float(height))), fusion_dim


def fuse(maps, width, height, fusion_dim=FUSION_DIM):
    """
    Upsamples each ``(probmap, scaled_width, scaled_height)`` to the fusion
    grid of a ``width x height`` source image and averages them.
    """
    if not maps:
        raise ValueError("Nothing to fuse")
    out_w, out_h = fusion_size(width, height, fusion_dim)
    step_x = width / float(out_w)
    step_y = height / float(out_h)

    total = None
    for probmap, scaled_w, scaled_h in maps:
        xs = (np.arange(out_w) + 0.5) * (scaled_w / float(out_w)) - 0.5
        ys = (np.arange(out_h) + 0.5) * (scaled_h / float(out_h)) - 0.5
        sampled = probmap.sample(xs, ys)
        if total is not None and sampled.shape != total.shape:
            raise ValueError("Probability maps disagree on label count")
        total = sampled if total is None else total + sampled

    fused = total / len(maps)
    fused /= fused.sum(axis=2, keepdims=True)
    return ProbabilityMap(fused, origin=(0.5 * step_x - 0.5, 0.5 * step_y - 0.5), spacing=(step_x, step_y))


def predict_scale(net, weights, image, min_dim, half_stride=True):
    if min_dim < net.input_size:
        raise ValueError("Scale {0} is below the {1}px network window".format(min_dim, net.input_size))
    resized = scale_to_min_dim(image, min_dim)
    probmap = forward_dense(net, weights, preprocess(resized), half_stride=half_stride)
    logger.debug("Scale %d: %dx%d input, %dx%d grid", min_dim, resized.width, resized.height, probmap.cols, probmap.rows)
    return probmap, resized.width, resized.height


def predict_multiscale(net, weights, image, plan, half_stride=True, jobs=1):
    for min_dim in plan.scales:
        if min_dim < net.input_size:
            raise ValueError("Scale {0} is below the {1}px network window".format(min_dim, net.input_size))

    if jobs > 1 and len(plan.scales) > 1:
        with ThreadPoolExecutor(max_workers=min(jobs, len(plan.scales))) as pool:
            maps = list(pool.map(lambda d: predict_scale(net, weights, image, d, half_stride), plan.scales))
    else:
        maps = [predict_scale(net, weights, image, d, half_stride) for d in plan.scales]
    return fuse(maps, image.width, image.height, plan.fusion_dim)

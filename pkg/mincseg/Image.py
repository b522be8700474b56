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

import math

import numpy as np
import PIL.Image
from skimage.color import rgb2lab, xyz2lab
from skimage.color.colorconv import xyz_from_rgb

from .Consts import MEAN_RGB, PATCH_SIZE

COLOR_SPACES = [SRGB_U8, LINEAR_F32, LAB_F32] = range(3)
COLOR_SPACE_NAMES = ["srgb_u8", "linear_f32", "lab_f32"]


def round_half_up(value):
    return int(math.floor(value + 0.5))


class Image(object):
    """
    Immutable image of ``height`` rows by ``width`` columns with 1 or 3
    interleaved channels.
    """

    def __init__(self, data, space=SRGB_U8):
        data = np.asarray(data)
        if data.ndim == 2:
            data = data[:, :, np.newaxis]
        if data.ndim != 3 or data.shape[2] not in (1, 3):
            raise ValueError("Image data must be HxW, HxWx1 or HxWx3, got shape {0}".format(data.shape))
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError("Image must not be empty")
        if space not in COLOR_SPACES:
            raise ValueError("Unknown color space: {0}".format(space))

        if space == SRGB_U8:
            data = np.clip(data, 0, 255).astype(np.uint8) if data.dtype != np.uint8 else data.copy()
        else:
            data = data.astype(np.float32)
            if not np.all(np.isfinite(data)):
                raise ValueError("Image data must be finite")
            if space == LAB_F32:
                if data.shape[2] != 3:
                    raise ValueError("L*a*b* images have 3 channels")
                if np.any(data[:, :, 0] < 0) or np.any(data[:, :, 0] > 100):
                    raise ValueError("L* must lie in [0, 100]")

        data.setflags(write=False)
        self.data = data
        self.space = space

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def channels(self):
        return self.data.shape[2]

    @property
    def min_dim(self):
        return min(self.width, self.height)

    def __eq__(self, other):
        try:
            return self.space == other.space and np.array_equal(self.data, other.data)
        except AttributeError:
            return False

    def __ne__(self, other):
        return not self.__eq__(other)

    def __repr__(self):
        return "Image({0}x{1}x{2}, {3})".format(
            self.width, self.height, self.channels, COLOR_SPACE_NAMES[self.space]
        )


class PatchGeometry(object):
    """
    A square patch given by its normalized center and its side as a fraction
    of the smaller image dimension.
    """

    def __init__(self, center_x, center_y, scale):
        if not (0.0 <= center_x <= 1.0 and 0.0 <= center_y <= 1.0):
            raise ValueError("Patch center must lie in [0, 1], got ({0}, {1})".format(center_x, center_y))
        if not (0.0 < scale <= 1.0):
            raise ValueError("Patch scale must lie in (0, 1], got {0}".format(scale))
        self.center_x = float(center_x)
        self.center_y = float(center_y)
        self.scale = float(scale)

    @classmethod
    def from_pixels(cls, x, y, width, height, scale):
        return cls(x / float(width), y / float(height), scale)

    def center_pixels(self, width, height):
        return self.center_x * width, self.center_y * height

    def side(self, width, height):
        return round_half_up(self.scale * min(width, height))

    def __eq__(self, other):
        try:
            return (
                self.center_x == other.center_x and self.center_y == other.center_y and self.scale == other.scale
            )
        except AttributeError:
            return False

    def __ne__(self, other):
        return not self.__eq__(other)

    def __hash__(self):
        return hash((self.center_x, self.center_y, self.scale))

    def __repr__(self):
        return "PatchGeometry({0!r}, {1!r}, {2!r})".format(self.center_x, self.center_y, self.scale)


def _axis_samples(n_in, n_out):
    # Half-pixel centers, clamped to the edge samples.
    pos = (np.arange(n_out, dtype=np.float64) + 0.5) * (float(n_in) / n_out) - 0.5
    pos = np.clip(pos, 0.0, n_in - 1)
    i0 = np.floor(pos).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, pos - i0


def resample_array(array, out_w, out_h):
    """
    Bilinear resampling of an ``H x W x C`` float array. Output values are
    convex combinations of input values.
    """
    if out_w < 1 or out_h < 1:
        raise ValueError("Target size must be at least 1x1, got {0}x{1}".format(out_w, out_h))
    array = np.asarray(array, dtype=np.float64)
    if array.ndim != 3 or array.shape[0] < 1 or array.shape[1] < 1:
        raise ValueError("Cannot resample array of shape {0}".format(array.shape))
    in_h, in_w = array.shape[:2]
    if (in_w, in_h) == (out_w, out_h):
        return array.copy()

    y0, y1, wy = _axis_samples(in_h, out_h)
    x0, x1, wx = _axis_samples(in_w, out_w)

    top = array[y0]
    rows = top + wy[:, np.newaxis, np.newaxis] * (array[y1] - top)
    left = rows[:, x0]
    out = left + wx[np.newaxis, :, np.newaxis] * (rows[:, x1] - left)
    return np.clip(out, array.min(axis=(0, 1)), array.max(axis=(0, 1)))


def resize_bilinear(img, out_w, out_h):
    if out_w < 1 or out_h < 1:
        raise ValueError("Target size must be at least 1x1, got {0}x{1}".format(out_w, out_h))
    if (img.width, img.height) == (out_w, out_h):
        return img
    out = resample_array(img.data, out_w, out_h)
    if img.space == SRGB_U8:
        out = np.floor(out + 0.5)
    return Image(out, img.space)


def rgb_to_lab(img):
    if img.channels != 3:
        raise ValueError("L*a*b* conversion needs 3 channels, got {0}".format(img.channels))
    if img.space == LAB_F32:
        return img
    if img.space == SRGB_U8:
        lab = rgb2lab(img.data.astype(np.float64) / 255.0, illuminant="D65")
    else:
        linear = np.clip(img.data.astype(np.float64), 0.0, 1.0)
        lab = xyz2lab(linear @ xyz_from_rgb.T, illuminant="D65")
    lab[:, :, 0] = np.clip(lab[:, :, 0], 0.0, 100.0)
    return Image(lab, LAB_F32)


def crop_replicated(img, x0, y0, width, height):
    """
    Crops ``width x height`` pixels starting at ``(x0, y0)``; coordinates
    outside the image repeat the nearest edge pixel.
    """
    xs = np.clip(np.arange(x0, x0 + width), 0, img.width - 1)
    ys = np.clip(np.arange(y0, y0 + height), 0, img.height - 1)
    return Image(img.data[ys][:, xs], img.space)


def extract_patch(img, geom, out_size=PATCH_SIZE):
    if out_size < 1:
        raise ValueError("Patch output size must be at least 1, got {0}".format(out_size))
    side = geom.side(img.width, img.height)
    if side < 1:
        raise ValueError(
            "Patch scale {0} is below one pixel on a {1}x{2} image".format(geom.scale, img.width, img.height)
        )
    cx, cy = geom.center_pixels(img.width, img.height)
    x0 = round_half_up(cx - side / 2.0)
    y0 = round_half_up(cy - side / 2.0)
    return resize_bilinear(crop_replicated(img, x0, y0, side, side), out_size, out_size)


def preprocess(img):
    """
    Converts an 8-bit RGB image into a ``1 x 3 x H x W`` float32 tensor with
    the per-channel mean removed.
    """
    if img.channels != 3 or img.space != SRGB_U8:
        raise ValueError("preprocess expects an 8-bit RGB image, got {0!r}".format(img))
    data = img.data.astype(np.float32) - np.asarray(MEAN_RGB, dtype=np.float32)
    return np.ascontiguousarray(data.transpose(2, 0, 1)[np.newaxis])


def scale_to_min_dim(img, min_dim):
    """
    Resizes so the smaller dimension equals ``min_dim``; the other dimension
    keeps the aspect ratio and is rounded.
    """
    if img.width <= img.height:
        out_w = min_dim
        out_h = max(1, round_half_up(img.height * min_dim / float(img.width)))
    else:
        out_h = min_dim
        out_w = max(1, round_half_up(img.width * min_dim / float(img.height)))
    return resize_bilinear(img, out_w, out_h)


class Parser:
    @staticmethod
    def parse_file(path):
        with PIL.Image.open(path) as f:
            return Image(np.asarray(f.convert("RGB")), SRGB_U8)


class Exporter:
    @staticmethod
    def _pil(img):
        if img.space != SRGB_U8:
            raise ValueError("Only 8-bit RGB images can be written, got {0!r}".format(img))
        if img.channels == 1:
            return PIL.Image.fromarray(np.ascontiguousarray(img.data[:, :, 0]))
        return PIL.Image.fromarray(np.ascontiguousarray(img.data))

    @staticmethod
    def png(img, path):
        Exporter._pil(img).save(path, format="PNG")

    @staticmethod
    def ppm(img, path):
        if img.channels != 3:
            raise ValueError("PPM output needs 3 channels")
        Exporter._pil(img).save(path, format="PPM")

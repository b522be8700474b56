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

import colorsys

import numpy as np
import PIL.Image
import PIL.ImageDraw
import PIL.ImageFont

from .Consts import CATEGORY_NAMES, NUM_CATEGORIES, OTHER
from .CRF import LabelMap
from .Image import SRGB_U8, Image

GRAY = (128, 128, 128)
SATURATION = 0.75
VALUE = 0.9


class Palette(object):
    def __init__(self, colors, names=CATEGORY_NAMES):
        if len(colors) != len(names):
            raise ValueError("Palette has {0} colors for {1} names".format(len(colors), len(names)))
        self.colors = [tuple(int(c) for c in color) for color in colors]
        self.names = list(names)

    def __len__(self):
        return len(self.colors)

    def __getitem__(self, label):
        return self.colors[label]

    def __eq__(self, other):
        try:
            return self.colors == other.colors and self.names == other.names
        except AttributeError:
            return False

    def __ne__(self, other):
        return not self.__eq__(other)


def default_palette(num_labels=NUM_CATEGORIES):
    """
    Hues stepped by 1 / num_labels around the circle; 'other' is gray.
    """
    colors = []
    for i in range(num_labels):
        if i == OTHER:
            colors.append(GRAY)
            continue
        r, g, b = colorsys.hsv_to_rgb(i / float(num_labels), SATURATION, VALUE)
        colors.append((int(round(r * 255)), int(round(g * 255)), int(round(b * 255))))
    return Palette(colors, CATEGORY_NAMES[:num_labels])


def render_labels(labels, palette=None):
    palette = palette or default_palette()
    labels = labels.labels if isinstance(labels, LabelMap) else np.asarray(labels)
    bad = labels[(labels < 0) | (labels >= len(palette))]
    if bad.size:
        raise ValueError("Label {0} has no palette color".format(bad[0]))
    return Image(np.asarray(palette.colors, dtype=np.uint8)[labels], SRGB_U8)


def render_legend(palette=None, row_height=20, width=180):
    """
    One swatch row per category with its name to the right.
    """
    palette = palette or default_palette()
    legend = PIL.Image.new("RGB", (width, row_height * len(palette)), (255, 255, 255))
    draw = PIL.ImageDraw.Draw(legend)
    font = PIL.ImageFont.load_default()
    for i, (color, name) in enumerate(zip(palette.colors, palette.names)):
        top = i * row_height
        draw.rectangle([0, top, row_height - 1, top + row_height - 1], fill=color)
        draw.text((row_height + 6, top + row_height // 4), name, fill=(0, 0, 0), font=font)
    return Image(np.asarray(legend), SRGB_U8)

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

import os
import shutil
import tempfile
import unittest

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from mincseg.Image import (
    LAB_F32,
    LINEAR_F32,
    SRGB_U8,
    Exporter,
    Image,
    Parser,
    PatchGeometry,
    crop_replicated,
    extract_patch,
    preprocess,
    resize_bilinear,
    rgb_to_lab,
    round_half_up,
    scale_to_min_dim,
)

SRGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
D65_WHITE = np.array([0.95047, 1.0, 1.08883])


def reference_lab(rgb):
    c = rgb / 255.0
    linear = np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)
    xyz = linear @ SRGB_TO_XYZ.T / D65_WHITE
    delta = 6.0 / 29.0
    f = np.where(xyz > delta**3, np.cbrt(xyz), xyz / (3 * delta**2) + 4.0 / 29.0)
    return np.stack([116 * f[:, 1] - 16, 500 * (f[:, 0] - f[:, 1]), 200 * (f[:, 1] - f[:, 2])], axis=1)


def random_image(seed, width, height):
    return Image(np.random.default_rng(seed).integers(0, 256, (height, width, 3)), SRGB_U8)


class ImageTestCase(unittest.TestCase):
    def test_construction(self):
        img = Image(np.zeros((4, 6, 3)))
        self.assertEqual((img.width, img.height, img.channels), (6, 4, 3))
        self.assertEqual(img.data.dtype, np.uint8)
        self.assertEqual(img.min_dim, 4)
        self.assertEqual(Image(np.zeros((4, 6))).channels, 1)

    def test_immutable(self):
        img = Image(np.zeros((2, 2, 3)))
        with self.assertRaises(ValueError):
            img.data[0, 0, 0] = 1

    def test_invalid(self):
        with self.assertRaises(ValueError):
            Image(np.zeros((2, 2, 2)))
        with self.assertRaises(ValueError):
            Image(np.zeros((0, 2, 3)))
        with self.assertRaises(ValueError):
            Image(np.full((2, 2, 3), 120.0), LAB_F32)
        with self.assertRaises(ValueError):
            Image(np.full((2, 2, 3), np.nan), LINEAR_F32)

    def test_round_half_up(self):
        self.assertEqual(round_half_up(0.5), 1)
        self.assertEqual(round_half_up(2.5), 3)
        self.assertEqual(round_half_up(2.49), 2)


class PatchGeometryTestCase(unittest.TestCase):
    def test_side(self):
        geom = PatchGeometry(0.5, 0.5, 0.233)
        self.assertEqual(geom.side(800, 600), 140)
        self.assertEqual(geom.center_pixels(800, 600), (400.0, 300.0))

    def test_from_pixels(self):
        self.assertEqual(PatchGeometry.from_pixels(200, 150, 800, 600, 0.1), PatchGeometry(0.25, 0.25, 0.1))

    def test_invalid(self):
        with self.assertRaises(ValueError):
            PatchGeometry(1.5, 0.5, 0.2)
        with self.assertRaises(ValueError):
            PatchGeometry(0.5, 0.5, 0.0)
        with self.assertRaises(ValueError):
            PatchGeometry(0.5, 0.5, 1.2)


class ResizeTestCase(unittest.TestCase):
    def test_identity(self):
        img = random_image(0, 7, 5)
        self.assertIs(resize_bilinear(img, 7, 5), img)

    def test_constant_up_down(self):
        img = Image(np.full((9, 13, 3), 77))
        up = resize_bilinear(img, 40, 31)
        self.assertEqual(resize_bilinear(up, 13, 9), img)

    @settings(max_examples=50, deadline=None)
    @given(
        st.integers(0, 2**31),
        st.integers(1, 20),
        st.integers(1, 20),
        st.integers(1, 40),
        st.integers(1, 40),
    )
    def test_within_input_range(self, seed, w, h, out_w, out_h):
        data = np.random.default_rng(seed).random((h, w, 3)).astype(np.float32)
        out = resize_bilinear(Image(data, LINEAR_F32), out_w, out_h).data
        self.assertEqual(out.shape, (out_h, out_w, 3))
        self.assertTrue(np.all(out >= data.min(axis=(0, 1)) - 1e-6))
        self.assertTrue(np.all(out <= data.max(axis=(0, 1)) + 1e-6))

    def test_half_pixel_convention(self):
        img = Image(np.array([[0.0, 1.0]]), LINEAR_F32)
        out = resize_bilinear(img, 4, 1).data[0, :, 0]
        np.testing.assert_allclose(out, [0.0, 0.25, 0.75, 1.0])

    def test_invalid_size(self):
        with self.assertRaises(ValueError):
            resize_bilinear(random_image(0, 4, 4), 0, 3)

    def test_scale_to_min_dim(self):
        img = scale_to_min_dim(random_image(1, 40, 30), 60)
        self.assertEqual((img.width, img.height), (80, 60))


class LabTestCase(unittest.TestCase):
    def test_against_reference(self):
        rgb = np.random.default_rng(3).integers(0, 256, (1000, 3))
        lab = rgb_to_lab(Image(rgb.reshape(1, 1000, 3))).data.reshape(-1, 3)
        delta_e = np.sqrt(((lab - reference_lab(rgb.astype(np.float64))) ** 2).sum(axis=1))
        self.assertLess(delta_e.max(), 0.5)

    def test_white_and_black(self):
        lab = rgb_to_lab(Image(np.array([[[255, 255, 255], [0, 0, 0]]]))).data
        np.testing.assert_allclose(lab[0, 0], [100.0, 0.0, 0.0], atol=0.05)
        np.testing.assert_allclose(lab[0, 1], [0.0, 0.0, 0.0], atol=0.05)

    def test_linear_matches_srgb(self):
        rgb = np.random.default_rng(4).integers(0, 256, (1, 50, 3))
        c = rgb / 255.0
        linear = np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)
        a = rgb_to_lab(Image(rgb)).data
        b = rgb_to_lab(Image(linear, LINEAR_F32)).data
        np.testing.assert_allclose(a, b, atol=0.05)

    def test_lab_passthrough(self):
        lab = rgb_to_lab(random_image(5, 3, 3))
        self.assertIs(rgb_to_lab(lab), lab)


class PatchTestCase(unittest.TestCase):
    @settings(max_examples=30, deadline=None)
    @given(st.floats(0, 1), st.floats(0, 1), st.floats(0.05, 1.0), st.integers(0, 255))
    def test_constant_image(self, cx, cy, scale, value):
        img = Image(np.full((30, 50, 3), value))
        patch = extract_patch(img, PatchGeometry(cx, cy, scale), 16)
        self.assertEqual((patch.width, patch.height), (16, 16))
        self.assertTrue(np.all(patch.data == value))

    def test_crop_replicated(self):
        img = Image(np.arange(12).reshape(3, 4), SRGB_U8)
        crop = crop_replicated(img, -1, -1, 3, 2).data[:, :, 0]
        np.testing.assert_array_equal(crop, [[0, 0, 1], [0, 0, 1]])

    def test_patch_position(self):
        img = Image(np.arange(100).reshape(10, 10), SRGB_U8)
        # side 4 around (5, 5) starts at pixel 3
        patch = extract_patch(img, PatchGeometry(0.5, 0.5, 0.4), 4)
        np.testing.assert_array_equal(patch.data[:, :, 0], img.data[3:7, 3:7, 0])

    def test_too_small(self):
        with self.assertRaises(ValueError):
            extract_patch(random_image(0, 10, 10), PatchGeometry(0.5, 0.5, 0.01))


class PreprocessTestCase(unittest.TestCase):
    def test_mean(self):
        img = Image(np.array([[[124, 117, 104], [255, 255, 255], [0, 0, 0]]]))
        tensor = preprocess(img)
        self.assertEqual(tensor.shape, (1, 3, 1, 3))
        self.assertEqual(tensor.dtype, np.float32)
        np.testing.assert_array_equal(tensor[0, :, 0, 0], [0, 0, 0])
        np.testing.assert_array_equal(tensor[0, :, 0, 1], [131, 138, 151])
        np.testing.assert_array_equal(tensor[0, :, 0, 2], [-124, -117, -104])

    def test_rejects_lab(self):
        with self.assertRaises(ValueError):
            preprocess(rgb_to_lab(random_image(0, 2, 2)))


class ParserTestCase(unittest.TestCase):
    def test_png_and_ppm(self):
        try:
            tempdir = tempfile.mkdtemp()
            img = random_image(7, 11, 6)

            path = os.path.join(tempdir, "img.png")
            Exporter.png(img, path)
            self.assertEqual(Parser.parse_file(path), img)

            path = os.path.join(tempdir, "img.ppm")
            Exporter.ppm(img, path)
            self.assertEqual(Parser.parse_file(path), img)
        finally:
            shutil.rmtree(tempdir)


if __name__ == "__main__":
    unittest.main()

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

from mincseg.ProbabilityMap import Exporter, FormatException, Parser, ProbabilityMap


def float32_map(seed, rows=3, cols=4, labels=5):
    values = np.random.default_rng(seed).random((rows, cols, labels)).astype(np.float32)
    return ProbabilityMap(values, origin=(-0.5, 1.25), spacing=(16.0, 8.0))


class ProbabilityMapTestCase(unittest.TestCase):
    def test_shape(self):
        probmap = float32_map(0)
        self.assertEqual((probmap.rows, probmap.cols, probmap.labels), (3, 4, 5))
        with self.assertRaises(ValueError):
            probmap.values[0, 0, 0] = 1.0

    def test_invalid(self):
        with self.assertRaises(ValueError):
            ProbabilityMap(np.zeros((2, 2)))
        with self.assertRaises(ValueError):
            ProbabilityMap(-np.ones((1, 1, 2)))
        with self.assertRaises(ValueError):
            ProbabilityMap(np.ones((1, 1, 2)), spacing=(0.0, 1.0))

    def test_normalized(self):
        probmap = float32_map(1).normalized()
        self.assertTrue(probmap.is_normalized(1e-12))
        self.assertFalse(ProbabilityMap(np.ones((1, 1, 2))).is_normalized())
        with self.assertRaises(ValueError):
            ProbabilityMap(np.zeros((1, 1, 2))).normalized()

    def test_argmax_ties(self):
        probmap = ProbabilityMap([[[0.4, 0.4, 0.2], [0.1, 0.45, 0.45]]])
        np.testing.assert_array_equal(probmap.argmax(), [[0, 1]])

    def test_sample(self):
        probmap = float32_map(2)
        xs = -0.5 + 16.0 * np.arange(4)
        ys = 1.25 + 8.0 * np.arange(3)
        np.testing.assert_array_equal(probmap.sample(xs, ys), probmap.values)

        mid = probmap.sample([7.5], [1.25])[0, 0]
        np.testing.assert_allclose(mid, 0.5 * (probmap.values[0, 0] + probmap.values[0, 1]))

        corner = probmap.sample([-100.0, 1000.0], [-100.0])[0]
        np.testing.assert_array_equal(corner[0], probmap.values[0, 0])
        np.testing.assert_array_equal(corner[1], probmap.values[0, 3])


class ParserTestCase(unittest.TestCase):
    def test_blob(self):
        probmap = float32_map(3)
        self.assertEqual(Parser.parse_bytes(Exporter.blob(probmap)), probmap)

    def test_text(self):
        probmap = float32_map(4)
        self.assertEqual(Parser.parse_str(Exporter.text(probmap)), probmap)

    def test_bad_blob(self):
        blob = Exporter.blob(float32_map(5))
        with self.assertRaises(FormatException):
            Parser.parse_bytes(blob[:10])
        with self.assertRaises(FormatException):
            Parser.parse_bytes(b"XPRB" + blob[4:])
        with self.assertRaises(FormatException):
            Parser.parse_bytes(blob[:-4])

    def test_bad_text(self):
        with self.assertRaises(FormatException):
            Parser.parse_str("")
        with self.assertRaises(FormatException):
            Parser.parse_str("probmap 1 1 1 2 0 0 1 1\n0.5\n")

    def test_file(self):
        try:
            tempdir = tempfile.mkdtemp()
            probmap = float32_map(6)
            path = os.path.join(tempdir, "a.probmap")
            Exporter.write(probmap, path)
            self.assertEqual(Parser.parse_file(path), probmap)

            path = os.path.join(tempdir, "a.txt")
            with open(path, "w") as f:
                f.write(Exporter.text(probmap))
            self.assertEqual(Parser.parse_file(path), probmap)
        finally:
            shutil.rmtree(tempdir)


if __name__ == "__main__":
    unittest.main()

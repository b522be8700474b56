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

import struct

import numpy as np

MAGIC = b"MPRB"
VERSION = 1
HEADER = struct.Struct("<4sIIII4d")
TEXT_HEADER = "probmap"


class FormatException(Exception):
    pass


class ProbabilityMap(object):
    """
    A ``rows x cols`` grid of label distributions. Cell ``(r, c)`` is centered
    at ``origin + (c, r) * spacing`` in source-image pixel coordinates, where
    pixel ``k`` has its center at ``k``.
    """

    def __init__(self, values, origin=(0.0, 0.0), spacing=(1.0, 1.0)):
        values = np.array(values, dtype=np.float64)
        if values.ndim != 3 or min(values.shape) < 1:
            raise ValueError("Probability map needs a non-empty rows x cols x labels array, got {0}".format(values.shape))
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ValueError("Probabilities must be finite and non-negative")
        if spacing[0] <= 0 or spacing[1] <= 0:
            raise ValueError("Grid spacing must be positive, got {0}".format(spacing))
        values.setflags(write=False)
        self.values = values
        self.origin = (float(origin[0]), float(origin[1]))
        self.spacing = (float(spacing[0]), float(spacing[1]))

    @property
    def rows(self):
        return self.values.shape[0]

    @property
    def cols(self):
        return self.values.shape[1]

    @property
    def labels(self):
        return self.values.shape[2]

    def same_grid(self, other):
        return (
            self.values.shape == other.values.shape
            and self.origin == other.origin
            and self.spacing == other.spacing
        )

    def is_normalized(self, tolerance=1e-5):
        return bool(np.all(np.abs(self.values.sum(axis=2) - 1.0) <= tolerance))

    def normalized(self):
        sums = self.values.sum(axis=2, keepdims=True)
        if np.any(sums <= 0):
            raise ValueError("Cannot normalize a cell with zero total probability")
        return ProbabilityMap(self.values / sums, self.origin, self.spacing)

    def argmax(self):
        # np.argmax returns the first maximum, i.e. the lowest label index.
        return np.argmax(self.values, axis=2)

    def sample(self, xs, ys):
        """
        Bilinearly interpolates the grid at source-image coordinates ``xs``
        (columns) and ``ys`` (rows); positions beyond the outer cells take the
        nearest edge cell.
        """
        gx = np.clip((np.asarray(xs, dtype=np.float64) - self.origin[0]) / self.spacing[0], 0.0, self.cols - 1)
        gy = np.clip((np.asarray(ys, dtype=np.float64) - self.origin[1]) / self.spacing[1], 0.0, self.rows - 1)
        x0 = np.floor(gx).astype(np.intp)
        y0 = np.floor(gy).astype(np.intp)
        x1 = np.minimum(x0 + 1, self.cols - 1)
        y1 = np.minimum(y0 + 1, self.rows - 1)
        wx = (gx - x0)[np.newaxis, :, np.newaxis]
        wy = (gy - y0)[:, np.newaxis, np.newaxis]

        top = self.values[y0]
        rows = top + wy * (self.values[y1] - top)
        left = rows[:, x0]
        return left + wx * (rows[:, x1] - left)

    def __eq__(self, other):
        try:
            return self.same_grid(other) and np.array_equal(self.values, other.values)
        except AttributeError:
            return False

    def __ne__(self, other):
        return not self.__eq__(other)

    def __repr__(self):
        return "ProbabilityMap({0}x{1}x{2}, origin={3}, spacing={4})".format(
            self.rows, self.cols, self.labels, self.origin, self.spacing
        )


class Parser:
    @staticmethod
    def parse_file(path):
        with open(path, "rb") as f:
            data = f.read()
        if data.startswith(MAGIC):
            return Parser.parse_bytes(data)
        return Parser.parse_str(data.decode("utf-8"))

    @staticmethod
    def parse_bytes(data):
        if len(data) < HEADER.size:
            raise FormatException("Truncated probability map header")
        magic, version, rows, cols, labels, ox, oy, sx, sy = HEADER.unpack_from(data, 0)
        if magic != MAGIC:
            raise FormatException("Not a probability map blob")
        if version != VERSION:
            raise FormatException("Unsupported probability map version: {0}".format(version))
        payload = np.frombuffer(data, dtype="<f4", offset=HEADER.size)
        if payload.size != rows * cols * labels:
            raise FormatException("Expected {0} values, found {1}".format(rows * cols * labels, payload.size))
        return ProbabilityMap(payload.reshape(rows, cols, labels), (ox, oy), (sx, sy))

    @staticmethod
    def parse_str(text):
        lines = [line for line in text.split("\n") if line.strip()]
        if not lines:
            raise FormatException("Empty probability map dump")
        head = lines[0].split()
        if len(head) != 9 or head[0] != TEXT_HEADER or int(head[1]) != VERSION:
            raise FormatException("Invalid probability map dump header: {0}".format(lines[0]))
        rows, cols, labels = (int(v) for v in head[2:5])
        ox, oy, sx, sy = (float(v) for v in head[5:9])
        if len(lines) - 1 != rows * cols:
            raise FormatException("Expected {0} cell lines, found {1}".format(rows * cols, len(lines) - 1))
        values = np.zeros((rows * cols, labels))
        for line_no, line in enumerate(lines[1:], 2):
            cell = line.split()
            if len(cell) != labels:
                raise FormatException("Invalid line {0}: {1}".format(line_no, line))
            values[line_no - 2] = [float(v) for v in cell]
        return ProbabilityMap(values.reshape(rows, cols, labels), (ox, oy), (sx, sy))


class Exporter:
    @staticmethod
    def blob(probmap):
        header = HEADER.pack(
            MAGIC,
            VERSION,
            probmap.rows,
            probmap.cols,
            probmap.labels,
            probmap.origin[0],
            probmap.origin[1],
            probmap.spacing[0],
            probmap.spacing[1],
        )
        return header + probmap.values.astype("<f4").tobytes()

    @staticmethod
    def text(probmap):
        """
        Lossless dump of the float32 payload, one cell per line.
        """
        out = [
            "{0} {1} {2} {3} {4} {5!r} {6!r} {7!r} {8!r}".format(
                TEXT_HEADER,
                VERSION,
                probmap.rows,
                probmap.cols,
                probmap.labels,
                probmap.origin[0],
                probmap.origin[1],
                probmap.spacing[0],
                probmap.spacing[1],
            )
        ]
        for cell in probmap.values.astype(np.float32).reshape(-1, probmap.labels):
            out.append(" ".join(repr(float(v)) for v in cell))
        return "\n".join(out) + "\n"

    @staticmethod
    def write(probmap, path):
        with open(path, "wb") as f:
            f.write(Exporter.blob(probmap))

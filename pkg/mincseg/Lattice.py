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

# NOTE: Approximate Gaussian filtering on the permutohedral lattice:
#       splat every point onto the d+1 vertices of its enclosing simplex,
#       blur with [1, 2, 1] / 4 along each of the d+1 lattice directions,
#       then slice back with the same barycentric weights. The result is
#       proportional to the Gaussian sum exp(-|f_i - f_j|^2 / 2), not equal
#       to it; callers normalize or calibrate.

import logging
import math

import numpy as np
import scipy.sparse

logger = logging.getLogger(__name__)


class PermutohedralLattice(object):
    def __init__(self, features):
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] < 1:
            raise ValueError("Lattice features must be a non-empty N x d array, got {0}".format(features.shape))
        if not np.all(np.isfinite(features)):
            raise ValueError("Lattice features must be finite")
        n, d = features.shape
        self.num_points = n
        self.dim = d

        rem0, rank, barycentric = self._enclosing_simplices(features)
        keys, weights = self._simplex_vertices(rem0, rank, barycentric)

        # Neighbour keys step by at most d + 1 per coordinate.
        lower = keys.min(axis=0) - (d + 1)
        dims = tuple(int(v) for v in keys.max(axis=0) - lower + d + 2)
        if math.prod(dims) >= 2**62:
            raise ValueError("Feature range too wide for the lattice hash; increase the kernel bandwidths")
        self._lower = lower
        self._dims = dims

        codes = self._encode(keys)
        self.codes, vertex = np.unique(codes, return_inverse=True)
        vertex = vertex.reshape(-1)
        self.num_vertices = self.codes.size

        pixel = np.repeat(np.arange(n), d + 1)
        self.splat_matrix = scipy.sparse.csr_matrix(
            (weights.astype(np.float32), (vertex, pixel)), shape=(self.num_vertices, n)
        )
        self.slice_matrix = self.splat_matrix.T.tocsr()
        self.blur_matrices = self._blur_matrices()
        logger.debug("Lattice: %d points, %d vertices, dims %s", n, self.num_vertices, dims)

    def _enclosing_simplices(self, features):
        n, d = features.shape
        scale = math.sqrt(2.0 / 3.0) * (d + 1) / np.sqrt((np.arange(d) + 2.0) * (np.arange(d) + 1.0))
        cf = features * scale

        # Project onto the plane sum(x) = 0 in d + 1 dimensions.
        suffix = np.zeros((n, d + 1))
        suffix[:, :d] = np.cumsum(cf[:, ::-1], axis=1)[:, ::-1]
        elevated = suffix.copy()
        elevated[:, 1:] -= np.arange(1, d + 1) * cf

        # Closest remainder-0 lattice point.
        v = elevated / (d + 1)
        up = np.ceil(v) * (d + 1)
        down = np.floor(v) * (d + 1)
        rem0 = np.where(up - elevated < elevated - down, up, down)
        total = np.rint(rem0.sum(axis=1) / (d + 1)).astype(np.int64)

        delta = elevated - rem0
        less = delta[:, :, np.newaxis] < delta[:, np.newaxis, :]
        upper = np.triu(np.ones((d + 1, d + 1), dtype=bool), 1)
        rank = (less & upper).sum(axis=2) + (~less & upper).sum(axis=1)
        rank = rank + total[:, np.newaxis]

        low = rank < 0
        high = rank > d
        rank[low] += d + 1
        rem0[low] += d + 1
        rank[high] -= d + 1
        rem0[high] -= d + 1

        delta = (elevated - rem0) / (d + 1)
        barycentric = np.zeros((n, d + 2))
        rows = np.arange(n)
        for i in range(d + 1):
            barycentric[rows, d - rank[:, i]] += delta[:, i]
            barycentric[rows, d + 1 - rank[:, i]] -= delta[:, i]
        barycentric[:, 0] += 1.0 + barycentric[:, d + 1]
        return rem0.astype(np.int64), rank, barycentric[:, : d + 1]

    def _simplex_vertices(self, rem0, rank, barycentric):
        n, d1 = rem0.shape
        d = d1 - 1
        i = np.arange(d + 1)
        canonical = np.array([np.where(i < d + 1 - r, r, r - (d + 1)) for r in range(d + 1)])
        keys = np.empty((n, d + 1, d), dtype=np.int64)
        for r in range(d + 1):
            keys[:, r, :] = rem0[:, :d] + canonical[r][rank[:, :d]]
        return keys.reshape(-1, d), barycentric.reshape(-1)

    def _encode(self, keys):
        shifted = keys - self._lower
        return np.ravel_multi_index(tuple(shifted.T), self._dims)

    def _blur_matrices(self):
        """
        One [1, 2, 1] / 4 blur matrix per lattice direction. Occupied keys sit
        inside the hash box with a margin, so a neighbour's code is the
        vertex code plus a fixed offset; one sorted lookup per direction finds
        every (vertex, plus-neighbour) pair, and the minus side is its mirror.
        """
        d = self.dim
        strides = np.ones(d, dtype=np.int64)
        for i in range(d - 2, -1, -1):
            strides[i] = strides[i + 1] * self._dims[i + 1]
        m = self.num_vertices
        diagonal = np.arange(m)
        matrices = []
        for direction in range(d + 1):
            step = np.ones(d, dtype=np.int64)
            if direction < d:
                step[direction] -= d + 1
            neighbour = self.codes + int(step @ strides)
            index = np.minimum(np.searchsorted(self.codes, neighbour), m - 1)
            found = self.codes[index] == neighbour
            vertex = np.nonzero(found)[0]
            plus = index[found]
            rows = np.concatenate([diagonal, vertex, plus])
            cols = np.concatenate([diagonal, plus, vertex])
            vals = np.concatenate(
                [np.full(m, 0.5, dtype=np.float32), np.full(2 * vertex.size, 0.25, dtype=np.float32)]
            )
            matrices.append(scipy.sparse.csr_matrix((vals, (rows, cols)), shape=(m, m)))
        return matrices

    def filter(self, values):
        """
        Splat, blur and slice the columns of ``values``. Returns float32.
        """
        values = np.asarray(values, dtype=np.float32)
        squeeze = values.ndim == 1
        if squeeze:
            values = values[:, np.newaxis]
        if values.shape[0] != self.num_points:
            raise ValueError("Expected {0} value rows, got {1}".format(self.num_points, values.shape[0]))
        lattice = self.splat_matrix @ values
        for blur in self.blur_matrices:
            lattice = blur @ lattice
        out = self.slice_matrix @ lattice
        return out[:, 0] if squeeze else out

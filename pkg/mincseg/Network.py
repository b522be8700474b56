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

# NOTE: Tensors are numpy float32 arrays shaped (batch, channels, rows, cols).
#       Layers are evaluated without padding across window borders, so a
#       sliding network reproduces the patch network exactly only when every
#       layer has pad 0.

import json
import logging
import math
import struct

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .Consts import NUM_CATEGORIES
from .ProbabilityMap import ProbabilityMap

logger = logging.getLogger(__name__)

LAYER_KINDS = [CONV, MAX_POOL, RELU, FULLY_CONNECTED, SOFTMAX] = range(5)
LAYER_KIND_NAMES = ["conv", "maxpool", "relu", "fc", "softmax"]

MODES = [PATCH, SLIDING] = range(2)
MODE_NAMES = ["patch", "sliding"]

ROLES = [WEIGHT, BIAS] = range(2)

SPEC_VERSION = 1
WEIGHTS_MAGIC = b"MWTS"
WEIGHTS_VERSION = 1
DEFAULT_WEIGHT_SIGMA = 0.05


class InvalidStateError(Exception):
    pass


class ShapeError(ValueError):
    pass


class FormatException(Exception):
    pass


def as_tensor(array):
    tensor = np.ascontiguousarray(array, dtype=np.float32)
    if tensor.ndim != 4:
        raise ShapeError("Tensor must have 4 dimensions, got shape {0}".format(tensor.shape))
    if not np.all(np.isfinite(tensor)):
        raise ValueError("Tensor values must be finite")
    return tensor


class LayerSpec(object):
    def __init__(self, kind, kernel=1, stride=1, pad=0, out_channels=None):
        if kind not in LAYER_KINDS:
            raise ValueError("Unknown layer kind: {0}".format(kind))
        if kernel < 1 or stride < 1 or pad < 0:
            raise ValueError("Invalid layer geometry: kernel={0} stride={1} pad={2}".format(kernel, stride, pad))
        if kind in (CONV, FULLY_CONNECTED):
            if out_channels is None or out_channels < 1:
                raise ValueError("{0} layer needs out_channels >= 1".format(LAYER_KIND_NAMES[kind]))
        else:
            out_channels = None
        if kind in (RELU, SOFTMAX, FULLY_CONNECTED):
            kernel, stride, pad = 1, 1, 0
        self.kind = kind
        self.kernel = int(kernel)
        self.stride = int(stride)
        self.pad = int(pad)
        self.out_channels = out_channels

    @classmethod
    def conv(cls, out_channels, kernel, stride=1, pad=0):
        return cls(CONV, kernel, stride, pad, out_channels)

    @classmethod
    def max_pool(cls, kernel, stride=None, pad=0):
        return cls(MAX_POOL, kernel, kernel if stride is None else stride, pad)

    @classmethod
    def relu(cls):
        return cls(RELU)

    @classmethod
    def fully_connected(cls, out_channels):
        return cls(FULLY_CONNECTED, out_channels=out_channels)

    @classmethod
    def softmax(cls):
        return cls(SOFTMAX)

    def has_params(self):
        return self.kind in (CONV, FULLY_CONNECTED)

    def to_dict(self):
        d = {"kind": LAYER_KIND_NAMES[self.kind], "kernel": self.kernel, "stride": self.stride, "pad": self.pad}
        if self.out_channels is not None:
            d["out_channels"] = self.out_channels
        return d

    @classmethod
    def from_dict(cls, d):
        if d.get("kind") not in LAYER_KIND_NAMES:
            raise FormatException("Unknown layer kind: {0}".format(d.get("kind")))
        return cls(
            LAYER_KIND_NAMES.index(d["kind"]),
            d.get("kernel", 1),
            d.get("stride", 1),
            d.get("pad", 0),
            d.get("out_channels"),
        )

    def __eq__(self, other):
        try:
            return self.to_dict() == other.to_dict()
        except AttributeError:
            return False

    def __ne__(self, other):
        return not self.__eq__(other)

    def __repr__(self):
        return "LayerSpec({0})".format(self.to_dict())


class NetworkSpec(object):
    """
    An ordered layer list. In patch mode ``input_size`` is the side of the
    square input; in sliding mode it is the window covered by one output cell.
    """

    def __init__(self, layers, input_size, num_labels=NUM_CATEGORIES, mode=PATCH, in_channels=3):
        if mode not in MODES:
            raise ValueError("Unknown network mode: {0}".format(mode))
        if input_size < 1 or num_labels < 1 or in_channels < 1:
            raise ValueError("input_size, num_labels and in_channels must be positive")
        self.layers = list(layers)
        self.input_size = int(input_size)
        self.num_labels = int(num_labels)
        self.mode = mode
        self.in_channels = int(in_channels)

        if mode == PATCH:
            if not self.layers or self.layers[-1].kind != SOFTMAX:
                raise ValueError("A patch network must end in a softmax layer")
            producers = [layer for layer in self.layers if layer.has_params()]
            if not producers or producers[-1].out_channels != self.num_labels:
                raise ValueError("The last conv/fc layer must output {0} labels".format(self.num_labels))

    @property
    def total_stride(self):
        stride = 1
        for layer in self.layers:
            stride *= layer.stride
        return stride

    @property
    def receptive_field(self):
        field = 1
        jump = 1
        for layer in self.layers:
            if layer.kind == FULLY_CONNECTED:
                # Spans whatever is left of the input window.
                return self.input_size
            field += (layer.kernel - 1) * jump
            jump *= layer.stride
        return field

    def output_shapes(self, size=None):
        """
        Returns the ``(channels, rows, cols)`` shape after every layer for a
        square input of ``size`` (default ``input_size``).
        """
        size = self.input_size if size is None else size
        channels, rows, cols = self.in_channels, size, size
        shapes = []
        for index, layer in enumerate(self.layers):
            if layer.kind == FULLY_CONNECTED:
                channels, rows, cols = layer.out_channels, 1, 1
            elif layer.kind in (CONV, MAX_POOL):
                rows = (rows + 2 * layer.pad - layer.kernel) // layer.stride + 1
                cols = (cols + 2 * layer.pad - layer.kernel) // layer.stride + 1
                if rows < 1 or cols < 1:
                    raise InvalidStateError("Layer {0} has no spatial output for input size {1}".format(index, size))
                if layer.kind == CONV:
                    channels = layer.out_channels
            shapes.append((channels, rows, cols))
        return shapes

    def param_shapes(self):
        """
        Maps layer index to ``(weight_shape, bias_shape)``.
        """
        shapes = {}
        channels, rows, cols = self.in_channels, self.input_size, self.input_size
        for index, (layer, out_shape) in enumerate(zip(self.layers, self.output_shapes())):
            if layer.kind == CONV:
                shapes[index] = ((layer.out_channels, channels, layer.kernel, layer.kernel), (layer.out_channels,))
            elif layer.kind == FULLY_CONNECTED:
                shapes[index] = ((layer.out_channels, channels * rows * cols), (layer.out_channels,))
            channels, rows, cols = out_shape
        return shapes

    def to_dict(self):
        return {
            "version": SPEC_VERSION,
            "mode": MODE_NAMES[self.mode],
            "input_size": self.input_size,
            "in_channels": self.in_channels,
            "num_labels": self.num_labels,
            "layers": [layer.to_dict() for layer in self.layers],
        }

    def __eq__(self, other):
        try:
            return self.to_dict() == other.to_dict()
        except AttributeError:
            return False

    def __ne__(self, other):
        return not self.__eq__(other)

    def __repr__(self):
        return "NetworkSpec({0} layers, input {1}, {2})".format(
            len(self.layers), self.input_size, MODE_NAMES[self.mode]
        )


class WeightStore(object):
    """
    Weight and bias blobs keyed by layer index. Blobs are read-only.
    """

    def __init__(self, blobs=None):
        self.blobs = {}
        for (layer, role), blob in (blobs or {}).items():
            self.set(layer, role, blob)

    def set(self, layer, role, blob):
        if role not in ROLES:
            raise ValueError("Unknown blob role: {0}".format(role))
        blob = np.array(blob, dtype=np.float32)
        blob.setflags(write=False)
        self.blobs[(int(layer), role)] = blob

    def get(self, layer):
        try:
            return self.blobs[(layer, WEIGHT)], self.blobs[(layer, BIAS)]
        except KeyError:
            raise InvalidStateError("Missing weights for layer {0}".format(layer))

    def check(self, net):
        for index, (weight_shape, bias_shape) in net.param_shapes().items():
            weight, bias = self.get(index)
            if weight.size != int(np.prod(weight_shape)) or bias.size != int(np.prod(bias_shape)):
                raise ShapeError(
                    "Layer {0} expects weights {1} and bias {2}, got {3} and {4}".format(
                        index, weight_shape, bias_shape, weight.shape, bias.shape
                    )
                )

    @property
    def parameter_count(self):
        return int(sum(blob.size for blob in self.blobs.values()))

    def __eq__(self, other):
        try:
            return self.blobs.keys() == other.blobs.keys() and all(
                np.array_equal(blob, other.blobs[key]) for key, blob in self.blobs.items()
            )
        except AttributeError:
            return False

    def __ne__(self, other):
        return not self.__eq__(other)


def random_weights(net, seed, sigma=DEFAULT_WEIGHT_SIGMA):
    rng = np.random.default_rng(seed)
    store = WeightStore()
    for index, (weight_shape, bias_shape) in sorted(net.param_shapes().items()):
        store.set(index, WEIGHT, rng.normal(0.0, sigma, size=weight_shape))
        store.set(index, BIAS, rng.normal(0.0, sigma, size=bias_shape))
    return store


def toy_network(num_labels=NUM_CATEGORIES, input_size=224, in_channels=3):
    """
    A small AlexNet-style patch network with total stride 32.
    """
    layers = [
        LayerSpec.conv(16, 11, 4),
        LayerSpec.relu(),
        LayerSpec.max_pool(3, 2),
        LayerSpec.conv(32, 3, 2),
        LayerSpec.relu(),
        LayerSpec.max_pool(2, 2),
        LayerSpec.fully_connected(64),
        LayerSpec.relu(),
        LayerSpec.fully_connected(num_labels),
        LayerSpec.softmax(),
    ]
    return NetworkSpec(layers, input_size, num_labels, PATCH, in_channels)


def random_network(seed, net=None, sigma=DEFAULT_WEIGHT_SIGMA):
    """
    ``net`` (the toy network by default) with seeded Gaussian weights.
    """
    net = net or toy_network()
    return net, random_weights(net, seed, sigma)


def conv2d(x, weight, bias, stride, pad):
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    kernel = weight.shape[2]
    windows = sliding_window_view(x, (kernel, kernel), axis=(2, 3))[:, :, ::stride, ::stride]
    out = np.tensordot(windows, weight, axes=([1, 4, 5], [1, 2, 3]))
    out = out.transpose(0, 3, 1, 2) + bias.reshape(1, -1, 1, 1)
    return np.ascontiguousarray(out, dtype=np.float32)


def max_pool2d(x, kernel, stride, pad):
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)), constant_values=-np.inf)
    windows = sliding_window_view(x, (kernel, kernel), axis=(2, 3))[:, :, ::stride, ::stride]
    return np.ascontiguousarray(windows.max(axis=(4, 5)))


def softmax(x, axis=1):
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def forward(net, weights, x):
    """
    Runs every layer of ``net`` on the tensor ``x`` and returns the output
    tensor.
    """
    x = as_tensor(x)
    if x.shape[1] != net.in_channels:
        raise ShapeError("Network expects {0} input channels, got {1}".format(net.in_channels, x.shape[1]))
    for index, layer in enumerate(net.layers):
        if layer.kind == CONV:
            weight, bias = weights.get(index)
            if weight.ndim != 4:
                weight = weight.reshape(layer.out_channels, x.shape[1], layer.kernel, layer.kernel)
            if x.shape[2] + 2 * layer.pad < layer.kernel or x.shape[3] + 2 * layer.pad < layer.kernel:
                raise ShapeError("Input of layer {0} is smaller than its kernel".format(index))
            x = conv2d(x, weight, bias, layer.stride, layer.pad)
        elif layer.kind == MAX_POOL:
            x = max_pool2d(x, layer.kernel, layer.stride, layer.pad)
        elif layer.kind == RELU:
            x = np.maximum(x, 0.0)
        elif layer.kind == FULLY_CONNECTED:
            weight, bias = weights.get(index)
            flat = x.reshape(x.shape[0], -1)
            if flat.shape[1] * layer.out_channels != weight.size:
                raise ShapeError("Layer {0} got {1} inputs per example".format(index, flat.shape[1]))
            weight = weight.reshape(layer.out_channels, flat.shape[1])
            x = (flat @ weight.T + bias).astype(np.float32).reshape(x.shape[0], -1, 1, 1)
        elif layer.kind == SOFTMAX:
            x = softmax(x, axis=1)
    return x


def forward_patch(net, weights, x):
    if net.mode != PATCH:
        raise ValueError("forward_patch needs a patch-mode network")
    x = as_tensor(x)
    if x.shape[0] != 1 or x.shape[2:] != (net.input_size, net.input_size):
        raise ShapeError("Expected input 1x{0}x{1}x{1}, got {2}".format(net.in_channels, net.input_size, x.shape))
    weights.check(net)
    out = forward(net, weights, x)
    return out.reshape(-1).astype(np.float64)


def convolutionalize(net, weights):
    """
    Rewrites every fully connected layer as a convolution: the first one with
    a kernel covering its whole input, later ones as 1x1. Weights are
    reshaped, never changed.
    """
    if net.mode != PATCH:
        raise ValueError("Only patch-mode networks can be convolutionalized")
    if any(layer.pad for layer in net.layers):
        logger.warning("Network has padded layers; sliding output will differ from patches near window borders")

    try:
        shapes = net.output_shapes()
    except InvalidStateError as e:
        raise InvalidStateError("Cannot infer spatial sizes for conversion: {0}".format(e))

    layers = []
    converted = WeightStore(weights.blobs)
    channels, rows, cols = net.in_channels, net.input_size, net.input_size
    for index, layer in enumerate(net.layers):
        if layer.kind == FULLY_CONNECTED:
            if rows != cols:
                raise InvalidStateError("Fully connected layer {0} sees a non-square {1}x{2} input".format(index, rows, cols))
            weight, bias = weights.get(index)
            if weight.size != layer.out_channels * channels * rows * cols:
                raise ShapeError("Layer {0} weights do not match a {1}x{2}x{3} input".format(index, channels, rows, cols))
            converted.set(index, WEIGHT, weight.reshape(layer.out_channels, channels, rows, cols))
            layers.append(LayerSpec.conv(layer.out_channels, rows, 1))
        else:
            layers.append(layer)
        channels, rows, cols = shapes[index]
    sliding = NetworkSpec(layers, net.input_size, net.num_labels, SLIDING, net.in_channels)
    return sliding, converted


def alignment_pad(net):
    """
    Edge-replicated border that centers the first receptive field on pixel 0.
    """
    return int(math.ceil(net.receptive_field / 2.0))


def _dense_grid(net, weights, x):
    out = forward(net, weights, x)
    return out[0].transpose(1, 2, 0).astype(np.float64)


def forward_dense(net, weights, image, half_stride=True, align=True):
    """
    Classifies every ``total_stride``-spaced window of ``image`` (a
    ``1 x C x H x W`` tensor). With ``half_stride`` the input is also run
    shifted by half the stride in x, y and both, and the four grids are
    interleaved.
    """
    if net.mode != SLIDING:
        raise ValueError("forward_dense needs a sliding-mode network; use convolutionalize first")
    image = as_tensor(image)
    if image.shape[0] != 1:
        raise ShapeError("forward_dense takes a single image")
    window = net.input_size
    if image.shape[2] < window or image.shape[3] < window:
        raise ValueError(
            "Image {0}x{1} is smaller than the {2}px network window".format(image.shape[3], image.shape[2], window)
        )
    weights.check(net)

    pad = alignment_pad(net) if align else 0
    if pad:
        image = np.pad(image, ((0, 0), (0, 0), (pad, pad), (pad, pad)), mode="edge")

    stride = net.total_stride
    grid = _dense_grid(net, weights, image)
    spacing = float(stride)

    if half_stride:
        if stride % 2:
            raise ValueError("Half-stride prediction needs an even total stride, got {0}".format(stride))
        half = stride // 2
        rows, cols = grid.shape[:2]
        shifted_x = _shifted_grid(net, weights, image[:, :, :, half:])
        shifted_y = _shifted_grid(net, weights, image[:, :, half:, :])
        shifted_xy = _shifted_grid(net, weights, image[:, :, half:, half:])
        rows_y = shifted_y.shape[0] if shifted_y is not None else 0
        cols_x = shifted_x.shape[1] if shifted_x is not None else 0

        dense = np.zeros((rows + rows_y, cols + cols_x, grid.shape[2]))
        dense[0::2, 0::2] = grid
        if cols_x:
            dense[0::2, 1::2] = shifted_x[:rows]
        if rows_y:
            dense[1::2, 0::2] = shifted_y[:, :cols]
        if rows_y and cols_x:
            dense[1::2, 1::2] = shifted_xy[:rows_y, :cols_x]
        grid = dense
        spacing = stride / 2.0

    origin = (net.receptive_field - 1) / 2.0 - pad
    return ProbabilityMap(grid, origin=(origin, origin), spacing=(spacing, spacing))


def _shifted_grid(net, weights, image):
    # TODO: reuse the unshifted feature maps below the last pooling layer
    # instead of recomputing every layer for the shifted inputs.
    if image.shape[2] < net.input_size or image.shape[3] < net.input_size:
        return None
    return _dense_grid(net, weights, image)


class Parser:
    @staticmethod
    def parse_spec_file(path):
        with open(path) as f:
            return Parser.parse_spec_str(f.read())

    @staticmethod
    def parse_spec_str(spec_str):
        try:
            d = json.loads(spec_str)
        except ValueError as e:
            raise FormatException("Invalid network spec JSON: {0}".format(e))
        if d.get("version") != SPEC_VERSION:
            raise FormatException("Unsupported network spec version: {0}".format(d.get("version")))
        if d.get("mode", "patch") not in MODE_NAMES:
            raise FormatException("Unknown network mode: {0}".format(d.get("mode")))
        try:
            return NetworkSpec(
                [LayerSpec.from_dict(layer) for layer in d["layers"]],
                d["input_size"],
                d.get("num_labels", NUM_CATEGORIES),
                MODE_NAMES.index(d.get("mode", "patch")),
                d.get("in_channels", 3),
            )
        except KeyError as e:
            raise FormatException("Network spec is missing {0}".format(e))

    @staticmethod
    def parse_weights_file(path):
        with open(path, "rb") as f:
            return Parser.parse_weights_bytes(f.read())

    @staticmethod
    def parse_weights_bytes(data):
        if len(data) < 12 or data[:4] != WEIGHTS_MAGIC:
            raise FormatException("Not a weight blob")
        version, count = struct.unpack_from("<II", data, 4)
        if version != WEIGHTS_VERSION:
            raise FormatException("Unsupported weight blob version: {0}".format(version))
        index_end = 12 + count * 24
        if len(data) < index_end:
            raise FormatException("Truncated weight blob index")
        payload = np.frombuffer(data, dtype="<f4", offset=index_end)
        store = WeightStore()
        for i in range(count):
            layer, role, offset, length = struct.unpack_from("<IIQQ", data, 12 + i * 24)
            if offset + length > payload.size:
                raise FormatException("Weight entry {0} exceeds the payload".format(i))
            store.set(layer, role, payload[offset : offset + length])
        return store


class Exporter:
    @staticmethod
    def spec_json(net):
        return json.dumps(net.to_dict(), indent=2, sort_keys=True) + "\n"

    @staticmethod
    def weights_blob(weights):
        keys = sorted(weights.blobs.keys())
        header = [WEIGHTS_MAGIC, struct.pack("<II", WEIGHTS_VERSION, len(keys))]
        payload = []
        offset = 0
        for layer, role in keys:
            blob = weights.blobs[(layer, role)].reshape(-1)
            header.append(struct.pack("<IIQQ", layer, role, offset, blob.size))
            payload.append(blob.astype("<f4").tobytes())
            offset += blob.size
        return b"".join(header + payload)

    @staticmethod
    def write(net, weights, spec_path, weights_path):
        with open(spec_path, "w") as f:
            f.write(Exporter.spec_json(net))
        with open(weights_path, "wb") as f:
            f.write(Exporter.weights_blob(weights))

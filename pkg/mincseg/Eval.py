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

# NOTE: Annotation coordinates live in the original photo (the image spans
#       [0, width] x [0, height]); label maps may be smaller. A click lands in
#       the label map pixel containing it after rescaling, and a segment
#       covers the label map pixels whose centers fall inside the rescaled
#       polygon (even-odd rule).

import csv
import io
import itertools
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from skimage.measure import points_in_poly

from .Consts import CATEGORY_NAMES, DEFAULT_CRF_GRID, DEFAULT_CRF_ITERATIONS, DEFAULT_SWEEP_SCALES, NUM_CATEGORIES
from .Consts import PROBABILITY_FLOOR
from .CRF import LATTICE, CrfParams, LabelMap, build_features, map_labels, meanfield_infer, unary_from_probmap
from .Image import PatchGeometry, extract_patch, resize_bilinear, rgb_to_lab

logger = logging.getLogger(__name__)

ENSEMBLE_MODES = [ARITHMETIC, GEOMETRIC] = range(2)
ENSEMBLE_MODE_NAMES = ["arithmetic", "geometric"]

OBJECTIVES = [SEGMENT_CLASS_ACC, CLICK_CLASS_ACC] = range(2)
OBJECTIVE_NAMES = ["segment", "click"]

REPORT_VERSION = 1


class ConfusionMatrix(object):
    """
    Rows are true categories, columns predicted ones. Entries may be
    fractional when a segment contributes its per-pixel accuracy.
    """

    def __init__(self, counts=None, num_labels=NUM_CATEGORIES):
        if counts is None:
            counts = np.zeros((num_labels, num_labels))
        counts = np.array(counts, dtype=np.float64)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ValueError("Confusion matrix must be square, got {0}".format(counts.shape))
        if np.any(counts < 0):
            raise ValueError("Confusion matrix entries must be non-negative")
        self.counts = counts

    @property
    def num_labels(self):
        return self.counts.shape[0]

    def add(self, true, predicted, weight=1.0):
        self.counts[true, predicted] += weight

    def add_row(self, true, row):
        self.counts[true] += row

    def __add__(self, other):
        return ConfusionMatrix(self.counts + other.counts)

    def per_category(self):
        rows = self.counts.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(rows > 0, np.diag(self.counts) / rows, np.nan)


def summarize(confusion):
    """
    (mean class accuracy, total accuracy). The mean runs over the categories
    with at least one example.
    """
    counts = confusion.counts if isinstance(confusion, ConfusionMatrix) else np.asarray(confusion, dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        raise ValueError("Cannot summarize an empty confusion matrix")
    rows = counts.sum(axis=1)
    present = rows > 0
    per_category = np.diag(counts)[present] / rows[present]
    return float(per_category.mean()), float(np.trace(counts) / total)


class EvalReport(object):
    def __init__(self, confusion):
        self.confusion = confusion
        self.mean_class_accuracy, self.total_accuracy = summarize(confusion)
        self.per_category = confusion.per_category()

    def to_dict(self):
        per_category = {}
        for i, acc in enumerate(self.per_category):
            name = CATEGORY_NAMES[i] if i < len(CATEGORY_NAMES) else str(i)
            per_category[name] = None if math.isnan(acc) else float(acc)
        return {
            "version": REPORT_VERSION,
            "mean_class_accuracy": self.mean_class_accuracy,
            "total_accuracy": self.total_accuracy,
            "per_category": per_category,
            "confusion": self.confusion.counts.tolist(),
        }

    def __repr__(self):
        return "EvalReport(mean_class_accuracy={0:.4f}, total_accuracy={1:.4f})".format(
            self.mean_class_accuracy, self.total_accuracy
        )


def _labels_of(labelmaps, photo_id):
    try:
        labelmap = labelmaps[photo_id]
    except KeyError:
        raise ValueError("No label map for photo {0}".format(photo_id))
    return labelmap.labels if isinstance(labelmap, LabelMap) else np.asarray(labelmap)


def _rescale(photo_id, labels, image_dims):
    if image_dims is None:
        return 1.0, 1.0
    width, height = image_dims[photo_id]
    return labels.shape[1] / float(width), labels.shape[0] / float(height)


def eval_clicks(labelmaps, clicks, image_dims=None, num_labels=NUM_CATEGORIES):
    """
    Each click adds 1 to confusion[true][label under the click]. Without
    ``image_dims`` clicks are given in label map coordinates.
    """
    confusion = ConfusionMatrix(num_labels=num_labels)
    for click in clicks:
        labels = _labels_of(labelmaps, click.photo_id)
        sx, sy = _rescale(click.photo_id, labels, image_dims)
        h, w = labels.shape
        x, y = click.point[0] * sx, click.point[1] * sy
        if not (0 <= x <= w and 0 <= y <= h):
            raise ValueError("Click {0} lies outside the label map of photo {1}".format(click.point, click.photo_id))
        col = min(int(math.floor(x)), w - 1)
        row = min(int(math.floor(y)), h - 1)
        confusion.add(click.category, labels[row, col])
    return EvalReport(confusion)


def rasterize(vertices, width, height):
    """
    Boolean ``height x width`` mask of the pixels whose centers lie inside
    the polygon.
    """
    vertices = np.asarray(vertices, dtype=np.float64)
    mask = np.zeros((height, width), dtype=bool)
    x0 = max(0, int(math.floor(vertices[:, 0].min() - 0.5)))
    x1 = min(width, int(math.ceil(vertices[:, 0].max() + 0.5)))
    y0 = max(0, int(math.floor(vertices[:, 1].min() - 0.5)))
    y1 = min(height, int(math.ceil(vertices[:, 1].max() + 0.5)))
    if x0 >= x1 or y0 >= y1:
        return mask
    ys, xs = np.mgrid[y0:y1, x0:x1]
    centers = np.stack([xs.reshape(-1) + 0.5, ys.reshape(-1) + 0.5], axis=1)
    mask[y0:y1, x0:x1] = points_in_poly(centers, vertices).reshape(y1 - y0, x1 - x0)
    return mask


def eval_segments(labelmaps, segments, image_dims=None, num_labels=NUM_CATEGORIES):
    """
    Each segment adds one confusion row holding the fraction of its pixels
    predicted as each label, so a category's accuracy is the mean over its
    segments of their per-pixel accuracy.
    """
    confusion = ConfusionMatrix(num_labels=num_labels)
    skipped = 0
    for segment in segments:
        labels = _labels_of(labelmaps, segment.photo_id)
        sx, sy = _rescale(segment.photo_id, labels, image_dims)
        vertices = np.asarray(segment.vertices) * (sx, sy)
        mask = rasterize(vertices, labels.shape[1], labels.shape[0])
        inside = labels[mask]
        if inside.size == 0:
            skipped += 1
            continue
        confusion.add_row(segment.category, np.bincount(inside, minlength=num_labels)[:num_labels] / inside.size)
    if skipped:
        logger.warning("Skipped %d segments covering no label map pixel", skipped)
    return EvalReport(confusion)


def eval_patches(records, predictions, num_labels=NUM_CATEGORIES):
    """
    Patch classification accuracy. ``predictions`` holds one label or one
    probability vector per record.
    """
    if len(records) != len(predictions):
        raise ValueError("Got {0} predictions for {1} records".format(len(predictions), len(records)))
    confusion = ConfusionMatrix(num_labels=num_labels)
    for record, prediction in zip(records, predictions):
        if np.ndim(prediction) > 0:
            prediction = int(np.argmax(prediction))
        confusion.add(record.category, int(prediction))
    return EvalReport(confusion)


def ensemble_combine(maps, mode=ARITHMETIC):
    """
    Combines the outputs of several networks on the same grid with an
    arithmetic or geometric mean, renormalized per cell.
    """
    if not maps:
        raise ValueError("Nothing to combine")
    first = maps[0]
    for other in maps[1:]:
        if not first.same_grid(other):
            raise ValueError("Cannot combine {0!r} with {1!r}".format(first, other))
    stack = np.stack([m.values for m in maps])
    if mode == ARITHMETIC:
        combined = stack.mean(axis=0)
    elif mode == GEOMETRIC:
        combined = np.exp(np.log(np.maximum(stack, PROBABILITY_FLOOR)).mean(axis=0))
    else:
        raise ValueError("Unknown ensemble mode: {0}".format(mode))
    combined /= combined.sum(axis=2, keepdims=True)
    return type(first)(combined, first.origin, first.spacing)


class ScaleSweep(object):
    def __init__(self, reports):
        self.reports = dict(reports)
        scales = list(self.reports)
        self.best_scale = max(scales, key=lambda s: (self.reports[s].mean_class_accuracy, -scales.index(s)))
        self.peak_scales = []
        for category in range(len(self.reports[scales[0]].per_category)):
            accs = [self.reports[s].per_category[category] for s in scales]
            if all(math.isnan(a) for a in accs):
                self.peak_scales.append(None)
            else:
                self.peak_scales.append(scales[int(np.nanargmax(accs))])


def sweep_patch_scales(records, images, classify, scales=DEFAULT_SWEEP_SCALES, num_labels=NUM_CATEGORIES):
    """
    Re-extracts every record's patch at each scale around the same center
    and scores ``classify(patch)`` with :func:`eval_patches`.
    """
    if not scales:
        raise ValueError("Need at least one patch scale")
    reports = {}
    for scale in scales:
        predictions = []
        for record in records:
            geometry = PatchGeometry(record.geometry.center_x, record.geometry.center_y, scale)
            predictions.append(classify(extract_patch(images[record.photo_id], geometry)))
        reports[scale] = eval_patches(records, predictions, num_labels)
        logger.info("Patch scale %.3f: mean class accuracy %.4f", scale, reports[scale].mean_class_accuracy)
    return ScaleSweep(reports)


class ValidationPhoto(object):
    """
    One validation image with its precomputed unary. ``dims`` is the
    coordinate frame of the annotations; the image is brought to the unary
    grid and converted to L*a*b* once.
    """

    def __init__(self, photo_id, image, unary, segments=(), clicks=(), dims=None):
        self.photo_id = photo_id
        self.unary = unary
        self.dims = dims if dims is not None else (image.width, image.height)
        if (image.width, image.height) != (unary.width, unary.height):
            image = resize_bilinear(image, unary.width, unary.height)
        self.lab = rgb_to_lab(image)
        self.segments = list(segments)
        self.clicks = list(clicks)

    @classmethod
    def from_probmap(cls, photo_id, image, probmap, segments=(), clicks=(), dims=None):
        unary = unary_from_probmap(probmap, probmap.cols, probmap.rows)
        return cls(photo_id, image, unary, segments, clicks, dims or (image.width, image.height))

    def segment(self, params, backend=LATTICE):
        features = build_features(self.lab, params)
        return map_labels(meanfield_infer(self.unary, features, params.w_p, params.iterations, backend))


class TrialResult(object):
    def __init__(self, params, segment_report=None, click_report=None):
        self.params = params
        self.segment_report = segment_report
        self.click_report = click_report

    def report(self, objective):
        report = self.segment_report if objective == SEGMENT_CLASS_ACC else self.click_report
        if report is None:
            raise ValueError("No {0} annotations to score".format(OBJECTIVE_NAMES[objective]))
        return report

    def score(self, objective):
        return self.report(objective).mean_class_accuracy

    def to_dict(self):
        d = {"params": self.params.to_dict()}
        for name, report in (("segment", self.segment_report), ("click", self.click_report)):
            if report is not None:
                d[name] = {"mean_class_accuracy": report.mean_class_accuracy, "total_accuracy": report.total_accuracy}
        return d


def expand_grid(grid=DEFAULT_CRF_GRID, iterations=DEFAULT_CRF_ITERATIONS):
    """
    Cartesian product of the ``theta_p``, ``theta_L``, ``theta_ab`` and
    ``w_p`` ranges, in that nesting order.
    """
    keys = ("theta_p", "theta_L", "theta_ab", "w_p")
    return [
        CrfParams(*values, iterations=iterations) for values in itertools.product(*(grid[key] for key in keys))
    ]


def run_trial(bundle, params, backend=LATTICE):
    labelmaps = {photo.photo_id: photo.segment(params, backend) for photo in bundle}
    image_dims = {photo.photo_id: photo.dims for photo in bundle}
    segments = [s for photo in bundle for s in photo.segments]
    clicks = [c for photo in bundle for c in photo.clicks]
    return TrialResult(
        params,
        eval_segments(labelmaps, segments, image_dims) if segments else None,
        eval_clicks(labelmaps, clicks, image_dims) if clicks else None,
    )


def evaluate_grid(bundle, param_grid, backend=LATTICE, jobs=1):
    """
    Runs every candidate on the whole bundle. Results keep grid order.
    """
    if not param_grid:
        raise ValueError("Empty CRF parameter grid")
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(lambda params: run_trial(bundle, params, backend), param_grid))
    trials = []
    for params in param_grid:
        trials.append(run_trial(bundle, params, backend))
        logger.debug("Trial %r done", params)
    return trials


def best_trial(trials, objective=SEGMENT_CLASS_ACC):
    best = None
    for trial in trials:
        # Strict comparison keeps the earliest candidate on ties.
        if best is None or trial.score(objective) > best.score(objective):
            best = trial
            logger.info("Best so far: %r, %s accuracy %.4f", trial.params, OBJECTIVE_NAMES[objective], trial.score(objective))
    return best


def grid_search_crf(bundle, param_grid, objective=SEGMENT_CLASS_ACC, backend=LATTICE, jobs=1):
    if not param_grid:
        raise ValueError("Empty CRF parameter grid")
    if objective not in OBJECTIVES:
        raise ValueError("Unknown objective: {0}".format(objective))
    if objective == SEGMENT_CLASS_ACC and not any(photo.segments for photo in bundle):
        raise ValueError("Validation bundle has no segments")
    if objective == CLICK_CLASS_ACC and not any(photo.clicks for photo in bundle):
        raise ValueError("Validation bundle has no clicks")
    best = best_trial(evaluate_grid(bundle, param_grid, backend, jobs), objective)
    return best.params, best.report(objective)


class Parser:
    @staticmethod
    def parse_report_str(report_str):
        d = json.loads(report_str)
        if d.get("version") != REPORT_VERSION:
            raise ValueError("Unsupported report version: {0}".format(d.get("version")))
        return EvalReport(ConfusionMatrix(d["confusion"]))

    @staticmethod
    def parse_report_file(path):
        with open(path) as f:
            return Parser.parse_report_str(f.read())


class Exporter:
    @staticmethod
    def report_json(report):
        return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"

    @staticmethod
    def confusion_csv(report):
        counts = report.confusion.counts
        names = [CATEGORY_NAMES[i] if i < len(CATEGORY_NAMES) else str(i) for i in range(counts.shape[0])]
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["true\\predicted"] + names)
        for name, row in zip(names, counts):
            writer.writerow([name] + [repr(float(v)) for v in row])
        return out.getvalue()

    @staticmethod
    def trials_lines(trials):
        return "".join(json.dumps(trial.to_dict(), sort_keys=True) + "\n" for trial in trials)

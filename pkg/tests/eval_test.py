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
import unittest

import numpy as np
from mock import patch

from mincseg import Eval
from mincseg.Consts import CLICK
from mincseg.CRF import EXACT, CrfParams, LabelMap
from mincseg.Dataset import ClickLabel, PatchRecord, SegmentPolygon
from mincseg.Eval import (
    ARITHMETIC,
    CLICK_CLASS_ACC,
    GEOMETRIC,
    SEGMENT_CLASS_ACC,
    ConfusionMatrix,
    EvalReport,
    Exporter,
    Parser,
    ScaleSweep,
    ValidationPhoto,
    best_trial,
    ensemble_combine,
    eval_clicks,
    eval_patches,
    eval_segments,
    evaluate_grid,
    expand_grid,
    grid_search_crf,
    rasterize,
    summarize,
    sweep_patch_scales,
)
from mincseg.Image import SRGB_U8, Image, PatchGeometry
from mincseg.ProbabilityMap import ProbabilityMap
from mincseg.Synthetic import mosaic_corpus


def inside_even_odd(x, y, vertices):
    inside = False
    n = len(vertices)
    for i in range(n):
        (x1, y1), (x2, y2) = vertices[i], vertices[(i + 1) % n]
        if (y1 > y) != (y2 > y):
            if x < x1 + (y - y1) * (x2 - x1) / (y2 - y1):
                inside = not inside
    return inside


def segment_oracle(labels, segment, num_labels):
    h, w = labels.shape
    row = np.zeros(num_labels)
    count = 0
    for i in range(h):
        for j in range(w):
            if inside_even_odd(j + 0.5, i + 0.5, segment.vertices):
                row[labels[i, j]] += 1
                count += 1
    return row / count if count else None


class SummarizeTestCase(unittest.TestCase):
    def test_two_classes(self):
        mean, total = summarize(ConfusionMatrix([[8, 2], [5, 5]]))
        self.assertAlmostEqual(mean, 0.65)
        self.assertAlmostEqual(total, 0.65)

    def test_absent_category(self):
        report = EvalReport(ConfusionMatrix([[3, 1, 0], [0, 0, 0], [0, 0, 2]]))
        self.assertAlmostEqual(report.mean_class_accuracy, (0.75 + 1.0) / 2)
        self.assertTrue(math.isnan(report.per_category[1]))
        self.assertIsNone(report.to_dict()["per_category"]["carpet"])

    def test_empty(self):
        with self.assertRaises(ValueError):
            summarize(ConfusionMatrix(num_labels=3))
        with self.assertRaises(ValueError):
            ConfusionMatrix([[1, 2]])

    def test_add(self):
        a = ConfusionMatrix(num_labels=2)
        a.add(0, 1)
        a.add_row(1, [0.25, 0.75])
        np.testing.assert_allclose((a + a).counts, [[0, 2], [0.5, 1.5]])


class ClickTestCase(unittest.TestCase):
    def test_recount(self):
        rng = np.random.default_rng(0)
        labels = rng.integers(0, 4, (7, 9))
        clicks = [ClickLabel("a", int(rng.integers(4)), rng.uniform(0, [9, 7])) for _ in range(200)]
        report = eval_clicks({"a": LabelMap(labels)}, clicks, num_labels=4)
        expected = np.zeros((4, 4))
        for click in clicks:
            expected[click.category, labels[int(click.point[1]), int(click.point[0])]] += 1
        np.testing.assert_array_equal(report.confusion.counts, expected)

    def test_rescaled(self):
        labels = np.zeros((5, 10), dtype=np.int64)
        labels[2, 7] = 3
        clicks = [ClickLabel("a", 3, (15.0, 5.0))]
        report = eval_clicks({"a": labels}, clicks, {"a": (20, 10)}, num_labels=4)
        self.assertEqual(report.mean_class_accuracy, 1.0)

    def test_far_edge(self):
        report = eval_clicks({"a": np.ones((2, 2), dtype=np.int64)}, [ClickLabel("a", 1, (2.0, 2.0))], num_labels=2)
        self.assertEqual(report.total_accuracy, 1.0)

    def test_errors(self):
        labels = {"a": np.zeros((2, 2), dtype=np.int64)}
        with self.assertRaises(ValueError):
            eval_clicks(labels, [ClickLabel("b", 0, (1, 1))])
        with self.assertRaises(ValueError):
            eval_clicks(labels, [ClickLabel("a", 0, (3, 1))])


class SegmentTestCase(unittest.TestCase):
    def test_half_correct(self):
        labels = np.zeros((4, 4), dtype=np.int64)
        labels[:, 2:] = 1
        segment = SegmentPolygon("a", 0, [(0, 0), (4, 0), (4, 4), (0, 4)])
        report = eval_segments({"a": labels}, [segment], num_labels=2)
        np.testing.assert_allclose(report.confusion.counts, [[0.5, 0.5], [0, 0]])
        self.assertEqual(report.mean_class_accuracy, 0.5)

    def test_pixel_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            w, h = int(rng.integers(3, 16)), int(rng.integers(3, 16))
            labels = rng.integers(0, 5, (h, w))
            vertices = rng.uniform(0, [w, h], (3, 2))
            segment = SegmentPolygon("a", int(rng.integers(5)), vertices)
            expected = segment_oracle(labels, segment, 5)
            mask = rasterize(segment.vertices, w, h)
            if expected is None:
                self.assertFalse(mask.any())
                continue
            report = eval_segments({"a": labels}, [segment], num_labels=5)
            np.testing.assert_allclose(report.confusion.counts[segment.category], expected, atol=1e-12)

    def test_segment_weighting(self):
        # The small segment counts as much as the large one.
        labels = np.zeros((10, 10), dtype=np.int64)
        labels[0, 0] = 1
        segments = [
            SegmentPolygon("a", 0, [(0, 0), (10, 0), (10, 10), (0, 10)]),
            SegmentPolygon("a", 0, [(0, 0), (1, 0), (1, 1), (0, 1)]),
        ]
        report = eval_segments({"a": labels}, segments, num_labels=2)
        self.assertAlmostEqual(report.mean_class_accuracy, (0.99 + 0.0) / 2)

    def test_rescaled(self):
        labels = np.zeros((5, 5), dtype=np.int64)
        labels[:, :2] = 1
        segment = SegmentPolygon("a", 1, [(0, 0), (4, 0), (4, 10), (0, 10)])
        report = eval_segments({"a": labels}, [segment], {"a": (10, 10)}, num_labels=2)
        self.assertEqual(report.mean_class_accuracy, 1.0)

    def test_empty_segment_skipped(self):
        labels = {"a": np.zeros((4, 4), dtype=np.int64)}
        segments = [
            SegmentPolygon("a", 0, [(0, 0), (4, 0), (4, 4)]),
            SegmentPolygon("a", 1, [(1.1, 1.1), (1.3, 1.1), (1.1, 1.3)]),
        ]
        with patch.object(Eval.logger, "warning") as warning:
            report = eval_segments(labels, segments, num_labels=2)
        self.assertTrue(warning.called)
        self.assertEqual(report.confusion.counts[1].sum(), 0)

    def test_missing_map(self):
        with self.assertRaises(ValueError):
            eval_segments({}, [SegmentPolygon("a", 0, [(0, 0), (4, 0), (4, 4)])])


class PatchEvalTestCase(unittest.TestCase):
    def test_labels_and_vectors(self):
        geometry = PatchGeometry(0.5, 0.5, 0.2)
        records = [PatchRecord("a", geometry, 0, CLICK), PatchRecord("b", geometry, 1, CLICK)]
        report = eval_patches(records, [[0.9, 0.1], 0], num_labels=2)
        self.assertEqual(report.mean_class_accuracy, 0.5)
        with self.assertRaises(ValueError):
            eval_patches(records, [0])

    def test_sweep(self):
        data = np.zeros((60, 60, 3))
        data[:, 30:] = 255
        images = {"a": Image(data, SRGB_U8)}
        records = [
            PatchRecord("a", PatchGeometry(0.3, 0.5, 0.233), 0, CLICK),
            PatchRecord("a", PatchGeometry(0.7, 0.5, 0.233), 1, CLICK),
        ]

        def classify(patch):
            return int(np.mean(patch.data[:, :, 0] > 128) > 0.25)

        sweep = sweep_patch_scales(records, images, classify, scales=(0.2, 1.0), num_labels=2)
        self.assertEqual(sweep.reports[0.2].mean_class_accuracy, 1.0)
        self.assertEqual(sweep.reports[1.0].mean_class_accuracy, 0.5)
        self.assertEqual(sweep.best_scale, 0.2)
        self.assertEqual(sweep.peak_scales, [0.2, 0.2])
        with self.assertRaises(ValueError):
            sweep_patch_scales(records, images, classify, scales=())

    def test_sweep_ties(self):
        perfect = EvalReport(ConfusionMatrix([[1, 0], [0, 1]]))
        self.assertEqual(ScaleSweep([(0.5, perfect), (0.1, perfect)]).best_scale, 0.5)


class EnsembleTestCase(unittest.TestCase):
    def test_arithmetic(self):
        maps = [ProbabilityMap([[[0.2, 0.8]]]), ProbabilityMap([[[0.6, 0.4]]])]
        np.testing.assert_allclose(ensemble_combine(maps).values[0, 0], [0.4, 0.6])

    def test_geometric(self):
        maps = [ProbabilityMap([[[0.9, 0.1]]]), ProbabilityMap([[[0.1, 0.9]]])]
        np.testing.assert_allclose(ensemble_combine(maps, GEOMETRIC).values[0, 0], [0.5, 0.5])

    def test_geometric_floor(self):
        maps = [ProbabilityMap([[[1.0, 0.0]]]), ProbabilityMap([[[0.5, 0.5]]])]
        combined = ensemble_combine(maps, GEOMETRIC)
        self.assertTrue(np.all(np.isfinite(combined.values)))
        self.assertTrue(combined.is_normalized(1e-12))

    def test_random_identities(self):
        rng = np.random.default_rng(2)
        for _ in range(1000):
            shape = (int(rng.integers(1, 5)), int(rng.integers(1, 5)), int(rng.integers(2, 6)))
            values = rng.random(shape) + 1e-3
            probmap = ProbabilityMap(values / values.sum(axis=2, keepdims=True))
            other = ProbabilityMap(rng.dirichlet(np.ones(shape[2]), shape[:2]))
            for mode in (ARITHMETIC, GEOMETRIC):
                self.assertTrue(ensemble_combine([probmap, other], mode).is_normalized(1e-5))
                same = ensemble_combine([probmap, probmap, probmap], mode)
                np.testing.assert_allclose(same.values, probmap.values, atol=1e-12)

    def test_mismatch(self):
        with self.assertRaises(ValueError):
            ensemble_combine([ProbabilityMap([[[0.5, 0.5]]]), ProbabilityMap([[[0.5, 0.5], [0.5, 0.5]]])])
        with self.assertRaises(ValueError):
            ensemble_combine([])
        with self.assertRaises(ValueError):
            ensemble_combine([ProbabilityMap([[[0.5, 0.5]]])], mode=7)


class GridSearchTestCase(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.corpus = mosaic_corpus(count=12, seed=3, width=24, height=24, unary_strength=1.0, unary_noise=1.5)
        cls.bundle = [sample.validation_photo() for sample in cls.corpus]

    def test_expand_grid(self):
        grid = {"theta_p": (0.1, 0.2), "theta_L": (10,), "theta_ab": (5,), "w_p": (0, 1, 2)}
        params = expand_grid(grid, iterations=3)
        self.assertEqual(len(params), 6)
        self.assertEqual(params[1], CrfParams(0.1, 10, 5, 1, 3))
        self.assertEqual(params[3], CrfParams(0.2, 10, 5, 0, 3))

    def test_single_candidate(self):
        candidate = CrfParams(0.1, 10, 5, 2)
        params, report = grid_search_crf(self.bundle[:2], [candidate], backend=EXACT)
        self.assertEqual(params, candidate)
        self.assertIsInstance(report, EvalReport)

    def test_zero_weight_baseline(self):
        [trial] = evaluate_grid(self.bundle, [CrfParams(0.1, 10, 5, 0)], EXACT)
        labelmaps = {s.photo_id: LabelMap(np.argmax(s.probabilities, axis=2)) for s in self.corpus}
        segments = [segment for s in self.corpus for segment in s.segments]
        expected = eval_segments(labelmaps, segments)
        np.testing.assert_allclose(trial.segment_report.confusion.counts, expected.confusion.counts)

    def test_smoothing_wins(self):
        grid = [CrfParams(0.1, 10, 5, 0), CrfParams(0.1, 10, 5, 4)]
        trials = evaluate_grid(self.bundle, grid, EXACT, jobs=2)
        self.assertEqual([trial.params for trial in trials], grid)
        self.assertGreater(trials[1].score(SEGMENT_CLASS_ACC), trials[0].score(SEGMENT_CLASS_ACC))
        self.assertGreater(trials[1].score(CLICK_CLASS_ACC), trials[0].score(CLICK_CLASS_ACC))
        self.assertIs(best_trial(trials), trials[1])

    def test_default_grid_beats_baseline(self):
        corpus = mosaic_corpus(count=50, seed=5, width=24, height=24)
        bundle = [sample.validation_photo() for sample in corpus]
        grid = expand_grid()
        trials = evaluate_grid(bundle, grid, jobs=4)
        best = best_trial(trials)
        baseline = max(trial.score(SEGMENT_CLASS_ACC) for trial in trials if trial.params.w_p == 0)
        self.assertGreaterEqual(best.score(SEGMENT_CLASS_ACC), baseline)
        self.assertGreater(best.params.w_p, 0)

    def test_ties_keep_first(self):
        grid = [CrfParams(0.1, 10, 5, 0), CrfParams(0.2, 10, 5, 0)]
        params, _ = grid_search_crf(self.bundle[:3], grid, CLICK_CLASS_ACC, EXACT)
        self.assertEqual(params, grid[0])

    def test_errors(self):
        with self.assertRaises(ValueError):
            grid_search_crf(self.bundle, [])
        with self.assertRaises(ValueError):
            grid_search_crf(self.bundle, [CrfParams(0.1, 10, 5, 1)], objective=5)
        photo = self.corpus[0]
        no_clicks = ValidationPhoto.from_probmap(photo.photo_id, photo.image, photo.probability_map(), photo.segments)
        with self.assertRaises(ValueError):
            grid_search_crf([no_clicks], [CrfParams(0.1, 10, 5, 1)], CLICK_CLASS_ACC)
        with self.assertRaises(ValueError):
            evaluate_grid([no_clicks], [CrfParams(0.1, 10, 5, 1)])[0].report(CLICK_CLASS_ACC)


class ReportIOTestCase(unittest.TestCase):
    def test_json(self):
        report = EvalReport(ConfusionMatrix(np.diag(np.arange(23) + 0.5)))
        parsed = Parser.parse_report_str(Exporter.report_json(report))
        np.testing.assert_array_equal(parsed.confusion.counts, report.confusion.counts)
        self.assertEqual(parsed.mean_class_accuracy, 1.0)
        with self.assertRaises(ValueError):
            Parser.parse_report_str('{"version": 9}')

    def test_csv(self):
        report = EvalReport(ConfusionMatrix([[1, 0], [2, 3]]))
        lines = Exporter.confusion_csv(report).splitlines()
        self.assertEqual(lines[0], "true\\predicted,brick,carpet")
        self.assertEqual(lines[2], "carpet,2.0,3.0")


if __name__ == "__main__":
    unittest.main()

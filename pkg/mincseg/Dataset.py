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

# NOTE: Category merges and near-duplicate clustering happen upstream;
#       photos arrive with their final category ids and cluster ids.

import hashlib
import json
import logging
import math

import numpy as np
from skimage.measure import points_in_poly

from .Consts import (
    CATEGORY_NAMES,
    CLICK,
    CROP_SIZE,
    DEFAULT_PATCH_SCALE,
    DEFAULT_SPLIT_RATIOS,
    MIN_TEST_SEGMENTS,
    NUM_CATEGORIES,
    PATCH_SIZE,
    POISSON_RADIUS_FRACTION,
    POISSON_REJECTION_BUDGET,
    SEGMENT,
    SOURCE_NAMES,
    SPLIT_NAMES,
    SPLITS,
    TEST,
    category_index,
)
from .Image import SRGB_U8, Image, PatchGeometry, crop_replicated, resize_bilinear, round_half_up

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


class ParserException(Exception):
    pass


def _segments_cross(p1, p2, q1, q2):
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return (v > 0) - (v < 0)

    def on_segment(a, b, c):
        return min(a[0], b[0]) <= c[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= c[1] <= max(a[1], b[1])

    o1, o2, o3, o4 = orient(p1, p2, q1), orient(p1, p2, q2), orient(q1, q2, p1), orient(q1, q2, p2)
    if o1 != o2 and o3 != o4:
        return True
    return (
        (o1 == 0 and on_segment(p1, p2, q1))
        or (o2 == 0 and on_segment(p1, p2, q2))
        or (o3 == 0 and on_segment(q1, q2, p1))
        or (o4 == 0 and on_segment(q1, q2, p2))
    )


class Photo(object):
    def __init__(self, photo_id, width, height, cluster_id=None, path=None):
        if width < 1 or height < 1:
            raise ValueError("Photo {0} has invalid size {1}x{2}".format(photo_id, width, height))
        self.photo_id = photo_id
        self.width = int(width)
        self.height = int(height)
        self.cluster_id = photo_id if cluster_id is None else cluster_id
        self.path = path

    @property
    def dims(self):
        return self.width, self.height

    def to_dict(self):
        d = {
            "version": SCHEMA_VERSION,
            "kind": "photo",
            "photo_id": self.photo_id,
            "width": self.width,
            "height": self.height,
            "cluster_id": self.cluster_id,
        }
        if self.path is not None:
            d["path"] = self.path
        return d


class SegmentPolygon(object):
    def __init__(self, photo_id, category, vertices):
        vertices = [(float(x), float(y)) for x, y in vertices]
        if len(vertices) < 3:
            raise ValueError("Segment polygon needs at least 3 vertices, got {0}".format(len(vertices)))
        self.photo_id = photo_id
        self.category = category_index(category)
        self.vertices = vertices
        if not self.is_simple():
            raise ValueError("Segment polygon of photo {0} intersects itself".format(photo_id))

    def edges(self):
        n = len(self.vertices)
        return [(self.vertices[i], self.vertices[(i + 1) % n]) for i in range(n)]

    def is_simple(self):
        edges = self.edges()
        n = len(edges)
        for i in range(n):
            for j in range(i + 1, n):
                # Adjacent edges share a vertex by construction.
                if j == i + 1 or (i == 0 and j == n - 1):
                    continue
                if _segments_cross(edges[i][0], edges[i][1], edges[j][0], edges[j][1]):
                    return False
        return True

    @property
    def area(self):
        v = np.asarray(self.vertices)
        x, y = v[:, 0], v[:, 1]
        return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))

    def contains(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return points_in_poly(points, np.asarray(self.vertices))

    def inside_image(self, width, height):
        return all(0 <= x <= width and 0 <= y <= height for x, y in self.vertices)

    def to_dict(self):
        return {
            "version": SCHEMA_VERSION,
            "kind": "segment",
            "photo_id": self.photo_id,
            "category": CATEGORY_NAMES[self.category],
            "vertices": [list(v) for v in self.vertices],
        }


class ClickLabel(object):
    def __init__(self, photo_id, category, point):
        self.photo_id = photo_id
        self.category = category_index(category)
        self.point = (float(point[0]), float(point[1]))

    def inside_image(self, width, height):
        return 0 <= self.point[0] <= width and 0 <= self.point[1] <= height

    def to_dict(self):
        return {
            "version": SCHEMA_VERSION,
            "kind": "click",
            "photo_id": self.photo_id,
            "category": CATEGORY_NAMES[self.category],
            "point": list(self.point),
        }


class PatchRecord(object):
    def __init__(self, photo_id, geometry, category, source, split=None):
        if source not in (SEGMENT, CLICK):
            raise ValueError("Unknown patch source: {0}".format(source))
        if split is not None and split not in SPLITS:
            raise ValueError("Unknown split: {0}".format(split))
        self.photo_id = photo_id
        self.geometry = geometry
        self.category = category_index(category)
        self.source = source
        self.split = split

    def with_split(self, split):
        return PatchRecord(self.photo_id, self.geometry, self.category, self.source, split)

    def to_dict(self):
        return {
            "version": SCHEMA_VERSION,
            "kind": "patch",
            "photo_id": self.photo_id,
            "center": [self.geometry.center_x, self.geometry.center_y],
            "scale": self.geometry.scale,
            "category": CATEGORY_NAMES[self.category],
            "source": SOURCE_NAMES[self.source],
            "split": None if self.split is None else SPLIT_NAMES[self.split],
        }

    def __eq__(self, other):
        try:
            return self.to_dict() == other.to_dict()
        except AttributeError:
            return False

    def __ne__(self, other):
        return not self.__eq__(other)

    def __repr__(self):
        return "PatchRecord({0})".format(self.to_dict())


class Annotations(object):
    def __init__(self, photos=None, segments=None, clicks=None):
        self.photos = dict(photos or {})
        self.segments = list(segments or [])
        self.clicks = list(clicks or [])

    def image_dims(self):
        return {photo_id: photo.dims for photo_id, photo in self.photos.items()}

    def clusters(self):
        return {photo_id: photo.cluster_id for photo_id, photo in self.photos.items()}

    def segment_counts(self):
        counts = {photo_id: {} for photo_id in self.photos}
        for segment in self.segments:
            per_photo = counts.setdefault(segment.photo_id, {})
            per_photo[segment.category] = per_photo.get(segment.category, 0) + 1
        return counts

    def annotation_counts(self):
        counts = self.segment_counts()
        for click in self.clicks:
            per_photo = counts.setdefault(click.photo_id, {})
            per_photo[click.category] = per_photo.get(click.category, 0) + 1
        return counts


class SplitAssignment(object):
    def __init__(self, cluster_splits=None, flagged=None):
        self.cluster_splits = dict(cluster_splits or {})
        self.flagged = sorted(flagged or [])

    def split_of(self, cluster_id):
        return self.cluster_splits[cluster_id]

    def photo_splits(self, clusters):
        return {photo_id: self.cluster_splits[cluster] for photo_id, cluster in clusters.items()}

    def apply(self, records, clusters):
        splits = self.photo_splits(clusters)
        return [record.with_split(splits.get(record.photo_id)) for record in records]

    def __len__(self):
        return len(self.cluster_splits)


def _interior_point(polygon, lo, hi, rng, darts=256, max_grid=1024):
    """
    A point strictly inside ``polygon``: a random dart if one lands, else a
    random interior pixel center, else the centroid of an ear triangle.
    """
    starts = lo + rng.random((darts, 2)) * (hi - lo)
    inside = polygon.contains(starts)
    if inside.any():
        x, y = starts[np.argmax(inside)]
        return float(x), float(y)

    step = max(1.0, float((hi - lo).max()) / max_grid)
    xs = np.arange(math.floor(lo[0]) + 0.5 * step, hi[0], step)
    ys = np.arange(math.floor(lo[1]) + 0.5 * step, hi[1], step)
    if xs.size and ys.size:
        gx, gy = np.meshgrid(xs, ys)
        centers = np.stack([gx.ravel(), gy.ravel()], axis=1)
        centers = centers[polygon.contains(centers)]
        if len(centers):
            x, y = centers[int(rng.integers(len(centers)))]
            return float(x), float(y)

    # Every simple polygon has an ear, and an ear's centroid is interior.
    verts = np.asarray(polygon.vertices)
    n = len(verts)
    centroids = (np.roll(verts, 1, axis=0) + verts + np.roll(verts, -1, axis=0)) / 3.0
    inside = polygon.contains(centroids)
    if inside.any():
        x, y = centroids[np.argmax(inside)]
        return float(x), float(y)
    logger.debug("No interior point found for a %d-vertex polygon of photo %s", n, polygon.photo_id)
    return None


def poisson_disk_sample(polygon, image_dims, r_fraction=POISSON_RADIUS_FRACTION, seed=0, budget=POISSON_REJECTION_BUDGET):
    """
    Dart throwing inside ``polygon`` with minimum separation
    ``r_fraction * min(width, height)``. Each active point gets ``budget``
    attempts in the annulus [r, 2r) before it retires.
    """
    if r_fraction <= 0:
        raise ValueError("Poisson-disk radius fraction must be positive, got {0}".format(r_fraction))
    if polygon.area <= 0:
        return []
    r = r_fraction * min(image_dims)
    rng = np.random.default_rng(seed)
    verts = np.asarray(polygon.vertices)
    lo = verts.min(axis=0)
    hi = verts.max(axis=0)

    first = _interior_point(polygon, lo, hi, rng)
    if first is None:
        return []

    cell = r / math.sqrt(2.0)
    grid_w = max(1, int(math.ceil((hi[0] - lo[0]) / cell)) + 1)
    grid_h = max(1, int(math.ceil((hi[1] - lo[1]) / cell)) + 1)
    grid = {}

    def grid_coords(p):
        return int((p[0] - lo[0]) // cell), int((p[1] - lo[1]) // cell)

    def fits(p):
        gx, gy = grid_coords(p)
        for x in range(max(gx - 2, 0), min(gx + 3, grid_w)):
            for y in range(max(gy - 2, 0), min(gy + 3, grid_h)):
                q = grid.get((x, y))
                if q is not None and (p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2 < r * r:
                    return False
        return True

    samples = [first]
    grid[grid_coords(first)] = first
    active = [first]
    while active:
        i = int(rng.integers(len(active)))
        qx, qy = active[i]
        alpha = 2.0 * math.pi * rng.random(budget)
        dist = r * np.sqrt(3.0 * rng.random(budget) + 1.0)
        candidates = np.stack([qx + dist * np.cos(alpha), qy + dist * np.sin(alpha)], axis=1)
        inside = polygon.contains(candidates)
        accepted = None
        for candidate, ok in zip(candidates, inside):
            p = (float(candidate[0]), float(candidate[1]))
            if ok and fits(p):
                accepted = p
                break
        if accepted is None:
            active[i] = active[-1]
            active.pop()
        else:
            samples.append(accepted)
            grid[grid_coords(accepted)] = accepted
            active.append(accepted)
    return samples


def generate_patches(
    segments, clicks, image_dims, patch_scale=DEFAULT_PATCH_SCALE, seed=0, r_fraction=POISSON_RADIUS_FRACTION
):
    """
    One patch per click and one per Poisson-disk center of every segment.
    Annotations outside their image, or on unknown photos, are skipped.
    """
    rng = np.random.default_rng(seed)
    records = []
    skipped = 0
    empty = 0
    for segment in segments:
        dims = image_dims.get(segment.photo_id)
        segment_seed = int(rng.integers(2**32))
        if dims is None or not segment.inside_image(*dims):
            skipped += 1
            continue
        centers = poisson_disk_sample(segment, dims, r_fraction, segment_seed)
        if not centers:
            empty += 1
        for x, y in centers:
            geometry = PatchGeometry.from_pixels(x, y, dims[0], dims[1], patch_scale)
            records.append(PatchRecord(segment.photo_id, geometry, segment.category, SEGMENT))
    for click in clicks:
        dims = image_dims.get(click.photo_id)
        if dims is None or not click.inside_image(*dims):
            skipped += 1
            continue
        geometry = PatchGeometry.from_pixels(click.point[0], click.point[1], dims[0], dims[1], patch_scale)
        records.append(PatchRecord(click.photo_id, geometry, click.category, CLICK))
    if skipped:
        logger.warning("Skipped %d annotations outside their image", skipped)
    if empty:
        logger.warning("%d segments yielded no patch centers", empty)
    return records


def assign_splits(
    clusters,
    per_category_segment_counts,
    ratios=DEFAULT_SPLIT_RATIOS,
    seed=0,
    min_test_segments=MIN_TEST_SEGMENTS,
):
    """
    Assigns whole near-duplicate clusters to train, validate or test. Test
    first receives the clusters richest in each scarce category until every
    category has ``min_test_segments`` test segments, without exceeding the
    test ratio share of that category; the rest go to the split furthest
    below its ratio target. Categories left short are flagged.
    """
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-6:
        raise ValueError("Split ratios must be three non-negative numbers summing to 1, got {0}".format(ratios))
    if not clusters:
        return SplitAssignment()

    members = {}
    for photo_id in sorted(clusters, key=str):
        members.setdefault(clusters[photo_id], []).append(photo_id)
    order = sorted(members, key=str)
    rng = np.random.default_rng(seed)
    order = [order[i] for i in rng.permutation(len(order))]

    counts = {}
    for cluster in order:
        c = np.zeros(NUM_CATEGORIES, dtype=np.int64)
        for photo_id in members[cluster]:
            for category, n in per_category_segment_counts.get(photo_id, {}).items():
                c[category_index(category)] += n
        counts[cluster] = c

    assigned = {}
    test_counts = np.zeros(NUM_CATEGORIES, dtype=np.int64)
    totals = sum(counts.values())
    present = [c for c in range(NUM_CATEGORIES) if totals[c] > 0]
    # Test never takes more of a category than its ratio share.
    caps = np.floor(ratios[TEST] * totals + 1e-9).astype(np.int64)
    for category in sorted(present, key=lambda c: (totals[c], c)):
        while test_counts[category] < min(min_test_segments, caps[category]):
            best = None
            for cluster in order:
                n = counts[cluster][category]
                if cluster in assigned or n == 0 or test_counts[category] + n > caps[category]:
                    continue
                if best is None or n > counts[best][category]:
                    best = cluster
            if best is None:
                break
            assigned[best] = TEST
            test_counts += counts[best]

    weights = {cluster: max(1, int(counts[cluster].sum())) for cluster in order}
    total_weight = float(sum(weights.values()))
    split_weight = np.zeros(len(SPLITS))
    for cluster, split in assigned.items():
        split_weight[split] += weights[cluster]
    for cluster in order:
        if cluster in assigned:
            continue
        deficit = np.asarray(ratios) * total_weight - split_weight
        split = int(np.argmax(deficit))
        assigned[cluster] = split
        split_weight[split] += weights[cluster]

    flagged = [c for c in present if test_counts[c] < min_test_segments]
    if flagged:
        logger.warning(
            "Test split holds fewer than %d segments of: %s",
            min_test_segments,
            ", ".join(CATEGORY_NAMES[c] for c in flagged),
        )
    return SplitAssignment(assigned, flagged)


def balanced_batches(records, seed=0, num_categories=NUM_CATEGORIES):
    """
    Endless stream cycling through the categories in id order, emitting one
    uniformly drawn record of each category per round.
    """
    by_category = [[] for _ in range(num_categories)]
    for record in records:
        by_category[record.category].append(record)
    for category, pool in enumerate(by_category):
        if not pool:
            raise ValueError("Category {0} has no records".format(CATEGORY_NAMES[category]))

    def stream():
        rng = np.random.default_rng(seed)
        while True:
            for pool in by_category:
                yield pool[int(rng.integers(len(pool)))]

    return stream()


class AugmentParams(object):
    def __init__(self, scale, aspect, crop_x, crop_y, flip, amplitude):
        self.scale = scale
        self.aspect = aspect
        self.crop_x = crop_x
        self.crop_y = crop_y
        self.flip = flip
        self.amplitude = amplitude

    def resized_dims(self, size=PATCH_SIZE):
        w = max(1, round_half_up(size * self.scale * math.sqrt(self.aspect)))
        h = max(1, round_half_up(size * self.scale / math.sqrt(self.aspect)))
        return w, h

    def __repr__(self):
        return "AugmentParams(scale={0!r}, aspect={1!r}, crop=({2}, {3}), flip={4}, amplitude={5!r})".format(
            self.scale, self.aspect, self.crop_x, self.crop_y, self.flip, self.amplitude
        )


def sample_augmentation(rng, size=PATCH_SIZE, crop=CROP_SIZE):
    scale = math.exp(rng.uniform(math.log(1.0 / math.sqrt(2.0)), math.log(math.sqrt(2.0))))
    aspect = math.exp(rng.uniform(math.log(3.0 / 4.0), math.log(4.0 / 3.0)))
    params = AugmentParams(scale, aspect, 0, 0, False, 1.0)
    w, h = params.resized_dims(size)
    # Inputs smaller than the crop are centered and edge-replicated.
    params.crop_x = int(rng.integers(w - crop + 1)) if w >= crop else -((crop - w) // 2)
    params.crop_y = int(rng.integers(h - crop + 1)) if h >= crop else -((crop - h) // 2)
    params.flip = bool(rng.random() < 0.5)
    params.amplitude = float(rng.uniform(0.95, 1.05))
    return params


def flip_horizontal(img):
    return Image(img.data[:, ::-1], img.space)


def apply_augmentation(patch, params, crop=CROP_SIZE):
    """
    Scale, aspect, crop, flip, amplitude, in that order.
    """
    w, h = params.resized_dims(patch.width)
    out = crop_replicated(resize_bilinear(patch, w, h), params.crop_x, params.crop_y, crop, crop)
    if params.flip:
        out = flip_horizontal(out)
    data = out.data.astype(np.float64) * params.amplitude
    if out.space == SRGB_U8:
        data = np.floor(np.clip(data, 0.0, 255.0) + 0.5)
    return Image(data, out.space)


def augment(patch, seed):
    if (patch.width, patch.height) != (PATCH_SIZE, PATCH_SIZE):
        raise ValueError("Augmentation expects a {0}x{0} patch, got {1}x{2}".format(PATCH_SIZE, patch.width, patch.height))
    return apply_augmentation(patch, sample_augmentation(np.random.default_rng(seed)))


def select_eval_photos(photo_counts, k):
    """
    Greedily picks ``k`` photos maximizing sum_c log(1 + n_c) over the
    per-category annotation counts of the chosen set. Ties go to the photo
    with more annotations, then to the smaller photo id.
    """
    if k > len(photo_counts):
        raise ValueError("Cannot select {0} of {1} photos".format(k, len(photo_counts)))
    vectors = {}
    for photo_id, counts in photo_counts.items():
        v = np.zeros(NUM_CATEGORIES)
        for category, n in counts.items():
            v[category_index(category)] += n
        vectors[photo_id] = v

    remaining = sorted(vectors, key=lambda p: (str(type(p)), p))
    totals = np.zeros(NUM_CATEGORIES)
    chosen = []
    for _ in range(k):
        base = np.log1p(totals).sum()
        best = None
        best_key = None
        for photo_id in remaining:
            v = vectors[photo_id]
            key = (np.log1p(totals + v).sum() - base, v.sum())
            if best_key is None or key > best_key:
                best, best_key = photo_id, key
        chosen.append(best)
        remaining.remove(best)
        totals += vectors[best]
    return chosen


def category_counts(records, num_categories=NUM_CATEGORIES):
    counts = np.zeros(num_categories, dtype=np.int64)
    for record in records:
        counts[record.category] += 1
    return counts


def subsample(records, fraction=1.0, equal_size=False, seed=0):
    """
    Random subset of ``records``. With ``equal_size`` every non-empty
    category contributes the same number of records, set by the smallest one.
    """
    if not (0.0 < fraction <= 1.0):
        raise ValueError("Subsample fraction must lie in (0, 1], got {0}".format(fraction))
    rng = np.random.default_rng(seed)
    if not equal_size:
        n = round_half_up(len(records) * fraction)
        return [records[i] for i in sorted(rng.choice(len(records), size=n, replace=False))]

    by_category = {}
    for i, record in enumerate(records):
        by_category.setdefault(record.category, []).append(i)
    per_category = round_half_up(min(len(v) for v in by_category.values()) * fraction) if by_category else 0
    keep = []
    for category in sorted(by_category):
        keep.extend(rng.choice(by_category[category], size=per_category, replace=False))
    return [records[i] for i in sorted(keep)]


def drop_exact_duplicates(paths):
    """
    Keeps the first path of every group of byte-identical files.
    """
    seen = set()
    kept = []
    for path in paths:
        with open(path, "rb") as f:
            digest = hashlib.sha1(f.read()).hexdigest()
        if digest in seen:
            logger.info("Dropping exact duplicate %s", path)
            continue
        seen.add(digest)
        kept.append(path)
    return kept


class Parser:
    @staticmethod
    def parse_file(path):
        with open(path) as f:
            return Parser.parse_str(f.read())

    @staticmethod
    def _load_lines(text):
        for line_no, line in enumerate(text.split("\n"), 1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
            except ValueError as e:
                raise ParserException("Invalid JSON on line {0}: {1}".format(line_no, e))
            if not isinstance(d, dict):
                raise ParserException("Line {0} is not a JSON object".format(line_no))
            if d.get("version") != SCHEMA_VERSION:
                raise ParserException("Unsupported schema version on line {0}: {1}".format(line_no, d.get("version")))
            yield line_no, d

    @staticmethod
    def parse_str(text):
        annotations = Annotations()
        for line_no, d in Parser._load_lines(text):
            kind = d.get("kind")
            try:
                if kind == "photo":
                    annotations.photos[d["photo_id"]] = Photo(
                        d["photo_id"], d["width"], d["height"], d.get("cluster_id"), d.get("path")
                    )
                elif kind == "segment":
                    annotations.segments.append(SegmentPolygon(d["photo_id"], d["category"], d["vertices"]))
                elif kind == "click":
                    annotations.clicks.append(ClickLabel(d["photo_id"], d["category"], d["point"]))
                else:
                    raise ParserException("Unknown kind on line {0}: {1}".format(line_no, kind))
            except KeyError as e:
                raise ParserException("Line {0} is missing {1}".format(line_no, e))
            except (TypeError, ValueError) as e:
                raise ParserException("Invalid line {0}: {1}".format(line_no, e))
        return annotations

    @staticmethod
    def parse_patch_records_str(text):
        records = []
        for line_no, d in Parser._load_lines(text):
            if d.get("kind") != "patch":
                raise ParserException("Line {0} is not a patch record".format(line_no))
            try:
                split = d.get("split")
                records.append(
                    PatchRecord(
                        d["photo_id"],
                        PatchGeometry(d["center"][0], d["center"][1], d["scale"]),
                        d["category"],
                        SOURCE_NAMES.index(d["source"]),
                        None if split is None else SPLIT_NAMES.index(split),
                    )
                )
            except KeyError as e:
                raise ParserException("Line {0} is missing {1}".format(line_no, e))
            except (TypeError, ValueError, IndexError) as e:
                raise ParserException("Invalid line {0}: {1}".format(line_no, e))
        return records

    @staticmethod
    def parse_patch_records_file(path):
        with open(path) as f:
            return Parser.parse_patch_records_str(f.read())


class Exporter:
    @staticmethod
    def lines(items):
        return "".join(json.dumps(item.to_dict(), sort_keys=True) + "\n" for item in items)

    @staticmethod
    def annotations(annotations):
        return Exporter.lines(list(annotations.photos.values()) + annotations.segments + annotations.clicks)

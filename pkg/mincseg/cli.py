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

import argparse
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor

from . import CRF, Dataset, Eval, Network
from . import ProbabilityMap as ProbabilityMapIO
from .Consts import (
    CATEGORY_NAMES,
    DATA_DIR_ENV,
    DEFAULT_CRF_GRID,
    DEFAULT_CRF_ITERATIONS,
    DEFAULT_CRF_PARAMS,
    DEFAULT_PATCH_SCALE,
    FUSION_DIM,
)
from .Image import Exporter as ImageExporter
from .Image import Parser as ImageParser
from .Image import extract_patch
from .Multiscale import plan_scales, predict_multiscale
from .Palette import default_palette, render_labels, render_legend
from .Synthetic import mosaic_corpus

logger = logging.getLogger(__name__)

MANIFEST_VERSION = 1
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

HANDLED_ERRORS = (
    ValueError,
    OSError,
    KeyError,
    Network.InvalidStateError,
    Network.FormatException,
    ProbabilityMapIO.FormatException,
    Dataset.ParserException,
)


def data_dir(args):
    return args.data_dir or os.environ.get(DATA_DIR_ENV) or os.getcwd()


def resolve(path, root):
    return path if os.path.isabs(path) else os.path.join(root, path)


def _write_text(path, text):
    with open(path, "w") as f:
        f.write(text)


def _load_network(spec_path, weights_path):
    net = Network.Parser.parse_spec_file(spec_path)
    weights = Network.Parser.parse_weights_file(weights_path)
    weights.check(net)
    if net.mode == Network.PATCH:
        net, weights = Network.convolutionalize(net, weights)
    return net, weights


def _crf_params(args):
    if getattr(args, "params", None):
        return CRF.Parser.parse_params_file(args.params).replace(iterations=args.iters)
    return CRF.CrfParams(
        DEFAULT_CRF_PARAMS["theta_p"] if args.theta_p is None else args.theta_p,
        DEFAULT_CRF_PARAMS["theta_L"] if args.theta_l is None else args.theta_l,
        DEFAULT_CRF_PARAMS["theta_ab"] if args.theta_ab is None else args.theta_ab,
        DEFAULT_CRF_PARAMS["w_p"] if args.wp is None else args.wp,
        args.iters,
    )


def _segment_one(path, net, weights, plan, params, args, jobs=1):
    stem = os.path.splitext(os.path.basename(path))[0]
    timings = {}
    start = time.perf_counter()
    image = ImageParser.parse_file(path)

    probmap = predict_multiscale(net, weights, image, plan, args.half_stride, jobs)
    timings["predict"] = time.perf_counter() - start
    lap = time.perf_counter()
    labels = CRF.crf_segment(image, probmap, params, CRF.BACKEND_NAMES.index(args.backend))
    labels = CRF.LabelMap(labels.labels, CATEGORY_NAMES[: probmap.labels])
    timings["crf"] = time.perf_counter() - lap

    outputs = {
        "labels": os.path.join(args.out_dir, stem + ".labels.png"),
        "render": os.path.join(args.out_dir, stem + ".render.png"),
        "probmap": os.path.join(args.out_dir, stem + ".probmap"),
    }
    CRF.Exporter.labelmap(labels, outputs["labels"])
    ImageExporter.png(render_labels(labels, default_palette(probmap.labels)), outputs["render"])
    ProbabilityMapIO.Exporter.write(probmap, outputs["probmap"])

    if CRF.Parser.parse_labelmap_file(outputs["labels"]) != labels:
        raise OSError("Label map {0} did not read back intact".format(outputs["labels"]))
    if ProbabilityMapIO.Parser.parse_file(outputs["probmap"]).values.shape != probmap.values.shape:
        raise OSError("Probability map {0} did not read back intact".format(outputs["probmap"]))
    timings["total"] = time.perf_counter() - start

    manifest = {
        "version": MANIFEST_VERSION,
        "command": "segment",
        "image": path,
        "net": args.net,
        "weights": args.weights,
        "seed": args.seed,
        "half_stride": args.half_stride,
        "backend": args.backend,
        "scale_plan": plan.to_dict(),
        "crf": params.to_dict(),
        "outputs": outputs,
        "timings": timings,
    }
    _write_text(os.path.join(args.out_dir, stem + ".manifest.json"), json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    logger.info("Segmented %s in %.2fs", path, timings["total"])


def cmd_segment(args):
    os.makedirs(args.out_dir, exist_ok=True)
    net, weights = _load_network(args.net, args.weights)
    plan = plan_scales(args.scale, args.scales, args.fusion_dim)
    params = _crf_params(args)
    logger.info("Scales %s, CRF %r", plan.scales, params)
    if args.jobs > 1 and len(args.images) > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            list(pool.map(lambda path: _segment_one(path, net, weights, plan, params, args), args.images))
    else:
        for path in args.images:
            _segment_one(path, net, weights, plan, params, args, args.jobs)


def _write_report(report, prefix):
    _write_text(prefix + ".json", Eval.Exporter.report_json(report))
    _write_text(prefix + ".csv", Eval.Exporter.confusion_csv(report))
    Eval.Parser.parse_report_file(prefix + ".json")


def cmd_evaluate(args):
    os.makedirs(args.out_dir, exist_ok=True)
    annotations = Dataset.Parser.parse_file(args.annotations)
    photo_ids = {a.photo_id for a in annotations.segments + annotations.clicks}
    labelmaps = {}
    for photo_id in sorted(photo_ids, key=str):
        path = os.path.join(args.labels_dir, "{0}.labels.png".format(photo_id))
        labelmaps[photo_id] = CRF.Parser.parse_labelmap_file(path)
    image_dims = annotations.image_dims()
    if not annotations.segments and not annotations.clicks:
        raise ValueError("{0} holds no segments or clicks".format(args.annotations))
    if annotations.segments:
        report = Eval.eval_segments(labelmaps, annotations.segments, image_dims)
        _write_report(report, os.path.join(args.out_dir, "segments"))
        logger.info("Segments: %r", report)
    if annotations.clicks:
        report = Eval.eval_clicks(labelmaps, annotations.clicks, image_dims)
        _write_report(report, os.path.join(args.out_dir, "clicks"))
        logger.info("Clicks: %r", report)


def _param_grid(args):
    grid = dict(DEFAULT_CRF_GRID)
    if args.grid:
        with open(args.grid) as f:
            grid.update(json.load(f))
    for key, values in (("theta_p", args.theta_p), ("theta_L", args.theta_l), ("theta_ab", args.theta_ab), ("w_p", args.wp)):
        if values:
            grid[key] = tuple(values)
    return Eval.expand_grid(grid, args.iters)


def _validation_bundle(annotations, probmap_dir, root):
    segments = {}
    clicks = {}
    for segment in annotations.segments:
        segments.setdefault(segment.photo_id, []).append(segment)
    for click in annotations.clicks:
        clicks.setdefault(click.photo_id, []).append(click)
    bundle = []
    for photo_id in sorted(annotations.photos, key=str):
        photo = annotations.photos[photo_id]
        if photo.path is None:
            raise ValueError("Photo {0} has no image path".format(photo_id))
        image = ImageParser.parse_file(resolve(photo.path, root))
        probmap = ProbabilityMapIO.Parser.parse_file(os.path.join(probmap_dir, "{0}.probmap".format(photo_id)))
        bundle.append(
            Eval.ValidationPhoto.from_probmap(
                photo_id, image, probmap, segments.get(photo_id, ()), clicks.get(photo_id, ()), photo.dims
            )
        )
    return bundle


def cmd_grid_search(args):
    os.makedirs(args.out_dir, exist_ok=True)
    annotations = Dataset.Parser.parse_file(args.annotations)
    bundle = _validation_bundle(annotations, args.probmaps, data_dir(args))
    grid = _param_grid(args)
    objective = Eval.OBJECTIVE_NAMES.index(args.objective)
    logger.info("Evaluating %d CRF candidates on %d photos", len(grid), len(bundle))

    trials = Eval.evaluate_grid(bundle, grid, CRF.BACKEND_NAMES.index(args.backend), args.jobs)
    best = Eval.best_trial(trials, objective)
    params, report = best.params, best.report(objective)

    _write_text(os.path.join(args.out_dir, "best_params.json"), CRF.Exporter.params_json(params))
    _write_report(report, os.path.join(args.out_dir, "best_report"))
    if args.trials:
        _write_text(os.path.join(args.out_dir, "trials.jsonl"), Eval.Exporter.trials_lines(trials))
    if CRF.Parser.parse_params_file(os.path.join(args.out_dir, "best_params.json")) != params:
        raise OSError("best_params.json did not read back intact")
    logger.info("Best %r: %r", params, report)


def cmd_extract_patches(args):
    annotations = Dataset.Parser.parse_file(args.annotations)
    records = Dataset.generate_patches(
        annotations.segments, annotations.clicks, annotations.image_dims(), args.scale, args.seed
    )
    if args.assign_splits:
        clusters = annotations.clusters()
        assignment = Dataset.assign_splits(clusters, annotations.segment_counts(), seed=args.seed)
        records = assignment.apply(records, clusters)
    _write_text(args.out, Dataset.Exporter.lines(records))
    if len(Dataset.Parser.parse_patch_records_file(args.out)) != len(records):
        raise OSError("{0} did not read back intact".format(args.out))

    if args.patch_dir:
        os.makedirs(args.patch_dir, exist_ok=True)
        root = data_dir(args)
        images = {}
        for i, record in enumerate(records):
            if record.photo_id not in images:
                photo = annotations.photos[record.photo_id]
                if photo.path is None:
                    raise ValueError("Photo {0} has no image path".format(record.photo_id))
                images[record.photo_id] = ImageParser.parse_file(resolve(photo.path, root))
            patch = extract_patch(images[record.photo_id], record.geometry)
            ImageExporter.png(patch, os.path.join(args.patch_dir, "{0}_{1:06d}.png".format(record.photo_id, i)))
    logger.info("Wrote %d patch records to %s", len(records), args.out)


def cmd_legend(args):
    ImageExporter.png(render_legend(default_palette()), args.out)


def cmd_synth(args):
    os.makedirs(os.path.join(args.out_dir, "images"), exist_ok=True)
    os.makedirs(os.path.join(args.out_dir, "probmaps"), exist_ok=True)
    corpus = mosaic_corpus(args.count, args.seed, width=args.width, height=args.height)
    annotations = Dataset.Annotations()
    for sample in corpus:
        path = os.path.join("images", "{0}.png".format(sample.photo_id))
        ImageExporter.png(sample.image, os.path.join(args.out_dir, path))
        ProbabilityMapIO.Exporter.write(
            sample.probability_map(), os.path.join(args.out_dir, "probmaps", "{0}.probmap".format(sample.photo_id))
        )
        annotations.photos[sample.photo_id] = Dataset.Photo(sample.photo_id, sample.image.width, sample.image.height, path=path)
        annotations.segments.extend(sample.segments)
        annotations.clicks.extend(sample.clicks)
    _write_text(os.path.join(args.out_dir, "annotations.jsonl"), Dataset.Exporter.annotations(annotations))
    logger.info("Wrote %d mosaic photos to %s", len(corpus), args.out_dir)


def cmd_init_net(args):
    os.makedirs(args.out_dir, exist_ok=True)
    net, weights = Network.random_network(args.seed, Network.toy_network(input_size=args.input_size))
    Network.Exporter.write(net, weights, os.path.join(args.out_dir, "net.json"), os.path.join(args.out_dir, "weights.bin"))
    logger.info("Wrote a %d-parameter toy network to %s", weights.parameter_count, args.out_dir)


def _add_crf_flags(parser, multi):
    nargs = "+" if multi else None
    parser.add_argument("--theta-p", type=float, nargs=nargs, help="spatial bandwidth, fraction of the smaller side")
    parser.add_argument("--theta-l", type=float, nargs=nargs, help="L* bandwidth")
    parser.add_argument("--theta-ab", type=float, nargs=nargs, help="a*, b* bandwidth")
    parser.add_argument("--wp", type=float, nargs=nargs, help="Potts weight")
    parser.add_argument("--iters", type=int, default=DEFAULT_CRF_ITERATIONS, help="mean-field iterations")
    parser.add_argument("--backend", choices=CRF.BACKEND_NAMES, default="lattice")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--jobs", type=int, default=1)
    common.add_argument("--data-dir", help="dataset root (default: ${0} or the working directory)".format(DATA_DIR_ENV))
    common.add_argument("-v", "--verbose", action="store_true")
    common.add_argument("-q", "--quiet", action="store_true")

    parser = argparse.ArgumentParser(prog="mincseg", description="Material segmentation pipeline")
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("segment", parents=[common], help="segment photos into material label maps")
    p.add_argument("images", nargs="+")
    p.add_argument("--net", required=True, help="network spec JSON")
    p.add_argument("--weights", required=True, help="weight blob")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--params", help="CRF parameters JSON, e.g. from grid-search")
    p.add_argument("--scale", type=float, default=DEFAULT_PATCH_SCALE, help="patch scale")
    p.add_argument("--scales", type=int, choices=(1, 3), default=3)
    p.add_argument("--fusion-dim", type=int, default=FUSION_DIM)
    p.add_argument("--half-stride", dest="half_stride", action="store_true", default=True)
    p.add_argument("--no-half-stride", dest="half_stride", action="store_false")
    _add_crf_flags(p, multi=False)
    p.set_defaults(func=cmd_segment)

    p = commands.add_parser("evaluate", parents=[common], help="score label maps against annotations")
    p.add_argument("--annotations", required=True)
    p.add_argument("--labels-dir", required=True, help="directory of <photo_id>.labels.png")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = commands.add_parser("grid-search", parents=[common], help="tune CRF parameters on a validation set")
    p.add_argument("--annotations", required=True)
    p.add_argument("--probmaps", required=True, help="directory of <photo_id>.probmap")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--grid", help="JSON object of parameter ranges")
    p.add_argument("--objective", choices=Eval.OBJECTIVE_NAMES, default="segment")
    p.add_argument("--trials", action="store_true", help="also write every candidate's scores")
    _add_crf_flags(p, multi=True)
    p.set_defaults(func=cmd_grid_search)

    p = commands.add_parser("extract-patches", parents=[common], help="generate patch records")
    p.add_argument("--annotations", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--scale", type=float, default=DEFAULT_PATCH_SCALE)
    p.add_argument("--assign-splits", action="store_true")
    p.add_argument("--patch-dir", help="also write every patch as PNG")
    p.set_defaults(func=cmd_extract_patches)

    p = commands.add_parser("legend", parents=[common], help="render the category color legend")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_legend)

    p = commands.add_parser("synth", parents=[common], help="generate a synthetic mosaic corpus")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--count", type=int, default=50)
    p.add_argument("--width", type=int, default=48)
    p.add_argument("--height", type=int, default=48)
    p.set_defaults(func=cmd_synth)

    p = commands.add_parser("init-net", parents=[common], help="write a randomly initialized toy network")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--input-size", type=int, default=224)
    p.set_defaults(func=cmd_init_net)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT)
    if args.jobs < 1:
        logger.error("--jobs must be at least 1")
        return 1
    try:
        args.func(args)
    except HANDLED_ERRORS as e:
        logger.error("%s failed: %s", args.command, e)
        return 1
    return 0

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

# flake8: noqa F401 F403

# Each module keeps its own Parser and Exporter, so only the pipeline
# entry points are lifted to the package level. The Image, ProbabilityMap
# and Palette classes stay behind their modules of the same name.
from .Consts import *
from .CRF import CrfParams, LabelMap, crf_segment, meanfield_infer
from .Dataset import ClickLabel, PatchRecord, Photo, SegmentPolygon, assign_splits, generate_patches
from .Eval import EvalReport, ensemble_combine, eval_clicks, eval_segments, grid_search_crf
from .Multiscale import ScalePlan, plan_scales, predict_multiscale
from .Network import NetworkSpec, WeightStore, convolutionalize, forward_dense, forward_patch

__version__ = "0.1.0"

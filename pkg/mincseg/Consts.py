# -*- coding: utf-8 -*-

CATEGORIES = [
    BRICK,
    CARPET,
    CERAMIC,
    FABRIC,
    FOLIAGE,
    FOOD,
    GLASS,
    HAIR,
    LEATHER,
    METAL,
    MIRROR,
    OTHER,
    PAINTED,
    PAPER,
    PLASTIC,
    POLISHED_STONE,
    SKIN,
    SKY,
    STONE,
    TILE,
    WALLPAPER,
    WATER,
    WOOD,
] = range(23)

CATEGORY_NAMES = [
    "brick",
    "carpet",
    "ceramic",
    "fabric",
    "foliage",
    "food",
    "glass",
    "hair",
    "leather",
    "metal",
    "mirror",
    "other",
    "painted",
    "paper",
    "plastic",
    "polishedstone",
    "skin",
    "sky",
    "stone",
    "tile",
    "wallpaper",
    "water",
    "wood",
]

NUM_CATEGORIES = len(CATEGORIES)

# Patch counts of the full MINC release. Reference only.
MINC_PATCH_COUNTS = {
    WOOD: 564891,
    PAINTED: 465076,
    FABRIC: 397982,
    GLASS: 216368,
    METAL: 188491,
    TILE: 147346,
    SKY: 142150,
    FOLIAGE: 120957,
    POLISHED_STONE: 114085,
    CARPET: 98891,
    LEATHER: 83644,
    MIRROR: 75084,
    BRICK: 64454,
    WATER: 55364,
    OTHER: 39612,
    PLASTIC: 38975,
    SKIN: 35246,
    STONE: 29616,
    CERAMIC: 28108,
    HAIR: 26103,
    FOOD: 25498,
    PAPER: 23779,
    WALLPAPER: 14954,
}

SPLITS = [TRAIN, VALIDATE, TEST] = range(3)
SPLIT_NAMES = ["train", "validate", "test"]

SOURCES = [SEGMENT, CLICK] = range(2)
SOURCE_NAMES = ["segment", "click"]

PATCH_SIZE = 256
CROP_SIZE = 227
DEFAULT_PATCH_SCALE = 0.233
FUSION_DIM = 550
MEAN_RGB = (124.0, 117.0, 104.0)

POISSON_RADIUS_FRACTION = 0.091
POISSON_REJECTION_BUDGET = 30
MIN_TEST_SEGMENTS = 75
DEFAULT_SPLIT_RATIOS = (0.7, 0.1, 0.2)

PROBABILITY_FLOOR = 1e-12
DEFAULT_CRF_ITERATIONS = 10

DEFAULT_CRF_GRID = {
    "theta_p": (0.05, 0.1, 0.2),
    "theta_L": (5.0, 10.0, 20.0),
    "theta_ab": (3.0, 5.0, 10.0),
    "w_p": (0.0, 1.0, 2.0, 4.0, 8.0),
}

# Used by `segment` when no tuned parameters are given.
DEFAULT_CRF_PARAMS = {"theta_p": 0.1, "theta_L": 10.0, "theta_ab": 5.0, "w_p": 2.0}

DEFAULT_SWEEP_SCALES = (0.064, 0.093, 0.133, 0.185, 0.233, 0.32, 0.465, 0.645)

DATA_DIR_ENV = "MINCSEG_DATA_DIR"


def category_index(value):
    """
    Resolves a category given by name or by integer id.
    """
    if isinstance(value, str):
        name = value.strip().lower().replace(" ", "").replace("_", "")
        if name not in CATEGORY_NAMES:
            raise ValueError("Unknown category: {0}".format(value))
        return CATEGORY_NAMES.index(name)
    index = int(value)
    if index < 0 or index >= NUM_CATEGORIES:
        raise ValueError("Category id out of range: {0}".format(value))
    return index

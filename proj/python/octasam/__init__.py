"""Promptable OCTA vessel and FAZ segmentation with low-rank adapters.

Thin Python layer over the native ``_octasam`` extension. Masks are 2-D uint8 (or bool)
arrays, images are H x W or H x W x 3 float arrays in [0, 1], prompt points are
``(x, y, polarity)`` tuples with polarity 1 for foreground and 0 for background.
"""

import json

from ._octasam import (
    ConfigError,
    DataError,
    Error,
    Model,
    ParseError,
    ShapeError,
    cl_dice_loss,
    combined_loss,
    combined_loss_grad,
    crop_fraction,
    default_config,
    dice_loss,
    dice_score,
    generate_prompts,
    hausdorff,
    jaccard_score,
    label_components,
    lr_at_epoch,
    make_fixtures,
    recommend_total,
    rle_decode,
    rle_encode,
    soft_skeleton,
    version,
)

__version__ = version()


def config(**overrides):
    """Training configuration as JSON text: the defaults with nested ``overrides`` applied."""
    cfg = json.loads(default_config())

    def merge(into, extra):
        for key, value in extra.items():
            if isinstance(value, dict) and isinstance(into.get(key), dict):
                merge(into[key], value)
            else:
                into[key] = value

    merge(cfg, overrides)
    return json.dumps(cfg)


__all__ = [name for name in dir() if not name.startswith("_") and name != "json"]

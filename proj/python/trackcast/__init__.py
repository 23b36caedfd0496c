"""Joint 3D multi-object tracking and trajectory forecasting."""

from ._core import (  # noqa: F401
    ade_fde,
    asd_fsd,
    evaluate,
    expected_cardinality,
    greedy_map,
    hungarian,
    init_checkpoint,
    iou3d,
    parse_config,
    parse_tracklet_line,
    synth,
    track,
    train,
    wrap_angle,
)

__version__ = "0.1.0"

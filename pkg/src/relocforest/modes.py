"""Operating modes of the relocalization pipeline."""

from enum import IntEnum


class ForestMode(IntEnum):
    """Sensor regime a forest was trained for."""

    INDOOR_RGBD = 0
    OUTDOOR_RGB = 1


#: Descriptor length per mode: 60 for the patch-transform descriptor used
#: indoors, 64 for externally supplied keypoint descriptors outdoors.
DESCRIPTOR_LENGTH = {
    ForestMode.INDOOR_RGBD: 60,
    ForestMode.OUTDOOR_RGB: 64,
}


def descriptor_length(mode: ForestMode) -> int:
    return DESCRIPTOR_LENGTH[ForestMode(mode)]

"""Per-channel standardization of proprioception, tactile windows and
actions, with statistics computed over a training set"""

from collections import OrderedDict

import numpy as np

from pyvitac.errors import ShapeError


STD_FLOOR = 1e-6
STREAMS = ('proprio', 'tactile', 'actions')


class ChannelStats(object):
    """Mean and standard deviation of each channel of one stream"""

    def __init__(self, mean, std, floor=STD_FLOOR):
        mean = np.array(mean, dtype=np.float64)
        std = np.array(std, dtype=np.float64)
        if mean.shape != std.shape or mean.ndim != 1:
            raise ShapeError("channel mean and std must be equally long vectors",
                             context={'mean': mean.shape, 'std': std.shape})
        self.mean = mean
        self.std = np.maximum(std, floor)

    @classmethod
    def compute(cls, samples, floor=STD_FLOOR):
        """Statistics over every row of an array whose last axis is the
        channel axis"""
        rows = np.asarray(samples, dtype=np.float64)
        rows = rows.reshape(-1, rows.shape[-1])
        if rows.shape[0] == 0:
            raise ShapeError("no samples to compute channel statistics from")
        return cls(rows.mean(axis=0), rows.std(axis=0), floor)

    @classmethod
    def identity(cls, width):
        return cls(np.zeros(width), np.ones(width))

    @property
    def width(self):
        return self.mean.shape[0]

    def _check(self, values):
        if values.shape[-1] != self.width:
            raise ShapeError("channel count mismatch",
                             context={'expected': self.width, 'actual': values.shape[-1]})

    def normalize(self, values):
        values = np.asarray(values, dtype=np.float64)
        self._check(values)
        return (values - self.mean) / self.std

    def denormalize(self, values):
        values = np.asarray(values, dtype=np.float64)
        self._check(values)
        return values * self.std + self.mean


class NormalizationStats(object):
    """The ChannelStats of the proprio, tactile and action streams"""

    def __init__(self, proprio, tactile, actions):
        self.proprio = proprio
        self.tactile = tactile
        self.actions = actions

    @classmethod
    def compute(cls, proprio, tactile, actions, floor=STD_FLOOR):
        """
        Args:
            proprio -- array [..., P] of proprio frames
            tactile -- array [..., 2C] of tactile window rows (raw and deltas)
            actions -- array [..., P] of action frames
        """
        return cls(ChannelStats.compute(proprio, floor),
                   ChannelStats.compute(tactile, floor),
                   ChannelStats.compute(actions, floor))

    @classmethod
    def identity(cls, proprio_dim, tactile_width):
        return cls(ChannelStats.identity(proprio_dim),
                   ChannelStats.identity(tactile_width),
                   ChannelStats.identity(proprio_dim))

    def arrays(self):
        """Named blobs for checkpoint files"""
        blobs = OrderedDict()
        for stream in STREAMS:
            stats = getattr(self, stream)
            blobs['stats.%s.mean' % stream] = stats.mean
            blobs['stats.%s.std' % stream] = stats.std
        return blobs

    @classmethod
    def from_arrays(cls, blobs):
        streams = []
        for stream in STREAMS:
            streams.append(ChannelStats(blobs['stats.%s.mean' % stream],
                                        blobs['stats.%s.std' % stream], floor=0.0))
        return cls(*streams)

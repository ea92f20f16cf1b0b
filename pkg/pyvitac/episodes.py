"""Episode files, dataset manifests and the windowed training samples cut
from recorded episodes.

An episode file is a fixed header followed by fixed-stride frame records,
all little endian:

    magic        4 bytes  b"PVEP"
    version      uint32
    task         32 bytes, utf-8, NUL padded
    seed         uint64
    frames       uint32
    dt           float64
    views        uint8, then views x (height, width, channels) uint32
    channels     uint32, tactile channels C
    proprio      uint32, proprio width P
    start        2 x float64, initial effector position
    target       2 x float64
    success      uint8
    frames x record:
        every view's pixels, C raw tactile, P proprio, P action, all float64

A dataset directory holds one file per episode and a plain text manifest,
headed by the digest of the run configuration that generated it, with one
line per episode: file name, seed, length and success flag.
"""

import os
import struct

import numpy as np

from pyvitac.errors import (DimensionError, FormatError, TruncationError,
                            VersionError)
from pyvitac.normalization import STD_FLOOR, NormalizationStats
from pyvitac.policy import Batch, Observation
from pyvitac.synthworld import Episode
from pyvitac.utilities import _log, file_digest, sha256_hex, strip_comment


MAGIC = b"PVEP"
VERSION = 1
TASK_BYTES = 32
HEADER = struct.Struct('<4sI%dsQIdB' % TASK_BYTES)
VIEW = struct.Struct('<III')
DIMS = struct.Struct('<II')
TAIL = struct.Struct('<4dB')

EPISODE_NAME = "episode_%04d.pvep"
MANIFEST_NAME = "manifest.txt"
DIGEST_PREFIX = "# config_digest="


### Episode files

def _frame_width(views, channels, proprio):
    pixels = sum(h * w * c for h, w, c in views)
    return pixels + channels + 2 * proprio


def encode_episode(episode):
    task = episode.task.encode('utf-8')
    if len(task) > TASK_BYTES:
        raise FormatError("task name longer than %d bytes" % TASK_BYTES,
                          context={'task': episode.task})
    views = [image.shape[1:] for image in episode.images]
    channels = episode.tactile.shape[1]
    proprio = episode.proprio.shape[1]
    chunks = [HEADER.pack(MAGIC, VERSION, task, episode.seed, episode.length,
                          episode.dt, len(views))]
    chunks.extend(VIEW.pack(*view) for view in views)
    chunks.append(DIMS.pack(channels, proprio))
    chunks.append(TAIL.pack(episode.initial_effector[0], episode.initial_effector[1],
                            episode.target[0], episode.target[1], int(episode.success)))
    count = episode.length
    columns = [image.reshape(count, -1) for image in episode.images]
    columns += [episode.tactile, episode.proprio, episode.actions]
    records = np.concatenate(columns, axis=1) if count else np.zeros((0, 0))
    chunks.append(np.ascontiguousarray(records, dtype='<f8').tobytes())
    return b"".join(chunks)


class _Reader(object):

    def __init__(self, payload):
        self.payload = payload
        self.offset = 0

    def unpack(self, layout):
        end = self.offset + layout.size
        if end > len(self.payload):
            raise TruncationError("episode header ends early", expected=end,
                                  actual=len(self.payload))
        values = layout.unpack_from(self.payload, self.offset)
        self.offset = end
        return values


def decode_episode(payload, expect=None):
    """Parses an episode file's bytes.

    Args:
        payload -- the file contents

    Keyword Args:
        expect -- optional WorldConfig; the header's view, tactile and
                  proprio dimensions must then match it

    Raises:
        FormatError      -- bad magic
        VersionError     -- unsupported version
        TruncationError  -- fewer bytes than the header declares
        DimensionError   -- more bytes than the header declares, or header
                            dimensions that differ from `expect`
    """
    reader = _Reader(payload)
    magic, version, task, seed, count, dt, n_views = reader.unpack(HEADER)
    if magic != MAGIC:
        raise FormatError("not an episode file", context={'magic': repr(magic)})
    if version != VERSION:
        raise VersionError("unsupported episode version %d" % version,
                           context={'supported': VERSION})
    views = [reader.unpack(VIEW) for _ in range(n_views)]
    channels, proprio = reader.unpack(DIMS)
    sx, sy, tx, ty, success = reader.unpack(TAIL)

    if expect is not None:
        declared = (list(views), channels, proprio)
        wanted = ([tuple(v) for v in expect.views], expect.tactile_channels,
                  expect.proprio_dim)
        if declared != wanted:
            raise DimensionError("episode dimensions differ from the configuration",
                                 context={'file': declared, 'config': wanted})

    width = _frame_width(views, channels, proprio)
    expected = reader.offset + 8 * width * count
    if len(payload) < expected:
        raise TruncationError("episode payload shorter than its header declares",
                              expected=expected, actual=len(payload))
    if len(payload) > expected:
        raise DimensionError("episode payload longer than its header declares",
                             context={'expected_bytes': expected, 'actual_bytes': len(payload)})

    records = np.frombuffer(payload, dtype='<f8', count=width * count,
                            offset=reader.offset).astype(np.float64).reshape(count, width)
    column = 0
    images = []
    for height, w, c in views:
        size = height * w * c
        images.append(records[:, column:column + size].reshape(count, height, w, c).copy())
        column += size
    tactile = records[:, column:column + channels].copy()
    column += channels
    joints = records[:, column:column + proprio].copy()
    column += proprio
    actions = records[:, column:column + proprio].copy()
    return Episode(task.rstrip(b"\x00").decode('utf-8'), seed, dt, (sx, sy), (tx, ty),
                   images, tactile, joints, actions, bool(success))


def write_episode(episode, path):
    with open(path, 'wb') as handle:
        handle.write(encode_episode(episode))


def read_episode(path, expect=None):
    with open(path, 'rb') as handle:
        return decode_episode(handle.read(), expect)


### Datasets

def write_dataset(episodes, out_dir, config_digest):
    """Writes every episode and the manifest into `out_dir`.

    Returns:
        path of the manifest
    """
    if not os.path.isdir(out_dir):
        os.makedirs(out_dir)
    lines = [DIGEST_PREFIX + config_digest]
    for index, episode in enumerate(episodes):
        name = EPISODE_NAME % index
        write_episode(episode, os.path.join(out_dir, name))
        lines.append("%s %d %d %d" % (name, episode.seed, episode.length, int(episode.success)))
    manifest = os.path.join(out_dir, MANIFEST_NAME)
    with open(manifest, 'w') as handle:
        handle.write("\n".join(lines) + "\n")
    _log("wrote %d episodes to %s" % (len(episodes), out_dir), log_name="pyvitac.episodes")
    return manifest


def read_manifest(path):
    """Returns (config digest, list of (file name, seed, length, success))"""
    digest = None
    entries = []
    with open(path) as handle:
        for number, line in enumerate(handle, start=1):
            if line.startswith(DIGEST_PREFIX):
                digest = line[len(DIGEST_PREFIX):].strip()
                continue
            line = strip_comment(line)
            if not line:
                continue
            fields = line.split()
            if len(fields) != 4:
                raise FormatError("malformed manifest line", context={'line': number})
            entries.append((fields[0], int(fields[1]), int(fields[2]), fields[3] == '1'))
    return digest, entries


def read_dataset(data_dir, expect=None):
    """Loads a dataset directory written by write_dataset.

    Returns:
        (list of Episode, config digest from the manifest)
    """
    digest, entries = read_manifest(os.path.join(data_dir, MANIFEST_NAME))
    episodes = []
    for name, seed, length, _ in entries:
        episode = read_episode(os.path.join(data_dir, name), expect)
        if episode.length != length or episode.seed != seed:
            raise FormatError("episode file disagrees with the manifest",
                              context={'file': name})
        episodes.append(episode)
    return episodes, digest


def manifest_digest(data_dir):
    return file_digest(os.path.join(data_dir, MANIFEST_NAME))


def dataset_digest(episodes):
    """Hash of the encoded episodes, equal for equal datasets whether they
    were read from disk or generated in memory"""
    return sha256_hex(b"".join(encode_episode(e) for e in episodes))


### Windows

def tactile_window(raw, end, length):
    """Rows [raw, delta] for frames end - length + 1 .. end, with indices
    clamped into the episode.  The first row's delta is zero.

    >>> tactile_window(np.array([[1.0], [3.0], [6.0]]), 2, 2).tolist()
    [[3.0, 0.0], [6.0, 3.0]]
    >>> tactile_window(np.array([[1.0], [3.0]]), 0, 2).tolist()
    [[1.0, 0.0], [1.0, 0.0]]
    """
    raw = np.asarray(raw, dtype=np.float64)
    last = raw.shape[0] - 1
    indices = np.clip(np.arange(end - length + 1, end + 1), 0, last)
    frames = raw[indices]
    deltas = np.zeros_like(frames)
    deltas[1:] = frames[1:] - frames[:-1]
    return np.concatenate([frames, deltas], axis=1)


def future_window(raw, t, length):
    """Rows [raw, delta] for frames t + 1 .. t + length, with indices
    clamped into the episode.  Deltas are taken against the preceding frame,
    so the first row's delta is raw[t + 1] - raw[t].

    >>> future_window(np.array([[1.0], [3.0], [6.0]]), 0, 2).tolist()
    [[3.0, 2.0], [6.0, 3.0]]
    >>> future_window(np.array([[1.0], [3.0], [6.0]]), 1, 2).tolist()
    [[6.0, 3.0], [6.0, 0.0]]
    """
    raw = np.asarray(raw, dtype=np.float64)
    last = raw.shape[0] - 1
    previous = np.clip(np.arange(t, t + length), 0, last)
    indices = np.clip(np.arange(t + 1, t + length + 1), 0, last)
    frames = raw[indices]
    return np.concatenate([frames, frames - raw[previous]], axis=1)


def history(frames, end, length):
    """Frames end - length + 1 .. end, repeating frame 0 before the start"""
    frames = np.asarray(frames, dtype=np.float64)
    indices = np.clip(np.arange(end - length + 1, end + 1), 0, frames.shape[0] - 1)
    return frames[indices]


def chunk(frames, start, length):
    """Frames start .. start + length - 1, repeating the last frame past the
    end"""
    frames = np.asarray(frames, dtype=np.float64)
    indices = np.clip(np.arange(start, start + length), 0, frames.shape[0] - 1)
    return frames[indices]


def observation_at(episode, t, config):
    """The raw Observation of an episode at frame t, for a PolicyConfig"""
    return Observation([image[t] for image in episode.images],
                       tactile_window(episode.tactile, t, config.tactile_history),
                       history(episode.proprio, t, config.proprio_history))


class SampleSet(object):
    """Every (episode, frame) training sample of a dataset, windowed for a
    PolicyConfig and normalized with statistics computed over the samples.

    Args:
        episodes -- list of Episode
        config   -- a PolicyConfig

    Keyword Args:
        floor -- lower bound of the normalization standard deviations
    """

    def __init__(self, episodes, config, floor=STD_FLOOR):
        if not episodes or not any(e.length for e in episodes):
            raise FormatError("the dataset holds no frames")
        self.config = config
        images = [[] for _ in config.views]
        tactile, proprio, actions, future = [], [], [], []
        for episode in episodes:
            if len(episode.images) != len(config.views):
                raise DimensionError("episode has the wrong number of views",
                                     context={'seed': episode.seed})
            for t in range(episode.length):
                for store, image in zip(images, episode.images):
                    store.append(image[t])
                tactile.append(tactile_window(episode.tactile, t, config.tactile_history))
                proprio.append(history(episode.proprio, t, config.proprio_history))
                actions.append(chunk(episode.actions, t, config.action_horizon))
                future.append(future_window(episode.tactile, t, config.tactile_future))
        self.images = [np.array(store) for store in images]
        tactile = np.array(tactile)
        proprio = np.array(proprio)
        actions = np.array(actions)
        future = np.array(future)
        self.stats = NormalizationStats.compute(proprio, tactile, actions, floor)
        self.tactile = self.stats.tactile.normalize(tactile)
        self.proprio = self.stats.proprio.normalize(proprio)
        self.actions = self.stats.actions.normalize(actions)
        self.future = self.stats.tactile.normalize(future)

    def __len__(self):
        return self.actions.shape[0]

    def batch(self, indices, noise):
        """A normalized Batch of the given sample indices"""
        indices = np.asarray(indices)
        observation = Observation([images[indices] for images in self.images],
                                  self.tactile[indices], self.proprio[indices])
        return Batch(observation, self.actions[indices], self.future[indices], noise)

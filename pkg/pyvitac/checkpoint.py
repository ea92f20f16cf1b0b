"""Binary checkpoint files.

Layout, all integers little endian:

    magic      4 bytes  b"PVCK"
    version    uint32
    digest     64 bytes, ascii hex model config digest
    count      uint32, number of blobs
    count x blob:
        name length uint16, name (utf-8)
        ndim        uint8, then ndim x uint32 dimensions
        values      float64 little endian, row-major

Blobs hold every model parameter and the normalization statistics, so a
saved and reloaded model is bit-identical to the one saved.
"""

import struct
from collections import OrderedDict

import numpy as np

from pyvitac.errors import (DigestError, FormatError, TruncationError,
                            VersionError)
from pyvitac.normalization import NormalizationStats
from pyvitac.policy import PolicyModel
from pyvitac.utilities import _log


MAGIC = b"PVCK"
VERSION = 1
HEADER = struct.Struct('<4sI64sI')


def encode_blobs(digest, blobs):
    """Serializes a name -> array mapping under a model digest"""
    digest = digest.encode('ascii')
    if len(digest) != 64:
        raise FormatError("model digest must be 64 hex characters")
    chunks = [HEADER.pack(MAGIC, VERSION, digest, len(blobs))]
    for name, values in blobs.items():
        values = np.ascontiguousarray(values, dtype='<f8')
        encoded = name.encode('utf-8')
        chunks.append(struct.pack('<H', len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack('<B', values.ndim))
        chunks.append(struct.pack('<%dI' % values.ndim, *values.shape))
        chunks.append(values.tobytes())
    return b"".join(chunks)


class _Reader(object):

    def __init__(self, payload):
        self.payload = payload
        self.offset = 0

    def take(self, count):
        end = self.offset + count
        if end > len(self.payload):
            raise TruncationError("checkpoint ends early", expected=end,
                                  actual=len(self.payload))
        data = self.payload[self.offset:end]
        self.offset = end
        return data

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode_blobs(payload):
    """Inverse of encode_blobs.

    Returns:
        (digest, OrderedDict of name -> array)
    """
    reader = _Reader(payload)
    magic, version, digest, count = reader.unpack(HEADER.format)
    if magic != MAGIC:
        raise FormatError("not a checkpoint file", context={'magic': repr(magic)})
    if version != VERSION:
        raise VersionError("unsupported checkpoint version %d" % version,
                           context={'supported': VERSION})
    blobs = OrderedDict()
    for _ in range(count):
        (length,) = reader.unpack('<H')
        name = reader.take(length).decode('utf-8')
        (ndim,) = reader.unpack('<B')
        shape = reader.unpack('<%dI' % ndim) if ndim else ()
        size = int(np.prod(shape)) if ndim else 1
        values = np.frombuffer(reader.take(8 * size), dtype='<f8')
        blobs[name] = values.astype(np.float64).reshape(shape)
    if reader.offset != len(payload):
        raise FormatError("trailing bytes after the last blob",
                          context={'extra_bytes': len(payload) - reader.offset})
    return digest.decode('ascii'), blobs


def save_checkpoint(model, path):
    """Writes a model's parameters and normalization statistics"""
    blobs = OrderedDict(model.params.arrays())
    blobs.update(model.stats.arrays())
    with open(path, 'wb') as handle:
        handle.write(encode_blobs(model.config.digest(), blobs))
    _log("wrote checkpoint %s (%d blobs)" % (path, len(blobs)), log_name="pyvitac.checkpoint")


def read_checkpoint(path):
    with open(path, 'rb') as handle:
        return decode_blobs(handle.read())


def load_checkpoint(path, config, weights=None, fk=None):
    """Rebuilds a PolicyModel from a checkpoint.

    Args:
        path   -- the checkpoint file
        config -- the PolicyConfig the checkpoint must have been saved under

    Raises:
        DigestError -- if the checkpoint was saved under another model config
    """
    digest, blobs = read_checkpoint(path)
    if digest != config.digest():
        raise DigestError("checkpoint was written under a different model config",
                          context={'checkpoint': digest[:12], 'config': config.digest()[:12]})
    model = PolicyModel(config, stats=NormalizationStats.from_arrays(blobs),
                        weights=weights, fk=fk)
    model.params.assign(blobs)
    return model

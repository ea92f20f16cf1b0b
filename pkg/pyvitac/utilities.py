"""Functions shared by every part of the package: the logging indirection,
seed mixing, digests and the small text parsers used for configuration
documents, scheme files and score sheets"""

import hashlib
import logging

import numpy as np


MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def _log(msg, level=logging.INFO, log_name="pyvitac"):
    """Simple point of indirection to handle all logging code in one place

    Args:
        msg -- the message to log

    Keyword Args:
        level    -- the logging level to emit the message at
        log_name -- the name of the system logger to send messages to
    """
    logging.getLogger(log_name).log(level, msg)


def splitmix64(value):
    """One round of the splitmix64 finalizer, used for turning related
    integers (a seed and an index) into unrelated 64 bit seeds.

    >>> splitmix64(0)
    16294208416658607535
    """
    z = (value + GOLDEN_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def mix_seed(seed, index):
    """Derives the sub-seed for item `index` of a run seeded with `seed`:
    splitmix64(seed XOR index * golden gamma).

    >>> mix_seed(0, 0) == splitmix64(0)
    True
    >>> mix_seed(7, 1) != mix_seed(7, 2)
    True
    """
    return splitmix64((seed ^ ((index * GOLDEN_GAMMA) & MASK64)) & MASK64)


def rng_for(*keys):
    """Returns a numpy Generator deterministically seeded by the given
    non-negative integers"""
    return np.random.default_rng([int(k) & MASK64 for k in keys])


def sha256_hex(data):
    """Hex digest of a bytes or text payload"""
    if not isinstance(data, bytes):
        data = data.encode('utf-8')
    return hashlib.sha256(data).hexdigest()


def file_digest(path):
    """Hex SHA-256 digest of a file's contents"""
    digest = hashlib.sha256()
    with open(path, 'rb') as handle:
        for block in iter(lambda: handle.read(1 << 16), b''):
            digest.update(block)
    return digest.hexdigest()


def format_real(value):
    """Formats a real number so that parsing it back yields the same double.

    >>> format_real(0.1)
    '0.1'
    >>> format_real(3)
    '3.0'
    """
    return repr(float(value))


def strip_comment(line):
    """Removes a trailing '#' comment and surrounding whitespace from a line

    >>> strip_comment("epochs = 10  # short run")
    'epochs = 10'
    >>> strip_comment("# only a comment")
    ''
    """
    index = line.find('#')
    if index >= 0:
        line = line[:index]
    return line.strip()


def parse_key_values(text):
    """Parses a flat key=value document into a list of (line number, key,
    value) triples, skipping blank and comment lines.  Lines without an '='
    are returned with a value of None so the caller can decide how to
    complain about them.

    >>> parse_key_values("a = 1\\n# note\\n\\nb=two words")
    [(1, 'a', '1'), (4, 'b', 'two words')]
    >>> parse_key_values("broken")
    [(1, 'broken', None)]
    """
    entries = []
    for number, raw in enumerate(text.splitlines(), start=1):
        line = strip_comment(raw)
        if not line:
            continue
        if '=' not in line:
            entries.append((number, line, None))
            continue
        key, value = line.split('=', 1)
        entries.append((number, key.strip(), value.strip()))
    return entries


def split_fields(line):
    """Splits a score sheet or table line on commas and/or whitespace

    >>> split_fields("peg_insertion, 3.0 2.7")
    ['peg_insertion', '3.0', '2.7']
    >>> split_fields("  ")
    []
    """
    return line.replace(',', ' ').split()


def parse_int_list(value):
    """Parses a comma separated list of integers

    >>> parse_int_list("7, 17,7,17,2")
    [7, 17, 7, 17, 2]
    """
    return [int(part) for part in value.split(',') if part.strip()]


def parse_views(value):
    """Parses a view list of HxWxC triples

    >>> parse_views("16x16x1,16x16x1")
    [(16, 16, 1), (16, 16, 1)]
    """
    views = []
    for part in value.split(','):
        part = part.strip()
        if not part:
            continue
        dims = tuple(int(d) for d in part.lower().split('x'))
        if len(dims) != 3:
            raise ValueError("view %r is not of the form HxWxC" % part)
        views.append(dims)
    return views


def format_views(views):
    """Inverse of parse_views

    >>> format_views([(16, 16, 1), (8, 4, 3)])
    '16x16x1,8x4x3'
    """
    return ",".join("%dx%dx%d" % tuple(v) for v in views)

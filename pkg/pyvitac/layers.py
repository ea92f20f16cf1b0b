"""Transformer building blocks: named parameter sets, linear layers,
sinusoidal positional encodings, multi-head attention and pre-norm encoder
and decoder blocks.  Token tensors are [L, D] or batched [B, L, D]."""

import math
import zlib
from collections import OrderedDict

import numpy as np

from pyvitac import tensor as T
from pyvitac.errors import ConfigError, ShapeError
from pyvitac.utilities import rng_for


SCALED_UNIFORM = 'scaled_uniform'
ZEROS = 'zeros'
INIT_SCHEMES = (SCALED_UNIFORM, ZEROS)

FFN_RATIO = 4
LN_EPS = 1e-5


class ParameterSet(object):
    """An ordered collection of named leaf tensors.

    Every weight is drawn from its own generator, seeded by the set's seed
    and a checksum of the parameter's name, so a parameter gets the same
    initial values whatever else is registered alongside it.  Weights are
    uniform in +-sqrt(1 / fan_in) (or zero under the 'zeros' scheme), biases
    are zero and layer norm gains are one.
    """

    def __init__(self, seed=0, scheme=SCALED_UNIFORM):
        if scheme not in INIT_SCHEMES:
            raise ConfigError("unknown init scheme %r" % scheme,
                              context={'known': ",".join(INIT_SCHEMES)})
        self.seed = seed
        self.scheme = scheme
        self._params = OrderedDict()

    def _register(self, name, values):
        if name in self._params:
            raise ConfigError("parameter %s registered twice" % name)
        param = T.Tensor(np.ascontiguousarray(values), requires_grad=True, name=name)
        self._params[name] = param
        return param

    def weight(self, name, shape, fan_in):
        if self.scheme == ZEROS:
            return self._register(name, np.zeros(shape))
        bound = math.sqrt(1.0 / fan_in)
        rng = rng_for(self.seed, zlib.crc32(name.encode('utf-8')))
        return self._register(name, rng.uniform(-bound, bound, size=shape))

    def bias(self, name, dim):
        return self._register(name, np.zeros(dim))

    def gain(self, name, dim):
        return self._register(name, np.ones(dim))

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __iter__(self):
        return iter(self._params)

    def __len__(self):
        return len(self._params)

    def keys(self):
        return list(self._params.keys())

    def items(self):
        return list(self._params.items())

    def arrays(self):
        """Returns a name -> ndarray mapping of the current values"""
        return OrderedDict((name, p.data) for name, p in self._params.items())

    def assign(self, arrays):
        """Replaces parameter values from a name -> ndarray mapping.  Every
        parameter must be present with its registered shape."""
        for name, param in self._params.items():
            if name not in arrays:
                raise ShapeError("missing parameter %s" % name)
            values = np.asarray(arrays[name], dtype=np.float64)
            if values.shape != param.shape:
                raise ShapeError("parameter %s has the wrong shape" % name,
                                 context={'expected': param.shape,
                                          'actual': values.shape})
            param.data = np.array(values, dtype=np.float64)

    def zero_grad(self):
        for param in self._params.values():
            param.grad = None

    def count(self):
        return int(sum(p.size for p in self._params.values()))


def init_params(seed, scheme=SCALED_UNIFORM):
    """Creates an empty parameter set; layers register their weights into
    it as they are built.

    Args:
        seed -- integer seed, the only source of randomness

    Keyword Args:
        scheme -- 'scaled_uniform' for fan-in scaled uniform weights, or
                  'zeros' for all-zero weights (biases are always zero)
    """
    return ParameterSet(seed, scheme)


class Linear(object):
    """y = x W^T + b over the last axis"""

    def __init__(self, params, name, in_dim, out_dim, bias=True):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.weight = params.weight(name + '.weight', (out_dim, in_dim), fan_in=in_dim)
        self.bias = params.bias(name + '.bias', out_dim) if bias else None

    def __call__(self, x):
        if x.shape[-1] != self.in_dim:
            raise ShapeError("linear input width mismatch",
                             context={'expected': self.in_dim, 'actual': x.shape[-1]})
        y = T.matmul(x, T.transpose(self.weight))
        if self.bias is None:
            return y
        rows = int(np.prod(y.shape[:-1]))
        bias_rows = T.matmul(T.ones((rows, 1)), T.reshape(self.bias, (1, self.out_dim)))
        return T.add(y, T.reshape(bias_rows, y.shape))


def sinusoidal_table(length, model_dim):
    """Returns a [length, model_dim] table whose even columns hold sines and
    odd columns cosines of position / 10000^(2i / model_dim)"""
    positions = np.arange(length, dtype=np.float64)[:, None]
    pairs = np.arange(model_dim) // 2
    rates = np.power(10000.0, -2.0 * pairs / float(model_dim))
    angles = positions * rates[None, :]
    table = np.where(np.arange(model_dim) % 2 == 0, np.sin(angles), np.cos(angles))
    return table


class PositionalEncoding(object):
    """A fixed sinusoidal table, added to token sequences whose order
    matters"""

    def __init__(self, max_len, model_dim):
        self.max_len = max_len
        self.model_dim = model_dim
        self.table = T.Tensor(sinusoidal_table(max_len, model_dim))

    def rows(self, length):
        if length > self.max_len:
            raise ShapeError("sequence longer than the positional table",
                             context={'length': length, 'max_len': self.max_len})
        return self.table.data[:length]

    def add_to(self, tokens):
        length = tokens.shape[-2]
        rows = np.broadcast_to(self.rows(length), tokens.shape).copy()
        return T.add(tokens, T.Tensor(rows))


class AttentionConfig(object):
    """Width and head count of the attention layers"""

    def __init__(self, model_dim, n_heads):
        if model_dim <= 0 or n_heads <= 0:
            raise ConfigError("model_dim and n_heads must be positive")
        if model_dim % n_heads:
            raise ConfigError("model_dim must be divisible by n_heads",
                              context={'model_dim': model_dim, 'n_heads': n_heads})
        self.model_dim = model_dim
        self.n_heads = n_heads

    @property
    def head_dim(self):
        return self.model_dim // self.n_heads


class MultiHeadAttention(object):
    """Scaled dot-product attention with per-head slices of shared q/k/v
    projections.  Self-attention is the case where both sources are the
    same tensor."""

    def __init__(self, params, name, cfg):
        dim = cfg.model_dim
        self.cfg = cfg
        self.query = Linear(params, name + '.query', dim, dim)
        self.key = Linear(params, name + '.key', dim, dim)
        self.value = Linear(params, name + '.value', dim, dim)
        self.out = Linear(params, name + '.out', dim, dim)

    def __call__(self, q_src, kv_src, return_weights=False):
        dim = self.cfg.model_dim
        if q_src.shape[-1] != dim or kv_src.shape[-1] != dim:
            raise ShapeError("attention sources must have model_dim %d" % dim,
                             context={'queries': q_src.shape, 'keys': kv_src.shape})
        q = self.query(q_src)
        k = self.key(kv_src)
        v = self.value(kv_src)
        head_dim = self.cfg.head_dim
        scale = 1.0 / math.sqrt(head_dim)
        heads = []
        weights = []
        for h in range(self.cfg.n_heads):
            lo, hi = h * head_dim, (h + 1) * head_dim
            qh = T.slice_axis(q, -1, lo, hi)
            kh = T.slice_axis(k, -1, lo, hi)
            vh = T.slice_axis(v, -1, lo, hi)
            scores = T.mul(T.matmul(qh, T.transpose(kh)), scale)
            attn = T.softmax(scores, axis=-1)
            weights.append(attn)
            heads.append(T.matmul(attn, vh))
        merged = heads[0] if len(heads) == 1 else T.concat(heads, axis=-1)
        result = self.out(merged)
        if return_weights:
            return result, weights
        return result


def multi_head_attention(q_src, kv_src, attention):
    """Functional entry point: attention(q_src, kv_src)"""
    return attention(q_src, kv_src)


class FeedForward(object):
    """Linear -> gelu -> Linear with a 4x hidden width"""

    def __init__(self, params, name, model_dim):
        self.up = Linear(params, name + '.up', model_dim, FFN_RATIO * model_dim)
        self.down = Linear(params, name + '.down', FFN_RATIO * model_dim, model_dim)

    def __call__(self, x):
        return self.down(T.gelu(self.up(x)))


class LayerNorm(object):

    def __init__(self, params, name, model_dim):
        self.gain = params.gain(name + '.gain', model_dim)
        self.bias = params.bias(name + '.bias', model_dim)

    def __call__(self, x):
        return T.layer_norm(x, self.gain, self.bias, LN_EPS)


class EncoderBlock(object):
    """Pre-norm residual block: x + MHA(LN(x)), then x + FFN(LN(x))"""

    def __init__(self, params, name, cfg):
        self.norm1 = LayerNorm(params, name + '.norm1', cfg.model_dim)
        self.attn = MultiHeadAttention(params, name + '.attn', cfg)
        self.norm2 = LayerNorm(params, name + '.norm2', cfg.model_dim)
        self.ffn = FeedForward(params, name + '.ffn', cfg.model_dim)

    def __call__(self, tokens):
        h = self.norm1(tokens)
        x = T.add(tokens, self.attn(h, h))
        return T.add(x, self.ffn(self.norm2(x)))


class DecoderBlock(object):
    """Pre-norm residual block: self-attention over the queries, attention
    from the queries to a memory, then the feed-forward layer"""

    def __init__(self, params, name, cfg):
        self.norm1 = LayerNorm(params, name + '.norm1', cfg.model_dim)
        self.self_attn = MultiHeadAttention(params, name + '.self_attn', cfg)
        self.norm2 = LayerNorm(params, name + '.norm2', cfg.model_dim)
        self.cross_attn = MultiHeadAttention(params, name + '.cross_attn', cfg)
        self.norm3 = LayerNorm(params, name + '.norm3', cfg.model_dim)
        self.ffn = FeedForward(params, name + '.ffn', cfg.model_dim)

    def __call__(self, queries, memory):
        h = self.norm1(queries)
        x = T.add(queries, self.self_attn(h, h))
        x = T.add(x, self.cross_attn(self.norm2(x), memory))
        return T.add(x, self.ffn(self.norm3(x)))


def encoder_block(tokens, block):
    return block(tokens)


def decoder_block(queries, memory, block):
    return block(queries, memory)

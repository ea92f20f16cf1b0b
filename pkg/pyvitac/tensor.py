"""Dense float64 tensors with reverse-mode automatic differentiation.

Every operation applied to a tensor that requires a gradient appends a node
to the calling thread's graph (a tape).  `backward` sweeps that tape once,
in reverse recording order, and then clears it, so no graph survives from
one optimization step to the next.  Backward rules live in BACKWARD_RULES,
keyed by operation kind.

Only scalar broadcasting is supported: binary operations take two tensors
of equal shape, or a tensor and a scalar.  Callers reshape explicitly.
"""

import contextlib
import math
import threading

import numpy as np

from pyvitac.errors import ShapeError, DomainError, GraphError


UNARY_KINDS = ('neg', 'exp', 'ln', 'tanh', 'relu', 'gelu', 'abs', 'square',
               'sqrt', 'sin', 'cos')
BINARY_KINDS = ('add', 'sub', 'mul', 'div')
REDUCE_KINDS = ('sum', 'mean', 'max')

# gelu, tanh approximation
GELU_C = math.sqrt(2.0 / math.pi)
GELU_K = 0.044715

_state = threading.local()


class Node(object):
    """One record on the tape: the operation kind, its input tensors, the
    tensor it produced and whatever the backward rule needs from the
    forward pass"""

    __slots__ = ('kind', 'inputs', 'output', 'ctx')

    def __init__(self, kind, inputs, output, ctx=None):
        self.kind = kind
        self.inputs = inputs
        self.output = output
        self.ctx = ctx

    def __repr__(self):
        return "<Node %s>" % self.kind


class Graph(object):
    """Append-only tape of operation records.  Nodes are appended as the
    operations run, so every node's inputs were produced before it."""

    def __init__(self):
        self.nodes = []

    def append(self, node):
        self.nodes.append(node)

    def clear(self):
        """Drops every record, and detaches the tensors they produced so
        that the arrays of a finished step can be freed"""
        for node in self.nodes:
            output = node.output
            if output is not None:
                output.node = None
                output.requires_grad = False
            node.inputs = ()
            node.output = None
            node.ctx = None
        self.nodes = []

    def __len__(self):
        return len(self.nodes)


def current_graph():
    """Returns the graph operations on the calling thread are recorded to"""
    graph = getattr(_state, 'graph', None)
    if graph is None:
        graph = Graph()
        _state.graph = graph
    return graph


def reset_graph():
    """Throws away any records on the calling thread's graph"""
    current_graph().clear()


def grad_enabled():
    return getattr(_state, 'enabled', True)


@contextlib.contextmanager
def no_grad():
    """Context manager inside of which no operation is recorded"""
    previous = grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = previous


class Tensor(object):
    """A node value in the autodiff graph: a dense, row-major float64 array
    plus an optional gradient of the same shape.

    Tensors with no graph attachment are plain values.  A leaf tensor with
    requires_grad set accumulates gradients into `grad` on every backward
    sweep until zero_grad is called.
    """

    def __init__(self, values, requires_grad=False, name=None):
        self.data = np.array(values, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.node = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def values(self):
        """The values as a flat, row-major array"""
        return self.data.reshape(-1)

    def item(self):
        if self.size != 1:
            raise ShapeError("item() of a tensor with %d elements" % self.size)
        return float(self.data.reshape(-1)[0])

    def numpy(self):
        return self.data

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data)

    def backward(self):
        backward(self)

    def __add__(self, other):
        return elementwise('add', self, other)

    def __radd__(self, other):
        return elementwise('add', self, other)

    def __sub__(self, other):
        return elementwise('sub', self, other)

    def __rsub__(self, other):
        return elementwise('add', elementwise('neg', self), other)

    def __mul__(self, other):
        return elementwise('mul', self, other)

    def __rmul__(self, other):
        return elementwise('mul', self, other)

    def __truediv__(self, other):
        return elementwise('div', self, other)

    def __neg__(self):
        return elementwise('neg', self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return "<Tensor shape=%s requires_grad=%s>" % (self.shape,
                                                     self.requires_grad)


def constant(values):
    return Tensor(values)


def zeros(shape):
    return Tensor(np.zeros(shape))


def ones(shape):
    return Tensor(np.ones(shape))


def _record(kind, data, inputs, ctx=None):
    """Wraps an op result into a tensor and, if any input needs a gradient,
    puts a node for it on the tape"""
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.node = None
    out.name = None
    out.requires_grad = grad_enabled() and any(t.requires_grad for t in inputs)
    if out.requires_grad:
        node = Node(kind, inputs, out, ctx)
        out.node = node
        current_graph().append(node)
    return out


def _as_tensor(value):
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _first_index(mask):
    return int(np.flatnonzero(mask.reshape(-1))[0])


def _reduce_to(grad, shape):
    if grad.shape == shape:
        return grad
    return np.asarray(np.sum(grad)).reshape(shape)


### Elementwise operations

def _gelu(x):
    return 0.5 * x * (1.0 + np.tanh(GELU_C * (x + GELU_K * x ** 3)))


def _gelu_grad(x):
    t = np.tanh(GELU_C * (x + GELU_K * x ** 3))
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * x * x)


def _check_positive(kind, x):
    bad = ~(x > 0)
    if np.any(bad):
        raise DomainError("%s of non-positive value" % kind,
                          index=_first_index(bad), context={'op': kind})


_UNARY_FORWARD = {
    'neg': np.negative,
    'exp': np.exp,
    'ln': np.log,
    'tanh': np.tanh,
    'relu': lambda x: np.where(x > 0, x, 0.0),
    'gelu': _gelu,
    'abs': np.abs,
    'square': lambda x: x * x,
    'sqrt': np.sqrt,
    'sin': np.sin,
    'cos': np.cos,
}

_BINARY_FORWARD = {
    'add': np.add,
    'sub': np.subtract,
    'mul': np.multiply,
    'div': np.divide,
}


def elementwise(kind, a, b=None):
    """Applies an elementwise operation.

    Args:
        kind -- one of UNARY_KINDS or BINARY_KINDS
        a    -- the tensor operand

    Keyword Args:
        b -- the second operand of binary kinds: a tensor of the same shape
             as `a`, or a scalar (python number or 0-d tensor)

    Returns:
        A tensor with the shape of the tensor operand
    """
    if kind in UNARY_KINDS:
        a = _as_tensor(a)
        if kind in ('ln', 'sqrt'):
            _check_positive(kind, a.data)
        return _record(kind, _UNARY_FORWARD[kind](a.data), (a,))
    if kind not in BINARY_KINDS:
        raise ValueError("unknown elementwise op %r" % kind)
    if b is None:
        raise ShapeError("%s needs two operands" % kind)
    a = _as_tensor(a)
    b = _as_tensor(b)
    if a.shape != b.shape and a.ndim != 0 and b.ndim != 0:
        raise ShapeError("shape mismatch in %s" % kind,
                         context={'left': a.shape, 'right': b.shape})
    return _record(kind, _BINARY_FORWARD[kind](a.data, b.data), (a, b))


def add(a, b):
    return elementwise('add', a, b)


def sub(a, b):
    return elementwise('sub', a, b)


def mul(a, b):
    return elementwise('mul', a, b)


def div(a, b):
    return elementwise('div', a, b)


def neg(a):
    return elementwise('neg', a)


def exp(a):
    return elementwise('exp', a)


def ln(a):
    return elementwise('ln', a)


def tanh(a):
    return elementwise('tanh', a)


def relu(a):
    return elementwise('relu', a)


def gelu(a):
    return elementwise('gelu', a)


def absolute(a):
    return elementwise('abs', a)


def square(a):
    return elementwise('square', a)


def sqrt(a):
    return elementwise('sqrt', a)


def sin(a):
    return elementwise('sin', a)


def cos(a):
    return elementwise('cos', a)


def _unary_rule(derivative):
    def rule(node, grad):
        x = node.inputs[0].data
        return (grad * derivative(x, node.output.data),)
    return rule


def _add_rule(node, grad):
    a, b = node.inputs
    return _reduce_to(grad, a.shape), _reduce_to(grad, b.shape)


def _sub_rule(node, grad):
    a, b = node.inputs
    return _reduce_to(grad, a.shape), _reduce_to(-grad, b.shape)


def _mul_rule(node, grad):
    a, b = node.inputs
    return (_reduce_to(grad * b.data, a.shape),
            _reduce_to(grad * a.data, b.shape))


def _div_rule(node, grad):
    a, b = node.inputs
    return (_reduce_to(grad / b.data, a.shape),
            _reduce_to(-grad * a.data / (b.data * b.data), b.shape))


### Matrix product

def matmul(a, b):
    """Matrix product over the last two axes.  Leading batch axes must be
    equal on both sides, or absent on one of them.

    Returns:
        A tensor of shape [..., m, n] for inputs [..., m, k] and [..., k, n]
    """
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError("matmul needs at least 2-d operands",
                         context={'left': a.shape, 'right': b.shape})
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError("inner dimension mismatch in matmul",
                         context={'left': a.shape, 'right': b.shape})
    batch_a, batch_b = a.shape[:-2], b.shape[:-2]
    if batch_a and batch_b and batch_a != batch_b:
        raise ShapeError("batch extents differ in matmul",
                         context={'left': a.shape, 'right': b.shape})
    return _record('matmul', np.matmul(a.data, b.data), (a, b))


def _unbatch(grad, ndim):
    while grad.ndim > ndim:
        grad = grad.sum(axis=0)
    return grad


def _matmul_rule(node, grad):
    a, b = node.inputs
    grad_a = np.matmul(grad, np.swapaxes(b.data, -1, -2))
    grad_b = np.matmul(np.swapaxes(a.data, -1, -2), grad)
    return _unbatch(grad_a, a.ndim), _unbatch(grad_b, b.ndim)


### Reductions

def _normalize_axis(axis, ndim):
    if axis is None or axis == 'all':
        return None
    if not isinstance(axis, (int, np.integer)) or not -ndim <= axis < ndim:
        raise ShapeError("invalid axis %r for a %d-d tensor" % (axis, ndim))
    return int(axis) % ndim


def reduce(kind, a, axis='all'):
    """Sums, averages or takes the maximum over one axis, or over all of
    them when axis is 'all'.  The reduced axis is dropped.  The maximum
    routes its gradient to the first argmax.
    """
    if kind not in REDUCE_KINDS:
        raise ValueError("unknown reduction %r" % kind)
    ax = _normalize_axis(axis, a.ndim)
    if kind == 'sum':
        data = np.sum(a.data, axis=ax)
    elif kind == 'mean':
        data = np.mean(a.data, axis=ax)
    else:
        data = np.max(a.data, axis=ax)
    return _record(kind, np.asarray(data, dtype=np.float64), (a,), ctx=ax)


def reduce_sum(a, axis='all'):
    return reduce('sum', a, axis)


def reduce_mean(a, axis='all'):
    return reduce('mean', a, axis)


def reduce_max(a, axis='all'):
    return reduce('max', a, axis)


def _spread(grad, shape, axis):
    if axis is None:
        return np.full(shape, float(grad))
    return np.broadcast_to(np.expand_dims(grad, axis), shape).copy()


def _sum_rule(node, grad):
    a = node.inputs[0]
    return (_spread(grad, a.shape, node.ctx),)


def _mean_rule(node, grad):
    a = node.inputs[0]
    count = a.size if node.ctx is None else a.shape[node.ctx]
    return (_spread(grad, a.shape, node.ctx) / count,)


def _max_rule(node, grad):
    a = node.inputs[0]
    axis = node.ctx
    out = np.zeros(a.shape)
    if axis is None:
        out.reshape(-1)[int(np.argmax(a.data))] = float(grad)
        return (out,)
    index = np.expand_dims(np.argmax(a.data, axis=axis), axis)
    np.put_along_axis(out, index, np.expand_dims(grad, axis), axis=axis)
    return (out,)


### Shape operations

def reshape(a, shape):
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape)) != a.size:
        raise ShapeError("cannot reshape", context={'from': a.shape, 'to': shape})
    return _record('reshape', a.data.reshape(shape), (a,))


def transpose(a):
    """Swaps the last two axes"""
    if a.ndim < 2:
        raise ShapeError("transpose needs a tensor of rank 2 or more")
    return _record('transpose', np.ascontiguousarray(np.swapaxes(a.data, -1, -2)), (a,))


def concat(tensors, axis=0):
    """Concatenates tensors along an existing axis"""
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat of nothing")
    first = tensors[0]
    ax = _normalize_axis(axis, first.ndim)
    for t in tensors[1:]:
        same_rank = t.ndim == first.ndim
        if not same_rank or any(t.shape[i] != first.shape[i]
                                for i in range(first.ndim) if i != ax):
            raise ShapeError("incompatible shapes for concat",
                             context={'first': first.shape, 'other': t.shape,
                                      'axis': ax})
    data = np.concatenate([t.data for t in tensors], axis=ax)
    sizes = [t.shape[ax] for t in tensors]
    return _record('concat', data, tuple(tensors), ctx=(ax, sizes))


def slice_axis(a, axis, start, stop):
    """Takes the half-open range [start, stop) along one axis"""
    ax = _normalize_axis(axis, a.ndim)
    extent = a.shape[ax]
    if not 0 <= start < stop <= extent:
        raise ShapeError("slice out of range",
                         context={'axis': ax, 'start': start, 'stop': stop,
                                  'extent': extent})
    index = [slice(None)] * a.ndim
    index[ax] = slice(start, stop)
    index = tuple(index)
    return _record('slice', np.ascontiguousarray(a.data[index]), (a,), ctx=index)


def stack(tensors, axis=0):
    """Stacks equally shaped tensors along a new axis"""
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("stack of nothing")
    for t in tensors[1:]:
        if t.shape != tensors[0].shape:
            raise ShapeError("incompatible shapes for stack",
                             context={'first': tensors[0].shape, 'other': t.shape})
    ax = _normalize_axis(axis, tensors[0].ndim + 1)
    return _record('stack', np.stack([t.data for t in tensors], axis=ax),
                   tuple(tensors), ctx=ax)


def shape_op(kind, *args, **kwargs):
    """Dispatches to one of the rearranging operations by name"""
    operations = {
        'reshape': reshape,
        'transpose': transpose,
        'concat': concat,
        'slice': slice_axis,
        'stack': stack,
    }
    return operations[kind](*args, **kwargs)


def _reshape_rule(node, grad):
    return (grad.reshape(node.inputs[0].shape),)


def _transpose_rule(node, grad):
    return (np.swapaxes(grad, -1, -2),)


def _concat_rule(node, grad):
    axis, sizes = node.ctx
    cuts = np.cumsum(sizes)[:-1]
    return tuple(np.split(grad, cuts, axis=axis))


def _slice_rule(node, grad):
    out = np.zeros(node.inputs[0].shape)
    out[node.ctx] = grad
    return (out,)


def _stack_rule(node, grad):
    axis = node.ctx
    return tuple(np.take(grad, i, axis=axis) for i in range(len(node.inputs)))


### Softmax and layer normalization

def softmax(a, axis=-1):
    """Softmax along one axis, computed with the maximum subtracted"""
    nan = np.isnan(a.data)
    if np.any(nan):
        raise DomainError("softmax of NaN", index=_first_index(nan),
                          context={'op': 'softmax'})
    ax = _normalize_axis(axis, a.ndim)
    shifted = a.data - np.max(a.data, axis=ax, keepdims=True)
    e = np.exp(shifted)
    return _record('softmax', e / np.sum(e, axis=ax, keepdims=True), (a,), ctx=ax)


def _softmax_rule(node, grad):
    y = node.output.data
    axis = node.ctx
    return (y * (grad - np.sum(grad * y, axis=axis, keepdims=True)),)


def layer_norm(a, gain, bias, eps=1e-5):
    """Normalizes over the last axis and applies a per-feature gain and
    bias.

    Args:
        a    -- tensor of shape [..., D]
        gain -- tensor of shape [D]
        bias -- tensor of shape [D]

    Keyword Args:
        eps -- variance regularizer, must be positive
    """
    if eps <= 0:
        raise DomainError("layer_norm eps must be positive", index=0)
    width = a.shape[-1]
    if gain.shape != (width,) or bias.shape != (width,):
        raise ShapeError("layer_norm gain/bias must match the last axis",
                         context={'input': a.shape, 'gain': gain.shape,
                                  'bias': bias.shape})
    x = a.data
    centered = x - np.mean(x, axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(np.mean(centered * centered, axis=-1, keepdims=True) + eps)
    normed = centered * inv_std
    return _record('layer_norm', normed * gain.data + bias.data, (a, gain, bias),
                   ctx=(normed, inv_std))


def _layer_norm_rule(node, grad):
    a, gain, bias = node.inputs
    normed, inv_std = node.ctx
    grad_normed = grad * gain.data
    grad_a = inv_std * (grad_normed
                        - np.mean(grad_normed, axis=-1, keepdims=True)
                        - normed * np.mean(grad_normed * normed, axis=-1, keepdims=True))
    lead = tuple(range(grad.ndim - 1))
    return (grad_a, np.sum(grad * normed, axis=lead), np.sum(grad, axis=lead))


BACKWARD_RULES = {
    'neg': _unary_rule(lambda x, y: -1.0),
    'exp': _unary_rule(lambda x, y: y),
    'ln': _unary_rule(lambda x, y: 1.0 / x),
    'tanh': _unary_rule(lambda x, y: 1.0 - y * y),
    'relu': _unary_rule(lambda x, y: (x > 0).astype(np.float64)),
    'gelu': _unary_rule(lambda x, y: _gelu_grad(x)),
    'abs': _unary_rule(lambda x, y: np.sign(x)),
    'square': _unary_rule(lambda x, y: 2.0 * x),
    'sqrt': _unary_rule(lambda x, y: 0.5 / y),
    'sin': _unary_rule(lambda x, y: np.cos(x)),
    'cos': _unary_rule(lambda x, y: -np.sin(x)),
    'add': _add_rule,
    'sub': _sub_rule,
    'mul': _mul_rule,
    'div': _div_rule,
    'matmul': _matmul_rule,
    'sum': _sum_rule,
    'mean': _mean_rule,
    'max': _max_rule,
    'reshape': _reshape_rule,
    'transpose': _transpose_rule,
    'concat': _concat_rule,
    'slice': _slice_rule,
    'stack': _stack_rule,
    'softmax': _softmax_rule,
    'layer_norm': _layer_norm_rule,
}


### Backpropagation

def backward(loss):
    """Populates `grad` on every leaf tensor that requires one, by a single
    reverse sweep over the calling thread's graph.  Gradients add up across
    fan-out and across repeated calls; the graph is cleared afterwards.

    Args:
        loss -- a tensor holding exactly one value
    """
    if loss.size != 1:
        raise GraphError("backward needs a scalar loss",
                         context={'shape': loss.shape})
    graph = current_graph()
    seed = np.ones(loss.shape)
    if loss.node is None:
        if loss.requires_grad:
            loss.grad = seed if loss.grad is None else loss.grad + seed
        graph.clear()
        return

    pending = {id(loss): seed}
    try:
        for node in reversed(graph.nodes):
            grad = pending.pop(id(node.output), None)
            if grad is None:
                continue
            input_grads = BACKWARD_RULES[node.kind](node, grad)
            for tensor, tensor_grad in zip(node.inputs, input_grads):
                if tensor_grad is None or not tensor.requires_grad:
                    continue
                if tensor.node is None:
                    if tensor.grad is None:
                        tensor.grad = np.array(tensor_grad, dtype=np.float64)
                    else:
                        tensor.grad = tensor.grad + tensor_grad
                else:
                    key = id(tensor)
                    if key in pending:
                        pending[key] = pending[key] + tensor_grad
                    else:
                        pending[key] = tensor_grad
    finally:
        graph.clear()


### Finite difference oracle

def relative_error(analytic, numeric):
    """|analytic - numeric| / max(1, |analytic|), elementwise"""
    analytic = np.asarray(analytic, dtype=np.float64)
    return np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))


def finite_diff_check(f, x, eps=1e-5, indices=None):
    """Compares the gradient backpropagation gives for f at x with central
    differences.

    Args:
        f -- a deterministic function taking x and returning a scalar tensor
        x -- a leaf tensor with requires_grad set

    Keyword Args:
        eps     -- the finite difference step
        indices -- optional iterable of flat coordinates to probe; all of
                   them when None

    Returns:
        The maximum over probed coordinates of
        |analytic - central difference| / max(1, |analytic|)
    """
    x.grad = None
    reset_graph()
    out = f(x)
    backward(out)
    analytic = np.zeros(x.size) if x.grad is None else x.grad.reshape(-1).copy()
    x.grad = None

    flat = x.data.reshape(-1)
    coords = range(x.size) if indices is None else indices
    worst = 0.0
    with no_grad():
        for i in coords:
            original = flat[i]
            flat[i] = original + eps
            plus = f(x).item()
            flat[i] = original - eps
            minus = f(x).item()
            flat[i] = original
            numeric = (plus - minus) / (2.0 * eps)
            worst = max(worst, float(relative_error(analytic[i], numeric)))
    return worst


def finite_diff_check_params(loss_fn, params, n_samples=20, seed=0, eps=1e-5):
    """End-to-end gradient check over a random sample of parameter
    coordinates.

    Args:
        loss_fn -- a deterministic, argument-less function returning a
                   scalar tensor built from `params`
        params  -- a mapping of names to leaf tensors

    Keyword Args:
        n_samples -- how many (parameter, coordinate) pairs to probe
        seed      -- seed of the coordinate sample
        eps       -- the finite difference step

    Returns:
        (worst relative error, list of (name, flat index, error) triples)
    """
    names = [n for n in sorted(params) if params[n].requires_grad]
    sizes = np.array([params[n].size for n in names])
    total = int(sizes.sum())
    rng = np.random.default_rng(seed)
    picks = np.sort(rng.choice(total, size=min(n_samples, total), replace=False))
    bounds = np.cumsum(sizes)

    for name in names:
        params[name].grad = None
    reset_graph()
    backward(loss_fn())
    analytic = {}
    for name in names:
        g = params[name].grad
        analytic[name] = np.zeros(params[name].size) if g is None else g.reshape(-1).copy()
        params[name].grad = None

    details = []
    with no_grad():
        for pick in picks:
            which = int(np.searchsorted(bounds, pick, side='right'))
            name = names[which]
            index = int(pick - (bounds[which] - sizes[which]))
            flat = params[name].data.reshape(-1)
            original = flat[index]
            flat[index] = original + eps
            plus = loss_fn().item()
            flat[index] = original - eps
            minus = loss_fn().item()
            flat[index] = original
            numeric = (plus - minus) / (2.0 * eps)
            details.append((name, index,
                            float(relative_error(analytic[name][index], numeric))))
    worst = max([d[2] for d in details] or [0.0])
    return worst, details

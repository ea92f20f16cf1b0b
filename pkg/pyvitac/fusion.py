"""Integration of the visual and tactile token streams, either by plain
concatenation or by attention in both directions between the two."""

from pyvitac import tensor as T
from pyvitac.errors import ShapeError
from pyvitac.layers import MultiHeadAttention


class ModalityTokens(object):
    """Projected visual and tactile tokens sharing one model width.  Tokens
    run along the second to last axis, so both [L, D] and [B, L, D] work.
    """

    def __init__(self, visual, tactile):
        if visual.ndim != tactile.ndim:
            raise ShapeError("visual and tactile tokens differ in rank",
                             context={'visual': visual.shape, 'tactile': tactile.shape})
        if visual.shape[-1] != tactile.shape[-1]:
            raise ShapeError("visual and tactile tokens differ in width",
                             context={'visual': visual.shape, 'tactile': tactile.shape})
        if visual.shape[:-2] != tactile.shape[:-2]:
            raise ShapeError("visual and tactile batches differ",
                             context={'visual': visual.shape, 'tactile': tactile.shape})
        if visual.shape[-2] < 1 or tactile.shape[-2] < 1:
            raise ShapeError("each modality needs at least one token")
        self.visual = visual
        self.tactile = tactile

    @property
    def visual_count(self):
        return self.visual.shape[-2]

    @property
    def tactile_count(self):
        return self.tactile.shape[-2]


class CrossModalFusion(object):
    """The weights of one fusion site: one attention layer where visual
    tokens query the tactile stream, and one where tactile tokens query the
    visual stream"""

    def __init__(self, params, name, cfg):
        self.visual_queries = MultiHeadAttention(params, name + '.visual_queries', cfg)
        self.tactile_queries = MultiHeadAttention(params, name + '.tactile_queries', cfg)

    def __call__(self, tokens):
        return cross_modal_fuse(tokens, self)


def cross_modal_fuse(tokens, fusion):
    """Attends each modality to the other and concatenates the results.

    Args:
        tokens -- a ModalityTokens instance
        fusion -- the CrossModalFusion weights to use

    Returns:
        Tensor [..., Lv + Lt, D]: the visual-query rows first, then the
        tactile-query rows
    """
    attended_visual = fusion.visual_queries(tokens.visual, tokens.tactile)
    attended_tactile = fusion.tactile_queries(tokens.tactile, tokens.visual)
    return T.concat([attended_visual, attended_tactile], axis=-2)


def naive_token_fuse(tokens):
    """Stacks the visual tokens on top of the tactile tokens"""
    return T.concat([tokens.visual, tokens.tactile], axis=-2)
